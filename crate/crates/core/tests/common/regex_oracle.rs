//! Random patterns with a backtracking reference matcher, and a brute-force
//! token table to hold the index against.

use std::collections::BTreeSet;

use ambres_core::fsm::{Dfa, StateId, TokenId, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LETTERS: [char; 3] = ['a', 'b', 'c'];

#[derive(Clone, Debug)]
pub enum Re {
    Lit(char),
    Class(Vec<char>, bool),
    Any,
    Concat(Vec<Re>),
    Alt(Vec<Re>),
    Repeat(Box<Re>, u32, Option<u32>),
}

impl Re {
    pub fn to_pattern(&self) -> String {
        match self {
            Re::Lit(c) => c.to_string(),
            Re::Class(set, negated) => {
                let body: String = set.iter().collect();
                if *negated {
                    format!("[^{body}]")
                } else {
                    format!("[{body}]")
                }
            }
            Re::Any => ".".into(),
            Re::Concat(parts) => parts
                .iter()
                .map(|p| match p {
                    Re::Alt(_) => format!("(?:{})", p.to_pattern()),
                    _ => p.to_pattern(),
                })
                .collect(),
            Re::Alt(parts) => parts
                .iter()
                .map(Re::to_pattern)
                .collect::<Vec<_>>()
                .join("|"),
            Re::Repeat(inner, min, max) => {
                let atom = match **inner {
                    Re::Lit(_) | Re::Class(..) | Re::Any => inner.to_pattern(),
                    _ => format!("(?:{})", inner.to_pattern()),
                };
                let q = match (min, max) {
                    (0, None) => "*".to_string(),
                    (1, None) => "+".to_string(),
                    (0, Some(1)) => "?".to_string(),
                    (m, None) => format!("{{{m},}}"),
                    (m, Some(n)) if m == n => format!("{{{m}}}"),
                    (m, Some(n)) => format!("{{{m},{n}}}"),
                };
                atom + &q
            }
        }
    }

    fn matches_char(&self, c: char) -> bool {
        match self {
            Re::Lit(l) => *l == c,
            Re::Class(set, negated) => set.contains(&c) != *negated,
            Re::Any => (' '..='~').contains(&c),
            _ => unreachable!(),
        }
    }

    /// Every end position of a match starting at `i`.
    fn ends(&self, s: &[char], i: usize) -> BTreeSet<usize> {
        match self {
            Re::Lit(_) | Re::Class(..) | Re::Any => {
                if i < s.len() && self.matches_char(s[i]) {
                    BTreeSet::from([i + 1])
                } else {
                    BTreeSet::new()
                }
            }
            Re::Concat(parts) => {
                let mut cur = BTreeSet::from([i]);
                for p in parts {
                    cur = cur.iter().flat_map(|&j| p.ends(s, j)).collect();
                }
                cur
            }
            Re::Alt(parts) => parts.iter().flat_map(|p| p.ends(s, i)).collect(),
            Re::Repeat(inner, min, max) => {
                let step = |from: &BTreeSet<usize>| -> BTreeSet<usize> {
                    from.iter().flat_map(|&j| inner.ends(s, j)).collect()
                };
                let mut cur = BTreeSet::from([i]);
                for _ in 0..*min {
                    cur = step(&cur);
                }
                let mut result = cur.clone();
                match max {
                    Some(n) => {
                        for _ in *min..*n {
                            cur = step(&cur);
                            if cur.is_empty() {
                                break;
                            }
                            result.extend(cur.iter().copied());
                        }
                    }
                    None => loop {
                        let fresh: BTreeSet<usize> =
                            step(&cur).difference(&result).copied().collect();
                        if fresh.is_empty() {
                            break;
                        }
                        result.extend(fresh.iter().copied());
                        cur = fresh;
                    },
                }
                result
            }
        }
    }

    pub fn is_match(&self, text: &str) -> bool {
        let s: Vec<char> = text.chars().collect();
        self.ends(&s, 0).contains(&s.len())
    }
}

fn random_class(rng: &mut ChaCha8Rng) -> Re {
    let mut set: Vec<char> = LETTERS
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.5))
        .collect();
    if set.is_empty() {
        set.push(LETTERS[rng.random_range(0..3)]);
    }
    Re::Class(set, rng.random_bool(0.3))
}

pub fn random_re(rng: &mut ChaCha8Rng, depth: u32) -> Re {
    let leaf = depth == 0 || rng.random_bool(0.3);
    if leaf {
        return match rng.random_range(0..6) {
            0..=3 => Re::Lit(LETTERS[rng.random_range(0..3)]),
            4 => random_class(rng),
            _ => Re::Any,
        };
    }
    match rng.random_range(0..3) {
        0 => Re::Concat(
            (0..rng.random_range(2..=3))
                .map(|_| random_re(rng, depth - 1))
                .collect(),
        ),
        1 => Re::Alt(
            (0..rng.random_range(2..=3))
                .map(|_| random_re(rng, depth - 1))
                .collect(),
        ),
        _ => {
            let (min, max) = match rng.random_range(0..6) {
                0 => (0, None),
                1 => (1, None),
                2 => (0, Some(1)),
                3 => (rng.random_range(0..=2), None),
                4 => {
                    let m = rng.random_range(1..=3);
                    (m, Some(m))
                }
                _ => {
                    let m = rng.random_range(0..=2);
                    (m, Some(m + rng.random_range(1..=2)))
                }
            };
            Re::Repeat(Box::new(random_re(rng, depth - 1)), min, max)
        }
    }
}

pub fn random_pattern(seed: u64) -> Re {
    random_re(&mut ChaCha8Rng::seed_from_u64(seed), 4)
}

/// Visits every string over `alphabet` up to `max_len`, with the DFA state
/// reached (`None` once dead).
pub fn for_each_string(
    dfa: &Dfa,
    alphabet: &[char],
    max_len: usize,
    mut f: impl FnMut(&str, Option<StateId>),
) {
    let mut stack = vec![(String::new(), Some(dfa.start()))];
    while let Some((text, state)) = stack.pop() {
        f(&text, state);
        if text.chars().count() < max_len {
            for &c in alphabet {
                let next = state.and_then(|s| dfa.next(s, c));
                let mut t = text.clone();
                t.push(c);
                stack.push((t, next));
            }
        }
    }
}

/// Vocabulary of up to `max_size` distinct tokens over `abcd`, plus eos.
pub fn random_vocab(rng: &mut ChaCha8Rng, max_size: usize) -> Vocabulary {
    let target = rng.random_range(1..=max_size - 1);
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < target {
        let len = rng.random_range(1..=4);
        let t: String = (0..len)
            .map(|_| ['a', 'b', 'c', 'd'][rng.random_range(0..4)])
            .collect();
        if !tokens.contains(&t) {
            tokens.push(t);
        }
    }
    Vocabulary::with_eos(tokens).unwrap()
}

/// For each state: the `(token, successor)` pairs reached by walking each
/// token character by character, and whether eos is allowed.
pub fn brute_force_table(dfa: &Dfa, vocab: &Vocabulary) -> Vec<(Vec<(TokenId, StateId)>, bool)> {
    (0..dfa.num_states() as u32)
        .map(|s| {
            let entries = vocab
                .tokens()
                .iter()
                .enumerate()
                .filter(|(id, _)| TokenId(*id as u32) != vocab.eos_id())
                .filter_map(|(id, tok)| {
                    let mut state = StateId(s);
                    for c in tok.chars() {
                        state = dfa.next(state, c)?;
                    }
                    Some((TokenId(id as u32), state))
                })
                .collect();
            (entries, dfa.is_accepting(StateId(s)))
        })
        .collect()
}
