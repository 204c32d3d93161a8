//! Compiled automata against a backtracking reference matcher, and token
//! indices against a brute-force walk table.

mod common;

use ambres_core::fsm::{
    compile_regex, prune_dead_states, Alphabet, Dfa, FsmError, StateId, TokenId, TokenIndex,
};
use common::regex_oracle::{
    brute_force_table, for_each_string, random_pattern, random_vocab, LETTERS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_language(seed: u64, max_len: usize) {
    let re = random_pattern(seed);
    let pattern = re.to_pattern();
    match compile_regex(&pattern) {
        Ok(dfa) => for_each_string(&dfa, &LETTERS, max_len, |text, state| {
            let accepted = state.is_some_and(|s| dfa.is_accepting(s));
            assert_eq!(
                accepted,
                re.is_match(text),
                "pattern {pattern:?} on {text:?}"
            );
        }),
        Err(FsmError::EmptyLanguage) => {
            let dead = compile_regex("a").unwrap();
            for_each_string(&dead, &LETTERS, max_len, |text, _| {
                assert!(
                    !re.is_match(text),
                    "pattern {pattern:?} compiled empty but matches {text:?}"
                );
            })
        }
        Err(e) => panic!("pattern {pattern:?}: {e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn dfa_matches_reference(seed in any::<u64>()) {
        check_language(seed, 8);
    }

    #[test]
    fn index_equals_walk_table(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let re = random_pattern(rng.random());
        let Ok(dfa) = compile_regex(&re.to_pattern()) else { return Ok(()) };
        let vocab = random_vocab(&mut rng, 200);
        let index = TokenIndex::build(&dfa, &vocab);
        for (s, (entries, eos)) in brute_force_table(&dfa, &vocab).into_iter().enumerate() {
            let allowed = index.allowed_tokens(StateId(s as u32)).unwrap();
            prop_assert_eq!(allowed.entries(), entries.as_slice());
            prop_assert_eq!(allowed.eos_allowed(), eos);
        }
    }

    #[test]
    fn steps_compose(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let re = random_pattern(rng.random());
        let Ok(dfa) = compile_regex(&re.to_pattern()) else { return Ok(()) };
        let vocab = random_vocab(&mut rng, 60);
        let index = TokenIndex::build(&dfa, &vocab);
        let mut state = index.start();
        let mut text = String::new();
        for _ in 0..12 {
            let allowed = index.allowed_tokens(state).unwrap();
            if allowed.entries().is_empty() {
                break;
            }
            let (tok, next) = allowed.entries()[rng.random_range(0..allowed.len())];
            text.push_str(vocab.token(tok).unwrap());
            state = index.step(state, tok).unwrap();
            prop_assert_eq!(state, next);
            prop_assert_eq!(dfa.walk(dfa.start(), &text), Some(state));
        }
        let dead = vocab.tokens().iter().position(|t| dfa.walk(state, t).is_none() && !t.is_empty());
        if let Some(id) = dead {
            prop_assert!(index.step(state, TokenId(id as u32)).is_err());
        }
    }

    #[test]
    fn pruning_preserves_language(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 20;
        let alphabet = Alphabet::from_chars(LETTERS).unwrap();
        let accepting: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
        let transitions: Vec<Vec<(char, StateId)>> = (0..n)
            .map(|_| {
                let mut edges = Vec::new();
                for c in LETTERS {
                    if rng.random_bool(0.6) {
                        edges.push((c, StateId(rng.random_range(0..n as u32))));
                    }
                }
                edges
            })
            .collect();
        let raw = Dfa::from_parts(alphabet, StateId(0), accepting, transitions).unwrap();
        match prune_dead_states(&raw) {
            Ok(pruned) => {
                prop_assert!(pruned.num_states() <= raw.num_states());
                for_each_string(&raw, &LETTERS, 8, |text, _| {
                    assert_eq!(pruned.accepts(text), raw.accepts(text), "{text:?}");
                });
                // Every surviving state reaches acceptance.
                for s in 0..pruned.num_states() as u32 {
                    let mut seen = vec![false; pruned.num_states()];
                    let mut stack = vec![StateId(s)];
                    let mut live = false;
                    while let Some(q) = stack.pop() {
                        if std::mem::replace(&mut seen[q.index()], true) {
                            continue;
                        }
                        live |= pruned.is_accepting(q);
                        stack.extend(pruned.transitions(q).map(|(_, t)| t));
                    }
                    prop_assert!(live);
                }
            }
            Err(FsmError::EmptyLanguage) => {
                for_each_string(&raw, &LETTERS, 8, |text, _| assert!(!raw.accepts(text), "{text:?}"));
            }
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn fixed_seed_patterns_to_length_ten() {
    for seed in 0..10 {
        check_language(seed, 10);
    }
}
