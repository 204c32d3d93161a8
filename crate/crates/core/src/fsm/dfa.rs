use std::collections::{HashMap, VecDeque};

use super::nfa::Nfa;
use super::regex::{self, Ast};
use super::{Alphabet, FsmError, StateId};

/// Cap on the number of states subset construction may create.
pub const MAX_DFA_STATES: usize = 100_000;

const DEAD: u32 = u32::MAX;
const NO_SYMBOL: u8 = u8::MAX;

/// Deterministic automaton over an ASCII [`Alphabet`].
///
/// Missing transitions lead to an implicit dead state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dfa {
    alphabet: Alphabet,
    symbols: Vec<char>,
    symbol_index: [u8; 128],
    /// Row-major `num_states x symbols.len()`, `DEAD` for no transition.
    table: Vec<u32>,
    accepting: Vec<bool>,
    start: StateId,
}

impl Dfa {
    fn empty(alphabet: Alphabet) -> Self {
        let symbols: Vec<char> = alphabet.chars().collect();
        let mut symbol_index = [NO_SYMBOL; 128];
        for (i, c) in symbols.iter().enumerate() {
            symbol_index[*c as usize] = i as u8;
        }
        Dfa {
            alphabet,
            symbols,
            symbol_index,
            table: Vec::new(),
            accepting: Vec::new(),
            start: StateId(0),
        }
    }

    fn add_state(&mut self, accepting: bool) -> StateId {
        self.table
            .extend(std::iter::repeat_n(DEAD, self.symbols.len()));
        self.accepting.push(accepting);
        StateId(self.accepting.len() as u32 - 1)
    }

    /// Builds a DFA from explicit parts. Every transition character must be in
    /// the alphabet and appear at most once per state.
    pub fn from_parts(
        alphabet: Alphabet,
        start: StateId,
        accepting: Vec<bool>,
        transitions: Vec<Vec<(char, StateId)>>,
    ) -> Result<Self, FsmError> {
        if accepting.len() != transitions.len() {
            return Err(FsmError::InvalidDfa(
                "accepting and transition tables differ in length".into(),
            ));
        }
        if accepting.is_empty() || start.index() >= accepting.len() {
            return Err(FsmError::InvalidDfa("start state out of range".into()));
        }
        let mut dfa = Dfa::empty(alphabet);
        for &acc in &accepting {
            dfa.add_state(acc);
        }
        dfa.start = start;
        let width = dfa.symbols.len();
        for (s, edges) in transitions.iter().enumerate() {
            for &(c, t) in edges {
                let sym = dfa
                    .symbol(c)
                    .ok_or_else(|| FsmError::InvalidDfa(format!("{c:?} not in alphabet")))?;
                if t.index() >= accepting.len() {
                    return Err(FsmError::InvalidDfa(format!("target {t} out of range")));
                }
                let slot = &mut dfa.table[s * width + sym];
                if *slot != DEAD {
                    return Err(FsmError::InvalidDfa(format!(
                        "state {s} has two transitions on {c:?}"
                    )));
                }
                *slot = t.0;
            }
        }
        Ok(dfa)
    }

    fn symbol(&self, c: char) -> Option<usize> {
        let code = c as usize;
        if code >= 128 {
            return None;
        }
        match self.symbol_index[code] {
            NO_SYMBOL => None,
            i => Some(i as usize),
        }
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn is_accepting(&self, state: StateId) -> bool {
        self.accepting.get(state.index()).copied().unwrap_or(false)
    }

    pub fn next(&self, state: StateId, c: char) -> Option<StateId> {
        let sym = self.symbol(c)?;
        match *self.table.get(state.index() * self.symbols.len() + sym)? {
            DEAD => None,
            t => Some(StateId(t)),
        }
    }

    /// Follows every character of `text` from `state`.
    pub fn walk(&self, state: StateId, text: &str) -> Option<StateId> {
        text.chars().try_fold(state, |s, c| self.next(s, c))
    }

    pub fn accepts(&self, text: &str) -> bool {
        self.walk(self.start, text)
            .is_some_and(|s| self.is_accepting(s))
    }

    /// Outgoing transitions of `state` in ascending character order.
    pub fn transitions(&self, state: StateId) -> impl Iterator<Item = (char, StateId)> + '_ {
        let width = self.symbols.len();
        let row = &self.table[state.index() * width..(state.index() + 1) * width];
        row.iter()
            .zip(&self.symbols)
            .filter(|(t, _)| **t != DEAD)
            .map(|(t, c)| (*c, StateId(*t)))
    }

    pub fn transition_count(&self) -> usize {
        self.table.iter().filter(|t| **t != DEAD).count()
    }
}

/// Parses `pattern` and compiles it over printable ASCII.
pub fn compile_regex(pattern: &str) -> Result<Dfa, FsmError> {
    compile_regex_with(pattern, Alphabet::printable_ascii())
}

pub fn compile_regex_with(pattern: &str, alphabet: Alphabet) -> Result<Dfa, FsmError> {
    let ast = regex::parse(pattern)?;
    let dfa = determinize(&ast, alphabet)?;
    prune_dead_states(&dfa)
}

/// Thompson NFA followed by subset construction, without pruning.
///
/// DFA states are identified by the NFA states in the closure that carry a
/// character edge plus whether the closure contains the accepting state, so
/// closures that differ only in epsilon-only states collapse.
pub fn determinize(ast: &Ast, alphabet: Alphabet) -> Result<Dfa, FsmError> {
    let nfa = Nfa::from_ast(ast, &alphabet);
    let mut dfa = Dfa::empty(alphabet);
    let width = dfa.symbols.len();
    let mut seen = vec![false; nfa.states.len()];
    let mut closure = Vec::new();

    let key_of = |closure: &[usize]| -> (Vec<usize>, bool) {
        let important = closure
            .iter()
            .copied()
            .filter(|&s| nfa.states[s].edge.is_some())
            .collect();
        (important, closure.contains(&nfa.accept))
    };

    nfa.closure(&[nfa.start], &mut closure, &mut seen);
    let start_key = key_of(&closure);
    let mut ids: HashMap<(Vec<usize>, bool), u32> = HashMap::new();
    let mut queue: VecDeque<(Vec<usize>, bool)> = VecDeque::new();
    dfa.add_state(start_key.1);
    ids.insert(start_key.clone(), 0);
    queue.push_back(start_key);

    let symbols = dfa.symbols.clone();
    let mut targets = Vec::new();
    while let Some(key) = queue.pop_front() {
        let from = ids[&key] as usize;
        for (sym, &c) in symbols.iter().enumerate() {
            let bit = 1u128 << (c as u32);
            targets.clear();
            for &s in &key.0 {
                if let Some((set, t)) = nfa.states[s].edge {
                    if set & bit != 0 {
                        targets.push(t);
                    }
                }
            }
            if targets.is_empty() {
                continue;
            }
            nfa.closure(&targets, &mut closure, &mut seen);
            let next_key = key_of(&closure);
            if next_key.0.is_empty() && !next_key.1 {
                continue;
            }
            let to = match ids.get(&next_key) {
                Some(&id) => id,
                None => {
                    if dfa.num_states() >= MAX_DFA_STATES {
                        return Err(FsmError::StateBudgetExceeded {
                            limit: MAX_DFA_STATES,
                        });
                    }
                    let id = dfa.add_state(next_key.1).0;
                    ids.insert(next_key.clone(), id);
                    queue.push_back(next_key);
                    id
                }
            };
            dfa.table[from * width + sym] = to;
        }
    }
    Ok(dfa)
}

/// Removes states that are unreachable from the start or cannot reach an
/// accepting state. Surviving states are renumbered in breadth-first order
/// from the start.
pub fn prune_dead_states(dfa: &Dfa) -> Result<Dfa, FsmError> {
    let n = dfa.num_states();
    let width = dfa.symbols.len();

    let mut reverse: Vec<Vec<u32>> = vec![Vec::new(); n];
    for s in 0..n {
        for &t in &dfa.table[s * width..(s + 1) * width] {
            if t != DEAD {
                reverse[t as usize].push(s as u32);
            }
        }
    }
    let mut live = dfa.accepting.clone();
    let mut stack: Vec<u32> = (0..n as u32).filter(|&s| live[s as usize]).collect();
    while let Some(s) = stack.pop() {
        for &p in &reverse[s as usize] {
            if !live[p as usize] {
                live[p as usize] = true;
                stack.push(p);
            }
        }
    }
    if !live[dfa.start.index()] {
        return Err(FsmError::EmptyLanguage);
    }

    let mut new_id = vec![DEAD; n];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([dfa.start.0]);
    new_id[dfa.start.index()] = 0;
    while let Some(s) = queue.pop_front() {
        order.push(s);
        for &t in &dfa.table[s as usize * width..(s as usize + 1) * width] {
            if t != DEAD && live[t as usize] && new_id[t as usize] == DEAD {
                new_id[t as usize] = (order.len() + queue.len()) as u32;
                queue.push_back(t);
            }
        }
    }

    let mut out = Dfa::empty(dfa.alphabet);
    for &s in &order {
        out.add_state(dfa.accepting[s as usize]);
    }
    for (new, &old) in order.iter().enumerate() {
        for sym in 0..width {
            let t = dfa.table[old as usize * width + sym];
            if t != DEAD && new_id[t as usize] != DEAD {
                out.table[new * width + sym] = new_id[t as usize];
            }
        }
    }
    Ok(out)
}
