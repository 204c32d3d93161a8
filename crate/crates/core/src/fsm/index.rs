use std::fmt;

use rayon::prelude::*;

use super::{Dfa, FsmError, StateId, TokenId, Vocabulary};

/// Per-state table of the tokens that can be consumed whole from that state,
/// with their successor states.
///
/// A token is present for state `s` iff every one of its characters has a
/// transition along the walk from `s`. Since the DFA is pruned, the walk then
/// ends in a live state. End-of-sequence is permitted exactly in accepting
/// states.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenIndex {
    /// `entries[offsets[s]..offsets[s + 1]]` belong to state `s`, sorted by token.
    offsets: Vec<usize>,
    entries: Vec<(TokenId, StateId)>,
    eos: Vec<bool>,
    eos_id: TokenId,
    vocab_len: usize,
    start: StateId,
}

/// View of the allowed continuations of one state.
#[derive(Clone, Copy, Debug)]
pub struct AllowedTokens<'a> {
    entries: &'a [(TokenId, StateId)],
    eos: bool,
}

impl<'a> AllowedTokens<'a> {
    pub fn eos_allowed(&self) -> bool {
        self.eos
    }

    /// Number of non-eos tokens allowed.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && !self.eos
    }

    pub fn entries(&self) -> &'a [(TokenId, StateId)] {
        self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> + 'a {
        self.entries.iter().map(|e| e.0)
    }

    pub fn successor(&self, token: TokenId) -> Option<StateId> {
        self.entries
            .binary_search_by_key(&token, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.successor(token).is_some()
    }
}

impl TokenIndex {
    /// Walks every token from every state. The token trie shares prefixes, and
    /// a subtree is abandoned as soon as the walk leaves the automaton.
    pub fn build(dfa: &Dfa, vocab: &Vocabulary) -> Self {
        let trie = vocab.trie();
        let per_state: Vec<Vec<(TokenId, StateId)>> = (0..dfa.num_states() as u32)
            .into_par_iter()
            .map(|s| {
                let mut found = Vec::new();
                let mut stack = vec![(0u32, StateId(s))];
                while let Some((node, state)) = stack.pop() {
                    for &(c, child) in &trie.nodes[node as usize].children {
                        if let Some(next) = dfa.next(state, c) {
                            for &tok in &trie.nodes[child as usize].tokens {
                                found.push((tok, next));
                            }
                            stack.push((child, next));
                        }
                    }
                }
                found.sort_unstable();
                found
            })
            .collect();

        let mut offsets = Vec::with_capacity(per_state.len() + 1);
        let mut entries = Vec::with_capacity(per_state.iter().map(Vec::len).sum());
        offsets.push(0);
        for list in per_state {
            entries.extend(list);
            offsets.push(entries.len());
        }
        let eos = (0..dfa.num_states() as u32)
            .map(|s| dfa.is_accepting(StateId(s)))
            .collect();
        TokenIndex {
            offsets,
            entries,
            eos,
            eos_id: vocab.eos_id(),
            vocab_len: vocab.len(),
            start: dfa.start(),
        }
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.eos.len()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    /// Total number of (state, token) entries, excluding eos flags.
    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_accepting(&self, state: StateId) -> bool {
        self.eos.get(state.index()).copied().unwrap_or(false)
    }

    /// Direct lookup of the precomputed set for `state`.
    pub fn allowed_tokens(&self, state: StateId) -> Result<AllowedTokens<'_>, FsmError> {
        let s = state.index();
        if s >= self.eos.len() {
            return Err(FsmError::UnknownState(state));
        }
        Ok(AllowedTokens {
            entries: &self.entries[self.offsets[s]..self.offsets[s + 1]],
            eos: self.eos[s],
        })
    }

    /// Successor of `state` after consuming `token`. Eos is not a step.
    pub fn step(&self, state: StateId, token: TokenId) -> Result<StateId, FsmError> {
        self.allowed_tokens(state)?
            .successor(token)
            .ok_or(FsmError::DisallowedToken { state, token })
    }
}

impl fmt::Display for TokenIndex {
    /// One line per state: `state <s>: <tok>-><next> ...; eos=<bool>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in 0..self.num_states() {
            write!(f, "state {s}:")?;
            for (tok, next) in &self.entries[self.offsets[s]..self.offsets[s + 1]] {
                write!(f, " {tok}->{next}")?;
            }
            writeln!(f, "; eos={}", self.eos[s])?;
        }
        Ok(())
    }
}
