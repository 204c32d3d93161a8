//! Regular-expression automata and the per-state token index used for
//! constrained decoding.
//!
//! The pipeline is pattern text -> syntax tree -> Thompson NFA -> subset
//! construction -> pruned [`Dfa`]. A [`TokenIndex`] then records, for every
//! live state, which vocabulary tokens can be consumed whole and where they
//! land, so masking at decode time is a table lookup.

mod alphabet;
mod dfa;
mod index;
mod nfa;
pub mod regex;
mod vocab;

use std::fmt;

pub use alphabet::Alphabet;
pub use dfa::{
    compile_regex, compile_regex_with, determinize, prune_dead_states, Dfa, MAX_DFA_STATES,
};
pub use index::{AllowedTokens, TokenIndex};
pub use vocab::Vocabulary;

/// Dense id of a DFA state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense id of a vocabulary token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FsmError {
    #[error("regex parse error at offset {offset}: {message}")]
    RegexParse { offset: usize, message: String },
    #[error("subset construction exceeded {limit} states")]
    StateBudgetExceeded { limit: usize },
    #[error("the automaton accepts no string")]
    EmptyLanguage,
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("token {token} is not allowed in state {state}")]
    DisallowedToken { state: StateId, token: TokenId },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid automaton: {0}")]
    InvalidDfa(String),
}
