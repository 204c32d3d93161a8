//! Schema-constrained decoding over pluggable token-scoring backends.
//!
//! At every step the backend scores the whole vocabulary, every token the
//! [`TokenIndex`] does not allow from the current state is masked to
//! negative infinity, and a token is selected greedily or by seeded
//! temperature sampling. End-of-sequence is only allowed in accepting
//! states, so a run that terminates on eos is a complete schema instance.

mod backend;
mod http;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use backend::{MockBackend, ScriptedBackend};
pub use http::{HttpBackend, DEFAULT_TIMEOUT_MS, TIMEOUT_ENV};

use crate::fsm::{Dfa, FsmError, StateId, TokenId, TokenIndex, Vocabulary};
use crate::scalar::Real;
use crate::schema::{compile_schema, RegexPattern, SchemaError, SchemaNode};

pub const DEFAULT_MAX_TOKENS: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("no token is allowed in state {0}")]
    NoAllowedToken(StateId),
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Fsm(#[from] FsmError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Image attached to a prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageRef {
    Path(PathBuf),
    Inline(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptContext {
    prompt_text: String,
    pub image_ref: Option<ImageRef>,
    pub metadata: BTreeMap<String, String>,
}

impl PromptContext {
    pub fn new(prompt_text: impl Into<String>) -> Result<Self, DecodeError> {
        let prompt_text = prompt_text.into();
        if prompt_text.is_empty() {
            return Err(DecodeError::InvalidArgument(
                "prompt text must be non-empty".into(),
            ));
        }
        Ok(PromptContext {
            prompt_text,
            image_ref: None,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_image(mut self, image: Option<ImageRef>) -> Self {
        self.image_ref = image;
        self
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn prompt_text(&self) -> &str {
        &self.prompt_text
    }
}

/// Produces next-token scores for the full vocabulary.
///
/// Implementations must be deterministic for a given prefix and context and
/// return exactly `vocab_len` finite scores.
pub trait TokenBackend<F: Real>: Send + Sync {
    fn score(&self, prefix: &[TokenId], ctx: &PromptContext) -> Result<Vec<F>, DecodeError>;
}

impl<F: Real, B: TokenBackend<F> + ?Sized> TokenBackend<F> for Box<B> {
    fn score(&self, prefix: &[TokenId], ctx: &PromptContext) -> Result<Vec<F>, DecodeError> {
        (**self).score(prefix, ctx)
    }
}

impl<F: Real, B: TokenBackend<F> + ?Sized> TokenBackend<F> for Arc<B> {
    fn score(&self, prefix: &[TokenId], ctx: &PromptContext) -> Result<Vec<F>, DecodeError> {
        (**self).score(prefix, ctx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingPolicy<F> {
    Greedy,
    Temperature { temperature: F, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Eos,
    MaxTokens,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeResult {
    pub text: String,
    pub token_ids: Vec<TokenId>,
    /// Number of backend calls made.
    pub steps: usize,
    pub terminated_by: Termination,
}

/// Sets every score outside `allowed` (and eos unless permitted) to −∞.
pub fn mask_scores<F: Real>(
    scores: &[F],
    index: &TokenIndex,
    state: StateId,
) -> Result<Vec<F>, DecodeError> {
    let allowed = index.allowed_tokens(state)?;
    let mut masked = vec![F::neg_infinity(); scores.len()];
    for id in allowed.ids() {
        masked[id.index()] = scores[id.index()];
    }
    if allowed.eos_allowed() {
        let eos = index.eos_id().index();
        masked[eos] = scores[eos];
    }
    Ok(masked)
}

/// Highest finite score; ties go to the lowest id.
fn argmax<F: Real>(scores: &[F]) -> Option<usize> {
    let mut best: Option<(usize, F)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == F::neg_infinity() {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

fn sample<F: Real>(scores: &[F], temperature: F, rng: &mut ChaCha8Rng) -> Option<usize> {
    let scaled: Vec<F> = scores
        .iter()
        .map(|&s| {
            if s == F::neg_infinity() {
                s
            } else {
                s / temperature
            }
        })
        .collect();
    let probs = crate::scalar::softmax(&scaled);
    let u = F::from_f64(rng.random::<f64>()).unwrap_or_else(F::zero);
    let mut acc = F::zero();
    let mut last = None;
    for (i, &p) in probs.iter().enumerate() {
        if p <= F::zero() {
            continue;
        }
        acc = acc + p;
        last = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    last
}

/// Runs one constrained decoding session.
pub fn decode<F: Real, B: TokenBackend<F> + ?Sized>(
    index: &TokenIndex,
    vocab: &Vocabulary,
    backend: &B,
    policy: SamplingPolicy<F>,
    max_tokens: usize,
    ctx: &PromptContext,
) -> Result<DecodeResult, DecodeError> {
    if max_tokens == 0 {
        return Err(DecodeError::InvalidArgument(
            "max_tokens must be at least 1".into(),
        ));
    }
    if index.vocab_len() != vocab.len() {
        return Err(DecodeError::InvalidArgument(
            "index was built for a different vocabulary".into(),
        ));
    }
    if let SamplingPolicy::Temperature { temperature, .. } = policy {
        if !(temperature > F::zero() && temperature.is_finite()) {
            return Err(DecodeError::InvalidArgument(
                "temperature must be positive and finite".into(),
            ));
        }
    }
    let mut rng = match policy {
        SamplingPolicy::Temperature { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        SamplingPolicy::Greedy => None,
    };
    let eos = index.eos_id();
    let mut state = index.start();
    let mut ids = Vec::new();
    let mut steps = 0;
    let mut terminated_by = Termination::MaxTokens;

    while steps < max_tokens {
        let allowed = index.allowed_tokens(state)?;
        if allowed.is_empty() {
            return Err(DecodeError::NoAllowedToken(state));
        }
        let scores = backend.score(&ids, ctx)?;
        steps += 1;
        if scores.len() != vocab.len() {
            return Err(DecodeError::ProtocolError(format!(
                "backend returned {} scores for a vocabulary of {}",
                scores.len(),
                vocab.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(DecodeError::BackendFailure(
                "backend returned a non-finite score".into(),
            ));
        }
        let masked = mask_scores(&scores, index, state)?;
        let choice = match (&policy, rng.as_mut()) {
            (SamplingPolicy::Temperature { temperature, .. }, Some(rng)) => {
                sample(&masked, *temperature, rng)
            }
            _ => argmax(&masked),
        }
        .ok_or(DecodeError::NoAllowedToken(state))?;
        let token = TokenId(choice as u32);
        if token == eos {
            terminated_by = Termination::Eos;
            break;
        }
        state = index.step(state, token)?;
        ids.push(token);
    }

    Ok(DecodeResult {
        text: vocab.decode(&ids),
        token_ids: ids,
        steps,
        terminated_by,
    })
}

/// A schema compiled down to a token index for one vocabulary.
#[derive(Clone, Debug)]
pub struct CompiledSchema {
    schema: SchemaNode,
    pattern: RegexPattern,
    dfa: Dfa,
    index: TokenIndex,
    vocab: Arc<Vocabulary>,
}

impl CompiledSchema {
    pub fn new(schema: SchemaNode, vocab: Arc<Vocabulary>) -> Result<Self, DecodeError> {
        let pattern = compile_schema(&schema)?;
        Self::from_pattern(schema, pattern, vocab)
    }

    /// For outputs described directly by a pattern rather than a schema; the
    /// `schema` is kept only as a label.
    pub fn from_pattern(
        schema: SchemaNode,
        pattern: RegexPattern,
        vocab: Arc<Vocabulary>,
    ) -> Result<Self, DecodeError> {
        let dfa = pattern.to_dfa()?;
        let index = TokenIndex::build(&dfa, &vocab);
        Ok(CompiledSchema {
            schema,
            pattern,
            dfa,
            index,
            vocab,
        })
    }

    pub fn schema(&self) -> &SchemaNode {
        &self.schema
    }

    pub fn pattern(&self) -> &RegexPattern {
        &self.pattern
    }

    pub fn dfa(&self) -> &Dfa {
        &self.dfa
    }

    pub fn index(&self) -> &TokenIndex {
        &self.index
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn accepts(&self, text: &str) -> bool {
        self.dfa.accepts(text)
    }

    pub fn decode<F: Real, B: TokenBackend<F> + ?Sized>(
        &self,
        backend: &B,
        policy: SamplingPolicy<F>,
        max_tokens: usize,
        ctx: &PromptContext,
    ) -> Result<DecodeResult, DecodeError> {
        decode(&self.index, &self.vocab, backend, policy, max_tokens, ctx)
    }

    /// Emits `text` through the constrained decoder with a scripted backend.
    /// Returns the decoded text, which equals `text` whenever `text` is in the
    /// language.
    pub fn emit_scripted(
        &self,
        text: &str,
        ctx: &PromptContext,
    ) -> Result<DecodeResult, DecodeError> {
        let script = self.vocab.encode(text).ok_or_else(|| {
            DecodeError::InvalidArgument(format!("text cannot be tokenized: {text:?}"))
        })?;
        let backend = ScriptedBackend::new(script, self.vocab.len(), self.vocab.eos_id())?;
        let budget = backend.script_len() + 2 * crate::schema::MAX_STRING_LEN + DEFAULT_MAX_TOKENS;
        self.decode::<f32, _>(&backend, SamplingPolicy::Greedy, budget, ctx)
    }
}
