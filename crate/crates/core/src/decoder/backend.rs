use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DecodeError, PromptContext, TokenBackend};
use crate::fsm::TokenId;
use crate::scalar::Real;
use crate::seed::mix;

/// Seeded pseudo-random scores in `[-10, 10)`, a pure function of the seed and
/// the prefix.
#[derive(Clone, Debug)]
pub struct MockBackend {
    seed: u64,
    vocab_len: usize,
}

impl MockBackend {
    pub fn new(seed: u64, vocab_len: usize) -> Self {
        MockBackend { seed, vocab_len }
    }
}

impl<F: Real> TokenBackend<F> for MockBackend {
    fn score(&self, prefix: &[TokenId], _ctx: &PromptContext) -> Result<Vec<F>, DecodeError> {
        let key = prefix
            .iter()
            .fold(mix(self.seed, prefix.len() as u64), |h, t| {
                mix(h, u64::from(t.0))
            });
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        Ok((0..self.vocab_len)
            .map(|_| F::from_f64(rng.random_range(-10.0..10.0)).expect("finite"))
            .collect())
    }
}

/// Replays a fixed token script.
///
/// At step `k` the scripted token gets the maximal score and every other
/// token scores `-id`, so when the scripted token is illegal the decoder falls
/// back to the lowest legal id. After the script, eos gets the maximal score.
#[derive(Clone, Debug)]
pub struct ScriptedBackend {
    script: Vec<TokenId>,
    vocab_len: usize,
    eos_id: TokenId,
}

impl ScriptedBackend {
    pub fn new(
        script: Vec<TokenId>,
        vocab_len: usize,
        eos_id: TokenId,
    ) -> Result<Self, DecodeError> {
        if script.is_empty() {
            return Err(DecodeError::InvalidArgument(
                "script must be non-empty".into(),
            ));
        }
        if let Some(bad) = script
            .iter()
            .chain([&eos_id])
            .find(|t| t.index() >= vocab_len)
        {
            return Err(DecodeError::InvalidArgument(format!(
                "token {bad} outside vocabulary"
            )));
        }
        Ok(ScriptedBackend {
            script,
            vocab_len,
            eos_id,
        })
    }

    pub fn script_len(&self) -> usize {
        self.script.len()
    }
}

impl<F: Real> TokenBackend<F> for ScriptedBackend {
    fn score(&self, prefix: &[TokenId], _ctx: &PromptContext) -> Result<Vec<F>, DecodeError> {
        let target = self
            .script
            .get(prefix.len())
            .copied()
            .unwrap_or(self.eos_id);
        let mut scores: Vec<F> = (0..self.vocab_len)
            .map(|i| -F::from_usize(i).expect("finite"))
            .collect();
        scores[target.index()] = F::from_usize(self.vocab_len + 1).expect("finite");
        Ok(scores)
    }
}
