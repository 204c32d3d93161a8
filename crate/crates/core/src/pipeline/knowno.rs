//! Multiple-choice ambiguity detection: four candidate actions, softmax over
//! their option scores, ambiguous when two or more clear a fixed threshold.

use super::PipelineError;
use crate::decoder::{PromptContext, TokenBackend};
use crate::fsm::Vocabulary;
use crate::scalar::{softmax, Real};

pub const OPTION_LABELS: [&str; 4] = ["A", "B", "C", "D"];

const TEMPLATE: &str = include_str!("../../prompts/knowno.txt");

pub fn knowno_prompt(task_text: &str, options: &[String; 4]) -> String {
    TEMPLATE
        .replace("{task}", task_text)
        .replace("{a}", &options[0])
        .replace("{b}", &options[1])
        .replace("{c}", &options[2])
        .replace("{d}", &options[3])
}

/// Raw scores for options A to D.
pub trait OptionScorer<F: Real> {
    fn option_scores(
        &self,
        task_text: &str,
        options: &[String; 4],
    ) -> Result<[F; 4], PipelineError>;
}

/// Scores supplied directly.
#[derive(Clone, Copy, Debug)]
pub struct FixedScores<F>(pub [F; 4]);

impl<F: Real> OptionScorer<F> for FixedScores<F> {
    fn option_scores(
        &self,
        _task_text: &str,
        _options: &[String; 4],
    ) -> Result<[F; 4], PipelineError> {
        Ok(self.0)
    }
}

/// One score call with an empty prefix, read at the label tokens.
pub struct BackendScorer<'a, B> {
    backend: &'a B,
    label_ids: [usize; 4],
}

impl<'a, B> BackendScorer<'a, B> {
    pub fn new(backend: &'a B, vocab: &Vocabulary) -> Result<Self, PipelineError> {
        let mut label_ids = [0; 4];
        for (slot, label) in label_ids.iter_mut().zip(OPTION_LABELS) {
            *slot = vocab
                .id_of(label)
                .ok_or_else(|| {
                    PipelineError::InvalidArgument(format!("vocabulary has no token {label:?}"))
                })?
                .index();
        }
        Ok(BackendScorer { backend, label_ids })
    }
}

impl<F: Real, B: TokenBackend<F>> OptionScorer<F> for BackendScorer<'_, B> {
    fn option_scores(
        &self,
        task_text: &str,
        options: &[String; 4],
    ) -> Result<[F; 4], PipelineError> {
        let ctx = PromptContext::new(knowno_prompt(task_text, options))?;
        let scores = self.backend.score(&[], &ctx)?;
        Ok(self.label_ids.map(|i| scores[i]))
    }
}

/// True iff at least two softmax-normalized options exceed `threshold`.
pub fn knowno_decision<F: Real>(scores: &[F; 4], threshold: F) -> Result<bool, PipelineError> {
    if !(threshold > F::zero() && threshold < F::one()) {
        return Err(PipelineError::InvalidArgument(
            "threshold must lie in (0, 1)".into(),
        ));
    }
    Ok(softmax(scores)
        .into_iter()
        .filter(|&p| p > threshold)
        .count()
        >= 2)
}

pub fn knowno_baseline<F: Real, S: OptionScorer<F> + ?Sized>(
    scorer: &S,
    task_text: &str,
    options: &[String; 4],
    threshold: F,
) -> Result<bool, PipelineError> {
    knowno_decision(&scorer.option_scores(task_text, options)?, threshold)
}
