use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::decoder::{CompiledSchema, ImageRef, PromptContext, SamplingPolicy, TokenBackend};
use crate::fsm::Vocabulary;
use crate::scalar::Real;
use crate::schema::{ambiguity_schema, grounding_schema, RegexPattern, SchemaNode};
use crate::seed::derive;
use crate::world::{
    ambiguity_label, cell_center, match_expression, ReferringExpression, Refinement, Scene,
    TaskInstance,
};

/// `[(x, y), ...]` with up to three digits per coordinate.
pub const POINTS_PATTERN: &str =
    r"\[(?: ?| ?\(\d{1,3}, ?\d{1,3}\)(?:, ?\(\d{1,3}, ?\d{1,3}\))* ?)\]";

/// Budget for decoder-backed reasoners.
pub const REASONER_MAX_TOKENS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ground,
    Classify,
    Resolve,
    Locate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ground => "ground",
            Stage::Classify => "classify",
            Stage::Resolve => "resolve",
            Stage::Locate => "locate",
        }
    }

    pub fn format(self) -> OutputFormat {
        match self {
            Stage::Ground | Stage::Resolve => OutputFormat::Grounding,
            Stage::Classify => OutputFormat::Ambiguity,
            Stage::Locate => OutputFormat::Points,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Grounding,
    Ambiguity,
    Points,
}

/// Structured view of what the prompt carries, so symbolic reasoners need
/// not parse prose.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Slots {
    pub task_text: String,
    pub grounded: Vec<String>,
    pub question: Option<String>,
    pub answer: Option<String>,
    pub resolved: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ReasonerRequest {
    pub stage: Stage,
    pub task_id: String,
    pub prompt: String,
    pub image: Option<ImageRef>,
    pub slots: Slots,
}

impl ReasonerRequest {
    pub fn format(&self) -> OutputFormat {
        self.stage.format()
    }
}

/// Answers one pipeline stage with text in the stage's output language.
pub trait Reasoner: Send + Sync {
    fn answer(&self, request: &ReasonerRequest) -> Result<String, PipelineError>;
}

impl<R: Reasoner + ?Sized> Reasoner for Box<R> {
    fn answer(&self, request: &ReasonerRequest) -> Result<String, PipelineError> {
        (**self).answer(request)
    }
}

impl<R: Reasoner + ?Sized> Reasoner for Arc<R> {
    fn answer(&self, request: &ReasonerRequest) -> Result<String, PipelineError> {
        (**self).answer(request)
    }
}

/// The three output languages compiled against one vocabulary.
#[derive(Debug)]
pub struct ReasonerSchemas {
    grounding: CompiledSchema,
    ambiguity: CompiledSchema,
    points: CompiledSchema,
}

impl ReasonerSchemas {
    pub fn new(vocab: Arc<Vocabulary>) -> Result<Self, PipelineError> {
        Ok(ReasonerSchemas {
            grounding: CompiledSchema::new(grounding_schema(), vocab.clone())?,
            ambiguity: CompiledSchema::new(ambiguity_schema(), vocab.clone())?,
            points: CompiledSchema::from_pattern(
                SchemaNode::array(SchemaNode::String),
                RegexPattern::new(POINTS_PATTERN),
                vocab,
            )?,
        })
    }

    /// Built once per process over the default JSON vocabulary.
    pub fn shared() -> Arc<Self> {
        static SHARED: OnceLock<Arc<ReasonerSchemas>> = OnceLock::new();
        SHARED
            .get_or_init(|| {
                Arc::new(
                    Self::new(Arc::new(Vocabulary::json_default()))
                        .expect("built-in schemas compile"),
                )
            })
            .clone()
    }

    pub fn get(&self, format: OutputFormat) -> &CompiledSchema {
        match format {
            OutputFormat::Grounding => &self.grounding,
            OutputFormat::Ambiguity => &self.ambiguity,
            OutputFormat::Points => &self.points,
        }
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        self.grounding.vocab()
    }

    /// Routes `text` through the constrained decoder. Fails if the decoder
    /// could not reproduce it, i.e. `text` is outside the language.
    pub fn emit(&self, request: &ReasonerRequest, text: &str) -> Result<String, PipelineError> {
        let compiled = self.get(request.format());
        let out = compiled.emit_scripted(text, &context(request)?)?;
        if out.text != text {
            return Err(PipelineError::ReasonerFailure(format!(
                "{} output is not in its output language: {text:?}",
                request.stage.name()
            )));
        }
        Ok(out.text)
    }
}

fn context(request: &ReasonerRequest) -> Result<PromptContext, PipelineError> {
    Ok(PromptContext::new(request.prompt.clone())?
        .with_image(request.image.clone())
        .with_metadata("stage", request.stage.name())
        .with_metadata("task_id", request.task_id.clone()))
}

pub fn format_string_array<S: AsRef<str>>(items: &[S]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| json_string(s.as_ref())).collect();
    format!("[{}]", quoted.join(", "))
}

pub fn format_verdict(ambiguous: bool, explanation: &str, question: &str) -> String {
    format!(
        "{{\"ambiguity\": {ambiguous}, \"explanation\": {}, \"clarifying_question\": {}}}",
        json_string(explanation),
        json_string(question)
    )
}

pub fn format_points(points: &[(u32, u32)]) -> String {
    let pairs: Vec<String> = points.iter().map(|(x, y)| format!("({x}, {y})")).collect();
    format!("[{}]", pairs.join(", "))
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

/// Answers from symbolic ground truth, emitting through the same decoder
/// path as a model.
#[derive(Clone, Debug)]
pub struct OracleReasoner {
    scene: Scene,
    task: TaskInstance,
    schemas: Arc<ReasonerSchemas>,
}

impl OracleReasoner {
    pub fn new(scene: Scene, task: TaskInstance) -> Self {
        Self::with_schemas(scene, task, ReasonerSchemas::shared())
    }

    pub fn with_schemas(scene: Scene, task: TaskInstance, schemas: Arc<ReasonerSchemas>) -> Self {
        OracleReasoner {
            scene,
            task,
            schemas,
        }
    }

    fn truth(&self, request: &ReasonerRequest) -> Result<String, PipelineError> {
        let scene = &self.scene;
        Ok(match request.stage {
            Stage::Ground => format_string_array(&self.task.referent_descriptions()),
            Stage::Classify => {
                let ambiguous = ambiguity_label(&self.task, scene)?;
                let first = self
                    .task
                    .referents
                    .iter()
                    .find(|e| match_expression(e, scene).len() >= 2);
                match first {
                    Some(expr) if ambiguous => format_verdict(
                        true,
                        &format!(
                            "the {expr} matches {} objects",
                            match_expression(expr, scene).len()
                        ),
                        &format!("Which {expr} do you mean?"),
                    ),
                    _ => format_verdict(false, "every object in the task is unique", ""),
                }
            }
            Stage::Resolve => {
                let refinement = request
                    .slots
                    .answer
                    .as_deref()
                    .and_then(Refinement::parse_phrase);
                let resolved: Vec<String> = self
                    .task
                    .referents
                    .iter()
                    .map(|expr| match refinement {
                        Some(r) if match_expression(expr, scene).len() >= 2 => {
                            r.apply(*expr).describe()
                        }
                        _ => expr.describe(),
                    })
                    .collect();
                format_string_array(&resolved)
            }
            Stage::Locate => {
                let points: Vec<(u32, u32)> = request
                    .slots
                    .resolved
                    .iter()
                    .map(|desc| {
                        ReferringExpression::parse(desc)
                            .and_then(|e| {
                                match_expression(&e, scene)
                                    .first()
                                    .map(|o| cell_center(o.cell))
                            })
                            .unwrap_or((0, 0))
                    })
                    .collect();
                format_points(&points)
            }
        })
    }
}

impl Reasoner for OracleReasoner {
    fn answer(&self, request: &ReasonerRequest) -> Result<String, PipelineError> {
        let text = self.truth(request)?;
        self.schemas.emit(request, &text)
    }
}

/// Fixed answer per stage, checked against the stage's language.
#[derive(Clone, Debug)]
pub struct ScriptedReasoner {
    answers: BTreeMap<Stage, String>,
    schemas: Arc<ReasonerSchemas>,
}

impl ScriptedReasoner {
    pub fn new<S: Into<String>>(answers: impl IntoIterator<Item = (Stage, S)>) -> Self {
        ScriptedReasoner {
            answers: answers
                .into_iter()
                .map(|(stage, s)| (stage, s.into()))
                .collect(),
            schemas: ReasonerSchemas::shared(),
        }
    }
}

impl Reasoner for ScriptedReasoner {
    fn answer(&self, request: &ReasonerRequest) -> Result<String, PipelineError> {
        let text = self.answers.get(&request.stage).ok_or_else(|| {
            PipelineError::ReasonerFailure(format!(
                "no scripted answer for {}",
                request.stage.name()
            ))
        })?;
        self.schemas.emit(request, text)
    }
}

/// A token-scoring backend behind the constrained decoder.
pub struct DecoderReasoner<F: Real, B> {
    backend: B,
    schemas: Arc<ReasonerSchemas>,
    policy: SamplingPolicy<F>,
    max_tokens: usize,
}

impl<F: Real, B: TokenBackend<F>> DecoderReasoner<F, B> {
    pub fn new(backend: B, policy: SamplingPolicy<F>) -> Self {
        DecoderReasoner {
            backend,
            schemas: ReasonerSchemas::shared(),
            policy,
            max_tokens: REASONER_MAX_TOKENS,
        }
    }

    pub fn with_schemas(mut self, schemas: Arc<ReasonerSchemas>) -> Self {
        self.schemas = schemas;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

impl<F: Real, B: TokenBackend<F>> Reasoner for DecoderReasoner<F, B> {
    fn answer(&self, request: &ReasonerRequest) -> Result<String, PipelineError> {
        let compiled = self.schemas.get(request.format());
        // Per-request seeds keep sampled episodes independent of run order.
        let policy = match self.policy {
            SamplingPolicy::Temperature { temperature, seed } => SamplingPolicy::Temperature {
                temperature,
                seed: derive(
                    seed,
                    &format!("{}/{}", request.task_id, request.stage.name()),
                ),
            },
            greedy => greedy,
        };
        let out = compiled.decode(&self.backend, policy, self.max_tokens, &context(request)?)?;
        if !compiled.accepts(&out.text) {
            return Err(PipelineError::ReasonerFailure(format!(
                "{} output truncated after {} tokens",
                request.stage.name(),
                out.steps
            )));
        }
        Ok(out.text)
    }
}
