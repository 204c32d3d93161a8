//! Metrics over transcripts and the report they roll up into.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{image_path, Dataset};
use crate::decoder::ImageRef;
use crate::pipeline::{
    format_verdict, run_episode, PipelineError, Reasoner, ReasonerRequest, ReasonerSchemas,
    ReasoningTranscript, Stage, User,
};
use crate::scalar::Fraction;
use crate::seed::unit_interval;
use crate::world::{match_ids, normalize, ReferringExpression, Scene, Split, TaskInstance};
use crate::Rate;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{preds} predictions for {gts} labels")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("no scene {0}")]
    MissingScene(String),
    #[error("no task {0}")]
    MissingTask(String),
    #[error("nothing to evaluate: {0}")]
    Empty(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// |pred ∩ gt| / |pred ∪ gt|, and 1 when both are empty.
pub fn set_iou<Q: Fraction, T: Ord>(pred: &BTreeSet<T>, gt: &BTreeSet<T>) -> Q {
    let inter = pred.intersection(gt).count() as u64;
    let union = pred.union(gt).count() as u64;
    if union == 0 {
        Q::one()
    } else {
        Q::from_counts(inter, union)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationMetrics<Q> {
    pub precision: Q,
    pub recall: Q,
    pub f1: Q,
    pub accuracy: Q,
    pub confusion: Confusion,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

/// 2·p·r / (p + r), or 0 when p + r = 0.
pub fn f1_score<Q: Fraction>(precision: Q, recall: Q) -> Q {
    let sum = precision.clone() + recall.clone();
    if sum == Q::zero() {
        Q::zero()
    } else {
        (Q::one() + Q::one()) * precision * recall / sum
    }
}

fn ratio<Q: Fraction>(num: u64, den: u64) -> (Q, bool) {
    if den == 0 {
        (Q::zero(), true)
    } else {
        (Q::from_counts(num, den), false)
    }
}

/// Ambiguous is the positive class.
pub fn classification_metrics<Q: Fraction>(
    preds: &[bool],
    gts: &[bool],
) -> Result<ClassificationMetrics<Q>, EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &g) in preds.iter().zip(gts) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let (precision, precision_undefined) = ratio::<Q>(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio::<Q>(c.tp, c.tp + c.fn_);
    let (accuracy, _) = ratio::<Q>(c.tp + c.tn, c.total());
    Ok(ClassificationMetrics {
        f1: f1_score(precision.clone(), recall.clone()),
        precision,
        recall,
        accuracy,
        confusion: c,
        precision_undefined,
        recall_undefined,
    })
}

/// Which episodes count toward resolution success.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionScope {
    #[default]
    AmbiguousOnly,
    AllTasks,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionOutcome<Q> {
    pub rate: Q,
    pub successes: u64,
    pub episodes: u64,
}

/// Whether the resolved descriptions denote exactly the intended objects.
pub fn resolution_succeeded(
    transcript: &ReasoningTranscript,
    task: &TaskInstance,
    scene: &Scene,
) -> bool {
    let mut ids = BTreeSet::new();
    for desc in &transcript.resolved {
        match ReferringExpression::parse(desc) {
            Some(expr) => ids.extend(match_ids(&expr, scene)),
            None => return false,
        }
    }
    ids == task.intended.iter().cloned().collect()
}

pub fn resolution_success<Q: Fraction>(
    transcripts: &[ReasoningTranscript],
    dataset: &Dataset,
    scope: ResolutionScope,
) -> Result<ResolutionOutcome<Q>, EvalError> {
    let tasks: BTreeMap<&str, &TaskInstance> = dataset
        .tasks
        .iter()
        .map(|t| (t.task_id.as_str(), t))
        .collect();
    let scenes: BTreeMap<&str, &Scene> = dataset
        .scenes
        .iter()
        .map(|s| (s.scene_id.as_str(), s))
        .collect();
    let (mut successes, mut episodes) = (0u64, 0u64);
    for tr in transcripts {
        let task = tasks
            .get(tr.task_id.as_str())
            .ok_or_else(|| EvalError::MissingTask(tr.task_id.clone()))?;
        let scene = scenes
            .get(task.scene_id.as_str())
            .ok_or_else(|| EvalError::MissingScene(task.scene_id.clone()))?;
        if scope == ResolutionScope::AmbiguousOnly && !task.ambiguous {
            continue;
        }
        episodes += 1;
        successes += u64::from(resolution_succeeded(tr, task, scene));
    }
    if episodes == 0 {
        return Err(EvalError::Empty("no episodes in resolution scope".into()));
    }
    Ok(ResolutionOutcome {
        rate: Q::from_counts(successes, episodes),
        successes,
        episodes,
    })
}

/// Flips the classification stage's verdict with probability `flip_prob`,
/// decided per task id; every other stage is delegated untouched.
pub struct NoisyReasoner<R> {
    inner: R,
    flip_prob: f64,
    seed: u64,
    schemas: std::sync::Arc<ReasonerSchemas>,
}

pub fn noisy_wrapper<R: Reasoner>(
    inner: R,
    flip_prob: f64,
    seed: u64,
) -> Result<NoisyReasoner<R>, EvalError> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(EvalError::InvalidArgument(format!(
            "flip probability {flip_prob} outside [0, 1]"
        )));
    }
    Ok(NoisyReasoner {
        inner,
        flip_prob,
        seed,
        schemas: ReasonerSchemas::shared(),
    })
}

impl<R> NoisyReasoner<R> {
    pub fn flips(&self, task_id: &str) -> bool {
        unit_interval(self.seed, task_id) < self.flip_prob
    }
}

impl<R: Reasoner> Reasoner for NoisyReasoner<R> {
    fn answer(&self, request: &ReasonerRequest) -> Result<String, PipelineError> {
        let text = self.inner.answer(request)?;
        if request.stage != Stage::Classify || !self.flips(&request.task_id) {
            return Ok(text);
        }
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let ambiguous = !value["ambiguity"].as_bool().unwrap_or(false);
        let subject = request
            .slots
            .grounded
            .first()
            .map(String::as_str)
            .unwrap_or("object");
        let flipped = if ambiguous {
            format_verdict(
                true,
                &format!("the {subject} may match several objects"),
                &format!("Which {subject} do you mean?"),
            )
        } else {
            format_verdict(false, "every object in the task is unique", "")
        };
        self.schemas.emit(request, &flipped)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: String,
    pub split: Option<Split>,
    pub episode_count: u64,
    pub grounding_iou_mean: Rate,
    pub precision: Rate,
    pub recall: Rate,
    pub f1: Rate,
    pub accuracy: Rate,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub resolution_success_rate: Rate,
    pub resolution_episodes: u64,
    pub resolution_scope: ResolutionScope,
    pub confusion: Confusion,
    pub warning_count: u64,
}

impl EvalReport {
    /// IoU | Precision Recall F1 | Resolution.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let name_width = self.condition.len().max(9);
        let _ = writeln!(
            out,
            "{:<name_width$} | IoU  | Prec Rec  F1   | Resolution",
            "condition"
        );
        let _ = writeln!(
            out,
            "{:<name_width$} | {:.2} | {:.2} {:.2} {:.2} | {:.2}",
            self.condition,
            self.grounding_iou_mean,
            self.precision,
            self.recall,
            self.f1,
            self.resolution_success_rate
        );
        out
    }
}

/// Writes the JSON report to `path` and the text table next to it with a
/// `.txt` extension.
pub fn write_report(path: &Path, report: &EvalReport) -> Result<(), EvalError> {
    fs::write(path, serde_json::to_string_pretty(report)? + "\n")?;
    fs::write(path.with_extension("txt"), report.table())?;
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub condition: String,
    /// `None` evaluates every task.
    pub split: Option<Split>,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    pub scope: ResolutionScope,
    /// Dataset directory holding the rendered images, if any.
    pub image_dir: Option<std::path::PathBuf>,
}

/// Builds a fresh reasoner per episode.
pub trait ReasonerFactory: Sync {
    fn build(&self, scene: &Scene, task: &TaskInstance)
        -> Result<Box<dyn Reasoner>, PipelineError>;
}

impl<F> ReasonerFactory for F
where
    F: Fn(&Scene, &TaskInstance) -> Result<Box<dyn Reasoner>, PipelineError> + Sync,
{
    fn build(
        &self,
        scene: &Scene,
        task: &TaskInstance,
    ) -> Result<Box<dyn Reasoner>, PipelineError> {
        self(scene, task)
    }
}

pub fn evaluate<U: User + Clone + Send + Sync>(
    dataset: &Dataset,
    factory: &dyn ReasonerFactory,
    user: &U,
    options: &EvalOptions,
) -> Result<(EvalReport, Vec<ReasoningTranscript>), EvalError> {
    let mut tasks: Vec<&TaskInstance> = dataset
        .tasks
        .iter()
        .filter(|t| options.split.is_none_or(|s| t.split == s))
        .collect();
    if tasks.is_empty() {
        return Err(EvalError::Empty("the selected split has no tasks".into()));
    }
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    let episode = |task: &&TaskInstance| -> Result<ReasoningTranscript, EvalError> {
        let scene = dataset
            .scene(&task.scene_id)
            .ok_or_else(|| EvalError::MissingScene(task.scene_id.clone()))?;
        let image = options
            .image_dir
            .as_ref()
            .map(|d| ImageRef::Path(image_path(d, &scene.scene_id)));
        let reasoner = factory.build(scene, task)?;
        Ok(run_episode(
            &reasoner,
            &mut user.clone(),
            task,
            scene,
            image.as_ref(),
        )?)
    };
    let run = || tasks.par_iter().map(episode).collect::<Result<Vec<_>, _>>();
    let transcripts = if options.jobs == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| EvalError::InvalidArgument(e.to_string()))?
            .install(run)?
    };

    let report = aggregate(dataset, &tasks, &transcripts, options)?;
    Ok((report, transcripts))
}

/// Folds in task-id order, so the result does not depend on scheduling.
fn aggregate(
    dataset: &Dataset,
    tasks: &[&TaskInstance],
    transcripts: &[ReasoningTranscript],
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let mut iou_sum = 0.0;
    let mut preds = Vec::with_capacity(tasks.len());
    let mut gts = Vec::with_capacity(tasks.len());
    let mut warning_count = 0u64;
    for (task, tr) in tasks.iter().zip(transcripts) {
        let gt: BTreeSet<String> = task
            .referent_descriptions()
            .iter()
            .map(|d| normalize(d))
            .collect();
        let pred: BTreeSet<String> = tr.grounded.iter().cloned().collect();
        iou_sum += set_iou::<Rate, _>(&pred, &gt);
        preds.push(tr.verdict.ambiguous);
        gts.push(task.ambiguous);
        warning_count += tr.warnings.len() as u64;
    }
    let m = classification_metrics::<Rate>(&preds, &gts)?;
    let res = resolution_success::<Rate>(transcripts, dataset, options.scope)?;
    Ok(EvalReport {
        condition: options.condition.clone(),
        split: options.split,
        episode_count: tasks.len() as u64,
        grounding_iou_mean: iou_sum / tasks.len() as f64,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        accuracy: m.accuracy,
        precision_undefined: m.precision_undefined,
        recall_undefined: m.recall_undefined,
        resolution_success_rate: res.rate,
        resolution_episodes: res.episodes,
        resolution_scope: options.scope,
        confusion: m.confusion,
        warning_count,
    })
}
