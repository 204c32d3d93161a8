//! The clarification protocol: ground the task's objects, classify ambiguity
//! and ask a question, fold the user's answer back in, then locate each
//! resolved object in the image.

mod knowno;
mod reasoner;
mod user;

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use knowno::{
    knowno_baseline, knowno_decision, knowno_prompt, BackendScorer, FixedScores, OptionScorer,
    OPTION_LABELS,
};
pub use reasoner::{
    format_points, format_string_array, format_verdict, DecoderReasoner, OracleReasoner,
    OutputFormat, Reasoner, ReasonerRequest, ReasonerSchemas, ScriptedReasoner, Slots, Stage,
    POINTS_PATTERN, REASONER_MAX_TOKENS,
};
pub use user::{simulate_user_answer, InteractiveUser, SimulatedUser, User};

use crate::decoder::{DecodeError, ImageRef};
use crate::world::{
    match_expression, normalize, ReferringExpression, Scene, TaskInstance, WorldError, IMAGE_SIZE,
};

const GROUND_PROMPT: &str = include_str!("../../prompts/ground.txt");
const CLASSIFY_PROMPT: &str = include_str!("../../prompts/classify.txt");
const RESOLVE_PROMPT: &str = include_str!("../../prompts/resolve.txt");
const LOCATE_PROMPT: &str = include_str!("../../prompts/locate.txt");

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("reasoner failure: {0}")]
    ReasonerFailure(String),
    #[error("description {0:?} still matches several objects")]
    UnresolvedAmbiguity(String),
    #[error("point ({x}, {y}) lies outside the image")]
    OutOfBounds { x: u32, y: u32 },
    #[error("expected {expected} points, got {got}")]
    CardinalityMismatch { expected: usize, got: usize },
    #[error("no attribute singles out object {0}")]
    NoDistinguishingAttribute(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("user input: {0}")]
    UserInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<DecodeError> for PipelineError {
    fn from(e: DecodeError) -> Self {
        PipelineError::ReasonerFailure(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityVerdict {
    pub ambiguous: bool,
    pub explanation: String,
    pub clarifying_question: String,
}

impl AmbiguityVerdict {
    /// Broken invariants, as human-readable warnings.
    pub fn violations(&self, grounded: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        if self.explanation.trim().is_empty() {
            out.push("verdict has an empty explanation".to_string());
        }
        if !self.ambiguous && !self.clarifying_question.is_empty() {
            out.push("clear verdict carries a clarifying question".to_string());
        }
        if self.ambiguous {
            let question = normalize(&self.clarifying_question);
            if !grounded
                .iter()
                .any(|g| !g.is_empty() && question.contains(g.as_str()))
            {
                out.push("clarifying question mentions no grounded object".to_string());
            }
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub ground_us: u64,
    pub classify_us: u64,
    pub resolve_us: u64,
    pub locate_us: u64,
}

/// Raw reasoner output of one stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutput {
    pub stage: Stage,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTranscript {
    pub task_id: String,
    pub grounded: Vec<String>,
    pub verdict: AmbiguityVerdict,
    pub user_answer: Option<String>,
    pub resolved: Vec<String>,
    pub points: Vec<(u32, u32)>,
    pub timings: Timings,
    /// Semantic mistakes noticed along the way; they are scored, not raised.
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<StageOutput>,
}

/// Per-episode inputs shared by every stage.
#[derive(Clone, Debug)]
pub struct EpisodeContext<'a> {
    pub task_id: &'a str,
    pub task_text: &'a str,
    pub image: Option<&'a ImageRef>,
}

impl EpisodeContext<'_> {
    fn request(&self, stage: Stage, prompt: String, slots: Slots) -> ReasonerRequest {
        ReasonerRequest {
            stage,
            task_id: self.task_id.to_string(),
            prompt,
            image: self.image.cloned(),
            slots: Slots {
                task_text: self.task_text.to_string(),
                ..slots
            },
        }
    }
}

fn parse_string_list(stage: Stage, text: &str) -> Result<Vec<String>, PipelineError> {
    let items: Vec<String> = serde_json::from_str(text).map_err(|e| {
        PipelineError::ReasonerFailure(format!("{} output does not parse: {e}", stage.name()))
    })?;
    let mut out: Vec<String> = Vec::with_capacity(items.len());
    for item in items {
        let n = normalize(&item);
        if !out.contains(&n) {
            out.push(n);
        }
    }
    Ok(out)
}

fn listing(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items.join(", ")
    }
}

pub fn ground_task_objects<R: Reasoner + ?Sized>(
    r: &R,
    ctx: &EpisodeContext,
) -> Result<(Vec<String>, StageOutput), PipelineError> {
    let prompt = GROUND_PROMPT.replace("{task}", ctx.task_text);
    let text = r.answer(&ctx.request(Stage::Ground, prompt, Slots::default()))?;
    Ok((
        parse_string_list(Stage::Ground, &text)?,
        StageOutput {
            stage: Stage::Ground,
            text,
        },
    ))
}

/// Returns the verdict together with any invariant it breaks.
pub fn classify_ambiguity<R: Reasoner + ?Sized>(
    r: &R,
    ctx: &EpisodeContext,
    grounded: &[String],
) -> Result<(AmbiguityVerdict, Vec<String>, StageOutput), PipelineError> {
    let prompt = CLASSIFY_PROMPT
        .replace("{task}", ctx.task_text)
        .replace("{grounded}", &listing(grounded));
    let slots = Slots {
        grounded: grounded.to_vec(),
        ..Slots::default()
    };
    let text = r.answer(&ctx.request(Stage::Classify, prompt, slots))?;

    #[derive(Deserialize)]
    struct Record {
        ambiguity: bool,
        explanation: String,
        clarifying_question: String,
    }
    let record: Record = serde_json::from_str(&text).map_err(|e| {
        PipelineError::ReasonerFailure(format!("classify output does not parse: {e}"))
    })?;
    let verdict = AmbiguityVerdict {
        ambiguous: record.ambiguity,
        explanation: record.explanation,
        clarifying_question: record.clarifying_question,
    };
    let warnings = verdict.violations(grounded);
    Ok((
        verdict,
        warnings,
        StageOutput {
            stage: Stage::Classify,
            text,
        },
    ))
}

/// Clear tasks resolve to their grounding without consulting the reasoner.
pub fn resolve<R: Reasoner + ?Sized>(
    r: &R,
    ctx: &EpisodeContext,
    grounded: &[String],
    verdict: &AmbiguityVerdict,
    user_answer: Option<&str>,
) -> Result<(Vec<String>, Option<StageOutput>), PipelineError> {
    if !verdict.ambiguous {
        return Ok((grounded.to_vec(), None));
    }
    let answer = user_answer
        .ok_or_else(|| PipelineError::Precondition("ambiguous verdict without an answer".into()))?;
    let prompt = RESOLVE_PROMPT
        .replace("{task}", ctx.task_text)
        .replace("{grounded}", &listing(grounded))
        .replace("{question}", &verdict.clarifying_question)
        .replace("{answer}", answer);
    let slots = Slots {
        grounded: grounded.to_vec(),
        question: Some(verdict.clarifying_question.clone()),
        answer: Some(answer.to_string()),
        ..Slots::default()
    };
    let text = r.answer(&ctx.request(Stage::Resolve, prompt, slots))?;
    Ok((
        parse_string_list(Stage::Resolve, &text)?,
        Some(StageOutput {
            stage: Stage::Resolve,
            text,
        }),
    ))
}

/// Object id each description denotes. Fails on descriptions matching
/// several objects or none.
pub fn match_resolved(scene: &Scene, resolved: &[String]) -> Result<Vec<String>, PipelineError> {
    resolved
        .iter()
        .map(|desc| {
            let expr = ReferringExpression::parse(desc).ok_or_else(|| {
                PipelineError::ReasonerFailure(format!("unrecognized description {desc:?}"))
            })?;
            match match_expression(&expr, scene).as_slice() {
                [one] => Ok(one.id.clone()),
                [] => Err(WorldError::UnmatchableReferent(desc.clone()).into()),
                _ => Err(PipelineError::UnresolvedAmbiguity(desc.clone())),
            }
        })
        .collect()
}

/// Extracts `(x, y)` pairs in order.
pub fn parse_points(text: &str) -> Result<Vec<(u32, u32)>, PipelineError> {
    let bad = || PipelineError::ReasonerFailure(format!("malformed point list {text:?}"));
    let mut points = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('(') {
        let close = rest[open..].find(')').ok_or_else(bad)? + open;
        let (x, y) = rest[open + 1..close].split_once(',').ok_or_else(bad)?;
        points.push((
            x.trim().parse().map_err(|_| bad())?,
            y.trim().parse().map_err(|_| bad())?,
        ));
        rest = &rest[close + 1..];
    }
    Ok(points)
}

pub fn locate_objects<R: Reasoner + ?Sized>(
    r: &R,
    ctx: &EpisodeContext,
    resolved: &[String],
) -> Result<(Vec<(u32, u32)>, StageOutput), PipelineError> {
    let prompt = LOCATE_PROMPT.replace("{resolved}", &listing(resolved));
    let slots = Slots {
        resolved: resolved.to_vec(),
        ..Slots::default()
    };
    let text = r.answer(&ctx.request(Stage::Locate, prompt, slots))?;
    let points = parse_points(&text)?;
    let output = StageOutput {
        stage: Stage::Locate,
        text,
    };
    if points.len() != resolved.len() {
        return Err(PipelineError::CardinalityMismatch {
            expected: resolved.len(),
            got: points.len(),
        });
    }
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| *x >= IMAGE_SIZE || *y >= IMAGE_SIZE)
    {
        return Err(PipelineError::OutOfBounds { x, y });
    }
    Ok((points, output))
}

fn micros(start: Instant) -> u64 {
    start.elapsed().as_micros() as u64
}

/// Runs all stages for one task. Reasoner mistakes end up as transcript
/// warnings; transport, contract and user I/O errors are returned.
pub fn run_episode<R: Reasoner + ?Sized, U: User + ?Sized>(
    r: &R,
    user: &mut U,
    task: &TaskInstance,
    scene: &Scene,
    image: Option<&ImageRef>,
) -> Result<ReasoningTranscript, PipelineError> {
    if task.scene_id != scene.scene_id {
        return Err(PipelineError::Precondition(format!(
            "task {} is not in scene {}",
            task.task_id, scene.scene_id
        )));
    }
    let ctx = EpisodeContext {
        task_id: &task.task_id,
        task_text: &task.text,
        image,
    };
    let mut timings = Timings::default();
    let mut outputs = Vec::with_capacity(4);

    let t = Instant::now();
    let (grounded, out) = ground_task_objects(r, &ctx)?;
    outputs.push(out);
    timings.ground_us = micros(t);

    let t = Instant::now();
    let (verdict, mut warnings, out) = classify_ambiguity(r, &ctx, &grounded)?;
    outputs.push(out);
    timings.classify_us = micros(t);

    let user_answer = if verdict.ambiguous {
        Some(user.answer(&grounded, &verdict, task, scene)?)
    } else {
        None
    };

    let t = Instant::now();
    let (resolved, out) = resolve(r, &ctx, &grounded, &verdict, user_answer.as_deref())?;
    outputs.extend(out);
    timings.resolve_us = micros(t);
    if let Err(e) = match_resolved(scene, &resolved) {
        warnings.push(e.to_string());
    }

    let t = Instant::now();
    let points = match locate_objects(r, &ctx, &resolved) {
        Ok((points, out)) => {
            outputs.push(out);
            points
        }
        Err(
            e @ (PipelineError::OutOfBounds { .. } | PipelineError::CardinalityMismatch { .. }),
        ) => {
            warnings.push(e.to_string());
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    timings.locate_us = micros(t);

    Ok(ReasoningTranscript {
        task_id: task.task_id.clone(),
        grounded,
        verdict,
        user_answer,
        resolved,
        points,
        timings,
        warnings,
        outputs,
    })
}

pub fn write_transcripts(
    path: &Path,
    transcripts: &[ReasoningTranscript],
) -> Result<(), PipelineError> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for t in transcripts {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_transcripts(path: &Path) -> Result<Vec<ReasoningTranscript>, PipelineError> {
    let mut out = Vec::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Category, Cell, Color, Grid, SceneObject, Split, Template};

    fn obj(id: &str, category: Category, color: Color, c: u8, r: u8) -> SceneObject {
        SceneObject {
            id: id.into(),
            category,
            color,
            cell: Cell(c, r),
        }
    }

    fn scene() -> Scene {
        Scene {
            scene_id: "s".into(),
            grid: Grid::default(),
            seed: 0,
            objects: vec![
                obj("b1", Category::Block, Color::Blue, 0, 0),
                obj("b2", Category::Block, Color::Red, 3, 2),
                obj("w1", Category::Bowl, Color::Green, 5, 3),
            ],
        }
    }

    fn task(
        template: Template,
        referents: Vec<ReferringExpression>,
        intended: &[&str],
        ambiguous: bool,
    ) -> TaskInstance {
        TaskInstance {
            task_id: "t".into(),
            scene_id: "s".into(),
            template,
            text: template.realize(&referents),
            referents,
            intended: intended.iter().map(|s| s.to_string()).collect(),
            ambiguous,
            split: Split::Test,
        }
    }

    fn block() -> ReferringExpression {
        ReferringExpression::new(Category::Block)
    }

    #[test]
    fn oracle_resolves_by_color() {
        let (s, t) = (scene(), task(Template::Pick, vec![block()], &["b1"], true));
        let r = OracleReasoner::new(s.clone(), t.clone());
        let tr = run_episode(&r, &mut SimulatedUser, &t, &s, None).unwrap();
        assert_eq!(tr.grounded, ["block"]);
        assert!(tr.verdict.ambiguous);
        assert!(tr.verdict.clarifying_question.contains("block"));
        assert_eq!(tr.user_answer.as_deref(), Some("the blue one"));
        assert_eq!(tr.resolved, ["blue block"]);
        assert_eq!(tr.points, [(56, 80)]);
        assert!(tr.warnings.is_empty(), "{:?}", tr.warnings);
        assert_eq!(tr.outputs.len(), 4);
    }

    #[test]
    fn clear_task_skips_user_and_resolution() {
        let s = scene();
        let t = task(
            Template::MoveTo,
            vec![
                block().with_color(Color::Red),
                ReferringExpression::new(Category::Bowl),
            ],
            &["b2", "w1"],
            false,
        );
        let r = OracleReasoner::new(s.clone(), t.clone());
        let tr = run_episode(&r, &mut SimulatedUser, &t, &s, None).unwrap();
        assert_eq!(tr.grounded, ["red block", "bowl"]);
        assert_eq!(tr.verdict.clarifying_question, "");
        assert_eq!(tr.user_answer, None);
        assert_eq!(tr.resolved, tr.grounded);
        assert_eq!(tr.points, [(296, 272), (456, 368)]);
        assert_eq!(tr.outputs.len(), 3);
    }

    #[test]
    fn misclassification_is_recorded() {
        let (s, t) = (scene(), task(Template::Pick, vec![block()], &["b1"], true));
        let r = ScriptedReasoner::new([
            (Stage::Ground, r#"["block"]"#),
            (
                Stage::Classify,
                r#"{"ambiguity": false, "explanation": "one block", "clarifying_question": "which?"}"#,
            ),
            (Stage::Locate, "[(56, 80)]"),
        ]);
        let tr = run_episode(&r, &mut SimulatedUser, &t, &s, None).unwrap();
        assert_eq!(tr.user_answer, None);
        assert_eq!(tr.resolved, ["block"]);
        assert!(tr
            .warnings
            .iter()
            .any(|w| w.contains("clarifying question")));
        assert!(tr.warnings.iter().any(|w| w.contains("several objects")));
    }

    #[test]
    fn empty_grounding_passes_through() {
        let r = ScriptedReasoner::new([(Stage::Ground, "[]")]);
        let ctx = EpisodeContext {
            task_id: "t",
            task_text: "",
            image: None,
        };
        assert!(ground_task_objects(&r, &ctx).unwrap().0.is_empty());
    }

    #[test]
    fn point_checks() {
        let ctx = EpisodeContext {
            task_id: "t",
            task_text: "x",
            image: None,
        };
        let far = ScriptedReasoner::new([(Stage::Locate, "[(600, 80)]")]);
        let one = vec!["blue block".to_string()];
        assert!(matches!(
            locate_objects(&far, &ctx, &one),
            Err(PipelineError::OutOfBounds { x: 600, y: 80 })
        ));
        let two = ScriptedReasoner::new([(Stage::Locate, "[(1, 2), (3,4)]")]);
        assert!(matches!(
            locate_objects(&two, &ctx, &one),
            Err(PipelineError::CardinalityMismatch {
                expected: 1,
                got: 2
            })
        ));
        assert_eq!(parse_points("[(1, 2), (3,4)]").unwrap(), [(1, 2), (3, 4)]);
    }

    #[test]
    fn scripted_output_must_be_in_language() {
        let r = ScriptedReasoner::new([(Stage::Ground, "[block]")]);
        let ctx = EpisodeContext {
            task_id: "t",
            task_text: "x",
            image: None,
        };
        assert!(matches!(
            ground_task_objects(&r, &ctx),
            Err(PipelineError::ReasonerFailure(_))
        ));
    }

    #[test]
    fn user_answer_requires_ambiguity() {
        let (s, t) = (scene(), task(Template::Pick, vec![block()], &["b1"], true));
        let clear = AmbiguityVerdict {
            ambiguous: false,
            explanation: "x".into(),
            clarifying_question: String::new(),
        };
        assert!(matches!(
            simulate_user_answer(&t, &s, &clear),
            Err(PipelineError::Precondition(_))
        ));
    }

    #[test]
    fn interactive_user_reads_one_line() {
        let (s, t) = (scene(), task(Template::Pick, vec![block()], &["b1"], true));
        let r = OracleReasoner::new(s.clone(), t.clone());
        let mut user = InteractiveUser::new(&b"the red one\nignored\n"[..], Vec::new());
        let tr = run_episode(&r, &mut user, &t, &s, None).unwrap();
        assert_eq!(tr.resolved, ["red block"]);
        let (_, shown) = user.into_inner();
        let shown = String::from_utf8(shown).unwrap();
        assert!(shown.contains("question: Which block do you mean?"));
    }

    #[test]
    fn transcripts_round_trip() {
        let (s, t) = (scene(), task(Template::Pick, vec![block()], &["b2"], true));
        let tr = run_episode(
            &OracleReasoner::new(s.clone(), t.clone()),
            &mut SimulatedUser,
            &t,
            &s,
            None,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_transcripts(&path, &[tr.clone(), tr.clone()]).unwrap();
        assert_eq!(read_transcripts(&path).unwrap(), [tr.clone(), tr]);
    }
}
