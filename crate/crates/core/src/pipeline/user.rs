use std::io::{BufRead, Write};

use super::{AmbiguityVerdict, PipelineError};
use crate::world::{distinguishing_refinement, match_expression, Scene, TaskInstance};

/// Whoever answers clarifying questions.
pub trait User {
    fn answer(
        &mut self,
        grounded: &[String],
        verdict: &AmbiguityVerdict,
        task: &TaskInstance,
        scene: &Scene,
    ) -> Result<String, PipelineError>;
}

/// Answers from ground truth; never reads the question.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimulatedUser;

impl User for SimulatedUser {
    fn answer(
        &mut self,
        _grounded: &[String],
        verdict: &AmbiguityVerdict,
        task: &TaskInstance,
        scene: &Scene,
    ) -> Result<String, PipelineError> {
        simulate_user_answer(task, scene, verdict)
    }
}

/// Minimal phrase singling out the intended object of the first ambiguous
/// referent, or of the first referent when none is ambiguous.
pub fn simulate_user_answer(
    task: &TaskInstance,
    scene: &Scene,
    verdict: &AmbiguityVerdict,
) -> Result<String, PipelineError> {
    if !verdict.ambiguous {
        return Err(PipelineError::Precondition(
            "the user is only asked about ambiguous tasks".into(),
        ));
    }
    let slot = task
        .referents
        .iter()
        .position(|e| match_expression(e, scene).len() >= 2)
        .unwrap_or(0);
    let (expr, intended) = task
        .referents
        .get(slot)
        .zip(task.intended.get(slot))
        .ok_or_else(|| {
            PipelineError::Precondition(format!("task {} has no referents", task.task_id))
        })?;
    distinguishing_refinement(expr, scene, intended)
        .map(|r| r.phrase())
        .ok_or_else(|| PipelineError::NoDistinguishingAttribute(intended.clone()))
}

/// Prints the exchange to `output` and reads one answer line from `input`.
pub struct InteractiveUser<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> InteractiveUser<R, W> {
    pub fn new(input: R, output: W) -> Self {
        InteractiveUser { input, output }
    }

    pub fn into_inner(self) -> (R, W) {
        (self.input, self.output)
    }
}

impl<R: BufRead, W: Write> User for InteractiveUser<R, W> {
    fn answer(
        &mut self,
        grounded: &[String],
        verdict: &AmbiguityVerdict,
        _task: &TaskInstance,
        _scene: &Scene,
    ) -> Result<String, PipelineError> {
        let io = |e: std::io::Error| PipelineError::UserInput(e.to_string());
        writeln!(self.output, "grounded: {}", grounded.join(", ")).map_err(io)?;
        writeln!(
            self.output,
            "ambiguous: {} ({})",
            verdict.ambiguous, verdict.explanation
        )
        .map_err(io)?;
        writeln!(self.output, "question: {}", verdict.clarifying_question).map_err(io)?;
        write!(self.output, "> ").map_err(io)?;
        self.output.flush().map_err(io)?;
        let mut line = String::new();
        if self.input.read_line(&mut line).map_err(io)? == 0 {
            return Err(PipelineError::UserInput(
                "no answer before end of input".into(),
            ));
        }
        Ok(line.trim().to_string())
    }
}
