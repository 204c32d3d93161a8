mod backend;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use ambres_core::dataset::{
    generate_dataset, image_path, read_dataset, write_dataset, DatasetConfig,
};
use ambres_core::decoder::{
    CompiledSchema, HttpBackend, ImageRef, MockBackend, PromptContext, SamplingPolicy,
};
use ambres_core::eval::{evaluate, noisy_wrapper, write_report, EvalOptions, ResolutionScope};
use ambres_core::fsm::Vocabulary;
use ambres_core::pipeline::{
    knowno_baseline, run_episode, write_transcripts, DecoderReasoner, FixedScores, InteractiveUser,
    OracleReasoner, PipelineError, Reasoner, ReasonerSchemas, SimulatedUser,
};
use ambres_core::scalar::softmax;
use ambres_core::schema::{ambiguity_schema, grounding_schema, parse_schema, SchemaNode};
use ambres_core::seed::derive;
use ambres_core::world::{render_png, Scene, Split, TaskInstance};
use ambres_core::Score;
use anyhow::{bail, Context};
use backend::BackendSpec;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "ambres",
    version,
    about = "Schema-constrained decoding and task ambiguity resolution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of scenes, tasks and images.
    Gen {
        #[arg(long, default_value_t = 40)]
        scenes: usize,
        #[arg(long, default_value_t = 20)]
        tasks_per_scene: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one scene JSON file to PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every task of a split and write a metrics report.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        backend: BackendSpec,
        #[arg(long, value_enum)]
        split: SplitArg,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the transcripts as JSONL.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Count resolution success over every task instead of ambiguous ones.
        #[arg(long)]
        resolution_all: bool,
    },
    /// Decode one output under a schema and print it.
    Decode {
        /// `grounding`, `ambiguity` or a schema file.
        #[arg(long)]
        schema: String,
        #[arg(long)]
        backend: BackendSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 512)]
        max_tokens: usize,
        /// Sample at this temperature instead of decoding greedily.
        #[arg(long)]
        temperature: Option<Score>,
        #[arg(long, default_value = "Describe the objects on the table.")]
        prompt: String,
    },
    /// Run one task with questions answered on the terminal.
    Interact {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        backend: BackendSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Multiple-choice ambiguity check over four scored options.
    Knowno {
        #[arg(long, num_args = 4, required = true)]
        options: Vec<String>,
        #[arg(long, num_args = 4, required = true, allow_negative_numbers = true)]
        scores: Vec<Score>,
        #[arg(long)]
        threshold: Score,
        #[arg(long, default_value = "")]
        task: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

fn echo_seed(seed: u64) {
    eprintln!("seed: {seed}");
}

fn reasoner_for(
    spec: &BackendSpec,
    seed: u64,
    scene: &Scene,
    task: &TaskInstance,
) -> Result<Box<dyn Reasoner>, PipelineError> {
    let vocab_len = ReasonerSchemas::shared().vocab().len();
    Ok(match spec {
        BackendSpec::Oracle => Box::new(OracleReasoner::new(scene.clone(), task.clone())),
        BackendSpec::Noisy(p) => Box::new(
            noisy_wrapper(OracleReasoner::new(scene.clone(), task.clone()), *p, seed)
                .map_err(|e| PipelineError::InvalidArgument(e.to_string()))?,
        ),
        BackendSpec::Mock(s) => {
            let backend = MockBackend::new(derive(s.unwrap_or(seed), &task.task_id), vocab_len);
            Box::new(DecoderReasoner::<Score, _>::new(
                backend,
                SamplingPolicy::Greedy,
            ))
        }
        BackendSpec::Http(url) => Box::new(DecoderReasoner::<Score, _>::new(
            HttpBackend::new(url, vocab_len),
            SamplingPolicy::Greedy,
        )),
    })
}

fn load_schema(name: &str) -> anyhow::Result<SchemaNode> {
    Ok(match name {
        "grounding" => grounding_schema(),
        "ambiguity" => ambiguity_schema(),
        path => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading schema {path}"))?;
            parse_schema(&text)?
        }
    })
}

fn gen(scenes: usize, tasks_per_scene: usize, seed: u64, out: &Path) -> anyhow::Result<()> {
    echo_seed(seed);
    let config = DatasetConfig {
        n_scenes: scenes,
        tasks_per_scene,
        master_seed: seed,
        ..DatasetConfig::default()
    };
    let ds = generate_dataset(&config)?;
    write_dataset(&ds, out)?;
    let m = &read_dataset(out)?.manifest;
    println!("scenes: {}", m.n_scenes);
    println!("tasks: {} ({} ambiguous)", m.n_tasks, m.n_ambiguous);
    println!("checksum: {}", m.checksum);
    Ok(())
}

fn render(scene: &Path, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(scene).with_context(|| format!("reading {}", scene.display()))?;
    let scene: Scene = serde_json::from_str(&text)?;
    scene.validate()?;
    echo_seed(scene.seed);
    fs::write(out, render_png(&scene)?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    dataset: &Path,
    spec: &BackendSpec,
    split: Split,
    jobs: usize,
    report: &Path,
    seed: u64,
    transcripts: Option<&Path>,
    resolution_all: bool,
) -> anyhow::Result<()> {
    echo_seed(seed);
    let ds = read_dataset(dataset)?;
    let factory = |scene: &Scene, task: &TaskInstance| reasoner_for(spec, seed, scene, task);
    let options = EvalOptions {
        condition: spec.to_string(),
        split: Some(split),
        jobs: jobs.max(1),
        scope: if resolution_all {
            ResolutionScope::AllTasks
        } else {
            ResolutionScope::AmbiguousOnly
        },
        image_dir: Some(dataset.to_path_buf()),
    };
    let (rep, ts) = evaluate(&ds, &factory, &SimulatedUser, &options)?;
    write_report(report, &rep)?;
    if let Some(path) = transcripts {
        write_transcripts(path, &ts)?;
    }
    print!("{}", rep.table());
    Ok(())
}

fn decode(
    schema: &str,
    spec: &BackendSpec,
    seed: u64,
    max_tokens: usize,
    temperature: Option<Score>,
    prompt: &str,
) -> anyhow::Result<()> {
    let seed = match spec {
        BackendSpec::Mock(Some(s)) => *s,
        _ => seed,
    };
    echo_seed(seed);
    let vocab = Arc::new(Vocabulary::json_default());
    let compiled = CompiledSchema::new(load_schema(schema)?, vocab.clone())?;
    let policy = match temperature {
        Some(t) => SamplingPolicy::Temperature {
            temperature: t,
            seed,
        },
        None => SamplingPolicy::Greedy,
    };
    let ctx = PromptContext::new(prompt)?;
    let out = match spec {
        BackendSpec::Mock(_) => compiled.decode(
            &MockBackend::new(seed, vocab.len()),
            policy,
            max_tokens,
            &ctx,
        )?,
        BackendSpec::Http(url) => compiled.decode(
            &HttpBackend::new(url, vocab.len()),
            policy,
            max_tokens,
            &ctx,
        )?,
        other => bail!("backend {other} needs a task; use mock or http for free decoding"),
    };
    if !compiled.accepts(&out.text) {
        bail!("output truncated at {max_tokens} tokens: {}", out.text);
    }
    println!("{}", out.text);
    Ok(())
}

fn interact(dataset: &Path, task_id: &str, spec: &BackendSpec, seed: u64) -> anyhow::Result<()> {
    echo_seed(seed);
    let ds = read_dataset(dataset)?;
    let task = ds
        .task(task_id)
        .with_context(|| format!("no task {task_id}"))?;
    let scene = ds
        .scene(&task.scene_id)
        .with_context(|| format!("no scene {}", task.scene_id))?;
    let reasoner = reasoner_for(spec, seed, scene, task)?;
    let image = ImageRef::Path(image_path(dataset, &scene.scene_id));
    println!("task: {}", task.text);
    let mut user = InteractiveUser::new(io::stdin().lock(), io::stdout());
    let tr = run_episode(&reasoner, &mut user, task, scene, Some(&image))?;
    if !tr.verdict.ambiguous {
        println!("grounded: {}", tr.grounded.join(", "));
        println!("ambiguous: false ({})", tr.verdict.explanation);
    }
    println!("resolved: {}", tr.resolved.join(", "));
    let points: Vec<String> = tr
        .points
        .iter()
        .map(|(x, y)| format!("({x}, {y})"))
        .collect();
    println!("points: {}", points.join(", "));
    for w in &tr.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn knowno(
    options: Vec<String>,
    scores: Vec<Score>,
    threshold: Score,
    task: &str,
) -> anyhow::Result<()> {
    echo_seed(0);
    let options: [String; 4] = options
        .try_into()
        .map_err(|_| anyhow::anyhow!("exactly four options are needed"))?;
    let scores: [Score; 4] = scores
        .try_into()
        .map_err(|_| anyhow::anyhow!("exactly four scores are needed"))?;
    let ambiguous = knowno_baseline(&FixedScores(scores), task, &options, threshold)?;
    for ((label, option), p) in ["A", "B", "C", "D"]
        .iter()
        .zip(&options)
        .zip(softmax(&scores))
    {
        println!("{label}) {option}: {p:.4}");
    }
    println!("ambiguous: {ambiguous}");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen {
            scenes,
            tasks_per_scene,
            seed,
            out,
        } => gen(scenes, tasks_per_scene, seed, &out),
        Command::Render { scene, out } => render(&scene, &out),
        Command::Eval {
            dataset,
            backend,
            split,
            jobs,
            report,
            seed,
            transcripts,
            resolution_all,
        } => eval(
            &dataset,
            &backend,
            split.into(),
            jobs,
            &report,
            seed,
            transcripts.as_deref(),
            resolution_all,
        ),
        Command::Decode {
            schema,
            backend,
            seed,
            max_tokens,
            temperature,
            prompt,
        } => decode(&schema, &backend, seed, max_tokens, temperature, &prompt),
        Command::Interact {
            dataset,
            task,
            backend,
            seed,
        } => interact(&dataset, &task, &backend, seed),
        Command::Knowno {
            options,
            scores,
            threshold,
            task,
        } => knowno(options, scores, threshold, &task),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
