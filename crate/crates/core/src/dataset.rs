//! Balanced ambiguous/unambiguous image-task dataset generation and its
//! on-disk layout:
//!
//! ```text
//! manifest.json
//! scenes.jsonl        one scene per line
//! tasks.jsonl         one task per line
//! images/<scene_id>.png
//! ```
//!
//! The manifest checksum is the hex SHA-256 of `scenes.jsonl` followed by
//! `tasks.jsonl`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::seed::derive;
use crate::world::{
    ambiguity_label, distinguishing_refinement, match_expression, render_png, sample_scene, Grid,
    ReferringExpression, Scene, SceneObject, Split, TaskInstance, Template, WorldError,
    DEFAULT_OBJECTS,
};

pub const FORMAT_VERSION: u32 = 1;
/// Rejection-sampling attempts per task slot.
pub const ATTEMPTS_PER_SLOT: usize = 200;
/// Scene re-samples before giving up.
pub const SCENE_RESAMPLES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("scene {0} could not yield the required task mix")]
    GenerationExhausted(String),
    #[error("checksum mismatch: manifest says {expected}, files hash to {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_scenes: usize,
    pub tasks_per_scene: usize,
    pub ambiguous_fraction: f64,
    pub split_fraction: f64,
    pub master_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_scenes: 40,
            tasks_per_scene: 20,
            ambiguous_fraction: 0.5,
            split_fraction: 0.5,
            master_seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn with_seed(master_seed: u64) -> Self {
        DatasetConfig {
            master_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_scenes == 0 || self.tasks_per_scene == 0 {
            return Err(DatasetError::InvalidConfig(
                "scene and task counts must be positive".into(),
            ));
        }
        for (name, f) in [
            ("ambiguous_fraction", self.ambiguous_fraction),
            ("split_fraction", self.split_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(DatasetError::InvalidConfig(format!(
                    "{name} must lie in (0, 1)"
                )));
            }
        }
        Ok(())
    }

    /// Whether slot `k` of a scene targets an ambiguous task. Spreads the
    /// ambiguous slots evenly; with fraction 0.5 the targets alternate.
    pub fn slot_is_ambiguous(&self, k: usize) -> bool {
        let f = self.ambiguous_fraction;
        ((k + 1) as f64 * f).floor() > (k as f64 * f).floor()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: DatasetConfig,
    pub n_scenes: usize,
    pub n_tasks: usize,
    pub n_ambiguous: usize,
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scenes: Vec<Scene>,
    pub tasks: Vec<TaskInstance>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn scene(&self, scene_id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.scene_id == scene_id)
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskInstance> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &TaskInstance> {
        self.tasks.iter().filter(move |t| t.split == split)
    }

    /// Re-derives every task's label from its stored scene.
    pub fn verify_labels(&self) -> Result<(), DatasetError> {
        for task in &self.tasks {
            let scene = self.scene(&task.scene_id).ok_or_else(|| {
                DatasetError::Inconsistent(format!("task {} has no scene", task.task_id))
            })?;
            task.validate(scene)?;
        }
        Ok(())
    }
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>, serde_json::Error> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn checksum(scenes_jsonl: &[u8], tasks_jsonl: &[u8]) -> String {
    hex::encode(
        Sha256::new()
            .chain_update(scenes_jsonl)
            .chain_update(tasks_jsonl)
            .finalize(),
    )
}

pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset, DatasetError> {
    config.validate()?;
    let per_scene: Vec<(Scene, Vec<TaskInstance>)> = (0..config.n_scenes)
        .into_par_iter()
        .map(|i| generate_scene(config, i))
        .collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..config.n_scenes).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(
        config.master_seed,
        "split",
    )));
    let n_train = (config.n_scenes as f64 * config.split_fraction).ceil() as usize;
    let mut split_of = vec![Split::Test; config.n_scenes];
    for &i in &order[..n_train] {
        split_of[i] = Split::Train;
    }

    let mut scenes = Vec::with_capacity(config.n_scenes);
    let mut tasks = Vec::with_capacity(config.n_scenes * config.tasks_per_scene);
    for (i, (scene, scene_tasks)) in per_scene.into_iter().enumerate() {
        scenes.push(scene);
        tasks.extend(scene_tasks.into_iter().map(|t| TaskInstance {
            split: split_of[i],
            ..t
        }));
    }
    let sum = checksum(&to_jsonl(&scenes)?, &to_jsonl(&tasks)?);
    let manifest = Manifest {
        version: FORMAT_VERSION,
        config: config.clone(),
        n_scenes: scenes.len(),
        n_tasks: tasks.len(),
        n_ambiguous: tasks.iter().filter(|t| t.ambiguous).count(),
        checksum: sum,
    };
    Ok(Dataset {
        scenes,
        tasks,
        manifest,
    })
}

fn generate_scene(
    config: &DatasetConfig,
    index: usize,
) -> Result<(Scene, Vec<TaskInstance>), DatasetError> {
    let scene_id = format!("scene-{index:03}");
    let base_seed = derive(config.master_seed, &scene_id);
    for attempt in 0..=SCENE_RESAMPLES {
        let seed = if attempt == 0 {
            base_seed
        } else {
            derive(base_seed, &format!("resample-{attempt}"))
        };
        let scene = sample_scene(&scene_id, Grid::default(), DEFAULT_OBJECTS, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "tasks"));
        let tasks: Option<Vec<TaskInstance>> = (0..config.tasks_per_scene)
            .map(|k| {
                let want = config.slot_is_ambiguous(k);
                (0..ATTEMPTS_PER_SLOT).find_map(|_| {
                    propose_task(&scene, &mut rng, want, &format!("{scene_id}-t{k:02}"))
                })
            })
            .collect();
        if let Some(tasks) = tasks {
            return Ok((scene, tasks));
        }
    }
    Err(DatasetError::GenerationExhausted(scene_id))
}

/// One rejection-sampling proposal. Accepted tasks have distinct intended
/// objects and at most one ambiguous referent, which a single color or
/// ordinal can narrow.
fn propose_task(
    scene: &Scene,
    rng: &mut ChaCha8Rng,
    want_ambiguous: bool,
    task_id: &str,
) -> Option<TaskInstance> {
    let template = Template::ALL[rng.random_range(0..Template::ALL.len())];
    let mut referents = Vec::with_capacity(2);
    let mut intended: Vec<String> = Vec::with_capacity(2);
    for slot in template.slot_categories() {
        let candidates: Vec<&SceneObject> = scene
            .objects
            .iter()
            .filter(|o| slot.is_none_or(|c| c == o.category))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let target = candidates[rng.random_range(0..candidates.len())];
        let mut expr = ReferringExpression::new(target.category);
        if rng.random_bool(0.5) {
            expr = expr.with_color(target.color);
        }
        if intended.contains(&target.id) {
            return None;
        }
        referents.push(expr);
        intended.push(target.id.clone());
    }
    let ambiguous: Vec<usize> = (0..referents.len())
        .filter(|&i| match_expression(&referents[i], scene).len() >= 2)
        .collect();
    if ambiguous.len() > 1 || ambiguous.is_empty() == want_ambiguous {
        return None;
    }
    // Some middle objects have no selecting ordinal; a user could not clarify them.
    if let Some(&i) = ambiguous.first() {
        distinguishing_refinement(&referents[i], scene, &intended[i])?;
    }
    let task = TaskInstance {
        task_id: task_id.to_string(),
        scene_id: scene.scene_id.clone(),
        template,
        text: template.realize(&referents),
        referents,
        intended,
        ambiguous: want_ambiguous,
        split: Split::Test,
    };
    debug_assert_eq!(ambiguity_label(&task, scene).ok(), Some(want_ambiguous));
    Some(task)
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir.join("images"))?;
    let scenes = to_jsonl(&ds.scenes)?;
    let tasks = to_jsonl(&ds.tasks)?;
    fs::write(dir.join("scenes.jsonl"), &scenes)?;
    fs::write(dir.join("tasks.jsonl"), &tasks)?;
    let manifest = Manifest {
        checksum: checksum(&scenes, &tasks),
        ..ds.manifest.clone()
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    for scene in &ds.scenes {
        fs::write(
            dir.join("images").join(format!("{}.png", scene.scene_id)),
            render_png(scene)?,
        )?;
    }
    Ok(())
}

fn read_required(path: PathBuf) -> Result<Vec<u8>, DatasetError> {
    fs::read(&path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => DatasetError::MissingFile(path),
        _ => DatasetError::Io(e),
    })
}

fn from_jsonl<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Vec<T>, DatasetError> {
    bytes
        .split(|b| *b == b'\n')
        .filter(|line| !line.is_empty())
        .map(|line| serde_json::from_slice(line).map_err(DatasetError::from))
        .collect()
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest: Manifest = serde_json::from_slice(&read_required(dir.join("manifest.json"))?)?;
    let scenes_bytes = read_required(dir.join("scenes.jsonl"))?;
    let tasks_bytes = read_required(dir.join("tasks.jsonl"))?;
    let actual = checksum(&scenes_bytes, &tasks_bytes);
    if actual != manifest.checksum {
        return Err(DatasetError::ChecksumMismatch {
            expected: manifest.checksum,
            actual,
        });
    }
    let scenes: Vec<Scene> = from_jsonl(&scenes_bytes)?;
    let tasks: Vec<TaskInstance> = from_jsonl(&tasks_bytes)?;
    if scenes.len() != manifest.n_scenes || tasks.len() != manifest.n_tasks {
        return Err(DatasetError::Inconsistent(
            "record counts differ from the manifest".into(),
        ));
    }
    Ok(Dataset {
        scenes,
        tasks,
        manifest,
    })
}

/// Image path of a scene inside a dataset directory.
pub fn image_path(dir: &Path, scene_id: &str) -> PathBuf {
    dir.join("images").join(format!("{scene_id}.png"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            n_scenes: 6,
            tasks_per_scene: 8,
            master_seed: 3,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn slot_targets_alternate_at_half() {
        let c = DatasetConfig::default();
        let pattern: Vec<bool> = (0..6).map(|k| c.slot_is_ambiguous(k)).collect();
        assert_eq!(pattern, [false, true, false, true, false, true]);
        let quarter = DatasetConfig {
            ambiguous_fraction: 0.25,
            ..c
        };
        assert_eq!((0..20).filter(|&k| quarter.slot_is_ambiguous(k)).count(), 5);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(DatasetConfig {
            ambiguous_fraction: 1.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(DatasetConfig {
            split_fraction: 0.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(DatasetConfig {
            n_scenes: 0,
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn small_dataset_shape() {
        let ds = generate_dataset(&small()).unwrap();
        assert_eq!(ds.scenes.len(), 6);
        assert_eq!(ds.tasks.len(), 48);
        assert_eq!(ds.manifest.n_ambiguous, 24);
        ds.verify_labels().unwrap();
        assert_eq!(ds.split(Split::Train).count(), 24);
        for t in &ds.tasks {
            assert!(t.referents.iter().all(|r| r.ordinal.is_none()));
        }
    }

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&small()).unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
        ds.verify_labels().unwrap();

        let path = dir.path().join("tasks.jsonl");
        let mut bytes = fs::read(&path).unwrap();
        bytes[10] ^= 0x01;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(DatasetError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(
            matches!(read_dataset(dir.path()), Err(DatasetError::MissingFile(p)) if p.ends_with("manifest.json"))
        );
    }
}
