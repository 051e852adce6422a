//! Benchmark runner reproducing the evaluation protocol: incremental
//! observation batches, top-k pose recovery per attempt, and the
//! 15 degree / 0.5 m success test.

use std::collections::HashSet;
use std::io::{self, Write};
use std::time::Instant;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use objloc_core::{
    estimate_pose, pose_error, AlignmentMode, AssociationPool, ClusterParams, ObjectId, Pose,
};

use crate::dynamic::{make_dynamic, DynamicInfo, DynamicSpec};
use crate::error::{Result, SimError};
use crate::observe::{derive_observation, ObservationSpec};
use crate::scene::{generate_scene, SceneSpec};

/// Success thresholds for a relocalization attempt.
pub const SUCCESS_ROT_DEG: f64 = 15.0;
pub const SUCCESS_TRANS_M: f64 = 0.5;

pub fn is_localization_success(rot_error_deg: f64, trans_error_m: f64) -> bool {
    rot_error_deg <= SUCCESS_ROT_DEG && trans_error_m <= SUCCESS_TRANS_M
}

/// Full benchmark configuration; the single JSON document the CLI consumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scene: SceneSpec,
    pub observation: ObservationSpec,
    #[serde(default)]
    pub dynamic: Option<DynamicSpec>,
    #[serde(default)]
    pub params: ClusterParams,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_n_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub mode: AlignmentMode,
    /// Draw a fresh ground-truth pose per trial (yaw-only when the
    /// alignment mode is yaw-only). When false every trial reuses
    /// `observation.gt_pose`.
    #[serde(default = "default_true")]
    pub randomize_gt_pose: bool,
}

fn default_top_k() -> usize {
    10
}

fn default_n_trials() -> usize {
    100
}

fn default_true() -> bool {
    true
}

/// Outcome of one relocalization attempt within a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    /// 1-based batch index the attempt ran after.
    pub attempt: usize,
    pub objects_observed: usize,
    /// Some top-k set's recovered pose passed the success thresholds.
    pub success: bool,
    /// Errors of the first passing set, else of the best-ranked set with a
    /// recoverable pose; NaN when no pose could be computed.
    pub rot_error_deg: f64,
    pub trans_error_m: f64,
    /// 1-based pool rank of the first all-correct set large enough for pose
    /// recovery, if any.
    pub top_rank_of_correct: Option<usize>,
    pub pool_size: usize,
    pub wall_time_s: f64,
}

pub const CSV_HEADER: &str =
    "trial,attempt,objects_observed,success,rot_err_deg,trans_err_m,top_rank_of_correct,pool_size,wall_time_s";

impl TrialResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.attempt,
            self.objects_observed,
            self.success,
            self.rot_error_deg,
            self.trans_error_m,
            self.top_rank_of_correct
                .map(|r| r.to_string())
                .unwrap_or_default(),
            self.pool_size,
            self.wall_time_s,
        )
    }
}

pub fn write_csv<W: Write>(out: &mut W, results: &[TrialResult]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in results {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn results_to_csv(results: &[TrialResult]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, results).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv is ascii")
}

/// SplitMix64; derives stable per-trial seeds from a base seed.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E3779B97F4A7C15)
        .wrapping_add(salt.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn random_pose(rng: &mut ChaCha8Rng, mode: AlignmentMode) -> Pose {
    let translation = Vector3::new(
        rng.random_range(-8.0..8.0),
        rng.random_range(-8.0..8.0),
        rng.random_range(-2.0..2.0),
    );
    match mode {
        AlignmentMode::YawOnly => {
            Pose::from_yaw(rng.random_range(0.0..std::f64::consts::TAU), translation)
        }
        AlignmentMode::Full6Dof => {
            let q = UnitQuaternion::from_quaternion(Quaternion::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ));
            let rotation: Matrix3<f64> = q.to_rotation_matrix().into_inner();
            Pose::new(rotation, translation).expect("unit quaternion gives a rotation")
        }
    }
}

/// Runs `n_trials` independent relocalization trials against one generated
/// scene. Each trial feeds the observation batches through `update`, and
/// after every batch recovers a pose from each of the top-k sets, counting
/// success if any passes the 15 degree / 0.5 m test. Trials run in
/// parallel; results are ordered by (trial, attempt) and deterministic
/// under the seeds (wall-clock fields aside).
pub fn run_trials(config: &BenchConfig) -> Result<Vec<TrialResult>> {
    config.scene.validate()?;
    config.observation.validate()?;
    config.params.validate().map_err(SimError::Core)?;
    if config.n_trials == 0 || config.top_k == 0 {
        return Err(SimError::InvalidSpec {
            what: "bench config",
            why: "n_trials and top_k must be positive".into(),
        });
    }

    let (scene_map, _meta) = generate_scene(&config.scene)?;
    let (engine_map, dyn_info) = match &config.dynamic {
        Some(spec) => make_dynamic(&scene_map, spec)?,
        None => (scene_map.clone(), DynamicInfo::default()),
    };
    let moved: HashSet<ObjectId> = dyn_info.moved.iter().copied().collect();

    let per_trial: Vec<Vec<TrialResult>> = (0..config.n_trials)
        .into_par_iter()
        .map(|trial| run_single_trial(config, trial, &scene_map, &engine_map, &moved))
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

fn run_single_trial(
    config: &BenchConfig,
    trial: usize,
    scene_map: &objloc_core::ObjectMap,
    engine_map: &objloc_core::ObjectMap,
    moved: &HashSet<ObjectId>,
) -> Result<Vec<TrialResult>> {
    let mut pose_rng =
        ChaCha8Rng::seed_from_u64(mix_seed(config.observation.seed, 0xF0CA + trial as u64));
    let gt_pose = if config.randomize_gt_pose {
        random_pose(&mut pose_rng, config.mode)
    } else {
        config.observation.gt_pose.clone()
    };
    let obs = ObservationSpec {
        seed: mix_seed(config.observation.seed, trial as u64),
        gt_pose: gt_pose.clone(),
        ..config.observation.clone()
    };

    let min_pairs = config.mode.min_correspondences();
    let mut pool = AssociationPool::new(config.params.clone()).map_err(SimError::Core)?;
    let mut results = Vec::with_capacity(obs.batch_schedule.len());

    for batch in 1..=obs.batch_schedule.len() {
        let observation = derive_observation(scene_map, &obs, batch)?;

        let started = Instant::now();
        pool.update(engine_map, &observation.local, &observation.new_ids)
            .map_err(SimError::Core)?;

        let mut success = false;
        let mut rot_error_deg = f64::NAN;
        let mut trans_error_m = f64::NAN;
        let mut have_errors = false;
        for set in pool.top_k(config.top_k) {
            if set.len() < min_pairs {
                continue;
            }
            let Ok(estimate) = estimate_pose(set, engine_map, &observation.local, config.mode)
            else {
                continue;
            };
            let (rot, trans) = pose_error(&estimate.pose, &gt_pose);
            if !have_errors {
                rot_error_deg = rot;
                trans_error_m = trans;
                have_errors = true;
            }
            if is_localization_success(rot, trans) {
                success = true;
                rot_error_deg = rot;
                trans_error_m = trans;
                break;
            }
        }
        let wall_time_s = started.elapsed().as_secs_f64();

        let top_rank_of_correct = pool.sets().iter().enumerate().find_map(|(i, set)| {
            let all_correct = set.len() >= min_pairs
                && set.pairs().iter().all(|p| {
                    observation.truth.get(&p.beta) == Some(&p.alpha) && !moved.contains(&p.alpha)
                });
            all_correct.then_some(i + 1)
        });

        results.push(TrialResult {
            trial,
            attempt: batch,
            objects_observed: observation.local.len(),
            success,
            rot_error_deg,
            trans_error_m,
            top_rank_of_correct,
            pool_size: pool.sets().len(),
            wall_time_s,
        });
    }
    Ok(results)
}
