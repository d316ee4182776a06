use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use graspkit_core::handmodel::{fit_hand_with, FitConfig, KinematicHand, JOINT_COUNT};
use graspkit_core::reconstruct::{reconstruct_all, ReconstructConfig};
use graspkit_core::synth::{generate, sweep as run_sweep, sweep_csv, SweepAxis, SynthScenario};
use graspkit_core::{GraspObservation, Handedness, RigidTransform, ReconstructionResult};

use crate::config::{resolve, Overrides};
use crate::formats::{
    mesh_ply, parse_list, read_hands, skeletons_json, RecordJson, CONTACT_FIELD, HANDS_JSON, OBJECT_PLY,
    OBSERVATION_JSON, RECORD_JSON,
};
use crate::run::{usage, Run};
use crate::Common;

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    cameras: Option<usize>,
    /// 1 (right hand) or 2 (both hands).
    #[arg(long)]
    hands: Option<usize>,
    /// Gaussian detection noise, pixels.
    #[arg(long)]
    pixel_sigma: Option<f64>,
    /// Fraction of frames with a corrupted object pose.
    #[arg(long)]
    corrupted_poses: Option<f64>,
    /// Fraction of frames with corrupted detections.
    #[arg(long)]
    corrupted_detections: Option<f64>,
}

/// Ground truth that no downstream stage reads as input.
#[derive(Serialize)]
struct Truth<'a> {
    hands: &'a [KinematicHand],
    touching_tips: &'a [Vec<usize>],
    true_poses: &'a [RigidTransform],
    corrupted_poses: &'a [usize],
    corrupted_detections: &'a [usize],
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut run = Run::with_out("synth", a.common.out.as_deref())?;
    let mut o = Overrides::default();
    o.opt("seed", a.common.seed)
        .opt("frames", a.frames)
        .opt("rig.cameras", a.cameras)
        .opt("hands", a.hands)
        .opt("noise.pixel_sigma", a.pixel_sigma)
        .opt("noise.corrupted_pose_fraction", a.corrupted_poses)
        .opt("noise.corrupted_detection_fraction", a.corrupted_detections);
    let (scenario, echoed): (SynthScenario, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    let g = generate(&scenario)?;
    let info = g.object_info();
    run.write_ply(OBJECT_PLY, &mesh_ply(&g.mesh, &[(CONTACT_FIELD, g.contact.values())]))?;
    run.write_json(HANDS_JSON, &skeletons_json(&g.skeletons))?;
    run.write_json(
        RECORD_JSON,
        &RecordJson {
            object: scenario.object.name().to_string(),
            intent: scenario.intent,
            participant: scenario.participant,
            symmetry_axis: info.symmetry_axis.map(|v| [v.x, v.y, v.z]),
        },
    )?;
    run.write_json(OBSERVATION_JSON, &g.observation)?;
    run.write_json(
        "truth.json",
        &Truth {
            hands: &g.hands,
            touching_tips: &g.touching_tips,
            true_poses: &g.true_poses,
            corrupted_poses: &g.corrupted_poses,
            corrupted_detections: &g.corrupted_detections,
        },
    )?;
    run.finish(&echoed)
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[command(flatten)]
    common: Common,
    /// Grasp directory holding observation.json (and hands.json, if ground truth is known).
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Skip the second-pass PnP rescue of failed frames.
    #[arg(long)]
    no_rescue: bool,
    #[arg(long)]
    iterations: Option<usize>,
    /// Inlier threshold, pixels.
    #[arg(long)]
    inlier_px: Option<f64>,
}

#[derive(Serialize)]
struct HandError {
    hand: Handedness,
    mean_error_m: f64,
}

#[derive(Serialize)]
struct ReconstructOutput<'a> {
    results: &'a [ReconstructionResult],
    /// Only when the input directory has ground-truth hands.
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_error_m: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    per_hand: Vec<HandError>,
}

pub fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let mut run = Run::with_out("reconstruct", a.common.out.as_deref())?;
    let mut o = Overrides::default();
    o.opt("seed", a.common.seed)
        .opt("iterations", a.iterations)
        .opt("inlier_px", a.inlier_px);
    if a.no_rescue {
        o.set("rescue", false);
    }
    let (config, echoed): (ReconstructConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    let obs: GraspObservation = run.read_json(&a.input.join(OBSERVATION_JSON))?;
    let results = reconstruct_all(&obs, &config)?;

    let truth_path = a.input.join(HANDS_JSON);
    let mut per_hand = Vec::new();
    if truth_path.exists() {
        let truth = read_hands(&mut run, &truth_path)?;
        for r in &results {
            let Some(t) = truth.iter().find(|t| t.handedness == r.hand) else {
                continue;
            };
            let e = r.joints.iter().zip(t.joints()).map(|(p, q)| (p - q).norm()).sum::<f64>() / JOINT_COUNT as f64;
            per_hand.push(HandError {
                hand: r.hand,
                mean_error_m: e,
            });
        }
    }
    let mean_error_m =
        (!per_hand.is_empty()).then(|| per_hand.iter().map(|h| h.mean_error_m).sum::<f64>() / per_hand.len() as f64);
    let skeletons = results
        .iter()
        .map(|r| graspkit_core::HandSkeleton::new(r.hand, r.joints))
        .collect::<Result<Vec<_>, _>>()?;
    run.write_json(
        "result.json",
        &ReconstructOutput {
            results: &results,
            mean_error_m,
            per_hand,
        },
    )?;
    run.write_json(HANDS_JSON, &skeletons_json(&skeletons))?;
    run.finish(&echoed)
}

#[derive(Args, Debug)]
pub struct FitHandArgs {
    #[command(flatten)]
    common: Common,
    /// hands.json with the target skeletons.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Prior weight on parameters outside their anatomical bounds.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Serialize)]
struct FitOutput {
    hand: KinematicHand,
    residual_m: f64,
    mean_error_m: f64,
    joint_errors_m: Vec<f64>,
    iterations: usize,
}

pub fn fit_hand(a: FitHandArgs) -> Result<()> {
    let mut run = Run::with_out("fit-hand", a.common.out.as_deref())?;
    if a.common.seed.is_some() {
        return usage("fit-hand is deterministic and takes no --seed");
    }
    let mut o = Overrides::default();
    o.opt("sigma", a.sigma);
    let (config, echoed): (FitConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    let targets = read_hands(&mut run, &a.input)?;
    let mut fits = Vec::new();
    let mut skeletons = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        let fit = fit_hand_with(t, &config).with_context(|| format!("fitting hand {i}"))?;
        fits.push(FitOutput {
            residual_m: fit.residual(),
            mean_error_m: fit.mean_error(),
            joint_errors_m: fit.joint_errors.to_vec(),
            iterations: fit.trace.len(),
            hand: fit.hand,
        });
        skeletons.push(fit.joints);
    }
    run.write_json("fit.json", &fits)?;
    run.write_json(HANDS_JSON, &skeletons_json(&skeletons))?;
    run.finish(&echoed)
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// noise | outliers | cameras
    #[arg(long)]
    axis: Option<SweepAxis>,
    /// Comma-separated parameter values.
    #[arg(long)]
    values: Option<String>,
    /// Comma-separated scenario seeds.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepConfig {
    axis: SweepAxis,
    values: Vec<f64>,
    seeds: Vec<u64>,
    scenario: SynthScenario,
    reconstruct: ReconstructConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Noise,
            values: vec![0.0, 1.0, 2.0, 4.0],
            seeds: (0..5).collect(),
            scenario: SynthScenario::default(),
            reconstruct: ReconstructConfig::default(),
        }
    }
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let mut run = Run::with_out("sweep", a.common.out.as_deref())?;
    if a.common.seed.is_some() {
        return usage("sweep takes --seeds (scenario seeds), not --seed");
    }
    let mut o = Overrides::default();
    o.opt("axis", a.axis);
    if let Some(v) = &a.values {
        o.set("values", parse_list::<f64>(v).or_else(usage)?);
    }
    if let Some(s) = &a.seeds {
        o.set("seeds", parse_list::<u64>(s).or_else(usage)?);
    }
    let (config, echoed): (SweepConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    if config.values.is_empty() || config.seeds.is_empty() {
        return usage("a sweep needs at least one value and one seed");
    }
    let rows = run_sweep(&config.scenario, config.axis, &config.values, &config.seeds, &config.reconstruct);
    run.write("sweep.csv", sweep_csv(config.axis, &rows).as_bytes())?;
    run.write_json("sweep.json", &rows)?;
    run.finish(&echoed)
}
