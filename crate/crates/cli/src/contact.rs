use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use graspkit_core::contact::normalize_thermal;
use graspkit_core::handmodel::{HandProxy, ProxyConfig};
use graspkit_core::heuristic::{calibrate_corpus, psi, predict, Calibration, PsiField, DEFAULT_CALIBRATION_SAMPLES, DEFAULT_D_MAX};
use graspkit_core::metrics::{
    joint_accuracy_many, penetration_stats, proxy_surface_samples, rebalanced_auc, EvalSummary, PENETRATION_SPACING,
};
use graspkit_core::HandSkeleton;

use crate::config::{resolve, Overrides};
use crate::formats::{mesh_ply, ply_contact, ply_mesh, read_hands, GraspDir, CONTACT_FIELD};
use crate::run::{usage, Run};
use crate::Common;

#[derive(Args, Debug)]
pub struct NormalizeArgs {
    #[command(flatten)]
    common: Common,
    /// PLY with a raw per-vertex scalar.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Name of the raw scalar property.
    #[arg(long)]
    field: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct NormalizeConfig {
    field: String,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        Self { field: "thermal".into() }
    }
}

/// Writes `contact.ply`: the input with a `contact` scalar added.
pub fn normalize(a: NormalizeArgs) -> Result<()> {
    let mut run = Run::with_out("contact-normalize", a.common.out.as_deref())?;
    if a.common.seed.is_some() {
        return usage("contact-normalize is deterministic and takes no --seed");
    }
    let mut o = Overrides::default();
    o.opt("field", a.field);
    let (config, echoed): (NormalizeConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    let ply = run.read_ply(&a.input)?;
    let raw = ply
        .scalars
        .get(&config.field)
        .with_context(|| format!("{} has no per-vertex '{}' property", a.input.display(), config.field))?;
    let contact = normalize_thermal(raw).with_context(|| format!("normalizing '{}' of {}", config.field, a.input.display()))?;
    let out = ply.clone().with_scalar(CONTACT_FIELD, contact.into_values());
    run.write_ply("contact.ply", &out)?;
    run.finish(&echoed)
}

#[derive(Args, Debug)]
pub struct HeuristicArgs {
    #[command(flatten)]
    common: Common,
    /// Grasp directory to predict for.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// hands.json to use instead of the directory's own (e.g. reconstructed joints).
    #[arg(long, value_name = "PATH")]
    hands: Option<PathBuf>,
    /// Grasp directories with measured contact to calibrate on; identity calibration if absent.
    #[arg(long, value_name = "DIR", num_args = 1..)]
    calibrate: Vec<PathBuf>,
    /// Proximity cutoff, meters.
    #[arg(long)]
    d_max: Option<f64>,
    /// Calibration sample count.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct HeuristicConfig {
    d_max: f64,
    samples: usize,
    seed: u64,
    proxy: ProxyConfig,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            d_max: DEFAULT_D_MAX,
            samples: DEFAULT_CALIBRATION_SAMPLES,
            seed: 0,
            proxy: ProxyConfig::default(),
        }
    }
}

fn proxies(hands: &[HandSkeleton], config: &ProxyConfig) -> Result<Vec<HandProxy>> {
    Ok(hands
        .iter()
        .map(|h| HandProxy::from_skeleton(h, config))
        .collect::<Result<Vec<_>, _>>()?)
}

fn psi_of(g: &GraspDir, config: &HeuristicConfig) -> Result<PsiField> {
    Ok(psi(&g.points(), &proxies(&g.hands, &config.proxy)?, config.d_max)?)
}

/// Writes `contact.ply` (prediction plus raw `psi`) and `calibration.json`.
pub fn heuristic(a: HeuristicArgs) -> Result<()> {
    let mut run = Run::with_out("heuristic", a.common.out.as_deref())?;
    let mut o = Overrides::default();
    o.opt("seed", a.common.seed).opt("d_max", a.d_max).opt("samples", a.samples);
    let (config, echoed): (HeuristicConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;

    let calibration = if a.calibrate.is_empty() {
        Calibration::identity()
    } else {
        let mut fields = Vec::new();
        for dir in &a.calibrate {
            let g = GraspDir::load(&mut run, dir, None)?;
            let field = psi_of(&g, &config)?;
            fields.push((field, g.contact()?.clone()));
        }
        let pairs: Vec<_> = fields.iter().map(|(f, c)| (f, c)).collect();
        calibrate_corpus(&pairs, config.samples, config.seed)?
    };
    let g = GraspDir::load(&mut run, &a.input, a.hands.as_deref())?;
    let field = psi_of(&g, &config)?;
    let pred = predict(&field, &calibration);
    run.write_ply(
        "contact.ply",
        &mesh_ply(&g.mesh, &[(CONTACT_FIELD, pred.values()), ("psi", &field.values)]),
    )?;
    run.write_json("calibration.json", &calibration)?;
    run.finish(&echoed)
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Predicted contact (PLY with a per-vertex scalar).
    #[arg(long, value_name = "PATH", requires = "gt")]
    pred: Option<PathBuf>,
    /// Ground-truth contact on the same vertices.
    #[arg(long, value_name = "PATH", requires = "pred")]
    gt: Option<PathBuf>,
    /// Predicted hands.json.
    #[arg(long, value_name = "PATH")]
    pred_hands: Option<PathBuf>,
    /// Ground-truth hands.json; joints are compared per handedness.
    #[arg(long, value_name = "PATH", requires = "pred_hands")]
    gt_hands: Option<PathBuf>,
    /// Object mesh for penetration of the predicted hands.
    #[arg(long, value_name = "PATH", requires = "pred_hands")]
    object: Option<PathBuf>,
    /// Scalar property holding contact in both PLY files.
    #[arg(long)]
    field: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalConfig {
    field: String,
    penetration_spacing: f64,
    proxy: ProxyConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            field: CONTACT_FIELD.into(),
            penetration_spacing: PENETRATION_SPACING,
            proxy: ProxyConfig::default(),
        }
    }
}

/// Prints the summary as JSON; with `--out` also writes `eval.json` and `auc.csv`.
pub fn eval(a: EvalArgs) -> Result<()> {
    let mut run = Run::new("eval", a.common.out.as_deref())?;
    if a.common.seed.is_some() {
        return usage("eval is deterministic and takes no --seed");
    }
    if a.pred.is_none() && a.gt_hands.is_none() && a.object.is_none() {
        return usage("eval needs --pred/--gt, --pred-hands/--gt-hands or --pred-hands/--object");
    }
    let mut o = Overrides::default();
    o.opt("field", a.field);
    let (config, echoed): (EvalConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    let mut summary = EvalSummary::default();
    let mut curve = None;

    if let (Some(p), Some(g)) = (&a.pred, &a.gt) {
        let pred = ply_contact(&run.read_ply(p)?, &config.field, p)?;
        let gt = ply_contact(&run.read_ply(g)?, &config.field, g)?;
        let report = rebalanced_auc(&pred, &gt).with_context(|| format!("scoring {} against {}", p.display(), g.display()))?;
        summary.auc = Some(report.auc);
        curve = Some(report.to_csv());
    }
    let pred_hands = match &a.pred_hands {
        Some(p) => Some(read_hands(&mut run, p)?),
        None => None,
    };
    if let (Some(pred), Some(path)) = (&pred_hands, &a.gt_hands) {
        let gt = read_hands(&mut run, path)?;
        let mut pairs = Vec::new();
        for p in pred {
            let g = gt
                .iter()
                .find(|g| g.handedness == p.handedness)
                .with_context(|| format!("{} has no {:?} hand", path.display(), p.handedness))?;
            pairs.push((&p.joints()[..], &g.joints()[..]));
        }
        let acc = joint_accuracy_many(&pairs)?;
        summary.mean_err_mm = Some(acc.mean_error_mm);
        summary.pck_auc = Some(acc.pck_auc);
    }
    if let (Some(pred), Some(path)) = (&pred_hands, &a.object) {
        let mesh = ply_mesh(&run.read_ply(path)?, path)?;
        let samples = proxy_surface_samples(&proxies(pred, &config.proxy)?, config.penetration_spacing);
        summary.penetration = Some(penetration_stats(&mesh, &samples)?);
    }

    println!("{}", serde_json::to_string_pretty(&summary)?);
    if run.has_out() {
        run.write_json("eval.json", &summary)?;
        if let Some(csv) = curve {
            run.write("auc.csv", csv.as_bytes())?;
        }
    }
    run.finish(&echoed)
}
