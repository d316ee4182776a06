use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use graspkit_core::analysis::{
    active_areas, cluster_poses, group_spread, normalize_and_align, part_probability_csv, split, spread_csv,
    AnalysisError, AssociationConfig, AssociationLevel, Clustering, GraspAnalysis, GraspRecord, GraspSet, Intent,
    ObjectInfo, SplitKind, SymmetryAlignment,
};
use graspkit_core::geom::io::write_ply;
use graspkit_core::handmodel::{PALM_JOINTS, PART_COUNT};
use graspkit_core::Vec3;

use crate::config::{resolve, Overrides};
use crate::formats::{mesh_ply, GraspDir};
use crate::run::{usage, Run};
use crate::Common;

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Grasp directories (with contact and record.json).
    #[arg(long, value_name = "DIR", num_args = 1.., required = true)]
    data: Vec<PathBuf>,
    /// point | phalange
    #[arg(long)]
    level: Option<AssociationLevel>,
    /// object | participant; writes split.json.
    #[arg(long)]
    split: Option<SplitKind>,
    /// Average-linkage merge threshold for pose clustering (normalized meters).
    #[arg(long)]
    cluster_threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalyzeConfig {
    level: AssociationLevel,
    association: AssociationConfig,
    cluster_threshold: f64,
    split: Option<SplitKind>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            level: AssociationLevel::Phalange,
            association: AssociationConfig::default(),
            cluster_threshold: 0.05,
            split: None,
        }
    }
}

#[derive(Serialize)]
struct GraspSummary<'a> {
    dir: String,
    object: &'a str,
    intent: Intent,
    participant: u32,
    contacted_vertices: usize,
    fingertip_area_cm2: f64,
    whole_hand_area_cm2: f64,
    phalange_areas_cm2: Vec<f64>,
}

#[derive(Serialize)]
struct ClusterSummary {
    grasps: Vec<usize>,
    labels: Vec<usize>,
    clusters: usize,
    mean_intra_distance: f64,
}

#[derive(Serialize)]
struct SplitSummary<'a> {
    kind: SplitKind,
    train: Vec<&'a str>,
    test: Vec<&'a str>,
}

/// Key of a mesh by content, so grasps of one object share an entry only when their
/// geometry agrees.
fn mesh_key(object: &str, g: &GraspDir) -> Result<String> {
    let mut bytes = Vec::new();
    write_ply(&mut bytes, &graspkit_core::geom::io::PlyData::from_mesh(&g.mesh))?;
    Ok(format!("{object}-{}", &hex::encode(Sha256::digest(&bytes))[..12]))
}

fn load_set(run: &mut Run, dirs: &[PathBuf]) -> Result<GraspSet> {
    let mut objects = BTreeMap::new();
    let mut grasps = Vec::new();
    for dir in dirs {
        let g = GraspDir::load(run, dir, None)?;
        let rec = g.record(run)?;
        let key = mesh_key(&rec.object, &g)?;
        let contact = g.contact()?.clone();
        objects.entry(key.clone()).or_insert_with(|| ObjectInfo {
            mesh: g.mesh.clone(),
            symmetry_axis: rec.symmetry_axis.map(Vec3::from),
        });
        grasps.push(GraspRecord {
            object: rec.object,
            intent: rec.intent,
            participant: rec.participant,
            contact,
            hands: g.hands,
            mesh: key,
        });
    }
    Ok(GraspSet::new(objects, grasps)?)
}

/// Per object: first hands normalized and, for symmetric objects, rotated onto the first
/// grasp's palm, then clustered.
fn clusters(set: &GraspSet, threshold: f64) -> Result<BTreeMap<String, ClusterSummary>> {
    let mut by_object: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in set.grasps().iter().enumerate() {
        by_object.entry(&g.object).or_default().push(i);
    }
    let mut out = BTreeMap::new();
    for (object, idx) in by_object {
        let first = &set.grasps()[idx[0]];
        let reference = normalize_and_align(&first.hands[0], None)?;
        let sym = set.object(first).symmetry_axis.map(|axis| SymmetryAlignment {
            axis,
            reference: PALM_JOINTS.map(|j| reference.skeleton.joint(j)),
        });
        let poses = idx
            .iter()
            .map(|&i| Ok(normalize_and_align(&set.grasps()[i].hands[0], sym.as_ref())?.skeleton.flatten()))
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        let Clustering {
            labels,
            clusters,
            mean_intra_distance,
        } = cluster_poses(&poses, threshold)?;
        out.insert(
            object.to_string(),
            ClusterSummary {
                grasps: idx,
                labels,
                clusters,
                mean_intra_distance,
            },
        );
    }
    Ok(out)
}

/// Writes `grasps.json`, `part_probability.csv`, `spread.csv`, `clusters.json`, one
/// `active_<object>.ply` per object whose grasps share a mesh, and `split.json` on request.
pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut run = Run::with_out("analyze", a.common.out.as_deref())?;
    if a.common.seed.is_some() {
        return usage("analyze is deterministic and takes no --seed");
    }
    let mut o = Overrides::default();
    o.opt("level", a.level)
        .opt("split", a.split)
        .opt("cluster_threshold", a.cluster_threshold);
    let (config, echoed): (AnalyzeConfig, _) = resolve(&mut run, a.common.config.as_deref(), o)?;
    let set = load_set(&mut run, &a.data)?;
    let analyses = GraspAnalysis::compute_all(&set, config.level, &config.association)?;

    let summaries: Vec<GraspSummary> = set
        .grasps()
        .iter()
        .zip(&analyses)
        .zip(&a.data)
        .map(|((g, an), dir)| GraspSummary {
            dir: dir.display().to_string(),
            object: &g.object,
            intent: g.intent,
            participant: g.participant,
            contacted_vertices: an.association.contacted_count(),
            fingertip_area_cm2: an.fingertip_area_cm2,
            whole_hand_area_cm2: an.whole_hand_area_cm2,
            phalange_areas_cm2: an.phalange_areas.to_vec(),
        })
        .collect();
    run.write_json("grasps.json", &summaries)?;
    run.write("part_probability.csv", part_probability_csv(&set, &analyses)?.as_bytes())?;
    run.write("spread.csv", spread_csv(&group_spread(&set)?).as_bytes())?;
    run.write_json("clusters.json", &clusters(&set, config.cluster_threshold)?)?;

    let objects: std::collections::BTreeSet<&str> = set.grasps().iter().map(|g| g.object.as_str()).collect();
    for object in objects {
        let per_part = match (0..PART_COUNT)
            .map(|p| active_areas(&set, &analyses, object, p))
            .collect::<Result<Vec<_>, _>>()
        {
            Ok(v) => v,
            Err(AnalysisError::MeshMismatch(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let g = set.grasps().iter().find(|g| g.object == object).expect("object has grasps");
        let names: Vec<String> = (0..PART_COUNT).map(|p| format!("part_{p:02}")).collect();
        let scalars: Vec<(&str, &[f64])> = names.iter().map(String::as_str).zip(per_part.iter().map(Vec::as_slice)).collect();
        run.write_ply(&format!("active_{object}.ply"), &mesh_ply(&set.object(g).mesh, &scalars))?;
    }

    if let Some(kind) = config.split {
        let s = split(set.grasps(), kind).context("splitting the grasp set")?;
        let name = |i: &usize| summaries[*i].dir.as_str();
        run.write_json(
            "split.json",
            &SplitSummary {
                kind,
                train: s.train.iter().map(name).collect(),
                test: s.test.iter().map(name).collect(),
            },
        )?;
    }
    run.finish(&echoed)
}
