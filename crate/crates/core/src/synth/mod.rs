//! Seeded synthetic grasps: parametric objects, hands closed onto them, contact maps
//! derived from the hand proxy, camera rigs and noisy multi-view detections. Every
//! pipeline stage is tested against these ground truths.

mod observe;
mod placement;
mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{GraspRecord, GraspSet, Intent, ObjectInfo};
use crate::contact::ContactMap;
use crate::geom::{shapes, MeshIndex, PointCloud, RigidTransform, TriMesh, Vec3};
use crate::handmodel::{HandModelError, HandProxy, HandSkeleton, KinematicHand, ProxyConfig};
use crate::reconstruct::{GraspObservation, ReconstructError};

pub use observe::{detection_confidence, RigSpec};
pub use placement::{contact_from_proxies, place_hands, GraspPlacement};
pub use sweep::{sweep, sweep_csv, SweepAxis, SweepRow};

/// Distance at which the synthetic contact falls to zero (meters).
pub const DEFAULT_CONTACT_FALLOFF: f64 = 0.004;
/// Target mesh edge length for the parametric objects (meters).
pub const DEFAULT_MESH_RESOLUTION: f64 = 0.003;
/// Pixel noise of planted bad-detection frames.
pub const BAD_DETECTION_SIGMA: f64 = 60.0;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no hand placement reached fingertip contact within joint limits after {attempts} attempts")]
    Infeasible { attempts: usize },
    #[error(transparent)]
    HandModel(#[from] HandModelError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
}

/// Parametric object centered at the origin (dimensions in meters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectShape {
    Sphere { radius: f64 },
    Box { extents: [f64; 3] },
    /// Axis along z.
    Cylinder { radius: f64, height: f64 },
    /// Around the z axis.
    Torus { major: f64, minor: f64 },
}

impl ObjectShape {
    pub fn name(&self) -> &'static str {
        match self {
            ObjectShape::Sphere { .. } => "sphere",
            ObjectShape::Box { .. } => "box",
            ObjectShape::Cylinder { .. } => "cylinder",
            ObjectShape::Torus { .. } => "torus",
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let dims: Vec<f64> = match self {
            ObjectShape::Sphere { radius } => vec![*radius],
            ObjectShape::Box { extents } => extents.to_vec(),
            ObjectShape::Cylinder { radius, height } => vec![*radius, *height],
            ObjectShape::Torus { major, minor } => vec![*major, *minor, major - minor],
        };
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(SynthError::InvalidScenario(format!("{} dimensions must be positive", self.name())))
        }
    }

    /// Watertight triangle mesh with edges of roughly `resolution`.
    pub fn mesh(&self, resolution: f64) -> TriMesh {
        let count = |len: f64| ((len / resolution).ceil() as usize).clamp(3, 400);
        match *self {
            ObjectShape::Sphere { radius } => {
                let s = (1.1 * radius / resolution).log2().ceil().clamp(1.0, 6.0) as usize;
                shapes::icosphere(radius, s)
            }
            ObjectShape::Box { extents } => {
                let e = Vec3::from(extents);
                shapes::subdivided_box(e, count(e.max()).min(80))
            }
            ObjectShape::Cylinder { radius, height } => {
                shapes::cylinder(radius, height, count(std::f64::consts::TAU * radius), count(height), count(radius))
            }
            ObjectShape::Torus { major, minor } => shapes::torus(
                major,
                minor,
                count(std::f64::consts::TAU * (major + minor)),
                count(std::f64::consts::TAU * minor),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Gaussian detection noise per pixel coordinate.
    pub pixel_sigma: f64,
    /// Fraction of frames whose reported object pose is rotated by 20 to 180 degrees.
    pub corrupted_pose_fraction: f64,
    /// Fraction of frames whose detections carry large pixel noise.
    pub corrupted_detection_fraction: f64,
    /// Probability that a single joint detection is missing (confidence 0).
    pub dropout_rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.0,
            corrupted_pose_fraction: 0.0,
            corrupted_detection_fraction: 0.0,
            dropout_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthScenario {
    pub object: ObjectShape,
    /// 1 (right) or 2 (right and left).
    pub hands: usize,
    pub rig: RigSpec,
    pub frames: usize,
    pub noise: NoiseModel,
    /// Range of the clearance between the object and the hand's static parts (meters).
    pub palm_gap: [f64; 2],
    pub contact_falloff: f64,
    pub mesh_resolution: f64,
    pub intent: Intent,
    pub participant: u32,
    pub seed: u64,
}

impl Default for SynthScenario {
    fn default() -> Self {
        Self {
            object: ObjectShape::Sphere { radius: 0.05 },
            hands: 1,
            rig: RigSpec::default(),
            frames: 50,
            noise: NoiseModel::default(),
            palm_gap: [0.002, 0.012],
            contact_falloff: DEFAULT_CONTACT_FALLOFF,
            mesh_resolution: DEFAULT_MESH_RESOLUTION,
            intent: Intent::Use,
            participant: 1,
            seed: 0,
        }
    }
}

impl SynthScenario {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidScenario(m.to_string()));
        self.object.validate()?;
        if !(1..=2).contains(&self.hands) {
            return bad("hands must be 1 or 2");
        }
        if self.frames < 2 || self.rig.cameras == 0 {
            return bad("need at least 2 frames and 1 camera");
        }
        let n = &self.noise;
        let fractions = [n.corrupted_pose_fraction, n.corrupted_detection_fraction, n.dropout_rate];
        if !(n.pixel_sigma >= 0.0) || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("noise parameters must be non-negative and fractions at most 1");
        }
        if n.corrupted_pose_fraction + n.corrupted_detection_fraction > 1.0 {
            return bad("corrupted pose and detection fractions exceed 1 together");
        }
        if !(self.palm_gap[0] >= 0.0 && self.palm_gap[1] >= self.palm_gap[0]) {
            return bad("palm gap range must be ordered and non-negative");
        }
        if !(self.contact_falloff > 0.0 && self.mesh_resolution > 0.0) {
            return bad("contact falloff and mesh resolution must be positive");
        }
        self.rig.validate()
    }
}

/// Everything produced for one scenario. Joints and meshes are in the object frame.
#[derive(Clone, Debug)]
pub struct SynthGrasp {
    pub scenario: SynthScenario,
    pub mesh: TriMesh,
    pub hands: Vec<KinematicHand>,
    pub skeletons: Vec<HandSkeleton>,
    pub proxies: Vec<HandProxy>,
    /// Fingers (0 = thumb) whose distal phalange rests on the surface, per hand.
    pub touching_tips: Vec<Vec<usize>>,
    /// Per mesh vertex.
    pub contact: ContactMap,
    pub observation: GraspObservation,
    /// True `world_from_object` per frame.
    pub true_poses: Vec<RigidTransform>,
    pub corrupted_poses: Vec<usize>,
    pub corrupted_detections: Vec<usize>,
}

impl SynthGrasp {
    pub fn record(&self) -> GraspRecord {
        GraspRecord {
            object: self.scenario.object.name().to_string(),
            intent: self.scenario.intent,
            participant: self.scenario.participant,
            contact: self.contact.clone(),
            hands: self.skeletons.clone(),
            mesh: self.scenario.object.name().to_string(),
        }
    }

    /// Object mesh vertices with normals, aligned with `contact`.
    pub fn point_cloud(&self) -> PointCloud {
        PointCloud::from_mesh_vertices(&self.mesh)
    }

    pub fn object_info(&self) -> ObjectInfo {
        let symmetry_axis = match self.scenario.object {
            ObjectShape::Box { .. } => None,
            _ => Some(Vec3::z()),
        };
        ObjectInfo {
            mesh: self.mesh.clone(),
            symmetry_axis,
        }
    }
}

/// Builds a grasp set from synthetic grasps; grasps of one shape kind must share dimensions.
pub fn grasp_set(grasps: &[SynthGrasp]) -> Result<GraspSet, SynthError> {
    let mut objects = BTreeMap::new();
    for g in grasps {
        let name = g.scenario.object.name().to_string();
        if let Some(prev) = objects.get(&name).map(|o: &ObjectInfo| o.mesh.vertex_count()) {
            if prev != g.mesh.vertex_count() {
                return Err(SynthError::InvalidScenario(format!("two different {name} meshes in one set")));
            }
        }
        objects.insert(name, g.object_info());
    }
    GraspSet::new(objects, grasps.iter().map(SynthGrasp::record).collect())
        .map_err(|e| SynthError::InvalidScenario(e.to_string()))
}

/// Generates the scenario; deterministic in `scenario.seed`.
pub fn generate(scenario: &SynthScenario) -> Result<SynthGrasp, SynthError> {
    scenario.validate()?;
    let mesh = scenario.object.mesh(scenario.mesh_resolution);
    let index = MeshIndex::new(&mesh);
    let placement = place_hands(scenario, &mesh, &index)?;
    let proxies = placement
        .skeletons
        .iter()
        .map(|s| HandProxy::from_skeleton(s, &ProxyConfig::default()))
        .collect::<Result<Vec<_>, _>>()?;
    let contact = contact_from_proxies(&mesh, &proxies, scenario.contact_falloff);
    let obs = observe::observe(scenario, &placement.skeletons);
    Ok(SynthGrasp {
        scenario: scenario.clone(),
        mesh,
        hands: placement.hands,
        skeletons: placement.skeletons,
        proxies,
        touching_tips: placement.touching_tips,
        contact,
        observation: obs.observation,
        true_poses: obs.true_poses,
        corrupted_poses: obs.corrupted_poses,
        corrupted_detections: obs.corrupted_detections,
    })
}

/// Stream-splitting for the per-purpose generators of one scenario.
pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
