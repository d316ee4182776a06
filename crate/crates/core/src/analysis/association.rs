use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{binarize, ContactMap, DEFAULT_THRESHOLD};
use crate::geom::{point_segment_distance, TriMesh, Vec3};
use crate::handmodel::{HandProxy, HandSkeleton, ProxyConfig, PALM_PART, PART_COUNT, PHALANGE_COUNT};

use super::AnalysisError;

/// Spacing of the proxy surface samples used for point-level association (meters).
pub const DEFAULT_POINT_SPACING: f64 = 0.002;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssociationLevel {
    /// Nearest sample on the hand proxy surface.
    Point,
    /// Nearest phalange segment, or the palm mid-plane polygon.
    Phalange,
}

impl std::str::FromStr for AssociationLevel {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "point" => Ok(Self::Point),
            "phalange" => Ok(Self::Phalange),
            _ => Err(AnalysisError::InvalidParameter(format!("unknown association level {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    pub tau: f64,
    pub point_spacing: f64,
    pub proxy: ProxyConfig,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_THRESHOLD,
            point_spacing: DEFAULT_POINT_SPACING,
            proxy: ProxyConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Association {
    pub hand: usize,
    /// Phalange id `0..20` or the palm.
    pub part: usize,
    /// Index into the hand's proxy surface samples (point level only).
    pub proxy_point: Option<usize>,
    pub distance: f64,
}

/// Per object vertex: the hand part it is associated with, or `None` when not in contact.
#[derive(Clone, Debug, PartialEq)]
pub struct PartAssociation {
    pub level: AssociationLevel,
    pub assignments: Vec<Option<Association>>,
}

impl PartAssociation {
    pub fn contacted_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_some()).count()
    }

    /// Whether any vertex is associated with `part` (on any hand).
    pub fn part_contacted(&self, part: usize) -> bool {
        self.assignments.iter().flatten().any(|a| a.part == part)
    }

    pub fn contacted_parts(&self) -> [bool; PART_COUNT] {
        let mut out = [false; PART_COUNT];
        for a in self.assignments.iter().flatten() {
            out[a.part] = true;
        }
        out
    }

    pub fn vertices_of(&self, part: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(move |(v, a)| a.filter(|a| a.part == part).map(|_| v))
    }
}

pub fn associate(
    contact: &ContactMap,
    mesh: &TriMesh,
    hands: &[HandSkeleton],
    level: AssociationLevel,
) -> Result<PartAssociation, AnalysisError> {
    associate_with(contact, mesh, hands, level, &AssociationConfig::default())
}

/// Maps every vertex with contact `>= tau` to its nearest hand part. Ties go to the lower
/// hand index, then the lower part (or proxy sample) id.
pub fn associate_with(
    contact: &ContactMap,
    mesh: &TriMesh,
    hands: &[HandSkeleton],
    level: AssociationLevel,
    config: &AssociationConfig,
) -> Result<PartAssociation, AnalysisError> {
    if contact.len() != mesh.vertex_count() {
        return Err(AnalysisError::ContactLength {
            grasp: 0,
            contact: contact.len(),
            vertices: mesh.vertex_count(),
        });
    }
    if hands.is_empty() {
        return Err(AnalysisError::NoHands(0));
    }
    if !(config.point_spacing > 0.0) {
        return Err(AnalysisError::InvalidParameter("point spacing must be positive".into()));
    }
    let proxies = hands
        .iter()
        .map(|h| HandProxy::from_skeleton(h, &config.proxy))
        .collect::<Result<Vec<_>, _>>()?;
    let contacted = binarize(contact, config.tau);
    let nearest: Box<dyn Fn(&Vec3) -> Association + Sync> = match level {
        AssociationLevel::Phalange => Box::new(|p: &Vec3| nearest_part(p, hands, &proxies)),
        AssociationLevel::Point => {
            let samples: Vec<Vec<(Vec3, usize)>> = proxies
                .iter()
                .map(|px| {
                    px.surface_points(config.point_spacing)
                        .into_iter()
                        .map(|s| (s.position, s.part))
                        .collect()
                })
                .collect();
            Box::new(move |p: &Vec3| nearest_sample(p, &samples))
        }
    };
    let assignments = mesh
        .vertices()
        .par_iter()
        .zip(contacted.par_iter())
        .map(|(p, &c)| c.then(|| nearest(p)))
        .collect();
    Ok(PartAssociation { level, assignments })
}

fn nearest_part(p: &Vec3, hands: &[HandSkeleton], proxies: &[HandProxy]) -> Association {
    let mut best = Association {
        hand: 0,
        part: 0,
        proxy_point: None,
        distance: f64::INFINITY,
    };
    for (h, (hand, proxy)) in hands.iter().zip(proxies).enumerate() {
        for part in 0..PART_COUNT {
            let d = if part == PALM_PART {
                proxy.palm.midplane_distance(p)
            } else {
                debug_assert!(part < PHALANGE_COUNT);
                let (a, b) = hand.segment(part);
                point_segment_distance(p, &a, &b).0
            };
            if d < best.distance {
                best = Association {
                    hand: h,
                    part,
                    proxy_point: None,
                    distance: d,
                };
            }
        }
    }
    best
}

fn nearest_sample(p: &Vec3, samples: &[Vec<(Vec3, usize)>]) -> Association {
    let mut best = Association {
        hand: 0,
        part: 0,
        proxy_point: None,
        distance: f64::INFINITY,
    };
    for (h, hs) in samples.iter().enumerate() {
        for (i, (q, part)) in hs.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.distance {
                best = Association {
                    hand: h,
                    part: *part,
                    proxy_point: Some(i),
                    distance: d,
                };
            }
        }
    }
    best.distance = best.distance.sqrt();
    best
}
