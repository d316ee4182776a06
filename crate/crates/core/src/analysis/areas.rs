use rayon::prelude::*;
use std::fmt::Write as _;

use crate::geom::TriMesh;
use crate::handmodel::{DISTAL_PHALANGES, PART_COUNT, PHALANGE_COUNT};

use super::association::{associate_with, AssociationConfig, AssociationLevel, PartAssociation};
use super::{AnalysisError, GraspSet, Intent};

pub const CM2_PER_M2: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContactRegion {
    /// The five distal phalanges.
    Fingertips,
    WholeHand,
}

impl ContactRegion {
    fn includes(self, part: usize) -> bool {
        match self {
            ContactRegion::Fingertips => DISTAL_PHALANGES.contains(&part),
            ContactRegion::WholeHand => true,
        }
    }
}

/// Contact area (cm²) of the vertices associated with `region`, using one third of the
/// incident face areas per vertex.
pub fn contact_area(mesh: &TriMesh, association: &PartAssociation, region: ContactRegion) -> f64 {
    let areas = mesh.vertex_areas();
    association
        .assignments
        .iter()
        .zip(&areas)
        .filter(|(a, _)| a.is_some_and(|a| region.includes(a.part)))
        .map(|(_, area)| area)
        .sum::<f64>()
        * CM2_PER_M2
}

/// Per phalange, the summed area (m²) of faces incident to any vertex associated with it.
pub fn phalange_area_vector(mesh: &TriMesh, association: &PartAssociation) -> [f64; PHALANGE_COUNT] {
    let mut out = [0.0; PHALANGE_COUNT];
    for (f, face) in mesh.faces().iter().enumerate() {
        let mut touched = [false; PART_COUNT];
        for &v in face {
            if let Some(a) = association.assignments[v as usize] {
                touched[a.part] = true;
            }
        }
        let area = mesh.face_area(f);
        for (p, slot) in out.iter_mut().enumerate() {
            if touched[p] {
                *slot += area;
            }
        }
    }
    out
}

pub fn contact_distance(a: &[f64; PHALANGE_COUNT], b: &[f64; PHALANGE_COUNT]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Everything computed per grasp.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspAnalysis {
    pub association: PartAssociation,
    pub phalange_areas: [f64; PHALANGE_COUNT],
    pub fingertip_area_cm2: f64,
    pub whole_hand_area_cm2: f64,
}

impl GraspAnalysis {
    pub fn compute(set: &GraspSet, grasp: usize, level: AssociationLevel, config: &AssociationConfig) -> Result<Self, AnalysisError> {
        let g = &set.grasps()[grasp];
        let mesh = &set.object(g).mesh;
        let association = associate_with(&g.contact, mesh, &g.hands, level, config).map_err(|e| match e {
            AnalysisError::ContactLength { contact, vertices, .. } => AnalysisError::ContactLength { grasp, contact, vertices },
            AnalysisError::NoHands(_) => AnalysisError::NoHands(grasp),
            e => e,
        })?;
        Ok(Self {
            phalange_areas: phalange_area_vector(mesh, &association),
            fingertip_area_cm2: contact_area(mesh, &association, ContactRegion::Fingertips),
            whole_hand_area_cm2: contact_area(mesh, &association, ContactRegion::WholeHand),
            association,
        })
    }

    pub fn compute_all(set: &GraspSet, level: AssociationLevel, config: &AssociationConfig) -> Result<Vec<Self>, AnalysisError> {
        (0..set.len())
            .into_par_iter()
            .map(|i| Self::compute(set, i, level, config))
            .collect()
    }
}

/// Fraction of grasps (optionally of one intent) in which each of the 21 parts touches
/// at least one contacted object point.
pub fn hand_contact_probability(
    set: &GraspSet,
    analyses: &[GraspAnalysis],
    intent: Option<Intent>,
) -> Result<[f64; PART_COUNT], AnalysisError> {
    if analyses.len() != set.len() {
        return Err(AnalysisError::InvalidParameter("one analysis per grasp is required".into()));
    }
    let selected: Vec<&GraspAnalysis> = set
        .grasps()
        .iter()
        .zip(analyses)
        .filter(|(g, _)| intent.is_none_or(|i| g.intent == i))
        .map(|(_, a)| a)
        .collect();
    if selected.is_empty() {
        return Err(AnalysisError::EmptySet);
    }
    let mut counts = [0usize; PART_COUNT];
    for a in &selected {
        for (c, hit) in counts.iter_mut().zip(a.association.contacted_parts()) {
            *c += hit as usize;
        }
    }
    Ok(counts.map(|c| c as f64 / selected.len() as f64))
}

/// Per-vertex probability over the grasps of `object` that the vertex is contacted and
/// associated with `part`.
pub fn active_areas(set: &GraspSet, analyses: &[GraspAnalysis], object: &str, part: usize) -> Result<Vec<f64>, AnalysisError> {
    if part >= PART_COUNT {
        return Err(AnalysisError::InvalidParameter(format!("part id {part} out of range")));
    }
    let chosen: Vec<usize> = (0..set.len()).filter(|&i| set.grasps()[i].object == object).collect();
    let first = chosen.first().ok_or(AnalysisError::EmptySet)?;
    let mesh_id = &set.grasps()[*first].mesh;
    if chosen.iter().any(|&i| &set.grasps()[i].mesh != mesh_id) {
        return Err(AnalysisError::MeshMismatch(object.to_string()));
    }
    let n = set.objects()[mesh_id].mesh.vertex_count();
    let mut counts = vec![0usize; n];
    for &i in &chosen {
        for v in analyses[i].association.vertices_of(part) {
            counts[v] += 1;
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / chosen.len() as f64).collect())
}

/// `part,use,handoff,all` rows; intents without grasps are left empty.
pub fn part_probability_csv(set: &GraspSet, analyses: &[GraspAnalysis]) -> Result<String, AnalysisError> {
    let all = hand_contact_probability(set, analyses, None)?;
    let by_intent = [Intent::Use, Intent::Handoff].map(|i| hand_contact_probability(set, analyses, Some(i)).ok());
    let mut out = String::from("part,use,handoff,all\n");
    for p in 0..PART_COUNT {
        let cell = |v: &Option<[f64; PART_COUNT]>| v.map(|v| format!("{:.6}", v[p])).unwrap_or_default();
        writeln!(out, "{p},{},{},{:.6}", cell(&by_intent[0]), cell(&by_intent[1]), all[p]).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::association::tests::{fanned_hand, patch_over};
    use crate::analysis::association::associate;
    use crate::analysis::{GraspRecord, ObjectInfo};
    use crate::contact::ContactMap;
    use crate::geom::{shapes, Vec3};
    use crate::handmodel::HandSkeleton;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn record(object: &str, intent: Intent, contact: Vec<f64>, hand: HandSkeleton, mesh: &str) -> GraspRecord {
        GraspRecord {
            object: object.into(),
            intent,
            participant: 1,
            contact: ContactMap::new(contact).unwrap(),
            hands: vec![hand],
            mesh: mesh.into(),
        }
    }

    #[test]
    fn unit_square_full_and_empty_contact() {
        let mesh = shapes::grid_square(1.0, 4);
        let n = mesh.vertex_count();
        let hand = fanned_hand(Vec3::new(0.5, 0.5, 0.2));
        let full = associate(&ContactMap::new(vec![1.0; n]).unwrap(), &mesh, &[hand.clone()], AssociationLevel::Phalange)
            .unwrap();
        assert!((contact_area(&mesh, &full, ContactRegion::WholeHand) - 1e4).abs() < 1e-9);
        let none = associate(&ContactMap::new(vec![0.0; n]).unwrap(), &mesh, &[hand], AssociationLevel::Phalange).unwrap();
        assert_eq!(contact_area(&mesh, &none, ContactRegion::WholeHand), 0.0);
        assert_eq!(phalange_area_vector(&mesh, &none), [0.0; PHALANGE_COUNT]);
    }

    #[test]
    fn half_square_mask() {
        let n = 40;
        let mesh = shapes::grid_square(1.0, n);
        let values: Vec<f64> = mesh.vertices().iter().map(|v| if v.x < 0.5 { 1.0 } else { 0.0 }).collect();
        let hand = fanned_hand(Vec3::new(0.5, 0.5, 0.2));
        let a = associate(&ContactMap::new(values).unwrap(), &mesh, &[hand], AssociationLevel::Phalange).unwrap();
        let area_m2 = contact_area(&mesh, &a, ContactRegion::WholeHand) / CM2_PER_M2;
        assert!((area_m2 - 0.5).abs() <= 1.0 / n as f64, "{area_m2}");
    }

    #[test]
    fn index_tip_patch_gives_one_nonzero_phalange_entry() {
        let hand = fanned_hand(Vec3::zeros());
        let mesh = patch_over(&hand, 7, 0.012);
        let a = associate(&ContactMap::new(vec![1.0; 4]).unwrap(), &mesh, &[hand], AssociationLevel::Phalange).unwrap();
        let v = phalange_area_vector(&mesh, &a);
        assert_eq!(v.len(), 20);
        let nz: Vec<usize> = (0..20).filter(|&i| v[i] != 0.0).collect();
        assert_eq!(nz, vec![7]);
        assert!((v[7] - mesh.surface_area()).abs() < 1e-15);
        let tips = contact_area(&mesh, &a, ContactRegion::Fingertips);
        assert!((tips - contact_area(&mesh, &a, ContactRegion::WholeHand)).abs() < 1e-12);
    }

    fn planted_corpus() -> GraspSet {
        // Index-only grasps: the patch lies over the index distal phalange.
        let hand = fanned_hand(Vec3::zeros());
        let mesh = patch_over(&hand, 7, 0.012);
        let mut objects = BTreeMap::new();
        objects.insert("patch".to_string(), ObjectInfo { mesh, symmetry_axis: None });
        let grasps = vec![
            record("patch", Intent::Use, vec![1.0, 1.0, 0.0, 0.0], hand.clone(), "patch"),
            record("patch", Intent::Use, vec![0.0, 1.0, 1.0, 0.0], hand.clone(), "patch"),
            record("patch", Intent::Handoff, vec![0.0, 1.0, 0.0, 0.0], hand, "patch"),
        ];
        GraspSet::new(objects, grasps).unwrap()
    }

    #[test]
    fn planted_probabilities_and_active_areas() {
        let set = planted_corpus();
        let an = GraspAnalysis::compute_all(&set, AssociationLevel::Phalange, &AssociationConfig::default()).unwrap();
        let p = hand_contact_probability(&set, &an, None).unwrap();
        for (part, v) in p.iter().enumerate() {
            assert_eq!(*v, if part == 7 { 1.0 } else { 0.0 });
        }
        assert_eq!(hand_contact_probability(&set, &an, Some(Intent::Handoff)).unwrap()[7], 1.0);
        // Vertex 1 is touched in every grasp, vertex 3 never.
        let active = active_areas(&set, &an, "patch", 7).unwrap();
        assert_eq!(active, vec![1.0 / 3.0, 1.0, 1.0 / 3.0, 0.0]);
        assert_eq!(active.iter().filter(|&&x| x >= 1.0 + 1e-9).count(), 0);
        assert_eq!(active_areas(&set, &an, "patch", 4).unwrap(), vec![0.0; 4]);
        let single = active_areas(&set.select(&[0]), &an[..1], "patch", 7).unwrap();
        assert!(single.iter().all(|&x| x == 0.0 || x == 1.0));
        let csv = part_probability_csv(&set, &an).unwrap();
        assert!(csv.lines().nth(8).unwrap().starts_with("7,1.000000,1.000000,1.000000"));
    }

    #[test]
    fn empty_set_and_mesh_mismatch() {
        let set = planted_corpus();
        let an = GraspAnalysis::compute_all(&set, AssociationLevel::Point, &AssociationConfig::default()).unwrap();
        let empty = set.select(&[]);
        assert!(matches!(hand_contact_probability(&empty, &[], None), Err(AnalysisError::EmptySet)));
        let mut objects = set.objects().clone();
        objects.insert("patch2".into(), objects["patch"].clone());
        let mut grasps = set.grasps().to_vec();
        grasps[1].mesh = "patch2".into();
        let mixed = GraspSet::new(objects, grasps).unwrap();
        assert!(matches!(active_areas(&mixed, &an, "patch", 7), Err(AnalysisError::MeshMismatch(_))));
    }

    proptest! {
        #[test]
        fn contact_distance_is_a_metric(
            a in prop::array::uniform20(0.0f64..1e-3),
            b in prop::array::uniform20(0.0f64..1e-3),
            c in prop::array::uniform20(0.0f64..1e-3),
        ) {
            prop_assert_eq!(contact_distance(&a, &a), 0.0);
            prop_assert!(contact_distance(&a, &b) >= 0.0);
            prop_assert_eq!(contact_distance(&a, &b), contact_distance(&b, &a));
            prop_assert!(contact_distance(&a, &c) <= contact_distance(&a, &b) + contact_distance(&b, &c) + 1e-15);
        }

        #[test]
        fn whole_hand_area_dominates_fingertips(mask in prop::collection::vec(any::<bool>(), 81), lift in 0.01f64..0.1) {
            let mesh = shapes::grid_square(0.2, 8);
            let hand = fanned_hand(Vec3::new(0.0, 0.1, lift));
            let values = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
            let a = associate(&ContactMap::new(values).unwrap(), &mesh, &[hand], AssociationLevel::Phalange).unwrap();
            prop_assert!(contact_area(&mesh, &a, ContactRegion::WholeHand) >= contact_area(&mesh, &a, ContactRegion::Fingertips));
            // Every contacted vertex maps to exactly one part, the rest to none.
            prop_assert_eq!(a.contacted_count(), mask.iter().filter(|&&m| m).count());
        }
    }
}
