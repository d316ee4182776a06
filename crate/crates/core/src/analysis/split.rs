use serde::{Deserialize, Serialize};

use super::{AnalysisError, GraspRecord};

/// Objects held out by the object split.
pub const OBJECT_SPLIT_TEST: [&str; 3] = ["mug", "pan", "wine_glass"];
/// Participants held out by the participant split.
pub const PARTICIPANT_SPLIT_TEST: [u32; 5] = [5, 15, 25, 35, 45];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Object,
    Participant,
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitKind::Object => "object",
            SplitKind::Participant => "participant",
        })
    }
}

impl std::str::FromStr for SplitKind {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "object" => Ok(Self::Object),
            "participant" => Ok(Self::Participant),
            _ => Err(AnalysisError::UnknownSplit(s.to_string())),
        }
    }
}

/// Grasp indices on each side, in input order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub kind: SplitKind,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitKind {
    pub fn held_out(self, g: &GraspRecord) -> bool {
        match self {
            SplitKind::Object => OBJECT_SPLIT_TEST.contains(&g.object.as_str()),
            SplitKind::Participant => PARTICIPANT_SPLIT_TEST.contains(&g.participant),
        }
    }
}

pub fn split(grasps: &[GraspRecord], kind: SplitKind) -> Result<Split, AnalysisError> {
    let (test, train): (Vec<usize>, Vec<usize>) = (0..grasps.len()).partition(|&i| kind.held_out(&grasps[i]));
    if test.is_empty() || train.is_empty() {
        return Err(AnalysisError::EmptySplit(kind));
    }
    Ok(Split { kind, train, test })
}
