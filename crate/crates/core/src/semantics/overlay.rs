use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statmap::{Level, StatMap};

/// Per-voxel counts of labels with positive and negative corrected t.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayCounts {
    pub total: Vec<u32>,
    pub positive: Vec<u32>,
    pub negative: Vec<u32>,
}

fn check_corrected(maps: &[&StatMap]) -> Result<usize> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("no maps".into()))?;
    let n = first.n_voxels();
    for m in maps {
        if m.level != Level::Corrected {
            return Err(Error::InvalidArgument(format!(
                "map {:?} is {}-level, expected corrected",
                m.label, m.level
            )));
        }
        if m.n_voxels() != n {
            return Err(Error::Mismatch(format!(
                "map {:?} has {} voxels, expected {n}",
                m.label,
                m.n_voxels()
            )));
        }
    }
    Ok(n)
}

pub fn overlay_counts(maps: &[&StatMap]) -> Result<OverlayCounts> {
    let n = check_corrected(maps)?;
    let mut positive = vec![0u32; n];
    let mut negative = vec![0u32; n];
    for m in maps {
        for (v, &t) in m.t.iter().enumerate() {
            if t > 0.0 {
                positive[v] += 1;
            } else if t < 0.0 {
                negative[v] += 1;
            }
        }
    }
    let total = positive.iter().zip(&negative).map(|(p, q)| p + q).collect();
    Ok(OverlayCounts {
        total,
        positive,
        negative,
    })
}

/// Sign pattern of a superordinate (upper) and subordinate (lower) label at
/// one voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayCategory {
    None,
    BothPos,
    BothNeg,
    UpperOnlyPos,
    LowerOnlyPos,
    UpperOnlyNeg,
    LowerOnlyNeg,
    /// Upper positive, lower negative.
    ConflictPosNeg,
    /// Upper negative, lower positive.
    ConflictNegPos,
}

impl OverlayCategory {
    pub const ALL: [OverlayCategory; 9] = [
        OverlayCategory::None,
        OverlayCategory::BothPos,
        OverlayCategory::BothNeg,
        OverlayCategory::UpperOnlyPos,
        OverlayCategory::LowerOnlyPos,
        OverlayCategory::UpperOnlyNeg,
        OverlayCategory::LowerOnlyNeg,
        OverlayCategory::ConflictPosNeg,
        OverlayCategory::ConflictNegPos,
    ];

    pub fn from_signs(upper: f32, lower: f32) -> Self {
        use std::cmp::Ordering::*;
        let sign = |v: f32| v.partial_cmp(&0.0).unwrap_or(Equal);
        match (sign(upper), sign(lower)) {
            (Equal, Equal) => OverlayCategory::None,
            (Greater, Greater) => OverlayCategory::BothPos,
            (Less, Less) => OverlayCategory::BothNeg,
            (Greater, Equal) => OverlayCategory::UpperOnlyPos,
            (Equal, Greater) => OverlayCategory::LowerOnlyPos,
            (Less, Equal) => OverlayCategory::UpperOnlyNeg,
            (Equal, Less) => OverlayCategory::LowerOnlyNeg,
            (Greater, Less) => OverlayCategory::ConflictPosNeg,
            (Less, Greater) => OverlayCategory::ConflictNegPos,
        }
    }

    /// Numeric code used when the category map is written as a container.
    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&c| c == self).unwrap() as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            OverlayCategory::None => "none",
            OverlayCategory::BothPos => "both_pos",
            OverlayCategory::BothNeg => "both_neg",
            OverlayCategory::UpperOnlyPos => "upper_only_pos",
            OverlayCategory::LowerOnlyPos => "lower_only_pos",
            OverlayCategory::UpperOnlyNeg => "upper_only_neg",
            OverlayCategory::LowerOnlyNeg => "lower_only_neg",
            OverlayCategory::ConflictPosNeg => "conflict_pos_neg",
            OverlayCategory::ConflictNegPos => "conflict_neg_pos",
        }
    }
}

/// Classifies every voxel by the signs of two corrected maps.
pub fn hierarchy_overlay(upper: &StatMap, lower: &StatMap) -> Result<Vec<OverlayCategory>> {
    check_corrected(&[upper, lower])?;
    Ok(upper
        .t
        .iter()
        .zip(&lower.t)
        .map(|(&u, &l)| OverlayCategory::from_signs(u, l))
        .collect())
}
