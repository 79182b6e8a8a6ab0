//! Frequency table of the latest reproduction number per region.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::numfmt::g6;

/// Below this (or undefined) a region counts as effectively zero.
pub const DEFAULT_ZERO_THRESHOLD: f64 = 0.05;

/// Region counts per bin published for 31 August 2020, in [`R0Bin::ALL`]
/// order.
pub const PUBLISHED_SPLIT: [usize; 6] = [2, 2, 10, 6, 13, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R0Bin {
    EffectivelyZero,
    UpToHalf,
    UpToOne,
    UpToOneAndHalf,
    UpToTwo,
    AboveTwo,
}

impl R0Bin {
    pub const ALL: [R0Bin; 6] = [
        R0Bin::EffectivelyZero,
        R0Bin::UpToHalf,
        R0Bin::UpToOne,
        R0Bin::UpToOneAndHalf,
        R0Bin::UpToTwo,
        R0Bin::AboveTwo,
    ];

    pub fn of(r0: Option<f64>, zero_threshold: f64) -> R0Bin {
        match r0 {
            None => R0Bin::EffectivelyZero,
            Some(v) if v.is_nan() || v < zero_threshold => R0Bin::EffectivelyZero,
            Some(v) if v <= 0.5 => R0Bin::UpToHalf,
            Some(v) if v <= 1.0 => R0Bin::UpToOne,
            Some(v) if v <= 1.5 => R0Bin::UpToOneAndHalf,
            Some(v) if v <= 2.0 => R0Bin::UpToTwo,
            Some(_) => R0Bin::AboveTwo,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            R0Bin::EffectivelyZero => "effectively zero",
            R0Bin::UpToHalf => "0 < R0 <= 0.5",
            R0Bin::UpToOne => "0.5 < R0 <= 1",
            R0Bin::UpToOneAndHalf => "1 < R0 <= 1.5",
            R0Bin::UpToTwo => "1.5 < R0 <= 2",
            R0Bin::AboveTwo => "R0 > 2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionR0 {
    pub region: String,
    pub r0: Option<f64>,
    pub bin: R0Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Table {
    pub zero_threshold: f64,
    pub regions: Vec<RegionR0>,
    pub counts: [usize; 6],
}

impl R0Table {
    pub fn new(latest: &[(String, Option<f64>)], zero_threshold: f64) -> R0Table {
        let mut counts = [0; 6];
        let regions = latest
            .iter()
            .map(|(region, r0)| {
                let bin = R0Bin::of(*r0, zero_threshold);
                counts[bin.index()] += 1;
                RegionR0 { region: region.clone(), r0: *r0, bin }
            })
            .collect();
        R0Table { zero_threshold, regions, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `bin,count` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count\n");
        for b in R0Bin::ALL {
            let _ = writeln!(out, "{},{}", b.label(), self.counts[b.index()]);
        }
        let _ = writeln!(out, "total,{}", self.total());
        out
    }

    /// Per-bin differences against a reference split.
    pub fn deviations(&self, reference: &[usize; 6]) -> Vec<BinDeviation> {
        R0Bin::ALL
            .iter()
            .filter(|b| self.counts[b.index()] != reference[b.index()])
            .map(|b| BinDeviation {
                bin: *b,
                observed: self.counts[b.index()],
                reference: reference[b.index()],
            })
            .collect()
    }

    /// Region values formatted for display.
    pub fn latest_values(&self) -> BTreeMap<String, String> {
        self.regions
            .iter()
            .map(|r| (r.region.clone(), r.r0.map(g6).unwrap_or_default()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinDeviation {
    pub bin: R0Bin,
    pub observed: usize,
    pub reference: usize,
}

/// Largest number of regions that can be paired with a reference slot in
/// the same or a neighbouring bin, each slot used once.
pub fn adjacent_agreement(counts: &[usize; 6], reference: &[usize; 6]) -> usize {
    let mut free = *reference;
    let mut matched = 0;
    // Every region's admissible slots form an interval [b-1, b+1]; taking
    // regions in bin order and filling the leftmost free slot is optimal.
    for (b, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let lo = b.saturating_sub(1);
            let hi = (b + 1).min(5);
            if let Some(slot) = (lo..=hi).find(|&s| free[s] > 0) {
                free[slot] -= 1;
                matched += 1;
            }
        }
    }
    matched
}
