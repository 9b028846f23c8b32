//! Krippendorff's alpha for nominal data, computed from value coincidences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// unit id → rater id → nominal value. Missing ratings are simply absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReliabilityTable {
    pub units: BTreeMap<String, BTreeMap<String, u8>>,
}

impl ReliabilityTable {
    /// Record a rating; a repeated (unit, rater) pair keeps the latest value.
    pub fn insert(&mut self, unit: &str, rater: &str, value: u8) {
        self.units
            .entry(unit.to_owned())
            .or_default()
            .insert(rater.to_owned(), value);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub alpha: f64,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    pub pairable_values: usize,
}

/// Nominal alpha = 1 − Do/De. Units with fewer than two ratings are not pairable
/// and are ignored, which is what makes the coefficient robust to missing data.
pub fn krippendorff_alpha(table: &ReliabilityTable) -> Result<ReliabilityResult> {
    let mut totals: BTreeMap<u8, usize> = BTreeMap::new();
    let mut n = 0usize;
    let mut observed = 0.0;
    for ratings in table.units.values() {
        let m = ratings.len();
        if m < 2 {
            continue;
        }
        let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
        for &v in ratings.values() {
            *counts.entry(v).or_default() += 1;
        }
        // Σ_{c≠k} n_uc n_uk = m² − Σ_c n_uc²
        let same: usize = counts.values().map(|c| c * c).sum();
        observed += (m * m - same) as f64 / (m - 1) as f64;
        for (v, c) in counts {
            *totals.entry(v).or_default() += c;
        }
        n += m;
    }
    if n == 0 {
        return Err(Error::InsufficientPairs);
    }
    let same: usize = totals.values().map(|c| c * c).sum();
    let expected_pairs = (n * n - same) as f64;
    if expected_pairs == 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let observed_disagreement = observed / n as f64;
    let expected_disagreement = expected_pairs / (n as f64 * (n - 1) as f64);
    Ok(ReliabilityResult {
        alpha: 1.0 - observed_disagreement / expected_disagreement,
        observed_disagreement,
        expected_disagreement,
        pairable_values: n,
    })
}
