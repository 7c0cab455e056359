//! Does higher (D, S) on both axes go with higher performance?

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{task_rng, AxisSummary, SIGNIFICANCE_LEVEL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformancePoint {
    pub id: String,
    pub d: f64,
    pub s: f64,
    pub performance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub n_points: usize,
    /// Ordered pairs (A, B) with B strictly above A in both D and S.
    pub n_cases: usize,
    /// Share of cases where B also performs strictly better; absent without cases.
    pub observed_fraction: Option<f64>,
    pub n_shuffles: usize,
    pub use_rank_shuffle: bool,
    pub seed: u64,
    pub null: Option<AxisSummary>,
    pub z_score: Option<f64>,
    /// Two-sided normal p-value of the z-score.
    pub p_value: Option<f64>,
    /// Two-sided permutation p-value, (1 + #extreme) / (1 + shuffles).
    pub empirical_p_value: Option<f64>,
    pub significance_level: f64,
    pub significant: Option<bool>,
    #[serde(skip)]
    pub null_samples: Vec<f64>,
}

/// 1-based ranks; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn concordant_fraction(pairs: &[(u32, u32)], perf: &[f64]) -> f64 {
    let wins = pairs.iter().filter(|&&(a, b)| perf[b as usize] > perf[a as usize]).count();
    wins as f64 / pairs.len() as f64
}

/// Pairwise dominance test against shuffles of the performance column.
pub fn dominance_test(points: &[PerformancePoint], n_shuffles: usize, seed: u64, use_rank_shuffle: bool) -> Result<DominanceReport> {
    if points.len() < 2 {
        return Err(Error::TooFewIndividuals { needed: 2, got: points.len() });
    }
    if n_shuffles == 0 {
        return Err(Error::InvalidArgument("at least one shuffle is required".into()));
    }
    if let Some(p) = points.iter().find(|p| !(p.d.is_finite() && p.s.is_finite() && p.performance.is_finite())) {
        return Err(Error::InvalidArgument(format!("non-finite value for `{}`", p.id)));
    }
    if points.len() > u32::MAX as usize {
        return Err(Error::InvalidArgument("too many points".into()));
    }

    let mut pairs = Vec::new();
    for (a, pa) in points.iter().enumerate() {
        for (b, pb) in points.iter().enumerate() {
            if pb.d > pa.d && pb.s > pa.s {
                pairs.push((a as u32, b as u32));
            }
        }
    }
    let raw: Vec<f64> = points.iter().map(|p| p.performance).collect();
    let perf = if use_rank_shuffle { average_ranks(&raw) } else { raw };

    let mut report = DominanceReport {
        n_points: points.len(),
        n_cases: pairs.len(),
        observed_fraction: None,
        n_shuffles,
        use_rank_shuffle,
        seed,
        null: None,
        z_score: None,
        p_value: None,
        empirical_p_value: None,
        significance_level: SIGNIFICANCE_LEVEL,
        significant: None,
        null_samples: vec![],
    };
    if pairs.is_empty() {
        return Ok(report);
    }

    let observed = concordant_fraction(&pairs, &perf);
    let null: Vec<f64> = (0..n_shuffles)
        .into_par_iter()
        .map(|k| {
            let mut shuffled = perf.clone();
            shuffled.shuffle(&mut task_rng(seed, k as u64));
            concordant_fraction(&pairs, &shuffled)
        })
        .collect();
    let summary = AxisSummary::new(&null);
    let z = (summary.sd > 0.0).then(|| (observed - summary.mean) / summary.sd);
    let p = z.map(|z| erfc(z.abs() / std::f64::consts::SQRT_2));
    let dev = (observed - summary.mean).abs();
    let extreme = null.iter().filter(|&&x| (x - summary.mean).abs() >= dev).count();

    report.observed_fraction = Some(observed);
    report.z_score = z;
    report.p_value = p;
    report.empirical_p_value = Some((1 + extreme) as f64 / (1 + n_shuffles) as f64);
    report.significant = p.map(|p| p < SIGNIFICANCE_LEVEL);
    report.null = Some(summary);
    report.null_samples = null;
    Ok(report)
}
