use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Two-dimensional Gaussian kernel density estimate with a diagonal bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kde2 {
    #[serde(skip)]
    points: Vec<(f64, f64)>,
    pub bandwidth: (f64, f64),
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn sample_sd(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

impl Kde2 {
    /// Scott's rule per axis: h = σ · n^(−1/6).
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewIndividuals { needed: 2, got: points.len() });
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidArgument("KDE points must be finite".into()));
        }
        let factor = (points.len() as f64).powf(-1.0 / 6.0);
        let hx = sample_sd(points.iter().map(|p| p.0)) * factor;
        let hy = sample_sd(points.iter().map(|p| p.1)) * factor;
        Self::with_bandwidth(points, (hx, hy))
    }

    pub fn with_bandwidth(points: &[(f64, f64)], bandwidth: (f64, f64)) -> Result<Self> {
        let (hx, hy) = bandwidth;
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::Degenerate(format!(
                "KDE bandwidth ({hx}, {hy}) must be positive; the cloud is flat along an axis"
            )));
        }
        Ok(Kde2 { points: points.to_vec(), bandwidth })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn kernel_sum(&self, x: f64, y: f64, skip: Option<usize>) -> f64 {
        let (hx, hy) = self.bandwidth;
        self.points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, &(px, py))| {
                let (u, v) = ((x - px) / hx, (y - py) / hy);
                (-0.5 * (u * u + v * v)).exp()
            })
            .sum()
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        let (hx, hy) = self.bandwidth;
        let norm = 2.0 * std::f64::consts::PI * hx * hy * self.points.len() as f64;
        self.kernel_sum(x, y, None) / norm
    }

    /// Density at sample `i` with that sample's own kernel removed.
    pub fn leave_one_out_density(&self, i: usize) -> f64 {
        let (hx, hy) = self.bandwidth;
        let n = self.points.len();
        let norm = 2.0 * std::f64::consts::PI * hx * hy * (n - 1) as f64;
        let (x, y) = self.points[i];
        self.kernel_sum(x, y, Some(i)) / norm
    }

    /// Exact mass over [x0, x1] × [y0, y1].
    pub fn rectangle_mass(&self, x: (f64, f64), y: (f64, f64)) -> f64 {
        let (hx, hy) = self.bandwidth;
        let total: f64 = self
            .points
            .iter()
            .map(|&(px, py)| {
                let mx = std_normal_cdf((x.1 - px) / hx) - std_normal_cdf((x.0 - px) / hx);
                let my = std_normal_cdf((y.1 - py) / hy) - std_normal_cdf((y.0 - py) / hy);
                mx * my
            })
            .sum();
        (total / self.points.len() as f64).clamp(0.0, 1.0)
    }
}
