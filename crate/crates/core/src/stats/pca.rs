use serde::Serialize;

use crate::error::{Error, Result};

/// Principal axes of a planar point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PcaSummary {
    /// Slope v_y / v_x of the major-axis eigenvector; infinite when vertical.
    pub slope: f64,
    /// Minor over major eigenvalue, in [0, 1].
    pub ratio: f64,
    pub minor: f64,
    pub major: f64,
    pub vertical: bool,
    /// Equal eigenvalues: the major direction is arbitrary and (1, 0) is used.
    pub isotropic: bool,
}

/// Relative eigenvalue gap below which the cloud counts as isotropic.
const ISOTROPY_TOL: f64 = 1e-12;

/// Eigendecomposition of the 2×2 sample covariance (denominator n − 1).
pub fn pca2(points: &[(f64, f64)]) -> Result<PcaSummary> {
    if points.len() < 3 {
        return Err(Error::TooFewIndividuals { needed: 3, got: points.len() });
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidArgument("points must be finite".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / (n - 1.0), syy / (n - 1.0), sxy / (n - 1.0));
    let trace = sxx + syy;
    if trace <= 0.0 {
        return Err(Error::Degenerate("all points coincide; covariance is zero".into()));
    }
    let half_gap = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    let major = 0.5 * trace + half_gap;
    let minor = (0.5 * trace - half_gap).max(0.0);
    let isotropic = half_gap <= ISOTROPY_TOL * trace;

    let (vx, vy) = if isotropic {
        (1.0, 0.0)
    } else {
        // two equivalent eigenvector forms; keep the better-conditioned one
        let a = (sxy, major - sxx);
        let b = (major - syy, sxy);
        if a.0.hypot(a.1) >= b.0.hypot(b.1) {
            a
        } else {
            b
        }
    };
    let vertical = vx == 0.0;
    let slope = if vertical { f64::INFINITY } else { vy / vx };
    Ok(PcaSummary { slope, ratio: (minor / major).clamp(0.0, 1.0), minor, major, vertical, isotropic })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_cloud() {
        let r = pca2(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).unwrap();
        assert!(r.ratio.abs() < 1e-15);
        assert!((r.slope - 1.0).abs() < 1e-15);
    }

    #[test]
    fn axis_aligned_rectangle() {
        let r = pca2(&[(0.0, 0.0), (2.0, 0.0), (0.0, 1.0), (2.0, 1.0)]).unwrap();
        assert!((r.major - 4.0 / 3.0).abs() < 1e-15);
        assert!((r.minor - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.ratio - 0.25).abs() < 1e-15);
        assert_eq!(r.slope, 0.0);
    }

    #[test]
    fn isotropic_cloud_is_flagged() {
        let r = pca2(&[(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]).unwrap();
        assert!(r.isotropic);
        assert_eq!((r.ratio, r.slope), (1.0, 0.0));
    }

    #[test]
    fn vertical_major_axis_is_flagged() {
        let r = pca2(&[(0.0, 0.0), (0.0, 2.0), (1.0, 0.0), (1.0, 2.0)]).unwrap();
        assert!(r.vertical && r.slope.is_infinite());
        assert!((r.ratio - 0.25).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(pca2(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(matches!(pca2(&[(1.0, 1.0); 4]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn quarter_turn_maps_slope_to_negative_reciprocal() {
        let pts = [(0.0, 0.1), (1.0, 0.7), (2.0, 1.1), (3.0, 2.0), (4.0, 2.2)];
        let a = pca2(&pts).unwrap();
        let turned: Vec<_> = pts.iter().map(|&(x, y)| (-y, x)).collect();
        let b = pca2(&turned).unwrap();
        assert!((a.ratio - b.ratio).abs() < 1e-12);
        assert!((b.slope + 1.0 / a.slope).abs() < 1e-12);
    }
}
