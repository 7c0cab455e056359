//! The admissible polygon for (D, S), the quadratic form behind S, and the
//! gradient anti-correlation bound.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{CellLayout, IdentityDistribution, MetricPoint};
use crate::schema::TraitSchema;

/// Default tolerance for bound checks.
pub const BOUND_TOL: f64 = 1e-10;

/// Largest C for which Q is materialized as a dense matrix.
pub const DENSE_Q_CAP: usize = 10_000;

/// The polygon R: 1 − lower_slope·d ≤ s ≤ 1 − upper_slope·d and s ≥ s_min,
/// inside the unit square.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSpec {
    pub c: usize,
    pub t: usize,
    pub s_min: f64,
    /// (C − 1)/C
    pub lower_slope: f64,
    /// (C − 1)/(T·C)
    pub upper_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Lower,
    Upper,
    SMin,
    UnitSquare,
}

impl RegionSpec {
    pub fn lower_bound(&self, d: f64) -> f64 {
        1.0 - self.lower_slope * d
    }

    pub fn upper_bound(&self, d: f64) -> f64 {
        1.0 - self.upper_slope * d
    }

    /// Every inequality of R violated by more than `tol`.
    pub fn violations(&self, d: f64, s: f64, tol: f64) -> Vec<BoundKind> {
        let mut out = Vec::new();
        if !(d >= -tol && d <= 1.0 + tol && s >= -tol && s <= 1.0 + tol) {
            out.push(BoundKind::UnitSquare);
        }
        if s < self.lower_bound(d) - tol {
            out.push(BoundKind::Lower);
        }
        if s > self.upper_bound(d) + tol {
            out.push(BoundKind::Upper);
        }
        if s < self.s_min - tol {
            out.push(BoundKind::SMin);
        }
        out
    }

    /// Smallest slack over all inequalities; negative means a violation.
    pub fn slack(&self, d: f64, s: f64) -> f64 {
        [
            s - self.lower_bound(d),
            self.upper_bound(d) - s,
            s - self.s_min,
            d,
            1.0 - d,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

pub fn region_for_schema(schema: &TraitSchema) -> Result<RegionSpec> {
    let c = schema.num_cells();
    if c < 2 {
        return Err(Error::SingleCell);
    }
    let t = schema.num_traits();
    let cf = c as f64;
    Ok(RegionSpec {
        c,
        t,
        s_min: schema.s_min(),
        lower_slope: (cf - 1.0) / cf,
        upper_slope: (cf - 1.0) / (t as f64 * cf),
    })
}

pub fn contains(region: &RegionSpec, point: (f64, f64), tol: f64) -> bool {
    region.violations(point.0, point.1, tol).is_empty()
}

/// Q with Q_{kl} = (2/T)·#{t : k_t = l_t}, so that S(p) = ½ pᵀQp.
pub fn q_matrix(schema: &TraitSchema) -> Result<DMatrix<f64>> {
    q_matrix_capped(schema, DENSE_Q_CAP)
}

pub fn q_matrix_capped(schema: &TraitSchema, cap: usize) -> Result<DMatrix<f64>> {
    let c = schema.num_cells();
    if c > cap {
        return Err(Error::InvalidArgument(format!(
            "C = {c} exceeds the dense matrix cap {cap}; use the marginal form"
        )));
    }
    let cells = schema.cell_table();
    let scale = 2.0 / schema.num_traits() as f64;
    Ok(DMatrix::from_fn(c, c, |k, l| {
        scale * cells[k].iter().zip(&cells[l]).filter(|(a, b)| a == b).count() as f64
    }))
}

/// Common row sum of Q, λ₁ = (2C/T) Σ_t 1/v_t = 2C·s_min.
pub fn q_row_sum(schema: &TraitSchema) -> f64 {
    2.0 * schema.num_cells() as f64 * schema.s_min()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientPair {
    pub grad_d: Vec<f64>,
    pub grad_s: Vec<f64>,
    pub inner: f64,
}

/// Ambient gradients ∇D = −2C/(C−1)·p and ∇S = Q·p, with their inner product.
pub fn gradient_pair(dist: &IdentityDistribution) -> Result<GradientPair> {
    let c = dist.schema().num_cells();
    if c < 2 {
        return Err(Error::SingleCell);
    }
    let p = dist.probs();
    let cf = c as f64;
    let grad_d: Vec<f64> = p.iter().map(|x| -2.0 * cf / (cf - 1.0) * x).collect();
    let mut grad_s = vec![0.0; c];
    CellLayout::new(dist.schema()).apply_q(p, &mut grad_s);
    let inner = grad_d.iter().zip(&grad_s).map(|(a, b)| a * b).sum();
    Ok(GradientPair { grad_d, grad_s, inner })
}

/// −4C/(C−1)·s_min, the ceiling on ⟨∇D, ∇S⟩.
pub fn anticorrelation_ceiling(schema: &TraitSchema) -> f64 {
    let c = schema.num_cells() as f64;
    -4.0 * c / (c - 1.0) * schema.s_min()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCheck {
    pub group_id: String,
    pub n: usize,
    pub d: f64,
    pub s: f64,
    pub s_n: Option<f64>,
    pub ds_violations: Vec<BoundKind>,
    /// Absent when the group has a single member.
    pub dsn_violations: Option<Vec<BoundKind>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub checked: usize,
    pub violations: usize,
    /// Pearson correlation across points; absent with fewer than two points or zero variance.
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub region: RegionSpec,
    pub tol: f64,
    pub ds: PairSummary,
    pub dsn: PairSummary,
    pub points: Vec<PointCheck>,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Checks (d, s) and, where defined, (d, s_n) against R.
pub fn verify_roster_bounds(points: &[MetricPoint], region: &RegionSpec, tol: f64) -> BoundsReport {
    let checks: Vec<PointCheck> = points
        .iter()
        .map(|p| PointCheck {
            group_id: p.group_id.clone(),
            n: p.n,
            d: p.d,
            s: p.s,
            s_n: p.s_n,
            ds_violations: region.violations(p.d, p.s, tol),
            dsn_violations: p.s_n.map(|sn| region.violations(p.d, sn, tol)),
        })
        .collect();

    let d: Vec<f64> = points.iter().map(|p| p.d).collect();
    let s: Vec<f64> = points.iter().map(|p| p.s).collect();
    let (dn, sn): (Vec<f64>, Vec<f64>) = points.iter().filter_map(|p| p.s_n.map(|x| (p.d, x))).unzip();

    BoundsReport {
        region: region.clone(),
        tol,
        ds: PairSummary {
            checked: checks.len(),
            violations: checks.iter().filter(|c| !c.ds_violations.is_empty()).count(),
            correlation: pearson(&d, &s),
        },
        dsn: PairSummary {
            checked: dn.len(),
            violations: checks
                .iter()
                .filter(|c| c.dsn_violations.as_ref().is_some_and(|v| !v.is_empty()))
                .count(),
            correlation: pearson(&dn, &sn),
        },
        points: checks,
    }
}
