//! Exact attainable (D, S) region for two traits.
//!
//! With v1 ≤ v2 the region is bounded by the segments P1–P2 (on the upper
//! line of R), P2–P3, the flat segment Q5–P3 at S = s_min, and P1–P4 (on the
//! lower line of R). The boundary between P4 and Q5 is not established; the
//! straight chord P4–Q5 is used as an inner approximation and everything
//! between it and the proved constraints is reported as conjectural.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{metric_d, metric_s, IdentityDistribution};
use crate::schema::TraitSchema;

/// Null-space dimension up to which q5 is certified by exhaustive vertex enumeration.
pub const EXACT_VERTEX_DIM: usize = 12;
/// Starts for the projected ascent used above [`EXACT_VERTEX_DIM`].
pub const ASCENT_STARTS: usize = 50;
/// Default sampling density for exported segment polylines.
pub const DEFAULT_RESOLUTION: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point2 {
    pub d: f64,
    pub s: f64,
}

impl Point2 {
    pub const fn new(d: f64, s: f64) -> Self {
        Point2 { d, s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Segment {
    L12,
    L23,
    L14,
    /// The S = s_min segment from Q5 to P3.
    Q5P3,
}

impl Segment {
    pub const ALL: [Segment; 4] = [Segment::L12, Segment::L23, Segment::L14, Segment::Q5P3];

    pub fn name(self) -> &'static str {
        match self {
            Segment::L12 => "L12",
            Segment::L23 => "L23",
            Segment::L14 => "L14",
            Segment::Q5P3 => "Q5P3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q5Solution {
    pub q5: f64,
    /// max ‖x⁰‖² over the feasible part of the null space of Q.
    pub m_star: f64,
    /// Maximizing null-space vector x⁰ (length C).
    pub x0: Vec<f64>,
    /// True when m* comes from exhaustive vertex enumeration.
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttainableRegion {
    pub v1: usize,
    pub v2: usize,
    pub c: usize,
    pub s_min: f64,
    pub p1: Point2,
    pub p2: Point2,
    pub p3: Point2,
    pub p4: Point2,
    pub q5: Point2,
    pub q5_solution: Q5Solution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Inside,
    Outside,
    Conjectural,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryWitness {
    pub segment: Segment,
    pub alpha: f64,
    pub dist: IdentityDistribution,
    pub point: Point2,
}

fn check_dims(v1: usize, v2: usize) -> Result<()> {
    if v1 < 2 || v2 < v1 {
        return Err(Error::InvalidArgument(format!(
            "two-trait region needs 2 ≤ v1 ≤ v2, got v1 = {v1}, v2 = {v2}"
        )));
    }
    Ok(())
}

pub fn attainable_region(v1: usize, v2: usize) -> Result<AttainableRegion> {
    check_dims(v1, v2)?;
    let q5_solution = compute_q5(v1, v2)?;
    let (a, b) = (v1 as f64, v2 as f64);
    let c = a * b;
    let s_min = (a + b) / (2.0 * c);
    Ok(AttainableRegion {
        v1,
        v2,
        c: v1 * v2,
        s_min,
        p1: Point2::new(0.0, 1.0),
        p2: Point2::new(a * (b - 1.0) / (c - 1.0), (b + 1.0) / (2.0 * b)),
        p3: Point2::new(1.0, s_min),
        p4: Point2::new((a - 1.0) * b / (c - 1.0), 1.0 / a),
        q5: Point2::new(q5_solution.q5, s_min),
        q5_solution,
    })
}

fn lerp_s(a: Point2, b: Point2, d: f64) -> f64 {
    if (b.d - a.d).abs() < f64::EPSILON {
        return a.s.min(b.s);
    }
    a.s + (b.s - a.s) * (d - a.d) / (b.d - a.d)
}

impl AttainableRegion {
    pub fn schema(&self) -> TraitSchema {
        TraitSchema::from_cardinalities(&[self.v1, self.v2]).expect("valid cardinalities")
    }

    /// Largest attainable S at diversity `d` (polyline P1–P2–P3).
    pub fn upper_boundary(&self, d: f64) -> f64 {
        if d <= self.p2.d {
            lerp_s(self.p1, self.p2, d)
        } else {
            lerp_s(self.p2, self.p3, d)
        }
    }

    /// Lower boundary using the chord P4–Q5 between the proved pieces.
    pub fn lower_boundary(&self, d: f64) -> f64 {
        if d <= self.p4.d {
            lerp_s(self.p1, self.p4, d)
        } else if d <= self.q5.d {
            lerp_s(self.p4, self.q5, d)
        } else {
            self.s_min
        }
    }

    /// Polygon P1, P2, P3, Q5, P4 in clockwise order.
    fn polygon(&self) -> [Point2; 5] {
        [self.p1, self.p2, self.p3, self.q5, self.p4]
    }

    pub fn endpoints(&self, segment: Segment) -> (Point2, Point2) {
        match segment {
            Segment::L12 => (self.p1, self.p2),
            Segment::L23 => (self.p2, self.p3),
            Segment::L14 => (self.p1, self.p4),
            Segment::Q5P3 => (self.q5, self.p3),
        }
    }

    pub fn alpha_range(&self, segment: Segment) -> (f64, f64) {
        let c = self.c as f64;
        match segment {
            Segment::L14 => (0.0, (self.v1 as f64 - 1.0) / self.v1 as f64),
            Segment::L23 | Segment::L12 => (0.0, 1.0 / c),
            Segment::Q5P3 => (0.0, 1.0),
        }
    }
}

/// An explicit distribution realizing a point of a boundary segment.
///
/// Parametrizations: L14 moves mass from the first cell onto the diagonal
/// cells (i, i); L23 shifts mass from the uniform measure towards the first
/// row; L12 redistributes the first row from uniform to a point mass; Q5P3
/// moves from the uniform measure along the q5 maximizer in the null space.
pub fn witness(region: &AttainableRegion, segment: Segment, alpha: f64) -> Result<BoundaryWitness> {
    let (lo, hi) = region.alpha_range(segment);
    let slack = 1e-12 * hi.max(1.0);
    if !(alpha >= lo - slack && alpha <= hi + slack) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} outside [{lo}, {hi}] for segment {}",
            segment.name()
        )));
    }
    let alpha = alpha.clamp(lo, hi);
    let (v1, v2, c) = (region.v1, region.v2, region.c);
    let cf = c as f64;
    let mut x = vec![0.0; c];
    match segment {
        Segment::L14 => {
            x[0] = 1.0 - alpha;
            for i in 1..v1 {
                x[i * (v2 + 1)] = alpha / (v1 as f64 - 1.0);
            }
        }
        Segment::L23 => {
            for (k, xk) in x.iter_mut().enumerate() {
                let dir = if k < v2 { v1 as f64 - 1.0 } else { -1.0 };
                *xk = 1.0 / cf + alpha * dir;
            }
        }
        Segment::L12 => {
            for (j, xj) in x.iter_mut().take(v2).enumerate() {
                let z = if j == 0 { v2 as f64 - 1.0 } else { -1.0 };
                *xj = 1.0 / v2 as f64 + alpha * v1 as f64 * z;
            }
        }
        Segment::Q5P3 => {
            for (xk, x0) in x.iter_mut().zip(&region.q5_solution.x0) {
                *xk = 1.0 / cf + alpha * x0;
            }
        }
    }
    // rounding at the ends of the parameter range can leave −1e-17 entries
    for xk in &mut x {
        if *xk < 0.0 && *xk > -1e-12 {
            *xk = 0.0;
        }
    }
    let dist = IdentityDistribution::new(region.schema(), x)?;
    let point = Point2::new(metric_d(&dist)?, metric_s(&dist)?);
    Ok(BoundaryWitness { segment, alpha, dist, point })
}

/// Classifies a (d, s) point against the region.
///
/// `Outside` means a proved boundary is violated by more than `tol`;
/// `Conjectural` covers the band between the P4–Q5 chord and the proved
/// lower constraints.
pub fn membership(region: &AttainableRegion, point: Point2, tol: f64) -> Membership {
    let Point2 { d, s } = point;
    let c = region.c as f64;
    let upper_l12 = 1.0 - (c - 1.0) / (2.0 * c) * d;
    let upper_l23 = lerp_s(region.p2, region.p3, d);
    let lower_l14 = 1.0 - (c - 1.0) / c * d;
    if d < -tol
        || d > 1.0 + tol
        || s > upper_l12.min(upper_l23) + tol
        || s < lower_l14 - tol
        || s < region.s_min - tol
    {
        return Membership::Outside;
    }
    if in_convex_polygon(&region.polygon(), point, tol) {
        Membership::Inside
    } else {
        Membership::Conjectural
    }
}

/// Clockwise convex polygon test with distance tolerance; zero-length edges are skipped.
fn in_convex_polygon(poly: &[Point2], p: Point2, tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let (ex, ey) = (b.d - a.d, b.s - a.s);
        let len = (ex * ex + ey * ey).sqrt();
        if len < 1e-15 {
            return true;
        }
        // clockwise: interior lies to the right of each edge
        let cross = ex * (p.s - a.s) - ey * (p.d - a.d);
        -cross / len >= -tol
    })
}

/// Orthonormal basis of the null space of Q for two traits, as C-vectors.
///
/// Spanned by (z, −z) patterns on adjacent row blocks with z ⟂ ε; the
/// spanning set is orthonormalized by modified Gram–Schmidt.
pub fn null_space_basis(v1: usize, v2: usize) -> Vec<Vec<f64>> {
    let c = v1 * v2;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity((v1 - 1) * (v2 - 1));
    for i in 0..v1 - 1 {
        for j in 0..v2 - 1 {
            let mut w = vec![0.0; c];
            w[i * v2 + j] = 1.0;
            w[i * v2 + j + 1] = -1.0;
            w[(i + 1) * v2 + j] = -1.0;
            w[(i + 1) * v2 + j + 1] = 1.0;
            // two passes keep the basis orthogonal to working precision
            for _ in 0..2 {
                for b in &basis {
                    let proj: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.iter_mut().for_each(|x| *x /= norm);
            basis.push(w);
        }
    }
    basis
}

fn q5_from_m_star(c: usize, m_star: f64) -> f64 {
    let c = c as f64;
    c / (c - 1.0) * (1.0 - 1.0 / c - m_star)
}

/// Location of Q5 on the S = s_min line.
///
/// m* = max ‖x⁰‖² over null-space vectors with e/C + x⁰ ≥ 0, which is a
/// convex maximization over a polytope and is attained at a vertex.
pub fn compute_q5(v1: usize, v2: usize) -> Result<Q5Solution> {
    check_dims(v1, v2)?;
    let dim = (v1 - 1) * (v2 - 1);
    let (m_star, x0, certified) = if dim <= EXACT_VERTEX_DIM {
        let (m, x0) = max_norm_by_vertices(v1, v2)?;
        (m, x0, true)
    } else {
        let (m, x0) = max_norm_by_ascent(v1, v2, ASCENT_STARTS, 0x5eed_0005);
        (m, x0, false)
    };
    Ok(Q5Solution { q5: q5_from_m_star(v1 * v2, m_star), m_star, x0, certified })
}

/// Exhaustive enumeration of vertices of {y : e/C + B·y ≥ 0}.
pub fn max_norm_by_vertices(v1: usize, v2: usize) -> Result<(f64, Vec<f64>)> {
    let c = v1 * v2;
    let basis = null_space_basis(v1, v2);
    let k = basis.len();
    // rows of B: constraint normals
    let rows: Vec<Vec<f64>> = (0..c).map(|i| basis.iter().map(|b| b[i]).collect()).collect();
    let rhs = -1.0 / c as f64;

    // split on the first active constraint; reduce in candidate order
    let partial: Vec<Option<(f64, Vec<f64>)>> = (0..=c - k)
        .into_par_iter()
        .map(|first| {
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut combo: Vec<usize> = std::iter::once(first).chain(first + 1..first + k).collect();
            loop {
                if let Some(y) = solve_active(&rows, &combo, rhs) {
                    let feasible = rows.iter().all(|r| dot(r, &y) >= rhs - 1e-12);
                    if feasible {
                        let val = dot(&y, &y);
                        if best.as_ref().is_none_or(|(b, _)| val > *b) {
                            best = Some((val, y));
                        }
                    }
                }
                if !next_combination(&mut combo[1..], first + 1, c) {
                    break;
                }
            }
            best
        })
        .collect();

    let (m, y) = partial
        .into_iter()
        .flatten()
        .fold(None::<(f64, Vec<f64>)>, |acc, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        })
        .ok_or_else(|| Error::Optimization("no feasible vertex found".into()))?;
    let x0 = (0..c).map(|i| dot(&rows[i], &y)).collect();
    Ok((m, x0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Advances `combo` (strictly increasing, values in `lo..hi`) to the next combination.
fn next_combination(combo: &mut [usize], lo: usize, hi: usize) -> bool {
    let k = combo.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < hi - (k - i) {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    let _ = lo;
    false
}

/// Solves rows[combo]·y = rhs·1 by Gaussian elimination; None when singular.
fn solve_active(rows: &[Vec<f64>], combo: &[usize], rhs: f64) -> Option<Vec<f64>> {
    let k = combo.len();
    let mut a: Vec<f64> = Vec::with_capacity(k * (k + 1));
    for &r in combo {
        a.extend_from_slice(&rows[r]);
        a.push(rhs);
    }
    let w = k + 1;
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i * w + col].abs().total_cmp(&a[j * w + col].abs()))?;
        if a[piv * w + col].abs() < 1e-10 {
            return None;
        }
        if piv != col {
            for j in 0..w {
                a.swap(piv * w + j, col * w + j);
            }
        }
        let p = a[col * w + col];
        for i in col + 1..k {
            let f = a[i * w + col] / p;
            if f != 0.0 {
                for j in col..w {
                    a[i * w + j] -= f * a[col * w + j];
                }
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = a[i * w + k];
        for j in i + 1..k {
            acc -= a[i * w + j] * y[j];
        }
        y[i] = acc / a[i * w + i];
    }
    Some(y)
}

/// Multistart projected ascent of ‖x‖² over matrices with uniform marginals.
///
/// Returns (m*, x⁰) for the best start. Start `i` is seeded with `seed ^ i`.
pub fn max_norm_by_ascent(v1: usize, v2: usize, starts: usize, seed: u64) -> (f64, Vec<f64>) {
    let c = v1 * v2;
    let results: Vec<(f64, Vec<f64>)> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
            let x = ascent_from_random_start(v1, v2, &mut rng);
            let m = x.iter().map(|v| v * v).sum::<f64>() - 1.0 / c as f64;
            (m, x)
        })
        .collect();
    let (m, x) = results
        .into_iter()
        .fold(None::<(f64, Vec<f64>)>, |acc, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        })
        .expect("at least one start");
    let x0 = x.iter().map(|v| v - 1.0 / c as f64).collect();
    (m.max(0.0), x0)
}

fn ascent_from_random_start(v1: usize, v2: usize, rng: &mut impl Rng) -> Vec<f64> {
    let c = v1 * v2;
    let uniform = 1.0 / c as f64;
    let mut x: Vec<f64> = (0..c).map(|_| rng.random::<f64>().powi(4) + 1e-3).collect();
    sinkhorn(&mut x, v1, v2, 500);
    let step = 1.0;
    for _ in 0..400 {
        let y: Vec<f64> = x.iter().map(|&xi| xi + step * (xi - uniform)).collect();
        let next = project_transport(&y, v1, v2, 300);
        let delta = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        if delta < 1e-13 {
            break;
        }
    }
    for xi in &mut x {
        if *xi < 1e-12 {
            *xi = 0.0;
        }
    }
    sinkhorn(&mut x, v1, v2, 2000);
    x
}

/// Projection onto the affine set of v1×v2 matrices with uniform marginals.
fn project_marginals(x: &mut [f64], v1: usize, v2: usize) {
    let (r, col) = (1.0 / v1 as f64, 1.0 / v2 as f64);
    let rows: Vec<f64> = (0..v1).map(|i| x[i * v2..(i + 1) * v2].iter().sum()).collect();
    let cols: Vec<f64> = (0..v2).map(|j| (0..v1).map(|i| x[i * v2 + j]).sum()).collect();
    let total: f64 = rows.iter().sum();
    let shift = (1.0 - total) / (v1 * v2) as f64;
    for i in 0..v1 {
        for j in 0..v2 {
            x[i * v2 + j] += (r - rows[i]) / v2 as f64 + (col - cols[j]) / v1 as f64 - shift;
        }
    }
}

/// Dykstra's alternating projection onto {uniform marginals} ∩ {x ≥ 0}.
fn project_transport(y: &[f64], v1: usize, v2: usize, iters: usize) -> Vec<f64> {
    let mut x = y.to_vec();
    let mut p = vec![0.0; x.len()];
    let mut q = vec![0.0; x.len()];
    for _ in 0..iters {
        let mut a: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + pi).collect();
        project_marginals(&mut a, v1, v2);
        for i in 0..x.len() {
            p[i] = x[i] + p[i] - a[i];
        }
        let b: Vec<f64> = a.iter().zip(&q).map(|(ai, qi)| (ai + qi).max(0.0)).collect();
        let mut moved = 0.0f64;
        for i in 0..x.len() {
            q[i] = a[i] + q[i] - b[i];
            moved = moved.max((b[i] - x[i]).abs());
        }
        x = b;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

fn sinkhorn(x: &mut [f64], v1: usize, v2: usize, iters: usize) {
    let (r, col) = (1.0 / v1 as f64, 1.0 / v2 as f64);
    for _ in 0..iters {
        for i in 0..v1 {
            let s: f64 = x[i * v2..(i + 1) * v2].iter().sum();
            if s > 0.0 {
                x[i * v2..(i + 1) * v2].iter_mut().for_each(|v| *v *= r / s);
            }
        }
        let mut worst = 0.0f64;
        for j in 0..v2 {
            let s: f64 = (0..v1).map(|i| x[i * v2 + j]).sum();
            worst = worst.max((s - col).abs());
            if s > 0.0 {
                (0..v1).for_each(|i| x[i * v2 + j] *= col / s);
            }
        }
        if worst < 1e-16 {
            break;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentExport {
    pub label: String,
    pub proved: bool,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corners {
    pub p1: Point2,
    pub p2: Point2,
    pub p3: Point2,
    pub p4: Point2,
    pub q5: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionExport {
    pub v1: usize,
    pub v2: usize,
    pub c: usize,
    pub s_min: f64,
    pub corners: Corners,
    pub m_star: f64,
    pub q5_certified: bool,
    pub resolution: usize,
    pub segments: Vec<SegmentExport>,
}

fn polyline(a: Point2, b: Point2, n: usize) -> Vec<[f64; 2]> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            [a.d + t * (b.d - a.d), a.s + t * (b.s - a.s)]
        })
        .collect()
}

impl AttainableRegion {
    /// Plot-ready export; `resolution` points per segment.
    pub fn export(&self, resolution: usize) -> RegionExport {
        let mut segments: Vec<SegmentExport> = Segment::ALL
            .iter()
            .map(|&seg| {
                let (a, b) = self.endpoints(seg);
                SegmentExport { label: seg.name().into(), proved: true, points: polyline(a, b, resolution) }
            })
            .collect();
        segments.push(SegmentExport {
            label: "P4Q5".into(),
            proved: false,
            points: polyline(self.p4, self.q5, resolution),
        });
        RegionExport {
            v1: self.v1,
            v2: self.v2,
            c: self.c,
            s_min: self.s_min,
            corners: Corners { p1: self.p1, p2: self.p2, p3: self.p3, p4: self.p4, q5: self.q5 },
            m_star: self.q5_solution.m_star,
            q5_certified: self.q5_solution.certified,
            resolution: resolution.max(2),
            segments,
        }
    }
}
