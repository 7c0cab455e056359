//! Numerical extremes of S at fixed D over the probability simplex.
//!
//! For each target diversity d the feasible set is the simplex intersected
//! with the sphere ‖p‖² = 1 − ((C−1)/C)·d. Each local solve runs a projected
//! gradient method whose iterates are kept exactly feasible: a Euclidean
//! projection onto the simplex followed by a retraction back onto the sphere.
//! Many random starts per grid point guard against the nonconvexity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::CellLayout;
use crate::schema::TraitSchema;

pub const DEFAULT_GRID: usize = 101;
pub const DEFAULT_RESTARTS: usize = 50;
/// Largest accepted constraint violation of a reported optimizer.
pub const RESIDUAL_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 3000;
const DIRICHLET_ALPHAS: [f64; 6] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Solved,
    ClosedForm,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub d: f64,
    pub s_max: f64,
    pub s_min: f64,
    pub residual_max: f64,
    pub residual_min: f64,
    pub restarts_used: usize,
    pub status: PointStatus,
    pub argmax: Vec<f64>,
    pub argmin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub num_cells: usize,
    pub num_traits: usize,
    pub restarts: usize,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.d).collect()
    }

    pub fn s_max(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.s_max).collect()
    }

    pub fn s_min_curve(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.s_min).collect()
    }

    /// Piecewise-linear interpolation of (s_min, s_max) at `d` over solved points.
    pub fn envelope_at(&self, d: f64) -> Option<(f64, f64)> {
        let pts: Vec<&SweepPoint> = self.points.iter().filter(|p| p.status != PointStatus::Infeasible).collect();
        let i = pts.windows(2).position(|w| d >= w[0].d && d <= w[1].d)?;
        let (a, b) = (pts[i], pts[i + 1]);
        let t = if b.d > a.d { (d - a.d) / (b.d - a.d) } else { 0.0 };
        Some((a.s_min + t * (b.s_min - a.s_min), a.s_max + t * (b.s_max - a.s_max)))
    }
}

/// Squared norm matching diversity `d`.
pub fn target_norm_sq(num_cells: usize, d: f64) -> f64 {
    let c = num_cells as f64;
    1.0 - (c - 1.0) / c * d
}

pub fn sweep(schema: &TraitSchema, grid_size: usize, restarts: usize, seed: u64) -> Result<SweepResult> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!("grid size must be at least 2, got {grid_size}")));
    }
    if restarts < 1 {
        return Err(Error::InvalidArgument("at least one restart is required".into()));
    }
    let c = schema.num_cells();
    if c < 2 {
        return Err(Error::SingleCell);
    }
    let layout = CellLayout::new(schema);
    let grid: Vec<f64> = (0..grid_size).map(|i| i as f64 / (grid_size - 1) as f64).collect();
    let lipschitz = 2.0 * c as f64 * schema.s_min();

    // task index = (grid index · 2 + direction) · restarts + restart
    let interior: Vec<usize> = (0..grid_size).filter(|&i| needs_solve(c, grid[i])).collect();
    let tasks: Vec<(usize, Direction, usize)> = interior
        .iter()
        .flat_map(|&i| {
            [Direction::Maximize, Direction::Minimize]
                .into_iter()
                .flat_map(move |dir| (0..restarts).map(move |r| (i, dir, r)))
        })
        .collect();
    let solved: Vec<(f64, Vec<f64>)> = tasks
        .par_iter()
        .map(|&(i, dir, r)| {
            let task = ((i * 2 + dir as usize) * restarts + r) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ task);
            let target = target_norm_sq(c, grid[i]);
            let start = random_start(c, DIRICHLET_ALPHAS[r % DIRICHLET_ALPHAS.len()], &mut rng);
            local_solve(&layout, target, dir, start, lipschitz)
        })
        .collect();

    let mut by_task = solved.into_iter();
    let mut points = Vec::with_capacity(grid_size);
    for (i, &d) in grid.iter().enumerate() {
        let target = target_norm_sq(c, d);
        if !(1.0 / c as f64 - 1e-12..=1.0 + 1e-12).contains(&target) {
            points.push(SweepPoint {
                d,
                s_max: f64::NAN,
                s_min: f64::NAN,
                residual_max: f64::NAN,
                residual_min: f64::NAN,
                restarts_used: 0,
                status: PointStatus::Infeasible,
                argmax: vec![],
                argmin: vec![],
            });
            continue;
        }
        if !interior.contains(&i) {
            points.push(closed_form_point(schema, &layout, d));
            continue;
        }
        let best_max = best_of(by_task.by_ref().take(restarts), Direction::Maximize);
        let best_min = best_of(by_task.by_ref().take(restarts), Direction::Minimize);
        let worst = residual(&best_max.1, target).max(residual(&best_min.1, target));
        if worst.is_nan() || worst > RESIDUAL_TOL {
            return Err(Error::Optimization(format!("constraint residual {worst:e} at d = {d}")));
        }
        points.push(SweepPoint {
            d,
            s_max: best_max.0,
            s_min: best_min.0,
            residual_max: residual(&best_max.1, target),
            residual_min: residual(&best_min.1, target),
            restarts_used: restarts,
            status: PointStatus::Solved,
            argmax: best_max.1,
            argmin: best_min.1,
        });
    }
    Ok(SweepResult { num_cells: c, num_traits: schema.num_traits(), restarts, seed, points })
}

fn needs_solve(c: usize, d: f64) -> bool {
    let target = target_norm_sq(c, d);
    d > 0.0 && d < 1.0 && target > 1.0 / c as f64 && target < 1.0
}

/// d = 0 admits only point masses and d = 1 only the uniform distribution.
fn closed_form_point(schema: &TraitSchema, layout: &CellLayout, d: f64) -> SweepPoint {
    let c = schema.num_cells();
    let p = if d <= 0.0 {
        let mut p = vec![0.0; c];
        p[0] = 1.0;
        p
    } else {
        vec![1.0 / c as f64; c]
    };
    let s = if d <= 0.0 { 1.0 } else { schema.s_min() };
    let res = residual(&p, target_norm_sq(c, d));
    debug_assert!((layout.shared_identity(&p) - s).abs() < 1e-12);
    SweepPoint {
        d,
        s_max: s,
        s_min: s,
        residual_max: res,
        residual_min: res,
        restarts_used: 0,
        status: PointStatus::ClosedForm,
        argmax: p.clone(),
        argmin: p,
    }
}

/// First-best in restart order, so ties resolve to the lowest restart index.
fn best_of(results: impl Iterator<Item = (f64, Vec<f64>)>, dir: Direction) -> (f64, Vec<f64>) {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (s, p) in results {
        let better = match &best {
            None => true,
            Some((b, _)) => match dir {
                Direction::Maximize => s > *b,
                Direction::Minimize => s < *b,
            },
        };
        if better {
            best = Some((s, p));
        }
    }
    best.expect("restarts ≥ 1")
}

/// Largest violation among the simplex and norm constraints.
pub fn residual(p: &[f64], target: f64) -> f64 {
    let sum: f64 = p.iter().sum();
    let norm: f64 = p.iter().map(|x| x * x).sum();
    let neg = p.iter().fold(0.0f64, |acc, &x| acc.max(-x));
    (sum - 1.0).abs().max((norm - target).abs()).max(neg)
}

fn random_start(c: usize, alpha: f64, rng: &mut impl Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut p: Vec<f64> = (0..c).map(|_| gamma.sample(rng)).collect();
    let total: f64 = p.iter().sum();
    if total > 0.0 && total.is_finite() {
        p.iter_mut().for_each(|x| *x /= total);
    } else {
        p.iter_mut().for_each(|x| *x = 0.0);
        p[rng.random_range(0..c)] = 1.0;
    }
    p
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Moves a simplex point onto ‖p‖² = target while staying in the simplex.
///
/// Too-large norms shrink towards the centroid of the current face (or the
/// uniform point when that face cannot reach the target); too-small norms expand
/// away from the centroid of the current face, dropping coordinates that
/// reach zero until the target is met.
pub fn retract_to_norm(p: &mut [f64], target: f64) {
    let c = p.len();
    let norm: f64 = p.iter().map(|x| x * x).sum();
    if norm > target {
        // shrink within the current face when its centroid is small enough,
        // so coordinates at zero stay at zero
        let k = p.iter().filter(|&&x| x > 0.0).count();
        let on_face = 1.0 / k as f64 <= target;
        let u = if on_face { 1.0 / k as f64 } else { 1.0 / c as f64 };
        let excess = norm - u;
        if excess <= 0.0 {
            return;
        }
        let t = ((target - u).max(0.0) / excess).sqrt();
        p.iter_mut()
            .filter(|x| !on_face || **x > 0.0)
            .for_each(|x| *x = u + t * (*x - u));
        return;
    }
    if norm == target {
        return;
    }
    loop {
        let support: Vec<usize> = (0..c).filter(|&i| p[i] > 0.0).collect();
        let k = support.len();
        let centre = 1.0 / k as f64;
        let spread: f64 = support.iter().map(|&i| (p[i] - centre).powi(2)).sum();
        if k == 1 {
            return;
        }
        if spread < 1e-20 {
            // at the face centroid: push the first support coordinate up
            let lead = support[0];
            let w: Vec<f64> = support
                .iter()
                .map(|&i| if i == lead { 1.0 - centre } else { -centre })
                .collect();
            let scale = (1.0 - centre) * (1.0 - centre) + (k - 1) as f64 * centre * centre;
            let t = ((target - centre).max(0.0) / scale).sqrt().min(1.0);
            for (&i, wi) in support.iter().zip(&w) {
                p[i] = centre + t * wi;
            }
            if t < 1.0 {
                return;
            }
            continue;
        }
        let t = ((target - centre).max(0.0) / spread).sqrt();
        let mut block = f64::INFINITY;
        let mut block_at = usize::MAX;
        for &i in &support {
            let w = p[i] - centre;
            if w < 0.0 {
                let tb = -centre / w;
                if tb < block {
                    block = tb;
                    block_at = i;
                }
            }
        }
        let step = t.min(block);
        for &i in &support {
            p[i] = centre + step * (p[i] - centre);
        }
        if t <= block {
            return;
        }
        p[block_at] = 0.0;
        for &i in &support {
            if p[i] < 0.0 {
                p[i] = 0.0;
            }
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
    }
}

/// Maps a gradient step back onto the feasible set.
///
/// When the simplex projection overshoots the norm, the exact projection onto
/// simplex ∩ ball is Π(s·y) for the scale s ∈ (0, 1] meeting the target,
/// found by bisection; otherwise the point is expanded onto the sphere.
fn project_feasible(y: &[f64], target: f64) -> Vec<f64> {
    let mut q = project_simplex(y);
    let norm: f64 = q.iter().map(|x| x * x).sum();
    if norm > target {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            let scaled: Vec<f64> = y.iter().map(|x| mid * x).collect();
            let cand = project_simplex(&scaled);
            if cand.iter().map(|x| x * x).sum::<f64>() > target {
                hi = mid;
            } else {
                lo = mid;
                q = cand;
            }
            if hi - lo < 1e-15 * hi {
                break;
            }
        }
        if lo == 0.0 {
            q = vec![1.0 / y.len() as f64; y.len()];
        }
    }
    retract_to_norm(&mut q, target);
    q
}

/// One projected-gradient run with backtracking; returns (S, p).
fn local_solve(layout: &CellLayout, target: f64, dir: Direction, start: Vec<f64>, lipschitz: f64) -> (f64, Vec<f64>) {
    let sign = match dir {
        Direction::Maximize => -1.0,
        Direction::Minimize => 1.0,
    };
    let c = start.len();
    let mut p = start;
    retract_to_norm(&mut p, target);
    let mut f = sign * layout.shared_identity(&p);
    let mut step = 1.0 / lipschitz;
    let mut grad = vec![0.0; c];
    let mut stalls = 0;
    for _ in 0..MAX_ITERS {
        layout.apply_q(&p, &mut grad);
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = p.iter().zip(&grad).map(|(x, g)| x - step * sign * g).collect();
            let q = project_feasible(&trial, target);
            let fq = sign * layout.shared_identity(&q);
            let moved: f64 = q.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
            if fq <= f - 1e-4 * moved / step {
                accepted = Some((q, fq, moved));
                break;
            }
            step *= 0.5;
        }
        let Some((q, fq, moved)) = accepted else { break };
        let gain = f - fq;
        p = q;
        f = fq;
        if moved < 1e-26 {
            break;
        }
        stalls = if gain < 1e-15 { stalls + 1 } else { 0 };
        if stalls >= 5 {
            break;
        }
        step = (step * 2.0).min(1e3 / lipschitz);
    }
    (sign * f, p)
}
