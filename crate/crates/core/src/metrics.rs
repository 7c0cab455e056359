//! Intersecting diversity D, shared identity S and its finite-group variant S_N.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Individual, Roster, TraitSchema};

/// Overshoot beyond [0, 1] that is attributed to rounding and clamped away.
pub const CLAMP_TOL: f64 = 1e-12;

/// Tolerance on Σ p_c = 1 for a valid distribution.
pub const SUM_TOL: f64 = 1e-12;

pub(crate) fn clamp_unit(what: &'static str, x: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else if (-CLAMP_TOL..0.0).contains(&x) {
        Ok(0.0)
    } else if x > 1.0 && x <= 1.0 + CLAMP_TOL {
        Ok(1.0)
    } else {
        Err(Error::OutOfUnitInterval { what, value: x })
    }
}

/// Flattened cell → value-tuple table used by the hot loops.
///
/// `shared_identity` and `apply_q` work from trait marginals, so they cost
/// O(C·T) and never materialize the C×C quadratic-form matrix.
#[derive(Debug, Clone)]
pub struct CellLayout {
    cards: Vec<usize>,
    offsets: Vec<usize>,
    cells: Vec<usize>,
    num_cells: usize,
}

impl CellLayout {
    pub fn new(schema: &TraitSchema) -> Self {
        let cards = schema.cardinalities();
        let t = cards.len();
        let mut offsets = Vec::with_capacity(t);
        let mut acc = 0;
        for &k in &cards {
            offsets.push(acc);
            acc += k;
        }
        let num_cells = schema.num_cells();
        let mut cells = Vec::with_capacity(num_cells * t);
        for c in 0..num_cells {
            // store the marginal slot directly: offset of trait + value
            for (tr, v) in schema.cell_values(c).into_iter().enumerate() {
                cells.push(offsets[tr] + v);
            }
        }
        CellLayout { cards, offsets, cells, num_cells }
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_traits(&self) -> usize {
        self.cards.len()
    }

    fn marginal_len(&self) -> usize {
        self.cards.iter().sum()
    }

    /// Concatenated per-trait marginals of `p`.
    pub fn marginals(&self, p: &[f64]) -> Vec<f64> {
        let t = self.num_traits();
        let mut m = vec![0.0; self.marginal_len()];
        for (c, &pc) in p.iter().enumerate() {
            for &slot in &self.cells[c * t..(c + 1) * t] {
                m[slot] += pc;
            }
        }
        m
    }

    /// Marginals of trait `tr` only.
    pub fn trait_marginal<'a>(&self, all: &'a [f64], tr: usize) -> &'a [f64] {
        &all[self.offsets[tr]..self.offsets[tr] + self.cards[tr]]
    }

    /// S(p) = (1/T) Σ_t Σ_v m_{t,v}², without clamping.
    pub fn shared_identity(&self, p: &[f64]) -> f64 {
        let m = self.marginals(p);
        m.iter().map(|x| x * x).sum::<f64>() / self.num_traits() as f64
    }

    /// Q·p, i.e. the gradient of S, with (Q p)_c = (2/T) Σ_t m_{t,c_t}.
    pub fn apply_q(&self, p: &[f64], out: &mut [f64]) {
        let m = self.marginals(p);
        self.apply_q_from_marginals(&m, out);
    }

    pub fn apply_q_from_marginals(&self, m: &[f64], out: &mut [f64]) {
        let t = self.num_traits();
        let scale = 2.0 / t as f64;
        for (c, o) in out.iter_mut().enumerate() {
            *o = scale * self.cells[c * t..(c + 1) * t].iter().map(|&s| m[s]).sum::<f64>();
        }
    }
}

/// Probability vector over aggregate identities in the schema's cell order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityDistribution {
    schema: TraitSchema,
    p: Vec<f64>,
}

impl IdentityDistribution {
    pub fn new(schema: TraitSchema, p: Vec<f64>) -> Result<Self> {
        if p.len() != schema.num_cells() {
            return Err(Error::InvalidDistribution(format!(
                "length {} does not match C = {}",
                p.len(),
                schema.num_cells()
            )));
        }
        if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("entry {x} is negative or not finite")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(IdentityDistribution { schema, p })
    }

    pub fn uniform(schema: TraitSchema) -> Self {
        let c = schema.num_cells();
        IdentityDistribution { schema, p: vec![1.0 / c as f64; c] }
    }

    pub fn dirac(schema: TraitSchema, cell: usize) -> Result<Self> {
        let mut p = vec![0.0; schema.num_cells()];
        *p.get_mut(cell)
            .ok_or_else(|| Error::InvalidArgument(format!("cell {cell} out of range")))? = 1.0;
        Ok(IdentityDistribution { schema, p })
    }

    pub fn schema(&self) -> &TraitSchema {
        &self.schema
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    /// Σ_c p_c², the with-replacement probability of sharing every trait.
    pub fn collision_probability(&self) -> f64 {
        self.p.iter().map(|x| x * x).sum()
    }

    /// Marginal distribution of one trait.
    pub fn marginal(&self, trait_index: usize) -> Vec<f64> {
        let k = self.schema.cardinalities()[trait_index];
        let mut m = vec![0.0; k];
        for (c, &pc) in self.p.iter().enumerate() {
            m[self.schema.cell_values(c)[trait_index]] += pc;
        }
        m
    }
}

/// Empirical distribution of aggregate identities in a group.
pub fn aggregate(group: &[Individual], schema: &TraitSchema) -> Result<IdentityDistribution> {
    if group.is_empty() {
        return Err(Error::TooFewIndividuals { needed: 1, got: 0 });
    }
    let mut counts = vec![0u64; schema.num_cells()];
    for ind in group {
        ind.check(schema)?;
        let c = schema.cell_index(&ind.values).expect("checked above");
        counts[c] += 1;
    }
    let n = group.len() as f64;
    let p = counts.into_iter().map(|k| k as f64 / n).collect();
    Ok(IdentityDistribution { schema: schema.clone(), p })
}

/// D = C/(C−1) · (1 − Σ_c p_c²).
pub fn metric_d(dist: &IdentityDistribution) -> Result<f64> {
    let c = dist.schema.num_cells();
    if c < 2 {
        return Err(Error::SingleCell);
    }
    let c = c as f64;
    clamp_unit("D", c / (c - 1.0) * (1.0 - dist.collision_probability()))
}

/// S = (1/T) Σ_t Σ_v (marginal of value v in trait t)².
pub fn metric_s(dist: &IdentityDistribution) -> Result<f64> {
    let layout = CellLayout::new(&dist.schema);
    clamp_unit("S", layout.shared_identity(&dist.p))
}

fn common_trait_count(group: &[Individual]) -> Result<usize> {
    let t = group[0].values.len();
    if t == 0 {
        return Err(Error::InvalidArgument("individuals carry no traits".into()));
    }
    if let Some(bad) = group.iter().find(|i| i.values.len() != t) {
        return Err(Error::TupleLength { id: bad.id.clone(), expected: t, got: bad.values.len() });
    }
    Ok(t)
}

fn shared(a: &Individual, b: &Individual) -> usize {
    a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count()
}

/// S_N: shared trait characteristics summed over unordered pairs, divided by T·C(N,2).
pub fn metric_s_n(group: &[Individual]) -> Result<f64> {
    if group.len() < 2 {
        return Err(Error::TooFewIndividuals { needed: 2, got: group.len() });
    }
    let t = common_trait_count(group)?;
    let mut total: u64 = 0;
    for i in 1..group.len() {
        for j in 0..i {
            total += shared(&group[i], &group[j]) as u64;
        }
    }
    let n = group.len() as u64;
    let pairs = n * (n - 1) / 2;
    clamp_unit("S_N", total as f64 / (t as f64 * pairs as f64))
}

/// S = (1 − 1/n)·S_N + 1/n.
pub fn s_from_s_n(s_n: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewIndividuals { needed: 2, got: n });
    }
    let s_n = clamp_unit("S_N", s_n)?;
    let n = n as f64;
    Ok((1.0 - 1.0 / n) * s_n + 1.0 / n)
}

/// Inverse of [`s_from_s_n`]: S_N = (n·S − 1)/(n − 1). Not clamped.
pub fn s_n_from_s(s: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewIndividuals { needed: 2, got: n });
    }
    let n = n as f64;
    Ok((n * s - 1.0) / (n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSampling {
    WithReplacement,
    WithoutReplacement,
}

/// Distribution of the number X of shared traits over ordered pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedCountDistribution {
    pub mode: PairSampling,
    /// `probs[x]` = P(X = x) for x = 0..=T.
    pub probs: Vec<f64>,
}

impl SharedCountDistribution {
    pub fn expectation(&self) -> f64 {
        self.probs.iter().enumerate().map(|(x, p)| x as f64 * p).sum()
    }

    pub fn num_traits(&self) -> usize {
        self.probs.len() - 1
    }
}

/// Exact distribution of X by enumerating all ordered pairs of the group.
pub fn shared_count_distribution(group: &[Individual], mode: PairSampling) -> Result<SharedCountDistribution> {
    let needed = match mode {
        PairSampling::WithReplacement => 1,
        PairSampling::WithoutReplacement => 2,
    };
    if group.len() < needed {
        return Err(Error::TooFewIndividuals { needed, got: group.len() });
    }
    let t = common_trait_count(group)?;
    let mut counts = vec![0u64; t + 1];
    for (i, a) in group.iter().enumerate() {
        for (j, b) in group.iter().enumerate() {
            if i == j && mode == PairSampling::WithoutReplacement {
                continue;
            }
            counts[shared(a, b)] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let probs = counts.into_iter().map(|k| k as f64 / total as f64).collect();
    Ok(SharedCountDistribution { mode, probs })
}

/// (D, S, S_N) for one group. `s_n` is absent for groups of one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub group_id: String,
    pub n: usize,
    pub d: f64,
    pub s: f64,
    pub s_n: Option<f64>,
}

impl MetricPoint {
    pub fn compute(group_id: impl Into<String>, group: &[Individual], schema: &TraitSchema) -> Result<Self> {
        let dist = aggregate(group, schema)?;
        let s_n = if group.len() >= 2 { Some(metric_s_n(group)?) } else { None };
        Ok(MetricPoint {
            group_id: group_id.into(),
            n: group.len(),
            d: metric_d(&dist)?,
            s: metric_s(&dist)?,
            s_n,
        })
    }
}

/// One metric point per group, optionally on a projection of the traits.
pub fn metrics_for_roster(roster: &Roster, trait_subset: Option<&[usize]>) -> Result<Vec<MetricPoint>> {
    let projected;
    let roster = match trait_subset {
        Some(subset) => {
            projected = roster.project(subset)?;
            &projected
        }
        None => roster,
    };
    let schema = roster.schema();
    let groups: Vec<_> = roster.groups().iter().collect();
    groups
        .par_iter()
        .map(|(gid, members)| MetricPoint::compute(gid.as_str(), members, schema))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema22() -> TraitSchema {
        TraitSchema::from_cardinalities(&[2, 2]).unwrap()
    }

    fn trio() -> Vec<Individual> {
        vec![
            Individual::new("a", vec![0, 0]),
            Individual::new("b", vec![0, 1]),
            Individual::new("c", vec![1, 1]),
        ]
    }

    #[test]
    fn aggregate_examples() {
        let s = schema22();
        let homog: Vec<_> = (0..3).map(|i| Individual::new(i.to_string(), vec![0, 0])).collect();
        assert_eq!(aggregate(&homog, &s).unwrap().probs(), &[1.0, 0.0, 0.0, 0.0]);
        let third = 1.0 / 3.0;
        assert_eq!(aggregate(&trio(), &s).unwrap().probs(), &[third, third, 0.0, third]);

        let s26 = TraitSchema::from_cardinalities(&[2, 6]).unwrap();
        let all: Vec<_> = (0..12).map(|c| Individual::new(c.to_string(), s26.cell_values(c))).collect();
        assert!(aggregate(&all, &s26).unwrap().probs().iter().all(|&p| p == 1.0 / 12.0));
    }

    #[test]
    fn aggregate_errors() {
        let s = schema22();
        assert!(aggregate(&[], &s).is_err());
        let bad = [Individual::new("x", vec![0, 5])];
        assert!(matches!(aggregate(&bad, &s), Err(Error::ValueOutOfRange { .. })));
    }

    #[test]
    fn d_and_s_examples() {
        let s = schema22();
        let dirac = IdentityDistribution::dirac(s.clone(), 2).unwrap();
        assert_eq!(metric_d(&dirac).unwrap(), 0.0);
        assert_eq!(metric_s(&dirac).unwrap(), 1.0);

        let uni = IdentityDistribution::uniform(TraitSchema::from_cardinalities(&[2, 6]).unwrap());
        assert!((metric_d(&uni).unwrap() - 1.0).abs() < 1e-14);
        assert!((metric_s(&uni).unwrap() - 1.0 / 3.0).abs() < 1e-14);

        let p = aggregate(&trio(), &s).unwrap();
        assert!((metric_d(&p).unwrap() - 8.0 / 9.0).abs() < 1e-14);
        assert!((metric_s(&p).unwrap() - 5.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn d_rejects_single_cell() {
        let s = TraitSchema::from_cardinalities(&[1]).unwrap();
        let p = IdentityDistribution::uniform(s);
        assert!(matches!(metric_d(&p), Err(Error::SingleCell)));
        assert_eq!(metric_s(&p).unwrap(), 1.0);
    }

    #[test]
    fn clamp_only_absorbs_rounding() {
        assert_eq!(clamp_unit("x", 1.0 + 5e-13).unwrap(), 1.0);
        assert_eq!(clamp_unit("x", -5e-13).unwrap(), 0.0);
        assert!(clamp_unit("x", 1.0 + 1e-9).is_err());
        assert!(clamp_unit("x", f64::NAN).is_err());
    }

    #[test]
    fn distribution_validation() {
        let s = schema22();
        assert!(IdentityDistribution::new(s.clone(), vec![0.5, 0.5, 0.0]).is_err());
        assert!(IdentityDistribution::new(s.clone(), vec![0.5, 0.6, 0.0, -0.1]).is_err());
        assert!(IdentityDistribution::new(s.clone(), vec![0.5, 0.5, 0.1, 0.0]).is_err());
        assert!(IdentityDistribution::new(s, vec![0.25; 4]).is_ok());
    }

    #[test]
    fn s_n_examples() {
        assert!((metric_s_n(&trio()).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let same: Vec<_> = (0..5).map(|i| Individual::new(i.to_string(), vec![1, 0, 2])).collect();
        assert_eq!(metric_s_n(&same).unwrap(), 1.0);
        let apart = [Individual::new("a", vec![0, 0]), Individual::new("b", vec![1, 1])];
        assert_eq!(metric_s_n(&apart).unwrap(), 0.0);
        assert!(matches!(metric_s_n(&apart[..1]), Err(Error::TooFewIndividuals { .. })));
    }

    #[test]
    fn affine_relation_examples() {
        assert!((s_from_s_n(1.0 / 3.0, 3).unwrap() - 5.0 / 9.0).abs() < 1e-15);
        for k in 0..=20 {
            let s_n = k as f64 / 20.0;
            let s = s_from_s_n(s_n, 10).unwrap();
            assert!(s >= 0.1);
            assert!((s_n_from_s(s, 10).unwrap() - s_n).abs() < 1e-12);
        }
        assert!(s_from_s_n(0.5, 1).is_err());
    }

    #[test]
    fn shared_count_examples() {
        let wo = shared_count_distribution(&trio(), PairSampling::WithoutReplacement).unwrap();
        let expect = [1.0 / 3.0, 2.0 / 3.0, 0.0];
        wo.probs.iter().zip(expect).for_each(|(a, b)| assert!((a - b).abs() < 1e-15));
        let w = shared_count_distribution(&trio(), PairSampling::WithReplacement).unwrap();
        let expect = [2.0 / 9.0, 4.0 / 9.0, 3.0 / 9.0];
        w.probs.iter().zip(expect).for_each(|(a, b)| assert!((a - b).abs() < 1e-15));

        let same: Vec<_> = (0..4).map(|i| Individual::new(i.to_string(), vec![1, 1])).collect();
        for mode in [PairSampling::WithReplacement, PairSampling::WithoutReplacement] {
            assert_eq!(shared_count_distribution(&same, mode).unwrap().probs, vec![0.0, 0.0, 1.0]);
        }
        let one = &trio()[..1];
        assert!(shared_count_distribution(one, PairSampling::WithoutReplacement).is_err());
        assert!(shared_count_distribution(one, PairSampling::WithReplacement).is_ok());
    }

    #[test]
    fn single_member_groups_have_no_s_n() {
        let p = MetricPoint::compute("solo", &trio()[..1], &schema22()).unwrap();
        assert_eq!((p.d, p.s, p.s_n), (0.0, 1.0, None));
    }

    #[test]
    fn roster_projection_to_one_trait() {
        use std::collections::BTreeMap;
        let mut groups = BTreeMap::new();
        groups.insert("g".to_string(), trio());
        let roster = Roster::new(schema22(), groups).unwrap();
        let full = metrics_for_roster(&roster, None).unwrap();
        assert_eq!(full, metrics_for_roster(&roster, Some(&[0, 1])).unwrap());

        let one = metrics_for_roster(&roster, Some(&[0])).unwrap();
        let pt = &one[0];
        assert!((pt.d - 8.0 / 9.0).abs() < 1e-14);
        assert!((pt.s - 5.0 / 9.0).abs() < 1e-14);
        assert!((pt.s - (1.0 - 0.5 * pt.d)).abs() < 1e-14);
        assert!(metrics_for_roster(&roster, Some(&[3])).is_err());
    }
}
