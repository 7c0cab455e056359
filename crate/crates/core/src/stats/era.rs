//! Whole-membership metrics per period, overall and trait by trait.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::MetricPoint;
use crate::schema::{Individual, Roster};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EraPoint {
    pub period: String,
    /// Trait names the point was computed on.
    pub traits: Vec<String>,
    pub point: MetricPoint,
}

/// One point for each period on the chosen traits, then one per single trait.
///
/// Each period's groups are merged into one membership; an individual
/// listed in several groups of the period counts once.
pub fn era_comparison(periods: &BTreeMap<String, Roster>, trait_subset: Option<&[usize]>) -> Result<Vec<EraPoint>> {
    let first = periods
        .values()
        .next()
        .ok_or_else(|| Error::InvalidArgument("no periods given".into()))?;
    let schema = first.schema();
    if periods.values().any(|r| r.schema() != schema) {
        return Err(Error::InvalidSchema("all periods must share one schema".into()));
    }
    let subset: Vec<usize> = match trait_subset {
        Some(s) => s.to_vec(),
        None => (0..schema.num_traits()).collect(),
    };
    let full = schema.project(&subset)?;

    let mut out = Vec::new();
    for (period, roster) in periods {
        let mut seen = HashSet::new();
        let members: Vec<Individual> = roster
            .groups()
            .values()
            .flatten()
            .filter(|i| seen.insert(i.id.as_str()))
            .map(|i| i.project(&subset))
            .collect();
        out.push(EraPoint {
            period: period.clone(),
            traits: full.traits().iter().map(|t| t.name.clone()).collect(),
            point: MetricPoint::compute(period.as_str(), &members, &full)?,
        });
        if subset.len() > 1 {
            for (k, tr) in full.traits().iter().enumerate() {
                let single = full.project(&[k])?;
                let projected: Vec<Individual> = members.iter().map(|i| i.project(&[k])).collect();
                out.push(EraPoint {
                    period: period.clone(),
                    traits: vec![tr.name.clone()],
                    point: MetricPoint::compute(period.as_str(), &projected, &single)?,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::TraitSchema;

    fn period(ids: &[(&str, [usize; 2])]) -> Roster {
        let schema = TraitSchema::from_cardinalities(&[2, 3]).unwrap();
        let mut groups = BTreeMap::new();
        groups.insert("a".into(), ids.iter().map(|(id, v)| Individual::new(*id, v.to_vec())).collect());
        Roster::new(schema, groups).unwrap()
    }

    #[test]
    fn single_trait_points_lie_on_line() {
        let mut m = BTreeMap::new();
        m.insert("s1".into(), period(&[("x", [0, 0]), ("y", [1, 2]), ("z", [0, 1])]));
        let pts = era_comparison(&m, None).unwrap();
        assert_eq!(pts.len(), 3);
        for p in &pts[1..] {
            let c = if p.traits[0] == "t1" { 2.0 } else { 3.0 };
            assert!((p.point.s - (1.0 - (c - 1.0) / c * p.point.d)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_periods_give_identical_points() {
        let r = period(&[("x", [0, 0]), ("y", [1, 2])]);
        let mut m = BTreeMap::new();
        m.insert("before".into(), r.clone());
        m.insert("after".into(), r);
        let pts = era_comparison(&m, None).unwrap();
        let (a, b) = pts.split_at(3);
        for (p, q) in a.iter().zip(b) {
            assert_eq!((p.point.d, p.point.s), (q.point.d, q.point.s));
        }
    }

    #[test]
    fn duplicate_ids_count_once() {
        let schema = TraitSchema::from_cardinalities(&[2, 3]).unwrap();
        let mut groups = BTreeMap::new();
        groups.insert("g1".into(), vec![Individual::new("x", vec![0, 0]), Individual::new("y", vec![1, 1])]);
        groups.insert("g2".into(), vec![Individual::new("x", vec![0, 0])]);
        let mut m = BTreeMap::new();
        m.insert("p".into(), Roster::new(schema, groups).unwrap());
        assert_eq!(era_comparison(&m, None).unwrap()[0].point.n, 2);
    }

    #[test]
    fn balancing_a_binary_trait_raises_its_diversity() {
        let schema = TraitSchema::from_cardinalities(&[2]).unwrap();
        let make = |ones: usize| {
            let members = (0..20).map(|i| Individual::new(i.to_string(), vec![usize::from(i < ones)])).collect();
            let mut g = BTreeMap::new();
            g.insert("cast".to_string(), members);
            Roster::new(schema.clone(), g).unwrap()
        };
        let mut m = BTreeMap::new();
        m.insert("1-before".into(), make(3));
        m.insert("2-after".into(), make(10));
        let pts = era_comparison(&m, None).unwrap();
        assert!(pts[1].point.d > pts[0].point.d);
        assert!(era_comparison(&BTreeMap::new(), None).is_err());
    }
}
