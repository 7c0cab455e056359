//! Traits, individuals and rosters.
//!
//! Value indices are zero-based throughout: trait `t` takes values in
//! `0..cardinality(t)`. Aggregate identities (cells) are indexed row-major in
//! declared trait order, so the last trait varies fastest.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trait {
    pub name: String,
    pub values: Vec<String>,
}

impl Trait {
    pub fn new(name: impl Into<String>, values: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Trait {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }
}

/// Ordered traits with their mutually exclusive value sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraitSchema {
    traits: Vec<Trait>,
    #[serde(skip)]
    num_cells: usize,
}

impl<'de> Deserialize<'de> for TraitSchema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            traits: Vec<Trait>,
        }
        let raw = Raw::deserialize(deserializer)?;
        TraitSchema::new(raw.traits).map_err(serde::de::Error::custom)
    }
}

impl TraitSchema {
    pub fn new(traits: Vec<Trait>) -> Result<Self> {
        if traits.is_empty() {
            return Err(Error::InvalidSchema("at least one trait is required".into()));
        }
        let mut names = HashSet::new();
        let mut num_cells: usize = 1;
        for t in &traits {
            if t.name.is_empty() {
                return Err(Error::InvalidSchema("trait names must be non-empty".into()));
            }
            if !names.insert(t.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate trait `{}`", t.name)));
            }
            if t.values.is_empty() {
                return Err(Error::InvalidSchema(format!("trait `{}` has no values", t.name)));
            }
            let mut seen = HashSet::new();
            for v in &t.values {
                if !seen.insert(v.as_str()) {
                    return Err(Error::InvalidSchema(format!(
                        "duplicate value `{v}` in trait `{}`",
                        t.name
                    )));
                }
            }
            num_cells = num_cells.checked_mul(t.values.len()).ok_or_else(|| {
                Error::InvalidSchema("number of aggregate identities overflows".into())
            })?;
        }
        Ok(TraitSchema { traits, num_cells })
    }

    /// Anonymous schema with traits `t1, t2, …` and values `1, 2, …`.
    pub fn from_cardinalities(cardinalities: &[usize]) -> Result<Self> {
        let traits = cardinalities
            .iter()
            .enumerate()
            .map(|(i, &k)| Trait::new(format!("t{}", i + 1), (1..=k).map(|v| v.to_string())))
            .collect();
        Self::new(traits)
    }

    pub fn traits(&self) -> &[Trait] {
        &self.traits
    }

    /// Number of traits, T.
    pub fn num_traits(&self) -> usize {
        self.traits.len()
    }

    /// Value counts v_t in trait order.
    pub fn cardinalities(&self) -> Vec<usize> {
        self.traits.iter().map(|t| t.values.len()).collect()
    }

    /// Number of aggregate identities, C = v_1 · … · v_T.
    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    /// Smallest attainable shared identity, (1/T) Σ_t 1/v_t.
    pub fn s_min(&self) -> f64 {
        let t = self.num_traits() as f64;
        self.traits.iter().map(|tr| 1.0 / tr.values.len() as f64).sum::<f64>() / t
    }

    pub fn trait_index(&self, name: &str) -> Option<usize> {
        self.traits.iter().position(|t| t.name == name)
    }

    pub fn value_index(&self, trait_index: usize, value: &str) -> Option<usize> {
        self.traits.get(trait_index)?.values.iter().position(|v| v == value)
    }

    /// Resolves trait names (or 1-based positions written as digits) to indices.
    pub fn resolve_traits<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        if names.is_empty() {
            return Err(Error::InvalidArgument("trait subset must be non-empty".into()));
        }
        names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                if let Some(i) = self.trait_index(n) {
                    return Ok(i);
                }
                match n.parse::<usize>() {
                    Ok(pos) if pos >= 1 && pos <= self.num_traits() => Ok(pos - 1),
                    _ => Err(Error::UnknownTrait(n.to_string())),
                }
            })
            .collect()
    }

    /// Row-major cell index of a value tuple.
    pub fn cell_index(&self, values: &[usize]) -> Option<usize> {
        if values.len() != self.traits.len() {
            return None;
        }
        let mut idx = 0usize;
        for (v, t) in values.iter().zip(&self.traits) {
            if *v >= t.values.len() {
                return None;
            }
            idx = idx * t.values.len() + v;
        }
        Some(idx)
    }

    /// Inverse of [`cell_index`](Self::cell_index).
    pub fn cell_values(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.traits.len()];
        for (slot, t) in out.iter_mut().zip(&self.traits).rev() {
            let k = t.values.len();
            *slot = index % k;
            index /= k;
        }
        out
    }

    /// Value tuples for every cell, in cell order.
    pub fn cell_table(&self) -> Vec<Vec<usize>> {
        (0..self.num_cells).map(|c| self.cell_values(c)).collect()
    }

    /// Schema restricted to the given traits, in the given order.
    pub fn project(&self, subset: &[usize]) -> Result<TraitSchema> {
        if subset.is_empty() {
            return Err(Error::InvalidArgument("trait subset must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        let mut traits = Vec::with_capacity(subset.len());
        for &i in subset {
            let t = self
                .traits
                .get(i)
                .ok_or_else(|| Error::UnknownTrait(format!("#{}", i + 1)))?;
            if !seen.insert(i) {
                return Err(Error::InvalidArgument(format!("trait `{}` listed twice", t.name)));
            }
            traits.push(t.clone());
        }
        TraitSchema::new(traits)
    }
}

/// One member of a group: an id and one value index per trait.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub values: Vec<usize>,
}

impl Individual {
    pub fn new(id: impl Into<String>, values: Vec<usize>) -> Self {
        Individual { id: id.into(), values }
    }

    pub fn check(&self, schema: &TraitSchema) -> Result<()> {
        if self.values.len() != schema.num_traits() {
            return Err(Error::TupleLength {
                id: self.id.clone(),
                expected: schema.num_traits(),
                got: self.values.len(),
            });
        }
        for (t, (&v, tr)) in self.values.iter().zip(schema.traits()).enumerate() {
            if v >= tr.values.len() {
                return Err(Error::ValueOutOfRange {
                    id: self.id.clone(),
                    trait_index: t,
                    value: v,
                    count: tr.values.len(),
                });
            }
        }
        Ok(())
    }

    pub fn project(&self, subset: &[usize]) -> Individual {
        Individual {
            id: self.id.clone(),
            values: subset.iter().map(|&i| self.values[i]).collect(),
        }
    }
}

/// Individuals grouped into teams. Groups iterate in group-id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    schema: TraitSchema,
    groups: BTreeMap<String, Vec<Individual>>,
}

impl Roster {
    pub fn new(schema: TraitSchema, groups: BTreeMap<String, Vec<Individual>>) -> Result<Self> {
        for (gid, members) in &groups {
            if members.is_empty() {
                return Err(Error::EmptyGroup(gid.clone()));
            }
            for ind in members {
                ind.check(&schema)?;
            }
        }
        Ok(Roster { schema, groups })
    }

    pub fn schema(&self) -> &TraitSchema {
        &self.schema
    }

    pub fn groups(&self) -> &BTreeMap<String, Vec<Individual>> {
        &self.groups
    }

    pub fn group(&self, id: &str) -> Option<&[Individual]> {
        self.groups.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Roster restricted to a trait subset; the schema is re-derived.
    pub fn project(&self, subset: &[usize]) -> Result<Roster> {
        let schema = self.schema.project(subset)?;
        let groups = self
            .groups
            .iter()
            .map(|(g, m)| (g.clone(), m.iter().map(|i| i.project(subset)).collect()))
            .collect();
        Ok(Roster { schema, groups })
    }

    /// Distinct individuals across all groups, first occurrence wins.
    pub fn unique_individuals(&self) -> Vec<Individual> {
        let mut seen = HashSet::new();
        self.groups
            .values()
            .flatten()
            .filter(|i| seen.insert(i.id.as_str()))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_are_row_major() {
        let s = TraitSchema::from_cardinalities(&[2, 3]).unwrap();
        assert_eq!(s.num_cells(), 6);
        assert_eq!(s.cell_index(&[0, 0]), Some(0));
        assert_eq!(s.cell_index(&[0, 2]), Some(2));
        assert_eq!(s.cell_index(&[1, 0]), Some(3));
        assert_eq!(s.cell_index(&[1, 3]), None);
        for c in 0..6 {
            assert_eq!(s.cell_index(&s.cell_values(c)), Some(c));
        }
    }

    #[test]
    fn rejects_bad_schemas() {
        assert!(TraitSchema::new(vec![]).is_err());
        assert!(TraitSchema::new(vec![Trait::new("a", Vec::<String>::new())]).is_err());
        assert!(TraitSchema::new(vec![Trait::new("a", ["x", "x"])]).is_err());
        assert!(TraitSchema::new(vec![Trait::new("a", ["x"]), Trait::new("a", ["y"])]).is_err());
    }

    #[test]
    fn single_value_schema_is_accepted() {
        let s = TraitSchema::new(vec![Trait::new("only", ["v"])]).unwrap();
        assert_eq!((s.num_traits(), s.num_cells()), (1, 1));
    }

    #[test]
    fn s_min_of_movie_and_tribe_schemas() {
        let movie = TraitSchema::from_cardinalities(&[2, 6]).unwrap();
        assert!((movie.s_min() - 1.0 / 3.0).abs() < 1e-15);
        let tribe = TraitSchema::from_cardinalities(&[3, 6]).unwrap();
        assert!((tribe.s_min() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn resolve_by_name_or_position() {
        let s = TraitSchema::new(vec![Trait::new("gender", ["f", "m"]), Trait::new("race", ["a", "b", "c"])]).unwrap();
        assert_eq!(s.resolve_traits(&["race"]).unwrap(), vec![1]);
        assert_eq!(s.resolve_traits(&["1"]).unwrap(), vec![0]);
        assert!(matches!(s.resolve_traits(&["age"]), Err(Error::UnknownTrait(_))));
    }

    #[test]
    fn roster_validates_members() {
        let s = TraitSchema::from_cardinalities(&[2, 2]).unwrap();
        let mut groups = BTreeMap::new();
        groups.insert("g".to_string(), vec![Individual::new("a", vec![0, 2])]);
        assert!(matches!(Roster::new(s.clone(), groups), Err(Error::ValueOutOfRange { .. })));
        let mut groups = BTreeMap::new();
        groups.insert("g".to_string(), vec![]);
        assert!(matches!(Roster::new(s, groups), Err(Error::EmptyGroup(_))));
    }
}
