//! Null ensembles of randomly composed teams and the composition test.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{task_rng, AxisSummary, Kde2, PcaSummary, SIGNIFICANCE_LEVEL};
use crate::error::{Error, Result};
use crate::metrics::{clamp_unit, metrics_for_roster, CellLayout};
use crate::schema::{Individual, Roster, TraitSchema};
use crate::stats::pca2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_ensembles: usize,
    pub teams_per_ensemble: usize,
    pub team_size: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    /// 2000 ensembles of 180 teams of 10.
    fn default() -> Self {
        EnsembleConfig { n_ensembles: 2000, teams_per_ensemble: 180, team_size: 10, seed: 0 }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ensembles == 0 || self.teams_per_ensemble == 0 || self.team_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "ensemble counts must be at least 1, got {} ensembles × {} teams × {} members",
                self.n_ensembles, self.teams_per_ensemble, self.team_size
            )));
        }
        Ok(())
    }
}

fn check_pool(pool_len: usize, cfg: &EnsembleConfig) -> Result<()> {
    cfg.validate()?;
    if pool_len < cfg.team_size {
        return Err(Error::TooFewIndividuals { needed: cfg.team_size, got: pool_len });
    }
    Ok(())
}

/// Pool indices for every team of ensemble `ensemble`.
///
/// Members of one team are distinct; teams are drawn independently, so one
/// individual may sit on several teams of the same ensemble.
pub fn ensemble_indices(pool_len: usize, cfg: &EnsembleConfig, ensemble: usize) -> Vec<Vec<usize>> {
    let mut rng = task_rng(cfg.seed, ensemble as u64);
    (0..cfg.teams_per_ensemble)
        .map(|_| index::sample(&mut rng, pool_len, cfg.team_size).into_vec())
        .collect()
}

/// Lazily generated ensembles; ensemble `i` depends only on the seed and `i`.
pub fn sample_ensembles<'a>(
    pool: &'a [Individual],
    cfg: &EnsembleConfig,
) -> Result<impl Iterator<Item = Vec<Vec<&'a Individual>>> + 'a> {
    check_pool(pool.len(), cfg)?;
    let cfg = *cfg;
    Ok((0..cfg.n_ensembles).map(move |e| {
        ensemble_indices(pool.len(), &cfg, e)
            .into_iter()
            .map(|team| team.into_iter().map(|i| &pool[i]).collect())
            .collect()
    }))
}

/// Draws one roster of teams from the pool, labelled `team-0001`, ….
pub fn sample_roster(schema: &TraitSchema, pool: &[Individual], cfg: &EnsembleConfig, ensemble: usize) -> Result<Roster> {
    check_pool(pool.len(), cfg)?;
    let width = cfg.teams_per_ensemble.to_string().len().max(4);
    let groups = ensemble_indices(pool.len(), cfg, ensemble)
        .into_iter()
        .enumerate()
        .map(|(t, team)| (format!("team-{:0width$}", t + 1), team.into_iter().map(|i| pool[i].clone()).collect()))
        .collect();
    Roster::new(schema.clone(), groups)
}

/// (D, S) for each team of an ensemble, from precomputed cell indices.
fn team_points(layout: &CellLayout, cells: &[usize], teams: &[Vec<usize>]) -> Result<Vec<(f64, f64)>> {
    let c = layout.num_cells();
    let cf = c as f64;
    let mut p = vec![0.0; c];
    teams
        .iter()
        .map(|team| {
            p.iter_mut().for_each(|x| *x = 0.0);
            let w = 1.0 / team.len() as f64;
            for &i in team {
                p[cells[i]] += w;
            }
            let collision: f64 = p.iter().map(|x| x * x).sum();
            let d = clamp_unit("D", cf / (cf - 1.0) * (1.0 - collision))?;
            let s = clamp_unit("S", layout.shared_identity(&p))?;
            Ok((d, s))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rectangle {
    pub slope: (f64, f64),
    pub ratio: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionReport {
    pub config: EnsembleConfig,
    pub neighborhood_fraction: f64,
    pub observed: PcaSummary,
    pub observed_teams: usize,
    pub null_size: usize,
    /// Ensembles whose team cloud had no usable major axis (zero spread or vertical).
    pub skipped_ensembles: usize,
    pub null_slope: AxisSummary,
    pub null_ratio: AxisSummary,
    pub bandwidth: (f64, f64),
    pub rectangle: Rectangle,
    /// KDE mass of the rectangle around the observed (slope, ratio).
    pub neighborhood_probability: f64,
    /// Share of null samples whose leave-one-out density is at most the observed density.
    pub density_tail: f64,
    pub inside_central_95: bool,
    #[serde(skip)]
    pub null_samples: Vec<PcaSummary>,
}

/// Compares the observed teams' (slope, ratio) with randomly composed ensembles.
pub fn composition_test(
    observed: &Roster,
    pool: &[Individual],
    cfg: &EnsembleConfig,
    neighborhood_fraction: f64,
) -> Result<CompositionReport> {
    check_pool(pool.len(), cfg)?;
    if !(neighborhood_fraction > 0.0 && neighborhood_fraction.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "neighborhood fraction must be positive, got {neighborhood_fraction}"
        )));
    }
    let schema = observed.schema();
    if schema.num_cells() < 2 {
        return Err(Error::SingleCell);
    }
    let cells = pool
        .iter()
        .map(|ind| {
            ind.check(schema)?;
            Ok(schema.cell_index(&ind.values).expect("checked"))
        })
        .collect::<Result<Vec<_>>>()?;

    let obs_points: Vec<(f64, f64)> = metrics_for_roster(observed, None)?.iter().map(|m| (m.d, m.s)).collect();
    let obs = pca2(&obs_points)?;
    if obs.vertical {
        return Err(Error::Degenerate("observed major axis is vertical; slope undefined".into()));
    }

    let layout = CellLayout::new(schema);
    let null: Vec<Option<PcaSummary>> = (0..cfg.n_ensembles)
        .into_par_iter()
        .map(|e| {
            let teams = ensemble_indices(pool.len(), cfg, e);
            let pts = team_points(&layout, &cells, &teams)?;
            Ok(pca2(&pts).ok().filter(|s| !s.vertical))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<PcaSummary> = null.iter().flatten().copied().collect();
    let skipped = null.len() - samples.len();
    if samples.len() < 3 {
        return Err(Error::Degenerate(format!("only {} usable null ensembles", samples.len())));
    }

    let cloud: Vec<(f64, f64)> = samples.iter().map(|s| (s.slope, s.ratio)).collect();
    let slopes: Vec<f64> = cloud.iter().map(|p| p.0).collect();
    let ratios: Vec<f64> = cloud.iter().map(|p| p.1).collect();
    let null_slope = AxisSummary::new(&slopes);
    let null_ratio = AxisSummary::new(&ratios);
    let kde = Kde2::fit(&cloud)?;

    let half = (0.5 * neighborhood_fraction * null_slope.range(), 0.5 * neighborhood_fraction * null_ratio.range());
    let rectangle = Rectangle {
        slope: (obs.slope - half.0, obs.slope + half.0),
        ratio: (obs.ratio - half.1, obs.ratio + half.1),
    };
    let probability = kde.rectangle_mass(rectangle.slope, rectangle.ratio);

    let obs_density = kde.density(obs.slope, obs.ratio);
    let below = (0..kde.len()).filter(|&i| kde.leave_one_out_density(i) <= obs_density).count();
    let density_tail = below as f64 / kde.len() as f64;

    Ok(CompositionReport {
        config: *cfg,
        neighborhood_fraction,
        observed: obs,
        observed_teams: obs_points.len(),
        null_size: samples.len(),
        skipped_ensembles: skipped,
        null_slope,
        null_ratio,
        bandwidth: kde.bandwidth,
        rectangle,
        neighborhood_probability: probability,
        density_tail,
        inside_central_95: density_tail > SIGNIFICANCE_LEVEL,
        null_samples: samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn pool(n: usize) -> (TraitSchema, Vec<Individual>) {
        let schema = TraitSchema::from_cardinalities(&[2, 3]).unwrap();
        let pool = (0..n).map(|i| Individual::new(format!("p{i}"), vec![i % 2, (i / 2) % 3])).collect();
        (schema, pool)
    }

    #[test]
    fn whole_pool_team() {
        let (_, pool) = pool(10);
        let cfg = EnsembleConfig { n_ensembles: 1, teams_per_ensemble: 1, team_size: 10, seed: 3 };
        let ens: Vec<_> = sample_ensembles(&pool, &cfg).unwrap().collect();
        let mut ids: Vec<&str> = ens[0][0].iter().map(|i| i.id.as_str()).collect();
        ids.sort();
        let mut want: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
        want.sort();
        assert_eq!(ids, want);
    }

    #[test]
    fn teams_have_distinct_members_and_are_seeded() {
        let (_, pool) = pool(30);
        let cfg = EnsembleConfig { n_ensembles: 3, teams_per_ensemble: 5, team_size: 8, seed: 11 };
        let a: Vec<_> = (0..3).map(|e| ensemble_indices(30, &cfg, e)).collect();
        let b: Vec<_> = (0..3).map(|e| ensemble_indices(30, &cfg, e)).collect();
        assert_eq!(a, b);
        for team in a.iter().flatten() {
            let mut t = team.clone();
            t.sort();
            t.dedup();
            assert_eq!(t.len(), 8);
        }
        assert!(sample_ensembles(&pool[..5], &cfg).is_err());
    }

    #[test]
    fn full_range_neighborhood_holds_most_mass() {
        let (schema, pool) = pool(60);
        let cfg = EnsembleConfig { n_ensembles: 60, teams_per_ensemble: 12, team_size: 6, seed: 5 };
        let observed = sample_roster(&schema, &pool, &EnsembleConfig { seed: 99, ..cfg }, 0).unwrap();
        let r = composition_test(&observed, &pool, &cfg, 1.0).unwrap();
        assert!(r.neighborhood_probability > 0.3, "{}", r.neighborhood_probability);
        let small = composition_test(&observed, &pool, &cfg, 0.1).unwrap();
        assert!(small.neighborhood_probability < r.neighborhood_probability);
        assert_eq!(r.null_size + r.skipped_ensembles, 60);
    }

    #[test]
    fn rejects_small_pool_and_bad_fraction() {
        let (schema, pool) = pool(20);
        let mut groups = BTreeMap::new();
        groups.insert("g".into(), pool[..4].to_vec());
        let observed = Roster::new(schema, groups).unwrap();
        let cfg = EnsembleConfig { n_ensembles: 5, teams_per_ensemble: 5, team_size: 25, seed: 0 };
        assert!(matches!(composition_test(&observed, &pool, &cfg, 0.1), Err(Error::TooFewIndividuals { .. })));
        let cfg = EnsembleConfig { team_size: 4, ..cfg };
        assert!(composition_test(&observed, &pool, &cfg, 0.0).is_err());
    }
}
