use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use intersect_core::io::{self, LoadOptions, LoadReport, MarginalProfile};
use intersect_core::stats::{composition_test, dominance_test, era_comparison, EnsembleConfig};
use intersect_core::{attainable_region, metrics_for_roster, region_for_schema, verify_roster_bounds, Roster, TraitSchema};

use crate::{
    BoundsArgs, Command, DominanceArgs, EraArgs, FixtureArgs, MetricsArgs, RegionArgs, RosterInput, SampleTestArgs,
    SchemaSource, SweepArgs,
};

const TOOL: &str = "intersect";
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every artifact carries the command, its full configuration and the tool version.
#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a C,
    #[serde(skip_serializing_if = "Option::is_none")]
    load: Option<&'a LoadReport>,
    result: R,
}

fn envelope<'a, C: Serialize, R: Serialize>(
    command: &'static str,
    config: &'a C,
    load: Option<&'a LoadReport>,
    result: R,
) -> Envelope<'a, C, R> {
    Envelope { tool: TOOL, version: VERSION, command, config, load, result }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Metrics(a) => metrics(a),
        Command::Bounds(a) => bounds(a),
        Command::Region(a) => region(a),
        Command::Sweep(a) => sweep(a),
        Command::SampleTest(a) => sample_test(a),
        Command::DominanceTest(a) => dominance(a),
        Command::Era(a) => era(a),
        Command::Fixture(a) => fixture(a),
    }
}

fn out_dir(dir: &Path) -> Result<&Path> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn load_options(input: &RosterInput, period_column: Option<&str>) -> LoadOptions {
    LoadOptions {
        max_malformed_rows: input.max_bad_rows,
        min_group_size: input.min_group_size,
        period_column: period_column.map(str::to_string),
    }
}

/// Schema, roster (projected onto --traits) and load report.
fn load_input(input: &RosterInput) -> Result<(TraitSchema, Roster, LoadReport)> {
    let schema = io::load_schema(&input.schema)?;
    let (roster, report) = io::load_roster(&input.roster, &schema, &load_options(input, None))?;
    let roster = match &input.traits {
        Some(names) => roster.project(&schema.resolve_traits(names)?)?,
        None => roster,
    };
    Ok((roster.schema().clone(), roster, report))
}

fn schema_from_source(source: &SchemaSource, traits: Option<&Vec<String>>) -> Result<TraitSchema> {
    let schema = match (&source.schema, &source.values) {
        (Some(path), None) => io::load_schema(path)?,
        (None, Some(values)) => TraitSchema::from_cardinalities(values)?,
        _ => bail!("give exactly one of --schema or --values"),
    };
    Ok(match traits {
        Some(names) => schema.project(&schema.resolve_traits(names)?)?,
        None => schema,
    })
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let (_, roster, load) = load_input(&a.input)?;
    let points = metrics_for_roster(&roster, None)?;
    let dir = out_dir(&a.output.out)?;
    let path = dir.join("metrics.csv");
    io::write_metrics_csv(&path, &points)?;
    io::write_json(io::sidecar_path(&path), &envelope("metrics", a, Some(&load), serde_json::json!({ "groups": points.len() })))?;
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum BoundsMode {
    DS,
    DSn,
}

#[derive(Serialize)]
struct BoundsResult<'a> {
    mode: BoundsMode,
    /// Violations in the selected mode.
    violations: usize,
    checked: usize,
    correlation: Option<f64>,
    report: &'a intersect_core::BoundsReport,
}

fn bounds(a: &BoundsArgs) -> Result<()> {
    if !(a.tol >= 0.0 && a.tol.is_finite()) {
        bail!("--tol must be a finite non-negative number");
    }
    let (schema, roster, load) = load_input(&a.input)?;
    let region = region_for_schema(&schema)?;
    let points = metrics_for_roster(&roster, None)?;
    let report = verify_roster_bounds(&points, &region, a.tol);
    let summary = if a.sn { &report.dsn } else { &report.ds };
    let result = BoundsResult {
        mode: if a.sn { BoundsMode::DSn } else { BoundsMode::DS },
        violations: summary.violations,
        checked: summary.checked,
        correlation: summary.correlation,
        report: &report,
    };
    let dir = out_dir(&a.output.out)?;
    io::write_json(dir.join("report.json"), &envelope("bounds", a, Some(&load), result))?;
    Ok(())
}

fn region(a: &RegionArgs) -> Result<()> {
    let schema = schema_from_source(&a.source, a.traits.as_ref())?;
    if schema.num_traits() != 2 {
        bail!(
            "the attainable region is constructed for exactly two traits; this schema has {} (use --traits to pick two)",
            schema.num_traits()
        );
    }
    let mut order: Vec<usize> = vec![0, 1];
    order.sort_by_key(|&t| schema.cardinalities()[t]);
    let schema = schema.project(&order)?;
    let cards = schema.cardinalities();
    let export = attainable_region(cards[0], cards[1])?.export(a.resolution);
    #[derive(Serialize)]
    struct RegionResult {
        /// Trait names in the order used: fewer values first.
        traits: Vec<String>,
        region: intersect_core::RegionExport,
    }
    let result = RegionResult { traits: schema.traits().iter().map(|t| t.name.clone()).collect(), region: export };
    let dir = out_dir(&a.output.out)?;
    io::write_json(dir.join("region.json"), &envelope("region", a, None, result))?;
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let schema = schema_from_source(&a.source, a.traits.as_ref())?;
    let result = intersect_core::sweep(&schema, a.grid, a.restarts, a.seed)?;
    let dir = out_dir(&a.output.out)?;
    let path = dir.join("sweep.csv");
    io::write_sweep_csv(&path, &result)?;
    let worst = result
        .points
        .iter()
        .map(|p| p.residual_max.max(p.residual_min))
        .filter(|r| r.is_finite())
        .fold(0.0, f64::max);
    let summary = serde_json::json!({
        "num_cells": result.num_cells,
        "num_traits": result.num_traits,
        "grid_points": result.points.len(),
        "max_residual": worst,
    });
    io::write_json(io::sidecar_path(&path), &envelope("sweep", a, None, summary))?;
    Ok(())
}

fn sample_test(a: &SampleTestArgs) -> Result<()> {
    let (schema, observed, load) = load_input(&a.input)?;
    let pool = match &a.pool {
        Some(path) => {
            let full = io::load_schema(&a.input.schema)?;
            let (pool, _) = io::load_roster(path, &full, &load_options(&a.input, None))?;
            let pool = match &a.input.traits {
                Some(names) => pool.project(&full.resolve_traits(names)?)?,
                None => pool,
            };
            if pool.schema() != &schema {
                bail!("pool and observed roster must share a schema");
            }
            pool.unique_individuals()
        }
        None => observed.unique_individuals(),
    };
    let cfg = EnsembleConfig {
        n_ensembles: a.ensembles,
        teams_per_ensemble: a.teams.unwrap_or(observed.len()),
        team_size: a.team_size,
        seed: a.seed,
    };
    let report = composition_test(&observed, &pool, &cfg, a.neighborhood_fraction)?;
    let dir = out_dir(&a.output.out)?;
    #[derive(Serialize)]
    struct SampleResult<'a> {
        pool_size: usize,
        report: &'a intersect_core::CompositionReport,
    }
    let result = SampleResult { pool_size: pool.len(), report: &report };
    io::write_json(dir.join("report.json"), &envelope("sample-test", a, Some(&load), result))?;
    let null = dir.join("null.csv");
    io::write_pca_samples_csv(&null, &report.null_samples)?;
    io::write_json(io::sidecar_path(&null), &envelope("sample-test", a, None, serde_json::json!({ "rows": report.null_samples.len() })))?;
    Ok(())
}

fn dominance(a: &DominanceArgs) -> Result<()> {
    let (_, roster, load) = load_input(&a.input)?;
    let performance = io::load_performance(&a.performance)?;
    let points = metrics_for_roster(&roster, None)?;
    let (joined, join) = io::join_performance(&points, &performance);
    let report = dominance_test(&joined, a.shuffles, a.seed, a.rank_shuffle)?;
    #[derive(Serialize)]
    struct DominanceResult<'a> {
        join: io::JoinReport,
        report: &'a intersect_core::DominanceReport,
    }
    let dir = out_dir(&a.output.out)?;
    io::write_json(dir.join("report.json"), &envelope("dominance-test", a, Some(&load), DominanceResult { join, report: &report }))?;
    let null = dir.join("null.csv");
    io::write_fraction_samples_csv(&null, &report.null_samples)?;
    io::write_json(io::sidecar_path(&null), &envelope("dominance-test", a, None, serde_json::json!({ "rows": report.null_samples.len() })))?;
    Ok(())
}

fn era(a: &EraArgs) -> Result<()> {
    let schema = io::load_schema(&a.input.schema)?;
    let (periods, load) = io::load_roster_by_period(&a.input.roster, &schema, &load_options(&a.input, Some(&a.period_column)))?;
    let subset = a.input.traits.as_ref().map(|t| schema.resolve_traits(t)).transpose()?;
    let points = era_comparison(&periods, subset.as_deref())?;
    let dir = out_dir(&a.output.out)?;
    let path = dir.join("era.csv");
    io::write_era_csv(&path, &points)?;
    io::write_json(io::sidecar_path(&path), &envelope("era", a, Some(&load), serde_json::json!({ "rows": points.len() })))?;
    Ok(())
}

fn fixture(a: &FixtureArgs) -> Result<()> {
    let schema = io::load_schema(&a.schema)?;
    let profile = match &a.profile {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            MarginalProfile(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
        }
        None => MarginalProfile::uniform(&schema),
    };
    let roster = io::generate_fixture(&schema, a.groups, a.group_size, &profile, a.seed)?;
    let dir = out_dir(&a.output.out)?;
    let path: PathBuf = dir.join("roster.csv");
    io::write_roster(&path, &roster)?;
    let sizes: BTreeMap<&str, usize> = roster.groups().iter().map(|(g, m)| (g.as_str(), m.len())).collect();
    io::write_json(io::sidecar_path(&path), &envelope("fixture", a, None, serde_json::json!({ "groups": sizes.len(), "individuals": sizes.values().sum::<usize>() })))?;
    Ok(())
}
