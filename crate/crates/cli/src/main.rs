use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;

/// Diversity and shared-identity analysis for groups described by categorical traits.
#[derive(Debug, Parser, Serialize)]
#[command(name = "intersect", version, about)]
struct Cli {
    /// Worker threads for parallel stages; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Per-group D, S and S_N (metrics.csv).
    Metrics(MetricsArgs),
    /// Check every group against the (D, S) bounds (report.json).
    Bounds(BoundsArgs),
    /// Exact attainable region for a two-trait schema (region.json).
    Region(RegionArgs),
    /// Numerical max/min of S over a grid of D values (sweep.csv).
    Sweep(SweepArgs),
    /// Composition test against randomly assembled ensembles (report.json, null.csv).
    SampleTest(SampleTestArgs),
    /// Pairwise dominance test against shuffled performance (report.json, null.csv).
    DominanceTest(DominanceArgs),
    /// Whole-membership metrics per period, overall and per trait (era.csv).
    Era(EraArgs),
    /// Synthetic roster with independently sampled traits (roster.csv).
    Fixture(FixtureArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct RosterInput {
    /// Schema JSON: {"traits": [{"name": ..., "values": [...]}, ...]}.
    #[arg(long)]
    schema: PathBuf,
    /// Roster CSV with columns group_id, individual_id and one column per trait.
    #[arg(long)]
    roster: PathBuf,
    /// Restrict to these traits (names or 1-based positions, comma-separated).
    #[arg(long, value_delimiter = ',')]
    traits: Option<Vec<String>>,
    /// Drop groups with fewer members after row filtering.
    #[arg(long, default_value_t = 0)]
    min_group_size: usize,
    /// Malformed rows tolerated before the load fails.
    #[arg(long, default_value_t = 0)]
    max_bad_rows: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
struct OutputDir {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false)]
struct SchemaSource {
    /// Schema JSON file.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Value counts per trait instead of a schema file, e.g. 2,6.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct MetricsArgs {
    #[command(flatten)]
    input: RosterInput,
    #[command(flatten)]
    output: OutputDir,
}

#[derive(Debug, Clone, Args, Serialize)]
struct BoundsArgs {
    #[command(flatten)]
    input: RosterInput,
    /// Slack allowed on every inequality.
    #[arg(long, default_value_t = intersect_core::bounds::BOUND_TOL)]
    tol: f64,
    /// Judge (d, s_n) instead of (d, s).
    #[arg(long)]
    sn: bool,
    #[command(flatten)]
    output: OutputDir,
}

#[derive(Debug, Clone, Args, Serialize)]
struct RegionArgs {
    #[command(flatten)]
    source: SchemaSource,
    /// Restrict a schema file to two of its traits.
    #[arg(long, value_delimiter = ',')]
    traits: Option<Vec<String>>,
    /// Points per exported segment.
    #[arg(long, default_value_t = intersect_core::attainable::DEFAULT_RESOLUTION)]
    resolution: usize,
    #[command(flatten)]
    output: OutputDir,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    source: SchemaSource,
    #[arg(long, value_delimiter = ',')]
    traits: Option<Vec<String>>,
    /// Number of D values, evenly spaced over [0, 1].
    #[arg(long, default_value_t = intersect_core::sweep::DEFAULT_GRID)]
    grid: usize,
    /// Random starts per grid point and direction.
    #[arg(long, default_value_t = intersect_core::sweep::DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputDir,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SampleTestArgs {
    /// Observed teams.
    #[command(flatten)]
    input: RosterInput,
    /// Roster CSV whose individuals form the sampling pool; defaults to everyone in --roster.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    ensembles: usize,
    /// Teams per ensemble; defaults to the number of observed teams.
    #[arg(long)]
    teams: Option<usize>,
    #[arg(long, default_value_t = 10)]
    team_size: usize,
    /// Rectangle side as a share of the null range on each axis.
    #[arg(long, default_value_t = 0.1)]
    neighborhood_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputDir,
}

#[derive(Debug, Clone, Args, Serialize)]
struct DominanceArgs {
    #[command(flatten)]
    input: RosterInput,
    /// CSV with columns group_id, performance.
    #[arg(long)]
    performance: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    shuffles: usize,
    /// Shuffle performance ranks rather than raw values.
    #[arg(long)]
    rank_shuffle: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputDir,
}

#[derive(Debug, Clone, Args, Serialize)]
struct EraArgs {
    #[command(flatten)]
    input: RosterInput,
    /// Roster column naming each row's period.
    #[arg(long)]
    period_column: String,
    #[command(flatten)]
    output: OutputDir,
}

#[derive(Debug, Clone, Args, Serialize)]
struct FixtureArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    groups: usize,
    #[arg(long)]
    group_size: usize,
    /// JSON array with one probability row per trait; uniform when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputDir,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let runtime = e.downcast_ref::<intersect_core::Error>().is_some_and(|e| e.is_runtime());
            ExitCode::from(if runtime { 2 } else { 1 })
        }
    }
}
