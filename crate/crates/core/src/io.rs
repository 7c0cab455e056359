//! File formats: schema JSON, roster and performance CSV, and result artifacts.
//!
//! Floating-point values in CSV outputs are written with 17 significant
//! digits so they parse back to the same `f64`.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricPoint;
use crate::schema::{Individual, Roster, TraitSchema};
use crate::stats::PerformancePoint;
use crate::sweep::SweepResult;

pub const GROUP_COLUMN: &str = "group_id";
pub const INDIVIDUAL_COLUMN: &str = "individual_id";
pub const PERFORMANCE_COLUMN: &str = "performance";

/// Round-trippable text form of a float (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    // adding zero turns -0 into +0
    format!("{:.16e}", x + 0.0)
}

fn open_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Open { path: path.display().to_string(), message: e.to_string() }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| open_err(path, e))
}

fn csv_reader(path: &Path, flexible: bool) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new().flexible(flexible).from_path(path).map_err(|e| open_err(path, e))
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.into() }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<TraitSchema> {
    let path = path.as_ref();
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_schema(path: impl AsRef<Path>, schema: &TraitSchema) -> Result<()> {
    write_json(path, schema)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Rows with the wrong field count or an empty id tolerated before failing.
    pub max_malformed_rows: usize,
    /// Groups with fewer members are removed after row filtering.
    pub min_group_size: usize,
    /// Optional column naming the period of each row.
    pub period_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedRow {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    /// Rows with an empty or unknown trait value.
    pub rows_dropped: usize,
    pub malformed_rows: usize,
    pub dropped: Vec<DroppedRow>,
    pub groups_below_min_size: Vec<String>,
    pub group_sizes: BTreeMap<String, usize>,
}

struct RawRow {
    period: Option<String>,
    group: String,
    individual: Individual,
}

fn read_roster_rows(path: &Path, schema: &TraitSchema, opts: &LoadOptions) -> Result<(Vec<RawRow>, LoadReport)> {
    let mut reader = csv_reader(path, true)?;
    let header = reader.headers()?.clone();
    let column = |name: &str| header.iter().position(|h| h.trim() == name);
    let group_col = column(GROUP_COLUMN).ok_or_else(|| parse_err(path, format!("missing column `{GROUP_COLUMN}`")))?;
    let ind_col = column(INDIVIDUAL_COLUMN).ok_or_else(|| parse_err(path, format!("missing column `{INDIVIDUAL_COLUMN}`")))?;
    let trait_cols = schema
        .traits()
        .iter()
        .map(|t| column(&t.name).ok_or_else(|| parse_err(path, format!("missing trait column `{}`", t.name))))
        .collect::<Result<Vec<_>>>()?;
    let period_col = match &opts.period_column {
        Some(name) => Some(column(name).ok_or_else(|| parse_err(path, format!("missing period column `{name}`")))?),
        None => None,
    };

    let mut report = LoadReport::default();
    let mut rows = Vec::new();
    for record in reader.records() {
        report.rows_read += 1;
        let record = match record {
            Ok(r) if r.len() == header.len() => r,
            Ok(r) => {
                let line = r.position().map_or(0, |p| p.line());
                malformed(path, opts, &mut report, line, format!("expected {} fields, found {}", header.len(), r.len()))?;
                continue;
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                malformed(path, opts, &mut report, line, e.to_string())?;
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let group = record[group_col].trim();
        let id = record[ind_col].trim();
        if group.is_empty() || id.is_empty() {
            malformed(path, opts, &mut report, line, "empty group or individual id".into())?;
            continue;
        }
        let mut values = Vec::with_capacity(trait_cols.len());
        let mut problem = None;
        for (t, &col) in trait_cols.iter().enumerate() {
            let cell = record[col].trim();
            match schema.value_index(t, cell) {
                Some(v) => values.push(v),
                None => {
                    let name = &schema.traits()[t].name;
                    problem = Some(if cell.is_empty() {
                        format!("empty value for `{name}`")
                    } else {
                        format!("unknown value `{cell}` for `{name}`")
                    });
                    break;
                }
            }
        }
        if let Some(reason) = problem {
            report.rows_dropped += 1;
            report.dropped.push(DroppedRow { line, reason });
            continue;
        }
        let period = match period_col {
            Some(col) => {
                let p = record[col].trim();
                if p.is_empty() {
                    report.rows_dropped += 1;
                    report.dropped.push(DroppedRow { line, reason: "empty period".into() });
                    continue;
                }
                Some(p.to_string())
            }
            None => None,
        };
        rows.push(RawRow { period, group: group.to_string(), individual: Individual::new(id, values) });
    }
    Ok((rows, report))
}

fn malformed(path: &Path, opts: &LoadOptions, report: &mut LoadReport, line: u64, reason: String) -> Result<()> {
    report.malformed_rows += 1;
    if report.malformed_rows > opts.max_malformed_rows {
        return Err(parse_err(path, format!("line {line}: {reason}")));
    }
    report.dropped.push(DroppedRow { line, reason });
    Ok(())
}

fn build_roster(
    schema: &TraitSchema,
    rows: impl Iterator<Item = (String, Individual)>,
    opts: &LoadOptions,
    report: &mut LoadReport,
) -> Result<Roster> {
    let mut groups: BTreeMap<String, Vec<Individual>> = BTreeMap::new();
    for (g, ind) in rows {
        groups.entry(g).or_default().push(ind);
    }
    groups.retain(|g, members| {
        let keep = members.len() >= opts.min_group_size;
        if !keep {
            report.groups_below_min_size.push(g.clone());
        }
        keep
    });
    Roster::new(schema.clone(), groups)
}

/// Reads a roster CSV; rows with empty or unknown trait values are dropped.
pub fn load_roster(path: impl AsRef<Path>, schema: &TraitSchema, opts: &LoadOptions) -> Result<(Roster, LoadReport)> {
    let path = path.as_ref();
    let (rows, mut report) = read_roster_rows(path, schema, opts)?;
    let roster = build_roster(schema, rows.into_iter().map(|r| (r.group, r.individual)), opts, &mut report)?;
    if roster.is_empty() {
        return Err(parse_err(path, "no usable groups after filtering"));
    }
    report.group_sizes = roster.groups().iter().map(|(g, m)| (g.clone(), m.len())).collect();
    report.rows_kept = report.group_sizes.values().sum();
    Ok((roster, report))
}

/// Reads a roster CSV split by the configured period column.
pub fn load_roster_by_period(
    path: impl AsRef<Path>,
    schema: &TraitSchema,
    opts: &LoadOptions,
) -> Result<(BTreeMap<String, Roster>, LoadReport)> {
    let path = path.as_ref();
    if opts.period_column.is_none() {
        return Err(Error::InvalidArgument("a period column is required".into()));
    }
    let (rows, mut report) = read_roster_rows(path, schema, opts)?;
    let mut by_period: BTreeMap<String, Vec<(String, Individual)>> = BTreeMap::new();
    for r in rows {
        by_period.entry(r.period.expect("period column set")).or_default().push((r.group, r.individual));
    }
    let mut out = BTreeMap::new();
    for (period, rows) in by_period {
        let roster = build_roster(schema, rows.into_iter(), opts, &mut report)?;
        for (g, m) in roster.groups() {
            report.group_sizes.insert(format!("{period}/{g}"), m.len());
        }
        if !roster.is_empty() {
            out.insert(period, roster);
        }
    }
    if out.is_empty() {
        return Err(parse_err(path, "no usable groups after filtering"));
    }
    report.rows_kept = report.group_sizes.values().sum();
    Ok((out, report))
}

pub fn write_roster(path: impl AsRef<Path>, roster: &Roster) -> Result<()> {
    let schema = roster.schema();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![GROUP_COLUMN.to_string(), INDIVIDUAL_COLUMN.to_string()];
    header.extend(schema.traits().iter().map(|t| t.name.clone()));
    w.write_record(&header)?;
    for (g, members) in roster.groups() {
        for ind in members {
            let mut row = vec![g.clone(), ind.id.clone()];
            row.extend(ind.values.iter().enumerate().map(|(t, &v)| schema.traits()[t].values[v].clone()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads (group_id, performance) pairs; group ids must be unique.
pub fn load_performance(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path, false)?;
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(path, format!("missing column `{name}`")))
    };
    let (gc, pc) = (col(GROUP_COLUMN)?, col(PERFORMANCE_COLUMN)?);
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let g = record[gc].trim().to_string();
        let raw = record[pc].trim();
        let value: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(path, format!("line {line}: bad performance `{raw}`")))?;
        if out.insert(g.clone(), value).is_some() {
            return Err(parse_err(path, format!("line {line}: duplicate group `{g}`")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct JoinReport {
    pub matched: usize,
    pub groups_without_performance: Vec<String>,
    pub performance_without_group: Vec<String>,
}

/// Inner join of metric points with performance values on group id.
pub fn join_performance(points: &[MetricPoint], performance: &BTreeMap<String, f64>) -> (Vec<PerformancePoint>, JoinReport) {
    let mut report = JoinReport::default();
    let mut out = Vec::new();
    for m in points {
        match performance.get(&m.group_id) {
            Some(&p) => out.push(PerformancePoint { id: m.group_id.clone(), d: m.d, s: m.s, performance: p }),
            None => report.groups_without_performance.push(m.group_id.clone()),
        }
    }
    let ids: HashSet<&str> = points.iter().map(|m| m.group_id.as_str()).collect();
    report.performance_without_group = performance.keys().filter(|k| !ids.contains(k.as_str())).cloned().collect();
    report.matched = out.len();
    (out, report)
}

/// Per-trait value probabilities, traits sampled independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalProfile(pub Vec<Vec<f64>>);

impl MarginalProfile {
    pub fn uniform(schema: &TraitSchema) -> Self {
        MarginalProfile(schema.cardinalities().iter().map(|&k| vec![1.0 / k as f64; k]).collect())
    }

    pub fn validate(&self, schema: &TraitSchema) -> Result<()> {
        let cards = schema.cardinalities();
        if self.0.len() != cards.len() {
            return Err(Error::InvalidArgument(format!(
                "profile has {} rows, schema has {} traits",
                self.0.len(),
                cards.len()
            )));
        }
        for (t, (row, &k)) in self.0.iter().zip(&cards).enumerate() {
            if row.len() != k {
                return Err(Error::InvalidArgument(format!("profile row {t} has {} entries, expected {k}", row.len())));
            }
            if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidArgument(format!("profile row {t} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("profile row {t} sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Synthetic roster of `n_groups` groups of `group_size` independent draws.
pub fn generate_fixture(
    schema: &TraitSchema,
    n_groups: usize,
    group_size: usize,
    profile: &MarginalProfile,
    seed: u64,
) -> Result<Roster> {
    profile.validate(schema)?;
    if n_groups == 0 || group_size == 0 {
        return Err(Error::InvalidArgument("fixture needs at least one group of one".into()));
    }
    let samplers = profile
        .0
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(|e| Error::InvalidArgument(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gw = n_groups.to_string().len().max(4);
    let iw = (n_groups * group_size).to_string().len().max(6);
    let mut groups = BTreeMap::new();
    let mut next_id = 0usize;
    for g in 0..n_groups {
        let members = (0..group_size)
            .map(|_| {
                next_id += 1;
                let values = samplers.iter().map(|s| s.sample(&mut rng)).collect();
                Individual::new(format!("i{next_id:0iw$}"), values)
            })
            .collect();
        groups.insert(format!("g{:0gw$}", g + 1), members);
    }
    Roster::new(schema.clone(), groups)
}

/// Paths and options describing one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_path: PathBuf,
    pub roster_path: PathBuf,
    #[serde(default)]
    pub performance_path: Option<PathBuf>,
    #[serde(default)]
    pub period_column: Option<String>,
    #[serde(default)]
    pub traits: Option<Vec<String>>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
    }

    /// Checks that the files exist and the roster header names every schema trait.
    pub fn validate(&self) -> Result<TraitSchema> {
        let schema = load_schema(&self.schema_path)?;
        for p in [Some(&self.roster_path), self.performance_path.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{} does not exist", p.display()),
                )));
            }
        }
        let mut reader = csv_reader(&self.roster_path, false)?;
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut required: Vec<&str> = vec![GROUP_COLUMN, INDIVIDUAL_COLUMN];
        required.extend(schema.traits().iter().map(|t| t.name.as_str()));
        required.extend(self.period_column.as_deref());
        for name in required {
            if !header.iter().any(|h| h == name) {
                return Err(parse_err(&self.roster_path, format!("missing column `{name}`")));
            }
        }
        if let Some(traits) = &self.traits {
            schema.resolve_traits(traits)?;
        }
        Ok(schema)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut w = create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Columns group_id, n, d, s, s_n (empty for single-member groups).
pub fn write_metrics_csv(path: impl AsRef<Path>, points: &[MetricPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group_id", "n", "d", "s", "s_n"])?;
    for p in points {
        w.write_record([p.group_id.clone(), p.n.to_string(), fmt_f64(p.d), fmt_f64(p.s), opt(p.s_n)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file produced by [`write_metrics_csv`].
pub fn load_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricPoint>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path, false)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let r = record?;
        let num = |i: usize| -> Result<f64> { r[i].parse().map_err(|_| parse_err(path, format!("bad number `{}`", &r[i]))) };
        out.push(MetricPoint {
            group_id: r[0].to_string(),
            n: r[1].parse().map_err(|_| parse_err(path, format!("bad count `{}`", &r[1])))?,
            d: num(2)?,
            s: num(3)?,
            s_n: if r[4].is_empty() { None } else { Some(num(4)?) },
        });
    }
    Ok(out)
}

/// Columns d, s_max, s_min, residual_max, residual_min; infeasible points are omitted.
pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["d", "s_max", "s_min", "residual_max", "residual_min"])?;
    for p in sweep.points.iter().filter(|p| p.s_max.is_finite()) {
        w.write_record([p.d, p.s_max, p.s_min, p.residual_max, p.residual_min].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns period, traits (joined with `+`), n, d, s, s_n.
pub fn write_era_csv(path: impl AsRef<Path>, points: &[crate::stats::EraPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["period", "traits", "n", "d", "s", "s_n"])?;
    for p in points {
        w.write_record([
            p.period.clone(),
            p.traits.join("+"),
            p.point.n.to_string(),
            fmt_f64(p.point.d),
            fmt_f64(p.point.s),
            opt(p.point.s_n),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Null (slope, ratio) samples of a composition test, one row per ensemble kept.
pub fn write_pca_samples_csv(path: impl AsRef<Path>, samples: &[crate::stats::PcaSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample", "slope", "ratio"])?;
    for (i, s) in samples.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(s.slope), fmt_f64(s.ratio)])?;
    }
    w.flush()?;
    Ok(())
}

/// Null fractions of a dominance test, one row per shuffle.
pub fn write_fraction_samples_csv(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["shuffle", "fraction"])?;
    for (i, s) in samples.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(*s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Companion `<stem>.run.json` holding provenance for a CSV artifact.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.run.json"))
}
