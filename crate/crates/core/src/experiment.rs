//! Experiment definitions, grid expansion and output files.
//!
//! Config files are flat `key = value` lines; list-valued keys take
//! comma-separated values and numeric ranges `start:step:end`:
//!
//! ```text
//! # the full grid
//! k          = 3, 5
//! pattern    = block, centralised, dependent, hierarchical, local, random
//! tau        = never, 1, 10
//! learn_prob = 0:0.1:1
//! replications = 1500
//! ```
//!
//! Unset keys keep the defaults of [`ExperimentSpec::default`].

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::adaptation::Schedule;
use crate::analysis::{figure_tables, CellAccumulator, CellSummary, FigureKind, PdTable};
use crate::engine::{self, Learners, RunRecord, ScenarioConfig};
use crate::landscape::{InterdependenceMatrix, Pattern};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub k: Vec<usize>,
    pub pattern: Vec<Pattern>,
    pub tau: Vec<Schedule>,
    pub learn_prob: Vec<f64>,
    pub n: usize,
    pub subtasks: usize,
    pub agents: usize,
    pub horizon: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub learners: Learners,
    /// Figure tables written as `pd_*.csv`.
    pub tables: Vec<FigureKind>,
    pub emit_records: bool,
    pub parallelism: usize,
}

impl Default for ExperimentSpec {
    /// The full 396-scenario grid at 1500 replications of 100 periods.
    fn default() -> Self {
        Self {
            k: vec![3, 5],
            pattern: Pattern::ALL.to_vec(),
            tau: vec![Schedule::Never, Schedule::Every(1), Schedule::Every(10)],
            learn_prob: (0..=10).map(|i| i as f64 / 10.0).collect(),
            n: 12,
            subtasks: 3,
            agents: 30,
            horizon: 100,
            replications: 1500,
            base_seed: 20_210_101,
            learners: Learners::All,
            tables: FigureKind::ALL.to_vec(),
            emit_records: false,
            parallelism: 1,
        }
    }
}

impl ExperimentSpec {
    /// One scenario, five replications of ten periods.
    pub fn smoke() -> Self {
        Self {
            k: vec![3],
            pattern: vec![Pattern::Block],
            tau: vec![Schedule::Every(10)],
            learn_prob: vec![0.1],
            horizon: 10,
            replications: 5,
            tables: vec![FigureKind::Overview],
            ..Self::default()
        }
    }

    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let items = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
            let scalar = |v: &str| -> Result<u64> {
                v.replace('_', "")
                    .parse()
                    .map_err(|_| err(format!("`{key}` expects a non-negative integer, got `{v}`")))
            };
            match key {
                "k" => spec.k = items().map(|v| scalar(v).map(|x| x as usize)).collect::<Result<_>>()?,
                "pattern" => {
                    spec.pattern = items()
                        .map(|v| v.parse().map_err(|e: Error| err(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "tau" => {
                    spec.tau = items()
                        .map(|v| v.parse().map_err(|e: Error| err(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "learn_prob" => {
                    spec.learn_prob = Vec::new();
                    for item in items() {
                        spec.learn_prob.extend(parse_range(item).map_err(err)?);
                    }
                }
                "n" => spec.n = scalar(value)? as usize,
                "subtasks" | "m" => spec.subtasks = scalar(value)? as usize,
                "agents" | "p" => spec.agents = scalar(value)? as usize,
                "horizon" => spec.horizon = scalar(value)? as usize,
                "replications" => spec.replications = scalar(value)? as usize,
                "seed" => spec.base_seed = scalar(value)?,
                "parallelism" => spec.parallelism = scalar(value)? as usize,
                "learners" => spec.learners = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "tables" => {
                    spec.tables = items()
                        .map(|v| v.parse().map_err(|e: Error| err(e.to_string())))
                        .collect::<Result<_>>()?
                }
                "emit_records" => {
                    spec.emit_records = match value {
                        "true" | "yes" | "1" => true,
                        "false" | "no" | "0" => false,
                        other => return Err(err(format!("`emit_records` expects true or false, got `{other}`"))),
                    }
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn scenario_count(&self) -> usize {
        self.k.len() * self.pattern.len() * self.tau.len() * self.learn_prob.len()
    }
}

/// `0:0.1:1` style inclusive ranges, or a single number. Values are rounded
/// to 1e-9 so that `0:0.1:1` yields exactly the literals `0.3`, `0.7`, ….
fn parse_range(item: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("`{s}` is not a number"));
    let parts: Vec<&str> = item.split(':').collect();
    match parts.as_slice() {
        [x] => Ok(vec![num(x)?]),
        [start, step, end] => {
            let (start, step, end) = (num(start)?, num(step)?, num(end)?);
            if step <= 0.0 || end < start {
                return Err(format!("bad range `{item}`"));
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count)
                .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
                .collect())
        }
        _ => Err(format!("expected a number or start:step:end, got `{item}`")),
    }
}

fn sorted_unique<T: Clone + std::fmt::Debug>(
    name: &str,
    values: &[T],
    cmp: impl Fn(&T, &T) -> std::cmp::Ordering,
) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::Config(format!("`{name}` needs at least one level")));
    }
    let mut v = values.to_vec();
    v.sort_by(&cmp);
    if let Some(w) = v.windows(2).find(|w| cmp(&w[0], &w[1]).is_eq()) {
        return Err(Error::Config(format!("`{name}` lists level {:?} twice", w[0])));
    }
    Ok(v)
}

/// One config per factor combination, ordered lexicographically by
/// `(k, pattern, tau, learn_prob)`.
pub fn expand_grid(spec: &ExperimentSpec) -> Result<Vec<ScenarioConfig>> {
    let ks = sorted_unique("k", &spec.k, |a, b| a.cmp(b))?;
    let patterns = sorted_unique("pattern", &spec.pattern, |a, b| a.cmp(b))?;
    let taus = sorted_unique("tau", &spec.tau, |a, b| a.cmp(b))?;
    let probs = sorted_unique("learn_prob", &spec.learn_prob, |a, b| a.total_cmp(b))?;
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("learn_prob level {p} outside [0, 1]")));
    }
    for &k in &ks {
        for &pattern in &patterns {
            InterdependenceMatrix::build(pattern, spec.n, k, 0)
                .map_err(|e| Error::Config(format!("level k={k}, pattern={pattern}: {e}")))?;
        }
    }
    let mut out = Vec::with_capacity(spec.scenario_count());
    for &k in &ks {
        for &pattern in &patterns {
            for &tau in &taus {
                for &learn_prob in &probs {
                    let config = ScenarioConfig {
                        n: spec.n,
                        subtasks: spec.subtasks,
                        agents: spec.agents,
                        k,
                        pattern,
                        tau,
                        learn_prob,
                        horizon: spec.horizon,
                        replications: spec.replications,
                        base_seed: spec.base_seed,
                        learners: spec.learners,
                    };
                    config.validate()?;
                    out.push(config);
                }
            }
        }
    }
    Ok(out)
}

pub const RECORDS_CSV: &str = "records.csv";
pub const CELLS_CSV: &str = "cells.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

pub fn records_header(subtasks: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "scenario_id",
        "k",
        "pattern",
        "tau",
        "learn_prob",
        "replication",
        "t",
        "raw",
        "normalized",
        "adapted",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=subtasks).map(|m| format!("m{m}")));
    h
}

pub const CELLS_HEADER: [&str; 9] = [
    "scenario_id",
    "k",
    "pattern",
    "tau",
    "learn_prob",
    "mean_normalized",
    "stderr",
    "n_obs",
    "replications",
];

pub fn write_record_row<W: Write>(w: &mut csv::Writer<W>, r: &RunRecord) -> Result<()> {
    let mut row = vec![
        r.scenario.to_string(),
        r.levels.k.to_string(),
        r.levels.pattern.to_string(),
        r.levels.tau.to_string(),
        r.levels.learn_prob.to_string(),
        r.replication.to_string(),
        r.t.to_string(),
        r.raw.to_string(),
        r.normalized.to_string(),
        r.adapted.to_string(),
    ];
    row.extend(r.members.iter().map(|m| m.to_string()));
    w.write_record(&row)?;
    Ok(())
}

pub fn write_cells<W: Write>(w: W, cells: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(CELLS_HEADER)?;
    for c in cells {
        let l = &c.levels;
        w.write_record([
            crate::engine::ScenarioId::of(l).to_string(),
            l.k.to_string(),
            l.pattern.to_string(),
            l.tau.to_string(),
            l.learn_prob.to_string(),
            c.mean.to_string(),
            c.stderr.to_string(),
            c.n_obs.to_string(),
            c.replicate_means.len().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(CELLS_CSV, e))?;
    Ok(())
}

/// Long format: one column per scope factor, then `pd` and `cells`.
pub fn write_pd<W: Write>(w: W, table: &PdTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = table.scope.iter().map(|f| f.name()).collect();
    header.extend(["pd", "cells"]);
    w.write_record(&header)?;
    for row in &table.rows {
        let mut fields: Vec<String> = row.levels.iter().map(|l| l.to_string()).collect();
        fields.push(row.value.to_string());
        fields.push(row.cells.to_string());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("pd table", e))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub spec: &'a ExperimentSpec,
    pub base_seed: u64,
    pub scenarios: usize,
    pub records: usize,
    pub code_version: &'static str,
    pub wall_time_secs: f64,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub scenarios: usize,
    pub records: usize,
    pub cells: Vec<CellSummary>,
    pub files: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

/// Runs every scenario and writes `cells.csv`, the requested `pd_*.csv`
/// tables, `manifest.json` and optionally `records.csv` into `out`. Files
/// written by a failed run are removed.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<ExperimentReport> {
    let started = Instant::now();
    let configs = expand_grid(spec)?;
    let created_dir = !out.exists();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_outputs(spec, &configs, out, started, &mut written);
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        if created_dir {
            let _ = fs::remove_dir(out);
        }
    }
    result
}

fn create(out: &Path, name: &str, written: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = out.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(BufWriter::new(file))
}

fn write_outputs(
    spec: &ExperimentSpec,
    configs: &[ScenarioConfig],
    out: &Path,
    started: Instant,
    written: &mut Vec<PathBuf>,
) -> Result<ExperimentReport> {
    let pool = if spec.parallelism > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(spec.parallelism)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let mut records_writer = if spec.emit_records {
        let mut w = csv::Writer::from_writer(create(out, RECORDS_CSV, written)?);
        w.write_record(records_header(spec.subtasks))?;
        Some(w)
    } else {
        None
    };

    let mut acc = CellAccumulator::new();
    let mut n_records = 0;
    for config in configs {
        let records = engine::run_replications(config, pool.as_ref())?;
        if let Some(w) = records_writer.as_mut() {
            for r in &records {
                write_record_row(w, r)?;
            }
        }
        n_records += records.len();
        acc.extend(&records);
    }
    if let Some(mut w) = records_writer {
        w.flush().map_err(|e| Error::io(out.join(RECORDS_CSV), e))?;
    }

    let cells = acc.finish()?;
    write_cells(create(out, CELLS_CSV, written)?, &cells)?;

    for &kind in &spec.tables {
        for (name, table) in figure_tables(&cells, kind)? {
            write_pd(create(out, &format!("pd_{name}.csv"), written)?, &table)?;
        }
    }

    let wall_time_secs = started.elapsed().as_secs_f64();
    let mut files: Vec<String> = written
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    files.push(MANIFEST_JSON.to_string());
    let manifest = Manifest {
        spec,
        base_seed: spec.base_seed,
        scenarios: configs.len(),
        records: n_records,
        code_version: env!("CARGO_PKG_VERSION"),
        wall_time_secs,
        files,
    };
    let mut w = create(out, MANIFEST_JSON, written)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n").map_err(|e| Error::io(out.join(MANIFEST_JSON), e))?;
    w.flush().map_err(|e| Error::io(out.join(MANIFEST_JSON), e))?;

    Ok(ExperimentReport {
        scenarios: configs.len(),
        records: n_records,
        cells,
        files: written.clone(),
        wall_time_secs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_396_scenarios() {
        let configs = expand_grid(&ExperimentSpec::default()).unwrap();
        assert_eq!(configs.len(), 396);
        let ids: std::collections::BTreeSet<_> = configs.iter().map(|c| c.id()).collect();
        assert_eq!(ids.len(), 396);
        assert_eq!(
            configs[0].levels().to_string(),
            "k=3;pattern=block;tau=never;learn_prob=0"
        );
        assert_eq!(
            configs[395].levels().to_string(),
            "k=5;pattern=random;tau=10;learn_prob=1"
        );
    }

    #[test]
    fn expansion_is_repeatable() {
        let a: Vec<_> = expand_grid(&ExperimentSpec::default())
            .unwrap()
            .iter()
            .map(|c| c.id())
            .collect();
        let b: Vec<_> = expand_grid(&ExperimentSpec::default())
            .unwrap()
            .iter()
            .map(|c| c.id())
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn single_level_grid() {
        assert_eq!(expand_grid(&ExperimentSpec::smoke()).unwrap().len(), 1);
    }

    #[test]
    fn range_literals_are_exact() {
        let v = parse_range("0:0.1:1").unwrap();
        assert_eq!(v.len(), 11);
        assert_eq!(v[3], 0.3);
        assert_eq!(v[7], 0.7);
        assert_eq!(v[10], 1.0);
        assert_eq!(parse_range("0.25").unwrap(), vec![0.25]);
        assert!(parse_range("1:0:2").is_err());
    }

    #[test]
    fn parses_config_text() {
        let spec = ExperimentSpec::parse(
            "# reduced grid\n\
             k = 3, 5\n\
             pattern = block, random  # two patterns\n\
             tau = never, 10\n\
             learn_prob = 0, 0.5:0.25:1\n\
             replications = 200\n\
             seed = 7\n\
             learners = members\n\
             tables = overview, structure\n\
             emit_records = true\n",
        )
        .unwrap();
        assert_eq!(spec.k, vec![3, 5]);
        assert_eq!(spec.pattern, vec![Pattern::Block, Pattern::Random]);
        assert_eq!(spec.tau, vec![Schedule::Never, Schedule::Every(10)]);
        assert_eq!(spec.learn_prob, vec![0.0, 0.5, 0.75, 1.0]);
        assert_eq!(spec.replications, 200);
        assert_eq!(spec.base_seed, 7);
        assert_eq!(spec.learners, Learners::Members);
        assert_eq!(spec.tables, vec![FigureKind::Overview, FigureKind::Structure]);
        assert!(spec.emit_records);
        assert_eq!(spec.scenario_count(), 32);
    }

    #[test]
    fn config_errors_name_the_line() {
        let err = ExperimentSpec::parse("k = 3\npattern = ring\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("ring"));
        assert!(matches!(
            ExperimentSpec::parse("colour = red"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(ExperimentSpec::parse("tau = 0"), Err(Error::Parse { .. })));
        assert!(matches!(ExperimentSpec::parse("just words"), Err(Error::Parse { .. })));
    }

    #[test]
    fn invalid_levels_are_rejected() {
        let spec = ExperimentSpec {
            k: vec![4],
            ..ExperimentSpec::smoke()
        };
        let err = expand_grid(&spec).unwrap_err();
        assert!(err.to_string().contains("k=4, pattern=block"), "{err}");
        let spec = ExperimentSpec {
            learn_prob: vec![0.1, 0.1],
            ..ExperimentSpec::smoke()
        };
        assert!(expand_grid(&spec).is_err());
        let spec = ExperimentSpec {
            learn_prob: vec![1.5],
            ..ExperimentSpec::smoke()
        };
        assert!(expand_grid(&spec).is_err());
    }

    #[test]
    fn records_header_is_exact() {
        assert_eq!(
            records_header(3).join(","),
            "scenario_id,k,pattern,tau,learn_prob,replication,t,raw,normalized,adapted,m1,m2,m3"
        );
    }
}
