//! Aggregation and partial dependence.
//!
//! Records are pooled over replications and periods into one
//! [`CellSummary`] per factor combination. Partial dependence on a set of
//! in-scope factors is the unweighted mean of cell means over every
//! combination of the remaining factors; on a complete factorial grid this is
//! exactly the partial dependence of a model that fits every cell perfectly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::adaptation::Schedule;
use crate::engine::{Levels, RunRecord};
use crate::landscape::Pattern;
use crate::seed::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Factor {
    K,
    Pattern,
    Tau,
    LearnProb,
}

impl Factor {
    pub const ALL: [Factor; 4] = [Factor::K, Factor::Pattern, Factor::Tau, Factor::LearnProb];

    pub fn name(self) -> &'static str {
        match self {
            Factor::K => "k",
            Factor::Pattern => "pattern",
            Factor::Tau => "tau",
            Factor::LearnProb => "learn_prob",
        }
    }

    pub fn level(self, levels: &Levels) -> Level {
        match self {
            Factor::K => Level::K(levels.k),
            Factor::Pattern => Level::Pattern(levels.pattern),
            Factor::Tau => Level::Tau(levels.tau),
            Factor::LearnProb => Level::LearnProb(levels.learn_prob),
        }
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Factor::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFactor(s.to_string()))
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Value of a single factor.
#[derive(Debug, Clone, Copy)]
pub enum Level {
    K(usize),
    Pattern(Pattern),
    Tau(Schedule),
    LearnProb(f64),
}

impl Level {
    fn rank(&self) -> u8 {
        match self {
            Level::K(_) => 0,
            Level::Pattern(_) => 1,
            Level::Tau(_) => 2,
            Level::LearnProb(_) => 3,
        }
    }
}

impl Ord for Level {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Level::K(a), Level::K(b)) => a.cmp(b),
            (Level::Pattern(a), Level::Pattern(b)) => a.cmp(b),
            (Level::Tau(a), Level::Tau(b)) => a.cmp(b),
            (Level::LearnProb(a), Level::LearnProb(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Level {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Level {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Level {}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::K(k) => write!(f, "{k}"),
            Level::Pattern(p) => write!(f, "{p}"),
            Level::Tau(t) => write!(f, "{t}"),
            Level::LearnProb(p) => write!(f, "{p}"),
        }
    }
}

/// Pooled statistics of one factor combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub levels: Levels,
    /// Mean normalized performance over all (replication, period) observations.
    pub mean: f64,
    /// Standard error of the mean across replication-level means.
    pub stderr: f64,
    pub n_obs: usize,
    /// Per-replication means in replication order.
    pub replicate_means: Vec<f64>,
}

/// Streaming per-cell accumulator; records may arrive in any order.
#[derive(Debug, Default, Clone)]
pub struct CellAccumulator {
    cells: BTreeMap<Levels, BTreeMap<usize, (f64, usize)>>,
}

impl CellAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: &RunRecord) {
        let slot = self
            .cells
            .entry(record.levels)
            .or_default()
            .entry(record.replication)
            .or_insert((0.0, 0));
        slot.0 += record.normalized;
        slot.1 += 1;
    }

    pub fn extend<'a>(&mut self, records: impl IntoIterator<Item = &'a RunRecord>) {
        records.into_iter().for_each(|r| self.push(r));
    }

    pub fn finish(self) -> Result<Vec<CellSummary>> {
        if self.cells.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(self
            .cells
            .into_iter()
            .map(|(levels, reps)| {
                let (sum, n_obs) = reps.values().fold((0.0, 0), |acc, &(s, n)| (acc.0 + s, acc.1 + n));
                let replicate_means: Vec<f64> = reps.values().map(|&(s, n)| s / n as f64).collect();
                CellSummary {
                    levels,
                    mean: sum / n_obs as f64,
                    stderr: standard_error(&replicate_means),
                    n_obs,
                    replicate_means,
                }
            })
            .collect())
    }
}

fn standard_error(xs: &[f64]) -> f64 {
    let r = xs.len();
    if r < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / r as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    (var / r as f64).sqrt()
}

pub fn summarize(records: &[RunRecord]) -> Result<Vec<CellSummary>> {
    let mut acc = CellAccumulator::new();
    acc.extend(records);
    acc.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdRow {
    pub levels: Vec<Level>,
    pub value: f64,
    /// Number of complementary cells averaged.
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdTable {
    pub scope: Vec<Factor>,
    pub rows: Vec<PdRow>,
}

impl PdTable {
    pub fn get(&self, levels: &[Level]) -> Option<f64> {
        self.rows.iter().find(|r| r.levels == levels).map(|r| r.value)
    }
}

fn describe(levels: &Levels, factors: &[Factor]) -> String {
    factors
        .iter()
        .map(|f| format!("{}={}", f, f.level(levels)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Partial dependence on `scope`, marginalizing every other factor by an
/// unweighted mean over its observed combinations. Fails with
/// [`Error::MissingCells`] unless every scope level is observed with every
/// complementary combination.
pub fn partial_dependence(summaries: &[CellSummary], scope: &[Factor]) -> Result<PdTable> {
    if scope.is_empty() {
        return Err(Error::Config(
            "partial dependence needs at least one factor in scope".into(),
        ));
    }
    if scope.iter().collect::<BTreeSet<_>>().len() != scope.len() {
        return Err(Error::Config("scope lists a factor twice".into()));
    }
    if summaries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let complement: Vec<Factor> = Factor::ALL.into_iter().filter(|f| !scope.contains(f)).collect();
    let project = |l: &Levels, fs: &[Factor]| fs.iter().map(|f| f.level(l)).collect::<Vec<_>>();

    let mut grid: BTreeMap<Vec<Level>, BTreeMap<Vec<Level>, f64>> = BTreeMap::new();
    let mut complements: BTreeSet<Vec<Level>> = BTreeSet::new();
    for cell in summaries {
        let s = project(&cell.levels, scope);
        let c = project(&cell.levels, &complement);
        complements.insert(c.clone());
        if grid.entry(s).or_default().insert(c, cell.mean).is_some() {
            return Err(Error::DuplicateCell(describe(&cell.levels, &Factor::ALL)));
        }
    }

    let mut missing = Vec::new();
    for (s, row) in &grid {
        for c in &complements {
            if !row.contains_key(c) {
                let text = scope
                    .iter()
                    .zip(s)
                    .chain(complement.iter().zip(c))
                    .map(|(f, l)| format!("{f}={l}"))
                    .collect::<Vec<_>>()
                    .join(";");
                missing.push(text);
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells { missing });
    }

    let rows = grid
        .into_iter()
        .map(|(levels, row)| PdRow {
            value: row.values().sum::<f64>() / row.len() as f64,
            cells: row.len(),
            levels,
        })
        .collect();
    Ok(PdTable {
        scope: scope.to_vec(),
        rows,
    })
}

/// Difference of two marginal means with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contrast {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Contrast {
    /// The interval lies strictly above zero.
    pub fn positive(&self) -> bool {
        self.lower > 0.0
    }
}

impl fmt::Display for Contrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+.5} [{:+.5}, {:+.5}]", self.estimate, self.lower, self.upper)
    }
}

pub fn select(summaries: &[CellSummary], pred: impl Fn(&Levels) -> bool) -> Vec<&CellSummary> {
    summaries.iter().filter(|c| pred(&c.levels)).collect()
}

/// `mean(cell means of a) - mean(cell means of b)` with a 95% percentile
/// bootstrap interval. Replications are resampled jointly across all cells
/// (the same replication index draws the same landscape and population in
/// every scenario), so every cell must carry the same number of replicates.
pub fn bootstrap_contrast(a: &[&CellSummary], b: &[&CellSummary], resamples: usize, seed: u64) -> Result<Contrast> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let reps = a[0].replicate_means.len();
    if reps == 0 || a.iter().chain(b).any(|c| c.replicate_means.len() != reps) {
        return Err(Error::Config(
            "bootstrap needs equal replication counts in every cell".into(),
        ));
    }
    let marginal = |cells: &[&CellSummary]| cells.iter().map(|c| c.mean).sum::<f64>() / cells.len() as f64;
    let estimate = marginal(a) - marginal(b);

    let mut rng = seed::stream(seed, Stream::Bootstrap, 0);
    let mut draws = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; reps];
    for _ in 0..resamples {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..reps));
        let resampled = |cells: &[&CellSummary]| {
            cells
                .iter()
                .map(|c| idx.iter().map(|&i| c.replicate_means[i]).sum::<f64>() / reps as f64)
                .sum::<f64>()
                / cells.len() as f64
        };
        draws.push(resampled(a) - resampled(b));
    }
    draws.sort_by(f64::total_cmp);
    let q = |p: f64| draws[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    let (lower, upper) = if resamples == 0 {
        (estimate, estimate)
    } else {
        (q(0.025), q(0.975))
    };
    Ok(Contrast { estimate, lower, upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureKind {
    /// One-factor partial dependence for every factor.
    Overview,
    /// Block pattern only: `k × tau × learn_prob`.
    Learning,
    /// `learn_prob = 0` only: `k × pattern × tau`.
    Structure,
    /// Every cell: `k × tau × pattern × learn_prob`.
    Surfaces,
}

impl FigureKind {
    pub const ALL: [FigureKind; 4] = [
        FigureKind::Overview,
        FigureKind::Learning,
        FigureKind::Structure,
        FigureKind::Surfaces,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureKind::Overview => "overview",
            FigureKind::Learning => "learning",
            FigureKind::Structure => "structure",
            FigureKind::Surfaces => "surfaces",
        }
    }
}

impl FromStr for FigureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureKind::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure table `{s}`")))
    }
}

fn require(cells: Vec<CellSummary>, what: &str) -> Result<Vec<CellSummary>> {
    if cells.is_empty() {
        return Err(Error::MissingCells {
            missing: vec![what.to_string()],
        });
    }
    Ok(cells)
}

/// Named long-format tables for one figure kind, e.g. `overview_tau`.
pub fn figure_tables(summaries: &[CellSummary], kind: FigureKind) -> Result<Vec<(String, PdTable)>> {
    let filtered = |pred: &dyn Fn(&Levels) -> bool| -> Vec<CellSummary> {
        summaries.iter().filter(|c| pred(&c.levels)).cloned().collect()
    };
    match kind {
        FigureKind::Overview => [Factor::Tau, Factor::LearnProb, Factor::K, Factor::Pattern]
            .into_iter()
            .map(|f| Ok((format!("overview_{}", f.name()), partial_dependence(summaries, &[f])?)))
            .collect(),
        FigureKind::Learning => {
            let cells = require(filtered(&|l| l.pattern == Pattern::Block), "pattern=block")?;
            let table = partial_dependence(&cells, &[Factor::K, Factor::Tau, Factor::LearnProb])?;
            Ok(vec![("learning".to_string(), table)])
        }
        FigureKind::Structure => {
            let cells = require(filtered(&|l| l.learn_prob == 0.0), "learn_prob=0")?;
            let table = partial_dependence(&cells, &[Factor::K, Factor::Pattern, Factor::Tau])?;
            Ok(vec![("structure".to_string(), table)])
        }
        FigureKind::Surfaces => {
            let table = partial_dependence(summaries, &[Factor::K, Factor::Tau, Factor::Pattern, Factor::LearnProb])?;
            Ok(vec![("surfaces".to_string(), table)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ScenarioId;

    fn levels(k: usize, pattern: Pattern, tau: Schedule, learn_prob: f64) -> Levels {
        Levels {
            k,
            pattern,
            tau,
            learn_prob,
        }
    }

    fn record(l: Levels, replication: usize, t: usize, normalized: f64) -> RunRecord {
        RunRecord {
            scenario: ScenarioId::of(&l),
            levels: l,
            replication,
            t,
            raw: normalized * 0.8,
            normalized,
            members: vec![0, 1, 2],
            adapted: t == 1,
        }
    }

    fn cell(l: Levels, mean: f64) -> CellSummary {
        CellSummary {
            levels: l,
            mean,
            stderr: 0.0,
            n_obs: 1,
            replicate_means: vec![mean],
        }
    }

    #[test]
    fn degenerate_records() {
        let l = levels(3, Pattern::Block, Schedule::Never, 0.0);
        let recs: Vec<_> = (0..5)
            .flat_map(|r| (1..=4).map(move |t| record(l, r, t, 1.0)))
            .collect();
        let s = summarize(&recs).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean, 1.0);
        assert_eq!(s[0].stderr, 0.0);
        assert_eq!(s[0].n_obs, 20);
    }

    #[test]
    fn hand_computed_mean_and_stderr() {
        // two replications × two periods: rep means 0.6 and 0.8
        let l = levels(5, Pattern::Random, Schedule::Every(1), 0.5);
        let recs = vec![
            record(l, 0, 1, 0.5),
            record(l, 0, 2, 0.7),
            record(l, 1, 1, 0.9),
            record(l, 1, 2, 0.7),
        ];
        let s = &summarize(&recs).unwrap()[0];
        assert!((s.mean - 0.7).abs() < 1e-15);
        // sd of {0.6, 0.8} = sqrt(0.02), se = sqrt(0.02 / 2) = 0.1
        assert!((s.stderr - 0.1).abs() < 1e-12);
        assert_eq!(s.n_obs, 4);
        assert_eq!(s.replicate_means.len(), 2);
    }

    #[test]
    fn record_order_is_irrelevant() {
        let l = levels(5, Pattern::Random, Schedule::Every(1), 0.5);
        let mut recs: Vec<_> = (0..6)
            .flat_map(|r| (1..=5).map(move |t| record(l, r, t, 0.1 + 0.01 * (r * 7 + t) as f64)))
            .collect();
        let a = summarize(&recs).unwrap();
        recs.reverse();
        let b = summarize(&recs).unwrap();
        assert_eq!(a[0].replicate_means, b[0].replicate_means);
        assert!((a[0].mean - b[0].mean).abs() < 1e-14);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(summarize(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn single_factor_grid_reduces_to_cell_means() {
        let cells: Vec<_> = [0.0, 0.5, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &p)| cell(levels(3, Pattern::Block, Schedule::Never, p), 0.5 + 0.1 * i as f64))
            .collect();
        let pd = partial_dependence(&cells, &[Factor::LearnProb]).unwrap();
        assert_eq!(pd.rows.len(), 3);
        for (row, c) in pd.rows.iter().zip(&cells) {
            assert_eq!(row.value, c.mean);
            assert_eq!(row.cells, 1);
        }
    }

    #[test]
    fn duplicated_complement_level_is_idempotent() {
        let base = [
            cell(levels(3, Pattern::Block, Schedule::Never, 0.0), 0.9),
            cell(levels(5, Pattern::Block, Schedule::Never, 0.0), 0.7),
        ];
        let pd1 = partial_dependence(&base, &[Factor::K]).unwrap();
        let mut twice = base.to_vec();
        twice.push(cell(levels(3, Pattern::Random, Schedule::Never, 0.0), 0.9));
        twice.push(cell(levels(5, Pattern::Random, Schedule::Never, 0.0), 0.7));
        let pd2 = partial_dependence(&twice, &[Factor::K]).unwrap();
        for (a, b) in pd1.rows.iter().zip(&pd2.rows) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn incomplete_grid_is_reported() {
        let cells = [
            cell(levels(3, Pattern::Block, Schedule::Never, 0.0), 0.9),
            cell(levels(3, Pattern::Random, Schedule::Never, 0.0), 0.8),
            cell(levels(5, Pattern::Block, Schedule::Never, 0.0), 0.7),
        ];
        match partial_dependence(&cells, &[Factor::K]) {
            Err(Error::MissingCells { missing }) => {
                assert_eq!(missing, vec!["k=5;pattern=random;tau=never;learn_prob=0".to_string()]);
            }
            other => panic!("expected missing cells, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_cells_are_rejected() {
        let l = levels(3, Pattern::Block, Schedule::Never, 0.0);
        assert!(matches!(
            partial_dependence(&[cell(l, 0.1), cell(l, 0.2)], &[Factor::K]),
            Err(Error::DuplicateCell(_))
        ));
    }

    #[test]
    fn bootstrap_detects_clear_difference() {
        let mk = |k, base: f64| CellSummary {
            levels: levels(k, Pattern::Block, Schedule::Never, 0.0),
            mean: base + 0.0045,
            stderr: 0.0,
            n_obs: 10,
            replicate_means: (0..10).map(|i| base + 0.001 * i as f64).collect(),
        };
        let a = mk(3, 0.9);
        let b = mk(5, 0.8);
        let c = bootstrap_contrast(&[&a], &[&b], 500, 1).unwrap();
        assert!((c.estimate - 0.1).abs() < 1e-12);
        // paired resampling cancels the shared within-cell trend
        assert!((c.lower - 0.1).abs() < 1e-9 && (c.upper - 0.1).abs() < 1e-9);
        assert!(c.positive());
        let none = bootstrap_contrast(&[&a], &[&a], 500, 1).unwrap();
        assert!(!none.positive());
    }

    #[test]
    fn bootstrap_rejects_unequal_cells() {
        let a = cell(levels(3, Pattern::Block, Schedule::Never, 0.0), 0.9);
        let mut b = a.clone();
        b.replicate_means.push(0.3);
        assert!(bootstrap_contrast(&[&a], &[&b], 10, 0).is_err());
    }

    fn default_grid() -> Vec<CellSummary> {
        let mut out = Vec::new();
        for k in [3, 5] {
            for p in Pattern::ALL {
                for tau in [Schedule::Never, Schedule::Every(1), Schedule::Every(10)] {
                    for i in 0..=10 {
                        let lp = i as f64 / 10.0;
                        out.push(cell(levels(k, p, tau, lp), 0.5 + 0.01 * i as f64));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn figure_table_arity() {
        let grid = default_grid();
        assert_eq!(grid.len(), 396);
        let overview = figure_tables(&grid, FigureKind::Overview).unwrap();
        let sizes: Vec<usize> = overview.iter().map(|(_, t)| t.rows.len()).collect();
        assert_eq!(sizes, vec![3, 11, 2, 6]);
        assert_eq!(figure_tables(&grid, FigureKind::Learning).unwrap()[0].1.rows.len(), 66);
        assert_eq!(figure_tables(&grid, FigureKind::Structure).unwrap()[0].1.rows.len(), 36);
        assert_eq!(figure_tables(&grid, FigureKind::Surfaces).unwrap()[0].1.rows.len(), 396);
    }

    #[test]
    fn figure_tables_need_their_levels() {
        let grid: Vec<_> = default_grid()
            .into_iter()
            .filter(|c| c.levels.pattern != Pattern::Block)
            .collect();
        assert!(matches!(
            figure_tables(&grid, FigureKind::Learning),
            Err(Error::MissingCells { .. })
        ));
    }
}
