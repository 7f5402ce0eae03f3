//! NK task environment.
//!
//! A task has `n` binary decisions split into equal contiguous subtasks. Each
//! decision contributes a value that depends on its own bit and on the `k`
//! bits listed in its row of the [`InterdependenceMatrix`]. Contributions are
//! stored as full lookup tables with `2^(k+1)` entries per decision; the task
//! performance is the mean contribution.
//!
//! Bit convention: decision `i` is bit `i` of [`Solution::bits`]. "Lowest
//! bitstring value" everywhere means the lowest integer under that encoding.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::{self, Stream};
use crate::{Error, Result};

/// Largest `n` for which exhaustive optimum search is allowed.
pub const ENUMERATION_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Block,
    Centralised,
    Dependent,
    Hierarchical,
    Local,
    Random,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [
        Pattern::Block,
        Pattern::Centralised,
        Pattern::Dependent,
        Pattern::Hierarchical,
        Pattern::Local,
        Pattern::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Block => "block",
            Pattern::Centralised => "centralised",
            Pattern::Dependent => "dependent",
            Pattern::Hierarchical => "hierarchical",
            Pattern::Local => "local",
            Pattern::Random => "random",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pattern::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown pattern `{s}` (expected one of block, centralised, dependent, hierarchical, local, random)"
            ))
        })
    }
}

/// Which other decisions each performance contribution depends on.
/// Self-dependence is implicit and never listed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterdependenceMatrix {
    n: usize,
    k: usize,
    pattern: Pattern,
    rows: Vec<Vec<usize>>,
}

impl InterdependenceMatrix {
    /// Builds the matrix for `pattern`. Only [`Pattern::Random`] consumes
    /// `seed`; every other pattern is a fixed function of `(n, k)`.
    ///
    /// Rows are 0-indexed and the standard task uses subtasks `[0,4)`,
    /// `[4,8)`, `[8,12)`. Block, centralised, local and random are defined
    /// for any `k < n` (block needs `k + 1` to divide `n`); dependent and
    /// hierarchical are only defined for `n = 12`, `k ∈ {3, 5}` (and `k = 0`).
    pub fn build(pattern: Pattern, n: usize, k: usize, seed: u64) -> Result<Self> {
        if k >= n {
            return Err(Error::DependencyCount { n, k });
        }
        if n > 32 {
            return Err(Error::EnumerationCap { n, cap: 32 });
        }
        let unsupported = |reason| Error::UnsupportedPattern {
            pattern: pattern.name(),
            n,
            k,
            reason,
        };
        let rows: Vec<Vec<usize>> = if k == 0 {
            vec![Vec::new(); n]
        } else {
            match pattern {
                Pattern::Block => {
                    let size = k + 1;
                    if !n.is_multiple_of(size) {
                        return Err(unsupported("block size k + 1 must divide n"));
                    }
                    (0..n)
                        .map(|r| {
                            let start = r / size * size;
                            (start..start + size).filter(|&c| c != r).collect()
                        })
                        .collect()
                }
                Pattern::Centralised => (0..n)
                    .map(|r| {
                        if r <= k {
                            (0..=k).filter(|&c| c != r).collect()
                        } else {
                            (0..k).collect()
                        }
                    })
                    .collect(),
                Pattern::Dependent => {
                    if n != 12 || !(k == 3 || k == 5) {
                        return Err(unsupported("defined only for n = 12, k in {3, 5}"));
                    }
                    (0..n).map(|r| dependent_row(r, k)).collect()
                }
                Pattern::Hierarchical => {
                    if n != 12 || !(k == 3 || k == 5) {
                        return Err(unsupported("defined only for n = 12, k in {3, 5}"));
                    }
                    (0..n).map(|r| hierarchical_row(r, k)).collect()
                }
                Pattern::Local => (0..n).map(|r| (1..=k).map(|d| (r + n - d) % n).collect()).collect(),
                Pattern::Random => {
                    let mut rng = seed::stream(seed, Stream::Matrix, 0);
                    (0..n)
                        .map(|r| {
                            index::sample(&mut rng, n - 1, k)
                                .into_iter()
                                .map(|c| if c >= r { c + 1 } else { c })
                                .collect()
                        })
                        .collect()
                }
            }
        };
        Self::from_rows(pattern, n, k, rows)
    }

    /// Validates hand-built rows. Rows are stored sorted.
    pub fn from_rows(pattern: Pattern, n: usize, k: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        if k >= n {
            return Err(Error::DependencyCount { n, k });
        }
        if rows.len() != n {
            return Err(Error::InvalidTable(format!("expected {n} rows, got {}", rows.len())));
        }
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.len() != k || row.iter().any(|&c| c >= n || c == r) {
                return Err(Error::InvalidTable(format!(
                    "row {r} must list {k} distinct indices in [0, {n}) other than {r}, got {row:?}"
                )));
            }
        }
        Ok(Self { n, k, pattern, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pattern(&self) -> Pattern {
        self.pattern
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.rows[r]
    }

    pub fn depends(&self, row: usize, col: usize) -> bool {
        row == col || self.rows[row].binary_search(&col).is_ok()
    }

    /// N×N grid, `x` where the contribution in that row depends on the
    /// decision in that column (diagonal included), `-` elsewhere.
    pub fn render_grid(&self) -> String {
        let mut out = String::with_capacity(self.n * (self.n + 1));
        for r in 0..self.n {
            for c in 0..self.n {
                out.push(if self.depends(r, c) { 'x' } else { '-' });
            }
            out.push('\n');
        }
        out
    }
}

fn dependent_row(r: usize, k: usize) -> Vec<usize> {
    let own_block = |r: usize| {
        let start = r / 4 * 4;
        (start..start + 4).filter(move |&c| c != r)
    };
    match (k, r) {
        (3, 0..=7) => own_block(r).collect(),
        (3, 8 | 9) => vec![0, 1, 4],
        (3, _) => vec![2, 4, 5],
        (5, 0..=7) => {
            // Two extra columns from the other upstream block, adjacent to
            // the row's offset within its own block.
            let other = if r < 4 { 4 } else { 0 };
            let offset = r % 4;
            own_block(r).chain([other + offset, other + (offset + 1) % 4]).collect()
        }
        (5, _) => vec![0, 1, 2, 4, 5],
        _ => unreachable!("checked by caller"),
    }
}

fn hierarchical_row(r: usize, k: usize) -> Vec<usize> {
    match (k, r) {
        (3, 0..=3) => (0..4).filter(|&c| c != r).collect(),
        (3, _) => vec![1, 2, 3],
        (5, 0..=7) => (0..8).filter(|&c| c != r).take(5).collect(),
        (5, _) => vec![0, 1, 2, 4, 5],
        _ => unreachable!("checked by caller"),
    }
}

/// A full decision vector of length `len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Solution {
    bits: u32,
    len: u8,
}

impl Solution {
    pub fn new(bits: u32, len: usize) -> Self {
        assert!(len <= 32, "solutions hold at most 32 decisions");
        let mask = if len == 32 { u32::MAX } else { (1u32 << len) - 1 };
        Self {
            bits: bits & mask,
            len: len as u8,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let value = bits
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << i));
        Self::new(value, bits.len())
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }

    pub fn flipped(&self, i: usize) -> Self {
        Self::new(self.bits ^ (1 << i), self.len())
    }

    /// Bits `[m·s, (m+1)·s)` as an `s`-bit subtask solution.
    pub fn segment(&self, m: usize, s: usize) -> u32 {
        (self.bits >> (m * s)) & ((1u32 << s) - 1)
    }

    pub fn with_segment(&self, m: usize, s: usize, value: u32) -> Self {
        let mask = ((1u32 << s) - 1) << (m * s);
        Self::new((self.bits & !mask) | ((value << (m * s)) & mask), self.len())
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// One task instance: matrix, contribution tables and cached global optimum.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Landscape {
    matrix: InterdependenceMatrix,
    subtasks: usize,
    tables: Vec<Vec<f64>>,
    global_max: f64,
    global_argmax: Solution,
}

impl Landscape {
    /// Draws every table entry i.i.d. from U[0,1) and locates the optimum by
    /// scanning all `2^n` solutions.
    pub fn generate(matrix: InterdependenceMatrix, subtasks: usize, seed: u64) -> Result<Self> {
        check_layout(matrix.n, subtasks)?;
        let mut rng = seed::stream(seed, Stream::Tables, 0);
        let width = 1usize << (matrix.k + 1);
        let tables = (0..matrix.n)
            .map(|_| (0..width).map(|_| rng.random::<f64>()).collect())
            .collect();
        Self::from_tables(matrix, subtasks, tables)
    }

    pub fn from_tables(matrix: InterdependenceMatrix, subtasks: usize, tables: Vec<Vec<f64>>) -> Result<Self> {
        check_layout(matrix.n, subtasks)?;
        let width = 1usize << (matrix.k + 1);
        if tables.len() != matrix.n || tables.iter().any(|t| t.len() != width) {
            return Err(Error::InvalidTable(format!(
                "expected {} tables of {width} entries",
                matrix.n
            )));
        }
        if let Some(bad) = tables.iter().flatten().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidTable(format!("contribution {bad} outside [0, 1]")));
        }
        let mut landscape = Self {
            matrix,
            subtasks,
            tables,
            global_max: f64::NEG_INFINITY,
            global_argmax: Solution::new(0, 0),
        };
        let n = landscape.n();
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0u32);
        for bits in 0..(1u32 << n) {
            let p = landscape.perf_bits(bits);
            // strict: the lowest value wins ties
            if p > best {
                best = p;
                arg = bits;
            }
        }
        landscape.global_max = best;
        landscape.global_argmax = Solution::new(arg, n);
        Ok(landscape)
    }

    pub fn matrix(&self) -> &InterdependenceMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n
    }

    pub fn k(&self) -> usize {
        self.matrix.k
    }

    pub fn subtasks(&self) -> usize {
        self.subtasks
    }

    /// Decisions per subtask.
    pub fn subtask_len(&self) -> usize {
        self.matrix.n / self.subtasks
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    pub fn global_max(&self) -> f64 {
        self.global_max
    }

    pub fn global_argmax(&self) -> Solution {
        self.global_argmax
    }

    fn check_len(&self, solution: &Solution) -> Result<()> {
        if solution.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: solution.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn contribution_bits(&self, bits: u32, decision: usize) -> f64 {
        let mut idx = (bits >> decision & 1) as usize;
        for (j, &dep) in self.matrix.rows[decision].iter().enumerate() {
            idx |= ((bits >> dep & 1) as usize) << (j + 1);
        }
        self.tables[decision][idx]
    }

    #[inline]
    pub(crate) fn perf_bits(&self, bits: u32) -> f64 {
        let sum: f64 = (0..self.n()).map(|d| self.contribution_bits(bits, d)).sum();
        sum / self.n() as f64
    }

    pub fn contribution(&self, solution: &Solution, decision: usize) -> Result<f64> {
        self.check_len(solution)?;
        if decision >= self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                got: decision,
            });
        }
        Ok(self.contribution_bits(solution.bits(), decision))
    }

    /// Mean of all `n` contributions.
    pub fn performance(&self, solution: &Solution) -> Result<f64> {
        self.check_len(solution)?;
        Ok(self.perf_bits(solution.bits()))
    }

    /// Performance divided by the global maximum.
    pub fn normalized(&self, solution: &Solution) -> Result<f64> {
        Ok(self.performance(solution)? / self.global_max)
    }

    /// Mean of the contributions whose decisions belong to `subtask`.
    pub fn subtask_performance(&self, solution: &Solution, subtask: usize) -> Result<f64> {
        self.check_len(solution)?;
        if subtask >= self.subtasks {
            return Err(Error::SubtaskOutOfRange {
                index: subtask,
                count: self.subtasks,
            });
        }
        let s = self.subtask_len();
        let sum: f64 = (subtask * s..(subtask + 1) * s)
            .map(|d| self.contribution_bits(solution.bits(), d))
            .sum();
        Ok(sum / s as f64)
    }

    /// Solutions strictly better than all `n` single-bit neighbours.
    pub fn count_local_optima(&self) -> Result<usize> {
        let n = self.n();
        if n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                n,
                cap: ENUMERATION_CAP,
            });
        }
        let perf: Vec<f64> = (0..1u32 << n).map(|b| self.perf_bits(b)).collect();
        Ok((0..1u32 << n)
            .filter(|&b| (0..n).all(|i| perf[b as usize] > perf[(b ^ (1 << i)) as usize]))
            .count())
    }
}

fn check_layout(n: usize, subtasks: usize) -> Result<()> {
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    if subtasks == 0 || !n.is_multiple_of(subtasks) {
        return Err(Error::Indivisible { n, m: subtasks });
    }
    Ok(())
}
