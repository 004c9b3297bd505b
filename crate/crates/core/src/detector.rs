//! Analytic model of the four-branch beam-splitter-tree detector.
//!
//! Each photon entering the tree is routed to one of the four SPADs with the
//! branch probabilities in [`DetectorParams::split`]. A SPAD hit by `k`
//! photons stays silent with probability `(1 - eta)^k (1 - p_dark)`; the
//! detector reports the number of clicking SPADs.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{factorial, ln_factorial, power_table, MAX_FACTORIAL};

/// Number of SPADs at the leaves of the tree.
pub const BRANCHES: usize = 4;
/// Number of detector outcomes, `0..=4` clicks.
pub const OUTCOMES: usize = BRANCHES + 1;

/// Branch efficiencies of the characterised 1550 nm tree (loss and splitting
/// asymmetry folded in).
pub const CALIBRATED_ETA: [f64; BRANCHES] = [0.1270, 0.1375, 0.1410, 0.127];
/// Dark-click probability per gate of each branch.
pub const CALIBRATED_P_DARK: [f64; BRANCHES] = [1.20e-4, 1.25e-4, 1.13e-4, 2.52e-4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    A,
    B,
    C,
    D,
}

impl Branch {
    pub const ALL: [Branch; BRANCHES] = [Branch::A, Branch::B, Branch::C, Branch::D];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl TryFrom<usize> for Branch {
    type Error = Error;

    fn try_from(i: usize) -> Result<Self> {
        Branch::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::param(format!("branch id {i} out of range 0..{BRANCHES}")))
    }
}

/// Set of clicking branches, bit `i` for branch `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct ClickPattern(u8);

impl ClickPattern {
    pub const EMPTY: ClickPattern = ClickPattern(0);

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits >= 1 << BRANCHES {
            return Err(Error::param(format!(
                "click pattern {bits:#b} uses unknown branches"
            )));
        }
        Ok(ClickPattern(bits))
    }

    pub fn from_branches(branches: &[Branch]) -> Self {
        ClickPattern(branches.iter().fold(0, |acc, b| acc | 1 << b.index()))
    }

    /// All 16 patterns in bit order.
    pub fn all() -> impl Iterator<Item = ClickPattern> {
        (0..1u8 << BRANCHES).map(ClickPattern)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, branch: Branch) -> bool {
        self.0 & (1 << branch.index()) != 0
    }

    pub fn clicks(self) -> usize {
        self.0.count_ones() as usize
    }
}

/// Per-branch calibration of the tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// Detection efficiency of each branch.
    pub eta: [f64; BRANCHES],
    /// Dark-click probability per gate of each branch.
    pub p_dark: [f64; BRANCHES],
    /// Probability that a photon is routed to each branch.
    pub split: [f64; BRANCHES],
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self::calibrated()
    }
}

impl DetectorParams {
    /// The calibrated 1550 nm InGaAs tree with an ideal equal split.
    pub fn calibrated() -> Self {
        Self {
            eta: CALIBRATED_ETA,
            p_dark: CALIBRATED_P_DARK,
            split: [0.25; BRANCHES],
        }
    }

    /// Unit efficiency, no dark counts, equal split.
    pub fn ideal() -> Self {
        Self {
            eta: [1.0; BRANCHES],
            p_dark: [0.0; BRANCHES],
            split: [0.25; BRANCHES],
        }
    }

    pub fn new(eta: [f64; BRANCHES], p_dark: [f64; BRANCHES]) -> Result<Self> {
        let params = Self {
            eta,
            p_dark,
            split: [0.25; BRANCHES],
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_split(mut self, split: [f64; BRANCHES]) -> Result<Self> {
        self.split = split;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: &[f64; BRANCHES]| -> Result<()> {
            for (i, &x) in v.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::param(format!(
                        "{name}[{i}] = {x} is not a probability"
                    )));
                }
            }
            Ok(())
        };
        unit("eta", &self.eta)?;
        unit("p_dark", &self.p_dark)?;
        unit("split", &self.split)?;
        let total: f64 = self.split.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("split sums to {total}, expected 1")));
        }
        Ok(())
    }

    /// Probability that `branch` stays silent when hit by `k` photons.
    pub fn noclick_prob(&self, branch: Branch, k: u32) -> f64 {
        let g = branch.index();
        (1.0 - self.eta[g]).powi(k as i32) * (1.0 - self.p_dark[g])
    }

    /// Probability that `branch` clicks when hit by `k` photons.
    pub fn click_prob(&self, branch: Branch, k: u32) -> f64 {
        1.0 - self.noclick_prob(branch, k)
    }

    /// Probability that exactly the branches in `clicked` fire when `m`
    /// photons enter the tree.
    pub fn pattern_prob(&self, clicked: ClickPattern, m: usize) -> f64 {
        let tables = ColumnTables::new(self, m);
        let mut total = 0.0;
        tables.for_each_routing(|weight, counts| {
            let mut p = weight;
            for branch in Branch::ALL {
                let g = branch.index();
                let silent = tables.noclick[g][counts[g]];
                p *= if clicked.contains(branch) {
                    1.0 - silent
                } else {
                    silent
                };
            }
            total += p;
        });
        total
    }

    /// `Xi[n][m]` for `m = 0..=truncation`.
    pub fn theoretical_povm(&self, truncation: usize) -> PovmMatrix {
        let columns: Vec<[f64; OUTCOMES]> = (0..=truncation)
            .into_par_iter()
            .map(|m| self.povm_column(m))
            .collect();
        let mut values = DMatrix::zeros(OUTCOMES, truncation + 1);
        for (m, col) in columns.iter().enumerate() {
            for (n, &v) in col.iter().enumerate() {
                values[(n, m)] = v;
            }
        }
        PovmMatrix { values }
    }

    /// One POVM column: click-count distribution for `m` incoming photons.
    pub fn povm_column(&self, m: usize) -> [f64; OUTCOMES] {
        let tables = ColumnTables::new(self, m);
        let mut column = [0.0; OUTCOMES];
        tables.for_each_routing(|weight, counts| {
            // Distribution of the number of clicks over independent branches.
            let mut dist = [0.0; OUTCOMES];
            dist[0] = 1.0;
            for g in 0..BRANCHES {
                let silent = tables.noclick[g][counts[g]];
                let fire = 1.0 - silent;
                for n in (0..=g + 1).rev() {
                    let from_fire = if n > 0 { dist[n - 1] * fire } else { 0.0 };
                    dist[n] = dist[n] * silent + from_fire;
                }
            }
            for n in 0..OUTCOMES {
                column[n] += weight * dist[n];
            }
        });
        column
    }
}

/// Precomputed powers and no-click tables for a single photon number `m`.
struct ColumnTables {
    m: usize,
    split_pow: [Vec<f64>; BRANCHES],
    noclick: [Vec<f64>; BRANCHES],
    ln_split: [f64; BRANCHES],
}

impl ColumnTables {
    fn new(params: &DetectorParams, m: usize) -> Self {
        let split_pow = std::array::from_fn(|g| power_table(params.split[g], m + 1));
        let noclick = std::array::from_fn(|g| {
            power_table(1.0 - params.eta[g], m + 1)
                .into_iter()
                .map(|p| p * (1.0 - params.p_dark[g]))
                .collect()
        });
        let ln_split = std::array::from_fn(|g| params.split[g].ln());
        Self {
            m,
            split_pow,
            noclick,
            ln_split,
        }
    }

    /// Multinomial routing weight for photon counts `(i, j, k, l)`.
    fn weight(&self, counts: [usize; BRANCHES]) -> f64 {
        let m = self.m;
        if m <= MAX_FACTORIAL {
            let mut w = factorial(m);
            for g in 0..BRANCHES {
                w /= factorial(counts[g]);
                w *= self.split_pow[g][counts[g]];
            }
            w
        } else {
            let mut ln_w = ln_factorial(m);
            for g in 0..BRANCHES {
                let c = counts[g];
                ln_w -= ln_factorial(c);
                if c > 0 {
                    ln_w += c as f64 * self.ln_split[g];
                }
            }
            ln_w.exp()
        }
    }

    /// Visits every assignment of `m` photons to the four branches.
    fn for_each_routing(&self, mut visit: impl FnMut(f64, [usize; BRANCHES])) {
        let m = self.m;
        for i in 0..=m {
            for j in 0..=m - i {
                for k in 0..=m - i - j {
                    let counts = [i, j, k, m - i - j - k];
                    visit(self.weight(counts), counts);
                }
            }
        }
    }
}

/// Diagonal POVM coefficients `Xi[n][m]`, outcomes `n = 0..=4` by photon
/// numbers `m = 0..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmMatrix {
    values: DMatrix<f64>,
}

impl PovmMatrix {
    /// Wraps a `5 x (M+1)` matrix, checking the POVM invariants at `tol`.
    pub fn from_matrix(values: DMatrix<f64>, tol: f64) -> Result<Self> {
        if values.nrows() != OUTCOMES || values.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "POVM matrix must be {OUTCOMES} x (M+1), got {} x {}",
                values.nrows(),
                values.ncols()
            )));
        }
        let povm = Self { values };
        povm.check(tol)?;
        Ok(povm)
    }

    pub(crate) fn from_matrix_unchecked(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    /// Entry range and column normalisation within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        for m in 0..self.values.ncols() {
            let col = self.values.column(m);
            if let Some(bad) = col.iter().find(|&&v| !(v >= -tol && v <= 1.0 + tol)) {
                return Err(Error::Schema(format!(
                    "Xi[.][{m}] entry {bad} outside [0, 1]"
                )));
            }
            let sum = col.sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Schema(format!("column m={m} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn truncation(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values[(n, m)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, m: usize) -> [f64; OUTCOMES] {
        std::array::from_fn(|n| self.values[(n, m)])
    }

    /// Largest `|sum_n Xi[n][m] - 1|` over all columns.
    pub fn normalization_error(&self) -> f64 {
        (0..self.values.ncols())
            .map(|m| (self.values.column(m).sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest entry-wise difference over the first `upto + 1` columns.
    pub fn max_abs_diff(&self, other: &PovmMatrix, upto: usize) -> f64 {
        let cols = (upto + 1)
            .min(self.values.ncols())
            .min(other.values.ncols());
        let mut worst: f64 = 0.0;
        for m in 0..cols {
            for n in 0..OUTCOMES {
                worst = worst.max((self.values[(n, m)] - other.values[(n, m)]).abs());
            }
        }
        worst
    }
}
