//! POVM tomography: smoothness-regularised, simplex-constrained least squares.
//!
//! Unknowns are `Xi[n][m]`. The objective is
//!
//! ```text
//! sum_{n,j} w[n][j] (sum_m a[m][j] Xi[n][m] - xi[n][j])^2 + lambda * sum_n |D Xi[n][.]|^2
//! ```
//!
//! with `D` a first- or second-difference operator along `m`, subject to
//! `sum_n Xi[n][m] = 1` and `Xi >= 0`. The Hessian is block diagonal with one
//! `(M+1) x (M+1)` block per outcome, and the constraints couple the blocks
//! only through the per-column sums, which the solver exploits.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::detector::{PovmMatrix, OUTCOMES};
use crate::error::{Error, Result};
use crate::numeric::project_simplex;
use crate::probes::{build_probe_matrix, choose_truncation, ProbeMatrix, DEFAULT_TAIL_EPSILON};
use crate::simulator::OutcomeStats;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `sum_m (Xi[n][m+1] - Xi[n][m])^2`
    #[default]
    FirstDifference,
    /// `sum_m (Xi[n][m+2] - 2 Xi[n][m+1] + Xi[n][m])^2`
    SecondDifference,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Plain sum of squared residuals.
    #[default]
    Uniform,
    /// Residuals scaled by the inverse binomial variance of each frequency,
    /// normalised to unit mean weight.
    InverseVariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// Strength of the smoothness penalty.
    pub smoothing_weight: f64,
    pub regularizer: Regularizer,
    pub weighting: Weighting,
    pub max_iterations: usize,
    /// Required bound on the projected-gradient KKT residual.
    pub kkt_tolerance: f64,
    /// Fixed truncation `M`; chosen from `tail_epsilon` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    pub tail_epsilon: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            smoothing_weight: 1e-2,
            regularizer: Regularizer::FirstDifference,
            weighting: Weighting::Uniform,
            max_iterations: 200,
            kkt_tolerance: 1e-8,
            truncation: None,
            tail_epsilon: DEFAULT_TAIL_EPSILON,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing_weight >= 0.0) || !self.smoothing_weight.is_finite() {
            return Err(Error::param(format!(
                "smoothing weight {} must be >= 0",
                self.smoothing_weight
            )));
        }
        if !(self.kkt_tolerance > 0.0) {
            return Err(Error::param(format!(
                "KKT tolerance {} must be > 0",
                self.kkt_tolerance
            )));
        }
        if !(self.tail_epsilon > 0.0 && self.tail_epsilon < 1.0) {
            return Err(Error::param(format!(
                "tail epsilon {} not in (0, 1)",
                self.tail_epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Gram matrix `D^T D` of the difference operator on `columns` points.
pub fn penalty_matrix(regularizer: Regularizer, columns: usize) -> DMatrix<f64> {
    let stencil: &[f64] = match regularizer {
        Regularizer::FirstDifference => &[-1.0, 1.0],
        Regularizer::SecondDifference => &[1.0, -2.0, 1.0],
    };
    let mut p = DMatrix::zeros(columns, columns);
    if columns < stencil.len() {
        return p;
    }
    for start in 0..=columns - stencil.len() {
        for (a, &sa) in stencil.iter().enumerate() {
            for (b, &sb) in stencil.iter().enumerate() {
                p[(start + a, start + b)] += sa * sb;
            }
        }
    }
    p
}

/// Convex QP `min 1/2 x^T H x + c^T x + const` over per-column simplices.
///
/// Variables are stored as a `K x C` matrix (outcome by photon number).
#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    design: DMatrix<f64>,
    targets: DMatrix<f64>,
    weights: DMatrix<f64>,
    smoothing_weight: f64,
    regularizer: Regularizer,
    penalty: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
    linear: DMatrix<f64>,
    constant: f64,
}

impl QuadraticProgram {
    /// Assembles the QP from the design matrix `a` (`C x J`), the target
    /// frequencies (`K x J`) and per-residual weights (`K x J`).
    pub fn assemble(
        design: DMatrix<f64>,
        targets: DMatrix<f64>,
        weights: DMatrix<f64>,
        smoothing_weight: f64,
        regularizer: Regularizer,
    ) -> Result<Self> {
        let (columns, probes) = design.shape();
        let outcomes = targets.nrows();
        if columns == 0 || probes == 0 || outcomes == 0 {
            return Err(Error::Dimension("empty design or target matrix".into()));
        }
        if targets.ncols() != probes {
            return Err(Error::Dimension(format!(
                "design has {probes} probes but targets have {}",
                targets.ncols()
            )));
        }
        if weights.shape() != targets.shape() {
            return Err(Error::Dimension(
                "weights and targets differ in shape".into(),
            ));
        }
        if !(smoothing_weight >= 0.0) {
            return Err(Error::param("smoothing weight must be >= 0"));
        }
        let penalty = penalty_matrix(regularizer, columns);
        let mut blocks = Vec::with_capacity(outcomes);
        let mut linear = DMatrix::zeros(outcomes, columns);
        let mut constant = 0.0;
        for n in 0..outcomes {
            let w = weights.row(n).transpose();
            let xi = targets.row(n).transpose();
            let scaled = DMatrix::from_fn(columns, probes, |m, j| design[(m, j)] * w[j]);
            let gram = &scaled * design.transpose();
            let mut h = (gram + &penalty * smoothing_weight) * 2.0;
            // Exact symmetry regardless of rounding in the products.
            h = (&h + h.transpose()) * 0.5;
            blocks.push(h);
            let c = &scaled * &xi * -2.0;
            linear.row_mut(n).copy_from(&c.transpose());
            constant += w.component_mul(&xi).dot(&xi);
        }
        Ok(Self {
            design,
            targets,
            weights,
            smoothing_weight,
            regularizer,
            penalty,
            blocks,
            linear,
            constant,
        })
    }

    pub fn outcomes(&self) -> usize {
        self.blocks.len()
    }

    pub fn columns(&self) -> usize {
        self.design.nrows()
    }

    pub fn block(&self, n: usize) -> &DMatrix<f64> {
        &self.blocks[n]
    }

    pub fn smoothing_weight(&self) -> f64 {
        self.smoothing_weight
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Dense Hessian over variables ordered `n * C + m`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let c = self.columns();
        let k = self.outcomes();
        let mut h = DMatrix::zeros(k * c, k * c);
        for (n, b) in self.blocks.iter().enumerate() {
            h.view_mut((n * c, n * c), (c, c)).copy_from(b);
        }
        h
    }

    /// Linear term over variables ordered `n * C + m`.
    pub fn linear_term(&self) -> DVector<f64> {
        let c = self.columns();
        DVector::from_fn(self.outcomes() * c, |i, _| self.linear[(i / c, i % c)])
    }

    fn check_shape(&self, x: &DMatrix<f64>) {
        assert_eq!(
            x.shape(),
            (self.outcomes(), self.columns()),
            "variable shape"
        );
    }

    /// `H x + c`, shaped like `x`.
    pub fn gradient(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.check_shape(x);
        let mut g = self.linear.clone();
        for (n, b) in self.blocks.iter().enumerate() {
            let hx = b * x.row(n).transpose();
            for m in 0..self.columns() {
                g[(n, m)] += hx[m];
            }
        }
        g
    }

    /// Full objective, data term plus weighted penalty.
    pub fn objective(&self, x: &DMatrix<f64>) -> f64 {
        self.data_term(x) + self.smoothing_weight * self.penalty_term(x)
    }

    /// Weighted sum of squared residuals.
    pub fn data_term(&self, x: &DMatrix<f64>) -> f64 {
        let r = self.residuals(x);
        r.component_mul(&r).component_mul(&self.weights).sum()
    }

    /// Unweighted regulariser value `sum_n |D x_n|^2`.
    pub fn penalty_term(&self, x: &DMatrix<f64>) -> f64 {
        self.check_shape(x);
        (0..self.outcomes())
            .map(|n| {
                let row = x.row(n).transpose();
                row.dot(&(&self.penalty * &row))
            })
            .sum()
    }

    /// `sum_m a[m][j] x[n][m] - target[n][j]`.
    pub fn residuals(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.check_shape(x);
        x * &self.design - &self.targets
    }

    /// Largest entry of `x - P(x - grad f(x))`, `P` the projection onto the
    /// feasible set. Zero exactly at a minimiser.
    pub fn kkt_residual(&self, x: &DMatrix<f64>) -> f64 {
        let g = self.gradient(x);
        let k = self.outcomes();
        let mut worst: f64 = 0.0;
        let mut buf = vec![0.0; k];
        for m in 0..self.columns() {
            for n in 0..k {
                buf[n] = x[(n, m)] - g[(n, m)];
            }
            project_simplex(&mut buf);
            for n in 0..k {
                worst = worst.max((x[(n, m)] - buf[n]).abs());
            }
        }
        worst
    }
}

/// Assembles the tomography QP for measured outcome statistics.
pub fn build_objective(
    probe_matrix: &ProbeMatrix,
    stats: &OutcomeStats,
    config: &ReconstructionConfig,
) -> Result<QuadraticProgram> {
    config.validate()?;
    stats.validate()?;
    if let Some(m) = config.truncation {
        if m != probe_matrix.truncation() {
            return Err(Error::Dimension(format!(
                "probe matrix truncated at {} but configuration asks for {m}",
                probe_matrix.truncation()
            )));
        }
    }
    if stats.probes() != probe_matrix.probes() {
        return Err(Error::Dimension(format!(
            "{} probes in statistics, {} in probe matrix",
            stats.probes(),
            probe_matrix.probes()
        )));
    }
    for (j, (&a, &b)) in stats
        .mean_photons
        .iter()
        .zip(probe_matrix.means())
        .enumerate()
    {
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(Error::Dimension(format!(
                "probe {j}: statistics mean {a} differs from probe matrix mean {b}"
            )));
        }
    }
    let targets = stats.frequencies();
    let weights = match config.weighting {
        Weighting::Uniform => DMatrix::from_element(OUTCOMES, stats.probes(), 1.0),
        Weighting::InverseVariance => {
            let mut w = DMatrix::from_fn(OUTCOMES, stats.probes(), |n, j| {
                let pulses = stats.gated_pulses(j) as f64;
                let p = targets[(n, j)];
                pulses / (p * (1.0 - p)).max(1.0 / pulses)
            });
            let mean = w.mean();
            w /= mean;
            w
        }
    };
    QuadraticProgram::assemble(
        probe_matrix.coeffs().clone(),
        targets,
        weights,
        config.smoothing_weight,
        config.regularizer,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionResult {
    pub povm: PovmMatrix,
    pub objective_value: f64,
    /// `sum_m a[m][j] Xi[n][m] - xi[n][j]`, `5 x J`.
    pub residuals: DMatrix<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub smoothing_weight: f64,
    pub regularizer: Regularizer,
    /// Whether the final active-set refinement was accepted.
    pub polished: bool,
}

/// Solves the QP with a primal-dual interior-point method followed by an
/// equality-constrained solve on the detected active set.
pub fn solve(qp: &QuadraticProgram, config: &ReconstructionConfig) -> Result<ReconstructionResult> {
    config.validate()?;
    let outcome = InteriorPoint::new(qp).run(config.max_iterations);
    let mut x = outcome.x;
    let mut kkt = qp.kkt_residual(&x);
    let mut polished = false;
    // Refinement passes share the iteration budget with the interior point.
    let budget = config
        .max_iterations
        .saturating_sub(outcome.iterations)
        .min(MAX_POLISH_PASSES);
    let (candidate, passes) = polish(qp, &x, &outcome.z, budget);
    if let Some(candidate) = candidate {
        let cand_kkt = qp.kkt_residual(&candidate);
        if cand_kkt <= kkt {
            x = candidate;
            kkt = cand_kkt;
            polished = true;
        }
    }
    let result = ReconstructionResult {
        objective_value: qp.objective(&x),
        residuals: qp.residuals(&x),
        kkt_residual: kkt,
        iterations: outcome.iterations + passes,
        smoothing_weight: qp.smoothing_weight,
        regularizer: qp.regularizer,
        polished,
        povm: PovmMatrix::from_matrix_unchecked(x),
    };
    if kkt <= config.kkt_tolerance {
        Ok(result)
    } else {
        Err(Error::NotConverged {
            iterations: result.iterations,
            kkt_residual: kkt,
            best: Box::new(result),
        })
    }
}

/// Chooses the truncation, builds the probe matrix and solves.
pub fn reconstruct(
    stats: &OutcomeStats,
    config: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    config.validate()?;
    stats.validate()?;
    let probes = stats.probe_list();
    let truncation = match config.truncation {
        Some(m) => m,
        None => choose_truncation(&probes, config.tail_epsilon)?,
    };
    let matrix = build_probe_matrix(&probes, truncation)?;
    let qp = build_objective(&matrix, stats, config)?;
    solve(&qp, config)
}

/// `xi_r[n][j] = sum_m Xi[n][m] a[m][j]`.
pub fn predicted_response(povm: &PovmMatrix, probe_matrix: &ProbeMatrix) -> Result<DMatrix<f64>> {
    if povm.truncation() != probe_matrix.truncation() {
        return Err(Error::Dimension(format!(
            "POVM truncated at {} but probe matrix at {}",
            povm.truncation(),
            probe_matrix.truncation()
        )));
    }
    Ok(povm.values() * probe_matrix.coeffs())
}

/// Clamps to the nonnegative orthant and rescales every column to sum 1.
fn normalize_columns(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        col.apply(|v| *v = v.max(0.0));
        let s = col.sum();
        if s > 0.0 {
            col /= s;
        } else {
            col.fill(1.0 / col.len() as f64);
        }
    }
}

struct IpmOutcome {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    iterations: usize,
}

struct InteriorPoint<'a> {
    qp: &'a QuadraticProgram,
    outcomes: usize,
    columns: usize,
}

/// Factorised Newton system for one interior-point iteration.
struct NewtonSystem {
    block_inverses: Vec<DMatrix<f64>>,
    schur: Cholesky<f64, Dyn>,
}

struct Direction {
    dx: DMatrix<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
}

const IPM_TOLERANCE: f64 = 1e-14;
const MAX_POLISH_PASSES: usize = 50;
const BOUNDARY_FRACTION: f64 = 0.995;

impl<'a> InteriorPoint<'a> {
    fn new(qp: &'a QuadraticProgram) -> Self {
        Self {
            qp,
            outcomes: qp.outcomes(),
            columns: qp.columns(),
        }
    }

    fn scale(&self) -> f64 {
        let lin = self.qp.linear.amax();
        let hes = self.qp.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max);
        1.0 + lin.max(hes)
    }

    fn run(&self, max_iterations: usize) -> IpmOutcome {
        let (k, c) = (self.outcomes, self.columns);
        let total = (k * c) as f64;
        let scale = self.scale();
        let mut x = DMatrix::from_element(k, c, 1.0 / k as f64);
        let mut z = DMatrix::from_element(k, c, scale.sqrt());
        let mut y = DVector::zeros(c);
        let mut best = (f64::INFINITY, x.clone(), z.clone());
        let mut iterations = 0;

        while iterations < max_iterations {
            let grad = self.qp.gradient(&x);
            let r_dual = DMatrix::from_fn(k, c, |n, m| grad[(n, m)] - y[m] - z[(n, m)]);
            let r_primal = DVector::from_fn(c, |m, _| x.column(m).sum() - 1.0);
            let mu = x.dot(&z) / total;
            let merit = self.merit(&x, &y, &z, scale);
            if merit < best.0 {
                best = (merit, x.clone(), z.clone());
            }
            if merit < IPM_TOLERANCE {
                break;
            }
            iterations += 1;

            let Some(system) = self.factor(&x, &z) else {
                break;
            };
            let rc_aff = -x.component_mul(&z);
            let aff = self.direction(&system, &x, &z, &r_dual, &r_primal, &rc_aff);
            let alpha_aff = self
                .step_length(&x, &aff.dx)
                .min(self.step_length(&z, &aff.dz))
                .min(1.0);
            let mu_aff = (&x + &aff.dx * alpha_aff).dot(&(&z + &aff.dz * alpha_aff)) / total;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let rc = DMatrix::from_fn(k, c, |n, m| {
                -x[(n, m)] * z[(n, m)] - aff.dx[(n, m)] * aff.dz[(n, m)] + sigma * mu
            });
            let dir = self.direction(&system, &x, &z, &r_dual, &r_primal, &rc);
            let alpha = (BOUNDARY_FRACTION * self.step_length(&x, &dir.dx))
                .min(BOUNDARY_FRACTION * self.step_length(&z, &dir.dz))
                .min(1.0);
            if !(alpha > 1e-14) {
                break;
            }
            x += &dir.dx * alpha;
            y += &dir.dy * alpha;
            z += &dir.dz * alpha;
        }

        let final_merit = self.merit(&x, &y, &z, scale);
        let (mut x, z) = if final_merit > best.0 {
            (best.1, best.2)
        } else {
            (x, z)
        };
        normalize_columns(&mut x);
        IpmOutcome { x, z, iterations }
    }

    fn merit(&self, x: &DMatrix<f64>, y: &DVector<f64>, z: &DMatrix<f64>, scale: f64) -> f64 {
        let (k, c) = (self.outcomes, self.columns);
        let grad = self.qp.gradient(x);
        let r_dual: f64 = (0..k)
            .flat_map(|n| (0..c).map(move |m| (n, m)))
            .map(|(n, m)| (grad[(n, m)] - y[m] - z[(n, m)]).abs())
            .fold(0.0, f64::max);
        let r_primal: f64 = (0..c)
            .map(|m| (x.column(m).sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let mu = x.dot(z) / (k * c) as f64;
        (r_dual / scale).max(r_primal).max(mu / scale)
    }

    /// Largest `t` with `v + t dv >= 0`.
    fn step_length(&self, v: &DMatrix<f64>, dv: &DMatrix<f64>) -> f64 {
        v.iter()
            .zip(dv.iter())
            .filter(|(_, &d)| d < 0.0)
            .map(|(&a, &d)| -a / d)
            .fold(f64::INFINITY, f64::min)
    }

    fn factor(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<NewtonSystem> {
        let c = self.columns;
        let mut block_inverses = Vec::with_capacity(self.outcomes);
        for (n, h) in self.qp.blocks.iter().enumerate() {
            let mut kn = h.clone();
            for m in 0..c {
                kn[(m, m)] += z[(n, m)] / x[(n, m)];
            }
            block_inverses.push(cholesky_with_shift(kn)?.inverse());
        }
        let mut schur = DMatrix::zeros(c, c);
        for inv in &block_inverses {
            schur += inv;
        }
        let schur = cholesky_with_shift(schur)?;
        Some(NewtonSystem {
            block_inverses,
            schur,
        })
    }

    /// Solves the reduced Newton system for complementarity target `rc`.
    fn direction(
        &self,
        system: &NewtonSystem,
        x: &DMatrix<f64>,
        z: &DMatrix<f64>,
        r_dual: &DMatrix<f64>,
        r_primal: &DVector<f64>,
        rc: &DMatrix<f64>,
    ) -> Direction {
        let (k, c) = (self.outcomes, self.columns);
        let mut partial = Vec::with_capacity(k);
        let mut rhs_y = -r_primal;
        for n in 0..k {
            let g = DVector::from_fn(c, |m, _| -r_dual[(n, m)] + rc[(n, m)] / x[(n, m)]);
            let t = &system.block_inverses[n] * g;
            rhs_y -= &t;
            partial.push(t);
        }
        let dy = system.schur.solve(&rhs_y);
        let mut dx = DMatrix::zeros(k, c);
        for n in 0..k {
            let col = &partial[n] + &system.block_inverses[n] * &dy;
            dx.row_mut(n).copy_from(&col.transpose());
        }
        let dz = DMatrix::from_fn(k, c, |n, m| {
            (rc[(n, m)] - z[(n, m)] * dx[(n, m)]) / x[(n, m)]
        });
        Direction { dx, dy, dz }
    }
}

/// Cholesky factorisation, retrying with a small diagonal shift when the
/// matrix is numerically singular.
fn cholesky_with_shift(mut a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let base = a.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(ch) = Cholesky::new(a.clone()) {
            return Some(ch);
        }
        let next = if shift == 0.0 {
            base * 1e-14
        } else {
            shift * 100.0
        };
        for i in 0..a.nrows() {
            a[(i, i)] += next - shift;
        }
        shift = next;
    }
    None
}

/// Primal-dual active-set refinement started from the interior-point
/// iterate. Each pass solves the equality-constrained problem with the
/// active variables pinned at zero, then frees active variables with a
/// negative multiplier and pins free variables that went negative.
fn polish(
    qp: &QuadraticProgram,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    max_passes: usize,
) -> (Option<DMatrix<f64>>, usize) {
    let (k, c) = (qp.outcomes(), qp.columns());
    let mut active = DMatrix::from_fn(k, c, |n, m| x[(n, m)] <= z[(n, m)]);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let Some((sol, y)) = solve_on_face(qp, &active) else {
            break;
        };
        let grad = qp.gradient(&sol);
        let next = DMatrix::from_fn(k, c, |n, m| {
            if active[(n, m)] {
                grad[(n, m)] - y[m] > 0.0
            } else {
                sol[(n, m)] < 0.0
            }
        });
        let mut feasible = sol;
        normalize_columns(&mut feasible);
        let kkt = qp.kkt_residual(&feasible);
        if best.as_ref().is_none_or(|(b, _)| kkt < *b) {
            best = Some((kkt, feasible));
        }
        if next == active {
            break;
        }
        active = next;
    }
    (best.map(|(_, x)| x), passes)
}

/// Minimiser of the QP restricted to `x[active] = 0` and the column sums,
/// ignoring the remaining sign constraints. Returns the point and the
/// multipliers of the column-sum constraints.
fn solve_on_face(
    qp: &QuadraticProgram,
    active: &DMatrix<bool>,
) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let (k, c) = (qp.outcomes(), qp.columns());
    let free: Vec<Vec<usize>> = (0..k)
        .map(|n| (0..c).filter(|&m| !active[(n, m)]).collect())
        .collect();
    if (0..c).any(|m| free.iter().all(|f| !f.contains(&m))) {
        return None;
    }
    let mut inverses = Vec::with_capacity(k);
    let mut schur = DMatrix::zeros(c, c);
    let mut rhs = DVector::from_element(c, 1.0);
    for n in 0..k {
        let f = &free[n];
        if f.is_empty() {
            inverses.push(DMatrix::zeros(0, 0));
            continue;
        }
        let h = DMatrix::from_fn(f.len(), f.len(), |a, b| qp.blocks[n][(f[a], f[b])]);
        let inv = Cholesky::new(h)?.inverse();
        let lin = DVector::from_fn(f.len(), |a, _| qp.linear[(n, f[a])]);
        let t = &inv * lin;
        for a in 0..f.len() {
            rhs[f[a]] += t[a];
            for b in 0..f.len() {
                schur[(f[a], f[b])] += inv[(a, b)];
            }
        }
        inverses.push(inv);
    }
    let y = Cholesky::new(schur)?.solve(&rhs);
    let mut out = DMatrix::zeros(k, c);
    for n in 0..k {
        let f = &free[n];
        if f.is_empty() {
            continue;
        }
        let g = DVector::from_fn(f.len(), |a, _| y[f[a]] - qp.linear[(n, f[a])]);
        let sol = &inverses[n] * g;
        for a in 0..f.len() {
            out[(n, f[a])] = sol[a];
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((out, y))
}
