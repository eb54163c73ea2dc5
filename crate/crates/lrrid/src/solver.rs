//! Inexact augmented-Lagrangian solver for the joint low-rank + sparse
//! coding problem
//!
//! ```text
//! min ||X||_* + lambda*||E||_1 + beta*||X||_1 + gamma*||DᵀD - I||_F²
//! s.t. Y = D*X + E
//! ```
//!
//! The equality-constrained splitting introduces surrogates `J` and `L`
//! for the nuclear-norm and l1 terms on `X` (constraints `X = J`, `X = L`)
//! and multipliers `T1, T2, T3` with a growing penalty `mu`. One outer
//! iteration updates, in this order: `J`, `X`, `L`, `E`, `D`, the
//! multipliers, and `mu`. The dictionary update runs a few projected
//! gradient steps keeping every column inside the l2 unit ball.
//!
//! [`solve_lrrs`] is the fixed-dictionary special case (no incoherence
//! term, no dictionary update), useful when the dictionary is simply the
//! training columns themselves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::prox::{self, ColumnProjection};

/// Step-size policy for the projected-gradient dictionary update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DictStepPolicy {
    /// Always step with the given length.
    Fixed { eta: f64 },
    /// Start from a Lipschitz-motivated length, halve until the objective
    /// strictly decreases, give up after `max_trials` halvings.
    Backtracking { shrink: f64, max_trials: usize },
}

impl Default for DictStepPolicy {
    fn default() -> Self {
        DictStepPolicy::Backtracking {
            shrink: 0.5,
            max_trials: 20,
        }
    }
}

/// Solver hyperparameters. Defaults follow the standard inexact-ALM
/// schedule (`mu0 = 1e-5`, `mu_max = 1e8`, `rho = 1.1`, `eps = 1e-6`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Weight of the sparse-error term `||E||_1`.
    pub lambda: f64,
    /// Weight of the code-sparsity term `||X||_1`.
    pub beta: f64,
    /// Weight of the dictionary-incoherence term `||DᵀD - I||_F²`.
    pub gamma: f64,
    /// Initial penalty.
    pub mu0: f64,
    /// Penalty cap.
    pub mu_max: f64,
    /// Penalty growth factor (> 1).
    pub rho: f64,
    /// Stopping tolerance on the three entrywise-max residuals.
    pub eps_conv: f64,
    /// Outer-iteration cap; hitting it reports `converged = false`.
    pub max_outer_iters: usize,
    /// Projected-gradient steps per dictionary update (0 skips the update).
    pub dict_inner_steps: usize,
    pub dict_step_policy: DictStepPolicy,
    /// Set onto which dictionary columns are projected.
    pub dict_projection: ColumnProjection,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 0.1,
            beta: 0.1,
            gamma: 1e-4,
            mu0: 1e-5,
            mu_max: 1e8,
            rho: 1.1,
            eps_conv: 1e-6,
            max_outer_iters: 500,
            dict_inner_steps: 10,
            dict_step_policy: DictStepPolicy::default(),
            dict_projection: ColumnProjection::UnitBall,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::argument("lambda must be positive"));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::argument("beta must be positive"));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::argument("gamma must be non-negative"));
        }
        if self.rho.is_nan() || self.rho <= 1.0 {
            return Err(Error::argument("rho must exceed 1"));
        }
        if self.mu0.is_nan() || self.mu_max.is_nan() || self.mu0 <= 0.0 || self.mu0 >= self.mu_max {
            return Err(Error::argument("need 0 < mu0 < mu_max"));
        }
        if self.eps_conv.is_nan() || self.eps_conv <= 0.0 {
            return Err(Error::argument("eps_conv must be positive"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::argument("max_outer_iters must be at least 1"));
        }
        match self.dict_step_policy {
            DictStepPolicy::Fixed { eta } => {
                if eta.is_nan() || eta <= 0.0 {
                    return Err(Error::argument("fixed dictionary step must be positive"));
                }
            }
            DictStepPolicy::Backtracking { shrink, max_trials } => {
                if shrink.is_nan() || shrink <= 0.0 || shrink >= 1.0 {
                    return Err(Error::argument("backtracking shrink must be in (0, 1)"));
                }
                if max_trials == 0 {
                    return Err(Error::argument("backtracking needs at least one trial"));
                }
            }
        }
        Ok(())
    }
}

/// All iterates of the alternating scheme.
///
/// Shapes for data `Y` of size `d x n` over `m` atoms: `X`, `J`, `L`,
/// `T2`, `T3` are `m x n`; `E`, `T1` are `d x n`; `D` is `d x m`.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Mat,
    pub j: Mat,
    pub l: Mat,
    pub e: Mat,
    pub d: Mat,
    pub t1: Mat,
    pub t2: Mat,
    pub t3: Mat,
    pub mu: f64,
    pub iter: usize,
}

impl SolverState {
    /// Zero-initialized state: `X = J = L = E = T1 = T2 = T3 = 0`,
    /// `mu = mu0`, dictionary as given.
    pub fn init(y: &Mat, d_init: Mat, mu0: f64) -> Result<Self> {
        let (d_rows, n) = (y.nrows(), y.ncols());
        if d_init.nrows() != d_rows {
            return Err(Error::argument(format!(
                "dictionary has {} rows but data has {}",
                d_init.nrows(),
                d_rows
            )));
        }
        let m = d_init.ncols();
        Ok(SolverState {
            x: Mat::zeros(m, n),
            j: Mat::zeros(m, n),
            l: Mat::zeros(m, n),
            e: Mat::zeros(d_rows, n),
            d: d_init,
            t1: Mat::zeros(d_rows, n),
            t2: Mat::zeros(m, n),
            t3: Mat::zeros(m, n),
            mu: mu0,
            iter: 0,
        })
    }
}

/// One row of the per-iteration history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Penalty value used during this iteration (before growth).
    pub mu: f64,
    /// `max|Y - D*X - E|`
    pub res_feasibility: f64,
    /// `max|X - J|`
    pub res_code_lowrank: f64,
    /// `max|X - L|`
    pub res_code_sparse: f64,
    /// Value of the unconstrained objective at the current iterates.
    pub objective: f64,
    /// True when the dictionary line search could not find a decreasing step.
    pub dict_stalled: bool,
}

/// Final iterates with the code matrix split at the train/test boundary.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Code columns for the first `n_train` data columns.
    pub x_train: Mat,
    /// Code columns for the remaining data columns.
    pub x_test: Mat,
    pub d: Mat,
    pub e: Mat,
    pub converged: bool,
    pub iters_used: usize,
    pub residual_history: Vec<IterationRecord>,
}

/// Nuclear-norm surrogate update: shrink the singular values of
/// `X + T2/mu` by `1/mu`.
pub fn update_j(state: &SolverState) -> Result<Mat> {
    let shifted = &state.x + &state.t2 / state.mu;
    prox::singular_value_threshold(&shifted, 1.0 / state.mu)
}

/// Closed-form code update: solves the normal equations
/// `(DᵀD + 2I) X = Dᵀ(Y - E) + J + L + (DᵀT1 - T2 - T3)/mu`.
///
/// Reads the refreshed `J` and the previous `L`, `E`, `D` from `state`.
pub fn update_x(state: &SolverState, y: &Mat) -> Result<Mat> {
    let m = state.d.ncols();
    let lhs = state.d.transpose() * &state.d + Mat::identity(m, m) * 2.0;
    let rhs = state.d.transpose() * (y - &state.e)
        + &state.j
        + &state.l
        + (state.d.transpose() * &state.t1 - &state.t2 - &state.t3) / state.mu;
    linalg::solve_spd(&lhs, &rhs)
}

/// Sparse-code surrogate update: `L = shrink(X + T3/mu, beta/mu)`.
/// Reads the refreshed `X` from `state`.
pub fn update_l(state: &SolverState, beta: f64) -> Result<Mat> {
    let shifted = &state.x + &state.t3 / state.mu;
    prox::soft_threshold(&shifted, beta / state.mu)
}

/// Sparse-error update: `E = shrink(Y - D*X + T1/mu, lambda/mu)`.
/// Reads the refreshed `X` and the not-yet-updated `D` from `state`.
pub fn update_e(state: &SolverState, y: &Mat, lambda: f64) -> Result<Mat> {
    let shifted = y - &state.d * &state.x + &state.t1 / state.mu;
    prox::soft_threshold(&shifted, lambda / state.mu)
}

/// Dictionary subproblem objective
/// `gamma*||DᵀD - I||_F² + <T1, Y - D*X - E> + (mu/2)*||Y - D*X - E||_F²`
/// evaluated with the refreshed `X` and `E` held in `state`.
pub fn dict_objective(d: &Mat, state: &SolverState, y: &Mat, gamma: f64) -> f64 {
    let m = d.ncols();
    let gram_shift = d.transpose() * d - Mat::identity(m, m);
    let resid = y - d * &state.x - &state.e;
    gamma * gram_shift.norm_squared() + state.t1.dot(&resid)
        + 0.5 * state.mu * resid.norm_squared()
}

/// Gradient of [`dict_objective`] with respect to the dictionary:
/// `4*gamma*(DDᵀD - D) - T1*Xᵀ + mu*(D*X*Xᵀ + E*Xᵀ - Y*Xᵀ)`.
pub fn dict_gradient(d: &Mat, state: &SolverState, y: &Mat, gamma: f64) -> Mat {
    let xt = state.x.transpose();
    let gram = d.transpose() * d;
    let incoherence = (d * gram - d) * (4.0 * gamma);
    incoherence - &state.t1 * &xt
        + (d * (&state.x * &xt) + &state.e * &xt - y * &xt) * state.mu
}

/// Outcome of one dictionary update.
#[derive(Debug, Clone)]
pub struct DictUpdate {
    pub d: Mat,
    /// True when backtracking exhausted its trials; the returned iterate
    /// is the last accepted one.
    pub stalled: bool,
    /// Accepted projected-gradient steps.
    pub steps_taken: usize,
}

/// Projected-gradient dictionary update: `dict_inner_steps` iterations of
/// `D <- project(D - eta * grad)`. Under the backtracking policy every
/// accepted step strictly decreases [`dict_objective`]; under a fixed step
/// the move is applied unconditionally.
pub fn update_d(state: &SolverState, y: &Mat, params: &Hyperparams) -> Result<DictUpdate> {
    if params.dict_inner_steps < 1 {
        return Err(Error::argument("update_d needs dict_inner_steps >= 1"));
    }
    let gamma = params.gamma;
    let mut d_cur = state.d.clone();
    let mut stalled = false;
    let mut steps_taken = 0;

    // Inverse-curvature scale for the initial backtracking step: the
    // smooth part has Hessian bounded by mu*||XXᵀ||_2 + 8*gamma*||D||_2²
    // near the current iterate.
    let eta0 = match params.dict_step_policy {
        DictStepPolicy::Fixed { eta } => eta,
        DictStepPolicy::Backtracking { .. } => {
            let x_sq = linalg::spectral_norm_est(&state.x).powi(2);
            let d_sq = linalg::spectral_norm_est(&state.d).powi(2);
            1.0 / (state.mu * x_sq + 8.0 * gamma * d_sq + 1e-12)
        }
    };

    for _ in 0..params.dict_inner_steps {
        let grad = dict_gradient(&d_cur, state, y, gamma);
        match params.dict_step_policy {
            DictStepPolicy::Fixed { eta } => {
                d_cur = prox::project_columns(&(&d_cur - grad * eta), params.dict_projection);
                steps_taken += 1;
            }
            DictStepPolicy::Backtracking { shrink, max_trials } => {
                let f_cur = dict_objective(&d_cur, state, y, gamma);
                let mut eta = eta0;
                let mut accepted = false;
                for _ in 0..max_trials {
                    let cand =
                        prox::project_columns(&(&d_cur - &grad * eta), params.dict_projection);
                    if dict_objective(&cand, state, y, gamma) < f_cur {
                        d_cur = cand;
                        accepted = true;
                        steps_taken += 1;
                        break;
                    }
                    eta *= shrink;
                }
                if !accepted {
                    stalled = true;
                    break;
                }
            }
        }
    }
    Ok(DictUpdate {
        d: d_cur,
        stalled,
        steps_taken,
    })
}

/// Dual ascent on all three multipliers followed by penalty growth:
/// `T1 += mu*(Y - D*X - E)`, `T2 += mu*(X - J)`, `T3 += mu*(X - L)`,
/// `mu <- min(rho*mu, mu_max)`.
pub fn update_multipliers_and_mu(state: &mut SolverState, y: &Mat, rho: f64, mu_max: f64) {
    let mu = state.mu;
    let feas = y - &state.d * &state.x - &state.e;
    state.t1 += feas * mu;
    state.t2 += (&state.x - &state.j) * mu;
    state.t3 += (&state.x - &state.l) * mu;
    state.mu = (rho * mu).min(mu_max);
}

/// True when all three residuals are strictly below `eps_conv` in
/// entrywise max-absolute-value norm.
pub fn check_convergence(state: &SolverState, y: &Mat, eps_conv: f64) -> bool {
    let r1 = linalg::inf_norm(&(y - &state.d * &state.x - &state.e));
    if r1 >= eps_conv {
        return false;
    }
    let r2 = linalg::inf_norm(&(&state.x - &state.j));
    if r2 >= eps_conv {
        return false;
    }
    let r3 = linalg::inf_norm(&(&state.x - &state.l));
    r3 < eps_conv
}

/// Full solve with dictionary learning.
///
/// `Y` stacks train columns first (`n_train` of them), then test columns.
/// Stops when all three residuals fall below `eps_conv` or after
/// `max_outer_iters` iterations (reported via `converged`, not an error).
pub fn solve_lrrid(y: &Mat, n_train: usize, d_init: Mat, params: &Hyperparams) -> Result<SolveResult> {
    run_alm(y, n_train, d_init, params, true, None)
}

/// [`solve_lrrid`] with a per-iteration CSV trace written to `sink`.
pub fn solve_lrrid_traced(
    y: &Mat,
    n_train: usize,
    d_init: Mat,
    params: &Hyperparams,
    sink: &mut dyn Write,
) -> Result<SolveResult> {
    run_alm(y, n_train, d_init, params, true, Some(sink))
}

/// Fixed-dictionary special case: the same loop with the dictionary
/// update skipped; the result's `D` equals `d_fixed`.
pub fn solve_lrrs(y: &Mat, n_train: usize, d_fixed: Mat, params: &Hyperparams) -> Result<SolveResult> {
    run_alm(y, n_train, d_fixed, params, false, None)
}

/// [`solve_lrrs`] with a per-iteration CSV trace written to `sink`.
pub fn solve_lrrs_traced(
    y: &Mat,
    n_train: usize,
    d_fixed: Mat,
    params: &Hyperparams,
    sink: &mut dyn Write,
) -> Result<SolveResult> {
    run_alm(y, n_train, d_fixed, params, false, Some(sink))
}

fn check_finite(m: &Mat, update: &str) -> Result<()> {
    if linalg::is_finite(m) {
        Ok(())
    } else {
        Err(Error::numerical(update, "produced a non-finite entry"))
    }
}

fn run_alm(
    y: &Mat,
    n_train: usize,
    d_init: Mat,
    params: &Hyperparams,
    update_dict: bool,
    mut sink: Option<&mut dyn Write>,
) -> Result<SolveResult> {
    params.validate()?;
    if n_train > y.ncols() {
        return Err(Error::argument(format!(
            "n_train = {} exceeds the {} data columns",
            n_train,
            y.ncols()
        )));
    }
    if !linalg::is_finite(y) {
        return Err(Error::argument("data matrix has non-finite entries"));
    }
    let mut state = SolverState::init(y, d_init, params.mu0)?;
    let mut history = Vec::new();
    let mut converged = false;

    if let Some(w) = sink.as_deref_mut() {
        writeln!(w, "iter,mu,res_feasibility,res_code_lowrank,res_code_sparse,objective")?;
    }

    for k in 1..=params.max_outer_iters {
        let mu_used = state.mu;

        state.j = update_j(&state)?;
        check_finite(&state.j, "update_j")?;

        state.x = update_x(&state, y)?;
        check_finite(&state.x, "update_x")?;

        state.l = update_l(&state, params.beta)?;
        check_finite(&state.l, "update_l")?;

        state.e = update_e(&state, y, params.lambda)?;
        check_finite(&state.e, "update_e")?;

        let mut dict_stalled = false;
        if update_dict && params.dict_inner_steps > 0 {
            let upd = update_d(&state, y, params)?;
            check_finite(&upd.d, "update_d")?;
            state.d = upd.d;
            dict_stalled = upd.stalled;
        }

        update_multipliers_and_mu(&mut state, y, params.rho, params.mu_max);
        state.iter = k;

        let record = IterationRecord {
            iter: k,
            mu: mu_used,
            res_feasibility: linalg::inf_norm(&(y - &state.d * &state.x - &state.e)),
            res_code_lowrank: linalg::inf_norm(&(&state.x - &state.j)),
            res_code_sparse: linalg::inf_norm(&(&state.x - &state.l)),
            objective: objective_value(&state, params)?,
            dict_stalled,
        };
        if let Some(w) = sink.as_deref_mut() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                record.iter,
                record.mu,
                record.res_feasibility,
                record.res_code_lowrank,
                record.res_code_sparse,
                record.objective
            )?;
        }
        history.push(record);

        if check_convergence(&state, y, params.eps_conv) {
            converged = true;
            break;
        }
    }

    let iters_used = state.iter;
    let n_test = y.ncols() - n_train;
    Ok(SolveResult {
        x_train: state.x.columns(0, n_train).into_owned(),
        x_test: state.x.columns(n_train, n_test).into_owned(),
        d: state.d,
        e: state.e,
        converged,
        iters_used,
        residual_history: history,
    })
}

/// Value of the unconstrained objective
/// `||X||_* + lambda*||E||_1 + beta*||X||_1 + gamma*||DᵀD - I||_F²`
/// at the current iterates (diagnostic; the solve itself never uses it).
pub fn objective_value(state: &SolverState, params: &Hyperparams) -> Result<f64> {
    let m = state.d.ncols();
    let gram_shift = state.d.transpose() * &state.d - Mat::identity(m, m);
    Ok(linalg::nuclear_norm(&state.x)?
        + params.lambda * linalg::l1_norm(&state.e)
        + params.beta * linalg::l1_norm(&state.x)
        + params.gamma * gram_shift.norm_squared())
}
