//! Parseval K-SVD: ADMM over a synthesis frame `psi`, an analysis frame
//! `phi` and sparse codes `X`, driving `psi phi^T = I` and `psi = phi`.
//!
//! Each outer iteration updates `phi`, then `psi` (both by Sylvester
//! solves), then the multipliers, then every row of `X` on its current
//! support, `x_sweeps` times.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::frames::Dictionary;
use crate::matrix::{
    ensure_finite, frobenius_sq, solve_sylvester, solve_sylvester_symmetric, Mat, SylvesterMethod,
};
use crate::sparse::ZERO_THRESHOLD;

/// Relative ridge added to `X X^T` before it is inverted.
pub const GRAM_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PkvConfig {
    /// Weight of the synthesis fit `||Y - psi X||^2`.
    pub rho1: f64,
    /// Penalty on `psi phi^T = I`.
    pub rho2: f64,
    /// Penalty on `psi = phi`.
    pub rho3: f64,
    pub max_iters: usize,
    /// Row sweeps over `X` per outer iteration.
    pub x_sweeps: usize,
    /// Sparsity budget used to initialize the codes.
    pub sparsity: usize,
    pub method: SylvesterMethod,
}

impl Default for PkvConfig {
    fn default() -> Self {
        Self {
            rho1: 0.1,
            rho2: 1e11,
            rho3: 1e11,
            max_iters: 200,
            x_sweeps: 20,
            sparsity: 64,
            method: SylvesterMethod::Schur,
        }
    }
}

impl PkvConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_iters == 0 || self.x_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "max_iters and x_sweeps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Lagrange multipliers of the two equality constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    /// `n x n`, for `psi phi^T = I`.
    pub lambda2: Mat,
    /// `n x m`, for `psi = phi`.
    pub lambda3: Mat,
    pub iter: usize,
}

impl AdmmState {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            lambda2: Mat::zeros(n, n),
            lambda3: Mat::zeros(n, m),
            iter: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `log10 ||psi phi^T - I||_F^2`
    pub log10_psiphit_minus_i: f64,
    /// `|log10 tr(psi phi^T) - log10 n|`
    pub log10_trace_gap: f64,
    /// `log10 ||psi - phi||_F^2`
    pub log10_psi_minus_phi: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub const CSV_HEADER: &'static str =
        "iter,log10_psiphit_minus_I,log10_trace_gap,log10_psi_minus_phi,objective";

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                r.iter,
                r.log10_psiphit_minus_i,
                r.log10_trace_gap,
                r.log10_psi_minus_phi,
                r.objective
            );
        }
        out
    }
}

pub fn trace_record(iter: usize, y: &Mat, x: &Mat, psi: &Mat, phi: &Mat, rho1: f64) -> TraceRecord {
    let n = psi.nrows();
    let prod = psi * phi.transpose();
    TraceRecord {
        iter,
        log10_psiphit_minus_i: frobenius_sq(&(&prod - Mat::identity(n, n))).log10(),
        log10_trace_gap: (prod.trace().log10() - (n as f64).log10()).abs(),
        log10_psi_minus_phi: frobenius_sq(&(psi - phi)).log10(),
        objective: objective(y, x, psi, phi, rho1),
    }
}

/// `||phi^T Y - phi^T psi X||_F^2 + rho1 ||Y - psi X||_F^2`
pub fn objective(y: &Mat, x: &Mat, psi: &Mat, phi: &Mat, rho1: f64) -> f64 {
    let r = y - psi * x;
    residual_objective(&r, phi, rho1)
}

fn residual_objective(r: &Mat, phi: &Mat, rho1: f64) -> f64 {
    frobenius_sq(&(phi.transpose() * r)) + rho1 * frobenius_sq(r)
}

fn constraint_terms(psi: &Mat, phi: &Mat, state: &AdmmState, cfg: &PkvConfig) -> f64 {
    let n = psi.nrows();
    let c2 = psi * phi.transpose() - Mat::identity(n, n);
    let c3 = psi - phi;
    state.lambda2.dot(&c2)
        + 0.5 * cfg.rho2 * frobenius_sq(&c2)
        + state.lambda3.dot(&c3)
        + 0.5 * cfg.rho3 * frobenius_sq(&c3)
}

/// The augmented Lagrangian: the objective plus multiplier and quadratic
/// penalty terms for both constraints.
pub fn augmented_lagrangian(
    y: &Mat,
    x: &Mat,
    psi: &Mat,
    phi: &Mat,
    state: &AdmmState,
    cfg: &PkvConfig,
) -> f64 {
    objective(y, x, psi, phi, cfg.rho1) + constraint_terms(psi, phi, state, cfg)
}

/// Coefficients of the `phi` stationarity equation `A phi + phi B = C`.
pub fn phi_system(
    y: &Mat,
    x: &Mat,
    psi: &Mat,
    state: &AdmmState,
    cfg: &PkvConfig,
) -> (Mat, Mat, Mat) {
    let m = psi.ncols();
    let r = y - psi * x;
    let a = (&r * r.transpose()) * 2.0;
    let b = psi.transpose() * psi * cfg.rho2 + Mat::identity(m, m) * cfg.rho3;
    let c = -(state.lambda2.transpose() * psi) + psi * (cfg.rho2 + cfg.rho3) + &state.lambda3;
    (a, b, c)
}

/// Pieces of the `psi` stationarity condition
/// `2 phi phi^T psi G + psi M = C` before any inversion: returns
/// `(2 phi phi^T, G, M, C)` with `G` the ridged `X X^T`.
fn psi_parts(
    y: &Mat,
    x: &Mat,
    phi: &Mat,
    state: &AdmmState,
    cfg: &PkvConfig,
) -> Result<(Mat, Mat, Mat, Mat)> {
    let m = phi.ncols();
    let gram = x * x.transpose();
    let tr = gram.trace();
    if !(tr > 0.0) {
        return Err(Error::SingularCoefficientGram);
    }
    let ridged = &gram + Mat::identity(m, m) * (GRAM_RIDGE * tr / m as f64);
    let phiphit = phi * phi.transpose();
    let yxt = y * x.transpose();
    let a = &phiphit * 2.0;
    let mm = &gram * (2.0 * cfg.rho1)
        + phi.transpose() * phi * cfg.rho2
        + Mat::identity(m, m) * cfg.rho3;
    let c = &yxt * (2.0 * cfg.rho1) - &state.lambda2 * phi + phi * (cfg.rho2 + cfg.rho3)
        - &state.lambda3
        + &phiphit * &yxt * 2.0;
    Ok((a, ridged, mm, c))
}

/// Coefficients of the `psi` stationarity equation `A psi + psi B = C`,
/// with both right-hand factors multiplied by the ridged `(X X^T)^{-1}`.
pub fn psi_system(
    y: &Mat,
    x: &Mat,
    phi: &Mat,
    state: &AdmmState,
    cfg: &PkvConfig,
) -> Result<(Mat, Mat, Mat)> {
    let (a, ridged, mm, c) = psi_parts(y, x, phi, state, cfg)?;
    let inv = ridged
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularCoefficientGram)?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCoefficientGram);
    }
    Ok((a, mm * &inv, c * &inv))
}

/// New analysis frame. The Schur route uses the symmetric structure of
/// the coefficients; the Kronecker route solves the vectorised system.
pub fn update_phi(y: &Mat, x: &Mat, psi: &Mat, state: &AdmmState, cfg: &PkvConfig) -> Result<Mat> {
    let (a, b, c) = phi_system(y, x, psi, state, cfg);
    match cfg.method {
        SylvesterMethod::Schur => {
            let eye = Mat::identity(b.nrows(), b.nrows());
            solve_sylvester_symmetric(&a, &eye, &b, &c)
        }
        SylvesterMethod::Kron => solve_sylvester(&a, &b, &c, cfg.method),
    }
}

/// New synthesis frame. The Schur route solves the undivided form
/// `A psi G + psi M = C`, which is equivalent to the divided one and avoids
/// forming the badly scaled product `M G^{-1}`.
pub fn update_psi(y: &Mat, x: &Mat, phi: &Mat, state: &AdmmState, cfg: &PkvConfig) -> Result<Mat> {
    match cfg.method {
        SylvesterMethod::Schur => {
            let (a, g, mm, c) = psi_parts(y, x, phi, state, cfg)?;
            solve_sylvester_symmetric(&a, &g, &mm, &c)
        }
        SylvesterMethod::Kron => {
            let (a, b, c) = psi_system(y, x, phi, state, cfg)?;
            solve_sylvester(&a, &b, &c, cfg.method)
        }
    }
}

/// Dual ascent on both multipliers.
pub fn update_duals(psi: &Mat, phi: &Mat, state: &mut AdmmState, cfg: &PkvConfig) {
    let n = psi.nrows();
    state.lambda2 += (psi * phi.transpose() - Mat::identity(n, n)) * cfg.rho2;
    state.lambda3 += (psi - phi) * cfg.rho3;
    state.iter += 1;
}

/// Selection matrix picking the nonzero positions of a code row: column
/// `c` of the result is the unit vector of the `c`-th nonzero entry.
pub fn row_support_selector(row: &[f64]) -> Mat {
    let supp: Vec<usize> = (0..row.len()).filter(|&i| row[i] != 0.0).collect();
    let mut g = Mat::zeros(row.len(), supp.len());
    for (c, &i) in supp.iter().enumerate() {
        g[(i, c)] = 1.0;
    }
    g
}

/// Row-by-row refit of the nonzero entries of `X`, `cfg.x_sweeps` passes.
/// Entries that land at or below the zero threshold become exact zeros and
/// are never revisited.
pub fn update_x(y: &Mat, x: &mut Mat, psi: &Mat, phi: &Mat, cfg: &PkvConfig) {
    update_x_observed(y, x, psi, phi, cfg, None);
}

type RowObserver<'a> = Option<&'a mut dyn FnMut(usize, usize, f64)>;

fn update_x_observed(
    y: &Mat,
    x: &mut Mat,
    psi: &Mat,
    phi: &Mat,
    cfg: &PkvConfig,
    mut observer: RowObserver<'_>,
) {
    let (n, m) = psi.shape();
    let count = y.ncols();
    let mut r = y - psi * &*x;
    let weight = Mat::identity(n, n) * cfg.rho1 + phi * phi.transpose();
    for sweep in 0..cfg.x_sweeps {
        for k in 0..m {
            let atom = psi.column(k);
            let w = &weight * atom;
            let denom = atom.dot(&w);
            if denom > 0.0 {
                for i in 0..count {
                    let old = x[(k, i)];
                    if old == 0.0 {
                        continue;
                    }
                    let mut new = w.dot(&r.column(i)) / denom + old;
                    if new.abs() <= ZERO_THRESHOLD {
                        new = 0.0;
                    }
                    if new != old {
                        r.column_mut(i).axpy(old - new, &atom, 1.0);
                        x[(k, i)] = new;
                    }
                }
            }
            if let Some(obs) = observer.as_mut() {
                obs(sweep, k, residual_objective(&r, phi, cfg.rho1));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Phi,
    Psi,
    Duals,
    XRow { sweep: usize, row: usize },
}

/// Objective and augmented Lagrangian right after one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub step: Step,
    pub objective: f64,
    pub lagrangian: f64,
}

#[derive(Debug, Clone)]
pub struct PkvOutput {
    pub psi: Dictionary,
    pub phi: Dictionary,
    /// `m x N` codes.
    pub codes: Mat,
    pub state: AdmmState,
    pub trace: ConvergenceTrace,
}

/// Failed run: the iteration that failed and the trace up to it.
#[derive(Debug, thiserror::Error)]
#[error("training aborted at iteration {iteration}: {source}")]
pub struct TrainingAborted {
    pub iteration: usize,
    pub trace: ConvergenceTrace,
    #[source]
    pub source: Error,
}

impl From<TrainingAborted> for Error {
    fn from(e: TrainingAborted) -> Self {
        Error::Training {
            iteration: e.iteration,
            source: Box::new(e.source),
        }
    }
}

pub fn pksvd_train(
    y: &Mat,
    cfg: &PkvConfig,
    init_psi: &Dictionary,
    init_codes: &Mat,
) -> std::result::Result<PkvOutput, TrainingAborted> {
    pksvd_train_observed(y, cfg, init_psi, init_codes, None)
}

/// As [`pksvd_train`], reporting the objective after every primal and dual
/// update to `observer`.
pub fn pksvd_train_observed(
    y: &Mat,
    cfg: &PkvConfig,
    init_psi: &Dictionary,
    init_codes: &Mat,
    mut observer: Option<&mut dyn FnMut(StepReport)>,
) -> std::result::Result<PkvOutput, TrainingAborted> {
    let mut trace = ConvergenceTrace::default();
    let abort = |iteration, trace: &ConvergenceTrace, source| TrainingAborted {
        iteration,
        trace: trace.clone(),
        source,
    };
    let checked = cfg
        .validate()
        .and_then(|_| ensure_finite(y))
        .and_then(|_| ensure_finite(init_codes))
        .and_then(|_| check_shapes(y, init_psi, init_codes));
    if let Err(e) = checked {
        return Err(abort(0, &trace, e));
    }

    let (n, m) = (init_psi.n(), init_psi.m());
    let mut psi = init_psi.mat().clone();
    let mut phi = psi.clone();
    let mut x = init_codes.clone();
    let mut state = AdmmState::zeros(n, m);

    for it in 1..=cfg.max_iters {
        let report = |observer: &mut Option<&mut dyn FnMut(StepReport)>,
                      step,
                      psi: &Mat,
                      phi: &Mat,
                      x: &Mat,
                      state: &AdmmState| {
            if let Some(obs) = observer.as_mut() {
                obs(StepReport {
                    iteration: it,
                    step,
                    objective: objective(y, x, psi, phi, cfg.rho1),
                    lagrangian: augmented_lagrangian(y, x, psi, phi, state, cfg),
                });
            }
        };

        phi = match update_phi(y, &x, &psi, &state, cfg) {
            Ok(v) => v,
            Err(e) => return Err(abort(it, &trace, e)),
        };
        report(&mut observer, Step::Phi, &psi, &phi, &x, &state);
        psi = match update_psi(y, &x, &phi, &state, cfg) {
            Ok(v) => v,
            Err(e) => return Err(abort(it, &trace, e)),
        };
        report(&mut observer, Step::Psi, &psi, &phi, &x, &state);
        update_duals(&psi, &phi, &mut state, cfg);
        report(&mut observer, Step::Duals, &psi, &phi, &x, &state);

        if let Some(obs) = observer.as_mut() {
            let penalty = constraint_terms(&psi, &phi, &state, cfg);
            let mut rows = |sweep, row, objective: f64| {
                obs(StepReport {
                    iteration: it,
                    step: Step::XRow { sweep, row },
                    objective,
                    lagrangian: objective + penalty,
                })
            };
            update_x_observed(y, &mut x, &psi, &phi, cfg, Some(&mut rows));
        } else {
            update_x(y, &mut x, &psi, &phi, cfg);
        }

        if let Err(e) = ensure_finite(&psi).and_then(|_| ensure_finite(&phi)) {
            return Err(abort(it, &trace, e));
        }
        trace
            .records
            .push(trace_record(it, y, &x, &psi, &phi, cfg.rho1));
    }

    let dicts = Dictionary::new(psi).and_then(|p| Dictionary::new(phi).map(|f| (p, f)));
    match dicts {
        Ok((psi, phi)) => Ok(PkvOutput {
            psi,
            phi,
            codes: x,
            state,
            trace,
        }),
        Err(e) => Err(abort(cfg.max_iters, &trace, e)),
    }
}

fn check_shapes(y: &Mat, psi: &Dictionary, x: &Mat) -> Result<()> {
    if y.nrows() != psi.n() || x.nrows() != psi.m() || x.ncols() != y.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "Y {}x{}, psi {}x{}, X {}x{}",
            y.nrows(),
            y.ncols(),
            psi.n(),
            psi.m(),
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}
