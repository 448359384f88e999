//! Maximum-likelihood fitting of the bettors' models.
//!
//! Parameters are optimised on an unconstrained working scale:
//! `atanh φ`, `ln σ_s`, `β`, `ln γ` and an additive-logistic pair for the
//! inflation probabilities `(π, λ)`. The optimiser is a plain BFGS on
//! `−loglik` with central finite-difference gradients; standard errors come
//! from a finite-difference Hessian on the same scale.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::beinf::Response;
use crate::linreg::{ols_fit, Z_95};
use crate::panel::Covariate;
use crate::ssm::{self, Grid, SsmData, SsmParams, StateParams};
use crate::{Error, Result};

/// Covariate sets of the bettors' models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BettorsSpec {
    /// Basic covariates without a latent state.
    Noss,
    Basic,
    Final,
    Full,
}

impl BettorsSpec {
    pub const ALL: [BettorsSpec; 4] = [Self::Noss, Self::Basic, Self::Final, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::Noss => "noss",
            Self::Basic => "basic",
            Self::Final => "final",
            Self::Full => "full",
        }
    }

    pub fn has_state(self) -> bool {
        self != Self::Noss
    }

    pub fn covariates(self) -> Vec<Covariate> {
        use Covariate::*;
        match self {
            Self::Noss | Self::Basic => vec![
                Constant,
                ImprobPre,
                Minute,
                MinuteSquared,
                ImprobPreMinute,
                RedCardTeam,
                RedCardOpp,
                XgdiffPerMinute,
                InvMintogoal,
            ],
            Self::Final => vec![
                Constant,
                ImprobPre,
                Minute,
                RedCardTeam,
                RedCardOpp,
                Home,
                VolumeDiff,
                XgdiffPerMinute,
                InvMintogoal,
            ],
            Self::Full => vec![
                Constant,
                ImprobPre,
                Minute,
                MinuteSquared,
                ImprobPreMinute,
                RedCardTeam,
                RedCardOpp,
                Home,
                VolumeDiff,
                XgdiffPerMinute,
                InvMintogoal,
            ],
        }
    }
}

impl fmt::Display for BettorsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BettorsSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown bettors spec '{s}' (noss|basic|final|full)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iter: usize,
    /// Relative change of the objective between iterations.
    pub rel_tol: f64,
    /// Max-norm of the gradient of the log-likelihood.
    pub grad_tol: f64,
    /// Central-difference step for gradients (working scale).
    pub gradient_step: f64,
    /// Central-difference step for the Hessian (working scale).
    pub hessian_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            grad_tol: 1e-4,
            gradient_step: 1e-5,
            hessian_step: 1e-4,
        }
    }
}

/// Natural-scale starting values; `beta = None` requests a warm start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartValues {
    pub phi: f64,
    pub sigma_s: f64,
    pub gamma: f64,
    pub pi: f64,
    pub lambda: f64,
    pub beta: Option<Vec<f64>>,
}

impl Default for StartValues {
    fn default() -> Self {
        Self {
            phi: 0.9,
            sigma_s: 0.2,
            gamma: 10.0,
            pi: 0.001,
            lambda: 0.001,
            beta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FitOptions {
    pub grid: Grid,
    pub optimizer: OptimizerOptions,
    pub start: StartValues,
    /// Skip the covariance/CI step (used by simulation studies that only
    /// need point estimates).
    pub skip_covariance: bool,
}

/// Which parameters are free and how they map to the working vector.
///
/// Working order: `[atanh φ, ln σ_s]` (state models only), `β`, `ln γ`,
/// then the inflation coordinates. If the data hold no exact zeros (ones),
/// `π` (`λ`) sits on its boundary estimate 0 and is not estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub has_state: bool,
    pub beta_names: Vec<String>,
    pub free_pi: bool,
    pub free_lambda: bool,
}

/// Natural-scale parameters; `state` is `None` for the no-state model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub state: Option<StateParams>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub pi: f64,
    pub lambda: f64,
}

impl NaturalParams {
    pub fn to_ssm(&self) -> Option<SsmParams> {
        self.state.map(|state| SsmParams {
            state,
            beta: self.beta.clone(),
            gamma: self.gamma,
            pi: self.pi,
            lambda: self.lambda,
        })
    }
}

impl ParamLayout {
    pub fn new(has_state: bool, covariates: &[Covariate], zeros: usize, ones: usize) -> Self {
        Self {
            has_state,
            beta_names: covariates.iter().map(|c| c.name().to_string()).collect(),
            free_pi: zeros > 0,
            free_lambda: ones > 0,
        }
    }

    fn n_state(&self) -> usize {
        if self.has_state {
            2
        } else {
            0
        }
    }

    fn n_inflation(&self) -> usize {
        self.free_pi as usize + self.free_lambda as usize
    }

    /// Number of leading coordinates the state/beta/γ part depends on.
    fn n_core(&self) -> usize {
        self.n_state() + self.beta_names.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.n_core() + self.n_inflation()
    }

    pub fn working_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        if self.has_state {
            names.push("atanh(phi)".into());
            names.push("ln(sigma_s)".into());
        }
        names.extend(self.beta_names.iter().map(|b| format!("beta[{b}]")));
        names.push("ln(gamma)".into());
        if self.free_pi {
            names.push("alr(pi)".into());
        }
        if self.free_lambda {
            names.push("alr(lambda)".into());
        }
        names
    }

    pub fn to_working(&self, p: &NaturalParams) -> Result<Vec<f64>> {
        if p.beta.len() != self.beta_names.len() {
            return Err(Error::Config(format!(
                "{} start coefficients for {} covariates",
                p.beta.len(),
                self.beta_names.len()
            )));
        }
        let mut w = Vec::with_capacity(self.dim());
        if self.has_state {
            let s = p
                .state
                .ok_or_else(|| Error::Config("state parameters required".into()))?;
            s.validate()?;
            w.push(s.phi.atanh());
            w.push(s.sigma_s.ln());
        }
        w.extend_from_slice(&p.beta);
        if !(p.gamma > 0.0) {
            return Err(Error::Domain(format!(
                "gamma must be positive, got {}",
                p.gamma
            )));
        }
        w.push(p.gamma.ln());
        let rest =
            1.0 - self.free_pi as u8 as f64 * p.pi - self.free_lambda as u8 as f64 * p.lambda;
        for (free, v) in [(self.free_pi, p.pi), (self.free_lambda, p.lambda)] {
            if free {
                if !(v > 0.0 && rest > 0.0) {
                    return Err(Error::Domain(format!(
                        "inflation start values must be interior, got pi={}, lambda={}",
                        p.pi, p.lambda
                    )));
                }
                w.push((v / rest).ln());
            }
        }
        Ok(w)
    }

    pub fn from_working(&self, w: &[f64]) -> NaturalParams {
        let mut i = 0;
        let state = if self.has_state {
            i = 2;
            Some(StateParams {
                phi: w[0].tanh(),
                sigma_s: w[1].exp(),
            })
        } else {
            None
        };
        let k = self.beta_names.len();
        let beta = w[i..i + k].to_vec();
        i += k;
        let gamma = w[i].exp();
        i += 1;
        let (pi, lambda) = self.inflation(&w[i..]);
        NaturalParams {
            state,
            beta,
            gamma,
            pi,
            lambda,
        }
    }

    /// Additive-logistic inverse on the free inflation coordinates.
    fn inflation(&self, u: &[f64]) -> (f64, f64) {
        let mut it = u.iter();
        let up = if self.free_pi {
            it.next().copied()
        } else {
            None
        };
        let ul = if self.free_lambda {
            it.next().copied()
        } else {
            None
        };
        // Normalise with the largest exponent factored out.
        let top = [
            0.0,
            up.unwrap_or(f64::NEG_INFINITY),
            ul.unwrap_or(f64::NEG_INFINITY),
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
        let e0 = (-top).exp();
        let ep = up.map_or(0.0, |u| (u - top).exp());
        let el = ul.map_or(0.0, |u| (u - top).exp());
        let z = e0 + ep + el;
        (ep / z, el / z)
    }
}

/// One optimiser iteration, for the optional trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loglik: f64,
    pub grad_max_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    /// Minimised objective value.
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
    pub trace: Vec<TraceRow>,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step;
            let up = f(&probe);
            probe[k] = x[k] - step;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Central-difference gradient together with the diagonal second
/// differences the same evaluations provide; `fx` is `f(x)`.
fn fd_gradient_curvature(
    f: &mut impl FnMut(&[f64]) -> f64,
    x: &[f64],
    fx: f64,
    step: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step;
            let up = f(&probe);
            probe[k] = x[k] - step;
            let down = f(&probe);
            probe[k] = x[k];
            (
                (up - down) / (2.0 * step),
                (up - 2.0 * fx + down) / (step * step),
            )
        })
        .unzip()
}

/// Inverse-Hessian seed from diagonal curvature; coordinates without
/// usable positive curvature fall back to unit scale.
fn diagonal_seed(curvature: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        curvature.len(),
        curvature.iter().map(|&c| {
            if c.is_finite() && c > 1e-8 {
                1.0 / c
            } else {
                1.0
            }
        }),
    ))
}

/// Central finite-difference Hessian from function values.
pub fn fd_hessian(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut h = DMatrix::zeros(n, n);
    let mut p = x.to_vec();
    for j in 0..n {
        p[j] = x[j] + step;
        let up = f(&p);
        p[j] = x[j] - step;
        let down = f(&p);
        p[j] = x[j];
        h[(j, j)] = (up - 2.0 * f0 + down) / (step * step);
        for k in 0..j {
            let mut corner = |sj: f64, sk: f64, p: &mut Vec<f64>| {
                p[j] = x[j] + sj * step;
                p[k] = x[k] + sk * step;
                let v = f(p);
                p[j] = x[j];
                p[k] = x[k];
                v
            };
            let v =
                corner(1.0, 1.0, &mut p) - corner(1.0, -1.0, &mut p) - corner(-1.0, 1.0, &mut p)
                    + corner(-1.0, -1.0, &mut p);
            h[(j, k)] = v / (4.0 * step * step);
            h[(k, j)] = h[(j, k)];
        }
    }
    h
}

/// BFGS minimisation of `f` with finite-difference gradients and a
/// backtracking Armijo line search. The inverse-Hessian approximation starts
/// from (and resets to) the diagonal curvature of the latest gradient
/// evaluation. Non-finite values count as `+∞`.
pub fn bfgs_minimize(
    f: &mut impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &OptimizerOptions,
) -> OptimOutcome {
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut x = x0.to_vec();
    let mut fx = eval(&x);
    let mut trace = Vec::new();
    let finish = |x, value, gradient, iterations, converged, message: &str, trace| OptimOutcome {
        x,
        value,
        gradient,
        iterations,
        converged,
        message: message.to_string(),
        trace,
    };
    if !fx.is_finite() {
        return finish(
            x,
            fx,
            vec![f64::NAN; n],
            0,
            false,
            "objective not finite at start",
            trace,
        );
    }
    let (mut g, mut curvature) = fd_gradient_curvature(&mut eval, &x, fx, opts.gradient_step);
    trace.push(TraceRow {
        iteration: 0,
        loglik: -fx,
        grad_max_norm: max_norm(&g),
    });
    let mut h = diagonal_seed(&curvature);
    let mut fresh = true;
    for iter in 1..=opts.max_iter {
        let gv = DVector::from_column_slice(&g);
        let mut dir = -(&h * &gv);
        let mut slope = dir.dot(&gv);
        if !(slope < 0.0) {
            h = diagonal_seed(&curvature);
            fresh = true;
            dir = -(&h * &gv);
            slope = dir.dot(&gv);
        }
        // Cap the first trial step so a poorly scaled seed cannot jump far.
        let dmax = max_norm(dir.as_slice());
        let alpha0 = if dmax > 1.0 { 1.0 / dmax } else { 1.0 };
        let step_to = |alpha: f64| -> Vec<f64> {
            x.iter()
                .zip(dir.iter())
                .map(|(a, d)| a + alpha * d)
                .collect()
        };
        // Objective differences this small are rounding noise.
        let noise = 1e-13 * fx.abs().max(1.0);
        let mut alpha = alpha0;
        let mut accepted = None;
        while alpha * dmax > 1e-10 {
            let trial = step_to(alpha);
            let ft = eval(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft, None));
                break;
            }
            if ft.is_finite() && (ft - fx).abs() <= noise {
                break;
            }
            alpha *= 0.5;
        }
        if accepted.is_none() {
            // Function values can no longer rank the points; accept the full
            // step when it stays within the noise and reduces the gradient.
            let trial = step_to(alpha0);
            let ft = eval(&trial);
            if ft.is_finite() && ft <= fx + noise {
                let (gt, ct) = fd_gradient_curvature(&mut eval, &trial, ft, opts.gradient_step);
                if max_norm(&gt) < max_norm(&g) {
                    accepted = Some((trial, ft, Some((gt, ct))));
                }
            }
        }
        let Some((x_new, f_new, known)) = accepted else {
            if !fresh {
                h = diagonal_seed(&curvature);
                fresh = true;
                continue;
            }
            let gn = max_norm(&g);
            let ok = gn < opts.grad_tol;
            let msg = if ok {
                "converged (no further descent possible)"
            } else {
                "line search failed"
            };
            return finish(x, fx, g, iter, ok, msg, trace);
        };
        let (g_new, c_new) = known
            .unwrap_or_else(|| fd_gradient_curvature(&mut eval, &x_new, f_new, opts.gradient_step));
        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            fresh = false;
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded.
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let rel = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        curvature = c_new;
        let gn = max_norm(&g);
        trace.push(TraceRow {
            iteration: iter,
            loglik: -fx,
            grad_max_norm: gn,
        });
        if rel < opts.rel_tol && gn < opts.grad_tol {
            return finish(x, fx, g, iter, true, "converged", trace);
        }
    }
    let it = opts.max_iter;
    finish(x, fx, g, it, false, "iteration limit reached", trace)
}

/// Log-likelihood on the working scale with the inflation part split off.
///
/// Zero and one responses have state-independent densities, so
/// `loglik = n₀ ln π + n₁ ln λ + n_int ln(1−π−λ) + core(state, β, γ)`.
/// The expensive core is cached by its coordinates, which makes
/// derivatives along the inflation coordinates free.
struct Objective<'a> {
    data: &'a SsmData,
    layout: &'a ParamLayout,
    grid: Grid,
    counts: (usize, usize, usize),
    cache: HashMap<Vec<u64>, f64>,
}

impl<'a> Objective<'a> {
    fn new(data: &'a SsmData, layout: &'a ParamLayout, grid: Grid) -> Self {
        let (zeros, ones) = data.boundary_counts();
        let interior = data.n_observed() - zeros - ones;
        Self {
            data,
            layout,
            grid,
            counts: (zeros, ones, interior),
            cache: HashMap::new(),
        }
    }

    fn inflation_loglik(&self, pi: f64, lambda: f64) -> f64 {
        let (z, o, i) = self.counts;
        let term = |n: usize, p: f64| if n == 0 { 0.0 } else { n as f64 * p.ln() };
        term(z, pi) + term(o, lambda) + term(i, 1.0 - pi - lambda)
    }

    fn full_loglik(&self, p: &NaturalParams) -> Result<f64> {
        match p.to_ssm() {
            Some(sp) => ssm::total_loglik(self.data, &sp, &self.grid),
            None => ssm::no_state_loglik(self.data, &p.beta, p.gamma, p.pi, p.lambda),
        }
    }

    fn loglik(&mut self, w: &[f64]) -> f64 {
        let p = self.layout.from_working(w);
        let infl = self.inflation_loglik(p.pi, p.lambda);
        let key: Vec<u64> = w[..self.layout.n_core()]
            .iter()
            .map(|v| v.to_bits())
            .collect();
        if let Some(core) = self.cache.get(&key) {
            return core + infl;
        }
        let full = self.full_loglik(&p).unwrap_or(f64::NEG_INFINITY);
        if !full.is_finite() {
            return f64::NEG_INFINITY;
        }
        if self.cache.len() > 4096 {
            self.cache.clear();
        }
        self.cache.insert(key, full - infl);
        full
    }
}

/// Per-coordinate factors from the working scale to the optimiser's
/// coordinates: each coefficient is multiplied by the root mean square of
/// its covariate so that a fixed difference step moves every predictor by
/// a comparable amount (`t²` spans four orders of magnitude more than a
/// dummy). Other coordinates are left alone.
fn optimizer_scale(data: &SsmData, layout: &ParamLayout) -> Vec<f64> {
    let k = layout.beta_names.len();
    let mut sums = vec![0.0; k];
    let mut n = 0usize;
    for seq in &data.sequences {
        for (_, row) in seq.observed_rows() {
            for (s, x) in sums.iter_mut().zip(row) {
                *s += x * x;
            }
            n += 1;
        }
    }
    let mut scale = vec![1.0; layout.dim()];
    for (j, s) in sums.into_iter().enumerate() {
        let rms = (s / n.max(1) as f64).sqrt();
        if rms > 0.0 && rms.is_finite() {
            scale[layout.n_state() + j] = rms;
        }
    }
    scale
}

/// Estimate with optional Wald interval on the natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub estimate: f64,
    /// Standard error of the working-scale coordinate.
    pub working_se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    /// Held at its boundary value rather than estimated.
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub has_state: bool,
    pub covariates: Vec<String>,
    pub grid: Option<Grid>,
    pub n_obs: usize,
    pub n_matches: usize,
    pub parameters: Vec<ParamEstimate>,
    pub working_names: Vec<String>,
    pub working_estimate: Vec<f64>,
    /// Inverse observed information on the working scale.
    pub working_covariance: Option<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient max-norm in the optimiser's coordinates, where each
    /// coefficient is scaled by the root mean square of its covariate.
    pub gradient_max_norm: f64,
    pub hessian_positive_definite: Option<bool>,
    pub message: String,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&ParamEstimate> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.parameter(name).map(|p| p.estimate)
    }

    /// Natural-scale parameters at the optimum.
    pub fn natural(&self) -> NaturalParams {
        let get = |n: &str| self.estimate(n).unwrap_or(0.0);
        NaturalParams {
            state: self.has_state.then(|| StateParams {
                phi: get("phi"),
                sigma_s: get("sigma_s"),
            }),
            beta: self
                .covariates
                .iter()
                .map(|c| get(&format!("beta[{c}]")))
                .collect(),
            gamma: get("gamma"),
            pi: get("pi"),
            lambda: get("lambda"),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::panel::write_path(path, |f| {
            serde_json::to_writer_pretty(&mut *f, self)?;
            writeln!(f).map_err(|e| Error::io(path, e))
        })
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        crate::panel::read_path(path, |f| {
            Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
        })
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        crate::panel::write_path(path, |f| {
            let mut w = csv::Writer::from_writer(f);
            for row in &self.trace {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        })
    }
}

/// Starting `β` from least squares of `logit(clamp(y, 0.01, 0.99))`.
fn ols_start(data: &SsmData) -> Result<Vec<f64>> {
    let k = data.covariates.len();
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for seq in &data.sequences {
        for (r, x) in seq.observed_rows() {
            let y = match r {
                Response::Zero => 0.01,
                Response::One => 0.99,
                Response::Interior { ln_y, .. } => ln_y.exp().clamp(0.01, 0.99),
            };
            ys.push((y / (1.0 - y)).ln());
            xs.extend_from_slice(x);
        }
    }
    let n = ys.len();
    let x = DMatrix::from_row_slice(n, k, &xs);
    let names: Vec<String> = data
        .covariates
        .iter()
        .map(|c| c.name().to_string())
        .collect();
    Ok(ols_fit(&DVector::from_vec(ys), &x, &names)?
        .beta
        .as_slice()
        .to_vec())
}

/// Fits a bettors' model. State models warm-start `β` from the no-state fit.
/// Fits `spec` to data built with its covariates; the result is named
/// after the spec.
pub fn fit_bettors(data: &SsmData, spec: BettorsSpec, options: &FitOptions) -> Result<FitResult> {
    if data.covariates != spec.covariates() {
        return Err(Error::Config(format!(
            "data covariates do not match the {spec} spec"
        )));
    }
    let mut fit = if spec.has_state() {
        fit_ssm(data, options)?
    } else {
        fit_beinf_glm(data, options)?
    };
    fit.model = spec.name().to_string();
    Ok(fit)
}

/// The no-state BEINF regression (`η = ν`).
pub fn fit_beinf_glm(data: &SsmData, options: &FitOptions) -> Result<FitResult> {
    fit(data, false, options, "noss")
}

/// The state-space model.
pub fn fit_ssm(data: &SsmData, options: &FitOptions) -> Result<FitResult> {
    let mut opts = options.clone();
    if opts.start.beta.is_none() {
        let mut glm_opts = options.clone();
        glm_opts.skip_covariance = true;
        let glm = fit_beinf_glm(data, &glm_opts)?;
        opts.start.beta = Some(glm.natural().beta);
    }
    fit(data, true, &opts, "ssm")
}

fn fit(data: &SsmData, has_state: bool, options: &FitOptions, model: &str) -> Result<FitResult> {
    if has_state {
        options.grid.validate()?;
    }
    let k = data.covariates.len();
    let (zeros, ones) = data.boundary_counts();
    let layout = ParamLayout::new(has_state, &data.covariates, zeros, ones);
    let st = &options.start;
    let beta = match &st.beta {
        Some(b) => b.clone(),
        None => ols_start(data)?,
    };
    if beta.len() != k {
        return Err(Error::Config(format!(
            "{} start coefficients for {k} covariates",
            beta.len()
        )));
    }
    let start = NaturalParams {
        state: has_state.then_some(StateParams {
            phi: st.phi,
            sigma_s: st.sigma_s,
        }),
        beta,
        gamma: st.gamma,
        pi: if layout.free_pi { st.pi } else { 0.0 },
        lambda: if layout.free_lambda { st.lambda } else { 0.0 },
    };
    let scale = optimizer_scale(data, &layout);
    let z0: Vec<f64> = layout
        .to_working(&start)?
        .iter()
        .zip(&scale)
        .map(|(w, c)| w * c)
        .collect();
    let mut objective = Objective::new(data, &layout, options.grid);
    let mut neg = |z: &[f64]| {
        let w: Vec<f64> = z.iter().zip(&scale).map(|(z, c)| z / c).collect();
        -objective.loglik(&w)
    };
    let out = bfgs_minimize(&mut neg, &z0, &options.optimizer);
    if !out.value.is_finite() {
        return Err(Error::Estimation(format!("{model}: {}", out.message)));
    }

    let (cov, pd) = if options.skip_covariance {
        (None, None)
    } else {
        let info = fd_hessian(&mut neg, &out.x, options.optimizer.hessian_step);
        match info.cholesky() {
            Some(ch) => {
                let cov_z = ch.inverse();
                let cov = DMatrix::from_fn(cov_z.nrows(), cov_z.ncols(), |i, j| {
                    cov_z[(i, j)] / (scale[i] * scale[j])
                });
                (Some(cov), Some(true))
            }
            None => (None, Some(false)),
        }
    };
    let w_hat: Vec<f64> = out.x.iter().zip(&scale).map(|(z, c)| z / c).collect();
    let natural = layout.from_working(&w_hat);
    let parameters = describe(&layout, &w_hat, &natural, cov.as_ref());
    let loglik = -out.value;
    let n_params = layout.dim();
    Ok(FitResult {
        model: model.to_string(),
        has_state,
        covariates: layout.beta_names.clone(),
        grid: has_state.then_some(options.grid),
        n_obs: data.n_observed(),
        n_matches: data.sequences.len(),
        parameters,
        working_names: layout.working_names(),
        working_estimate: w_hat,
        working_covariance: cov
            .as_ref()
            .map(|c| c.row_iter().map(|r| r.iter().copied().collect()).collect()),
        loglik,
        n_params,
        aic: 2.0 * n_params as f64 - 2.0 * loglik,
        iterations: out.iterations,
        converged: out.converged,
        gradient_max_norm: max_norm(&out.gradient),
        hessian_positive_definite: pd,
        message: out.message,
        trace: out.trace,
    })
}

/// Natural-scale estimates with Wald intervals mapped from the working
/// scale. Each inflation probability's interval varies its own coordinate
/// with the other held at its estimate.
fn describe(
    layout: &ParamLayout,
    w: &[f64],
    natural: &NaturalParams,
    cov: Option<&DMatrix<f64>>,
) -> Vec<ParamEstimate> {
    let se = |i: usize| cov.map(|c| c[(i, i)].max(0.0).sqrt());
    let mapped = |i: usize, map: &dyn Fn(&[f64]) -> f64| {
        se(i).map(|s| {
            let mut lo = w.to_vec();
            let mut hi = w.to_vec();
            lo[i] -= Z_95 * s;
            hi[i] += Z_95 * s;
            let (a, b) = (map(&lo), map(&hi));
            (a.min(b), a.max(b))
        })
    };
    let entry = |name: String, estimate: f64, i: Option<usize>, map: &dyn Fn(&[f64]) -> f64| {
        let ci = i.and_then(|i| mapped(i, map));
        ParamEstimate {
            name,
            estimate,
            working_se: i.and_then(se),
            ci_lower: ci.map(|c| c.0),
            ci_upper: ci.map(|c| c.1),
            fixed: i.is_none(),
        }
    };
    let mut out = Vec::new();
    let mut i = 0;
    if let Some(s) = natural.state {
        out.push(entry("phi".into(), s.phi, Some(0), &|v| v[0].tanh()));
        out.push(entry("sigma_s".into(), s.sigma_s, Some(1), &|v| v[1].exp()));
        i = 2;
    }
    for (name, b) in layout.beta_names.iter().zip(&natural.beta) {
        let j = i;
        out.push(entry(format!("beta[{name}]"), *b, Some(j), &move |v| v[j]));
        i += 1;
    }
    let g = i;
    out.push(entry("gamma".into(), natural.gamma, Some(g), &move |v| {
        v[g].exp()
    }));
    i += 1;
    let n_core = i;
    let pi_idx = layout.free_pi.then_some(n_core);
    let lambda_idx = layout
        .free_lambda
        .then_some(n_core + layout.free_pi as usize);
    out.push(entry("pi".into(), natural.pi, pi_idx, &|v| {
        layout.inflation(&v[n_core..]).0
    }));
    out.push(entry("lambda".into(), natural.lambda, lambda_idx, &|v| {
        layout.inflation(&v[n_core..]).1
    }));
    out
}
