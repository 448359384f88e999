//! Zero-one-inflated beta (BEINF) distribution.
//!
//! Mean/precision parametrisation: the continuous part is a beta law with
//! shapes `α = μγ` and `b = (1 − μ)γ`, point masses `π` at 0 and `λ` at 1.
//! The mean of the continuous part is linked to a linear predictor through
//! the inverse logit.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeinfParams {
    /// Mean of the continuous component.
    pub mu: f64,
    /// Precision, `μ(1−μ)/σ² − 1`.
    pub gamma: f64,
    /// Point mass at 0.
    pub pi: f64,
    /// Point mass at 1.
    pub lambda: f64,
}

impl BeinfParams {
    pub fn new(mu: f64, gamma: f64, pi: f64, lambda: f64) -> Result<Self> {
        let p = Self {
            mu,
            gamma,
            pi,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::Domain(format!(
                "mu must lie in (0,1), got {}",
                self.mu
            )));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Domain(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        check_inflation(self.pi, self.lambda)
    }

    pub fn shapes(&self) -> (f64, f64) {
        (self.mu * self.gamma, (1.0 - self.mu) * self.gamma)
    }

    /// Variance of the continuous component, `μ(1−μ)/(γ+1)`.
    pub fn beta_variance(&self) -> f64 {
        self.mu * (1.0 - self.mu) / (self.gamma + 1.0)
    }
}

pub(crate) fn check_inflation(pi: f64, lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&pi) || !(0.0..1.0).contains(&lambda) || pi + lambda >= 1.0 {
        return Err(Error::Domain(format!(
            "inflation masses need pi, lambda in [0,1) with pi + lambda < 1, got pi = {pi}, lambda = {lambda}"
        )));
    }
    Ok(())
}

/// Inverse logit, evaluated without overflow for large `|eta|`.
pub fn mean_from_predictor(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `(μ, 1−μ)` from the logit, both without cancellation.
#[inline]
fn mean_pair(eta: f64) -> (f64, f64) {
    let e = (-eta.abs()).exp();
    let r = 1.0 / (1.0 + e);
    if eta >= 0.0 {
        (r, e * r)
    } else {
        (e * r, r)
    }
}

/// `γ = μ(1−μ)/σ² − 1`, requiring `0 < σ² < μ(1−μ)`.
pub fn precision_from_moments(mu: f64, sigma2: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(format!("mu must lie in (0,1), got {mu}")));
    }
    let bound = mu * (1.0 - mu);
    if !(sigma2 > 0.0 && sigma2 < bound) {
        return Err(Error::Domain(format!(
            "variance {sigma2} outside (0, mu(1-mu)) = (0, {bound})"
        )));
    }
    Ok(bound / sigma2 - 1.0)
}

/// Log-density of one observation. `y = 0` with `π = 0` (or `y = 1` with
/// `λ = 0`) yields `-inf`.
pub fn log_density(y: f64, params: &BeinfParams) -> Result<f64> {
    params.validate()?;
    let obs = Response::classify(y)?;
    let kernel = BeinfKernel::new(params.gamma, params.pi, params.lambda);
    let m = params.mu;
    Ok(kernel.log_density(&obs, m, 1.0 - m))
}

/// Derivative of the log-density with respect to the logit-scale predictor.
/// Zero for the point masses, which do not depend on the mean.
pub fn score_eta(y: f64, eta: f64, gamma: f64) -> Result<f64> {
    match Response::classify(y)? {
        Response::Interior { ln_y, ln_1my } => {
            let mu = mean_from_predictor(eta);
            let one_minus = mean_from_predictor(-eta);
            let a = mu * gamma;
            let b = one_minus * gamma;
            Ok(mu * one_minus * gamma * (ln_y - ln_1my - digamma(a) + digamma(b)))
        }
        _ => Ok(0.0),
    }
}

/// Draw one response: 0 with probability π, 1 with probability λ, otherwise
/// a beta variate kept strictly inside (0, 1).
pub fn sample<R: Rng + ?Sized>(params: &BeinfParams, rng: &mut R) -> Result<f64> {
    params.validate()?;
    let u: f64 = rng.random();
    if u < params.pi {
        return Ok(0.0);
    }
    if u < params.pi + params.lambda {
        return Ok(1.0);
    }
    let (a, b) = params.shapes();
    let beta =
        Beta::new(a, b).map_err(|e| Error::Domain(format!("beta shapes ({a}, {b}): {e}")))?;
    let y: f64 = beta.sample(rng);
    Ok(y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// A response value pre-split into the three support pieces, with the
/// logarithms the interior density needs cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Response {
    Zero,
    One,
    Interior { ln_y: f64, ln_1my: f64 },
}

impl Response {
    pub fn classify(y: f64) -> Result<Self> {
        if y == 0.0 {
            Ok(Response::Zero)
        } else if y == 1.0 {
            Ok(Response::One)
        } else if y > 0.0 && y < 1.0 {
            Ok(Response::Interior {
                ln_y: y.ln(),
                ln_1my: (-y).ln_1p(),
            })
        } else {
            Err(Error::Domain(format!(
                "response must lie in [0,1], got {y}"
            )))
        }
    }
}

/// Mean-independent pieces of the BEINF log-density for fixed `(γ, π, λ)`.
#[derive(Debug, Clone, Copy)]
pub struct BeinfKernel {
    gamma: f64,
    ln_gamma_gamma: f64,
    ln_pi: f64,
    ln_lambda: f64,
    ln_interior: f64,
}

impl BeinfKernel {
    pub fn new(gamma: f64, pi: f64, lambda: f64) -> Self {
        Self {
            gamma,
            ln_gamma_gamma: ln_gamma(gamma),
            ln_pi: pi.ln(),
            ln_lambda: lambda.ln(),
            ln_interior: (-(pi + lambda)).ln_1p(),
        }
    }

    /// `mu` and `one_minus_mu` are passed separately so that callers working
    /// on the logit scale avoid cancellation in `1 − μ`.
    #[inline]
    pub fn log_density(&self, obs: &Response, mu: f64, one_minus_mu: f64) -> f64 {
        match *obs {
            Response::Zero => self.ln_pi,
            Response::One => self.ln_lambda,
            Response::Interior { ln_y, ln_1my } => {
                let a = mu * self.gamma;
                let b = one_minus_mu * self.gamma;
                self.ln_interior + self.ln_gamma_gamma - ln_gamma(a) - ln_gamma(b)
                    + (a - 1.0) * ln_y
                    + (b - 1.0) * ln_1my
            }
        }
    }

    /// Log-density with the mean given through its logit.
    #[inline]
    pub fn log_density_eta(&self, obs: &Response, eta: f64) -> f64 {
        match obs {
            Response::Zero => self.ln_pi,
            Response::One => self.ln_lambda,
            _ => {
                let (mu, one_minus_mu) = mean_pair(eta);
                self.log_density(obs, mu, one_minus_mu)
            }
        }
    }
}
