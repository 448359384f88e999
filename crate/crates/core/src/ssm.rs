//! Approximate likelihood of the AR(1)-state BEINF model.
//!
//! The latent state `s_t = φ s_{t−1} + σ_s ε_t` shifts the logit-mean of the
//! observations, `η_t = ν_t + s_t`. The state range `[b_0, b_m]` is cut into
//! `m` equal intervals; the model then becomes an `m`-state hidden Markov
//! model whose likelihood is evaluated with the scaled forward recursion in
//! `O(T m²)`.
//!
//! Transition entries are interval masses of the conditional normal
//! (origin at the interval midpoint). Mass beyond the outer bounds is
//! dropped, not renormalised, so rows may sum to slightly less than one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::beinf::{self, BeinfKernel, Response};
use crate::panel::{Covariate, Panel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateParams {
    /// Persistence, `|φ| < 1`.
    pub phi: f64,
    /// Innovation standard deviation.
    pub sigma_s: f64,
}

impl StateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::Domain(format!(
                "|phi| must be < 1, got {}",
                self.phi
            )));
        }
        if !(self.sigma_s > 0.0) || !self.sigma_s.is_finite() {
            return Err(Error::Domain(format!(
                "sigma_s must be positive and finite, got {}",
                self.sigma_s
            )));
        }
        Ok(())
    }

    /// Standard deviation of the stationary distribution.
    pub fn stationary_sd(&self) -> f64 {
        self.sigma_s / (1.0 - self.phi * self.phi).sqrt()
    }
}

/// Equal-width partition of `[lower, upper]` into `m` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub m: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            m: 95,
            lower: -3.0,
            upper: 3.0,
        }
    }
}

impl Grid {
    pub fn new(m: usize, lower: f64, upper: f64) -> Result<Self> {
        let g = Self { m, lower, upper };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!(
                "grid needs m >= 2 intervals, got {}",
                self.m
            )));
        }
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::Config(format!(
                "grid bounds must satisfy lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.m as f64
    }

    /// Interval edges `b_0 < b_1 < … < b_m`.
    pub fn edges(&self) -> Vec<f64> {
        let h = self.width();
        (0..=self.m)
            .map(|i| {
                if i == self.m {
                    self.upper
                } else {
                    self.lower + i as f64 * h
                }
            })
            .collect()
    }

    /// Midpoints `b_i* = (b_{i−1} + b_i)/2`.
    pub fn midpoints(&self) -> Vec<f64> {
        let h = self.width();
        (0..self.m)
            .map(|i| self.lower + (i as f64 + 0.5) * h)
            .collect()
    }
}

/// Full parameter set of the state-space model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmParams {
    pub state: StateParams,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub pi: f64,
    pub lambda: f64,
}

impl SsmParams {
    pub fn validate(&self) -> Result<()> {
        self.state.validate()?;
        validate_emission(self.gamma, self.pi, self.lambda, &self.beta)
    }
}

pub(crate) fn validate_emission(gamma: f64, pi: f64, lambda: f64, beta: &[f64]) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    beinf::check_inflation(pi, lambda)?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Domain("non-finite regression coefficient".into()));
    }
    Ok(())
}

/// `P(a < Z < b)` for standard normal `Z`, evaluated on the tail that keeps
/// precision.
fn normal_interval(a: f64, b: f64) -> f64 {
    let q = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
    let mass = if a >= 0.0 {
        q(a) - q(b)
    } else if b <= 0.0 {
        q(-b) - q(-a)
    } else {
        1.0 - q(-a) - q(b)
    };
    mass.max(0.0)
}

/// Row-major `m × m` transition probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub m: usize,
    pub entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    /// Probability mass lost beyond the grid bounds, per row.
    pub fn lost_mass(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| 1.0 - self.row(i).iter().sum::<f64>())
            .collect()
    }
}

/// `γ_ij = Φ((b_j − φ b_i*)/σ_s) − Φ((b_{j−1} − φ b_i*)/σ_s)`.
pub fn transition_matrix(state: &StateParams, grid: &Grid) -> Result<TransitionMatrix> {
    state.validate()?;
    grid.validate()?;
    let edges = grid.edges();
    let mids = grid.midpoints();
    let m = grid.m;
    let mut entries = vec![0.0; m * m];
    for (i, &from) in mids.iter().enumerate() {
        let centre = state.phi * from;
        let z: Vec<f64> = edges
            .iter()
            .map(|&e| (e - centre) / state.sigma_s)
            .collect();
        for j in 0..m {
            entries[i * m + j] = normal_interval(z[j], z[j + 1]);
        }
    }
    Ok(TransitionMatrix { m, entries })
}

/// Stationary `N(0, σ_s²/(1−φ²))` mass of each interval.
pub fn initial_distribution(state: &StateParams, grid: &Grid) -> Result<Vec<f64>> {
    state.validate()?;
    grid.validate()?;
    let sd = state.stationary_sd();
    let edges = grid.edges();
    Ok(edges
        .windows(2)
        .map(|w| normal_interval(w[0] / sd, w[1] / sd))
        .collect())
}

/// One observed minute: response (missing allowed), covariate row for `ν_t`
/// and the number of unobserved minutes directly before it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: Option<f64>,
    pub covariates: Vec<f64>,
    pub skipped_before: u32,
}

/// A match prepared for repeated likelihood evaluation. Skipped minutes are
/// expanded into emission-free steps.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub match_id: String,
    k: usize,
    responses: Vec<Option<Response>>,
    /// Flat `steps × k` covariates; zero rows for emission-free steps.
    x: Vec<f64>,
    /// Expanded step index of every original observation.
    observed_steps: Vec<usize>,
}

impl Sequence {
    pub fn new(match_id: impl Into<String>, observations: &[Observation]) -> Result<Self> {
        let match_id = match_id.into();
        if observations.is_empty() {
            return Err(Error::Data(format!(
                "{match_id}: empty observation sequence"
            )));
        }
        let k = observations[0].covariates.len();
        let mut responses = Vec::new();
        let mut x = Vec::new();
        let mut observed_steps = Vec::with_capacity(observations.len());
        for o in observations {
            if o.covariates.len() != k {
                return Err(Error::Data(format!("{match_id}: ragged covariate rows")));
            }
            for _ in 0..o.skipped_before {
                responses.push(None);
                x.extend(std::iter::repeat_n(0.0, k));
            }
            observed_steps.push(responses.len());
            responses.push(o.y.map(Response::classify).transpose()?);
            x.extend_from_slice(&o.covariates);
        }
        Ok(Self {
            match_id,
            k,
            responses,
            x,
            observed_steps,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.responses.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.k
    }

    /// Number of non-missing responses.
    pub fn n_observed(&self) -> usize {
        self.responses.iter().filter(|r| r.is_some()).count()
    }

    pub fn responses(&self) -> impl Iterator<Item = &Response> {
        self.responses.iter().flatten()
    }

    fn nu(&self, step: usize, beta: &[f64]) -> f64 {
        self.x[step * self.k..(step + 1) * self.k]
            .iter()
            .zip(beta)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `(response, covariate row)` for each observed step.
    pub fn observed_rows(&self) -> impl Iterator<Item = (&Response, &[f64])> {
        self.responses.iter().enumerate().filter_map(move |(s, r)| {
            r.as_ref()
                .map(|r| (r, &self.x[s * self.k..(s + 1) * self.k]))
        })
    }

    /// `(response, ν)` for each observed step.
    pub fn observed_predictors<'a>(
        &'a self,
        beta: &'a [f64],
    ) -> impl Iterator<Item = (&'a Response, f64)> + 'a {
        self.responses
            .iter()
            .enumerate()
            .filter_map(move |(s, r)| r.as_ref().map(|r| (r, self.nu(s, beta))))
    }
}

/// Sequences of every match of a bettors' panel, in match-id order.
#[derive(Debug, Clone)]
pub struct SsmData {
    pub covariates: Vec<Covariate>,
    pub sequences: Vec<Sequence>,
}

impl SsmData {
    pub fn from_panel(panel: &Panel, covariates: &[Covariate]) -> Result<Self> {
        let sequences = panel
            .matches
            .iter()
            .map(|m| {
                let obs: Vec<Observation> = m
                    .observations
                    .iter()
                    .zip(&m.skipped_before)
                    .map(|(o, &skip)| Observation {
                        y: o.stakerel,
                        covariates: Covariate::row(covariates, o),
                        skipped_before: skip,
                    })
                    .collect();
                Sequence::new(m.match_id.clone(), &obs)
            })
            .collect::<Result<Vec<_>>>()?;
        if sequences.is_empty() {
            return Err(Error::Data("panel has no matches".into()));
        }
        Ok(Self {
            covariates: covariates.to_vec(),
            sequences,
        })
    }

    pub fn n_observed(&self) -> usize {
        self.sequences.iter().map(Sequence::n_observed).sum()
    }

    /// Counts of exact zeros and ones among the responses.
    pub fn boundary_counts(&self) -> (usize, usize) {
        let mut zeros = 0;
        let mut ones = 0;
        for r in self.sequences.iter().flat_map(|s| s.responses()) {
            match r {
                Response::Zero => zeros += 1,
                Response::One => ones += 1,
                Response::Interior { .. } => {}
            }
        }
        (zeros, ones)
    }
}

/// Precomputed discretised model for fixed parameters.
#[derive(Debug, Clone)]
pub struct DiscretizedModel {
    pub grid: Grid,
    pub midpoints: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: TransitionMatrix,
    beta: Vec<f64>,
    kernel: BeinfKernel,
}

impl DiscretizedModel {
    pub fn new(params: &SsmParams, grid: &Grid) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            grid: *grid,
            midpoints: grid.midpoints(),
            delta: initial_distribution(&params.state, grid)?,
            gamma: transition_matrix(&params.state, grid)?,
            beta: params.beta.clone(),
            kernel: BeinfKernel::new(params.gamma, params.pi, params.lambda),
        })
    }

    fn check_dims(&self, seq: &Sequence) -> Result<()> {
        if seq.k != self.beta.len() {
            return Err(Error::Data(format!(
                "{}: {} covariates but {} coefficients",
                seq.match_id,
                seq.k,
                self.beta.len()
            )));
        }
        Ok(())
    }

    /// Emission densities at one step scaled by `exp(−shift)`; returns the
    /// shift, or `None` when every state has zero density.
    fn emission(&self, resp: &Response, nu: f64, out: &mut [f64]) -> Option<f64> {
        let mut max = f64::NEG_INFINITY;
        for (o, &b) in out.iter_mut().zip(&self.midpoints) {
            *o = self.kernel.log_density_eta(resp, nu + b);
            if *o > max {
                max = *o;
            }
        }
        if !max.is_finite() {
            return None;
        }
        for o in out.iter_mut() {
            *o = (*o - max).exp();
        }
        Some(max)
    }

    /// `next = prev · Γ`, four rows per sweep over `next`.
    fn propagate(&self, prev: &[f64], next: &mut [f64]) {
        let m = self.grid.m;
        next.fill(0.0);
        let mut i = 0;
        while i + 4 <= m {
            let (a0, a1, a2, a3) = (prev[i], prev[i + 1], prev[i + 2], prev[i + 3]);
            let rows = &self.gamma.entries[i * m..(i + 4) * m];
            let (r0, rest) = rows.split_at(m);
            let (r1, rest) = rest.split_at(m);
            let (r2, r3) = rest.split_at(m);
            for j in 0..m {
                next[j] += a0 * r0[j] + a1 * r1[j] + a2 * r2[j] + a3 * r3[j];
            }
            i += 4;
        }
        for (i, &a) in prev.iter().enumerate().skip(i) {
            for (n, g) in next.iter_mut().zip(self.gamma.row(i)) {
                *n += a * g;
            }
        }
    }

    /// Scaled forward pass. Returns the log-likelihood and, if requested,
    /// the normalised forward vectors of every step.
    fn forward(&self, seq: &Sequence, mut keep: Option<&mut Vec<Vec<f64>>>) -> f64 {
        let m = self.grid.m;
        let mut alpha = self.delta.clone();
        let mut next = vec![0.0; m];
        let mut dens = vec![0.0; m];
        let mut loglik = 0.0;
        for (step, resp) in seq.responses.iter().enumerate() {
            if step > 0 {
                self.propagate(&alpha, &mut next);
                std::mem::swap(&mut alpha, &mut next);
            }
            if let Some(resp) = resp {
                let Some(shift) = self.emission(resp, seq.nu(step, &self.beta), &mut dens) else {
                    return f64::NEG_INFINITY;
                };
                for (a, d) in alpha.iter_mut().zip(&dens) {
                    *a *= d;
                }
                loglik += shift;
            }
            let c: f64 = alpha.iter().sum();
            if !(c > 0.0) {
                return f64::NEG_INFINITY;
            }
            for a in alpha.iter_mut() {
                *a /= c;
            }
            loglik += c.ln();
            if let Some(store) = keep.as_deref_mut() {
                store.push(alpha.clone());
            }
        }
        loglik
    }

    pub fn sequence_loglik(&self, seq: &Sequence) -> Result<f64> {
        self.check_dims(seq)?;
        Ok(self.forward(seq, None))
    }
}

/// Log-likelihood of one match.
pub fn forward_loglik(
    observations: &[Observation],
    params: &SsmParams,
    grid: &Grid,
) -> Result<f64> {
    let seq = Sequence::new("sequence", observations)?;
    DiscretizedModel::new(params, grid)?.sequence_loglik(&seq)
}

/// Sum of per-match log-likelihoods, reduced in match order.
pub fn total_loglik(data: &SsmData, params: &SsmParams, grid: &Grid) -> Result<f64> {
    let model = DiscretizedModel::new(params, grid)?;
    for s in &data.sequences {
        model.check_dims(s)?;
    }
    let parts: Vec<f64> = data
        .sequences
        .par_iter()
        .map(|s| model.forward(s, None))
        .collect();
    Ok(parts.iter().sum())
}

/// Log-likelihood of the model without a state process (`η = ν`).
pub fn no_state_loglik(
    data: &SsmData,
    beta: &[f64],
    gamma: f64,
    pi: f64,
    lambda: f64,
) -> Result<f64> {
    validate_emission(gamma, pi, lambda, beta)?;
    let kernel = BeinfKernel::new(gamma, pi, lambda);
    let mut total = 0.0;
    for s in &data.sequences {
        if s.k != beta.len() {
            return Err(Error::Data(format!(
                "{}: covariate count mismatch",
                s.match_id
            )));
        }
        total += s
            .observed_predictors(beta)
            .map(|(r, nu)| kernel.log_density_eta(r, nu))
            .sum::<f64>();
    }
    Ok(total)
}

/// Decoded latent states at each original observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedStates {
    /// Grid midpoint of the most probable state path (Viterbi).
    pub viterbi: Vec<f64>,
    /// Posterior mean of the state given all observations of the match.
    pub smoothed_mean: Vec<f64>,
    pub smoothed_sd: Vec<f64>,
}

pub fn decode_states(
    observations: &[Observation],
    params: &SsmParams,
    grid: &Grid,
) -> Result<DecodedStates> {
    let seq = Sequence::new("sequence", observations)?;
    decode_sequence(&seq, params, grid)
}

pub fn decode_sequence(seq: &Sequence, params: &SsmParams, grid: &Grid) -> Result<DecodedStates> {
    let model = DiscretizedModel::new(params, grid)?;
    model.check_dims(seq)?;
    let m = grid.m;
    let n = seq.n_steps();

    // Forward–backward with the forward normalisers.
    let mut alphas = Vec::with_capacity(n);
    let ll = model.forward(seq, Some(&mut alphas));
    if !ll.is_finite() {
        return Err(Error::Estimation(format!(
            "{}: zero likelihood under the given parameters",
            seq.match_id
        )));
    }
    let mut dens = vec![1.0; m];
    let mut back = vec![1.0; m];
    let mut posts = vec![vec![0.0; m]; n];
    for step in (0..n).rev() {
        let mut p: Vec<f64> = alphas[step].iter().zip(&back).map(|(a, b)| a * b).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        posts[step] = p;
        if step == 0 {
            break;
        }
        // back_{t-1}(i) = Σ_j Γ_ij f_t(j) back_t(j)
        match &seq.responses[step] {
            Some(r) => {
                model.emission(r, seq.nu(step, &model.beta), &mut dens);
            }
            None => dens.fill(1.0),
        }
        let w: Vec<f64> = dens.iter().zip(&back).map(|(d, b)| d * b).collect();
        let mut prev = vec![0.0; m];
        for (i, pv) in prev.iter_mut().enumerate() {
            *pv = model.gamma.row(i).iter().zip(&w).map(|(g, x)| g * x).sum();
        }
        let s: f64 = prev.iter().sum();
        back = prev.into_iter().map(|v| v / s).collect();
    }

    // Viterbi in log space.
    let log_gamma: Vec<f64> = model.gamma.entries.iter().map(|g| g.ln()).collect();
    let mut score: Vec<f64> = model.delta.iter().map(|d| d.ln()).collect();
    let mut backptr: Vec<Vec<usize>> = Vec::with_capacity(n);
    for step in 0..n {
        if step > 0 {
            let mut next = vec![f64::NEG_INFINITY; m];
            let mut ptr = vec![0usize; m];
            for j in 0..m {
                for i in 0..m {
                    let v = score[i] + log_gamma[i * m + j];
                    if v > next[j] {
                        next[j] = v;
                        ptr[j] = i;
                    }
                }
            }
            score = next;
            backptr.push(ptr);
        }
        if let Some(r) = &seq.responses[step] {
            let nu = seq.nu(step, &model.beta);
            for (s, &b) in score.iter_mut().zip(&model.midpoints) {
                *s += model.kernel.log_density_eta(r, nu + b);
            }
        }
    }
    let mut path = vec![0usize; n];
    path[n - 1] = argmax(&score);
    for step in (1..n).rev() {
        path[step - 1] = backptr[step - 1][path[step]];
    }

    let mids = &model.midpoints;
    let mut out = DecodedStates {
        viterbi: Vec::new(),
        smoothed_mean: Vec::new(),
        smoothed_sd: Vec::new(),
    };
    for &step in &seq.observed_steps {
        let p = &posts[step];
        let mean: f64 = p.iter().zip(mids).map(|(w, b)| w * b).sum();
        let var: f64 = p
            .iter()
            .zip(mids)
            .map(|(w, b)| w * (b - mean).powi(2))
            .sum();
        out.viterbi.push(mids[path[step]]);
        out.smoothed_mean.push(mean);
        out.smoothed_sd.push(var.max(0.0).sqrt());
    }
    Ok(out)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
