//! Bookmaker models: OLS of the in-match implied probability with
//! match-clustered (CR1) sandwich covariance and Gaussian AIC.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::panel::{Covariate, Panel};
use crate::{Error, Result};

/// Normal critical value for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

/// Which of the nested bookmaker models to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// 1..=4.
    pub model_id: u8,
    /// Drop the expected-goals regressor (robustness variant of Model 4).
    pub exclude_xg: bool,
}

impl DesignSpec {
    pub fn model(model_id: u8) -> Result<Self> {
        if !(1..=4).contains(&model_id) {
            return Err(Error::Config(format!(
                "bookmaker model must be 1-4, got {model_id}"
            )));
        }
        Ok(Self {
            model_id,
            exclude_xg: false,
        })
    }

    pub fn covariates(&self) -> Vec<Covariate> {
        use Covariate::*;
        let mut cols = vec![Constant, ImprobPre];
        if self.model_id >= 2 {
            cols.extend([Minute, MinuteSquared, ImprobPreMinute]);
        }
        if self.model_id >= 3 {
            cols.extend([RedCardTeam, RedCardOpp]);
            if !self.exclude_xg {
                cols.push(XgdiffPerMinute);
            }
        }
        if self.model_id >= 4 {
            cols.push(InvMintogoal);
        }
        cols
    }
}

/// Response, design matrix and cluster assignment for one model.
#[derive(Debug, Clone)]
pub struct Design {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    /// Cluster index per row (index into the panel's match list).
    pub clusters: Vec<usize>,
    pub names: Vec<String>,
}

/// Rows with a missing in-match implied probability are skipped.
pub fn build_design(panel: &Panel, spec: &DesignSpec) -> Result<Design> {
    let covs = spec.covariates();
    let mut y = Vec::new();
    let mut rows = Vec::new();
    let mut clusters = Vec::new();
    for (g, m) in panel.matches.iter().enumerate() {
        for o in &m.observations {
            let Some(p) = o.improb else { continue };
            if o.t == 0 {
                return Err(Error::Data(format!("{}: minute index 0", o.match_id)));
            }
            y.push(p);
            rows.extend(covs.iter().map(|c| c.value(o)));
            clusters.push(g);
        }
    }
    let n = y.len();
    Ok(Design {
        y: DVector::from_vec(y),
        x: DMatrix::from_row_slice(n, covs.len(), &rows),
        clusters,
        names: covs.iter().map(|c| c.name().to_string()).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub fitted: DVector<f64>,
    /// `(X'X)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
}

/// Least squares through a thin QR factorisation. Columns whose component
/// orthogonal to the preceding columns vanishes are reported by name.
pub fn ols_fit(y: &DVector<f64>, x: &DMatrix<f64>, names: &[String]) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::Data(format!(
            "response has {} rows, design {n}",
            y.len()
        )));
    }
    if n < k || k == 0 {
        return Err(Error::Estimation(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let collinear: Vec<String> = (0..k)
        .filter(|&j| r[(j, j)].abs() <= 1e-10 * x.column(j).norm().max(f64::MIN_POSITIVE))
        .map(|j| {
            names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("column {j}"))
        })
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient(collinear));
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Estimation("singular triangular factor".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Estimation("singular triangular factor".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let fitted = x * &beta;
    let residuals = y - &fitted;
    Ok(OlsFit {
        beta,
        residuals,
        fitted,
        xtx_inv,
    })
}

#[derive(Debug, Clone)]
pub struct ClusterCovariance {
    /// `(X'X)^{-1} (Σ_g X_g'u_g u_g'X_g) (X'X)^{-1}`.
    pub uncorrected: DMatrix<f64>,
    /// Times `G/(G−1) · (N−1)/(N−k)`.
    pub corrected: DMatrix<f64>,
    pub n_clusters: usize,
    pub factor: f64,
}

pub fn cluster_covariance(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    clusters: &[usize],
) -> Result<ClusterCovariance> {
    let (n, k) = x.shape();
    if clusters.len() != n || residuals.len() != n {
        return Err(Error::Data(
            "every row needs a residual and a cluster".into(),
        ));
    }
    let mut ids: Vec<usize> = clusters.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let g = ids.len();
    if g < 2 {
        return Err(Error::Estimation(format!(
            "clustered covariance needs at least 2 clusters, got {g}"
        )));
    }
    if n <= k {
        return Err(Error::Estimation(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    let xtx_inv = (x.transpose() * x)
        .try_inverse()
        .ok_or_else(|| Error::Estimation("X'X is singular".into()))?;

    let mut scores = DMatrix::<f64>::zeros(g, k);
    for (row, &c) in clusters.iter().enumerate() {
        let gi = ids.binary_search(&c).expect("id collected above");
        let u = residuals[row];
        for j in 0..k {
            scores[(gi, j)] += x[(row, j)] * u;
        }
    }
    let meat = scores.transpose() * &scores;
    let mut uncorrected = &xtx_inv * meat * &xtx_inv;
    uncorrected = (&uncorrected + uncorrected.transpose()) * 0.5;
    let (gf, nf, kf) = (g as f64, n as f64, k as f64);
    let factor = gf / (gf - 1.0) * (nf - 1.0) / (nf - kf);
    Ok(ClusterCovariance {
        corrected: &uncorrected * factor,
        uncorrected,
        n_clusters: g,
        factor,
    })
}

/// Gaussian log-likelihood at the ML variance `RSS/n`, and
/// `AIC = 2(k+1) − 2 logL` with the variance counted as a parameter.
pub fn gaussian_aic(rss: f64, n: usize, k: usize) -> Result<(f64, f64)> {
    if n <= k {
        return Err(Error::Estimation(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    if !(rss > 0.0) {
        return Err(Error::Estimation(
            "residual sum of squares is zero: degenerate Gaussian likelihood".into(),
        ));
    }
    let nf = n as f64;
    let loglik = -0.5 * nf * ((2.0 * std::f64::consts::PI * rss / nf).ln() + 1.0);
    let aic = 2.0 * (k as f64 + 1.0) - 2.0 * loglik;
    Ok((loglik, aic))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub model_id: u8,
    pub exclude_xg: bool,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// CR1 cluster-robust covariance, row-major.
    pub covariance: Vec<Vec<f64>>,
    /// `RSS/(n−k)`.
    pub residual_variance: f64,
    pub n: usize,
    pub k: usize,
    pub n_clusters: usize,
    pub loglik: f64,
    pub aic: f64,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<(f64, f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.coefficients[i], self.ci_lower[i], self.ci_upper[i]))
    }
}

pub fn fit_design(design: &Design, spec: &DesignSpec) -> Result<RegressionFit> {
    let ols = ols_fit(&design.y, &design.x, &design.names)?;
    let cov = cluster_covariance(&design.x, &ols.residuals, &design.clusters)?;
    let (n, k) = design.x.shape();
    let rss = ols.residuals.norm_squared();
    let (loglik, aic) = gaussian_aic(rss, n, k)?;
    let beta: Vec<f64> = ols.beta.iter().copied().collect();
    let se: Vec<f64> = (0..k)
        .map(|j| cov.corrected[(j, j)].max(0.0).sqrt())
        .collect();
    Ok(RegressionFit {
        model_id: spec.model_id,
        exclude_xg: spec.exclude_xg,
        names: design.names.clone(),
        ci_lower: beta.iter().zip(&se).map(|(b, s)| b - Z_95 * s).collect(),
        ci_upper: beta.iter().zip(&se).map(|(b, s)| b + Z_95 * s).collect(),
        coefficients: beta,
        std_errors: se,
        covariance: cov
            .corrected
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        residual_variance: rss / (n - k) as f64,
        n,
        k,
        n_clusters: cov.n_clusters,
        loglik,
        aic,
    })
}

pub fn fit_model(panel: &Panel, spec: &DesignSpec) -> Result<RegressionFit> {
    fit_design(&build_design(panel, spec)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("x{j}")).collect()
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.sample(StandardNormal)
            }
        })
    }

    #[test]
    fn perfect_fit() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let fit = ols_fit(&y, &x, &names(2)).unwrap();
        assert_relative_eq!(fit.beta[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(fit.beta[1], 1.0, epsilon = 1e-14);
        assert!(fit.residuals.amax() < 1e-14);
    }

    #[test]
    fn symmetric_noise_recovers_line() {
        // y = 2 + 3x with ±0.5 alternating at duplicated x values.
        let xs = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
        let y = DVector::from_iterator(
            6,
            xs.iter()
                .enumerate()
                .map(|(i, &x)| 2.0 + 3.0 * x + if i % 2 == 0 { 0.5 } else { -0.5 }),
        );
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let fit = ols_fit(&y, &x, &names(2)).unwrap();
        assert_relative_eq!(fit.beta[0], 2.0, epsilon = 1e-13);
        assert_relative_eq!(fit.beta[1], 3.0, epsilon = 1e-13);
    }

    #[test]
    fn agrees_with_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_design(&mut rng, 50, 3);
        let y = DVector::from_fn(50, |_, _| rng.sample::<f64, _>(StandardNormal));
        let fit = ols_fit(&y, &x, &names(3)).unwrap();
        let oracle = (x.transpose() * &x)
            .lu()
            .solve(&(x.transpose() * &y))
            .unwrap();
        for j in 0..3 {
            assert!((fit.beta[j] - oracle[j]).abs() < 1e-10);
        }
        let orth = x.transpose() * &fit.residuals;
        assert!(orth.amax() < 1e-10);
    }

    #[test]
    fn collinear_column_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = random_design(&mut rng, 20, 3);
        let dup = x.column(1) * 2.0;
        x.set_column(2, &dup);
        let y = DVector::from_element(20, 1.0);
        match ols_fit(&y, &x, &names(3)) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["x2".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hand_sandwich() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 1.0, 2.0]);
        let fit = ols_fit(&y, &x, &names(2)).unwrap();
        let cov = cluster_covariance(&x, &fit.residuals, &[1, 1, 2, 2]).unwrap();
        assert_relative_eq!(cov.uncorrected[(0, 0)], 0.125, epsilon = 1e-14);
        assert!(cov.uncorrected[(0, 1)].abs() < 1e-14);
        assert!(cov.uncorrected[(1, 1)].abs() < 1e-14);
        assert_relative_eq!(cov.factor, 3.0, epsilon = 1e-14);
        assert_relative_eq!(
            cov.corrected[(0, 0)].sqrt(),
            0.612_372_435_695_794_5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_residuals_zero_covariance() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let cov = cluster_covariance(&x, &DVector::zeros(4), &[0, 0, 1, 1]).unwrap();
        assert_eq!(cov.corrected.amax(), 0.0);
    }

    #[test]
    fn single_cluster_rejected() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let r = DVector::from_vec(vec![0.1, -0.1, 0.2]);
        assert!(matches!(
            cluster_covariance(&x, &r, &[7, 7, 7]),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn singleton_clusters_equal_hc1() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, k) = (40, 3);
        let x = random_design(&mut rng, n, k);
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 1)] + rng.sample::<f64, _>(StandardNormal) * (1.0 + x[(i, 2)].abs())
        });
        let fit = ols_fit(&y, &x, &names(k)).unwrap();
        let cov = cluster_covariance(&x, &fit.residuals, &(0..n).collect::<Vec<_>>()).unwrap();
        // HC1: bread · X' diag(u²) X · bread · n/(n−k)
        let bread = (x.transpose() * &x).try_inverse().unwrap();
        let omega = DMatrix::from_diagonal(&fit.residuals.map(|u| u * u));
        let hc1 = &bread * x.transpose() * omega * &x * &bread * (n as f64 / (n - k) as f64);
        assert!((cov.corrected - hc1).amax() < 1e-10);
    }

    #[test]
    fn aic_guards_and_closed_form() {
        assert!(gaussian_aic(0.0, 10, 2).is_err());
        assert!(gaussian_aic(1.0, 2, 2).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_design(&mut rng, 100, 2);
        let y = DVector::from_fn(100, |i, _| {
            1.0 + 0.5 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)
        });
        let fit = ols_fit(&y, &x, &names(2)).unwrap();
        let rss = fit.residuals.norm_squared();
        let (_, aic) = gaussian_aic(rss, 100, 2).unwrap();
        let closed = 100.0 * ((2.0 * std::f64::consts::PI * rss / 100.0).ln() + 1.0) + 2.0 * 3.0;
        assert_relative_eq!(aic, closed, epsilon = 1e-10);
    }

    #[test]
    fn noise_regressor_usually_raises_aic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let reps = 200;
        let mut worse = 0;
        for _ in 0..reps {
            let x = random_design(&mut rng, 100, 3);
            let y = DVector::from_fn(100, |i, _| {
                0.3 + x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)
            });
            let small = x.columns(0, 2).into_owned();
            let a = ols_fit(&y, &small, &names(2))
                .unwrap()
                .residuals
                .norm_squared();
            let b = ols_fit(&y, &x, &names(3)).unwrap().residuals.norm_squared();
            if gaussian_aic(b, 100, 3).unwrap().1 > gaussian_aic(a, 100, 2).unwrap().1 {
                worse += 1;
            }
        }
        // P(χ²₁ < 2) ≈ 0.84.
        assert!(worse * 2 >= reps, "{worse} of {reps}");
        assert!(worse as f64 / reps as f64 > 0.75);
    }

    #[test]
    fn slopes_invariant_to_shifting_another_regressor() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_design(&mut rng, 30, 3);
        let y = DVector::from_fn(30, |i, _| {
            x[(i, 1)] - x[(i, 2)] + rng.sample::<f64, _>(StandardNormal)
        });
        let base = ols_fit(&y, &x, &names(3)).unwrap();
        let mut shifted = x.clone();
        for i in 0..30 {
            shifted[(i, 2)] += 5.0;
        }
        let alt = ols_fit(&y, &shifted, &names(3)).unwrap();
        assert!((base.beta[1] - alt.beta[1]).abs() < 1e-10);
        assert!((base.beta[2] - alt.beta[2]).abs() < 1e-10);
        assert!((alt.beta[0] - (base.beta[0] - 5.0 * base.beta[2])).abs() < 1e-9);
    }

    #[test]
    fn nested_specs() {
        let specs: Vec<Vec<Covariate>> = (1..=4)
            .map(|m| DesignSpec::model(m).unwrap().covariates())
            .collect();
        for w in specs.windows(2) {
            assert!(w[0].iter().all(|c| w[1].contains(c)));
        }
        assert_eq!(specs[3].last(), Some(&Covariate::InvMintogoal));
        let robust = DesignSpec {
            model_id: 4,
            exclude_xg: true,
        };
        assert!(!robust.covariates().contains(&Covariate::XgdiffPerMinute));
        assert!(DesignSpec::model(5).is_err());
    }
}
