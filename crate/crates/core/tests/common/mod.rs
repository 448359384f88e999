//! Independent reference computations used by the integration tests.

#![allow(dead_code)]

use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal};

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k15 = 0.0;
    let mut g7 = 0.0;
    for (i, (&x, &wk)) in GK_NODES.iter().zip(&K15_WEIGHTS).enumerate() {
        if x == 0.0 {
            let v = f(c);
            k15 += wk * v;
            g7 += G7_WEIGHTS[3] * v;
        } else {
            let v = f(c - h * x) + f(c + h * x);
            k15 += wk * v;
            if i % 2 == 1 {
                g7 += G7_WEIGHTS[i / 2] * v;
            }
        }
    }
    (k15 * h, ((k15 - g7) * h).abs())
}

/// Globally adaptive 7/15-point Gauss–Kronrod quadrature: the interval
/// with the largest error estimate is bisected until the summed estimate
/// falls below `tol`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (v, e) = gauss_kronrod(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    for _ in 0..5000 {
        if parts.iter().map(|p| p.3).sum::<f64>() <= tol {
            break;
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3))
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod(&mut f, lo, mid);
        let (v2, e2) = gauss_kronrod(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    parts.iter().map(|p| p.2).sum()
}

/// `Φ(hi) − Φ(lo)` for a standard normal, using the upper tail when both
/// bounds are positive.
pub fn normal_mass(lo: f64, hi: f64) -> f64 {
    let n = Normal::standard();
    if lo > 0.0 {
        n.sf(lo) - n.sf(hi)
    } else {
        n.cdf(hi) - n.cdf(lo)
    }
}

/// A discretised AR(1) state model with a zero-one-inflated beta emission,
/// written from its definition.
pub struct PathModel {
    pub phi: f64,
    pub sigma_s: f64,
    pub lower: f64,
    pub upper: f64,
    pub m: usize,
    pub gamma: f64,
    pub pi: f64,
    pub lambda: f64,
}

impl PathModel {
    fn edges(&self) -> Vec<f64> {
        let h = (self.upper - self.lower) / self.m as f64;
        (0..=self.m).map(|i| self.lower + i as f64 * h).collect()
    }

    fn mids(&self) -> Vec<f64> {
        self.edges()
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect()
    }

    pub fn initial(&self) -> Vec<f64> {
        let sd = self.sigma_s / (1.0 - self.phi * self.phi).sqrt();
        self.edges()
            .windows(2)
            .map(|w| normal_mass(w[0] / sd, w[1] / sd))
            .collect()
    }

    pub fn transition(&self) -> Vec<Vec<f64>> {
        let edges = self.edges();
        self.mids()
            .iter()
            .map(|&b| {
                edges
                    .windows(2)
                    .map(|w| {
                        normal_mass(
                            (w[0] - self.phi * b) / self.sigma_s,
                            (w[1] - self.phi * b) / self.sigma_s,
                        )
                    })
                    .collect()
            })
            .collect()
    }

    /// Emission density of `y` at linear predictor `eta`.
    pub fn density(&self, y: f64, eta: f64) -> f64 {
        if y == 0.0 {
            return self.pi;
        }
        if y == 1.0 {
            return self.lambda;
        }
        let mu = 1.0 / (1.0 + (-eta).exp());
        let beta = Beta::new(mu * self.gamma, (1.0 - mu) * self.gamma).unwrap();
        (1.0 - self.pi - self.lambda) * beta.pdf(y)
    }

    /// Likelihood as the sum over every state path. Each step is
    /// `(y, ν)`; `None` marks a step without emission.
    pub fn enumerate(&self, steps: &[(Option<f64>, f64)]) -> f64 {
        let delta = self.initial();
        let gamma = self.transition();
        let mids = self.mids();
        let m = self.m;
        let t = steps.len();
        let emit = |s: usize, i: usize| match steps[s].0 {
            Some(y) => self.density(y, steps[s].1 + mids[i]),
            None => 1.0,
        };
        let mut path = vec![0usize; t];
        let mut total = 0.0;
        loop {
            let mut p = delta[path[0]] * emit(0, path[0]);
            for s in 1..t {
                p *= gamma[path[s - 1]][path[s]] * emit(s, path[s]);
            }
            total += p;
            let mut pos = 0;
            loop {
                if pos == t {
                    return total;
                }
                path[pos] += 1;
                if path[pos] < m {
                    break;
                }
                path[pos] = 0;
                pos += 1;
            }
        }
    }
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let d = m[col][col];
        for v in &mut m[col] {
            *v /= d;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            let factor = row[col];
            if r != col && factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Heteroskedasticity-robust sandwich `(X'X)⁻¹ Σ x_i x_i' u_i² (X'X)⁻¹`
/// scaled by `n/(n−k)`, by explicit loops over rows.
pub fn hc1_sandwich(x: &[Vec<f64>], u: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut meat = vec![vec![0.0; k]; k];
    for (row, &ui) in x.iter().zip(u) {
        for a in 0..k {
            for b in 0..k {
                xtx[a][b] += row[a] * row[b];
                meat[a][b] += row[a] * row[b] * ui * ui;
            }
        }
    }
    let bread = invert(&xtx);
    let scale = n as f64 / (n - k) as f64;
    let mut out = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            let mut s = 0.0;
            for c in 0..k {
                for d in 0..k {
                    s += bread[a][c] * meat[c][d] * bread[d][b];
                }
            }
            out[a][b] = s * scale;
        }
    }
    out
}
