//! Exact (unquantized) likelihoods of the Gauss-Markov model.
//!
//! `H1` likelihoods run a scalar innovations filter on the untruncated
//! linear-Gaussian model, started from the stationary state law `N(0, 1)`.
//! The score function is linear in the window for this model, so
//! [`ScoreFilter`] precomputes its weights once per window shape.

use crate::error::{Error, Result};
use crate::gaussian::normal_logpdf;
use crate::model::ModelParams;

pub const DEFAULT_WINDOW: usize = 30;

fn check_observations(y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::arg("observation sequence is empty"));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::arg(format!("observation {i} is not finite ({})", y[i])));
    }
    Ok(())
}

/// `log p_0(y_{0:n})`: i.i.d. `N(0, sigma^2)` observations.
pub fn loglik_h0(y: &[f64], params: &ModelParams) -> Result<f64> {
    check_observations(y)?;
    let var = params.sigma * params.sigma;
    Ok(y.iter().map(|&v| normal_logpdf(v, 0.0, var)).sum())
}

/// One-step predictive state of the `H1` innovations filter.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationsFilterState {
    /// `E[X_k | Y_{0:k-1}]`.
    pub pred_mean: f64,
    /// `Var[X_k | Y_{0:k-1}]`.
    pub pred_var: f64,
    /// `log p_1(Y_{0:k-1})` accumulated so far.
    pub loglik_accum: f64,
}

#[derive(Debug, Clone)]
pub struct InnovationsFilter {
    a: f64,
    noise_var: f64,
    innov_var: f64,
    state: InnovationsFilterState,
}

impl InnovationsFilter {
    pub fn new(params: &ModelParams) -> Self {
        InnovationsFilter {
            a: params.a,
            noise_var: params.sigma * params.sigma,
            innov_var: 1.0 - params.a * params.a,
            state: InnovationsFilterState {
                pred_mean: 0.0,
                pred_var: 1.0,
                loglik_accum: 0.0,
            },
        }
    }

    pub fn state(&self) -> &InnovationsFilterState {
        &self.state
    }

    /// `log p_1(y | past)` without consuming `y`.
    pub fn predictive_logpdf(&self, y: f64) -> f64 {
        normal_logpdf(y, self.state.pred_mean, self.state.pred_var + self.noise_var)
    }

    /// Consumes one observation; returns its predictive log-density.
    pub fn step(&mut self, y: f64) -> f64 {
        let st = &mut self.state;
        let s = st.pred_var + self.noise_var;
        let e = y - st.pred_mean;
        let lp = normal_logpdf(e, 0.0, s);
        st.loglik_accum += lp;
        let gain = st.pred_var / s;
        let filt_mean = st.pred_mean + gain * e;
        let filt_var = st.pred_var * self.noise_var / s;
        st.pred_mean = self.a * filt_mean;
        st.pred_var = self.a * self.a * filt_var + self.innov_var;
        lp
    }
}

/// `log p_1(y_{0:n})` via the chain rule over one-step predictive densities.
pub fn loglik_h1(y: &[f64], params: &ModelParams) -> Result<f64> {
    check_observations(y)?;
    let mut f = InnovationsFilter::new(params);
    for &v in y {
        f.step(v);
    }
    Ok(f.state().loglik_accum)
}

/// `log p_1(y | past)`; an empty `past` gives the stationary marginal.
pub fn conditional_loglik_h1(past: &[f64], y: f64, params: &ModelParams) -> Result<f64> {
    if !past.is_empty() {
        check_observations(past)?;
    }
    check_observations(&[y])?;
    let mut f = InnovationsFilter::new(params);
    for &v in past {
        f.step(v);
    }
    Ok(f.predictive_logpdf(y))
}

/// Normalized LLR `(1/n) log p_0(y_{0:n}) / p_1(y_{0:n})` for `n + 1 = y.len()`.
///
/// A single observation (`n = 0`) returns the unnormalized log-ratio.
pub fn llr(y: &[f64], params: &ModelParams) -> Result<f64> {
    let ratio = loglik_h0(y, params)? - loglik_h1(y, params)?;
    let n = y.len() - 1;
    Ok(if n == 0 { ratio } else { ratio / n as f64 })
}

/// Dense `H1` covariance of a window: `sigma^2 I + (a^{|i-j|})`.
pub fn h1_covariance(params: &ModelParams, len: usize) -> Vec<f64> {
    let s2 = params.sigma * params.sigma;
    let mut cov = vec![0.0; len * len];
    for i in 0..len {
        for j in 0..len {
            let lag = i.abs_diff(j) as i32;
            cov[i * len + j] = params.a.powi(lag) + if i == j { s2 } else { 0.0 };
        }
    }
    cov
}

/// In-place lower Cholesky factor of a row-major SPD matrix.
fn cholesky(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Numeric(format!("matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Ok(a)
}

fn cholesky_solve(l: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut z = rhs.to_vec();
    for i in 0..n {
        let mut v = z[i];
        for k in 0..i {
            v -= l[i * n + k] * z[k];
        }
        z[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = z[i];
        for k in i + 1..n {
            v -= l[k * n + i] * z[k];
        }
        z[i] = v / l[i * n + i];
    }
    z
}

/// Value of `d/dy_0 log(p_0/p_1)` on a window `Y_{-m:k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScore {
    pub m: usize,
    pub k: usize,
    pub score: f64,
}

/// Score function on windows of shape `[-m, k]`.
///
/// For the Gaussian pair the derivative is linear in the window:
/// `-y_0/sigma^2 + [Sigma_1^{-1} y]_0`, and the `H1` part is the dot product
/// of `y` with row `m` of `Sigma_1^{-1}`.
#[derive(Debug, Clone)]
pub struct ScoreFilter {
    m: usize,
    k: usize,
    inv_noise_var: f64,
    h1_weights: Vec<f64>,
}

impl ScoreFilter {
    pub fn new(params: &ModelParams, m: usize, k: usize) -> Result<Self> {
        params.validate()?;
        let len = m + k + 1;
        let l = cholesky(h1_covariance(params, len), len)?;
        let mut e = vec![0.0; len];
        e[m] = 1.0;
        let h1_weights = cholesky_solve(&l, len, &e);
        Ok(ScoreFilter {
            m,
            k,
            inv_noise_var: 1.0 / (params.sigma * params.sigma),
            h1_weights,
        })
    }

    pub fn window_len(&self) -> usize {
        self.m + self.k + 1
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Row `m` of `Sigma_1^{-1}`.
    pub fn h1_weights(&self) -> &[f64] {
        &self.h1_weights
    }

    /// Score on `window`, which must hold exactly `m + k + 1` values with `y_0` at index `m`.
    pub fn score(&self, window: &[f64]) -> f64 {
        debug_assert_eq!(window.len(), self.window_len());
        let h1: f64 = self.h1_weights.iter().zip(window).map(|(w, y)| w * y).sum();
        h1 - window[self.m] * self.inv_noise_var
    }

    /// `E_0[score^2 | Y_0 = y] = A y^2 + B` under white `H0` noise.
    ///
    /// Returns `(A, B)`; a closed-form cross-check for the kernel-regression estimate.
    pub fn h0_conditional_second_moment(&self, noise_var: f64) -> (f64, f64) {
        let own = self.h1_weights[self.m] - self.inv_noise_var;
        let rest: f64 = self
            .h1_weights
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.m)
            .map(|(_, w)| w * w)
            .sum();
        (own * own, noise_var * rest)
    }
}

/// Score of a single window with `y_0` at index `m`.
pub fn window_score(window: &[f64], m: usize, params: &ModelParams) -> Result<WindowScore> {
    check_observations(window)?;
    if m >= window.len() {
        return Err(Error::arg(format!(
            "anchor index {m} outside window of length {}",
            window.len()
        )));
    }
    let k = window.len() - m - 1;
    let f = ScoreFilter::new(params, m, k)?;
    Ok(WindowScore {
        m,
        k,
        score: f.score(window),
    })
}
