//! Truncated Gauss-Markov observation model.
//!
//! Under `H0` the observations are white noise, `Y_k = W_k` with
//! `W_k ~ N(0, sigma^2)`. Under `H1` they are a first-order autoregressive
//! state seen through the same noise,
//!
//! ```text
//! X_k = a X_{k-1} + sqrt(1 - a^2) U_k,    Y_k = X_k + W_k,
//! ```
//!
//! with the state transition restricted to `[-c, c]` so the transition
//! density is bounded away from zero and infinity. The discretized chain
//! ([`StateGrid`]) backs every quantized-observation computation.

use crate::error::{Error, Result};
use crate::gaussian::{normal_interval, std_normal_pdf};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const DEFAULT_STATE_TRUNC: f64 = 4.0;
pub const DEFAULT_STATE_GRID_SIZE: usize = 200;
/// Half-width of the default observation support, in units of `sigma`.
pub const DEFAULT_SUPPORT_SIGMAS: f64 = 10.0;

const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITER: usize = 1_000_000;
const MAX_REJECTIONS: usize = 100_000;

/// Closed observation interval `[lo, hi]`; serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let s = Support { lo, hi };
        s.validate()?;
        Ok(s)
    }

    pub fn symmetric(half_width: f64) -> Result<Self> {
        Support::new(-half_width, half_width)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo >= self.hi {
            return Err(Error::param(
                "obs_support",
                format!("need finite lo < hi, got [{}, {}]", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

impl From<[f64; 2]> for Support {
    fn from(v: [f64; 2]) -> Self {
        Support { lo: v[0], hi: v[1] }
    }
}

impl From<Support> for [f64; 2] {
    fn from(s: Support) -> Self {
        [s.lo, s.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// The AR(1)-in-noise hypothesis pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    /// State correlation coefficient, `0 <= a < 1` (`a = 0` is the i.i.d. reduction).
    pub a: f64,
    /// Observation-noise standard deviation.
    pub sigma: f64,
    /// Half-width `c` of the truncated state support `[-c, c]`.
    pub state_trunc: f64,
    /// Number of state-grid nodes.
    pub state_grid_size: usize,
    /// Quantization interval.
    pub obs_support: Support,
}

impl ModelParams {
    /// Parameters with the default truncation, grid size and `[-10 sigma, 10 sigma]` support.
    pub fn new(a: f64, sigma: f64) -> Result<Self> {
        let p = ModelParams {
            a,
            sigma,
            state_trunc: DEFAULT_STATE_TRUNC,
            state_grid_size: DEFAULT_STATE_GRID_SIZE,
            obs_support: Support {
                lo: -DEFAULT_SUPPORT_SIGMAS * sigma,
                hi: DEFAULT_SUPPORT_SIGMAS * sigma,
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_state_trunc(mut self, c: f64) -> Result<Self> {
        self.state_trunc = c;
        self.validate().map(|_| self)
    }

    pub fn with_state_grid_size(mut self, m: usize) -> Result<Self> {
        self.state_grid_size = m;
        self.validate().map(|_| self)
    }

    pub fn with_obs_support(mut self, support: Support) -> Result<Self> {
        self.obs_support = support;
        self.validate().map(|_| self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a < 1.0) {
            return Err(Error::param("a", format!("need 0 <= a < 1, got {}", self.a)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("need sigma > 0, got {}", self.sigma)));
        }
        if !(self.state_trunc > 0.0 && self.state_trunc.is_finite()) {
            return Err(Error::param(
                "state_trunc",
                format!("need c > 0, got {}", self.state_trunc),
            ));
        }
        if self.state_grid_size < 2 {
            return Err(Error::param(
                "state_grid_size",
                format!("need M >= 2, got {}", self.state_grid_size),
            ));
        }
        self.obs_support.validate()
    }

    /// Standard deviation of the state innovation, `sqrt(1 - a^2)`.
    pub fn innovation_std(&self) -> f64 {
        (1.0 - self.a * self.a).sqrt()
    }

    /// Truncated transition density `q_1(x, x')` on `[-c, c]`.
    pub fn transition_density(&self, x: f64, x_next: f64) -> f64 {
        let c = self.state_trunc;
        if x_next.abs() > c {
            return 0.0;
        }
        let s = self.innovation_std();
        let mean = self.a * x;
        let mass = normal_interval(-c, c, mean, s);
        std_normal_pdf((x_next - mean) / s) / (s * mass)
    }
}

/// Midpoint discretization of the truncated state chain.
#[derive(Debug, Clone)]
pub struct StateGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row-major `M x M` row-stochastic transition matrix.
    pub q1_matrix: Vec<f64>,
    /// Left fixed point of `q1_matrix`.
    pub stationary: Vec<f64>,
    /// `sigma^- / sigma^+` over the discretized density. May underflow to 0
    /// for `a` very close to 1; `log_rho` stays exact.
    pub rho: f64,
    pub log_rho: f64,
}

pub fn build_state_grid(params: &ModelParams) -> Result<StateGrid> {
    StateGrid::build(params)
}

impl StateGrid {
    pub fn build(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let m = params.state_grid_size;
        let c = params.state_trunc;
        let h = 2.0 * c / m as f64;
        let nodes: Vec<f64> = (0..m).map(|i| -c + (i as f64 + 0.5) * h).collect();
        let weights = vec![h; m];

        let s = params.innovation_std();
        let mut q1_matrix = vec![0.0; m * m];
        // Matrix entry / weight = exp(-z^2/2) / row_total, tracked in logs for rho.
        let mut log_min = f64::INFINITY;
        let mut log_max = f64::NEG_INFINITY;
        for (i, &x) in nodes.iter().enumerate() {
            let mean = params.a * x;
            let row = &mut q1_matrix[i * m..(i + 1) * m];
            let mut total = 0.0;
            for (j, &xn) in nodes.iter().enumerate() {
                let z = (xn - mean) / s;
                row[j] = weights[j] * (-0.5 * z * z).exp();
                total += row[j];
            }
            if !(total > 0.0) {
                return Err(Error::Numeric(format!("transition row {i} has zero mass")));
            }
            for v in row.iter_mut() {
                *v /= total;
            }
            let ln_total = total.ln();
            for &xn in nodes.iter() {
                let z = (xn - mean) / s;
                let ld = -0.5 * z * z - ln_total;
                log_min = log_min.min(ld);
                log_max = log_max.max(ld);
            }
        }
        let stationary = stationary_distribution(&q1_matrix, m)?;
        let log_rho = log_min - log_max;
        Ok(StateGrid {
            nodes,
            weights,
            q1_matrix,
            stationary,
            rho: log_rho.exp(),
            log_rho,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn q1_row(&self, i: usize) -> &[f64] {
        let m = self.len();
        &self.q1_matrix[i * m..(i + 1) * m]
    }

    /// Discretized transition density `q_1(x_i, x_j)` (matrix entry over quadrature weight).
    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.q1_row(i)[j] / self.weights[j]
    }

    /// Dobrushin contraction coefficient `1 - sigma^-/sigma^+` of the state chain.
    pub fn contraction(&self) -> f64 {
        1.0 - self.rho
    }

    /// `out = alpha^T Q_1`.
    pub fn propagate(&self, alpha: &[f64], out: &mut [f64]) {
        propagate(&self.q1_matrix, self.len(), alpha, out);
    }
}

fn propagate(q: &[f64], m: usize, alpha: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, &ai) in alpha.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let row = &q[i * m..(i + 1) * m];
        for (o, &qij) in out.iter_mut().zip(row) {
            *o += ai * qij;
        }
    }
}

/// Power iteration for the left fixed point of a positive stochastic matrix.
fn stationary_distribution(q: &[f64], m: usize) -> Result<Vec<f64>> {
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    for _ in 0..STATIONARY_MAX_ITER {
        propagate(q, m, &pi, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if residual < STATIONARY_TOL {
            return Ok(pi);
        }
    }
    Err(Error::Estimation(format!(
        "stationary distribution did not reach residual {STATIONARY_TOL} within {STATIONARY_MAX_ITER} iterations"
    )))
}

/// An observation block, with the hidden states when they exist (`H1` only).
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub hypothesis: Hypothesis,
    pub states: Option<Vec<f64>>,
    pub observations: Vec<f64>,
}

/// Samples `len` observations under `hypothesis` from ChaCha stream 0 of `seed`.
pub fn sample_path(
    params: &ModelParams,
    hypothesis: Hypothesis,
    len: usize,
    seed: u64,
) -> Result<PathSample> {
    let mut rng = crate::rng::stream_rng(seed, 0);
    sample_path_with(params, hypothesis, len, &mut rng)
}

pub fn sample_path_with<R: Rng + ?Sized>(
    params: &ModelParams,
    hypothesis: Hypothesis,
    len: usize,
    rng: &mut R,
) -> Result<PathSample> {
    sample_path_from_normals(params, hypothesis, len, || rng.sample(StandardNormal))
}

/// Builds a path from a caller-supplied stream of standard normal draws.
///
/// State draws come first at each step, then the noise draw. The initial
/// state is `N(0, 1)` restricted to `[-c, c]`; each later state is the AR(1)
/// step with its innovation rejection-sampled so the state stays in
/// `[-c, c]`. Rejection depends only on `|.|`-symmetric events, so negating
/// every draw negates the whole path.
pub fn sample_path_from_normals<F: FnMut() -> f64>(
    params: &ModelParams,
    hypothesis: Hypothesis,
    len: usize,
    mut normal: F,
) -> Result<PathSample> {
    params.validate()?;
    if len == 0 {
        return Err(Error::arg("path length must be at least 1"));
    }
    let sigma = params.sigma;
    match hypothesis {
        Hypothesis::H0 => {
            let observations = (0..len).map(|_| sigma * normal()).collect();
            Ok(PathSample {
                hypothesis,
                states: None,
                observations,
            })
        }
        Hypothesis::H1 => {
            let c = params.state_trunc;
            let a = params.a;
            let s = params.innovation_std();
            let mut states = Vec::with_capacity(len);
            let mut observations = Vec::with_capacity(len);
            let mut x = draw_truncated(c, &mut || normal(), |u| u)?;
            for k in 0..len {
                if k > 0 {
                    let prev = x;
                    x = draw_truncated(c, &mut || normal(), |u| a * prev + s * u)?;
                }
                states.push(x);
                observations.push(x + sigma * normal());
            }
            Ok(PathSample {
                hypothesis,
                states: Some(states),
                observations,
            })
        }
    }
}

fn draw_truncated<F, G>(c: f64, normal: &mut F, map: G) -> Result<f64>
where
    F: FnMut() -> f64,
    G: Fn(f64) -> f64,
{
    for _ in 0..MAX_REJECTIONS {
        let x = map(normal());
        if x.abs() <= c {
            return Ok(x);
        }
    }
    Err(Error::Numeric(format!(
        "truncated state draw rejected {MAX_REJECTIONS} times"
    )))
}
