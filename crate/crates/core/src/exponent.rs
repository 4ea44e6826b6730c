//! Error exponents and the high-rate quantization loss.
//!
//! - `K` and `K_N` are estimated as ergodic averages of the (quantized)
//!   LLR along long `H0` paths, replicated over independent seeds.
//! - `F(y) = E_0[score^2 | Y_0 = y]` is estimated by Nadaraya-Watson
//!   regression of squared window scores on the anchor observation.
//! - `D_zeta = (1/24) ∫ p0 F / zeta^2 dy` and its Hölder lower bound
//!   `(1/24) (∫ (p0 F)^{1/3} dy)^3` are evaluated by composite Simpson
//!   quadrature on the density grid.

use crate::error::{Error, Result};
use crate::gaussian::normal_interval;
use crate::likelihood::{llr, ScoreFilter};
use crate::model::{sample_path_with, Hypothesis, ModelParams, StateGrid};
use crate::quadrature::simpson;
use crate::quantized_likelihood::QuantizedModel;
use crate::quantizer::{build_quantizer, PointDensity, Quantizer};
use crate::rng::{derive_seed, label, par_map, stream_rng};
use serde::Serialize;

/// Monte Carlo estimate of an exponent, in nats per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl ExponentEstimate {
    /// Mean and standard error of the mean over replicate values.
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::arg("no replicate values"));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Ok(ExponentEstimate {
            value: mean,
            std_error: se,
            n_samples: xs.len(),
        })
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSettings {
    /// Observations per replicate path.
    pub path_len: usize,
    /// Independent replicate paths.
    pub n_paths: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the rayon default. Results do not depend on it.
    pub workers: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            path_len: 20_000,
            n_paths: 32,
            seed: 0,
            workers: 1,
        }
    }
}

impl McSettings {
    fn validate(&self, min_len: usize) -> Result<()> {
        if self.path_len < min_len {
            return Err(Error::param(
                "path_len",
                format!("need at least {min_len}, got {}", self.path_len),
            ));
        }
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "need at least one replicate"));
        }
        Ok(())
    }
}

/// `H0` replicate `i`; shared by every `K`/`K_N` estimate with the same seed.
fn h0_replicate(params: &ModelParams, mc: &McSettings, i: usize) -> Result<Vec<f64>> {
    let mut rng = stream_rng(derive_seed(mc.seed, label::H0_PATHS), i as u64);
    Ok(sample_path_with(params, Hypothesis::H0, mc.path_len, &mut rng)?.observations)
}

/// Unquantized exponent `K`: replicate mean of `L_n` on `H0` paths.
pub fn estimate_k(params: &ModelParams, mc: &McSettings) -> Result<ExponentEstimate> {
    params.validate()?;
    mc.validate(100)?;
    let vals = par_map(mc.workers, mc.n_paths, |i| llr(&h0_replicate(params, mc, i)?, params))?;
    ExponentEstimate::from_samples(&vals)
}

/// Quantized exponent `K_N` on the same `H0` paths as [`estimate_k`].
pub fn estimate_kn(
    q: &Quantizer,
    params: &ModelParams,
    grid: &StateGrid,
    mc: &McSettings,
) -> Result<ExponentEstimate> {
    let model = QuantizedModel::new(params, q.clone(), grid.clone())?;
    estimate_kn_with(&model, mc)
}

pub fn estimate_kn_with(model: &QuantizedModel, mc: &McSettings) -> Result<ExponentEstimate> {
    mc.validate(100)?;
    let vals = par_map(mc.workers, mc.n_paths, |i| {
        model.llr(&h0_replicate(&model.params, mc, i)?)
    })?;
    ExponentEstimate::from_samples(&vals)
}

/// `KL(N(0, sigma^2) || N(0, 1 + sigma^2))`, the exact exponent when `a = 0`.
pub fn k_iid_closed_form(params: &ModelParams) -> f64 {
    let s0 = params.sigma * params.sigma;
    let s1 = 1.0 + s0;
    0.5 * (s1 / s0).ln() + s0 / (2.0 * s1) - 0.5
}

/// Discrete KL over cells, the exact `K_N` when `a = 0`.
pub fn kn_iid_closed_form(q: &Quantizer, params: &ModelParams) -> Result<f64> {
    if params.a != 0.0 {
        return Err(Error::param("a", "closed-form K_N needs a = 0"));
    }
    let s1 = (1.0 + params.sigma * params.sigma).sqrt();
    let mut total = 0.0;
    for j in 0..q.n_cells() {
        let (lo, hi) = q.clamped_cell(j);
        let p0 = normal_interval(lo, hi, 0.0, params.sigma);
        let p1 = normal_interval(lo, hi, 0.0, s1);
        if p0 > 0.0 {
            total += p0 * (p0 / p1).ln();
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FEstimation {
    pub window_m: usize,
    pub window_k: usize,
    /// Kernel bandwidth; `None` selects `0.25 * sd * n^{-1/5}`.
    pub bandwidth: Option<f64>,
}

impl Default for FEstimation {
    fn default() -> Self {
        FEstimation {
            window_m: crate::likelihood::DEFAULT_WINDOW,
            window_k: crate::likelihood::DEFAULT_WINDOW,
            bandwidth: None,
        }
    }
}

/// Tabulated `F(y)` on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Kish effective sample size of the kernel weights at each grid point;
    /// zero marks an empty neighborhood whose value was copied from the
    /// nearest populated point. Infinite for closed-form tables.
    pub counts: Vec<f64>,
    pub bandwidth: f64,
    pub n_anchors: usize,
    /// Largest `|score|` seen over all anchors.
    pub max_abs_score: f64,
}

const KERNEL_CUTOFF: f64 = 8.0;

/// Nadaraya-Watson estimate of `F` from window scores on `H0` paths.
pub fn estimate_f(
    params: &ModelParams,
    settings: &FEstimation,
    eval_grid: &[f64],
    mc: &McSettings,
) -> Result<FTable> {
    params.validate()?;
    if settings.window_m == 0 || settings.window_k == 0 {
        return Err(Error::param("window", "window_m and window_k must be at least 1"));
    }
    if eval_grid.is_empty() {
        return Err(Error::arg("empty evaluation grid"));
    }
    let edge = settings.window_m.max(settings.window_k);
    mc.validate(2 * edge + 1)?;
    let filter = ScoreFilter::new(params, settings.window_m, settings.window_k)?;
    let (m, k) = (settings.window_m, settings.window_k);

    let seed = derive_seed(mc.seed, label::SCORE_PATHS);
    let per_path = par_map(mc.workers, mc.n_paths, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let y = sample_path_with(params, Hypothesis::H0, mc.path_len, &mut rng)?.observations;
        Ok((edge..mc.path_len - edge)
            .map(|t| (y[t], filter.score(&y[t - m..=t + k])))
            .collect::<Vec<_>>())
    })?;
    let mut pairs: Vec<(f64, f64)> = per_path.into_iter().flatten().collect();
    let max_abs_score = pairs.iter().fold(0.0f64, |acc, p| acc.max(p.1.abs()));
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();

    let bandwidth = match settings.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::param("bandwidth", format!("need > 0, got {h}"))),
        None => {
            let mean = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
            let sd = (pairs.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            0.25 * sd * (n as f64).powf(-0.2)
        }
    };

    let ys: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut values = vec![0.0; eval_grid.len()];
    let mut counts = vec![0.0; eval_grid.len()];
    let reach = KERNEL_CUTOFF * bandwidth;
    for (gi, &g) in eval_grid.iter().enumerate() {
        let lo = ys.partition_point(|&y| y < g - reach);
        let hi = ys.partition_point(|&y| y <= g + reach);
        let (mut sw, mut sws, mut sw2) = (0.0, 0.0, 0.0);
        for &(y, s) in &pairs[lo..hi] {
            let u = (y - g) / bandwidth;
            let w = (-0.5 * u * u).exp();
            sw += w;
            sws += w * s * s;
            sw2 += w * w;
        }
        if sw > 0.0 {
            values[gi] = sws / sw;
            counts[gi] = sw * sw / sw2;
        }
    }
    fill_empty(&mut values, &counts, eval_grid)?;
    Ok(FTable {
        grid: eval_grid.to_vec(),
        values,
        counts,
        bandwidth,
        n_anchors: n,
        max_abs_score,
    })
}

fn fill_empty(values: &mut [f64], counts: &[f64], grid: &[f64]) -> Result<()> {
    let populated: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0.0).collect();
    if populated.is_empty() {
        return Err(Error::Estimation("no anchors near any evaluation point".into()));
    }
    for i in 0..values.len() {
        if counts[i] > 0.0 {
            continue;
        }
        let pos = populated.partition_point(|&p| p < i);
        let nearest = match (pos.checked_sub(1).map(|p| populated[p]), populated.get(pos)) {
            (Some(l), Some(&r)) => {
                if grid[i] - grid[l] <= grid[r] - grid[i] {
                    l
                } else {
                    r
                }
            }
            (Some(l), None) => l,
            (None, Some(&r)) => r,
            (None, None) => unreachable!(),
        };
        values[i] = values[nearest];
    }
    Ok(())
}

/// Exact `F` for the Gaussian pair: the score is linear in the window, so
/// `E_0[score^2 | Y_0 = y] = A y^2 + B`.
pub fn f_table_closed_form(params: &ModelParams, window_m: usize, window_k: usize, grid: &[f64]) -> Result<FTable> {
    let filter = ScoreFilter::new(params, window_m, window_k)?;
    let (a, b) = filter.h0_conditional_second_moment(params.sigma * params.sigma);
    Ok(FTable {
        grid: grid.to_vec(),
        values: grid.iter().map(|&y| a * y * y + b).collect(),
        counts: vec![f64::INFINITY; grid.len()],
        bandwidth: 0.0,
        n_anchors: 0,
        max_abs_score: f64::NAN,
    })
}

/// Asymptotic loss `D_zeta`, or the marker for a non-integrable `p0 F / zeta^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DLoss {
    Finite(f64),
    Divergent,
}

impl DLoss {
    pub fn value(&self) -> Option<f64> {
        match self {
            DLoss::Finite(v) => Some(*v),
            DLoss::Divergent => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, DLoss::Divergent)
    }
}

impl std::fmt::Display for DLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DLoss::Finite(v) => write!(f, "{v:.16e}"),
            DLoss::Divergent => f.write_str("divergent"),
        }
    }
}

const DIVERGENCE_GROWTH: f64 = 1.10;

fn check_tables(grid: &[f64], f_values: &[f64], p0_values: &[f64]) -> Result<()> {
    if f_values.len() != grid.len() || p0_values.len() != grid.len() {
        return Err(Error::arg("F and p0 tables must share the density grid"));
    }
    if f_values.iter().chain(p0_values).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::arg("F and p0 must be finite and nonnegative"));
    }
    Ok(())
}

fn loss_integral(grid: &[f64], weight: &[f64], zeta: &[f64]) -> Result<DLoss> {
    let mut integrand = Vec::with_capacity(grid.len());
    for (&w, &z) in weight.iter().zip(zeta) {
        if z > 0.0 {
            integrand.push(w / (z * z));
        } else if w == 0.0 {
            integrand.push(0.0);
        } else {
            return Ok(DLoss::Divergent);
        }
    }
    let fine = simpson(grid, &integrand)?;
    // Nested coarsenings by 2 and 4. A converged integral moves by far less
    // than 10% between them; a jump means nodes are closing in on a pole.
    if (grid.len() - 1) % 4 == 0 && grid.len() >= 9 {
        let sub = |stride: usize| -> Result<f64> {
            let x: Vec<f64> = grid.iter().step_by(stride).copied().collect();
            let f: Vec<f64> = integrand.iter().step_by(stride).copied().collect();
            simpson(&x, &f)
        };
        let (coarse, mid) = (sub(4)?, sub(2)?);
        if mid > DIVERGENCE_GROWTH * coarse || fine > DIVERGENCE_GROWTH * mid {
            return Ok(DLoss::Divergent);
        }
    }
    Ok(DLoss::Finite(fine))
}

/// `D_zeta = (1/24) ∫ p0 F / zeta^2 dy` on the density grid.
pub fn compute_d(density: &PointDensity, f_values: &[f64], p0_values: &[f64]) -> Result<DLoss> {
    let grid = density.grid();
    check_tables(grid, f_values, p0_values)?;
    let weight: Vec<f64> = p0_values.iter().zip(f_values).map(|(p, f)| p * f).collect();
    Ok(match loss_integral(grid, &weight, density.values())? {
        DLoss::Finite(v) => DLoss::Finite(v / 24.0),
        DLoss::Divergent => DLoss::Divergent,
    })
}

/// `D_zeta` with the observation measure normalized to unit mass on the support.
pub fn compute_d_normalized(density: &PointDensity, f_values: &[f64], p0_values: &[f64]) -> Result<DLoss> {
    let grid = density.grid();
    check_tables(grid, f_values, p0_values)?;
    let width = density.support().width();
    let weight: Vec<f64> = p0_values.iter().zip(f_values).map(|(p, f)| width * p * f).collect();
    Ok(match loss_integral(grid, &weight, density.values())? {
        DLoss::Finite(v) => DLoss::Finite(v / width / 24.0),
        DLoss::Divergent => DLoss::Divergent,
    })
}

const CONVENTION_TOL: f64 = 1e-10;

/// Hölder lower bound `(1/24) (∫ (p0 F)^{1/3} dy)^3`, attained by the optimal density.
///
/// Cross-checked against the normalized-measure form; a disagreement beyond
/// `1e-10` relative is a numeric error.
pub fn lower_bound_d(grid: &[f64], f_values: &[f64], p0_values: &[f64]) -> Result<f64> {
    check_tables(grid, f_values, p0_values)?;
    let root: Vec<f64> = p0_values.iter().zip(f_values).map(|(p, f)| (p * f).cbrt()).collect();
    let lebesgue = simpson(grid, &root)?.powi(3) / 24.0;
    let normalized = lower_bound_d_normalized(grid, f_values, p0_values)?;
    if (lebesgue - normalized).abs() > CONVENTION_TOL * lebesgue.abs() {
        return Err(Error::Numeric(format!(
            "lower bound conventions disagree: {lebesgue} vs {normalized}"
        )));
    }
    Ok(lebesgue)
}

/// The same bound, `(b - a)^2 / 24 (∫ (p0_mu F)^{1/3} dmu)^3`, with `p0_mu`
/// the density relative to the normalized measure `mu = dy / (b - a)`.
pub fn lower_bound_d_normalized(grid: &[f64], f_values: &[f64], p0_values: &[f64]) -> Result<f64> {
    check_tables(grid, f_values, p0_values)?;
    let width = grid[grid.len() - 1] - grid[0];
    let root: Vec<f64> = p0_values
        .iter()
        .zip(f_values)
        .map(|(p, f)| (width * p * f).cbrt())
        .collect();
    let integral = simpson(grid, &root)? / width;
    Ok(width * width / 24.0 * integral.powi(3))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_cells: usize,
    pub kn: ExponentEstimate,
    /// Paired per-path `L_n - L_{n,N}`.
    pub gap: ExponentEstimate,
    pub scaled_gap: f64,
    pub scaled_gap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub k: ExponentEstimate,
    pub rows: Vec<SweepRow>,
}

fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() || n_list.iter().any(|&n| n < 2) || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("n_list", "need increasing cell counts, each >= 2"));
    }
    Ok(())
}

/// `N^2 (K - K_N)` over a list of cell counts, with common random numbers:
/// every quantizer sees the same `H0` paths as the unquantized LLR.
pub fn convergence_sweep(
    params: &ModelParams,
    density: &PointDensity,
    n_list: &[usize],
    grid: &StateGrid,
    mc: &McSettings,
) -> Result<Sweep> {
    check_n_list(n_list)?;
    mc.validate(100)?;
    let models = n_list
        .iter()
        .map(|&n| QuantizedModel::new(params, build_quantizer(density, n)?, grid.clone()))
        .collect::<Result<Vec<_>>>()?;
    // per path: [L_n, L_{n,N_1}, L_{n,N_2}, ...]
    let per_path = par_map(mc.workers, mc.n_paths, |i| {
        let y = h0_replicate(params, mc, i)?;
        let mut row = vec![llr(&y, params)?];
        for m in &models {
            row.push(m.llr(&y)?);
        }
        Ok(row)
    })?;
    let k_vals: Vec<f64> = per_path.iter().map(|r| r[0]).collect();
    let k = ExponentEstimate::from_samples(&k_vals)?;
    let rows = n_list
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let kn_vals: Vec<f64> = per_path.iter().map(|r| r[c + 1]).collect();
            let gap_vals: Vec<f64> = per_path.iter().map(|r| r[0] - r[c + 1]).collect();
            let gap = ExponentEstimate::from_samples(&gap_vals)?;
            let n2 = (n * n) as f64;
            Ok(SweepRow {
                n_cells: n,
                kn: ExponentEstimate::from_samples(&kn_vals)?,
                gap,
                scaled_gap: n2 * gap.value,
                scaled_gap_se: n2 * gap.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { k, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormRow {
    pub n_cells: usize,
    pub kn: f64,
    pub gap: f64,
    pub scaled_gap: f64,
}

/// Noise-free sweep for `a = 0`: `K` and `K_N` are Gaussian and discrete KL divergences.
pub fn convergence_sweep_closed_form(
    params: &ModelParams,
    density: &PointDensity,
    n_list: &[usize],
) -> Result<Vec<ClosedFormRow>> {
    check_n_list(n_list)?;
    let k = k_iid_closed_form(params);
    n_list
        .iter()
        .map(|&n| {
            let kn = kn_iid_closed_form(&build_quantizer(density, n)?, params)?;
            Ok(ClosedFormRow {
                n_cells: n,
                kn,
                gap: k - kn,
                scaled_gap: (n * n) as f64 * (k - kn),
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::arg("need at least two paired points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::arg("log-log fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
