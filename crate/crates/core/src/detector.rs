//! Finite-`n` Neyman-Pearson test: threshold calibration at level `alpha`
//! and Monte Carlo miss probabilities.
//!
//! The test rejects `H0` when the normalized LLR falls below the threshold.
//! Trial `i` at block length `n` draws from a seed stream fixed by
//! `(seed, role, n, i)`, so two statistics evaluated with the same settings
//! see the same observation blocks.

use crate::error::{Error, Result};
use crate::exponent::{estimate_kn_with, ExponentEstimate, McSettings};
use crate::likelihood::llr;
use crate::model::{sample_path_with, Hypothesis, ModelParams, StateGrid};
use crate::quantized_likelihood::QuantizedModel;
use crate::quantizer::Quantizer;
use crate::rng::{derive_seed, label, par_map, stream_rng};
use serde::Serialize;

/// A normalized LLR evaluated on raw observation blocks.
pub trait LlrStatistic: Sync {
    fn params(&self) -> &ModelParams;
    fn llr(&self, y: &[f64]) -> Result<f64>;
}

/// The LLR of the unquantized observations.
#[derive(Debug, Clone)]
pub struct Unquantized(pub ModelParams);

impl LlrStatistic for Unquantized {
    fn params(&self) -> &ModelParams {
        &self.0
    }

    fn llr(&self, y: &[f64]) -> Result<f64> {
        llr(y, &self.0)
    }
}

impl LlrStatistic for QuantizedModel {
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn llr(&self, y: &[f64]) -> Result<f64> {
        QuantizedModel::llr(self, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialSettings {
    pub n_trials: usize,
    pub seed: u64,
    pub workers: usize,
}

impl TrialSettings {
    fn validate(&self) -> Result<()> {
        if self.n_trials < 100 {
            return Err(Error::param("n_trials", format!("need at least 100, got {}", self.n_trials)));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("need 0 < alpha < 1, got {alpha}")));
    }
    Ok(())
}

/// LLRs of `n_trials` blocks of `n + 1` observations drawn under `hyp`.
pub fn trial_llrs<S: LlrStatistic + ?Sized>(
    stat: &S,
    hyp: Hypothesis,
    n: usize,
    role: u64,
    trials: &TrialSettings,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("n", "need at least one transition"));
    }
    let seed = derive_seed(derive_seed(trials.seed, role), n as u64);
    par_map(trials.workers, trials.n_trials, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let y = sample_path_with(stat.params(), hyp, n + 1, &mut rng)?.observations;
        stat.llr(&y)
    })
}

/// Conservative lower-tail order statistic: `sorted[floor(alpha * T)]`.
///
/// At most `floor(alpha * T)` of the values lie strictly below it.
pub fn lower_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::Calibration("no usable LLR values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::Calibration("all LLR values are equal".into()));
    }
    let idx = ((alpha * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    Ok(sorted[idx])
}

/// Threshold with empirical false-alarm rate at most `alpha` on fresh `H0` blocks.
pub fn calibrate_threshold<S: LlrStatistic + ?Sized>(
    stat: &S,
    n: usize,
    alpha: f64,
    trials: &TrialSettings,
) -> Result<f64> {
    check_alpha(alpha)?;
    trials.validate()?;
    let h0 = trial_llrs(stat, Hypothesis::H0, n, label::CALIBRATION, trials)?;
    lower_quantile(&h0, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MissEstimate {
    pub miss_prob: f64,
    /// Binomial standard error `sqrt(p (1 - p) / T)`.
    pub std_error: f64,
    pub misses: usize,
    pub n_trials: usize,
    /// Rule-of-three bound `3 / T`, present only when no miss was observed.
    pub upper_bound: Option<f64>,
}

/// Fraction of `H1` blocks whose LLR is at or above the threshold.
pub fn estimate_miss<S: LlrStatistic + ?Sized>(
    stat: &S,
    n: usize,
    threshold: f64,
    trials: &TrialSettings,
) -> Result<MissEstimate> {
    trials.validate()?;
    let h1 = trial_llrs(stat, Hypothesis::H1, n, label::MISS, trials)?;
    Ok(miss_from_llrs(&h1, threshold))
}

fn miss_from_llrs(h1: &[f64], threshold: f64) -> MissEstimate {
    let t = h1.len();
    let misses = h1.iter().filter(|&&v| v >= threshold).count();
    let p = misses as f64 / t as f64;
    MissEstimate {
        miss_prob: p,
        std_error: (p * (1.0 - p) / t as f64).sqrt(),
        misses,
        n_trials: t,
        upper_bound: (misses == 0).then(|| 3.0 / t as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NpTestResult {
    pub alpha: f64,
    pub threshold: f64,
    pub miss_prob: f64,
    pub miss_std_error: f64,
    pub n_sensors: usize,
    pub n_trials: usize,
    /// False-alarm rate on held-out `H0` blocks.
    pub false_alarm: f64,
    /// `-(1/n) ln beta`; with zero misses, the value implied by the `3 / T` bound.
    pub slope: f64,
    /// Delta-method error of the slope; `NaN` with zero misses.
    pub slope_std_error: f64,
    pub zero_miss: bool,
}

/// Calibrates at level `alpha`, then measures miss and held-out false-alarm rates.
pub fn run_np_test<S: LlrStatistic + ?Sized>(
    stat: &S,
    n: usize,
    alpha: f64,
    trials: &TrialSettings,
) -> Result<NpTestResult> {
    let threshold = calibrate_threshold(stat, n, alpha, trials)?;
    let miss = estimate_miss(stat, n, threshold, trials)?;
    let holdout = trial_llrs(stat, Hypothesis::H0, n, label::HOLDOUT, trials)?;
    let false_alarm = holdout.iter().filter(|&&v| v < threshold).count() as f64 / holdout.len() as f64;
    let nf = n as f64;
    let t = trials.n_trials as f64;
    let (slope, slope_std_error) = match miss.upper_bound {
        Some(bound) => (-bound.ln() / nf, f64::NAN),
        None => {
            let b = miss.miss_prob;
            (-b.ln() / nf, ((1.0 - b) / (b * t)).sqrt() / nf)
        }
    };
    Ok(NpTestResult {
        alpha,
        threshold,
        miss_prob: miss.miss_prob,
        miss_std_error: miss.std_error,
        n_sensors: n,
        n_trials: trials.n_trials,
        false_alarm,
        slope,
        slope_std_error,
        zero_miss: miss.misses == 0,
    })
}

/// [`run_np_test`] over several block lengths.
pub fn np_sweep<S: LlrStatistic + ?Sized>(
    stat: &S,
    n_list: &[usize],
    alpha: f64,
    trials: &TrialSettings,
) -> Result<Vec<NpTestResult>> {
    n_list.iter().map(|&n| run_np_test(stat, n, alpha, trials)).collect()
}

/// Smallest `n / N` ratio treated as inside the `n >> N` regime.
pub const REGIME_RATIO: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRow {
    pub result: NpTestResult,
    /// `n >= REGIME_RATIO * N`; outside it the exponential approximation is not expected to hold.
    pub in_regime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCheck {
    pub n_cells: usize,
    pub kn: ExponentEstimate,
    pub rows: Vec<GapRow>,
}

/// Quantized NP test across `n_list`, reported next to the ergodic `K_N` estimate.
pub fn exponent_gap_check(
    q: &Quantizer,
    params: &ModelParams,
    grid: &StateGrid,
    alpha: f64,
    n_list: &[usize],
    trials: &TrialSettings,
    mc: &McSettings,
) -> Result<GapCheck> {
    let model = QuantizedModel::new(params, q.clone(), grid.clone())?;
    let kn = estimate_kn_with(&model, mc)?;
    let n_cells = q.n_cells();
    let rows = n_list
        .iter()
        .map(|&n| {
            Ok(GapRow {
                result: run_np_test(&model, n, alpha, trials)?,
                in_regime: n >= REGIME_RATIO * n_cells,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GapCheck { n_cells, kn, rows })
}
