//! Likelihoods of quantized observations.
//!
//! Quantizing `Y_k` to its cell index keeps `(X_k, Z_k)` a hidden Markov
//! model whose emission kernel is the cell probability
//! `G(x, S_j) = P(x + W in S_j)`. Densities are taken with respect to the
//! weighted counting measure that gives cell `j` the weight `l_j / (b - a)`,
//! so each symbol contributes `log(P(S_j) (b - a) / l_j)`. The same
//! reference-measure constant appears under both hypotheses and cancels in
//! the LLR.

use crate::error::{Error, Result};
use crate::gaussian::normal_interval;
use crate::model::{ModelParams, StateGrid};
use crate::quantizer::Quantizer;

/// Emission kernel of the quantized HMM on the state grid.
#[derive(Debug, Clone)]
pub struct QuantizedKernel {
    n_states: usize,
    n_cells: usize,
    /// Row-major `M x N`: `G(x_m, S_j)` with the edge cells absorbing the tails.
    pub g_matrix: Vec<f64>,
    /// Row-major `M x N`: `G(x_m, S_j) / l_j`.
    pub g_density: Vec<f64>,
    /// `g_density` stored cell-major for the filter's column reads.
    cell_columns: Vec<f64>,
    log_support_width: f64,
}

pub fn build_kernel(q: &Quantizer, params: &ModelParams, grid: &StateGrid) -> Result<QuantizedKernel> {
    params.validate()?;
    let m = grid.len();
    let n = q.n_cells();
    let mut g_matrix = vec![0.0; m * n];
    let mut g_density = vec![0.0; m * n];
    let mut cell_columns = vec![0.0; m * n];
    for (i, &x) in grid.nodes.iter().enumerate() {
        for j in 0..n {
            let (lo, hi) = q.clamped_cell(j);
            let p = normal_interval(lo, hi, x, params.sigma);
            g_matrix[i * n + j] = p;
            let d = p / q.lengths()[j];
            g_density[i * n + j] = d;
            cell_columns[j * m + i] = d;
        }
    }
    Ok(QuantizedKernel {
        n_states: m,
        n_cells: n,
        g_matrix,
        g_density,
        cell_columns,
        log_support_width: q.support().width().ln(),
    })
}

impl QuantizedKernel {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn g(&self, state: usize, cell: usize) -> f64 {
        self.g_matrix[state * self.n_cells + cell]
    }

    fn column(&self, cell: usize) -> &[f64] {
        &self.cell_columns[cell * self.n_states..(cell + 1) * self.n_states]
    }
}

fn check_symbols(z: &[usize], n_cells: usize) -> Result<()> {
    if z.is_empty() {
        return Err(Error::arg("symbol sequence is empty"));
    }
    if let Some(&bad) = z.iter().find(|&&s| s >= n_cells) {
        return Err(Error::arg(format!("cell index {bad} outside [0, {n_cells})")));
    }
    Ok(())
}

/// Normalized predictive state distribution of the quantized `H1` filter.
#[derive(Debug, Clone)]
pub struct DiscreteFilterState {
    pub alpha: Vec<f64>,
    /// Accumulated `log prod g_N`, i.e. without the `(b - a)` reference constant.
    pub loglik_accum: f64,
}

/// Scaled forward recursion for `log p_{1,N}`.
#[derive(Debug, Clone)]
pub struct DiscreteFilter<'a> {
    kernel: &'a QuantizedKernel,
    grid: &'a StateGrid,
    state: DiscreteFilterState,
    scratch: Vec<f64>,
}

impl<'a> DiscreteFilter<'a> {
    pub fn new(kernel: &'a QuantizedKernel, grid: &'a StateGrid) -> Result<Self> {
        if kernel.n_states() != grid.len() {
            return Err(Error::arg("kernel and state grid disagree on the number of states"));
        }
        Ok(DiscreteFilter {
            kernel,
            grid,
            state: DiscreteFilterState {
                alpha: grid.stationary.clone(),
                loglik_accum: 0.0,
            },
            scratch: vec![0.0; grid.len()],
        })
    }

    pub fn state(&self) -> &DiscreteFilterState {
        &self.state
    }

    /// Consumes one symbol; returns `log g_N`-scale predictive density of it.
    pub fn step(&mut self, z: usize) -> Result<f64> {
        let col = self.kernel.column(z);
        let alpha = &mut self.state.alpha;
        let mut total = 0.0;
        for (a, &g) in alpha.iter_mut().zip(col) {
            *a *= g;
            total += *a;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numeric(format!("filter mass {total} at symbol {z}")));
        }
        alpha.iter_mut().for_each(|a| *a /= total);
        self.grid.propagate(alpha, &mut self.scratch);
        std::mem::swap(alpha, &mut self.scratch);
        let lp = total.ln();
        self.state.loglik_accum += lp;
        Ok(lp)
    }
}

/// `log p_{1,N}(z_{0:n})` with respect to the weighted counting measure.
pub fn loglik_h1_quantized(z: &[usize], kernel: &QuantizedKernel, grid: &StateGrid) -> Result<f64> {
    check_symbols(z, kernel.n_cells())?;
    let mut f = DiscreteFilter::new(kernel, grid)?;
    for &s in z {
        f.step(s)?;
    }
    Ok(f.state().loglik_accum + z.len() as f64 * kernel.log_support_width)
}

/// Per-cell `log(P_0(S_j) (b - a) / l_j)` under `N(0, sigma^2)` noise.
pub fn h0_cell_log_densities(q: &Quantizer, params: &ModelParams) -> Vec<f64> {
    let width = q.support().width();
    (0..q.n_cells())
        .map(|j| {
            let (lo, hi) = q.clamped_cell(j);
            (normal_interval(lo, hi, 0.0, params.sigma) * width / q.lengths()[j]).ln()
        })
        .collect()
}

pub fn loglik_h0_quantized(z: &[usize], q: &Quantizer, params: &ModelParams) -> Result<f64> {
    check_symbols(z, q.n_cells())?;
    let table = h0_cell_log_densities(q, params);
    Ok(z.iter().map(|&s| table[s]).sum())
}

/// `(1/n) log p_{0,N}(z) / p_{1,N}(z)` for `n + 1 = z.len() >= 2`.
pub fn llr_quantized(
    z: &[usize],
    q: &Quantizer,
    kernel: &QuantizedKernel,
    grid: &StateGrid,
    params: &ModelParams,
) -> Result<f64> {
    if z.len() < 2 {
        return Err(Error::arg("quantized LLR needs at least two symbols"));
    }
    let h0 = loglik_h0_quantized(z, q, params)?;
    let h1 = loglik_h1_quantized(z, kernel, grid)?;
    Ok((h0 - h1) / (z.len() - 1) as f64)
}

/// Everything needed to evaluate quantized LLRs repeatedly.
#[derive(Debug, Clone)]
pub struct QuantizedModel {
    pub params: ModelParams,
    pub quantizer: Quantizer,
    pub grid: StateGrid,
    pub kernel: QuantizedKernel,
    h0_table: Vec<f64>,
}

impl QuantizedModel {
    pub fn new(params: &ModelParams, quantizer: Quantizer, grid: StateGrid) -> Result<Self> {
        let kernel = build_kernel(&quantizer, params, &grid)?;
        let h0_table = h0_cell_log_densities(&quantizer, params);
        Ok(QuantizedModel {
            params: params.clone(),
            quantizer,
            grid,
            kernel,
            h0_table,
        })
    }

    pub fn quantize(&self, y: &[f64]) -> Result<Vec<usize>> {
        self.quantizer.quantize_all(y)
    }

    pub fn llr_symbols(&self, z: &[usize]) -> Result<f64> {
        if z.len() < 2 {
            return Err(Error::arg("quantized LLR needs at least two symbols"));
        }
        check_symbols(z, self.quantizer.n_cells())?;
        let h0: f64 = z.iter().map(|&s| self.h0_table[s]).sum();
        let h1 = loglik_h1_quantized(z, &self.kernel, &self.grid)?;
        Ok((h0 - h1) / (z.len() - 1) as f64)
    }

    /// Quantizes raw observations, then evaluates the quantized LLR.
    pub fn llr(&self, y: &[f64]) -> Result<f64> {
        self.llr_symbols(&self.quantize(y)?)
    }
}
