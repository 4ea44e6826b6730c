//! Point densities and companding scalar quantizers.
//!
//! A [`PointDensity`] is tabulated on a grid spanning the quantization
//! support and integrates to one in plain `dy`. [`build_quantizer`] places
//! the `N + 1` cell edges at the equal-mass quantiles of that density, so
//! each cell carries mass `1/N` and the specific point densities
//! `1/(N l_j)` approach the density as `N` grows.

use crate::error::{Error, Result};
use crate::gaussian::normal_pdf;
use crate::model::{ModelParams, Support};
use crate::quadrature::{cumulative_trapezoid, trapezoid, uniform_grid};
use serde::{Deserialize, Serialize};

/// Default number of grid points for tabulated densities; `4096` intervals.
pub const DEFAULT_DENSITY_GRID: usize = 4097;

const NORMALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PointDensityDoc", into = "PointDensityDoc")]
pub struct PointDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDensityDoc {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<PointDensityDoc> for PointDensity {
    type Error = Error;

    fn try_from(doc: PointDensityDoc) -> Result<Self> {
        PointDensity::new(doc.grid, doc.values)
    }
}

impl From<PointDensity> for PointDensityDoc {
    fn from(d: PointDensity) -> Self {
        PointDensityDoc {
            grid: d.grid,
            values: d.values,
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::arg("density grid needs at least two points"));
    }
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::arg("density grid has non-finite points"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::arg("density grid must be strictly increasing"));
    }
    Ok(())
}

impl PointDensity {
    /// Checked constructor: the table must already integrate to one.
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(Error::arg(format!(
                "density grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg("density values must be finite and nonnegative"));
        }
        let mass = trapezoid(&grid, &values)?;
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::arg(format!("density integrates to {mass}, not 1")));
        }
        Ok(PointDensity { grid, values })
    }

    /// Normalizes a nonnegative table by its trapezoid integral.
    pub fn from_unnormalized(grid: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        check_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(Error::arg("grid and values differ in length"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg("density values must be finite and nonnegative"));
        }
        let mass = trapezoid(&grid, &values)?;
        if !(mass > 0.0) {
            return Err(Error::DegenerateDensity("table integrates to zero".into()));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(PointDensity { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> Support {
        Support {
            lo: self.grid[0],
            hi: *self.grid.last().unwrap(),
        }
    }

    /// Linear interpolation; zero outside the grid.
    pub fn eval(&self, y: f64) -> f64 {
        let g = &self.grid;
        if !(y >= g[0] && y <= *g.last().unwrap()) {
            return 0.0;
        }
        let i = g.partition_point(|&x| x <= y).clamp(1, g.len() - 1);
        let t = (y - g[i - 1]) / (g[i] - g[i - 1]);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("density serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))
    }
}

/// Marginal `H0` density `N(0, sigma^2)` on `grid`.
pub fn h0_marginal_table(params: &ModelParams, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&y| normal_pdf(y, 0.0, params.sigma)).collect()
}

pub fn density_uniform(support: Support, grid_size: usize) -> Result<PointDensity> {
    support.validate()?;
    if grid_size < 2 {
        return Err(Error::param("grid_size", "need at least two points"));
    }
    let grid = uniform_grid(support.lo, support.hi, grid_size);
    let values = vec![1.0 / support.width(); grid_size];
    Ok(PointDensity { grid, values })
}

/// `(d/dy log(p0/p1))^2` for the two Gaussian marginals `N(0, s^2)` and `N(0, 1 + s^2)`.
pub fn iid_score_second_moment(params: &ModelParams, y: f64) -> f64 {
    let s2 = params.sigma * params.sigma;
    let d = y / (s2 * (1.0 + s2));
    d * d
}

/// Point density designed from the marginals alone, as if observations were i.i.d.
///
/// Depends on `sigma` only, never on `a`, and vanishes at `y = 0`.
pub fn density_iid(params: &ModelParams, grid_size: usize) -> Result<PointDensity> {
    params.validate()?;
    if grid_size < 2 {
        return Err(Error::param("grid_size", "need at least two points"));
    }
    let s = params.obs_support;
    let grid = uniform_grid(s.lo, s.hi, grid_size);
    let p0 = h0_marginal_table(params, &grid);
    let f: Vec<f64> = grid.iter().map(|&y| iid_score_second_moment(params, y)).collect();
    density_optimal(&grid, &f, &p0)
}

/// `zeta(y) ∝ [p0(y) F(y)]^{1/3}`, the loss-minimizing point density for `F`.
pub fn density_optimal(grid: &[f64], f_values: &[f64], p0_values: &[f64]) -> Result<PointDensity> {
    check_grid(grid)?;
    if f_values.len() != grid.len() || p0_values.len() != grid.len() {
        return Err(Error::arg("F and p0 tables must share the density grid"));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (&f, &p) in f_values.iter().zip(p0_values) {
        if !(f.is_finite() && p.is_finite() && f >= 0.0 && p >= 0.0) {
            return Err(Error::arg("F and p0 must be finite and nonnegative"));
        }
        values.push((p * f).cbrt());
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateDensity("p0 * F vanishes on the whole grid".into()));
    }
    PointDensity::from_unnormalized(grid.to_vec(), values)
}

/// An `N`-cell scalar quantizer on a closed support.
///
/// Cells are right-open except the last; observations outside the support
/// fall into the edge cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuantizerDoc", into = "QuantizerDoc")]
pub struct Quantizer {
    support: Support,
    boundaries: Vec<f64>,
    reps: Vec<f64>,
    lengths: Vec<f64>,
    specific_density: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantizerDoc {
    support: Support,
    boundaries: Vec<f64>,
    reps: Vec<f64>,
}

impl TryFrom<QuantizerDoc> for Quantizer {
    type Error = Error;

    fn try_from(doc: QuantizerDoc) -> Result<Self> {
        Quantizer::with_reps(doc.support, doc.boundaries, doc.reps)
    }
}

impl From<Quantizer> for QuantizerDoc {
    fn from(q: Quantizer) -> Self {
        QuantizerDoc {
            support: q.support,
            boundaries: q.boundaries,
            reps: q.reps,
        }
    }
}

impl Quantizer {
    /// Quantizer with representatives at the cell centers.
    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        let reps = boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let support = match (boundaries.first(), boundaries.last()) {
            (Some(&lo), Some(&hi)) => Support { lo, hi },
            _ => return Err(Error::arg("quantizer needs at least two boundaries")),
        };
        Quantizer::with_reps(support, boundaries, reps)
    }

    pub fn with_reps(support: Support, boundaries: Vec<f64>, reps: Vec<f64>) -> Result<Self> {
        support.validate()?;
        if boundaries.len() < 2 {
            return Err(Error::arg("quantizer needs at least two boundaries"));
        }
        if boundaries.iter().any(|b| !b.is_finite())
            || boundaries.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::arg("boundaries must be finite and strictly increasing"));
        }
        if boundaries[0] != support.lo || *boundaries.last().unwrap() != support.hi {
            return Err(Error::arg("first and last boundaries must equal the support"));
        }
        let n = boundaries.len() - 1;
        if reps.len() != n {
            return Err(Error::arg(format!("{} representatives for {n} cells", reps.len())));
        }
        for (j, (&r, w)) in reps.iter().zip(boundaries.windows(2)).enumerate() {
            if !(r > w[0] && r < w[1]) {
                return Err(Error::arg(format!("representative {j} ({r}) lies outside its cell")));
            }
        }
        let lengths: Vec<f64> = boundaries.windows(2).map(|w| w[1] - w[0]).collect();
        let specific_density = lengths.iter().map(|l| 1.0 / (n as f64 * l)).collect();
        Ok(Quantizer {
            support,
            boundaries,
            reps,
            lengths,
            specific_density,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.reps.len()
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn reps(&self) -> &[f64] {
        &self.reps
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn specific_density(&self) -> &[f64] {
        &self.specific_density
    }

    /// Cell index of `y`.
    pub fn quantize(&self, y: f64) -> Result<usize> {
        if y.is_nan() {
            return Err(Error::arg("cannot quantize NaN"));
        }
        let interior = &self.boundaries[1..self.boundaries.len() - 1];
        Ok(interior.partition_point(|&b| b <= y))
    }

    pub fn quantize_all(&self, ys: &[f64]) -> Result<Vec<usize>> {
        ys.iter().map(|&y| self.quantize(y)).collect()
    }

    /// Cell `j` as `(lo, hi)` with the edge cells extended to infinity.
    pub fn clamped_cell(&self, j: usize) -> (f64, f64) {
        let n = self.n_cells();
        let lo = if j == 0 { f64::NEG_INFINITY } else { self.boundaries[j] };
        let hi = if j + 1 == n { f64::INFINITY } else { self.boundaries[j + 1] };
        (lo, hi)
    }

    /// Same cells, relabeled representatives (any interior points).
    pub fn relabel(&self, reps: Vec<f64>) -> Result<Self> {
        Quantizer::with_reps(self.support, self.boundaries.clone(), reps)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("quantizer serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Decode(e.to_string()))
    }
}

/// Companding quantizer: edges at the `j/N` quantiles of `density`.
///
/// The density is piecewise linear between grid points, so its cumulative
/// integral is piecewise quadratic and each quantile is solved exactly
/// within its grid interval.
pub fn build_quantizer(density: &PointDensity, n_cells: usize) -> Result<Quantizer> {
    if n_cells == 0 {
        return Err(Error::param("n_cells", "need at least one cell"));
    }
    let grid = density.grid();
    let vals = density.values();
    let cum = cumulative_trapezoid(grid, vals)?;
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::DegenerateDensity("density has zero mass".into()));
    }
    let flat = |s: usize| vals[s] == 0.0 && vals[s + 1] == 0.0;
    let n_seg = grid.len() - 1;
    let level_tol = 1e-12 * total;

    let mut boundaries = Vec::with_capacity(n_cells + 1);
    boundaries.push(grid[0]);
    for j in 1..n_cells {
        let target = total * j as f64 / n_cells as f64;
        let seg = cum[1..].partition_point(|&c| c < target).min(n_seg - 1);
        if (cum[seg + 1] - target).abs() <= level_tol && seg + 1 < n_seg && flat(seg + 1) {
            return Err(Error::AmbiguousBoundary {
                index: j,
                level: j as f64 / n_cells as f64,
            });
        }
        let h = grid[seg + 1] - grid[seg];
        let f0 = vals[seg];
        let slope = (vals[seg + 1] - f0) / h;
        let r = (target - cum[seg]).max(0.0);
        // Solve f0 t + slope t^2 / 2 = r with the cancellation-free root.
        let disc = (f0 * f0 + 2.0 * slope * r).max(0.0);
        let denom = f0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        boundaries.push(grid[seg] + t.clamp(0.0, h));
    }
    boundaries.push(*grid.last().unwrap());
    if boundaries.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Numeric(
            "companding produced coincident boundaries; refine the density grid".into(),
        ));
    }
    Quantizer::from_boundaries(boundaries)
}
