//! Tabulated-function quadrature on (possibly nonuniform) grids.

use crate::error::{Error, Result};

fn check_table(x: &[f64], f: &[f64]) -> Result<()> {
    if x.len() != f.len() {
        return Err(Error::arg(format!(
            "grid has {} points but table has {}",
            x.len(),
            f.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::arg("quadrature needs at least two grid points"));
    }
    Ok(())
}

pub fn trapezoid(x: &[f64], f: &[f64]) -> Result<f64> {
    check_table(x, f)?;
    Ok(x.windows(2)
        .zip(f.windows(2))
        .map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1]))
        .sum())
}

/// Running trapezoid integral, starting at 0 on `x[0]`.
pub fn cumulative_trapezoid(x: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    check_table(x, f)?;
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(acc);
    for (xs, fs) in x.windows(2).zip(f.windows(2)) {
        acc += 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1]);
        out.push(acc);
    }
    Ok(out)
}

/// Composite Simpson rule; the grid must have an odd number of points.
///
/// Each pair of consecutive intervals `(h0, h1)` is integrated with the
/// three-point rule exact for quadratics, which reduces to the classical
/// 1-4-1 weights on uniform grids.
pub fn simpson(x: &[f64], f: &[f64]) -> Result<f64> {
    check_table(x, f)?;
    if x.len() % 2 == 0 {
        return Err(Error::arg(format!(
            "Simpson rule needs an odd number of points, got {}",
            x.len()
        )));
    }
    let mut total = 0.0;
    for i in (0..x.len() - 2).step_by(2) {
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        let s = h0 + h1;
        total += s / 6.0
            * ((2.0 - h1 / h0) * f[i] + s * s / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
    }
    Ok(total)
}

/// Uniform grid of `n` points spanning `[lo, hi]`, endpoints exact.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    debug_assert!(n >= 2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
        .collect()
}
