//! The runnable experiments. Each returns its tables plus summary lines;
//! writing them out is left to the caller.

use crate::config::{ExperimentConfig, ExperimentKind, FMethod, Strategy};
use crate::output::{Cell, Table};
use hmq_core::detector::{exponent_gap_check, np_sweep, TrialSettings, Unquantized};
use hmq_core::exponent::{
    compute_d, convergence_sweep, convergence_sweep_closed_form, estimate_f, estimate_k, f_table_closed_form,
    lower_bound_d, FEstimation, FTable, McSettings,
};
use hmq_core::quadrature::uniform_grid;
use hmq_core::quantizer::{build_quantizer, density_iid, density_optimal, density_uniform, h0_marginal_table};
use hmq_core::{ModelParams, PointDensity, StateGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> hmq_core::Result<Outcome> {
    match cfg.experiment {
        ExperimentKind::Fig1Densities => fig1_densities(cfg),
        ExperimentKind::Fig2LossVsA => fig2_loss_vs_a(cfg),
        ExperimentKind::ExponentSweep => exponent_sweep(cfg),
        ExperimentKind::NpTest => np_test(cfg),
    }
}

fn mc_settings(cfg: &ExperimentConfig) -> McSettings {
    McSettings {
        path_len: cfg.mc.path_len,
        n_paths: cfg.mc.n_paths,
        seed: cfg.mc.seed,
        workers: cfg.mc.workers,
    }
}

fn params_for(cfg: &ExperimentConfig, a: f64) -> hmq_core::Result<ModelParams> {
    cfg.model_params_for(a)
        .map_err(|e| hmq_core::Error::Argument(e.to_string()))
}

fn density_grid(cfg: &ExperimentConfig, params: &ModelParams) -> Vec<f64> {
    uniform_grid(params.obs_support.lo, params.obs_support.hi, cfg.f_estimation.eval_grid_size)
}

fn monte_carlo_f(cfg: &ExperimentConfig) -> bool {
    cfg.f_estimation.method == FMethod::MonteCarlo
}

fn f_table(cfg: &ExperimentConfig, params: &ModelParams, grid: &[f64]) -> hmq_core::Result<FTable> {
    let f = &cfg.f_estimation;
    match f.method {
        FMethod::ClosedForm => f_table_closed_form(params, f.window_m, f.window_k, grid),
        FMethod::MonteCarlo => {
            let settings = FEstimation {
                window_m: f.window_m,
                window_k: f.window_k,
                bandwidth: f.bandwidth,
            };
            estimate_f(params, &settings, grid, &mc_settings(cfg))
        }
    }
}

/// File-name label for `a` (shortest round-trip decimal, `0.5 -> "0.5"`).
fn a_label(a: f64) -> String {
    format!("{a}")
}

struct Densities {
    grid: Vec<f64>,
    f: FTable,
    p0: Vec<f64>,
    uniform: PointDensity,
    iid: PointDensity,
    optimal: PointDensity,
}

fn densities(cfg: &ExperimentConfig, params: &ModelParams) -> hmq_core::Result<Densities> {
    let grid = density_grid(cfg, params);
    let f = f_table(cfg, params, &grid)?;
    let p0 = h0_marginal_table(params, &grid);
    Ok(Densities {
        uniform: density_uniform(params.obs_support, grid.len())?,
        iid: density_iid(params, grid.len())?,
        optimal: density_optimal(&grid, &f.values, &p0)?,
        grid,
        f,
        p0,
    })
}

fn strategy_density(d: &Densities, strategy: Strategy) -> &PointDensity {
    match strategy {
        Strategy::Uniform => &d.uniform,
        Strategy::Iid => &d.iid,
        Strategy::Optimal => &d.optimal,
    }
}

fn f_file(a: f64, d: &Densities, mc: bool) -> Table {
    let mut t = Table::new(
        format!("f_table_a{}.csv", a_label(a)),
        &[
            ("y", "observation value"),
            ("f", "conditional score second moment F(y) = E0[score^2 | Y0 = y]"),
            ("p0", "H0 marginal density of Y0"),
            ("effective_count", "Kish effective anchors in the kernel window; 0 = filled from nearest; inf = closed form"),
        ],
        mc,
    );
    for i in 0..d.grid.len() {
        t.push(vec![d.grid[i].into(), d.f.values[i].into(), d.p0[i].into(), d.f.counts[i].into()]);
    }
    t.notes.push(format!("a: {a}"));
    if mc {
        t.notes.push(format!("bandwidth: {}", crate::output::format_float(d.f.bandwidth)));
        t.notes.push(format!("anchors: {}", d.f.n_anchors));
        t.notes.push(format!("max_abs_score: {}", crate::output::format_float(d.f.max_abs_score)));
    }
    t
}

fn fig1_densities(cfg: &ExperimentConfig) -> hmq_core::Result<Outcome> {
    let mc = monte_carlo_f(cfg);
    let mut tables = Vec::new();
    let mut summary = Vec::new();
    for a in cfg.a_values() {
        let params = params_for(cfg, a)?;
        let d = densities(cfg, &params)?;
        let mut t = Table::new(
            format!("fig1_densities_a{}.csv", a_label(a)),
            &[
                ("y", "observation value"),
                ("zeta_uniform", "uniform point density on the support"),
                ("zeta_iid", "optimal point density of the i.i.d. model, independent of a"),
                ("zeta_opt", "optimal point density proportional to (p0 F)^(1/3)"),
            ],
            mc,
        );
        t.notes.push(format!("a: {a}"));
        for i in 0..d.grid.len() {
            t.push(vec![
                d.grid[i].into(),
                d.uniform.values()[i].into(),
                d.iid.values()[i].into(),
                d.optimal.values()[i].into(),
            ]);
        }
        let mid = d.grid.len() / 2;
        summary.push(format!(
            "a = {a}: zeta_opt(0) = {:.6}, zeta_iid(0) = {:.6}",
            d.optimal.eval(0.0),
            d.iid.values()[mid]
        ));
        tables.push(t);
        tables.push(f_file(a, &d, mc));
    }
    Ok(Outcome { tables, summary, warnings: Vec::new() })
}

fn fig2_loss_vs_a(cfg: &ExperimentConfig) -> hmq_core::Result<Outcome> {
    let mut t = Table::new(
        "fig2_loss_vs_a.csv",
        &[
            ("a", "state correlation coefficient"),
            ("d_uniform", "asymptotic exponent loss D for the uniform density, nats"),
            ("d_iid", "loss for the i.i.d.-optimal density, or divergent"),
            ("d_optimal", "loss for the optimal density"),
            ("lower_bound", "Hölder lower bound (1/24)(int (p0 F)^(1/3))^3"),
        ],
        monte_carlo_f(cfg),
    );
    let mut summary = Vec::new();
    for a in cfg.a_values() {
        let params = params_for(cfg, a)?;
        let d = densities(cfg, &params)?;
        let du = compute_d(&d.uniform, &d.f.values, &d.p0)?;
        let di = compute_d(&d.iid, &d.f.values, &d.p0)?;
        let dopt = compute_d(&d.optimal, &d.f.values, &d.p0)?;
        let lb = lower_bound_d(&d.grid, &d.f.values, &d.p0)?;
        summary.push(format!("a = {a}: uniform {du}, iid {di}, optimal {dopt}, bound {}", crate::output::format_float(lb)));
        t.push(vec![a.into(), du.into(), di.into(), dopt.into(), lb.into()]);
    }
    Ok(Outcome { tables: vec![t], summary, warnings: Vec::new() })
}

fn exponent_sweep(cfg: &ExperimentConfig) -> hmq_core::Result<Outcome> {
    let params = params_for(cfg, cfg.model.a)?;
    let d = densities(cfg, &params)?;
    let density = strategy_density(&d, cfg.quantizer.strategy);
    let loss = compute_d(density, &d.f.values, &d.p0)?;
    let grid = StateGrid::build(&params)?;
    let sweep = convergence_sweep(&params, density, &cfg.quantizer.n_list, &grid, &mc_settings(cfg))?;

    let mut t = Table::new(
        "exponent_sweep.csv",
        &[
            ("n_cells", "quantizer cells N"),
            ("kn", "estimated quantized exponent K_N, nats per sample"),
            ("kn_se", "standard error of kn"),
            ("gap", "paired estimate of K - K_N"),
            ("gap_se", "standard error of gap"),
            ("scaled_gap", "N^2 (K - K_N)"),
            ("scaled_gap_se", "standard error of scaled_gap"),
            ("k", "estimated unquantized exponent K"),
            ("k_se", "standard error of k"),
            ("d_zeta", "asymptotic loss D of the density, limit of scaled_gap"),
        ],
        true,
    );
    t.notes.push(format!("strategy: {}", cfg.quantizer.strategy.name()));
    let mut summary = vec![format!(
        "K = {:.6} +- {:.6}; D = {loss}",
        sweep.k.value, sweep.k.std_error
    )];
    for r in &sweep.rows {
        summary.push(format!(
            "N = {}: K_N = {:.6}, N^2 gap = {:.4} +- {:.4}",
            r.n_cells, r.kn.value, r.scaled_gap, r.scaled_gap_se
        ));
        t.push(vec![
            r.n_cells.into(),
            r.kn.value.into(),
            r.kn.std_error.into(),
            r.gap.value.into(),
            r.gap.std_error.into(),
            r.scaled_gap.into(),
            r.scaled_gap_se.into(),
            sweep.k.value.into(),
            sweep.k.std_error.into(),
            loss.into(),
        ]);
    }
    let mut tables = vec![t];

    if params.a == 0.0 {
        let rows = convergence_sweep_closed_form(&params, density, &cfg.quantizer.n_list)?;
        let mut exact = Table::new(
            "exponent_sweep_closed_form.csv",
            &[
                ("n_cells", "quantizer cells N"),
                ("kn", "exact K_N, the KL divergence between cell distributions"),
                ("gap", "K - K_N with the Gaussian KL divergence K"),
                ("scaled_gap", "N^2 (K - K_N)"),
            ],
            cfg.f_estimation.method == FMethod::MonteCarlo && cfg.quantizer.strategy == Strategy::Optimal,
        );
        for r in rows {
            exact.push(vec![r.n_cells.into(), r.kn.into(), r.gap.into(), r.scaled_gap.into()]);
        }
        tables.push(exact);
    }
    Ok(Outcome { tables, summary, warnings: Vec::new() })
}

const NP_COLUMNS: [(&str, &str); 14] = [
    ("statistic", "unquantized or quantized LLR"),
    ("n_cells", "quantizer cells N; 0 for the unquantized test"),
    ("n", "block length (n + 1 observations)"),
    ("alpha", "target false-alarm level"),
    ("threshold", "calibrated LLR threshold, reject H0 below it"),
    ("miss_prob", "estimated miss probability beta"),
    ("miss_se", "binomial standard error of miss_prob"),
    ("false_alarm", "false-alarm rate on held-out H0 blocks"),
    ("slope", "-(1/n) ln beta; with zero misses, from the 3/n_trials bound"),
    ("slope_se", "delta-method standard error of slope; nan with zero misses"),
    ("zero_miss", "1 if no miss was observed"),
    ("in_regime", "1 if n >= 10 N (always 1 unquantized)"),
    ("exponent", "ergodic estimate of K (unquantized) or K_N"),
    ("exponent_se", "standard error of exponent"),
];

fn np_test(cfg: &ExperimentConfig) -> hmq_core::Result<Outcome> {
    let params = params_for(cfg, cfg.model.a)?;
    let mc = mc_settings(cfg);
    let trials = TrialSettings {
        n_trials: cfg.detector.n_trials,
        seed: cfg.mc.seed,
        workers: cfg.mc.workers,
    };
    let alpha = cfg.detector.alpha;
    let n_list = &cfg.detector.n_list;
    let mut t = Table::new("np_test.csv", &NP_COLUMNS, true);
    let mut summary = Vec::new();
    let mut warnings = Vec::new();

    let k = estimate_k(&params, &mc)?;
    summary.push(format!("K = {:.6} +- {:.6}", k.value, k.std_error));
    for r in np_sweep(&Unquantized(params.clone()), n_list, alpha, &trials)? {
        summary.push(format!(
            "unquantized n = {}: beta = {:.3e}, slope = {:.5}{}",
            r.n_sensors,
            r.miss_prob,
            r.slope,
            if r.zero_miss { " (no misses: bound)" } else { "" }
        ));
        t.push(np_row("unquantized", 0, &r, true, k.value, k.std_error));
    }

    if let Some(n_cells) = cfg.quantizer.n {
        let d = densities(cfg, &params)?;
        let q = build_quantizer(strategy_density(&d, cfg.quantizer.strategy), n_cells)?;
        let grid = StateGrid::build(&params)?;
        let check = exponent_gap_check(&q, &params, &grid, alpha, n_list, &trials, &mc)?;
        summary.push(format!("K_N (N = {n_cells}) = {:.6} +- {:.6}", check.kn.value, check.kn.std_error));
        for row in &check.rows {
            let r = &row.result;
            if !row.in_regime {
                warnings.push(format!(
                    "n = {} is below 10 N = {}; the exponential approximation is not expected to hold",
                    r.n_sensors,
                    10 * n_cells
                ));
            }
            t.push(np_row("quantized", n_cells, r, row.in_regime, check.kn.value, check.kn.std_error));
        }
        t.notes.push(format!("strategy: {}", cfg.quantizer.strategy.name()));
    }
    Ok(Outcome { tables: vec![t], summary, warnings })
}

fn np_row(
    statistic: &str,
    n_cells: usize,
    r: &hmq_core::detector::NpTestResult,
    in_regime: bool,
    exponent: f64,
    exponent_se: f64,
) -> Vec<Cell> {
    vec![
        statistic.into(),
        n_cells.into(),
        r.n_sensors.into(),
        r.alpha.into(),
        r.threshold.into(),
        r.miss_prob.into(),
        r.miss_std_error.into(),
        r.false_alarm.into(),
        r.slope.into(),
        r.slope_std_error.into(),
        r.zero_miss.into(),
        in_regime.into(),
        exponent.into(),
        exponent_se.into(),
    ]
}
