//! Experiment runner for quantized hidden-Markov detection.
//!
//! `hmq-detect run --config <file>` reads one JSON experiment description,
//! runs it, and writes plot-ready CSV tables plus a `manifest.json` into the
//! output directory.

pub mod config;
pub mod experiments;
pub mod output;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, ExperimentConfig};
use output::{emit_manifest, prepare_dir, write_table, IoError, Provenance, WrittenFile};
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config {}: {source}", path.display())]
    Config { path: PathBuf, source: ConfigError },
    #[error("cannot read config {}: {source}", path.display())]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Compute(#[from] hmq_core::Error),
}

impl RunError {
    /// 2 for configuration problems, 1 for failures after the config was accepted.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } | RunError::ReadConfig { .. } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub files: Vec<WrittenFile>,
    pub manifest: PathBuf,
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
}

/// Runs the configured experiment and writes its tables and manifest.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let outcome = experiments::run_experiment(cfg)?;
    let dir = cfg.output_dir.clone();
    prepare_dir(&dir)?;
    let prov = Provenance::of(cfg);
    let files = outcome
        .tables
        .iter()
        .map(|t| write_table(&dir, t, &prov))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = emit_manifest(cfg, &files, start.elapsed().as_secs_f64(), &dir)?;
    Ok(RunReport {
        output_dir: dir,
        files,
        manifest,
        summary: outcome.summary,
        warnings: outcome.warnings,
    })
}

#[derive(Debug, Parser)]
#[command(name = "hmq-detect", version, about = "Quantized HMM detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `mc.workers`; 0 uses all cores.
    #[arg(long, env = "HMQ_WORKERS")]
    workers: Option<usize>,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| RunError::ReadConfig {
        path: args.config.clone(),
        source,
    })?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|source| RunError::Config {
        path: args.config.clone(),
        source,
    })?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.mc.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.mc.workers = w;
    }
    Ok(cfg)
}

/// Entry point behind the binary; returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let Command::Run(args) = cli.command;
    let result = load(&args).and_then(|cfg| run(&cfg));
    match result {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", report.output_dir.join(&f.path).display());
            }
            println!("wrote {}", report.manifest.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &std::path::Path, body: &str) -> PathBuf {
        let path = dir.join("config.json");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn negative_sigma_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), r#"{"experiment": "np_test", "model": {"sigma": -1}}"#);
        let code = cli_main(["hmq-detect", "run", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 2);
        let err = load(&RunArgs {
            config: cfg,
            output_dir: None,
            seed: None,
            workers: None,
        })
        .unwrap_err();
        assert!(err.to_string().contains("model.sigma"));
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn missing_config_exits_2() {
        assert_eq!(cli_main(["hmq-detect", "run", "--config", "/nonexistent/x.json"]), 2);
        assert_eq!(cli_main(["hmq-detect", "frobnicate"]), 2);
    }

    #[test]
    fn overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), r#"{"experiment": "np_test"}"#);
        let loaded = load(&RunArgs {
            config: cfg,
            output_dir: Some(dir.path().join("o")),
            seed: Some(9),
            workers: Some(3),
        })
        .unwrap();
        assert_eq!(loaded.mc.seed, 9);
        assert_eq!(loaded.mc.workers, 3);
        assert_eq!(loaded.output_dir, dir.path().join("o"));
    }

    #[test]
    fn run_writes_tables_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let body = format!(
            r#"{{"experiment":"fig2_loss_vs_a","sweep":{{"a_values":[0.5]}},
                "f_estimation":{{"method":"closed_form"}},"output_dir":{:?}}}"#,
            out.to_str().unwrap()
        );
        let cfg = write_config(dir.path(), &body);
        assert_eq!(cli_main(["hmq-detect", "run", "--config", cfg.to_str().unwrap()]), 0);
        let csv = std::fs::read_to_string(out.join("fig2_loss_vs_a.csv")).unwrap();
        assert!(csv.contains(",divergent,"));
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["files"][0]["path"], "fig2_loss_vs_a.csv");
        assert_eq!(manifest["files"][0]["sha256"], output::data_digest(&csv));
        assert_eq!(manifest["seed"], 0);
    }

    #[test]
    fn seeds_change_only_monte_carlo_digests() {
        let dir = tempfile::tempdir().unwrap();
        let base = r#"{"experiment":"exponent_sweep","model":{"a":0.0,"state_grid_size":20},
            "quantizer":{"strategy":"uniform","n_list":[4,8]},
            "mc":{"path_len":500,"n_paths":2},"f_estimation":{"method":"closed_form","eval_grid_size":513}}"#;
        let digests = |seed: u64| {
            let mut cfg = ExperimentConfig::parse(base).unwrap();
            cfg.mc.seed = seed;
            cfg.output_dir = dir.path().join(format!("s{seed}"));
            let files = run(&cfg).unwrap().files;
            files.into_iter().map(|f| (f.path, f.sha256, f.monte_carlo)).collect::<Vec<_>>()
        };
        let (a, a2, b) = (digests(1), digests(1), digests(2));
        assert_eq!(a, a2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.2, y.2);
            if x.2 {
                assert_ne!(x.1, y.1, "{}", x.0);
            } else {
                assert_eq!(x.1, y.1, "{}", x.0);
            }
        }
        assert!(a.iter().any(|f| !f.2) && a.iter().any(|f| f.2));
    }
}
