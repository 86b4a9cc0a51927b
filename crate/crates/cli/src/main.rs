mod config;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use cgmvc_core::embedding::NormMode;
use cgmvc_core::io::{self, BenchRow, MultiViewDataset, RunReport};
use cgmvc_core::oracle;
use cgmvc_core::pipeline::{run_pipeline, PipelineConfig};
use cgmvc_core::tensor::GammaParam;
use clap::{CommandFactory, Parser};

use config::{resolve_pipeline, resolve_synth, Cli, Command, FileConfig, Resolved};

/// Usage errors exit with 2, everything else with 1. The first stderr line
/// is always `error[usage]: ...` or `error[runtime]: ...`.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    /// Bad parameters and malformed manifests are the caller's mistake;
    /// anything else surfaced by the library is a runtime failure.
    pub fn from_core(e: cgmvc_core::Error) -> Self {
        fn is_usage(e: &cgmvc_core::Error) -> bool {
            use cgmvc_core::Error::*;
            match e {
                InvalidConfig { .. } | Manifest { .. } => true,
                Stage { source, .. } => is_usage(source),
                _ => false,
            }
        }
        if is_usage(&e) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.into())
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let head = rendered.lines().next().unwrap_or_default();
            eprintln!("error[usage]: {}", one_line(head.trim_start_matches("error:")));
            for line in rendered.lines().skip(1) {
                eprintln!("{line}");
            }
            return ExitCode::from(2);
        }
    };
    let name = match &cli.command {
        Command::Run { .. } => "run",
        Command::Synth { .. } => "synth",
        Command::Bench { .. } => "bench",
        Command::ProxCheck { .. } => "prox-check",
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error[usage]: {}", one_line(&msg));
            let mut cmd = Cli::command();
            cmd.build();
            if let Some(sub) = cmd.find_subcommand_mut(name) {
                eprintln!("{}", sub.render_usage());
            }
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error[runtime]: {}", one_line(&format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { data, pipeline } => {
            let file = FileConfig::load(pipeline.config.as_deref())?;
            let resolved = resolve_pipeline(&pipeline, &file, None)?;
            let manifest = data
                .or(file.data)
                .ok_or_else(|| CliError::Usage("missing required value for --data".into()))?;
            let ds = load(&manifest)?;
            execute(&ds, &resolved)
        }
        Command::Synth {
            synth,
            save_data,
            pipeline,
        } => {
            let file = FileConfig::load(pipeline.config.as_deref())?;
            let spec = resolve_synth(&synth, &file, pipeline.clusters.or(file.clusters));
            let resolved = resolve_pipeline(&pipeline, &file, Some(spec.clusters))?;
            let ds = io::generate_synthetic(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(dir) = save_data.or(file.save_data) {
                let m = io::save_dataset(&ds, &dir).context("saving synthetic dataset")?;
                log::info!("wrote {}", m.display());
            }
            execute(&ds, &resolved)
        }
        Command::Bench {
            data,
            synth,
            norms,
            gammas,
            rhos,
            lambdas,
            pipeline,
        } => {
            let file = FileConfig::load(pipeline.config.as_deref())?;
            let (ds, resolved) = match data.or(file.data.clone()) {
                Some(m) => (load(&m)?, resolve_pipeline(&pipeline, &file, None)?),
                None => {
                    let spec = resolve_synth(&synth, &file, pipeline.clusters.or(file.clusters));
                    let resolved = resolve_pipeline(&pipeline, &file, Some(spec.clusters))?;
                    let ds = io::generate_synthetic(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
                    (ds, resolved)
                }
            };
            let norms = match norms {
                Some(n) => n,
                None => file.norms()?.unwrap_or_else(|| NormMode::ALL.to_vec()),
            };
            let grid = Grid {
                norms,
                gammas: gammas.or_else(|| FileConfig::list(&file.gammas)),
                rhos: rhos.or_else(|| FileConfig::list(&file.rhos)),
                lambdas: lambdas.or_else(|| FileConfig::list(&file.lambdas)),
            };
            bench(&ds, &resolved, &grid)
        }
        Command::ProxCheck {
            seed,
            scalar_cases,
            tensor_cases,
            config,
        } => {
            let file = FileConfig::load(config.as_deref())?;
            let checks = oracle::prox_check(
                seed.or(file.seed).unwrap_or(0),
                scalar_cases.or(file.scalar_cases).unwrap_or(100),
                tensor_cases.or(file.tensor_cases).unwrap_or(20),
            );
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(anyhow::anyhow!("prox-check: {failed} of {} checks failed", checks.len()).into());
            }
            Ok(())
        }
    }
}

fn load(manifest: &Path) -> Result<MultiViewDataset, CliError> {
    if !manifest.is_file() {
        return Err(CliError::Usage(format!("manifest not found: {}", manifest.display())));
    }
    io::load_dataset(manifest).map_err(CliError::from_core)
}

fn execute(ds: &MultiViewDataset, r: &Resolved) -> Result<(), CliError> {
    let result = run_pipeline(ds, &r.config).map_err(CliError::from_core)?;
    std::fs::create_dir_all(&r.out).with_context(|| format!("creating {}", r.out.display()))?;
    io::write_labels(&r.out.join("labels.txt"), &result.labels).context("writing labels")?;
    let report = RunReport::new(ds, &r.config, &result, "labels.txt");
    let (json, _) = io::emit_report(&report, &r.out).context("writing report")?;
    log::info!("wrote {}", json.display());
    print!("{}", report.to_table());
    Ok(())
}

struct Grid {
    norms: Vec<NormMode>,
    gammas: Option<Vec<f64>>,
    rhos: Option<Vec<f64>>,
    lambdas: Option<Vec<f64>>,
}

fn bench(ds: &MultiViewDataset, r: &Resolved, grid: &Grid) -> Result<(), CliError> {
    let base = &r.config;
    let n = ds.n_samples();
    let gammas = grid.gammas.clone().unwrap_or_else(|| vec![base.gamma.get()]);
    let rhos = grid.rhos.clone().unwrap_or_else(|| vec![base.rho]);
    let lambdas: Vec<Option<f64>> = match &grid.lambdas {
        Some(l) => l.iter().map(|v| Some(*v)).collect(),
        None => vec![base.lambda],
    };
    let mut rows = Vec::new();
    for &norm in &grid.norms {
        for &gamma in &gammas {
            for &rho in &rhos {
                for &lambda in &lambdas {
                    let cfg = PipelineConfig {
                        norm,
                        gamma: GammaParam::new(gamma).map_err(CliError::from_core)?,
                        rho,
                        lambda,
                        ..base.clone()
                    };
                    let clock = Instant::now();
                    let res = run_pipeline(ds, &cfg).map_err(CliError::from_core)?;
                    rows.push(BenchRow {
                        norm: norm.to_string(),
                        gamma,
                        rho,
                        lambda: cfg.lambda_for(n),
                        metrics: res.metrics,
                        embedding_iterations: res.step2_trace.len(),
                        consensus_converged: res.consensus_converged,
                        seconds: (clock.elapsed().as_secs_f64() * 1000.0).round() / 1000.0,
                    });
                }
            }
        }
    }
    let (_, txt) = io::emit_bench(&rows, &r.out).context("writing bench table")?;
    let table = std::fs::read_to_string(&txt).with_context(|| format!("reading {}", txt.display()))?;
    print!("{table}");
    Ok(())
}
