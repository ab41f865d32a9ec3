//! `t4s`: experiment harness for the Tucker tensor train Taylor surrogate
//! pipeline.
//!
//! Exit codes: 0 success, 2 verification mismatch, 3 configuration error.

mod config;
mod implicit_map;
mod output;
mod random_tensor;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;

use config::{Config, Scenario};

#[derive(Parser)]
#[command(name = "t4s", about = "Tucker tensor train Taylor surrogate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Override the RNG seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for per-sample sweeps (0 = default pool).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Override the output directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-measure the incremental-solve and symbolic term-count tables and
    /// compare them to the reference integers.
    VerifyTables {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ad-hoc probe of the built-in implicit map.
    Probe {
        #[arg(long)]
        order: usize,
        #[arg(long, value_parser = ["fwd", "rev"])]
        mode: String,
        #[arg(long, default_value_t = 8)]
        dim_in: usize,
        #[arg(long, default_value_t = 5)]
        dim_out: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(text) => text,
                Err(e) => {
                    eprintln!("config error: cannot read {}: {e}", config.display());
                    return Ok(ExitCode::from(3));
                }
            };
            let mut cfg = match Config::parse(&text) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return Ok(ExitCode::from(3));
                }
            };
            if let Some(seed) = seed {
                cfg.rng.seed = seed;
            }
            if let Some(out) = out {
                cfg.output.dir = out.display().to_string();
            }
            if threads > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .map_err(|e| e.to_string())?;
            }
            let out_dir = PathBuf::from(&cfg.output.dir);
            match cfg.scenario {
                Scenario::RandomTensor => random_tensor::run(&cfg, &out_dir)?,
                Scenario::ImplicitMap => implicit_map::run(&cfg, &out_dir)?,
                Scenario::DerivVerify => {
                    let ok = verify::run(Some(&out_dir))?;
                    if !ok {
                        return Ok(ExitCode::from(2));
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyTables { out } => {
            let ok = verify::run(out.as_deref())?;
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Probe {
            order,
            mode,
            dim_in,
            dim_out,
            seed,
        } => {
            run_probe(order, &mode, dim_in, dim_out, seed)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_probe(order: usize, mode: &str, dim_in: usize, dim_out: usize, seed: u64) -> Result<(), String> {
    use t4s_core::deriv::builtin::BuiltinMap;
    use t4s_core::deriv::{Multiset, ProbeEngine};

    if order == 0 || order > 10 {
        return Err("probe order must lie in 1..=10".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = BuiltinMap::new(dim_in, dim_out, 0.05, &mut rng);
    let theta0 = DVector::zeros(dim_in);
    let mut engine = ProbeEngine::new(&map, &theta0).map_err(|e| e.to_string())?;
    use rand::Rng as _;
    let dir = DVector::from_fn(dim_in, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let omega = DVector::from_fn(dim_out, |_, _| rng.gen::<f64>() * 2.0 - 1.0);

    let value: Vec<f64> = match mode {
        "fwd" => engine
            .forward_probe(&[dir], &Multiset::uniform(0, order as u32))
            .map_err(|e| e.to_string())?
            .iter()
            .copied()
            .collect(),
        _ => engine
            .reverse_probe(&[dir], &Multiset::uniform(0, order as u32 - 1), &omega)
            .map_err(|e| e.to_string())?
            .iter()
            .copied()
            .collect(),
    };
    let out = serde_json::json!({
        "order": order,
        "mode": mode,
        "incremental_state_solves": engine.counts.incremental_state,
        "incremental_adjoint_solves": engine.counts.incremental_adjoint,
        "probe": value,
    });
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
    Ok(())
}
