use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use eigenloop::config::ExperimentConfig;
use eigenloop::experiment::{cmd_gen, cmd_pretrain, cmd_run, cmd_sweep};
use eigenloop::service::{serve, SessionManager, DEFAULT_ADDR};
use eigenloop::{AppError, AppResult};

#[derive(Parser)]
#[command(name = "eigenloop", version, about = "Cluster-guided few-label transfer")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic benchmark as EMB1 files with label sidecars.
    Gen,
    /// Pretrain encoders and write checkpoints plus loss curves.
    Pretrain,
    /// Progressive loop and random baseline for every seed.
    Run,
    /// Repeat `run` over the values in `[sweep]`.
    Sweep,
    /// Start the annotation service.
    Serve {
        #[arg(long, env = "EIGENLOOP_ADDR", default_value = DEFAULT_ADDR)]
        addr: SocketAddr,
    },
    /// Print the effective config as TOML.
    PrintConfig,
}

fn load(cli: &Cli) -> AppResult<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seeds(vec![s]);
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    let out = cfg.out_dir.clone();
    Ok((cfg, out))
}

fn run(cli: Cli) -> AppResult<()> {
    let (cfg, out) = load(&cli)?;
    match cli.command {
        Command::PrintConfig => print!("{}", cfg.to_toml()),
        Command::Gen => {
            for p in cmd_gen(&cfg, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Pretrain => {
            for s in cmd_pretrain(&cfg, &out)? {
                println!(
                    "seed {} {}: loss {} target bcubed {}",
                    s.seed,
                    s.mode.name(),
                    s.final_loss.map_or("-".into(), |v| format!("{v:.4}")),
                    s.target_precision.map_or("-".into(), |v| format!("{v:.4}")),
                );
            }
        }
        Command::Run => print!("{}", cmd_run(&cfg, &out)?.csv()),
        Command::Sweep => {
            cmd_sweep(&cfg, &out)?;
            let path = out.join("sweep.csv");
            let text = std::fs::read_to_string(&path).map_err(|e| AppError::io(&path, e))?;
            print!("{text}");
        }
        Command::Serve { addr } => {
            let sessions = Arc::new(SessionManager::new(Some(out.join("sessions"))));
            let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::io("<runtime>", e))?;
            rt.block_on(serve(addr, sessions))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
