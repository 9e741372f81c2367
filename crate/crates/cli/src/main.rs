use std::path::PathBuf;
use std::process::ExitCode;

use airfl_core::harness::{
    cmd_assumption_probe, cmd_bound, cmd_run, cmd_sweep_md, parse_seeds, BoundFile, ExperimentConfig, OUT_DIR_ENV,
};
use airfl_core::protocol::Scheme;
use airfl_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Over-the-air federated learning simulator and bound evaluator.
#[derive(Parser, Debug)]
#[command(name = "airfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Key-value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $AIRFL_OUT_DIR or ./airfl-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list, overriding the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Restrict to one scheme; may be repeated.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every configured scheme for every seed.
    Run(Common),
    /// Sweep clip_comp over M/d next to the analytical bound.
    SweepMd {
        #[command(flatten)]
        common: Common,
        /// Comma-separated M/d grid, overriding sweep.md_grid.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Estimate L, G, sigma_l and sigma_g along a noiseless trajectory.
    AssumptionProbe(Common),
    /// Evaluate the bound for an inputs file.
    Bound {
        /// Bound inputs file (as written by assumption-probe).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    flag.or_else(|| cfg.and_then(|c| c.out_dir.clone()))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("airfl-out"))
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &common.seeds {
        cfg.seeds = parse_seeds("--seeds", s)?;
    }
    if !common.schemes.is_empty() {
        cfg.schemes = common
            .schemes
            .iter()
            .map(|s| Scheme::parse(s).ok_or_else(|| Error::config(format!("--scheme: unknown scheme `{s}`"))))
            .collect::<Result<_>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let out = out_dir(common.out, Some(&cfg));
            let art = cmd_run(&cfg, &out)?;
            for s in &art.summary {
                println!(
                    "{:<11} final loss {:.6} +/- {:.6} over {} seed(s)",
                    s.scheme.name(),
                    s.final_loss.0,
                    s.final_loss.1,
                    s.seeds
                );
            }
            println!("wrote {} files to {}", art.files.len(), out.display());
        }
        Command::SweepMd { common, grid } => {
            let mut cfg = load(&common)?;
            if let Some(g) = grid {
                cfg.set("sweep.md_grid", &g)?;
                cfg.validate()?;
            }
            let out = out_dir(common.out, Some(&cfg));
            for p in cmd_sweep_md(&cfg, &out)? {
                println!(
                    "M/d {:.3}: loss {:.6} +/- {:.6}, bound {:.6e}, rescaled {:.6}",
                    p.md, p.loss_mean, p.loss_std, p.bound.breakdown.total, p.bound.rescaled
                );
            }
            println!("wrote sweep_md.csv and sweep_md.svg to {}", out.display());
        }
        Command::AssumptionProbe(common) => {
            let cfg = load(&common)?;
            let out = out_dir(common.out, Some(&cfg));
            let (rep, _) = cmd_assumption_probe(&cfg, &out)?;
            println!(
                "L_emp {:.6e}  G_emp {:.6e}  sigma_l_emp {:.6e}  sigma_g_emp {:.6e}",
                rep.l_emp, rep.g_emp, rep.sigma_l_emp, rep.sigma_g_emp
            );
            println!("wrote {}", out.join("probe_report.txt").display());
        }
        Command::Bound { config, out } => {
            let file = BoundFile::read(&config)?;
            let out = out_dir(out, None);
            let rep = cmd_bound(&file, &out, Default::default())?;
            print!("{}", rep.conformance);
            let b = &rep.base;
            println!(
                "init {:.6e}  local {:.6e}  recovery {:.6e}  sparsclip {:.6e}  total {:.6e}",
                b.init, b.local, b.recovery, b.sparsclip, b.total
            );
            println!("C {:.6e}  Gamma {:.6e}  P_T {:.6e}", b.c, b.gamma, b.p_t);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
