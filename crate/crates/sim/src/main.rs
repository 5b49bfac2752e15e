use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use transit_sim::commands::{cmd_calibrate, cmd_spectrum, cmd_squeezing};
use transit_sim::error::{Result, SimError};
use transit_sim::runner::{build_pool, default_workers};
use transit_sim::sweep::{parse_sweep, SweepSpec};
use transit_sim::RunConfig;

#[derive(Parser)]
#[command(name = "simulate", version, about = "Monte Carlo transit-noise spectra and conditional spin squeezing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Averaged demodulated noise spectra (CSV + JSON per sweep point).
    Spectrum(Common),
    /// Conditional variance and squeezing (squeezing.json).
    Squeezing(Common),
    /// Fit the wall-reset probability to the target κ²T₂.
    Calibrate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// `axis=v1,v2,...`; repeat for a Cartesian product.
    #[arg(long)]
    sweep: Vec<String>,
    #[arg(long, env = "SIM_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "SIM_WORKERS")]
    workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(c: &Common) -> Result<(RunConfig, Vec<SweepSpec>, PathBuf)> {
    let text = std::fs::read_to_string(&c.config).map_err(|e| SimError::Io {
        path: c.config.clone(),
        source: e,
    })?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = c.seed {
        cfg = cfg.with("seed", &seed.to_string())?;
    }
    let sweeps = c.sweep.iter().map(|s| parse_sweep(s)).collect::<std::result::Result<Vec<_>, _>>()?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, sweeps, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectrum(c) => {
            let (cfg, sweeps, out) = load(&c)?;
            let pool = build_pool(c.workers.unwrap_or_else(default_workers))?;
            for (row, _) in cmd_spectrum(&cfg, &sweeps, &pool, &out)? {
                println!(
                    "{}  background {:+.2} dB at +{} kHz  peak area {:.4e}",
                    row.file, row.background_db, row.background_offset_khz, row.peak_area
                );
            }
        }
        Command::Squeezing(c) => {
            let (cfg, sweeps, out) = load(&c)?;
            let pool = build_pool(c.workers.unwrap_or_else(default_workers))?;
            for (r, _) in cmd_squeezing(&cfg, &sweeps, &pool, &out)? {
                let sweep: Vec<String> = r.sweep.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let err = r.error_bar_db.map(|e| format!(" ± {e:.2}")).unwrap_or_default();
                println!(
                    "[{}] {} {:.2} mm: ξ² = {:+.2}{err} dB  κ²T₂ = {:.3}",
                    sweep.join(" "),
                    r.beam_shape,
                    r.beam_diameter_mm,
                    r.xi2_db,
                    r.kappa2_t2
                );
            }
        }
        Command::Calibrate(c) => {
            let (cfg, sweeps, out) = load(&c)?;
            if !sweeps.is_empty() {
                return Err(transit_sim::ConfigError::Sweep {
                    spec: c.sweep.join(" "),
                    reason: "calibrate does not take sweeps".into(),
                }
                .into());
            }
            let (report, path) = cmd_calibrate(&cfg, &out)?;
            println!(
                "p_reset = {:.6}  κ²T₂ = {:.4} (held-out {:.4})  -> {}",
                report.wall_reset_probability,
                report.kappa2_t2,
                report.kappa2_t2_holdout,
                path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
