use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semiclassical::config::{Config, Mode};
use semiclassical::output::Summary;
use semiclassical::runner::{self, RunOptions};

#[derive(Parser)]
#[command(name = "semiclassical", version, about = "Hartree/Vlasov simulator and certificate checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "SEMICLASSICAL_OUTPUT_DIR", default_value = "output")]
    output_dir: PathBuf,
    #[arg(long)]
    seed_override: Option<u64>,
    /// Run kernels outside the admissible window (with a warning).
    #[arg(long)]
    override_admissibility: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Write final-state checkpoints.
    #[arg(long)]
    checkpoint: bool,
}

#[derive(Subcommand)]
enum Command {
    SimulateHartree(Common),
    SimulateVlasov(Common),
    /// Exponents and smallness threshold only.
    Certify(Common),
    /// Husimi transform and W2 on saved checkpoints.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Quantum checkpoint.
        #[arg(long)]
        quantum: PathBuf,
        /// Classical or quantum checkpoint to compare against.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Free-transport identity suite.
    TransportCheck(Common),
    /// Paired Hartree/Vlasov run with the envelope check.
    Compare(Common),
}

fn report(summary: &Summary) -> bool {
    let mut ok = true;
    for run in &summary.runs {
        println!(
            "{:<9} records={} t_end={} horizon_breached={} mass_drift={:.3e} energy_drift={:.3e} -> {}",
            run.kind, run.records, run.final_time, run.horizon_breached, run.mass_drift, run.energy_drift, run.csv
        );
        for row in &run.verdicts {
            println!("  {:?} {}: measured {:?}, bound {}", row.status, row.claim, row.measured, row.bound);
        }
    }
    if let Some(cert) = &summary.certificate {
        println!("certificate: threshold {:.6e}, verdict {:?}", cert.threshold, cert.verdict);
    }
    if let Some(note) = &summary.certificate_note {
        println!("certificate unavailable: {note}");
    }
    if let Some(tr) = &summary.transport {
        println!("transport: lambda {:.4e}, W0^2 {:.4e}", tr.lambda, tr.w0_squared);
        for s in &tr.samples {
            println!("  t={:<8} W2^2={:.5e} bound={:.5e} {}", s.t, s.w2_squared, s.bound, if s.pass { "ok" } else { "EXCEEDED" });
        }
        ok &= tr.all_pass;
    }
    for c in &summary.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        if c.tolerance.is_finite() {
            println!("{verdict} {}: {:.3e} (tol {:.1e})", c.name, c.value, c.tolerance);
        } else {
            println!("{verdict} {}: {:.3e}", c.name, c.value);
        }
        ok &= c.pass;
    }
    ok
}

fn run(cli: Cli) -> semiclassical::Result<bool> {
    let common = match &cli.command {
        Command::SimulateHartree(c)
        | Command::SimulateVlasov(c)
        | Command::Certify(c)
        | Command::TransportCheck(c)
        | Command::Compare(c) => c,
        Command::Metrics { common, .. } => common,
    };
    if let Some(n) = common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("worker pool already initialized: {e}");
        }
    }
    let cfg = Config::load(&common.config)?;
    let opts = RunOptions {
        output_dir: common.output_dir.clone(),
        seed_override: common.seed_override,
        override_admissibility: common.override_admissibility,
        write_checkpoints: common.checkpoint,
    };
    let summary = match &cli.command {
        Command::SimulateHartree(_) => runner::simulate(&cfg, &opts, Mode::Hartree, "simulate-hartree")?.summary,
        Command::SimulateVlasov(_) => runner::simulate(&cfg, &opts, Mode::Vlasov, "simulate-vlasov")?.summary,
        Command::Certify(_) => runner::certify(&cfg, &opts)?,
        Command::Metrics { quantum, against, .. } => runner::metrics(&cfg, &opts, quantum, against.as_deref())?,
        Command::TransportCheck(_) => runner::transport_check(&cfg, &opts)?,
        Command::Compare(_) => runner::compare(&cfg, &opts)?.summary,
    };
    Ok(report(&summary))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
