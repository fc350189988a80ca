//! `csmabench` command-line interface: run experiments, compare curve
//! files, and export deployments for external simulators.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use csmabench::geometry::{self, RadioConfig};
use csmabench::CcdfCurve;
use csmabench_cli::{compare_curves, realization_deployment, run_experiment, RawOptions};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "csmabench",
    about = "CSMA network performance workbench: stochastic-geometry, hybrid and discrete-event estimators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CCDF and timing CSV files
    Run(RunArgs),
    /// Print the maximum vertical distance (percentage points) between two curve files
    Compare {
        /// Reference curve CSV (its grid is used)
        #[arg(long)]
        a: PathBuf,
        /// Curve CSV interpolated onto the reference grid
        #[arg(long)]
        b: PathBuf,
    },
    /// Sample a deployment and write nodes.csv / pathloss.csv
    ExportDeployment {
        /// AP density in APs/km²
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        area_km2: f64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file; explicit flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Estimator: sgm, sgm_enhanced, hybrid or des
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated AP densities in APs/km² (default 500,1000,5000,10000)
    #[arg(long, allow_hyphen_values = true)]
    density: Option<String>,
    /// Comma-separated carrier-sense thresholds in dBm (default -82)
    #[arg(long, allow_hyphen_values = true)]
    cst: Option<String>,
    /// Monte Carlo realizations per (density, cst) for hybrid/des
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Deployment area in km²
    #[arg(long)]
    area_km2: Option<f64>,
    /// Simulated traffic seconds per realization (des)
    #[arg(long)]
    sim_duration: Option<f64>,
    /// Output directory for curve and timing files
    #[arg(long)]
    out: Option<PathBuf>,
    /// SINR CCDF grid points
    #[arg(long)]
    sinr_points: Option<usize>,
    /// Throughput CCDF grid points
    #[arg(long)]
    tput_points: Option<usize>,
    /// Outer integration grid points (sgm)
    #[arg(long)]
    r0_points: Option<usize>,
    /// Interference field truncation radius in m (sgm)
    #[arg(long)]
    field_radius: Option<f64>,
    /// Interference field radial points (sgm)
    #[arg(long)]
    field_radial: Option<usize>,
    /// Interference field angular points (sgm)
    #[arg(long)]
    field_angular: Option<usize>,
    /// Worker threads (0 = all cores); parallelism never changes outputs
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn into_raw(self) -> RawOptions {
        RawOptions {
            model: self.model,
            density: self.density,
            cst: self.cst,
            realizations: self.realizations,
            seed: self.seed,
            area_km2: self.area_km2,
            sim_duration: self.sim_duration,
            out: self.out,
            sinr_points: self.sinr_points,
            tput_points: self.tput_points,
            r0_points: self.r0_points,
            field_radius: self.field_radius,
            field_radial: self.field_radial,
            field_angular: self.field_angular,
            workers: self.workers,
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let file_opts = match &args.config {
                Some(path) => RawOptions::from_file(path)
                    .with_context(|| format!("reading config {}", path.display()))?,
                None => RawOptions::default(),
            };
            let cfg = file_opts.overlaid(args.into_raw()).into_config()?;
            let written = run_experiment(&cfg)?;
            for path in &written {
                println!("{}", path.display());
            }
            println!("wrote {} files to {}", written.len(), cfg.output_dir.display());
        }
        Command::Compare { a, b } => {
            let curve_a = CcdfCurve::from_csv(&a).with_context(|| format!("reading {}", a.display()))?;
            let curve_b = CcdfCurve::from_csv(&b).with_context(|| format!("reading {}", b.display()))?;
            let pp = compare_curves(&curve_a, &curve_b)?;
            println!("max vertical distance: {pp:.3} pp");
        }
        Command::ExportDeployment {
            density,
            seed,
            area_km2,
            out,
        } => {
            if density <= 0.0 || area_km2 <= 0.0 {
                bail!("density and area must be positive");
            }
            let radio = RadioConfig::default();
            let side = (area_km2 * 1e6).sqrt();
            let dep = realization_deployment(seed, 0, density * 1e-6, side, &radio)?;
            geometry::export_deployment(&dep, &out)?;
            println!(
                "wrote {} APs and {} users to {}",
                dep.n_aps(),
                dep.n_users(),
                out.display()
            );
        }
    }
    Ok(())
}
