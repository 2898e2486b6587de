//! Batch driver: experiment configs in, CSV observables and a manifest
//! out. Exit codes: 0 success, 2 configuration error, 3 event budget
//! exhausted (partial results flushed).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use asep_core::harness::{compare, run_experiment, ExperimentSpec, Mode, OutputWriter};
use asep_core::observables::{GridField, SpaceTimeField};
use asep_core::Error;

#[derive(Parser)]
#[command(
    name = "asep",
    version,
    about = "Open-boundary exclusion process simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replica ensembles (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation experiment described by the config
    /// (hydrodynamic, quasi-static or stationary mode).
    Simulate(RunArgs),
    /// Run the macroscopic reference solver only.
    Solve(RunArgs),
    /// Scan the (ρ-, ρ+) phase square.
    PhaseScan(RunArgs),
    /// Entropy, boundary and block-estimate diagnostics.
    Diagnose(RunArgs),
    /// Parse and validate a config, printing the scaling report.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare two space-time CSV files (t,x_center,value).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Output directory for the distance table.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Spatial window to compare on.
        #[arg(long, default_value_t = 0.0)]
        window_lo: f64,
        #[arg(long, default_value_t = 1.0)]
        window_hi: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err.downcast_ref::<Error>() {
                Some(
                    Error::Config(_)
                    | Error::InvalidSchedule(_)
                    | Error::InvalidScaling(_)
                    | Error::InvalidLattice(_)
                    | Error::DensityOutOfRange { .. }
                    | Error::TimeOutOfRange { .. }
                    | Error::BlockSizeOutOfRange { .. },
                ) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => run_mode(args, None),
        Command::Solve(args) => run_mode(args, Some(Mode::SolverOnly)),
        Command::PhaseScan(args) => run_mode(args, Some(Mode::PhaseScan)),
        Command::Diagnose(args) => run_mode(args, Some(Mode::Diagnostics)),
        Command::ValidateConfig { config } => validate_config(&config),
        Command::Compare {
            a,
            b,
            out,
            window_lo,
            window_hi,
        } => compare_files(&a, &b, out.as_deref(), (window_lo, window_hi)),
    }
}

fn init_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        // ignore the error if a pool already exists (tests, repeat calls)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

fn run_mode(args: RunArgs, mode_override: Option<Mode>) -> anyhow::Result<ExitCode> {
    init_threads(args.threads);
    let mut spec = ExperimentSpec::load(&args.config)?;
    if let Some(mode) = mode_override {
        spec.mode = mode;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let out_dir = args
        .out
        .or_else(|| spec.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let outcome = run_experiment(&spec, &out_dir)?;

    for row in &outcome.hydro {
        println!(
            "N = {:4}  K = {:3}  time-averaged L1 = {:.5}  (window [{:.3}, {:.3}])",
            row.n, row.k, row.time_avg_l1, row.window.0, row.window.1
        );
    }
    for row in &outcome.stationary {
        println!(
            "rho_bar = {:.3}  mean density = {:.5} ± {:.5}  ({:.2}σ)  current {:.5} vs {:.5}",
            row.rho_bar,
            row.mean_density,
            row.std_error,
            row.deviation_sigmas,
            row.measured_current,
            row.expected_current
        );
    }
    if let Some(l1) = outcome.solver_l1_vs_oracle {
        println!("final-time L1 against the Riemann oracle: {l1:.6}");
    }
    if !outcome.phase.is_empty() {
        let consistent = outcome.phase.len();
        println!("phase scan: {consistent} grid points written");
    }
    if !outcome.diagnostics.is_empty() {
        let failed: Vec<_> = outcome.diagnostics.iter().filter(|r| !r.pass).collect();
        println!(
            "diagnostics: {} checks, {} outside threshold",
            outcome.diagnostics.len(),
            failed.len()
        );
        for row in failed {
            println!(
                "  FAIL {} [{}] value {}",
                row.check, row.parameters, row.value
            );
        }
    }
    println!("outputs written to {}", out_dir.display());

    if outcome.budget_exhausted {
        eprintln!("warning: event budget exhausted; partial results flushed");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn validate_config(path: &Path) -> anyhow::Result<ExitCode> {
    let spec = ExperimentSpec::load(path)?;
    println!("mode: {}", spec.mode.label());
    println!(
        "horizon: {}  replicas: {}  seed: {}",
        spec.horizon, spec.replicas, spec.seed
    );
    if spec.mode != Mode::SolverOnly {
        for n in spec.scaling.lattice_sizes()? {
            let plan = spec.scaling.plan_for(n)?;
            let report = plan.validate()?;
            println!(
                "N = {n}: sigma = {:.3}, sigma_tilde = {:.3}, K = {}, p = {} [{}]",
                plan.sigma,
                plan.sigma_tilde,
                plan.k,
                plan.p,
                if report.pass { "ok" } else { "FAIL" }
            );
            for (name, value) in &report.ratios {
                println!("    {name} = {value:.5}");
            }
            for advisory in &report.advisories {
                println!("    advisory: {advisory}");
            }
            // phase-scan builds its schedules per grid point
            if spec.mode != Mode::PhaseScan {
                let schedule = spec.schedule_or_default(&plan)?;
                if schedule.min_rate() <= 0.0 {
                    println!("    advisory: some boundary rates vanish (essinf = 0)");
                }
            }
        }
    }
    println!("config ok");
    Ok(ExitCode::SUCCESS)
}

fn read_space_time_csv(path: &Path) -> anyhow::Result<SpaceTimeField> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(t), Some(x), Some(v)) = (parts.next(), parts.next(), parts.next()) else {
            anyhow::bail!("{}: malformed line {}", path.display(), ln + 1);
        };
        rows.push((t.trim().parse()?, x.trim().parse()?, v.trim().parse()?));
    }
    if rows.is_empty() {
        anyhow::bail!("{}: no data rows", path.display());
    }
    let mut times = Vec::new();
    let mut fields = Vec::new();
    let mut current_t = f64::NAN;
    let mut cells: Vec<f64> = Vec::new();
    for (t, _x, v) in rows {
        if t != current_t {
            if !cells.is_empty() {
                fields.push(GridField::new(std::mem::take(&mut cells))?);
            }
            times.push(t);
            current_t = t;
        }
        cells.push(v);
    }
    fields.push(GridField::new(cells)?);
    Ok(SpaceTimeField::new(times, fields)?)
}

fn compare_files(
    a: &Path,
    b: &Path,
    out: Option<&Path>,
    window: (f64, f64),
) -> anyhow::Result<ExitCode> {
    let fa = read_space_time_csv(a)?;
    let fb = read_space_time_csv(b)?;
    let table = compare(&fa, &fb, window)?;
    println!(
        "{} overlapping times; time-averaged L1 = {:.6}, L2 = {:.6}",
        table.rows.len(),
        table.time_avg_l1,
        table.time_avg_l2
    );
    if let Some(dir) = out {
        let mut writer = OutputWriter::create(dir)?;
        writer.write_distances("distances.csv", &table.rows)?;
        println!(
            "distance table written to {}",
            dir.join("distances.csv").display()
        );
    }
    Ok(ExitCode::SUCCESS)
}
