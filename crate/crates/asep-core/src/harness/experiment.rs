//! Experiment modes: ensembles of replicas compared against the
//! macroscopic references, phase scans, solver runs and diagnostics, with
//! all results persisted as CSV plus a JSON manifest.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::entropy::{
    otto_boundary_check, otto_integral_inequality, AuxiliaryWeight, Side, SmoothedKruzkov,
    TestFunction,
};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentSpec, InitialSpec, Mode};
use crate::harness::ensemble::map_replicas;
use crate::harness::output::{
    DiagnosticRow, OutputWriter, RunManifest, TaskManifest, DIAGNOSTIC_HEADER,
};
use crate::kmc::{
    replica_seed, sample_initial, RunOptions, Simulation, TimeDilation, TrajectoryRecord,
};
use crate::model::{LatticeConfig, RateSchedule, ScalingPlan};
use crate::observables::{
    boundary_block_residual, h1_residual, l1_distance_window, l2_distance_window,
    one_block_residual, smoothed_density_field, GridField, SpaceTimeField,
};
use crate::solver::{quasi_stationary_profile, riemann_exact, solve, FluxFn, Phase};

/// Per-lattice-size summary of a hydrodynamic sweep.
#[derive(Debug, Clone)]
pub struct HydroRow {
    pub n: usize,
    pub k: usize,
    pub time_avg_l1: f64,
    pub time_avg_l2: f64,
    pub window: (f64, f64),
}

/// Stationary-mode statistics for one balanced density.
#[derive(Debug, Clone)]
pub struct StationaryRow {
    pub rho_bar: f64,
    pub mean_density: f64,
    pub std_error: f64,
    pub deviation_sigmas: f64,
    pub measured_current: f64,
    pub expected_current: f64,
}

/// Phase-scan row: closed-form prediction next to the measured bulk
/// density of a quasi-static run.
#[derive(Debug, Clone)]
pub struct PhaseRow {
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub phase: Phase,
    pub u_bar: Option<f64>,
    pub current: f64,
    pub measured_bulk: f64,
    pub deviation: Option<f64>,
}

/// Structured results of one experiment run (files are written as well).
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub budget_exhausted: bool,
    pub hydro: Vec<HydroRow>,
    pub quasi_static: Vec<(f64, f64)>,
    pub stationary: Vec<StationaryRow>,
    pub phase: Vec<PhaseRow>,
    pub solver_l1_vs_oracle: Option<f64>,
    pub diagnostics: Vec<DiagnosticRow>,
}

pub fn uniform_times(horizon: f64, count: usize) -> Vec<f64> {
    if count <= 1 || horizon == 0.0 {
        return vec![0.0];
    }
    (0..count)
        .map(|i| horizon * i as f64 / (count - 1) as f64)
        .collect()
}

/// Run one ensemble of replicas from Bernoulli initial data.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    plan: &ScalingPlan,
    schedule: &RateSchedule,
    u0: &GridField,
    dilation: TimeDilation,
    options: &RunOptions,
    replicas: usize,
    task_seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    map_replicas(replicas, task_seed, |_, seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = sample_initial(u0, plan.n, &mut rng)?;
        let mut sim = Simulation::new(
            config,
            schedule.clone(),
            plan,
            dilation,
            replica_seed(seed, 1),
        )?;
        sim.run(options)
    })
}

/// Cell-wise ensemble mean of the smoothed empirical density fields.
pub fn ensemble_mean_smoothed(records: &[TrajectoryRecord], k: usize) -> Result<SpaceTimeField> {
    let first = records
        .first()
        .ok_or_else(|| Error::Config("empty ensemble".into()))?;
    let times = first.times.clone();
    let mut fields: Vec<GridField> = Vec::with_capacity(times.len());
    for t_idx in 0..times.len() {
        let mut acc: Option<Vec<f64>> = None;
        for record in records {
            if record.times.len() != times.len() {
                return Err(Error::IncompatibleFields(
                    "replica records have mismatched sampling".into(),
                ));
            }
            let f = smoothed_density_field(&record.snapshots[t_idx], k)?;
            match &mut acc {
                None => acc = Some(f.cells().to_vec()),
                Some(a) => {
                    for (x, &v) in a.iter_mut().zip(f.cells()) {
                        *x += v;
                    }
                }
            }
        }
        let mut cells = acc.unwrap();
        let r = records.len() as f64;
        for c in &mut cells {
            *c /= r;
        }
        fields.push(GridField::new(cells)?);
    }
    SpaceTimeField::new(times, fields)
}

/// Per-time L¹/L² distance table between two sampled fields over a
/// spatial window, matched on overlapping sample times.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    pub rows: Vec<(f64, f64, f64)>,
    pub time_avg_l1: f64,
    pub time_avg_l2: f64,
}

pub fn compare(
    a: &SpaceTimeField,
    b: &SpaceTimeField,
    window: (f64, f64),
) -> Result<DistanceTable> {
    let mut rows = Vec::new();
    let mut j = 0usize;
    for (i, &t) in a.times.iter().enumerate() {
        while j < b.times.len() && b.times[j] < t - 1e-9 {
            j += 1;
        }
        if j < b.times.len() && (b.times[j] - t).abs() <= 1e-9 {
            let l1 = l1_distance_window(&a.fields[i], &b.fields[j], window.0, window.1)?;
            let l2 = l2_distance_window(&a.fields[i], &b.fields[j], window.0, window.1)?;
            rows.push((t, l1, l2));
        }
    }
    if rows.is_empty() {
        return Err(Error::IncompatibleFields(
            "no overlapping sample times to compare".into(),
        ));
    }
    let n = rows.len() as f64;
    Ok(DistanceTable {
        time_avg_l1: rows.iter().map(|r| r.1).sum::<f64>() / n,
        time_avg_l2: rows.iter().map(|r| r.2).sum::<f64>() / n,
        rows,
    })
}

fn bulk_density(config: &LatticeConfig) -> f64 {
    let n = config.size();
    let (lo, hi) = (n / 4, 3 * n / 4);
    let sum: u32 = (lo..hi).map(|i| config.get(i) as u32).sum();
    sum as f64 / (hi - lo) as f64
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn task_manifest(label: &str, task_seed: u64, replicas: usize) -> TaskManifest {
    TaskManifest {
        label: label.to_string(),
        task_seed,
        replica_seeds: (0..replicas as u64)
            .map(|r| replica_seed(task_seed, r))
            .collect(),
    }
}

/// Execute the experiment described by `spec`, writing all outputs under
/// `out_dir`. The spec's own `out_dir` has already been resolved away by
/// the caller.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunOutcome> {
    spec.validate()?;
    let mut writer = OutputWriter::create(out_dir)?;
    let mut manifest = RunManifest::new(spec.mode.label(), &spec.to_toml(), spec.seed);
    let mut outcome = RunOutcome::default();

    match spec.mode {
        Mode::Hydrodynamic => hydrodynamic(spec, &mut writer, &mut manifest, &mut outcome)?,
        Mode::QuasiStatic => quasi_static(spec, &mut writer, &mut manifest, &mut outcome)?,
        Mode::Stationary => stationary(spec, &mut writer, &mut manifest, &mut outcome)?,
        Mode::PhaseScan => phase_scan(spec, &mut writer, &mut manifest, &mut outcome)?,
        Mode::SolverOnly => solver_only(spec, &mut writer, &mut outcome)?,
        Mode::Diagnostics => diagnostics(spec, &mut writer, &mut manifest, &mut outcome)?,
    }

    if outcome.budget_exhausted {
        manifest.complete = false;
        manifest.incomplete_reason = Some("event budget exhausted".into());
    }
    manifest.files = writer.files.clone();
    writer.write_manifest(&manifest)?;
    Ok(outcome)
}

fn note_budget(records: &[TrajectoryRecord], outcome: &mut RunOutcome) {
    if records.iter().any(|r| !r.complete) {
        outcome.budget_exhausted = true;
    }
}

fn hydrodynamic(
    spec: &ExperimentSpec,
    writer: &mut OutputWriter,
    manifest: &mut RunManifest,
    outcome: &mut RunOutcome,
) -> Result<()> {
    let ns = spec.scaling.lattice_sizes()?;
    let plans: Vec<ScalingPlan> = ns
        .iter()
        .map(|&n| spec.scaling.plan_for(n))
        .collect::<Result<Vec<_>>>()?;
    // common comparison window across the sweep: exclude the outer
    // max(K/N) on both sides so the trend measures one functional
    let margin = plans
        .iter()
        .map(|p| p.k as f64 / p.n as f64)
        .fold(0.0f64, f64::max);
    let window = (margin, 1.0 - margin);
    let times = uniform_times(spec.horizon, spec.sample_count);
    let initial = spec.initial.as_ref().expect("validated");

    for (sweep_idx, plan) in plans.iter().enumerate() {
        let n = plan.n;
        let schedule = spec.schedule_or_default(plan)?;
        let u0_lattice = initial.profile(n)?;
        let task_seed = replica_seed(spec.seed, sweep_idx as u64);
        let mut options = RunOptions::uniform(spec.horizon, spec.sample_count);
        options.event_budget = spec.event_budget;
        let records = run_ensemble(
            plan,
            &schedule,
            &u0_lattice,
            TimeDilation::Hydrodynamic,
            &options,
            spec.replicas,
            task_seed,
        )?;
        note_budget(&records, outcome);
        manifest.tasks.push(task_manifest(
            &format!("hydrodynamic-N{n}"),
            task_seed,
            spec.replicas,
        ));

        let mean = ensemble_mean_smoothed(&records, plan.k)?;
        let u0_solver = initial.profile(spec.solver_cells)?;
        let solver = solve(
            &u0_solver,
            &schedule,
            FluxFn::new(plan.p)?,
            spec.horizon,
            spec.solver_cells,
            &times,
            spec.cfl,
        )?;
        let table = compare(&mean, &solver.field, window)?;

        writer.write_space_time(&format!("ensemble_mean_N{n}.csv"), &mean)?;
        writer.write_space_time(&format!("solver_reference_N{n}.csv"), &solver.field)?;
        writer.write_distances(&format!("distances_N{n}.csv"), &table.rows)?;
        if spec.write_replica_trajectories {
            for (r, record) in records.iter().enumerate() {
                writer.write_trajectory(&format!("trajectory_N{n}_replica{r}.csv"), record)?;
            }
        }
        outcome.hydro.push(HydroRow {
            n,
            k: plan.k,
            time_avg_l1: table.time_avg_l1,
            time_avg_l2: table.time_avg_l2,
            window,
        });
    }

    let rows: Vec<String> = outcome
        .hydro
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.n, r.k, r.time_avg_l1, r.time_avg_l2, r.window.0, r.window.1
            )
        })
        .collect();
    writer.write_rows(
        "summary.csv",
        "n,k,time_avg_l1,time_avg_l2,window_lo,window_hi",
        &rows,
    )?;
    Ok(())
}

fn quasi_static(
    spec: &ExperimentSpec,
    writer: &mut OutputWriter,
    manifest: &mut RunManifest,
    outcome: &mut RunOutcome,
) -> Result<()> {
    let n = spec.scaling.lattice_sizes()?[0];
    let plan = spec.scaling.plan_for(n)?;
    let schedule = spec.schedule_or_default(&plan)?;
    let initial = spec.initial.as_ref().expect("validated");
    let u0 = initial.profile(n)?;
    let task_seed = replica_seed(spec.seed, 0x71);
    let mut options = RunOptions::uniform(spec.horizon, spec.sample_count);
    options.event_budget = spec.event_budget;
    let records = run_ensemble(
        &plan,
        &schedule,
        &u0,
        TimeDilation::QuasiStatic {
            a: spec.quasi_static_exponent,
        },
        &options,
        spec.replicas,
        task_seed,
    )?;
    note_budget(&records, outcome);
    manifest
        .tasks
        .push(task_manifest("quasi-static", task_seed, spec.replicas));

    let mean = ensemble_mean_smoothed(&records, plan.k)?;
    let flux = FluxFn::new(plan.p)?;
    let margin = plan.k as f64 / plan.n as f64;
    let mut rows = Vec::new();
    for (idx, &t) in mean.times.iter().enumerate() {
        let (rm, rp) = schedule.reservoir_densities(t)?;
        let point = quasi_stationary_profile(rm, rp, flux)?;
        if let Some(u_bar) = point.u_bar {
            let target = GridField::constant(plan.n, u_bar);
            let l1 = l1_distance_window(&mean.fields[idx], &target, margin, 1.0 - margin)?;
            rows.push((t, l1, u_bar));
            outcome.quasi_static.push((t, l1));
        }
    }
    writer.write_space_time("qs_mean.csv", &mean)?;
    let lines: Vec<String> = rows
        .iter()
        .map(|(t, l1, u)| format!("{t},{l1},{u}"))
        .collect();
    writer.write_rows("qs_distances.csv", "t,l1_to_quasi_stationary,u_bar", &lines)?;
    Ok(())
}

fn stationary(
    spec: &ExperimentSpec,
    writer: &mut OutputWriter,
    manifest: &mut RunManifest,
    outcome: &mut RunOutcome,
) -> Result<()> {
    let n = spec.scaling.lattice_sizes()?[0];
    let plan = spec.scaling.plan_for(n)?;
    let schedule = spec.schedule_or_default(&plan)?;
    let rho_bar = match &spec.initial {
        Some(InitialSpec::Constant { value }) => *value,
        _ => {
            return Err(Error::Config(
                "stationary mode needs [initial] kind = \"constant\" with the balanced density"
                    .into(),
            ))
        }
    };
    let u0 = GridField::constant(n, rho_bar);
    let task_seed = replica_seed(spec.seed, 0x57);
    let mut options = RunOptions::uniform(spec.horizon, spec.sample_count).with_counting();
    options.event_budget = spec.event_budget;
    let records = run_ensemble(
        &plan,
        &schedule,
        &u0,
        TimeDilation::Hydrodynamic,
        &options,
        spec.replicas,
        task_seed,
    )?;
    note_budget(&records, outcome);
    manifest
        .tasks
        .push(task_manifest("stationary", task_seed, spec.replicas));

    let burn_t = spec.burn_in_fraction * spec.horizon;
    let mut bulk_values = Vec::with_capacity(records.len());
    let mut currents = Vec::with_capacity(records.len());
    let mid = n / 2;
    for record in &records {
        // on a truncated (budget-exhausted) record the burn-in window may
        // be empty; fall back to every sample so partial data still flushes
        let mut kept: Vec<usize> = (0..record.times.len())
            .filter(|&i| record.times[i] >= burn_t)
            .collect();
        if kept.is_empty() {
            kept = (0..record.times.len()).collect();
        }
        if kept.is_empty() {
            continue;
        }
        let avg = kept
            .iter()
            .map(|&i| bulk_density(&record.snapshots[i]))
            .sum::<f64>()
            / kept.len() as f64;
        bulk_values.push(avg);
        let (i0, i1) = (kept[0], *kept.last().unwrap());
        let dt = record.times[i1] - record.times[i0];
        if dt > 0.0 {
            let dh = record.counting[i1].net(mid) - record.counting[i0].net(mid);
            currents.push(dh as f64 / (n as f64 * dt));
        }
    }
    let (mean, se) = mean_and_se(&bulk_values);
    let (cur_mean, _) = mean_and_se(&currents);
    let row = StationaryRow {
        rho_bar,
        mean_density: mean,
        std_error: se,
        deviation_sigmas: if se > 0.0 {
            (mean - rho_bar).abs() / se
        } else {
            0.0
        },
        measured_current: cur_mean,
        expected_current: plan.p * rho_bar * (1.0 - rho_bar),
    };
    let line = format!(
        "{},{},{},{},{},{}",
        row.rho_bar,
        row.mean_density,
        row.std_error,
        row.deviation_sigmas,
        row.measured_current,
        row.expected_current
    );
    writer.write_rows(
        "stationary.csv",
        "rho_bar,mean_density,std_error,deviation_sigmas,measured_current,expected_current",
        &[line],
    )?;
    outcome.stationary.push(row);
    Ok(())
}

fn phase_scan(
    spec: &ExperimentSpec,
    writer: &mut OutputWriter,
    manifest: &mut RunManifest,
    outcome: &mut RunOutcome,
) -> Result<()> {
    let n = spec.scaling.lattice_sizes()?[0];
    let plan = spec.scaling.plan_for(n)?;
    let flux = FluxFn::new(plan.p)?;
    let g = spec.phase_scan.grid;
    let burn_t = spec.burn_in_fraction * spec.horizon;

    let mut lines = Vec::new();
    for i in 0..g {
        for j in 0..g {
            let rm = (i + 1) as f64 / (g + 1) as f64;
            let rp = (j + 1) as f64 / (g + 1) as f64;
            let point = quasi_stationary_profile(rm, rp, flux)?;
            let schedule = RateSchedule::from_reservoir_densities(rm, rp)?;
            let u0 = GridField::constant(n, point.u_bar.unwrap_or(0.5));
            let task_id = (i * g + j) as u64;
            let task_seed = replica_seed(spec.seed, 0x9100 + task_id);
            let mut options = RunOptions::uniform(spec.horizon, spec.sample_count);
            options.event_budget = spec.event_budget;
            let records = run_ensemble(
                &plan,
                &schedule,
                &u0,
                TimeDilation::QuasiStatic {
                    a: spec.phase_scan.a,
                },
                &options,
                spec.replicas,
                task_seed,
            )?;
            note_budget(&records, outcome);
            manifest.tasks.push(task_manifest(
                &format!("phase-scan-{rm:.3}-{rp:.3}"),
                task_seed,
                spec.replicas,
            ));
            let mut acc = Vec::new();
            for record in &records {
                let mut kept: Vec<usize> = (0..record.times.len())
                    .filter(|&idx| record.times[idx] >= burn_t)
                    .collect();
                if kept.is_empty() {
                    kept = (0..record.times.len()).collect();
                }
                if kept.is_empty() {
                    continue;
                }
                acc.push(
                    kept.iter()
                        .map(|&idx| bulk_density(&record.snapshots[idx]))
                        .sum::<f64>()
                        / kept.len() as f64,
                );
            }
            let (measured, _) = mean_and_se(&acc);
            let deviation = point.u_bar.map(|u| (measured - u).abs());
            let u_bar_text = point.u_bar.map(|u| u.to_string()).unwrap_or_default();
            let dev_text = deviation.map(|d| d.to_string()).unwrap_or_default();
            lines.push(format!(
                "{},{},{},{},{},{},{}",
                rm,
                rp,
                point.phase.label(),
                u_bar_text,
                point.current,
                measured,
                dev_text
            ));
            outcome.phase.push(PhaseRow {
                rho_minus: rm,
                rho_plus: rp,
                phase: point.phase,
                u_bar: point.u_bar,
                current: point.current,
                measured_bulk: measured,
                deviation,
            });
        }
    }
    writer.write_rows(
        "phase_diagram.csv",
        "rho_minus,rho_plus,phase,u_bar,current,measured_bulk,deviation",
        &lines,
    )?;
    Ok(())
}

fn solver_only(
    spec: &ExperimentSpec,
    writer: &mut OutputWriter,
    outcome: &mut RunOutcome,
) -> Result<()> {
    let p = spec.scaling.p;
    let plan_for_schedule = if spec.schedule.liggett {
        spec.scaling.plan_for(spec.scaling.lattice_sizes()?[0])?
    } else {
        ScalingPlan::exploratory(8, 0.0, 0.0, 1, p)?
    };
    let schedule = spec.schedule_or_default(&plan_for_schedule)?;
    let initial = spec.initial.as_ref().expect("validated");
    let u0 = initial.profile(spec.solver_cells)?;
    let times = uniform_times(spec.horizon, spec.sample_count);
    let flux = FluxFn::new(p)?;
    let out = solve(
        &u0,
        &schedule,
        flux,
        spec.horizon,
        spec.solver_cells,
        &times,
        spec.cfl,
    )?;
    writer.write_space_time("space_time.csv", &out.field)?;

    if let InitialSpec::Riemann {
        u_left,
        u_right,
        x0,
    } = initial
    {
        let exact = riemann_exact(
            *u_left,
            *u_right,
            flux,
            *x0,
            spec.horizon,
            spec.solver_cells,
        );
        let last = out.field.fields.last().expect("samples");
        let l1 = crate::observables::l1_distance(last, &exact)?;
        writer.write_field("riemann_exact_final.csv", &exact)?;
        writer.write_rows(
            "comparison.csv",
            "t,l1_vs_riemann_oracle",
            &[format!("{},{}", spec.horizon, l1)],
        )?;
        outcome.solver_l1_vs_oracle = Some(l1);
    }
    Ok(())
}

/// Residuals of one ensemble evaluated at one block size.
#[derive(Debug, Clone)]
pub struct BlockResidualEnsemble {
    pub sigma_tilde: f64,
    pub k: usize,
    /// Per replica: (one-block, H¹, boundary-left, boundary-right).
    pub per_replica: Vec<(f64, f64, f64, f64)>,
}

impl BlockResidualEnsemble {
    pub fn means(&self) -> (f64, f64, f64, f64) {
        let n = self.per_replica.len() as f64;
        let mut acc = (0.0, 0.0, 0.0, 0.0);
        for &(a, b, c, d) in &self.per_replica {
            acc.0 += a;
            acc.1 += b;
            acc.2 += c;
            acc.3 += d;
        }
        (acc.0 / n, acc.1 / n, acc.2 / n, acc.3 / n)
    }
}

/// Run one ensemble and evaluate the three block-estimate residuals at
/// each requested block size, on post-burn-in snapshots.
#[allow(clippy::too_many_arguments)]
pub fn block_residual_ensemble(
    plan: &ScalingPlan,
    schedule: &RateSchedule,
    u0: &GridField,
    horizon: f64,
    burn_in_fraction: f64,
    sample_count: usize,
    replicas: usize,
    task_seed: u64,
    ks: &[usize],
) -> Result<Vec<BlockResidualEnsemble>> {
    let options = RunOptions::uniform(horizon, sample_count);
    let records = run_ensemble(
        plan,
        schedule,
        u0,
        TimeDilation::Hydrodynamic,
        &options,
        replicas,
        task_seed,
    )?;
    let burn_t = burn_in_fraction * horizon;
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut per_replica = Vec::with_capacity(records.len());
        for record in &records {
            let kept: Vec<LatticeConfig> = record
                .times
                .iter()
                .zip(&record.snapshots)
                .filter(|(&t, _)| t >= burn_t)
                .map(|(_, s)| s.clone())
                .collect();
            let kept_times: Vec<f64> = record
                .times
                .iter()
                .copied()
                .filter(|&t| t >= burn_t)
                .collect();
            let ob = one_block_residual(&kept, k)?;
            let h1 = h1_residual(&kept, k)?;
            let (bl, br) = boundary_block_residual(&kept, &kept_times, k, schedule)?;
            per_replica.push((ob, h1, bl, br));
        }
        out.push(BlockResidualEnsemble {
            sigma_tilde: plan.sigma_tilde,
            k,
            per_replica,
        });
    }
    Ok(out)
}

/// Standard test-function suite for the Otto inequality checks.
pub fn otto_test_functions(horizon: f64) -> Vec<(&'static str, TestFunction)> {
    vec![
        ("time-ramp", TestFunction::time_ramp(horizon)),
        ("ramp-cosine", TestFunction::time_ramp_cosine(horizon, 0.3)),
        (
            "bump",
            TestFunction::bump(horizon, -horizon, 0.9 * horizon, 0.15, 0.95),
        ),
    ]
}

fn diagnostics(
    spec: &ExperimentSpec,
    writer: &mut OutputWriter,
    manifest: &mut RunManifest,
    outcome: &mut RunOutcome,
) -> Result<()> {
    let mut rows: Vec<DiagnosticRow> = Vec::new();
    let ns = spec.scaling.lattice_sizes()?;

    // scaling validity ratios and the auxiliary weight properties
    for &n in &ns {
        let plan = spec.scaling.plan_for(n)?;
        let report = plan.validate()?;
        for (name, value) in &report.ratios {
            rows.push(DiagnosticRow {
                check: "scaling-ratio".into(),
                parameters: format!("N={n};ratio={name}"),
                value: *value,
                threshold: 1.0,
                pass: *value < 1.0,
            });
        }
        if plan.sigma > 1.0 {
            let weight = AuxiliaryWeight::new(n, plan.sigma)?;
            let wr = weight.properties(10_000);
            rows.push(DiagnosticRow {
                check: "auxiliary-weight-derivative".into(),
                parameters: format!("N={n};sigma={}", plan.sigma),
                value: wr.max_scaled_derivative,
                threshold: 2.0,
                pass: wr.derivative_bound_ok,
            });
            rows.push(DiagnosticRow {
                check: "auxiliary-weight-total-variation".into(),
                parameters: format!("N={n};sigma={}", plan.sigma),
                value: wr.total_variation,
                threshold: 2.0,
                pass: wr.total_variation_ok && wr.endpoints_zero && wr.in_unit_range,
            });
        }
    }

    // Otto checks on the solver output for the configured data
    if let Some(initial) = &spec.initial {
        let plan = spec.scaling.plan_for(ns[0])?;
        let schedule = spec.schedule_or_default(&plan)?;
        let flux = FluxFn::new(plan.p)?;
        let u0 = initial.profile(spec.solver_cells)?;
        let times = uniform_times(spec.horizon, spec.sample_count.min(200));
        let out = solve(
            &u0,
            &schedule,
            flux,
            spec.horizon,
            spec.solver_cells,
            &times,
            spec.cfl,
        )?;
        let pair = SmoothedKruzkov::new(1e-3)?;
        let tol = 1e-3;
        for &h in &spec.diagnostics.h_values {
            for (name, psi) in otto_test_functions(spec.horizon) {
                let (lhs, rhs) =
                    otto_integral_inequality(&out.field, &pair, h, &psi, &u0, &schedule, plan.p)?;
                rows.push(DiagnosticRow {
                    check: "otto-integral-inequality".into(),
                    parameters: format!("h={h};psi={name}"),
                    value: lhs - rhs,
                    threshold: tol,
                    pass: lhs <= rhs + tol,
                });
            }
        }
        let phi = |_: f64| 1.0;
        for cells in [2usize, 4, 8] {
            let r = cells as f64 / spec.solver_cells as f64;
            let left = otto_boundary_check(&out.field, &pair, &schedule, Side::Left, r, &phi)?;
            let right = otto_boundary_check(&out.field, &pair, &schedule, Side::Right, r, &phi)?;
            rows.push(DiagnosticRow {
                check: "otto-boundary-left".into(),
                parameters: format!("r={cells}dx"),
                value: left,
                threshold: tol,
                pass: left <= tol,
            });
            rows.push(DiagnosticRow {
                check: "otto-boundary-right".into(),
                parameters: format!("r={cells}dx"),
                value: right,
                threshold: -tol,
                pass: right >= -tol,
            });
        }
    }

    // block-estimate residual trends from KMC ensembles
    if let Some(initial) = &spec.initial {
        let base_plan = spec.scaling.plan_for(ns[0])?;
        let mut ks: Vec<usize> = vec![4, base_plan.k];
        ks.extend(&spec.diagnostics.k_values);
        ks.retain(|&k| k >= 1 && 2 * k < base_plan.n);
        ks.sort_unstable();
        ks.dedup();
        let sigma_tildes = if spec.diagnostics.sigma_tilde_values.is_empty() {
            vec![base_plan.sigma_tilde]
        } else {
            spec.diagnostics.sigma_tilde_values.clone()
        };
        let u0 = initial.profile(base_plan.n)?;
        for (si, &sigma_tilde) in sigma_tildes.iter().enumerate() {
            let plan = ScalingPlan::exploratory(
                base_plan.n,
                base_plan.sigma,
                sigma_tilde,
                base_plan.k,
                base_plan.p,
            )?;
            let schedule = spec.schedule_or_default(&plan)?;
            let task_seed = replica_seed(spec.seed, 0xd100 + si as u64);
            manifest.tasks.push(task_manifest(
                &format!("diagnostics-sigma-tilde-{sigma_tilde}"),
                task_seed,
                spec.replicas,
            ));
            let ensembles = block_residual_ensemble(
                &plan,
                &schedule,
                &u0,
                spec.horizon,
                spec.burn_in_fraction,
                spec.sample_count,
                spec.replicas,
                task_seed,
                &ks,
            )?;
            for e in &ensembles {
                let (ob, h1, bl, br) = e.means();
                for (check, value) in [
                    ("one-block-residual", ob),
                    ("h1-residual", h1),
                    ("boundary-residual-left", bl),
                    ("boundary-residual-right", br),
                ] {
                    rows.push(DiagnosticRow {
                        check: check.into(),
                        parameters: format!("K={};sigma_tilde={}", e.k, sigma_tilde),
                        value,
                        threshold: f64::INFINITY,
                        pass: true,
                    });
                }
            }
        }
    }

    let lines: Vec<String> = rows.iter().map(|r| r.csv()).collect();
    writer.write_rows("diagnostics.csv", DIAGNOSTIC_HEADER, &lines)?;
    outcome.diagnostics = rows;
    Ok(())
}
