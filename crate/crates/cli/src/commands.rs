//! The actual subcommand implementations. Each writes a CSV time series and
//! a manifest into the output directory; see the crate README for formats.

use std::path::Path;
use std::time::Instant;

use avqds::metrics::{
    cnot_estimate_ops, fit_scaling, infidelity, trajectory_stats, ScalingFit, ScalingModel,
};
use avqds::oracle::{exact_evolve, OracleConfig};
use avqds::pauli::PauliString;
use avqds::solvers::{
    derive_seed, run_trajectory, run_vectorized, reconstruct_density, TrajectoryRecord,
};
use avqds::state::StateVector;

use crate::config::{Method, RunConfig};
use crate::output::{
    config_sha256, fmt_f64, out_file, read_csv, read_density_dump, write_json, write_manifest,
    CsvWriter, DensityDump, Manifest, TIMESERIES_COLUMNS,
};
use crate::{AppError, AppResult};

/// Install a rayon pool of the requested size and run the closure inside it;
/// `workers == 0` means the default pool. Without the `parallel` feature the
/// closure just runs (everything is sequential anyway).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> AppResult<T> {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| AppError::Runtime(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}

pub struct FarmOutput {
    pub records: Vec<TrajectoryRecord>,
    pub failed_indices: Vec<usize>,
}

/// Run the configured number of trajectories with per-index seeds derived
/// from the master seed. Individual failures are recorded and skipped; the
/// aggregation is an index-ordered reduction, so results do not depend on
/// the worker count.
pub fn trajectory_farm(cfg: &RunConfig) -> AppResult<FarmOutput> {
    let model = cfg.lindblad_model()?;
    let solver_cfg = cfg.solver_config();
    let master = cfg.master_seed;
    let inject = cfg.inject_failures.clone();
    let n = cfg.n_trajectories;

    let results = with_workers(cfg.workers, {
        let model = model.clone();
        let solver_cfg = solver_cfg.clone();
        move || {
            let indices: Vec<u64> = (0..n as u64).collect();
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                indices
                    .into_par_iter()
                    .map(|idx| {
                        if inject.contains(&(idx as usize)) {
                            return Err(avqds::SimError::SolverFailure {
                                time: None,
                                reason: "injected failure".into(),
                            });
                        }
                        run_trajectory(&model, &solver_cfg, derive_seed(master, idx))
                    })
                    .collect::<Vec<_>>()
            }
            #[cfg(not(feature = "parallel"))]
            {
                indices
                    .into_iter()
                    .map(|idx| {
                        if inject.contains(&(idx as usize)) {
                            return Err(avqds::SimError::SolverFailure {
                                time: None,
                                reason: "injected failure".into(),
                            });
                        }
                        run_trajectory(&model, &solver_cfg, derive_seed(master, idx))
                    })
                    .collect::<Vec<_>>()
            }
        }
    })?;

    let mut records = Vec::with_capacity(results.len());
    let mut failed = Vec::new();
    for (idx, res) in results.into_iter().enumerate() {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => {
                eprintln!("trajectory {idx} failed: {e}");
                failed.push(idx);
            }
        }
    }
    if records.is_empty() {
        return Err(AppError::Runtime("every trajectory failed".into()));
    }
    Ok(FarmOutput { records, failed_indices: failed })
}

/// Ladder-CNOT count of the first `count` adopted operators.
fn cnot_prefix(ops: &[PauliString], count: usize) -> usize {
    cnot_estimate_ops(&ops[..count.min(ops.len())]).cnot_estimate
}

/// `run-trajectory`: farm + aggregated CSV + manifest.
pub fn cmd_run_trajectory(cfg: &RunConfig, out_dir: &Path) -> AppResult<()> {
    let started = Instant::now();
    let farm = trajectory_farm(cfg)?;
    let n = farm.records.len();
    let first = &farm.records[0];
    let len = first.times.len();

    let mut csv = CsvWriter::create(&out_file(out_dir, "timeseries.csv"), TIMESERIES_COLUMNS)?;
    for i in 0..len {
        let energies: Vec<f64> = farm.records.iter().map(|r| r.observables["energy"][i]).collect();
        let mean = energies.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var =
                energies.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        let gamma = farm.records.iter().map(|r| r.gamma_log[i]).sum::<f64>() / n as f64;
        let params =
            farm.records.iter().map(|r| r.cumulative_ops[i] as f64).sum::<f64>() / n as f64;
        let cnots = farm
            .records
            .iter()
            .map(|r| cnot_prefix(&r.ops_added, r.cumulative_ops[i]) as f64)
            .sum::<f64>()
            / n as f64;
        csv.row(&[
            fmt_f64(first.times[i]),
            fmt_f64(mean),
            fmt_f64(stderr),
            fmt_f64(gamma),
            fmt_f64(params),
            fmt_f64(cnots),
        ])?;
    }
    csv.finish()?;

    let complete = farm.failed_indices.is_empty();
    write_manifest(
        &out_file(out_dir, "manifest.json"),
        &Manifest {
            schema_version: 1,
            command: "run-trajectory",
            csv_columns: TIMESERIES_COLUMNS.iter().map(|s| s.to_string()).collect(),
            config: cfg,
            config_sha256: config_sha256(cfg),
            package_version: env!("CARGO_PKG_VERSION"),
            master_seed: cfg.master_seed,
            n_trajectories: n,
            n_failures: farm.failed_indices.len(),
            failed_indices: farm.failed_indices,
            complete,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(())
}

/// `run-vectorized`: single vectorized evolution, CSV + final density dump.
pub fn cmd_run_vectorized(cfg: &RunConfig, out_dir: &Path) -> AppResult<()> {
    let started = Instant::now();
    let model = cfg.lindblad_model()?;
    let mut solver_cfg = cfg.solver_config();
    if solver_cfg.snapshot_stride == 0 {
        // the final density dump needs at least the endpoint snapshot
        solver_cfg.snapshot_stride = usize::MAX;
    }
    let rec = with_workers(cfg.workers, {
        let model = model.clone();
        let solver_cfg = solver_cfg.clone();
        move || run_vectorized(&model, &solver_cfg)
    })??;

    let mut csv = CsvWriter::create(&out_file(out_dir, "timeseries.csv"), TIMESERIES_COLUMNS)?;
    for i in 0..rec.times.len() {
        csv.row(&[
            fmt_f64(rec.times[i]),
            fmt_f64(rec.observables["energy"][i]),
            "0".to_string(),
            fmt_f64(rec.gamma_log[i]),
            fmt_f64(rec.ansatz_sizes[i] as f64),
            fmt_f64(cnot_prefix(&rec.ops_added, rec.ansatz_sizes[i]) as f64),
        ])?;
    }
    csv.finish()?;

    let (rho, dev) = reconstruct_density(&rec, cfg.t_f, false)?;
    write_json(&out_file(out_dir, "rho_final.json"), &DensityDump::from_matrix(&rho, dev))?;

    write_manifest(
        &out_file(out_dir, "manifest.json"),
        &Manifest {
            schema_version: 1,
            command: "run-vectorized",
            csv_columns: TIMESERIES_COLUMNS.iter().map(|s| s.to_string()).collect(),
            config: cfg,
            config_sha256: config_sha256(cfg),
            package_version: env!("CARGO_PKG_VERSION"),
            master_seed: cfg.master_seed,
            n_trajectories: 0,
            n_failures: 0,
            failed_indices: vec![],
            complete: true,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(())
}

/// `exact`: dense reference solution from |+⟩^{⊗N}; CSV with oracle
/// diagnostics plus the final density dump.
pub fn cmd_exact(cfg: &RunConfig, out_dir: &Path) -> AppResult<()> {
    let started = Instant::now();
    let model = cfg.lindblad_model()?;
    let rho0 = StateVector::plus_state(cfg.n_spins).projector();
    let stride = (cfg.dt / cfg.oracle_dt).round().max(1.0) as usize;
    let oracle_cfg = OracleConfig { dt: cfg.oracle_dt, record_stride: stride * cfg.record_stride };
    let series = exact_evolve(&model, &rho0, cfg.t_f, &oracle_cfg)?;

    let columns = &["t", "energy", "trace", "purity"];
    let mut csv = CsvWriter::create(&out_file(out_dir, "timeseries.csv"), columns)?;
    for (t, rho) in series.times.iter().zip(&series.states) {
        let h = model.hamiltonian.hamiltonian(*t)?;
        let energy = rho.pauli_trace(&h)?.re;
        csv.row(&[
            fmt_f64(*t),
            fmt_f64(energy),
            fmt_f64(rho.trace().re),
            fmt_f64(rho.purity()),
        ])?;
    }
    csv.finish()?;

    let last = series.states.last().expect("endpoint recorded");
    let dev = (last.trace() - num_complex::Complex64::new(1.0, 0.0)).norm();
    write_json(&out_file(out_dir, "rho_final.json"), &DensityDump::from_matrix(last, dev))?;

    write_manifest(
        &out_file(out_dir, "manifest.json"),
        &Manifest {
            schema_version: 1,
            command: "exact",
            csv_columns: columns.iter().map(|s| s.to_string()).collect(),
            config: cfg,
            config_sha256: config_sha256(cfg),
            package_version: env!("CARGO_PKG_VERSION"),
            master_seed: cfg.master_seed,
            n_trajectories: 0,
            n_failures: 0,
            failed_indices: vec![],
            complete: true,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(())
}

#[derive(Debug, serde::Serialize)]
pub struct CompareReport {
    pub n_points: usize,
    pub max_abs_energy_error: f64,
    pub final_infidelity: Option<f64>,
}

/// `compare`: join two time-series CSVs on t and emit energy-error columns;
/// when both sides carry a `rho_final.json`, also the final trace-norm
/// infidelity.
pub fn cmd_compare(a: &Path, b: &Path, out_dir: &Path) -> AppResult<CompareReport> {
    let ta = read_csv(a)?;
    let tb = read_csv(b)?;
    let (t_a, e_a) = (ta.column("t")?, ta.column("energy")?);
    let (t_b, e_b) = (tb.column("t")?, tb.column("energy")?);

    let columns = &["t", "energy_a", "energy_b", "abs_error"];
    let mut csv = CsvWriter::create(&out_file(out_dir, "compare.csv"), columns)?;
    let mut max_err = 0.0f64;
    let mut n_points = 0usize;
    let mut j = 0usize;
    for (i, t) in t_a.iter().enumerate() {
        while j < t_b.len() && t_b[j] < t - 1e-9 {
            j += 1;
        }
        if j >= t_b.len() {
            break;
        }
        if (t_b[j] - t).abs() <= 1e-9 {
            let err = (e_a[i] - e_b[j]).abs();
            max_err = max_err.max(err);
            n_points += 1;
            csv.row(&[fmt_f64(*t), fmt_f64(e_a[i]), fmt_f64(e_b[j]), fmt_f64(err)])?;
        }
    }
    csv.finish()?;
    if n_points == 0 {
        return Err(AppError::Validation("time grids share no points".into()));
    }

    let rho_a = a.parent().map(|d| d.join("rho_final.json")).filter(|p| p.exists());
    let rho_b = b.parent().map(|d| d.join("rho_final.json")).filter(|p| p.exists());
    let final_infidelity = match (rho_a, rho_b) {
        (Some(pa), Some(pb)) => {
            let ra = read_density_dump(&pa)?.to_matrix()?;
            let rb = read_density_dump(&pb)?.to_matrix()?;
            Some(infidelity(&ra, &rb).map_err(|e| AppError::Runtime(e.to_string()))?)
        }
        _ => None,
    };

    let report = CompareReport { n_points, max_abs_energy_error: max_err, final_infidelity };
    write_json(&out_file(out_dir, "report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, serde::Serialize)]
pub struct ScalingRow {
    pub data: String,
    pub points: Vec<(f64, f64)>,
    pub b: f64,
    pub r2_poly: f64,
    pub r2_exp: f64,
    pub power: (f64, f64),
    pub exponential: (f64, f64),
    pub converged: bool,
}

#[derive(Debug, serde::Serialize)]
pub struct ScalingReport {
    pub n_range: Vec<usize>,
    pub rows: Vec<ScalingRow>,
}

fn fit_row(name: &str, points: Vec<(f64, f64)>) -> AppResult<ScalingRow> {
    let poly: ScalingFit =
        fit_scaling(&points, ScalingModel::Power).map_err(|e| AppError::Runtime(e.to_string()))?;
    let expo = fit_scaling(&points, ScalingModel::Exponential)
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    Ok(ScalingRow {
        data: name.to_string(),
        points,
        b: poly.params.1,
        r2_poly: poly.r_squared,
        r2_exp: expo.r_squared,
        power: poly.params,
        exponential: expo.params,
        converged: poly.converged && expo.converged,
    })
}

/// `scaling`: sweep system sizes, count adopted operators, and fit both the
/// power-law and exponential models to each data series.
///
/// Trajectory rows aggregate the per-trajectory cumulative operator count at
/// t_f over the ensemble (mean/median/max); vectorized rows use the final
/// ansatz size at each listed threshold, with the (0, 0) point prepended.
pub fn cmd_scaling(
    cfg: &RunConfig,
    n_min: usize,
    n_max: usize,
    vec_thresholds: &[f64],
    out_dir: &Path,
) -> AppResult<ScalingReport> {
    if n_min < 1 || n_max < n_min {
        return Err(AppError::Validation(format!("bad size range {n_min}..{n_max}")));
    }
    let sizes: Vec<usize> = (n_min..=n_max).collect();

    let mut traj_mean = Vec::new();
    let mut traj_median = Vec::new();
    let mut traj_max = Vec::new();
    for &n in &sizes {
        let mut sub = cfg.clone();
        sub.n_spins = n;
        sub.method = Method::Trajectory;
        let farm = trajectory_farm(&sub)?;
        let stats =
            trajectory_stats(&farm.records).map_err(|e| AppError::Runtime(e.to_string()))?;
        let last = stats.times.len() - 1;
        traj_mean.push((n as f64, stats.mean[last]));
        traj_median.push((n as f64, stats.median[last]));
        traj_max.push((n as f64, stats.max[last]));
    }

    let mut rows = vec![
        fit_row("trajectory_mean", traj_mean)?,
        fit_row("trajectory_median", traj_median)?,
        fit_row("trajectory_max", traj_max)?,
    ];

    for &r in vec_thresholds {
        // the vectorized counts are non-monotonic in N, so the fits are
        // anchored with (0, 0)
        let mut points = vec![(0.0, 0.0)];
        for &n in &sizes {
            let mut sub = cfg.clone();
            sub.n_spins = n;
            sub.method = Method::Vectorized;
            sub.adaptive.r = Some(r);
            let model = sub.lindblad_model()?;
            let solver_cfg = sub.solver_config();
            let rec = with_workers(sub.workers, {
                let model = model.clone();
                let solver_cfg = solver_cfg.clone();
                move || run_vectorized(&model, &solver_cfg)
            })??;
            points.push((n as f64, rec.final_ansatz.len() as f64));
        }
        rows.push(fit_row(&format!("vectorized_r{r:e}"), points)?);
    }

    let report = ScalingReport { n_range: sizes, rows };
    write_json(&out_file(out_dir, "scaling_report.json"), &report)?;

    let mut csv = CsvWriter::create(&out_file(out_dir, "scaling_points.csv"), &["data", "n", "count"])?;
    for row in &report.rows {
        for (n, y) in &row.points {
            csv.row(&[row.data.clone(), fmt_f64(*n), fmt_f64(*y)])?;
        }
    }
    csv.finish()?;

    println!("{:<22} {:>8} {:>12} {:>12}", "data", "b", "R2(poly)", "R2(exp)");
    for row in &report.rows {
        println!(
            "{:<22} {:>8.3} {:>12.4} {:>12.4}",
            row.data, row.b, row.r2_poly, row.r2_exp
        );
    }
    Ok(report)
}

#[derive(Debug, serde::Serialize)]
pub struct FitReport {
    pub rows: Vec<ScalingRow>,
}

/// `fit`: least-squares fits for an (N, y) CSV.
pub fn cmd_fit(input: &Path, model: Option<ScalingModel>, out: Option<&Path>) -> AppResult<FitReport> {
    let table = read_csv(input)?;
    if table.columns.len() < 2 {
        return Err(AppError::Validation("fit input needs two columns (N, y)".into()));
    }
    let points: Vec<(f64, f64)> = table.rows.iter().map(|r| (r[0], r[1])).collect();
    let mut rows = Vec::new();
    match model {
        Some(ScalingModel::Power) => {
            let f = fit_scaling(&points, ScalingModel::Power)
                .map_err(|e| AppError::Runtime(e.to_string()))?;
            rows.push(ScalingRow {
                data: "power".into(),
                points: points.clone(),
                b: f.params.1,
                r2_poly: f.r_squared,
                r2_exp: f64::NAN,
                power: f.params,
                exponential: (f64::NAN, f64::NAN),
                converged: f.converged,
            });
        }
        Some(ScalingModel::Exponential) => {
            let f = fit_scaling(&points, ScalingModel::Exponential)
                .map_err(|e| AppError::Runtime(e.to_string()))?;
            rows.push(ScalingRow {
                data: "exponential".into(),
                points: points.clone(),
                b: f64::NAN,
                r2_poly: f64::NAN,
                r2_exp: f.r_squared,
                power: (f64::NAN, f64::NAN),
                exponential: f.params,
                converged: f.converged,
            });
        }
        None => rows.push(fit_row("both", points)?),
    }
    let report = FitReport { rows };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| AppError::Runtime(format!("serialize: {e}")))?;
    println!("{text}");
    if let Some(dir) = out {
        write_json(&out_file(dir, "fit_report.json"), &report)?;
    }
    Ok(report)
}

/// Reference oracle energies on the variational grid (used by tests and the
/// `compare` workflow).
pub fn oracle_energy_series(cfg: &RunConfig) -> AppResult<(Vec<f64>, Vec<f64>)> {
    let model = cfg.lindblad_model()?;
    let rho0 = StateVector::plus_state(cfg.n_spins).projector();
    let stride = (cfg.dt / cfg.oracle_dt).round().max(1.0) as usize;
    let series = exact_evolve(
        &model,
        &rho0,
        cfg.t_f,
        &OracleConfig { dt: cfg.oracle_dt, record_stride: stride * cfg.record_stride },
    )?;
    let mut energies = Vec::with_capacity(series.times.len());
    for (t, rho) in series.times.iter().zip(&series.states) {
        let h = model.hamiltonian.hamiltonian(*t)?;
        energies.push(rho.pauli_trace(&h)?.re);
    }
    Ok((series.times, energies))
}
