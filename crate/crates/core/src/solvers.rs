//! Top-level drivers: the vectorization and trajectory evolutions, the
//! trajectory batch runner, ensemble averaging, density reconstruction, and
//! vectorized observable evaluation.
//!
//! Both drivers loop (adaptive growth → parameter step → Γ accumulation)
//! over a fixed grid t_i = i·dt. Diagnostics are recorded at the stride
//! (index 0 and the endpoint always included); at recorded point t_i the
//! state is φ(t_i), the ansatz size includes any growth performed at t_i,
//! and Γ is the log-norm accumulated up to t_i.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptive::{adaptive_step, build_pool, AdaptiveConfig, OperatorPool, PoolKind};
use crate::error::SimError;
use crate::models::{trajectory_effective, vectorized_effective, LindbladModel};
use crate::parallel::par_map;
use crate::pauli::{PauliString, PauliSum};
use crate::state::{unvec_state, DensityMatrix, StateVector};
use crate::variational::{
    assemble_eom, euler_step, solve_theta_dot, Ansatz,
};
use crate::Result;

/// A sampled jump must act with at least this norm; smaller means its
/// probability weight was spurious and the channel is excluded.
const JUMP_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// θ ← θ + θ̇·dt, the reproduction default.
    Euler,
    /// Heun predictor-corrector on θ̇ with the ansatz frozen after growth.
    Heun,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_f: f64,
    /// Tikhonov parameter for every M-solve.
    pub lambda: f64,
    pub pool: PoolKind,
    pub adaptive: AdaptiveConfig,
    /// Diagnostics every this many grid steps.
    pub record_stride: usize,
    /// State snapshots every this many grid steps; 0 disables them.
    pub snapshot_stride: usize,
    pub integrator: Integrator,
    /// Also record the full McLachlan distance and its lower bound per step.
    pub record_mclachlan: bool,
}

impl SolverConfig {
    /// Trajectory-method defaults: dt 0.01, t_f 10, λ 1e-8, pool P2, r 1e-4.
    pub fn trajectory_default() -> Self {
        SolverConfig {
            dt: 0.01,
            t_f: 10.0,
            lambda: 1e-8,
            pool: PoolKind::P2,
            adaptive: AdaptiveConfig::unrestricted(1e-4),
            record_stride: 1,
            snapshot_stride: 0,
            integrator: Integrator::Euler,
            record_mclachlan: false,
        }
    }

    /// Vectorization-method defaults: pool P3 and the tighter r 1e-6.
    pub fn vectorized_default() -> Self {
        SolverConfig {
            pool: PoolKind::P3,
            adaptive: AdaptiveConfig::unrestricted(1e-6),
            ..SolverConfig::trajectory_default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(SimError::invalid("dt", self.dt));
        }
        if self.t_f < 0.0 || !self.t_f.is_finite() {
            return Err(SimError::invalid("t_f", self.t_f));
        }
        if self.lambda < 0.0 {
            return Err(SimError::invalid("lambda", self.lambda));
        }
        if self.record_stride == 0 {
            return Err(SimError::invalid("record_stride", 0.0));
        }
        Ok(())
    }

    fn n_steps(&self) -> usize {
        (self.t_f / self.dt).round() as usize
    }
}

/// One stochastic trajectory: diagnostics on the recording grid plus the
/// jump log and the cumulative list of operators the adaptive procedure
/// adopted over the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub times: Vec<f64>,
    /// Current ansatz depth at each recorded time (resets at jumps).
    pub ansatz_sizes: Vec<usize>,
    /// Total operators adopted up to each recorded time (never resets).
    pub cumulative_ops: Vec<usize>,
    /// Log-norm Γ since the last jump, at each recorded time.
    pub gamma_log: Vec<f64>,
    /// (time, channel index) for each jump, in order.
    pub jump_events: Vec<(f64, usize)>,
    /// (time, normalized state) snapshots; empty unless requested.
    pub snapshots: Vec<(f64, StateVector)>,
    pub observables: BTreeMap<String, Vec<f64>>,
    /// Every operator adopted over the run, in adoption order.
    pub ops_added: Vec<PauliString>,
}

/// One vectorized evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedRecord {
    pub times: Vec<f64>,
    pub ansatz_sizes: Vec<usize>,
    pub gamma_log: Vec<f64>,
    pub observables: BTreeMap<String, Vec<f64>>,
    /// (time, Γ, normalized doubled-register state); empty unless requested.
    pub snapshots: Vec<(f64, f64, StateVector)>,
    pub final_ansatz: Ansatz,
    pub final_gamma: f64,
    pub ops_added: Vec<PauliString>,
}

/// Deterministic per-trajectory seed from (master seed, trajectory index);
/// splitmix64 keeps the streams decorrelated.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Recorder {
    times: Vec<f64>,
    sizes: Vec<usize>,
    cumulative: Vec<usize>,
    gammas: Vec<f64>,
    energies: Vec<f64>,
    extras: BTreeMap<&'static str, Vec<f64>>,
}

impl Recorder {
    fn new(mclachlan: bool, vectorized: bool) -> Self {
        let mut extras = BTreeMap::new();
        if mclachlan {
            extras.insert("mclachlan_d", Vec::new());
            extras.insert("lower_bound", Vec::new());
        }
        if vectorized {
            extras.insert("trace", Vec::new());
        }
        Recorder {
            times: Vec::new(),
            sizes: Vec::new(),
            cumulative: Vec::new(),
            gammas: Vec::new(),
            energies: Vec::new(),
            extras,
        }
    }

    fn push(
        &mut self,
        t: f64,
        size: usize,
        cumulative: usize,
        gamma: f64,
        energy: f64,
        mclachlan: Option<(f64, f64)>,
        trace: Option<f64>,
    ) {
        self.times.push(t);
        self.sizes.push(size);
        self.cumulative.push(cumulative);
        self.gammas.push(gamma);
        self.energies.push(energy);
        if let Some(series) = self.extras.get_mut("mclachlan_d") {
            series.push(mclachlan.map_or(f64::NAN, |m| m.0));
        }
        if let Some(series) = self.extras.get_mut("lower_bound") {
            series.push(mclachlan.map_or(f64::NAN, |m| m.1));
        }
        if let Some(series) = self.extras.get_mut("trace") {
            series.push(trace.unwrap_or(f64::NAN));
        }
    }

    fn observables(self) -> (Vec<f64>, Vec<usize>, Vec<usize>, Vec<f64>, BTreeMap<String, Vec<f64>>) {
        let mut map = BTreeMap::new();
        map.insert("energy".to_string(), self.energies);
        for (k, v) in self.extras {
            map.insert(k.to_string(), v);
        }
        (self.times, self.sizes, self.cumulative, self.gammas, map)
    }
}

/// Alg.-2 style stochastic unravelling of one trajectory.
///
/// Reference state |+⟩^{⊗N}; the wait-time loop compares e^{-Γ} against a
/// pre-drawn uniform q, and a jump fires at the first grid point where the
/// comparison fails. The jump applies L_i (sampled by ⟨L†L⟩ weight),
/// renormalizes, resets the ansatz and Γ, and redraws q. A jump consumes
/// one grid step.
pub fn run_trajectory(model: &LindbladModel, cfg: &SolverConfig, seed: u64) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let n = model.n_spins();
    let pool = build_pool(cfg.pool, n)?;
    run_trajectory_with_pool(model, cfg, seed, &pool)
}

/// [`run_trajectory`] with a caller-supplied pool (pool studies).
pub fn run_trajectory_with_pool(
    model: &LindbladModel,
    cfg: &SolverConfig,
    seed: u64,
    pool: &OperatorPool,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    check_window(model, cfg)?;
    let n = model.n_spins();
    if pool.n_qubits != n {
        return Err(SimError::QubitCountMismatch { left: pool.n_qubits, right: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ansatz = Ansatz::new(StateVector::plus_state(n));
    let mut gamma = 0.0_f64;
    let mut q: f64 = rng.random();
    let n_steps = cfg.n_steps();
    let mut rec = Recorder::new(cfg.record_mclachlan, false);
    let mut jump_events = Vec::new();
    let mut snapshots = Vec::new();
    let mut ops_added = Vec::new();

    for i in 0..=n_steps {
        let t = i as f64 * cfg.dt;
        let record_here = i % cfg.record_stride == 0 || i == n_steps;
        let snapshot_here = cfg.snapshot_stride > 0 && (i % cfg.snapshot_stride == 0 || i == n_steps);

        if i == n_steps {
            if record_here {
                let phi = ansatz.state();
                let energy = energy_of(model, t, &phi)?;
                rec.push(t, ansatz.len(), ops_added.len(), gamma, energy, None, None);
            }
            if snapshot_here {
                snapshots.push((t, ansatz.state()));
            }
            break;
        }

        if (-gamma).exp() >= q {
            // deterministic branch
            let h_eff = trajectory_effective(model, t).map_err(|e| at_time(e, t))?;
            let outcome = adaptive_step(&mut ansatz, &h_eff, pool, &cfg.adaptive, cfg.lambda)
                .map_err(|e| at_time(e, t))?;
            ops_added.extend_from_slice(&outcome.added);

            if record_here {
                let phi = ansatz.state();
                let energy = energy_of(model, t, &phi)?;
                let mcl = cfg.record_mclachlan.then(|| (outcome.d_full(), outcome.lower_bound));
                rec.push(t, ansatz.len(), ops_added.len(), gamma, energy, mcl, None);
            }
            if snapshot_here {
                snapshots.push((t, ansatz.state()));
            }

            let h_a_exp = -outcome.h_exp.im;
            match cfg.integrator {
                Integrator::Euler => {
                    euler_step(&mut ansatz, &outcome.theta_dot, cfg.dt).map_err(|e| at_time(e, t))?;
                    gamma += 2.0 * h_a_exp * cfg.dt;
                }
                Integrator::Heun => {
                    let h_a_next = heun_step(
                        model,
                        &mut ansatz,
                        &outcome.theta_dot,
                        t,
                        cfg,
                        HeunGenerator::Trajectory,
                    )
                    .map_err(|e| at_time(e, t))?;
                    gamma += (h_a_exp + h_a_next) * cfg.dt;
                }
            }
            if !gamma.is_finite() {
                return Err(SimError::SolverFailure { time: Some(t), reason: "non-finite gamma".into() });
            }
        } else {
            // jump branch
            if record_here {
                let phi = ansatz.state();
                let energy = energy_of(model, t, &phi)?;
                rec.push(t, ansatz.len(), ops_added.len(), gamma, energy, None, None);
            }
            if snapshot_here {
                snapshots.push((t, ansatz.state()));
            }
            let phi = ansatz.state();
            let (channel, jumped) = sample_jump(model, &phi, &mut rng).map_err(|e| at_time(e, t))?;
            jump_events.push((t, channel));
            ansatz.set_reference(jumped);
            ansatz.clear_layers();
            gamma = 0.0;
            q = rng.random();
        }
    }

    let (times, sizes, cumulative, gammas, observables) = rec.observables();
    Ok(TrajectoryRecord {
        seed,
        times,
        ansatz_sizes: sizes,
        cumulative_ops: cumulative,
        gamma_log: gammas,
        jump_events,
        snapshots,
        observables,
        ops_added,
    })
}

fn check_window(model: &LindbladModel, cfg: &SolverConfig) -> Result<()> {
    let window = model.hamiltonian.t_f;
    if cfg.t_f > window + 1e-12 {
        return Err(SimError::InvalidInput(format!(
            "evolution time {} exceeds the annealing schedule window {}",
            cfg.t_f, window
        )));
    }
    Ok(())
}

fn at_time(e: SimError, t: f64) -> SimError {
    match e {
        SimError::SolverFailure { time: None, reason } => {
            SimError::SolverFailure { time: Some(t), reason }
        }
        other => other,
    }
}

fn energy_of(model: &LindbladModel, t: f64, phi: &StateVector) -> Result<f64> {
    Ok(model.hamiltonian.hamiltonian(t)?.expectation(phi)?.re)
}

/// Sample the jump channel with p_i ∝ ⟨φ|L_i†L_i|φ⟩ and return the
/// renormalized post-jump state. Channels whose action has vanishing norm
/// are excluded and the draw repeats; all excluded is an inconsistency.
fn sample_jump(
    model: &LindbladModel,
    phi: &StateVector,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, StateVector)> {
    let mut weights: Vec<f64> = model
        .channels
        .iter()
        .map(|ch| ch.ldl.expectation(phi).map(|e| e.re.max(0.0)))
        .collect::<Result<_>>()?;
    loop {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(SimError::NumericalInconsistency(
                "jump fired but every channel weight vanishes".into(),
            ));
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                pick = k;
                break;
            }
            u -= w;
        }
        let jumped = model.channels[pick].op.apply(phi)?;
        let nrm = jumped.norm();
        if nrm < JUMP_NORM_EPS {
            weights[pick] = 0.0;
            continue;
        }
        return Ok((pick, jumped.scaled(Complex64::new(1.0 / nrm, 0.0))));
    }
}

enum HeunGenerator {
    Trajectory,
    Vectorized,
}

/// Predictor-corrector step; returns ⟨H_a⟩ at the predicted endpoint so the
/// caller can average the Γ increment.
fn heun_step(
    model: &LindbladModel,
    ansatz: &mut Ansatz,
    theta_dot: &DVector<f64>,
    t: f64,
    cfg: &SolverConfig,
    gen: HeunGenerator,
) -> Result<f64> {
    let t_next = (t + cfg.dt).min(cfg.t_f);
    let mut predictor = ansatz.clone();
    euler_step(&mut predictor, theta_dot, cfg.dt)?;
    let h_next = match gen {
        HeunGenerator::Trajectory => trajectory_effective(model, t_next)?,
        HeunGenerator::Vectorized => vectorized_effective(model, t_next)?,
    };
    let mut sys = assemble_eom(&predictor, &h_next)?;
    let td_next = solve_theta_dot(&mut sys, cfg.lambda)?;
    let avg = (theta_dot + td_next) * 0.5;
    euler_step(ansatz, &avg, cfg.dt)?;
    Ok(-sys.h_exp.im)
}

/// Alg.-1 style vectorized evolution from vec(ρ₀) = |+⟩^{⊗2N}.
pub fn run_vectorized(model: &LindbladModel, cfg: &SolverConfig) -> Result<VectorizedRecord> {
    cfg.validate()?;
    let nn = 2 * model.n_spins();
    let pool = build_pool(cfg.pool, nn)?;
    run_vectorized_with_pool(model, cfg, &pool)
}

/// [`run_vectorized`] with a caller-supplied pool on the doubled register.
pub fn run_vectorized_with_pool(
    model: &LindbladModel,
    cfg: &SolverConfig,
    pool: &OperatorPool,
) -> Result<VectorizedRecord> {
    cfg.validate()?;
    check_window(model, cfg)?;
    let n = model.n_spins();
    let nn = 2 * n;
    if pool.n_qubits != nn {
        return Err(SimError::QubitCountMismatch { left: pool.n_qubits, right: nn });
    }
    let mut ansatz = Ansatz::new(StateVector::plus_state(nn));
    let mut gamma = 0.0_f64;
    let n_steps = cfg.n_steps();
    let mut rec = Recorder::new(cfg.record_mclachlan, true);
    let mut snapshots = Vec::new();
    let mut ops_added = Vec::new();

    for i in 0..=n_steps {
        let t = i as f64 * cfg.dt;
        let record_here = i % cfg.record_stride == 0 || i == n_steps;
        let snapshot_here = cfg.snapshot_stride > 0 && (i % cfg.snapshot_stride == 0 || i == n_steps);

        let mut mcl = None;
        let mut outcome_opt = None;
        if i < n_steps {
            let h_eff = vectorized_effective(model, t).map_err(|e| at_time(e, t))?;
            let outcome = adaptive_step(&mut ansatz, &h_eff, pool, &cfg.adaptive, cfg.lambda)
                .map_err(|e| at_time(e, t))?;
            ops_added.extend_from_slice(&outcome.added);
            if cfg.record_mclachlan {
                mcl = Some((outcome.d_full(), outcome.lower_bound));
            }
            outcome_opt = Some(outcome);
        }

        if record_here || snapshot_here {
            let phi = ansatz.state();
            if record_here {
                let h_t = model.hamiltonian.hamiltonian(t)?;
                let energy = vectorized_pauli_expectation(&h_t, gamma, &phi)?;
                let trace = vectorized_trace(gamma, &phi);
                rec.push(t, ansatz.len(), ops_added.len(), gamma, energy, mcl, Some(trace));
            }
            if snapshot_here {
                snapshots.push((t, gamma, phi));
            }
        }

        let Some(outcome) = outcome_opt else { break };
        let h_a_exp = -outcome.h_exp.im;
        match cfg.integrator {
            Integrator::Euler => {
                euler_step(&mut ansatz, &outcome.theta_dot, cfg.dt).map_err(|e| at_time(e, t))?;
                gamma += 2.0 * h_a_exp * cfg.dt;
            }
            Integrator::Heun => {
                let h_a_next = heun_step(
                    model,
                    &mut ansatz,
                    &outcome.theta_dot,
                    t,
                    cfg,
                    HeunGenerator::Vectorized,
                )
                .map_err(|e| at_time(e, t))?;
                gamma += (h_a_exp + h_a_next) * cfg.dt;
            }
        }
        if !gamma.is_finite() {
            return Err(SimError::SolverFailure { time: Some(t), reason: "non-finite gamma".into() });
        }
    }

    let (times, sizes, _cumulative, gammas, observables) = rec.observables();
    Ok(VectorizedRecord {
        times,
        ansatz_sizes: sizes,
        gamma_log: gammas,
        observables,
        snapshots,
        final_ansatz: ansatz,
        final_gamma: gamma,
        ops_added,
    })
}

/// Tr(O · unvec(e^{-Γ/2}|φ⟩)) for a Pauli observable, straight from the
/// doubled-register state: Tr(P·V) = Σ_k phase(k)·V[k, k^x] and
/// V[r, c] = e^{-Γ/2}·φ[c·D + r].
fn vectorized_pauli_expectation(op: &PauliSum, gamma: f64, phi: &StateVector) -> Result<f64> {
    let n = phi.n_qubits() / 2;
    if op.n_qubits() != n {
        return Err(SimError::QubitCountMismatch { left: op.n_qubits(), right: n });
    }
    let dim = 1usize << n;
    let scale = (-gamma / 2.0).exp();
    let mut acc = Complex64::new(0.0, 0.0);
    for (c, p) in op.terms() {
        let x = p.x_mask() as usize;
        let z = p.z_mask() as usize;
        let cp = c * p.global_phase();
        let mut t = Complex64::new(0.0, 0.0);
        for k in 0..dim {
            let sign = if (z & k).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            // row k, column k^x of the unvectorized matrix
            t += sign * phi.amplitudes()[(k ^ x) * dim + k];
        }
        acc += cp * t;
    }
    Ok((acc * scale).re)
}

fn vectorized_trace(gamma: f64, phi: &StateVector) -> f64 {
    let n = phi.n_qubits() / 2;
    let dim = 1usize << n;
    let scale = (-gamma / 2.0).exp();
    let tr: Complex64 = (0..dim).map(|k| phi.amplitudes()[k * dim + k]).sum();
    (tr * scale).re
}

/// Run `n_trajectories` with per-index seeds derived from the master seed.
/// Parallel under the `parallel` feature; output order is by index either
/// way, so aggregation is deterministic.
pub fn run_trajectory_batch(
    model: &LindbladModel,
    cfg: &SolverConfig,
    master_seed: u64,
    n_trajectories: usize,
) -> Vec<Result<TrajectoryRecord>> {
    par_map((0..n_trajectories as u64).collect(), move |idx| {
        run_trajectory(model, cfg, derive_seed(master_seed, idx))
    })
}

/// Sequential twin of [`run_trajectory_batch`] (benchmark baseline).
pub fn run_trajectory_batch_seq(
    model: &LindbladModel,
    cfg: &SolverConfig,
    master_seed: u64,
    n_trajectories: usize,
) -> Vec<Result<TrajectoryRecord>> {
    (0..n_trajectories as u64)
        .map(|idx| run_trajectory(model, cfg, derive_seed(master_seed, idx)))
        .collect()
}

/// Ensemble averages over a set of trajectory records sharing a grid.
#[derive(Debug, Clone)]
pub struct TrajectoryAverage {
    pub times: Vec<f64>,
    /// Mean of each observable series over the ensemble.
    pub mean: BTreeMap<String, Vec<f64>>,
    /// Standard error of the mean (sample stddev / √n).
    pub stderr: BTreeMap<String, Vec<f64>>,
    /// Mean ansatz depth / cumulative-operator count per time point.
    pub mean_size: Vec<f64>,
    pub mean_cumulative: Vec<f64>,
    pub mean_gamma: Vec<f64>,
    /// ρ̄ = (1/n)Σ|ψ_j⟩⟨ψ_j| at snapshot times, when every record carries
    /// snapshots on the same grid.
    pub rho_bar: Vec<(f64, DensityMatrix)>,
}

/// ρ(t) = (1/n)Σ|ψ_j⟩⟨ψ_j| plus per-observable means and standard errors.
pub fn average_trajectories(records: &[TrajectoryRecord]) -> Result<TrajectoryAverage> {
    let first = records.first().ok_or(SimError::EmptyInput("trajectory records"))?;
    for r in records {
        if r.times != first.times {
            return Err(SimError::InvalidInput("trajectory records on different grids".into()));
        }
    }
    let n = records.len();
    let len = first.times.len();
    let mut mean = BTreeMap::new();
    let mut stderr = BTreeMap::new();
    for name in first.observables.keys() {
        let mut mu = vec![0.0; len];
        let mut se = vec![0.0; len];
        for i in 0..len {
            let vals: Vec<f64> = records.iter().map(|r| r.observables[name][i]).collect();
            let m = vals.iter().sum::<f64>() / n as f64;
            mu[i] = m;
            if n > 1 {
                let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n as f64 - 1.0);
                se[i] = (var / n as f64).sqrt();
            }
        }
        mean.insert(name.clone(), mu);
        stderr.insert(name.clone(), se);
    }
    let mean_over = |f: &dyn Fn(&TrajectoryRecord, usize) -> f64| -> Vec<f64> {
        (0..len).map(|i| records.iter().map(|r| f(r, i)).sum::<f64>() / n as f64).collect()
    };
    let mean_size = mean_over(&|r, i| r.ansatz_sizes[i] as f64);
    let mean_cumulative = mean_over(&|r, i| r.cumulative_ops[i] as f64);
    let mean_gamma = mean_over(&|r, i| r.gamma_log[i]);

    let mut rho_bar = Vec::new();
    let snap_grid: Vec<f64> = first.snapshots.iter().map(|(t, _)| *t).collect();
    if !snap_grid.is_empty()
        && records.iter().all(|r| {
            r.snapshots.len() == snap_grid.len()
                && r.snapshots.iter().zip(&snap_grid).all(|((t, _), g)| t == g)
        })
    {
        for (k, t) in snap_grid.iter().enumerate() {
            let dim = first.snapshots[k].1.dim();
            let nq = first.snapshots[k].1.n_qubits();
            let mut acc = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
            for r in records {
                acc += r.snapshots[k].1.projector().matrix();
            }
            acc /= Complex64::new(n as f64, 0.0);
            rho_bar.push((*t, DensityMatrix::new(nq, acc)?));
        }
    }

    Ok(TrajectoryAverage {
        times: first.times.clone(),
        mean,
        stderr,
        mean_size,
        mean_cumulative,
        mean_gamma,
        rho_bar,
    })
}

/// ρ = unvec(e^{-Γ/2}|φ⟩) at a snapshot time. Returns the matrix and the
/// trace deviation |Tr ρ - 1|; `renormalize` divides by the trace first.
pub fn reconstruct_density(
    rec: &VectorizedRecord,
    at_time: f64,
    renormalize: bool,
) -> Result<(DensityMatrix, f64)> {
    let (_, gamma, phi) = rec
        .snapshots
        .iter()
        .find(|(t, _, _)| (t - at_time).abs() < 1e-9)
        .ok_or_else(|| SimError::InvalidInput(format!("no snapshot at t={at_time}")))?;
    let scaled = phi.scaled(Complex64::new((-gamma / 2.0).exp(), 0.0));
    let mut rho = unvec_state(&scaled)?;
    let trace = rho.trace();
    let deviation = (trace - Complex64::new(1.0, 0.0)).norm();
    if renormalize {
        if trace.norm() < 1e-12 {
            return Err(SimError::NumericalInconsistency("vanishing trace".into()));
        }
        let m = rho.matrix() / trace;
        rho = DensityMatrix::new(rho.n_qubits(), m)?;
    }
    Ok((rho, deviation))
}

/// ⟨O⟩ at a snapshot of a vectorized run, via the vectorized-operator inner
/// product e^{-Γ/2}·√Tr(O†O)·⟨O†|φ⟩; cross-checked against
/// Tr(O·unvec(e^{-Γ/2}φ)), which is the same number by construction.
pub fn measure_observable_vectorized(
    rec: &VectorizedRecord,
    op: &PauliSum,
    at_time: f64,
) -> Result<f64> {
    if !op.is_hermitian(1e-12) {
        return Err(SimError::InvalidInput("observable must be Hermitian".into()));
    }
    let (_, gamma, phi) = rec
        .snapshots
        .iter()
        .find(|(t, _, _)| (t - at_time).abs() < 1e-9)
        .ok_or_else(|| SimError::InvalidInput(format!("no snapshot at t={at_time}")))?;
    let n = phi.n_qubits() / 2;
    if op.n_qubits() != n {
        return Err(SimError::QubitCountMismatch { left: op.n_qubits(), right: n });
    }

    // |O†⟩ = vec(O†)/√Tr(O†O)
    let norm = op.frobenius_norm_sq().sqrt();
    if norm < 1e-300 {
        return Ok(0.0);
    }
    let dim = 1usize << n;
    let mut amps = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (c, p) in op.dagger().terms() {
        let x = p.x_mask() as usize;
        let z = p.z_mask() as usize;
        let cp = c * p.global_phase();
        for col in 0..dim {
            let sign = if (z & col).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            amps[col * dim + (col ^ x)] += cp * sign;
        }
    }
    let o_vec = StateVector::from_amplitudes(2 * n, amps)?
        .scaled(Complex64::new(1.0 / norm, 0.0));
    let scale = (-gamma / 2.0).exp();
    let direct = (o_vec.inner(phi) * norm * scale).re;

    let cross_check = vectorized_pauli_expectation(op, *gamma, phi)?;
    if (direct - cross_check).abs() > 1e-10 * (1.0 + direct.abs()) {
        return Err(SimError::NumericalInconsistency(format!(
            "observable routes disagree: {direct} vs {cross_check}"
        )));
    }
    Ok(direct)
}
