//! Exact dense Lindblad integrator: the ground-truth reference everything
//! else is validated against.
//!
//! Fixed-step fourth-order Runge-Kutta on the full 2^N × 2^N density matrix.
//! The right-hand side exploits the Pauli structure of H and the channels,
//! so one evaluation is O(terms · 4^N) instead of O(8^N) matrix products.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::SimError;
use crate::models::LindbladModel;
use crate::pauli::{PauliString, PauliSum};
use crate::state::DensityMatrix;
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// RK4 step; default 1e-3, ten times finer than the variational grid.
    pub dt: f64,
    /// Keep every `record_stride`-th step (plus the endpoint).
    pub record_stride: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { dt: 1e-3, record_stride: 1 }
    }
}

/// P·ρ accumulated into `out` with weight `c`.
fn acc_pauli_left(out: &mut DMatrix<Complex64>, c: Complex64, p: &PauliString, rho: &DMatrix<Complex64>) {
    let x = p.x_mask() as usize;
    let z = p.z_mask() as usize;
    let gp = c * p.global_phase();
    let dim = rho.nrows();
    for col in 0..dim {
        for row in 0..dim {
            let src = row ^ x;
            let sign = if (z & src).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            out[(row, col)] += gp * sign * rho[(src, col)];
        }
    }
}

/// ρ·P accumulated into `out` with weight `c`.
fn acc_pauli_right(out: &mut DMatrix<Complex64>, c: Complex64, p: &PauliString, rho: &DMatrix<Complex64>) {
    let x = p.x_mask() as usize;
    let z = p.z_mask() as usize;
    let gp = c * p.global_phase();
    let dim = rho.nrows();
    for col in 0..dim {
        let sign = if (z & col).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let w = gp * sign;
        for row in 0..dim {
            out[(row, col)] += w * rho[(row, col ^ x)];
        }
    }
}

fn sum_left(s: &PauliSum, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(rho.nrows(), rho.ncols());
    for (c, p) in s.terms() {
        acc_pauli_left(&mut out, *c, p, rho);
    }
    out
}

/// The Lindblad generator: -i[H(t), ρ] + Σ(LρL† - ½{L†L, ρ}), rates absorbed.
pub fn lindblad_rhs(model: &LindbladModel, t: f64, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let n = model.n_spins();
    if rho.n_qubits() != n {
        return Err(SimError::QubitCountMismatch { left: rho.n_qubits(), right: n });
    }
    let h = model.hamiltonian.hamiltonian(t)?;
    let dim = rho.dim();
    let m = rho.matrix();
    let mut out = DMatrix::zeros(dim, dim);

    // -i(Hρ - ρH)
    let mi = Complex64::new(0.0, -1.0);
    for (c, p) in h.terms() {
        acc_pauli_left(&mut out, mi * c, p, m);
        acc_pauli_right(&mut out, -mi * c, p, m);
    }

    for ch in &model.channels {
        // L ρ L†
        let lrho = sum_left(&ch.op, m);
        for (c, p) in ch.op.dagger().terms() {
            acc_pauli_right(&mut out, *c, p, &lrho);
        }
        // -½ {L†L, ρ}
        let half = Complex64::new(-0.5, 0.0);
        for (c, p) in ch.ldl.terms() {
            acc_pauli_left(&mut out, half * c, p, m);
            acc_pauli_right(&mut out, half * c, p, m);
        }
    }
    DensityMatrix::new(n, out)
}

#[derive(Debug, Clone)]
pub struct OracleSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl OracleSeries {
    /// State at the recorded time closest to `t` (within half a grid step).
    pub fn at_time(&self, t: f64) -> Result<&DensityMatrix> {
        let (idx, dist) = self
            .times
            .iter()
            .enumerate()
            .map(|(i, &ti)| (i, (ti - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or(SimError::EmptyInput("oracle series"))?;
        let step = if self.times.len() > 1 { self.times[1] - self.times[0] } else { f64::INFINITY };
        if dist > step / 2.0 + 1e-12 {
            return Err(SimError::InvalidInput(format!("no oracle record near t={t}")));
        }
        Ok(&self.states[idx])
    }
}

/// Classic fixed-step RK4 from 0 to `t_f`, recording at the configured
/// stride (the endpoint is always recorded).
pub fn exact_evolve(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t_f: f64,
    cfg: &OracleConfig,
) -> Result<OracleSeries> {
    if cfg.dt <= 0.0 || !cfg.dt.is_finite() {
        return Err(SimError::invalid("dt", cfg.dt));
    }
    if cfg.record_stride == 0 {
        return Err(SimError::invalid("record_stride", 0.0));
    }
    if t_f < 0.0 || !t_f.is_finite() {
        return Err(SimError::invalid("t_f", t_f));
    }
    let n_steps = (t_f / cfg.dt).round() as usize;
    let dt = if n_steps > 0 { t_f / n_steps as f64 } else { cfg.dt };

    let mut rho = rho0.clone();
    let mut times = Vec::new();
    let mut states = Vec::new();
    for i in 0..=n_steps {
        let t = i as f64 * dt;
        if i % cfg.record_stride == 0 || i == n_steps {
            if rho.matrix().iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
                return Err(SimError::SolverFailure {
                    time: Some(t),
                    reason: "non-finite density matrix entries".into(),
                });
            }
            times.push(t);
            states.push(rho.clone());
        }
        if i == n_steps {
            break;
        }
        let k1 = lindblad_rhs(model, t, &rho)?;
        let k2 = lindblad_rhs(model, t + dt / 2.0, &step(&rho, &k1, dt / 2.0))?;
        let k3 = lindblad_rhs(model, t + dt / 2.0, &step(&rho, &k2, dt / 2.0))?;
        let k4 = lindblad_rhs(model, t + dt, &step(&rho, &k3, dt))?;
        let incr = k1.matrix()
            + k2.matrix() * Complex64::new(2.0, 0.0)
            + k3.matrix() * Complex64::new(2.0, 0.0)
            + k4.matrix();
        let next = rho.matrix() + incr * Complex64::new(dt / 6.0, 0.0);
        rho = DensityMatrix::new(rho.n_qubits(), next)?;
    }
    Ok(OracleSeries { times, states })
}

fn step(rho: &DensityMatrix, k: &DensityMatrix, h: f64) -> DensityMatrix {
    DensityMatrix::new(rho.n_qubits(), rho.matrix() + k.matrix() * Complex64::new(h, 0.0))
        .expect("same register")
}
