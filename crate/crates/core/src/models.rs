//! The annealing spin-chain Hamiltonian, the two Lindblad noise models, and
//! the effective non-Hermitian generators for the trajectory and
//! vectorization methods.

use num_complex::Complex64;

use crate::error::SimError;
use crate::pauli::{PauliOp, PauliString, PauliSum};
use crate::Result;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Transverse-field-to-Ising interpolation on an alternating-sector chain:
/// H(t) = A(t)·(-Σ X_i) + B(t)·(-Σ j_i Z_i Z_{i+1}) with the linear schedule
/// A = 1 - t/t_f, B = t/t_f and couplings j_i ∈ {w1, w2} chosen by the parity
/// of ⌈i/n⌉ (1-based bond index i, sector size n).
#[derive(Debug, Clone)]
pub struct AnnealingModel {
    pub n_spins: usize,
    pub sector_size: usize,
    pub w1: f64,
    pub w2: f64,
    pub t_f: f64,
    driver: PauliSum,
    problem: PauliSum,
}

impl AnnealingModel {
    pub fn new(n_spins: usize, sector_size: usize, w1: f64, w2: f64, t_f: f64) -> Result<Self> {
        if n_spins == 0 {
            return Err(SimError::invalid("n_spins", 0.0));
        }
        if sector_size == 0 {
            return Err(SimError::invalid("sector_size", 0.0));
        }
        if t_f < 0.0 || !t_f.is_finite() {
            return Err(SimError::invalid("t_f", t_f));
        }
        let mut driver = Vec::with_capacity(n_spins);
        for q in 0..n_spins {
            driver.push((c(-1.0, 0.0), PauliString::single(n_spins, q, PauliOp::X)?));
        }
        let mut problem = Vec::with_capacity(n_spins.saturating_sub(1));
        for bond in 1..n_spins {
            // 1-based bond index: j_i = w1 when ⌈i/n⌉ is odd.
            let sector = bond.div_ceil(sector_size);
            let j = if sector % 2 == 1 { w1 } else { w2 };
            problem.push((
                c(-j, 0.0),
                PauliString::two(n_spins, bond - 1, PauliOp::Z, bond, PauliOp::Z)?,
            ));
        }
        Ok(AnnealingModel {
            n_spins,
            sector_size,
            w1,
            w2,
            t_f,
            driver: PauliSum::from_terms(n_spins, driver),
            problem: PauliSum::from_terms(n_spins, problem),
        })
    }

    /// Paper defaults w1 = 1, w2 = 0.5, n = 1, t_f = 10.
    pub fn default_chain(n_spins: usize) -> Result<Self> {
        AnnealingModel::new(n_spins, 1, 1.0, 0.5, 10.0)
    }

    /// Linear schedule (A, B) at time t.
    pub fn schedule(&self, t: f64) -> Result<(f64, f64)> {
        if !t.is_finite() || t < 0.0 || t > self.t_f {
            return Err(SimError::invalid("t", t));
        }
        if self.t_f == 0.0 {
            return Ok((1.0, 0.0));
        }
        let s = t / self.t_f;
        Ok((1.0 - s, s))
    }

    /// H(t) as a Pauli sum.
    pub fn hamiltonian(&self, t: f64) -> Result<PauliSum> {
        let (a, b) = self.schedule(t)?;
        self.driver.scaled(c(a, 0.0)).add(&self.problem.scaled(c(b, 0.0)))
    }
}

/// H(t) of the annealing model; thin wrapper kept for symmetry with the
/// effective-Hamiltonian constructors.
pub fn asc_hamiltonian(model: &AnnealingModel, t: f64) -> Result<PauliSum> {
    model.hamiltonian(t)
}

/// A Lindblad channel: operator stored with its rate absorbed, L ↦ √γ L.
#[derive(Debug, Clone)]
pub struct Channel {
    /// √γ_k · L_k.
    pub op: PauliSum,
    /// Bare rate γ_k (kept for diagnostics).
    pub rate: f64,
    /// (√γ L)† (√γ L), cached; drives jump probabilities and H_a.
    pub ldl: PauliSum,
}

/// Annealing Hamiltonian plus a list of Lindblad channels.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub hamiltonian: AnnealingModel,
    pub channels: Vec<Channel>,
}

impl LindbladModel {
    pub fn closed(hamiltonian: AnnealingModel) -> Self {
        LindbladModel { hamiltonian, channels: Vec::new() }
    }

    pub fn with_channels(hamiltonian: AnnealingModel, raw: Vec<(PauliSum, f64)>) -> Result<Self> {
        let n = hamiltonian.n_spins;
        let mut channels = Vec::with_capacity(raw.len());
        for (op, rate) in raw {
            if rate < 0.0 || !rate.is_finite() {
                return Err(SimError::invalid("rate", rate));
            }
            if op.n_qubits() != n {
                return Err(SimError::QubitCountMismatch { left: op.n_qubits(), right: n });
            }
            let absorbed = op.scaled(c(rate.sqrt(), 0.0));
            let ldl = absorbed.dagger().mul(&absorbed)?;
            channels.push(Channel { op: absorbed, rate, ldl });
        }
        Ok(LindbladModel { hamiltonian, channels })
    }

    pub fn n_spins(&self) -> usize {
        self.hamiltonian.n_spins
    }

    /// ½ Σ L†L (rates absorbed), the anti-Hermitian generator of the
    /// unravelled evolution.
    pub fn half_ldl_sum(&self) -> PauliSum {
        let n = self.n_spins();
        let mut acc = PauliSum::zero(n);
        for ch in &self.channels {
            acc = acc.add(&ch.ldl).expect("channel register size");
        }
        acc.scaled(c(0.5, 0.0))
    }
}

/// Continuous dephasing: one L_i = Z_i channel per qubit, shared rate γ.
pub fn make_dephasing(model: &AnnealingModel, gamma: f64) -> Result<LindbladModel> {
    if gamma < 0.0 || !gamma.is_finite() {
        return Err(SimError::invalid("gamma", gamma));
    }
    let n = model.n_spins;
    let mut raw = Vec::with_capacity(n);
    for q in 0..n {
        let z = PauliSum::from_terms(n, vec![(c(1.0, 0.0), PauliString::single(n, q, PauliOp::Z)?)]);
        raw.push((z, gamma));
    }
    LindbladModel::with_channels(model.clone(), raw)
}

/// Incoherent energy exchange: L_i^± = (X_i ± iY_i)/2 with rates γ⁺, γ⁻.
pub fn make_amplitude_damping(
    model: &AnnealingModel,
    gamma_plus: f64,
    gamma_minus: f64,
) -> Result<LindbladModel> {
    if gamma_plus < 0.0 || !gamma_plus.is_finite() {
        return Err(SimError::invalid("gamma_plus", gamma_plus));
    }
    if gamma_minus < 0.0 || !gamma_minus.is_finite() {
        return Err(SimError::invalid("gamma_minus", gamma_minus));
    }
    let n = model.n_spins;
    let mut raw = Vec::with_capacity(2 * n);
    for q in 0..n {
        let x = PauliString::single(n, q, PauliOp::X)?;
        let y = PauliString::single(n, q, PauliOp::Y)?;
        let plus = PauliSum::from_terms(n, vec![(c(0.5, 0.0), x), (c(0.0, 0.5), y)]);
        let minus = PauliSum::from_terms(n, vec![(c(0.5, 0.0), x), (c(0.0, -0.5), y)]);
        raw.push((plus, gamma_plus));
        raw.push((minus, gamma_minus));
    }
    LindbladModel::with_channels(model.clone(), raw)
}

/// Effective non-Hermitian generator H_eff = H_e - i H_a with both parts
/// stored as Hermitian (real-coefficient) Pauli sums. `n_qubits` is N for
/// the trajectory method and 2N for the vectorization method.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub h_e: PauliSum,
    pub h_a: PauliSum,
    pub n_qubits: usize,
}

impl EffectiveHamiltonian {
    pub fn from_complex_sum(h_eff: &PauliSum) -> Self {
        let (h_e, h_a) = h_eff.hermitian_split();
        EffectiveHamiltonian { h_e, h_a, n_qubits: h_eff.n_qubits() }
    }

    /// ⟨H_eff⟩ = ⟨H_e⟩ - i⟨H_a⟩ on a normalized state.
    pub fn expectation(&self, psi: &crate::state::StateVector) -> Result<Complex64> {
        let e = self.h_e.expectation(psi)?;
        let a = self.h_a.expectation(psi)?;
        Ok(e - Complex64::i() * a)
    }

    /// H_eff|ψ⟩ = (H_e - iH_a)|ψ⟩.
    pub fn apply(&self, psi: &crate::state::StateVector) -> Result<crate::state::StateVector> {
        let e = self.h_e.apply(psi)?;
        let a = self.h_a.apply(psi)?;
        let amps = e
            .amplitudes()
            .iter()
            .zip(a.amplitudes())
            .map(|(ev, av)| ev - Complex64::i() * av)
            .collect();
        crate::state::StateVector::from_amplitudes(psi.n_qubits(), amps)
    }
}

/// Trajectory-method generator: H_eff = H(t) - (i/2) Σ L†L.
pub fn trajectory_effective(model: &LindbladModel, t: f64) -> Result<EffectiveHamiltonian> {
    let h = model.hamiltonian.hamiltonian(t)?;
    let ha = model.half_ldl_sum();
    let h_eff = h.add(&ha.scaled(c(0.0, -1.0)))?;
    Ok(EffectiveHamiltonian::from_complex_sum(&h_eff))
}

/// Vectorization-method generator on the doubled register:
/// H_eff = I⊗H - H^T⊗I + iΣ[L*⊗L - ½(I⊗L†L + L^T L*⊗I)], with the left
/// (column) kron factor living on the high qubits N..2N.
pub fn vectorized_effective(model: &LindbladModel, t: f64) -> Result<EffectiveHamiltonian> {
    let n = model.n_spins();
    let nn = 2 * n;
    let h = model.hamiltonian.hamiltonian(t)?;

    // I ⊗ H: row factor, low qubits.
    let mut h_eff = h.embedded(nn, 0)?;
    // -H^T ⊗ I: column factor, high qubits.
    h_eff = h_eff.add(&h.transpose().embedded(nn, n)?.scaled(c(-1.0, 0.0)))?;

    for ch in &model.channels {
        // i L* ⊗ L: conjugate on the column register, L on the row register.
        let lconj_high = ch.op.conjugate().embedded(nn, n)?;
        let l_low = ch.op.embedded(nn, 0)?;
        h_eff = h_eff.add(&lconj_high.mul(&l_low)?.scaled(c(0.0, 1.0)))?;
        // -(i/2) I ⊗ L†L  and  -(i/2) (L†L)^T ⊗ I
        h_eff = h_eff.add(&ch.ldl.embedded(nn, 0)?.scaled(c(0.0, -0.5)))?;
        h_eff = h_eff.add(&ch.ldl.transpose().embedded(nn, n)?.scaled(c(0.0, -0.5)))?;
    }
    Ok(EffectiveHamiltonian::from_complex_sum(&h_eff))
}
