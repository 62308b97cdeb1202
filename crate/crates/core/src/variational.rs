//! McLachlan variational machinery: the ansatz, the equation of motion
//! M θ̇ = V, its Tikhonov-regularized solution, McLachlan distances, and the
//! classical norm log.
//!
//! With |φ⟩ = ∏_μ e^{-iθ_μ A_μ}|ψ_R⟩ (layer 1 applied first) and the
//! generator H_eff = H_e - i H_a,
//!
//!   M_{μν} = 2Re(⟨∂_μφ|∂_νφ⟩ + ⟨φ|∂_μφ⟩⟨φ|∂_νφ⟩)
//!   V_μ    = 2Im(⟨H_eff⟩⟨φ|∂_μφ⟩ + ⟨∂_μφ|H_eff|φ⟩)
//!
//! and the squared McLachlan distance at a parameter velocity θ̇ is
//!
//!   𝒟(θ̇) = θ̇ᵀMθ̇ - 2Vᵀθ̇
//!         + 2⟨H_e²⟩ - 2⟨H_e⟩² + 2⟨H_a²⟩ + 2⟨H_a⟩² + 2i⟨[H_a, H_e]⟩ .

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::SimError;
use crate::models::EffectiveHamiltonian;
use crate::parallel::par_map;
use crate::pauli::PauliString;
use crate::state::StateVector;
use crate::Result;

/// Regularization escalation stops here; beyond it the solve is reported as
/// a failure instead of being silently damped into uselessness.
const LAMBDA_MAX: f64 = 1e-2;

/// Parameterized product of Pauli-rotation layers applied to a fixed
/// reference state.
#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    reference: StateVector,
    layers: Vec<(f64, PauliString)>,
}

impl Ansatz {
    pub fn new(reference: StateVector) -> Self {
        Ansatz { reference, layers: Vec::new() }
    }

    pub fn with_layers(reference: StateVector, layers: Vec<(f64, PauliString)>) -> Result<Self> {
        for (_, p) in &layers {
            if p.n_qubits() != reference.n_qubits() {
                return Err(SimError::QubitCountMismatch {
                    left: reference.n_qubits(),
                    right: p.n_qubits(),
                });
            }
        }
        Ok(Ansatz { reference, layers })
    }

    pub fn reference(&self) -> &StateVector {
        &self.reference
    }

    pub fn n_qubits(&self) -> usize {
        self.reference.n_qubits()
    }

    /// Number of layers k.
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[(f64, PauliString)] {
        &self.layers
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.layers.iter().map(|(t, _)| *t).collect()
    }

    pub fn operators(&self) -> Vec<PauliString> {
        self.layers.iter().map(|(_, p)| *p).collect()
    }

    pub fn contains_operator(&self, p: &PauliString) -> bool {
        self.layers.iter().any(|(_, q)| q == p)
    }

    /// Append a layer (used by the adaptive growth with θ = 0).
    pub fn push_layer(&mut self, theta: f64, op: PauliString) -> Result<()> {
        if op.n_qubits() != self.n_qubits() {
            return Err(SimError::QubitCountMismatch {
                left: self.n_qubits(),
                right: op.n_qubits(),
            });
        }
        self.layers.push((theta, op));
        Ok(())
    }

    /// Drop all layers, keeping the reference (trajectory jumps reset here).
    pub fn clear_layers(&mut self) {
        self.layers.clear();
    }

    pub fn set_reference(&mut self, reference: StateVector) {
        debug_assert_eq!(reference.n_qubits(), self.n_qubits());
        self.reference = reference;
    }

    /// Evaluate |φ⟩ by applying the layers in evolution order.
    pub fn state(&self) -> StateVector {
        let mut psi = self.reference.clone();
        for (theta, op) in &self.layers {
            psi.apply_exp_rotation_mut(*theta, op).expect("layer register checked at insert");
        }
        psi
    }
}

/// |φ⟩ for an ansatz; see [`Ansatz::state`].
pub fn ansatz_state(a: &Ansatz) -> StateVector {
    a.state()
}

/// All k tangent states ∂|φ⟩/∂θ_μ in the final frame, via one forward sweep
/// caching the partial states and a suffix propagation per layer.
pub fn tangent_states(a: &Ansatz) -> Vec<StateVector> {
    let k = a.len();
    if k == 0 {
        return Vec::new();
    }
    // forward sweep: prefix[m] = layers 0..m applied to the reference
    let mut prefix = Vec::with_capacity(k + 1);
    prefix.push(a.reference.clone());
    for (theta, op) in &a.layers {
        let mut next = prefix.last().unwrap().clone();
        next.apply_exp_rotation_mut(*theta, op).expect("checked register");
        prefix.push(next);
    }
    let layers = &a.layers;
    par_map((0..k).collect(), move |m| {
        // ∂_m φ = U_{k..m+1} (-i A_m) prefix[m+1]
        let (_, op) = layers[m];
        let mut t = prefix[m + 1]
            .apply_pauli(&op)
            .expect("checked register")
            .scaled(Complex64::new(0.0, -1.0));
        for (theta, suffix_op) in &layers[m + 1..] {
            t.apply_exp_rotation_mut(*theta, suffix_op).expect("checked register");
        }
        t
    })
}

/// The assembled linear system M θ̇ = V plus the scalars the distance needs.
#[derive(Debug, Clone)]
pub struct EomSystem {
    pub m: DMatrix<f64>,
    pub v: DVector<f64>,
    /// ⟨H_eff⟩ = ⟨H_e⟩ - i⟨H_a⟩ at the current state.
    pub h_exp: Complex64,
    /// θ̇ after [`solve_theta_dot`]; empty before.
    pub theta_dot: DVector<f64>,
    /// θ̇ᵀMθ̇ - 2Vᵀθ̇ at the stored θ̇.
    pub d_variable: f64,
    /// State-independent-of-θ̇ part of 𝒟 (the 2⟨H²⟩-type terms).
    pub d_constant: f64,
}

impl EomSystem {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Full squared distance at the stored solution.
    pub fn d_full(&self) -> f64 {
        self.d_constant + self.d_variable
    }
}

/// θ̇ᵀMθ̇ - 2Vᵀθ̇.
pub(crate) fn variable_distance(m: &DMatrix<f64>, v: &DVector<f64>, theta_dot: &DVector<f64>) -> f64 {
    (theta_dot.transpose() * m * theta_dot)[(0, 0)] - 2.0 * v.dot(theta_dot)
}

/// Cached per-step quantities: the current state, tangents, H_eff|φ⟩, and
/// the overlaps every candidate row needs. Shared between the plain EOM
/// assembly and the adaptive pool scan, which extends the system by one
/// row/column per candidate without recomputing the base.
pub(crate) struct EomAssembler {
    pub phi: StateVector,
    pub tangents: Vec<StateVector>,
    /// c_μ = ⟨φ|∂_μφ⟩ (purely imaginary for unitary layers).
    pub overlaps: Vec<Complex64>,
    /// H_eff|φ⟩.
    pub g: StateVector,
    pub h_exp: Complex64,
    pub m: DMatrix<f64>,
    pub v: DVector<f64>,
    pub d_constant: f64,
    /// 2⟨H_a²⟩ + 2⟨H_a⟩², the attainable lower bound of 𝒟.
    pub lower_bound: f64,
}

impl EomAssembler {
    pub fn build(a: &Ansatz, h: &EffectiveHamiltonian) -> Result<Self> {
        if h.n_qubits != a.n_qubits() {
            return Err(SimError::QubitCountMismatch { left: a.n_qubits(), right: h.n_qubits });
        }
        let phi = a.state();
        let tangents = tangent_states(a);
        let overlaps: Vec<Complex64> = tangents.iter().map(|t| phi.inner(t)).collect();

        let he_phi = h.h_e.apply(&phi)?;
        let ha_phi = h.h_a.apply(&phi)?;
        let g = {
            let amps = he_phi
                .amplitudes()
                .iter()
                .zip(ha_phi.amplitudes())
                .map(|(e, av)| e - Complex64::i() * av)
                .collect();
            StateVector::from_amplitudes(phi.n_qubits(), amps)?
        };
        let e1 = phi.inner(&he_phi).re;
        let a1 = phi.inner(&ha_phi).re;
        let e2 = he_phi.inner(&he_phi).re;
        let a2 = ha_phi.inner(&ha_phi).re;
        let cross = ha_phi.inner(&he_phi);
        let h_exp = Complex64::new(e1, -a1);
        // 2⟨He²⟩ - 2⟨He⟩² + 2⟨Ha²⟩ + 2⟨Ha⟩² + 2i⟨[Ha,He]⟩, the last term
        // being -4·Im⟨H_aφ|H_eφ⟩.
        let d_constant = 2.0 * (e2 - e1 * e1) + 2.0 * (a2 + a1 * a1) - 4.0 * cross.im;
        let lower_bound = 2.0 * a2 + 2.0 * a1 * a1;

        let k = tangents.len();
        let rows = {
            let tangents = &tangents;
            let overlaps = &overlaps;
            par_map((0..k).collect(), move |mu| {
                let mut row = vec![0.0; k];
                for nu in 0..k {
                    let gram = tangents[mu].inner(&tangents[nu]);
                    row[nu] = 2.0 * (gram + overlaps[mu] * overlaps[nu]).re;
                }
                row
            })
        };
        let mut m = DMatrix::zeros(k, k);
        for (mu, row) in rows.iter().enumerate() {
            for (nu, val) in row.iter().enumerate() {
                m[(mu, nu)] = *val;
            }
        }
        // enforce exact symmetry against rounding in the two inner-product
        // orders
        for mu in 0..k {
            for nu in 0..mu {
                let avg = 0.5 * (m[(mu, nu)] + m[(nu, mu)]);
                m[(mu, nu)] = avg;
                m[(nu, mu)] = avg;
            }
        }
        let mut v = DVector::zeros(k);
        for mu in 0..k {
            v[mu] = 2.0 * (h_exp * overlaps[mu] + tangents[mu].inner(&g)).im;
        }
        Ok(EomAssembler { phi, tangents, overlaps, g, h_exp, m, v, d_constant, lower_bound })
    }

    /// Row/column extension for a candidate appended with θ = 0.
    pub fn candidate_extension(&self, cand: &PauliString) -> Result<CandidateExtension> {
        let t_c = self.phi.apply_pauli(cand)?.scaled(Complex64::new(0.0, -1.0));
        let c_c = self.phi.inner(&t_c);
        let k = self.tangents.len();
        let mut row = vec![0.0; k];
        for nu in 0..k {
            let gram = t_c.inner(&self.tangents[nu]);
            row[nu] = 2.0 * (gram + c_c * self.overlaps[nu]).re;
        }
        let diag = 2.0 * (t_c.inner(&t_c) + c_c * c_c).re;
        let v_entry = 2.0 * (self.h_exp * c_c + t_c.inner(&self.g)).im;
        Ok(CandidateExtension { row, diag, v_entry, tangent: t_c, overlap: c_c })
    }

    /// Extended (M'', V'') with the candidate row/column appended.
    pub fn extended_system(&self, ext: &CandidateExtension) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.v.len();
        let mut m = DMatrix::zeros(k + 1, k + 1);
        m.view_mut((0, 0), (k, k)).copy_from(&self.m);
        for nu in 0..k {
            m[(k, nu)] = ext.row[nu];
            m[(nu, k)] = ext.row[nu];
        }
        m[(k, k)] = ext.diag;
        let mut v = DVector::zeros(k + 1);
        v.view_mut((0, 0), (k, 1)).copy_from(&self.v);
        v[k] = ext.v_entry;
        (m, v)
    }

    /// Adopt a candidate: appending with θ = 0 leaves |φ⟩ and all existing
    /// tangents unchanged, so the cache extends in place.
    pub fn adopt(&mut self, ext: CandidateExtension) {
        let (m, v) = self.extended_system(&ext);
        self.m = m;
        self.v = v;
        self.tangents.push(ext.tangent);
        self.overlaps.push(ext.overlap);
    }

    pub fn system(&self, theta_dot: DVector<f64>, d_variable: f64) -> EomSystem {
        EomSystem {
            m: self.m.clone(),
            v: self.v.clone(),
            h_exp: self.h_exp,
            theta_dot,
            d_variable,
            d_constant: self.d_constant,
        }
    }
}

pub(crate) struct CandidateExtension {
    pub row: Vec<f64>,
    pub diag: f64,
    pub v_entry: f64,
    pub tangent: StateVector,
    pub overlap: Complex64,
}

/// Assemble M, V, ⟨H_eff⟩ and the distance constant for the current ansatz.
/// `theta_dot` is left empty; call [`solve_theta_dot`] next.
pub fn assemble_eom(a: &Ansatz, h: &EffectiveHamiltonian) -> Result<EomSystem> {
    let asm = EomAssembler::build(a, h)?;
    Ok(asm.system(DVector::zeros(0), 0.0))
}

/// Tikhonov-regularized solve θ̇ = (MᵀM + λI)⁻¹MᵀV.
///
/// A failed factorization escalates λ by ×10 (up to 1e-2) before erroring.
/// Stores θ̇ and the variable distance into `sys` and returns θ̇.
pub fn solve_theta_dot(sys: &mut EomSystem, lambda: f64) -> Result<DVector<f64>> {
    let theta_dot = solve_regularized(&sys.m, &sys.v, lambda)?;
    sys.d_variable = variable_distance(&sys.m, &sys.v, &theta_dot);
    sys.theta_dot = theta_dot.clone();
    Ok(theta_dot)
}

pub(crate) fn solve_regularized(
    m: &DMatrix<f64>,
    v: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(SimError::invalid("lambda", lambda));
    }
    let k = v.len();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    if m.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !x.is_finite()) {
        return Err(SimError::SolverFailure {
            time: None,
            reason: "non-finite entries in M or V".into(),
        });
    }
    let mtm = m.transpose() * m;
    let mtv = m.transpose() * v;
    let mut lam = lambda;
    loop {
        let reg = &mtm + DMatrix::identity(k, k) * lam;
        if let Some(chol) = Cholesky::new(reg) {
            let sol = chol.solve(&mtv);
            if sol.iter().all(|x| x.is_finite()) {
                return Ok(sol);
            }
        }
        lam = if lam == 0.0 { 1e-12 } else { lam * 10.0 };
        if lam > LAMBDA_MAX {
            return Err(SimError::SolverFailure {
                time: None,
                reason: format!("normal equations not positive definite up to lambda={LAMBDA_MAX}"),
            });
        }
    }
}

/// Full squared McLachlan distance 𝒟 at the given parameter velocity.
pub fn mclachlan_distance_full(
    a: &Ansatz,
    h: &EffectiveHamiltonian,
    theta_dot: &DVector<f64>,
) -> Result<f64> {
    if theta_dot.len() != a.len() {
        return Err(SimError::DimensionMismatch { expected: a.len(), found: theta_dot.len() });
    }
    let asm = EomAssembler::build(a, h)?;
    Ok(asm.d_constant + variable_distance(&asm.m, &asm.v, theta_dot))
}

/// dΓ = 2⟨φ|H_a|φ⟩·dt: the norm-log increment over one step.
pub fn norm_decrement(a: &Ansatz, h: &EffectiveHamiltonian, dt: f64) -> Result<f64> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(SimError::invalid("dt", dt));
    }
    let phi = a.state();
    Ok(2.0 * h.h_a.expectation(&phi)?.re * dt)
}

/// θ ← θ + θ̇·dt in place; layer operators unchanged.
pub fn euler_step(a: &mut Ansatz, theta_dot: &DVector<f64>, dt: f64) -> Result<()> {
    if theta_dot.len() != a.len() {
        return Err(SimError::DimensionMismatch { expected: a.len(), found: theta_dot.len() });
    }
    if theta_dot.iter().any(|x| !x.is_finite()) {
        return Err(SimError::SolverFailure { time: None, reason: "non-finite theta_dot".into() });
    }
    for (layer, td) in a.layers.iter_mut().zip(theta_dot.iter()) {
        layer.0 += td * dt;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_dephasing, trajectory_effective, AnnealingModel};
    use crate::pauli::{PauliOp, PauliSum};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_string(rng: &mut StdRng, n: usize) -> PauliString {
        let mask = (1u64 << n) - 1;
        loop {
            let p = PauliString::from_masks(
                n,
                rng.random::<u64>() & mask,
                rng.random::<u64>() & mask,
            )
            .unwrap();
            if !p.is_identity() {
                return p;
            }
        }
    }

    fn rand_ansatz(rng: &mut StdRng, n: usize, k: usize) -> Ansatz {
        let mut a = Ansatz::new(StateVector::plus_state(n));
        for _ in 0..k {
            a.push_layer(rng.random::<f64>() * 2.0 - 1.0, rand_string(rng, n)).unwrap();
        }
        a
    }

    #[test]
    fn empty_ansatz_returns_reference() {
        let a = Ansatz::new(StateVector::plus_state(2));
        assert_eq!(a.state(), StateVector::plus_state(2));
        assert!(tangent_states(&a).is_empty());
    }

    #[test]
    fn single_layer_closed_form() {
        let mut a = Ansatz::new(StateVector::basis(1, 0));
        let theta = 0.37;
        a.push_layer(theta, PauliString::single(1, 0, PauliOp::X).unwrap()).unwrap();
        let phi = a.state();
        assert!((phi.amplitudes()[0] - c(theta.cos(), 0.0)).norm() < 1e-14);
        assert!((phi.amplitudes()[1] - c(0.0, -theta.sin())).norm() < 1e-14);
    }

    #[test]
    fn ansatz_state_matches_dense_product() {
        let mut rng = StdRng::seed_from_u64(0xD1);
        for _ in 0..10 {
            let a = rand_ansatz(&mut rng, 3, 3);
            let phi = a.state();
            let dim = 8;
            let mut u = nalgebra::DMatrix::<Complex64>::identity(dim, dim);
            for (theta, op) in a.layers() {
                let rot = nalgebra::DMatrix::<Complex64>::identity(dim, dim) * c(theta.cos(), 0.0)
                    - op.dense() * c(0.0, theta.sin());
                u = rot * u; // layer 1 first
            }
            let expect = u * nalgebra::DVector::from_column_slice(a.reference().amplitudes());
            for k in 0..dim {
                assert!((phi.amplitudes()[k] - expect[k]).norm() < 1e-12);
            }
        }
    }

    fn finite_difference_tangents(a: &Ansatz, h: f64) -> Vec<StateVector> {
        (0..a.len())
            .map(|m| {
                let mut tp = a.clone();
                tp.layers[m].0 += h;
                let mut tm = a.clone();
                tm.layers[m].0 -= h;
                let (sp, sm) = (tp.state(), tm.state());
                let amps = sp
                    .amplitudes()
                    .iter()
                    .zip(sm.amplitudes())
                    .map(|(p, q)| (p - q) / c(2.0 * h, 0.0))
                    .collect();
                StateVector::from_amplitudes(a.n_qubits(), amps).unwrap()
            })
            .collect()
    }

    #[test]
    fn tangents_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(0xD2);
        for _ in 0..10 {
            let a = rand_ansatz(&mut rng, 2, 4);
            let analytic = tangent_states(&a);
            let fd = finite_difference_tangents(&a, 1e-5);
            for (t, f) in analytic.iter().zip(&fd) {
                for k in 0..t.dim() {
                    assert!((t.amplitudes()[k] - f.amplitudes()[k]).norm() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn single_layer_tangent_finite_difference() {
        let mut a = Ansatz::new(StateVector::basis(1, 0));
        a.push_layer(0.81, PauliString::single(1, 0, PauliOp::X).unwrap()).unwrap();
        let t = tangent_states(&a);
        let fd = finite_difference_tangents(&a, 1e-5);
        for k in 0..2 {
            assert!((t[0].amplitudes()[k] - fd[0].amplitudes()[k]).norm() < 1e-8);
        }
    }

    #[test]
    fn empty_system_solves_to_empty() {
        let a = Ansatz::new(StateVector::plus_state(2));
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 0.0).unwrap();
        let mut sys = assemble_eom(&a, &h).unwrap();
        assert_eq!(sys.len(), 0);
        let td = solve_theta_dot(&mut sys, 1e-8).unwrap();
        assert_eq!(td.len(), 0);
    }

    #[test]
    fn single_x_layer_m_is_two() {
        let m = AnnealingModel::default_chain(1).unwrap();
        let lm = crate::models::LindbladModel::closed(m);
        let h = trajectory_effective(&lm, 0.0).unwrap();
        for theta in [0.0, 0.3, 1.2, -2.0] {
            let mut a = Ansatz::new(StateVector::basis(1, 0));
            a.push_layer(theta, PauliString::single(1, 0, PauliOp::X).unwrap()).unwrap();
            let sys = assemble_eom(&a, &h).unwrap();
            assert!((sys.m[(0, 0)] - 2.0).abs() < 1e-12, "theta={theta}");
        }
    }

    #[test]
    fn m_is_symmetric() {
        let mut rng = StdRng::seed_from_u64(0xD3);
        let m = AnnealingModel::default_chain(3).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 2.0).unwrap();
        for _ in 0..5 {
            let a = rand_ansatz(&mut rng, 3, 5);
            let sys = assemble_eom(&a, &h).unwrap();
            assert!((&sys.m - sys.m.transpose()).norm() < 1e-10);
        }
    }

    #[test]
    fn tikhonov_identity_matrix() {
        let m = DMatrix::identity(2, 2);
        let v = DVector::from_column_slice(&[1.0, 2.0]);
        let sol = solve_regularized(&m, &v, 0.0).unwrap();
        assert!((sol[0] - 1.0).abs() < 1e-12 && (sol[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tikhonov_suppresses_null_space() {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.0]));
        let v = DVector::from_column_slice(&[1.0, 1.0]);
        let sol = solve_regularized(&m, &v, 1e-8).unwrap();
        assert!((sol[0] - 1.0).abs() < 1e-6);
        assert!(sol[1].abs() < 1e-6);
    }

    #[test]
    fn solve_never_increases_distance() {
        let mut rng = StdRng::seed_from_u64(0xD4);
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 1.0).unwrap();
        for _ in 0..20 {
            let a = rand_ansatz(&mut rng, 2, 4);
            let mut sys = assemble_eom(&a, &h).unwrap();
            solve_theta_dot(&mut sys, 1e-8).unwrap();
            // D(θ̇*) ≤ D(0) up to regularization slack
            assert!(sys.d_variable <= 1e-9);
        }
    }

    #[test]
    fn distance_at_zero_velocity_is_constant_term() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 4.0).unwrap();
        let mut rng = StdRng::seed_from_u64(0xD5);
        let a = rand_ansatz(&mut rng, 2, 3);
        let d0 = mclachlan_distance_full(&a, &h, &DVector::zeros(3)).unwrap();
        let sys = assemble_eom(&a, &h).unwrap();
        assert!((d0 - sys.d_constant).abs() < 1e-12);
    }

    #[test]
    fn perfect_single_qubit_ansatz_reaches_zero_distance() {
        // H = X (closed), pool op X, reference |0⟩: the flow is θ̇ = 1 and
        // the distance vanishes identically.
        let x = PauliString::single(1, 0, PauliOp::X).unwrap();
        let h_e = PauliSum::from_terms(1, vec![(c(1.0, 0.0), x)]);
        let h = EffectiveHamiltonian { h_e, h_a: PauliSum::zero(1), n_qubits: 1 };
        let mut a = Ansatz::new(StateVector::basis(1, 0));
        a.push_layer(0.4, x).unwrap();
        let mut sys = assemble_eom(&a, &h).unwrap();
        let td = solve_theta_dot(&mut sys, 0.0).unwrap();
        assert!((td[0] - 1.0).abs() < 1e-10);
        let d = mclachlan_distance_full(&a, &h, &td).unwrap();
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn dephasing_distance_respects_lower_bound() {
        let mut rng = StdRng::seed_from_u64(0xD6);
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 3.0).unwrap();
        for _ in 0..20 {
            let a = rand_ansatz(&mut rng, 2, 3);
            let mut sys = assemble_eom(&a, &h).unwrap();
            let td = solve_theta_dot(&mut sys, 1e-8).unwrap();
            let d = mclachlan_distance_full(&a, &h, &td).unwrap();
            // h_a = (Nγ/2)I ⇒ bound = N²γ²
            let bound = 4.0 * 0.01 * 0.01;
            assert!(d >= bound - 1e-8);
        }
    }

    #[test]
    fn norm_decrement_dephasing_is_exact() {
        let m = AnnealingModel::default_chain(3).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 0.0).unwrap();
        let mut rng = StdRng::seed_from_u64(0xD7);
        let a = rand_ansatz(&mut rng, 3, 4);
        let dg = norm_decrement(&a, &h, 0.01).unwrap();
        // dΓ = Nγ·dt exactly since h_a ∝ I
        assert!((dg - 3.0 * 0.01 * 0.01).abs() < 1e-14);
        assert!(norm_decrement(&a, &h, 0.0).is_err());
    }

    #[test]
    fn norm_decrement_zero_for_closed_system() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = crate::models::LindbladModel::closed(m);
        let h = trajectory_effective(&lm, 1.0).unwrap();
        let a = Ansatz::new(StateVector::plus_state(2));
        assert_eq!(norm_decrement(&a, &h, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn euler_step_updates_parameters() {
        let mut rng = StdRng::seed_from_u64(0xD8);
        let mut a = rand_ansatz(&mut rng, 2, 3);
        let before = a.thetas();
        let td = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        euler_step(&mut a, &td, 0.01).unwrap();
        for (k, theta) in a.thetas().iter().enumerate() {
            assert!((theta - (before[k] + td[k] * 0.01)).abs() < 1e-15);
        }
        // zero velocity leaves it unchanged
        let snapshot = a.clone();
        euler_step(&mut a, &DVector::zeros(3), 0.01).unwrap();
        assert_eq!(a, snapshot);
        // non-finite rejected
        let bad = DVector::from_column_slice(&[f64::NAN, 0.0, 0.0]);
        assert!(euler_step(&mut a, &bad, 0.01).is_err());
    }

    #[test]
    fn euler_tracks_one_qubit_rabi() {
        // θ̇ = 1 exactly, so Euler is exact up to rounding: θ(t_f) = t_f.
        let x = PauliString::single(1, 0, PauliOp::X).unwrap();
        let h_e = PauliSum::from_terms(1, vec![(c(1.0, 0.0), x)]);
        let h = EffectiveHamiltonian { h_e, h_a: PauliSum::zero(1), n_qubits: 1 };
        let mut a = Ansatz::new(StateVector::basis(1, 0));
        a.push_layer(0.0, x).unwrap();
        let dt = 0.01;
        for _ in 0..100 {
            let mut sys = assemble_eom(&a, &h).unwrap();
            let td = solve_theta_dot(&mut sys, 1e-8).unwrap();
            euler_step(&mut a, &td, dt).unwrap();
        }
        let exact = StateVector::basis(1, 0).apply_exp_rotation(1.0, &x).unwrap();
        let fid = a.state().inner(&exact).norm_sqr();
        assert!(fid >= 1.0 - 1e-4, "fid={fid}");
    }
}
