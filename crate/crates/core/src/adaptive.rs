//! Operator pools and the adaptive ansatz-growth procedures.
//!
//! The unrestricted (greedy) step scans the whole pool each round, appends
//! the candidate that lowers the variable McLachlan distance the most, and
//! keeps going while the best improvement is at least the additive threshold
//! `r`. The restricted step grows instead until the full distance drops to
//! a target set relative to the attainable lower bound 2⟨H_a²⟩ + 2⟨H_a⟩².

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::SimError;
use crate::models::EffectiveHamiltonian;
use crate::parallel::par_map;
use crate::pauli::{PauliOp, PauliString};
use crate::variational::{solve_regularized, variable_distance, Ansatz, EomAssembler};
use crate::Result;

/// Two numerically equal candidates (within this) tie-break to the lower
/// pool index, keeping the scan deterministic.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    /// Single-qubit Paulis plus the Hamiltonian's Z_i Z_{i+1} bonds.
    P1,
    /// Single-qubit Paulis plus all nine two-letter words on neighboring qubits.
    P2,
    /// Single-qubit Paulis plus all nine two-letter words on all qubit pairs.
    P3,
}

impl std::fmt::Display for PoolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PoolKind::P1 => write!(f, "P1"),
            PoolKind::P2 => write!(f, "P2"),
            PoolKind::P3 => write!(f, "P3"),
        }
    }
}

/// Candidate operators the adaptive procedure may draw from.
#[derive(Debug, Clone)]
pub struct OperatorPool {
    pub kind: Option<PoolKind>,
    pub n_qubits: usize,
    operators: Vec<PauliString>,
}

impl OperatorPool {
    pub fn operators(&self) -> &[PauliString] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// Hand-rolled pool for tests and experiments; deduplicates.
    pub fn from_operators(n_qubits: usize, ops: Vec<PauliString>) -> Result<Self> {
        let mut seen = Vec::new();
        for op in ops {
            if op.n_qubits() != n_qubits {
                return Err(SimError::QubitCountMismatch { left: n_qubits, right: op.n_qubits() });
            }
            if !seen.contains(&op) {
                seen.push(op);
            }
        }
        Ok(OperatorPool { kind: None, n_qubits, operators: seen })
    }
}

const LETTERS: [PauliOp; 3] = [PauliOp::X, PauliOp::Y, PauliOp::Z];

/// Build one of the three standard pools on an `n_qubits` register (pass the
/// doubled register size for the vectorization method).
pub fn build_pool(kind: PoolKind, n_qubits: usize) -> Result<OperatorPool> {
    if n_qubits == 0 {
        return Err(SimError::invalid("n_qubits", 0.0));
    }
    let mut ops = Vec::new();
    for letter in LETTERS {
        for q in 0..n_qubits {
            ops.push(PauliString::single(n_qubits, q, letter)?);
        }
    }
    match kind {
        PoolKind::P1 => {
            for q in 0..n_qubits.saturating_sub(1) {
                ops.push(PauliString::two(n_qubits, q, PauliOp::Z, q + 1, PauliOp::Z)?);
            }
        }
        PoolKind::P2 => {
            for q in 0..n_qubits.saturating_sub(1) {
                for l1 in LETTERS {
                    for l2 in LETTERS {
                        ops.push(PauliString::two(n_qubits, q, l1, q + 1, l2)?);
                    }
                }
            }
        }
        PoolKind::P3 => {
            // unordered pairs i < j; P_i P_j and P_j P_i name the same word
            for i in 0..n_qubits {
                for j in (i + 1)..n_qubits {
                    for l1 in LETTERS {
                        for l2 in LETTERS {
                            ops.push(PauliString::two(n_qubits, i, l1, j, l2)?);
                        }
                    }
                }
            }
        }
    }
    // the pool invariant: no duplicates (P1's ZZ bonds can't collide with
    // singles, but keep the guard uniform)
    let mut dedup = Vec::with_capacity(ops.len());
    for op in ops {
        if !dedup.contains(&op) {
            dedup.push(op);
        }
    }
    Ok(OperatorPool { kind: Some(kind), n_qubits, operators: dedup })
}

/// How a single adaptive call may grow the ansatz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptiveMode {
    /// Greedy: keep adopting while the best candidate improves the variable
    /// distance by at least the additive threshold `r`.
    Unrestricted { r: f64 },
    /// Grow until the full distance reaches `lower_bound + d_threshold`.
    Restricted { d_threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub mode: AdaptiveMode,
    /// Cap on operators adopted within one call.
    pub max_ops_per_step: usize,
}

impl AdaptiveConfig {
    pub fn unrestricted(r: f64) -> Self {
        AdaptiveConfig { mode: AdaptiveMode::Unrestricted { r }, max_ops_per_step: usize::MAX }
    }

    pub fn restricted(d_threshold: f64) -> Self {
        AdaptiveConfig {
            mode: AdaptiveMode::Restricted { d_threshold },
            max_ops_per_step: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptiveStatus {
    /// The stopping rule was met normally.
    Converged,
    /// Restricted mode only: the distance target was not reached but no
    /// candidate improved the distance; evolution proceeds regardless.
    Stalled,
}

/// Result of one adaptive call: the solved velocity plus step diagnostics.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub theta_dot: DVector<f64>,
    /// ⟨H_eff⟩ at the (unchanged) state, for the norm-log update.
    pub h_exp: Complex64,
    /// θ̇ᵀMθ̇ - 2Vᵀθ̇ at the returned solution.
    pub d_variable: f64,
    /// State-dependent constant part of 𝒟.
    pub d_constant: f64,
    /// 2⟨H_a²⟩ + 2⟨H_a⟩² at the current state.
    pub lower_bound: f64,
    pub added: Vec<PauliString>,
    pub status: AdaptiveStatus,
}

impl AdaptiveOutcome {
    pub fn d_full(&self) -> f64 {
        self.d_constant + self.d_variable
    }
}

struct ScanState {
    asm: EomAssembler,
    theta_dot: DVector<f64>,
    d_variable: f64,
}

fn best_candidate(
    asm: &EomAssembler,
    candidates: &[PauliString],
    lambda: f64,
) -> Result<Option<(usize, f64, DVector<f64>)>> {
    if candidates.is_empty() {
        return Ok(None);
    }
    let evals: Vec<Result<(f64, DVector<f64>)>> =
        par_map(candidates.to_vec(), move |cand| {
            let ext = asm.candidate_extension(&cand)?;
            let (m, v) = asm.extended_system(&ext);
            let td = solve_regularized(&m, &v, lambda)?;
            let d = variable_distance(&m, &v, &td);
            Ok((d, td))
        });
    let mut best: Option<(usize, f64, DVector<f64>)> = None;
    for (idx, eval) in evals.into_iter().enumerate() {
        let (d, td) = eval?;
        match &best {
            // strictly-better-by-more-than-TIE_EPS keeps the lower index on ties
            Some((_, d_best, _)) if d >= d_best - TIE_EPS => {}
            _ => best = Some((idx, d, td)),
        }
    }
    Ok(best)
}

fn adopt(
    state: &mut ScanState,
    ansatz: &mut Ansatz,
    cand: PauliString,
    theta_dot: DVector<f64>,
    d: f64,
) -> Result<()> {
    let ext = state.asm.candidate_extension(&cand)?;
    state.asm.adopt(ext);
    ansatz.push_layer(0.0, cand)?;
    state.theta_dot = theta_dot;
    state.d_variable = d;
    Ok(())
}

fn remaining_candidates(pool: &OperatorPool, ansatz: &Ansatz) -> Vec<PauliString> {
    pool.operators().iter().filter(|op| !ansatz.contains_operator(op)).copied().collect()
}

/// One greedy growth-and-solve call (the unrestricted protocol).
///
/// Grows `ansatz` in place and returns the solved θ̇ for the grown ansatz.
pub fn adaptive_step_unrestricted(
    ansatz: &mut Ansatz,
    h: &EffectiveHamiltonian,
    pool: &OperatorPool,
    r: f64,
    lambda: f64,
    max_ops: usize,
) -> Result<AdaptiveOutcome> {
    if r <= 0.0 || !r.is_finite() {
        return Err(SimError::invalid("r", r));
    }
    let asm = EomAssembler::build(ansatz, h)?;
    let theta_dot = solve_regularized(&asm.m, &asm.v, lambda)?;
    let d_variable = variable_distance(&asm.m, &asm.v, &theta_dot);
    let mut state = ScanState { asm, theta_dot, d_variable };
    let mut added = Vec::new();

    while added.len() < max_ops {
        let candidates = remaining_candidates(pool, ansatz);
        let Some((idx, d_best, td_best)) = best_candidate(&state.asm, &candidates, lambda)? else {
            break;
        };
        if d_best >= state.d_variable - r {
            break;
        }
        let cand = candidates[idx];
        adopt(&mut state, ansatz, cand, td_best, d_best)?;
        added.push(cand);
    }

    Ok(AdaptiveOutcome {
        theta_dot: state.theta_dot,
        h_exp: state.asm.h_exp,
        d_variable: state.d_variable,
        d_constant: state.asm.d_constant,
        lower_bound: state.asm.lower_bound,
        added,
        status: AdaptiveStatus::Converged,
    })
}

/// One thresholded growth-and-solve call (the restricted protocol).
///
/// `d_threshold` is measured relative to the attainable lower bound: growth
/// continues while the full distance exceeds `lower_bound + d_threshold`.
/// If no candidate improves the distance before the target is met, the call
/// returns with [`AdaptiveStatus::Stalled`] and the current ansatz.
pub fn adaptive_step_restricted(
    ansatz: &mut Ansatz,
    h: &EffectiveHamiltonian,
    pool: &OperatorPool,
    d_threshold: f64,
    lambda: f64,
    max_ops: usize,
) -> Result<AdaptiveOutcome> {
    if d_threshold < 0.0 {
        return Err(SimError::invalid("d_threshold", d_threshold));
    }
    let asm = EomAssembler::build(ansatz, h)?;
    let theta_dot = solve_regularized(&asm.m, &asm.v, lambda)?;
    let d_variable = variable_distance(&asm.m, &asm.v, &theta_dot);
    // the scan appends candidates with θ = 0, so the state, the constant
    // term, and the bound stay fixed for the whole call
    let target = asm.lower_bound + d_threshold;
    let d_constant = asm.d_constant;
    let mut state = ScanState { asm, theta_dot, d_variable };
    let mut added = Vec::new();
    let mut status = AdaptiveStatus::Converged;

    while d_constant + state.d_variable > target && added.len() < max_ops {
        let candidates = remaining_candidates(pool, ansatz);
        let improving = best_candidate(&state.asm, &candidates, lambda)?
            .filter(|(_, d, _)| *d < state.d_variable - TIE_EPS);
        let Some((idx, d_best, td_best)) = improving else {
            status = AdaptiveStatus::Stalled;
            break;
        };
        let cand = candidates[idx];
        adopt(&mut state, ansatz, cand, td_best, d_best)?;
        added.push(cand);
    }

    Ok(AdaptiveOutcome {
        theta_dot: state.theta_dot,
        h_exp: state.asm.h_exp,
        d_variable: state.d_variable,
        d_constant,
        lower_bound: state.asm.lower_bound,
        added,
        status,
    })
}

/// Dispatch on [`AdaptiveConfig`].
pub fn adaptive_step(
    ansatz: &mut Ansatz,
    h: &EffectiveHamiltonian,
    pool: &OperatorPool,
    cfg: &AdaptiveConfig,
    lambda: f64,
) -> Result<AdaptiveOutcome> {
    match cfg.mode {
        AdaptiveMode::Unrestricted { r } => {
            adaptive_step_unrestricted(ansatz, h, pool, r, lambda, cfg.max_ops_per_step)
        }
        AdaptiveMode::Restricted { d_threshold } => {
            adaptive_step_restricted(ansatz, h, pool, d_threshold, lambda, cfg.max_ops_per_step)
        }
    }
}

/// The sufficient conditions for the distance lower bound to be attainable:
/// [H_e, H_a] = 0 and every pool operator commutes with every term of H_a.
pub fn check_sufficient_condition(h: &EffectiveHamiltonian, pool: &OperatorPool) -> bool {
    match h.h_e.commutator(&h.h_a) {
        Ok(comm) => {
            if comm.terms().iter().any(|(c, _)| c.norm() > 1e-10) {
                return false;
            }
        }
        Err(_) => return false,
    }
    pool.operators().iter().all(|a| {
        h.h_a
            .terms()
            .iter()
            .all(|(_, p)| a.commutes_with(p).unwrap_or(false))
    })
}

/// 2⟨H_a²⟩ + 2⟨H_a⟩² at the current ansatz state.
pub fn mclachlan_lower_bound(a: &Ansatz, h: &EffectiveHamiltonian) -> Result<f64> {
    let phi = a.state();
    let ha_phi = h.h_a.apply(&phi)?;
    let a2 = ha_phi.inner(&ha_phi).re;
    let a1 = phi.inner(&ha_phi).re;
    Ok(2.0 * a2 + 2.0 * a1 * a1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        make_amplitude_damping, make_dephasing, trajectory_effective, AnnealingModel,
        LindbladModel,
    };
    use crate::pauli::PauliSum;
    use crate::state::StateVector;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pool_sizes() {
        assert_eq!(build_pool(PoolKind::P1, 2).unwrap().len(), 7); // 6 + ZZ
        assert_eq!(build_pool(PoolKind::P2, 3).unwrap().len(), 27); // 9 + 18
        assert_eq!(build_pool(PoolKind::P3, 3).unwrap().len(), 36); // 9 + 27
        assert_eq!(build_pool(PoolKind::P2, 2).unwrap().len(), 15);
        assert_eq!(build_pool(PoolKind::P3, 2).unwrap().len(), 15); // N=2: P2 == P3
        assert!(build_pool(PoolKind::P1, 0).is_err());
    }

    #[test]
    fn pools_have_no_duplicates() {
        for kind in [PoolKind::P1, PoolKind::P2, PoolKind::P3] {
            let pool = build_pool(kind, 4).unwrap();
            for (i, a) in pool.operators().iter().enumerate() {
                for b in &pool.operators()[i + 1..] {
                    assert_ne!(a, b);
                }
            }
        }
    }

    #[test]
    fn unrestricted_single_qubit_analytic() {
        // pool {X}, H_eff = X closed, empty ansatz on |0⟩: exactly one
        // operator is added and the full distance drops to ~0.
        let x = PauliString::from_label("X").unwrap();
        let h = EffectiveHamiltonian {
            h_e: PauliSum::from_terms(1, vec![(c(1.0, 0.0), x)]),
            h_a: PauliSum::zero(1),
            n_qubits: 1,
        };
        let pool = OperatorPool::from_operators(1, vec![x]).unwrap();
        let mut a = Ansatz::new(StateVector::basis(1, 0));
        let out = adaptive_step_unrestricted(&mut a, &h, &pool, 1e-4, 1e-8, usize::MAX).unwrap();
        assert_eq!(out.added.len(), 1);
        assert_eq!(a.len(), 1);
        assert!(out.d_full().abs() < 1e-6, "d_full={}", out.d_full());
        assert!((out.theta_dot[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn huge_threshold_leaves_ansatz_unchanged() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 0.0).unwrap();
        let pool = build_pool(PoolKind::P2, 2).unwrap();
        let mut a = Ansatz::new(StateVector::plus_state(2));
        let out = adaptive_step_unrestricted(&mut a, &h, &pool, 1e9, 1e-8, usize::MAX).unwrap();
        assert!(out.added.is_empty());
        assert!(a.is_empty());
    }

    #[test]
    fn unrestricted_adoptions_improve_by_at_least_r() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 5.0).unwrap();
        let pool = build_pool(PoolKind::P3, 2).unwrap();
        let mut a = Ansatz::new(StateVector::plus_state(2));
        let r = 1e-4;

        // replay the greedy loop, checking the improvement at each adoption
        let mut d_prev = {
            let mut sys = crate::variational::assemble_eom(&a, &h).unwrap();
            crate::variational::solve_theta_dot(&mut sys, 1e-8).unwrap();
            sys.d_variable
        };
        let out = adaptive_step_unrestricted(&mut a, &h, &pool, r, 1e-8, usize::MAX).unwrap();
        for step in 1..=out.added.len() {
            let mut partial = Ansatz::new(StateVector::plus_state(2));
            for op in &out.added[..step] {
                partial.push_layer(0.0, *op).unwrap();
            }
            let mut sys = crate::variational::assemble_eom(&partial, &h).unwrap();
            crate::variational::solve_theta_dot(&mut sys, 1e-8).unwrap();
            assert!(sys.d_variable <= d_prev - r + 1e-12, "adoption {step} improved too little");
            d_prev = sys.d_variable;
        }
        assert!((out.d_variable - d_prev).abs() < 1e-10);
    }

    #[test]
    fn restricted_infinite_threshold_adds_nothing() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 0.0).unwrap();
        let pool = build_pool(PoolKind::P3, 2).unwrap();
        let mut a = Ansatz::new(StateVector::plus_state(2));
        let out =
            adaptive_step_restricted(&mut a, &h, &pool, f64::INFINITY, 1e-8, usize::MAX).unwrap();
        assert!(out.added.is_empty());
        assert_eq!(out.status, AdaptiveStatus::Converged);
    }

    #[test]
    fn restricted_reaches_target_on_dephasing() {
        // Eq.-19 conditions hold, so the bound is attainable; the loop must
        // terminate at d_full ≤ lower_bound + threshold.
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 0.0).unwrap();
        let pool = build_pool(PoolKind::P3, 2).unwrap();
        assert!(check_sufficient_condition(&h, &pool));
        let mut a = Ansatz::new(StateVector::plus_state(2));
        let threshold = 1e-6;
        let out =
            adaptive_step_restricted(&mut a, &h, &pool, threshold, 1e-8, usize::MAX).unwrap();
        assert_eq!(out.status, AdaptiveStatus::Converged);
        assert!(out.d_full() <= out.lower_bound + threshold + 1e-12);
    }

    #[test]
    fn restricted_on_closed_system_targets_plain_distance() {
        // h_a = 0 ⇒ lower bound 0 ⇒ plain AVQDS threshold on 𝒟.
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = LindbladModel::closed(m);
        let h = trajectory_effective(&lm, 0.0).unwrap();
        let pool = build_pool(PoolKind::P3, 2).unwrap();
        let mut a = Ansatz::new(StateVector::plus_state(2));
        let out = adaptive_step_restricted(&mut a, &h, &pool, 1e-6, 1e-8, usize::MAX).unwrap();
        assert_eq!(out.lower_bound, 0.0);
        assert!(out.d_full() <= 1e-6 + 1e-12 || out.status == AdaptiveStatus::Stalled);
    }

    #[test]
    fn sufficient_condition_cases() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let pool2 = build_pool(PoolKind::P2, 2).unwrap();

        // dephasing: h_a ∝ I commutes with everything
        let deph = trajectory_effective(&make_dephasing(&m, 0.01).unwrap(), 1.0).unwrap();
        assert!(check_sufficient_condition(&deph, &pool2));

        // amplitude damping: h_a has Z terms, [X_i, Z_i] ≠ 0
        let damp =
            trajectory_effective(&make_amplitude_damping(&m, 0.04, 0.004).unwrap(), 1.0).unwrap();
        assert!(!check_sufficient_condition(&damp, &pool2));

        // closed: h_a = 0
        let closed = trajectory_effective(&LindbladModel::closed(m), 1.0).unwrap();
        assert!(check_sufficient_condition(&closed, &pool2));
    }

    #[test]
    fn lower_bound_closed_form_for_dephasing() {
        let n = 3;
        let gamma = 0.01;
        let m = AnnealingModel::default_chain(n).unwrap();
        let lm = make_dephasing(&m, gamma).unwrap();
        let h = trajectory_effective(&lm, 2.0).unwrap();
        let a = Ansatz::new(StateVector::plus_state(n));
        let bound = mclachlan_lower_bound(&a, &h).unwrap();
        let expect = (n as f64).powi(2) * gamma * gamma; // h_a = (Nγ/2)I
        assert!((bound - expect).abs() < 1e-14);

        let closed = trajectory_effective(&LindbladModel::closed(m), 2.0).unwrap();
        assert_eq!(mclachlan_lower_bound(&a, &closed).unwrap(), 0.0);
    }

    #[test]
    fn bound_below_full_distance_when_conditions_hold() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.05).unwrap();
        let h = trajectory_effective(&lm, 3.0).unwrap();
        let pool = build_pool(PoolKind::P3, 2).unwrap();
        assert!(check_sufficient_condition(&h, &pool));
        let mut a = Ansatz::new(StateVector::plus_state(2));
        let out = adaptive_step_unrestricted(&mut a, &h, &pool, 1e-6, 1e-8, usize::MAX).unwrap();
        assert!(out.d_full() >= out.lower_bound - 1e-8);
    }

    #[test]
    fn max_ops_cap_respected() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let lm = make_dephasing(&m, 0.01).unwrap();
        let h = trajectory_effective(&lm, 5.0).unwrap();
        let pool = build_pool(PoolKind::P3, 2).unwrap();
        let mut a = Ansatz::new(StateVector::plus_state(2));
        let out = adaptive_step_unrestricted(&mut a, &h, &pool, 1e-8, 1e-8, 1).unwrap();
        assert!(out.added.len() <= 1);
    }
}
