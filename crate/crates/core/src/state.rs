//! State vectors, density matrices, and the kernels that apply Pauli
//! operators to them.
//!
//! Amplitude indexing: qubit 0 is the least-significant bit of the index.
//! Vectorization is column-stacking, `vec(ρ)[col·D + row] = ρ[row, col]`, so
//! on the doubled register qubits `0..N` carry the row (left-multiplication)
//! factor and qubits `N..2N` the column factor.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::SimError;
use crate::pauli::{PauliString, PauliSum};
use crate::Result;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many amplitudes the rotation kernel stays sequential; the
/// fork/join overhead dwarfs the arithmetic for small registers.
#[cfg(feature = "parallel")]
const PAR_KERNEL_MIN: usize = 1 << 14;

/// 2^n complex amplitudes of an n-qubit pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Computational basis state |index⟩.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let dim = 1usize << n_qubits;
        assert!(index < dim, "basis index out of range");
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        StateVector { n_qubits, amps }
    }

    /// |+⟩^{⊗n}: every amplitude 2^{-n/2}.
    pub fn plus_state(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        StateVector { n_qubits, amps: vec![a; dim] }
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1usize << n_qubits {
            return Err(SimError::DimensionMismatch {
                expected: 1usize << n_qubits,
                found: amps.len(),
            });
        }
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> StateVector {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero vector");
        StateVector {
            n_qubits: self.n_qubits,
            amps: self.amps.iter().map(|a| a / n).collect(),
        }
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.amps.iter().zip(other.amps.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scaled(&self, factor: Complex64) -> StateVector {
        StateVector {
            n_qubits: self.n_qubits,
            amps: self.amps.iter().map(|a| a * factor).collect(),
        }
    }

    /// P|ψ⟩ for a single Pauli word.
    pub fn apply_pauli(&self, p: &PauliString) -> Result<StateVector> {
        self.check_register(p)?;
        let x = p.x_mask() as usize;
        let z = p.z_mask() as usize;
        let gp = p.global_phase();
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (k, o) in out.iter_mut().enumerate() {
            let src = k ^ x;
            let sign = if (z & src).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            *o = gp * sign * self.amps[src];
        }
        Ok(StateVector { n_qubits: self.n_qubits, amps: out })
    }

    /// e^{-iθP}|ψ⟩ = cos(θ)|ψ⟩ - i sin(θ) P|ψ⟩, in place.
    pub fn apply_exp_rotation_mut(&mut self, theta: f64, p: &PauliString) -> Result<()> {
        self.check_register(p)?;
        let cos = Complex64::new(theta.cos(), 0.0);
        let misin = Complex64::new(0.0, -theta.sin());
        let x = p.x_mask() as usize;
        let z = p.z_mask() as usize;
        let gp = p.global_phase();

        if x == 0 {
            // Diagonal word: each amplitude picks up cos ∓ i sin.
            let kernel = |(k, a): (usize, &mut Complex64)| {
                let sign = if (z & k).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                *a *= cos + misin * gp * sign;
            };
            #[cfg(feature = "parallel")]
            if self.amps.len() >= PAR_KERNEL_MIN {
                self.amps.par_iter_mut().enumerate().for_each(kernel);
                return Ok(());
            }
            self.amps.iter_mut().enumerate().for_each(kernel);
            return Ok(());
        }

        // Pair (j, j^x) once each by pinning the highest set bit of x to 0 in
        // the pair index.
        let b = 63 - (x as u64).leading_zeros() as usize;
        let half = self.amps.len() / 2;
        let low = (1usize << b) - 1;
        let kernel = move |k: usize, amps: &mut [Complex64]| {
            let j = ((k & !low) << 1) | (k & low);
            let pj = j ^ x;
            let sign_j = if (z & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let sign_pj = if (z & pj).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let a = amps[j];
            let bb = amps[pj];
            amps[j] = cos * a + misin * gp * sign_pj * bb;
            amps[pj] = cos * bb + misin * gp * sign_j * a;
        };
        #[cfg(feature = "parallel")]
        if self.amps.len() >= PAR_KERNEL_MIN {
            let len = self.amps.len();
            let ptr = SendMut(self.amps.as_mut_ptr());
            (0..half).into_par_iter().for_each(move |k| {
                // SAFETY: pair k touches only slots j and j^x, and the map
                // k -> {j, j^x} partitions 0..len into disjoint pairs.
                let amps = unsafe { std::slice::from_raw_parts_mut(ptr.get(), len) };
                kernel(k, amps);
            });
            return Ok(());
        }
        for k in 0..half {
            kernel(k, &mut self.amps);
        }
        Ok(())
    }

    pub fn apply_exp_rotation(&self, theta: f64, p: &PauliString) -> Result<StateVector> {
        let mut out = self.clone();
        out.apply_exp_rotation_mut(theta, p)?;
        Ok(out)
    }

    /// ⟨ψ|P|ψ⟩ without materializing P|ψ⟩.
    pub fn pauli_expectation(&self, p: &PauliString) -> Result<Complex64> {
        self.check_register(p)?;
        let x = p.x_mask() as usize;
        let z = p.z_mask() as usize;
        let gp = p.global_phase();
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, a) in self.amps.iter().enumerate() {
            let src = k ^ x;
            let sign = if (z & src).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            acc += a.conj() * (gp * sign * self.amps[src]);
        }
        Ok(acc)
    }

    fn check_register(&self, p: &PauliString) -> Result<()> {
        if p.n_qubits() != self.n_qubits {
            return Err(SimError::QubitCountMismatch { left: self.n_qubits, right: p.n_qubits() });
        }
        Ok(())
    }

    /// Projector |ψ⟩⟨ψ| as a dense density matrix.
    pub fn projector(&self) -> DensityMatrix {
        let dim = self.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] = self.amps[r] * self.amps[c].conj();
            }
        }
        DensityMatrix { n_qubits: self.n_qubits, mat: m }
    }
}

#[cfg(feature = "parallel")]
struct SendMut<T>(*mut T);
#[cfg(feature = "parallel")]
unsafe impl<T: Send> Send for SendMut<T> {}
#[cfg(feature = "parallel")]
unsafe impl<T: Send> Sync for SendMut<T> {}
#[cfg(feature = "parallel")]
impl<T> SendMut<T> {
    fn get(&self) -> *mut T {
        self.0
    }
}

impl PauliSum {
    /// (Σ c_i P_i)|ψ⟩.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if self.n_qubits() != psi.n_qubits() {
            return Err(SimError::QubitCountMismatch {
                left: self.n_qubits(),
                right: psi.n_qubits(),
            });
        }
        let dim = psi.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for (c, p) in self.terms() {
            let x = p.x_mask() as usize;
            let z = p.z_mask() as usize;
            let cp = c * p.global_phase();
            for (k, o) in out.iter_mut().enumerate() {
                let src = k ^ x;
                let sign = if (z & src).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                *o += cp * sign * psi.amplitudes()[src];
            }
        }
        StateVector::from_amplitudes(psi.n_qubits(), out)
    }

    /// ⟨ψ|Σ c_i P_i|ψ⟩.
    pub fn expectation(&self, psi: &StateVector) -> Result<Complex64> {
        if self.n_qubits() != psi.n_qubits() {
            return Err(SimError::QubitCountMismatch {
                left: self.n_qubits(),
                right: psi.n_qubits(),
            });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, p) in self.terms() {
            acc += c * psi.pauli_expectation(p)?;
        }
        Ok(acc)
    }
}

/// Dense 2^n × 2^n density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(n_qubits: usize, mat: DMatrix<Complex64>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(SimError::DimensionMismatch { expected: dim, found: mat.nrows() });
        }
        Ok(DensityMatrix { n_qubits, mat })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.mat
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    /// Tr(ρ²), real part.
    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.mat - self.mat.adjoint()).norm() <= tol
    }

    /// Tr(O ρ) for a Pauli-sum observable, computed term by term.
    pub fn pauli_trace(&self, op: &PauliSum) -> Result<Complex64> {
        if op.n_qubits() != self.n_qubits {
            return Err(SimError::QubitCountMismatch {
                left: op.n_qubits(),
                right: self.n_qubits,
            });
        }
        // Tr(P ρ) = Σ_k phase(k) ρ[k, k^x]
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, p) in op.terms() {
            let x = p.x_mask() as usize;
            let z = p.z_mask() as usize;
            let cp = c * p.global_phase();
            let mut t = Complex64::new(0.0, 0.0);
            for k in 0..self.dim() {
                let sign = if (z & k).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                t += sign * self.mat[(k, k ^ x)];
            }
            acc += cp * t;
        }
        Ok(acc)
    }
}

/// Column-stack ρ into a state vector on the doubled register.
///
/// Preserves norms: ‖vec(ρ)‖₂ = √Tr(ρ†ρ).
pub fn vec_density(rho: &DensityMatrix) -> StateVector {
    // nalgebra stores column-major, which is exactly the column stacking.
    let amps = rho.mat.as_slice().to_vec();
    StateVector { n_qubits: 2 * rho.n_qubits, amps }
}

/// Inverse of [`vec_density`]; requires an even register.
pub fn unvec_state(v: &StateVector) -> Result<DensityMatrix> {
    if v.n_qubits % 2 != 0 {
        return Err(SimError::InvalidInput(format!(
            "unvec needs an even register, got {} qubits",
            v.n_qubits
        )));
    }
    let n = v.n_qubits / 2;
    let dim = 1usize << n;
    let mat = DMatrix::from_column_slice(dim, dim, &v.amps);
    Ok(DensityMatrix { n_qubits: n, mat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliOp;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_state(rng: &mut StdRng, n: usize) -> StateVector {
        let dim = 1usize << n;
        let amps: Vec<Complex64> =
            (0..dim).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        StateVector::from_amplitudes(n, amps).unwrap().normalized()
    }

    fn rand_string(rng: &mut StdRng, n: usize) -> PauliString {
        let mask = (1u64 << n) - 1;
        PauliString::from_masks(n, rng.random::<u64>() & mask, rng.random::<u64>() & mask).unwrap()
    }

    #[test]
    fn rotation_identity_at_zero_angle() {
        let psi = StateVector::plus_state(3);
        let p = PauliString::from_label("XYZ").unwrap();
        let out = psi.apply_exp_rotation(0.0, &p).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn rotation_half_pi_x_maps_zero_to_minus_i_one() {
        let psi = StateVector::basis(1, 0);
        let p = PauliString::single(1, 0, PauliOp::X).unwrap();
        let out = psi.apply_exp_rotation(std::f64::consts::FRAC_PI_2, &p).unwrap();
        assert!((out.amplitudes()[0]).norm() < 1e-15);
        assert!((out.amplitudes()[1] - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn rotation_matches_dense_exponential() {
        // exp(-iθP) = cos θ · I - i sin θ · P for any Pauli word.
        let mut rng = StdRng::seed_from_u64(0xB1);
        for _ in 0..30 {
            let n = 3;
            let p = rand_string(&mut rng, n);
            let theta: f64 = rng.random::<f64>() * 6.0 - 3.0;
            let psi = rand_state(&mut rng, n);
            let out = psi.apply_exp_rotation(theta, &p).unwrap();

            let dim = 1usize << n;
            let u = DMatrix::<Complex64>::identity(dim, dim) * c(theta.cos(), 0.0)
                - p.dense() * c(0.0, theta.sin());
            let psi_vec = nalgebra::DVector::from_column_slice(psi.amplitudes());
            let expect = &u * psi_vec;
            for k in 0..dim {
                assert!((out.amplitudes()[k] - expect[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rotation_preserves_norm() {
        let mut rng = StdRng::seed_from_u64(0xB2);
        for _ in 0..1000 {
            let n = 1 + (rng.random::<u64>() % 4) as usize;
            let p = rand_string(&mut rng, n);
            let psi = rand_state(&mut rng, n);
            let out = psi.apply_exp_rotation(rng.random::<f64>() * 10.0 - 5.0, &p).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expectation_identity_is_one() {
        let psi = StateVector::plus_state(2);
        let op = PauliSum::identity(2, c(1.0, 0.0));
        let e = op.expectation(&psi).unwrap();
        assert!((e - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn expectation_z_on_plus_is_zero() {
        let psi = StateVector::plus_state(1);
        let z = PauliSum::from_terms(1, vec![(c(1.0, 0.0), PauliString::from_label("Z").unwrap())]);
        assert!(z.expectation(&psi).unwrap().norm() < 1e-14);
    }

    #[test]
    fn expectation_matches_dense_quadratic_form() {
        let mut rng = StdRng::seed_from_u64(0xB3);
        for _ in 0..20 {
            let terms: Vec<_> = (0..4)
                .map(|_| (c(rng.random(), rng.random()), rand_string(&mut rng, 3)))
                .collect();
            let s = PauliSum::from_terms(3, terms);
            let psi = rand_state(&mut rng, 3);
            let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
            let dense = (v.adjoint() * s.dense() * &v)[(0, 0)];
            assert!((s.expectation(&psi).unwrap() - dense).norm() < 1e-12);
            // apply() agrees with dense action too
            let applied = s.apply(&psi).unwrap();
            let dv = s.dense() * &v;
            for k in 0..psi.dim() {
                assert!((applied.amplitudes()[k] - dv[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hermitian_expectation_is_real() {
        let mut rng = StdRng::seed_from_u64(0xB4);
        let terms: Vec<_> =
            (0..5).map(|_| (c(rng.random::<f64>() - 0.5, 0.0), rand_string(&mut rng, 3))).collect();
        let s = PauliSum::from_terms(3, terms);
        let psi = rand_state(&mut rng, 3);
        assert!(s.expectation(&psi).unwrap().im.abs() < 1e-12);
    }

    #[test]
    fn vec_stacks_columns() {
        // ρ = |0⟩⟨0| on one qubit → (1, 0, 0, 0)
        let rho = StateVector::basis(1, 0).projector();
        let v = vec_density(&rho);
        let a = v.amplitudes();
        assert!((a[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(a[1].norm() < 1e-15 && a[2].norm() < 1e-15 && a[3].norm() < 1e-15);
    }

    #[test]
    fn vec_unvec_round_trip_and_isometry() {
        let mut rng = StdRng::seed_from_u64(0xB5);
        for _ in 0..20 {
            let dim = 4;
            let m = DMatrix::from_fn(dim, dim, |_, _| c(rng.random(), rng.random()));
            let rho = DensityMatrix::new(2, m).unwrap();
            let v = vec_density(&rho);
            let back = unvec_state(&v).unwrap();
            assert_eq!(back, rho);
            let tr = (rho.matrix().adjoint() * rho.matrix()).trace().re.sqrt();
            assert!((v.norm() - tr).abs() <= 1e-12);
        }
    }

    #[test]
    fn unvec_rejects_odd_register() {
        let v = StateVector::plus_state(3);
        assert!(unvec_state(&v).is_err());
    }

    #[test]
    fn vec_identity_c_transpose_kron_a() {
        // vec(ABC) = (C^T ⊗ A) vec(B): the sign/layout test for the
        // column-stacking convention, with the column factor on the high
        // qubits.
        let mut rng = StdRng::seed_from_u64(0xB6);
        let dim = 4;
        let mk = |rng: &mut StdRng| DMatrix::from_fn(dim, dim, |_, _| c(rng.random(), rng.random()));
        let (a, b, m) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let lhs = vec_density(&DensityMatrix::new(2, &a * &b * &m).unwrap());
        let kron = m.transpose().kronecker(&a);
        let rhs = kron * nalgebra::DVector::from_column_slice(
            vec_density(&DensityMatrix::new(2, b).unwrap()).amplitudes(),
        );
        for k in 0..dim * dim {
            assert!((lhs.amplitudes()[k] - rhs[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn pauli_trace_matches_dense() {
        let mut rng = StdRng::seed_from_u64(0xB7);
        let dim = 8;
        let m = DMatrix::from_fn(dim, dim, |_, _| c(rng.random(), rng.random()));
        let rho = DensityMatrix::new(3, m).unwrap();
        let terms: Vec<_> =
            (0..4).map(|_| (c(rng.random(), rng.random()), rand_string(&mut rng, 3))).collect();
        let s = PauliSum::from_terms(3, terms);
        let direct = rho.pauli_trace(&s).unwrap();
        let dense = (s.dense() * rho.matrix()).trace();
        assert!((direct - dense).norm() < 1e-12);
    }
}
