//! Pauli-string and Pauli-sum algebra in the binary symplectic representation.
//!
//! An N-qubit Pauli word is stored as a pair of bit masks `(x, z)`: bit `q`
//! of `x` (`z`) set means an X (Z) factor on qubit `q`, both set means Y with
//! the convention `Y = i X Z`, the `i` being tracked as a phase during
//! products rather than stored. Qubit 0 is the least-significant bit of the
//! amplitude index everywhere in this crate.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::fmt;

use crate::error::SimError;
use crate::Result;

/// Coefficients with modulus below this are dropped during canonicalization.
pub const COEFF_EPS: f64 = 1e-14;

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauliOp {
    I,
    X,
    Y,
    Z,
}

impl PauliOp {
    fn bits(self) -> (u64, u64) {
        match self {
            PauliOp::I => (0, 0),
            PauliOp::X => (1, 0),
            PauliOp::Y => (1, 1),
            PauliOp::Z => (0, 1),
        }
    }

    fn from_bits(x: u64, z: u64) -> Self {
        match (x, z) {
            (0, 0) => PauliOp::I,
            (1, 0) => PauliOp::X,
            (1, 1) => PauliOp::Y,
            _ => PauliOp::Z,
        }
    }

    /// The 2×2 matrix of this letter.
    pub fn matrix(self) -> DMatrix<Complex64> {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::i();
        match self {
            PauliOp::I => DMatrix::from_row_slice(2, 2, &[l, o, o, l]),
            PauliOp::X => DMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            PauliOp::Y => DMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            PauliOp::Z => DMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        }
    }
}

impl fmt::Display for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            PauliOp::I => 'I',
            PauliOp::X => 'X',
            PauliOp::Y => 'Y',
            PauliOp::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// i^k for k taken mod 4.
pub(crate) fn pow_i(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// An N-qubit Pauli word (no stored phase; Hermitian and self-inverse).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    n_qubits: usize,
    x: u64,
    z: u64,
}

impl PauliString {
    /// Identity word on `n_qubits`.
    pub fn identity(n_qubits: usize) -> Self {
        assert!(n_qubits >= 1 && n_qubits <= 64, "qubit count out of range");
        PauliString { n_qubits, x: 0, z: 0 }
    }

    /// Build from raw symplectic masks.
    pub fn from_masks(n_qubits: usize, x: u64, z: u64) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 64 {
            return Err(SimError::invalid("n_qubits", n_qubits as f64));
        }
        let valid = if n_qubits == 64 { u64::MAX } else { (1u64 << n_qubits) - 1 };
        if x & !valid != 0 || z & !valid != 0 {
            return Err(SimError::InvalidInput(format!(
                "mask bits outside the {n_qubits}-qubit register"
            )));
        }
        Ok(PauliString { n_qubits, x, z })
    }

    /// Single-letter word: `op` on `qubit`, identity elsewhere.
    pub fn single(n_qubits: usize, qubit: usize, op: PauliOp) -> Result<Self> {
        if qubit >= n_qubits {
            return Err(SimError::invalid("qubit", qubit as f64));
        }
        let (x, z) = op.bits();
        PauliString::from_masks(n_qubits, x << qubit, z << qubit)
    }

    /// Two-letter word on distinct qubits.
    pub fn two(n_qubits: usize, q1: usize, op1: PauliOp, q2: usize, op2: PauliOp) -> Result<Self> {
        if q1 == q2 {
            return Err(SimError::InvalidInput("two() requires distinct qubits".into()));
        }
        let (x1, z1) = op1.bits();
        let (x2, z2) = op2.bits();
        PauliString::from_masks(n_qubits, (x1 << q1) | (x2 << q2), (z1 << q1) | (z2 << q2))
    }

    /// Parse a label like `"XIZY"`, qubit 0 leftmost.
    pub fn from_label(label: &str) -> Result<Self> {
        let n = label.len();
        let (mut x, mut z) = (0u64, 0u64);
        for (q, c) in label.chars().enumerate() {
            let op = match c {
                'I' => PauliOp::I,
                'X' => PauliOp::X,
                'Y' => PauliOp::Y,
                'Z' => PauliOp::Z,
                _ => return Err(SimError::InvalidInput(format!("bad Pauli letter '{c}'"))),
            };
            let (xb, zb) = op.bits();
            x |= xb << q;
            z |= zb << q;
        }
        PauliString::from_masks(n, x, z)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn op_at(&self, qubit: usize) -> PauliOp {
        PauliOp::from_bits((self.x >> qubit) & 1, (self.z >> qubit) & 1)
    }

    /// Number of Y letters; transposition and conjugation flip the sign of
    /// each Y factor, so `P^T = P* = (-1)^{#Y} P`.
    pub fn num_y(&self) -> u32 {
        (self.x & self.z).count_ones()
    }

    /// Re-embed into a larger register with all letters shifted up by `offset`.
    pub fn embedded(&self, n_qubits: usize, offset: usize) -> Result<Self> {
        if offset + self.n_qubits > n_qubits {
            return Err(SimError::invalid("offset", offset as f64));
        }
        PauliString::from_masks(n_qubits, self.x << offset, self.z << offset)
    }

    /// Product `self * other` as `(phase, word)` with
    /// `dense(self) * dense(other) == phase * dense(word)` and
    /// `phase ∈ {1, i, -1, -i}`.
    pub fn mul(&self, other: &PauliString) -> Result<(Complex64, PauliString)> {
        if self.n_qubits != other.n_qubits {
            return Err(SimError::QubitCountMismatch {
                left: self.n_qubits,
                right: other.n_qubits,
            });
        }
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        // i-exponent: one i per Y in each factor, minus one per Y in the
        // product, plus a (-1) for every ZX swap while commuting the factors
        // into X..Z order.
        let e = 4 * 64 + (self.x & self.z).count_ones() + (other.x & other.z).count_ones()
            + 2 * (self.z & other.x).count_ones()
            - (x & z).count_ones();
        Ok((pow_i(e), PauliString { n_qubits: self.n_qubits, x, z }))
    }

    /// True iff the symplectic product is even.
    pub fn commutes_with(&self, other: &PauliString) -> Result<bool> {
        if self.n_qubits != other.n_qubits {
            return Err(SimError::QubitCountMismatch {
                left: self.n_qubits,
                right: other.n_qubits,
            });
        }
        let sp = (self.x & other.z).count_ones() + (self.z & other.x).count_ones();
        Ok(sp % 2 == 0)
    }

    /// Diagonal-and-flip action data: `P|j> = phase(j) |j ^ x_mask>` with
    /// `phase(j) = i^{#Y} * (-1)^{popcount(z & j)}`.
    #[inline]
    pub(crate) fn global_phase(&self) -> Complex64 {
        pow_i(self.num_y())
    }

    /// Dense matrix in the qubit-0-least-significant basis.
    pub fn dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let gp = self.global_phase();
        let mut m = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let row = col ^ self.x as usize;
            let sign = if ((self.z as usize & col).count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
            m[(row, col)] = gp * sign;
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n_qubits {
            write!(f, "{}", self.op_at(q))?;
        }
        Ok(())
    }
}

/// Complex-weighted sum of Pauli words, kept canonical: terms sorted by
/// mask, duplicates merged, coefficients below [`COEFF_EPS`] dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<(Complex64, PauliString)>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Self {
        PauliSum { n_qubits, terms: Vec::new() }
    }

    pub fn identity(n_qubits: usize, coeff: Complex64) -> Self {
        PauliSum::from_terms(n_qubits, vec![(coeff, PauliString::identity(n_qubits))])
    }

    pub fn from_terms(
        n_qubits: usize,
        terms: impl IntoIterator<Item = (Complex64, PauliString)>,
    ) -> Self {
        let mut s = PauliSum { n_qubits, terms: terms.into_iter().collect() };
        for (_, p) in &s.terms {
            assert_eq!(p.n_qubits(), n_qubits, "term register size mismatch");
        }
        s.canonicalize();
        s
    }

    fn canonicalize(&mut self) {
        self.terms.sort_by_key(|(_, p)| (p.x_mask(), p.z_mask()));
        let mut merged: Vec<(Complex64, PauliString)> = Vec::with_capacity(self.terms.len());
        for (c, p) in self.terms.drain(..) {
            match merged.last_mut() {
                Some((c0, p0)) if *p0 == p => *c0 += c,
                _ => merged.push((c, p)),
            }
        }
        merged.retain(|(c, _)| c.norm() > COEFF_EPS);
        self.terms = merged;
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[(Complex64, PauliString)] {
        &self.terms
    }

    pub fn add_term(&mut self, coeff: Complex64, word: PauliString) {
        assert_eq!(word.n_qubits(), self.n_qubits, "term register size mismatch");
        self.terms.push((coeff, word));
        self.canonicalize();
    }

    pub fn add(&self, other: &PauliSum) -> Result<PauliSum> {
        if self.n_qubits != other.n_qubits {
            return Err(SimError::QubitCountMismatch {
                left: self.n_qubits,
                right: other.n_qubits,
            });
        }
        let terms = self.terms.iter().chain(other.terms.iter()).cloned();
        Ok(PauliSum::from_terms(self.n_qubits, terms))
    }

    pub fn scaled(&self, factor: Complex64) -> PauliSum {
        PauliSum::from_terms(
            self.n_qubits,
            self.terms.iter().map(|(c, p)| (c * factor, *p)),
        )
    }

    /// Operator product, expanded term by term.
    pub fn mul(&self, other: &PauliSum) -> Result<PauliSum> {
        if self.n_qubits != other.n_qubits {
            return Err(SimError::QubitCountMismatch {
                left: self.n_qubits,
                right: other.n_qubits,
            });
        }
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ca, pa) in &self.terms {
            for (cb, pb) in &other.terms {
                let (phase, p) = pa.mul(pb)?;
                terms.push((ca * cb * phase, p));
            }
        }
        Ok(PauliSum::from_terms(self.n_qubits, terms))
    }

    /// `[self, other] = self*other - other*self`.
    pub fn commutator(&self, other: &PauliSum) -> Result<PauliSum> {
        let ab = self.mul(other)?;
        let ba = other.mul(self)?;
        ab.add(&ba.scaled(Complex64::new(-1.0, 0.0)))
    }

    pub fn dagger(&self) -> PauliSum {
        PauliSum::from_terms(self.n_qubits, self.terms.iter().map(|(c, p)| (c.conj(), *p)))
    }

    /// Transpose: flips the sign of each Y factor.
    pub fn transpose(&self) -> PauliSum {
        PauliSum::from_terms(
            self.n_qubits,
            self.terms.iter().map(|(c, p)| {
                let sign = if p.num_y() % 2 == 0 { 1.0 } else { -1.0 };
                (c * sign, *p)
            }),
        )
    }

    /// Entrywise complex conjugate (= transpose of the dagger).
    pub fn conjugate(&self) -> PauliSum {
        self.dagger().transpose()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.terms.iter().all(|(c, _)| c.im.abs() <= tol)
    }

    /// Split into `(h_e, h_a)` with `self = h_e - i h_a` and both parts
    /// Hermitian (real coefficients).
    pub fn hermitian_split(&self) -> (PauliSum, PauliSum) {
        let he = PauliSum::from_terms(
            self.n_qubits,
            self.terms.iter().map(|(c, p)| (Complex64::new(c.re, 0.0), *p)),
        );
        let ha = PauliSum::from_terms(
            self.n_qubits,
            self.terms.iter().map(|(c, p)| (Complex64::new(-c.im, 0.0), *p)),
        );
        (he, ha)
    }

    /// Embed into a larger register, letters shifted up by `offset`.
    pub fn embedded(&self, n_qubits: usize, offset: usize) -> Result<PauliSum> {
        let terms = self
            .terms
            .iter()
            .map(|(c, p)| Ok((*c, p.embedded(n_qubits, offset)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PauliSum::from_terms(n_qubits, terms))
    }

    /// `Tr(self† self) = 2^n · Σ|c|²` (Pauli words are trace-orthogonal).
    pub fn frobenius_norm_sq(&self) -> f64 {
        let dim = (1u64 << self.n_qubits) as f64;
        dim * self.terms.iter().map(|(c, _)| c.norm_sqr()).sum::<f64>()
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::zeros(dim, dim);
        for (c, p) in &self.terms {
            m += p.dense() * *c;
        }
        m
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (c, p)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i)·{}", c.re, c.im, p)?;
        }
        Ok(())
    }
}
