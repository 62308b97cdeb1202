//! Infidelity, eigenstate populations, gate-resource counting, scaling fits,
//! and ensemble size statistics.

use nalgebra::{DMatrix, DVector};

use crate::error::SimError;
use crate::pauli::{PauliString, PauliSum};
use crate::solvers::TrajectoryRecord;
use crate::state::DensityMatrix;
use crate::variational::Ansatz;
use crate::Result;

/// Trace-norm distance D = Tr√((ρ-ρ_t)†(ρ-ρ_t)): the sum of singular values
/// of the difference. Ranges over [0, 2] for density matrices.
pub fn infidelity(rho: &DensityMatrix, rho_exact: &DensityMatrix) -> Result<f64> {
    if rho.dim() != rho_exact.dim() {
        return Err(SimError::DimensionMismatch { expected: rho_exact.dim(), found: rho.dim() });
    }
    let diff = rho.matrix() - rho_exact.matrix();
    let svd = diff.svd(false, false);
    Ok(svd.singular_values.iter().sum())
}

/// Populations of `rho` in the eigenbasis of a Hermitian observable, sorted
/// by ascending eigenvalue. `degenerate` flags gaps below 1e-10, where
/// individual populations depend on the eigenvector choice and only
/// subspace sums are meaningful.
#[derive(Debug, Clone)]
pub struct PopulationReport {
    pub eigenvalues: Vec<f64>,
    pub populations: Vec<f64>,
    pub degenerate: bool,
}

pub fn eigenstate_populations(h: &PauliSum, rho: &DensityMatrix) -> Result<PopulationReport> {
    if h.n_qubits() != rho.n_qubits() {
        return Err(SimError::QubitCountMismatch { left: h.n_qubits(), right: rho.n_qubits() });
    }
    if !h.is_hermitian(1e-12) {
        return Err(SimError::InvalidInput("observable must be Hermitian".into()));
    }
    let eig = h.dense().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut eigenvalues = Vec::with_capacity(order.len());
    let mut populations = Vec::with_capacity(order.len());
    for &k in &order {
        eigenvalues.push(eig.eigenvalues[k]);
        let v = eig.eigenvectors.column(k);
        populations.push((v.adjoint() * rho.matrix() * v)[(0, 0)].re);
    }
    let degenerate = eigenvalues.windows(2).any(|w| (w[1] - w[0]).abs() < 1e-10);
    Ok(PopulationReport { eigenvalues, populations, degenerate })
}

/// Gate-resource estimate for a list of Pauli-rotation layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceCount {
    pub n_params: usize,
    /// Layers acting on two or more qubits.
    pub n_multiqubit: usize,
    /// Ladder decomposition: each weight-l rotation costs 2(l-1) CNOTs,
    /// Σ_l N_l·2(l-1).
    pub cnot_estimate: usize,
    /// The alternative per-weight-class count Σ_{l>1} 2(N_l-1), reported
    /// side by side.
    pub cnot_estimate_grouped: usize,
}

pub fn cnot_estimate_ops(ops: &[PauliString]) -> ResourceCount {
    let mut by_weight: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for op in ops {
        *by_weight.entry(op.weight()).or_insert(0) += 1;
    }
    let mut ladder = 0;
    let mut grouped = 0;
    let mut multi = 0;
    for (&l, &count) in &by_weight {
        if l > 1 {
            ladder += count * 2 * (l - 1);
            grouped += 2 * (count - 1);
            multi += count;
        }
    }
    ResourceCount {
        n_params: ops.len(),
        n_multiqubit: multi,
        cnot_estimate: ladder,
        cnot_estimate_grouped: grouped,
    }
}

pub fn cnot_estimate(a: &Ansatz) -> ResourceCount {
    cnot_estimate_ops(&a.operators())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingModel {
    /// y = a·N^b
    Power,
    /// y = α·e^{βN}
    Exponential,
}

#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub model: ScalingModel,
    /// (a, b) or (α, β).
    pub params: (f64, f64),
    pub r_squared: f64,
    /// False when the iteration cap was hit before the step converged.
    pub converged: bool,
}

fn model_value(model: ScalingModel, p: (f64, f64), n: f64) -> f64 {
    match model {
        ScalingModel::Power => {
            if n == 0.0 {
                // a·0^b = 0 for b > 0; the b ≤ 0 region blows up and the
                // damping rejects it
                if p.1 > 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                p.0 * n.powf(p.1)
            }
        }
        ScalingModel::Exponential => p.0 * (p.1 * n).exp(),
    }
}

fn model_jacobian(model: ScalingModel, p: (f64, f64), n: f64) -> (f64, f64) {
    match model {
        ScalingModel::Power => {
            if n == 0.0 {
                (0.0, 0.0)
            } else {
                let nb = n.powf(p.1);
                (nb, p.0 * nb * n.ln())
            }
        }
        ScalingModel::Exponential => {
            let e = (p.1 * n).exp();
            (e, p.0 * n * e)
        }
    }
}

fn sum_squares(model: ScalingModel, p: (f64, f64), pts: &[(f64, f64)]) -> f64 {
    pts.iter().map(|&(n, y)| {
        let r = model_value(model, p, n) - y;
        r * r
    }).sum()
}

/// Initial guess from a log-space linear regression over the positive points.
fn initial_guess(model: ScalingModel, pts: &[(f64, f64)]) -> (f64, f64) {
    let usable: Vec<(f64, f64)> = pts
        .iter()
        .copied()
        .filter(|&(n, y)| y > 0.0 && (model == ScalingModel::Exponential || n > 0.0))
        .collect();
    if usable.len() < 2 {
        return (1.0, 1.0);
    }
    let xs: Vec<f64> = usable
        .iter()
        .map(|&(n, _)| if model == ScalingModel::Power { n.ln() } else { n })
        .collect();
    let ys: Vec<f64> = usable.iter().map(|&(_, y)| y.ln()).collect();
    let m = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxx = xs.iter().map(|x| x * x).sum::<f64>();
    let sxy = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return (1.0, 1.0);
    }
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    (intercept.exp(), slope)
}

/// Nonlinear least squares with Levenberg-Marquardt damping on the raw data
/// (the (0, 0) augmentation used for vectorized counts forbids a log
/// transform). R² = 1 - SS_res/SS_tot about the mean of y.
pub fn fit_scaling(points: &[(f64, f64)], model: ScalingModel) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(SimError::InvalidInput("fit needs at least 3 points".into()));
    }
    if points.iter().any(|&(n, y)| !n.is_finite() || !y.is_finite() || y < 0.0) {
        return Err(SimError::InvalidInput("fit points must be finite with y ≥ 0".into()));
    }
    let mut p = initial_guess(model, points);
    let mut ss = sum_squares(model, p, points);
    let mut mu = 1e-3;
    let mut converged = false;

    for _ in 0..200 {
        // J^T J and J^T r at the current parameters
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for &(n, y) in points {
            let r = model_value(model, p, n) - y;
            let (j0, j1) = model_jacobian(model, p, n);
            jtj[0][0] += j0 * j0;
            jtj[0][1] += j0 * j1;
            jtj[1][1] += j1 * j1;
            jtr[0] += j0 * r;
            jtr[1] += j1 * r;
        }
        jtj[1][0] = jtj[0][1];
        let grad_norm = (jtr[0] * jtr[0] + jtr[1] * jtr[1]).sqrt();
        if grad_norm < 1e-14 * (1.0 + ss) {
            converged = true;
            break;
        }
        // damped 2x2 solve, retrying with a larger mu on rejection
        let mut accepted = false;
        for _ in 0..40 {
            let a = DMatrix::from_row_slice(
                2,
                2,
                &[jtj[0][0] + mu * jtj[0][0].max(1e-12), jtj[0][1], jtj[1][0], jtj[1][1] + mu * jtj[1][1].max(1e-12)],
            );
            let b = DVector::from_column_slice(&[-jtr[0], -jtr[1]]);
            let Some(delta) = a.lu().solve(&b) else {
                mu *= 10.0;
                continue;
            };
            let trial = (p.0 + delta[0], p.1 + delta[1]);
            let ss_trial = sum_squares(model, trial, points);
            if ss_trial.is_finite() && ss_trial < ss {
                let step = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt();
                let scale = (p.0 * p.0 + p.1 * p.1).sqrt();
                p = trial;
                ss = ss_trial;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                if step < 1e-12 * (1.0 + scale) {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted || converged {
            converged = converged || !accepted && grad_norm < 1e-8;
            break;
        }
    }

    let y_mean = points.iter().map(|&(_, y)| y).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|&(_, y)| (y - y_mean) * (y - y_mean)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss / ss_tot } else { 1.0 };
    Ok(ScalingFit { model, params: p, r_squared, converged })
}

/// Per-time-point mean/median/max of the cumulative operator counts over an
/// ensemble of trajectories.
#[derive(Debug, Clone)]
pub struct TrajectorySizeStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn trajectory_stats(records: &[TrajectoryRecord]) -> Result<TrajectorySizeStats> {
    let first = records.first().ok_or(SimError::EmptyInput("trajectory records"))?;
    for r in records {
        if r.times != first.times {
            return Err(SimError::InvalidInput("trajectory records on different grids".into()));
        }
    }
    let len = first.times.len();
    let mut mean = Vec::with_capacity(len);
    let mut median = Vec::with_capacity(len);
    let mut max = Vec::with_capacity(len);
    for i in 0..len {
        let mut vals: Vec<f64> = records.iter().map(|r| r.cumulative_ops[i] as f64).collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
        median.push(if vals.len() % 2 == 1 {
            vals[vals.len() / 2]
        } else {
            0.5 * (vals[vals.len() / 2 - 1] + vals[vals.len() / 2])
        });
        max.push(*vals.last().unwrap());
    }
    Ok(TrajectorySizeStats { times: first.times.clone(), mean, median, max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::AnnealingModel;
    use crate::pauli::PauliOp;
    use crate::state::StateVector;
    use num_complex::Complex64;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_density(rng: &mut StdRng, n: usize) -> DensityMatrix {
        // Ginibre construction: G G† / Tr
        let dim = 1usize << n;
        let g = DMatrix::from_fn(dim, dim, |_, _| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::new(n, m / tr).unwrap()
    }

    #[test]
    fn infidelity_basics() {
        let mut rng = StdRng::seed_from_u64(0xF1);
        let rho = random_density(&mut rng, 2);
        assert!(infidelity(&rho, &rho).unwrap() < 1e-14);

        let zero = StateVector::basis(1, 0).projector();
        let one = StateVector::basis(1, 1).projector();
        assert!((infidelity(&zero, &one).unwrap() - 2.0).abs() < 1e-12);

        let bad = StateVector::basis(2, 0).projector();
        assert!(infidelity(&zero, &bad).is_err());
    }

    #[test]
    fn infidelity_matches_eigendecomposition_oracle() {
        // For Hermitian differences the trace norm is the sum of |λ_i|.
        let mut rng = StdRng::seed_from_u64(0xF2);
        for _ in 0..20 {
            let a = random_density(&mut rng, 2);
            let b = random_density(&mut rng, 2);
            let d = infidelity(&a, &b).unwrap();
            let eig = (a.matrix() - b.matrix()).symmetric_eigen();
            let oracle: f64 = eig.eigenvalues.iter().map(|e| e.abs()).sum();
            assert!((d - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn infidelity_triangle_inequality() {
        let mut rng = StdRng::seed_from_u64(0xF3);
        for _ in 0..20 {
            let a = random_density(&mut rng, 2);
            let b = random_density(&mut rng, 2);
            let m = random_density(&mut rng, 2);
            let ab = infidelity(&a, &b).unwrap();
            let am = infidelity(&a, &m).unwrap();
            let mb = infidelity(&m, &b).unwrap();
            assert!(ab <= am + mb + 1e-10);
        }
    }

    #[test]
    fn populations_ground_state_projector() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let h = m.hamiltonian(0.0).unwrap();
        // |+...+⟩ is the ground state of -ΣX
        let rho = StateVector::plus_state(2).projector();
        let rep = eigenstate_populations(&h, &rho).unwrap();
        assert!((rep.populations[0] - 1.0).abs() < 1e-10);
        assert!(rep.populations[1..].iter().all(|p| p.abs() < 1e-10));
    }

    #[test]
    fn populations_maximally_mixed() {
        let m = AnnealingModel::default_chain(2).unwrap();
        let h = m.hamiltonian(3.0).unwrap();
        let dim = 4;
        let rho = DensityMatrix::new(
            2,
            DMatrix::identity(dim, dim) * c(0.25, 0.0),
        )
        .unwrap();
        let rep = eigenstate_populations(&h, &rho).unwrap();
        for p in &rep.populations {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn populations_sum_to_trace() {
        let mut rng = StdRng::seed_from_u64(0xF4);
        let m = AnnealingModel::default_chain(2).unwrap();
        let h = m.hamiltonian(7.0).unwrap();
        for _ in 0..10 {
            let rho = random_density(&mut rng, 2);
            let rep = eigenstate_populations(&h, &rho).unwrap();
            let sum: f64 = rep.populations.iter().sum();
            assert!((sum - rho.trace().re).abs() < 1e-10);
        }
    }

    #[test]
    fn cnot_counting() {
        let n = 3;
        let single = PauliString::single(n, 0, PauliOp::X).unwrap();
        let double = PauliString::two(n, 0, PauliOp::Z, 1, PauliOp::Z).unwrap();
        let triple = PauliString::from_label("XYZ").unwrap();

        let rc = cnot_estimate_ops(&[single]);
        assert_eq!(rc.cnot_estimate, 0);
        assert_eq!(rc.n_multiqubit, 0);

        let rc = cnot_estimate_ops(&[double]);
        assert_eq!(rc.cnot_estimate, 2);
        assert_eq!(rc.cnot_estimate_grouped, 0);

        let ten: Vec<PauliString> = (0..10).map(|_| double).collect();
        let rc = cnot_estimate_ops(&ten);
        assert_eq!(rc.cnot_estimate, 20);
        assert_eq!(rc.cnot_estimate_grouped, 18);

        let rc = cnot_estimate_ops(&[single, double, triple]);
        assert_eq!(rc.n_params, 3);
        assert_eq!(rc.n_multiqubit, 2);
        assert_eq!(rc.cnot_estimate, 2 + 4);
    }

    #[test]
    fn fit_recovers_power_law() {
        let pts: Vec<(f64, f64)> = (2..=8).map(|n| (n as f64, 2.0 * (n as f64).powf(1.5))).collect();
        let fit = fit_scaling(&pts, ScalingModel::Power).unwrap();
        assert!((fit.params.0 - 2.0).abs() < 1e-3 * 2.0, "a={}", fit.params.0);
        assert!((fit.params.1 - 1.5).abs() < 1e-3, "b={}", fit.params.1);
        assert!(fit.r_squared > 1.0 - 1e-6);
    }

    #[test]
    fn fit_recovers_exponential() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|n| (n as f64, (0.5 * n as f64).exp())).collect();
        let fit = fit_scaling(&pts, ScalingModel::Exponential).unwrap();
        assert!((fit.params.0 - 1.0).abs() < 1e-3);
        assert!((fit.params.1 - 0.5).abs() < 1e-3);
        assert!(fit.r_squared > 1.0 - 1e-6);
    }

    #[test]
    fn fit_handles_origin_augmentation() {
        // the (0,0) point forbids the log transform but must not break the fit
        let mut pts: Vec<(f64, f64)> =
            (2..=6).map(|n| (n as f64, 3.0 * (n as f64).powf(2.0))).collect();
        pts.insert(0, (0.0, 0.0));
        let fit = fit_scaling(&pts, ScalingModel::Power).unwrap();
        assert!((fit.params.1 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn fit_input_validation() {
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, 2.0)], ScalingModel::Power).is_err());
        assert!(fit_scaling(&[(1.0, 1.0), (2.0, -2.0), (3.0, 3.0)], ScalingModel::Power).is_err());
    }

    #[test]
    fn stats_single_and_ordering() {
        use std::collections::BTreeMap;
        let mk = |sizes: Vec<usize>| TrajectoryRecord {
            seed: 0,
            times: vec![0.0, 1.0, 2.0],
            ansatz_sizes: sizes.clone(),
            cumulative_ops: sizes,
            gamma_log: vec![0.0; 3],
            jump_events: vec![],
            snapshots: vec![],
            observables: BTreeMap::new(),
            ops_added: vec![],
        };
        let single = trajectory_stats(&[mk(vec![1, 2, 3])]).unwrap();
        assert_eq!(single.mean, vec![1.0, 2.0, 3.0]);
        assert_eq!(single.median, single.mean);
        assert_eq!(single.max, single.mean);

        let multi =
            trajectory_stats(&[mk(vec![1, 2, 3]), mk(vec![3, 4, 9]), mk(vec![2, 2, 3])]).unwrap();
        for i in 0..3 {
            assert!(multi.max[i] >= multi.median[i]);
            assert!(multi.median[i] >= 0.0);
        }
        assert!(trajectory_stats(&[]).is_err());
    }
}
