//! Full Hermitian eigendecomposition, degeneracy audits, change of basis and
//! thermal weights.
//!
//! Eigenvector phases are whatever the solver returns. Every quantity built
//! downstream depends only on `|A_jk|²`, `ρ_jj` or diagonal products
//! `A_kk B_kk`, which do not see those phases.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::diag::Diag;
use faer::{c64, Mat, Par};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, ComplexMatrix};
use crate::spinchain::DenseOperator;

/// Default tolerance for calling two energies or two gaps equal.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending eigenvalues.
    pub energies: Vec<f64>,
    /// Column `j` is the eigenvector of `energies[j]`.
    pub vectors: ComplexMatrix,
}

fn real_evd(a: faer::MatRef<'_, f64>, vectors: bool) -> Result<(Vec<f64>, Option<Mat<f64>>)> {
    let n = a.nrows();
    let mut s = Diag::<f64>::zeros(n);
    let mut u = vectors.then(|| Mat::<f64>::zeros(n, n));
    let want = if vectors { ComputeEigenvectors::Yes } else { ComputeEigenvectors::No };
    let req = self_adjoint_evd_scratch::<f64>(n, want, Par::Seq, Default::default());
    let mut buf = MemBuffer::new(req);
    self_adjoint_evd(
        a,
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence)?;
    Ok((s.column_vector().iter().copied().collect(), u))
}

fn complex_evd(m: &ComplexMatrix, vectors: bool) -> Result<(Vec<f64>, Option<ComplexMatrix>)> {
    let n = m.nrows();
    let a = Mat::<c64>::from_fn(n, n, |i, j| m.get(i, j));
    let mut s = Diag::<c64>::zeros(n);
    let mut u = vectors.then(|| Mat::<c64>::zeros(n, n));
    let want = if vectors { ComputeEigenvectors::Yes } else { ComputeEigenvectors::No };
    let req = self_adjoint_evd_scratch::<c64>(n, want, Par::Seq, Default::default());
    let mut buf = MemBuffer::new(req);
    self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| Error::NoConvergence)?;
    let u = u.map(|u| {
        let re = Mat::from_fn(n, n, |i, j| u[(i, j)].re);
        let im = Mat::from_fn(n, n, |i, j| u[(i, j)].im);
        ComplexMatrix::from_parts(re, Some(im))
    });
    Ok((s.column_vector().iter().map(|z| z.re).collect(), u))
}

/// Eigenvalues (and optionally eigenvectors) of a Hermitian matrix.
pub(crate) fn hermitian_eigen(m: &ComplexMatrix, vectors: bool) -> Result<(Vec<f64>, Option<ComplexMatrix>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let scale = m.max_abs().max(1.0);
    let defect = m.hermitian_defect();
    if defect > 1e-12 * scale {
        return Err(Error::NotHermitian(defect));
    }
    if m.is_real() {
        let (e, u) = real_evd(m.re(), vectors)?;
        Ok((e, u.map(ComplexMatrix::from_real)))
    } else {
        complex_evd(m, vectors)
    }
}

pub fn diagonalize(h: &DenseOperator) -> Result<Spectrum> {
    let (mut energies, vectors) = hermitian_eigen(&h.matrix, true)?;
    let mut vectors = vectors.expect("vectors requested");
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::NoConvergence);
    }
    if energies.windows(2).any(|w| w[0] > w[1]) {
        // The solver sorts already; this only guards against a future change.
        let mut order: Vec<usize> = (0..energies.len()).collect();
        order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
        let n = energies.len();
        let v = &vectors;
        let re = Mat::from_fn(n, n, |i, j| v.re()[(i, order[j])]);
        let im = v.im().map(|im| Mat::from_fn(n, n, |i, j| im[(i, order[j])]));
        energies = order.iter().map(|&k| energies[k]).collect();
        vectors = ComplexMatrix::from_parts(re, im);
    }
    Ok(Spectrum { energies, vectors })
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `‖H V − V diag(E)‖∞` (entrywise max).
    pub fn residual(&self, h: &DenseOperator) -> f64 {
        let hv = h.matrix.matmul(&self.vectors);
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                worst = worst.max((hv.get(i, j) - self.vectors.get(i, j) * self.energies[j]).norm());
            }
        }
        worst
    }

    /// `‖V†V − I‖∞`
    pub fn orthonormality_defect(&self) -> f64 {
        self.vectors
            .adjoint_matmul(&self.vectors)
            .max_abs_diff(&ComplexMatrix::identity(self.dim()))
    }

    /// `‖V diag(E) V† − H‖∞`
    pub fn reconstruction_error(&self, h: &DenseOperator) -> f64 {
        let n = self.dim();
        let v = &self.vectors;
        let scaled_re = Mat::from_fn(n, n, |i, j| v.re()[(i, j)] * self.energies[j]);
        let scaled_im = v.im().map(|im| Mat::from_fn(n, n, |i, j| im[(i, j)] * self.energies[j]));
        let scaled = ComplexMatrix::from_parts(scaled_re, scaled_im);
        scaled.matmul(&v.adjoint()).max_abs_diff(&h.matrix)
    }

    /// Checks the stored invariants against the operator that produced them.
    pub fn verify(&self, h: &DenseOperator) -> Result<()> {
        let scale = h.matrix.max_abs().max(f64::MIN_POSITIVE);
        let res = self.residual(h);
        if res > 1e-9 * scale {
            return Err(Error::invariant("spectrum.residual", format!("{res:e}")));
        }
        let orth = self.orthonormality_defect();
        if orth > 1e-10 {
            return Err(Error::invariant("spectrum.orthonormality", format!("{orth:e}")));
        }
        if self.energies.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invariant("spectrum.sorted", "energies not ascending"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub tolerance: f64,
    /// Adjacent energy pairs closer than the tolerance.
    pub energy_collisions: usize,
    pub min_energy_spacing: f64,
    /// Number of nonzero gaps `E_j − E_k`, both signs counted.
    pub nonzero_gaps: usize,
    /// Distinct nonzero gap values after clustering, both signs counted.
    pub distinct_gap_values: usize,
    pub max_gap_multiplicity: usize,
    pub gaps_nondegenerate: bool,
}

impl DegeneracyReport {
    pub fn energies_nondegenerate(&self) -> bool {
        self.energy_collisions == 0
    }
}

/// Counts energy collisions and clusters the positive gaps `E_j − E_k`
/// (`j > k`) by single linkage at `tol`; negative gaps mirror them.
pub fn audit_degeneracies(energies: &[f64], tol: f64) -> Result<DegeneracyReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spacings = sorted.windows(2).map(|w| w[1] - w[0]);
    let energy_collisions = spacings.clone().filter(|&s| s < tol).count();
    let min_energy_spacing = spacings.fold(f64::INFINITY, f64::min);

    let n = sorted.len();
    let mut gaps = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for j in 0..n {
        for k in 0..j {
            let g = sorted[j] - sorted[k];
            if g >= tol {
                gaps.push(g);
            }
        }
    }
    gaps.sort_unstable_by(f64::total_cmp);
    let (mut clusters, mut max_mult, mut run) = (0usize, 0usize, 0usize);
    for i in 0..gaps.len() {
        if i == 0 || gaps[i] - gaps[i - 1] > tol {
            clusters += 1;
            run = 0;
        }
        run += 1;
        max_mult = max_mult.max(run);
    }
    Ok(DegeneracyReport {
        tolerance: tol,
        energy_collisions,
        min_energy_spacing,
        nonzero_gaps: 2 * gaps.len(),
        distinct_gap_values: 2 * clusters,
        max_gap_multiplicity: max_mult.max(1),
        gaps_nondegenerate: energy_collisions == 0 && max_mult <= 1,
    })
}

/// Matrix elements `A_jk = ⟨E_j|A|E_k⟩`.
#[derive(Clone, Debug)]
pub struct EigenbasisOperator {
    pub matrix: ComplexMatrix,
}

impl EigenbasisOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.matrix.get(j, k)
    }

    /// Real diagonal `A_kk`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diag_re()
    }

    pub fn abs_sq(&self) -> Mat<f64> {
        self.matrix.abs_sq()
    }

    /// Largest |eigenvalue|, i.e. the operator norm of a Hermitian matrix.
    pub fn operator_norm(&self) -> Result<f64> {
        let (e, _) = hermitian_eigen(&self.matrix, false)?;
        Ok(e.iter().fold(0.0f64, |m, x| m.max(x.abs())))
    }
}

/// `V† A V`
pub fn to_eigenbasis(a: &DenseOperator, s: &Spectrum) -> Result<EigenbasisOperator> {
    if a.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: a.dim(),
        });
    }
    let av = a.matrix.matmul(&s.vectors);
    let mut m = s.vectors.adjoint_matmul(&av);
    if a.hermitian {
        symmetrize(&mut m);
    }
    Ok(EigenbasisOperator { matrix: m })
}

/// Replaces `M` by `(M + M†)/2`, removing rounding-level anti-Hermitian parts.
fn symmetrize(m: &mut ComplexMatrix) {
    let n = m.nrows();
    let re = m.re_mut();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (re[(i, j)] + re[(j, i)]);
            re[(i, j)] = avg;
            re[(j, i)] = avg;
        }
    }
    if m.im().is_some() {
        let im = m.im_mut();
        for j in 0..n {
            im[(j, j)] = 0.0;
            for i in 0..j {
                let avg = 0.5 * (im[(i, j)] - im[(j, i)]);
                im[(i, j)] = avg;
                im[(j, i)] = -avg;
            }
        }
    }
}

/// Diagonal ensemble `ρ_jj` over a spectrum; thermal when `beta` is set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThermalEnsemble {
    pub beta: Option<f64>,
    pub weights: Vec<f64>,
    pub log_z: f64,
    pub purity: f64,
    pub energies: Vec<f64>,
}

/// Gibbs weights `e^{−β(E_j − E_0)} / Σ_k e^{−β(E_k − E_0)}`.
pub fn thermal_ensemble(s: &Spectrum, beta: f64) -> Result<ThermalEnsemble> {
    thermal_weights(&s.energies, beta)
}

pub fn thermal_weights(energies: &[f64], beta: f64) -> Result<ThermalEnsemble> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidBeta(beta));
    }
    if energies.is_empty() {
        return Err(Error::Empty("energies"));
    }
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = energies.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
    let z = compensated_sum(raw.iter().copied());
    let weights: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let purity = compensated_sum(weights.iter().map(|w| w * w));
    Ok(ThermalEnsemble {
        beta: Some(beta),
        weights,
        log_z: z.ln() - beta * e0,
        purity,
        energies: energies.to_vec(),
    })
}

impl ThermalEnsemble {
    /// Arbitrary diagonal ensemble; weights are normalized here.
    pub fn from_weights(energies: &[f64], weights: &[f64]) -> Result<Self> {
        if energies.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: energies.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let z = compensated_sum(weights.iter().copied());
        if !(z > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / z).collect();
        let purity = compensated_sum(weights.iter().map(|w| w * w));
        Ok(Self {
            beta: None,
            weights,
            log_z: f64::NAN,
            purity,
            energies: energies.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_thermal(&self) -> bool {
        self.beta.is_some()
    }

    /// `tr(ρ A) = Σ_k ρ_kk A_kk`
    pub fn expectation(&self, a: &EigenbasisOperator) -> f64 {
        compensated_sum(self.weights.iter().zip(a.diagonal()).map(|(r, x)| r * x))
    }

    pub fn check_dim(&self, a: &EigenbasisOperator) -> Result<()> {
        if a.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: a.dim(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinchain::{build_hamiltonian, build_pauli_string, default_observable, SpinChainSpec};

    fn op(m: ComplexMatrix) -> DenseOperator {
        DenseOperator::from_matrix(m).unwrap()
    }

    fn diag_op(d: &[f64]) -> DenseOperator {
        let n = d.len();
        op(ComplexMatrix::from_real(Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 })))
    }

    #[test]
    fn diagonal_input_sorts_with_permutation_vectors() {
        let s = diagonalize(&diag_op(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(s.energies, vec![1.0, 2.0, 3.0]);
        for (j, &row) in [1usize, 2, 0].iter().enumerate() {
            assert!((s.vectors.get(row, j).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pauli_x_single_spin() {
        let x = build_pauli_string(&"X0".parse().unwrap(), 1).unwrap();
        let s = diagonalize(&x).unwrap();
        assert!((s.energies[0] + 1.0).abs() < 1e-14 && (s.energies[1] - 1.0).abs() < 1e-14);
        let v0 = (s.vectors.get(0, 0), s.vectors.get(1, 0));
        assert!((v0.0 + v0.1).norm() < 1e-14);
        assert!((v0.0.norm() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn two_site_transverse_ising_matches_closed_form() {
        // H = Z0 Z1 + X0 + X1. The odd-parity states |01>−|10> and the
        // combination |00>−|11> give ±1 exactly; the even block
        // {(|01>+|10>)/√2, (|00>+|11>)/√2} is [[-1, 2], [2, 1]] with roots ±√5.
        let h = build_hamiltonian(&SpinChainSpec::new(2, 1.0, 0.0, 1.0, 0.0)).unwrap();
        let s = diagonalize(&h).unwrap();
        let want = [-(5f64.sqrt()), -1.0, 1.0, 5f64.sqrt()];
        for (e, w) in s.energies.iter().zip(want) {
            assert!((e - w).abs() < 1e-10, "{e} vs {w}");
        }
        s.verify(&h).unwrap();
    }

    #[test]
    fn independent_spins_spectrum() {
        let h = build_hamiltonian(&SpinChainSpec::new(3, 1.0, 0.0, 0.0, 0.0)).unwrap();
        let s = diagonalize(&h).unwrap();
        let want = [-3.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 3.0];
        for (e, w) in s.energies.iter().zip(want) {
            assert!((e - w).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_hermitian_path() {
        // H = Y0 + 0.5 Z0 Z1 + X1 has imaginary entries.
        let y = build_pauli_string(&"Y0".parse().unwrap(), 2).unwrap().matrix;
        let zz = build_pauli_string(&"Z0 Z1".parse().unwrap(), 2).unwrap().matrix;
        let x = build_pauli_string(&"X1".parse().unwrap(), 2).unwrap().matrix;
        let m = ComplexMatrix::from_fn(4, 4, |i, j| y.get(i, j) + zz.get(i, j) * 0.5 + x.get(i, j));
        let h = op(m);
        assert!(!h.matrix.is_real() && h.hermitian);
        let s = diagonalize(&h).unwrap();
        s.verify(&h).unwrap();
        assert!(s.reconstruction_error(&h) < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_real(Mat::from_fn(2, 2, |i, j| (i + 2 * j) as f64));
        assert!(matches!(diagonalize(&op(m)), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn audit_arithmetic_progression() {
        let r = audit_degeneracies(&[0.0, 1.0, 2.0], 1e-8).unwrap();
        assert_eq!(r.nonzero_gaps, 6);
        assert_eq!(r.distinct_gap_values, 4);
        assert_eq!(r.max_gap_multiplicity, 2);
        assert!(!r.gaps_nondegenerate);
        let r = audit_degeneracies(&[0.0, 1.0, 2.5], 1e-8).unwrap();
        assert_eq!(r.distinct_gap_values, 6);
        assert!(r.gaps_nondegenerate);
    }

    #[test]
    fn integrable_gaps_more_degenerate() {
        let audit = |spec: SpinChainSpec| {
            let s = diagonalize(&build_hamiltonian(&spec).unwrap()).unwrap();
            audit_degeneracies(&s.energies, 1e-8).unwrap()
        };
        let eth = audit(SpinChainSpec::eth(6));
        let int = audit(SpinChainSpec::integrable(6));
        assert!(int.max_gap_multiplicity > eth.max_gap_multiplicity);
    }

    #[test]
    fn eigenbasis_transforms() {
        let spec = SpinChainSpec::eth(6);
        let h = build_hamiltonian(&spec).unwrap();
        let s = diagonalize(&h).unwrap();
        let id = to_eigenbasis(&op(ComplexMatrix::identity(64)), &s).unwrap();
        assert!(id.matrix.max_abs_diff(&ComplexMatrix::identity(64)) < 1e-12);
        let he = to_eigenbasis(&h, &s).unwrap();
        let e = ComplexMatrix::from_real(Mat::from_fn(64, 64, |i, j| if i == j { s.energies[i] } else { 0.0 }));
        assert!(he.matrix.max_abs_diff(&e) < 1e-9);

        let a = default_observable(&spec).unwrap();
        let ae = to_eigenbasis(&a, &s).unwrap();
        let sq = ae.abs_sq();
        for j in 0..64 {
            let row: f64 = (0..64).map(|k| sq[(j, k)]).sum();
            assert!((row - 1.0).abs() < 1e-9);
        }
        assert!((ae.matrix.frobenius_norm() - a.matrix.frobenius_norm()).abs() < 1e-9);
        assert!(ae.matrix.hermitian_defect() < 1e-10);
        assert!((ae.operator_norm().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn thermal_examples() {
        let flat = thermal_weights(&[0.0; 8], 0.0).unwrap();
        assert!(flat.weights.iter().all(|&w| (w - 0.125).abs() < 1e-15));
        assert!((flat.purity - 0.125).abs() < 1e-15);

        let e = std::f64::consts::E;
        let z = diagonalize(&build_pauli_string(&"Z0".parse().unwrap(), 1).unwrap()).unwrap();
        let ens = thermal_ensemble(&z, 1.0).unwrap();
        assert!((ens.weights[0] - e / (e + 1.0 / e)).abs() < 1e-15);
        assert!((ens.weights[1] - (1.0 / e) / (e + 1.0 / e)).abs() < 1e-15);
        assert!((ens.log_z - (e + 1.0 / e).ln()).abs() < 1e-14);

        let cold = thermal_weights(&[0.0, 1.0, 2.0], 50.0).unwrap();
        assert!(cold.purity > 1.0 - 1e-15 && cold.weights[0] > 1.0 - 1e-15);
        assert!(matches!(thermal_weights(&[0.0], -1.0), Err(Error::InvalidBeta(_))));
        assert!(matches!(thermal_weights(&[0.0], f64::NAN), Err(Error::InvalidBeta(_))));
    }
}
