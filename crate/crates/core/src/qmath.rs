//! Dense complex linear algebra for one- and two-qubit operators.
//!
//! Basis ordering is shared by every module: |H⟩ = (1, 0), |V⟩ = (0, 1), and
//! two-qubit kets are ordered qubit-A-major, |HH⟩, |HV⟩, |VH⟩, |VV⟩.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Hermiticity tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues in `[-EIGEN_FLOOR, 0)` are treated as numerical noise and clamped.
pub const EIGEN_FLOOR: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Build a square matrix from row-major real entries.
pub fn real_matrix(n: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(n, n, entries.iter().map(|&x| c(x, 0.0)))
}

/// The single-qubit Pauli operators in their fixed basis order I, X, Y, Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn matrix(self) -> CMatrix {
        let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
        let e = match self {
            Pauli::I => [l, o, o, l],
            Pauli::X => [o, l, l, o],
            Pauli::Y => [o, -i, i, o],
            Pauli::Z => [l, o, o, -l],
        };
        CMatrix::from_row_slice(2, 2, &e)
    }
}

/// `[I, X, Y, Z]` as matrices.
pub fn pauli_basis() -> [CMatrix; 4] {
    Pauli::ALL.map(Pauli::matrix)
}

/// Kronecker product, row-of-`a` major.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().sum()
}

/// Largest entry-wise deviation from Hermiticity.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn require_square(m: &CMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        })
    }
}

fn require_hermitian(m: &CMatrix) -> Result<()> {
    require_square(m)?;
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let deviation = hermiticity_deviation(m);
    if deviation > 1e-10 * scale {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Columns of the returned matrix are the corresponding orthonormal
/// eigenvectors.
pub fn eigh(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    require_hermitian(m)?;
    let eig = hermitian_part(m).symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Ok((values, vectors))
}

pub fn eigvalsh(m: &CMatrix) -> Result<Vec<f64>> {
    eigh(m).map(|(v, _)| v)
}

/// Rebuild `V f(Λ) V†` from an eigendecomposition.
fn spectral_apply(values: &[f64], vectors: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = values.len();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        let w = f(lambda);
        if w == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (v * v.adjoint()).scale(w);
    }
    out
}

/// Hermitian PSD square root.
///
/// Eigenvalues in `[-1e-10, 0)` are clamped to zero; anything more negative
/// is rejected as an invalid (non-PSD) input.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let (values, vectors) = eigh(m)?;
    if let Some(&min) = values.first() {
        if min < -EIGEN_FLOOR {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
    }
    Ok(spectral_apply(&values, &vectors, |x| x.max(0.0).sqrt()))
}

/// Relative cutoff below which eigenvalues are treated as rounding noise in
/// [`psd_sqrt_truncated`].
pub const SPECTRAL_CUTOFF: f64 = 1e-13;

/// PSD square root that also drops eigenvalues below `rel_tol · λ_max`.
///
/// Square roots amplify rounding noise on a zero eigenvalue from ~1e-17 to
/// ~1e-9; truncating keeps rank-deficient inputs exactly rank-deficient.
pub fn psd_sqrt_truncated(m: &CMatrix, rel_tol: f64) -> Result<CMatrix> {
    let (values, vectors) = eigh(m)?;
    if let Some(&min) = values.first() {
        if min < -EIGEN_FLOOR {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
    }
    let cutoff = rel_tol * values.last().copied().unwrap_or(0.0).max(0.0);
    Ok(spectral_apply(&values, &vectors, |x| {
        if x > cutoff {
            x.sqrt()
        } else {
            0.0
        }
    }))
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues set to zero).
pub fn psd_projection(m: &CMatrix) -> Result<CMatrix> {
    let (values, vectors) = eigh(m)?;
    Ok(spectral_apply(&values, &vectors, |x| x.max(0.0)))
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.sum()
}

pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Which subsystem of a two-qubit operator is traced out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

/// Partial trace of a 4×4 operator over one qubit.
pub fn partial_trace_matrix(m: &CMatrix, traced: Subsystem) -> Result<CMatrix> {
    if m.shape() != (4, 4) {
        return Err(Error::DimensionMismatch {
            expected: "4x4".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let idx = |a: usize, b: usize| 2 * a + b;
    Ok(CMatrix::from_fn(2, 2, |i, j| match traced {
        Subsystem::B => (0..2).map(|k| m[(idx(i, k), idx(j, k))]).sum(),
        Subsystem::A => (0..2).map(|k| m[(idx(k, i), idx(k, j))]).sum(),
    }))
}

/// Realignment `R[(a a'), (b b')] = m[(a b), (a' b')]` of a two-qubit operator.
///
/// Its singular values are the operator-Schmidt coefficients of `m`; all four
/// are nonzero exactly when `m` is faithful for ancilla-assisted tomography.
pub fn realign(m: &CMatrix) -> Result<CMatrix> {
    if m.shape() != (4, 4) {
        return Err(Error::DimensionMismatch {
            expected: "4x4".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(CMatrix::from_fn(4, 4, |row, col| {
        let (a, ap) = (row / 2, row % 2);
        let (b, bp) = (col / 2, col % 2);
        m[(2 * a + b, 2 * ap + bp)]
    }))
}

/// Operator-Schmidt coefficients of a two-qubit operator, descending.
pub fn operator_schmidt_coefficients(m: &CMatrix) -> Result<Vec<f64>> {
    let r = realign(m)?;
    let mut s: Vec<f64> = r
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// A validated density matrix on one or two qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validate and wrap `m`. The stored matrix is exactly Hermitian.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !(m.shape() == (2, 2) || m.shape() == (4, 4)) {
            return Err(Error::DimensionMismatch {
                expected: "2x2 or 4x4".into(),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        let deviation = hermiticity_deviation(&m);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let matrix = hermitian_part(&m);
        let tr = trace(&matrix).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidTrace { trace: tr });
        }
        let min = eigvalsh(&matrix)?[0];
        if min < -EIGEN_FLOOR {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
        Ok(Self { matrix })
    }

    /// Symmetrise and renormalise a numerically computed state before
    /// validating it.
    pub fn from_unnormalized(m: CMatrix) -> Result<Self> {
        let h = hermitian_part(&m);
        let tr = trace(&h).re;
        if !(tr > 0.0) {
            return Err(Error::InvalidTrace { trace: tr });
        }
        Self::new(h.unscale(tr))
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalised) ket.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero ket".into()));
        }
        let v = v.unscale(norm);
        Self::new(&v * v.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::new(identity(dim).unscale(dim as f64))
    }

    /// (|HH⟩ + |VV⟩)/√2
    pub fn phi_plus() -> Self {
        Self::pure(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap()
    }

    /// (|HV⟩ + |VH⟩)/√2
    pub fn psi_plus() -> Self {
        Self::pure(&[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        if self.dim() != 2 || other.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: "two single-qubit states".into(),
                found: format!("dims {} and {}", self.dim(), other.dim()),
            });
        }
        DensityMatrix::new(tensor(&self.matrix, &other.matrix))
    }

    /// Expectation value `Tr[op ρ]`.
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        (op * &self.matrix).trace()
    }
}

/// Reduced state after tracing out `traced`.
pub fn partial_trace(rho: &DensityMatrix, traced: Subsystem) -> Result<DensityMatrix> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: "two-qubit state".into(),
            found: format!("dim {}", rho.dim()),
        });
    }
    DensityMatrix::from_unnormalized(partial_trace_matrix(rho.matrix(), traced)?)
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            c(1.0, 0.0)
        };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// Random density matrix `G G† / Tr` with `G` an `n × rank` Ginibre matrix.
pub fn random_density<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let g = CMatrix::from_fn(n, rank.max(1), |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    DensityMatrix::from_unnormalized(&g * g.adjoint()).expect("Ginibre state is valid")
}

/// Random complex matrix with standard normal entries.
pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        a.shape() == b.shape() && frobenius_distance(a, b) < tol
    }

    fn ket(bits: &[f64]) -> Vec<C64> {
        bits.iter().map(|&x| c(x, 0.0)).collect()
    }

    #[test]
    fn tensor_identity_and_blocks() {
        assert_eq!(tensor(&identity(2), &identity(2)), identity(4));

        let xi = tensor(&Pauli::X.matrix(), &identity(2));
        let expected = real_matrix(
            4,
            &[
                0., 0., 1., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 1., 0., 0.,
            ],
        );
        assert_eq!(xi, expected);

        // Z ⊗ X = [[X, 0], [0, -X]]
        let zx = tensor(&Pauli::Z.matrix(), &Pauli::X.matrix());
        let expected = real_matrix(
            4,
            &[
                0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 0., -1., 0., 0., -1., 0.,
            ],
        );
        assert_eq!(zx, expected);
    }

    #[test]
    fn pauli_basis_is_orthogonal_and_unitary() {
        let basis = pauli_basis();
        for (j, ej) in basis.iter().enumerate() {
            assert!(close(&(ej.adjoint() * ej), &identity(2), 1e-15));
            for (k, ek) in basis.iter().enumerate() {
                let ip = trace(&(ej.adjoint() * ek));
                let expected = if j == k { 2.0 } else { 0.0 };
                assert_abs_diff_eq!(ip.re, expected, epsilon = 1e-15);
                assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_examples() {
        let phi = DensityMatrix::phi_plus();
        let reduced = partial_trace(&phi, Subsystem::B).unwrap();
        assert!(close(reduced.matrix(), &identity(2).unscale(2.0), 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ra = random_density(2, 2, &mut rng);
        let rb = random_density(2, 2, &mut rng);
        let prod = ra.tensor(&rb).unwrap();
        assert!(close(
            partial_trace(&prod, Subsystem::A).unwrap().matrix(),
            rb.matrix(),
            1e-14
        ));
        assert!(close(
            partial_trace(&prod, Subsystem::B).unwrap().matrix(),
            ra.matrix(),
            1e-14
        ));

        // ½(|HH⟩⟨HH| + |HV⟩⟨HV|): the two 2×2 diagonal blocks are ½I and 0.
        let hh = DensityMatrix::pure(&ket(&[1., 0., 0., 0.])).unwrap();
        let hv = DensityMatrix::pure(&ket(&[0., 1., 0., 0.])).unwrap();
        let mix = DensityMatrix::new((hh.matrix() + hv.matrix()).scale(0.5)).unwrap();
        let h = DensityMatrix::pure(&ket(&[1., 0.])).unwrap();
        assert!(close(
            partial_trace(&mix, Subsystem::B).unwrap().matrix(),
            h.matrix(),
            1e-15
        ));
    }

    #[test]
    fn partial_trace_rejects_single_qubit() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(matches!(
            partial_trace(&rho, Subsystem::A),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn psd_sqrt_examples() {
        assert!(close(&psd_sqrt(&identity(2)).unwrap(), &identity(2), 1e-14));
        let d = real_matrix(2, &[4., 0., 0., 9.]);
        assert!(close(
            &psd_sqrt(&d).unwrap(),
            &real_matrix(2, &[2., 0., 0., 3.]),
            1e-13
        ));
        // 2 · ¼[[1,1],[1,1]] is the projector onto (|H⟩+|V⟩)/√2, its own root.
        let m = real_matrix(2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(close(&psd_sqrt(&m).unwrap(), &m, 1e-13));
    }

    #[test]
    fn psd_sqrt_errors() {
        let not_herm = real_matrix(2, &[1., 1., 0., 1.]);
        assert!(matches!(
            psd_sqrt(&not_herm),
            Err(Error::NotHermitian { .. })
        ));
        let negative = real_matrix(2, &[1., 0., 0., -1e-6]);
        assert!(matches!(
            psd_sqrt(&negative),
            Err(Error::NotPositive { .. })
        ));
        let tiny = real_matrix(2, &[1., 0., 0., -1e-12]);
        let root = psd_sqrt(&tiny).unwrap();
        assert_abs_diff_eq!(root[(1, 1)].re, 0.0);
    }

    #[test]
    fn trace_norm_examples() {
        assert_abs_diff_eq!(trace_norm(&Pauli::Z.matrix()), 2.0, epsilon = 1e-14);
        assert_eq!(trace_norm(&CMatrix::zeros(3, 3)), 0.0);
        let h = DensityMatrix::pure(&ket(&[1., 0.])).unwrap();
        let v = DensityMatrix::pure(&ket(&[0., 1.])).unwrap();
        assert_abs_diff_eq!(
            0.5 * trace_norm(&(h.matrix() - v.matrix())),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn density_matrix_validation() {
        assert!(matches!(
            DensityMatrix::new(identity(2)),
            Err(Error::InvalidTrace { .. })
        ));
        assert!(matches!(
            DensityMatrix::new(identity(3).unscale(3.0)),
            Err(Error::DimensionMismatch { .. })
        ));
        let neg = real_matrix(2, &[1.5, 0., 0., -0.5]);
        assert!(matches!(
            DensityMatrix::new(neg),
            Err(Error::NotPositive { .. })
        ));
        let nh = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.), c(0.1, 0.), c(0.2, 0.), c(0.5, 0.)]);
        assert!(matches!(
            DensityMatrix::new(nh),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn schmidt_coefficients_detect_product_states() {
        let s = operator_schmidt_coefficients(DensityMatrix::phi_plus().matrix()).unwrap();
        for x in s {
            assert_abs_diff_eq!(x, 0.5, epsilon = 1e-14);
        }
        let hh = DensityMatrix::pure(&ket(&[1., 0., 0., 0.])).unwrap();
        let s = operator_schmidt_coefficients(hh.matrix()).unwrap();
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-14);
        assert!(s[3] < 1e-14);
    }

    fn arb_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
        proptest::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |v| {
            CMatrix::from_fn(n, n, |i, j| c(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]))
        })
    }

    proptest! {
        #[test]
        fn tensor_is_associative(a in arb_matrix(2), b in arb_matrix(2), d in arb_matrix(2)) {
            let left = tensor(&tensor(&a, &b), &d);
            let right = tensor(&a, &tensor(&b, &d));
            prop_assert!(close(&left, &right, 1e-12));
        }

        #[test]
        fn tensor_is_bilinear(a in arb_matrix(2), a2 in arb_matrix(2), b in arb_matrix(2),
                              s in -2.0f64..2.0, t in -2.0f64..2.0) {
            let z = c(s, t);
            let lhs = tensor(&(&a * z + &a2), &b);
            let rhs = tensor(&a, &b) * z + tensor(&a2, &b);
            prop_assert!(close(&lhs, &rhs, 1e-12));
            let lhs = tensor(&b, &(&a * z + &a2));
            let rhs = tensor(&b, &a) * z + tensor(&b, &a2);
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }

        #[test]
        fn psd_sqrt_squares_back(g in arb_matrix(4)) {
            let m = &g * g.adjoint();
            let r = psd_sqrt(&m).unwrap();
            prop_assert!(close(&(&r * &r), &m, 1e-10));
            prop_assert!(hermiticity_deviation(&r) < 1e-12);
        }

        #[test]
        fn trace_norm_is_a_norm(a in arb_matrix(4), b in arb_matrix(4), s in -3.0f64..3.0, t in -3.0f64..3.0) {
            let na = trace_norm(&a);
            let nb = trace_norm(&b);
            prop_assert!(trace_norm(&(&a + &b)) <= na + nb + 1e-12);
            let z = c(s, t);
            prop_assert!((trace_norm(&(&a * z)) - z.norm() * na).abs() < 1e-10 * (1.0 + na));
        }

        #[test]
        fn partial_trace_of_product(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ra = random_density(2, 2, &mut rng);
            let rb = random_density(2, 1 + (seed % 2) as usize, &mut rng);
            let prod = ra.tensor(&rb).unwrap();
            let reduced = partial_trace_matrix(prod.matrix(), Subsystem::A).unwrap();
            prop_assert!(close(&reduced, rb.matrix(), 1e-14));
        }
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=4 {
            let u = random_unitary(n, &mut rng);
            assert!(close(&(u.adjoint() * &u), &identity(n), 1e-12));
        }
    }
}
