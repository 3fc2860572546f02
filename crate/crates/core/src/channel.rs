//! The two-parameter damping channel family and generic Kraus/χ tooling.
//!
//! A channel is carried either as a [`KrausSet`] or as a [`ProcessMatrix`]
//! (χ in the Pauli basis I, X, Y, Z). With the unnormalised Pauli basis a
//! trace-preserving qubit channel has `Tr χ = 1`, so unit trace is both the
//! state-like normalisation used by the fidelity and the trace-preserving one.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::parallel::{map_indexed, stream_rng, Exec};
use crate::qmath::{
    c, eigh, eigvalsh, hermitian_part, hermiticity_deviation, identity, pauli_basis,
    random_unitary, spectral_norm, tensor, trace, CMatrix, DensityMatrix, C64,
};

const DOMAIN_SLACK: f64 = 1e-12;
pub const COMPLETENESS_TOL: f64 = 1e-10;
pub const PROCESS_TOL: f64 = 1e-8;

/// Damping angles `(α, β)` with `0 ≤ α ≤ β ≤ π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingParams {
    alpha: f64,
    beta: f64,
}

impl DampingParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let ok = alpha.is_finite()
            && beta.is_finite()
            && alpha >= -DOMAIN_SLACK
            && alpha <= beta + DOMAIN_SLACK
            && beta <= FRAC_PI_2 + DOMAIN_SLACK;
        if !ok {
            return Err(Error::ParamsOutOfDomain { alpha, beta });
        }
        let beta = beta.clamp(0.0, FRAC_PI_2);
        let alpha = alpha.clamp(0.0, beta);
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Optimal success probability `1 / (cos²α + sin²β)`.
    pub fn optimal_success_probability(&self) -> f64 {
        1.0 / (self.alpha.cos().powi(2) + self.beta.sin().powi(2))
    }

    /// Switching probabilities `(p_A0, p_A1)` that realise the optimum.
    pub fn kraus_probabilities(&self) -> (f64, f64) {
        let a0 = self.alpha.cos().powi(2);
        let a1 = self.beta.sin().powi(2);
        (a0 / (a0 + a1), a1 / (a0 + a1))
    }

    /// Tangle of `(E ⊗ I)(|Φ⁺⟩⟨Φ⁺|)`, which is `cos²(α + β)`.
    pub fn ideal_tangle(&self) -> f64 {
        (self.alpha + self.beta).cos().powi(2)
    }
}

/// The three one-parameter slices studied along `β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingCase {
    /// `α = 0`
    AmplitudeDamping,
    /// `α = β`
    Bitflip,
    /// `α = ⅔β`
    Intermediate,
}

impl DampingCase {
    pub const ALL: [DampingCase; 3] = [
        DampingCase::AmplitudeDamping,
        DampingCase::Bitflip,
        DampingCase::Intermediate,
    ];

    pub fn alpha_for(self, beta: f64) -> f64 {
        match self {
            DampingCase::AmplitudeDamping => 0.0,
            DampingCase::Bitflip => beta,
            DampingCase::Intermediate => 2.0 * beta / 3.0,
        }
    }

    pub fn params(self, beta: f64) -> Result<DampingParams> {
        DampingParams::new(self.alpha_for(beta), beta)
    }

    pub fn name(self) -> &'static str {
        match self {
            DampingCase::AmplitudeDamping => "amplitude_damping",
            DampingCase::Bitflip => "bitflip",
            DampingCase::Intermediate => "intermediate",
        }
    }
}

impl std::str::FromStr for DampingCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "amplitude_damping" => Ok(DampingCase::AmplitudeDamping),
            "bitflip" => Ok(DampingCase::Bitflip),
            "intermediate" => Ok(DampingCase::Intermediate),
            other => Err(Error::InvalidArgument(format!("unknown case '{other}'"))),
        }
    }
}

impl std::fmt::Display for DampingCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An ordered, complete set of 2×2 Kraus operators.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    operators: Vec<CMatrix>,
}

impl KrausSet {
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        if operators.is_empty() || operators.len() > 4 {
            return Err(Error::KrausCount(operators.len()));
        }
        if let Some(bad) = operators.iter().find(|a| a.shape() != (2, 2)) {
            return Err(Error::DimensionMismatch {
                expected: "2x2 Kraus operators".into(),
                found: format!("{}x{}", bad.nrows(), bad.ncols()),
            });
        }
        let deviation = completeness_deviation(&operators);
        if deviation > COMPLETENESS_TOL {
            return Err(Error::IncompleteKraus { deviation });
        }
        Ok(Self { operators })
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// `B_j = Σ_i u[j, i] A_i`, padding with zero operators up to `u`'s size.
    pub fn remix(&self, u: &CMatrix) -> Result<KrausSet> {
        KrausSet::new(remix_operators(&self.operators, u))
    }
}

/// Largest entry of `|Σ A†A − I|`.
pub fn completeness_deviation(operators: &[CMatrix]) -> f64 {
    let sum = operators
        .iter()
        .fold(CMatrix::zeros(2, 2), |acc, a| acc + a.adjoint() * a);
    (sum - identity(2))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn remix_operators(operators: &[CMatrix], u: &CMatrix) -> Vec<CMatrix> {
    (0..u.nrows())
        .map(|j| {
            operators
                .iter()
                .enumerate()
                .fold(CMatrix::zeros(2, 2), |acc, (i, a)| acc + a * u[(j, i)])
        })
        .collect()
}

/// Kraus operators of the damping channel:
/// `A₀ = diag(cos α, cos β)`, `A₁ = [[0, sin β], [sin α, 0]]`.
pub fn damping_kraus(p: DampingParams) -> KrausSet {
    let (ca, cb, sa, sb) = (p.alpha.cos(), p.beta.cos(), p.alpha.sin(), p.beta.sin());
    let a0 = CMatrix::from_row_slice(2, 2, &[c(ca, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(cb, 0.0)]);
    let a1 = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(sb, 0.0), c(sa, 0.0), c(0.0, 0.0)]);
    KrausSet::new(vec![a0, a1]).expect("trigonometric identity keeps the set complete")
}

/// Where a single-qubit channel acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// One-qubit input.
    Single,
    /// Qubit A of a two-qubit input; B is untouched.
    AOnly,
}

/// `Σ_i K_i ρ K_i†` with each `K_i` lifted to `K_i ⊗ I` for 4×4 inputs.
pub fn apply_operators(operators: &[CMatrix], rho: &CMatrix) -> CMatrix {
    let lift = |k: &CMatrix| {
        if rho.nrows() == 4 {
            tensor(k, &identity(2))
        } else {
            k.clone()
        }
    };
    operators
        .iter()
        .map(lift)
        .fold(CMatrix::zeros(rho.nrows(), rho.ncols()), |acc, k| {
            acc + &k * rho * k.adjoint()
        })
}

pub fn apply_channel(k: &KrausSet, rho: &DensityMatrix, side: Side) -> Result<DensityMatrix> {
    let expected = match side {
        Side::Single => 2,
        Side::AOnly => 4,
    };
    if rho.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected: format!("dim {expected} state"),
            found: format!("dim {}", rho.dim()),
        });
    }
    DensityMatrix::new(hermitian_part(&apply_operators(
        k.operators(),
        rho.matrix(),
    )))
}

/// Largest singular value squared of a 2×2 matrix, closed form.
fn sigma_max_sq_2x2(m: &CMatrix) -> f64 {
    // largest eigenvalue of M†M = [[p, q], [q*, r]]
    let (a, b, c_, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let p = a.norm_sqr() + c_.norm_sqr();
    let r = b.norm_sqr() + d.norm_sqr();
    let q = a.conj() * b + c_.conj() * d;
    0.5 * (p + r) + (0.25 * (p - r).powi(2) + q.norm_sqr()).sqrt()
}

/// `Σ_i ‖A_i‖²_∞` for a list of 2×2 operators.
pub fn norm_budget(operators: &[CMatrix]) -> f64 {
    operators
        .iter()
        .map(|a| {
            if a.shape() == (2, 2) {
                sigma_max_sq_2x2(a)
            } else {
                spectral_norm(a).powi(2)
            }
        })
        .sum()
}

/// `(Σ_i ‖A_i‖²_∞)⁻¹` for this particular decomposition.
pub fn success_probability(k: &KrausSet) -> Result<f64> {
    let budget = norm_budget(k.operators());
    if budget <= 0.0 {
        return Err(Error::ZeroOperators);
    }
    Ok(1.0 / budget)
}

/// Multi-start search over unitary remixings of a Kraus set.
#[derive(Debug, Clone, Copy)]
pub struct RemixSearch {
    pub restarts: usize,
    /// Number of operators after remixing; defaults to the input size.
    pub rank: Option<usize>,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for RemixSearch {
    fn default() -> Self {
        Self {
            restarts: 32,
            rank: None,
            seed: 0x5EED_C4A5,
            exec: Exec::default(),
        }
    }
}

/// `exp(iH)` with `H` Hermitian built from `n²` reals: `n` diagonal entries
/// followed by real/imaginary pairs of the strict upper triangle.
pub fn unitary_from_params(n: usize, params: &[f64]) -> CMatrix {
    debug_assert_eq!(params.len(), n * n);
    let mut h = CMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = c(params[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            h[(i, j)] = c(params[k], params[k + 1]);
            h[(j, i)] = c(params[k], -params[k + 1]);
            k += 2;
        }
    }
    let (values, vectors) = eigh(&h).expect("constructed Hermitian");
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        values.iter().map(|&l| C64::from_polar(1.0, l)),
    ));
    &vectors * phases * vectors.adjoint()
}

/// Maximise the success probability over Kraus decompositions of the same
/// channel, using the default search settings.
pub fn optimal_success_probability(k: &KrausSet, restarts: usize) -> Result<(f64, KrausSet)> {
    optimal_success_probability_with(
        k,
        &RemixSearch {
            restarts,
            ..Default::default()
        },
    )
}

pub fn optimal_success_probability_with(
    k: &KrausSet,
    search: &RemixSearch,
) -> Result<(f64, KrausSet)> {
    let baseline = success_probability(k)?;
    let rank = search.rank.unwrap_or(k.len()).max(k.len());
    if rank > 4 {
        return Err(Error::KrausCount(rank));
    }
    let nparams = rank * rank;
    let ops = k.operators();
    let objective = |x: &[f64]| norm_budget(&remix_operators(ops, &unitary_from_params(rank, x)));
    let opts = NelderMeadOptions {
        max_iterations: 4000,
        ftol: 1e-14,
        xtol: 1e-10,
        initial_step: 0.3,
    };

    let restarts = search.restarts.max(1);
    let runs = map_indexed(search.exec, restarts, |r| {
        let x0: Vec<f64> = if r == 0 {
            vec![0.0; nparams]
        } else {
            let mut rng = stream_rng(search.seed, r as u64);
            (0..nparams)
                .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect()
        };
        // polish once from the first minimum to escape a collapsed simplex
        let first = nelder_mead(objective, &x0, &opts);

        nelder_mead(objective, &first.x, &opts)
    });
    let best = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one restart");

    let u = unitary_from_params(rank, &best.x);
    let remixed = k.remix(&u)?;
    let value = 1.0 / best.value;
    if value < baseline {
        // the identity start cannot end above its own value
        return Ok((baseline, k.clone()));
    }
    Ok((value, remixed))
}

/// Pauli-basis coefficients `c_m = Tr(E_m† A) / 2`.
pub fn pauli_coefficients(a: &CMatrix) -> [C64; 4] {
    let basis = pauli_basis();
    std::array::from_fn(|m| trace(&(basis[m].adjoint() * a)) * 0.5)
}

/// A 4×4 Hermitian PSD unit-trace process matrix over the Pauli basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix {
    chi: CMatrix,
}

impl ProcessMatrix {
    pub fn new(chi: CMatrix) -> Result<Self> {
        if chi.shape() != (4, 4) {
            return Err(Error::DimensionMismatch {
                expected: "4x4 process matrix".into(),
                found: format!("{}x{}", chi.nrows(), chi.ncols()),
            });
        }
        let deviation = hermiticity_deviation(&chi);
        if deviation > PROCESS_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let chi = hermitian_part(&chi);
        let tr = trace(&chi).re;
        if (tr - 1.0).abs() > PROCESS_TOL {
            return Err(Error::InvalidTrace { trace: tr });
        }
        let min = eigvalsh(&chi)?[0];
        if min < -PROCESS_TOL {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
        Ok(Self { chi })
    }

    /// Symmetrise and rescale to unit trace, then validate.
    pub fn from_unnormalized(chi: CMatrix) -> Result<Self> {
        let h = hermitian_part(&chi);
        let tr = trace(&h).re;
        if !(tr > 0.0) {
            return Err(Error::InvalidTrace { trace: tr });
        }
        Self::new(h.unscale(tr))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.chi
    }

    pub fn into_matrix(self) -> CMatrix {
        self.chi
    }

    /// `Σ_mn χ_mn E_m ρ E_n†`, lifted to `E ⊗ I` for two-qubit `ρ`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        apply_chi(&self.chi, rho)
    }

    /// `Σ_mn χ_mn E_n† E_m`, the identity for a trace-preserving process.
    pub fn tp_operator(&self) -> CMatrix {
        tp_operator(&self.chi)
    }
}

pub fn apply_chi(chi: &CMatrix, rho: &CMatrix) -> CMatrix {
    let basis = pauli_basis();
    let lifted: Vec<CMatrix> = if rho.nrows() == 4 {
        basis.iter().map(|e| tensor(e, &identity(2))).collect()
    } else {
        basis.to_vec()
    };
    let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
    for m in 0..4 {
        let left = &lifted[m] * rho;
        for n in 0..4 {
            let w = chi[(m, n)];
            if w.norm() == 0.0 {
                continue;
            }
            out += (&left * lifted[n].adjoint()) * w;
        }
    }
    out
}

pub fn tp_operator(chi: &CMatrix) -> CMatrix {
    let basis = pauli_basis();
    let mut out = CMatrix::zeros(2, 2);
    for m in 0..4 {
        for n in 0..4 {
            out += (basis[n].adjoint() * &basis[m]) * chi[(m, n)];
        }
    }
    out
}

/// χ of a Kraus set: `χ_mn = Σ_i c_im c̄_in`, normalised to unit trace.
pub fn chi_from_kraus(k: &KrausSet) -> ProcessMatrix {
    let mut chi = CMatrix::zeros(4, 4);
    for a in k.operators() {
        let coef = pauli_coefficients(a);
        for m in 0..4 {
            for n in 0..4 {
                chi[(m, n)] += coef[m] * coef[n].conj();
            }
        }
    }
    ProcessMatrix::from_unnormalized(chi).expect("Gram matrix is PSD")
}

/// `(E ⊗ I)(|Φ⁺⟩⟨Φ⁺|)`.
pub fn choi_state(k: &KrausSet) -> DensityMatrix {
    apply_channel(k, &DensityMatrix::phi_plus(), Side::AOnly).expect("dimensions fixed")
}

/// Columns are `(E_m ⊗ I)|Φ⁺⟩`, the four Bell states in Pauli order.
fn bell_frame() -> CMatrix {
    let phi = nalgebra::DVector::from_column_slice(&[
        c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c(std::f64::consts::FRAC_1_SQRT_2, 0.0),
    ]);
    let mut w = CMatrix::zeros(4, 4);
    for (m, e) in pauli_basis().iter().enumerate() {
        w.set_column(m, &(tensor(e, &identity(2)) * &phi));
    }
    w
}

/// Choi state from χ: `W χ W†` with `W` the Bell frame.
pub fn choi_from_chi(chi: &ProcessMatrix) -> Result<DensityMatrix> {
    let w = bell_frame();
    DensityMatrix::from_unnormalized(&w * chi.matrix() * w.adjoint())
}

/// Inverse of [`choi_from_chi`].
pub fn chi_from_choi(choi: &DensityMatrix) -> Result<ProcessMatrix> {
    let w = bell_frame();
    ProcessMatrix::from_unnormalized(w.adjoint() * choi.matrix() * &w)
}

/// Kraus set of a random channel with `rank` operators, taken from the blocks
/// of a Haar-random isometry.
pub fn random_kraus<R: Rng + ?Sized>(rank: usize, rng: &mut R) -> KrausSet {
    let rank = rank.clamp(1, 4);
    let u = random_unitary(2 * rank, rng);
    let ops = (0..rank)
        .map(|i| u.view((2 * i, 0), (2, 2)).into_owned())
        .collect();
    KrausSet::new(ops).expect("isometry blocks are complete")
}
