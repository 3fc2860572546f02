//! Two-qubit state tomography and ancilla-assisted process tomography.
//!
//! Both photons are measured in the six polarization eigenstates
//! `H, V, D, A, R, L`, giving 36 settings. Process tomography sends photon A
//! of a known (reconstructed) two-photon state through the channel and fits a
//! process matrix to the output counts by maximum likelihood.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::channel::ProcessMatrix;
use crate::error::{Error, Result};
use crate::optim::{bfgs, nelder_mead, BfgsOptions, Minimum, NelderMeadOptions, Termination};
use crate::parallel::stream_rng;
use crate::qmath::{
    c, hermitian_part, identity, operator_schmidt_coefficients, pauli_basis, psd_projection,
    tensor, trace, CMatrix, DensityMatrix, C64,
};

pub const SETTING_COUNT: usize = 36;
pub const DEFAULT_DURATION: f64 = 5.0;
/// Smallest operator-Schmidt coefficient for an input state to count as
/// faithful.
pub const FAITHFUL_TOL: f64 = 1e-6;
/// Floor on predicted probabilities in likelihood denominators.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Trace-preservation residual below which a reconstruction counts as
/// converged.
pub const TP_RESIDUAL_TOL: f64 = 1e-3;

/// Eigenstates of Z (H, V), X (D, A) and Y (R, L).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [
        Polarization::H,
        Polarization::V,
        Polarization::D,
        Polarization::A,
        Polarization::R,
        Polarization::L,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn ket(self) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Polarization::H => [c(1.0, 0.0), c(0.0, 0.0)],
            Polarization::V => [c(0.0, 0.0), c(1.0, 0.0)],
            Polarization::D => [c(h, 0.0), c(h, 0.0)],
            Polarization::A => [c(h, 0.0), c(-h, 0.0)],
            Polarization::R => [c(h, 0.0), c(0.0, h)],
            Polarization::L => [c(h, 0.0), c(0.0, -h)],
        }
    }

    pub fn projector(self) -> CMatrix {
        let v = DVector::from_column_slice(&self.ket());
        &v * v.adjoint()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
            Polarization::D => "D",
            Polarization::A => "A",
            Polarization::R => "R",
            Polarization::L => "L",
        }
    }
}

impl FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Polarization::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown polarization '{s}'")))
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub projector_a: Polarization,
    pub projector_b: Polarization,
}

impl MeasurementSetting {
    pub fn new(projector_a: Polarization, projector_b: Polarization) -> Self {
        Self {
            projector_a,
            projector_b,
        }
    }

    /// Position in the canonical order.
    pub fn index(&self) -> usize {
        6 * self.projector_a.index() + self.projector_b.index()
    }
}

/// All 36 settings, A-major over `H, V, D, A, R, L`.
pub fn enumerate_settings() -> Vec<MeasurementSetting> {
    Polarization::ALL
        .iter()
        .flat_map(|&a| {
            Polarization::ALL
                .iter()
                .map(move |&b| MeasurementSetting::new(a, b))
        })
        .collect()
}

/// `|ψ_A⟩⟨ψ_A| ⊗ |ψ_B⟩⟨ψ_B|`
pub fn projector(setting: MeasurementSetting) -> CMatrix {
    tensor(
        &setting.projector_a.projector(),
        &setting.projector_b.projector(),
    )
}

fn all_projectors() -> Vec<CMatrix> {
    enumerate_settings().into_iter().map(projector).collect()
}

/// Coincidences recorded in one setting.
///
/// Counts are whole numbers for sampled data; noiseless datasets carry the
/// exact (fractional) expectation values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: MeasurementSetting,
    pub count: f64,
    pub duration: f64,
}

fn probabilities(rho: &CMatrix, projectors: &[CMatrix]) -> Vec<f64> {
    projectors
        .iter()
        .map(|m| (m * rho).trace().re.max(0.0))
        .collect()
}

fn check_flux(flux: f64) -> Result<()> {
    if flux.is_finite() && flux > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "flux must be positive, got {flux}"
        )))
    }
}

fn require_two_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() == 4 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: "two-qubit state".into(),
            found: format!("dim {}", rho.dim()),
        })
    }
}

fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean)
        .expect("positive finite mean")
        .sample(rng)
}

/// Noiseless counts: `flux · Tr[M_i ρ]` for every setting.
pub fn expected_counts(rho: &DensityMatrix, flux: f64) -> Result<Vec<CountRecord>> {
    check_flux(flux)?;
    require_two_qubit(rho)?;
    let p = probabilities(rho.matrix(), &all_projectors());
    Ok(enumerate_settings()
        .into_iter()
        .zip(p)
        .map(|(setting, p)| CountRecord {
            setting,
            count: flux * p,
            duration: DEFAULT_DURATION,
        })
        .collect())
}

/// Poisson counts with mean `flux · Tr[M_i ρ]`.
pub fn simulate_counts(rho: &DensityMatrix, flux: f64, seed: u64) -> Result<Vec<CountRecord>> {
    let mut rng = stream_rng(seed, 0);
    Ok(expected_counts(rho, flux)?
        .into_iter()
        .map(|r| CountRecord {
            count: poisson_sample(r.count, &mut rng),
            ..r
        })
        .collect())
}

/// Fresh Poisson counts around each recorded count.
pub fn resample_counts<R: Rng + ?Sized>(records: &[CountRecord], rng: &mut R) -> Vec<CountRecord> {
    records
        .iter()
        .map(|r| CountRecord {
            count: poisson_sample(r.count, rng),
            ..*r
        })
        .collect()
}

/// Counts in canonical setting order; every setting must appear exactly once.
pub fn ordered_counts(records: &[CountRecord]) -> Result<Vec<f64>> {
    let mut out = vec![None; SETTING_COUNT];
    for r in records {
        if !(r.count.is_finite() && r.count >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "count for {}{} must be non-negative, got {}",
                r.setting.projector_a, r.setting.projector_b, r.count
            )));
        }
        let slot = &mut out[r.setting.index()];
        if slot.is_some() {
            return Err(Error::IncompleteSettings(format!(
                "setting {}{} appears twice",
                r.setting.projector_a, r.setting.projector_b
            )));
        }
        *slot = Some(r.count);
    }
    let missing = out.iter().filter(|s| s.is_none()).count();
    if missing > 0 {
        return Err(Error::IncompleteSettings(format!(
            "{missing} settings missing"
        )));
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

fn canonical_records(records: Vec<CountRecord>) -> Result<Vec<CountRecord>> {
    ordered_counts(&records)?;
    let mut records = records;
    records.sort_by_key(|r| r.setting.index());
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Input,
    Output,
}

impl Block {
    pub fn as_str(self) -> &'static str {
        match self {
            Block::Input => "input",
            Block::Output => "output",
        }
    }
}

/// Input-state and output-state tomography for one channel setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyDataset {
    input_counts: Vec<CountRecord>,
    output_counts: Vec<CountRecord>,
    flux: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRow {
    block: Block,
    #[serde(rename = "projector_A")]
    projector_a: Polarization,
    #[serde(rename = "projector_B")]
    projector_b: Polarization,
    count: f64,
    duration: f64,
}

impl TomographyDataset {
    pub fn new(input: Vec<CountRecord>, output: Vec<CountRecord>, flux: f64) -> Result<Self> {
        check_flux(flux)?;
        Ok(Self {
            input_counts: canonical_records(input)?,
            output_counts: canonical_records(output)?,
            flux,
        })
    }

    /// Simulated tomography of `rho_in` and `rho_out`. `seed = None` gives
    /// noiseless expectation counts.
    pub fn synthesize(
        rho_in: &DensityMatrix,
        rho_out: &DensityMatrix,
        flux: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        let (input, output) = match seed {
            Some(s) => (
                simulate_counts(rho_in, flux, crate::parallel::stream_seed(s, 0))?,
                simulate_counts(rho_out, flux, crate::parallel::stream_seed(s, 1))?,
            ),
            None => (
                expected_counts(rho_in, flux)?,
                expected_counts(rho_out, flux)?,
            ),
        };
        Self::new(input, output, flux)
    }

    pub fn input_counts(&self) -> &[CountRecord] {
        &self.input_counts
    }

    pub fn output_counts(&self) -> &[CountRecord] {
        &self.output_counts
    }

    pub fn flux(&self) -> f64 {
        self.flux
    }

    /// Both blocks resampled with Poisson noise around the recorded counts.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        Self {
            input_counts: resample_counts(&self.input_counts, rng),
            output_counts: resample_counts(&self.output_counts, rng),
            flux: self.flux,
        }
    }

    pub fn mean_output_count(&self) -> f64 {
        self.output_counts.iter().map(|r| r.count).sum::<f64>() / SETTING_COUNT as f64
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (block, records) in [
            (Block::Input, &self.input_counts),
            (Block::Output, &self.output_counts),
        ] {
            for r in records {
                out.serialize(DatasetRow {
                    block,
                    projector_a: r.setting.projector_a,
                    projector_b: r.setting.projector_b,
                    count: r.count,
                    duration: r.duration,
                })?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Parse a dataset table. The flux is estimated from the input block as
    /// total counts / 9 (each of the nine basis pairs sums to one photon).
    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut input = Vec::new();
        let mut output = Vec::new();
        for (line, row) in reader.deserialize::<DatasetRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                line: line + 2,
                message: e.to_string(),
            })?;
            let record = CountRecord {
                setting: MeasurementSetting::new(row.projector_a, row.projector_b),
                count: row.count,
                duration: row.duration,
            };
            match row.block {
                Block::Input => input.push(record),
                Block::Output => output.push(record),
            }
        }
        let total: f64 = input.iter().map(|r| r.count).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateCounts);
        }
        Self::new(input, output, total / 9.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

// Hermitian coordinates

/// Real coordinates of a Hermitian matrix: diagonal, then `(Re, Im)` of each
/// upper off-diagonal entry.
pub fn hermitian_coords(m: &CMatrix) -> DVector<f64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n * n);
    for i in 0..n {
        v.push(m[(i, i)].re);
    }
    for i in 0..n {
        for j in i + 1..n {
            v.push(m[(i, j)].re);
            v.push(m[(i, j)].im);
        }
    }
    DVector::from_vec(v)
}

/// Inverse of [`hermitian_coords`].
pub fn from_hermitian_coords(n: usize, x: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c(x[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            m[(i, j)] = c(x[k], x[k + 1]);
            m[(j, i)] = c(x[k], -x[k + 1]);
            k += 2;
        }
    }
    m
}

// Triangular factor parameterisation

/// `T` lower triangular from 16 reals: four real diagonal entries, then
/// `(Re, Im)` of the six sub-diagonal entries row by row.
fn lower_factor(t: &[f64]) -> CMatrix {
    let mut l = CMatrix::zeros(4, 4);
    for i in 0..4 {
        l[(i, i)] = c(t[i], 0.0);
    }
    let mut k = 4;
    for i in 1..4 {
        for j in 0..i {
            l[(i, j)] = c(t[k], t[k + 1]);
            k += 2;
        }
    }
    l
}

fn factor_params(l: &CMatrix) -> Vec<f64> {
    let mut t = Vec::with_capacity(16);
    for i in 0..4 {
        t.push(l[(i, i)].re);
    }
    for i in 1..4 {
        for j in 0..i {
            t.push(l[(i, j)].re);
            t.push(l[(i, j)].im);
        }
    }
    t
}

/// `T T†` for the factor encoded in `t`.
pub fn gram_from_params(t: &[f64]) -> CMatrix {
    let l = lower_factor(t);
    &l * l.adjoint()
}

/// Cholesky parameters of a PSD matrix, slightly mixed with the identity so
/// that the factor exists.
fn initial_factor(m: &CMatrix, mix: f64) -> Vec<f64> {
    let tr = trace(m).re.max(f64::MIN_POSITIVE);
    let shifted = hermitian_part(&(m.scale(1.0 - mix) + identity(4).scale(mix * tr / 4.0)));
    let chol = shifted
        .cholesky()
        .expect("mixing with the identity makes the matrix positive definite");
    factor_params(&chol.l())
}

fn pauli_two_qubit_linear_inversion(freq: &[f64], projectors: &[CMatrix]) -> CMatrix {
    // least squares over the 16 Hermitian coordinates
    let basis: Vec<CMatrix> = (0..16)
        .map(|r| {
            let mut x = [0.0; 16];
            x[r] = 1.0;
            from_hermitian_coords(4, &x)
        })
        .collect();
    let a = DMatrix::from_fn(projectors.len(), 16, |i, r| {
        (&projectors[i] * &basis[r]).trace().re
    });
    let b = DVector::from_column_slice(freq);
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .expect("SVD computed with both factors");
    from_hermitian_coords(4, x.as_slice())
}

fn poisson_deviance(n: &[f64], expected: impl Iterator<Item = f64>) -> f64 {
    n.iter()
        .zip(expected)
        .map(|(&ni, mu)| {
            let mu = mu.max(PROBABILITY_FLOOR);
            if ni > 0.0 {
                mu - ni + ni * (ni / mu).ln()
            } else {
                mu
            }
        })
        .sum()
}

/// Maximum-likelihood two-qubit state from 36 count records.
///
/// `ρ = T T† / Tr[T T†]` with `T` lower triangular. Since the 36 settings'
/// probabilities sum to 9 for any normalised state, the photon number is
/// profiled out as total counts / 9. The optimiser starts from the
/// PSD-projected linear inversion.
pub fn mle_state(counts: &[CountRecord]) -> Result<DensityMatrix> {
    let n = ordered_counts(counts)?;
    let total: f64 = n.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateCounts);
    }
    let photons = total / 9.0;
    let projectors = all_projectors();
    let freq: Vec<f64> = n.iter().map(|x| x / photons).collect();

    let linear = pauli_two_qubit_linear_inversion(&freq, &projectors);
    let mut start = psd_projection(&hermitian_part(&linear))?;
    if !(trace(&start).re > 1e-12) {
        start = identity(4);
    }
    let t0 = initial_factor(&start, 1e-3);

    // real-linear form of Tr[M_i ρ] over the Hermitian coordinates of ρ
    let weights: Vec<DVector<f64>> = projectors
        .iter()
        .map(|m| {
            // Tr[Mρ] = Σ_j M_jj ρ_jj + 2 Σ_{j<k} Re(M̄_jk ρ_jk)
            let mut w = hermitian_coords(m);
            for k in 4..16 {
                w[k] *= 2.0;
            }
            w
        })
        .collect();
    let objective = |t: &[f64]| {
        let g = gram_from_params(t);
        let tr = trace(&g).re;
        if !(tr > 0.0) {
            return f64::INFINITY;
        }
        let x = hermitian_coords(&g).unscale(tr);
        poisson_deviance(&n, weights.iter().map(|w| photons * w.dot(&x)))
    };
    let best = minimize(objective, &t0);
    DensityMatrix::from_unnormalized(gram_from_params(&best.x))
}

fn bfgs_options_for(_n: usize) -> BfgsOptions {
    BfgsOptions {
        ftol: 1e-14,
        fscale: 1e-12,
        ..Default::default()
    }
}

/// Quasi-Newton run, with a simplex polish when the gradient steps stall.
fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64]) -> Minimum {
    let first = bfgs(&f, x0, &bfgs_options_for(x0.len()));
    if first.termination != Termination::Stalled {
        return first;
    }
    let polish = nelder_mead(
        &f,
        &first.x,
        &NelderMeadOptions {
            max_iterations: 20_000,
            ftol: 1e-15,
            xtol: 1e-12,
            initial_step: 1e-3,
        },
    );
    let again = bfgs(&f, &polish.x, &bfgs_options_for(x0.len()));
    let mut best = [first, polish, again]
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .unwrap();
    best.termination = if best.termination == Termination::MaxIterations {
        Termination::MaxIterations
    } else {
        Termination::Stalled
    };
    best
}

// Process reconstruction

fn lifted_paulis() -> [CMatrix; 4] {
    pauli_basis().map(|e| tensor(&e, &identity(2)))
}

fn require_faithful(rho_in: &DensityMatrix) -> Result<()> {
    require_two_qubit(rho_in)?;
    let s = operator_schmidt_coefficients(rho_in.matrix())?;
    let smallest = s.last().copied().unwrap_or(0.0);
    if smallest <= FAITHFUL_TOL {
        return Err(Error::NonFaithfulInput { smallest });
    }
    Ok(())
}

/// `(χ ↦ Σ χ_mn (E_m ⊗ I) ρ_in (E_n ⊗ I)†)` as a 16×16 real matrix acting on
/// Hermitian coordinates.
fn process_map_matrix(rho_in: &CMatrix) -> DMatrix<f64> {
    let lifted = lifted_paulis();
    let mut a = DMatrix::zeros(16, 16);
    for r in 0..16 {
        let mut x = [0.0; 16];
        x[r] = 1.0;
        let chi = from_hermitian_coords(4, &x);
        let mut out = CMatrix::zeros(4, 4);
        for m in 0..4 {
            for n in 0..4 {
                if chi[(m, n)] != c(0.0, 0.0) {
                    out += (&lifted[m] * rho_in * lifted[n].adjoint()) * chi[(m, n)];
                }
            }
        }
        a.set_column(r, &hermitian_coords(&out));
    }
    a
}

/// Exact χ solving `ρ_out = Σ χ_mn (E_m ⊗ I) ρ_in (E_n ⊗ I)†`.
///
/// The result is Hermitian and trace-scaled like the data, but not
/// necessarily PSD, so it is returned as a raw matrix.
pub fn linear_invert_process(rho_in: &DensityMatrix, rho_out: &DensityMatrix) -> Result<CMatrix> {
    require_faithful(rho_in)?;
    require_two_qubit(rho_out)?;
    let a = process_map_matrix(rho_in.matrix());
    let b = hermitian_coords(rho_out.matrix());
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or(Error::NonFaithfulInput { smallest: 0.0 })?;
    let residual = (&a * &x - &b).norm();
    debug_assert!(residual < 1e-8, "linear inversion residual {residual}");
    Ok(from_hermitian_coords(4, x.as_slice()))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProcessOptions {
    /// Trace-preservation penalty weight; `None` uses 10³ × mean output count.
    pub lambda: Option<f64>,
    /// Use ideal `|Φ⁺⟩` as the probe state instead of the reconstructed one.
    pub ideal_input: bool,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Reconstructed process, normalised to unit trace.
    pub chi: ProcessMatrix,
    pub objective_value: f64,
    /// `‖Σ χ_mn E_n† E_m − I‖_F` of the raw fit.
    pub tp_residual: f64,
    pub iterations: usize,
    pub n_estimate: f64,
    pub lambda: f64,
    pub termination: Termination,
}

impl ReconstructionResult {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations && self.tp_residual < TP_RESIDUAL_TOL
    }
}

/// Weighted least-squares fit of χ to the output counts with a
/// trace-preservation penalty.
///
/// Minimises
/// `Σ_i (n_i − N p_i)² / (2 N p_i) + λ Σ_k [Tr(S E_k) − Tr E_k]²`
/// where `p_i = Tr[M_i Σ χ_mn (E_m ⊗ I) ρ_in (E_n ⊗ I)†]` and
/// `S = Σ χ_mn E_n† E_m`, over `χ = T T†` (16 reals) and `ln N`.
pub fn mle_process(
    dataset: &TomographyDataset,
    rho_in: &DensityMatrix,
    lambda: f64,
) -> Result<ReconstructionResult> {
    mle_process_with(
        dataset,
        rho_in,
        &ProcessOptions {
            lambda: Some(lambda),
            ..Default::default()
        },
    )
}

pub fn mle_process_with(
    dataset: &TomographyDataset,
    rho_in: &DensityMatrix,
    opts: &ProcessOptions,
) -> Result<ReconstructionResult> {
    let probe = if opts.ideal_input {
        DensityMatrix::phi_plus()
    } else {
        rho_in.clone()
    };
    require_faithful(&probe)?;
    let n = ordered_counts(dataset.output_counts())?;
    let total: f64 = n.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateCounts);
    }
    let lambda = opts.lambda.unwrap_or(1e3 * total / SETTING_COUNT as f64);
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }

    // K_i,mn = Tr[M_i (E_m ⊗ I) ρ_in (E_n ⊗ I)†], so p_i = Σ χ_mn K_i,mn
    let lifted = lifted_paulis();
    let projectors = all_projectors();
    let mut kernel = vec![[[c(0.0, 0.0); 4]; 4]; SETTING_COUNT];
    for m in 0..4 {
        let left = &lifted[m] * probe.matrix();
        for nn in 0..4 {
            let sandwiched = &left * lifted[nn].adjoint();
            for (i, proj) in projectors.iter().enumerate() {
                kernel[i][m][nn] = (proj * &sandwiched).trace();
            }
        }
    }
    // Tr(E_n† E_m E_k)
    let basis = pauli_basis();
    let mut tp_coef = [[[c(0.0, 0.0); 4]; 4]; 4];
    for m in 0..4 {
        for nn in 0..4 {
            let g = basis[nn].adjoint() * &basis[m];
            for k in 0..4 {
                tp_coef[k][m][nn] = trace(&(&g * &basis[k]));
            }
        }
    }
    let tr_e: [f64; 4] = std::array::from_fn(|k| trace(&basis[k]).re);

    let predicted = |chi: &CMatrix| -> Vec<f64> {
        kernel
            .iter()
            .map(|k| {
                let mut s = c(0.0, 0.0);
                for m in 0..4 {
                    for nn in 0..4 {
                        s += chi[(m, nn)] * k[m][nn];
                    }
                }
                s.re
            })
            .collect()
    };
    let penalty = |chi: &CMatrix| -> f64 {
        (0..4)
            .map(|k| {
                let mut s = c(0.0, 0.0);
                for m in 0..4 {
                    for nn in 0..4 {
                        s += chi[(m, nn)] * tp_coef[k][m][nn];
                    }
                }
                (s.re - tr_e[k]).powi(2)
            })
            .sum()
    };
    let objective = |x: &[f64]| -> f64 {
        let chi = gram_from_params(&x[..16]);
        let photons = x[16].exp();
        let data: f64 = predicted(&chi)
            .iter()
            .zip(&n)
            .map(|(&p, &ni)| {
                let mu = photons * p.max(PROBABILITY_FLOOR);
                (ni - photons * p).powi(2) / (2.0 * mu)
            })
            .sum();
        data + lambda * penalty(&chi)
    };

    // start: PSD part of the linear inversion between reconstructed states
    let rho_out = mle_state(dataset.output_counts())?;
    let linear = linear_invert_process(&probe, &rho_out)?;
    let mut start = psd_projection(&hermitian_part(&linear))?;
    let tr = trace(&start).re;
    start = if tr > 1e-12 {
        start.unscale(tr)
    } else {
        identity(4).unscale(4.0)
    };
    let mut x0 = initial_factor(&start, 1e-3);
    x0.push((total / 9.0).ln());

    let best = minimize(objective, &x0);
    let raw = gram_from_params(&best.x[..16]);
    let tp_residual = (crate::channel::tp_operator(&raw) - identity(2)).norm();
    Ok(ReconstructionResult {
        chi: ProcessMatrix::from_unnormalized(raw)?,
        objective_value: best.value,
        tp_residual,
        iterations: best.iterations,
        n_estimate: best.x[16].exp(),
        lambda,
        termination: best.termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, chi_from_kraus, damping_kraus, DampingParams, Side};
    use crate::qmath::{frobenius_distance, random_density};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn settings_order() {
        let s = enumerate_settings();
        assert_eq!(s.len(), 36);
        assert_eq!(
            s[0],
            MeasurementSetting::new(Polarization::H, Polarization::H)
        );
        let rl = MeasurementSetting::new(Polarization::R, Polarization::L);
        assert_eq!(s.iter().filter(|x| **x == rl).count(), 1);
        for (i, x) in s.iter().enumerate() {
            assert_eq!(x.index(), i);
        }
    }

    #[test]
    fn projector_examples() {
        let hh = projector(MeasurementSetting::new(Polarization::H, Polarization::H));
        let mut want = CMatrix::zeros(4, 4);
        want[(0, 0)] = c(1.0, 0.0);
        assert!(frobenius_distance(&hh, &want) < 1e-15);

        let dd = projector(MeasurementSetting::new(Polarization::D, Polarization::D));
        let phi = DensityMatrix::phi_plus();
        assert!(((dd * phi.matrix()).trace().re - 0.5).abs() < 1e-15);

        let mut rng = stream_rng(1, 1);
        let rho = random_density(4, 4, &mut rng);
        let zz: f64 = [Polarization::H, Polarization::V]
            .iter()
            .flat_map(|&a| [Polarization::H, Polarization::V].map(|b| (a, b)))
            .map(|(a, b)| {
                (projector(MeasurementSetting::new(a, b)) * rho.matrix())
                    .trace()
                    .re
            })
            .sum();
        assert!((zz - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simulated_counts() {
        let phi = DensityMatrix::phi_plus();
        let a = simulate_counts(&phi, 5e4, 9).unwrap();
        let b = simulate_counts(&phi, 5e4, 9).unwrap();
        assert_eq!(a, b);
        let hv = MeasurementSetting::new(Polarization::H, Polarization::V).index();
        let hh = MeasurementSetting::new(Polarization::H, Polarization::H).index();
        assert!(a[hv].count <= 2.0);
        assert!((a[hh].count - 25_000.0).abs() <= 3.0 * 25_000f64.sqrt());
        assert!(a.iter().all(|r| r.count.fract() == 0.0));
        assert!(simulate_counts(&phi, 0.0, 1).is_err());
        assert!(simulate_counts(&phi, f64::NAN, 1).is_err());
    }

    #[test]
    fn incomplete_records_rejected() {
        let phi = DensityMatrix::phi_plus();
        let mut r = expected_counts(&phi, 100.0).unwrap();
        r.pop();
        assert!(matches!(mle_state(&r), Err(Error::IncompleteSettings(_))));
        let mut r = expected_counts(&phi, 100.0).unwrap();
        r[3] = r[0];
        assert!(matches!(mle_state(&r), Err(Error::IncompleteSettings(_))));
        let zero: Vec<_> = expected_counts(&phi, 100.0)
            .unwrap()
            .into_iter()
            .map(|x| CountRecord { count: 0.0, ..x })
            .collect();
        assert!(matches!(mle_state(&zero), Err(Error::DegenerateCounts)));
    }

    #[test]
    fn hermitian_coords_round_trip() {
        let mut rng = stream_rng(2, 0);
        let rho = random_density(4, 3, &mut rng);
        let x = hermitian_coords(rho.matrix());
        let back = from_hermitian_coords(4, x.as_slice());
        assert!(frobenius_distance(&back, rho.matrix()) < 1e-15);
    }

    #[test]
    fn mle_state_noiseless() {
        let phi = DensityMatrix::phi_plus();
        let rho = mle_state(&expected_counts(&phi, 5e4).unwrap()).unwrap();
        let f = (rho.matrix() * phi.matrix()).trace().re;
        assert!(f > 1.0 - 1e-6, "{f}");

        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        let rho = mle_state(&expected_counts(&mixed, 5e4).unwrap()).unwrap();
        assert!(frobenius_distance(rho.matrix(), mixed.matrix()) < 1e-6);
    }

    #[test]
    fn mle_state_poisson() {
        let phi = DensityMatrix::phi_plus();
        let good = (0..20)
            .filter(|&s| {
                let rho = mle_state(&simulate_counts(&phi, 5e4, s).unwrap()).unwrap();
                (rho.matrix() * phi.matrix()).trace().re > 0.999
            })
            .count();
        assert!(good >= 19, "{good}/20");
    }

    #[test]
    fn linear_inversion_examples() {
        let phi = DensityMatrix::phi_plus();
        let chi = linear_invert_process(&phi, &phi).unwrap();
        let mut id = CMatrix::zeros(4, 4);
        id[(0, 0)] = c(1.0, 0.0);
        assert!(frobenius_distance(&chi, &id) < 1e-10);

        let k = damping_kraus(DampingParams::new(0.0, FRAC_PI_2).unwrap());
        let out = apply_channel(&k, &phi, Side::AOnly).unwrap();
        let chi = linear_invert_process(&phi, &out).unwrap();
        assert!(frobenius_distance(&chi, chi_from_kraus(&k).matrix()) < 1e-8);

        let product = DensityMatrix::maximally_mixed(4).unwrap();
        assert!(matches!(
            linear_invert_process(&product, &phi),
            Err(Error::NonFaithfulInput { .. })
        ));
    }

    #[test]
    fn linear_inversion_from_random_faithful_inputs() {
        let mut rng = stream_rng(3, 0);
        let k = damping_kraus(DampingParams::new(0.3, 1.0).unwrap());
        let truth = chi_from_kraus(&k);
        for _ in 0..20 {
            let rho = random_density(4, 4, &mut rng);
            let out = apply_channel(&k, &rho, Side::AOnly).unwrap();
            let chi = linear_invert_process(&rho, &out).unwrap();
            assert!(frobenius_distance(&chi, truth.matrix()) < 1e-8);
        }
    }

    fn noiseless_dataset(
        k: &crate::channel::KrausSet,
        rho_in: &DensityMatrix,
    ) -> TomographyDataset {
        let out = apply_channel(k, rho_in, Side::AOnly).unwrap();
        TomographyDataset::synthesize(rho_in, &out, 5e4, None).unwrap()
    }

    #[test]
    fn mle_process_noiseless_identity_and_full_damping() {
        for p in [
            DampingParams::new(0.0, 0.0).unwrap(),
            DampingParams::new(0.0, FRAC_PI_2).unwrap(),
        ] {
            let k = damping_kraus(p);
            let data = noiseless_dataset(&k, &DensityMatrix::phi_plus());
            let rho_in = mle_state(data.input_counts()).unwrap();
            let r = mle_process_with(&data, &rho_in, &ProcessOptions::default()).unwrap();
            let truth = chi_from_kraus(&k);
            let f = crate::metrics::process_fidelity(&r.chi, &truth).unwrap();
            assert!(f > 1.0 - 1e-5, "{p:?}: {f}");
            assert!(r.converged(), "{r:?}");
        }
    }

    #[test]
    fn penalty_weight_controls_trace_preservation() {
        // a non-trace-preserving filter cannot be fit exactly by a TP process
        let filter = crate::qmath::real_matrix(2, &[1.0, 0.0, 0.0, 0.5]);
        let phi = DensityMatrix::phi_plus();
        let lifted = tensor(&filter, &identity(2));
        let out =
            DensityMatrix::from_unnormalized(&lifted * phi.matrix() * lifted.adjoint()).unwrap();
        let data = TomographyDataset::synthesize(&phi, &out, 5e4, None).unwrap();
        let mean = data.mean_output_count();
        let residuals: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&w| mle_process(&data, &phi, w * mean).unwrap().tp_residual)
            .collect();
        assert!(
            residuals[0] > residuals[1] && residuals[1] > residuals[2],
            "{residuals:?}"
        );
    }

    #[test]
    fn dataset_round_trip() {
        let phi = DensityMatrix::phi_plus();
        let data = TomographyDataset::synthesize(&phi, &phi, 5e4, Some(4)).unwrap();
        let mut buf = Vec::new();
        data.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("block,projector_A,projector_B,count,duration\n"));
        assert!(text.lines().nth(1).unwrap().starts_with("input,H,H,"));
        let back = TomographyDataset::read(buf.as_slice()).unwrap();
        assert_eq!(back.input_counts(), data.input_counts());
        assert_eq!(back.output_counts(), data.output_counts());

        let broken = text.replacen("input,H,H", "input,H,Q", 1);
        assert!(matches!(
            TomographyDataset::read(broken.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
