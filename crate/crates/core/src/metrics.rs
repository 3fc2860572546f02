//! Figures of merit: fidelities, maximum output trace distance, tangle and
//! Monte-Carlo error bars.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::{apply_chi, ProcessMatrix};
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::parallel::{map_indexed, stream_rng, Exec};
use crate::qmath::{
    c, hermitian_part, psd_sqrt_truncated, tensor, trace, trace_norm, CMatrix, DensityMatrix,
    Pauli, C64, SPECTRAL_CUTOFF,
};
use crate::tomography::TomographyDataset;

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
}

/// Shifted two-pass summary; identical samples give exactly zero spread.
pub fn summarize(xs: &[f64]) -> Result<Summary> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let x0 = xs[0];
    let s1: f64 = xs.iter().map(|x| x - x0).sum();
    let s2: f64 = xs.iter().map(|x| (x - x0).powi(2)).sum();
    let var = ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0);
    Ok(Summary {
        mean: x0 + s1 / n,
        stddev: var.sqrt(),
        n: xs.len(),
    })
}

/// `Tr √(√a b √a)` after rescaling both arguments to unit trace.
pub fn root_fidelity(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let norm = |m: &CMatrix| -> Result<CMatrix> {
        let h = hermitian_part(m);
        let tr = trace(&h).re;
        if !(tr > 0.0) {
            return Err(Error::InvalidTrace { trace: tr });
        }
        Ok(h.unscale(tr))
    };
    let (a, b) = (norm(a)?, norm(b)?);
    // Tr √(√a b √a) = ‖√a √b‖_*
    let sa = psd_sqrt_truncated(&a, SPECTRAL_CUTOFF)?;
    let sb = psd_sqrt_truncated(&b, SPECTRAL_CUTOFF)?;
    Ok(trace_norm(&(sa * sb)))
}

/// `F = Tr √(√χ_exp χ_id √χ_exp)`.
pub fn process_fidelity(chi_exp: &ProcessMatrix, chi_id: &ProcessMatrix) -> Result<f64> {
    root_fidelity(chi_exp.matrix(), chi_id.matrix())
}

/// Squared Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`; equals `⟨ψ|ρ|ψ⟩` for pure `σ`.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("dim {}", rho.dim()),
            found: format!("dim {}", sigma.dim()),
        });
    }
    Ok(root_fidelity(rho.matrix(), sigma.matrix())?.powi(2))
}

/// Squared concurrence.
///
/// The `λ_i` are the square roots of the eigenvalues of `ρ ρ̃`, with
/// `ρ̃ = (Y ⊗ Y) ρ* (Y ⊗ Y)`. They are computed as the singular values of
/// `√ρ √ρ̃`, which avoids a second square root.
pub fn tangle(rho: &DensityMatrix) -> f64 {
    if rho.dim() != 4 {
        return 0.0;
    }
    let yy = tensor(&Pauli::Y.matrix(), &Pauli::Y.matrix());
    let root = psd_sqrt_truncated(rho.matrix(), SPECTRAL_CUTOFF).expect("density matrix is PSD");
    let flipped_root = &yy * root.conjugate() * &yy;
    let mut lambdas: Vec<f64> = (root * flipped_root)
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let conc = (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0);
    (conc * conc).min(1.0)
}

/// Single-qubit pure state with Bloch angles `(θ, φ)`.
pub fn bloch_state(theta: f64, phi: f64) -> DensityMatrix {
    DensityMatrix::pure(&[
        c((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ])
    .expect("unit ket")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceDistanceSearch {
    pub theta_points: usize,
    pub phi_points: usize,
    pub refine: bool,
    /// Also scan the interior of the Bloch ball.
    pub allow_mixed: bool,
}

impl Default for TraceDistanceSearch {
    fn default() -> Self {
        Self {
            theta_points: 64,
            phi_points: 128,
            refine: true,
            allow_mixed: false,
        }
    }
}

/// Output difference `Δ(ρ) = (χ₁ − χ₂)(ρ)` is affine in the Bloch vector, so
/// it is evaluated from its action on `I/2` and the three Paulis.
struct DifferenceMap {
    pieces: [CMatrix; 4],
}

impl DifferenceMap {
    fn new(a: &ProcessMatrix, b: &ProcessMatrix) -> Self {
        let diff = a.matrix() - b.matrix();
        let half = C64::new(0.5, 0.0);
        let pieces = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z]
            .map(|p| apply_chi(&diff, &(p.matrix() * half)));
        Self { pieces }
    }

    /// `½ Tr |Δ|` for Bloch vector `r`.
    fn distance(&self, r: [f64; 3]) -> f64 {
        let mut d = self.pieces[0].clone();
        for (piece, rk) in self.pieces[1..].iter().zip(r) {
            d += piece.scale(rk);
        }
        // eigenvalues of a 2×2 Hermitian matrix
        let mean = 0.5 * (d[(0, 0)].re + d[(1, 1)].re);
        let half_gap = (0.25 * (d[(0, 0)].re - d[(1, 1)].re).powi(2) + d[(0, 1)].norm_sqr()).sqrt();
        0.5 * ((mean + half_gap).abs() + (mean - half_gap).abs())
    }
}

fn bloch_vector(radius: f64, theta: f64, phi: f64) -> [f64; 3] {
    [
        radius * theta.sin() * phi.cos(),
        radius * theta.sin() * phi.sin(),
        radius * theta.cos(),
    ]
}

/// `max_ρ ½ Tr |χ_exp(ρ) − χ_id(ρ)|` over single-qubit inputs.
///
/// The objective is convex in `ρ`, so pure inputs suffice; they are scanned
/// on a `θ × φ` grid and the best few points refined with a simplex search.
/// Returns the distance and the maximising input.
pub fn max_trace_distance(chi_exp: &ProcessMatrix, chi_id: &ProcessMatrix) -> (f64, DensityMatrix) {
    max_trace_distance_with(chi_exp, chi_id, &TraceDistanceSearch::default())
}

pub fn max_trace_distance_with(
    chi_exp: &ProcessMatrix,
    chi_id: &ProcessMatrix,
    search: &TraceDistanceSearch,
) -> (f64, DensityMatrix) {
    let map = DifferenceMap::new(chi_exp, chi_id);
    let nt = search.theta_points.max(2);
    let np = search.phi_points.max(1);
    let radii: Vec<f64> = if search.allow_mixed {
        (1..=8).map(|k| k as f64 / 8.0).collect()
    } else {
        vec![1.0]
    };

    let mut scored = Vec::with_capacity(nt * np * radii.len());
    for &radius in &radii {
        for i in 0..nt {
            let theta = PI * i as f64 / (nt - 1) as f64;
            for j in 0..np {
                let phi = 2.0 * PI * j as f64 / np as f64;
                let d = map.distance(bloch_vector(radius, theta, phi));
                scored.push((d, radius, theta, phi));
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = scored[0];

    if search.refine {
        let opts = NelderMeadOptions {
            max_iterations: 500,
            ftol: 1e-15,
            xtol: 1e-12,
            initial_step: PI / nt as f64,
        };
        for &(_, radius, theta, phi) in scored.iter().take(4) {
            let m = nelder_mead(
                |x: &[f64]| -map.distance(bloch_vector(radius, x[0], x[1])),
                &[theta, phi],
                &opts,
            );
            if -m.value > best.0 {
                best = (-m.value, radius, m.x[0], m.x[1]);
            }
        }
    }

    let (d, radius, theta, phi) = best;
    let state = if radius == 1.0 {
        bloch_state(theta, phi)
    } else {
        let r = bloch_vector(radius, theta, phi);
        let half = C64::new(0.5, 0.0);
        let m = (crate::qmath::identity(2)
            + Pauli::X.matrix().scale(r[0])
            + Pauli::Y.matrix().scale(r[1])
            + Pauli::Z.matrix().scale(r[2]))
            * half;
        DensityMatrix::new(m).expect("Bloch vector inside the ball")
    };
    (d, state)
}

/// `½ Tr |χ_a(ρ) − χ_b(ρ)|` for one input.
pub fn output_trace_distance(a: &ProcessMatrix, b: &ProcessMatrix, rho: &DensityMatrix) -> f64 {
    let d = apply_chi(&(a.matrix() - b.matrix()), rho.matrix());
    0.5 * trace_norm(&d)
}

/// Result of repeating a reconstruction pipeline on resampled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBar {
    pub mean: f64,
    pub stddev: f64,
    /// Trials that produced a value.
    pub trials: usize,
    /// Trials whose pipeline failed; they are excluded from the statistics.
    pub failures: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    /// Fresh Poisson counts around every recorded count.
    Poisson,
    /// Reuse the recorded counts unchanged.
    None,
}

/// Monte-Carlo error bar of `pipeline` over Poisson-resampled datasets.
///
/// Trial `t` draws from stream `t` of `seed`, so the result does not depend on
/// the execution mode.
pub fn monte_carlo_errorbar<F>(
    dataset: &TomographyDataset,
    pipeline: F,
    trials: usize,
    seed: u64,
) -> Result<ErrorBar>
where
    F: Fn(&TomographyDataset) -> Result<f64> + Sync,
{
    monte_carlo_errorbar_with(
        dataset,
        pipeline,
        trials,
        seed,
        Resampling::Poisson,
        Exec::default(),
    )
}

pub fn monte_carlo_errorbar_with<F>(
    dataset: &TomographyDataset,
    pipeline: F,
    trials: usize,
    seed: u64,
    resampling: Resampling,
    exec: Exec,
) -> Result<ErrorBar>
where
    F: Fn(&TomographyDataset) -> Result<f64> + Sync,
{
    let bars = monte_carlo_errorbars(
        dataset,
        |d| pipeline(d).map(|v| vec![v]),
        1,
        trials,
        seed,
        resampling,
        exec,
    )?;
    Ok(bars[0])
}

/// Error bars for a pipeline producing `outputs` metrics per run. A trial
/// fails as a whole if the pipeline errors or any metric is non-finite.
pub fn monte_carlo_errorbars<F>(
    dataset: &TomographyDataset,
    pipeline: F,
    outputs: usize,
    trials: usize,
    seed: u64,
    resampling: Resampling,
    exec: Exec,
) -> Result<Vec<ErrorBar>>
where
    F: Fn(&TomographyDataset) -> Result<Vec<f64>> + Sync,
{
    if trials < 2 {
        return Err(Error::InvalidArgument("error bars need trials >= 2".into()));
    }
    let outcomes = map_indexed(exec, trials, |t| match resampling {
        Resampling::Poisson => pipeline(&dataset.resample(&mut stream_rng(seed, t as u64))),
        Resampling::None => pipeline(dataset),
    });
    let good: Vec<Vec<f64>> = outcomes
        .into_iter()
        .filter_map(|r| r.ok())
        .filter(|v| v.len() == outputs && v.iter().all(|x| x.is_finite()))
        .collect();
    let failures = trials - good.len();
    (0..outputs)
        .map(|k| {
            let column: Vec<f64> = good.iter().map(|v| v[k]).collect();
            let s = summarize(&column)?;
            Ok(ErrorBar {
                mean: s.mean,
                stddev: s.stddev,
                trials: good.len(),
                failures,
                seed,
            })
        })
        .collect()
}
