//! Figure pipelines.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use dampchan::channel::{apply_channel, chi_from_kraus, damping_kraus, DampingParams, Side};
use dampchan::metrics::{
    max_trace_distance, monte_carlo_errorbars, process_fidelity, tangle, ErrorBar, Resampling,
};
use dampchan::optics::{sensitivity_band, simulate_transmission, BandPoint};
use dampchan::parallel::{map_indexed, stream_seed, Exec};
use dampchan::qmath::{partial_trace, CMatrix, DensityMatrix, Subsystem};
use dampchan::tomography::{mle_process_with, mle_state, ProcessOptions, TomographyDataset};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Fig2,
    Fig3,
}

/// One grid point. Fields that a pipeline does not compute are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub case: String,
    pub alpha: f64,
    pub beta: f64,
    pub psucc_analytic: f64,
    pub psucc_sim: Option<f64>,
    pub psucc_sigma: Option<f64>,
    pub tangle: Option<f64>,
    pub tangle_sigma: Option<f64>,
    pub fidelity: Option<f64>,
    pub fidelity_sigma: Option<f64>,
    pub trace_distance: Option<f64>,
    pub trace_distance_sigma: Option<f64>,
    /// Failed reconstructions at this point (the point estimate plus any
    /// excluded Monte-Carlo trials).
    pub failures: usize,
}

impl ResultRow {
    fn new(case: &str, p: DampingParams) -> Self {
        Self {
            case: case.to_string(),
            alpha: p.alpha(),
            beta: p.beta(),
            psucc_analytic: p.optimal_success_probability(),
            psucc_sim: None,
            psucc_sigma: None,
            tangle: None,
            tangle_sigma: None,
            fidelity: None,
            fidelity_sigma: None,
            trace_distance: None,
            trace_distance_sigma: None,
            failures: 0,
        }
    }
}

/// Real and imaginary parts of reconstructed and ideal χ, Pauli order I, X, Y, Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiDump {
    pub alpha: f64,
    pub beta: f64,
    pub reconstructed_re: [[f64; 4]; 4],
    pub reconstructed_im: [[f64; 4]; 4],
    pub ideal_re: [[f64; 4]; 4],
    pub ideal_im: [[f64; 4]; 4],
}

pub fn split(m: &CMatrix) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
    (
        std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)].re)),
        std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)].im)),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub kind: RunKind,
    pub version: String,
    pub config: RunConfig,
    pub rows: Vec<ResultRow>,
    /// Sensitivity band per grid point (fig2 only).
    pub band: Vec<BandPoint>,
    pub chi_dump: Option<ChiDump>,
    pub wall_clock_seconds: f64,
}

impl ExperimentRun {
    pub fn failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    /// Everything except timing, for comparing reruns.
    pub fn summary(
        &self,
    ) -> (
        RunKind,
        &RunConfig,
        &[ResultRow],
        &[BandPoint],
        Option<&ChiDump>,
    ) {
        (
            self.kind,
            &self.config,
            &self.rows,
            &self.band,
            self.chi_dump.as_ref(),
        )
    }
}

/// Probe state: ideal `|Φ⁺⟩` or the reconstruction of a dataset's input block.
pub fn input_state(config: &RunConfig) -> Result<DensityMatrix> {
    match &config.input_dataset {
        None => Ok(DensityMatrix::phi_plus()),
        Some(path) => {
            let data = TomographyDataset::load(path)?;
            Ok(mle_state(data.input_counts())?)
        }
    }
}

/// Success probability, simulated transmission, tangle of the ideal output
/// and the sensitivity band along the β grid.
pub fn run_fig2(config: &RunConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let start = Instant::now();
    let grid = config.params()?;
    let rho_in = input_state(config)?;
    let reduced = partial_trace(&rho_in, Subsystem::B)?;
    let case = config.case.name();

    let transmission_seed = stream_seed(config.seed, 1);
    let rows = grid
        .iter()
        .enumerate()
        .map(|(g, &p)| -> Result<ResultRow> {
            let mut row = ResultRow::new(case, p);
            let t = simulate_transmission(
                p,
                &reduced,
                config.shots,
                None,
                stream_seed(transmission_seed, g as u64),
            )?;
            row.psucc_sim = Some(t);
            row.psucc_sigma = Some((t * (1.0 - t) / config.shots as f64).sqrt());
            let out = apply_channel(&damping_kraus(p), &rho_in, Side::AOnly)?;
            row.tangle = Some(tangle(&out));
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let band = sensitivity_band(&grid, &config.perturbation(), config.band_draws, &rho_in)?;
    let rows = rows
        .into_iter()
        .zip(&band)
        .map(|(mut r, b)| {
            r.tangle_sigma = Some(b.tangle.stddev);
            r
        })
        .collect();

    Ok(ExperimentRun {
        kind: RunKind::Fig2,
        version: VERSION.to_string(),
        config: config.clone(),
        rows,
        band,
        chi_dump: None,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Fidelity, trace distance and output tangle from one dataset.
fn reconstruct_metrics(
    data: &TomographyDataset,
    ideal: &dampchan::channel::ProcessMatrix,
    opts: &ProcessOptions,
) -> dampchan::Result<(Vec<f64>, CMatrix)> {
    let rho_in = mle_state(data.input_counts())?;
    let rho_out = mle_state(data.output_counts())?;
    let r = mle_process_with(data, &rho_in, opts)?;
    if !r.converged() {
        return Err(dampchan::Error::InvalidArgument(format!(
            "reconstruction did not converge: {:?}, tp residual {:.3e}",
            r.termination, r.tp_residual
        )));
    }
    let f = process_fidelity(&r.chi, ideal)?;
    let (d, _) = max_trace_distance(&r.chi, ideal);
    Ok((vec![f, d, tangle(&rho_out)], r.chi.into_matrix()))
}

fn is_full_damping(p: DampingParams) -> bool {
    p.alpha() == 0.0 && (p.beta() - FRAC_PI_2).abs() < 1e-9
}

/// Full tomography pipeline per β: synthesize input and output datasets,
/// reconstruct χ and compare it with the ideal process.
pub fn run_fig3(config: &RunConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let start = Instant::now();
    let grid = config.params()?;
    let rho_in = input_state(config)?;
    let case = config.case.name();
    let count_seed = stream_seed(config.seed, 3);
    let resample_seed = stream_seed(config.seed, 4);

    let points = map_indexed(
        Exec::default(),
        grid.len(),
        |g| -> Result<(ResultRow, Option<ChiDump>)> {
            let p = grid[g];
            let mut row = ResultRow::new(case, p);
            let k = damping_kraus(p);
            let ideal = chi_from_kraus(&k);
            let rho_out = apply_channel(&k, &rho_in, Side::AOnly)?;
            let seed = (!config.noiseless).then(|| stream_seed(count_seed, g as u64));
            let data = TomographyDataset::synthesize(&rho_in, &rho_out, config.flux, seed)?;
            let opts = ProcessOptions {
                lambda: Some(config.lambda_factor * data.mean_output_count()),
                ideal_input: config.ideal_input,
            };

            let (values, chi) = match reconstruct_metrics(&data, &ideal, &opts) {
                Ok(v) => v,
                Err(_) => {
                    row.failures = 1;
                    return Ok((row, None));
                }
            };
            row.fidelity = Some(values[0]);
            row.trace_distance = Some(values[1]);
            row.tangle = Some(values[2]);

            if config.noiseless {
                row.fidelity_sigma = Some(0.0);
                row.trace_distance_sigma = Some(0.0);
                row.tangle_sigma = Some(0.0);
            } else {
                let bars: Vec<ErrorBar> = monte_carlo_errorbars(
                    &data,
                    |d| reconstruct_metrics(d, &ideal, &opts).map(|(v, _)| v),
                    3,
                    config.trials,
                    stream_seed(resample_seed, g as u64),
                    Resampling::Poisson,
                    Exec::default(),
                )?;
                row.fidelity_sigma = Some(bars[0].stddev);
                row.trace_distance_sigma = Some(bars[1].stddev);
                row.tangle_sigma = Some(bars[2].stddev);
                row.failures += bars[0].failures;
            }

            let dump = is_full_damping(p).then(|| {
                let (reconstructed_re, reconstructed_im) = split(&chi);
                let (ideal_re, ideal_im) = split(ideal.matrix());
                ChiDump {
                    alpha: p.alpha(),
                    beta: p.beta(),
                    reconstructed_re,
                    reconstructed_im,
                    ideal_re,
                    ideal_im,
                }
            });
            Ok((row, dump))
        },
    );

    let mut rows = Vec::with_capacity(points.len());
    let mut chi_dump = None;
    for point in points {
        let (row, dump) = point?;
        rows.push(row);
        chi_dump = chi_dump.or(dump);
    }
    Ok(ExperimentRun {
        kind: RunKind::Fig3,
        version: VERSION.to_string(),
        config: config.clone(),
        rows,
        band: vec![],
        chi_dump,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Analytic success probabilities and switching probabilities along the grid.
pub fn psucc_table(config: &RunConfig) -> Result<Vec<(DampingParams, f64, f64, f64)>> {
    Ok(config
        .params()?
        .into_iter()
        .map(|p| {
            let (p0, p1) = p.kraus_probabilities();
            (p, p.optimal_success_probability(), p0, p1)
        })
        .collect())
}
