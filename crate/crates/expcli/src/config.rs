//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # amplitude damping, coarse grid
//! case = amplitude_damping
//! beta_points = 7
//! flux = 5e4
//! trials = 50
//! seed = 11
//! output_dir = out/ad
//! ```
//!
//! `beta_grid` takes a comma-separated list of radians and overrides
//! `beta_points`. Unknown keys are rejected.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use dampchan::channel::{DampingCase, DampingParams};
use dampchan::optics::SetupPerturbation;
use dampchan::parallel::stream_seed;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_FLUX: f64 = 5e4;
pub const DEFAULT_BETA_POINTS: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: DampingCase,
    pub beta_grid: Vec<f64>,
    /// Expected coincidences per tomography setting.
    pub flux: f64,
    /// Monte-Carlo trials for tomography error bars.
    pub trials: usize,
    /// Photons per grid point in the transmission simulation.
    pub shots: u64,
    /// Perturbed setups per grid point in the sensitivity band.
    pub band_draws: usize,
    pub hwp_sigma_deg: f64,
    pub lcr_sigma: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Use expectation values instead of Poisson counts.
    pub noiseless: bool,
    /// Dataset whose input block defines the probe state; ideal `|Φ⁺⟩` if unset.
    pub input_dataset: Option<PathBuf>,
    /// Trace-preservation penalty in units of the mean output count.
    pub lambda_factor: f64,
    /// Fit χ against ideal `|Φ⁺⟩` instead of the reconstructed input.
    pub ideal_input: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: DampingCase::AmplitudeDamping,
            beta_grid: uniform_grid(DEFAULT_BETA_POINTS),
            flux: DEFAULT_FLUX,
            trials: 100,
            shots: 1_000_000,
            band_draws: 1000,
            hwp_sigma_deg: 1.0,
            lcr_sigma: 0.01,
            seed: 0,
            output_dir: PathBuf::from("out"),
            noiseless: false,
            input_dataset: None,
            lambda_factor: 1e3,
            ideal_input: false,
        }
    }
}

/// `n` points from 0 to π/2 inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| FRAC_PI_2 * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("line {line}: {msg}"))
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| bad(line, format!("{key} = {v}: {e}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(line, format!("{key} expects true/false, got '{v}'"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut explicit_grid = None;
        let mut points = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(line, format!("expected 'key = value', got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "case" => cfg.case = value.parse().map_err(|e: dampchan::Error| bad(line, e))?,
                "beta_grid" => {
                    let grid = if value.is_empty() {
                        vec![]
                    } else {
                        value
                            .split(',')
                            .map(|x| parse_num::<f64>(line, key, x.trim()))
                            .collect::<Result<Vec<_>>>()?
                    };
                    explicit_grid = Some(grid);
                }
                "beta_points" => points = Some(parse_num::<usize>(line, key, value)?),
                "flux" => cfg.flux = parse_num(line, key, value)?,
                "trials" => cfg.trials = parse_num(line, key, value)?,
                "shots" => cfg.shots = parse_num(line, key, value)?,
                "band_draws" => cfg.band_draws = parse_num(line, key, value)?,
                "hwp_sigma_deg" => cfg.hwp_sigma_deg = parse_num(line, key, value)?,
                "lcr_sigma" => cfg.lcr_sigma = parse_num(line, key, value)?,
                "seed" => cfg.seed = parse_num(line, key, value)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "noiseless" => cfg.noiseless = parse_bool(line, key, value)?,
                "input_dataset" => {
                    cfg.input_dataset = (!value.is_empty()).then(|| PathBuf::from(value))
                }
                "lambda_factor" => cfg.lambda_factor = parse_num(line, key, value)?,
                "ideal_input" => cfg.ideal_input = parse_bool(line, key, value)?,
                _ => return Err(bad(line, format!("unknown key '{key}'"))),
            }
        }
        if let Some(g) = explicit_grid {
            cfg.beta_grid = g;
        } else if let Some(n) = points {
            cfg.beta_grid = uniform_grid(n);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if let Some(b) = self
            .beta_grid
            .iter()
            .find(|b| !(b.is_finite() && (-1e-12..=FRAC_PI_2 + 1e-12).contains(*b)))
        {
            return fail(format!("beta {b} outside [0, pi/2]"));
        }
        if !(self.flux.is_finite() && self.flux > 0.0) {
            return fail(format!("flux must be positive, got {}", self.flux));
        }
        if self.trials < 2 {
            return fail(format!("trials must be at least 2, got {}", self.trials));
        }
        if self.shots == 0 {
            return fail("shots must be positive".into());
        }
        if self.band_draws < 2 {
            return fail(format!(
                "band_draws must be at least 2, got {}",
                self.band_draws
            ));
        }
        if !(self.lambda_factor.is_finite() && self.lambda_factor > 0.0) {
            return fail(format!(
                "lambda_factor must be positive, got {}",
                self.lambda_factor
            ));
        }
        self.perturbation()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn params(&self) -> Result<Vec<DampingParams>> {
        self.beta_grid
            .iter()
            .map(|&b| {
                let b = b.clamp(0.0, FRAC_PI_2);
                Ok(self.case.params(b)?)
            })
            .collect()
    }

    pub fn perturbation(&self) -> SetupPerturbation {
        SetupPerturbation {
            hwp_sigma_deg: self.hwp_sigma_deg,
            lcr_sigma: self.lcr_sigma,
            seed: stream_seed(self.seed, 2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.beta_grid.len(), 13);
        assert_eq!(c.beta_grid[0], 0.0);
        assert_eq!(c.beta_grid[12], FRAC_PI_2);
        assert_eq!(c.flux, 5e4);
        c.validate().unwrap();
    }

    #[test]
    fn parse_file() {
        let c = RunConfig::parse(
            "# comment\ncase = bitflip\nbeta_points = 5\nflux = 1e5 # inline\n\nnoiseless = yes\nseed=42\n",
        )
        .unwrap();
        assert_eq!(c.case, DampingCase::Bitflip);
        assert_eq!(c.beta_grid, uniform_grid(5));
        assert_eq!((c.flux, c.seed, c.noiseless), (1e5, 42, true));

        let c = RunConfig::parse("beta_grid = 0.1, 0.2\nbeta_points = 9").unwrap();
        assert_eq!(c.beta_grid, vec![0.1, 0.2]);
        let c = RunConfig::parse("beta_grid =").unwrap();
        assert!(c.beta_grid.is_empty());
    }

    #[test]
    fn parse_errors() {
        for text in [
            "bogus = 1",
            "flux = -3",
            "flux = abc",
            "case = dephasing",
            "beta_grid = 0.1, 2.0",
            "trials = 1",
            "just words",
            "noiseless = maybe",
            "lcr_sigma = -0.1",
        ] {
            assert!(
                matches!(RunConfig::parse(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }
}
