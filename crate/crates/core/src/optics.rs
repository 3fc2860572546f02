//! Jones-calculus model of the beam-displacer interferometer that implements
//! the damping channel probabilistically.
//!
//! Inside the interferometer a photon lives in four modes,
//! `{upper, lower} ⊗ {H, V}`, indexed as `2·path + polarization`. It enters in
//! the upper path. Amplitude that leaves these modes (the unused ports of the
//! beam displacers) is lost, so every element is a contraction and the output
//! norm² of a state is its postselection probability.
//!
//! The canonical pipeline is
//!
//! 1. HWP at 45° on the input beam,
//! 2. LCR 1 on the input beam,
//! 3. beam displacer 1 (H stays in the upper path, V goes to the lower path),
//! 4. HWP at 0° in the upper path,
//! 5. HWP θ₁ in the lower path, LCR 2 in the lower path, HWP θ₂ in the lower path,
//! 6. beam displacer 2, which keeps upper-H as output H and lower-V as output V.
//!
//! With LCRs set to `(X, 1)` the postselected operator is
//! `diag(1, cos 2(θ₂−θ₁))`; with `(1, X)` it is `[[0, 1], [−sin 2(θ₁+θ₂), 0]]`.
//! Choosing `θ₂ − θ₁ = π/4 − 2a` and `θ₁ + θ₂ = 2c` with the waveplate
//! relations `sin 4a = cos β / cos α` and `sin 4c = −sin α / sin β` makes the
//! two operators `A₀/‖A₀‖` and `A₁/‖A₁‖`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{damping_kraus, DampingParams};
use crate::error::{Error, Result};
use crate::metrics::{summarize, tangle, Summary};
use crate::parallel::{map_indexed, stream_rng, stream_seed, Exec};
use crate::qmath::{
    c, hermitian_part, identity, partial_trace_matrix, CMatrix, DensityMatrix, Subsystem, C64,
};

pub const UPPER_H: usize = 0;
pub const UPPER_V: usize = 1;
pub const LOWER_H: usize = 2;
pub const LOWER_V: usize = 3;

/// Half-wave plate with fast axis at `theta`:
/// `[[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]`.
pub fn hwp_jones(theta: f64) -> CMatrix {
    let (s, co) = (2.0 * theta).sin_cos();
    CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(s, 0.0), c(s, 0.0), c(-co, 0.0)])
}

/// Waveplate angles of the four-HWP implementation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwpAngles {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl HwpAngles {
    /// The same angles folded into `[0, π)`.
    pub fn modulo_pi(&self) -> HwpAngles {
        let f = |x: f64| x.rem_euclid(PI);
        HwpAngles {
            a: f(self.a),
            b: f(self.b),
            c: f(self.c),
            d: f(self.d),
        }
    }
}

/// `sin 4a = cos β / cos α`, `b = a − π/4`, `sin 4c = −sin α / sin β`,
/// `d = π/2 − c`, principal arcsine branch.
///
/// For `sin β = 0` the second Kraus operator vanishes and `c = 0, d = π/2` is
/// used.
pub fn solve_hwp_angles(p: DampingParams) -> HwpAngles {
    let (alpha, beta) = (p.alpha(), p.beta());
    let ratio_a = if alpha.cos() > 0.0 {
        (beta.cos() / alpha.cos()).clamp(-1.0, 1.0)
    } else {
        // α = β = π/2: A₀ = 0, any a works
        1.0
    };
    let a = ratio_a.asin() / 4.0;
    let c = if beta.sin() > 0.0 {
        (-alpha.sin() / beta.sin()).clamp(-1.0, 1.0).asin() / 4.0
    } else {
        0.0
    };
    HwpAngles {
        a,
        b: a - FRAC_PI_4,
        c,
        d: FRAC_PI_2 - c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LcrSetting {
    Identity,
    PauliX,
}

/// Settings of the two liquid-crystal retarders plus their fractional
/// retardance errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcrConfig {
    pub lcr1: LcrSetting,
    pub lcr2: LcrSetting,
    pub retardance_error: [f64; 2],
}

impl LcrConfig {
    /// `(X, 1)`: implements `A₀`.
    pub const KRAUS_0: LcrConfig = LcrConfig {
        lcr1: LcrSetting::PauliX,
        lcr2: LcrSetting::Identity,
        retardance_error: [0.0, 0.0],
    };
    /// `(1, X)`: implements `A₁`.
    pub const KRAUS_1: LcrConfig = LcrConfig {
        lcr1: LcrSetting::Identity,
        lcr2: LcrSetting::PauliX,
        retardance_error: [0.0, 0.0],
    };

    pub fn for_kraus(index: usize) -> LcrConfig {
        if index == 0 {
            Self::KRAUS_0
        } else {
            Self::KRAUS_1
        }
    }

    pub fn with_errors(mut self, errors: [f64; 2]) -> LcrConfig {
        self.retardance_error = errors;
        self
    }

    /// Which Kraus operator the configuration selects, if it is one of the
    /// two anti-correlated settings.
    pub fn kraus_index(&self) -> Option<usize> {
        match (self.lcr1, self.lcr2) {
            (LcrSetting::PauliX, LcrSetting::Identity) => Some(0),
            (LcrSetting::Identity, LcrSetting::PauliX) => Some(1),
            _ => None,
        }
    }

    fn setting(&self, lcr: usize) -> LcrSetting {
        if lcr == 0 {
            self.lcr1
        } else {
            self.lcr2
        }
    }
}

/// Jones matrix of an LCR with axis at 45°.
///
/// Nominal retardance is 0 (identity) or π (X); the error `eps` adds `π·eps`.
/// The phase reference is fixed per setting so that the ideal retarder is
/// exactly `1` or `X`.
pub fn lcr_jones(setting: LcrSetting, eps: f64) -> CMatrix {
    let nominal = match setting {
        LcrSetting::Identity => 0.0,
        LcrSetting::PauliX => PI,
    };
    let phi = nominal + PI * eps;
    let reference = C64::from_polar(1.0, nominal / 2.0);
    let (s, co) = (phi / 2.0).sin_cos();
    let m = CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)]);
    m * reference
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    Upper,
    Lower,
    /// Before the first beam displacer, where only the upper path is populated.
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Element {
    Hwp {
        arm: Arm,
        angle: f64,
    },
    /// `lcr` is 0 for the first retarder, 1 for the second.
    Lcr {
        arm: Arm,
        lcr: usize,
    },
    /// Upper-H stays, upper-V moves to lower-V; light already in the lower
    /// path leaves the mode set.
    BeamDisplacer,
    /// Upper-H becomes output H, lower-V becomes output V (both in the upper
    /// path); the orthogonal components exit to loss ports.
    Recombiner,
}

fn embed(arm: Arm, jones: &CMatrix) -> CMatrix {
    let mut t = identity(4);
    let offsets: &[usize] = match arm {
        Arm::Upper => &[0],
        Arm::Lower => &[2],
        Arm::Beam => &[0, 2],
    };
    for &o in offsets {
        for i in 0..2 {
            for j in 0..2 {
                t[(o + i, o + j)] = jones[(i, j)];
            }
        }
    }
    t
}

impl Element {
    /// 4×4 mode-transfer matrix under the given LCR configuration.
    pub fn transfer(&self, cfg: &LcrConfig) -> CMatrix {
        match *self {
            Element::Hwp { arm, angle } => embed(arm, &hwp_jones(angle)),
            Element::Lcr { arm, lcr } => {
                embed(arm, &lcr_jones(cfg.setting(lcr), cfg.retardance_error[lcr]))
            }
            Element::BeamDisplacer => {
                let mut t = CMatrix::zeros(4, 4);
                t[(UPPER_H, UPPER_H)] = c(1.0, 0.0);
                t[(LOWER_V, UPPER_V)] = c(1.0, 0.0);
                t
            }
            Element::Recombiner => {
                let mut t = CMatrix::zeros(4, 4);
                t[(UPPER_H, UPPER_H)] = c(1.0, 0.0);
                t[(UPPER_V, LOWER_V)] = c(1.0, 0.0);
                t
            }
        }
    }
}

/// Amplitudes over the four interferometer modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub amplitudes: [C64; 4],
}

impl ModeState {
    /// Single photon in the upper path with polarization `(h, v)`.
    pub fn input(h: C64, v: C64) -> Self {
        Self {
            amplitudes: [h, v, c(0.0, 0.0), c(0.0, 0.0)],
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn apply(&self, transfer: &CMatrix) -> ModeState {
        let v = nalgebra::DVector::from_column_slice(&self.amplitudes);
        let w = transfer * v;
        ModeState {
            amplitudes: [w[0], w[1], w[2], w[3]],
        }
    }

    /// Polarization amplitudes in the output (upper) path.
    pub fn output(&self) -> [C64; 2] {
        [self.amplitudes[UPPER_H], self.amplitudes[UPPER_V]]
    }
}

/// Internal waveplate angles of the canonical layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutAngles {
    pub input: f64,
    pub upper: f64,
    pub lower_first: f64,
    pub lower_second: f64,
}

impl LayoutAngles {
    pub fn from_hwp_angles(h: &HwpAngles) -> Self {
        Self {
            input: FRAC_PI_4,
            upper: 0.0,
            lower_first: h.a + h.c - PI / 8.0,
            lower_second: h.c - h.a + PI / 8.0,
        }
    }

    fn offset(&self, d: &[f64; 4]) -> Self {
        Self {
            input: self.input + d[0],
            upper: self.upper + d[1],
            lower_first: self.lower_first + d[2],
            lower_second: self.lower_second + d[3],
        }
    }
}

/// An ordered pipeline of elements; the output is postselected on the upper
/// path after the last element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalLayout {
    pub angles: LayoutAngles,
    pub elements: Vec<Element>,
}

impl OpticalLayout {
    pub fn canonical(p: DampingParams) -> Self {
        Self::from_angles(LayoutAngles::from_hwp_angles(&solve_hwp_angles(p)))
    }

    pub fn from_angles(angles: LayoutAngles) -> Self {
        let elements = vec![
            Element::Hwp {
                arm: Arm::Beam,
                angle: angles.input,
            },
            Element::Lcr {
                arm: Arm::Beam,
                lcr: 0,
            },
            Element::BeamDisplacer,
            Element::Hwp {
                arm: Arm::Upper,
                angle: angles.upper,
            },
            Element::Hwp {
                arm: Arm::Lower,
                angle: angles.lower_first,
            },
            Element::Lcr {
                arm: Arm::Lower,
                lcr: 1,
            },
            Element::Hwp {
                arm: Arm::Lower,
                angle: angles.lower_second,
            },
            Element::Recombiner,
        ];
        Self { angles, elements }
    }

    /// Same layout with the four waveplates rotated by `offsets` (radians).
    pub fn with_hwp_offsets(&self, offsets: &[f64; 4]) -> Self {
        Self::from_angles(self.angles.offset(offsets))
    }

    fn lcr_count(&self) -> usize {
        self.elements
            .iter()
            .filter(|e| matches!(e, Element::Lcr { .. }))
            .count()
    }

    /// States after each element, starting from `input`.
    pub fn trace_states(&self, cfg: &LcrConfig, input: ModeState) -> Vec<ModeState> {
        let mut out = Vec::with_capacity(self.elements.len() + 1);
        let mut state = input;
        out.push(state.clone());
        for e in &self.elements {
            state = state.apply(&e.transfer(cfg));
            out.push(state.clone());
        }
        out
    }

    /// Product of all element transfers, last element leftmost.
    pub fn total_transfer(&self, cfg: &LcrConfig) -> CMatrix {
        self.elements
            .iter()
            .fold(identity(4), |acc, e| e.transfer(cfg) * acc)
    }
}

/// Postselected 2×2 operator from input polarization to output polarization.
pub fn conditional_operator(layout: &OpticalLayout, cfg: &LcrConfig) -> Result<CMatrix> {
    if cfg.kraus_index().is_none() {
        return Err(Error::LayoutMismatch(format!(
            "LCR settings ({:?}, {:?}) are not anti-correlated",
            cfg.lcr1, cfg.lcr2
        )));
    }
    if layout.lcr_count() != 2 {
        return Err(Error::LayoutMismatch(format!(
            "layout drives {} LCRs, expected 2",
            layout.lcr_count()
        )));
    }
    let t = layout.total_transfer(cfg);
    Ok(CMatrix::from_fn(2, 2, |out, inp| t[(out, inp)]))
}

/// Random switching between the two Kraus configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSchedule {
    pub p_kraus0: f64,
    pub p_kraus1: f64,
    /// Nominal LCR switching rate. Shots are drawn i.i.d., so this is recorded
    /// only.
    pub rate_hz: f64,
}

impl SwitchingSchedule {
    pub fn optimal(p: DampingParams) -> Self {
        let (p0, p1) = p.kraus_probabilities();
        Self {
            p_kraus0: p0,
            p_kraus1: p1,
            rate_hz: 10.0,
        }
    }
}

/// Gaussian setup imperfections: HWP angle jitter (degrees) and fractional
/// LCR retardance error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetupPerturbation {
    pub hwp_sigma_deg: f64,
    pub lcr_sigma: f64,
    pub seed: u64,
}

impl Default for SetupPerturbation {
    fn default() -> Self {
        Self {
            hwp_sigma_deg: 1.0,
            lcr_sigma: 0.01,
            seed: 0,
        }
    }
}

/// One realisation of the setup imperfections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDraw {
    /// Offsets for the input, upper, first lower and second lower HWPs (radians).
    pub hwp_offsets: [f64; 4],
    pub lcr_errors: [f64; 2],
}

impl PerturbationDraw {
    pub const NONE: PerturbationDraw = PerturbationDraw {
        hwp_offsets: [0.0; 4],
        lcr_errors: [0.0; 2],
    };
}

impl SetupPerturbation {
    pub fn none() -> Self {
        Self {
            hwp_sigma_deg: 0.0,
            lcr_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.hwp_sigma_deg) && ok(self.lcr_sigma) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "perturbation sigmas must be finite and non-negative: {self:?}"
            )))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.hwp_sigma_deg == 0.0 && self.lcr_sigma == 0.0
    }

    /// Draw number `index` from the stream rooted at `self.seed`.
    pub fn draw(&self, index: u64) -> PerturbationDraw {
        self.draw_from(&mut stream_rng(self.seed, index))
    }

    pub fn draw_from<R: Rng + ?Sized>(&self, rng: &mut R) -> PerturbationDraw {
        let sigma = self.hwp_sigma_deg.to_radians();
        let mut gauss = || rng.sample::<f64, _>(StandardNormal);
        let hwp_offsets = std::array::from_fn(|_| sigma * gauss());
        let lcr_errors = std::array::from_fn(|_| self.lcr_sigma * gauss());
        PerturbationDraw {
            hwp_offsets,
            lcr_errors,
        }
    }
}

/// The channel as realised by one (possibly perturbed) setup: the two
/// conditional operators and their switching probabilities.
#[derive(Debug, Clone)]
pub struct RealizedChannel {
    pub operators: [CMatrix; 2],
    pub schedule: SwitchingSchedule,
}

impl RealizedChannel {
    pub fn new(p: DampingParams, draw: &PerturbationDraw) -> Self {
        let layout = OpticalLayout::canonical(p).with_hwp_offsets(&draw.hwp_offsets);
        let operators = [0, 1].map(|i| {
            conditional_operator(
                &layout,
                &LcrConfig::for_kraus(i).with_errors(draw.lcr_errors),
            )
            .expect("canonical layout with anti-correlated LCRs")
        });
        Self {
            operators,
            schedule: SwitchingSchedule::optimal(p),
        }
    }

    pub fn ideal(p: DampingParams) -> Self {
        Self::new(p, &PerturbationDraw::NONE)
    }

    fn weights(&self) -> [f64; 2] {
        [self.schedule.p_kraus0, self.schedule.p_kraus1]
    }

    /// Per-configuration acceptance probabilities `Tr[M_i ρ M_i†]` for a
    /// one-qubit input.
    pub fn acceptance(&self, rho: &CMatrix) -> [f64; 2] {
        self.operators
            .clone()
            .map(|m| (&m * rho * m.adjoint()).trace().re.clamp(0.0, 1.0))
    }

    /// Exact survival probability for a one-qubit input.
    pub fn transmission(&self, rho: &CMatrix) -> f64 {
        let q = self.acceptance(rho);
        let w = self.weights();
        w[0] * q[0] + w[1] * q[1]
    }

    /// Unnormalised `Σ_i p_i (M_i ⊗ I) ρ (M_i ⊗ I)†` on a two-qubit input.
    pub fn apply_unnormalized(&self, rho_ab: &CMatrix) -> CMatrix {
        let w = self.weights();
        let mut out = CMatrix::zeros(4, 4);
        for (m, wi) in self.operators.iter().zip(w) {
            if wi == 0.0 {
                continue;
            }
            let lifted = crate::qmath::tensor(m, &identity(2));
            out += (&lifted * rho_ab * lifted.adjoint()).scale(wi);
        }
        hermitian_part(&out)
    }

    /// Postselected two-photon output state.
    pub fn apply_postselected(&self, rho_ab: &DensityMatrix) -> Result<DensityMatrix> {
        DensityMatrix::from_unnormalized(self.apply_unnormalized(rho_ab.matrix()))
    }
}

const SHOTS_PER_STREAM: u64 = 1 << 16;

/// Monte-Carlo estimate of the channel's survival probability.
///
/// The setup is drawn once from `perturb` (if any). Each shot picks a Kraus
/// configuration with its switching probability and survives with probability
/// `Tr[M_i ρ M_i†]`.
pub fn simulate_transmission(
    p: DampingParams,
    rho_in: &DensityMatrix,
    shots: u64,
    perturb: Option<&SetupPerturbation>,
    seed: u64,
) -> Result<f64> {
    simulate_transmission_with(p, rho_in, shots, perturb, seed, Exec::default())
}

pub fn simulate_transmission_with(
    p: DampingParams,
    rho_in: &DensityMatrix,
    shots: u64,
    perturb: Option<&SetupPerturbation>,
    seed: u64,
    exec: Exec,
) -> Result<f64> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be positive".into()));
    }
    if rho_in.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: "single-qubit input".into(),
            found: format!("dim {}", rho_in.dim()),
        });
    }
    let draw = match perturb {
        Some(pert) => {
            pert.validate()?;
            pert.draw(0)
        }
        None => PerturbationDraw::NONE,
    };
    let channel = RealizedChannel::new(p, &draw);
    let q = channel.acceptance(rho_in.matrix());
    let p0 = channel.schedule.p_kraus0;

    let streams = shots.div_ceil(SHOTS_PER_STREAM);
    let accepted: u64 = map_indexed(exec, streams as usize, |s| {
        let s = s as u64;
        let n = SHOTS_PER_STREAM.min(shots - s * SHOTS_PER_STREAM);
        let mut rng = stream_rng(seed, s);
        let mut hits = 0u64;
        for _ in 0..n {
            let cfg = if rng.random::<f64>() < p0 { 0 } else { 1 };
            if rng.random::<f64>() < q[cfg] {
                hits += 1;
            }
        }
        hits
    })
    .into_iter()
    .sum();
    Ok(accepted as f64 / shots as f64)
}

/// Exact acceptance probability for a pure input `ψ` under the ideal setup.
pub fn analytic_acceptance(p: DampingParams, psi: &[C64; 2]) -> f64 {
    let channel = RealizedChannel::ideal(p);
    let v = nalgebra::DVector::from_column_slice(psi);
    let norm = v.norm_squared();
    let w = channel.weights();
    channel
        .operators
        .iter()
        .zip(w)
        .map(|(m, wi)| wi * (m * &v).norm_squared())
        .sum::<f64>()
        / norm
}

/// Mean and spread of transmission and tangle over perturbed setups at one
/// grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub params: DampingParams,
    pub transmission: Summary,
    pub tangle: Summary,
}

/// Sensitivity of transmission and output tangle to setup imperfections.
///
/// `input` is the two-photon state whose first photon passes the channel;
/// transmission uses its reduced state on that photon.
pub fn sensitivity_band(
    grid: &[DampingParams],
    perturb: &SetupPerturbation,
    trials: usize,
    input: &DensityMatrix,
) -> Result<Vec<BandPoint>> {
    sensitivity_band_with(grid, perturb, trials, input, Exec::default())
}

pub fn sensitivity_band_with(
    grid: &[DampingParams],
    perturb: &SetupPerturbation,
    trials: usize,
    input: &DensityMatrix,
    exec: Exec,
) -> Result<Vec<BandPoint>> {
    if trials < 2 {
        return Err(Error::InvalidArgument(
            "sensitivity band needs trials >= 2".into(),
        ));
    }
    perturb.validate()?;
    if input.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: "two-qubit input".into(),
            found: format!("dim {}", input.dim()),
        });
    }
    let reduced = partial_trace_matrix(input.matrix(), Subsystem::B)?;
    let evaluate = |p: DampingParams, draw: &PerturbationDraw| -> (f64, f64) {
        let ch = RealizedChannel::new(p, draw);
        let t = ch.transmission(&reduced);
        let tau = ch
            .apply_postselected(input)
            .map(|rho| tangle(&rho))
            .unwrap_or(0.0);
        (t, tau)
    };

    grid.iter()
        .enumerate()
        .map(|(g, &p)| {
            let values: Vec<(f64, f64)> = if perturb.is_zero() {
                vec![evaluate(p, &PerturbationDraw::NONE); trials]
            } else {
                let point_seed = stream_seed(perturb.seed, g as u64);
                map_indexed(exec, trials, |t| {
                    let draw = perturb.draw_from(&mut stream_rng(point_seed, t as u64));
                    evaluate(p, &draw)
                })
            };
            let ts: Vec<f64> = values.iter().map(|v| v.0).collect();
            let taus: Vec<f64> = values.iter().map(|v| v.1).collect();
            Ok(BandPoint {
                params: p,
                transmission: summarize(&ts)?,
                tangle: summarize(&taus)?,
            })
        })
        .collect()
}

/// Ideal Kraus operators normalised to unit largest singular value; `None`
/// for a vanishing operator.
pub fn normalized_kraus(p: DampingParams) -> [Option<CMatrix>; 2] {
    let k = damping_kraus(p);
    std::array::from_fn(|i| {
        let a = &k.operators()[i];
        let n = crate::qmath::spectral_norm(a);
        (n > 1e-12).then(|| a.unscale(n))
    })
}
