//! Pointing-index weighting (APE, MPE, RPE).
//!
//! With `u = π f Δt` the exact weights are `F_MPE = sinc²(u)` and
//! `F_RPE = 1 - sinc²(u)`. For composition with LTI models the weights are
//! approximated by rational filters in the normalized variable `x = s Δt`,
//! so one fit serves every window length.

use crate::error::{Error, Result};
use crate::linsys::{self, hz_to_rad, FrequencyGrid, StateSpace};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::sources::{Moments, SourceKind};
use nalgebra::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricIndex {
    Ape,
    Mpe,
    Rpe,
}

impl MetricIndex {
    pub fn label(self) -> &'static str {
        match self {
            MetricIndex::Ape => "APE",
            MetricIndex::Mpe => "MPE",
            MetricIndex::Rpe => "RPE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpretation {
    Temporal,
    Ensemble,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub index: MetricIndex,
    /// Window Δt in seconds.
    pub window: Option<f64>,
    pub confidence: f64,
    /// Per-axis requirement e_r, in `requirement_units`.
    pub requirement: Vec<f64>,
    pub requirement_units: String,
    pub interpretation: Interpretation,
}

impl MetricSpec {
    pub fn validate(&self) -> Result<()> {
        if self.index != MetricIndex::Ape {
            match self.window {
                Some(dt) if dt > 0.0 && dt.is_finite() => {}
                _ => {
                    return Err(Error::schema(
                        "metric.window",
                        format!("{} needs a positive window", self.index.label()),
                    ))
                }
            }
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::schema("metric.confidence", "must lie in (0, 1)"));
        }
        if self.requirement.is_empty() || self.requirement.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::schema("metric.requirement", "every axis requirement must be > 0"));
        }
        Ok(())
    }
}

fn sinc_sq(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 45.0
    } else {
        (u.sin() / u).powi(2)
    }
}

/// `1 - sinc²(u)` without cancellation at small `u`.
fn one_minus_sinc_sq(u: f64) -> f64 {
    if u.abs() < 1e-2 {
        let u2 = u * u;
        u2 / 3.0 - 2.0 * u2 * u2 / 45.0 + u2 * u2 * u2 / 315.0
    } else {
        1.0 - sinc_sq(u)
    }
}

/// Exact weight at frequency `f` (Hz) for window `dt` (s).
pub fn exact_weight(index: MetricIndex, dt: f64, f: f64) -> f64 {
    let u = PI * f * dt;
    match index {
        MetricIndex::Ape => 1.0,
        MetricIndex::Mpe => sinc_sq(u),
        MetricIndex::Rpe => one_minus_sinc_sq(u),
    }
}

/// Smooth MPE envelope `(1 + u²) / (1 + 4u²/3 + 2u⁴)`.
///
/// It agrees with `sinc²(u)` to second order at small `u` and with its
/// oscillation average `1 / (2u²)` at large `u`. The zeros of `sinc²` make a
/// relative fit to the exact weight meaningless, so MPE fit errors are
/// measured against this envelope.
pub fn mpe_envelope(u: f64) -> f64 {
    let u2 = u * u;
    (1.0 + u2) / (1.0 + 4.0 * u2 / 3.0 + 2.0 * u2 * u2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalWeight {
    pub index: MetricIndex,
    pub window: Option<f64>,
    pub order: usize,
    /// Max relative deviation of `|W|²` from the target over the fit band.
    pub fit_error: f64,
    pub filter: StateSpace,
    /// Fitted coefficients in the normalized variable `x = sΔt`.
    pub normalized_params: Vec<f64>,
}

impl RationalWeight {
    pub fn unity() -> Self {
        Self {
            index: MetricIndex::Ape,
            window: None,
            order: 0,
            fit_error: 0.0,
            filter: StateSpace::scalar_gain(1.0),
            normalized_params: Vec::new(),
        }
    }
}

pub const FIT_START_ORDER: usize = 2;
pub const FIT_MAX_ORDER: usize = 6;

// Warm starts (log coefficients) for the normalized fits, orders 2, 4, 6.
const RPE_SEEDS: [&[f64]; 3] = [
    &[-0.003_514, 1.546_886, 1.947_138, 2.787_560],
    &[-0.000_516, 1.856_480, 1.680_595, 3.839_365, 1.692_808, 3.911_226, 2.192_397, 3.170_428],
    &[
        -0.000_176, 2.075_769, 2.341_526, 3.434_711, 2.024_726, 4.147_896, 1.388_181, 4.962_126, 1.412_446,
        4.963_091, 2.049_960, 4.032_234,
    ],
];

/// Normalized rational model. `p` holds log coefficients:
/// `[g, z0, a1, a0, (n1, n0, d1, d0)...]` for
/// `g · [x] (x + z0) Π(x² + n1 x + n0) / ((x² + a1 x + a0) Π(x² + d1 x + d0))`,
/// with the leading `x` present for RPE (high-pass) only.
fn model_mag_sq(p: &[f64], highpass: bool, w: f64) -> f64 {
    let x = Complex::new(0.0, w);
    let e: Vec<f64> = p.iter().map(|v| v.exp()).collect();
    let mut num = Complex::new(e[0], 0.0) * (x + e[1]);
    if highpass {
        num *= x;
    }
    let mut den = x * x + x * e[2] + e[3];
    for s in e[4..].chunks(4) {
        num *= x * x + x * s[0] + s[1];
        den *= x * x + x * s[2] + s[3];
    }
    (num / den).norm_sqr()
}

fn target(index: MetricIndex, w: f64) -> f64 {
    // w = 2π f Δt, so u = π f Δt = w / 2
    let u = 0.5 * w;
    match index {
        MetricIndex::Ape => 1.0,
        MetricIndex::Mpe => mpe_envelope(u),
        MetricIndex::Rpe => one_minus_sinc_sq(u),
    }
}

fn mpe_seed() -> Vec<f64> {
    // exact spectral factor of the envelope at order 2
    let s2 = 2f64.sqrt();
    vec![s2.ln(), 2f64.ln(), (8.0 / 3.0 + 4.0 * s2).sqrt().ln(), (2.0 * s2).ln()]
}

fn seed_for(index: MetricIndex, order: usize) -> Vec<f64> {
    let k = (order - FIT_START_ORDER) / 2;
    match index {
        MetricIndex::Rpe => RPE_SEEDS[k].to_vec(),
        _ => {
            let mut p = mpe_seed();
            // extra sections start as near-cancelling pole/zero pairs
            for i in 0..k {
                let w0 = (2.0 + 2.0 * i as f64).ln() * 2.0;
                p.extend_from_slice(&[1.0, w0, 1.05, w0]);
            }
            p
        }
    }
}

/// Fits `|W(i2πf)|²` to the weight of `index` over `band` (Hz), raising the
/// order from 2 up to 6 until the max relative error is within `max_err`.
pub fn fit_rational_weight(index: MetricIndex, dt: f64, band: &FrequencyGrid, max_err: f64) -> Result<RationalWeight> {
    if index == MetricIndex::Ape {
        return Ok(RationalWeight::unity());
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("{} weight needs a positive window", index.label())));
    }
    let lo = band.points[0] * dt;
    let hi = band.points[band.len() - 1] * dt;
    if lo > 1e-3 * (1.0 + 1e-9) || hi < 1e2 * (1.0 - 1e-9) {
        return Err(Error::InvalidInput(format!(
            "fit band must cover [1e-3, 1e2]/dt, got [{lo:.3e}, {hi:.3e}]/dt"
        )));
    }
    // normalized angular frequencies, thinned to at most 600 log-spaced points
    let ws: Vec<f64> = {
        let all: Vec<f64> = band.points.iter().map(|f| hz_to_rad(f * dt)).collect();
        if all.len() <= 600 {
            all
        } else {
            (0..600).map(|i| all[i * (all.len() - 1) / 599]).collect()
        }
    };
    let targets: Vec<f64> = ws.iter().map(|&w| target(index, w)).collect();
    let highpass = index == MetricIndex::Rpe;
    let objective = |p: &[f64]| -> f64 {
        ws.iter()
            .zip(&targets)
            .filter(|(_, t)| **t > 1e-6)
            .map(|(&w, &t)| (model_mag_sq(p, highpass, w) / t).ln().powi(2))
            .sum()
    };
    let max_rel = |p: &[f64]| -> f64 {
        ws.iter()
            .zip(&targets)
            .filter(|(_, t)| **t > 1e-6)
            .map(|(&w, &t)| (model_mag_sq(p, highpass, w) / t - 1.0).abs())
            .fold(0.0, f64::max)
    };

    let mut last_err = f64::INFINITY;
    let mut order = FIT_START_ORDER;
    while order <= FIT_MAX_ORDER {
        let seed = seed_for(index, order);
        let mut rng = ChaCha8Rng::seed_from_u64(order as u64);
        let opts = NelderMeadOptions {
            max_evals: 4000 * seed.len(),
            f_tol: 1e-14,
            x_tol: 1e-10,
            initial_step: 0.05,
        };
        let mut best = (seed.clone(), objective(&seed));
        for start in 0..4 {
            let x0: Vec<f64> = if start == 0 {
                seed.clone()
            } else {
                seed.iter().map(|v| v + 0.05 * (rng.random::<f64>() - 0.5)).collect()
            };
            let mut r = nelder_mead(&objective, &x0, None, &opts);
            // restart from the result to escape a collapsed simplex
            let r2 = nelder_mead(&objective, &r.x, None, &opts);
            if r2.f < r.f {
                r = r2;
            }
            if r.f < best.1 {
                best = (r.x, r.f);
            }
        }
        let err = max_rel(&best.0);
        last_err = err;
        if err <= max_err {
            let filter = realize(&best.0, highpass, dt)?;
            return Ok(RationalWeight {
                index,
                window: Some(dt),
                order,
                fit_error: err,
                filter,
                normalized_params: best.0,
            });
        }
        order += 2;
    }
    Err(Error::Numerical(format!(
        "{} weight fit: error {last_err:.4} exceeds {max_err} at order {FIT_MAX_ORDER}",
        index.label()
    )))
}

/// Cascade of second-order sections in `s`, each time-scaled by `dt`.
fn realize(p: &[f64], highpass: bool, dt: f64) -> Result<StateSpace> {
    let e: Vec<f64> = p.iter().map(|v| v.exp()).collect();
    let (g, z0, a1, a0) = (e[0], e[1], e[2], e[3]);
    let head_num = if highpass {
        vec![g, g * z0 / dt, 0.0]
    } else {
        vec![0.0, g / dt, g * z0 / (dt * dt)]
    };
    let mut sys = StateSpace::from_transfer_function(&head_num, &[1.0, a1 / dt, a0 / (dt * dt)])?;
    for s in e[4..].chunks(4) {
        let sec = StateSpace::from_transfer_function(
            &[1.0, s[0] / dt, s[1] / (dt * dt)],
            &[1.0, s[2] / dt, s[3] / (dt * dt)],
        )?;
        sys = linsys::series(&sys, &sec)?;
    }
    if !linsys::is_stable(&sys)? {
        return Err(Error::Numerical("fitted weight is unstable".into()));
    }
    Ok(sys)
}

/// Applies a pointing index to the moments of a random-variable-type
/// contribution.
///
/// Time-constant terms vanish under RPE and pass under MPE; periodic terms
/// at frequency `f` are scaled by `sqrt(F(f))` and lose their mean.
pub fn apply_metric_rv(
    index: MetricIndex,
    dt: Option<f64>,
    m: Moments,
    kind: SourceKind,
    frequency_hz: Option<f64>,
) -> Result<Moments> {
    if index == MetricIndex::Ape {
        return Ok(m);
    }
    let dt = dt.ok_or_else(|| Error::InvalidInput(format!("{} needs a window", index.label())))?;
    match kind {
        SourceKind::RandomProcess => Err(Error::InvalidInput(
            "random processes are weighted through the rational filter".into(),
        )),
        SourceKind::Drift => Ok(m),
        SourceKind::Periodic => {
            let f = frequency_hz.ok_or_else(|| Error::InvalidInput("periodic term needs a frequency".into()))?;
            Ok(Moments::new(0.0, m.std * exact_weight(index, dt, f).sqrt()))
        }
        SourceKind::TimeConstant => Ok(match index {
            MetricIndex::Rpe => Moments::ZERO,
            _ => m,
        }),
        // Unknown spectrum: the bias part drops out of RPE, the spread is kept.
        SourceKind::RandomVariable => Ok(match (index, frequency_hz) {
            (_, Some(f)) => Moments::new(0.0, m.std * exact_weight(index, dt, f).sqrt()),
            (MetricIndex::Rpe, None) => Moments::new(0.0, m.std),
            _ => m,
        }),
    }
}
