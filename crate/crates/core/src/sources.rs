//! Pointing error sources and their statistics.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, StandardUniform};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Name of the generator behind every sampled quantity.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), one stream per source/shard";

pub const AXES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    TimeConstant,
    RandomVariable,
    RandomProcess,
    Periodic,
    Drift,
}

impl SourceKind {
    pub fn label(self) -> &'static str {
        match self {
            SourceKind::TimeConstant => "time_constant",
            SourceKind::RandomVariable => "random_variable",
            SourceKind::RandomProcess => "random_process",
            SourceKind::Periodic => "periodic",
            SourceKind::Drift => "drift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Delta,
    Gaussian,
    Uniform,
    Bimodal,
}

/// A statistical parameter that may itself vary across the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Param {
    Fixed { value: f64 },
    Gaussian { mean: f64, std: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl Param {
    pub fn fixed(value: f64) -> Self {
        Param::Fixed { value }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Param::Fixed { value } => value,
            Param::Gaussian { mean, .. } => mean,
            Param::Uniform { lower, upper } => 0.5 * (lower + upper),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Param::Fixed { .. } => 0.0,
            Param::Gaussian { std, .. } => std * std,
            Param::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
        }
    }

    pub fn second_moment(&self) -> f64 {
        self.variance() + self.mean().powi(2)
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Param::Fixed { value } => value,
            Param::Gaussian { mean, std } => mean + std * standard_normal(rng),
            Param::Uniform { lower, upper } => lower + (upper - lower) * rng.sample::<f64, _>(StandardUniform),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            Param::Fixed { value } => value.is_finite(),
            Param::Gaussian { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            Param::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && lower <= upper,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid parameter for {what}: {self:?}")))
        }
    }

    fn nonnegative(&self) -> bool {
        match *self {
            Param::Fixed { value } => value >= 0.0,
            Param::Gaussian { mean, std } => mean >= 0.0 && std == 0.0,
            Param::Uniform { lower, .. } => lower >= 0.0,
        }
    }
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

/// Per-axis law of a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    /// Constant value (time-constant bias, or drift rate).
    Delta { value: Param },
    Gaussian { mean: Param, std: Param },
    Uniform { lower: Param, upper: Param },
    /// White one-sided PSD level per Hz.
    WhitePsd { level: Param },
    /// Sinusoid of given amplitude and frequency; random phase.
    Sinusoid { amplitude: Param, frequency_hz: f64 },
}

impl Law {
    pub fn distribution(&self) -> Distribution {
        match self {
            Law::Delta { .. } => Distribution::Delta,
            Law::Gaussian { .. } | Law::WhitePsd { .. } => Distribution::Gaussian,
            Law::Uniform { .. } => Distribution::Uniform,
            Law::Sinusoid { .. } => Distribution::Bimodal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    /// Plant input the source drives on this axis.
    pub channel: String,
    pub law: Law,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSource {
    pub name: String,
    pub kind: SourceKind,
    pub units: String,
    /// One entry per pointing axis; `None` where the source is absent.
    pub axes: Vec<Option<AxisSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub const ZERO: Moments = Moments { mean: 0.0, std: 0.0 };

    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }
}

impl ErrorSource {
    pub fn new(name: impl Into<String>, kind: SourceKind, units: impl Into<String>, axes: Vec<Option<AxisSpec>>) -> Result<Self> {
        let s = Self {
            name: name.into(),
            kind,
            units: units.into(),
            axes,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |m: String| Error::InvalidInput(format!("source `{}`: {m}", self.name));
        for (i, ax) in self.axes.iter().enumerate() {
            let Some(ax) = ax else { continue };
            let compatible = matches!(
                (self.kind, &ax.law),
                (SourceKind::TimeConstant | SourceKind::RandomVariable, Law::Delta { .. } | Law::Gaussian { .. } | Law::Uniform { .. })
                    | (SourceKind::RandomProcess, Law::WhitePsd { .. })
                    | (SourceKind::Periodic, Law::Sinusoid { .. })
                    | (SourceKind::Drift, Law::Delta { .. })
            );
            if !compatible {
                return Err(ctx(format!("axis {i}: law {:?} not allowed for kind {:?}", ax.law.distribution(), self.kind)));
            }
            match ax.law {
                Law::Delta { value } => value.validate("value")?,
                Law::Gaussian { mean, std } => {
                    mean.validate("mean")?;
                    std.validate("std")?;
                    if !std.nonnegative() {
                        return Err(ctx(format!("axis {i}: negative standard deviation")));
                    }
                }
                Law::Uniform { lower, upper } => {
                    lower.validate("lower")?;
                    upper.validate("upper")?;
                    if lower.mean() > upper.mean() {
                        return Err(ctx(format!("axis {i}: uniform lower > upper")));
                    }
                }
                Law::WhitePsd { level } => {
                    level.validate("psd level")?;
                    if !level.nonnegative() {
                        return Err(ctx(format!("axis {i}: negative PSD level")));
                    }
                }
                Law::Sinusoid { amplitude, frequency_hz } => {
                    amplitude.validate("amplitude")?;
                    if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
                        return Err(ctx(format!("axis {i}: periodic frequency must be > 0")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn axis(&self, axis: usize) -> Result<&AxisSpec> {
        self.axes
            .get(axis)
            .and_then(|a| a.as_ref())
            .ok_or_else(|| Error::InvalidInput(format!("source `{}` has no entry on axis {axis}", self.name)))
    }

    pub fn distribution(&self, axis: usize) -> Result<Distribution> {
        Ok(self.axis(axis)?.law.distribution())
    }

    /// Mean and standard deviation of the source value on one axis.
    ///
    /// Random processes report zero moments here; their spread is produced
    /// by the transfer analysis. Drift needs a window, see [`Self::moments_in_window`].
    pub fn moments(&self, axis: usize) -> Result<Moments> {
        let ax = self.axis(axis)?;
        Ok(match ax.law {
            Law::Delta { value } => {
                if self.kind == SourceKind::Drift {
                    return Err(Error::InvalidInput(format!(
                        "drift source `{}` needs a metric window for its moments",
                        self.name
                    )));
                }
                Moments::new(value.mean(), value.variance().sqrt())
            }
            Law::Gaussian { mean, std } => Moments::new(mean.mean(), (mean.variance() + std.second_moment()).sqrt()),
            Law::Uniform { lower, upper } => {
                let m = 0.5 * (lower.mean() + upper.mean());
                let width_sq = lower.variance() + upper.variance() + (upper.mean() - lower.mean()).powi(2);
                let var = width_sq / 12.0 + 0.25 * (lower.variance() + upper.variance());
                Moments::new(m, var.sqrt())
            }
            Law::WhitePsd { .. } => Moments::ZERO,
            Law::Sinusoid { amplitude, .. } => Moments::new(0.0, (amplitude.second_moment() / 2.0).sqrt()),
        })
    }

    /// Like [`Self::moments`], with drift rates spread uniformly over a window:
    /// mean 0, std `|d| * window / sqrt(12)`.
    pub fn moments_in_window(&self, axis: usize, window: Option<f64>) -> Result<Moments> {
        if self.kind != SourceKind::Drift {
            return self.moments(axis);
        }
        let Law::Delta { value } = self.axis(axis)?.law else {
            unreachable!("validated drift law")
        };
        let dt = window.ok_or_else(|| {
            Error::InvalidInput(format!("drift source `{}` requires a metric window", self.name))
        })?;
        Ok(Moments::new(0.0, value.second_moment().sqrt() * dt / 12f64.sqrt()))
    }

    pub fn frequency_hz(&self, axis: usize) -> Result<Option<f64>> {
        Ok(match self.axis(axis)?.law {
            Law::Sinusoid { frequency_hz, .. } => Some(frequency_hz),
            _ => None,
        })
    }

    /// White one-sided PSD of a random-process source.
    pub fn psd_model(&self, axis: usize) -> Result<Psd> {
        if self.kind != SourceKind::RandomProcess {
            return Err(Error::InvalidInput(format!("source `{}` is not a random process", self.name)));
        }
        match self.axis(axis)?.law {
            Law::WhitePsd { level } => Ok(Psd::White { level: level.mean() }),
            _ => unreachable!("validated random-process law"),
        }
    }

    /// `n` i.i.d. draws of the source value on one axis.
    pub fn sample(&self, axis: usize, n: usize, seed: u64) -> Result<SampleSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = self.sample_with(axis, n, &mut rng)?;
        Ok(SampleSet {
            values,
            source_name: self.name.clone(),
            seed,
        })
    }

    pub fn sample_with<R: Rng>(&self, axis: usize, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be >= 1".into()));
        }
        let ax = self.axis(axis)?;
        if self.kind == SourceKind::RandomProcess {
            return Err(Error::InvalidInput(format!(
                "random process `{}` is sampled from its transferred statistics, not directly",
                self.name
            )));
        }
        if self.kind == SourceKind::Drift {
            return Err(Error::InvalidInput(format!("drift `{}` has no standalone law", self.name)));
        }
        let law = ax.law;
        Ok((0..n).map(|_| draw_law(&law, rng)).collect())
    }
}

fn draw_law<R: Rng>(law: &Law, rng: &mut R) -> f64 {
    match *law {
        Law::Delta { value } => value.draw(rng),
        Law::Gaussian { mean, std } => {
            let m = mean.draw(rng);
            let s = std.draw(rng);
            m + s * standard_normal(rng)
        }
        Law::Uniform { lower, upper } => {
            let a = lower.draw(rng);
            let b = upper.draw(rng);
            a + (b - a) * rng.sample::<f64, _>(StandardUniform)
        }
        Law::Sinusoid { amplitude, .. } => {
            let a = amplitude.draw(rng);
            a * (2.0 * PI * rng.sample::<f64, _>(StandardUniform)).sin()
        }
        Law::WhitePsd { .. } => unreachable!("random processes are not sampled directly"),
    }
}

/// Draws from the bimodal law of a sinusoid with amplitude `a`.
pub fn draw_bimodal<R: Rng>(a: f64, rng: &mut R) -> f64 {
    a * (2.0 * PI * rng.sample::<f64, _>(StandardUniform)).sin()
}

pub fn draw_gaussian<R: Rng>(mean: f64, std: f64, rng: &mut R) -> f64 {
    mean + std * standard_normal(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub source_name: String,
    pub seed: u64,
}

/// One-sided power spectral density per Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Psd {
    White { level: f64 },
}

impl Psd {
    pub fn eval(&self, _f_hz: f64) -> f64 {
        match *self {
            Psd::White { level } => level,
        }
    }

    pub fn white_level(&self) -> Option<f64> {
        match *self {
            Psd::White { level } => Some(level),
        }
    }
}

/// Deterministic per-stream generator: `seed` selects the key, `stream` the
/// independent ChaCha stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
