//! Propagation of error sources through the pointing model.
//!
//! Every function takes the full (normalized) plant and one output index. A
//! source may drive several plant inputs (one per source axis); each input is
//! a separate term, and the terms are independent, so variances add while
//! means add linearly.

use crate::error::{Error, Result};
use crate::linsys::{self, hz_to_rad, rad_to_hz, FrequencyGrid, ResponseEvaluator, StateSpace};
use crate::metrics::{apply_metric_rv, MetricIndex, RationalWeight};
use crate::sources::{Distribution, ErrorSource, Moments, SourceKind};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Scaling between a white PSD level `G0` and the output variance:
/// `σ² = κ · G0 · ‖W H‖₂²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdConvention {
    /// κ = 1: `G0` is the intensity of the white noise driving the model.
    #[default]
    Unit,
    /// κ = 1/2: `G0` is a one-sided level per Hz.
    OneSidedHz,
    /// κ = 1/(2π): `G0` is a level per rad/s.
    RadPerSec,
}

impl PsdConvention {
    pub fn kappa(self) -> f64 {
        match self {
            PsdConvention::Unit => 1.0,
            PsdConvention::OneSidedHz => 0.5,
            PsdConvention::RadPerSec => 1.0 / (2.0 * PI),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    ScalarMoments,
    PsdOnGrid,
    SampleSet,
}

/// Variances of a random-process contribution by the two independent routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub lyapunov_variance: f64,
    pub grid_variance: f64,
    pub relative_difference: f64,
}

/// Output PSD (one-sided, per Hz) on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPsd {
    pub frequencies_hz: Vec<f64>,
    pub values: Vec<f64>,
}

/// One term: the share of a source driving a single plant input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub input: String,
    pub mean: f64,
    pub std: f64,
    pub shape: Distribution,
    pub frequency_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub source_name: String,
    pub kind: SourceKind,
    /// Output (pointing axis) index.
    pub axis: usize,
    pub mean: f64,
    pub std: f64,
    pub representation: Representation,
    pub metric_applied: MetricIndex,
    pub terms: Vec<Term>,
    pub cross_check: Option<CrossCheck>,
    pub psd: Option<OutputPsd>,
    pub flags: Vec<String>,
}

impl ContributionRecord {
    fn from_terms(src: &ErrorSource, axis: usize, metric: MetricIndex, terms: Vec<Term>) -> Self {
        let mean = terms.iter().map(|t| t.mean).sum();
        let std = terms.iter().map(|t| t.std * t.std).sum::<f64>().sqrt();
        Self {
            source_name: src.name.clone(),
            kind: src.kind,
            axis,
            mean,
            std,
            representation: Representation::ScalarMoments,
            metric_applied: metric,
            terms,
            cross_check: None,
            psd: None,
            flags: Vec::new(),
        }
    }

    pub fn zero(src: &ErrorSource, axis: usize, metric: MetricIndex) -> Self {
        Self::from_terms(src, axis, metric, Vec::new())
    }
}

/// Source axes that are present, with their plant input index.
fn bound_inputs(plant: &StateSpace, src: &ErrorSource) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (k, ax) in src.axes.iter().enumerate() {
        if let Some(ax) = ax {
            let i = plant.input_index(&ax.channel).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "source `{}` axis {k}: unknown plant input `{}`",
                    src.name, ax.channel
                ))
            })?;
            out.push((k, i));
        }
    }
    Ok(out)
}

fn check_output(plant: &StateSpace, axis: usize) -> Result<()> {
    if axis >= plant.noutputs() {
        return Err(Error::Dimension(format!("output {axis} >= {}", plant.noutputs())));
    }
    Ok(())
}

/// Time-constant (and drift) sources: `mean_out = dc · mean`, `std_out = |dc| · std`.
pub fn transfer_time_constant(
    plant: &StateSpace,
    src: &ErrorSource,
    axis: usize,
    window: Option<f64>,
) -> Result<ContributionRecord> {
    check_output(plant, axis)?;
    let dc = linsys::dc_gain(plant)?;
    let mut terms = Vec::new();
    for (k, i) in bound_inputs(plant, src)? {
        let m = src.moments_in_window(k, window)?;
        let g = dc[(axis, i)];
        terms.push(Term {
            input: plant.inputs[i].clone(),
            mean: g * m.mean,
            std: g.abs() * m.std,
            shape: src.axis(k)?.law.distribution(),
            frequency_hz: None,
        });
    }
    Ok(ContributionRecord::from_terms(src, axis, MetricIndex::Ape, terms))
}

/// Random variable of unknown spectrum: the peak gain bounds the spread.
pub fn transfer_rv_unknown_spectrum(plant: &StateSpace, src: &ErrorSource, axis: usize) -> Result<ContributionRecord> {
    check_output(plant, axis)?;
    let dc = linsys::dc_gain(plant)?;
    let mut terms = Vec::new();
    for (k, i) in bound_inputs(plant, src)? {
        let m = src.moments(k)?;
        let ch = plant.select(&[i], &[axis])?;
        let gain = if m.std > 0.0 { linsys::hinf_norm(&ch, 1e-6)? } else { 0.0 };
        terms.push(Term {
            input: plant.inputs[i].clone(),
            mean: dc[(axis, i)] * m.mean,
            std: gain * m.std,
            shape: src.axis(k)?.law.distribution(),
            frequency_hz: None,
        });
    }
    Ok(ContributionRecord::from_terms(src, axis, MetricIndex::Ape, terms))
}

/// Sinusoidal source: `std_out = |H(i2πf)| · A/√2`, zero mean.
pub fn transfer_periodic(plant: &StateSpace, src: &ErrorSource, axis: usize) -> Result<ContributionRecord> {
    check_output(plant, axis)?;
    if !linsys::is_stable(plant)? {
        return Err(Error::Unstable {
            context: format!("periodic transfer of `{}`", src.name),
            max_real: linsys::max_real_pole(plant)?,
        });
    }
    let eval = ResponseEvaluator::new(plant);
    let mut terms = Vec::new();
    for (k, i) in bound_inputs(plant, src)? {
        let m = src.moments(k)?;
        let f = src
            .frequency_hz(k)?
            .ok_or_else(|| Error::InvalidInput(format!("source `{}` has no frequency", src.name)))?;
        let h = eval.at_hz(f)?[(axis, i)].norm();
        terms.push(Term {
            input: plant.inputs[i].clone(),
            mean: 0.0,
            std: h * m.std,
            shape: Distribution::Bimodal,
            frequency_hz: Some(f),
        });
    }
    Ok(ContributionRecord::from_terms(src, axis, MetricIndex::Ape, terms))
}

/// Default grid: 2000 log points over [1e-4, 1e4] Hz plus tenfold density
/// within a decade of every pole with damping below 0.02.
pub fn default_grid(model: &StateSpace) -> Result<FrequencyGrid> {
    let base = FrequencyGrid::logspace(1e-4, 1e4, 2000)?;
    let per_decade = 2000.0 / 8.0 * 10.0;
    let mut extra = Vec::new();
    for l in linsys::eigenvalues(&model.a)? {
        let wn = l.norm();
        if wn == 0.0 || l.im <= 0.0 {
            continue;
        }
        let zeta = -l.re / wn;
        if zeta < 0.02 {
            let fc = rad_to_hz(l.im);
            let (a, b) = ((fc / 10f64.sqrt()).log10(), (fc * 10f64.sqrt()).log10());
            let n = (per_decade * (b - a)).ceil() as usize;
            extra.extend((0..=n).map(|j| 10f64.powf(a + (b - a) * j as f64 / n as f64)));
        }
    }
    base.merged(&extra)
}

/// Appends `ωr/(s+ωr)` with `ωr = 1e3 · ρ(A)` when `g` has feedthrough.
fn make_strictly_proper(g: &StateSpace) -> Result<(StateSpace, bool)> {
    if g.is_strictly_proper() {
        return Ok((g.clone(), false));
    }
    let rho = linsys::eigenvalues(&g.a)?.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let wr = 1e3 * rho;
    let m = g.noutputs();
    let mut roll = StateSpace::from_transfer_function(&[wr], &[1.0, wr])?;
    for _ in 1..m {
        let one = StateSpace::from_transfer_function(&[wr], &[1.0, wr])?;
        roll = linsys::append(&roll, &one)?;
    }
    let out = linsys::series(g, &roll)?;
    Ok((out, true))
}

/// Stationary random process with white PSD through the metric-weighted
/// channel. The variance is computed by the Lyapunov equation and by
/// trapezoid integration of the output PSD; a disagreement above 2% is an
/// error.
pub fn transfer_random_process(
    plant: &StateSpace,
    weight: &RationalWeight,
    src: &ErrorSource,
    axis: usize,
    grid: Option<&FrequencyGrid>,
    convention: PsdConvention,
) -> Result<ContributionRecord> {
    check_output(plant, axis)?;
    let kappa = convention.kappa();
    let mut terms = Vec::new();
    let mut flags = Vec::new();
    let (mut var_lyap, mut var_grid) = (0.0, 0.0);
    let mut psd_total: Option<OutputPsd> = None;
    for (k, i) in bound_inputs(plant, src)? {
        let g0 = src.psd_model(k)?.white_level().unwrap_or(0.0);
        let ch = plant.select(&[i], &[axis])?;
        let wh = linsys::series(&ch, &weight.filter)?;
        let (wh, rolled) = make_strictly_proper(&wh)?;
        if rolled {
            flags.push(format!("rolloff_appended:{}", plant.inputs[i]));
        }
        let grid_owned;
        let grid = match grid {
            Some(g) => g,
            None => {
                grid_owned = default_grid(&wh)?;
                &grid_owned
            }
        };
        let h2 = linsys::h2_norm(&wh)?;
        let v_lyap = kappa * g0 * h2 * h2;
        let eval = ResponseEvaluator::new(&wh);
        let psd: Vec<f64> = grid
            .points
            .iter()
            .map(|&f| eval.at_hz(f).map(|h| 2.0 * kappa * g0 * h[(0, 0)].norm_sqr()))
            .collect::<Result<_>>()?;
        let v_grid = grid.trapezoid(&psd);
        var_lyap += v_lyap;
        var_grid += v_grid;
        match &mut psd_total {
            Some(p) if p.frequencies_hz == grid.points => {
                for (acc, v) in p.values.iter_mut().zip(&psd) {
                    *acc += v;
                }
            }
            Some(_) => {}
            None => {
                psd_total = Some(OutputPsd {
                    frequencies_hz: grid.points.clone(),
                    values: psd,
                })
            }
        }
        terms.push(Term {
            input: plant.inputs[i].clone(),
            mean: 0.0,
            std: v_lyap.sqrt(),
            shape: Distribution::Gaussian,
            frequency_hz: None,
        });
    }
    let rel = if var_lyap > 0.0 {
        (var_grid - var_lyap).abs() / var_lyap
    } else if var_grid > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if rel > 0.02 {
        return Err(Error::Numerical(format!(
            "source `{}` axis {axis}: Lyapunov variance {var_lyap:.6e} and grid variance {var_grid:.6e} differ by {:.2}%",
            src.name,
            100.0 * rel
        )));
    }
    let mut rec = ContributionRecord::from_terms(src, axis, weight.index, terms);
    rec.representation = Representation::PsdOnGrid;
    rec.cross_check = Some(CrossCheck {
        lyapunov_variance: var_lyap,
        grid_variance: var_grid,
        relative_difference: rel,
    });
    rec.psd = psd_total;
    rec.flags = flags;
    Ok(rec)
}

/// Lyapunov-route variance of a random-process contribution, without the
/// grid cross-check or PSD.
pub fn random_process_variance(
    plant: &StateSpace,
    weight: &RationalWeight,
    src: &ErrorSource,
    axis: usize,
    convention: PsdConvention,
) -> Result<f64> {
    check_output(plant, axis)?;
    let mut var = 0.0;
    for (k, i) in bound_inputs(plant, src)? {
        let g0 = src.psd_model(k)?.white_level().unwrap_or(0.0);
        let ch = plant.select(&[i], &[axis])?;
        let (wh, _) = make_strictly_proper(&linsys::series(&ch, &weight.filter)?)?;
        let h2 = linsys::h2_norm(&wh)?;
        var += convention.kappa() * g0 * h2 * h2;
    }
    Ok(var)
}

/// Applies the pointing index to a scalar-moment record.
pub fn apply_metric(rec: &ContributionRecord, index: MetricIndex, window: Option<f64>) -> Result<ContributionRecord> {
    if rec.kind == SourceKind::RandomProcess {
        return Err(Error::InvalidInput(
            "random-process records are weighted during transfer".into(),
        ));
    }
    let mut terms = Vec::with_capacity(rec.terms.len());
    for t in &rec.terms {
        let m = apply_metric_rv(index, window, Moments::new(t.mean, t.std), rec.kind, t.frequency_hz)?;
        // a constant term that loses its mean and keeps a spread is no longer a delta
        let shape = if t.shape == Distribution::Delta && m.std > 0.0 {
            Distribution::Gaussian
        } else {
            t.shape
        };
        terms.push(Term {
            mean: m.mean,
            std: m.std,
            shape,
            ..t.clone()
        });
    }
    let mut out = rec.clone();
    out.mean = terms.iter().map(|t| t.mean).sum();
    out.std = terms.iter().map(|t| t.std * t.std).sum::<f64>().sqrt();
    out.terms = terms;
    out.metric_applied = index;
    Ok(out)
}

/// Transfer and metric steps for one source on one output.
#[allow(clippy::too_many_arguments)]
pub fn contribution(
    plant: &StateSpace,
    weight: &RationalWeight,
    src: &ErrorSource,
    axis: usize,
    index: MetricIndex,
    window: Option<f64>,
    grid: Option<&FrequencyGrid>,
    convention: PsdConvention,
) -> Result<ContributionRecord> {
    match src.kind {
        SourceKind::RandomProcess => transfer_random_process(plant, weight, src, axis, grid, convention),
        SourceKind::TimeConstant | SourceKind::Drift => {
            apply_metric(&transfer_time_constant(plant, src, axis, window)?, index, window)
        }
        SourceKind::RandomVariable => apply_metric(&transfer_rv_unknown_spectrum(plant, src, axis)?, index, window),
        SourceKind::Periodic => apply_metric(&transfer_periodic(plant, src, axis)?, index, window),
    }
}

/// Gain of a SISO channel at frequency `f` (Hz).
pub fn gain_at_hz(g: &StateSpace, f: f64) -> Result<f64> {
    Ok(crate::linsys::ResponseEvaluator::new(g).at_rad(hz_to_rad(f))?[(0, 0)].norm())
}
