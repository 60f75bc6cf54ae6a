//! Worst-case H2, H∞ and DC gain over a box of real parameters.
//!
//! The search evaluates the nominal point, every corner of the box when there
//! are at most 1024 of them, then polishes from several starts (best corners,
//! nominal, Latin-hypercube points) with a box-projected Nelder–Mead. The
//! best value found is a lower bound on the true worst case. The reported
//! upper bound inflates it by the last relative improvement of the local
//! searches; it is a heuristic, not a certificate.

use crate::error::{Error, Result};
use crate::linsys::{self, hz_to_rad, ResponseEvaluator, StateSpace};
use crate::optim::{latin_hypercube, nelder_mead, NelderMeadOptions};
use crate::sources::stream_rng;
use crate::spacecraft::UncertainParameter;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;

pub use crate::pipeline::wc_budget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Variance,
    Gain,
    DcGain,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Gain, Criterion::Variance, Criterion::DcGain];

    pub fn label(self) -> &'static str {
        match self {
            Criterion::Variance => "WC Variance",
            Criterion::Gain => "WC Gain",
            Criterion::DcGain => "WC DC Gain",
        }
    }
}

pub const UPPER_BOUND_NOTE: &str = "heuristic, not certified";
pub const CORNER_LIMIT: usize = 1024;
const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcOptions {
    /// Cap on objective evaluations (corners included).
    pub budget: usize,
    pub starts: usize,
    pub seed: u64,
}

impl Default for WcOptions {
    fn default() -> Self {
        Self {
            budget: 2000,
            starts: 16,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcResult {
    pub criterion: Criterion,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub upper_bound_note: String,
    pub nominal: f64,
    pub config: BTreeMap<String, f64>,
    /// Worst point in parameter order.
    pub point: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
struct Best {
    f: f64,
    x: Vec<f64>,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

impl Best {
    fn none() -> Self {
        Self {
            f: f64::NEG_INFINITY,
            x: Vec::new(),
        }
    }

    /// Larger value wins; values within `TIE_RTOL` go to the lexicographically smaller point.
    fn offer(&mut self, f: f64, x: &[f64]) {
        if self.x.is_empty() {
            *self = Best { f, x: x.to_vec() };
            return;
        }
        let tie = f == self.f || (f.is_finite() && self.f.is_finite() && (f - self.f).abs() <= TIE_RTOL * f.abs().max(self.f.abs()));
        if tie {
            if lex(x, &self.x) == Ordering::Less {
                *self = Best { f, x: x.to_vec() };
            }
        } else if f > self.f {
            *self = Best { f, x: x.to_vec() };
        }
    }

    fn merge(mut self, other: Best) -> Best {
        if !other.x.is_empty() {
            self.offer(other.f, &other.x);
        }
        self
    }
}

/// Objective outcome: a finite value, an unbounded point (instability or a
/// pole at the origin), or a hard failure that aborts the search.
enum Outcome {
    Value(f64),
    Unbounded(Error),
    Failed(Error),
}

fn classify(r: Result<f64>) -> Outcome {
    match r {
        Ok(v) if v.is_nan() => Outcome::Failed(Error::Numerical("objective returned NaN".into())),
        Ok(v) => Outcome::Value(v),
        Err(e @ Error::Unstable { .. }) | Err(e @ Error::Singular(_)) => Outcome::Unbounded(e),
        Err(e) => Outcome::Failed(e),
    }
}

#[derive(Default)]
struct Trace {
    unbounded: Option<(Vec<f64>, Error)>,
    failed: Option<Error>,
}

impl Trace {
    fn absorb(&mut self, other: Trace) {
        if let Some((x, e)) = other.unbounded {
            match &self.unbounded {
                Some((y, _)) if lex(y, &x) != Ordering::Greater => {}
                _ => self.unbounded = Some((x, e)),
            }
        }
        if self.failed.is_none() {
            self.failed = other.failed;
        }
    }
}

struct Scaled<'a> {
    params: &'a [UncertainParameter],
    free: Vec<usize>,
}

impl<'a> Scaled<'a> {
    fn new(params: &'a [UncertainParameter]) -> Self {
        let free = params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.upper > p.lower)
            .map(|(i, _)| i)
            .collect();
        Self { params, free }
    }

    fn to_point(&self, u: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.params.iter().map(|p| p.nominal).collect();
        for (&i, &ui) in self.free.iter().zip(u) {
            let p = &self.params[i];
            x[i] = (p.lower + ui.clamp(0.0, 1.0) * (p.upper - p.lower)).clamp(p.lower, p.upper);
        }
        x
    }

    fn nominal_u(&self) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| {
                let p = &self.params[i];
                (p.nominal - p.lower) / (p.upper - p.lower)
            })
            .collect()
    }
}

fn evaluate<F>(objective: &F, x: &[f64], best: &mut Best, trace: &mut Trace) -> f64
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if trace.failed.is_some() {
        return 0.0;
    }
    match classify(objective(x)) {
        Outcome::Value(v) => {
            best.offer(v, x);
            v
        }
        Outcome::Unbounded(e) => {
            best.offer(f64::INFINITY, x);
            trace.absorb(Trace {
                unbounded: Some((x.to_vec(), e)),
                failed: None,
            });
            f64::INFINITY
        }
        Outcome::Failed(e) => {
            trace.failed = Some(e);
            0.0
        }
    }
}

fn describe(params: &[UncertainParameter], x: &[f64]) -> String {
    params
        .iter()
        .zip(x)
        .map(|(p, v)| format!("{}={}", p.name, v))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Maximizes `objective` over the box. Unstable points score +∞ and end the
/// search with a robust-stability error naming the offending point.
pub fn maximize<F>(criterion: Criterion, params: &[UncertainParameter], objective: F, opts: &WcOptions) -> Result<WcResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    for p in params {
        p.validate()?;
    }
    if opts.budget == 0 {
        return Err(Error::InvalidInput("worst-case budget must be positive".into()));
    }
    let sc = Scaled::new(params);
    let d = sc.free.len();
    let nominal_x = sc.to_point(&sc.nominal_u());
    let mut best = Best::none();
    let mut trace = Trace::default();
    let nominal = evaluate(&objective, &nominal_x, &mut best, &mut trace);
    let mut evaluations = 1usize;
    if let Some(e) = trace.failed.take() {
        return Err(e);
    }
    if let Some((_, e)) = &trace.unbounded {
        return Err(Error::Unstable {
            context: format!("nominal point is not admissible: {e}"),
            max_real: f64::NAN,
        });
    }

    let mut corner_vals: Vec<(f64, Vec<f64>)> = Vec::new();
    if d > 0 && d <= 63 && (1usize << d) <= CORNER_LIMIT {
        let n = 1usize << d;
        let results: Vec<(f64, Vec<f64>, Best, Trace)> = (0..n)
            .into_par_iter()
            .map(|mask| {
                let u: Vec<f64> = (0..d).map(|k| ((mask >> k) & 1) as f64).collect();
                let x = sc.to_point(&u);
                let mut b = Best::none();
                let mut t = Trace::default();
                let v = evaluate(&objective, &x, &mut b, &mut t);
                (v, u, b, t)
            })
            .collect();
        for (v, u, b, t) in results {
            best = best.merge(b);
            trace.absorb(t);
            corner_vals.push((v, u));
        }
        evaluations += n;
    }

    let mut gap: f64 = 0.0;
    let mut any_converged = d == 0;
    let remaining = opts.budget.saturating_sub(evaluations);
    if d > 0 && opts.starts > 0 && remaining >= 2 * (d + 1) && trace.failed.is_none() {
        let starts = opts.starts.min(remaining / (2 * (d + 1))).max(1);
        let per_start = remaining / starts;
        let mut seeds: Vec<Vec<f64>> = vec![sc.nominal_u()];
        corner_vals.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| lex(&a.1, &b.1)));
        for (_, u) in corner_vals.iter().take(starts / 4) {
            if seeds.len() < starts {
                seeds.push(u.clone());
            }
        }
        if seeds.len() < starts {
            let mut rng = stream_rng(opts.seed, 0x5743);
            seeds.extend(latin_hypercube(&mut rng, starts - seeds.len(), d));
        }
        let nm = NelderMeadOptions {
            max_evals: per_start.saturating_sub(d + 1).max(d + 2),
            f_tol: 1e-10,
            x_tol: 1e-8,
            initial_step: 0.1,
        };
        let bounds = vec![(0.0, 1.0); d];
        let runs: Vec<(Best, Trace, usize, f64, bool)> = seeds
            .par_iter()
            .map(|u0| {
                let mut b = Best::none();
                let mut t = Trace::default();
                let r = nelder_mead(
                    |u| {
                        let x = sc.to_point(u);
                        -evaluate(&objective, &x, &mut b, &mut t)
                    },
                    u0,
                    Some(&bounds),
                    &nm,
                );
                (b, t, r.evals, r.final_gap, r.converged)
            })
            .collect();
        for (b, t, ev, g, conv) in runs {
            best = best.merge(b);
            trace.absorb(t);
            evaluations += ev;
            gap = gap.max(g);
            any_converged |= conv;
        }
    }

    if let Some(e) = trace.failed {
        return Err(e);
    }
    if let Some((x, e)) = trace.unbounded {
        let max_real = match e {
            Error::Unstable { max_real, .. } => max_real,
            _ => 0.0,
        };
        return Err(Error::Unstable {
            context: format!(
                "robust-stability violation during {} search at [{}]: {e}",
                criterion.label(),
                describe(params, &x)
            ),
            max_real,
        });
    }
    let lower = best.f;
    let config = params
        .iter()
        .zip(&best.x)
        .map(|(p, v)| (p.name.clone(), *v))
        .collect();
    Ok(WcResult {
        criterion,
        lower_bound: lower,
        upper_bound: lower * (1.0 + gap),
        upper_bound_note: UPPER_BOUND_NOTE.into(),
        nominal,
        config,
        point: best.x,
        evaluations,
        converged: any_converged && lower >= nominal,
    })
}

/// Worst-case H2 norm of a strictly proper family.
pub fn wc_variance<F>(family: F, params: &[UncertainParameter], opts: &WcOptions) -> Result<WcResult>
where
    F: Fn(&[f64]) -> Result<StateSpace> + Sync,
{
    maximize(Criterion::Variance, params, |x| linsys::h2_norm(&family(x)?), opts)
}

/// Worst-case peak gain, or the gain at a fixed frequency (Hz) when given.
pub fn wc_gain<F>(family: F, params: &[UncertainParameter], frequency_hz: Option<f64>, opts: &WcOptions) -> Result<WcResult>
where
    F: Fn(&[f64]) -> Result<StateSpace> + Sync,
{
    maximize(
        Criterion::Gain,
        params,
        |x| {
            let g = family(x)?;
            match frequency_hz {
                Some(f) => gain_at(&g, f),
                None => linsys::hinf_norm(&g, 1e-6),
            }
        },
        opts,
    )
}

/// Worst-case largest singular value of the DC gain.
pub fn wc_dc_gain<F>(family: F, params: &[UncertainParameter], opts: &WcOptions) -> Result<WcResult>
where
    F: Fn(&[f64]) -> Result<StateSpace> + Sync,
{
    maximize(Criterion::DcGain, params, |x| dc_sigma(&family(x)?), opts)
}

/// Largest singular value of `G(i2πf)` for a stable model.
pub fn gain_at(g: &StateSpace, f: f64) -> Result<f64> {
    if !linsys::is_stable(g)? {
        return Err(Error::Unstable {
            context: "gain evaluation".into(),
            max_real: linsys::max_real_pole(g)?,
        });
    }
    ResponseEvaluator::new(g).sigma_max_rad(hz_to_rad(f))
}

pub fn dc_sigma(g: &StateSpace) -> Result<f64> {
    let dc = linsys::dc_gain(g)?;
    if dc.nrows() == 1 || dc.ncols() == 1 {
        return Ok(dc.norm());
    }
    Ok(dc.singular_values().max())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(num: &[f64], den: &[f64]) -> StateSpace {
        StateSpace::from_transfer_function(num, den).unwrap()
    }

    fn p(name: &str, nominal: f64, lo: f64, hi: f64) -> UncertainParameter {
        UncertainParameter::new(name, nominal, lo, hi).unwrap()
    }

    #[test]
    fn first_order_variance_at_upper_corner() {
        let r = wc_variance(|x| Ok(tf(&[x[0]], &[1.0, 1.0])), &[p("k", 1.5, 1.0, 2.0)], &WcOptions::default()).unwrap();
        assert!((r.lower_bound - 2f64.sqrt()).abs() < 1e-9);
        assert!((r.point[0] - 2.0).abs() < 1e-12);
        assert!(r.upper_bound >= r.lower_bound);
        assert!(r.lower_bound >= r.nominal);
        assert!(r.evaluations <= 2000);
    }

    #[test]
    fn empty_box_is_nominal() {
        let r = wc_variance(|x| Ok(tf(&[x[0]], &[1.0, 1.0])), &[p("k", 1.5, 1.5, 1.5)], &WcOptions::default()).unwrap();
        assert_eq!(r.lower_bound, r.nominal);
        assert!((r.lower_bound - 1.5 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.evaluations, 1);
    }

    #[test]
    fn static_gain() {
        let r = wc_gain(|x| Ok(StateSpace::scalar_gain(x[0])), &[p("k", 1.0, 0.5, 1.5)], None, &WcOptions::default()).unwrap();
        assert!((r.lower_bound - 1.5).abs() < 1e-9);
    }

    #[test]
    fn dc_corner() {
        let params = [p("k", 1.0, 0.5, 1.5), p("a", 1.5, 1.0, 2.0)];
        let r = wc_dc_gain(|x| Ok(tf(&[x[0]], &[1.0, x[1]])), &params, &WcOptions::default()).unwrap();
        assert_eq!(r.lower_bound, 1.5);
        assert_eq!(r.point, vec![1.5, 1.0]);
    }

    #[test]
    fn flat_objective_takes_smallest_point() {
        let params = [p("k", 1.0, 0.5, 1.5), p("a", 1.5, 1.0, 2.0)];
        let r = wc_dc_gain(|x| Ok(tf(&[x[1]], &[1.0, x[1]])), &params, &WcOptions::default()).unwrap();
        assert!((r.lower_bound - r.nominal).abs() < 1e-12);
        assert_eq!(r.point, vec![0.5, 1.0]);
    }

    #[test]
    fn fixed_frequency_gain_aligns_resonance() {
        let fd = 3.8;
        let wd = hz_to_rad(fd);
        let fam = |x: &[f64]| Ok(tf(&[1.0], &[1.0, 2.0 * 0.005 * x[0], x[0] * x[0]]));
        let params = [p("w0", 20.0, 16.0, 30.0)];
        let r = wc_gain(fam, &params, Some(fd), &WcOptions::default()).unwrap();
        // brute-force grid oracle
        let mut grid_best = (0.0, 0.0);
        for k in 0..=200_000 {
            let w0 = 16.0 + 14.0 * k as f64 / 200_000.0;
            let g = 1.0 / ((w0 * w0 - wd * wd).powi(2) + (2.0 * 0.005 * w0 * wd).powi(2)).sqrt();
            if g > grid_best.0 {
                grid_best = (g, w0);
            }
        }
        assert!((r.lower_bound - grid_best.0).abs() / grid_best.0 < 1e-5);
        assert!((r.point[0] - wd).abs() / wd < 1e-3);
    }

    #[test]
    fn unstable_point_reported() {
        let fam = |x: &[f64]| Ok(tf(&[1.0], &[1.0, x[0]]));
        let e = wc_variance(fam, &[p("a", 1.0, -0.5, 2.0)], &WcOptions::default()).unwrap_err();
        match e {
            Error::Unstable { context, .. } => assert!(context.contains("a=-0.5"), "{context}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reproducible() {
        let params = [p("a", 1.0, 0.5, 2.0), p("b", 0.3, 0.1, 0.9), p("c", 2.0, 1.0, 3.0)];
        let fam = |x: &[f64]| Ok(tf(&[x[2], 1.0], &[1.0, 2.0 * x[1] * x[0], x[0] * x[0]]));
        let o = WcOptions {
            budget: 600,
            starts: 6,
            seed: 9,
        };
        let a = wc_gain(fam, &params, None, &o).unwrap();
        let b = wc_gain(fam, &params, None, &o).unwrap();
        assert_eq!(a, b);
        assert!(a.evaluations <= 600);
    }
}
