//! Statistical combination of contributions into a per-axis budget.

use crate::error::{Error, Result};
use crate::sources::{stream_rng, Distribution, SourceKind};
use crate::transfer::{ContributionRecord, Term};
use rand::Rng;
use rand_distr::{StandardNormal, StandardUniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const MIN_SAMPLES: usize = 10_000;
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Simplified,
    Advanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    TimeConstant,
    RandomVariable,
    RandomProcess,
    Periodic,
    Drift,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::TimeConstant,
        Category::RandomVariable,
        Category::RandomProcess,
        Category::Periodic,
        Category::Drift,
    ];

    pub fn of(kind: SourceKind) -> Self {
        match kind {
            SourceKind::TimeConstant => Category::TimeConstant,
            SourceKind::RandomVariable => Category::RandomVariable,
            SourceKind::RandomProcess => Category::RandomProcess,
            SourceKind::Periodic => Category::Periodic,
            SourceKind::Drift => Category::Drift,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::TimeConstant => "Time constant",
            Category::RandomVariable => "Random variable",
            Category::RandomProcess => "Random process",
            Category::Periodic => "Periodic",
            Category::Drift => "Drift",
        }
    }
}

/// Pairs of source names treated as fully correlated. Correlation is
/// transitive: connected sources form one group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub pairs: Vec<(String, String)>,
}

impl CorrelationSpec {
    pub fn validate(&self, known: &[&str]) -> Result<()> {
        for (a, b) in &self.pairs {
            for n in [a, b] {
                if !known.contains(&n.as_str()) {
                    return Err(Error::InvalidInput(format!("correlation names unknown source `{n}`")));
                }
            }
            if a == b {
                return Err(Error::InvalidInput(format!("source `{a}` correlated with itself")));
            }
        }
        Ok(())
    }

    /// Group id per name (smallest index of its connected component).
    pub fn groups(&self, names: &[&str]) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..names.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            let mut j = i;
            while p[j] != r {
                let next = p[j];
                p[j] = r;
                j = next;
            }
            r
        }
        for (a, b) in &self.pairs {
            let ia: Vec<usize> = names.iter().enumerate().filter(|(_, n)| **n == a).map(|(i, _)| i).collect();
            let ib: Vec<usize> = names.iter().enumerate().filter(|(_, n)| **n == b).map(|(i, _)| i).collect();
            for &x in &ia {
                for &y in &ib {
                    let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                    if rx != ry {
                        parent[rx.max(ry)] = rx.min(ry);
                    }
                }
            }
        }
        (0..names.len()).map(|i| find(&mut parent, i)).collect()
    }
}

/// Two-sided Gaussian confidence factor `Φ⁻¹((1 + P_c) / 2)`.
pub fn confidence_factor(p_c: f64) -> Result<f64> {
    if !(p_c > 0.0 && p_c < 1.0) {
        return Err(Error::InvalidInput(format!("confidence {p_c} outside (0, 1)")));
    }
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(n.inverse_cdf(0.5 * (1.0 + p_c)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBudget {
    pub axis: usize,
    pub mean: f64,
    pub std: f64,
    pub total: f64,
    pub requirement: f64,
    /// `requirement - total`; negative when the requirement is violated.
    pub margin: f64,
    pub subtotals: BTreeMap<Category, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub method: Method,
    pub confidence: f64,
    pub n_p: f64,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
    pub quantile_convention: String,
    pub axes: Vec<AxisBudget>,
    pub contributions: Vec<ContributionRecord>,
    /// Per-axis empirical CDF of |total error| (advanced method only).
    pub cdf: Vec<Vec<(f64, f64)>>,
}

impl BudgetReport {
    pub fn totals(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.total).collect()
    }

    pub fn subtotal(&self, axis: usize, cat: Category) -> f64 {
        self.axes[axis].subtotals.get(&cat).copied().unwrap_or(0.0)
    }
}

pub const QUANTILE_CONVENTION: &str = "two-sided: quantile of |total error|";

fn axis_count(contribs: &[ContributionRecord], requirement: &[f64]) -> usize {
    contribs.iter().map(|c| c.axis + 1).max().unwrap_or(0).max(requirement.len())
}

fn check_names(contribs: &[ContributionRecord], corr: &CorrelationSpec) -> Result<()> {
    let names: Vec<&str> = contribs.iter().map(|c| c.source_name.as_str()).collect();
    corr.validate(&names)
}

/// `(μ, σ)` of a set of records: means add; standard deviations add linearly
/// inside a correlation group and in quadrature across groups.
pub fn combine_moments(records: &[&ContributionRecord], corr: &CorrelationSpec) -> (f64, f64) {
    let names: Vec<&str> = records.iter().map(|c| c.source_name.as_str()).collect();
    let groups = corr.groups(&names);
    let mut sigma_by_group: BTreeMap<usize, f64> = BTreeMap::new();
    let mut mean = 0.0;
    for (r, g) in records.iter().zip(&groups) {
        mean += r.mean;
        *sigma_by_group.entry(*g).or_insert(0.0) += r.std;
    }
    let std = sigma_by_group.values().map(|s| s * s).sum::<f64>().sqrt();
    (mean, std)
}

/// `ε = |μ| + n_p σ` per axis.
pub fn combine_simplified(
    contribs: &[ContributionRecord],
    corr: &CorrelationSpec,
    p_c: f64,
    requirement: &[f64],
) -> Result<BudgetReport> {
    check_names(contribs, corr)?;
    let n_p = confidence_factor(p_c)?;
    let n_axes = axis_count(contribs, requirement);
    let mut axes = Vec::with_capacity(n_axes);
    for axis in 0..n_axes {
        let on_axis: Vec<&ContributionRecord> = contribs.iter().filter(|c| c.axis == axis).collect();
        let (mean, std) = combine_moments(&on_axis, corr);
        let total = mean.abs() + n_p * std;
        let mut subtotals = BTreeMap::new();
        for cat in Category::ALL {
            let sel: Vec<&ContributionRecord> = on_axis.iter().copied().filter(|c| Category::of(c.kind) == cat).collect();
            if sel.is_empty() {
                continue;
            }
            let (m, s) = combine_moments(&sel, corr);
            subtotals.insert(cat, m.abs() + n_p * s);
        }
        let req = requirement.get(axis).copied().unwrap_or(1.0);
        axes.push(AxisBudget {
            axis,
            mean,
            std,
            total,
            requirement: req,
            margin: req - total,
            subtotals,
        });
    }
    Ok(BudgetReport {
        method: Method::Simplified,
        confidence: p_c,
        n_p,
        n_samples: None,
        seed: None,
        quantile_convention: QUANTILE_CONVENTION.into(),
        axes,
        contributions: contribs.to_vec(),
        cdf: Vec::new(),
    })
}

/// Inverse CDF of a term's law at `u` in (0, 1); monotone in `u`.
fn term_quantile(t: &Term, u: f64, normal: &Normal) -> f64 {
    match t.shape {
        Distribution::Delta => t.mean,
        Distribution::Gaussian => t.mean + t.std * normal.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16)),
        Distribution::Uniform => t.mean + t.std * 3f64.sqrt() * (2.0 * u - 1.0),
        Distribution::Bimodal => t.mean + t.std * 2f64.sqrt() * (PI * (u - 0.5)).sin(),
    }
}

pub(crate) fn term_draw<R: Rng>(t: &Term, rng: &mut R) -> f64 {
    match t.shape {
        Distribution::Delta => t.mean,
        Distribution::Gaussian => {
            let z: f64 = rng.sample(StandardNormal);
            t.mean + t.std * z
        }
        Distribution::Uniform => {
            let u: f64 = rng.sample(StandardUniform);
            t.mean + t.std * 3f64.sqrt() * (2.0 * u - 1.0)
        }
        Distribution::Bimodal => {
            let u: f64 = rng.sample(StandardUniform);
            t.mean + t.std * 2f64.sqrt() * (2.0 * PI * u).sin()
        }
    }
}

/// Sampling plan for one axis: records grouped by correlation.
struct AxisPlan<'a> {
    groups: Vec<Vec<&'a ContributionRecord>>,
}

impl<'a> AxisPlan<'a> {
    fn new(on_axis: &[&'a ContributionRecord], corr: &CorrelationSpec) -> Self {
        let names: Vec<&str> = on_axis.iter().map(|c| c.source_name.as_str()).collect();
        let gid = corr.groups(&names);
        let mut by: BTreeMap<usize, Vec<&ContributionRecord>> = BTreeMap::new();
        for (r, g) in on_axis.iter().zip(gid) {
            by.entry(g).or_default().push(r);
        }
        Self {
            groups: by.into_values().collect(),
        }
    }
}

/// Draws `n` realizations of the per-category sums and the total for one axis.
fn sample_axis(
    plan: &AxisPlan<'_>,
    cats: &[Category],
    n: usize,
    seed: u64,
    axis: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n_chunks = n.div_ceil(CHUNK);
    let chunks: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(n - c * CHUNK);
            let mut total = vec![0.0; len];
            let mut per_cat = vec![vec![0.0; len]; cats.len()];
            for (g, members) in plan.groups.iter().enumerate() {
                let stream = ((axis as u64) << 48) | ((g as u64) << 24) | c as u64;
                let mut rng = stream_rng(seed, stream);
                let max_terms = members.iter().map(|r| r.terms.len()).max().unwrap_or(0);
                for k in 0..len {
                    if members.len() == 1 {
                        let r = members[0];
                        let ci = cats.iter().position(|x| *x == Category::of(r.kind)).expect("category listed");
                        let mut v = 0.0;
                        for t in &r.terms {
                            v += term_draw(t, &mut rng);
                        }
                        total[k] += v;
                        per_cat[ci][k] += v;
                    } else {
                        // comonotone coupling: one uniform per term position
                        for ti in 0..max_terms {
                            let u: f64 = rng.sample(StandardUniform);
                            for r in members {
                                if let Some(t) = r.terms.get(ti) {
                                    let v = term_quantile(t, u, &normal);
                                    let ci = cats.iter().position(|x| *x == Category::of(r.kind)).expect("category listed");
                                    total[k] += v;
                                    per_cat[ci][k] += v;
                                }
                            }
                        }
                    }
                }
            }
            (total, per_cat)
        })
        .collect();
    let mut total = Vec::with_capacity(n);
    let mut per_cat = vec![Vec::with_capacity(n); cats.len()];
    for (t, pc) in chunks {
        total.extend(t);
        for (dst, src) in per_cat.iter_mut().zip(pc) {
            dst.extend(src);
        }
    }
    (total, per_cat)
}

/// Sorted absolute values, the empirical CDF support.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_abs(values: &[f64]) -> Self {
        let mut sorted: Vec<f64> = values.par_iter().map(|v| v.abs()).collect();
        sorted.par_sort_unstable_by(|a, b| a.total_cmp(b));
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `inf{x : F(x) ≥ p}` with linear interpolation between order statistics.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        if n == 0 {
            return 0.0;
        }
        let h = (n as f64 - 1.0) * p.clamp(0.0, 1.0);
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = h - lo as f64;
        self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo])
    }

    /// Down-sampled `(x, F(x))` pairs, last point `F = 1`.
    pub fn curve(&self, points: usize) -> Vec<(f64, f64)> {
        let n = self.sorted.len();
        if n == 0 {
            return Vec::new();
        }
        let points = points.clamp(2, n);
        (0..points)
            .map(|i| {
                let k = if i + 1 == points { n - 1 } else { i * (n - 1) / (points - 1) };
                (self.sorted[k], (k + 1) as f64 / n as f64)
            })
            .collect()
    }
}

/// Sample-based combination: the total error per realization is the sum of
/// one draw per contribution; `ε` is the `P_c` quantile of its magnitude.
pub fn combine_advanced(
    contribs: &[ContributionRecord],
    corr: &CorrelationSpec,
    p_c: f64,
    n_samples: usize,
    seed: u64,
    requirement: &[f64],
) -> Result<BudgetReport> {
    check_names(contribs, corr)?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "advanced combination needs at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let n_p = confidence_factor(p_c)?;
    let n_axes = axis_count(contribs, requirement);
    let mut axes = Vec::with_capacity(n_axes);
    let mut cdf = Vec::with_capacity(n_axes);
    for axis in 0..n_axes {
        let on_axis: Vec<&ContributionRecord> = contribs.iter().filter(|c| c.axis == axis).collect();
        let (mean, std) = combine_moments(&on_axis, corr);
        let mut cats: Vec<Category> = on_axis.iter().map(|c| Category::of(c.kind)).collect();
        cats.sort();
        cats.dedup();
        let plan = AxisPlan::new(&on_axis, corr);
        let (total, per_cat) = sample_axis(&plan, &cats, n_samples, seed, axis);
        let ecdf = EmpiricalCdf::from_abs(&total);
        let eps = ecdf.quantile(p_c);
        let mut subtotals = BTreeMap::new();
        for (cat, v) in cats.iter().zip(&per_cat) {
            subtotals.insert(*cat, EmpiricalCdf::from_abs(v).quantile(p_c));
        }
        let req = requirement.get(axis).copied().unwrap_or(1.0);
        axes.push(AxisBudget {
            axis,
            mean,
            std,
            total: eps,
            requirement: req,
            margin: req - eps,
            subtotals,
        });
        cdf.push(ecdf.curve(1001));
    }
    Ok(BudgetReport {
        method: Method::Advanced,
        confidence: p_c,
        n_p,
        n_samples: Some(n_samples),
        seed: Some(seed),
        quantile_convention: QUANTILE_CONVENTION.into(),
        axes,
        contributions: contribs.to_vec(),
        cdf,
    })
}

/// Per-category values for one axis under the chosen method.
pub fn category_subtotals(
    contribs: &[ContributionRecord],
    p_c: f64,
    method: Method,
    axis: usize,
    n_samples: usize,
    seed: u64,
) -> Result<BTreeMap<Category, f64>> {
    let corr = CorrelationSpec::default();
    let on_axis: Vec<ContributionRecord> = contribs.iter().filter(|c| c.axis == axis).cloned().collect();
    let report = match method {
        Method::Simplified => combine_simplified(&on_axis, &corr, p_c, &[])?,
        Method::Advanced => combine_advanced(&on_axis, &corr, p_c, n_samples, seed, &[])?,
    };
    let mut out: BTreeMap<Category, f64> = Category::ALL.iter().map(|c| (*c, 0.0)).collect();
    if let Some(a) = report.axes.get(axis) {
        for (k, v) in &a.subtotals {
            out.insert(*k, *v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricIndex;
    use crate::transfer::Representation;

    pub(crate) fn record(name: &str, kind: SourceKind, mean: f64, std: f64, shape: Distribution) -> ContributionRecord {
        ContributionRecord {
            source_name: name.into(),
            kind,
            axis: 0,
            mean,
            std,
            representation: Representation::ScalarMoments,
            metric_applied: MetricIndex::Ape,
            terms: vec![Term {
                input: "u".into(),
                mean,
                std,
                shape,
                frequency_hz: None,
            }],
            cross_check: None,
            psd: None,
            flags: Vec::new(),
        }
    }

    #[test]
    fn confidence_factor_oracle() {
        // bisection on the standard normal CDF as an independent oracle
        let cdf = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / 2f64.sqrt()));
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < 0.9985 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let n_p = confidence_factor(0.997).unwrap();
        assert!((n_p - lo).abs() < 1e-9);
        assert!((n_p - 2.968).abs() < 1e-3);
    }

    #[test]
    fn simplified_examples() {
        let one = record("a", SourceKind::TimeConstant, 1.0, 0.0, Distribution::Delta);
        let r = combine_simplified(&[one], &CorrelationSpec::default(), 0.9, &[1.0]).unwrap();
        assert_eq!(r.axes[0].total, 1.0);
        let a = record("a", SourceKind::RandomProcess, 0.0, 3.0, Distribution::Gaussian);
        let b = record("b", SourceKind::RandomProcess, 0.0, 4.0, Distribution::Gaussian);
        let r = combine_simplified(&[a.clone(), b.clone()], &CorrelationSpec::default(), 0.997, &[1.0]).unwrap();
        assert!((r.axes[0].std - 5.0).abs() < 1e-12);
        let corr = CorrelationSpec {
            pairs: vec![("a".into(), "b".into())],
        };
        let r = combine_simplified(&[a, b], &corr, 0.997, &[1.0]).unwrap();
        assert!((r.axes[0].std - 7.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_correlation_name_rejected() {
        let a = record("a", SourceKind::RandomProcess, 0.0, 3.0, Distribution::Gaussian);
        let corr = CorrelationSpec {
            pairs: vec![("a".into(), "zz".into())],
        };
        assert!(combine_simplified(&[a], &corr, 0.997, &[1.0]).is_err());
    }

    #[test]
    fn advanced_refuses_small_samples() {
        let a = record("a", SourceKind::RandomProcess, 0.0, 1.0, Distribution::Gaussian);
        assert!(combine_advanced(&[a], &CorrelationSpec::default(), 0.997, 9_999, 1, &[1.0]).is_err());
    }

    #[test]
    fn advanced_gaussian_matches_simplified() {
        let a = record("a", SourceKind::RandomProcess, 0.0, 3.0, Distribution::Gaussian);
        let b = record("b", SourceKind::RandomProcess, 0.0, 4.0, Distribution::Gaussian);
        let adv = combine_advanced(&[a.clone(), b.clone()], &CorrelationSpec::default(), 0.997, 1_000_000, 11, &[1.0])
            .unwrap();
        let simp = combine_simplified(&[a, b], &CorrelationSpec::default(), 0.997, &[1.0]).unwrap();
        let rel = (adv.axes[0].total - simp.axes[0].total).abs() / simp.axes[0].total;
        assert!(rel < 0.01, "{rel}");
        let c = &adv.cdf[0];
        assert_eq!(c.last().unwrap().1, 1.0);
        assert!(c.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    }

    #[test]
    fn correlated_advanced_adds_linearly() {
        let a = record("a", SourceKind::RandomProcess, 0.0, 1.0, Distribution::Gaussian);
        let b = record("b", SourceKind::RandomProcess, 0.0, 2.0, Distribution::Gaussian);
        let corr = CorrelationSpec {
            pairs: vec![("a".into(), "b".into())],
        };
        let adv = combine_advanced(&[a, b], &corr, 0.95, 200_000, 3, &[1.0]).unwrap();
        let expect = 3.0 * confidence_factor(0.95).unwrap();
        assert!((adv.axes[0].total - expect).abs() / expect < 0.01);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = record("a", SourceKind::Periodic, 0.0, 1.0, Distribution::Bimodal);
        let b = record("b", SourceKind::RandomProcess, 0.0, 0.3, Distribution::Gaussian);
        let r1 = combine_advanced(&[a.clone(), b.clone()], &CorrelationSpec::default(), 0.997, 100_000, 5, &[1.0]).unwrap();
        let r2 = combine_advanced(&[a, b], &CorrelationSpec::default(), 0.997, 100_000, 5, &[1.0]).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn subtotals_cover_every_category() {
        let a = record("a", SourceKind::TimeConstant, 0.7, 0.0, Distribution::Delta);
        let m = category_subtotals(&[a], 0.997, Method::Simplified, 0, 0, 0).unwrap();
        assert_eq!(m[&Category::TimeConstant], 0.7);
        assert_eq!(m[&Category::Periodic], 0.0);
    }

    #[test]
    fn empirical_quantile_interpolates() {
        let e = EmpiricalCdf::from_abs(&[-3.0, 1.0, 2.0, 0.0, 4.0]);
        assert_eq!(e.quantile(0.5), 2.0);
        assert_eq!(e.quantile(1.0), 4.0);
        assert!((e.quantile(0.625) - 2.5).abs() < 1e-12);
    }
}
