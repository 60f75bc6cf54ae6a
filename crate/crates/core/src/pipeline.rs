//! Scenario execution: model assembly, transfer of every source, metric
//! weighting, combination and, for uncertain plants, the worst-case budget.

use crate::combine::{combine_advanced, combine_simplified, BudgetReport, Category, Method};
use crate::error::{Error, Result};
use crate::linsys::{self, FrequencyGrid, StateSpace};
use crate::metrics::{fit_rational_weight, MetricIndex, RationalWeight};
use crate::scenario::{PlantConfig, ScenarioConfig};
use crate::sources::{ErrorSource, SourceKind, RNG_ALGORITHM};
use crate::spacecraft::CaseStudy;
use crate::transfer::{self, contribution, ContributionRecord};
use crate::worstcase::{maximize, Criterion, WcOptions, WcResult};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const TOOL: &str = "pointbudget";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const FLAG_BANDWIDTH: &str =
    "bandwidth_formula: K_p = gamma*T_pert/theta_APE, omega_des = sqrt(K_p/J_ii), K_v = 2*zeta_des*omega_des*J_ii";
pub const FLAG_ATTITUDE_ONLY: &str =
    "attitude_only_reduction: appendage participation transported to the CG, translation-rotation coupling neglected";
pub const FLAG_PERIODIC_RPE: &str =
    "periodic_metric_rule: periodic and random-variable spreads scaled by sqrt(F_metric(f)) at the source frequency";
pub const FLAG_RWA_DAMPING: &str = "rwa_damping: reaction wheel second-order filter damping taken as 0.7 unless overridden";
pub const FLAG_SADM: &str = "sadm_injection: SADM torque applied about body z at the array interface";
pub const FLAG_FIXED_GAINS: &str = "fixed_gains: controller gains sized at the nominal inertia for every parameter point";

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub method: Option<Method>,
    pub worst_case: bool,
    pub dump_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightInfo {
    pub index: MetricIndex,
    pub window: Option<f64>,
    pub order: usize,
    pub fit_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub states: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Eigenvalues as `[re, im]`, sorted by real part then imaginary part.
    pub eigenvalues: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcSearch {
    pub criterion: Criterion,
    pub axis: usize,
    /// `None` when no source on this axis falls under the criterion.
    pub result: Option<WcResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcColumn {
    pub criterion: Criterion,
    /// Parameter point used for each axis.
    pub configs: Vec<BTreeMap<String, f64>>,
    pub budget: BudgetReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseReport {
    pub parameters: Vec<crate::spacecraft::UncertainParameter>,
    pub searches: Vec<WcSearch>,
    pub columns: Vec<WcColumn>,
    pub evaluations: usize,
    pub evaluation_budget: usize,
    pub upper_bound_note: String,
}

impl WorstCaseReport {
    pub fn column(&self, c: Criterion) -> Option<&WcColumn> {
        self.columns.iter().find(|k| k.criterion == c)
    }

    pub fn search(&self, c: Criterion, axis: usize) -> Option<&WcResult> {
        self.searches
            .iter()
            .find(|s| s.criterion == c && s.axis == axis)
            .and_then(|s| s.result.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub index: MetricIndex,
    pub window: Option<f64>,
    pub requirement: Vec<f64>,
    pub requirement_units: String,
    pub normalized_outputs: bool,
    pub rng: String,
    pub weight: Option<WeightInfo>,
    pub nominal: BudgetReport,
    pub worst_case: Option<WorstCaseReport>,
    pub flags: Vec<String>,
    pub model: Option<ModelDiagnostics>,
}

/// Category driven by each worst-case criterion.
pub fn governed(c: Criterion) -> &'static [Category] {
    match c {
        Criterion::DcGain => &[Category::TimeConstant, Category::Drift],
        Criterion::Variance => &[Category::RandomProcess],
        Criterion::Gain => &[Category::Periodic, Category::RandomVariable],
    }
}

fn criterion_for(kind: SourceKind) -> Criterion {
    match kind {
        SourceKind::TimeConstant | SourceKind::Drift => Criterion::DcGain,
        SourceKind::RandomProcess => Criterion::Variance,
        SourceKind::Periodic | SourceKind::RandomVariable => Criterion::Gain,
    }
}

/// Everything needed to evaluate sources against a model.
pub struct Analysis<'a> {
    pub cfg: &'a ScenarioConfig,
    pub weight: RationalWeight,
    pub method: Method,
    pub samples: usize,
    pub seed: u64,
    /// Model outputs are already divided by the requirement.
    pub normalized: bool,
    /// Requirement in the units of the model output (1 when normalized).
    pub budget_requirement: Vec<f64>,
}

impl<'a> Analysis<'a> {
    pub fn new(cfg: &'a ScenarioConfig, opts: &RunOptions) -> Result<Self> {
        let weight = match cfg.metric.index {
            MetricIndex::Ape => RationalWeight::unity(),
            idx => {
                let dt = cfg
                    .metric
                    .window
                    .ok_or_else(|| Error::schema("metric.window", "required for MPE and RPE"))?;
                let band = FrequencyGrid::logspace(1e-3 / dt, 1e2 / dt, 400)?;
                fit_rational_weight(idx, dt, &band, cfg.fit_tolerance)?
            }
        };
        let normalized = match &cfg.plant {
            PlantConfig::Builtin { .. } => true,
            PlantConfig::External { normalized, .. } => *normalized,
        };
        let budget_requirement = if normalized {
            vec![1.0; cfg.metric.requirement.len()]
        } else {
            cfg.metric.requirement.clone()
        };
        Ok(Self {
            cfg,
            weight,
            method: opts.method.unwrap_or(cfg.combination.method),
            samples: opts.samples.unwrap_or(cfg.combination.samples),
            seed: opts.seed.unwrap_or(cfg.combination.seed),
            normalized,
            budget_requirement,
        })
    }

    /// Contribution of every source on one output axis.
    pub fn contributions_on(&self, model: &StateSpace, axis: usize) -> Result<Vec<ContributionRecord>> {
        let m = &self.cfg.metric;
        self.cfg
            .sources
            .iter()
            .map(|s| {
                contribution(model, &self.weight, s, axis, m.index, m.window, None, self.cfg.psd_convention).map_err(|e| {
                    match e {
                        Error::Numerical(msg) => Error::Numerical(format!("source `{}`: {msg}", s.name)),
                        other => other,
                    }
                })
            })
            .collect()
    }

    /// Combines records that may come from different models per axis.
    pub fn combine(&self, records: &[ContributionRecord]) -> Result<BudgetReport> {
        let corr = &self.cfg.combination.correlations;
        let p_c = self.cfg.metric.confidence;
        match self.method {
            Method::Simplified => combine_simplified(records, corr, p_c, &self.budget_requirement),
            Method::Advanced => combine_advanced(records, corr, p_c, self.samples, self.seed, &self.budget_requirement),
        }
    }

    pub fn budget_for(&self, models: &[&StateSpace]) -> Result<BudgetReport> {
        let mut records = Vec::new();
        for (axis, m) in models.iter().enumerate() {
            records.extend(self.contributions_on(m, axis)?);
        }
        self.combine(&records)
    }

    /// Scalar objective of `criterion` for the sources it governs on `axis`;
    /// `None` when no source qualifies.
    pub fn objective(&self, criterion: Criterion, model: &StateSpace, axis: usize) -> Result<Option<f64>> {
        let srcs: Vec<&ErrorSource> = self
            .cfg
            .sources
            .iter()
            .filter(|s| criterion_for(s.kind) == criterion)
            .collect();
        if srcs.is_empty() {
            return Ok(None);
        }
        let m = &self.cfg.metric;
        let mut acc = 0.0;
        for s in srcs {
            acc += match criterion {
                Criterion::Variance => transfer::random_process_variance(model, &self.weight, s, axis, self.cfg.psd_convention)?,
                Criterion::DcGain => {
                    let r = transfer::transfer_time_constant(model, s, axis, m.window)?;
                    r.terms.iter().map(|t| t.mean.abs() + t.std).sum()
                }
                Criterion::Gain => {
                    let r = contribution(model, &self.weight, s, axis, m.index, m.window, None, self.cfg.psd_convention)?;
                    r.terms.iter().map(|t| t.mean.abs() + t.std).sum()
                }
            };
        }
        Ok(Some(if criterion == Criterion::Variance { acc.sqrt() } else { acc }))
    }
}

fn diagnostics(g: &StateSpace) -> Result<ModelDiagnostics> {
    let mut eig: Vec<[f64; 2]> = linsys::eigenvalues(&g.a)?.iter().map(|l| [l.re, l.im]).collect();
    eig.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    Ok(ModelDiagnostics {
        states: g.nstates(),
        inputs: g.inputs.clone(),
        outputs: g.outputs.clone(),
        eigenvalues: eig,
    })
}

pub fn case_study(cfg: &ScenarioConfig) -> Result<Option<CaseStudy>> {
    match &cfg.plant {
        PlantConfig::Builtin { spacecraft, aocs } => {
            let params = if cfg.uncertainty.enabled {
                cfg.uncertainty.parameters.clone()
            } else {
                Vec::new()
            };
            Ok(Some(CaseStudy::new(
                spacecraft.clone(),
                aocs.clone(),
                cfg.metric.requirement.clone(),
                params,
            )?))
        }
        PlantConfig::External { .. } => Ok(None),
    }
}

pub fn nominal_model(cfg: &ScenarioConfig) -> Result<StateSpace> {
    match &cfg.plant {
        PlantConfig::Builtin { .. } => case_study(cfg)?.expect("builtin").nominal_model(),
        PlantConfig::External { model, .. } => Ok(model.clone()),
    }
}

fn flags(cfg: &ScenarioConfig, an: &Analysis, records: &[ContributionRecord]) -> Vec<String> {
    let mut f = vec![
        FLAG_BANDWIDTH.to_string(),
        FLAG_ATTITUDE_ONLY.to_string(),
        FLAG_PERIODIC_RPE.to_string(),
    ];
    if let PlantConfig::Builtin { aocs, .. } = &cfg.plant {
        f.push(FLAG_SADM.to_string());
        f.push(FLAG_FIXED_GAINS.to_string());
        if aocs.rwa_damping == 0.7 {
            f.push(FLAG_RWA_DAMPING.to_string());
        }
    } else {
        f.push("plant: external model, builtin-model flags listed for completeness".to_string());
    }
    f.push(format!(
        "psd_convention: {:?} (variance = {:.6} * G0 * ||W H||_2^2)",
        cfg.psd_convention,
        cfg.psd_convention.kappa()
    ));
    f.push(format!("quantile_convention: {}", crate::combine::QUANTILE_CONVENTION));
    f.push(format!("rng: {RNG_ALGORITHM}"));
    if cfg.metric.index != MetricIndex::Ape {
        f.push(format!(
            "metric_weight: {} rational fit of order {}, max relative error {:.4}",
            cfg.metric.index.label(),
            an.weight.order,
            an.weight.fit_error
        ));
        if cfg.metric.index == MetricIndex::Rpe
            && cfg
                .sources
                .iter()
                .any(|s| s.kind == SourceKind::RandomVariable && (0..s.axes.len()).any(|k| s.frequency_hz(k).ok().flatten().is_none()))
        {
            f.push("rv_rpe_rule: random variables without a frequency keep their full spread under RPE (conservative)".into());
        }
    }
    if cfg.sources.iter().any(|s| s.kind == SourceKind::Drift) {
        f.push("drift_model: linear drift, spread over the window taken as rms(rate)*window/sqrt(12)".into());
    }
    for r in records {
        for fl in &r.flags {
            let s = format!("{} axis {}: {fl}", r.source_name, r.axis);
            if !f.contains(&s) {
                f.push(s);
            }
        }
    }
    f
}

pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunReport> {
    let an = Analysis::new(cfg, opts)?;
    let model = nominal_model(cfg)?;
    let n_axes = model.noutputs();
    let models: Vec<&StateSpace> = (0..n_axes).map(|_| &model).collect();
    let nominal = an.budget_for(&models)?;
    let mut fl = flags(cfg, &an, &nominal.contributions);

    let worst_case = if (cfg.worstcase.enabled || opts.worst_case) && cfg.uncertainty.enabled {
        let wc = wc_budget(cfg, &an)?;
        fl.push(format!("worst_case_upper_bound: {}", wc.upper_bound_note));
        Some(wc)
    } else {
        if opts.worst_case && !cfg.uncertainty.enabled {
            return Err(Error::schema("uncertainty.enabled", "worst-case analysis needs an uncertain plant"));
        }
        None
    };

    Ok(RunReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        scenario: cfg.name.clone(),
        index: cfg.metric.index,
        window: cfg.metric.window,
        requirement: cfg.metric.requirement.clone(),
        requirement_units: cfg.metric.requirement_units.clone(),
        normalized_outputs: an.normalized,
        rng: RNG_ALGORITHM.into(),
        weight: (cfg.metric.index != MetricIndex::Ape).then_some(WeightInfo {
            index: an.weight.index,
            window: cfg.metric.window,
            order: an.weight.order,
            fit_error: an.weight.fit_error,
        }),
        nominal,
        worst_case,
        flags: fl,
        model: if opts.dump_model { Some(diagnostics(&model)?) } else { None },
    })
}

/// Worst-case budget: one search per criterion and axis over the uncertainty
/// box, then a full budget per criterion with each axis evaluated at its
/// worst point.
pub fn wc_budget(cfg: &ScenarioConfig, an: &Analysis) -> Result<WorstCaseReport> {
    let cs = case_study(cfg)?.ok_or_else(|| Error::InvalidInput("worst-case analysis needs the builtin plant".into()))?;
    let n_axes = cfg.metric.requirement.len();
    let nominal_model = cs.nominal_model()?;
    let criteria = &cfg.worstcase.criteria;

    // which (criterion, axis) pairs have something to maximize
    let mut jobs = Vec::new();
    for &c in criteria {
        for axis in 0..n_axes {
            if an.objective(c, &nominal_model, axis)?.is_some() {
                jobs.push((c, axis));
            }
        }
    }
    let per_search = if jobs.is_empty() { 0 } else { cfg.worstcase.budget / jobs.len() };
    let mut searches = Vec::new();
    let mut evaluations = 0;
    for &c in criteria {
        for axis in 0..n_axes {
            if !jobs.contains(&(c, axis)) {
                searches.push(WcSearch {
                    criterion: c,
                    axis,
                    result: None,
                });
                continue;
            }
            let opts = WcOptions {
                budget: per_search,
                starts: cfg.worstcase.starts,
                seed: cfg.worstcase.seed.wrapping_add(axis as u64 * 0x100 + c as u64),
            };
            let r = maximize(
                c,
                &cs.parameters,
                |x| {
                    let g = cs.instantiate(x)?;
                    Ok(an.objective(c, &g, axis)?.unwrap_or(0.0))
                },
                &opts,
            )
            .map_err(|e| match e {
                Error::Unstable { context, max_real } => Error::Unstable {
                    context: format!("axis {}: {context}", crate::sources::AXES.get(axis).unwrap_or(&"?")),
                    max_real,
                },
                other => other,
            })?;
            evaluations += r.evaluations;
            searches.push(WcSearch {
                criterion: c,
                axis,
                result: Some(r),
            });
        }
    }

    let nominal_config: BTreeMap<String, f64> = cs
        .parameters
        .iter()
        .map(|p| (p.name.clone(), p.nominal))
        .collect();
    let mut columns = Vec::new();
    for &c in criteria {
        let mut configs = Vec::with_capacity(n_axes);
        let mut models = Vec::with_capacity(n_axes);
        for axis in 0..n_axes {
            let found = searches
                .iter()
                .find(|s| s.criterion == c && s.axis == axis)
                .and_then(|s| s.result.as_ref());
            match found {
                Some(r) => {
                    models.push(cs.instantiate(&r.point)?);
                    configs.push(r.config.clone());
                }
                None => {
                    models.push(nominal_model.clone());
                    configs.push(nominal_config.clone());
                }
            }
        }
        let refs: Vec<&StateSpace> = models.iter().collect();
        let budget = an.budget_for(&refs)?;
        columns.push(WcColumn {
            criterion: c,
            configs,
            budget,
        });
    }
    Ok(WorstCaseReport {
        parameters: cs.parameters.clone(),
        searches,
        columns,
        evaluations,
        evaluation_budget: cfg.worstcase.budget,
        upper_bound_note: crate::worstcase::UPPER_BOUND_NOTE.into(),
    })
}
