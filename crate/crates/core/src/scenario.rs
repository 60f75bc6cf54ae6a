//! Scenario files: TOML with unit-suffixed quantities.
//!
//! Quantities are either plain numbers (SI) or strings such as `"0.1745 mrad"`
//! and `"3.8 Hz"`; suffixes are converted at parse time and checked against
//! the dimension the field expects. Errors name the offending field path.
//! The key reference is in `docs/scenario.md`.

use crate::combine::{CorrelationSpec, Method, MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::linsys::StateSpace;
use crate::metrics::{Interpretation, MetricIndex, MetricSpec};
use crate::sources::{AxisSpec, ErrorSource, Law, Param, SourceKind, AXES};
use crate::spacecraft::{reference, AocsParams, AppendageParams, BodyParams, SpacecraftParams, UncertainParameter, PARAM_NAMES};
use crate::transfer::PsdConvention;
use crate::worstcase::Criterion;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Angle,
    Rate,
    Torque,
    Time,
    /// Frequency stored in Hz.
    FrequencyHz,
    /// Angular frequency stored in rad/s.
    AngularFrequency,
    Mass,
    Length,
    Inertia,
    None,
}

impl Dim {
    fn name(self) -> &'static str {
        match self {
            Dim::Angle => "angle",
            Dim::Rate => "angular rate",
            Dim::Torque => "torque",
            Dim::Time => "time",
            Dim::FrequencyHz | Dim::AngularFrequency => "frequency",
            Dim::Mass => "mass",
            Dim::Length => "length",
            Dim::Inertia => "inertia",
            Dim::None => "dimensionless",
        }
    }

    /// Dimension implied by a source's declared units.
    pub fn of_units(units: &str) -> Dim {
        match unit_factor(units.trim()) {
            Some((d, _)) => d,
            None => Dim::None,
        }
    }
}

fn unit_factor(u: &str) -> Option<(Dim, f64)> {
    let u = u.trim();
    Some(match u {
        "rad" => (Dim::Angle, 1.0),
        "mrad" => (Dim::Angle, 1e-3),
        "urad" | "µrad" | "μrad" => (Dim::Angle, 1e-6),
        "nrad" => (Dim::Angle, 1e-9),
        "deg" => (Dim::Angle, PI / 180.0),
        "arcsec" => (Dim::Angle, PI / (180.0 * 3600.0)),
        "rad/s" => (Dim::Rate, 1.0),
        "mrad/s" => (Dim::Rate, 1e-3),
        "urad/s" | "µrad/s" | "μrad/s" => (Dim::Rate, 1e-6),
        "deg/s" => (Dim::Rate, PI / 180.0),
        "N·m" | "Nm" | "N*m" | "N.m" | "N m" => (Dim::Torque, 1.0),
        "mN·m" | "mNm" => (Dim::Torque, 1e-3),
        "s" => (Dim::Time, 1.0),
        "ms" => (Dim::Time, 1e-3),
        "us" | "µs" | "μs" => (Dim::Time, 1e-6),
        "Hz" => (Dim::FrequencyHz, 1.0),
        "kHz" => (Dim::FrequencyHz, 1e3),
        "mHz" => (Dim::FrequencyHz, 1e-3),
        "kg" => (Dim::Mass, 1.0),
        "m" => (Dim::Length, 1.0),
        "mm" => (Dim::Length, 1e-3),
        "kg·m²" | "kg.m2" | "kg*m^2" | "kg m^2" | "kg·m^2" | "kgm2" => (Dim::Inertia, 1.0),
        _ => return None,
    })
}

/// Converts `value unit` to the SI (or Hz / rad/s) value of dimension `want`.
pub fn convert(value: f64, unit: &str, want: Dim) -> std::result::Result<f64, String> {
    let (d, k) = unit_factor(unit).ok_or_else(|| format!("unknown unit `{unit}`"))?;
    match (want, d) {
        (a, b) if a == b => Ok(value * k),
        (Dim::AngularFrequency, Dim::FrequencyHz) => Ok(value * k * 2.0 * PI),
        (Dim::AngularFrequency, Dim::Rate) => Ok(value * k),
        (Dim::FrequencyHz, Dim::Rate) => Ok(value * k / (2.0 * PI)),
        _ => Err(format!("unit mismatch: `{unit}` is {}, expected {}", d.name(), want.name())),
    }
}

/// Parses `"<number> [unit]"`.
pub fn parse_quantity(s: &str, want: Dim) -> std::result::Result<f64, String> {
    let s = s.trim();
    let split = s
        .char_indices()
        .find(|(i, c)| {
            !(c.is_ascii_digit() || *c == '.' || *c == '+' || *c == '-' || ((*c == 'e' || *c == 'E') && *i > 0))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let v: f64 = num.trim().parse().map_err(|_| format!("cannot read a number from `{s}`"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(v);
    }
    if want == Dim::None {
        return Err(format!("unit mismatch: `{unit}` given for a dimensionless value"));
    }
    convert(v, unit, want)
}

/// PSD level string such as `"1e-8 rad^2/Hz"`; the base unit must match `base`.
fn parse_psd(s: &str, base: Dim) -> std::result::Result<f64, String> {
    let s = s.trim();
    let (num, unit) = match s.find(|c: char| c.is_whitespace()) {
        Some(i) => (&s[..i], s[i..].trim()),
        None => (s, ""),
    };
    let v: f64 = num.parse().map_err(|_| format!("cannot read a number from `{s}`"))?;
    if unit.is_empty() {
        return Ok(v);
    }
    let inner = unit
        .strip_suffix("/Hz")
        .ok_or_else(|| format!("PSD unit `{unit}` must be per Hz"))?;
    let inner = inner
        .strip_suffix("^2")
        .or_else(|| inner.strip_suffix('²'))
        .ok_or_else(|| format!("PSD unit `{unit}` must be a squared unit per Hz"))?;
    let inner = inner.trim_start_matches('(').trim_end_matches(')');
    let (d, k) = unit_factor(inner).ok_or_else(|| format!("unknown unit `{inner}`"))?;
    if base != Dim::None && d != base {
        return Err(format!("unit mismatch: PSD of {} given for a source in {}", d.name(), base.name()));
    }
    Ok(v * k * k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantConfig {
    Builtin {
        spacecraft: SpacecraftParams,
        aocs: AocsParams,
    },
    External {
        model: StateSpace,
        /// Outputs already divided by the requirement.
        normalized: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub enabled: bool,
    pub parameters: Vec<UncertainParameter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationConfig {
    pub method: Method,
    pub samples: usize,
    pub seed: u64,
    pub correlations: CorrelationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseConfig {
    pub enabled: bool,
    pub criteria: Vec<Criterion>,
    /// Total evaluation cap across all searches.
    pub budget: usize,
    pub starts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<String>,
}

pub const FORMATS: [&str; 3] = ["json", "txt", "dat"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub metric: MetricSpec,
    pub sources: Vec<ErrorSource>,
    pub plant: PlantConfig,
    pub psd_convention: PsdConvention,
    /// Max relative error of the rational metric weight.
    pub fit_tolerance: f64,
    pub uncertainty: UncertaintyConfig,
    pub combination: CombinationConfig,
    pub worstcase: WorstCaseConfig,
    pub output: OutputConfig,
}

struct Node<'a> {
    path: String,
    table: &'a Table,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

impl<'a> Node<'a> {
    fn root(table: &'a Table) -> Self {
        Self {
            path: String::new(),
            table,
        }
    }

    fn p(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.table.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::schema(self.p(k), format!("unknown key (allowed: {})", allowed.join(", "))));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.get(key)
    }

    fn require(&self, key: &str) -> Result<&'a Value> {
        self.get(key).ok_or_else(|| Error::schema(self.p(key), "missing required field"))
    }

    fn sub(&self, key: &str) -> Result<Option<Node<'a>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Node {
                path: self.p(key),
                table: t,
            })),
            Some(v) => Err(Error::schema(self.p(key), format!("expected a table, found {}", type_name(v)))),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Error::schema(self.p(key), format!("expected a string, found {}", type_name(v)))),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(Error::schema(self.p(key), format!("expected a boolean, found {}", type_name(v)))),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(Error::schema(self.p(key), format!("expected a non-negative integer, found {v}"))),
        }
    }

    fn quantity(&self, key: &str, want: Dim) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => quantity(v, &self.p(key), want).map(Some),
        }
    }

    fn quantities(&self, key: &str, want: Dim, len: Option<usize>) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => quantity_list(v, &self.p(key), want, len).map(Some),
        }
    }

    fn matrix(&self, key: &str, want: Dim) -> Result<Option<Vec<Vec<f64>>>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let path = self.p(key);
        let rows = v
            .as_array()
            .ok_or_else(|| Error::schema(&path, "expected an array of rows"))?;
        let mut out = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            out.push(quantity_list(r, &format!("{path}[{i}]"), want, None)?);
        }
        if let Some(n) = out.first().map(|r| r.len()) {
            if out.iter().any(|r| r.len() != n) {
                return Err(Error::schema(&path, "rows have different lengths"));
            }
        }
        Ok(Some(out))
    }
}

fn quantity(v: &Value, path: &str, want: Dim) -> Result<f64> {
    let x = match v {
        Value::Float(f) => *f,
        Value::Integer(i) => *i as f64,
        Value::String(s) => parse_quantity(s, want).map_err(|m| Error::schema(path, m))?,
        other => return Err(Error::schema(path, format!("expected a number, found {}", type_name(other)))),
    };
    if !x.is_finite() {
        return Err(Error::schema(path, "value must be finite"));
    }
    Ok(x)
}

fn quantity_list(v: &Value, path: &str, want: Dim, len: Option<usize>) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::schema(path, format!("expected an array, found {}", type_name(v))))?;
    if let Some(n) = len {
        if arr.len() != n {
            return Err(Error::schema(path, format!("expected {n} entries, found {}", arr.len())));
        }
    }
    arr.iter()
        .enumerate()
        .map(|(i, x)| quantity(x, &format!("{path}[{i}]"), want))
        .collect()
}

fn mat3(rows: Vec<Vec<f64>>, path: &str) -> Result<[[f64; 3]; 3]> {
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
        return Err(Error::schema(path, "expected a 3×3 matrix"));
    }
    Ok([
        [rows[0][0], rows[0][1], rows[0][2]],
        [rows[1][0], rows[1][1], rows[1][2]],
        [rows[2][0], rows[2][1], rows[2][2]],
    ])
}

fn vec3(v: Vec<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn enum_value<T: for<'de> Deserialize<'de>>(s: &str, path: &str, allowed: &[&str]) -> Result<T> {
    T::deserialize(Value::String(s.to_string()))
        .map_err(|_| Error::schema(path, format!("`{s}` is not one of {}", allowed.join(", "))))
}

fn parse_metric(root: &Node) -> Result<MetricSpec> {
    let m = root
        .sub("metric")?
        .ok_or_else(|| Error::schema("metric", "missing required section"))?;
    m.check_keys(&["index", "window", "confidence", "requirement", "requirement_units", "interpretation"])?;
    let index_s = m.string("index")?.ok_or_else(|| Error::schema("metric.index", "missing required field"))?;
    let index: MetricIndex = enum_value(&index_s.to_uppercase(), "metric.index", &["APE", "MPE", "RPE"])?;
    let window = m.quantity("window", Dim::Time)?;
    let confidence = m.quantity("confidence", Dim::None)?.unwrap_or(0.997);
    let req_v = m.require("requirement")?;
    let arr = req_v
        .as_array()
        .ok_or_else(|| Error::schema("metric.requirement", "expected an array of per-axis values"))?;
    let any_suffix = arr.iter().any(|v| v.is_str());
    let declared = m.string("requirement_units")?;
    let requirement: Vec<f64> = match (&declared, any_suffix) {
        (Some(u), _) => {
            let (d, k) = unit_factor(u).ok_or_else(|| Error::schema("metric.requirement_units", format!("unknown unit `{u}`")))?;
            if d != Dim::Angle && d != Dim::Rate {
                return Err(Error::schema("metric.requirement_units", "requirement must be an angle or a rate"));
            }
            arr.iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::String(_) => quantity(v, &format!("metric.requirement[{i}]"), d),
                    _ => quantity(v, &format!("metric.requirement[{i}]"), Dim::None).map(|x| x * k),
                })
                .collect::<Result<_>>()?
        }
        (None, true) => {
            if arr.iter().any(|v| !v.is_str()) {
                return Err(Error::schema(
                    "metric.requirement",
                    "mixes plain numbers and unit-suffixed values; declare metric.requirement_units",
                ));
            }
            quantity_list(req_v, "metric.requirement", Dim::Angle, None)?
        }
        (None, false) => {
            return Err(Error::schema(
                "metric.requirement_units",
                "requirement units must be declared (suffix the values or set requirement_units)",
            ))
        }
    };
    let interpretation = match m.string("interpretation")? {
        Some(s) => enum_value(&s.to_lowercase(), "metric.interpretation", &["temporal", "ensemble", "mixed"])?,
        None => Interpretation::Temporal,
    };
    let spec = MetricSpec {
        index,
        window,
        confidence,
        requirement,
        requirement_units: "rad".into(),
        interpretation,
    };
    spec.validate()?;
    Ok(spec)
}

fn parse_param(v: &Value, path: &str, want: Dim) -> Result<Param> {
    match v {
        Value::Table(t) => {
            let n = Node {
                path: path.to_string(),
                table: t,
            };
            let law = n.string("law")?.ok_or_else(|| Error::schema(join(path, "law"), "missing required field"))?;
            let need = |k: &str| -> Result<f64> {
                n.quantity(k, want)?
                    .ok_or_else(|| Error::schema(join(path, k), "missing required field"))
            };
            match law.as_str() {
                "fixed" => {
                    n.check_keys(&["law", "value"])?;
                    Ok(Param::Fixed { value: need("value")? })
                }
                "gaussian" => {
                    n.check_keys(&["law", "mean", "std"])?;
                    Ok(Param::Gaussian {
                        mean: need("mean")?,
                        std: need("std")?,
                    })
                }
                "uniform" => {
                    n.check_keys(&["law", "lower", "upper"])?;
                    Ok(Param::Uniform {
                        lower: need("lower")?,
                        upper: need("upper")?,
                    })
                }
                other => Err(Error::schema(
                    join(path, "law"),
                    format!("`{other}` is not one of fixed, gaussian, uniform"),
                )),
            }
        }
        _ => Ok(Param::Fixed {
            value: quantity(v, path, want)?,
        }),
    }
}

fn parse_psd_param(v: &Value, path: &str, base: Dim) -> Result<Param> {
    match v {
        Value::String(s) => Ok(Param::Fixed {
            value: parse_psd(s, base).map_err(|m| Error::schema(path, m))?,
        }),
        _ => parse_param(v, path, Dim::None),
    }
}

fn parse_axis(v: &Value, path: &str, kind: SourceKind, dim: Dim) -> Result<AxisSpec> {
    let t = v
        .as_table()
        .ok_or_else(|| Error::schema(path, "expected a table with `channel` and `law`"))?;
    let n = Node {
        path: path.to_string(),
        table: t,
    };
    let channel = n
        .string("channel")?
        .ok_or_else(|| Error::schema(n.p("channel"), "missing required field"))?;
    let default_law = match kind {
        SourceKind::TimeConstant | SourceKind::Drift => "delta",
        SourceKind::RandomProcess => "white_psd",
        SourceKind::Periodic => "sinusoid",
        SourceKind::RandomVariable => "gaussian",
    };
    let law_s = n.string("law")?.unwrap_or_else(|| default_law.into());
    let req = |k: &str| n.require(k).map(|v| (v, n.p(k)));
    let law = match law_s.as_str() {
        "delta" => {
            n.check_keys(&["channel", "law", "value"])?;
            let (v, p) = req("value")?;
            Law::Delta {
                value: parse_param(v, &p, dim)?,
            }
        }
        "gaussian" => {
            n.check_keys(&["channel", "law", "mean", "std"])?;
            let mean = match n.get("mean") {
                Some(v) => parse_param(v, &n.p("mean"), dim)?,
                None => Param::fixed(0.0),
            };
            let (v, p) = req("std")?;
            Law::Gaussian {
                mean,
                std: parse_param(v, &p, dim)?,
            }
        }
        "uniform" => {
            n.check_keys(&["channel", "law", "lower", "upper"])?;
            let (lv, lp) = req("lower")?;
            let (uv, up) = req("upper")?;
            Law::Uniform {
                lower: parse_param(lv, &lp, dim)?,
                upper: parse_param(uv, &up, dim)?,
            }
        }
        "white_psd" => {
            n.check_keys(&["channel", "law", "level"])?;
            let (v, p) = req("level")?;
            Law::WhitePsd {
                level: parse_psd_param(v, &p, dim)?,
            }
        }
        "sinusoid" => {
            n.check_keys(&["channel", "law", "amplitude", "frequency"])?;
            let (av, ap) = req("amplitude")?;
            let (fv, fp) = req("frequency")?;
            Law::Sinusoid {
                amplitude: parse_param(av, &ap, dim)?,
                frequency_hz: quantity(fv, &fp, Dim::FrequencyHz)?,
            }
        }
        other => {
            return Err(Error::schema(
                n.p("law"),
                format!("`{other}` is not one of delta, gaussian, uniform, white_psd, sinusoid"),
            ))
        }
    };
    Ok(AxisSpec { channel, law })
}

fn parse_sources(root: &Node) -> Result<Vec<ErrorSource>> {
    let arr = root
        .require("sources")?
        .as_array()
        .ok_or_else(|| Error::schema("sources", "expected an array of tables ([[sources]])"))?;
    if arr.is_empty() {
        return Err(Error::schema("sources", "at least one source is required"));
    }
    let mut out: Vec<ErrorSource> = Vec::new();
    for (i, v) in arr.iter().enumerate() {
        let path = format!("sources[{i}]");
        let t = v.as_table().ok_or_else(|| Error::schema(&path, "expected a table"))?;
        let n = Node { path, table: t };
        n.check_keys(&["name", "kind", "units", "x", "y", "z"])?;
        let name = n.string("name")?.ok_or_else(|| Error::schema(n.p("name"), "missing required field"))?;
        if out.iter().any(|s| s.name == name) {
            return Err(Error::schema(n.p("name"), format!("duplicate source name `{name}`")));
        }
        let kind_s = n.string("kind")?.ok_or_else(|| Error::schema(n.p("kind"), "missing required field"))?;
        let kind: SourceKind = enum_value(
            &kind_s,
            &n.p("kind"),
            &["time_constant", "random_variable", "random_process", "periodic", "drift"],
        )?;
        let units = n.string("units")?.ok_or_else(|| Error::schema(n.p("units"), "missing required field"))?;
        let dim = Dim::of_units(&units);
        let mut axes = Vec::with_capacity(3);
        for a in AXES {
            axes.push(match n.get(a) {
                Some(v) => Some(parse_axis(v, &n.p(a), kind, dim)?),
                None => None,
            });
        }
        if axes.iter().all(|a| a.is_none()) {
            return Err(Error::schema(n.p("x"), "source has no axis (give at least one of x, y, z)"));
        }
        let src = ErrorSource::new(name, kind, units, axes).map_err(|e| Error::schema(&n.path, e.to_string()))?;
        out.push(src);
    }
    Ok(out)
}

fn parse_body(n: Option<Node>, mut body: BodyParams) -> Result<BodyParams> {
    if let Some(n) = n {
        n.check_keys(&["mass", "inertia", "cg"])?;
        if let Some(m) = n.quantity("mass", Dim::Mass)? {
            body.mass = m;
        }
        if let Some(i) = n.matrix("inertia", Dim::Inertia)? {
            body.inertia = mat3(i, &n.p("inertia"))?;
        }
        if let Some(c) = n.quantities("cg", Dim::Length, Some(3))? {
            body.cg = vec3(c);
        }
        body.validate().map_err(|e| Error::schema(&n.path, e.to_string()))?;
    }
    Ok(body)
}

fn parse_array(n: &Node, base: &AppendageParams) -> Result<AppendageParams> {
    n.check_keys(&[
        "name",
        "mass",
        "inertia",
        "cg_offset",
        "attachment",
        "frame",
        "mode_freqs",
        "damping",
        "participation",
    ])?;
    let mut a = base.clone();
    if let Some(s) = n.string("name")? {
        a.name = s;
    }
    if let Some(m) = n.quantity("mass", Dim::Mass)? {
        a.mass = m;
    }
    if let Some(i) = n.matrix("inertia", Dim::Inertia)? {
        a.inertia = mat3(i, &n.p("inertia"))?;
    }
    if let Some(c) = n.quantities("cg_offset", Dim::Length, Some(3))? {
        a.cg_offset = vec3(c);
    }
    if let Some(c) = n.quantities("attachment", Dim::Length, Some(3))? {
        a.attachment = vec3(c);
    }
    if let Some(r) = n.matrix("frame", Dim::None)? {
        a.frame = mat3(r, &n.p("frame"))?;
    }
    if let Some(w) = n.quantities("mode_freqs", Dim::AngularFrequency, None)? {
        a.mode_freqs = w;
    }
    if let Some(z) = n.quantities("damping", Dim::None, None)? {
        a.damping = z;
    }
    if let Some(p) = n.matrix("participation", Dim::None)? {
        if p.iter().any(|r| r.len() != 6) {
            return Err(Error::schema(n.p("participation"), "each mode needs 6 entries [tx, ty, tz, rx, ry, rz]"));
        }
        a.participation = p.into_iter().map(|r| [r[0], r[1], r[2], r[3], r[4], r[5]]).collect();
    }
    a.validate().map_err(|e| Error::schema(&n.path, e.to_string()))?;
    Ok(a)
}

fn parse_aocs(n: Option<Node>, mut a: AocsParams) -> Result<AocsParams> {
    if let Some(n) = n {
        n.check_keys(&[
            "rwa_bandwidth",
            "rwa_damping",
            "star_tracker_cutoff",
            "gyro_cutoff",
            "gamma",
            "zeta_des",
            "t_pert",
            "theta_ape",
        ])?;
        let set = |x: &mut f64, k: &str, d: Dim| -> Result<()> {
            if let Some(v) = n.quantity(k, d)? {
                *x = v;
            }
            Ok(())
        };
        set(&mut a.rwa_bandwidth_hz, "rwa_bandwidth", Dim::FrequencyHz)?;
        set(&mut a.rwa_damping, "rwa_damping", Dim::None)?;
        set(&mut a.star_tracker_cutoff_hz, "star_tracker_cutoff", Dim::FrequencyHz)?;
        set(&mut a.gyro_cutoff_hz, "gyro_cutoff", Dim::FrequencyHz)?;
        set(&mut a.gamma, "gamma", Dim::None)?;
        set(&mut a.zeta_des, "zeta_des", Dim::None)?;
        if let Some(t) = n.quantities("t_pert", Dim::Torque, Some(3))? {
            a.t_pert = vec3(t);
        }
        if let Some(t) = n.quantities("theta_ape", Dim::Angle, Some(3))? {
            a.theta_ape = vec3(t);
        }
        a.validate().map_err(|e| Error::schema(&n.path, e.to_string()))?;
    }
    Ok(a)
}

fn parse_plant(root: &Node, base_dir: &Path) -> Result<PlantConfig> {
    let n = root
        .sub("plant")?
        .ok_or_else(|| Error::schema("plant", "missing required section"))?;
    let kind = n.string("kind")?.unwrap_or_else(|| "builtin".into());
    match kind.as_str() {
        "builtin" => {
            n.check_keys(&["kind", "body", "arrays", "aocs", "sadm_tan_quarter_angle"])?;
            let mut sc = reference::spacecraft();
            sc.body = parse_body(n.sub("body")?, sc.body)?;
            if let Some(v) = n.get("arrays") {
                let arr = v
                    .as_array()
                    .ok_or_else(|| Error::schema(n.p("arrays"), "expected an array of tables ([[plant.arrays]])"))?;
                let defaults = sc.arrays.clone();
                let mut arrays = Vec::with_capacity(arr.len());
                for (i, a) in arr.iter().enumerate() {
                    let path = format!("{}[{i}]", n.p("arrays"));
                    let t = a.as_table().ok_or_else(|| Error::schema(&path, "expected a table"))?;
                    let base = defaults.get(i).cloned().unwrap_or_else(|| reference::array(&format!("array{}", i + 1), 1.0));
                    arrays.push(parse_array(&Node { path, table: t }, &base)?);
                }
                sc.arrays = arrays;
            }
            if let Some(t) = n.quantity("sadm_tan_quarter_angle", Dim::None)? {
                sc.sadm_tan_quarter_angle = t;
            }
            let aocs = parse_aocs(n.sub("aocs")?, reference::aocs())?;
            crate::spacecraft::mechanical_model(&sc).map_err(|e| Error::schema("plant", e.to_string()))?;
            Ok(PlantConfig::Builtin { spacecraft: sc, aocs })
        }
        "external" => {
            n.check_keys(&["kind", "a", "b", "c", "d", "inputs", "outputs", "matrix_file", "normalized"])?;
            let normalized = n.boolean("normalized")?.unwrap_or(false);
            let model = if let Some(file) = n.string("matrix_file")? {
                for k in ["a", "b", "c", "d", "inputs", "outputs"] {
                    if n.get(k).is_some() {
                        return Err(Error::schema(n.p(k), "give either matrix_file or inline matrices, not both"));
                    }
                }
                let path = base_dir.join(&file);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                parse_matrix_file(&text).map_err(|e| match e {
                    Error::Schema { path: p, message } => Error::schema(format!("{} ({}): {p}", n.p("matrix_file"), file), message),
                    other => other,
                })?
            } else {
                let dm = |k: &str| -> Result<DMatrix<f64>> {
                    let rows = n.matrix(k, Dim::None)?.unwrap_or_default();
                    let r = rows.len();
                    let c = rows.first().map(|x| x.len()).unwrap_or(0);
                    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
                };
                let names = |k: &str| -> Result<Vec<String>> {
                    let v = n.require(k)?;
                    let arr = v.as_array().ok_or_else(|| Error::schema(n.p(k), "expected an array of names"))?;
                    arr.iter()
                        .map(|x| {
                            x.as_str()
                                .map(str::to_string)
                                .ok_or_else(|| Error::schema(n.p(k), "names must be strings"))
                        })
                        .collect()
                };
                let inputs = names("inputs")?;
                let outputs = names("outputs")?;
                let (a, mut b, mut c, mut d) = (dm("a")?, dm("b")?, dm("c")?, dm("d")?);
                let nx = a.nrows();
                if nx == 0 {
                    b = DMatrix::zeros(0, inputs.len());
                    c = DMatrix::zeros(outputs.len(), 0);
                }
                if d.is_empty() {
                    d = DMatrix::zeros(outputs.len(), inputs.len());
                }
                StateSpace::with_names(a, b, c, d, inputs, outputs).map_err(|e| Error::schema(&n.path, e.to_string()))?
            };
            Ok(PlantConfig::External { model, normalized })
        }
        other => Err(Error::schema(n.p("kind"), format!("`{other}` is not one of builtin, external"))),
    }
}

/// Matrix file: `inputs` and `outputs` header lines naming channels, then
/// `A`, `B`, `C` and optionally `D` blocks of whitespace-separated rows.
/// `#` starts a comment.
pub fn parse_matrix_file(text: &str) -> Result<StateSpace> {
    let mut inputs: Option<Vec<String>> = None;
    let mut outputs: Option<Vec<String>> = None;
    let mut blocks: [Vec<Vec<f64>>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let first = words.next().unwrap_or("");
        let at = format!("line {}", ln + 1);
        match first {
            "inputs" => inputs = Some(words.map(str::to_string).collect()),
            "outputs" => outputs = Some(words.map(str::to_string).collect()),
            "A" | "B" | "C" | "D" => {
                current = Some(["A", "B", "C", "D"].iter().position(|b| *b == first).expect("matched"));
                if words.next().is_some() {
                    return Err(Error::schema(at, "block header takes no values"));
                }
            }
            _ => {
                let k = current.ok_or_else(|| Error::schema(&at, "numbers before any A/B/C/D block"))?;
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|w| w.parse::<f64>().map_err(|_| Error::schema(&at, format!("`{w}` is not a number"))))
                    .collect::<Result<_>>()?;
                if let Some(prev) = blocks[k].first() {
                    if prev.len() != row.len() {
                        return Err(Error::schema(&at, "row length differs from the block's first row"));
                    }
                }
                blocks[k].push(row);
            }
        }
    }
    let inputs = inputs.ok_or_else(|| Error::schema("inputs", "missing header line naming the inputs"))?;
    let outputs = outputs.ok_or_else(|| Error::schema("outputs", "missing header line naming the outputs"))?;
    let to_m = |rows: &Vec<Vec<f64>>, r: usize, c: usize| -> DMatrix<f64> {
        if rows.is_empty() {
            DMatrix::zeros(r, c)
        } else {
            DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
        }
    };
    let nx = blocks[0].len();
    let (m, p) = (inputs.len(), outputs.len());
    let a = to_m(&blocks[0], nx, nx);
    let b = to_m(&blocks[1], nx, m);
    let c = to_m(&blocks[2], p, nx);
    let d = to_m(&blocks[3], p, m);
    StateSpace::with_names(a, b, c, d, inputs, outputs).map_err(|e| Error::schema("matrix_file", e.to_string()))
}

fn parse_uncertainty(root: &Node, plant: &PlantConfig) -> Result<UncertaintyConfig> {
    let Some(n) = root.sub("uncertainty")? else {
        return Ok(UncertaintyConfig {
            enabled: false,
            parameters: Vec::new(),
        });
    };
    n.check_keys(&["enabled", "parameters"])?;
    let enabled = n.boolean("enabled")?.unwrap_or(true);
    let parameters = match n.get("parameters") {
        None => match plant {
            PlantConfig::Builtin { .. } => reference::uncertainty(),
            PlantConfig::External { .. } => Vec::new(),
        },
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::schema(n.p("parameters"), "expected an array of tables"))?;
            let mut out: Vec<UncertainParameter> = Vec::new();
            for (i, p) in arr.iter().enumerate() {
                let path = format!("{}[{i}]", n.p("parameters"));
                let t = p.as_table().ok_or_else(|| Error::schema(&path, "expected a table"))?;
                let pn = Node { path, table: t };
                pn.check_keys(&["name", "nominal", "lower", "upper", "relative"])?;
                let name = pn.string("name")?.ok_or_else(|| Error::schema(pn.p("name"), "missing required field"))?;
                if !PARAM_NAMES.contains(&name.as_str()) {
                    return Err(Error::schema(
                        pn.p("name"),
                        format!("unknown parameter `{name}` (expected one of {})", PARAM_NAMES.join(", ")),
                    ));
                }
                if out.iter().any(|q| q.name == name) {
                    return Err(Error::schema(pn.p("name"), format!("duplicate parameter `{name}`")));
                }
                let dim = match name.as_str() {
                    "mass" => Dim::Mass,
                    "inertia_xx" | "inertia_yy" | "inertia_zz" => Dim::Inertia,
                    n if n.starts_with("mode_freq_") => Dim::AngularFrequency,
                    _ => Dim::None,
                };
                let nominal = pn
                    .quantity("nominal", dim)?
                    .ok_or_else(|| Error::schema(pn.p("nominal"), "missing required field"))?;
                let param = match pn.quantity("relative", Dim::None)? {
                    Some(r) => {
                        if pn.get("lower").is_some() || pn.get("upper").is_some() {
                            return Err(Error::schema(pn.p("relative"), "give either relative or lower/upper"));
                        }
                        UncertainParameter::relative(name, nominal, r)
                    }
                    None => {
                        let lo = pn
                            .quantity("lower", dim)?
                            .ok_or_else(|| Error::schema(pn.p("lower"), "missing required field"))?;
                        let hi = pn
                            .quantity("upper", dim)?
                            .ok_or_else(|| Error::schema(pn.p("upper"), "missing required field"))?;
                        UncertainParameter::new(name, nominal, lo, hi)
                    }
                }
                .map_err(|e| Error::schema(&pn.path, e.to_string()))?;
                out.push(param);
            }
            out
        }
    };
    if enabled && matches!(plant, PlantConfig::External { .. }) && !parameters.is_empty() {
        return Err(Error::schema(
            "uncertainty.parameters",
            "uncertain parameters apply to the builtin plant only",
        ));
    }
    Ok(UncertaintyConfig { enabled, parameters })
}

fn parse_combination(root: &Node, known: &[&str]) -> Result<CombinationConfig> {
    let mut c = CombinationConfig {
        method: Method::Advanced,
        samples: 1_000_000,
        seed: 1,
        correlations: CorrelationSpec::default(),
    };
    let Some(n) = root.sub("combination")? else { return Ok(c) };
    n.check_keys(&["method", "samples", "seed", "correlations"])?;
    if let Some(m) = n.string("method")? {
        c.method = enum_value(&m.to_lowercase(), &n.p("method"), &["simplified", "advanced"])?;
    }
    if let Some(s) = n.uint("samples")? {
        if (s as usize) < MIN_SAMPLES {
            return Err(Error::schema(n.p("samples"), format!("must be at least {MIN_SAMPLES}")));
        }
        c.samples = s as usize;
    }
    if let Some(s) = n.uint("seed")? {
        c.seed = s;
    }
    if let Some(v) = n.get("correlations") {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::schema(n.p("correlations"), "expected an array of name pairs"))?;
        for (i, p) in arr.iter().enumerate() {
            let path = format!("{}[{i}]", n.p("correlations"));
            let pair = p
                .as_array()
                .filter(|a| a.len() == 2 && a.iter().all(|x| x.is_str()))
                .ok_or_else(|| Error::schema(&path, "expected a pair of source names"))?;
            c.correlations.pairs.push((
                pair[0].as_str().expect("checked").to_string(),
                pair[1].as_str().expect("checked").to_string(),
            ));
        }
        c.correlations
            .validate(known)
            .map_err(|e| Error::schema(n.p("correlations"), e.to_string()))?;
    }
    Ok(c)
}

fn parse_worstcase(root: &Node, uncertain: bool) -> Result<WorstCaseConfig> {
    let mut w = WorstCaseConfig {
        enabled: uncertain,
        criteria: Criterion::ALL.to_vec(),
        budget: 20_000,
        starts: 16,
        seed: 1,
    };
    let Some(n) = root.sub("worstcase")? else { return Ok(w) };
    n.check_keys(&["enabled", "criteria", "budget", "starts", "seed"])?;
    if let Some(b) = n.boolean("enabled")? {
        w.enabled = b;
    }
    if let Some(v) = n.get("criteria") {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::schema(n.p("criteria"), "expected an array of criteria"))?;
        let mut crit = Vec::new();
        for (i, c) in arr.iter().enumerate() {
            let path = format!("{}[{i}]", n.p("criteria"));
            let s = c.as_str().ok_or_else(|| Error::schema(&path, "expected a string"))?;
            let k: Criterion = enum_value(s, &path, &["variance", "gain", "dc_gain"])?;
            if !crit.contains(&k) {
                crit.push(k);
            }
        }
        w.criteria = crit;
    }
    if let Some(b) = n.uint("budget")? {
        if b == 0 {
            return Err(Error::schema(n.p("budget"), "must be positive"));
        }
        w.budget = b as usize;
    }
    if let Some(s) = n.uint("starts")? {
        w.starts = s as usize;
    }
    if let Some(s) = n.uint("seed")? {
        w.seed = s;
    }
    Ok(w)
}

fn parse_output(root: &Node) -> Result<OutputConfig> {
    let mut o = OutputConfig {
        dir: PathBuf::from("out"),
        formats: FORMATS.iter().map(|s| s.to_string()).collect(),
    };
    let Some(n) = root.sub("output")? else { return Ok(o) };
    n.check_keys(&["dir", "formats"])?;
    if let Some(d) = n.string("dir")? {
        o.dir = PathBuf::from(d);
    }
    if let Some(v) = n.get("formats") {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::schema(n.p("formats"), "expected an array"))?;
        let mut f = Vec::new();
        for (i, x) in arr.iter().enumerate() {
            let path = format!("{}[{i}]", n.p("formats"));
            let s = x.as_str().ok_or_else(|| Error::schema(&path, "expected a string"))?;
            if !FORMATS.contains(&s) {
                return Err(Error::schema(&path, format!("`{s}` is not one of {}", FORMATS.join(", "))));
            }
            f.push(s.to_string());
        }
        o.formats = f;
    }
    Ok(o)
}

fn parse_transfer(root: &Node) -> Result<(PsdConvention, f64)> {
    let Some(n) = root.sub("transfer")? else {
        return Ok((PsdConvention::default(), 0.05));
    };
    n.check_keys(&["psd_convention", "fit_tolerance"])?;
    let conv = match n.string("psd_convention")? {
        Some(s) => enum_value(&s, &n.p("psd_convention"), &["unit", "one_sided_hz", "rad_per_sec"])?,
        None => PsdConvention::default(),
    };
    let tol = n.quantity("fit_tolerance", Dim::None)?.unwrap_or(0.05);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::schema(n.p("fit_tolerance"), "must lie in (0, 1)"));
    }
    Ok((conv, tol))
}

fn cross_check(cfg: &ScenarioConfig) -> Result<()> {
    let (inputs, n_out): (Vec<String>, usize) = match &cfg.plant {
        PlantConfig::Builtin { spacecraft, .. } => {
            (crate::spacecraft::closed_loop_inputs(spacecraft.arrays.len()), 3)
        }
        PlantConfig::External { model, .. } => (model.inputs.clone(), model.noutputs()),
    };
    if cfg.metric.requirement.len() != n_out {
        return Err(Error::schema(
            "metric.requirement",
            format!("{} values for {} pointing axes", cfg.metric.requirement.len(), n_out),
        ));
    }
    for (i, s) in cfg.sources.iter().enumerate() {
        for (k, ax) in s.axes.iter().enumerate() {
            if let Some(ax) = ax {
                if !inputs.contains(&ax.channel) {
                    return Err(Error::schema(
                        format!("sources[{i}].{}.channel", AXES[k]),
                        format!("unknown channel `{}` (plant inputs: {})", ax.channel, inputs.join(", ")),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Parses scenario text; relative file references resolve against `base_dir`.
pub fn parse_str(text: &str, base_dir: &Path) -> Result<ScenarioConfig> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        let at = e
            .span()
            .map(|s| {
                let line = text[..s.start.min(text.len())].lines().count().max(1);
                format!("line {line}")
            })
            .unwrap_or_else(|| "<document>".into());
        Error::schema(at, msg)
    })?;
    let root = Node::root(&table);
    root.check_keys(&[
        "name",
        "metric",
        "sources",
        "plant",
        "transfer",
        "uncertainty",
        "combination",
        "worstcase",
        "output",
    ])?;
    let name = root.string("name")?.unwrap_or_else(|| "scenario".into());
    let metric = parse_metric(&root)?;
    let sources = parse_sources(&root)?;
    let plant = parse_plant(&root, base_dir)?;
    let (psd_convention, fit_tolerance) = parse_transfer(&root)?;
    let uncertainty = parse_uncertainty(&root, &plant)?;
    let known: Vec<&str> = sources.iter().map(|s| s.name.as_str()).collect();
    let combination = parse_combination(&root, &known)?;
    let worstcase = parse_worstcase(&root, uncertainty.enabled)?;
    let output = parse_output(&root)?;
    let cfg = ScenarioConfig {
        name,
        metric,
        sources,
        plant,
        psd_convention,
        fit_tolerance,
        uncertainty,
        combination,
        worstcase,
        output,
    };
    cross_check(&cfg)?;
    Ok(cfg)
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_str(&text, &base)
}

fn arr_f(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| Value::Float(*x)).collect())
}

fn arr_m<R: AsRef<[f64]>>(rows: &[R]) -> Value {
    Value::Array(rows.iter().map(|r| arr_f(r.as_ref())).collect())
}

fn dm_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn param_value(p: &Param) -> Value {
    let mut t = Table::new();
    match *p {
        Param::Fixed { value } => return Value::Float(value),
        Param::Gaussian { mean, std } => {
            t.insert("law".into(), "gaussian".into());
            t.insert("mean".into(), mean.into());
            t.insert("std".into(), std.into());
        }
        Param::Uniform { lower, upper } => {
            t.insert("law".into(), "uniform".into());
            t.insert("lower".into(), lower.into());
            t.insert("upper".into(), upper.into());
        }
    }
    Value::Table(t)
}

fn law_table(ax: &AxisSpec) -> Table {
    let mut t = Table::new();
    t.insert("channel".into(), ax.channel.clone().into());
    match &ax.law {
        Law::Delta { value } => {
            t.insert("law".into(), "delta".into());
            t.insert("value".into(), param_value(value));
        }
        Law::Gaussian { mean, std } => {
            t.insert("law".into(), "gaussian".into());
            t.insert("mean".into(), param_value(mean));
            t.insert("std".into(), param_value(std));
        }
        Law::Uniform { lower, upper } => {
            t.insert("law".into(), "uniform".into());
            t.insert("lower".into(), param_value(lower));
            t.insert("upper".into(), param_value(upper));
        }
        Law::WhitePsd { level } => {
            t.insert("law".into(), "white_psd".into());
            t.insert("level".into(), param_value(level));
        }
        Law::Sinusoid { amplitude, frequency_hz } => {
            t.insert("law".into(), "sinusoid".into());
            t.insert("amplitude".into(), param_value(amplitude));
            t.insert("frequency".into(), (*frequency_hz).into());
        }
    }
    t
}

fn to_value<T: Serialize>(x: &T) -> Value {
    Value::try_from(x).expect("plain enum serializes")
}

/// Canonical scenario text: SI numbers, no unit suffixes, inline matrices.
pub fn to_toml(cfg: &ScenarioConfig) -> String {
    let mut root = Table::new();
    root.insert("name".into(), cfg.name.clone().into());

    let mut m = Table::new();
    m.insert("index".into(), cfg.metric.index.label().into());
    if let Some(w) = cfg.metric.window {
        m.insert("window".into(), w.into());
    }
    m.insert("confidence".into(), cfg.metric.confidence.into());
    m.insert("requirement".into(), arr_f(&cfg.metric.requirement));
    m.insert("requirement_units".into(), cfg.metric.requirement_units.clone().into());
    m.insert("interpretation".into(), to_value(&cfg.metric.interpretation));
    root.insert("metric".into(), Value::Table(m));

    let mut tr = Table::new();
    tr.insert("psd_convention".into(), to_value(&cfg.psd_convention));
    tr.insert("fit_tolerance".into(), cfg.fit_tolerance.into());
    root.insert("transfer".into(), Value::Table(tr));

    let mut p = Table::new();
    match &cfg.plant {
        PlantConfig::Builtin { spacecraft, aocs } => {
            p.insert("kind".into(), "builtin".into());
            p.insert("sadm_tan_quarter_angle".into(), spacecraft.sadm_tan_quarter_angle.into());
            let mut b = Table::new();
            b.insert("mass".into(), spacecraft.body.mass.into());
            b.insert("inertia".into(), arr_m(&spacecraft.body.inertia));
            b.insert("cg".into(), arr_f(&spacecraft.body.cg));
            p.insert("body".into(), Value::Table(b));
            let arrays = spacecraft
                .arrays
                .iter()
                .map(|a| {
                    let mut t = Table::new();
                    t.insert("name".into(), a.name.clone().into());
                    t.insert("mass".into(), a.mass.into());
                    t.insert("inertia".into(), arr_m(&a.inertia));
                    t.insert("cg_offset".into(), arr_f(&a.cg_offset));
                    t.insert("attachment".into(), arr_f(&a.attachment));
                    t.insert("frame".into(), arr_m(&a.frame));
                    t.insert("mode_freqs".into(), arr_f(&a.mode_freqs));
                    t.insert("damping".into(), arr_f(&a.damping));
                    t.insert("participation".into(), arr_m(&a.participation));
                    Value::Table(t)
                })
                .collect();
            p.insert("arrays".into(), Value::Array(arrays));
            let mut a = Table::new();
            a.insert("rwa_bandwidth".into(), aocs.rwa_bandwidth_hz.into());
            a.insert("rwa_damping".into(), aocs.rwa_damping.into());
            a.insert("star_tracker_cutoff".into(), aocs.star_tracker_cutoff_hz.into());
            a.insert("gyro_cutoff".into(), aocs.gyro_cutoff_hz.into());
            a.insert("gamma".into(), aocs.gamma.into());
            a.insert("zeta_des".into(), aocs.zeta_des.into());
            a.insert("t_pert".into(), arr_f(&aocs.t_pert));
            a.insert("theta_ape".into(), arr_f(&aocs.theta_ape));
            p.insert("aocs".into(), Value::Table(a));
        }
        PlantConfig::External { model, normalized } => {
            p.insert("kind".into(), "external".into());
            p.insert("normalized".into(), (*normalized).into());
            p.insert("a".into(), arr_m(&dm_rows(&model.a)));
            p.insert("b".into(), arr_m(&dm_rows(&model.b)));
            p.insert("c".into(), arr_m(&dm_rows(&model.c)));
            p.insert("d".into(), arr_m(&dm_rows(&model.d)));
            p.insert("inputs".into(), Value::Array(model.inputs.iter().map(|s| s.clone().into()).collect()));
            p.insert("outputs".into(), Value::Array(model.outputs.iter().map(|s| s.clone().into()).collect()));
        }
    }
    root.insert("plant".into(), Value::Table(p));

    let sources = cfg
        .sources
        .iter()
        .map(|s| {
            let mut t = Table::new();
            t.insert("name".into(), s.name.clone().into());
            t.insert("kind".into(), s.kind.label().into());
            t.insert("units".into(), s.units.clone().into());
            for (k, ax) in s.axes.iter().enumerate() {
                if let Some(ax) = ax {
                    t.insert(AXES[k].into(), Value::Table(law_table(ax)));
                }
            }
            Value::Table(t)
        })
        .collect();
    root.insert("sources".into(), Value::Array(sources));

    let mut u = Table::new();
    u.insert("enabled".into(), cfg.uncertainty.enabled.into());
    let params = cfg
        .uncertainty
        .parameters
        .iter()
        .map(|q| {
            let mut t = Table::new();
            t.insert("name".into(), q.name.clone().into());
            t.insert("nominal".into(), q.nominal.into());
            t.insert("lower".into(), q.lower.into());
            t.insert("upper".into(), q.upper.into());
            Value::Table(t)
        })
        .collect();
    u.insert("parameters".into(), Value::Array(params));
    root.insert("uncertainty".into(), Value::Table(u));

    let mut c = Table::new();
    c.insert("method".into(), to_value(&cfg.combination.method));
    c.insert("samples".into(), (cfg.combination.samples as i64).into());
    c.insert("seed".into(), (cfg.combination.seed as i64).into());
    c.insert(
        "correlations".into(),
        Value::Array(
            cfg.combination
                .correlations
                .pairs
                .iter()
                .map(|(a, b)| Value::Array(vec![a.clone().into(), b.clone().into()]))
                .collect(),
        ),
    );
    root.insert("combination".into(), Value::Table(c));

    let mut w = Table::new();
    w.insert("enabled".into(), cfg.worstcase.enabled.into());
    w.insert(
        "criteria".into(),
        Value::Array(cfg.worstcase.criteria.iter().map(to_value).collect()),
    );
    w.insert("budget".into(), (cfg.worstcase.budget as i64).into());
    w.insert("starts".into(), (cfg.worstcase.starts as i64).into());
    w.insert("seed".into(), (cfg.worstcase.seed as i64).into());
    root.insert("worstcase".into(), Value::Table(w));

    let mut o = Table::new();
    o.insert("dir".into(), cfg.output.dir.to_string_lossy().into_owned().into());
    o.insert(
        "formats".into(),
        Value::Array(cfg.output.formats.iter().map(|s| s.clone().into()).collect()),
    );
    root.insert("output".into(), Value::Table(o));

    toml::to_string(&root).expect("scenario serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[metric]
index = "APE"
requirement = ["0.1745 mrad", "0.1745 mrad", "0.873 mrad"]

[plant]
kind = "builtin"

[[sources]]
name = "Orbital disturbance"
kind = "time_constant"
units = "N·m"
x = { channel = "orbital_x", value = "0.03 Nm" }
"#;

    fn parse(s: &str) -> Result<ScenarioConfig> {
        parse_str(s, Path::new("."))
    }

    fn schema_path(e: Error) -> String {
        match e {
            Error::Schema { path, .. } => path,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn quantities() {
        assert!((parse_quantity("0.1745 mrad", Dim::Angle).unwrap() - 0.1745e-3).abs() < 1e-18);
        assert!((parse_quantity("60 µrad", Dim::Angle).unwrap() - 6e-5).abs() < 1e-18);
        assert_eq!(parse_quantity("3 ms", Dim::Time).unwrap(), 0.003);
        assert_eq!(parse_quantity("1e-8", Dim::Angle).unwrap(), 1e-8);
        assert!((parse_quantity("1 Hz", Dim::AngularFrequency).unwrap() - 2.0 * PI).abs() < 1e-15);
        assert!(parse_quantity("3 Hz", Dim::Angle).unwrap_err().contains("mismatch"));
        assert!(parse_quantity("3 furlong", Dim::Angle).is_err());
        assert_eq!(parse_psd("1e-8 rad^2/Hz", Dim::Angle).unwrap(), 1e-8);
        assert_eq!(parse_psd("1e-10 (rad/s)^2/Hz", Dim::Rate).unwrap(), 1e-10);
        assert!(parse_psd("1e-10 (rad/s)^2/Hz", Dim::Angle).is_err());
    }

    #[test]
    fn minimal_scenario_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.metric.requirement.len(), 3);
        assert!((c.metric.requirement[2] - 0.873e-3).abs() < 1e-15);
        assert_eq!(c.combination.method, Method::Advanced);
        assert!(!c.uncertainty.enabled);
        assert!(!c.worstcase.enabled);
        assert!(matches!(c.plant, PlantConfig::Builtin { .. }));
    }

    #[test]
    fn missing_requirement_names_field() {
        let s = MINIMAL.replace("requirement = [\"0.1745 mrad\", \"0.1745 mrad\", \"0.873 mrad\"]", "");
        assert_eq!(schema_path(parse(&s).unwrap_err()), "metric.requirement");
    }

    #[test]
    fn undeclared_requirement_units() {
        let s = MINIMAL.replace("[\"0.1745 mrad\", \"0.1745 mrad\", \"0.873 mrad\"]", "[1.0, 1.0, 1.0]");
        assert_eq!(schema_path(parse(&s).unwrap_err()), "metric.requirement_units");
    }

    #[test]
    fn unknown_channel() {
        let s = MINIMAL.replace("orbital_x", "orbital_q");
        assert_eq!(schema_path(parse(&s).unwrap_err()), "sources[0].x.channel");
    }

    #[test]
    fn unit_mismatch() {
        let s = MINIMAL.replace("0.03 Nm", "0.03 Hz");
        let e = parse(&s).unwrap_err();
        assert!(e.to_string().contains("mismatch"), "{e}");
        assert_eq!(schema_path(e), "sources[0].x.value");
    }

    #[test]
    fn unknown_key() {
        let s = format!("{MINIMAL}\n[combination]\nmethd = \"advanced\"\n");
        assert_eq!(schema_path(parse(&s).unwrap_err()), "combination.methd");
    }

    #[test]
    fn window_required_for_rpe() {
        let s = MINIMAL.replace("index = \"APE\"", "index = \"RPE\"");
        assert_eq!(schema_path(parse(&s).unwrap_err()), "metric.window");
    }

    #[test]
    fn round_trip() {
        let c = parse(MINIMAL).unwrap();
        let again = parse(&to_toml(&c)).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn external_inline_and_file() {
        let inline = r#"
[metric]
index = "APE"
requirement = [1.0]
requirement_units = "rad"
[plant]
kind = "external"
a = [[-1.0]]
b = [[1.0]]
c = [[1.0]]
inputs = ["u"]
outputs = ["y"]
[[sources]]
name = "bias"
kind = "time_constant"
units = "rad"
x = { channel = "u", value = 2.0 }
"#;
        let c = parse(inline).unwrap();
        let again = parse(&to_toml(&c)).unwrap();
        assert_eq!(c, again);
        let file = "inputs u\noutputs y\nA\n-1\nB\n1\nC\n1\n";
        let m = parse_matrix_file(file).unwrap();
        match c.plant {
            PlantConfig::External { model, .. } => assert_eq!(model, m),
            _ => unreachable!(),
        }
        assert!(parse_matrix_file("inputs u\nA\n-1\n").is_err());
    }
}
