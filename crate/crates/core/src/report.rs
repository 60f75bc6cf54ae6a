//! Report files: `report.json`, `budget.txt` and two-column `.dat` plot data.

use crate::combine::{term_draw, BudgetReport, Category};
use crate::error::{Error, Result};
use crate::pipeline::{governed, RunReport, WorstCaseReport};
use crate::sources::{stream_rng, AXES};
use crate::worstcase::Criterion;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const HISTOGRAM_SAMPLES: usize = 100_000;
pub const HISTOGRAM_BINS: usize = 100;

fn axis_name(i: usize) -> String {
    AXES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("out{i}"))
}

/// File-name stem: lowercase alphanumerics joined by `_`.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

fn write(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn two_col(rows: impl IntoIterator<Item = (f64, f64)>, header: &str) -> String {
    let mut s = format!("# {header}\n");
    for (a, b) in rows {
        let _ = writeln!(s, "{a:.9e} {b:.9e}");
    }
    s
}

fn row(label: &str, vals: &[f64], fmt: impl Fn(f64) -> String) -> String {
    let mut s = format!("{label:<28}");
    for v in vals {
        let _ = write!(s, " {:>13}", fmt(*v));
    }
    s.push('\n');
    s
}

fn sci(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.4e}")
    }
}

fn fixed(v: f64) -> String {
    format!("{v:.4}")
}

fn categories(b: &BudgetReport) -> Vec<Category> {
    let present: BTreeSet<Category> = b.contributions.iter().map(|c| Category::of(c.kind)).collect();
    present.into_iter().collect()
}

fn header_row(n_axes: usize, first: &str) -> String {
    let names: Vec<String> = (0..n_axes).map(axis_name).collect();
    let mut s = format!("{first:<28}");
    for n in names {
        let _ = write!(s, " {n:>13}");
    }
    s.push('\n');
    s
}

/// Per-source mean and standard deviation on every axis.
fn contributions_table(b: &BudgetReport, n_axes: usize) -> String {
    let mut s = header_row(n_axes, "Error source");
    let mut names: Vec<&str> = Vec::new();
    for c in &b.contributions {
        if !names.contains(&c.source_name.as_str()) {
            names.push(&c.source_name);
        }
    }
    for n in names {
        let pick = |f: &dyn Fn(&crate::transfer::ContributionRecord) -> f64| -> Vec<f64> {
            (0..n_axes)
                .map(|a| {
                    b.contributions
                        .iter()
                        .find(|c| c.source_name == n && c.axis == a)
                        .map(f)
                        .unwrap_or(0.0)
                })
                .collect()
        };
        s += &row(&format!("{n} mean"), &pick(&|c| c.mean), sci);
        s += &row(&format!("{n} std"), &pick(&|c| c.std), sci);
    }
    s
}

/// Categories × axes, then total, requirement and margin.
fn budget_table(b: &BudgetReport) -> String {
    let n = b.axes.len();
    let mut s = header_row(n, "Error budget");
    for cat in categories(b) {
        let v: Vec<f64> = (0..n).map(|a| b.subtotal(a, cat)).collect();
        s += &row(cat.label(), &v, sci);
    }
    s += &row("Total", &b.totals(), fixed);
    s += &row("Requirement", &b.axes.iter().map(|a| a.requirement).collect::<Vec<_>>(), fixed);
    s += &row("Margin", &b.axes.iter().map(|a| a.margin).collect::<Vec<_>>(), fixed);
    s
}

fn worst_case_text(wc: &WorstCaseReport, nominal: &BudgetReport) -> String {
    let mut s = String::new();
    let n = nominal.axes.len();
    s += "Worst-case budget comparison (totals)\n";
    s += &header_row(n, "Column");
    s += &row("Nominal", &nominal.totals(), fixed);
    for c in &wc.columns {
        s += &row(c.criterion.label(), &c.budget.totals(), fixed);
    }
    s.push('\n');
    for c in &wc.columns {
        let _ = writeln!(s, "{} column (categories it governs: {})", c.criterion.label(), {
            let g: Vec<&str> = governed(c.criterion).iter().map(|k| k.label()).collect();
            g.join(", ")
        });
        s += &budget_table(&c.budget);
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "Worst-case searches (upper bound: {}; {} of {} evaluations)",
        wc.upper_bound_note, wc.evaluations, wc.evaluation_budget
    );
    let _ = writeln!(
        s,
        "{:<14} {:>4} {:>13} {:>13} {:>13} {:>9}",
        "Criterion", "axis", "nominal", "lower", "upper", "converged"
    );
    for srch in &wc.searches {
        match &srch.result {
            Some(r) => {
                let _ = writeln!(
                    s,
                    "{:<14} {:>4} {:>13} {:>13} {:>13} {:>9}",
                    srch.criterion.label(),
                    axis_name(srch.axis),
                    sci(r.nominal),
                    sci(r.lower_bound),
                    sci(r.upper_bound),
                    r.converged
                );
            }
            None => {
                let _ = writeln!(s, "{:<14} {:>4}   (no source under this criterion)", srch.criterion.label(), axis_name(srch.axis));
            }
        }
    }
    s.push('\n');
    for axis in 0..n {
        let _ = writeln!(s, "Worst-case configurations, {}-axis", axis_name(axis));
        let mut h = format!("{:<24} {:>12}", "Parameter", "Nominal");
        for c in &wc.columns {
            let _ = write!(h, " {:>12}", c.criterion.label());
        }
        s += &h;
        s.push('\n');
        for p in &wc.parameters {
            let mut line = format!("{:<24} {:>12}", p.name, format!("{:.6}", p.nominal));
            for c in &wc.columns {
                let v = c.configs.get(axis).and_then(|m| m.get(&p.name)).copied().unwrap_or(p.nominal);
                let _ = write!(line, " {:>12}", format!("{v:.6}"));
            }
            s += &line;
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

/// Human-readable summary.
pub fn budget_text(r: &RunReport) -> String {
    let b = &r.nominal;
    let n = b.axes.len();
    let mut s = String::new();
    let _ = writeln!(s, "{} {} -- scenario `{}`", r.tool, r.version, r.scenario);
    let _ = writeln!(
        s,
        "index {}{}, confidence {}, method {:?}{}",
        r.index.label(),
        r.window.map(|w| format!(" (window {w} s)")).unwrap_or_default(),
        b.confidence,
        b.method,
        match (b.n_samples, b.seed) {
            (Some(k), Some(seed)) => format!(", {k} samples, seed {seed}"),
            _ => format!(", n_p = {:.4}", b.n_p),
        }
    );
    let req: Vec<String> = r.requirement.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(
        s,
        "requirement [{}] {}{}\n",
        req.join(", "),
        r.requirement_units,
        if r.normalized_outputs { ", outputs normalized by the requirement" } else { "" }
    );
    s += "Error contributions after transfer analysis\n";
    s += &contributions_table(b, n);
    s.push('\n');
    s += "Error budget\n";
    s += &budget_table(b);
    s.push('\n');
    if let Some(wc) = &r.worst_case {
        s += &worst_case_text(wc, b);
    }
    s += "Flags\n";
    for f in &r.flags {
        let _ = writeln!(s, "  - {f}");
    }
    s
}

fn histogram(samples: &[f64], bins: usize) -> Vec<(f64, f64)> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![(lo, 1.0)];
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let k = (((v - lo) / w) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = samples.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(k, c)| (lo + (k as f64 + 0.5) * w, *c as f64 / (n * w)))
        .collect()
}

fn plot_data(r: &RunReport, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let b = &r.nominal;
    let seed = b.seed.unwrap_or(0);
    for (i, c) in b.contributions.iter().enumerate() {
        let stem = format!("{}_{}", slug(&c.source_name), axis_name(c.axis));
        if let Some(psd) = &c.psd {
            let rows = psd.frequencies_hz.iter().copied().zip(psd.values.iter().copied());
            write(dir.join(format!("psd_{stem}.dat")), &two_col(rows, "frequency_hz psd_per_hz"), written)?;
        }
        if c.terms.is_empty() {
            continue;
        }
        let mut rng = stream_rng(seed, 0x5044_4600_0000 + i as u64);
        let samples: Vec<f64> = (0..HISTOGRAM_SAMPLES)
            .map(|_| c.terms.iter().map(|t| term_draw(t, &mut rng)).sum())
            .collect();
        write(
            dir.join(format!("pdf_{stem}.dat")),
            &two_col(histogram(&samples, HISTOGRAM_BINS), "value density"),
            written,
        )?;
    }
    for (axis, curve) in b.cdf.iter().enumerate() {
        write(
            dir.join(format!("cdf_total_{}.dat", axis_name(axis))),
            &two_col(curve.iter().copied(), "abs_total_error cumulative_probability"),
            written,
        )?;
    }
    if let Some(wc) = &r.worst_case {
        for col in &wc.columns {
            let tag = match col.criterion {
                Criterion::Gain => "wc_gain",
                Criterion::Variance => "wc_variance",
                Criterion::DcGain => "wc_dc_gain",
            };
            for (axis, curve) in col.budget.cdf.iter().enumerate() {
                write(
                    dir.join(format!("cdf_{tag}_{}.dat", axis_name(axis))),
                    &two_col(curve.iter().copied(), "abs_total_error cumulative_probability"),
                    written,
                )?;
            }
        }
    }
    Ok(())
}

/// Writes the requested formats (`json`, `txt`, `dat`) into `dir` and
/// returns the files written.
pub fn emit(r: &RunReport, dir: &Path, formats: &[String]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let want = |f: &str| formats.iter().any(|x| x == f);
    if want("json") {
        let text = serde_json::to_string_pretty(r).map_err(|e| Error::Numerical(format!("report serialization: {e}")))?;
        write(dir.join("report.json"), &(text + "\n"), &mut written)?;
    }
    if want("txt") {
        write(dir.join("budget.txt"), &budget_text(r), &mut written)?;
    }
    if want("dat") {
        plot_data(r, dir, &mut written)?;
    }
    if let Some(m) = &r.model {
        let text = serde_json::to_string_pretty(m).map_err(|e| Error::Numerical(format!("model serialization: {e}")))?;
        write(dir.join("model.json"), &(text + "\n"), &mut written)?;
    }
    Ok(written)
}
