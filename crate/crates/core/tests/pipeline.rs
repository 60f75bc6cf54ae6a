use pointbudget::combine::Method;
use pointbudget::metrics::{Interpretation, MetricIndex};
use pointbudget::pipeline::{run, RunOptions, FLAG_ATTITUDE_ONLY, FLAG_BANDWIDTH, FLAG_PERIODIC_RPE};
use pointbudget::report::{budget_text, emit};
use pointbudget::scenario::{parse_scenario, parse_str, to_toml, ScenarioConfig};
use pointbudget::Error;
use std::path::{Path, PathBuf};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn ape() -> ScenarioConfig {
    parse_scenario(&scenario("case_study_ape.scn")).unwrap()
}

const EXTERNAL: &str = r#"
name = "toy"
[metric]
index = "APE"
confidence = 0.95
requirement = ["1 mrad"]
[plant]
kind = "external"
a = [[-2.0]]
b = [[1.0]]
c = [[1.0]]
inputs = ["u"]
outputs = ["y"]
[combination]
samples = 20000
[[sources]]
name = "bias"
kind = "time_constant"
units = "rad"
x = { channel = "u", value = "0.2 mrad" }
[[sources]]
name = "noise"
kind = "random_process"
units = "rad"
x = { channel = "u", level = "1e-9 rad^2/Hz" }
"#;

#[test]
fn shipped_scenarios_carry_the_analysis_settings() {
    let one = ape();
    assert_eq!(one.metric.index, MetricIndex::Ape);
    assert_eq!(one.metric.interpretation, Interpretation::Temporal);
    assert_eq!(one.metric.confidence, 0.997);
    assert_eq!(one.combination.method, Method::Advanced);
    assert!(!one.uncertainty.enabled);

    let two = parse_scenario(&scenario("case_study_rpe_wc.scn")).unwrap();
    assert_eq!(two.metric.index, MetricIndex::Rpe);
    assert_eq!(two.metric.window, Some(0.003));
    assert!(two.uncertainty.enabled);
    assert_eq!(two.uncertainty.parameters.len(), 8);
    assert!(two.worstcase.enabled);
    assert!(two.worstcase.budget <= 20_000);
}

#[test]
fn shipped_scenarios_round_trip() {
    for name in ["case_study_ape.scn", "case_study_rpe_wc.scn"] {
        let c = parse_scenario(&scenario(name)).unwrap();
        let again = parse_str(&to_toml(&c), Path::new(".")).unwrap();
        assert_eq!(c, again, "{name}");
    }
}

#[test]
fn simplified_totals_within_three_percent_of_advanced() {
    let cfg = ape();
    let adv = run(&cfg, &RunOptions::default()).unwrap();
    let simp = run(&cfg, &RunOptions { method: Some(Method::Simplified), ..Default::default() }).unwrap();
    for (a, s) in adv.nominal.totals().iter().zip(simp.nominal.totals()) {
        assert!((a - s).abs() / a < 0.03, "{a} vs {s}");
    }
}

#[test]
fn report_carries_design_flags() {
    let r = run(&ape(), &RunOptions { samples: Some(20_000), ..Default::default() }).unwrap();
    for f in [FLAG_BANDWIDTH, FLAG_ATTITUDE_ONLY, FLAG_PERIODIC_RPE] {
        assert!(r.flags.iter().any(|x| x == f), "missing flag {f}");
    }
}

#[test]
fn emitted_files_are_well_formed() {
    let cfg = ape();
    let r = run(&cfg, &RunOptions { samples: Some(50_000), dump_model: true, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit(&r, dir.path(), &cfg.output.formats).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for n in ["report.json", "budget.txt", "model.json", "cdf_total_x.dat", "pdf_sadm1_disturbance_z.dat", "psd_star_sensor_noise_y.dat"] {
        assert!(names.iter().any(|x| x == n), "missing {n} in {names:?}");
    }
    let rows = |name: &str| -> Vec<(f64, f64)> {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let mut it = l.split_whitespace().map(|v| v.parse::<f64>().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect()
    };
    let cdf = rows("cdf_total_z.dat");
    assert!(cdf.windows(2).all(|w| w[1].1 >= w[0].1));
    assert_eq!(cdf.last().unwrap().1, 1.0);
    let psd = rows("psd_star_sensor_noise_y.dat");
    let rec = r.nominal.contributions.iter().find(|c| c.source_name == "Star sensor noise" && c.axis == 1).unwrap();
    assert_eq!(psd.len(), rec.psd.as_ref().unwrap().frequencies_hz.len());

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["tool"], "pointbudget");
    assert!(json["nominal"]["axes"].as_array().unwrap().len() == 3);

    let text = budget_text(&r);
    let table: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("Error budget ")).collect();
    assert!(table[0].split_whitespace().collect::<Vec<_>>().ends_with(&["x", "y", "z"]));
    for row in ["Time constant", "Random process", "Periodic", "Total", "Requirement", "Margin"] {
        let line = table.iter().find(|l| l.starts_with(row)).unwrap_or_else(|| panic!("row {row}"));
        assert_eq!(line[28..].split_whitespace().count(), 3, "{line}");
    }
}

#[test]
fn external_plant_runs() {
    let cfg = parse_str(EXTERNAL, Path::new(".")).unwrap();
    let r = run(&cfg, &RunOptions::default()).unwrap();
    let bias = r.nominal.contributions.iter().find(|c| c.source_name == "bias").unwrap();
    assert!((bias.mean - 1e-4).abs() < 1e-15, "{}", bias.mean);
    assert!(r.nominal.axes[0].total > 1e-4);
    assert_eq!(r.nominal.axes[0].requirement, 1e-3);
}

#[test]
fn unstable_external_plant_is_reported() {
    let s = EXTERNAL.replace("a = [[-2.0]]", "a = [[0.5]]");
    let cfg = parse_str(&s, Path::new(".")).unwrap();
    assert!(matches!(run(&cfg, &RunOptions::default()), Err(Error::Unstable { .. })));
}

#[test]
fn worst_case_needs_uncertainty() {
    let e = run(&ape(), &RunOptions { worst_case: true, ..Default::default() }).unwrap_err();
    assert!(matches!(e, Error::Schema { ref path, .. } if path == "uncertainty.enabled"), "{e}");
}

#[test]
fn matrix_file_is_resolved_next_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy.mat"), "# first order\ninputs u\noutputs y\nA\n-2\nB\n1\nC\n1\n").unwrap();
    let s = EXTERNAL.replace(
        "a = [[-2.0]]\nb = [[1.0]]\nc = [[1.0]]\ninputs = [\"u\"]\noutputs = [\"y\"]",
        "matrix_file = \"toy.mat\"",
    );
    let path = dir.path().join("toy.scn");
    std::fs::write(&path, s).unwrap();
    let from_file = parse_scenario(&path).unwrap();
    let inline = parse_str(EXTERNAL, Path::new(".")).unwrap();
    let a = run(&from_file, &RunOptions::default()).unwrap();
    let b = run(&inline, &RunOptions::default()).unwrap();
    assert_eq!(a.nominal, b.nominal);
}
