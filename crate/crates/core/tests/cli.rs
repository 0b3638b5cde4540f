use std::process::{Command, Output};

use derangetropy::distributions::load_tabulated;
use derangetropy::Distribution;
use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_derangetropy"));
    cmd.env_remove("DERANGETROPY_SEED_TOL");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Parses a CSV table into its header and numeric rows.
fn table(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .unwrap()
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn eval_uniform_rows_and_centre_value() {
    let out = run(&["eval", "--dist", "uniform:0,1", "--points", "1001"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(!text.contains('\r'));
    let (header, rows) = table(&text);
    assert_eq!(header, ["x", "f", "F", "rho"]);
    assert_eq!(rows.len(), 1001);
    let centre = &rows[500];
    assert!((centre[0] - 0.5).abs() < 1e-12);
    assert!((centre[3] - 1.405_196).abs() < 1e-6);
}

#[test]
fn eval_arcsin_is_symmetric_about_half() {
    let out = run(&["eval", "--dist", "arcsin:0,1", "--points", "1001"]);
    assert_eq!(code(&out), 0);
    let (_, rows) = table(&stdout(&out));
    let n = rows.len();
    for i in 1..n / 2 {
        let (a, b) = (&rows[i], &rows[n - 1 - i]);
        assert!((a[0] + b[0] - 1.0).abs() < 1e-12);
        assert!(
            (a[3] - b[3]).abs() <= 1e-9 * a[3].max(1.0),
            "row {i}: {} vs {}",
            a[3],
            b[3]
        );
    }
}

#[test]
fn eval_normal_json_peaks_at_zero() {
    let out = run(&[
        "eval",
        "--dist",
        "normal:0,1",
        "--format",
        "json",
        "--points",
        "2001",
    ]);
    assert_eq!(code(&out), 0);
    let rows: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows.len(), 2001);
    for key in ["x", "f", "F", "rho"] {
        assert!(rows[0].get(key).is_some(), "missing {key}");
    }
    let best = rows
        .iter()
        .max_by(|a, b| {
            a["rho"]
                .as_f64()
                .unwrap()
                .total_cmp(&b["rho"].as_f64().unwrap())
        })
        .unwrap();
    let step = rows[1]["x"].as_f64().unwrap() - rows[0]["x"].as_f64().unwrap();
    assert!(best["x"].as_f64().unwrap().abs() <= step);
}

#[test]
fn energy_uniform_shape() {
    let out = run(&["energy", "--dist", "uniform:0,1", "--points", "1001"]);
    assert_eq!(code(&out), 0);
    let (header, rows) = table(&stdout(&out));
    assert_eq!(header, ["x", "e_oscillatory", "e_structural", "e_total"]);
    let argmin = rows.iter().min_by(|a, b| a[3].total_cmp(&b[3])).unwrap();
    assert!((argmin[0] - 0.5).abs() < 1e-9);
    assert!(rows[500][1].abs() < 1e-15);
    let near_edge = rows.iter().find(|r| r[0] >= 0.001).unwrap();
    assert!(near_edge[1] > near_edge[2], "{near_edge:?}");
}

#[test]
fn recurse_uniform_variance_strictly_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    let grid = dir.path().join("grid.csv");
    let out = run(&[
        "recurse",
        "--dist",
        "uniform:0,1",
        "--levels",
        "5",
        "--out",
        grid.to_str().unwrap(),
        "--metrics-out",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = table(&std::fs::read_to_string(&metrics).unwrap());
    assert_eq!(
        header,
        ["level", "median", "variance", "iqr", "central_mass"]
    );
    assert_eq!(rows.len(), 6);
    assert!(rows.windows(2).all(|w| w[1][2] < w[0][2]));
    let (header, rows) = table(&std::fs::read_to_string(&grid).unwrap());
    assert_eq!(header, ["x", "density", "cdf", "level"]);
    assert_eq!(rows.len(), 6 * 4001);
}

#[test]
fn recurse_arcsin_third_level_is_unimodal() {
    let out = run(&[
        "recurse",
        "--dist",
        "arcsin:-1,1",
        "--levels",
        "3",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["metrics"].as_array().unwrap().len(), 4);
    let level3: Vec<f64> = doc["grid"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["level"].as_u64() == Some(3))
        .map(|r| r["density"].as_f64().unwrap())
        .collect();
    let peak = level3.iter().cloned().fold(0.0, f64::max);
    let top = level3.iter().position(|&v| v == peak).unwrap();
    let rising = level3[..=top]
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-12 * peak);
    let falling = level3[top..]
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12 * peak);
    assert!(rising && falling);
    // The level-0 arcsin density is U-shaped, for contrast.
    let level0: Vec<f64> = doc["grid"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["level"].as_u64() == Some(0))
        .map(|r| r["density"].as_f64().unwrap())
        .collect();
    assert!(level0[0] > level0[level0.len() / 2]);
}

#[test]
fn recurse_csv_has_grid_then_metrics_section() {
    let out = run(&[
        "recurse",
        "--dist",
        "normal:0,1",
        "--levels",
        "2",
        "--points",
        "201",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let (grid, metrics) = text.split_once("\n\n").expect("blank separator line");
    assert_eq!(table(&format!("{grid}\n")).1.len(), 3 * 201);
    assert_eq!(table(metrics).1.len(), 3);
}

#[test]
fn output_is_deterministic() {
    for args in [
        &["eval", "--dist", "semicircle:-1,1"][..],
        &["energy", "--dist", "exponential:2", "--format", "json"][..],
        &[
            "recurse",
            "--dist",
            "normal:1,2",
            "--levels",
            "4",
            "--points",
            "1001",
        ][..],
    ] {
        let a = run(args);
        let b = run(args);
        assert_eq!(code(&a), 0);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn config_file_supplies_fields_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"dist": "uniform:0,1", "points": 201, "format": "json"}"#,
    )
    .unwrap();
    let out = run(&["eval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let rows: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows.len(), 201);

    let out = run(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--points",
        "301",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(table(&stdout(&out)).1.len(), 301);

    std::fs::write(&cfg, r#"{"dist": "uniform:0,1", "colour": "blue"}"#).unwrap();
    assert_eq!(code(&run(&["eval", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(
        code(&run(&["eval", "--config", "/nonexistent/run.json"])),
        2
    );
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["eval"][..],
        &["eval", "--dist", "gamma:1,2"][..],
        &["eval", "--dist", "uniform:1,0"][..],
        &["eval", "--dist", "normal:0"][..],
        &["eval", "--dist", "normal:0,x"][..],
        &["eval", "--dist", "normal"][..],
        &["eval", "--dist", "uniform:0,1", "--points", "50"][..],
        &["eval", "--dist", "uniform:0,1", "--tail-eps", "0.5"][..],
        &["eval", "--dist", "tabulated:/nonexistent.csv"][..],
        &["recurse", "--dist", "uniform:0,1", "--levels", "11"][..],
        &["recurse", "--dist", "uniform:0,1", "--levels", "0"][..],
        &["recurse", "--dist", "uniform:0,1", "--delta", "-1"][..],
        &["verify", "--suite", "everything"][..],
        &["frobnicate"][..],
        &[][..],
    ] {
        let out = run(args);
        assert_eq!(
            code(&out),
            2,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn malformed_tabulated_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("short.csv", "x,f\n0,1\n1,1\n"),
        (
            "nonmonotone.csv",
            "x,f\n0,1\n0.2,1\n0.1,1\n0.3,1\n0.4,1\n0.5,1\n0.6,1\n0.7,1\n",
        ),
        (
            "negative.csv",
            "x,f\n0,1\n0.1,1\n0.2,-1\n0.3,1\n0.4,1\n0.5,1\n0.6,1\n0.7,1\n",
        ),
        (
            "nocolumn.csv",
            "a,b\n0,1\n0.1,1\n0.2,1\n0.3,1\n0.4,1\n0.5,1\n0.6,1\n0.7,1\n",
        ),
        (
            "text.csv",
            "x,f\n0,1\n0.1,one\n0.2,1\n0.3,1\n0.4,1\n0.5,1\n0.6,1\n0.7,1\n",
        ),
    ];
    for (name, body) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        let spec = format!("tabulated:{}", path.display());
        let out = run(&["eval", "--dist", &spec]);
        assert_eq!(
            code(&out),
            2,
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn numerical_failure_exits_3() {
    // A density that vanishes inside its support has no finite energy there.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gap.csv");
    let mut body = String::from("x,f\n");
    for i in 0..=200 {
        let x = i as f64 / 200.0;
        let f = if (0.4..=0.6).contains(&x) { 0.0 } else { 1.0 };
        body.push_str(&format!("{x},{f}\n"));
    }
    std::fs::write(&path, body).unwrap();
    let spec = format!("tabulated:{}", path.display());
    let out = run(&["energy", "--dist", &spec, "--points", "201"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stderr.is_empty());
    // eval is still defined there.
    assert_eq!(code(&run(&["eval", "--dist", &spec])), 0);
}

#[test]
fn verify_suites_report_json_and_exit_0() {
    let out = run(&["verify", "--suite", "appendix"]);
    assert_eq!(code(&out), 0);
    let reports: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(reports.len(), 1);
    let r = &reports[0];
    for key in ["check_name", "residual", "tolerance", "passed", "details"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert!(r["residual"].as_f64().unwrap() <= 1e-8);

    let out = run(&["verify", "--suite", "ode"]);
    assert_eq!(code(&out), 0);
    let reports: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    let ode = reports
        .iter()
        .find(|r| r["check_name"] == "ode_uniform")
        .unwrap();
    assert!(ode["residual"].as_f64().unwrap() <= 1e-4);

    let out = run(&["verify", "--suite", "all"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let reports: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(reports.len() > 20);
    assert!(reports.iter().all(|r| r["passed"] == true));
}

#[test]
fn verify_failure_exits_1() {
    // A very loose quadrature tolerance makes the constant check fail honestly.
    let out = bin()
        .args(["verify", "--suite", "appendix"])
        .env("DERANGETROPY_SEED_TOL", "0.5")
        .output()
        .unwrap();
    let reports: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(reports[0]["passed"], false);
    assert!(reports[0]["residual"].as_f64().unwrap() > 1e-8);
    assert_eq!(code(&out), 1);
    assert_eq!(reports[0]["details"]["abs_tol"].as_f64(), Some(0.5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAILED appendix_constant"));
}

#[test]
fn tolerance_env_var_is_applied_and_validated() {
    let out = bin()
        .args(["verify", "--suite", "appendix"])
        .env("DERANGETROPY_SEED_TOL", "1e-12")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let reports: Vec<Value> = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(reports[0]["details"]["abs_tol"].as_f64(), Some(1e-12));

    for bad in ["abc", "-1", "0"] {
        let out = bin()
            .args(["verify", "--suite", "appendix"])
            .env("DERANGETROPY_SEED_TOL", bad)
            .output()
            .unwrap();
        assert_eq!(code(&out), 2, "{bad}");
    }
}

#[test]
fn eval_output_round_trips_for_smooth_members_on_fine_grids() {
    let dir = tempfile::tempdir().unwrap();
    for dist in ["exponential:1", "semicircle:-1,1"] {
        let path = dir.path().join("grid.csv");
        let out = run(&[
            "eval",
            "--dist",
            dist,
            "--points",
            "100001",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        let Distribution::Tabulated(t) = load_tabulated(&path).unwrap() else {
            panic!("tabulated")
        };
        assert!(
            (t.normalization() - 1.0).abs() <= 1e-6,
            "{dist}: {}",
            t.normalization()
        );
    }
}

#[test]
fn arcsin_eval_output_is_not_unit_trapezoid_mass() {
    // The integrable endpoint spikes dominate the trapezoid sum, so the
    // re-ingested normalization factor is far from 1.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("arcsin.csv");
    let out = run(&[
        "eval",
        "--dist",
        "arcsin:0,1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let Distribution::Tabulated(t) = load_tabulated(&path).unwrap() else {
        panic!("tabulated")
    };
    assert!((t.normalization() - 1.0).abs() > 1e-6);
}
