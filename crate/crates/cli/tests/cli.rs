use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lrequiv"));
    c.env_remove("LREQUIV_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lrequiv")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/matal_style").join(name)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small two-covariate dataset with overlapping classes.
fn write_data(path: &Path, n: usize, shift: f64) {
    let mut s = String::from("a,b,y\n");
    for i in 0..n {
        let a = ((i * 37) % 101) as f64 / 25.0 - 2.0;
        let b = ((i * 53) % 89) as f64 / 22.0 - 2.0;
        let t = 0.3 + 0.8 * a - 0.5 * b + shift;
        let u = ((i * 7919) % 1000) as f64 / 1000.0;
        let y = u32::from(u < 1.0 / (1.0 + (-t).exp()));
        s.push_str(&format!("{a},{b},{y}\n"));
    }
    fs::write(path, s).unwrap();
}

fn validate_report(path: &Path) -> Value {
    let report: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let schema: Value = serde_json::from_str(lrequiv::report::REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
    report
}

#[test]
fn help_documents_defaults() {
    let o = run(&["compare", "--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for needle in [
        "[default: 0.05]",
        "[default: 0.1]",
        "[default: 0.075]",
        "[default: 1.1]",
        "[default: native]",
        "[default: per-eq4]",
        "[default: y]",
        "LREQUIV_OUTPUT_DIR",
    ] {
        assert!(text.contains(needle), "missing {needle} in:\n{text}");
    }
    for cmd in ["simulate", "regen"] {
        assert!(run(&[cmd, "--help"]).status.success());
    }
}

#[test]
fn identical_inputs_are_equivalent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_data(&data, 400, 0.0);
    let out = dir.path().join("r.json");
    let o = run(&[
        "compare", "--train", p(&data), p(&data), "--test", p(&data), p(&data), "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("Models Differ?"));

    let report = validate_report(&out);
    for t in report["tests"].as_array().unwrap() {
        let m = t["method"].as_str().unwrap();
        match t["kind"].as_str().unwrap() {
            "Equiv." => assert_eq!(t["decision"], "equivalent", "{m}"),
            _ if m == "Deviance" => assert!(t["statistic"].as_f64().unwrap().abs() < 1e-8),
            _ => {}
        }
    }
    assert_eq!(report["metadata"]["inputs"].as_array().unwrap().len(), 4);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_data(&a, 300, 0.0);
    write_data(&b, 300, 0.2);
    let o = bin()
        .args(["compare", "--train", p(&a), p(&b)])
        .env("LREQUIV_OUTPUT_DIR", dir.path().join("out"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    validate_report(&dir.path().join("out/report.json"));
}

#[test]
fn group_column_splits_one_file() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_data(&a, 300, 0.0);
    write_data(&b, 300, 0.4);
    let mut joined = String::from("a,b,y,sex\n");
    for (path, g) in [(&a, "f"), (&b, "m")] {
        for line in fs::read_to_string(path).unwrap().lines().skip(1) {
            joined.push_str(&format!("{line},{g}\n"));
        }
    }
    let all = dir.path().join("all.csv");
    fs::write(&all, joined).unwrap();

    let (r1, r2) = (dir.path().join("r1.json"), dir.path().join("r2.json"));
    let o = run(&["compare", "--train", p(&all), "--group", "sex", "--out", p(&r1)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["compare", "--train", p(&a), p(&b), "--names", "f,m", "--out", p(&r2)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let strip = |path: &Path| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        v["metadata"]["inputs"] = Value::Null;
        v
    };
    assert_eq!(strip(&r1), strip(&r2));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    write_data(&good, 100, 0.0);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b,y\n1,2,0\n2,3,1\n3,1,2\n0,0,1\n").unwrap();

    let o = run(&["compare", "--train", p(&good), p(&bad), "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("row 3") && msg.contains("`y`"), "{msg}");

    let o = run(&[
        "compare", "--train", p(&good), p(&good), "--delta-beta", "0.1,0.2", "--out-dir", p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("p = 3"), "{}", stderr(&o));

    let o = run(&["compare", "--train", p(&good)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn separation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let sep = dir.path().join("sep.csv");
    let mut s = String::from("a,y\n");
    for i in 0..40 {
        s.push_str(&format!("{},{}\n", i as f64 - 19.5, u8::from(i >= 20)));
    }
    fs::write(&sep, s).unwrap();
    let o = run(&["compare", "--train", p(&sep), p(&sep), "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("separation"), "{}", stderr(&o));
}

#[test]
fn simulate_preset_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", "--preset", "error-rates", "--replicates", "4", "--out", p(&out)];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    let serial = go("serial.csv", &["--serial"]);
    let parallel = go("parallel.csv", &["--threads", "3"]);
    let again = go("again.csv", &[]);
    assert_eq!(serial, parallel);
    assert_eq!(serial, again);

    let text = String::from_utf8(serial).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,effect,k,method,level,rate,replicates,failures"));
    // 12 cells, 6 rates each.
    assert_eq!(lines.count(), 72);
}

#[test]
fn simulate_sidecar_and_grid_errors() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.toml");
    fs::write(
        &grid,
        "[defaults]\nreplicates = 3\ndelta-beta = 0.5\ndelta-theta = 0.1\ndelta-b = 1.1\n\n[[scenario]]\nn = [50, 60]\neffect = \"logodds-additive\"\nk = 0.25\n",
    )
    .unwrap();
    let (csv, cells) = (dir.path().join("s.csv"), dir.path().join("cells.json"));
    let o = run(&["simulate", "--grid", p(&grid), "--out", p(&csv), "--cells-json", p(&cells)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&cells).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["config"]["n"], 60);

    fs::write(&grid, "[defaults]\nreplicates = 3\n").unwrap();
    let o = run(&["simulate", "--grid", p(&grid), "--out", p(&csv)]);
    assert_eq!(o.status.code(), Some(2));

    fs::write(&grid, "[[scenario]]\nn = 100\neffect = \"sideways\"\n").unwrap();
    let o = run(&["simulate", "--grid", p(&grid), "--out", p(&csv)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("g.toml:3"), "{}", stderr(&o));
}

#[test]
fn regen_fixture_splits_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let go = |sub: &str, threads: &str| {
        let out = dir.path().join(sub);
        let o = run(&[
            "regen", "--spec", p(&fixture("copula_spec.json")), "--plan", p(&fixture("plan.toml")),
            "--seed", "11", "--threads", threads, "--out-dir", p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let one = go("one", "1");
    let many = go("many", "4");
    for pop in ["female", "male"] {
        for (kind, rows) in [("train", 3000), ("test", 1000)] {
            let f = format!("{pop}_{kind}.csv");
            let a = fs::read_to_string(one.join(&f)).unwrap();
            assert_eq!(a.lines().count(), rows + 1, "{f}");
            assert_eq!(a, fs::read_to_string(many.join(&f)).unwrap(), "{f}");
        }
    }
    assert!(one.join("copula_spec.json").exists());
}

#[test]
fn regen_from_raw_data() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let mut s = String::from("sex,s1,s2,flag\n");
    for i in 0..200 {
        let a = 10.0 - ((i * 37) % 41) as f64 / 5.0;
        let b = 8.0 - ((i * 11) % 23) as f64 / 4.0 - a / 10.0;
        s.push_str(&format!("{},{a},{b},{}\n", if i % 2 == 0 { "f" } else { "m" }, i % 3 == 0));
    }
    fs::write(&raw, s.replace("true", "1").replace("false", "0")).unwrap();
    let plan = dir.path().join("plan.toml");
    fs::write(
        &plan,
        "[[group]]\ngroup = \"f:flag=0\"\nn = 300\n\n[[group]]\ngroup = \"f:flag=1\"\nn = 100\n\n\
         [[group]]\ngroup = \"m:flag=0\"\nn = 300\n\n[[group]]\ngroup = \"m:flag=1\"\nn = 100\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "regen", "--data", p(&raw), "--population", "sex", "--labels", "flag", "--plan", p(&plan),
        "--out-dir", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let train = fs::read_to_string(out.join("f_train.csv")).unwrap();
    assert_eq!(train.lines().next(), Some("s1,s2,flag"));
    assert_eq!(train.lines().count(), 301);
    let flagged = train.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert!(flagged > 40 && flagged < 110, "{flagged}");
}

#[test]
fn regen_missing_plan_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "regen", "--spec", p(&fixture("copula_spec.json")), "--plan", p(&dir.path().join("nope.toml")),
        "--out-dir", p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.toml"));
    assert_eq!(run(&["regen", "--spec", p(&fixture("copula_spec.json"))]).status.code(), Some(2));
}
