use std::process::Command;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fredjost")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn field(line: &str, key: &str) -> String {
    let rest = &line[line.find(key).unwrap() + key.len()..];
    rest.trim_start().split_whitespace().next().unwrap().to_string()
}

#[test]
fn jost_reflectionless_value() {
    let (code, out, _) = run(&["jost", "--potential", "kdv:2:1:1", "--z", "-8"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "F = 1.0000e-1");
}

#[test]
fn index_reports_unstable() {
    let (code, out, _) = run(&["index", "--potential", "kdv:2:1:1"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["verdict"], "unstable");
    assert!((v["dF0"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-4);
}

#[test]
fn cylinder_equivalence_example() {
    let (code, out, _) =
        run(&["cylinder", "--potential", "planar:kdv:2", "--d", "2", "--J", "0", "--z", "-3", "--check-equivalence"]);
    assert_eq!(code, 0);
    let line = out.lines().next().unwrap();
    assert!(field(line, "residual =").parse::<f64>().unwrap() <= 1e-4);
    assert!((field(line, "Theta =").parse::<f64>().unwrap() - 3.0).abs() < 1e-3);
}

#[test]
fn csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let path = dir.path().join(format!("run{i}.csv"));
        let p = path.to_str().unwrap();
        let (code, _, _) = run(&[
            "--threads", threads, "jost", "--potential", "kdv:3:1:1", "--z", "-8,-2+1i,0.5+2i,-0.3,-4-1i,1+0.1i",
            "--out", p,
        ]);
        assert_eq!(code, 0);
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);
    let text = String::from_utf8(files[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 7);
    // 17 significant digits
    let first = text.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(first, "-8.0000000000000000e0");
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# defaults\npotential = kdv:2:1:1\nz = -3\n").unwrap();
    let c = cfg.to_str().unwrap();
    let (code, out, _) = run(&["--config", c, "jost"]);
    assert_eq!(code, 0);
    assert!(field(&out, "F =").parse::<f64>().unwrap().abs() < 1e-6);
    let (code, out, _) = run(&["--config", c, "jost", "--z", "-8"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "F = 1.0000e-1");
}

#[test]
fn json_summary_echoes_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let (code, _, _) =
        run(&["fredholm", "--potential", "kdv:2:1:1", "--z", "-5", "--json", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["command"], "fredholm");
    assert_eq!(v["inputs"]["potential"], "kdv:2:1:1");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert!(v["results"]["values"][0]["abs_diff"].as_f64().unwrap() < 1e-6);
}

#[test]
fn precondition_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "potentail = kdv:2\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["--config", cfg.to_str().unwrap(), "jost", "--z", "-1"],
        vec!["jost", "--potential", "kdv:2:1:1", "--z", "5"],
        vec!["jost", "--potential", "nonsense", "--z", "-1"],
        vec!["jost", "--potential", "kdv:2:1:1", "--z", "-1", "--policy", "bogus=1"],
        vec!["expand", "--input", "/nonexistent/family.json"],
    ];
    for args in cases {
        let (code, _, err) = run(&args);
        assert_eq!(code, 2, "{args:?}");
        assert!(!err.trim().is_empty());
    }
}

#[test]
fn numerical_failure_exits_3() {
    let (code, _, err) = run(&["converge", "--potential", "cos:zero:1:0.5", "--d", "2", "--J-list", "1,2,4", "--z", "-3"]);
    assert_eq!(code, 3);
    assert!(err.contains("numerical failure"));
}

#[test]
fn expand_singular_family() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fam.json");
    std::fs::write(
        &path,
        r#"{"coefficients": [[[[1,0],[1,0]],[[0,0],[0.2,0]]], [[[0,0],[0,0]],[[1,0],[0,0]]]], "radius": 1.0}"#,
    )
    .unwrap();
    let (code, out, _) = run(&["expand", "--input", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.starts_with("case = singular  order = 1  coefficient = -1.0000e0"), "{out}");
}
