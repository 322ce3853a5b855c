use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sapstop"));
    c.env_remove("SAPSTOP_OUT_DIR");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out-dir").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn schema() -> jsonschema::Validator {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schema/summary.schema.json");
    jsonschema::validator_for(&read_json(p)).unwrap()
}

fn assert_valid(summary: &Value) {
    let v = schema();
    let errors: Vec<String> = v.iter_errors(summary).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}\n{summary:#}");
}

const QUICK: [(&str, &[&str]); 6] = [
    (
        "solve",
        &[
            "solve",
            "--gen",
            "rohess",
            "--n",
            "24",
            "--p",
            "6",
            "--upsilon",
            "1e-3",
            "--max-iters",
            "400",
        ],
    ),
    (
        "coverage",
        &[
            "coverage",
            "--gen",
            "wilkinson",
            "--n",
            "24",
            "--p",
            "6",
            "--iters",
            "20",
            "--replicates",
            "10",
            "--eta",
            "1,table",
        ],
    ),
    (
        "consistency",
        &[
            "consistency",
            "--gen",
            "rohess,rand_uniform",
            "--method",
            "gaussian",
            "--n",
            "24",
            "--p",
            "6",
            "--iters",
            "60",
        ],
    ),
    (
        "stopping",
        &[
            "stopping",
            "--gen",
            "rohess",
            "--method",
            "gaussian,fjlt",
            "--n",
            "24",
            "--p",
            "6",
            "--iters",
            "120",
        ],
    ),
    (
        "collocation",
        &[
            "collocation",
            "--eps",
            "0.5",
            "--max-iters",
            "60",
            "--replicates",
            "10",
            "--sigma-window",
            "20",
        ],
    ),
    (
        "se-check",
        &[
            "se-check",
            "--method",
            "achlioptas",
            "--m",
            "64",
            "--p",
            "8",
            "--samples",
            "500",
        ],
    ),
];

#[test]
fn every_subcommand_is_deterministic_and_schema_valid() {
    for (name, args) in QUICK {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let oa = run(args, a.path());
        let ob = run(args, b.path());
        assert!([0, 2, 3].contains(&code(&oa)), "{name}: {}", stderr(&oa));
        assert_eq!(code(&oa), code(&ob));
        for file in [format!("{name}.csv"), format!("{name}.json")] {
            let x = std::fs::read(a.path().join(&file)).unwrap();
            let y = std::fs::read(b.path().join(&file)).unwrap();
            assert!(!x.is_empty());
            assert_eq!(x, y, "{file} differs between identical runs");
        }
        let s = read_json(a.path().join(format!("{name}.json")));
        assert_valid(&s);
        assert_eq!(s["exit_code"].as_i64().unwrap() as i32, code(&oa));
    }
}

#[test]
fn different_seeds_differ() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&["se-check", "--samples", "200", "--seed", "1"], a.path());
    run(&["se-check", "--samples", "200", "--seed", "2"], b.path());
    assert_ne!(
        std::fs::read(a.path().join("se-check.json")).unwrap(),
        std::fs::read(b.path().join("se-check.json")).unwrap()
    );
}

#[test]
fn solve_writes_fixed_trace_header_and_exit_matches_stop() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "solve",
            "--gen",
            "rohess",
            "--n",
            "32",
            "--p",
            "8",
            "--upsilon",
            "1e-3",
            "--seed",
            "3",
        ],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.path().join("solve.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "k,lambda,r2,rho,iota,lo,hi,stopped,true_r2"
    );
    let s = read_json(d.path().join("solve.json"));
    let stop = s["stop_iteration"].as_u64().unwrap() as usize;
    assert_eq!(csv.lines().count(), stop + 1);
    assert!(csv.lines().last().unwrap().contains(",true,"));

    let o = run(
        &[
            "solve",
            "--gen",
            "golub",
            "--n",
            "32",
            "--p",
            "4",
            "--upsilon",
            "1e-12",
            "--max-iters",
            "50",
        ],
        d.path(),
    );
    assert_eq!(code(&o), 2);
    let s = read_json(d.path().join("solve.json"));
    assert!(s["stop_iteration"].is_null());
    assert_eq!(s["passed"], Value::Bool(false));
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--alpha", "1.5"], d.path());
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("--alpha"), "{}", stderr(&o));
    for args in [
        &["solve", "--delta-i", "1.2"][..],
        &["solve", "--gen", "hilbert"],
        &["solve", "--method", "sparse"],
        &["solve", "--p", "0"],
        &["coverage", "--eta", "0.5"],
        &["collocation", "--eps", "0.3"],
        &["stopping", "--bogus"],
        &["solve", "--csv", "../escape.csv"],
    ] {
        let o = run(args, d.path());
        assert_eq!(code(&o), 64, "{args:?}: {}", stderr(&o));
    }
    assert!(!d.path().join("solve.json").exists());
    assert!(!d.path().parent().unwrap().join("escape.csv").exists());
}

#[test]
fn missing_input_file_is_io_error() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--matrix", "/nonexistent/a.txt"], d.path());
    assert_eq!(code(&o), 74, "{}", stderr(&o));
}

#[test]
fn malformed_matrix_is_an_error() {
    let d = tempfile::tempdir().unwrap();
    let m = d.path().join("a.txt");
    std::fs::write(&m, "1 2\n3\n").unwrap();
    let o = run(&["solve", "--matrix", m.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn matrix_files_in_both_formats_give_the_same_run() {
    let d = tempfile::tempdir().unwrap();
    let n = 6;
    let mut text = String::new();
    let mut bin = Vec::new();
    bin.extend((n as u64).to_le_bytes());
    bin.extend((n as u64).to_le_bytes());
    for i in 0..n {
        let row: Vec<f64> = (0..n)
            .map(|j| if i == j { 4.0 } else { 1.0 / (1 + i + j) as f64 })
            .collect();
        text.push_str(&row.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" "));
        text.push('\n');
        for v in row {
            bin.extend(v.to_le_bytes());
        }
    }
    std::fs::write(d.path().join("a.txt"), text).unwrap();
    std::fs::write(d.path().join("a.bin"), bin).unwrap();
    std::fs::write(d.path().join("x.txt"), "1\n2\n3\n4\n5\n6\n").unwrap();
    std::fs::write(
        d.path().join("binv.txt"),
        "1 0 0 0 0 0\n0 2 0 0 0 0\n0 0 1 0 0 0\n0 0 0 1 0 0\n0 0 0 0 3 0\n0 0 0 0 0 1\n",
    )
    .unwrap();
    let mut outs = Vec::new();
    for m in ["a.txt", "a.bin"] {
        let out = d.path().join(m.replace('.', "_"));
        let o = run(
            &[
                "solve",
                "--matrix",
                d.path().join(m).to_str().unwrap(),
                "--solution",
                d.path().join("x.txt").to_str().unwrap(),
                "--b-inv",
                d.path().join("binv.txt").to_str().unwrap(),
                "--method",
                "rowsubset",
                "--p",
                "2",
                "--upsilon",
                "1e-8",
                "--save-x",
                "x_final.txt",
            ],
            &out,
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outs.push((
            std::fs::read(out.join("solve.csv")).unwrap(),
            std::fs::read_to_string(out.join("x_final.txt")).unwrap(),
        ));
        let s = read_json(out.join("solve.json"));
        assert_valid(&s);
        assert!(s["results"]["final_error_b_norm"].as_f64().unwrap() < 1e-3);
    }
    assert_eq!(outs[0], outs[1]);
    let x: Vec<f64> = outs[0].1.lines().map(|l| l.trim().parse().unwrap()).collect();
    for (i, v) in x.iter().enumerate() {
        assert!((v - (i + 1) as f64).abs() < 1e-3, "{x:?}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let d = tempfile::tempdir().unwrap();
    let conf = d.path().join("run.conf");
    std::fs::write(
        &conf,
        "# se-check settings\nmethod = rowsubset\nm = 100\np = 10\nsamples = 300\nseed = 5\n",
    )
    .unwrap();
    let o = run(
        &["se-check", "--config", conf.to_str().unwrap(), "--samples", "400"],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = read_json(d.path().join("se-check.json"));
    assert_eq!(s["config"]["method"], "rowsubset");
    assert_eq!(s["config"]["samples"], 400);
    assert_eq!(s["seed"], 5);

    std::fs::write(&conf, "samples 300\n").unwrap();
    let o = run(&["se-check", "--config", conf.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 64);
}

#[test]
fn output_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["se-check", "--samples", "100", "--json", "s.json", "--csv", "t.csv"])
        .env("SAPSTOP_OUT_DIR", d.path().join("nested"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(d.path().join("nested/s.json").exists());
    assert!(d.path().join("nested/t.csv").exists());
}

#[test]
fn row_subset_support_check() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "se-check",
            "--method",
            "rowsubset",
            "--m",
            "100",
            "--p",
            "10",
            "--samples",
            "20000",
        ],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = read_json(d.path().join("se-check.json"));
    assert_eq!(s["results"]["outside_support"], 0);
    assert!(s["results"]["min_sample"].as_f64().unwrap() >= -1.0);
    assert!(s["results"]["max_sample"].as_f64().unwrap() <= 9.0);
}

#[test]
fn jobs_do_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "coverage",
        "--gen",
        "rohess",
        "--n",
        "20",
        "--p",
        "5",
        "--iters",
        "15",
        "--replicates",
        "8",
    ];
    let oa = bin()
        .args(args)
        .arg("--out-dir")
        .arg(a.path())
        .args(["--jobs", "1"])
        .output()
        .unwrap();
    let ob = bin()
        .args(args)
        .arg("--out-dir")
        .arg(b.path())
        .args(["--jobs", "3"])
        .output()
        .unwrap();
    assert_eq!(code(&oa), code(&ob));
    assert_eq!(
        std::fs::read(a.path().join("coverage.csv")).unwrap(),
        std::fs::read(b.path().join("coverage.csv")).unwrap()
    );
}

#[test]
fn preset_alias_is_accepted() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "stopping", "--preset", "paper", "--gen", "rohess", "--method", "gaussian", "--iters", "40",
        ],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = read_json(d.path().join("stopping.json"));
    assert_eq!(s["config"]["systems"][0]["p"], 25);
    assert_eq!(s["config"]["systems"][0]["n"], 128);
    assert_eq!(s["config"]["params"]["upsilon"], 100.0);
}

#[test]
fn help_exits_zero() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in [
        "solve",
        "coverage",
        "consistency",
        "stopping",
        "collocation",
        "se-check",
    ] {
        assert!(text.contains(sub), "{text}");
    }
}
