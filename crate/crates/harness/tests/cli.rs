use std::process::{Command, Output};

fn relaxed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaxed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exhaustive_counter_check_is_all_valid() {
    let o = relaxed(&[
        "check",
        "--object",
        "counter",
        "--n",
        "2",
        "--k",
        "2",
        "--ops",
        "p0:inc,read;p1:inc,read",
        "--exhaustive",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("# relaxed check --object counter"));
    assert!(out.contains("invalid: 0\n"));
}

#[test]
fn random_approx_check_reports_every_schedule() {
    let o = relaxed(&[
        "check",
        "--object",
        "maxreg-approx",
        "--n",
        "2",
        "--k",
        "2",
        "--m",
        "256",
        "--random",
        "1000",
        "--seed",
        "7",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schedules"], 1000);
    assert_eq!(v["valid"], 1000);
    assert!(v["config"].as_str().unwrap().contains("--seed 7"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &[
            "check",
            "--object",
            "counter",
            "--n",
            "2",
            "--ops",
            "p0:inc;p7:read",
            "--exhaustive",
        ][..],
        &[
            "check", "--object", "counter", "--ops", "p0:frob", "--random", "3",
        ],
        &["check", "--object", "maxreg-exact", "--random", "3"],
        &["check", "--object", "counter"],
        &["bench", "--object", "counter", "--ops", "0"],
        &[
            "bench",
            "--object",
            "maxreg-approx",
            "--k",
            "2",
            "--m",
            "18446744073709551617",
        ],
        &[
            "trace", "--object", "counter", "--ops", "p0:inc", "--k", "1",
        ],
    ] {
        let o = relaxed(args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn recorded_history_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.json");
    let bad = r#"[
        {"type":"invoke","proc":0,"op":"inc","args":[],"step":0},
        {"type":"respond","proc":0,"op":"inc","ret":null,"step":1},
        {"type":"invoke","proc":1,"op":"read","args":[],"step":1},
        {"type":"respond","proc":1,"op":"read","ret":5,"step":3}
    ]"#;
    std::fs::write(&path, bad).unwrap();
    let p = path.to_str().unwrap();
    let o = relaxed(&[
        "check",
        "--object",
        "counter",
        "--k",
        "2",
        "--history",
        p,
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "invalid");

    // with k = 4 a read of 4 after one increment is fine
    std::fs::write(&path, bad.replace("\"ret\":5", "\"ret\":4")).unwrap();
    let o = relaxed(&[
        "check",
        "--object",
        "counter",
        "--k",
        "4",
        "--history",
        p,
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["witness"], serde_json::json!([0, 1]));

    let o = relaxed(&[
        "check",
        "--object",
        "counter",
        "--k",
        "4",
        "--history",
        p,
        "--budget",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bench_csv_has_four_checkpoints() {
    let o = relaxed(&[
        "bench", "--object", "counter", "--n", "16", "--k", "4", "--ops", "1000000", "--seed", "1",
        "--format", "csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("# relaxed bench"));
    assert_eq!(lines[1], "ops,total_steps,amortized,max_op_steps");
    let ops: Vec<&str> = lines[2..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ops, ["1000", "10000", "100000", "1000000"]);
}

#[test]
fn bench_accepts_full_64_bit_bound() {
    let o = relaxed(&[
        "bench",
        "--object",
        "maxreg-approx",
        "--k",
        "2",
        "--m",
        "18446744073709551616",
        "--ops",
        "2000",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["max_op_steps"].as_u64().unwrap() <= 8);
}

#[test]
fn native_bench_reports_throughput() {
    let o = relaxed(&[
        "bench", "--native", "--object", "counter", "--n", "4", "--k", "4", "--ops", "100000",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mode"], "native");
    assert_eq!(v["ops"], 100000);
    assert_eq!(v["envelope_violations"], 0);
    assert_eq!(v["per_thread"].as_array().unwrap().len(), 4);
    assert!(v["ops_per_sec"].as_f64().unwrap() > 0.0);
}

#[test]
fn counter_trace_has_three_lines() {
    let o = relaxed(&[
        "trace",
        "--object",
        "counter",
        "--n",
        "1",
        "--k",
        "4",
        "--ops",
        "p0:inc,read",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "0\t0\tb0[0]\ttest&set\t-\t0\n1\t0\tb0[0]\tread\t-\t1\n2\t0\tb0[1]\tread\t-\t0\n"
    );
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("# relaxed trace"));
}

#[test]
fn traces_are_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let o = relaxed(&[
            "trace",
            "--object",
            "counter",
            "--n",
            "3",
            "--k",
            "2",
            "--ops",
            "p0:inc,inc,read;p1:inc,read;p2:read,inc",
            "--seed",
            seed,
            "--output",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a", "9"), run("b", "9"));
    assert_ne!(run("c", "9"), run("d", "10"));
}

#[test]
fn max_register_trace_walks_the_tree() {
    let o = relaxed(&[
        "trace",
        "--object",
        "maxreg-exact",
        "--m",
        "8",
        "--ops",
        "p0:write(5)",
        "--format",
        "json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let prims: Vec<&str> = v["trace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["primitive"].as_str().unwrap())
        .collect();
    assert_eq!(prims, ["read", "write", "write"]);
    // the root switch is allocated first and set last
    assert_eq!(v["trace"][2]["object"], "o0");
    assert_eq!(v["history"].as_array().unwrap().len(), 2);
}

#[test]
fn unwritable_output_is_an_error() {
    let o = relaxed(&[
        "trace",
        "--object",
        "counter",
        "--ops",
        "p0:inc",
        "--output",
        "/nonexistent/dir/t.txt",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
