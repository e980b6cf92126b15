//! Black-box tests of the binary: exit codes, artifact formats, config
//! precedence, and the shipped summary schema.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("droplet-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_droplet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr_kind(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value = serde_json::from_str(text.trim()).expect("stderr is JSON");
    v["kind"].as_str().expect("kind field").to_string()
}

#[test]
fn out_of_range_exponent_is_a_usage_error() {
    let dir = scratch("badn");
    let out = run_in(&dir, &["solve", "--n", "1.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_kind(&out), "domain");
}

#[test]
fn degenerate_sweep_grids_are_usage_errors() {
    let dir = scratch("badsweep");
    let out = run_in(
        &dir,
        &["sweep", "--mu-min", "1", "--mu-max", "10", "--count", "1"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_kind(&out), "domain");
    let out = run_in(
        &dir,
        &["sweep", "--mu-min", "10", "--mu-max", "1", "--count", "4"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flags_exit_with_usage_code() {
    let dir = scratch("badflag");
    let out = run_in(&dir, &["solve", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_writes_artifacts_matching_the_shipped_schema() {
    let dir = scratch("solve");
    let out = run_in(&dir, &["solve", "--n", "2", "--mass", "1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {:?}", out.stderr);

    let profile = std::fs::read_to_string(dir.join("profile.csv")).unwrap();
    let mut lines = profile.lines();
    assert_eq!(lines.next(), Some("x,H,Hp,Hpp,Hppp,mass_cum"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2048);
    assert!(rows.iter().all(|r| r.split(',').count() == 6));
    assert!(rows.last().unwrap().starts_with("1,"));

    let physical = std::fs::read_to_string(dir.join("physical.csv")).unwrap();
    let mut lines = physical.lines();
    assert_eq!(lines.next(), Some("y,Hcal"));
    assert_eq!(lines.count(), 2 * 2048 + 1);

    // Validate the summary against the schema shipped in docs/.
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("docs/summary.schema.json");
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let obj = summary.as_object().expect("summary is an object");

    let required: Vec<&str> = schema["required"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    for key in &required {
        assert!(obj.contains_key(*key), "summary missing {key}");
    }
    assert_eq!(schema["additionalProperties"], serde_json::json!(false));
    let properties = schema["properties"].as_object().unwrap();
    for (key, value) in obj {
        let descriptor = properties
            .get(key)
            .unwrap_or_else(|| panic!("summary key {key} not in schema"));
        match descriptor["type"].as_str().unwrap() {
            "number" => assert!(value.is_number(), "{key} should be a number"),
            "integer" => assert!(value.is_u64() || value.is_i64(), "{key} should be an integer"),
            "object" => assert!(value.is_object(), "{key} should be an object"),
            other => panic!("unexpected schema type {other}"),
        }
    }

    // Stdout repeats the summary bytes.
    assert_eq!(
        out.stdout,
        std::fs::read(dir.join("summary.json")).unwrap()
    );

    // Spot values: the gravity grade for n = 2 and the mass field.
    assert_eq!(obj["gamma"], serde_json::json!(5.0));
    let mass = obj["mass"].as_f64().unwrap();
    assert!((mass - 1.0).abs() <= 1e-4);
}

#[test]
fn expand_emits_the_degree_one_table() {
    let dir = scratch("expand");
    let out = run_in(&dir, &["expand", "--n", "2", "--cutoff", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(header["n"], serde_json::json!(2.0));
    assert_eq!(header["cutoff"], serde_json::json!(1));
    assert!(header["residual_norm"].is_number());

    let rows: Vec<Vec<&str>> = lines.map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), 3);
    let parse = |row: &[&str]| -> (u32, u32, u32, f64) {
        (
            row[0].parse().unwrap(),
            row[1].parse().unwrap(),
            row[2].parse().unwrap(),
            row[3].parse().unwrap(),
        )
    };
    let table: Vec<_> = rows.iter().map(|r| parse(r)).collect();
    assert_eq!(table[0].0..=table[0].2, 0..=1);
    assert_eq!((table[0].0, table[0].1, table[0].2), (0, 0, 1));
    assert!((table[0].3 - 0.0249221).abs() < 1e-6);
    assert_eq!((table[1].0, table[1].1, table[1].2), (0, 1, 0));
    assert_eq!(table[1].3, -1.0);
    assert_eq!((table[2].0, table[2].1, table[2].2), (1, 0, 0));
    assert!((table[2].3 - 0.25).abs() < 1e-10);

    // The constant index never appears.
    assert!(!table.iter().any(|t| (t.0, t.1, t.2) == (0, 0, 0)));

    // Re-running reproduces the bytes.
    let again = run_in(&dir, &["expand", "--n", "2", "--cutoff", "1"]);
    assert_eq!(text, String::from_utf8(again.stdout).unwrap());
}

#[test]
fn sweep_writes_ascending_rows_and_tolerates_none_failing() {
    let dir = scratch("sweep");
    let out = run_in(
        &dir,
        &[
            "sweep", "--mu-min", "0.1", "--mu-max", "10", "--count", "4", "--out", "map.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.join("map.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("mu,b_bar,mass_integral,M_of_mu,error"));
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let mut prev_mu = 0.0;
    let mut prev_value = 0.0;
    for row in &rows {
        assert_eq!(row.len(), 5);
        let mu: f64 = row[0].parse().unwrap();
        let value: f64 = row[3].parse().unwrap();
        assert!(mu > prev_mu);
        assert!(value > 0.0 && value > prev_value);
        assert!(row[4].is_empty());
        prev_mu = mu;
        prev_value = value;
    }
}

#[test]
fn sweep_records_row_failures_and_fails_when_most_rows_do() {
    let dir = scratch("sweepfail");
    // An impossible slope tolerance makes the certification fail per row.
    let out = run_in(
        &dir,
        &[
            "sweep",
            "--mu-min",
            "0.5",
            "--mu-max",
            "2",
            "--count",
            "3",
            "--shoot-tol",
            "1e-18",
            "--out",
            "map.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_kind(&out), "convergence");
    let text = std::fs::read_to_string(dir.join("map.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[4], "convergence");
        assert!(cols[1].is_empty() && cols[2].is_empty() && cols[3].is_empty());
    }
}

#[test]
fn flags_override_config_file_entries() {
    let dir = scratch("config");
    std::fs::write(
        dir.join("run.conf"),
        "# sweep setup\nn = 2.0\ncutoff = 3\n",
    )
    .unwrap();
    // The flag wins: cutoff 1 emits exactly the three degree-one rows.
    let out = run_in(
        &dir,
        &["expand", "--config", "run.conf", "--cutoff", "1"],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);

    // Without the flag the config file applies.
    let out = run_in(&dir, &["expand", "--config", "run.conf"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() > 1 + 3);

    // Unknown keys are rejected.
    std::fs::write(dir.join("bad.conf"), "zeta = 1\n").unwrap();
    let out = run_in(&dir, &["expand", "--config", "bad.conf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes_for_several_seeds() {
    let dir = scratch("selftest");
    for seed in ["0", "7", "123456789"] {
        let out = run_in(&dir, &["selftest", "--seed", seed]);
        assert_eq!(out.status.code(), Some(0), "seed {seed}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("selftest: 4 checks passed"));
    }
}

#[test]
fn resonance_surfaces_as_a_structured_error() {
    let dir = scratch("resonance");
    // A huge resonance threshold rejects every divisor.
    let out = run_in(&dir, &["expand", "--n", "2", "--resonance-tol", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_kind(&out), "resonance");
    let text = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    // The offending index is named in the message.
    assert!(v["message"].as_str().unwrap().contains('('));
}
