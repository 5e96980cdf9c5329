use std::path::PathBuf;
use std::process::{Command, Output};

fn nilzeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilzeta")).args(args).env("NILZETA_WORKERS", "2").output().expect("binary runs")
}

fn groups(file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../groups").join(file).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn local_heisenberg_normal_json() {
    let o = nilzeta(&["local", "--group", "heisenberg", "--variant", "normal", "--prime", "3", "--kmax", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["results"][0]["counts"], serde_json::json!([1, 4, 13]));
    // a_k = (1 - 1/3)^3 count_k 3^{-3k}
    assert_eq!(v["results"][0]["a_raw"][1], "32/729");
}

#[test]
fn oracle_compare_dinfty_file_agrees() {
    let o = nilzeta(&["oracle-compare", "--group", &groups("dinfty.json"), "--K", "all", "--prime", "2", "--kmax", "2", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["verdict"] == "agree" && r["stable"] == true));
}

#[test]
fn verify_catalog_groups() {
    for g in ["abelian:3", "heisenberg", "dinfty", "heisenberg-c2"] {
        let o = nilzeta(&["verify", "--group", g]);
        assert_eq!(o.status.code(), Some(0), "{g}: {}", stdout(&o));
    }
}

#[test]
fn catalog_lists_groups() {
    let o = nilzeta(&["catalog", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["extensions"].as_array().unwrap().iter().any(|n| n == "dinfty"));
}

#[test]
fn global_dinfty_csv() {
    let o = nilzeta(&["global", "--group", "dinfty", "--nmax", "6", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "n,a_n\n1,1\n2,3\n3,3\n4,5\n5,5\n6,7\n");
}

#[test]
fn conditions_round_trip_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let o = nilzeta(&["conditions", "--group", "heisenberg", "--variant", "normal"]);
    assert_eq!(o.status.code(), Some(0));
    let path = dir.path().join("h.json");
    std::fs::write(&path, &o.stdout).unwrap();
    let j: nilzeta::conegen::ConeSystemJson = serde_json::from_slice(&o.stdout).unwrap();
    let again = nilzeta::conegen::ConeConditionSystem::from_json(&j).unwrap().to_canonical_json();
    assert_eq!(again.as_bytes(), &o.stdout[..]);
    // evaluating the file gives the same counts as the group
    let a = nilzeta(&["local", "--system", path.to_str().unwrap(), "--prime", "2", "--kmax", "3", "--format", "csv"]);
    let b = nilzeta(&["local", "--group", "heisenberg", "--variant", "normal", "--prime", "2", "--kmax", "3", "--format", "csv"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        &["local", "--group", "heisenberg", "--prime", "4"][..],
        &["local", "--group", "no-such-group", "--prime", "2"],
        &["local", "--group", "heisenberg"],
        &["local", "--group", "heisenberg", "--prime", "2", "--kmax", "0"],
        &["oracle-compare", "--group", "dinfty", "--K", "7", "--prime", "2"],
        &["conditions", "--group", "dinfty", "--variant", "sideways"],
        &["frobnicate"],
        &["global", "--group", "missing.json"],
    ] {
        let o = nilzeta(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn help_exits_0() {
    assert_eq!(nilzeta(&["--help"]).status.code(), Some(0));
}

#[test]
fn mutated_presentation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(groups("heisenberg.json")).unwrap()).unwrap();
    // f3 = X3 + Y3 - 2 X2 Y1 no longer matches the inverse polynomials
    for term in j["f"][2].as_array_mut().unwrap() {
        if term["exponents"] == serde_json::json!([0, 1, 0, 1, 0, 0]) {
            term["coeff"] = "-2/1".into();
        }
    }
    j.as_object_mut().unwrap().remove("c");
    let path = dir.path().join("mutated.json");
    std::fs::write(&path, j.to_string()).unwrap();
    let o = nilzeta(&["verify", "--group", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corrupted_system_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = nilzeta(&["conditions", "--group", "heisenberg", "--variant", "normal"]);
    let mut j: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // drop T33 | T12
    let t12 = serde_json::json!([{ "exponents": [0, 1, 0, 0, 0, 0], "coeff": "1/1" }]);
    let conds = j["conditions"].as_array_mut().unwrap();
    let before = conds.len();
    conds.retain(|c| c["num"] != t12);
    assert_eq!(conds.len() + 1, before);
    let path = dir.path().join("corrupt.json");
    std::fs::write(&path, j.to_string()).unwrap();
    let o = nilzeta(&["oracle-compare", "--group", "heisenberg", "--system", path.to_str().unwrap(), "--prime", "2", "--kmax", "3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("mismatch"));
}

#[test]
fn budget_exits_3() {
    let o = nilzeta(&["oracle-compare", "--group", "heisenberg", "--prime", "3", "--kmax", "2", "--max-order", "100"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}

#[test]
fn unstable_oracle_exits_4() {
    // level 1 is too shallow for index 4: the level-1 and level-2 counts differ
    let o = nilzeta(&["oracle-compare", "--group", "heisenberg", "--prime", "2", "--kmax", "2", "--level", "1"]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    assert!(stdout(&o).contains("unstable"));
}

#[test]
fn output_independent_of_workers() {
    let run = |w: &str| {
        Command::new(env!("CARGO_BIN_EXE_nilzeta"))
            .args(["local", "--group", "heisenberg-c2", "--prime", "2,3", "--kmax", "2"])
            .env("NILZETA_WORKERS", w)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}
