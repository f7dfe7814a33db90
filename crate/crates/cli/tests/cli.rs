use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn ty(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ty"))
        .args(args)
        .env_remove("TY_EPS_RANK")
        .env_remove("TY_EPS_RESIDUAL")
        .env_remove("TY_EPS_DROP")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("structured output parses")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ty-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn residuals(v: &Value) -> Vec<(String, f64)> {
    v["sections"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|s| s["checks"].as_array().unwrap().iter())
        .map(|c| (c["id"].as_str().unwrap().to_string(), c["max_residual"].as_f64().unwrap()))
        .collect()
}

const Z2: [&str; 6] = ["--group", "2", "--chi", "1/2", "--tau", "+"];

#[test]
fn verify_z2_passes_with_small_residuals() {
    let out = ty(&[&["verify"], &Z2[..], &["--format", "json"]].concat());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "pass");
    assert_eq!(v["results"]["dim"], 34);
    for (id, r) in residuals(&v) {
        assert!(r < 1e-9, "{id}: {r}");
    }
}

#[test]
fn coideals_z2_has_three_records() {
    let out = ty(&[&["coideals"], &Z2[..], &["--format", "json"]].concat());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let mut dims: Vec<u64> = v["results"]["coideals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["dim"].as_u64().unwrap())
        .collect();
    dims.sort_unstable();
    assert_eq!(dims, [3, 6, 12]);
}

#[test]
fn ill_defined_chi_exits_with_two() {
    let out = ty(&["build", "--group", "2", "--chi", "1/3", "--tau", "+"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not well defined"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(ty(&["verify", "--bogus"]).status.code(), Some(2));
    assert_eq!(ty(&[&["build"], &Z2[..4], &["--tau", "0"]].concat()).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_ty"))
        .args([&["verify"], &Z2[..]].concat())
        .env("TY_EPS_RESIDUAL", "1e-30")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tolerance_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_ty"))
        .args([&["verify"], &Z2[..], &["--format", "json"]].concat())
        .env("TY_EPS_RESIDUAL", "1e-7")
        .output()
        .unwrap();
    assert_eq!(json(&out)["input"]["eps_residual"], "1e-7");
}

#[test]
fn dump_load_round_trip_is_exact() {
    let a = scratch("z2.json");
    let b = scratch("z2-again.json");
    assert_eq!(ty(&[&["dump"], &Z2[..], &["-o", a.to_str().unwrap()]].concat()).status.code(), Some(0));
    let out = ty(&["dump", "--input", a.to_str().unwrap(), "-o", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let out = ty(&["verify", "--input", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn broken_coproduct_fails_the_counit_law() {
    let a = scratch("z2-broken-src.json");
    let b = scratch("z2-broken.json");
    ty(&[&["dump"], &Z2[..], &["-o", a.to_str().unwrap()]].concat());
    let broken = tyqg::selftest::break_coproduct(&fs::read_to_string(&a).unwrap()).unwrap();
    fs::write(&b, broken).unwrap();
    let out = ty(&["verify", "--input", b.to_str().unwrap(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    let failing: Vec<&str> = v["sections"][0]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "fail")
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    assert!(failing.contains(&"counit_left"), "{failing:?}");
}

#[test]
fn malformed_file_names_the_field() {
    let a = scratch("bad.json");
    fs::write(&a, "{\"format\": \"tyqg-wha/1\", \"dim\": 1}").unwrap();
    let out = ty(&["verify", "--input", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`labels`"));
}

#[test]
fn dual_and_haar_pass() {
    let out = ty(&[&["dual"], &Z2[..]].concat());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = ty(&[&["haar"], &Z2[..], &["--format", "json"]].concat());
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["seed"].is_u64());
}

#[test]
fn lattice_tables() {
    let out = ty(&[&["lattice"], &Z2[..], &["--format", "json"]].concat());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["results"]["nodes"], serde_json::json!(["L={0}", "L={0,1}", "Omega"]));
    assert_eq!(v["results"]["meet"][0][2], "Omega");
    assert_eq!(v["results"]["join"][0][2], "L={0}");
    let dc = v["sections"].as_array().unwrap().iter().find(|s| s["id"] == "double commutant").unwrap();
    assert_eq!(dc["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn structured_output_is_byte_identical() {
    let args = ["selftest", "--quick", "--no-determinism", "--format", "json"];
    let a = ty(&args);
    let b = ty(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    let c = ty(&[&["coideals"], &Z2[..], &["--format", "json"]].concat());
    let d = ty(&[&["coideals"], &Z2[..], &["--format", "json"]].concat());
    assert_eq!(c.stdout, d.stdout);
}
