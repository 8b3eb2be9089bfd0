use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scramble_forge::measures::periodic_measure;
use scramble_forge::shiftspace::{ShiftModel, SymbolWord};
use serde_json::Value;
use tempfile::TempDir;

const GOLDEN: &str = r#"{"kind":"sft","adjacency":[[1,1],[1,0]]}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_scramble-forge"));
    c.env_remove("SCRAMBLE_FORGE_CACHE");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn build_scramble_writes_reproducible_reports() {
    let tmp = TempDir::new().unwrap();
    let model = write(tmp.path(), "golden.json", GOLDEN);
    let (a, b) = (tmp.path().join("runs/a"), tmp.path().join("runs/b"));
    for out in [&a, &b] {
        let o = run(bin().args(["build-scramble", "--model"]).arg(&model).args(["--depth", "2", "--out"]).arg(out));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["manifest.json", "verify.json", "dc1.json"] {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let verify = read_json(&a.join("verify.json"));
    assert_eq!(verify["schema"], "v1");
    assert_eq!(verify["result"]["passed"], true);
    assert!((verify["truncation_bound"].as_f64().unwrap() - 2f64.powi(-24)).abs() < 1e-20);
    assert_eq!(read_json(&a.join("dc1.json"))["result"].as_array().unwrap().len(), 6);
    let manifest = read_json(&a.join("manifest.json"));
    assert_eq!(manifest["config_hash"], verify["config_hash"]);
    assert_eq!(manifest["result"]["points"].as_array().unwrap().len(), 4);
}

#[test]
fn cache_reuses_reports() {
    let tmp = TempDir::new().unwrap();
    let model = write(tmp.path(), "golden.json", GOLDEN);
    let cache = tmp.path().join("cache");
    let mut outs = Vec::new();
    for _ in 0..2 {
        let o = run(bin()
            .env("SCRAMBLE_FORGE_CACHE", &cache)
            .args(["build-scramble", "--delta1", "1/8", "--depth", "2", "--model"])
            .arg(&model));
        assert!(o.status.success());
        outs.push(o);
    }
    assert!(!String::from_utf8_lossy(&outs[0].stderr).contains("cache hit"));
    assert!(String::from_utf8_lossy(&outs[1].stderr).contains("cache hit"));
    assert_eq!(outs[0].stdout, outs[1].stdout);
}

#[test]
fn failed_verification_exits_one() {
    let tmp = TempDir::new().unwrap();
    let model = write(tmp.path(), "golden.json", GOLDEN);
    let o = run(bin().args(["build-scramble", "--depth", "2", "--delta1", "1/2", "--model"]).arg(&model));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("pairwise_dc1"));
}

#[test]
fn usage_and_domain_errors() {
    let o = run(bin().arg("frobnicate"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let o = run(bin().args(["build-scramble", "--model", "m.json", "--metric-depth", "0"]));
    assert_eq!(o.status.code(), Some(2));

    let tmp = TempDir::new().unwrap();
    let bad = write(tmp.path(), "bad.json", r#"{"kind":"sft""#);
    let o = run(bin().args(["build-scramble", "--model"]).arg(&bad));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse"));

    let o = run(bin().args(["build-scramble", "--model"]).arg(tmp.path().join("missing.json")));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn lphi_golden_mean() {
    let tmp = TempDir::new().unwrap();
    let model = write(tmp.path(), "golden.json", GOLDEN);
    let phi = write(tmp.path(), "phi.json", r#"{"depth":1,"values":{"0":"0","1":"1"}}"#);
    let o = run(bin().args(["lphi", "--model"]).arg(&model).arg("--observable").arg(&phi));
    assert!(o.status.success());
    let r = &stdout_json(&o)["result"];
    assert_eq!(r["lo"], "0");
    assert_eq!(r["hi"], "1/2");
    assert_eq!(r["max_cycle"], "01");
}

#[test]
fn beta_subcommands() {
    let o = run(bin().args(["beta", "check", "--beta", "1.5", "--word", "11"]));
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["result"]["verdict"]["admissible"], false);

    let o = run(bin().args(["beta", "check", "--beta", "1.618033988749895", "--word", "1010"]));
    assert_eq!(stdout_json(&o)["result"]["verdict"]["admissible"], true);

    let o = run(bin().args(["beta", "expand", "--beta", "2.5", "--x", "0.3", "--digits", "8"]));
    let r = stdout_json(&o)["result"].clone();
    assert_eq!(r["admissible"], true);
    assert!((r["reconstructed"].as_f64().unwrap() - 0.3).abs() < 1e-3);

    let o = run(bin().args(["beta", "surgery", "--beta", "1.8", "--word", "10", "--at", "1", "--tail", "1"]));
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["result"]["digits"], "001");

    let o = run(bin().args(["beta", "surgery", "--beta", "1.8", "--word", "01", "--at", "1", "--tail", "1"]));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn classify_and_dc1() {
    let tmp = TempDir::new().unwrap();
    let model = write(tmp.path(), "golden.json", GOLDEN);
    let p = write(tmp.path(), "p.json", r#"{"q":2,"prefix":"","tail":"01"}"#);
    let r = write(tmp.path(), "r.json", r#"{"q":2,"prefix":"","tail":"10"}"#);
    let o = run(bin()
        .args(["classify", "--horizon", "4096", "--jobs", "2", "--model"])
        .arg(&model)
        .arg("--point")
        .arg(&p)
        .arg("--point")
        .arg(&r));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let results = v["result"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    for res in results {
        assert_eq!(res["recurrence"]["class"], "AP");
        assert_eq!(res["omega"]["nested"], true);
    }

    let o = run(bin().args(["dc1", "--horizon", "10000", "--x"]).arg(&p).arg("--y").arg(&r));
    assert!(o.status.success());
    let rep = &stdout_json(&o)["result"];
    // the pair never gets close, so the upper condition fails
    assert_eq!(rep["verdict"], false);
}

#[test]
fn catalog_lists_nine_targets() {
    let tmp = TempDir::new().unwrap();
    let g = ShiftModel::full(2).unwrap();
    let model = write(tmp.path(), "full.json", r#"{"kind":"full","q":2}"#);
    let mut args: Vec<PathBuf> = Vec::new();
    for (i, w) in ["0", "1", "01", "00010111"].iter().enumerate() {
        let mu = periodic_measure(&g, &SymbolWord::parse(w).unwrap(), 4).unwrap();
        args.push(write(tmp.path(), &format!("m{i}.json"), &serde_json::to_string(&mu.to_file()).unwrap()));
    }
    let full = args.pop().unwrap();
    let mut cmd = bin();
    cmd.args(["catalog", "--model"]).arg(&model).arg("--full").arg(&full);
    for m in &args {
        cmd.arg("--measure").arg(m);
    }
    let o = run(&mut cmd);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["schema"], "v1");
    let entries = v["result"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 9);
    assert_eq!(entries[4]["expected_case"], "Case (2)");
}
