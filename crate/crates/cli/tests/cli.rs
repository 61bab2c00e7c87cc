use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_permit-sim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn reference() -> Value {
    let out = run(&["reference"]);
    assert!(out.status.success());
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Reference configuration shrunk to `firms` firms over `horizon` periods.
fn small(dir: &Path, firms: usize, horizon: usize, price_support: f64) -> PathBuf {
    let mut cfg = reference();
    cfg["policy"]["horizon"] = horizon.into();
    cfg["policy"]["price_support"] = price_support.into();
    cfg["firms"]["bounds"]["count"] = firms.into();
    let path = dir.join(format!("cfg_{firms}_{horizon}_{price_support}.json"));
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn reference_round_trips_through_validate() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("ref.json");
    fs::write(&path, run(&["reference"]).stdout).unwrap();
    let out = run(&["validate", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

#[test]
fn invalid_config_exits_2() {
    let dir = TempDir::new().unwrap();
    let mut cfg = reference();
    cfg["policy"]["price_support"] = 12.0.into();
    cfg["economy"]["q"] = 1.5.into();
    let path = dir.path().join("bad.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = run(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&path, "{ not json").unwrap();
    assert_eq!(run(&["validate", "--config", path.to_str().unwrap()]).status.code(), Some(2));

    let mut cfg = reference();
    cfg["policy"]["surprise"] = 1.into();
    fs::write(&path, cfg.to_string()).unwrap();
    assert_eq!(run(&["validate", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn scenario_budget_exits_4() {
    let dir = TempDir::new().unwrap();
    let mut cfg = reference();
    cfg["options"]["enumeration_budget"] = 10.into();
    let path = dir.path().join("budget.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = run(&["adopt", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn adopt_writes_stable_schemas() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 3, 4, 5.0);
    let out_dir = dir.path().join("adopt");
    let out = run(&[
        "adopt",
        "--config",
        cfg.to_str().unwrap(),
        "--pg-sweep",
        "1.5,2.5,3.5,4.5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for name in ["trajectory_no_ec4p.csv", "trajectory_ec4p.csv"] {
        assert_eq!(header(&out_dir.join(name)), "period,firm,technology,adoption_period");
        assert_eq!(fs::read_to_string(out_dir.join(name)).unwrap().lines().count(), 1 + 4 * 3);
    }
    assert_eq!(header(&out_dir.join("aggregate.csv")), "period,adopters_no_ec4p,adopters_ec4p");
    assert_eq!(header(&out_dir.join("expected_prices.csv")), "period,price_no_ec4p,price_ec4p");
    assert_eq!(
        header(&out_dir.join("sweep_aggregate.csv")),
        "period,adopters_pg_1.5,adopters_pg_2.5,adopters_pg_3.5,adopters_pg_4.5"
    );
    assert_eq!(header(&out_dir.join("sweep_first_adoption.csv")), "price_support,first_adoption");

    let without = column(&out_dir.join("aggregate.csv"), "adopters_no_ec4p");
    let with = column(&out_dir.join("aggregate.csv"), "adopters_ec4p");
    assert!(with.iter().zip(&without).all(|(a, b)| a >= b));

    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for name in listed {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    assert_eq!(manifest["command"], "adopt");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn single_firm_single_period_is_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 1, 1, 0.0);
    let out_dir = dir.path().join("one");
    let out = run(&["adopt", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["trajectory_ec4p.csv", "aggregate.csv", "expected_prices.csv"] {
        assert_eq!(fs::read_to_string(out_dir.join(name)).unwrap().lines().count(), 2, "{name}");
    }
}

fn montecarlo(cfg: &Path, out_dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "montecarlo",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files(&path));
        } else if path.file_name().unwrap() != "manifest.json" {
            out.push(path.strip_prefix(root).unwrap().to_path_buf());
        }
    }
    out.sort();
    out
}

#[test]
fn montecarlo_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("ref.json");
    fs::write(&cfg, run(&["reference"]).stdout).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        montecarlo(&cfg, out, &["--paths", "2000", "--seed", "42"]);
    }
    let names = files(&a);
    assert_eq!(names, files(&b));
    assert!(names.len() >= 5);
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{}", name.display());
    }
    assert_eq!(header(&a.join("nets.csv")), "path_index,x_in,x_out,net");
    assert_eq!(header(&a.join("cdf.csv")), "level,cdf");
    assert_eq!(header(&a.join("pdf.csv")), "lower,upper,density");
    assert_eq!(column(&a.join("nets.csv"), "net").len(), 2000);

    let report: Value = serde_json::from_str(&fs::read_to_string(a.join("risk_report.json")).unwrap()).unwrap();
    for level in ["0.10", "0.05", "0.01"] {
        assert!(report["selected"][level]["avar"].as_f64().unwrap() >= report["selected"][level]["var"].as_f64().unwrap());
        assert!(report["report"]["levels"][level].is_object());
    }
}

#[test]
fn different_seeds_differ() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 3, 4, 2.0);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    montecarlo(&cfg, &a, &["--paths", "200", "--seed", "1"]);
    montecarlo(&cfg, &b, &["--paths", "200", "--seed", "2"]);
    assert_ne!(fs::read(a.join("nets.csv")).unwrap(), fs::read(b.join("nets.csv")).unwrap());
}

#[test]
fn zero_support_has_no_outlay() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 3, 4, 0.0);
    let out = dir.path().join("zero");
    montecarlo(&cfg, &out, &["--paths", "300", "--matching", "stochastic"]);
    let x_out = column(&out.join("nets.csv"), "x_out");
    assert_eq!(x_out.len(), 300);
    assert!(x_out.iter().all(|v| *v == 0.0));
    let x_in = column(&out.join("nets.csv"), "x_in");
    assert_eq!(column(&out.join("nets.csv"), "net"), x_in);
}

#[test]
fn support_sweep_gives_four_risk_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = small(dir.path(), 3, 4, 2.0);
    for frozen in [false, true] {
        let out = dir.path().join(format!("sweep_{frozen}"));
        let mut extra = vec!["--paths", "200", "--pg-sweep", "1.5,2.5,3.5,4.5", "--risk-convention", "paper"];
        if frozen {
            extra.push("--frozen");
        }
        montecarlo(&cfg, &out, &extra);
        for pg in ["1.5", "2.5", "3.5", "4.5"] {
            let report: Value =
                serde_json::from_str(&fs::read_to_string(out.join(format!("pg_{pg}/risk_report.json"))).unwrap()).unwrap();
            assert_eq!(report["convention"], "paper");
            assert_eq!(report["price_support"].as_f64().unwrap(), pg.parse::<f64>().unwrap());
        }
        assert_eq!(header(&out.join("sweep_risk.csv")), "price_support,lambda,var,avar");
        assert_eq!(fs::read_to_string(out.join("sweep_risk.csv")).unwrap().lines().count(), 1 + 4 * 3);
    }
}

fn market(dir: &Path, body: &str, extra: &[&str]) -> Output {
    let path = dir.join("positions.csv");
    fs::write(&path, body).unwrap();
    let mut args = vec!["market", "--positions", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn market_single_seller() {
    let dir = TempDir::new().unwrap();
    let out = market(dir.path(), "position,technology\n-1,old\n1,old\n", &["--penalty", "10"]);
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "cleared");
    assert!((r["price"].as_f64().unwrap() - 6.934852).abs() < 1e-5);
    assert!((r["sellers"][0]["submitted"].as_f64().unwrap() - 0.5176381).abs() < 1e-6);

    let out = market(dir.path(), "position,technology\n-1,new\n1,old\n", &["--penalty", "10", "--price-support", "5"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let price = r["price"].as_f64().unwrap();
    assert!((price - 8.41).abs() < 1e-2 && price >= 5.0);
    assert!((r["sellers"][0]["submitted"].as_f64().unwrap() - 0.384).abs() < 1e-3);
}

#[test]
fn market_without_sellers_penalizes_buyers() {
    let dir = TempDir::new().unwrap();
    let out = market(dir.path(), "position,technology\n2,old\n3,new\n", &["--penalty", "10"]);
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "no supply");
    assert_eq!(r["payoffs"][0].as_f64().unwrap(), -20.0);
    assert_eq!(r["payoffs"][1].as_f64().unwrap(), -30.0);
    for b in r["buyers"].as_array().unwrap() {
        assert_eq!(b["executed"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn malformed_positions_report_line() {
    let dir = TempDir::new().unwrap();
    let out = market(dir.path(), "position,technology\n-1,old\n1,purple\n", &["--penalty", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}
