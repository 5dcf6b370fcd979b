use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fblqos");

/// Shipped configs and the subcommand each one drives.
const SHIPPED: [(&str, &str); 9] = [
    ("awgn_ec", "ec"),
    ("check_power_law", "check"),
    ("rayleigh_ec", "ec"),
    ("nakagami_fixed_ec", "ec"),
    ("nakagami_water_filling_ec", "ec"),
    ("gains_nakagami", "gains"),
    ("simulate_rayleigh", "simulate"),
    ("slope_rayleigh", "slope"),
    ("tradeoff_awgn", "tradeoff"),
];

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn config(name: &str) -> PathBuf {
    root().join("configs").join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_cfg(sub: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(bytes: &[u8]) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_reader(bytes);
    let h = r.headers().unwrap().clone();
    r.records()
        .map(|rec| h.iter().zip(rec.unwrap().iter()).map(|(k, v)| (k.to_string(), v.to_string())).collect())
        .collect()
}

#[test]
fn goldens_reproduce_bit_for_bit() {
    for (name, sub) in SHIPPED {
        let tmp = tempfile::tempdir().unwrap();
        let o = run_cfg(sub, &config(name), tmp.path(), &[]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        let got = files(tmp.path());
        let want = files(&root().join("tests/golden").join(name));
        assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>(), "{name}");
        for (f, bytes) in &want {
            assert!(got[f] == *bytes, "{name}/{f} differs from the golden copy");
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_cfg("ec", &config("rayleigh_ec"), a.path(), &["--jobs", "1"]).status.success());
    assert!(run_cfg("ec", &config("rayleigh_ec"), b.path(), &["--jobs", "3"]).status.success());
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn golden_values_agree_with_independent_results() {
    let g = root().join("tests/golden");
    // Monte Carlo and quadrature are independent routes to the same value.
    let rows = csv_rows(&fs::read(g.join("rayleigh_ec/ec.csv")).unwrap());
    for th in rows.iter().filter(|r| r["method"] == "quadrature").map(|r| r["theta"].clone()) {
        let get = |m: &str| rows.iter().find(|r| r["theta"] == th && r["method"] == m).unwrap();
        let q: f64 = get("quadrature")["ec_bits"].parse().unwrap();
        let mc: f64 = get("montecarlo")["ec_bits"].parse().unwrap();
        let se: f64 = get("montecarlo")["error_estimate"].parse().unwrap();
        assert!((q - mc).abs() <= 3.0 * se, "θ={th}: {q} vs {mc} ± {se}");
    }

    let mean = |name: &str| -> f64 {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(g.join(name).join("ec.json")).unwrap()).unwrap();
        v["mean_service_bits"].as_f64().unwrap()
    };
    let (fixed, wf) = (mean("nakagami_fixed_ec"), mean("nakagami_water_filling_ec"));
    assert!((fixed / 3923.0 - 1.0).abs() < 0.01 && (wf / 3932.0 - 1.0).abs() < 0.01, "{fixed} {wf}");
    let ec_at = |name: &str| -> Vec<f64> {
        csv_rows(&fs::read(g.join(name).join("ec.csv")).unwrap())
            .iter()
            .filter(|r| r["method"] == "quadrature")
            .map(|r| r["ec_bits"].parse().unwrap())
            .collect()
    };
    let (ef, ew) = (ec_at("nakagami_fixed_ec"), ec_at("nakagami_water_filling_ec"));
    for i in ef.len() / 2..ef.len() {
        assert!(ew[i] < ef[i]);
    }

    let slope = csv_rows(&fs::read(g.join("slope_rayleigh/slope.csv")).unwrap());
    let s: f64 = slope[1]["slope"].parse().unwrap();
    assert!((s - 0.3385).abs() < 0.02);
}

#[test]
fn awgn_gives_one_theta_free_row() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_cfg("ec", &config("awgn_ec"), tmp.path(), &[]).status.success());
    let rows = csv_rows(&fs::read(tmp.path().join("ec.csv")).unwrap());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["theta"], "");
    assert_eq!(rows[0]["method"], "exact");
}

#[test]
fn seed_moves_only_monte_carlo_rows() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_cfg("ec", &config("rayleigh_ec"), a.path(), &["--seed", "1"]).status.success());
    assert!(run_cfg("ec", &config("rayleigh_ec"), b.path(), &["--seed", "2"]).status.success());
    let ra = csv_rows(&fs::read(a.path().join("ec.csv")).unwrap());
    let rb = csv_rows(&fs::read(b.path().join("ec.csv")).unwrap());
    assert_eq!(ra.len(), rb.len());
    let mut moved = 0;
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x["method"], y["method"]);
        if x["method"] == "montecarlo" {
            moved += usize::from(x["ec_bits"] != y["ec_bits"]);
        } else {
            assert_eq!(x, y);
        }
    }
    assert_eq!(moved, ra.len() / 3);
}

#[test]
fn method_flag_filters_rows() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_cfg("ec", &config("rayleigh_ec"), tmp.path(), &["--method", "quadrature"]).status.success());
    let rows = csv_rows(&fs::read(tmp.path().join("ec.csv")).unwrap());
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r["method"] == "quadrature"));
}

#[test]
fn unknown_keys_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    for (body, key) in [
        (r#"{"chanel": {"kind": "awgn"}}"#, "chanel"),
        (r#"{"channel": {"kind": "rayleigh", "omga": 1}, "fbc": {"blocklength": 100, "error_prob": 0.01, "snr_db": 10}, "ec": {"theta": {"values": [0.1]}}}"#, "omga"),
        (r#"{"channel": {"kind": "rayleigh", "m": 2}, "fbc": {"blocklength": 100, "error_prob": 0.01, "snr_db": 10}, "ec": {"theta": {"values": [0.1]}}}"#, "channel.m"),
        (r#"{"channel": {"kind": "awgn"}, "fbc": {"blocklength": 100, "error_prob": 0.01, "snr": 10}, "ec": {"theta": {"values": [0.1]}}}"#, "snr"),
        (r#"{"channel": {"kind": "awgn"}, "fbc": {"blocklength": 100, "error_prob": 0.01, "snr_db": 10, "snr_linear": 10}, "ec": {"theta": {"values": [0.1]}}}"#, "snr_linear"),
        (r#"{"channel": {"kind": "awgn"}, "fbc": {"blocklength": 100, "error_prob": 0.01, "snr_db": 10}}"#, "ec"),
    ] {
        let cfg = write_cfg(tmp.path(), body);
        let o = run_cfg("ec", &cfg, &tmp.path().join("out"), &[]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
        assert!(!tmp.path().join("out").exists());
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // Out-of-range physical value.
    let cfg = write_cfg(
        tmp.path(),
        r#"{"channel": {"kind": "awgn"}, "fbc": {"blocklength": 100, "error_prob": 1.5, "snr_db": 10}, "ec": {"theta": {"values": [0.1]}}}"#,
    );
    assert_eq!(run_cfg("ec", &cfg, &out, &[]).status.code(), Some(2));
    // Arrivals faster than the service.
    let cfg = write_cfg(
        tmp.path(),
        r#"{"channel": {"kind": "rayleigh"}, "fbc": {"blocklength": 100, "error_prob": 0.01, "snr_db": 10},
            "arrival": {"kind": "deterministic", "load": 1.2},
            "simulate": {"n_slots": 1000, "queue_thresholds_bits": {"values": [10]}, "delay_thresholds_slots": [1]}}"#,
    );
    let o = run_cfg("simulate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    // A blocklength schedule below the thresholds.
    let cfg = write_cfg(
        tmp.path(),
        r#"{"channel": {"kind": "rayleigh"},
            "gains": {"varrho": {"values": [1]}, "snr_db": {"start": 40, "stop": 60, "points": 5},
                      "schedule": {"psi": {"kind": "constant", "value": 10}, "eps": {"kind": "fixed", "eps": 0.1}}}}"#,
    );
    assert_eq!(run_cfg("gains", &cfg, &out, &[]).status.code(), Some(3));
    assert_eq!(run(&["ec"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn only_declared_files_are_written() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_cfg("tradeoff", &config("tradeoff_awgn"), tmp.path(), &[]);
    assert!(o.status.success());
    assert_eq!(files(tmp.path()).keys().collect::<Vec<_>>(), ["tradeoff.csv"]);
    let printed = String::from_utf8(o.stdout).unwrap();
    assert!(printed.trim_end().ends_with("tradeoff.csv"));
}
