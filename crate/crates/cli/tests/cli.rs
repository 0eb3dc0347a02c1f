use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn dlsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlsec"))
        .args(args)
        .env_remove("DST_SEED")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(v: &Value, key: &str) -> f64 {
    v[key]["value"].as_f64().unwrap()
}

fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn summary_field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap()
}

#[test]
fn bounds_are_ordered() {
    let o = dlsec(&["bounds", "--dist-m", "chisq:4", "--dist-e", "chisq:4", "--pbar-db", "20"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(value(&v, "upper_full") >= value(&v, "lower_full") - 1e-9);
    assert!(value(&v, "upper_main") >= value(&v, "lower_main") - 1e-9);
    assert!(v["high_snr_limit"]["invertible"].as_bool().unwrap());
}

#[test]
fn zero_power_gives_zero_bounds() {
    let o = dlsec(&["bounds", "--pbar-db", "-inf", "--bits"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for k in ["upper_full", "lower_full", "upper_main", "lower_main"] {
        assert_eq!(value(&v, k), 0.0, "{k}");
        assert_eq!(v["bits"][k].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn non_invertible_policy_exits_3() {
    let o = dlsec(&["bounds", "--dist-m", "exp:1", "--dist-e", "exp:1", "--policy", "full-inv"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-invertible channel"));
}

#[test]
fn parse_errors_exit_2() {
    assert_eq!(code(&dlsec(&["bounds", "--dist-m", "weibull:2"])), 2);
    assert_eq!(code(&dlsec(&["bounds", "--pbar-db", "loud"])), 2);
    assert_eq!(code(&dlsec(&["bounds", "--policy", "water-filling"])), 2);
    assert_eq!(code(&dlsec(&["frobnicate"])), 2);
    assert_eq!(code(&dlsec(&["sweep", "--grid", "5,3"])), 2);
    assert_eq!(code(&dlsec(&["simulate", "-b", "0"])), 2);
    assert_eq!(code(&dlsec(&["simulate", "--backoff", "1"])), 2);
}

#[test]
fn sweep_columns() {
    let o = dlsec(&["sweep", "--from", "0", "--to", "40", "--step", "5"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let (header, rows) = read_csv(&text);
    assert_eq!(header.join(","), "snr_db,upper_full,lower_full,upper_main,lower_main,high_snr_limit");
    assert_eq!(rows.len(), 9);
    let num: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x.parse().unwrap()).collect()).collect();
    for w in num.windows(2) {
        assert!(w[1][2] >= w[0][2] - 1e-12, "lower_full decreased");
        assert_eq!(w[1][5], w[0][5]);
    }
    for r in &num {
        assert!(r[1] >= r[2] - 1e-9 && r[3] >= r[4] - 1e-9);
    }
    // lossless: every cell re-formats to the same text
    for (r, n) in rows.iter().zip(&num) {
        for (s, x) in r.iter().zip(n) {
            assert_eq!(&x.to_string(), s);
        }
    }
}

#[test]
fn single_point_sweep_with_bits() {
    let o = dlsec(&["sweep", "--grid", "10", "--bits"]);
    assert_eq!(code(&o), 0);
    let (header, rows) = read_csv(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert_eq!(header.len(), 11);
    assert!(header.contains(&"lower_full_bits".to_string()));
}

#[test]
fn sweep_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let o = dlsec(&["sweep", "--grid", "-5,0", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&std::fs::read_to_string(&path).unwrap());
    assert_eq!(rows[0][0], "-5");
}

fn simulate_in(dir: &Path, name: &str, extra: &[&str]) -> (Output, String, String) {
    let prefix = dir.join(name);
    let mut args = vec!["simulate", "--out", prefix.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = dlsec(&args);
    let json = std::fs::read_to_string(prefix.with_extension("json")).unwrap_or_default();
    let csv = std::fs::read_to_string(prefix.with_extension("csv")).unwrap_or_default();
    (o, json, csv)
}

#[test]
fn baseline_outage_near_half() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _, csv) = simulate_in(
        dir.path(),
        "base",
        &["--scheme", "baseline", "--dist-m", "chisq:4", "--dist-e", "chisq:4", "-a", "100", "-b", "100"],
    );
    assert_eq!(code(&o), 0);
    let line = stdout(&o);
    let f: f64 = summary_field(&line, "outage_frac").parse().unwrap();
    assert!((f - 0.5).abs() <= 3.0 * (0.25f64 / 1e4).sqrt(), "{f}");
    assert_eq!(summary_field(&line, "roundtrip").trim(), "ok");
    let (header, rows) = read_csv(&csv);
    assert_eq!(
        header.join(","),
        "m,l,h_m,h_e,power,r_main,r_eve,r_s,r_s_prime,r_s_dprime,key_consumed,key_generated,data_delivered,insecure_bits,outage"
    );
    assert_eq!(rows.len(), 10_000);
    let outages = rows.iter().filter(|r| r[14] == "1").count();
    assert_eq!(outages as f64 / 1e4, f);
}

#[test]
fn single_superblock_is_insecure() {
    let dir = tempfile::tempdir().unwrap();
    let (o, json, _) = simulate_in(dir.path(), "one", &["--scheme", "full", "-b", "1", "-a", "50"]);
    assert_eq!(code(&o), 0);
    assert_eq!(summary_field(&stdout(&o), "insecure_frac"), "1");
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["otp_insecure_fraction"].as_f64().unwrap(), 1.0);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--scheme", "main", "--seed", "7", "-a", "40", "-b", "3", "--bits"];
    let (_, j1, c1) = simulate_in(dir.path(), "a", &args);
    let (_, j2, c2) = simulate_in(dir.path(), "b", &args);
    assert!(!j1.is_empty() && !c1.is_empty());
    assert_eq!(j1, j2);
    assert_eq!(c1, c2);
    assert!(c1.lines().next().unwrap().ends_with("r_s_dprime_bits"));
}

#[test]
fn seed_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let from_env = Command::new(env!("CARGO_BIN_EXE_dlsec"))
        .args(["simulate", "-a", "20", "-b", "2", "--out"])
        .arg(dir.path().join("env"))
        .env("DST_SEED", "42")
        .output()
        .unwrap();
    assert!(from_env.status.success());
    let (_, _, flag) = simulate_in(dir.path(), "flag", &["-a", "20", "-b", "2", "--seed", "42"]);
    let (_, _, other) = simulate_in(dir.path(), "other", &["-a", "20", "-b", "2", "--seed", "43"]);
    let env_csv = std::fs::read_to_string(dir.path().join("env.csv")).unwrap();
    assert_eq!(env_csv, flag);
    assert_ne!(env_csv, other);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# baseline run\nscheme = baseline\nblocks = 20\nsuperblocks = 2\nseed = 5\n").unwrap();
    let (o, _, csv) = simulate_in(dir.path(), "c", &["--config", conf.to_str().unwrap(), "--superblocks", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&csv);
    assert_eq!(rows.len(), 60);
    assert_eq!(summary_field(&stdout(&o), "starvation"), "0");

    std::fs::write(&conf, "scheme = baseline\ncolour = blue\n").unwrap();
    let (o, _, _) = simulate_in(dir.path(), "d", &["--config", conf.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let missing = dir.path().join("absent.conf");
    let o = dlsec(&["bounds", "--config", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_quick_is_fast() {
    let start = Instant::now();
    let o = dlsec(&["validate", "--quick"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert!(stdout(&o).contains("0 failed"));
}

#[test]
fn validate_failure_exits_4() {
    let o = dlsec(&["validate", "--quick", "--inject-tolerance", "0"]);
    assert_eq!(code(&o), 4);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("secrecy_rate"), "{err}");
}

#[test]
fn validate_default_suite_passes() {
    let o = dlsec(&["validate"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}
