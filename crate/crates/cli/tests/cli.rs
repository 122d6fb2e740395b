use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

struct Run {
    code: i32,
    stderr: String,
    out: PathBuf,
}

fn volterra(dir: &Path, config: &str, args: &[&str]) -> Run {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_volterra"))
        .current_dir(dir)
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    Run {
        code: o.status.code().unwrap(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        out,
    }
}

fn ok(dir: &Path, config: &str, args: &[&str]) -> PathBuf {
    let r = volterra(dir, config, args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    r.out
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const FAST_LADDER: &str = "[ladder]\nvalues = [0.1, 0.05]\n";

#[test]
fn brownian_cov_is_min_table() {
    let d = TempDir::new().unwrap();
    let out = ok(d.path(), "[grids]\ncov = [0.5, 1.0, 1.5]\n", &["cov"]);
    let r = rows(&out.join("cov.csv"));
    assert_eq!(r.len(), 6);
    for row in r {
        let (t, s, v) = (num(&row[0]), num(&row[1]), num(&row[2]));
        assert!(s <= t);
        assert_eq!(v, t.min(s));
    }
}

#[test]
fn functional_mode_without_signal_matches_unconditioned() {
    let d = TempDir::new().unwrap();
    let base = "[model]\nalpha = 0.0\nkernel = { family = \"fbm\", hurst = 0.7 }\n";
    let a = ok(d.path(), base, &["cov"]);
    let plain = std::fs::read(a.join("cov.csv")).unwrap();
    let b = ok(
        d.path(),
        &format!("{base}[conditioning]\nmode = \"functional\"\nx = [1.0, -2.0]\n"),
        &["cov"],
    );
    assert_eq!(plain, std::fs::read(b.join("cov.csv")).unwrap());
}

#[test]
fn path_conditioning_reduces_variance_at_horizon() {
    let d = TempDir::new().unwrap();
    let cfg = "[model]\nkernel = { family = \"fbm\", hurst = 0.75 }\n[grids]\ncov = [1.0]\n";
    let k = num(&rows(&ok(d.path(), cfg, &["cov"]).join("cov.csv"))[0][2]);
    let path = format!("{cfg}[conditioning]\nmode = \"path\"\n");
    let v = num(&rows(&ok(d.path(), &path, &["cov"]).join("cov.csv"))[0][2]);
    assert!(v < k, "{v} vs {k}");
}

#[test]
fn path_conditioning_reads_observed_path() {
    let d = TempDir::new().unwrap();
    std::fs::write(d.path().join("psi.csv"), "u,psi\n0,0\n0.5,0.2\n1.0,0.4\n").unwrap();
    let cfg = "[conditioning]\nmode = \"path\"\npsi = \"psi.csv\"\n[grids]\ncov = [1.0, 2.0]\n";
    ok(d.path(), cfg, &["cov"]);
    std::fs::write(d.path().join("psi.csv"), "t,psi\n0,0\n0.5,0.2\n").unwrap();
    let r = volterra(d.path(), cfg, &["cov"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn fbm_limits_match_closed_form_at_every_eps() {
    let d = TempDir::new().unwrap();
    let cfg = format!("[model]\nkernel = {{ family = \"fbm\", hurst = 0.75 }}\n{FAST_LADDER}");
    let r = rows(&ok(d.path(), &cfg, &["limits"]).join("limits.csv"));
    let kbar: Vec<_> = r.iter().filter(|row| row[1] == "kbar").collect();
    assert_eq!(kbar.len(), 2 * 10);
    for row in kbar {
        assert!((num(&row[4]) - num(&row[6])).abs() < 1e-6, "{row:?}");
        assert_eq!(row[7], "true");
    }
}

#[test]
fn mfold_limits_converge_and_wrong_speed_does_not() {
    let d = TempDir::new().unwrap();
    let cfg = "[model]\nkernel = { family = \"mfold\", m = 1 }\n[conditioning]\nmode = \"functional\"\n";
    let r = rows(&ok(d.path(), cfg, &["limits"]).join("limits.csv"));
    let smallest = r.iter().map(|row| num(&row[0])).fold(f64::INFINITY, f64::min);
    for q in ["kbar", "kbar_g", "rbar_1", "rbar_2"] {
        let last: Vec<_> = r.iter().filter(|row| row[1] == q && num(&row[0]) == smallest).collect();
        assert!(!last.is_empty());
        assert!(last.iter().all(|row| row[7] == "true"), "{q}");
    }
    let wrong = format!("{cfg}[limits]\ngamma_exp = 0.25\n");
    let r = rows(&ok(d.path(), &wrong, &["limits"]).join("limits.csv"));
    assert!(r.iter().filter(|row| row[1] != "kernel").all(|row| row[7] == "false"));
}

#[test]
fn rate_examples() {
    let d = TempDir::new().unwrap();
    std::fs::write(d.path().join("line.csv"), "t,h\n0.25,0.25\n0.5,0.5\n0.75,0.75\n1,1\n").unwrap();
    std::fs::write(d.path().join("square.csv"), "t,h\n0.25,0.0625\n0.5,0.25\n0.75,0.5625\n1,1\n").unwrap();

    let r = json(&ok(d.path(), "", &["rate", "--h", "line.csv"]).join("rate.json"));
    assert!((r["value"].as_f64().unwrap() - 0.5).abs() < 1e-10);

    let mfold = "[model]\nkernel = { family = \"mfold\", m = 1 }\n";
    let r = json(&ok(d.path(), &format!("{mfold}[rate]\nh = \"square.csv\"\n"), &["rate"]).join("rate.json"));
    assert_eq!(r["in_rkhs"], false);

    let functional = format!("{mfold}[conditioning]\nmode = \"functional\"\n[rate]\nh = \"line.csv\"\n");
    let r = json(&ok(d.path(), &functional, &["rate"]).join("rate.json"));
    assert!((r["value"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(r["in_rkhs"], true);
}

#[test]
fn rate_needs_target_path() {
    let d = TempDir::new().unwrap();
    let r = volterra(d.path(), "", &["rate"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("rate.h"), "{}", r.stderr);
}

#[test]
fn probe_reports_oracle_and_trivial_level() {
    let d = TempDir::new().unwrap();
    let cfg = format!("{FAST_LADDER}[probe]\nsamples = 20000\n");
    let r = rows(&ok(d.path(), &cfg, &["probe"]).join("probe.csv"));
    assert_eq!(r.len(), 2);
    for row in &r {
        assert!(!row[8].is_empty());
        assert!(num(&row[8]) < 0.0);
    }
    let zero = format!("{cfg}delta = 0.0\n");
    let r = rows(&ok(d.path(), &zero, &["probe"]).join("probe.csv"));
    assert!(r.iter().all(|row| num(&row[2]) == 1.0));
}

#[test]
fn probe_seed_changes_output_only_through_the_flag() {
    let d = TempDir::new().unwrap();
    let cfg = format!("{FAST_LADDER}[probe]\nsamples = 20000\ndelta = 0.5\n");
    let a = std::fs::read(ok(d.path(), &cfg, &["probe"]).join("probe.csv")).unwrap();
    let b = std::fs::read(ok(d.path(), &cfg, &["probe", "--seed", "42"]).join("probe.csv")).unwrap();
    assert_eq!(a, b);
    let c = std::fs::read(ok(d.path(), &cfg, &["probe", "--seed", "7"]).join("probe.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn speed_fits() {
    let d = TempDir::new().unwrap();
    for (kernel, slope, tol) in [
        ("{ family = \"fbm\", hurst = 0.6 }", 1.2, 0.02),
        ("{ family = \"brownian\" }", 1.0, 1e-9),
        ("{ family = \"mfold\", m = 1 }", 2.0, 0.05),
    ] {
        let cfg = format!("[model]\nkernel = {kernel}\n");
        let r = json(&ok(d.path(), &cfg, &["fit-speed"]).join("speed.json"));
        let s = r["slope"].as_f64().unwrap();
        assert!((s - slope).abs() < tol, "{kernel}: {s}");
    }
}

#[test]
fn literal_coefficients_reweight_path_limit() {
    let d = TempDir::new().unwrap();
    let closed = |kernel: &str, args: &[&str]| -> f64 {
        let cfg = format!(
            "[model]\nalpha = 2.0\nkernel = {kernel}\n[conditioning]\nmode = \"path\"\n{FAST_LADDER}[grids]\nlimits = [0.25]\n"
        );
        let r = rows(&ok(d.path(), &cfg, args).join("limits.csv"));
        num(&r.iter().find(|row| row[1] == "upsilon").unwrap()[6])
    };
    // β = 4/5 with α = 2, α̃ = 1.
    let fbm = "{ family = \"fbm\", hurst = 0.75 }";
    let c = volterra_core::models::fbm_constant(0.75);
    let kernel_part = c * c * 0.25f64.powf(1.5) / 1.5;
    let cov_part = 0.25f64.powf(1.5);
    let derived = closed(fbm, &["limits"]);
    let literal = closed(fbm, &["limits", "--paper-literal-coefficients"]);
    assert!((derived - (0.8 * kernel_part + 0.2 * cov_part)).abs() < 1e-9, "{derived}");
    assert!((literal - (0.2 * kernel_part + 0.2 * cov_part)).abs() < 1e-9, "{literal}");

    let mfold = "{ family = \"mfold\", m = 1 }";
    let a = closed(mfold, &["limits"]);
    assert_eq!(a, closed(mfold, &["limits", "--paper-literal-coefficients"]));
    assert!((a - 0.2 * 0.0625).abs() < 1e-12);
}

#[test]
fn validation_errors_exit_with_two() {
    let d = TempDir::new().unwrap();
    for cfg in [
        "unknown = 1\n",
        "[model]\nhorizon = -1.0\n",
        "[model]\nkernel = { family = \"fbm\", hurst = 1.2 }\n",
        "[model]\nkernel = { family = \"fbm\" }\n",
        "[ladder]\nvalues = [0.1, 0.2]\n",
        "[grids]\nlimits = [2.0]\n",
    ] {
        let r = volterra(d.path(), cfg, &["cov"]);
        assert_eq!(r.code, 2, "{cfg}: {}", r.stderr);
        assert!(!r.stderr.is_empty());
    }
    let r = volterra(d.path(), "[model]\nalfa = 1\n", &["cov"]);
    assert!(r.stderr.contains("line 2") && r.stderr.contains("alfa"), "{}", r.stderr);
}

#[test]
fn numerical_failures_exit_with_three() {
    let d = TempDir::new().unwrap();
    let cfg = "[conditioning]\nmode = \"functional\"\nfunctions = [{ kind = \"indicator\" }, { kind = \"indicator\" }]\n";
    let r = volterra(d.path(), cfg, &["cov"]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}
