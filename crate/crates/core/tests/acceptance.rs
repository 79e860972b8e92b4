//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line on
//! stderr (bypassing the test harness's output capture) and then asserts.
//! All Monte Carlo criteria use the fixed seed [`SEED`].

use std::io::Write;
use std::process::Command;

use arw::experiments::{
    abelian_suite, cesaro_check, ek_curve, estimate_rho_c, explode_table, fit_decay,
    monotonicity_suite, preemptive_suite, window_growth_suite, EkCurveConfig, ExplodeConfig,
    ExplodeRow, RhoCConfig, RhoEstimate, SuiteReport,
};
use arw::initdist::{EnvSpec, MarginalSpec, SleepMix};
use arw::stabilizer::DEFAULT_CAP;

const SEED: u64 = 2026;
const TRIALS: u64 = 500;

fn report(n: u32, title: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {n:>2}: {} {title} -- {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {n} ({title}) failed: {detail}");
}

fn suite_detail(r: &SuiteReport) -> String {
    format!(
        "{} instances, {} violations, {} capped {:?}",
        r.instances, r.violations, r.capped, r.details
    )
}

#[test]
fn criterion_01_abelian_invariance() {
    let r = abelian_suite(500, SEED).unwrap();
    report(1, "abelian invariance", r.passed() && r.instances == 500, suite_detail(&r));
}

#[test]
fn criterion_02_preemptive_abelian() {
    let r = preemptive_suite(500, SEED).unwrap();
    report(2, "preemptive abelian", r.passed() && r.instances == 500, suite_detail(&r));
}

#[test]
fn criterion_03_monotonicity() {
    let r = monotonicity_suite(500, SEED).unwrap();
    report(3, "odometer monotone in wake set", r.passed() && r.instances == 500, suite_detail(&r));
}

#[test]
fn criterion_04_window_growth() {
    let r = window_growth_suite(200, SEED).unwrap();
    report(4, "odometer monotone in window", r.passed() && r.instances == 200, suite_detail(&r));
}

#[test]
fn criterion_05_averages() {
    let n = 100_000usize;
    let families: [(&str, fn(usize) -> f64, f64, f64); 3] = [
        ("constant", |_| 2.0, 1.0, 2e-2),
        ("alternating", |j| if j % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 2e-2),
        ("1+j^-1/2", |j| 1.0 + 1.0 / (j as f64).sqrt(), 0.5, 1e-1),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, a, half_rho, tol) in families {
        let seq: Vec<f64> = (1..=n).map(a).collect();
        let w = cesaro_check(&seq, &[n]).unwrap()[0].weighted;
        let gap = (w - half_rho).abs();
        pass &= gap < tol;
        detail.push(format!("{name}: |{w:.6} - {half_rho}| = {gap:.2e} (< {tol:.0e})"));
    }
    report(5, "weighted averages", pass, detail.join("; "));
}

fn ek_rows(lambda: f64, rho: f64, k_grid: Vec<u64>) -> Vec<arw::experiments::EkRow> {
    ek_curve(&EkCurveConfig {
        lambda,
        env: EnvSpec::iid_poisson(rho),
        mix: SleepMix::all_active(),
        k_grid,
        trials: TRIALS,
        seed: SEED,
        cap: DEFAULT_CAP,
        workers: 1,
    })
    .unwrap()
}

#[test]
fn criterion_06_supercritical_decay() {
    let rows = ek_rows(1.0, 1.2, vec![25, 50, 75, 100, 125, 150]);
    let table: Vec<String> = rows.iter().map(|r| format!("k={} p={}", r.k, r.p_hat)).collect();
    let capped: u64 = rows.iter().map(|r| r.capped).sum();
    match fit_decay(&rows) {
        Ok(fit) => {
            let pass = capped == 0 && fit.c_hat > 0.0 && fit.c_band.0 > 0.0 && fit.r_squared >= 0.9;
            report(
                6,
                "E_k decay",
                pass,
                format!(
                    "c_hat={:.4} band=({:.4}, {:.4}) r2={:.4} points={} [{}]",
                    fit.c_hat,
                    fit.c_band.0,
                    fit.c_band.1,
                    fit.r_squared,
                    fit.points,
                    table.join(", ")
                ),
            );
        }
        Err(e) => report(6, "E_k decay", false, format!("{e} [{}]", table.join(", "))),
    }
}

#[test]
fn criterion_07_sub_super_contrast() {
    let grid = vec![1, 10, 25, 50, 75, 100, 125, 150];
    let sub = ek_rows(2.0, 0.2, grid);
    let min_sub = sub.iter().map(|r| r.p_hat).fold(1.0, f64::min);
    let sup = ek_rows(2.0, 1.2, vec![150]);
    let p150 = sup[0].p_hat;
    report(
        7,
        "sub/supercritical contrast",
        min_sub >= 0.9 && p150 <= 0.1,
        format!("lambda=2: min p_hat at rho=0.2 over k<=150 is {min_sub}; p_hat(E_150) at rho=1.2 is {p150}"),
    );
}

fn explode(lambda: f64, env: EnvSpec, r_grid: Vec<u64>) -> Vec<ExplodeRow> {
    explode_table(&ExplodeConfig {
        lambda,
        env,
        mix: SleepMix::all_sleeping(),
        r_grid,
        trials: TRIALS,
        seed: SEED,
        cap: DEFAULT_CAP,
        workers: 1,
    })
    .unwrap()
}

fn plateau(rows: &[ExplodeRow]) -> (bool, bool, String) {
    let positive = rows.iter().all(|r| r.p_hat >= 0.05);
    let overlapping = rows
        .iter()
        .all(|a| rows.iter().all(|b| a.ci_lo <= b.ci_hi && b.ci_lo <= a.ci_hi));
    let detail = rows
        .iter()
        .map(|r| format!("R={} p={} ci=({:.4}, {:.4}) capped={}", r.r, r.p_hat, r.ci_lo, r.ci_hi, r.capped))
        .collect::<Vec<_>>()
        .join("; ");
    (positive, overlapping, detail)
}

#[test]
fn criterion_08_explosivity_plateau() {
    let rows = explode(1.0, EnvSpec::iid_poisson(1.2), vec![50, 100, 200]);
    let (positive, overlapping, detail) = plateau(&rows);
    report(8, "explosivity plateau", positive && overlapping, detail);
}

#[test]
fn criterion_09_no_explosion_below() {
    let rows = explode(2.0, EnvSpec::iid_poisson(0.2), vec![100]);
    let r = rows[0];
    report(
        9,
        "no explosion at low density",
        r.p_hat <= 0.02,
        format!("R=100 p={} ({} of {}, capped {})", r.p_hat, r.reached_both, r.trials, r.capped),
    );
}

fn rho_c(lambda: f64) -> RhoEstimate {
    estimate_rho_c(&RhoCConfig {
        lambda,
        k: 100,
        mix: SleepMix::all_active(),
        rho_lo: 0.01,
        rho_hi: 1.5,
        trials: 400,
        tol: 0.01,
        seed: SEED,
        cap: DEFAULT_CAP,
        workers: 1,
    })
    .unwrap()
}

#[test]
fn criterion_10_rho_c_sanity() {
    let one = rho_c(1.0);
    let low = rho_c(0.5);
    let high = rho_c(2.0);
    let in_range = one.rho_hat > 0.05 && one.rho_hat < 0.999;
    let ordered = low.bracket.0 <= high.bracket.1;
    report(
        10,
        "critical density estimate",
        in_range && ordered,
        format!(
            "lambda=1: {:.4} {:?}; lambda=0.5: {:.4} {:?}; lambda=2: {:.4} {:?}",
            one.rho_hat, one.bracket, low.rho_hat, low.bracket, high.rho_hat, high.bracket
        ),
    );
}

#[test]
fn criterion_11_ergodic_laws() {
    let markov = EnvSpec::MarkovMod {
        transition: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        marginals: vec![MarginalSpec::poisson(0.6), MarginalSpec::poisson(1.8)],
    };
    let periodic = EnvSpec::PeriodicPhase {
        pattern: vec![1, 1, 1, 1, 2],
    };
    let mut pass = true;
    let mut details = Vec::new();
    for (name, env) in [("markov", markov), ("periodic", periodic)] {
        let density = env.density().unwrap();
        let rows = explode(1.0, env, vec![50, 100, 200]);
        let (positive, _, detail) = plateau(&rows);
        pass &= positive && (density - 1.2).abs() < 1e-9;
        details.push(format!("{name} (density {density}): {detail}"));
    }
    report(11, "plateau under ergodic laws", pass, details.join(" | "));
}

#[test]
fn criterion_12_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 6] = [
        &["stabilize", "--lo", "1", "--hi", "40", "--rho", "1.3", "--policy", "random"],
        &["ek-scan", "--rho", "1.2", "--kmin", "10", "--kmax", "50", "--step", "10", "--trials", "200"],
        &["explode", "--rho", "1.2", "--r", "20,40", "--trials", "200"],
        &["nucleate", "--rho", "1.2", "--m", "1,2", "--K", "60", "--trials", "200"],
        &["rhoc", "--k", "30", "--trials", "100", "--tol", "0.05"],
        &["check-lemmas", "--instances", "40"],
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for args in commands {
        let mut outputs = Vec::new();
        for workers in ["1", "4"] {
            let out = dir.path().join(format!("{}-{workers}.csv", args[0]));
            let status = Command::new(env!("CARGO_BIN_EXE_arw"))
                .args(args)
                .args(["--seed", "17", "--workers", workers, "--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            pass &= status.status.code() == Some(0);
            outputs.push(std::fs::read(&out).unwrap_or_default());
        }
        let same = !outputs[0].is_empty() && outputs[0] == outputs[1];
        pass &= same;
        details.push(format!("{}: {}", args[0], if same { "identical" } else { "differs" }));
    }
    report(12, "reproducible CSV across worker counts", pass, details.join(", "));
}
