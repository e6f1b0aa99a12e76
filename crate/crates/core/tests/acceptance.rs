//! Acceptance run: each criterion is executed at full scale, its records are
//! re-checked against independently stated expectations, and one PASS/FAIL
//! line is printed per criterion.

use std::process::ExitCode;
use std::time::Instant;

use cbs_forge_core::battery::{run_criterion, Criterion, SuiteOptions};
use cbs_forge_core::report::TrialRecord;
use serde_json::Value;

const SEED: u64 = 20_240_611;

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn count(trials: &[TrialRecord], expected: usize) -> Result<(), String> {
    if trials.len() == expected {
        Ok(())
    } else {
        Err(format!("expected {expected} trials, found {}", trials.len()))
    }
}

fn each(trials: &[TrialRecord], check: impl Fn(&Value) -> Result<(), String>) -> Result<(), String> {
    for t in trials {
        check(&t.data).map_err(|e| format!("{}: {e}", t.label))?;
        if !t.pass {
            return Err(format!("{}: record reports failure", t.label));
        }
    }
    Ok(())
}

fn within(label: &str, a: f64, b: f64, tol: f64) -> Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{label}: |{a} - {b}| > {tol}"))
    }
}

fn recheck(c: Criterion, trials: &[TrialRecord]) -> Result<String, String> {
    match c {
        Criterion::ExactLagrange => {
            count(trials, 500)?;
            each(trials, |d| {
                let r = &d["result"];
                if r["lhs"] == r["rhs"] {
                    Ok(())
                } else {
                    Err(format!("lhs {} != rhs {}", r["lhs"], r["rhs"]))
                }
            })?;
            Ok("500 exact equalities".into())
        }
        Criterion::ComplexLagrange => {
            count(trials, 500)?;
            each(trials, |d| {
                let r = &d["report"];
                let tol = 1e-10 * f(&r["cancellation_mass"]);
                within("phi vs full", f(&r["phi"]), f(&r["rhs_full"]), tol)?;
                within("phi vs restricted", f(&r["phi"]), f(&r["rhs_restricted"]), tol)?;
                within("full vs restricted", f(&r["rhs_full"]), f(&r["rhs_restricted"]), tol)
            })?;
            Ok("500 three-way equalities".into())
        }
        Criterion::SignLemma => {
            count(trials, 2)?;
            // Every (i, j, Q) for (2,2) is 4·4·4 cases and for (2,3) is 6·6·4.
            let expected = [64, 144];
            for (t, e) in trials.iter().zip(expected) {
                if t.data["checked"] != e || t.data["failures"] != 0 {
                    return Err(format!("{}: {}", t.label, t.data));
                }
            }
            Ok("208 cases".into())
        }
        Criterion::GdcOracle => {
            count(trials, 500)?;
            let worst = trials.iter().map(|t| f(&t.data["check"]["deviation"])).fold(0.0, f64::max);
            each(trials, |d| {
                let c = &d["check"];
                within(
                    "expectation vs phi",
                    f(&c["expectation"]),
                    f(&c["phi"]),
                    1e-10 * f(&c["cancellation_mass"]).max(f64::MIN_POSITIVE),
                )
            })?;
            Ok(format!("worst relative deviation {worst:.2e}"))
        }
        Criterion::ClosedFormWitnesses => {
            count(trials, 63)?;
            each(trials, |d| {
                let t = f(&d["t"]);
                within("isotropic", f(&d["isotropic"]), 2.0 * (1.0 - 2.0 * t), 1e-12)?;
                within("werner", f(&d["werner"]), 2.0 * (1.0 + t), 1e-12)
            })?;
            Ok("d in {2,3,4} on 21 points".into())
        }
        Criterion::Invariance => {
            count(trials, 800)?;
            each(trials, |d| {
                let c = &d["check"];
                let dev = f(&c["deviation"]);
                if dev <= f(&c["tolerance"]) {
                    Ok(())
                } else {
                    Err(format!("deviation {dev}"))
                }
            })?;
            Ok("200 trials per law".into())
        }
        Criterion::M1ClosedForm => {
            count(trials, 500)?;
            each(trials, |d| {
                within("phi vs closed form", f(&d["phi"]), f(&d["closed_form"]), 1e-12 * f(&d["cancellation_mass"]))?;
                if f(&d["phi"]) >= -1e-12 {
                    Ok(())
                } else {
                    Err(format!("phi {}", d["phi"]))
                }
            })?;
            Ok("500 inputs".into())
        }
        Criterion::ProvenRegionSearch => {
            count(trials, 19)?;
            let mut worst = f64::INFINITY;
            each(trials, |d| {
                let v = f(&d["best_value"]);
                if v >= -1e-8 {
                    Ok(())
                } else {
                    Err(format!("best_value {v}"))
                }
            })?;
            for t in trials {
                worst = worst.min(f(&t.data["best_value"]));
            }
            Ok(format!("19 cells, lowest best_value {worst:.3e}"))
        }
        Criterion::ConjectureProbe => {
            let v = trials.first().map(|t| f(&t.data["best_value"])).unwrap_or(f64::NAN);
            Ok(format!("(3,3) n=2 best_value {v:.3e}, expected >= -1e-6: {}", v >= -1e-6))
        }
        Criterion::IntegralClosedForms => {
            count(trials, 42)?;
            let (closed, dual): (Vec<_>, Vec<_>) = trials.iter().partition(|t| t.suite == "integral-closed-form");
            let mut mins = Vec::new();
            for t in &closed {
                let d = &t.data;
                if d["draws"] != 10_000 || f(&d["min_value"]) < -1e-9 || !t.pass {
                    return Err(format!("{}: {d}", t.label));
                }
                mins.push(f(&d["min_value"]));
            }
            if let Some(t) = dual.iter().find(|t| !t.pass) {
                return Err(format!("{}: {}", t.label, t.data));
            }
            Ok(format!("minimum values [{}], {} dual-path blocks", sci(&mins), dual.len()))
        }
        Criterion::QuadratureConvergence => {
            count(trials, 1)?;
            let s = &trials[0].data;
            let values: Vec<f64> = s["values"].as_array().ok_or("no values")?.iter().map(f).collect();
            let errors: Vec<f64> = values.iter().map(|v| (v - 1.0 / 12.0).abs()).collect();
            for (i, n) in [32.0f64, 64.0, 128.0, 256.0].into_iter().enumerate() {
                within("midpoint value", values[i], 1.0 / 12.0 - 1.0 / (12.0 * n * n), 1e-14)?;
            }
            if !errors.windows(2).all(|w| w[1] < w[0]) {
                return Err(format!("errors do not shrink: {errors:?}"));
            }
            Ok(format!("errors [{}]", sci(&errors)))
        }
    }
}

fn main() -> ExitCode {
    let opts = SuiteOptions::new(SEED);
    let started = Instant::now();
    let mut failed = 0;
    for c in Criterion::ALL {
        let outcome = run_criterion(c, &opts).map_err(|e| e.to_string()).and_then(|(summary, trials)| {
            let detail = recheck(c, &trials)?;
            if let Some(limit) = summary.time_limit_secs {
                if summary.wall_time_secs > limit {
                    return Err(format!("runtime {:.1}s exceeds {limit}s", summary.wall_time_secs));
                }
            }
            Ok(format!("{detail} ({:.2}s)", summary.wall_time_secs))
        });
        let tag = match (&outcome, c.gating()) {
            (Ok(_), true) => "PASS",
            (Err(_), true) => {
                failed += 1;
                "FAIL"
            }
            (_, false) => "REPORT",
        };
        let detail = outcome.unwrap_or_else(|e| e);
        println!("{tag} criterion {:>2} {}: {detail}", c.number(), c.title());
    }
    println!("{} gating failures, total {:.1}s", failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
