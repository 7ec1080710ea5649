//! The twelve acceptance criteria, one line each. Runs without the libtest
//! harness so the lines are always shown; exits non-zero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use franks_core::report::VerificationReport;
use franks_core::suites::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn from_report(r: &VerificationReport) -> Outcome {
    let detail = r
        .checks
        .iter()
        .map(|c| {
            let mark = if c.pass { "" } else { " FAILED" };
            format!("{}={:.3e}{mark}", c.name, c.measured)
        })
        .collect::<Vec<_>>()
        .join(", ");
    Outcome { pass: r.pass, detail }
}

fn within(mut o: Outcome, took: Duration, limit: Duration) -> Outcome {
    let ok = took <= limit;
    o.detail = format!("runtime {:.1}s (limit {}s){}; {}", took.as_secs_f64(), limit.as_secs(), if ok { "" } else { " EXCEEDED" }, o.detail);
    o.pass &= ok;
    o
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn full_suite_twice() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_franks");
    let mut outputs = Vec::new();
    let mut worst = Duration::ZERO;
    for _ in 0..2 {
        let (out, took) = timed(|| Command::new(bin).args(["run-suite", "all", "--seed", "42"]).output());
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: format!("could not run {bin}: {e}"),
                }
            }
        };
        worst = worst.max(took);
        outputs.push(out);
    }
    let codes: Vec<Option<i32>> = outputs.iter().map(|o| o.status.code()).collect();
    let identical = outputs[0].stdout == outputs[1].stdout;
    let o = Outcome {
        pass: codes.iter().all(|c| *c == Some(0)) && identical && !outputs[0].stdout.is_empty(),
        detail: format!("exit codes {codes:?}, reports byte-identical: {identical}, {} bytes", outputs[0].stdout.len()),
    };
    within(o, worst, Duration::from_secs(300))
}

fn main() {
    let cfg = SuiteConfig::default();
    let (sweep, sweep_time) = timed(|| factorization_sweep(&cfg));
    let (chained, chained_time) = timed(|| criterion_chained_transit(&cfg));

    let results: Vec<(&str, Outcome)> = vec![
        ("factorization round-trip", within(from_report(&criterion_round_trip(&cfg, &sweep)), sweep_time, Duration::from_secs(30))),
        ("square-root bound", from_report(&criterion_sqrt_bound(&cfg, &sweep))),
        ("flow oracle", from_report(&criterion_flow_oracle(&cfg))),
        ("rotation realization", from_report(&criterion_rotation_realization(&cfg))),
        ("conservation", from_report(&criterion_conservation(&cfg))),
        ("C2 scaling", from_report(&criterion_c2_scaling(&cfg))),
        ("Poincare single transit", from_report(&criterion_single_transit(&cfg))),
        ("Poincare chained", within(from_report(&chained), chained_time, Duration::from_secs(120))),
        ("discrete realization", from_report(&criterion_discrete_realization(&cfg))),
        ("perturbation law", from_report(&criterion_perturbation_law(&cfg))),
        ("flowbox", from_report(&criterion_flowbox(&cfg))),
        ("run-suite all", full_suite_twice()),
    ];

    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {:>2} {name}: {}", k + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
