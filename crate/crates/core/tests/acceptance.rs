//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gaf::harness::{
    grid_protocol, parse_libsvm, parse_quantiles, prepare, write_reports, Algo, ProtocolConfig, RunConfig,
    DEFAULT_GRID,
};
use gaf::losses::{softmax, softmax_hessian_core};
use gaf::verify::{
    check_chernoff_deviation, check_gradients, check_lower_bound_lemma, check_mixability, check_self_concordance,
    check_softmax_lemma, check_trace_lemma, regret_dominance, CheckReport, DominanceConfig, DominanceOutcome,
};
use gaf::{LowRankIncrement, PdMatrixState, VawRidge, VawTerm};

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn line(o: &Outcome) -> String {
    format!(
        "{} criterion {:>2} {}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    )
}

fn checks_summary(reports: &[CheckReport]) -> (bool, String) {
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass).map(|r| r.name.clone()).collect();
    let worst = reports.iter().map(|r| r.worst_violation).fold(f64::INFINITY, f64::min);
    let msg = if failed.is_empty() {
        format!("{} checks, smallest slack {worst:.3e}", reports.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    (failed.is_empty(), msg)
}

fn woodbury() -> Outcome {
    let ((inv_err, logdet_err), elapsed) = timed(|| {
        let (dprime, k, lambda) = (6, 3, 1.0);
        let d = dprime * k;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = PdMatrixState::new(d, lambda).unwrap();
        let mut dense = DMatrix::identity(d, d) * lambda;
        for _ in 0..500 {
            let u = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt());
            let z: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let inc = LowRankIncrement::new(u, softmax_hessian_core(&softmax(&z).unwrap())).unwrap();
            state.lowrank_update(&inc).unwrap();
            dense += inc.to_dense();
        }
        let direct = dense.clone().cholesky().unwrap();
        let inv_err = (state.inv() - direct.inverse()).norm();
        let logdet: f64 = direct.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        (inv_err, (state.logdet() - logdet).abs())
    });
    Outcome {
        id: 1,
        name: "Woodbury equivalence",
        pass: inv_err <= 1e-7 && logdet_err <= 1e-6 && elapsed < Duration::from_secs(5),
        detail: format!("inverse err {inv_err:.2e}, logdet err {logdet_err:.2e}, {elapsed:.2?}"),
    }
}

fn squared_exactness() -> Outcome {
    let (worst, elapsed) = timed(|| {
        let (d, n, lambda) = (5, 200, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ridge = VawRidge::new(d, lambda, VawTerm::Linear).unwrap();
        let mut gram = DMatrix::identity(d, d) * lambda;
        let mut xy = DVector::zeros(d);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let y: f64 = rng.random_range(-1.0..1.0);
            // argmin Σ(θᵀx_s − y_s)² + θᵀx + λ‖θ‖²  ⇔  Gθ = Σy_s·x_s − x/2
            let theta = gram.clone().lu().solve(&(&xy - &x * 0.5)).unwrap();
            let pred = ridge.predict(&x).unwrap();
            worst = worst.max((pred - theta.dot(&x)).abs());
            ridge.update(&x, y).unwrap();
            gram += &x * x.transpose();
            xy += &x * y;
        }
        worst
    });
    Outcome {
        id: 2,
        name: "squared-loss exactness",
        pass: worst <= 1e-9 && elapsed < Duration::from_secs(1),
        detail: format!("max prediction gap {worst:.2e}, {elapsed:.2?}"),
    }
}

fn lemma_suite() -> Outcome {
    let (reports, elapsed) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut reports = Vec::new();
        for k in [2, 3, 5] {
            for c in [0.5, 1.0, 2.0] {
                reports.push(check_lower_bound_lemma(k, c, 10_000, &mut rng).unwrap());
            }
        }
        reports.push(check_softmax_lemma(4, 100_000, &mut rng).unwrap());
        reports.push(check_trace_lemma(8, 10_000, &mut rng).unwrap());
        for (dprime, k) in [(1, 2), (3, 4)] {
            let (sc, smooth) = check_self_concordance(dprime, k, 1.0, 10_000, &mut rng).unwrap();
            reports.push(sc);
            reports.push(smooth);
        }
        reports
    });
    let (ok, msg) = checks_summary(&reports);
    Outcome {
        id: 3,
        name: "lemma suite",
        pass: ok && elapsed < Duration::from_secs(30),
        detail: format!("{msg}, {elapsed:.2?}"),
    }
}

fn mixability() -> Outcome {
    let (reports, elapsed) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        [2, 4]
            .map(|k| check_mixability(k, 3, 1_000_000, &mut rng).unwrap())
            .to_vec()
    });
    let (ok, msg) = checks_summary(&reports);
    Outcome {
        id: 4,
        name: "mixability equality",
        pass: ok && elapsed < Duration::from_secs(60),
        detail: format!("{msg} (standard errors), {elapsed:.2?}"),
    }
}

fn gradients() -> Outcome {
    let (reports, elapsed) = timed(|| check_gradients(1000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap());
    let (ok, msg) = checks_summary(&reports);
    Outcome {
        id: 5,
        name: "gradient/Hessian correctness",
        pass: ok && elapsed < Duration::from_secs(10),
        detail: format!("{msg}, {elapsed:.2?}"),
    }
}

fn dominance_run() -> (DominanceOutcome, Duration) {
    timed(|| regret_dominance(&DominanceConfig::new(2000, 100_000, vec![0, 1, 2, 3, 4])).unwrap())
}

fn csv_bytes(outcome: &DominanceOutcome) -> Vec<u8> {
    let mut buf = Vec::new();
    write_reports(&outcome.reports, &mut buf).unwrap();
    buf
}

fn bound_dominance(run: &DominanceOutcome, elapsed: Duration) -> Outcome {
    let r = &run.dominance;
    let worst_ratio = run
        .reports
        .iter()
        .map(|rep| rep.final_regret() / rep.bound[rep.len() - 1])
        .fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        id: 6,
        name: "regret bound dominance",
        pass: r.pass && elapsed < Duration::from_secs(600),
        detail: format!(
            "{} prefixes, smallest slack {:.3e}, largest final regret/bound {worst_ratio:.3e}, {elapsed:.2?}",
            r.trials, r.worst_violation
        ),
    }
}

fn surrogate(run: &DominanceOutcome) -> Outcome {
    let r = &run.surrogate;
    Outcome {
        id: 7,
        name: "surrogate soundness",
        pass: r.pass,
        detail: format!("{} points, smallest slack {:.3e}", r.trials, r.worst_violation),
    }
}

fn chernoff() -> Outcome {
    let (report, elapsed) =
        timed(|| check_chernoff_deviation(3, 0.1, 1000, 10_000, &mut ChaCha8Rng::seed_from_u64(8)).unwrap());
    Outcome {
        id: 8,
        name: "Chernoff deviation",
        pass: report.pass && elapsed < Duration::from_secs(30),
        detail: format!("tail frequency {:.4}, {elapsed:.2?}", -report.worst_violation),
    }
}

fn comparison() -> Outcome {
    let ((gaf, best, k, rows), elapsed) = timed(|| {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/segment.scale");
        let ds = parse_libsvm(&path).unwrap();
        let data = prepare(&ds, 1.0).unwrap();
        let cfg = ProtocolConfig {
            base: RunConfig {
                radius: 100.0,
                samples: 100,
                seeds: (0..20).collect(),
                oracle: false,
                ..RunConfig::new(Algo::Gaf)
            },
            algos: vec![Algo::Gaf, Algo::Ons, Algo::Ogd],
            grid_lambda: DEFAULT_GRID.to_vec(),
            grid_beta: DEFAULT_GRID.to_vec(),
            grid_eta: DEFAULT_GRID.to_vec(),
            tuning_seeds: 1,
        };
        let summaries = grid_protocol(&cfg, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("quantiles.csv");
        let tables: Vec<_> = summaries.iter().map(|s| s.quantiles.clone()).collect();
        gaf::harness::emit_quantiles_csv(&tables, &out).unwrap();
        let rows = parse_quantiles(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let median = |a: Algo| {
            summaries
                .iter()
                .find(|s| s.algo == a)
                .map(|s| s.median_final_average_loss())
                .unwrap()
        };
        let best = median(Algo::Ons).min(median(Algo::Ogd));
        (median(Algo::Gaf), best, data.classes, rows.len())
    });
    let log_k = (k as f64).ln();
    Outcome {
        id: 9,
        name: "grid comparison on segment",
        pass: gaf.is_finite()
            && gaf <= log_k
            && gaf <= 1.15 * best
            && rows == 3 * 2310
            && elapsed < Duration::from_secs(900),
        detail: format!(
            "GAF median {gaf:.4}, best baseline {best:.4}, log K {log_k:.4}, {rows} quantile rows, {elapsed:.2?}"
        ),
    }
}

fn main() {
    let mut outcomes = Vec::new();
    let mut report = |o: Outcome| {
        println!("{}", line(&o));
        outcomes.push(o);
    };
    report(woodbury());
    report(squared_exactness());
    report(lemma_suite());
    report(mixability());
    report(gradients());
    let (first, elapsed) = dominance_run();
    report(bound_dominance(&first, elapsed));
    report(surrogate(&first));
    report(chernoff());
    report(comparison());
    let (second, _) = dominance_run();
    let (a, b) = (csv_bytes(&first), csv_bytes(&second));
    report(Outcome {
        id: 10,
        name: "determinism",
        pass: a == b,
        detail: format!("{} CSV bytes per run, identical: {}", a.len(), a == b),
    });
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if !failed.is_empty() {
        eprintln!("criteria failed: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria passed", outcomes.len());
}
