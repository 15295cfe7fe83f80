//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Each criterion returns `Err(reason)` on failure; the test asserts at the
//! end so every line is printed even when an early criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spshds::certificates::{
    check_flow_inequality, composite_flow_margin, compute_thresholds, evaluate_theorem, CheckContext,
    CheckId, CheckSettings, EntryStatus, FlowConstants, GridSpec, TheoremCheckConfig, TheoremId,
};
use spshds::executor::{solve, solve_ensemble, ExecConfig, RandomSolutionRecord};
use spshds::flow::{integrate_flow, FlowConfig};
use spshds::hybrid::JumpDistribution;
use spshds::library::make_example;
use spshds::montecarlo::{
    binomial_lower_bound, estimate_recurrence, estimate_stability_in_probability, RecurrenceConfig,
    StabilityConfig,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn grid_101() -> GridSpec {
    GridSpec::cube(2, -3.0, 3.0, 101)
}

fn random_constants(rng: &mut ChaCha8Rng) -> FlowConstants {
    let mut pos = || 0.05 + 4.95 * rng.random::<f64>();
    let (k_x, k_z, k1, k3) = (pos(), pos(), pos(), pos());
    let k2 = 5.0 * rng.random::<f64>();
    FlowConstants::new(k_x, k_z, k1, k2, k3)
}

fn eps_star(k: FlowConstants) -> f64 {
    k.k_x * k.k_z / (k.k2 * k.k_z + k.k1 * k.k3)
}

fn criterion_1() -> Outcome {
    let t = compute_thresholds(FlowConstants::new(1.0, 1.0, 1.0, 1.0, 1.0)).map_err(|e| e.to_string())?;
    ensure!(
        t.epsilon_star == 0.5 && t.theta_star == 0.5,
        "unit constants gave ({}, {})",
        t.epsilon_star,
        t.theta_star
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let k = random_constants(&mut rng);
        let base = compute_thresholds(k).unwrap();
        ensure!(base.theta_star > 0.0 && base.theta_star < 1.0, "theta* = {}", base.theta_star);
        let bump = |k: FlowConstants| compute_thresholds(k).unwrap().epsilon_star;
        let up_k2 = bump(FlowConstants { k2: k.k2 + 0.5, ..k });
        let up_k1 = bump(FlowConstants { k1: k.k1 * 1.5, ..k });
        let up_k3 = bump(FlowConstants { k3: k.k3 * 1.5, ..k });
        let up_kx = bump(FlowConstants { k_x: k.k_x * 1.5, ..k });
        let up_kz = bump(FlowConstants { k_z: k.k_z * 1.5, ..k });
        ensure!(up_k2 < base.epsilon_star, "eps* not decreasing in k_2 at {k:?}");
        ensure!(
            up_k1 < base.epsilon_star && up_k3 < base.epsilon_star,
            "eps* not decreasing in k_1 k_3 at {k:?}"
        );
        ensure!(
            up_kx > base.epsilon_star && up_kz > base.epsilon_star,
            "eps* not increasing in k_x k_z at {k:?}"
        );
    }
    Ok("eps* = theta* = 0.5; monotone over 100 random tuples".into())
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let mut k = random_constants(&mut rng);
        k.k_z = k.k_x;
        let t = compute_thresholds(k).unwrap();
        ensure!((t.epsilon_star - eps_star(k)).abs() <= 1e-15 * eps_star(k), "eps* formula");
        let at = |eps: f64| composite_flow_margin(k, t.theta_star, eps).unwrap();
        let boundary = at(t.epsilon_star);
        ensure!(
            boundary.lambda_min.abs() <= 1e-10,
            "lambda_min = {:e} at eps* for {k:?}",
            boundary.lambda_min
        );
        for rel in [1e-8, 1e-3, 0.5] {
            let below = t.epsilon_star * (1.0 - rel);
            let above = t.epsilon_star * (1.0 + rel);
            ensure!(at(below).positive_definite, "not PD at eps = {below} < eps* for {k:?}");
            ensure!(!at(above).positive_definite, "PD at eps = {above} > eps* for {k:?}");
        }
        for _ in 0..10 {
            let eps = 3.0 * t.epsilon_star * rng.random::<f64>() + 1e-6;
            if (eps - t.epsilon_star).abs() > 1e-10 {
                ensure!(
                    at(eps).positive_definite == (eps < t.epsilon_star),
                    "flag mismatch at eps = {eps}, eps* = {}",
                    t.epsilon_star
                );
            }
        }
    }
    Ok("pd flag equals eps < eps* on 100 tuples".into())
}

fn criterion_3() -> Outcome {
    let ex = make_example("linear-tracker").map_err(|e| e.to_string())?;
    let sys = ex.system().unwrap();
    let cert = ex.certificate().unwrap();
    let settings = CheckSettings::default();
    let grid = grid_101();
    let ctx = CheckContext::new(&sys, &cert, &grid, &settings).map_err(|e| e.to_string())?;
    for id in [CheckId::A2a, CheckId::A2b, CheckId::A4a, CheckId::A4b, CheckId::A6a, CheckId::A6b] {
        let r = ctx.run(id).map_err(|e| e.to_string())?;
        ensure!(r.max_violation <= 1e-9 && r.passed, "{id} max violation {:e}", r.max_violation);
    }
    // Closed form: E[E(g)] - E(y) + rho^ = -0.08675 x^2 - 0.125 (z - x)^2.
    let points = ctx.domain_points(CheckId::T1b).unwrap();
    ensure!(!points.is_empty(), "no jump-set points");
    for p in &points {
        let v = ctx.evaluate_point(CheckId::T1b, p).unwrap().violation;
        let (x, z) = (p[0], p[1]);
        let oracle = -0.08675 * x * x - 0.125 * (z - x) * (z - x);
        ensure!(v < 0.0, "T1b margin not positive at {p:?}: {v}");
        ensure!((v - oracle).abs() <= 1e-12, "T1b {v} vs oracle {oracle} at {p:?}");
    }
    let cfg = TheoremCheckConfig {
        grid,
        settings,
        level_set: None,
    };
    let good = evaluate_theorem(&sys, &cert, 0.1, TheoremId::T1, &cfg).unwrap();
    ensure!(good.verdict, "T1 at 0.1 failed: {:?}", names(&good.failing()));
    let bad = evaluate_theorem(&sys, &cert, 0.6, TheoremId::T1, &cfg).unwrap();
    let failing = names(&bad.failing());
    ensure!(
        !bad.verdict && failing == ["epsilon in (0, eps*)"],
        "T1 at 0.6 failing entries {failing:?}"
    );
    Ok(format!("six checks <= 1e-9, T1b negative at {} jump points", points.len()))
}

fn names(entries: &[&spshds::certificates::ChecklistEntry]) -> Vec<String> {
    entries.iter().map(|e| e.name.clone()).collect()
}

fn criterion_4() -> Outcome {
    let ex = make_example("linear-tracker").unwrap();
    let sys = ex.system().unwrap();
    let mut cert = ex.certificate().unwrap();
    cert.constants.k_z = Some(1.1);
    let r = check_flow_inequality(CheckId::A2b, &sys, &cert, &grid_101(), &CheckSettings::default())
        .map_err(|e| e.to_string())?;
    // 0.1 (z - x)^2 peaks at the corners (-3, 3) and (3, -3); (-3, 3) comes first.
    ensure!((r.max_violation - 3.6).abs() <= 1e-9, "max violation {}", r.max_violation);
    ensure!(!r.passed, "tampered certificate passed");
    ensure!(
        r.witness.as_deref() == Some(&[-3.0, 3.0][..]),
        "witness {:?}",
        r.witness
    );
    Ok(format!("A2b violation {} at (-3, 3)", r.max_violation))
}

fn criterion_5() -> Outcome {
    let sys = make_example("linear-tracker").unwrap().system().unwrap();
    let y0 = [0.5, -0.5];
    let eps = 0.5;
    let end_state = |h: f64| {
        let cfg = FlowConfig {
            h_base: h,
            t_max: 1.0,
            ..FlowConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = integrate_flow(&sys, &y0, eps, &cfg, &mut rng).unwrap();
        let last = seg.last();
        assert!((last.t - 1.0).abs() < 1e-12);
        last.y.clone()
    };
    let hs = [1e-2, 5e-3, 2.5e-3];
    let reference = end_state(hs[2] / 100.0);
    let errors: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let y = end_state(h);
            y.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    let min_ratio = 2f64.powf(3.5);
    for w in errors.windows(2) {
        ensure!(w[0] / w[1] >= min_ratio, "errors {errors:?} contract by less than 2^3.5");
    }
    Ok(format!(
        "error ratios {:.2}, {:.2}",
        errors[0] / errors[1],
        errors[1] / errors[2]
    ))
}

fn bits(records: &[RandomSolutionRecord]) -> String {
    serde_json::to_string(records).unwrap()
}

fn criterion_6() -> Outcome {
    let ex = make_example("noisy-reset").unwrap();
    let sys = ex.system().unwrap();
    let exec = ex.config.execution.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ics: Vec<Vec<f64>> = (0..32)
        .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
        .collect();
    let runs: Vec<String> = [1, 2, 8]
        .iter()
        .map(|&w| bits(&solve_ensemble(&sys, &ics, 0.1, &exec, 99, w).unwrap()))
        .collect();
    ensure!(runs[0] == runs[1] && runs[1] == runs[2], "ensembles differ across worker counts");

    let mut checked = 0;
    for _ in 0..100 {
        let seed: u64 = rng.random();
        let y0 = [rng.random_range(-0.5..0.5), rng.random_range(-2.0..2.0)];
        let full = solve(&sys, &y0, 0.1, &exec, seed).unwrap();
        let n = full.n_jumps();
        ensure!(n >= 2, "too few jumps ({n}) to truncate");
        let k = n / 2;
        let truncated = solve(&sys, &y0, 0.1, &ExecConfig { j_max: k, ..exec.clone() }, seed).unwrap();
        ensure!(truncated.n_jumps() == k, "truncated run made {} jumps", truncated.n_jumps());
        ensure!(truncated.inputs[..] == full.inputs[..k], "input prefix differs for seed {seed}");
        let a: Vec<_> = truncated.arc.iter_nodes().map(|(t, y)| (t, y.to_vec())).collect();
        let b: Vec<_> = full.arc.iter_nodes().take(a.len()).map(|(t, y)| (t, y.to_vec())).collect();
        ensure!(a == b, "arc prefix differs for seed {seed}");
        checked += 1;
    }
    Ok(format!("1/2/8 workers identical; {checked} truncation replays"))
}

fn criterion_7() -> Outcome {
    // Finite support: the check equals a direct enumeration, bit for bit.
    let ex = make_example("linear-tracker").unwrap();
    let sys = ex.system().unwrap();
    let cert = ex.certificate().unwrap();
    let settings = CheckSettings::default();
    let grid = GridSpec::cube(2, -3.0, 3.0, 31);
    let ctx = CheckContext::new(&sys, &cert, &grid, &settings).unwrap();
    let foster = ctx.composite().unwrap();
    let JumpDistribution::FiniteSupport { atoms } = &sys.jump_input else {
        return Err("linear-tracker law is not finite".into());
    };
    let rho_hat = cert.rho_hat.as_ref().unwrap();
    let mut worst = f64::NEG_INFINITY;
    for p in ctx.domain_points(CheckId::T1b).unwrap() {
        let mut mean = 0.0;
        for a in atoms {
            let sup = sys
                .jump_at(&p, &a.value)
                .unwrap()
                .values()
                .iter()
                .map(|g| foster.eval(g))
                .fold(f64::NEG_INFINITY, f64::max);
            mean += a.prob * sup;
        }
        let oracle = mean - foster.eval(&p) + rho_hat.eval(&p);
        let got = ctx.evaluate_point(CheckId::T1b, &p).unwrap();
        ensure!(got.mc_std.is_none(), "finite law took a sampled path");
        ensure!(got.violation.to_bits() == oracle.to_bits(), "{} vs {oracle} at {p:?}", got.violation);
        worst = worst.max(oracle);
    }
    let report = ctx.run(CheckId::T1b).unwrap();
    ensure!(report.max_violation.to_bits() == worst.to_bits(), "report max differs from enumeration");

    // Sampled law: v ~ U(0, 1) on the weak-decrease jump, so E[V(v x)] = x^2 / 6
    // and the A5 value at x is x^2 (1/6 - 1/2 + 0.4).
    let wd = make_example("weak-decrease").unwrap();
    let mut cfg = wd.config.clone();
    cfg.system.jump_input = JumpDistribution::UniformBox {
        lo: vec![0.0],
        hi: vec![1.0],
    };
    let sys = cfg.build_system().unwrap();
    let cert = wd.certificate().unwrap();
    let x = 2.0;
    let closed = x * x * (1.0 / 6.0 - 0.5 + 0.4);
    let mut inside = 0;
    for rep in 0..100 {
        let settings = CheckSettings {
            seed: rep,
            n_mc: 2000,
            ..CheckSettings::default()
        };
        let ctx = CheckContext::new(&sys, &cert, &grid, &settings).unwrap();
        let v = ctx.evaluate_point(CheckId::A5, &[x]).unwrap();
        let std = v.mc_std.ok_or("sampled law reported no standard error")?;
        if (v.violation - closed).abs() <= 3.0 * std {
            inside += 1;
        }
    }
    ensure!(inside >= 99, "only {inside}/100 sampled estimates within 3 sigma");
    Ok(format!("enumeration bit-exact; {inside}/100 sampled within 3 sigma"))
}

fn criterion_8() -> Outcome {
    let ex = make_example("linear-tracker").unwrap();
    let sys = ex.system().unwrap();
    let cert = ex.certificate().unwrap();
    let cfg = StabilityConfig {
        delta: 0.25,
        eps_ball: 0.5,
        t_attract: 20.0,
        trials: 500,
        ..StabilityConfig::default()
    };
    let r = estimate_stability_in_probability(&sys, &cert, 0.1, &cfg, &ex.config.execution, 0, 0)
        .map_err(|e| e.to_string())?;
    let e = r.estimate;
    ensure!(e.n_success == 500, "{} / 500 successes", e.n_success);
    let closed = 0.05f64.powf(1.0 / 500.0);
    ensure!((e.lower_bound - closed).abs() <= 1e-10, "lower bound {} vs {closed}", e.lower_bound);
    ensure!(e.lower_bound >= 0.994, "lower bound {}", e.lower_bound);
    Ok(format!("500/500, lower bound {:.5}", e.lower_bound))
}

fn criterion_9() -> Outcome {
    let ex = make_example("noisy-reset").unwrap();
    let sys = ex.system().unwrap();
    let cert = ex.certificate().unwrap();
    let cfg = RecurrenceConfig {
        delta_o: 0.1,
        radius: 5.0,
        tau: 10.0,
        trials: 1000,
        ..RecurrenceConfig::default()
    };
    let r = estimate_recurrence(&sys, Some(&cert), &cfg, 0.05, &ex.config.execution, 0, 0)
        .map_err(|e| e.to_string())?;
    let e = r.estimate;
    ensure!(e.lower_bound >= 0.95, "lower bound {}", e.lower_bound);
    ensure!(e.n_blow_up == 0, "{} blow-ups", e.n_blow_up);
    Ok(format!("{}/{}, lower bound {:.4}, no blow-up", e.n_success, e.n_trials, e.lower_bound))
}

fn criterion_10() -> Outcome {
    for n in [1usize, 10, 100, 1000] {
        let lb = binomial_lower_bound(n, n, 0.95).map_err(|e| e.to_string())?;
        let closed = 0.05f64.powf(1.0 / n as f64);
        ensure!((lb - closed).abs() <= 1e-10, "n = {n}: {lb} vs {closed}");
    }
    let (p, n, meta) = (0.9, 100, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut covered = 0;
    for _ in 0..meta {
        let k = (0..n).filter(|_| rng.random::<f64>() < p).count();
        if binomial_lower_bound(k, n, 0.95).unwrap() <= p {
            covered += 1;
        }
    }
    let frac = covered as f64 / meta as f64;
    let sigma = (0.95f64 * 0.05 / meta as f64).sqrt();
    ensure!(frac >= 0.95 - 3.0 * sigma, "coverage {frac}");
    Ok(format!("closed forms match; coverage {frac:.3}"))
}

fn run_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_spshds"))
        .args(args)
        .env_remove("TOOLKIT_SEED")
        .output()
        .expect("spawn cli")
        .status
        .code()
        .unwrap_or(-1)
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |s: &str| dir.path().join(s).display().to_string();
    ensure!(run_cli(&["examples", "--out", &d("configs")]) == 0, "examples failed");
    let config = d("configs/linear-tracker.json");
    ensure!(Path::new(&config).exists(), "no emitted config");
    let verify = |source: &[&str], out: &str| {
        let mut args = vec!["verify", "--theorem", "T1", "--epsilon", "0.1", "--out", out];
        args.extend_from_slice(source);
        run_cli(&args)
    };
    ensure!(verify(&["--example", "linear-tracker"], &d("a")) == 0, "verify on built-in failed");
    ensure!(verify(&["--config", &config], &d("b")) == 0, "verify on emitted config failed");
    ensure!(verify(&["--config", &config], &d("c")) == 0, "second verify failed");
    let read = |s: &str| std::fs::read(dir.path().join(s).join("report.json")).unwrap();
    let (a, b, c) = (read("a"), read("b"), read("c"));
    ensure!(a == b && b == c, "report JSON differs between runs");
    Ok(format!("{} byte report identical across 3 runs", a.len()))
}

#[test]
fn acceptance_criteria() {
    type Criterion = (usize, &'static str, fn() -> Outcome, u64);
    let criteria: [Criterion; 11] = [
        (1, "threshold formulas", criterion_1, 1),
        (2, "margin and threshold agree", criterion_2, 1),
        (3, "linear-tracker certificate suite", criterion_3, 10),
        (4, "tampered certificate detected", criterion_4, 10),
        (5, "integrator order", criterion_5, 30),
        (6, "executor determinism and causality", criterion_6, 30),
        (7, "jump-expectation oracle", criterion_7, 30),
        (8, "empirical stability in probability", criterion_8, 60),
        (9, "empirical recurrence", criterion_9, 120),
        (10, "binomial bound", criterion_10, 60),
        (11, "cli round trip", criterion_11, 10),
    ];
    let mut failed = Vec::new();
    for (n, title, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > Duration::from_secs(budget) => {
                Err(format!("{msg}, but took {elapsed:.1?} (budget {budget} s)"))
            }
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {n:>2} PASS  {title}: {msg} ({elapsed:.2?})"),
            Err(msg) => {
                println!("criterion {n:>2} FAIL  {title}: {msg} ({elapsed:.2?})");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn checklist_statuses_serialize_snake_case() {
    let s = serde_json::to_string(&EntryStatus::NotChecked).unwrap();
    assert_eq!(s, "\"not_checked\"");
}
