//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed; the
//! process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use lss::annealer::metropolis_accept;
use lss::concentration::concentration_1d;
use lss::domain::normalize_cost;
use lss::engine::{check_queue_invariants, enlarge_and_trim};
use lss::policies::{
    adjust_high_temperature, mu_high, mu_high_unrestricted, softmax_max, softmax_min, split_budget,
    BranchTriplet, SoftmaxParams,
};
use lss::{
    landscape_extrema, toy_f, ActiveQueue, BudgetLedger, EvaluationHistory, Lss, ObjectiveId,
    ToyLandscape,
};
use lss_bench::{compare, median, run_experiment, ExperimentSpec, Method};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
/// Name, check, and time limit.
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn landscape_exactness() -> Outcome {
    let tol = 1e-12;
    ensure((toy_f(0.9) - 0.2).abs() < tol, || {
        format!("F(0.9) = {}", toy_f(0.9))
    })?;
    ensure((toy_f(0.1) - 0.84).abs() < tol, || {
        format!("F(0.1) = {}", toy_f(0.1))
    })?;
    let (v, p) = landscape_extrema();
    let want_v = [0.84, 0.56, 0.36, 0.24, 0.2];
    let want_p = [1.012, 1.108, 1.3, 1.588, 1.972];
    for k in 0..5 {
        ensure((v[k] - want_v[k]).abs() < tol, || {
            format!("valley {k}: {}", v[k])
        })?;
        ensure((p[k] - want_p[k]).abs() < tol, || {
            format!("peak {k}: {}", p[k])
        })?;
    }
    for k in 0..4 {
        ensure(v[k] > v[k + 1], || format!("better rewards fails at {k}"))?;
        ensure(p[k] - v[k] < p[k + 1] - v[k + 1], || {
            format!("harder obstacles fails at {k}")
        })?;
    }
    for k in 0..3 {
        ensure(v[k] - v[k + 1] > v[k + 1] - v[k + 2], || {
            format!("diminishing motivation fails at {k}")
        })?;
    }
    Ok("extrema exact to 1e-12; all three ordering properties strict".into())
}

fn metropolis_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let t = 0.7;
    let trials = 100_000;
    let hits = (0..trials)
        .filter(|_| metropolis_accept(1.0, 1.0 + t, t, &mut rng))
        .count();
    let rate = hits as f64 / trials as f64;
    let target = (-1.0f64).exp();
    ensure((rate - target).abs() <= 0.01, || {
        format!("uphill rate {rate} vs {target}")
    })?;
    let downhill = (0..trials).all(|i| {
        let drop = 1e-9 + (i as f64) * 1e-5;
        metropolis_accept(1.0, 1.0 - drop, t, &mut rng)
    });
    ensure(downhill, || "a downhill move was rejected".into())?;
    Ok(format!(
        "uphill acceptance {rate:.4} (e^-1 = {target:.4}); downhill 100%"
    ))
}

fn gibbs_occupancy() -> Outcome {
    let n = 101;
    let t = 0.5;
    let grid: Vec<f64> = (0..n).map(|i| toy_f(i as f64 / (n - 1) as f64)).collect();
    let weights: Vec<f64> = grid.iter().map(|e| (-e / t).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = vec![0u64; n];
    let mut i = 0usize;
    let steps = 1_000_000;
    for _ in 0..steps {
        // symmetric neighbour proposal; stepping off the grid proposes staying
        let j = if rng.random::<bool>() {
            (i + 1).min(n - 1)
        } else {
            i.saturating_sub(1)
        };
        if metropolis_accept(grid[i], grid[j], t, &mut rng) {
            i = j;
        }
        counts[i] += 1;
    }
    let tv: f64 = counts
        .iter()
        .zip(&weights)
        .map(|(c, w)| (*c as f64 / steps as f64 - w / z).abs())
        .sum::<f64>()
        / 2.0;
    ensure(tv < 0.05, || format!("total variation {tv}"))?;
    Ok(format!("TV distance {tv:.4} at T = {t} over {steps} steps"))
}

fn concentration_edge_cases() -> Outcome {
    let unit = (0.0, 1.0);
    let clustered =
        concentration_1d(&[0.91, 0.93, 0.97, 0.99], 0.95, unit, 10).map_err(|e| e.to_string())?;
    ensure(clustered == 1.0, || {
        format!("clustered agents give {clustered}")
    })?;
    let spread: Vec<f64> = (0..10).map(|j| (j as f64 + 0.5) / 10.0).collect();
    let c = concentration_1d(&spread, 0.55, unit, 10).map_err(|e| e.to_string())?;
    ensure((c - 0.01).abs() <= 1e-12, || {
        format!("uniform spread gives {c}")
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let agents: Vec<f64> = (0..rng.random_range(1..30)).map(|_| rng.random()).collect();
        let bins = rng.random_range(1..40);
        let c = concentration_1d(&agents, rng.random(), unit, bins).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&c), || {
            format!("out of range: {c} for {agents:?}")
        })?;
    }
    Ok(format!(
        "C = 1 clustered, C = {c:.12} spread, 10^4 random configs in [0, 1]"
    ))
}

fn argmax(p: &[f64]) -> usize {
    (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap()
}

fn policy_arithmetic() -> Outcome {
    let params = SoftmaxParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let len = rng.random_range(2..16);
        let mut x: Vec<f64> = Vec::with_capacity(len);
        while x.len() < len {
            let v = rng.random_range(-50.0..50.0);
            if x.iter().all(|u: &f64| (u - v).abs() > 1e-6) {
                x.push(v);
            }
        }
        let lo = softmax_min(&x, params.eta1, params.eps).map_err(|e| e.to_string())?;
        let hi = softmax_max(&x, params.eta2, params.eps).map_err(|e| e.to_string())?;
        let imin = (0..len).min_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
        let imax = (0..len).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
        ensure(argmax(&lo) == imin && argmax(&hi) == imax, || {
            format!("argmax mismatch on {x:?}")
        })?;
        for p in [&lo, &hi] {
            ensure((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, || {
                "not normalized".into()
            })?;
        }
    }

    ensure(
        adjust_high_temperature(0.37, 0.0, 2.0, 1e-12) == 0.37,
        || "conc = 0 endpoint".into(),
    )?;
    let t = adjust_high_temperature(0.37, 1.0, 2.0, 1e-12);
    ensure(t == 8.0, || format!("conc = 1, alpha = 2 gives {t}"))?;

    for e in 0..20 {
        ensure(split_budget(e, 0.0, &mut rng) == (e, 0), || {
            "split at conc 0".into()
        })?;
        ensure(split_budget(e, 1.0, &mut rng) == (0, e), || {
            "split at conc 1".into()
        })?;
    }

    // Conditional law of "draw from the full measure until the index is not
    // taken": P(j) = full_j * sum_k m^k with m the taken mass.
    for trial in 0..50 {
        let triplets: Vec<BranchTriplet> = (0..4)
            .map(|_| {
                let p = rng.random::<f64>();
                BranchTriplet {
                    parent: vec![p],
                    low_child: vec![rng.random()],
                    high_child: vec![rng.random()],
                    parent_cost: toy_f(p),
                    parent_value: rng.random(),
                    low_value: rng.random(),
                    high_value: rng.random_range(0.0..3.0),
                }
            })
            .collect();
        let conc = trial as f64 / 49.0;
        let star = [rng.random::<f64>()];
        let full =
            mu_high_unrestricted(&triplets, &star, conc, &params).map_err(|e| e.to_string())?;
        for mask in 0u32..15 {
            let taken: Vec<bool> = (0..4).map(|j| mask & (1 << j) != 0).collect();
            let got =
                mu_high(&triplets, &star, conc, &params, &taken).map_err(|e| e.to_string())?;
            let m: f64 = (0..4).filter(|&j| taken[j]).map(|j| full[j]).sum();
            let mut series = 0.0;
            let mut mk = 1.0;
            for _ in 0..100_000 {
                series += mk;
                mk *= m;
            }
            for j in 0..4 {
                let want = if taken[j] { 0.0 } else { full[j] * series };
                ensure((got[j] - want).abs() < 1e-9, || {
                    format!("mask {mask:04b}, index {j}: {} vs {want}", got[j])
                })?;
            }
        }
    }
    Ok("softmax argmax on 10^4 vectors; temperature and split endpoints exact; restriction matches enumeration on all 15 masks".into())
}

fn queue_history_invariants() -> Outcome {
    let mut epochs = 0;
    for dim in [1usize, 2] {
        let objective = ToyLandscape::new(dim).map_err(|e| e.to_string())?;
        for seed in 0..50u64 {
            let config = lss::LssConfig {
                seed,
                budget: Some(60),
                initial_states: vec![vec![0.1; dim]; 3],
                ..lss::LssConfig::default()
            };
            let mut failure = None;
            let lss = Lss::new(config, &objective).map_err(|e| e.to_string())?;
            let result = lss
                .run_observed(|s| {
                    epochs += 1;
                    let history = s.history();
                    let queue = s.queue();
                    let m = history.m_functional().unwrap();
                    let star = history.incumbent().unwrap();
                    let members = queue.states().all(|q| history.contains(q));
                    let min_eq = queue
                        .states()
                        .map(|q| history.cost_of(q).unwrap())
                        .fold(f64::INFINITY, f64::min)
                        == m;
                    if !(members
                        && min_eq
                        && queue.contains(&star.state)
                        && check_queue_invariants(queue, history).is_ok())
                        && failure.is_none()
                    {
                        failure = Some(format!("dim {dim} seed {seed} epoch {}", s.epoch()));
                    }
                })
                .map_err(|e| e.to_string())?;
            if let Some(f) = failure {
                return Err(format!("queue invariant broken at {f}"));
            }
            ensure(
                result
                    .trace
                    .windows(2)
                    .all(|w| w[1].m_functional <= w[0].m_functional),
                || format!("M increased (dim {dim}, seed {seed})"),
            )?;
        }
    }

    // scripted branching scenario with a = 3, e = 2
    let objective = ToyLandscape::new(1).map_err(|e| e.to_string())?;
    let ledger = BudgetLedger::new();
    let mut history = EvaluationHistory::new();
    let (t1, t2, t3) = (vec![0.5], vec![0.3], vec![0.1]);
    for s in [&t1, &t2, &t3] {
        history
            .evaluate_and_record(&objective, s.clone(), 0, &ledger)
            .map_err(|e| e.to_string())?;
    }
    let mut queue = ActiveQueue::from_states([t1.clone(), t2.clone(), t3.clone()]);
    let (t1_low, t2_high) = (vec![0.56], vec![0.2]);
    ensure(toy_f(0.56) > toy_f(0.5) && toy_f(0.2) > toy_f(0.5), || {
        "scenario needs θ1 to stay best".into()
    })?;
    let fresh = enlarge_and_trim(
        &mut queue,
        &mut history,
        vec![t1_low.clone(), t2_high.clone()],
        3,
        &objective,
        &ledger,
        1,
    )
    .map_err(|e| e.to_string())?;
    let left: Vec<Vec<f64>> = queue.states().map(<[f64]>::to_vec).collect();
    ensure(left == vec![t1_low, t2_high, t1] && fresh == 2, || {
        format!("final queue {left:?}")
    })?;
    Ok(format!("invariants held over {epochs} observed states (100 runs); scripted queue = (θ1_low, θ2_high, θ1)"))
}

fn accounting() -> Outcome {
    let mut runs = 0;
    for (dim, seed, budget) in [(1usize, 1u64, 120u64), (2, 2, 90), (4, 3, 60), (1, 4, 7)] {
        let objective = ToyLandscape::new(dim).map_err(|e| e.to_string())?;
        let config = lss::LssConfig {
            seed,
            budget: Some(budget),
            initial_states: vec![vec![0.1; dim]; 3],
            ..lss::LssConfig::default()
        };
        let schedules = config.schedules.clone();
        let r = lss::run(config, &objective).map_err(|e| e.to_string())?;
        let mut cheap = 0u64;
        let mut expensive = r.bootstrap_evaluations;
        for row in &r.trace[1..] {
            let i = row.epoch;
            let (a, kl, kh) = (
                schedules.queue_len.at(i - 1),
                schedules.k_low.at(i),
                schedules.k_high.at(i),
            );
            ensure(
                row.queue_len == a && row.k_low == kl && row.k_high == kh,
                || format!("epoch {i} row disagrees with the schedules"),
            )?;
            ensure(
                row.new_evaluations <= schedules.evaluations.at(i) as u64,
                || format!("epoch {i} spent more than e_i"),
            )?;
            cheap += ((kl + kh) * a) as u64;
            expensive += row.new_evaluations;
        }
        ensure(r.ledger.cheap_calls() == cheap, || {
            format!(
                "cheap calls {} vs recomputed {cheap}",
                r.ledger.cheap_calls()
            )
        })?;
        ensure(r.ledger.expensive_calls() == expensive, || {
            format!(
                "expensive calls {} vs recomputed {expensive}",
                r.ledger.expensive_calls()
            )
        })?;
        ensure(
            r.ledger.expensive_calls() <= budget.max(r.bootstrap_evaluations),
            || "over budget".into(),
        )?;
        runs += 1;
    }
    Ok(format!(
        "ledger equals schedule recount exactly on {runs} runs"
    ))
}

fn benchmark_superiority() -> Outcome {
    let base = ExperimentSpec {
        runs: 20,
        budget: 120,
        ..ExperimentSpec::default()
    };
    let sa = ExperimentSpec {
        method: Method::Sa,
        ..base.clone()
    };
    ensure(sa.sa.step_fraction == 1.0 / 50.0, || {
        "SA step is not L/50".into()
    })?;
    let table = compare(&[base.clone(), sa], 120).map_err(|e| e.to_string())?;
    let level = table
        .level_sets
        .iter()
        .position(|l| (l - 0.24).abs() < 1e-9)
        .ok_or("level 0.24 missing")?;
    let (l, s) = (&table.rows[0], &table.rows[1]);
    ensure(
        l.mean_expensive <= 120.0 && s.mean_expensive <= 120.0,
        || "budget exceeded".into(),
    )?;
    let summary = format!(
        "1-D median M: LSS {:.4} vs SA {:.4}; hit 0.24: LSS {:.0}% vs SA {:.0}%",
        l.final_m_median,
        s.final_m_median,
        100.0 * l.hit_fractions[level],
        100.0 * s.hit_fractions[level]
    );
    ensure(l.final_m_median < s.final_m_median, || summary.clone())?;
    ensure(
        l.hit_fractions[level] >= 0.5 && s.hit_fractions[level] < l.hit_fractions[level],
        || summary.clone(),
    )?;

    let mut worst = Vec::new();
    for dim in [2usize, 4, 8] {
        let spec = ExperimentSpec {
            objective: ObjectiveId::Toy { dim },
            ..base.clone()
        };
        let records = run_experiment(&spec).map_err(|e| e.to_string())?;
        let mut finals = Vec::new();
        for rec in &records {
            let g: Vec<f64> = rec
                .trace
                .iter()
                .map(|t| normalize_cost(t.m_functional, dim))
                .collect();
            ensure(g.windows(2).all(|w| w[1] <= w[0]), || {
                format!(
                    "dim {dim} run {}: normalized trace not monotone",
                    rec.summary.run
                )
            })?;
            // 0.84 is the normalized cost at the common start (0.1, ..., 0.1)
            ensure(*g.last().unwrap() < 0.84, || {
                format!(
                    "dim {dim} run {}: final {} not below 0.84",
                    rec.summary.run,
                    g.last().unwrap()
                )
            })?;
            finals.push(*g.last().unwrap());
        }
        worst.push(format!("dim {dim} median {:.3}", median(&finals)));
    }
    Ok(format!(
        "{summary}; normalized finals: {}",
        worst.join(", ")
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("spec.toml");
    std::fs::write(
        &config,
        "objective = \"toyNd:2\"\nruns = 3\nbudget = 45\nseed_base = 17\n",
    )
    .map_err(|e| e.to_string())?;
    let exe = env!("CARGO_BIN_EXE_lss-bench");
    for name in ["a", "b"] {
        let status = Command::new(exe)
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(name))
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            String::from_utf8_lossy(&status.stderr).into_owned()
        })?;
    }
    let mut files = 0;
    for entry in std::fs::read_dir(dir.path().join("a")).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let a = std::fs::read(dir.path().join("a").join(&name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.path().join("b").join(&name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{} differs", name.to_string_lossy()))?;
        files += 1;
    }
    ensure(files == 4, || {
        format!("expected 4 output files, found {files}")
    })?;
    Ok(format!(
        "{files} CSV files byte-identical across two CLI invocations"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "landscape exactness",
            landscape_exactness,
            Duration::from_secs(1),
        ),
        (
            "metropolis statistics",
            metropolis_statistics,
            Duration::from_secs(5),
        ),
        ("gibbs occupancy", gibbs_occupancy, Duration::from_secs(30)),
        (
            "concentration edge cases",
            concentration_edge_cases,
            Duration::from_secs(60),
        ),
        (
            "policy arithmetic",
            policy_arithmetic,
            Duration::from_secs(60),
        ),
        (
            "queue/history invariants",
            queue_history_invariants,
            Duration::from_secs(600),
        ),
        ("ledger accounting", accounting, Duration::from_secs(600)),
        (
            "benchmark superiority",
            benchmark_superiority,
            Duration::from_secs(20 * 60),
        ),
        ("determinism", determinism, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(format!(
                "panicked: {:?}",
                p.downcast_ref::<String>()
                    .map(String::as_str)
                    .or(p.downcast_ref::<&str>().copied())
            ))
        });
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed <= limit {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {elapsed:.1?}, limit {limit:?}"))
            }
        });
        match outcome {
            Ok(msg) => println!("criterion {}: PASS  {name} ({elapsed:.2?}): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({elapsed:.2?}): {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
