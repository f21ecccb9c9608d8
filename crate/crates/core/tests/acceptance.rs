//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use common::*;
use platoon_cull::culling::{classifiers_for, greedy_order_from, run_pipeline, standalone_positives, StagePlan};
use platoon_cull::report::{self, PlanChoice, RunInputs, RunOptions, VerifyMode};
use platoon_cull::{
    compute_bounds, coordination, coordination_min_distance, ground_truth, interval_positives, orientation_signature,
    window_width, FeatureConfig, IntervalFeature, NodeId, RoadNetwork, Scenario, ScenarioConfig, TransportAssignment,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn soundness_scenarios() -> Vec<ScenarioConfig> {
    scenario_mix(&[50, 200, 500], 8)
}

fn soundness() -> Outcome {
    let configs = soundness_scenarios();
    let mut truth_pairs = 0;
    let mut checks = 0;
    for cfg in &configs {
        let p = prepare(cfg);
        let net = &p.scenario.network;
        let truth = brute_truth(net, &p.routes, cfg.l_min_km);
        let fast = ground_truth(net, &p.routes, cfg.l_min_km).map_err(|e| e.to_string())?;
        check(to_set(fast.pairs()) == truth, || {
            format!("exact matcher disagrees with brute force (seed {})", cfg.seed)
        })?;
        truth_pairs += truth.len();

        let classifiers = classifiers_for(&p.features);
        let positives = standalone_positives(&classifiers, &p.features).map_err(|e| e.to_string())?;
        for (label, set) in &positives {
            let kept = to_set(set.pairs());
            check(truth.is_subset(&kept), || format!("{label} dropped a platooning pair (seed {})", cfg.seed))?;
            checks += 1;
        }
        let plan = greedy_order_from(&p.features.feasible(), &positives).map_err(|e| e.to_string())?;
        let out = run_pipeline(&plan, &classifiers, &p.features).map_err(|e| e.to_string())?;
        check(truth.is_subset(&to_set(out.pairs())), || {
            format!("pipeline dropped a platooning pair (seed {})", cfg.seed)
        })?;
        checks += 1;
    }
    check(truth_pairs > 0, || "no platooning pairs in any scenario".into())?;
    Ok(format!("{} scenarios, {checks} superset checks, {truth_pairs} platooning pairs, 0 violations", configs.len()))
}

fn lattice(side: u32, spacing: f64) -> RoadNetwork<f64> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for r in 0..side {
        for c in 0..side {
            nodes.push([c as f64 * spacing, r as f64 * spacing]);
            let id = r * side + c;
            if c + 1 < side {
                edges.push([id, id + 1]);
                edges.push([id + 1, id]);
            }
            if r + 1 < side {
                edges.push([id, id + side]);
                edges.push([id + side, id]);
            }
        }
    }
    RoadNetwork::from_json(&serde_json::json!({ "nodes": nodes, "edges": edges }).to_string()).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total_pairs = 0;
    for case in 0..100 {
        let k = rng.gen_range(0..=500usize);
        let range = rng.gen_range(1..=k as i64 + 1);
        let raw: Vec<Option<(f64, f64)>> = (0..k)
            .map(|_| {
                (!rng.gen_bool(0.05)).then(|| {
                    let a = rng.gen_range(0..=range) as f64;
                    (a, a + rng.gen_range(0..=range / 4 + 1) as f64)
                })
            })
            .collect();
        let features: Vec<_> = raw.iter().map(|o| o.map(|(a, b)| IntervalFeature::new(a, b))).collect();
        let got = to_set(interval_positives(&features).pairs());
        let want = naive_overlaps(&raw);
        check(got == want, || format!("interval instance {case} (K = {k}) differs"))?;
        total_pairs += want.len();
    }

    let net = lattice(5, 10.0);
    let walk = |rng: &mut ChaCha8Rng| {
        let mut route = vec![NodeId(rng.gen_range(0..25))];
        for _ in 0..rng.gen_range(1..12) {
            let next: Vec<NodeId> = net.out_edges(*route.last().unwrap()).map(|(_, h)| h).collect();
            route.push(next[rng.gen_range(0..next.len())]);
        }
        route
    };
    let mut agree = 0;
    let mut lambda_true = 0;
    for case in 0..100 {
        let first = walk(&mut rng);
        let second = if case % 2 == 0 {
            let s = rng.gen_range(0..first.len() - 1);
            first[s..rng.gen_range(s + 2..=first.len())].to_vec()
        } else {
            walk(&mut rng)
        };
        let t1 = rng.gen_range(0.0..1.0);
        let t2 = rng.gen_range(0.0..1.0);
        let a = TransportAssignment::new(0, first, t1, t1 + rng.gen_range(1.5..3.0));
        let b = TransportAssignment::new(1, second, t2, t2 + rng.gen_range(1.5..3.0));
        let bi = compute_bounds(&net, &a, 40.0).unwrap();
        let bj = compute_bounds(&net, &b, 40.0).unwrap();
        for l_min in [0.0, 10.0, 25.0] {
            let got = coordination_min_distance(&net, &bi, &bj, l_min).map_err(|e| e.to_string())?;
            let (lambda, total) = naive_coordination(&net, &bi, &bj, l_min);
            check(got.lambda == lambda && (got.overlap_km - total).abs() < 1e-9, || {
                format!("route pair {case} with l_min {l_min} differs")
            })?;
            lambda_true += lambda as usize;
        }
        agree += 1;
    }
    Ok(format!(
        "100 interval instances equal ({total_pairs} pairs); {agree} route pairs x 3 l_min equal ({lambda_true} positive)"
    ))
}

fn continental() -> Prepared {
    prepare(&ScenarioConfig::continental(1))
}

fn all_pairs_count(p: &Prepared) -> Outcome {
    let feasible = p.features.feasible().len();
    check(feasible == 1000, || format!("{feasible} of 1000 assignments feasible"))?;
    let classifiers = classifiers_for(&p.features);
    let out = run_pipeline(&StagePlan::default(), &classifiers, &p.features).map_err(|e| e.to_string())?;
    check(out.len() == 499_500, || format!("empty plan leaves {} pairs", out.len()))?;
    check(out.stage_log().len() == 1 && out.stage_log()[0].survivors == 499_500, || "stage log".into())?;
    Ok("K = 1000 feasible, empty plan leaves 499500 pairs".into())
}

fn window_law(p: &Prepared) -> Outcome {
    let mut nodes = 0;
    let mut worst: f64 = 0.0;
    for b in &p.routes {
        for a in 0..b.len() {
            let w = window_width(b, a).map_err(|e| e.to_string())?;
            worst = worst.max((w - 0.5).abs());
            nodes += 1;
        }
    }
    check(worst <= 1e-9, || format!("max |width - 0.5 h| = {worst:e}"))?;
    Ok(format!("{nodes} nodes over 1000 assignments, max |width - 0.5 h| = {worst:.1e}"))
}

fn reduction_shape(p: &Prepared) -> Outcome {
    let inputs = RunInputs {
        network: p.scenario.network.clone(),
        assignments: p.scenario.assignments.clone(),
        v_max: p.scenario.v_max(),
        features: FeatureConfig::standard(20.0),
        seed: Some(p.scenario.config.seed),
    };
    let opts = RunOptions { plan: PlanChoice::Greedy { stages: 6 }, verify: VerifyMode::Full, l_min_km: 20.0, seed: 1 };
    let out = report::run(&inputs, &opts).map_err(|e| e.to_string())?;
    let r = &out.report;
    let counts: Vec<usize> = r.stage_log.iter().map(|e| e.survivors).collect();
    check(counts.len() == 7, || format!("expected 6 stages, log is {counts:?}"))?;
    check(counts.windows(2).all(|w| w[0] >= w[1]), || format!("stage counts increase: {counts:?}"))?;
    let factor = r.all_pairs as f64 / r.final_candidates.max(1) as f64;
    check(factor >= 10.0, || format!("reduction only {factor:.1}x"))?;
    check(r.final_candidates >= r.ground_truth, || "final below truth".into())?;

    let mut by_power: Vec<_> = r.classifier_positives.iter().collect();
    by_power.sort_by(|a, b| a.positives.cmp(&b.positives).then_with(|| a.label.cmp(&b.label)));
    let rank = by_power.iter().position(|c| c.label == "c_001").ok_or("c_001 missing")? + 1;
    check(rank + 1 >= by_power.len(), || format!("c_001 ranks {rank} of {} in filtering power", by_power.len()))?;
    let stages: Vec<&str> = r.plan.iter().map(|s| s.as_str()).collect();
    Ok(format!(
        "{} -> {} pairs ({factor:.0}x) via {stages:?}, truth {}; c_001 ranks {rank}/{} by standalone power",
        r.all_pairs,
        r.final_candidates,
        r.ground_truth,
        by_power.len()
    ))
}

fn degeneration() -> Outcome {
    let configs = soundness_scenarios();
    let mut signatures = 0;
    let mut pairs = 0;
    for cfg in &configs {
        let p = prepare(cfg);
        let net = &p.scenario.network;
        for b in &p.routes {
            let sig = orientation_signature(net, b, 100, 0.0).map_err(|e| e.to_string())?;
            let mut cells: Vec<u32> = b
                .edges
                .iter()
                .map(|&e| platoon_cull::features::orientation_cell(net.edge_orientation(e).unwrap(), 100))
                .collect();
            cells.sort_unstable();
            cells.dedup();
            check(sig.retained == cells, || format!("signature differs from cell set (seed {})", cfg.seed))?;
            signatures += 1;
        }
        let min_dist = to_set(ground_truth(net, &p.routes, 0.0).map_err(|e| e.to_string())?.pairs());
        let mut plain = PairSet::new();
        for i in 0..p.routes.len() {
            for j in i + 1..p.routes.len() {
                if coordination(net, &p.routes[i], &p.routes[j]).map_err(|e| e.to_string())?.lambda {
                    plain.insert((i as u32, j as u32));
                }
            }
        }
        check(min_dist == plain, || format!("l_min = 0 truth differs from plain truth (seed {})", cfg.seed))?;
        pairs += plain.len();
    }
    Ok(format!(
        "{} scenarios: {signatures} signatures equal plain cell sets, {pairs} truth pairs identical",
        configs.len()
    ))
}

fn performance(p: &Prepared) -> Outcome {
    let inputs = RunInputs {
        network: p.scenario.network.clone(),
        assignments: p.scenario.assignments.clone(),
        v_max: p.scenario.v_max(),
        features: FeatureConfig::standard(20.0),
        seed: None,
    };
    let rows = report::bench(&inputs, None, 20.0, 7).map_err(|e| e.to_string())?;
    let median = |phase: &str| rows.iter().find(|r| r.phase == phase).map(|r| r.median_ms).unwrap();
    let (both, cull, exact) = (median("features_and_culling"), median("culling"), median("exact_all_pairs"));
    check(both < 1000.0, || format!("features + culling median {both:.1} ms"))?;
    check(exact < 60_000.0, || format!("exact all pairs median {exact:.1} ms"))?;
    check(cull < exact, || format!("culling median {cull:.2} ms not below exact median {exact:.2} ms"))?;
    Ok(format!(
        "K = 1000: features+culling {both:.1} ms, culling {cull:.1} ms, exact all pairs {exact:.1} ms (medians of 7)"
    ))
}

fn write_everything(dir: &Path) -> Result<(), String> {
    let cfg = ScenarioConfig { k: 300, ..grid_config(99, 300) };
    let sc = Scenario::<f64>::generate(&cfg).map_err(|e| e.to_string())?;
    sc.save(dir).map_err(|e| e.to_string())?;
    let inputs = RunInputs {
        network: sc.network.clone(),
        assignments: sc.assignments.clone(),
        v_max: sc.v_max(),
        features: FeatureConfig::standard(cfg.l_min_km),
        seed: Some(cfg.seed),
    };
    let opts = RunOptions {
        plan: PlanChoice::Greedy { stages: 6 },
        verify: VerifyMode::Sample(2000),
        l_min_km: cfg.l_min_km,
        seed: cfg.seed,
    };
    report::run(&inputs, &opts).map_err(|e| e.to_string())?.write(dir).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_everything(a.path())?;
    write_everything(b.path())?;
    let files = ["network.json", "assignments.json", "report.json", "positives.csv", "stage_log.csv", "truth.csv"];
    for f in files {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        check(x == y, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", files.len()))
}

fn main() {
    let started = Instant::now();
    let p = continental();
    let criteria: Vec<Criterion> = vec![
        ("soundness", Box::new(soundness)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("all-pairs count", Box::new(|| all_pairs_count(&p))),
        ("window-width law", Box::new(|| window_law(&p))),
        ("reduction shape", Box::new(|| reduction_shape(&p))),
        ("minimum-distance degeneration", Box::new(degeneration)),
        ("performance sanity", Box::new(|| performance(&p))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or(e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1} s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{secs:.1} s]", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
