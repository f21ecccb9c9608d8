//! End-to-end runs: bounds, features, culling, exact verification, and the
//! CSV/JSON files describing them.
//!
//! Everything written by [`RunOutcome::write`] except `timings.csv` is a
//! pure function of the inputs.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignments::{compute_bounds, BoundedRoute, TransportAssignment};
use crate::culling::{
    classifiers_for, greedy_order_from, run_pipeline, run_precomputed, standalone_positives, CandidateSet, Pair,
    StageEntry, StagePlan,
};
use crate::error::{Error, Result};
use crate::exact_match::{ExactMatcher, PairVerdict};
use crate::features::{extract_all, FeatureConfig, FeatureSet};
use crate::road_network::{CoordinateMode, RoadNetwork};
use crate::scalar::Scalar;
use crate::scenario::write_file;

/// Default number of culled pairs re-checked by the exact test.
pub const DEFAULT_VERIFY_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum PlanChoice {
    /// Greedy order over all configured classifiers, cut to `stages`.
    Greedy {
        stages: usize,
    },
    Fixed(StagePlan),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    /// Only survivors are checked (which always happens).
    Survivors,
    /// Also re-check up to this many culled pairs.
    Sample(usize),
    /// Also compute the exact answer over all pairs.
    Full,
}

impl VerifyMode {
    fn name(self) -> &'static str {
        match self {
            VerifyMode::Survivors => "survivors",
            VerifyMode::Sample(_) => "sample",
            VerifyMode::Full => "full",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub plan: PlanChoice,
    pub verify: VerifyMode,
    /// Minimum shared distance for the exact test.
    pub l_min_km: f64,
    /// Seed of the culled-pair sample.
    pub seed: u64,
}

/// Problem instance for a run.
#[derive(Debug, Clone)]
pub struct RunInputs<T> {
    pub network: RoadNetwork<T>,
    pub assignments: Vec<TransportAssignment<T>>,
    pub v_max: T,
    pub features: FeatureConfig,
    /// Scenario seed, when the instance was generated.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub nodes: usize,
    pub edges: usize,
    pub coordinate_mode: CoordinateMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierCount {
    pub label: String,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: Option<u64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub feasible: usize,
    pub network: NetworkSummary,
    pub l_min_km: f64,
    pub all_pairs: usize,
    /// Positives of each classifier on its own.
    pub classifier_positives: Vec<ClassifierCount>,
    pub plan: Vec<String>,
    pub stage_log: Vec<StageEntry>,
    pub final_candidates: usize,
    pub ground_truth: usize,
    pub false_positives: usize,
    pub verification: String,
    pub culled_pairs_checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTiming {
    pub phase: String,
    pub ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub report: RunReport,
    pub candidates: CandidateSet,
    pub truth: Vec<PairVerdict<T>>,
    pub timings: Vec<PhaseTiming>,
}

fn timed<R>(timings: &mut Vec<PhaseTiming>, phase: &str, f: impl FnOnce() -> R) -> R {
    let start = Instant::now();
    let out = f();
    timings.push(PhaseTiming { phase: phase.into(), ms: start.elapsed().as_secs_f64() * 1e3 });
    out
}

pub fn bound_all<T: Scalar>(
    net: &RoadNetwork<T>,
    list: &[TransportAssignment<T>],
    v_max: T,
) -> Result<Vec<BoundedRoute<T>>> {
    for (k, a) in list.iter().enumerate() {
        if a.id != k {
            return Err(Error::InvalidAssignment {
                id: a.id,
                reason: format!("found at position {k}; ids must be 0..K"),
            });
        }
    }
    list.par_iter().map(|a| compute_bounds(net, a, v_max)).collect()
}

fn check_orientation_budget(features: &FeatureConfig, l_min_km: f64) -> Result<()> {
    match features.orientation {
        Some(o) if o.l_min_km > l_min_km => Err(Error::InvalidParameter(format!(
            "orientation exclusion uses l_min {} km but the exact test uses {} km; culling would be unsound",
            o.l_min_km, l_min_km
        ))),
        _ => Ok(()),
    }
}

/// Runs the whole pipeline on `inputs`.
///
/// Fails with [`Error::SoundnessViolation`] if any checked pair that was
/// culled turns out to platoon.
pub fn run<T: Scalar>(inputs: &RunInputs<T>, opts: &RunOptions) -> Result<RunOutcome<T>> {
    if !(opts.l_min_km >= 0.0) {
        return Err(Error::InvalidParameter("l_min must be non-negative".into()));
    }
    check_orientation_budget(&inputs.features, opts.l_min_km)?;
    let net = &inputs.network;
    let mut timings = Vec::new();

    let routes = timed(&mut timings, "bounds", || bound_all(net, &inputs.assignments, inputs.v_max))?;
    let fs = timed(&mut timings, "features", || extract_all(net, &routes, &inputs.features, inputs.v_max))?;
    let feasible = fs.feasible();
    let classifiers = classifiers_for(&fs);
    let positives = timed(&mut timings, "classifiers", || standalone_positives(&classifiers, &fs))?;

    let plan = match &opts.plan {
        PlanChoice::Greedy { stages } => {
            timed(&mut timings, "greedy_order", || greedy_order_from(&feasible, &positives))?.truncated(*stages)
        }
        PlanChoice::Fixed(plan) => plan.clone(),
    };
    let candidates = timed(&mut timings, "pipeline", || run_precomputed(&plan, &feasible, &positives))?;

    let matcher = ExactMatcher::new(net, &routes, T::of(opts.l_min_km))?;
    let truth = timed(&mut timings, "exact_survivors", || matcher.filter_pairs(candidates.pairs()));

    let mut checked = 0;
    match opts.verify {
        VerifyMode::Survivors => {}
        VerifyMode::Sample(n) => {
            let sample = timed(&mut timings, "verify_sample", || sample_culled(&feasible, &candidates, n, opts.seed));
            checked = sample.len();
            if let Some(v) =
                sample.par_iter().map(|&(i, j)| matcher.evaluate(i as usize, j as usize)).find_first(|v| v.lambda)
            {
                return Err(Error::SoundnessViolation { i: v.pair.0, j: v.pair.1 });
            }
        }
        VerifyMode::Full => {
            let full = timed(&mut timings, "exact_all_pairs", || matcher.all_pairs());
            checked = CandidateSet::all_pairs(&feasible).len() - candidates.len();
            if let Some(v) = full.iter().find(|v| !candidates.contains(v.pair.0 as u32, v.pair.1 as u32)) {
                return Err(Error::SoundnessViolation { i: v.pair.0, j: v.pair.1 });
            }
        }
    }

    let report = RunReport {
        seed: inputs.seed,
        k: inputs.assignments.len(),
        feasible: feasible.len(),
        network: NetworkSummary { nodes: net.node_count(), edges: net.edge_count(), coordinate_mode: net.mode() },
        l_min_km: opts.l_min_km,
        all_pairs: feasible.len() * feasible.len().saturating_sub(1) / 2,
        classifier_positives: positives
            .iter()
            .map(|(label, set)| ClassifierCount { label: label.clone(), positives: set.len() })
            .collect(),
        plan: plan.stages.clone(),
        stage_log: candidates.stage_log().to_vec(),
        final_candidates: candidates.len(),
        ground_truth: truth.len(),
        false_positives: candidates.len() - truth.len(),
        verification: opts.verify.name().into(),
        culled_pairs_checked: checked,
    };
    Ok(RunOutcome { report, candidates, truth, timings })
}

/// Up to `n` distinct culled pairs, drawn with a seeded generator; all of
/// them when there are at most `n`.
fn sample_culled(feasible: &[u32], candidates: &CandidateSet, n: usize, seed: u64) -> Vec<Pair> {
    let all = feasible.len() * feasible.len().saturating_sub(1) / 2;
    let culled = all - candidates.len();
    if culled <= n {
        return CandidateSet::all_pairs(feasible).difference(candidates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < n {
        let a = feasible[rng.gen_range(0..feasible.len())];
        let b = feasible[rng.gen_range(0..feasible.len())];
        if a == b {
            continue;
        }
        let p = (a.min(b), a.max(b));
        if !candidates.contains(p.0, p.1) {
            picked.insert(p);
        }
    }
    picked.into_iter().collect()
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fixed6(v: f64) -> String {
    format!("{v:.6}")
}

/// `i,j,overlap_km` rows sorted by pair.
pub fn truth_csv<T: Scalar>(verdicts: &[PairVerdict<T>]) -> Result<String> {
    let mut rows: Vec<&PairVerdict<T>> = verdicts.iter().collect();
    rows.sort_by_key(|v| v.pair);
    csv_string(
        &["i", "j", "overlap_km"],
        rows.into_iter().map(|v| vec![v.pair.0.to_string(), v.pair.1.to_string(), fixed6(v.overlap_km.as_f64())]),
    )
}

pub fn stage_log_csv(log: &[StageEntry]) -> Result<String> {
    csv_string(
        &["stage", "label", "survivors"],
        log.iter().enumerate().map(|(k, e)| vec![k.to_string(), e.label.clone(), e.survivors.to_string()]),
    )
}

pub fn positives_csv(counts: &[ClassifierCount]) -> Result<String> {
    csv_string(&["label", "positives"], counts.iter().map(|c| vec![c.label.clone(), c.positives.to_string()]))
}

pub fn timings_csv(timings: &[PhaseTiming]) -> Result<String> {
    csv_string(&["phase", "ms"], timings.iter().map(|t| vec![t.phase.clone(), fixed6(t.ms)]))
}

impl<T: Scalar> RunOutcome<T> {
    /// Writes `report.json`, `positives.csv`, `stage_log.csv`, `truth.csv`
    /// and `timings.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(&self.report)?;
        write_file(&dir.join("report.json"), &json)?;
        write_file(&dir.join("positives.csv"), &positives_csv(&self.report.classifier_positives)?)?;
        write_file(&dir.join("stage_log.csv"), &stage_log_csv(&self.report.stage_log)?)?;
        write_file(&dir.join("truth.csv"), &truth_csv(&self.truth)?)?;
        write_file(&dir.join("timings.csv"), &timings_csv(&self.timings)?)?;
        Ok(())
    }
}

/// Exact answer over every feasible pair.
pub fn truth<T: Scalar>(inputs: &RunInputs<T>, l_min_km: f64) -> Result<Vec<PairVerdict<T>>> {
    let routes = bound_all(&inputs.network, &inputs.assignments, inputs.v_max)?;
    Ok(ExactMatcher::new(&inputs.network, &routes, T::of(l_min_km))?.all_pairs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub phase: String,
    pub reps: usize,
    pub median_ms: f64,
    pub min_ms: f64,
}

fn summarize(phase: &str, mut samples: Vec<f64>) -> BenchRow {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    let median = if n % 2 == 1 { samples[n / 2] } else { (samples[n / 2 - 1] + samples[n / 2]) / 2.0 };
    BenchRow { phase: phase.into(), reps: n, median_ms: median, min_ms: samples[0] }
}

fn sample_ms<R>(reps: usize, mut f: impl FnMut() -> Result<R>) -> Result<(Vec<f64>, R)> {
    let mut times = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps {
        let start = Instant::now();
        let out = std::hint::black_box(f()?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
        last = Some(out);
    }
    Ok((times, last.expect("at least one repetition")))
}

/// Times each phase `reps` times. The plan is fixed before timing starts
/// (greedy order over the configured classifiers when `plan` is `None`).
///
/// Phases: `bounds`, `features`, `culling` (running the plan),
/// `features_and_culling`, `exact_survivors` and `exact_all_pairs`.
pub fn bench<T: Scalar>(
    inputs: &RunInputs<T>,
    plan: Option<&StagePlan>,
    l_min_km: f64,
    reps: usize,
) -> Result<Vec<BenchRow>> {
    if reps == 0 {
        return Err(Error::InvalidParameter("bench needs at least one repetition".into()));
    }
    check_orientation_budget(&inputs.features, l_min_km)?;
    let net = &inputs.network;
    let (t_bounds, routes) = sample_ms(reps, || bound_all(net, &inputs.assignments, inputs.v_max))?;
    let (t_features, fs) = sample_ms(reps, || extract_all(net, &routes, &inputs.features, inputs.v_max))?;
    let classifiers = classifiers_for(&fs);
    let plan = match plan {
        Some(p) => p.clone(),
        None => greedy_order_from(&fs.feasible(), &standalone_positives(&classifiers, &fs)?)?,
    };
    let cull = |fs: &FeatureSet<T>| run_pipeline(&plan, &classifiers, fs);
    let (t_cull, candidates) = sample_ms(reps, || cull(&fs))?;
    let (t_both, _) = sample_ms(reps, || {
        let fs = extract_all(net, &routes, &inputs.features, inputs.v_max)?;
        cull(&fs)
    })?;
    let matcher = ExactMatcher::new(net, &routes, T::of(l_min_km))?;
    let (t_survivors, _) = sample_ms(reps, || Ok(matcher.filter_pairs(candidates.pairs())))?;
    let (t_all, _) = sample_ms(reps, || Ok(matcher.all_pairs()))?;

    Ok(vec![
        summarize("bounds", t_bounds),
        summarize("features", t_features),
        summarize("culling", t_cull),
        summarize("features_and_culling", t_both),
        summarize("exact_survivors", t_survivors),
        summarize("exact_all_pairs", t_all),
    ])
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    csv_string(
        &["phase", "reps", "median_ms", "min_ms"],
        rows.iter().map(|r| vec![r.phase.clone(), r.reps.to_string(), fixed6(r.median_ms), fixed6(r.min_ms)]),
    )
}
