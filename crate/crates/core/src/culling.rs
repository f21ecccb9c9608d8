//! Broad phase: set-wide classifiers and their sound composition.
//!
//! Every classifier here is *required*: a negative verdict proves the pair
//! cannot platoon. Intersecting the positive sets of required classifiers
//! (an AND) is again required, and so is the union over a required set (an
//! OR). A pipeline starts from all feasible pairs and intersects stage by
//! stage, so its output always contains the exact answer.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, IntervalFeature, OrientationSignature, ORIENTATION_LABEL};
use crate::scalar::Scalar;

/// Unordered assignment pair stored as `(lower index, higher index)`.
pub type Pair = (u32, u32);

/// Label of the initial all-pairs entry of a stage log.
pub const ALL_PAIRS_LABEL: &str = "none";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub label: String,
    pub survivors: usize,
}

/// Sorted, duplicate-free set of candidate pairs with the log of stages that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidateSet {
    pairs: Vec<Pair>,
    stage_log: Vec<StageEntry>,
}

impl CandidateSet {
    /// Normalizes, sorts and deduplicates `pairs`. Pairs `(i, i)` are dropped.
    pub fn from_pairs(mut pairs: Vec<Pair>) -> Self {
        for p in pairs.iter_mut() {
            if p.0 > p.1 {
                *p = (p.1, p.0);
            }
        }
        pairs.retain(|p| p.0 != p.1);
        pairs.par_sort_unstable();
        pairs.dedup();
        CandidateSet { pairs, stage_log: Vec::new() }
    }

    fn from_sorted(pairs: Vec<Pair>) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        CandidateSet { pairs, stage_log: Vec::new() }
    }

    /// Every pair of `feasible` (which must be sorted ascending).
    pub fn all_pairs(feasible: &[u32]) -> Self {
        let mut pairs = Vec::with_capacity(feasible.len() * feasible.len().saturating_sub(1) / 2);
        for (k, &i) in feasible.iter().enumerate() {
            pairs.extend(feasible[k + 1..].iter().map(|&j| (i, j)));
        }
        let mut set = Self::from_sorted(pairs);
        set.stage_log.push(StageEntry { label: ALL_PAIRS_LABEL.into(), survivors: set.len() });
        set
    }

    /// Empty set whose log holds the all-pairs entry, for a pipeline whose
    /// first stage supplies the pairs.
    fn start(feasible: &[u32]) -> Self {
        let survivors = all_pairs_count(feasible);
        CandidateSet { pairs: Vec::new(), stage_log: vec![StageEntry { label: ALL_PAIRS_LABEL.into(), survivors }] }
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn into_pairs(self) -> Vec<Pair> {
        self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn stage_log(&self) -> &[StageEntry] {
        &self.stage_log
    }

    pub fn contains(&self, i: u32, j: u32) -> bool {
        let p = if i <= j { (i, j) } else { (j, i) };
        self.pairs.binary_search(&p).is_ok()
    }

    pub fn intersection(&self, other: &CandidateSet) -> CandidateSet {
        let (a, b) = (&self.pairs, &other.pairs);
        let mut out = Vec::with_capacity(a.len().min(b.len()));
        let (mut p, mut q) = (0, 0);
        while p < a.len() && q < b.len() {
            match a[p].cmp(&b[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[p]);
                    p += 1;
                    q += 1;
                }
            }
        }
        CandidateSet::from_sorted(out)
    }

    /// Size of the intersection without materializing it.
    pub fn intersection_len(&self, other: &CandidateSet) -> usize {
        let (a, b) = (&self.pairs, &other.pairs);
        let (mut p, mut q, mut n) = (0, 0, 0);
        while p < a.len() && q < b.len() {
            match a[p].cmp(&b[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    p += 1;
                    q += 1;
                }
            }
        }
        n
    }

    pub fn union(&self, other: &CandidateSet) -> CandidateSet {
        let mut pairs = Vec::with_capacity(self.len() + other.len());
        pairs.extend_from_slice(&self.pairs);
        pairs.extend_from_slice(&other.pairs);
        CandidateSet::from_pairs(pairs)
    }

    /// Pairs of `self` missing from `other`.
    pub fn difference(&self, other: &CandidateSet) -> Vec<Pair> {
        self.pairs.iter().copied().filter(|&(i, j)| !other.contains(i, j)).collect()
    }

    pub fn is_superset_of(&self, other: &CandidateSet) -> bool {
        other.pairs.iter().all(|&(i, j)| self.contains(i, j))
    }

    /// Replaces the pairs, keeping the log, and records a stage.
    fn advance(&self, label: &str, pairs: CandidateSet) -> CandidateSet {
        let mut stage_log = self.stage_log.clone();
        stage_log.push(StageEntry { label: label.into(), survivors: pairs.len() });
        CandidateSet { pairs: pairs.pairs, stage_log }
    }
}

/// All overlapping pairs among closed intervals, by sorting endpoints and
/// sweeping with an active set.
///
/// At equal coordinates lower endpoints are visited first, so intervals that
/// merely touch are reported.
pub fn sweep_and_prune<T: Scalar>(items: &[(u32, IntervalFeature<T>)]) -> Vec<Pair> {
    let mut endpoints: Vec<(T, bool, u32)> = Vec::with_capacity(items.len() * 2);
    for (slot, &(_, iv)) in items.iter().enumerate() {
        endpoints.push((iv.lo, false, slot as u32));
        endpoints.push((iv.hi, true, slot as u32));
    }
    // (value, is_upper): false < true puts lower endpoints first at ties.
    endpoints.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0).expect("finite interval endpoints").then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });

    let mut active: Vec<u32> = Vec::new();
    let mut position = vec![usize::MAX; items.len()];
    let mut pairs = Vec::new();
    for (_, is_upper, slot) in endpoints {
        let s = slot as usize;
        if is_upper {
            let at = position[s];
            let last = *active.last().expect("interval opened before closing");
            active.swap_remove(at);
            if last != slot {
                position[last as usize] = at;
            }
        } else {
            let id = items[s].0;
            pairs.extend(active.iter().map(|&o| {
                let other = items[o as usize].0;
                if other < id {
                    (other, id)
                } else {
                    (id, other)
                }
            }));
            position[s] = active.len();
            active.push(slot);
        }
    }
    sort_pairs(pairs, items.iter().map(|&(id, _)| id as usize + 1).max().unwrap_or(0))
}

/// Sorts pairs whose indices are below `bound` with two stable counting
/// passes (second index, then first).
fn sort_pairs(pairs: Vec<Pair>, bound: usize) -> Vec<Pair> {
    let by_second = counting_pass(pairs, bound, |p| p.1);
    counting_pass(by_second, bound, |p| p.0)
}

fn counting_pass(pairs: Vec<Pair>, bound: usize, key: impl Fn(&Pair) -> u32) -> Vec<Pair> {
    let mut next = vec![0usize; bound + 1];
    for p in &pairs {
        next[key(p) as usize + 1] += 1;
    }
    for k in 0..bound {
        next[k + 1] += next[k];
    }
    let mut out = vec![(0, 0); pairs.len()];
    for p in pairs {
        let slot = &mut next[key(&p) as usize];
        out[*slot] = p;
        *slot += 1;
    }
    out
}

/// Pairs whose interval features overlap; `None` marks an infeasible assignment.
pub fn interval_positives<T: Scalar>(intervals: &[Option<IntervalFeature<T>>]) -> CandidateSet {
    let items: Vec<(u32, IntervalFeature<T>)> =
        intervals.iter().enumerate().filter_map(|(k, iv)| iv.map(|iv| (k as u32, iv))).collect();
    CandidateSet::from_sorted(sweep_and_prune(&items))
}

/// Pairs whose retained orientation cells intersect, via a cell → assignment index.
pub fn signature_positives<T: Scalar>(signatures: &[Option<&OrientationSignature<T>>]) -> Result<CandidateSet> {
    let mut present = signatures.iter().flatten();
    let Some(first) = present.next() else {
        return Ok(CandidateSet::default());
    };
    for s in present {
        if s.cells != first.cells || s.l_min != first.l_min {
            return Err(Error::MismatchedSignature(format!(
                "{} cells / l_min {} vs {} cells / l_min {}",
                first.cells, first.l_min, s.cells, s.l_min
            )));
        }
    }

    let mut index: Vec<Vec<u32>> = vec![Vec::new(); first.cells as usize];
    for (k, sig) in signatures.iter().enumerate() {
        if let Some(sig) = sig {
            for &c in &sig.retained {
                index[c as usize].push(k as u32);
            }
        }
    }

    let mut stamp = vec![u32::MAX; signatures.len()];
    let mut pairs = Vec::new();
    let mut partners = Vec::new();
    for (i, sig) in signatures.iter().enumerate() {
        let Some(sig) = sig else { continue };
        partners.clear();
        for &c in &sig.retained {
            let list = &index[c as usize];
            let start = list.partition_point(|&j| j <= i as u32);
            for &j in &list[start..] {
                if stamp[j as usize] != i as u32 {
                    stamp[j as usize] = i as u32;
                    partners.push(j);
                }
            }
        }
        partners.sort_unstable();
        pairs.extend(partners.iter().map(|&j| (i as u32, j)));
    }
    Ok(CandidateSet::from_sorted(pairs))
}

/// Pairs whose signatures both retain `cell`.
fn cell_positives<T: Scalar>(signatures: &[Option<&OrientationSignature<T>>], cell: u32) -> CandidateSet {
    let members: Vec<u32> = signatures
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_some_and(|s| s.contains(cell)))
        .map(|(k, _)| k as u32)
        .collect();
    let mut set = CandidateSet::all_pairs(&members);
    set.stage_log.clear();
    set
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierKind {
    /// Overlap of the projection interval with the given feature index.
    Interval(usize),
    /// Intersection of retained orientation cells.
    Orientation,
    /// Both assignments retain this orientation cell.
    Cell(u32),
    /// Positive when any member is positive.
    AnyOf(Vec<Classifier>),
    /// Positive for every feasible pair.
    Always,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub label: String,
    pub kind: ClassifierKind,
}

impl Classifier {
    pub fn interval(label: impl Into<String>, feature: usize) -> Self {
        Classifier { label: label.into(), kind: ClassifierKind::Interval(feature) }
    }

    pub fn orientation() -> Self {
        Classifier { label: ORIENTATION_LABEL.into(), kind: ClassifierKind::Orientation }
    }

    pub fn cell(cell: u32) -> Self {
        Classifier { label: format!("cell_{cell}"), kind: ClassifierKind::Cell(cell) }
    }

    pub fn always() -> Self {
        Classifier { label: "always".into(), kind: ClassifierKind::Always }
    }

    /// Every feasible pair this classifier does not rule out.
    pub fn positives<T: Scalar>(&self, fs: &FeatureSet<T>) -> Result<CandidateSet> {
        match &self.kind {
            ClassifierKind::Interval(k) => {
                self.check_interval(fs, *k)?;
                Ok(interval_positives(&fs.intervals(*k)))
            }
            ClassifierKind::Orientation => signature_positives(&self.signatures(fs)?),
            ClassifierKind::Cell(c) => Ok(cell_positives(&self.signatures(fs)?, *c)),
            ClassifierKind::AnyOf(members) => {
                let sets = members.par_iter().map(|c| c.positives(fs)).collect::<Result<Vec<_>>>()?;
                let pairs = sets.into_iter().flat_map(|s| s.pairs).collect();
                Ok(CandidateSet::from_pairs(pairs))
            }
            ClassifierKind::Always => {
                let mut set = CandidateSet::all_pairs(&fs.feasible());
                set.stage_log.clear();
                Ok(set)
            }
        }
    }

    /// Verdict for a single pair. Pairs with an infeasible member are negative.
    pub fn test_pair<T: Scalar>(&self, fs: &FeatureSet<T>, i: u32, j: u32) -> bool {
        let (Some(Some(a)), Some(Some(b))) = (fs.vectors.get(i as usize), fs.vectors.get(j as usize)) else {
            return false;
        };
        if i == j {
            return false;
        }
        match &self.kind {
            ClassifierKind::Interval(k) => match (a.intervals.get(*k), b.intervals.get(*k)) {
                (Some(x), Some(y)) => x.overlaps(y),
                _ => false,
            },
            ClassifierKind::Orientation => match (&a.orientation, &b.orientation) {
                (Some(x), Some(y)) => x.intersects(y),
                _ => false,
            },
            ClassifierKind::Cell(c) => match (&a.orientation, &b.orientation) {
                (Some(x), Some(y)) => x.contains(*c) && y.contains(*c),
                _ => false,
            },
            ClassifierKind::AnyOf(members) => members.iter().any(|c| c.test_pair(fs, i, j)),
            ClassifierKind::Always => true,
        }
    }

    fn check_interval<T>(&self, fs: &FeatureSet<T>, k: usize) -> Result<()> {
        if k >= fs.projections.len() {
            return Err(Error::IndexOutOfRange { index: k, len: fs.projections.len() });
        }
        Ok(())
    }

    fn signatures<'a, T: Scalar>(&self, fs: &'a FeatureSet<T>) -> Result<Vec<Option<&'a OrientationSignature<T>>>> {
        if fs.orientation.is_none() {
            return Err(Error::UnknownLabel(self.label.clone()));
        }
        Ok(fs.signatures())
    }
}

/// One classifier per configured feature: projections in order, then orientation.
pub fn classifiers_for<T: Scalar>(fs: &FeatureSet<T>) -> Vec<Classifier> {
    let mut out: Vec<Classifier> =
        fs.projections.iter().enumerate().map(|(k, p)| Classifier::interval(p.label.clone(), k)).collect();
    if fs.orientation.is_some() {
        out.push(Classifier::orientation());
    }
    out
}

/// The per-cell orientation classifiers `0..m`, which are required only jointly.
pub fn cell_classifiers(m: u32) -> Vec<Classifier> {
    (0..m).map(Classifier::cell).collect()
}

/// OR of a required set of classifiers, which is itself a required classifier.
pub fn or_compose(cs: Vec<Classifier>) -> Result<Classifier> {
    match cs.len() {
        0 => Err(Error::EmptyClassifierList),
        1 => Ok(cs.into_iter().next().expect("one element")),
        _ => {
            let label = format!("or({})", cs.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join("|"));
            Ok(Classifier { label, kind: ClassifierKind::AnyOf(cs) })
        }
    }
}

/// Survivor count below which a stage tests surviving pairs one by one
/// instead of computing the classifier's full positive set.
///
/// The default is the all-pairs count `K(K-1)/2`: a stage facing every pair
/// runs a sweep, and once anything has been culled the survivors are tested
/// directly. Pass `0` to always sweep.
pub fn default_pairwise_threshold(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Intersects `current` with the positives of `c` and logs the stage.
pub fn apply_stage<T: Scalar>(
    current: &CandidateSet,
    c: &Classifier,
    fs: &FeatureSet<T>,
    pairwise_threshold: usize,
) -> Result<CandidateSet> {
    let kept = if current.len() < pairwise_threshold {
        let pairs: Vec<Pair> = current.pairs.par_iter().copied().filter(|&(i, j)| c.test_pair(fs, i, j)).collect();
        CandidateSet::from_sorted(pairs)
    } else {
        current.intersection(&c.positives(fs)?)
    };
    Ok(current.advance(&c.label, kept))
}

/// Same as [`apply_stage`] with the classifier's positives already computed.
pub fn apply_positives(current: &CandidateSet, label: &str, positives: &CandidateSet) -> CandidateSet {
    current.advance(label, current.intersection(positives))
}

/// Ordered list of classifier labels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<String>,
}

impl StagePlan {
    pub fn new(stages: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        if let Some(dup) = stages.iter().find(|s| !seen.insert(s.as_str())) {
            return Err(Error::DuplicateStage(dup.clone()));
        }
        Ok(StagePlan { stages })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: StagePlan = serde_json::from_str(text)?;
        Self::new(raw.stages)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// First `n` stages.
    pub fn truncated(&self, n: usize) -> StagePlan {
        StagePlan { stages: self.stages.iter().take(n).cloned().collect() }
    }
}

fn resolve<'a>(classifiers: &'a [Classifier], label: &str) -> Result<&'a Classifier> {
    classifiers.iter().find(|c| c.label == label).ok_or_else(|| Error::UnknownLabel(label.into()))
}

/// Starts from all feasible pairs and applies the plan's stages in order.
pub fn run_pipeline<T: Scalar>(
    plan: &StagePlan,
    classifiers: &[Classifier],
    fs: &FeatureSet<T>,
) -> Result<CandidateSet> {
    run_pipeline_with_threshold(plan, classifiers, fs, default_pairwise_threshold(fs.feasible().len()))
}

pub fn run_pipeline_with_threshold<T: Scalar>(
    plan: &StagePlan,
    classifiers: &[Classifier],
    fs: &FeatureSet<T>,
    pairwise_threshold: usize,
) -> Result<CandidateSet> {
    let stages = plan.stages.iter().map(|l| resolve(classifiers, l)).collect::<Result<Vec<_>>>()?;
    let feasible = fs.feasible();
    let Some((first, rest)) = stages.split_first() else {
        return Ok(CandidateSet::all_pairs(&feasible));
    };
    let mut current = if all_pairs_count(&feasible) < pairwise_threshold {
        apply_stage(&CandidateSet::all_pairs(&feasible), first, fs, pairwise_threshold)?
    } else {
        // Positive sets only hold feasible pairs, so the first stage keeps all of them.
        CandidateSet::start(&feasible).advance(&first.label, first.positives(fs)?)
    };
    for c in rest {
        current = apply_stage(&current, c, fs, pairwise_threshold)?;
    }
    Ok(current)
}

fn all_pairs_count(feasible: &[u32]) -> usize {
    feasible.len() * feasible.len().saturating_sub(1) / 2
}

/// Positive set of each classifier, evaluated in parallel.
pub fn standalone_positives<T: Scalar>(
    classifiers: &[Classifier],
    fs: &FeatureSet<T>,
) -> Result<Vec<(String, CandidateSet)>> {
    classifiers.par_iter().map(|c| Ok((c.label.clone(), c.positives(fs)?))).collect()
}

/// Runs a plan by intersecting precomputed positive sets.
pub fn run_precomputed(
    plan: &StagePlan,
    feasible: &[u32],
    positives: &[(String, CandidateSet)],
) -> Result<CandidateSet> {
    let mut current: Option<CandidateSet> = None;
    for label in &plan.stages {
        let (_, set) = positives.iter().find(|(l, _)| l == label).ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        current = Some(match current {
            None => CandidateSet::start(feasible).advance(label, set.clone()),
            Some(cur) => apply_positives(&cur, label, set),
        });
    }
    Ok(current.unwrap_or_else(|| CandidateSet::all_pairs(feasible)))
}

/// Orders all classifiers so that each stage removes as many remaining pairs
/// as possible; ties go to the lexicographically smaller label.
pub fn greedy_order<T: Scalar>(classifiers: &[Classifier], fs: &FeatureSet<T>) -> Result<StagePlan> {
    let positives = standalone_positives(classifiers, fs)?;
    greedy_order_from(&fs.feasible(), &positives)
}

pub fn greedy_order_from(feasible: &[u32], positives: &[(String, CandidateSet)]) -> Result<StagePlan> {
    let mut current = CandidateSet::all_pairs(feasible);
    let mut remaining: Vec<usize> = (0..positives.len()).collect();
    let mut stages = Vec::with_capacity(positives.len());
    while !remaining.is_empty() {
        let scored: Vec<(usize, usize)> =
            remaining.par_iter().map(|&k| (current.intersection_len(&positives[k].1), k)).collect();
        let &(_, best) = scored
            .iter()
            .min_by(|a, b| a.0.cmp(&b.0).then_with(|| positives[a.1].0.cmp(&positives[b.1].0)))
            .expect("non-empty");
        current = apply_positives(&current, &positives[best].0, &positives[best].1);
        stages.push(positives[best].0.clone());
        remaining.retain(|&k| k != best);
    }
    StagePlan::new(stages)
}
