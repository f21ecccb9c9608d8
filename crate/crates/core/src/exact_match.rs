//! Narrow phase: the exact coordination test between two bounded routes.
//!
//! A pair can platoon when both routes traverse a common directed edge and
//! their arrival windows intersect at both endpoints of that edge. With a
//! minimum distance `l_min`, the matched edges must add up to at least
//! `l_min` kilometres. Windows are closed intervals, so touching endpoints
//! count as overlapping.

use rayon::prelude::*;

use crate::assignments::BoundedRoute;
use crate::culling::{CandidateSet, Pair};
use crate::error::{Error, Result};
use crate::road_network::{EdgeId, RoadNetwork};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict<T> {
    /// Assignment indices, ordered so that `pair.0 <= pair.1`.
    pub pair: (usize, usize),
    pub lambda: bool,
    /// Total length of the matched edges, counted once per matched index pair.
    pub overlap_km: T,
}

/// Route edges sorted by edge id, with the hop index each occurs at.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    entries: Vec<(EdgeId, u32)>,
}

impl EdgeIndex {
    pub fn new<T: Scalar>(route: &BoundedRoute<T>) -> Self {
        let mut entries: Vec<(EdgeId, u32)> = route.edges.iter().enumerate().map(|(a, &e)| (e, a as u32)).collect();
        entries.sort_unstable();
        EdgeIndex { entries }
    }
}

#[inline]
fn windows_meet<T: Scalar>(bi: &BoundedRoute<T>, a: usize, bj: &BoundedRoute<T>, b: usize) -> bool {
    let (lo_i, hi_i) = bi.window(a);
    let (lo_j, hi_j) = bj.window(b);
    lo_i <= hi_j && lo_j <= hi_i
}

/// Collects the lengths of every matched index pair `(a, b)` by joining the
/// two routes on directed edge id.
fn matched_lengths<T: Scalar>(
    net: &RoadNetwork<T>,
    bi: &BoundedRoute<T>,
    ii: &EdgeIndex,
    bj: &BoundedRoute<T>,
    ij: &EdgeIndex,
) -> Result<Vec<T>> {
    let (x, y) = (&ii.entries, &ij.entries);
    let mut out = Vec::new();
    let (mut p, mut q) = (0, 0);
    while p < x.len() && q < y.len() {
        let (ex, ey) = (x[p].0, y[q].0);
        if ex < ey {
            p += 1;
        } else if ey < ex {
            q += 1;
        } else {
            let p_end = p + x[p..].iter().take_while(|r| r.0 == ex).count();
            let q_end = q + y[q..].iter().take_while(|r| r.0 == ex).count();
            let len = net.edge_length(ex)?;
            for &(_, a) in &x[p..p_end] {
                for &(_, b) in &y[q..q_end] {
                    let (a, b) = (a as usize, b as usize);
                    if windows_meet(bi, a, bj, b) && windows_meet(bi, a + 1, bj, b + 1) {
                        out.push(len);
                    }
                }
            }
            p = p_end;
            q = q_end;
        }
    }
    Ok(out)
}

/// Sums lengths in ascending order so the result does not depend on which
/// route was passed first.
pub(crate) fn ordered_sum<T: Scalar>(mut lengths: Vec<T>) -> T {
    lengths.sort_by(|a, b| a.partial_cmp(b).expect("finite lengths"));
    lengths.into_iter().fold(T::zero(), |acc, l| acc + l)
}

fn check_route<T: Scalar>(net: &RoadNetwork<T>, b: &BoundedRoute<T>) -> Result<()> {
    for (k, &e) in b.edges.iter().enumerate() {
        let (tail, head) = net.endpoints(e)?;
        if b.nodes.get(k) != Some(&tail) || b.nodes.get(k + 1) != Some(&head) {
            return Err(Error::NotAPath { id: b.assignment, tail: tail.index(), head: head.index() });
        }
    }
    if b.lower.len() != b.nodes.len() || b.upper.len() != b.nodes.len() || b.nodes.len() != b.edges.len() + 1 {
        return Err(Error::InvalidAssignment { id: b.assignment, reason: "bounds do not match route".into() });
    }
    Ok(())
}

fn verdict<T: Scalar>(bi: &BoundedRoute<T>, bj: &BoundedRoute<T>, lengths: Vec<T>, l_min: T) -> PairVerdict<T> {
    let matched = !lengths.is_empty();
    let overlap_km = ordered_sum(lengths);
    let (i, j) = (bi.assignment, bj.assignment);
    PairVerdict { pair: (i.min(j), i.max(j)), lambda: matched && overlap_km >= l_min, overlap_km }
}

/// Whether two assignments can platoon on at least one shared edge.
pub fn coordination<T: Scalar>(
    net: &RoadNetwork<T>,
    bi: &BoundedRoute<T>,
    bj: &BoundedRoute<T>,
) -> Result<PairVerdict<T>> {
    coordination_min_distance(net, bi, bj, T::zero())
}

/// Whether two assignments can platoon over at least `l_min` kilometres.
pub fn coordination_min_distance<T: Scalar>(
    net: &RoadNetwork<T>,
    bi: &BoundedRoute<T>,
    bj: &BoundedRoute<T>,
    l_min: T,
) -> Result<PairVerdict<T>> {
    if !(l_min >= T::zero()) {
        return Err(Error::InvalidParameter("l_min must be non-negative".into()));
    }
    check_route(net, bi)?;
    check_route(net, bj)?;
    let lengths = matched_lengths(net, bi, &EdgeIndex::new(bi), bj, &EdgeIndex::new(bj))?;
    Ok(verdict(bi, bj, lengths, l_min))
}

/// Bounded routes prepared for repeated pair evaluation.
///
/// Only feasible routes take part; positions in `routes` are the assignment
/// indices used in candidate pairs.
pub struct ExactMatcher<'a, T> {
    net: &'a RoadNetwork<T>,
    routes: &'a [BoundedRoute<T>],
    indices: Vec<Option<EdgeIndex>>,
    l_min: T,
}

impl<'a, T: Scalar> ExactMatcher<'a, T> {
    pub fn new(net: &'a RoadNetwork<T>, routes: &'a [BoundedRoute<T>], l_min: T) -> Result<Self> {
        if !(l_min >= T::zero()) {
            return Err(Error::InvalidParameter("l_min must be non-negative".into()));
        }
        let indices = routes
            .iter()
            .map(|b| if b.is_feasible() { check_route(net, b).map(|_| Some(EdgeIndex::new(b))) } else { Ok(None) })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExactMatcher { net, routes, indices, l_min })
    }

    pub fn feasible(&self) -> Vec<u32> {
        (0..self.routes.len() as u32).filter(|&i| self.indices[i as usize].is_some()).collect()
    }

    /// Evaluates one pair; pairs involving an infeasible assignment never match.
    pub fn evaluate(&self, i: usize, j: usize) -> PairVerdict<T> {
        let (bi, bj) = (&self.routes[i], &self.routes[j]);
        match (&self.indices[i], &self.indices[j]) {
            (Some(ii), Some(ij)) => {
                let lengths = matched_lengths(self.net, bi, ii, bj, ij).expect("routes validated on construction");
                verdict(bi, bj, lengths, self.l_min)
            }
            _ => PairVerdict { pair: (i.min(j), i.max(j)), lambda: false, overlap_km: T::zero() },
        }
    }

    /// Evaluates `pairs` in parallel, keeping only the platooning ones in input order.
    pub fn filter_pairs(&self, pairs: &[Pair]) -> Vec<PairVerdict<T>> {
        pairs.par_iter().map(|&(i, j)| self.evaluate(i as usize, j as usize)).filter(|v| v.lambda).collect()
    }

    /// Exhaustive evaluation of every feasible pair.
    pub fn all_pairs(&self) -> Vec<PairVerdict<T>> {
        let feasible = self.feasible();
        feasible
            .par_iter()
            .enumerate()
            .flat_map_iter(|(k, &i)| {
                feasible[k + 1..].iter().map(move |&j| self.evaluate(i as usize, j as usize)).filter(|v| v.lambda)
            })
            .collect()
    }
}

/// The exact set of platooning pairs, by checking every feasible pair.
///
/// `routes[k]` must belong to assignment `k`.
pub fn ground_truth<T: Scalar>(net: &RoadNetwork<T>, routes: &[BoundedRoute<T>], l_min: T) -> Result<CandidateSet> {
    let verdicts = ground_truth_verdicts(net, routes, l_min)?;
    Ok(CandidateSet::from_pairs(verdicts.iter().map(|v| (v.pair.0 as u32, v.pair.1 as u32)).collect()))
}

/// Like [`ground_truth`] but keeps each pair's matched length.
pub fn ground_truth_verdicts<T: Scalar>(
    net: &RoadNetwork<T>,
    routes: &[BoundedRoute<T>],
    l_min: T,
) -> Result<Vec<PairVerdict<T>>> {
    Ok(ExactMatcher::new(net, routes, l_min)?.all_pairs())
}
