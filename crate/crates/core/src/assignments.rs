//! Transport assignments, their fixed routes and per-node arrival-time bounds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::road_network::{EdgeId, NodeId, RoadNetwork};
use crate::scalar::Scalar;

/// One truck's task: drive `route` no earlier than `t_start`, arriving by `t_deadline`.
///
/// Times are hours; the start and destination nodes are the route endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportAssignment<T> {
    pub id: usize,
    pub route: Vec<NodeId>,
    pub t_start: T,
    pub t_deadline: T,
}

impl<T: Scalar> TransportAssignment<T> {
    pub fn new(id: usize, route: Vec<NodeId>, t_start: T, t_deadline: T) -> Self {
        TransportAssignment { id, route, t_start, t_deadline }
    }

    pub fn start_node(&self) -> NodeId {
        self.route[0]
    }

    pub fn dest_node(&self) -> NodeId {
        self.route[self.route.len() - 1]
    }

    /// Checks the assignment against `net` and returns the edge sequence of its route.
    pub fn route_edges(&self, net: &RoadNetwork<T>) -> Result<Vec<EdgeId>> {
        let invalid = |reason: &str| Error::InvalidAssignment { id: self.id, reason: reason.into() };
        if self.route.len() < 2 {
            return Err(invalid("route needs at least two nodes"));
        }
        if !(self.t_start <= self.t_deadline) {
            return Err(invalid("earliest start is after the deadline"));
        }
        if let Some(n) = self.route.iter().find(|n| n.index() >= net.node_count()) {
            return Err(Error::InvalidNode(n.index()));
        }
        self.route
            .windows(2)
            .map(|w| {
                net.find_edge(w[0], w[1]).ok_or(Error::NotAPath { id: self.id, tail: w[0].index(), head: w[1].index() })
            })
            .collect()
    }
}

/// A route annotated with the earliest and latest arrival time at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedRoute<T> {
    pub assignment: usize,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> BoundedRoute<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn t_start(&self) -> T {
        self.lower[0]
    }

    pub fn t_deadline(&self) -> T {
        self.upper[self.upper.len() - 1]
    }

    /// Arrival window `[lower, upper]` at node index `a`.
    #[inline]
    pub fn window(&self, a: usize) -> (T, T) {
        (self.lower[a], self.upper[a])
    }

    pub fn is_feasible(&self) -> bool {
        is_feasible(self)
    }

    pub fn route_length(&self, net: &RoadNetwork<T>) -> Result<T> {
        self.edges.iter().try_fold(T::zero(), |acc, &e| Ok(acc + net.edge_length(e)?))
    }
}

/// Travel time of every hop at `v_max`.
fn hop_times<T: Scalar>(net: &RoadNetwork<T>, edges: &[EdgeId], v_max: T) -> Result<Vec<T>> {
    edges.iter().map(|&e| Ok(net.edge_length(e)? / v_max)).collect()
}

/// Lower bounds by forward accumulation from `t_start`.
pub(crate) fn forward_bounds<T: Scalar>(t_start: T, hops: &[T]) -> Vec<T> {
    let mut lower = Vec::with_capacity(hops.len() + 1);
    let mut t = t_start;
    lower.push(t);
    for &h in hops {
        t = t + h;
        lower.push(t);
    }
    lower
}

/// Arrival time at the last node when leaving at `t_start` and driving at `v_max` throughout.
pub fn earliest_arrival<T: Scalar>(net: &RoadNetwork<T>, edges: &[EdgeId], t_start: T, v_max: T) -> Result<T> {
    let hops = hop_times(net, edges, v_max)?;
    Ok(*forward_bounds(t_start, &hops).last().expect("non-empty"))
}

/// Earliest (`lower`) and latest (`upper`) arrival at every route node.
///
/// The bounds are returned even when the assignment cannot be completed in
/// time; use [`is_feasible`] to detect that.
pub fn compute_bounds<T: Scalar>(
    net: &RoadNetwork<T>,
    a: &TransportAssignment<T>,
    v_max: T,
) -> Result<BoundedRoute<T>> {
    if !(v_max > T::zero()) {
        return Err(Error::InvalidParameter("v_max must be positive".into()));
    }
    let edges = a.route_edges(net)?;
    let hops = hop_times(net, &edges, v_max)?;
    let lower = forward_bounds(a.t_start, &hops);

    let mut upper = vec![T::zero(); hops.len() + 1];
    let mut t = a.t_deadline;
    upper[hops.len()] = t;
    for (k, &h) in hops.iter().enumerate().rev() {
        t = t - h;
        upper[k] = t;
    }

    Ok(BoundedRoute { assignment: a.id, nodes: a.route.clone(), edges, lower, upper })
}

pub fn is_feasible<T: Scalar>(b: &BoundedRoute<T>) -> bool {
    b.lower.iter().zip(&b.upper).all(|(lo, hi)| lo <= hi)
}

/// Width of the arrival window at node index `a` (0-based).
pub fn window_width<T: Scalar>(b: &BoundedRoute<T>, a: usize) -> Result<T> {
    if a >= b.len() {
        return Err(Error::IndexOutOfRange { index: a, len: b.len() });
    }
    Ok(b.upper[a] - b.lower[a])
}

/// A concrete route with node arrival times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub nodes: Vec<NodeId>,
    pub times: Vec<T>,
}

/// Whether `traj` is drivable at `v_max` and carries out assignment `a`.
///
/// Comparisons allow a few ulps of rounding slack so that a trajectory built
/// from accumulated travel times at exactly `v_max` is accepted.
pub fn implements<T: Scalar>(net: &RoadNetwork<T>, traj: &Trajectory<T>, a: &TransportAssignment<T>, v_max: T) -> bool {
    let n = traj.nodes.len();
    if n < 2 || traj.times.len() != n || a.route.len() < 2 {
        return false;
    }
    if traj.nodes[0] != a.start_node() || traj.nodes[n - 1] != a.dest_node() {
        return false;
    }
    let (t_first, t_last) = (traj.times[0], traj.times[n - 1]);
    if t_first + T::slack(t_first) < a.t_start || t_last - T::slack(t_last) > a.t_deadline {
        return false;
    }
    traj.nodes.windows(2).zip(traj.times.windows(2)).all(|(nodes, times)| {
        let Some(e) = net.find_edge(nodes[0], nodes[1]) else {
            return false;
        };
        let need = net.edge_length(e).expect("edge from find_edge") / v_max;
        times[1] - times[0] + T::slack(times[1]) >= need
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub id: usize,
    pub route: Vec<u32>,
    pub t_start: f64,
    pub t_deadline: f64,
}

/// On-disk form of an assignment list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentFile {
    pub v_max_kmh: f64,
    pub assignments: Vec<AssignmentRecord>,
}

impl AssignmentFile {
    pub fn from_assignments<T: Scalar>(v_max: T, list: &[TransportAssignment<T>]) -> Self {
        AssignmentFile {
            v_max_kmh: v_max.as_f64(),
            assignments: list
                .iter()
                .map(|a| AssignmentRecord {
                    id: a.id,
                    route: a.route.iter().map(|n| n.0).collect(),
                    t_start: a.t_start.as_f64(),
                    t_deadline: a.t_deadline.as_f64(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assignments serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Converts the records and validates each against `net`.
    pub fn bind<T: Scalar>(&self, net: &RoadNetwork<T>) -> Result<(T, Vec<TransportAssignment<T>>)> {
        if !(self.v_max_kmh > 0.0) {
            return Err(Error::InvalidParameter("v_max_kmh must be positive".into()));
        }
        let list = self
            .assignments
            .iter()
            .map(|r| {
                let a = TransportAssignment::new(
                    r.id,
                    r.route.iter().map(|&n| NodeId(n)).collect(),
                    T::of(r.t_start),
                    T::of(r.t_deadline),
                );
                a.route_edges(net).map(|_| a)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((T::of(self.v_max_kmh), list))
    }
}
