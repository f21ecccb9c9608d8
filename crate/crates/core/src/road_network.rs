//! Immutable directed road network with 2-D node positions.
//!
//! Edge lengths and orientations are computed once at construction. Positions
//! are either planar kilometres or geodetic degrees (`[longitude, latitude]`);
//! geodetic distances use the equirectangular approximation around the
//! mid-latitude of each edge.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(v as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateMode {
    #[default]
    PlanarKm,
    GeodeticDeg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Point { x, y }
    }
}

/// On-disk form of a network. `weights` is an optional per-node sampling weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default)]
    pub coordinate_mode: CoordinateMode,
    pub nodes: Vec<[f64; 2]>,
    #[serde(default)]
    pub edges: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RoadNetwork<T> {
    mode: CoordinateMode,
    positions: Vec<Point<T>>,
    weights: Option<Vec<f64>>,
    // Edges sorted by (tail, head); `offsets` is the CSR row index into them.
    tails: Vec<NodeId>,
    heads: Vec<NodeId>,
    offsets: Vec<u32>,
    lengths: Vec<T>,
    orientations: Vec<T>,
}

impl<T: Scalar> RoadNetwork<T> {
    /// Builds and validates a network from positions and directed edges.
    pub fn new(
        mode: CoordinateMode,
        positions: Vec<Point<T>>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        let n = positions.len();
        for (i, p) in positions.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::NonFinitePosition { node: i });
            }
        }
        check_distinct_positions(&positions)?;

        let mut list: Vec<(NodeId, NodeId)> = Vec::new();
        for (e, (tail, head)) in edges.into_iter().enumerate() {
            for node in [tail, head] {
                if node.index() >= n {
                    return Err(Error::DanglingEdge { edge: e, node: node.index(), node_count: n });
                }
            }
            if tail == head {
                return Err(Error::SelfLoop { edge: e, node: tail.index() });
            }
            list.push((tail, head));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateEdge { tail: w[0].0.index(), head: w[0].1.index() });
        }

        let mut offsets = vec![0u32; n + 1];
        for &(tail, _) in &list {
            offsets[tail.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }

        let (tails, heads): (Vec<_>, Vec<_>) = list.into_iter().unzip();
        let (lengths, orientations) = tails
            .iter()
            .zip(&heads)
            .map(|(&t, &h)| {
                let (dx, dy) = local_delta(mode, positions[t.index()], positions[h.index()]);
                ((dx * dx + dy * dy).sqrt(), polar_angle(dx, dy))
            })
            .unzip();

        Ok(RoadNetwork { mode, positions, weights: None, tails, heads, offsets, lengths, orientations })
    }

    /// Attaches per-node sampling weights (used only by scenario generation).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.node_count() {
            return Err(Error::InvalidParameter(format!("{} weights for {} nodes", weights.len(), self.node_count())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("node weights must be finite and non-negative".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        let positions = file.nodes.iter().map(|&[x, y]| Point::new(T::of(x), T::of(y))).collect();
        let edges = file.edges.iter().map(|&[t, h]| (NodeId(t), NodeId(h)));
        let net = Self::new(file.coordinate_mode, positions, edges)?;
        match &file.weights {
            Some(w) => net.with_weights(w.clone()),
            None => Ok(net),
        }
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            coordinate_mode: self.mode,
            nodes: self.positions.iter().map(|p| [p.x.as_f64(), p.y.as_f64()]).collect(),
            edges: self.tails.iter().zip(&self.heads).map(|(t, h)| [t.0, h.0]).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }

    pub fn mode(&self) -> CoordinateMode {
        self.mode
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.tails.len()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn position(&self, n: NodeId) -> Result<Point<T>> {
        self.positions.get(n.index()).copied().ok_or(Error::InvalidNode(n.index()))
    }

    pub fn positions(&self) -> &[Point<T>] {
        &self.positions
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, NodeId, NodeId)> + '_ {
        (0..self.edge_count()).map(move |e| (EdgeId(e as u32), self.tails[e], self.heads[e]))
    }

    pub fn endpoints(&self, e: EdgeId) -> Result<(NodeId, NodeId)> {
        let i = e.index();
        if i >= self.edge_count() {
            return Err(Error::InvalidEdge(i));
        }
        Ok((self.tails[i], self.heads[i]))
    }

    /// Looks up the directed edge `tail -> head`.
    pub fn find_edge(&self, tail: NodeId, head: NodeId) -> Option<EdgeId> {
        if tail.index() >= self.node_count() {
            return None;
        }
        let lo = self.offsets[tail.index()] as usize;
        let hi = self.offsets[tail.index() + 1] as usize;
        self.heads[lo..hi].binary_search(&head).ok().map(|k| EdgeId((lo + k) as u32))
    }

    pub fn out_edges(&self, tail: NodeId) -> impl Iterator<Item = (EdgeId, NodeId)> + '_ {
        let lo = self.offsets[tail.index()] as usize;
        let hi = self.offsets[tail.index() + 1] as usize;
        (lo..hi).map(move |e| (EdgeId(e as u32), self.heads[e]))
    }

    /// Length of `e` in kilometres.
    pub fn edge_length(&self, e: EdgeId) -> Result<T> {
        self.lengths.get(e.index()).copied().ok_or(Error::InvalidEdge(e.index()))
    }

    /// Polar angle of `e` in `[0, 2π)`.
    pub fn edge_orientation(&self, e: EdgeId) -> Result<T> {
        self.orientations.get(e.index()).copied().ok_or(Error::InvalidEdge(e.index()))
    }

    /// Distance between two arbitrary nodes under the network's metric.
    pub fn distance(&self, a: NodeId, b: NodeId) -> Result<T> {
        let (dx, dy) = local_delta(self.mode, self.position(a)?, self.position(b)?);
        Ok((dx * dx + dy * dy).sqrt())
    }
}

/// Displacement from `a` to `b` in kilometres on the local tangent plane.
fn local_delta<T: Scalar>(mode: CoordinateMode, a: Point<T>, b: Point<T>) -> (T, T) {
    match mode {
        CoordinateMode::PlanarKm => (b.x - a.x, b.y - a.y),
        CoordinateMode::GeodeticDeg => {
            let r = T::of(EARTH_RADIUS_KM);
            let mid_lat = ((a.y + b.y) / T::of(2.0)).to_radians();
            let dlon = (b.x - a.x).to_radians();
            let dlat = (b.y - a.y).to_radians();
            (r * dlon * mid_lat.cos(), r * dlat)
        }
    }
}

fn polar_angle<T: Scalar>(dx: T, dy: T) -> T {
    let two_pi = T::TAU();
    let mut a = dy.atan2(dx);
    if a < T::zero() {
        a = a + two_pi;
    }
    if a >= two_pi {
        a = T::zero();
    }
    a
}

fn check_distinct_positions<T: Scalar>(positions: &[Point<T>]) -> Result<()> {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    let key = |i: &usize| (positions[*i].x, positions[*i].y);
    order.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite coordinates"));
    for w in order.windows(2) {
        let (p, q) = (positions[w[0]], positions[w[1]]);
        if p.x == q.x && p.y == q.y {
            let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(Error::DuplicatePosition { first, second, x: p.x.as_f64(), y: p.y.as_f64() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PATH3: &str = r#"{"coordinate_mode":"planar_km","nodes":[[0,0],[40,0],[80,30]],"edges":[[0,1],[1,2]]}"#;

    fn path3() -> RoadNetwork<f64> {
        RoadNetwork::from_json(PATH3).unwrap()
    }

    #[test]
    fn loads_three_node_path() {
        let net = path3();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.edge_count(), 2);
        let ab = net.find_edge(NodeId(0), NodeId(1)).unwrap();
        let bc = net.find_edge(NodeId(1), NodeId(2)).unwrap();
        assert_eq!(net.edge_length(ab).unwrap(), 40.0);
        assert_eq!(net.edge_length(bc).unwrap(), 50.0);
        assert!(net.find_edge(NodeId(1), NodeId(0)).is_none());
    }

    #[test]
    fn empty_network_is_valid() {
        let net = RoadNetwork::<f64>::from_json(r#"{"coordinate_mode":"planar_km","nodes":[],"edges":[]}"#).unwrap();
        assert_eq!(net.node_count(), 0);
        assert_eq!(net.edge_count(), 0);
    }

    #[test]
    fn rejects_invalid_files() {
        let dup = r#"{"nodes":[[1,2],[3,4],[1,2]],"edges":[]}"#;
        assert!(matches!(
            RoadNetwork::<f64>::from_json(dup),
            Err(Error::DuplicatePosition { first: 0, second: 2, .. })
        ));
        let dangling = r#"{"nodes":[[0,0],[1,0]],"edges":[[0,5]]}"#;
        assert!(matches!(RoadNetwork::<f64>::from_json(dangling), Err(Error::DanglingEdge { node: 5, .. })));
        let looped = r#"{"nodes":[[0,0],[1,0]],"edges":[[1,1]]}"#;
        assert!(matches!(RoadNetwork::<f64>::from_json(looped), Err(Error::SelfLoop { .. })));
        let twice = r#"{"nodes":[[0,0],[1,0]],"edges":[[0,1],[0,1]]}"#;
        assert!(matches!(RoadNetwork::<f64>::from_json(twice), Err(Error::DuplicateEdge { .. })));
        assert!(matches!(RoadNetwork::<f64>::from_json("{\"nodes\": [[0,0],"), Err(Error::Json(_))));
    }

    #[test]
    fn orientations() {
        let net =
            RoadNetwork::<f64>::from_json(r#"{"nodes":[[0,0],[40,0],[80,30]],"edges":[[0,1],[1,0],[1,2]]}"#).unwrap();
        let o = |t, h| net.edge_orientation(net.find_edge(NodeId(t), NodeId(h)).unwrap()).unwrap();
        assert_eq!(o(0, 1), 0.0);
        assert!((o(1, 0) - std::f64::consts::PI).abs() < 1e-15);
        assert!((o(1, 2) - 0.643_501_108_793_284_4).abs() < 1e-12);
        assert!(net.edge_orientation(EdgeId(3)).is_err());
        assert!(net.edge_length(EdgeId(99)).is_err());
    }

    #[test]
    fn geodetic_lengths_scale_longitude() {
        // One degree of latitude, then one degree of longitude at 60 degrees north.
        let net = RoadNetwork::<f64>::from_json(
            r#"{"coordinate_mode":"geodetic_deg","nodes":[[10,59.5],[10,60.5],[11,60.5]],"edges":[[0,1],[1,2]]}"#,
        )
        .unwrap();
        let deg = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        let north = net.find_edge(NodeId(0), NodeId(1)).unwrap();
        let east = net.find_edge(NodeId(1), NodeId(2)).unwrap();
        assert!((net.edge_length(north).unwrap() - deg).abs() < 1e-9);
        let expect = deg * 60.5f64.to_radians().cos();
        assert!((net.edge_length(east).unwrap() - expect).abs() < 1e-9);
        assert!((net.edge_orientation(north).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(net.edge_orientation(east).unwrap(), 0.0);
    }

    #[test]
    fn single_precision_network() {
        let net = RoadNetwork::<f32>::from_json(PATH3).unwrap();
        let bc = net.find_edge(NodeId(1), NodeId(2)).unwrap();
        assert_eq!(net.edge_length(bc).unwrap(), 50.0f32);
    }

    fn arb_points() -> impl Strategy<Value = Vec<(i32, i32)>> {
        proptest::collection::btree_set((-500i32..500, -500i32..500), 2..30).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn reversal_laws_and_round_trip(points in arb_points(), salt in 0usize..1000) {
            let n = points.len();
            let positions: Vec<Point<f64>> = points
                .iter()
                .map(|&(x, y)| Point::new(x as f64 * 0.37, y as f64 * 1.13))
                .collect();
            let mut edges = Vec::new();
            for i in 0..n {
                let j = (i * 7 + salt + 1) % n;
                if i != j {
                    edges.push((NodeId(i as u32), NodeId(j as u32)));
                    edges.push((NodeId(j as u32), NodeId(i as u32)));
                }
            }
            edges.sort();
            edges.dedup();
            let net = RoadNetwork::new(CoordinateMode::PlanarKm, positions, edges).unwrap();
            for (e, t, h) in net.edges() {
                let r = net.find_edge(h, t).unwrap();
                prop_assert_eq!(net.edge_length(e).unwrap(), net.edge_length(r).unwrap());
                let fwd = net.edge_orientation(e).unwrap();
                let back = net.edge_orientation(r).unwrap();
                let tau = std::f64::consts::TAU;
                let diff = (back - (fwd + std::f64::consts::PI)).rem_euclid(tau);
                prop_assert!(diff.min(tau - diff) < 1e-12);
                prop_assert!((0.0..tau).contains(&fwd));
            }
            let again = RoadNetwork::<f64>::from_json(&net.to_json()).unwrap();
            prop_assert_eq!(again.to_file(), net.to_file());
        }
    }
}
