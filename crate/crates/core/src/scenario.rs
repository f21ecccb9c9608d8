//! Seeded synthetic scenarios: road networks, assignments and their files.
//!
//! Generated networks are bidirectional (every road yields two directed
//! edges). Assignments follow shortest paths, long routes are cut down to a
//! random contiguous piece of at most `max_route_length_km`, and deadlines
//! leave exactly `window_width_h` of slack at every node.

use std::path::{Path, PathBuf};

use petgraph::algo::astar;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignments::{earliest_arrival, AssignmentFile, TransportAssignment};
use crate::error::{Error, Result};
use crate::road_network::{CoordinateMode, NodeId, Point, RoadNetwork};
use crate::scalar::Scalar;

const NETWORK_STREAM: u64 = 1;
const ASSIGNMENT_STREAM: u64 = 2;
const NETWORK_ATTEMPTS: usize = 32;
const SAMPLE_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    /// `rows × cols` lattice; each lattice cell gets one diagonal road with
    /// probability `diagonal_fraction`.
    Grid {
        rows: usize,
        cols: usize,
        spacing_km: f64,
        #[serde(default)]
        diagonal_fraction: f64,
    },
    /// `n` uniform points in a `side_km` square, joined when closer than `radius_km`.
    RandomGeometric {
        n: usize,
        radius_km: f64,
        #[serde(default = "default_side_km")]
        side_km: f64,
    },
    /// Network file in the JSON network schema.
    File { path: PathBuf },
}

fn default_side_km() -> f64 {
    1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartTimeModel {
    /// Share of assignments that start at time zero.
    pub fraction_at_zero: f64,
    /// The others start uniformly in `[0, horizon_h]`.
    pub horizon_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub network: NetworkSpec,
    pub v_max_kmh: f64,
    pub window_width_h: f64,
    pub start_time_model: StartTimeModel,
    pub max_route_length_km: f64,
    pub l_min_km: f64,
}

impl ScenarioConfig {
    /// Desk-scale stand-in for a continental fleet: 1000 trucks on a
    /// 2000 km square grid, routes of at most 400 km, 80 km/h, half of the
    /// fleet on the road at time zero, half-hour windows, 20 km minimum overlap.
    pub fn continental(seed: u64) -> Self {
        ScenarioConfig {
            seed,
            k: 1000,
            network: NetworkSpec::Grid { rows: 81, cols: 81, spacing_km: 25.0, diagonal_fraction: 0.5 },
            v_max_kmh: 80.0,
            window_width_h: 0.5,
            start_time_model: StartTimeModel { fraction_at_zero: 0.5, horizon_h: 24.0 },
            max_route_length_km: 400.0,
            l_min_km: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        let st = &self.start_time_model;
        if !(self.v_max_kmh > 0.0) {
            return bad("v_max_kmh must be positive");
        }
        if !(self.window_width_h >= 0.0) {
            return bad("window_width_h must be non-negative");
        }
        if !(0.0..=1.0).contains(&st.fraction_at_zero) || !(st.horizon_h >= 0.0) {
            return bad("start_time_model needs 0 <= fraction_at_zero <= 1 and horizon_h >= 0");
        }
        if !(self.max_route_length_km > 0.0) {
            return bad("max_route_length_km must be positive");
        }
        if !(self.l_min_km >= 0.0) {
            return bad("l_min_km must be non-negative");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario config serializes")
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds (or loads) the network described by `spec`.
pub fn generate_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<RoadNetwork<T>> {
    let mut rng = stream(seed, NETWORK_STREAM);
    match *spec {
        NetworkSpec::Grid { rows, cols, spacing_km, diagonal_fraction } => {
            if !(spacing_km > 0.0) || !(0.0..=1.0).contains(&diagonal_fraction) {
                return Err(Error::InvalidParameter(
                    "grid needs spacing_km > 0 and diagonal_fraction in [0, 1]".into(),
                ));
            }
            grid(rows, cols, spacing_km, diagonal_fraction, &mut rng)
        }
        NetworkSpec::RandomGeometric { n, radius_km, side_km } => {
            if !(radius_km > 0.0) || !(side_km > 0.0) {
                return Err(Error::InvalidParameter("random geometric network needs positive radius and side".into()));
            }
            for _ in 0..NETWORK_ATTEMPTS {
                let net = random_geometric(n, radius_km, side_km, &mut rng)?;
                if is_connected(&net) {
                    return Ok(net);
                }
            }
            Err(Error::Disconnected { attempts: NETWORK_ATTEMPTS })
        }
        NetworkSpec::File { ref path } => RoadNetwork::load(path),
    }
}

fn both_ways(a: usize, b: usize) -> [(NodeId, NodeId); 2] {
    [(NodeId::from(a), NodeId::from(b)), (NodeId::from(b), NodeId::from(a))]
}

fn grid<T: Scalar>(
    rows: usize,
    cols: usize,
    spacing: f64,
    diagonals: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RoadNetwork<T>> {
    let id = |r: usize, c: usize| r * cols + c;
    let mut positions = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            positions.push(Point::new(T::of(c as f64 * spacing), T::of(r as f64 * spacing)));
        }
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.extend(both_ways(id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                edges.extend(both_ways(id(r, c), id(r + 1, c)));
            }
            if r + 1 < rows && c + 1 < cols && rng.gen_bool(diagonals) {
                if rng.gen_bool(0.5) {
                    edges.extend(both_ways(id(r, c), id(r + 1, c + 1)));
                } else {
                    edges.extend(both_ways(id(r, c + 1), id(r + 1, c)));
                }
            }
        }
    }
    RoadNetwork::new(CoordinateMode::PlanarKm, positions, edges)
}

fn random_geometric<T: Scalar>(n: usize, radius: f64, side: f64, rng: &mut ChaCha8Rng) -> Result<RoadNetwork<T>> {
    let mut pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side))).collect();
    // Continuous sampling practically never repeats a point; drop repeats if it does.
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup();

    let mut edges = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (dx, dy) = (pts[j].0 - pts[i].0, pts[j].1 - pts[i].1);
            if dx > radius {
                break;
            }
            if dx * dx + dy * dy <= radius * radius {
                edges.extend(both_ways(i, j));
            }
        }
    }
    let positions = pts.iter().map(|&(x, y)| Point::new(T::of(x), T::of(y))).collect();
    RoadNetwork::new(CoordinateMode::PlanarKm, positions, edges)
}

/// Weak connectivity, which equals strong connectivity for bidirectional networks.
pub fn is_connected<T: Scalar>(net: &RoadNetwork<T>) -> bool {
    let n = net.node_count();
    if n == 0 {
        return true;
    }
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (_, t, h) in net.edges() {
        adj[t.index()].push(h.0);
        adj[h.index()].push(t.0);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0u32];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in &adj[v as usize] {
            if !seen[w as usize] {
                seen[w as usize] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

struct Router<'a, T> {
    net: &'a RoadNetwork<T>,
    graph: DiGraph<(), T>,
}

impl<'a, T: Scalar> Router<'a, T> {
    fn new(net: &'a RoadNetwork<T>) -> Result<Self> {
        let mut graph = DiGraph::with_capacity(net.node_count(), net.edge_count());
        for _ in 0..net.node_count() {
            graph.add_node(());
        }
        for (e, t, h) in net.edges() {
            graph.add_edge(NodeIndex::new(t.index()), NodeIndex::new(h.index()), net.edge_length(e)?);
        }
        Ok(Router { net, graph })
    }

    /// Shortest path by edge length.
    fn shortest_path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let goal = NodeIndex::new(to.index());
        let planar = self.net.mode() == CoordinateMode::PlanarKm;
        let (_, path) = astar(
            &self.graph,
            NodeIndex::new(from.index()),
            |n| n == goal,
            |e| *e.weight(),
            |n| {
                if planar {
                    self.net.distance(NodeId::from(n.index()), to).unwrap_or_else(|_| T::zero())
                } else {
                    T::zero()
                }
            },
        )?;
        Some(path.into_iter().map(|n| NodeId::from(n.index())).collect())
    }
}

/// Cuts `route` to a contiguous run of whole edges totalling at most `max_len`.
///
/// The first edge is drawn uniformly among positions from which at least
/// `max_len` of route remains; edges are then added while they fit.
fn truncate_route<T: Scalar>(
    net: &RoadNetwork<T>,
    route: Vec<NodeId>,
    max_len: T,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<NodeId>> {
    let hops = route
        .windows(2)
        .map(|w| net.edge_length(net.find_edge(w[0], w[1]).expect("path edges exist")))
        .collect::<Result<Vec<T>>>()?;
    let total = hops.iter().fold(T::zero(), |a, &h| a + h);
    if total <= max_len {
        return Ok(route);
    }
    let mut suffix = vec![T::zero(); hops.len() + 1];
    for k in (0..hops.len()).rev() {
        suffix[k] = suffix[k + 1] + hops[k];
    }
    let offsets = suffix.iter().take(hops.len()).take_while(|&&s| s >= max_len).count();
    let start = rng.gen_range(0..offsets);
    let mut end = start;
    let mut len = T::zero();
    while end < hops.len() && len + hops[end] <= max_len {
        len = len + hops[end];
        end += 1;
    }
    Ok(route[start..=end].to_vec())
}

/// Samples `cfg.k` assignments on `net`.
pub fn generate_assignments<T: Scalar>(
    net: &RoadNetwork<T>,
    cfg: &ScenarioConfig,
) -> Result<Vec<TransportAssignment<T>>> {
    cfg.validate()?;
    if cfg.k == 0 {
        return Ok(Vec::new());
    }
    if net.node_count() < 2 {
        return Err(Error::InvalidParameter("assignments need a network with at least two nodes".into()));
    }
    let mut rng = stream(cfg.seed, ASSIGNMENT_STREAM);
    let router = Router::new(net)?;
    let weighted = match net.weights() {
        Some(w) => Some(WeightedIndex::new(w).map_err(|e| Error::InvalidParameter(format!("node weights: {e}")))?),
        None => None,
    };
    let sample_node = |rng: &mut ChaCha8Rng| -> NodeId {
        match &weighted {
            Some(w) => NodeId::from(w.sample(rng)),
            None => NodeId::from(rng.gen_range(0..net.node_count())),
        }
    };

    let (v_max, window) = (T::of(cfg.v_max_kmh), T::of(cfg.window_width_h));
    let max_len = T::of(cfg.max_route_length_km);
    let at_zero = (cfg.k as f64 * cfg.start_time_model.fraction_at_zero).floor() as usize;

    let mut out = Vec::with_capacity(cfg.k);
    for id in 0..cfg.k {
        let mut route = None;
        for _ in 0..SAMPLE_ATTEMPTS {
            let (s, d) = (sample_node(&mut rng), sample_node(&mut rng));
            if s == d {
                continue;
            }
            let Some(path) = router.shortest_path(s, d) else { continue };
            let path = truncate_route(net, path, max_len, &mut rng)?;
            if path.len() >= 2 {
                route = Some(path);
                break;
            }
        }
        let route = route.ok_or(Error::SamplingExhausted { attempts: SAMPLE_ATTEMPTS })?;

        let t_start = if id < at_zero { T::zero() } else { T::of(rng.gen_range(0.0..=cfg.start_time_model.horizon_h)) };
        let draft = TransportAssignment::new(id, route, t_start, t_start);
        let edges = draft.route_edges(net)?;
        let t_deadline = earliest_arrival(net, &edges, t_start, v_max)? + window;
        out.push(TransportAssignment { t_deadline, ..draft });
    }
    Ok(out)
}

/// A generated scenario held in memory.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub config: ScenarioConfig,
    pub network: RoadNetwork<T>,
    pub assignments: Vec<TransportAssignment<T>>,
}

impl<T: Scalar> Scenario<T> {
    pub fn generate(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let network = generate_network(&config.network, config.seed)?;
        let assignments = generate_assignments(&network, config)?;
        Ok(Scenario { config: config.clone(), network, assignments })
    }

    pub fn v_max(&self) -> T {
        T::of(self.config.v_max_kmh)
    }

    pub fn assignment_file(&self) -> AssignmentFile {
        AssignmentFile::from_assignments(self.v_max(), &self.assignments)
    }

    /// Writes `network.json` and `assignments.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let net_path = dir.join("network.json");
        let asg_path = dir.join("assignments.json");
        write_file(&net_path, &self.network.to_json())?;
        write_file(&asg_path, &self.assignment_file().to_json())?;
        Ok((net_path, asg_path))
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads an assignment file and binds it to `net`; returns `v_max` and the assignments.
pub fn load_assignments<T: Scalar>(
    path: impl AsRef<Path>,
    net: &RoadNetwork<T>,
) -> Result<(T, Vec<TransportAssignment<T>>)> {
    AssignmentFile::load(path)?.bind(net)
}
