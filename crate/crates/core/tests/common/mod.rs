//! Brute-force reference implementations and scenario fixtures shared by the
//! integration tests. Nothing here calls the code it is used to check.
#![allow(dead_code)]

use std::collections::BTreeSet;

use platoon_cull::scenario::StartTimeModel;
use platoon_cull::{
    BoundedRoute, CoordinateMode, FeatureConfig, FeatureSet, NetworkSpec, RoadNetwork, Scenario, ScenarioConfig,
};

pub type PairSet = BTreeSet<(u32, u32)>;

/// Straight-line length of hop `a` of a planar route, from node positions.
pub fn hop_length(net: &RoadNetwork<f64>, b: &BoundedRoute<f64>, a: usize) -> f64 {
    assert_eq!(net.mode(), CoordinateMode::PlanarKm);
    let p = net.position(b.nodes[a]).unwrap();
    let q = net.position(b.nodes[a + 1]).unwrap();
    ((q.x - p.x).powi(2) + (q.y - p.y).powi(2)).sqrt()
}

/// Earliest and latest arrival at each node, by direct recursion.
pub fn naive_bounds(net: &RoadNetwork<f64>, b: &BoundedRoute<f64>, t_s: f64, t_d: f64, v: f64) -> (Vec<f64>, Vec<f64>) {
    let n = b.nodes.len();
    let mut lo = vec![t_s; n];
    let mut hi = vec![t_d; n];
    for a in 1..n {
        lo[a] = lo[a - 1] + hop_length(net, b, a - 1) / v;
    }
    for a in (0..n - 1).rev() {
        hi[a] = hi[a + 1] - hop_length(net, b, a) / v;
    }
    (lo, hi)
}

/// Every overlapping pair of closed intervals, by a double loop.
pub fn naive_overlaps(intervals: &[Option<(f64, f64)>]) -> PairSet {
    let mut out = PairSet::new();
    for i in 0..intervals.len() {
        for j in i + 1..intervals.len() {
            if let (Some(x), Some(y)) = (intervals[i], intervals[j]) {
                if x.0 <= y.1 && y.0 <= x.1 {
                    out.insert((i as u32, j as u32));
                }
            }
        }
    }
    out
}

/// Coordination verdict and matched length by comparing every hop of one
/// route with every hop of the other.
pub fn naive_coordination(
    net: &RoadNetwork<f64>,
    bi: &BoundedRoute<f64>,
    bj: &BoundedRoute<f64>,
    l_min: f64,
) -> (bool, f64) {
    let meet = |a: usize, b: usize| bi.lower[a] <= bj.upper[b] && bj.lower[b] <= bi.upper[a];
    let mut matched = false;
    let mut total = 0.0;
    for a in 0..bi.nodes.len() - 1 {
        for b in 0..bj.nodes.len() - 1 {
            let same = bi.nodes[a] == bj.nodes[b] && bi.nodes[a + 1] == bj.nodes[b + 1];
            if same && meet(a, b) && meet(a + 1, b + 1) {
                matched = true;
                total += hop_length(net, bi, a);
            }
        }
    }
    (matched && total >= l_min, total)
}

pub fn feasible(b: &BoundedRoute<f64>) -> bool {
    b.lower.iter().zip(&b.upper).all(|(l, u)| l <= u)
}

/// Platooning pairs by running [`naive_coordination`] on every feasible pair.
pub fn brute_truth(net: &RoadNetwork<f64>, routes: &[BoundedRoute<f64>], l_min: f64) -> PairSet {
    let mut out = PairSet::new();
    for i in 0..routes.len() {
        for j in i + 1..routes.len() {
            if feasible(&routes[i]) && feasible(&routes[j]) && naive_coordination(net, &routes[i], &routes[j], l_min).0
            {
                out.insert((i as u32, j as u32));
            }
        }
    }
    out
}

pub fn to_set(pairs: &[(u32, u32)]) -> PairSet {
    pairs.iter().copied().collect()
}

/// Small grid scenario with dense traffic, so that platooning pairs exist.
pub fn grid_config(seed: u64, k: usize) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        k,
        network: NetworkSpec::Grid { rows: 16, cols: 16, spacing_km: 20.0, diagonal_fraction: 0.5 },
        v_max_kmh: 80.0,
        window_width_h: 0.5,
        start_time_model: StartTimeModel { fraction_at_zero: 0.5, horizon_h: 4.0 },
        max_route_length_km: 200.0,
        l_min_km: 20.0,
    }
}

pub fn rg_config(seed: u64, k: usize) -> ScenarioConfig {
    ScenarioConfig {
        network: NetworkSpec::RandomGeometric { n: 250, radius_km: 45.0, side_km: 300.0 },
        ..grid_config(seed, k)
    }
}

/// Seeded mix of grid and random geometric scenarios.
pub fn scenario_mix(ks: &[usize], per_k: u64) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for &k in ks {
        for s in 0..per_k {
            let seed = 1000 * k as u64 + s;
            out.push(if s % 2 == 0 { grid_config(seed, k) } else { rg_config(seed, k) });
        }
    }
    out
}

pub struct Prepared {
    pub scenario: Scenario<f64>,
    pub routes: Vec<BoundedRoute<f64>>,
    pub features: FeatureSet<f64>,
}

pub fn prepare(cfg: &ScenarioConfig) -> Prepared {
    prepare_with(cfg, &FeatureConfig::standard(cfg.l_min_km))
}

pub fn prepare_with(cfg: &ScenarioConfig, features: &FeatureConfig) -> Prepared {
    let scenario = Scenario::<f64>::generate(cfg).unwrap();
    let v = scenario.v_max();
    let routes = platoon_cull::report::bound_all(&scenario.network, &scenario.assignments, v).unwrap();
    let features = platoon_cull::extract_all(&scenario.network, &routes, features, v).unwrap();
    Prepared { scenario, routes, features }
}
