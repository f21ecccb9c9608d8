//! Per-assignment culling features.
//!
//! Two kinds are extracted from a bounded route:
//!
//! * projection intervals: every node position is paired with its earliest
//!   and its latest arrival time, the resulting `(x, y, t)` points are
//!   projected onto a vector `p`, and the feature is the range of the
//!   projections. Two assignments whose ranges are disjoint cannot platoon.
//! * orientation signatures: `[0, 2π)` is split into `M` equal cells and each
//!   edge's length is credited to the cell holding its heading. The lightest
//!   cells are then dropped while their combined length stays below
//!   `l_min / 2`. Two assignments without a common retained cell cannot
//!   platoon over `l_min` kilometres.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignments::BoundedRoute;
use crate::error::{Error, Result};
use crate::road_network::{CoordinateMode, RoadNetwork, EARTH_RADIUS_KM};
use crate::scalar::Scalar;

/// Latitude (as a fraction of π) the geodetic heading vectors are tuned for.
pub const REFERENCE_LATITUDE_PI: f64 = 0.278;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionVector<T> {
    pub label: String,
    /// Weights on x-position, y-position and time.
    pub p: [T; 3],
}

impl<T: Scalar> ProjectionVector<T> {
    pub fn new(label: impl Into<String>, p: [T; 3]) -> Result<Self> {
        if p.iter().all(|c| c.is_zero()) || p.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("projection vector must be finite and non-zero".into()));
        }
        Ok(ProjectionVector { label: label.into(), p })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalFeature<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> IntervalFeature<T> {
    pub fn new(lo: T, hi: T) -> Self {
        debug_assert!(lo <= hi);
        IntervalFeature { lo, hi }
    }

    /// Closed-interval overlap.
    #[inline]
    pub fn overlaps(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

pub fn project_interval<T: Scalar>(
    net: &RoadNetwork<T>,
    b: &BoundedRoute<T>,
    p: &ProjectionVector<T>,
) -> Result<IntervalFeature<T>> {
    if b.is_empty() {
        return Err(Error::InvalidParameter("cannot project an empty route".into()));
    }
    let [px, py, pt] = p.p;
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (k, &n) in b.nodes.iter().enumerate() {
        let pos = net.position(n)?;
        let base = px * pos.x + py * pos.y;
        for t in [b.lower[k], b.upper[k]] {
            let v = base + pt * t;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok(IntervalFeature { lo, hi })
}

/// Projection vector that is (nearly) constant along a trajectory driving at
/// `v_max` with heading `alpha`.
///
/// Geodetic mode uses degree positions and hours:
/// `(-cos α, -sin α / cos(0.278π), v_max·180/(6371π))`.
/// Planar mode uses kilometres and hours: `(-cos α, -sin α, v_max)`.
pub fn alpha_vector<T: Scalar>(alpha: T, v_max: T, mode: CoordinateMode) -> Result<ProjectionVector<T>> {
    if !(v_max > T::zero()) {
        return Err(Error::InvalidParameter("v_max must be positive".into()));
    }
    let p = match mode {
        CoordinateMode::PlanarKm => [-alpha.cos(), -alpha.sin(), v_max],
        CoordinateMode::GeodeticDeg => {
            let lat_scale = (T::of(REFERENCE_LATITUDE_PI) * T::PI()).cos();
            let km_to_deg = T::of(180.0) / (T::of(EARTH_RADIUS_KM) * T::PI());
            [-alpha.cos(), -alpha.sin() / lat_scale, v_max * km_to_deg]
        }
    };
    ProjectionVector::new(format!("alpha({})", alpha), p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationSignature<T> {
    pub cells: u32,
    pub l_min: T,
    /// Sorted indices of the retained cells.
    pub retained: Vec<u32>,
    /// Accumulated route length per non-empty cell, sorted by cell index.
    pub loads: Vec<(u32, T)>,
    pub excluded_km: T,
}

impl<T: Scalar> OrientationSignature<T> {
    pub fn contains(&self, cell: u32) -> bool {
        self.retained.binary_search(&cell).is_ok()
    }

    pub fn intersects(&self, other: &Self) -> bool {
        let (mut p, mut q) = (0, 0);
        let (a, b) = (&self.retained, &other.retained);
        while p < a.len() && q < b.len() {
            match a[p].cmp(&b[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// Cell of `[0, 2π)` holding `angle` in an `m`-cell partition.
pub fn orientation_cell<T: Scalar>(angle: T, m: u32) -> u32 {
    let raw = (angle * T::of(m as f64) / T::TAU()).floor();
    let k = raw.to_i64().unwrap_or(0);
    if k >= m as i64 {
        // Only angles rounding up to 2π land here.
        if angle >= T::TAU() {
            0
        } else {
            m - 1
        }
    } else {
        k.max(0) as u32
    }
}

/// Retained orientation cells of a route after the short-overlap exclusion.
pub fn orientation_signature<T: Scalar>(
    net: &RoadNetwork<T>,
    b: &BoundedRoute<T>,
    m: u32,
    l_min: T,
) -> Result<OrientationSignature<T>> {
    if m == 0 {
        return Err(Error::InvalidParameter("orientation partition needs at least one cell".into()));
    }
    if !(l_min >= T::zero()) {
        return Err(Error::InvalidParameter("l_min must be non-negative".into()));
    }
    let mut acc: BTreeMap<u32, T> = BTreeMap::new();
    for &e in &b.edges {
        let cell = orientation_cell(net.edge_orientation(e)?, m);
        let slot = acc.entry(cell).or_insert_with(T::zero);
        *slot = *slot + net.edge_length(e)?;
    }
    Ok(signature_from_loads(m, l_min, acc.into_iter().collect()))
}

/// Applies the exclusion rule to per-cell loads (sorted by cell index).
pub fn signature_from_loads<T: Scalar>(m: u32, l_min: T, loads: Vec<(u32, T)>) -> OrientationSignature<T> {
    let budget = l_min / T::of(2.0);
    let mut by_load = loads.clone();
    by_load.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite lengths").then(a.0.cmp(&b.0)));

    let mut excluded = T::zero();
    let mut dropped = 0;
    for &(_, load) in &by_load {
        if excluded + load < budget {
            excluded = excluded + load;
            dropped += 1;
        } else {
            break;
        }
    }
    let mut retained: Vec<u32> = by_load[dropped..].iter().map(|&(c, _)| c).collect();
    retained.sort_unstable();
    OrientationSignature { cells: m, l_min, retained, loads, excluded_km: excluded }
}

/// One entry of the `projections` list in a feature configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProjectionSpec {
    Vector {
        label: String,
        p: [f64; 3],
    },
    Alpha {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationSpec {
    pub cells: u32,
    pub l_min_km: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureConfig {
    #[serde(default)]
    pub projections: Vec<ProjectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<OrientationSpec>,
}

/// Label of the orientation classifier.
pub const ORIENTATION_LABEL: &str = "c_o";

impl FeatureConfig {
    /// Fourteen projection vectors (five axis combinations and eight headings)
    /// plus a 100-cell orientation partition.
    pub fn standard(l_min_km: f64) -> Self {
        let mut projections: Vec<ProjectionSpec> = [
            ("c_100", [1.0, 0.0, 0.0]),
            ("c_010", [0.0, 1.0, 0.0]),
            ("c_001", [0.0, 0.0, 1.0]),
            ("c_110", [1.0, 1.0, 0.0]),
            ("c_-110", [-1.0, 1.0, 0.0]),
        ]
        .into_iter()
        .map(|(label, p)| ProjectionSpec::Vector { label: label.into(), p })
        .collect();
        projections.extend((0..8).map(|k| ProjectionSpec::Alpha {
            alpha: k as f64 * std::f64::consts::FRAC_PI_4,
            label: Some(format!("c_a{k}")),
        }));
        FeatureConfig { projections, orientation: Some(OrientationSpec { cells: 100, l_min_km }) }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("feature config serializes")
    }

    /// Resolves every projection entry into a concrete vector.
    pub fn projection_vectors<T: Scalar>(&self, v_max: T, mode: CoordinateMode) -> Result<Vec<ProjectionVector<T>>> {
        self.projections
            .iter()
            .map(|spec| match spec {
                ProjectionSpec::Vector { label, p } => ProjectionVector::new(label.clone(), p.map(T::of)),
                ProjectionSpec::Alpha { alpha, label } => {
                    let mut v = alpha_vector(T::of(*alpha), v_max, mode)?;
                    if let Some(l) = label {
                        v.label = l.clone();
                    }
                    Ok(v)
                }
            })
            .collect()
    }

    /// Labels of all configured classifiers, projections first.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .projections
            .iter()
            .map(|spec| match spec {
                ProjectionSpec::Vector { label, .. } => label.clone(),
                ProjectionSpec::Alpha { alpha, label } => label.clone().unwrap_or_else(|| format!("alpha({alpha})")),
            })
            .collect();
        if self.orientation.is_some() {
            out.push(ORIENTATION_LABEL.into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub intervals: Vec<IntervalFeature<T>>,
    pub orientation: Option<OrientationSignature<T>>,
}

impl<T> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.intervals.len() + usize::from(self.orientation.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Features of every assignment; `vectors[k]` is `None` for infeasible ones.
#[derive(Debug, Clone)]
pub struct FeatureSet<T> {
    pub projections: Vec<ProjectionVector<T>>,
    pub orientation: Option<OrientationSpec>,
    pub vectors: Vec<Option<FeatureVector<T>>>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn assignment_count(&self) -> usize {
        self.vectors.len()
    }

    pub fn feasible(&self) -> Vec<u32> {
        (0..self.vectors.len() as u32).filter(|&k| self.vectors[k as usize].is_some()).collect()
    }

    /// Interval `feature` of every assignment.
    pub fn intervals(&self, feature: usize) -> Vec<Option<IntervalFeature<T>>> {
        self.vectors.iter().map(|v| v.as_ref().map(|v| v.intervals[feature])).collect()
    }

    pub fn signatures(&self) -> Vec<Option<&OrientationSignature<T>>> {
        self.vectors.iter().map(|v| v.as_ref().and_then(|v| v.orientation.as_ref())).collect()
    }
}

/// Extracts the configured features of every feasible route, in parallel.
///
/// `routes[k]` must belong to assignment `k`.
pub fn extract_all<T: Scalar>(
    net: &RoadNetwork<T>,
    routes: &[BoundedRoute<T>],
    config: &FeatureConfig,
    v_max: T,
) -> Result<FeatureSet<T>> {
    let projections = config.projection_vectors(v_max, net.mode())?;
    let orientation = config.orientation;
    let vectors = routes
        .par_iter()
        .map(|b| {
            if !b.is_feasible() {
                return Ok(None);
            }
            let intervals = projections.iter().map(|p| project_interval(net, b, p)).collect::<Result<Vec<_>>>()?;
            let orientation =
                orientation.map(|o| orientation_signature(net, b, o.cells, T::of(o.l_min_km))).transpose()?;
            Ok(Some(FeatureVector { intervals, orientation }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureSet { projections, orientation, vectors })
}
