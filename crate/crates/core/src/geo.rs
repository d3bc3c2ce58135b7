//! Coordinates, great-circle distance and a spatial index for nearest-neighbour
//! and radius queries.
//!
//! The index stores every point as a unit vector on the sphere. Chord length
//! between unit vectors is a strictly increasing function of great-circle
//! distance, so an R*-tree over the 3D embedding finds the right candidates;
//! the final ranking is always done on haversine distances so that results
//! agree exactly with a linear scan.

use rstar::primitives::GeomWithData;
use rstar::{PointDistance, RTree};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Slack added to chord-space search radii before the exact haversine filter.
/// 1e-9 on the unit sphere is about 6 mm on the ground.
const CHORD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lon: f64,
    lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() || !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidCoordinate { lon, lat });
        }
        Ok(GeoPoint { lon, lat })
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    fn unit_vector(&self) -> [f64; 3] {
        let (lon, lat) = (self.lon.to_radians(), self.lat.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let s_lat = (dlat / 2.0).sin();
    let s_lon = (dlon / 2.0).sin();
    let h = s_lat * s_lat + a.lat.to_radians().cos() * b.lat.to_radians().cos() * s_lon * s_lon;
    2.0 * EARTH_RADIUS_M * h.clamp(0.0, 1.0).sqrt().asin()
}

type Entry<I> = GeomWithData<[f64; 3], (I, GeoPoint)>;

/// Immutable point index keyed by caller-chosen ids.
///
/// Ties between equidistant entries are broken by ascending id, so results
/// are independent of insertion order.
#[derive(Debug)]
pub struct SpatialIndex<I> {
    tree: RTree<Entry<I>>,
}

impl<I> SpatialIndex<I>
where
    I: Copy + Ord,
{
    pub fn new(entries: impl IntoIterator<Item = (I, GeoPoint)>) -> Self {
        let items: Vec<Entry<I>> = entries
            .into_iter()
            .map(|(id, p)| GeomWithData::new(p.unit_vector(), (id, p)))
            .collect();
        SpatialIndex {
            tree: RTree::bulk_load(items),
        }
    }

    pub fn len(&self) -> usize {
        self.tree.size()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.size() == 0
    }

    /// Closest entry within `radius_m` of `q`, or `None`.
    pub fn nearest_within(&self, q: GeoPoint, radius_m: f64) -> Option<(I, f64)> {
        if radius_m.is_nan() || radius_m <= 0.0 {
            return None;
        }
        let qv = q.unit_vector();
        let angle = (radius_m / EARTH_RADIUS_M).min(std::f64::consts::PI);
        let chord = 2.0 * (angle / 2.0).sin() + CHORD_SLACK;
        self.tree
            .locate_within_distance(qv, chord * chord)
            .map(|e| (e.data.0, haversine_m(q, e.data.1)))
            .filter(|&(_, d)| d <= radius_m)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Up to `k` nearest entries sorted by (distance, id), skipping `exclude`.
    pub fn k_nearest(&self, q: GeoPoint, k: usize, exclude: Option<I>) -> Vec<(I, f64)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let qv = q.unit_vector();

        // Chord distance to the k-th admissible neighbour bounds the candidate set.
        let mut taken = 0;
        let mut kth_chord2 = None;
        for e in self.tree.nearest_neighbor_iter(&qv) {
            if Some(e.data.0) == exclude {
                continue;
            }
            taken += 1;
            if taken == k {
                kth_chord2 = Some(e.geom().distance_2(&qv));
                break;
            }
        }

        let mut found: Vec<(I, f64)> = match kth_chord2 {
            Some(c2) => {
                let r = c2.sqrt() + CHORD_SLACK;
                self.tree
                    .locate_within_distance(qv, r * r)
                    .filter(|e| Some(e.data.0) != exclude)
                    .map(|e| (e.data.0, haversine_m(q, e.data.1)))
                    .collect()
            }
            None => self
                .tree
                .iter()
                .filter(|e| Some(e.data.0) != exclude)
                .map(|e| (e.data.0, haversine_m(q, e.data.1)))
                .collect(),
        };
        found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        found.truncate(k);
        found
    }
}
