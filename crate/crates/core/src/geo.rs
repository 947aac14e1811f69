//! Geospatial primitives: haversine distance, radius queries over field
//! locations, and neighbor centroids.
//!
//! The index is a uniform lon/lat grid sized from the maximum supported
//! query radius, so a query normally inspects a 3x3 cell neighborhood. Cell
//! spans are recomputed per query from rigorous angular bounds, which keeps
//! results exact (no false negatives) even for query points outside the data
//! bounding box or at extreme latitudes; the grid then just degrades toward
//! a full scan. Every candidate is confirmed with the exact haversine
//! distance, and `brute_force_radius_query` provides the independent oracle.
//!
//! The index is immutable once built; concurrent read-only queries are safe.

use serde::{Deserialize, Serialize};

use crate::data::FieldDataset;
use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per degree of latitude on the mean-radius sphere.
pub const METERS_PER_DEG_LAT: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Self {
        GeoPoint { lon, lat }
    }
}

/// Great-circle distance in meters between two lon/lat points.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();

    let s_lat = (dlat / 2.0).sin();
    let s_lon = (dlon / 2.0).sin();
    let h = s_lat * s_lat + lat_a.cos() * lat_b.cos() * s_lon * s_lon;
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Fields within a radius of a query center, sorted ascending by distance
/// (row handle breaks ties). The queried field itself is never included.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub neighbors: Vec<(usize, f64)>,
    pub query_center: GeoPoint,
    pub radius_m: f64,
}

impl NeighborSet {
    pub fn handles(&self) -> Vec<usize> {
        self.neighbors.iter().map(|(h, _)| *h).collect()
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// Immutable uniform-grid index over field locations.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<GeoPoint>,
    max_radius_m: f64,
    lon_min: f64,
    lat_min: f64,
    cell_w_deg: f64,
    cell_h_deg: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl SpatialIndex {
    /// Builds an index answering queries with radius in `(0, max_radius_m]`.
    pub fn build(ds: &FieldDataset, max_radius_m: f64) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !max_radius_m.is_finite() || max_radius_m <= 0.0 {
            return Err(Error::RadiusRange {
                radius_m: max_radius_m,
                reason: "max radius must be positive and finite".into(),
            });
        }

        let points: Vec<GeoPoint> = ds
            .records
            .iter()
            .map(|r| GeoPoint::new(r.longitude, r.latitude))
            .collect();

        let lon_min = points.iter().map(|p| p.lon).fold(f64::INFINITY, f64::min);
        let lon_max = points.iter().map(|p| p.lon).fold(f64::NEG_INFINITY, f64::max);
        let lat_min = points.iter().map(|p| p.lat).fold(f64::INFINITY, f64::min);
        let lat_max = points.iter().map(|p| p.lat).fold(f64::NEG_INFINITY, f64::max);

        let lon_span = (lon_max - lon_min).max(f64::EPSILON);
        let lat_span = (lat_max - lat_min).max(f64::EPSILON);

        // Cell height: a neighbor within max_radius differs in latitude by at
        // most this many degrees. Width uses the widest latitude in the box;
        // a degenerate cosine (near-polar data, near-antimeridian span) just
        // collapses the longitude axis to one column, which stays exact.
        let cell_h_deg = max_radius_m / METERS_PER_DEG_LAT;
        let max_abs_lat = lat_min.abs().max(lat_max.abs());
        let cos_floor = max_abs_lat.to_radians().cos();
        let cell_w_deg = if cos_floor < 0.01 || lon_span > 180.0 {
            lon_span
        } else {
            max_radius_m / (METERS_PER_DEG_LAT * cos_floor)
        };

        let mut nx = (lon_span / cell_w_deg).ceil().max(1.0) as usize;
        let mut ny = (lat_span / cell_h_deg).ceil().max(1.0) as usize;
        let cell_cap = (8 * points.len()).max(1024);
        while nx * ny > cell_cap {
            if nx >= ny {
                nx = nx.div_ceil(2);
            } else {
                ny = ny.div_ceil(2);
            }
        }
        let cell_w_deg = lon_span / nx as f64;
        let cell_h_deg = lat_span / ny as f64;

        let mut index = SpatialIndex {
            points,
            max_radius_m,
            lon_min,
            lat_min,
            cell_w_deg,
            cell_h_deg,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
        };
        for (i, p) in index.points.iter().enumerate() {
            let (cx, cy) = index.cell_of(*p);
            index.cells[cy * nx + cx].push(i as u32);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_radius_m(&self) -> f64 {
        self.max_radius_m
    }

    pub fn point(&self, handle: usize) -> Option<GeoPoint> {
        self.points.get(handle).copied()
    }

    fn cell_of(&self, p: GeoPoint) -> (usize, usize) {
        let cx = ((p.lon - self.lon_min) / self.cell_w_deg).floor();
        let cy = ((p.lat - self.lat_min) / self.cell_h_deg).floor();
        (
            (cx.max(0.0) as usize).min(self.nx - 1),
            (cy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    fn check_radius(&self, radius_m: f64) -> Result<()> {
        if radius_m.is_nan() || radius_m <= 0.0 || radius_m > self.max_radius_m {
            return Err(Error::RadiusRange {
                radius_m,
                reason: format!("supported range is (0, {}]", self.max_radius_m),
            });
        }
        Ok(())
    }

    /// All fields within `radius_m` of the indexed field `center_handle`,
    /// excluding the field itself.
    pub fn radius_query(&self, center_handle: usize, radius_m: f64) -> Result<NeighborSet> {
        let center = self
            .point(center_handle)
            .ok_or(Error::BadHandle(center_handle))?;
        self.check_radius(radius_m)?;
        Ok(self.scan(center, radius_m, Some(center_handle)))
    }

    /// Radius query around an arbitrary point, optionally excluding one
    /// indexed row (used when the query point corresponds to a known field).
    pub fn radius_query_point(
        &self,
        center: GeoPoint,
        radius_m: f64,
        exclude: Option<usize>,
    ) -> Result<NeighborSet> {
        self.check_radius(radius_m)?;
        Ok(self.scan(center, radius_m, exclude))
    }

    fn scan(&self, center: GeoPoint, radius_m: f64, exclude: Option<usize>) -> NeighborSet {
        // Angular reach of the radius: a neighbor's latitude differs by at
        // most theta; its longitude by at most 2*asin(sin(theta/2)/cos_bound)
        // where cos_bound is the smallest cosine of any reachable latitude.
        let theta = radius_m / EARTH_RADIUS_M;
        let dlat_deg = theta.to_degrees();
        let lat_reach = center.lat.abs() + dlat_deg;

        let span_rows = (dlat_deg / self.cell_h_deg).ceil() as usize + 1;
        let span_cols = if lat_reach >= 89.99 {
            self.nx
        } else {
            let cos_bound = lat_reach.to_radians().cos();
            let dlon_rad = 2.0 * ((theta / 2.0).sin() / cos_bound).min(1.0).asin();
            (dlon_rad.to_degrees() / self.cell_w_deg).ceil() as usize + 1
        };

        let (cx, cy) = self.cell_of(center);
        let x_lo = cx.saturating_sub(span_cols);
        let x_hi = (cx + span_cols).min(self.nx - 1);
        let y_lo = cy.saturating_sub(span_rows);
        let y_hi = (cy + span_rows).min(self.ny - 1);

        let mut neighbors = Vec::new();
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                for &h in &self.cells[y * self.nx + x] {
                    let h = h as usize;
                    if Some(h) == exclude {
                        continue;
                    }
                    let d = haversine_distance(center, self.points[h]);
                    if d <= radius_m {
                        neighbors.push((h, d));
                    }
                }
            }
        }
        neighbors.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        NeighborSet {
            neighbors,
            query_center: center,
            radius_m,
        }
    }
}

/// Exhaustive-scan oracle with the same contract as `radius_query`.
pub fn brute_force_radius_query(
    ds: &FieldDataset,
    center_handle: usize,
    radius_m: f64,
) -> Result<NeighborSet> {
    let center_rec = ds
        .records
        .get(center_handle)
        .ok_or(Error::BadHandle(center_handle))?;
    if radius_m.is_nan() || radius_m <= 0.0 {
        return Err(Error::RadiusRange {
            radius_m,
            reason: "radius must be positive".into(),
        });
    }
    let center = GeoPoint::new(center_rec.longitude, center_rec.latitude);
    let mut neighbors = Vec::new();
    for (h, rec) in ds.records.iter().enumerate() {
        if h == center_handle {
            continue;
        }
        let d = haversine_distance(center, GeoPoint::new(rec.longitude, rec.latitude));
        if d <= radius_m {
            neighbors.push((h, d));
        }
    }
    neighbors.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(NeighborSet {
        neighbors,
        query_center: center,
        radius_m,
    })
}

/// Arithmetic mean of lon/lat degrees. Adequate at field scale (a few km);
/// summation runs over sorted values so the result is exactly
/// permutation-invariant.
pub fn centroid(points: &[GeoPoint]) -> Result<GeoPoint> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut lons: Vec<f64> = points.iter().map(|p| p.lon).collect();
    let mut lats: Vec<f64> = points.iter().map(|p| p.lat).collect();
    lons.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = points.len() as f64;
    Ok(GeoPoint::new(
        lons.iter().sum::<f64>() / n,
        lats.iter().sum::<f64>() / n,
    ))
}
