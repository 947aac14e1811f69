//! Neighbor-based feature engineering.
//!
//! For a field `y` and radius `r`, the usable neighbors are the fields within
//! `r` meters of `y` (excluding `y` itself) that have a known pH. Features:
//!
//! * `nb`   - usable neighbor count `k`
//! * `avg`  - mean neighbor pH
//! * `min`/`max` - extreme neighbor pH
//! * `dist` - haversine distance from `y` to the centroid of its neighbors
//!
//! A `FeatureSpec` lists blocks (the per-radius statistics plus raw
//! longitude/latitude and categorical crop name/type) and an encoding for the
//! categorical blocks. `build_design_matrix` keeps exactly the fields that
//! have a pH target and at least one usable neighbor at every radius the spec
//! requires, which is why different specs see different row counts.
//!
//! The field's own pH never reaches its feature vector: radius queries
//! exclude the query row, so the statistics are computable for unsampled
//! fields at prediction time.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{CropMap, FieldDataset};
use crate::error::{Error, Result};
use crate::geo::{centroid, haversine_distance, GeoPoint, NeighborSet, SpatialIndex};
use crate::linalg::Matrix;
use crate::par;

/// Per-radius neighbor statistics for one field. `k = 0` leaves every
/// statistic missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusFeatures {
    pub radius_m: f64,
    pub k: usize,
    pub ph_avg: Option<f64>,
    pub ph_min: Option<f64>,
    pub ph_max: Option<f64>,
    pub dist_centroid_m: Option<f64>,
}

fn stats_from_neighbors(ds: &FieldDataset, center: GeoPoint, ns: &NeighborSet) -> RadiusFeatures {
    let mut points = Vec::new();
    let mut ph_sum = 0.0;
    let mut ph_min = f64::INFINITY;
    let mut ph_max = f64::NEG_INFINITY;
    for &(h, _) in &ns.neighbors {
        let rec = &ds.records[h];
        if let Some(ph) = rec.ph {
            points.push(GeoPoint::new(rec.longitude, rec.latitude));
            ph_sum += ph;
            ph_min = ph_min.min(ph);
            ph_max = ph_max.max(ph);
        }
    }
    let k = points.len();
    if k == 0 {
        return RadiusFeatures {
            radius_m: ns.radius_m,
            k: 0,
            ph_avg: None,
            ph_min: None,
            ph_max: None,
            dist_centroid_m: None,
        };
    }
    let center_of_neighbors = centroid(&points).expect("nonempty neighbor set");
    RadiusFeatures {
        radius_m: ns.radius_m,
        k,
        ph_avg: Some(ph_sum / k as f64),
        ph_min: Some(ph_min),
        ph_max: Some(ph_max),
        dist_centroid_m: Some(haversine_distance(center, center_of_neighbors)),
    }
}

/// Neighbor statistics for an indexed field.
pub fn neighbor_stats(
    ds: &FieldDataset,
    idx: &SpatialIndex,
    field: usize,
    radius_m: f64,
) -> Result<RadiusFeatures> {
    let ns = idx.radius_query(field, radius_m)?;
    Ok(stats_from_neighbors(ds, ns.query_center, &ns))
}

/// Neighbor statistics for an arbitrary query point, optionally excluding an
/// indexed row. This is the prediction-time path for fields that are not in
/// the reference dataset.
pub fn neighbor_stats_at(
    ds: &FieldDataset,
    idx: &SpatialIndex,
    point: GeoPoint,
    exclude: Option<usize>,
    radius_m: f64,
) -> Result<RadiusFeatures> {
    let ns = idx.radius_query_point(point, radius_m, exclude)?;
    Ok(stats_from_neighbors(ds, point, &ns))
}

/// One row of the neighbor-summary table: aggregates over the fields that
/// have at least one usable neighbor at the radius. `mean_dist_m` averages
/// each field's mean distance to its usable neighbors; `mean_ph_spread`
/// averages each field's (max - min) neighbor pH.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSummaryRow {
    pub radius_m: f64,
    pub fields_with_neighbors: usize,
    pub mean_k: Option<f64>,
    pub mean_dist_m: Option<f64>,
    pub mean_ph_spread: Option<f64>,
}

/// Computes one summary row per radius. Radii are sorted ascending and
/// deduplicated.
pub fn neighbor_summary_table(
    ds: &FieldDataset,
    idx: &SpatialIndex,
    radii: &[f64],
) -> Result<Vec<NeighborSummaryRow>> {
    let mut radii: Vec<f64> = radii.to_vec();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii.dedup();
    for &r in &radii {
        if r.is_nan() || r <= 0.0 || r > idx.max_radius_m() {
            return Err(Error::RadiusRange {
                radius_m: r,
                reason: format!("supported range is (0, {}]", idx.max_radius_m()),
            });
        }
    }

    let mut rows = Vec::with_capacity(radii.len());
    for &radius in &radii {
        // (k, mean neighbor distance, pH spread) per field with k >= 1
        let per_field: Vec<Option<(usize, f64, f64)>> = par::map_indexed(ds.len(), |i| {
            let ns = idx.radius_query(i, radius).expect("indexed handle");
            let mut dist_sum = 0.0;
            let mut ph_min = f64::INFINITY;
            let mut ph_max = f64::NEG_INFINITY;
            let mut k = 0usize;
            for &(h, d) in &ns.neighbors {
                if let Some(ph) = ds.records[h].ph {
                    k += 1;
                    dist_sum += d;
                    ph_min = ph_min.min(ph);
                    ph_max = ph_max.max(ph);
                }
            }
            (k >= 1).then(|| (k, dist_sum / k as f64, ph_max - ph_min))
        });

        let with: Vec<&(usize, f64, f64)> = per_field.iter().flatten().collect();
        let n = with.len();
        rows.push(NeighborSummaryRow {
            radius_m: radius,
            fields_with_neighbors: n,
            mean_k: (n > 0).then(|| with.iter().map(|t| t.0 as f64).sum::<f64>() / n as f64),
            mean_dist_m: (n > 0).then(|| with.iter().map(|t| t.1).sum::<f64>() / n as f64),
            mean_ph_spread: (n > 0).then(|| with.iter().map(|t| t.2).sum::<f64>() / n as f64),
        });
    }
    Ok(rows)
}

/// Formats a radius for feature names: integral radii print without a
/// fractional part.
pub fn format_radius(radius_m: f64) -> String {
    if radius_m.fract() == 0.0 {
        format!("{}", radius_m as i64)
    } else {
        format!("{radius_m}")
    }
}

/// One feature block of a spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureBlock {
    Longitude,
    Latitude,
    CropName,
    CropType,
    NeighborCount(f64),
    DistCentroid(f64),
    PhAvg(f64),
    PhMin(f64),
    PhMax(f64),
}

impl FeatureBlock {
    pub fn radius(&self) -> Option<f64> {
        match self {
            FeatureBlock::NeighborCount(r)
            | FeatureBlock::DistCentroid(r)
            | FeatureBlock::PhAvg(r)
            | FeatureBlock::PhMin(r)
            | FeatureBlock::PhMax(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, FeatureBlock::CropName | FeatureBlock::CropType)
    }
}

impl std::fmt::Display for FeatureBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureBlock::Longitude => write!(f, "long"),
            FeatureBlock::Latitude => write!(f, "lat"),
            FeatureBlock::CropName => write!(f, "crop_name"),
            FeatureBlock::CropType => write!(f, "crop_type"),
            FeatureBlock::NeighborCount(r) => write!(f, "nb@{}", format_radius(*r)),
            FeatureBlock::DistCentroid(r) => write!(f, "dist@{}", format_radius(*r)),
            FeatureBlock::PhAvg(r) => write!(f, "avg@{}", format_radius(*r)),
            FeatureBlock::PhMin(r) => write!(f, "min@{}", format_radius(*r)),
            FeatureBlock::PhMax(r) => write!(f, "max@{}", format_radius(*r)),
        }
    }
}

impl std::str::FromStr for FeatureBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "long" | "longitude" => return Ok(FeatureBlock::Longitude),
            "lat" | "latitude" => return Ok(FeatureBlock::Latitude),
            "crop_name" => return Ok(FeatureBlock::CropName),
            "crop_type" => return Ok(FeatureBlock::CropType),
            _ => {}
        }
        let (kind, radius) = s
            .split_once('@')
            .ok_or_else(|| Error::InvalidSpec(format!("unknown feature block {s:?}")))?;
        let radius: f64 = radius
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("bad radius in block {s:?}")))?;
        match kind {
            "nb" => Ok(FeatureBlock::NeighborCount(radius)),
            "dist" => Ok(FeatureBlock::DistCentroid(radius)),
            "avg" => Ok(FeatureBlock::PhAvg(radius)),
            "min" => Ok(FeatureBlock::PhMin(radius)),
            "max" => Ok(FeatureBlock::PhMax(radius)),
            other => Err(Error::InvalidSpec(format!("unknown feature block kind {other:?}"))),
        }
    }
}

impl Serialize for FeatureBlock {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureBlock {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How categorical blocks expand to numeric columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategoricalEncoding {
    OneHot,
    Ordinal,
}

/// An ordered list of feature blocks plus categorical encoding.
///
/// `restrict_to_radius` additionally drops fields without usable neighbors
/// at that radius even when no block references it; experiment designs use
/// it to hold the row set constant while features vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub blocks: Vec<FeatureBlock>,
    #[serde(default = "default_encoding")]
    pub encoding: CategoricalEncoding,
    #[serde(default)]
    pub restrict_to_radius: Option<f64>,
}

fn default_encoding() -> CategoricalEncoding {
    CategoricalEncoding::OneHot
}

impl FeatureSpec {
    pub fn new(blocks: Vec<FeatureBlock>) -> Self {
        FeatureSpec {
            blocks,
            encoding: CategoricalEncoding::OneHot,
            restrict_to_radius: None,
        }
    }

    pub fn with_encoding(mut self, encoding: CategoricalEncoding) -> Self {
        self.encoding = encoding;
        self
    }

    pub fn restricted_to(mut self, radius_m: f64) -> Self {
        self.restrict_to_radius = Some(radius_m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::InvalidSpec("feature spec has no blocks".into()));
        }
        for (i, a) in self.blocks.iter().enumerate() {
            for b in &self.blocks[i + 1..] {
                if a == b {
                    return Err(Error::InvalidSpec(format!("duplicate block {a}")));
                }
            }
        }
        for r in self.all_radii() {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::RadiusRange {
                    radius_m: r,
                    reason: "radius must be positive and finite".into(),
                });
            }
        }
        Ok(())
    }

    /// Radii referenced by blocks, ascending and deduplicated.
    pub fn referenced_radii(&self) -> Vec<f64> {
        let mut radii: Vec<f64> = self.blocks.iter().filter_map(|b| b.radius()).collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup();
        radii
    }

    /// Referenced radii plus the row restriction, ascending.
    pub fn all_radii(&self) -> Vec<f64> {
        let mut radii = self.referenced_radii();
        if let Some(r) = self.restrict_to_radius {
            radii.push(r);
            radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
            radii.dedup();
        }
        radii
    }

    /// Short label used in reports, e.g. `crop_name+min@400+max@400+avg@400`.
    pub fn label(&self) -> String {
        self.blocks
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Fitted category list for one categorical block. Categories are the
/// distinct training values in lexicographic order; the scheme decides the
/// numeric expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub scheme: CategoricalEncoding,
    pub categories: Vec<String>,
}

/// Fits an encoding on training values, returning the numeric columns and
/// the reusable map.
pub fn encode_categorical(
    values: &[String],
    scheme: CategoricalEncoding,
) -> Result<(Vec<Vec<f64>>, CategoryMap)> {
    if values.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut categories: Vec<String> = values.to_vec();
    categories.sort();
    categories.dedup();
    let map = CategoryMap { scheme, categories };
    let (cols, unseen) = map.apply(values);
    debug_assert!(unseen.is_empty());
    Ok((cols, map))
}

impl CategoryMap {
    /// Expands values with the fitted categories. Unseen values become an
    /// all-zeros row (one-hot) or the sentinel -1 (ordinal) and are returned
    /// as `(row, value)` pairs for reporting.
    pub fn apply(&self, values: &[String]) -> (Vec<Vec<f64>>, Vec<(usize, String)>) {
        let mut unseen = Vec::new();
        match self.scheme {
            CategoricalEncoding::OneHot => {
                let mut cols = vec![vec![0.0; values.len()]; self.categories.len()];
                for (row, v) in values.iter().enumerate() {
                    match self.categories.binary_search(v) {
                        Ok(j) => cols[j][row] = 1.0,
                        Err(_) => unseen.push((row, v.clone())),
                    }
                }
                (cols, unseen)
            }
            CategoricalEncoding::Ordinal => {
                let mut col = vec![0.0; values.len()];
                for (row, v) in values.iter().enumerate() {
                    match self.categories.binary_search(v) {
                        Ok(j) => col[row] = j as f64,
                        Err(_) => {
                            col[row] = -1.0;
                            unseen.push((row, v.clone()));
                        }
                    }
                }
                (vec![col], unseen)
            }
        }
    }

    /// Expanded column names for a block called `base`.
    pub fn column_names(&self, base: &str) -> Vec<String> {
        match self.scheme {
            CategoricalEncoding::OneHot => self
                .categories
                .iter()
                .map(|c| format!("{base}={c}"))
                .collect(),
            CategoricalEncoding::Ordinal => vec![base.to_string()],
        }
    }
}

/// Category maps fitted while building a design matrix; reused at
/// prediction time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FittedEncoders {
    pub crop_name: Option<CategoryMap>,
    pub crop_type: Option<CategoryMap>,
}

/// Assembled numeric feature matrix for one spec: `x` has no missing values,
/// `y` is the pH target, and `row_fields` maps each row back to its dataset
/// record.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub row_fields: Vec<usize>,
    pub column_names: Vec<String>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn cols(&self) -> usize {
        self.x.cols()
    }

    /// CSV export: feature columns by name, target pH last.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        let mut header = self.column_names.join(",");
        header.push_str(",ph\n");
        sink.write_all(header.as_bytes())?;
        for r in 0..self.rows() {
            let mut line = self
                .x
                .row(r)
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            line.push(',');
            line.push_str(&self.y[r].to_string());
            line.push('\n');
            sink.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Which dataset rows satisfy a spec: pH present and at least one usable
/// neighbor at every required radius. Returns the per-row radius features
/// for retained rows.
fn collect_rows(
    ds: &FieldDataset,
    idx: &SpatialIndex,
    radii: &[f64],
    require_ph: bool,
) -> Vec<Option<Vec<RadiusFeatures>>> {
    par::map_indexed(ds.len(), |i| {
        if require_ph && ds.records[i].ph.is_none() {
            return None;
        }
        let mut feats = Vec::with_capacity(radii.len());
        for &r in radii {
            let f = neighbor_stats(ds, idx, i, r).expect("validated radius and handle");
            if f.k == 0 {
                return None;
            }
            feats.push(f);
        }
        Some(feats)
    })
}

fn lookup_radius(feats: &[RadiusFeatures], radius: f64) -> &RadiusFeatures {
    feats
        .iter()
        .find(|f| f.radius_m == radius)
        .expect("radius present in computed set")
}

/// Builds the design matrix for `spec`, fitting categorical encoders on the
/// retained rows.
pub fn build_design_matrix(
    ds: &FieldDataset,
    idx: &SpatialIndex,
    spec: &FeatureSpec,
) -> Result<(DesignMatrix, FittedEncoders)> {
    spec.validate()?;
    let radii = spec.all_radii();
    for &r in &radii {
        if r > idx.max_radius_m() {
            return Err(Error::RadiusRange {
                radius_m: r,
                reason: format!("index supports radii up to {}", idx.max_radius_m()),
            });
        }
    }

    let per_row = collect_rows(ds, idx, &radii, true);
    let row_fields: Vec<usize> = per_row
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.as_ref().map(|_| i))
        .collect();
    if row_fields.is_empty() {
        return Err(Error::EmptyDesign);
    }
    let feats: Vec<&Vec<RadiusFeatures>> = per_row.iter().flatten().collect();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut encoders = FittedEncoders::default();

    for block in &spec.blocks {
        match block {
            FeatureBlock::Longitude => {
                columns.push(row_fields.iter().map(|&i| ds.records[i].longitude).collect());
                names.push(block.to_string());
            }
            FeatureBlock::Latitude => {
                columns.push(row_fields.iter().map(|&i| ds.records[i].latitude).collect());
                names.push(block.to_string());
            }
            FeatureBlock::CropName | FeatureBlock::CropType => {
                let values: Vec<String> = row_fields
                    .iter()
                    .map(|&i| {
                        if *block == FeatureBlock::CropName {
                            ds.records[i].crop_name.clone()
                        } else {
                            ds.records[i].crop_type.to_string()
                        }
                    })
                    .collect();
                let (cols, map) = encode_categorical(&values, spec.encoding)?;
                names.extend(map.column_names(&block.to_string()));
                columns.extend(cols);
                if *block == FeatureBlock::CropName {
                    encoders.crop_name = Some(map);
                } else {
                    encoders.crop_type = Some(map);
                }
            }
            FeatureBlock::NeighborCount(r) => {
                columns.push(feats.iter().map(|f| lookup_radius(f, *r).k as f64).collect());
                names.push(block.to_string());
            }
            FeatureBlock::DistCentroid(r) => {
                columns.push(
                    feats
                        .iter()
                        .map(|f| lookup_radius(f, *r).dist_centroid_m.expect("k >= 1"))
                        .collect(),
                );
                names.push(block.to_string());
            }
            FeatureBlock::PhAvg(r) => {
                columns.push(
                    feats
                        .iter()
                        .map(|f| lookup_radius(f, *r).ph_avg.expect("k >= 1"))
                        .collect(),
                );
                names.push(block.to_string());
            }
            FeatureBlock::PhMin(r) => {
                columns.push(
                    feats
                        .iter()
                        .map(|f| lookup_radius(f, *r).ph_min.expect("k >= 1"))
                        .collect(),
                );
                names.push(block.to_string());
            }
            FeatureBlock::PhMax(r) => {
                columns.push(
                    feats
                        .iter()
                        .map(|f| lookup_radius(f, *r).ph_max.expect("k >= 1"))
                        .collect(),
                );
                names.push(block.to_string());
            }
        }
    }

    let y: Vec<f64> = row_fields
        .iter()
        .map(|&i| ds.records[i].ph.expect("required"))
        .collect();
    let x = Matrix::from_columns(&columns)?;
    Ok((
        DesignMatrix {
            x,
            y,
            row_fields,
            column_names: names,
        },
        encoders,
    ))
}

/// `(matrix, kept_rows, unseen (row, value) pairs)` from
/// `build_prediction_matrix`.
pub type PredictionMatrix = (Matrix, Vec<usize>, Vec<(usize, String)>);

/// Feature matrix for prediction: same blocks and encoders as training, rows
/// are the prediction fields that have usable neighbors (in the *reference*
/// dataset) at every required radius. pH on the prediction rows is not
/// required.
pub fn build_prediction_matrix(
    target_ds: &FieldDataset,
    reference_ds: &FieldDataset,
    reference_idx: &SpatialIndex,
    spec: &FeatureSpec,
    encoders: &FittedEncoders,
) -> Result<PredictionMatrix> {
    spec.validate()?;
    let radii = spec.all_radii();
    for &r in &radii {
        if r > reference_idx.max_radius_m() {
            return Err(Error::RadiusRange {
                radius_m: r,
                reason: format!("index supports radii up to {}", reference_idx.max_radius_m()),
            });
        }
    }

    // Fields present in the reference (same id) are excluded from their own
    // neighborhoods, matching the training-time self-exclusion.
    let ref_ids: std::collections::HashMap<&str, usize> = reference_ds
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.field_id.as_str(), i))
        .collect();

    let per_row: Vec<Option<Vec<RadiusFeatures>>> = par::map_indexed(target_ds.len(), |i| {
        let rec = &target_ds.records[i];
        let point = GeoPoint::new(rec.longitude, rec.latitude);
        let exclude = ref_ids.get(rec.field_id.as_str()).copied();
        let mut feats = Vec::with_capacity(radii.len());
        for &r in &radii {
            let f = neighbor_stats_at(reference_ds, reference_idx, point, exclude, r)
                .expect("validated radius");
            if f.k == 0 {
                return None;
            }
            feats.push(f);
        }
        Some(feats)
    });

    let kept: Vec<usize> = per_row
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.as_ref().map(|_| i))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDesign);
    }
    let feats: Vec<&Vec<RadiusFeatures>> = per_row.iter().flatten().collect();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut all_unseen: Vec<(usize, String)> = Vec::new();
    for block in &spec.blocks {
        match block {
            FeatureBlock::Longitude => {
                columns.push(kept.iter().map(|&i| target_ds.records[i].longitude).collect())
            }
            FeatureBlock::Latitude => {
                columns.push(kept.iter().map(|&i| target_ds.records[i].latitude).collect())
            }
            FeatureBlock::CropName | FeatureBlock::CropType => {
                let values: Vec<String> = kept
                    .iter()
                    .map(|&i| {
                        if *block == FeatureBlock::CropName {
                            target_ds.records[i].crop_name.clone()
                        } else {
                            target_ds.records[i].crop_type.to_string()
                        }
                    })
                    .collect();
                let map = if *block == FeatureBlock::CropName {
                    encoders.crop_name.as_ref()
                } else {
                    encoders.crop_type.as_ref()
                }
                .ok_or_else(|| {
                    Error::SchemaMismatch(format!("model has no encoder for block {block}"))
                })?;
                let (cols, unseen) = map.apply(&values);
                columns.extend(cols);
                all_unseen.extend(unseen.into_iter().map(|(row, v)| (kept[row], v)));
            }
            FeatureBlock::NeighborCount(r) => {
                columns.push(feats.iter().map(|f| lookup_radius(f, *r).k as f64).collect())
            }
            FeatureBlock::DistCentroid(r) => columns.push(
                feats
                    .iter()
                    .map(|f| lookup_radius(f, *r).dist_centroid_m.expect("k >= 1"))
                    .collect(),
            ),
            FeatureBlock::PhAvg(r) => columns.push(
                feats
                    .iter()
                    .map(|f| lookup_radius(f, *r).ph_avg.expect("k >= 1"))
                    .collect(),
            ),
            FeatureBlock::PhMin(r) => columns.push(
                feats
                    .iter()
                    .map(|f| lookup_radius(f, *r).ph_min.expect("k >= 1"))
                    .collect(),
            ),
            FeatureBlock::PhMax(r) => columns.push(
                feats
                    .iter()
                    .map(|f| lookup_radius(f, *r).ph_max.expect("k >= 1"))
                    .collect(),
            ),
        }
    }
    Ok((Matrix::from_columns(&columns)?, kept, all_unseen))
}

/// Parses a comma-separated block list, e.g. `crop_name,min@400,max@400`.
pub fn parse_block_list(s: &str) -> Result<Vec<FeatureBlock>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse())
        .collect()
}

/// Builds a validated spec from a block-list string.
pub fn spec_from_str(blocks: &str, encoding: CategoricalEncoding) -> Result<FeatureSpec> {
    let spec = FeatureSpec::new(parse_block_list(blocks)?).with_encoding(encoding);
    spec.validate()?;
    Ok(spec)
}

/// Loads a crop map from an optional path, falling back to the bundled one.
pub fn crop_map_from(path: Option<&std::path::Path>) -> Result<CropMap> {
    match path {
        Some(p) => CropMap::load(p),
        None => Ok(CropMap::bundled()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CropType, FieldRecord};
    use crate::geo::METERS_PER_DEG_LAT;

    fn record(id: &str, lon: f64, lat: f64, ph: Option<f64>) -> FieldRecord {
        FieldRecord {
            field_id: id.to_string(),
            longitude: lon,
            latitude: lat,
            crop_name: "wheat".to_string(),
            crop_type: CropType::Crops,
            ph,
            p_index: None,
            k_index: None,
            mg_index: None,
            sand_pct: None,
            clay_pct: None,
            silt_pct: None,
        }
    }

    fn meridian_dataset(phs: &[Option<f64>], step_m: f64) -> FieldDataset {
        let step = step_m / METERS_PER_DEG_LAT;
        FieldDataset::new(
            phs.iter()
                .enumerate()
                .map(|(i, ph)| record(&format!("F{i}"), 0.0, 50.0 + i as f64 * step, *ph))
                .collect(),
        )
    }

    #[test]
    fn single_neighbor_degenerate_stats() {
        let ds = meridian_dataset(&[Some(7.0), Some(6.4)], 150.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let f = neighbor_stats(&ds, &idx, 0, 200.0).unwrap();
        assert_eq!(f.k, 1);
        assert_eq!(f.ph_avg, Some(6.4));
        assert_eq!(f.ph_min, Some(6.4));
        assert_eq!(f.ph_max, Some(6.4));
        let d = f.dist_centroid_m.unwrap();
        assert!((d - 150.0).abs() < 0.5, "d = {d}");
    }

    #[test]
    fn three_neighbor_statistics() {
        // Center plus three neighbors within 500 m carrying pH 6, 7, 8.
        let ds = meridian_dataset(&[Some(5.0), Some(6.0), Some(7.0), Some(8.0)], 100.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let f = neighbor_stats(&ds, &idx, 0, 500.0).unwrap();
        assert_eq!(f.k, 3);
        assert_eq!(f.ph_avg, Some(7.0));
        assert_eq!(f.ph_min, Some(6.0));
        assert_eq!(f.ph_max, Some(8.0));
    }

    #[test]
    fn missing_ph_neighbors_are_excluded() {
        let ds = meridian_dataset(&[Some(7.0), None, Some(6.5)], 100.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let f = neighbor_stats(&ds, &idx, 0, 500.0).unwrap();
        assert_eq!(f.k, 1);
        assert_eq!(f.ph_avg, Some(6.5));
    }

    #[test]
    fn zero_neighbors_yields_missing_stats() {
        let ds = meridian_dataset(&[Some(7.0)], 100.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let f = neighbor_stats(&ds, &idx, 0, 500.0).unwrap();
        assert_eq!(f.k, 0);
        assert_eq!(f.ph_avg, None);
        assert_eq!(f.dist_centroid_m, None);
    }

    #[test]
    fn stats_match_brute_force_recomputation() {
        use crate::geo::brute_force_radius_query;
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records: Vec<FieldRecord> = (0..50)
            .map(|i| {
                record(
                    &format!("F{i}"),
                    rng.random_range(-1.55..-1.45),
                    rng.random_range(52.05..52.15),
                    Some(rng.random_range(5.0..8.5)),
                )
            })
            .collect();
        let ds = FieldDataset::new(records);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();

        for field in 0..ds.len() {
            for radius in [200.0, 700.0, 1500.0] {
                let fast = neighbor_stats(&ds, &idx, field, radius).unwrap();
                let ns = brute_force_radius_query(&ds, field, radius).unwrap();
                let phs: Vec<f64> = ns
                    .neighbors
                    .iter()
                    .filter_map(|&(h, _)| ds.records[h].ph)
                    .collect();
                assert_eq!(fast.k, phs.len());
                if phs.is_empty() {
                    assert_eq!(fast.ph_avg, None);
                    continue;
                }
                let avg = phs.iter().sum::<f64>() / phs.len() as f64;
                assert!((fast.ph_avg.unwrap() - avg).abs() < 1e-12);
                assert_eq!(fast.ph_min.unwrap(), phs.iter().cloned().fold(f64::INFINITY, f64::min));
                assert_eq!(
                    fast.ph_max.unwrap(),
                    phs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                );
                let pts: Vec<GeoPoint> = ns
                    .neighbors
                    .iter()
                    .filter(|&&(h, _)| ds.records[h].ph.is_some())
                    .map(|&(h, _)| GeoPoint::new(ds.records[h].longitude, ds.records[h].latitude))
                    .collect();
                let c = centroid(&pts).unwrap();
                let d = haversine_distance(
                    GeoPoint::new(ds.records[field].longitude, ds.records[field].latitude),
                    c,
                );
                assert!((fast.dist_centroid_m.unwrap() - d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn summary_single_field_has_no_neighbor_rows() {
        let ds = meridian_dataset(&[Some(7.0)], 100.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let rows = neighbor_summary_table(&ds, &idx, &[200.0, 500.0]).unwrap();
        assert_eq!(rows.len(), 2);
        for row in rows {
            assert_eq!(row.fields_with_neighbors, 0);
            assert_eq!(row.mean_k, None);
            assert_eq!(row.mean_dist_m, None);
            assert_eq!(row.mean_ph_spread, None);
        }
    }

    #[test]
    fn summary_matches_hand_aggregation() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let records: Vec<FieldRecord> = (0..200)
            .map(|i| {
                record(
                    &format!("F{i}"),
                    rng.random_range(-1.52..-1.48),
                    rng.random_range(52.08..52.12),
                    Some(rng.random_range(5.0..8.5)),
                )
            })
            .collect();
        let ds = FieldDataset::new(records);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let radius = 400.0;
        let rows = neighbor_summary_table(&ds, &idx, &[radius]).unwrap();

        // Independent aggregation from the brute-force oracle.
        let mut ks = Vec::new();
        let mut dists = Vec::new();
        let mut spreads = Vec::new();
        for field in 0..ds.len() {
            let ns = crate::geo::brute_force_radius_query(&ds, field, radius).unwrap();
            let usable: Vec<(f64, f64)> = ns
                .neighbors
                .iter()
                .filter_map(|&(h, d)| ds.records[h].ph.map(|ph| (d, ph)))
                .collect();
            if usable.is_empty() {
                continue;
            }
            ks.push(usable.len() as f64);
            dists.push(usable.iter().map(|(d, _)| d).sum::<f64>() / usable.len() as f64);
            let min = usable.iter().map(|(_, p)| *p).fold(f64::INFINITY, f64::min);
            let max = usable.iter().map(|(_, p)| *p).fold(f64::NEG_INFINITY, f64::max);
            spreads.push(max - min);
        }
        let n = ks.len();
        assert_eq!(rows[0].fields_with_neighbors, n);
        assert!((rows[0].mean_k.unwrap() - ks.iter().sum::<f64>() / n as f64).abs() < 1e-12);
        assert!((rows[0].mean_dist_m.unwrap() - dists.iter().sum::<f64>() / n as f64).abs() < 1e-9);
        assert!(
            (rows[0].mean_ph_spread.unwrap() - spreads.iter().sum::<f64>() / n as f64).abs() < 1e-12
        );
    }

    #[test]
    fn block_parsing_round_trips() {
        for s in ["long", "lat", "crop_name", "crop_type", "nb@400", "dist@750", "avg@1500", "min@200", "max@2000"] {
            let block: FeatureBlock = s.parse().unwrap();
            assert_eq!(block.to_string(), s);
        }
        assert!("bogus".parse::<FeatureBlock>().is_err());
        assert!("avg@xyz".parse::<FeatureBlock>().is_err());
    }

    #[test]
    fn duplicate_blocks_are_rejected() {
        let spec = FeatureSpec::new(vec![FeatureBlock::Longitude, FeatureBlock::Longitude]);
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn long_lat_design_keeps_all_complete_records() {
        let ds = meridian_dataset(&[Some(6.0); 10], 100.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let spec = FeatureSpec::new(vec![FeatureBlock::Longitude, FeatureBlock::Latitude]);
        let (dm, _) = build_design_matrix(&ds, &idx, &spec).unwrap();
        assert_eq!((dm.rows(), dm.cols()), (10, 2));
        assert_eq!(dm.column_names, vec!["long", "lat"]);
    }

    #[test]
    fn rows_without_neighbors_are_dropped() {
        // 13 clustered fields 100 m apart, 7 isolated far away: the r=400
        // spec keeps only the cluster.
        let step = 100.0 / METERS_PER_DEG_LAT;
        let mut records: Vec<FieldRecord> = (0..13)
            .map(|i| record(&format!("C{i}"), 0.0, 50.0 + i as f64 * step, Some(6.5)))
            .collect();
        for i in 0..7 {
            records.push(record(&format!("I{i}"), 1.0 + i as f64 * 0.5, 55.0, Some(7.0)));
        }
        let ds = FieldDataset::new(records);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let spec = FeatureSpec::new(vec![
            FeatureBlock::NeighborCount(400.0),
            FeatureBlock::DistCentroid(400.0),
            FeatureBlock::PhAvg(400.0),
            FeatureBlock::CropType,
        ]);
        let (dm, _) = build_design_matrix(&ds, &idx, &spec).unwrap();
        assert_eq!(dm.rows(), 13);
        assert!(dm.row_fields.iter().all(|&i| i < 13));
    }

    #[test]
    fn missing_ph_rows_are_dropped_from_design() {
        let ds = meridian_dataset(&[Some(6.0), None, Some(6.4)], 100.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let spec = FeatureSpec::new(vec![FeatureBlock::PhAvg(500.0)]);
        let (dm, _) = build_design_matrix(&ds, &idx, &spec).unwrap();
        assert_eq!(dm.rows(), 2);
        assert_eq!(dm.row_fields, vec![0, 2]);
    }

    #[test]
    fn unsupported_radius_is_rejected() {
        let ds = meridian_dataset(&[Some(6.0), Some(6.4)], 100.0);
        let idx = SpatialIndex::build(&ds, 500.0).unwrap();
        let spec = FeatureSpec::new(vec![FeatureBlock::PhAvg(800.0)]);
        assert!(matches!(
            build_design_matrix(&ds, &idx, &spec),
            Err(Error::RadiusRange { .. })
        ));
    }

    #[test]
    fn empty_design_is_an_error() {
        let ds = meridian_dataset(&[None, None], 100.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let spec = FeatureSpec::new(vec![FeatureBlock::Longitude]);
        assert!(matches!(
            build_design_matrix(&ds, &idx, &spec),
            Err(Error::EmptyDesign)
        ));
    }

    #[test]
    fn one_hot_encoding_example() {
        let values = vec!["a".to_string(), "b".to_string(), "a".to_string()];
        let (cols, map) = encode_categorical(&values, CategoricalEncoding::OneHot).unwrap();
        assert_eq!(map.categories, vec!["a", "b"]);
        assert_eq!(cols, vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
    }

    #[test]
    fn ordinal_encoding_example() {
        let values = vec!["a".to_string(), "b".to_string(), "a".to_string()];
        let (cols, _) = encode_categorical(&values, CategoricalEncoding::Ordinal).unwrap();
        assert_eq!(cols, vec![vec![0.0, 1.0, 0.0]]);
    }

    #[test]
    fn forty_distinct_names_make_forty_sorted_columns() {
        let values: Vec<String> = (0..120).map(|i| format!("crop{:02}", i % 40)).collect();
        let (cols, map) = encode_categorical(&values, CategoricalEncoding::OneHot).unwrap();
        assert_eq!(cols.len(), 40);
        let mut sorted = map.categories.clone();
        sorted.sort();
        assert_eq!(map.categories, sorted);
    }

    #[test]
    fn unseen_category_handling() {
        let map = CategoryMap {
            scheme: CategoricalEncoding::OneHot,
            categories: vec!["a".into(), "b".into()],
        };
        let (cols, unseen) = map.apply(&["c".to_string(), "a".to_string()]);
        assert_eq!(unseen, vec![(0, "c".to_string())]);
        assert_eq!(cols[0][0] + cols[1][0], 0.0);

        let map = CategoryMap {
            scheme: CategoricalEncoding::Ordinal,
            categories: vec!["a".into(), "b".into()],
        };
        let (cols, unseen) = map.apply(&["c".to_string()]);
        assert_eq!(cols[0][0], -1.0);
        assert_eq!(unseen.len(), 1);
    }

    #[test]
    fn own_ph_does_not_leak_into_features() {
        // Deleting a field from the candidate set must not change its
        // feature vector computed as a query point.
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let records: Vec<FieldRecord> = (0..60)
            .map(|i| {
                record(
                    &format!("F{i}"),
                    rng.random_range(-1.52..-1.48),
                    rng.random_range(52.08..52.12),
                    Some(rng.random_range(5.0..8.5)),
                )
            })
            .collect();
        let ds = FieldDataset::new(records);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();

        for field in [0, 17, 42] {
            let full = neighbor_stats(&ds, &idx, field, 800.0).unwrap();

            let mut reduced_records = ds.records.clone();
            let rec = reduced_records.remove(field);
            let reduced = FieldDataset::new(reduced_records);
            let reduced_idx = SpatialIndex::build(&reduced, 2000.0).unwrap();
            let point = GeoPoint::new(rec.longitude, rec.latitude);
            let alone = neighbor_stats_at(&reduced, &reduced_idx, point, None, 800.0).unwrap();

            assert_eq!(full.k, alone.k);
            assert_eq!(full.ph_avg, alone.ph_avg);
            assert_eq!(full.ph_min, alone.ph_min);
            assert_eq!(full.ph_max, alone.ph_max);
            assert_eq!(full.dist_centroid_m, alone.dist_centroid_m);
        }
    }

    #[test]
    fn neighbor_count_grows_with_radius() {
        use proptest::prelude::*;
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        proptest::proptest!(|(seed in 0u64..40, field in 0usize..60)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let records: Vec<FieldRecord> = (0..60)
                .map(|i| {
                    record(
                        &format!("F{i}"),
                        rng.random_range(-1.52..-1.48),
                        rng.random_range(52.08..52.12),
                        Some(rng.random_range(5.0..8.5)),
                    )
                })
                .collect();
            let ds = FieldDataset::new(records);
            let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
            let mut last_k = 0usize;
            for radius in [200.0, 500.0, 1000.0, 2000.0] {
                let k = neighbor_stats(&ds, &idx, field, radius).unwrap().k;
                prop_assert!(k >= last_k, "k fell from {last_k} to {k} at r{radius}");
                last_k = k;
            }
        });
    }

    #[test]
    fn design_matrix_is_deterministic() {
        let ds = meridian_dataset(&[Some(6.0), Some(6.2), Some(6.4), Some(6.6)], 120.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let spec = FeatureSpec::new(vec![
            FeatureBlock::CropName,
            FeatureBlock::PhMin(400.0),
            FeatureBlock::PhMax(400.0),
            FeatureBlock::PhAvg(400.0),
        ]);
        let (a, _) = build_design_matrix(&ds, &idx, &spec).unwrap();
        let (b, _) = build_design_matrix(&ds, &idx, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn design_csv_export_has_target_last() {
        let ds = meridian_dataset(&[Some(6.0), Some(6.2)], 120.0);
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        let spec = FeatureSpec::new(vec![FeatureBlock::Longitude, FeatureBlock::Latitude]);
        let (dm, _) = build_design_matrix(&ds, &idx, &spec).unwrap();
        let mut buf = Vec::new();
        dm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "long,lat,ph");
        assert_eq!(lines.count(), 2);
    }
}
