//! Field-record datasets: parsing, validation, and crop-type mapping.
//!
//! A dataset is an ordered list of sampled fields. Row order is stable, so a
//! record's position (its row handle) is a valid reference throughout the
//! pipeline. Coordinates are WGS84 lon/lat degrees; numeric attributes that
//! were absent or unreadable in the source stay explicitly missing and never
//! default to zero.

mod crop;
mod csv_io;

pub use crop::{CropMap, CropType};
pub use csv_io::{parse_field_csv, write_field_csv, ColumnSchema};

use serde::{Deserialize, Serialize};

/// Coordinate-reference tag carried by every dataset.
pub const CRS_NOTE: &str = "WGS84-lonlat";

/// Texture percentages may be rounded in source data; sand+clay+silt is
/// accepted within this tolerance of 100.
pub const TEXTURE_SUM_TOLERANCE: f64 = 1.5;

/// One sampled field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub field_id: String,
    pub longitude: f64,
    pub latitude: f64,
    pub crop_name: String,
    pub crop_type: CropType,
    pub ph: Option<f64>,
    pub p_index: Option<f64>,
    pub k_index: Option<f64>,
    pub mg_index: Option<f64>,
    pub sand_pct: Option<f64>,
    pub clay_pct: Option<f64>,
    pub silt_pct: Option<f64>,
}

/// Ordered collection of field records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDataset {
    pub records: Vec<FieldRecord>,
    pub crs_note: String,
}

impl FieldDataset {
    pub fn new(records: Vec<FieldRecord>) -> Self {
        FieldDataset {
            records,
            crs_note: CRS_NOTE.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Why a row was rejected or flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    CoordRange,
    MissingRequired,
    BadNumber,
    DupId,
    TextureSum,
    PhRange,
}

impl ReasonCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReasonCode::CoordRange => "coord_range",
            ReasonCode::MissingRequired => "missing_required",
            ReasonCode::BadNumber => "bad_number",
            ReasonCode::DupId => "dup_id",
            ReasonCode::TextureSum => "texture_sum",
            ReasonCode::PhRange => "ph_range",
        }
    }
}

impl std::fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of parsing or validating a dataset. `row` indexes are 0-based
/// data-row positions (header excluded for CSV input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accepted_count: usize,
    pub rejected_count: usize,
    pub rejections: Vec<(usize, ReasonCode)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.rejected_count == 0 && self.rejections.is_empty()
    }
}

/// Checks dataset-level invariants: unique ids, texture sums within
/// tolerance, and pH within [0, 14]. Pure; the dataset is untouched.
pub fn validate_dataset(ds: &FieldDataset) -> ValidationReport {
    let mut rejections: Vec<(usize, ReasonCode)> = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for (row, rec) in ds.records.iter().enumerate() {
        if !seen.insert(rec.field_id.as_str()) {
            rejections.push((row, ReasonCode::DupId));
        }
        if let (Some(sand), Some(clay), Some(silt)) = (rec.sand_pct, rec.clay_pct, rec.silt_pct) {
            if (sand + clay + silt - 100.0).abs() > TEXTURE_SUM_TOLERANCE {
                rejections.push((row, ReasonCode::TextureSum));
            }
        }
        if let Some(ph) = rec.ph {
            if !(0.0..=14.0).contains(&ph) {
                rejections.push((row, ReasonCode::PhRange));
            }
        }
    }

    let mut flagged: Vec<usize> = rejections.iter().map(|(r, _)| *r).collect();
    flagged.sort_unstable();
    flagged.dedup();
    ValidationReport {
        accepted_count: ds.len() - flagged.len(),
        rejected_count: flagged.len(),
        rejections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> FieldRecord {
        FieldRecord {
            field_id: id.to_string(),
            longitude: -1.5,
            latitude: 52.1,
            crop_name: "wheat".to_string(),
            crop_type: CropType::Crops,
            ph: Some(6.8),
            p_index: None,
            k_index: None,
            mg_index: None,
            sand_pct: None,
            clay_pct: None,
            silt_pct: None,
        }
    }

    #[test]
    fn duplicate_ids_are_flagged() {
        let ds = FieldDataset::new(vec![record("F1"), record("F1")]);
        let report = validate_dataset(&ds);
        assert_eq!(report.rejected_count, 1);
        assert_eq!(report.rejections, vec![(1, ReasonCode::DupId)]);
        assert_eq!(report.accepted_count + report.rejected_count, ds.len());
    }

    #[test]
    fn texture_sum_within_tolerance_passes() {
        let mut rec = record("F1");
        rec.sand_pct = Some(40.0);
        rec.clay_pct = Some(30.0);
        rec.silt_pct = Some(30.0);
        let report = validate_dataset(&FieldDataset::new(vec![rec]));
        assert!(report.is_clean());
    }

    #[test]
    fn texture_sum_violation_is_flagged() {
        // 40 + 30 + 40 = 110 > 100 + 1.5
        let mut rec = record("F1");
        rec.sand_pct = Some(40.0);
        rec.clay_pct = Some(30.0);
        rec.silt_pct = Some(40.0);
        let report = validate_dataset(&FieldDataset::new(vec![rec]));
        assert_eq!(report.rejections, vec![(0, ReasonCode::TextureSum)]);
    }

    #[test]
    fn ph_out_of_range_is_flagged() {
        let mut rec = record("F1");
        rec.ph = Some(15.2);
        let report = validate_dataset(&FieldDataset::new(vec![rec]));
        assert_eq!(report.rejections, vec![(0, ReasonCode::PhRange)]);
    }

    #[test]
    fn partial_texture_is_not_checked() {
        let mut rec = record("F1");
        rec.sand_pct = Some(90.0);
        rec.clay_pct = Some(90.0);
        let report = validate_dataset(&FieldDataset::new(vec![rec]));
        assert!(report.is_clean());
    }

    #[test]
    fn validation_is_idempotent() {
        let ds = FieldDataset::new(vec![record("F1"), record("F1"), record("F2")]);
        assert_eq!(validate_dataset(&ds), validate_dataset(&ds));
    }
}
