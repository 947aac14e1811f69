//! CSV ingestion and export for field datasets.
//!
//! Input is UTF-8 CSV with a header row and `.` decimal separators. The
//! canonical columns are `field_id,longitude,latitude,crop_name,ph,p,k,mg,
//! sand,clay,silt`; a `ColumnSchema` remaps canonical names onto whatever
//! headers the source uses. Only id, longitude, and latitude are mandatory.
//!
//! Every input row either becomes a record or a rejection entry; nothing is
//! dropped silently. Unreadable cells in optional columns become missing
//! values, never zeros.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{CropMap, FieldDataset, FieldRecord, ReasonCode, ValidationReport};
use crate::error::{Error, Result};

pub const CANONICAL_COLUMNS: [&str; 11] = [
    "field_id",
    "longitude",
    "latitude",
    "crop_name",
    "ph",
    "p",
    "k",
    "mg",
    "sand",
    "clay",
    "silt",
];

/// Maps canonical column names to the headers present in a source file.
/// Unmapped canonical names default to themselves.
#[derive(Debug, Clone, Default)]
pub struct ColumnSchema {
    overrides: HashMap<String, String>,
}

impl ColumnSchema {
    pub fn new() -> Self {
        Self::default()
    }

    /// Remaps one canonical column, e.g. `with("ph", "soil_ph")`.
    pub fn with(mut self, canonical: &str, header: &str) -> Self {
        self.overrides
            .insert(canonical.to_string(), header.to_string());
        self
    }

    /// Parses `canonical=header` pairs, e.g. `ph=soil_ph,field_id=id`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut schema = ColumnSchema::new();
        for pair in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (canonical, header) = pair
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("bad column mapping {pair:?}")))?;
            let canonical = canonical.trim();
            if !CANONICAL_COLUMNS.contains(&canonical) {
                return Err(Error::Schema(format!(
                    "unknown canonical column {canonical:?}"
                )));
            }
            schema = schema.with(canonical, header.trim());
        }
        Ok(schema)
    }

    fn header_for<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.overrides
            .get(canonical)
            .map(String::as_str)
            .unwrap_or(canonical)
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_opt_f64(field: Option<&str>) -> Option<f64> {
    field.and_then(|s| s.trim().parse::<f64>().ok())
}

/// Parses a CSV stream into a dataset plus a report of rejected rows.
///
/// Rows with unreadable or out-of-range coordinates are rejected, not
/// dropped; rejects carry the 0-based data-row index and a reason code.
/// Crop types are filled from `crop_map`.
pub fn parse_field_csv<R: Read>(
    source: R,
    schema: &ColumnSchema,
    crop_map: &CropMap,
) -> Result<(FieldDataset, ValidationReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let mut col = HashMap::new();
    for canonical in CANONICAL_COLUMNS {
        if let Some(idx) = header_index(&headers, schema.header_for(canonical)) {
            col.insert(canonical, idx);
        }
    }
    for mandatory in ["field_id", "longitude", "latitude"] {
        if !col.contains_key(mandatory) {
            return Err(Error::Schema(format!(
                "missing mandatory column {:?} (header row: {:?})",
                schema.header_for(mandatory),
                headers.iter().collect::<Vec<_>>()
            )));
        }
    }

    let get = |record: &csv::StringRecord, canonical: &str| -> Option<String> {
        col.get(canonical)
            .and_then(|&i| record.get(i))
            .map(str::to_string)
    };

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut total = 0usize;

    for (row, result) in reader.records().enumerate() {
        total += 1;
        let record = result?;

        let field_id = get(&record, "field_id").unwrap_or_default();
        if field_id.is_empty() {
            rejections.push((row, ReasonCode::MissingRequired));
            continue;
        }
        let lon_raw = get(&record, "longitude").unwrap_or_default();
        let lat_raw = get(&record, "latitude").unwrap_or_default();
        let (longitude, latitude) = match (lon_raw.parse::<f64>(), lat_raw.parse::<f64>()) {
            (Ok(lon), Ok(lat)) => (lon, lat),
            _ => {
                let reason = if lon_raw.is_empty() || lat_raw.is_empty() {
                    ReasonCode::MissingRequired
                } else {
                    ReasonCode::BadNumber
                };
                rejections.push((row, reason));
                continue;
            }
        };
        if !(-180.0..=180.0).contains(&longitude) || !(-90.0..=90.0).contains(&latitude) {
            rejections.push((row, ReasonCode::CoordRange));
            continue;
        }

        let crop_name = get(&record, "crop_name").unwrap_or_default();
        records.push(FieldRecord {
            crop_type: crop_map.map(&crop_name),
            field_id,
            longitude,
            latitude,
            crop_name,
            ph: parse_opt_f64(get(&record, "ph").as_deref()),
            p_index: parse_opt_f64(get(&record, "p").as_deref()),
            k_index: parse_opt_f64(get(&record, "k").as_deref()),
            mg_index: parse_opt_f64(get(&record, "mg").as_deref()),
            sand_pct: parse_opt_f64(get(&record, "sand").as_deref()),
            clay_pct: parse_opt_f64(get(&record, "clay").as_deref()),
            silt_pct: parse_opt_f64(get(&record, "silt").as_deref()),
        });
    }

    let report = ValidationReport {
        accepted_count: total - rejections.len(),
        rejected_count: rejections.len(),
        rejections,
    };
    Ok((FieldDataset::new(records), report))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the canonical CSV schema; missing values become empty cells.
/// Output round-trips: parsing it back yields an identical dataset.
pub fn write_field_csv<W: Write>(ds: &FieldDataset, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(CANONICAL_COLUMNS)?;
    for rec in &ds.records {
        writer.write_record([
            rec.field_id.clone(),
            rec.longitude.to_string(),
            rec.latitude.to_string(),
            rec.crop_name.clone(),
            fmt_opt(rec.ph),
            fmt_opt(rec.p_index),
            fmt_opt(rec.k_index),
            fmt_opt(rec.mg_index),
            fmt_opt(rec.sand_pct),
            fmt_opt(rec.clay_pct),
            fmt_opt(rec.silt_pct),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
