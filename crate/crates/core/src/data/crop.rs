//! Crop-name to crop-type mapping.
//!
//! The mapping is a flat dictionary loaded from a plain-text file of
//! `name=Type` pairs. Lookup is case-insensitive and whitespace-trimmed, and
//! every unmapped name resolves to `Unknown`, so the mapping is total.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Built-in mapping shipped with the crate; `CropMap::bundled()` loads it.
const BUNDLED_MAP: &str = include_str!("../../assets/crop_types.map");

/// Four-way crop grouping plus the fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CropType {
    Crops,
    Vegetables,
    Fruits,
    Grass,
    Unknown,
}

impl CropType {
    pub fn as_str(&self) -> &'static str {
        match self {
            CropType::Crops => "Crops",
            CropType::Vegetables => "Vegetables",
            CropType::Fruits => "Fruits",
            CropType::Grass => "Grass",
            CropType::Unknown => "Unknown",
        }
    }
}

impl std::fmt::Display for CropType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CropType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "crops" => Ok(CropType::Crops),
            "vegetables" => Ok(CropType::Vegetables),
            "fruits" => Ok(CropType::Fruits),
            "grass" => Ok(CropType::Grass),
            "unknown" => Ok(CropType::Unknown),
            other => Err(Error::Schema(format!("unknown crop type {other:?}"))),
        }
    }
}

/// Name -> type dictionary keyed by normalized (trimmed, lowercased) names.
#[derive(Debug, Clone)]
pub struct CropMap {
    entries: HashMap<String, CropType>,
}

impl CropMap {
    /// Loads the mapping bundled with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_MAP).expect("bundled crop map is well-formed")
    }

    /// Parses `name=Type` lines; `#` starts a comment, blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, ty) = line.split_once('=').ok_or_else(|| {
                Error::Schema(format!("crop map line {}: expected name=Type", lineno + 1))
            })?;
            let name = name.trim().to_ascii_lowercase();
            if name.is_empty() {
                return Err(Error::Schema(format!("crop map line {}: empty name", lineno + 1)));
            }
            entries.insert(name, ty.parse()?);
        }
        Ok(CropMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Total, deterministic lookup: one of the four types when mapped,
    /// `Unknown` otherwise.
    pub fn map(&self, crop_name: &str) -> CropType {
        let key = crop_name.trim().to_ascii_lowercase();
        self.entries.get(&key).copied().unwrap_or(CropType::Unknown)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grass_maps_to_grass() {
        assert_eq!(CropMap::bundled().map("Grass"), CropType::Grass);
    }

    #[test]
    fn lookup_trims_and_ignores_case() {
        assert_eq!(CropMap::bundled().map("  wheat "), CropType::Crops);
        assert_eq!(CropMap::bundled().map("WHEAT"), CropType::Crops);
    }

    #[test]
    fn unmapped_names_fall_back_to_unknown() {
        assert_eq!(CropMap::bundled().map("unmapped-xyz"), CropType::Unknown);
        assert_eq!(CropMap::bundled().map(""), CropType::Unknown);
    }

    #[test]
    fn mapping_is_deterministic() {
        let map = CropMap::bundled();
        for name in ["wheat", "Apple", "grass", "??", "carrot"] {
            assert_eq!(map.map(name), map.map(name));
        }
    }

    #[test]
    fn custom_map_parses_comments_and_blanks() {
        let map = CropMap::parse("# comment\n\nquinoa = Crops\nkale=Vegetables\n").unwrap();
        assert_eq!(map.map("Quinoa"), CropType::Crops);
        assert_eq!(map.map("kale"), CropType::Vegetables);
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn bad_type_name_is_an_error() {
        assert!(CropMap::parse("quinoa=Cereal").is_err());
    }
}
