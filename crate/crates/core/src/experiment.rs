//! Experiment runner: evaluates feature sets against models over a dataset.
//!
//! Three designs are built in:
//!
//! * `per_radius` - location-only features (`long+lat+crop_name`) as the
//!   baseline, then `crop_name+min/max/avg` at each configured radius. Each
//!   spec keeps its own row set, so row counts shrink at small radii.
//! * `feature_ablation` - a ladder of feature combinations at one radius
//!   (default 400 m), every spec restricted to the same row set so scores
//!   are comparable.
//! * `radius_stacking` - cumulative `nb/dist/avg` blocks over increasing
//!   radii on the row set fixed by the smallest stacked radius.
//!
//! Reports render to a deterministic CSV and aligned text table; timing and
//! environment metadata live in a separate JSON document so report bytes
//! reproduce exactly for a given config and seed.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::FieldDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, FoldMetrics, Protocol};
use crate::features::{
    build_design_matrix, neighbor_summary_table, CategoricalEncoding, FeatureBlock, FeatureSpec,
    NeighborSummaryRow,
};
use crate::geo::SpatialIndex;
use crate::regress::{ForestParams, Hyperparameters, ModelKind};

pub const DEFAULT_RADII: [f64; 9] = [
    100.0, 200.0, 300.0, 400.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignId {
    PerRadius,
    FeatureAblation,
    RadiusStacking,
}

impl DesignId {
    pub fn as_str(&self) -> &'static str {
        match self {
            DesignId::PerRadius => "per_radius",
            DesignId::FeatureAblation => "feature_ablation",
            DesignId::RadiusStacking => "radius_stacking",
        }
    }
}

impl std::fmt::Display for DesignId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Dataset CSV; may instead be supplied programmatically or by the CLI.
    pub dataset: Option<std::path::PathBuf>,
    pub radii: Vec<f64>,
    pub designs: Vec<DesignId>,
    /// Models evaluated by the per-radius design.
    pub models: Vec<ModelKind>,
    /// Models evaluated by the ablation and stacking designs.
    pub focus_models: Vec<ModelKind>,
    pub ablation_radius: f64,
    /// Radii stacked cumulatively; rows restrict to the smallest.
    pub stack_radii: Vec<f64>,
    pub encoding: CategoricalEncoding,
    pub protocol: Protocol,
    /// Per-kind hyperparameter overrides (defaults otherwise).
    pub hyperparameters: Vec<Hyperparameters>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            radii: DEFAULT_RADII.to_vec(),
            designs: vec![
                DesignId::PerRadius,
                DesignId::FeatureAblation,
                DesignId::RadiusStacking,
            ],
            models: ModelKind::ALL.to_vec(),
            focus_models: vec![ModelKind::Lr, ModelKind::Svr, ModelKind::Gbrt],
            ablation_radius: 400.0,
            stack_radii: vec![200.0, 300.0, 400.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0],
            encoding: CategoricalEncoding::OneHot,
            protocol: Protocol::default(),
            hyperparameters: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidConfig("radii must not be empty".into()));
        }
        for &r in self.radii.iter().chain(&self.stack_radii) {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::InvalidConfig(format!("bad radius {r}")));
            }
        }
        if !self.ablation_radius.is_finite() || self.ablation_radius <= 0.0 {
            return Err(Error::InvalidConfig("ablation_radius must be > 0".into()));
        }
        if self.designs.is_empty() {
            return Err(Error::InvalidConfig("no designs selected".into()));
        }
        if self.models.is_empty() && self.focus_models.is_empty() {
            return Err(Error::InvalidConfig("no models selected".into()));
        }
        if self.designs.contains(&DesignId::RadiusStacking) && self.stack_radii.is_empty() {
            return Err(Error::InvalidConfig("stack_radii must not be empty".into()));
        }
        self.protocol.validate()?;
        for hp in &self.hyperparameters {
            hp.validate()?;
        }
        Ok(())
    }

    /// Largest radius any design will query.
    pub fn max_radius(&self) -> f64 {
        self.radii
            .iter()
            .chain(&self.stack_radii)
            .chain(std::iter::once(&self.ablation_radius))
            .cloned()
            .fold(0.0, f64::max)
    }

    /// Hyperparameters for `kind`: the override if configured, otherwise
    /// defaults with the protocol seed funneled into seeded models.
    pub fn hyperparameters_for(&self, kind: ModelKind) -> Hyperparameters {
        if let Some(hp) = self.hyperparameters.iter().find(|hp| hp.kind() == kind) {
            return hp.clone();
        }
        match kind {
            ModelKind::Rf => Hyperparameters::Rf(ForestParams {
                seed: self.protocol.seed(),
                ..ForestParams::default()
            }),
            other => Hyperparameters::default_for(other),
        }
    }

    /// Restricts both model lists, preserving configured order.
    pub fn restrict_models(&mut self, allowed: &[ModelKind]) {
        self.models.retain(|m| allowed.contains(m));
        self.focus_models.retain(|m| allowed.contains(m));
    }
}

/// One (design, feature spec, model) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub design: DesignId,
    pub features: String,
    pub model: ModelKind,
    pub rows: usize,
    /// Feature blocks before categorical expansion.
    pub blocks: usize,
    /// Numeric columns after expansion.
    pub cols: usize,
    pub r2: Option<f64>,
    pub mae: Option<f64>,
    pub folds: Vec<FoldMetrics>,
    /// Set when the cell could not be evaluated (e.g. empty design).
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub protocol: String,
    pub seed: u64,
    pub dataset_rows: usize,
    pub crate_version: String,
    pub parallel: bool,
    pub started_unix_secs: u64,
    pub total_seconds: f64,
    /// Wall time per cell, in report order.
    pub cell_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellResult>,
    pub neighbor_summary: Vec<NeighborSummaryRow>,
    pub metadata: RunMetadata,
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn fmt_radius(r: f64) -> String {
    crate::features::format_radius(r)
}

impl ExperimentReport {
    /// Deterministic per-cell CSV (no timing or environment columns).
    pub fn report_csv(&self) -> String {
        let mut out = String::from("design,features,model,rows,blocks,cols,r2,mae,error\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.design,
                c.features,
                c.model,
                c.rows,
                c.blocks,
                c.cols,
                fmt_metric(c.r2),
                fmt_metric(c.mae),
                c.error.as_deref().unwrap_or("")
            ));
        }
        out
    }

    /// Neighbor-summary CSV, one row per radius.
    pub fn summary_csv(&self) -> String {
        neighbor_summary_csv(&self.neighbor_summary)
    }

    /// Aligned text tables: the neighbor summary, then one pivot per design
    /// (rows = feature sets, columns = models, cells = R2/MAE).
    pub fn report_text(&self) -> String {
        let mut out = String::new();

        out.push_str("Neighbor summary\n");
        out.push_str(&neighbor_summary_text(&self.neighbor_summary));

        for design in [
            DesignId::PerRadius,
            DesignId::FeatureAblation,
            DesignId::RadiusStacking,
        ] {
            let cells: Vec<&CellResult> =
                self.cells.iter().filter(|c| c.design == design).collect();
            if cells.is_empty() {
                continue;
            }
            let mut models: Vec<ModelKind> = Vec::new();
            for c in &cells {
                if !models.contains(&c.model) {
                    models.push(c.model);
                }
            }
            let mut specs: Vec<(&str, usize, usize)> = Vec::new();
            for c in &cells {
                if !specs.iter().any(|(s, _, _)| *s == c.features.as_str()) {
                    specs.push((c.features.as_str(), c.rows, c.blocks));
                }
            }

            let mut header: Vec<String> = vec!["features".into(), "size".into()];
            for m in &models {
                header.push(format!("{m} R2"));
                header.push(format!("{m} MAE"));
            }
            let rows: Vec<Vec<String>> = specs
                .iter()
                .map(|(spec, rows, blocks)| {
                    let mut line = vec![spec.to_string(), format!("({rows}, {blocks})")];
                    for m in &models {
                        let cell = cells
                            .iter()
                            .find(|c| c.features == *spec && c.model == *m);
                        match cell {
                            Some(c) if c.error.is_none() => {
                                line.push(c.r2.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()));
                                line.push(c.mae.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()));
                            }
                            Some(_) => {
                                line.push("err".into());
                                line.push("err".into());
                            }
                            None => {
                                line.push("-".into());
                                line.push("-".into());
                            }
                        }
                    }
                    line
                })
                .collect();

            out.push('\n');
            out.push_str(&format!("Design: {design}\n"));
            out.push_str(&render_table(
                &header.iter().map(String::as_str).collect::<Vec<_>>(),
                &rows,
            ));
        }
        out
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metadata)?)
    }
}

/// CSV rendering of a neighbor-summary table (also used by the `stats`
/// command, so its file output matches experiment artifacts byte for byte).
pub fn neighbor_summary_csv(rows: &[NeighborSummaryRow]) -> String {
    let mut out =
        String::from("radius_m,fields_with_neighbors,mean_k,mean_dist_m,mean_ph_spread\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_radius(row.radius_m),
            row.fields_with_neighbors,
            row.mean_k.map(|v| format!("{v:.4}")).unwrap_or_default(),
            row.mean_dist_m.map(|v| format!("{v:.2}")).unwrap_or_default(),
            row.mean_ph_spread.map(|v| format!("{v:.4}")).unwrap_or_default(),
        ));
    }
    out
}

/// Aligned text rendering of a neighbor-summary table.
pub fn neighbor_summary_text(rows: &[NeighborSummaryRow]) -> String {
    render_table(
        &["radius_m", "fields", "mean_k", "mean_dist_m", "mean_spread"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    fmt_radius(r.radius_m),
                    r.fields_with_neighbors.to_string(),
                    r.mean_k.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                    r.mean_dist_m.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                    r.mean_ph_spread.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
                ]
            })
            .collect::<Vec<_>>(),
    )
}

fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let mut push_row = |cells: &[String]| {
        let line: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:>width$}", c, width = widths[i]))
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
    };
    push_row(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    for row in rows {
        push_row(row);
    }
    out
}

/// The feature specs of each design, in report order.
fn design_specs(cfg: &ExperimentConfig, design: DesignId) -> Vec<FeatureSpec> {
    let enc = cfg.encoding;
    match design {
        DesignId::PerRadius => {
            let mut specs = vec![FeatureSpec::new(vec![
                FeatureBlock::Longitude,
                FeatureBlock::Latitude,
                FeatureBlock::CropName,
            ])
            .with_encoding(enc)];
            for &r in &cfg.radii {
                specs.push(
                    FeatureSpec::new(vec![
                        FeatureBlock::CropName,
                        FeatureBlock::PhMin(r),
                        FeatureBlock::PhMax(r),
                        FeatureBlock::PhAvg(r),
                    ])
                    .with_encoding(enc),
                );
            }
            specs
        }
        DesignId::FeatureAblation => {
            let r = cfg.ablation_radius;
            let ladder: Vec<Vec<FeatureBlock>> = vec![
                vec![FeatureBlock::Longitude, FeatureBlock::Latitude, FeatureBlock::CropName],
                vec![
                    FeatureBlock::Longitude,
                    FeatureBlock::Latitude,
                    FeatureBlock::CropName,
                    FeatureBlock::PhAvg(r),
                ],
                vec![
                    FeatureBlock::NeighborCount(r),
                    FeatureBlock::DistCentroid(r),
                    FeatureBlock::PhAvg(r),
                    FeatureBlock::CropName,
                ],
                vec![
                    FeatureBlock::NeighborCount(r),
                    FeatureBlock::DistCentroid(r),
                    FeatureBlock::PhAvg(r),
                    FeatureBlock::CropType,
                ],
                vec![
                    FeatureBlock::NeighborCount(r),
                    FeatureBlock::DistCentroid(r),
                    FeatureBlock::PhMax(r),
                    FeatureBlock::PhMin(r),
                    FeatureBlock::PhAvg(r),
                ],
                vec![
                    FeatureBlock::NeighborCount(r),
                    FeatureBlock::DistCentroid(r),
                    FeatureBlock::PhMax(r),
                    FeatureBlock::PhMin(r),
                    FeatureBlock::PhAvg(r),
                    FeatureBlock::CropName,
                ],
                vec![
                    FeatureBlock::NeighborCount(r),
                    FeatureBlock::DistCentroid(r),
                    FeatureBlock::PhMax(r),
                    FeatureBlock::PhMin(r),
                    FeatureBlock::PhAvg(r),
                    FeatureBlock::CropName,
                    FeatureBlock::CropType,
                ],
            ];
            ladder
                .into_iter()
                .map(|blocks| FeatureSpec::new(blocks).with_encoding(enc).restricted_to(r))
                .collect()
        }
        DesignId::RadiusStacking => {
            let mut stack = cfg.stack_radii.clone();
            stack.sort_by(|a, b| a.partial_cmp(b).unwrap());
            stack.dedup();
            let anchor = stack[0];
            let mut blocks = vec![
                FeatureBlock::Longitude,
                FeatureBlock::Latitude,
                FeatureBlock::CropName,
            ];
            let mut specs = vec![FeatureSpec::new(blocks.clone())
                .with_encoding(enc)
                .restricted_to(anchor)];
            for &r in &stack {
                blocks.extend([
                    FeatureBlock::NeighborCount(r),
                    FeatureBlock::DistCentroid(r),
                    FeatureBlock::PhAvg(r),
                ]);
                specs.push(
                    FeatureSpec::new(blocks.clone())
                        .with_encoding(enc)
                        .restricted_to(anchor),
                );
            }
            specs
        }
    }
}

fn models_for(cfg: &ExperimentConfig, design: DesignId) -> &[ModelKind] {
    match design {
        DesignId::PerRadius => &cfg.models,
        _ => &cfg.focus_models,
    }
}

/// Runs the configured designs over a dataset.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &FieldDataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let t0 = Instant::now();

    let idx = SpatialIndex::build(ds, cfg.max_radius())?;
    let neighbor_summary = neighbor_summary_table(ds, &idx, &cfg.radii)?;

    let mut cells = Vec::new();
    let mut cell_seconds = Vec::new();
    for &design in &cfg.designs {
        let models = models_for(cfg, design);
        for spec in design_specs(cfg, design) {
            let label = spec.label();
            let built = build_design_matrix(ds, &idx, &spec);
            match built {
                Ok((dm, _encoders)) => {
                    for &model in models {
                        let hp = cfg.hyperparameters_for(model);
                        let cell_t0 = Instant::now();
                        let outcome = evaluate(&dm, &hp, cfg.protocol);
                        cell_seconds.push(cell_t0.elapsed().as_secs_f64());
                        match outcome {
                            Ok(out) => cells.push(CellResult {
                                design,
                                features: label.clone(),
                                model,
                                rows: dm.rows(),
                                blocks: spec.blocks.len(),
                                cols: dm.cols(),
                                r2: out.r2,
                                mae: Some(out.mae),
                                folds: out.folds,
                                error: None,
                            }),
                            Err(e) => cells.push(CellResult {
                                design,
                                features: label.clone(),
                                model,
                                rows: dm.rows(),
                                blocks: spec.blocks.len(),
                                cols: dm.cols(),
                                r2: None,
                                mae: None,
                                folds: Vec::new(),
                                error: Some(e.to_string()),
                            }),
                        }
                    }
                }
                Err(e) => {
                    // The whole spec failed (e.g. no rows with neighbors);
                    // record one errored cell per model to keep the report
                    // shape predictable.
                    for &model in models {
                        cell_seconds.push(0.0);
                        cells.push(CellResult {
                            design,
                            features: label.clone(),
                            model,
                            rows: 0,
                            blocks: spec.blocks.len(),
                            cols: 0,
                            r2: None,
                            mae: None,
                            folds: Vec::new(),
                            error: Some(e.to_string()),
                        });
                    }
                }
            }
        }
    }

    Ok(ExperimentReport {
        cells,
        neighbor_summary,
        metadata: RunMetadata {
            protocol: cfg.protocol.describe(),
            seed: cfg.protocol.seed(),
            dataset_rows: ds.len(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: crate::par::is_parallel(),
            started_unix_secs: started,
            total_seconds: t0.elapsed().as_secs_f64(),
            cell_seconds,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_fields, SynthConfig};

    fn small_dataset() -> FieldDataset {
        generate_synthetic_fields(&SynthConfig {
            n_fields: 250,
            seed: 5,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            radii: vec![400.0, 800.0],
            stack_radii: vec![400.0, 800.0],
            models: vec![ModelKind::Lr, ModelKind::Dtr],
            focus_models: vec![ModelKind::Lr],
            protocol: Protocol::Kfold { k: 3, seed: 42 },
            ..Default::default()
        }
    }

    #[test]
    fn per_radius_design_has_expected_cell_grid() {
        let ds = small_dataset();
        let cfg = ExperimentConfig {
            designs: vec![DesignId::PerRadius],
            ..quick_config()
        };
        let report = run_experiment(&cfg, &ds).unwrap();
        // (1 baseline + 2 radii) specs x 2 models
        assert_eq!(report.cells.len(), 6);
        assert!(report.cells.iter().all(|c| c.error.is_none()), "{report:#?}");
        assert_eq!(report.neighbor_summary.len(), 2);
    }

    #[test]
    fn ablation_rows_are_constant_across_the_ladder() {
        let ds = small_dataset();
        let cfg = ExperimentConfig {
            designs: vec![DesignId::FeatureAblation],
            ..quick_config()
        };
        let report = run_experiment(&cfg, &ds).unwrap();
        let rows: Vec<usize> = report.cells.iter().map(|c| c.rows).collect();
        assert!(rows.windows(2).all(|w| w[0] == w[1]), "{rows:?}");
        assert_eq!(report.cells.len(), 7);
    }

    #[test]
    fn stacking_rows_stay_fixed_and_blocks_grow() {
        let ds = small_dataset();
        let cfg = ExperimentConfig {
            designs: vec![DesignId::RadiusStacking],
            ..quick_config()
        };
        let report = run_experiment(&cfg, &ds).unwrap();
        let rows: Vec<usize> = report.cells.iter().map(|c| c.rows).collect();
        assert!(rows.windows(2).all(|w| w[0] == w[1]), "{rows:?}");
        let blocks: Vec<usize> = report.cells.iter().map(|c| c.blocks).collect();
        assert_eq!(blocks, vec![3, 6, 9]);
    }

    #[test]
    fn report_csv_is_deterministic_for_a_seed() {
        let ds = small_dataset();
        let cfg = quick_config();
        let a = run_experiment(&cfg, &ds).unwrap();
        let b = run_experiment(&cfg, &ds).unwrap();
        assert_eq!(a.report_csv(), b.report_csv());
        assert_eq!(a.summary_csv(), b.summary_csv());
        assert_eq!(a.report_text(), b.report_text());
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{ "radii": [300, 600], "ablation_radius": 300 }"#)
            .unwrap();
        assert_eq!(cfg.radii, vec![300.0, 600.0]);
        assert_eq!(cfg.models.len(), 6);
        assert_eq!(cfg.protocol, Protocol::Kfold { k: 5, seed: 42 });

        let bad = ExperimentConfig::from_json(r#"{ "radii": [] }"#);
        assert!(bad.is_err());
    }

    #[test]
    fn rf_seed_follows_protocol_seed() {
        let cfg = ExperimentConfig {
            protocol: Protocol::Kfold { k: 5, seed: 777 },
            ..Default::default()
        };
        let Hyperparameters::Rf(params) = cfg.hyperparameters_for(ModelKind::Rf) else {
            panic!()
        };
        assert_eq!(params.seed, 777);
    }
}
