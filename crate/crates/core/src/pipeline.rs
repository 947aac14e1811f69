//! Train/predict pipelines: a feature spec, its fitted encoders, and the
//! fitted model, persisted together so prediction can rebuild exactly the
//! training-time features.
//!
//! Prediction needs a *reference* dataset to supply neighbors. Predicting a
//! file against itself reproduces in-sample features (each field is excluded
//! from its own neighborhood by id), so train-then-predict on the training
//! CSV equals the in-process fit/predict path.

use serde::{Deserialize, Serialize};

use crate::data::FieldDataset;
use crate::error::{Error, Result};
use crate::features::{
    build_design_matrix, build_prediction_matrix, FeatureSpec, FittedEncoders,
};
use crate::geo::SpatialIndex;
use crate::regress::{Hyperparameters, ModelKind, RegressionModel};

pub const PIPELINE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub spec: FeatureSpec,
    pub encoders: FittedEncoders,
    pub model: RegressionModel,
}

/// Prediction output plus everything that was skipped or degraded.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    /// (field_id, predicted pH) for every retained row, in dataset order.
    pub predictions: Vec<(String, f64)>,
    /// Fields dropped for lacking neighbors at a required radius.
    pub skipped: Vec<String>,
    /// (field_id, value) pairs whose categorical value was unseen in
    /// training (encoded as all-zeros / sentinel).
    pub unseen_categories: Vec<(String, String)>,
}

impl TrainedPipeline {
    /// Builds the design matrix for `spec` and fits `hp`'s model kind.
    pub fn fit(
        ds: &FieldDataset,
        idx: &SpatialIndex,
        spec: FeatureSpec,
        hp: &Hyperparameters,
    ) -> Result<TrainedPipeline> {
        let (dm, encoders) = build_design_matrix(ds, idx, &spec)?;
        let model = RegressionModel::fit(hp, &dm)?;
        Ok(TrainedPipeline {
            spec,
            encoders,
            model,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind
    }

    /// Predicts pH for `target_ds`, drawing neighbors from `reference_ds`.
    pub fn predict_dataset(
        &self,
        target_ds: &FieldDataset,
        reference_ds: &FieldDataset,
        reference_idx: &SpatialIndex,
    ) -> Result<PredictionReport> {
        let (x, kept, unseen) = build_prediction_matrix(
            target_ds,
            reference_ds,
            reference_idx,
            &self.spec,
            &self.encoders,
        )?;
        let values = self.model.predict(&x, &self.model.feature_names.clone())?;

        let kept_set: std::collections::HashSet<usize> = kept.iter().copied().collect();
        let predictions = kept
            .iter()
            .zip(values)
            .map(|(&row, v)| (target_ds.records[row].field_id.clone(), v))
            .collect();
        let skipped = (0..target_ds.len())
            .filter(|i| !kept_set.contains(i))
            .map(|i| target_ds.records[i].field_id.clone())
            .collect();
        let unseen_categories = unseen
            .into_iter()
            .map(|(row, v)| (target_ds.records[row].field_id.clone(), v))
            .collect();
        Ok(PredictionReport {
            predictions,
            skipped,
            unseen_categories,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct PipelineFile<'a> {
            format_version: u32,
            kind: ModelKind,
            pipeline: &'a TrainedPipeline,
        }
        Ok(serde_json::to_string_pretty(&PipelineFile {
            format_version: PIPELINE_FORMAT_VERSION,
            kind: self.model.kind,
            pipeline: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<TrainedPipeline> {
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: Option<u32>,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        match probe.format_version {
            Some(v) if v == PIPELINE_FORMAT_VERSION => {}
            Some(v) => {
                return Err(Error::ModelVersion {
                    found: v,
                    expected: PIPELINE_FORMAT_VERSION,
                })
            }
            None => return Err(Error::ModelFormat("missing format_version field".into())),
        }
        #[derive(Deserialize)]
        struct PipelineFile {
            pipeline: TrainedPipeline,
        }
        Ok(serde_json::from_str::<PipelineFile>(text)?.pipeline)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{CategoricalEncoding, FeatureBlock};
    use crate::synth::{generate_synthetic_fields, SynthConfig};

    fn setup() -> (FieldDataset, SpatialIndex) {
        let ds = generate_synthetic_fields(&SynthConfig {
            n_fields: 300,
            seed: 77,
            ..Default::default()
        })
        .unwrap();
        let idx = SpatialIndex::build(&ds, 2000.0).unwrap();
        (ds, idx)
    }

    fn spec() -> FeatureSpec {
        FeatureSpec::new(vec![
            FeatureBlock::CropName,
            FeatureBlock::PhMin(400.0),
            FeatureBlock::PhMax(400.0),
            FeatureBlock::PhAvg(400.0),
        ])
        .with_encoding(CategoricalEncoding::OneHot)
    }

    #[test]
    fn self_prediction_matches_in_process_fit_predict() {
        let (ds, idx) = setup();
        let pipeline =
            TrainedPipeline::fit(&ds, &idx, spec(), &Hyperparameters::Lr).unwrap();

        // In-process: predict on the training design matrix.
        let (dm, _) = build_design_matrix(&ds, &idx, &spec()).unwrap();
        let direct = pipeline.model.predict_design(&dm).unwrap();

        // Through the prediction path with the same file as reference.
        let report = pipeline.predict_dataset(&ds, &ds, &idx).unwrap();
        assert_eq!(report.predictions.len(), direct.len());
        for ((id, via_pipeline), (row, in_process)) in
            report.predictions.iter().zip(dm.row_fields.iter().zip(&direct))
        {
            assert_eq!(*id, ds.records[*row].field_id);
            assert_eq!(via_pipeline, in_process);
        }
        // Training retained exactly the rows with pH; everything else was
        // skipped for lacking neighbors.
        assert_eq!(report.predictions.len() + report.skipped.len(), ds.len());
    }

    #[test]
    fn pipeline_json_round_trip() {
        let (ds, idx) = setup();
        let pipeline =
            TrainedPipeline::fit(&ds, &idx, spec(), &Hyperparameters::Lr).unwrap();
        let reloaded = TrainedPipeline::from_json(&pipeline.to_json().unwrap()).unwrap();
        let a = pipeline.predict_dataset(&ds, &ds, &idx).unwrap();
        let b = reloaded.predict_dataset(&ds, &ds, &idx).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unseen_crop_names_are_reported() {
        let (ds, idx) = setup();
        let pipeline =
            TrainedPipeline::fit(&ds, &idx, spec(), &Hyperparameters::Lr).unwrap();

        let mut novel = ds.clone();
        novel.records[0].crop_name = "dragonfruit".to_string();
        novel.records[0].field_id = "NOVEL".to_string();
        let report = pipeline.predict_dataset(&novel, &ds, &idx).unwrap();
        assert!(report
            .unseen_categories
            .iter()
            .any(|(id, v)| id == "NOVEL" && v == "dragonfruit"));
    }

    #[test]
    fn version_gate_refuses_future_files() {
        let (ds, idx) = setup();
        let pipeline =
            TrainedPipeline::fit(&ds, &idx, spec(), &Hyperparameters::Lr).unwrap();
        let bumped = pipeline
            .to_json()
            .unwrap()
            .replacen("\"format_version\": 1", "\"format_version\": 7", 1);
        assert!(matches!(
            TrainedPipeline::from_json(&bumped),
            Err(Error::ModelVersion { found: 7, .. })
        ));
    }
}
