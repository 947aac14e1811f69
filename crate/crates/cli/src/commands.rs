//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use soilph::data::{parse_field_csv, validate_dataset, write_field_csv, ColumnSchema, FieldDataset};
use soilph::error::Error;
use soilph::eval::{evaluate, Protocol};
use soilph::experiment::{neighbor_summary_csv, neighbor_summary_text, ExperimentConfig};
use soilph::features::{
    build_design_matrix, crop_map_from, neighbor_summary_table, spec_from_str,
    CategoricalEncoding, FeatureSpec,
};
use soilph::geo::SpatialIndex;
use soilph::pipeline::TrainedPipeline;
use soilph::regress::{Hyperparameters, ModelKind};
use soilph::synth::{generate_synthetic_fields, SynthConfig};

/// Errors mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Exit 1: bad flags, bad config.
    Usage(String),
    /// Exit 2: unreadable or invalid data, schema mismatches.
    Data(String),
    /// Exit 3: I/O and other runtime failures.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            Error::Io(_) => CliError::Runtime(e.to_string()),
            Error::InvalidConfig(_)
            | Error::InvalidSpec(_)
            | Error::InvalidHyperparameter(_)
            | Error::RadiusRange { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(msg: impl fmt::Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

#[derive(Parser)]
#[command(
    name = "soilph",
    version,
    about = "Predict a field's soil pH from the pH statistics of its nearest neighbor fields",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a dataset and report rejected rows and invariant violations
    Validate(ValidateArgs),
    /// Neighbor-count/distance/pH-spread summary per radius
    Stats(StatsArgs),
    /// Export the feature matrix for a block list as CSV
    Features(FeaturesArgs),
    /// Fit a model and write a versioned model file
    Train(TrainArgs),
    /// Cross-validate a model on a feature spec
    Evaluate(EvaluateArgs),
    /// Run the full experiment designs and write report files
    Experiment(ExperimentArgs),
    /// Predict pH for fields using a trained model file
    Predict(PredictArgs),
    /// Generate a seeded synthetic dataset
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input dataset CSV (canonical columns; see `--columns` to remap)
    #[arg(long)]
    data: PathBuf,
    /// Crop-name mapping file (`name=Type` lines); bundled map by default
    #[arg(long)]
    crop_map: Option<PathBuf>,
    /// Column remapping, e.g. `field_id=id,ph=soil_ph`
    #[arg(long)]
    columns: Option<String>,
}

impl DataArgs {
    fn load(&self) -> CliResult<(FieldDataset, soilph::data::ValidationReport)> {
        let schema = match &self.columns {
            Some(s) => ColumnSchema::parse(s).map_err(|e| usage(e.to_string()))?,
            None => ColumnSchema::new(),
        };
        let crop_map = crop_map_from(self.crop_map.as_deref()).map_err(CliError::from)?;
        let file = fs::File::open(&self.data)
            .map_err(|e| CliError::Data(format!("cannot open {}: {e}", self.data.display())))?;
        parse_field_csv(file, &schema, &crop_map).map_err(CliError::from)
    }

    /// Loads and reports rejected rows on stderr; data errors if nothing
    /// parses.
    fn load_lenient(&self) -> CliResult<FieldDataset> {
        let (ds, report) = self.load()?;
        if report.rejected_count > 0 {
            eprintln!(
                "note: {} of {} rows rejected during parsing",
                report.rejected_count,
                report.rejected_count + report.accepted_count
            );
        }
        if ds.is_empty() {
            return Err(CliError::Data("no usable rows in dataset".into()));
        }
        Ok(ds)
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated radii in meters, e.g. `200,500,1000`
    #[arg(long, default_value = "100,200,300,400,500,750,1000,1500,2000")]
    radii: String,
    /// Also write the table as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpecArgs {
    /// Feature blocks: `long,lat,crop_name,crop_type,nb@R,dist@R,avg@R,min@R,max@R`
    #[arg(long)]
    blocks: String,
    /// Categorical encoding
    #[arg(long, default_value = "one-hot", value_parser = parse_encoding)]
    encoding: CategoricalEncoding,
    /// Keep only fields with neighbors at this radius (meters)
    #[arg(long)]
    restrict: Option<f64>,
}

impl SpecArgs {
    fn spec(&self) -> CliResult<FeatureSpec> {
        let mut spec =
            spec_from_str(&self.blocks, self.encoding).map_err(|e| usage(e.to_string()))?;
        if let Some(r) = self.restrict {
            spec = spec.restricted_to(r);
        }
        spec.validate().map_err(|e| usage(e.to_string()))?;
        Ok(spec)
    }
}

fn parse_encoding(s: &str) -> Result<CategoricalEncoding, String> {
    match s {
        "one-hot" => Ok(CategoricalEncoding::OneHot),
        "ordinal" => Ok(CategoricalEncoding::Ordinal),
        other => Err(format!("unknown encoding {other:?} (one-hot|ordinal)")),
    }
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    spec: SpecArgs,
    /// Output CSV (feature columns, then the pH target)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    /// Model kind: lr|lasso|dtr|rf|gbrt|svr
    #[arg(long, value_parser = parse_model_kind)]
    model: ModelKind,
    /// Hyperparameters as a JSON object or a path to one (kind-tagged);
    /// defaults otherwise
    #[arg(long)]
    hyper: Option<String>,
    /// Seed for seeded models and evaluation splits
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_model_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl ModelArgs {
    fn hyperparameters(&self) -> CliResult<Hyperparameters> {
        let hp = match &self.hyper {
            None => {
                // Default hyperparameters; seeded models funnel --seed.
                match self.model {
                    ModelKind::Rf => Hyperparameters::Rf(soilph::regress::ForestParams {
                        seed: self.seed,
                        ..Default::default()
                    }),
                    kind => Hyperparameters::default_for(kind),
                }
            }
            Some(text) => {
                let json = if Path::new(text).exists() {
                    fs::read_to_string(text).map_err(runtime)?
                } else {
                    text.clone()
                };
                let hp: Hyperparameters = serde_json::from_str(&json)
                    .map_err(|e| usage(format!("bad --hyper JSON: {e}")))?;
                if hp.kind() != self.model {
                    return Err(usage(format!(
                        "--hyper is for {} but --model is {}",
                        hp.kind(),
                        self.model
                    )));
                }
                hp
            }
        };
        hp.validate().map_err(|e| usage(e.to_string()))?;
        Ok(hp)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Output model file (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// `kfold:K` or `holdout:FRACTION`
    #[arg(long, default_value = "kfold:5")]
    protocol: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV; overrides the config's `dataset` path
    #[arg(long)]
    data: Option<PathBuf>,
    /// Crop-name mapping file
    #[arg(long)]
    crop_map: Option<PathBuf>,
    /// Restrict to these models, e.g. `lr,svr,gbrt`
    #[arg(long)]
    models: Option<String>,
    /// Override the protocol seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report files
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model file from `soilph train`
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Neighbor source dataset; defaults to `--data`
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Output CSV (`field_id,predicted_ph`)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Number of fields
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Bounding box `lon_min,lat_min,lon_max,lat_max`
    #[arg(long, default_value = "-1.65,52.0,-1.35,52.2")]
    bbox: String,
    /// Correlation length of the pH surface in meters
    #[arg(long, default_value_t = 800.0)]
    correlation_length: f64,
    #[arg(long, default_value_t = 0.25)]
    noise_sd: f64,
    #[arg(long, default_value_t = 6.5)]
    ph_base: f64,
    #[arg(long, default_value_t = 1.0)]
    ph_amplitude: f64,
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Features(args) => cmd_features(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn cmd_validate(args: ValidateArgs) -> CliResult {
    let (ds, parse_report) = args.data.load()?;
    let dataset_report = validate_dataset(&ds);

    println!("rows parsed:    {}", parse_report.accepted_count);
    println!("rows rejected:  {}", parse_report.rejected_count);
    for (row, reason) in &parse_report.rejections {
        println!("  row {row}: {reason}");
    }
    println!("records flagged: {}", dataset_report.rejected_count);
    for (row, reason) in &dataset_report.rejections {
        println!("  record {row} ({}): {reason}", ds.records[*row].field_id);
    }

    if parse_report.rejected_count > 0 || dataset_report.rejected_count > 0 {
        return Err(CliError::Data("dataset has validation findings".into()));
    }
    println!("dataset is clean ({} records)", ds.len());
    Ok(())
}

fn parse_radii(s: &str) -> CliResult<Vec<f64>> {
    let radii: Vec<f64> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>().map_err(|_| usage(format!("bad radius {p:?}"))))
        .collect::<CliResult<_>>()?;
    if radii.is_empty() {
        return Err(usage("no radii given"));
    }
    for &r in &radii {
        if !r.is_finite() || r <= 0.0 {
            return Err(usage(format!("radius must be positive, got {r}")));
        }
    }
    Ok(radii)
}

fn cmd_stats(args: StatsArgs) -> CliResult {
    let radii = parse_radii(&args.radii)?;
    let ds = args.data.load_lenient()?;
    let max_radius = radii.iter().cloned().fold(0.0, f64::max);
    let idx = SpatialIndex::build(&ds, max_radius).map_err(CliError::from)?;
    let rows = neighbor_summary_table(&ds, &idx, &radii).map_err(CliError::from)?;

    print!("{}", neighbor_summary_text(&rows));
    if let Some(path) = args.out {
        fs::write(&path, neighbor_summary_csv(&rows)).map_err(runtime)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_features(args: FeaturesArgs) -> CliResult {
    let spec = args.spec.spec()?;
    let ds = args.data.load_lenient()?;
    let max_radius = spec.all_radii().last().copied().unwrap_or(1.0);
    let idx = SpatialIndex::build(&ds, max_radius).map_err(CliError::from)?;
    let (dm, _) = build_design_matrix(&ds, &idx, &spec).map_err(CliError::from)?;

    let file = fs::File::create(&args.out).map_err(runtime)?;
    dm.write_csv(file).map_err(CliError::from)?;
    eprintln!(
        "wrote {} ({} rows x {} columns + target)",
        args.out.display(),
        dm.rows(),
        dm.cols()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let spec = args.spec.spec()?;
    let hp = args.model.hyperparameters()?;
    let ds = args.data.load_lenient()?;
    let max_radius = spec.all_radii().last().copied().unwrap_or(1.0);
    let idx = SpatialIndex::build(&ds, max_radius).map_err(CliError::from)?;

    let pipeline = TrainedPipeline::fit(&ds, &idx, spec, &hp).map_err(CliError::from)?;
    if let Some(w) = &pipeline.model.convergence_warning {
        eprintln!("warning: {w}");
    }
    fs::write(&args.out, pipeline.to_json().map_err(CliError::from)?).map_err(runtime)?;
    eprintln!(
        "trained {} on {} features; wrote {}",
        pipeline.kind(),
        pipeline.model.feature_names.len(),
        args.out.display()
    );
    Ok(())
}

fn parse_protocol(s: &str, seed: u64) -> CliResult<Protocol> {
    let (kind, value) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("bad --protocol {s:?} (kfold:K or holdout:F)")))?;
    match kind {
        "kfold" => {
            let k: usize = value.parse().map_err(|_| usage(format!("bad fold count {value:?}")))?;
            Ok(Protocol::Kfold { k, seed })
        }
        "holdout" => {
            let fraction: f64 =
                value.parse().map_err(|_| usage(format!("bad fraction {value:?}")))?;
            Ok(Protocol::Holdout { fraction, seed })
        }
        other => Err(usage(format!("unknown protocol {other:?}"))),
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let spec = args.spec.spec()?;
    let hp = args.model.hyperparameters()?;
    let protocol = parse_protocol(&args.protocol, args.model.seed)?;
    protocol.validate().map_err(|e| usage(e.to_string()))?;

    let ds = args.data.load_lenient()?;
    let max_radius = spec.all_radii().last().copied().unwrap_or(1.0);
    let idx = SpatialIndex::build(&ds, max_radius).map_err(CliError::from)?;
    let (dm, _) = build_design_matrix(&ds, &idx, &spec).map_err(CliError::from)?;
    let out = evaluate(&dm, &hp, protocol).map_err(CliError::from)?;

    println!("model:    {}", args.model.model);
    println!("features: {}", spec.label());
    println!("rows:     {} x {} columns", dm.rows(), dm.cols());
    println!("protocol: {}", protocol.describe());
    for fold in &out.folds {
        println!(
            "  fold {}: train {} / test {}  r2 {}  mae {:.4}",
            fold.fold,
            fold.train_rows,
            fold.test_rows,
            fold.r2.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            fold.mae
        );
    }
    match out.r2 {
        Some(r2) => println!("aggregate: r2 {:.4}  mae {:.4}", r2, out.mae),
        None => println!("aggregate: r2 undefined (degenerate folds)  mae {:.4}", out.mae),
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> CliResult {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| usage(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.protocol = cfg.protocol.with_seed(seed);
    }
    if let Some(models) = &args.models {
        let allowed: Vec<ModelKind> = models
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.parse().map_err(|e: Error| usage(e.to_string())))
            .collect::<CliResult<_>>()?;
        if allowed.is_empty() {
            return Err(usage("--models selected nothing"));
        }
        cfg.restrict_models(&allowed);
    }

    let data_path = args
        .data
        .clone()
        .or_else(|| cfg.dataset.clone())
        .ok_or_else(|| usage("no dataset: pass --data or set `dataset` in the config"))?;
    let data_args = DataArgs {
        data: data_path,
        crop_map: args.crop_map.clone(),
        columns: None,
    };
    let ds = data_args.load_lenient()?;

    let report = soilph::experiment::run_experiment(&cfg, &ds).map_err(CliError::from)?;

    fs::create_dir_all(&args.out).map_err(runtime)?;
    let write = |name: &str, content: String| -> CliResult {
        fs::write(args.out.join(name), content).map_err(runtime)
    };
    write("report.csv", report.report_csv())?;
    write("report.txt", report.report_text())?;
    write("neighbor_summary.csv", report.summary_csv())?;
    write("metadata.json", report.metadata_json().map_err(CliError::from)?)?;

    print!("{}", report.report_text());
    eprintln!("wrote report files to {}", args.out.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CliResult {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| CliError::Data(format!("cannot read model {}: {e}", args.model.display())))?;
    let pipeline = TrainedPipeline::from_json(&text).map_err(CliError::from)?;

    let target = args.data.load_lenient()?;
    let reference = match &args.reference {
        Some(path) => {
            let ref_args = DataArgs {
                data: path.clone(),
                crop_map: args.data.crop_map.clone(),
                columns: args.data.columns.clone(),
            };
            ref_args.load_lenient()?
        }
        None => target.clone(),
    };
    let max_radius = pipeline.spec.all_radii().last().copied().unwrap_or(1.0);
    let idx = SpatialIndex::build(&reference, max_radius).map_err(CliError::from)?;

    let report = pipeline
        .predict_dataset(&target, &reference, &idx)
        .map_err(CliError::from)?;

    let mut out = String::from("field_id,predicted_ph\n");
    for (id, ph) in &report.predictions {
        out.push_str(&format!("{id},{ph}\n"));
    }
    fs::write(&args.out, out).map_err(runtime)?;

    if !report.skipped.is_empty() {
        eprintln!(
            "note: {} fields skipped (no neighbors at a required radius)",
            report.skipped.len()
        );
    }
    if !report.unseen_categories.is_empty() {
        eprintln!(
            "note: {} fields had categorical values unseen in training",
            report.unseen_categories.len()
        );
    }
    eprintln!(
        "wrote {} predictions to {}",
        report.predictions.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let parts: Vec<f64> = args
        .bbox
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| usage(format!("bad bbox component {p:?}"))))
        .collect::<CliResult<_>>()?;
    if parts.len() != 4 {
        return Err(usage("--bbox wants lon_min,lat_min,lon_max,lat_max"));
    }
    let cfg = SynthConfig {
        n_fields: args.n,
        lon_min: parts[0],
        lat_min: parts[1],
        lon_max: parts[2],
        lat_max: parts[3],
        correlation_length_m: args.correlation_length,
        noise_sd: args.noise_sd,
        ph_base: args.ph_base,
        ph_amplitude: args.ph_amplitude,
        seed: args.seed,
        ..Default::default()
    };
    let ds = generate_synthetic_fields(&cfg).map_err(|e| usage(e.to_string()))?;
    let file = fs::File::create(&args.out).map_err(runtime)?;
    write_field_csv(&ds, file).map_err(CliError::from)?;
    eprintln!("wrote {} synthetic fields to {}", ds.len(), args.out.display());
    Ok(())
}
