//! Command-line surface: data generation, preprocessing, training,
//! cross-validation, evaluation, and Grad-CAM export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cspine::data::{
    generate_case, kfold_split, read_case, write_case, DataError, HUVolume, Manifest,
    ManifestEntry,
};
use cspine::metrics::{roc_auc, roc_csv, FoldMetrics, METRIC_NAMES};
use cspine::nn::ModelCheckpoint;
use cspine::pipeline::{
    export_gradcam, grad_cam, infer_case, run_cv, write_jsonl, PipelineError, TrainConfig,
};
use cspine::preprocess::{preprocess_case, write_pgm};

/// Errors classified by exit code: 2 usage/config, 3 data, 4 runtime.
#[derive(Debug)]
enum AppError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) => 3,
            AppError::Runtime(_) => 4,
        }
    }
    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Runtime(m) => m,
        }
    }
}

impl From<DataError> for AppError {
    fn from(e: DataError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Param(m) => AppError::Usage(m),
            PipelineError::Data(d) => AppError::Data(d.to_string()),
            other => AppError::Runtime(other.to_string()),
        }
    }
}

impl From<cspine::nn::NnError> for AppError {
    fn from(e: cspine::nn::NnError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<cspine::metrics::MetricsError> for AppError {
    fn from(e: cspine::metrics::MetricsError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

fn write_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::Runtime(format!("writing {}: {e}", path.display()))
}

/// Fully resolved run configuration; TOML file values are overridden by
/// command-line flags, and the result is echoed into the output dir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    data_dir: PathBuf,
    out_dir: PathBuf,
    folds: usize,
    cases: usize,
    positive_fraction: f64,
    slices_per_case: usize,
    volume_side: usize,
    train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            folds: 7,
            cases: 140,
            positive_fraction: 729.0 / 3666.0,
            slices_per_case: 24,
            volume_side: 64,
            train: TrainConfig::desk_scale(),
        }
    }
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model input side S.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long, env = "CSPINE_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig, AppError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| AppError::Usage(format!("reading {}: {e}", path.display())))?;
                toml::from_str(&text)
                    .map_err(|e| AppError::Usage(format!("parsing {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.train.seed = seed;
        }
        if let Some(side) = self.side {
            config.train.cnn.input_side = side;
        }
        if let Some(h) = self.hidden_units {
            config.train.hidden_units = h;
        }
        if let Some(k) = self.folds {
            config.folds = k;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(dir) = &self.data_dir {
            config.data_dir = dir.clone();
        }
        if config.folds < 2 {
            return Err(AppError::Usage(format!("need folds >= 2, got {}", config.folds)));
        }
        if !(0.0..=1.0).contains(&config.positive_fraction) {
            return Err(AppError::Usage("positive_fraction must be in [0,1]".into()));
        }
        config.train.validate().map_err(|e| AppError::Usage(e.to_string()))?;
        Ok(config)
    }
}

/// Echo the resolved config into the output dir before doing work, so
/// a rerun from the echo reproduces the outputs.
fn echo_config(config: &RunConfig) -> Result<(), AppError> {
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| write_err(&config.out_dir, e))?;
    let text = toml::to_string_pretty(config)
        .map_err(|e| AppError::Runtime(format!("serializing config: {e}")))?;
    let path = config.out_dir.join("config.toml");
    std::fs::write(&path, text).map_err(|e| write_err(&path, e))?;
    Ok(())
}

#[derive(Parser)]
#[command(name = "cspine", about = "Cervical-spine fracture detection pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset plus manifest.
    GenData(CommonArgs),
    /// Preprocess all cases and export middle-slice previews.
    Preprocess(CommonArgs),
    /// Phase 1: train the image-level CNN on the first fold's split.
    TrainCnn(CommonArgs),
    /// Phase 2: train the case-level BLSTM over a frozen CNN.
    TrainBlstm {
        #[command(flatten)]
        common: CommonArgs,
        /// CNN checkpoint from train-cnn.
        #[arg(long)]
        cnn: PathBuf,
    },
    /// Full k-fold cross-validation protocol with aggregated reports.
    RunCv(CommonArgs),
    /// Evaluate checkpoints over the whole dataset.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        cnn: PathBuf,
        #[arg(long)]
        blstm: PathBuf,
    },
    /// Export a Grad-CAM heatmap, overlay, and JSON sidecar.
    Gradcam {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        cnn: PathBuf,
        #[arg(long)]
        case_id: String,
        /// Slice index within the case.
        #[arg(long)]
        slice: usize,
    },
}

fn load_dataset(data_dir: &Path) -> Result<(Manifest, Vec<HUVolume>), AppError> {
    let manifest_path = data_dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(AppError::Data(format!(
            "no manifest at {}",
            manifest_path.display()
        )));
    }
    let manifest = Manifest::load(&manifest_path)?;
    let mut volumes = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path = data_dir.join(format!("{}.csvl", entry.case_id));
        let mut volume = read_case(&path)?;
        // cross-check file header against the manifest entry
        if volume.slices.len() != entry.n_slices || volume.case_label != entry.case_label {
            return Err(AppError::Data(format!(
                "case {} disagrees with its manifest entry",
                entry.case_id
            )));
        }
        volume.age = entry.age;
        volume.sex = entry.sex;
        volumes.push(volume);
    }
    Ok((manifest, volumes))
}

fn cmd_gen_data(config: &RunConfig) -> Result<(), AppError> {
    echo_config(config)?;
    std::fs::create_dir_all(&config.data_dir)
        .map_err(|e| write_err(&config.data_dir, e))?;
    let n_pos = (config.positive_fraction * config.cases as f64).round() as usize;
    let mut labels: Vec<bool> = (0..config.cases).map(|i| i < n_pos).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(config.train.seed));

    let mut entries = Vec::with_capacity(config.cases);
    for (i, &positive) in labels.iter().enumerate() {
        let case_seed = config.train.seed.wrapping_add(i as u64);
        let volume = generate_case(
            case_seed,
            positive,
            config.slices_per_case,
            config.volume_side,
        )?;
        write_case(&config.data_dir.join(format!("{}.csvl", volume.case_id)), &volume)?;
        entries.push(ManifestEntry {
            case_id: volume.case_id.clone(),
            n_slices: volume.slices.len(),
            case_label: volume.case_label,
            positive_slices: volume.image_labels.iter().filter(|&&y| y == 1).count(),
            seed: case_seed,
            age: volume.age,
            sex: volume.sex,
        });
    }
    let manifest = Manifest::from_entries(entries);
    manifest.save(&config.data_dir.join("manifest.json"))?;
    let stats = cspine::data::manifest_stats(&manifest)?;
    println!(
        "generated {} cases ({} positive) in {}\n{stats}",
        manifest.counts.cases,
        manifest.counts.positive_cases,
        config.data_dir.display()
    );
    Ok(())
}

fn cmd_preprocess(config: &RunConfig) -> Result<(), AppError> {
    echo_config(config)?;
    let (_, volumes) = load_dataset(&config.data_dir)?;
    let preview_dir = config.out_dir.join("preview");
    std::fs::create_dir_all(&preview_dir).map_err(|e| write_err(&preview_dir, e))?;
    let side = config.train.cnn.input_side;
    let mut fallbacks = 0usize;
    let mut slices = 0usize;
    for volume in &volumes {
        let case = preprocess_case(volume, side).map_err(PipelineError::from)?;
        fallbacks += case
            .slices
            .iter()
            .filter(|s| s.provenance.fallback_full_frame)
            .count();
        slices += case.slices.len();
        let mid = &case.slices[case.slices.len() / 2];
        for (name, ch) in ["soft", "bone", "gross"].iter().zip(&mid.channels) {
            let path = preview_dir.join(format!("{}_{name}.pgm", case.case_id));
            write_pgm(&path, ch, side, side).map_err(|e| write_err(&path, e))?;
        }
    }
    let summary = serde_json::json!({
        "cases": volumes.len(),
        "slices": slices,
        "side": side,
        "fallback_full_frame_slices": fallbacks,
    });
    let path = config.out_dir.join("preprocess_summary.json");
    std::fs::write(&path, summary.to_string()).map_err(|e| write_err(&path, e))?;
    println!("preprocessed {} cases ({slices} slices, {fallbacks} fallbacks)", volumes.len());
    Ok(())
}

/// First-fold train/validation split shared by train-cnn and train-blstm.
fn first_fold_split(
    config: &RunConfig,
    volumes: &[HUVolume],
) -> Result<(Vec<cspine::preprocess::PreprocessedCase>, Vec<cspine::preprocess::PreprocessedCase>), AppError>
{
    let labeled: Vec<(String, u8)> = volumes
        .iter()
        .map(|v| (v.case_id.clone(), v.case_label))
        .collect();
    let plan = kfold_split(&labeled, config.folds, config.train.seed)?;
    let split = &plan.folds[0];
    let side = config.train.cnn.input_side;
    let gather = |ids: &[String]| -> Result<Vec<_>, AppError> {
        ids.iter()
            .map(|id| {
                let v = volumes
                    .iter()
                    .find(|v| &v.case_id == id)
                    .expect("id from split");
                preprocess_case(v, side).map_err(|e| PipelineError::from(e).into())
            })
            .collect()
    };
    Ok((gather(&split.train)?, gather(&split.validation)?))
}

fn cmd_train_cnn(config: &RunConfig) -> Result<(), AppError> {
    echo_config(config)?;
    let (_, volumes) = load_dataset(&config.data_dir)?;
    let (train, val) = first_fold_split(config, &volumes)?;
    let (ckpt, log) =
        cspine::pipeline::train_image_classifier::<f32>(&train, &val, &config.train)?;
    ckpt.save(&config.out_dir.join("cnn.ckpt"))?;
    write_jsonl(&config.out_dir.join("cnn_log.jsonl"), &log)?;
    println!("saved {} (best epoch {})", config.out_dir.join("cnn.ckpt").display(), ckpt.meta.epoch);
    Ok(())
}

fn cmd_train_blstm(config: &RunConfig, cnn_path: &Path) -> Result<(), AppError> {
    echo_config(config)?;
    let cnn_ckpt = ModelCheckpoint::load(cnn_path)?;
    let (_, volumes) = load_dataset(&config.data_dir)?;
    let (train, val) = first_fold_split(config, &volumes)?;
    let (ckpt, log) =
        cspine::pipeline::train_case_classifier::<f32>(&cnn_ckpt, &train, &val, &config.train)?;
    ckpt.save(&config.out_dir.join("blstm.ckpt"))?;
    write_jsonl(&config.out_dir.join("blstm_log.jsonl"), &log)?;
    println!("saved {} (best epoch {})", config.out_dir.join("blstm.ckpt").display(), ckpt.meta.epoch);
    Ok(())
}

fn cmd_run_cv(config: &RunConfig) -> Result<(), AppError> {
    echo_config(config)?;
    let (_, volumes) = load_dataset(&config.data_dir)?;
    let run = run_cv::<f32>(&volumes, config.folds, &config.train)?;
    let out = &config.out_dir;
    let label_of: std::collections::HashMap<&str, u8> = volumes
        .iter()
        .map(|v| (v.case_id.as_str(), v.case_label))
        .collect();
    for fold in &run.folds {
        let f = fold.fold;
        fold.cnn_ckpt.save(&out.join(format!("fold{f}_cnn.ckpt")))?;
        fold.blstm_ckpt.save(&out.join(format!("fold{f}_blstm.ckpt")))?;
        write_jsonl(&out.join(format!("fold{f}_cnn_log.jsonl")), &fold.cnn_log)?;
        write_jsonl(&out.join(format!("fold{f}_blstm_log.jsonl")), &fold.blstm_log)?;
        let path = out.join(format!("fold{f}_predictions.json"));
        let json = serde_json::to_string_pretty(&fold.predictions)
            .map_err(|e| AppError::Runtime(e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| write_err(&path, e))?;
        // case-level ROC over the imbalanced test fold
        let scores: Vec<f64> = fold.predictions.iter().map(|p| p.score).collect();
        let truths: Vec<u8> = fold
            .predictions
            .iter()
            .map(|p| label_of[p.case_id.as_str()])
            .collect();
        let (_, points) = roc_auc(&scores, &truths)?;
        let path = out.join(format!("fold{f}_case_roc.csv"));
        std::fs::write(&path, roc_csv(&points)).map_err(|e| write_err(&path, e))?;
    }

    // one report file per level, imbalanced and balanced rows in each
    let image_text = format!(
        "{}{}",
        run.reports.image_imbalanced.to_text("imbalanced"),
        run.reports
            .image_balanced
            .to_text("balanced")
            .lines()
            .nth(1)
            .map(|l| format!("{l}\n"))
            .unwrap_or_default()
    );
    let case_text = format!(
        "{}{}",
        run.reports.case_imbalanced.to_text("imbalanced"),
        run.reports
            .case_balanced
            .to_text("balanced")
            .lines()
            .nth(1)
            .map(|l| format!("{l}\n"))
            .unwrap_or_default()
    );
    for (name, text) in [("image_report.txt", &image_text), ("case_report.txt", &case_text)] {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| write_err(&path, e))?;
    }
    let path = out.join("reports.json");
    let json = serde_json::to_string_pretty(&run.reports)
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| write_err(&path, e))?;
    println!("image-level\n{image_text}\ncase-level\n{case_text}");
    Ok(())
}

fn render_fold_metrics(metrics: &FoldMetrics) -> String {
    let mut out = String::new();
    for (name, value) in METRIC_NAMES.iter().zip(&metrics.values) {
        let cell = match value {
            Some(v) => format!("{:.2}", v * 100.0),
            None => "undef".into(),
        };
        out.push_str(&format!("{name:>6} {cell}\n"));
    }
    out
}

fn cmd_evaluate(config: &RunConfig, cnn_path: &Path, blstm_path: &Path) -> Result<(), AppError> {
    echo_config(config)?;
    let cnn_ckpt = ModelCheckpoint::load(cnn_path)?;
    let blstm_ckpt = ModelCheckpoint::load(blstm_path)?;
    let (_, volumes) = load_dataset(&config.data_dir)?;
    let mut scores = Vec::new();
    let mut truths = Vec::new();
    let mut predictions = Vec::new();
    for volume in &volumes {
        let pred = infer_case::<f32>(&cnn_ckpt, &blstm_ckpt, volume, config.train.threshold)?;
        scores.push(pred.score);
        truths.push(volume.case_label);
        predictions.push(pred);
    }
    let preds: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let cm = cspine::metrics::confusion(&preds, &truths)?;
    let bm = cspine::metrics::binary_metrics(&cm)?;
    let (auc, points) = roc_auc(&scores, &truths)?;
    let metrics = FoldMetrics::from_parts(&bm, Some(auc));

    let path = config.out_dir.join("evaluate.json");
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "confusion": cm,
        "metrics": metrics,
        "predictions": predictions,
    }))
    .map_err(|e| AppError::Runtime(e.to_string()))?;
    std::fs::write(&path, json).map_err(|e| write_err(&path, e))?;
    let path = config.out_dir.join("roc.csv");
    std::fs::write(&path, roc_csv(&points)).map_err(|e| write_err(&path, e))?;
    println!("{}", render_fold_metrics(&metrics));
    Ok(())
}

fn cmd_gradcam(
    config: &RunConfig,
    cnn_path: &Path,
    case_id: &str,
    slice_index: usize,
) -> Result<(), AppError> {
    echo_config(config)?;
    let case_path = config.data_dir.join(format!("{case_id}.csvl"));
    if !case_path.exists() {
        return Err(AppError::Data(format!("unknown case {case_id}")));
    }
    let volume = read_case(&case_path)?;
    if slice_index >= volume.slices.len() {
        return Err(AppError::Data(format!(
            "slice {slice_index} out of range (case has {})",
            volume.slices.len()
        )));
    }
    let cnn_ckpt = ModelCheckpoint::load(cnn_path)?;
    let (cnn_config, params) = cnn_ckpt.restore_cnn::<f32>()?;
    let case = preprocess_case(&volume, cnn_config.input_side).map_err(PipelineError::from)?;
    let slice = &case.slices[slice_index];
    let cam = grad_cam(&cnn_config, &params, slice)?;
    export_gradcam(
        &config.out_dir,
        case_id,
        slice_index,
        slice,
        &volume.fracture_boxes[slice_index],
        &cam,
    )?;
    println!(
        "wrote heatmap for {case_id} slice {slice_index} (argmax {:?}) to {}",
        cam.argmax,
        config.out_dir.display()
    );
    Ok(())
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenData(common) => cmd_gen_data(&common.resolve()?),
        Command::Preprocess(common) => cmd_preprocess(&common.resolve()?),
        Command::TrainCnn(common) => cmd_train_cnn(&common.resolve()?),
        Command::TrainBlstm { common, cnn } => cmd_train_blstm(&common.resolve()?, cnn),
        Command::RunCv(common) => cmd_run_cv(&common.resolve()?),
        Command::Evaluate { common, cnn, blstm } => {
            cmd_evaluate(&common.resolve()?, cnn, blstm)
        }
        Command::Gradcam { common, cnn, case_id, slice } => {
            cmd_gradcam(&common.resolve()?, cnn, case_id, *slice)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
