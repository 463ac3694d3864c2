//! Command-line front end. [`run`] parses arguments and returns the process
//! exit code; failures print one `error kind=... message=...` line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{build_quadruple, AugMode, QuadrupleProvenance};
use crate::baselines::BaselineMethod;
use crate::color_math::{angular_error_degrees, IlluminantRGB};
use crate::error::{Error, Result};
use crate::eval::{
    cluster_robustness, compute_metrics, cross_validate, format_table, report_rows, write_csv, write_json, CvReport,
    EvalMethod, MetricsRow,
};
use crate::io_format::{
    parse_config, read_checkpoint, read_dataset, write_checkpoint, write_dataset, write_image,
    Checkpoint,
};
use crate::model::{estimate_illuminant, train, TrainConfig, TrainLog, TrainMode};
use crate::scene_synth::{stream_rng, synth_dataset_with, SensorModel, SensorParams, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "clcc", about = "Contrastive color constancy on synthetic raw scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset
    Synth(SynthArgs),
    /// Train a network on a whole dataset and save a checkpoint
    Train(TrainArgs),
    /// Cross-validate an estimator, or score a checkpoint
    Eval(EvalArgs),
    /// Dump contrastive quadruples for inspection
    Augment(AugmentArgs),
    /// Cluster per-image errors by illuminant chromaticity
    Report(ReportArgs),
    /// Describe how to bring external raw datasets into this format
    Ingest,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    scenes: usize,
    #[arg(long)]
    illums: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Scenes whose mean reflectance is flat, so gray-world is exact
    #[arg(long)]
    neutral_mean: bool,
    /// Radial shading strength in [0, 1)
    #[arg(long)]
    shading: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// baseline, clcc-wb or clcc-full
    #[arg(long)]
    mode: String,
    /// Flat key=value config; defaults are used for missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON training log
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// gray-world, white-patch, shades-of-gray[:p], gray-edge[:p], baseline, clcc-wb, clcc-full
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    csv: PathBuf,
    /// Config for learned methods
    #[arg(long)]
    config: Option<PathBuf>,
    /// Score this checkpoint on every image instead of cross-validating
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Also emit rows per illuminant cluster
    #[arg(long)]
    clusters: Option<usize>,
    /// Per-image errors as CSV, readable by `report`
    #[arg(long)]
    errors: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    data: PathBuf,
    /// full or wb
    #[arg(long)]
    mode: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of quadruples; defaults to one per image
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Per-image error CSV written by `eval --errors`
    #[arg(long)]
    errors: PathBuf,
    #[arg(long)]
    clusters: usize,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// One line of the per-image error file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub index: usize,
    pub scene_id: usize,
    pub method: String,
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub error_deg: f64,
}

#[derive(Debug, Serialize)]
struct EvalSummary<'a> {
    method: &'a str,
    seed: u64,
    folds: usize,
    rows: &'a [MetricsRow],
    train_logs: Vec<&'a TrainLog>,
}

#[derive(Debug, Serialize)]
struct AugmentRecord {
    index: usize,
    files: [String; 5],
    anchor_illuminant: [f64; 3],
    novel_illuminant: [f64; 3],
    provenance: QuadrupleProvenance,
}

const INGEST_GUIDE: &str = "\
Ingesting external raw datasets is not automated. To convert one by hand:
  1. Demosaic each raw capture to linear RGB (no gamma, no white balance),
     subtract the black level and divide by the saturation level.
  2. Store each image as a CLCCIMG1 file: the 8-byte magic, then width,
     height and channels (3) as u32 little-endian, then row-major RGB f32
     little-endian values.
  3. Measure the 24 color checker patches (mean linear RGB per patch, the
     neutral ramp in patches 18..23) and the checker's pixel rectangle.
  4. Write manifest.json with format_version 1, the sensor block, an empty
     illuminants list and one image record per file: file, scene_id,
     illuminant_id, illuminant (ground truth RGB), checker, checker_region.
  5. Check the result with `clcc eval --method gray-world --data DIR --csv out.csv`.
";

/// Entry point shared by the binary and the tests.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error kind={} message={}", e.kind(), one_line(&e.to_string()));
            1
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Augment(a) => augment_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Ingest => {
            print!("{INGEST_GUIDE}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text, TrainConfig::default())
        }
        None => Ok(TrainConfig::default()),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::default();
    cfg.scene.neutral_mean = a.neutral_mean;
    cfg.scene.shading = a.shading;
    let sensor = SensorModel::gaussian(SensorParams::default())?;
    let ds = synth_dataset_with(a.scenes, a.illums, &sensor, a.seed, &cfg)?;
    write_dataset(&a.out, &ds)?;
    println!("wrote {} images under {} illuminants to {}", ds.images.len(), ds.illuminants.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mode = TrainMode::parse(&a.mode)?;
    let config = load_config(a.config.as_deref())?;
    let data = read_dataset(&a.data)?;
    let (params, log) = train(&data.images, None, &config, mode)?;
    for e in &log.epochs {
        println!(
            "epoch {:>3} lambda {} beta {} illum {:.5} contrastive {:.5}",
            e.epoch, e.lambda, e.beta, e.illuminant_loss, e.contrastive_loss
        );
    }
    write_checkpoint(&a.out, &Checkpoint { mode, config, params })?;
    if let Some(p) = &a.log {
        write_json(p, &log)?;
    }
    println!("saved {}", a.out.display());
    Ok(())
}

fn parse_method(name: &str, config: TrainConfig) -> Result<EvalMethod> {
    match TrainMode::parse(name) {
        Ok(mode) => Ok(EvalMethod::Learned { mode, config }),
        Err(_) => BaselineMethod::parse(name).map(EvalMethod::Baseline),
    }
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let data = read_dataset(&a.data)?;
    let images = &data.images;
    let cv = match &a.checkpoint {
        Some(path) => {
            let ck = read_checkpoint(path)?;
            if let Some(m) = &a.method {
                if TrainMode::parse(m)? != ck.mode {
                    return Err(Error::domain(format!("checkpoint was trained as {}, not {m}", ck.mode.name())));
                }
            }
            let errors = images
                .iter()
                .map(|s| estimate_illuminant(&ck.params, s).map(|e| angular_error_degrees(&e, &s.illuminant)))
                .collect::<Result<Vec<_>>>()?;
            let metrics = compute_metrics(&errors)?;
            CvReport { method: ck.mode.name().to_string(), seed: a.seed, folds: Vec::new(), pooled: metrics, per_sample: errors }
        }
        None => {
            let name = a.method.as_deref().ok_or_else(|| Error::domain("--method or --checkpoint is required"))?;
            let method = parse_method(name, load_config(a.config.as_deref())?)?;
            cross_validate(images, &method, a.folds, a.seed)?
        }
    };

    let illums: Vec<IlluminantRGB> = images.iter().map(|s| s.illuminant).collect();
    let clusters = a.clusters.map(|k| cluster_robustness(&illums, &cv.per_sample, k, a.seed)).transpose()?;
    let rows = report_rows(&cv, clusters.as_ref());
    write_csv(&a.csv, &rows)?;
    if let Some(p) = &a.errors {
        let records: Vec<ErrorRecord> = images
            .iter()
            .zip(&cv.per_sample)
            .enumerate()
            .map(|(i, (s, &e))| {
                let [r, g, b] = s.illuminant.rgb();
                ErrorRecord { index: i, scene_id: s.scene_id, method: cv.method.clone(), r, g, b, error_deg: e }
            })
            .collect();
        write_records(p, &records)?;
    }
    if let Some(p) = &a.json {
        let summary = EvalSummary {
            method: &cv.method,
            seed: a.seed,
            folds: cv.folds.len(),
            rows: &rows,
            train_logs: cv.folds.iter().filter_map(|f| f.train_log.as_ref()).collect(),
        };
        write_json(p, &summary)?;
    }
    print!("{}", format_table(&rows));
    Ok(())
}

fn write_records(path: &Path, records: &[ErrorRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_records(path: &Path) -> Result<Vec<ErrorRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

fn augment_cmd(a: AugmentArgs) -> Result<()> {
    let mode = match a.mode.as_str() {
        "full" | "full-aug" => AugMode::FullAug,
        "wb" | "wb-aug" => AugMode::WbAug,
        other => return Err(Error::domain(format!("unknown augmentation mode {other:?} (expected full or wb)"))),
    };
    let data = read_dataset(&a.data)?;
    let images = &data.images;
    if images.len() < 2 {
        return Err(Error::domain("augmentation needs at least two images"));
    }
    let config = TrainConfig::default();
    let count = a.count.unwrap_or(images.len());
    fs::create_dir_all(a.out.join("quadruples")).map_err(|e| Error::io(&a.out, e))?;

    let mut records = Vec::with_capacity(count);
    for q in 0..count {
        let mut rng = stream_rng(a.seed, q as u64);
        let anchor = q % images.len();
        let mut built = None;
        for _ in 0..32 {
            let mut partner = rng.random_range(0..images.len() - 1);
            if partner >= anchor {
                partner += 1;
            }
            match build_quadruple(&images[anchor], &images[partner], mode, &config.mix, &config.perturb, &mut rng) {
                Ok(quad) => {
                    built = Some(quad);
                    break;
                }
                Err(Error::IlluminantsTooClose { .. }) | Err(Error::Domain(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let quad = built.ok_or_else(|| Error::domain(format!("no usable partner for image {anchor}")))?;
        let views = [
            ("anchor", &quad.anchor),
            ("easy_pos", &quad.easy_pos),
            ("hard_pos", &quad.hard_pos),
            ("easy_neg", &quad.easy_neg),
            ("hard_neg", &quad.hard_neg),
        ];
        let files = views.map(|(name, _)| format!("quadruples/q_{q:05}_{name}.clccimg"));
        for ((_, img), file) in views.iter().zip(&files) {
            write_image(&a.out.join(file), img)?;
        }
        records.push(AugmentRecord {
            index: q,
            files,
            anchor_illuminant: quad.anchor_illuminant.rgb(),
            novel_illuminant: quad.novel_illuminant.rgb(),
            provenance: quad.provenance,
        });
    }
    write_json(&a.out.join("quadruples.json"), &records)?;
    let fallbacks = records.iter().filter(|r| r.provenance.mode != mode).count();
    println!("wrote {count} quadruples to {} ({fallbacks} fell back to wb)", a.out.display());
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let records = read_records(&a.errors)?;
    if records.is_empty() {
        return Err(Error::domain("error file has no rows"));
    }
    let illums = records.iter().map(|r| IlluminantRGB::new([r.r, r.g, r.b])).collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = records.iter().map(|r| r.error_deg).collect();
    let report = cluster_robustness(&illums, &errors, a.clusters, a.seed)?;
    let method = &records[0].method;
    let mut rows = vec![MetricsRow::new(method, a.seed, "pooled".into(), "all".into(), &compute_metrics(&errors)?)];
    for (j, c) in report.clusters.iter().enumerate() {
        rows.push(MetricsRow::new(method, a.seed, "pooled".into(), j.to_string(), &c.metrics));
    }
    write_csv(&a.csv, &rows)?;
    print!("{}", format_table(&rows));
    for (j, c) in report.clusters.iter().enumerate() {
        println!("cluster {j}: {} images, centroid r/g {:.4} b/g {:.4}", c.members.len(), c.centroid[0], c.centroid[1]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["clcc", "frobnicate"]), 2);
        assert_eq!(run(["clcc", "synth", "--bogus"]), 2);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["clcc", "--help"]), 0);
    }

    #[test]
    fn methods_parse() {
        assert!(matches!(parse_method("clcc-full", TrainConfig::default()), Ok(EvalMethod::Learned { mode: TrainMode::ClccFull, .. })));
        assert!(matches!(parse_method("gray-edge:2", TrainConfig::default()), Ok(EvalMethod::Baseline(BaselineMethod::GrayEdge { .. }))));
        assert!(parse_method("nope", TrainConfig::default()).is_err());
    }

    #[test]
    fn one_line_flattens_whitespace() {
        assert_eq!(one_line("a\n  b\tc"), "a b c");
    }
}
