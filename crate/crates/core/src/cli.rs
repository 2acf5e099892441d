//! `cfood` command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::convert::{csv_to_cfod_streaming, write_csv};
use crate::counterfactual::Method;
use crate::dataset::{load_dataset, save_dataset, FeatureDataset};
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::{
    detection_metrics, energy_score, fdbd_score, msp_score, DetectionMetrics, KnnBaseline, Verdict,
};
use crate::explain::{build_report, render_text};
use crate::head::{load_head, save_head, LinearHead};
use crate::manifest::{load_any, DatasetManifest, Space};
use crate::scorer::{Detector, ScoreConfig, ScoredInput};
use crate::synth::{generate, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_DEGENERATE: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "cfood", version, about = "Counterfactual-distance OOD detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for batch scoring (output is identical for any value)
    #[arg(long, global = true, env = "CF_OOD_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a test set and write one JSON line per input
    Score(ScoreArgs),
    /// Score ID and OOD sets and report AUROC / FPR95
    Evaluate(EvaluateArgs),
    /// Nearest like / unlike neighbour reports for selected inputs
    Explain(ExplainArgs),
    /// Generate a seeded Gaussian-cluster benchmark
    Synth(SynthArgs),
    /// Convert between CSV and CFOD
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Training set: a manifest (.json) or a CFOD binary
    #[arg(long)]
    pub train: PathBuf,
    /// Head file; defaults to the training manifest's head_path
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long, default_value = "nnce")]
    pub method: Method,
    /// Only compute counterfactuals for the k most probable other classes
    #[arg(long)]
    pub k_classes: Option<usize>,
    /// Do not divide by the distance to the training mean
    #[arg(long)]
    pub no_normalize: bool,
    /// Sum counterfactual distances instead of averaging them
    #[arg(long)]
    pub no_average: bool,
    /// Keep training rows the head misclassifies as counterfactual candidates
    #[arg(long)]
    pub no_filter: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long)]
    pub test: PathBuf,
    /// Report mean per-input scoring time over the first 100 inputs
    #[arg(long)]
    pub time: bool,
    /// Output file (JSON lines); stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// In-distribution test set
    #[arg(long)]
    pub test: PathBuf,
    /// OOD sets (repeat or comma-separate)
    #[arg(long, required = true, value_delimiter = ',')]
    pub ood: Vec<PathBuf>,
    /// Also evaluate the MSP, Energy, KNN and fDBD baselines
    #[arg(long)]
    pub baselines: bool,
    #[arg(long, default_value_t = KnnBaseline::DEFAULT_K)]
    pub knn_k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub energy_temperature: f64,
    /// Table-style CSV (percentages) in addition to the JSON report
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub time: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// Query set
    #[arg(long)]
    pub test: PathBuf,
    /// Rows of the query set to explain; all rows when omitted
    #[arg(long, value_delimiter = ',')]
    pub rows: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub k_neighbours: usize,
    /// Acceptance threshold: score >= tau is ID
    #[arg(long)]
    pub tau: f64,
    /// Only emit reports for inputs classified OOD
    #[arg(long)]
    pub flagged_only: bool,
    /// Plain-text rendering instead of JSON lines
    #[arg(long)]
    pub text: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 500)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 500)]
    pub test_count: usize,
    #[arg(long, default_value_t = 500)]
    pub ood_count: usize,
    #[arg(long, default_value_t = 500)]
    pub far_count: usize,
    /// Distance between neighbouring cluster means, in sigmas
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// .csv input converts to CFOD; anything else is read as CFOD and written as CSV
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Class count for CSV input (default: max label + 1)
    #[arg(long)]
    pub classes: Option<usize>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Validation => EXIT_VALIDATION,
        ErrorKind::Degenerate => EXIT_DEGENERATE,
    }
}

/// Parses the process arguments, runs and returns the exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    if threads == Some(0) {
        return Err(Error::Invalid("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Score(a) => cmd_score(&a, threads),
        Command::Evaluate(a) => cmd_evaluate(&a, threads),
        Command::Explain(a) => cmd_explain(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Convert(a) => cmd_convert(&a),
    }
}

struct Loaded {
    train: FeatureDataset,
    detector: Detector,
}

fn load_detector(a: &DetectorArgs) -> Result<Loaded> {
    let loaded = load_any(&a.train)?;
    let head: LinearHead = match (&a.head, loaded.head) {
        (Some(p), _) => load_head(p)?,
        (None, Some(h)) => h,
        (None, None) => {
            return Err(Error::Invalid(
                "no head given: pass --head or set head_path in the training manifest".into(),
            ))
        }
    };
    let config = ScoreConfig {
        method: a.method,
        k_classes: a.k_classes,
        normalize: !a.no_normalize,
        average: !a.no_average,
    };
    let detector = Detector::fit(&loaded.dataset, head, !a.no_filter, config)?;
    Ok(Loaded {
        train: loaded.dataset,
        detector,
    })
}

fn load_queries(path: &Path, detector: &Detector) -> Result<FeatureDataset> {
    let ds = load_any(path)?.dataset;
    if ds.dim() != detector.head.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} has dimension {}, the head expects {}",
            path.display(),
            ds.dim(),
            detector.head.dim()
        )));
    }
    Ok(ds)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn write_all(out: &mut dyn Write, path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let name = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    out.write_all(bytes).map_err(|e| Error::io(&name, e))
}

/// Mean wall-clock milliseconds to score one input, over the first 100 rows,
/// on the calling thread.
pub fn time_per_input(detector: &Detector, ds: &FeatureDataset) -> Result<(f64, usize)> {
    let n = ds.rows().min(100);
    let rows: Vec<(Vec<f64>, Option<Vec<f64>>)> = (0..n)
        .map(|i| {
            (
                ds.row_f64(i),
                ds.logits_row(i).map(|l| l.iter().map(|&v| v as f64).collect()),
            )
        })
        .collect();
    let start = Instant::now();
    for (z, logits) in &rows {
        detector.score(z, logits.as_deref())?;
    }
    Ok((start.elapsed().as_secs_f64() * 1e3 / n as f64, n))
}

fn report_time(detector: &Detector, ds: &FeatureDataset) -> Result<()> {
    let (ms, n) = time_per_input(detector, ds)?;
    eprintln!("avg time per input: {ms:.3} ms over {n} inputs");
    Ok(())
}

pub fn cmd_score(a: &ScoreArgs, threads: Option<usize>) -> Result<()> {
    let Loaded { detector, .. } = load_detector(&a.detector)?;
    let test = load_queries(&a.test, &detector)?;
    let scored = detector.score_batch(&test, threads)?;
    if a.time {
        report_time(&detector, &test)?;
    }
    let mut text = String::new();
    for s in &scored {
        text.push_str(&serde_json::to_string(s).expect("score record serialises"));
        text.push('\n');
    }
    let mut out = open_out(a.out.as_deref())?;
    write_all(&mut *out, a.out.as_deref(), text.as_bytes())?;
    out.flush().map_err(|e| Error::io("<output>", e))
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetResult {
    pub dataset: String,
    #[serde(flatten)]
    pub metrics: DetectionMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct AverageMetrics {
    pub auroc: f64,
    pub fpr95: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectorResult {
    pub detector: String,
    pub per_dataset: Vec<DatasetResult>,
    pub average: AverageMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub id_dataset: String,
    pub id_count: usize,
    pub config: ScoreConfig,
    pub detectors: Vec<DetectorResult>,
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn scores_of(scored: &[ScoredInput]) -> Vec<f64> {
    scored.iter().map(|s| s.score).collect()
}

fn row_logits(ds: &FeatureDataset, head: &LinearHead, i: usize) -> Vec<f64> {
    match ds.logits_row(i) {
        Some(l) => l.iter().map(|&v| v as f64).collect(),
        None => head.logits_unchecked(ds.row(i)),
    }
}

type BaselineFn<'a> = Box<dyn Fn(&FeatureDataset, usize) -> Result<f64> + 'a>;

fn per_row(ds: &FeatureDataset, f: &BaselineFn<'_>) -> Result<Vec<f64>> {
    (0..ds.rows()).map(|i| f(ds, i).map_err(|e| e.at_row(i))).collect()
}

fn summarise(detector: String, id: &[f64], oods: &[(String, Vec<f64>)]) -> Result<DetectorResult> {
    let mut per_dataset = Vec::with_capacity(oods.len());
    for (name, scores) in oods {
        per_dataset.push(DatasetResult {
            dataset: name.clone(),
            metrics: detection_metrics(id, scores)?,
        });
    }
    let n = per_dataset.len() as f64;
    let average = AverageMetrics {
        auroc: per_dataset.iter().map(|r| r.metrics.auroc).sum::<f64>() / n,
        fpr95: per_dataset.iter().map(|r| r.metrics.fpr95).sum::<f64>() / n,
    };
    Ok(DetectorResult {
        detector,
        per_dataset,
        average,
    })
}

pub fn evaluate(a: &EvaluateArgs, threads: Option<usize>) -> Result<EvaluationReport> {
    let Loaded { train, detector } = load_detector(&a.detector)?;
    let id = load_queries(&a.test, &detector)?;
    let oods: Vec<(String, FeatureDataset)> = a
        .ood
        .iter()
        .map(|p| Ok((dataset_name(p), load_queries(p, &detector)?)))
        .collect::<Result<_>>()?;

    if a.time {
        report_time(&detector, &id)?;
    }
    let cf_name = format!("cf-{}", detector.config.method);
    let id_scores = scores_of(&detector.score_batch(&id, threads)?);
    let ood_scores: Vec<(String, Vec<f64>)> = oods
        .iter()
        .map(|(n, ds)| Ok((n.clone(), scores_of(&detector.score_batch(ds, threads)?))))
        .collect::<Result<_>>()?;
    let mut detectors = vec![summarise(cf_name, &id_scores, &ood_scores)?];

    if a.baselines {
        let head = &detector.head;
        let stats = &detector.stats;
        let knn = KnnBaseline::fit(&train, a.knn_k)?;
        let t = a.energy_temperature;
        let baselines: Vec<(&str, BaselineFn<'_>)> = vec![
            ("msp", Box::new(|ds: &FeatureDataset, i| msp_score(&row_logits(ds, head, i)))),
            ("energy", Box::new(move |ds: &FeatureDataset, i| energy_score(&row_logits(ds, head, i), t))),
            ("knn", Box::new(|ds: &FeatureDataset, i| knn.score(&ds.row_f64(i)))),
            ("fdbd", Box::new(|ds: &FeatureDataset, i| fdbd_score(head, stats, &ds.row_f64(i)))),
        ];
        for (name, f) in &baselines {
            let id_s = per_row(&id, f)?;
            let ood_s: Vec<(String, Vec<f64>)> = oods
                .iter()
                .map(|(n, ds)| Ok((n.clone(), per_row(ds, f)?)))
                .collect::<Result<_>>()?;
            detectors.push(summarise(name.to_string(), &id_s, &ood_s)?);
        }
    }

    Ok(EvaluationReport {
        id_dataset: dataset_name(&a.test),
        id_count: id.rows(),
        config: detector.config,
        detectors,
    })
}

/// Table layout: one row per detector, FPR95 / AUROC pairs per OOD set and
/// their average, in percent.
pub fn render_table_csv(report: &EvaluationReport) -> String {
    let mut out = String::from("method");
    if let Some(first) = report.detectors.first() {
        for r in &first.per_dataset {
            out.push_str(&format!(",{0} FPR95,{0} AUROC", r.dataset));
        }
    }
    out.push_str(",Average FPR95,Average AUROC\n");
    for d in &report.detectors {
        out.push_str(&d.detector);
        for r in &d.per_dataset {
            out.push_str(&format!(",{:.2},{:.2}", 100.0 * r.metrics.fpr95, 100.0 * r.metrics.auroc));
        }
        out.push_str(&format!(",{:.2},{:.2}\n", 100.0 * d.average.fpr95, 100.0 * d.average.auroc));
    }
    out
}

pub fn cmd_evaluate(a: &EvaluateArgs, threads: Option<usize>) -> Result<()> {
    let report = evaluate(a, threads)?;
    if let Some(p) = &a.csv {
        fs::write(p, render_table_csv(&report)).map_err(|e| Error::io(p, e))?;
    }
    let text = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
    let mut out = open_out(a.out.as_deref())?;
    write_all(&mut *out, a.out.as_deref(), text.as_bytes())?;
    out.flush().map_err(|e| Error::io("<output>", e))
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let Loaded { train, detector } = load_detector(&a.detector)?;
    let refs = train.input_refs().ok_or(Error::MissingRefs)?;
    let queries = load_queries(&a.test, &detector)?;
    let rows: Vec<usize> = if a.rows.is_empty() {
        (0..queries.rows()).collect()
    } else {
        a.rows.clone()
    };
    let mut text = String::new();
    for &i in &rows {
        if i >= queries.rows() {
            return Err(Error::Invalid(format!(
                "row {i} is outside the {} query rows",
                queries.rows()
            )));
        }
        let report = build_report(
            &detector.index,
            &detector.head,
            &detector.stats,
            Some(refs),
            &queries.row_f64(i),
            &queries.ref_or_index(i),
            a.k_neighbours,
            a.tau,
            &detector.config,
        )
        .map_err(|e| e.at_row(i))?;
        if a.flagged_only && report.verdict == Verdict::Id {
            continue;
        }
        if a.text {
            text.push_str(&render_text(&report));
            text.push('\n');
        } else {
            text.push_str(&serde_json::to_string(&report).expect("report serialises"));
            text.push('\n');
        }
    }
    let mut out = open_out(a.out.as_deref())?;
    write_all(&mut *out, a.out.as_deref(), text.as_bytes())?;
    out.flush().map_err(|e| Error::io("<output>", e))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        classes: a.classes,
        dim: a.dim,
        train_per_class: a.train_per_class,
        test_count: a.test_count,
        ood_mid_count: a.ood_count,
        ood_far_count: a.far_count,
        separation: a.separation,
        sigma: a.sigma,
        jitter: a.jitter,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let bench = generate(&cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    save_head(&bench.head, a.out.join("head.cfhd"))?;
    for (name, ds) in [
        ("train", &bench.train),
        ("test", &bench.test),
        ("ood_mid", &bench.ood_mid),
        ("ood_far", &bench.ood_far),
    ] {
        let file = format!("{name}.cfod");
        save_dataset(ds, a.out.join(&file))?;
        let mut m = DatasetManifest::describe(ds, file.clone().into(), Space::EmbeddingSpace);
        m.head_path = Some("head.cfhd".into());
        m.refs_path = Some(format!("{file}.refs").into());
        m.write(a.out.join(format!("{name}.json")))?;
    }
    Ok(())
}

pub fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let is_csv = a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        csv_to_cfod_streaming(&a.input, &a.out, a.classes)
    } else {
        let ds = load_dataset(&a.input)?;
        let file = fs::File::create(&a.out).map_err(|e| Error::io(&a.out, e))?;
        write_csv(&ds, file)
    }
}

