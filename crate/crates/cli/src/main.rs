//! `bmi-curate`: run the curation pipeline from the command line.
//!
//! Every subcommand runs the pipeline up to and including its stage;
//! stages whose outputs are current are skipped. Exit codes: 0 success,
//! 1 invalid configuration or arguments, 2 stage failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use bmi_curate::crop::Perspective;
use bmi_curate::pipeline::{Pipeline, PipelineConfig, RunSummary, Stage, StageStatus};
use bmi_curate::posture::Decision;
use bmi_curate::split::{SplitLabel, SplitRatios};
use bmi_curate::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "bmi-curate", version, about = "Curate annotated BMI image corpora and evaluate exported models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate the manifest into records and rejects.
    Ingest(Overrides),
    /// Fit the posture clustering model.
    Cluster(Overrides),
    /// Apply person and posture filters; write the curated manifest.
    Filter(Overrides),
    /// Write perspective crops of the curated images.
    Crop(Overrides),
    /// Assign subjects to train/val/test.
    Split(Overrides),
    /// Run the model over one split and perspective.
    Eval(Overrides),
    /// Run every stage.
    Run(Overrides),
    /// Run every stage and print the summary report.
    Report(Overrides),
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Pipeline config (JSON). Relative paths inside resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the summary as JSON instead of text.
    #[arg(long)]
    json: bool,

    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Base directory for relative image paths (default: manifest directory).
    #[arg(long)]
    image_root: Option<PathBuf>,

    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    min_area_ratio: Option<f64>,

    #[arg(long)]
    variance_threshold: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    cluster_seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    min_mean_visibility: Option<f64>,
    #[arg(long)]
    auto_discard_fraction: Option<f64>,
    /// Explicit cluster decisions, e.g. `0=keep,3=discard`.
    #[arg(long)]
    decisions: Option<String>,

    /// Train,val,test fractions, e.g. `0.7,0.15,0.15`.
    #[arg(long)]
    ratios: Option<String>,
    /// Split shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated perspectives to crop.
    #[arg(long)]
    perspectives: Option<String>,

    /// Exported ONNX model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    perspective: Option<String>,
    /// Model input size as `WIDTHxHEIGHT`.
    #[arg(long)]
    input_size: Option<String>,
    /// Per-channel normalization mean, `r,g,b`.
    #[arg(long)]
    mean: Option<String>,
    /// Per-channel normalization std, `r,g,b`.
    #[arg(long)]
    std: Option<String>,
}

fn triple(s: &str, what: &str) -> anyhow::Result<[f32; 3]> {
    let v: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("--{what} {s:?}"))?;
    v.try_into().map_err(|_| anyhow!("--{what} needs three values"))
}

fn parse_decisions(s: &str) -> anyhow::Result<BTreeMap<usize, Decision>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (c, d) = p.split_once('=').ok_or_else(|| anyhow!("--decisions entry {p:?} lacks `=`"))?;
            let c: usize = c.trim().parse().with_context(|| format!("cluster id {c:?}"))?;
            let d = match d.trim() {
                "keep" => Decision::Keep,
                "discard" => Decision::Discard,
                other => bail!("decision {other:?} is not keep or discard"),
            };
            Ok((c, d))
        })
        .collect()
}

impl Overrides {
    fn config(&self) -> anyhow::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$($field).+ = v.clone(); })*
            };
        }
        set!(
            manifest => manifest,
            output_dir => output_dir,
            min_confidence => person_filter.min_confidence,
            min_area_ratio => person_filter.min_area_ratio,
            variance_threshold => posture.variance_threshold,
            k_min => posture.k_min,
            k_max => posture.k_max,
            cluster_seed => posture.seed,
            restarts => posture.restarts,
            max_iter => posture.max_iter,
            tol => posture.tol,
            min_mean_visibility => posture.min_mean_visibility,
            auto_discard_fraction => posture.auto_discard_fraction,
            seed => split.seed,
        );
        if let Some(p) = &self.image_root {
            c.image_root = Some(p.clone());
        }
        if let Some(p) = &self.model {
            c.eval.model = Some(p.clone());
        }
        if let Some(d) = &self.decisions {
            c.posture.decisions = Some(parse_decisions(d)?);
        }
        if let Some(r) = &self.ratios {
            c.split.ratios = r.parse::<SplitRatios>()?;
        }
        if let Some(p) = &self.perspectives {
            c.perspectives = p
                .split(',')
                .map(|s| s.trim().parse::<Perspective>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(s) = &self.split {
            c.eval.split = s.parse::<SplitLabel>()?;
        }
        if let Some(p) = &self.perspective {
            c.eval.perspective = p.parse::<Perspective>()?;
        }
        if let Some(s) = &self.input_size {
            let (w, h) = s
                .split_once(['x', 'X'])
                .ok_or_else(|| anyhow!("--input-size expects WIDTHxHEIGHT"))?;
            c.eval.preprocess.width = w.trim().parse().context("--input-size width")?;
            c.eval.preprocess.height = h.trim().parse().context("--input-size height")?;
        }
        if let Some(m) = &self.mean {
            c.eval.preprocess.mean = triple(m, "mean")?;
        }
        if let Some(s) = &self.std {
            c.eval.preprocess.std = triple(s, "std")?;
        }
        Ok(c)
    }
}

fn print_outcomes(summary: &RunSummary) {
    for o in &summary.stages {
        let status = match o.status {
            StageStatus::Executed => "ran",
            StageStatus::Skipped => "up to date",
            StageStatus::NotConfigured => "skipped (no model)",
        };
        eprintln!("{:<8} {status}", o.stage.as_str());
    }
}

fn coded(e: Error) -> anyhow::Error {
    anyhow!("{e} [{}]", e.code())
}

enum Failure {
    Validation(anyhow::Error),
    Stage(anyhow::Error),
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (stage, ov) = match &cli.command {
        Command::Ingest(o) => (Stage::Ingest, o),
        Command::Cluster(o) => (Stage::Cluster, o),
        Command::Filter(o) => (Stage::Filter, o),
        Command::Crop(o) => (Stage::Crop, o),
        Command::Split(o) => (Stage::Split, o),
        Command::Eval(o) => (Stage::Eval, o),
        Command::Run(o) | Command::Report(o) => (Stage::Report, o),
    };
    let cfg = ov.config().map_err(|e| match e.downcast::<Error>() {
        Ok(e) => Failure::Validation(coded(e)),
        Err(e) => Failure::Validation(e),
    })?;
    if stage == Stage::Eval && cfg.eval.model.is_none() {
        return Err(Failure::Validation(anyhow!("eval needs --model or eval.model in the config")));
    }
    let pipeline = Pipeline::new(cfg).map_err(|e| Failure::Validation(coded(e)))?;
    let summary = pipeline
        .run_through(stage)
        .map_err(|e| Failure::Stage(coded(e)))?;
    print_outcomes(&summary);
    if stage == Stage::Report {
        let report = pipeline.load_summary().map_err(|e| Failure::Stage(coded(e)))?;
        if ov.json {
            println!("{}", serde_json::to_string_pretty(&report).expect("summary serializes"));
        } else {
            println!("{}", report.to_text());
        }
    } else if ov.json {
        println!("{}", serde_json::to_string_pretty(&summary).expect("outcomes serialize"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
