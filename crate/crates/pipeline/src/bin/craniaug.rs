//! craniaug: synthetic training-case generation and evaluation for cranial
//! defect reconstruction.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
//! Commands that write files also drop a machine-readable
//! `run_report.json` beside their outputs.

use clap::{Parser, Subcommand};
use craniaug_core::geoaug::{GeoAugConfig, GeoPreset};
use craniaug_core::latent;
use craniaug_core::nrrd::{load_nrrd, save_nrrd_with, NrrdEncoding, NrrdType};
use craniaug_core::reg::{self, RegConfig};
use craniaug_core::rng::RngState;
use craniaug_core::volume::Volume3;
use craniaug_core::vxf::write_vxf;
use craniaug_pipeline::components::Connectivity;
use craniaug_pipeline::evaluate::parse_metrics_csv;
use craniaug_pipeline::generate::{augment_dataset, Method};
use craniaug_pipeline::postprocess::PostprocessRule;
use craniaug_pipeline::preprocess::{DEFAULT_CENTER_OFFSET, DEFAULT_MODEL_DIMS};
use craniaug_pipeline::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "craniaug",
    about = "Synthetic training cases and evaluation for cranial-defect reconstruction",
    version
)]
struct Cli {
    /// Master seed (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker count (overrides config files).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output path (overrides config files).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Center defective skulls with a margin and resample to the model grid.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        /// Margin to every grid face, in voxels at native resolution.
        #[arg(long, default_value_t = DEFAULT_CENTER_OFFSET)]
        offset: usize,
        /// Model grid as N or "nx,ny,nz".
        #[arg(long)]
        dims: Option<String>,
    },
    /// Apply geometric augmentation once to every manifest case.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        /// Augmentation strength preset: basic | heavy | extreme.
        #[arg(long, conflicts_with = "config")]
        preset: Option<GeoPreset>,
        /// GeoAugConfig JSON file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Register a moving mask onto a fixed mask and dump the results.
    Register {
        #[arg(long)]
        moving: PathBuf,
        #[arg(long)]
        fixed: PathBuf,
        /// RegConfig JSON file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Published-scale regularization coefficient (e.g. 12500).
        #[arg(long)]
        coefficient: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Generate a synthetic dataset (geo or ir method).
    Generate {
        #[arg(long)]
        manifest: PathBuf,
        /// JobConfig JSON file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// geo | ir (required without --config).
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Merge generated datasets by uniform sampling without replacement.
    Combine {
        /// Source directories of generated samples.
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        count: usize,
    },
    /// Clean a prediction: drop small and skull-overlapping components.
    Postprocess {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        skull: PathBuf,
        #[arg(long, default_value_t = 100)]
        min_volume: usize,
        #[arg(long, default_value = "26")]
        connectivity: Connectivity,
        /// or (size OR overlap deletes) | and (both required).
        #[arg(long, default_value = "or")]
        rule: PostprocessRule,
    },
    /// Evaluate predictions against ground truth, case by case.
    Evaluate {
        /// Manifest whose defect channel holds the predictions.
        #[arg(long)]
        pred: PathBuf,
        /// Manifest whose defect channel holds the ground truth.
        #[arg(long)]
        gt: PathBuf,
        /// Surface-Dice tolerance in mm.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
    },
    /// Wilcoxon signed-rank comparison of two per-case metric CSVs.
    Compare {
        /// Metric column to compare.
        #[arg(long, default_value = "dsc")]
        metric: String,
        csv_a: PathBuf,
        csv_b: PathBuf,
    },
    /// Draw latent vectors (sd | ud | uds) and write them as CSV or VXF.
    Sample {
        #[arg(long)]
        method: String,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        count: usize,
    },
}

/// Error carrying its exit code classification.
enum CliError {
    /// Bad flags, configs, manifests, or preconditions: exit 1.
    Validation(String),
    /// Failures while doing the work: exit 2.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Serialize)]
struct RunReport<T: Serialize> {
    command: String,
    status: &'static str,
    outputs: Vec<PathBuf>,
    details: T,
}

fn write_report<T: Serialize>(
    dir: &Path,
    command: &str,
    outputs: Vec<PathBuf>,
    details: T,
) -> Result<(), CliError> {
    let report = RunReport {
        command: command.to_string(),
        status: "ok",
        outputs,
        details,
    };
    let path = dir.join("run_report.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&report).map_err(runtime)?,
    )
    .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| validation(format!("malformed config {}: {e}", path.display())))
}

fn require_out(out: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    out.clone()
        .ok_or_else(|| validation(format!("--out is required for {what}")))
}

fn parse_dims(s: &str) -> Result<(usize, usize, usize), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| validation(format!("bad dims {s:?}: {e}")))
    };
    match parts.len() {
        1 => {
            let n = parse(parts[0])?;
            Ok((n, n, n))
        }
        3 => Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)),
        _ => Err(validation(format!("dims must be N or nx,ny,nz, got {s:?}"))),
    }
}

fn load_mask(path: &Path) -> Result<craniaug_core::volume::BinaryMask, CliError> {
    Ok(load_nrrd(path)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))?
        .binarize(0.5))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess {
            manifest,
            offset,
            dims,
        } => {
            let out = require_out(&cli.out, "preprocess")?;
            let manifest = load_manifest(&manifest).map_err(validation)?;
            let target = match dims {
                Some(s) => parse_dims(&s)?,
                None => DEFAULT_MODEL_DIMS,
            };
            let (_, report) =
                preprocess_dataset(&manifest, offset, target, &out).map_err(|e| match e {
                    PreprocessError::Manifest(m) => validation(m),
                    other => runtime(other),
                })?;
            let outputs = vec![out.join("manifest.json")];
            write_report(&out, "preprocess", outputs, &report)
        }
        Command::Augment {
            manifest,
            preset,
            config,
        } => {
            let out = require_out(&cli.out, "augment")?;
            let manifest = load_manifest(&manifest).map_err(validation)?;
            let geo: GeoAugConfig = match (preset, config) {
                (Some(p), None) => craniaug_core::geoaug::preset(p),
                (None, Some(path)) => load_json_config(&path)?,
                (None, None) => craniaug_core::geoaug::preset(GeoPreset::Extreme),
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            let seed = cli.seed.unwrap_or(0);
            let report = augment_dataset(&manifest, &geo, seed, &out).map_err(|e| match e {
                GenerateError::InvalidConfig(m) => validation(m),
                GenerateError::Manifest(m) => validation(m),
                other => runtime(other),
            })?;
            if report.succeeded == 0 && report.requested > 0 {
                return Err(runtime(format!(
                    "all {} cases failed; first error: {}",
                    report.requested, report.failed[0].error
                )));
            }
            write_report(&out, "augment", vec![out.join("manifest.json")], &report)
        }
        Command::Register {
            moving,
            fixed,
            config,
            coefficient,
            levels,
            iterations,
            step,
        } => {
            let out = require_out(&cli.out, "register")?;
            let mut cfg: RegConfig = match config {
                Some(path) => load_json_config(&path)?,
                None => RegConfig::default(),
            };
            if let Some(c) = coefficient {
                cfg.alpha = c * reg::ALPHA_COEFF_SCALE;
            }
            if let Some(l) = levels {
                cfg.levels = l;
            }
            if let Some(i) = iterations {
                cfg.iterations_per_level = i;
            }
            if let Some(s) = step {
                cfg.step_size = s;
            }
            cfg.validate().map_err(validation)?;
            let m = load_mask(&moving)?;
            let f = load_mask(&fixed)?;
            let result = reg::register(&m, &f, &cfg).map_err(runtime)?;
            std::fs::create_dir_all(&out).map_err(runtime)?;
            let warped_path = out.join("warped.nrrd");
            save_nrrd_with(
                result.warped.as_volume(),
                &warped_path,
                NrrdType::Uint8,
                NrrdEncoding::Gzip,
            )
            .map_err(runtime)?;
            let mut outputs = vec![warped_path];
            for (c, name) in ["field_ux.vxf", "field_uy.vxf", "field_uz.vxf"]
                .iter()
                .enumerate()
            {
                let plane = Volume3::new(
                    result.field.dims(),
                    (1.0, 1.0, 1.0),
                    result
                        .field
                        .component(c)
                        .iter()
                        .map(|&v| v as f32)
                        .collect(),
                )
                .map_err(runtime)?;
                let path = out.join(name);
                write_vxf(&plane, &path).map_err(runtime)?;
                outputs.push(path);
            }
            let trace_path = out.join("trace.csv");
            std::fs::write(&trace_path, reg::trace_csv(&result.objective_trace))
                .map_err(runtime)?;
            outputs.push(trace_path);
            #[derive(Serialize)]
            struct RegSummary {
                folding_fraction: f64,
                /// Objective with a zero field, full resolution.
                initial_total: f64,
                /// Objective with the returned field, full resolution.
                final_total: f64,
                alpha: f64,
            }
            let zero = reg::DisplacementField::zeros(m.dims(), 0);
            let initial_total = reg::objective(m.as_volume(), f.as_volume(), &zero, cfg.alpha)
                .map_err(runtime)?
                .0;
            let details = RegSummary {
                folding_fraction: result.folding_fraction,
                initial_total,
                final_total: result
                    .objective_trace
                    .last()
                    .map(|e| e.total)
                    .unwrap_or(0.0),
                alpha: cfg.alpha,
            };
            write_report(&out, "register", outputs, details)
        }
        Command::Generate {
            manifest,
            config,
            method,
            count,
        } => {
            let manifest = load_manifest(&manifest).map_err(validation)?;
            let parse_method = |m: &str| match m {
                "geo" => Ok(Method::Geo),
                "ir" => Ok(Method::Ir),
                other => Err(validation(format!("unknown method {other:?}"))),
            };
            let mut job: JobConfig = match config {
                Some(path) => load_json_config(&path)?,
                None => {
                    let method = method.as_deref().ok_or_else(|| {
                        validation("--method (geo|ir) is required without --config")
                    })?;
                    JobConfig {
                        method: parse_method(method)?,
                        count: count
                            .ok_or_else(|| validation("--count is required without --config"))?,
                        geo: craniaug_core::geoaug::preset(GeoPreset::Extreme),
                        reg: RegConfig::default(),
                        master_seed: 0,
                        parallelism: 1,
                        out_dir: PathBuf::new(),
                    }
                }
            };
            if let Some(m) = method.as_deref() {
                job.method = parse_method(m)?;
            }
            if let Some(c) = count {
                job.count = c;
            }
            if let Some(s) = cli.seed {
                job.master_seed = s;
            }
            if let Some(j) = cli.jobs {
                job.parallelism = j;
            }
            if let Some(o) = cli.out {
                job.out_dir = o;
            }
            if job.out_dir.as_os_str().is_empty() {
                return Err(validation("--out (or out_dir in the config) is required"));
            }
            let report = generate_dataset(&manifest, &job).map_err(|e| match e {
                GenerateError::InvalidConfig(m) => validation(m),
                GenerateError::Manifest(m) => validation(m),
                other => runtime(other),
            })?;
            if report.succeeded == 0 {
                return Err(runtime(format!(
                    "all {} samples failed; first error: {}",
                    report.requested, report.failed[0].error
                )));
            }
            for failure in &report.failed {
                eprintln!("sample {} failed: {}", failure.index, failure.error);
            }
            write_report(&job.out_dir, "generate", vec![job.out_dir.clone()], &report)
        }
        Command::Combine { inputs, count } => {
            let out = require_out(&cli.out, "combine")?;
            let seed = cli.seed.unwrap_or(0);
            let manifest = combine_datasets(&inputs, count, seed, &out).map_err(|e| match e {
                CombineError::Capacity { .. } => validation(e),
                other => runtime(other),
            })?;
            #[derive(Serialize)]
            struct CombineSummary {
                samples: usize,
                sources: Vec<PathBuf>,
            }
            write_report(
                &out,
                "combine",
                vec![out.join("manifest.json")],
                CombineSummary {
                    samples: manifest.cases.len(),
                    sources: inputs,
                },
            )
        }
        Command::Postprocess {
            pred,
            skull,
            min_volume,
            connectivity,
            rule,
        } => {
            let out_file = require_out(&cli.out, "postprocess")?;
            let pred_mask = load_mask(&pred)?;
            let skull_mask = load_mask(&skull)?;
            let cleaned = postprocess(&pred_mask, &skull_mask, min_volume, connectivity, rule)
                .map_err(validation)?;
            if let Some(parent) = out_file.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(runtime)?;
                }
            }
            save_nrrd_with(
                cleaned.as_volume(),
                &out_file,
                NrrdType::Uint8,
                NrrdEncoding::Gzip,
            )
            .map_err(runtime)?;
            #[derive(Serialize)]
            struct PostSummary {
                input_foreground: usize,
                output_foreground: usize,
                min_volume: usize,
            }
            let dir = out_file.parent().unwrap_or(Path::new(".")).to_path_buf();
            write_report(
                &dir,
                "postprocess",
                vec![out_file.clone()],
                PostSummary {
                    input_foreground: pred_mask.foreground_count(),
                    output_foreground: cleaned.foreground_count(),
                    min_volume,
                },
            )
        }
        Command::Evaluate { pred, gt, tau } => {
            let out = require_out(&cli.out, "evaluate")?;
            let pred = load_manifest(&pred).map_err(validation)?;
            let gt = load_manifest(&gt).map_err(validation)?;
            let eval = evaluate_dataset(&pred, &gt, tau).map_err(|e| match e {
                EvaluateError::NoOverlap => validation(format!(
                    "{e}; prediction ids: [{}], ground-truth ids: [{}]",
                    pred.cases
                        .iter()
                        .map(|c| c.case_id.as_str())
                        .collect::<Vec<_>>()
                        .join(", "),
                    gt.cases
                        .iter()
                        .map(|c| c.case_id.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                )),
                other => runtime(other),
            })?;
            for id in eval.unmatched_pred.iter().chain(&eval.unmatched_gt) {
                eprintln!("unmatched case id: {id}");
            }
            std::fs::create_dir_all(&out).map_err(runtime)?;
            let csv_path = out.join("metrics.csv");
            std::fs::write(&csv_path, eval.to_csv()).map_err(runtime)?;
            let summary_path = out.join("summary.json");
            std::fs::write(
                &summary_path,
                serde_json::to_string_pretty(&eval.aggregate).map_err(runtime)?,
            )
            .map_err(runtime)?;
            #[derive(Serialize)]
            struct EvalSummary<'a> {
                aggregate: &'a craniaug_pipeline::evaluate::AggregateStats,
                unmatched_pred: &'a [String],
                unmatched_gt: &'a [String],
            }
            write_report(
                &out,
                "evaluate",
                vec![csv_path, summary_path],
                EvalSummary {
                    aggregate: &eval.aggregate,
                    unmatched_pred: &eval.unmatched_pred,
                    unmatched_gt: &eval.unmatched_gt,
                },
            )
        }
        Command::Compare {
            metric,
            csv_a,
            csv_b,
        } => {
            let read = |p: &Path| -> Result<Vec<(String, f64)>, CliError> {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| validation(format!("{}: {e}", p.display())))?;
                parse_metrics_csv(&text, &metric).map_err(validation)
            };
            let a = read(&csv_a)?;
            let b = read(&csv_b)?;
            let bmap: std::collections::BTreeMap<&str, f64> =
                b.iter().map(|(id, v)| (id.as_str(), *v)).collect();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (id, va) in &a {
                if let Some(&vb) = bmap.get(id.as_str()) {
                    xs.push(*va);
                    ys.push(vb);
                }
            }
            let result = wilcoxon_signed_rank(&xs, &ys).map_err(validation)?;
            let json = serde_json::to_string_pretty(&result).map_err(runtime)?;
            println!("{json}");
            if let Some(out) = cli.out {
                std::fs::create_dir_all(&out).map_err(runtime)?;
                write_report(&out, "compare", Vec::new(), result)?;
            }
            Ok(())
        }
        Command::Sample { method, dim, count } => {
            let out_file = require_out(&cli.out, "sample")?;
            let batch = match method.as_str() {
                "sd" => {
                    let mut rng = RngState::new(cli.seed.unwrap_or(0));
                    latent::sample_standard(dim, count, &mut rng).map_err(validation)?
                }
                "ud" => {
                    let mut rng = RngState::new(cli.seed.unwrap_or(0));
                    latent::sample_uniform(dim, count, &mut rng).map_err(validation)?
                }
                "uds" => latent::sample_uds(dim, count).map_err(validation)?,
                other => {
                    return Err(validation(format!(
                        "unknown sampling method {other:?} (expected sd|ud|uds)"
                    )));
                }
            };
            if let Some(parent) = out_file.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(runtime)?;
                }
            }
            match out_file.extension().and_then(|e| e.to_str()) {
                Some("vxf") => batch.write_vxf(&out_file).map_err(runtime)?,
                _ => batch.write_csv(&out_file).map_err(runtime)?,
            }
            #[derive(Serialize)]
            struct SampleSummary {
                method: String,
                dim: usize,
                count: usize,
            }
            let dir = out_file.parent().unwrap_or(Path::new(".")).to_path_buf();
            write_report(
                &dir,
                "sample",
                vec![out_file.clone()],
                SampleSummary { method, dim, count },
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
