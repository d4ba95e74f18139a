//! Command-line front end: dataset synthesis, training, evaluation, gradient
//! checking, filter export/import, and artifact inspection.
//!
//! Every run is driven by one seed and named random streams, so re-running a
//! command with the same arguments reproduces its artifacts byte for byte.
//! Outputs are written atomically; inputs are never modified.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{
    apply_filters, export_filters, import_filters, load_checkpoint, save_checkpoint,
};
use crate::dsp::{
    load_clips, mix_conditions, synthesize_dataset, write_manifest, write_wav, FormantTable,
    NoiseKind, CLASS_COUNT,
};
use crate::error::{Error, Result};
use crate::model::{AcousticModel, ModelConfig, Variant};
use crate::train::{evaluate, eval_csv, grad_check, metrics_csv, train_model, TrainConfig};
use crate::util::{fmt_f64, write_atomic};

#[derive(Parser)]
#[command(
    name = "relward",
    version,
    about = "Relevance-weighted acoustic representation learning on raw waveforms"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a labeled clip dataset with optional noise mixing
    SynthData(SynthArgs),
    /// Train a model variant on a dataset manifest
    Train(TrainArgs),
    /// Evaluate a checkpoint across signal-to-noise conditions
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences
    GradCheck(GradArgs),
    /// Write a checkpoint's filter centers to a text table
    ExportFilters(ExportArgs),
    /// Build a fresh checkpoint with imported filter centers
    ImportFilters(ImportArgs),
    /// Summarize a checkpoint and dump relevance weights or kernels
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for clips, manifest.tsv, and run.cfg
    #[arg(long)]
    out: PathBuf,
    /// Number of clips (classes assigned round-robin)
    #[arg(long, default_value_t = 64)]
    count: usize,
    /// Number of distinct classes
    #[arg(long, default_value_t = CLASS_COUNT)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated SNR conditions in dB cycled over clips; `inf` = clean
    #[arg(long, default_value = "inf")]
    snr: String,
    /// Noise color: white or pink
    #[arg(long, default_value = "white")]
    noise: String,
    /// Formant table: standard or shifted
    #[arg(long, default_value = "standard")]
    table: String,
}

#[derive(Args, Default)]
struct ModelFlags {
    /// Variant label: MFB, MFB-R, A, A-R, "A-R,M-R", Sinc, or "S-R,M-R"
    #[arg(long)]
    variant: Option<String>,
    /// Geometry: tiny, desk, or full
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Keep filter centers fixed at their current values during training
    #[arg(long)]
    freeze_filters: bool,
    /// Stop once eval accuracy reaches this value
    #[arg(long)]
    early_stop: Option<f64>,
    /// key=value file supplying any of the flags above (flags win)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training manifest
    #[arg(long)]
    data: PathBuf,
    /// Evaluation manifest for per-epoch metrics and early stopping
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// Output directory for model.ckpt, metrics.csv, and run.cfg
    #[arg(long)]
    out: PathBuf,
    /// Start from this checkpoint instead of a fresh initialization
    #[arg(long)]
    init_ckpt: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Evaluation manifest
    #[arg(long)]
    data: PathBuf,
    /// Output directory for accuracy.csv and run.cfg
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated SNR conditions in dB; `inf` = clean
    #[arg(long, default_value = "inf")]
    snr: String,
    /// Noise color for finite conditions: white or pink
    #[arg(long, default_value = "white")]
    noise: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GradArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Maximum accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Output text file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImportArgs {
    /// Filter table produced by export-filters
    #[arg(long)]
    filters: PathBuf,
    /// Checkpoint to write
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Manifest of inputs whose relevance weights should be dumped
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dump the 2-D modulation kernels
    #[arg(long)]
    kernels: bool,
    /// Output directory for weights.csv / kernels.csv / run.cfg
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump weights for at most this many inputs
    #[arg(long, default_value_t = 8)]
    limit: usize,
}

/// Parses argv, dispatches, and returns the process exit code: 0 on success,
/// 1 for usage problems, 2 for data, format, or contract failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::SynthData(a) => synth_data(&a),
        Cmd::Train(a) => cmd_train(&a),
        Cmd::Eval(a) => cmd_eval(&a),
        Cmd::GradCheck(a) => cmd_grad_check(&a),
        Cmd::ExportFilters(a) => cmd_export(&a),
        Cmd::ImportFilters(a) => cmd_import(&a),
        Cmd::Inspect(a) => cmd_inspect(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolved run settings after merging defaults, the config file, and flags.
#[derive(Debug, Clone, PartialEq)]
struct Settings {
    variant: Variant,
    scale: String,
    seed: u64,
    epochs: usize,
    batch: usize,
    lr: f64,
    freeze_filters: bool,
    early_stop: Option<f64>,
}

impl Settings {
    fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = scale_config(&self.scale)?.with_variant(self.variant);
        cfg.freeze_filters = self.freeze_filters;
        Ok(cfg)
    }

    fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            model: self.model_config()?,
            seed: self.seed,
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            early_stop_accuracy: self.early_stop,
        })
    }

    fn record(&self) -> Vec<(&'static str, String)> {
        vec![
            ("variant", self.variant.label().to_string()),
            ("scale", self.scale.clone()),
            ("seed", self.seed.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("lr", format!("{}", self.lr)),
            ("freeze_filters", if self.freeze_filters { "1" } else { "0" }.to_string()),
            ("early_stop", self.early_stop.map(|v| v.to_string()).unwrap_or_default()),
        ]
    }
}

fn scale_config(scale: &str) -> Result<ModelConfig> {
    match scale {
        "tiny" => Ok(ModelConfig::tiny()),
        "desk" => Ok(ModelConfig::desk()),
        "full" => Ok(ModelConfig::default_scale()),
        other => Err(Error::argument(format!("unknown scale '{other}' (expected tiny|desk|full)"))),
    }
}

const CONFIG_KEYS: [&str; 8] =
    ["variant", "scale", "seed", "epochs", "batch", "lr", "freeze_filters", "early_stop"];

fn read_config_file(path: &Path) -> Result<std::collections::BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = std::collections::BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Usage(format!("{}:{}: expected key=value, got '{line}'", path.display(), lineno + 1))
        })?;
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Usage(format!(
                "{}:{}: unknown config key '{key}' (known: {})",
                path.display(),
                lineno + 1,
                CONFIG_KEYS.join(", ")
            )));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Merges defaults, config file, and flags: flags win over the file, the
/// file wins over defaults.
fn resolve(flags: &ModelFlags, default_scale: &str) -> Result<Settings> {
    let file = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => Default::default(),
    };
    let usage = |key: &str, value: &str| {
        Error::Usage(format!("config key '{key}' has unusable value '{value}'"))
    };
    let variant_text = flags
        .variant
        .clone()
        .or_else(|| file.get("variant").cloned())
        .unwrap_or_else(|| "A".to_string());
    let variant: Variant = variant_text.parse()?;
    let scale = flags
        .scale
        .clone()
        .or_else(|| file.get("scale").cloned())
        .unwrap_or_else(|| default_scale.to_string());
    scale_config(&scale)?;
    let seed = match (flags.seed, file.get("seed")) {
        (Some(v), _) => v,
        (None, Some(s)) => s.parse().map_err(|_| usage("seed", s))?,
        (None, None) => 0,
    };
    let epochs = match (flags.epochs, file.get("epochs")) {
        (Some(v), _) => v,
        (None, Some(s)) => s.parse().map_err(|_| usage("epochs", s))?,
        (None, None) => 15,
    };
    let batch = match (flags.batch, file.get("batch")) {
        (Some(v), _) => v,
        (None, Some(s)) => s.parse().map_err(|_| usage("batch", s))?,
        (None, None) => 16,
    };
    let lr = match (flags.lr, file.get("lr")) {
        (Some(v), _) => v,
        (None, Some(s)) => s.parse().map_err(|_| usage("lr", s))?,
        (None, None) => 1e-3,
    };
    let freeze_filters = flags.freeze_filters
        || match file.get("freeze_filters").map(String::as_str) {
            None | Some("0") => false,
            Some("1") => true,
            Some(other) => return Err(usage("freeze_filters", other)),
        };
    let early_stop = match (flags.early_stop, file.get("early_stop")) {
        (Some(v), _) => Some(v),
        (None, Some(s)) if !s.is_empty() => Some(s.parse().map_err(|_| usage("early_stop", s))?),
        _ => None,
    };
    Ok(Settings { variant, scale, seed, epochs, batch, lr, freeze_filters, early_stop })
}

fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.eq_ignore_ascii_case("inf") {
            out.push(f64::INFINITY);
        } else {
            let v: f64 = part
                .parse()
                .map_err(|_| Error::argument(format!("bad SNR '{part}' (a dB value or 'inf')")))?;
            if !v.is_finite() {
                return Err(Error::argument(format!("bad SNR '{part}' (a dB value or 'inf')")));
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::argument("empty SNR list".to_string()));
    }
    Ok(out)
}

fn parse_noise(text: &str) -> Result<NoiseKind> {
    match text {
        "white" => Ok(NoiseKind::White),
        "pink" => Ok(NoiseKind::Pink),
        other => Err(Error::argument(format!("unknown noise kind '{other}' (expected white|pink)"))),
    }
}

fn parse_table(text: &str) -> Result<FormantTable> {
    match text {
        "standard" => Ok(FormantTable::Standard),
        "shifted" => Ok(FormantTable::Shifted),
        other => Err(Error::argument(format!("unknown formant table '{other}' (expected standard|shifted)"))),
    }
}

fn snr_label(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn write_run_record(dir: &Path, command: &str, pairs: &[(&'static str, String)]) -> Result<()> {
    let mut text = format!("command={command}\n");
    for (k, v) in pairs {
        text.push_str(&format!("{k}={v}\n"));
    }
    write_atomic(&dir.join("run.cfg"), text.as_bytes())
}

fn synth_data(a: &SynthArgs) -> Result<()> {
    let snrs = parse_snr_list(&a.snr)?;
    let noise = parse_noise(&a.noise)?;
    let table = parse_table(&a.table)?;
    if a.count == 0 {
        return Err(Error::argument("count must be at least 1".to_string()));
    }
    let clips = synthesize_dataset(a.count, a.classes, a.seed, table)?;
    let mixed = mix_conditions(&clips, &snrs, noise, a.seed)?;
    let mut entries = Vec::with_capacity(mixed.len());
    for (i, clip) in mixed.iter().enumerate() {
        let name = format!("clip_{i:05}.wav");
        write_wav(&a.out.join(&name), &clip.buffer)?;
        entries.push((name, clip.class_id, clip.snr_db));
    }
    write_manifest(&a.out.join("manifest.tsv"), &entries)?;
    write_run_record(
        &a.out,
        "synth-data",
        &[
            ("count", a.count.to_string()),
            ("classes", a.classes.to_string()),
            ("seed", a.seed.to_string()),
            ("snr", snrs.iter().map(|&v| snr_label(v)).collect::<Vec<_>>().join(",")),
            ("noise", a.noise.clone()),
            ("table", a.table.clone()),
        ],
    )?;
    println!("wrote {} clips and manifest.tsv to {}", a.count, a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let settings = resolve(&a.model, "desk")?;
    let train_clips = load_clips(&a.data)?;
    let eval_clips = match &a.eval_data {
        Some(path) => load_clips(path)?,
        None => Vec::new(),
    };
    let cfg = settings.train_config()?;
    let model = match &a.init_ckpt {
        Some(path) => {
            let (mut model, _) = load_checkpoint(path)?;
            model.config.freeze_filters = settings.freeze_filters;
            model
        }
        None => AcousticModel::init(cfg.model.clone(), cfg.seed)?,
    };
    let outcome = train_model(model, &cfg, &train_clips, &eval_clips)?;
    save_checkpoint(&outcome.model, outcome.step, &a.out.join("model.ckpt"))?;
    write_atomic(&a.out.join("metrics.csv"), metrics_csv(&outcome.metrics).as_bytes())?;
    let mut record = settings.record();
    record.push(("data", a.data.display().to_string()));
    record.push(("eval_data", a.eval_data.as_ref().map(|p| p.display().to_string()).unwrap_or_default()));
    record.push(("init_ckpt", a.init_ckpt.as_ref().map(|p| p.display().to_string()).unwrap_or_default()));
    write_run_record(&a.out, "train", &record)?;
    for row in outcome.metrics.iter().rev().take(2).collect::<Vec<_>>().into_iter().rev() {
        println!("epoch {} {}: loss {:.4} accuracy {:.4}", row.epoch, row.split, row.loss, row.accuracy);
    }
    if outcome.mu_clip_events > 0 {
        println!("clipped {} filter-center updates back into range", outcome.mu_clip_events);
    }
    println!("wrote model.ckpt and metrics.csv to {}", a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let snrs = parse_snr_list(&a.snr)?;
    let noise = parse_noise(&a.noise)?;
    let (model, _) = load_checkpoint(&a.ckpt)?;
    let clips = load_clips(&a.data)?;
    let conditions = evaluate(&model, &clips, &snrs, noise, a.seed)?;
    write_atomic(&a.out.join("accuracy.csv"), eval_csv(&conditions).as_bytes())?;
    write_run_record(
        &a.out,
        "eval",
        &[
            ("ckpt", a.ckpt.display().to_string()),
            ("data", a.data.display().to_string()),
            ("snr", snrs.iter().map(|&v| snr_label(v)).collect::<Vec<_>>().join(",")),
            ("noise", a.noise.clone()),
            ("seed", a.seed.to_string()),
        ],
    )?;
    for c in &conditions {
        println!("snr {:>5} dB: accuracy {:.4} loss {:.4} ({} clips)", snr_label(c.snr_db), c.accuracy, c.loss, c.count);
    }
    println!("wrote accuracy.csv to {}", a.out.display());
    Ok(())
}

fn cmd_grad_check(a: &GradArgs) -> Result<()> {
    let settings = resolve(&a.model, "tiny")?;
    let config = settings.model_config()?;
    println!("variant {} scale {} seed {} tol {:e}", settings.variant, settings.scale, settings.seed, a.tol);
    let report = grad_check(config, settings.seed, a.tol)?;
    for line in report.lines() {
        println!("{line}");
    }
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Error::contract("grad_check", "finite differences disagree with analytic gradients".to_string()))
    }
}

fn cmd_export(a: &ExportArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&a.ckpt)?;
    export_filters(&model, &a.out)?;
    println!("wrote {} filter centers to {}", model.fb.f(), a.out.display());
    Ok(())
}

fn cmd_import(a: &ImportArgs) -> Result<()> {
    let settings = resolve(&a.model, "desk")?;
    let import = import_filters(&a.filters)?;
    let mut model = AcousticModel::init(settings.model_config()?, settings.seed)?;
    apply_filters(&mut model, &import)?;
    save_checkpoint(&model, 0, &a.out)?;
    println!("wrote fresh checkpoint with imported centers to {}", a.out.display());
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let (model, step) = load_checkpoint(&a.ckpt)?;
    let cfg = &model.config;
    let dims = cfg.dims()?;
    println!(
        "family {} | acoustic relevance {} | modulation relevance {} | step {}",
        cfg.family.name(),
        if cfg.acoustic_relevance { "on" } else { "off" },
        if cfg.modulation_relevance { "on" } else { "off" },
        step
    );
    println!(
        "{} filters x {} taps | {} frames keep {} | {} modulation kernels {}x{} | {} classes",
        cfg.filters, cfg.kernel_len, cfg.frames, cfg.keep, cfg.mod_count, cfg.mod_kf, cfg.mod_kt, cfg.classes
    );
    println!(
        "representation {}x{} -> {}x{} -> maps {:?} -> pooled {:?} -> head {:?}",
        dims.spec.0, dims.spec.1, dims.pruned.0, dims.pruned.1, dims.conv, dims.pooled, dims.head_pool
    );

    let needs_out = a.data.is_some() || a.kernels;
    let out = match (&a.out, needs_out) {
        (Some(dir), _) => dir.clone(),
        (None, false) => return Ok(()),
        (None, true) => {
            return Err(Error::argument("--out is required when dumping weights or kernels".to_string()))
        }
    };

    if let Some(manifest) = &a.data {
        let clips = load_clips(manifest)?;
        let mut csv = String::from("input_id,stage,idx,weight\n");
        for (i, clip) in clips.iter().take(a.limit).enumerate() {
            let center = clip.buffer.len() / 2;
            let block = crate::dsp::frame_signal(&clip.buffer, cfg.frame_len, cfg.hop, cfg.frames, center)?;
            let (_, front, _) = model.forward_eval(&block)?;
            if let Some((w, _)) = &front.acoustic_weights {
                for (idx, v) in w.w.iter().enumerate() {
                    csv.push_str(&format!("{i},acoustic,{idx},{}\n", fmt_f64(*v)));
                }
            }
            if let Some((w, _)) = &front.modulation_weights {
                for (idx, v) in w.w.iter().enumerate() {
                    csv.push_str(&format!("{i},modulation,{idx},{}\n", fmt_f64(*v)));
                }
            }
        }
        write_atomic(&out.join("weights.csv"), csv.as_bytes())?;
        println!("wrote weights.csv to {}", out.display());
    }
    if a.kernels {
        let mut csv = String::from("kernel,row,col,value\n");
        let k = &model.mod_kernels.kernels;
        for c in 0..k.d0 {
            let plane = k.plane(c);
            for r in 0..k.d1 {
                for col in 0..k.d2 {
                    csv.push_str(&format!("{c},{r},{col},{}\n", fmt_f64(plane[r * k.d2 + col])));
                }
            }
        }
        write_atomic(&out.join("kernels.csv"), csv.as_bytes())?;
        println!("wrote kernels.csv to {}", out.display());
    }
    write_run_record(
        &out,
        "inspect",
        &[
            ("ckpt", a.ckpt.display().to_string()),
            ("data", a.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("kernels", if a.kernels { "1" } else { "0" }.to_string()),
            ("limit", a.limit.to_string()),
        ],
    )
}
