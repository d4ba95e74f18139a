//! The training loop, multi-condition evaluation, finite-difference gradient
//! verification, and the filter transfer experiment.

use rand::seq::SliceRandom;

use crate::checkpoint::{apply_filters, FilterExport};
use crate::dsp::{frame_signal, mix_noise, gen_noise, LabeledClip, NoiseKind, RawFrameBlock};
use crate::error::{Error, Result};
use crate::filterbank::{MU_MAX, MU_MIN};
use crate::model::{cross_entropy, cross_entropy_grad, AcousticModel, GradientSet, ModelConfig};
use crate::optim::{adam_step, AdamState};
use crate::rng::{mix_seed, stream_rng};

/// Knobs of one training run. Geometry and variant live in the model config.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Stop after the first epoch whose eval accuracy reaches this value.
    pub early_stop_accuracy: Option<f64>,
}

impl TrainConfig {
    pub fn new(model: ModelConfig, seed: u64) -> Self {
        Self { model, seed, epochs: 10, batch: 16, lr: 1e-3, early_stop_accuracy: None }
    }

    fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::argument(format!("batch size must be at least 2, got {}", self.batch)));
        }
        if self.epochs == 0 {
            return Err(Error::argument("epochs must be at least 1".to_string()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::argument(format!("learning rate {} must be positive and finite", self.lr)));
        }
        Ok(())
    }
}

/// One metrics line: `epoch,split,loss,accuracy`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub accuracy: f64,
}

/// Renders metric rows as the canonical CSV artifact.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("epoch,split,loss,accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6},{:.6}\n", r.epoch, r.split, r.loss, r.accuracy));
    }
    out
}

/// Result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: AcousticModel,
    /// Optimizer steps taken.
    pub step: u64,
    pub metrics: Vec<MetricRow>,
    /// Parameter coordinates clamped back into the valid center-frequency
    /// range, summed over all updates.
    pub mu_clip_events: usize,
    pub epochs_run: usize,
}

/// Frames every clip around its midpoint and returns blocks plus labels,
/// validating class ids against the model's class count.
pub fn frame_dataset(clips: &[LabeledClip], cfg: &ModelConfig) -> Result<(Vec<RawFrameBlock>, Vec<usize>)> {
    if clips.is_empty() {
        return Err(Error::Data("dataset is empty".to_string()));
    }
    let mut blocks = Vec::with_capacity(clips.len());
    let mut labels = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        if clip.class_id >= cfg.classes {
            return Err(Error::Data(format!(
                "clip {i} has class {} but the model distinguishes {} classes",
                clip.class_id, cfg.classes
            )));
        }
        let center = clip.buffer.len() / 2;
        let block = frame_signal(&clip.buffer, cfg.frame_len, cfg.hop, cfg.frames, center)
            .map_err(|e| Error::Data(format!("clip {i}: {e}")))?;
        blocks.push(block);
        labels.push(clip.class_id);
    }
    Ok((blocks, labels))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and accuracy of eval-mode predictions over a framed dataset.
fn eval_metrics(model: &AcousticModel, blocks: &[RawFrameBlock], labels: &[usize]) -> Result<(f64, f64)> {
    let results: Vec<Result<(f64, bool)>> = crate::util::par_map(blocks.len(), |i| {
        let (logits, _, _) = model.forward_eval(&blocks[i])?;
        let loss = cross_entropy(&logits, labels[i])?;
        Ok((loss, argmax(&logits) == labels[i]))
    });
    let mut loss_sum = 0.0;
    let mut hits = 0usize;
    for r in results {
        let (loss, hit) = r?;
        loss_sum += loss;
        hits += hit as usize;
    }
    let n = blocks.len() as f64;
    Ok((loss_sum / n, hits as f64 / n))
}

/// Trains an already-initialized model in place of a fresh one; the normal
/// entry point is [`train`]. Batches whose tail would hold a single sample
/// are dropped, since training-mode batch norm needs at least two.
pub fn train_model(
    mut model: AcousticModel,
    cfg: &TrainConfig,
    train_clips: &[LabeledClip],
    eval_clips: &[LabeledClip],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (blocks, labels) = frame_dataset(train_clips, &model.config)?;
    let eval_framed = if eval_clips.is_empty() {
        None
    } else {
        Some(frame_dataset(eval_clips, &model.config)?)
    };

    let mut adam = AdamState::new(&mut model, cfg.lr)?;
    let mut metrics = Vec::new();
    let mut mu_clip_events = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, &format!("shuffle/{epoch}")));

        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch) {
            if chunk.len() < 2 {
                continue;
            }
            let batch_blocks: Vec<RawFrameBlock> = chunk.iter().map(|&i| blocks[i].clone()).collect();
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let fwd = model.forward_train(&batch_blocks)?;
            let b = chunk.len() as f64;
            let mut dlogits = Vec::with_capacity(chunk.len());
            for (logits, &label) in fwd.logits.iter().zip(&batch_labels) {
                let (loss, mut d) = cross_entropy_grad(logits, label)?;
                loss_sum += loss;
                hits += (argmax(logits) == label) as usize;
                for v in &mut d {
                    *v /= b;
                }
                dlogits.push(d);
            }
            seen += chunk.len();
            let grads = model.backward_train(&batch_blocks, &fwd, &dlogits)?;
            adam_step(&mut model, &grads, &mut adam)?;
            model.bn.running_mean = fwd.bn_stats.mean;
            model.bn.running_var = fwd.bn_stats.var;
            if model.mu_trainable() {
                for m in &mut model.fb.mu {
                    let clipped = m.clamp(MU_MIN, MU_MAX);
                    if clipped != *m {
                        *m = clipped;
                        mu_clip_events += 1;
                    }
                }
            }
        }
        if seen == 0 {
            return Err(Error::Data(format!(
                "no trainable batches: {} clips at batch size {}",
                blocks.len(),
                cfg.batch
            )));
        }
        metrics.push(MetricRow {
            epoch,
            split: "train",
            loss: loss_sum / seen as f64,
            accuracy: hits as f64 / seen as f64,
        });
        if let Some((eval_blocks, eval_labels)) = &eval_framed {
            let (loss, accuracy) = eval_metrics(&model, eval_blocks, eval_labels)?;
            metrics.push(MetricRow { epoch, split: "eval", loss, accuracy });
            if let Some(th) = cfg.early_stop_accuracy {
                if accuracy >= th {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome { model, step: adam.step, metrics, mu_clip_events, epochs_run })
}

/// Initializes a model from the config and seed, then trains it.
pub fn train(cfg: &TrainConfig, train_clips: &[LabeledClip], eval_clips: &[LabeledClip]) -> Result<TrainOutcome> {
    let model = AcousticModel::init(cfg.model.clone(), cfg.seed)?;
    train_model(model, cfg, train_clips, eval_clips)
}

/// Accuracy and mean loss of one evaluation condition.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCondition {
    /// `+inf` is the clean condition.
    pub snr_db: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub count: usize,
}

/// Evaluates the model over every SNR condition in `snrs` (`+inf` = clean).
/// Finite conditions mix freshly drawn noise into each clip; noise for clip
/// `i` under condition `c` comes from the derived seed
/// `mix_seed(mix_seed(seed, c), i)`, so results depend only on the seed and
/// the clip order.
pub fn evaluate(
    model: &AcousticModel,
    clips: &[LabeledClip],
    snrs: &[f64],
    noise: NoiseKind,
    seed: u64,
) -> Result<Vec<EvalCondition>> {
    if clips.is_empty() {
        return Err(Error::Data("evaluation set is empty".to_string()));
    }
    if snrs.is_empty() {
        return Err(Error::argument("need at least one SNR condition".to_string()));
    }
    let mut out = Vec::with_capacity(snrs.len());
    for (c, &snr) in snrs.iter().enumerate() {
        let cond_seed = mix_seed(seed, c as u64);
        let mixed: Vec<LabeledClip> = if snr == f64::INFINITY {
            clips.to_vec()
        } else {
            crate::util::par_map(clips.len(), |i| {
                let noise_buf = gen_noise(noise, clips[i].buffer.len(), mix_seed(cond_seed, i as u64))?;
                let buffer = mix_noise(&clips[i].buffer, &noise_buf, snr)?;
                Ok(LabeledClip { buffer, class_id: clips[i].class_id, snr_db: Some(snr) })
            })
            .into_iter()
            .collect::<Result<_>>()?
        };
        let (blocks, labels) = frame_dataset(&mixed, &model.config)?;
        let (loss, accuracy) = eval_metrics(model, &blocks, &labels)?;
        out.push(EvalCondition { snr_db: snr, accuracy, loss, count: clips.len() });
    }
    Ok(out)
}

/// Renders evaluation conditions as the accuracy CSV artifact.
pub fn eval_csv(conditions: &[EvalCondition]) -> String {
    let mut out = String::from("snr_db,accuracy,loss\n");
    for c in conditions {
        let snr = if c.snr_db == f64::INFINITY { "inf".to_string() } else { format!("{}", c.snr_db) };
        out.push_str(&format!("{},{:.6},{:.6}\n", snr, c.accuracy, c.loss));
    }
    out
}

/// Worst finite-difference disagreement within one parameter group.
#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub fd: f64,
}

/// Per-group finite-difference comparison of a full gradient set.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub groups: Vec<GroupReport>,
    pub tol: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_err <= self.tol)
    }

    /// One line per group, e.g. `fb.mu max_rel_err 3.1e-7 ok`.
    pub fn lines(&self) -> Vec<String> {
        self.groups
            .iter()
            .map(|g| {
                let status = if g.max_rel_err <= self.tol { "ok" } else { "FAIL" };
                format!("{:<14} max_rel_err {:.3e} {}", g.name, g.max_rel_err, status)
            })
            .collect()
    }
}

fn batch_loss(model: &AcousticModel, blocks: &[RawFrameBlock], labels: &[usize]) -> Result<f64> {
    let fwd = model.forward_train(blocks)?;
    let mut sum = 0.0;
    for (logits, &label) in fwd.logits.iter().zip(labels) {
        sum += cross_entropy(logits, label)?;
    }
    Ok(sum / blocks.len() as f64)
}

/// Sweeps every coordinate of every trainable group, comparing `grads`
/// against central finite differences of the batch loss. The relative error
/// uses `max(1, |analytic|)` in the denominator so near-zero gradients are
/// compared absolutely.
pub fn compare_grads(
    model: &AcousticModel,
    blocks: &[RawFrameBlock],
    labels: &[usize],
    grads: &GradientSet,
    tol: f64,
) -> Result<GradReport> {
    let mut groups = Vec::new();
    for (name, g) in grads.groups() {
        // finite differences per coordinate, in parallel
        let fds: Vec<Result<f64>> = crate::util::par_map(g.len(), |idx| {
            let mut probe = model.clone();
            let (base, h) = {
                let mut pgroups = probe.trainable();
                let (_, p) = pgroups
                    .iter_mut()
                    .find(|(n, _)| *n == name)
                    .ok_or_else(|| Error::contract("grad_check", format!("no trainable group {name}")))?;
                let base = p[idx];
                // Step sizes balance cancellation against kink hopping: a
                // center-frequency nudge moves a whole spectrogram row, so a
                // step that is tiny for a dense weight still jumps rectifier
                // gates and pool argmaxes downstream.
                let scale = if name == "fb.mu" { 1e-8 } else { 1e-6 };
                (base, scale * base.abs().max(1.0))
            };
            let set = |m: &mut AcousticModel, v: f64| {
                let mut pg = m.trainable();
                let (_, p) = pg.iter_mut().find(|(n, _)| *n == name).unwrap();
                p[idx] = v;
            };
            set(&mut probe, base + h);
            let hi = batch_loss(&probe, blocks, labels)?;
            set(&mut probe, base - h);
            let lo = batch_loss(&probe, blocks, labels)?;
            Ok((hi - lo) / (2.0 * h))
        });
        let mut worst = GroupReport { name: name.to_string(), max_rel_err: 0.0, worst_index: 0, analytic: 0.0, fd: 0.0 };
        for (idx, fd) in fds.into_iter().enumerate() {
            let fd = fd?;
            let rel = (g[idx] - fd).abs() / g[idx].abs().max(1.0);
            if rel > worst.max_rel_err {
                worst = GroupReport { name: name.to_string(), max_rel_err: rel, worst_index: idx, analytic: g[idx], fd };
            }
        }
        groups.push(worst);
    }
    Ok(GradReport { groups, tol })
}

/// Model plus synthetic batch used for gradient verification. The freshly
/// initialized parameters are jittered slightly: exact zeros from the init
/// would park rectifier inputs exactly on their kinks, where one-sided
/// activation makes finite differences disagree with the (correct)
/// subgradient at any step size.
pub fn grad_check_fixture(
    config: ModelConfig,
    seed: u64,
) -> Result<(AcousticModel, Vec<RawFrameBlock>, Vec<usize>)> {
    let mut model = AcousticModel::init(config, seed)?;
    let mut rng = stream_rng(seed, "gradcheck-jitter");
    use rand::Rng;
    for (name, p) in model.trainable() {
        if name == "fb.mu" {
            for v in p.iter_mut() {
                *v = (*v + rng.gen_range(-0.002..0.002)).clamp(1e-3, 0.49);
            }
        } else {
            for v in p.iter_mut() {
                *v += rng.gen_range(-0.02..0.02);
            }
        }
    }
    let classes = model.config.classes;
    let clips: Vec<LabeledClip> = (0..2)
        .map(|i| crate::dsp::synthesize_clip(i % classes, mix_seed(seed, 1000 + i as u64)))
        .collect::<Result<_>>()?;
    let (blocks, labels) = frame_dataset(&clips, &model.config)?;
    Ok((model, blocks, labels))
}

/// Builds a tiny synthetic batch for the given config, computes analytic
/// gradients, and verifies every coordinate against finite differences.
pub fn grad_check(config: ModelConfig, seed: u64, tol: f64) -> Result<GradReport> {
    let (model, blocks, labels) = grad_check_fixture(config, seed)?;

    let fwd = model.forward_train(&blocks)?;
    let b = blocks.len() as f64;
    let dlogits: Vec<Vec<f64>> = fwd
        .logits
        .iter()
        .zip(&labels)
        .map(|(logits, &label)| {
            let (_, mut d) = cross_entropy_grad(logits, label)?;
            for v in &mut d {
                *v /= b;
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let grads = model.backward_train(&blocks, &fwd, &dlogits)?;
    compare_grads(&model, &blocks, &labels, &grads, tol)
}

/// Result of the filter transfer experiment: accuracy on the target split
/// after from-scratch training versus training with imported, frozen filter
/// centers.
#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub scratch_accuracy: f64,
    pub transfer_accuracy: f64,
    pub scratch_metrics: Vec<MetricRow>,
    pub transfer_metrics: Vec<MetricRow>,
}

/// Trains the same configuration twice on the target data: once from
/// scratch, once with `filters` imported and frozen. Import mismatches
/// (family, filter count, kernel length) fail before any training happens.
pub fn transfer_experiment(
    filters: &FilterExport,
    cfg: &TrainConfig,
    train_clips: &[LabeledClip],
    eval_clips: &[LabeledClip],
) -> Result<TransferOutcome> {
    if eval_clips.is_empty() {
        return Err(Error::Data("transfer experiment needs an evaluation split".to_string()));
    }
    let mut transfer_model = AcousticModel::init(cfg.model.clone(), cfg.seed)?;
    apply_filters(&mut transfer_model, filters)?;
    transfer_model.config.freeze_filters = true;

    let scratch = train(cfg, train_clips, eval_clips)?;
    let transfer = train_model(transfer_model, cfg, train_clips, eval_clips)?;

    let last_eval = |rows: &[MetricRow]| {
        rows.iter().rev().find(|r| r.split == "eval").map(|r| r.accuracy).unwrap_or(0.0)
    };
    Ok(TransferOutcome {
        scratch_accuracy: last_eval(&scratch.metrics),
        transfer_accuracy: last_eval(&transfer.metrics),
        scratch_metrics: scratch.metrics,
        transfer_metrics: transfer.metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{synthesize_dataset, FormantTable};
    use crate::model::Variant;

    fn tiny_cfg(variant: Variant, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(ModelConfig::tiny().with_variant(variant), seed);
        cfg.epochs = 2;
        cfg.batch = 4;
        cfg
    }

    fn tiny_clips(count: usize, seed: u64) -> Vec<LabeledClip> {
        synthesize_dataset(count, 3, seed, FormantTable::Standard).unwrap()
    }

    #[test]
    fn training_runs_and_reports_metrics() {
        let cfg = tiny_cfg(Variant::A, 1);
        let train_clips = tiny_clips(12, 100);
        let eval_clips = tiny_clips(6, 200);
        let out = train(&cfg, &train_clips, &eval_clips).unwrap();
        assert_eq!(out.epochs_run, 2);
        assert_eq!(out.step, 2 * 3); // 12 clips / batch 4 = 3 steps per epoch
        assert_eq!(out.metrics.len(), 4); // train + eval per epoch
        assert!(out.metrics.iter().all(|r| r.loss.is_finite() && (0.0..=1.0).contains(&r.accuracy)));
        let csv = metrics_csv(&out.metrics);
        assert!(csv.starts_with("epoch,split,loss,accuracy\n"));
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("1,train,"));
        assert!(csv.contains("2,eval,"));
    }

    #[test]
    fn same_seed_same_data_is_bit_identical() {
        let cfg = tiny_cfg(Variant::ArMr, 3);
        let train_clips = tiny_clips(8, 300);
        let eval_clips = tiny_clips(4, 400);
        let a = train(&cfg, &train_clips, &eval_clips).unwrap();
        let b = train(&cfg, &train_clips, &eval_clips).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.metrics, b.metrics);
        let c = train(&TrainConfig { seed: 4, ..cfg.clone() }, &train_clips, &eval_clips).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn training_reduces_the_loss_on_a_learnable_problem() {
        let mut cfg = tiny_cfg(Variant::A, 5);
        cfg.epochs = 6;
        cfg.lr = 3e-3;
        let clips = tiny_clips(24, 500);
        let out = train(&cfg, &clips, &[]).unwrap();
        let first = out.metrics.first().unwrap().loss;
        let last = out.metrics.last().unwrap().loss;
        assert!(last < first, "loss did not fall: {first} -> {last}");
    }

    #[test]
    fn early_stop_halts_after_reaching_the_threshold() {
        let mut cfg = tiny_cfg(Variant::A, 7);
        cfg.epochs = 50;
        cfg.early_stop_accuracy = Some(0.0); // any accuracy qualifies
        let out = train(&cfg, &tiny_clips(8, 600), &tiny_clips(4, 700)).unwrap();
        assert_eq!(out.epochs_run, 1);
    }

    #[test]
    fn trailing_single_clip_batches_are_dropped() {
        let mut cfg = tiny_cfg(Variant::A, 9);
        cfg.epochs = 1;
        cfg.batch = 4;
        let out = train(&cfg, &tiny_clips(9, 800), &[]).unwrap();
        assert_eq!(out.step, 2); // 9 = 4 + 4 + 1, tail dropped
    }

    #[test]
    fn empty_or_mislabeled_datasets_are_data_errors() {
        let cfg = tiny_cfg(Variant::A, 11);
        assert!(matches!(train(&cfg, &[], &[]), Err(Error::Data(_))));
        let mut clips = tiny_clips(4, 900);
        clips[2].class_id = 7; // tiny model has 3 classes
        assert!(matches!(train(&cfg, &clips, &[]), Err(Error::Data(_))));
    }

    #[test]
    fn evaluating_clean_equals_evaluating_at_infinite_snr() {
        let cfg = tiny_cfg(Variant::A, 13);
        let out = train(&cfg, &tiny_clips(8, 1000), &[]).unwrap();
        let eval_clips = tiny_clips(6, 1100);
        let conds =
            evaluate(&out.model, &eval_clips, &[f64::INFINITY, 10.0], NoiseKind::White, 42).unwrap();
        assert_eq!(conds.len(), 2);
        let clean_again = evaluate(&out.model, &eval_clips, &[f64::INFINITY], NoiseKind::White, 99).unwrap();
        // the clean condition never touches the noise stream or the seed
        assert_eq!(conds[0], clean_again[0]);
        assert!(conds.iter().all(|c| c.count == 6 && c.loss.is_finite()));

        let csv = eval_csv(&conds);
        assert!(csv.starts_with("snr_db,accuracy,loss\n"));
        assert!(csv.contains("inf,"));
        assert!(csv.contains("10,"));
    }

    #[test]
    fn evaluation_is_deterministic_in_the_seed() {
        let cfg = tiny_cfg(Variant::A, 15);
        let out = train(&cfg, &tiny_clips(8, 1200), &[]).unwrap();
        let eval_clips = tiny_clips(4, 1300);
        let a = evaluate(&out.model, &eval_clips, &[5.0], NoiseKind::Pink, 7).unwrap();
        let b = evaluate(&out.model, &eval_clips, &[5.0], NoiseKind::Pink, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_check_passes_on_the_tiny_config() {
        let report = grad_check(ModelConfig::tiny().with_variant(Variant::ArMr), 17, 1e-4).unwrap();
        assert!(report.passed(), "{:?}", report.lines());
        // every trainable group is covered
        assert!(report.groups.iter().any(|g| g.name == "fb.mu"));
        assert_eq!(report.groups.len(), 21);
        for line in report.lines() {
            assert!(line.ends_with("ok"));
        }
    }

    #[test]
    fn corrupted_gradients_are_flagged_by_the_comparison() {
        let config = ModelConfig::tiny().with_variant(Variant::A);
        let (model, blocks, labels) = grad_check_fixture(config, 19).unwrap();
        let fwd = model.forward_train(&blocks).unwrap();
        let dlogits: Vec<Vec<f64>> = fwd
            .logits
            .iter()
            .zip(&labels)
            .map(|(l, &c)| {
                let (_, mut d) = cross_entropy_grad(l, c).unwrap();
                for v in &mut d {
                    *v /= 2.0;
                }
                d
            })
            .collect();
        let mut grads = model.backward_train(&blocks, &fwd, &dlogits).unwrap();
        grads.head.out_b[0] += 0.5;
        let report = compare_grads(&model, &blocks, &labels, &grads, 1e-4).unwrap();
        assert!(!report.passed());
        let bad = report.groups.iter().find(|g| g.name == "head.out_b").unwrap();
        assert!(bad.max_rel_err > 0.1);
        assert_eq!(bad.worst_index, 0);
        // everything else still passes
        for g in &report.groups {
            if g.name != "head.out_b" {
                assert!(g.max_rel_err <= 1e-4, "{}: {}", g.name, g.max_rel_err);
            }
        }
    }

    #[test]
    fn transfer_experiment_rejects_mismatched_filters_before_training() {
        let cfg = tiny_cfg(Variant::A, 21);
        let filters = FilterExport {
            family: crate::filterbank::FilterFamily::CosineGaussian,
            kernel_len: 33, // model uses 17
            mu: vec![0.1; 8],
        };
        match transfer_experiment(&filters, &cfg, &tiny_clips(4, 1500), &tiny_clips(4, 1600)) {
            Err(Error::Contract { stage, .. }) => assert_eq!(stage, "filters"),
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn transfer_experiment_trains_both_arms() {
        let mut cfg = tiny_cfg(Variant::A, 23);
        cfg.epochs = 1;
        let source = AcousticModel::init(cfg.model.clone(), 99).unwrap();
        let filters = FilterExport {
            family: source.fb.family,
            kernel_len: source.fb.k,
            mu: source.fb.mu.clone(),
        };
        let out = transfer_experiment(&filters, &cfg, &tiny_clips(8, 1700), &tiny_clips(4, 1800)).unwrap();
        assert!(!out.scratch_metrics.is_empty());
        assert!(!out.transfer_metrics.is_empty());
        assert!((0.0..=1.0).contains(&out.scratch_accuracy));
        assert!((0.0..=1.0).contains(&out.transfer_accuracy));
    }
}

