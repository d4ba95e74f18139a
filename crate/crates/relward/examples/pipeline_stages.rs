//! Walks a single clip through every stage of the representation pipeline and
//! prints the shape plus a value summary at each step: framed waveform, per
//! band log energies, per-band normalization, center-frame pruning, 2-D
//! modulation filtering, frequency pooling, and the normalized features the
//! classifier head consumes. Run with `cargo run --example pipeline_stages`.

use relward::dsp::{frame_signal, synthesize_clip};
use relward::model::{AcousticModel, ModelConfig, Variant};
use relward::Result;

fn summary(data: &[f64]) -> String {
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    format!("min {lo:8.3}  mean {mean:8.3}  max {hi:8.3}")
}

fn main() -> Result<()> {
    let model = AcousticModel::init(ModelConfig::desk().with_variant(Variant::ArMr), 4)?;
    let cfg = &model.config;
    let dims = cfg.dims()?;

    let clip = synthesize_clip(5, 77)?;
    let block = frame_signal(&clip.buffer, cfg.frame_len, cfg.hop, cfg.frames, clip.buffer.len() / 2)?;
    println!(
        "clip: {} samples, class {}; framed to {} x {} around the clip center\n",
        clip.buffer.len(),
        clip.class_id,
        cfg.frames,
        cfg.frame_len
    );

    let (logits, front, head) = model.forward_eval(&block)?;

    println!("{:22} {:>12}   {}", "stage", "shape", "values");
    let w = front.acoustic_weights.as_ref().map(|(w, _)| &w.w[..]).expect("weighting on");
    println!("{:22} {:>12}   {}", "log energies", format!("{}x{}", front.x.rows, front.x.cols), summary(&front.x.data));
    println!("{:22} {:>12}   {}", "acoustic relevance", format!("{}", w.len()), summary(w));
    println!(
        "{:22} {:>12}   {}",
        "instance norm + prune",
        format!("{}x{}", front.zp.rows, front.zp.cols),
        summary(&front.zp.data)
    );
    println!(
        "{:22} {:>12}   {}",
        "modulation maps",
        format!("{}x{}x{}", dims.conv.0, dims.conv.1, dims.conv.2),
        summary(&front.pooled.data) // post-pool values; pre-pool lives in front.conv
    );
    let mw = front.modulation_weights.as_ref().map(|(w, _)| &w.w[..]).expect("weighting on");
    println!("{:22} {:>12}   {}", "modulation relevance", format!("{}", mw.len()), summary(mw));
    println!(
        "{:22} {:>12}   {}",
        "batch-norm input",
        format!("{}x{}x{}", front.q.d0, front.q.d1, front.q.d2),
        summary(&front.q.data)
    );
    println!(
        "{:22} {:>12}   {}",
        "head features",
        format!("{}", head.flat.len()),
        summary(&head.flat)
    );
    println!("{:22} {:>12}   {}", "logits", format!("{}", logits.len()), summary(&logits));

    let best = (0..logits.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap();
    println!("\nuntrained prediction: class {best} (meaningless until trained, but every stage is live)");
    Ok(())
}
