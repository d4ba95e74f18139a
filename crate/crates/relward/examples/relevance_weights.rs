//! Shows the two relevance-weighting stages at work: per-band weights on the
//! acoustic log energies and per-map weights on the modulation features. At
//! initialization the weighting sub-networks have zero output layers, so every
//! weight is exactly uniform; a few training steps differentiate them.
//! Run with `cargo run --example relevance_weights`.

use relward::dsp::{frame_signal, synthesize_dataset, FormantTable};
use relward::model::{ModelConfig, Variant};
use relward::train::{train, TrainConfig};
use relward::Result;

fn weight_summary(label: &str, w: &[f64]) {
    let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let top: Vec<usize> = {
        let mut idx: Vec<usize> = (0..w.len()).collect();
        idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
        idx.truncate(3);
        idx
    };
    println!("  {label}: {} weights in [{lo:.4}, {hi:.4}], strongest at {top:?}", w.len());
}

fn main() -> Result<()> {
    let clips = synthesize_dataset(24, 3, 11, FormantTable::Standard)?;
    let mut cfg = TrainConfig::new(ModelConfig::tiny().with_variant(Variant::ArMr), 5);
    cfg.epochs = 4;
    cfg.batch = 4;
    cfg.lr = 1e-2;

    let outcome = train(&cfg, &clips, &[])?;
    let model = &outcome.model;

    for clip in clips.iter().take(3) {
        let block = frame_signal(
            &clip.buffer,
            model.config.frame_len,
            model.config.hop,
            model.config.frames,
            clip.buffer.len() / 2,
        )?;
        let (_, front, _) = model.forward_eval(&block)?;
        println!("clip of class {}:", clip.class_id);
        let (aw, _) = front.acoustic_weights.as_ref().expect("acoustic weighting is on");
        weight_summary("acoustic bands", &aw.w);
        let (mw, _) = front.modulation_weights.as_ref().expect("modulation weighting is on");
        weight_summary("modulation maps", &mw.w);
    }

    // Each weight vector is a softmax output: positive, summing to one.
    let clip = &clips[0];
    let block = frame_signal(
        &clip.buffer,
        model.config.frame_len,
        model.config.hop,
        model.config.frames,
        clip.buffer.len() / 2,
    )?;
    let (_, front, _) = model.forward_eval(&block)?;
    let (aw, _) = front.acoustic_weights.as_ref().unwrap();
    let sum: f64 = aw.w.iter().sum();
    println!("\nacoustic weight sum = {sum} (softmax-normalized)");
    Ok(())
}
