//! Trains a small model end to end on synthetic clips, prints per-epoch
//! metrics, then round-trips the result through a checkpoint file and shows
//! that the reloaded model scores identically.
//! Run with `cargo run --example train_variant`, optionally passing a variant
//! label (default "A-R").

use relward::checkpoint::{load_checkpoint, save_checkpoint};
use relward::dsp::{synthesize_dataset, FormantTable, NoiseKind};
use relward::model::{ModelConfig, Variant};
use relward::train::{evaluate, train, TrainConfig};
use relward::Result;

fn main() -> Result<()> {
    let label = std::env::args().nth(1).unwrap_or_else(|| "A-R".to_string());
    let variant: Variant = label.parse()?;

    let train_clips = synthesize_dataset(48, 3, 100, FormantTable::Standard)?;
    let eval_clips = synthesize_dataset(24, 3, 200, FormantTable::Standard)?;

    let mut cfg = TrainConfig::new(ModelConfig::tiny().with_variant(variant), 1);
    cfg.epochs = 8;
    cfg.batch = 8;
    cfg.lr = 1e-2;

    println!("training variant {variant} on {} clips", train_clips.len());
    let outcome = train(&cfg, &train_clips, &eval_clips)?;
    for row in &outcome.metrics {
        println!("epoch {:2} {:5}  loss {:.4}  accuracy {:.4}", row.epoch, row.split, row.loss, row.accuracy);
    }
    println!("{} optimizer steps over {} epochs", outcome.step, outcome.epochs_run);

    let path = std::env::temp_dir().join("relward-examples/train_variant.ckpt");
    save_checkpoint(&outcome.model, outcome.step, &path)?;
    let (reloaded, step) = load_checkpoint(&path)?;
    assert_eq!(reloaded, outcome.model);
    assert_eq!(step, outcome.step);

    let before = evaluate(&outcome.model, &eval_clips, &[f64::INFINITY], NoiseKind::White, 9)?;
    let after = evaluate(&reloaded, &eval_clips, &[f64::INFINITY], NoiseKind::White, 9)?;
    assert_eq!(before, after);
    println!(
        "checkpoint round trip is exact: clean accuracy {:.4} before and after reload",
        after[0].accuracy
    );
    Ok(())
}
