//! Filter transfer: learn filter centers on one data distribution, export
//! them, then train a fresh model on a second distribution with the imported
//! centers frozen, against a from-scratch baseline on that same distribution.
//! Run with `cargo run --example filter_transfer`.

use relward::checkpoint::FilterExport;
use relward::dsp::{synthesize_dataset, FormantTable};
use relward::model::{ModelConfig, Variant};
use relward::train::{train, transfer_experiment, TrainConfig};
use relward::Result;

fn main() -> Result<()> {
    // Source domain: standard resonance table. The desk-scale model is the
    // smallest one that learns this task dependably; expect roughly a minute.
    let src_train = synthesize_dataset(96, 3, 500, FormantTable::Standard)?;
    let mut cfg = TrainConfig::new(ModelConfig::desk().with_variant(Variant::A), 3);
    cfg.epochs = 24;
    cfg.batch = 16;
    cfg.lr = 3e-3;
    cfg.early_stop_accuracy = Some(0.95);
    let source = train(&cfg, &src_train, &[])?;
    let filters = FilterExport {
        family: source.model.fb.family,
        kernel_len: source.model.fb.k,
        mu: source.model.fb.mu.clone(),
    };
    println!("learned {} centers on the source domain", filters.mu.len());

    // Target domain: every resonance moved to new frequencies.
    let tgt_train = synthesize_dataset(96, 3, 600, FormantTable::Shifted)?;
    let tgt_eval = synthesize_dataset(48, 3, 700, FormantTable::Shifted)?;
    let outcome = transfer_experiment(&filters, &cfg, &tgt_train, &tgt_eval)?;

    println!("target-domain eval accuracy:");
    println!("  from scratch        {:.4}", outcome.scratch_accuracy);
    println!("  frozen source bank  {:.4}", outcome.transfer_accuracy);
    println!(
        "gap {:+.4} (imported centers {} retrained ones)",
        outcome.transfer_accuracy - outcome.scratch_accuracy,
        if outcome.transfer_accuracy >= outcome.scratch_accuracy { "match or beat" } else { "trail" }
    );
    Ok(())
}
