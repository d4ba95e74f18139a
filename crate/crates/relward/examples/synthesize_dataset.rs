//! Builds a small labeled clip dataset, mixes in noise at chosen SNRs, and
//! writes WAV files plus a tab-separated manifest that `train` and `eval`
//! consume. Run with `cargo run --example synthesize_dataset`.

use relward::dsp::{mix_conditions, synthesize_dataset, write_manifest, write_wav, FormantTable, NoiseKind};
use relward::Result;

fn main() -> Result<()> {
    let out = std::env::temp_dir().join("relward-examples/dataset");
    let seed = 7;

    // 24 clips over 8 classes: two strong class-specific resonances each, with
    // random fundamental, phases, and envelope providing within-class spread.
    let clips = synthesize_dataset(24, 8, seed, FormantTable::Standard)?;

    // Noise conditions are spread evenly within every class, so SNR carries no
    // information about the label.
    let conditions = [f64::INFINITY, 10.0, 0.0];
    let mixed = mix_conditions(&clips, &conditions, NoiseKind::White, seed)?;

    let mut entries = Vec::new();
    for (i, clip) in mixed.iter().enumerate() {
        let name = format!("clip_{i:05}.wav");
        write_wav(&out.join(&name), &clip.buffer)?;
        entries.push((name, clip.class_id, clip.snr_db));
        println!(
            "clip {i:2}  class {}  snr {:>4}  peak {:+.3}",
            clip.class_id,
            clip.snr_db.map(|s| format!("{s}")).unwrap_or_else(|| "inf".into()),
            clip.buffer.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
        );
    }
    write_manifest(&out.join("manifest.tsv"), &entries)?;
    println!("\nwrote {} clips and manifest.tsv under {}", entries.len(), out.display());
    Ok(())
}
