//! Builds each filter family at mel-spaced center frequencies and reports the
//! per-kernel spectral properties: where the frequency response actually
//! peaks, and how bandwidth grows with center frequency. Also round-trips the
//! centers through the text export format.
//! Run with `cargo run --example filter_kernels`.

use relward::checkpoint::{export_filters, import_filters};
use relward::filterbank::{synthesize_kernels, FilterFamily, FilterbankParams};
use relward::model::{AcousticModel, ModelConfig, Variant};
use relward::Result;

/// Magnitude of the length-`n` DFT of `taps` zero-padded to `n`, at bin `b`.
fn dft_mag(taps: &[f64], n: usize, b: usize) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &v) in taps.iter().enumerate() {
        let ang = -std::f64::consts::TAU * b as f64 * i as f64 / n as f64;
        re += v * ang.cos();
        im += v * ang.sin();
    }
    (re * re + im * im).sqrt()
}

fn describe(family: FilterFamily) -> Result<()> {
    let params = FilterbankParams::init_mel_default(family, 12, 129)?;
    let bank = synthesize_kernels(&params)?;
    let n = 4096;
    println!("{}", family);
    println!("  {:>3} {:>10} {:>10} {:>9}", "idx", "center", "peak", "3dB-width");
    for i in 0..params.f() {
        let taps = bank.kernels.row(i);
        let mags: Vec<f64> = (0..n / 2).map(|b| dft_mag(taps, n, b)).collect();
        let peak_bin = (0..n / 2).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        let half = mags[peak_bin] / 2.0f64.sqrt();
        let width = mags.iter().filter(|&&m| m >= half).count();
        println!(
            "  {:3} {:10.5} {:10.5} {:9.5}",
            i,
            params.mu[i],
            peak_bin as f64 / n as f64,
            width as f64 / n as f64
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    for family in [FilterFamily::CosineGaussian, FilterFamily::Sinc, FilterFamily::FixedMel] {
        describe(family)?;
        println!();
    }

    // Centers survive the text table bit for bit.
    let model = AcousticModel::init(ModelConfig::tiny().with_variant(Variant::A), 3)?;
    let path = std::env::temp_dir().join("relward-examples/filters.txt");
    export_filters(&model, &path)?;
    let back = import_filters(&path)?;
    assert_eq!(back.mu, model.fb.mu);
    println!("exported and re-imported {} centers bit-exactly via {}", back.mu.len(), path.display());
    Ok(())
}
