//! Audio front end: WAV ingestion, synthetic clip generation, noise mixing
//! at a requested SNR, and slicing signals into the framed raw-sample blocks
//! the network consumes.

pub mod wav;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::Mat;

pub use wav::{read_wav, write_wav};

/// The only sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16000;
/// Default analysis frame length (25 ms at 16 kHz).
pub const FRAME_LEN: usize = 400;
/// Default frame hop (10 ms at 16 kHz).
pub const FRAME_HOP: usize = 160;
/// Length of a synthesized clip: 1.2 s.
pub const CLIP_SAMPLES: usize = 19200;
/// Number of synthetic classes.
pub const CLASS_COUNT: usize = 8;

/// Mono audio at 16 kHz, amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::argument(format!("non-finite sample {bad}")));
        }
        Ok(Self { samples, sample_rate: SAMPLE_RATE })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared amplitude over the whole buffer.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        for &v in &self.samples {
            acc += v * v;
        }
        acc / self.samples.len() as f64
    }
}

/// A t×s block of raw samples centered on the frame being classified.
#[derive(Debug, Clone)]
pub struct RawFrameBlock {
    /// t rows of s samples each.
    pub frames: Mat,
    pub frame_len: usize,
    pub hop: usize,
    /// Index of the label frame: always (t-1)/2.
    pub center_index: usize,
}

/// A clip plus its label and the SNR it was mixed at (`None` = clean).
#[derive(Debug, Clone)]
pub struct LabeledClip {
    pub buffer: SampleBuffer,
    pub class_id: usize,
    pub snr_db: Option<f64>,
}

/// Slices `t` frames of `s` samples spaced `hop` apart so that the block is
/// centered on `center_sample`. Frames that extend past either end of the
/// buffer are zero-padded.
pub fn frame_signal(
    buf: &SampleBuffer,
    s: usize,
    hop: usize,
    t: usize,
    center_sample: usize,
) -> Result<RawFrameBlock> {
    if s == 0 || hop == 0 || t == 0 {
        return Err(Error::argument(format!("frame dims must be positive, got s={s} hop={hop} t={t}")));
    }
    if t % 2 == 0 {
        return Err(Error::argument(format!("frame count must be odd, got t={t}")));
    }
    let n = buf.samples.len() as i64;
    let start = center_sample as i64 - (s as i64) / 2 - (hop as i64) * ((t as i64 - 1) / 2);
    let frames = Mat::from_fn(t, s, |j, i| {
        let idx = start + (j as i64) * hop as i64 + i as i64;
        if idx < 0 || idx >= n {
            0.0
        } else {
            buf.samples[idx as usize]
        }
    });
    Ok(RawFrameBlock { frames, frame_len: s, hop, center_index: (t - 1) / 2 })
}

/// Two-formant templates, one pair per class, spaced across 300-3400 Hz.
/// `Shifted` is a second, disjoint table used to test whether learned filters
/// carry over to data with different resonances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormantTable {
    Standard,
    Shifted,
}

impl FormantTable {
    pub fn pairs(&self) -> &'static [(f64, f64); CLASS_COUNT] {
        match self {
            FormantTable::Standard => &[
                (400.0, 2000.0),
                (700.0, 2000.0),
                (1100.0, 2000.0),
                (1600.0, 2000.0),
                (400.0, 2900.0),
                (700.0, 2900.0),
                (1100.0, 2900.0),
                (1600.0, 2900.0),
            ],
            FormantTable::Shifted => &[
                (500.0, 2300.0),
                (850.0, 2300.0),
                (1250.0, 2300.0),
                (1750.0, 2300.0),
                (500.0, 3200.0),
                (850.0, 3200.0),
                (1250.0, 3200.0),
                (1750.0, 3200.0),
            ],
        }
    }
}

impl std::str::FromStr for FormantTable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(FormantTable::Standard),
            "shifted" => Ok(FormantTable::Shifted),
            other => Err(Error::argument(format!("unknown formant table '{other}' (expected standard|shifted)"))),
        }
    }
}

/// Deterministically synthesizes a 1.2 s clip of class `class_id` from the
/// standard formant table.
pub fn synthesize_clip(class_id: usize, seed: u64) -> Result<LabeledClip> {
    synthesize_clip_from(class_id, seed, FormantTable::Standard)
}

/// Clip synthesis with an explicit formant table. The class is carried by two
/// strong resonant tones; a weak harmonic series at a random fundamental plus
/// randomized phases and amplitude envelope provide within-class variation.
pub fn synthesize_clip_from(class_id: usize, seed: u64, table: FormantTable) -> Result<LabeledClip> {
    let pairs = table.pairs();
    if class_id >= pairs.len() {
        return Err(Error::argument(format!("class_id {class_id} out of range [0, {})", pairs.len())));
    }
    let (f1_base, f2_base) = pairs[class_id];
    let mut rng = stream_rng(seed, &format!("synth/{class_id}"));
    let fs = SAMPLE_RATE as f64;

    let f0: f64 = rng.gen_range(95.0..155.0);
    let f1 = f1_base + rng.gen_range(-10.0..10.0);
    let f2 = f2_base + rng.gen_range(-10.0..10.0);
    let ph1 = rng.gen_range(0.0..std::f64::consts::TAU);
    let ph2 = rng.gen_range(0.0..std::f64::consts::TAU);

    // (frequency, amplitude, phase) triples: the two formant tones dominate.
    let mut parts = vec![(f1, 1.0, ph1), (f2, 0.9, ph2)];
    let mut h = 1.0;
    while h * f0 <= 3800.0 {
        parts.push((h * f0, 0.15 / h, rng.gen_range(0.0..std::f64::consts::TAU)));
        h += 1.0;
    }

    let attack = rng.gen_range(0.03..0.08) * fs;
    let decay = rng.gen_range(0.06..0.15) * fs;
    let level = rng.gen_range(0.85..1.0);

    let mut samples = vec![0.0f64; CLIP_SAMPLES];
    for (freq, amp, phase) in parts {
        let w = std::f64::consts::TAU * freq / fs;
        for (i, out) in samples.iter_mut().enumerate() {
            *out += amp * (w * i as f64 + phase).sin();
        }
    }
    let n = CLIP_SAMPLES as f64;
    for (i, out) in samples.iter_mut().enumerate() {
        let i = i as f64;
        let mut env = 1.0;
        if i < attack {
            env *= 0.5 * (1.0 - (std::f64::consts::PI * i / attack).cos());
        }
        if i > n - 1.0 - decay {
            env *= 0.5 * (1.0 - (std::f64::consts::PI * (n - 1.0 - i) / decay).cos());
        }
        *out *= env;
    }
    let peak = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let scale = 0.9 * level / peak;
        for v in &mut samples {
            *v *= scale;
        }
    }
    Ok(LabeledClip { buffer: SampleBuffer::new(samples)?, class_id, snr_db: None })
}

/// Spectral shape of the synthetic noise generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            other => Err(Error::argument(format!("unknown noise kind '{other}' (expected white|pink)"))),
        }
    }
}

/// Seeded Gaussian noise, white or pink-filtered, rms 0.2, clamped to [-1, 1].
pub fn gen_noise(kind: NoiseKind, len: usize, seed: u64) -> Result<SampleBuffer> {
    let mut rng = stream_rng(seed, "noise");
    let samples = match kind {
        NoiseKind::White => {
            let dist = Normal::new(0.0f64, 0.2).expect("valid stddev");
            (0..len).map(|_| dist.sample(&mut rng).clamp(-1.0, 1.0)).collect()
        }
        NoiseKind::Pink => {
            let dist = Normal::new(0.0, 1.0).expect("valid stddev");
            let mut b = [0.0f64; 7];
            let mut raw = Vec::with_capacity(len);
            for _ in 0..len {
                let white: f64 = dist.sample(&mut rng);
                b[0] = 0.99886 * b[0] + white * 0.0555179;
                b[1] = 0.99332 * b[1] + white * 0.0750759;
                b[2] = 0.96900 * b[2] + white * 0.1538520;
                b[3] = 0.86650 * b[3] + white * 0.3104856;
                b[4] = 0.55000 * b[4] + white * 0.5329522;
                b[5] = -0.7616 * b[5] - white * 0.0168980;
                let pink = b.iter().sum::<f64>() + white * 0.5362;
                b[6] = white * 0.115926;
                raw.push(pink);
            }
            let rms = (raw.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
            let scale = if rms > 0.0 { 0.2 / rms } else { 0.0 };
            raw.into_iter().map(|v| (v * scale).clamp(-1.0, 1.0)).collect()
        }
    };
    SampleBuffer::new(samples)
}

/// Gain applied to the noise so that 10·log10(p_clean / (g²·p_noise)) equals
/// `snr_db`.
pub fn snr_gain(p_clean: f64, p_noise: f64, snr_db: f64) -> f64 {
    (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Mixes noise into a clean signal at the requested SNR, with powers measured
/// over the full clip. `snr_db = +inf` is the clean sentinel and returns the
/// input unchanged. Noise shorter than the clean signal is tiled. If the mix
/// exceeds full scale it is rescaled uniformly, which preserves the
/// clean-to-noise power ratio.
pub fn mix_noise(clean: &SampleBuffer, noise: &SampleBuffer, snr_db: f64) -> Result<SampleBuffer> {
    if snr_db == f64::INFINITY {
        return Ok(clean.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::argument(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let n = clean.samples.len();
    let p_clean = clean.power();
    if p_clean == 0.0 {
        return Err(Error::DegenerateInput("clean signal has zero power".into()));
    }
    if noise.samples.is_empty() {
        return Err(Error::DegenerateInput("noise signal is empty".into()));
    }
    let m = noise.samples.len();
    let mut p_noise = 0.0;
    for i in 0..n {
        let v = noise.samples[i % m];
        p_noise += v * v;
    }
    p_noise /= n as f64;
    if p_noise == 0.0 {
        return Err(Error::DegenerateInput("noise signal has zero power".into()));
    }
    let g = snr_gain(p_clean, p_noise, snr_db);
    let mut out: Vec<f64> = (0..n).map(|i| clean.samples[i] + g * noise.samples[i % m]).collect();
    let peak = out.iter().fold(0.0f64, |mx, &v| mx.max(v.abs()));
    if peak > 1.0 {
        for v in &mut out {
            *v /= peak;
        }
    }
    SampleBuffer::new(out)
}

/// Synthesizes `count` labeled clips with classes assigned round-robin from
/// `0..classes`. Clip `i` uses the derived seed `mix_seed(seed, i)`, so any
/// clip can be regenerated in isolation.
pub fn synthesize_dataset(
    count: usize,
    classes: usize,
    seed: u64,
    table: FormantTable,
) -> Result<Vec<LabeledClip>> {
    if classes == 0 || classes > CLASS_COUNT {
        return Err(Error::argument(format!("classes must be in 1..={CLASS_COUNT}, got {classes}")));
    }
    crate::util::par_map(count, |i| {
        synthesize_clip_from(i % classes, crate::rng::mix_seed(seed, i as u64), table)
    })
    .into_iter()
    .collect()
}

/// Mixes every clip with freshly drawn noise at `snr_db` (`+inf` passes clips
/// through clean). Clip `i` gets noise from the derived seed
/// `mix_seed(seed, i)`, independent of the clip's own synthesis seed.
pub fn mix_dataset(
    clips: &[LabeledClip],
    snr_db: f64,
    kind: NoiseKind,
    seed: u64,
) -> Result<Vec<LabeledClip>> {
    crate::util::par_map(clips.len(), |i| {
        let clip = &clips[i];
        if snr_db == f64::INFINITY {
            return Ok(LabeledClip { buffer: clip.buffer.clone(), class_id: clip.class_id, snr_db: None });
        }
        let noise = gen_noise(kind, clip.buffer.len(), crate::rng::mix_seed(seed, i as u64))?;
        let mixed = mix_noise(&clip.buffer, &noise, snr_db)?;
        Ok(LabeledClip { buffer: mixed, class_id: clip.class_id, snr_db: Some(snr_db) })
    })
    .into_iter()
    .collect()
}

/// Spreads the noise conditions in `snrs` over a dataset so that every class
/// sees every condition equally often: the j-th occurrence of a class gets
/// `snrs[j % snrs.len()]` (`+inf` = clean). Assigning conditions by raw clip
/// index instead would alias noise level to class identity whenever the class
/// cycle and the condition cycle share a factor, turning the SNR into a label.
/// Noise for clip `i` comes from `mix_seed(seed, i)`.
pub fn mix_conditions(
    clips: &[LabeledClip],
    snrs: &[f64],
    kind: NoiseKind,
    seed: u64,
) -> Result<Vec<LabeledClip>> {
    if snrs.is_empty() {
        return Err(Error::argument("need at least one SNR condition".to_string()));
    }
    let mut seen = std::collections::HashMap::new();
    let assigned: Vec<f64> = clips
        .iter()
        .map(|clip| {
            let j = seen.entry(clip.class_id).or_insert(0usize);
            let snr = snrs[*j % snrs.len()];
            *j += 1;
            snr
        })
        .collect();
    crate::util::par_map(clips.len(), |i| {
        let (clip, snr) = (&clips[i], assigned[i]);
        if snr == f64::INFINITY {
            return Ok(LabeledClip { buffer: clip.buffer.clone(), class_id: clip.class_id, snr_db: None });
        }
        let noise = gen_noise(kind, clip.buffer.len(), crate::rng::mix_seed(seed, i as u64))?;
        let mixed = mix_noise(&clip.buffer, &noise, snr)?;
        Ok(LabeledClip { buffer: mixed, class_id: clip.class_id, snr_db: Some(snr) })
    })
    .into_iter()
    .collect()
}

/// One line of a dataset manifest: a WAV path (resolved against the manifest's
/// directory), its class, and the SNR it was mixed at (`None` = clean).
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub class_id: usize,
    pub snr_db: Option<f64>,
}

/// Reads a manifest of lines `path<TAB>class_id<TAB>snr_db` where snr_db is a
/// decibel value or `inf` for clean clips.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Data(format!(
                "{}:{}: expected 3 tab-separated fields, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let class_id: usize = fields[1].parse().map_err(|_| {
            Error::Data(format!("{}:{}: bad class_id '{}'", path.display(), lineno + 1, fields[1]))
        })?;
        let snr: f64 = fields[2].parse().map_err(|_| {
            Error::Data(format!("{}:{}: bad snr_db '{}'", path.display(), lineno + 1, fields[2]))
        })?;
        let snr_db = if snr == f64::INFINITY { None } else { Some(snr) };
        entries.push(ManifestEntry { path: base.join(fields[0]), class_id, snr_db });
    }
    Ok(entries)
}

/// Writes a manifest. Paths are recorded as given (normally relative to the
/// manifest's own directory).
pub fn write_manifest(path: &Path, entries: &[(String, usize, Option<f64>)]) -> Result<()> {
    let mut text = String::new();
    for (rel, class_id, snr) in entries {
        let snr_text = match snr {
            None => "inf".to_string(),
            Some(v) => format!("{v}"),
        };
        writeln!(text, "{rel}\t{class_id}\t{snr_text}").expect("string write");
    }
    crate::util::write_atomic(path, text.as_bytes())
}

/// Loads every clip named by a manifest.
pub fn load_clips(manifest_path: &Path) -> Result<Vec<LabeledClip>> {
    let entries = read_manifest(manifest_path)?;
    entries
        .into_iter()
        .map(|e| {
            let buffer = read_wav(&e.path)?;
            Ok(LabeledClip { buffer, class_id: e.class_id, snr_db: e.snr_db })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize) -> SampleBuffer {
        // Values stay inside [-1, 1] for any n used in tests.
        SampleBuffer::new((0..n).map(|i| i as f64 / 1024.0).collect()).unwrap()
    }

    #[test]
    fn frame_rows_follow_index_arithmetic() {
        // start = center - s/2 - hop·(t-1)/2 = 4 - 2 - 2 = 0
        let block = frame_signal(&ramp(16), 4, 2, 3, 4).unwrap();
        let want = [[0.0, 1.0, 2.0, 3.0], [2.0, 3.0, 4.0, 5.0], [4.0, 5.0, 6.0, 7.0]];
        for j in 0..3 {
            for i in 0..4 {
                assert_eq!(block.frames.at(j, i), want[j][i] / 1024.0);
            }
        }
        assert_eq!(block.center_index, 1);
    }

    #[test]
    fn constant_signal_gives_all_equal_frames() {
        let buf = SampleBuffer::new(vec![1.0; 16400]).unwrap();
        let block = frame_signal(&buf, 400, 160, 101, 8200).unwrap();
        assert!(block.frames.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn default_geometry_spans_16400_samples_unpadded() {
        // 400 + 160·100 = 16400, so a 16400-sample buffer centered at its
        // midpoint is consumed end to end with no padding.
        let buf = ramp(16400);
        let block = frame_signal(&buf, 400, 160, 101, 8200).unwrap();
        assert_eq!(block.frames.at(0, 0), buf.samples[0]);
        assert_eq!(block.frames.at(100, 399), buf.samples[16399]);
    }

    #[test]
    fn out_of_range_frames_are_zero_padded() {
        let buf = ramp(8);
        let block = frame_signal(&buf, 4, 2, 3, 1).unwrap();
        // start = 1 - 2 - 2 = -3: first row covers samples -3..1
        assert_eq!(block.frames.row(0), &[0.0, 0.0, 0.0, buf.samples[0]]);
    }

    #[test]
    fn degenerate_frame_dims_are_rejected() {
        let buf = ramp(8);
        assert!(frame_signal(&buf, 0, 1, 3, 0).is_err());
        assert!(frame_signal(&buf, 4, 0, 3, 0).is_err());
        assert!(frame_signal(&buf, 4, 2, 0, 0).is_err());
        assert!(frame_signal(&buf, 4, 2, 4, 0).is_err(), "even t must be rejected");
    }

    proptest! {
        #[test]
        fn contiguous_frames_flatten_back_to_the_padded_input(
            n in 1usize..64,
            s in 1usize..8,
            half_t in 0usize..3,
            center in 0usize..64,
        ) {
            let t = 2 * half_t + 1;
            let buf = ramp(n);
            let block = frame_signal(&buf, s, s, t, center).unwrap();
            let start = center as i64 - (s as i64) / 2 - (s as i64) * half_t as i64;
            for (k, &v) in block.frames.data.iter().enumerate() {
                let idx = start + k as i64;
                let want = if idx >= 0 && (idx as usize) < n { buf.samples[idx as usize] } else { 0.0 };
                prop_assert_eq!(v, want);
            }
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize_clip(3, 41).unwrap();
        let b = synthesize_clip(3, 41).unwrap();
        assert_eq!(a.buffer.samples, b.buffer.samples);
        let c = synthesize_clip(3, 42).unwrap();
        assert_ne!(a.buffer.samples, c.buffer.samples);
    }

    #[test]
    fn synthesis_peak_is_bounded() {
        for class_id in 0..CLASS_COUNT {
            for seed in [1, 99] {
                let clip = synthesize_clip(class_id, seed).unwrap();
                let peak = clip.buffer.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
                assert!(peak <= 0.9 + 1e-12, "class {class_id} seed {seed} peak {peak}");
                assert_eq!(clip.buffer.samples.len(), CLIP_SAMPLES);
            }
        }
    }

    #[test]
    fn unknown_class_is_rejected() {
        assert!(synthesize_clip(CLASS_COUNT, 1).is_err());
    }

    /// Magnitude of the DFT of `x` at `freq_hz`, by direct summation.
    fn dft_mag(x: &[f64], freq_hz: f64) -> f64 {
        let w = std::f64::consts::TAU * freq_hz / SAMPLE_RATE as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &v) in x.iter().enumerate() {
            re += v * (w * i as f64).cos();
            im -= v * (w * i as f64).sin();
        }
        (re * re + im * im).sqrt()
    }

    /// Finds the two strongest spectral peaks on a 1 Hz grid, suppressing a
    /// ±100 Hz neighborhood around the first before searching again.
    fn top_two_peaks(x: &[f64]) -> (f64, f64) {
        let lo = 100usize;
        let hi = 3600usize;
        let mags: Vec<f64> = (lo..=hi).map(|f| dft_mag(x, f as f64)).collect();
        let first = lo + mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let second = lo
            + mags
                .iter()
                .enumerate()
                .filter(|(i, _)| (lo + i).abs_diff(first) > 100)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
        let (a, b) = if first < second { (first, second) } else { (second, first) };
        (a as f64, b as f64)
    }

    #[test]
    fn class_formants_dominate_the_spectrum() {
        for (class_id, seed) in [(0usize, 5u64), (7, 11)] {
            let clip = synthesize_clip(class_id, seed).unwrap();
            let (f1_base, f2_base) = FormantTable::Standard.pairs()[class_id];
            let (p1, p2) = top_two_peaks(&clip.buffer.samples);
            assert!((p1 - f1_base).abs() <= 20.0, "class {class_id}: peak {p1} vs {f1_base}");
            assert!((p2 - f2_base).abs() <= 20.0, "class {class_id}: peak {p2} vs {f2_base}");
        }
    }

    #[test]
    fn shifted_table_moves_the_peaks() {
        let clip = synthesize_clip_from(0, 5, FormantTable::Shifted).unwrap();
        let (p1, p2) = top_two_peaks(&clip.buffer.samples);
        let (f1, f2) = FormantTable::Shifted.pairs()[0];
        assert!((p1 - f1).abs() <= 20.0, "peak {p1} vs {f1}");
        assert!((p2 - f2).abs() <= 20.0, "peak {p2} vs {f2}");
    }

    #[test]
    fn mix_gain_matches_power_ratio() {
        // p_clean = 0.04, p_noise = 0.01, snr 10 dB → g = sqrt(0.04/0.1)
        let clean = SampleBuffer::new(vec![0.2; 64]).unwrap();
        let noise = SampleBuffer::new(vec![0.1; 64]).unwrap();
        let out = mix_noise(&clean, &noise, 10.0).unwrap();
        let g = (out.samples[0] - 0.2) / 0.1;
        assert!((g - 0.6324555320336759).abs() < 1e-12, "g = {g}");
    }

    #[test]
    fn zero_snr_with_equal_powers_gives_unit_gain() {
        let clean = SampleBuffer::new(vec![0.3, -0.3, 0.3, -0.3]).unwrap();
        let noise = SampleBuffer::new(vec![-0.3, 0.3, -0.3, 0.3]).unwrap();
        let out = mix_noise(&clean, &noise, 0.0).unwrap();
        // g = 1 makes the mix cancel exactly
        assert!(out.samples.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn conditions_are_balanced_within_every_class() {
        // 24 clips, 8 classes, 2 conditions: each class must see each
        // condition 1-2 times, never all-one-condition.
        let clips = synthesize_dataset(24, 8, 4, FormantTable::Standard).unwrap();
        let mixed = mix_conditions(&clips, &[f64::INFINITY, 10.0], NoiseKind::White, 5).unwrap();
        for class in 0..8 {
            let conds: Vec<Option<f64>> =
                mixed.iter().filter(|c| c.class_id == class).map(|c| c.snr_db).collect();
            assert!(conds.contains(&None), "class {class} never clean: {conds:?}");
            assert!(conds.contains(&Some(10.0)), "class {class} never noisy: {conds:?}");
        }
        // clean entries pass the waveform through untouched
        let clean_idx = mixed.iter().position(|c| c.snr_db.is_none()).unwrap();
        assert_eq!(mixed[clean_idx].buffer.samples, clips[clean_idx].buffer.samples);
        assert!(mix_conditions(&clips, &[], NoiseKind::White, 5).is_err());
    }

    #[test]
    fn infinite_snr_returns_the_clean_signal() {
        let clean = synthesize_clip(1, 2).unwrap().buffer;
        let noise = gen_noise(NoiseKind::White, 100, 3).unwrap();
        let out = mix_noise(&clean, &noise, f64::INFINITY).unwrap();
        assert_eq!(out.samples, clean.samples);
    }

    #[test]
    fn silent_clean_input_is_degenerate() {
        let clean = SampleBuffer::new(vec![0.0; 32]).unwrap();
        let noise = gen_noise(NoiseKind::White, 32, 3).unwrap();
        assert!(matches!(mix_noise(&clean, &noise, 10.0), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn measured_snr_matches_request() {
        let clean = synthesize_clip(2, 9).unwrap().buffer;
        // quiet clean signal so the mix never needs rescaling
        let clean = SampleBuffer::new(clean.samples.iter().map(|v| v * 0.1).collect()).unwrap();
        let noise = gen_noise(NoiseKind::Pink, CLIP_SAMPLES, 4).unwrap();
        for snr in [0.0, 5.0, 10.0, 20.0] {
            let out = mix_noise(&clean, &noise, snr).unwrap();
            let noise_part =
                SampleBuffer::new(out.samples.iter().zip(&clean.samples).map(|(o, c)| o - c).collect())
                    .unwrap();
            let measured = 10.0 * (clean.power() / noise_part.power()).log10();
            assert!((measured - snr).abs() < 1e-9, "snr {snr}: measured {measured}");
        }
    }

    #[test]
    fn short_noise_is_tiled() {
        let clean = SampleBuffer::new(vec![0.1; 7]).unwrap();
        let noise = SampleBuffer::new(vec![0.2, -0.2, 0.1]).unwrap();
        let out = mix_noise(&clean, &noise, 0.0).unwrap();
        let m = noise.samples.len();
        for i in 0..clean.len() {
            for j in 0..clean.len() {
                if i % m == j % m {
                    assert!((out.samples[i] - out.samples[j]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn loud_mix_is_rescaled_into_range() {
        let clean = SampleBuffer::new(vec![0.9; 32]).unwrap();
        let noise = SampleBuffer::new(vec![0.9, -0.9].repeat(16)).unwrap();
        let out = mix_noise(&clean, &noise, 0.0).unwrap();
        let peak = out.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(peak <= 1.0);
    }

    #[test]
    fn noise_is_deterministic_and_clamped() {
        for kind in [NoiseKind::White, NoiseKind::Pink] {
            let a = gen_noise(kind, 4096, 7).unwrap();
            let b = gen_noise(kind, 4096, 7).unwrap();
            assert_eq!(a.samples, b.samples);
            assert!(a.samples.iter().all(|v| v.abs() <= 1.0));
            let rms = a.power().sqrt();
            assert!((rms - 0.2).abs() < 0.05, "rms {rms}");
        }
        let w = gen_noise(NoiseKind::White, 64, 7).unwrap();
        let p = gen_noise(NoiseKind::Pink, 64, 7).unwrap();
        assert_ne!(w.samples, p.samples);
    }

    #[test]
    fn manifest_round_trips_including_clean_sentinel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.tsv");
        let rows = vec![
            ("a/clip0.wav".to_string(), 0usize, None),
            ("a/clip1.wav".to_string(), 3, Some(10.0)),
            ("b/clip2.wav".to_string(), 7, Some(0.0)),
        ];
        write_manifest(&p, &rows).unwrap();
        let back = read_manifest(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].path, dir.path().join("a/clip0.wav"));
        assert_eq!(back[0].snr_db, None);
        assert_eq!(back[1].class_id, 3);
        assert_eq!(back[1].snr_db, Some(10.0));
        assert_eq!(back[2].snr_db, Some(0.0));
    }

    #[test]
    fn malformed_manifest_line_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.tsv");
        std::fs::write(&p, "clip.wav\t3\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Data(_))));
        std::fs::write(&p, "clip.wav\tthree\t10\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(Error::Data(_))));
    }
}
