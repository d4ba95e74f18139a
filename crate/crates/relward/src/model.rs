//! The assembled network: acoustic filterbank → acoustic relevance →
//! instance norm → center pruning → modulation filtering → 3×1 pooling →
//! modulation relevance → batch norm → convolutional classifier head, with
//! exact reverse-mode gradients for every trainable tensor.

use crate::dsp::RawFrameBlock;
use crate::error::{Error, Result};
use crate::filterbank::{
    acoustic_backward, acoustic_forward, kernel_mu_jacobian, synthesize_kernels, AcousticCache,
    FilterFamily, FilterbankParams, KernelBank,
};
use crate::modulation::{
    max_pool_3x1, max_pool_backward, modulation_backward, modulation_forward, ConvCache,
    ModulationKernels, PoolCache,
};
use crate::norm::{
    batch_norm_eval, batch_norm_train, batch_norm_train_backward, instance_norm_backward,
    instance_norm_mat, prune_center_backward, prune_center_mat, BatchNormState, BnCache, BnStats,
    NORM_EPS,
};
use crate::relevance::{
    acoustic_relevance, apply_map_weights, apply_map_weights_backward, apply_row_weights,
    apply_row_weights_backward, modulation_relevance, relevance_net_backward, NetEval, Pooling,
    RelevanceNet, RelevanceNetGrads, RelevanceWeights,
};
use crate::rng::stream_rng;
use crate::tensor::{dot, Mat, Tensor3};

use rand::Rng;

/// The experiment grid: filter family plus which relevance stages are active.
/// Labels follow the conventional shorthand: `A` is the learnable
/// cosine-Gaussian filterbank, `-R` adds acoustic relevance weighting, `M-R`
/// adds modulation relevance weighting, `MFB` freezes the filterbank at its
/// mel initialization, and `Sinc` swaps in the windowed band-pass family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Mfb,
    MfbR,
    A,
    Ar,
    ArMr,
    Sinc,
    SrMr,
}

impl Variant {
    pub const ALL: [Variant; 7] =
        [Variant::Mfb, Variant::MfbR, Variant::A, Variant::Ar, Variant::ArMr, Variant::Sinc, Variant::SrMr];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Mfb => "MFB",
            Variant::MfbR => "MFB-R",
            Variant::A => "A",
            Variant::Ar => "A-R",
            Variant::ArMr => "A-R,M-R",
            Variant::Sinc => "Sinc",
            Variant::SrMr => "S-R,M-R",
        }
    }

    pub fn family(&self) -> FilterFamily {
        match self {
            Variant::Mfb | Variant::MfbR => FilterFamily::FixedMel,
            Variant::A | Variant::Ar | Variant::ArMr => FilterFamily::CosineGaussian,
            Variant::Sinc | Variant::SrMr => FilterFamily::Sinc,
        }
    }

    pub fn acoustic_relevance(&self) -> bool {
        matches!(self, Variant::MfbR | Variant::Ar | Variant::ArMr | Variant::SrMr)
    }

    pub fn modulation_relevance(&self) -> bool {
        matches!(self, Variant::ArMr | Variant::SrMr)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MFB" => Ok(Variant::Mfb),
            "MFB-R" => Ok(Variant::MfbR),
            "A" => Ok(Variant::A),
            "A-R" => Ok(Variant::Ar),
            "A-R,M-R" => Ok(Variant::ArMr),
            "Sinc" => Ok(Variant::Sinc),
            "S-R,M-R" => Ok(Variant::SrMr),
            other => Err(Error::argument(format!(
                "unknown variant '{other}' (expected MFB|MFB-R|A|A-R|A-R,M-R|Sinc|S-R,M-R)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Classifier head geometry: one multi-channel 2-D conv block with square
/// max-pooling, two dense layers, and the logit layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadConfig {
    pub maps: usize,
    pub kh: usize,
    pub kw: usize,
    /// Square pool size; 1 disables pooling.
    pub pool: usize,
    pub fc1: usize,
    pub fc2: usize,
}

/// Everything that fixes the network's shape and variant behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub family: FilterFamily,
    pub acoustic_relevance: bool,
    pub modulation_relevance: bool,
    /// Acoustic filter count f.
    pub filters: usize,
    /// Acoustic kernel length k (odd).
    pub kernel_len: usize,
    /// Frames per block t (odd).
    pub frames: usize,
    /// Center frames kept after pruning (odd).
    pub keep: usize,
    /// Samples per frame.
    pub frame_len: usize,
    /// Samples between frame starts.
    pub hop: usize,
    /// Modulation kernel count K.
    pub mod_count: usize,
    pub mod_kf: usize,
    pub mod_kt: usize,
    pub acoustic_hidden: usize,
    pub mod_hidden: usize,
    pub classes: usize,
    pub head: HeadConfig,
    /// Compute instance-norm statistics over the pruned frames instead of the
    /// full block.
    pub norm_over_pruned: bool,
    /// Exclude filter centers from training even for the learnable family.
    pub freeze_filters: bool,
}

impl ModelConfig {
    /// Full-scale geometry.
    pub fn default_scale() -> Self {
        Self {
            family: FilterFamily::CosineGaussian,
            acoustic_relevance: false,
            modulation_relevance: false,
            filters: 80,
            kernel_len: 129,
            frames: 101,
            keep: 21,
            frame_len: crate::dsp::FRAME_LEN,
            hop: crate::dsp::FRAME_HOP,
            mod_count: 40,
            mod_kf: 5,
            mod_kt: 5,
            acoustic_hidden: 128,
            mod_hidden: 32,
            classes: 8,
            head: HeadConfig { maps: 16, kh: 3, kw: 3, pool: 2, fc1: 256, fc2: 128 },
            norm_over_pruned: false,
            freeze_filters: false,
        }
    }

    /// Smallest geometry that exercises every stage; used by gradient checks.
    pub fn tiny() -> Self {
        Self {
            filters: 8,
            kernel_len: 17,
            frames: 11,
            keep: 5,
            mod_count: 4,
            mod_kf: 3,
            mod_kt: 3,
            acoustic_hidden: 6,
            mod_hidden: 4,
            classes: 3,
            head: HeadConfig { maps: 3, kh: 2, kw: 2, pool: 1, fc1: 6, fc2: 5 },
            ..Self::default_scale()
        }
    }

    /// Geometry small enough to train in minutes on one core while keeping
    /// the full-scale structure.
    pub fn desk() -> Self {
        Self {
            filters: 24,
            kernel_len: 49,
            frames: 21,
            keep: 9,
            mod_count: 12,
            mod_kf: 3,
            mod_kt: 3,
            acoustic_hidden: 32,
            mod_hidden: 12,
            classes: 8,
            head: HeadConfig { maps: 8, kh: 3, kw: 3, pool: 2, fc1: 48, fc2: 24 },
            ..Self::default_scale()
        }
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.family = v.family();
        self.acoustic_relevance = v.acoustic_relevance();
        self.modulation_relevance = v.modulation_relevance();
        self
    }

    /// Derives every intermediate shape, failing with the first stage whose
    /// arithmetic does not work out.
    pub fn dims(&self) -> Result<ModelDims> {
        let err = |stage: &'static str, detail: String| Err(Error::contract(stage, detail));
        if self.kernel_len > self.frame_len {
            return err("acoustic", format!("kernel {} longer than frame {}", self.kernel_len, self.frame_len));
        }
        if self.frames % 2 == 0 || self.keep % 2 == 0 {
            return err("prune", format!("frames {} and keep {} must be odd", self.frames, self.keep));
        }
        if self.keep > self.frames {
            return err("prune", format!("keep {} exceeds frames {}", self.keep, self.frames));
        }
        let (zf, zt) = (self.filters, self.keep);
        if zf < self.mod_kf || zt < self.mod_kt {
            return err("modulation", format!("input {zf}x{zt} smaller than kernel {}x{}", self.mod_kf, self.mod_kt));
        }
        let (cf, ct) = (zf - self.mod_kf + 1, zt - self.mod_kt + 1);
        if cf < 3 {
            return err("pool", format!("only {cf} frequency rows before the 3-row pool"));
        }
        let pf = cf / 3;
        let h = &self.head;
        if pf < h.kh || ct < h.kw {
            return err("head_conv", format!("maps {pf}x{ct} smaller than head kernel {}x{}", h.kh, h.kw));
        }
        let (hf, ht) = (pf - h.kh + 1, ct - h.kw + 1);
        if h.pool == 0 {
            return err("head_pool", "pool size zero".to_string());
        }
        let (qf, qt) = (hf / h.pool, ht / h.pool);
        if qf == 0 || qt == 0 {
            return err("head_pool", format!("pool {} empties the {hf}x{ht} maps", h.pool));
        }
        if self.classes < 2 {
            return err("logits", format!("need at least 2 classes, got {}", self.classes));
        }
        Ok(ModelDims {
            spec: (self.filters, self.frames),
            pruned: (zf, zt),
            conv: (self.mod_count, cf, ct),
            pooled: (self.mod_count, pf, ct),
            head_conv: (h.maps, hf, ht),
            head_pool: (h.maps, qf, qt),
            flat: h.maps * qf * qt,
        })
    }
}

/// Shapes of every intermediate representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDims {
    pub spec: (usize, usize),
    pub pruned: (usize, usize),
    pub conv: (usize, usize, usize),
    pub pooled: (usize, usize, usize),
    pub head_conv: (usize, usize, usize),
    pub head_pool: (usize, usize, usize),
    pub flat: usize,
}

/// Classifier head parameters. Conv weights are stored one output map per
/// row, columns ordered (in_channel, kernel_row, kernel_col).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub conv_w: Mat,
    pub conv_b: Vec<f64>,
    pub fc1_w: Mat,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Mat,
    pub fc2_b: Vec<f64>,
    pub out_w: Mat,
    pub out_b: Vec<f64>,
}

/// The complete parameter set of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub config: ModelConfig,
    pub fb: FilterbankParams,
    pub acoustic_net: RelevanceNet,
    pub mod_kernels: ModulationKernels,
    pub mod_net: RelevanceNet,
    pub bn: BatchNormState,
    pub head: HeadParams,
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Mat {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-s..s))
}

impl AcousticModel {
    /// Initializes a model from the "init" random stream of `seed`. Filter
    /// centers come from the mel grid; dense and conv weights are uniform in
    /// ±sqrt(6/(fan_in+fan_out)); relevance output layers start at zero so
    /// every variant begins with exactly uniform relevance weights.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let dims = config.dims()?;
        let mut rng = stream_rng(seed, "init");
        let fb = FilterbankParams::init_mel_default(config.family, config.filters, config.kernel_len)?;

        // Draw order is fixed; zero-initialized tensors consume no draws.
        let mut acoustic_net = RelevanceNet::zeros(config.filters, config.acoustic_hidden, Pooling::TimeAverage);
        acoustic_net.w1 = glorot(
            &mut rng,
            config.acoustic_hidden,
            config.filters,
            config.filters,
            config.acoustic_hidden,
        );

        let (kf, kt) = (config.mod_kf, config.mod_kt);
        let taps = kf * kt;
        let s = (6.0 / (taps + config.mod_count * taps) as f64).sqrt();
        let mut mod_kernels = ModulationKernels::zeros(config.mod_count, kf, kt);
        for v in &mut mod_kernels.kernels.data {
            *v = rng.gen_range(-s..s);
        }

        let mut mod_net = RelevanceNet::zeros(config.mod_count, config.mod_hidden, Pooling::GlobalAverage);
        mod_net.w1 = glorot(&mut rng, config.mod_hidden, config.mod_count, config.mod_count, config.mod_hidden);

        let h = &config.head;
        let conv_cols = config.mod_count * h.kh * h.kw;
        let head = HeadParams {
            conv_w: glorot(&mut rng, h.maps, conv_cols, conv_cols, h.maps * h.kh * h.kw),
            conv_b: vec![0.0; h.maps],
            fc1_w: glorot(&mut rng, h.fc1, dims.flat, dims.flat, h.fc1),
            fc1_b: vec![0.0; h.fc1],
            fc2_w: glorot(&mut rng, h.fc2, h.fc1, h.fc1, h.fc2),
            fc2_b: vec![0.0; h.fc2],
            out_w: glorot(&mut rng, config.classes, h.fc2, h.fc2, config.classes),
            out_b: vec![0.0; config.classes],
        };

        let bn = BatchNormState::new(config.mod_count);
        Ok(Self { config, fb, acoustic_net, mod_kernels, mod_net, bn, head })
    }

    pub fn kernel_bank(&self) -> Result<KernelBank> {
        synthesize_kernels(&self.fb)
    }

    /// Whether gradients flow into the filter centers.
    pub fn mu_trainable(&self) -> bool {
        self.config.family.learnable() && !self.config.freeze_filters
    }

    /// Named views of every trainable tensor, in the canonical group order
    /// shared with [`GradientSet::groups`] and the optimizer.
    pub fn trainable(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut groups: Vec<(&'static str, &mut [f64])> = Vec::new();
        if self.config.family.learnable() && !self.config.freeze_filters {
            groups.push(("fb.mu", &mut self.fb.mu));
        }
        groups.push(("arel.w1", &mut self.acoustic_net.w1.data));
        groups.push(("arel.b1", &mut self.acoustic_net.b1));
        groups.push(("arel.w2", &mut self.acoustic_net.w2.data));
        groups.push(("arel.b2", &mut self.acoustic_net.b2));
        groups.push(("mod.kernels", &mut self.mod_kernels.kernels.data));
        groups.push(("mod.bias", &mut self.mod_kernels.bias));
        groups.push(("mrel.w1", &mut self.mod_net.w1.data));
        groups.push(("mrel.b1", &mut self.mod_net.b1));
        groups.push(("mrel.w2", &mut self.mod_net.w2.data));
        groups.push(("mrel.b2", &mut self.mod_net.b2));
        groups.push(("bn.gamma", &mut self.bn.gamma));
        groups.push(("bn.beta", &mut self.bn.beta));
        groups.push(("head.conv_w", &mut self.head.conv_w.data));
        groups.push(("head.conv_b", &mut self.head.conv_b));
        groups.push(("head.fc1_w", &mut self.head.fc1_w.data));
        groups.push(("head.fc1_b", &mut self.head.fc1_b));
        groups.push(("head.fc2_w", &mut self.head.fc2_w.data));
        groups.push(("head.fc2_b", &mut self.head.fc2_b));
        groups.push(("head.out_w", &mut self.head.out_w.data));
        groups.push(("head.out_b", &mut self.head.out_b));
        groups
    }

    /// Named read-only views of every serialized tensor (trainable or not),
    /// used by checkpoints.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("fb.mu", &self.fb.mu),
            ("fb.band", &self.fb.band),
            ("arel.w1", &self.acoustic_net.w1.data),
            ("arel.b1", &self.acoustic_net.b1),
            ("arel.w2", &self.acoustic_net.w2.data),
            ("arel.b2", &self.acoustic_net.b2),
            ("mod.kernels", &self.mod_kernels.kernels.data),
            ("mod.bias", &self.mod_kernels.bias),
            ("mrel.w1", &self.mod_net.w1.data),
            ("mrel.b1", &self.mod_net.b1),
            ("mrel.w2", &self.mod_net.w2.data),
            ("mrel.b2", &self.mod_net.b2),
            ("bn.running_mean", &self.bn.running_mean),
            ("bn.running_var", &self.bn.running_var),
            ("bn.gamma", &self.bn.gamma),
            ("bn.beta", &self.bn.beta),
            ("head.conv_w", &self.head.conv_w.data),
            ("head.conv_b", &self.head.conv_b),
            ("head.fc1_w", &self.head.fc1_w.data),
            ("head.fc1_b", &self.head.fc1_b),
            ("head.fc2_w", &self.head.fc2_w.data),
            ("head.fc2_b", &self.head.fc2_b),
            ("head.out_w", &self.head.out_w.data),
            ("head.out_b", &self.head.out_b),
        ]
    }

    /// Mutable views matching [`tensors`], for checkpoint loading.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("fb.mu", &mut self.fb.mu),
            ("fb.band", &mut self.fb.band),
            ("arel.w1", &mut self.acoustic_net.w1.data),
            ("arel.b1", &mut self.acoustic_net.b1),
            ("arel.w2", &mut self.acoustic_net.w2.data),
            ("arel.b2", &mut self.acoustic_net.b2),
            ("mod.kernels", &mut self.mod_kernels.kernels.data),
            ("mod.bias", &mut self.mod_kernels.bias),
            ("mrel.w1", &mut self.mod_net.w1.data),
            ("mrel.b1", &mut self.mod_net.b1),
            ("mrel.w2", &mut self.mod_net.w2.data),
            ("mrel.b2", &mut self.mod_net.b2),
            ("bn.running_mean", &mut self.bn.running_mean),
            ("bn.running_var", &mut self.bn.running_var),
            ("bn.gamma", &mut self.bn.gamma),
            ("bn.beta", &mut self.bn.beta),
            ("head.conv_w", &mut self.head.conv_w.data),
            ("head.conv_b", &mut self.head.conv_b),
            ("head.fc1_w", &mut self.head.fc1_w.data),
            ("head.fc1_b", &mut self.head.fc1_b),
            ("head.fc2_w", &mut self.head.fc2_w.data),
            ("head.fc2_b", &mut self.head.fc2_b),
            ("head.out_w", &mut self.head.out_w.data),
            ("head.out_b", &mut self.head.out_b),
        ]
    }
}

/// Per-sample intermediates from the front of the network (everything before
/// batch norm).
#[derive(Debug, Clone)]
pub struct FrontCache {
    pub x: Mat,
    pub acoustic: AcousticCache,
    pub acoustic_weights: Option<(RelevanceWeights, NetEval)>,
    /// Normalized representation (full-width, or pruned-width when the
    /// statistics are computed after pruning).
    pub z_norm: Mat,
    pub inv_std: Vec<f64>,
    /// Input to the modulation conv (pruned, normalized).
    pub zp: Mat,
    pub conv: ConvCache,
    /// Pooled maps before relevance weighting.
    pub pooled: Tensor3,
    pub pool: PoolCache,
    pub modulation_weights: Option<(RelevanceWeights, NetEval)>,
    /// Batch-norm input.
    pub q: Tensor3,
}

/// Head intermediates for one sample.
#[derive(Debug, Clone)]
pub struct HeadCache {
    pub input: Tensor3,
    pub conv_pre: Tensor3,
    pub conv_act: Tensor3,
    pub pool_argmax: Vec<usize>,
    pub pooled: Tensor3,
    pub flat: Vec<f64>,
    pub fc1_pre: Vec<f64>,
    pub fc1_act: Vec<f64>,
    pub fc2_pre: Vec<f64>,
    pub fc2_act: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Gradients of the classifier head.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub conv_w: Mat,
    pub conv_b: Vec<f64>,
    pub fc1_w: Mat,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Mat,
    pub fc2_b: Vec<f64>,
    pub out_w: Mat,
    pub out_b: Vec<f64>,
}

impl HeadGrads {
    fn zeros_like(h: &HeadParams) -> Self {
        Self {
            conv_w: Mat::zeros(h.conv_w.rows, h.conv_w.cols),
            conv_b: vec![0.0; h.conv_b.len()],
            fc1_w: Mat::zeros(h.fc1_w.rows, h.fc1_w.cols),
            fc1_b: vec![0.0; h.fc1_b.len()],
            fc2_w: Mat::zeros(h.fc2_w.rows, h.fc2_w.cols),
            fc2_b: vec![0.0; h.fc2_b.len()],
            out_w: Mat::zeros(h.out_w.rows, h.out_w.cols),
            out_b: vec![0.0; h.out_b.len()],
        }
    }
}

/// Gradients for every trainable tensor, shape-mirroring the model. The
/// filter-center entry exists only when the family is learnable and not
/// frozen; relevance-net entries are always present (zero when the stage is
/// switched off, since the loss does not depend on them).
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub mu: Option<Vec<f64>>,
    pub acoustic_net: RelevanceNetGrads,
    pub mod_kernels: Tensor3,
    pub mod_bias: Vec<f64>,
    pub mod_net: RelevanceNetGrads,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub head: HeadGrads,
}

impl GradientSet {
    pub fn zeros(model: &AcousticModel) -> Self {
        Self {
            mu: model.mu_trainable().then(|| vec![0.0; model.fb.mu.len()]),
            acoustic_net: RelevanceNetGrads::zeros_like(&model.acoustic_net),
            mod_kernels: Tensor3::zeros(
                model.mod_kernels.kernels.d0,
                model.mod_kernels.kernels.d1,
                model.mod_kernels.kernels.d2,
            ),
            mod_bias: vec![0.0; model.mod_kernels.bias.len()],
            mod_net: RelevanceNetGrads::zeros_like(&model.mod_net),
            bn_gamma: vec![0.0; model.bn.gamma.len()],
            bn_beta: vec![0.0; model.bn.beta.len()],
            head: HeadGrads::zeros_like(&model.head),
        }
    }

    /// Named views in the canonical group order (matching
    /// [`AcousticModel::trainable`]).
    pub fn groups(&self) -> Vec<(&'static str, &[f64])> {
        let mut groups: Vec<(&'static str, &[f64])> = Vec::new();
        if let Some(mu) = &self.mu {
            groups.push(("fb.mu", mu));
        }
        groups.push(("arel.w1", &self.acoustic_net.w1.data));
        groups.push(("arel.b1", &self.acoustic_net.b1));
        groups.push(("arel.w2", &self.acoustic_net.w2.data));
        groups.push(("arel.b2", &self.acoustic_net.b2));
        groups.push(("mod.kernels", &self.mod_kernels.data));
        groups.push(("mod.bias", &self.mod_bias));
        groups.push(("mrel.w1", &self.mod_net.w1.data));
        groups.push(("mrel.b1", &self.mod_net.b1));
        groups.push(("mrel.w2", &self.mod_net.w2.data));
        groups.push(("mrel.b2", &self.mod_net.b2));
        groups.push(("bn.gamma", &self.bn_gamma));
        groups.push(("bn.beta", &self.bn_beta));
        groups.push(("head.conv_w", &self.head.conv_w.data));
        groups.push(("head.conv_b", &self.head.conv_b));
        groups.push(("head.fc1_w", &self.head.fc1_w.data));
        groups.push(("head.fc1_b", &self.head.fc1_b));
        groups.push(("head.fc2_w", &self.head.fc2_w.data));
        groups.push(("head.fc2_b", &self.head.fc2_b));
        groups.push(("head.out_w", &self.head.out_w.data));
        groups.push(("head.out_b", &self.head.out_b));
        groups
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut groups: Vec<(&'static str, &mut [f64])> = Vec::new();
        if let Some(mu) = &mut self.mu {
            groups.push(("fb.mu", mu));
        }
        groups.push(("arel.w1", &mut self.acoustic_net.w1.data));
        groups.push(("arel.b1", &mut self.acoustic_net.b1));
        groups.push(("arel.w2", &mut self.acoustic_net.w2.data));
        groups.push(("arel.b2", &mut self.acoustic_net.b2));
        groups.push(("mod.kernels", &mut self.mod_kernels.data));
        groups.push(("mod.bias", &mut self.mod_bias));
        groups.push(("mrel.w1", &mut self.mod_net.w1.data));
        groups.push(("mrel.b1", &mut self.mod_net.b1));
        groups.push(("mrel.w2", &mut self.mod_net.w2.data));
        groups.push(("mrel.b2", &mut self.mod_net.b2));
        groups.push(("bn.gamma", &mut self.bn_gamma));
        groups.push(("bn.beta", &mut self.bn_beta));
        groups.push(("head.conv_w", &mut self.head.conv_w.data));
        groups.push(("head.conv_b", &mut self.head.conv_b));
        groups.push(("head.fc1_w", &mut self.head.fc1_w.data));
        groups.push(("head.fc1_b", &mut self.head.fc1_b));
        groups.push(("head.fc2_w", &mut self.head.fc2_w.data));
        groups.push(("head.fc2_b", &mut self.head.fc2_b));
        groups.push(("head.out_w", &mut self.head.out_w.data));
        groups.push(("head.out_b", &mut self.head.out_b));
        groups
    }

    /// Element-wise accumulation; the caller controls summation order.
    pub fn add_assign(&mut self, other: &GradientSet) {
        let theirs = other.groups();
        for ((name, mine), (oname, theirs)) in self.groups_mut().into_iter().zip(theirs) {
            debug_assert_eq!(name, oname);
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += *b;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.groups().iter().all(|(_, g)| g.iter().all(|v| v.is_finite()))
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn fc_forward(w: &Mat, b: &[f64], input: &[f64]) -> Vec<f64> {
    (0..w.rows).map(|r| dot(w.row(r), input) + b[r]).collect()
}

/// dL/dinput plus accumulation of dL/dw, dL/db for a dense layer.
fn fc_backward(w: &Mat, input: &[f64], dout: &[f64], dw: &mut Mat, db: &mut [f64]) -> Vec<f64> {
    let mut dinput = vec![0.0; w.cols];
    for r in 0..w.rows {
        let g = dout[r];
        db[r] += g;
        let wr = w.row(r);
        let dwr = dw.row_mut(r);
        for c in 0..w.cols {
            dwr[c] += g * input[c];
            dinput[c] += g * wr[c];
        }
    }
    dinput
}

impl AcousticModel {
    fn head_forward(&self, input: Tensor3) -> Result<HeadCache> {
        let h = &self.config.head;
        let (cin, hin, win) = (input.d0, input.d1, input.d2);
        if hin < h.kh || win < h.kw {
            return Err(Error::contract("head_conv", format!("input {hin}x{win} smaller than kernel {}x{}", h.kh, h.kw)));
        }
        let (hf, ht) = (hin - h.kh + 1, win - h.kw + 1);
        let mut conv_pre = Tensor3::zeros(h.maps, hf, ht);
        for m in 0..h.maps {
            let wrow = self.head.conv_w.row(m);
            let plane = conv_pre.plane_mut(m);
            for i in 0..hf {
                for j in 0..ht {
                    let mut acc = self.head.conv_b[m];
                    for c in 0..cin {
                        let src = input.plane(c);
                        for a in 0..h.kh {
                            let wbase = c * h.kh * h.kw + a * h.kw;
                            let sbase = (i + a) * win + j;
                            for b in 0..h.kw {
                                acc += src[sbase + b] * wrow[wbase + b];
                            }
                        }
                    }
                    plane[i * ht + j] = acc;
                }
            }
        }
        let mut conv_act = conv_pre.clone();
        for v in &mut conv_act.data {
            *v = relu(*v);
        }

        let p = h.pool;
        let (qf, qt) = (hf / p, ht / p);
        let mut pooled = Tensor3::zeros(h.maps, qf, qt);
        let mut pool_argmax = vec![0usize; h.maps * qf * qt];
        for m in 0..h.maps {
            let src = conv_act.plane(m);
            let dst = pooled.plane_mut(m);
            for i in 0..qf {
                for j in 0..qt {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for a in 0..p {
                        for b in 0..p {
                            let idx = (i * p + a) * ht + (j * p + b);
                            if src[idx] > best {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    dst[i * qt + j] = best;
                    pool_argmax[m * qf * qt + i * qt + j] = best_idx;
                }
            }
        }

        let flat = pooled.data.clone();
        let fc1_pre = fc_forward(&self.head.fc1_w, &self.head.fc1_b, &flat);
        let fc1_act: Vec<f64> = fc1_pre.iter().map(|&v| relu(v)).collect();
        let fc2_pre = fc_forward(&self.head.fc2_w, &self.head.fc2_b, &fc1_act);
        let fc2_act: Vec<f64> = fc2_pre.iter().map(|&v| relu(v)).collect();
        let logits = fc_forward(&self.head.out_w, &self.head.out_b, &fc2_act);
        Ok(HeadCache {
            input,
            conv_pre,
            conv_act,
            pool_argmax,
            pooled,
            flat,
            fc1_pre,
            fc1_act,
            fc2_pre,
            fc2_act,
            logits,
        })
    }

    /// Head gradients for one sample; parameter gradients accumulate into
    /// `grads`, the return value is dL/d(head input).
    fn head_backward(&self, cache: &HeadCache, dlogits: &[f64], grads: &mut HeadGrads) -> Tensor3 {
        let h = &self.config.head;
        let dfc2_act = fc_backward(&self.head.out_w, &cache.fc2_act, dlogits, &mut grads.out_w, &mut grads.out_b);
        let dfc2_pre: Vec<f64> =
            dfc2_act.iter().zip(&cache.fc2_pre).map(|(&d, &p)| if p > 0.0 { d } else { 0.0 }).collect();
        let dfc1_act = fc_backward(&self.head.fc2_w, &cache.fc1_act, &dfc2_pre, &mut grads.fc2_w, &mut grads.fc2_b);
        let dfc1_pre: Vec<f64> =
            dfc1_act.iter().zip(&cache.fc1_pre).map(|(&d, &p)| if p > 0.0 { d } else { 0.0 }).collect();
        let dflat = fc_backward(&self.head.fc1_w, &cache.flat, &dfc1_pre, &mut grads.fc1_w, &mut grads.fc1_b);

        // un-pool
        let (qf, qt) = (cache.pooled.d1, cache.pooled.d2);
        let mut dconv_act = Tensor3::zeros(cache.conv_act.d0, cache.conv_act.d1, cache.conv_act.d2);
        for m in 0..h.maps {
            let plane = dconv_act.plane_mut(m);
            for i in 0..qf {
                for j in 0..qt {
                    let flat_idx = m * qf * qt + i * qt + j;
                    plane[cache.pool_argmax[flat_idx]] += dflat[flat_idx];
                }
            }
        }
        // rectifier gate
        let mut dconv_pre = dconv_act;
        for (d, &p) in dconv_pre.data.iter_mut().zip(&cache.conv_pre.data) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        // conv backward
        let input = &cache.input;
        let (cin, _, win) = (input.d0, input.d1, input.d2);
        let (hf, ht) = (dconv_pre.d1, dconv_pre.d2);
        let mut dinput = Tensor3::zeros(input.d0, input.d1, input.d2);
        for m in 0..h.maps {
            let g = dconv_pre.plane(m);
            let wrow = self.head.conv_w.row(m);
            let dwrow = grads.conv_w.row_mut(m);
            for i in 0..hf {
                for j in 0..ht {
                    let d = g[i * ht + j];
                    if d == 0.0 {
                        continue;
                    }
                    grads.conv_b[m] += d;
                    for c in 0..cin {
                        let src = input.plane(c);
                        let dst = dinput.plane_mut(c);
                        for a in 0..h.kh {
                            let wbase = c * h.kh * h.kw + a * h.kw;
                            let sbase = (i + a) * win + j;
                            for b in 0..h.kw {
                                dwrow[wbase + b] += d * src[sbase + b];
                                dst[sbase + b] += d * wrow[wbase + b];
                            }
                        }
                    }
                }
            }
        }
        dinput
    }

    /// Acoustic filterbank stage alone: log energies plus the correlation
    /// cache.
    pub fn log_energies(&self, block: &RawFrameBlock, bank: &KernelBank) -> Result<(Mat, AcousticCache)> {
        if block.frames.rows != self.config.frames || block.frames.cols != self.config.frame_len {
            return Err(Error::contract(
                "acoustic",
                format!(
                    "block is {}x{}, model expects {}x{}",
                    block.frames.rows, block.frames.cols, self.config.frames, self.config.frame_len
                ),
            ));
        }
        let (spec, cache) = acoustic_forward(block, bank)?;
        Ok((spec.values, cache))
    }

    /// Everything between the log energies and batch norm: relevance
    /// weighting, instance norm, pruning, modulation filtering, pooling, and
    /// modulation relevance weighting.
    pub fn front_from_energies(&self, x: Mat, acoustic: AcousticCache) -> Result<FrontCache> {
        let cfg = &self.config;
        let (y, acoustic_weights) = if cfg.acoustic_relevance {
            let (w, eval) = acoustic_relevance(&x, &self.acoustic_net)?;
            (apply_row_weights(&x, &w.w)?, Some((w, eval)))
        } else {
            (x.clone(), None)
        };
        let (z_norm, inv_std, zp) = if cfg.norm_over_pruned {
            let yp = prune_center_mat(&y, cfg.keep)?;
            let (z, inv_std) = instance_norm_mat(&yp, NORM_EPS)?;
            (z.clone(), inv_std, z)
        } else {
            let (z, inv_std) = instance_norm_mat(&y, NORM_EPS)?;
            let zp = prune_center_mat(&z, cfg.keep)?;
            (z, inv_std, zp)
        };
        let (p, conv) = modulation_forward(&zp, &self.mod_kernels)?;
        let (pooled_maps, pool) = max_pool_3x1(&p)?;
        let pooled = pooled_maps.maps;
        let (q, modulation_weights) = if cfg.modulation_relevance {
            let (w, eval) = modulation_relevance(&pooled, &self.mod_net)?;
            (apply_map_weights(&pooled, &w.w)?, Some((w, eval)))
        } else {
            (pooled.clone(), None)
        };
        Ok(FrontCache { x, acoustic, acoustic_weights, z_norm, inv_std, zp, conv, pooled, pool, modulation_weights, q })
    }

    fn front(&self, block: &RawFrameBlock, bank: &KernelBank) -> Result<FrontCache> {
        let (x, acoustic) = self.log_energies(block, bank)?;
        self.front_from_energies(x, acoustic)
    }

    /// Gradients of the front for one sample, given dL/dq. Relevance, kernel,
    /// and filter-center gradients accumulate into `grads`.
    fn front_backward(
        &self,
        block: &RawFrameBlock,
        bank: &KernelBank,
        jac: Option<&Mat>,
        cache: &FrontCache,
        dq: &Tensor3,
        grads: &mut GradientSet,
    ) -> Result<()> {
        let cfg = &self.config;
        let dpooled = if let Some((w, eval)) = &cache.modulation_weights {
            let (mut dpooled, dw) = apply_map_weights_backward(&cache.pooled, &w.w, dq);
            let (ngrads, dpool_in) = relevance_net_backward(&self.mod_net, eval, &dw);
            grads.mod_net.w1.add_assign(&ngrads.w1);
            grads.mod_net.w2.add_assign(&ngrads.w2);
            add_vec(&mut grads.mod_net.b1, &ngrads.b1);
            add_vec(&mut grads.mod_net.b2, &ngrads.b2);
            let cells = (cache.pooled.d1 * cache.pooled.d2) as f64;
            for c in 0..cache.pooled.d0 {
                let contrib = dpool_in[c] / cells;
                for v in dpooled.plane_mut(c) {
                    *v += contrib;
                }
            }
            dpooled
        } else {
            dq.clone()
        };

        let dp = max_pool_backward(&cache.pool, &dpooled);
        let (dzp, dkern, dbias) = modulation_backward(&cache.zp, &self.mod_kernels, &cache.conv, &dp)?;
        grads.mod_kernels.add_assign_t(&dkern);
        add_vec(&mut grads.mod_bias, &dbias);

        let dy = if cfg.norm_over_pruned {
            let dyp = instance_norm_backward(&cache.z_norm, &cache.inv_std, &dzp);
            prune_center_backward(&dyp, cfg.frames)
        } else {
            let dz = prune_center_backward(&dzp, cfg.frames);
            instance_norm_backward(&cache.z_norm, &cache.inv_std, &dz)
        };

        let dx = if let Some((w, eval)) = &cache.acoustic_weights {
            let (mut dx, dw) = apply_row_weights_backward(&cache.x, &w.w, &dy);
            let (ngrads, dpool_in) = relevance_net_backward(&self.acoustic_net, eval, &dw);
            grads.acoustic_net.w1.add_assign(&ngrads.w1);
            grads.acoustic_net.w2.add_assign(&ngrads.w2);
            add_vec(&mut grads.acoustic_net.b1, &ngrads.b1);
            add_vec(&mut grads.acoustic_net.b2, &ngrads.b2);
            let t = cache.x.cols as f64;
            for i in 0..cache.x.rows {
                let contrib = dpool_in[i] / t;
                for v in dx.row_mut(i) {
                    *v += contrib;
                }
            }
            dx
        } else {
            dy
        };

        let (dkernels, _) = acoustic_backward(block, bank, &cache.acoustic, &dx, false)?;
        if let (Some(dmu), Some(jac)) = (grads.mu.as_mut(), jac) {
            for i in 0..dkernels.rows {
                dmu[i] += dot(dkernels.row(i), jac.row(i));
            }
        }
        Ok(())
    }

    /// Inference on one block: batch norm uses running statistics.
    pub fn forward_eval(&self, block: &RawFrameBlock) -> Result<(Vec<f64>, FrontCache, HeadCache)> {
        let bank = self.kernel_bank()?;
        let front = self.front(block, &bank)?;
        let bno = batch_norm_eval(&front.q, &self.bn)?;
        let head = self.head_forward(bno)?;
        Ok((head.logits.clone(), front, head))
    }

    /// Eval-mode forward pass starting from a log-energy representation.
    pub fn forward_eval_from_energies(&self, x: Mat) -> Result<Vec<f64>> {
        let dummy = AcousticCache { corr: Tensor3::zeros(1, 1, 1), energy: Mat::zeros(1, 1) };
        let front = self.front_from_energies(x, dummy)?;
        let bno = batch_norm_eval(&front.q, &self.bn)?;
        let head = self.head_forward(bno)?;
        Ok(head.logits)
    }
}

fn add_vec(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += *y;
    }
}

impl Mat {
    fn add_assign(&mut self, other: &Mat) {
        add_vec(&mut self.data, &other.data);
    }
}

impl Tensor3 {
    fn add_assign_t(&mut self, other: &Tensor3) {
        add_vec(&mut self.data, &other.data);
    }
}

/// Training-mode forward state for a whole batch.
pub struct BatchForward {
    pub fronts: Vec<FrontCache>,
    pub bn_cache: BnCache,
    /// Blended running statistics for the trainer to commit after the step.
    pub bn_stats: BnStats,
    pub heads: Vec<HeadCache>,
    pub logits: Vec<Vec<f64>>,
}

impl AcousticModel {
    /// Training-mode forward over a batch: per-sample stages run first (in
    /// parallel), batch norm couples the batch, then the head runs per
    /// sample. Pure: running statistics are proposed, not written.
    pub fn forward_train(&self, blocks: &[RawFrameBlock]) -> Result<BatchForward> {
        if blocks.len() < 2 {
            return Err(Error::DegenerateInput(format!(
                "training forward needs a batch of at least 2, got {}",
                blocks.len()
            )));
        }
        let bank = self.kernel_bank()?;
        let fronts: Vec<Result<FrontCache>> =
            crate::util::par_map(blocks.len(), |i| self.front(&blocks[i], &bank));
        let fronts: Vec<FrontCache> = fronts.into_iter().collect::<Result<_>>()?;
        let qs: Vec<Tensor3> = fronts.iter().map(|f| f.q.clone()).collect();
        let (bno, bn_cache, bn_stats) = batch_norm_train(&qs, &self.bn)?;
        let heads: Vec<Result<HeadCache>> = bno
            .into_iter()
            .map(|b| self.head_forward(b))
            .collect();
        let heads: Vec<HeadCache> = heads.into_iter().collect::<Result<_>>()?;
        let logits = heads.iter().map(|h| h.logits.clone()).collect();
        Ok(BatchForward { fronts, bn_cache, bn_stats, heads, logits })
    }

    /// Reverse-mode pass over a batch given dL/dlogits per sample. Gradients
    /// are summed in sample order regardless of thread count.
    pub fn backward_train(
        &self,
        blocks: &[RawFrameBlock],
        fwd: &BatchForward,
        dlogits: &[Vec<f64>],
    ) -> Result<GradientSet> {
        if dlogits.len() != blocks.len() || fwd.fronts.len() != blocks.len() {
            return Err(Error::contract("backward", "batch size mismatch between forward state and gradients"));
        }
        let bank = self.kernel_bank()?;
        let jac = if self.mu_trainable() { Some(kernel_mu_jacobian(&self.fb)?) } else { None };

        // head backward per sample (parallel), fixed-order parameter reduce
        let head_parts: Vec<(HeadGrads, Tensor3)> = crate::util::par_map(blocks.len(), |i| {
            let mut hg = HeadGrads::zeros_like(&self.head);
            let dbno = self.head_backward(&fwd.heads[i], &dlogits[i], &mut hg);
            (hg, dbno)
        });
        let mut grads = GradientSet::zeros(self);
        let mut dbno = Vec::with_capacity(blocks.len());
        for (hg, d) in head_parts {
            grads.head.conv_w.add_assign(&hg.conv_w);
            add_vec(&mut grads.head.conv_b, &hg.conv_b);
            grads.head.fc1_w.add_assign(&hg.fc1_w);
            add_vec(&mut grads.head.fc1_b, &hg.fc1_b);
            grads.head.fc2_w.add_assign(&hg.fc2_w);
            add_vec(&mut grads.head.fc2_b, &hg.fc2_b);
            grads.head.out_w.add_assign(&hg.out_w);
            add_vec(&mut grads.head.out_b, &hg.out_b);
            dbno.push(d);
        }

        let (dq, dgamma, dbeta) = batch_norm_train_backward(&self.bn, &fwd.bn_cache, &dbno);
        add_vec(&mut grads.bn_gamma, &dgamma);
        add_vec(&mut grads.bn_beta, &dbeta);

        // front backward per sample (parallel), fixed-order reduce
        let front_parts: Vec<Result<GradientSet>> = crate::util::par_map(blocks.len(), |i| {
            let mut part = GradientSet::zeros(self);
            self.front_backward(&blocks[i], &bank, jac.as_ref(), &fwd.fronts[i], &dq[i], &mut part)?;
            Ok(part)
        });
        for part in front_parts {
            grads.add_assign(&part?);
        }
        Ok(grads)
    }
}

/// Cross-entropy in nats: −log softmax(logits)[class_id].
pub fn cross_entropy(logits: &[f64], class_id: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::argument(format!("need at least 2 logits, got {}", logits.len())));
    }
    if class_id >= logits.len() {
        return Err(Error::argument(format!("class {class_id} out of range [0, {})", logits.len())));
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let log_sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    Ok(log_sum - logits[class_id])
}

/// Loss plus dL/dlogits = softmax(logits) − onehot(class_id).
pub fn cross_entropy_grad(logits: &[f64], class_id: usize) -> Result<(f64, Vec<f64>)> {
    let loss = cross_entropy(logits, class_id)?;
    let mut dlogits = crate::relevance::softmax(logits)?;
    dlogits[class_id] -= 1.0;
    Ok((loss, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{frame_signal, synthesize_clip};

    fn block_for(config: &ModelConfig, class: usize, seed: u64) -> RawFrameBlock {
        let clip = synthesize_clip(class, seed).unwrap();
        let center = clip.buffer.len() / 2;
        frame_signal(&clip.buffer, config.frame_len, config.hop, config.frames, center).unwrap()
    }

    #[test]
    fn config_dim_chains_work_out() {
        let tiny = ModelConfig::tiny().dims().unwrap();
        assert_eq!(tiny.spec, (8, 11));
        assert_eq!(tiny.pruned, (8, 5));
        assert_eq!(tiny.conv, (4, 6, 3));
        assert_eq!(tiny.pooled, (4, 2, 3));
        assert_eq!(tiny.head_conv, (3, 1, 2));
        assert_eq!(tiny.flat, 6);

        let desk = ModelConfig::desk().dims().unwrap();
        assert_eq!(desk.pruned, (24, 9));
        assert_eq!(desk.conv, (12, 22, 7));
        assert_eq!(desk.pooled, (12, 7, 7));
        assert_eq!(desk.head_conv, (8, 5, 5));
        assert_eq!(desk.head_pool, (8, 2, 2));

        let full = ModelConfig::default_scale().dims().unwrap();
        assert_eq!(full.pruned, (80, 21));
        assert_eq!(full.conv, (40, 76, 17));
        assert_eq!(full.pooled, (40, 25, 17));
        assert_eq!(full.head_conv, (16, 23, 15));
        assert_eq!(full.head_pool, (16, 11, 7));
        assert_eq!(full.flat, 16 * 11 * 7);
    }

    #[test]
    fn bad_geometry_names_the_stage() {
        let mut cfg = ModelConfig::tiny();
        cfg.keep = 13; // > frames
        match cfg.dims() {
            Err(Error::Contract { stage, .. }) => assert_eq!(stage, "prune"),
            other => panic!("expected contract error, got {other:?}"),
        }
        let mut cfg = ModelConfig::tiny();
        cfg.mod_kf = 9; // larger than filter count after prune? 8 rows, 9 too big
        match cfg.dims() {
            Err(Error::Contract { stage, .. }) => assert_eq!(stage, "modulation"),
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    #[test]
    fn variants_map_to_families_and_switches() {
        use std::str::FromStr;
        for v in Variant::ALL {
            assert_eq!(Variant::from_str(v.label()).unwrap(), v);
        }
        assert_eq!(Variant::Mfb.family(), FilterFamily::FixedMel);
        assert!(!Variant::Mfb.acoustic_relevance());
        assert!(Variant::MfbR.acoustic_relevance());
        assert!(!Variant::MfbR.modulation_relevance());
        assert_eq!(Variant::Ar.family(), FilterFamily::CosineGaussian);
        assert!(Variant::ArMr.modulation_relevance());
        assert_eq!(Variant::SrMr.family(), FilterFamily::Sinc);
        assert!(Variant::SrMr.acoustic_relevance());
        assert!(Variant::from_str("PFB").is_err());
    }

    #[test]
    fn init_is_deterministic_and_starts_uniform() {
        let cfg = ModelConfig::tiny().with_variant(Variant::ArMr);
        let a = AcousticModel::init(cfg.clone(), 7).unwrap();
        let b = AcousticModel::init(cfg.clone(), 7).unwrap();
        assert_eq!(a, b);
        let c = AcousticModel::init(cfg, 8).unwrap();
        assert_ne!(a, c);
        // relevance output layers start at zero: weights are exactly uniform
        assert!(a.acoustic_net.w2.data.iter().all(|&v| v == 0.0));
        let block = block_for(&a.config, 0, 1);
        let (_, front, _) = a.forward_eval(&block).unwrap();
        let (w, _) = front.acoustic_weights.as_ref().unwrap();
        assert!(w.w.iter().all(|&v| v == 1.0 / 8.0));
        let (wm, _) = front.modulation_weights.as_ref().unwrap();
        assert!(wm.w.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn eval_forward_is_a_pure_function() {
        let cfg = ModelConfig::tiny().with_variant(Variant::ArMr);
        let model = AcousticModel::init(cfg, 3).unwrap();
        let block = block_for(&model.config, 1, 9);
        let (l1, _, _) = model.forward_eval(&block).unwrap();
        let (l2, _, _) = model.forward_eval(&block).unwrap();
        assert_eq!(l1, l2);
        assert!(l1.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn baseline_variant_produces_finite_logits() {
        let cfg = ModelConfig::tiny().with_variant(Variant::Mfb);
        let model = AcousticModel::init(cfg, 5).unwrap();
        let block = block_for(&model.config, 2, 11);
        let (logits, front, _) = model.forward_eval(&block).unwrap();
        assert!(front.acoustic_weights.is_none());
        assert!(front.modulation_weights.is_none());
        assert_eq!(logits.len(), 3);
        assert!(logits.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cross_entropy_matches_hand_values() {
        let loss = cross_entropy(&vec![0.7; 8], 3).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-12);
        assert!((loss - 2.0794415416798357).abs() < 1e-12);

        let mut logits = vec![0.0; 8];
        logits[2] = 50.0;
        assert!(cross_entropy(&logits, 2).unwrap() < 1e-20);

        let loss = cross_entropy(&[1.0, 0.0], 0).unwrap();
        assert!((loss - 0.3132616875182228).abs() < 1e-12);

        assert!(cross_entropy(&[1.0, 0.0], 2).is_err());
        assert!(cross_entropy(&[1.0], 0).is_err());
    }

    #[test]
    fn gradient_of_uniform_logits_pulls_toward_the_label() {
        let (loss, d) = cross_entropy_grad(&[0.0, 0.0, 0.0, 0.0], 1).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((d[0] - 0.25).abs() < 1e-15);
        assert!((d[1] + 0.75).abs() < 1e-15);
        let sum: f64 = d.iter().sum();
        assert!(sum.abs() < 1e-15);
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let cfg = ModelConfig::tiny().with_variant(Variant::ArMr);
        let model = AcousticModel::init(cfg, 13).unwrap();
        let blocks: Vec<_> = (0..2).map(|i| block_for(&model.config, i, 20 + i as u64)).collect();
        let fwd = model.forward_train(&blocks).unwrap();
        let dlogits = vec![vec![0.0; 3]; 2];
        let grads = model.backward_train(&blocks, &fwd, &dlogits).unwrap();
        for (name, g) in grads.groups() {
            assert!(g.iter().all(|&v| v == 0.0), "group {name} not zero");
        }
    }

    #[test]
    fn disabled_relevance_stages_get_zero_gradients() {
        let cfg = ModelConfig::tiny().with_variant(Variant::A);
        let model = AcousticModel::init(cfg, 17).unwrap();
        let blocks: Vec<_> = (0..2).map(|i| block_for(&model.config, i, 30 + i as u64)).collect();
        let fwd = model.forward_train(&blocks).unwrap();
        let dlogits: Vec<Vec<f64>> = fwd
            .logits
            .iter()
            .enumerate()
            .map(|(i, l)| cross_entropy_grad(l, i).unwrap().1)
            .collect();
        let grads = model.backward_train(&blocks, &fwd, &dlogits).unwrap();
        assert!(grads.acoustic_net.w1.data.iter().all(|&v| v == 0.0));
        assert!(grads.acoustic_net.w2.data.iter().all(|&v| v == 0.0));
        assert!(grads.mod_net.w1.data.iter().all(|&v| v == 0.0));
        // enabled parts actually receive gradient
        assert!(grads.mod_kernels.data.iter().any(|&v| v != 0.0));
        assert!(grads.head.out_w.data.iter().any(|&v| v != 0.0));
        assert!(grads.mu.as_ref().unwrap().iter().any(|&v| v != 0.0));
        assert!(grads.all_finite());
    }

    #[test]
    fn frozen_filters_drop_the_center_gradient_entry() {
        let mut cfg = ModelConfig::tiny().with_variant(Variant::A);
        cfg.freeze_filters = true;
        let model = AcousticModel::init(cfg, 17).unwrap();
        assert!(!model.mu_trainable());
        let grads = GradientSet::zeros(&model);
        assert!(grads.mu.is_none());
        assert!(grads.groups().iter().all(|(n, _)| *n != "fb.mu"));

        let sinc = AcousticModel::init(ModelConfig::tiny().with_variant(Variant::Sinc), 17).unwrap();
        assert!(!sinc.mu_trainable());
    }

    #[test]
    fn trainable_and_gradient_groups_align() {
        for variant in [Variant::A, Variant::Sinc, Variant::ArMr] {
            let cfg = ModelConfig::tiny().with_variant(variant);
            let mut model = AcousticModel::init(cfg, 23).unwrap();
            let grads = GradientSet::zeros(&model);
            let gnames: Vec<&str> = grads.groups().iter().map(|(n, _)| *n).collect();
            let gsizes: Vec<usize> = grads.groups().iter().map(|(_, g)| g.len()).collect();
            let tnames: Vec<&str> = model.trainable().iter().map(|(n, _)| *n).collect();
            let tsizes: Vec<usize> = model.trainable().iter().map(|(_, p)| p.len()).collect();
            assert_eq!(gnames, tnames, "{variant:?}");
            assert_eq!(gsizes, tsizes, "{variant:?}");
        }
    }

    /// Uniform relevance with the stage input pre-scaled by the filter count
    /// must reproduce the switched-off logits exactly: the weighting is the
    /// only difference and (f·x)·(1/f) == x bitwise for power-of-two f.
    #[test]
    fn uniform_acoustic_weighting_is_absorbed_by_prescaling() {
        let off = AcousticModel::init(ModelConfig::tiny().with_variant(Variant::A), 29).unwrap();
        let mut on = off.clone();
        on.config.acoustic_relevance = true;
        // zero relevance output layer → exactly uniform weights
        assert!(on.acoustic_net.w2.data.iter().all(|&v| v == 0.0));

        let block = block_for(&off.config, 1, 40);
        let bank = off.kernel_bank().unwrap();
        let (x, _) = off.log_energies(&block, &bank).unwrap();
        let dummy = || AcousticCache { corr: Tensor3::zeros(1, 1, 1), energy: Mat::zeros(1, 1) };

        let logits_off = {
            let front = off.front_from_energies(x.clone(), dummy()).unwrap();
            let bno = batch_norm_eval(&front.q, &off.bn).unwrap();
            off.head_forward(bno).unwrap().logits
        };
        let scaled = Mat::from_fn(x.rows, x.cols, |i, j| 8.0 * x.at(i, j));
        let logits_on = {
            let front = on.front_from_energies(scaled, dummy()).unwrap();
            let bno = batch_norm_eval(&front.q, &on.bn).unwrap();
            on.head_forward(bno).unwrap().logits
        };
        assert_eq!(logits_off, logits_on);
    }

    /// Same algebra for the modulation stage: scaling the (linear,
    /// positively homogeneous) conv stage by K and weighting uniformly by
    /// 1/K cancels bitwise for power-of-two K.
    #[test]
    fn uniform_modulation_weighting_is_absorbed_by_prescaling() {
        let off = AcousticModel::init(ModelConfig::tiny().with_variant(Variant::A), 31).unwrap();
        let mut on = off.clone();
        on.config.modulation_relevance = true;
        let k = off.config.mod_count as f64;
        for v in &mut on.mod_kernels.kernels.data {
            *v *= k;
        }
        for v in &mut on.mod_kernels.bias {
            *v *= k;
        }
        let block = block_for(&off.config, 2, 41);
        let (l_off, _, _) = off.forward_eval(&block).unwrap();
        let (l_on, front, _) = on.forward_eval(&block).unwrap();
        let (wm, _) = front.modulation_weights.as_ref().unwrap();
        assert!(wm.w.iter().all(|&v| v == 0.25));
        assert_eq!(l_off, l_on);
    }

    #[test]
    fn train_forward_rejects_tiny_batches() {
        let model = AcousticModel::init(ModelConfig::tiny().with_variant(Variant::A), 3).unwrap();
        let blocks = vec![block_for(&model.config, 0, 1)];
        assert!(matches!(model.forward_train(&blocks), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn wrong_block_shape_names_the_stage() {
        let model = AcousticModel::init(ModelConfig::tiny().with_variant(Variant::A), 3).unwrap();
        let clip = synthesize_clip(0, 1).unwrap();
        let block = frame_signal(&clip.buffer, 400, 160, 9, 9600).unwrap(); // 9 frames, model wants 11
        match model.forward_eval(&block) {
            Err(Error::Contract { stage, .. }) => assert_eq!(stage, "acoustic"),
            other => panic!("expected contract error, got {other:?}"),
        }
    }

    /// Full-model finite-difference check on the A-R,M-R tiny config: one
    /// spot check per parameter group (the acceptance suite sweeps all
    /// variants and parameters).
    #[test]
    fn batch_gradients_match_finite_differences() {
        let cfg = ModelConfig::tiny().with_variant(Variant::ArMr);
        let model = AcousticModel::init(cfg, 37).unwrap();
        let blocks: Vec<_> = (0..2).map(|i| block_for(&model.config, i, 50 + i as u64)).collect();
        let labels = [0usize, 1];

        let loss_of = |m: &AcousticModel| -> f64 {
            let fwd = m.forward_train(&blocks).unwrap();
            fwd.logits
                .iter()
                .zip(labels)
                .map(|(l, c)| cross_entropy(l, c).unwrap())
                .sum::<f64>()
                / blocks.len() as f64
        };

        let fwd = model.forward_train(&blocks).unwrap();
        let b = blocks.len() as f64;
        let dlogits: Vec<Vec<f64>> = fwd
            .logits
            .iter()
            .zip(labels)
            .map(|(l, c)| {
                let (_, mut d) = cross_entropy_grad(l, c).unwrap();
                for v in &mut d {
                    *v /= b;
                }
                d
            })
            .collect();
        let grads = model.backward_train(&blocks, &fwd, &dlogits).unwrap();

        let nudge = |m: &AcousticModel, name: &str, idx: usize, to: f64| -> AcousticModel {
            let mut out = m.clone();
            let mut groups = out.trainable();
            let (_, p) = groups.iter_mut().find(|(n, _)| *n == name).unwrap();
            p[idx] = to;
            drop(groups);
            out
        };
        for (name, g) in grads.groups() {
            // probe a few entries per group; the acceptance suite sweeps all
            let stride = (g.len() / 3).max(1);
            for idx in (0..g.len()).step_by(stride) {
                let base = {
                    let mut m = model.clone();
                    let mut groups = m.trainable();
                    let (_, p) = groups.iter_mut().find(|(n, _)| *n == name).unwrap();
                    p[idx]
                };
                let h = 1e-5 * base.abs().max(1.0);
                let fd = (loss_of(&nudge(&model, name, idx, base + h))
                    - loss_of(&nudge(&model, name, idx, base - h)))
                    / (2.0 * h);
                let rel = (g[idx] - fd).abs() / g[idx].abs().max(1.0);
                assert!(rel <= 1e-4, "{name}[{idx}]: analytic {} fd {fd}", g[idx]);
            }
        }
    }
}
