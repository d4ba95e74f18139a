//! Versioned plain-text artifacts: full model checkpoints and filterbank
//! center exports. Values are written with 17 significant digits so every
//! round trip is bit-exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::filterbank::FilterFamily;
use crate::model::{AcousticModel, HeadConfig, ModelConfig};
use crate::util::{fmt_f64, parse_f64, write_atomic};

const CKPT_MAGIC: &str = "relward ckpt v1";

/// Logical shape of every serialized tensor, aligned with
/// [`AcousticModel::tensors`].
fn tensor_dims(cfg: &ModelConfig) -> Result<Vec<(&'static str, Vec<usize>)>> {
    let dims = cfg.dims()?;
    let (f, ha, hm, kk) = (cfg.filters, cfg.acoustic_hidden, cfg.mod_hidden, cfg.mod_count);
    let h = &cfg.head;
    Ok(vec![
        ("fb.mu", vec![f]),
        ("fb.band", vec![f]),
        ("arel.w1", vec![ha, f]),
        ("arel.b1", vec![ha]),
        ("arel.w2", vec![f, ha]),
        ("arel.b2", vec![f]),
        ("mod.kernels", vec![kk, cfg.mod_kf, cfg.mod_kt]),
        ("mod.bias", vec![kk]),
        ("mrel.w1", vec![hm, kk]),
        ("mrel.b1", vec![hm]),
        ("mrel.w2", vec![kk, hm]),
        ("mrel.b2", vec![kk]),
        ("bn.running_mean", vec![kk]),
        ("bn.running_var", vec![kk]),
        ("bn.gamma", vec![kk]),
        ("bn.beta", vec![kk]),
        ("head.conv_w", vec![h.maps, kk * h.kh * h.kw]),
        ("head.conv_b", vec![h.maps]),
        ("head.fc1_w", vec![h.fc1, dims.flat]),
        ("head.fc1_b", vec![h.fc1]),
        ("head.fc2_w", vec![h.fc2, h.fc1]),
        ("head.fc2_b", vec![h.fc2]),
        ("head.out_w", vec![cfg.classes, h.fc2]),
        ("head.out_b", vec![cfg.classes]),
    ])
}

fn meta_lines(cfg: &ModelConfig, step: u64) -> Vec<String> {
    let h = &cfg.head;
    let b = |v: bool| if v { "1" } else { "0" };
    vec![
        format!("meta family {}", cfg.family.name()),
        format!("meta acoustic_relevance {}", b(cfg.acoustic_relevance)),
        format!("meta modulation_relevance {}", b(cfg.modulation_relevance)),
        format!("meta filters {}", cfg.filters),
        format!("meta kernel_len {}", cfg.kernel_len),
        format!("meta frames {}", cfg.frames),
        format!("meta keep {}", cfg.keep),
        format!("meta frame_len {}", cfg.frame_len),
        format!("meta hop {}", cfg.hop),
        format!("meta mod_count {}", cfg.mod_count),
        format!("meta mod_kf {}", cfg.mod_kf),
        format!("meta mod_kt {}", cfg.mod_kt),
        format!("meta acoustic_hidden {}", cfg.acoustic_hidden),
        format!("meta mod_hidden {}", cfg.mod_hidden),
        format!("meta classes {}", cfg.classes),
        format!("meta head_maps {}", h.maps),
        format!("meta head_kh {}", h.kh),
        format!("meta head_kw {}", h.kw),
        format!("meta head_pool {}", h.pool),
        format!("meta head_fc1 {}", h.fc1),
        format!("meta head_fc2 {}", h.fc2),
        format!("meta norm_over_pruned {}", b(cfg.norm_over_pruned)),
        format!("meta freeze_filters {}", b(cfg.freeze_filters)),
        format!("meta step {step}"),
    ]
}

/// Serializes the full model (config, every tensor including batch-norm
/// running statistics, and the optimizer step counter) and writes it
/// atomically.
pub fn save_checkpoint(model: &AcousticModel, step: u64, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(CKPT_MAGIC);
    out.push('\n');
    for line in meta_lines(&model.config, step) {
        out.push_str(&line);
        out.push('\n');
    }
    let dims = tensor_dims(&model.config)?;
    for ((name, values), (dname, shape)) in model.tensors().into_iter().zip(&dims) {
        debug_assert_eq!(&name, dname);
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::contract("checkpoint", format!("tensor {name} has {} values, shape says {expected}", values.len())));
        }
        out.push_str(&format!(
            "tensor {name} {} {}\n",
            shape.len(),
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ")
        ));
        for v in values {
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    write_atomic(path, out.as_bytes())
}

struct LineReader<'a> {
    path: &'a Path,
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines.next().ok_or_else(|| self.err("unexpected end of file"))
    }

    fn err(&self, detail: impl Into<String>) -> Error {
        Error::Format { path: self.path.to_path_buf(), detail: format!("line {}: {}", self.line_no, detail.into()) }
    }
}

fn parse_meta(r: &mut LineReader) -> Result<(ModelConfig, u64)> {
    let mut map = std::collections::BTreeMap::new();
    loop {
        let line = r.next()?;
        if let Some(rest) = line.strip_prefix("meta ") {
            let (key, value) = rest
                .split_once(' ')
                .ok_or_else(|| r.err(format!("meta line without value: '{line}'")))?;
            map.insert(key.to_string(), value.to_string());
            if key == "step" {
                break;
            }
        } else {
            return Err(r.err(format!("expected a meta line, got '{line}'")));
        }
    }
    let get = |key: &str| -> Result<&String> {
        map.get(key).ok_or_else(|| Error::Format {
            path: r.path.to_path_buf(),
            detail: format!("missing meta key '{key}'"),
        })
    };
    let usize_of = |key: &str| -> Result<usize> {
        get(key)?.parse().map_err(|_| Error::Format {
            path: r.path.to_path_buf(),
            detail: format!("meta key '{key}' is not a count: '{}'", map[key]),
        })
    };
    let bool_of = |key: &str| -> Result<bool> {
        match get(key)?.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::Format {
                path: r.path.to_path_buf(),
                detail: format!("meta key '{key}' must be 0 or 1, got '{other}'"),
            }),
        }
    };
    let family: FilterFamily = get("family")?.parse()?;
    let cfg = ModelConfig {
        family,
        acoustic_relevance: bool_of("acoustic_relevance")?,
        modulation_relevance: bool_of("modulation_relevance")?,
        filters: usize_of("filters")?,
        kernel_len: usize_of("kernel_len")?,
        frames: usize_of("frames")?,
        keep: usize_of("keep")?,
        frame_len: usize_of("frame_len")?,
        hop: usize_of("hop")?,
        mod_count: usize_of("mod_count")?,
        mod_kf: usize_of("mod_kf")?,
        mod_kt: usize_of("mod_kt")?,
        acoustic_hidden: usize_of("acoustic_hidden")?,
        mod_hidden: usize_of("mod_hidden")?,
        classes: usize_of("classes")?,
        head: HeadConfig {
            maps: usize_of("head_maps")?,
            kh: usize_of("head_kh")?,
            kw: usize_of("head_kw")?,
            pool: usize_of("head_pool")?,
            fc1: usize_of("head_fc1")?,
            fc2: usize_of("head_fc2")?,
        },
        norm_over_pruned: bool_of("norm_over_pruned")?,
        freeze_filters: bool_of("freeze_filters")?,
    };
    let step: u64 = get("step")?.parse().map_err(|_| Error::Format {
        path: r.path.to_path_buf(),
        detail: format!("meta key 'step' is not a counter: '{}'", map["step"]),
    })?;
    Ok((cfg, step))
}

/// Reads a checkpoint back into a model plus the stored step counter.
/// Everything is validated: magic line, meta keys, tensor names, shapes, and
/// value counts.
pub fn load_checkpoint(path: &Path) -> Result<(AcousticModel, u64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = LineReader { path, lines: text.lines(), line_no: 0 };
    let magic = r.next()?;
    if magic != CKPT_MAGIC {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            field: "version",
            value: magic.to_string(),
            expected: CKPT_MAGIC,
        });
    }
    let (cfg, step) = parse_meta(&mut r)?;
    let mut model = AcousticModel::init(cfg, 0)?;
    let dims = tensor_dims(&model.config)?;
    for ((name, shape), (tname, values)) in dims.iter().zip(model.tensors_mut()) {
        debug_assert_eq!(name, &tname);
        let header = r.next()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("tensor") {
            return Err(r.err(format!("expected 'tensor {name} ...', got '{header}'")));
        }
        let fname = parts.next().unwrap_or("");
        if fname != *name {
            return Err(r.err(format!("expected tensor '{name}', file has '{fname}'")));
        }
        let ndims: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| r.err(format!("tensor {name}: bad rank")))?;
        let fdims: Vec<usize> = parts.filter_map(|s| s.parse().ok()).collect();
        if ndims != shape.len() || &fdims != shape {
            return Err(r.err(format!("tensor {name}: shape {fdims:?} does not match model shape {shape:?}")));
        }
        for slot in values.iter_mut() {
            let line = r.next()?;
            *slot = parse_f64(line).ok_or_else(|| r.err(format!("tensor {name}: bad value '{line}'")))?;
        }
    }
    let tail = r.next()?;
    if tail != "end" {
        return Err(r.err(format!("expected 'end', got '{tail}'")));
    }
    model.fb.validate()?;
    Ok((model, step))
}

/// A filterbank center export: the family, kernel length, and one center
/// frequency per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterExport {
    pub family: FilterFamily,
    pub kernel_len: usize,
    pub mu: Vec<f64>,
}

/// Writes the model's filter centers as a small text table: a header line
/// `<family> <filter-count> <kernel-len>` followed by one center per line.
pub fn export_filters(model: &AcousticModel, path: &Path) -> Result<()> {
    let mut out = format!("{} {} {}\n", model.fb.family.name(), model.fb.f(), model.fb.k);
    for &m in &model.fb.mu {
        out.push_str(&fmt_f64(m));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn import_filters(path: &Path) -> Result<FilterExport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = LineReader { path, lines: text.lines(), line_no: 0 };
    let header = r.next()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(r.err(format!("expected '<family> <filters> <kernel-len>', got '{header}'")));
    }
    let family: FilterFamily = parts[0].parse()?;
    let f: usize = parts[1].parse().map_err(|_| r.err(format!("bad filter count '{}'", parts[1])))?;
    let k: usize = parts[2].parse().map_err(|_| r.err(format!("bad kernel length '{}'", parts[2])))?;
    let mut mu = Vec::with_capacity(f);
    for _ in 0..f {
        let line = r.next()?;
        let v = parse_f64(line).ok_or_else(|| r.err(format!("bad center value '{line}'")))?;
        if !v.is_finite() || v <= 0.0 || v >= 0.5 {
            return Err(r.err(format!("center {v} outside (0, 0.5)")));
        }
        mu.push(v);
    }
    Ok(FilterExport { family, kernel_len: k, mu })
}

/// Replaces the model's filter centers with imported ones. The import must
/// agree with the model on family, filter count, and kernel length.
pub fn apply_filters(model: &mut AcousticModel, import: &FilterExport) -> Result<()> {
    if import.family != model.fb.family {
        return Err(Error::contract(
            "filters",
            format!("import is {}, model uses {}", import.family.name(), model.fb.family.name()),
        ));
    }
    if import.mu.len() != model.fb.f() {
        return Err(Error::contract(
            "filters",
            format!("import has {} centers, model has {} filters", import.mu.len(), model.fb.f()),
        ));
    }
    if import.kernel_len != model.fb.k {
        return Err(Error::contract(
            "filters",
            format!("import kernel length {} != model kernel length {}", import.kernel_len, model.fb.k),
        ));
    }
    model.fb.mu.copy_from_slice(&import.mu);
    model.fb.validate()
}
