//! Shared plumbing: thread cap, order-preserving parallel map, atomic file
//! writes, and full-precision float text.

use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Worker cap: `RELWARD_THREADS` if set, otherwise the machine's parallelism.
pub fn max_threads() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        if let Ok(v) = std::env::var("RELWARD_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                return n.max(1);
            }
        }
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    })
}

/// Applies `f` to `0..n` and returns results in index order.
///
/// Items are split into contiguous chunks across at most `max_threads()`
/// workers. Each item is computed independently, so the output is identical
/// for every thread count; reductions over the result happen in the caller,
/// in index order.
pub fn par_map<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let threads = max_threads().min(n.max(1));
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let mut out: Vec<Option<R>> = Vec::with_capacity(n);
    out.resize_with(n, || None);
    let slots: Vec<(usize, &mut [Option<R>])> = {
        let mut rest = out.as_mut_slice();
        let mut start = 0;
        let mut v = Vec::new();
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            v.push((start, head));
            start += take;
            rest = tail;
        }
        v
    };
    std::thread::scope(|scope| {
        for (start, slot) in slots {
            let f = &f;
            scope.spawn(move || {
                for (off, cell) in slot.iter_mut().enumerate() {
                    *cell = Some(f(start + off));
                }
            });
        }
    });
    out.into_iter().map(|c| c.expect("worker filled every slot")).collect()
}

/// Writes `bytes` to `path` atomically: temp file in the same directory,
/// then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile_path(dir, path);
    let mut attempts = 0;
    while tmp.exists() {
        attempts += 1;
        tmp = dir.join(format!(
            ".{}.tmp{}",
            path.file_name().and_then(|s| s.to_str()).unwrap_or("artifact"),
            attempts
        ));
    }
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn tempfile_path(dir: &Path, target: &Path) -> std::path::PathBuf {
    let name = target.file_name().and_then(|s| s.to_str()).unwrap_or("artifact");
    dir.join(format!(".{name}.tmp"))
}

/// Full-precision text for a finite double: 17 significant digits,
/// scientific notation. Round-trips bit-exactly through `parse_f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    Some(v)
}
