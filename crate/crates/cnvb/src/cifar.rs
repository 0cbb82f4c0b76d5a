//! Reader for the binary version of CIFAR-10.
//!
//! Each record is one label byte (0-9) followed by 3072 pixel bytes: a 32x32
//! red plane, then green, then blue, each row-major.

use std::fs;
use std::path::Path;

use cnvb_core::network::{Example, Label};
use cnvb_core::tensor::euclidean_norm;

use crate::error::{io_err, Error, Result};

pub const SIDE: usize = 32;
pub const CHANNELS: usize = 3;
pub const RECORD_BYTES: usize = 1 + SIDE * SIDE * CHANNELS;
pub const CLASSES: u8 = 10;

/// Parse records from memory. Pixels are scaled to `[0, 1]`, moved to the
/// `(row, col, channel)` layout and rescaled so each input has norm `chi`.
/// An all-black image stays zero.
pub fn parse_cifar10(bytes: &[u8], class_filter: Option<&[u8]>, max_per_class: Option<usize>, chi: f64) -> Result<Vec<Example>> {
    if !(chi > 0.0 && chi.is_finite()) {
        return Err(Error::Usage(format!("input norm must be positive, got {chi}")));
    }
    let mut taken = [0usize; CLASSES as usize];
    let mut out = Vec::new();
    let plane = SIDE * SIDE;
    for (r, rec) in bytes.chunks(RECORD_BYTES).enumerate() {
        let start = r * RECORD_BYTES;
        if rec.len() < RECORD_BYTES {
            return Err(Error::Format(format!(
                "truncated record at byte offset {start}: {} of {RECORD_BYTES} bytes",
                rec.len()
            )));
        }
        let label = rec[0];
        if label >= CLASSES {
            return Err(Error::Format(format!("label {label} out of range at byte offset {start}")));
        }
        if class_filter.is_some_and(|f| !f.contains(&label)) {
            continue;
        }
        if max_per_class.is_some_and(|m| taken[label as usize] >= m) {
            continue;
        }
        taken[label as usize] += 1;
        let px = &rec[1..];
        let mut x = vec![0.0; plane * CHANNELS];
        for ch in 0..CHANNELS {
            for p in 0..plane {
                x[p * CHANNELS + ch] = px[ch * plane + p] as f64 / 255.0;
            }
        }
        let n = euclidean_norm(&x);
        if n > 0.0 {
            x.iter_mut().for_each(|v| *v *= chi / n);
        }
        out.push(Example {
            x,
            y: Label::Class(label as usize),
        });
    }
    Ok(out)
}

pub fn load_cifar10_binary(
    path: impl AsRef<Path>,
    class_filter: Option<&[u8]>,
    max_per_class: Option<usize>,
    chi: f64,
) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_cifar10(&bytes, class_filter, max_per_class, chi)
}

/// Relabel a two-class subset as `+1` for `positive` and `-1` otherwise.
pub fn to_binary(examples: Vec<Example>, positive: usize) -> Vec<Example> {
    examples
        .into_iter()
        .map(|ex| {
            let y = match ex.y {
                Label::Class(c) if c == positive => 1,
                Label::Binary(b) => b,
                Label::Class(_) => -1,
            };
            Example { x: ex.x, y: Label::Binary(y) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..RECORD_BYTES - 1).map(fill));
        r
    }

    #[test]
    fn single_record() {
        let ex = parse_cifar10(&record(3, |i| (i % 251) as u8), None, None, 1.0).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].y, Label::Class(3));
        assert!((euclidean_norm(&ex[0].x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_planes_are_interleaved() {
        // red plane 255, others 0
        let ex = parse_cifar10(&record(0, |i| if i < 1024 { 255 } else { 0 }), None, None, 1.0).unwrap();
        assert!(ex[0].x[0] > 0.0 && ex[0].x[1] == 0.0 && ex[0].x[2] == 0.0 && ex[0].x[3] > 0.0);
    }

    #[test]
    fn truncated_record_reports_offset() {
        let mut b = record(1, |_| 7);
        b.extend(record(2, |_| 9));
        b.truncate(RECORD_BYTES + 100);
        let err = parse_cifar10(&b, None, None, 1.0).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("byte offset 3073")), "{err}");
    }

    #[test]
    fn filtering_and_caps() {
        let mut b = Vec::new();
        for l in [0u8, 1, 0, 2, 0, 1] {
            b.extend(record(l, |i| (i % 7) as u8 + 1));
        }
        let ex = parse_cifar10(&b, Some(&[0, 1]), Some(2), 2.0).unwrap();
        let labels: Vec<_> = ex.iter().map(|e| e.y).collect();
        assert_eq!(labels, vec![Label::Class(0), Label::Class(1), Label::Class(0), Label::Class(1)]);
        let bin = to_binary(ex, 1);
        assert_eq!(bin[0].y, Label::Binary(-1));
        assert_eq!(bin[1].y, Label::Binary(1));
    }
}
