//! Reader for the big-endian IDX format used by MNIST-style image sets.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            msg: "truncated header".into(),
        })
}

/// Reads an image file; returns `(pixels scaled to [0,1], n, rows*cols)`.
pub fn read_idx_images(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let bytes = fs::read(path)?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(bad(format!("bad image magic {magic:#010x}")));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let p = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * p {
        return Err(bad(format!(
            "expected {} pixel bytes, found {}",
            n * p,
            body.len()
        )));
    }
    Ok((body.iter().map(|&b| f64::from(b) / 255.0).collect(), n, p))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("bad label magic {magic:#010x}"),
        });
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("expected {n} labels, found {}", body.len()),
        });
    }
    Ok(body.iter().map(|&b| usize::from(b)).collect())
}

/// Loads an image/label pair, optionally keeping only the first `limit` rows.
pub fn read_idx_pair(
    images: &Path,
    labels: &Path,
    num_classes: usize,
    limit: Option<usize>,
) -> Result<Dataset> {
    let (mut pixels, n, p) = read_idx_images(images)?;
    let mut ys = read_idx_labels(labels)?;
    if ys.len() != n {
        return Err(Error::Format {
            path: labels.to_path_buf(),
            msg: format!("{} labels for {n} images", ys.len()),
        });
    }
    if let Some(k) = limit.filter(|&k| k < n) {
        pixels.truncate(k * p);
        ys.truncate(k);
    }
    Dataset::new(pixels, ys, p, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pair(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("imgs.idx3-ubyte");
        let lab = dir.join("labels.idx1-ubyte");
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&2u32.to_be_bytes());
        b.extend_from_slice(&[0, 255, 51, 102, 1, 2, 3, 4, 255, 255, 0, 0]);
        fs::write(&img, b).unwrap();
        let mut l = Vec::new();
        l.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        l.extend_from_slice(&3u32.to_be_bytes());
        l.extend_from_slice(&[1, 0, 9]);
        fs::write(&lab, l).unwrap();
        (img, lab)
    }

    #[test]
    fn parses_big_endian_headers() {
        let dir = std::env::temp_dir().join(format!("airfl-idx-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let (img, lab) = write_pair(&dir);
        let ds = read_idx_pair(&img, &lab, 10, None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.num_features(), 4);
        assert_eq!(ds.features(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.labels(), &[1, 0, 9]);
        let sub = read_idx_pair(&img, &lab, 10, Some(2)).unwrap();
        assert_eq!(sub.len(), 2);
        // Swapped files fail on magic.
        assert!(read_idx_images(&lab).is_err());
        assert!(read_idx_labels(&img).is_err());
        fs::remove_dir_all(&dir).ok();
    }
}
