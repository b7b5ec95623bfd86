//! IDX (MNIST-style) ingestion and export.
//!
//! Images: big-endian `u32` magic `0x00000803`, count, rows, cols, then
//! `count·rows·cols` unsigned bytes. Labels: magic `0x00000801`, count, then
//! `count` bytes.

use std::fs;
use std::path::Path;

use super::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::numcore::Mat2;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    match bytes.get(at..at + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => format_err("truncated header"),
    }
}

struct RawImages {
    count: usize,
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

fn parse_images(bytes: &[u8]) -> Result<RawImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return format_err(format!("bad image magic {magic:#010x}"));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let body = &bytes[16..];
    if body.len() < need {
        return format_err(format!("truncated images: need {need} bytes, have {}", body.len()));
    }
    Ok(RawImages {
        count,
        rows,
        cols,
        pixels: body[..need].to_vec(),
    })
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return format_err(format!("bad label magic {magic:#010x}"));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return format_err(format!("truncated labels: need {count}, have {}", body.len()));
    }
    Ok(body[..count].to_vec())
}

fn to_dataset(name: String, raw: RawImages, labels: Option<Vec<usize>>, n_categories: usize) -> Result<Dataset> {
    let features = Mat2::from_vec(
        raw.count,
        raw.rows * raw.cols,
        raw.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )?;
    Dataset::new(name, features, labels, n_categories, Some((raw.rows, raw.cols)))
}

fn stem(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into())
}

/// Reads an image file and its label file. Pixel bytes are scaled by `1/255`.
/// The category count is one more than the largest label (at least two).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let raw = parse_images(&fs::read(images_path.as_ref())?)?;
    let labels = parse_labels(&fs::read(labels_path.as_ref())?)?;
    if labels.len() != raw.count {
        return format_err(format!(
            "{} images but {} labels",
            raw.count,
            labels.len()
        ));
    }
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let n_categories = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    to_dataset(stem(images_path.as_ref()), raw, Some(labels), n_categories)
}

/// Reads an image file without labels.
pub fn load_idx_images(images_path: impl AsRef<Path>, n_categories: usize) -> Result<Dataset> {
    let raw = parse_images(&fs::read(images_path.as_ref())?)?;
    to_dataset(stem(images_path.as_ref()), raw, None, n_categories)
}

/// Every IDX image file directly inside `dir`, in file-name order, as one
/// unlabeled domain. Files with other headers are skipped.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Domain> {
    let mut paths: Vec<_> = fs::read_dir(dir.as_ref())?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    let mut datasets = Vec::new();
    for path in paths.into_iter().filter(|p| p.is_file()) {
        let bytes = fs::read(&path)?;
        if be_u32(&bytes, 0).ok() == Some(IMAGE_MAGIC) {
            datasets.push(to_dataset(stem(&path), parse_images(&bytes)?, None, 1)?);
        }
    }
    if datasets.is_empty() {
        return format_err(format!("no IDX image files in {}", dir.as_ref().display()));
    }
    Domain::new(datasets)
}

/// Writes the images (and labels, when both are present) in IDX format.
/// Values are quantized with `round(x·255)`.
pub fn save_idx(
    d: &Dataset,
    images_path: impl AsRef<Path>,
    labels_path: Option<&Path>,
) -> Result<()> {
    let (rows, cols) = d.image_shape().unwrap_or((1, d.width()));
    let mut out = Vec::with_capacity(16 + d.len() * rows * cols);
    for v in [IMAGE_MAGIC, d.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(
        d.features()
            .as_slice()
            .iter()
            .map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    fs::write(images_path, out)?;

    if let Some(path) = labels_path {
        let labels = d.require_labels()?;
        if let Some(&big) = labels.iter().find(|&&y| y > 255) {
            return format_err(format!("label {big} does not fit in a byte"));
        }
        let mut out = Vec::with_capacity(8 + labels.len());
        out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend(labels.iter().map(|&y| y as u8));
        fs::write(path, out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two 2×3 images and their labels, written byte by byte.
    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let images: Vec<u8> = vec![
            0x00, 0x00, 0x08, 0x03, // magic
            0x00, 0x00, 0x00, 0x02, // count
            0x00, 0x00, 0x00, 0x02, // rows
            0x00, 0x00, 0x00, 0x03, // cols
            0, 51, 102, 153, 204, 255, // image 0
            255, 0, 255, 0, 255, 0, // image 1
        ];
        let labels: Vec<u8> = vec![0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 7, 3];
        let ip = dir.join("img.idx3");
        let lp = dir.join("lbl.idx1");
        fs::write(&ip, images).unwrap();
        fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn reads_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.image_shape(), Some((2, 3)));
        assert_eq!(d.labels().unwrap(), &[7, 3]);
        assert_eq!(d.n_categories(), 8);
        assert_eq!(d.features().row(0), &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert_eq!(d.features()[(1, 0)], 1.0);
    }

    #[test]
    fn image_dir_skips_label_files() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, _) = fixture(dir.path());
        fs::copy(&ip, dir.path().join("img2.idx3")).unwrap();
        let d = load_image_dir(dir.path()).unwrap();
        assert_eq!(d.datasets().len(), 2);
        assert_eq!(d.datasets()[0].labels(), None);
        assert!(load_image_dir(tempfile::tempdir().unwrap().path()).is_err());
    }

    #[test]
    fn round_trips_through_save() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let d = load_idx(&ip, &lp).unwrap();
        let (ip2, lp2) = (dir.path().join("a"), dir.path().join("b"));
        save_idx(&d, &ip2, Some(&lp2)).unwrap();
        assert_eq!(fs::read(&ip).unwrap(), fs::read(&ip2).unwrap());
        assert_eq!(fs::read(&lp).unwrap(), fs::read(&lp2).unwrap());
    }

    #[test]
    fn format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());

        let mut short = fs::read(&lp).unwrap();
        short[7] = 3; // claims three labels
        let bad_count = dir.path().join("bad_count");
        fs::write(&bad_count, &short).unwrap();
        assert!(matches!(load_idx(&ip, &bad_count), Err(Error::Format(_))));

        let mut lbl = fs::read(&lp).unwrap();
        lbl.push(1);
        lbl[7] = 3;
        let mismatched = dir.path().join("mismatch");
        fs::write(&mismatched, &lbl).unwrap();
        assert!(matches!(load_idx(&ip, &mismatched), Err(Error::Format(_))));

        assert!(matches!(load_idx(&lp, &lp), Err(Error::Format(_))));

        let img = fs::read(&ip).unwrap();
        let trunc = dir.path().join("trunc");
        fs::write(&trunc, &img[..img.len() - 1]).unwrap();
        assert!(matches!(load_idx(&trunc, &lp), Err(Error::Format(_))));
        fs::write(&trunc, &img[..10]).unwrap();
        assert!(matches!(load_idx(&trunc, &lp), Err(Error::Format(_))));
    }
}
