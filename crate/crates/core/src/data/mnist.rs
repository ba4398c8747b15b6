use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::layers::Tensor4;

use super::{Dataset, Features, Split};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn format_err(path: &Path, offset: u64, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        reason: reason.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let b = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| format_err(path, bytes.len() as u64, "truncated header"))?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses an IDX file, returning its dimensions and payload.
pub(crate) fn parse_idx<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let found = read_u32(bytes, 0, path)?;
    if found != magic {
        return Err(format_err(path, 0, format!("magic {found:#010x}, expected {magic:#010x}")));
    }
    let ndim = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndim);
    for d in 0..ndim {
        dims.push(read_u32(bytes, 4 + 4 * d, path)? as usize);
    }
    let header = 4 + 4 * ndim;
    let need = dims.iter().product::<usize>();
    let payload = &bytes[header..];
    if payload.len() < need {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    Ok((dims, &payload[..need]))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn find(dir: &Path, names: &[&str]) -> PathBuf {
    names
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.exists())
        .unwrap_or_else(|| dir.join(names[0]))
}

fn load_split(dir: &Path, prefix: &str) -> Result<Split> {
    let img_path = find(dir, &[&format!("{prefix}-images-idx3-ubyte"), &format!("{prefix}-images.idx3-ubyte")]);
    let lbl_path = find(dir, &[&format!("{prefix}-labels-idx1-ubyte"), &format!("{prefix}-labels.idx1-ubyte")]);
    let img_bytes = read(&img_path)?;
    let lbl_bytes = read(&lbl_path)?;
    let (idims, pixels) = parse_idx(&img_bytes, IDX_IMAGE_MAGIC, &img_path)?;
    let (ldims, labels) = parse_idx(&lbl_bytes, IDX_LABEL_MAGIC, &lbl_path)?;
    if idims[0] != ldims[0] {
        return Err(format_err(
            &lbl_path,
            4,
            format!("{} labels for {} images", ldims[0], idims[0]),
        ));
    }
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(format_err(&lbl_path, 8 + pos as u64, format!("label {} out of range", labels[pos])));
    }
    let (n, h, w) = (idims[0], idims[1], idims[2]);
    let x = Tensor4::from_shape_vec((n, 1, h, w), pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("payload length checked");
    Split::new(Features::Image(x), labels.iter().map(|&l| l as usize).collect())
}

/// Reads the four uncompressed IDX files from `dir`. Pixels are scaled to
/// `[0, 1]`; images keep their `1×28×28` shape.
pub fn load_mnist(dir: &Path) -> Result<Dataset> {
    Ok(Dataset {
        train: load_split(dir, "train")?,
        test: load_split(dir, "t10k")?,
        classes: 10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn parses_images_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        for prefix in ["train", "t10k"] {
            std::fs::write(
                dir.path().join(format!("{prefix}-images-idx3-ubyte")),
                idx(IDX_IMAGE_MAGIC, &[2, 2, 2], &[0, 255, 51, 0, 1, 2, 3, 4]),
            )
            .unwrap();
            std::fs::write(
                dir.path().join(format!("{prefix}-labels-idx1-ubyte")),
                idx(IDX_LABEL_MAGIC, &[2], &[7, 3]),
            )
            .unwrap();
        }
        let d = load_mnist(dir.path()).unwrap();
        assert_eq!(d.train.labels, vec![7, 3]);
        let Features::Image(x) = &d.train.features else { panic!() };
        assert_eq!(x.dim(), (2, 1, 2, 2));
        assert_eq!(x[[0, 0, 0, 1]], 1.0);
        assert_eq!(x[[0, 0, 1, 0]], 0.2);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let bytes = idx(IDX_LABEL_MAGIC, &[1, 1, 1], &[0]);
        let err = parse_idx(&bytes, IDX_IMAGE_MAGIC, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncated_payload() {
        let bytes = idx(IDX_IMAGE_MAGIC, &[2, 28, 28], &[0; 100]);
        let err = parse_idx(&bytes, IDX_IMAGE_MAGIC, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 116, .. }), "{err}");
        let err = parse_idx(&[0, 0, 8], IDX_IMAGE_MAGIC, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 3, .. }));
    }

    #[test]
    fn missing_directory_is_io_error() {
        let err = load_mnist(Path::new("/nonexistent/mnist")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert_eq!(err.exit_code(), 3);
    }
}
