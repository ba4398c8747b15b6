use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::Tensor4;

use super::{Dataset, Features, Split};

/// One label byte followed by 1024 bytes each of the R, G and B planes.
pub const CIFAR_RECORD_LEN: usize = 3073;
const PIXELS: usize = 3 * 32 * 32;

fn parse_records(bytes: &[u8], path: &Path, pixels: &mut Vec<f64>, labels: &mut Vec<usize>) -> Result<()> {
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (bytes.len() / CIFAR_RECORD_LEN * CIFAR_RECORD_LEN) as u64,
            reason: format!("{} bytes is not a whole number of {CIFAR_RECORD_LEN}-byte records", bytes.len()),
        });
    }
    for (r, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        if rec[0] > 9 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: (r * CIFAR_RECORD_LEN) as u64,
                reason: format!("label {} out of range", rec[0]),
            });
        }
        labels.push(rec[0] as usize);
        pixels.extend(rec[1..].iter().map(|&p| p as f64 / 255.0));
    }
    Ok(())
}

fn load_files(dir: &Path, names: &[String]) -> Result<Split> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for name in names {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        parse_records(&bytes, &path, &mut pixels, &mut labels)?;
    }
    let x = Tensor4::from_shape_vec((labels.len(), 3, 32, 32), pixels).expect("whole records");
    debug_assert_eq!(x.len(), labels.len() * PIXELS);
    Split::new(Features::Image(x), labels)
}

/// Reads `data_batch_1.bin` … `data_batch_5.bin` and `test_batch.bin`.
pub fn load_cifar10(dir: &Path) -> Result<Dataset> {
    let train: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}.bin")).collect();
    Ok(Dataset {
        train: load_files(dir, &train)?,
        test: load_files(dir, &["test_batch.bin".to_string()])?,
        classes: 10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, r: u8, g: u8, b: u8) -> Vec<u8> {
        let mut v = vec![label];
        v.extend(std::iter::repeat(r).take(1024));
        v.extend(std::iter::repeat(g).take(1024));
        v.extend(std::iter::repeat(b).take(1024));
        v
    }

    #[test]
    fn planes_are_rgb() {
        let dir = tempfile::tempdir().unwrap();
        for i in 1..=5 {
            std::fs::write(dir.path().join(format!("data_batch_{i}.bin")), record(i, 255, 0, 51)).unwrap();
        }
        std::fs::write(dir.path().join("test_batch.bin"), [record(0, 0, 0, 0), record(9, 1, 1, 1)].concat()).unwrap();
        let d = load_cifar10(dir.path()).unwrap();
        assert_eq!(d.train.labels, vec![1, 2, 3, 4, 5]);
        assert_eq!(d.test.len(), 2);
        let Features::Image(x) = &d.train.features else { panic!() };
        assert_eq!(x[[0, 0, 31, 31]], 1.0);
        assert_eq!(x[[0, 1, 0, 0]], 0.0);
        assert_eq!(x[[0, 2, 5, 7]], 0.2);
    }

    #[test]
    fn wrong_record_size() {
        let mut labels = Vec::new();
        let err = parse_records(&vec![0u8; 3072], Path::new("b"), &mut Vec::new(), &mut labels).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
        let err = parse_records(&vec![0u8; 3073 * 2 + 5], Path::new("b"), &mut Vec::new(), &mut labels).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 6146, .. }));
    }

    #[test]
    fn label_out_of_range() {
        let err = parse_records(&record(10, 0, 0, 0), Path::new("b"), &mut Vec::new(), &mut Vec::new()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
