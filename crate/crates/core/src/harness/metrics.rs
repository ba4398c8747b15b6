use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,step,train_loss,test_acc,wall_ms";

/// One CSV row. Per-step rows carry `NaN` test accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub step: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub wall_ms: u64,
}

/// Nine significant digits in scientific notation.
pub fn format_sig9(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        format!("{x}")
    }
}

pub fn write_metrics<W: Write>(records: &[MetricsRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            r.step,
            format_sig9(r.train_loss),
            format_sig9(r.test_acc),
            r.wall_ms
        )?;
    }
    out.flush()
}

pub fn emit_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics(records, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Input("metrics header missing".into()));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Input(format!("metrics row {}: {line:?}", n + 1));
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(MetricsRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                step: f[1].parse().map_err(|_| bad())?,
                train_loss: f[2].parse().map_err(|_| bad())?,
                test_acc: f[3].parse().map_err(|_| bad())?,
                wall_ms: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(records: &[MetricsRecord]) -> String {
        let mut buf = Vec::new();
        write_metrics(records, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_run_is_header_only() {
        assert_eq!(csv(&[]), format!("{METRICS_HEADER}\n"));
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(0.1234567891234), "1.23456789e-1");
        assert_eq!(format_sig9(2.0), "2.00000000e0");
        assert_eq!(format_sig9(f64::NAN), "NaN");
    }

    #[test]
    fn round_trip() {
        let records = vec![
            MetricsRecord { epoch: 1, step: 79, train_loss: 0.3141592653589793, test_acc: 0.9135, wall_ms: 1234 },
            MetricsRecord { epoch: 1, step: 80, train_loss: 1e-12, test_acc: f64::NAN, wall_ms: 0 },
        ];
        let text = csv(&records);
        let parsed = parse_metrics(&text).unwrap();
        assert_eq!(csv(&parsed), text);
        assert_eq!(parsed[0].train_loss, 0.314159265);
        assert_eq!(parsed[0].test_acc, 0.9135);
        assert!(parsed[1].test_acc.is_nan());
    }

    #[test]
    fn unwritable_path() {
        let err = emit_metrics(&[], Path::new("/nonexistent/dir/m.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
