//! Dataset files.
//!
//! Binary (`.adds`), little-endian:
//!
//! ```text
//! magic    4 bytes  "ADDS"
//! version  u32      1
//! n        u64
//! d        u32
//! m        u32
//! features f32[n*d] row-major
//! labels   u16[n]
//! ```
//!
//! CSV uses the header `f0,..,f{d-1},label`.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::net::LabeledExample;

pub const DATASET_MAGIC: &[u8; 4] = b"ADDS";
pub const DATASET_VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 8 + 4 + 4;

pub fn dataset_to_bytes(ds: &Dataset) -> Vec<u8> {
    let n = ds.len();
    let mut out = Vec::with_capacity(HEADER + 4 * n * ds.dim + 2 * n);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(ds.dim as u32).to_le_bytes());
    out.extend_from_slice(&(ds.n_classes as u32).to_le_bytes());
    for ex in &ds.examples {
        for &v in &ex.x {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for ex in &ds.examples {
        out.extend_from_slice(&(ex.y as u16).to_le_bytes());
    }
    out
}

pub fn dataset_from_bytes(buf: &[u8]) -> Result<Dataset> {
    if buf.len() < HEADER {
        return Err(Error::Truncated {
            expected: HEADER,
            actual: buf.len(),
        });
    }
    if &buf[0..4] != DATASET_MAGIC {
        return Err(Error::Format("dataset magic is not ADDS".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "dataset version {version}, expected {DATASET_VERSION}"
        )));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(buf[16..20].try_into().unwrap()) as usize;
    let m = u32::from_le_bytes(buf[20..24].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(4))
        .and_then(|f| f.checked_add(2 * n + HEADER))
        .ok_or_else(|| Error::Format("dataset size overflows".into()))?;
    if buf.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: buf.len(),
        });
    }
    if buf.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after dataset payload",
            buf.len() - expected
        )));
    }
    let feats = &buf[HEADER..HEADER + 4 * n * d];
    let labels = &buf[HEADER + 4 * n * d..];
    let examples = (0..n)
        .map(|i| {
            let x = feats[4 * d * i..4 * d * (i + 1)]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            let y = u16::from_le_bytes(labels[2 * i..2 * i + 2].try_into().unwrap()) as usize;
            LabeledExample::new(x, y)
        })
        .collect();
    Dataset::new(d, m, examples)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    fs::write(path, dataset_to_bytes(ds))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    dataset_from_bytes(&fs::read(path)?)
}

pub fn write_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dim).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for ex in &ds.examples {
        let mut rec: Vec<String> = ex.x.iter().map(|v| v.to_string()).collect();
        rec.push(ex.y.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `n_classes` defaults to one more than the largest label seen.
pub fn read_csv(path: impl AsRef<Path>, n_classes: Option<usize>) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let d = header.len().saturating_sub(1);
    let well_formed = header.len() >= 2
        && header.get(d) == Some("label")
        && (0..d).all(|i| header.get(i) == Some(format!("f{i}").as_str()));
    if !well_formed {
        return Err(Error::Format("CSV header must be f0,..,f{d-1},label".into()));
    }
    let mut examples = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number {s:?}: {e}")));
        let x = (0..d).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
        let y = rec[d]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("bad label {:?}: {e}", &rec[d])))?;
        examples.push(LabeledExample::new(x, y));
    }
    let m = n_classes.unwrap_or_else(|| examples.iter().map(|e| e.y + 1).max().unwrap_or(0));
    Dataset::new(d, m, examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, DomainSpec};

    #[test]
    fn binary_round_trip() {
        let ds = generate(&DomainSpec::gaussian_mixture(3, 2, 50, 1)).unwrap().quantize_f32();
        let bytes = dataset_to_bytes(&ds);
        assert_eq!(bytes.len(), 24 + 50 * 2 * 4 + 50 * 2);
        assert_eq!(dataset_from_bytes(&bytes).unwrap(), ds);
    }

    #[test]
    fn empty_dataset() {
        let ds = Dataset::new(4, 3, vec![]).unwrap();
        let bytes = dataset_to_bytes(&ds);
        assert_eq!(bytes.len(), 24);
        assert_eq!(dataset_from_bytes(&bytes).unwrap(), ds);
    }

    #[test]
    fn truncation_reports_lengths() {
        let ds = generate(&DomainSpec::gaussian_mixture(2, 2, 10, 1)).unwrap();
        let bytes = dataset_to_bytes(&ds);
        match dataset_from_bytes(&bytes[..bytes.len() - 5]) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, bytes.len());
                assert_eq!(actual, bytes.len() - 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = dataset_from_bytes(&bytes[..10]).unwrap_err().to_string();
        assert!(msg.contains("expected 24") && msg.contains("got 10"), "{msg}");
    }

    #[test]
    fn bad_magic_and_version() {
        let ds = Dataset::new(2, 2, vec![]).unwrap();
        let mut bytes = dataset_to_bytes(&ds);
        bytes[4] = 2;
        assert!(matches!(dataset_from_bytes(&bytes), Err(Error::Format(_))));
        bytes[0] = b'Z';
        assert!(matches!(dataset_from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn csv_round_trip() {
        let ds = generate(&DomainSpec::gaussian_mixture(3, 3, 20, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&path, &ds).unwrap();
        let head = std::fs::read_to_string(&path).unwrap();
        assert!(head.starts_with("f0,f1,f2,label\n"));
        assert_eq!(read_csv(&path, Some(3)).unwrap(), ds);
    }
}
