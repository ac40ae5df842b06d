//! Machine-readable benchmark output.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// One measured configuration. Times are milliseconds (medians over `reps`).
/// Fields that do not apply to a scenario are left empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub scenario: String,
    pub seed: u64,
    pub backend: String,
    pub hash_profile: String,
    pub depth: u32,
    pub t: Option<u32>,
    pub entropy: Option<String>,
    /// Tunnel throttle in bytes per second.
    pub rate: Option<u64>,
    pub reps: usize,
    pub constraints: Option<usize>,
    pub proof_bytes: Option<usize>,
    pub setup_ms: Option<f64>,
    pub prove_ms: Option<f64>,
    pub verify_ms: Option<f64>,
    pub upload_ms: Option<f64>,
    pub validation_ms: Option<f64>,
    pub generation_ms: Option<f64>,
    pub download_ms: Option<f64>,
    pub total_ms: Option<f64>,
    /// Key download time over total key-request time.
    pub transfer_share: Option<f64>,
}

impl BenchRecord {
    /// The record with every timing field cleared, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        Self {
            setup_ms: None,
            prove_ms: None,
            verify_ms: None,
            upload_ms: None,
            validation_ms: None,
            generation_ms: None,
            download_ms: None,
            total_ms: None,
            transfer_share: None,
            ..self.clone()
        }
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[BenchRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> serde_json::Result<Vec<BenchRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

pub fn write_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>.jsonl` and `<stem>.csv`.
pub fn write_both(stem: &Path, records: &[BenchRecord]) -> io::Result<()> {
    if let Some(dir) = stem.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_jsonl(io::BufWriter::new(std::fs::File::create(stem.with_extension("jsonl"))?), records)?;
    write_csv(std::fs::File::create(stem.with_extension("csv"))?, records).map_err(io::Error::other)
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_csv_header() {
        let r = BenchRecord {
            scenario: "prove-scaling".into(),
            seed: 7,
            depth: 4,
            prove_ms: Some(1.5),
            constraints: Some(100),
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[r.clone(), r.clone()]).unwrap();
        assert_eq!(read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap(), vec![r.clone(), r.clone()]);

        let mut csv_out = Vec::new();
        write_csv(&mut csv_out, &[r]).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("scenario,seed,backend,hash_profile,depth,t"));
        assert!(lines.next().unwrap().starts_with("prove-scaling,7,,,4,,"));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
