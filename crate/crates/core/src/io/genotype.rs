//! Streaming reader for genotype dosage files.
//!
//! Layout: header `snp_id  chrom  pos` followed by the sample ids, then one
//! row per variant with dosages in `[0, 2]` or `NA`. Rows are read one at a
//! time, so memory does not grow with the number of variants.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use super::table::check_sample_order;
use crate::error::{Error, Result};
use crate::model::GenotypeRecord;

/// One variant row as read: dosages with `NaN` for `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVariant {
    pub snp_id: String,
    pub chrom: String,
    pub pos: u64,
    /// 1-based line number in the source file.
    pub line: usize,
    pub dosage: Vec<f64>,
}

impl RawVariant {
    pub fn n_missing(&self) -> usize {
        self.dosage.iter().filter(|v| v.is_nan()).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.n_missing() as f64 / self.dosage.len() as f64
    }

    /// Mean-impute and center.
    pub fn into_record(self) -> Result<GenotypeRecord> {
        GenotypeRecord::from_raw(self.snp_id, self.chrom, self.pos, self.dosage)
    }
}

/// Parse one dosage field; hard calls take a fast path.
fn parse_dosage(field: &str) -> Option<f64> {
    match field {
        "0" => Some(0.0),
        "1" => Some(1.0),
        "2" => Some(2.0),
        "NA" => Some(f64::NAN),
        _ => field.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

pub struct DosageReader<R> {
    reader: R,
    path: PathBuf,
    sample_ids: Vec<String>,
    line: usize,
    buf: String,
    done: bool,
}

impl DosageReader<BufReader<File>> {
    /// Open a dosage file; its sample ids must equal `expected_ids` in order.
    pub fn open(path: impl AsRef<Path>, expected_ids: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        DosageReader::new(BufReader::with_capacity(1 << 20, file), path, expected_ids)
    }
}

impl<R: BufRead> DosageReader<R> {
    /// Read the header from `reader`; `path` is used in error messages.
    pub fn new(mut reader: R, path: impl Into<PathBuf>, expected_ids: &[String]) -> Result<Self> {
        let path = path.into();
        let mut header = String::new();
        if reader.read_line(&mut header).map_err(|e| Error::io(&path, e))? == 0 {
            return Err(Error::parse(&path, 1, "empty file"));
        }
        let mut fields = header.trim_end_matches(['\n', '\r']).split('\t');
        for want in ["snp_id", "chrom", "pos"] {
            if fields.next() != Some(want) {
                return Err(Error::parse(&path, 1, "header must start with snp_id, chrom, pos"));
            }
        }
        let sample_ids: Vec<String> = fields.map(str::to_string).collect();
        check_sample_order(&path, &sample_ids, expected_ids)?;
        Ok(DosageReader {
            reader,
            path,
            sample_ids,
            line: 1,
            buf: String::new(),
            done: false,
        })
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(&self.path, self.line, msg)
    }

    fn parse_line(&self) -> Result<RawVariant> {
        let line = self.buf.trim_end_matches(['\n', '\r']);
        let mut fields = line.split('\t');
        let snp_id = fields.next().filter(|s| !s.is_empty()).ok_or_else(|| self.err("empty snp_id"))?;
        let chrom = fields.next().ok_or_else(|| self.err("missing chrom"))?;
        let pos = fields
            .next()
            .and_then(|p| p.parse::<u64>().ok())
            .ok_or_else(|| self.err("pos must be a non-negative integer"))?;
        let n = self.sample_ids.len();
        let mut dosage = Vec::with_capacity(n);
        for field in fields {
            let v = parse_dosage(field).ok_or_else(|| self.err(format!("'{field}' is not a dosage")))?;
            if !(v.is_nan() || (0.0..=2.0).contains(&v)) {
                return Err(self.err(format!("dosage {v} outside [0, 2]")));
            }
            dosage.push(v);
        }
        if dosage.len() != n {
            return Err(self.err(format!("expected {n} dosages, found {}", dosage.len())));
        }
        Ok(RawVariant {
            snp_id: snp_id.to_string(),
            chrom: chrom.to_string(),
            pos,
            line: self.line,
            dosage,
        })
    }
}

impl<R: BufRead> Iterator for DosageReader<R> {
    type Item = Result<RawVariant>;

    /// Stops after the first error.
    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.buf.clear();
            self.line += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(_) => {
                    if self.buf.trim_end_matches(['\n', '\r']).is_empty() {
                        continue;
                    }
                    let r = self.parse_line();
                    self.done = r.is_err();
                    return Some(r);
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::io(&self.path, e)));
                }
            }
        }
    }
}
