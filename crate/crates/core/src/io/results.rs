//! Scan results: one tab-separated row per retained variant.
//!
//! Real numbers are written in scientific notation with six significant
//! digits (`{:.5e}`); unavailable values are `NA`. Files are written to a
//! temporary sibling and renamed into place on completion, so a path never
//! holds partial output.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{Error, Result};

/// Reason value for rows whose tests all ran.
pub const REASON_OK: &str = "ok";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snp_id: String,
    pub chrom: String,
    pub pos: u64,
    pub maf: f64,
    pub n_used: usize,
    pub p_manova: Option<f64>,
    pub p_ssu: Option<f64>,
    pub p_usat: Option<f64>,
    pub usat_omega_star: Option<f64>,
    pub p_fisher: Option<f64>,
    pub p_minp: Option<f64>,
    pub p_traits: Vec<Option<f64>>,
    pub t_manova: Option<f64>,
    pub t_ssu: Option<f64>,
    pub t_usat: Option<f64>,
    pub reason: String,
}

impl ResultRow {
    /// Row with identifiers only; every test value is `NA`.
    pub fn empty(snp_id: &str, chrom: &str, pos: u64, maf: f64, n_used: usize, k: usize) -> Self {
        ResultRow {
            snp_id: snp_id.to_string(),
            chrom: chrom.to_string(),
            pos,
            maf,
            n_used,
            p_manova: None,
            p_ssu: None,
            p_usat: None,
            usat_omega_star: None,
            p_fisher: None,
            p_minp: None,
            p_traits: vec![None; k],
            t_manova: None,
            t_ssu: None,
            t_usat: None,
            reason: REASON_OK.to_string(),
        }
    }
}

const FIXED_HEAD: [&str; 11] = [
    "snp_id",
    "chrom",
    "pos",
    "maf",
    "n_used",
    "p_manova",
    "p_ssu",
    "p_usat",
    "usat_omega_star",
    "p_fisher",
    "p_minp",
];
const TAIL: [&str; 4] = ["t_manova", "t_ssu", "t_usat", "reason"];

/// Header fields for `k` traits.
pub fn header(k: usize) -> Vec<String> {
    FIXED_HEAD
        .iter()
        .map(|s| s.to_string())
        .chain((1..=k).map(|j| format!("p_trait_{j}")))
        .chain(TAIL.iter().map(|s| s.to_string()))
        .collect()
}

/// Six significant digits in scientific notation, `NA` for missing or NaN.
pub fn format_real(v: Option<f64>) -> String {
    match v {
        Some(x) if !x.is_nan() => format!("{x:.5e}"),
        _ => "NA".to_string(),
    }
}

fn push_real(line: &mut String, v: Option<f64>) {
    line.push('\t');
    match v {
        Some(x) if !x.is_nan() => {
            let _ = write!(line, "{x:.5e}");
        }
        _ => line.push_str("NA"),
    }
}

/// Render one row (without the newline).
pub fn format_row(r: &ResultRow) -> String {
    let mut s = String::with_capacity(256);
    let _ = write!(s, "{}\t{}\t{}", r.snp_id, r.chrom, r.pos);
    push_real(&mut s, Some(r.maf));
    let _ = write!(s, "\t{}", r.n_used);
    for v in [r.p_manova, r.p_ssu, r.p_usat, r.usat_omega_star, r.p_fisher, r.p_minp] {
        push_real(&mut s, v);
    }
    for &v in &r.p_traits {
        push_real(&mut s, v);
    }
    for v in [r.t_manova, r.t_ssu, r.t_usat] {
        push_real(&mut s, v);
    }
    s.push('\t');
    s.push_str(&r.reason);
    s
}

/// Atomic results writer for `k` traits.
pub struct ResultsWriter {
    out: BufWriter<NamedTempFile>,
    path: PathBuf,
    k: usize,
    rows: usize,
}

impl ResultsWriter {
    pub fn create(path: impl AsRef<Path>, k: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let tmp = NamedTempFile::new_in(&dir).map_err(|e| Error::io(&path, e))?;
        let mut w = ResultsWriter {
            out: BufWriter::with_capacity(1 << 16, tmp),
            path,
            k,
            rows: 0,
        };
        let head = header(k).join("\t");
        writeln!(w.out, "{head}").map_err(|e| Error::io(&w.path, e))?;
        Ok(w)
    }

    pub fn write_row(&mut self, row: &ResultRow) -> Result<()> {
        if row.p_traits.len() != self.k {
            return Err(Error::InvalidInput(format!(
                "row has {} trait p-values, file has {}",
                row.p_traits.len(),
                self.k
            )));
        }
        writeln!(self.out, "{}", format_row(row)).map_err(|e| Error::io(&self.path, e))?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows_written(&self) -> usize {
        self.rows
    }

    /// Flush and move the file into place.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.path;
        let tmp = self.out.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(&path, e))?;
        tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(path)
    }
}

fn parse_real(path: &Path, line: usize, field: &str) -> Result<Option<f64>> {
    if field == "NA" {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::parse(path, line, format!("'{field}' is not a number")))
}

/// Read a results file written by [`ResultsWriter`].
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let fields: Vec<&str> = head.split('\t').collect();
    let k = fields
        .len()
        .checked_sub(FIXED_HEAD.len() + TAIL.len())
        .ok_or_else(|| Error::parse(path, 1, "truncated header"))?;
    if fields != header(k).iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::parse(path, 1, "unexpected results header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != fields.len() {
            return Err(Error::parse(path, lineno, format!("expected {} fields, found {}", fields.len(), f.len())));
        }
        let real = |j: usize| parse_real(path, lineno, f[j]);
        let int_err = || Error::parse(path, lineno, "bad integer");
        let p_traits = (0..k).map(|j| real(11 + j)).collect::<Result<Vec<_>>>()?;
        rows.push(ResultRow {
            snp_id: f[0].to_string(),
            chrom: f[1].to_string(),
            pos: f[2].parse().map_err(|_| int_err())?,
            maf: real(3)?.unwrap_or(f64::NAN),
            n_used: f[4].parse().map_err(|_| int_err())?,
            p_manova: real(5)?,
            p_ssu: real(6)?,
            p_usat: real(7)?,
            usat_omega_star: real(8)?,
            p_fisher: real(9)?,
            p_minp: real(10)?,
            p_traits,
            t_manova: real(11 + k)?,
            t_ssu: real(12 + k)?,
            t_usat: real(13 + k)?,
            reason: f[14 + k].to_string(),
        });
    }
    Ok(rows)
}
