//! Sample-by-column numeric tables (phenotypes, covariates).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;

use crate::covariates::CovariateMatrix;
use crate::error::{Error, Result};
use crate::model::TraitMatrix;

/// Parsed numeric table: sample ids, column names, values in row order.
struct NumericTable {
    sample_ids: Vec<String>,
    columns: Vec<String>,
    values: Vec<f64>,
}

/// Parse a finite number; `NA`, `nan` and infinities are rejected.
pub(crate) fn parse_finite(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn read_table(path: &Path, id_column: &str) -> Result<NumericTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "empty file")),
    };
    let mut head = header.trim_end_matches('\r').split('\t');
    if head.next() != Some(id_column) {
        return Err(Error::parse(path, 1, format!("first header field must be '{id_column}'")));
    }
    let columns: Vec<String> = head.map(str::to_string).collect();
    if columns.is_empty() || columns.iter().any(|c| c.is_empty()) {
        return Err(Error::parse(path, 1, "header needs at least one non-empty column name"));
    }
    let mut sample_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        if id.is_empty() {
            return Err(Error::parse(path, lineno, "empty sample id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(path, lineno, format!("duplicate sample id '{id}'")));
        }
        let mut count = 0;
        for field in fields {
            count += 1;
            if count > columns.len() {
                break;
            }
            match parse_finite(field) {
                Some(v) => values.push(v),
                None => {
                    return Err(Error::parse(
                        path,
                        lineno,
                        format!("column '{}': '{field}' is not a finite number", columns[count - 1]),
                    ))
                }
            }
        }
        if count != columns.len() {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} fields, found {}", columns.len() + 1, count + 1),
            ));
        }
        sample_ids.push(id.to_string());
    }
    if sample_ids.is_empty() {
        return Err(Error::parse(path, 2, "no data rows"));
    }
    Ok(NumericTable {
        sample_ids,
        columns,
        values,
    })
}

impl NumericTable {
    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.sample_ids.len(), self.columns.len(), &self.values)
    }
}

/// Phenotypes with their sample order.
#[derive(Debug, Clone)]
pub struct PhenotypeTable {
    pub sample_ids: Vec<String>,
    /// Centered traits; the original column means are kept in the matrix.
    pub traits: TraitMatrix,
}

/// Read a phenotype file: header `sample_id` then trait names, no missing values.
pub fn parse_phenotypes(path: impl AsRef<Path>) -> Result<PhenotypeTable> {
    let path = path.as_ref();
    let t = read_table(path, "sample_id")?;
    let traits = TraitMatrix::new(t.matrix(), t.columns.clone())?;
    Ok(PhenotypeTable {
        sample_ids: t.sample_ids,
        traits,
    })
}

/// Read a covariate file with the same layout; its sample ids must match
/// `sample_ids` in order.
pub fn parse_covariates(path: impl AsRef<Path>, sample_ids: &[String]) -> Result<CovariateMatrix> {
    let path = path.as_ref();
    let t = read_table(path, "sample_id")?;
    check_sample_order(path, &t.sample_ids, sample_ids)?;
    CovariateMatrix::new(t.matrix(), t.columns.clone())
}

/// Schema check: `found` must equal `expected` element by element.
pub(crate) fn check_sample_order(path: &Path, found: &[String], expected: &[String]) -> Result<()> {
    if found.len() != expected.len() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            msg: format!("{} samples, phenotype file has {}", found.len(), expected.len()),
        });
    }
    if let Some(i) = found.iter().zip(expected).position(|(a, b)| a != b) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            msg: format!(
                "sample {} is '{}', phenotype file has '{}'",
                i + 1,
                found[i],
                expected[i]
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn small_fixture_shape_and_centering() {
        let f = write("sample_id\tldl\thdl\ns1\t1\t4\ns2\t2\t5\ns3\t6\t9\n");
        let p = parse_phenotypes(f.path()).unwrap();
        assert_eq!(p.sample_ids, ["s1", "s2", "s3"]);
        assert_eq!((p.traits.n(), p.traits.k()), (3, 2));
        assert_eq!(p.traits.trait_names(), ["ldl", "hdl"]);
        assert_eq!(p.traits.means(), [3.0, 6.0]);
        assert_eq!(p.traits.column(0), [-2.0, -1.0, 3.0]);
        assert_eq!(p.traits.column(1), [-2.0, -1.0, 3.0]);
    }

    #[test]
    fn crlf_and_trailing_blank_lines() {
        let f = write("sample_id\ta\r\ns1\t1\r\ns2\t3\r\n\n");
        let p = parse_phenotypes(f.path()).unwrap();
        assert_eq!(p.traits.column(0), [-1.0, 1.0]);
    }

    fn parse_err(content: &str) -> (usize, String) {
        let f = write(content);
        match parse_phenotypes(f.path()) {
            Err(Error::Parse { line, msg, .. }) => (line, msg),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_schema_violations() {
        let (line, msg) = parse_err("sample_id\ta\ns1\t1\ns1\t2\n");
        assert_eq!(line, 3);
        assert!(msg.contains("'s1'"), "{msg}");
        assert_eq!(parse_err("sample_id\ta\tb\ns1\t1\t2\ns2\t3\n").0, 3);
        assert_eq!(parse_err("sample_id\ta\ns1\t1\t2\n").0, 2);
        assert_eq!(parse_err("sample_id\ta\ns1\tNA\n").0, 2);
        assert_eq!(parse_err("sample_id\ta\ns1\t1,5\n").0, 2);
        assert_eq!(parse_err("sample_id\ta\ns1\tinf\n").0, 2);
        assert_eq!(parse_err("id\ta\ns1\t1\n").0, 1);
        assert_eq!(parse_err("sample_id\n").0, 1);
        assert_eq!(parse_err("").0, 1);
        assert_eq!(parse_err("sample_id\ta\n").0, 2);
        assert_eq!(parse_err("sample_id\ta\n\t1\n").0, 2);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(parse_phenotypes("/nonexistent/p.tsv"), Err(Error::Io { .. })));
    }

    #[test]
    fn covariates_must_match_sample_order() {
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let f = write("sample_id\tage\tsex\na\t30\t0\nb\t41\t1\nc\t52\t1\nd\t38\t0\n");
        let z = parse_covariates(f.path(), &ids).unwrap();
        assert_eq!((z.n(), z.q()), (4, 2));
        let f = write("sample_id\tage\na\t30\nc\t41\nb\t52\nd\t38\n");
        assert!(matches!(parse_covariates(f.path(), &ids), Err(Error::Schema { .. })));
        let f = write("sample_id\tage\tage2\na\t1\t2\nb\t2\t4\nc\t3\t6\nd\t4\t8\n");
        assert!(matches!(parse_covariates(f.path(), &ids), Err(Error::SingularCovariates(_))));
    }

    #[test]
    fn aric_scale_file_parses_quickly() {
        let mut s = String::from("sample_id\tt1\tt2\tt3\n");
        for i in 0..5816 {
            s.push_str(&format!("id{i}\t{}\t{}\t{}\n", i as f64 * 0.37 % 5.0, (i * 7 % 13) as f64, (i as f64).sqrt()));
        }
        let f = write(&s);
        let t = std::time::Instant::now();
        let p = parse_phenotypes(f.path()).unwrap();
        assert_eq!(p.traits.n(), 5816);
        assert!(t.elapsed().as_secs_f64() < 1.0);
    }
}
