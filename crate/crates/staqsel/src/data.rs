//! Tabular input: CSV parsing, missing-value policy, typed column access.
//!
//! Cells are kept as trimmed strings until a caller asks for a typed view,
//! so numeric and categorical columns can coexist in one file. A cell is
//! missing when it is empty or reads "NA"/"NaN" (case-insensitive); rows
//! with a missing value in any column a model actually uses are dropped
//! before fitting, with the count reported.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Dataset {
    names: Vec<String>,
    /// Column-major cells; every column has the same length.
    cols: Vec<Vec<String>>,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

impl Dataset {
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(file)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> =
            rdr.headers().map_err(|e| Error::Data(format!("bad header row: {e}")))?
                .iter()
                .map(str::to_string)
                .collect();
        if names.is_empty() {
            return Err(Error::Data("CSV has no columns".to_string()));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::Data(format!("column {} has an empty name", i + 1)));
            }
            if names[..i].contains(n) {
                return Err(Error::Data(format!("duplicate column name '{n}'")));
            }
        }
        let mut cols: Vec<Vec<String>> = vec![Vec::new(); names.len()];
        for (row_idx, record) in rdr.records().enumerate() {
            let record = record
                .map_err(|e| Error::Data(format!("row {}: {e}", row_idx + 2)))?;
            if record.len() != names.len() {
                return Err(Error::Data(format!(
                    "row {} has {} fields, expected {}",
                    row_idx + 2,
                    record.len(),
                    names.len()
                )));
            }
            for (c, cell) in record.iter().enumerate() {
                cols[c].push(cell.to_string());
            }
        }
        Ok(Dataset { names, cols })
    }

    pub fn n_rows(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    fn col_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in data")))
    }

    /// Parse a column as finite floating-point values.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.col_index(name)?;
        self.cols[idx]
            .iter()
            .enumerate()
            .map(|(r, cell)| {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!("column '{name}', row {}: '{cell}' is not numeric", r + 2))
                })?;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "column '{name}', row {}: non-finite value",
                        r + 2
                    )));
                }
                Ok(v)
            })
            .collect()
    }

    pub fn string_column(&self, name: &str) -> Result<&[String]> {
        Ok(&self.cols[self.col_index(name)?])
    }

    /// Drop every row with a missing cell in any of the named columns;
    /// returns how many rows were removed.
    pub fn retain_complete_rows(&mut self, used: &[String]) -> Result<usize> {
        let idxs: Vec<usize> =
            used.iter().map(|n| self.col_index(n)).collect::<Result<_>>()?;
        let n = self.n_rows();
        let keep: Vec<bool> = (0..n)
            .map(|r| idxs.iter().all(|&c| !is_missing(&self.cols[c][r])))
            .collect();
        let dropped = keep.iter().filter(|&&k| !k).count();
        if dropped > 0 {
            for col in &mut self.cols {
                let mut r = 0;
                col.retain(|_| {
                    let k = keep[r];
                    r += 1;
                    k
                });
            }
        }
        Ok(dropped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let csv = "y,x1,site\n1.5,0.2,north\n2.5,NA,south\n3.5,0.8,\n4.5,0.9,north\n";
        Dataset::from_reader(csv.as_bytes()).unwrap()
    }

    #[test]
    fn parses_shape_and_names() {
        let d = sample();
        assert_eq!(d.n_rows(), 4);
        assert_eq!(d.column_names(), &["y", "x1", "site"]);
        assert!(d.has_column("site") && !d.has_column("absent"));
    }

    #[test]
    fn numeric_parsing_and_errors() {
        let d = sample();
        assert_eq!(d.numeric_column("y").unwrap(), vec![1.5, 2.5, 3.5, 4.5]);
        let err = d.numeric_column("site").unwrap_err().to_string();
        assert!(err.contains("site") && err.contains("north"), "{err}");
        assert!(d.numeric_column("nope").is_err());
    }

    #[test]
    fn missing_rows_dropped_only_for_used_columns() {
        let mut d = sample();
        let dropped = d.retain_complete_rows(&["y".into(), "x1".into()]).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(d.n_rows(), 3);

        let mut d = sample();
        let dropped =
            d.retain_complete_rows(&["y".into(), "x1".into(), "site".into()]).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(d.numeric_column("y").unwrap(), vec![1.5, 4.5]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Dataset::from_reader("a,b\n1,2,3\n".as_bytes()).is_err());
        assert!(Dataset::from_reader("a,a\n1,2\n".as_bytes()).is_err());
        let empty_name = Dataset::from_reader("a,\n1,2\n".as_bytes());
        assert!(empty_name.is_err());
    }

    #[test]
    fn non_finite_numerics_rejected() {
        let d = Dataset::from_reader("v\ninf\n".as_bytes()).unwrap();
        assert!(d.numeric_column("v").is_err());
    }
}
