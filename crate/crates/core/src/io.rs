//! CSV reading and writing.
//!
//! An empty field or the literal `NA` marks a missing cell. The mask is
//! always derived from the file, never stored separately.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::missing_patterns::IncompleteMatrix;

pub const MISSING_TOKEN: &str = "NA";

#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Option<Vec<String>>,
    pub data: IncompleteMatrix,
}

pub fn read_csv_from<R: Read>(reader: R, has_header: bool) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = if has_header {
        Some(rdr.headers()?.iter().map(str::to_owned).collect())
    } else {
        None
    };
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                if field.is_empty() || field == MISSING_TOKEN {
                    Ok(None)
                } else {
                    field.parse::<f64>().map(Some).map_err(|_| {
                        Error::Data(format!(
                            "record {}, column {}: cannot parse {field:?} as a number",
                            line + 1,
                            col + 1
                        ))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("CSV contains no data rows".into()));
    }
    let data = IncompleteMatrix::from_rows(&rows)?;
    Ok(CsvTable { header, data })
}

pub fn read_csv(path: &Path, has_header: bool) -> Result<CsvTable> {
    read_csv_from(File::open(path)?, has_header)
}

fn write_rows<W: Write>(
    writer: W,
    header: Option<&[String]>,
    nrows: usize,
    ncols: usize,
    cell: impl Fn(usize, usize) -> Option<f64>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if let Some(h) = header {
        wtr.write_record(h)?;
    }
    let mut record = Vec::with_capacity(ncols);
    for i in 0..nrows {
        record.clear();
        for j in 0..ncols {
            // f64 Display is the shortest representation that round-trips.
            record.push(cell(i, j).map_or_else(|| MISSING_TOKEN.to_owned(), |v| v.to_string()));
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix_csv<W: Write>(writer: W, header: Option<&[String]>, m: &DMatrix<f64>) -> Result<()> {
    write_rows(writer, header, m.nrows(), m.ncols(), |i, j| Some(m[(i, j)]))
}

pub fn write_incomplete_csv<W: Write>(
    writer: W,
    header: Option<&[String]>,
    m: &IncompleteMatrix,
) -> Result<()> {
    write_rows(writer, header, m.nrows(), m.ncols(), |i, j| m.get(i, j))
}

pub fn save_matrix_csv(path: &Path, header: Option<&[String]>, m: &DMatrix<f64>) -> Result<()> {
    write_matrix_csv(File::create(path)?, header, m)
}

pub fn save_incomplete_csv(path: &Path, header: Option<&[String]>, m: &IncompleteMatrix) -> Result<()> {
    write_incomplete_csv(File::create(path)?, header, m)
}

/// Default column names: `x1..x{p-1}` followed by `y`.
pub fn feature_header(p: usize) -> Vec<String> {
    (1..p)
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("y".to_owned()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_missing_tokens() {
        let text = "a,b,c\n1,,3\nNA,2.5,-1e-3\n";
        let t = read_csv_from(text.as_bytes(), true).unwrap();
        assert_eq!(t.header.unwrap(), vec!["a", "b", "c"]);
        assert_eq!(t.data.get(0, 1), None);
        assert_eq!(t.data.get(1, 0), None);
        assert_eq!(t.data.get(1, 2), Some(-1e-3));
        assert_eq!(t.data.missing_count(), 2);
    }

    #[test]
    fn headerless_input() {
        let t = read_csv_from("1,2\n3,4\n".as_bytes(), false).unwrap();
        assert!(t.header.is_none());
        assert_eq!(t.data.nrows(), 2);
    }

    #[test]
    fn rejects_garbage_and_ragged_rows() {
        assert!(matches!(
            read_csv_from("1,x\n".as_bytes(), false),
            Err(Error::Data(_))
        ));
        assert!(read_csv_from("1,2\n3\n".as_bytes(), false).is_err());
    }

    #[test]
    fn written_values_round_trip_exactly() {
        let m = IncompleteMatrix::from_rows(&[
            vec![Some(0.1 + 0.2), None],
            vec![Some(-1.0 / 3.0), Some(1e300)],
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_incomplete_csv(&mut buf, None, &m).unwrap();
        let back = read_csv_from(buf.as_slice(), false).unwrap().data;
        assert_eq!(back.mask(), m.mask());
        assert_eq!(back.get(0, 0).unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back.get(1, 0).unwrap().to_bits(), (-1.0f64 / 3.0).to_bits());
    }
}
