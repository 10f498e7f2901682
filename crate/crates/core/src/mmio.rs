//! Matrix Market reading and writing (real/integer/pattern, general/symmetric/skew-symmetric).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmFormat {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// A Matrix Market matrix in triplet form (0-based indices, duplicates kept).
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Triplets {
            nrows: m.nrows(),
            ncols: m.ncols(),
            entries,
        }
    }
}

fn mm_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::MatrixMarket(format!("line {line}: {msg}"))
}

/// Read a Matrix Market file in either format.
pub fn read_triplets(path: impl AsRef<Path>) -> Result<Triplets> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    parse_triplets(reader)
}

pub fn parse_triplets(reader: impl BufRead) -> Result<Triplets> {
    let mut lines = reader.lines().enumerate();

    let (lineno, header) = lines
        .next()
        .ok_or_else(|| Error::MatrixMarket("empty file".into()))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(mm_err(lineno + 1, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => MmFormat::Coordinate,
        "array" => MmFormat::Array,
        other => return Err(mm_err(lineno + 1, format!("unknown format '{other}'"))),
    };
    let pattern = match tokens[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if format == MmFormat::Coordinate => true,
        other => return Err(mm_err(lineno + 1, format!("unsupported field '{other}'"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(mm_err(lineno + 1, format!("unsupported symmetry '{other}'"))),
    };

    let mut data = lines.filter_map(|(no, l)| match l {
        Ok(s) => {
            let t = s.trim();
            (!t.is_empty() && !t.starts_with('%')).then(|| Ok((no + 1, t.to_string())))
        }
        Err(e) => Some(Err(e)),
    });

    let (sno, size) = data
        .next()
        .transpose()?
        .ok_or_else(|| Error::MatrixMarket("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| mm_err(sno, format!("bad size '{t}': {e}"))))
        .collect::<Result<_>>()?;

    let parse_f = |no: usize, t: &str| -> Result<f64> {
        t.parse::<f64>().map_err(|e| mm_err(no, format!("bad value '{t}': {e}")))
    };

    let mut entries = Vec::new();
    let (nrows, ncols) = match format {
        MmFormat::Coordinate => {
            if dims.len() != 3 {
                return Err(mm_err(sno, "coordinate size line needs 'rows cols nnz'"));
            }
            let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
            for _ in 0..nnz {
                let (no, line) = data
                    .next()
                    .transpose()?
                    .ok_or_else(|| Error::MatrixMarket("fewer entries than declared".into()))?;
                let mut it = line.split_whitespace();
                let mut idx = |name: &str, max: usize| -> Result<usize> {
                    let t = it.next().ok_or_else(|| mm_err(no, format!("missing {name}")))?;
                    let v: usize = t.parse().map_err(|e| mm_err(no, format!("bad {name} '{t}': {e}")))?;
                    if v == 0 || v > max {
                        return Err(mm_err(no, format!("{name} {v} out of range 1..={max}")));
                    }
                    Ok(v - 1)
                };
                let i = idx("row", nrows)?;
                let j = idx("column", ncols)?;
                let v = if pattern {
                    1.0
                } else {
                    let t = it.next().ok_or_else(|| mm_err(no, "missing value"))?;
                    parse_f(no, t)?
                };
                entries.push((i, j, v));
                if i != j {
                    match symmetry {
                        Symmetry::General => {}
                        Symmetry::Symmetric => entries.push((j, i, v)),
                        Symmetry::SkewSymmetric => entries.push((j, i, -v)),
                    }
                }
            }
            (nrows, ncols)
        }
        MmFormat::Array => {
            if dims.len() != 2 {
                return Err(mm_err(sno, "array size line needs 'rows cols'"));
            }
            let (nrows, ncols) = (dims[0], dims[1]);
            if symmetry != Symmetry::General && nrows != ncols {
                return Err(mm_err(sno, "symmetric array must be square"));
            }
            let mut values = data.flat_map(|r| match r {
                Ok((no, line)) => line
                    .split_whitespace()
                    .map(|t| parse_f(no, t))
                    .collect::<Vec<_>>(),
                Err(e) => vec![Err(Error::from(e))],
            });
            let mut next = || -> Result<f64> {
                values
                    .next()
                    .unwrap_or_else(|| Err(Error::MatrixMarket("fewer values than declared".into())))
            };
            for j in 0..ncols {
                let start = match symmetry {
                    Symmetry::General => 0,
                    Symmetry::Symmetric => j,
                    Symmetry::SkewSymmetric => j + 1,
                };
                for i in start..nrows {
                    let v = next()?;
                    if v != 0.0 {
                        entries.push((i, j, v));
                        match symmetry {
                            Symmetry::Symmetric if i != j => entries.push((j, i, v)),
                            Symmetry::SkewSymmetric => entries.push((j, i, -v)),
                            _ => {}
                        }
                    }
                }
            }
            (nrows, ncols)
        }
    };
    Ok(Triplets { nrows, ncols, entries })
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    Ok(read_triplets(path)?.to_dense())
}

/// Write a dense matrix in `array real general` format.
pub fn write_dense(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(w, "{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Write triplets in `coordinate real general` format.
pub fn write_triplets(path: impl AsRef<Path>, t: &Triplets) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", t.nrows, t.ncols, t.entries.len())?;
    for &(i, j, v) in &t.entries {
        writeln!(w, "{} {} {v:e}", i + 1, j + 1)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn parse_coordinate_symmetric() {
        let src = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n3 3 3\n1 1 2.0\n2 1 -1\n3 3 4e0\n";
        let t = parse_triplets(src.as_bytes()).unwrap();
        assert_eq!(t.to_dense(), dmatrix![2.0, -1.0, 0.0; -1.0, 0.0, 0.0; 0.0, 0.0, 4.0]);
    }

    #[test]
    fn parse_array_column_major() {
        let src = "%%MatrixMarket matrix array real general\n2 2\n1\n3\n2\n4\n";
        assert_eq!(parse_triplets(src.as_bytes()).unwrap().to_dense(), dmatrix![1.0, 2.0; 3.0, 4.0]);
    }

    #[test]
    fn parse_skew_array() {
        let src = "%%MatrixMarket matrix array real skew-symmetric\n2 2\n5\n";
        assert_eq!(parse_triplets(src.as_bytes()).unwrap().to_dense(), dmatrix![0.0, -5.0; 5.0, 0.0]);
    }

    #[test]
    fn rejects_bad_headers_and_indices() {
        assert!(parse_triplets("%%MatrixMarket vector array real general\n".as_bytes()).is_err());
        assert!(parse_triplets("%%MatrixMarket matrix coordinate complex general\n1 1 0\n".as_bytes()).is_err());
        assert!(parse_triplets("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n".as_bytes()).is_err());
        assert!(parse_triplets("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn roundtrip_files() {
        let dir = std::env::temp_dir().join(format!("triccati-mmio-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let m = dmatrix![1.5, 0.0, -2.25; 0.0, 1e-300, 7.0];
        write_dense(dir.join("a.mtx"), &m).unwrap();
        assert_eq!(read_dense(dir.join("a.mtx")).unwrap(), m);
        write_triplets(dir.join("c.mtx"), &Triplets::from_dense(&m)).unwrap();
        assert_eq!(read_dense(dir.join("c.mtx")).unwrap(), m);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
