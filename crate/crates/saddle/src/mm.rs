//! Matrix Market coordinate files.
//!
//! Values are written with `{:e}`, which prints the shortest representation
//! that parses back to the same `f64`, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use saddle_core::sparse::CsrMatrix;

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    /// Only the lower triangle is stored.
    Symmetric,
}

impl Symmetry {
    fn keyword(self) -> &'static str {
        match self {
            Symmetry::General => "general",
            Symmetry::Symmetric => "symmetric",
        }
    }

    /// `Symmetric` when the matrix is bitwise symmetric.
    pub fn detect(m: &CsrMatrix) -> Self {
        if m.is_symmetric_exact() {
            Symmetry::Symmetric
        } else {
            Symmetry::General
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixMarket {
    pub matrix: CsrMatrix,
    pub symmetry: Symmetry,
}

pub fn write_to<W: Write>(
    mut w: W,
    m: &CsrMatrix,
    symmetry: Symmetry,
    comment: &str,
) -> std::io::Result<()> {
    let entries: Vec<(usize, usize, f64)> = match symmetry {
        Symmetry::General => m.iter().collect(),
        Symmetry::Symmetric => m.iter().filter(|(r, c, _)| r >= c).collect(),
    };
    writeln!(
        w,
        "%%MatrixMarket matrix coordinate real {}",
        symmetry.keyword()
    )?;
    for line in comment.lines() {
        writeln!(w, "% {line}")?;
    }
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), entries.len())?;
    let mut buf = String::new();
    for (r, c, v) in entries {
        buf.clear();
        let _ = write!(buf, "{} {} {v:e}", r + 1, c + 1);
        writeln!(w, "{buf}")?;
    }
    w.flush()
}

/// Writes `m`; `Symmetric` requires bitwise symmetry.
pub fn write_matrix_market(
    path: &Path,
    m: &CsrMatrix,
    symmetry: Symmetry,
    comment: &str,
) -> Result<()> {
    if symmetry == Symmetry::Symmetric && !m.is_symmetric_exact() {
        return Err(Error::Config(format!(
            "{}: matrix is not symmetric, cannot use the symmetric format",
            path.display()
        )));
    }
    let file = File::create(path).map_err(io_err(path))?;
    write_to(BufWriter::new(file), m, symmetry, comment).map_err(io_err(path))
}

pub fn read_matrix_market(path: &Path) -> Result<MatrixMarket> {
    let file = File::open(path).map_err(io_err(path))?;
    read_from(BufReader::new(file), path)
}

/// Parses real or integer coordinate data, general or symmetric.
pub fn read_from<R: BufRead>(reader: R, path: &Path) -> Result<MatrixMarket> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let header = header.map_err(io_err(path))?;
    let words: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(
            1,
            format!("not a Matrix Market header: '{header}'"),
        ));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format '{}'", words[2])));
    }
    if words[3] != "real" && words[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field '{}'", words[3])));
    }
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(io_err(path))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                let [r, c, n] = fields[..] else {
                    return Err(parse_err(lineno, format!("bad size line '{t}'")));
                };
                let num = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|e| parse_err(lineno, format!("'{s}': {e}")))
                };
                let (r, c, n) = (num(r)?, num(c)?, num(n)?);
                if symmetry == Symmetry::Symmetric && r != c {
                    return Err(parse_err(lineno, format!("symmetric matrix is {r}x{c}")));
                }
                triplets.reserve(if symmetry == Symmetry::Symmetric {
                    2 * n
                } else {
                    n
                });
                size = Some((r, c, n));
            }
            Some((nr, nc, _)) => {
                let [r, c, v] = fields[..] else {
                    return Err(parse_err(lineno, format!("bad entry '{t}'")));
                };
                let index = |s: &str, max: usize| match s.parse::<usize>() {
                    Ok(k) if k >= 1 && k <= max => Ok(k - 1),
                    _ => Err(parse_err(lineno, format!("index '{s}' outside 1..={max}"))),
                };
                let (r, c) = (index(r, nr)?, index(c, nc)?);
                let v: f64 = v
                    .parse()
                    .map_err(|e| parse_err(lineno, format!("'{v}': {e}")))?;
                if symmetry == Symmetry::Symmetric {
                    if c > r {
                        return Err(parse_err(
                            lineno,
                            "upper-triangle entry in symmetric file".into(),
                        ));
                    }
                    if r != c {
                        triplets.push((c, r, v));
                    }
                }
                triplets.push((r, c, v));
            }
        }
    }
    let (nr, nc, n) = size.ok_or_else(|| parse_err(1, "missing size line".into()))?;
    let stored = match symmetry {
        Symmetry::General => triplets.len(),
        Symmetry::Symmetric => triplets.iter().filter(|(r, c, _)| r >= c).count(),
    };
    if stored != n {
        return Err(parse_err(
            1,
            format!("header announces {n} entries, found {stored}"),
        ));
    }
    Ok(MatrixMarket {
        matrix: CsrMatrix::from_triplets(nr, nc, triplets)?,
        symmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(m: &CsrMatrix, s: Symmetry) -> MatrixMarket {
        let mut buf = Vec::new();
        write_to(&mut buf, m, s, "test").unwrap();
        read_from(&buf[..], Path::new("mem")).unwrap()
    }

    #[test]
    fn symmetric_roundtrip_is_exact() {
        let m = CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 0, 0.1 + 0.2),
                (0, 2, -1.0 / 3.0),
                (2, 0, -1.0 / 3.0),
                (1, 1, 1e-300),
                (2, 2, f64::MAX),
            ],
        )
        .unwrap();
        let back = roundtrip(&m, Symmetry::Symmetric);
        assert_eq!(back.symmetry, Symmetry::Symmetric);
        assert_eq!(back.matrix, m);
    }

    #[test]
    fn general_keeps_explicit_zeros() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 1, 0.0), (1, 2, 2.5)]).unwrap();
        assert_eq!(roundtrip(&m, Symmetry::General).matrix, m);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            "%%MatrixMarket matrix array real general\n1 1\n1\n",
            "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n",
            "hello\n",
        ];
        for text in bad {
            assert!(
                read_from(text.as_bytes(), Path::new("mem")).is_err(),
                "{text}"
            );
        }
    }

    #[test]
    fn reads_integer_and_comments() {
        let text =
            "%%MatrixMarket matrix coordinate integer general\n% c\n\n2 2 2\n1 1 3\n2 1 -4\n";
        let m = read_from(text.as_bytes(), Path::new("mem")).unwrap().matrix;
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), -4.0);
    }
}
