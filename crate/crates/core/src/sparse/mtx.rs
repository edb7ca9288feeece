//! MatrixMarket coordinate format (`real`/`integer`/`pattern`,
//! `general`/`symmetric`).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::SparseMatrix;
use crate::error::{Error, Result};

pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text, path)
}

pub fn parse_matrix_market(text: &str, path: &Path) -> Result<SparseMatrix> {
    let err = |line: usize, msg: &str| Error::Parse { path: path.to_path_buf(), line, msg: msg.to_string() };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(err(1, "expected '%%MatrixMarket matrix coordinate <field> <symmetry>'"));
    }
    let pattern = match h[3].as_str() {
        "real" | "double" | "integer" => false,
        "pattern" => true,
        other => return Err(err(1, &format!("unsupported field '{other}'"))),
    };
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(1, &format!("unsupported symmetry '{other}'"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if f.len() != 3 {
                    return Err(err(lineno, "size line must be 'rows cols nnz'"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| err(lineno, &format!("bad integer '{s}'")));
                size = Some((p(f[0])?, p(f[1])?, p(f[2])?));
                trip.reserve(p(f[2])? * if symmetric { 2 } else { 1 });
            }
            Some((nr, nc, _)) => {
                let want = if pattern { 2 } else { 3 };
                if f.len() < want {
                    return Err(err(lineno, "entry line must be 'row col value'"));
                }
                let i: usize = f[0].parse().map_err(|_| err(lineno, &format!("bad row index '{}'", f[0])))?;
                let j: usize = f[1].parse().map_err(|_| err(lineno, &format!("bad column index '{}'", f[1])))?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(err(lineno, &format!("entry ({i}, {j}) outside {nr}x{nc}")));
                }
                let v: f64 = if pattern {
                    1.0
                } else {
                    f[2].parse().map_err(|_| err(lineno, &format!("bad value '{}'", f[2])))?
                };
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| err(1, "missing size line"))?;
    let stored = if symmetric { trip.iter().filter(|t| t.0 >= t.1).count() } else { trip.len() };
    if stored != nnz {
        return Err(err(1, &format!("header declares {nnz} entries, found {stored}")));
    }
    SparseMatrix::from_triplets(nr, nc, &trip)
}

/// Writes a matrix with 17 significant digits. Symmetric matrices store the
/// lower triangle under the `symmetric` qualifier.
pub fn write_matrix_market(path: &Path, m: &SparseMatrix) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    out.write_all(format_matrix_market(m).as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn format_matrix_market(m: &SparseMatrix) -> String {
    let symmetric = m.is_symmetric();
    let entries: Vec<_> = m.triplets().filter(|&(i, j, _)| !symmetric || i >= j).collect();
    let mut s = String::with_capacity(entries.len() * 40 + 64);
    s.push_str(&format!(
        "%%MatrixMarket matrix coordinate real {}\n",
        if symmetric { "symmetric" } else { "general" }
    ));
    s.push_str(&format!("{} {} {}\n", m.n_rows(), m.n_cols(), entries.len()));
    for (i, j, v) in entries {
        s.push_str(&format!("{} {} {:.16e}\n", i + 1, j + 1, v));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_symmetric_lower_triangle() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n3 3 4\n1 1 2\n2 1 -1\n2 2 2\n3 3 1.5\n";
        let m = parse_matrix_market(text, Path::new("x.mtx")).unwrap();
        assert_eq!(m.get(0, 1), -1.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert!(m.is_symmetric());
    }

    #[test]
    fn reports_line_numbers() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 2\n";
        match parse_matrix_market(text, Path::new("bad.mtx")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 2\n";
        assert!(matches!(parse_matrix_market(text, Path::new("bad.mtx")), Err(Error::Parse { line: 3, .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(entries in proptest::collection::vec((0usize..6, 0usize..5, -1e6f64..1e6), 0..30)) {
            let m = SparseMatrix::from_triplets(6, 5, &entries).unwrap();
            let back = parse_matrix_market(&format_matrix_market(&m), Path::new("p.mtx")).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn symmetric_round_trip_is_exact(vals in proptest::collection::vec(-10.0f64..10.0, 10)) {
            let mut t = Vec::new();
            let mut k = 0;
            for i in 0..4 {
                for j in 0..=i {
                    t.push((i, j, vals[k]));
                    if i != j { t.push((j, i, vals[k])); }
                    k += 1;
                }
            }
            let m = SparseMatrix::from_triplets(4, 4, &t).unwrap();
            let back = parse_matrix_market(&format_matrix_market(&m), Path::new("p.mtx")).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
