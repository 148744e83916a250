//! Matrix Market coordinate exchange. Both triangles are written under the
//! `general` symmetry qualifier so readers need no expansion step.

use std::io::{BufRead, Write};

use super::SparseSymmetricMatrix;
use crate::{Error, Result};

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Writes the matrix with 1-based indices and round-trip exact values.
pub fn write_matrix_market<W: Write>(a: &SparseSymmetricMatrix, out: W) -> std::io::Result<()> {
    write_matrix_market_annotated(a, &[], out)
}

/// As [`write_matrix_market`], with `%` comment lines after the banner.
pub fn write_matrix_market_annotated<W: Write>(
    a: &SparseSymmetricMatrix,
    comments: &[String],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for c in comments {
        writeln!(out, "% {c}")?;
    }
    writeln!(out, "{} {} {}", a.dim(), a.dim(), a.nnz())?;
    for i in 0..a.dim() {
        for (&j, &v) in a.row_cols(i).iter().zip(a.row_values(i)) {
            writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

pub fn read_matrix_market<R: BufRead>(input: R) -> Result<SparseSymmetricMatrix> {
    let err = |m: String| Error::MatrixMarket(m);
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| err("empty input".into()))?
        .map_err(|e| err(e.to_string()))?;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5
        || tokens[0] != "%%matrixmarket"
        || tokens[1] != "matrix"
        || tokens[2] != "coordinate"
        || tokens[3] != "real"
    {
        return Err(err(format!("unsupported header `{header}`")));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize)> = None;
    let mut triplets = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        if size.is_none() {
            if f.len() != 3 {
                return Err(err(format!("bad size line `{t}`")));
            }
            let p = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s}: {e}")));
            let (r, c, nnz) = (p(f[0])?, p(f[1])?, p(f[2])?);
            if r != c {
                return Err(err(format!("matrix is {r}x{c}, expected square")));
            }
            size = Some((r, nnz));
            triplets.reserve(nnz);
            continue;
        }
        if f.len() != 3 {
            return Err(err(format!("line {}: expected `i j value`", lineno + 2)));
        }
        let i: usize = f[0].parse().map_err(|e| err(format!("line {}: {e}", lineno + 2)))?;
        let j: usize = f[1].parse().map_err(|e| err(format!("line {}: {e}", lineno + 2)))?;
        let v: f64 = f[2].parse().map_err(|e| err(format!("line {}: {e}", lineno + 2)))?;
        if i == 0 || j == 0 {
            return Err(err(format!("line {}: indices are 1-based", lineno + 2)));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    let (n, nnz) = size.ok_or_else(|| err("missing size line".into()))?;
    let stored = if symmetric {
        triplets.iter().filter(|t| t.0 <= t.1).count()
    } else {
        triplets.len()
    };
    if stored != nnz {
        return Err(err(format!("header promises {nnz} entries, found {stored}")));
    }
    SparseSymmetricMatrix::from_triplets(n, triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_exact() {
        let d = [
            1.0 / 3.0,
            1e-300,
            0.0,
            1e-300,
            std::f64::consts::PI,
            -2.5e17,
            0.0,
            -2.5e17,
            7.0,
        ];
        let a = SparseSymmetricMatrix::from_dense(3, &d).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        let back = read_matrix_market(buf.as_slice()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn reads_symmetric_storage() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 2\n1 1 2.0\n2 1 0.5\n";
        let a = read_matrix_market(text.as_bytes()).unwrap();
        assert_eq!(a.get(0, 1), 0.5);
        assert_eq!(a.get(1, 0), 0.5);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn rejects_bad_header() {
        let text = "%%MatrixMarket matrix array real general\n1 1\n1.0\n";
        assert!(read_matrix_market(text.as_bytes()).is_err());
    }
}
