//! Tabular inputs: training data and prediction queries.

use std::path::Path;

use nalgebra::DMatrix;

use crate::bayes::Dataset;
use crate::kernels::Inputs;
use crate::{Error, Result};

/// Column roles recognized in a header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    X(usize),
    W(usize),
    S(usize),
    Z,
    Tau2,
}

#[derive(Debug, Default)]
struct Layout {
    x: Vec<usize>,
    w: Vec<usize>,
    s: Vec<usize>,
    z: Option<usize>,
    tau2: Option<usize>,
}

fn role(name: &str) -> Option<Role> {
    let indexed = |prefix: &str| -> Option<usize> {
        let rest = name.strip_prefix(prefix)?;
        if rest.is_empty() || rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        rest.parse().ok()
    };
    match name {
        "z" => Some(Role::Z),
        "tau2" => Some(Role::Tau2),
        _ => indexed("x")
            .map(Role::X)
            .or_else(|| indexed("w").map(Role::W))
            .or_else(|| indexed("s").map(Role::S)),
    }
}

/// Maps header names to column positions; numbered families must run 1..k
/// without gaps.
fn layout(headers: &csv::StringRecord, allow_z: bool) -> Result<Layout> {
    let mut found: Vec<(Role, usize)> = Vec::new();
    for (pos, raw) in headers.iter().enumerate() {
        let name = raw.trim();
        // Queries may carry their outcomes along (as the simulated test files do).
        if !allow_z && (name == "y" || name == "z") {
            continue;
        }
        let r = role(name)
            .filter(|r| allow_z || !matches!(r, Role::Z | Role::Tau2))
            .ok_or_else(|| Error::Data(format!("unexpected column '{name}'")))?;
        if found.iter().any(|(o, _)| *o == r) {
            return Err(Error::Data(format!("duplicate column '{name}'")));
        }
        found.push((r, pos));
    }
    let family = |f: fn(Role) -> Option<usize>, prefix: &str| -> Result<Vec<usize>> {
        let mut cols: Vec<(usize, usize)> = found.iter().filter_map(|&(r, p)| f(r).map(|k| (k, p))).collect();
        cols.sort_unstable();
        for (i, (k, _)) in cols.iter().enumerate() {
            if *k != i + 1 {
                return Err(Error::Data(format!("column {prefix}{} is missing", i + 1)));
            }
        }
        Ok(cols.into_iter().map(|(_, p)| p).collect())
    };
    let l = Layout {
        x: family(|r| if let Role::X(k) = r { Some(k) } else { None }, "x")?,
        w: family(|r| if let Role::W(k) = r { Some(k) } else { None }, "w")?,
        s: family(|r| if let Role::S(k) = r { Some(k) } else { None }, "s")?,
        z: found.iter().find(|(r, _)| *r == Role::Z).map(|&(_, p)| p),
        tau2: found.iter().find(|(r, _)| *r == Role::Tau2).map(|&(_, p)| p),
    };
    Ok(l)
}

fn missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan")
}

fn number(record: &csv::StringRecord, pos: usize, row: usize, name: &str) -> Result<f64> {
    let field = record.get(pos).unwrap_or("").trim();
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Data(format!("row {row}: column {name} has non-numeric value '{field}'"))),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

struct Rows {
    coords: Vec<f64>,
    design: Vec<f64>,
    basis: Vec<f64>,
    z: Vec<f64>,
    tau2: Vec<f64>,
    n: usize,
}

fn read_rows(path: &Path, allow_z: bool) -> Result<(Layout, Rows)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let l = layout(&headers, allow_z)?;
    let mut rows = Rows {
        coords: Vec::new(),
        design: Vec::new(),
        basis: Vec::new(),
        z: Vec::new(),
        tau2: Vec::new(),
        n: 0,
    };
    let mut dropped = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if let Some(pz) = l.z {
            let field = rec.get(pz).unwrap_or("");
            if missing(field) {
                dropped += 1;
                continue;
            }
            rows.z.push(number(&rec, pz, row, "z")?);
        }
        for (k, &p) in l.x.iter().enumerate() {
            rows.coords.push(number(&rec, p, row, &format!("x{}", k + 1))?);
        }
        for (k, &p) in l.w.iter().enumerate() {
            rows.design.push(number(&rec, p, row, &format!("w{}", k + 1))?);
        }
        for (k, &p) in l.s.iter().enumerate() {
            rows.basis.push(number(&rec, p, row, &format!("s{}", k + 1))?);
        }
        if let Some(pt) = l.tau2 {
            rows.tau2.push(number(&rec, pt, row, "tau2")?);
        }
        rows.n += 1;
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} rows with missing z", path.display());
    }
    Ok((l, rows))
}

fn build_inputs(l: &Layout, rows: &Rows) -> Result<Inputs> {
    let inputs = Inputs::new(l.x.len(), rows.coords.clone())?;
    if l.s.is_empty() {
        Ok(inputs)
    } else {
        inputs.with_basis(l.s.len(), rows.basis.clone())
    }
}

fn design(l: &Layout, rows: &Rows) -> DMatrix<f64> {
    if l.w.is_empty() {
        DMatrix::from_element(rows.n, 1, 1.0)
    } else {
        DMatrix::from_row_slice(rows.n, l.w.len(), &rows.design)
    }
}

/// Reads a training file: `x1..xd`, `z`, optional `w1..wp` (an intercept
/// when absent), optional `tau2` and optional basis columns `s1..sm`.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let (l, rows) = read_rows(path, true)?;
    if l.x.is_empty() {
        return Err(Error::Data(format!("{}: no coordinate columns x1..xd", path.display())));
    }
    if l.z.is_none() {
        return Err(Error::Data(format!("{}: no observation column z", path.display())));
    }
    if rows.n == 0 {
        return Err(Error::Data(format!("{}: no observations", path.display())));
    }
    let data = Dataset::new(build_inputs(&l, &rows)?, rows.z.clone(), design(&l, &rows))?;
    if l.tau2.is_some() {
        data.with_noise(rows.tau2)
    } else {
        Ok(data)
    }
}

/// Query points with their design rows. An empty file (no header) gives an
/// empty query in the dimension of `data`.
pub fn read_query(path: &Path, data: &Dataset) -> Result<(Inputs, DMatrix<f64>)> {
    let empty = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len() == 0;
    if empty {
        let inputs = Inputs::new(data.dim(), Vec::new())?;
        let inputs = if data.inputs.basis_dim() > 0 {
            inputs.with_basis(data.inputs.basis_dim(), Vec::new())?
        } else {
            inputs
        };
        return Ok((inputs, DMatrix::zeros(0, data.design_cols())));
    }
    let (l, rows) = read_rows(path, false)?;
    if l.x.len() != data.dim() {
        return Err(Error::Data(format!(
            "{}: query has {} coordinate columns, training data has {}",
            path.display(),
            l.x.len(),
            data.dim()
        )));
    }
    if l.s.len() != data.inputs.basis_dim() {
        return Err(Error::Data(format!(
            "{}: query has {} basis columns, training data has {}",
            path.display(),
            l.s.len(),
            data.inputs.basis_dim()
        )));
    }
    let w = design(&l, &rows);
    if w.ncols() != data.design_cols() {
        return Err(Error::Data(format!(
            "{}: query design has {} columns, training design has {}",
            path.display(),
            w.ncols(),
            data.design_cols()
        )));
    }
    Ok((build_inputs(&l, &rows)?, w))
}

/// Coordinates only, for kernel export: `x1..xd` and optional `s1..sm`.
pub fn read_inputs(path: &Path) -> Result<Inputs> {
    let (l, rows) = read_rows(path, false)?;
    if !l.w.is_empty() {
        return Err(Error::Data(format!("{}: design columns are not used here", path.display())));
    }
    if l.x.is_empty() {
        return Err(Error::Data(format!("{}: no coordinate columns x1..xd", path.display())));
    }
    build_inputs(&l, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_columns_in_any_order() {
        let f = file("z,x2,x1,w1\n1.0,0.5,0.1,1\nNA,0,0,1\n2.0,0.25,0.3,1\n");
        let d = read_dataset(f.path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.inputs.row(1), &[0.3, 0.25]);
        assert_eq!(d.z, vec![1.0, 2.0]);
    }

    #[test]
    fn intercept_when_no_design() {
        let f = file("x1,z\n0.0,1\n1.0,2\n");
        let d = read_dataset(f.path()).unwrap();
        assert_eq!(d.design_cols(), 1);
        assert!(d.noise.is_none());
    }

    #[test]
    fn bad_value_names_row() {
        let f = file("x1,z\n0.0,1\n1.0,abc\n");
        let e = read_dataset(f.path()).unwrap_err();
        assert!(matches!(&e, Error::Data(m) if m.contains("row 2")), "{e}");
    }

    #[test]
    fn header_errors() {
        for text in ["x1,x3,z\n0,0,1\n", "x1,y\n0,1\n", "x1,x1,z\n0,0,1\n", "x01,z\n0,1\n", "z\n1\n"] {
            assert!(matches!(read_dataset(file(text).path()), Err(Error::Data(_))), "{text}");
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(read_dataset(file("x1,z\n0,1,2\n").path()), Err(Error::Data(_))));
    }

    #[test]
    fn noise_and_basis_columns() {
        let f = file("x1,z,tau2,s1\n0,1,0.1,0.5\n1,2,0.2,0.7\n");
        let d = read_dataset(f.path()).unwrap();
        assert_eq!(d.noise.as_deref(), Some(&[0.1, 0.2][..]));
        assert_eq!(d.inputs.basis_row(1), &[0.7]);
    }

    #[test]
    fn empty_query() {
        let d = read_dataset(file("x1,z\n0,1\n").path()).unwrap();
        let (q, w) = read_query(file("").path(), &d).unwrap();
        assert_eq!((q.len(), q.dim(), w.ncols()), (0, 1, 1));
        let (q, _) = read_query(file("x1\n").path(), &d).unwrap();
        assert_eq!(q.len(), 0);
        assert!(read_query(file("x1,x2\n0,0\n").path(), &d).is_err());
        let (q, _) = read_query(file("x1,y\n0.5,3\n").path(), &d).unwrap();
        assert_eq!(q.row(0), &[0.5]);
        assert!(read_query(file("x1,tau2\n0,0\n").path(), &d).is_err());
    }
}
