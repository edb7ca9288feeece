//! Model directory layout:
//!
//! ```text
//! Q_u.mtx     prior precision of the field
//! Q_beta.mtx  prior precision of the fixed effects (diagonal)
//! A_u.mtx     projection of the field onto observations
//! A_beta.csv  covariates, one observation per line
//! y.csv       observations, one per line
//! meta.kv     key=value metadata (v, tau_y, n_s, n_t, ...)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{LatentModel, SlabLayout};
use crate::error::{Error, Result};
use crate::sparse::{read_matrix_market, write_matrix_market, DenseMatrix};

pub const META_VERSION: &str = "1";

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("expected key=value, got '{t}'"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn format_kv(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn read_block(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingBlock { block: name.to_string(), path });
    }
    Ok(fs::read_to_string(path)?)
}

fn parse_csv_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('#') {
            continue;
        }
        if t.is_empty() {
            rows.push(Vec::new());
            continue;
        }
        let row = t
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("bad number '{}'", s.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn load_mtx(dir: &Path, name: &str) -> Result<crate::sparse::SparseMatrix> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingBlock { block: name.to_string(), path });
    }
    read_matrix_market(&path)
}

pub fn load_model(dir: &Path) -> Result<LatentModel> {
    let meta_text = read_block(dir, "meta.kv")?;
    let meta = parse_kv(&meta_text, &dir.join("meta.kv"))?;
    let get = |k: &str| -> Result<Option<&String>> { Ok(meta.get(k)) };
    let num = |k: &str| -> Result<Option<f64>> {
        get(k)?
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    path: dir.join("meta.kv"),
                    line: 0,
                    msg: format!("bad value for '{k}': '{v}'"),
                })
            })
            .transpose()
    };

    let q_u = load_mtx(dir, "Q_u.mtx")?;
    let q_beta = load_mtx(dir, "Q_beta.mtx")?;
    let a_u = load_mtx(dir, "A_u.mtx")?;
    let y_path = dir.join("y.csv");
    let y_rows = parse_csv_rows(&read_block(dir, "y.csv")?, &y_path)?;
    let mut y = Vec::with_capacity(y_rows.len());
    for (i, r) in y_rows.iter().enumerate() {
        if r.len() != 1 {
            return Err(Error::Parse { path: y_path.clone(), line: i + 1, msg: "expected one value per line".into() });
        }
        y.push(r[0]);
    }
    let b_path = dir.join("A_beta.csv");
    let n_beta = q_beta.n_rows();
    let b_rows = if n_beta == 0 { vec![Vec::new(); y.len()] } else { parse_csv_rows(&read_block(dir, "A_beta.csv")?, &b_path)? };
    let mut vals = Vec::with_capacity(b_rows.len() * n_beta);
    for (i, r) in b_rows.iter().enumerate() {
        if r.len() != n_beta {
            return Err(Error::DimensionMismatch(format!(
                "A_beta.csv line {} has {} columns, Q_beta has {n_beta}",
                i + 1,
                r.len()
            )));
        }
        vals.extend_from_slice(r);
    }
    let a_beta = DenseMatrix::from_row_major(b_rows.len(), n_beta, vals)?;
    let tau_y = num("tau_y")?.ok_or_else(|| Error::MissingBlock {
        block: "meta.kv:tau_y".into(),
        path: dir.join("meta.kv"),
    })?;
    let layout = match (num("n_s")?, num("n_t")?) {
        (Some(s), Some(t)) => Some(SlabLayout { n_s: s as usize, n_t: t as usize }),
        _ => None,
    };
    let m = LatentModel { q_u, q_beta, a_u, a_beta, tau_y, y, layout };
    m.validate()?;
    Ok(m)
}

pub fn save_model(model: &LatentModel, dir: &Path, extra_meta: &BTreeMap<String, String>) -> Result<()> {
    model.validate()?;
    fs::create_dir_all(dir)?;
    write_matrix_market(&dir.join("Q_u.mtx"), &model.q_u)?;
    write_matrix_market(&dir.join("Q_beta.mtx"), &model.q_beta)?;
    write_matrix_market(&dir.join("A_u.mtx"), &model.a_u)?;
    let y: String = model.y.iter().map(|v| format!("{v:e}\n")).collect();
    fs::write(dir.join("y.csv"), y)?;
    let b: String = (0..model.a_beta.n_rows())
        .map(|i| {
            let r: Vec<String> = model.a_beta.row(i).iter().map(|v| format!("{v:e}")).collect();
            r.join(",") + "\n"
        })
        .collect();
    fs::write(dir.join("A_beta.csv"), b)?;
    let mut meta = extra_meta.clone();
    meta.insert("v".into(), META_VERSION.into());
    meta.insert("tau_y".into(), format!("{:e}", model.tau_y));
    meta.insert("n".into(), model.n_latent().to_string());
    meta.insert("n_obs".into(), model.n_obs().to_string());
    meta.insert("n_beta".into(), model.n_beta().to_string());
    if let Some(l) = model.layout {
        meta.insert("n_s".into(), l.n_s.to_string());
        meta.insert("n_t".into(), l.n_t.to_string());
    }
    fs::write(dir.join("meta.kv"), format_kv(&meta))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_ar1_precision;
    use crate::sparse::SparseMatrix;

    fn sample_model() -> LatentModel {
        let q = build_ar1_precision(0.7, 6).unwrap();
        let a_u = SparseMatrix::from_triplets(4, 6, &[(0, 0, 1.0), (1, 2, 0.5), (1, 3, 0.5), (2, 4, 1.0), (3, 5, 1.0 / 3.0)])
            .unwrap();
        LatentModel {
            q_u: q,
            q_beta: SparseMatrix::diagonal(&[1e-3, 1e-3]),
            a_u,
            a_beta: DenseMatrix::from_row_major(4, 2, vec![1.0, 0.1, 1.0, -0.3, 1.0, 2.0 / 3.0, 1.0, 1e-17]).unwrap(),
            tau_y: 0.1,
            y: vec![0.1, -2.5, std::f64::consts::PI, 1e300],
            layout: Some(SlabLayout { n_s: 3, n_t: 2 }),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_model();
        save_model(&m, dir.path(), &BTreeMap::new()).unwrap();
        assert_eq!(load_model(dir.path()).unwrap(), m);
    }

    #[test]
    fn missing_block_is_named() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample_model(), dir.path(), &BTreeMap::new()).unwrap();
        fs::remove_file(dir.path().join("A_u.mtx")).unwrap();
        let err = load_model(dir.path()).unwrap_err();
        assert!(err.to_string().contains("A_u.mtx"), "{err}");
    }

    #[test]
    fn inconsistent_dimensions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample_model(), dir.path(), &BTreeMap::new()).unwrap();
        fs::write(dir.path().join("y.csv"), "1\n2\n3\n").unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample_model(), dir.path(), &BTreeMap::new()).unwrap();
        fs::write(dir.path().join("y.csv"), "1\n2\nabc\n4\n").unwrap();
        match load_model(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
