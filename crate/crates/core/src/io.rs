//! Plain-text matrix files and key=value manifests.
//!
//! Matrix format: first line `rows cols`, then one line per row with
//! whitespace-separated entries. Entries are written as `{:.17e}`, which
//! round-trips every `f64` exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, NonzeroLaw};

pub fn write_matrix<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:.17e}", m[(i, j)]));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<DMatrix<f64>> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (ln, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line: ln,
            message: format!("bad header {header:?}: {e}"),
        })?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Parse {
            line: ln,
            message: format!("header must be `rows cols`, got {header:?}"),
        });
    };
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let (ln, line) = lines.next().ok_or(Error::Parse {
            line: ln + i + 1,
            message: format!("expected {rows} rows, found {i}"),
        })?;
        let line = line?;
        let mut count = 0;
        for (j, tok) in line.split_whitespace().enumerate() {
            if j >= cols {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("more than {cols} entries"),
                });
            }
            m[(i, j)] = tok.parse().map_err(|_| Error::Parse {
                line: ln,
                message: format!("bad number {tok:?}"),
            })?;
            count += 1;
        }
        if count != cols {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected {cols} entries, found {count}"),
            });
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse {
            line: ln,
            message: "trailing data after last row".into(),
        });
    }
    Ok(m)
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_matrix(f, m)
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let f = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_matrix(f)
}

/// Ordered `key=value` lines.
pub fn write_manifest(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut body = String::new();
    for (k, v) in entries {
        body.push_str(&format!("{k}={v}\n"));
    }
    fs::write(path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(Error::Parse {
            line: i + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn manifest_entries(cfg: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("d", cfg.d.to_string()),
        ("r", cfg.r.to_string()),
        ("n", cfg.n.to_string()),
        ("s", cfg.s.to_string()),
        ("seed", cfg.seed.to_string()),
        ("nonzero_law", cfg.law.to_string()),
    ]
}

/// Rebuilds a model configuration from a manifest written by [`manifest_entries`].
pub fn config_from_manifest(kv: &BTreeMap<String, String>) -> Result<ModelConfig> {
    fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
        let raw = kv.get(key).ok_or(Error::Parse {
            line: 0,
            message: format!("manifest is missing {key:?}"),
        })?;
        raw.parse().map_err(|_| Error::Parse {
            line: 0,
            message: format!("manifest value {key}={raw:?} is malformed"),
        })
    }
    let law: NonzeroLaw = kv
        .get("nonzero_law")
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(NonzeroLaw::UniformPm12);
    let mut cfg = ModelConfig::new(
        get(kv, "d")?,
        get(kv, "r")?,
        get(kv, "n")?,
        get(kv, "s")?,
        get(kv, "seed")?,
    )
    .with_law(law);
    if let Some(mu1) = kv.get("mu1") {
        cfg.mu1 = mu1.parse().map_err(|_| Error::Parse {
            line: 0,
            message: format!("manifest value mu1={mu1:?} is malformed"),
        })?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_rows() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.5]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("2 3\n"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_matrix(&buf[..]).unwrap(), m);
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "2 2\n1 2\n3\n";
        assert!(matches!(read_matrix(text.as_bytes()), Err(Error::Parse { line: 3, .. })));
        assert!(read_matrix("1 1\n1\n2\n".as_bytes()).is_err());
        assert!(read_matrix("x y\n".as_bytes()).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = ModelConfig::new(10, 20, 30, 2, 99).with_law(NonzeroLaw::Rademacher);
        let text: String = manifest_entries(&cfg)
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        let back = config_from_manifest(&parse_key_values(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    proptest! {
        #[test]
        fn matrix_text_round_trip_is_exact(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let m = DMatrix::from_vec(vals.len(), 1, vals);
            let mut buf = Vec::new();
            write_matrix(&mut buf, &m).unwrap();
            let back = read_matrix(&buf[..]).unwrap();
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
