use std::ffi::OsString;
use std::path::Path;

use altmin_core::io::parse_key_values;
use altmin_core::{Error, Result};

const SUBCOMMANDS: [&str; 5] = ["gen", "run", "compare", "sweep", "check"];
const SWITCHES: [&str; 1] = ["timing"];

/// Path given by `--config PATH` or `--config=PATH`, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Turns `key=value` lines into flags.
pub fn config_flags(text: &str) -> Result<Vec<OsString>> {
    let mut flags = Vec::new();
    for (key, value) in parse_key_values(text)? {
        let name = key.replace('_', "-");
        if name == "config" {
            continue;
        }
        if SWITCHES.contains(&name.as_str()) {
            match value.as_str() {
                "true" => flags.push(format!("--{name}").into()),
                "false" => {}
                _ => {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("{key} expects true or false, got {value:?}"),
                    })
                }
            }
        } else {
            flags.push(format!("--{name}").into());
            flags.push(value.into());
        }
    }
    Ok(flags)
}

/// Inserts the config file's flags right after the subcommand so later flags override them.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))?;
    let flags = config_flags(&text)?;
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(args.len(), |i| i + 1);
    let mut out = args[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_from_text() {
        let f = config_flags("# comment\niters = 3\nstop_tol=1e-9\ntiming=true\n").unwrap();
        assert_eq!(f, os(&["--iters", "3", "--stop-tol", "1e-9", "--timing"]));
        assert!(config_flags("timing=maybe").is_err());
    }

    #[test]
    fn finds_path() {
        assert_eq!(config_path(&os(&["altmin", "run", "--config", "c.txt"])), Some("c.txt".into()));
        assert_eq!(config_path(&os(&["altmin", "--config=c.txt", "run"])), Some("c.txt".into()));
        assert_eq!(config_path(&os(&["altmin", "run"])), None);
    }

    #[test]
    fn inserts_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "iters=3\n").unwrap();
        let p = path.to_string_lossy().to_string();
        let out = expand(os(&["altmin", "--config", &p, "run", "--iters", "5"])).unwrap();
        assert_eq!(out, os(&["altmin", "--config", &p, "run", "--iters", "3", "--iters", "5"]));
    }
}
