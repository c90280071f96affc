//! Configuration files are applied by turning their keys into flags placed
//! ahead of the real command line. Clap then lets the later occurrence win.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context};

const SUBCOMMANDS: [&str; 6] = ["upscale", "train-dict", "train-epitome", "evaluate", "metrics", "bt-rank"];

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn value_to_string(key: &str, v: &toml::Value) -> anyhow::Result<Option<String>> {
    Ok(Some(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(_) => return Ok(None),
        toml::Value::Array(items) => items
            .iter()
            .map(|i| match i {
                toml::Value::String(s) => Ok(s.clone()),
                other => Ok(other.to_string()),
            })
            .collect::<anyhow::Result<Vec<_>>>()?
            .join(","),
        _ => bail!("config key '{key}' has an unsupported value"),
    }))
}

fn table_to_flags(table: &toml::Table, skip_tables: bool) -> anyhow::Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (key, v) in table {
        if v.is_table() {
            if skip_tables {
                continue;
            }
            bail!("nested table '{key}' is not allowed here");
        }
        if key == "config" {
            bail!("a config file cannot name another config file");
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match (v, value_to_string(key, v)?) {
            (toml::Value::Boolean(true), _) => out.push(flag.into()),
            (toml::Value::Boolean(false), _) => {}
            (_, Some(s)) => {
                out.push(flag.into());
                out.push(s.into());
            }
            (_, None) => {}
        }
    }
    Ok(out)
}

/// Splice the flags from `--config FILE`, if any, into `args`.
pub fn expand_args(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let sub_at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()));

    let mut out = vec![args[0].clone()];
    out.extend(table_to_flags(&table, true)?);
    match sub_at {
        Some(i) => {
            out.extend_from_slice(&args[1..=i]);
            let name = args[i].to_string_lossy().into_owned();
            if let Some(v) = table.get(&name) {
                let sub = v
                    .as_table()
                    .with_context(|| format!("config key '{name}' must be a table"))?;
                out.extend(table_to_flags(sub, false)?);
            }
            out.extend_from_slice(&args[i + 1..]);
        }
        None => out.extend_from_slice(&args[1..]),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn file_flags_come_before_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "seed = 4\n[upscale]\nfactor = 2\nshd = true\nlambda = 0.5\n[evaluate]\nmodes = [\"csc\", \"joint\"]\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let got = expand_args(os(&["jsr", "--config", p, "upscale", "--factor", "3"])).unwrap();
        assert_eq!(
            got,
            os(&["jsr", "--seed", "4", "--config", p, "upscale", "--factor", "2", "--lambda", "0.5", "--shd", "--factor", "3"])
        );
        let got = expand_args(os(&["jsr", "evaluate", "--config", p])).unwrap();
        assert_eq!(got, os(&["jsr", "--seed", "4", "evaluate", "--modes", "csc,joint", "--config", p]));
    }

    #[test]
    fn no_config_leaves_args_alone() {
        let a = os(&["jsr", "metrics", "--shave", "2"]);
        assert_eq!(expand_args(a.clone()).unwrap(), a);
    }
}
