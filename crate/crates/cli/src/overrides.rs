//! Loading configs and applying `path=value` overrides to them.
//!
//! Overrides act on the fully resolved TOML form of a config, so only fields
//! that exist (including defaulted ones) can be set.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use taskalloc::SimConfig;
use toml::{Table, Value};

pub fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        bail!("config not found: {}", path.display());
    }
    fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = read_file(path)?;
    SimConfig::from_toml_str(&text).map_err(|e| anyhow!("invalid config {}: {e}", path.display()))
}

/// Parses `value` as a TOML value, treating anything unparsable as a bare string.
pub fn parse_value(value: &str) -> Value {
    let doc = format!("v = {value}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(value.to_string())),
        Err(_) => Value::String(value.to_string()),
    }
}

/// Splits `path=value`.
pub fn split_override(spec: &str) -> Result<(&str, Value)> {
    let (path, value) =
        spec.split_once('=').ok_or_else(|| anyhow!("override `{spec}` is not of the form path=value"))?;
    let path = path.trim();
    if path.is_empty() {
        bail!("override `{spec}` has an empty path");
    }
    Ok((path, parse_value(value.trim())))
}

/// Sets the dotted `path` in `table`. Every component must already exist
/// unless `allow_new` is set, which lets the last component be added.
pub fn set_path(table: &mut Table, path: &str, value: Value, allow_new: bool) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let cur = parent_mut(table, &parts, parents.len())?;
    if !allow_new && !cur.contains_key(*last) {
        bail!("unknown config field `{path}`");
    }
    if *last == "kind" && cur.get("kind") != Some(&value) {
        // Fields belong to the old variant; the new one's are set afterwards.
        cur.clear();
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parent_mut<'a>(table: &'a mut Table, parts: &[&str], depth: usize) -> Result<&'a mut Table> {
    let mut cur = table;
    for i in 0..depth {
        cur = match cur.get_mut(parts[i]) {
            Some(Value::Table(t)) => t,
            Some(_) => bail!("config field `{}` is not a table", parts[..=i].join(".")),
            None => bail!("unknown config field `{}`", parts[..=i].join(".")),
        };
    }
    Ok(cur)
}

/// Applies overrides to `config` in order, re-parsing the result so that bad
/// values are reported against the field they set. Overriding a `kind`
/// resets its table, so the new variant's fields must follow it.
pub fn apply(config: &SimConfig, overrides: &[(String, Value)]) -> Result<SimConfig> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut table: Table = Table::try_from(config).context("cannot serialize config")?;
    let mut reset: Vec<&str> = Vec::new();
    for (path, value) in overrides {
        let parent = path.rsplit_once('.').map_or("", |(p, _)| p);
        set_path(&mut table, path, value.clone(), reset.contains(&parent))?;
        if path.ends_with("kind") {
            reset.push(parent);
        }
        // `k` follows `demands` unless set explicitly.
        if path == "demands" && !overrides.iter().any(|(p, _)| p == "k") {
            if let Value::Array(a) = value {
                table.insert("k".into(), Value::Integer(a.len() as i64));
            }
        }
    }
    let text = toml::to_string(&table).context("cannot serialize config")?;
    SimConfig::from_toml_str(&text).map_err(|e| {
        let paths: Vec<&str> = overrides.iter().map(|(p, _)| p.as_str()).collect();
        anyhow!("override of {} gives an invalid config: {e}", paths.join(", "))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use taskalloc::{AlgorithmSpec, NoiseSpec};

    fn base() -> SimConfig {
        SimConfig::new(100, vec![10, 20], NoiseSpec::Sigmoid { lambda: 1.0, common_random: false }, AlgorithmSpec::Ant)
    }

    #[test]
    fn values_parse_as_toml() {
        assert_eq!(parse_value("0.2"), Value::Float(0.2));
        assert_eq!(parse_value("7"), Value::Integer(7));
        assert_eq!(parse_value("trivial-sync"), Value::String("trivial-sync".into()));
        assert_eq!(parse_value("[1, 2]"), Value::Array(vec![Value::Integer(1), Value::Integer(2)]));
    }

    #[test]
    fn nested_and_top_level() {
        let o = vec![
            ("gamma".to_string(), parse_value("0.2")),
            ("noise.lambda".to_string(), parse_value("2.5")),
            ("demands".to_string(), parse_value("[5, 6, 7]")),
        ];
        let c = apply(&base(), &o).unwrap();
        assert_eq!(c.gamma, 0.2);
        assert_eq!(c.noise, NoiseSpec::Sigmoid { lambda: 2.5, common_random: false });
        assert_eq!(c.k, 3);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = apply(&base(), &[("gamma_typo".into(), parse_value("1"))]).unwrap_err();
        assert!(e.to_string().contains("unknown config field `gamma_typo`"), "{e}");
        let e = apply(&base(), &[("noise.x.y".into(), parse_value("1"))]).unwrap_err();
        assert!(e.to_string().contains("noise.x"), "{e}");
        let e = apply(&base(), &[("gamma".into(), parse_value("fast"))]).unwrap_err();
        assert!(e.to_string().contains("gamma"), "{e}");
    }

    #[test]
    fn switching_kind() {
        let o = vec![("noise.kind".to_string(), parse_value("noise-free"))];
        assert_eq!(apply(&base(), &o).unwrap().noise, NoiseSpec::NoiseFree);
        let o = vec![
            ("noise.kind".to_string(), parse_value("adversarial")),
            ("noise.gamma_ad".to_string(), parse_value("0.1")),
            ("noise.adversary".to_string(), parse_value(r#"{ kind = "per-ant-alternating" }"#)),
        ];
        let c = apply(&base(), &o).unwrap();
        assert_eq!(
            c.noise,
            NoiseSpec::Adversarial { gamma_ad: 0.1, adversary: taskalloc::AdversaryStrategy::PerAntAlternating }
        );
        // Without the kind change the new field is foreign.
        assert!(apply(&base(), &o[1..]).is_err());
    }
}
