//! Configuration loading with `section.key=value` overrides from the command
//! line.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sasc_core::sessions::LabConfig;
use toml::{Table, Value};

/// Defaults, then the TOML file, then each override in order.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<LabConfig> {
    let base = match path {
        Some(p) => LabConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => LabConfig::default(),
    };
    if overrides.is_empty() {
        return Ok(base);
    }
    let mut tree: Table = toml::from_str(&base.to_toml()?)?;
    for item in overrides {
        apply(&mut tree, item).with_context(|| format!("override `{item}`"))?;
    }
    let text = toml::to_string(&tree)?;
    Ok(LabConfig::from_toml(&text)?)
}

fn parse_value(raw: &str) -> Value {
    // Anything that is not a TOML literal is taken as a bare string.
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply(tree: &mut Table, item: &str) -> Result<()> {
    let (path, raw) = item.split_once('=').ok_or_else(|| anyhow!("expected key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = tree;
    for key in parents {
        table = match table.get_mut(*key) {
            Some(Value::Table(t)) => t,
            _ => bail!("unknown section `{key}`"),
        };
    }
    let mut value = parse_value(raw.trim());
    match (table.get(*last), &value) {
        (None, _) => bail!("unknown key `{last}`"),
        (Some(Value::Float(_)), Value::Integer(i)) => value = Value::Float(*i as f64),
        _ => {}
    }
    table.insert(last.to_string(), value);
    Ok(())
}
