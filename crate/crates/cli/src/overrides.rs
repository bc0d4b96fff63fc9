//! `--set key=value` overrides applied to a resolved scenario.

use toml::{Table, Value};

use crate::error::CliError;

/// Sections searched, in order, for a key given without a dotted path.
const SHORTHAND_SECTIONS: [&str; 2] = ["scenario", "controller"];

/// Every settable path in `table`, in document order. Arrays of tables are
/// indexed (`merging.0.init_arc_m`); other arrays are single values.
pub fn leaf_paths(table: &Table) -> Vec<String> {
    let mut out = Vec::new();
    collect(table, "", &mut out);
    out
}

fn collect(table: &Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => collect(t, &path, out),
            Value::Array(items) if !items.is_empty() && items.iter().all(Value::is_table) => {
                for (i, item) in items.iter().enumerate() {
                    collect(item.as_table().unwrap(), &format!("{path}.{i}"), out);
                }
            }
            _ => out.push(path),
        }
    }
}

fn slot<'a>(table: &'a mut Table, path: &str) -> Option<&'a mut Value> {
    let mut parts = path.split('.');
    let mut cur = table.get_mut(parts.next()?)?;
    for p in parts {
        cur = match cur {
            Value::Table(t) => t.get_mut(p)?,
            Value::Array(a) => a.get_mut(p.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    match cur {
        Value::Table(_) => None,
        Value::Array(a) if a.iter().all(Value::is_table) && !a.is_empty() => None,
        leaf => Some(leaf),
    }
}

fn resolve(table: &Table, key: &str) -> Option<String> {
    let paths = leaf_paths(table);
    if paths.iter().any(|p| p == key) {
        return Some(key.to_string());
    }
    if key.contains('.') {
        return None;
    }
    SHORTHAND_SECTIONS
        .iter()
        .map(|s| format!("{s}.{key}"))
        .find(|p| paths.contains(p))
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn coerce(old: &Value, new: Value) -> Option<Value> {
    match (old, new) {
        (Value::Float(_), Value::Integer(i)) => Some(Value::Float(i as f64)),
        (o, n) if o.type_str() == n.type_str() => Some(n),
        _ => None,
    }
}

/// Applies `key=value` assignments in order.
pub fn apply(table: &mut Table, assignments: &[String]) -> Result<(), CliError> {
    for a in assignments {
        let (key, raw) = a
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{a}` is not of the form key=value")))?;
        let key = key.trim();
        let Some(path) = resolve(table, key) else {
            return Err(CliError::Config(format!(
                "unknown override key `{key}`; valid keys:\n  {}",
                leaf_paths(table).join("\n  ")
            )));
        };
        let target = slot(table, &path).expect("resolved path exists");
        let value = parse_value(raw.trim());
        let found = value.type_str();
        *target = coerce(target, value).ok_or_else(|| {
            CliError::Config(format!("override `{path}` expects a {}, got a {found}", target.type_str()))
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        toml::from_str(
            "[scenario]\nseed = 1\ndt_s = 0.1\n[controller]\nalpha_nominal = 1.0\n\
             [[merging]]\ninit_arc_m = 3.0\n[validity]\nalpha_nominal = [0.1, 1.0]\n",
        )
        .unwrap()
    }

    #[test]
    fn shorthand_and_dotted_paths() {
        let mut t = table();
        apply(&mut t, &["alpha_nominal=15".into(), "merging.0.init_arc_m=4.5".into(), "seed=9".into()]).unwrap();
        assert_eq!(t["controller"]["alpha_nominal"].as_float(), Some(15.0));
        assert_eq!(t["merging"][0]["init_arc_m"].as_float(), Some(4.5));
        assert_eq!(t["scenario"]["seed"].as_integer(), Some(9));
        assert_eq!(t["validity"]["alpha_nominal"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = apply(&mut table(), &["bogus=1".into()]).unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("controller.alpha_nominal"), "{err}");
    }

    #[test]
    fn type_mismatch_is_rejected() {
        assert!(apply(&mut table(), &["seed=fast".into()]).is_err());
        assert!(apply(&mut table(), &["no_equals".into()]).is_err());
    }
}
