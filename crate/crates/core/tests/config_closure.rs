use std::collections::BTreeSet;
use std::path::Path;

use polmem::harness::{load_config, ScenarioConfig};

fn key_paths(value: &toml::Value, prefix: &str, out: &mut BTreeSet<String>) {
    let toml::Value::Table(table) = value else {
        out.insert(prefix.to_string());
        return;
    };
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(_) => key_paths(v, &path, out),
            toml::Value::Array(items)
                if !items.is_empty() && items.iter().all(|i| i.is_table()) =>
            {
                for item in items {
                    key_paths(item, &format!("{path}[]"), out);
                }
            }
            _ => {
                out.insert(path);
            }
        }
    }
}

fn documented_keys() -> BTreeSet<String> {
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/CONFIG.md"))
        .unwrap();
    let keys = doc
        .split("## Keys")
        .nth(1)
        .unwrap()
        .split("\n## ")
        .next()
        .unwrap();
    keys.lines()
        .filter_map(|l| l.strip_prefix("| `"))
        .filter_map(|l| l.split_once('`').map(|(k, _)| k.to_string()))
        .collect()
}

#[test]
fn every_effective_key_is_documented_and_vice_versa() {
    let text = ScenarioConfig::default().effective().to_toml().unwrap();
    let value: toml::Value = toml::from_str(&text).unwrap();
    let mut rendered = BTreeSet::new();
    key_paths(&value, "", &mut rendered);
    let rendered: BTreeSet<String> = rendered
        .into_iter()
        .map(|k| {
            if k.starts_with("memory.static_gamma.") {
                "memory.static_gamma.<id>".to_string()
            } else {
                k
            }
        })
        .collect();
    let documented = documented_keys();
    let missing: Vec<_> = rendered.difference(&documented).collect();
    let stale: Vec<_> = documented.difference(&rendered).collect();
    assert!(missing.is_empty(), "undocumented keys: {missing:?}");
    assert!(
        stale.is_empty(),
        "documented keys not in the schema: {stale:?}"
    );
}

#[test]
fn default_config_file_matches_builtin_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    assert_eq!(load_config(&path).unwrap(), ScenarioConfig::default());
}

#[test]
fn table1_config_only_sets_static_gamma() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml");
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.memory.static_gamma.len(), 7);
    let mut reset = cfg.clone();
    reset.memory.static_gamma.clear();
    assert_eq!(reset, ScenarioConfig::default());
}
