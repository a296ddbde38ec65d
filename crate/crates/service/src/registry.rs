//! Named datasets the service may train on.
//!
//! The registry file is a JSON array of dataset references, each with an
//! extra `name`. Relative paths are taken relative to the registry file.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use fairforge::harness::DatasetRef;
use fairforge::{class_distribution, ClassDistribution, Group};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub sha256: String,
    pub groups: BTreeMap<Group, usize>,
    pub class_distribution: ClassDistribution,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub entry: String,
    pub message: String,
}

struct Entry {
    name: String,
    dataset: DatasetRef,
    summary: Mutex<Option<Result<DatasetSummary, String>>>,
}

#[derive(Default)]
pub struct Registry {
    entries: Vec<Arc<Entry>>,
    /// Problems found while reading the file.
    pub diagnostics: Vec<Diagnostic>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// Reads a registry file. A file that cannot be read or is not a JSON
    /// array yields an empty registry; entries that fail to parse are skipped.
    /// Either way the reason ends up in `diagnostics`.
    pub fn load(path: &Path) -> Self {
        let mut reg = Registry::empty();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                reg.diag(path.display().to_string(), e.to_string());
                return reg;
            }
        };
        let items: Vec<serde_json::Value> = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => {
                reg.diag(path.display().to_string(), format!("malformed registry: {e}"));
                return reg;
            }
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for (i, item) in items.into_iter().enumerate() {
            match parse_entry(item) {
                Ok((name, mut dataset)) => {
                    if reg.entries.iter().any(|e| e.name == name) {
                        reg.diag(name, "duplicate name".into());
                        continue;
                    }
                    dataset.resolve_paths(base);
                    reg.entries.push(Arc::new(Entry {
                        name,
                        dataset,
                        summary: Mutex::new(None),
                    }));
                }
                Err(msg) => reg.diag(format!("#{i}"), msg),
            }
        }
        reg
    }

    fn diag(&mut self, entry: String, message: String) {
        log::warn!("dataset registry: {entry}: {message}");
        self.diagnostics.push(Diagnostic { entry, message });
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&DatasetRef> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.dataset)
    }

    /// Summaries of every entry, loading each dataset once. Entries whose
    /// data fails to load are reported as diagnostics instead.
    pub fn summaries(&self) -> (Vec<DatasetSummary>, Vec<Diagnostic>) {
        let mut ok = Vec::new();
        let mut bad = Vec::new();
        for e in &self.entries {
            let mut slot = e.summary.lock().expect("registry lock");
            let res = slot.get_or_insert_with(|| summarize(&e.name, &e.dataset));
            match res {
                Ok(s) => ok.push(s.clone()),
                Err(m) => bad.push(Diagnostic {
                    entry: e.name.clone(),
                    message: m.clone(),
                }),
            }
        }
        (ok, bad)
    }
}

fn parse_entry(item: serde_json::Value) -> Result<(String, DatasetRef), String> {
    let serde_json::Value::Object(mut map) = item else {
        return Err("entry is not an object".into());
    };
    let name = match map.remove("name") {
        Some(serde_json::Value::String(s)) if !s.is_empty() => s,
        _ => return Err("missing or empty `name`".into()),
    };
    let dataset: DatasetRef = serde_path_to_error::deserialize(serde_json::Value::Object(map))
        .map_err(|e| format!("{name}: {}: {}", e.path(), e.inner()))?;
    Ok((name, dataset))
}

fn summarize(name: &str, dataset: &DatasetRef) -> Result<DatasetSummary, String> {
    let ds = dataset.load().map_err(|e| e.to_string())?;
    let identity = fairforge::harness::DatasetIdentity::of(&ds);
    let mut groups = BTreeMap::new();
    for g in &ds.group {
        *groups.entry(*g).or_insert(0) += 1;
    }
    Ok(DatasetSummary {
        name: name.to_string(),
        n: ds.len(),
        d: ds.n_features(),
        sha256: identity.sha256,
        groups,
        class_distribution: class_distribution(&ds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_file_gives_empty_registry() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("registry.json");
        std::fs::write(&p, "{ not json").unwrap();
        let r = Registry::load(&p);
        assert!(r.names().is_empty());
        assert_eq!(r.diagnostics.len(), 1);
    }

    #[test]
    fn bad_entries_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("registry.json");
        std::fs::write(
            &p,
            r#"[{"name": "a", "csv": "a.csv", "schema": "a.schema.json"},
                {"csv": "b.csv", "schema": "b.json"},
                {"name": "c", "csv": "c.csv", "schema": "c.json", "bogus": 1},
                {"name": "a", "csv": "x.csv", "schema": "x.json"}]"#,
        )
        .unwrap();
        let r = Registry::load(&p);
        assert_eq!(r.names(), vec!["a"]);
        assert_eq!(r.diagnostics.len(), 3);
        assert_eq!(r.get("a").unwrap().csv, dir.path().join("a.csv"));
    }
}
