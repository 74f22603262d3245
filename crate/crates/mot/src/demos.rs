//! Few-shot chain-of-thought demonstration sets.

use std::path::Path;

use mot_core::Demonstration;

use crate::error::{Error, Result};

const SETS: [(&str, &str); 8] = [
    ("aqua", include_str!("../demos/aqua.json")),
    ("drop", include_str!("../demos/drop.json")),
    ("anli", include_str!("../demos/anli.json")),
    ("comv", include_str!("../demos/comv.json")),
    ("obqa", include_str!("../demos/obqa.json")),
    ("boolq", include_str!("../demos/boolq.json")),
    ("factck", include_str!("../demos/factck.json")),
    ("wikiqa", include_str!("../demos/wikiqa.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    SETS.iter().map(|(name, _)| *name)
}

pub fn builtin(name: &str) -> Option<Vec<Demonstration>> {
    let (_, text) = SETS.iter().find(|(n, _)| *n == name)?;
    Some(serde_json::from_str(text).expect("bundled demonstrations are valid"))
}

/// A built-in set name, or a path to a JSON array of demonstrations.
pub fn resolve(name_or_path: &str) -> Result<Vec<Demonstration>> {
    if let Some(demos) = builtin(name_or_path) {
        return Ok(demos);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::Config(format!(
            "unknown demonstration set {name_or_path:?}; built-in sets are {}",
            builtin_names().collect::<Vec<_>>().join(", ")
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let demos: Vec<Demonstration> =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if demos.is_empty() {
        return Err(Error::Config(format!("{} holds no demonstrations", path.display())));
    }
    Ok(demos)
}
