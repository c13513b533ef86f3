use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::PersonaId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaSpec {
    pub id: PersonaId,
    /// One-line behavioral description the system prompt is built around.
    pub trait_seed: String,
    pub system_prompt: String,
    /// Documentation only; never sent to a model.
    #[serde(default)]
    pub rating_tendency: String,
}

#[derive(Debug, thiserror::Error)]
pub enum PersonaError {
    #[error("cannot read persona file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse persona file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("persona {0}: system prompt is empty or does not contain its trait seed")]
    Inconsistent(PersonaId),
    #[error("persona {0} defined more than once")]
    Duplicate(PersonaId),
    #[error("persona {0} is missing")]
    Missing(PersonaId),
}

const BUILTIN: [&str; 6] = [
    include_str!("../../personas/expert.json"),
    include_str!("../../personas/critic.json"),
    include_str!("../../personas/bluffer.json"),
    include_str!("../../personas/optimist.json"),
    include_str!("../../personas/harmonizer.json"),
    include_str!("../../personas/skimmer.json"),
];

/// Exactly one spec per persona.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaRegistry {
    specs: BTreeMap<PersonaId, PersonaSpec>,
}

impl PersonaRegistry {
    pub fn builtin() -> Self {
        let specs = BUILTIN
            .iter()
            .map(|s| serde_json::from_str::<PersonaSpec>(s).expect("bundled persona files are valid"))
            .collect();
        Self::from_specs(specs).expect("bundled personas are complete")
    }

    pub fn from_specs(specs: Vec<PersonaSpec>) -> Result<Self, PersonaError> {
        let mut map = BTreeMap::new();
        for spec in specs {
            if spec.system_prompt.trim().is_empty() || !spec.system_prompt.contains(&spec.trait_seed) {
                return Err(PersonaError::Inconsistent(spec.id));
            }
            let id = spec.id;
            if map.insert(id, spec).is_some() {
                return Err(PersonaError::Duplicate(id));
            }
        }
        if let Some(missing) = PersonaId::ALL.into_iter().find(|p| !map.contains_key(p)) {
            return Err(PersonaError::Missing(missing));
        }
        Ok(Self { specs: map })
    }

    /// Loads every `*.json` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PersonaError> {
        let io = |source| PersonaError::Io { path: dir.display().to_string(), source };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut specs = Vec::new();
        for path in paths {
            let text = std::fs::read_to_string(&path)
                .map_err(|source| PersonaError::Io { path: path.display().to_string(), source })?;
            let spec = serde_json::from_str(&text)
                .map_err(|source| PersonaError::Parse { path: path.display().to_string(), source })?;
            specs.push(spec);
        }
        Self::from_specs(specs)
    }

    pub fn get(&self, id: PersonaId) -> &PersonaSpec {
        &self.specs[&id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PersonaSpec> {
        self.specs.values()
    }
}

impl Default for PersonaRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_six_consistent_specs() {
        let reg = PersonaRegistry::builtin();
        assert_eq!(reg.iter().count(), 6);
        for p in PersonaId::ALL {
            let spec = reg.get(p);
            assert!(spec.system_prompt.contains(&spec.trait_seed));
            assert!(!spec.system_prompt.contains("Elo"));
            // persona names must not leak into prompts
            for q in PersonaId::ALL {
                assert!(!spec.system_prompt.contains(q.name()), "{p} mentions {q}");
            }
        }
    }

    #[test]
    fn inconsistent_and_missing_specs_rejected() {
        let mut specs: Vec<_> = PersonaRegistry::builtin().iter().cloned().collect();
        specs[0].system_prompt = "something else".into();
        assert!(matches!(PersonaRegistry::from_specs(specs.clone()), Err(PersonaError::Inconsistent(_))));
        specs.remove(0);
        assert!(matches!(PersonaRegistry::from_specs(specs), Err(PersonaError::Missing(PersonaId::Expert))));
    }

    #[test]
    fn load_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        for spec in PersonaRegistry::builtin().iter() {
            let path = dir.path().join(format!("{}.json", spec.id.name().to_lowercase()));
            std::fs::write(path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
        }
        assert_eq!(PersonaRegistry::load_dir(dir.path()).unwrap(), PersonaRegistry::builtin());
    }
}
