//! Hierarchical TOML configuration with dotted-path overrides.
//!
//! Every section is required when a file is supplied; the built-in default
//! lives in `configs/base.toml` and is compiled into the library.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvSection};
use crate::error::ConfigError;
use crate::eval::EvalSection;
use crate::model::{KinematicChain, ModelConfig};
use crate::ppo::PpoConfig;
use crate::rewards::{CurriculumConfig, RewardConfig};

pub const DEFAULT_CONFIG_TOML: &str = include_str!("../configs/base.toml");
/// Laptop-sized variant of the default: 64 envs, 60 epochs, 64-wide nets.
pub const DESK_CONFIG_TOML: &str = include_str!("../configs/desk.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub env: EnvSection,
    pub reward: RewardConfig,
    pub curriculum: CurriculumConfig,
    pub ppo: PpoConfig,
    pub eval: EvalSection,
}

/// Validated runtime view of a [`Config`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub chain: KinematicChain,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub curriculum: CurriculumConfig,
    pub ppo: PpoConfig,
    pub eval: EvalSection,
}

impl Config {
    pub fn embedded_default() -> Config {
        Self::from_toml_str(DEFAULT_CONFIG_TOML).expect("embedded config parses")
    }

    pub fn desk_preset() -> Config {
        Self::from_toml_str(DESK_CONFIG_TOML).expect("embedded config parses")
    }

    pub fn default_table() -> toml::Table {
        DEFAULT_CONFIG_TOML.parse().expect("embedded config parses")
    }

    pub fn from_toml_str(s: &str) -> Result<Config, ConfigError> {
        let table: toml::Table = s.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            field: "<document>".into(),
            message: e.message().to_string(),
        })?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Config, ConfigError> {
        serde_path_to_error::deserialize(table).map_err(|e| {
            let mut field = e.path().to_string();
            let message = e.inner().message().to_string();
            // serde reports a missing field one level above it.
            if let Some(rest) = message.strip_prefix("missing field `") {
                let name = rest.trim_end_matches('`');
                field = if field == "." || field.is_empty() {
                    name.to_string()
                } else {
                    format!("{field}.{name}")
                };
            }
            ConfigError::Parse { field, message }
        })
    }

    /// Load from a file (or the embedded default) and apply `path=value`
    /// overrides. Returns the typed config and the resolved key-value tree.
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
    ) -> Result<(Config, toml::Table), ConfigError> {
        let mut table = match path {
            None => Self::default_table(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
                    field: "<document>".into(),
                    message: e.message().to_string(),
                })?
            }
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config = Self::from_table(table.clone())?;
        Ok((config, table))
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let chain = self.model.build()?;
        let env = self.env.resolve(&chain)?;
        env.check_reach(&chain)?;
        self.reward.validate()?;
        self.curriculum.validate()?;
        self.ppo.validate()?;
        self.eval.validate()?;
        Ok(Resolved {
            chain,
            env,
            reward: self.reward.clone(),
            curriculum: self.curriculum.clone(),
            ppo: self.ppo.clone(),
            eval: self.eval.clone(),
        })
    }
}

/// Set `a.b.c=value` in a TOML tree. Numeric segments index arrays. The value
/// is parsed as a TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let value = parse_scalar(raw);
    let segments: Vec<&str> = path.split('.').collect();
    let (last, parents) = segments.split_last().expect("non-empty path");

    let mut cursor: &mut toml::Value = {
        let first = parents.first().copied().unwrap_or(last);
        if parents.is_empty() {
            table.insert(first.to_string(), value);
            return Ok(());
        }
        table
            .get_mut(first)
            .ok_or_else(|| ConfigError::invalid(path, format!("unknown section `{first}`")))?
    };
    for seg in &parents[1..] {
        cursor = step_into(cursor, seg).ok_or_else(|| {
            ConfigError::invalid(path, format!("cannot descend into `{seg}`"))
        })?;
    }
    match cursor {
        toml::Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        toml::Value::Array(a) => {
            let idx: usize = last
                .parse()
                .map_err(|_| ConfigError::invalid(path, "array segment must be an index"))?;
            let slot = a
                .get_mut(idx)
                .ok_or_else(|| ConfigError::invalid(path, "array index out of range"))?;
            *slot = value;
        }
        _ => return Err(ConfigError::invalid(path, "parent is not a table or array")),
    }
    Ok(())
}

fn step_into<'a>(v: &'a mut toml::Value, seg: &str) -> Option<&'a mut toml::Value> {
    match v {
        toml::Value::Table(t) => t.get_mut(seg),
        toml::Value::Array(a) => seg.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
        _ => None,
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::Arrangement;

    #[test]
    fn embedded_default_round_trips() {
        let c = Config::embedded_default();
        let again = Config::from_table(c.to_table()).unwrap();
        assert_eq!(c, again);
        c.resolve().unwrap();
    }

    #[test]
    fn override_sets_enum_and_numbers() {
        let (c, table) = Config::load(
            None,
            &[
                "curriculum.arrangement=FLAT".to_string(),
                "env.dt=0.02".to_string(),
                "model.joints.0.min=-60".to_string(),
                "ppo.hidden_sizes=[16, 16]".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(c.curriculum.arrangement, Arrangement::Flat);
        assert_eq!(c.env.dt, 0.02);
        assert_eq!(c.model.joints[0].min, -60.0);
        assert_eq!(c.ppo.hidden_sizes, vec![16, 16]);
        assert_eq!(table["env"]["dt"].as_float(), Some(0.02));
    }

    #[test]
    fn missing_field_names_its_path() {
        let mut table = Config::default_table();
        table["env"].as_table_mut().unwrap().remove("dt");
        let err = Config::from_table(table).unwrap_err();
        assert_eq!(err.field(), Some("env.dt"));
    }

    #[test]
    fn invalid_value_reports_field() {
        let (c, _) = Config::load(None, &["env.dt=-1.0".to_string()]).unwrap();
        let err = c.resolve().unwrap_err();
        assert_eq!(err.field(), Some("env.dt"));
    }

    #[test]
    fn malformed_override_rejected() {
        let mut t = Config::default_table();
        assert!(apply_override(&mut t, "no_equals").is_err());
        assert!(apply_override(&mut t, "nosuch.section=1").is_err());
    }
}
