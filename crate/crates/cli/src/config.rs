use std::fs;
use std::path::{Path, PathBuf};

use jeit::data::CorpusSpec;
use jeit::train::TrainConfig;
use jeit::{Error, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Everything one experiment needs; written as a single TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub corpus_dir: PathBuf,
    pub run_dir: PathBuf,
    pub corpus: CorpusSpec,
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            corpus_dir: PathBuf::from("data"),
            run_dir: PathBuf::from("runs"),
            corpus: CorpusSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Config {
    /// Defaults, overlaid by `path` if given, then by `key=value` overrides.
    /// Keys are dotted paths such as `train.weights.beta`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match Value::try_from(Config::default()) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("config serializes to a table"),
        };
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: Table = toml::from_str(&text).map_err(|e| Error::load(path, e))?;
            merge(&mut table, file);
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.corpus.validate()?;
        config.train.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Default output directory of a training run.
    pub fn run_path(&self) -> PathBuf {
        self.run_dir
            .join(format!("{}-seed{}", self.train.regime.name(), self.train.seed))
    }
}

fn merge(base: &mut Table, over: Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let key = key.trim();
    let unknown = || Error::Config(format!("unknown config key {key:?}"));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        cur = match cur.get_mut(*p) {
            Some(Value::Table(t)) => t,
            _ => return Err(unknown()),
        };
    }
    if !cur.contains_key(*last) {
        return Err(unknown());
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use jeit::train::Regime;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back: Config = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(Config::load(None, &[]).unwrap(), c);
    }

    #[test]
    fn overrides_apply_by_type() {
        let c = Config::load(
            None,
            &[
                "train.regime=paired_only".into(),
                "train.weights.beta = 0.5".into(),
                "corpus.sizes.tail_eval=7".into(),
                "run_dir=out/x".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.regime, Regime::PairedOnly);
        assert_eq!(c.train.weights.beta, 0.5);
        assert_eq!(c.corpus.sizes.tail_eval, 7);
        assert_eq!(c.run_dir, PathBuf::from("out/x"));
        assert_eq!(
            c.run_path(),
            PathBuf::from(format!("out/x/paired_only-seed{}", c.train.seed))
        );
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for o in [
            "train.nope=1",
            "nope.beta=1",
            "train.steps",
            "train.steps=fast",
            "train.learning_rate=-1",
        ] {
            let r = Config::load(None, &[o.to_string()]);
            assert!(matches!(r, Err(Error::Config(_))), "{o}: {r:?}");
        }
    }

    #[test]
    fn partial_file_overlays_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[train]\nsteps = 12\n[corpus.sizes]\nhead_eval = 3\n").unwrap();
        let c = Config::load(Some(&path), &["train.steps=13".into()]).unwrap();
        assert_eq!(c.train.steps, 13);
        assert_eq!(c.corpus.sizes.head_eval, 3);
        assert_eq!(c.corpus.sizes.tail_eval, CorpusSpec::default().sizes.tail_eval);
        fs::write(&path, "[train]\nstepz = 12\n").unwrap();
        assert!(matches!(Config::load(Some(&path), &[]), Err(Error::Config(_))));
    }
}
