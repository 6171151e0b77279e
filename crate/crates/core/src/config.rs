//! `key = value` config files with `[section]` headers.
//!
//! ```text
//! # comment
//! [data]
//! dataset = MUTAG
//! [model]
//! backbone = gcn
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::Backbone;
use crate::train::RunConfig;

/// Parsed config: section name to key/value pairs. Keys before the first
/// header land in section `""`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                file: name.to_string(),
                line: i + 1,
                msg,
            };
            if let Some(rest) = line.strip_prefix('[') {
                let head = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header {line:?}")))?;
                section = head.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, found {line:?}")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(err("empty key".into()));
            }
            cfg.set(&section, k, v.trim());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.sections
            .iter()
            .flat_map(|(s, kv)| kv.iter().map(move |(k, v)| (s.as_str(), k.as_str(), v.as_str())))
    }
}

fn parse_value<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for [{section}] {key}")))
}

/// Overlays one config layer onto `cfg`. Unknown keys are rejected.
pub fn apply(cfg: &mut RunConfig, layer: &ConfigFile) -> Result<()> {
    for (section, key, v) in layer.entries() {
        match (section, key) {
            ("data", "dataset") => cfg.dataset = v.to_string(),
            ("model", "backbone") => cfg.backbone = v.parse()?,
            ("model", "anchor_mode") => cfg.anchor_mode = v.parse()?,
            ("model", "layers") => cfg.num_gnn_layers = parse_value(section, key, v)?,
            ("model", "hidden_dim") => cfg.hidden_dim = parse_value(section, key, v)?,
            ("model", "proj_dim") => cfg.proj_dim = parse_value(section, key, v)?,
            ("model", "ffn_hidden") => cfg.ffn_hidden = parse_value(section, key, v)?,
            ("model", "dropout") => cfg.dropout = parse_value(section, key, v)?,
            ("train", "epochs") => cfg.epochs = parse_value(section, key, v)?,
            ("train", "lr") => cfg.lr = parse_value(section, key, v)?,
            ("train", "weight_decay") => cfg.weight_decay = parse_value(section, key, v)?,
            ("train", "batch_size") => cfg.batch_size = parse_value(section, key, v)?,
            ("train", "folds") => cfg.folds = parse_value(section, key, v)?,
            ("train", "seed") => cfg.seed = parse_value(section, key, v)?,
            _ => return Err(Error::Config(format!("unknown config key [{section}] {key}"))),
        }
    }
    Ok(())
}

/// Resolves a run config from layers in increasing precedence.
///
/// The dataset and backbone are looked up first (highest layer wins) because
/// they select the built-in defaults the layers are applied on top of.
pub fn resolve(layers: &[&ConfigFile]) -> Result<RunConfig> {
    let pick = |section: &str, key: &str| layers.iter().rev().find_map(|l| l.get(section, key));
    let dataset = pick("data", "dataset").unwrap_or("MUTAG");
    let backbone: Backbone = pick("model", "backbone").unwrap_or("gcn").parse()?;
    let mut cfg = RunConfig::for_dataset(dataset, backbone);
    for layer in layers {
        apply(&mut cfg, layer)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `cfg` in config-file form; [`resolve`] on the output gives `cfg`
/// back.
pub fn manifest(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[data]\ndataset = {}\n", cfg.dataset);
    let _ = writeln!(
        s,
        "[model]\nbackbone = {}\nanchor_mode = {}\nlayers = {}\nhidden_dim = {}\nproj_dim = {}\nffn_hidden = {}\ndropout = {:?}\n",
        cfg.backbone,
        cfg.anchor_mode,
        cfg.num_gnn_layers,
        cfg.hidden_dim,
        cfg.proj_dim,
        cfg.ffn_hidden,
        cfg.dropout
    );
    let _ = writeln!(
        s,
        "[train]\nepochs = {}\nlr = {:?}\nweight_decay = {:?}\nbatch_size = {}\nfolds = {}\nseed = {}",
        cfg.epochs, cfg.lr, cfg.weight_decay, cfg.batch_size, cfg.folds, cfg.seed
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnchorMode;

    #[test]
    fn parses_sections_and_comments() {
        let c = ConfigFile::parse("top = 1\n# note\n[model]\nbackbone = gin # trailing\n\n[train]\nlr=0.5\n", "t")
            .unwrap();
        assert_eq!(c.get("", "top"), Some("1"));
        assert_eq!(c.get("model", "backbone"), Some("gin"));
        assert_eq!(c.get("train", "lr"), Some("0.5"));
    }

    #[test]
    fn parse_errors_carry_line() {
        match ConfigFile::parse("[model]\nbackbone gin\n", "f.cfg") {
            Err(Error::Parse { line, file, .. }) => assert_eq!((line, file.as_str()), (2, "f.cfg")),
            other => panic!("{other:?}"),
        }
        assert!(ConfigFile::parse("[model\n", "f").is_err());
    }

    #[test]
    fn three_layer_precedence() {
        let file = ConfigFile::parse("[train]\nepochs = 7\nlr = 0.01\n[model]\ndropout = 0.3\n", "f").unwrap();
        let mut flags = ConfigFile::default();
        flags.set("train", "epochs", "9");
        let cfg = resolve(&[&file, &flags]).unwrap();
        assert_eq!(cfg.epochs, 9); // flag beats file
        assert_eq!(cfg.lr, 0.01); // file beats default
        assert_eq!(cfg.dropout, 0.3);
        assert_eq!(cfg.batch_size, 128); // default survives
        assert_eq!(cfg.folds, 10);
    }

    #[test]
    fn dataset_in_any_layer_selects_defaults() {
        let mut file = ConfigFile::default();
        file.set("data", "dataset", "NCI1");
        let cfg = resolve(&[&file]).unwrap();
        assert_eq!(cfg.batch_size, 256);
        let mut flags = ConfigFile::default();
        flags.set("train", "batch_size", "32");
        assert_eq!(resolve(&[&file, &flags]).unwrap().batch_size, 32);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let mut c = ConfigFile::default();
        c.set("train", "epochz", "3");
        assert!(matches!(resolve(&[&c]), Err(Error::Config(_))));
        let mut c = ConfigFile::default();
        c.set("train", "folds", "1");
        assert!(matches!(resolve(&[&c]), Err(Error::Config(_))));
        let mut c = ConfigFile::default();
        c.set("train", "lr", "fast");
        assert!(matches!(resolve(&[&c]), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_round_trips() {
        let mut cfg = RunConfig::for_dataset("PROTEINS", Backbone::Gin);
        cfg.anchor_mode = AnchorMode::Random;
        cfg.lr = 3e-4;
        cfg.seed = 7;
        let text = manifest(&cfg);
        let back = resolve(&[&ConfigFile::parse(&text, "m").unwrap()]).unwrap();
        assert_eq!(back, cfg);
    }
}
