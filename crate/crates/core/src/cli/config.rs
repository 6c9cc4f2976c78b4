//! Flat `key = value` run configuration.
//!
//! Precedence is built-in defaults, then a config file, then command-line
//! flags. Every key is also a flag of the same name (`--base_width 8`).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use super::CliError;
use crate::model::ModelConfig;
use crate::phantom::PhantomSpec;
use crate::scalar::Precision;
use crate::training::{Arm, FinalTarget, TrainConfig};
use crate::triplet::Normalization;

/// `(key, default, help)`. An empty default means "unset" or "derived".
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "seed for phantoms, initialization and sample order"),
    ("size", "64x64", "plane size as HxW"),
    ("count", "64", "number of phantoms to generate"),
    ("n_oar", "5", "organs at risk per phantom"),
    ("ptv_axes_min", "", "smallest PTV semi-axis in pixels (default scales with size)"),
    ("ptv_axes_max", "", "largest PTV semi-axis in pixels"),
    ("oar_axes_min", "", "smallest OAR semi-axis in pixels"),
    ("oar_axes_max", "", "largest OAR semi-axis in pixels"),
    ("falloff_sigma", "", "dose falloff width in pixels"),
    ("noise_std", "0.02", "CT noise standard deviation"),
    ("prescription", "1.0", "dose on the PTV"),
    ("base_width", "8", "channels of the first encoder layer"),
    ("num_enc_layers", "3", "encoder (and decoder) depth"),
    ("num_transformer_layers", "2", "transformer layers in the bottleneck"),
    ("num_heads", "4", "attention heads"),
    ("mlp_ratio", "4.0", "transformer MLP width / embedding width"),
    ("max_groups", "8", "upper bound on GroupNorm groups"),
    ("norm_eps", "1e-5", "normalization epsilon"),
    ("arm", "D", "ablation arm: A, B, C or D"),
    ("omega", "0.01", "weight of the triplet term"),
    ("margin", "0.3", "triplet margin"),
    ("patch_size", "5", "triplet patch size S (odd)"),
    ("normalization", "patch_area", "triplet normalization: patch_area or margin_count"),
    ("final_target", "features", "arm C target: features or prediction"),
    ("lr0", "1e-4", "initial learning rate"),
    ("poly_power", "0.9", "poly schedule power"),
    ("epochs", "1", "training epochs"),
    ("effective_batch", "12", "samples accumulated per update"),
    ("steps", "", "number of updates, overriding epochs"),
    ("precision", "single", "single or double"),
    ("dvh_bins", "256", "DVH bins"),
    ("subset", "test", "samples to predict and evaluate: all, train, val or test"),
    ("ops", "", "comma-separated gradcheck cases (all when empty)"),
    ("gradcheck_samples", "50", "coordinates compared per gradcheck case"),
    ("data", "", "dataset directory"),
    ("pred", "", "prediction directory"),
    ("checkpoint", "", "checkpoint file"),
    ("out", "", "output directory"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    Train,
    Val,
    Test,
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Subset::All),
            "train" => Ok(Subset::Train),
            "val" => Ok(Subset::Val),
            "test" => Ok(Subset::Test),
            _ => Err(format!("unknown subset `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, d, _)| (k, d.to_string())).collect(),
        }
    }
}

fn key_ref(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(k, _, _)| *k)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        let k = key_ref(key).ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
        self.values.insert(k, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    /// Merges a TOML file of top-level scalar keys.
    pub fn merge_toml(&mut self, text: &str) -> Result<(), CliError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for (k, v) in table {
            let s = match v {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Float(f) => toml::Value::Float(f).to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                other => return Err(CliError::Config(format!("key `{k}` must be a scalar, got {other}"))),
            };
            self.set(&k, s)?;
        }
        Ok(())
    }

    /// Every key in declaration order, as TOML.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for &(k, _, _) in KEYS {
            let v = self.get(k);
            let lit = if let Ok(i) = v.parse::<i64>() {
                toml::Value::Integer(i)
            } else if let Some(f) = v.parse::<f64>().ok().filter(|f| f.is_finite()) {
                toml::Value::Float(f)
            } else {
                toml::Value::String(v.to_string())
            };
            out.push_str(&format!("{k} = {lit}\n"));
        }
        out
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| CliError::Config(format!("invalid value `{v}` for `{key}`: {e}")))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        let v = self.get(key);
        if v.is_empty() {
            return Err(CliError::Config(format!("`--{key}` is required")));
        }
        Ok(PathBuf::from(v))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.parse("seed")
    }

    pub fn size(&self) -> Result<(usize, usize), CliError> {
        let v = self.get("size");
        let bad = || CliError::Config(format!("invalid size `{v}`, expected HxW"));
        let (h, w) = v.split_once(['x', 'X']).ok_or_else(bad)?;
        let (h, w) = (h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?);
        if h == 0 || w == 0 {
            return Err(bad());
        }
        Ok((h, w))
    }

    pub fn count(&self) -> Result<usize, CliError> {
        self.parse("count")
    }

    pub fn precision(&self) -> Result<Precision, CliError> {
        self.parse("precision")
    }

    pub fn subset(&self) -> Result<Subset, CliError> {
        self.parse("subset")
    }

    pub fn dvh_bins(&self) -> Result<usize, CliError> {
        self.parse("dvh_bins")
    }

    pub fn arm(&self) -> Result<Arm, CliError> {
        self.parse("arm")
    }

    pub fn ops(&self) -> Vec<String> {
        self.get("ops")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn gradcheck_samples(&self) -> Result<usize, CliError> {
        self.parse("gradcheck_samples")
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec, CliError> {
        let (h, w) = self.size()?;
        let mut spec = PhantomSpec::desk(h, w);
        spec.seed = self.seed()?;
        spec.n_oar = self.parse("n_oar")?;
        spec.noise_std = self.parse("noise_std")?;
        spec.prescription = self.parse("prescription")?;
        if let Some(v) = self.optional("ptv_axes_min")? {
            spec.ptv_axes.0 = v;
        }
        if let Some(v) = self.optional("ptv_axes_max")? {
            spec.ptv_axes.1 = v;
        }
        if let Some(v) = self.optional("oar_axes_min")? {
            spec.oar_axes.0 = v;
        }
        if let Some(v) = self.optional("oar_axes_max")? {
            spec.oar_axes.1 = v;
        }
        if let Some(v) = self.optional("falloff_sigma")? {
            spec.falloff_sigma = v;
        }
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    /// Model for `height x width` inputs with `in_channels` channels, switched by the arm.
    pub fn model_config(&self, height: usize, width: usize, in_channels: usize) -> Result<ModelConfig, CliError> {
        let mut c = ModelConfig::desk(height, width);
        c.in_channels = in_channels;
        c.base_width = self.parse("base_width")?;
        c.num_enc_layers = self.parse("num_enc_layers")?;
        c.num_transformer_layers = self.parse("num_transformer_layers")?;
        c.num_heads = self.parse("num_heads")?;
        c.mlp_ratio = self.parse("mlp_ratio")?;
        c.max_groups = self.parse("max_groups")?;
        c.norm_eps = self.parse("norm_eps")?;
        self.arm()?.configure(&mut c);
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let normalization = match self.get("normalization") {
            "patch_area" => Normalization::PatchArea,
            "margin_count" => Normalization::MarginCount,
            v => return Err(CliError::Config(format!("unknown normalization `{v}`"))),
        };
        let c = TrainConfig {
            omega: self.parse("omega")?,
            margin: self.parse("margin")?,
            patch_size: self.parse("patch_size")?,
            normalization,
            lr0: self.parse("lr0")?,
            poly_power: self.parse("poly_power")?,
            epochs: self.parse("epochs")?,
            effective_batch: self.parse("effective_batch")?,
            max_steps: self.optional("steps")?,
            seed: self.seed()?,
            arm: self.arm()?,
            final_target: self.parse::<FinalTarget>("final_target")?,
        };
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default();
        c.set("arm", "B").unwrap();
        c.set("out", "/tmp/some dir/\"q\"").unwrap();
        c.set("lr0", "0.001").unwrap();
        let mut back = RunConfig::default();
        back.merge_toml(&c.to_toml()).unwrap();
        assert_eq!(back.to_toml(), c.to_toml());
        assert_eq!(back.get("out"), "/tmp/some dir/\"q\"");
        assert_eq!(back.train_config().unwrap(), c.train_config().unwrap());
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("bogus", "1"), Err(CliError::Config(_))));
        assert!(c.merge_toml("learning_rate = 0.1").is_err());
        c.set("size", "64by64").unwrap();
        assert!(c.size().is_err());
        c.set("size", "32x48").unwrap();
        assert_eq!(c.size().unwrap(), (32, 48));
        c.set("arm", "Z").unwrap();
        assert!(c.train_config().is_err());
    }

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::default();
        let t = c.train_config().unwrap();
        assert_eq!((t.omega, t.margin, t.patch_size, t.effective_batch), (0.01, 0.3, 5, 12));
        assert_eq!(t.max_steps, None);
        let m = c.model_config(64, 64, 7).unwrap();
        assert!(m.use_transformer);
        assert_eq!(c.phantom_spec().unwrap(), PhantomSpec::desk(64, 64));
    }
}
