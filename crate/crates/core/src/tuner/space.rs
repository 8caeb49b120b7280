use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    /// Bounds are base-10 exponents.
    Log10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Int,
    Real,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub scale: Scale,
    #[serde(rename = "type")]
    pub kind: ParamType,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
}

impl ParamValue {
    pub fn as_f64(&self) -> f64 {
        match *self {
            ParamValue::Bool(b) => f64::from(u8::from(b)),
            ParamValue::Int(i) => i as f64,
            ParamValue::Real(v) => v,
        }
    }
}

/// A sampled assignment, keyed by hyper-parameter name.
pub type Config = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let space = SearchSpace { params };
        space.validate()?;
        Ok(space)
    }

    /// Ranges used for the booster by default.
    pub fn default_boosting() -> Self {
        use ParamType::*;
        use Scale::*;
        let p = |name: &str, min: f64, max: f64, scale, kind| ParamSpec {
            name: name.to_string(),
            min,
            max,
            scale,
            kind,
        };
        SearchSpace {
            params: vec![
                p("num_round", 10.0, 1000.0, Linear, Int),
                p("min_max_depth", 1.0, 19.0, Linear, Int),
                p("max_max_depth", 1.0, 19.0, Linear, Int),
                p("learning_rate", -2.5, -1.0, Log10, Real),
                p("subsample", 0.5, 1.0, Linear, Real),
                p("colsample", 0.5, 1.0, Linear, Real),
                p("lambda_l2", -2.0, -2.0, Log10, Real),
                p("tree_probability", 0.9, 1.0, Linear, Real),
                p("fit_intercept", 0.0, 1.0, Linear, Bool),
                p("alpha", -6.0, -3.0, Log10, Real),
                p("gamma", -3.0, 3.0, Log10, Real),
                p("n_components", 1.0, 100.0, Linear, Int),
                p("hist_nbins", 256.0, 256.0, Linear, Int),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for p in &self.params {
            if !names.insert(p.name.as_str()) {
                return Err(Error::InvalidParam(format!(
                    "duplicate search-space entry {:?}",
                    p.name
                )));
            }
            if !p.min.is_finite() || !p.max.is_finite() || p.min > p.max {
                return Err(Error::InvalidParam(format!(
                    "search-space entry {:?}: need finite min <= max, got [{}, {}]",
                    p.name, p.min, p.max
                )));
            }
            if p.kind == ParamType::Bool && (p.scale != Scale::Linear || p.min < 0.0 || p.max > 1.0)
            {
                return Err(Error::InvalidParam(format!(
                    "search-space entry {:?}: booleans use a linear [0, 1] range",
                    p.name
                )));
            }
            if p.kind == ParamType::Int && p.scale == Scale::Linear && p.min.ceil() > p.max.floor()
            {
                return Err(Error::InvalidParam(format!(
                    "search-space entry {:?}: no integer in [{}, {}]",
                    p.name, p.min, p.max
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let space: SearchSpace =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Malformed(e.to_string()))
    }
}

fn pow10(e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < 300.0 {
        10f64.powi(e as i32)
    } else {
        10f64.powf(e)
    }
}

fn sample_one(spec: &ParamSpec, rng: &mut crate::rng::Rng) -> ParamValue {
    let uniform = |rng: &mut crate::rng::Rng, lo: f64, hi: f64| {
        if lo == hi {
            lo
        } else {
            lo + (hi - lo) * rng.random::<f64>()
        }
    };
    match (spec.kind, spec.scale) {
        (ParamType::Bool, _) => {
            if spec.min == spec.max {
                ParamValue::Bool(spec.min >= 0.5)
            } else {
                ParamValue::Bool(rng.random_bool(0.5))
            }
        }
        (ParamType::Real, Scale::Linear) => ParamValue::Real(uniform(rng, spec.min, spec.max)),
        (ParamType::Real, Scale::Log10) => {
            ParamValue::Real(pow10(uniform(rng, spec.min, spec.max)))
        }
        (ParamType::Int, Scale::Linear) => {
            let lo = spec.min.ceil() as i64;
            let hi = spec.max.floor() as i64;
            ParamValue::Int(rng.random_range(lo..=hi))
        }
        (ParamType::Int, Scale::Log10) => {
            let v = pow10(uniform(rng, spec.min, spec.max)).round();
            let lo = pow10(spec.min).ceil();
            let hi = pow10(spec.max).floor().max(lo);
            ParamValue::Int(v.clamp(lo, hi) as i64)
        }
    }
}

/// Draws `n` independent configurations; configuration `i` depends only on
/// `(seed, i)`.
pub fn sample_configs(space: &SearchSpace, n: usize, seed: u64) -> Vec<Config> {
    (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64, Purpose::Tuner);
            space
                .params
                .iter()
                .map(|p| (p.name.clone(), sample_one(p, &mut r)))
                .collect()
        })
        .collect()
}
