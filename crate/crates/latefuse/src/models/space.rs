//! Declared hyperparameter domains per model family.
//!
//! One table drives three things: validation of hand-built specs (unknown
//! keys rejected, values range-checked), defaults for omitted keys, and
//! random sampling during search. Keeping them in one place guarantees the
//! sampler can never produce a spec that validation would reject.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{HyperValue, ModelFamily};
use crate::error::{Error, Result};

/// A single hyperparameter's legal domain and default.
pub struct ParamDef {
    pub name: &'static str,
    pub domain: Domain,
}

pub enum Domain {
    /// Inclusive integer range, drawn uniformly.
    Int { lo: i64, hi: i64, default: i64 },
    /// Inclusive float range, drawn uniformly (or log-uniformly).
    Float { lo: f64, hi: f64, log: bool, default: f64 },
    /// Fixed set of admissible values, drawn uniformly.
    OneOf { choices: &'static [Lit], default: Lit },
    /// Boolean flag, drawn uniformly.
    Bool { default: bool },
}

/// Literal for `OneOf` domains (const-constructible).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lit {
    I(i64),
    F(f64),
    S(&'static str),
}

impl Lit {
    fn to_value(self) -> HyperValue {
        match self {
            Lit::I(v) => HyperValue::Int(v),
            Lit::F(v) => HyperValue::Float(v),
            Lit::S(v) => HyperValue::Str(v.to_string()),
        }
    }

    fn matches(&self, value: &HyperValue) -> bool {
        match (self, value) {
            (Lit::I(a), HyperValue::Int(b)) => a == b,
            (Lit::F(a), HyperValue::Float(b)) => a == b,
            (Lit::S(a), HyperValue::Str(b)) => a == b,
            _ => false,
        }
    }
}

const DEPTH_DEFAULT: i64 = 6;

const CART_PARAMS: &[ParamDef] = &[
    ParamDef {
        name: "max_depth",
        domain: Domain::Int { lo: 1, hi: 12, default: DEPTH_DEFAULT },
    },
    ParamDef {
        name: "min_samples_leaf",
        domain: Domain::Int { lo: 1, hi: 20, default: 1 },
    },
];

const SUBSAMPLE_CHOICES: &[Lit] = &[Lit::S("sqrt"), Lit::F(0.5), Lit::F(1.0)];

const FOREST_PARAMS: &[ParamDef] = &[
    ParamDef {
        name: "n_trees",
        domain: Domain::Int { lo: 10, hi: 200, default: 50 },
    },
    ParamDef {
        name: "max_depth",
        domain: Domain::Int { lo: 1, hi: 12, default: DEPTH_DEFAULT },
    },
    ParamDef {
        name: "feature_subsample",
        domain: Domain::OneOf { choices: SUBSAMPLE_CHOICES, default: Lit::S("sqrt") },
    },
    ParamDef {
        name: "bootstrap",
        domain: Domain::Bool { default: true },
    },
];

const GLM_PARAMS: &[ParamDef] = &[
    ParamDef {
        name: "lambda",
        domain: Domain::Float { lo: 1e-4, hi: 10.0, log: true, default: 1e-3 },
    },
    ParamDef {
        name: "alpha",
        domain: Domain::Float { lo: 0.0, hi: 1.0, log: false, default: 0.0 },
    },
    ParamDef {
        name: "epochs",
        domain: Domain::Int { lo: 50, hi: 200, default: 100 },
    },
    ParamDef {
        name: "lr",
        domain: Domain::Float { lo: 0.01, hi: 0.3, log: true, default: 0.1 },
    },
];

macro_rules! gbm_common_params {
    () => {
        [
            ParamDef {
                name: "n_rounds",
                domain: Domain::Int { lo: 10, hi: 300, default: 100 },
            },
            ParamDef {
                name: "nu",
                domain: Domain::Float { lo: 0.01, hi: 0.3, log: false, default: 0.1 },
            },
            ParamDef {
                name: "max_depth",
                domain: Domain::Int { lo: 1, hi: 6, default: 3 },
            },
            ParamDef {
                name: "subsample",
                domain: Domain::Float { lo: 0.5, hi: 1.0, log: false, default: 1.0 },
            },
        ]
    };
}

const GBM_FIRST_PARAMS: &[ParamDef] = &gbm_common_params!();

const GBM_SECOND_PARAMS: &[ParamDef] = &{
    let [a, b, c, d] = gbm_common_params!();
    [
        a,
        b,
        c,
        d,
        ParamDef {
            name: "lambda",
            domain: Domain::Float { lo: 0.0, hi: 10.0, log: false, default: 1.0 },
        },
    ]
};

const MLP_PARAMS: &[ParamDef] = &[
    ParamDef {
        name: "layers",
        domain: Domain::Int { lo: 1, hi: 2, default: 1 },
    },
    ParamDef {
        name: "width",
        domain: Domain::OneOf {
            choices: &[Lit::I(8), Lit::I(16), Lit::I(32)],
            default: Lit::I(16),
        },
    },
    ParamDef {
        name: "activation",
        domain: Domain::OneOf {
            choices: &[Lit::S("relu"), Lit::S("tanh")],
            default: Lit::S("relu"),
        },
    },
    ParamDef {
        name: "lr",
        domain: Domain::Float { lo: 0.02, hi: 0.5, log: true, default: 0.1 },
    },
    ParamDef {
        name: "epochs",
        domain: Domain::Int { lo: 20, hi: 60, default: 40 },
    },
];

const SVM_PARAMS: &[ParamDef] = &[
    ParamDef {
        name: "lambda",
        domain: Domain::Float { lo: 1e-4, hi: 1.0, log: true, default: 1e-3 },
    },
    ParamDef {
        name: "epochs",
        domain: Domain::Int { lo: 50, hi: 300, default: 200 },
    },
    ParamDef {
        name: "lr",
        domain: Domain::Float { lo: 0.01, hi: 0.3, log: true, default: 0.1 },
    },
];

/// The declared parameter table for a family.
pub fn params_for(family: ModelFamily) -> &'static [ParamDef] {
    match family {
        ModelFamily::Cart => CART_PARAMS,
        ModelFamily::RandomForest | ModelFamily::ExtraTrees => FOREST_PARAMS,
        ModelFamily::Glm => GLM_PARAMS,
        ModelFamily::GbmFirstOrder => GBM_FIRST_PARAMS,
        ModelFamily::GbmSecondOrder => GBM_SECOND_PARAMS,
        ModelFamily::Mlp => MLP_PARAMS,
        ModelFamily::LinearSvm => SVM_PARAMS,
    }
}

fn def_error(family: ModelFamily, name: &str, detail: impl Into<String>) -> Error {
    Error::InvalidHyperparameter {
        family: format!("{family:?}"),
        name: name.to_string(),
        detail: detail.into(),
    }
}

fn check_value(family: ModelFamily, def: &ParamDef, value: &HyperValue) -> Result<()> {
    match (&def.domain, value) {
        (Domain::Int { lo, hi, .. }, HyperValue::Int(v)) => {
            if v < lo || v > hi {
                return Err(def_error(family, def.name, format!("{v} outside [{lo}, {hi}]")));
            }
        }
        (Domain::Float { lo, hi, .. }, HyperValue::Float(v)) => {
            if !v.is_finite() || v < lo || v > hi {
                return Err(def_error(family, def.name, format!("{v} outside [{lo}, {hi}]")));
            }
        }
        (Domain::OneOf { choices, .. }, v) => {
            if !choices.iter().any(|c| c.matches(v)) {
                return Err(def_error(family, def.name, format!("{v:?} not an admissible choice")));
            }
        }
        (Domain::Bool { .. }, HyperValue::Bool(_)) => {}
        (_, v) => {
            return Err(def_error(family, def.name, format!("{v:?} has the wrong type")));
        }
    }
    Ok(())
}

/// Validates a hyperparameter map against the family table: unknown keys
/// are rejected and present values must lie in their declared domains.
pub fn validate(
    family: ModelFamily,
    hyperparams: &std::collections::BTreeMap<String, HyperValue>,
) -> Result<()> {
    let table = params_for(family);
    for (name, value) in hyperparams {
        let def = table
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| def_error(family, name, "unknown hyperparameter"))?;
        check_value(family, def, value)?;
    }
    Ok(())
}

/// Value for `name`, falling back to the declared default when absent.
pub fn resolve(
    family: ModelFamily,
    hyperparams: &std::collections::BTreeMap<String, HyperValue>,
    name: &str,
) -> HyperValue {
    if let Some(v) = hyperparams.get(name) {
        return v.clone();
    }
    let def = params_for(family)
        .iter()
        .find(|d| d.name == name)
        .unwrap_or_else(|| panic!("{family:?} has no hyperparameter {name}"));
    match &def.domain {
        Domain::Int { default, .. } => HyperValue::Int(*default),
        Domain::Float { default, .. } => HyperValue::Float(*default),
        Domain::OneOf { default, .. } => default.to_value(),
        Domain::Bool { default } => HyperValue::Bool(*default),
    }
}

/// Draws one value per declared hyperparameter of the family.
pub fn sample(
    family: ModelFamily,
    rng: &mut ChaCha8Rng,
) -> std::collections::BTreeMap<String, HyperValue> {
    let mut out = std::collections::BTreeMap::new();
    for def in params_for(family) {
        let value = match &def.domain {
            Domain::Int { lo, hi, .. } => HyperValue::Int(rng.gen_range(*lo..=*hi)),
            Domain::Float { lo, hi, log, .. } => {
                let v = if *log {
                    (rng.gen_range(lo.ln()..=hi.ln())).exp().clamp(*lo, *hi)
                } else {
                    rng.gen_range(*lo..=*hi)
                };
                HyperValue::Float(v)
            }
            Domain::OneOf { choices, .. } => choices[rng.gen_range(0..choices.len())].to_value(),
            Domain::Bool { .. } => HyperValue::Bool(rng.gen_bool(0.5)),
        };
        out.insert(def.name.to_string(), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn unknown_keys_are_rejected() {
        let mut hp = BTreeMap::new();
        hp.insert("depth".to_string(), HyperValue::Int(3));
        assert!(validate(ModelFamily::Cart, &hp).is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let mut hp = BTreeMap::new();
        hp.insert("max_depth".to_string(), HyperValue::Int(13));
        assert!(validate(ModelFamily::Cart, &hp).is_err());
        hp.insert("max_depth".to_string(), HyperValue::Int(12));
        assert!(validate(ModelFamily::Cart, &hp).is_ok());
    }

    #[test]
    fn wrong_type_is_rejected() {
        let mut hp = BTreeMap::new();
        hp.insert("max_depth".to_string(), HyperValue::Float(3.0));
        assert!(validate(ModelFamily::Cart, &hp).is_err());
    }

    #[test]
    fn mixed_choice_domain_accepts_both_forms() {
        let mut hp = BTreeMap::new();
        hp.insert("feature_subsample".to_string(), HyperValue::Str("sqrt".into()));
        assert!(validate(ModelFamily::RandomForest, &hp).is_ok());
        hp.insert("feature_subsample".to_string(), HyperValue::Float(0.5));
        assert!(validate(ModelFamily::RandomForest, &hp).is_ok());
        hp.insert("feature_subsample".to_string(), HyperValue::Float(0.7));
        assert!(validate(ModelFamily::RandomForest, &hp).is_err());
    }

    #[test]
    fn samples_always_validate() {
        let mut rng = crate::rng::stream_rng(0, crate::rng::stream::TRIAL_SPEC, 0);
        for family in ModelFamily::ALL {
            for _ in 0..200 {
                let hp = sample(family, &mut rng);
                validate(family, &hp).unwrap();
            }
        }
    }
}
