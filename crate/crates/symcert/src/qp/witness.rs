//! Witness plans: deterministic recipes that extend a concrete network input
//! to a full variable assignment of an encoded program. Exactness tests rely
//! on them to check that every real execution satisfies every emitted
//! constraint.

use std::ops::Range;

use crate::error::Result;
use crate::model::ActivationKind;

/// How one auxiliary/derived variable is computed from earlier variables.
#[derive(Debug, Clone, PartialEq)]
pub enum WitnessRule {
    /// terms . vals + constant
    Linear { terms: Vec<(usize, f64)>, constant: f64 },
    /// activation(terms . vals + constant)
    Activation { terms: Vec<(usize, f64)>, constant: f64, kind: ActivationKind },
    /// 1 if terms . vals + constant > 0 else 0 (branch bit)
    Indicator { terms: Vec<(usize, f64)>, constant: f64 },
    /// |terms . vals + constant|
    AbsValue { terms: Vec<(usize, f64)>, constant: f64 },
    /// vals[left] * vals[right]
    Product { left: usize, right: usize },
    /// scale * vals[source]^exponent (0 when scale is 0)
    PowerScaled { source: usize, exponent: f64, scale: f64 },
}

/// Rules listed in dependency order: each rule reads only the input range or
/// variables assigned by earlier rules.
#[derive(Debug, Clone, Default)]
pub struct WitnessPlan {
    pub input: Range<usize>,
    pub rules: Vec<(usize, WitnessRule)>,
}

impl WitnessPlan {
    /// Full variable assignment of dimension `dim` for a concrete input.
    pub fn assignment(&self, input: &[f64], dim: usize) -> Result<Vec<f64>> {
        assert_eq!(input.len(), self.input.len());
        let mut vals = vec![0.0; dim];
        vals[self.input.clone()].copy_from_slice(input);
        for (target, rule) in &self.rules {
            let combo = |terms: &[(usize, f64)], constant: f64, vals: &[f64]| {
                terms.iter().map(|&(i, c)| c * vals[i]).sum::<f64>() + constant
            };
            vals[*target] = match rule {
                WitnessRule::Linear { terms, constant } => combo(terms, *constant, &vals),
                WitnessRule::Activation { terms, constant, kind } => {
                    kind.apply(combo(terms, *constant, &vals))?
                }
                WitnessRule::Indicator { terms, constant } => {
                    if combo(terms, *constant, &vals) > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                WitnessRule::AbsValue { terms, constant } => combo(terms, *constant, &vals).abs(),
                WitnessRule::Product { left, right } => vals[*left] * vals[*right],
                WitnessRule::PowerScaled { source, exponent, scale } => {
                    if *scale == 0.0 {
                        0.0
                    } else {
                        scale * vals[*source].powf(*exponent)
                    }
                }
            };
        }
        Ok(vals)
    }
}
