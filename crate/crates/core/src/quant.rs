//! Hierarchical supervision for quantitative tasks.
//!
//! Answers are real numbers and a worker reporting `x` against a superior's
//! `y` pays `c (x - y)^2`. With independent answers the expected penalty is
//! `c (sigma_u^2 + b_u^2 - 2 b_u b_w + sigma_w^2 + b_w^2)`; against an
//! unbiased superior only the worker's own expected error `v = sigma^2 + b^2`
//! matters, so the best response `argmin_v k f(v) + c v` is the same at every
//! level of the hierarchy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::effort::{EffortFunction, Root};
use crate::error::{invalid, Error, Result};

const BIAS_TOL: f64 = 1e-9;
const WEIGHT_TOL: f64 = 1e-12;

/// Expected error of an estimate with spread `sigma` and bias `b`.
pub fn expected_error(sigma: f64, bias: f64) -> f64 {
    sigma * sigma + bias * bias
}

pub fn expected_penalty_quant(sigma_u: f64, b_u: f64, sigma_w: f64, b_w: f64, c: f64) -> f64 {
    c * (sigma_u * sigma_u + b_u * b_u - 2.0 * b_u * b_w + sigma_w * sigma_w + b_w * b_w)
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {x}")))
    }
}

pub fn best_response_quant(f: &EffortFunction, k: u32, c: f64) -> Result<Root> {
    if k < 1 {
        return Err(invalid("k must be at least 1"));
    }
    check_positive("penalty c", c)?;
    if f.domain().1.is_finite() {
        return Err(Error::ModelMismatch(format!(
            "quantitative effort must be defined on all positive variances, {} is bounded",
            f.family().name()
        )));
    }
    f.solve_deriv_equals(-c / k as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantWorkerType {
    pub id: String,
    pub effort: EffortFunction,
    /// Bias this type adopts when best-responding to unbiased supervision.
    pub bias: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantLevel {
    pub level: usize,
    pub vstar: f64,
    pub truthful: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantProfile {
    pub id: String,
    pub proficient: bool,
    pub levels: Vec<QuantLevel>,
}

impl QuantProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,vstar,truthful\n");
        for l in &self.levels {
            let _ = writeln!(out, "{},{},{}", l.level, l.vstar, l.truthful);
        }
        out
    }
}

/// Per-type equilibrium profiles for levels `1..=depth`.
///
/// Requires the population-mean best-response bias to vanish; then every
/// superior looks unbiased in expectation and each type plays its
/// [`best_response_quant`] at every level.
pub fn quant_equilibrium(
    pop: &[QuantWorkerType],
    k: u32,
    c: f64,
    epsilon: f64,
    depth: usize,
) -> Result<Vec<QuantProfile>> {
    if pop.is_empty() {
        return Err(invalid("population needs at least one type"));
    }
    check_positive("epsilon", epsilon)?;
    if depth < 1 {
        return Err(invalid("depth must be at least 1"));
    }
    if pop.iter().any(|t| !(t.weight.is_finite() && t.weight >= 0.0) || !t.bias.is_finite()) {
        return Err(invalid("weights must be non-negative and biases finite"));
    }
    let total: f64 = pop.iter().map(|t| t.weight).sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(invalid(format!("population weights sum to {total}, not 1")));
    }
    let mean_bias: f64 = pop.iter().map(|t| t.weight * t.bias).sum();
    if mean_bias.abs() > BIAS_TOL {
        return Err(Error::BiasedPopulation(mean_bias));
    }
    pop.iter()
        .map(|t| {
            let v = best_response_quant(&t.effort, k, c)?.value;
            let truthful = v < epsilon;
            Ok(QuantProfile {
                id: t.id.clone(),
                proficient: truthful,
                levels: (1..=depth).map(|level| QuantLevel { level, vstar: v, truthful }).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(alpha: f64) -> EffortFunction {
        EffortFunction::inverse_power(alpha).unwrap()
    }

    fn single(alpha: f64, bias: f64) -> QuantWorkerType {
        QuantWorkerType { id: "t".into(), effort: inv(alpha), bias, weight: 1.0 }
    }

    #[test]
    fn penalty_anchors() {
        assert_eq!(expected_penalty_quant(1.0, 0.0, 0.0, 0.0, 1.0), 1.0);
        let l = expected_penalty_quant(1.0, 0.5, 0.8, -0.5, 2.0);
        assert!((l - 5.28).abs() < 1e-12);
    }

    #[test]
    fn best_response_anchors() {
        assert_eq!(best_response_quant(&inv(1.0), 4, 1.0).unwrap().value, 2.0);
        assert_eq!(best_response_quant(&inv(1.0), 1, 4.0).unwrap().value, 0.5);
        assert!(best_response_quant(&inv(1.0), 1, 0.0).is_err());
        let bounded = EffortFunction::simple_log(1.0).unwrap();
        assert!(matches!(best_response_quant(&bounded, 1, 1.0), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn equilibrium_constant_in_depth() {
        let prof = quant_equilibrium(&[single(1.0, 0.0)], 4, 1.0, 2.5, 50).unwrap();
        assert_eq!(prof[0].levels.len(), 50);
        assert!(prof[0].levels.iter().all(|l| l.vstar == 2.0 && l.truthful));
        let prof = quant_equilibrium(&[single(1.0, 0.0)], 4, 1.0, 1.5, 50).unwrap();
        assert!(prof[0].levels.iter().all(|l| !l.truthful));
        assert!(!prof[0].proficient);
    }

    #[test]
    fn symmetric_biases_are_admissible() {
        let pop = [
            QuantWorkerType { id: "hi".into(), effort: inv(1.0), bias: 0.3, weight: 0.5 },
            QuantWorkerType { id: "lo".into(), effort: inv(9.0), bias: -0.3, weight: 0.5 },
        ];
        let prof = quant_equilibrium(&pop, 4, 1.0, 5.0, 3).unwrap();
        assert_eq!(prof[0].levels[0].vstar, 2.0);
        assert_eq!(prof[1].levels[0].vstar, 6.0);
    }

    #[test]
    fn biased_population_rejected() {
        assert!(matches!(
            quant_equilibrium(&[single(1.0, 0.1)], 4, 1.0, 2.5, 5),
            Err(Error::BiasedPopulation(_))
        ));
    }

    #[test]
    fn csv_shape() {
        let prof = quant_equilibrium(&[single(1.0, 0.0)], 4, 1.0, 2.5, 2).unwrap();
        assert_eq!(prof[0].to_csv(), "level,vstar,truthful\n1,2,true\n2,2,true\n");
    }
}
