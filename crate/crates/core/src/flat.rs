//! One-level supervision: the supervisor audits each worker with probability
//! `p` on one of their `k` tasks.
//!
//! The expected loss of a worker playing error `e` is `k f(e) + e p C`; it is
//! convex in `e`, so the best response solves `k f'(e) = -p C`. Truthfulness
//! (`e* < eps`) requires `p > -f'(eps) k / C`, and the supervisor has to audit
//! `p |U|` workers, which grows linearly with the crowd.

use serde::{Deserialize, Serialize};

use crate::effort::{EffortFunction, Root, SchemeParams};
use crate::error::{invalid, Error, Result};

/// Lower bound on the audit probability, with feasibility against `p <= 1`.
///
/// The inequality is strict: callers need `p > bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationBound {
    pub bound: f64,
    pub feasible: bool,
}

impl VerificationBound {
    fn new(bound: f64) -> Self {
        VerificationBound { bound, feasible: bound <= 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    pub params: SchemeParams,
    pub p: f64,
    pub n_workers: u64,
}

impl FlatParams {
    pub fn new(params: SchemeParams, p: f64, n_workers: u64) -> Result<Self> {
        params.validate()?;
        check_probability(p)?;
        if n_workers == 0 {
            return Err(invalid("flat scheme needs at least one worker"));
        }
        Ok(FlatParams { params, p, n_workers })
    }

    /// Expected number of workers the supervisor audits, `p |U|`.
    pub fn workload(&self) -> f64 {
        self.p * self.n_workers as f64
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("probability must lie in [0, 1], got {p}")))
    }
}

pub fn min_verification_probability_binary(
    f: &EffortFunction,
    params: &SchemeParams,
) -> Result<VerificationBound> {
    params.validate()?;
    let slope = f.deriv(params.epsilon)?;
    Ok(VerificationBound::new(-slope * params.k as f64 / params.penalty))
}

pub fn min_verification_probability_quant(
    f: &EffortFunction,
    params: &SchemeParams,
) -> Result<VerificationBound> {
    params.validate()?;
    let slope = f.deriv(params.epsilon)?;
    Ok(VerificationBound::new(-slope * params.k as f64 / params.quant_penalty))
}

/// `k f(e) + e p C`.
pub fn expected_loss_flat(f: &EffortFunction, e: f64, p: f64, params: &SchemeParams) -> Result<f64> {
    params.validate()?;
    check_probability(p)?;
    Ok(params.k as f64 * f.eval(e)? + e * p * params.penalty)
}

/// `k f(v) + v p c`, the quantitative analogue.
pub fn expected_loss_flat_quant(
    f: &EffortFunction,
    v: f64,
    p: f64,
    params: &SchemeParams,
) -> Result<f64> {
    params.validate()?;
    check_probability(p)?;
    Ok(params.k as f64 * f.eval(v)? + v * p * params.quant_penalty)
}

pub fn best_response_flat(f: &EffortFunction, p: f64, params: &SchemeParams) -> Result<Root> {
    params.validate()?;
    check_probability(p)?;
    if p == 0.0 {
        return Err(Error::NoIncentive);
    }
    f.solve_deriv_equals(-p * params.penalty / params.k as f64)
}

pub fn best_response_flat_quant(f: &EffortFunction, p: f64, params: &SchemeParams) -> Result<Root> {
    params.validate()?;
    check_probability(p)?;
    if p == 0.0 {
        return Err(Error::NoIncentive);
    }
    f.solve_deriv_equals(-p * params.quant_penalty / params.k as f64)
}
