//! Effort-function families and the scheme parameters shared by every
//! incentive calculation.
//!
//! An effort function maps an error probability (binary tasks) or an answer
//! variance (quantitative tasks) to the cost a worker pays to achieve it. All
//! families here are strictly decreasing and strictly convex, so their
//! derivative is strictly increasing and every first-order condition
//! `f'(x) = target` has at most one solution. [`EffortFunction::solve_deriv_equals`]
//! inverts it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance on the argument for the bracketed bisection.
pub const ROOT_TOL: f64 = 1e-12;

const MAX_BISECTIONS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffortFamily {
    /// `alpha * -ln(e)` on `(0, 1]`.
    SimpleLog,
    /// `alpha * ln(1 / (2e))^2` on `(0, 1/2]`; infinite cost at 0, free at random guessing.
    BoundaryLog,
    /// `alpha / v` on `(0, inf)`, for answer variances.
    InversePower,
}

impl EffortFamily {
    pub fn natural_upper(self) -> f64 {
        match self {
            EffortFamily::SimpleLog => 1.0,
            EffortFamily::BoundaryLog => 0.5,
            EffortFamily::InversePower => f64::INFINITY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EffortFamily::SimpleLog => "simplelog",
            EffortFamily::BoundaryLog => "boundarylog",
            EffortFamily::InversePower => "inversepower",
        }
    }
}

impl std::str::FromStr for EffortFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simplelog" => Ok(EffortFamily::SimpleLog),
            "boundarylog" => Ok(EffortFamily::BoundaryLog),
            "inversepower" => Ok(EffortFamily::InversePower),
            other => Err(invalid(format!("unknown effort family '{other}'"))),
        }
    }
}

/// Which end of the domain a best response was pinned to when the
/// first-order condition has no interior solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clamp {
    Lower,
    Upper,
}

/// Result of inverting `f'`. `clamp` is set when the target is outside the
/// open range of `f'` and `value` is the corresponding domain end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub value: f64,
    pub clamp: Option<Clamp>,
}

impl Root {
    pub fn interior(value: f64) -> Self {
        Root { value, clamp: None }
    }

    pub fn is_interior(&self) -> bool {
        self.clamp.is_none()
    }
}

/// A strictly convex, strictly decreasing cost model.
///
/// The domain is `(0, hi]` intersected with `[lo, hi]`: the lower end is open
/// when `lo == 0`. By default `lo = 0` and `hi` is the family's natural upper
/// end; [`EffortFunction::with_domain`] narrows it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EffortSpec", into = "EffortSpec")]
pub struct EffortFunction {
    family: EffortFamily,
    alpha: f64,
    domain_lo: f64,
    domain_hi: f64,
}

#[derive(Serialize, Deserialize)]
struct EffortSpec {
    family: EffortFamily,
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<[f64; 2]>,
}

impl TryFrom<EffortSpec> for EffortFunction {
    type Error = Error;

    fn try_from(spec: EffortSpec) -> Result<Self> {
        let f = EffortFunction::new(spec.family, spec.alpha)?;
        match spec.domain {
            Some([lo, hi]) => f.with_domain(lo, hi),
            None => Ok(f),
        }
    }
}

impl From<EffortFunction> for EffortSpec {
    fn from(f: EffortFunction) -> Self {
        let narrowed = f.domain_lo > 0.0 || f.domain_hi < f.family.natural_upper();
        EffortSpec {
            family: f.family,
            alpha: f.alpha,
            domain: narrowed.then_some([f.domain_lo, f.domain_hi]),
        }
    }
}

impl EffortFunction {
    pub fn new(family: EffortFamily, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(format!("effort scale alpha must be positive, got {alpha}")));
        }
        Ok(EffortFunction {
            family,
            alpha,
            domain_lo: 0.0,
            domain_hi: family.natural_upper(),
        })
    }

    pub fn simple_log(alpha: f64) -> Result<Self> {
        Self::new(EffortFamily::SimpleLog, alpha)
    }

    pub fn boundary_log(alpha: f64) -> Result<Self> {
        Self::new(EffortFamily::BoundaryLog, alpha)
    }

    pub fn inverse_power(alpha: f64) -> Result<Self> {
        Self::new(EffortFamily::InversePower, alpha)
    }

    /// Restricts the domain to `[lo, hi]` (open at 0 when `lo == 0`).
    pub fn with_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        let natural = self.family.natural_upper();
        if !(lo >= 0.0 && lo < hi && hi <= natural) || lo.is_nan() || hi.is_nan() {
            return Err(invalid(format!(
                "domain [{lo}, {hi}] is not a sub-interval of (0, {natural}]"
            )));
        }
        self.domain_lo = lo;
        self.domain_hi = hi;
        Ok(self)
    }

    pub fn family(&self) -> EffortFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && x > 0.0 && x >= self.domain_lo && x <= self.domain_hi
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::EffortDomain { value: x, lo: self.domain_lo, hi: self.domain_hi })
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(self.deriv_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        let a = self.alpha;
        match self.family {
            EffortFamily::SimpleLog => -a * x.ln(),
            EffortFamily::BoundaryLog => {
                let l = (1.0 / (2.0 * x)).ln();
                a * l * l
            }
            EffortFamily::InversePower => a / x,
        }
    }

    pub(crate) fn deriv_unchecked(&self, x: f64) -> f64 {
        let a = self.alpha;
        match self.family {
            EffortFamily::SimpleLog => -a / x,
            EffortFamily::BoundaryLog => -2.0 * a * (1.0 / (2.0 * x)).ln() / x,
            EffortFamily::InversePower => -a / (x * x),
        }
    }

    /// Infimum and supremum of `f'` over the domain.
    pub fn deriv_range(&self) -> (f64, f64) {
        let inf = if self.domain_lo > 0.0 {
            self.deriv_unchecked(self.domain_lo)
        } else {
            f64::NEG_INFINITY
        };
        let sup = if self.domain_hi.is_finite() {
            self.deriv_unchecked(self.domain_hi)
        } else {
            0.0
        };
        (inf, sup)
    }

    /// Returns the unique `x` with `f'(x) = target`, or the clamped domain end
    /// when `target` is outside the open range of `f'`.
    ///
    /// Families with an elementary inverse of `f'` use it; the others go
    /// through [`EffortFunction::bisect_deriv`].
    pub fn solve_deriv_equals(&self, target: f64) -> Result<Root> {
        if !target.is_finite() {
            return Err(Error::InvalidTarget(target));
        }
        let (inf, sup) = self.deriv_range();
        if target <= inf {
            return Ok(Root { value: self.domain_lo, clamp: Some(Clamp::Lower) });
        }
        if target >= sup {
            return Ok(Root { value: self.domain_hi, clamp: Some(Clamp::Upper) });
        }
        let x = match self.family {
            EffortFamily::SimpleLog => -self.alpha / target,
            EffortFamily::InversePower => (-self.alpha / target).sqrt(),
            EffortFamily::BoundaryLog => return self.bisect_deriv(target),
        };
        Ok(Root::interior(x.clamp(self.domain_lo, self.domain_hi)))
    }

    /// Bracketed bisection on the strictly increasing `f'`, to [`ROOT_TOL`].
    pub fn bisect_deriv(&self, target: f64) -> Result<Root> {
        if !target.is_finite() {
            return Err(Error::InvalidTarget(target));
        }
        let (inf, sup) = self.deriv_range();
        if target <= inf {
            return Ok(Root { value: self.domain_lo, clamp: Some(Clamp::Lower) });
        }
        if target >= sup {
            return Ok(Root { value: self.domain_hi, clamp: Some(Clamp::Upper) });
        }
        let mut lo = self.domain_lo;
        let mut hi = if self.domain_hi.is_finite() {
            self.domain_hi
        } else {
            let mut h = 1.0;
            while self.deriv_unchecked(h) < target {
                lo = h;
                h *= 2.0;
            }
            h
        };
        for _ in 0..MAX_BISECTIONS {
            if hi - lo <= ROOT_TOL {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            // f'(0+) = -inf, so lo == 0 never needs evaluating
            if self.deriv_unchecked(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Root::interior(0.5 * (lo + hi)))
    }
}

/// Parameters of a supervision scheme.
///
/// `epsilon` is the truthfulness threshold: an error probability for binary
/// tasks, a variance for quantitative ones. Operations that need it in
/// `(0, 1/2)` check that themselves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Branching factor and number of tasks per worker.
    pub k: u32,
    /// Binary disagreement penalty `C`.
    pub penalty: f64,
    /// Quantitative penalty constant `c`.
    pub quant_penalty: f64,
    pub epsilon: f64,
    /// Answer-set size `|A|`.
    pub answers: u32,
    /// Override for the both-wrong penalty `D`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub both_wrong: Option<f64>,
}

impl SchemeParams {
    /// Binary-answer defaults: `|A| = 2`, `c = C`, `D` derived from `|A|`.
    pub fn new(k: u32, penalty: f64, epsilon: f64) -> Result<Self> {
        let p = SchemeParams {
            k,
            penalty,
            quant_penalty: penalty,
            epsilon,
            answers: 2,
            both_wrong: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_quant_penalty(mut self, c: f64) -> Result<Self> {
        self.quant_penalty = c;
        self.validate()?;
        Ok(self)
    }

    pub fn with_answers(mut self, m: u32) -> Result<Self> {
        self.answers = m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_both_wrong(mut self, d: f64) -> Result<Self> {
        self.both_wrong = Some(d);
        self.validate()?;
        Ok(self)
    }

    pub fn with_penalty(mut self, penalty: f64) -> Result<Self> {
        self.penalty = penalty;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(invalid("k must be at least 1"));
        }
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return Err(invalid(format!("penalty C must be positive, got {}", self.penalty)));
        }
        if !(self.quant_penalty.is_finite() && self.quant_penalty > 0.0) {
            return Err(invalid(format!("penalty c must be positive, got {}", self.quant_penalty)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.answers < 2 {
            return Err(invalid("answer set needs at least 2 elements"));
        }
        if let Some(d) = self.both_wrong {
            if !(0.0..=self.penalty).contains(&d) {
                return Err(invalid(format!("D = {d} must lie in [0, C]")));
            }
        }
        Ok(())
    }

    /// `D`: penalty expected when worker and superior are both wrong.
    ///
    /// Without an override, wrong answers are uniform over the `|A| - 1`
    /// alternatives and independent, so two wrong answers disagree with
    /// probability `(|A| - 2) / (|A| - 1)`.
    pub fn both_wrong_penalty(&self) -> f64 {
        self.both_wrong.unwrap_or_else(|| {
            let m = self.answers as f64;
            self.penalty * (m - 2.0) / (m - 1.0)
        })
    }

    pub(crate) fn require_binary_epsilon(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.epsilon < 0.5 {
            Ok(())
        } else {
            Err(Error::EpsilonRange(self.epsilon))
        }
    }
}
