//! Coupling-gain regimes. Each regime fixes the admissible interval for the
//! coupling gain `c` and the Laplacian eigenvalue whose Riccati weight
//! dominates every mode; regimes are registered by name and picked at run
//! time.

use serde::{Deserialize, Serialize};

/// Interval of admissible coupling gains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingInterval {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl CouplingInterval {
    pub fn contains(&self, c: f64) -> bool {
        let above = if self.lower_closed {
            c >= self.lower
        } else {
            c > self.lower
        };
        let below = if self.upper_closed {
            c <= self.upper
        } else {
            c < self.upper
        };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        !(self.lower < self.upper || (self.lower == self.upper && self.lower_closed && self.upper_closed))
    }
}

impl std::fmt::Display for CouplingInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}{:.6}, {:.6}{}",
            if self.lower_closed { '[' } else { '(' },
            self.lower,
            self.upper,
            if self.upper_closed { ']' } else { ')' }
        )
    }
}

/// Threshold `2 / (l2^2 + l2 lN + lN^2)` separating the two regimes.
pub fn regime_threshold(lambda2: f64, lambda_n: f64) -> f64 {
    2.0 / (lambda2 * lambda2 + lambda2 * lambda_n + lambda_n * lambda_n)
}

/// `g(l) = c^2 l^3 - 2 c l`, the coefficient of `P B B^T P` in mode `l`'s
/// Riccati inequality under `F = -c B^T P`.
pub fn mode_coefficient(c: f64, lambda: f64) -> f64 {
    c * c * lambda.powi(3) - 2.0 * c * lambda
}

pub trait CouplingCase: Send + Sync {
    fn name(&self) -> &'static str;

    fn admissible(&self, lambda2: f64, lambda_n: f64) -> CouplingInterval;

    /// Eigenvalue `l*` used in the weight `R(c) = 1 / (2 c l* - c^2 l*^3)`.
    fn dominant_eigenvalue(&self, lambda2: f64, lambda_n: f64) -> f64;
}

/// Large coupling: `threshold <= c < 2 / lN^2`; mode `lN` dominates.
pub struct LargeCoupling;

impl CouplingCase for LargeCoupling {
    fn name(&self) -> &'static str {
        "i"
    }

    fn admissible(&self, lambda2: f64, lambda_n: f64) -> CouplingInterval {
        CouplingInterval {
            lower: regime_threshold(lambda2, lambda_n),
            upper: 2.0 / (lambda_n * lambda_n),
            lower_closed: true,
            upper_closed: false,
        }
    }

    fn dominant_eigenvalue(&self, _lambda2: f64, lambda_n: f64) -> f64 {
        lambda_n
    }
}

/// Small coupling: `0 < c < threshold`; mode `l2` dominates.
pub struct SmallCoupling;

impl CouplingCase for SmallCoupling {
    fn name(&self) -> &'static str {
        "ii"
    }

    fn admissible(&self, lambda2: f64, lambda_n: f64) -> CouplingInterval {
        CouplingInterval {
            lower: 0.0,
            upper: regime_threshold(lambda2, lambda_n),
            lower_closed: false,
            upper_closed: false,
        }
    }

    fn dominant_eigenvalue(&self, lambda2: f64, _lambda_n: f64) -> f64 {
        lambda2
    }
}

pub struct CaseRegistry {
    cases: Vec<Box<dyn CouplingCase>>,
}

impl Default for CaseRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(LargeCoupling));
        r.register(Box::new(SmallCoupling));
        r
    }
}

impl CaseRegistry {
    pub fn empty() -> Self {
        Self { cases: Vec::new() }
    }

    /// Adds a regime; a later registration with the same name replaces the
    /// earlier one.
    pub fn register(&mut self, case: Box<dyn CouplingCase>) {
        self.cases.retain(|c| c.name() != case.name());
        self.cases.push(case);
    }

    pub fn get(&self, name: &str) -> Option<&dyn CouplingCase> {
        self.cases.iter().find(|c| c.name() == name).map(|c| c.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.cases.iter().map(|c| c.name()).collect()
    }

    /// First registered regime whose interval contains `c`.
    pub fn containing(&self, c: f64, lambda2: f64, lambda_n: f64) -> Option<&dyn CouplingCase> {
        self.cases
            .iter()
            .find(|k| k.admissible(lambda2, lambda_n).contains(c))
            .map(|k| k.as_ref())
    }
}
