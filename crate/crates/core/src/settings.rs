//! Numeric tolerances shared by every solver in the crate.

use serde::{Deserialize, Serialize};

/// Environment variable holding a JSON object that overrides individual
/// fields of [`NumericSettings`].
pub const NUM_TOL_ENV: &str = "H2NET_NUM_TOL";

/// Tolerances and iteration caps threaded through the numerical kernels.
///
/// Every field has a default; a partial JSON object is enough to override a
/// subset, e.g. `{"care_max_steps": 80}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericSettings {
    /// LU pivots below `lu_pivot_rel * ||A||_F` mark the matrix singular.
    pub lu_pivot_rel: f64,
    /// Jacobi stops once the off-diagonal norm drops below `jacobi_off_rel * ||S||_F`.
    pub jacobi_off_rel: f64,
    pub jacobi_max_sweeps: usize,
    /// Cholesky pivots must exceed `pd_pivot_rel * trace(S) / n`.
    pub pd_pivot_rel: f64,
    /// `expm` refuses arguments with `||A t||_F` above this.
    pub expm_max_norm: f64,
    /// Newton-Kleinman stops when `||P_{k+1} - P_k||_F <= care_step_rel * (1 + ||P_k||_F)`.
    pub care_step_rel: f64,
    pub care_max_steps: usize,
    /// Accepted CARE residual, relative to `1 + ||P||_F^2`.
    pub care_residual_rel: f64,
    /// How many times the Bass shift is doubled before giving up.
    pub bass_retries: usize,
    /// Absolute tolerance for the normalization identities on `D1`, `D2`.
    pub normalization_abs: f64,
    /// Strict matrix inequalities need a largest eigenvalue below `-inequality_rel * norm`.
    pub inequality_rel: f64,
    /// Simulation aborts once any state magnitude exceeds this.
    pub divergence_limit: f64,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            lu_pivot_rel: 1e-13,
            jacobi_off_rel: 1e-12,
            jacobi_max_sweeps: 100,
            pd_pivot_rel: 1e-12,
            expm_max_norm: 1e4,
            care_step_rel: 1e-11,
            care_max_steps: 60,
            care_residual_rel: 1e-8,
            bass_retries: 4,
            normalization_abs: 1e-9,
            inequality_rel: 1e-10,
            divergence_limit: 1e9,
        }
    }
}

impl NumericSettings {
    /// Defaults, overridden by the JSON object in `H2NET_NUM_TOL` when set.
    pub fn from_env() -> Result<Self, serde_json::Error> {
        match std::env::var(NUM_TOL_ENV) {
            Ok(raw) if !raw.trim().is_empty() => serde_json::from_str(&raw),
            _ => Ok(Self::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_override_keeps_other_defaults() {
        let s: NumericSettings = serde_json::from_str(r#"{"care_max_steps": 80}"#).unwrap();
        assert_eq!(s.care_max_steps, 80);
        assert_eq!(s.lu_pivot_rel, 1e-13);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<NumericSettings>(r#"{"bogus": 1}"#).is_err());
    }
}
