//! Continuous-time Lyapunov and algebraic Riccati solvers.
//!
//! Lyapunov equations are solved by Kronecker vectorization. Riccati
//! equations use Newton-Kleinman iteration started from a Bass
//! pseudo-stabilizer, so no nonsymmetric eigensolver is needed anywhere.
//! Hurwitz tests are Lyapunov certificates: `A` is Hurwitz iff
//! `A^T X + X A + I = 0` has a positive definite solution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matkit::{cholesky_pd, is_positive_definite, kron, lu_solve, sym_eig, Mat, MatError};
use crate::settings::NumericSettings;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiccatiError {
    #[error("Lyapunov operator is singular (A and -A^T share an eigenvalue)")]
    SingularOperator,
    #[error("no stabilizing initial gain found; the pair may not be stabilizable")]
    InitFailure,
    #[error("Newton-Kleinman iteration did not converge after {steps} steps (last step {last_step:.3e}, residual {residual:.3e})")]
    NoConvergence {
        steps: usize,
        last_step: f64,
        residual: f64,
    },
    #[error("Riccati solution does not stabilize the closed loop")]
    NotStabilizing,
    #[error("invalid Riccati problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Matrix(MatError),
}

impl From<MatError> for RiccatiError {
    fn from(e: MatError) -> Self {
        match e {
            MatError::Singular { .. } => RiccatiError::SingularOperator,
            other => RiccatiError::Matrix(other),
        }
    }
}

/// Which side the coefficient matrix multiplies the unknown on first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LyapunovSide {
    /// `A^T X + X A + Q = 0` (observability-Gramian form).
    CoefficientOnRight,
    /// `A X + X A^T + Q = 0` (controllability-Gramian form).
    CoefficientOnLeft,
}

#[derive(Clone, Debug)]
pub struct LyapunovProblem {
    pub a: Mat,
    pub q: Mat,
    pub side: LyapunovSide,
}

/// Solves the Lyapunov equation by vectorization; the result is symmetrized.
pub fn solve_lyapunov(p: &LyapunovProblem, tol: &NumericSettings) -> Result<Mat, RiccatiError> {
    let n = p.a.rows();
    if !p.a.is_square() || p.q.shape() != (n, n) {
        return Err(RiccatiError::InvalidProblem(format!(
            "A is {:?}, Q is {:?}",
            p.a.shape(),
            p.q.shape()
        )));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    // Row-major vec: vec(M X) = (M ⊗ I) vec X, vec(X M^T) = (I ⊗ M) vec X.
    let m = match p.side {
        LyapunovSide::CoefficientOnLeft => p.a.clone(),
        LyapunovSide::CoefficientOnRight => p.a.transpose(),
    };
    let eye = Mat::identity(n);
    let op = &kron(&m, &eye) + &kron(&eye, &m);
    let rhs = Mat::from_vec(n * n, 1, p.q.as_slice().iter().map(|v| -v).collect())?;
    let x = lu_solve(&op, &rhs, tol)?;
    Ok(Mat::from_vec(n, n, x.as_slice().to_vec())?.symmetrize())
}

/// `||A X + X A^T + Q||_F` (or the right-coefficient variant).
pub fn lyapunov_residual(p: &LyapunovProblem, x: &Mat) -> f64 {
    let ax = match p.side {
        LyapunovSide::CoefficientOnLeft => &p.a * x,
        LyapunovSide::CoefficientOnRight => &p.a.transpose() * x,
    };
    (&(&ax + &ax.transpose()) + &p.q).norm_fro()
}

/// Lyapunov-certificate Hurwitz test. Singular operators and indefinite
/// certificates both answer `false`.
pub fn is_hurwitz(a: &Mat, tol: &NumericSettings) -> bool {
    if !a.is_square() {
        return false;
    }
    let p = LyapunovProblem {
        a: a.clone(),
        q: Mat::identity(a.rows()),
        side: LyapunovSide::CoefficientOnRight,
    };
    match solve_lyapunov(&p, tol) {
        Ok(x) => x.is_finite() && is_positive_definite(&x, tol),
        Err(_) => false,
    }
}

/// `A^T P + P A - P B Rw^{-1} B^T P + Qsym + perturbation * I = 0`.
#[derive(Clone, Debug)]
pub struct CareProblem {
    pub a: Mat,
    pub b: Mat,
    pub rw: Mat,
    pub q: Mat,
    pub perturbation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CareSolution {
    pub p: Mat,
    /// Optimal gain `K = Rw^{-1} B^T P`; `A - B K` is Hurwitz.
    pub gain: Mat,
    pub steps: usize,
    pub residual: f64,
}

impl CareProblem {
    fn forcing(&self) -> Mat {
        &self.q + &Mat::identity(self.a.rows()).scale(self.perturbation)
    }

    pub fn residual(&self, p: &Mat, tol: &NumericSettings) -> Result<f64, RiccatiError> {
        let rinv_bt = lu_solve(&self.rw, &self.b.transpose(), tol)?;
        let atp = &self.a.transpose() * p;
        let quad = &(&(p * &self.b) * &rinv_bt) * p;
        Ok((&(&(&atp + &atp.transpose()) - &quad) + &self.forcing()).norm_fro())
    }

    fn validate(&self, tol: &NumericSettings) -> Result<(), RiccatiError> {
        let n = self.a.rows();
        let m = self.b.cols();
        if !self.a.is_square() || self.b.rows() != n || self.rw.shape() != (m, m) || self.q.shape() != (n, n) {
            return Err(RiccatiError::InvalidProblem(format!(
                "A {:?}, B {:?}, Rw {:?}, Q {:?}",
                self.a.shape(),
                self.b.shape(),
                self.rw.shape(),
                self.q.shape()
            )));
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(RiccatiError::InvalidProblem(
                "perturbation must be finite and >= 0".into(),
            ));
        }
        if !is_positive_definite(&self.rw, tol) {
            return Err(RiccatiError::InvalidProblem(
                "input weight is not positive definite".into(),
            ));
        }
        let forcing = self.forcing();
        let min = sym_eig(&forcing, tol)?.values.first().copied().unwrap_or(0.0);
        if min < -1e-10 * forcing.norm_fro().max(1.0) {
            return Err(RiccatiError::InvalidProblem(
                "state weight is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }
}

/// Bass construction: with `beta > max Re(eig A)`, the solution `Z` of
/// `(A + beta I) Z + Z (A + beta I)^T = 2 B B^T` yields `K = B^T Z^{-1}`
/// with `A - B K` Hurwitz whenever `(A, B)` is controllable.
fn bass_gain(a: &Mat, b: &Mat, tol: &NumericSettings) -> Result<Mat, RiccatiError> {
    let n = a.rows();
    let mut beta = a.norm_fro() + 1.0;
    for _ in 0..=tol.bass_retries {
        let shifted = a + &Mat::identity(n).scale(beta);
        let lyap = LyapunovProblem {
            a: shifted,
            q: (b * &b.transpose()).scale(-2.0),
            side: LyapunovSide::CoefficientOnLeft,
        };
        if let Ok(z) = solve_lyapunov(&lyap, tol) {
            if let Ok(zinv_b) = lu_solve(&z, b, tol) {
                let k = zinv_b.transpose();
                if is_hurwitz(&(a - &(b * &k)), tol) {
                    return Ok(k);
                }
            }
        }
        beta *= 2.0;
    }
    // Uncontrollable but already stable plants still admit K = 0.
    if is_hurwitz(a, tol) {
        return Ok(Mat::zeros(b.cols(), n));
    }
    Err(RiccatiError::InitFailure)
}

/// Stabilizing solution of the CARE by Newton-Kleinman iteration.
pub fn solve_care(p: &CareProblem, tol: &NumericSettings) -> Result<CareSolution, RiccatiError> {
    p.validate(tol)?;
    let forcing = p.forcing();
    let bt = p.b.transpose();
    let rinv_bt = lu_solve(&p.rw, &bt, tol)?;

    let mut k = bass_gain(&p.a, &p.b, tol)?;
    let mut prev: Option<Mat> = None;
    let mut last_step = f64::INFINITY;
    for step in 1..=tol.care_max_steps {
        let closed = &p.a - &(&p.b * &k);
        let q = &(&(&k.transpose() * &p.rw) * &k) + &forcing;
        let lyap = LyapunovProblem {
            a: closed,
            q,
            side: LyapunovSide::CoefficientOnRight,
        };
        let next = solve_lyapunov(&lyap, tol).map_err(|_| RiccatiError::NotStabilizing)?;
        k = &rinv_bt * &next;
        if let Some(prev) = &prev {
            last_step = (&next - prev).norm_fro();
            if last_step <= tol.care_step_rel * (1.0 + prev.norm_fro()) {
                return finish(p, next, k, step, tol, &forcing);
            }
        }
        prev = Some(next);
    }
    let residual = prev
        .as_ref()
        .map(|x| p.residual(x, tol).unwrap_or(f64::NAN))
        .unwrap_or(f64::NAN);
    Err(RiccatiError::NoConvergence {
        steps: tol.care_max_steps,
        last_step,
        residual,
    })
}

fn finish(
    p: &CareProblem,
    x: Mat,
    gain: Mat,
    steps: usize,
    tol: &NumericSettings,
    forcing: &Mat,
) -> Result<CareSolution, RiccatiError> {
    let residual = p.residual(&x, tol)?;
    let xn = x.norm_fro();
    if !(residual <= tol.care_residual_rel * (1.0 + xn * xn)) {
        return Err(RiccatiError::NoConvergence {
            steps,
            last_step: 0.0,
            residual,
        });
    }
    // PD is only demanded when the forcing term is PD; otherwise PSD suffices.
    let n = x.rows();
    let forcing_pd = matches!(cholesky_pd(forcing, tol), Ok(Some(_)));
    let definite = if forcing_pd {
        is_positive_definite(&x, tol)
    } else {
        let shift = 1e-12 * (1.0 + xn);
        is_positive_definite(&(&x + &Mat::identity(n).scale(shift)), tol)
    };
    if !definite || !is_hurwitz(&(&p.a - &(&p.b * &gain)), tol) {
        return Err(RiccatiError::NotStabilizing);
    }
    Ok(CareSolution {
        p: x,
        gain,
        steps,
        residual,
    })
}

/// Disturbance weighting in the observer Riccati equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseForm {
    /// `E E^T` (n x n for any disturbance dimension).
    #[default]
    #[serde(rename = "EEt")]
    EEt,
    /// `E^T E`; only defined when `E` is square.
    #[serde(rename = "EtE")]
    EtE,
}

impl NoiseForm {
    pub fn weight(self, e: &Mat) -> Result<Mat, RiccatiError> {
        match self {
            NoiseForm::EEt => Ok(e * &e.transpose()),
            NoiseForm::EtE if e.is_square() => Ok(&e.transpose() * e),
            NoiseForm::EtE => Err(RiccatiError::InvalidProblem(format!(
                "E^T E needs a square E, got {:?}",
                e.shape()
            ))),
        }
    }
}

impl std::str::FromStr for NoiseForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "EEt" | "eet" => Ok(NoiseForm::EEt),
            "EtE" | "ete" => Ok(NoiseForm::EtE),
            other => Err(format!("unknown noise form '{other}' (expected EEt or EtE)")),
        }
    }
}

impl std::fmt::Display for NoiseForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseForm::EEt => "EEt",
            NoiseForm::EtE => "EtE",
        })
    }
}

/// Filter Riccati equation `A Q + Q A^T - Q C1^T C1 Q + N + eps I = 0`, solved
/// through its dual CARE on `(A^T, C1^T, I)`.
pub fn observer_riccati(
    a: &Mat,
    c1: &Mat,
    e: &Mat,
    eps: f64,
    form: NoiseForm,
    tol: &NumericSettings,
) -> Result<CareSolution, RiccatiError> {
    let problem = CareProblem {
        a: a.transpose(),
        b: c1.transpose(),
        rw: Mat::identity(c1.rows()),
        q: form.weight(e)?,
        perturbation: eps,
    };
    solve_care(&problem, tol)
}
