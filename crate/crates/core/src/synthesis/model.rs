use serde::{Deserialize, Serialize};

use crate::matkit::Mat;
use crate::settings::NumericSettings;

use super::SynthesisError;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(rename = "A")]
    a: Mat,
    #[serde(rename = "B")]
    b: Mat,
    #[serde(rename = "C1")]
    c1: Mat,
    #[serde(rename = "D1")]
    d1: Mat,
    #[serde(rename = "C2")]
    c2: Mat,
    #[serde(rename = "D2")]
    d2: Mat,
    #[serde(rename = "E")]
    e: Mat,
}

/// Agent dynamics
///
/// ```text
/// x' = A x + B u + E d
/// y  = C1 x + D1 d
/// z  = C2 x + D2 u
/// ```
///
/// with `x ∈ R^n`, `u ∈ R^m`, `d ∈ R^q`, `y ∈ R^r`, `z ∈ R^p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct AgentModel {
    pub a: Mat,
    pub b: Mat,
    pub c1: Mat,
    pub d1: Mat,
    pub c2: Mat,
    pub d2: Mat,
    pub e: Mat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub r: usize,
    pub p: usize,
}

impl TryFrom<ModelFile> for AgentModel {
    type Error = SynthesisError;

    fn try_from(f: ModelFile) -> Result<Self, SynthesisError> {
        AgentModel::new(f.a, f.b, f.c1, f.d1, f.c2, f.d2, f.e)
    }
}

impl From<AgentModel> for ModelFile {
    fn from(m: AgentModel) -> Self {
        ModelFile {
            a: m.a,
            b: m.b,
            c1: m.c1,
            d1: m.d1,
            c2: m.c2,
            d2: m.d2,
            e: m.e,
        }
    }
}

impl AgentModel {
    /// Validates that the seven matrices have compatible dimensions.
    pub fn new(a: Mat, b: Mat, c1: Mat, d1: Mat, c2: Mat, d2: Mat, e: Mat) -> Result<Self, SynthesisError> {
        let n = a.rows();
        let bad = |what: &str, got: (usize, usize), want: String| {
            Err(SynthesisError::InvalidModel(format!(
                "{what} is {}x{}, expected {want}",
                got.0, got.1
            )))
        };
        if !a.is_square() || n == 0 {
            return bad("A", a.shape(), "nonempty square".into());
        }
        let m = b.cols();
        let q = e.cols();
        let r = c1.rows();
        let p = c2.rows();
        if b.rows() != n {
            return bad("B", b.shape(), format!("{n}xm"));
        }
        if e.rows() != n {
            return bad("E", e.shape(), format!("{n}xq"));
        }
        if c1.cols() != n {
            return bad("C1", c1.shape(), format!("rx{n}"));
        }
        if d1.shape() != (r, q) {
            return bad("D1", d1.shape(), format!("{r}x{q}"));
        }
        if c2.cols() != n {
            return bad("C2", c2.shape(), format!("px{n}"));
        }
        if d2.shape() != (p, m) {
            return bad("D2", d2.shape(), format!("{p}x{m}"));
        }
        Ok(Self {
            a,
            b,
            c1,
            d1,
            c2,
            d2,
            e,
        })
    }

    pub fn dims(&self) -> Dimensions {
        Dimensions {
            n: self.a.rows(),
            m: self.b.cols(),
            q: self.e.cols(),
            r: self.c1.rows(),
            p: self.c2.rows(),
        }
    }

    /// Two-state agent with a marginally stable drift matrix (eigenvalues 0
    /// and -1), scalar input and scalar measurement. Reference fixture for the
    /// 6-cycle design.
    pub fn example_two_state() -> Self {
        let m = |rows: &[&[f64]]| Mat::from_rows(rows).expect("literal matrix");
        Self::new(
            m(&[&[-2.0, 2.0], &[-1.0, 1.0]]),
            m(&[&[0.0], &[1.0]]),
            m(&[&[1.0, 0.0]]),
            m(&[&[0.0, 1.0]]),
            m(&[&[0.0, 1.0], &[0.0, 0.0]]),
            m(&[&[0.0], &[1.0]]),
            m(&[&[0.0, 0.0], &[0.5, 0.0]]),
        )
        .expect("example model is consistent")
    }

    /// Evaluates the four normalization identities
    /// `D1 E^T = 0`, `D2^T C2 = 0`, `D1 D1^T = I`, `D2^T D2 = I`.
    pub fn check_normalization(&self, tol: &NumericSettings) -> NormalizationReport {
        let Dimensions { m, r, .. } = self.dims();
        let d1_et = (&self.d1 * &self.e.transpose()).max_abs();
        let d2t_c2 = (&self.d2.transpose() * &self.c2).max_abs();
        let d1_d1t = (&(&self.d1 * &self.d1.transpose()) - &Mat::identity(r)).max_abs();
        let d2t_d2 = (&(&self.d2.transpose() * &self.d2) - &Mat::identity(m)).max_abs();
        let ok = |dev: f64| dev <= tol.normalization_abs;
        NormalizationReport {
            d1_et_zero: ok(d1_et),
            d2t_c2_zero: ok(d2t_c2),
            d1_d1t_identity: ok(d1_d1t),
            d2t_d2_identity: ok(d2t_d2),
            deviations: [d1_et, d2t_c2, d1_d1t, d2t_d2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    pub d1_et_zero: bool,
    pub d2t_c2_zero: bool,
    pub d1_d1t_identity: bool,
    pub d2t_d2_identity: bool,
    /// Max-abs deviations, in the order of the flags above.
    pub deviations: [f64; 4],
}

impl NormalizationReport {
    pub fn all_hold(&self) -> bool {
        self.d1_et_zero && self.d2t_c2_zero && self.d1_d1t_identity && self.d2t_d2_identity
    }
}

impl std::fmt::Display for NormalizationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let flag = |b: bool| if b { "ok" } else { "FAILS" };
        write!(
            f,
            "D1 E^T = 0: {} ({:.2e}); D2^T C2 = 0: {} ({:.2e}); D1 D1^T = I: {} ({:.2e}); D2^T D2 = I: {} ({:.2e})",
            flag(self.d1_et_zero),
            self.deviations[0],
            flag(self.d2t_c2_zero),
            self.deviations[1],
            flag(self.d1_d1t_identity),
            self.deviations[2],
            flag(self.d2t_d2_identity),
            self.deviations[3]
        )
    }
}
