use super::{lu_solve, Mat, MatError};
use crate::settings::NumericSettings;

// Diagonal Padé(6, 6) numerator coefficients; the denominator alternates sign.
const PADE6: [f64; 7] = [
    1.0,
    1.0 / 2.0,
    5.0 / 44.0,
    1.0 / 66.0,
    1.0 / 792.0,
    1.0 / 15840.0,
    1.0 / 665280.0,
];

/// `e^{A t}` by scaling and squaring with a diagonal Padé(6, 6) approximant.
///
/// The argument is scaled so that `||A t / 2^s||_inf <= 1/2`, where the
/// truncation error of the approximant is far below double precision.
pub fn expm(a: &Mat, t: f64, tol: &NumericSettings) -> Result<Mat, MatError> {
    if !a.is_square() {
        return Err(MatError::Shape(format!(
            "expm needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    let n = a.rows();
    let at = a.scale(t);
    let size = at.norm_fro();
    if !size.is_finite() || size > tol.expm_max_norm {
        return Err(MatError::Overflow { norm: size });
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }

    let ninf = at.norm_inf();
    let squarings = if ninf > 0.5 {
        (ninf / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = at.scale(0.5f64.powi(squarings));

    let mut num = Mat::identity(n);
    let mut den = Mat::identity(n);
    let mut power = Mat::identity(n);
    for (k, &ck) in PADE6.iter().enumerate().skip(1) {
        power = &power * &x;
        let term = power.scale(ck);
        num = &num + &term;
        den = if k % 2 == 0 { &den + &term } else { &den - &term };
    }
    // The denominator is well conditioned for ||X|| <= 1/2.
    let mut r = lu_solve(
        &den,
        &num,
        &NumericSettings {
            lu_pivot_rel: 0.0,
            ..tol.clone()
        },
    )?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}
