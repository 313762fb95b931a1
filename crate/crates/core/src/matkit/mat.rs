use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MatError;

/// Dense real matrix stored row-major.
///
/// Construction from external data rejects non-finite entries; arithmetic on
/// finite inputs is not re-checked.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds from a row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if data.len() != rows * cols {
            return Err(MatError::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MatError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, MatError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(MatError::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// `(S + S^T) / 2`.
    pub fn symmetrize(&self) -> Self {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// `||S - S^T||_F`.
    pub fn asymmetry(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = self[(i, j)] - self[(j, i)];
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = self * x` without allocating.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        assert_eq!(y.len(), self.rows, "matvec dimension mismatch");
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let mut b = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                b[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        b
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    /// Assembles a 2-D grid of blocks; every row of blocks must share a height
    /// and every column a width.
    pub fn from_blocks(grid: &[&[&Mat]]) -> Self {
        let heights: Vec<usize> = grid.iter().map(|r| r[0].rows).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols).collect();
        let mut out = Self::zeros(heights.iter().sum(), widths.iter().sum());
        let mut r0 = 0;
        for (bi, brow) in grid.iter().enumerate() {
            assert_eq!(brow.len(), widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, b) in brow.iter().enumerate() {
                assert_eq!(b.shape(), (heights[bi], widths[bj]), "block shape mismatch");
                out.set_block(r0, c0, b);
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        out
    }

    pub fn hstack(blocks: &[&Mat]) -> Self {
        Self::from_blocks(&[blocks])
    }

    pub fn vstack(blocks: &[&Mat]) -> Self {
        let rows: Vec<[&Mat; 1]> = blocks.iter().map(|b| [*b]).collect();
        let grid: Vec<&[&Mat]> = rows.iter().map(|r| &r[..]).collect();
        Self::from_blocks(&grid)
    }

    /// Elementwise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Mat {
    type Output = Mat;

    fn mul(self, rhs: &Mat) -> Mat {
        assert_eq!(
            self.cols, rhs.rows,
            "product of {}x{} and {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Add for &Mat {
    type Output = Mat;

    fn add(self, rhs: &Mat) -> Mat {
        assert_eq!(self.shape(), rhs.shape(), "sum of mismatched shapes");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Mat {
    type Output = Mat;

    fn sub(self, rhs: &Mat) -> Mat {
        assert_eq!(self.shape(), rhs.shape(), "difference of mismatched shapes");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Mat {
    type Output = Mat;

    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr<Mat> for Mat {
            type Output = Mat;
            fn $f(self, rhs: Mat) -> Mat {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&Mat> for Mat {
            type Output = Mat;
            fn $f(self, rhs: &Mat) -> Mat {
                (&self).$f(rhs)
            }
        }
        impl $tr<Mat> for &Mat {
            type Output = Mat;
            fn $f(self, rhs: Mat) -> Mat {
                self.$f(&rhs)
            }
        }
    };
}

forward_owned!(Mul, mul);
forward_owned!(Add, add);
forward_owned!(Sub, sub);

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Mat::from_rows(&rows).map_err(D::Error::custom)
    }
}

/// Kronecker product: `(A ⊗ B)[i*p + k, j*q + l] = A[i, j] * B[k, l]`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (p, q) = b.shape();
    let mut out = Mat::zeros(a.rows * p, a.cols * q);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..p {
                for l in 0..q {
                    out[(i * p + k, j * q + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}
