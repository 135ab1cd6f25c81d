//! Dense complex matrices and the SVD backend.

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
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

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "entrywise product of {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(CMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!("{:?} minus {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(CMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scaled(&self, s: Complex64) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// Columns reordered so that column `k` of the result is column `perm[k]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> CMatrix {
        CMatrix::from_fn(self.rows, perm.len(), |r, c| self.get(r, perm[c]))
    }

    pub(crate) fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.rows, self.cols, |r, c| self.get(r, c))
    }

    pub(crate) fn from_faer(m: faer::MatRef<'_, Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
    }
}

/// Thin SVD `A = U diag(S) V^H`, singular values descending.
pub(crate) fn thin_svd(a: &CMatrix) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    if !a.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let m = a.to_faer();
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD did not converge: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((CMatrix::from_faer(svd.U()), s, CMatrix::from_faer(svd.V())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_hadamard() {
        let a = CMatrix::from_fn(2, 3, |r, c| Complex64::new((r * 3 + c) as f64, 1.0));
        let x = vec![Complex64::new(1.0, 0.0); 3];
        let y = a.matvec(&x).unwrap();
        assert_eq!(y[0], Complex64::new(3.0, 3.0));
        assert!(a.matvec(&x[..2]).is_err());
        let h = a.hadamard(&a).unwrap();
        assert_eq!(h.get(1, 2), Complex64::new(5.0, 1.0) * Complex64::new(5.0, 1.0));
    }

    #[test]
    fn svd_reconstructs_matrix() {
        let a = CMatrix::from_fn(7, 5, |r, c| Complex64::new(((r * 5 + c) as f64).sin(), (r as f64 - c as f64).cos()));
        let (u, s, v) = thin_svd(&a).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = CMatrix::from_fn(7, 5, |r, c| {
            (0..5).map(|k| u.get(r, k) * s[k] * v.get(c, k).conj()).sum()
        });
        assert!(rebuilt.sub(&a).unwrap().frobenius_norm() / a.frobenius_norm() < 1e-12);
    }
}
