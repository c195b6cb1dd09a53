//! Minimal dense vector/matrix arithmetic and numerically stable reductions.
//!
//! Storage is plain row-major `f64`. Finiteness is checked once at
//! construction so the retrieval and training code above this layer never has
//! to reason about NaN propagation. Cosine against a zero vector is defined
//! as zero, which keeps TF-IDF cosines on empty n-gram vectors well defined.

use crate::error::{Error, Result};

/// Dense vector of finite `f64` values with at least one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Dimension("vector must have at least one element".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector element {i}")));
        }
        Ok(Self { data })
    }

    /// All-zero vector. `dim` must be positive.
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "zero-dimensional vectors are not representable");
        Self { data: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }
}

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix element {i}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Stacks row vectors; all rows must share a dimension.
    pub fn from_rows(rows: &[Vector]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Dimension("cannot build a matrix from zero rows".into()))?;
        let cols = first.dim();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.dim() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has dimension {} but row 0 has {cols}",
                    r.dim()
                )));
            }
            data.extend_from_slice(r.as_slice());
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `A * v` for a conforming vector.
    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if v.dim() != self.cols {
            return Err(Error::Dimension(format!(
                "matvec: matrix has {} columns but vector has dimension {}",
                self.cols,
                v.dim()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = dot_slices(self.row(r), v.as_slice());
        }
        Vector::new(out)
    }
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dot(a: &Vector, b: &Vector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "dot: dimensions {} and {} differ",
            a.dim(),
            b.dim()
        )));
    }
    Ok(dot_slices(a.as_slice(), b.as_slice()))
}

pub fn norm(a: &Vector) -> f64 {
    dot_slices(a.as_slice(), a.as_slice()).sqrt()
}

/// Cosine similarity; zero whenever either vector has zero norm.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    let d = dot(a, b)?;
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(d / (na * nb))
}

/// `max(v) + log sum exp(v_i - max(v))`, exact for constant vectors.
pub fn log_sum_exp(v: &Vector) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Shift-invariant softmax; output is nonnegative and sums to one.
pub fn softmax(v: &Vector) -> Vector {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Vector::new(exps.into_iter().map(|e| e / sum).collect())
        .expect("softmax of a finite vector is finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec64(data: &[f64]) -> Vector {
        Vector::new(data.to_vec()).unwrap()
    }

    #[test]
    fn log_sum_exp_constant_vector() {
        let v = vec64(&[0.0, 0.0, 0.0]);
        assert!((log_sum_exp(&v) - 3.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_no_overflow_on_large_inputs() {
        let v = vec64(&[1000.0, 1000.0]);
        let got = log_sum_exp(&v);
        assert!(got.is_finite());
        assert!((got - (1000.0 + 2.0_f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn log_sum_exp_direct_evaluation() {
        // ln(e^1 + e^2 + e^3), frozen from a direct high-precision evaluation.
        let v = vec64(&[1.0, 2.0, 3.0]);
        assert!((log_sum_exp(&v) - 3.40760596444438).abs() < 1e-12);
    }

    #[test]
    fn softmax_symmetry_and_single_element() {
        let s = softmax(&vec64(&[0.0, 0.0]));
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
        for x in [-40.0, 0.0, 17.5] {
            let s = softmax(&vec64(&[x]));
            assert_eq!(s.as_slice(), &[1.0]);
        }
    }

    #[test]
    #[allow(clippy::approx_constant)] // 0.7071 is the literal example input
    fn softmax_direct_evaluation() {
        // Oracle: two-class softmax reduces to the logistic function.
        let s = softmax(&vec64(&[0.7071, 0.0]));
        let oracle = 1.0 / (1.0 + (-0.7071_f64).exp());
        assert!((s.get(0) - oracle).abs() < 1e-15);
        assert!((s.get(0) - 0.669760).abs() < 1e-5);
        assert!((s.get(1) - 0.330240).abs() < 1e-5);
        assert!((s.get(0) + s.get(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matvec_identity_and_mismatch() {
        let v = vec64(&[1.0, -2.0, 3.5]);
        let id = Matrix::identity(3);
        assert_eq!(id.matvec(&v).unwrap(), v);
        let rect = Matrix::zeros(2, 4);
        assert!(rect.matvec(&v).is_err());
    }

    #[test]
    fn cosine_conventions() {
        let v = vec64(&[0.3, -0.4, 1.2]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let zero = Vector::zeros(3);
        assert_eq!(cosine(&zero, &v).unwrap(), 0.0);
    }

    #[test]
    fn construction_rejects_bad_values() {
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::INFINITY]).is_err());
    }
}
