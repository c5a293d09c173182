//! Dense row-major 64-bit tensors.

use crate::error::{NodaError, Result};

/// n-dimensional real array. Every constructor and operation rejects
/// NaN/Inf entries: a non-finite value anywhere is an error state.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NodaError::Dim(format!(
                "shape {:?} wants {} entries, got {}",
                shape,
                n,
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.check_finite("new")?;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![1], data: vec![x] }
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Tensor { shape: vec![v.len()], data: v }
    }

    /// Stacks equal-length rows into a `[rows, cols]` matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(NodaError::Contract("from_rows: no rows".into()));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(NodaError::Dim("from_rows: ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True for shape `[]` or `[1]`.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.len() <= 1
    }

    /// The sole entry of a scalar tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(NodaError::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = *self.shape.last().expect("row() on rank-0 tensor");
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(NodaError::NonFinite(context.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_shape_mismatch() {
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0]),
            Err(NodaError::Dim(_))
        ));
    }

    #[test]
    fn new_rejects_non_finite() {
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(NodaError::NonFinite(_))
        ));
        assert!(matches!(
            Tensor::new(vec![1], vec![f64::INFINITY]),
            Err(NodaError::NonFinite(_))
        ));
    }

    #[test]
    fn scalar_roundtrip() {
        let t = Tensor::scalar(4.25);
        assert!(t.is_scalar());
        assert_eq!(t.item().unwrap(), 4.25);
    }

    #[test]
    fn from_rows_shapes() {
        let t = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.row(1), &[3.0, 4.0]);
    }
}
