use crate::{Scalar, TensorError, TensorResult};

/// Dense row-major n-dimensional array.
///
/// The shape is fixed at construction. `grad`, when present, always has the
/// same length as `values`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    values: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

fn check_shape(shape: &[usize]) -> TensorResult<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape { shape: shape.to_vec() });
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> TensorResult<Self> {
        let expected = check_shape(&shape)?;
        if expected != values.len() {
            return Err(TensorError::DataLength {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> TensorResult<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn ones(shape: Vec<usize>) -> TensorResult<Self> {
        Self::filled(shape, T::one())
    }

    pub fn filled(shape: Vec<usize>, value: T) -> TensorResult<Self> {
        let n = check_shape(&shape)?;
        Self::new(shape, vec![value; n])
    }

    /// Single-element tensor of shape `[1]`.
    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            values: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Builds a `[rows × cols]` matrix from nested rows.
    pub fn from_rows(rows: &[Vec<T>]) -> TensorResult<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(TensorError::DataLength {
                expected: cols,
                got: bad.len(),
            });
        }
        Self::new(vec![rows.len(), cols], rows.iter().flatten().copied().collect())
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mutable access to the values. The shape cannot change through this.
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> TensorResult<()> {
        if grad.len() != self.values.len() {
            return Err(TensorError::DataLength {
                expected: self.values.len(),
                got: grad.len(),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Rows of a tensor viewed as a matrix over its last axis.
    pub fn rows(&self) -> usize {
        self.values.len() / self.cols()
    }

    /// Length of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    /// Same values under a different shape with identical element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> TensorResult<Self> {
        Self::new(shape, self.values.clone())
    }

    /// Element-type conversion; gradient state is dropped.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Two-dimensional `(rows, cols)` or a shape error naming `op`.
    pub(crate) fn matrix_dims(&self, op: &'static str) -> TensorResult<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: vec![],
            }),
        }
    }
}
