//! Dense row-major tensors holding 32-bit floats.

use super::GradError;

/// A dense tensor: shape, row-major f32 data, and an optional gradient
/// buffer. The gradient buffer may only exist while `requires_grad` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    /// Build a tensor from shape and data. `product(shape)` must equal
    /// `data.len()` and every dimension must be positive.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self, GradError> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || numel != data.len() {
            return Err(GradError::Shape {
                node: "tensor".into(),
                detail: format!("shape {:?} does not hold {} elements", shape, data.len()),
            });
        }
        Ok(Tensor { shape: shape.to_vec(), data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel], requires_grad: false, grad: None }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor { shape: vec![1], data: vec![v], requires_grad: false, grad: None }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        Tensor { shape: vec![data.len()], data, requires_grad: false, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the values; the shape cannot change through this.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Toggle trainability. Dropping trainability discards any gradient so
    /// the "frozen tensors never hold a grad buffer" invariant holds.
    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Attach a gradient buffer. Rejected for frozen tensors and for
    /// mismatched lengths.
    pub fn attach_grad(&mut self, grad: Vec<f32>) -> Result<(), GradError> {
        if !self.requires_grad {
            return Err(GradError::FrozenGrad);
        }
        if grad.len() != self.data.len() {
            return Err(GradError::Shape {
                node: "tensor.grad".into(),
                detail: format!("grad length {} vs data length {}", grad.len(), self.data.len()),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}
