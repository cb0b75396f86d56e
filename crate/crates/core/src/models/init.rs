//! Seeded parameter initialization.

use crate::grad::Tensor;
use crate::rng::Rng;

/// He-style fan-in-scaled uniform init: U(-b, b) with b = sqrt(6/fan_in).
/// A fan_in of 0 marks a bias and yields zeros.
pub fn he_uniform(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = if fan_in == 0 {
        vec![0.0f32; numel]
    } else {
        let bound = (6.0 / fan_in as f64).sqrt();
        (0..numel).map(|_| rng.uniform(-bound, bound) as f32).collect()
    };
    Tensor::new(shape, data).expect("init shapes are static")
}

/// Constant-filled tensor (used for modulation-scale biases, which start
/// at one so modulation begins as the identity).
pub fn constant(shape: &[usize], value: f32) -> Tensor {
    let numel: usize = shape.iter().product();
    Tensor::new(shape, vec![value; numel]).expect("init shapes are static")
}
