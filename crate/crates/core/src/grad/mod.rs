//! Reverse-mode differentiation over dense tensors.
//!
//! The operation set is the minimum needed to express a small
//! classification encoder, a mask-predicting separator conditioned through
//! per-channel affine modulation, the waveform-domain L1 training loss,
//! and softmax cross-entropy: matmul, zero-padded 2-D convolution (stride
//! 1 and 2), bias add, ReLU, sigmoid, elementwise add/multiply, global
//! mean pooling, affine feature modulation, mean-absolute-error, and
//! softmax cross-entropy, plus the shape plumbing (nearest 2x upsample,
//! crop, reshape) and the overlap-add fold that carries masked spectra
//! back to the time domain.

mod fd;
mod graph;
pub mod gradcheck;
mod kernels;
mod scalar;
mod tensor;

pub use fd::{finite_difference_check, FnField, GraphField, ScalarField};
pub use graph::{Bindings, Graph, NodeId};
pub use scalar::Scalar;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("shape mismatch at {node}: {detail}")]
    Shape { node: String, detail: String },
    #[error("leaf `{0}` is not bound")]
    UnboundLeaf(String),
    #[error("backpropagate called before evaluate")]
    BackwardBeforeForward,
    #[error("gradient buffer attached to a tensor with requires_grad = false")]
    FrozenGrad,
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn bind(pairs: Vec<(NodeId, Tensor)>) -> Bindings {
        pairs.into_iter().collect::<BTreeMap<_, _>>()
    }

    #[test]
    fn identity_graph_returns_input() {
        let mut g = Graph::new();
        let x = g.leaf("x", &[3], false);
        g.set_output(x);
        let out = g.evaluate(&bind(vec![(x, Tensor::from_vec(vec![1.0, 2.0, 3.0]))])).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn l1_loss_by_hand() {
        let mut g = Graph::new();
        let a = g.leaf("a", &[2], false);
        let b = g.leaf("b", &[2], false);
        let loss = g.mean_abs_err(a, b).unwrap();
        g.set_output(loss);
        let out = g
            .evaluate(&bind(vec![
                (a, Tensor::from_vec(vec![1.0, 0.0])),
                (b, Tensor::from_vec(vec![0.0, 0.0])),
            ]))
            .unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn matmul_matches_straight_line_oracle() {
        // hand-expanded 2x2 product: [[1,2],[3,4]]·[[5,6],[7,8]]
        let oracle = [
            1.0f32 * 5.0 + 2.0 * 7.0,
            1.0 * 6.0 + 2.0 * 8.0,
            3.0 * 5.0 + 4.0 * 7.0,
            3.0 * 6.0 + 4.0 * 8.0,
        ];
        let mut g = Graph::new();
        let a = g.leaf("a", &[2, 2], false);
        let b = g.leaf("b", &[2, 2], false);
        let c = g.matmul(a, b).unwrap();
        g.set_output(c);
        let out = g
            .evaluate(&bind(vec![
                (a, Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()),
                (b, Tensor::new(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap()),
            ]))
            .unwrap();
        assert_eq!(out.data(), &oracle);
        assert_eq!(oracle, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        // sum(x) expressed as 4·mean(|x − 0|) for positive x would bend the
        // rules; use matmul with a ones row vector instead.
        let mut g = Graph::new();
        let ones = g.constant("ones", &[1, 4], vec![1.0; 4]).unwrap();
        let x = g.leaf("x", &[4], true);
        let s = g.matmul(ones, x).unwrap();
        g.set_output(s);
        g.evaluate(&bind(vec![(x, Tensor::from_vec(vec![2.0, -1.0, 0.5, 3.0]))])).unwrap();
        let grads = g.backpropagate(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads[&x].data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn mean_abs_gradient_sign_over_length() {
        let mut g = Graph::new();
        let x = g.leaf("x", &[2], true);
        let zero = g.constant("zero", &[2], vec![0.0, 0.0]).unwrap();
        let loss = g.mean_abs_err(x, zero).unwrap();
        g.set_output(loss);
        g.evaluate(&bind(vec![(x, Tensor::from_vec(vec![2.0, -3.0]))])).unwrap();
        let grads = g.backpropagate(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads[&x].data(), &[0.5, -0.5]);
    }

    #[test]
    fn backward_before_forward_is_an_error() {
        let mut g = Graph::new();
        let x = g.leaf("x", &[2], true);
        g.set_output(x);
        let err = g.backpropagate(&Tensor::from_vec(vec![1.0, 1.0])).unwrap_err();
        assert!(matches!(err, GradError::BackwardBeforeForward));
    }

    #[test]
    fn unbound_leaf_is_named() {
        let mut g = Graph::new();
        let _x = g.leaf("mixture", &[4], false);
        let y = g.leaf("target", &[4], false);
        let out = g.relu(y);
        g.set_output(out);
        let err = g.evaluate(&bind(vec![(y, Tensor::zeros(&[4]))])).unwrap_err();
        assert!(err.to_string().contains("mixture"), "{err}");
    }

    #[test]
    fn binding_shape_mismatch_is_named() {
        let mut g = Graph::new();
        let x = g.leaf("probe", &[4], false);
        g.set_output(x);
        let err = g.evaluate(&bind(vec![(x, Tensor::zeros(&[3]))])).unwrap_err();
        assert!(err.to_string().contains("probe"), "{err}");
    }

    #[test]
    fn frozen_leaves_get_no_gradient_entry() {
        let mut g = Graph::new();
        let x = g.leaf("x", &[2], true);
        let w = g.leaf("w", &[2], false);
        let p = g.mul(x, w).unwrap();
        let zero = g.constant("zero", &[2], vec![0.0; 2]).unwrap();
        let loss = g.mean_abs_err(p, zero).unwrap();
        g.set_output(loss);
        let w_t = Tensor::from_vec(vec![3.0, -4.0]);
        let before = w_t.clone();
        g.evaluate(&bind(vec![(x, Tensor::from_vec(vec![1.0, 2.0])), (w, w_t.clone())])).unwrap();
        let grads = g.backpropagate(&Tensor::scalar(1.0)).unwrap();
        assert!(grads.contains_key(&x));
        assert!(!grads.contains_key(&w));
        assert_eq!(w_t, before); // frozen binding untouched
    }

    #[test]
    fn constant_function_fd_error_is_zero() {
        let mut f = FnField { value_fn: |_x: &[f64]| 7.5, grad_fn: |x: &[f64]| vec![0.0; x.len()] };
        let x = Tensor::from_vec(vec![0.3, -0.8, 2.0]);
        let err = finite_difference_check(&mut f, &x, 1e-3).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn sum_of_squares_fd_check() {
        let mut f = FnField {
            value_fn: |x: &[f64]| x.iter().map(|v| v * v).sum(),
            grad_fn: |x: &[f64]| x.iter().map(|v| 2.0 * v).collect(),
        };
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let err = finite_difference_check(&mut f, &x, 1e-3).unwrap();
        assert!(err < 1e-6, "error {err}");
    }

    #[test]
    fn evaluation_is_bitwise_deterministic() {
        let mut g = Graph::new();
        let x = g.leaf("x", &[3], true);
        let w = g.leaf("w", &[3], false);
        let h = g.mul(x, w).unwrap();
        let s = g.sigmoid(h);
        let zero = g.constant("zero", &[3], vec![0.0; 3]).unwrap();
        let loss = g.mean_abs_err(s, zero).unwrap();
        g.set_output(loss);
        let b = bind(vec![
            (x, Tensor::from_vec(vec![0.1, -0.7, 0.33])),
            (w, Tensor::from_vec(vec![1.5, 2.5, -0.25])),
        ]);
        let o1 = g.evaluate(&b).unwrap();
        let g1 = g.backpropagate(&Tensor::scalar(1.0)).unwrap();
        let o2 = g.evaluate(&b).unwrap();
        let g2 = g.backpropagate(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(o1.data()[0].to_bits(), o2.data()[0].to_bits());
        for (a, b) in g1[&x].data().iter().zip(g2[&x].data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
