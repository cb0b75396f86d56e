//! Finite-difference battery over every primitive operation.
//!
//! Each case wires one primitive into a tiny graph, reduces its output to
//! a scalar through a fixed random linear functional, and compares the
//! analytic gradient of a trainable probe leaf against central
//! differences. Probe values for operations with subgradient kinks (ReLU,
//! the L1 reduction) are sampled away from the kink, since no finite step
//! resolves a derivative jump.

use std::collections::BTreeMap;

use crate::rng::Rng;

use super::fd::{finite_difference_check, GraphField};
use super::graph::{Bindings, Graph, NodeId};
use super::tensor::Tensor;
use super::GradError;

/// Worst relative finite-difference disagreement seen for one primitive.
#[derive(Debug, Clone)]
pub struct OpCheck {
    pub op: &'static str,
    pub worst: f64,
}

/// Run `trials` seeded trials per primitive with the given step; returns
/// the worst disagreement per op. Intended bar: every entry < 1e-4.
pub fn check_primitive_ops(trials: usize, step: f64, seed: u64) -> Result<Vec<OpCheck>, GradError> {
    let mut results = Vec::new();
    let cases: Vec<(&'static str, CaseFn)> = vec![
        ("matmul_lhs", case_matmul_lhs),
        ("matmul_rhs", case_matmul_rhs),
        ("matvec", case_matvec),
        ("conv2d_s1_input", case_conv_s1_input),
        ("conv2d_s1_kernel", case_conv_s1_kernel),
        ("conv2d_s2_input", case_conv_s2_input),
        ("conv2d_s2_kernel", case_conv_s2_kernel),
        ("bias_add", case_bias_add),
        ("relu", case_relu),
        ("sigmoid", case_sigmoid),
        ("add", case_add),
        ("mul", case_mul),
        ("global_mean", case_global_mean),
        ("film_input", case_film_input),
        ("film_scale_shift", case_film_scale_shift),
        ("mean_abs_err", case_mean_abs_err),
        ("softmax_xent", case_softmax_xent),
        ("upsample2x", case_upsample2x),
        ("crop2d", case_crop2d),
        ("reshape", case_reshape),
        ("overlap_add", case_overlap_add),
    ];
    for (name, case) in cases {
        let mut rng = Rng::new(crate::rng::derive_seed(seed, hash_name(name)));
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let built = case(&mut rng)?;
            let mut field = GraphField::new(&built.graph, &built.bindings, built.probe)?;
            let probe_tensor = built.bindings.get(&built.probe).expect("probe bound");
            let err = finite_difference_check(&mut field, probe_tensor, step)?;
            worst = worst.max(err);
        }
        results.push(OpCheck { op: name, worst });
    }
    Ok(results)
}

fn hash_name(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x1000_0000_01b3)
    })
}

struct BuiltCase {
    graph: Graph,
    bindings: Bindings,
    probe: NodeId,
}

type CaseFn = fn(&mut Rng) -> Result<BuiltCase, GradError>;

fn uniform_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f32> {
    (0..n).map(|_| rng.uniform(lo, hi) as f32).collect()
}

/// Uniform in ±[margin, 1]: keeps kinked ops away from their kink.
fn off_kink_vec(rng: &mut Rng, n: usize, margin: f64) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let mag = rng.uniform(margin, 1.0);
            let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
            (mag * sign) as f32
        })
        .collect()
}

/// Reduce any node to a scalar through a fixed random linear functional.
fn reduce(g: &mut Graph, rng: &mut Rng, node: NodeId) -> Result<NodeId, GradError> {
    let numel: usize = g.node_shape(node).iter().product();
    let flat = if g.node_shape(node).len() == 1 { node } else { g.reshape(node, &[numel])? };
    let row = g.constant("reduce_row", &[1, numel], uniform_vec(rng, numel, -1.0, 1.0))?;
    let out = g.matmul(row, flat)?;
    g.set_output(out);
    Ok(out)
}

fn finish(
    mut graph: Graph,
    rng: &mut Rng,
    last: NodeId,
    probe: NodeId,
    bindings: Vec<(NodeId, Tensor)>,
) -> Result<BuiltCase, GradError> {
    reduce(&mut graph, rng, last)?;
    Ok(BuiltCase { graph, bindings: bindings.into_iter().collect::<BTreeMap<_, _>>(), probe })
}

fn case_matmul_lhs(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let a = g.leaf("a", &[3, 4], true);
    let b = g.constant("b", &[4, 2], uniform_vec(rng, 8, -1.0, 1.0))?;
    let c = g.matmul(a, b)?;
    let a_t = Tensor::new(&[3, 4], uniform_vec(rng, 12, -1.0, 1.0))?;
    finish(g, rng, c, a, vec![(a, a_t)])
}

fn case_matmul_rhs(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let a = g.constant("a", &[3, 4], uniform_vec(rng, 12, -1.0, 1.0))?;
    let b = g.leaf("b", &[4, 2], true);
    let c = g.matmul(a, b)?;
    let b_t = Tensor::new(&[4, 2], uniform_vec(rng, 8, -1.0, 1.0))?;
    finish(g, rng, c, b, vec![(b, b_t)])
}

fn case_matvec(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let a = g.constant("a", &[5, 6], uniform_vec(rng, 30, -1.0, 1.0))?;
    let x = g.leaf("x", &[6], true);
    let y = g.matmul(a, x)?;
    let x_t = Tensor::from_vec(uniform_vec(rng, 6, -1.0, 1.0));
    finish(g, rng, y, x, vec![(x, x_t)])
}

fn conv_case(rng: &mut Rng, stride: usize, probe_kernel: bool) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let (ci, h, w, co) = (2, 6, 7, 3);
    let x = g.leaf("x", &[ci, h, w], !probe_kernel);
    let k = g.leaf("k", &[co, ci, 3, 3], probe_kernel);
    let y = g.conv2d(x, k, stride, 1)?;
    let x_t = Tensor::new(&[ci, h, w], uniform_vec(rng, ci * h * w, -1.0, 1.0))?;
    let k_t = Tensor::new(&[co, ci, 3, 3], uniform_vec(rng, co * ci * 9, -1.0, 1.0))?;
    let probe = if probe_kernel { k } else { x };
    finish(g, rng, y, probe, vec![(x, x_t), (k, k_t)])
}

fn case_conv_s1_input(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    conv_case(rng, 1, false)
}
fn case_conv_s1_kernel(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    conv_case(rng, 1, true)
}
fn case_conv_s2_input(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    conv_case(rng, 2, false)
}
fn case_conv_s2_kernel(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    conv_case(rng, 2, true)
}

fn case_bias_add(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.constant("x", &[3, 4, 5], uniform_vec(rng, 60, -1.0, 1.0))?;
    let b = g.leaf("b", &[3], true);
    let y = g.bias_add(x, b)?;
    let b_t = Tensor::from_vec(uniform_vec(rng, 3, -1.0, 1.0));
    finish(g, rng, y, b, vec![(b, b_t)])
}

fn case_relu(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.leaf("x", &[24], true);
    let y = g.relu(x);
    let x_t = Tensor::from_vec(off_kink_vec(rng, 24, 0.05));
    finish(g, rng, y, x, vec![(x, x_t)])
}

fn case_sigmoid(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.leaf("x", &[24], true);
    let y = g.sigmoid(x);
    let x_t = Tensor::from_vec(uniform_vec(rng, 24, -2.0, 2.0));
    finish(g, rng, y, x, vec![(x, x_t)])
}

fn case_add(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let a = g.leaf("a", &[18], true);
    let b = g.constant("b", &[18], uniform_vec(rng, 18, -1.0, 1.0))?;
    let y = g.add(a, b)?;
    let a_t = Tensor::from_vec(uniform_vec(rng, 18, -1.0, 1.0));
    finish(g, rng, y, a, vec![(a, a_t)])
}

fn case_mul(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let a = g.leaf("a", &[18], true);
    let b = g.constant("b", &[18], uniform_vec(rng, 18, -1.0, 1.0))?;
    let y = g.mul(a, b)?;
    let a_t = Tensor::from_vec(uniform_vec(rng, 18, -1.0, 1.0));
    finish(g, rng, y, a, vec![(a, a_t)])
}

fn case_global_mean(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.leaf("x", &[3, 5, 4], true);
    let y = g.global_mean(x)?;
    let x_t = Tensor::new(&[3, 5, 4], uniform_vec(rng, 60, -1.0, 1.0))?;
    finish(g, rng, y, x, vec![(x, x_t)])
}

fn film_case(rng: &mut Rng, probe_which: usize) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.leaf("x", &[3, 4, 5], probe_which == 0);
    let s = g.leaf("s", &[3], probe_which == 1);
    let t = g.leaf("t", &[3], probe_which == 2);
    let y = g.film(x, s, t)?;
    let x_t = Tensor::new(&[3, 4, 5], uniform_vec(rng, 60, -1.0, 1.0))?;
    let s_t = Tensor::from_vec(uniform_vec(rng, 3, -1.0, 1.0));
    let t_t = Tensor::from_vec(uniform_vec(rng, 3, -1.0, 1.0));
    let probe = [x, s, t][probe_which];
    finish(g, rng, y, probe, vec![(x, x_t), (s, s_t), (t, t_t)])
}

fn case_film_input(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    film_case(rng, 0)
}

fn case_film_scale_shift(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    // scale and shift gradients exercised on alternating trials
    let which = 1 + (rng.next_u64() & 1) as usize;
    film_case(rng, which)
}

fn case_mean_abs_err(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let a = g.leaf("a", &[30], true);
    // keep |a − b| ≥ margin so the probe step cannot cross the kink
    let a_vals = off_kink_vec(rng, 30, 0.1);
    let b_vals: Vec<f32> = a_vals.iter().map(|&v| if v > 0.0 { v - 0.08 } else { v + 0.08 }).collect();
    let b = g.constant("b", &[30], b_vals)?;
    let loss = g.mean_abs_err(a, b)?;
    g.set_output(loss);
    let bindings: Bindings = [(a, Tensor::from_vec(a_vals))].into_iter().collect();
    Ok(BuiltCase { graph: g, bindings, probe: a })
}

fn case_softmax_xent(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.leaf("logits", &[8], true);
    let target = rng.below(8);
    let loss = g.softmax_xent(x, target)?;
    g.set_output(loss);
    let x_t = Tensor::from_vec(uniform_vec(rng, 8, -2.0, 2.0));
    let bindings: Bindings = [(x, x_t)].into_iter().collect();
    Ok(BuiltCase { graph: g, bindings, probe: x })
}

fn case_upsample2x(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.leaf("x", &[2, 3, 4], true);
    let y = g.upsample2x(x)?;
    let x_t = Tensor::new(&[2, 3, 4], uniform_vec(rng, 24, -1.0, 1.0))?;
    finish(g, rng, y, x, vec![(x, x_t)])
}

fn case_crop2d(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.leaf("x", &[2, 6, 7], true);
    let y = g.crop2d(x, 5, 5)?;
    let x_t = Tensor::new(&[2, 6, 7], uniform_vec(rng, 84, -1.0, 1.0))?;
    finish(g, rng, y, x, vec![(x, x_t)])
}

fn case_reshape(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let x = g.leaf("x", &[3, 4], true);
    let y = g.reshape(x, &[2, 6])?;
    let x_t = Tensor::new(&[3, 4], uniform_vec(rng, 12, -1.0, 1.0))?;
    finish(g, rng, y, x, vec![(x, x_t)])
}

fn case_overlap_add(rng: &mut Rng) -> Result<BuiltCase, GradError> {
    let mut g = Graph::new();
    let (n_frames, frame_len, hop) = (5, 16, 4);
    let padded = (n_frames - 1) * hop + frame_len;
    // synthetic squared-window overlap profile, bounded away from zero
    let norm: Vec<f32> = (0..padded).map(|i| 0.5 + 0.4 * ((i as f32 * 0.37).sin().abs())).collect();
    let x = g.leaf("frames", &[n_frames, frame_len], true);
    let y = g.overlap_add(x, hop, norm, 3, padded - 6)?;
    let x_t = Tensor::new(&[n_frames, frame_len], uniform_vec(rng, n_frames * frame_len, -1.0, 1.0))?;
    finish(g, rng, y, x, vec![(x, x_t)])
}
