//! Central finite-difference verification of analytic gradients.
//!
//! Both the analytic gradient and the probe evaluations run at f64
//! precision through the same kernels as the production f32 path; at f32
//! the difference quotient's rounding-noise floor (ε·|f| / step) would sit
//! orders of magnitude above the 1e-4 agreement bar this check enforces.

use std::collections::BTreeMap;

use super::graph::{Bindings, Graph, NodeId};
use super::tensor::Tensor;
use super::GradError;

/// A scalar-valued differentiable function of one tensor argument.
pub trait ScalarField {
    fn value(&mut self, x: &[f64]) -> Result<f64, GradError>;
    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>, GradError>;
}

/// Max over coordinates of the guarded relative disagreement between the
/// analytic gradient and central differences with the given step.
pub fn finite_difference_check(
    f: &mut dyn ScalarField,
    x: &Tensor,
    step: f64,
) -> Result<f64, GradError> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let x0: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let analytic = f.gradient(&x0)?;
    assert_eq!(analytic.len(), x0.len(), "gradient length mismatch");

    let mut worst = 0.0f64;
    let mut probe = x0.clone();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = f.value(&probe)?;
        probe[i] = orig - step;
        let down = f.value(&probe)?;
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(GradError::NonFinite(format!("f(x ± step·e_{i})")));
        }
        let central = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(central.abs()).max(1e-8);
        worst = worst.max((analytic[i] - central).abs() / denom);
    }
    Ok(worst)
}

/// `ScalarField` view of one scalar-output graph, probed along one leaf.
/// All other leaves stay fixed at their bound values.
pub struct GraphField<'g> {
    graph: &'g Graph,
    base: BTreeMap<NodeId, Vec<f64>>,
    probe: NodeId,
}

impl<'g> GraphField<'g> {
    pub fn new(graph: &'g Graph, bindings: &Bindings, probe: NodeId) -> Result<Self, GradError> {
        let out = graph.output().ok_or(GradError::BackwardBeforeForward)?;
        if graph.node_shape(out) != [1] {
            return Err(GradError::Shape {
                node: "graph output".into(),
                detail: format!("finite differences need a scalar output, got {:?}", graph.node_shape(out)),
            });
        }
        if !graph.is_trainable_leaf(probe) {
            return Err(GradError::Shape {
                node: format!("leaf {probe}"),
                detail: "probe leaf must be trainable".into(),
            });
        }
        let base = bindings
            .iter()
            .map(|(&id, t)| (id, t.data().iter().map(|&v| v as f64).collect()))
            .collect();
        Ok(GraphField { graph, base, probe })
    }

    fn values_at(&mut self, x: &[f64]) -> Result<Vec<Vec<f64>>, GradError> {
        self.base.insert(self.probe, x.to_vec());
        self.graph.eval_f64(&self.base)
    }
}

impl<'g> ScalarField for GraphField<'g> {
    fn value(&mut self, x: &[f64]) -> Result<f64, GradError> {
        let values = self.values_at(x)?;
        let out = self.graph.output().expect("checked in new");
        Ok(values[out][0])
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>, GradError> {
        let values = self.values_at(x)?;
        let grads = self.graph.backward_f64(&values, &[1.0])?;
        Ok(grads.get(&self.probe).cloned().unwrap_or_else(|| vec![0.0; x.len()]))
    }
}

/// Convenience wrapper for checking closures (used heavily in tests).
pub struct FnField<V, G>
where
    V: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    pub value_fn: V,
    pub grad_fn: G,
}

impl<V, G> ScalarField for FnField<V, G>
where
    V: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    fn value(&mut self, x: &[f64]) -> Result<f64, GradError> {
        Ok((self.value_fn)(x))
    }
    fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>, GradError> {
        Ok((self.grad_fn)(x))
    }
}
