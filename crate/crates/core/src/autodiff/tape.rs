//! Vector-level reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. Parameters are
//! never copied onto the tape: affine nodes refer to them by [`ParamId`] and
//! read them from the [`ParamStore`] passed in at forward and backward time.
//! Gradients for parameters are *added* to the store's accumulators.

use std::sync::atomic::{AtomicU64, Ordering};

use super::params::{ParamId, ParamStore};
use super::tensor::{affine, bce_with_logit, sigmoid, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(0);

/// Handle to a node on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Affine { w: ParamId, b: ParamId, x: usize },
    Add(usize, usize),
    Concat(usize, usize),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Scale(usize, f64),
    /// Sum of element-wise logistic losses; `targets` matches the input length.
    BceWithLogits { logits: usize, targets: Vec<f64> },
    /// `sum((x - target)^2)`.
    SquaredError { x: usize, targets: Vec<f64> },
    /// Sum of scalar nodes.
    Sum(Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn index(&self, node: NodeId) -> Result<usize> {
        if node.tape != self.id || node.index >= self.nodes.len() {
            return Err(Error::Contract(format!(
                "node {} is not on tape {}",
                node.index, self.id
            )));
        }
        Ok(node.index)
    }

    // Node handles produced by this tape are always valid for it, so the
    // builder methods below index directly after one ownership check.
    fn own(&self, node: NodeId) -> usize {
        self.index(node).expect("node belongs to a different tape")
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[self.own(node)].value
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, params: &ParamStore, id: ParamId) -> NodeId {
        self.push(params.value(id).clone(), Op::Param(id))
    }

    /// `W x + b`. Shapes are checked by the caller (see `Mlp`).
    pub fn affine(&mut self, params: &ParamStore, w: ParamId, b: ParamId, x: NodeId) -> NodeId {
        let xi = self.own(x);
        let out = affine(
            params.value(w).data(),
            params.value(b).data(),
            self.nodes[xi].value.data(),
        );
        self.push(Tensor::vector(out), Op::Affine { w, b, x: xi })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ai, bi) = (self.own(a), self.own(b));
        let out = self.nodes[ai]
            .value
            .data()
            .iter()
            .zip(self.nodes[bi].value.data())
            .map(|(x, y)| x + y)
            .collect();
        self.push(Tensor::vector(out), Op::Add(ai, bi))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ai, bi) = (self.own(a), self.own(b));
        let mut out = self.nodes[ai].value.data().to_vec();
        out.extend_from_slice(self.nodes[bi].value.data());
        self.push(Tensor::vector(out), Op::Concat(ai, bi))
    }

    fn map(&mut self, a: NodeId, f: fn(f64) -> f64, op: fn(usize) -> Op) -> NodeId {
        let ai = self.own(a);
        let out = self.nodes[ai].value.data().iter().map(|&v| f(v)).collect();
        self.push(Tensor::vector(out), op(ai))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::tanh, Op::Tanh)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map(a, |v| v.max(0.0), Op::Relu)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, sigmoid, Op::Sigmoid)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let ai = self.own(a);
        let out = self.nodes[ai]
            .value
            .data()
            .iter()
            .map(|v| v * factor)
            .collect::<Vec<_>>();
        let shape = self.nodes[ai].value.shape().to_vec();
        let value = Tensor::new(shape, out).expect("scale preserves shape");
        self.push(value, Op::Scale(ai, factor))
    }

    pub fn bce_with_logits(&mut self, logits: NodeId, targets: &[f64]) -> Result<NodeId> {
        let li = self.index(logits)?;
        let z = self.nodes[li].value.data();
        if z.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} logits against {} targets",
                z.len(),
                targets.len()
            )));
        }
        let loss = z
            .iter()
            .zip(targets)
            .map(|(&z, &y)| bce_with_logit(z, y))
            .sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits: li,
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn squared_error(&mut self, x: NodeId, targets: &[f64]) -> Result<NodeId> {
        let xi = self.index(x)?;
        let v = self.nodes[xi].value.data();
        if v.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} outputs against {} targets",
                v.len(),
                targets.len()
            )));
        }
        let loss = v.iter().zip(targets).map(|(a, t)| (a - t) * (a - t)).sum();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SquaredError {
                x: xi,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Sum of scalar nodes. An empty list yields the constant 0.
    pub fn sum(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let mut idx = Vec::with_capacity(terms.len());
        let mut total = 0.0;
        for &t in terms {
            let i = self.index(t)?;
            if !self.nodes[i].value.is_scalar() {
                return Err(Error::Contract("sum expects scalar terms".into()));
            }
            total += self.nodes[i].value.data()[0];
            idx.push(i);
        }
        Ok(self.push(Tensor::scalar(total), Op::Sum(idx)))
    }

    /// Propagates `d(loss)/d(node)` back through the tape and adds parameter
    /// gradients into `params`.
    pub fn backward(&self, loss: NodeId, params: &mut ParamStore) -> Result<()> {
        let li = self.index(loss)?;
        if !self.nodes[li].value.is_scalar() {
            return Err(Error::Contract(format!(
                "loss node has shape {:?}, expected a scalar",
                self.nodes[li].value.shape()
            )));
        }
        for node in &self.nodes[..=li] {
            let ids: &[ParamId] = match &node.op {
                Op::Param(p) => std::slice::from_ref(p),
                Op::Affine { w, b, .. } => &[*w, *b],
                _ => &[],
            };
            if let Some(p) = ids.iter().find(|p| !params.contains(**p)) {
                return Err(Error::Contract(format!(
                    "tape refers to parameter #{} missing from the store",
                    p.0
                )));
            }
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; li + 1];
        grads[li] = Some(vec![1.0]);

        fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
            slot.get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    for (acc, gi) in params.grad_mut(*p).data_mut().iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
                Op::Affine { w, b, x } => {
                    let xv = self.nodes[*x].value.data();
                    let cols = xv.len();
                    {
                        let (wv, wg) = params.value_and_grad_mut(*w);
                        let gx = accumulate(&mut grads[*x], cols);
                        let wv = wv.data();
                        let wg = wg.data_mut();
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            let row = r * cols;
                            for c in 0..cols {
                                wg[row + c] += gr * xv[c];
                                gx[c] += gr * wv[row + c];
                            }
                        }
                    }
                    for (acc, gi) in params.grad_mut(*b).data_mut().iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
                Op::Add(a, b) => {
                    for &k in &[*a, *b] {
                        let ga = accumulate(&mut grads[k], g.len());
                        ga.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
                    }
                }
                Op::Concat(a, b) => {
                    let na = self.nodes[*a].value.len();
                    let ga = accumulate(&mut grads[*a], na);
                    ga.iter_mut().zip(&g[..na]).for_each(|(s, v)| *s += v);
                    let nb = self.nodes[*b].value.len();
                    let gb = accumulate(&mut grads[*b], nb);
                    gb.iter_mut().zip(&g[na..]).for_each(|(s, v)| *s += v);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let ga = accumulate(&mut grads[*a], g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * (1.0 - y[k] * y[k]);
                    }
                }
                Op::Relu(a) => {
                    let x = self.nodes[*a].value.data();
                    let ga = accumulate(&mut grads[*a], g.len());
                    for k in 0..g.len() {
                        if x[k] > 0.0 {
                            ga[k] += g[k];
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let ga = accumulate(&mut grads[*a], g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * y[k] * (1.0 - y[k]);
                    }
                }
                Op::Scale(a, f) => {
                    let ga = accumulate(&mut grads[*a], g.len());
                    ga.iter_mut().zip(&g).for_each(|(s, v)| *s += v * f);
                }
                Op::BceWithLogits { logits, targets } => {
                    let z = self.nodes[*logits].value.data();
                    let ga = accumulate(&mut grads[*logits], z.len());
                    for k in 0..z.len() {
                        ga[k] += g[0] * (sigmoid(z[k]) - targets[k]);
                    }
                }
                Op::SquaredError { x, targets } => {
                    let v = self.nodes[*x].value.data();
                    let ga = accumulate(&mut grads[*x], v.len());
                    for k in 0..v.len() {
                        ga[k] += g[0] * 2.0 * (v[k] - targets[k]);
                    }
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        accumulate(&mut grads[t], 1)[0] += g[0];
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut p = ParamStore::new(0);
        let id = p.insert(name, Tensor::vector(values)).unwrap();
        (p, id)
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let (mut p, id) = store_with("w", vec![1.0, -2.0]);
        let mut tape = Tape::new();
        let _w = tape.param(&p, id);
        let c = tape.constant(Tensor::vector(vec![3.0]));
        let loss = tape.squared_error(c, &[1.0]).unwrap();
        tape.backward(loss, &mut p).unwrap();
        assert_eq!(p.grad(id).data(), &[0.0, 0.0]);
    }

    #[test]
    fn sum_of_squares_gradient_is_two_w() {
        let (mut p, id) = store_with("w", vec![0.5, -1.5, 3.0]);
        let mut tape = Tape::new();
        let w = tape.param(&p, id);
        let loss = tape.squared_error(w, &[0.0, 0.0, 0.0]).unwrap();
        tape.backward(loss, &mut p).unwrap();
        assert_eq!(p.grad(id).data(), &[1.0, -3.0, 6.0]);
    }

    #[test]
    fn two_backward_passes_accumulate_twice() {
        let (mut p, id) = store_with("w", vec![0.25, 2.0]);
        let mut tape = Tape::new();
        let w = tape.param(&p, id);
        let t = tape.tanh(w);
        let loss = tape.bce_with_logits(t, &[1.0, 0.0]).unwrap();
        tape.backward(loss, &mut p).unwrap();
        let once = p.grad(id).data().to_vec();
        tape.backward(loss, &mut p).unwrap();
        for (a, b) in p.grad(id).data().iter().zip(&once) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let (mut p, id) = store_with("w", vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let w = tape.param(&p, id);
        assert!(matches!(tape.backward(w, &mut p), Err(Error::Contract(_))));
    }

    #[test]
    fn foreign_node_is_rejected() {
        let (mut p, _) = store_with("w", vec![1.0]);
        let mut other = Tape::new();
        let c = other.constant(Tensor::scalar(1.0));
        let tape = Tape::new();
        assert!(matches!(tape.backward(c, &mut p), Err(Error::Contract(_))));
    }
}
