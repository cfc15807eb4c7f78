use std::collections::BTreeMap;

use super::graph::{Graph, NodeId, Op};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradEntry {
    /// Graph handle of the gradient, present when the backward pass was
    /// recorded (`build_higher_order = true`).
    pub node: Option<NodeId>,
    pub tensor: Tensor,
}

/// Gradients of one scalar output with respect to requested nodes. Every
/// requested node has an entry; non-ancestors get zeros.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    entries: BTreeMap<NodeId, GradEntry>,
}

impl GradientMap {
    pub fn tensor(&self, wrt: NodeId) -> &Tensor {
        &self.entries[&wrt].tensor
    }

    pub fn node(&self, wrt: NodeId) -> Option<NodeId> {
        self.entries[&wrt].node
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &GradEntry)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Graph {
    /// Reverse-mode gradients of the scalar `output` with respect to `wrt`.
    ///
    /// With `build_higher_order = true` the vector-Jacobian products stay on
    /// the graph as ordinary nodes, so an expression built from the returned
    /// gradient nodes can itself be differentiated. With `false`, the nodes
    /// appended by this pass are discarded after the gradient tensors are
    /// extracted, leaving the graph exactly as long as before the call.
    pub fn backward(
        &mut self,
        output: NodeId,
        wrt: &[NodeId],
        build_higher_order: bool,
    ) -> Result<GradientMap> {
        let base_len = self.nodes.len();
        let result = self.backward_inner(output, wrt, build_higher_order, base_len);
        if result.is_err() && !build_higher_order {
            self.nodes.truncate(base_len);
        }
        result
    }

    fn backward_inner(
        &mut self,
        output: NodeId,
        wrt: &[NodeId],
        build_higher_order: bool,
        base_len: usize,
    ) -> Result<GradientMap> {
        if output >= base_len {
            return Err(Error::contract(format!("output node {output} out of range")));
        }
        if !self.value(output).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        for &w in wrt {
            if w >= base_len {
                return Err(Error::contract(format!("wrt node {w} out of range")));
            }
        }

        // A node's adjoint matters only if it lies on a path from a wrt node
        // to the output: it must be an ancestor of the output AND depend on
        // some wrt node. Pruning on the second half skips, for example, the
        // weight-gradient GEMMs when only an input gradient is requested.
        let mut anc = vec![false; base_len];
        anc[output] = true;
        let mut stack = vec![output];
        while let Some(id) = stack.pop() {
            for &p in &self.nodes[id].parents {
                if !anc[p] {
                    anc[p] = true;
                    stack.push(p);
                }
            }
        }
        let mut dep = vec![false; base_len];
        for &w in wrt {
            dep[w] = true;
        }
        for id in 0..base_len {
            if !dep[id] && self.nodes[id].parents.iter().any(|&p| dep[p]) {
                dep[id] = true;
            }
        }
        let needed: Vec<bool> = (0..base_len).map(|i| anc[i] && dep[i]).collect();

        let mut adjoint: Vec<Option<NodeId>> = vec![None; base_len];
        if needed[output] {
            let one = Tensor::filled(self.value(output).shape().to_vec(), 1.0);
            adjoint[output] = Some(self.leaf(one));
        }

        for id in (0..=output).rev() {
            if !needed[id] {
                continue;
            }
            let Some(g) = adjoint[id] else { continue };
            let op = self.nodes[id].op.clone();
            let parents = self.nodes[id].parents.clone();
            let want: Vec<bool> = parents.iter().map(|&p| needed[p]).collect();
            let contribs = self.vjp(&op, &parents, id, g, &want)?;
            for (slot, contrib) in contribs.into_iter().enumerate() {
                let Some(c) = contrib else { continue };
                let p = parents[slot];
                adjoint[p] = Some(match adjoint[p] {
                    None => c,
                    Some(prev) => self.add(prev, c)?,
                });
            }
        }

        let mut entries = BTreeMap::new();
        for &w in wrt {
            let (node, tensor) = match adjoint[w] {
                Some(gid) => (Some(gid), self.value(gid).clone()),
                None => {
                    let zeros = Tensor::zeros(self.value(w).shape().to_vec());
                    let nid = if build_higher_order { Some(self.leaf(zeros.clone())) } else { None };
                    (nid, zeros)
                }
            };
            entries.insert(w, GradEntry { node, tensor });
        }

        if !build_higher_order {
            self.nodes.truncate(base_len);
            for e in entries.values_mut() {
                e.node = None;
            }
        }
        Ok(GradientMap { entries })
    }

    /// Per-parent gradient contributions of one node, as new graph nodes.
    /// `want[k] == false` skips the work for parent `k` entirely.
    fn vjp(
        &mut self,
        op: &Op,
        parents: &[NodeId],
        out_id: NodeId,
        g: NodeId,
        want: &[bool],
    ) -> Result<Vec<Option<NodeId>>> {
        let mut out: Vec<Option<NodeId>> = vec![None; parents.len()];
        match op {
            Op::Leaf => {}
            Op::Matmul { ta, tb } => {
                let (a, b) = (parents[0], parents[1]);
                if want[0] {
                    out[0] = Some(if !ta {
                        self.matmul_t(g, b, false, !tb)?
                    } else {
                        self.matmul_t(b, g, *tb, true)?
                    });
                }
                if want[1] {
                    out[1] = Some(if !tb {
                        self.matmul_t(a, g, !ta, false)?
                    } else {
                        self.matmul_t(g, a, true, *ta)?
                    });
                }
            }
            Op::Add => {
                if want[0] {
                    out[0] = Some(g);
                }
                if want[1] {
                    out[1] = Some(g);
                }
            }
            Op::Sub => {
                if want[0] {
                    out[0] = Some(g);
                }
                if want[1] {
                    out[1] = Some(self.scale(g, -1.0)?);
                }
            }
            Op::Mul => {
                let (a, b) = (parents[0], parents[1]);
                if want[0] {
                    out[0] = Some(self.mul(g, b)?);
                }
                if want[1] {
                    out[1] = Some(self.mul(g, a)?);
                }
            }
            Op::Div => {
                let b = parents[1];
                if want[0] {
                    out[0] = Some(self.div(g, b)?);
                }
                if want[1] {
                    // d(a/b)/db = -(a/b)/b; reuse the recorded quotient.
                    let gy = self.mul(g, out_id)?;
                    let q = self.div(gy, b)?;
                    out[1] = Some(self.scale(q, -1.0)?);
                }
            }
            Op::Scale(c) => {
                if want[0] {
                    out[0] = Some(self.scale(g, *c)?);
                }
            }
            Op::AddScalar(_) => {
                if want[0] {
                    out[0] = Some(g);
                }
            }
            Op::LeakyRelu(slope) => {
                if want[0] {
                    // The branch mask is locally constant (kink at 0 takes the
                    // positive branch), so it enters as a constant leaf and
                    // stays correct under further differentiation.
                    let slope = *slope;
                    let x = self.value(parents[0]);
                    let mask = Tensor::new(
                        x.shape().to_vec(),
                        x.data().iter().map(|&v| if v >= 0.0 { 1.0 } else { slope }).collect(),
                    )?;
                    let m = self.leaf(mask);
                    out[0] = Some(self.mul(g, m)?);
                }
            }
            Op::Sqrt => {
                if want[0] {
                    let half = self.scale(g, 0.5)?;
                    out[0] = Some(self.div(half, out_id)?);
                }
            }
            Op::Ln => {
                if want[0] {
                    out[0] = Some(self.div(g, parents[0])?);
                }
            }
            Op::Sum => {
                if want[0] {
                    let shape = self.value(parents[0]).shape().to_vec();
                    out[0] = Some(self.broadcast_scalar(g, shape)?);
                }
            }
            Op::BroadcastScalar { .. } => {
                if want[0] {
                    out[0] = Some(self.sum(g)?);
                }
            }
            Op::SumAxis0 => {
                if want[0] {
                    let (rows, _) = self.value(parents[0]).matrix_dims();
                    out[0] = Some(self.broadcast_rows(g, rows)?);
                }
            }
            Op::BroadcastRows { .. } => {
                if want[0] {
                    out[0] = Some(self.sum_axis0(g)?);
                }
            }
            Op::SumAxis1 => {
                if want[0] {
                    let (_, cols) = self.value(parents[0]).matrix_dims();
                    out[0] = Some(self.broadcast_cols(g, cols)?);
                }
            }
            Op::BroadcastCols { .. } => {
                if want[0] {
                    out[0] = Some(self.sum_axis1(g)?);
                }
            }
            Op::AddRowBroadcast => {
                if want[0] {
                    out[0] = Some(g);
                }
                if want[1] {
                    out[1] = Some(self.sum_axis0(g)?);
                }
            }
            Op::ConcatCols => {
                let (_, ca) = self.value(parents[0]).matrix_dims();
                let (_, cb) = self.value(parents[1]).matrix_dims();
                if want[0] {
                    out[0] = Some(self.slice_cols(g, 0, ca)?);
                }
                if want[1] {
                    out[1] = Some(self.slice_cols(g, ca, cb)?);
                }
            }
            Op::SliceCols { start, .. } => {
                if want[0] {
                    let (_, total) = self.value(parents[0]).matrix_dims();
                    out[0] = Some(self.pad_cols(g, *start, total)?);
                }
            }
            Op::PadCols { start, .. } => {
                if want[0] {
                    let (_, len) = self.value(parents[0]).matrix_dims();
                    out[0] = Some(self.slice_cols(g, *start, len)?);
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        // f(x) = x² at x = 3 → df/dx = 6.
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.square(x).unwrap();
        let grads = g.backward(y, &[x], false).unwrap();
        assert_eq!(grads.tensor(x).item().unwrap(), 6.0);
    }

    #[test]
    fn norm_of_orthogonal_map_has_unit_gradient() {
        // f(x) = ‖Wx‖ with W orthogonal (a rotation) → ‖∇ₓf‖ = 1 off zero.
        let (c, s) = (0.6, 0.8);
        let mut g = Graph::new();
        let w = g.leaf(Tensor::matrix(2, 2, vec![c, -s, s, c]).unwrap());
        let x = g.leaf(Tensor::matrix(2, 1, vec![0.3, -1.7]).unwrap());
        let y = g.matmul(w, x).unwrap();
        let n = g.l2_norm(y).unwrap();
        let grads = g.backward(n, &[x], false).unwrap();
        let gx = grads.tensor(x);
        let norm: f64 = gx.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12, "got {norm}");
    }

    #[test]
    fn non_ancestor_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0));
        let unused = g.leaf(Tensor::vector(vec![1.0, 1.0]));
        let y = g.square(x).unwrap();
        let grads = g.backward(y, &[x, unused], false).unwrap();
        assert_eq!(grads.tensor(unused).data(), &[0.0, 0.0]);
        assert_eq!(grads.tensor(x).item().unwrap(), 4.0);
    }

    #[test]
    fn non_scalar_output_is_contract_error() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = g.scale(x, 2.0).unwrap();
        assert!(matches!(g.backward(y, &[x], false), Err(Error::Contract(_))));
    }

    #[test]
    fn first_order_backward_leaves_graph_unchanged() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let y = g.square(x).unwrap();
        let s = g.sum(y).unwrap();
        let before = g.len();
        let grads = g.backward(s, &[x], false).unwrap();
        assert_eq!(g.len(), before);
        assert_eq!(grads.node(x), None);
        assert_eq!(grads.tensor(x).data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn higher_order_gradients_are_nodes() {
        // f(x) = sum(x²); h = ‖∇ₓf‖² = 4·sum(x²); ∇ₓh = 8x.
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, -2.0]));
        let y = g.square(x).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s, &[x], true).unwrap();
        let gx = grads.node(x).expect("recorded gradient node");
        let gsq = g.square(gx).unwrap();
        let h = g.sum(gsq).unwrap();
        let second = g.backward(h, &[x], false).unwrap();
        assert_eq!(second.tensor(x).data(), &[8.0, -16.0]);
    }

    #[test]
    fn quadratic_form_gradient_is_exact() {
        // D(x) = xᵀAx → ∇ₓD = (A + Aᵀ)x, checked exactly.
        let a_data = vec![1.0, 2.0, 0.5, -1.0, 0.25, 3.0, 1.5, -0.75, 2.0];
        let x_data = [0.3, -1.2, 0.7];
        let mut g = Graph::new();
        let a = g.leaf(Tensor::matrix(3, 3, a_data.clone()).unwrap());
        let x = g.leaf(Tensor::matrix(3, 1, x_data.to_vec()).unwrap());
        let ax = g.matmul(a, x).unwrap();
        let y = g.matmul_t(x, ax, true, false).unwrap(); // xᵀ(Ax): [1×1]
        let grads = g.backward(y, &[x], false).unwrap();
        let mut expect = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                expect[i] += (a_data[i * 3 + j] + a_data[j * 3 + i]) * x_data[j];
            }
        }
        for (got, want) in grads.tensor(x).data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn l2_norm_gradient_at_zero_is_degenerate() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        let n = g.l2_norm(x).unwrap();
        assert!(matches!(g.backward(n, &[x], false), Err(Error::DegenerateInput(_))));
    }
}
