//! Tape-based reverse-mode differentiation over row-major matrices.
//!
//! Every operation appends a node holding its forward value; `backward`
//! walks the tape in reverse and accumulates vector-Jacobian products.
//! Nodes built only from constants carry no gradient and are skipped.
//!
//! Each output element is produced by the same sequence of floating-point
//! operations regardless of how many rows are stacked into the input, so a
//! batched forward is bit-identical to the corresponding single-row ones.

use std::collections::BTreeMap;

use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Ln(Var),
    Square(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MaskedSoftmax(Var, Vec<bool>),
    MixUniform(Var, Vec<f64>, Vec<bool>),
    Gather(Var, Vec<usize>),
    WeightedSum(Var, Vec<f64>),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Parameters registered on a graph, addressable by name.
#[derive(Clone, Debug, Default)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Collects gradients for every bound parameter into a `ParamSet`.
    pub fn params(&self, bound: &BoundParams) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, &v) in bound.iter() {
            out.insert(name.clone(), self.wrt(v));
        }
        out
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// A differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn bind(&mut self, params: &ParamSet) -> BoundParams {
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), self.leaf(t.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Registers parameters as constants (inference only).
    pub fn bind_frozen(&mut self, params: &ParamSet) -> BoundParams {
        let vars = params
            .iter()
            .map(|(name, t)| (name.clone(), self.constant(t.clone())))
            .collect();
        BoundParams { vars }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (r, k) = self.dims(a);
        let (k2, c) = self.dims(b);
        assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let orow = &mut out[i * c..(i + 1) * c];
            for (kk, &aik) in av[i * k..(i + 1) * k].iter().enumerate() {
                let brow = &bv[kk * c..(kk + 1) * c];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o += aik * bkj;
                }
            }
        }
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(Tensor::matrix(r, c, out).unwrap(), Op::MatMul(a, b), tracked)
    }

    /// Adds a `[1, c]` (or `[c]`) bias to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (r, c) = self.dims(a);
        let (br, bc) = self.dims(bias);
        assert!(br == 1 && bc == c, "add_row: bias [{br},{bc}] vs width {c}");
        let bv = self.nodes[bias.0].value.data().to_vec();
        let mut out = self.nodes[a.0].value.data().to_vec();
        for row in out.chunks_mut(c) {
            for (o, b) in row.iter_mut().zip(&bv) {
                *o += b;
            }
        }
        let tracked = self.tracked(a) || self.tracked(bias);
        self.push(Tensor::matrix(r, c, out).unwrap(), Op::AddRow(a, bias), tracked)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (r, c) = self.dims(a);
        assert_eq!((r, c), self.dims(b), "elementwise op: shape mismatch");
        let out = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(Tensor::matrix(r, c, out).unwrap(), op, tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.dims(a);
        let out = self.nodes[a.0].value.data().iter().map(|&x| f(x)).collect();
        let tracked = self.tracked(a);
        self.push(Tensor::matrix(r, c, out).unwrap(), op, tracked)
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        self.map(a, |x| scale * x + shift, Op::Affine(a, scale))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.map(a, f64::ln, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let r = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (pr, pc) = self.dims(p);
                assert_eq!(pr, r, "concat_cols: row mismatch");
                pc
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[p.0].value.data()[i * w..(i + 1) * w]);
            }
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        self.push(
            Tensor::matrix(r, total, out).unwrap(),
            Op::ConcatCols(parts.to_vec()),
            tracked,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.dims(a);
        assert!(start + len <= c, "slice_cols: {start}+{len} > {c}");
        let src = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let tracked = self.tracked(a);
        self.push(Tensor::matrix(r, len, out).unwrap(), Op::SliceCols(a, start), tracked)
    }

    /// Row-wise softmax restricted to entries where `mask` is true; masked
    /// entries are exactly zero. Every row needs at least one true entry.
    pub fn masked_softmax(&mut self, logits: Var, mask: Vec<bool>) -> Var {
        let (r, c) = self.dims(logits);
        assert_eq!(mask.len(), r * c, "masked_softmax: mask size");
        let src = self.nodes[logits.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let m = &mask[i * c..(i + 1) * c];
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &ok)| ok)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max.is_finite(), "masked_softmax: row {i} fully masked");
            let mut z = 0.0;
            for j in 0..c {
                if m[j] {
                    let e = (row[j] - max).exp();
                    out[i * c + j] = e;
                    z += e;
                }
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o /= z;
            }
        }
        let tracked = self.tracked(logits);
        self.push(
            Tensor::matrix(r, c, out).unwrap(),
            Op::MaskedSoftmax(logits, mask),
            tracked,
        )
    }

    /// ε-floor mixing: `(1-ε_i) p + ε_i / k_i` on available entries of row
    /// `i`, where `k_i` counts available entries. Masked entries stay zero.
    pub fn mix_uniform(&mut self, probs: Var, mask: &[bool], eps: Vec<f64>) -> Var {
        let (r, c) = self.dims(probs);
        assert_eq!(mask.len(), r * c, "mix_uniform: mask size");
        assert_eq!(eps.len(), r, "mix_uniform: one epsilon per row");
        let src = self.nodes[probs.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let m = &mask[i * c..(i + 1) * c];
            let k = m.iter().filter(|&&x| x).count() as f64;
            for j in 0..c {
                if m[j] {
                    out[i * c + j] = (1.0 - eps[i]) * src[i * c + j] + eps[i] / k;
                }
            }
        }
        let tracked = self.tracked(probs);
        self.push(
            Tensor::matrix(r, c, out).unwrap(),
            Op::MixUniform(probs, eps, mask.to_vec()),
            tracked,
        )
    }

    /// Picks column `idx[i]` from each row `i`, giving `[rows, 1]`.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let (r, c) = self.dims(a);
        assert_eq!(idx.len(), r, "gather: one index per row");
        let src = self.nodes[a.0].value.data();
        let out = idx
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                assert!(j < c, "gather: index {j} >= {c}");
                src[i * c + j]
            })
            .collect();
        let tracked = self.tracked(a);
        self.push(Tensor::matrix(r, 1, out).unwrap(), Op::Gather(a, idx), tracked)
    }

    /// `Σ w_i a_i` over all entries, as a scalar node. Entries whose weight is
    /// exactly zero are skipped so they cannot leak non-finite values.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<f64>) -> Var {
        let src = self.nodes[a.0].value.data();
        assert_eq!(weights.len(), src.len(), "weighted_sum: weight count");
        let mut s = 0.0;
        for (&x, &w) in src.iter().zip(&weights) {
            if w != 0.0 {
                s += w * x;
            }
        }
        let tracked = self.tracked(a);
        self.push(Tensor::scalar(s), Op::WeightedSum(a, weights), tracked)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len();
        self.weighted_sum(a, vec![1.0; n])
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward: loss must be scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        grads.resize(self.nodes.len(), None);
        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.tracked(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (r, k) = self.dims(*a);
                let c = self.dims(*b).1;
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                // dA = G Bᵀ
                self.accumulate(grads, *a, |ga| {
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for kk in 0..k {
                            let brow = &bv[kk * c..(kk + 1) * c];
                            let mut s = 0.0;
                            for (x, y) in grow.iter().zip(brow) {
                                s += x * y;
                            }
                            ga[i * k + kk] += s;
                        }
                    }
                });
                // dB = Aᵀ G
                self.accumulate(grads, *b, |gb| {
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for kk in 0..k {
                            let aik = av[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            for (o, &gij) in gb[kk * c..(kk + 1) * c].iter_mut().zip(grow) {
                                *o += aik * gij;
                            }
                        }
                    }
                });
            }
            Op::AddRow(a, bias) => {
                let c = self.dims(*a).1;
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *bias, |gb| {
                    for row in g.chunks(c) {
                        add_into(gb, row);
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, g));
                self.accumulate(grads, *b, |gb| {
                    for (o, x) in gb.iter_mut().zip(g) {
                        *o -= x;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += x * y;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((o, x), y) in gb.iter_mut().zip(g).zip(av) {
                        *o += x * y;
                    }
                });
            }
            Op::Affine(a, scale) => {
                self.accumulate(grads, *a, |ga| {
                    for (o, x) in ga.iter_mut().zip(g) {
                        *o += scale * x;
                    }
                });
            }
            Op::Relu(a) => {
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(out) {
                        if *y > 0.0 {
                            *o += x;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(out) {
                        *o += x * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(a) => {
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(out) {
                        *o += x * (1.0 - y * y);
                    }
                });
            }
            Op::Ln(a) => {
                let av = self.nodes[a.0].value.data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(av) {
                        if *x != 0.0 {
                            *o += x / y;
                        }
                    }
                });
            }
            Op::Square(a) => {
                let av = self.nodes[a.0].value.data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(g).zip(av) {
                        *o += 2.0 * x * y;
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let r = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    self.accumulate(grads, p, |gp| {
                        for i in 0..r {
                            add_into(
                                &mut gp[i * w..(i + 1) * w],
                                &g[i * total + offset..i * total + offset + w],
                            );
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.dims(*a);
                let w = node.value.cols();
                self.accumulate(grads, *a, |ga| {
                    for i in 0..r {
                        add_into(&mut ga[i * c + start..i * c + start + w], &g[i * w..(i + 1) * w]);
                    }
                });
            }
            Op::MaskedSoftmax(a, mask) => {
                let c = node.value.cols();
                self.accumulate(grads, *a, |ga| {
                    for (i, (prow, grow)) in out.chunks(c).zip(g.chunks(c)).enumerate() {
                        let dot: f64 = prow.iter().zip(grow).map(|(p, x)| p * x).sum();
                        for j in 0..c {
                            if mask[i * c + j] {
                                ga[i * c + j] += prow[j] * (grow[j] - dot);
                            }
                        }
                    }
                });
            }
            Op::MixUniform(a, eps, mask) => {
                let c = node.value.cols();
                self.accumulate(grads, *a, |ga| {
                    for (i, e) in eps.iter().enumerate() {
                        for j in 0..c {
                            if mask[i * c + j] {
                                ga[i * c + j] += (1.0 - e) * g[i * c + j];
                            }
                        }
                    }
                });
            }
            Op::Gather(a, idx) => {
                let c = self.dims(*a).1;
                self.accumulate(grads, *a, |ga| {
                    for (i, &j) in idx.iter().enumerate() {
                        ga[i * c + j] += g[i];
                    }
                });
            }
            Op::WeightedSum(a, w) => {
                self.accumulate(grads, *a, |ga| {
                    for (o, &wi) in ga.iter_mut().zip(w) {
                        if wi != 0.0 {
                            *o += g[0] * wi;
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_matches_hand_product() {
        let mut g = Graph::new();
        let a = g.leaf(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = g.leaf(t(2, 1, &[5.0, 6.0]));
        let c = g.matmul(a, b);
        assert_eq!(g.value(c).data(), &[17.0, 39.0]);
        let loss = g.sum(c);
        let grads = g.backward(loss);
        assert_eq!(grads.wrt(a).data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(grads.wrt(b).data(), &[4.0, 6.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let a = g.constant(t(1, 2, &[1.0, 2.0]));
        let b = g.leaf(t(1, 2, &[3.0, 4.0]));
        let p = g.mul(a, b);
        let loss = g.sum(p);
        let grads = g.backward(loss);
        assert_eq!(grads.wrt(a).data(), &[0.0, 0.0]);
        assert_eq!(grads.wrt(b).data(), &[1.0, 2.0]);
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut g = Graph::new();
        let l = g.leaf(t(1, 3, &[1.0, 100.0, 1.0]));
        let p = g.masked_softmax(l, vec![true, false, true]);
        assert_eq!(g.value(p).data(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn mix_uniform_hand_value() {
        let mut g = Graph::new();
        let p = g.leaf(t(1, 2, &[0.9, 0.1]));
        let q = g.mix_uniform(p, &[true, true], vec![0.5]);
        let v = g.value(q).data();
        assert!((v[0] - 0.70).abs() < 1e-15 && (v[1] - 0.30).abs() < 1e-15);
    }

    #[test]
    fn weighted_sum_skips_zero_weights() {
        let mut g = Graph::new();
        let a = g.leaf(t(1, 2, &[f64::NAN, 2.0]));
        let s = g.weighted_sum(a, vec![0.0, 3.0]);
        assert_eq!(g.value(s).item(), 6.0);
        let grads = g.backward(s);
        assert_eq!(grads.wrt(a).data(), &[0.0, 3.0]);
    }
}
