//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Every operation appends one node; [`Tape::backward`] walks the nodes in
//! exact reverse of recording order. The two loss primitives
//! ([`Tape::transducer_nll`] and [`Tape::cross_entropy`]) compute their local
//! gradients during the forward pass, so backward only scales and scatters.

use std::ops::Range;

use super::tensor::{linear_into, log_add_exp, log_sigmoid, log_sum_exp, sigmoid, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Tanh(Var),
    GatherRows {
        table: Var,
        idx: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    ShiftRows {
        x: Var,
        k: usize,
    },
    OuterSum {
        a: Var,
        b: Var,
    },
    Transducer {
        blank: Var,
        blank_col: usize,
        tokens: Var,
        token_cols: Range<usize>,
        d_blank: Vec<f64>,
        d_tokens: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        cols: Range<usize>,
        d_logits: Vec<f64>,
    },
    WeightedSum(Vec<(Var, f64)>),
    SumSquares(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::Linear { .. } => "linear",
            Op::Add(..) => "add",
            Op::Tanh(_) => "tanh",
            Op::GatherRows { .. } => "gather_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::ShiftRows { .. } => "shift_rows",
            Op::OuterSum { .. } => "outer_sum",
            Op::Transducer { .. } => "transducer_nll",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::WeightedSum(_) => "weighted_sum",
            Op::SumSquares(_) => "sum_squares",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

/// Gradients of one scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    visited: Vec<usize>,
}

impl Gradients {
    /// Gradient for `v`; exactly zero when `v` is not on a path to the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    /// Node indices in the order backward processed them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
    }
}

fn dims_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl Tape {
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

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Parameters in registration order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{} produced a non-finite value", op.name())));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Constant, false)
    }

    pub fn param(&mut self, t: Tensor) -> Result<Var> {
        let v = self.push(t, Op::Param, true)?;
        self.params.push(v);
        Ok(v)
    }

    /// Row-wise `x · Wᵀ + b`; `x` is `n×k` (or a length-`k` vector), `W` is `m×k`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, k) = xv.dims();
        let (m, wk) = wv.dims();
        if wv.shape().len() != 2 || wk != k {
            return Err(dims_err("linear", wv, xv));
        }
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != m {
                return Err(dims_err("linear bias", wv, bv));
            }
        }
        let data = linear_into(xv.data(), n, k, wv.data(), m, b.map(|b| self.nodes[b.0].value.data()));
        let value = if xv.shape().len() == 2 {
            Tensor::matrix(n, m, data)?
        } else {
            Tensor::vector(data)
        };
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(value, Op::Linear { x, w, b }, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(dims_err("add", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let value = Tensor::new(av.shape().to_vec(), av.data().iter().map(|x| x.tanh()).collect())?;
        let needs = self.needs(a);
        self.push(value, Op::Tanh(a), needs)
    }

    /// Embedding lookup: output row `r` is `table[idx[r]]`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (rows, cols) = tv.dims();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(Error::Contract(format!(
                    "row index {i} out of range for table with {rows} rows"
                )));
            }
            data.extend_from_slice(tv.row(i));
        }
        let value = Tensor::matrix(idx.len(), cols, data)?;
        let needs = self.needs(table);
        self.push(
            value,
            Op::GatherRows {
                table,
                idx: idx.to_vec(),
            },
            needs,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]);
        let rows = first.rows();
        let mut total = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(dims_err("concat_cols", first, pv));
            }
            total += pv.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::matrix(rows, total, data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), needs)
    }

    /// Output row `r` is input row `r - k`, zero-filled for `r < k`.
    pub fn shift_rows(&mut self, x: Var, k: usize) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = xv.dims();
        let mut data = vec![0.0; rows * cols];
        if k < rows {
            data[k * cols..].copy_from_slice(&xv.data()[..(rows - k) * cols]);
        }
        let value = Tensor::matrix(rows, cols, data)?;
        let needs = self.needs(x);
        self.push(value, Op::ShiftRows { x, k }, needs)
    }

    /// Pairwise sum: row `i * b.rows() + j` is `a[i] + b[j]`.
    pub fn outer_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (ra, ca) = av.dims();
        let (rb, cb) = bv.dims();
        if ca != cb {
            return Err(dims_err("outer_sum", av, bv));
        }
        let mut data = Vec::with_capacity(ra * rb * ca);
        for i in 0..ra {
            let ai = av.row(i);
            for j in 0..rb {
                data.extend(ai.iter().zip(bv.row(j)).map(|(x, y)| x + y));
            }
        }
        let value = Tensor::matrix(ra * rb, ca, data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::OuterSum { a, b }, needs)
    }

    /// Negative log-likelihood of a HAT transducer lattice.
    ///
    /// Row `t * (U + 1) + u` of both inputs holds the logits at lattice node
    /// `(t, u)`, where `U = labels.len()` and `frames` is `T`. The blank
    /// probability is `σ(blank[r, blank_col])`; given emission, symbol `k` has
    /// probability `softmax(tokens[r, token_cols])[k]`. A terminal blank at
    /// `(T-1, U)` closes the lattice.
    pub fn transducer_nll(
        &mut self,
        blank: Var,
        blank_col: usize,
        tokens: Var,
        token_cols: Range<usize>,
        labels: &[usize],
        frames: usize,
    ) -> Result<Var> {
        let (bv, tv) = (self.value(blank), self.value(tokens));
        let u1 = labels.len() + 1;
        let n = frames * u1;
        if frames == 0 {
            return Err(Error::Contract("transducer lattice needs at least one frame".into()));
        }
        if bv.rows() != n || tv.rows() != n || blank_col >= bv.cols() || token_cols.end > tv.cols() {
            return Err(dims_err("transducer_nll", bv, tv));
        }
        let k = token_cols.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Contract(format!(
                "label {bad} outside the {k}-symbol output space"
            )));
        }
        let blank_logit = |r: usize| bv.data()[r * bv.cols() + blank_col];
        let token_row = |r: usize| &tv.row(r)[token_cols.clone()];

        let mut log_blank = vec![0.0; n];
        let mut log_emit = vec![f64::NEG_INFINITY; n];
        for t in 0..frames {
            for u in 0..u1 {
                let r = t * u1 + u;
                let a = blank_logit(r);
                log_blank[r] = log_sigmoid(a);
                if u < labels.len() {
                    let z = token_row(r);
                    log_emit[r] = log_sigmoid(-a) + z[labels[u]] - log_sum_exp(z);
                }
            }
        }

        let mut alpha = vec![f64::NEG_INFINITY; n];
        alpha[0] = 0.0;
        for t in 0..frames {
            for u in 0..u1 {
                let r = t * u1 + u;
                if r == 0 {
                    continue;
                }
                let mut acc = f64::NEG_INFINITY;
                if t > 0 {
                    acc = alpha[r - u1] + log_blank[r - u1];
                }
                if u > 0 {
                    acc = log_add_exp(acc, alpha[r - 1] + log_emit[r - 1]);
                }
                alpha[r] = acc;
            }
        }
        let last = n - 1;
        let ll = alpha[last] + log_blank[last];

        let mut beta = vec![f64::NEG_INFINITY; n];
        for t in (0..frames).rev() {
            for u in (0..u1).rev() {
                let r = t * u1 + u;
                if r == last {
                    beta[r] = log_blank[r];
                    continue;
                }
                let mut acc = f64::NEG_INFINITY;
                if t + 1 < frames {
                    acc = log_blank[r] + beta[r + u1];
                }
                if u + 1 < u1 {
                    acc = log_add_exp(acc, log_emit[r] + beta[r + 1]);
                }
                beta[r] = acc;
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numeric("transducer log-likelihood is not finite".into()));
        }

        // Gradients of the NLL: transition occupancies chained through the
        // sigmoid and the softmax.
        let mut d_blank = vec![0.0; n];
        let mut d_tokens = vec![0.0; n * k];
        for t in 0..frames {
            for u in 0..u1 {
                let r = t * u1 + u;
                let occ_blank = if r == last {
                    (alpha[r] + log_blank[r] - ll).exp()
                } else if t + 1 < frames {
                    (alpha[r] + log_blank[r] + beta[r + u1] - ll).exp()
                } else {
                    0.0
                };
                let occ_emit = if u < labels.len() {
                    (alpha[r] + log_emit[r] + beta[r + 1] - ll).exp()
                } else {
                    0.0
                };
                let a = blank_logit(r);
                d_blank[r] = -(occ_blank * sigmoid(-a) - occ_emit * sigmoid(a));
                if occ_emit > 0.0 {
                    let z = token_row(r);
                    let lse = log_sum_exp(z);
                    let d = &mut d_tokens[r * k..(r + 1) * k];
                    for (j, (dj, zj)) in d.iter_mut().zip(z).enumerate() {
                        let target = if j == labels[u] { 1.0 } else { 0.0 };
                        *dj = -occ_emit * (target - (zj - lse).exp());
                    }
                }
            }
        }
        let needs = self.needs(blank) || self.needs(tokens);
        self.push(
            Tensor::scalar(-ll),
            Op::Transducer {
                blank,
                blank_col,
                tokens,
                token_cols,
                d_blank,
                d_tokens,
            },
            needs,
        )
    }

    /// Summed negative log-softmax of `targets[r]` over columns `cols` of row `r`.
    pub fn cross_entropy(&mut self, logits: Var, cols: Range<usize>, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let k = cols.len();
        if lv.rows() != targets.len() || cols.end > lv.cols() || k == 0 {
            return Err(Error::Dimension {
                op: "cross_entropy",
                left: lv.shape().to_vec(),
                right: vec![targets.len(), k],
            });
        }
        let mut total = 0.0;
        let mut d_logits = vec![0.0; targets.len() * k];
        for (r, &tgt) in targets.iter().enumerate() {
            if tgt >= k {
                return Err(Error::Contract(format!(
                    "target {tgt} outside the {k}-symbol output space"
                )));
            }
            let z = &lv.row(r)[cols.clone()];
            let lse = log_sum_exp(z);
            total -= z[tgt] - lse;
            for (j, (d, zj)) in d_logits[r * k..(r + 1) * k].iter_mut().zip(z).enumerate() {
                *d = (zj - lse).exp() - if j == tgt { 1.0 } else { 0.0 };
            }
        }
        let needs = self.needs(logits);
        self.push(
            Tensor::scalar(total),
            Op::CrossEntropy { logits, cols, d_logits },
            needs,
        )
    }

    /// `Σ wᵢ·xᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            let vv = self.value(v);
            if vv.len() != 1 {
                return Err(Error::Dimension {
                    op: "weighted_sum",
                    left: vv.shape().to_vec(),
                    right: vec![],
                });
            }
            total += w * vv.item();
        }
        let needs = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), needs)
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::SumSquares(x), needs)
    }

    /// Propagates `d loss / d node` for every node recorded up to `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut visited = Vec::with_capacity(loss.0 + 1);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            visited.push(i);
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(node, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            visited,
        })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, k) = xv.dims();
                let m = wv.rows();
                if let Some(dx) = self.acc(grads, *x) {
                    for r in 0..n {
                        let dxr = &mut dx[r * k..(r + 1) * k];
                        for o in 0..m {
                            let g = dy[r * m + o];
                            if g != 0.0 {
                                for (d, wv) in dxr.iter_mut().zip(wv.row(o)) {
                                    *d += g * wv;
                                }
                            }
                        }
                    }
                }
                if let Some(dw) = self.acc(grads, *w) {
                    for r in 0..n {
                        let xr = xv.row(r);
                        for o in 0..m {
                            let g = dy[r * m + o];
                            if g != 0.0 {
                                for (d, xv) in dw[o * k..(o + 1) * k].iter_mut().zip(xr) {
                                    *d += g * xv;
                                }
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    if let Some(db) = self.acc(grads, *b) {
                        for r in 0..n {
                            for (d, g) in db.iter_mut().zip(&dy[r * m..(r + 1) * m]) {
                                *d += g;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.acc(grads, v) {
                        for (d, g) in d.iter_mut().zip(dy) {
                            *d += g;
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(d) = self.acc(grads, *a) {
                    for ((d, g), y) in d.iter_mut().zip(dy).zip(node.value.data()) {
                        *d += g * (1.0 - y * y);
                    }
                }
            }
            Op::GatherRows { table, idx } => {
                let cols = self.value(*table).cols();
                if let Some(d) = self.acc(grads, *table) {
                    for (r, &i) in idx.iter().enumerate() {
                        for (d, g) in d[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(&dy[r * cols..(r + 1) * cols])
                        {
                            *d += g;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if let Some(d) = self.acc(grads, p) {
                        for r in 0..rows {
                            let src = &dy[r * total + offset..r * total + offset + c];
                            for (d, g) in d[r * c..(r + 1) * c].iter_mut().zip(src) {
                                *d += g;
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::ShiftRows { x, k } => {
                let (rows, cols) = node.value.dims();
                if let Some(d) = self.acc(grads, *x) {
                    if *k < rows {
                        for (d, g) in d[..(rows - k) * cols].iter_mut().zip(&dy[k * cols..]) {
                            *d += g;
                        }
                    }
                }
            }
            Op::OuterSum { a, b } => {
                let ra = self.value(*a).rows();
                let rb = self.value(*b).rows();
                let c = node.value.cols();
                if let Some(da) = self.acc(grads, *a) {
                    for i in 0..ra {
                        for j in 0..rb {
                            let r = i * rb + j;
                            for (d, g) in da[i * c..(i + 1) * c].iter_mut().zip(&dy[r * c..(r + 1) * c]) {
                                *d += g;
                            }
                        }
                    }
                }
                if let Some(db) = self.acc(grads, *b) {
                    for i in 0..ra {
                        for j in 0..rb {
                            let r = i * rb + j;
                            for (d, g) in db[j * c..(j + 1) * c].iter_mut().zip(&dy[r * c..(r + 1) * c]) {
                                *d += g;
                            }
                        }
                    }
                }
            }
            Op::Transducer {
                blank,
                blank_col,
                tokens,
                token_cols,
                d_blank,
                d_tokens,
            } => {
                let g = dy[0];
                let bc = self.value(*blank).cols();
                if let Some(d) = self.acc(grads, *blank) {
                    for (r, db) in d_blank.iter().enumerate() {
                        d[r * bc + blank_col] += g * db;
                    }
                }
                let tc = self.value(*tokens).cols();
                let k = token_cols.len();
                if let Some(d) = self.acc(grads, *tokens) {
                    for (r, chunk) in d_tokens.chunks(k).enumerate() {
                        let base = r * tc + token_cols.start;
                        for (d, dt) in d[base..base + k].iter_mut().zip(chunk) {
                            *d += g * dt;
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, cols, d_logits } => {
                let g = dy[0];
                let lc = self.value(*logits).cols();
                let k = cols.len();
                if let Some(d) = self.acc(grads, *logits) {
                    for (r, chunk) in d_logits.chunks(k).enumerate() {
                        let base = r * lc + cols.start;
                        for (d, dl) in d[base..base + k].iter_mut().zip(chunk) {
                            *d += g * dl;
                        }
                    }
                }
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    // Zero-weighted terms are skipped so they cannot perturb
                    // the result, not even through signed zeros.
                    if w == 0.0 {
                        continue;
                    }
                    if let Some(d) = self.acc(grads, v) {
                        d[0] += dy[0] * w;
                    }
                }
            }
            Op::SumSquares(x) => {
                let xv = self.value(*x);
                if let Some(d) = self.acc(grads, *x) {
                    for (d, v) in d.iter_mut().zip(xv.data()) {
                        *d += 2.0 * v * dy[0];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::matrix(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn backward_visits_in_reverse_recording_order() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let y = tape.tanh(x).unwrap();
        let z = tape.sum_squares(y).unwrap();
        let g = tape.backward(z).unwrap();
        assert_eq!(g.visit_order(), &[2, 1, 0]);
    }

    #[test]
    fn unused_parameter_has_exactly_zero_gradient() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::vector(vec![1.0, -3.0])).unwrap();
        let unused = tape.param(Tensor::vector(vec![4.0])).unwrap();
        let loss = tape.sum_squares(a).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(unused).data(), &[0.0]);
        assert_eq!(g.wrt(a).data(), &[2.0, -6.0]);
    }

    // Finite differences through linear -> tanh -> sum_squares on random 5x5 instances.
    #[test]
    fn affine_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x = random(&mut rng, 5, 5);
            let w = random(&mut rng, 5, 5);
            let b = random(&mut rng, 1, 5);
            let b = Tensor::vector(b.into_data());
            let loss_of = |x: &Tensor, w: &Tensor, b: &Tensor| {
                let mut tape = Tape::new();
                let xv = tape.param(x.clone()).unwrap();
                let wv = tape.param(w.clone()).unwrap();
                let bv = tape.param(b.clone()).unwrap();
                let y = tape.linear(xv, wv, Some(bv)).unwrap();
                let l = tape.sum_squares(y).unwrap();
                (tape, [xv, wv, bv], l)
            };
            let (tape, vars, l) = loss_of(&x, &w, &b);
            let grads = tape.backward(l).unwrap();
            let eps = 1e-5;
            let inputs = [x, w, b];
            for (which, var) in vars.iter().enumerate() {
                let analytic = grads.wrt(*var);
                for i in 0..inputs[which].len() {
                    let mut plus = inputs.clone();
                    plus[which].data_mut()[i] += eps;
                    let mut minus = inputs.clone();
                    minus[which].data_mut()[i] -= eps;
                    let (tp, _, lp) = loss_of(&plus[0], &plus[1], &plus[2]);
                    let (tm, _, lm) = loss_of(&minus[0], &minus[1], &minus[2]);
                    let numeric = (tp.value(lp).item() - tm.value(lm).item()) / (2.0 * eps);
                    let a = analytic.data()[i];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                    assert!(rel < 1e-6, "rel error {rel}");
                }
            }
        }
    }

    #[test]
    fn structural_ops_forward() {
        let mut tape = Tape::new();
        let a = tape
            .constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap())
            .unwrap();
        let b = tape
            .constant(Tensor::from_rows(&[vec![10.0, 20.0], vec![30.0, 40.0], vec![50.0, 60.0]]).unwrap())
            .unwrap();
        let s = tape.outer_sum(a, b).unwrap();
        assert_eq!(tape.value(s).shape(), &[6, 2]);
        assert_eq!(tape.value(s).row(4), &[33.0, 44.0]);
        let sh = tape.shift_rows(a, 1).unwrap();
        assert_eq!(tape.value(sh).data(), &[0.0, 0.0, 1.0, 2.0]);
        let c = tape.concat_cols(&[a, sh]).unwrap();
        assert_eq!(tape.value(c).row(1), &[3.0, 4.0, 1.0, 2.0]);
        let g = tape.gather_rows(b, &[2, 0]).unwrap();
        assert_eq!(tape.value(g).data(), &[50.0, 60.0, 10.0, 20.0]);
        assert!(tape.gather_rows(b, &[3]).is_err());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1e200])).unwrap();
        assert!(matches!(tape.sum_squares(x), Err(Error::Numeric(_))));
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut tape = Tape::new();
            let x = tape.param(random(&mut rng, 4, 3)).unwrap();
            let w = tape.param(random(&mut rng, 5, 3)).unwrap();
            let y = tape.linear(x, w, None).unwrap();
            let y = tape.tanh(y).unwrap();
            let l = tape.cross_entropy(y, 0..5, &[0, 1, 2, 4]).unwrap();
            let g = tape.backward(l).unwrap();
            (
                tape.value(l).item().to_bits(),
                g.wrt(w).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }
}
