//! Reverse-mode differentiation tape.
//!
//! A `Tape` records every operation applied through it; `backward` replays
//! the record in reverse and returns gradients for all registered
//! parameters. Tapes are built fresh for each training step and consumed
//! by `backward`, so no graph state persists between steps.

use std::collections::BTreeMap;

use crate::error::{NodaError, Result};

use super::tensor::Tensor;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    Concat(Var, Var),
    Slice { input: Var, start: usize, len: usize },
    Scale(Var, f64),
    Clip { input: Var, lo: f64, hi: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients keyed by parameter name, in lexicographic order.
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

/// How the second operand of an elementwise op lines up with the first.
#[derive(Clone, Copy, PartialEq)]
enum Bcast {
    Same,
    /// rhs is a scalar applied to every lhs entry.
    RhsScalar,
    /// rhs is a single row repeated over the leading dimension of lhs.
    RhsRow,
    LhsScalar,
    LhsRow,
}

fn bcast_kind(a: &[usize], an: usize, b: &[usize], bn: usize) -> Result<Bcast> {
    if a == b {
        return Ok(Bcast::Same);
    }
    if bn == 1 && b.len() <= 1 {
        return Ok(Bcast::RhsScalar);
    }
    if an == 1 && a.len() <= 1 {
        return Ok(Bcast::LhsScalar);
    }
    if b.len() == 1 && a.last() == Some(&bn) && an % bn == 0 {
        return Ok(Bcast::RhsRow);
    }
    if a.len() == 1 && b.last() == Some(&an) && bn % an == 0 {
        return Ok(Bcast::LhsRow);
    }
    Err(NodaError::Dim(format!(
        "elementwise op on shapes {a:?} and {b:?}"
    )))
}

fn ew(kind: Bcast, a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match kind {
        Bcast::Same => a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect(),
        Bcast::RhsScalar => a.iter().map(|&x| f(x, b[0])).collect(),
        Bcast::LhsScalar => b.iter().map(|&y| f(a[0], y)).collect(),
        Bcast::RhsRow => a
            .chunks_exact(b.len())
            .flat_map(|row| row.iter().zip(b).map(|(&x, &y)| f(x, y)))
            .collect(),
        Bcast::LhsRow => b
            .chunks_exact(a.len())
            .flat_map(|row| a.iter().zip(row).map(|(&x, &y)| f(x, y)))
            .collect(),
    }
}

/// Sum `g` down to the shape of the broadcast operand.
fn reduce_to(g: &[f64], full_is_lhs: bool, kind: Bcast, small_len: usize) -> Vec<f64> {
    let reduced_row = match (kind, full_is_lhs) {
        (Bcast::Same, _) => return g.to_vec(),
        (Bcast::RhsScalar, false) | (Bcast::LhsScalar, true) => {
            return vec![g.iter().sum()];
        }
        (Bcast::RhsRow, false) | (Bcast::LhsRow, true) => true,
        _ => false,
    };
    if reduced_row {
        let mut out = vec![0.0; small_len];
        for row in g.chunks_exact(small_len) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    } else {
        g.to_vec()
    }
}

// C[m,n] = A[m,k] B[k,n]
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for (i, c_row) in c.chunks_exact_mut(n).enumerate() {
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += aip * bj;
            }
        }
    }
    c
}

// C[m,n] = A[m,k] B[n,k]^T
fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (j, cj) in c_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            *cj = a_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
        }
    }
    c
}

// C[k,n] = A[m,k]^T G[m,n]
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * n..(i + 1) * n];
        for (p, &aip) in a_row.iter().enumerate() {
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cj, &gj) in c_row.iter_mut().zip(g_row) {
                *cj += aip * gj;
            }
        }
    }
    c
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Tensor, op: Op, context: &str) -> Result<Var> {
        value.check_finite(context)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input that will not receive a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Registers a named trainable leaf. Names must be unique per tape.
    pub fn param(&mut self, name: &str, t: Tensor) -> Result<Var> {
        if self.params.contains_key(name) {
            return Err(NodaError::Contract(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        let v = self.constant(t);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn binary_ew(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(Var, Var) -> Op,
        name: &str,
    ) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let kind = bcast_kind(ta.shape(), ta.len(), tb.shape(), tb.len())?;
        let out = ew(kind, ta.data(), tb.data(), f);
        let shape = match kind {
            Bcast::LhsScalar | Bcast::LhsRow => tb.shape().to_vec(),
            _ => ta.shape().to_vec(),
        };
        self.push(Tensor::new(shape, out)?, make(a, b), name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_ew(a, b, |x, y| x + y, Op::Add, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_ew(a, b, |x, y| x - y, Op::Sub, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_ew(a, b, |x, y| x * y, Op::Mul, "mul")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NodaError::Dim(format!("matmul on shapes {sa:?} and {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_nn(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), m, k, n);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), "matmul")
    }

    fn unary(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        make: impl Fn(Var) -> Op,
        name: &str,
    ) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        let out: Vec<f64> = t.data().iter().map(|&x| f(x)).collect();
        self.push(Tensor::new(t.shape().to_vec(), out)?, make(a), name)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh, "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x.max(0.0), Op::Relu, "relu")
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        // max(x,0) + ln(1+e^{-|x|}) avoids overflow for large |x|
        self.unary(a, |x| x.max(0.0) + (-x.abs()).exp().ln_1p(), Op::Softplus, "softplus")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp, "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.nodes[a.0].value.data().iter().any(|&x| x <= 0.0) {
            return Err(NodaError::Domain("log of non-positive value".into()));
        }
        self.unary(a, f64::ln, Op::Log, "log")
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * x, Op::Square, "square")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |x| c * x, |v| Op::Scale(v, c), "scale")
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(a, |x| x.clamp(lo, hi), |v| Op::Clip { input: v, lo, hi }, "clip")
    }

    /// Full reduction to a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        if t.is_empty() {
            return Err(NodaError::Contract("mean of empty tensor".into()));
        }
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), "mean")
    }

    /// Sums over the last axis: `[b, n] -> [b, 1]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        if t.shape().len() != 2 {
            return Err(NodaError::Dim(format!("sum_rows on shape {:?}", t.shape())));
        }
        let n = t.shape()[1];
        let out: Vec<f64> = t.data().chunks_exact(n).map(|r| r.iter().sum()).collect();
        let b = t.shape()[0];
        self.push(Tensor::new(vec![b, 1], out)?, Op::SumRows(a), "sum_rows")
    }

    /// Concatenates along the last axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len() || sa.is_empty() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(NodaError::Dim(format!("concat on shapes {sa:?} and {sb:?}")));
        }
        let (na, nb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let (da, db) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let mut out = Vec::with_capacity(da.len() + db.len());
        for i in 0..rows {
            out.extend_from_slice(&da[i * na..(i + 1) * na]);
            out.extend_from_slice(&db[i * nb..(i + 1) * nb]);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = na + nb;
        self.push(Tensor::new(shape, out)?, Op::Concat(a, b), "concat")
    }

    /// Keeps columns `start..start+len` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let n = *sa.last().ok_or_else(|| NodaError::Dim("slice on rank-0".into()))?;
        if start + len > n {
            return Err(NodaError::Dim(format!(
                "slice {start}..{} out of axis of size {n}",
                start + len
            )));
        }
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let d = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(rows * len);
        for i in 0..rows {
            out.extend_from_slice(&d[i * n + start..i * n + start + len]);
        }
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = len;
        self.push(Tensor::new(shape, out)?, Op::Slice { input: a, start, len }, "slice")
    }

    /// Reverse pass from a scalar output. Consumes the tape and returns
    /// d(output)/d(p) for every registered parameter (zero where the
    /// output does not depend on p).
    pub fn backward(self, output: Var) -> Result<Gradients> {
        let out_t = &self.nodes[output.0].value;
        if !out_t.is_scalar() {
            return Err(NodaError::Contract(format!(
                "backward from non-scalar output of shape {:?}",
                out_t.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g); // keep for parameter extraction
                }
                Op::Add(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let kind = bcast_kind(ta.shape(), ta.len(), tb.shape(), tb.len())?;
                    accumulate(&mut grads, *a, reduce_to(&g, true, kind, ta.len()));
                    accumulate(&mut grads, *b, reduce_to(&g, false, kind, tb.len()));
                }
                Op::Sub(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let kind = bcast_kind(ta.shape(), ta.len(), tb.shape(), tb.len())?;
                    accumulate(&mut grads, *a, reduce_to(&g, true, kind, ta.len()));
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut grads, *b, reduce_to(&neg, false, kind, tb.len()));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let kind = bcast_kind(ta.shape(), ta.len(), tb.shape(), tb.len())?;
                    let full_len = ta.len().max(tb.len());
                    // d/da = g * b_broadcast, d/db = g * a_broadcast, both at
                    // the full output size, then reduced to each operand.
                    let ga_full = match kind {
                        Bcast::Same => ew(Bcast::Same, &g, tb.data(), |x, y| x * y),
                        Bcast::RhsScalar | Bcast::RhsRow => ew(kind, &g, tb.data(), |x, y| x * y),
                        Bcast::LhsScalar | Bcast::LhsRow => {
                            (0..full_len).map(|i| g[i] * tb.data()[i]).collect()
                        }
                    };
                    let gb_full = match kind {
                        Bcast::Same => ew(Bcast::Same, &g, ta.data(), |x, y| x * y),
                        Bcast::LhsScalar | Bcast::LhsRow => {
                            let flip = match kind {
                                Bcast::LhsScalar => Bcast::RhsScalar,
                                _ => Bcast::RhsRow,
                            };
                            ew(flip, &g, ta.data(), |x, y| x * y)
                        }
                        Bcast::RhsScalar | Bcast::RhsRow => {
                            (0..full_len).map(|i| g[i] * ta.data()[i]).collect()
                        }
                    };
                    accumulate(&mut grads, *a, reduce_to(&ga_full, true, kind, ta.len()));
                    accumulate(&mut grads, *b, reduce_to(&gb_full, false, kind, tb.len()));
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let (m, k) = (ta.shape()[0], ta.shape()[1]);
                    let n = tb.shape()[1];
                    accumulate(&mut grads, *a, matmul_nt(&g, tb.data(), m, n, k));
                    accumulate(&mut grads, *b, matmul_tn(ta.data(), &g, m, k, n));
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let gi = g.iter().zip(y).map(|(&gx, &yx)| gx * (1.0 - yx * yx)).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Relu(a) => {
                    let x = self.nodes[a.0].value.data();
                    let gi = g.iter().zip(x).map(|(&gx, &xv)| if xv > 0.0 { gx } else { 0.0 }).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Softplus(a) => {
                    let x = self.nodes[a.0].value.data();
                    let gi = g
                        .iter()
                        .zip(x)
                        .map(|(&gx, &xv)| gx / (1.0 + (-xv).exp()))
                        .collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    let gi = g.iter().zip(y).map(|(&gx, &yx)| gx * yx).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Log(a) => {
                    let x = self.nodes[a.0].value.data();
                    let gi = g.iter().zip(x).map(|(&gx, &xv)| gx / xv).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Square(a) => {
                    let x = self.nodes[a.0].value.data();
                    let gi = g.iter().zip(x).map(|(&gx, &xv)| 2.0 * xv * gx).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.len();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.len();
                    accumulate(&mut grads, *a, vec![g[0] / n as f64; n]);
                }
                Op::SumRows(a) => {
                    let n = self.nodes[a.0].value.shape()[1];
                    let gi: Vec<f64> = g.iter().flat_map(|&gx| std::iter::repeat(gx).take(n)).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Concat(a, b) => {
                    let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                    let (na, nb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
                    let rows: usize = sa[..sa.len() - 1].iter().product();
                    let mut ga = Vec::with_capacity(rows * na);
                    let mut gb = Vec::with_capacity(rows * nb);
                    for i in 0..rows {
                        let row = &g[i * (na + nb)..(i + 1) * (na + nb)];
                        ga.extend_from_slice(&row[..na]);
                        gb.extend_from_slice(&row[na..]);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Slice { input, start, len } => {
                    let s_in = self.nodes[input.0].value.shape();
                    let n = s_in[s_in.len() - 1];
                    let rows: usize = s_in[..s_in.len() - 1].iter().product();
                    let mut gi = vec![0.0; rows * n];
                    for i in 0..rows {
                        gi[i * n + start..i * n + start + len]
                            .copy_from_slice(&g[i * len..(i + 1) * len]);
                    }
                    accumulate(&mut grads, *input, gi);
                }
                Op::Scale(a, c) => {
                    let gi = g.iter().map(|&x| c * x).collect();
                    accumulate(&mut grads, *a, gi);
                }
                Op::Clip { input, lo, hi } => {
                    let x = self.nodes[input.0].value.data();
                    let gi = g
                        .iter()
                        .zip(x)
                        .map(|(&gx, &xv)| if xv >= *lo && xv <= *hi { gx } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *input, gi);
                }
            }
        }

        let mut out = Gradients::new();
        for (name, var) in &self.params {
            let shape = self.nodes[var.0].value.shape().to_vec();
            let data = match grads.get(var.0).and_then(|g| g.clone()) {
                Some(g) => g,
                None => vec![0.0; self.nodes[var.0].value.len()],
            };
            let t = Tensor::new(shape, data)
                .map_err(|_| NodaError::NonFinite(format!("gradient of `{name}`")))?;
            out.insert(name.clone(), t);
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut Vec<Option<Vec<f64>>>, v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot => *slot = Some(g),
    }
}
