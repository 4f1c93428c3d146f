//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Tape`] records every primitive applied to values that (transitively)
//! require gradients. [`Tensor`] is a cheap handle into the tape. Calling
//! [`Tensor::backward`] replays the recorded operations in reverse and
//! accumulates adjoints into every gradient-requiring leaf.
//!
//! Shapes are `(rows, cols)`, row-major. Binary operations broadcast a
//! dimension of size 1 against any size, numpy-style. All reductions use a
//! fixed chunked accumulation order (see [`crate::parallel`]), so forward and
//! backward passes are bit-identical regardless of thread count.
//!
//! Subgradient convention at kinks and ties: the left branch is chosen
//! consistently. `relu'(0) = 0`, `abs'(0) = -1`, clamp boundaries pass zero,
//! and axis maxima route the adjoint to the first occurrence.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::parallel::{chunked_sum, map_binary, map_unary};

/// (rows, cols), row-major storage.
pub type Shape = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnOp {
    Neg,
    Sin,
    Cos,
    Tanh,
    Sigmoid,
    Exp,
    /// ln(1 + e^x), overflow-safe.
    Softplus,
    Abs,
    Relu,
    Sqrt,
    Square,
    ClampMin(u64),
    ClampMax(u64),
    Scale(u64),
    AddConst(u64),
}

impl UnOp {
    fn bits(v: f64) -> u64 {
        v.to_bits()
    }
    fn val(bits: u64) -> f64 {
        f64::from_bits(bits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Unary(UnOp, usize),
    Binary(BinOp, usize, usize),
    Matmul(usize, usize),
    SliceCols(usize, usize, usize),
    SliceRows(usize, usize, usize),
    ConcatRows(Vec<usize>),
    SumAxis0(usize),
    MeanAxis0(usize),
    /// Per-column max; aux holds the argmax row per column.
    MaxAxis0(usize, Vec<usize>),
    SumAll(usize),
    MeanAll(usize),
    /// Cumulative trapezoidal integral down each column; aux is dt.
    CumTrapz(usize, u64),
    Reshape(usize),
    Transpose(usize),
}

struct Node {
    shape: Shape,
    data: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// Recording tape. Clone of the handle shares the same tape.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to a value recorded on a tape.
#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    id: usize,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Tensor#{}[{}x{}]", self.id, r, c)
    }
}

fn broadcast_shape(a: Shape, b: Shape) -> Shape {
    let r = if a.0 == b.0 {
        a.0
    } else if a.0 == 1 {
        b.0
    } else if b.0 == 1 {
        a.0
    } else {
        panic!("incompatible row broadcast: {a:?} vs {b:?}");
    };
    let c = if a.1 == b.1 {
        a.1
    } else if a.1 == 1 {
        b.1
    } else if b.1 == 1 {
        a.1
    } else {
        panic!("incompatible col broadcast: {a:?} vs {b:?}");
    };
    (r, c)
}

#[inline]
fn bidx(shape: Shape, r: usize, c: usize) -> usize {
    let rr = if shape.0 == 1 { 0 } else { r };
    let cc = if shape.1 == 1 { 0 } else { c };
    rr * shape.1 + cc
}

fn binary_forward(op: BinOp, a: &[f64], ash: Shape, b: &[f64], bsh: Shape) -> (Vec<f64>, Shape) {
    let osh = broadcast_shape(ash, bsh);
    let f = |x: f64, y: f64| -> f64 {
        match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
            // Left branch on ties: keep the first operand.
            BinOp::Min => {
                if x <= y {
                    x
                } else {
                    y
                }
            }
            BinOp::Max => {
                if x >= y {
                    x
                } else {
                    y
                }
            }
        }
    };
    if ash == bsh {
        return (map_binary(a, b, f), osh);
    }
    let mut out = vec![0.0; osh.0 * osh.1];
    for r in 0..osh.0 {
        for c in 0..osh.1 {
            out[r * osh.1 + c] = f(a[bidx(ash, r, c)], b[bidx(bsh, r, c)]);
        }
    }
    (out, osh)
}

/// Reduce an adjoint of shape `from` down to shape `to` by summing over
/// broadcast dimensions. Row sums use sequential per-column accumulation.
fn reduce_to_shape(g: &[f64], from: Shape, to: Shape) -> Vec<f64> {
    if from == to {
        return g.to_vec();
    }
    let mut out = vec![0.0; to.0 * to.1];
    for r in 0..from.0 {
        for c in 0..from.1 {
            out[bidx(to, r, c)] += g[r * from.1 + c];
        }
    }
    out
}

fn matmul(a: &[f64], (m, k): Shape, b: &[f64], (k2, n): Shape) -> Vec<f64> {
    assert_eq!(k, k2, "matmul inner dimension mismatch");
    let mut out = vec![0.0; m * n];
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

/// C += A^T * B where A is (k, m), B is (k, n), C is (m, n).
fn matmul_at_b(a: &[f64], (k, m): Shape, b: &[f64], (k2, n): Shape, c: &mut [f64]) {
    assert_eq!(k, k2);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// C += A * B^T where A is (m, k), B is (n, k), C is (m, n).
fn matmul_a_bt(a: &[f64], (m, k): Shape, b: &[f64], (n, k2): Shape, c: &mut [f64]) {
    assert_eq!(k, k2);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Shape, data: Vec<f64>, op: Op, requires_grad: bool) -> Tensor {
        debug_assert_eq!(shape.0 * shape.1, data.len(), "shape/data length mismatch");
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            shape,
            data,
            op,
            requires_grad,
        });
        inner.grads.push(None);
        Tensor {
            tape: self.clone(),
            id: inner.nodes.len() - 1,
        }
    }

    /// New leaf. `requires_grad` marks it as a differentiation target.
    pub fn leaf(&self, shape: Shape, data: Vec<f64>, requires_grad: bool) -> Tensor {
        assert!(
            data.iter().all(|v| v.is_finite()),
            "leaf data must be finite"
        );
        self.push(shape, data, Op::Leaf, requires_grad)
    }

    /// Constant (non-differentiable) tensor.
    pub fn constant(&self, shape: Shape, data: Vec<f64>) -> Tensor {
        self.push(shape, data, Op::Leaf, false)
    }

    /// Constant 1x1 scalar.
    pub fn scalar(&self, v: f64) -> Tensor {
        self.constant((1, 1), vec![v])
    }

    /// Drop all recorded gradients (the graph itself is kept).
    pub fn zero_grads(&self) {
        let mut inner = self.inner.borrow_mut();
        for g in inner.grads.iter_mut() {
            *g = None;
        }
    }
}

impl Tensor {
    pub fn shape(&self) -> Shape {
        self.tape.inner.borrow().nodes[self.id].shape
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    pub fn len(&self) -> usize {
        let (r, c) = self.shape();
        r * c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Vec<f64> {
        self.tape.inner.borrow().nodes[self.id].data.clone()
    }

    /// Forward value of a 1x1 tensor.
    pub fn scalar_value(&self) -> f64 {
        let inner = self.tape.inner.borrow();
        let n = &inner.nodes[self.id];
        assert_eq!(n.shape, (1, 1), "scalar_value on non-scalar");
        n.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    /// Accumulated gradient, if backward reached this node.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tape.inner.borrow().grads[self.id].clone()
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    fn same_tape(&self, other: &Tensor) {
        assert!(
            Rc::ptr_eq(&self.tape.inner, &other.tape.inner),
            "tensors from different tapes"
        );
    }

    fn unary(&self, op: UnOp) -> Tensor {
        let (shape, data, rg) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            let f = |x: f64| -> f64 {
                match op {
                    UnOp::Neg => -x,
                    UnOp::Sin => x.sin(),
                    UnOp::Cos => x.cos(),
                    UnOp::Tanh => x.tanh(),
                    UnOp::Sigmoid => 1.0 / (1.0 + (-x).exp()),
                    UnOp::Exp => x.exp(),
                    UnOp::Softplus => softplus(x),
                    UnOp::Abs => x.abs(),
                    UnOp::Relu => {
                        if x > 0.0 {
                            x
                        } else {
                            0.0
                        }
                    }
                    UnOp::Sqrt => x.sqrt(),
                    UnOp::Square => x * x,
                    UnOp::ClampMin(b) => x.max(UnOp::val(b)),
                    UnOp::ClampMax(b) => x.min(UnOp::val(b)),
                    UnOp::Scale(b) => x * UnOp::val(b),
                    UnOp::AddConst(b) => x + UnOp::val(b),
                }
            };
            (n.shape, map_unary(&n.data, f), n.requires_grad)
        };
        self.tape.push(shape, data, Op::Unary(op, self.id), rg)
    }

    fn binary(&self, other: &Tensor, op: BinOp) -> Tensor {
        self.same_tape(other);
        let (data, shape, rg) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[other.id];
            let (data, shape) = binary_forward(op, &a.data, a.shape, &b.data, b.shape);
            (data, shape, a.requires_grad || b.requires_grad)
        };
        self.tape
            .push(shape, data, Op::Binary(op, self.id, other.id), rg)
    }

    pub fn add(&self, o: &Tensor) -> Tensor {
        self.binary(o, BinOp::Add)
    }
    pub fn sub(&self, o: &Tensor) -> Tensor {
        self.binary(o, BinOp::Sub)
    }
    pub fn mul(&self, o: &Tensor) -> Tensor {
        self.binary(o, BinOp::Mul)
    }
    pub fn div(&self, o: &Tensor) -> Tensor {
        self.binary(o, BinOp::Div)
    }
    /// Elementwise minimum; ties keep the left operand's branch.
    pub fn minimum(&self, o: &Tensor) -> Tensor {
        self.binary(o, BinOp::Min)
    }
    /// Elementwise maximum; ties keep the left operand's branch.
    pub fn maximum(&self, o: &Tensor) -> Tensor {
        self.binary(o, BinOp::Max)
    }

    pub fn neg(&self) -> Tensor {
        self.unary(UnOp::Neg)
    }
    pub fn sin(&self) -> Tensor {
        self.unary(UnOp::Sin)
    }
    pub fn cos(&self) -> Tensor {
        self.unary(UnOp::Cos)
    }
    pub fn tanh(&self) -> Tensor {
        self.unary(UnOp::Tanh)
    }
    pub fn sigmoid(&self) -> Tensor {
        self.unary(UnOp::Sigmoid)
    }
    pub fn exp(&self) -> Tensor {
        self.unary(UnOp::Exp)
    }
    /// Overflow-safe ln(1 + e^x).
    pub fn softplus(&self) -> Tensor {
        self.unary(UnOp::Softplus)
    }
    pub fn abs(&self) -> Tensor {
        self.unary(UnOp::Abs)
    }
    pub fn relu(&self) -> Tensor {
        self.unary(UnOp::Relu)
    }
    pub fn sqrt(&self) -> Tensor {
        self.unary(UnOp::Sqrt)
    }
    pub fn square(&self) -> Tensor {
        self.unary(UnOp::Square)
    }
    pub fn clamp_min(&self, v: f64) -> Tensor {
        self.unary(UnOp::ClampMin(UnOp::bits(v)))
    }
    pub fn clamp_max(&self, v: f64) -> Tensor {
        self.unary(UnOp::ClampMax(UnOp::bits(v)))
    }
    pub fn scale(&self, v: f64) -> Tensor {
        self.unary(UnOp::Scale(UnOp::bits(v)))
    }
    pub fn add_const(&self, v: f64) -> Tensor {
        self.unary(UnOp::AddConst(UnOp::bits(v)))
    }

    /// Matrix product (m,k) x (k,n) -> (m,n).
    pub fn matmul(&self, o: &Tensor) -> Tensor {
        self.same_tape(o);
        let (data, shape, rg) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[o.id];
            assert_eq!(a.shape.1, b.shape.0, "matmul shape mismatch");
            let shape = (a.shape.0, b.shape.1);
            (
                matmul(&a.data, a.shape, &b.data, b.shape),
                shape,
                a.requires_grad || b.requires_grad,
            )
        };
        self.tape.push(shape, data, Op::Matmul(self.id, o.id), rg)
    }

    /// Columns `[from, to)`.
    pub fn slice_cols(&self, from: usize, to: usize) -> Tensor {
        let (shape, data, rg) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            assert!(from < to && to <= n.shape.1, "column slice out of range");
            let mut data = Vec::with_capacity(n.shape.0 * (to - from));
            for r in 0..n.shape.0 {
                data.extend_from_slice(&n.data[r * n.shape.1 + from..r * n.shape.1 + to]);
            }
            ((n.shape.0, to - from), data, n.requires_grad)
        };
        self.tape
            .push(shape, data, Op::SliceCols(self.id, from, to), rg)
    }

    /// Rows `[from, to)`.
    pub fn slice_rows(&self, from: usize, to: usize) -> Tensor {
        let (shape, data, rg) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            assert!(from < to && to <= n.shape.0, "row slice out of range");
            let data = n.data[from * n.shape.1..to * n.shape.1].to_vec();
            ((to - from, n.shape.1), data, n.requires_grad)
        };
        self.tape
            .push(shape, data, Op::SliceRows(self.id, from, to), rg)
    }

    /// Stack tensors with equal column counts on top of each other.
    pub fn concat_rows(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat of nothing");
        let tape = parts[0].tape.clone();
        let (shape, data, rg, ids) = {
            let inner = tape.inner.borrow();
            let cols = inner.nodes[parts[0].id].shape.1;
            let mut rows = 0;
            let mut rg = false;
            let mut data = Vec::new();
            let mut ids = Vec::with_capacity(parts.len());
            for p in parts {
                p.same_tape(&parts[0]);
                let n = &inner.nodes[p.id];
                assert_eq!(n.shape.1, cols, "concat_rows column mismatch");
                rows += n.shape.0;
                rg |= n.requires_grad;
                data.extend_from_slice(&n.data);
                ids.push(p.id);
            }
            ((rows, cols), data, rg, ids)
        };
        tape.push(shape, data, Op::ConcatRows(ids), rg)
    }

    /// Per-column sum -> (1, cols). Rows accumulate in index order.
    pub fn sum_axis0(&self) -> Tensor {
        let (data, cols, rg) = self.axis0_sum_raw();
        self.tape.push((1, cols), data, Op::SumAxis0(self.id), rg)
    }

    /// Per-column mean -> (1, cols).
    pub fn mean_axis0(&self) -> Tensor {
        let (mut data, cols, rg) = self.axis0_sum_raw();
        let rows = self.rows() as f64;
        for v in data.iter_mut() {
            *v /= rows;
        }
        self.tape.push((1, cols), data, Op::MeanAxis0(self.id), rg)
    }

    fn axis0_sum_raw(&self) -> (Vec<f64>, usize, bool) {
        let inner = self.tape.inner.borrow();
        let n = &inner.nodes[self.id];
        let (rows, cols) = n.shape;
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c] += n.data[r * cols + c];
            }
        }
        (out, cols, n.requires_grad)
    }

    /// Per-column max -> (1, cols); adjoint routes to the first maximal row.
    pub fn max_axis0(&self) -> Tensor {
        let (data, arg, cols, rg) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            let (rows, cols) = n.shape;
            assert!(rows > 0);
            let mut out = vec![f64::NEG_INFINITY; cols];
            let mut arg = vec![0usize; cols];
            for r in 0..rows {
                for c in 0..cols {
                    let v = n.data[r * cols + c];
                    if v > out[c] {
                        out[c] = v;
                        arg[c] = r;
                    }
                }
            }
            (out, arg, cols, n.requires_grad)
        };
        self.tape
            .push((1, cols), data, Op::MaxAxis0(self.id, arg), rg)
    }

    /// Sum of all entries -> scalar (fixed chunked order).
    pub fn sum_all(&self) -> Tensor {
        let (v, rg) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            (chunked_sum(&n.data), n.requires_grad)
        };
        self.tape.push((1, 1), vec![v], Op::SumAll(self.id), rg)
    }

    /// Mean of all entries -> scalar.
    pub fn mean_all(&self) -> Tensor {
        let (v, rg, len) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            (chunked_sum(&n.data), n.requires_grad, n.data.len())
        };
        self.tape
            .push((1, 1), vec![v / len as f64], Op::MeanAll(self.id), rg)
    }

    /// Per-column standard deviation -> (1, cols), as a differentiable
    /// composite (population std over rows).
    pub fn std_axis0(&self) -> Tensor {
        let mean = self.mean_axis0();
        let centered = self.sub(&mean);
        centered.square().mean_axis0().sqrt()
    }

    /// Cumulative trapezoidal integral down each column, starting at zero.
    pub fn cumtrapz_axis0(&self, dt: f64) -> Tensor {
        let (shape, data, rg) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            let (rows, cols) = n.shape;
            let mut out = vec![0.0; rows * cols];
            for c in 0..cols {
                let mut acc = 0.0;
                for r in 1..rows {
                    acc += dt * 0.5 * (n.data[(r - 1) * cols + c] + n.data[r * cols + c]);
                    out[r * cols + c] = acc;
                }
            }
            (n.shape, out, n.requires_grad)
        };
        self.tape
            .push(shape, data, Op::CumTrapz(self.id, UnOp::bits(dt)), rg)
    }

    pub fn reshape(&self, shape: Shape) -> Tensor {
        let (data, rg) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            assert_eq!(n.shape.0 * n.shape.1, shape.0 * shape.1, "reshape size");
            (n.data.clone(), n.requires_grad)
        };
        self.tape.push(shape, data, Op::Reshape(self.id), rg)
    }

    pub fn transpose(&self) -> Tensor {
        let (shape, data, rg) = {
            let inner = self.tape.inner.borrow();
            let n = &inner.nodes[self.id];
            let (r0, c0) = n.shape;
            let mut out = vec![0.0; r0 * c0];
            for r in 0..r0 {
                for c in 0..c0 {
                    out[c * r0 + r] = n.data[r * c0 + c];
                }
            }
            ((c0, r0), out, n.requires_grad)
        };
        self.tape.push(shape, data, Op::Transpose(self.id), rg)
    }

    /// mask*self + (1-mask)*other, with a constant 0/1 mask.
    pub fn select(&self, mask: &Tensor, other: &Tensor) -> Tensor {
        let inv = mask.neg().add_const(1.0);
        self.mul(mask).add(&other.mul(&inv))
    }

    /// Accumulate adjoints into every gradient-requiring node reachable from
    /// this scalar. Repeated calls keep accumulating.
    pub fn backward(&self) {
        assert_eq!(self.shape(), (1, 1), "backward requires a scalar loss");
        let mut inner = self.tape.inner.borrow_mut();
        let inner = &mut *inner;
        if !inner.nodes[self.id].requires_grad {
            return;
        }
        // Local adjoint buffer per node for this pass.
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.id + 1];
        adj[self.id] = Some(vec![1.0]);

        for id in (0..=self.id).rev() {
            let g = match adj[id].take() {
                Some(g) => g,
                None => continue,
            };
            let (op, shape) = (inner.nodes[id].op.clone(), inner.nodes[id].shape);
            match op {
                Op::Leaf => {}
                Op::Unary(u, p) => {
                    if inner.nodes[p].requires_grad {
                        let pdata = &inner.nodes[p].data;
                        let mut pg = adj[p].take().unwrap_or_else(|| vec![0.0; pdata.len()]);
                        for i in 0..pdata.len() {
                            let x = pdata[i];
                            let d = match u {
                                UnOp::Neg => -1.0,
                                UnOp::Sin => x.cos(),
                                UnOp::Cos => -x.sin(),
                                UnOp::Tanh => {
                                    let t = x.tanh();
                                    1.0 - t * t
                                }
                                UnOp::Sigmoid => {
                                    let s = 1.0 / (1.0 + (-x).exp());
                                    s * (1.0 - s)
                                }
                                UnOp::Exp => x.exp(),
                                UnOp::Softplus => 1.0 / (1.0 + (-x).exp()),
                                UnOp::Abs => {
                                    if x > 0.0 {
                                        1.0
                                    } else {
                                        -1.0
                                    }
                                }
                                UnOp::Relu => {
                                    if x > 0.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                UnOp::Sqrt => {
                                    if x > 0.0 {
                                        0.5 / x.sqrt()
                                    } else {
                                        0.0
                                    }
                                }
                                UnOp::Square => 2.0 * x,
                                UnOp::ClampMin(b) => {
                                    if x > UnOp::val(b) {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                UnOp::ClampMax(b) => {
                                    if x < UnOp::val(b) {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                UnOp::Scale(b) => UnOp::val(b),
                                UnOp::AddConst(_) => 1.0,
                            };
                            pg[i] += g[i] * d;
                        }
                        adj[p] = Some(pg);
                    }
                }
                Op::Binary(b, pa, pb) => {
                    let ash = inner.nodes[pa].shape;
                    let bsh = inner.nodes[pb].shape;
                    let (ga, gb): (Vec<f64>, Vec<f64>) = {
                        let ad = &inner.nodes[pa].data;
                        let bd = &inner.nodes[pb].data;
                        let mut ga = vec![0.0; shape.0 * shape.1];
                        let mut gb = vec![0.0; shape.0 * shape.1];
                        for r in 0..shape.0 {
                            for c in 0..shape.1 {
                                let i = r * shape.1 + c;
                                let x = ad[bidx(ash, r, c)];
                                let y = bd[bidx(bsh, r, c)];
                                let (da, db) = match b {
                                    BinOp::Add => (1.0, 1.0),
                                    BinOp::Sub => (1.0, -1.0),
                                    BinOp::Mul => (y, x),
                                    BinOp::Div => (1.0 / y, -x / (y * y)),
                                    BinOp::Min => {
                                        if x <= y {
                                            (1.0, 0.0)
                                        } else {
                                            (0.0, 1.0)
                                        }
                                    }
                                    BinOp::Max => {
                                        if x >= y {
                                            (1.0, 0.0)
                                        } else {
                                            (0.0, 1.0)
                                        }
                                    }
                                };
                                ga[i] = g[i] * da;
                                gb[i] = g[i] * db;
                            }
                        }
                        (ga, gb)
                    };
                    if inner.nodes[pa].requires_grad {
                        let red = reduce_to_shape(&ga, shape, ash);
                        let pg = adj[pa].get_or_insert_with(|| vec![0.0; ash.0 * ash.1]);
                        for (o, v) in pg.iter_mut().zip(red) {
                            *o += v;
                        }
                    }
                    if inner.nodes[pb].requires_grad {
                        let red = reduce_to_shape(&gb, shape, bsh);
                        let pg = adj[pb].get_or_insert_with(|| vec![0.0; bsh.0 * bsh.1]);
                        for (o, v) in pg.iter_mut().zip(red) {
                            *o += v;
                        }
                    }
                }
                Op::Matmul(pa, pb) => {
                    let ash = inner.nodes[pa].shape;
                    let bsh = inner.nodes[pb].shape;
                    if inner.nodes[pa].requires_grad {
                        let bd = &inner.nodes[pb].data;
                        let mut pg = adj[pa].take().unwrap_or_else(|| vec![0.0; ash.0 * ash.1]);
                        matmul_a_bt(&g, shape, bd, bsh, &mut pg);
                        adj[pa] = Some(pg);
                    }
                    if inner.nodes[pb].requires_grad {
                        let ad = &inner.nodes[pa].data;
                        let mut pg = adj[pb].take().unwrap_or_else(|| vec![0.0; bsh.0 * bsh.1]);
                        matmul_at_b(ad, ash, &g, shape, &mut pg);
                        adj[pb] = Some(pg);
                    }
                }
                Op::SliceCols(p, from, _to) => {
                    if inner.nodes[p].requires_grad {
                        let psh = inner.nodes[p].shape;
                        let pg = adj[p].get_or_insert_with(|| vec![0.0; psh.0 * psh.1]);
                        for r in 0..shape.0 {
                            for c in 0..shape.1 {
                                pg[r * psh.1 + from + c] += g[r * shape.1 + c];
                            }
                        }
                    }
                }
                Op::SliceRows(p, from, _to) => {
                    if inner.nodes[p].requires_grad {
                        let psh = inner.nodes[p].shape;
                        let pg = adj[p].get_or_insert_with(|| vec![0.0; psh.0 * psh.1]);
                        for i in 0..g.len() {
                            pg[from * psh.1 + i] += g[i];
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut row = 0usize;
                    for p in parts {
                        let psh = inner.nodes[p].shape;
                        if inner.nodes[p].requires_grad {
                            let pg = adj[p].get_or_insert_with(|| vec![0.0; psh.0 * psh.1]);
                            let start = row * shape.1;
                            for (o, v) in pg
                                .iter_mut()
                                .zip(&g[start..start + psh.0 * psh.1])
                            {
                                *o += v;
                            }
                        }
                        row += psh.0;
                    }
                }
                Op::SumAxis0(p) | Op::MeanAxis0(p) => {
                    if inner.nodes[p].requires_grad {
                        let psh = inner.nodes[p].shape;
                        let scale = if matches!(op, Op::MeanAxis0(_)) {
                            1.0 / psh.0 as f64
                        } else {
                            1.0
                        };
                        let pg = adj[p].get_or_insert_with(|| vec![0.0; psh.0 * psh.1]);
                        for r in 0..psh.0 {
                            for c in 0..psh.1 {
                                pg[r * psh.1 + c] += g[c] * scale;
                            }
                        }
                    }
                }
                Op::MaxAxis0(p, arg) => {
                    if inner.nodes[p].requires_grad {
                        let psh = inner.nodes[p].shape;
                        let pg = adj[p].get_or_insert_with(|| vec![0.0; psh.0 * psh.1]);
                        for c in 0..psh.1 {
                            pg[arg[c] * psh.1 + c] += g[c];
                        }
                    }
                }
                Op::SumAll(p) | Op::MeanAll(p) => {
                    if inner.nodes[p].requires_grad {
                        let psh = inner.nodes[p].shape;
                        let len = psh.0 * psh.1;
                        let scale = if matches!(op, Op::MeanAll(_)) {
                            1.0 / len as f64
                        } else {
                            1.0
                        };
                        let pg = adj[p].get_or_insert_with(|| vec![0.0; len]);
                        let gv = g[0] * scale;
                        for o in pg.iter_mut() {
                            *o += gv;
                        }
                    }
                }
                Op::CumTrapz(p, dtb) => {
                    if inner.nodes[p].requires_grad {
                        let dt = UnOp::val(dtb);
                        let psh = inner.nodes[p].shape;
                        let (rows, cols) = psh;
                        let pg = adj[p].get_or_insert_with(|| vec![0.0; rows * cols]);
                        // y[t] = dt*(x[0]/2 + x[1] + .. + x[t-1] + x[t]/2),
                        // y[0] = 0, so adj_x[k] = dt*(g[k]/2 + sum_{t>k} g[t])
                        // for k >= 1 and dt/2 * sum_{t>=1} g[t] for k = 0.
                        for c in 0..cols {
                            let mut suffix = 0.0;
                            for r in (0..rows).rev() {
                                if r == 0 {
                                    pg[c] += dt * 0.5 * suffix;
                                } else {
                                    let gr = g[r * cols + c];
                                    pg[r * cols + c] += dt * (0.5 * gr + suffix);
                                    suffix += gr;
                                }
                            }
                        }
                    }
                }
                Op::Reshape(p) => {
                    if inner.nodes[p].requires_grad {
                        let psh = inner.nodes[p].shape;
                        let pg = adj[p].get_or_insert_with(|| vec![0.0; psh.0 * psh.1]);
                        for (o, v) in pg.iter_mut().zip(&g) {
                            *o += v;
                        }
                    }
                }
                Op::Transpose(p) => {
                    if inner.nodes[p].requires_grad {
                        let psh = inner.nodes[p].shape;
                        let pg = adj[p].get_or_insert_with(|| vec![0.0; psh.0 * psh.1]);
                        for r in 0..shape.0 {
                            for c in 0..shape.1 {
                                pg[c * psh.1 + r] += g[r * shape.1 + c];
                            }
                        }
                    }
                }
            }
            // Persist adjoints for gradient-requiring leaves; repeated
            // backward calls keep accumulating.
            if inner.nodes[id].requires_grad && matches!(inner.nodes[id].op, Op::Leaf) {
                let store = &mut inner.grads[id];
                match store {
                    Some(buf) => {
                        for (o, v) in buf.iter_mut().zip(&g) {
                            *o += v;
                        }
                    }
                    None => *store = Some(g),
                }
            }
        }
    }
}

/// Overflow-safe softplus.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite-difference gradient of a scalar-valued graph builder
    /// with respect to one leaf.
    fn fd_grad(
        build: &dyn Fn(&Tape, &[Vec<f64>]) -> Tensor,
        inputs: &[Vec<f64>],
        which: usize,
        step: f64,
    ) -> Vec<f64> {
        let mut g = vec![0.0; inputs[which].len()];
        for i in 0..g.len() {
            let mut plus = inputs.to_vec();
            plus[which][i] += step;
            let mut minus = inputs.to_vec();
            minus[which][i] -= step;
            let fp = build(&Tape::new(), &plus).scalar_value();
            let fm = build(&Tape::new(), &minus).scalar_value();
            g[i] = (fp - fm) / (2.0 * step);
        }
        g
    }

    fn check_grads(
        build: &dyn Fn(&Tape, &[Vec<f64>]) -> Tensor,
        inputs: &[Vec<f64>],
        tol: f64,
    ) {
        let tape = Tape::new();
        let loss = build(&tape, inputs);
        loss.backward();
        // Rebuild to grab leaf handles in the same order the builder made them.
        // Leaves are the first `inputs.len()` nodes by construction here.
        for (w, input) in inputs.iter().enumerate() {
            let got = {
                let inner = tape.inner.borrow();
                inner.grads[w].clone().unwrap_or_else(|| vec![0.0; input.len()])
            };
            let want = fd_grad(build, inputs, w, 1e-6);
            for i in 0..want.len() {
                let denom = want[i].abs().max(1.0);
                assert!(
                    (got[i] - want[i]).abs() <= tol * denom,
                    "leaf {w} slot {i}: autodiff {} vs fd {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(lo..hi)).collect()
    }

    #[test]
    fn tanh_derivative_at_zero_is_one() {
        let tape = Tape::new();
        let x = tape.leaf((1, 1), vec![0.0], true);
        let y = x.tanh();
        y.backward();
        assert_eq!(x.grad().unwrap()[0], 1.0);
    }

    #[test]
    fn softplus_derivative_at_zero_is_half() {
        let tape = Tape::new();
        let x = tape.leaf((1, 1), vec![0.0], true);
        x.softplus().backward();
        assert_eq!(x.grad().unwrap()[0], 0.5);
    }

    #[test]
    fn sum_of_squares_gradient_is_two_x() {
        let tape = Tape::new();
        let x = tape.leaf((2, 3), vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.5], true);
        x.square().sum_all().backward();
        let g = x.grad().unwrap();
        for (gi, xi) in g.iter().zip(x.value()) {
            assert_eq!(*gi, 2.0 * xi);
        }
    }

    #[test]
    fn disconnected_leaf_has_no_grad() {
        let tape = Tape::new();
        let x = tape.leaf((1, 1), vec![1.0], true);
        let y = tape.leaf((1, 1), vec![2.0], true);
        x.square().backward();
        assert!(x.grad().is_some());
        assert!(y.grad().is_none());
    }

    #[test]
    fn repeated_backward_doubles_grads() {
        let tape = Tape::new();
        let x = tape.leaf((1, 2), vec![1.5, -0.5], true);
        let loss = x.square().sum_all();
        loss.backward();
        let g1 = x.grad().unwrap();
        loss.backward();
        let g2 = x.grad().unwrap();
        for (a, b) in g1.iter().zip(g2) {
            assert_eq!(2.0 * a, b);
        }
    }

    #[test]
    fn three_layer_random_composition_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..5 {
            let w1 = rand_vec(&mut rng, 12, -0.8, 0.8);
            let w2 = rand_vec(&mut rng, 12, -0.8, 0.8);
            let x = rand_vec(&mut rng, 8, -0.9, 0.9);
            let build = move |tape: &Tape, ins: &[Vec<f64>]| {
                let w1 = tape.leaf((4, 3), ins[0].clone(), true);
                let w2 = tape.leaf((3, 4), ins[1].clone(), true);
                let x = tape.leaf((2, 4), ins[2].clone(), true);
                let h1 = x.matmul(&w2.transpose()).tanh();
                let h2 = h1.matmul(&w1.transpose()).sigmoid();
                h2.square().mean_all()
            };
            check_grads(&build, &[w1, w2, x], 1e-6);
            let _ = trial;
        }
    }

    #[test]
    fn elementwise_and_reduction_primitives_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = rand_vec(&mut rng, 12, 0.3, 1.7); // positive: div/sqrt-safe
        let b = rand_vec(&mut rng, 12, 0.4, 1.9);
        let build = |tape: &Tape, ins: &[Vec<f64>]| {
            let a = tape.leaf((3, 4), ins[0].clone(), true);
            let b = tape.leaf((3, 4), ins[1].clone(), true);
            let t = a
                .mul(&b)
                .add(&a.div(&b))
                .sub(&a.sin().mul(&b.cos()))
                .add(&a.exp().scale(0.1))
                .add(&a.sqrt())
                .add(&a.softplus())
                .add(&a.sigmoid());
            let u = t.mean_axis0().square().sum_all();
            let v = t.std_axis0().sum_all();
            let w = t.cumtrapz_axis0(0.01).sum_all();
            u.add(&v).add(&w)
        };
        check_grads(&build, &[a, b], 1e-5);
    }

    #[test]
    fn broadcast_row_vector_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = rand_vec(&mut rng, 12, -1.0, 1.0);
        let r = rand_vec(&mut rng, 4, 0.5, 1.5);
        let s = rand_vec(&mut rng, 1, 0.5, 1.5);
        let build = |tape: &Tape, ins: &[Vec<f64>]| {
            let a = tape.leaf((3, 4), ins[0].clone(), true);
            let r = tape.leaf((1, 4), ins[1].clone(), true);
            let s = tape.leaf((1, 1), ins[2].clone(), true);
            a.mul(&r).add(&r).div(&s).square().mean_all()
        };
        check_grads(&build, &[a, r, s], 1e-6);
    }

    #[test]
    fn slicing_and_concat_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let a = rand_vec(&mut rng, 24, -1.0, 1.0);
        let build = |tape: &Tape, ins: &[Vec<f64>]| {
            let a = tape.leaf((4, 6), ins[0].clone(), true);
            let left = a.slice_cols(0, 2);
            let right = a.slice_cols(2, 6).slice_cols(1, 3);
            let top = a.slice_rows(0, 2);
            let cat = Tensor::concat_rows(&[left.clone(), right.clone()]);
            cat.square()
                .sum_all()
                .add(&top.sin().sum_all())
                .add(&left.mul(&right).mean_all())
        };
        check_grads(&build, &[a], 1e-6);
    }

    #[test]
    fn max_and_clamp_away_from_kinks_match_fd() {
        let a = vec![0.9, -0.4, 1.7, 0.2, -1.3, 0.6, 2.2, -0.8];
        let build = |tape: &Tape, ins: &[Vec<f64>]| {
            let a = tape.leaf((4, 2), ins[0].clone(), true);
            a.max_axis0()
                .sum_all()
                .add(&a.relu().sum_all())
                .add(&a.abs().mean_all())
                .add(&a.clamp_min(0.1).clamp_max(1.5).sum_all())
        };
        check_grads(&build, &[a], 1e-6);
    }

    #[test]
    fn kink_subgradients_take_left_branch() {
        let tape = Tape::new();
        let x = tape.leaf((1, 3), vec![0.0, 0.0, 0.0], true);
        x.relu().sum_all().backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 0.0]);
        let tape = Tape::new();
        let x = tape.leaf((1, 1), vec![0.0], true);
        x.abs().backward();
        assert_eq!(x.grad().unwrap()[0], -1.0);
        // Axis max tie: adjoint routes to the first maximal row.
        let tape = Tape::new();
        let x = tape.leaf((2, 1), vec![1.0, 1.0], true);
        x.max_axis0().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn cumtrapz_forward_matches_reference() {
        let tape = Tape::new();
        let dt = 0.1;
        let x = tape.leaf((4, 1), vec![1.0, 2.0, 4.0, 8.0], true);
        let y = x.cumtrapz_axis0(dt).value();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 0.15).abs() < 1e-15);
        assert!((y[2] - 0.45).abs() < 1e-15);
        assert!((y[3] - 1.05).abs() < 1e-15);
    }

    #[test]
    fn matmul_matches_hand_product() {
        let tape = Tape::new();
        let a = tape.constant((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = tape.constant((3, 2), vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b).value();
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn select_blends_by_mask() {
        let tape = Tape::new();
        let a = tape.leaf((1, 3), vec![1.0, 2.0, 3.0], true);
        let b = tape.leaf((1, 3), vec![10.0, 20.0, 30.0], true);
        let m = tape.constant((1, 3), vec![1.0, 0.0, 1.0]);
        let s = a.select(&m, &b);
        assert_eq!(s.value(), vec![1.0, 20.0, 3.0]);
        s.sum_all().backward();
        assert_eq!(a.grad().unwrap(), vec![1.0, 0.0, 1.0]);
        assert_eq!(b.grad().unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn single_threaded_determinism() {
        let run = || {
            let tape = Tape::new();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let x = tape.leaf((64, 8), rand_vec(&mut rng, 512, -1.0, 1.0), true);
            let y = x.tanh().matmul(&x.transpose().slice_rows(0, 8)).mean_all();
            y.backward();
            (y.scalar_value().to_bits(), x.grad().unwrap()[17].to_bits())
        };
        assert_eq!(run(), run());
    }
}
