//! Define-by-run reverse-mode automatic differentiation over dense `f64`
//! matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. Nodes are appended
//! after their inputs, so the tape order is already a topological order and
//! [`Tape::backward`] is a single reverse sweep. Trainable values live in a
//! [`ParamSet`]; binding a parameter onto a tape with [`Tape::param`] makes a
//! leaf whose adjoint can later be accumulated back into the parameter's
//! gradient with [`Gradients::accumulate`].
//!
//! ```
//! use umatch::autodiff::{ParamSet, Tape};
//! use ndarray::arr2;
//!
//! let mut params = ParamSet::new();
//! params.push("p", arr2(&[[3.0]]));
//! let tape = Tape::new();
//! let p = tape.param(&params, 0);
//! let y = tape.square(p);
//! tape.backward(y).unwrap().accumulate(&mut params);
//! assert_eq!(params[0].grad[[0, 0]], 6.0);
//! ```

use std::cell::RefCell;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, Axis};

use crate::{Error, Matrix, Result};

/// Operation kinds accepted by [`Tape::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Matmul,
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Softplus,
    Log,
    Exp,
    Square,
    Abs,
    Sum,
    Mean,
    /// Broadcast the first input to the shape of the second.
    Broadcast,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Matmul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softplus => "softplus",
            OpKind::Log => "log",
            OpKind::Exp => "exp",
            OpKind::Square => "square",
            OpKind::Abs => "abs",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Broadcast => "broadcast",
        }
    }

    fn arity(self) -> usize {
        match self {
            OpKind::Matmul | OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Broadcast => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Constant,
    Param { set: u64, index: usize },
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    Log(usize),
    Exp(usize),
    Square(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    Broadcast(usize),
    Scale(usize, f64),
    Offset(usize),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that made it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable (or frozen) named matrix with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Parameter {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }
}

static NEXT_SET_ID: AtomicU64 = AtomicU64::new(1);

/// An ordered collection of parameters with a process-unique identity.
///
/// The identity keeps gradients from one set from being accumulated into
/// another when several sets are bound onto the same tape.
#[derive(Debug)]
pub struct ParamSet {
    id: u64,
    params: Vec<Parameter>,
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        ParamSet {
            id: NEXT_SET_ID.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
        }
    }
}

impl PartialEq for ParamSet {
    /// Compares contents only.
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            id: NEXT_SET_ID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.params.push(Parameter::new(name, value));
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Parameter> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// True when every value matches `other` bit for bit.
    pub fn bitwise_eq(&self, other: &ParamSet) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.dim() == b.value.dim()
                    && a.value
                        .iter()
                        .zip(b.value.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

impl Index<usize> for ParamSet {
    type Output = Parameter;
    fn index(&self, i: usize) -> &Parameter {
        &self.params[i]
    }
}

impl IndexMut<usize> for ParamSet {
    fn index_mut(&mut self, i: usize) -> &mut Parameter {
        &mut self.params[i]
    }
}

/// Records operations for one forward pass. Single-threaded by construction.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

fn shape(m: &Matrix) -> (usize, usize) {
    m.dim()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    /// Copy of a node's value.
    pub fn value(&self, v: Var) -> Matrix {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape(&self.nodes.borrow()[v.0].value)
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value[[0, 0]]
    }

    /// Column `col` of a node's value.
    pub fn column(&self, v: Var, col: usize) -> Vec<f64> {
        self.nodes.borrow()[v.0].value.column(col).to_vec()
    }

    pub fn constant(&self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// An n×1 constant from a slice.
    pub fn column_constant(&self, values: &[f64]) -> Var {
        let m = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .expect("column shape always matches slice length");
        self.constant(m)
    }

    pub fn scalar_constant(&self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    /// Binds `params[index]` as a leaf. Frozen parameters become constants.
    pub fn param(&self, params: &ParamSet, index: usize) -> Var {
        let p = &params.params[index];
        if p.trainable {
            self.push(p.value.clone(), Op::Param { set: params.id, index })
        } else {
            self.constant(p.value.clone())
        }
    }

    /// Binds every parameter in order.
    pub fn params(&self, params: &ParamSet) -> Vec<Var> {
        (0..params.len()).map(|i| self.param(params, i)).collect()
    }

    /// Generic dispatcher over [`OpKind`].
    pub fn apply(&self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != kind.arity() {
            return Err(Error::config(format!(
                "{kind} expects {} input(s), got {}",
                kind.arity(),
                inputs.len()
            )));
        }
        let a = inputs[0];
        match kind {
            OpKind::Matmul => self.matmul(a, inputs[1]),
            OpKind::Add => self.add(a, inputs[1]),
            OpKind::Sub => self.sub(a, inputs[1]),
            OpKind::Mul => self.mul(a, inputs[1]),
            OpKind::Broadcast => {
                let (r, c) = self.shape(inputs[1]);
                self.broadcast(a, r, c)
            }
            OpKind::Relu => Ok(self.relu(a)),
            OpKind::Sigmoid => Ok(self.sigmoid(a)),
            OpKind::Softplus => Ok(self.softplus(a)),
            OpKind::Log => Ok(self.log(a)),
            OpKind::Exp => Ok(self.exp(a)),
            OpKind::Square => Ok(self.square(a)),
            OpKind::Abs => Ok(self.abs(a)),
            OpKind::Sum => Ok(self.sum(a)),
            OpKind::Mean => Ok(self.mean(a)),
        }
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            if x.ncols() != y.nrows() {
                return Err(Error::Shape {
                    op: "matmul",
                    lhs: shape(x),
                    rhs: shape(y),
                });
            }
            x.dot(y)
        };
        Ok(self.push(value, Op::Matmul(a.0, b.0)))
    }

    fn elementwise(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            if x.dim() != y.dim() {
                return Err(Error::Shape {
                    op,
                    lhs: shape(x),
                    rhs: shape(y),
                });
            }
            let mut out = x.clone();
            out.zip_mut_with(y, |o, &v| *o = f(*o, v));
            out
        };
        Ok(self.push(value, make(a.0, b.0)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.nodes.borrow()[a.0].value.mapv(f);
        self.push(value, op)
    }

    pub fn relu(&self, a: Var) -> Var {
        // NaN propagates (f64::max would swallow it).
        self.unary(a, |x| if x > 0.0 || x.is_nan() { x } else { 0.0 }, Op::Relu(a.0))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn softplus(&self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a.0))
    }

    pub fn log(&self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a.0))
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a.0))
    }

    pub fn abs(&self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a.0))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a.0, c))
    }

    pub fn offset(&self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::Offset(a.0))
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn sum(&self, a: Var) -> Var {
        let s = self.nodes.borrow()[a.0].value.sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a.0))
    }

    /// Mean over all entries. The mean of an empty matrix is NaN.
    pub fn mean(&self, a: Var) -> Var {
        let s = {
            let nodes = self.nodes.borrow();
            let v = &nodes[a.0].value;
            v.sum() / v.len() as f64
        };
        self.push(Array2::from_elem((1, 1), s), Op::Mean(a.0))
    }

    /// Broadcasts a 1×1, 1×c or r×1 node to r×c.
    pub fn broadcast(&self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let (r, c) = shape(x);
            if !((r == 1 || r == rows) && (c == 1 || c == cols)) {
                return Err(Error::Shape {
                    op: "broadcast",
                    lhs: (r, c),
                    rhs: (rows, cols),
                });
            }
            x.broadcast((rows, cols))
                .expect("broadcast compatibility checked above")
                .to_owned()
        };
        Ok(self.push(value, Op::Broadcast(a.0)))
    }

    /// Adds a bias row (1×c) to every row of `a`.
    pub fn add_row(&self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let b = self.broadcast(bias, r, c)?;
        self.add(a, b)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let (rows, cols) = shape(&nodes[root.0].value);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarRoot { rows, cols });
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Array2::ones((1, 1)));

        fn accumulate(adj: &mut [Option<Matrix>], i: usize, g: Matrix) {
            match &mut adj[i] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &nodes[i];
            match node.op {
                Op::Constant | Op::Param { .. } => {}
                Op::Matmul(a, b) => {
                    let ga = g.dot(&nodes[b].value.t());
                    let gb = nodes[a].value.t().dot(&g);
                    accumulate(&mut adj, a, ga);
                    accumulate(&mut adj, b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, a, g.clone());
                    accumulate(&mut adj, b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, b, -&g);
                    accumulate(&mut adj, a, g.clone());
                }
                Op::Mul(a, b) => {
                    accumulate(&mut adj, a, &g * &nodes[b].value);
                    accumulate(&mut adj, b, &g * &nodes[a].value);
                }
                Op::Relu(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&nodes[a].value, |d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    accumulate(&mut adj, a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&node.value, |d, &s| *d *= s * (1.0 - s));
                    accumulate(&mut adj, a, d);
                }
                Op::Softplus(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&nodes[a].value, |d, &x| *d *= sigmoid(x));
                    accumulate(&mut adj, a, d);
                }
                Op::Log(a) => accumulate(&mut adj, a, &g / &nodes[a].value),
                Op::Exp(a) => accumulate(&mut adj, a, &g * &node.value),
                Op::Square(a) => accumulate(&mut adj, a, &g * &nodes[a].value * 2.0),
                Op::Abs(a) => {
                    // Subgradient 0 at exactly 0.
                    let mut d = g.clone();
                    d.zip_mut_with(&nodes[a].value, |d, &x| {
                        *d *= if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut adj, a, d);
                }
                Op::Sum(a) => {
                    let d = Array2::from_elem(nodes[a].value.raw_dim(), g[[0, 0]]);
                    accumulate(&mut adj, a, d);
                }
                Op::Mean(a) => {
                    let n = nodes[a].value.len() as f64;
                    let d = Array2::from_elem(nodes[a].value.raw_dim(), g[[0, 0]] / n);
                    accumulate(&mut adj, a, d);
                }
                Op::Broadcast(a) => {
                    let (r, c) = shape(&nodes[a].value);
                    let mut d = g.clone();
                    if r == 1 && d.nrows() != 1 {
                        d = d.sum_axis(Axis(0)).insert_axis(Axis(0));
                    }
                    if c == 1 && d.ncols() != 1 {
                        d = d.sum_axis(Axis(1)).insert_axis(Axis(1));
                    }
                    accumulate(&mut adj, a, d);
                }
                Op::Scale(a, c) => accumulate(&mut adj, a, &g * c),
                Op::Offset(a) => accumulate(&mut adj, a, g.clone()),
            }
            adj[i] = Some(g);
        }

        let bindings = nodes[..=root.0]
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param { set, index } => Some((set, index, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            adjoints: adj,
            bindings,
        })
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    bindings: Vec<(u64, usize, usize)>,
}

impl Gradients {
    /// ∂root/∂v, or `None` when `v` does not reach the root.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adds the adjoints of every leaf bound from `params` into their
    /// gradients. Gradients are not zeroed first.
    pub fn accumulate(&self, params: &mut ParamSet) {
        for &(set, index, node) in &self.bindings {
            if set != params.id {
                continue;
            }
            if let Some(g) = &self.adjoints[node] {
                params.params[index].grad += g;
            }
        }
    }
}

/// A gradient entry that disagreed with its finite-difference estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FdMismatch {
    pub param: String,
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
    pub flagged: Vec<FdMismatch>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Relative error floor so that entries whose true gradient is ~0 are
/// compared absolutely rather than amplified by a vanishing denominator.
pub const FD_REL_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_REL_FLOOR)
}

/// Compares [`Tape::backward`] gradients with central differences for every
/// trainable entry of `params`.
///
/// `f` receives a fresh tape and the parameters bound in order, and must
/// return a scalar node. `params` values are restored before returning;
/// their gradients are left holding the analytic result.
pub fn finite_difference_check<F>(f: F, params: &mut ParamSet, step: f64, tolerance: f64) -> Result<FdReport>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::config(format!("finite-difference step {step} outside (0, 1)")));
    }
    let eval = |params: &ParamSet| -> Result<f64> {
        let tape = Tape::new();
        let vars = tape.params(params);
        let out = f(&tape, &vars)?;
        let v = tape.scalar(out);
        if !v.is_finite() {
            return Err(Error::NonFinite("finite-difference objective".into()));
        }
        Ok(v)
    };

    params.zero_grad();
    {
        let tape = Tape::new();
        let vars = tape.params(params);
        let out = f(&tape, &vars)?;
        if !tape.scalar(out).is_finite() {
            return Err(Error::NonFinite("finite-difference objective".into()));
        }
        tape.backward(out)?.accumulate(params);
    }

    let mut report = FdReport {
        max_rel_error: 0.0,
        entries_checked: 0,
        flagged: Vec::new(),
    };
    for pi in 0..params.len() {
        if !params[pi].trainable {
            continue;
        }
        let (rows, cols) = params[pi].value.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = params[pi].value[[r, c]];
                params[pi].value[[r, c]] = orig + step;
                let plus = eval(params);
                params[pi].value[[r, c]] = orig - step;
                let minus = eval(params);
                params[pi].value[[r, c]] = orig;
                let numeric = (plus? - minus?) / (2.0 * step);
                let analytic = params[pi].grad[[r, c]];
                let rel = relative_error(analytic, numeric);
                report.entries_checked += 1;
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel > tolerance {
                    report.flagged.push(FdMismatch {
                        param: params[pi].name.clone(),
                        index: (r, c),
                        analytic,
                        numeric,
                        rel_error: rel,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn single(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("p", arr2(&[[v]]));
        p
    }

    fn grad_of(v: f64, f: impl Fn(&Tape, Var) -> Var) -> f64 {
        let mut params = single(v);
        let tape = Tape::new();
        let p = tape.param(&params, 0);
        let out = f(&tape, p);
        tape.backward(out).unwrap().accumulate(&mut params);
        params[0].grad[[0, 0]]
    }

    #[test]
    fn forward_examples() {
        let t = Tape::new();
        let a = t.constant(arr2(&[[-1.0, 2.0]]));
        assert_eq!(t.value(t.relu(a)), arr2(&[[0.0, 2.0]]));
        let z = t.scalar_constant(0.0);
        assert_eq!(t.scalar(t.sigmoid(z)), 0.5);
        let x = t.constant(Array2::ones((2, 3)));
        let y = t.constant(Array2::ones((3, 1)));
        assert_eq!(t.value(t.matmul(x, y).unwrap()), arr2(&[[3.0], [3.0]]));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let t = Tape::new();
        let x = t.constant(Array2::ones((2, 3)));
        let y = t.constant(Array2::ones((2, 1)));
        let err = t.matmul(x, y).unwrap_err();
        assert!(matches!(
            err,
            Error::Shape {
                op: "matmul",
                lhs: (2, 3),
                rhs: (2, 1)
            }
        ));
        let err = t.apply(OpKind::Add, &[x, y]).unwrap_err();
        assert!(err.to_string().contains("add"));
        assert!(t.broadcast(x, 4, 3).is_err());
    }

    #[test]
    fn backward_examples() {
        assert_eq!(grad_of(3.0, |t, p| t.square(p)), 6.0);
        assert_eq!(grad_of(0.0, |t, p| t.abs(p)), 0.0);
        assert_eq!(grad_of(0.0, |t, p| t.sigmoid(p)), 0.25);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let t = Tape::new();
        let x = t.constant(Array2::ones((2, 1)));
        assert!(matches!(t.backward(x), Err(Error::NonScalarRoot { rows: 2, cols: 1 })));
    }

    #[test]
    fn reused_node_accumulates_both_paths() {
        // f = p*p + 3p  ->  f' = 2p + 3
        let g = grad_of(1.5, |t, p| {
            let pp = t.mul(p, p).unwrap();
            let three_p = t.scale(p, 3.0);
            t.add(pp, three_p).unwrap()
        });
        assert_eq!(g, 6.0);
    }

    #[test]
    fn backward_twice_doubles_without_zeroing() {
        let mut params = single(2.0);
        let tape = Tape::new();
        let p = tape.param(&params, 0);
        let out = tape.square(p);
        tape.backward(out).unwrap().accumulate(&mut params);
        tape.backward(out).unwrap().accumulate(&mut params);
        assert_eq!(params[0].grad[[0, 0]], 8.0);
        params.zero_grad();
        assert_eq!(params[0].grad[[0, 0]], 0.0);
    }

    #[test]
    fn frozen_params_are_constants() {
        let mut params = single(2.0);
        params[0].trainable = false;
        let tape = Tape::new();
        let p = tape.param(&params, 0);
        let out = tape.square(p);
        tape.backward(out).unwrap().accumulate(&mut params);
        assert_eq!(params[0].grad[[0, 0]], 0.0);
    }

    #[test]
    fn gradients_stay_in_their_own_set() {
        let mut a = single(1.0);
        let mut b = single(5.0);
        let tape = Tape::new();
        let pa = tape.param(&a, 0);
        let pb = tape.param(&b, 0);
        let out = tape.mul(pa, pb).unwrap();
        let g = tape.backward(out).unwrap();
        g.accumulate(&mut a);
        g.accumulate(&mut b);
        assert_eq!(a[0].grad[[0, 0]], 5.0);
        assert_eq!(b[0].grad[[0, 0]], 1.0);
    }

    #[test]
    fn broadcast_gradient_sums() {
        let mut params = ParamSet::new();
        params.push("b", arr2(&[[1.0, 2.0]]));
        let tape = Tape::new();
        let b = tape.param(&params, 0);
        let wide = tape.broadcast(b, 3, 2).unwrap();
        let out = tape.sum(wide);
        tape.backward(out).unwrap().accumulate(&mut params);
        assert_eq!(params[0].grad, arr2(&[[3.0, 3.0]]));
    }

    #[test]
    fn quadratic_difference_is_exact() {
        let mut params = single(1.5);
        let report = finite_difference_check(|t, v| Ok(t.square(v[0])), &mut params, 1e-5, 1e-6).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
        assert_eq!(params[0].value[[0, 0]], 1.5);
    }

    #[test]
    fn fd_check_rejects_bad_step_and_nan() {
        let mut params = single(1.0);
        assert!(finite_difference_check(|t, v| Ok(t.square(v[0])), &mut params, 0.0, 1e-4).is_err());
        let mut params = single(-1.0);
        let err = finite_difference_check(|t, v| Ok(t.log(v[0])), &mut params, 1e-5, 1e-4);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }
}
