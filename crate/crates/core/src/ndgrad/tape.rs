use super::{Array2, NdError};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a + b` with `b` a `1 × cols` row broadcast over the rows of `a`.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Log { input: Var, floor: Option<T> },
    Exp(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    ConcatRows(Var, Var),
    SliceRows { input: Var, start: usize },
    Dropout { input: Var, mask: Array2<T>, keep_scale: T },
    GradReverse { input: Var, lambda: T },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softmax(..) => "softmax",
            Op::Log { .. } => "log",
            Op::Exp(..) => "exp",
            Op::Square(..) => "square",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumRows(..) => "sum_rows",
            Op::ConcatRows(..) => "concat_rows",
            Op::SliceRows { .. } => "slice_rows",
            Op::Dropout { .. } => "dropout",
            Op::GradReverse { .. } => "gradient_reverse",
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
}

/// Append-only reverse-mode computation graph.
///
/// Nodes are recorded in creation order, which is a topological order, so
/// `backward` is a single reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar output with respect to every node of a tape.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; zeros when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Array2<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Array2::zeros(r, c)
            }
        }
    }

    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads[v.0].as_ref()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Result<Var, NdError> {
        if !value.is_finite() {
            return Err(NdError::NonFinite { op: op.name() });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NdError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(NdError::Shape {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    /// Inputs, parameters and constants all enter as leaves.
    pub fn leaf(&mut self, value: Array2<T>) -> Result<Var, NdError> {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(NdError::Shape {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Elementwise sum; `b` may also be a `1 × cols` bias row.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
            return self.push(v, Op::Add(a, b));
        }
        if sb.0 == 1 && sb.1 == sa.1 {
            let bias = self.value(b).data().to_vec();
            let mut v = self.value(a).clone();
            for r in 0..sa.0 {
                for (c, &bc) in bias.iter().enumerate() {
                    v.set(r, c, v.get(r, c) + bc);
                }
            }
            return self.push(v, Op::AddRow(a, b));
        }
        Err(NdError::Shape {
            op: "add",
            left: sa,
            right: sb,
        })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var, NdError> {
        if !c.is_finite() {
            return Err(NdError::NonFinite { op: "scale" });
        }
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    /// `1 - a`, a common building block of the domain losses.
    pub fn one_minus(&mut self, a: Var) -> Result<Var, NdError> {
        let neg = self.scale(a, -T::one())?;
        self.add_scalar(neg, T::one())
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NdError> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut v = Array2::zeros(rows, cols);
        for r in 0..rows {
            let row = x.row(r);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (c, &xc) in row.iter().enumerate() {
                let e = (xc - m).exp();
                v.set(r, c, e);
                z = z + e;
            }
            for c in 0..cols {
                v.set(r, c, v.get(r, c) / z);
            }
        }
        self.push(v, Op::Softmax(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x.ln());
        self.push(v, Op::Log { input: a, floor: None })
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(&mut self, a: Var, floor: T) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.push(
            v,
            Op::Log {
                input: a,
                floor: Some(floor),
            },
        )
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x.exp());
        self.push(v, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Sum of all entries as a `1 × 1` node.
    pub fn sum(&mut self, a: Var) -> Result<Var, NdError> {
        let v = Array2::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NdError> {
        let x = self.value(a);
        let n = x.rows() * x.cols();
        if n == 0 {
            return Err(NdError::Empty { op: "mean" });
        }
        let v = Array2::scalar(x.sum() / T::lit(n as f64));
        self.push(v, Op::Mean(a))
    }

    /// Row sums as a `rows × 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, NdError> {
        let x = self.value(a);
        let v = Array2::column((0..x.rows()).map(|r| x.row(r).iter().copied().sum()).collect());
        self.push(v, Op::SumRows(a))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let v = self.value(a).vstack(self.value(b)).map_err(|_| NdError::Shape {
            op: "concat_rows",
            left: self.shape(a),
            right: self.shape(b),
        })?;
        self.push(v, Op::ConcatRows(a, b))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NdError> {
        let rows = self.shape(a).0;
        if start > end || end > rows {
            return Err(NdError::Shape {
                op: "slice_rows",
                left: self.shape(a),
                right: (start, end),
            });
        }
        let v = self.value(a).slice_rows(start, end);
        self.push(v, Op::SliceRows { input: a, start })
    }

    /// Inverted dropout with an explicit keep-mask: kept units are scaled by
    /// `1 / (1 - rate)`, dropped units are zero.
    pub fn dropout(&mut self, a: Var, mask: &Array2<T>, rate: T) -> Result<Var, NdError> {
        if mask.shape() != self.shape(a) {
            return Err(NdError::Shape {
                op: "dropout",
                left: self.shape(a),
                right: mask.shape(),
            });
        }
        if !(rate >= T::zero() && rate < T::one()) {
            return Err(NdError::DropoutRate(rate.as_f64()));
        }
        let keep_scale = T::one() / (T::one() - rate);
        let v = self.value(a).zip_map(mask, |x, m| x * m * keep_scale);
        self.push(
            v,
            Op::Dropout {
                input: a,
                mask: mask.clone(),
                keep_scale,
            },
        )
    }

    /// Identity forward; multiplies the upstream gradient by `-lambda`.
    pub fn gradient_reverse(&mut self, a: Var, lambda: T) -> Result<Var, NdError> {
        if !lambda.is_finite() {
            return Err(NdError::NonFinite {
                op: "gradient_reverse",
            });
        }
        let v = self.value(a).clone();
        self.push(v, Op::GradReverse { input: a, lambda })
    }

    /// Reverse sweep from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>, NdError> {
        let shape = self.shape(output);
        if shape != (1, 1) {
            return Err(NdError::NotScalar(shape));
        }
        let n = output.0 + 1;
        let mut grads: Vec<Option<Array2<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::scalar(T::one()));

        for i in (0..n).rev() {
            let Some(up) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = up.dot(&self.value(*b).transpose());
                    let db = self.value(*a).transpose().dot(&up);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, up.clone());
                    accumulate(&mut grads, *b, up.clone());
                }
                Op::AddRow(a, b) => {
                    let cols = up.cols();
                    let mut db = Array2::zeros(1, cols);
                    for r in 0..up.rows() {
                        for c in 0..cols {
                            db.set(0, c, db.get(0, c) + up.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, up.clone());
                    accumulate(&mut grads, *b, db);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, up.clone());
                    accumulate(&mut grads, *b, up.map(|g| -g));
                }
                Op::Mul(a, b) => {
                    let da = up.zip_map(self.value(*b), |g, y| g * y);
                    let db = up.zip_map(self.value(*a), |g, x| g * x);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, up.map(|g| g * c));
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, up.clone()),
                Op::Relu(a) => {
                    let da = up.zip_map(self.value(*a), |g, x| if x > T::zero() { g } else { T::zero() });
                    accumulate(&mut grads, *a, da);
                }
                Op::Sigmoid(a) => {
                    let da = up.zip_map(&node.value, |g, y| g * y * (T::one() - y));
                    accumulate(&mut grads, *a, da);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut da = Array2::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: T = (0..y.cols()).map(|c| up.get(r, c) * y.get(r, c)).sum();
                        for c in 0..y.cols() {
                            da.set(r, c, y.get(r, c) * (up.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Log { input, floor } => {
                    let floor = *floor;
                    let da = up.zip_map(self.value(*input), |g, x| match floor {
                        Some(f) if x <= f => T::zero(),
                        _ => g / x,
                    });
                    accumulate(&mut grads, *input, da);
                }
                Op::Exp(a) => {
                    let da = up.zip_map(&node.value, |g, y| g * y);
                    accumulate(&mut grads, *a, da);
                }
                Op::Square(a) => {
                    let two = T::lit(2.0);
                    let da = up.zip_map(self.value(*a), |g, x| two * x * g);
                    accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let g = up.data()[0];
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Array2::filled(r, c, g));
                }
                Op::Mean(a) => {
                    let (r, c) = self.shape(*a);
                    let g = up.data()[0] / T::lit((r * c) as f64);
                    accumulate(&mut grads, *a, Array2::filled(r, c, g));
                }
                Op::SumRows(a) => {
                    let (r, c) = self.shape(*a);
                    let mut da = Array2::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            da.set(i, j, up.get(i, 0));
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.shape(*a).0;
                    accumulate(&mut grads, *a, up.slice_rows(0, ra));
                    accumulate(&mut grads, *b, up.slice_rows(ra, up.rows()));
                }
                Op::SliceRows { input, start } => {
                    let (r, c) = self.shape(*input);
                    let mut da = Array2::zeros(r, c);
                    da.data_mut()[start * c..start * c + up.data().len()].copy_from_slice(up.data());
                    accumulate(&mut grads, *input, da);
                }
                Op::Dropout {
                    input,
                    mask,
                    keep_scale,
                } => {
                    let s = *keep_scale;
                    let da = up.zip_map(mask, |g, m| g * m * s);
                    accumulate(&mut grads, *input, da);
                }
                Op::GradReverse { input, lambda } => {
                    let l = *lambda;
                    accumulate(&mut grads, *input, up.map(|g| -l * g));
                }
            }
            grads[i] = Some(up);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Array2<T>>], v: Var, g: Array2<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
