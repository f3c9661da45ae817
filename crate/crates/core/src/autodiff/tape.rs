use super::{GradError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Primitive operation record: operand references plus whatever the local
/// gradient rule needs at backward time.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: Var, b: Var, m: usize, k: usize, n: usize },
    /// Row-broadcast bias add: `[rows x cols] + [cols]`.
    AddBias { a: Var, bias: Var, rows: usize, cols: usize },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Relu { a: Var },
    Tanh { a: Var },
    Sigmoid { a: Var },
    Scale { a: Var, factor: f64 },
    Sum { a: Var },
    MseLoss { pred: Var, target: Var },
    /// Softmax probabilities are saved at forward time for the backward rule.
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
    /// True when this value depends on some requires-grad leaf; backward
    /// only visits such nodes.
    needs_grad: bool,
}

/// Execution-ordered record of a forward pass. Rebuilt from scratch for
/// every pass; [`Tape::backward`] consumes it.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by the [`Var`] handles of the consumed tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// d(root)/d(var); `None` when the root does not depend on `var` or the
    /// var did not request a gradient.
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads[var.0].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.nodes[var.0].data
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        &self.nodes[var.0].shape
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, shape, data, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    /// Register an input value. Its data is snapshotted onto the tape, so
    /// later mutation of the tensor cannot alter this pass.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 {
            return Err(GradError::NotAMatrix { op: "matmul", shape: sa });
        }
        if sb.len() != 2 {
            return Err(GradError::NotAMatrix { op: "matmul", shape: sb });
        }
        if sa[1] != sb[0] {
            return Err(GradError::ShapeMismatch { op: "matmul", lhs: sa, rhs: sb });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        {
            let (da, db) = (self.value(a), self.value(b));
            for i in 0..m {
                for p in 0..k {
                    let aip = da[i * k + p];
                    for j in 0..n {
                        out[i * n + j] += aip * db[p * n + j];
                    }
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Matmul { a, b, m, k, n }, vec![m, n], out, needs))
    }

    /// `[rows x cols] + [cols]`, the one broadcast this engine supports.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, GradError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(bias).to_vec());
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(GradError::ShapeMismatch { op: "add_bias", lhs: sa, rhs: sb });
        }
        let (rows, cols) = (sa[0], sa[1]);
        let data: Vec<f64> = {
            let (da, db) = (self.value(a), self.value(bias));
            da.iter()
                .enumerate()
                .map(|(i, &x)| x + db[i % cols])
                .collect()
        };
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(Op::AddBias { a, bias, rows, cols }, sa, data, needs))
    }

    fn binary(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(Var, Var) -> Op,
    ) -> Result<Var, GradError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(GradError::ShapeMismatch { op: op_name, lhs: sa, rhs: sb });
        }
        let data: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(make(a, b), sa, data, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(op, shape, data, needs)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu { a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh { a })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid { a })
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, |x| factor * x, Op::Scale { a, factor })
    }

    /// Sum of all elements, as a `[1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.value(a).iter().sum();
        let needs = self.needs(a);
        self.push(Op::Sum { a }, vec![1], vec![total], needs)
    }

    /// Mean over all elements of the squared difference.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var, GradError> {
        let (sp, st) = (self.shape(pred).to_vec(), self.shape(target).to_vec());
        if sp != st {
            return Err(GradError::ShapeMismatch { op: "mse_loss", lhs: sp, rhs: st });
        }
        let n = self.value(pred).len() as f64;
        let total: f64 = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        let needs = self.needs(pred) || self.needs(target);
        Ok(self.push(Op::MseLoss { pred, target }, vec![1], vec![total / n], needs))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`, computed with
    /// max-subtraction so large logits cannot overflow.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
    ) -> Result<Var, GradError> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 {
            return Err(GradError::NotAMatrix { op: "softmax_cross_entropy", shape });
        }
        let (batch, classes) = (shape[0], shape[1]);
        if labels.len() != batch {
            return Err(GradError::LabelCountMismatch { labels: labels.len(), batch });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(GradError::LabelOutOfRange { label, classes, row });
        }
        let mut probs = vec![0.0; batch * classes];
        let mut total = 0.0;
        {
            let data = self.value(logits);
            for r in 0..batch {
                let row = &data[r * classes..(r + 1) * classes];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (j, &l) in row.iter().enumerate() {
                    let e = (l - max).exp();
                    probs[r * classes + j] = e;
                    z += e;
                }
                for p in &mut probs[r * classes..(r + 1) * classes] {
                    *p /= z;
                }
                total -= row[labels[r]] - max - z.ln();
            }
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs },
            vec![1],
            vec![total / batch as f64],
            needs,
        ))
    }

    /// Reverse sweep from a scalar root. Consumes the tape (it is rebuilt on
    /// the next forward pass) and returns one gradient buffer per var that
    /// participates in the root's computation. Fan-out accumulates
    /// additively; each node is visited exactly once.
    pub fn backward(self, root: Var) -> Result<Gradients, GradError> {
        if self.nodes.is_empty() {
            return Err(GradError::EmptyTape);
        }
        let root_shape = self.shape(root);
        if root_shape.iter().product::<usize>() != 1 {
            return Err(GradError::NonScalarRoot { shape: root_shape.to_vec() });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(out_adj) = adj[idx].take() else { continue };
            // Split borrows: everything below `idx` may receive adjoints.
            let (lower, upper) = self.nodes.split_at(idx);
            let node = &upper[0];
            let mut acc = |var: Var, contribution: Vec<f64>| {
                if !lower[var.0].needs_grad {
                    return;
                }
                match &mut adj[var.0] {
                    Some(buf) => {
                        for (dst, src) in buf.iter_mut().zip(&contribution) {
                            *dst += src;
                        }
                    }
                    slot => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(out_adj);
                }
                Op::Matmul { a, b, m, k, n } => {
                    let (m, k, n) = (*m, *k, *n);
                    let da = &lower[a.0].data;
                    let db = &lower[b.0].data;
                    if lower[a.0].needs_grad {
                        // dA = dC . B^T
                        let mut ga = vec![0.0; m * k];
                        for i in 0..m {
                            for j in 0..n {
                                let g = out_adj[i * n + j];
                                for p in 0..k {
                                    ga[i * k + p] += g * db[p * n + j];
                                }
                            }
                        }
                        acc(*a, ga);
                    }
                    if lower[b.0].needs_grad {
                        // dB = A^T . dC
                        let mut gb = vec![0.0; k * n];
                        for i in 0..m {
                            for p in 0..k {
                                let aip = da[i * k + p];
                                for j in 0..n {
                                    gb[p * n + j] += aip * out_adj[i * n + j];
                                }
                            }
                        }
                        acc(*b, gb);
                    }
                }
                Op::AddBias { a, bias, rows, cols } => {
                    if lower[a.0].needs_grad {
                        acc(*a, out_adj.clone());
                    }
                    if lower[bias.0].needs_grad {
                        let mut gb = vec![0.0; *cols];
                        for r in 0..*rows {
                            for c in 0..*cols {
                                gb[c] += out_adj[r * cols + c];
                            }
                        }
                        acc(*bias, gb);
                    }
                }
                Op::Add { a, b } => {
                    acc(*a, out_adj.clone());
                    acc(*b, out_adj);
                }
                Op::Sub { a, b } => {
                    acc(*a, out_adj.clone());
                    acc(*b, out_adj.iter().map(|g| -g).collect());
                }
                Op::Mul { a, b } => {
                    let ga: Vec<f64> = out_adj
                        .iter()
                        .zip(&lower[b.0].data)
                        .map(|(g, y)| g * y)
                        .collect();
                    let gb: Vec<f64> = out_adj
                        .iter()
                        .zip(&lower[a.0].data)
                        .map(|(g, x)| g * x)
                        .collect();
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Relu { a } => {
                    // Subgradient 0 at the kink.
                    let g: Vec<f64> = out_adj
                        .iter()
                        .zip(&lower[a.0].data)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    acc(*a, g);
                }
                Op::Tanh { a } => {
                    let g: Vec<f64> = out_adj
                        .iter()
                        .zip(&node.data)
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    acc(*a, g);
                }
                Op::Sigmoid { a } => {
                    let g: Vec<f64> = out_adj
                        .iter()
                        .zip(&node.data)
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    acc(*a, g);
                }
                Op::Scale { a, factor } => {
                    acc(*a, out_adj.iter().map(|g| factor * g).collect());
                }
                Op::Sum { a } => {
                    let g = out_adj[0];
                    acc(*a, vec![g; lower[a.0].data.len()]);
                }
                Op::MseLoss { pred, target } => {
                    let g = out_adj[0];
                    let n = lower[pred.0].data.len() as f64;
                    let dp: Vec<f64> = lower[pred.0]
                        .data
                        .iter()
                        .zip(&lower[target.0].data)
                        .map(|(&p, &t)| g * 2.0 * (p - t) / n)
                        .collect();
                    if lower[target.0].needs_grad {
                        acc(*target, dp.iter().map(|x| -x).collect());
                    }
                    acc(*pred, dp);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let g = out_adj[0];
                    let batch = labels.len();
                    let classes = probs.len() / batch;
                    let mut dl = Vec::with_capacity(probs.len());
                    for r in 0..batch {
                        for j in 0..classes {
                            let indicator = if labels[r] == j { 1.0 } else { 0.0 };
                            dl.push(g * (probs[r * classes + j] - indicator) / batch as f64);
                        }
                    }
                    acc(*logits, dl);
                }
            }
        }

        // Only leaves that requested gradients keep their buffers.
        let grads = self
            .nodes
            .iter()
            .zip(adj)
            .map(|(node, a)| match node.op {
                Op::Leaf if node.needs_grad => a,
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}
