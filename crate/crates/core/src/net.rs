//! Dueling multilayer perceptron for the two-action Q-function, with
//! hand-written backpropagation and SGD/Adam parameter updates.
//!
//! Architecture: `in_dim -> h1 -> h2` with rectifier activations, then a
//! scalar value head and a two-way advantage head combined as
//! `Q(s, a) = V(s) + A(s, a) - mean_a A(s, a)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::Variant;

pub const N_ACTIONS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    pub variant: Variant,
    pub in_dim: usize,
    pub h1: usize,
    pub h2: usize,
    /// Row-major `h1 x in_dim`.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// Row-major `h2 x h1`.
    w2: Vec<f64>,
    b2: Vec<f64>,
    /// `1 x h2` value head.
    wv: Vec<f64>,
    bv: Vec<f64>,
    /// `N_ACTIONS x h2` advantage head.
    wa: Vec<f64>,
    ba: Vec<f64>,
}

/// Gradient accumulator shaped like the network parameters.
#[derive(Debug, Clone)]
pub struct QNetGrad {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    wv: Vec<f64>,
    bv: Vec<f64>,
    wa: Vec<f64>,
    ba: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    x: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    pub q: [f64; N_ACTIONS],
}

impl QNet {
    /// Fresh network with weights drawn uniformly in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` and zero biases.
    pub fn new<R: Rng + ?Sized>(
        variant: Variant,
        in_dim: usize,
        h1: usize,
        h2: usize,
        rng: &mut R,
    ) -> Self {
        let mut init = |fan_in: usize, n: usize| -> Vec<f64> {
            let limit = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-limit..limit)).collect()
        };
        let w1 = init(in_dim, h1 * in_dim);
        let w2 = init(h1, h2 * h1);
        let wv = init(h2, h2);
        let wa = init(h2, N_ACTIONS * h2);
        QNet {
            variant,
            in_dim,
            h1,
            h2,
            w1,
            b1: vec![0.0; h1],
            w2,
            b2: vec![0.0; h2],
            wv,
            bv: vec![0.0; 1],
            wa,
            ba: vec![0.0; N_ACTIONS],
        }
    }

    pub fn zeroed(variant: Variant, in_dim: usize, h1: usize, h2: usize) -> Self {
        QNet {
            variant,
            in_dim,
            h1,
            h2,
            w1: vec![0.0; h1 * in_dim],
            b1: vec![0.0; h1],
            w2: vec![0.0; h2 * h1],
            b2: vec![0.0; h2],
            wv: vec![0.0; h2],
            bv: vec![0.0; 1],
            wa: vec![0.0; N_ACTIONS * h2],
            ba: vec![0.0; N_ACTIONS],
        }
    }

    pub fn grad(&self) -> QNetGrad {
        QNetGrad {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
            wv: vec![0.0; self.wv.len()],
            bv: vec![0.0; self.bv.len()],
            wa: vec![0.0; self.wa.len()],
            ba: vec![0.0; self.ba.len()],
        }
    }

    /// Q values `(q_notgo, q_go)` for one observation.
    pub fn forward(&self, obs: &[f64]) -> Result<[f64; N_ACTIONS]> {
        Ok(self.forward_cached(obs)?.q)
    }

    pub fn forward_cached(&self, obs: &[f64]) -> Result<ForwardCache> {
        if obs.len() != self.in_dim {
            return Err(Error::Invalid(format!(
                "observation length {} does not match network input dimension {}",
                obs.len(),
                self.in_dim
            )));
        }
        let mut z1 = self.b1.clone();
        for i in 0..self.h1 {
            let row = &self.w1[i * self.in_dim..(i + 1) * self.in_dim];
            let mut acc = 0.0;
            for (w, x) in row.iter().zip(obs) {
                acc += w * x;
            }
            z1[i] += acc;
        }
        let a1: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();

        let mut z2 = self.b2.clone();
        for i in 0..self.h2 {
            let row = &self.w2[i * self.h1..(i + 1) * self.h1];
            let mut acc = 0.0;
            for (w, a) in row.iter().zip(&a1) {
                acc += w * a;
            }
            z2[i] += acc;
        }
        let a2: Vec<f64> = z2.iter().map(|z| z.max(0.0)).collect();

        let mut value = self.bv[0];
        for (w, a) in self.wv.iter().zip(&a2) {
            value += w * a;
        }
        let mut adv = [self.ba[0], self.ba[1]];
        for j in 0..N_ACTIONS {
            let row = &self.wa[j * self.h2..(j + 1) * self.h2];
            let mut acc = 0.0;
            for (w, a) in row.iter().zip(&a2) {
                acc += w * a;
            }
            adv[j] += acc;
        }
        let mean_adv = (adv[0] + adv[1]) / N_ACTIONS as f64;
        let q = [value + adv[0] - mean_adv, value + adv[1] - mean_adv];
        Ok(ForwardCache {
            x: obs.to_vec(),
            z1,
            a1,
            z2,
            a2,
            q,
        })
    }

    /// Accumulates parameter gradients for a loss with gradient `dq`
    /// with respect to the two Q outputs.
    pub fn backward(&self, cache: &ForwardCache, dq: [f64; N_ACTIONS], grad: &mut QNetGrad) {
        let g_sum = dq[0] + dq[1];
        // Q_i = V + A_i - mean(A): dL/dV = sum_i dq_i,
        // dL/dA_j = dq_j - sum_i dq_i / N.
        let d_value = g_sum;
        let d_adv = [
            dq[0] - g_sum / N_ACTIONS as f64,
            dq[1] - g_sum / N_ACTIONS as f64,
        ];

        let mut d_a2 = vec![0.0; self.h2];
        grad.bv[0] += d_value;
        for k in 0..self.h2 {
            grad.wv[k] += d_value * cache.a2[k];
            d_a2[k] += d_value * self.wv[k];
        }
        for j in 0..N_ACTIONS {
            grad.ba[j] += d_adv[j];
            let row = &self.wa[j * self.h2..(j + 1) * self.h2];
            let grow = &mut grad.wa[j * self.h2..(j + 1) * self.h2];
            for k in 0..self.h2 {
                grow[k] += d_adv[j] * cache.a2[k];
                d_a2[k] += d_adv[j] * row[k];
            }
        }

        let mut d_a1 = vec![0.0; self.h1];
        for k in 0..self.h2 {
            if cache.z2[k] <= 0.0 {
                continue;
            }
            let dz = d_a2[k];
            grad.b2[k] += dz;
            let row = &self.w2[k * self.h1..(k + 1) * self.h1];
            let grow = &mut grad.w2[k * self.h1..(k + 1) * self.h1];
            for l in 0..self.h1 {
                grow[l] += dz * cache.a1[l];
                d_a1[l] += dz * row[l];
            }
        }

        for l in 0..self.h1 {
            if cache.z1[l] <= 0.0 {
                continue;
            }
            let dz = d_a1[l];
            grad.b1[l] += dz;
            let grow = &mut grad.w1[l * self.in_dim..(l + 1) * self.in_dim];
            for (g, x) in grow.iter_mut().zip(&cache.x) {
                *g += dz * x;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
            + self.wv.len()
            + self.bv.len()
            + self.wa.len()
            + self.ba.len()
    }

    fn param_slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.wv,
            &mut self.bv,
            &mut self.wa,
            &mut self.ba,
        ]
    }

    fn param_slices(&self) -> [&[f64]; 8] {
        [
            &self.w1, &self.b1, &self.w2, &self.b2, &self.wv, &self.bv, &self.wa, &self.ba,
        ]
    }

    pub fn get_param(&self, index: usize) -> f64 {
        let mut offset = index;
        for slice in self.param_slices() {
            if offset < slice.len() {
                return slice[offset];
            }
            offset -= slice.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut offset = index;
        for slice in self.param_slices_mut() {
            if offset < slice.len() {
                slice[offset] = value;
                return;
            }
            offset -= slice.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Shifts both advantage-head biases by `delta`; Q outputs must be
    /// unchanged under the dueling aggregation.
    pub fn shift_advantage_bias(&mut self, delta: f64) {
        for b in &mut self.ba {
            *b += delta;
        }
    }

    pub fn advantage_bias_mut(&mut self) -> &mut [f64] {
        &mut self.ba
    }

    pub fn value_bias_mut(&mut self) -> &mut f64 {
        &mut self.bv[0]
    }
}

impl QNetGrad {
    fn slices(&self) -> [&[f64]; 8] {
        [
            &self.w1, &self.b1, &self.w2, &self.b2, &self.wv, &self.bv, &self.wa, &self.ba,
        ]
    }

    pub fn get(&self, index: usize) -> f64 {
        let mut offset = index;
        for slice in self.slices() {
            if offset < slice.len() {
                return slice[offset];
            }
            offset -= slice.len();
        }
        panic!("gradient index {index} out of range");
    }

    pub fn zero(&mut self) {
        for slice in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.wv,
            &mut self.bv,
            &mut self.wa,
            &mut self.ba,
        ] {
            slice.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

/// Gradient-descent state. Adam keeps per-parameter moment estimates;
/// plain SGD applies the learning rate directly.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, param_count: usize) -> Self {
        let n = if kind == OptimizerKind::Adam {
            param_count
        } else {
            0
        };
        Optimizer {
            kind,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut QNet, grad: &QNetGrad) {
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.lr;
                for (params, grads) in net.param_slices_mut().into_iter().zip(grad.slices()) {
                    for (p, g) in params.iter_mut().zip(grads) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                let mut idx = 0;
                for (params, grads) in net.param_slices_mut().into_iter().zip(grad.slices()) {
                    for (p, g) in params.iter_mut().zip(grads) {
                        self.m[idx] = ADAM_BETA1 * self.m[idx] + (1.0 - ADAM_BETA1) * g;
                        self.v[idx] = ADAM_BETA2 * self.v[idx] + (1.0 - ADAM_BETA2) * g * g;
                        let m_hat = self.m[idx] / bc1;
                        let v_hat = self.v[idx] / bc2;
                        *p -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Writes the network as a plain text file: a header line
/// `variant,in_dim,h1,h2,n_actions` followed by one line per parameter
/// block (`w1,b1,w2,b2,wv,bv,wa,ba`, row-major, space separated).
pub fn save_weights(net: &QNet, path: &std::path::Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{},{},{},{},{}\n",
        net.variant.as_str(),
        net.in_dim,
        net.h1,
        net.h2,
        N_ACTIONS
    ));
    for block in net.param_slices() {
        let line: Vec<String> = block.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_weights(path: &std::path::Path) -> Result<QNet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty weight file"))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 5 {
        return Err(Error::parse(path, 1, "expected variant,in_dim,h1,h2,n_actions"));
    }
    let variant = Variant::parse(fields[0])
        .ok_or_else(|| Error::parse(path, 1, format!("unknown variant `{}`", fields[0])))?;
    let dims: Vec<usize> = fields[1..]
        .iter()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(path, 1, format!("bad header dimension: {e}")))?;
    let (in_dim, h1, h2, n_actions) = (dims[0], dims[1], dims[2], dims[3]);
    if n_actions != N_ACTIONS {
        return Err(Error::parse(
            path,
            1,
            format!("expected {N_ACTIONS} actions, file has {n_actions}"),
        ));
    }

    let mut net = QNet::zeroed(variant, in_dim, h1, h2);
    let expected: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
    for (i, (slice, want)) in net
        .param_slices_mut()
        .into_iter()
        .zip(expected)
        .enumerate()
    {
        let line_no = i + 2;
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(path, line_no, "missing parameter block"))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, line_no, format!("bad number: {e}")))?;
        if values.len() != want {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {want} values, found {}", values.len()),
            ));
        }
        slice.copy_from_slice(&values);
    }
    Ok(net)
}
