use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row-vector dense layer: `out = x · W + b`, `W` stored `inputs × outputs`
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    fn he(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = (2.0 / inputs as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect();
        Self {
            inputs,
            outputs,
            w,
            b: vec![0.0; outputs],
        }
    }

    /// `x` is `n × inputs`; returns `n × outputs`.
    fn apply(&self, x: &[f64], n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * self.outputs);
        for row in x.chunks_exact(self.inputs).take(n) {
            let start = out.len();
            out.extend_from_slice(&self.b);
            let o = &mut out[start..];
            for (i, &xi) in row.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let wr = &self.w[i * self.outputs..(i + 1) * self.outputs];
                for (oj, &wij) in o.iter_mut().zip(wr) {
                    *oj += xi * wij;
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients for upstream `g` (`n × outputs`) and
    /// returns the gradient with respect to the input.
    fn backprop(&self, x: &[f64], g: &[f64], n: usize, grad: &mut Dense) -> Vec<f64> {
        let mut gx = vec![0.0; n * self.inputs];
        for s in 0..n {
            let xr = &x[s * self.inputs..(s + 1) * self.inputs];
            let gr = &g[s * self.outputs..(s + 1) * self.outputs];
            for (bj, &gj) in grad.b.iter_mut().zip(gr) {
                *bj += gj;
            }
            let gxr = &mut gx[s * self.inputs..(s + 1) * self.inputs];
            for i in 0..self.inputs {
                let wr = &self.w[i * self.outputs..(i + 1) * self.outputs];
                let gw = &mut grad.w[i * self.outputs..(i + 1) * self.outputs];
                let mut acc = 0.0;
                for j in 0..self.outputs {
                    gw[j] += xr[i] * gr[j];
                    acc += wr[j] * gr[j];
                }
                gxr[i] = acc;
            }
        }
        gx
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    /// Dense layers in the 2-output head; all but the last are followed by ReLU.
    pub u1_layers: usize,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.classes == 0 || self.hidden.contains(&0) {
            return Err(Error::config("network layer sizes must be positive"));
        }
        if self.u1_layers == 0 {
            return Err(Error::config("u1 head needs at least one layer"));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }
}

/// Dense ReLU trunk with a class head and a 2-D head on the last hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyNet {
    pub hidden: Vec<Dense>,
    pub class_head: Dense,
    pub u1_head: Vec<Dense>,
}

impl ToyNet {
    /// He-normal weights, zero biases.
    pub fn new(config: &NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hidden = Vec::with_capacity(config.hidden.len());
        let mut prev = config.input;
        for &h in &config.hidden {
            hidden.push(Dense::he(prev, h, &mut rng));
            prev = h;
        }
        let class_head = Dense::he(prev, config.classes, &mut rng);
        let u1_head = (0..config.u1_layers)
            .map(|l| {
                let out = if l + 1 == config.u1_layers { 2 } else { prev };
                Dense::he(prev, out, &mut rng)
            })
            .collect();
        Ok(Self {
            hidden,
            class_head,
            u1_head,
        })
    }

    /// Same shapes, every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs, d.outputs);
        Self {
            hidden: self.hidden.iter().map(z).collect(),
            class_head: z(&self.class_head),
            u1_head: self.u1_head.iter().map(z).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().unwrap_or(&self.class_head).inputs
    }

    pub fn classes(&self) -> usize {
        self.class_head.outputs
    }

    /// Trunk layers, then the class head, then the u1 head.
    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.class_head))
            .chain(&self.u1_head)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.class_head))
            .chain(&mut self.u1_head)
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    /// All parameters flattened in [`ToyNet::layers`] order, weights before
    /// biases within a layer.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for d in self.layers() {
            out.extend_from_slice(&d.w);
            out.extend_from_slice(&d.b);
        }
        out
    }

    /// Mutable view of parameter `i` in [`ToyNet::flat_params`] order.
    pub fn param_mut(&mut self, mut i: usize) -> Option<&mut f64> {
        for d in self.layers_mut() {
            if i < d.w.len() {
                return Some(&mut d.w[i]);
            }
            i -= d.w.len();
            if i < d.b.len() {
                return Some(&mut d.b[i]);
            }
            i -= d.b.len();
        }
        None
    }

    /// SHA-256 of the little-endian parameter bytes, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.flat_params() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .all(|d| d.w.iter().chain(&d.b).all(|v| v.is_finite()))
    }
}

/// Intermediates kept for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: usize,
    /// Inputs to each trunk layer, then the final hidden state.
    trunk: Vec<Vec<f64>>,
    /// Pre-activations of each trunk layer.
    trunk_pre: Vec<Vec<f64>>,
    /// Inputs to each u1 head layer.
    head: Vec<Vec<f64>>,
    head_pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.n
    }

    /// Final hidden state, `n × feature_dim`.
    pub fn features(&self) -> &[f64] {
        self.trunk.last().expect("cache holds the input")
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `n × classes`.
    pub logits: Vec<f64>,
    /// `n × 2`.
    pub u1: Vec<f64>,
    pub cache: ForwardCache,
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// Runs a batch of `n` row vectors (`x.len() == n × input`) through the net.
pub fn forward(net: &ToyNet, x: &[f64], n: usize) -> Result<ForwardPass> {
    let d = net.input_dim();
    if n == 0 || x.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            actual: x.len(),
        });
    }
    let mut trunk = vec![x.to_vec()];
    let mut trunk_pre = Vec::with_capacity(net.hidden.len());
    for layer in &net.hidden {
        let pre = layer.apply(trunk.last().unwrap(), n);
        trunk.push(relu(&pre));
        trunk_pre.push(pre);
    }
    let feats = trunk.last().unwrap();
    let logits = net.class_head.apply(feats, n);
    let mut head = vec![feats.clone()];
    let mut head_pre = Vec::with_capacity(net.u1_head.len());
    for (l, layer) in net.u1_head.iter().enumerate() {
        let pre = layer.apply(head.last().unwrap(), n);
        if l + 1 < net.u1_head.len() {
            head.push(relu(&pre));
        }
        head_pre.push(pre);
    }
    let u1 = head_pre.last().unwrap().clone();
    if logits.iter().chain(&u1).any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite network output".into()));
    }
    Ok(ForwardPass {
        logits,
        u1,
        cache: ForwardCache {
            n,
            trunk,
            trunk_pre,
            head,
            head_pre,
        },
    })
}

/// Parameter gradients for upstream gradients on the logits and the u1
/// output. The result has the same shape as `net`.
pub fn backward(
    net: &ToyNet,
    cache: &ForwardCache,
    grad_logits: &[f64],
    grad_u1: &[f64],
) -> Result<ToyNet> {
    let n = cache.n;
    if cache.trunk.len() != net.hidden.len() + 1 || cache.head_pre.len() != net.u1_head.len() {
        return Err(Error::config(
            "forward cache does not belong to this network",
        ));
    }
    if grad_logits.len() != n * net.classes() || grad_u1.len() != n * 2 {
        return Err(Error::DimensionMismatch {
            expected: n * (net.classes() + 2),
            actual: grad_logits.len() + grad_u1.len(),
        });
    }
    let mut grads = net.zeros_like();
    let feats = cache.features();
    let mut g_feat = net
        .class_head
        .backprop(feats, grad_logits, n, &mut grads.class_head);

    let mut g = grad_u1.to_vec();
    for l in (0..net.u1_head.len()).rev() {
        if l + 1 < net.u1_head.len() {
            mask_relu(&mut g, &cache.head_pre[l]);
        }
        g = net.u1_head[l].backprop(&cache.head[l], &g, n, &mut grads.u1_head[l]);
    }
    for (a, b) in g_feat.iter_mut().zip(&g) {
        *a += b;
    }

    for l in (0..net.hidden.len()).rev() {
        mask_relu(&mut g_feat, &cache.trunk_pre[l]);
        g_feat = net.hidden[l].backprop(&cache.trunk[l], &g_feat, n, &mut grads.hidden[l]);
    }
    Ok(grads)
}

fn mask_relu(g: &mut [f64], pre: &[f64]) {
    for (gi, &p) in g.iter_mut().zip(pre) {
        if p <= 0.0 {
            *gi = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub ce: f64,
    pub u1: f64,
    pub grad_logits: Vec<f64>,
    pub grad_u1: Vec<f64>,
}

/// Training objective. `OneHot` ignores the u1 head entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Objective {
    Combined { lambda: f64 },
    OneHot,
}

/// Batch-mean cross-entropy plus λ times the batch-mean squared distance
/// between the u1 output and the class's target point.
pub fn combined_loss(
    logits: &[f64],
    u1: &[f64],
    class_ids: &[u32],
    targets: &[(f64, f64)],
    lambda: f64,
) -> Result<LossTerms> {
    loss(
        logits,
        u1,
        class_ids,
        targets,
        Objective::Combined { lambda },
    )
}

pub fn loss(
    logits: &[f64],
    u1: &[f64],
    class_ids: &[u32],
    targets: &[(f64, f64)],
    objective: Objective,
) -> Result<LossTerms> {
    let n = class_ids.len();
    if n == 0 || !logits.len().is_multiple_of(n) || u1.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: u1.len() / 2,
        });
    }
    let c = logits.len() / n;
    let inv_n = 1.0 / n as f64;
    let mut grad_logits = vec![0.0; logits.len()];
    let mut ce = 0.0;
    for (s, &cls) in class_ids.iter().enumerate() {
        if cls as usize >= c || cls as usize >= targets.len() {
            return Err(Error::UnknownClass(cls));
        }
        let row = &logits[s * c..(s + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        ce += log_z - row[cls as usize];
        let g = &mut grad_logits[s * c..(s + 1) * c];
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (row[j] - log_z).exp();
            *gj = (p - f64::from(u8::from(j == cls as usize))) * inv_n;
        }
    }
    ce *= inv_n;

    let mut grad_u1 = vec![0.0; u1.len()];
    let (u1_term, total) = match objective {
        Objective::OneHot => (0.0, ce),
        Objective::Combined { lambda } => {
            let mut sq = 0.0;
            for (s, &cls) in class_ids.iter().enumerate() {
                let (tx, ty) = targets[cls as usize];
                let (dx, dy) = (u1[2 * s] - tx, u1[2 * s + 1] - ty);
                sq += dx * dx + dy * dy;
                grad_u1[2 * s] = 2.0 * lambda * dx * inv_n;
                grad_u1[2 * s + 1] = 2.0 * lambda * dy * inv_n;
            }
            let u1_term = sq * inv_n;
            (u1_term, ce + lambda * u1_term)
        }
    };
    if !total.is_finite() {
        return Err(Error::Divergence(format!("loss is {total}")));
    }
    Ok(LossTerms {
        total,
        ce,
        u1: u1_term,
        grad_logits,
        grad_u1,
    })
}
