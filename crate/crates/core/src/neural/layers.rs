//! Dense, dropout, GRU, and pooling layers with explicit backward passes.
//!
//! Backward methods accumulate (`+=`) into parameter gradients and into the
//! optional input gradient, so callers zero them once per batch.

use std::sync::OnceLock;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, sigmoid, Tensor2};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(y > 0.0)),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Receives each named parameter block in a fixed order.
pub type Visitor<'a> = dyn FnMut(&str, &[f64]) + 'a;
pub type VisitorMut<'a> = dyn FnMut(&str, &mut [f64]) + 'a;

/// `y = act(W x + b)` with `W` of shape out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor2,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        Dense { w: Tensor2::xavier(output, input, rng), b: vec![0.0; output], activation }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape().1
    }

    pub fn output_dim(&self) -> usize {
        self.w.shape().0
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut y = self.b.clone();
        self.w.matvec_add(x, &mut y);
        for v in &mut y {
            *v = self.activation.apply(*v);
        }
        Ok(y)
    }

    /// `y` is this layer's output for `x`; `dy` the upstream gradient.
    pub fn backward(&self, x: &[f64], y: &[f64], dy: &[f64], grads: &mut Dense, dx: Option<&mut [f64]>) {
        let g: Vec<f64> =
            y.iter().zip(dy).map(|(&yi, &d)| d * self.activation.derivative_from_output(yi)).collect();
        grads.w.outer_add(&g, x);
        axpy(1.0, &g, &mut grads.b);
        if let Some(dx) = dx {
            self.w.matvec_t_add(&g, dx);
        }
    }

    pub fn visit(&self, name: &str, f: &mut Visitor<'_>) {
        f(&format!("{name}.w"), self.w.data());
        f(&format!("{name}.b"), &self.b);
    }

    pub fn visit_mut(&mut self, name: &str, f: &mut VisitorMut<'_>) {
        f(&format!("{name}.w"), self.w.data_mut());
        f(&format!("{name}.b"), &mut self.b);
    }
}

/// Applies a dense layer to every row of `x`.
pub fn dense_apply(x: &Tensor2, layer: &Dense) -> Result<Tensor2> {
    let (n, _) = x.shape();
    let mut data = Vec::with_capacity(n * layer.output_dim());
    for i in 0..n {
        data.extend(layer.forward(x.row(i))?);
    }
    Tensor2::from_vec(n, layer.output_dim(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the output and the per-entry multipliers
/// (0 or 1/(1−p)) needed for the backward pass.
pub fn dropout_apply(x: &[f64], p_drop: f64, mode: Mode, rng: Option<&mut Rng>) -> (Vec<f64>, Vec<f64>) {
    match (mode, rng) {
        (Mode::Train, Some(rng)) if p_drop > 0.0 => {
            let keep = 1.0 / (1.0 - p_drop);
            let scale: Vec<f64> =
                x.iter().map(|_| if rng.gen::<f64>() < p_drop { 0.0 } else { keep }).collect();
            (x.iter().zip(&scale).map(|(a, s)| a * s).collect(), scale)
        }
        _ => (x.to_vec(), vec![1.0; x.len()]),
    }
}

/// Gated recurrent unit, `h_t = (1−z)⊙h_{t−1} + z⊙h̃_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    wz: Tensor2,
    uz: Tensor2,
    bz: Vec<f64>,
    wr: Tensor2,
    ur: Tensor2,
    br: Vec<f64>,
    wh: Tensor2,
    uh: Tensor2,
    bh: Vec<f64>,
    transposed: TransposeCache,
}

/// Lazily built transposes of the six weight matrices; reset whenever the
/// parameters are handed out mutably.
#[derive(Clone, Default)]
struct TransposeCache(OnceLock<[Tensor2; 6]>);

impl PartialEq for TransposeCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl std::fmt::Debug for TransposeCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TransposeCache")
    }
}

#[derive(Debug, Clone)]
struct GruStep {
    t: usize,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    hc: Vec<f64>,
}

/// Transposed weights, so each gate is a sum of scaled rows.
struct GruKernel<'a> {
    gru: &'a Gru,
    wt: &'a [Tensor2],
    ut: &'a [Tensor2],
}

impl GruKernel<'_> {
    fn cell(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let g = self.gru;
        let gate = |i: usize, b: &[f64], h: &[f64]| {
            let mut a = b.to_vec();
            self.wt[i].matvec_t_add(x, &mut a);
            self.ut[i].matvec_t_add(h, &mut a);
            a
        };
        let mut z = gate(0, &g.bz, h_prev);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut r = gate(1, &g.br, h_prev);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut hc = gate(2, &g.bh, &rh);
        hc.iter_mut().for_each(|v| *v = v.tanh());
        let h = (0..z.len()).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * hc[i]).collect();
        (z, r, hc, h)
    }
}

/// Hidden states (T × h) and the per-step values the backward pass needs.
#[derive(Debug, Clone)]
pub struct GruTrace {
    pub states: Vec<f64>,
    reverse: bool,
    steps: Vec<GruStep>,
}

impl Gru {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut w = || Tensor2::xavier(hidden, input, rng);
        let (wz, wr, wh) = (w(), w(), w());
        let mut u = || Tensor2::xavier(hidden, hidden, rng);
        let (uz, ur, uh) = (u(), u(), u());
        let zero = vec![0.0; hidden];
        Gru { wz, uz, bz: zero.clone(), wr, ur, br: zero.clone(), wh, uh, bh: zero, transposed: TransposeCache::default() }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Tensor2::zeros(hidden, input);
        let u = Tensor2::zeros(hidden, hidden);
        let zero = vec![0.0; hidden];
        Gru {
            wz: w.clone(),
            uz: u.clone(),
            bz: zero.clone(),
            wr: w.clone(),
            ur: u.clone(),
            br: zero.clone(),
            wh: w,
            uh: u,
            bh: zero,
            transposed: TransposeCache::default(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.bz.len()
    }

    pub fn input_dim(&self) -> usize {
        self.wz.shape().1
    }

    /// One cell update from `h_prev` on input `x`: returns (z, r, h̃, h).
    pub fn cell(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        self.kernel().cell(x, h_prev)
    }

    fn kernel(&self) -> GruKernel<'_> {
        let t = self.transposed.0.get_or_init(|| {
            [&self.wz, &self.wr, &self.wh, &self.uz, &self.ur, &self.uh].map(Tensor2::transposed)
        });
        GruKernel { gru: self, wt: &t[..3], ut: &t[3..] }
    }

    /// Runs over the rows of `x` (T × input). Masked steps carry the previous
    /// state unchanged; `h₀ = 0`.
    pub fn forward(&self, x: &[f64], mask: &[bool], reverse: bool) -> Result<GruTrace> {
        let d = self.input_dim();
        let h = self.hidden();
        if x.len() != mask.len() * d {
            return Err(Error::DimensionMismatch { expected: mask.len() * d, got: x.len() });
        }
        let kernel = self.kernel();
        let n = mask.len();
        let mut states = vec![0.0; n * h];
        let mut steps = Vec::with_capacity(mask.iter().filter(|&&m| m).count());
        let mut state = vec![0.0; h];
        for k in 0..n {
            let t = if reverse { n - 1 - k } else { k };
            if mask[t] {
                let (z, r, hc, next) = kernel.cell(&x[t * d..(t + 1) * d], &state);
                let h_prev = std::mem::replace(&mut state, next);
                steps.push(GruStep { t, h_prev, z, r, hc });
            }
            states[t * h..(t + 1) * h].copy_from_slice(&state);
        }
        Ok(GruTrace { states, reverse, steps })
    }

    /// Back-propagation through time. `dstates` is the gradient of the loss with
    /// respect to every emitted state (T × h).
    pub fn backward(
        &self,
        x: &[f64],
        trace: &GruTrace,
        dstates: &[f64],
        grads: &mut Gru,
        mut dx: Option<&mut [f64]>,
    ) {
        let d = self.input_dim();
        let h = self.hidden();
        let n = dstates.len() / h;
        grads.transposed = TransposeCache::default();
        let mut dh = vec![0.0; h];
        let mut steps = trace.steps.iter().rev().peekable();
        for k in (0..n).rev() {
            let t = if trace.reverse { n - 1 - k } else { k };
            axpy(1.0, &dstates[t * h..(t + 1) * h], &mut dh);
            let Some(step) = steps.next_if(|s| s.t == t) else { continue };
            let xt = &x[t * d..(t + 1) * d];
            let mut dh_prev: Vec<f64> = (0..h).map(|i| dh[i] * (1.0 - step.z[i])).collect();

            let da_h: Vec<f64> = (0..h).map(|i| dh[i] * step.z[i] * (1.0 - step.hc[i] * step.hc[i])).collect();
            let rh: Vec<f64> = (0..h).map(|i| step.r[i] * step.h_prev[i]).collect();
            grads.wh.outer_add(&da_h, xt);
            grads.uh.outer_add(&da_h, &rh);
            axpy(1.0, &da_h, &mut grads.bh);
            let mut drh = vec![0.0; h];
            self.uh.matvec_t_add(&da_h, &mut drh);

            let da_r: Vec<f64> =
                (0..h).map(|i| drh[i] * step.h_prev[i] * step.r[i] * (1.0 - step.r[i])).collect();
            for i in 0..h {
                dh_prev[i] += drh[i] * step.r[i];
            }
            let da_z: Vec<f64> = (0..h)
                .map(|i| dh[i] * (step.hc[i] - step.h_prev[i]) * step.z[i] * (1.0 - step.z[i]))
                .collect();

            grads.wr.outer_add(&da_r, xt);
            grads.ur.outer_add(&da_r, &step.h_prev);
            axpy(1.0, &da_r, &mut grads.br);
            grads.wz.outer_add(&da_z, xt);
            grads.uz.outer_add(&da_z, &step.h_prev);
            axpy(1.0, &da_z, &mut grads.bz);
            self.ur.matvec_t_add(&da_r, &mut dh_prev);
            self.uz.matvec_t_add(&da_z, &mut dh_prev);
            if let Some(dx) = dx.as_deref_mut() {
                let dxt = &mut dx[t * d..(t + 1) * d];
                self.wh.matvec_t_add(&da_h, dxt);
                self.wr.matvec_t_add(&da_r, dxt);
                self.wz.matvec_t_add(&da_z, dxt);
            }
            dh = dh_prev;
        }
    }

    pub fn visit(&self, name: &str, f: &mut Visitor<'_>) {
        for (part, data) in [
            ("wz", self.wz.data()),
            ("uz", self.uz.data()),
            ("bz", &self.bz[..]),
            ("wr", self.wr.data()),
            ("ur", self.ur.data()),
            ("br", &self.br[..]),
            ("wh", self.wh.data()),
            ("uh", self.uh.data()),
            ("bh", &self.bh[..]),
        ] {
            f(&format!("{name}.{part}"), data);
        }
    }

    pub fn visit_mut(&mut self, name: &str, f: &mut VisitorMut<'_>) {
        self.transposed = TransposeCache::default();
        for (part, data) in [
            ("wz", self.wz.data_mut()),
            ("uz", self.uz.data_mut()),
            ("bz", &mut self.bz[..]),
            ("wr", self.wr.data_mut()),
            ("ur", self.ur.data_mut()),
            ("br", &mut self.br[..]),
            ("wh", self.wh.data_mut()),
            ("uh", self.uh.data_mut()),
            ("bh", &mut self.bh[..]),
        ] {
            f(&format!("{name}.{part}"), data);
        }
    }
}

/// Forward and backward GRUs whose states are concatenated per position.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

#[derive(Debug, Clone)]
pub struct BiGruTrace {
    /// T × 2h: forward state then backward state.
    pub states: Vec<f64>,
    fwd: GruTrace,
    bwd: GruTrace,
}

impl BiGru {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let fwd = Gru::new(input, hidden, rng);
        let bwd = Gru::new(input, hidden, rng);
        BiGru { fwd, bwd }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden()
    }

    pub fn forward(&self, x: &[f64], mask: &[bool]) -> Result<BiGruTrace> {
        let fwd = self.fwd.forward(x, mask, false)?;
        let bwd = self.bwd.forward(x, mask, true)?;
        let h = self.fwd.hidden();
        let mut states = Vec::with_capacity(mask.len() * 2 * h);
        for t in 0..mask.len() {
            states.extend_from_slice(&fwd.states[t * h..(t + 1) * h]);
            states.extend_from_slice(&bwd.states[t * h..(t + 1) * h]);
        }
        Ok(BiGruTrace { states, fwd, bwd })
    }

    pub fn backward(
        &self,
        x: &[f64],
        trace: &BiGruTrace,
        dstates: &[f64],
        grads: &mut BiGru,
        mut dx: Option<&mut [f64]>,
    ) {
        let h = self.fwd.hidden();
        let (mut df, mut db) = (Vec::with_capacity(dstates.len() / 2), Vec::with_capacity(dstates.len() / 2));
        for row in dstates.chunks_exact(2 * h) {
            df.extend_from_slice(&row[..h]);
            db.extend_from_slice(&row[h..]);
        }
        self.fwd.backward(x, &trace.fwd, &df, &mut grads.fwd, dx.as_deref_mut());
        self.bwd.backward(x, &trace.bwd, &db, &mut grads.bwd, dx);
    }

    pub fn visit(&self, name: &str, f: &mut Visitor<'_>) {
        self.fwd.visit(&format!("{name}.fwd"), f);
        self.bwd.visit(&format!("{name}.bwd"), f);
    }

    pub fn visit_mut(&mut self, name: &str, f: &mut VisitorMut<'_>) {
        self.fwd.visit_mut(&format!("{name}.fwd"), f);
        self.bwd.visit_mut(&format!("{name}.bwd"), f);
    }
}

/// `u_i = tanh(W h_i + b)`, scores `u_ctxᵀ u_i`, softmax over unmasked positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub w: Tensor2,
    pub b: Vec<f64>,
    pub context: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub weights: Vec<f64>,
    pub output: Vec<f64>,
    projections: Vec<Vec<f64>>,
}

impl Attention {
    pub fn new(input: usize, size: usize, rng: &mut Rng) -> Self {
        let w = Tensor2::xavier(size, input, rng);
        let context = Tensor2::xavier(size, 1, rng).data().to_vec();
        Attention { w, b: vec![0.0; size], context }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape().1
    }

    pub fn forward(&self, states: &[f64], mask: &[bool]) -> Result<AttentionTrace> {
        let d = self.input_dim();
        if states.len() != mask.len() * d {
            return Err(Error::DimensionMismatch { expected: mask.len() * d, got: states.len() });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("attention over a fully masked sequence"));
        }
        let mut projections = vec![Vec::new(); mask.len()];
        let mut scores = vec![f64::NEG_INFINITY; mask.len()];
        for (t, &m) in mask.iter().enumerate() {
            if m {
                let mut u = self.b.clone();
                self.w.matvec_add(&states[t * d..(t + 1) * d], &mut u);
                u.iter_mut().for_each(|v| *v = v.tanh());
                scores[t] = dot(&self.context, &u);
                projections[t] = u;
            }
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> =
            scores.iter().zip(mask).map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 }).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut output = vec![0.0; d];
        for (t, &a) in weights.iter().enumerate() {
            if mask[t] {
                axpy(a, &states[t * d..(t + 1) * d], &mut output);
            }
        }
        Ok(AttentionTrace { weights, output, projections })
    }

    pub fn backward(
        &self,
        states: &[f64],
        mask: &[bool],
        trace: &AttentionTrace,
        doutput: &[f64],
        grads: &mut Attention,
        dstates: &mut [f64],
    ) {
        let d = self.input_dim();
        let dweights: Vec<f64> =
            (0..mask.len()).map(|t| if mask[t] { dot(doutput, &states[t * d..(t + 1) * d]) } else { 0.0 }).collect();
        let mean: f64 = trace.weights.iter().zip(&dweights).map(|(a, g)| a * g).sum();
        for t in (0..mask.len()).filter(|&t| mask[t]) {
            let a = trace.weights[t];
            let ds = a * (dweights[t] - mean);
            let u = &trace.projections[t];
            let hs = &states[t * d..(t + 1) * d];
            axpy(ds, u, &mut grads.context);
            let da: Vec<f64> = u.iter().zip(&self.context).map(|(ui, ci)| ds * ci * (1.0 - ui * ui)).collect();
            grads.w.outer_add(&da, hs);
            axpy(1.0, &da, &mut grads.b);
            let dh = &mut dstates[t * d..(t + 1) * d];
            axpy(a, doutput, dh);
            self.w.matvec_t_add(&da, dh);
        }
    }

    pub fn visit(&self, name: &str, f: &mut Visitor<'_>) {
        f(&format!("{name}.w"), self.w.data());
        f(&format!("{name}.b"), &self.b);
        f(&format!("{name}.context"), &self.context);
    }

    pub fn visit_mut(&mut self, name: &str, f: &mut VisitorMut<'_>) {
        f(&format!("{name}.w"), self.w.data_mut());
        f(&format!("{name}.b"), &mut self.b);
        f(&format!("{name}.context"), &mut self.context);
    }
}

/// Context vector and weights (zero at masked positions) for a T × d sequence.
pub fn attention_pool(states: &[f64], mask: &[bool], params: &Attention) -> Result<(Vec<f64>, Vec<f64>)> {
    let trace = params.forward(states, mask)?;
    Ok((trace.output, trace.weights))
}

/// Mean of the unmasked rows; zero when every row is masked.
pub fn mean_pool(states: &[f64], dim: usize, mask: &[bool]) -> Vec<f64> {
    let n = mask.iter().filter(|&&m| m).count();
    let mut out = vec![0.0; dim];
    if n == 0 {
        return out;
    }
    for t in (0..mask.len()).filter(|&t| mask[t]) {
        axpy(1.0, &states[t * dim..(t + 1) * dim], &mut out);
    }
    out.iter_mut().for_each(|v| *v /= n as f64);
    out
}

pub fn mean_pool_backward(doutput: &[f64], mask: &[bool], dstates: &mut [f64]) {
    let dim = doutput.len();
    let n = mask.iter().filter(|&&m| m).count();
    for t in (0..mask.len()).filter(|&t| mask[t]) {
        axpy(1.0 / n as f64, doutput, &mut dstates[t * dim..(t + 1) * dim]);
    }
}
