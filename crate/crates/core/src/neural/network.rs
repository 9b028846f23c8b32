use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::layers::{
    dropout_apply, mean_pool, mean_pool_backward, Activation, Attention, BiGru, Dense, Mode, Visitor, VisitorMut,
};
use super::tensor::sigmoid;
use crate::embeddings::{EncodedSequence, PRECOMPUTED_DIM};
use crate::rng::{self, purpose, Rng};
use crate::{Error, Result};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    MlpPrecomputed,
    Bigru,
    BigruAttention,
    Han,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Softmax2,
    Sigmoid1,
}

/// Architecture and sizes. Fields that an architecture does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub kind: ArchitectureKind,
    pub input_dim: usize,
    /// Hidden widths of the MLP.
    pub mlp_hidden: Vec<usize>,
    /// GRU state size per direction.
    pub recurrent: usize,
    pub attention: usize,
    /// Width of the dense layer in front of the output.
    pub dense: usize,
    pub input_dropout: f64,
    pub head_dropout: f64,
    pub head: OutputHead,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn mlp_precomputed(seed: u64) -> Self {
        NetworkSpec {
            kind: ArchitectureKind::MlpPrecomputed,
            input_dim: PRECOMPUTED_DIM,
            mlp_hidden: vec![256, 64],
            recurrent: 0,
            attention: 0,
            dense: 0,
            input_dropout: 0.0,
            head_dropout: 0.3,
            head: OutputHead::Softmax2,
            seed,
        }
    }

    pub fn bigru(input_dim: usize, seed: u64) -> Self {
        NetworkSpec {
            kind: ArchitectureKind::Bigru,
            input_dim,
            mlp_hidden: Vec::new(),
            recurrent: 64,
            attention: 0,
            dense: 64,
            input_dropout: 0.4,
            head_dropout: 0.3,
            head: OutputHead::Softmax2,
            seed,
        }
    }

    pub fn bigru_attention(input_dim: usize, seed: u64) -> Self {
        NetworkSpec { kind: ArchitectureKind::BigruAttention, attention: 64, ..Self::bigru(input_dim, seed) }
    }

    pub fn han(input_dim: usize, seed: u64) -> Self {
        NetworkSpec {
            kind: ArchitectureKind::Han,
            input_dim,
            mlp_hidden: Vec::new(),
            recurrent: 50,
            attention: 100,
            dense: 100,
            input_dropout: 0.4,
            head_dropout: 0.3,
            head: OutputHead::Sigmoid1,
            seed,
        }
    }

    /// Same architecture with every dropout rate set to zero.
    pub fn without_dropout(&self) -> Self {
        NetworkSpec { input_dropout: 0.0, head_dropout: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.input_dropout, self.head_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid(format!("dropout rate {p} outside [0, 1)")));
            }
        }
        let mut sizes = vec![self.input_dim];
        match self.kind {
            ArchitectureKind::MlpPrecomputed => {
                if self.mlp_hidden.is_empty() {
                    return Err(Error::invalid("mlp needs at least one hidden layer"));
                }
                sizes.extend(&self.mlp_hidden);
            }
            ArchitectureKind::Bigru => sizes.extend([self.recurrent, self.dense]),
            ArchitectureKind::BigruAttention | ArchitectureKind::Han => {
                sizes.extend([self.recurrent, self.attention, self.dense])
            }
        }
        if sizes.contains(&0) {
            return Err(Error::invalid(format!("layer sizes must be positive: {sizes:?}")));
        }
        Ok(())
    }
}

/// What one sample looks like for each architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkInput {
    Vector(Vec<f64>),
    Sequence(EncodedSequence),
    Document(Vec<EncodedSequence>),
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Mlp {
        hidden: Vec<Dense>,
    },
    Recurrent {
        gru: BiGru,
        attention: Option<Attention>,
        dense: Dense,
    },
    Han {
        word_gru: BiGru,
        word_attention: Attention,
        sentence_gru: BiGru,
        sentence_attention: Attention,
        dense: Dense,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    body: Body,
    output: Dense,
}

/// Result of one forward (and optionally backward) pass on a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOutcome {
    pub score: f64,
    pub loss: Option<f64>,
}

pub fn build_network(spec: &NetworkSpec) -> Result<Network> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, purpose::INIT);
    let r = &mut rng;
    let (body, head_in) = match spec.kind {
        ArchitectureKind::MlpPrecomputed => {
            let mut hidden = Vec::new();
            let mut prev = spec.input_dim;
            for &w in &spec.mlp_hidden {
                hidden.push(Dense::new(prev, w, Activation::Relu, r));
                prev = w;
            }
            (Body::Mlp { hidden }, prev)
        }
        ArchitectureKind::Bigru | ArchitectureKind::BigruAttention => {
            let gru = BiGru::new(spec.input_dim, spec.recurrent, r);
            let attention = (spec.kind == ArchitectureKind::BigruAttention)
                .then(|| Attention::new(2 * spec.recurrent, spec.attention, r));
            let dense = Dense::new(2 * spec.recurrent, spec.dense, Activation::Relu, r);
            (Body::Recurrent { gru, attention, dense }, spec.dense)
        }
        ArchitectureKind::Han => {
            let h2 = 2 * spec.recurrent;
            let word_gru = BiGru::new(spec.input_dim, spec.recurrent, r);
            let word_attention = Attention::new(h2, spec.attention, r);
            let sentence_gru = BiGru::new(h2, spec.recurrent, r);
            let sentence_attention = Attention::new(h2, spec.attention, r);
            let dense = Dense::new(h2, spec.dense, Activation::Relu, r);
            (Body::Han { word_gru, word_attention, sentence_gru, sentence_attention, dense }, spec.dense)
        }
    };
    let outputs = match spec.head {
        OutputHead::Softmax2 => 2,
        OutputHead::Sigmoid1 => 1,
    };
    let output = Dense::new(head_in, outputs, Activation::Identity, r);
    Ok(Network { spec: spec.clone(), body, output })
}

/// Score (probability of class 1), loss, and loss gradient w.r.t. the logits.
fn head(kind: OutputHead, logits: &[f64], label: Option<u8>) -> (f64, Option<f64>, Vec<f64>) {
    match kind {
        OutputHead::Softmax2 => {
            let m = logits[0].max(logits[1]);
            let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
            let p = [(logits[0] - lse).exp(), (logits[1] - lse).exp()];
            match label {
                Some(y) => {
                    let y = usize::from(y);
                    let mut g = p.to_vec();
                    g[y] -= 1.0;
                    (p[1], Some(lse - logits[y]), g)
                }
                None => (p[1], None, Vec::new()),
            }
        }
        OutputHead::Sigmoid1 => {
            let z = logits[0];
            let p = sigmoid(z);
            match label {
                Some(y) => {
                    let y = f64::from(y);
                    // softplus(z) − y·z
                    let loss = z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
                    (p, Some(loss), vec![p - y])
                }
                None => (p, None, Vec::new()),
            }
        }
    }
}

fn scale_rows(x: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(scale).map(|(a, b)| a * b).collect()
}

/// Input dropout on the unmasked rows only.
fn drop_rows(seq: &EncodedSequence, p: f64, mode: Mode, rng: Option<&mut Rng>) -> (Vec<f64>, Vec<f64>) {
    let active = seq.mask.iter().rposition(|&m| m).map_or(0, |t| t + 1);
    let cut = active * seq.dim;
    let (head, scale_head) = dropout_apply(&seq.rows[..cut], p, mode, rng);
    let mut rows = head;
    rows.extend_from_slice(&seq.rows[cut..]);
    let mut scale = scale_head;
    scale.resize(seq.rows.len(), 1.0);
    (rows, scale)
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Same structure, every parameter zero.
    pub fn zeros_like(&self) -> Network {
        let mut g = self.clone();
        g.visit_mut(&mut |_, data| data.fill(0.0));
        g
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, data| n += data.len());
        n
    }

    /// Visits every parameter block in a fixed order.
    pub fn visit(&self, f: &mut Visitor<'_>) {
        match &self.body {
            Body::Mlp { hidden } => {
                for (i, d) in hidden.iter().enumerate() {
                    d.visit(&format!("hidden{i}"), f);
                }
            }
            Body::Recurrent { gru, attention, dense } => {
                gru.visit("gru", f);
                if let Some(a) = attention {
                    a.visit("attention", f);
                }
                dense.visit("dense", f);
            }
            Body::Han { word_gru, word_attention, sentence_gru, sentence_attention, dense } => {
                word_gru.visit("word_gru", f);
                word_attention.visit("word_attention", f);
                sentence_gru.visit("sentence_gru", f);
                sentence_attention.visit("sentence_attention", f);
                dense.visit("dense", f);
            }
        }
        self.output.visit("output", f);
    }

    pub fn visit_mut(&mut self, f: &mut VisitorMut<'_>) {
        match &mut self.body {
            Body::Mlp { hidden } => {
                for (i, d) in hidden.iter_mut().enumerate() {
                    d.visit_mut(&format!("hidden{i}"), f);
                }
            }
            Body::Recurrent { gru, attention, dense } => {
                gru.visit_mut("gru", f);
                if let Some(a) = attention {
                    a.visit_mut("attention", f);
                }
                dense.visit_mut("dense", f);
            }
            Body::Han { word_gru, word_attention, sentence_gru, sentence_attention, dense } => {
                word_gru.visit_mut("word_gru", f);
                word_attention.visit_mut("word_attention", f);
                sentence_gru.visit_mut("sentence_gru", f);
                sentence_attention.visit_mut("sentence_attention", f);
                dense.visit_mut("dense", f);
            }
        }
        self.output.visit_mut("output", f);
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.visit(&mut |_, data| out.extend_from_slice(data));
        out
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<()> {
        let n = self.parameter_count();
        if values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: values.len() });
        }
        let mut at = 0;
        self.visit_mut(&mut |_, data| {
            data.copy_from_slice(&values[at..at + data.len()]);
            at += data.len();
        });
        Ok(())
    }

    /// Forward pass; with a label also the loss, and with `grads` the backward
    /// pass accumulated into `grads`. Dropout is active only in train mode with
    /// an rng.
    pub fn run(
        &self,
        input: &NetworkInput,
        label: Option<u8>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
        grads: Option<&mut Network>,
    ) -> Result<SampleOutcome> {
        if grads.is_some() && label.is_none() {
            return Err(Error::invalid("gradients require a label"));
        }
        let spec = &self.spec;
        match (&self.body, input) {
            (Body::Mlp { hidden }, NetworkInput::Vector(x)) => {
                if x.len() != spec.input_dim {
                    return Err(Error::DimensionMismatch { expected: spec.input_dim, got: x.len() });
                }
                let mut acts = vec![x.clone()];
                let mut scale0 = Vec::new();
                for (i, layer) in hidden.iter().enumerate() {
                    let y = layer.forward(acts.last().expect("non-empty"))?;
                    if i == 0 {
                        let (d, s) = dropout_apply(&y, spec.head_dropout, mode, rng.as_deref_mut());
                        acts.push(y);
                        acts.push(d);
                        scale0 = s;
                    } else {
                        acts.push(y);
                    }
                }
                let features = acts.last().expect("non-empty");
                let logits = self.output.forward(features)?;
                let (score, loss, dlogits) = head(spec.head, &logits, label);
                if let Some(g) = grads {
                    let Body::Mlp { hidden: gh } = &mut g.body else { unreachable!("gradient shape") };
                    let mut dx = vec![0.0; features.len()];
                    self.output.backward(features, &logits, &dlogits, &mut g.output, Some(&mut dx));
                    // acts = [x, y0, drop(y0), y1, ..., y_last]
                    for i in (0..hidden.len()).rev() {
                        let (input_at, output_at) = if i == 0 { (0, 1) } else { (i + 1, i + 2) };
                        let mut dy = std::mem::take(&mut dx);
                        if i == 0 {
                            dy = scale_rows(&dy, &scale0);
                        }
                        let mut next = vec![0.0; acts[input_at].len()];
                        let dx_slot = (i > 0).then_some(&mut next[..]);
                        hidden[i].backward(&acts[input_at], &acts[output_at], &dy, &mut gh[i], dx_slot);
                        dx = next;
                    }
                }
                Ok(SampleOutcome { score, loss })
            }
            (Body::Recurrent { gru, attention, dense }, NetworkInput::Sequence(seq)) => {
                if seq.dim != spec.input_dim {
                    return Err(Error::DimensionMismatch { expected: spec.input_dim, got: seq.dim });
                }
                let (x, _) = drop_rows(seq, spec.input_dropout, mode, rng.as_deref_mut());
                let trace = gru.forward(&x, &seq.mask)?;
                let width = gru.output_dim();
                let any = seq.mask.iter().any(|&m| m);
                let att = match attention {
                    Some(a) if any => Some(a.forward(&trace.states, &seq.mask)?),
                    _ => None,
                };
                let pooled = match (&att, attention) {
                    (Some(t), _) => t.output.clone(),
                    (None, Some(_)) => vec![0.0; width],
                    (None, None) => mean_pool(&trace.states, width, &seq.mask),
                };
                let (dropped, scale) = dropout_apply(&pooled, spec.head_dropout, mode, rng.as_deref_mut());
                let hid = dense.forward(&dropped)?;
                let logits = self.output.forward(&hid)?;
                let (score, loss, dlogits) = head(spec.head, &logits, label);
                if let Some(g) = grads {
                    let Body::Recurrent { gru: gg, attention: ga, dense: gd } = &mut g.body else {
                        unreachable!("gradient shape")
                    };
                    let mut dhid = vec![0.0; hid.len()];
                    self.output.backward(&hid, &logits, &dlogits, &mut g.output, Some(&mut dhid));
                    let mut ddrop = vec![0.0; dropped.len()];
                    dense.backward(&dropped, &hid, &dhid, gd, Some(&mut ddrop));
                    let dpooled = scale_rows(&ddrop, &scale);
                    if any {
                        let mut dstates = vec![0.0; trace.states.len()];
                        match (attention, &att, ga.as_mut()) {
                            (Some(a), Some(t), Some(ga)) => {
                                a.backward(&trace.states, &seq.mask, t, &dpooled, ga, &mut dstates)
                            }
                            _ => mean_pool_backward(&dpooled, &seq.mask, &mut dstates),
                        }
                        gru.backward(&x, &trace, &dstates, gg, None);
                    }
                }
                Ok(SampleOutcome { score, loss })
            }
            (Body::Han { word_gru, word_attention, sentence_gru, sentence_attention, dense }, NetworkInput::Document(doc)) => {
                let width = word_gru.output_dim();
                struct Sentence {
                    x: Vec<f64>,
                    trace: super::layers::BiGruTrace,
                    att: super::layers::AttentionTrace,
                }
                let mut sentences: Vec<Option<Sentence>> = Vec::with_capacity(doc.len());
                let mut sent_x = vec![0.0; doc.len() * width];
                let mut sent_mask = vec![false; doc.len()];
                for (s, seq) in doc.iter().enumerate() {
                    if seq.dim != spec.input_dim {
                        return Err(Error::DimensionMismatch { expected: spec.input_dim, got: seq.dim });
                    }
                    if !seq.mask.iter().any(|&m| m) {
                        sentences.push(None);
                        continue;
                    }
                    let (x, _) = drop_rows(seq, spec.input_dropout, mode, rng.as_deref_mut());
                    let trace = word_gru.forward(&x, &seq.mask)?;
                    let att = word_attention.forward(&trace.states, &seq.mask)?;
                    sent_x[s * width..(s + 1) * width].copy_from_slice(&att.output);
                    sent_mask[s] = true;
                    sentences.push(Some(Sentence { x, trace, att }));
                }
                let any = sent_mask.iter().any(|&m| m);
                let doc_trace = if any { Some(sentence_gru.forward(&sent_x, &sent_mask)?) } else { None };
                let doc_att = match &doc_trace {
                    Some(t) => Some(sentence_attention.forward(&t.states, &sent_mask)?),
                    None => None,
                };
                let pooled = doc_att.as_ref().map_or_else(|| vec![0.0; sentence_gru.output_dim()], |a| a.output.clone());
                let (dropped, scale) = dropout_apply(&pooled, spec.head_dropout, mode, rng.as_deref_mut());
                let hid = dense.forward(&dropped)?;
                let logits = self.output.forward(&hid)?;
                let (score, loss, dlogits) = head(spec.head, &logits, label);
                if let Some(g) = grads {
                    let Body::Han {
                        word_gru: gwg,
                        word_attention: gwa,
                        sentence_gru: gsg,
                        sentence_attention: gsa,
                        dense: gd,
                    } = &mut g.body
                    else {
                        unreachable!("gradient shape")
                    };
                    let mut dhid = vec![0.0; hid.len()];
                    self.output.backward(&hid, &logits, &dlogits, &mut g.output, Some(&mut dhid));
                    let mut ddrop = vec![0.0; dropped.len()];
                    dense.backward(&dropped, &hid, &dhid, gd, Some(&mut ddrop));
                    let dpooled = scale_rows(&ddrop, &scale);
                    if let (Some(dt), Some(da)) = (&doc_trace, &doc_att) {
                        let mut dstates = vec![0.0; dt.states.len()];
                        sentence_attention.backward(&dt.states, &sent_mask, da, &dpooled, gsa, &mut dstates);
                        let mut dsent = vec![0.0; sent_x.len()];
                        sentence_gru.backward(&sent_x, dt, &dstates, gsg, Some(&mut dsent));
                        for (s, sentence) in sentences.iter().enumerate() {
                            let Some(sn) = sentence else { continue };
                            let seq = &doc[s];
                            let mut dw = vec![0.0; sn.trace.states.len()];
                            word_attention.backward(
                                &sn.trace.states,
                                &seq.mask,
                                &sn.att,
                                &dsent[s * width..(s + 1) * width],
                                gwa,
                                &mut dw,
                            );
                            word_gru.backward(&sn.x, &sn.trace, &dw, gwg, None);
                        }
                    }
                }
                Ok(SampleOutcome { score, loss })
            }
            _ => Err(Error::invalid(format!("input shape does not match a {:?} network", spec.kind))),
        }
    }

    pub fn loss(&self, input: &NetworkInput, label: u8) -> Result<f64> {
        Ok(self.run(input, Some(label), Mode::Eval, None, None)?.loss.expect("label given"))
    }

    /// Label 1 iff score > 0.5.
    pub fn predict(&self, input: &NetworkInput) -> Result<(u8, f64)> {
        let score = self.run(input, None, Mode::Eval, None, None)?.score;
        Ok((u8::from(score > 0.5), score))
    }

    pub fn blocks(&self) -> BTreeMap<String, Vec<f64>> {
        let mut out = BTreeMap::new();
        self.visit(&mut |name, data| {
            out.insert(name.to_string(), data.to_vec());
        });
        out
    }

    /// Rebuilds a network from its spec and named parameter blocks.
    pub fn from_blocks(spec: &NetworkSpec, mut blocks: BTreeMap<String, Vec<f64>>) -> Result<Network> {
        let mut net = build_network(spec)?;
        let mut problem = None;
        net.visit_mut(&mut |name, data| match blocks.remove(name) {
            Some(v) if v.len() == data.len() => data.copy_from_slice(&v),
            Some(v) => {
                problem.get_or_insert(format!("block {name} has {} values, expected {}", v.len(), data.len()));
            }
            None => {
                problem.get_or_insert(format!("missing parameter block {name}"));
            }
        });
        if let Some(p) = problem {
            return Err(Error::invalid(p));
        }
        if let Some(extra) = blocks.keys().next() {
            return Err(Error::invalid(format!("unknown parameter block {extra}")));
        }
        Ok(net)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    format_version: u32,
    spec: NetworkSpec,
    parameters: BTreeMap<String, Block>,
}

#[derive(Serialize, Deserialize)]
struct Block(#[serde(with = "crate::numfmt::vec")] Vec<f64>);

impl Serialize for Network {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkFile {
            format_version: NETWORK_FORMAT_VERSION,
            spec: self.spec.clone(),
            parameters: self.blocks().into_iter().map(|(k, v)| (k, Block(v))).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = NetworkFile::deserialize(d)?;
        if file.format_version != NETWORK_FORMAT_VERSION {
            return Err(serde::de::Error::custom(format!("unsupported format_version {}", file.format_version)));
        }
        let blocks = file.parameters.into_iter().map(|(k, v)| (k, v.0)).collect();
        Network::from_blocks(&file.spec, blocks).map_err(serde::de::Error::custom)
    }
}
