//! A small from-scratch LSTM: forward pass, backpropagation through time,
//! SGD training, gradient checking and checkpoints.
//!
//! Weights are flat `f64` vectors. Gate rows are stored gate-major in the order
//! input, forget, output, candidate; each row is `[w_x | w_h | b]`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INIT_RANGE: f64 = 0.08;
pub const FORGET_BIAS: f64 = 1.0;

const GATES: usize = 4;
const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_O: usize = 2;
const GATE_G: usize = 3;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weights: Vec<f64>,
}

impl LstmParams {
    pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
        GATES * hidden_dim * (input_dim + hidden_dim + 1)
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            input_dim,
            hidden_dim,
            weights: vec![0.0; Self::param_count(input_dim, hidden_dim)],
        }
    }

    /// Uniform weights in `[-INIT_RANGE, INIT_RANGE]`, forget bias `FORGET_BIAS`.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for w in &mut p.weights {
            *w = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
        for r in 0..hidden_dim {
            let k = p.index(GATE_F, r, input_dim + hidden_dim);
            p.weights[k] = FORGET_BIAS;
        }
        p
    }

    fn row_len(&self) -> usize {
        self.input_dim + self.hidden_dim + 1
    }

    /// Flat index of column `col` in row `unit` of `gate`.
    pub fn index(&self, gate: usize, unit: usize, col: usize) -> usize {
        (gate * self.hidden_dim + unit) * self.row_len() + col
    }

    fn check(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Structural("LSTM dimensions must be at least 1".into()));
        }
        if self.weights.len() != Self::param_count(self.input_dim, self.hidden_dim) {
            return Err(Error::Structural(format!(
                "LSTM {}x{} needs {} weights, got {}",
                self.input_dim,
                self.hidden_dim,
                Self::param_count(self.input_dim, self.hidden_dim),
                self.weights.len()
            )));
        }
        Ok(())
    }
}

/// Affine map `y = W [x; 1]`, one row per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
}

impl Linear {
    pub fn param_count(in_dim: usize, out_dim: usize) -> usize {
        out_dim * (in_dim + 1)
    }

    /// Uniform weights, zero bias.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let mut weights = vec![0.0; Self::param_count(in_dim, out_dim)];
        for r in 0..out_dim {
            for c in 0..in_dim {
                weights[r * (in_dim + 1) + c] = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
            }
        }
        Linear {
            in_dim,
            out_dim,
            weights,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.in_dim + 1;
        (0..self.out_dim)
            .map(|r| {
                let row = &self.weights[r * n..(r + 1) * n];
                row[..self.in_dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[self.in_dim]
            })
            .collect()
    }

    /// Accumulates weight gradients for upstream `dy` and returns `dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let n = self.in_dim + 1;
        let mut dx = vec![0.0; self.in_dim];
        for r in 0..self.out_dim {
            let row = &self.weights[r * n..(r + 1) * n];
            let g = &mut grad[r * n..(r + 1) * n];
            for c in 0..self.in_dim {
                g[c] += dy[r] * x[c];
                dx[c] += row[c] * dy[r];
            }
            g[self.in_dim] += dy[r];
        }
        dx
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != Self::param_count(self.in_dim, self.out_dim) {
            return Err(Error::Structural("readout weight count mismatch".into()));
        }
        Ok(())
    }
}

/// Hidden and cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl State {
    pub fn zeros(hidden_dim: usize) -> Self {
        State {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

struct Step {
    /// `[x; h_prev; 1]`
    xh: Vec<f64>,
    gates: [Vec<f64>; GATES],
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

struct Trace {
    steps: Vec<Step>,
    last: State,
}

fn run(p: &LstmParams, seq: &[Vec<f64>], init: &State) -> Result<Trace> {
    p.check()?;
    let (n_in, n_h) = (p.input_dim, p.hidden_dim);
    if init.h.len() != n_h || init.c.len() != n_h {
        return Err(Error::Structural("initial state has the wrong width".into()));
    }
    let mut state = init.clone();
    let mut steps = Vec::with_capacity(seq.len());
    let row = p.row_len();
    for (t, x) in seq.iter().enumerate() {
        if x.len() != n_in {
            return Err(Error::Structural(format!(
                "input {t} has length {}, expected {n_in}",
                x.len()
            )));
        }
        let mut xh = Vec::with_capacity(row);
        xh.extend_from_slice(x);
        xh.extend_from_slice(&state.h);
        xh.push(1.0);
        let z: Vec<f64> = p
            .weights
            .chunks_exact(row)
            .map(|w| w.iter().zip(&xh).map(|(a, b)| a * b).sum())
            .collect();
        let gate =
            |g: usize, f: fn(f64) -> f64| -> Vec<f64> { z[g * n_h..(g + 1) * n_h].iter().map(|&v| f(v)).collect() };
        let gates = [
            gate(GATE_I, sigmoid),
            gate(GATE_F, sigmoid),
            gate(GATE_O, sigmoid),
            gate(GATE_G, f64::tanh),
        ];
        let c_prev = state.c.clone();
        let mut tanh_c = vec![0.0; n_h];
        for u in 0..n_h {
            state.c[u] = gates[GATE_F][u] * c_prev[u] + gates[GATE_I][u] * gates[GATE_G][u];
            tanh_c[u] = state.c[u].tanh();
            state.h[u] = gates[GATE_O][u] * tanh_c[u];
        }
        steps.push(Step {
            xh,
            gates,
            c_prev,
            tanh_c,
            h: state.h.clone(),
        });
    }
    Ok(Trace { steps, last: state })
}

/// BPTT from gradients on the final state; accumulates into `grad` and
/// returns the gradient on the initial state.
fn backprop(p: &LstmParams, trace: &Trace, dh_last: &[f64], dc_last: &[f64], grad: &mut [f64]) -> State {
    let (n_in, n_h) = (p.input_dim, p.hidden_dim);
    let row = p.row_len();
    let mut dh = dh_last.to_vec();
    let mut dc = dc_last.to_vec();
    let mut dz = vec![0.0; GATES * n_h];
    for step in trace.steps.iter().rev() {
        let [i, f, o, g] = &step.gates;
        for u in 0..n_h {
            let tc = step.tanh_c[u];
            let d_o = dh[u] * tc;
            let dcu = dc[u] + dh[u] * o[u] * (1.0 - tc * tc);
            dz[GATE_I * n_h + u] = dcu * g[u] * i[u] * (1.0 - i[u]);
            dz[GATE_F * n_h + u] = dcu * step.c_prev[u] * f[u] * (1.0 - f[u]);
            dz[GATE_O * n_h + u] = d_o * o[u] * (1.0 - o[u]);
            dz[GATE_G * n_h + u] = dcu * i[u] * (1.0 - g[u] * g[u]);
            dc[u] = dcu * f[u];
        }
        let mut dh_prev = vec![0.0; n_h];
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let w = &p.weights[r * row..(r + 1) * row];
            let gr = &mut grad[r * row..(r + 1) * row];
            for (gk, xk) in gr.iter_mut().zip(&step.xh) {
                *gk += d * xk;
            }
            for u in 0..n_h {
                dh_prev[u] += w[n_in + u] * d;
            }
        }
        dh = dh_prev;
    }
    State { h: dh, c: dc }
}

/// An LSTM with a linear readout of its final hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqModel {
    pub lstm: LstmParams,
    pub readout: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub hidden: Vec<Vec<f64>>,
    pub prediction: Vec<f64>,
}

impl SeqModel {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = LstmParams::init(input_dim, hidden_dim, &mut rng);
        let readout = Linear::init(hidden_dim, output_dim, &mut rng);
        SeqModel { lstm, readout }
    }

    pub fn output_dim(&self) -> usize {
        self.readout.out_dim
    }

    fn check(&self) -> Result<()> {
        self.lstm.check()?;
        self.readout.check()?;
        if self.readout.in_dim != self.lstm.hidden_dim {
            return Err(Error::Structural("readout width differs from hidden width".into()));
        }
        Ok(())
    }
}

/// Runs the recurrence from a zero state and reads out the final hidden state.
pub fn lstm_forward(model: &SeqModel, sequence: &[Vec<f64>]) -> Result<ForwardOutput> {
    model.check()?;
    let trace = run(&model.lstm, sequence, &State::zeros(model.lstm.hidden_dim))?;
    let prediction = model.readout.apply(&trace.last.h);
    let hidden = trace.steps.into_iter().map(|s| s.h).collect();
    Ok(ForwardOutput { hidden, prediction })
}

/// `scale * 0.5 * |p - t|^2` and its gradient at `p`.
fn squared_error(p: &[f64], t: &[f64], scale: f64) -> (f64, Vec<f64>) {
    let d: Vec<f64> = p.iter().zip(t).map(|(a, b)| a - b).collect();
    let loss = scale * 0.5 * d.iter().map(|v| v * v).sum::<f64>();
    (loss, d.into_iter().map(|v| scale * v).collect())
}

/// Loss and flat gradient (LSTM weights, then readout weights).
pub fn lstm_backward(
    model: &SeqModel,
    sequence: &[Vec<f64>],
    target: &[f64],
    loss_scale: f64,
) -> Result<(f64, Vec<f64>)> {
    model.check()?;
    if target.len() != model.output_dim() {
        return Err(Error::Structural(format!(
            "target has length {}, expected {}",
            target.len(),
            model.output_dim()
        )));
    }
    let trace = run(&model.lstm, sequence, &State::zeros(model.lstm.hidden_dim))?;
    let p = model.readout.apply(&trace.last.h);
    let (loss, dp) = squared_error(&p, target, loss_scale);
    let n_lstm = model.lstm.weights.len();
    let mut grad = vec![0.0; n_lstm + model.readout.weights.len()];
    let (g_lstm, g_out) = grad.split_at_mut(n_lstm);
    let dh = model.readout.backward(&trace.last.h, &dp, g_out);
    backprop(&model.lstm, &trace, &dh, &vec![0.0; model.lstm.hidden_dim], g_lstm);
    Ok((loss, grad))
}

/// Encoder LSTM over the inputs; a decoder LSTM started from the encoder state
/// takes the last input for one step and a readout emits the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    pub readout: Linear,
}

impl Seq2Seq {
    pub fn new(dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Seq2Seq {
            encoder: LstmParams::init(dim, hidden_dim, &mut rng),
            decoder: LstmParams::init(dim, hidden_dim, &mut rng),
            readout: Linear::init(hidden_dim, dim, &mut rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.encoder.input_dim
    }

    fn check(&self, sequence: &[Vec<f64>]) -> Result<()> {
        self.encoder.check()?;
        self.decoder.check()?;
        self.readout.check()?;
        if self.decoder.input_dim != self.encoder.input_dim
            || self.decoder.hidden_dim != self.encoder.hidden_dim
            || self.readout.in_dim != self.decoder.hidden_dim
        {
            return Err(Error::Structural("encoder/decoder shapes disagree".into()));
        }
        if sequence.is_empty() {
            return Err(Error::Structural("encoder needs at least one input".into()));
        }
        Ok(())
    }

    pub fn predict(&self, sequence: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check(sequence)?;
        let enc = run(&self.encoder, sequence, &State::zeros(self.encoder.hidden_dim))?;
        let dec = run(&self.decoder, &sequence[sequence.len() - 1..], &enc.last)?;
        Ok(self.readout.apply(&dec.last.h))
    }

    /// Loss and flat gradient (encoder, decoder, readout).
    pub fn backward(&self, sequence: &[Vec<f64>], target: &[f64], loss_scale: f64) -> Result<(f64, Vec<f64>)> {
        self.check(sequence)?;
        if target.len() != self.readout.out_dim {
            return Err(Error::Structural("target width mismatch".into()));
        }
        let enc = run(&self.encoder, sequence, &State::zeros(self.encoder.hidden_dim))?;
        let dec = run(&self.decoder, &sequence[sequence.len() - 1..], &enc.last)?;
        let p = self.readout.apply(&dec.last.h);
        let (loss, dp) = squared_error(&p, target, loss_scale);
        let (ne, nd) = (self.encoder.weights.len(), self.decoder.weights.len());
        let mut grad = vec![0.0; ne + nd + self.readout.weights.len()];
        let (g_enc, rest) = grad.split_at_mut(ne);
        let (g_dec, g_out) = rest.split_at_mut(nd);
        let dh = self.readout.backward(&dec.last.h, &dp, g_out);
        let d_init = backprop(&self.decoder, &dec, &dh, &vec![0.0; self.decoder.hidden_dim], g_dec);
        backprop(&self.encoder, &enc, &d_init.h, &d_init.c, g_enc);
        Ok((loss, grad))
    }
}

/// A (sequence, target) pair.
pub type Sample = (Vec<Vec<f64>>, Vec<f64>);

/// Anything trainable by flat-vector SGD.
pub trait Trainable {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, flat: &[f64]);
    fn loss_and_grad(&self, sequence: &[Vec<f64>], target: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Trainable for SeqModel {
    fn params(&self) -> Vec<f64> {
        [self.lstm.weights.as_slice(), &self.readout.weights].concat()
    }

    fn set_params(&mut self, flat: &[f64]) {
        let n = self.lstm.weights.len();
        self.lstm.weights.copy_from_slice(&flat[..n]);
        self.readout.weights.copy_from_slice(&flat[n..]);
    }

    fn loss_and_grad(&self, sequence: &[Vec<f64>], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        lstm_backward(self, sequence, target, 1.0)
    }
}

impl Trainable for Seq2Seq {
    fn params(&self) -> Vec<f64> {
        [
            self.encoder.weights.as_slice(),
            &self.decoder.weights,
            &self.readout.weights,
        ]
        .concat()
    }

    fn set_params(&mut self, flat: &[f64]) {
        let (ne, nd) = (self.encoder.weights.len(), self.decoder.weights.len());
        self.encoder.weights.copy_from_slice(&flat[..ne]);
        self.decoder.weights.copy_from_slice(&flat[ne..ne + nd]);
        self.readout.weights.copy_from_slice(&flat[ne + nd..]);
    }

    fn loss_and_grad(&self, sequence: &[Vec<f64>], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.backward(sequence, target, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 16,
            seed: 1,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// Mean loss per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().copied().unwrap_or(f64::NAN)
    }
}

/// Mini-batch SGD with global-norm clipping; deterministic given the seed.
pub fn train<M: Trainable>(model: &mut M, data: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = model.params();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; params.len()];
            for &k in batch {
                let (loss, g) = model.loss_and_grad(&data[k].0, &data[k].1)?;
                total += loss;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() * inv;
            if !norm.is_finite() {
                return Err(Error::Divergence(format!("gradient norm {norm} in epoch {epoch}")));
            }
            let step = cfg.learning_rate
                * inv
                * if norm > cfg.clip_norm {
                    cfg.clip_norm / norm
                } else {
                    1.0
                };
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= step * g;
            }
            model.set_params(&params);
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence(format!(
                "loss {mean} in epoch {epoch} (learning rate {})",
                cfg.learning_rate
            )));
        }
        curve.push(mean);
    }
    Ok(TrainReport { loss_curve: curve })
}

/// Finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

/// Max relative error between the analytic gradient and central differences.
///
/// Relative error is `|a - n| / max(|a| + |n|, 1e-6)`; the floor keeps
/// components that are zero in both from dividing rounding noise by zero.
pub fn gradient_check<M: Trainable + Clone>(model: &M, sequence: &[Vec<f64>], target: &[f64]) -> Result<f64> {
    let (_, analytic) = model.loss_and_grad(sequence, target)?;
    let base = model.params();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + FD_STEP;
        probe.set_params(&p);
        let up = probe.loss_and_grad(sequence, target)?.0;
        p[k] = base[k] - FD_STEP;
        probe.set_params(&p);
        let down = probe.loss_and_grad(sequence, target)?.0;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = (analytic[k] - numeric).abs() / (analytic[k].abs() + numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Gradient check of a random model and random data for one shape.
pub fn random_gradient_check(input_dim: usize, hidden_dim: usize, seq_len: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_dim = 2;
    let mut model = SeqModel::new(input_dim, hidden_dim, out_dim, seed);
    // larger weights than the initializer so every gate nonlinearity is exercised
    let w: Vec<f64> = model.params().iter().map(|_| rng.gen_range(-0.6..0.6)).collect();
    model.set_params(&w);
    let seq: Vec<Vec<f64>> = (0..seq_len)
        .map(|_| (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let target: Vec<f64> = (0..out_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    gradient_check(&model, &seq, &target)
}

// ---------------------------------------------------------------- checkpoints

pub const CHECKPOINT_MAGIC: &str = "drsolve-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A named block of parameters with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    /// `lstm` or `linear`.
    pub kind: String,
    pub dims: (usize, usize),
    pub values: Vec<f64>,
}

/// Versioned flat parameter file: a text header with the layout map, then the
/// values as little-endian `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub blocks: Vec<Block>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, v) in &self.meta {
            head.push_str(&format!("meta {k} {v}\n"));
        }
        let mut offset = 0;
        for b in &self.blocks {
            head.push_str(&format!(
                "block {} {} {} {} offset={} count={}\n",
                b.name,
                b.kind,
                b.dims.0,
                b.dims.1,
                offset,
                b.values.len()
            ));
            offset += b.values.len();
        }
        head.push_str("end\n");
        let mut out = head.into_bytes();
        for b in &self.blocks {
            for v in &b.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("checkpoint: {m}"));
        let end = data
            .windows(5)
            .position(|w| w == b"\nend\n")
            .ok_or_else(|| bad("missing end of header"))?;
        let head = std::str::from_utf8(&data[..end]).map_err(|_| bad("header is not UTF-8"))?;
        let mut lines = head.lines();
        let first = lines.next().ok_or_else(|| bad("empty header"))?;
        let mut parts = first.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("not a checkpoint file"));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let mut body = &data[end + 5..];
        let mut meta = BTreeMap::new();
        let mut blocks = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.first() {
                Some(&"meta") if f.len() >= 3 => {
                    meta.insert(f[1].to_string(), f[2..].join(" "));
                }
                Some(&"block") if f.len() == 7 => {
                    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad number {s:?}")));
                    let count = num(f[6].trim_start_matches("count="))?;
                    if body.len() < count * 8 {
                        return Err(bad("truncated parameter data"));
                    }
                    let values = body[..count * 8]
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    body = &body[count * 8..];
                    blocks.push(Block {
                        name: f[1].to_string(),
                        kind: f[2].to_string(),
                        dims: (num(f[3])?, num(f[4])?),
                        values,
                    });
                }
                _ => return Err(bad(&format!("unexpected header line {line:?}"))),
            }
        }
        if !body.is_empty() {
            return Err(bad("trailing bytes after parameters"));
        }
        Ok(Checkpoint { meta, blocks })
    }

    pub fn block(&self, name: &str) -> Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Data(format!("checkpoint has no block {name:?}")))
    }

    fn lstm(&self, name: &str) -> Result<LstmParams> {
        let b = self.block(name)?;
        let p = LstmParams {
            input_dim: b.dims.0,
            hidden_dim: b.dims.1,
            weights: b.values.clone(),
        };
        p.check()
            .map_err(|e| Error::Data(format!("checkpoint block {name}: {e}")))?;
        Ok(p)
    }

    fn linear(&self, name: &str) -> Result<Linear> {
        let b = self.block(name)?;
        let l = Linear {
            in_dim: b.dims.0,
            out_dim: b.dims.1,
            weights: b.values.clone(),
        };
        l.check()
            .map_err(|e| Error::Data(format!("checkpoint block {name}: {e}")))?;
        Ok(l)
    }
}

fn lstm_block(name: &str, p: &LstmParams) -> Block {
    Block {
        name: name.into(),
        kind: "lstm".into(),
        dims: (p.input_dim, p.hidden_dim),
        values: p.weights.clone(),
    }
}

fn linear_block(name: &str, l: &Linear) -> Block {
    Block {
        name: name.into(),
        kind: "linear".into(),
        dims: (l.in_dim, l.out_dim),
        values: l.weights.clone(),
    }
}

impl SeqModel {
    pub fn to_checkpoint(&self, meta: BTreeMap<String, String>) -> Checkpoint {
        Checkpoint {
            meta,
            blocks: vec![lstm_block("lstm", &self.lstm), linear_block("readout", &self.readout)],
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let m = SeqModel {
            lstm: c.lstm("lstm")?,
            readout: c.linear("readout")?,
        };
        m.check().map_err(|e| Error::Data(format!("checkpoint: {e}")))?;
        Ok(m)
    }
}

impl Seq2Seq {
    pub fn to_checkpoint(&self, meta: BTreeMap<String, String>) -> Checkpoint {
        Checkpoint {
            meta,
            blocks: vec![
                lstm_block("encoder", &self.encoder),
                lstm_block("decoder", &self.decoder),
                linear_block("readout", &self.readout),
            ],
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let m = Seq2Seq {
            encoder: c.lstm("encoder")?,
            decoder: c.lstm("decoder")?,
            readout: c.linear("readout")?,
        };
        m.check(&[vec![0.0; m.dim()]])
            .map_err(|e| Error::Data(format!("checkpoint: {e}")))?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Scalar-by-scalar forward pass written independently of `run`.
    fn reference_forward(m: &SeqModel, seq: &[Vec<f64>]) -> Vec<f64> {
        let (ni, nh) = (m.lstm.input_dim, m.lstm.hidden_dim);
        let w = |g: usize, u: usize, c: usize| m.lstm.weights[(g * nh + u) * (ni + nh + 1) + c];
        let mut h = vec![0.0; nh];
        let mut c = vec![0.0; nh];
        for x in seq {
            let pre = |g: usize, u: usize| {
                let mut s = w(g, u, ni + nh);
                for k in 0..ni {
                    s += w(g, u, k) * x[k];
                }
                for k in 0..nh {
                    s += w(g, u, ni + k) * h[k];
                }
                s
            };
            let mut nh_ = vec![0.0; nh];
            let mut nc = vec![0.0; nh];
            for u in 0..nh {
                let i = 1.0 / (1.0 + (-pre(0, u)).exp());
                let f = 1.0 / (1.0 + (-pre(1, u)).exp());
                let o = 1.0 / (1.0 + (-pre(2, u)).exp());
                let g = pre(3, u).tanh();
                nc[u] = f * c[u] + i * g;
                nh_[u] = o * nc[u].tanh();
            }
            h = nh_;
            c = nc;
        }
        m.readout.apply(&h)
    }

    #[test]
    fn parameter_count() {
        assert_eq!(LstmParams::param_count(3, 5), 4 * 5 * 9);
        let m = SeqModel::new(3, 5, 2, 0);
        assert_eq!(m.lstm.weights.len(), 180);
        assert_eq!(m.readout.weights.len(), 12);
    }

    #[test]
    fn zero_params_give_zero_hidden() {
        let m = SeqModel {
            lstm: LstmParams::zeros(2, 3),
            readout: Linear {
                in_dim: 3,
                out_dim: 1,
                weights: vec![0.0; 4],
            },
        };
        let out = lstm_forward(&m, &[vec![5.0, -2.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(out.hidden.len(), 2);
        assert!(out.hidden.iter().flatten().all(|&h| h == 0.0));
    }

    #[test]
    fn empty_sequence_reads_initial_state() {
        let m = SeqModel::new(1, 4, 2, 9);
        let out = lstm_forward(&m, &[]).unwrap();
        assert!(out.hidden.is_empty());
        assert_eq!(out.prediction, m.readout.apply(&[0.0; 4]));
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let m = SeqModel::new(2, 3, 1, 0);
        assert!(matches!(lstm_forward(&m, &[vec![1.0]]), Err(Error::Structural(_))));
        assert!(lstm_backward(&m, &[vec![1.0, 2.0]], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn golden_forward() {
        let m = SeqModel::new(1, 4, 1, 1234);
        let seq = vec![vec![1.0], vec![2.0], vec![3.0]];
        let p = lstm_forward(&m, &seq).unwrap().prediction[0];
        assert!((p - reference_forward(&m, &seq)[0]).abs() < 1e-15);
        // frozen from the reference pass
        assert!((p - GOLDEN).abs() < 1e-12, "{p:.17}");
    }

    const GOLDEN: f64 = 0.001_832_282_656_509_55;

    #[test]
    fn gradient_check_grid() {
        for (k, &(i, h)) in [(1, 2), (1, 4), (1, 8), (2, 2), (2, 4), (2, 8), (4, 2), (4, 4), (4, 8)]
            .iter()
            .enumerate()
        {
            let err = random_gradient_check(i, h, 4, 100 + k as u64).unwrap();
            assert!(err < 1e-4, "input {i} hidden {h}: {err}");
        }
    }

    #[test]
    fn seq2seq_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Seq2Seq::new(3, 4, 5);
        let w: Vec<f64> = m.params().iter().map(|_| rng.gen_range(-0.5..0.5)).collect();
        m.set_params(&w);
        let seq = vec![vec![0.1, 0.5, -0.3], vec![0.9, 0.0, 0.2], vec![-0.4, 0.3, 0.8]];
        let err = gradient_check(&m, &seq, &[0.2, -0.1, 0.7]).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn zero_loss_zero_readout_bias_gradient() {
        let m = SeqModel::new(2, 3, 2, 4);
        let seq = vec![vec![0.3, 0.1], vec![0.2, 0.9]];
        let target = lstm_forward(&m, &seq).unwrap().prediction;
        let (loss, g) = lstm_backward(&m, &seq, &target, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        let n = m.lstm.weights.len();
        assert_eq!(g[n + 3], 0.0);
        assert_eq!(g[n + 7], 0.0);
    }

    #[test]
    fn loss_scale_is_linear() {
        let m = SeqModel::new(2, 3, 1, 4);
        let seq = vec![vec![0.3, 0.1], vec![0.2, 0.9]];
        let (l1, g1) = lstm_backward(&m, &seq, &[0.5], 1.0).unwrap();
        let (l2, g2) = lstm_backward(&m, &seq, &[0.5], 2.0).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(*b, 2.0 * a);
        }
    }

    #[test]
    fn memorizes_one_pattern() {
        let mut m = SeqModel::new(1, 4, 1, 2);
        let data: Vec<Sample> = vec![(vec![vec![0.2], vec![0.4]], vec![0.6]); 8];
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 300,
            batch_size: 4,
            seed: 1,
            clip_norm: 5.0,
        };
        let r = train(&mut m, &data, &cfg).unwrap();
        assert!(r.final_loss() < 1e-4, "{}", r.final_loss());
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<Sample> = (0..20)
            .map(|k| (vec![vec![k as f64 / 20.0]], vec![1.0 - k as f64 / 20.0]))
            .collect();
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let mut a = SeqModel::new(1, 3, 1, 8);
        let mut b = a.clone();
        train(&mut a, &data, &cfg).unwrap();
        train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = SeqModel::new(1, 2, 1, 0);
        let data: Vec<Sample> = vec![(vec![vec![f64::NAN]], vec![1.0])];
        let r = train(&mut m, &data, &TrainConfig::default());
        assert!(matches!(r, Err(Error::Divergence(_))));
    }

    #[test]
    fn bad_configs_rejected() {
        let mut m = SeqModel::new(1, 2, 1, 0);
        let data: Vec<Sample> = vec![(vec![vec![1.0]], vec![1.0])];
        let zero_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&mut m, &data, &zero_lr), Err(Error::Config(_))));
        assert!(matches!(
            train(&mut m, &[], &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let m = SeqModel::new(2, 3, 2, 77);
        let meta = BTreeMap::from([("category".to_string(), "RT".to_string())]);
        let bytes = m.to_checkpoint(meta.clone()).to_bytes();
        let c = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(c.meta, meta);
        let back = SeqModel::from_checkpoint(&c).unwrap();
        assert_eq!(back, m);
        let seq = vec![vec![0.25, -1.0]];
        assert_eq!(
            lstm_forward(&back, &seq).unwrap().prediction,
            lstm_forward(&m, &seq).unwrap().prediction
        );

        let s = Seq2Seq::new(4, 3, 1);
        let back =
            Seq2Seq::from_checkpoint(&Checkpoint::from_bytes(&s.to_checkpoint(BTreeMap::new()).to_bytes()).unwrap())
                .unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let bytes = SeqModel::new(1, 2, 1, 0).to_checkpoint(BTreeMap::new()).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense\nend\n").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut v2 = bytes.clone();
        v2[CHECKPOINT_MAGIC.len() + 1] = b'2';
        assert!(Checkpoint::from_bytes(&v2).is_err());
    }

    proptest! {
        #[test]
        fn hidden_states_bounded(seed in any::<u64>(), xs in prop::collection::vec(-50.0f64..50.0, 1..6)) {
            let mut m = SeqModel::new(1, 3, 1, seed);
            let w: Vec<f64> = m.params().iter().map(|v| v * 40.0).collect();
            m.set_params(&w);
            let seq: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
            let out = lstm_forward(&m, &seq).unwrap();
            prop_assert!(out.hidden.iter().flatten().all(|h| h.abs() <= 1.0));
        }
    }
}
