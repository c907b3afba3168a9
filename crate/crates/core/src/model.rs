//! Multi-layer LSTM with a scalar regression head, written directly on the
//! flat-vector kernels in [`crate::linalg`].
//!
//! The cell follows the standard formulation: at each timestep, with input
//! `x`, previous hidden state `h` and previous cell state `c`,
//!
//! ```text
//! i = sigmoid(Wi x + Ui h + bi)      input gate
//! f = sigmoid(Wf x + Uf h + bf)      forget gate
//! o = sigmoid(Wo x + Uo h + bo)      output gate
//! g = tanh   (Wc x + Uc h + bc)      candidate cell
//! c' = f * c + i * g
//! h' = o * tanh(c')
//! ```
//!
//! The forward pass records a tape of activations; [`LstmModel::backward`]
//! replays it to produce exact gradients (backpropagation through time,
//! no truncation inside a call). Inverted dropout sits between stacked
//! layers only: never on the recurrent path, the network input, or the
//! head input, and one mask per layer boundary is shared by every timestep
//! of a forward call.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Mat};

/// Weights of one gate: input projection `w`, recurrent projection `u`,
/// bias `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

impl GateWeights {
    fn n_params(&self) -> usize {
        self.w.as_slice().len() + self.u.as_slice().len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_gate: GateWeights,
    pub forget_gate: GateWeights,
    pub output_gate: GateWeights,
    pub cell_gate: GateWeights,
}

impl LstmLayer {
    fn gates(&self) -> [&GateWeights; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.cell_gate]
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.b.len()
    }

    pub fn input_width(&self) -> usize {
        self.input_gate.w.cols()
    }

    /// One cell update. Exposed so the arithmetic can be checked against a
    /// straight-line scalar computation.
    pub fn cell_step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepActs {
        let n = self.hidden();
        let pre = |gate: &GateWeights| {
            let mut a = gate.b.clone();
            gate.w.matvec_add(x, &mut a);
            gate.u.matvec_add(h_prev, &mut a);
            a
        };
        let mut i = pre(&self.input_gate);
        let mut f = pre(&self.forget_gate);
        let mut o = pre(&self.output_gate);
        let mut g = pre(&self.cell_gate);
        for k in 0..n {
            i[k] = sigmoid(i[k]);
            f[k] = sigmoid(f[k]);
            o[k] = sigmoid(o[k]);
            g[k] = g[k].tanh();
        }
        let mut c = vec![0.0; n];
        let mut tanh_c = vec![0.0; n];
        let mut h = vec![0.0; n];
        for k in 0..n {
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
        StepActs { i, f, o, g, c, tanh_c, h }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one layer at one timestep, as recorded on the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct StepActs {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Features per timestep.
    pub input_width: usize,
    /// Hidden units of each stacked layer, bottom first.
    pub layer_sizes: Vec<usize>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 {
            return Err(Error::Config("input_width must be at least 1".into()));
        }
        if self.layer_sizes.is_empty() || self.layer_sizes.iter().any(|s| *s == 0) {
            return Err(Error::Config("every layer needs at least 1 unit".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub config: ModelConfig,
    pub layers: Vec<LstmLayer>,
    /// Regression head over the top layer's hidden state.
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

/// Hidden and cell state per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(model: &LstmModel) -> Self {
        LstmState {
            h: model.layers.iter().map(|l| vec![0.0; l.hidden()]).collect(),
            c: model.layers.iter().map(|l| vec![0.0; l.hidden()]).collect(),
        }
    }
}

/// Pre-scaled inverted dropout masks, one per boundary between stacked
/// layers (so `layers - 1` masks). Entries are `0` or `1 / keep_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub masks: Vec<Vec<f64>>,
}

pub fn sample_dropout_masks(
    model: &LstmModel,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DropoutMasks> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Config(format!(
            "keep probability must be in (0, 1], got {keep_prob}"
        )));
    }
    let masks = model
        .layers
        .iter()
        .take(model.layers.len().saturating_sub(1))
        .map(|l| {
            (0..l.hidden())
                .map(|_| {
                    if rng.gen::<f64>() < keep_prob {
                        1.0 / keep_prob
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(DropoutMasks { masks })
}

/// Everything the backward pass needs to replay a forward call.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Raw network input per timestep.
    inputs: Vec<Vec<f64>>,
    /// `acts[t][l]`: activations of layer `l` at timestep `t`.
    acts: Vec<Vec<StepActs>>,
    init: LstmState,
    masks: Option<DropoutMasks>,
}

impl Tape {
    pub fn n_steps(&self) -> usize {
        self.inputs.len()
    }

    /// Dropout mask applied between layers `l` and `l + 1`, if any.
    pub fn mask(&self, l: usize) -> Option<&[f64]> {
        self.masks.as_ref().map(|m| m.masks[l].as_slice())
    }
}

pub struct ForwardOutput {
    /// One prediction per timestep, from the head over the top layer.
    pub predictions: Vec<f64>,
    pub state: LstmState,
    pub tape: Tape,
}

/// Glorot-uniform initialization: weights from `U(-s, s)` with
/// `s = sqrt(6 / (fan_in + fan_out))`, biases zero except the forget gate
/// bias at 1 (the usual trick to keep early memory open). Matrices are
/// filled in declaration order from the seeded stream, so a seed pins the
/// whole model.
pub fn init_model(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<LstmModel> {
    config.validate()?;
    let glorot_mat = |rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-s..=s)).collect();
        Mat::from_vec(rows, cols, data)
    };
    let mut layers = Vec::with_capacity(config.layer_sizes.len());
    let mut in_width = config.input_width;
    for &hidden in &config.layer_sizes {
        let gate = |rng: &mut ChaCha8Rng, forget: bool| GateWeights {
            w: glorot_mat(rng, hidden, in_width, in_width, hidden),
            u: glorot_mat(rng, hidden, hidden, hidden, hidden),
            b: vec![if forget { 1.0 } else { 0.0 }; hidden],
        };
        layers.push(LstmLayer {
            input_gate: gate(rng, false),
            forget_gate: gate(rng, true),
            output_gate: gate(rng, false),
            cell_gate: gate(rng, false),
        });
        in_width = hidden;
    }
    let last = *config.layer_sizes.last().unwrap();
    let s = (6.0 / (last + 1) as f64).sqrt();
    let head_w = (0..last).map(|_| rng.gen_range(-s..=s)).collect();
    Ok(LstmModel {
        config: config.clone(),
        layers,
        head_w,
        head_b: 0.0,
    })
}

impl LstmModel {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    fn check_state(&self, state: &LstmState) -> Result<()> {
        let ok = state.h.len() == self.layers.len()
            && state.c.len() == self.layers.len()
            && self
                .layers
                .iter()
                .enumerate()
                .all(|(l, layer)| {
                    state.h[l].len() == layer.hidden() && state.c[l].len() == layer.hidden()
                });
        if ok {
            Ok(())
        } else {
            Err(Error::Contract("state shape does not match the model".into()))
        }
    }

    fn check_masks(&self, masks: &DropoutMasks) -> Result<()> {
        let boundaries = self.layers.len() - 1;
        let ok = masks.masks.len() == boundaries
            && (0..boundaries).all(|l| masks.masks[l].len() == self.layers[l].hidden());
        if ok {
            Ok(())
        } else {
            Err(Error::Contract("dropout masks do not match the layer stack".into()))
        }
    }

    /// Run the network over `steps`, recording a tape for backprop.
    pub fn forward(
        &self,
        steps: &[&[f64]],
        state: &LstmState,
        masks: Option<&DropoutMasks>,
    ) -> Result<ForwardOutput> {
        let (predictions, state, tape) = self.run(steps, state, masks, true)?;
        Ok(ForwardOutput {
            predictions,
            state,
            tape: tape.unwrap(),
        })
    }

    /// Inference: no dropout, no tape.
    pub fn predict(&self, steps: &[&[f64]], state: &LstmState) -> Result<(Vec<f64>, LstmState)> {
        let (predictions, state, _) = self.run(steps, state, None, false)?;
        Ok((predictions, state))
    }

    fn run(
        &self,
        steps: &[&[f64]],
        state: &LstmState,
        masks: Option<&DropoutMasks>,
        record: bool,
    ) -> Result<(Vec<f64>, LstmState, Option<Tape>)> {
        if steps.is_empty() {
            return Err(Error::Contract("forward needs at least one timestep".into()));
        }
        self.check_state(state)?;
        if let Some(m) = masks {
            self.check_masks(m)?;
        }
        for (t, s) in steps.iter().enumerate() {
            if s.len() != self.config.input_width {
                return Err(Error::Contract(format!(
                    "timestep {t} has width {}, model expects {}",
                    s.len(),
                    self.config.input_width
                )));
            }
        }

        let n_layers = self.layers.len();
        let mut cur = state.clone();
        let mut predictions = Vec::with_capacity(steps.len());
        let mut acts_log: Vec<Vec<StepActs>> = Vec::new();
        let mut buf: Vec<f64> = Vec::new();
        for &step in steps {
            let mut step_acts = Vec::with_capacity(if record { n_layers } else { 0 });
            let mut x: &[f64] = step;
            for l in 0..n_layers {
                let acts = self.layers[l].cell_step(x, &cur.h[l], &cur.c[l]);
                cur.h[l].copy_from_slice(&acts.h);
                cur.c[l].copy_from_slice(&acts.c);
                if l + 1 < n_layers {
                    buf.clear();
                    match masks {
                        Some(m) => {
                            buf.extend(acts.h.iter().zip(&m.masks[l]).map(|(h, m)| h * m))
                        }
                        None => buf.extend_from_slice(&acts.h),
                    }
                } else {
                    predictions.push(dot(&self.head_w, &acts.h) + self.head_b);
                }
                if record {
                    step_acts.push(acts);
                }
                x = &buf;
            }
            if record {
                acts_log.push(step_acts);
            }
        }
        let tape = record.then(|| Tape {
            inputs: steps.iter().map(|s| s.to_vec()).collect(),
            acts: acts_log,
            init: state.clone(),
            masks: masks.cloned(),
        });
        Ok((predictions, cur, tape))
    }

    /// Exact BPTT over a recorded tape. `d_predictions[t]` is the loss
    /// gradient w.r.t. the prediction at timestep `t` (zero for timesteps
    /// that do not contribute).
    pub fn backward(&self, tape: &Tape, d_predictions: &[f64]) -> Result<Gradients> {
        let n_steps = tape.n_steps();
        if d_predictions.len() != n_steps {
            return Err(Error::Contract(format!(
                "{} prediction gradients for {} timesteps",
                d_predictions.len(),
                n_steps
            )));
        }
        let n_layers = self.layers.len();
        let mut grads = Gradients::zeros_like(self);
        // Recurrent gradient carried from timestep t + 1 back to t.
        let mut dh_rec: Vec<Vec<f64>> =
            self.layers.iter().map(|l| vec![0.0; l.hidden()]).collect();
        let mut dc_rec: Vec<Vec<f64>> =
            self.layers.iter().map(|l| vec![0.0; l.hidden()]).collect();

        for t in (0..n_steps).rev() {
            // Gradient w.r.t. the input of the layer above, pushed down the
            // stack as we walk it top to bottom.
            let mut dx_above: Vec<f64> = Vec::new();
            for l in (0..n_layers).rev() {
                let acts = &tape.acts[t][l];
                let hidden = self.layers[l].hidden();

                let mut dh = std::mem::take(&mut dh_rec[l]);
                if l == n_layers - 1 {
                    let dp = d_predictions[t];
                    if dp != 0.0 {
                        axpy(dp, &self.head_w, &mut dh);
                        axpy(dp, &acts.h, &mut grads.head_w);
                        grads.head_b += dp;
                    }
                } else {
                    match tape.mask(l) {
                        Some(mask) => {
                            for k in 0..hidden {
                                dh[k] += mask[k] * dx_above[k];
                            }
                        }
                        None => axpy(1.0, &dx_above, &mut dh),
                    }
                }

                let (h_prev, c_prev) = if t == 0 {
                    (&tape.init.h[l], &tape.init.c[l])
                } else {
                    (&tape.acts[t - 1][l].h, &tape.acts[t - 1][l].c)
                };

                let mut dc = std::mem::take(&mut dc_rec[l]);
                let mut da_i = vec![0.0; hidden];
                let mut da_f = vec![0.0; hidden];
                let mut da_o = vec![0.0; hidden];
                let mut da_g = vec![0.0; hidden];
                for k in 0..hidden {
                    dc[k] += dh[k] * acts.o[k] * (1.0 - acts.tanh_c[k] * acts.tanh_c[k]);
                    da_o[k] = dh[k] * acts.tanh_c[k] * acts.o[k] * (1.0 - acts.o[k]);
                    da_f[k] = dc[k] * c_prev[k] * acts.f[k] * (1.0 - acts.f[k]);
                    da_i[k] = dc[k] * acts.g[k] * acts.i[k] * (1.0 - acts.i[k]);
                    da_g[k] = dc[k] * acts.i[k] * (1.0 - acts.g[k] * acts.g[k]);
                }
                // Cell-state gradient flowing to t - 1.
                for k in 0..hidden {
                    dc[k] *= acts.f[k];
                }
                dc_rec[l] = dc;

                // Input to this layer at t: the raw step for layer 0, the
                // (masked) hidden state from below otherwise.
                let owned_x;
                let x: &[f64] = if l == 0 {
                    &tape.inputs[t]
                } else {
                    let below = &tape.acts[t][l - 1].h;
                    owned_x = match tape.mask(l - 1) {
                        Some(mask) => below.iter().zip(mask).map(|(h, m)| h * m).collect(),
                        None => below.clone(),
                    };
                    &owned_x
                };

                let layer_grads = &mut grads.layers[l];
                let gate_grads = [
                    (&mut layer_grads.input_gate, &da_i),
                    (&mut layer_grads.forget_gate, &da_f),
                    (&mut layer_grads.output_gate, &da_o),
                    (&mut layer_grads.cell_gate, &da_g),
                ];
                for (gg, da) in gate_grads {
                    gg.w.outer_add(da, x);
                    gg.u.outer_add(da, h_prev);
                    axpy(1.0, da, &mut gg.b);
                }

                // Hidden-state gradient flowing to t - 1 and input gradient
                // for the layer below.
                let mut dh_prev = vec![0.0; hidden];
                let weights = self.layers[l].gates();
                let das = [&da_i, &da_f, &da_o, &da_g];
                for (gate, da) in weights.iter().zip(das) {
                    gate.u.matvec_transpose_add(da, &mut dh_prev);
                }
                dh_rec[l] = dh_prev;
                if l > 0 {
                    let below = self.layers[l - 1].hidden();
                    let mut dx = vec![0.0; below];
                    for (gate, da) in weights.iter().zip(das) {
                        gate.w.matvec_transpose_add(da, &mut dx);
                    }
                    dx_above = dx;
                }
            }
        }
        Ok(grads)
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.gates().iter().map(|g| g.n_params()).sum::<usize>())
            .sum::<usize>()
            + self.head_w.len()
            + 1
    }

    /// Flatten all parameters in the canonical order: per layer the gates
    /// (input, forget, output, cell), each as `w`, `u`, `b`; then the head.
    /// [`Gradients::to_flat`] uses the same order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            for gate in layer.gates() {
                out.extend_from_slice(gate.w.as_slice());
                out.extend_from_slice(gate.u.as_slice());
                out.extend_from_slice(&gate.b);
            }
        }
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Contract(format!(
                "parameter vector has {} entries, model has {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &flat[at..at + n];
            at += n;
            s
        };
        for layer in &mut self.layers {
            for gate in [
                &mut layer.input_gate,
                &mut layer.forget_gate,
                &mut layer.output_gate,
                &mut layer.cell_gate,
            ] {
                let n = gate.w.as_slice().len();
                gate.w.as_mut_slice().copy_from_slice(take(n));
                let n = gate.u.as_slice().len();
                gate.u.as_mut_slice().copy_from_slice(take(n));
                let n = gate.b.len();
                gate.b.copy_from_slice(take(n));
            }
        }
        let n = self.head_w.len();
        self.head_w.copy_from_slice(take(n));
        self.head_b = take(1)[0];
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateGrads {
    pub w: Mat,
    pub u: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub input_gate: GateGrads,
    pub forget_gate: GateGrads,
    pub output_gate: GateGrads,
    pub cell_gate: GateGrads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl Gradients {
    pub fn zeros_like(model: &LstmModel) -> Self {
        let zero_gate = |g: &GateWeights| GateGrads {
            w: Mat::zeros(g.w.rows(), g.w.cols()),
            u: Mat::zeros(g.u.rows(), g.u.cols()),
            b: vec![0.0; g.b.len()],
        };
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrads {
                    input_gate: zero_gate(&l.input_gate),
                    forget_gate: zero_gate(&l.forget_gate),
                    output_gate: zero_gate(&l.output_gate),
                    cell_gate: zero_gate(&l.cell_gate),
                })
                .collect(),
            head_w: vec![0.0; model.head_w.len()],
            head_b: 0.0,
        }
    }

    /// Accumulate another gradient (used to sum per-example gradients
    /// within a batch).
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (ga, gb) in [
                (&mut a.input_gate, &b.input_gate),
                (&mut a.forget_gate, &b.forget_gate),
                (&mut a.output_gate, &b.output_gate),
                (&mut a.cell_gate, &b.cell_gate),
            ] {
                axpy(1.0, gb.w.as_slice(), ga.w.as_mut_slice());
                axpy(1.0, gb.u.as_slice(), ga.u.as_mut_slice());
                axpy(1.0, &gb.b, &mut ga.b);
            }
        }
        axpy(1.0, &other.head_w, &mut self.head_w);
        self.head_b += other.head_b;
    }

    /// Same canonical order as [`LstmModel::params_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for gate in [&layer.input_gate, &layer.forget_gate, &layer.output_gate, &layer.cell_gate]
            {
                out.extend_from_slice(gate.w.as_slice());
                out.extend_from_slice(gate.u.as_slice());
                out.extend_from_slice(&gate.b);
            }
        }
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small_model(input: usize, sizes: &[usize], seed: u64) -> LstmModel {
        let config = ModelConfig {
            input_width: input,
            layer_sizes: sizes.to_vec(),
        };
        init_model(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn random_steps(rng: &mut ChaCha8Rng, t: usize, width: usize) -> Vec<Vec<f64>> {
        (0..t)
            .map(|_| (0..width).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect()
    }

    fn as_refs(steps: &[Vec<f64>]) -> Vec<&[f64]> {
        steps.iter().map(|s| s.as_slice()).collect()
    }

    #[test]
    fn cell_step_matches_straight_line_arithmetic() {
        // One unit, one input: every product is a scalar we can compute
        // longhand.
        let layer = LstmLayer {
            input_gate: GateWeights {
                w: Mat::from_vec(1, 1, vec![0.5]),
                u: Mat::from_vec(1, 1, vec![-0.25]),
                b: vec![0.1],
            },
            forget_gate: GateWeights {
                w: Mat::from_vec(1, 1, vec![-0.3]),
                u: Mat::from_vec(1, 1, vec![0.2]),
                b: vec![1.0],
            },
            output_gate: GateWeights {
                w: Mat::from_vec(1, 1, vec![0.7]),
                u: Mat::from_vec(1, 1, vec![0.4]),
                b: vec![-0.2],
            },
            cell_gate: GateWeights {
                w: Mat::from_vec(1, 1, vec![1.1]),
                u: Mat::from_vec(1, 1, vec![-0.6]),
                b: vec![0.0],
            },
        };
        let (x, h0, c0) = (0.8, 0.3, -0.4);
        let acts = layer.cell_step(&[x], &[h0], &[c0]);

        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let i = sig(0.5 * x - 0.25 * h0 + 0.1);
        let f = sig(-0.3 * x + 0.2 * h0 + 1.0);
        let o = sig(0.7 * x + 0.4 * h0 - 0.2);
        let g = (1.1 * x - 0.6 * h0).tanh();
        let c = f * c0 + i * g;
        let h = o * c.tanh();
        assert!((acts.i[0] - i).abs() < 1e-15);
        assert!((acts.f[0] - f).abs() < 1e-15);
        assert!((acts.o[0] - o).abs() < 1e-15);
        assert!((acts.g[0] - g).abs() < 1e-15);
        assert!((acts.c[0] - c).abs() < 1e-15);
        assert!((acts.h[0] - h).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_independent_scalar_unroll() {
        // One layer, one unit, three steps: unroll the recurrence by hand.
        let model = {
            let mut m = small_model(1, &[1], 3);
            m.set_params_flat(&[
                0.5, -0.25, 0.1, // input gate w, u, b
                -0.3, 0.2, 0.9, // forget gate
                0.7, 0.4, -0.2, // output gate
                1.1, -0.6, 0.0, // cell gate
                2.0, 0.05, // head w, b
            ])
            .unwrap();
            m
        };
        let steps = [vec![0.8], vec![-0.5], vec![0.2]];
        let out = model
            .forward(&as_refs(&steps), &LstmState::zeros(&model), None)
            .unwrap();

        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let (mut h, mut c) = (0.0, 0.0);
        let mut expected = Vec::new();
        for x in [0.8, -0.5, 0.2] {
            let i = sig(0.5 * x - 0.25 * h + 0.1);
            let f = sig(-0.3 * x + 0.2 * h + 0.9);
            let o = sig(0.7 * x + 0.4 * h - 0.2);
            let g = (1.1 * x - 0.6 * h).tanh();
            c = f * c + i * g;
            h = o * c.tanh();
            expected.push(2.0 * h + 0.05);
        }
        for (got, want) in out.predictions.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        assert!((out.state.h[0][0] - h).abs() < 1e-14);
        assert!((out.state.c[0][0] - c).abs() < 1e-14);
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = small_model(7, &[8, 4], 42);
        let b = small_model(7, &[8, 4], 42);
        assert_eq!(a, b);
        let c = small_model(7, &[8, 4], 43);
        assert_ne!(a, c);

        assert_eq!(a.layers[0].input_width(), 7);
        assert_eq!(a.layers[0].hidden(), 8);
        assert_eq!(a.layers[1].input_width(), 8);
        assert_eq!(a.layers[1].hidden(), 4);
        assert_eq!(a.head_w.len(), 4);
        assert_eq!(a.head_b, 0.0);
        // Forget bias 1, other biases 0.
        assert!(a.layers.iter().all(|l| l.forget_gate.b.iter().all(|b| *b == 1.0)));
        assert!(a.layers.iter().all(|l| l.input_gate.b.iter().all(|b| *b == 0.0)));
        // Glorot bound for the first layer's input weights.
        let s = (6.0f64 / 15.0).sqrt();
        assert!(a.layers[0].input_gate.w.as_slice().iter().all(|w| w.abs() <= s));
        assert!(a.layers[0].input_gate.w.as_slice().iter().any(|w| *w != 0.0));
    }

    #[test]
    fn params_flat_round_trips() {
        let a = small_model(3, &[5, 2], 11);
        let flat = a.params_flat();
        assert_eq!(flat.len(), a.n_params());
        let mut b = small_model(3, &[5, 2], 99);
        b.set_params_flat(&flat).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn state_chaining_matches_one_long_forward() {
        let model = small_model(4, &[6, 5], 17);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let steps = random_steps(&mut rng, 12, 4);
        let refs = as_refs(&steps);
        let zero = LstmState::zeros(&model);
        let (full, full_state) = model.predict(&refs, &zero).unwrap();
        let (first, mid) = model.predict(&refs[..5], &zero).unwrap();
        let (second, end) = model.predict(&refs[5..], &mid).unwrap();
        let chained: Vec<f64> = first.into_iter().chain(second).collect();
        for (a, b) in full.iter().zip(&chained) {
            assert!((a - b).abs() < 1e-12);
        }
        for l in 0..2 {
            for k in 0..full_state.h[l].len() {
                assert!((full_state.h[l][k] - end.h[l][k]).abs() < 1e-12);
                assert!((full_state.c[l][k] - end.c[l][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_masks_are_scaled_and_bounded() {
        let model = small_model(3, &[50, 40, 30], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let masks = sample_dropout_masks(&model, 0.5, &mut rng).unwrap();
        assert_eq!(masks.masks.len(), 2, "one mask per layer boundary");
        assert_eq!(masks.masks[0].len(), 50);
        assert_eq!(masks.masks[1].len(), 40);
        let mut seen = [0usize; 2];
        for mask in &masks.masks {
            for v in mask {
                assert!(*v == 0.0 || *v == 2.0, "inverted dropout at keep 0.5: {v}");
                seen[usize::from(*v == 0.0)] += 1;
            }
        }
        assert!(seen[0] > 10 && seen[1] > 10, "both outcomes occur: {seen:?}");

        // Expectation over many draws is 1 per unit.
        let mut sum = 0.0;
        let mut count = 0.0;
        for _ in 0..200 {
            let m = sample_dropout_masks(&model, 0.5, &mut rng).unwrap();
            sum += m.masks.iter().flatten().sum::<f64>();
            count += m.masks.iter().map(|v| v.len()).sum::<usize>() as f64;
        }
        assert!((sum / count - 1.0).abs() < 0.05);

        let keep_all = sample_dropout_masks(&model, 1.0, &mut rng).unwrap();
        assert!(keep_all.masks.iter().flatten().all(|v| *v == 1.0));
        assert!(sample_dropout_masks(&model, 0.0, &mut rng).is_err());
    }

    #[test]
    fn dropout_zeroed_units_do_not_reach_the_next_layer() {
        // With a mask of all zeros between the layers, the top layer sees a
        // constant zero input, so two very different bottom inputs give the
        // same prediction.
        let model = small_model(2, &[3, 3], 8);
        let masks = DropoutMasks {
            masks: vec![vec![0.0; 3]],
        };
        let zero = LstmState::zeros(&model);
        let a = model.forward(&[&[5.0, -3.0]], &zero, Some(&masks)).unwrap();
        let b = model.forward(&[&[-2.0, 9.0]], &zero, Some(&masks)).unwrap();
        assert_eq!(a.predictions, b.predictions);
    }

    /// Central finite differences over every parameter.
    fn gradient_check(
        model: &mut LstmModel,
        steps: &[Vec<f64>],
        d_pred: &[f64],
        masks: Option<&DropoutMasks>,
        state: &LstmState,
    ) -> f64 {
        let refs = as_refs(steps);
        let out = model.forward(&refs, state, masks).unwrap();
        let analytic = model.backward(&out.tape, d_pred).unwrap().to_flat();

        let eps = 1e-5;
        let base = model.params_flat();
        let mut worst = 0.0f64;
        for p in 0..base.len() {
            let mut theta = base.clone();
            theta[p] = base[p] + eps;
            model.set_params_flat(&theta).unwrap();
            let plus: f64 = model
                .forward(&refs, state, masks)
                .unwrap()
                .predictions
                .iter()
                .zip(d_pred)
                .map(|(p, d)| p * d)
                .sum();
            theta[p] = base[p] - eps;
            model.set_params_flat(&theta).unwrap();
            let minus: f64 = model
                .forward(&refs, state, masks)
                .unwrap()
                .predictions
                .iter()
                .zip(d_pred)
                .map(|(p, d)| p * d)
                .sum();
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (fd - analytic[p]).abs() / (fd.abs() + analytic[p].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        model.set_params_flat(&base).unwrap();
        worst
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut model = small_model(3, &[4, 3], 21);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let steps = random_steps(&mut rng, 6, 3);
        let d_pred: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let state = LstmState::zeros(&model);
        let worst = gradient_check(&mut model, &steps, &d_pred, None, &state);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn bptt_matches_finite_differences_with_dropout_and_state() {
        let mut model = small_model(2, &[3, 3, 2], 33);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let steps = random_steps(&mut rng, 5, 2);
        // Last-step-only gradient, the sequence-mode shape.
        let mut d_pred = vec![0.0; 5];
        d_pred[4] = 1.0;
        let masks = sample_dropout_masks(&model, 0.5, &mut rng).unwrap();
        // Nonzero initial state exercises the t = 0 boundary.
        let mut state = LstmState::zeros(&model);
        for h in state.h.iter_mut().flatten() {
            *h = rng.gen_range(-0.5..=0.5);
        }
        for c in state.c.iter_mut().flatten() {
            *c = rng.gen_range(-0.5..=0.5);
        }
        let worst = gradient_check(&mut model, &steps, &d_pred, Some(&masks), &state);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradients_accumulate_across_examples() {
        let model = small_model(2, &[3], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_steps(&mut rng, 3, 2);
        let b = random_steps(&mut rng, 3, 2);
        let zero = LstmState::zeros(&model);
        let d = vec![0.0, 0.0, 0.5];
        let ga = model
            .backward(&model.forward(&as_refs(&a), &zero, None).unwrap().tape, &d)
            .unwrap();
        let gb = model
            .backward(&model.forward(&as_refs(&b), &zero, None).unwrap().tape, &d)
            .unwrap();
        let mut sum = Gradients::zeros_like(&model);
        sum.add(&ga);
        sum.add(&gb);
        let flat_sum = sum.to_flat();
        let manual: Vec<f64> = ga
            .to_flat()
            .iter()
            .zip(gb.to_flat())
            .map(|(x, y)| x + y)
            .collect();
        assert_eq!(flat_sum, manual);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let model = small_model(3, &[4], 1);
        let zero = LstmState::zeros(&model);
        assert!(model.predict(&[&[1.0, 2.0]], &zero).is_err());
        assert!(model.predict(&[], &zero).is_err());
        let other = small_model(3, &[5], 1);
        assert!(model.predict(&[&[1.0, 2.0, 3.0]], &LstmState::zeros(&other)).is_err());
        let bad_masks = DropoutMasks { masks: vec![vec![1.0; 4]] };
        assert!(model
            .forward(&[&[1.0, 2.0, 3.0]], &zero, Some(&bad_masks))
            .is_err());
    }
}
