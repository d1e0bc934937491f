//! GRU forward pass, backpropagation through time, and the single-step
//! interface used by the decoders.
//!
//! Per layer and step, with gates stacked as [update; reset; candidate]:
//!
//! ```text
//! z  = σ(Wz x + Uz h + bz)
//! r  = σ(Wr x + Ur h + br)
//! c  = act(Wc x + Uc (r ⊙ h) + bc)
//! h' = (1 − z) ⊙ h + z ⊙ c
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Activation, EncodedQuery, LayerLayout, LmModel, Step};
use super::LmError;

/// Forward-pass mode. Dropout is inverted, applied to each layer's output,
/// and only in training mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Infer,
    Train { dropout: f64, seed: u64 },
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// out += W[rows] · x, where W is row-major with `cols` columns starting at `off`.
#[inline]
fn gemv_acc(w: &[f64], off: usize, rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[off + i * cols..off + i * cols + x.len()];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// dx += W[rows]ᵀ · d
#[inline]
fn gemv_t_acc(w: &[f64], off: usize, cols: usize, d: &[f64], dx: &mut [f64]) {
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        let row = &w[off + i * cols..off + i * cols + dx.len()];
        for (x, a) in dx.iter_mut().zip(row) {
            *x += a * di;
        }
    }
}

/// dW[rows] += d ⊗ x
#[inline]
fn outer_acc(g: &mut [f64], off: usize, cols: usize, d: &[f64], x: &[f64]) {
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        let row = &mut g[off + i * cols..off + i * cols + x.len()];
        for (gw, xv) in row.iter_mut().zip(x) {
            *gw += di * xv;
        }
    }
}

/// Recurrent state: one hidden vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<Vec<f64>>,
}

/// Gate values of one cell application, kept for backprop.
#[derive(Debug, Clone)]
struct CellTrace {
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    rh: Vec<f64>,
    h: Vec<f64>,
}

impl LmModel {
    fn layer(&self, l: usize) -> LayerLayout {
        self.layout.layers[l]
    }

    /// Bias plus the context-slot contribution of layer 0, constant for a query.
    pub(crate) fn context_preactivation(&self, context: &[f64]) -> Vec<f64> {
        let h = self.layout.hidden;
        let layer = self.layer(0);
        let w = &self.weights;
        let mut pre = w[layer.bias..layer.bias + 3 * h].to_vec();
        if !context.is_empty() {
            let co = self.layout.context_offset;
            for (r, p) in pre.iter_mut().enumerate() {
                let row = layer.w_input + r * layer.in_dim + co;
                *p += w[row..row + context.len()].iter().zip(context).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        pre
    }

    fn input_preactivation0(&self, step: &Step, ctx_pre: &[f64]) -> Vec<f64> {
        let layer = self.layer(0);
        let w = &self.weights;
        let mut pre = ctx_pre.to_vec();
        let wo = self.layout.word_offset;
        for (r, p) in pre.iter_mut().enumerate() {
            let row = layer.w_input + r * layer.in_dim;
            *p += w[row + step.symbol];
            if let Some(word) = &step.word {
                *p += w[row + wo..row + wo + word.len()].iter().zip(word).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        pre
    }

    fn input_preactivation(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let h = self.layout.hidden;
        let layer = self.layer(l);
        let mut pre = self.weights[layer.bias..layer.bias + 3 * h].to_vec();
        gemv_acc(&self.weights, layer.w_input, 3 * h, layer.in_dim, x, &mut pre);
        pre
    }

    fn cell(&self, l: usize, in_pre: &[f64], h_prev: &[f64]) -> CellTrace {
        let h = self.layout.hidden;
        let layer = self.layer(l);
        let w = &self.weights;
        let mut zr = in_pre[..2 * h].to_vec();
        gemv_acc(w, layer.w_hidden, 2 * h, h, h_prev, &mut zr);
        let z: Vec<f64> = zr[..h].iter().map(|&a| sigmoid(a)).collect();
        let r: Vec<f64> = zr[h..].iter().map(|&a| sigmoid(a)).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut ac = in_pre[2 * h..].to_vec();
        gemv_acc(w, layer.w_hidden + 2 * h * h, h, h, &rh, &mut ac);
        let c: Vec<f64> = match self.spec().activation {
            Activation::Relu => ac.iter().map(|&a| a.max(0.0)).collect(),
            Activation::Tanh => ac.iter().map(|&a| a.tanh()).collect(),
        };
        let hn = (0..h).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * c[i]).collect();
        CellTrace { z, r, c, rh, h: hn }
    }

    fn logits(&self, y: &[f64]) -> Vec<f64> {
        let v = self.layout.vocab;
        let mut out = self.weights[self.layout.out_bias..self.layout.out_bias + v].to_vec();
        gemv_acc(&self.weights, self.layout.out_weight, v, self.layout.hidden, y, &mut out);
        out
    }

    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState { hidden: vec![vec![0.0; self.layout.hidden]; self.layout.layers.len()] }
    }

    /// Consume one step in inference mode; returns log-probabilities of the
    /// next symbol.
    pub fn step(&self, state: &mut RecurrentState, step: &Step, ctx_pre: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = Vec::new();
        for l in 0..self.layout.layers.len() {
            let pre = if l == 0 { self.input_preactivation0(step, ctx_pre) } else { self.input_preactivation(l, &x) };
            let trace = self.cell(l, &pre, &state.hidden[l]);
            state.hidden[l] = trace.h;
            x = state.hidden[l].clone();
        }
        log_softmax(&self.logits(&x))
    }

    /// Per-step probability distributions for every step of `query`.
    pub fn forward(&self, query: &EncodedQuery, mode: Mode) -> Result<Vec<Vec<f64>>, LmError> {
        self.check_shape(query)?;
        let trace = self.run(query, query.steps.len(), mode);
        Ok(trace.log_probs.iter().map(|lp| lp.iter().map(|x| x.exp()).collect()).collect())
    }

    pub(crate) fn check_shape(&self, query: &EncodedQuery) -> Result<(), LmError> {
        let ctx = self.spec().user_dim + self.spec().time_dim;
        if query.context.len() != ctx {
            return Err(LmError::Shape(format!("context has {} components, model expects {ctx}", query.context.len())));
        }
        for s in &query.steps {
            if s.symbol >= self.layout.vocab {
                return Err(LmError::Shape(format!("symbol {} outside vocabulary of {}", s.symbol, self.layout.vocab)));
            }
            if let Some(w) = &s.word {
                if w.len() != self.spec().word_dim {
                    return Err(LmError::Shape(format!("word slot has {} components, model expects {}", w.len(), self.spec().word_dim)));
                }
            }
        }
        Ok(())
    }

    fn run(&self, query: &EncodedQuery, steps: usize, mode: Mode) -> SeqTrace {
        let n_layers = self.layout.layers.len();
        let h = self.layout.hidden;
        let ctx_pre = self.context_preactivation(&query.context);
        let (keep, mut rng) = match mode {
            Mode::Train { dropout, seed } if dropout > 0.0 => (1.0 - dropout, Some(ChaCha8Rng::seed_from_u64(seed))),
            _ => (1.0, None),
        };
        let mut state = self.initial_state();
        let mut trace = SeqTrace {
            cells: vec![Vec::with_capacity(steps); n_layers],
            outputs: vec![Vec::with_capacity(steps); n_layers],
            masks: vec![Vec::with_capacity(steps); n_layers],
            log_probs: Vec::with_capacity(steps),
        };
        for step in &query.steps[..steps] {
            let mut x: Vec<f64> = Vec::new();
            for l in 0..n_layers {
                let pre = if l == 0 { self.input_preactivation0(step, &ctx_pre) } else { self.input_preactivation(l, &x) };
                let cell = self.cell(l, &pre, &state.hidden[l]);
                state.hidden[l].clone_from(&cell.h);
                let mask: Option<Vec<f64>> = rng.as_mut().map(|rng| (0..h).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect());
                x = match &mask {
                    Some(m) => cell.h.iter().zip(m).map(|(a, b)| a * b).collect(),
                    None => cell.h.clone(),
                };
                trace.cells[l].push(cell);
                trace.outputs[l].push(x.clone());
                trace.masks[l].push(mask);
            }
            trace.log_probs.push(log_softmax(&self.logits(&x)));
        }
        trace
    }

    /// Cross-entropy (nats) summed over the predicted positions of one query.
    pub(crate) fn sequence_loss(&self, query: &EncodedQuery, mode: Mode) -> f64 {
        let n = query.predicted_positions();
        let trace = self.run(query, n, mode);
        (0..n).map(|t| -trace.log_probs[t][query.steps[t + 1].symbol]).sum()
    }

    /// Loss of one query and its gradient, scaled by `scale`, accumulated
    /// into `grad`. Returns the unscaled loss. When `input_grad` is given it
    /// receives dL/dx for each step's dense layer-0 input.
    pub(crate) fn sequence_backward(&self, query: &EncodedQuery, mode: Mode, scale: f64, grad: &mut [f64], mut input_grad: Option<&mut Vec<Vec<f64>>>) -> f64 {
        let n = query.predicted_positions();
        let trace = self.run(query, n, mode);
        let h = self.layout.hidden;
        let v = self.layout.vocab;
        let n_layers = self.layout.layers.len();
        let w = &self.weights;
        let act = self.spec().activation;
        let zeros = vec![0.0; h];
        let mut loss = 0.0;
        let mut dh_next = vec![vec![0.0; h]; n_layers];
        // summed layer-0 preactivation gradients, for the constant context slot
        let mut d_ctx_pre = vec![0.0; 3 * h];
        if let Some(ig) = input_grad.as_deref_mut() {
            *ig = vec![vec![0.0; self.input_dim()]; query.steps.len()];
        }

        for t in (0..n).rev() {
            let target = query.steps[t + 1].symbol;
            let lp = &trace.log_probs[t];
            loss -= lp[target];
            let mut dlogits: Vec<f64> = lp.iter().map(|x| x.exp() * scale).collect();
            dlogits[target] -= scale;
            let y_top = &trace.outputs[n_layers - 1][t];
            outer_acc(grad, self.layout.out_weight, h, &dlogits, y_top);
            for (g, d) in grad[self.layout.out_bias..self.layout.out_bias + v].iter_mut().zip(&dlogits) {
                *g += d;
            }
            let mut dy = vec![0.0; h];
            gemv_t_acc(w, self.layout.out_weight, h, &dlogits, &mut dy);

            for l in (0..n_layers).rev() {
                let layer = self.layer(l);
                let cell = &trace.cells[l][t];
                let h_prev = if t == 0 { &zeros } else { &trace.cells[l][t - 1].h };
                let mut dh: Vec<f64> = match &trace.masks[l][t] {
                    Some(m) => dy.iter().zip(m).map(|(a, b)| a * b).collect(),
                    None => dy.clone(),
                };
                for (a, b) in dh.iter_mut().zip(&dh_next[l]) {
                    *a += b;
                }
                // gate preactivation gradients, stacked [z; r; c]
                let mut da = vec![0.0; 3 * h];
                let mut dh_prev: Vec<f64> = (0..h).map(|i| dh[i] * (1.0 - cell.z[i])).collect();
                for i in 0..h {
                    let dz = dh[i] * (cell.c[i] - h_prev[i]);
                    da[i] = dz * cell.z[i] * (1.0 - cell.z[i]);
                    let dc = dh[i] * cell.z[i];
                    da[2 * h + i] = match act {
                        Activation::Relu => {
                            if cell.c[i] > 0.0 {
                                dc
                            } else {
                                0.0
                            }
                        }
                        Activation::Tanh => dc * (1.0 - cell.c[i] * cell.c[i]),
                    };
                }
                // candidate path through r ⊙ h
                let mut drh = vec![0.0; h];
                gemv_t_acc(w, layer.w_hidden + 2 * h * h, h, &da[2 * h..], &mut drh);
                outer_acc(grad, layer.w_hidden + 2 * h * h, h, &da[2 * h..], &cell.rh);
                for i in 0..h {
                    let dr = drh[i] * h_prev[i];
                    da[h + i] = dr * cell.r[i] * (1.0 - cell.r[i]);
                    dh_prev[i] += drh[i] * cell.r[i];
                }
                gemv_t_acc(w, layer.w_hidden, h, &da[..2 * h], &mut dh_prev);
                outer_acc(grad, layer.w_hidden, h, &da[..2 * h], h_prev);
                dh_next[l] = dh_prev;

                if l > 0 {
                    let x = &trace.outputs[l - 1][t];
                    outer_acc(grad, layer.w_input, layer.in_dim, &da, x);
                    for (g, d) in grad[layer.bias..layer.bias + 3 * h].iter_mut().zip(&da) {
                        *g += d;
                    }
                    dy = vec![0.0; h];
                    gemv_t_acc(w, layer.w_input, layer.in_dim, &da, &mut dy);
                } else {
                    let step = &query.steps[t];
                    let wo = self.layout.word_offset;
                    for (r, &d) in da.iter().enumerate() {
                        let row = layer.w_input + r * layer.in_dim;
                        grad[row + step.symbol] += d;
                        if let Some(word) = &step.word {
                            for (k, x) in word.iter().enumerate() {
                                grad[row + wo + k] += d * x;
                            }
                        }
                        d_ctx_pre[r] += d;
                    }
                    if let Some(ig) = input_grad.as_deref_mut() {
                        gemv_t_acc(w, layer.w_input, layer.in_dim, &da, &mut ig[t]);
                    }
                }
            }
        }

        let layer = self.layer(0);
        for (g, d) in grad[layer.bias..layer.bias + 3 * h].iter_mut().zip(&d_ctx_pre) {
            *g += d;
        }
        if !query.context.is_empty() {
            let co = self.layout.context_offset;
            for (r, &d) in d_ctx_pre.iter().enumerate() {
                let row = layer.w_input + r * layer.in_dim + co;
                for (k, x) in query.context.iter().enumerate() {
                    grad[row + k] += d * x;
                }
            }
        }
        loss
    }
}

struct SeqTrace {
    cells: Vec<Vec<CellTrace>>,
    /// Post-dropout outputs per layer and step.
    outputs: Vec<Vec<Vec<f64>>>,
    masks: Vec<Vec<Option<Vec<f64>>>>,
    log_probs: Vec<Vec<f64>>,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}
