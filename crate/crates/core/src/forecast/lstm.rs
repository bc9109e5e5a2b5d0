//! Single-layer LSTM over a scalar input with a linear read-out, trained by
//! truncated backpropagation through time.
//!
//! Gate order everywhere is forget, input, candidate, output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const GATES: usize = 4;
const FORGET: usize = 0;
const INPUT: usize = 1;
const CANDIDATE: usize = 2;
const OUTPUT: usize = 3;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// All trainable parameters live in one flat vector:
///
/// | block | shape | index |
/// |-------|-------|-------|
/// | input weights `W_*x` | 4 x h | `g*h + j` |
/// | recurrent weights `W_*h` | 4 x h x h | `g*h*h + j*h + k` |
/// | biases `b_*` | 4 x h | `g*h + j` |
/// | read-out weights | h | `j` |
/// | read-out bias | 1 | |
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    hidden: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Gate activations of one step, kept for backpropagation and inspection.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub input: f64,
    pub gates: [Vec<f64>; GATES],
    pub c_prev: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub output: f64,
}

impl LstmModel {
    pub fn param_count(hidden: usize) -> usize {
        GATES * hidden + GATES * hidden * hidden + GATES * hidden + hidden + 1
    }

    pub fn zeros(hidden: usize) -> Self {
        LstmModel {
            hidden,
            params: vec![0.0; Self::param_count(hidden)],
        }
    }

    /// Uniform weights in `±1/sqrt(h)`, forget-gate bias 1.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut model = Self::zeros(hidden);
        for p in &mut model.params {
            *p = rng.gen_range(-bound..bound);
        }
        let b = model.bias_offset();
        for j in 0..hidden {
            model.params[b + FORGET * hidden + j] = 1.0;
        }
        model
    }

    pub fn from_params(hidden: usize, params: Vec<f64>) -> Result<Self> {
        if hidden == 0 || params.len() != Self::param_count(hidden) {
            return Err(Error::invalid(format!(
                "LSTM with hidden size {hidden} needs {} parameters, got {}",
                Self::param_count(hidden),
                params.len()
            )));
        }
        Ok(LstmModel { hidden, params })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn wh_offset(&self) -> usize {
        GATES * self.hidden
    }

    fn bias_offset(&self) -> usize {
        self.wh_offset() + GATES * self.hidden * self.hidden
    }

    fn out_offset(&self) -> usize {
        self.bias_offset() + GATES * self.hidden
    }

    /// Named parameter blocks, `(name, rows, cols, values)`, row-major.
    pub fn blocks(&self) -> [(&'static str, usize, usize, &[f64]); 5] {
        let h = self.hidden;
        let (wx, rest) = self.params.split_at(GATES * h);
        let (wh, rest) = rest.split_at(GATES * h * h);
        let (b, rest) = rest.split_at(GATES * h);
        let (wo, bo) = rest.split_at(h);
        [
            ("wx", GATES, h, wx),
            ("wh", GATES * h, h, wh),
            ("b", GATES, h, b),
            ("wo", 1, h, wo),
            ("bo", 1, 1, bo),
        ]
    }

    pub fn step(&self, state: &LstmState, input: f64) -> StepTrace {
        let h = self.hidden;
        let (wh, b, wo) = (self.wh_offset(), self.bias_offset(), self.out_offset());
        let mut gates: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; h]);
        for (g, gate) in gates.iter_mut().enumerate() {
            for (j, act) in gate.iter_mut().enumerate() {
                let mut z = self.params[g * h + j] * input + self.params[b + g * h + j];
                let row = wh + g * h * h + j * h;
                for k in 0..h {
                    z += self.params[row + k] * state.h[k];
                }
                *act = if g == CANDIDATE { z.tanh() } else { sigmoid(z) };
            }
        }
        let c: Vec<f64> = (0..h)
            .map(|j| gates[CANDIDATE][j] * gates[INPUT][j] + state.c[j] * gates[FORGET][j])
            .collect();
        let hidden: Vec<f64> = (0..h).map(|j| c[j].tanh() * gates[OUTPUT][j]).collect();
        let output = self.params[wo + h] + (0..h).map(|j| self.params[wo + j] * hidden[j]).sum::<f64>();
        StepTrace {
            input,
            gates,
            c_prev: state.c.clone(),
            h_prev: state.h.clone(),
            c,
            h: hidden,
            output,
        }
    }

    /// Runs `sequence` from `state`; returns per-step outputs and the final state.
    pub fn forward_from(&self, state: &LstmState, sequence: &[f64]) -> (Vec<f64>, LstmState) {
        let mut state = state.clone();
        let mut outputs = Vec::with_capacity(sequence.len());
        for &x in sequence {
            let t = self.step(&state, x);
            outputs.push(t.output);
            state = LstmState { h: t.h, c: t.c };
        }
        (outputs, state)
    }

    pub fn forward(&self, sequence: &[f64]) -> (Vec<f64>, LstmState) {
        self.forward_from(&LstmState::zeros(self.hidden), sequence)
    }

    /// Mean squared error of the outputs against `targets` and its exact
    /// gradient with respect to every parameter (full BPTT over the chunk).
    pub fn loss_and_gradient(&self, state: &LstmState, inputs: &[f64], targets: &[f64]) -> (f64, Vec<f64>, LstmState) {
        debug_assert_eq!(inputs.len(), targets.len());
        let h = self.hidden;
        let n = inputs.len() as f64;
        let mut traces = Vec::with_capacity(inputs.len());
        let mut s = state.clone();
        for &x in inputs {
            let t = self.step(&s, x);
            s = LstmState {
                h: t.h.clone(),
                c: t.c.clone(),
            };
            traces.push(t);
        }
        let loss = traces
            .iter()
            .zip(targets)
            .map(|(t, y)| (t.output - y).powi(2))
            .sum::<f64>()
            / n;

        let (wh, b, wo) = (self.wh_offset(), self.bias_offset(), self.out_offset());
        let mut grad = vec![0.0; self.params.len()];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        for (t, y) in traces.iter().zip(targets).rev() {
            let dy = 2.0 * (t.output - y) / n;
            grad[wo + h] += dy;
            for j in 0..h {
                grad[wo + j] += dy * t.h[j];
            }
            for j in 0..h {
                let dh = dy * self.params[wo + j] + dh_next[j];
                let tanh_c = t.c[j].tanh();
                let (f, i, g, o) = (
                    t.gates[FORGET][j],
                    t.gates[INPUT][j],
                    t.gates[CANDIDATE][j],
                    t.gates[OUTPUT][j],
                );
                let dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_next[j];
                dz[OUTPUT][j] = dh * tanh_c * o * (1.0 - o);
                dz[FORGET][j] = dc * t.c_prev[j] * f * (1.0 - f);
                dz[INPUT][j] = dc * g * i * (1.0 - i);
                dz[CANDIDATE][j] = dc * i * (1.0 - g * g);
                dc_next[j] = dc * f;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (gi, dzg) in dz.iter().enumerate() {
                for j in 0..h {
                    let d = dzg[j];
                    grad[gi * h + j] += d * t.input;
                    grad[b + gi * h + j] += d;
                    let row = wh + gi * h * h + j * h;
                    for k in 0..h {
                        grad[row + k] += d * t.h_prev[k];
                        dh_next[k] += d * self.params[row + k];
                    }
                }
            }
        }
        (loss, grad, s)
    }

    /// Mean squared one-step-ahead error over `series` (outputs at step t
    /// predict value t + 1).
    pub fn one_step_mse(&self, series: &[f64]) -> f64 {
        if series.len() < 2 {
            return 0.0;
        }
        let (outputs, _) = self.forward(&series[..series.len() - 1]);
        outputs
            .iter()
            .zip(&series[1..])
            .map(|(o, y)| (o - y).powi(2))
            .sum::<f64>()
            / (series.len() - 1) as f64
    }

    /// Warms up on `context`, then feeds each prediction back as the next
    /// input for `steps` steps.
    pub fn forecast(&self, context: &[f64], steps: usize) -> Vec<f64> {
        let Some((&last, warmup)) = context.split_last() else {
            return vec![0.0; steps];
        };
        let (_, mut state) = self.forward(warmup);
        let mut input = last;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let t = self.step(&state, input);
            out.push(t.output);
            input = t.output;
            state = LstmState { h: t.h, c: t.c };
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Truncated-BPTT chunk length.
    pub window: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.05,
            window: 16,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

/// Trains one-step-ahead prediction on `series` with truncated BPTT and
/// norm-clipped gradient descent, one update per chunk. The returned model is
/// the best seen at epoch boundaries (the starting model included), so the
/// training error never ends above where it began.
pub fn train_lstm(model: &LstmModel, series: &[f64], config: &TrainConfig) -> Result<LstmModel> {
    if config.window == 0 || series.len() < 2 * config.window {
        return Err(Error::invalid(format!(
            "series of {} values is shorter than twice the unroll window {}",
            series.len(),
            config.window
        )));
    }
    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_loss = current.one_step_mse(series);
    if !best_loss.is_finite() {
        return Err(Error::Training(format!("initial loss is {best_loss}")));
    }
    let inputs = &series[..series.len() - 1];
    let targets = &series[1..];
    // The seed only shifts where chunk boundaries fall from epoch to epoch.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 0..config.epochs {
        let offset = rng.gen_range(0..config.window);
        let mut state = LstmState::zeros(current.hidden);
        let mut start = 0;
        while start < inputs.len() {
            let end = if start == 0 {
                offset.max(1)
            } else {
                start + config.window
            }
            .min(inputs.len());
            let (loss, mut grad, next) = current.loss_and_gradient(&state, &inputs[start..end], &targets[start..end]);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, step {start}"
                )));
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.clip_norm {
                let scale = config.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= scale);
            }
            for (p, g) in current.params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            state = next;
            start = end;
        }
        let loss = current.one_step_mse(series);
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss after epoch {epoch}")));
        }
        if loss < best_loss {
            best_loss = loss;
            best = current.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_unit(params: [f64; 14]) -> LstmModel {
        LstmModel::from_params(1, params.to_vec()).unwrap()
    }

    #[test]
    fn zero_model_outputs_bias() {
        let mut m = LstmModel::zeros(3);
        let n = m.params.len();
        m.params[n - 1] = 0.7;
        let (out, state) = m.forward(&[1.0, -4.0, 9.0]);
        assert!(out.iter().all(|&o| o == 0.7));
        assert!(state.h.iter().all(|&h| h == 0.0));
        assert!(state.c.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        // wx = [0.5, -0.3, 0.8, 0.1], wh = [0.2, 0.4, -0.6, 0.3], b = [0.1, 0.0, -0.2, 0.05],
        // wo = 1.5, bo = -0.25, x = 2, h0 = c0 = 0.
        let m = one_unit([
            0.5, -0.3, 0.8, 0.1, 0.2, 0.4, -0.6, 0.3, 0.1, 0.0, -0.2, 0.05, 1.5, -0.25,
        ]);
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let f = s(0.5 * 2.0 + 0.1);
        let i = s(-0.3 * 2.0);
        let g = (0.8 * 2.0 - 0.2f64).tanh();
        let o = s(0.1 * 2.0 + 0.05);
        let c = g * i + 0.0 * f;
        let h = c.tanh() * o;
        let (out, state) = m.forward(&[2.0]);
        assert!((state.c[0] - c).abs() < 1e-15);
        assert!((state.h[0] - h).abs() < 1e-15);
        assert!((out[0] - (1.5 * h - 0.25)).abs() < 1e-15);
        // Same evaluation in 30-digit arithmetic.
        assert!((out[0] - 0.006_197_672_572_307_786).abs() < 1e-14, "{}", out[0]);
    }

    #[test]
    fn forward_composes() {
        let m = LstmModel::init(4, 3);
        let a = [0.3, -1.0, 2.0];
        let b = [0.5, 0.1];
        let whole: Vec<f64> = a.iter().chain(&b).copied().collect();
        let (out_all, end_all) = m.forward(&whole);
        let (_, mid) = m.forward(&a);
        let (out_b, end_b) = m.forward_from(&mid, &b);
        assert_eq!(&out_all[3..], &out_b[..]);
        assert_eq!(end_all, end_b);
    }

    #[test]
    fn gates_stay_in_range() {
        let m = LstmModel::init(5, 11);
        let mut state = LstmState::zeros(5);
        for x in [-50.0, 0.0, 3.0, 1e3, -1e3] {
            let t = m.step(&state, x);
            for j in 0..5 {
                for g in [FORGET, INPUT, OUTPUT] {
                    assert!((0.0..=1.0).contains(&t.gates[g][j]));
                }
                assert!((-1.0..=1.0).contains(&t.gates[CANDIDATE][j]));
                assert!((-1.0..=1.0).contains(&t.h[j]));
            }
            state = LstmState { h: t.h, c: t.c };
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = LstmModel::init(2, 5);
        let inputs = [0.4, -0.7, 1.1, 0.2, -0.3];
        let targets = [0.1, 0.5, -0.2, 0.9, 0.0];
        let state = LstmState::zeros(2);
        let (_, grad, _) = m.loss_and_gradient(&state, &inputs, &targets);
        let eps = 1e-5;
        for p in 0..grad.len() {
            let mut plus = m.clone();
            plus.params[p] += eps;
            let mut minus = m.clone();
            minus.params[p] -= eps;
            let lp = plus.loss_and_gradient(&state, &inputs, &targets).0;
            let lm = minus.loss_and_gradient(&state, &inputs, &targets).0;
            let numeric = (lp - lm) / (2.0 * eps);
            let rel = (numeric - grad[p]).abs() / numeric.abs().max(grad[p].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {p}: analytic {} numeric {numeric}", grad[p]);
        }
    }

    #[test]
    fn learns_a_constant() {
        let series = vec![0.5; 64];
        let m = LstmModel::init(4, 1);
        let cfg = TrainConfig {
            epochs: 200,
            ..Default::default()
        };
        let trained = train_lstm(&m, &series, &cfg).unwrap();
        assert!(
            trained.one_step_mse(&series) < 1e-3,
            "{}",
            trained.one_step_mse(&series)
        );
    }

    #[test]
    fn training_is_deterministic_and_never_worse() {
        let series: Vec<f64> = (0..80).map(|t| ((t as f64) * 0.4).sin()).collect();
        let m = LstmModel::init(3, 9);
        let cfg = TrainConfig {
            epochs: 20,
            seed: 4,
            ..Default::default()
        };
        let a = train_lstm(&m, &series, &cfg).unwrap();
        let b = train_lstm(&m, &series, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.one_step_mse(&series) <= m.one_step_mse(&series));
    }

    #[test]
    fn short_series_and_divergence_are_reported() {
        let m = LstmModel::init(2, 0);
        assert!(train_lstm(&m, &[1.0; 10], &TrainConfig::default()).is_err());
        let mut bad = m.clone();
        bad.params_mut()[0] = f64::NAN;
        assert!(matches!(
            train_lstm(&bad, &[1.0; 40], &TrainConfig::default()),
            Err(Error::Training(_))
        ));
    }
}
