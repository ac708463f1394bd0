//! The trainable half of p-tuning: n learned seed embeddings fed through
//! a 2-layer unidirectional LSTM, projected to model dimension. The rows
//! of `encode` are the virtual tokens prepended to every model input.

use crate::digest::{digest_tensors, Digest};
use crate::graph::{Graph, TensorId};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub n_virtual_tokens: usize,
    pub seed_dim: usize,
    pub hidden_dim: usize,
    pub model_dim: usize,
    pub lstm_layers: usize,
}

impl EncoderConfig {
    pub fn toy(model_dim: usize) -> Self {
        EncoderConfig {
            n_virtual_tokens: 16,
            seed_dim: 32,
            hidden_dim: 64,
            model_dim,
            lstm_layers: 2,
        }
    }

    /// Closed-form trainable parameter count: seeds + per-layer LSTM
    /// weights (input, recurrent, bias over 4 gates) + affine projection.
    pub fn param_count(&self) -> usize {
        let (n, s, h, d) = (
            self.n_virtual_tokens,
            self.seed_dim,
            self.hidden_dim,
            self.model_dim,
        );
        let mut total = n * s;
        let mut in_dim = s;
        for _ in 0..self.lstm_layers {
            total += in_dim * 4 * h + h * 4 * h + 4 * h;
            in_dim = h;
        }
        total + h * d + d
    }
}

#[derive(Clone, Debug)]
struct LstmLayer<R> {
    /// in_dim x 4H, gate order [input, forget, cell, output]
    w_ih: Tensor<R>,
    /// H x 4H
    w_hh: Tensor<R>,
    /// 1 x 4H
    bias: Tensor<R>,
}

#[derive(Clone, Debug)]
pub struct SoftPromptState<R> {
    config: EncoderConfig,
    seed_embeddings: Tensor<R>,
    layers: Vec<LstmLayer<R>>,
    proj_w: Tensor<R>,
    proj_b: Tensor<R>,
}

pub const INIT_RANGE: f64 = 0.08;

impl<R: Real> SoftPromptState<R> {
    /// All parameters drawn uniform(-0.08, 0.08); deterministic per seed.
    pub fn init(config: EncoderConfig, rng: &mut Rng) -> Self {
        let mut r = rng.substream("encoder/init");
        let mut uniform = |rows: usize, cols: usize| {
            let mut t = Tensor::zeros(rows, cols);
            for v in t.data_mut() {
                *v = R::from_f64(r.uniform(-INIT_RANGE, INIT_RANGE));
            }
            t
        };
        let mut layers = Vec::with_capacity(config.lstm_layers);
        let mut in_dim = config.seed_dim;
        for _ in 0..config.lstm_layers {
            layers.push(LstmLayer {
                w_ih: uniform(in_dim, 4 * config.hidden_dim),
                w_hh: uniform(config.hidden_dim, 4 * config.hidden_dim),
                bias: uniform(1, 4 * config.hidden_dim),
            });
            in_dim = config.hidden_dim;
        }
        SoftPromptState {
            seed_embeddings: uniform(config.n_virtual_tokens, config.seed_dim),
            layers,
            proj_w: uniform(config.hidden_dim, config.model_dim),
            proj_b: uniform(1, config.model_dim),
            config,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> Vec<&Tensor<R>> {
        let mut v: Vec<&Tensor<R>> = Vec::new();
        v.push(&self.seed_embeddings);
        for l in &self.layers {
            v.push(&l.w_ih);
            v.push(&l.w_hh);
            v.push(&l.bias);
        }
        v.push(&self.proj_w);
        v.push(&self.proj_b);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<R>> {
        let mut v: Vec<&mut Tensor<R>> = Vec::new();
        v.push(&mut self.seed_embeddings);
        for l in &mut self.layers {
            v.push(&mut l.w_ih);
            v.push(&mut l.w_hh);
            v.push(&mut l.bias);
        }
        v.push(&mut self.proj_w);
        v.push(&mut self.proj_b);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.push(String::from("seed_embeddings"));
        for i in 0..self.layers.len() {
            v.push(format!("lstm{i}.w_ih"));
            v.push(format!("lstm{i}.w_hh"));
            v.push(format!("lstm{i}.bias"));
        }
        v.push(String::from("proj_w"));
        v.push(String::from("proj_b"));
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn digest(&self) -> Digest {
        digest_tensors(self.params().into_iter())
    }

    /// Rebuilds an encoder from weights in canonical parameter order.
    pub fn from_weights(config: EncoderConfig, weights: Vec<Tensor<R>>) -> Option<Self> {
        let mut state = SoftPromptState::init(config, &mut Rng::new(0));
        {
            let slots = state.params_mut();
            if slots.len() != weights.len() {
                return None;
            }
            for (slot, w) in slots.into_iter().zip(weights) {
                if slot.shape() != w.shape() {
                    return None;
                }
                *slot = w;
            }
        }
        Some(state)
    }

    pub fn cast<S: Real>(&self) -> SoftPromptState<S> {
        SoftPromptState {
            config: self.config,
            seed_embeddings: self.seed_embeddings.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    w_ih: l.w_ih.cast(),
                    w_hh: l.w_hh.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
            proj_w: self.proj_w.cast(),
            proj_b: self.proj_b.cast(),
        }
    }

    /// Builds the LSTM unroll on a graph and returns (virtual-token
    /// output id, parameter ids in canonical order). With
    /// `trainable=false` the parameters are registered as constants.
    pub fn encode_on(&self, g: &mut Graph<R>, trainable: bool) -> (TensorId, Vec<TensorId>) {
        let n = self.config.n_virtual_tokens;
        let h = self.config.hidden_dim;
        let mut param_ids = Vec::new();
        let reg = |g: &mut Graph<R>, t: &Tensor<R>, out: &mut Vec<TensorId>| {
            let id = if trainable { g.param(t) } else { g.constant(t.clone()) };
            out.push(id);
            id
        };
        let seeds = reg(g, &self.seed_embeddings, &mut param_ids);
        let wired: Vec<(TensorId, TensorId, TensorId)> = self
            .layers
            .iter()
            .map(|l| {
                (
                    reg(g, &l.w_ih, &mut param_ids),
                    reg(g, &l.w_hh, &mut param_ids),
                    reg(g, &l.bias, &mut param_ids),
                )
            })
            .collect();
        let proj_w = reg(g, &self.proj_w, &mut param_ids);
        let proj_b = reg(g, &self.proj_b, &mut param_ids);

        let mut inputs: Vec<TensorId> = (0..n).map(|t| g.slice_rows(seeds, t, t + 1)).collect();
        for &(w_ih, w_hh, bias) in &wired {
            let mut hidden = g.constant(Tensor::zeros(1, h));
            let mut cell = g.constant(Tensor::zeros(1, h));
            let mut outputs = Vec::with_capacity(n);
            for &x_t in &inputs {
                let gi = g.matmul(x_t, w_ih);
                let gh = g.matmul(hidden, w_hh);
                let gates = g.add(gi, gh);
                let gates = g.add_bias(gates, bias);
                let i_g = g.slice_cols(gates, 0, h);
                let i_g = g.sigmoid(i_g);
                let f_g = g.slice_cols(gates, h, 2 * h);
                let f_g = g.sigmoid(f_g);
                let c_g = g.slice_cols(gates, 2 * h, 3 * h);
                let c_g = g.tanh(c_g);
                let o_g = g.slice_cols(gates, 3 * h, 4 * h);
                let o_g = g.sigmoid(o_g);
                let fc = g.mul(f_g, cell);
                let ic = g.mul(i_g, c_g);
                cell = g.add(fc, ic);
                let ct = g.tanh(cell);
                hidden = g.mul(o_g, ct);
                outputs.push(hidden);
            }
            inputs = outputs;
        }
        let stacked = g.concat_rows(&inputs);
        let projected = g.matmul(stacked, proj_w);
        let out = g.add_bias(projected, proj_b);
        (out, param_ids)
    }

    /// The n x model_dim virtual-token matrix for the current parameters.
    pub fn encode(&self) -> Tensor<R> {
        let mut g = Graph::new();
        let (out, _) = self.encode_on(&mut g, false);
        g.value(out).clone()
    }

    /// Constant copy of `encode()` for inference without the LSTM.
    pub fn export_virtual_tokens(&self) -> Tensor<R> {
        self.encode()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;

    fn toy_config() -> EncoderConfig {
        EncoderConfig {
            n_virtual_tokens: 16,
            seed_dim: 32,
            hidden_dim: 64,
            model_dim: 64,
            lstm_layers: 2,
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = SoftPromptState::<f32>::init(toy_config(), &mut Rng::new(3));
        let b = SoftPromptState::<f32>::init(toy_config(), &mut Rng::new(3));
        assert_eq!(a.digest(), b.digest());
        let c = SoftPromptState::<f32>::init(toy_config(), &mut Rng::new(4));
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn parameter_count_matches_enumeration() {
        let cfg = toy_config();
        let state = SoftPromptState::<f32>::init(cfg, &mut Rng::new(1));
        let enumerated: usize = state.params().iter().map(|t| t.len()).sum();
        assert_eq!(enumerated, cfg.param_count());
        // n*s + (s*4h + h*4h + 4h) + (h*4h + h*4h + 4h) + (h*d + d)
        assert_eq!(cfg.param_count(), 62_528);
    }

    #[test]
    fn init_values_stay_in_range() {
        let state = SoftPromptState::<f64>::init(toy_config(), &mut Rng::new(8));
        for p in state.params() {
            for &v in p.data() {
                assert!(v.abs() <= INIT_RANGE, "init value {v} out of range");
            }
        }
    }

    #[test]
    fn encode_shape_and_determinism() {
        let state = SoftPromptState::<f32>::init(toy_config(), &mut Rng::new(5));
        let a = state.encode();
        let b = state.encode();
        assert_eq!(a.shape(), (16, 64));
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn export_equals_encode_bitwise() {
        let state = SoftPromptState::<f32>::init(toy_config(), &mut Rng::new(6));
        assert_eq!(state.encode().data(), state.export_virtual_tokens().data());
    }

    #[test]
    fn row_i_depends_only_on_seed_rows_up_to_i() {
        let mut state = SoftPromptState::<f64>::init(
            EncoderConfig {
                n_virtual_tokens: 6,
                seed_dim: 8,
                hidden_dim: 10,
                model_dim: 12,
                lstm_layers: 2,
            },
            &mut Rng::new(7),
        );
        let base = state.encode();
        // perturb seed row 3: rows 0..3 of the output must be unchanged
        state.seed_embeddings.set(3, 2, 0.42);
        let after = state.encode();
        for r in 0..3 {
            assert_eq!(base.row(r), after.row(r), "row {r} leaked future seed info");
        }
        assert!(
            (3..6).any(|r| base.row(r) != after.row(r)),
            "perturbation had no effect at or after its row"
        );
    }

    #[test]
    fn encode_gradients_match_finite_differences() {
        let cfg = EncoderConfig {
            n_virtual_tokens: 3,
            seed_dim: 4,
            hidden_dim: 5,
            model_dim: 4,
            lstm_layers: 2,
        };
        let template = SoftPromptState::<f64>::init(cfg, &mut Rng::new(12));
        let mut params: Vec<Tensor<f64>> = template.params().into_iter().cloned().collect();
        // fixed projection to a scalar so the whole Jacobian is exercised
        let mut prng = Rng::new(900);
        let wout = Tensor::from_fn(cfg.model_dim, 1, |_, _| prng.uniform(-1.0, 1.0));
        let wrow = Tensor::from_fn(1, cfg.n_virtual_tokens, |_, _| prng.uniform(-1.0, 1.0));
        let err = grad_check(
            |ps: &[Tensor<f64>]| {
                let mut s = template.clone();
                for (dst, src) in s.params_mut().into_iter().zip(ps) {
                    *dst = src.clone();
                }
                let mut g = Graph::new();
                let (out, ids) = s.encode_on(&mut g, true);
                let w = g.constant(wout.clone());
                let col = g.matmul(out, w);
                let r = g.constant(wrow.clone());
                let loss = g.matmul(r, col);
                g.backward(loss).unwrap();
                let grads = ids
                    .iter()
                    .map(|&id| g.grad(id).cloned().expect("trainable param grad"))
                    .collect();
                (g.value(loss).item(), grads)
            },
            &mut params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "encoder grad error {err} > 1e-4");
    }

    #[test]
    fn untrainable_encode_produces_no_param_grads() {
        let state = SoftPromptState::<f32>::init(toy_config(), &mut Rng::new(14));
        let mut g = Graph::new();
        let (out, ids) = state.encode_on(&mut g, false);
        let ones = g.constant(Tensor::filled(1, 16, 1.0f32));
        let col = g.constant(Tensor::filled(64, 1, 1.0f32));
        let v = g.matmul(out, col);
        let loss = g.matmul(ones, v);
        g.backward(loss).unwrap();
        for id in ids {
            assert!(g.grad(id).is_none());
        }
    }
}
