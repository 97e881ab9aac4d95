//! Transformer encoder backbone: embeddings plus post-layer-norm
//! self-attention blocks, written out by hand with explicit backward
//! passes so fine-tuning stays dependency-free and bit-reproducible.
//!
//! The backbone processes one instance at a time (sequences in a batch
//! have independent attention anyway); the model layer above stacks the
//! pooled outputs. Padding positions are excluded as attention keys, so
//! real positions never read padded content — that is what makes the
//! padding-neutrality property exact rather than approximate.

use std::path::Path;

use ndarray::{s, Array1, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{
    gelu, gelu_grad, softmax_backward, softmax_rows_inplace, LayerNorm, Linear, LnCache, Param2,
    ParamRef,
};
use super::weights::{
    collect_tensors, read_tensors, restore_tensors, write_tensors, NamedTensor, WeightsError,
};

/// Structural metadata of a backbone, stored alongside its weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Architecture label, e.g. "RoBERTa-Base"; informational only.
    pub architecture: String,
    pub vocab_size: usize,
    pub hidden_size: usize,
    /// Size of the position-embedding table; bounds usable sequence length.
    pub max_positions: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden_size == 0
            || self.vocab_size == 0
            || self.max_positions == 0
            || self.num_layers == 0
            || self.num_heads == 0
            || self.intermediate_size == 0
        {
            return Err("backbone dimensions must all be positive".to_string());
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(format!(
                "hidden_size {} is not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        Ok(())
    }
}

/// One post-LN encoder block: self-attention then feed-forward, each
/// wrapped in residual + layer norm.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNorm,
}

impl EncoderLayer {
    fn new(hidden: usize, intermediate: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            q: Linear::new(hidden, hidden, rng),
            k: Linear::new(hidden, hidden, rng),
            v: Linear::new(hidden, hidden, rng),
            o: Linear::new(hidden, hidden, rng),
            ln1: LayerNorm::new(hidden),
            ff1: Linear::new(hidden, intermediate, rng),
            ff2: Linear::new(intermediate, hidden, rng),
            ln2: LayerNorm::new(hidden),
        }
    }

    fn zeros(hidden: usize, intermediate: usize) -> Self {
        Self {
            q: Linear::zeros(hidden, hidden),
            k: Linear::zeros(hidden, hidden),
            v: Linear::zeros(hidden, hidden),
            o: Linear::zeros(hidden, hidden),
            ln1: LayerNorm::new(hidden),
            ff1: Linear::zeros(hidden, intermediate),
            ff2: Linear::zeros(intermediate, hidden),
            ln2: LayerNorm::new(hidden),
        }
    }
}

/// Forward state of one encoder layer, kept for the backward pass.
pub struct LayerCache {
    x_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per-head attention weights after softmax.
    attn: Vec<Array2<f64>>,
    /// Concatenated per-head context (input of the output projection).
    ctx: Array2<f64>,
    ln1: LnCache,
    ln1_out: Array2<f64>,
    /// Feed-forward hidden pre-activation.
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ln2: LnCache,
}

/// Forward state of one instance through the whole backbone.
pub struct InstanceCache {
    ids: Vec<u32>,
    emb_ln: LnCache,
    layers: Vec<LayerCache>,
}

impl InstanceCache {
    /// Sequence length this cache was built for.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// The encoder: token + position embeddings, embedding layer norm, and
/// a stack of [`EncoderLayer`]s. The feed-forward activation is GELU
/// throughout — the configurable activation applies to the
/// classification head only, never to backbone internals.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub word_emb: Param2,
    pub pos_emb: Param2,
    pub emb_ln: LayerNorm,
    pub layers: Vec<EncoderLayer>,
}

impl Backbone {
    /// Fresh randomly initialized backbone (tests, toy runs), seeded by
    /// the caller so two builds from the same seed agree bitwise.
    pub fn fresh(config: BackboneConfig, rng: &mut ChaCha8Rng) -> Self {
        let layers = (0..config.num_layers)
            .map(|_| EncoderLayer::new(config.hidden_size, config.intermediate_size, rng))
            .collect();
        Self {
            word_emb: Param2::randn(config.vocab_size, config.hidden_size, rng),
            pos_emb: Param2::randn(config.max_positions, config.hidden_size, rng),
            emb_ln: LayerNorm::new(config.hidden_size),
            layers,
            config,
        }
    }

    /// All-zero skeleton with the right shapes; used when loading.
    fn zeros(config: BackboneConfig) -> Self {
        let layers = (0..config.num_layers)
            .map(|_| EncoderLayer::zeros(config.hidden_size, config.intermediate_size))
            .collect();
        Self {
            word_emb: Param2::zeros(config.vocab_size, config.hidden_size),
            pos_emb: Param2::zeros(config.max_positions, config.hidden_size),
            emb_ln: LayerNorm::new(config.hidden_size),
            layers,
            config,
        }
    }

    /// Runs one instance. `mask[t] == 0` marks padding: those positions
    /// are excluded as attention keys everywhere. Returns the final
    /// hidden states `[T, hidden]` and, when requested, the cache the
    /// backward pass needs.
    pub fn forward(
        &self,
        ids: &[u32],
        mask: &[u8],
        want_cache: bool,
    ) -> (Array2<f64>, Option<InstanceCache>) {
        let t_len = ids.len();
        assert_eq!(t_len, mask.len(), "ids and mask must be equally long");
        assert!(t_len >= 1, "cannot run an empty sequence");
        assert!(
            t_len <= self.config.max_positions,
            "sequence length {} exceeds position table {}",
            t_len,
            self.config.max_positions
        );
        let hidden = self.config.hidden_size;
        let heads = self.config.num_heads;
        let dh = hidden / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        // Additive attention mask over key positions.
        let key_mask: Array1<f64> = mask
            .iter()
            .map(|&m| if m == 1 { 0.0 } else { f64::NEG_INFINITY })
            .collect();

        let mut x = Array2::zeros((t_len, hidden));
        for (t, &id) in ids.iter().enumerate() {
            assert!(
                (id as usize) < self.config.vocab_size,
                "token id {id} outside vocabulary of size {}",
                self.config.vocab_size
            );
            let row = &self.word_emb.value.row(id as usize) + &self.pos_emb.value.row(t);
            x.row_mut(t).assign(&row);
        }
        let (mut x, emb_ln) = self.emb_ln.forward(&x);

        let mut layer_caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x_in = x;
            let q = layer.q.forward(&x_in);
            let k = layer.k.forward(&x_in);
            let v = layer.v.forward(&x_in);

            let mut ctx = Array2::zeros((t_len, hidden));
            let mut attn_heads = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let qh = q.slice(cols);
                let kh = k.slice(cols);
                let vh = v.slice(cols);
                let mut scores = qh.dot(&kh.t());
                scores *= scale;
                scores += &key_mask;
                softmax_rows_inplace(&mut scores);
                ctx.slice_mut(cols).assign(&scores.dot(&vh));
                attn_heads.push(scores);
            }
            let attn_out = layer.o.forward(&ctx);
            let (ln1_out, ln1) = layer.ln1.forward(&(&x_in + &attn_out));

            let ff_pre = layer.ff1.forward(&ln1_out);
            let ff_act = ff_pre.mapv(gelu);
            let ff_out = layer.ff2.forward(&ff_act);
            let (x_out, ln2) = layer.ln2.forward(&(&ln1_out + &ff_out));

            if want_cache {
                layer_caches.push(LayerCache {
                    x_in,
                    q,
                    k,
                    v,
                    attn: attn_heads,
                    ctx,
                    ln1,
                    ln1_out,
                    ff_pre,
                    ff_act,
                    ln2,
                });
            }
            x = x_out;
        }

        let cache = want_cache.then(|| InstanceCache {
            ids: ids.to_vec(),
            emb_ln,
            layers: layer_caches,
        });
        (x, cache)
    }

    /// Backpropagates `d_hidden` (gradient on the final hidden states)
    /// through the whole stack, accumulating parameter gradients.
    pub fn backward(&mut self, cache: &InstanceCache, d_hidden: Array2<f64>) {
        let hidden = self.config.hidden_size;
        let heads = self.config.num_heads;
        let dh = hidden / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut dx = d_hidden;
        for (layer, lc) in self.layers.iter_mut().zip(cache.layers.iter()).rev() {
            // ln2(ln1_out + ff_out)
            let d_res2 = layer.ln2.backward(&lc.ln2, &dx);
            let mut d_ln1_out = d_res2.clone();
            // Feed-forward branch.
            let d_ff_act = layer.ff2.backward(&lc.ff_act, &d_res2);
            let d_ff_pre = &d_ff_act * &lc.ff_pre.mapv(gelu_grad);
            d_ln1_out += &layer.ff1.backward(&lc.ln1_out, &d_ff_pre);

            // ln1(x_in + attn_out)
            let d_res1 = layer.ln1.backward(&lc.ln1, &d_ln1_out);
            let mut d_x_in = d_res1.clone();
            // Attention branch.
            let d_ctx = layer.o.backward(&lc.ctx, &d_res1);
            let t_len = d_ctx.nrows();
            let mut dq = Array2::zeros((t_len, hidden));
            let mut dk = Array2::zeros((t_len, hidden));
            let mut dv = Array2::zeros((t_len, hidden));
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let a = &lc.attn[h];
                let d_ctx_h = d_ctx.slice(cols);
                let vh = lc.v.slice(cols);
                let d_a = d_ctx_h.dot(&vh.t());
                dv.slice_mut(cols).assign(&a.t().dot(&d_ctx_h));
                let mut d_scores = softmax_backward(a, &d_a);
                d_scores *= scale;
                dq.slice_mut(cols).assign(&d_scores.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols)
                    .assign(&d_scores.t().dot(&lc.q.slice(cols)));
            }
            d_x_in += &layer.q.backward(&lc.x_in, &dq);
            d_x_in += &layer.k.backward(&lc.x_in, &dk);
            d_x_in += &layer.v.backward(&lc.x_in, &dv);
            dx = d_x_in;
        }

        let d_emb = self.emb_ln.backward(&cache.emb_ln, &dx);
        for (t, &id) in cache.ids.iter().enumerate() {
            let row = d_emb.row(t);
            let mut w = self.word_emb.grad.row_mut(id as usize);
            w += &row;
            let mut p = self.pos_emb.grad.row_mut(t);
            p += &row;
        }
    }

    /// Visits every parameter in a stable order shared by the
    /// optimizer and the checkpoint format.
    pub fn for_each_param(&mut self, f: &mut dyn FnMut(ParamRef)) {
        f(ParamRef::Matrix {
            name: "word_embeddings".into(),
            value: &mut self.word_emb.value,
            grad: &mut self.word_emb.grad,
        });
        f(ParamRef::Matrix {
            name: "position_embeddings".into(),
            value: &mut self.pos_emb.value,
            grad: &mut self.pos_emb.grad,
        });
        self.emb_ln.visit("embeddings_ln", f);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.q.visit(&format!("layer{i}.attn.q"), f);
            layer.k.visit(&format!("layer{i}.attn.k"), f);
            layer.v.visit(&format!("layer{i}.attn.v"), f);
            layer.o.visit(&format!("layer{i}.attn.o"), f);
            layer.ln1.visit(&format!("layer{i}.ln1"), f);
            layer.ff1.visit(&format!("layer{i}.ffn.lin1"), f);
            layer.ff2.visit(&format!("layer{i}.ffn.lin2"), f);
            layer.ln2.visit(&format!("layer{i}.ln2"), f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(&mut |mut p| p.grad_slice_mut().fill(0.0));
    }

    /// Collects all parameters as named tensors (for persistence).
    pub fn to_tensors(&mut self) -> Vec<NamedTensor> {
        collect_tensors(|f| self.for_each_param(f))
    }

    /// Loads parameters from named tensors. Every parameter must be
    /// present with the exact shape; extras are rejected too, so a
    /// checkpoint and a model can never silently disagree.
    pub fn load_tensors(&mut self, tensors: &[NamedTensor]) -> Result<(), String> {
        restore_tensors(tensors, |f| self.for_each_param(f))
    }

    /// Writes `config.json` + `weights.bin` into a directory.
    pub fn save_dir(&mut self, dir: &Path) -> Result<(), WeightsError> {
        std::fs::create_dir_all(dir).map_err(|source| WeightsError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let config = serde_json::to_string_pretty(&self.config).expect("config serializes");
        std::fs::write(dir.join("config.json"), config).map_err(|source| WeightsError::Io {
            path: dir.join("config.json"),
            source,
        })?;
        let tensors = self.to_tensors();
        write_tensors(&dir.join("weights.bin"), &tensors)
    }

    /// Loads a backbone from a directory written by [`Self::save_dir`].
    pub fn load_dir(dir: &Path) -> Result<Self, WeightsError> {
        let config_path = dir.join("config.json");
        if !config_path.exists() {
            return Err(WeightsError::Missing(config_path));
        }
        let raw = std::fs::read_to_string(&config_path).map_err(|source| WeightsError::Io {
            path: config_path.clone(),
            source,
        })?;
        let config: BackboneConfig =
            serde_json::from_str(&raw).map_err(|e| WeightsError::Corrupt {
                path: config_path.clone(),
                detail: format!("config does not parse: {e}"),
            })?;
        config.validate().map_err(|detail| WeightsError::Corrupt {
            path: config_path.clone(),
            detail,
        })?;
        let tensors = read_tensors(&dir.join("weights.bin"))?;
        let mut backbone = Self::zeros(config);
        backbone
            .load_tensors(&tensors)
            .map_err(|detail| WeightsError::Corrupt {
                path: dir.join("weights.bin"),
                detail,
            })?;
        Ok(backbone)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn toy_config() -> BackboneConfig {
        BackboneConfig {
            architecture: "toy".into(),
            vocab_size: 11,
            hidden_size: 8,
            max_positions: 12,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 16,
        }
    }

    fn toy_backbone(seed: u64) -> Backbone {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Backbone::fresh(toy_config(), &mut rng)
    }

    #[test]
    fn forward_shape_and_determinism() {
        let b = toy_backbone(3);
        let ids = [0u32, 5, 7, 2];
        let mask = [1u8, 1, 1, 1];
        let (h1, _) = b.forward(&ids, &mask, false);
        let (h2, _) = b.forward(&ids, &mask, false);
        assert_eq!(h1.dim(), (4, 8));
        assert_eq!(h1, h2);
    }

    #[test]
    fn same_seed_builds_identical_backbones() {
        let mut a = toy_backbone(42);
        let mut b = toy_backbone(42);
        assert_eq!(a.to_tensors(), b.to_tensors());
    }

    #[test]
    fn padding_does_not_change_real_positions() {
        let b = toy_backbone(5);
        let ids = [0u32, 5, 7, 2];
        let mask = [1u8, 1, 1, 1];
        let (h, _) = b.forward(&ids, &mask, false);
        let padded_ids = [0u32, 5, 7, 2, 9, 9, 9];
        let padded_mask = [1u8, 1, 1, 1, 0, 0, 0];
        let (hp, _) = b.forward(&padded_ids, &padded_mask, false);
        for t in 0..4 {
            for j in 0..8 {
                assert!(
                    (h[[t, j]] - hp[[t, j]]).abs() < 1e-12,
                    "position {t} feature {j} changed under padding"
                );
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_every_parameter() {
        let mut b = toy_backbone(11);
        let ids = [1u32, 4, 8];
        let mask = [1u8, 1, 0];
        // Scalar objective: weighted sum of the final hidden states so
        // upstream gradients are asymmetric.
        let weights = Array2::from_shape_fn((3, 8), |(i, j)| ((i * 8 + j) as f64 * 0.37).sin());
        let objective = |b: &Backbone| (&b.forward(&ids, &mask, false).0 * &weights).sum();

        let (_, cache) = b.forward(&ids, &mask, true);
        b.zero_grads();
        b.backward(cache.as_ref().unwrap(), weights.clone());

        // Spot-check a handful of coordinates in every parameter tensor.
        let mut names = Vec::new();
        b.for_each_param(&mut |p| names.push(p.name().to_string()));
        // Step size balances truncation against cancellation noise; the
        // denominator floor keeps gradients below the noise scale of
        // the objective (~1e-9) from being judged on relative error.
        let h = 1e-5;
        for name in names {
            for probe in [0usize, 3] {
                let mut plus = b.clone();
                let mut minus = b.clone();
                let mut ok = true;
                for (target, delta) in [(&mut plus, h), (&mut minus, -h)] {
                    let mut applied = false;
                    target.for_each_param(&mut |mut p| {
                        if p.name() == name {
                            if let Some(v) = p.value_slice_mut().get_mut(probe) {
                                *v += delta;
                                applied = true;
                            }
                        }
                    });
                    ok &= applied;
                }
                if !ok {
                    continue; // probe index beyond this tensor's size
                }
                let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let mut analytic = f64::NAN;
                b.for_each_param(&mut |p| {
                    if p.name() == name {
                        analytic = p.grad_slice()[probe];
                    }
                });
                let denom = numeric.abs().max(analytic.abs()).max(1e-5);
                assert!(
                    ((analytic - numeric).abs() / denom) < 1e-4,
                    "grad mismatch for {name}[{probe}]: analytic {analytic}, numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn save_and_load_round_trip_bitwise() {
        let mut b = toy_backbone(21);
        let dir = tempfile::tempdir().unwrap();
        b.save_dir(dir.path()).unwrap();
        let mut loaded = Backbone::load_dir(dir.path()).unwrap();
        assert_eq!(loaded.config, b.config);
        assert_eq!(loaded.to_tensors(), b.to_tensors());
        let ids = [1u32, 2, 3];
        let mask = [1u8, 1, 1];
        assert_eq!(
            b.forward(&ids, &mask, false).0,
            loaded.forward(&ids, &mask, false).0
        );
    }

    #[test]
    fn load_rejects_missing_tensor() {
        let mut b = toy_backbone(1);
        let dir = tempfile::tempdir().unwrap();
        b.save_dir(dir.path()).unwrap();
        let mut tensors = read_tensors(&dir.path().join("weights.bin")).unwrap();
        tensors.pop();
        write_tensors(&dir.path().join("weights.bin"), &tensors).unwrap();
        let err = Backbone::load_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("missing tensor"));
    }

    #[test]
    fn config_validation_catches_indivisible_heads() {
        let mut cfg = toy_config();
        cfg.hidden_size = 10;
        cfg.num_heads = 3;
        assert!(cfg.validate().is_err());
    }
}
