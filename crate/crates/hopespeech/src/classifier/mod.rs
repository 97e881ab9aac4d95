//! The classification model: transformer backbone, pooled embedding,
//! dropout, and a two-layer dense head — plus the hyperparameter schema
//! the shipped presets instantiate.
//!
//! The configurable activation applies to the head only; backbone
//! feed-forward blocks always use GELU. Cross-entropy presets get a
//! two-logit head; the binary-cross-entropy preset gets a single-logit
//! sigmoid head whose output is exposed as the logit pair `[0, z]`
//! (softmax of `[0, z]` equals sigmoid of `z`), so prediction and
//! probability semantics are identical for both variants.

pub mod backbone;
pub mod nn;
pub mod weights;

use std::path::PathBuf;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Label;
use crate::encoding::Encoding;
pub use backbone::BackboneConfig;

use backbone::{Backbone, InstanceCache};
use nn::{dropout, gelu, gelu_grad, relu, relu_grad, softmax_rows, Linear};
use weights::WeightsError;

/// Head activation choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "GELU")]
    Gelu,
    #[serde(rename = "RELU")]
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Relu => relu(x),
        }
    }

    fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu_grad(x),
            Activation::Relu => relu_grad(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    AdamW,
    RMSProp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    BinaryCrossEntropy,
}

fn default_seed() -> i64 {
    42
}

fn default_num_epochs() -> usize {
    5
}

/// Run configuration: architecture dimensions, regularization, and the
/// optimization recipe. The three shipped presets fill this schema with
/// the published settings verbatim. Unknown keys are rejected so a
/// typo'd override fails instead of silently falling back to a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub model_architecture: String,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub max_sequence_length: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    #[serde(default = "default_seed")]
    pub seed: i64,
    #[serde(default = "default_num_epochs")]
    pub num_epochs: usize,
}

/// Names of the shipped presets, in the order they appear in docs.
pub const PRESET_NAMES: [&str; 3] = ["german-xlmr", "english-roberta-base", "german-roberta-large"];

const PRESET_GERMAN_XLMR: &str = include_str!("../../presets/german-xlmr.toml");
const PRESET_ENGLISH_ROBERTA_BASE: &str = include_str!("../../presets/english-roberta-base.toml");
const PRESET_GERMAN_ROBERTA_LARGE: &str = include_str!("../../presets/german-roberta-large.toml");

impl HyperParams {
    /// Loads one of the shipped presets by name.
    pub fn preset(name: &str) -> Result<Self, ClassifierError> {
        let raw = match name {
            "german-xlmr" => PRESET_GERMAN_XLMR,
            "english-roberta-base" => PRESET_ENGLISH_ROBERTA_BASE,
            "german-roberta-large" => PRESET_GERMAN_ROBERTA_LARGE,
            _ => {
                return Err(ClassifierError::UnknownPreset {
                    name: name.to_string(),
                    available: PRESET_NAMES.join(", "),
                })
            }
        };
        let params: HyperParams = toml::from_str(raw).expect("shipped preset parses");
        params.validate()?;
        Ok(params)
    }

    /// Parses hyperparameters from TOML text (run config files).
    pub fn from_toml(text: &str) -> Result<Self, ClassifierError> {
        let params: HyperParams =
            toml::from_str(text).map_err(|e| ClassifierError::InvalidParams(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let fail = |msg: String| Err(ClassifierError::InvalidParams(msg));
        if self.hidden_size == 0 {
            return fail("hidden_size must be positive".into());
        }
        if self.num_attention_heads == 0 || self.hidden_size % self.num_attention_heads != 0 {
            return fail(format!(
                "hidden_size {} must be divisible by num_attention_heads {}",
                self.hidden_size, self.num_attention_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!(
                "dropout_rate must be in [0,1), got {}",
                self.dropout_rate
            ));
        }
        if !(self.learning_rate > 0.0) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.num_epochs == 0 {
            return fail("num_epochs must be at least 1".into());
        }
        if self.num_layers == 0 || self.intermediate_size == 0 {
            return fail("num_layers and intermediate_size must be positive".into());
        }
        if self.max_sequence_length < 2 {
            return fail(format!(
                "max_sequence_length must be at least 2, got {}",
                self.max_sequence_length
            ));
        }
        Ok(())
    }

    /// Usable token count: the configured length capped by the
    /// backbone's position table. The config may store a nominal value
    /// (the published runs record 514); the encoder enforces this bound.
    pub fn effective_max_len(&self, backbone: &BackboneConfig) -> usize {
        self.max_sequence_length.min(backbone.max_positions)
    }
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("unknown preset '{name}'; available presets: {available}")]
    UnknownPreset { name: String, available: String },
    #[error(
        "hidden size mismatch: config expects {config}, backbone provides {backbone}"
    )]
    HiddenSizeMismatch { config: usize, backbone: usize },
    #[error("failed to load backbone: {0}")]
    BackboneLoad(#[from] WeightsError),
    #[error("instance {instance}: input_ids length {ids} != attention_mask length {mask}")]
    ShapeMismatch {
        instance: usize,
        ids: usize,
        mask: usize,
    },
    #[error("instance {instance}: non-finite logits")]
    NonFiniteLogits { instance: usize },
}

/// Where backbone weights come from.
#[derive(Debug, Clone)]
pub enum BackboneSource {
    /// Randomly initialized from the run seed (tests, toy runs).
    Fresh(BackboneConfig),
    /// A directory holding `config.json` + `weights.bin`.
    Dir(PathBuf),
}

/// Per-instance logits, always exposed as a `[n, 2]` matrix with
/// column 0 = Not Hope and column 1 = Hope.
#[derive(Debug, Clone)]
pub struct ClassifierOutput {
    pub logits: Array2<f64>,
}

impl ClassifierOutput {
    pub fn len(&self) -> usize {
        self.logits.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.nrows() == 0
    }
}

/// Softmax over each logit pair. Rows sum to 1 within 1e-6; errors name
/// the first instance whose logits are not finite.
pub fn probabilities(out: &ClassifierOutput) -> Result<Array2<f64>, ClassifierError> {
    for (i, row) in out.logits.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFiniteLogits { instance: i });
        }
    }
    Ok(softmax_rows(&out.logits))
}

/// Argmax decision rule; an exact tie goes to Not Hope (index 0).
pub fn predict(out: &ClassifierOutput) -> Vec<Label> {
    out.logits
        .rows()
        .into_iter()
        .map(|row| if row[1] > row[0] { Label::Hope } else { Label::NotHope })
        .collect()
}

/// Head variant, chosen by the configured loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// `dense(h → 2)`; trained with cross-entropy.
    TwoLogit,
    /// `dense(h → 1)` sigmoid variant; trained with binary
    /// cross-entropy. Exposed logits are `[0, z]`.
    OneLogit,
}

impl HeadKind {
    pub fn for_loss(loss: LossKind) -> Self {
        match loss {
            LossKind::CrossEntropy => HeadKind::TwoLogit,
            LossKind::BinaryCrossEntropy => HeadKind::OneLogit,
        }
    }

    fn output_width(self) -> usize {
        match self {
            HeadKind::TwoLogit => 2,
            HeadKind::OneLogit => 1,
        }
    }
}

/// Classification head: dropout → dense(h→h) + activation → output.
#[derive(Debug, Clone)]
pub struct Head {
    pub dense1: Linear,
    pub dense2: Linear,
    pub kind: HeadKind,
    pub activation: Activation,
}

/// Forward state the head backward pass needs.
pub struct HeadCache {
    dropped: Array2<f64>,
    drop_mask: Array2<f64>,
    pre1: Array2<f64>,
    act_out: Array2<f64>,
}

impl Head {
    fn new(hidden: usize, kind: HeadKind, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        Self {
            dense1: Linear::new(hidden, hidden, rng),
            dense2: Linear::new(hidden, kind.output_width(), rng),
            kind,
            activation,
        }
    }

    /// `pooled: [n, hidden]` → logits `[n, 2]`. In train mode the
    /// dropout stream advances; eval mode is deterministic.
    fn forward(
        &self,
        pooled: &Array2<f64>,
        rate: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, HeadCache) {
        let (dropped, drop_mask) = match rng {
            Some(rng) => dropout(pooled, rate, rng),
            None => (pooled.clone(), Array2::<f64>::ones(pooled.raw_dim())),
        };
        let pre1 = self.dense1.forward(&dropped);
        let act_out = pre1.mapv(|v| self.activation.apply(v));
        let raw = self.dense2.forward(&act_out);
        let logits = match self.kind {
            HeadKind::TwoLogit => raw,
            HeadKind::OneLogit => {
                let mut pair = Array2::zeros((raw.nrows(), 2));
                pair.column_mut(1).assign(&raw.column(0));
                pair
            }
        };
        (
            logits,
            HeadCache {
                dropped,
                drop_mask,
                pre1,
                act_out,
            },
        )
    }

    /// Backward from `dlogits` (in the `[n, 2]` convention) down to the
    /// pooled embedding. For the single-logit head only column 1 is a
    /// real output; column 0 is the constant zero.
    fn backward(&mut self, cache: &HeadCache, dlogits: &Array2<f64>) -> Array2<f64> {
        let d_raw = match self.kind {
            HeadKind::TwoLogit => dlogits.clone(),
            HeadKind::OneLogit => {
                let mut d = Array2::zeros((dlogits.nrows(), 1));
                d.column_mut(0).assign(&dlogits.column(1));
                d
            }
        };
        let d_act = self.dense2.backward(&cache.act_out, &d_raw);
        let d_pre1 = &d_act * &cache.pre1.mapv(|v| self.activation.grad(v));
        let d_dropped = self.dense1.backward(&cache.dropped, &d_pre1);
        d_dropped * &cache.drop_mask
    }
}

/// Everything [`Model::backward`] needs from the forward pass.
pub struct TrainCache {
    instances: Vec<InstanceCache>,
    head: HeadCache,
}

/// A built model: backbone plus head, with the dropout stream and any
/// metadata warnings produced at build time.
#[derive(Debug)]
pub struct Model {
    pub params: HyperParams,
    pub backbone: Backbone,
    pub head: Head,
    dropout_rng: ChaCha8Rng,
    /// Non-fatal config/backbone metadata disagreements, surfaced so
    /// callers can report rather than hide them.
    pub warnings: Vec<String>,
}

/// Derives a 32-byte RNG seed from the run seed and a purpose tag, so
/// head init, backbone init, dropout, and shuffling draw from
/// independent deterministic streams.
pub fn domain_seed(seed: i64, domain: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.finalize().into()
}

/// Builds the model: backbone from its source, head freshly initialized
/// from the run seed. The backbone's hidden size must match the config;
/// layer/head/intermediate disagreements are recorded as warnings.
pub fn build_model(
    params: &HyperParams,
    source: &BackboneSource,
) -> Result<Model, ClassifierError> {
    params.validate()?;
    let backbone = match source {
        BackboneSource::Fresh(config) => {
            config
                .validate()
                .map_err(ClassifierError::InvalidParams)?;
            let mut rng = ChaCha8Rng::from_seed(domain_seed(params.seed, "backbone-init"));
            Backbone::fresh(config.clone(), &mut rng)
        }
        BackboneSource::Dir(path) => Backbone::load_dir(path)?,
    };
    if backbone.config.hidden_size != params.hidden_size {
        return Err(ClassifierError::HiddenSizeMismatch {
            config: params.hidden_size,
            backbone: backbone.config.hidden_size,
        });
    }
    let mut warnings = Vec::new();
    let mut check = |what: &str, config_val: usize, backbone_val: usize| {
        if config_val != backbone_val {
            warnings.push(format!(
                "config {what} is {config_val} but backbone metadata says {backbone_val}; \
                 using the backbone as loaded"
            ));
        }
    };
    check("num_layers", params.num_layers, backbone.config.num_layers);
    check(
        "num_attention_heads",
        params.num_attention_heads,
        backbone.config.num_heads,
    );
    check(
        "intermediate_size",
        params.intermediate_size,
        backbone.config.intermediate_size,
    );

    let mut head_rng = ChaCha8Rng::from_seed(domain_seed(params.seed, "head-init"));
    let head = Head::new(
        params.hidden_size,
        HeadKind::for_loss(params.loss),
        params.activation,
        &mut head_rng,
    );
    Ok(Model {
        dropout_rng: ChaCha8Rng::from_seed(domain_seed(params.seed, "dropout")),
        params: params.clone(),
        backbone,
        head,
        warnings,
    })
}

impl Model {
    fn check_batch(&self, batch: &[Encoding]) -> Result<(), ClassifierError> {
        assert!(!batch.is_empty(), "forward requires at least one instance");
        for (i, enc) in batch.iter().enumerate() {
            if enc.input_ids.len() != enc.attention_mask.len() {
                return Err(ClassifierError::ShapeMismatch {
                    instance: i,
                    ids: enc.input_ids.len(),
                    mask: enc.attention_mask.len(),
                });
            }
        }
        Ok(())
    }

    fn pooled_hidden(
        &self,
        batch: &[Encoding],
        want_cache: bool,
    ) -> (Array2<f64>, Vec<InstanceCache>) {
        let hidden = self.params.hidden_size;
        let mut pooled = Array2::zeros((batch.len(), hidden));
        let mut caches = Vec::with_capacity(if want_cache { batch.len() } else { 0 });
        for (i, enc) in batch.iter().enumerate() {
            let (h, cache) = self
                .backbone
                .forward(&enc.input_ids, &enc.attention_mask, want_cache);
            // Sequence embedding = first-position (sentinel) state.
            pooled.row_mut(i).assign(&h.row(0));
            if let Some(c) = cache {
                caches.push(c);
            }
        }
        (pooled, caches)
    }

    /// Eval-mode forward: dropout disabled, deterministic, shareable
    /// across threads (`&self`).
    pub fn forward(&self, batch: &[Encoding]) -> Result<ClassifierOutput, ClassifierError> {
        self.check_batch(batch)?;
        let (pooled, _) = self.pooled_hidden(batch, false);
        let (logits, _) = self.head.forward(&pooled, 0.0, None);
        Ok(ClassifierOutput { logits })
    }

    /// Train-mode forward: dropout active (advancing the model's seeded
    /// stream) and all intermediate state cached for [`Self::backward`].
    pub fn forward_train(
        &mut self,
        batch: &[Encoding],
    ) -> Result<(ClassifierOutput, TrainCache), ClassifierError> {
        self.check_batch(batch)?;
        let (pooled, instances) = self.pooled_hidden(batch, true);
        let rate = self.params.dropout_rate;
        let (logits, head) = self
            .head
            .forward(&pooled, rate, Some(&mut self.dropout_rng));
        Ok((ClassifierOutput { logits }, TrainCache { instances, head }))
    }

    /// Accumulates gradients for the whole model from `dlogits`
    /// (`[n, 2]`, matching the exposed logit convention).
    pub fn backward(&mut self, cache: &TrainCache, dlogits: &Array2<f64>) {
        let d_pooled = self.head.backward(&cache.head, dlogits);
        let hidden = self.params.hidden_size;
        for (i, inst) in cache.instances.iter().enumerate() {
            let t_len = inst.len();
            let mut d_hidden = Array2::zeros((t_len, hidden));
            d_hidden.row_mut(0).assign(&d_pooled.row(i));
            self.backbone.backward(inst, d_hidden);
        }
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(&mut |mut p| p.grad_slice_mut().fill(0.0));
    }

    /// Visits every trainable parameter (backbone then head) in a
    /// stable order shared by the optimizer and checkpointing.
    pub fn for_each_param(&mut self, f: &mut dyn FnMut(nn::ParamRef)) {
        self.backbone.for_each_param(f);
        self.head.dense1.visit("head.dense1", f);
        self.head.dense2.visit("head.dense2", f);
    }

    /// All parameters as named tensors (persistence).
    pub fn to_tensors(&mut self) -> Vec<weights::NamedTensor> {
        weights::collect_tensors(|f| self.for_each_param(f))
    }

    /// Restores all parameters from named tensors; every parameter must
    /// match by name and shape and no extras may remain.
    pub fn load_tensors(&mut self, tensors: &[weights::NamedTensor]) -> Result<(), String> {
        weights::restore_tensors(tensors, |f| self.for_each_param(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{batch_encode, encode, TokenizerHandle};
    use crate::textclean::clean;
    use ndarray::array;

    pub(crate) fn toy_backbone_config(vocab_size: usize) -> BackboneConfig {
        BackboneConfig {
            architecture: "toy".into(),
            vocab_size,
            hidden_size: 16,
            max_positions: 32,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 24,
        }
    }

    pub(crate) fn toy_params() -> HyperParams {
        HyperParams {
            model_architecture: "toy".into(),
            hidden_size: 16,
            num_layers: 2,
            num_attention_heads: 2,
            intermediate_size: 24,
            dropout_rate: 0.1,
            activation: Activation::Gelu,
            max_sequence_length: 32,
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::AdamW,
            loss: LossKind::CrossEntropy,
            seed: 42,
            num_epochs: 5,
        }
    }

    fn toy_model() -> Model {
        let tok = TokenizerHandle::toy();
        let params = toy_params();
        let source = BackboneSource::Fresh(toy_backbone_config(tok.vocab_size()));
        build_model(&params, &source).unwrap()
    }

    #[test]
    fn presets_reproduce_the_published_settings() {
        let g = HyperParams::preset("german-xlmr").unwrap();
        assert_eq!(g.model_architecture, "XLM-RoBERTa");
        assert_eq!(
            (g.hidden_size, g.num_layers, g.num_attention_heads, g.intermediate_size),
            (768, 12, 12, 3072)
        );
        assert_eq!(g.dropout_rate, 0.2);
        assert_eq!(g.activation, Activation::Relu);
        assert_eq!(g.max_sequence_length, 514);
        assert_eq!(g.batch_size, 16);
        assert_eq!(g.learning_rate, 1e-5);
        assert_eq!(g.optimizer, OptimizerKind::AdamW);
        assert_eq!(g.loss, LossKind::CrossEntropy);
        assert_eq!((g.seed, g.num_epochs), (42, 5));

        let e = HyperParams::preset("english-roberta-base").unwrap();
        assert_eq!(e.model_architecture, "RoBERTa-Base");
        assert_eq!(
            (e.hidden_size, e.num_layers, e.num_attention_heads, e.intermediate_size),
            (768, 12, 12, 3072)
        );
        assert_eq!(e.dropout_rate, 0.1);
        assert_eq!(e.activation, Activation::Gelu);
        assert_eq!(e.batch_size, 16);
        assert_eq!(e.learning_rate, 2e-5);
        assert_eq!(e.optimizer, OptimizerKind::AdamW);
        assert_eq!(e.loss, LossKind::CrossEntropy);

        let l = HyperParams::preset("german-roberta-large").unwrap();
        assert_eq!(l.model_architecture, "RoBERTa-Large");
        assert_eq!(
            (l.hidden_size, l.num_layers, l.num_attention_heads, l.intermediate_size),
            (768, 14, 16, 3072)
        );
        assert_eq!(l.dropout_rate, 0.1);
        assert_eq!(l.activation, Activation::Gelu);
        assert_eq!(l.batch_size, 8);
        assert_eq!(l.learning_rate, 4e-5);
        assert_eq!(l.optimizer, OptimizerKind::RMSProp);
        assert_eq!(l.loss, LossKind::BinaryCrossEntropy);
    }

    #[test]
    fn unknown_preset_lists_the_available_ones() {
        let err = HyperParams::preset("nope").unwrap_err();
        let msg = err.to_string();
        for name in PRESET_NAMES {
            assert!(msg.contains(name));
        }
    }

    #[test]
    fn indivisible_heads_are_rejected() {
        let mut p = toy_params();
        p.hidden_size = 770;
        p.num_attention_heads = 12;
        assert!(matches!(
            p.validate(),
            Err(ClassifierError::InvalidParams(_))
        ));
    }

    #[test]
    fn same_seed_builds_identical_heads() {
        let mut a = toy_model();
        let mut b = toy_model();
        assert_eq!(a.to_tensors(), b.to_tensors());
    }

    #[test]
    fn forward_shape_follows_batch_size() {
        let tok = TokenizerHandle::toy();
        let model = toy_model();
        for n in [1usize, 3] {
            let texts: Vec<_> = (0..n).map(|i| clean(&format!("hope number {i}"))).collect();
            let batch = batch_encode(&texts, &tok, 32);
            let out = model.forward(&batch).unwrap();
            assert_eq!(out.logits.dim(), (n, 2));
            assert!(out.logits.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn eval_forward_is_bitwise_repeatable() {
        let tok = TokenizerHandle::toy();
        let model = toy_model();
        let batch = batch_encode(&[clean("hope"), clean("dark rain")], &tok, 32);
        let a = model.forward(&batch).unwrap();
        let b = model.forward(&batch).unwrap();
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn padding_neutrality_through_the_full_model() {
        let tok = TokenizerHandle::toy();
        let model = toy_model();
        let text = clean("hope springs");
        let single = model.forward(&[encode(&text, &tok, 32)]).unwrap();
        let batch = batch_encode(
            &[text, clean("a much longer sentence to force padding")],
            &tok,
            32,
        )
        .into_iter()
        .collect::<Vec<_>>();
        let padded = model.forward(&batch).unwrap();
        for j in 0..2 {
            assert!(
                (single.logits[[0, j]] - padded.logits[[0, j]]).abs() < 1e-5,
                "padding changed logit {j}"
            );
        }
    }

    #[test]
    fn probabilities_match_analytic_softmax() {
        let out = ClassifierOutput {
            logits: array![[0.0, 0.0], [1.0, 3.0], [2.0, 2.5]],
        };
        let p = probabilities(&out).unwrap();
        assert_eq!(p[[0, 0]], 0.5);
        assert_eq!(p[[0, 1]], 0.5);
        assert!((p[[1, 0]] - 0.1192).abs() < 1e-4);
        assert!((p[[1, 1]] - 0.8808).abs() < 1e-4);
        // (x, x+c) -> second probability sigmoid(c).
        let c: f64 = 0.5;
        let sig = 1.0 / (1.0 + (-c).exp());
        assert!((p[[2, 1]] - sig).abs() < 1e-12);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn non_finite_logits_name_the_instance() {
        let out = ClassifierOutput {
            logits: array![[0.0, 1.0], [f64::NAN, 0.0]],
        };
        match probabilities(&out) {
            Err(ClassifierError::NonFiniteLogits { instance }) => assert_eq!(instance, 1),
            other => panic!("expected NonFiniteLogits, got {other:?}"),
        }
    }

    #[test]
    fn predict_follows_argmax_with_ties_to_not_hope() {
        let out = ClassifierOutput {
            logits: array![[2.0, -1.0], [0.0, 0.0], [-3.0, -2.9]],
        };
        assert_eq!(
            predict(&out),
            vec![Label::NotHope, Label::NotHope, Label::Hope]
        );
        // Shift invariance: adding a constant to both logits of a row
        // never changes the decision.
        let shifted = ClassifierOutput {
            logits: out.logits.mapv(|v| v + 17.25),
        };
        assert_eq!(predict(&out), predict(&shifted));
    }

    #[test]
    fn one_logit_head_exposes_zero_z_pairs() {
        let tok = TokenizerHandle::toy();
        let mut params = toy_params();
        params.loss = LossKind::BinaryCrossEntropy;
        let source = BackboneSource::Fresh(toy_backbone_config(tok.vocab_size()));
        let model = build_model(&params, &source).unwrap();
        let batch = batch_encode(&[clean("hope"), clean("rain")], &tok, 32);
        let out = model.forward(&batch).unwrap();
        for row in out.logits.rows() {
            assert_eq!(row[0], 0.0);
        }
        // Probabilities reduce to the sigmoid of z.
        let p = probabilities(&out).unwrap();
        for (row, prow) in out.logits.rows().into_iter().zip(p.rows()) {
            let sig = 1.0 / (1.0 + (-row[1]).exp());
            assert!((prow[1] - sig).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_size_mismatch_names_both_sizes() {
        let tok = TokenizerHandle::toy();
        let mut params = toy_params();
        params.hidden_size = 24;
        params.num_attention_heads = 2;
        let source = BackboneSource::Fresh(toy_backbone_config(tok.vocab_size()));
        let err = build_model(&params, &source).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("24") && msg.contains("16"), "{msg}");
    }

    #[test]
    fn metadata_disagreements_become_warnings_not_errors() {
        let tok = TokenizerHandle::toy();
        let mut params = toy_params();
        params.num_layers = 12; // backbone has 2
        let source = BackboneSource::Fresh(toy_backbone_config(tok.vocab_size()));
        let model = build_model(&params, &source).unwrap();
        assert_eq!(model.warnings.len(), 1);
        assert!(model.warnings[0].contains("num_layers"));
    }

    #[test]
    fn train_mode_dropout_draws_from_the_seeded_stream() {
        let tok = TokenizerHandle::toy();
        let batch = batch_encode(&[clean("hope"), clean("rain")], &tok, 32);
        // Two models with the same seed advance identically.
        let mut a = toy_model();
        let mut b = toy_model();
        let (oa, _) = a.forward_train(&batch).unwrap();
        let (ob, _) = b.forward_train(&batch).unwrap();
        assert_eq!(oa.logits, ob.logits);
        // Within one model, consecutive train-mode calls differ (the
        // stream advances), while eval stays fixed.
        let (oa2, _) = a.forward_train(&batch).unwrap();
        assert_ne!(oa.logits, oa2.logits);
        assert_eq!(a.forward(&batch).unwrap().logits, b.forward(&batch).unwrap().logits);
    }

    #[test]
    fn shape_mismatch_is_reported_with_instance_index() {
        let model = toy_model();
        let tok = TokenizerHandle::toy();
        let good = encode(&clean("hope"), &tok, 32);
        let mut bad = good.clone();
        bad.attention_mask.pop();
        let err = model.forward(&[good, bad]).unwrap_err();
        assert!(matches!(
            err,
            ClassifierError::ShapeMismatch { instance: 1, .. }
        ));
    }
}
