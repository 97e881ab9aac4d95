//! A tiny embedded fixture corpus for wiring checks and the overfit
//! oracle: 32 examples whose label is exactly "does the text contain
//! the token `hope`". The negative texts avoid the letters h, o, p, e
//! entirely, so the set is separable even for the character-level toy
//! tokenizer. A correct training pipeline must be able to memorize it;
//! failure to reach train accuracy 1.0 indicates a wiring bug, not a
//! modeling limitation.

use crate::classifier::{
    Activation, BackboneConfig, HyperParams, LossKind, OptimizerKind,
};
use crate::corpus::{DatasetSplit, Label, SplitName, TextInstance};

/// Hopeful texts; every one contains the token `hope`.
const HOPE_TEXTS: [&str; 16] = [
    "i hope we win",
    "hope never dies",
    "there is hope",
    "hope lights the way",
    "we hold hope",
    "hope grows daily",
    "all my hope remains",
    "hope carries us",
    "new hope dawns",
    "hope in every heart",
    "keep hope alive",
    "hope will return",
    "our hope endures",
    "quiet hope remains",
    "hope finds a way",
    "hope above all",
];

/// Hopeless texts; none contains any of the letters h, o, p, or e.
const NOT_HOPE_TEXTS: [&str; 16] = [
    "sad rain falls",
    "dry dust and wind",
    "gray mist",
    "dark mud",
    "glum and drab",
    "grim dull sky",
    "vast dry land",
    "salt and grit",
    "rust and dust",
    "dim gray walls",
    "winds cry",
    "mist and rain",
    "dull gray dawn",
    "drab dark days",
    "mud and grit",
    "sad dim sky",
];

/// The 32 fixture examples as a fully labeled split under the given
/// role name (the same texts serve as train and as dev when a run
/// only needs to demonstrate memorization).
pub fn split(name: SplitName) -> DatasetSplit {
    let mut instances = Vec::with_capacity(32);
    for (i, text) in HOPE_TEXTS.iter().enumerate() {
        instances.push(TextInstance {
            id: format!("toy-{:02}", i),
            text: (*text).to_string(),
            label: Some(Label::Hope),
        });
    }
    for (i, text) in NOT_HOPE_TEXTS.iter().enumerate() {
        instances.push(TextInstance {
            id: format!("toy-{:02}", 16 + i),
            text: (*text).to_string(),
            label: Some(Label::NotHope),
        });
    }
    DatasetSplit { name, instances }
}

/// Hyperparameters sized for the fixture: a reduced backbone that
/// trains to accuracy 1.0 on [`split`] within a few dozen epochs on a
/// CPU. Values here are pinned by the overfit tests — tune with care.
pub fn params() -> HyperParams {
    HyperParams {
        model_architecture: "toy-transformer".to_string(),
        hidden_size: 16,
        num_layers: 2,
        num_attention_heads: 2,
        intermediate_size: 24,
        dropout_rate: 0.0,
        activation: Activation::Gelu,
        max_sequence_length: 32,
        batch_size: 8,
        learning_rate: 3e-3,
        optimizer: OptimizerKind::AdamW,
        loss: LossKind::CrossEntropy,
        seed: 42,
        num_epochs: 30,
    }
}

/// A backbone sized to [`params`], over the caller's vocabulary
/// (normally [`crate::encoding::TokenizerHandle::toy`]).
pub fn backbone_config(vocab_size: usize, params: &HyperParams) -> BackboneConfig {
    BackboneConfig {
        architecture: params.model_architecture.clone(),
        vocab_size,
        hidden_size: params.hidden_size,
        max_positions: params.max_sequence_length,
        num_layers: params.num_layers,
        num_heads: params.num_attention_heads,
        intermediate_size: params.intermediate_size,
    }
}
