//! Binary hope-speech classification for English and German social-media
//! text: corpus tooling, cleaning, subword encoding, a transformer
//! classifier with fine-tuning, and macro-averaged evaluation.

pub mod classifier;
pub mod corpus;
pub mod encoding;
pub mod metrics;
pub mod textclean;
pub mod toydata;
pub mod training;

pub use classifier::{
    build_model, predict, probabilities, BackboneSource, ClassifierOutput, HyperParams, Model,
};
pub use corpus::{ClassCounts, DatasetSplit, Label, SplitName, TextInstance};
pub use encoding::{batch_encode, encode, Encoding, TokenizerHandle};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use textclean::CleanText;
pub use training::{
    checkpoint::{load_checkpoint, save_checkpoint},
    evaluate_split, predict_labels, train, EpochRecord, TrainOptions, TrainRun, TrainingError,
};
