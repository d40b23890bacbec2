//! Dataset indexing, sampling and augmentation.

mod augment;
mod clips;
mod index;
mod sampler;
pub mod toy;

pub use augment::{
    mix_pairs, mixup, spec_augment, MaskRecord, MixupConfig, MixupDomain, MixupOutput, SpecAugmentConfig,
};
pub use clips::ClipSet;
pub use toy::{toy_dataset, ToyConfig};
pub use index::{load_class_map, load_index, parse_index, ClipRecord};
pub use sampler::{BalancedSampler, Sampler, UniformSampler};
