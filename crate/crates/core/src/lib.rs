//! Fuzzy color modelling of images and color-emotion association.

pub mod annotations;
pub mod color;
pub mod config;
pub mod corpus;
pub mod emotion;
pub mod error;
pub mod fuzzy;
pub mod kb;
pub mod palette;
pub mod psychometrics;
pub mod report;
pub mod scoring;

pub use color::{BasicColor, BasicColorMapping, FuzzyColor, FuzzyColorSpace, Hue, Intensity, Saturation};
pub use config::{fingerprint, MappingConfig, PartitionConfig};
pub use emotion::EmotionLabel;
pub use error::{Error, Result};
