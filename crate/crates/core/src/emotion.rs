use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::color::term_enum;
use crate::error::{Error, Result};

term_enum!(
    /// The ten emotions of the knowledge base, in dataset-table order.
    EmotionLabel {
        Happiness => "happiness",
        Love => "love",
        Anger => "anger",
        Sadness => "sadness",
        Gratitude => "gratitude",
        Fear => "fear",
        Shame => "shame",
        Surprise => "surprise",
        Shyness => "shyness",
        Trust => "trust",
    }
);
