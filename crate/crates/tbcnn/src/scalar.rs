//! Scalar abstraction for the dense numeric code paths.
//!
//! The embedding and network code is generic over [`Scalar`] so the same
//! implementation trains in `f32` and gradient-checks in `f64`. Counting
//! code (topic model, bag-of-words baselines) stays on concrete integer and
//! `f64` types where genericity buys nothing.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + serde::Serialize
    + for<'de> serde::Deserialize<'de>
    + 'static
{
    const BYTES: usize;
    /// Short tag written into checkpoint headers ("f32" / "f64").
    const TAG: &'static str;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn to_le_bytes(self) -> [u8; 8];
    fn from_le_slice(bytes: &[u8]) -> Self;
    /// Parses in this type's own precision; going through `f64` would
    /// double-round and break text round-trips.
    fn parse(text: &str) -> Option<Self>;
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const TAG: &'static str = "f32";

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn to_le_bytes(self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[..4].copy_from_slice(&f32::to_le_bytes(self));
        out
    }

    #[inline]
    fn from_le_slice(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }

    fn parse(text: &str) -> Option<Self> {
        text.parse().ok()
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const TAG: &'static str = "f64";

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    #[inline]
    fn to_le_bytes(self) -> [u8; 8] {
        f64::to_le_bytes(self)
    }

    #[inline]
    fn from_le_slice(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }

    fn parse(text: &str) -> Option<Self> {
        text.parse().ok()
    }
}
