//! Network primitives kept as free functions so each one can be tested
//! against its contract in isolation. The model's fused fast path must stay
//! equivalent to compositions of these.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Valid 1-D convolution down the rows: output i is the filter dotted with
/// input rows `i..i+h`, plus the bias. Nonlinearity is applied separately.
pub fn conv1d_forward<T: Scalar>(
    input: ArrayView2<T>,
    filter: ArrayView2<T>,
    bias: T,
) -> Result<Array1<T>> {
    let (x, d) = input.dim();
    let (h, fd) = filter.dim();
    if fd != d {
        return Err(Error::Training {
            epoch: 0,
            batch: 0,
            message: format!("filter width {fd} does not match input width {d}"),
        });
    }
    if h == 0 || h > x {
        return Err(Error::Training {
            epoch: 0,
            batch: 0,
            message: format!("window height {h} outside valid range 1..={x}"),
        });
    }
    let mut out = Array1::zeros(x - h + 1);
    for i in 0..=x - h {
        let mut acc = T::zero();
        for j in 0..h {
            let (row, frow) = (input.row(i + j), filter.row(j));
            for c in 0..d {
                acc = acc + row[c] * frow[c];
            }
        }
        out[i] = acc + bias;
    }
    Ok(out)
}

pub fn relu<T: Scalar>(v: ArrayView1<T>) -> Array1<T> {
    v.mapv(|x| if x > T::zero() { x } else { T::zero() })
}

/// Maximum and its first-occurrence index.
pub fn max_pool_1<T: Scalar>(feature_map: ArrayView1<T>) -> Result<(T, usize)> {
    if feature_map.is_empty() {
        return Err(Error::Training {
            epoch: 0,
            batch: 0,
            message: "cannot pool an empty feature map".into(),
        });
    }
    let mut best = feature_map[0];
    let mut at = 0;
    for (i, &v) in feature_map.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            at = i;
        }
    }
    Ok((best, at))
}

/// Inverted dropout: in training, each entry independently drops with
/// probability `rate` and survivors scale by `1/(1-rate)`; at inference the
/// input passes through unchanged. Requires `0 <= rate < 1`.
pub fn dropout<T: Scalar, R: Rng>(
    v: ArrayView1<T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Array1<T> {
    debug_assert!((0.0..1.0).contains(&rate));
    if !training || rate == 0.0 {
        return v.to_owned();
    }
    let scale = T::from_f64(1.0 / (1.0 - rate));
    v.mapv(|x| if rng.gen::<f64>() < rate { T::zero() } else { x * scale })
}

/// Scores through a bias-free dense layer, then stable softmax.
pub fn dense_softmax<T: Scalar>(pooled: ArrayView1<T>, weights: ArrayView2<T>) -> Array1<T> {
    let mut scores = weights.dot(&pooled);
    softmax_in_place(scores.as_slice_mut().expect("scores are contiguous"));
    scores
}

/// Stable softmax: subtracts the maximum before exponentiating.
pub fn softmax_in_place<T: Scalar>(scores: &mut [T]) {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total = total + *s;
    }
    for s in scores.iter_mut() {
        *s = *s / total;
    }
}

/// Negative log probability of the gold label, probability floored at
/// `PROBABILITY_FLOOR` so a confident wrong answer stays finite.
pub fn cross_entropy<T: Scalar>(probs: ArrayView1<T>, gold: usize) -> T {
    let floor = T::from_f64(PROBABILITY_FLOOR);
    -probs[gold].max(floor).ln()
}
