//! Finite-difference verification of the hand-derived gradients.
//!
//! Central differences with step `FD_STEP` probe every parameter of an
//! `f64` model: filters, biases, dense weights, and every non-padding
//! embedding entry (entries of unused rows must agree on zero). The loss
//! surface is piecewise smooth; a probe that flips a ReLU gate or a pooling
//! argmax lands on a different piece and the comparison is meaningless, so
//! `margins_ok` rejects model/batch combinations where any unit sits within
//! flipping distance. A bias probe shifts its pooled value by exactly
//! `FD_STEP`, hence the gate margin exceeds the step; a filter or embedding
//! probe moves map entries by at most max|x| times the step, so the argmax
//! gap needs less.

use rand_chacha::ChaCha8Rng;

use super::{CnnDoc, CnnModel, GradBatch, Scratch, TrainConfig};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-3;
pub const GATE_MARGIN: f64 = 1.2e-3;
pub const GAP_MARGIN: f64 = 6e-4;

/// Flat coordinate address into one of the model's parameter tensors.
#[derive(Clone, Copy, Debug)]
pub enum Coord {
    Filter(usize, usize),
    Bias(usize, usize),
    Dense(usize),
    Embedding(usize),
}

pub fn read_coord(model: &CnnModel<f64>, c: Coord) -> f64 {
    match c {
        Coord::Filter(r, i) => model.filters[r].as_slice().unwrap()[i],
        Coord::Bias(r, i) => model.biases[r][i],
        Coord::Dense(i) => model.dense.as_slice().unwrap()[i],
        Coord::Embedding(i) => model.embedding.as_slice().unwrap()[i],
    }
}

pub fn write_coord(model: &mut CnnModel<f64>, c: Coord, v: f64) {
    match c {
        Coord::Filter(r, i) => model.filters[r].as_slice_mut().unwrap()[i] = v,
        Coord::Bias(r, i) => model.biases[r][i] = v,
        Coord::Dense(i) => model.dense.as_slice_mut().unwrap()[i] = v,
        Coord::Embedding(i) => model.embedding.as_slice_mut().unwrap()[i] = v,
    }
}

/// The analytic gradient at one coordinate; absent embedding rows read 0.
pub fn analytic_grad(model: &CnnModel<f64>, grads: &GradBatch<f64>, c: Coord) -> f64 {
    let y = model.embed_dim();
    match c {
        Coord::Filter(r, i) => grads.filters[r].as_slice().unwrap()[i],
        Coord::Bias(r, i) => grads.biases[r][i],
        Coord::Dense(i) => grads.dense.as_slice().unwrap()[i],
        Coord::Embedding(i) => {
            let (row, col) = (i / y, i % y);
            grads.embedding_rows.get(&(row as u32)).map_or(0.0, |g| g[col])
        }
    }
}

/// Every trainable coordinate: all filters and biases, the dense layer, and
/// each embedding entry past the pinned padding row.
pub fn all_coords(model: &CnnModel<f64>) -> Vec<Coord> {
    let mut coords = Vec::new();
    for r in 0..model.filters.len() {
        coords.extend((0..model.filters[r].len()).map(|i| Coord::Filter(r, i)));
        coords.extend((0..model.biases[r].len()).map(|i| Coord::Bias(r, i)));
    }
    coords.extend((0..model.dense.len()).map(Coord::Dense));
    coords.extend((model.embed_dim()..model.embedding.len()).map(Coord::Embedding));
    coords
}

/// True when every ReLU gate and pooling argmax stays on its side of the
/// boundary under any single-coordinate probe of size `FD_STEP`.
pub fn margins_ok(model: &CnnModel<f64>, docs: &[CnnDoc]) -> bool {
    let mut scratch = Scratch::new(model, docs[0].indices.len());
    for doc in docs {
        if model.forward::<ChaCha8Rng>(doc, &mut scratch, 0.0, None).is_err() {
            return false;
        }
        for unit in 0..model.spec.pooled_len() {
            if scratch.pool_raw[unit].abs() < GATE_MARGIN {
                return false;
            }
        }
        for (r, _) in model.spec.region_sizes.iter().enumerate() {
            let maps = &scratch.maps[r];
            for f in 0..model.spec.filters_per_size {
                let mut top = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                for i in 0..maps.nrows() {
                    let v = maps[[i, f]];
                    if v > top {
                        second = top;
                        top = v;
                    } else if v > second {
                        second = v;
                    }
                }
                if maps.nrows() > 1 && top - second < GAP_MARGIN {
                    return false;
                }
            }
        }
    }
    true
}

/// Worst relative disagreement between analytic and central-difference
/// gradients over every trainable coordinate, for one batch at one step.
/// Dropout is fine: masks replay from (step, position), independent of the
/// probed parameters.
pub fn max_relative_error(
    model: &mut CnnModel<f64>,
    docs: &[CnnDoc],
    config: &TrainConfig,
    step: usize,
) -> Result<f64> {
    let grads = model.compute_gradients(docs, config, step)?;
    let coords = all_coords(model);
    let mut worst = 0.0f64;
    for &c in &coords {
        let original = read_coord(model, c);
        write_coord(model, c, original + FD_STEP);
        let plus = model.batch_loss(docs, config, step)?;
        write_coord(model, c, original - FD_STEP);
        let minus = model.batch_loss(docs, config, step)?;
        write_coord(model, c, original);
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let analytic = analytic_grad(model, &grads, c);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}
