//! Empirical Hilbert-Schmidt Independence Criterion with the inner-product
//! kernel, and the channel independence penalty built from it.
//!
//! Two channel blocks `e_i`, `e_j` of one node representation are treated as
//! `d` paired scalar samples `(e_{i,p}, e_{j,p})`. With Gram matrices
//! `K = e_i e_iᵀ`, `S = e_j e_jᵀ` and the centering matrix `R = I − 11ᵀ/d`,
//! the estimate is `(d−1)^{-2} tr(K R S R)`. For this kernel the trace
//! collapses to `(d−1)^{-2} (ẽ_iᵀ ẽ_j)²` with `ẽ` the mean-centered vector,
//! so it is zero exactly when the centered blocks are uncorrelated. It does
//! not detect general statistical dependence.

use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix, Tape, Tensor};

/// `K_{pq} = e_p e_q`.
pub fn gram_inner(e: &[f64]) -> Matrix {
    let d = e.len();
    let mut k = Matrix::zeros(d, d);
    for p in 0..d {
        for q in 0..d {
            k.set(p, q, e[p] * e[q]);
        }
    }
    k
}

/// `R = I − 11ᵀ/d`.
pub fn centering_matrix(d: usize) -> Matrix {
    let mut r = Matrix::filled(d, d, -1.0 / d as f64);
    for i in 0..d {
        r.set(i, i, 1.0 - 1.0 / d as f64);
    }
    r
}

fn check_pair(e_i: &[f64], e_j: &[f64]) -> Result<usize> {
    if e_i.len() != e_j.len() {
        return Err(Error::Validation(format!(
            "HSIC needs equal-length samples, got {} and {}",
            e_i.len(),
            e_j.len()
        )));
    }
    if e_i.len() < 2 {
        return Err(Error::Validation(format!(
            "HSIC needs at least 2 samples, got {}",
            e_i.len()
        )));
    }
    Ok(e_i.len())
}

/// `(d−1)^{-2} tr(K R S R)` evaluated with explicit `d×d` matrices.
pub fn hsic_inner(e_i: &[f64], e_j: &[f64]) -> Result<f64> {
    let d = check_pair(e_i, e_j)?;
    let k = gram_inner(e_i);
    let s = gram_inner(e_j);
    let r = centering_matrix(d);
    let krsr = k.matmul(&r)?.matmul(&s)?.matmul(&r)?;
    Ok(krsr.trace() / ((d - 1) as f64).powi(2))
}

/// Closed form `(d−1)^{-2} (ẽ_iᵀ ẽ_j)²` of [`hsic_inner`].
pub fn hsic_inner_closed_form(e_i: &[f64], e_j: &[f64]) -> Result<f64> {
    let d = check_pair(e_i, e_j)?;
    let centered = |e: &[f64]| -> Vec<f64> {
        let mean = e.iter().sum::<f64>() / d as f64;
        e.iter().map(|v| v - mean).collect()
    };
    let c = dot(&centered(e_i), &centered(e_j));
    Ok(c * c / ((d - 1) as f64).powi(2))
}

fn check_blocks(width: usize, channels: usize) -> Result<usize> {
    if channels == 0 || !width.is_multiple_of(channels) {
        return Err(Error::Config(format!(
            "{channels} channels do not divide representation width {width}"
        )));
    }
    let d = width / channels;
    if channels > 1 && d < 2 {
        return Err(Error::Config(format!(
            "HSIC needs channel width >= 2, got {d}"
        )));
    }
    Ok(d)
}

/// Sum over `nodes` of `hsic_inner` across all ordered channel pairs `i ≠ j`
/// of each node's row, computed with the trace formula.
pub fn independence_loss_value(h: &Matrix, channels: usize, nodes: &[usize]) -> Result<f64> {
    let d = check_blocks(h.cols(), channels)?;
    let mut total = 0.0;
    for &u in nodes {
        let row = h.row(u);
        for i in 0..channels {
            for j in 0..channels {
                if i != j {
                    total += hsic_inner(&row[i * d..(i + 1) * d], &row[j * d..(j + 1) * d])?;
                }
            }
        }
    }
    Ok(total)
}

/// Differentiable channel independence penalty on the tape.
///
/// Same quantity as [`independence_loss_value`], built from gather, center,
/// per-node Gram and off-diagonal masking so that gradients reach `h`. An
/// empty node set or a single channel yields a constant zero.
pub fn independence_loss(tape: &mut Tape, h: Tensor, channels: usize, nodes: &[usize]) -> Result<Tensor> {
    let d = check_blocks(tape.shape(h).1, channels)?;
    if nodes.is_empty() || channels == 1 {
        return Ok(tape.constant(Matrix::zeros(1, 1)));
    }
    let k = nodes.len();
    let picked = tape.gather_rows(h, nodes)?;
    let blocks = tape.reshape(picked, k * channels, d)?;
    let centered = tape.center_rows(blocks);
    let gram = tape.batched_gram(centered, channels)?;
    let squared = tape.mul(gram, gram)?;
    let mut mask = Matrix::filled(k, channels * channels, 1.0);
    for u in 0..k {
        for i in 0..channels {
            mask.set(u, i * channels + i, 0.0);
        }
    }
    let mask = tape.constant(mask);
    let off_diagonal = tape.mul(squared, mask)?;
    let total = tape.sum(off_diagonal);
    Ok(tape.scale(total, 1.0 / ((d - 1) as f64).powi(2)))
}
