//! The shared sliding-sum kernel behind scanning, the implicit operator and
//! the conventional blur.
//!
//! Every output value is accumulated over kernel offsets in row-major order
//! (`u` outer, `v` inner), skipping taps that are exactly zero and, on the
//! zero-fill path, taps that land outside the source. Skipped terms are exact
//! zeros, so every path produces the same bits as the plain full-order sum.
//! Rows of the output are independent and computed in parallel.

use rayon::prelude::*;

/// A square kernel with odd side `k`, indexed by offsets in `[-half, half]`.
#[derive(Debug, Clone)]
pub(crate) struct Taps {
    k: usize,
    half: isize,
    weights: Vec<f64>,
    /// Inclusive column range of nonzero weights per kernel row.
    spans: Vec<Option<(usize, usize)>>,
}

impl Taps {
    pub fn new(k: usize, weights: Vec<f64>) -> Self {
        debug_assert_eq!(k % 2, 1);
        debug_assert_eq!(weights.len(), k * k);
        let spans = weights
            .chunks(k)
            .map(|row| {
                let first = row.iter().position(|w| *w != 0.0)?;
                let last = row.iter().rposition(|w| *w != 0.0)?;
                Some((first, last))
            })
            .collect();
        Self {
            k,
            half: (k as isize - 1) / 2,
            weights,
            spans,
        }
    }

    /// The offset-reversed kernel, `w'(u, v) = w(-u, -v)`.
    pub fn flipped(&self) -> Self {
        Self::new(self.k, self.weights.iter().rev().copied().collect())
    }
}

/// Source image with the value used outside its bounds.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Source<'a> {
    pub values: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub fill: f64,
}

/// `out(p, q) = Σ_{u,v} w(u, v) · src(origin + (p, q) + (u, v))` for an
/// `out_rows × out_cols` window of footprint centres starting at `origin`.
pub(crate) fn correlate(
    src: Source<'_>,
    taps: &Taps,
    origin: (isize, isize),
    out_rows: usize,
    out_cols: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; out_rows * out_cols];
    out.par_chunks_mut(out_cols)
        .enumerate()
        .for_each(|(p, row)| {
            let ci = origin.0 + p as isize;
            for (q, slot) in row.iter_mut().enumerate() {
                let cj = origin.1 + q as isize;
                *slot = if src.fill == 0.0 {
                    footprint_zero_fill(src, taps, ci, cj)
                } else {
                    footprint_filled(src, taps, ci, cj)
                };
            }
        });
    out
}

/// Single footprint sum centred at `(ci, cj)`.
pub(crate) fn footprint(src: Source<'_>, taps: &Taps, ci: isize, cj: isize) -> f64 {
    if src.fill == 0.0 {
        footprint_zero_fill(src, taps, ci, cj)
    } else {
        footprint_filled(src, taps, ci, cj)
    }
}

fn footprint_zero_fill(src: Source<'_>, taps: &Taps, ci: isize, cj: isize) -> f64 {
    let (rows, cols) = (src.rows as isize, src.cols as isize);
    let h = taps.half;
    // Kernel-index ranges whose targets fall inside the source.
    let u_lo = (-h).max(-ci);
    let u_hi = h.min(rows - 1 - ci);
    let v_lo = (-h).max(-cj);
    let v_hi = h.min(cols - 1 - cj);
    if u_lo > u_hi || v_lo > v_hi {
        return 0.0;
    }
    let mut acc = 0.0;
    for u in u_lo..=u_hi {
        let ku = (u + h) as usize;
        let Some((a, b)) = taps.spans[ku] else {
            continue;
        };
        let lo = ((v_lo + h) as usize).max(a);
        let hi = ((v_hi + h) as usize).min(b);
        if lo > hi {
            continue;
        }
        let w = &taps.weights[ku * taps.k + lo..=ku * taps.k + hi];
        let start = ((ci + u) * cols + cj + lo as isize - h) as usize;
        let x = &src.values[start..start + w.len()];
        acc = w.iter().zip(x).fold(acc, |acc, (w, x)| acc + w * x);
    }
    acc
}

fn footprint_filled(src: Source<'_>, taps: &Taps, ci: isize, cj: isize) -> f64 {
    let (rows, cols) = (src.rows as isize, src.cols as isize);
    let h = taps.half;
    let mut acc = 0.0;
    for ku in 0..taps.k {
        let Some((a, b)) = taps.spans[ku] else {
            continue;
        };
        let ti = ci + ku as isize - h;
        for kv in a..=b {
            let w = taps.weights[ku * taps.k + kv];
            if w == 0.0 {
                continue;
            }
            let tj = cj + kv as isize - h;
            let x = if (0..rows).contains(&ti) && (0..cols).contains(&tj) {
                src.values[(ti * cols + tj) as usize]
            } else {
                src.fill
            };
            acc += w * x;
        }
    }
    acc
}
