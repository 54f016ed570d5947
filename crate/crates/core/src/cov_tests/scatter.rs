//! Packed scatter accumulators in quadrature-weighted coordinates.
//!
//! A curve `x` is mapped to `y_a = sqrt(w_a) (x_a − g_a)` with trapezoid
//! weights `w` and a fixed reference curve `g`. For any symmetric kernel `K`
//! the tensor trapezoid `∬ K²` then equals the Frobenius norm of
//! `sqrt(w_a w_b) K_ab`, so covariance distances reduce to packed-matrix
//! arithmetic on the upper triangle. Centering is unaffected by `g`, which
//! only serves to keep the accumulated sums small.

use crate::func_core::FunctionalSample;

pub(crate) struct Weighted {
    r: usize,
    rows: Vec<f64>,
}

impl Weighted {
    pub(crate) fn new(sample: &FunctionalSample) -> Self {
        let grid = sample.grid();
        let r = grid.resolution();
        let sw: Vec<f64> = grid.trapezoid_weights().iter().map(|w| w.sqrt()).collect();
        let g = sample.mean_curve();
        let mut rows = Vec::with_capacity(sample.n() * r);
        for c in sample.curves() {
            rows.extend(c.iter().zip(g.values()).zip(&sw).map(|((x, m), s)| s * (x - m)));
        }
        Weighted { r, rows }
    }

    pub(crate) fn packed_len(&self) -> usize {
        self.r * (self.r + 1) / 2
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.r..(j + 1) * self.r]
    }
}

/// Running `P = Σ y yᵀ` (upper triangle) and `s = Σ y` over consecutive curves.
pub(crate) struct Scatter {
    pub(crate) count: usize,
    pub(crate) outer: Vec<f64>,
    pub(crate) sum: Vec<f64>,
}

impl Scatter {
    pub(crate) fn new(w: &Weighted) -> Self {
        Scatter {
            count: 0,
            outer: vec![0.0; w.packed_len()],
            sum: vec![0.0; w.r],
        }
    }

    pub(crate) fn push(&mut self, w: &Weighted, j: usize) {
        let y = w.row(j);
        let r = w.r;
        let mut p = 0;
        for a in 0..r {
            let ya = y[a];
            for (o, yb) in self.outer[p..p + r - a].iter_mut().zip(&y[a..]) {
                *o += ya * yb;
            }
            p += r - a;
        }
        for (s, v) in self.sum.iter_mut().zip(y) {
            *s += v;
        }
        self.count += 1;
    }

    /// `(P − s sᵀ / count) / divisor`, or zeros for fewer than two curves.
    pub(crate) fn centered(&self, r: usize, divisor: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.outer.len()];
        if self.count < 2 {
            return out;
        }
        let c = self.count as f64;
        let mut p = 0;
        for a in 0..r {
            let sa = self.sum[a] / c;
            for b in a..r {
                out[p] = (self.outer[p] - sa * self.sum[b]) / divisor;
                p += 1;
            }
        }
        out
    }

    /// Scatter of the curves in `self` but not in `prefix` (which must be a prefix of it).
    pub(crate) fn minus(&self, prefix: &Scatter) -> Scatter {
        Scatter {
            count: self.count - prefix.count,
            outer: self.outer.iter().zip(&prefix.outer).map(|(a, b)| a - b).collect(),
            sum: self.sum.iter().zip(&prefix.sum).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Accumulate curves `start, start + 1, ...` and snapshot the centered
/// scatter after each requested count (counts nondecreasing).
pub(crate) fn window_snapshots(w: &Weighted, start: usize, counts: &[usize], divisor: f64) -> Vec<Vec<f64>> {
    let mut acc = Scatter::new(w);
    counts
        .iter()
        .map(|&c| {
            while acc.count < c {
                acc.push(w, start + acc.count);
            }
            acc.centered(w.r, divisor)
        })
        .collect()
}

/// `Σ_{a,b} (A − B)_ab²` for packed symmetric `A`, `B`.
pub(crate) fn frobenius_diff(r: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut diag = 0.0;
    let mut off = 0.0;
    let mut p = 0;
    for i in 0..r {
        let d = a[p] - b[p];
        diag += d * d;
        p += 1;
        for _ in i + 1..r {
            let d = a[p] - b[p];
            off += d * d;
            p += 1;
        }
    }
    diag + 2.0 * off
}

pub(crate) fn resolution(w: &Weighted) -> usize {
    w.r
}
