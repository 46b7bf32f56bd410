//! Tail-index estimation.
//!
//! The main estimator splits `K = K1 * K2` samples into `K2` consecutive blocks of
//! `K1`, sums each block into `Y_i`, and uses
//!
//! ```text
//! 1/alpha_hat = ( mean_i ln|Y_i| - mean_k ln|X_k| ) / ln K1
//! ```
//!
//! For SaS data `Y_i` has the law of `K1^(1/alpha) X`, so the bracket concentrates
//! at `ln(K1) / alpha` whatever the scale. A classical Hill estimator is provided
//! as a baseline.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::stable::{SignedLog, StandardStable};
use crate::stats;

/// Magnitudes below this are treated as exact zeros.
pub const ZERO_GUARD: f64 = 1e-300;

/// Block layout `K = K1 * K2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grouping {
    total: usize,
    group_size: usize,
    group_count: usize,
}

impl Grouping {
    pub fn new(group_size: usize, group_count: usize) -> Result<Self> {
        if group_size < 2 {
            return Err(Error::domain("K1", format!("group size must be at least 2, got {group_size}")));
        }
        if group_count < 1 {
            return Err(Error::domain("K2", "group count must be at least 1"));
        }
        Ok(Grouping {
            total: group_size * group_count,
            group_size,
            group_count,
        })
    }

    /// `K`, the number of samples consumed.
    pub fn total(&self) -> usize {
        self.total
    }

    /// `K1`
    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// `K2`
    pub fn group_count(&self) -> usize {
        self.group_count
    }
}

/// Divisor of `k` in `[2, k-1]` closest to `sqrt(k)`, ties to the smaller one.
fn closest_divisor(k: usize) -> Option<usize> {
    let root = (k as f64).sqrt();
    let mut best: Option<usize> = None;
    let mut d = 2;
    while d * d <= k {
        if k % d == 0 {
            for cand in [d, k / d] {
                if cand >= 2 && cand < k {
                    let better = match best {
                        None => true,
                        Some(b) => {
                            let (dc, db) = ((cand as f64 - root).abs(), (b as f64 - root).abs());
                            dc < db || (dc == db && cand < b)
                        }
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
        d += 1;
    }
    best
}

/// Picks `K1` as the divisor of `K'` closest to `sqrt(K')`, where `K' <= K` is the
/// largest count whose best divisor is within a factor 4 of `sqrt(K')`. The
/// `K - K'` trailing samples are left unused.
pub fn choose_grouping(k: usize) -> Result<Grouping> {
    if k < 4 {
        return Err(Error::InsufficientData { needed: 4, got: k });
    }
    let mut kk = k;
    loop {
        if let Some(d) = closest_divisor(kk) {
            let root = (kk as f64).sqrt();
            let (df, lo, hi) = (d as f64, root / 4.0, root * 4.0);
            if df >= lo && df <= hi {
                return Grouping::new(d, kk / d);
            }
        }
        kk -= 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub alpha_hat: f64,
    pub inv_alpha_hat: f64,
    pub grouping: Grouping,
    /// Input values beyond `grouping.total()` that were not used.
    pub dropped: usize,
    /// `alpha_hat` fell outside `(0, 2]`. The value is reported unclamped.
    pub out_of_range: bool,
}

impl TailEstimate {
    fn from_inverse(inv: f64, grouping: Grouping, dropped: usize) -> Self {
        let alpha_hat = 1.0 / inv;
        TailEstimate {
            alpha_hat,
            inv_alpha_hat: inv,
            grouping,
            dropped,
            out_of_range: !(alpha_hat > 0.0 && alpha_hat <= 2.0),
        }
    }
}

fn check_len(len: usize, g: &Grouping) -> Result<()> {
    if len < g.total {
        return Err(Error::InsufficientData {
            needed: g.total,
            got: len,
        });
    }
    Ok(())
}

fn finish(sum_d: f64, g: Grouping, len: usize) -> TailEstimate {
    let bracket = sum_d / g.group_count as f64;
    TailEstimate::from_inverse(bracket / (g.group_size as f64).ln(), g, len - g.total)
}

/// Block-sum estimate over the first `grouping.total()` values of `x`.
///
/// Each block contributes `ln|Y_i / m_i| - mean_j ln|X_j / m_i|` with `m_i` the
/// block's largest magnitude, which is the bracket of the estimator regrouped
/// by block. Working relative to `m_i` avoids overflow in the sum and
/// cancellation between large logarithms.
pub fn estimate_alpha(x: &[f64], grouping: &Grouping) -> Result<TailEstimate> {
    check_len(x.len(), grouping)?;
    let used = &x[..grouping.total];
    let k1 = grouping.group_size as f64;
    let mut sum_d = 0.0;
    for (i, block) in used.chunks_exact(grouping.group_size).enumerate() {
        let mut m = 0.0f64;
        for (j, v) in block.iter().enumerate() {
            let a = v.abs();
            if !(a >= ZERO_GUARD) || !a.is_finite() {
                return Err(Error::Degenerate(format!(
                    "|x| = {a:e} at index {}",
                    i * grouping.group_size + j
                )));
            }
            m = m.max(a);
        }
        let mut s = 0.0;
        let mut ln_x = 0.0;
        for v in block {
            let r = v / m;
            s += r;
            ln_x += r.abs().ln();
        }
        let ln_y = s.abs().ln();
        if !(m.ln() + ln_y >= ZERO_GUARD.ln()) {
            return Err(Error::Degenerate(format!("|Y| = {:e} for block {i}", m * s.abs())));
        }
        sum_d += ln_y - ln_x / k1;
    }
    Ok(finish(sum_d, *grouping, x.len()))
}

/// Same estimator on draws given as sign and log-magnitude. Block sums are
/// formed with a shifted log-sum-exp, so inputs far outside the `f64` range are
/// handled exactly.
pub fn estimate_alpha_log(x: &[SignedLog], grouping: &Grouping) -> Result<TailEstimate> {
    check_len(x.len(), grouping)?;
    let guard = ZERO_GUARD.ln();
    let used = &x[..grouping.total];
    let k1 = grouping.group_size as f64;
    let mut sum_d = 0.0;
    for (i, block) in used.chunks_exact(grouping.group_size).enumerate() {
        let mut top = f64::NEG_INFINITY;
        for (j, v) in block.iter().enumerate() {
            if !(v.ln_abs >= guard) || !v.ln_abs.is_finite() {
                return Err(Error::Degenerate(format!(
                    "ln|x| = {} at index {}",
                    v.ln_abs,
                    i * grouping.group_size + j
                )));
            }
            top = top.max(v.ln_abs);
        }
        let mut s = 0.0;
        let mut ln_x = 0.0;
        for v in block {
            let d = v.ln_abs - top;
            let e = d.exp();
            s += if v.negative { -e } else { e };
            ln_x += d;
        }
        let ln_y = s.abs().ln();
        if !(top + ln_y >= guard) {
            return Err(Error::Degenerate(format!("block sum {i} vanishes")));
        }
        sum_d += ln_y - ln_x / k1;
    }
    Ok(finish(sum_d, *grouping, x.len()))
}

/// Default number of upper order statistics for [`hill_estimate`].
pub fn default_hill_k(n: usize) -> usize {
    n / 10
}

/// Hill estimate of the tail index from the `k` largest `|x|`.
pub fn hill_estimate(x: &[f64], k: usize) -> Result<f64> {
    let n = x.len();
    if k < 2 || k >= n {
        return Err(Error::domain("k", format!("need 2 <= k < {n}, got {k}")));
    }
    let mut a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    a.sort_by(f64::total_cmp);
    let threshold = a[n - k - 1];
    if !(threshold > 0.0) {
        return Err(Error::Degenerate(format!("threshold order statistic {threshold}")));
    }
    let mean_log = a[n - k..].iter().map(|v| (v / threshold).ln()).sum::<f64>() / k as f64;
    if !(mean_log > 0.0) {
        return Err(Error::Degenerate("upper order statistics have no spread".into()));
    }
    Ok(1.0 / mean_log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub alpha: f64,
    pub mean_alpha_hat: f64,
    pub std_alpha_hat: f64,
    pub mae: f64,
}

/// Repeats the block-sum estimator on `reps` fresh batches of `K1 * K2` unit SaS
/// draws for each tail index in `alpha_grid`.
///
/// Cells run in parallel; cell `(i, rep)` uses seed `derive_seed(seed, [i, rep])`
/// and results are reduced in grid order, so the table does not depend on
/// scheduling.
pub fn calibrate(
    alpha_grid: &[f64],
    k1: usize,
    k2: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<CalibrationRow>> {
    let grouping = Grouping::new(k1, k2)?;
    if reps == 0 {
        return Err(Error::domain("reps", "must be at least 1"));
    }
    let samplers = alpha_grid
        .iter()
        .map(|&a| StandardStable::new(a))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..alpha_grid.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let estimates = cells
        .par_iter()
        .map_init(
            || Vec::with_capacity(grouping.total()),
            |buf, &(i, r)| {
                let mut rng = seeded(derive_seed(seed, &[i as u64, r as u64]));
                buf.clear();
                buf.extend((0..grouping.total()).map(|_| samplers[i].draw_log(&mut rng)));
                estimate_alpha_log(buf, &grouping).map(|e| e.alpha_hat)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    Ok(alpha_grid
        .iter()
        .zip(estimates.chunks_exact(reps))
        .map(|(&alpha, hats)| CalibrationRow {
            alpha,
            mean_alpha_hat: stats::mean(hats),
            std_alpha_hat: stats::std_dev(hats),
            mae: stats::mean(&hats.iter().map(|h| (h - alpha).abs()).collect::<Vec<_>>()),
        })
        .collect())
}
