//! Metastability of one-dimensional Levy-driven gradient flows.
//!
//! For a landscape with minima `m_1 < ... < m_r` separated by maxima
//! `s_1 < ... < s_{r-1}` (and `s_0 = -inf`, `s_r = +inf`), the small-noise limit of
//! the transitions between basins is a Markov chain on the minima with rates
//!
//! ```text
//! q_ij = (1/alpha) | |s_{j-1} - m_i|^-alpha - |s_j - m_i|^-alpha |,   i != j,
//! ```
//!
//! on the time scale `eps^-alpha`. This module computes the generator and its
//! stationary law and runs the Monte Carlo harness that compares both against
//! simulated trajectories.
//!
//! The rates assume a Levy measure `dy / |y|^(1+alpha)`. The unit SaS law with
//! characteristic function `exp(-|w|^alpha)` has Levy measure
//! `c_alpha dy / |y|^(1+alpha)` (see [`levy_measure_constant`]), so simulated
//! transition rates are `c_alpha q_ij eps^alpha`. Ratios of rates, and hence the
//! stationary law and the destination law, are unaffected.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sde::{CriticalPointPotential, DriftMode, Integrator};
use crate::stable::StandardStable;

/// Minima and separating maxima of a 1-D potential.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Landscape1D {
    minima: Vec<f64>,
    saddles: Vec<f64>,
}

impl Landscape1D {
    pub fn new(minima: Vec<f64>, saddles: Vec<f64>) -> Result<Self> {
        if minima.len() < 2 {
            return Err(Error::domain("minima", "need at least two minima"));
        }
        if saddles.len() + 1 != minima.len() {
            return Err(Error::domain(
                "saddles",
                format!("{} minima need {} saddles, got {}", minima.len(), minima.len() - 1, saddles.len()),
            ));
        }
        if minima.iter().chain(&saddles).any(|x| !x.is_finite()) {
            return Err(Error::domain("minima", "critical points must be finite"));
        }
        for (i, s) in saddles.iter().enumerate() {
            if !(minima[i] < *s && *s < minima[i + 1]) {
                return Err(Error::domain(
                    "saddles",
                    format!("saddle {s} does not separate minima {} and {}", minima[i], minima[i + 1]),
                ));
            }
        }
        Ok(Landscape1D { minima, saddles })
    }

    pub fn double_well(m1: f64, m2: f64) -> Result<Self> {
        if !(m1 < 0.0 && 0.0 < m2) {
            return Err(Error::domain("minima", format!("need m1 < 0 < m2, got ({m1}, {m2})")));
        }
        Landscape1D::new(vec![m1, m2], vec![0.0])
    }

    pub fn minima(&self) -> &[f64] {
        &self.minima
    }

    pub fn saddles(&self) -> &[f64] {
        &self.saddles
    }

    pub fn wells(&self) -> usize {
        self.minima.len()
    }

    /// `s_i` with the conventions `s_0 = -inf`, `s_r = +inf`.
    fn saddle(&self, i: usize) -> f64 {
        if i == 0 {
            f64::NEG_INFINITY
        } else if i == self.minima.len() {
            f64::INFINITY
        } else {
            self.saddles[i - 1]
        }
    }

    /// Zero-based index of the valley `(s_{i-1}, s_i]` containing `w`.
    pub fn valley_of(&self, w: f64) -> usize {
        self.saddles.partition_point(|s| *s < w)
    }

    /// Length of each valley; infinite for the outermost ones.
    pub fn widths(&self) -> Vec<f64> {
        (0..self.wells()).map(|i| self.saddle(i + 1) - self.saddle(i)).collect()
    }

    /// Smallest distance from a minimum to an adjacent saddle.
    pub fn min_half_width(&self) -> f64 {
        (0..self.wells())
            .flat_map(|i| [self.minima[i] - self.saddle(i), self.saddle(i + 1) - self.minima[i]])
            .fold(f64::INFINITY, f64::min)
    }

    /// A tenth of [`min_half_width`](Self::min_half_width).
    pub fn default_delta(&self) -> f64 {
        0.1 * self.min_half_width()
    }

    /// Polynomial potential with exactly these critical points, see
    /// [`CriticalPointPotential`].
    pub fn potential(&self) -> CriticalPointPotential {
        let mut pts = Vec::with_capacity(2 * self.wells() - 1);
        for (i, m) in self.minima.iter().enumerate() {
            pts.push(*m);
            if let Some(s) = self.saddles.get(i) {
                pts.push(*s);
            }
        }
        CriticalPointPotential::new(&pts).expect("interleaving checked at construction")
    }

    /// Basin depths `H_i` of [`potential`](Self::potential).
    pub fn basin_depths(&self) -> Vec<f64> {
        self.potential().basin_depths()
    }

    fn check_delta(&self, delta: f64) -> Result<()> {
        if !(delta > 0.0 && delta < self.min_half_width()) {
            return Err(Error::domain(
                "delta",
                format!("must lie in (0, {}) so each ball stays inside its valley, got {delta}", self.min_half_width()),
            ));
        }
        Ok(())
    }
}

/// Infinitesimal generator over the minima, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorMatrix {
    q: Vec<f64>,
    r: usize,
    alpha: f64,
}

impl GeneratorMatrix {
    /// Builds a generator from explicit rates, checking nonnegative off-diagonals
    /// and zero row sums.
    pub fn from_rows(rows: &[Vec<f64>], alpha: f64) -> Result<Self> {
        let r = rows.len();
        if r < 2 || rows.iter().any(|row| row.len() != r) {
            return Err(Error::domain("q", "need a square matrix of size at least 2"));
        }
        let q: Vec<f64> = rows.iter().flatten().copied().collect();
        let g = GeneratorMatrix { q, r, alpha };
        for i in 0..r {
            for j in 0..r {
                if i != j && !(g.get(i, j) >= 0.0 && g.get(i, j).is_finite()) {
                    return Err(Error::domain("q", format!("off-diagonal ({i}, {j}) must be finite and nonnegative")));
                }
            }
            let scale = g.exit_rate(i).abs().max(f64::MIN_POSITIVE);
            if (g.row_sum(i) / scale).abs() > 1e-12 {
                return Err(Error::domain("q", format!("row {i} does not sum to zero")));
            }
        }
        Ok(g)
    }

    pub fn size(&self) -> usize {
        self.r
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.r + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.q[i * self.r..(i + 1) * self.r]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks_exact(self.r).map(<[f64]>::to_vec).collect()
    }

    /// `q_i = -q_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.get(i, i)
    }

    /// Diagonal plus off-diagonals accumulated in column order, which is how the
    /// diagonal is formed.
    pub fn row_sum(&self, i: usize) -> f64 {
        let off: f64 = (0..self.r).filter(|&j| j != i).map(|j| self.get(i, j)).sum();
        self.get(i, i) + off
    }

    /// Probability that a transition out of `i` lands in `j`.
    pub fn jump_probability(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.get(i, j) / self.exit_rate(i)
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    StandardStable::new(alpha).map(|_| ())
}

pub fn generator(landscape: &Landscape1D, alpha: f64) -> Result<GeneratorMatrix> {
    check_alpha(alpha)?;
    let r = landscape.wells();
    let term = |s: f64, m: f64| if s.is_finite() { (s - m).abs().powf(-alpha) } else { 0.0 };
    let mut q = vec![0.0; r * r];
    for i in 0..r {
        let m = landscape.minima[i];
        let mut total = 0.0;
        for j in (0..r).filter(|&j| j != i) {
            let v = (term(landscape.saddle(j), m) - term(landscape.saddle(j + 1), m)).abs() / alpha;
            q[i * r + j] = v;
            total += v;
        }
        q[i * r + i] = -total;
    }
    Ok(GeneratorMatrix { q, r, alpha })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDist {
    pub pi: Vec<f64>,
    /// `max_j |(Q^T pi)_j|`.
    pub residual: f64,
}

/// Solves `Q^T pi = 0`, `sum pi = 1` by LU on `Q^T` with its last row replaced by
/// ones.
pub fn stationary(q: &GeneratorMatrix) -> Result<StationaryDist> {
    let r = q.size();
    let mut a = DMatrix::from_fn(r, r, |i, j| q.get(j, i));
    a.row_mut(r - 1).fill(1.0);
    let mut b = DVector::zeros(r);
    b[r - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::IllPosed("generator has more than one stationary law".into()))?;
    let mut pi: Vec<f64> = x.iter().copied().collect();
    if pi.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return Err(Error::IllPosed(format!("stationary solve gave {pi:?}")));
    }
    for p in pi.iter_mut() {
        *p = p.max(0.0);
    }
    let residual = (0..r)
        .map(|j| (0..r).map(|i| q.get(i, j) * pi[i]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(Error::IllPosed(format!("stationary residual {residual:e} exceeds 1e-10")));
    }
    Ok(StationaryDist { pi, residual })
}

/// `(|m1|^alpha, m2^alpha) / (|m1|^alpha + m2^alpha)`.
pub fn double_well_pi(m1: f64, m2: f64, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if !(m1 < 0.0 && 0.0 < m2 && m1.is_finite() && m2.is_finite()) {
        return Err(Error::domain("minima", format!("need m1 < 0 < m2, got ({m1}, {m2})")));
    }
    let a = m1.abs().powf(alpha);
    let b = m2.powf(alpha);
    Ok((a / (a + b), b / (a + b)))
}

/// `c_alpha = Gamma(1 + alpha) sin(pi alpha / 2) / pi`: the unit SaS law with
/// characteristic function `exp(-|w|^alpha)` has Levy measure
/// `c_alpha dy / |y|^(1+alpha)`. Zero at `alpha = 2`.
pub fn levy_measure_constant(alpha: f64) -> f64 {
    if alpha == 2.0 {
        return 0.0;
    }
    gamma(1.0 + alpha) * (std::f64::consts::PI * alpha / 2.0).sin() / std::f64::consts::PI
}

/// Stopping rule for an exit replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ExitMode {
    /// First entry into the ball `|w - m_j| <= delta` of another minimum.
    #[default]
    Transition,
    /// First time `|w - m_i| > delta` for the starting minimum.
    FirstExit,
}

#[derive(Debug, Clone)]
pub struct ExitConfig {
    pub landscape: Landscape1D,
    pub alpha: f64,
    pub epsilon: f64,
    pub eta: f64,
    /// Zero-based index of the starting minimum.
    pub source: usize,
    /// `None` selects [`Landscape1D::default_delta`].
    pub delta: Option<f64>,
    pub reps: usize,
    /// Step budget per replica; longer replicas are censored.
    pub max_steps: u64,
    pub seed: u64,
    pub mode: ExitMode,
    pub drift: DriftMode,
}

impl ExitConfig {
    pub fn new(landscape: Landscape1D, alpha: f64, epsilon: f64, reps: usize, seed: u64) -> Self {
        ExitConfig {
            landscape,
            alpha,
            epsilon,
            eta: 1e-3,
            source: 0,
            delta: None,
            reps,
            max_steps: 100_000_000,
            seed,
            mode: ExitMode::default(),
            drift: DriftMode::default(),
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| self.landscape.default_delta())
    }

    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::domain("eta", format!("must be positive, got {}", self.eta)));
        }
        if self.source >= self.landscape.wells() {
            return Err(Error::domain("source", format!("no minimum with index {}", self.source)));
        }
        if self.reps == 0 {
            return Err(Error::domain("reps", "must be at least 1"));
        }
        if self.max_steps == 0 {
            return Err(Error::domain("max_steps", "must be at least 1"));
        }
        self.landscape.check_delta(self.delta())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitSample {
    /// Exit time, or the budget `max_steps * eta` when censored.
    pub time: f64,
    /// Valley reached; for [`ExitMode::FirstExit`] the valley containing the
    /// state on leaving the ball, which may be the source.
    pub destination: Option<usize>,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitStats {
    pub alpha: f64,
    pub epsilon: f64,
    pub source: usize,
    pub delta: f64,
    pub mode: ExitMode,
    pub samples: Vec<ExitSample>,
}

impl ExitStats {
    pub fn uncensored_times(&self) -> Vec<f64> {
        self.samples.iter().filter(|s| !s.censored).map(|s| s.time).collect()
    }

    pub fn censored_count(&self) -> usize {
        self.samples.iter().filter(|s| s.censored).count()
    }

    /// Mean over uncensored replicas; `None` if all are censored.
    pub fn mean_time(&self) -> Option<f64> {
        let t = self.uncensored_times();
        (!t.is_empty()).then(|| crate::stats::mean(&t))
    }

    /// Mean with censored replicas counted at the budget: a lower bound on the
    /// true mean.
    pub fn mean_time_lower_bound(&self) -> f64 {
        crate::stats::mean(&self.samples.iter().map(|s| s.time).collect::<Vec<_>>())
    }
}

fn run_replica(cfg: &ExitConfig, potential: &CriticalPointPotential, delta: f64, seed: u64) -> Result<ExitSample> {
    let land = &cfg.landscape;
    let m0 = land.minima[cfg.source];
    let mut it = Integrator::new(potential, cfg.alpha, cfg.epsilon, cfg.eta, &[m0], seed, cfg.drift)?;
    for k in 1..=cfg.max_steps {
        let w = it.step()?[0];
        let hit = match cfg.mode {
            ExitMode::Transition => {
                let j = land.valley_of(w);
                (j != cfg.source && (w - land.minima[j]).abs() <= delta).then_some(j)
            }
            ExitMode::FirstExit => ((w - m0).abs() > delta).then(|| land.valley_of(w)),
        };
        if let Some(j) = hit {
            return Ok(ExitSample {
                time: k as f64 * cfg.eta,
                destination: Some(j),
                censored: false,
            });
        }
    }
    Ok(ExitSample {
        time: cfg.max_steps as f64 * cfg.eta,
        destination: None,
        censored: true,
    })
}

/// Runs `reps` independent replicas from the source minimum; replica `r` uses
/// seed `derive_seed(seed, [r])`.
pub fn exit_times(cfg: &ExitConfig) -> Result<ExitStats> {
    cfg.validate()?;
    let delta = cfg.delta();
    let potential = cfg.landscape.potential();
    let samples = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| run_replica(cfg, &potential, delta, derive_seed(cfg.seed, &[r])))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExitStats {
        alpha: cfg.alpha,
        epsilon: cfg.epsilon,
        source: cfg.source,
        delta,
        mode: cfg.mode,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DestinationRow {
    pub valley: usize,
    pub expected: f64,
    pub observed: f64,
    /// Normal-approximation 95% interval for the frequency around `expected`.
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitLawReport {
    pub n: usize,
    pub censored: usize,
    /// Exit rate `q_i` used for the bound `exp(-q_i u)`.
    pub rate: f64,
    /// `max_u (S_n(u) - exp(-q_i u))` over the recorded `u = eps^alpha T`.
    pub max_excess: f64,
    /// 95% DKW half-width `sqrt(ln(2 / 0.05) / (2 n))`.
    pub dkw_band: f64,
    pub destinations: Vec<DestinationRow>,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// 95% DKW half-width for `n` samples.
pub fn dkw_band(n: usize) -> f64 {
    ((2.0f64 / 0.05).ln() / (2.0 * n as f64)).sqrt()
}

/// Largest excess of the empirical survival function `S_n(u) = #{x >= u} / n`
/// over `exp(-rate u)`, evaluated at each uncensored sample. Censored values
/// count as surviving past every uncensored point.
pub fn survival_excess(uncensored: &[f64], censored: usize, rate: f64) -> f64 {
    let n = (uncensored.len() + censored) as f64;
    let mut xs = uncensored.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut worst = f64::NEG_INFINITY;
    let mut k = 0;
    while k < xs.len() {
        let u = xs[k];
        // Tied points share S_n(u), which counts all of them.
        let surv = (xs.len() - k + censored) as f64 / n;
        worst = worst.max(surv - (-rate * u).exp());
        while k < xs.len() && xs[k] == u {
            k += 1;
        }
    }
    worst
}

/// Compares exit samples with the limiting exit law of `q`: the survival bound
/// `P(eps^alpha T >= u) <= exp(-q_i u)` and the destination law `q_ij / q_i`.
/// Reports only; it asserts nothing.
pub fn exit_law_check(stats: &ExitStats, q: &GeneratorMatrix) -> Result<ExitLawReport> {
    if stats.samples.is_empty() {
        return Err(Error::Empty("exit samples"));
    }
    if stats.source >= q.size() {
        return Err(Error::domain("source", "not a state of the generator"));
    }
    let n = stats.samples.len();
    let censored = stats.censored_count();
    let needed = (0.9 * n as f64).ceil() as usize;
    if n - censored < needed {
        return Err(Error::InsufficientData {
            needed,
            got: n - censored,
        });
    }
    let i = stats.source;
    let rate = q.exit_rate(i);
    let scale = stats.epsilon.powf(stats.alpha);
    let scaled: Vec<f64> = stats.uncensored_times().iter().map(|t| t * scale).collect();
    let max_excess = survival_excess(&scaled, censored, rate);

    let hits: Vec<usize> = stats.samples.iter().filter_map(|s| s.destination).collect();
    let m = hits.len() as f64;
    let mut destinations = Vec::new();
    let mut chi_square = 0.0;
    for j in (0..q.size()).filter(|&j| j != i) {
        let p = q.jump_probability(i, j);
        let observed = hits.iter().filter(|&&h| h == j).count() as f64 / m;
        let half = 1.96 * (p * (1.0 - p) / m).sqrt();
        if p > 0.0 {
            chi_square += m * (observed - p).powi(2) / p;
        }
        destinations.push(DestinationRow {
            valley: j,
            expected: p,
            observed,
            lo: (p - half).max(0.0),
            hi: (p + half).min(1.0),
        });
    }
    let dof = destinations.iter().filter(|d| d.expected > 0.0).count().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        let chi = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
        1.0 - chi.cdf(chi_square)
    };
    Ok(ExitLawReport {
        n,
        censored,
        rate,
        max_excess,
        dkw_band: dkw_band(n),
        destinations,
        chi_square,
        dof,
        p_value,
    })
}

/// Fraction of integration steps spent in each valley along one trajectory of
/// `steps` steps started at minimum `start`.
#[allow(clippy::too_many_arguments)]
pub fn occupation(
    landscape: &Landscape1D,
    alpha: f64,
    epsilon: f64,
    eta: f64,
    steps: u64,
    start: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::domain("epsilon", format!("must be nonnegative, got {epsilon}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::domain("eta", format!("must be positive, got {eta}")));
    }
    if steps == 0 {
        return Err(Error::domain("steps", "must be at least 1"));
    }
    if start >= landscape.wells() {
        return Err(Error::domain("start", format!("no minimum with index {start}")));
    }
    let potential = landscape.potential();
    let mut it = Integrator::new(
        &potential,
        alpha,
        epsilon,
        eta,
        &[landscape.minima[start]],
        seed,
        DriftMode::default(),
    )?;
    let mut counts = vec![0u64; landscape.wells()];
    for _ in 0..steps {
        let w = it.step()?[0];
        counts[landscape.valley_of(w)] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / steps as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::distr::{Distribution, Uniform};

    fn well(m1: f64, m2: f64) -> Landscape1D {
        Landscape1D::double_well(m1, m2).unwrap()
    }

    #[test]
    fn landscape_validation() {
        assert!(Landscape1D::new(vec![0.0], vec![]).is_err());
        assert!(Landscape1D::new(vec![-1.0, 1.0], vec![]).is_err());
        assert!(Landscape1D::new(vec![-1.0, 1.0], vec![2.0]).is_err());
        assert!(Landscape1D::new(vec![1.0, -1.0], vec![0.0]).is_err());
        assert!(Landscape1D::double_well(0.5, 1.0).is_err());
        let l = Landscape1D::new(vec![-2.0, 0.5, 3.0], vec![-0.5, 1.5]).unwrap();
        assert_eq!(l.valley_of(-10.0), 0);
        assert_eq!(l.valley_of(0.0), 1);
        assert_eq!(l.valley_of(1.6), 2);
        assert_eq!(l.widths()[1], 2.0);
        assert!(l.widths()[0].is_infinite());
        assert!((l.default_delta() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn landscape_potential_has_its_critical_points() {
        let l = Landscape1D::new(vec![-2.0, 0.5, 3.0], vec![-0.5, 1.5]).unwrap();
        let f = l.potential();
        for m in l.minima() {
            assert_eq!(f.derivative(*m), 0.0);
            assert!(f.second_derivative(*m) > 0.0);
        }
        for s in l.saddles() {
            assert_eq!(f.derivative(*s), 0.0);
            assert!(f.second_derivative(*s) < 0.0);
        }
        assert!(l.basin_depths().iter().all(|h| *h > 0.0));
    }

    #[test]
    fn generator_examples() {
        let q = generator(&well(-1.0, 2.0), 1.0).unwrap();
        assert_eq!(q.rows(), vec![vec![-1.0, 1.0], vec![0.5, -0.5]]);
        for alpha in [0.5, 1.0, 1.7, 2.0] {
            let q = generator(&well(-1.0, 1.0), alpha).unwrap();
            assert!((q.get(0, 1) - 1.0 / alpha).abs() < 1e-15);
            assert_eq!(q.get(0, 1), q.get(1, 0));
        }
        assert!(generator(&well(-1.0, 1.0), 0.0).is_err());
        assert!(generator(&well(-1.0, 1.0), 2.1).is_err());
    }

    #[test]
    fn three_well_rates_by_hand() {
        let l = Landscape1D::new(vec![-2.0, 0.5, 3.0], vec![-0.5, 1.5]).unwrap();
        let a = 1.3;
        let q = generator(&l, a).unwrap();
        let p = |x: f64| x.powf(-a);
        assert!((q.get(0, 1) - (p(1.5) - p(3.5)) / a).abs() < 1e-15);
        assert!((q.get(0, 2) - p(3.5) / a).abs() < 1e-15);
        assert!((q.get(1, 0) - p(1.0) / a).abs() < 1e-15);
        assert!((q.get(1, 2) - p(1.0) / a).abs() < 1e-15);
        assert!((q.get(2, 1) - (p(1.5) - p(3.5)) / a).abs() < 1e-15);
        for i in 0..3 {
            assert_eq!(q.row_sum(i), 0.0);
        }
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary(&generator(&well(-1.0, 2.0), 1.0).unwrap()).unwrap().pi;
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-12 && (pi[1] - 2.0 / 3.0).abs() < 1e-12);
        let pi = stationary(&generator(&well(-1.0, 1.0), 1.4).unwrap()).unwrap().pi;
        assert!((pi[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_rejects_reducible_chain() {
        let q = GeneratorMatrix::from_rows(
            &[
                vec![-1.0, 1.0, 0.0, 0.0],
                vec![1.0, -1.0, 0.0, 0.0],
                vec![0.0, 0.0, -1.0, 1.0],
                vec![0.0, 0.0, 1.0, -1.0],
            ],
            1.0,
        )
        .unwrap();
        assert!(matches!(stationary(&q), Err(Error::IllPosed(_))));
        assert!(GeneratorMatrix::from_rows(&[vec![-1.0, 2.0], vec![1.0, -1.0]], 1.0).is_err());
        assert!(GeneratorMatrix::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0]], 1.0).is_err());
    }

    #[test]
    fn double_well_closed_form() {
        let (a, b) = double_well_pi(-1.0, 2.0, 1.0).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-15 && (b - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(double_well_pi(-1.0, 1.0, 0.7).unwrap(), (0.5, 0.5));
        let (a, b) = double_well_pi(-1.0, 3.0, 1.5).unwrap();
        assert!((b / a - 3f64.powf(1.5)).abs() < 1e-12);
        assert!((b / a - 5.196).abs() < 1e-3);
        assert!(double_well_pi(1.0, 2.0, 1.0).is_err());
        assert!(double_well_pi(-1.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn levy_constant_values() {
        assert!((levy_measure_constant(1.0) - 1.0 / std::f64::consts::PI).abs() < 1e-14);
        assert_eq!(levy_measure_constant(2.0), 0.0);
        // c_alpha ~ alpha / 2 as alpha -> 0.
        assert!((levy_measure_constant(1e-6) / 0.5e-6 - 1.0).abs() < 1e-5);
        let want = 1.329_340_388_179_137 * (0.75 * std::f64::consts::PI).sin() / std::f64::consts::PI;
        assert!((levy_measure_constant(1.5) - want).abs() < 1e-12);
    }

    #[test]
    fn survival_checker_on_exponential_samples() {
        let mut rng = seeded(4);
        let u = Uniform::new(0.0f64, 1.0).unwrap();
        let rate = 0.7;
        let xs: Vec<f64> = (0..5000).map(|_| -(1.0 - u.sample(&mut rng)).ln() / rate).collect();
        let e = survival_excess(&xs, 0, rate);
        assert!(e.abs() <= dkw_band(5000), "{e}");
        // A slower law breaks the bound.
        assert!(survival_excess(&xs, 0, 2.0 * rate) > 0.1);
    }

    #[test]
    fn exit_law_check_on_synthetic_stats() {
        let q = generator(&Landscape1D::new(vec![-2.0, 0.5, 3.0], vec![-0.5, 1.5]).unwrap(), 1.0).unwrap();
        let rate = q.exit_rate(1);
        let p0 = q.jump_probability(1, 0);
        let mut rng = seeded(11);
        let u = Uniform::new(0.0f64, 1.0).unwrap();
        let eps: f64 = 0.1;
        let samples = (0..4000)
            .map(|_| ExitSample {
                time: -(1.0 - u.sample(&mut rng)).ln() / rate / eps,
                destination: Some(if u.sample(&mut rng) < p0 { 0 } else { 2 }),
                censored: false,
            })
            .collect();
        let stats = ExitStats {
            alpha: 1.0,
            epsilon: eps,
            source: 1,
            delta: 0.1,
            mode: ExitMode::Transition,
            samples,
        };
        let rep = exit_law_check(&stats, &q).unwrap();
        assert!(rep.max_excess <= rep.dkw_band);
        assert_eq!(rep.dof, 1);
        assert!(rep.p_value > 0.001);
        for d in &rep.destinations {
            assert!(d.lo <= d.observed && d.observed <= d.hi, "{d:?}");
        }
    }

    #[test]
    fn exit_law_check_errors() {
        let q = generator(&well(-1.0, 2.0), 1.0).unwrap();
        let mut stats = ExitStats {
            alpha: 1.0,
            epsilon: 0.1,
            source: 0,
            delta: 0.1,
            mode: ExitMode::Transition,
            samples: vec![],
        };
        assert!(matches!(exit_law_check(&stats, &q), Err(Error::Empty(_))));
        stats.samples = vec![
            ExitSample {
                time: 1.0,
                destination: None,
                censored: true,
            };
            10
        ];
        assert!(matches!(exit_law_check(&stats, &q), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn exit_times_double_well_goes_to_other_well() {
        let mut cfg = ExitConfig::new(well(-1.0, 1.0), 1.0, 0.3, 20, 5);
        cfg.eta = 1e-2;
        let stats = exit_times(&cfg).unwrap();
        assert_eq!(stats.censored_count(), 0);
        for s in &stats.samples {
            assert!(s.time > 0.0);
            assert_eq!(s.destination, Some(1));
        }
        assert_eq!(stats, exit_times(&cfg).unwrap());

        cfg.mode = ExitMode::FirstExit;
        let first = exit_times(&cfg).unwrap();
        let trans = stats.mean_time().unwrap();
        assert!(first.mean_time().unwrap() < trans);
    }

    #[test]
    fn exit_times_censors_at_budget() {
        let mut cfg = ExitConfig::new(well(-1.0, 2.0), 2.0, 0.05, 3, 1);
        cfg.max_steps = 1000;
        let stats = exit_times(&cfg).unwrap();
        assert_eq!(stats.censored_count(), 3);
        assert_eq!(stats.mean_time(), None);
        assert!((stats.mean_time_lower_bound() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exit_config_validation() {
        let base = ExitConfig::new(well(-1.0, 2.0), 1.0, 0.1, 2, 0);
        let mut c = base.clone();
        c.delta = Some(1.0);
        assert!(matches!(exit_times(&c), Err(Error::Domain { field: "delta", .. })));
        let mut c = base.clone();
        c.source = 2;
        assert!(exit_times(&c).is_err());
        let mut c = base.clone();
        c.epsilon = 0.0;
        assert!(exit_times(&c).is_err());
        let mut c = base;
        c.reps = 0;
        assert!(exit_times(&c).is_err());
    }

    #[test]
    fn occupation_sums_to_one() {
        let f = occupation(&well(-1.0, 2.0), 1.0, 0.3, 1e-2, 10_000, 0, 3).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(f, occupation(&well(-1.0, 2.0), 1.0, 0.3, 1e-2, 10_000, 0, 3).unwrap());
        assert!(occupation(&well(-1.0, 2.0), 1.0, 0.3, 1e-2, 0, 0, 3).is_err());
        assert!(occupation(&well(-1.0, 2.0), 1.0, 0.3, 1e-2, 10, 5, 3).is_err());
    }

    #[test]
    fn noiseless_occupation_stays_put() {
        let f = occupation(&well(-1.0, 2.0), 1.5, 0.0, 1e-2, 1000, 1, 0).unwrap();
        assert_eq!(f, vec![0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn generator_rows_and_signs(
            gaps in proptest::collection::vec(0.1f64..3.0, 3..8),
            alpha in 0.1f64..=2.0,
            start in -5.0f64..5.0,
        ) {
            let mut pts = vec![start];
            for g in &gaps {
                pts.push(pts.last().unwrap() + g);
            }
            if pts.len() % 2 == 0 {
                pts.pop();
            }
            let minima: Vec<f64> = pts.iter().step_by(2).copied().collect();
            let saddles: Vec<f64> = pts.iter().skip(1).step_by(2).copied().collect();
            let l = Landscape1D::new(minima, saddles).unwrap();
            let q = generator(&l, alpha).unwrap();
            for i in 0..q.size() {
                prop_assert_eq!(q.row_sum(i), 0.0);
                for j in 0..q.size() {
                    if i != j {
                        prop_assert!(q.get(i, j) >= 0.0);
                    }
                }
            }
            let s = stationary(&q).unwrap();
            prop_assert!(s.residual <= 1e-10);
            prop_assert!((s.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn two_well_identities(m1 in -5.0f64..-0.05, m2 in 0.05f64..5.0, alpha in 0.1f64..=2.0) {
            let (a, b) = double_well_pi(m1, m2, alpha).unwrap();
            let pi = stationary(&generator(&well(m1, m2), alpha).unwrap()).unwrap().pi;
            prop_assert!((pi[0] - a).abs() < 1e-12 && (pi[1] - b).abs() < 1e-12);
            let ratio = (m2 / m1.abs()).powf(alpha);
            prop_assert!((b / a - ratio).abs() <= 1e-12 * ratio.max(1.0));
        }

        #[test]
        fn scale_covariance(c in 0.1f64..10.0, alpha in 0.2f64..=2.0) {
            let l = Landscape1D::new(vec![-2.0, 0.5, 3.0], vec![-0.5, 1.5]).unwrap();
            let scaled = Landscape1D::new(
                l.minima().iter().map(|x| c * x).collect(),
                l.saddles().iter().map(|x| c * x).collect(),
            ).unwrap();
            let (q, qs) = (generator(&l, alpha).unwrap(), generator(&scaled, alpha).unwrap());
            let f = c.powf(-alpha);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((qs.get(i, j) - f * q.get(i, j)).abs() <= 1e-12 * q.get(i, j).abs().max(1e-300) * 10.0);
                }
            }
            let (p, ps) = (stationary(&q).unwrap().pi, stationary(&qs).unwrap().pi);
            for i in 0..3 {
                prop_assert!((p[i] - ps[i]).abs() < 1e-12);
            }
        }
    }
}
