//! Symmetric alpha-stable (SaS) laws.
//!
//! `X ~ SaS(sigma)` with tail index `alpha` has characteristic function
//! `E[exp(i w X)] = exp(-|sigma w|^alpha)`. At `alpha = 2` this is `N(0, 2 sigma^2)`,
//! at `alpha = 1` the Cauchy law with scale `sigma`.
//!
//! Draws use the Chambers-Mallows-Stuck transform of a uniform angle
//! `V ~ U(-pi/2, pi/2)` and an independent `W ~ Exp(1)`:
//!
//! ```text
//! X = sin(alpha V) / cos(V)^(1/alpha) * (cos((1 - alpha) V) / W)^((1 - alpha) / alpha)
//! ```
//!
//! with the closed forms `tan V` at `alpha = 1` and `2 sin(V) sqrt(W)` at
//! `alpha = 2`. The transform is evaluated in log space, so the magnitude of a
//! draw is available as `ln|X|` even when `|X|` exceeds the `f64` range (which
//! happens routinely for `alpha` well below 1). Draws are produced at unit
//! scale and multiplied by `sigma`.

use std::f64::consts::{LN_2, PI};

use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableParams {
    alpha: f64,
    sigma: f64,
}

impl StableParams {
    /// Checks `0 < alpha <= 2` and `sigma > 0`.
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::domain("alpha", format!("must lie in (0, 2], got {alpha}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain("sigma", format!("must be positive, got {sigma}")));
        }
        Ok(StableParams { alpha, sigma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `alpha = 2`, i.e. the law is `N(0, 2 sigma^2)`.
    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }

    /// Closed-form characteristic function `exp(-|sigma omega|^alpha)`.
    pub fn char_fn(&self, omega: f64) -> f64 {
        (-(self.sigma * omega).abs().powf(self.alpha)).exp()
    }

    /// Whether `E|X|^r` is finite: `r < alpha`, or any finite `r` in the Gaussian case.
    pub fn moment_exists(&self, r: f64) -> Result<bool> {
        if !(r >= 0.0) {
            return Err(Error::domain("r", format!("moment order must be nonnegative, got {r}")));
        }
        if self.is_gaussian() {
            return Ok(r.is_finite());
        }
        Ok(r < self.alpha)
    }
}

pub fn validate_params(alpha: f64, sigma: f64) -> Result<StableParams> {
    StableParams::new(alpha, sigma)
}

/// Sign and log-magnitude of a draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub negative: bool,
    pub ln_abs: f64,
}

impl SignedLog {
    /// Converts to `f64`, saturating at `+-f64::MAX`.
    pub fn to_f64(self) -> f64 {
        let mag = self.ln_abs.exp().min(f64::MAX);
        if self.negative {
            -mag
        } else {
            mag
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Branch {
    Cauchy,
    Gaussian,
    General,
}

/// Unit-scale SaS sampler for a fixed tail index.
#[derive(Debug, Clone, Copy)]
pub struct StandardStable {
    alpha: f64,
    inv_alpha: f64,
    // (1 - alpha) / alpha
    tail_exp: f64,
    branch: Branch,
}

impl StandardStable {
    pub fn new(alpha: f64) -> Result<Self> {
        StableParams::new(alpha, 1.0)?;
        let branch = if alpha == 1.0 {
            Branch::Cauchy
        } else if alpha == 2.0 {
            Branch::Gaussian
        } else {
            Branch::General
        };
        Ok(StandardStable {
            alpha,
            inv_alpha: 1.0 / alpha,
            tail_exp: (1.0 - alpha) / alpha,
            branch,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn draw_log<R: Rng + ?Sized>(&self, rng: &mut R) -> SignedLog {
        // Open interval keeps V strictly inside (-pi/2, pi/2), so cos(V) > 0.
        let u: f64 = Open01.sample(rng);
        let v = PI * (u - 0.5);
        match self.branch {
            Branch::Cauchy => SignedLog {
                negative: v < 0.0,
                ln_abs: v.tan().abs().ln(),
            },
            Branch::Gaussian => {
                let w = exp1(rng);
                SignedLog {
                    negative: v < 0.0,
                    ln_abs: LN_2 + v.sin().abs().ln() + 0.5 * w.ln(),
                }
            }
            Branch::General => {
                let w = exp1(rng);
                let a = self.alpha;
                let ln_abs = (a * v).sin().abs().ln() - self.inv_alpha * v.cos().ln()
                    + self.tail_exp * (((1.0 - a) * v).cos().ln() - w.ln());
                SignedLog {
                    negative: v < 0.0,
                    ln_abs,
                }
            }
        }
    }
}

impl Distribution<f64> for StandardStable {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw_log(rng).to_f64()
    }
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    -u.ln()
}

/// `n` i.i.d. draws together with the parameters and seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    values: Vec<f64>,
    params: StableParams,
    seed: u64,
}

impl SampleBatch {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn params(&self) -> StableParams {
        self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws `n` values from `SaS(sigma)`. Every value is finite: magnitudes beyond
/// the `f64` range saturate at `f64::MAX`.
pub fn sample(params: StableParams, n: usize, seed: u64) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::Empty("sample size must be at least 1"));
    }
    let unit = StandardStable::new(params.alpha)?;
    let mut rng = seeded(seed);
    let sigma = params.sigma;
    let values = (0..n)
        .map(|_| (sigma * unit.sample(&mut rng)).clamp(-f64::MAX, f64::MAX))
        .collect();
    Ok(SampleBatch {
        values,
        params,
        seed,
    })
}

/// Sample mean of `cos(omega x)`; the imaginary part vanishes for symmetric laws.
pub fn empirical_char_fn(values: &[f64], omega: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("empirical characteristic function of an empty batch"));
    }
    Ok(values.iter().map(|x| (omega * x).cos()).sum::<f64>() / values.len() as f64)
}
