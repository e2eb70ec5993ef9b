//! Seeded generation of the elementary random increments.
//!
//! Every draw goes through an [`RngStream`], a ChaCha8 generator keyed by a
//! `(seed, stream)` pair. Replica `m` of a run uses stream `m`, so replicas can
//! be evaluated in any order or on any thread and still reproduce exactly.
//!
//! Heavy tails come from the Pareto law of the second kind,
//! `f(x) = a / (1 + x)^(a + 1)` on `x >= 0`, sampled by inverting its CDF.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// An independent, reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform variate on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// A fair random sign.
    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.rng.next_u32() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Pareto law of the second kind with tail `index`, multiplied by `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoLaw {
    index: f64,
    scale: f64,
}

impl ParetoLaw {
    pub fn new(index: f64, scale: f64) -> Result<Self> {
        if !(index > 0.0 && index.is_finite()) {
            return Err(Error::config("pareto.index", format!("must be > 0, got {index}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("pareto.scale", format!("must be > 0, got {scale}")));
        }
        Ok(Self { index, scale })
    }

    pub fn index(&self) -> f64 {
        self.index
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `F(x) = 1 - (1 + x/scale)^(-index)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - (1.0 + x / self.scale).powf(-self.index)
        }
    }

    /// Inverse-CDF draw, `scale * (u^(-1/index) - 1)`.
    ///
    /// Uses `u` directly as the survival probability, which makes the result
    /// strictly decreasing in `u`.
    #[inline]
    pub fn quantile_upper(&self, u: f64) -> f64 {
        self.scale * (u.powf(-1.0 / self.index) - 1.0)
    }
}

/// Maps `u` in (0, 1) to a Pareto variate.
pub fn pareto_sample(law: &ParetoLaw, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("uniform variate must lie in (0, 1), got {u}")));
    }
    Ok(law.quantile_upper(u))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::config("alpha", format!("must lie in (0, 2], got {alpha}")))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::config("beta", format!("must lie in (0, 1], got {beta}")))
    }
}

/// Symmetric heavy-tailed jump: `±Pareto(alpha)` for `alpha < 2`, standard
/// normal at `alpha = 2`.
pub fn symmetric_jump(alpha: f64, rng: &mut RngStream) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(symmetric_jump_unchecked(alpha, rng))
}

#[inline]
pub(crate) fn symmetric_jump_unchecked(alpha: f64, rng: &mut RngStream) -> f64 {
    if alpha == 2.0 {
        rng.standard_normal()
    } else {
        let u = rng.uniform();
        let s = rng.sign();
        s * (u.powf(-1.0 / alpha) - 1.0)
    }
}

/// Waiting time between events: `base_step * Pareto(beta)` for `beta < 1`,
/// exactly `base_step` at `beta = 1`.
pub fn waiting_time(beta: f64, base_step: f64, rng: &mut RngStream) -> Result<f64> {
    check_beta(beta)?;
    if !(base_step > 0.0 && base_step.is_finite()) {
        return Err(Error::config("base_step", format!("must be > 0, got {base_step}")));
    }
    Ok(waiting_time_unchecked(beta, base_step, rng))
}

#[inline]
pub(crate) fn waiting_time_unchecked(beta: f64, base_step: f64, rng: &mut RngStream) -> f64 {
    if beta == 1.0 {
        return base_step;
    }
    loop {
        let w = base_step * (rng.uniform().powf(-1.0 / beta) - 1.0);
        // u close to 1 rounds the variate to zero; event times must strictly increase.
        if w > 0.0 {
            return w;
        }
    }
}

/// `±1/sqrt(n)` with equal probability.
pub fn binomial_increment(n: u64, rng: &mut RngStream) -> Result<f64> {
    if n == 0 {
        return Err(Error::config("n", "steps per unit time must be >= 1"));
    }
    Ok(rng.sign() / (n as f64).sqrt())
}

/// Constant `c` in `1 - E[cos(k J)] ~ c |k|^alpha` as `k -> 0`, where `J` is
/// drawn by [`symmetric_jump`].
///
/// Scaling jumps by `(D / c)^(1/alpha)` makes the sum of unit-time jumps
/// converge to the stable process with generator `-D (-Laplacian)^(alpha/2)`.
pub fn stable_tail_constant(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(if alpha == 2.0 {
        0.5
    } else if alpha == 1.0 {
        PI / 2.0
    } else {
        gamma(1.0 - alpha) * (PI * alpha / 2.0).cos()
    })
}

/// Standard deviation of the Gaussian term that cancels the `k^2` part of the
/// small-`k` expansion of the Pareto jump's characteristic function.
///
/// `1 - E[cos(k J)] = c k^alpha + k^2 / ((alpha - 1)(alpha - 2)) + o(k^2)` for
/// `1 < alpha < 2`; the second term is negative and is the leading
/// discretisation bias of a Pareto-driven walk. Returns `None` outside
/// `1 < alpha < 2`, where there is no such term to cancel.
pub fn small_jump_compensation(alpha: f64) -> Option<f64> {
    if alpha > 1.0 && alpha < 2.0 {
        Some((2.0 / ((alpha - 1.0) * (2.0 - alpha))).sqrt())
    } else {
        None
    }
}
