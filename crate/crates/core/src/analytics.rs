//! Closed-form reference values.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// `B(a, b) = Γ(a)Γ(b)/Γ(a+b)` through log-gamma.
pub fn beta_function(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("beta function needs a, b > 0, got ({a}, {b})")));
    }
    Ok((ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp())
}

/// Fractional oscillator `H = D (-ħ²Δ)^{α/2} + q² |x|^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub alpha: f64,
    pub gamma: f64,
    pub d_alpha: f64,
    pub q: f64,
    pub level: u32,
    pub hbar: f64,
}

impl OscillatorParams {
    pub fn new(alpha: f64, gamma: f64, d_alpha: f64, q: f64, level: u32) -> Self {
        Self {
            alpha,
            gamma,
            d_alpha,
            q,
            level,
            hbar: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 2], got {}", self.alpha)));
        }
        for (name, v) in [("gamma", self.gamma), ("D_alpha", self.d_alpha), ("q", self.q), ("hbar", self.hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn exponent(&self) -> f64 {
        self.alpha * self.gamma / (self.alpha + self.gamma)
    }

    /// Energy scale at `q = 1`: the bracket of the level formula without the `q` factor.
    fn unit_bracket(&self) -> Result<f64> {
        let b = beta_function(1.0 / self.gamma, 1.0 / self.alpha + 1.0)?;
        Ok(PI * self.hbar * self.gamma * self.d_alpha.powf(1.0 / self.alpha) / (2.0 * b))
    }
}

/// Semiclassical level
/// `E_n = [π ħ γ D^{1/α} q^{2/γ} / (2 B(1/γ, 1/α + 1))]^{αγ/(α+γ)} (n + 1/2)^{αγ/(α+γ)}`.
///
/// Exact for `α = γ = 2`, where it reduces to `2 q √D (n + 1/2)`.
pub fn fho_energy(p: &OscillatorParams) -> Result<f64> {
    p.validate()?;
    let bracket = p.unit_bracket()? * p.q.powf(2.0 / p.gamma);
    let e = p.exponent();
    Ok(bracket.powf(e) * (p.level as f64 + 0.5).powf(e))
}

/// The `q` for which [`fho_energy`] returns `energy`; `p.q` is ignored.
pub fn oscillator_q_for_energy(p: &OscillatorParams, energy: f64) -> Result<f64> {
    if !(energy > 0.0) {
        return Err(Error::Domain(format!("oscillator energies are positive, got {energy}")));
    }
    let unit = OscillatorParams { q: 1.0, ..*p };
    let e1 = fho_energy(&unit)?;
    // E ∝ q^{2α/(α+γ)}
    Ok((energy / e1).powf((p.alpha + p.gamma) / (2.0 * p.alpha)))
}

/// Point interaction `-g δ(x)` under `D (-ħ²Δ)^{α/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaParams {
    pub alpha: f64,
    pub g: f64,
    pub d_alpha: f64,
    pub hbar: f64,
}

impl DeltaParams {
    pub fn new(alpha: f64, g: f64, d_alpha: f64) -> Self {
        Self {
            alpha,
            g,
            d_alpha,
            hbar: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(Error::Domain(format!(
                "the bound state needs alpha in (1, 2], got {}",
                self.alpha
            )));
        }
        for (name, v) in [("g", self.g), ("D_alpha", self.d_alpha), ("hbar", self.hbar)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn unit_scale(&self) -> f64 {
        1.0 / ((PI / self.alpha).sin() * self.alpha * self.hbar * self.d_alpha.powf(1.0 / self.alpha))
    }
}

/// Bound-state energy `-[g csc(π/α) / (α ħ D^{1/α})]^{α/(α-1)}`.
pub fn delta_energy(p: &DeltaParams) -> Result<f64> {
    p.validate()?;
    Ok(-(p.g * p.unit_scale()).powf(p.alpha / (p.alpha - 1.0)))
}

/// The strength `g` for which [`delta_energy`] returns `energy < 0`; `p.g` is ignored.
pub fn delta_strength_for_energy(p: &DeltaParams, energy: f64) -> Result<f64> {
    DeltaParams { g: 1.0, ..*p }.validate()?;
    if !(energy < 0.0 && energy.is_finite()) {
        return Err(Error::Domain(format!("bound-state energies are negative, got {energy}")));
    }
    Ok((-energy).powf((p.alpha - 1.0) / p.alpha) / p.unit_scale())
}

/// Fractal dimension `1 + β(1 - 1/α)` of CTRW paths.
pub fn ctrw_fractal_dimension(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1], got {beta}")));
    }
    Ok(1.0 + beta * (1.0 - 1.0 / alpha))
}
