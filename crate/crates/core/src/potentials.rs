//! Time-independent potentials and the trial functions used for importance
//! sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the unit-mass bump regularising `δ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpShape {
    /// Height `1/(2w)` on `[-w, w]`.
    #[default]
    TopHat,
    /// Normal density with standard deviation `w`.
    Gaussian,
}

impl BumpShape {
    fn eval(self, r: f64, width: f64) -> f64 {
        match self {
            BumpShape::TopHat => {
                if r <= width {
                    0.5 / width
                } else {
                    0.0
                }
            }
            BumpShape::Gaussian => {
                let z = r / width;
                (-0.5 * z * z).exp() / (width * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }
}

/// A potential `V(x)`. Multi-dimensional arguments enter through `|x|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    Free,
    /// `q2 * |x|^gamma`; `gamma = 2` is the harmonic oscillator.
    PowerLaw { q2: f64, gamma: f64 },
    /// Attractive well `-(g/2) N_w(x)` with `N_w` a unit-mass bump of width `w`.
    DeltaWell {
        g: f64,
        width: f64,
        #[serde(default)]
        shape: BumpShape,
    },
    /// `V - e0 - (1/2) Δφ/φ` for a trial `φ`.
    Shifted {
        base: Box<Potential>,
        trial: TrialFunction,
    },
}

impl Potential {
    pub fn harmonic(q2: f64) -> Self {
        Potential::PowerLaw { q2, gamma: 2.0 }
    }

    pub fn delta_well(g: f64, width: f64) -> Self {
        Potential::DeltaWell {
            g,
            width,
            shape: BumpShape::TopHat,
        }
    }

    pub fn shifted(base: Potential, trial: TrialFunction) -> Self {
        Potential::Shifted {
            base: Box::new(base),
            trial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Free => Ok(()),
            Potential::PowerLaw { q2, gamma } => {
                if !(*q2 > 0.0 && q2.is_finite()) {
                    return Err(Error::config("potential.q2", format!("must be > 0, got {q2}")));
                }
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::config("potential.gamma", format!("must be > 0, got {gamma}")));
                }
                Ok(())
            }
            Potential::DeltaWell { g, width, .. } => {
                if !(*g > 0.0 && g.is_finite()) {
                    return Err(Error::config("potential.g", format!("must be > 0, got {g}")));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::config("potential.width", format!("must be > 0, got {width}")));
                }
                Ok(())
            }
            Potential::Shifted { base, trial } => {
                base.validate()?;
                trial.validate()
            }
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            Potential::Free => "free".into(),
            Potential::PowerLaw { q2, gamma } => format!("power-law(q2={q2},gamma={gamma})"),
            Potential::DeltaWell { g, width, shape } => {
                format!("delta-well(g={g},width={width},shape={shape:?})")
            }
            Potential::Shifted { base, trial } => format!("shifted({},{})", base.label(), trial.label()),
        }
    }

    /// Coefficient `s` of `-s δ(x)` in the idealised delta well, `g/2`.
    pub fn delta_strength(&self) -> Option<f64> {
        match self {
            Potential::DeltaWell { g, .. } => Some(0.5 * g),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::PowerLaw { q2, gamma } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if *gamma == 2.0 {
                    q2 * r2
                } else {
                    q2 * r2.sqrt().powf(*gamma)
                }
            }
            Potential::DeltaWell { g, width, shape } => {
                let r = if x.len() == 1 {
                    x[0].abs()
                } else {
                    x.iter().map(|v| v * v).sum::<f64>().sqrt()
                };
                -0.5 * g * shape.eval(r, *width)
            }
            Potential::Shifted { base, trial } => perturbed_potential(base, trial, x),
        }
    }
}

/// Free function form of [`Potential::eval`].
pub fn eval_potential(spec: &Potential, x: &[f64]) -> f64 {
    spec.eval(x)
}

/// `V_p(x) = V(x) - e0 - (1/2) Δφ(x)/φ(x)`.
pub fn perturbed_potential(v: &Potential, trial: &TrialFunction, x: &[f64]) -> f64 {
    v.eval(x) - trial.e0 - 0.5 * trial.curvature_ratio(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrialShape {
    /// `φ(x) = exp(-c |x|^2)`.
    Gaussian { c: f64 },
    /// `φ ≡ 1`: no drift, `V_p = V - e0`.
    Constant,
}

/// Positive trial function `φ0` with its trial energy `e0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialFunction {
    pub shape: TrialShape,
    pub e0: f64,
}

impl TrialFunction {
    pub fn gaussian(c: f64, e0: f64) -> Result<Self> {
        let t = Self {
            shape: TrialShape::Gaussian { c },
            e0,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn constant(e0: f64) -> Self {
        Self {
            shape: TrialShape::Constant,
            e0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let TrialShape::Gaussian { c } = self.shape {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("trial.c", format!("must be > 0, got {c}")));
            }
        }
        if !self.e0.is_finite() {
            return Err(Error::config("trial.e0", "must be finite"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.shape {
            TrialShape::Gaussian { c } => format!("gaussian(c={c},e0={})", self.e0),
            TrialShape::Constant => format!("constant(e0={})", self.e0),
        }
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        match self.shape {
            TrialShape::Gaussian { c } => (-c * x.iter().map(|v| v * v).sum::<f64>()).exp(),
            TrialShape::Constant => 1.0,
        }
    }

    /// Writes `∇φ/φ` at `x` into `out`.
    pub fn log_gradient(&self, x: &[f64], out: &mut [f64]) {
        match self.shape {
            TrialShape::Gaussian { c } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -2.0 * c * v;
                }
            }
            TrialShape::Constant => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }

    /// `Δφ/φ` at `x`.
    pub fn curvature_ratio(&self, x: &[f64]) -> f64 {
        match self.shape {
            TrialShape::Gaussian { c } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                4.0 * c * c * r2 - 2.0 * c * x.len() as f64
            }
            TrialShape::Constant => 0.0,
        }
    }
}

/// `φ(x) = exp(-c x^2)` with trial energy `e0`.
pub fn gaussian_trial(c: f64, e0: f64) -> Result<TrialFunction> {
    TrialFunction::gaussian(c, e0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_values() {
        let v = Potential::harmonic(0.5);
        assert_eq!(v.eval(&[2.0]), 2.0);
        let v = Potential::PowerLaw { q2: 1.0, gamma: 1.5 };
        assert!((v.eval(&[-4.0]) - 8.0).abs() < 1e-12);
        assert_eq!(Potential::Free.eval(&[3.7]), 0.0);
        // |x|^2 in three dimensions
        assert!((Potential::harmonic(0.5).eval(&[1.0, 2.0, 2.0]) - 4.5).abs() < 1e-15);
    }

    fn integrate(v: &Potential, lo: f64, hi: f64, steps: usize) -> f64 {
        let h = (hi - lo) / steps as f64;
        (0..steps).map(|i| v.eval(&[lo + (i as f64 + 0.5) * h])).sum::<f64>() * h
    }

    #[test]
    fn delta_well_mass() {
        for &w in &[0.5, 0.05, 0.001] {
            // midpoint rule on a grid aligned with the top-hat edges
            let v = Potential::delta_well(1.0, w);
            let mass = integrate(&v, -2.0 * w, 2.0 * w, 4000);
            assert!((mass + 0.5).abs() < 1e-6, "w={w}: {mass}");
            let v = Potential::DeltaWell {
                g: 1.0,
                width: w,
                shape: BumpShape::Gaussian,
            };
            let mass = integrate(&v, -12.0 * w, 12.0 * w, 24_000);
            assert!((mass + 0.5).abs() < 1e-6, "gaussian w={w}: {mass}");
        }
        assert_eq!(Potential::delta_well(3.0, 0.1).delta_strength(), Some(1.5));
    }

    #[test]
    fn potentials_are_even() {
        let trial = TrialFunction::gaussian(0.4, 0.1).unwrap();
        let specs = [
            Potential::Free,
            Potential::harmonic(0.7),
            Potential::PowerLaw { q2: 2.0, gamma: 0.5 },
            Potential::delta_well(2.0, 0.3),
            Potential::shifted(Potential::harmonic(0.5), trial),
        ];
        for v in &specs {
            for i in 0..50 {
                let x = 0.137 * i as f64;
                assert_eq!(v.eval(&[x]), v.eval(&[-x]), "{v:?} at {x}");
            }
        }
    }

    #[test]
    fn validation() {
        assert!(Potential::harmonic(0.0).validate().is_err());
        assert!(Potential::PowerLaw { q2: 1.0, gamma: -1.0 }.validate().is_err());
        assert!(Potential::delta_well(1.0, 0.0).validate().is_err());
        assert!(matches!(
            Potential::delta_well(-1.0, 0.1).validate(),
            Err(Error::Config { key, .. }) if key == "potential.g"
        ));
        assert!(gaussian_trial(0.0, 0.5).is_err());
    }

    #[test]
    fn perturbed_potential_examples() {
        let v = Potential::harmonic(0.5);
        let exact = gaussian_trial(0.5, 0.5).unwrap();
        for i in -40..=40 {
            let x = 0.25 * i as f64;
            assert!(perturbed_potential(&v, &exact, &[x]).abs() < 1e-12);
        }
        let shifted = gaussian_trial(0.5, 0.0).unwrap();
        assert!((perturbed_potential(&v, &shifted, &[0.0]) - 0.5).abs() < 1e-15);
        // (1/2 - 2c^2) x^2 + c - e0 at c = 0.4, x = 1
        let inexact = gaussian_trial(0.4, 0.0).unwrap();
        assert!((perturbed_potential(&v, &inexact, &[1.0]) - 0.58).abs() < 1e-12);
        let flat = TrialFunction::constant(0.25);
        assert!((perturbed_potential(&v, &flat, &[1.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gaussian_trial_derivatives() {
        let t = gaussian_trial(0.5, 0.0).unwrap();
        assert_eq!(t.curvature_ratio(&[0.0]), -1.0);
        let mut g = [0.0];
        t.log_gradient(&[1.0], &mut g);
        assert_eq!(g[0], -1.0);
    }

    #[test]
    fn curvature_matches_finite_differences() {
        let h = 1e-4;
        for &c in &[0.3, 0.5, 1.2] {
            let t = gaussian_trial(c, 0.0).unwrap();
            for &x in &[0.0, 0.3, 2.0, -1.7, 3.1] {
                let fd = (t.phi(&[x + h]) - 2.0 * t.phi(&[x]) + t.phi(&[x - h])) / (h * h) / t.phi(&[x]);
                let exact = t.curvature_ratio(&[x]);
                assert!(((fd - exact) / exact).abs() < 1e-4, "c={c} x={x}: {fd} vs {exact}");
                let fd1 = (t.phi(&[x + h]) - t.phi(&[x - h])) / (2.0 * h) / t.phi(&[x]);
                let mut g = [0.0];
                t.log_gradient(&[x], &mut g);
                assert!((fd1 - g[0]).abs() < 1e-6 * (1.0 + g[0].abs()));
            }
        }
    }
}
