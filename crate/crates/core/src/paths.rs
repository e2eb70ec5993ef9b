//! Trajectory generators for the three diffusion regimes.
//!
//! * [`generate_brownian`]: the fixed-grid binomial walk, `Δt = 1/n`,
//!   `Δx = ±sqrt(2D/n)` per coordinate.
//! * [`generate_ctrw`]: the continuous-time random walk
//!   `X(t) = X0 + sum_{k <= N(t)} ΔX_k` with Pareto waiting times and
//!   symmetric Pareto (or Gaussian) jumps.
//! * [`generate_drifted`]: the same increments plus an Euler drift
//!   `(∇φ/φ)(Y) Δt` steering the walk toward a trial density `φ²`.
//!
//! Paths are piecewise constant between events.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::TrialFunction;
use crate::sampling::{
    small_jump_compensation, stable_tail_constant, symmetric_jump_unchecked,
    waiting_time_unchecked, RngStream,
};

/// Space index `alpha` in (0, 2] and time index `beta` in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalIndices {
    alpha: f64,
    beta: f64,
}

impl FractionalIndices {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::config("walk.alpha", format!("must lie in (0, 2], got {alpha}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::config("walk.beta", format!("must lie in (0, 1], got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    /// Standard diffusion, `(2, 1)`.
    pub fn brownian() -> Self {
        Self {
            alpha: 2.0,
            beta: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Scaling exponent `beta / alpha` of the propagator `k(x / t^kappa)`.
    pub fn kappa(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn is_brownian(&self) -> bool {
        self.alpha == 2.0 && self.beta == 1.0
    }
}

/// How the jump of an event is tied to time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpScaling {
    /// Jump scale `(Δt_k)^(beta/alpha)` with the realised waiting time.
    #[default]
    PerEvent,
    /// Jump scale `(1/n)^(beta/alpha)` with the base step.
    BaseStep,
}

/// Which generator a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Binomial lattice walk for `(2, 1)`, CTRW otherwise.
    #[default]
    Auto,
    /// Binomial lattice walk; requires `(2, 1)`.
    Lattice,
    /// Continuous-time random walk (Gaussian jumps at `alpha = 2`).
    Ctrw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub indices: FractionalIndices,
    /// Total imaginary time `t`.
    pub horizon: f64,
    /// Steps per unit time `n`; the base step is `1/n`.
    pub steps_per_unit: u64,
    pub dimension: usize,
    pub start: Vec<f64>,
    /// `D_alpha` in `∂_t^beta ψ = D_alpha ∂^alpha ψ / ∂|x|^alpha`.
    pub diffusion: f64,
    pub jump_scaling: JumpScaling,
    /// Add the Gaussian term that cancels the O(k^2) bias of Pareto jumps
    /// (only acts for `1 < alpha < 2`).
    pub compensate_small_jumps: bool,
    pub generator: Generator,
}

impl WalkConfig {
    /// One-dimensional walk from the origin with `D_alpha = 1/2`.
    pub fn new(indices: FractionalIndices, horizon: f64, steps_per_unit: u64) -> Self {
        Self {
            indices,
            horizon,
            steps_per_unit,
            dimension: 1,
            start: vec![0.0],
            diffusion: 0.5,
            jump_scaling: JumpScaling::PerEvent,
            compensate_small_jumps: false,
            generator: Generator::Auto,
        }
    }

    pub fn with_generator(mut self, generator: Generator) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_diffusion(mut self, diffusion: f64) -> Self {
        self.diffusion = diffusion;
        self
    }

    pub fn with_start(mut self, start: Vec<f64>) -> Self {
        self.dimension = start.len();
        self.start = start;
        self
    }

    pub fn with_compensation(mut self, on: bool) -> Self {
        self.compensate_small_jumps = on;
        self
    }

    pub fn with_jump_scaling(mut self, scaling: JumpScaling) -> Self {
        self.jump_scaling = scaling;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn base_step(&self) -> f64 {
        1.0 / self.steps_per_unit as f64
    }

    /// Number of fixed-grid steps, `floor(n t)`.
    pub fn grid_steps(&self) -> u64 {
        (self.steps_per_unit as f64 * self.horizon * (1.0 + 1e-12)).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        // re-run the index checks in case the struct was deserialised
        FractionalIndices::new(self.indices.alpha, self.indices.beta)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("walk.t", format!("must be > 0, got {}", self.horizon)));
        }
        if self.steps_per_unit == 0 {
            return Err(Error::config("walk.n", "must be >= 1"));
        }
        if self.grid_steps() < 1 {
            return Err(Error::config("walk.n", "n * t must be >= 1"));
        }
        if self.dimension == 0 {
            return Err(Error::config("walk.d", "must be >= 1"));
        }
        if self.start.len() != self.dimension {
            return Err(Error::config(
                "walk.x0",
                format!("expected {} coordinates, got {}", self.dimension, self.start.len()),
            ));
        }
        if self.start.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("walk.x0", "coordinates must be finite"));
        }
        if !(self.diffusion > 0.0 && self.diffusion.is_finite()) {
            return Err(Error::config("walk.d_alpha", format!("must be > 0, got {}", self.diffusion)));
        }
        if self.dimension > 1 && self.indices.alpha != 2.0 {
            return Err(Error::Regime(format!(
                "dimension {} requires alpha = 2 (got {})",
                self.dimension, self.indices.alpha
            )));
        }
        if self.generator == Generator::Lattice && !self.indices.is_brownian() {
            return Err(Error::Regime(format!(
                "the lattice walk requires (alpha, beta) = (2, 1), got ({}, {})",
                self.indices.alpha, self.indices.beta
            )));
        }
        Ok(())
    }

    /// Multiplier turning a raw symmetric jump into a displacement per unit
    /// `(time)^(beta/alpha)`: `(D / c_alpha)^(1/alpha)`.
    pub fn jump_amplitude(&self) -> f64 {
        let alpha = self.indices.alpha;
        let c = stable_tail_constant(alpha).expect("alpha validated");
        (self.diffusion / c).powf(1.0 / alpha)
    }

    pub fn uses_lattice(&self) -> bool {
        match self.generator {
            Generator::Lattice => true,
            Generator::Ctrw => false,
            Generator::Auto => self.indices.is_brownian(),
        }
    }
}

/// Event list `(t_k, X(t_k))`, starting at `(0, x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dimension: usize,
    times: Vec<f64>,
    positions: Vec<f64>,
    terminal_time: f64,
}

impl Trajectory {
    pub fn new(start: &[f64], terminal_time: f64) -> Self {
        Self {
            dimension: start.len(),
            times: vec![0.0],
            positions: start.to_vec(),
            terminal_time,
        }
    }

    /// Builds a trajectory from explicit events; times must start at 0 and
    /// strictly increase up to `terminal_time`.
    pub fn from_events(
        dimension: usize,
        events: Vec<(f64, Vec<f64>)>,
        terminal_time: f64,
    ) -> Result<Self> {
        let Some((t0, _)) = events.first() else {
            return Err(Error::Domain("trajectory needs at least one event".into()));
        };
        if *t0 != 0.0 {
            return Err(Error::Domain(format!("first event must be at t = 0, got {t0}")));
        }
        let mut traj = Trajectory {
            dimension,
            times: Vec::with_capacity(events.len()),
            positions: Vec::with_capacity(events.len() * dimension),
            terminal_time,
        };
        for (t, x) in events {
            if x.len() != dimension {
                return Err(Error::Domain(format!(
                    "event at t = {t} has {} coordinates, expected {dimension}",
                    x.len()
                )));
            }
            if let Some(&last) = traj.times.last() {
                if t <= last {
                    return Err(Error::Domain(format!("event times must increase ({last} then {t})")));
                }
            }
            traj.times.push(t);
            traj.positions.extend_from_slice(&x);
        }
        if *traj.times.last().unwrap() > terminal_time {
            return Err(Error::Domain("last event lies beyond the terminal time".into()));
        }
        Ok(traj)
    }

    fn push(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.positions.extend_from_slice(x);
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn terminal_time(&self) -> f64 {
        self.terminal_time
    }

    /// Number of events, including the initial one.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn last_position(&self) -> &[f64] {
        self.position(self.len() - 1)
    }

    /// Jump count `N(t)` excluding the initial event.
    pub fn jumps(&self) -> usize {
        self.len() - 1
    }

    /// `(t_k, x_k)` pairs.
    pub fn events(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.times
            .iter()
            .copied()
            .zip(self.positions.chunks_exact(self.dimension))
    }

    /// Index of the last event with time `<= s`.
    fn event_index_at(&self, s: f64) -> usize {
        self.times.partition_point(|&t| t <= s) - 1
    }

    /// Position of the last event at or before `s`.
    pub fn position_at(&self, s: f64) -> Result<&[f64]> {
        if !(s >= 0.0 && s <= self.terminal_time) {
            return Err(Error::Domain(format!(
                "time {s} outside [0, {}]",
                self.terminal_time
            )));
        }
        Ok(self.position(self.event_index_at(s)))
    }

    /// First coordinate sampled at `points + 1` evenly spaced times on
    /// `[0, terminal_time]`.
    pub fn sample_grid(&self, points: usize) -> Vec<f64> {
        let h = self.terminal_time / points as f64;
        let mut out = Vec::with_capacity(points + 1);
        let mut k = 0;
        for i in 0..=points {
            let s = if i == points { self.terminal_time } else { i as f64 * h };
            while k + 1 < self.len() && self.times[k + 1] <= s {
                k += 1;
            }
            out.push(self.positions[k * self.dimension]);
        }
        out
    }

    /// Successive differences of [`Trajectory::sample_grid`]; `points` values.
    pub fn grid_increments(&self, points: usize) -> Vec<f64> {
        self.sample_grid(points).windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Writes `t,x1[,x2,...]`, one event per row. `comments` go first as `# ` lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "# terminal_time={}", self.terminal_time)?;
        write!(w, "t")?;
        for i in 1..=self.dimension {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for (t, x) in self.events() {
            write!(w, "{t}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parses the format written by [`Trajectory::write_csv`]. Without a
    /// `terminal_time` comment the last event time is used.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut terminal: Option<f64> = None;
        let mut header_seen = false;
        let mut dimension = 0;
        let mut events = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Domain(format!("read error: {e}")))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(v) = c.trim().strip_prefix("terminal_time=") {
                    terminal = Some(v.trim().parse().map_err(|_| {
                        Error::Domain(format!("bad terminal_time on line {}", lineno + 1))
                    })?);
                }
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols.first() != Some(&"t") || cols.len() < 2 {
                    return Err(Error::Domain(format!("expected header `t,x1,...`, got `{line}`")));
                }
                dimension = cols.len() - 1;
                header_seen = true;
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|_| Error::Domain(format!("bad number on line {}", lineno + 1)))?;
            if vals.len() != dimension + 1 {
                return Err(Error::Domain(format!("wrong column count on line {}", lineno + 1)));
            }
            events.push((vals[0], vals[1..].to_vec()));
        }
        let last = events
            .last()
            .map(|e| e.0)
            .ok_or_else(|| Error::Domain("trajectory file has no events".into()))?;
        Trajectory::from_events(dimension, events, terminal.unwrap_or(last))
    }
}

/// Incremental event generator shared by every walk.
///
/// Each call to [`Walk::advance`] produces the next event; positions are
/// available through [`Walk::position`]. Consumers that only need functionals
/// of the path (the estimators) never materialise a [`Trajectory`].
pub struct Walk<'a> {
    rng: &'a mut RngStream,
    trial: Option<&'a TrialFunction>,
    lattice: bool,
    beta: f64,
    alpha: f64,
    kappa: f64,
    steps_per_unit: f64,
    base: f64,
    base_scale: f64,
    amplitude: f64,
    lattice_step: f64,
    grid_steps: u64,
    horizon: f64,
    per_event: bool,
    compensation: Option<f64>,
    x: Vec<f64>,
    drift: Vec<f64>,
    t: f64,
    k: u64,
    finished: bool,
}

impl<'a> Walk<'a> {
    /// Validates `config` and positions the walker at `(0, x0)`.
    pub fn new(
        config: &WalkConfig,
        trial: Option<&'a TrialFunction>,
        rng: &'a mut RngStream,
    ) -> Result<Self> {
        config.validate()?;
        let lattice = config.uses_lattice();
        if !lattice && config.dimension != 1 && config.indices.alpha < 2.0 {
            return Err(Error::Regime("CTRW with alpha < 2 is one-dimensional".into()));
        }
        if let Some(trial) = trial {
            trial.validate()?;
            check_trial(trial, &config.start, rng)?;
        }
        let base = config.base_step();
        let kappa = config.indices.kappa();
        Ok(Self {
            rng,
            trial,
            lattice,
            beta: config.indices.beta,
            alpha: config.indices.alpha,
            kappa,
            steps_per_unit: config.steps_per_unit as f64,
            base,
            base_scale: base.powf(kappa),
            amplitude: config.jump_amplitude(),
            lattice_step: (2.0 * config.diffusion * base).sqrt(),
            grid_steps: config.grid_steps(),
            horizon: config.horizon,
            per_event: config.jump_scaling == JumpScaling::PerEvent,
            compensation: if config.compensate_small_jumps {
                small_jump_compensation(config.indices.alpha)
            } else {
                None
            },
            x: config.start.clone(),
            drift: vec![0.0; config.dimension],
            t: 0.0,
            k: 0,
            finished: false,
        })
    }

    /// Time of the current event.
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn position(&self) -> &[f64] {
        &self.x
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Moves to the next event. Returns `Ok(false)`, leaving the state
    /// untouched, once the next event would fall beyond the horizon.
    ///
    /// The new event time is never smaller than the previous one; it can be
    /// equal when a waiting time is below the resolution of `t`.
    #[inline]
    pub fn advance(&mut self) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        if self.lattice {
            if self.k >= self.grid_steps {
                self.finished = true;
                return Ok(false);
            }
            self.k += 1;
            let dt = self.base;
            if let Some(trial) = self.trial {
                trial.log_gradient(&self.x, &mut self.drift);
            }
            for (xi, bi) in self.x.iter_mut().zip(&self.drift) {
                *xi += bi * dt + self.lattice_step * self.rng.sign();
            }
            self.t = self.k as f64 / self.steps_per_unit;
        } else {
            let wait = waiting_time_unchecked(self.beta, self.base, self.rng);
            let t_next = if self.beta == 1.0 {
                (self.k + 1) as f64 / self.steps_per_unit
            } else {
                self.t + wait
            };
            if t_next > self.horizon * (1.0 + 1e-12) {
                self.finished = true;
                return Ok(false);
            }
            self.k += 1;
            let scale = self.amplitude
                * if self.per_event && self.beta != 1.0 {
                    wait.powf(self.kappa)
                } else {
                    self.base_scale
                };
            if let Some(trial) = self.trial {
                trial.log_gradient(&self.x, &mut self.drift);
            }
            for (xi, bi) in self.x.iter_mut().zip(&self.drift) {
                let mut jump = symmetric_jump_unchecked(self.alpha, self.rng);
                if let Some(sigma) = self.compensation {
                    jump += sigma * self.rng.standard_normal();
                }
                *xi += bi * wait + scale * jump;
            }
            self.t = t_next.min(self.horizon);
        }
        if let Some(trial) = self.trial {
            check_trial(trial, &self.x, self.rng)?;
        }
        Ok(true)
    }

    /// Runs the walk to the horizon and records every event.
    pub fn collect(mut self) -> Result<Trajectory> {
        let mut traj = Trajectory::new(&self.x, self.horizon);
        if self.beta == 1.0 {
            let steps = self.grid_steps as usize;
            traj.times.reserve(steps);
            traj.positions.reserve(steps * self.x.len());
        }
        while self.advance()? {
            if self.t > *traj.times.last().unwrap() {
                traj.push(self.t, &self.x);
            } else {
                let d = self.x.len();
                let last = traj.len() - 1;
                traj.positions[last * d..(last + 1) * d].copy_from_slice(&self.x);
            }
        }
        Ok(traj)
    }
}

/// Binomial lattice walk with `floor(n t)` steps of `±sqrt(2D/n)` per coordinate.
pub fn generate_brownian(config: &WalkConfig, rng: &mut RngStream) -> Result<Trajectory> {
    if !config.indices.is_brownian() {
        return Err(Error::Regime(format!(
            "the lattice walk requires (alpha, beta) = (2, 1), got ({}, {})",
            config.indices.alpha, config.indices.beta
        )));
    }
    let config = config.clone().with_generator(Generator::Lattice);
    Walk::new(&config, None, rng)?.collect()
}

/// Continuous-time random walk with jumps
/// `ΔX_k = (D/c_alpha)^(1/alpha) (Δt_k)^(beta/alpha) J_k`.
pub fn generate_ctrw(config: &WalkConfig, rng: &mut RngStream) -> Result<Trajectory> {
    let config = config.clone().with_generator(Generator::Ctrw);
    Walk::new(&config, None, rng)?.collect()
}

/// Dispatches on [`WalkConfig::generator`].
pub fn generate(config: &WalkConfig, rng: &mut RngStream) -> Result<Trajectory> {
    Walk::new(config, None, rng)?.collect()
}

/// Drifted walk `Y_k = Y_{k-1} + (∇φ/φ)(Y_{k-1}) Δt_k + ΔX_k`, whose
/// stationary density is `φ²` in the Brownian limit with `D = 1/2`.
pub fn generate_drifted(
    config: &WalkConfig,
    trial: &TrialFunction,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    Walk::new(config, Some(trial), rng)?.collect()
}

fn check_trial(trial: &TrialFunction, y: &[f64], rng: &RngStream) -> Result<()> {
    let phi = trial.phi(y);
    if phi > 0.0 && phi.is_finite() {
        Ok(())
    } else {
        Err(Error::TrialDomain {
            position: y[0],
            replica: rng.stream(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn endpoint_stats(config: &WalkConfig, reps: u64, seed: u64) -> (f64, f64) {
        let xs: Vec<f64> = (0..reps)
            .map(|m| {
                let mut rng = RngStream::new(seed, m);
                generate(config, &mut rng).unwrap().last_position()[0]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        (mean, var)
    }

    #[test]
    fn kappa_is_ratio() {
        let ix = FractionalIndices::new(1.5, 0.7).unwrap();
        assert_eq!(ix.kappa(), 0.7 / 1.5);
        assert_eq!(FractionalIndices::brownian().kappa(), 0.5);
        assert!(FractionalIndices::new(2.1, 1.0).is_err());
        assert!(FractionalIndices::new(1.0, 0.0).is_err());
    }

    #[test]
    fn brownian_moments() {
        let cfg = WalkConfig::new(FractionalIndices::brownian(), 1.0, 100);
        let (m, v) = endpoint_stats(&cfg, 10_000, 1);
        assert!(m.abs() < 0.03, "mean {m}");
        assert!((v - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn brownian_event_count_and_lattice() {
        let cfg = WalkConfig::new(FractionalIndices::brownian(), 1.0, 4).with_diffusion(0.7);
        let mut rng = RngStream::new(3, 0);
        let traj = generate_brownian(&cfg, &mut rng).unwrap();
        assert_eq!(traj.jumps(), 4);
        let unit = 0.5 * (2.0f64 * 0.7).sqrt();
        for (_, x) in traj.events() {
            let r = x[0] / unit;
            assert!((r - r.round()).abs() < 1e-12);
        }
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 1.0).unwrap(), 1.0, 4);
        assert!(matches!(generate_brownian(&cfg, &mut rng), Err(Error::Regime(_))));
    }

    #[test]
    fn ctrw_brownian_limit_variance() {
        let cfg = WalkConfig::new(FractionalIndices::brownian(), 1.0, 100).with_generator(Generator::Ctrw);
        let (m, v) = endpoint_stats(&cfg, 10_000, 2);
        assert!(m.abs() < 0.05);
        assert!((v - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn ctrw_and_lattice_agree_in_moments() {
        let lattice = WalkConfig::new(FractionalIndices::brownian(), 1.0, 100);
        let ctrw = lattice.clone().with_generator(Generator::Ctrw);
        let reps = 10_000u64;
        let (m1, v1) = endpoint_stats(&lattice, reps, 10);
        let (m2, v2) = endpoint_stats(&ctrw, reps, 20);
        let se_mean = ((v1 + v2) / reps as f64).sqrt();
        assert!((m1 - m2).abs() < 3.0 * se_mean);
        // Var of the sample variance for Gaussian data is 2 sigma^4 / (N - 1).
        let se_var = (2.0 * (v1 * v1 + v2 * v2) / (reps - 1) as f64).sqrt();
        assert!((v1 - v2).abs() < 3.0 * se_var, "{v1} vs {v2}");
    }

    #[test]
    fn levy_flight_endpoint_tail() {
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 1.0).unwrap(), 1.0, 100);
        let mut xs: Vec<f64> = (0..100_000)
            .map(|m| {
                let mut rng = RngStream::new(4, m);
                generate_ctrw(&cfg, &mut rng).unwrap().last_position()[0].abs()
            })
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // the jump amplitude is ~0.34, so probe the tail well above it
        let n = xs.len() as f64;
        let pts: Vec<(f64, f64)> = (0..=10)
            .map(|i| 3.0 * 100f64.powf(i as f64 / 10.0))
            .map(|x| {
                let above = xs.len() - xs.partition_point(|&v| v <= x);
                (x.ln(), (above as f64 / n).ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.5).abs() < 0.15, "slope {slope}");
    }

    #[test]
    fn subdiffusive_clock_has_fewer_events() {
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 0.7).unwrap(), 1.0, 100);
        let fewer = (0..1000)
            .filter(|&m| {
                let mut rng = RngStream::new(5, m);
                generate_ctrw(&cfg, &mut rng).unwrap().jumps() < 100
            })
            .count();
        assert_eq!(fewer, 1000);
    }

    #[test]
    fn event_times_strictly_increase() {
        for (a, b) in [(1.5, 0.7), (1.2, 0.3), (2.0, 0.9)] {
            let cfg = WalkConfig::new(FractionalIndices::new(a, b).unwrap(), 5.0, 50);
            for m in 0..200 {
                let mut rng = RngStream::new(6, m);
                let traj = generate_ctrw(&cfg, &mut rng).unwrap();
                assert_eq!(traj.time(0), 0.0);
                assert!(traj.times().windows(2).all(|w| w[1] > w[0]));
                assert!(*traj.times().last().unwrap() <= traj.terminal_time());
            }
        }
    }

    #[test]
    fn ctrw_rejects_multidimensional_levy() {
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 1.0).unwrap(), 1.0, 10)
            .with_start(vec![0.0, 0.0]);
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(generate_ctrw(&cfg, &mut rng), Err(Error::Regime(_))));
    }

    #[test]
    fn brownian_in_three_dimensions() {
        let cfg = WalkConfig::new(FractionalIndices::brownian(), 1.0, 100).with_start(vec![0.0; 3]);
        let reps = 4000;
        let mut sum_sq = 0.0;
        for m in 0..reps {
            let mut rng = RngStream::new(8, m);
            let traj = generate_brownian(&cfg, &mut rng).unwrap();
            sum_sq += traj.last_position().iter().map(|x| x * x).sum::<f64>();
        }
        // E|X(1)|^2 = 2 D d t = 3
        let mean_sq = sum_sq / reps as f64;
        assert!((mean_sq - 3.0).abs() < 0.15, "{mean_sq}");
    }

    #[test]
    fn determinism() {
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 0.7).unwrap(), 3.0, 100);
        let a = generate(&cfg, &mut RngStream::new(42, 7)).unwrap();
        let b = generate(&cfg, &mut RngStream::new(42, 7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn position_lookup() {
        let traj = Trajectory::from_events(1, vec![(0.0, vec![0.25]), (0.5, vec![1.0])], 1.0).unwrap();
        assert_eq!(traj.position_at(0.0).unwrap(), &[0.25]);
        assert_eq!(traj.position_at(0.49).unwrap(), &[0.25]);
        assert_eq!(traj.position_at(0.5).unwrap(), &[1.0]);
        assert_eq!(traj.position_at(1.0).unwrap(), traj.last_position());
        assert!(matches!(traj.position_at(1.01), Err(Error::Domain(_))));
        assert!(matches!(traj.position_at(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn drifted_first_step_from_origin_is_pure_jump() {
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 1.0).unwrap(), 1.0, 10);
        let trial = TrialFunction::gaussian(0.5, 0.5).unwrap();
        let drifted = generate_drifted(&cfg, &trial, &mut RngStream::new(1, 1)).unwrap();
        let plain = generate_ctrw(&cfg, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(drifted.position(1), plain.position(1));
    }

    #[test]
    fn drifted_with_flat_trial_matches_plain_walk() {
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 0.7).unwrap(), 2.0, 50);
        let flat = TrialFunction::constant(0.0);
        for m in 0..20 {
            let a = generate_drifted(&cfg, &flat, &mut RngStream::new(2, m)).unwrap();
            let b = generate_ctrw(&cfg, &mut RngStream::new(2, m)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn drifted_trial_domain_error() {
        // a very narrow trial underflows after the first few steps away from 0
        let cfg = WalkConfig::new(FractionalIndices::brownian(), 1.0, 100).with_start(vec![30.0]);
        let trial = TrialFunction::gaussian(1.0, 0.0).unwrap();
        let err = generate_drifted(&cfg, &trial, &mut RngStream::new(1, 9)).unwrap_err();
        assert!(matches!(err, Error::TrialDomain { replica: 9, .. }));
    }

    #[test]
    fn csv_roundtrip() {
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 0.7).unwrap(), 2.0, 50);
        let traj = generate(&cfg, &mut RngStream::new(3, 3)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, &["config={}".to_string()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(2).unwrap() == "t,x1");
        let back = Trajectory::read_csv(io::Cursor::new(buf)).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn grid_sampling_is_piecewise_constant() {
        let traj = Trajectory::from_events(1, vec![(0.0, vec![0.0]), (0.3, vec![1.0]), (0.7, vec![3.0])], 1.0)
            .unwrap();
        assert_eq!(traj.sample_grid(4), vec![0.0, 0.0, 1.0, 3.0, 3.0]);
        assert_eq!(traj.grid_increments(4), vec![0.0, 1.0, 2.0, 0.0]);
    }
}
