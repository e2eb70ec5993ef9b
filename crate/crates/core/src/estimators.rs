//! Feynman-Kac functionals, energy extraction, densities and observables.
//!
//! Each replica `m` contributes a log weight `-∫_0^t V(X_m(s)) ds` at every
//! checkpoint. Weights stay in log space until they are accumulated, so deep
//! wells do not overflow. Accumulation goes through [`WeightAccumulator`],
//! whose merge is associative and commutative up to rounding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{Trajectory, Walk, WalkConfig};
use crate::potentials::{perturbed_potential, Potential, TrialFunction};
use crate::sampling::RngStream;

/// Replicas per work unit. Fixed so that sequential merging does not depend
/// on the thread count.
const CHUNK: u64 = 256;

/// Largest tolerated fraction of replicas with a non-finite action.
const MAX_FLAGGED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fk,
    Gfk,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fk => "fk",
            Method::Gfk => "gfk",
        }
    }
}

/// How partial sums from worker threads are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// Chunks are merged in replica order: bit-identical for a fixed seed.
    #[default]
    Sequential,
    /// Chunks are merged as they complete.
    Unordered,
}

/// A batch of independent replicas. Replica `m` draws from stream `m` of `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub walk: WalkConfig,
    pub n_rep: u64,
    pub seed: u64,
    pub merge: MergeMode,
}

impl Ensemble {
    pub fn new(walk: WalkConfig, n_rep: u64, seed: u64) -> Self {
        Self {
            walk,
            n_rep,
            seed,
            merge: MergeMode::Sequential,
        }
    }

    pub fn with_merge(mut self, merge: MergeMode) -> Self {
        self.merge = merge;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.walk.validate()?;
        if self.n_rep < 2 {
            return Err(Error::config("run.n_rep", format!("must be >= 2, got {}", self.n_rep)));
        }
        Ok(())
    }
}

/// `Σ_k V(x_k) (min(t_{k+1}, t) - t_k)` over the events of `traj` before `t`;
/// the last event is held until `t`.
pub fn path_action(traj: &Trajectory, v: &Potential, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= traj.terminal_time() * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "time {t} outside the trajectory span [0, {}]",
            traj.terminal_time()
        )));
    }
    let times = traj.times();
    let mut action = 0.0;
    for k in 0..traj.len() {
        if times[k] >= t {
            break;
        }
        let end = times.get(k + 1).map_or(t, |&s| s.min(t));
        action += v.eval(traj.position(k)) * (end - times[k]);
    }
    Ok(action)
}

/// `count` checkpoints spaced geometrically from `t/8` to `t`, preceded by 0.
pub fn geometric_checkpoints(t: f64, count: usize) -> Vec<f64> {
    let mut out = vec![0.0];
    if count == 1 {
        out.push(t);
    } else {
        let ratio = 8f64.powf(1.0 / (count - 1) as f64);
        out.extend((0..count).map(|i| {
            if i + 1 == count {
                t
            } else {
                t / 8.0 * ratio.powi(i as i32)
            }
        }));
    }
    out
}

/// `count + 1` equally spaced checkpoints on `[0, t]`.
pub fn uniform_checkpoints(t: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| t * i as f64 / count as f64).collect()
}

/// Endpoint of one replica with its log weight `ln Z_m(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEndpoint {
    /// First coordinate of `X_m(t)`.
    pub position: f64,
    pub log_weight: f64,
}

/// Streaming mean and covariance of replica weights at `K` checkpoints.
///
/// Column `i` is stored relative to a shift `exp(s_i)`; shifts only grow, so
/// stored values never exceed one in magnitude after a push.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAccumulator {
    count: u64,
    flagged: u64,
    shift: Vec<f64>,
    mean: Vec<f64>,
    /// Co-moment `Σ (w_i - mean_i)(w_j - mean_j)`, row-major `K x K`.
    comoment: Vec<f64>,
}

impl WeightAccumulator {
    pub fn new(checkpoints: usize) -> Self {
        Self {
            count: 0,
            flagged: 0,
            shift: vec![f64::NEG_INFINITY; checkpoints],
            mean: vec![0.0; checkpoints],
            comoment: vec![0.0; checkpoints * checkpoints],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn flagged(&self) -> u64 {
        self.flagged
    }

    /// Records a replica with non-finite action.
    pub fn flag(&mut self) {
        self.flagged += 1;
    }

    fn rescale(&mut self, shift: &[f64]) {
        let k = self.len();
        let factor: Vec<f64> = self
            .shift
            .iter()
            .zip(shift)
            .map(|(&old, &new)| if old == new { 1.0 } else { (old - new).exp() })
            .collect();
        if factor.iter().all(|&f| f == 1.0) {
            return;
        }
        for i in 0..k {
            self.mean[i] *= factor[i];
            for j in 0..k {
                self.comoment[i * k + j] *= factor[i] * factor[j];
            }
        }
        self.shift.copy_from_slice(shift);
    }

    /// Adds one replica given its log weights.
    pub fn push(&mut self, log_weights: &[f64]) {
        let mut single = WeightAccumulator {
            count: 1,
            flagged: 0,
            shift: log_weights.to_vec(),
            mean: vec![1.0; log_weights.len()],
            comoment: vec![0.0; log_weights.len() * log_weights.len()],
        };
        if self.count == 0 {
            single.flagged = self.flagged;
            *self = single;
        } else {
            self.merge(single);
        }
    }

    /// Combines two disjoint sets of replicas.
    pub fn merge(&mut self, mut other: WeightAccumulator) {
        assert_eq!(self.len(), other.len(), "checkpoint counts differ");
        self.flagged += other.flagged;
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            other.flagged = self.flagged;
            *self = other;
            return;
        }
        let shift: Vec<f64> = self.shift.iter().zip(&other.shift).map(|(a, b)| a.max(*b)).collect();
        self.rescale(&shift);
        other.rescale(&shift);
        let k = self.len();
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..k {
            for j in 0..k {
                self.comoment[i * k + j] +=
                    other.comoment[i * k + j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..k {
            self.mean[i] += delta[i] * nb / n;
        }
        self.count += other.count;
    }

    /// `ln` of the mean weight at checkpoint `i`.
    pub fn log_mean(&self, i: usize) -> f64 {
        self.mean[i].ln() + self.shift[i]
    }

    /// Population standard deviation of the weights at checkpoint `i`.
    pub fn weight_sd(&self, i: usize) -> f64 {
        let k = self.len();
        (self.comoment[i * k + i] / self.count as f64).max(0.0).sqrt() * self.shift[i].exp()
    }

    /// Covariance of `ln(mean weight)` between checkpoints, by the delta method.
    pub fn log_mean_covariance(&self) -> Vec<Vec<f64>> {
        let k = self.len();
        let n = self.count as f64;
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        self.comoment[i * k + j] / ((n - 1.0) * n * self.mean[i] * self.mean[j])
                    })
                    .collect()
            })
            .collect()
    }
}

/// Replica means of the path weights at a grid of checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub method: Method,
    /// Trial energy added back to the decay rate (0 for plain FK).
    pub e0: f64,
    pub times: Vec<f64>,
    /// `ln Z(t)` per checkpoint.
    pub log_z: Vec<f64>,
    /// Covariance of `ln Z` between checkpoints.
    pub log_z_cov: Vec<Vec<f64>>,
    /// Population standard deviation of the replica weights per checkpoint.
    pub weight_sd: Vec<f64>,
    /// Replicas that entered the averages.
    pub n_rep: u64,
    /// Replicas dropped for a non-finite action.
    pub flagged: u64,
}

impl FunctionalSeries {
    /// Series from externally supplied means and standard errors, taken as
    /// uncorrelated.
    pub fn from_values(
        method: Method,
        e0: f64,
        times: Vec<f64>,
        z_values: &[f64],
        z_stderr: &[f64],
        n_rep: u64,
    ) -> Result<Self> {
        if times.len() != z_values.len() || times.len() != z_stderr.len() {
            return Err(Error::Domain("times, values and errors differ in length".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("checkpoint times must increase".into()));
        }
        if let Some(z) = z_values.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
            return Err(Error::Domain(format!("Z must be positive and finite, got {z}")));
        }
        if n_rep < 2 {
            return Err(Error::config("run.n_rep", format!("must be >= 2, got {n_rep}")));
        }
        let k = times.len();
        let mut log_z_cov = vec![vec![0.0; k]; k];
        for i in 0..k {
            log_z_cov[i][i] = (z_stderr[i] / z_values[i]).powi(2);
        }
        Ok(Self {
            method,
            e0,
            times,
            log_z: z_values.iter().map(|z| z.ln()).collect(),
            log_z_cov,
            weight_sd: z_stderr.iter().map(|s| s * (n_rep as f64).sqrt()).collect(),
            n_rep,
            flagged: 0,
        })
    }

    fn from_accumulator(method: Method, e0: f64, times: Vec<f64>, acc: &WeightAccumulator) -> Self {
        Self {
            method,
            e0,
            log_z: (0..acc.len()).map(|i| acc.log_mean(i)).collect(),
            log_z_cov: acc.log_mean_covariance(),
            weight_sd: (0..acc.len()).map(|i| acc.weight_sd(i)).collect(),
            n_rep: acc.count(),
            flagged: acc.flagged(),
            times,
        }
    }

    pub fn z_values(&self) -> Vec<f64> {
        self.log_z.iter().map(|l| l.exp()).collect()
    }

    /// Standard error of `Z` per checkpoint.
    pub fn z_stderr(&self) -> Vec<f64> {
        self.log_z
            .iter()
            .enumerate()
            .map(|(i, l)| l.exp() * self.log_z_cov[i][i].max(0.0).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub value: f64,
    pub stderr: f64,
    pub fit_window: (f64, f64),
    pub method: Method,
}

/// Slope of `-ln Z(t)` against `t` over `window` (default `[t/2, t]`).
///
/// Weighted least squares with weights `1/var(ln Z)`; ordinary least squares
/// when some checkpoint has zero variance. The standard error propagates the
/// full checkpoint covariance through the fit, inflated by the reduced
/// chi-square when the data scatter more than their errors allow.
pub fn energy_from_decay(series: &FunctionalSeries, window: Option<(f64, f64)>) -> Result<EnergyEstimate> {
    let t_end = *series
        .times
        .last()
        .ok_or_else(|| Error::Fit("empty series".into()))?;
    let (lo, hi) = window.unwrap_or((0.5 * t_end, t_end));
    if !(lo < hi) {
        return Err(Error::Fit(format!("empty window [{lo}, {hi}]")));
    }
    let tol = 1e-9 * hi.abs().max(1.0);
    let idx: Vec<usize> = (0..series.times.len())
        .filter(|&i| series.times[i] >= lo - tol && series.times[i] <= hi + tol)
        .collect();
    if idx.len() < 3 {
        return Err(Error::Fit(format!(
            "{} checkpoints in [{lo}, {hi}], need at least 3",
            idx.len()
        )));
    }
    if let Some(&i) = idx.iter().find(|&&i| !series.log_z[i].is_finite()) {
        return Err(Error::Domain(format!(
            "Z({}) is not positive and finite",
            series.times[i]
        )));
    }
    let t: Vec<f64> = idx.iter().map(|&i| series.times[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| -series.log_z[i]).collect();
    let var: Vec<f64> = idx.iter().map(|&i| series.log_z_cov[i][i]).collect();
    let weighted = var.iter().all(|&v| v > 0.0 && v.is_finite());
    let w: Vec<f64> = if weighted {
        var.iter().map(|v| 1.0 / v).collect()
    } else {
        vec![1.0; t.len()]
    };

    let sw: f64 = w.iter().sum();
    let t_bar = w.iter().zip(&t).map(|(w, t)| w * t).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&t).map(|(w, t)| w * (t - t_bar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("window checkpoints are not distinct".into()));
    }
    // slope = Σ c_i y_i
    let c: Vec<f64> = w.iter().zip(&t).map(|(w, t)| w * (t - t_bar) / sxx).collect();
    let slope: f64 = c.iter().zip(&y).map(|(c, y)| c * y).sum();
    let y_bar = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let intercept = y_bar - slope * t_bar;

    let mut propagated = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            propagated += c[a] * c[b] * series.log_z_cov[i][j];
        }
    }
    let dof = (t.len() - 2) as f64;
    let ssr: f64 = w
        .iter()
        .zip(t.iter().zip(&y))
        .map(|(w, (t, y))| w * (y - intercept - slope * t).powi(2))
        .sum();
    let misfit = if weighted {
        (ssr / dof - 1.0).max(0.0) / sxx
    } else {
        ssr / dof / sxx
    };
    let stderr = (propagated.max(0.0) + misfit).sqrt();
    let value = match series.method {
        Method::Fk => slope,
        Method::Gfk => slope + series.e0,
    };
    Ok(EnergyEstimate {
        value,
        stderr,
        fit_window: (lo, hi),
        method: series.method,
    })
}

/// Output of one ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    pub series: FunctionalSeries,
    /// Endpoints at the horizon in replica order; empty unless requested.
    pub endpoints: Vec<WeightedEndpoint>,
}

struct ChunkResult {
    acc: WeightAccumulator,
    endpoints: Vec<WeightedEndpoint>,
}

impl ChunkResult {
    fn join(mut self, other: ChunkResult) -> ChunkResult {
        self.acc.merge(other.acc);
        self.endpoints.extend(other.endpoints);
        self
    }
}

/// Runs `ensemble` and accumulates `exp(-∫ U(X(s)) ds)` at `checkpoints`,
/// where `U = V` for FK and `U = V_p` for GFK along drifted paths.
///
/// Checkpoint 0 is inserted when missing. GFK requires `D = 1/2`, the
/// normalisation in which the drift `∇φ/φ` has stationary law `φ²`.
pub fn simulate(
    ensemble: &Ensemble,
    potential: &Potential,
    trial: Option<&TrialFunction>,
    checkpoints: &[f64],
    keep_endpoints: bool,
) -> Result<EnsembleRun> {
    ensemble.validate()?;
    potential.validate()?;
    let horizon = ensemble.walk.horizon;
    let mut times = checkpoints.to_vec();
    if times.first() != Some(&0.0) {
        times.insert(0, 0.0);
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("run.checkpoints", "must be strictly increasing"));
    }
    if times.iter().any(|&t| !(t >= 0.0 && t <= horizon * (1.0 + 1e-12))) {
        return Err(Error::config("run.checkpoints", format!("must lie in [0, {horizon}]")));
    }
    let method = match trial {
        Some(trial) => {
            trial.validate()?;
            if (ensemble.walk.diffusion - 0.5).abs() > 1e-12 {
                return Err(Error::config(
                    "walk.d_alpha",
                    "importance sampling is defined for D = 1/2",
                ));
            }
            Method::Gfk
        }
        None => Method::Fk,
    };
    let u = |x: &[f64]| match trial {
        Some(tr) => perturbed_potential(potential, tr, x),
        None => potential.eval(x),
    };

    let run_chunk = |c: u64| -> Result<ChunkResult> {
        let first = c * CHUNK;
        let last = (first + CHUNK).min(ensemble.n_rep);
        let mut acc = WeightAccumulator::new(times.len());
        let mut endpoints = Vec::with_capacity(if keep_endpoints { (last - first) as usize } else { 0 });
        let mut logs = vec![0.0; times.len()];
        for m in first..last {
            let mut rng = RngStream::new(ensemble.seed, m);
            let mut walk = Walk::new(&ensemble.walk, trial, &mut rng)?;
            let mut action = 0.0;
            let mut t_prev = 0.0;
            let mut v_prev = u(walk.position());
            let mut next = 0;
            loop {
                let more = walk.advance()?;
                let t_next = if more { walk.time() } else { horizon };
                while next < times.len() && times[next] <= t_next {
                    logs[next] = -(action + v_prev * (times[next] - t_prev));
                    next += 1;
                }
                if !more {
                    break;
                }
                action += v_prev * (t_next - t_prev);
                t_prev = t_next;
                v_prev = u(walk.position());
            }
            for l in logs[next..].iter_mut() {
                *l = -(action + v_prev * (horizon - t_prev));
            }
            if logs.iter().all(|l| l.is_finite()) {
                acc.push(&logs);
                if keep_endpoints {
                    endpoints.push(WeightedEndpoint {
                        position: walk.position()[0],
                        log_weight: -(action + v_prev * (horizon - t_prev)),
                    });
                }
            } else {
                acc.flag();
            }
        }
        Ok(ChunkResult { acc, endpoints })
    };

    let chunks = ensemble.n_rep.div_ceil(CHUNK);
    let empty = || ChunkResult {
        acc: WeightAccumulator::new(times.len()),
        endpoints: Vec::new(),
    };
    let total = match ensemble.merge {
        MergeMode::Sequential => {
            let parts: Vec<Result<ChunkResult>> = (0..chunks).into_par_iter().map(run_chunk).collect();
            let mut total = empty();
            for part in parts {
                total = total.join(part?);
            }
            total
        }
        MergeMode::Unordered => (0..chunks)
            .into_par_iter()
            .map(run_chunk)
            .try_reduce(empty, |a, b| Ok(a.join(b)))?,
    };

    let flagged = total.acc.flagged();
    if flagged as f64 > MAX_FLAGGED_FRACTION * ensemble.n_rep as f64 {
        return Err(Error::Numerical(format!(
            "{flagged} of {} replicas produced a non-finite action",
            ensemble.n_rep
        )));
    }
    if total.acc.count() < 2 {
        return Err(Error::Numerical("fewer than two usable replicas".into()));
    }
    let e0 = trial.map_or(0.0, |t| t.e0);
    Ok(EnsembleRun {
        series: FunctionalSeries::from_accumulator(method, e0, times, &total.acc),
        endpoints: total.endpoints,
    })
}

/// `Z(t) = E[exp(-∫_0^t V(X(s)) ds)]` at each checkpoint.
pub fn fk_functional(ensemble: &Ensemble, potential: &Potential, checkpoints: &[f64]) -> Result<FunctionalSeries> {
    Ok(simulate(ensemble, potential, None, checkpoints, false)?.series)
}

/// Importance-sampled functional over drifted paths with the perturbed
/// potential `V - e0 - (1/2) Δφ/φ`.
pub fn gfk_functional(
    ensemble: &Ensemble,
    potential: &Potential,
    trial: &TrialFunction,
    checkpoints: &[f64],
) -> Result<FunctionalSeries> {
    Ok(simulate(ensemble, potential, Some(trial), checkpoints, false)?.series)
}

/// Histogram with values per unit length: `Σ mass_b (edge_{b+1} - edge_b) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl DensityHistogram {
    pub fn width(&self, b: usize) -> f64 {
        self.edges[b + 1] - self.edges[b]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Largest bin value.
    pub fn peak(&self) -> f64 {
        self.mass.iter().cloned().fold(0.0, f64::max)
    }

    /// Inverse of the piecewise-linear cumulative distribution.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for b in 0..self.mass.len() {
            let m = self.mass[b] * self.width(b);
            if acc + m >= p && m > 0.0 {
                return self.edges[b] + (p - acc) / m * self.width(b);
            }
            acc += m;
        }
        *self.edges.last().unwrap()
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    /// Mass with `|x| > threshold`; partially covered bins count pro rata.
    pub fn tail_mass(&self, threshold: f64) -> f64 {
        (0..self.mass.len())
            .map(|b| {
                let (l, r) = (self.edges[b], self.edges[b + 1]);
                let outside = (r.min(-threshold) - l).max(0.0) + (r - l.max(threshold)).max(0.0);
                self.mass[b] * outside.min(r - l)
            })
            .sum()
    }

    /// CSV with header `x_left,x_right,mass`, preceded by `# ` comment lines.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "x_left,x_right,mass")?;
        for b in 0..self.mass.len() {
            writeln!(w, "{},{},{}", self.edges[b], self.edges[b + 1], self.mass[b])?;
        }
        Ok(())
    }
}

/// Both readings of the weighted endpoint histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// Weighted endpoint histogram, an estimate of `ψ(x, t)` up to normalisation.
    pub amplitude: DensityHistogram,
    /// Normalised square of `amplitude`, the probability density `|ψ|²`.
    pub density: DensityHistogram,
}

/// `count` equal bins on `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect()
}

/// Bins endpoints with weights `Z_m(t)`. Endpoints outside the edges are
/// ignored; normalisation is over the binned range.
pub fn density_estimate(endpoints: &[WeightedEndpoint], edges: &[f64]) -> Result<DensityEstimate> {
    if edges.len() < 2 || edges.windows(2).any(|e| !(e[1] > e[0])) {
        return Err(Error::config("edges", "need at least two strictly increasing edges"));
    }
    if endpoints.iter().any(|e| e.log_weight.is_nan() || e.log_weight == f64::INFINITY) {
        return Err(Error::Domain("weights must be finite and non-negative".into()));
    }
    let bins = edges.len() - 1;
    let lo = edges[0];
    let hi = edges[bins];
    let in_range = |x: f64| x >= lo && x < hi;
    let shift = endpoints
        .iter()
        .filter(|e| in_range(e.position))
        .map(|e| e.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::Degenerate("no weight inside the histogram range".into()));
    }
    let mut sum = vec![0.0; bins];
    let mut located = Vec::with_capacity(endpoints.len());
    for e in endpoints.iter().filter(|e| in_range(e.position)) {
        let b = edges.partition_point(|&edge| edge <= e.position) - 1;
        let w = (e.log_weight - shift).exp();
        sum[b] += w;
        located.push((b, w));
    }
    let total: f64 = sum.iter().sum();
    let p: Vec<f64> = sum.iter().map(|s| s / total).collect();
    // delta-method variance of the ratio Σ w 1_b / Σ w
    let mut var = vec![0.0; bins];
    let mut sum_sq = 0.0;
    for &(b, w) in &located {
        var[b] += w * w * (1.0 - 2.0 * p[b]);
        sum_sq += w * w;
    }
    for b in 0..bins {
        var[b] = (var[b] + p[b] * p[b] * sum_sq) / (total * total);
    }
    let width: Vec<f64> = edges.windows(2).map(|e| e[1] - e[0]).collect();
    let amp: Vec<f64> = (0..bins).map(|b| p[b] / width[b]).collect();
    let amp_err: Vec<f64> = (0..bins).map(|b| var[b].max(0.0).sqrt() / width[b]).collect();
    let norm: f64 = (0..bins).map(|b| amp[b] * amp[b] * width[b]).sum();
    let density = DensityHistogram {
        edges: edges.to_vec(),
        mass: amp.iter().map(|a| a * a / norm).collect(),
        stderr: (0..bins).map(|b| 2.0 * amp[b] * amp_err[b] / norm).collect(),
    };
    Ok(DensityEstimate {
        amplitude: DensityHistogram {
            edges: edges.to_vec(),
            mass: amp,
            stderr: amp_err,
        },
        density,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub stderr: f64,
}

/// `Σ A(Y_m) Z_m / Σ Z_m` with a delta-method standard error.
pub fn observable_expectation<A: Fn(f64) -> f64>(a: A, endpoints: &[WeightedEndpoint]) -> Result<Expectation> {
    let shift = endpoints
        .iter()
        .map(|e| e.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::Degenerate("total weight is zero".into()));
    }
    let w: Vec<f64> = endpoints.iter().map(|e| (e.log_weight - shift).exp()).collect();
    let a_vals: Vec<f64> = endpoints.iter().map(|e| a(e.position)).collect();
    let total: f64 = w.iter().sum();
    let value = w.iter().zip(&a_vals).map(|(w, a)| w * a).sum::<f64>() / total;
    let var = w
        .iter()
        .zip(&a_vals)
        .map(|(w, a)| (w * (a - value)).powi(2))
        .sum::<f64>()
        / (total * total);
    Ok(Expectation {
        value,
        stderr: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{FractionalIndices, Generator};
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn brownian(t: f64, n: u64) -> WalkConfig {
        WalkConfig::new(FractionalIndices::brownian(), t, n)
    }

    fn phi(x: f64) -> f64 {
        Normal::new(0.0, 1.0).unwrap().cdf(x)
    }

    #[test]
    fn action_of_hand_built_paths() {
        let traj = Trajectory::from_events(1, vec![(0.0, vec![1.0])], 1.0).unwrap();
        let v = Potential::PowerLaw { q2: 1.0, gamma: 2.0 };
        assert_eq!(path_action(&traj, &v, 1.0).unwrap(), 1.0);
        assert_eq!(path_action(&traj, &Potential::Free, 1.0).unwrap(), 0.0);

        let traj = Trajectory::from_events(1, vec![(0.0, vec![1.0]), (0.25, vec![2.0]), (0.5, vec![0.0])], 1.0)
            .unwrap();
        // 1 * 0.25 + 4 * 0.25 + 0 * 0.5
        assert!((path_action(&traj, &v, 1.0).unwrap() - 1.25).abs() < 1e-15);
        assert!((path_action(&traj, &v, 0.4).unwrap() - (0.25 + 4.0 * 0.15)).abs() < 1e-15);
        assert!(matches!(path_action(&traj, &v, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn free_series_is_exactly_one() {
        let ens = Ensemble::new(brownian(2.0, 50), 100, 1);
        let s = fk_functional(&ens, &Potential::Free, &geometric_checkpoints(2.0, 8)).unwrap();
        assert!(s.z_values().iter().all(|&z| z == 1.0));
        assert!(s.z_stderr().iter().all(|&e| e == 0.0));
        let e = energy_from_decay(&s, None).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn streamed_action_matches_trajectory_action() {
        let v = Potential::harmonic(0.5);
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 0.7).unwrap(), 3.0, 20);
        let cps = [0.0, 0.7, 1.9, 3.0];
        let ens = Ensemble::new(cfg.clone(), 2, 5);
        let run = simulate(&ens, &v, None, &cps, true).unwrap();
        let mut acc = WeightAccumulator::new(cps.len());
        for m in 0..2 {
            let traj = crate::paths::generate(&cfg, &mut RngStream::new(5, m)).unwrap();
            let logs: Vec<f64> = cps.iter().map(|&t| -path_action(&traj, &v, t).unwrap()).collect();
            assert!((run.endpoints[m as usize].position - traj.last_position()[0]).abs() < 1e-12);
            assert!((run.endpoints[m as usize].log_weight - logs[3]).abs() < 1e-9);
            acc.push(&logs);
        }
        for i in 0..cps.len() {
            assert!((run.series.log_z[i] - acc.log_mean(i)).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_potential_decays_exactly() {
        let v = Potential::shifted(Potential::Free, TrialFunction::constant(-0.3));
        let cfg = WalkConfig::new(FractionalIndices::new(1.2, 0.6).unwrap(), 4.0, 10);
        let s = fk_functional(&Ensemble::new(cfg, 50, 2), &v, &geometric_checkpoints(4.0, 8)).unwrap();
        for (t, l) in s.times.iter().zip(&s.log_z) {
            assert!((l + 0.3 * t).abs() < 1e-9, "t={t} ln Z={l}");
        }
    }

    #[test]
    fn brownian_oscillator_matches_exact_partition_function() {
        // E[exp(-∫ x²/2)] from x = 0 with D = 1/2 is (cosh t)^(-1/2)
        let cps = [0.0, 0.5, 1.0, 2.0, 3.0];
        let ens = Ensemble::new(brownian(3.0, 400), 20_000, 11);
        let s = fk_functional(&ens, &Potential::harmonic(0.5), &cps).unwrap();
        let z = s.z_values();
        let err = s.z_stderr();
        for i in 1..cps.len() {
            let exact = cps[i].cosh().powf(-0.5);
            let bias = 0.01 * exact;
            assert!(
                (z[i] - exact).abs() < 4.0 * err[i] + bias,
                "t={} z={} exact={exact} se={}",
                cps[i],
                z[i],
                err[i]
            );
        }
    }

    #[test]
    fn delta_well_matches_exact_partition_function() {
        // E[exp(∫ δ(X_s) ds)] for standard Brownian motion is 2 e^{t/2} Φ(√t)
        let cps = [0.0, 0.5, 1.0];
        let cfg = brownian(1.0, 2000).with_generator(Generator::Ctrw);
        let ens = Ensemble::new(cfg, 20_000, 4);
        let s = fk_functional(&ens, &Potential::delta_well(2.0, 0.01), &cps).unwrap();
        let z = s.z_values();
        let err = s.z_stderr();
        for i in 1..cps.len() {
            let t: f64 = cps[i];
            let exact = 2.0 * (0.5 * t).exp() * phi(t.sqrt());
            assert!((z[i] - exact).abs() < 4.0 * err[i] + 0.02 * exact, "t={t} z={} exact={exact}", z[i]);
        }
    }

    #[test]
    fn exact_exponential_gives_exact_slope() {
        let times = vec![2.0, 4.0, 6.0, 8.0];
        let z: Vec<f64> = times.iter().map(|t: &f64| (-0.5 * t).exp()).collect();
        let s = FunctionalSeries::from_values(Method::Fk, 0.0, times, &z, &[0.0; 4], 10).unwrap();
        let e = energy_from_decay(&s, Some((2.0, 8.0))).unwrap();
        assert!((e.value - 0.5).abs() < 1e-12);
        assert!(e.stderr < 1e-12);
    }

    #[test]
    fn fit_errors() {
        let times = vec![1.0, 2.0, 3.0];
        let s = FunctionalSeries::from_values(Method::Fk, 0.0, times.clone(), &[0.9, 0.8, 0.7], &[0.0; 3], 10)
            .unwrap();
        assert!(matches!(energy_from_decay(&s, Some((1.5, 3.0))), Err(Error::Fit(_))));
        assert!(matches!(
            FunctionalSeries::from_values(Method::Fk, 0.0, times, &[0.9, 0.0, 0.7], &[0.0; 3], 10),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weighted_fit_uses_errors() {
        // noisy point with a huge error barely moves the slope
        let times = vec![1.0, 2.0, 3.0, 4.0];
        let mut z: Vec<f64> = times.iter().map(|t: &f64| (-0.7 * t).exp()).collect();
        z[1] *= 2.0;
        let se: Vec<f64> = z.iter().enumerate().map(|(i, z)| if i == 1 { 10.0 * z } else { 1e-4 * z }).collect();
        let s = FunctionalSeries::from_values(Method::Fk, 0.0, times, &z, &se, 10).unwrap();
        let e = energy_from_decay(&s, Some((1.0, 4.0))).unwrap();
        assert!((e.value - 0.7).abs() < 1e-3, "{}", e.value);
    }

    #[test]
    fn gfk_exact_trial_has_zero_variance() {
        let trial = TrialFunction::gaussian(0.5, 0.5).unwrap();
        let ens = Ensemble::new(brownian(4.0, 100), 500, 3);
        let run = simulate(&ens, &Potential::harmonic(0.5), Some(&trial), &geometric_checkpoints(4.0, 8), true)
            .unwrap();
        assert!(run.series.weight_sd.iter().all(|&sd| sd < 1e-12));
        let e = energy_from_decay(&run.series, None).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.method, Method::Gfk);
        let x2 = observable_expectation(|x| x * x, &run.endpoints).unwrap();
        assert!((x2.value - 0.5).abs() < 0.1, "{x2:?}");
    }

    #[test]
    fn gfk_requires_half_diffusion() {
        let trial = TrialFunction::gaussian(0.5, 0.5).unwrap();
        let ens = Ensemble::new(brownian(1.0, 10).with_diffusion(1.0), 10, 3);
        let r = gfk_functional(&ens, &Potential::harmonic(0.5), &trial, &[1.0]);
        assert!(matches!(r, Err(Error::Config { .. })));
    }

    #[test]
    fn constant_trial_shifts_fk_by_e0() {
        let v = Potential::harmonic(0.5);
        let cps = geometric_checkpoints(2.0, 8);
        let ens = Ensemble::new(brownian(2.0, 50), 200, 8);
        let fk = fk_functional(&ens, &v, &cps).unwrap();
        let gfk = gfk_functional(&ens, &v, &TrialFunction::constant(0.3), &cps).unwrap();
        for i in 0..cps.len() {
            assert!((gfk.log_z[i] - (fk.log_z[i] + 0.3 * fk.times[i])).abs() < 1e-9);
        }
        let a = energy_from_decay(&fk, None).unwrap();
        let b = energy_from_decay(&gfk, None).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn merge_modes_agree() {
        let v = Potential::harmonic(0.5);
        let cps = geometric_checkpoints(1.0, 8);
        let ens = Ensemble::new(brownian(1.0, 50), 1000, 9);
        let a = fk_functional(&ens, &v, &cps).unwrap();
        let b = fk_functional(&ens.clone().with_merge(MergeMode::Unordered), &v, &cps).unwrap();
        let again = fk_functional(&ens, &v, &cps).unwrap();
        assert_eq!(a, again);
        for i in 0..cps.len() {
            assert!((a.log_z[i] - b.log_z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn stderr_scales_with_replica_count() {
        let v = Potential::harmonic(0.5);
        let cps = [0.0, 1.0];
        let se = |n| {
            let s = fk_functional(&Ensemble::new(brownian(1.0, 50), n, 21), &v, &cps).unwrap();
            s.z_stderr()[1]
        };
        let ratio = se(40_000) / se(20_000);
        assert!((ratio - 0.5f64.sqrt()).abs() < 0.2 * 0.5f64.sqrt(), "{ratio}");
    }

    #[test]
    fn overflowing_actions_abort() {
        let cfg = WalkConfig::new(FractionalIndices::new(1.5, 1.0).unwrap(), 1.0, 10);
        let v = Potential::PowerLaw { q2: 1e300, gamma: 100.0 };
        let r = fk_functional(&Ensemble::new(cfg, 1000, 1), &v, &[1.0]);
        assert!(matches!(r, Err(Error::Numerical(_))), "{r:?}");
    }

    #[test]
    fn free_density_is_gaussian() {
        // unweighted endpoints of a free walk: N(0, 2Dt)
        let ens = Ensemble::new(brownian(1.0, 100).with_generator(Generator::Ctrw), 100_000, 6);
        let run = simulate(&ens, &Potential::Free, None, &[1.0], true).unwrap();
        let edges = uniform_edges(-5.0, 5.0, 100);
        let est = density_estimate(&run.endpoints, &edges).unwrap();
        let mut cdf = 0.0;
        let mut ks: f64 = 0.0;
        for b in 0..100 {
            cdf += est.amplitude.mass[b] * est.amplitude.width(b);
            ks = ks.max((cdf - phi(edges[b + 1])).abs());
        }
        assert!(ks < 0.02, "KS {ks}");
        let total: f64 = (0..100).map(|b| est.density.mass[b] * est.density.width(b)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // mirrored bins agree
        for b in 0..50 {
            let (l, r) = (&est.amplitude, 99 - b);
            let se = (l.stderr[b].powi(2) + l.stderr[r].powi(2)).sqrt();
            assert!((l.mass[b] - l.mass[r]).abs() <= 4.0 * se + 1e-12);
        }
    }

    #[test]
    fn density_rejects_zero_weight() {
        let e = [WeightedEndpoint {
            position: 0.0,
            log_weight: f64::NEG_INFINITY,
        }];
        assert!(matches!(density_estimate(&e, &[-1.0, 1.0]), Err(Error::Degenerate(_))));
        assert!(matches!(observable_expectation(|_| 1.0, &e), Err(Error::Degenerate(_))));
    }

    #[test]
    fn histogram_helpers() {
        let h = DensityHistogram {
            edges: uniform_edges(-2.0, 2.0, 4),
            mass: vec![0.0, 0.5, 0.5, 0.0],
            stderr: vec![0.0; 4],
        };
        assert!((h.quantile(0.5)).abs() < 1e-12);
        assert!((h.iqr() - 1.0).abs() < 1e-12);
        assert!((h.tail_mass(0.5) - 0.5).abs() < 1e-12);
        assert_eq!(h.peak(), 0.5);
        let mut buf = Vec::new();
        h.write_csv(&mut buf, &[]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x_left,x_right,mass\n-2,-1,0\n"));
    }

    proptest! {
        #[test]
        fn unit_observable_is_one(ws in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let e: Vec<_> = ws.iter().enumerate()
                .map(|(i, w)| WeightedEndpoint { position: i as f64, log_weight: *w })
                .collect();
            let r = observable_expectation(|_| 1.0, &e).unwrap();
            prop_assert!((r.value - 1.0).abs() < 1e-12);
        }

        #[test]
        fn slope_ignores_common_scale(
            rate in -2.0f64..2.0,
            scale in -5.0f64..5.0,
            noise in proptest::collection::vec(-0.01f64..0.01, 5),
        ) {
            let times = vec![1.0, 2.0, 3.0, 4.0, 5.0];
            let z: Vec<f64> = times.iter().zip(&noise).map(|(t, n)| (-rate * t + n).exp()).collect();
            let se: Vec<f64> = z.iter().map(|z| 0.01 * z).collect();
            let zs: Vec<f64> = z.iter().map(|z| z * scale.exp()).collect();
            let ses: Vec<f64> = se.iter().map(|s| s * scale.exp()).collect();
            let a = FunctionalSeries::from_values(Method::Fk, 0.0, times.clone(), &z, &se, 10).unwrap();
            let b = FunctionalSeries::from_values(Method::Fk, 0.0, times, &zs, &ses, 10).unwrap();
            let ea = energy_from_decay(&a, Some((1.0, 5.0))).unwrap();
            let eb = energy_from_decay(&b, Some((1.0, 5.0))).unwrap();
            prop_assert!((ea.value - eb.value).abs() < 1e-9);
        }

        #[test]
        fn merge_is_order_free(
            logs in proptest::collection::vec(proptest::collection::vec(-30.0f64..5.0, 3), 2..30),
            split in 1usize..29,
        ) {
            let split = split.min(logs.len() - 1);
            let mut all = WeightAccumulator::new(3);
            logs.iter().for_each(|l| all.push(l));
            let mut a = WeightAccumulator::new(3);
            let mut b = WeightAccumulator::new(3);
            logs[..split].iter().for_each(|l| a.push(l));
            logs[split..].iter().for_each(|l| b.push(l));
            b.merge(a);
            for i in 0..3 {
                prop_assert!((all.log_mean(i) - b.log_mean(i)).abs() < 1e-9);
                let (ca, cb) = (all.log_mean_covariance(), b.log_mean_covariance());
                prop_assert!((ca[i][i] - cb[i][i]).abs() <= 1e-8 * ca[i][i].abs().max(1e-12));
            }
        }

        #[test]
        fn nonnegative_potential_keeps_weights_below_one(seed in 0u64..1000) {
            let cfg = WalkConfig::new(FractionalIndices::new(1.7, 0.8).unwrap(), 1.0, 20);
            let run = simulate(&Ensemble::new(cfg, 4, seed), &Potential::harmonic(1.0), None, &[0.5, 1.0], true).unwrap();
            prop_assert_eq!(run.series.log_z[0], 0.0);
            for e in &run.endpoints {
                prop_assert!(e.log_weight <= 0.0 && e.log_weight.is_finite());
            }
        }
    }
}
