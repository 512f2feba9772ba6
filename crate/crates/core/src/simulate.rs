//! Monte Carlo first passage: exact sampling on a mesh, Euler walks with an
//! optional Brownian-bridge crossing test, the reversed-time stopping rule,
//! and Kolmogorov-Smirnov checks against a survival function.
//!
//! Paths are generated in fixed batches of [`BATCH`] paths. Batch `i` draws
//! from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, so results depend
//! only on the seed and not on the thread count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{Boundary, BoundaryInterp};
use crate::error::{invalid, Result};
use crate::ext;
use crate::survival::SurvivalFn;

pub const BATCH: usize = 8192;

/// `c / √N` is the 99% Dvoretzky-Kiefer-Wolfowitz band, `c = √(ln 200 / 2)`.
pub const DKW_99: f64 = 1.63;

pub fn dkw_bound(n: usize) -> f64 {
    DKW_99 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    ExactMesh,
    EulerBridge,
}

/// Simulated passage times; `+∞` means no passage by the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub n_paths: usize,
    pub seed: u64,
    pub method: SimMethod,
    /// Whether the bridge crossing test was on (Euler only).
    pub bridge: bool,
    pub horizon: f64,
    #[serde(with = "ext::vec")]
    pub passage_times: Vec<f64>,
}

impl SimResult {
    /// `ĝ(t) = #{τ > t} / N`.
    pub fn survival_at(&self, t: f64) -> f64 {
        let passed = self.passage_times.iter().filter(|&&tau| tau <= t).count();
        1.0 - passed as f64 / self.n_paths as f64
    }

    /// The empirical survival function of the sample.
    pub fn empirical(&self) -> Result<SurvivalFn> {
        crate::survival::empirical_survival(&self.passage_times, self.horizon)
    }
}

/// Runs `path` once per sample, batch by batch, and returns the results in
/// path order.
pub(crate) fn batched<T, F>(n: usize, seed: u64, path: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let batches = n.div_ceil(BATCH);
    let chunks: Vec<Vec<T>> = (0..batches)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let count = BATCH.min(n - i * BATCH);
            (0..count).map(|_| path(&mut rng)).collect()
        })
        .collect();
    chunks.into_iter().flatten().collect()
}

#[inline]
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Positive times at which a barrier is checked, with its value there. The
/// absorption time is added when it falls between grid times.
fn checkpoints(b: &Boundary) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = b
        .times()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 0.0)
        .map(|(k, &t)| (t, b.value_at(k)))
        .collect();
    if let Some(tb) = b.absorbing_from() {
        if tb > 0.0 && !b.times().contains(&tb) {
            let at = out.partition_point(|&(t, _)| t < tb);
            out.insert(at, (tb, f64::NEG_INFINITY));
        }
    }
    out
}

/// Exact passage sampling for a barrier active only at its grid times:
/// `τ = min{t_k > 0 : W_{t_k} >= b(t_k)}`.
pub fn sample_discrete_passage(b: &Boundary, n: usize, seed: u64) -> Result<SimResult> {
    if n == 0 {
        return Err(invalid("n", "need at least one path"));
    }
    let checks = checkpoints(b);
    let horizon = checks.last().map_or(0.0, |c| c.0);
    let passage_times = batched(n, seed, |rng| {
        let (mut w, mut prev) = (0.0, 0.0);
        for &(t, level) in &checks {
            if level == f64::NEG_INFINITY {
                return t;
            }
            w += (t - prev).sqrt() * gauss(rng);
            prev = t;
            if w >= level {
                return t;
            }
        }
        f64::INFINITY
    });
    Ok(SimResult {
        n_paths: n,
        seed,
        method: SimMethod::ExactMesh,
        bridge: false,
        horizon,
        passage_times,
    })
}

/// Euler walk with step `dt` up to the boundary's last grid time. With
/// `bridge`, a step that ends below the boundary still counts as a crossing
/// with probability `exp(-2 (b_m - x_i)(b_m - x_{i+1}) / dt)`, `b_m` the
/// boundary at the step midpoint.
pub fn sample_continuous_passage(b: &Boundary, dt: f64, n: usize, seed: u64, bridge: bool) -> Result<SimResult> {
    if n == 0 {
        return Err(invalid("n", "need at least one path"));
    }
    let horizon = *b.times().last().unwrap();
    if !(dt > 0.0 && dt < horizon) {
        return Err(invalid("dt", format!("need 0 < dt < horizon = {horizon}, got {dt}")));
    }
    let steps = (horizon / dt).ceil() as usize;
    let h = horizon / steps as f64;
    let sh = h.sqrt();
    let ends: Vec<f64> = (1..=steps).map(|i| b.eval(i as f64 * h)).collect();
    let mids: Vec<f64> = (0..steps).map(|i| b.eval((i as f64 + 0.5) * h)).collect();
    let passage_times = batched(n, seed, |rng| {
        let mut x = 0.0;
        for i in 0..steps {
            let next = x + sh * gauss(rng);
            let t = (i + 1) as f64 * h;
            if next >= ends[i] {
                return t;
            }
            if bridge {
                let bm = mids[i];
                if x < bm && next < bm && bm.is_finite() {
                    let p = (-2.0 * (bm - x) * (bm - next) / h).exp();
                    if rng.gen::<f64>() < p {
                        return t;
                    }
                }
            }
            x = next;
        }
        f64::INFINITY
    });
    Ok(SimResult {
        n_paths: n,
        seed,
        method: SimMethod::EulerBridge,
        bridge,
        horizon,
        passage_times,
    })
}

/// Outcome of a distribution-level comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub n: usize,
    pub statistic: f64,
    pub dkw: f64,
    pub allowance: f64,
    pub pass: bool,
}

/// `sup |ĝ - g|` over `[0, horizon]`, taken at the sample jump points and
/// the breakpoints of `g` from both sides. Passes iff the statistic is
/// within the DKW band plus `allowance` (zero for exact samplers).
pub fn ks_against(g: &SurvivalFn, sim: &SimResult, allowance: f64) -> KsReport {
    let n = sim.n_paths;
    let mut jumps: Vec<f64> = sim
        .passage_times
        .iter()
        .copied()
        .filter(|&t| t <= sim.horizon)
        .collect();
    jumps.sort_by(f64::total_cmp);
    let mut events = jumps.clone();
    if let Some(bps) = g.breakpoints() {
        events.extend(bps.into_iter().filter(|&t| t > 0.0 && t <= sim.horizon));
    }
    events.sort_by(f64::total_cmp);
    events.dedup();
    let mut stat: f64 = 0.0;
    for &t in &events {
        // counts of τ <= t and τ < t
        let upto = jumps.partition_point(|&s| s <= t);
        let before = jumps.partition_point(|&s| s < t);
        let at = 1.0 - upto as f64 / n as f64;
        let left = 1.0 - before as f64 / n as f64;
        stat = stat.max((at - g.eval(t)).abs()).max((left - g.left_limit(t)).abs());
    }
    let dkw = dkw_bound(n);
    KsReport {
        n,
        statistic: stat,
        dkw,
        allowance,
        pass: stat <= dkw + allowance,
    }
}

/// One path of the reversed-time stopping rule at `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPath {
    /// `γ ∈ [0, t]`.
    pub gamma: f64,
    /// `t - γ` as an original grid time when the path stopped early.
    pub stopped_at: Option<f64>,
    /// `x + W_t >= 0`, meaningful only when `γ = t`.
    pub terminal: bool,
}

/// Samples `γ = inf{s >= 0 : x + W_s >= b(t - s)}` with `b(t - s) = -∞` for
/// `s >= t`, checking only at the reversed grid times `t - t_k`.
pub fn simulate_gamma(t: f64, x: f64, b: &Boundary, n: usize, seed: u64) -> Result<Vec<GammaPath>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    if n == 0 {
        return Err(invalid("n", "need at least one path"));
    }
    // (s, original time, level), ascending in s, excluding s = t
    let mut checks: Vec<(f64, f64, f64)> = b
        .times()
        .iter()
        .enumerate()
        .filter(|(_, &tk)| tk > 0.0 && tk <= t)
        .rev()
        .map(|(k, &tk)| (t - tk, tk, b.value_at(k)))
        .collect();
    let on_grid = b.times().contains(&t);
    if !on_grid {
        let level = b.eval(t);
        if level != f64::INFINITY || b.interpolation() == BoundaryInterp::Linear {
            checks.insert(0, (0.0, t, level));
        }
    }
    let immediate = checks.first().filter(|c| c.0 == 0.0 && x >= c.2).map(|c| c.1);
    if let Some(tk) = immediate {
        return Ok(vec![
            GammaPath {
                gamma: 0.0,
                stopped_at: Some(tk),
                terminal: x >= 0.0,
            };
            n
        ]);
    }
    Ok(batched(n, seed, |rng| {
        let (mut y, mut prev) = (x, 0.0);
        for &(s, tk, level) in &checks {
            if s > prev {
                y += (s - prev).sqrt() * gauss(rng);
                prev = s;
            }
            if y >= level {
                return GammaPath {
                    gamma: s,
                    stopped_at: Some(tk),
                    terminal: false,
                };
            }
        }
        y += (t - prev).sqrt() * gauss(rng);
        GammaPath {
            gamma: t,
            stopped_at: None,
            terminal: y >= 0.0,
        }
    }))
}
