//! Extended-real boundaries `b: [0, ∞) → [-∞, ∞]` and the barrier
//! operations built on them: standardization, time reflection, and recovery
//! of `b` from the sub-distribution `u`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ext::{self, format_ext, parse_ext};
use crate::grid::GridFn;
use crate::survival::SurvivalFn;

/// Default recovery tolerance, scaled by `max(1, g(t))`.
pub const DEFAULT_TOL_REC: f64 = 1e-9;

/// How a boundary is read between its grid times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryInterp {
    /// `b = +∞` off the grid: the barrier is only active at grid times.
    Discrete,
    /// Linear between finite neighbours, held constant past the last time.
    Linear,
}

/// A boundary on an ascending time grid. Values may be `±∞`. When
/// `absorbing_from = Some(T)`, `b(t) = -∞` for every `t >= T` regardless of
/// the stored values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    times: Vec<f64>,
    #[serde(with = "ext::vec")]
    values: Vec<f64>,
    standard: bool,
    interpolation: BoundaryInterp,
    #[serde(default, with = "ext::opt", skip_serializing_if = "Option::is_none")]
    absorbing_from: Option<f64>,
}

impl Boundary {
    pub fn new(times: Vec<f64>, values: Vec<f64>, interpolation: BoundaryInterp) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Mismatch(format!(
                "{} times for {} boundary values",
                times.len(),
                values.len()
            )));
        }
        if !(times[0] >= 0.0) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidBoundary("times must be finite and non-negative".into()));
        }
        if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidBoundary(format!(
                "times not strictly ascending at index {}",
                k + 1
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidBoundary("NaN boundary value".into()));
        }
        Ok(Self {
            times,
            values,
            standard: false,
            interpolation,
            absorbing_from: None,
        })
    }

    pub(crate) fn with_absorption(mut self, from: Option<f64>) -> Self {
        self.absorbing_from = from;
        self
    }

    pub(crate) fn mark_standard(mut self) -> Self {
        self.standard = true;
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_standard(&self) -> bool {
        self.standard
    }

    pub fn interpolation(&self) -> BoundaryInterp {
        self.interpolation
    }

    pub fn absorbing_from(&self) -> Option<f64> {
        self.absorbing_from
    }

    pub fn with_interpolation(mut self, interpolation: BoundaryInterp) -> Self {
        self.interpolation = interpolation;
        self
    }

    /// Value at a grid index, with absorption applied.
    pub fn value_at(&self, k: usize) -> f64 {
        match self.absorbing_from {
            Some(tb) if self.times[k] >= tb => f64::NEG_INFINITY,
            _ => self.values[k],
        }
    }

    /// `b(t)` under the boundary's interpolation convention.
    pub fn eval(&self, t: f64) -> f64 {
        if let Some(tb) = self.absorbing_from {
            if t >= tb {
                return f64::NEG_INFINITY;
            }
        }
        let k = self.times.partition_point(|&s| s < t);
        if k < self.times.len() && self.times[k] == t {
            return self.values[k];
        }
        match self.interpolation {
            BoundaryInterp::Discrete => f64::INFINITY,
            BoundaryInterp::Linear => {
                if k == 0 {
                    return self.values[0];
                }
                if k == self.times.len() {
                    return self.values[k - 1];
                }
                let (t0, t1) = (self.times[k - 1], self.times[k]);
                let (b0, b1) = (self.values[k - 1], self.values[k]);
                if b0.is_finite() && b1.is_finite() {
                    b0 + (b1 - b0) * (t - t0) / (t1 - t0)
                } else {
                    // lower semicontinuous reading across an infinite node
                    b0.min(b1)
                }
            }
        }
    }

    /// Whether the stored data satisfies the standard-barrier conditions:
    /// `b(0) = 0`, and `-∞` is absorbing.
    pub fn satisfies_standard(&self) -> bool {
        if self.times[0] != 0.0 || self.value_at(0) != 0.0 {
            return false;
        }
        let mut dead = false;
        for k in 1..self.times.len() {
            let v = self.value_at(k);
            if dead && v != f64::NEG_INFINITY {
                return false;
            }
            dead |= v == f64::NEG_INFINITY;
        }
        true
    }

    /// Every finite value shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            if v.is_finite() && self.times[k] > 0.0 {
                *v += delta;
            }
        }
        out.standard = false;
        out
    }

    /// Writes the `t,b` table with `inf` / `-inf` sentinels.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,b")?;
        for k in 0..self.times.len() {
            writeln!(w, "{},{}", format_ext(self.times[k]), format_ext(self.value_at(k)))?;
        }
        Ok(())
    }

    /// Reads a `t,b` table.
    pub fn read_csv<R: BufRead>(r: R, interpolation: BoundaryInterp) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidBoundary(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || (n == 0 && line.starts_with('t')) {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(ts), Some(bs)) = (parts.next(), parts.next()) else {
                return Err(Error::InvalidBoundary(format!("line {}: expected `t,b`", n + 1)));
            };
            let t = parse_ext(ts).ok_or_else(|| Error::InvalidBoundary(format!("line {}: bad t", n + 1)))?;
            let b = parse_ext(bs).ok_or_else(|| Error::InvalidBoundary(format!("line {}: bad b", n + 1)))?;
            times.push(t);
            values.push(b);
        }
        let b = Boundary::new(times, values, interpolation)?;
        let standard = b.satisfies_standard();
        Ok(Self { standard, ..b })
    }
}

/// Standard version of `b`: `b̄(0) = 0`, `b̄ = b` on `(0, T_B)`, and
/// `b̄ = -∞` from the first time `T_B > 0` with `b(T_B) = -∞`.
///
/// For linearly interpolated boundaries the first positive grid value stands
/// in for `liminf_{t↓0} b(t)` and must be non-negative.
pub fn standardize(b: &Boundary) -> Result<Boundary> {
    let mut times = b.times.clone();
    let mut values: Vec<f64> = (0..b.times.len()).map(|k| b.value_at(k)).collect();
    if times[0] != 0.0 {
        times.insert(0, 0.0);
        values.insert(0, 0.0);
    }
    if b.interpolation == BoundaryInterp::Linear && values.len() > 1 && values[1] < 0.0 {
        return Err(Error::InvalidBoundary(format!(
            "b({}) = {} < 0 next to t = 0: the passage time would vanish",
            times[1], values[1]
        )));
    }
    values[0] = 0.0;
    let first_dead = (1..times.len()).find(|&k| values[k] == f64::NEG_INFINITY);
    let mut absorbing_from = b.absorbing_from;
    if let Some(k) = first_dead {
        for v in &mut values[k..] {
            *v = f64::NEG_INFINITY;
        }
        let tb = times[k];
        absorbing_from = Some(absorbing_from.map_or(tb, |a| a.min(tb)));
    }
    Ok(Boundary {
        times,
        values,
        standard: true,
        interpolation: b.interpolation,
        absorbing_from,
    })
}

/// Time reversal at `t`: `b̃(s) = b(t - s)` for `0 <= s < t`, `-∞` for `s >= t`.
///
/// The grid is `{t - s_k}` for the original grid times `s_k <= t`, plus
/// `s = 0` when `t` is not itself a grid time. The value stored at `s = t`
/// is the left limit `b(0)`; evaluation there returns `-∞`.
pub fn reflect(b: &Boundary, t: f64) -> Result<Boundary> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("reflection time must be positive, got {t}")));
    }
    let last = *b.times.last().unwrap();
    if t > last && b.interpolation == BoundaryInterp::Linear {
        return Err(invalid("t", format!("{t} beyond the boundary grid end {last}")));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let upto = b.times.partition_point(|&s| s <= t);
    if upto == 0 || b.times[upto - 1] != t {
        times.push(0.0);
        values.push(b.eval(t));
    }
    for k in (0..upto).rev() {
        times.push(t - b.times[k]);
        // a reflected grid keeps the left limit at its absorption time
        let v = if Some(b.times[k]) == b.absorbing_from { b.values[k] } else { b.value_at(k) };
        values.push(v);
    }
    let out = Boundary::new(times, values, b.interpolation)?;
    Ok(out.with_absorption(Some(t)))
}

/// Recovers `b(t_k)` as the smallest grid `x` with
/// `g(t_k) - u(t_k, x) <= tol_rec * max(1, g(t_k))`; `+∞` if no node
/// qualifies, `-∞` if the leftmost node already does or `g(t_k) = 0`.
pub fn recover_from_u(
    times: &[f64],
    slices: &[GridFn],
    g: &SurvivalFn,
    tol_rec: f64,
) -> Result<Boundary> {
    if times.len() != slices.len() {
        return Err(Error::Mismatch(format!(
            "{} times for {} u-slices",
            times.len(),
            slices.len()
        )));
    }
    let mut values = Vec::with_capacity(times.len());
    for (&t, u) in times.iter().zip(slices) {
        let gt = g.eval(t);
        let tol = tol_rec * gt.max(1.0);
        if (u.right_tail() - gt).abs() > tol {
            return Err(Error::Mismatch(format!(
                "u-slice at t = {t} has right tail {} but g(t) = {gt}",
                u.right_tail()
            )));
        }
        if gt == 0.0 {
            values.push(f64::NEG_INFINITY);
            continue;
        }
        let b = match u.values().iter().position(|&v| gt - v <= tol) {
            Some(0) => f64::NEG_INFINITY,
            Some(i) => u.grid().x(i),
            None => f64::INFINITY,
        };
        values.push(b);
    }
    let b = Boundary::new(times.to_vec(), values, BoundaryInterp::Discrete)?;
    let standard = b.satisfies_standard();
    Ok(Boundary { standard, ..b })
}
