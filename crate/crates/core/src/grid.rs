//! Functions of `x` sampled on a uniform spatial grid.
//!
//! A [`GridFn`] carries explicit tail values: it equals `left_tail` for
//! `x < x_min` and `right_tail` for `x > x_max`. Between nodes it is either
//! piecewise linear or a right-continuous step function.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform spatial grid `x_i = x_min + i * h`, `i = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    x_min: f64,
    x_max: f64,
    len: usize,
}

impl UniformGrid {
    pub fn new(x_min: f64, x_max: f64, len: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(invalid("x_max", format!("need finite x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if len < 2 {
            return Err(invalid("len", format!("need at least 2 nodes, got {len}")));
        }
        Ok(Self { x_min, x_max, len })
    }

    /// Grid of `len` nodes covering at least `[lo, hi]` with `0.0` placed
    /// exactly on a node. The spacing is `(hi - lo) / (len - 1)`.
    pub fn aligned_at_zero(lo: f64, hi: f64, len: usize) -> Result<Self> {
        if !(lo < 0.0 && hi > 0.0) {
            return Err(invalid("lo", format!("need lo < 0 < hi, got [{lo}, {hi}]")));
        }
        if len < 2 {
            return Err(invalid("len", format!("need at least 2 nodes, got {len}")));
        }
        let h = (hi - lo) / (len - 1) as f64;
        let n_left = ((-lo) / h).round().clamp(1.0, (len - 2) as f64) as usize;
        let x_min = -(n_left as f64) * h;
        let x_max = x_min + (len - 1) as f64 * h;
        Self::new(x_min, x_max, len)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.len - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.x(i))
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let r = ((x - self.x_min) / self.spacing()).round();
        r.clamp(0.0, (self.len - 1) as f64) as usize
    }
}

/// Interpolation rule between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interp {
    /// Linear interpolation between consecutive nodes.
    Linear,
    /// Right-continuous steps: `f(x) = f_i` on `[x_i, x_{i+1})`.
    Step,
}

/// A monotone non-decreasing function of `x` on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    grid: UniformGrid,
    values: Vec<f64>,
    left_tail: f64,
    right_tail: f64,
    interp: Interp,
}

impl GridFn {
    /// Builds a grid function, checking monotonicity and the tail bounds.
    pub fn new(
        grid: UniformGrid,
        values: Vec<f64>,
        left_tail: f64,
        right_tail: f64,
        interp: Interp,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !(left_tail.is_finite() && right_tail.is_finite()) || left_tail > right_tail {
            return Err(invalid("tails", format!("need finite left_tail <= right_tail, got ({left_tail}, {right_tail})")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("values", format!("non-finite value at node {i}")));
        }
        for (i, w) in values.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::NotMonotone {
                    index: i + 1,
                    left: w[0],
                    right: w[1],
                });
            }
        }
        if values[0] < left_tail || values[values.len() - 1] > right_tail {
            return Err(invalid("values", "node values must lie within [left_tail, right_tail]"));
        }
        Ok(Self {
            grid,
            values,
            left_tail,
            right_tail,
            interp,
        })
    }

    /// Builds a grid function from raw values, repairing rounding-level
    /// monotonicity violations with a running maximum and clamping into the
    /// tails.
    pub(crate) fn from_rounded(
        grid: UniformGrid,
        mut values: Vec<f64>,
        left_tail: f64,
        right_tail: f64,
        interp: Interp,
    ) -> Self {
        let mut run = left_tail;
        for v in values.iter_mut() {
            run = run.max(*v).min(right_tail);
            *v = run;
        }
        Self {
            grid,
            values,
            left_tail,
            right_tail,
            interp,
        }
    }

    /// Constant function `c` on the grid.
    pub fn constant(grid: UniformGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
            left_tail: c,
            right_tail: c,
            interp: Interp::Linear,
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_tail(&self) -> f64 {
        self.left_tail
    }

    pub fn right_tail(&self) -> f64 {
        self.right_tail
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    /// Evaluates the function under its interpolation rule.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g.x_min() {
            return self.left_tail;
        }
        if x > g.x_max() {
            return self.right_tail;
        }
        let pos = (x - g.x_min()) / g.spacing();
        let i = (pos.floor() as usize).min(g.len() - 1);
        match self.interp {
            Interp::Step => self.values[i],
            Interp::Linear => {
                if i + 1 >= g.len() {
                    return self.values[g.len() - 1];
                }
                let frac = pos - i as f64;
                self.values[i] + frac * (self.values[i + 1] - self.values[i])
            }
        }
    }

    /// Pointwise `min(self, cap)`; the right tail becomes `min(right_tail, cap)`.
    pub fn capped(&self, cap: f64) -> Self {
        let values = self.values.iter().map(|v| v.min(cap)).collect();
        Self {
            grid: self.grid,
            values,
            left_tail: self.left_tail.min(cap),
            right_tail: self.right_tail.min(cap),
            interp: self.interp,
        }
    }

    /// Largest absolute node-wise difference. Grids must coincide.
    pub fn max_abs_diff(&self, other: &GridFn) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("grid functions live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

}
