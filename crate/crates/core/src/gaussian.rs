//! Standard normal primitives and the Gaussian heat-kernel convolution.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{GridFn, Interp};

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(invalid("probability", format!("{value} is not in [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = crate::Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal distribution function `Φ(z)`, total on the extended reals.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z == f64::INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Complementary distribution function `Ψ(z) = 1 - Φ(z)`, accurate in the upper tail.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    normal_cdf(-z)
}

// Rational initial guess (Acklam), refined by Halley steps below.
const QA: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const QB: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const QC: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const QD: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn quantile_guess(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((QC[0] * q + QC[1]) * q + QC[2]) * q + QC[3]) * q + QC[4]) * q + QC[5])
            / ((((QD[0] * q + QD[1]) * q + QD[2]) * q + QD[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((QA[0] * r + QA[1]) * r + QA[2]) * r + QA[3]) * r + QA[4]) * r + QA[5]) * q
            / (((((QB[0] * r + QB[1]) * r + QB[2]) * r + QB[3]) * r + QB[4]) * r + 1.0)
    }
}

/// Lower-half quantile, `p <= 0.5`, refined against `normal_cdf`.
fn quantile_lower(p: f64) -> f64 {
    let mut z = quantile_guess(p);
    for _ in 0..3 {
        let e = normal_cdf(z) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * z * z).exp();
        let step = u / (1.0 + 0.5 * z * u);
        z -= step;
        if step.abs() <= 1e-16 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

/// Inverse of [`normal_cdf`]. Maps `0 ↦ -∞`, `1 ↦ +∞`; NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p <= 0.5 {
        quantile_lower(p)
    } else {
        -quantile_lower(1.0 - p)
    }
}

/// Inverse of [`normal_sf`], accurate for tiny `q`.
pub fn normal_sf_inverse(q: f64) -> f64 {
    -normal_quantile(q)
}

/// Number of standard deviations beyond which the kernel is treated as
/// having no mass. `Ψ(10) ≈ 7.6e-24`.
const KERNEL_SIGMAS: f64 = 10.0;

/// `∫_c^∞ Ψ(y/σ) dy = E[(σZ - c)^+]` for `c >= 0`.
#[inline]
fn upper_ramp(c: f64, sigma: f64) -> f64 {
    let z = c / sigma;
    sigma * (normal_pdf(z) - z * normal_sf(z))
}

/// Average of `Ψ(y/σ)` over `y ∈ [c, c + h]`, evaluated without cancelling
/// large terms.
#[inline]
fn segment_mean_sf(c: f64, h: f64, sigma: f64) -> f64 {
    let d = c + h;
    if c >= 0.0 {
        (upper_ramp(c, sigma) - upper_ramp(d, sigma)) / h
    } else if d <= 0.0 {
        1.0 - (upper_ramp(-d, sigma) - upper_ramp(-c, sigma)) / h
    } else {
        (-c + upper_ramp(-c, sigma) - upper_ramp(d, sigma)) / h
    }
}

/// The Gaussian smoothing `x ↦ E f(x + σZ)` of a grid function, exact under
/// the grid function's interpolation model (piecewise linear or step, with
/// constant tails).
#[derive(Debug, Clone)]
pub struct HeatSmoothed<'a> {
    source: &'a GridFn,
    sigma: f64,
    window: usize,
}

impl<'a> HeatSmoothed<'a> {
    pub fn new(source: &'a GridFn, delta_t: f64) -> Result<Self> {
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return Err(invalid("delta_t", format!("must be positive and finite, got {delta_t}")));
        }
        let sigma = delta_t.sqrt();
        let h = source.grid().spacing();
        let window = ((KERNEL_SIGMAS * sigma / h).ceil() as usize + 1).min(source.grid().len() + 1);
        Ok(Self {
            source,
            sigma,
            window,
        })
    }

    pub fn source(&self) -> &GridFn {
        self.source
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The smoothed function at an arbitrary `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let f = self.source;
        let grid = f.grid();
        let v = f.values();
        let m = grid.len();
        let h = grid.spacing();
        let (l, r) = (f.left_tail(), f.right_tail());
        let s = self.sigma;
        let pos = (x - grid.x_min()) / h;
        let lo = (pos - self.window as f64).floor().max(0.0) as usize;
        let hi = ((pos + self.window as f64).ceil().max(0.0) as usize).min(m - 1);
        let last_edge = (r - v[m - 1]) * normal_sf((grid.x_max() - x) / s);
        match f.interp() {
            Interp::Linear => {
                let mut acc = l + (v[0] - l) * normal_sf((grid.x_min() - x) / s) + last_edge;
                let lo = lo.min(m - 1);
                acc += v[lo] - v[0];
                for i in lo..hi.min(m - 1) {
                    let c = grid.x(i) - x;
                    acc += (v[i + 1] - v[i]) * segment_mean_sf(c, h, s);
                }
                acc
            }
            Interp::Step => {
                let mut acc = l + last_edge;
                if lo > 0 {
                    acc += v[lo.min(m) - 1] - l;
                }
                for i in lo..=hi {
                    let jump = v[i] - if i == 0 { l } else { v[i - 1] };
                    if jump != 0.0 {
                        acc += jump * normal_sf((grid.x(i) - x) / s);
                    }
                }
                acc
            }
        }
    }

    /// The smoothed function sampled at the source's own nodes, as a
    /// piecewise-linear grid function with the source's tails.
    pub fn on_grid(&self) -> GridFn {
        let f = self.source;
        let grid = *f.grid();
        let v = f.values();
        let m = grid.len();
        let h = grid.spacing();
        let s = self.sigma;
        let (l, r) = (f.left_tail(), f.right_tail());
        let w = self.window.min(m);
        // Kernel weights depend only on the index offset d = i - j.
        let offset = w as isize + 1;
        let table: Vec<f64> = (-offset..=offset)
            .map(|d| {
                let c = d as f64 * h;
                match f.interp() {
                    Interp::Linear => segment_mean_sf(c, h, s),
                    Interp::Step => normal_sf(c / s),
                }
            })
            .collect();
        let weight = |d: isize| table[(d + offset) as usize];

        let out: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|j| {
                let lo = j.saturating_sub(w);
                let hi = (j + w).min(m - 1);
                let last_edge = (r - v[m - 1]) * normal_sf((m - 1 - j) as f64 * h / s);
                match f.interp() {
                    Interp::Linear => {
                        let mut acc = l + (v[0] - l) * normal_sf(-(j as f64) * h / s) + last_edge;
                        acc += v[lo] - v[0];
                        for i in lo..hi {
                            acc += (v[i + 1] - v[i]) * weight(i as isize - j as isize);
                        }
                        acc
                    }
                    Interp::Step => {
                        let mut acc = l + last_edge;
                        if lo > 0 {
                            acc += v[lo - 1] - l;
                        }
                        for i in lo..=hi {
                            let jump = v[i] - if i == 0 { l } else { v[i - 1] };
                            if jump != 0.0 {
                                acc += jump * weight(i as isize - j as isize);
                            }
                        }
                        acc
                    }
                }
            })
            .collect();
        GridFn::from_rounded(grid, out, l, r, Interp::Linear)
    }
}

/// `x ↦ E f(x + Z√Δ)` on `f`'s grid. Rejects non-positive `Δ`; the input's
/// monotonicity is guaranteed by [`GridFn`] construction.
pub fn convolve_heat(f: &GridFn, delta_t: f64) -> Result<GridFn> {
    Ok(HeatSmoothed::new(f, delta_t)?.on_grid())
}
