//! The boundary integral equation
//!
//! ```text
//! Ψ(b(t)/√t) = ∫_0^t Ψ((b(t) - b(s))/√(t - s)) dF(s),   F = 1 - g,
//! ```
//!
//! discretized by the trapezoid rule against the exact increments of `F`,
//! with the diagonal kernel value `Ψ(0) = 1/2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{Boundary, BoundaryInterp};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{normal_sf, normal_sf_inverse};
use crate::survival::SurvivalFn;

/// Ascending quadrature nodes `0 = s_0 < s_1 < ... < s_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    times: Vec<f64>,
}

/// Number of geometric nodes placed below the first uniform step.
pub const GEOMETRIC_NODES: usize = 40;

impl QuadratureGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(invalid("times", "need at least two nodes starting at 0"));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(invalid("times", format!("not strictly increasing at index {}", k + 1)));
        }
        if !times.last().unwrap().is_finite() {
            return Err(invalid("times", "nodes must be finite"));
        }
        Ok(Self { times })
    }

    /// `n` uniform steps of `t_end / n`, with the first step subdivided
    /// geometrically (ratio 2) into [`GEOMETRIC_NODES`] further nodes.
    pub fn graded(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(invalid("t_end", format!("must be positive, got {t_end}")));
        }
        if n == 0 {
            return Err(invalid("n", "need at least one step"));
        }
        let h = t_end / n as f64;
        let mut times = vec![0.0];
        times.extend((1..=GEOMETRIC_NODES).rev().map(|m| h * 0.5f64.powi(m as i32)));
        times.extend((1..=n).map(|i| t_end * (i as f64 / n as f64)));
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn continuous_with_density(g: &SurvivalFn) -> Result<()> {
    if !g.has_density() {
        return Err(invalid("g", "the integral equation needs a continuous g with a density"));
    }
    Ok(())
}

/// Kernel `Ψ((b_t - b_s)/√(t - s))`.
#[inline]
fn kernel(bt: f64, bs: f64, dt: f64) -> f64 {
    normal_sf((bt - bs) / dt.sqrt())
}

/// `Σ_j ½ (K_j + K_{j+1}) ΔF_j` over the nodes `s_0..=s_i = t`, with
/// `K_i = 1/2` and `b(s_0)` read as `b(s_1)`.
fn trapezoid(s: &[f64], b: &[f64], df: &[f64], beta: f64) -> f64 {
    let i = s.len() - 1;
    let t = s[i];
    let k_at = |j: usize| -> f64 {
        if j == i {
            0.5
        } else {
            let bj = if j == 0 { b.get(1).copied().unwrap_or(beta) } else { b[j] };
            kernel(beta, bj, t - s[j])
        }
    };
    let mut acc = 0.0;
    let mut left = k_at(0);
    for j in 0..i {
        let right = k_at(j + 1);
        acc += 0.5 * (left + right) * df[j];
        left = right;
    }
    acc
}

/// `Ψ(b(t)/√t) - ∫_0^t Ψ((b(t) - b(s))/√(t - s)) dF(s)` on the quadrature
/// nodes below `t`, plus `t` itself.
pub fn residual(b: &Boundary, g: &SurvivalFn, t: f64, quad: &QuadratureGrid) -> Result<f64> {
    continuous_with_density(g)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    let mut s: Vec<f64> = quad.times().iter().copied().filter(|&x| x < t).collect();
    s.push(t);
    let bv: Vec<f64> = s.iter().map(|&x| if x == 0.0 { f64::NAN } else { b.eval(x) }).collect();
    if let Some(k) = (1..bv.len()).find(|&k| !bv[k].is_finite()) {
        return Err(Error::InvalidBoundary(format!("b({}) = {} is not finite", s[k], bv[k])));
    }
    for (k, &bt) in b.times().iter().enumerate() {
        if bt > 0.0 && bt <= t && !b.value_at(k).is_finite() {
            return Err(Error::InvalidBoundary(format!("b({bt}) is not finite")));
        }
    }
    let df: Vec<f64> = s.windows(2).map(|w| g.eval(w[0]) - g.eval(w[1])).collect();
    let beta = bv[bv.len() - 1];
    Ok(normal_sf(beta / t.sqrt()) - trapezoid(&s, &bv, &df, beta))
}

/// Solver output on the quadrature nodes that carry mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegralSolution {
    pub boundary: Boundary,
    /// Discrete residual at each solved node.
    pub residuals: Vec<f64>,
    /// Nodes skipped because `F(s)` underflows there.
    pub skipped: usize,
    pub warnings: Vec<String>,
}

/// Below this `F(s)` the equation carries no information about `b(s)`.
const MIN_MASS: f64 = 1e-250;

const ROOT_TOL: f64 = 1e-10;

/// Solves for `b(s_i)` node by node, by bracket scan and bisection. The
/// first node uses `Ψ(β/√s_1) = F(s_1)/2`; `init` overrides it.
pub fn solve_integral_equation(g: &SurvivalFn, quad: &QuadratureGrid, init: Option<f64>) -> Result<IntegralSolution> {
    continuous_with_density(g)?;
    let all = quad.times();
    let first = all.iter().position(|&x| x > 0.0 && 1.0 - g.eval(x) > MIN_MASS);
    let Some(first) = first else {
        return Err(Error::NotBracketed {
            s: *all.last().unwrap(),
            detail: "no quadrature node carries passage mass".into(),
        });
    };
    let skipped = first - 1;
    // s[0] = 0 followed by the solvable nodes; the skipped nodes carry no mass
    let s: Vec<f64> = std::iter::once(0.0).chain(all[first..].iter().copied()).collect();
    let df: Vec<f64> = s.windows(2).map(|w| g.eval(w[0]) - g.eval(w[1])).collect();
    let mut b = vec![f64::NAN; s.len()];
    let mut residuals = Vec::with_capacity(s.len() - 1);
    let f1 = 1.0 - g.eval(s[1]);
    b[1] = init.unwrap_or_else(|| s[1].sqrt() * normal_sf_inverse(0.5 * f1));
    residuals.push(normal_sf(b[1] / s[1].sqrt()) - 0.5 * df[0]);
    for i in 2..s.len() {
        let r = |beta: f64| normal_sf(beta / s[i].sqrt()) - trapezoid(&s[..=i], &b[..i], &df[..i], beta);
        let beta = bracket_and_bisect(&r, b[i - 1], s[i])?;
        residuals.push(r(beta));
        b[i] = beta;
    }
    let mut warnings = Vec::new();
    let dens = s[1..].iter().filter_map(|&x| g.density(x)).fold(f64::INFINITY, f64::min);
    if !(dens > 0.0) {
        warnings.push(format!("density of g not bounded below on the solve window (min {dens:e})"));
    }
    let boundary = Boundary::new(s[1..].to_vec(), b[1..].to_vec(), BoundaryInterp::Linear)?;
    Ok(IntegralSolution {
        boundary,
        residuals,
        skipped,
        warnings,
    })
}

/// Sign change of `r` nearest to `start`, found on `start ± δ 2^m`, then
/// bisected to [`ROOT_TOL`].
fn bracket_and_bisect(r: &dyn Fn(f64) -> f64, start: f64, s: f64) -> Result<f64> {
    let r0 = r(start);
    if r0 == 0.0 {
        return Ok(start);
    }
    let delta = 1e-3 * s.sqrt().max(1e-6);
    let mut bracket = None;
    let (mut lo_x, mut hi_x) = (start, start);
    for m in 0..60 {
        let step = delta * 2f64.powi(m);
        let (lx, hx) = (start - step, start + step);
        let (rl, rh) = (r(lx), r(hx));
        if rh.signum() != r0.signum() {
            bracket = Some((hi_x, hx));
            break;
        }
        if rl.signum() != r0.signum() {
            bracket = Some((lx, lo_x));
            break;
        }
        lo_x = lx;
        hi_x = hx;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Err(Error::NotBracketed {
            s,
            detail: format!("no sign change around {start} (residual {r0:e})"),
        });
    };
    let sign_lo = r(lo).signum();
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if r(mid).signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Residuals of `b` at several times, evaluated in parallel.
pub fn residuals_at(b: &Boundary, g: &SurvivalFn, ts: &[f64], quad: &QuadratureGrid) -> Result<Vec<f64>> {
    ts.par_iter().map(|&t| residual(b, g, t, quad)).collect()
}

/// Smallest `C` with `|b(t) - b(s)| <= C √(δ ln(1/δ))`, `δ = t - s`, over
/// pairs of grid times at most `max_lag` apart (`max_lag < 1`).
pub fn holder_constant(b: &Boundary, t_lo: f64, max_lag: f64) -> f64 {
    let pts: Vec<(f64, f64)> = b
        .times()
        .iter()
        .zip(b.values())
        .filter(|(t, v)| **t >= t_lo && v.is_finite())
        .map(|(t, v)| (*t, *v))
        .collect();
    let mut c: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let d = pts[j].0 - pts[i].0;
            if d > max_lag {
                break;
            }
            let modulus = (d * (1.0 / d).ln()).sqrt();
            c = c.max((pts[j].1 - pts[i].1).abs() / modulus);
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::constant_barrier_survival;

    fn flat(a: f64) -> Boundary {
        Boundary::new(vec![0.0, 10.0], vec![a, a], BoundaryInterp::Linear).unwrap()
    }

    #[test]
    fn constant_barrier_is_exact() {
        let g = constant_barrier_survival(1.0).unwrap();
        let q = QuadratureGrid::graded(2.0, 2000).unwrap();
        for t in [0.5, 1.0, 2.0] {
            assert!(residual(&flat(1.0), &g, t, &q).unwrap().abs() < 1e-12);
        }
        let off = residual(&flat(1.1), &g, 1.0, &q).unwrap();
        assert!(off.abs() >= 1e-3);
    }

    #[test]
    fn small_time_both_sides_vanish() {
        let g = constant_barrier_survival(1.0).unwrap();
        let q = QuadratureGrid::graded(2.0, 200).unwrap();
        assert!(residual(&flat(1.0), &g, 1e-3, &q).unwrap().abs() < 1e-100);
    }

    #[test]
    fn rejects_atoms_and_infinities() {
        let g = SurvivalFn::piecewise_constant(vec![0.0, 1.0], vec![1.0, 0.5]).unwrap();
        let q = QuadratureGrid::graded(2.0, 10).unwrap();
        assert!(residual(&flat(1.0), &g, 1.0, &q).is_err());
        let g = constant_barrier_survival(1.0).unwrap();
        let b = Boundary::new(vec![0.0, 0.5, 1.0], vec![1.0, f64::INFINITY, 1.0], BoundaryInterp::Linear).unwrap();
        assert!(residual(&b, &g, 1.0, &q).is_err());
    }

    #[test]
    fn graded_grid_shape() {
        let q = QuadratureGrid::graded(2.0, 100).unwrap();
        assert_eq!(q.len(), 1 + GEOMETRIC_NODES + 100);
        assert_eq!(q.times()[0], 0.0);
        assert_eq!(*q.times().last().unwrap(), 2.0);
        assert!(QuadratureGrid::new(vec![0.0, 1.0, 1.0]).is_err());
    }
}
