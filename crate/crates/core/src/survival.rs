//! Survival distribution functions `g(t) = P(τ > t)`, their discretization
//! into piecewise-constant approximations, and closed-form oracle families.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ext;
use crate::gaussian::{normal_cdf, normal_sf};

/// Default cap on the number of mesh points produced by [`discretize`].
pub const DEFAULT_MESH_CAP: usize = 1_000_000;

/// Default jump size below which a discontinuity is not reported as an atom.
pub const DEFAULT_ATOM_THRESHOLD: f64 = 1e-12;

/// Closed-form survival functions of Brownian first passage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticFamily {
    /// `P(sup_{s<=t} W_s < a) = 2Φ(a/√t) - 1`.
    ConstantBarrier { a: f64 },
    /// Passage over `a + c t`: `Φ((a+ct)/√t) - e^{-2ac} Φ((ct-a)/√t)`.
    LinearBarrier { a: f64, c: f64 },
}

impl AnalyticFamily {
    fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        if t == f64::INFINITY {
            return self.limit_at_infinity();
        }
        let st = t.sqrt();
        match *self {
            AnalyticFamily::ConstantBarrier { a } => libm::erf(a / (2.0 * t).sqrt()),
            AnalyticFamily::LinearBarrier { a, c } => {
                let z1 = (a + c * t) / st;
                let z2 = (c * t - a) / st;
                let v = if z2 > 0.0 {
                    // both Φ terms near 1: work with the tails
                    let q = (-2.0 * a * c).exp();
                    (1.0 - q) - normal_sf(z1) + q * normal_sf(z2)
                } else {
                    normal_cdf(z1) - (-2.0 * a * c + normal_cdf(z2).ln()).exp()
                };
                v.clamp(0.0, 1.0)
            }
        }
    }

    fn density(&self, t: f64) -> f64 {
        if t <= 0.0 || t == f64::INFINITY {
            return 0.0;
        }
        let (a, c) = match *self {
            AnalyticFamily::ConstantBarrier { a } => (a, 0.0),
            AnalyticFamily::LinearBarrier { a, c } => (a, c),
        };
        let drift = a + c * t;
        a / (2.0 * PI * t * t * t).sqrt() * (-drift * drift / (2.0 * t)).exp()
    }

    fn limit_at_infinity(&self) -> f64 {
        match *self {
            AnalyticFamily::ConstantBarrier { .. } => 0.0,
            AnalyticFamily::LinearBarrier { a, c } => {
                if c > 0.0 {
                    1.0 - (-2.0 * a * c).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// A survival distribution function: non-increasing, right-continuous,
/// `g(0) = 1`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurvivalSpec", into = "SurvivalSpec")]
pub enum SurvivalFn {
    /// `g(t) = values[k]` on `[breakpoints[k], breakpoints[k+1])`, with
    /// `breakpoints[0] = 0`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Analytic(AnalyticFamily),
    /// `ĝ(t) = #{samples > t} / n`. Finite samples are kept sorted; samples
    /// equal to `+∞` never pass and are counted in `censored`.
    Empirical {
        sorted: Vec<f64>,
        censored: usize,
        horizon: f64,
    },
}

/// First violated survival-function property.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub property: &'static str,
    pub index: Option<usize>,
    pub time: Option<f64>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl SurvivalFn {
    /// Piecewise-constant `g` from a breakpoint table. The table shape is
    /// checked here; the survival properties by [`SurvivalFn::validate`].
    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(invalid(
                "breakpoints",
                format!("{} breakpoints for {} values", breakpoints.len(), values.len()),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(invalid("breakpoints", "the first breakpoint must be 0"));
        }
        if let Some(k) = breakpoints.iter().position(|t| !t.is_finite()) {
            return Err(invalid("breakpoints", format!("non-finite breakpoint at index {k}")));
        }
        if let Some(k) = breakpoints.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid("breakpoints", format!("not strictly ascending at index {}", k + 1)));
        }
        if let Some(k) = values.iter().position(|v| v.is_nan()) {
            return Err(invalid("values", format!("NaN at index {k}")));
        }
        Ok(SurvivalFn::PiecewiseConstant {
            breakpoints,
            values,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SurvivalFn::PiecewiseConstant { .. } => "piecewise_constant",
            SurvivalFn::Analytic(_) => "analytic",
            SurvivalFn::Empirical { .. } => "empirical",
        }
    }

    /// `g(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SurvivalFn::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                if t < 0.0 {
                    return 1.0;
                }
                let k = breakpoints.partition_point(|&b| b <= t);
                values[k.max(1) - 1]
            }
            SurvivalFn::Analytic(fam) => fam.eval(t),
            SurvivalFn::Empirical {
                sorted, censored, ..
            } => {
                let n = (sorted.len() + censored) as f64;
                let passed = sorted.partition_point(|&s| s <= t);
                (sorted.len() - passed + censored) as f64 / n
            }
        }
    }

    /// Left limit `g(t-)`; `g(0-) = 1`.
    pub fn left_limit(&self, t: f64) -> f64 {
        match self {
            SurvivalFn::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                if t <= 0.0 {
                    return 1.0;
                }
                let k = breakpoints.partition_point(|&b| b < t);
                values[k - 1]
            }
            SurvivalFn::Analytic(fam) => fam.eval(t),
            SurvivalFn::Empirical {
                sorted, censored, ..
            } => {
                if t <= 0.0 {
                    return 1.0;
                }
                let n = (sorted.len() + censored) as f64;
                let passed = sorted.partition_point(|&s| s < t);
                (sorted.len() - passed + censored) as f64 / n
            }
        }
    }

    /// The density `-g'(t)` when `g` is absolutely continuous.
    pub fn density(&self, t: f64) -> Option<f64> {
        match self {
            SurvivalFn::Analytic(fam) => Some(fam.density(t)),
            _ => None,
        }
    }

    pub fn has_density(&self) -> bool {
        matches!(self, SurvivalFn::Analytic(_))
    }

    pub fn is_continuous(&self) -> bool {
        match self {
            SurvivalFn::Analytic(_) => true,
            _ => self.atoms(0.0).is_empty(),
        }
    }

    /// Breakpoints of a step-function `g` (including `0`); `None` for analytic `g`.
    pub fn breakpoints(&self) -> Option<Vec<f64>> {
        match self {
            SurvivalFn::PiecewiseConstant { breakpoints, .. } => Some(breakpoints.clone()),
            SurvivalFn::Empirical { sorted, .. } => {
                let mut out = vec![0.0];
                for &s in sorted {
                    if s > *out.last().unwrap() {
                        out.push(s);
                    }
                }
                Some(out)
            }
            SurvivalFn::Analytic(_) => None,
        }
    }

    /// Checks `g(0) = 1`, range and monotonicity. Analytic `g` is sampled on
    /// 10⁴ log-spaced times in `[1e-6, 1e4]`.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        match self {
            SurvivalFn::PiecewiseConstant { values, breakpoints } => {
                check_table(values, Some(breakpoints))
            }
            SurvivalFn::Empirical { .. } => Ok(()),
            SurvivalFn::Analytic(fam) => {
                match *fam {
                    AnalyticFamily::ConstantBarrier { a } | AnalyticFamily::LinearBarrier { a, .. }
                        if !(a > 0.0 && a.is_finite()) =>
                    {
                        return Err(Violation {
                            property: "parameter",
                            index: None,
                            time: None,
                            message: format!("barrier height a = {a} must be positive"),
                        });
                    }
                    _ => {}
                }
                let n = 10_000;
                let times: Vec<f64> = (0..n)
                    .map(|i| 1e-6 * 1e10f64.powf(i as f64 / (n - 1) as f64))
                    .collect();
                let mut samples = vec![self.eval(0.0)];
                samples.extend(times.iter().map(|&t| self.eval(t)));
                let mut all_times = vec![0.0];
                all_times.extend(times);
                check_table_with_slack(&samples, Some(&all_times), ANALYTIC_SLACK)
            }
        }
    }

    /// Discontinuities with `g(t-) - g(t) > threshold`, ascending.
    pub fn atoms(&self, threshold: f64) -> Vec<(f64, f64)> {
        match self {
            SurvivalFn::Analytic(_) => Vec::new(),
            _ => {
                let bps = self.breakpoints().unwrap_or_default();
                bps.into_iter()
                    .filter(|&t| t > 0.0)
                    .filter_map(|t| {
                        let jump = self.left_limit(t) - self.eval(t);
                        (jump > threshold).then_some((t, jump))
                    })
                    .collect()
            }
        }
    }

    /// Step-function `g` as an explicit breakpoint table.
    pub fn to_piecewise_constant(&self) -> Option<SurvivalFn> {
        match self {
            SurvivalFn::PiecewiseConstant { .. } => Some(self.clone()),
            SurvivalFn::Empirical { .. } => {
                let bps = self.breakpoints()?;
                let values = bps.iter().map(|&t| self.eval(t)).collect();
                Some(SurvivalFn::PiecewiseConstant {
                    breakpoints: bps,
                    values,
                })
            }
            SurvivalFn::Analytic(_) => None,
        }
    }
}

/// Rounding slack when sampling closed-form `g` for monotonicity.
const ANALYTIC_SLACK: f64 = 1e-14;

fn check_table(values: &[f64], times: Option<&[f64]>) -> std::result::Result<(), Violation> {
    check_table_with_slack(values, times, 0.0)
}

fn check_table_with_slack(
    values: &[f64],
    times: Option<&[f64]>,
    slack: f64,
) -> std::result::Result<(), Violation> {
    let at = |k: usize| times.map(|t| t[k]);
    if values[0] != 1.0 {
        return Err(Violation {
            property: "normalization",
            index: Some(0),
            time: Some(0.0),
            message: format!("g(0) ≠ 1 (got {})", values[0]),
        });
    }
    for (k, &v) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Violation {
                property: "range",
                index: Some(k),
                time: at(k),
                message: format!("value {v} outside [0, 1] at index {k}"),
            });
        }
        if k > 0 && v > values[k - 1] + slack {
            return Err(Violation {
                property: "monotonicity",
                index: Some(k),
                time: at(k),
                message: format!("not non-increasing at index {k}"),
            });
        }
    }
    Ok(())
}

/// `2Φ(a/√t) - 1`, the survival function of first passage over the level `a`.
pub fn constant_barrier_survival(a: f64) -> Result<SurvivalFn> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid("a", format!("barrier height must be positive, got {a}")));
    }
    Ok(SurvivalFn::Analytic(AnalyticFamily::ConstantBarrier { a }))
}

/// Bachelier-Lévy survival function of first passage over `a + c t`.
pub fn linear_barrier_survival(a: f64, c: f64) -> Result<SurvivalFn> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid("a", format!("barrier intercept must be positive, got {a}")));
    }
    if !c.is_finite() {
        return Err(invalid("c", "slope must be finite"));
    }
    Ok(SurvivalFn::Analytic(AnalyticFamily::LinearBarrier { a, c }))
}

/// Empirical survival function of observed passage times; `+∞` marks a path
/// that did not pass before `horizon`.
pub fn empirical_survival(samples: &[f64], horizon: f64) -> Result<SurvivalFn> {
    if samples.is_empty() {
        return Err(invalid("samples", "need at least one sample"));
    }
    if let Some(k) = samples.iter().position(|s| s.is_nan() || *s < 0.0) {
        return Err(invalid("samples", format!("negative or NaN sample at index {k}")));
    }
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|s| s.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let censored = samples.len() - sorted.len();
    Ok(SurvivalFn::Empirical {
        sorted,
        censored,
        horizon,
    })
}

/// Times `0 = t_0 < t_1 < ... < t_N` with `g(t_k) - g(t_{k+1}-) <= 1/level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationMesh {
    pub level: usize,
    pub times: Vec<f64>,
}

impl DiscretizationMesh {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Whether every point of `self` is also a point of `finer`.
    pub fn is_nested_in(&self, finer: &DiscretizationMesh) -> bool {
        self.times
            .iter()
            .all(|t| finer.times.binary_search_by(|s| s.total_cmp(t)).is_ok())
    }
}

/// Result of [`discretize`]: the mesh and `gⁿ(t) = g(t_k)` on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub mesh: DiscretizationMesh,
    pub g_n: SurvivalFn,
}

/// Smallest `t` in `[lo, hi]` with `g(t) <= level`, for continuous `g`.
fn crossing_time(g: &SurvivalFn, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g.eval(mid) <= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Piecewise-constant `gⁿ` with `gⁿ - 1/n <= g <= gⁿ` on `[0, horizon]`.
///
/// Step-function `g` is its own discretization (restricted to `horizon`).
/// For analytic `g` the mesh holds the times where `g` crosses the levels
/// `1 - k/(2n)`, plus `horizon` itself. Levels for `2n` contain those for
/// `n`, so meshes along a doubling ladder are nested.
pub fn discretize(g: &SurvivalFn, level: usize, horizon: f64) -> Result<Discretization> {
    discretize_with_cap(g, level, horizon, DEFAULT_MESH_CAP)
}

pub fn discretize_with_cap(
    g: &SurvivalFn,
    level: usize,
    horizon: f64,
    cap: usize,
) -> Result<Discretization> {
    if level == 0 {
        return Err(invalid("level", "discretization level must be >= 1"));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    g.validate().map_err(|v| Error::InvalidSurvival(v.message))?;
    let times: Vec<f64> = match g {
        SurvivalFn::Analytic(_) => {
            let end = g.eval(horizon);
            let denom = 2 * level;
            let mut times = vec![0.0];
            for k in 1..denom {
                // exact ratio so that level 2n reproduces level n's values
                let lvl = (denom - k) as f64 / denom as f64;
                if lvl <= end {
                    break;
                }
                // same bracket for every level keeps crossing times reproducible
                let t = crossing_time(g, lvl, 0.0, horizon);
                if t > *times.last().unwrap() && t < horizon {
                    times.push(t);
                }
                if times.len() > cap {
                    return Err(Error::MeshTooLarge { level, cap });
                }
            }
            times.push(horizon);
            times
        }
        _ => {
            let bps = g.breakpoints().unwrap();
            if bps.len() > cap {
                return Err(Error::MeshTooLarge { level, cap });
            }
            bps.into_iter().filter(|&t| t <= horizon).collect()
        }
    };
    build(g, level, times)
}

/// Discretization at `level` whose mesh also contains every point of
/// `previous`.
pub fn discretize_refining(
    g: &SurvivalFn,
    level: usize,
    horizon: f64,
    previous: &DiscretizationMesh,
) -> Result<Discretization> {
    let base = discretize(g, level, horizon)?;
    let mut times = base.mesh.times;
    times.extend(previous.times.iter().copied().filter(|&t| t <= horizon));
    times.sort_by(f64::total_cmp);
    times.dedup();
    build(g, level, times)
}

/// Level-`n` discretization whose mesh additionally contains the lattice
/// `j * horizon / J`, `J = ceil(horizon / max_gap)`, so that no gap exceeds
/// `max_gap`. Step-function `g` is returned unchanged.
pub fn discretize_with_gap(
    g: &SurvivalFn,
    level: usize,
    horizon: f64,
    max_gap: f64,
) -> Result<Discretization> {
    if !(max_gap > 0.0) {
        return Err(invalid("max_gap", format!("must be positive, got {max_gap}")));
    }
    let base = discretize(g, level, horizon)?;
    if !matches!(g, SurvivalFn::Analytic(_)) {
        return Ok(base);
    }
    let steps = (horizon / max_gap).ceil();
    if steps + base.mesh.len() as f64 > DEFAULT_MESH_CAP as f64 {
        return Err(Error::MeshTooLarge {
            level,
            cap: DEFAULT_MESH_CAP,
        });
    }
    let steps = steps as usize;
    let mut times = base.mesh.times;
    times.extend((1..steps).map(|j| horizon * (j as f64 / steps as f64)));
    times.sort_by(f64::total_cmp);
    times.dedup();
    build(g, level, times)
}

pub(crate) fn build(g: &SurvivalFn, level: usize, times: Vec<f64>) -> Result<Discretization> {
    let values: Vec<f64> = times.iter().map(|&t| g.eval(t)).collect();
    let g_n = SurvivalFn::piecewise_constant(times.clone(), values)?;
    Ok(Discretization {
        mesh: DiscretizationMesh { level, times },
        g_n,
    })
}

/// Fixed JSON form of a [`SurvivalFn`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurvivalSpec {
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Analytic {
        family: FamilyName,
        params: FamilyParams,
    },
    Empirical {
        #[serde(with = "ext::vec")]
        samples: Vec<f64>,
        horizon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    ConstantBarrier,
    LinearBarrier,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    pub a: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl TryFrom<SurvivalSpec> for SurvivalFn {
    type Error = Error;
    fn try_from(spec: SurvivalSpec) -> Result<Self> {
        match spec {
            SurvivalSpec::PiecewiseConstant {
                breakpoints,
                values,
            } => SurvivalFn::piecewise_constant(breakpoints, values),
            SurvivalSpec::Analytic { family, params } => match family {
                FamilyName::ConstantBarrier => {
                    if params.c.is_some() {
                        return Err(invalid("params.c", "constant_barrier takes only `a`"));
                    }
                    constant_barrier_survival(params.a)
                }
                FamilyName::LinearBarrier => {
                    let c = params
                        .c
                        .ok_or_else(|| invalid("params.c", "linear_barrier requires `c`"))?;
                    linear_barrier_survival(params.a, c)
                }
            },
            SurvivalSpec::Empirical { samples, horizon } => empirical_survival(&samples, horizon),
        }
    }
}

impl From<SurvivalFn> for SurvivalSpec {
    fn from(g: SurvivalFn) -> Self {
        match g {
            SurvivalFn::PiecewiseConstant {
                breakpoints,
                values,
            } => SurvivalSpec::PiecewiseConstant {
                breakpoints,
                values,
            },
            SurvivalFn::Analytic(AnalyticFamily::ConstantBarrier { a }) => SurvivalSpec::Analytic {
                family: FamilyName::ConstantBarrier,
                params: FamilyParams { a, c: None },
            },
            SurvivalFn::Analytic(AnalyticFamily::LinearBarrier { a, c }) => SurvivalSpec::Analytic {
                family: FamilyName::LinearBarrier,
                params: FamilyParams { a, c: Some(c) },
            },
            SurvivalFn::Empirical {
                mut sorted,
                censored,
                horizon,
            } => {
                sorted.extend(std::iter::repeat(f64::INFINITY).take(censored));
                SurvivalSpec::Empirical {
                    samples: sorted,
                    horizon,
                }
            }
        }
    }
}
