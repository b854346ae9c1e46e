//! Explicit Runge-Kutta integrators with output on a prescribed time grid.
//!
//! [`Method::Dopri5`] is the Dormand-Prince 5(4) pair with Hairer's
//! fourth-order continuous extension; grid points falling inside an accepted
//! step are interpolated rather than stepped to. [`Method::Rk4`] is classical
//! fixed-step RK4 that lands exactly on every grid point, so its output is
//! reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{idx, lit, to_f64, Real};

/// Right-hand side `dy/dt = f(t, y)` of a real ODE system.
pub trait OdeSystem<T: Real>: Sync {
    fn dim(&self) -> usize;

    fn rhs(&self, t: T, y: &[T], dydt: &mut [T]);

    /// Magnitude of component `i` used for relative error control.
    ///
    /// Systems storing complex numbers as (re, im) pairs should return the
    /// modulus, so that a component crossing zero is not over-resolved.
    fn magnitude(&self, y: &[T], i: usize) -> T {
        y[i].abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method<T> {
    /// Adaptive Dormand-Prince 5(4) with local tolerance `rtol * |y| + atol`.
    Dopri5 { rtol: T, atol: T },
    /// Classical RK4 with (at most) the given step.
    Rk4 { step: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings<T> {
    pub method: Method<T>,
    pub max_steps: usize,
}

pub const DEFAULT_RTOL: f64 = 1e-10;

impl<T: Real> IntegratorSettings<T> {
    /// Adaptive integration at relative tolerance `rtol`.
    pub fn adaptive(rtol: T) -> Self {
        Self {
            method: Method::Dopri5 {
                rtol,
                atol: rtol * lit(1e-8),
            },
            max_steps: 10_000_000,
        }
    }

    pub fn fixed(step: T) -> Self {
        Self {
            method: Method::Rk4 { step },
            max_steps: 10_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Dopri5 { rtol, atol } => {
                if !(rtol >= lit(1e-12) && rtol <= lit(1e-4)) {
                    return Err(Error::InvalidParameter(format!(
                        "relative tolerance must lie in [1e-12, 1e-4], got {rtol}"
                    )));
                }
                if !(atol >= T::zero()) {
                    return Err(Error::InvalidParameter(format!(
                        "absolute tolerance must be non-negative, got {atol}"
                    )));
                }
            }
            Method::Rk4 { step } => {
                if !(step > T::zero() && step.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "fixed step must be positive, got {step}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> Default for IntegratorSettings<T> {
    fn default() -> Self {
        Self::adaptive(lit(DEFAULT_RTOL))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Uniform grid of `points` samples on `[start, end]`.
pub fn uniform_grid<T: Real>(start: T, end: T, points: usize) -> Vec<T> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let span = end - start;
            let last = idx::<T>(points - 1);
            (0..points)
                .map(|i| start + span * idx::<T>(i) / last)
                .collect()
        }
    }
}

fn check_grid<T: Real>(t0: T, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("output grid is empty".into()));
    }
    if grid[0] < t0 {
        return Err(Error::InvalidParameter(
            "output grid starts before the initial time".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "output grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Integrates `sys` from `(t0, y0)` and calls `observer(i, grid[i], y)` for
/// every grid point in order.
pub fn integrate<T, S, F>(
    sys: &S,
    t0: T,
    y0: &[T],
    grid: &[T],
    settings: &IntegratorSettings<T>,
    observer: F,
) -> Result<IntegrationStats>
where
    T: Real,
    S: OdeSystem<T> + ?Sized,
    F: FnMut(usize, T, &[T]),
{
    settings.validate()?;
    check_grid(t0, grid)?;
    if y0.len() != sys.dim() {
        return Err(Error::InvalidParameter(format!(
            "initial state has {} components, system expects {}",
            y0.len(),
            sys.dim()
        )));
    }
    match settings.method {
        Method::Dopri5 { rtol, atol } => {
            dopri5(sys, t0, y0, grid, rtol, atol, settings.max_steps, observer)
        }
        Method::Rk4 { step } => rk4(sys, t0, y0, grid, step, observer),
    }
}

fn failure<T: Real>(t: T, reason: impl Into<String>, y: &[T]) -> Error {
    Error::IntegrationFailure {
        t: to_f64(t),
        reason: reason.into(),
        last_state: y.iter().map(|&v| to_f64(v)).collect(),
    }
}

fn rk4<T, S, F>(sys: &S, t0: T, y0: &[T], grid: &[T], step: T, mut observer: F) -> Result<IntegrationStats>
where
    T: Real,
    S: OdeSystem<T> + ?Sized,
    F: FnMut(usize, T, &[T]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];
    let mut stats = IntegrationStats::default();
    let half = lit::<T>(0.5);
    let sixth = lit::<T>(1.0 / 6.0);
    let two = lit::<T>(2.0);
    let mut t = t0;
    for (i, &target) in grid.iter().enumerate() {
        let span = target - t;
        if span > T::zero() {
            let substeps = (span / step).ceil().to_usize().unwrap_or(1).max(1);
            let h = span / idx::<T>(substeps);
            for k in 0..substeps {
                let ts = t + h * idx::<T>(k);
                sys.rhs(ts, &y, &mut k1);
                for j in 0..n {
                    tmp[j] = y[j] + half * h * k1[j];
                }
                sys.rhs(ts + half * h, &tmp, &mut k2);
                for j in 0..n {
                    tmp[j] = y[j] + half * h * k2[j];
                }
                sys.rhs(ts + half * h, &tmp, &mut k3);
                for j in 0..n {
                    tmp[j] = y[j] + h * k3[j];
                }
                sys.rhs(ts + h, &tmp, &mut k4);
                for j in 0..n {
                    y[j] += sixth * h * (k1[j] + two * k2[j] + two * k3[j] + k4[j]);
                }
                stats.accepted += 1;
                stats.evaluations += 4;
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(failure(target, "non-finite state", &y));
            }
            t = target;
        }
        observer(i, target, &y);
    }
    Ok(stats)
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[allow(clippy::too_many_arguments)]
fn dopri5<T, S, F>(
    sys: &S,
    t0: T,
    y0: &[T],
    grid: &[T],
    rtol: T,
    atol: T,
    max_steps: usize,
    mut observer: F,
) -> Result<IntegrationStats>
where
    T: Real,
    S: OdeSystem<T> + ?Sized,
    F: FnMut(usize, T, &[T]),
{
    let n = y0.len();
    let t_end = *grid.last().expect("grid checked non-empty");
    let mut stats = IntegrationStats::default();
    let mut next = 0;
    while next < grid.len() && grid[next] == t0 {
        observer(next, t0, y0);
        next += 1;
    }
    if next == grid.len() {
        return Ok(stats);
    }

    let c = |x: f64| lit::<T>(x);
    let mut y = y0.to_vec();
    let mut ynew = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];
    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut k5 = vec![T::zero(); n];
    let mut k6 = vec![T::zero(); n];
    let mut k7 = vec![T::zero(); n];
    let mut dense = vec![T::zero(); n];
    let mut out = vec![T::zero(); n];

    let scale = |yv: &[T], yw: &[T], i: usize| -> T {
        atol + rtol * sys.magnitude(yv, i).max(sys.magnitude(yw, i))
    };

    sys.rhs(t0, &y, &mut k1);
    stats.evaluations += 1;

    // initial step (Hairer-Wanner)
    let mut h = {
        let mut d0 = T::zero();
        let mut d1 = T::zero();
        for i in 0..n {
            let sc = scale(&y, &y, i).max(T::min_positive_value());
            d0 += (y[i] / sc).powi(2);
            d1 += (k1[i] / sc).powi(2);
        }
        let nn = idx::<T>(n.max(1));
        let (d0, d1) = ((d0 / nn).sqrt(), (d1 / nn).sqrt());
        let mut h0 = if d0 < c(1e-5) || d1 < c(1e-5) {
            c(1e-6)
        } else {
            c(0.01) * d0 / d1
        };
        h0 = h0.min(t_end - t0);
        for i in 0..n {
            tmp[i] = y[i] + h0 * k1[i];
        }
        sys.rhs(t0 + h0, &tmp, &mut k2);
        stats.evaluations += 1;
        let mut d2 = T::zero();
        for i in 0..n {
            let sc = scale(&y, &y, i).max(T::min_positive_value());
            d2 += ((k2[i] - k1[i]) / sc).powi(2);
        }
        let d2 = (d2 / nn).sqrt() / h0;
        let dmax = d1.max(d2);
        let h1 = if dmax <= c(1e-15) {
            (h0 * c(1e-3)).max(c(1e-6))
        } else {
            (c(0.01) / dmax).powf(c(0.2))
        };
        (c(100.0) * h0).min(h1).min(t_end - t0)
    };

    let mut t = t0;
    let mut last_rejected = false;
    let safety = c(0.9);
    let tiny = c(16.0) * T::epsilon();
    loop {
        if stats.accepted + stats.rejected >= max_steps {
            return Err(failure(t, "maximum number of steps exceeded", &y));
        }
        if h <= tiny * t.abs().max(T::one()) {
            return Err(failure(t, "step size underflow", &y));
        }
        if t + h > t_end || (t_end - t - h) < tiny * t_end.abs().max(T::one()) {
            h = t_end - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * c(A21) * k1[i];
        }
        sys.rhs(t + c(C2) * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (c(A31) * k1[i] + c(A32) * k2[i]);
        }
        sys.rhs(t + c(C3) * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (c(A41) * k1[i] + c(A42) * k2[i] + c(A43) * k3[i]);
        }
        sys.rhs(t + c(C4) * h, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (c(A51) * k1[i] + c(A52) * k2[i] + c(A53) * k3[i] + c(A54) * k4[i]);
        }
        sys.rhs(t + c(C5) * h, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (c(A61) * k1[i]
                    + c(A62) * k2[i]
                    + c(A63) * k3[i]
                    + c(A64) * k4[i]
                    + c(A65) * k5[i]);
        }
        sys.rhs(t + h, &tmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i]
                + h * (c(A71) * k1[i]
                    + c(A73) * k3[i]
                    + c(A74) * k4[i]
                    + c(A75) * k5[i]
                    + c(A76) * k6[i]);
        }
        sys.rhs(t + h, &ynew, &mut k7);
        stats.evaluations += 6;

        let mut err = T::zero();
        for i in 0..n {
            let e = h
                * (c(E1) * k1[i]
                    + c(E3) * k3[i]
                    + c(E4) * k4[i]
                    + c(E5) * k5[i]
                    + c(E6) * k6[i]
                    + c(E7) * k7[i]);
            let sc = scale(&y, &ynew, i);
            err += if sc > T::zero() {
                (e / sc).powi(2)
            } else if e == T::zero() {
                T::zero()
            } else {
                T::infinity()
            };
        }
        let err = (err / idx::<T>(n.max(1))).sqrt();

        if !err.is_finite() {
            stats.rejected += 1;
            h = h * c(0.2);
            last_rejected = true;
            continue;
        }

        let factor = if err == T::zero() {
            c(10.0)
        } else {
            (safety * err.powf(c(-0.2))).max(c(0.2)).min(c(10.0))
        };

        if err <= T::one() {
            stats.accepted += 1;
            let t_new = t + h;
            // dense output for grid points inside (t, t_new]
            if next < grid.len() && grid[next] <= t_new {
                for i in 0..n {
                    dense[i] = h
                        * (c(D1) * k1[i]
                            + c(D3) * k3[i]
                            + c(D4) * k4[i]
                            + c(D5) * k5[i]
                            + c(D6) * k6[i]
                            + c(D7) * k7[i]);
                }
                while next < grid.len() && grid[next] <= t_new {
                    let tg = grid[next];
                    if tg == t_new {
                        observer(next, tg, &ynew);
                    } else {
                        let theta = (tg - t) / h;
                        let theta1 = T::one() - theta;
                        for i in 0..n {
                            let ydiff = ynew[i] - y[i];
                            let bspl = h * k1[i] - ydiff;
                            let r4 = ydiff - h * k7[i] - bspl;
                            out[i] = y[i]
                                + theta
                                    * (ydiff
                                        + theta1 * (bspl + theta * (r4 + theta1 * dense[i])));
                        }
                        observer(next, tg, &out);
                    }
                    next += 1;
                }
            }
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            if next >= grid.len() {
                return Ok(stats);
            }
            h = if last_rejected {
                h * factor.min(T::one())
            } else {
                h * factor
            };
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h = h * factor.min(T::one());
            last_rejected = true;
        }
    }
}
