//! Polylogarithms `Li_n(z)` of order 1, 2 and 3 on and inside the unit circle.
//!
//! The argument is passed as `z = exp(-epsilon + i theta)`. Order 1 is the
//! closed form `-ln(1 - z)`. Orders 2 and 3 use the expansion in powers of
//! `mu = ln z`,
//!
//! ```text
//! Li_s(e^mu) = sum_{k != s-1} zeta(s-k) mu^k / k!  +  mu^(s-1)/(s-1)! [H_(s-1) - ln(-mu)],
//! ```
//!
//! valid for `|mu| < 2 pi`, after folding `theta` into `(-pi, pi]`. The
//! coefficients with `k >= s` only involve even zeta values, which are
//! tabulated once. Deep inside the disk the plain power series is used.

use std::sync::OnceLock;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{complex_exp_m1, idx, lit, Real};

/// Apery's constant.
pub const ZETA3: f64 = 1.202_056_903_159_594_3;

const EVEN_ZETA_TERMS: usize = 40;

/// `zeta(2j)` for `j = 1..=EVEN_ZETA_TERMS`.
fn even_zeta() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let pi = std::f64::consts::PI;
        (1..=EVEN_ZETA_TERMS)
            .map(|j| match j {
                1 => pi * pi / 6.0,
                2 => pi.powi(4) / 90.0,
                3 => pi.powi(6) / 945.0,
                _ => {
                    let s = 2 * j as i32;
                    // descending order keeps the small terms from being lost
                    let mut acc = 0.0;
                    for k in (2..=200).rev() {
                        acc += (k as f64).powi(-s);
                    }
                    1.0 + acc
                }
            })
            .collect()
    })
}

/// Folds an angle into `(-pi, pi]`.
pub fn fold_angle<T: Real>(theta: T) -> T {
    let tau = T::TAU();
    let mut r = (theta + T::PI()) % tau;
    if r <= T::zero() {
        r += tau;
    }
    r - T::PI()
}

/// `Li_n(exp(i theta))` on the unit circle.
pub fn polylog_unit_circle<T: Real>(n: i32, theta: T) -> Result<Complex<T>> {
    polylog_exp(n, T::zero(), theta)
}

/// `Li_n(exp(-epsilon + i theta))` for `epsilon >= 0`.
pub fn polylog_exp<T: Real>(n: i32, epsilon: T, theta: T) -> Result<Complex<T>> {
    if !(1..=3).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    if !(epsilon >= T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "regularization epsilon must be non-negative, got {epsilon}"
        )));
    }
    let folded = fold_angle(theta);
    let mu = Complex::new(-epsilon, folded);
    if n == 1 {
        if epsilon == T::zero() && folded == T::zero() {
            return Err(Error::Divergence {
                theta: theta.to_f64().unwrap_or(f64::NAN),
            });
        }
        // 1 - z = -(e^mu - 1)
        return Ok(-(-complex_exp_m1(mu)).ln());
    }
    if epsilon > T::one() {
        return Ok(power_series(n, mu.exp()));
    }
    Ok(log_series(n, mu))
}

fn power_series<T: Real>(n: i32, z: Complex<T>) -> Complex<T> {
    let mut zk = z;
    let mut acc = Complex::new(T::zero(), T::zero());
    let mut k = 1usize;
    loop {
        let term = zk / idx::<T>(k).powi(n);
        acc = acc + term;
        if term.norm() <= T::epsilon() * acc.norm() || k > 10_000 {
            return acc;
        }
        zk = zk * z;
        k += 1;
    }
}

fn log_series<T: Real>(n: i32, mu: Complex<T>) -> Complex<T> {
    let zero = Complex::new(T::zero(), T::zero());
    let zeta2 = T::PI() * T::PI() / lit(6.0);
    let zeta3 = lit::<T>(ZETA3);
    if mu == zero {
        return Complex::new(if n == 2 { zeta2 } else { zeta3 }, T::zero());
    }
    let log_neg_mu = (-mu).ln();
    let one = Complex::new(T::one(), T::zero());
    // terms with k < s, including the logarithmic one
    let head = match n {
        2 => Complex::new(zeta2, T::zero()) + mu * (one - log_neg_mu) - mu * mu / lit::<T>(4.0),
        _ => {
            let three_halves = Complex::new(lit::<T>(1.5), T::zero());
            Complex::new(zeta3, T::zero())
                + mu * zeta2
                + mu * mu / lit::<T>(2.0) * (three_halves - log_neg_mu)
                - mu * mu * mu / lit::<T>(12.0)
        }
    };
    // k = 2j - 1 + s: mu^(s-1) (-1)^j 2 zeta(2j) (mu/2pi)^(2j) (2j-1)!/(2j-1+s)!
    let w = {
        let r = mu / T::TAU();
        r * r
    };
    let mut wj = one;
    let mut tail = zero;
    for (j0, &z2j) in even_zeta().iter().enumerate() {
        let j = j0 + 1;
        wj = wj * w;
        let twoj = 2 * j;
        let ratio = match n {
            2 => T::one() / (idx::<T>(twoj) * idx::<T>(twoj + 1)),
            _ => T::one() / (idx::<T>(twoj) * idx::<T>(twoj + 1) * idx::<T>(twoj + 2)),
        };
        let sign = if j % 2 == 0 { T::one() } else { -T::one() };
        let term = wj * (sign * lit::<T>(2.0 * z2j) * ratio);
        tail = tail + term;
        if term.norm() <= T::epsilon() * lit(1e-2) * tail.norm().max(T::min_positive_value()) {
            break;
        }
    }
    let prefactor = if n == 2 { mu } else { mu * mu };
    head + prefactor * tail
}
