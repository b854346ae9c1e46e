//! Free-space dipole-dipole couplings on a linear chain and the collective
//! coupling parameter `K`.
//!
//! Conventions: [`pair_coupling_conjugate`] returns `C*(m) = Gamma_lm/2 - i J_lm`
//! for two nuclei `m` sites apart. The finite-chain parameter is the phased
//! lattice sum `K_l = sum_{n != l} C*(|n-l|) exp(i (n-l) dphi)`. The
//! polylogarithm closed form for the infinite chain equals half of the
//! two-sided lattice sum, so it is multiplied by a convention factor
//! (default 2) to make both routes agree.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ChainGeometry, DecayParameters};
use crate::polylog::{fold_angle, polylog_exp};
use crate::scalar::{idx, lit, CompensatedSum, Real};

/// Factor between the polylogarithm closed form and the lattice sum.
pub const DEFAULT_CONVENTION_FACTOR: f64 = 2.0;
/// Default exponential damping used near the divergent angles.
pub const DEFAULT_REGULARIZATION_EPS: f64 = 1e-6;

/// `C*_{l,l+m}` for separation `m >= 1`.
pub fn pair_coupling_conjugate<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    m: usize,
) -> Result<Complex<T>> {
    if m == 0 {
        return Err(Error::InvalidParameter(
            "pair coupling needs a non-zero separation; self-coupling enters through Gamma".into(),
        ));
    }
    let eta0 = geom.eta0();
    let cos2 = geom.dipole_angle.cos().powi(2);
    Ok(pair_term(eta0, cos2, decay.gamma0, m))
}

#[inline]
fn pair_term<T: Real>(eta0: T, cos2: T, gamma0: T, m: usize) -> Complex<T> {
    let x = eta0 * idx::<T>(m);
    let inv = T::one() / x;
    let inv2 = inv * inv;
    let inv3 = inv2 * inv;
    let three = lit::<T>(3.0);
    // (1/x + i/x^2 - 1/x^3) - cos^2 (1/x + 3i/x^2 - 3/x^3)
    let bracket = Complex::new(
        inv - inv3 - cos2 * (inv - three * inv3),
        inv2 - cos2 * three * inv2,
    );
    let prefactor = Complex::new(T::zero(), -three * gamma0);
    let (s, c) = x.sin_cos();
    prefactor * bracket * Complex::new(c, s)
}

/// Pair couplings for all separations `1..=max_separation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingTable<T> {
    values: Vec<Complex<T>>,
}

impl<T: Real> CouplingTable<T> {
    pub fn new(geom: &ChainGeometry<T>, decay: &DecayParameters<T>, max_separation: usize) -> Self {
        let eta0 = geom.eta0();
        let cos2 = geom.dipole_angle.cos().powi(2);
        let values = (1..=max_separation)
            .map(|m| pair_term(eta0, cos2, decay.gamma0, m))
            .collect();
        Self { values }
    }

    pub fn from_values(values: Vec<Complex<T>>) -> Self {
        Self { values }
    }

    pub fn max_separation(&self) -> usize {
        self.values.len()
    }

    /// `C*(m)`; panics for `m == 0` or beyond the table.
    #[inline]
    pub fn get(&self, m: usize) -> Complex<T> {
        self.values[m - 1]
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            values: self.values.iter().map(|c| c * factor).collect(),
        }
    }
}

/// How `K` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    FiniteSum,
    ClosedForm,
    CutoffSum,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::FiniteSum => "finite-sum",
            Provenance::ClosedForm => "closed-form",
            Provenance::CutoffSum => "cutoff-sum",
        }
    }
}

/// Chain the parameter refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainExtent {
    Infinite,
    Finite { len: usize, site: usize },
}

/// Collective coupling parameter `K = K^R + i K^I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary<T> {
    pub k: Complex<T>,
    pub provenance: Provenance,
    pub extent: ChainExtent,
}

impl<T: Real> CouplingSummary<T> {
    /// `K` given directly, e.g. for tests or the uncoupled limit.
    pub fn custom(k: Complex<T>) -> Self {
        Self {
            k,
            provenance: Provenance::ClosedForm,
            extent: ChainExtent::Infinite,
        }
    }

    pub fn k_real(&self) -> T {
        self.k.re
    }

    pub fn k_imag(&self) -> T {
        self.k.im
    }
}

/// Treatment of the logarithmic divergence of the infinite-chain sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Regularization<T> {
    /// Evaluate the polylogarithms at radius `exp(-epsilon)`.
    Damping { epsilon: T },
    /// Replace the infinite sum by the two-sided lattice sum up to `terms`.
    Cutoff { terms: usize },
}

impl<T: Real> Regularization<T> {
    pub fn none() -> Self {
        Regularization::Damping {
            epsilon: T::zero(),
        }
    }

    pub fn epsilon(&self) -> T {
        match self {
            Regularization::Damping { epsilon } => *epsilon,
            Regularization::Cutoff { .. } => T::zero(),
        }
    }
}

impl<T: Real> Default for Regularization<T> {
    fn default() -> Self {
        Regularization::Damping {
            epsilon: lit(DEFAULT_REGULARIZATION_EPS),
        }
    }
}

/// Options of the infinite-chain evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfiniteChainOptions<T> {
    pub regularization: Regularization<T>,
    pub convention_factor: T,
}

impl<T: Real> Default for InfiniteChainOptions<T> {
    fn default() -> Self {
        Self {
            regularization: Regularization::default(),
            convention_factor: lit(DEFAULT_CONVENTION_FACTOR),
        }
    }
}

impl<T: Real> InfiniteChainOptions<T> {
    pub fn unregularized() -> Self {
        Self {
            regularization: Regularization::none(),
            ..Self::default()
        }
    }
}

/// True if `eta0 + dphi` or `eta0 - dphi` is a multiple of `2 pi`.
pub fn is_resonant<T: Real>(geom: &ChainGeometry<T>) -> bool {
    let eta0 = geom.eta0();
    let dphi = geom.phase_step();
    fold_angle(eta0 + dphi) == T::zero() || fold_angle(eta0 - dphi) == T::zero()
}

/// `K` of the infinite chain from the polylogarithm closed form.
pub fn coupling_parameter_infinite<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    options: &InfiniteChainOptions<T>,
) -> Result<CouplingSummary<T>> {
    let epsilon = match options.regularization {
        Regularization::Damping { epsilon } => epsilon,
        Regularization::Cutoff { terms } => {
            let k = symmetric_lattice_sum(geom, decay, terms);
            return Ok(CouplingSummary {
                k,
                provenance: Provenance::CutoffSum,
                extent: ChainExtent::Infinite,
            });
        }
    };
    let eta0 = geom.eta0();
    let dphi = geom.phase_step();
    let x = |n: i32| -> Result<Complex<T>> {
        Ok(polylog_exp(n, epsilon, eta0 + dphi)? + polylog_exp(n, epsilon, eta0 - dphi)?)
    };
    let (x1, x2, x3) = (x(1)?, x(2)?, x(3)?);
    let g0 = decay.gamma0;
    let three = lit::<T>(3.0);
    let four = lit::<T>(4.0);
    let sin2 = geom.dipole_angle.sin().powi(2);
    let angular = T::one() + three * (lit::<T>(2.0) * geom.dipole_angle).cos();
    let i = Complex::new(T::zero(), T::one());
    let k = -(i * (three * g0 / (lit::<T>(2.0) * eta0) * sin2)) * x1
        - x2 * (three * g0 / (four * eta0 * eta0) * angular)
        - (i * (three * g0 / (four * eta0.powi(3)) * angular)) * x3;
    Ok(CouplingSummary {
        k: k * options.convention_factor,
        provenance: Provenance::ClosedForm,
        extent: ChainExtent::Infinite,
    })
}

/// `sum_{m=1}^{terms} C*(m) (e^{i m dphi} + e^{-i m dphi})`.
fn symmetric_lattice_sum<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    terms: usize,
) -> Complex<T> {
    let eta0 = geom.eta0();
    let cos2 = geom.dipole_angle.cos().powi(2);
    let dphi = geom.phase_step();
    let mut acc = CompensatedSum::new();
    for m in 1..=terms {
        let c = pair_term(eta0, cos2, decay.gamma0, m);
        let two_cos = lit::<T>(2.0) * (idx::<T>(m) * dphi).cos();
        acc.add(c * two_cos);
    }
    acc.value()
}

/// Phased sum over one side of site `l`: `sum_{m=1}^{terms} C*(m) e^{i sign m dphi}`.
fn one_sided_sum<T: Real>(eta0: T, cos2: T, gamma0: T, dphi: T, terms: usize) -> Complex<T> {
    let mut acc = CompensatedSum::new();
    for m in 1..=terms {
        let c = pair_term(eta0, cos2, gamma0, m);
        let (s, co) = (idx::<T>(m) * dphi).sin_cos();
        acc.add(c * Complex::new(co, s));
    }
    acc.value()
}

/// `K_l` at site `l` (1-based) of a chain with `len` nuclei.
pub fn coupling_parameter_finite<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    site: usize,
    len: usize,
) -> Result<CouplingSummary<T>> {
    if len == 0 || site == 0 || site > len {
        return Err(Error::SiteOutOfRange { site, len });
    }
    let eta0 = geom.eta0();
    let cos2 = geom.dipole_angle.cos().powi(2);
    let dphi = geom.phase_step();
    // right neighbours carry e^{+i m dphi}, left ones e^{-i m dphi}
    let right = one_sided_sum(eta0, cos2, decay.gamma0, dphi, len - site);
    let left = one_sided_sum(eta0, cos2, decay.gamma0, -dphi, site - 1);
    Ok(CouplingSummary {
        k: right + left,
        provenance: Provenance::FiniteSum,
        extent: ChainExtent::Finite { len, site },
    })
}

/// Site used as "the central nucleus" of a chain, `max(1, len / 2)`.
pub fn central_site(len: usize) -> usize {
    (len / 2).max(1)
}

/// `K_l` for every site of the chain, computed in parallel.
pub fn coupling_profile<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    len: usize,
) -> Result<Vec<CouplingSummary<T>>> {
    (1..=len)
        .into_par_iter()
        .map(|l| coupling_parameter_finite(geom, decay, l, len))
        .collect()
}

/// Collective drive `D_l = sum_{n != l} C*(|n-l|) s_n` at 0-based index `i`.
#[inline]
pub fn drive_at<T: Real>(table: &CouplingTable<T>, coherences: &[Complex<T>], i: usize) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (n, s) in coherences[..i].iter().enumerate() {
        acc = acc + table.get(i - n) * s;
    }
    for (d, s) in coherences[i + 1..].iter().enumerate() {
        acc = acc + table.get(d + 1) * s;
    }
    acc
}

/// `kappa_l = D_l e^{-i phi_l}` for site `l` (1-based).
pub fn kappa_drive<T: Real>(
    table: &CouplingTable<T>,
    coherences: &[Complex<T>],
    site: usize,
) -> Result<Complex<T>> {
    let len = coherences.len();
    if site == 0 || site > len {
        return Err(Error::SiteOutOfRange { site, len });
    }
    if len > 1 && table.max_separation() < len - 1 {
        return Err(Error::InvalidParameter(format!(
            "coupling table covers separations up to {}, chain needs {}",
            table.max_separation(),
            len - 1
        )));
    }
    let i = site - 1;
    let d = drive_at(table, coherences, i);
    let phi = coherences[i].arg();
    Ok(d * Complex::new(phi.cos(), -phi.sin()))
}

/// Drives `D_l` of a whole chain computed as one FFT convolution.
///
/// The coupling matrix is symmetric Toeplitz, so it is embedded in a
/// circulant of size at least `2N - 1` and applied in `O(N log N)`.
pub struct ToeplitzDrive<T: Real> {
    len: usize,
    kernel_spectrum: Vec<Complex<T>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for ToeplitzDrive<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzDrive")
            .field("len", &self.len)
            .field("fft_len", &self.kernel_spectrum.len())
            .finish()
    }
}

impl<T: Real> ToeplitzDrive<T> {
    pub fn new(table: &CouplingTable<T>, len: usize) -> Result<Self> {
        if len > 1 && table.max_separation() < len - 1 {
            return Err(Error::InvalidParameter(format!(
                "coupling table covers separations up to {}, chain needs {}",
                table.max_separation(),
                len - 1
            )));
        }
        let size = (2 * len.max(1)).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut kernel = vec![Complex::new(T::zero(), T::zero()); size];
        for m in 1..len {
            kernel[m] = table.get(m);
            kernel[size - m] = table.get(m);
        }
        forward.process(&mut kernel);
        let scale = T::one() / idx::<T>(size);
        for k in &mut kernel {
            *k = *k * scale;
        }
        Ok(Self {
            len,
            kernel_spectrum: kernel,
            forward,
            inverse,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `D_l` for every site of `coherences`.
    pub fn apply(&self, coherences: &[Complex<T>]) -> Vec<Complex<T>> {
        let size = self.kernel_spectrum.len();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); size];
        buf[..coherences.len()].copy_from_slice(coherences);
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *b = *b * k;
        }
        self.inverse.process(&mut buf);
        buf.truncate(coherences.len());
        buf
    }
}
