//! Experiment-facing signals derived from trajectories.
//!
//! The interferometer superposes the forward-scattered fields of a sample
//! chain and a reference chain whose resonance is shifted by `Delta`. A shift
//! of the transition energy by `Delta` multiplies the coherence by
//! `exp(-i Delta t)`, so the combined intensity is
//! `|A_ref(t) exp(-i Delta t) + A_sample(t)|^2` with both amplitudes carrying
//! their own phases.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{idx, lit, to_f64, Real};
use crate::trajectory::{interpolate, SiteRecord, Trajectory};

/// How the two field amplitudes of the interferometer are modelled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeModel {
    /// Full `|s|(t) exp(i phi(t))` of each trajectory.
    FromTrajectory,
    /// Both magnitudes replaced by `exp(-Gamma t / 2)`, phases kept.
    EqualExponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferometerSpec<T> {
    /// Resonance shift of the reference chain, in units of `Gamma`.
    pub detuning: T,
    pub sample_incidence: T,
    pub reference_incidence: T,
    pub pulse_area: T,
    pub amplitude_model: AmplitudeModel,
    /// Decay rate used by [`AmplitudeModel::EqualExponential`].
    pub gamma: T,
}

impl<T: Real> Default for InterferometerSpec<T> {
    fn default() -> Self {
        Self {
            detuning: lit(-3.0),
            sample_incidence: lit(0.005),
            reference_incidence: lit(0.22),
            pulse_area: T::FRAC_PI_2(),
            amplitude_model: AmplitudeModel::FromTrajectory,
            gamma: T::one(),
        }
    }
}

/// Forward-scattered field `N_eff |s|(t) exp(i phi(t))` of one record of
/// `traj`. With `normalize` the field has unit magnitude at the first sample.
pub fn forward_field<T: Real>(
    traj: &Trajectory<T>,
    site: Option<usize>,
    n_effective: T,
    normalize: bool,
) -> Result<Vec<Complex<T>>> {
    let rec = traj.record(site).ok_or_else(|| {
        Error::InvalidParameter(format!("trajectory has no record for site {site:?}"))
    })?;
    let mut scale = n_effective;
    if normalize {
        let first = rec.coherence_abs.first().copied().unwrap_or_else(T::zero);
        if !(first > T::zero()) {
            return Err(Error::InvalidParameter(
                "cannot normalize a field that vanishes at the first sample".into(),
            ));
        }
        scale = T::one() / first;
    }
    Ok(rec
        .coherence_abs
        .iter()
        .zip(&rec.phase)
        .map(|(&a, &phi)| Complex::from_polar(a * scale, phi))
        .collect())
}

/// Combined interferometer intensity on the sample grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityTrace<T> {
    pub times: Vec<T>,
    /// Intensity divided by `(|A_ref(0)| + |A_sample(0)|)^2`.
    pub intensity: Vec<T>,
    pub amplitude_model: AmplitudeModel,
}

fn primary_record<T: Real>(traj: &Trajectory<T>) -> Result<&SiteRecord<T>> {
    traj.records
        .first()
        .ok_or_else(|| Error::InvalidParameter("trajectory has no records".into()))
}

fn resampled<T: Real>(from: &Trajectory<T>, values: &[T], onto: &[T]) -> Result<Vec<T>> {
    let (lo, hi) = (from.times[0], *from.times.last().unwrap());
    let (start, end) = (onto[0], *onto.last().unwrap());
    if start < lo || end > hi {
        return Err(Error::WindowOutOfRange {
            start: to_f64(start),
            end: to_f64(end),
            span_start: to_f64(lo),
            span_end: to_f64(hi),
        });
    }
    Ok(onto.iter().map(|&t| interpolate(&from.times, values, t)).collect())
}

/// `|A_ref(t) exp(-i Delta t) + A_sample(t)|^2`, normalized to the
/// in-phase sum of the initial magnitudes.
///
/// The reference is brought onto the sample grid by linear interpolation
/// when `resample` is set; otherwise differing grids are an error.
pub fn combined_intensity<T: Real>(
    spec: &InterferometerSpec<T>,
    sample: &Trajectory<T>,
    reference: &Trajectory<T>,
    resample: bool,
) -> Result<IntensityTrace<T>> {
    sample.validate()?;
    reference.validate()?;
    let s = primary_record(sample)?;
    let r = primary_record(reference)?;
    let times = sample.times.clone();
    let (r_abs, r_phase) = if reference.times == sample.times {
        (r.coherence_abs.clone(), r.phase.clone())
    } else if resample {
        (
            resampled(reference, &r.coherence_abs, &times)?,
            resampled(reference, &r.phase, &times)?,
        )
    } else {
        return Err(Error::GridMismatch);
    };
    let (a_s0, a_r0) = (s.coherence_abs[0], r_abs[0]);
    if !(a_s0 > T::zero() && a_r0 > T::zero()) {
        return Err(Error::InvalidParameter(
            "both chains need a non-zero initial coherence".into(),
        ));
    }
    let half = lit::<T>(0.5);
    let mut intensity = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let (mag_s, mag_r) = match spec.amplitude_model {
            AmplitudeModel::FromTrajectory => (s.coherence_abs[k] / a_s0, r_abs[k] / a_r0),
            AmplitudeModel::EqualExponential => {
                let e = (-half * spec.gamma * t).exp();
                (e, e)
            }
        };
        let field = Complex::from_polar(mag_r, r_phase[k] - spec.detuning * t)
            + Complex::from_polar(mag_s, s.phase[k]);
        intensity.push(field.norm_sqr() / lit(4.0));
    }
    Ok(IntensityTrace {
        times,
        intensity,
        amplitude_model: spec.amplitude_model,
    })
}

/// Interior local minima of `values`, refined by fitting a parabola through
/// each discrete minimum and its two neighbours. Returned in time order.
pub fn beat_minima<T: Real>(times: &[T], values: &[T]) -> Result<Vec<(T, T)>> {
    if times.len() != values.len() {
        return Err(Error::GridMismatch);
    }
    let mut out = Vec::new();
    for i in 1..times.len().saturating_sub(1) {
        let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
        if !(y1 < y0 && y1 <= y2) {
            continue;
        }
        let (x0, x1, x2) = (times[i - 1], times[i], times[i + 1]);
        // Newton form of the interpolating parabola
        let d01 = (y1 - y0) / (x1 - x0);
        let d12 = (y2 - y1) / (x2 - x1);
        let c2 = (d12 - d01) / (x2 - x0);
        if !(c2 > T::zero()) {
            out.push((x1, y1));
            continue;
        }
        let x = (x0 + x1) / lit(2.0) - d01 / (lit::<T>(2.0) * c2);
        let y = y0 + d01 * (x - x0) + c2 * (x - x0) * (x - x1);
        out.push((x, y));
    }
    Ok(out)
}

/// Least-squares slopes of `ln|s|` and `phi` in the low-excitation limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowExcitationFit<T> {
    /// `-(d ln|s| / dt)`, which estimates `Gamma/2 + K^R`.
    pub decay_rate: T,
    /// `d phi / dt`, which estimates `-K^I`.
    pub phase_slope: T,
    /// Root-mean-square residuals of the two linear fits.
    pub log_residual: T,
    pub phase_residual: T,
    pub samples: usize,
    pub warnings: Vec<String>,
}

/// Largest initial population accepted by [`fit_low_excitation`],
/// `sin^2(1e-3 pi / 2)` with a little slack.
pub fn low_excitation_population_limit() -> f64 {
    (0.5e-3 * std::f64::consts::PI).sin().powi(2) * (1.0 + 1e-9)
}

/// Residual RMS above which a fit is reported as not linear.
pub const FIT_RESIDUAL_WARNING: f64 = 1e-6;

fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> (T, T, T) {
    let n = idx::<T>(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: T = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Fits the samples of one record with `t <= t_max`.
pub fn fit_low_excitation<T: Real>(
    traj: &Trajectory<T>,
    site: Option<usize>,
    t_max: T,
) -> Result<LowExcitationFit<T>> {
    traj.validate()?;
    let rec = traj.record(site).ok_or_else(|| {
        Error::InvalidParameter(format!("trajectory has no record for site {site:?}"))
    })?;
    if to_f64(rec.population[0]) > low_excitation_population_limit() {
        return Err(Error::InvalidParameter(format!(
            "initial population {} is outside the low-excitation regime",
            rec.population[0]
        )));
    }
    let keep: Vec<usize> = (0..traj.len()).filter(|&k| traj.times[k] <= t_max).collect();
    if keep.len() < 3 {
        return Err(Error::InvalidParameter(
            "need at least three samples inside the fit window".into(),
        ));
    }
    let ts: Vec<T> = keep.iter().map(|&k| traj.times[k]).collect();
    let mut logs = Vec::with_capacity(keep.len());
    for &k in &keep {
        let a = rec.coherence_abs[k];
        if !(a > T::zero()) {
            return Err(Error::InvalidParameter("coherence vanished inside the fit window".into()));
        }
        logs.push(a.ln());
    }
    let phases: Vec<T> = keep.iter().map(|&k| rec.phase[k]).collect();
    let (log_slope, _, log_residual) = linear_fit(&ts, &logs);
    let (phase_slope, _, phase_residual) = linear_fit(&ts, &phases);
    let mut warnings = Vec::new();
    for (name, r) in [("log-magnitude", log_residual), ("phase", phase_residual)] {
        if to_f64(r) > FIT_RESIDUAL_WARNING {
            warnings.push(format!("{name} fit residual {r:e} indicates non-linear evolution"));
        }
    }
    Ok(LowExcitationFit {
        decay_rate: -log_slope,
        phase_slope,
        log_residual,
        phase_residual,
        samples: keep.len(),
        warnings,
    })
}
