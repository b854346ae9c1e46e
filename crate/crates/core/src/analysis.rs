//! Sweeps and finite-size studies built on the lower-level modules.
//!
//! Independent sweep points run concurrently on the rayon pool; every point
//! is a pure pipeline from couplings through dynamics to observables.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::couplings::{
    central_site, coupling_parameter_finite, coupling_parameter_infinite, coupling_profile,
    CouplingSummary, CouplingTable, InfiniteChainOptions,
};
use crate::dynamics::{evolve_finite, evolve_reduced, Drive, ExcitationSpec, FiniteChain, ReducedModel};
use crate::error::{Error, Result};
use crate::observables::{beat_minima, combined_intensity, InterferometerSpec, IntensityTrace};
use crate::ode::{uniform_grid, IntegratorSettings};
use crate::params::{ChainGeometry, DecayParameters};
use crate::scalar::{idx, to_f64, Real};
use crate::trajectory::{interpolate, Trajectory};

/// Default number of samples of the deviation metric.
pub const DEFAULT_DEVIATION_SAMPLES: usize = 200;
/// Default time window of the deviation metric, in `1/Gamma`.
pub const DEFAULT_DEVIATION_WINDOW: (f64, f64) = (0.0, 2.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    ThetaIn,
    PulseArea,
    ChainLength,
    SiteIndex,
}

/// Description of one sweep; its hash names the output files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Snapshot of every parameter held fixed during the sweep.
    pub fixed: serde_json::Value,
    pub observables: Vec<String>,
    pub output: String,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("sweep has no values".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("sweep values must be finite".into()));
        }
        if matches!(self.parameter, SweepParameter::ChainLength | SweepParameter::SiteIndex)
            && self.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0)
        {
            return Err(Error::InvalidParameter(
                "chain lengths and site indices must be positive integers".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("sweep spec serializes");
        hex_digest(&bytes)
    }

    /// `{stem}_{first 8 hash characters}`.
    pub fn file_stem(&self, stem: &str) -> String {
        format!("{stem}_{}", &self.hash()[..8])
    }
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    CoherenceAbs,
    Phase,
    Population,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::CoherenceAbs, Observable::Phase, Observable::Population];

    pub fn as_str(&self) -> &'static str {
        match self {
            Observable::CoherenceAbs => "coherence_abs",
            Observable::Phase => "phase",
            Observable::Population => "population",
        }
    }

    fn values<'a, T>(&self, rec: &'a crate::trajectory::SiteRecord<T>) -> &'a [T] {
        match self {
            Observable::CoherenceAbs => &rec.coherence_abs,
            Observable::Phase => &rec.phase,
            Observable::Population => &rec.population,
        }
    }
}

/// `(1/M) sum_i |O_a(t_i) - O_b(t_i)|^2` over `M` uniform samples of
/// `window`, interpolating both trajectories linearly.
pub fn deviation_metric<T: Real>(
    a: &Trajectory<T>,
    a_site: Option<usize>,
    b: &Trajectory<T>,
    b_site: Option<usize>,
    observable: Observable,
    window: (T, T),
    samples: usize,
) -> Result<T> {
    if samples == 0 || !(window.1 >= window.0) {
        return Err(Error::InvalidParameter("deviation window needs samples and end >= start".into()));
    }
    for tr in [a, b] {
        tr.validate()?;
        let (lo, hi) = (tr.times[0], *tr.times.last().unwrap());
        if window.0 < lo || window.1 > hi {
            return Err(Error::WindowOutOfRange {
                start: to_f64(window.0),
                end: to_f64(window.1),
                span_start: to_f64(lo),
                span_end: to_f64(hi),
            });
        }
    }
    let missing = |s: Option<usize>| Error::InvalidParameter(format!("trajectory has no record for site {s:?}"));
    let ra = a.record(a_site).ok_or_else(|| missing(a_site))?;
    let rb = b.record(b_site).ok_or_else(|| missing(b_site))?;
    let (va, vb) = (observable.values(ra), observable.values(rb));
    let ts = uniform_grid(window.0, window.1, samples);
    let total: T = ts
        .iter()
        .map(|&t| (interpolate(&a.times, va, t) - interpolate(&b.times, vb, t)).powi(2))
        .sum();
    Ok(total / idx(samples))
}

/// One point of a K versus incidence-angle scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KScanRow<T> {
    pub theta_in: T,
    pub summary: CouplingSummary<T>,
    pub regularization_eps: T,
}

/// Infinite-chain `K` for every incidence angle in `thetas`.
pub fn k_angle_scan<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    thetas: &[T],
    options: &InfiniteChainOptions<T>,
) -> Result<Vec<KScanRow<T>>> {
    thetas
        .par_iter()
        .map(|&theta| {
            let g = geom.with_incidence(theta);
            Ok(KScanRow {
                theta_in: theta,
                summary: coupling_parameter_infinite(&g, decay, options)?,
                regularization_eps: options.regularization.epsilon(),
            })
        })
        .collect()
}

/// Finite-chain `K` at the central site of a chain of `len` nuclei, for every
/// incidence angle in `thetas`.
pub fn k_angle_scan_finite<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    thetas: &[T],
    len: usize,
) -> Result<Vec<KScanRow<T>>> {
    thetas
        .par_iter()
        .map(|&theta| {
            let g = geom.with_incidence(theta);
            Ok(KScanRow {
                theta_in: theta,
                summary: coupling_parameter_finite(&g, decay, central_site(len), len)?,
                regularization_eps: T::zero(),
            })
        })
        .collect()
}

/// Central-site `K_N` and its squared distance to `K_inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KConvergenceRow<T> {
    pub len: usize,
    pub site: usize,
    pub k: Complex<T>,
    pub diff_real_sq: T,
    pub diff_imag_sq: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KConvergenceReport<T> {
    pub k_infinite: CouplingSummary<T>,
    pub rows: Vec<KConvergenceRow<T>>,
}

impl<T: Real> KConvergenceReport<T> {
    pub fn lengths(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.len).collect()
    }

    pub fn imag_diff_sq(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.diff_imag_sq).collect()
    }
}

pub fn k_convergence_scan<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    lens: &[usize],
    options: &InfiniteChainOptions<T>,
) -> Result<KConvergenceReport<T>> {
    let k_infinite = coupling_parameter_infinite(geom, decay, options)?;
    let kinf = k_infinite.k;
    let rows = lens
        .par_iter()
        .map(|&len| {
            let site = central_site(len);
            let k = coupling_parameter_finite(geom, decay, site, len)?.k;
            Ok(KConvergenceRow {
                len,
                site,
                k,
                diff_real_sq: (kinf.re - k.re).powi(2),
                diff_imag_sq: (kinf.im - k.im).powi(2),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KConvergenceReport { k_infinite, rows })
}

/// `K_l` for every site of a chain of `len` nuclei.
pub fn k_site_scan<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    len: usize,
) -> Result<Vec<CouplingSummary<T>>> {
    coupling_profile(geom, decay, len)
}

/// Settings shared by the finite-size studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeSettings<T> {
    pub pulse_area: T,
    pub global_phase: T,
    pub window: (T, T),
    pub samples: usize,
    pub integrator: IntegratorSettings<T>,
    pub infinite: InfiniteChainOptions<T>,
}

impl<T: Real> FiniteSizeSettings<T> {
    pub fn new(pulse_area: T) -> Self {
        Self {
            pulse_area,
            global_phase: T::zero(),
            window: (crate::scalar::lit(DEFAULT_DEVIATION_WINDOW.0), crate::scalar::lit(DEFAULT_DEVIATION_WINDOW.1)),
            samples: DEFAULT_DEVIATION_SAMPLES,
            integrator: IntegratorSettings::default(),
            infinite: InfiniteChainOptions::default(),
        }
    }

    fn grid(&self) -> Vec<T> {
        let mut g = uniform_grid(T::zero(), self.window.1, self.samples);
        g.retain(|&t| t >= T::zero());
        g
    }
}

/// Deviation of the central-site finite-chain observables from the reduced
/// model, with the matching `|K_inf - K_N|^2` values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport<T> {
    pub lengths: Vec<usize>,
    pub coherence_abs: Vec<T>,
    pub phase: Vec<T>,
    pub population: Vec<T>,
    pub k_real_diff_sq: Vec<T>,
    pub k_imag_diff_sq: Vec<T>,
    pub k_infinite: Complex<T>,
    pub window: (T, T),
    pub samples: usize,
}

impl<T: Real> DeviationReport<T> {
    pub fn values(&self, observable: Observable) -> &[T] {
        match observable {
            Observable::CoherenceAbs => &self.coherence_abs,
            Observable::Phase => &self.phase,
            Observable::Population => &self.population,
        }
    }

    /// Invariant check: non-negative values and aligned arrays.
    pub fn validate(&self) -> Result<()> {
        let n = self.lengths.len();
        let arrays = [
            &self.coherence_abs,
            &self.phase,
            &self.population,
            &self.k_real_diff_sq,
            &self.k_imag_diff_sq,
        ];
        if arrays.iter().any(|a| a.len() != n) {
            return Err(Error::InvalidParameter("deviation report arrays are misaligned".into()));
        }
        if arrays.iter().any(|a| a.iter().any(|&v| !(v >= T::zero()))) {
            return Err(Error::InvalidParameter("deviation values must be non-negative".into()));
        }
        Ok(())
    }
}

/// Reduced-model trajectory for the infinite chain.
pub fn reduced_run<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    exc: &ExcitationSpec<T>,
    grid: &[T],
    integrator: &IntegratorSettings<T>,
    k: &CouplingSummary<T>,
) -> Result<Trajectory<T>> {
    let model = ReducedModel::new(decay.gamma_total(), k)?;
    let mut tr = evolve_reduced(&model, exc, grid, integrator)?;
    annotate(&mut tr, geom, decay, k);
    Ok(tr)
}

/// Finite-chain trajectory of the central nucleus with the incident phase
/// removed, so it can be compared with [`reduced_run`].
pub fn central_site_run<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    exc: &ExcitationSpec<T>,
    len: usize,
    grid: &[T],
    integrator: &IntegratorSettings<T>,
) -> Result<Trajectory<T>> {
    let site = central_site(len);
    let table = CouplingTable::new(geom, decay, len.saturating_sub(1));
    let chain = FiniteChain::new(decay.gamma_total(), Drive::Pairwise(table), len)?;
    let mut tr = evolve_finite(&chain, exc, grid, integrator, &[site])?;
    tr.compensate_incident_phase(exc.phase_step);
    let k = coupling_parameter_finite(geom, decay, site, len)?;
    annotate(&mut tr, geom, decay, &k);
    tr.insert_meta("site", site);
    Ok(tr)
}

fn annotate<T: Real>(tr: &mut Trajectory<T>, geom: &ChainGeometry<T>, decay: &DecayParameters<T>, k: &CouplingSummary<T>) {
    tr.insert_meta("theta_in", to_f64(geom.incidence_angle));
    tr.insert_meta("theta_d", to_f64(geom.dipole_angle));
    tr.insert_meta("eta0", to_f64(geom.eta0()));
    tr.insert_meta("gamma0", to_f64(decay.gamma0));
    tr.insert_meta("gamma_rad", to_f64(decay.gamma_rad));
    tr.insert_meta("gamma_ic", to_f64(decay.gamma_ic));
    tr.insert_meta("k_used", [to_f64(k.k.re), to_f64(k.k.im)]);
    tr.insert_meta("k_provenance", k.provenance.as_str());
}

/// `Delta O` of all observables for every chain length in `lens`.
pub fn finite_size_deviation_scan<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    lens: &[usize],
    settings: &FiniteSizeSettings<T>,
) -> Result<DeviationReport<T>> {
    if lens.is_empty() {
        return Err(Error::InvalidParameter("no chain lengths given".into()));
    }
    let exc = ExcitationSpec::for_geometry(settings.pulse_area, settings.global_phase, geom)?;
    let grid = settings.grid();
    let k_inf = coupling_parameter_infinite(geom, decay, &settings.infinite)?;
    let reference = reduced_run(geom, decay, &exc, &grid, &settings.integrator, &k_inf)?;
    let rows = lens
        .par_iter()
        .map(|&len| {
            let tr = central_site_run(geom, decay, &exc, len, &grid, &settings.integrator)?;
            let site = Some(central_site(len));
            let mut d = [T::zero(); 3];
            for (slot, obs) in d.iter_mut().zip(Observable::ALL) {
                *slot = deviation_metric(&reference, None, &tr, site, obs, settings.window, settings.samples)?;
            }
            let k = coupling_parameter_finite(geom, decay, central_site(len), len)?.k;
            Ok((d, (k.re - k_inf.k.re).powi(2), (k.im - k_inf.k.im).powi(2)))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = DeviationReport {
        lengths: lens.to_vec(),
        coherence_abs: rows.iter().map(|r| r.0[0]).collect(),
        phase: rows.iter().map(|r| r.0[1]).collect(),
        population: rows.iter().map(|r| r.0[2]).collect(),
        k_real_diff_sq: rows.iter().map(|r| r.1).collect(),
        k_imag_diff_sq: rows.iter().map(|r| r.2).collect(),
        k_infinite: k_inf.k,
        window: settings.window,
        samples: settings.samples,
    };
    report.validate()?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Maximum,
    Minimum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub position: usize,
    pub value: f64,
    /// Topographic prominence relative to the range of the curve.
    pub prominence: f64,
    pub kind: ExtremumKind,
}

/// Prominence of the peak at `i` of `y`: its height above the higher of the
/// two lowest points separating it from a higher peak (or the ends).
fn peak_prominence(y: &[f64], i: usize) -> f64 {
    let mut left_min = y[i];
    for j in (0..i).rev() {
        if y[j] > y[i] {
            break;
        }
        left_min = left_min.min(y[j]);
    }
    let mut right_min = y[i];
    for &v in &y[i + 1..] {
        if v > y[i] {
            break;
        }
        right_min = right_min.min(v);
    }
    y[i] - left_min.max(right_min)
}

/// Interior local extrema of `ys` (sampled at `positions`) whose prominence
/// is at least `min_prominence` times the range of `ys`.
///
/// With `log_scale` the curve is compared in `ln` (values must be positive),
/// which puts oscillations at different envelope heights on an equal footing.
pub fn local_extrema(positions: &[usize], ys: &[f64], min_prominence: f64, log_scale: bool) -> Result<Vec<Extremum>> {
    if positions.len() != ys.len() {
        return Err(Error::GridMismatch);
    }
    let y: Vec<f64> = if log_scale {
        if ys.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("log-scale extrema need positive values".into()));
        }
        ys.iter().map(|v| v.ln()).collect()
    } else {
        ys.to_vec()
    };
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        let kind = if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            ExtremumKind::Maximum
        } else if y[i] < y[i - 1] && y[i] <= y[i + 1] {
            ExtremumKind::Minimum
        } else {
            continue;
        };
        let prom = match kind {
            ExtremumKind::Maximum => peak_prominence(&y, i),
            ExtremumKind::Minimum => peak_prominence(&neg, i),
        } / range;
        if prom >= min_prominence {
            out.push(Extremum {
                position: positions[i],
                value: ys[i],
                prominence: prom,
                kind,
            });
        }
    }
    Ok(out)
}

/// Result of pairing the extrema of two curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremaMatch {
    pub matched: Vec<(usize, usize)>,
    pub unmatched_first: Vec<Extremum>,
    pub unmatched_second: Vec<Extremum>,
}

impl ExtremaMatch {
    pub fn all_matched(&self) -> bool {
        self.unmatched_first.is_empty() && self.unmatched_second.is_empty()
    }

    pub fn max_offset(&self) -> usize {
        self.matched.iter().map(|&(a, b)| a.abs_diff(b)).max().unwrap_or(0)
    }
}

/// Pairs every extremum of either list with one of the same kind in the
/// other list at most `tolerance` positions away.
pub fn match_extrema(first: &[Extremum], second: &[Extremum], tolerance: usize) -> ExtremaMatch {
    let partner = |e: &Extremum, pool: &[Extremum]| {
        pool.iter()
            .filter(|o| o.kind == e.kind && o.position.abs_diff(e.position) <= tolerance)
            .min_by_key(|o| o.position.abs_diff(e.position))
            .map(|o| o.position)
    };
    let mut matched = Vec::new();
    let mut unmatched_first = Vec::new();
    for e in first {
        match partner(e, second) {
            Some(p) => matched.push((e.position, p)),
            None => unmatched_first.push(*e),
        }
    }
    let unmatched_second = second.iter().filter(|e| partner(e, first).is_none()).copied().collect();
    ExtremaMatch {
        matched,
        unmatched_first,
        unmatched_second,
    }
}

/// Position of the most prominent extremum of `kind` within
/// `target +- radius`.
pub fn extremum_near(extrema: &[Extremum], kind: ExtremumKind, target: usize, radius: usize) -> Option<usize> {
    extrema
        .iter()
        .filter(|e| e.kind == kind && e.position.abs_diff(target) <= radius)
        .max_by(|a, b| a.prominence.total_cmp(&b.prominence))
        .map(|e| e.position)
}

/// Most prominent extremum of `kind`, if any.
pub fn most_prominent(extrema: &[Extremum], kind: ExtremumKind) -> Option<Extremum> {
    extrema
        .iter()
        .filter(|e| e.kind == kind)
        .max_by(|a, b| a.prominence.total_cmp(&b.prominence))
        .copied()
}

/// Chain lengths of maximal and minimal `|K^I_inf - K^I_N|^2`: the most
/// prominent maximum and minimum of the curve on a logarithmic scale.
pub fn extremal_lengths(lengths: &[usize], imag_diff_sq: &[f64]) -> Result<(usize, usize)> {
    let floor = imag_diff_sq
        .iter()
        .cloned()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(Error::InvalidParameter("deviation curve is identically zero".into()));
    }
    let clipped: Vec<f64> = imag_diff_sq.iter().map(|&v| v.max(floor)).collect();
    let ext = local_extrema(lengths, &clipped, 0.0, true)?;
    match (
        most_prominent(&ext, ExtremumKind::Maximum),
        most_prominent(&ext, ExtremumKind::Minimum),
    ) {
        (Some(hi), Some(lo)) => Ok((hi.position, lo.position)),
        _ => Err(Error::InvalidParameter("deviation curve has no interior extrema".into())),
    }
}

/// Central-site finite-chain run paired with the reduced model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseComparison<T> {
    pub len: usize,
    pub pulse_area: T,
    pub k_finite: Complex<T>,
    pub k_infinite: Complex<T>,
    pub finite: Trajectory<T>,
    pub reduced: Trajectory<T>,
}

/// Paired finite and reduced trajectories for every `(len, area)`.
pub fn finite_size_phase_study<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    lens: &[usize],
    areas: &[T],
    grid: &[T],
    integrator: &IntegratorSettings<T>,
    infinite: &InfiniteChainOptions<T>,
) -> Result<Vec<PhaseComparison<T>>> {
    let k_inf = coupling_parameter_infinite(geom, decay, infinite)?;
    let jobs: Vec<(usize, T)> = lens.iter().flat_map(|&n| areas.iter().map(move |&a| (n, a))).collect();
    jobs.par_iter()
        .map(|&(len, area)| {
            let exc = ExcitationSpec::for_geometry(area, T::zero(), geom)?;
            let finite = central_site_run(geom, decay, &exc, len, grid, integrator)?;
            let reduced = reduced_run(geom, decay, &exc, grid, integrator, &k_inf)?;
            Ok(PhaseComparison {
                len,
                pulse_area: area,
                k_finite: coupling_parameter_finite(geom, decay, central_site(len), len)?.k,
                k_infinite: k_inf.k,
                finite,
                reduced,
            })
        })
        .collect()
}

/// Reduced-model runs for several pulse areas at one geometry.
pub fn area_sweep<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    areas: &[T],
    grid: &[T],
    integrator: &IntegratorSettings<T>,
    infinite: &InfiniteChainOptions<T>,
) -> Result<Vec<Trajectory<T>>> {
    let k = coupling_parameter_infinite(geom, decay, infinite)?;
    areas
        .par_iter()
        .map(|&a| {
            let exc = ExcitationSpec::for_geometry(a, T::zero(), geom)?;
            reduced_run(geom, decay, &exc, grid, integrator, &k)
        })
        .collect()
}

/// Interferometer trace and beat minima for one pulse area.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterferenceRun<T> {
    pub pulse_area: T,
    pub trace: IntensityTrace<T>,
    pub minima: Vec<(T, T)>,
}

/// Runs sample and reference chains through the reduced model for every
/// pulse area and combines them.
pub fn interference_sweep<T: Real>(
    spec: &InterferometerSpec<T>,
    sample_geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    areas: &[T],
    grid: &[T],
    integrator: &IntegratorSettings<T>,
    infinite: &InfiniteChainOptions<T>,
) -> Result<Vec<InterferenceRun<T>>> {
    let sample_geom = sample_geom.with_incidence(spec.sample_incidence);
    let reference_geom = sample_geom.with_incidence(spec.reference_incidence);
    let k_s = coupling_parameter_infinite(&sample_geom, decay, infinite)?;
    let k_r = coupling_parameter_infinite(&reference_geom, decay, infinite)?;
    areas
        .par_iter()
        .map(|&a| {
            let es = ExcitationSpec::for_geometry(a, T::zero(), &sample_geom)?;
            let er = ExcitationSpec::for_geometry(a, T::zero(), &reference_geom)?;
            let s = reduced_run(&sample_geom, decay, &es, grid, integrator, &k_s)?;
            let r = reduced_run(&reference_geom, decay, &er, grid, integrator, &k_r)?;
            let spec = InterferometerSpec { pulse_area: a, ..*spec };
            let trace = combined_intensity(&spec, &s, &r, false)?;
            let minima = beat_minima(&trace.times, &trace.intensity)?;
            Ok(InterferenceRun {
                pulse_area: a,
                trace,
                minima,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::SiteRecord;

    fn traj(times: &[f64], phase: impl Fn(f64) -> f64) -> Trajectory<f64> {
        let mut r = SiteRecord::with_capacity(None, times.len());
        for &t in times {
            r.coherence_abs.push((-t).exp());
            r.phase.push(phase(t));
            r.population.push(0.1);
        }
        Trajectory {
            times: times.to_vec(),
            records: vec![r],
            metadata: Default::default(),
            diagnostics: vec![],
        }
    }

    #[test]
    fn deviation_of_identical_and_offset_trajectories() {
        let g = uniform_grid(0.0, 3.0, 301);
        let a = traj(&g, |t| 0.1 * t);
        let b = traj(&g, |t| 0.1 * t + 0.25);
        for obs in Observable::ALL {
            assert_eq!(deviation_metric(&a, None, &a, None, obs, (0.0, 2.0), 200).unwrap(), 0.0);
        }
        let d = deviation_metric(&a, None, &b, None, Observable::Phase, (0.0, 2.0), 200).unwrap();
        assert!((d - 0.0625).abs() < 1e-15);
        assert!(deviation_metric(&a, None, &b, None, Observable::Phase, (0.0, 4.0), 200).is_err());
        assert!(deviation_metric(&a, Some(1), &b, None, Observable::Phase, (0.0, 2.0), 200).is_err());
    }

    #[test]
    fn sweep_spec_hash_is_stable_and_sensitive() {
        let s = SweepSpec {
            parameter: SweepParameter::ThetaIn,
            values: vec![0.1, 0.2],
            fixed: serde_json::json!({"theta_d": 1.5}),
            observables: vec!["k".into()],
            output: "out".into(),
        };
        s.validate().unwrap();
        assert_eq!(s.hash(), s.clone().hash());
        assert_eq!(s.hash().len(), 64);
        let mut t = s.clone();
        t.values.push(0.3);
        assert_ne!(s.hash(), t.hash());
        assert!(s.file_stem("kscan").starts_with("kscan_"));
        t.values.clear();
        assert!(t.validate().is_err());
        let bad = SweepSpec {
            parameter: SweepParameter::ChainLength,
            values: vec![2.5],
            ..s
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn extrema_with_prominence_filter() {
        let xs: Vec<usize> = (0..200).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let x = x as f64;
                (x / 20.0).sin() + 0.03 * (x * 1.9).sin()
            })
            .collect();
        let all = local_extrema(&xs, &ys, 0.0, false).unwrap();
        let big = local_extrema(&xs, &ys, 0.1, false).unwrap();
        assert!(all.len() > big.len());
        let maxima: Vec<usize> = big.iter().filter(|e| e.kind == ExtremumKind::Maximum).map(|e| e.position).collect();
        let minima: Vec<usize> = big.iter().filter(|e| e.kind == ExtremumKind::Minimum).map(|e| e.position).collect();
        for (got, want) in maxima.iter().zip([31usize, 157]) {
            assert!(got.abs_diff(want) <= 3, "{got}");
        }
        for (got, want) in minima.iter().zip([94usize]) {
            assert!(got.abs_diff(want) <= 3, "{got}");
        }
        assert!(local_extrema(&xs, &ys, 0.1, true).is_err());
    }

    #[test]
    fn matching_is_bidirectional() {
        let e = |p, k| Extremum {
            position: p,
            value: 0.0,
            prominence: 1.0,
            kind: k,
        };
        use ExtremumKind::*;
        let a = [e(10, Maximum), e(20, Minimum)];
        let b = [e(11, Maximum), e(22, Minimum), e(40, Maximum)];
        let m = match_extrema(&a, &b, 2);
        assert_eq!(m.matched.len(), 2);
        assert_eq!(m.unmatched_second.len(), 1);
        assert!(!m.all_matched());
        assert_eq!(m.max_offset(), 2);
        let m = match_extrema(&a, &[e(10, Minimum), e(20, Maximum)], 2);
        assert_eq!(m.unmatched_first.len(), 2);
        assert_eq!(extremum_near(&b, Maximum, 38, 5), Some(40));
        assert_eq!(extremum_near(&b, Minimum, 38, 5), None);
    }

    #[test]
    fn convergence_scan_single_site() {
        let g = ChainGeometry::<f64>::fe57(0.05);
        let d = DecayParameters::fe57();
        let rep = k_convergence_scan(&g, &d, &[1, 2, 10], &InfiniteChainOptions::default()).unwrap();
        assert_eq!(rep.rows[0].k, Complex::new(0.0, 0.0));
        assert!((rep.rows[0].diff_imag_sq - rep.k_infinite.k.im.powi(2)).abs() < 1e-18);
        assert_eq!(rep.lengths(), vec![1, 2, 10]);
    }

    #[test]
    fn deviation_scan_is_aligned_and_non_negative() {
        let g = ChainGeometry::<f64>::fe57(0.05);
        let d = DecayParameters::fe57();
        let mut s = FiniteSizeSettings::new(0.5 * std::f64::consts::PI);
        s.samples = 50;
        let rep = finite_size_deviation_scan(&g, &d, &[5, 60], &s).unwrap();
        rep.validate().unwrap();
        assert_eq!(rep.phase.len(), 2);
        assert!(rep.phase.iter().all(|&v| v > 0.0));
    }
}
