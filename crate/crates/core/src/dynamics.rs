//! First-order cumulant equations of motion.
//!
//! Finite chains are evolved in the complex-coherence representation
//!
//! ```text
//! ds_l/dt = -(Gamma/2) s_l - (1 - 2 p_l) D_l
//! dp_l/dt = -Gamma p_l - 2 Re[conj(s_l) D_l]
//! D_l     = sum_{n != l} C*(|n - l|) s_n
//! ```
//!
//! which is equivalent to the magnitude/phase form but has no `1/|s_l|`
//! singularity. Phases are recovered afterwards by nearest-branch unwrapping.
//! The translationally invariant model is evolved directly in the three real
//! variables `(|s|, phi, p)`.

use std::collections::BTreeMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use std::sync::Arc;

use crate::couplings::{drive_at, CouplingSummary, CouplingTable, ToeplitzDrive};
use crate::error::{Error, Result};
use crate::ode::{integrate, IntegrationStats, IntegratorSettings, OdeSystem};
use crate::params::ChainGeometry;
use crate::scalar::{idx, lit, to_f64, Real};
use crate::trajectory::{nearest_branch, SiteRecord, Trajectory};

/// Largest output spacing (in `1/Gamma`) at which phases are tracked.
pub const PHASE_TRACKING_SPACING: f64 = 0.01;
/// Slack on the physical bounds `0 <= p <= 1`, `|s| <= 1/2`.
pub const BOUNDS_SLACK: f64 = 1e-9;
/// Chains at least this long evaluate the drive by FFT convolution.
pub const FFT_THRESHOLD: usize = 48;

/// Impulsive excitation of every nucleus by the same pulse area, with the
/// plane-wave phase advancing by `phase_step` per site.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec<T> {
    pub pulse_area: T,
    pub global_phase: T,
    pub phase_step: T,
}

impl<T: Real> ExcitationSpec<T> {
    pub fn new(pulse_area: T, global_phase: T, phase_step: T) -> Result<Self> {
        if !(pulse_area >= T::zero() && pulse_area <= T::PI()) {
            return Err(Error::InvalidParameter(format!(
                "pulse area must lie in [0, pi], got {pulse_area}"
            )));
        }
        if !(global_phase.is_finite() && phase_step.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        Ok(Self {
            pulse_area,
            global_phase,
            phase_step,
        })
    }

    pub fn for_geometry(pulse_area: T, global_phase: T, geom: &ChainGeometry<T>) -> Result<Self> {
        Self::new(pulse_area, global_phase, geom.phase_step())
    }

    /// `sin^2(A/2)`.
    pub fn initial_population(&self) -> T {
        (self.pulse_area / lit(2.0)).sin().powi(2)
    }

    /// `sin(A/2) cos(A/2)`.
    pub fn initial_coherence_abs(&self) -> T {
        let half = self.pulse_area / lit(2.0);
        half.sin() * half.cos()
    }

    /// Initial phase of site `l` (1-based).
    pub fn site_phase(&self, site: usize) -> T {
        self.global_phase + idx::<T>(site) * self.phase_step
    }
}

/// Per-nucleus coherences `<sigma^-_l>` and populations `<sigma^ee_l>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState<T> {
    pub time: T,
    pub coherences: Vec<Complex<T>>,
    pub populations: Vec<T>,
}

impl<T: Real> EnsembleState<T> {
    pub fn len(&self) -> usize {
        self.coherences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coherences.is_empty()
    }

    fn from_flat(time: T, y: &[T]) -> Self {
        let n = y.len() / 3;
        Self {
            time,
            coherences: y[..2 * n]
                .chunks_exact(2)
                .map(|c| Complex::new(c[0], c[1]))
                .collect(),
            populations: y[2 * n..].to_vec(),
        }
    }

    fn to_flat(&self) -> Vec<T> {
        let mut y = Vec::with_capacity(3 * self.len());
        for c in &self.coherences {
            y.push(c.re);
            y.push(c.im);
        }
        y.extend_from_slice(&self.populations);
        y
    }

    /// First violated bound, if any.
    pub fn bounds_violation(&self) -> Option<String> {
        let slack = lit::<T>(BOUNDS_SLACK);
        let half = lit::<T>(0.5);
        for (i, (&p, s)) in self.populations.iter().zip(&self.coherences).enumerate() {
            if p < -slack || p > T::one() + slack {
                return Some(format!("t = {}: population {} of site {} outside [0, 1]", self.time, p, i + 1));
            }
            if s.norm() > half + slack {
                return Some(format!(
                    "t = {}: |coherence| {} of site {} exceeds 1/2",
                    self.time,
                    s.norm(),
                    i + 1
                ));
            }
        }
        None
    }
}

/// State of the translationally invariant model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedState<T> {
    pub time: T,
    pub coherence_abs: T,
    pub phase: T,
    pub population: T,
}

pub fn init_ensemble<T: Real>(exc: &ExcitationSpec<T>, len: usize) -> EnsembleState<T> {
    let p = exc.initial_population();
    let a = exc.initial_coherence_abs();
    EnsembleState {
        time: T::zero(),
        coherences: (1..=len)
            .map(|l| Complex::from_polar(a, exc.site_phase(l)))
            .collect(),
        populations: vec![p; len],
    }
}

pub fn init_reduced<T: Real>(exc: &ExcitationSpec<T>) -> ReducedState<T> {
    ReducedState {
        time: T::zero(),
        coherence_abs: exc.initial_coherence_abs(),
        phase: exc.global_phase,
        population: exc.initial_population(),
    }
}

/// Source of the collective drive `D_l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Drive<T> {
    /// Pairwise couplings of an open chain.
    Pairwise(CouplingTable<T>),
    /// `D_l = K s_l` with one `K` for every site.
    Uniform(Complex<T>),
}

/// Cumulant equations of an `N`-site chain.
#[derive(Clone, Debug)]
pub struct FiniteChain<T: Real> {
    pub gamma: T,
    pub drive: Drive<T>,
    pub len: usize,
    convolution: Option<Arc<ToeplitzDrive<T>>>,
}

/// Time derivative of an [`EnsembleState`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleDerivative<T> {
    pub coherences: Vec<Complex<T>>,
    pub populations: Vec<T>,
}

impl<T: Real> FiniteChain<T> {
    pub fn new(gamma: T, drive: Drive<T>, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidParameter("chain must contain at least one nucleus".into()));
        }
        if let Drive::Pairwise(table) = &drive {
            if table.max_separation() + 1 < len {
                return Err(Error::InvalidParameter(format!(
                    "coupling table covers {} separations, chain of {len} needs {}",
                    table.max_separation(),
                    len - 1
                )));
            }
        }
        let convolution = match &drive {
            Drive::Pairwise(table) if len >= FFT_THRESHOLD => Some(Arc::new(ToeplitzDrive::new(table, len)?)),
            _ => None,
        };
        Ok(Self {
            gamma,
            drive,
            len,
            convolution,
        })
    }

    fn drives(&self, s: &[Complex<T>]) -> Vec<Complex<T>> {
        match &self.drive {
            Drive::Uniform(k) => s.iter().map(|v| k * v).collect(),
            Drive::Pairwise(table) => match &self.convolution {
                Some(plan) => plan.apply(s),
                None => (0..s.len()).map(|i| drive_at(table, s, i)).collect(),
            },
        }
    }

    /// Derivative of `state` under the cumulant equations.
    pub fn rhs_finite(&self, state: &EnsembleState<T>) -> EnsembleDerivative<T> {
        let d = self.drives(&state.coherences);
        let half_gamma = self.gamma / lit(2.0);
        let two = lit::<T>(2.0);
        let coherences = state
            .coherences
            .iter()
            .zip(&state.populations)
            .zip(&d)
            .map(|((&s, &p), &dl)| -(s * half_gamma) - dl * (T::one() - two * p))
            .collect();
        let populations = state
            .coherences
            .iter()
            .zip(&state.populations)
            .zip(&d)
            .map(|((&s, &p), &dl)| -self.gamma * p - two * (s.conj() * dl).re)
            .collect();
        EnsembleDerivative {
            coherences,
            populations,
        }
    }
}

impl<T: Real> OdeSystem<T> for FiniteChain<T> {
    fn dim(&self) -> usize {
        3 * self.len
    }

    fn rhs(&self, _t: T, y: &[T], dydt: &mut [T]) {
        let n = self.len;
        let s: Vec<Complex<T>> = y[..2 * n]
            .chunks_exact(2)
            .map(|c| Complex::new(c[0], c[1]))
            .collect();
        let d = self.drives(&s);
        let half_gamma = self.gamma / lit(2.0);
        let two = lit::<T>(2.0);
        for i in 0..n {
            let p = y[2 * n + i];
            let ds = -(s[i] * half_gamma) - d[i] * (T::one() - two * p);
            dydt[2 * i] = ds.re;
            dydt[2 * i + 1] = ds.im;
            dydt[2 * n + i] = -self.gamma * p - two * (s[i].conj() * d[i]).re;
        }
    }

    fn magnitude(&self, y: &[T], i: usize) -> T {
        if i < 2 * self.len {
            let j = i & !1;
            y[j].hypot(y[j + 1])
        } else {
            y[i].abs()
        }
    }
}

/// The three-variable translationally invariant model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedModel<T> {
    pub gamma: T,
    pub k: Complex<T>,
}

/// Time derivative of a [`ReducedState`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedDerivative<T> {
    pub coherence_abs: T,
    pub phase: T,
    pub population: T,
}

impl<T: Real> ReducedModel<T> {
    pub fn new(gamma: T, k: &CouplingSummary<T>) -> Result<Self> {
        if !(k.k.re.is_finite() && k.k.im.is_finite()) {
            return Err(Error::InvalidParameter("coupling parameter K is not finite".into()));
        }
        Ok(Self { gamma, k: k.k })
    }

    /// `d|s|/dt = -(Gamma/2)|s| - (1-2p)|s| K^R`, `dphi/dt = -(1-2p) K^I`,
    /// `dp/dt = -Gamma p - 2 |s|^2 K^R`.
    pub fn rhs_reduced(&self, state: &ReducedState<T>) -> ReducedDerivative<T> {
        let two = lit::<T>(2.0);
        let s = state.coherence_abs;
        let inversion = T::one() - two * state.population;
        ReducedDerivative {
            coherence_abs: -self.gamma / two * s - inversion * s * self.k.re,
            phase: -inversion * self.k.im,
            population: -self.gamma * state.population - two * s * s * self.k.re,
        }
    }
}

impl<T: Real> OdeSystem<T> for ReducedModel<T> {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, t: T, y: &[T], dydt: &mut [T]) {
        let d = self.rhs_reduced(&ReducedState {
            time: t,
            coherence_abs: y[0],
            phase: y[1],
            population: y[2],
        });
        dydt[0] = d.coherence_abs;
        dydt[1] = d.phase;
        dydt[2] = d.population;
    }
}

/// Closed-form phase obtained by neglecting the `K^R` back-action on the
/// population.
pub fn analytic_phase<T: Real>(t: T, k_imag: T, pulse_area: T, gamma: T, phase0: T) -> T {
    let two = lit::<T>(2.0);
    let excited = (pulse_area / two).sin().powi(2);
    -k_imag * (t - two / gamma * (-(-gamma * t).exp_m1()) * excited) + phase0
}

/// `sin^2(A/2) exp(-Gamma t)`.
pub fn analytic_population<T: Real>(t: T, pulse_area: T, gamma: T) -> T {
    (pulse_area / lit(2.0)).sin().powi(2) * (-gamma * t).exp()
}

/// Coherence decay rate and phase slope of the low-excitation limit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowExcitationRates<T> {
    /// `Gamma/2 + K^R`.
    pub coherence_decay_rate: T,
    /// `-K^I`.
    pub phase_slope: T,
}

impl<T: Real> LowExcitationRates<T> {
    pub fn intensity_decay_rate(&self) -> T {
        lit::<T>(2.0) * self.coherence_decay_rate
    }
}

pub fn low_excitation_rates<T: Real>(k: &CouplingSummary<T>, gamma: T) -> LowExcitationRates<T> {
    LowExcitationRates {
        coherence_decay_rate: gamma / lit(2.0) + k.k.re,
        phase_slope: -k.k.im,
    }
}

/// Integration grid refined so that consecutive points are at most
/// `max_spacing` apart. Returns the grid and, for each point, the index of
/// the requested output it corresponds to.
fn refine_grid<T: Real>(grid: &[T], max_spacing: T) -> (Vec<T>, Vec<Option<usize>>) {
    let mut fine = Vec::with_capacity(grid.len());
    let mut owner = Vec::with_capacity(grid.len());
    let mut prev: Option<T> = None;
    for (k, &t) in grid.iter().enumerate() {
        if let Some(p) = prev {
            let gap = t - p;
            let parts = (gap / max_spacing).ceil().to_usize().unwrap_or(1).max(1);
            for j in 1..parts {
                fine.push(p + gap * idx::<T>(j) / idx::<T>(parts));
                owner.push(None);
            }
        }
        fine.push(t);
        owner.push(Some(k));
        prev = Some(t);
    }
    (fine, owner)
}

fn check_output_grid<T: Real>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("output grid is empty".into()));
    }
    if grid[0] < T::zero() {
        return Err(Error::InvalidParameter("output grid starts before t = 0".into()));
    }
    if !(*grid.last().unwrap() > T::zero()) {
        return Err(Error::InvalidParameter("end time must be positive".into()));
    }
    Ok(())
}

fn base_metadata<T: Real>(
    model: &str,
    exc: &ExcitationSpec<T>,
    settings: &IntegratorSettings<T>,
    stats: &IntegrationStats,
) -> BTreeMap<String, serde_json::Value> {
    let mut m = BTreeMap::new();
    m.insert("model".into(), serde_json::json!(model));
    m.insert(
        "pulse_area".into(),
        serde_json::json!(to_f64(exc.pulse_area)),
    );
    m.insert(
        "global_phase".into(),
        serde_json::json!(to_f64(exc.global_phase)),
    );
    m.insert(
        "phase_step".into(),
        serde_json::json!(to_f64(exc.phase_step)),
    );
    m.insert(
        "integrator".into(),
        serde_json::to_value(settings.method.map_f64()).unwrap_or_default(),
    );
    m.insert("integrator_stats".into(), serde_json::to_value(stats).unwrap_or_default());
    m
}

impl<T: Real> crate::ode::Method<T> {
    fn map_f64(&self) -> crate::ode::Method<f64> {
        match *self {
            crate::ode::Method::Dopri5 { rtol, atol } => crate::ode::Method::Dopri5 {
                rtol: to_f64(rtol),
                atol: to_f64(atol),
            },
            crate::ode::Method::Rk4 { step } => crate::ode::Method::Rk4 { step: to_f64(step) },
        }
    }
}

/// Evolves the translationally invariant model on `grid` (in `1/Gamma`).
pub fn evolve_reduced<T: Real>(
    model: &ReducedModel<T>,
    exc: &ExcitationSpec<T>,
    grid: &[T],
    settings: &IntegratorSettings<T>,
) -> Result<Trajectory<T>> {
    check_output_grid(grid)?;
    let s0 = init_reduced(exc);
    let y0 = [s0.coherence_abs, s0.phase, s0.population];
    let mut record = SiteRecord::with_capacity(None, grid.len());
    let mut diagnostics = Vec::new();
    let slack = lit::<T>(BOUNDS_SLACK);
    let stats = integrate(model, T::zero(), &y0, grid, settings, |_, t, y| {
        record.coherence_abs.push(y[0]);
        record.phase.push(y[1]);
        record.population.push(y[2]);
        if diagnostics.is_empty()
            && (y[2] < -slack || y[2] > T::one() + slack || y[0] > lit::<T>(0.5) + slack)
        {
            diagnostics.push(format!("t = {t}: reduced state left the physical range"));
        }
    })?;
    let mut tr = Trajectory {
        times: grid.to_vec(),
        records: vec![record],
        metadata: base_metadata("reduced", exc, settings, &stats),
        diagnostics,
    };
    tr.insert_meta("gamma", to_f64(model.gamma));
    tr.insert_meta("k_real", to_f64(model.k.re));
    tr.insert_meta("k_imag", to_f64(model.k.im));
    Ok(tr)
}

/// Evolves a finite chain and records the listed sites (1-based).
///
/// Phases are continued from each site's initial phase `phi_0 + l dphi`.
pub fn evolve_finite<T: Real>(
    chain: &FiniteChain<T>,
    exc: &ExcitationSpec<T>,
    grid: &[T],
    settings: &IntegratorSettings<T>,
    sites: &[usize],
) -> Result<Trajectory<T>> {
    check_output_grid(grid)?;
    for &l in sites {
        if l == 0 || l > chain.len {
            return Err(Error::SiteOutOfRange { site: l, len: chain.len });
        }
    }
    let state0 = init_ensemble(exc, chain.len);
    let y0 = state0.to_flat();
    let spacing = lit::<T>(PHASE_TRACKING_SPACING) / chain.gamma;
    let (fine, owner) = refine_grid(grid, spacing);
    let mut tracked: Vec<T> = sites.iter().map(|&l| exc.site_phase(l)).collect();
    let mut records: Vec<SiteRecord<T>> = sites
        .iter()
        .map(|&l| SiteRecord::with_capacity(Some(l), grid.len()))
        .collect();
    let mut diagnostics = Vec::new();
    let n = chain.len;
    let stats = integrate(chain, T::zero(), &y0, &fine, settings, |k, t, y| {
        for (j, &l) in sites.iter().enumerate() {
            let i = l - 1;
            let s = Complex::new(y[2 * i], y[2 * i + 1]);
            tracked[j] = nearest_branch(tracked[j], s.arg());
            if owner[k].is_some() {
                let r = &mut records[j];
                r.coherence_abs.push(s.norm());
                r.phase.push(tracked[j]);
                r.population.push(y[2 * n + i]);
            }
        }
        if owner[k].is_some() && diagnostics.is_empty() {
            if let Some(msg) = EnsembleState::from_flat(t, y).bounds_violation() {
                diagnostics.push(msg);
            }
        }
    })?;
    let mut tr = Trajectory {
        times: grid.to_vec(),
        records,
        metadata: base_metadata("finite", exc, settings, &stats),
        diagnostics,
    };
    tr.insert_meta("gamma", to_f64(chain.gamma));
    tr.insert_meta("chain_length", chain.len);
    if let Drive::Uniform(k) = chain.drive {
        tr.insert_meta("uniform_k", [to_f64(k.re), to_f64(k.im)]);
    }
    Ok(tr)
}

/// Final full ensemble state of a finite-chain run, for diagnostics.
pub fn evolve_finite_state<T: Real>(
    chain: &FiniteChain<T>,
    exc: &ExcitationSpec<T>,
    t_end: T,
    settings: &IntegratorSettings<T>,
) -> Result<EnsembleState<T>> {
    let y0 = init_ensemble(exc, chain.len).to_flat();
    let mut last = y0.clone();
    integrate(chain, T::zero(), &y0, &[t_end], settings, |_, _, y| last.copy_from_slice(y))?;
    Ok(EnsembleState::from_flat(t_end, &last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{coupling_parameter_finite, pair_coupling_conjugate};
    use crate::ode::uniform_grid;
    use crate::params::DecayParameters;
    use std::f64::consts::PI;

    fn exc(a: f64) -> ExcitationSpec<f64> {
        ExcitationSpec::new(a, 0.0, 0.3).unwrap()
    }

    #[test]
    fn initial_states() {
        let s = init_ensemble(&exc(0.0), 3);
        assert!(s.populations.iter().all(|&p| p == 0.0));
        assert!(s.coherences.iter().all(|c| c.norm() == 0.0));
        let s = init_ensemble(&exc(PI), 3);
        assert!(s.populations.iter().all(|&p| (p - 1.0).abs() < 1e-15));
        assert!(s.coherences.iter().all(|c| c.norm() < 1e-16));
        let s = init_ensemble(&exc(PI / 2.0), 4);
        for (l, c) in s.coherences.iter().enumerate() {
            assert!((c.norm() - 0.5).abs() < 1e-15);
            let want = 0.3 * (l + 1) as f64;
            assert!((c.arg() - want).abs() < 1e-14);
        }
        assert!(ExcitationSpec::new(-0.1, 0.0, 0.0).is_err());
        assert!(ExcitationSpec::new(3.2, 0.0, 0.0).is_err());
    }

    #[test]
    fn initial_state_is_pure() {
        for i in 0..=20 {
            let e = exc(PI * i as f64 / 20.0);
            let p = e.initial_population();
            let s = e.initial_coherence_abs();
            assert!((s * s - p * (1.0 - p)).abs() < 1e-15);
        }
    }

    #[test]
    fn single_site_rhs_is_free_decay() {
        let chain = FiniteChain::new(1.0, Drive::Pairwise(CouplingTable::from_values(vec![])), 1).unwrap();
        let st = init_ensemble(&exc(1.0), 1);
        let d = chain.rhs_finite(&st);
        assert!((d.coherences[0] + st.coherences[0] * 0.5).norm() < 1e-16);
        assert!((d.populations[0] + st.populations[0]).abs() < 1e-16);
    }

    #[test]
    fn incoherent_inversion_builds_no_coherence() {
        let g = ChainGeometry::fe57(0.05);
        let d = DecayParameters::fe57();
        let table = CouplingTable::new(&g, &d, 9);
        let chain = FiniteChain::new(1.0, Drive::Pairwise(table), 10).unwrap();
        let st = EnsembleState {
            time: 0.0,
            coherences: vec![Complex::new(0.0, 0.0); 10],
            populations: (0..10).map(|i| i as f64 / 10.0).collect(),
        };
        let der = chain.rhs_finite(&st);
        for i in 0..10 {
            assert_eq!(der.coherences[i], Complex::new(0.0, 0.0));
            assert_eq!(der.populations[i], -st.populations[i]);
        }
    }

    #[test]
    fn population_coupling_identity() {
        // Re[conj(s_l) D_l] == |s_l| kappa_l^R
        let g = ChainGeometry::fe57(0.4);
        let d = DecayParameters::fe57();
        let table = CouplingTable::new(&g, &d, 7);
        let st = EnsembleState {
            time: 0.0,
            coherences: (0..8)
                .map(|i| Complex::from_polar(0.1 + 0.04 * i as f64, 0.7 * i as f64 * i as f64))
                .collect(),
            populations: vec![0.3; 8],
        };
        for l in 1..=8 {
            let dl = drive_at(&table, &st.coherences, l - 1);
            let kappa = crate::couplings::kappa_drive(&table, &st.coherences, l).unwrap();
            let s = st.coherences[l - 1];
            let lhs = (s.conj() * dl).re;
            let rhs = s.norm() * kappa.re;
            assert!((lhs - rhs).abs() < 1e-17);
        }
    }

    #[test]
    fn two_site_low_excitation_decay_rate() {
        let g = ChainGeometry::fe57(0.05);
        let d = DecayParameters::new(1.0, 0.0, 0.5).unwrap();
        let table = CouplingTable::new(&g, &d, 1);
        let chain = FiniteChain::new(1.0, Drive::Pairwise(table.clone()), 2).unwrap();
        let e = ExcitationSpec::for_geometry(1e-5 * PI, 0.0, &g).unwrap();
        let st = init_ensemble(&e, 2);
        let der = chain.rhs_finite(&st);
        let s = st.coherences[0];
        let rate = -(s.conj() * der.coherences[0]).re / s.norm_sqr();
        let dphi = g.phase_step();
        let expected = 0.5 + (table.get(1) * Complex::new(dphi.cos(), dphi.sin())).re;
        assert!((rate - expected).abs() < 1e-9, "{rate} vs {expected}");
    }

    #[test]
    fn reduced_rhs_limits() {
        let m = ReducedModel::new(1.0, &CouplingSummary::custom(Complex::new(0.0, 0.0))).unwrap();
        let st = ReducedState { time: 0.0, coherence_abs: 0.4, phase: 0.2, population: 0.2 };
        let d = m.rhs_reduced(&st);
        assert_eq!(d.coherence_abs, -0.2);
        assert_eq!(d.phase, 0.0);
        assert_eq!(d.population, -0.2);
        let m = ReducedModel::new(1.0, &CouplingSummary::custom(Complex::new(0.05, -0.3))).unwrap();
        let st = ReducedState { time: 0.0, coherence_abs: 0.5, phase: 0.0, population: 0.5 };
        assert_eq!(m.rhs_reduced(&st).phase, 0.0);
        let bad = CouplingSummary::custom(Complex::new(f64::NAN, 0.0));
        assert!(ReducedModel::new(1.0, &bad).is_err());
    }

    #[test]
    fn uncoupled_reduced_evolution() {
        let m = ReducedModel::new(1.0, &CouplingSummary::custom(Complex::new(0.0, 0.0))).unwrap();
        let e = exc(PI / 2.0);
        let grid = uniform_grid(0.0, 5.0, 501);
        let tr = evolve_reduced(&m, &e, &grid, &IntegratorSettings::default()).unwrap();
        let r = tr.primary();
        for (i, &t) in grid.iter().enumerate() {
            assert!((r.population[i] - 0.5 * (-t).exp()).abs() < 1e-10 * (-t).exp());
            assert!((r.coherence_abs[i] - 0.5 * (-t / 2.0).exp()).abs() < 1e-10);
            assert_eq!(r.phase[i], 0.0);
        }
        assert!(tr.diagnostics.is_empty());
        tr.validate().unwrap();
    }

    #[test]
    fn population_decouples_without_k_real() {
        let m = ReducedModel::new(1.0, &CouplingSummary::custom(Complex::new(0.0, -0.2))).unwrap();
        let e = exc(2.0);
        let grid = uniform_grid(0.0, 5.0, 101);
        let tr = evolve_reduced(&m, &e, &grid, &IntegratorSettings::default()).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let want = analytic_population(t, 2.0, 1.0);
            let got = tr.primary().population[i];
            assert!((got - want).abs() < 1e-9 * want, "t={t} {got} {want}");
            // with K^R = 0 the closed-form phase is exact
            let phi = analytic_phase(t, -0.2, 2.0, 1.0, 0.0);
            assert!((tr.primary().phase[i] - phi).abs() < 1e-9);
        }
    }

    #[test]
    fn analytic_forms() {
        assert!((analytic_phase(3.0_f64, 0.1, 0.0, 1.0, 0.2) + 0.1).abs() < 1e-15);
        assert_eq!(analytic_phase(0.0, 0.1, 1.3, 1.0, 0.7), 0.7);
        // late-time slope and offset
        let (t1, t2) = (40.0, 50.0);
        let a = PI / 2.0;
        let slope = (analytic_phase(t2, 0.1, a, 1.0, 0.0) - analytic_phase(t1, 0.1, a, 1.0, 0.0)) / 10.0;
        assert!((slope + 0.1).abs() < 1e-12);
        let offset = analytic_phase(t2, 0.1, a, 1.0, 0.0) + 0.1 * t2;
        assert!((offset - 0.1 * 2.0 * 0.5).abs() < 1e-12);
        assert!((analytic_population(0.0, PI, 1.0) - 1.0).abs() < 1e-15);
        assert!((analytic_population(1.0, PI / 2.0, 1.0) - 0.5 / 1f64.exp()).abs() < 1e-15);
        for a in [0.1, 1.0, 2.5] {
            assert!((analytic_population(0.0, a, 1.0) - exc(a).initial_population()).abs() < 1e-16);
        }
    }

    #[test]
    fn low_excitation_rate_values() {
        let r = low_excitation_rates(&CouplingSummary::custom(Complex::new(0.0, 0.0)), 1.0);
        assert_eq!(r.coherence_decay_rate, 0.5);
        assert_eq!(r.phase_slope, 0.0);
        let r = low_excitation_rates(&CouplingSummary::custom(Complex::new(0.02, -0.1)), 1.0);
        assert!(r.coherence_decay_rate > 0.5);
        assert_eq!(r.phase_slope, 0.1);
        assert_eq!(r.intensity_decay_rate(), 2.0 * r.coherence_decay_rate);
    }

    #[test]
    fn single_nucleus_chain_matches_exact_solution() {
        let chain = FiniteChain::new(1.0, Drive::Pairwise(CouplingTable::from_values(vec![])), 1).unwrap();
        let e = exc(PI / 2.0);
        let grid = uniform_grid(0.0, 5.0, 2000);
        let tr = evolve_finite(&chain, &e, &grid, &IntegratorSettings::default(), &[1]).unwrap();
        let r = tr.record(Some(1)).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let p = 0.5 * (-t).exp();
            assert!(((r.population[i] - p) / p).abs() < 1e-8);
            assert!((r.phase[i] - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_sites_and_tables() {
        let chain = FiniteChain::new(1.0, Drive::Uniform(Complex::new(0.1, 0.0)), 3).unwrap();
        let grid = [1.0];
        assert!(evolve_finite(&chain, &exc(1.0), &grid, &IntegratorSettings::default(), &[4]).is_err());
        assert!(evolve_finite(&chain, &exc(1.0), &grid, &IntegratorSettings::default(), &[0]).is_err());
        let short = CouplingTable::from_values(vec![Complex::new(0.1, 0.0)]);
        assert!(FiniteChain::new(1.0, Drive::Pairwise(short), 3).is_err());
        assert!(FiniteChain::<f64>::new(1.0, Drive::Uniform(Complex::new(0.0, 0.0)), 0).is_err());
    }

    #[test]
    fn uniform_drive_reproduces_reduced_model() {
        let k = Complex::new(0.03, -0.2);
        let e = exc(1.4);
        let grid = uniform_grid(0.0, 3.0, 301);
        let s = IntegratorSettings::fixed(1e-3);
        let chain = FiniteChain::new(1.0, Drive::Uniform(k), 6).unwrap();
        let sites: Vec<usize> = (1..=6).collect();
        let fin = evolve_finite(&chain, &e, &grid, &s, &sites).unwrap();
        let red = evolve_reduced(&ReducedModel { gamma: 1.0, k }, &e, &grid, &s).unwrap();
        for r in &fin.records {
            let l = r.site.unwrap();
            for i in 0..grid.len() {
                assert!((r.coherence_abs[i] - red.primary().coherence_abs[i]).abs() < 1e-12);
                assert!((r.population[i] - red.primary().population[i]).abs() < 1e-12);
                let rel = r.phase[i] - e.site_phase(l);
                assert!((rel - red.primary().phase[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_site_pair_uses_single_coupling() {
        let g = ChainGeometry::fe57(0.05);
        let d = DecayParameters::fe57();
        let table = CouplingTable::new(&g, &d, 1);
        let c = pair_coupling_conjugate(&g, &d, 1).unwrap();
        assert_eq!(table.get(1), c);
        let k1 = coupling_parameter_finite(&g, &d, 1, 2).unwrap();
        let chain = FiniteChain::new(1.0, Drive::Pairwise(table), 2).unwrap();
        let e = ExcitationSpec::for_geometry(0.8, 0.0, &g).unwrap();
        let st = init_ensemble(&e, 2);
        let der = chain.rhs_finite(&st);
        let s = st.coherences[0];
        let want: Complex<f64> = -s * 0.5 - (1.0 - 2.0 * st.populations[0]) * k1.k * s;
        assert!((der.coherences[0] - want).norm() < 1e-16);
    }

    #[test]
    fn refine_grid_caps_spacing() {
        let (fine, owner) = refine_grid(&[0.0, 0.05, 0.055], 0.01);
        assert_eq!(owner.iter().filter(|o| o.is_some()).count(), 3);
        assert!(fine.windows(2).all(|w| w[1] - w[0] <= 0.01 + 1e-15));
        assert_eq!(fine.len(), 7);
    }
}
