//! Time series produced by the dynamics and the exact oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::ReducedState;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Observables of one nucleus (or of the reduced model) on the time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord<T> {
    /// 1-based site index; `None` for the translationally invariant model.
    pub site: Option<usize>,
    pub coherence_abs: Vec<T>,
    /// Unwrapped phase, continuous in time.
    pub phase: Vec<T>,
    pub population: Vec<T>,
}

impl<T: Real> SiteRecord<T> {
    pub fn with_capacity(site: Option<usize>, len: usize) -> Self {
        Self {
            site,
            coherence_abs: Vec::with_capacity(len),
            phase: Vec::with_capacity(len),
            population: Vec::with_capacity(len),
        }
    }

    /// Column suffix used in CSV output.
    pub fn label(&self) -> String {
        match self.site {
            Some(l) => format!("_site{l}"),
            None => String::new(),
        }
    }
}

/// Time grid plus per-site observables and run metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub records: Vec<SiteRecord<T>>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    /// Invariant violations and other non-fatal findings.
    pub diagnostics: Vec<String>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn record(&self, site: Option<usize>) -> Option<&SiteRecord<T>> {
        self.records.iter().find(|r| r.site == site)
    }

    /// First record, which for reduced runs is the only one.
    pub fn primary(&self) -> &SiteRecord<T> {
        &self.records[0]
    }

    /// Snapshots of the reduced variables of the primary record.
    pub fn reduced_states(&self) -> Vec<ReducedState<T>> {
        let r = self.primary();
        self.times
            .iter()
            .enumerate()
            .map(|(i, &t)| ReducedState {
                time: t,
                coherence_abs: r.coherence_abs[i],
                phase: r.phase[i],
                population: r.population[i],
            })
            .collect()
    }

    /// Checks the structural invariants: strictly increasing grid and one
    /// sample per grid point in every record.
    pub fn validate(&self) -> Result<()> {
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "trajectory time grid is not strictly increasing".into(),
            ));
        }
        let n = self.times.len();
        for r in &self.records {
            if r.coherence_abs.len() != n || r.phase.len() != n || r.population.len() != n {
                return Err(Error::InvalidParameter(
                    "trajectory record length differs from grid length".into(),
                ));
            }
        }
        Ok(())
    }

    /// Removes the incident plane-wave phase `l * phase_step` from every
    /// site record, so all sites start from the global phase as the reduced
    /// model does. Records without a site are left untouched.
    pub fn compensate_incident_phase(&mut self, phase_step: T) {
        for r in &mut self.records {
            if let Some(l) = r.site {
                let offset = crate::scalar::idx::<T>(l) * phase_step;
                for p in &mut r.phase {
                    *p -= offset;
                }
            }
        }
        self.insert_meta("phase_reference", "incident-compensated");
    }

    pub fn insert_meta(&mut self, key: &str, value: impl Serialize) {
        self.metadata.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
    }
}

/// Continues `phase` onto the branch nearest to `previous`.
#[inline]
pub fn nearest_branch<T: Real>(previous: T, phase: T) -> T {
    let tau = T::TAU();
    let d = phase - previous;
    previous + d - (d / tau).round() * tau
}

/// Unwraps a sequence of wrapped phases in place.
pub fn unwrap_phases<T: Real>(phases: &mut [T]) {
    for i in 1..phases.len() {
        phases[i] = nearest_branch(phases[i - 1], phases[i]);
    }
}

/// Linear interpolation of `(xs, ys)` at `x`; `xs` must be increasing and
/// `x` inside its range.
pub fn interpolate<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    let hi = xs.partition_point(|&v| v < x).min(xs.len() - 1);
    if hi == 0 {
        return ys[0];
    }
    let lo = hi - 1;
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unwrap_removes_jumps() {
        let true_phase: Vec<f64> = (0..200).map(|i| 0.1 * i as f64 - 3.0).collect();
        let mut wrapped: Vec<f64> = true_phase
            .iter()
            .map(|p| (p + PI).rem_euclid(2.0 * PI) - PI)
            .collect();
        unwrap_phases(&mut wrapped);
        for (a, b) in wrapped.iter().zip(&true_phase) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_branch_is_within_pi() {
        for prev in [-10.0, 0.0, 3.0, 100.0] {
            for ph in [-3.0, 0.0, 3.1] {
                let v: f64 = nearest_branch(prev, ph);
                assert!((v - prev).abs() <= PI + 1e-12);
                let k = (v - ph) / (2.0 * PI);
                assert!((k - k.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn interpolation() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 10.0, 0.0];
        assert_eq!(interpolate(&xs, &ys, 0.5), 5.0);
        assert_eq!(interpolate(&xs, &ys, 1.5), 5.0);
        assert_eq!(interpolate(&xs, &ys, 0.0), 0.0);
        assert_eq!(interpolate(&xs, &ys, 2.0), 0.0);
    }

    #[test]
    fn validate_catches_bad_grids() {
        let mut tr = Trajectory::<f64> {
            times: vec![0.0, 1.0],
            records: vec![SiteRecord {
                site: None,
                coherence_abs: vec![0.5, 0.3],
                phase: vec![0.0, 0.1],
                population: vec![0.5, 0.2],
            }],
            metadata: BTreeMap::new(),
            diagnostics: Vec::new(),
        };
        assert!(tr.validate().is_ok());
        tr.times = vec![1.0, 1.0];
        assert!(tr.validate().is_err());
        tr.times = vec![0.0, 1.0, 2.0];
        assert!(tr.validate().is_err());
    }
}
