//! Exact master-equation evolution for a few nuclei.
//!
//! With `C_mn = Gamma_mn/2 - i J_mn` (and `C_nn = Gamma/2`) the master
//! equation in the rotating frame reads
//!
//! ```text
//! d rho/dt = -G rho - rho G^dag + sum_{mn} Gamma_mn sigma^-_m rho sigma^+_n
//! G        = sum_{mn} C_mn sigma^+_n sigma^-_m
//! ```
//!
//! The density matrix is kept dense in the computational basis where bit
//! `l - 1` of a basis index is set when nucleus `l` is excited.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::couplings::CouplingTable;
use crate::dynamics::ExcitationSpec;
use crate::error::{Error, Result};
use crate::ode::{integrate, IntegrationStats, IntegratorSettings, OdeSystem};
use crate::params::{ChainGeometry, DecayParameters};
use crate::scalar::{lit, to_f64, Real};
use crate::trajectory::{nearest_branch, SiteRecord, Trajectory};

/// Default largest system size accepted by [`build_system`].
pub const DEFAULT_ORACLE_CAP: usize = 6;
/// Largest system size the dense representation supports at all.
pub const HARD_ORACLE_CAP: usize = 8;
/// Trace drift beyond which an exact run is declared failed.
pub const TRACE_FAILURE: f64 = 1e-8;
/// Tolerances of the density-matrix invariants checked at every sample.
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const EIGENVALUE_FLOOR: f64 = 1e-9;

/// Coherent (`J`) and dissipative (`Gamma`) coupling matrices, row major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrices<T> {
    pub size: usize,
    pub j: Vec<T>,
    pub gamma: Vec<T>,
    pub gamma_ic: T,
}

impl<T: Real> CouplingMatrices<T> {
    /// Builds the matrices from a table of `C*` values and the total rate.
    pub fn from_table(table: &CouplingTable<T>, gamma_total: T, gamma_ic: T, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParameter("system must contain at least one nucleus".into()));
        }
        if table.max_separation() + 1 < size {
            return Err(Error::InvalidParameter(format!(
                "coupling table covers {} separations, {size} nuclei need {}",
                table.max_separation(),
                size - 1
            )));
        }
        let mut j = vec![T::zero(); size * size];
        let mut gamma = vec![T::zero(); size * size];
        for a in 0..size {
            gamma[a * size + a] = gamma_total;
            for b in 0..size {
                if a != b {
                    let c = table.get(a.abs_diff(b));
                    gamma[a * size + b] = lit::<T>(2.0) * c.re;
                    j[a * size + b] = -c.im;
                }
            }
        }
        Ok(Self {
            size,
            j,
            gamma,
            gamma_ic,
        })
    }

    pub fn j_at(&self, a: usize, b: usize) -> T {
        self.j[a * self.size + b]
    }

    pub fn gamma_at(&self, a: usize, b: usize) -> T {
        self.gamma[a * self.size + b]
    }

    /// `C_ab = Gamma_ab/2 - i J_ab` for 0-based indices.
    pub fn conj_coupling(&self, a: usize, b: usize) -> Complex<T> {
        Complex::new(self.gamma_at(a, b) / lit(2.0), -self.j_at(a, b))
    }

    /// Whether the radiative part of `Gamma` is positive semidefinite.
    pub fn radiative_is_psd(&self) -> bool {
        let n = self.size;
        let slack = lit::<T>(EIGENVALUE_FLOOR);
        let mut m: Vec<Complex<T>> = self.gamma.iter().map(|&g| Complex::new(g, T::zero())).collect();
        for a in 0..n {
            m[a * n + a] = m[a * n + a] - Complex::new(self.gamma_ic, T::zero());
        }
        cholesky_is_positive(&m, n, slack)
    }
}

/// Coupling matrices of `size` nuclei on the given chain.
pub fn build_system<T: Real>(
    geom: &ChainGeometry<T>,
    decay: &DecayParameters<T>,
    size: usize,
    cap: usize,
) -> Result<CouplingMatrices<T>> {
    let cap = cap.min(HARD_ORACLE_CAP);
    if size > cap {
        return Err(Error::Capacity { requested: size, cap });
    }
    geom.validate()?;
    decay.validate()?;
    let table = CouplingTable::new(geom, decay, size.saturating_sub(1));
    CouplingMatrices::from_table(&table, decay.gamma_total(), decay.gamma_ic, size)
}

/// Dense `2^N x 2^N` density matrix, row major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix<T> {
    pub size: usize,
    pub time: T,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn dim(&self) -> usize {
        1 << self.size
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.data[row * self.dim() + col]
    }

    /// Product state `prod_l [cos(A/2)|g> + exp(i phi_l) sin(A/2)|e>]`.
    pub fn product_state(exc: &ExcitationSpec<T>, size: usize) -> Self {
        let dim = 1usize << size;
        let half = exc.pulse_area / lit(2.0);
        let (s, c) = half.sin_cos();
        let psi: Vec<Complex<T>> = (0..dim)
            .map(|k| {
                let mut amp = Complex::new(T::one(), T::zero());
                for l in 0..size {
                    amp = amp
                        * if k >> l & 1 == 1 {
                            Complex::from_polar(s, exc.site_phase(l + 1))
                        } else {
                            Complex::new(c, T::zero())
                        };
                }
                amp
            })
            .collect();
        let mut data = Vec::with_capacity(dim * dim);
        for a in &psi {
            for b in &psi {
                data.push(a * b.conj());
            }
        }
        Self {
            size,
            time: T::zero(),
            data,
        }
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.dim()).map(|i| self.get(i, i)).fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_error(&self) -> T {
        let d = self.dim();
        let mut worst = T::zero();
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Whether all eigenvalues exceed `-EIGENVALUE_FLOOR`.
    pub fn is_positive(&self) -> bool {
        cholesky_is_positive(&self.data, self.dim(), lit(EIGENVALUE_FLOOR))
    }

    fn check_site(&self, site: usize) -> Result<usize> {
        if site == 0 || site > self.size {
            return Err(Error::SiteOutOfRange {
                site,
                len: self.size,
            });
        }
        Ok(site - 1)
    }

    /// `<sigma^-_l>` for site `l` (1-based).
    pub fn coherence(&self, site: usize) -> Result<Complex<T>> {
        let b = 1usize << self.check_site(site)?;
        Ok((0..self.dim())
            .filter(|i| i & b == 0)
            .map(|i| self.get(i | b, i))
            .fold(Complex::new(T::zero(), T::zero()), |a, v| a + v))
    }

    /// `<sigma^ee_l>` for site `l` (1-based).
    pub fn population(&self, site: usize) -> Result<T> {
        let b = 1usize << self.check_site(site)?;
        Ok((0..self.dim()).filter(|i| i & b != 0).map(|i| self.get(i, i).re).sum())
    }

    /// `<sigma^+_n sigma^-_m>` for sites `n != m` (1-based).
    pub fn correlator(&self, n: usize, m: usize) -> Result<Complex<T>> {
        let bn = 1usize << self.check_site(n)?;
        let bm = 1usize << self.check_site(m)?;
        if bn == bm {
            return Err(Error::InvalidParameter("correlator needs two distinct sites".into()));
        }
        Ok((0..self.dim())
            .filter(|i| i & bn != 0 && i & bm == 0)
            .map(|i| self.get((i ^ bn) | bm, i))
            .fold(Complex::new(T::zero(), T::zero()), |a, v| a + v))
    }
}

/// `<sigma^+_n sigma^-_m> - <sigma^+_n><sigma^-_m>`, the part dropped by the
/// first-order cumulant truncation.
pub fn connected_correlation<T: Real>(rho: &DensityMatrix<T>, n: usize, m: usize) -> Result<Complex<T>> {
    let full = rho.correlator(n, m)?;
    Ok(full - rho.coherence(n)?.conj() * rho.coherence(m)?)
}

/// Cholesky factorization of `a + slack * I`; succeeds iff the Hermitian
/// matrix `a` has no eigenvalue below `-slack` (up to rounding).
fn cholesky_is_positive<T: Real>(a: &[Complex<T>], n: usize, slack: T) -> bool {
    let mut l = vec![Complex::new(T::zero(), T::zero()); n * n];
    for j in 0..n {
        let mut d = a[j * n + j].re + slack;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > T::zero()) {
            return false;
        }
        let djj = d.sqrt();
        l[j * n + j] = Complex::new(djj, T::zero());
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v = v - l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = v / djj;
        }
    }
    true
}

/// Right-hand side of the master equation on the flattened density matrix.
struct MasterEquation<T> {
    dim: usize,
    size: usize,
    /// Nonzero entries `(row, col, value)` of `G`.
    generator: Vec<(usize, usize, Complex<T>)>,
    gamma: Vec<T>,
}

impl<T: Real> MasterEquation<T> {
    fn new(m: &CouplingMatrices<T>) -> Self {
        let size = m.size;
        let dim = 1usize << size;
        let mut generator = Vec::new();
        for k in 0..dim {
            // diagonal part: sum_m C_mm n_m
            let mut diag = Complex::new(T::zero(), T::zero());
            for a in 0..size {
                if k >> a & 1 == 1 {
                    diag = diag + m.conj_coupling(a, a);
                }
            }
            if diag.norm() > T::zero() {
                generator.push((k, k, diag));
            }
            // hopping: sigma^+_n sigma^-_a |k> for a != n
            for a in 0..size {
                if k >> a & 1 == 0 {
                    continue;
                }
                for n in 0..size {
                    if n == a || k >> n & 1 == 1 {
                        continue;
                    }
                    let c = m.conj_coupling(a, n);
                    if c.norm() > T::zero() {
                        generator.push(((k ^ (1 << a)) | (1 << n), k, c));
                    }
                }
            }
        }
        Self {
            dim,
            size,
            generator,
            gamma: m.gamma.clone(),
        }
    }
}

impl<T: Real> OdeSystem<T> for MasterEquation<T> {
    fn dim(&self) -> usize {
        2 * self.dim * self.dim
    }

    fn rhs(&self, _t: T, y: &[T], dydt: &mut [T]) {
        let d = self.dim;
        let rho = |i: usize, j: usize| Complex::new(y[2 * (i * d + j)], y[2 * (i * d + j) + 1]);
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; d * d];
        // -G rho - rho G^dag
        for &(r, c, g) in &self.generator {
            let gc = g.conj();
            for j in 0..d {
                out[r * d + j] = out[r * d + j] - g * rho(c, j);
                out[j * d + r] = out[j * d + r] - rho(j, c) * gc;
            }
        }
        // sum_{mn} Gamma_mn sigma^-_m rho sigma^+_n
        for i in 0..d {
            for j in 0..d {
                let mut acc = zero;
                for a in 0..self.size {
                    if i >> a & 1 == 1 {
                        continue;
                    }
                    for b in 0..self.size {
                        if j >> b & 1 == 1 {
                            continue;
                        }
                        let g = self.gamma[a * self.size + b];
                        if g != T::zero() {
                            acc = acc + rho(i | 1 << a, j | 1 << b) * g;
                        }
                    }
                }
                out[i * d + j] = out[i * d + j] + acc;
            }
        }
        for (k, v) in out.iter().enumerate() {
            dydt[2 * k] = v.re;
            dydt[2 * k + 1] = v.im;
        }
    }
}

/// Expectation values of an exact run on the output grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactTrajectory<T> {
    pub times: Vec<T>,
    /// `coherences[k][l]` is `<sigma^-_{l+1}>` at `times[k]`.
    pub coherences: Vec<Vec<Complex<T>>>,
    pub populations: Vec<Vec<T>>,
    /// Requested site pairs `(n, m)` (1-based).
    pub pairs: Vec<(usize, usize)>,
    /// `correlators[k][p]` is `<sigma^+_n sigma^-_m>` for `pairs[p]`.
    pub correlators: Vec<Vec<Complex<T>>>,
    /// Connected parts of the same correlators.
    pub connected: Vec<Vec<Complex<T>>>,
    pub max_trace_error: T,
    pub max_hermiticity_error: T,
    pub positivity_violations: usize,
    pub diagnostics: Vec<String>,
    pub stats: IntegrationStats,
    pub final_state: DensityMatrix<T>,
}

impl<T: Real> ExactTrajectory<T> {
    /// Converts the per-site observables into a [`Trajectory`], continuing
    /// each phase from the site's initial phase.
    pub fn to_trajectory(&self, exc: &ExcitationSpec<T>, sites: &[usize]) -> Result<Trajectory<T>> {
        let size = self.final_state.size;
        let mut records = Vec::with_capacity(sites.len());
        for &l in sites {
            if l == 0 || l > size {
                return Err(Error::SiteOutOfRange { site: l, len: size });
            }
            let mut rec = SiteRecord::with_capacity(Some(l), self.times.len());
            let mut prev = exc.site_phase(l);
            for k in 0..self.times.len() {
                let s = self.coherences[k][l - 1];
                prev = nearest_branch(prev, s.arg());
                rec.coherence_abs.push(s.norm());
                rec.phase.push(prev);
                rec.population.push(self.populations[k][l - 1]);
            }
            records.push(rec);
        }
        let mut tr = Trajectory {
            times: self.times.clone(),
            records,
            metadata: Default::default(),
            diagnostics: self.diagnostics.clone(),
        };
        tr.insert_meta("model", "exact");
        tr.insert_meta("chain_length", size);
        tr.insert_meta("max_trace_error", to_f64(self.max_trace_error));
        tr.insert_meta("max_hermiticity_error", to_f64(self.max_hermiticity_error));
        Ok(tr)
    }
}

fn unflatten<T: Real>(size: usize, time: T, y: &[T]) -> DensityMatrix<T> {
    DensityMatrix {
        size,
        time,
        data: y.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect(),
    }
}

/// Integrates the master equation from the product state of `exc` and
/// records expectation values on `grid`.
pub fn evolve_exact<T: Real>(
    matrices: &CouplingMatrices<T>,
    exc: &ExcitationSpec<T>,
    grid: &[T],
    settings: &IntegratorSettings<T>,
    pairs: &[(usize, usize)],
) -> Result<ExactTrajectory<T>> {
    let size = matrices.size;
    if size > HARD_ORACLE_CAP {
        return Err(Error::Capacity {
            requested: size,
            cap: HARD_ORACLE_CAP,
        });
    }
    for &(n, m) in pairs {
        if n == m || n == 0 || m == 0 || n > size || m > size {
            return Err(Error::InvalidParameter(format!(
                "correlator pair ({n}, {m}) is not a pair of distinct sites of {size}"
            )));
        }
    }
    let rho0 = DensityMatrix::product_state(exc, size);
    let y0: Vec<T> = rho0.data.iter().flat_map(|c| [c.re, c.im]).collect();
    let system = MasterEquation::new(matrices);

    let mut out = ExactTrajectory {
        times: grid.to_vec(),
        coherences: Vec::with_capacity(grid.len()),
        populations: Vec::with_capacity(grid.len()),
        pairs: pairs.to_vec(),
        correlators: Vec::with_capacity(grid.len()),
        connected: Vec::with_capacity(grid.len()),
        max_trace_error: T::zero(),
        max_hermiticity_error: T::zero(),
        positivity_violations: 0,
        diagnostics: Vec::new(),
        stats: IntegrationStats::default(),
        final_state: rho0.clone(),
    };
    let mut failure: Option<(T, Vec<f64>)> = None;
    let stats = integrate(&system, T::zero(), &y0, grid, settings, |_, t, y| {
        if failure.is_some() {
            return;
        }
        let rho = unflatten(size, t, y);
        let trace_err = (rho.trace() - Complex::new(T::one(), T::zero())).norm();
        out.max_trace_error = out.max_trace_error.max(trace_err);
        if trace_err > lit(TRACE_FAILURE) {
            failure = Some((t, y.iter().map(|&v| to_f64(v)).collect()));
            return;
        }
        if trace_err > lit(TRACE_TOL) {
            out.diagnostics.push(format!("t = {t}: trace drift {trace_err:e}"));
        }
        let herm = rho.hermiticity_error();
        out.max_hermiticity_error = out.max_hermiticity_error.max(herm);
        if herm > lit(HERMITICITY_TOL) {
            out.diagnostics.push(format!("t = {t}: hermiticity error {herm:e}"));
        }
        if !rho.is_positive() {
            out.positivity_violations += 1;
            out.diagnostics.push(format!("t = {t}: density matrix not positive"));
        }
        let coh: Vec<Complex<T>> = (1..=size).map(|l| rho.coherence(l).expect("site in range")).collect();
        let pop: Vec<T> = (1..=size).map(|l| rho.population(l).expect("site in range")).collect();
        let mut corr = Vec::with_capacity(pairs.len());
        let mut conn = Vec::with_capacity(pairs.len());
        for &(n, m) in pairs {
            let c = rho.correlator(n, m).expect("validated pair");
            corr.push(c);
            conn.push(c - coh[n - 1].conj() * coh[m - 1]);
        }
        out.coherences.push(coh);
        out.populations.push(pop);
        out.correlators.push(corr);
        out.connected.push(conn);
        out.final_state = rho;
    })?;
    if let Some((t, last_state)) = failure {
        return Err(Error::IntegrationFailure {
            t: to_f64(t),
            reason: "trace of the density matrix drifted".into(),
            last_state,
        });
    }
    out.stats = stats;
    Ok(out)
}
