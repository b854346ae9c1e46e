//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p nucdecay --test acceptance -- --nocapture` to see
//! the report.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex;

use nucdecay::analysis::{
    central_site_run, extremal_lengths, finite_size_deviation_scan, interference_sweep, k_angle_scan,
    local_extrema, match_extrema, reduced_run, FiniteSizeSettings,
};
use nucdecay::couplings::{
    central_site, coupling_parameter_finite, coupling_parameter_infinite, CouplingTable, InfiniteChainOptions,
};
use nucdecay::dynamics::{analytic_phase, evolve_finite, Drive, ExcitationSpec, FiniteChain};
use nucdecay::observables::{fit_low_excitation, InterferometerSpec};
use nucdecay::ode::{uniform_grid, IntegratorSettings};
use nucdecay::oracle::{evolve_exact, CouplingMatrices};
use nucdecay::output::trajectory_table;
use nucdecay::params::{ns_per_inverse_gamma, ChainGeometry, DecayParameters, FE57_LINEWIDTH_NEV};
use nucdecay::polylog::{polylog_unit_circle, ZETA3};

type Outcome = Result<String, String>;

fn fe57(theta_in: f64) -> (ChainGeometry<f64>, DecayParameters<f64>) {
    (ChainGeometry::fe57(theta_in), DecayParameters::fe57())
}

fn within_time(elapsed: Duration, limit_s: f64, detail: String) -> Outcome {
    if elapsed.as_secs_f64() < limit_s {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()))
    }
}

fn single_particle() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.005);
    let gamma = decay.gamma_total();
    let grid = uniform_grid(0.0, 5.0, 501);
    let chain = FiniteChain::new(gamma, Drive::Pairwise(CouplingTable::new(&geom, &decay, 0)), 1)
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for a in [0.1 * PI, 0.5 * PI, 0.9 * PI] {
        let exc = ExcitationSpec::for_geometry(a, 0.0, &geom).map_err(|e| e.to_string())?;
        let tr = evolve_finite(&chain, &exc, &grid, &IntegratorSettings::default(), &[1]).map_err(|e| e.to_string())?;
        let r = tr.primary();
        for (k, &t) in grid.iter().enumerate() {
            let p = (a / 2.0).sin().powi(2) * (-gamma * t).exp();
            let s = (a / 2.0).sin() * (a / 2.0).cos() * (-gamma * t / 2.0).exp();
            worst = worst
                .max((r.population[k] - p).abs() / p)
                .max((r.coherence_abs[k] - s).abs() / s);
        }
    }
    let detail = format!("max relative error {worst:.2e}");
    if worst >= 1e-8 {
        return Err(detail);
    }
    within_time(start.elapsed(), 1.0, detail)
}

fn polylog_constants() -> Outcome {
    let cases = [
        ("Li2(1)", 2, 0.0, PI * PI / 6.0),
        ("Li3(1)", 3, 0.0, ZETA3),
        ("Li1(-1)", 1, PI, -(2.0_f64.ln())),
        ("Li2(-1)", 2, PI, -PI * PI / 12.0),
    ];
    let mut worst = 0.0_f64;
    for (name, n, theta, want) in cases {
        let v: Complex<f64> = polylog_unit_circle(n, theta).map_err(|e| e.to_string())?;
        let err = (v - Complex::new(want, 0.0)).norm();
        if err >= 1e-12 {
            return Err(format!("{name} off by {err:.2e}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("max absolute error {worst:.2e}"))
}

fn k_consistency() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.05);
    let len = 1_000_000;
    let finite = coupling_parameter_finite(&geom, &decay, central_site(len), len).map_err(|e| e.to_string())?.k;
    let closed = coupling_parameter_infinite(&geom, &decay, &InfiniteChainOptions::default())
        .map_err(|e| e.to_string())?
        .k;
    let rel = (finite - closed).norm() / closed.norm();
    let detail = format!("K_N = {finite:.6}, K_inf = {closed:.6}, relative difference {rel:.2e}");
    if rel >= 1e-3 {
        return Err(detail);
    }
    within_time(start.elapsed(), 10.0, detail)
}

fn k_imag_zero_crossing() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.1);
    let thetas = uniform_grid(0.1, 0.35, 2000);
    let rows = k_angle_scan(&geom, &decay, &thetas, &InfiniteChainOptions::default()).map_err(|e| e.to_string())?;
    let mut crossings = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (w[0].summary.k.im, w[1].summary.k.im);
        if a == 0.0 || a.signum() != b.signum() {
            crossings.push(w[0].theta_in + (w[1].theta_in - w[0].theta_in) * a / (a - b));
        }
    }
    let detail = format!("sign changes at {crossings:.4?} rad");
    if crossings.is_empty() || crossings.iter().any(|c| (c - 0.22).abs() > 0.03) {
        return Err(detail);
    }
    within_time(start.elapsed(), 10.0, detail)
}

fn low_excitation_round_trip() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.005);
    let k = coupling_parameter_infinite(&geom, &decay, &InfiniteChainOptions::default()).map_err(|e| e.to_string())?;
    let exc = ExcitationSpec::for_geometry(1e-5 * PI, 0.0, &geom).map_err(|e| e.to_string())?;
    let grid = uniform_grid(0.0, 3.0, 301);
    let tr = reduced_run(&geom, &decay, &exc, &grid, &IntegratorSettings::default(), &k).map_err(|e| e.to_string())?;
    let fit = fit_low_excitation(&tr, None, 3.0).map_err(|e| e.to_string())?;
    let want_rate = decay.gamma_total() / 2.0 + k.k.re;
    let want_slope = -k.k.im;
    let e_rate = (fit.decay_rate - want_rate).abs() / want_rate.abs();
    let e_slope = (fit.phase_slope - want_slope).abs() / want_slope.abs();
    let detail = format!("relative errors: rate {e_rate:.2e}, phase slope {e_slope:.2e}");
    if e_rate >= 1e-6 || e_slope >= 1e-6 {
        return Err(detail);
    }
    within_time(start.elapsed(), 5.0, detail)
}

fn analytic_phase_bound() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.005);
    let gamma = decay.gamma_total();
    let k = coupling_parameter_infinite(&geom, &decay, &InfiniteChainOptions::default()).map_err(|e| e.to_string())?;
    let ki = k.k.im;
    let grid = uniform_grid(0.0, 5.0, 501);
    let mut worst_ratio = 0.0_f64;
    let mut worst_convergence = 0.0_f64;
    for a in [0.25 * PI, 0.5 * PI, 0.75 * PI] {
        let exc = ExcitationSpec::for_geometry(a, 0.0, &geom).map_err(|e| e.to_string())?;
        let fine = reduced_run(&geom, &decay, &exc, &grid, &IntegratorSettings::adaptive(1e-10), &k)
            .map_err(|e| e.to_string())?;
        let coarse = reduced_run(&geom, &decay, &exc, &grid, &IntegratorSettings::adaptive(1e-8), &k)
            .map_err(|e| e.to_string())?;
        for (i, &t) in grid.iter().enumerate().skip(1) {
            let phi = fine.primary().phase[i];
            let want = analytic_phase(t, ki, a, gamma, exc.global_phase);
            worst_ratio = worst_ratio.max((phi - want).abs() / (ki.abs() * t));
            worst_convergence = worst_convergence.max((phi - coarse.primary().phase[i]).abs());
        }
    }
    let detail = format!(
        "max |dphi| / (|K^I| t) = {worst_ratio:.4} (bound 0.1), integrator self-convergence {worst_convergence:.1e}"
    );
    if worst_ratio >= 0.1 || worst_convergence >= 1e-7 {
        return Err(detail);
    }
    within_time(start.elapsed(), 10.0, detail)
}

/// Maximum population deviation between cumulant and exact runs of two
/// nuclei, and the largest trace error of the exact run.
fn two_site_deviation(table: &CouplingTable<f64>, decay: &DecayParameters<f64>, exc: &ExcitationSpec<f64>, grid: &[f64]) -> Result<(f64, f64, f64), String> {
    let gamma = decay.gamma_total();
    let chain = FiniteChain::new(gamma, Drive::Pairwise(table.clone()), 2).map_err(|e| e.to_string())?;
    let settings = IntegratorSettings::default();
    let cumulant = evolve_finite(&chain, exc, grid, &settings, &[1, 2]).map_err(|e| e.to_string())?;
    let matrices = CouplingMatrices::from_table(table, gamma, decay.gamma_ic, 2).map_err(|e| e.to_string())?;
    let exact = evolve_exact(&matrices, exc, grid, &settings, &[]).map_err(|e| e.to_string())?;
    let mut pop_dev = 0.0_f64;
    let mut coh_rel = 0.0_f64;
    for (k, _) in grid.iter().enumerate() {
        for (j, rec) in cumulant.records.iter().enumerate() {
            pop_dev = pop_dev.max((rec.population[k] - exact.populations[k][j]).abs());
            let s = Complex::from_polar(rec.coherence_abs[k], rec.phase[k]);
            let e = exact.coherences[k][j];
            coh_rel = coh_rel.max((s - e).norm() / e.norm());
        }
    }
    Ok((pop_dev, coh_rel, exact.max_trace_error))
}

fn oracle_validation() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.05);
    let table = CouplingTable::new(&geom, &decay, 1);
    let grid = uniform_grid(0.0, 5.0, 251);
    let exc = ExcitationSpec::for_geometry(0.5 * PI, 0.0, &geom).map_err(|e| e.to_string())?;
    let (full, _, trace_a) = two_site_deviation(&table, &decay, &exc, &grid)?;
    let (weak, _, trace_b) = two_site_deviation(&table.scaled(0.1), &decay, &exc, &grid)?;
    let low = ExcitationSpec::for_geometry(1e-3 * PI, 0.0, &geom).map_err(|e| e.to_string())?;
    let (_, low_rel, trace_c) = two_site_deviation(&table, &decay, &low, &uniform_grid(0.0, 3.0, 151))?;
    let trace = trace_a.max(trace_b).max(trace_c);
    let ratio = full / weak;
    let detail = format!(
        "population deviation {full:.2e} -> {weak:.2e} (x{ratio:.1}), low-excitation coherence error {low_rel:.2e}, trace error {trace:.1e}"
    );
    if !(ratio >= 10.0) || low_rel >= 1e-6 || trace >= 1e-10 {
        return Err(detail);
    }
    within_time(start.elapsed(), 30.0, detail)
}

fn reduced_vs_finite() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.005);
    let len = 3000;
    let exc = ExcitationSpec::for_geometry(0.5 * PI, 0.0, &geom).map_err(|e| e.to_string())?;
    let grid = uniform_grid(0.0, 5.0, 101);
    let settings = IntegratorSettings::default();
    let k_inf = coupling_parameter_infinite(&geom, &decay, &InfiniteChainOptions::default()).map_err(|e| e.to_string())?;
    let k_n = coupling_parameter_finite(&geom, &decay, central_site(len), len).map_err(|e| e.to_string())?;
    let reduced = reduced_run(&geom, &decay, &exc, &grid, &settings, &k_inf).map_err(|e| e.to_string())?;
    let finite = central_site_run(&geom, &decay, &exc, len, &grid, &settings).map_err(|e| e.to_string())?;
    let dk = (k_inf.k.im - k_n.k.im).abs();
    let mut worst = 0.0_f64;
    for (i, &t) in grid.iter().enumerate().skip(1) {
        let d = (reduced.primary().phase[i] - finite.primary().phase[i]).abs();
        worst = worst.max(d / (dk * t));
    }
    let detail = format!("max |dphi| / (|K^I_inf - K^I_N| t) = {worst:.3} (bound 3)");
    if worst >= 3.0 {
        return Err(detail);
    }
    within_time(start.elapsed(), 300.0, detail)
}

fn finite_size_tracking() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.05);
    let lens: Vec<usize> = (50..=600).collect();
    let report =
        finite_size_deviation_scan(&geom, &decay, &lens, &FiniteSizeSettings::new(0.5 * PI)).map_err(|e| e.to_string())?;
    let phase = local_extrema(&lens, &report.phase, 0.0, false).map_err(|e| e.to_string())?;
    let kdiff = local_extrema(&lens, &report.k_imag_diff_sq, 0.0, false).map_err(|e| e.to_string())?;
    let m = match_extrema(&phase, &kdiff, 2);
    let (n_max, n_min) = extremal_lengths(&lens, &report.k_imag_diff_sq).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} phase extrema vs {} K extrema, {} unmatched, max offset {}; extremal N: max {n_max}, min {n_min}",
        phase.len(),
        kdiff.len(),
        m.unmatched_first.len() + m.unmatched_second.len(),
        m.max_offset()
    );
    if phase.is_empty() || !m.all_matched() {
        return Err(detail);
    }
    within_time(start.elapsed(), 600.0, detail)
}

fn beat_minimum_shift() -> Outcome {
    let start = Instant::now();
    let (geom, decay) = fe57(0.005);
    let spec = InterferometerSpec::default();
    let areas = [1e-5 * PI, 0.25 * PI, 0.5 * PI, 0.75 * PI];
    let grid = uniform_grid(0.0, 3.0, 3001);
    let runs = interference_sweep(
        &spec,
        &geom,
        &decay,
        &areas,
        &grid,
        &IntegratorSettings::default(),
        &InfiniteChainOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let mut firsts = Vec::new();
    for r in &runs {
        match r.minima.first() {
            Some(&(t, _)) => firsts.push(t),
            None => return Err(format!("no beat minimum for A = {:.3} pi", r.pulse_area / PI)),
        }
    }
    let increasing = firsts.windows(2).all(|w| w[1] > w[0]);
    let decreasing = firsts.windows(2).all(|w| w[1] < w[0]);
    let ns = ns_per_inverse_gamma(FE57_LINEWIDTH_NEV);
    let shift_ns = (firsts[firsts.len() - 1] - firsts[0]).abs() * ns;
    let direction = if decreasing { "earlier" } else if increasing { "later" } else { "non-monotone" };
    let detail = format!("first minima {firsts:.5?} / Gamma, shift {shift_ns:.2} ns towards {direction} times");
    if !(increasing || decreasing) || !(1.0..=10.0).contains(&shift_ns) {
        return Err(detail);
    }
    within_time(start.elapsed(), 60.0, detail)
}

fn determinism() -> Outcome {
    let (geom, decay) = fe57(0.005);
    let grid = uniform_grid(0.0, 2.0, 41);
    let settings = IntegratorSettings::fixed(0.005);
    let exc = ExcitationSpec::for_geometry(0.5 * PI, 0.0, &geom).map_err(|e| e.to_string())?;
    let k = coupling_parameter_infinite(&geom, &decay, &InfiniteChainOptions::default()).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in 0..2 {
        let reduced = reduced_run(&geom, &decay, &exc, &grid, &settings, &k).map_err(|e| e.to_string())?;
        let finite = central_site_run(&geom, &decay, &exc, 200, &grid, &settings).map_err(|e| e.to_string())?;
        for (name, tr) in [("reduced", reduced), ("finite", finite)] {
            let path = dir.path().join(format!("{name}_{run}.csv"));
            trajectory_table(&tr, Some(ns_per_inverse_gamma(FE57_LINEWIDTH_NEV)))
                .and_then(|t| t.write(&path))
                .map_err(|e| e.to_string())?;
            files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
    }
    if files[0] == files[2] && files[1] == files[3] {
        Ok(format!("{} and {} bytes identical across runs", files[0].len(), files[1].len()))
    } else {
        Err("CSV output differs between identical runs".into())
    }
}

#[test]
fn primary_criteria() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("single-particle exactness", single_particle),
        ("polylogarithm constants", polylog_constants),
        ("K finite-vs-closed-form consistency", k_consistency),
        ("K^I zero crossing", k_imag_zero_crossing),
        ("low-excitation round trip", low_excitation_round_trip),
        ("analytic phase bound", analytic_phase_bound),
        ("exact-oracle validation", oracle_validation),
        ("reduced-vs-finite agreement", reduced_vs_finite),
        ("finite-size extrema tracking", finite_size_tracking),
        ("beat-minimum shift", beat_minimum_shift),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2} s]"),
            Err(detail) => {
                println!("FAIL  {name}: {detail} [{secs:.2} s]");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
