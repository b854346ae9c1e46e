//! The five pipeline commands. Each reads the resolved configuration, runs
//! the library and writes CSV/JSON artifacts through a [`RunContext`].

use std::path::PathBuf;

use serde::Serialize;

use nucdecay::analysis::{
    extremal_lengths, finite_size_deviation_scan, finite_size_phase_study, interference_sweep, k_angle_scan,
    k_angle_scan_finite, k_convergence_scan, k_site_scan, local_extrema, match_extrema, reduced_run, Extremum,
    ExtremaMatch, FiniteSizeSettings,
};
use nucdecay::couplings::{central_site, coupling_parameter_finite, coupling_parameter_infinite, CouplingTable};
use nucdecay::dynamics::{evolve_finite, Drive, ExcitationSpec, FiniteChain};
use nucdecay::observables::{AmplitudeModel, InterferometerSpec};
use nucdecay::ode::uniform_grid;
use nucdecay::oracle::{build_system, evolve_exact, CouplingMatrices};
use nucdecay::output::{trajectory_table, Cell, CsvTable};
use nucdecay::trajectory::Trajectory;

use crate::config::{AmplitudeName, ModelName, RunConfig};
use crate::error::CliError;
use crate::run::RunContext;

/// File-name label of a pulse area given in units of `pi`.
fn area_label(a_over_pi: f64) -> String {
    format!("a{a_over_pi}pi")
}

fn add_trajectory_meta(table: &mut CsvTable, tr: &Trajectory<f64>) {
    for (k, v) in &tr.metadata {
        table.push_meta(k, v);
    }
    for d in &tr.diagnostics {
        table.push_meta("diagnostic", d);
    }
}

pub fn kscan(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut ctx = RunContext::new(cfg, "kscan")?;
    let geom = cfg.geometry()?;
    let decay = cfg.decay()?;
    let k = &cfg.kscan;
    let thetas = uniform_grid(k.theta_min, k.theta_max, k.points);
    let rows = k_angle_scan(&geom, &decay, &thetas, &cfg.infinite_options())?;
    let finite = match k.finite_length {
        Some(len) => Some(k_angle_scan_finite(&geom, &decay, &thetas, len)?),
        None => None,
    };
    let mut columns = vec!["theta_in_rad", "k_real_over_gamma", "k_imag_over_gamma"];
    if finite.is_some() {
        columns.extend(["k_real_finite_over_gamma", "k_imag_finite_over_gamma"]);
    }
    let mut table = CsvTable::new(columns);
    table.push_meta("theta_d", geom.dipole_angle);
    table.push_meta("eta0", geom.eta0());
    table.push_meta("gamma0", decay.gamma0);
    table.push_meta("regularization", serde_json::to_string(&cfg.infinite_options().regularization).unwrap_or_default());
    if let Some(len) = k.finite_length {
        table.push_meta("finite_length", len);
        table.push_meta("finite_site", central_site(len));
    }
    for (i, r) in rows.iter().enumerate() {
        let mut row = vec![Cell::Num(r.theta_in), Cell::Num(r.summary.k.re), Cell::Num(r.summary.k.im)];
        if let Some(f) = &finite {
            row.push(Cell::Num(f[i].summary.k.re));
            row.push(Cell::Num(f[i].summary.k.im));
        }
        table.push_row(row)?;
    }
    ctx.write_csv("kscan", "k-angle-scan", table)?;
    ctx.finish()
}

pub fn evolve(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut ctx = RunContext::new(cfg, "evolve")?;
    let geom = cfg.geometry()?;
    let decay = cfg.decay()?;
    let settings = cfg.integrator()?;
    let e = &cfg.evolve;
    let grid = uniform_grid(0.0, e.t_end, e.points);
    let ns = cfg.ns_per_inverse_gamma();
    let run_reduced = matches!(e.model, ModelName::Reduced | ModelName::Both);
    let run_finite = matches!(e.model, ModelName::Finite | ModelName::Both);
    let sites = if e.sites.is_empty() { vec![central_site(e.chain_length)] } else { e.sites.clone() };

    let k_inf = coupling_parameter_infinite(&geom, &decay, &cfg.infinite_options())?;
    let chain = if run_finite {
        let table = CouplingTable::new(&geom, &decay, e.chain_length.saturating_sub(1));
        Some(FiniteChain::new(decay.gamma_total(), Drive::Pairwise(table), e.chain_length)?)
    } else {
        None
    };

    let mut all = Vec::new();
    for &a in &cfg.excitation.pulse_areas {
        let exc = ExcitationSpec::for_geometry(a * std::f64::consts::PI, cfg.excitation.global_phase, &geom)?;
        if run_reduced {
            let tr = reduced_run(&geom, &decay, &exc, &grid, &settings, &k_inf)?;
            let mut table = trajectory_table(&tr, Some(ns))?;
            add_trajectory_meta(&mut table, &tr);
            ctx.write_csv(&format!("evolve_reduced_{}", area_label(a)), "trajectory", table)?;
            all.push(("reduced", a, tr));
        }
        if let Some(chain) = &chain {
            let mut tr = evolve_finite(chain, &exc, &grid, &settings, &sites)?;
            if e.compensate_incident_phase {
                tr.compensate_incident_phase(exc.phase_step);
            }
            for &l in &sites {
                let k = coupling_parameter_finite(&geom, &decay, l, e.chain_length)?.k;
                tr.insert_meta(&format!("k_site{l}"), [k.re, k.im]);
            }
            let mut table = trajectory_table(&tr, Some(ns))?;
            add_trajectory_meta(&mut table, &tr);
            ctx.write_csv(&format!("evolve_finite_{}", area_label(a)), "trajectory", table)?;
            all.push(("finite", a, tr));
        }
    }

    #[derive(Serialize)]
    struct Run<'a> {
        model: &'a str,
        pulse_area_over_pi: f64,
        trajectory: &'a Trajectory<f64>,
    }
    let runs: Vec<Run> = all
        .iter()
        .map(|(model, a, tr)| Run {
            model,
            pulse_area_over_pi: *a,
            trajectory: tr,
        })
        .collect();
    ctx.write_json("evolve", "trajectories", runs)?;
    ctx.finish()
}

#[derive(Clone, Debug, Serialize)]
struct OracleRow {
    pulse_area_over_pi: f64,
    max_population_deviation: f64,
    mean_population_deviation: f64,
    max_coherence_deviation: f64,
    max_coherence_relative_deviation: f64,
    max_connected_correlation: f64,
    max_trace_error: f64,
    max_hermiticity_error: f64,
    positivity_violations: usize,
    diagnostics: Vec<String>,
}

fn oracle_row(
    cfg: &RunConfig,
    matrices: &CouplingMatrices<f64>,
    table: &CouplingTable<f64>,
    a_over_pi: f64,
) -> Result<OracleRow, CliError> {
    let geom = cfg.geometry()?;
    let decay = cfg.decay()?;
    let settings = cfg.integrator()?;
    let o = &cfg.oracle;
    let grid = uniform_grid(0.0, o.t_end, o.points);
    let exc = ExcitationSpec::for_geometry(a_over_pi * std::f64::consts::PI, cfg.excitation.global_phase, &geom)?;
    let sites: Vec<usize> = (1..=o.size).collect();
    let pairs: Vec<(usize, usize)> =
        (1..=o.size).flat_map(|n| (n + 1..=o.size).map(move |m| (n, m))).collect();
    let exact = evolve_exact(matrices, &exc, &grid, &settings, &pairs)?;
    let chain = FiniteChain::new(decay.gamma_total(), Drive::Pairwise(table.clone()), o.size)?;
    let cumulant = evolve_finite(&chain, &exc, &grid, &settings, &sites)?;

    let mut max_pop = 0.0_f64;
    let mut sum_pop = 0.0_f64;
    let mut max_coh = 0.0_f64;
    let mut max_rel = 0.0_f64;
    for k in 0..grid.len() {
        for (j, rec) in cumulant.records.iter().enumerate() {
            let dp = (rec.population[k] - exact.populations[k][j]).abs();
            max_pop = max_pop.max(dp);
            sum_pop += dp;
            let s = num_complex::Complex::from_polar(rec.coherence_abs[k], rec.phase[k]);
            let ex = exact.coherences[k][j];
            let dc = (s - ex).norm();
            max_coh = max_coh.max(dc);
            if ex.norm() > 1e-12 {
                max_rel = max_rel.max(dc / ex.norm());
            }
        }
    }
    let max_connected = exact
        .connected
        .iter()
        .flat_map(|row| row.iter().map(|c| c.norm()))
        .fold(0.0_f64, f64::max);
    let mut diagnostics = exact.diagnostics.clone();
    diagnostics.extend(cumulant.diagnostics.iter().cloned());
    Ok(OracleRow {
        pulse_area_over_pi: a_over_pi,
        max_population_deviation: max_pop,
        mean_population_deviation: sum_pop / (grid.len() * o.size) as f64,
        max_coherence_deviation: max_coh,
        max_coherence_relative_deviation: max_rel,
        max_connected_correlation: max_connected,
        max_trace_error: exact.max_trace_error,
        max_hermiticity_error: exact.max_hermiticity_error,
        positivity_violations: exact.positivity_violations,
        diagnostics,
    })
}

pub fn oracle_compare(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut ctx = RunContext::new(cfg, "oracle-compare")?;
    let geom = cfg.geometry()?;
    let decay = cfg.decay()?;
    let o = &cfg.oracle;
    // enforces the capacity limit before anything is allocated
    build_system(&geom, &decay, o.size, o.cap)?;
    let base = CouplingTable::new(&geom, &decay, o.size.saturating_sub(1).max(1));
    let system = |scale: f64| -> Result<(CouplingTable<f64>, CouplingMatrices<f64>), CliError> {
        let table = base.scaled(scale);
        let m = CouplingMatrices::from_table(&table, decay.gamma_total(), decay.gamma_ic, o.size)?;
        Ok((table, m))
    };
    let (table, matrices) = system(o.coupling_scale)?;
    let weak = if o.scaling_check { Some(system(o.coupling_scale / 10.0)?) } else { None };

    let mut rows = Vec::new();
    let mut weak_rows = Vec::new();
    for &a in &cfg.excitation.pulse_areas {
        rows.push(oracle_row(cfg, &matrices, &table, a)?);
        if let Some((wt, wm)) = &weak {
            weak_rows.push(oracle_row(cfg, wm, wt, a)?);
        }
    }

    let mut csv = CsvTable::new([
        "pulse_area_over_pi",
        "max_population_deviation",
        "mean_population_deviation",
        "max_coherence_deviation",
        "max_coherence_relative_deviation",
        "max_connected_correlation",
        "max_trace_error",
        "positivity_violations",
        "scaling_ratio",
    ]);
    csv.push_meta("size", o.size);
    csv.push_meta("coupling_scale", o.coupling_scale);
    csv.push_meta("radiative_gamma_psd", matrices.radiative_is_psd());
    let mut ratios = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let ratio = weak_rows.get(i).map(|w| r.max_population_deviation / w.max_population_deviation);
        ratios.push(ratio);
        csv.push_row(vec![
            Cell::Num(r.pulse_area_over_pi),
            Cell::Num(r.max_population_deviation),
            Cell::Num(r.mean_population_deviation),
            Cell::Num(r.max_coherence_deviation),
            Cell::Num(r.max_coherence_relative_deviation),
            Cell::Num(r.max_connected_correlation),
            Cell::Num(r.max_trace_error),
            Cell::Int(r.positivity_violations as i64),
            ratio.map(Cell::Num).unwrap_or(Cell::Text(String::new())),
        ])?;
    }
    ctx.write_csv("oracle_compare", "oracle-summary", csv)?;
    let report = serde_json::json!({
        "size": o.size,
        "coupling_scale": o.coupling_scale,
        "radiative_gamma_psd": matrices.radiative_is_psd(),
        "runs": rows,
        "weak_coupling_runs": weak_rows,
        "scaling_ratios": ratios,
    });
    ctx.write_json("oracle_compare", "oracle-report", report)?;
    ctx.finish()
}

pub fn interfere(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut ctx = RunContext::new(cfg, "interfere")?;
    let geom = cfg.geometry()?;
    let decay = cfg.decay()?;
    let i = &cfg.interfere;
    let spec = InterferometerSpec {
        detuning: i.detuning,
        sample_incidence: i.sample_incidence,
        reference_incidence: i.reference_incidence,
        pulse_area: 0.0,
        amplitude_model: match i.amplitude_model {
            AmplitudeName::FromTrajectory => AmplitudeModel::FromTrajectory,
            AmplitudeName::EqualExponential => AmplitudeModel::EqualExponential,
        },
        gamma: decay.gamma_total(),
    };
    let grid = uniform_grid(0.0, i.t_end, i.points);
    let areas = cfg.pulse_areas();
    let runs = interference_sweep(&spec, &geom, &decay, &areas, &grid, &cfg.integrator()?, &cfg.infinite_options())?;
    let ns = cfg.ns_per_inverse_gamma();

    let mut summary = CsvTable::new(["pulse_area_over_pi", "t_first_min_over_Gamma", "t_first_min_ns", "shift_ns"]);
    let mut first_reference: Option<f64> = None;
    for (run, &a) in runs.iter().zip(&cfg.excitation.pulse_areas) {
        let label = area_label(a);
        let header = |t: &mut CsvTable| {
            t.push_meta("pulse_area_over_pi", a);
            t.push_meta("detuning", i.detuning);
            t.push_meta("sample_incidence", i.sample_incidence);
            t.push_meta("reference_incidence", i.reference_incidence);
            t.push_meta("amplitude_model", serde_json::to_string(&spec.amplitude_model).unwrap_or_default());
        };
        let mut full = CsvTable::new(["t_over_Gamma", "t_ns", "intensity_normalized"]);
        let mut zoom = full.clone();
        header(&mut full);
        header(&mut zoom);
        zoom.push_meta("zoom_window", format!("[{}, {}]", i.zoom_start, i.zoom_end));
        for (&t, &v) in run.trace.times.iter().zip(&run.trace.intensity) {
            let row = vec![Cell::Num(t), Cell::Num(t * ns), Cell::Num(v)];
            if t >= i.zoom_start && t <= i.zoom_end {
                zoom.push_row(row.clone())?;
            }
            full.push_row(row)?;
        }
        ctx.write_csv(&format!("interfere_{label}"), "intensity", full)?;
        ctx.write_csv(&format!("interfere_zoom_{label}"), "intensity-zoom", zoom)?;

        let mut minima = CsvTable::new(["index", "t_min_over_Gamma", "t_min_ns", "intensity_min"]);
        header(&mut minima);
        for (k, &(t, v)) in run.minima.iter().enumerate() {
            minima.push_row(vec![Cell::Int(k as i64), Cell::Num(t), Cell::Num(t * ns), Cell::Num(v)])?;
        }
        ctx.write_csv(&format!("interfere_minima_{label}"), "beat-minima", minima)?;

        if let Some(&(t, _)) = run.minima.first() {
            let t0 = *first_reference.get_or_insert(t);
            summary.push_row(vec![Cell::Num(a), Cell::Num(t), Cell::Num(t * ns), Cell::Num((t - t0) * ns)])?;
        }
    }
    ctx.write_csv("interfere_first_minima", "beat-minimum-shift", summary)?;
    ctx.finish()
}

#[derive(Serialize)]
struct ExtremaReport<'a> {
    phase_extrema: &'a [Extremum],
    k_imag_extrema: &'a [Extremum],
    tolerance: usize,
    matching: &'a ExtremaMatch,
    all_matched: bool,
    max_offset: usize,
    extremal_length_max: Option<usize>,
    extremal_length_min: Option<usize>,
}

pub fn finite_size(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut ctx = RunContext::new(cfg, "finite-size")?;
    let f = &cfg.finite_size;
    let geom = cfg.geometry()?.with_incidence(f.incidence_angle);
    geom.validate()?;
    let decay = cfg.decay()?;
    let options = cfg.infinite_options();
    let lens: Vec<usize> = (f.min_length..=f.max_length).step_by(f.length_step).collect();

    let conv = k_convergence_scan(&geom, &decay, &lens, &options)?;
    let mut table = CsvTable::new(["n", "site", "k_real_over_gamma", "k_imag_over_gamma", "k_real_diff_sq", "k_imag_diff_sq"]);
    table.push_meta("incidence_angle", f.incidence_angle);
    table.push_meta("k_infinite", format!("{} {}", conv.k_infinite.k.re, conv.k_infinite.k.im));
    for r in &conv.rows {
        table.push_row(vec![
            Cell::Int(r.len as i64),
            Cell::Int(r.site as i64),
            Cell::Num(r.k.re),
            Cell::Num(r.k.im),
            Cell::Num(r.diff_real_sq),
            Cell::Num(r.diff_imag_sq),
        ])?;
    }
    ctx.write_csv("k_convergence", "k-convergence", table)?;

    let profile = k_site_scan(&geom, &decay, f.profile_length)?;
    let mut table = CsvTable::new(["site", "k_real_over_gamma", "k_imag_over_gamma"]);
    table.push_meta("incidence_angle", f.incidence_angle);
    table.push_meta("chain_length", f.profile_length);
    for (l, k) in profile.iter().enumerate() {
        table.push_row(vec![Cell::Int(l as i64 + 1), Cell::Num(k.k.re), Cell::Num(k.k.im)])?;
    }
    ctx.write_csv("k_site_profile", "k-site-profile", table)?;

    let mut settings = FiniteSizeSettings::new(f.pulse_area * std::f64::consts::PI);
    settings.global_phase = cfg.excitation.global_phase;
    settings.window = (f.window_start, f.window_end);
    settings.samples = f.samples;
    settings.integrator = cfg.integrator()?;
    settings.infinite = options;
    let report = finite_size_deviation_scan(&geom, &decay, &lens, &settings)?;
    let mut table = CsvTable::new([
        "n",
        "dO_coherence_abs",
        "dO_phase",
        "dO_population",
        "k_real_diff_sq",
        "k_imag_diff_sq",
    ]);
    table.push_meta("incidence_angle", f.incidence_angle);
    table.push_meta("pulse_area_over_pi", f.pulse_area);
    table.push_meta("window", format!("[{}, {}]", f.window_start, f.window_end));
    table.push_meta("samples", f.samples);
    for (i, &n) in report.lengths.iter().enumerate() {
        table.push_row(vec![
            Cell::Int(n as i64),
            Cell::Num(report.coherence_abs[i]),
            Cell::Num(report.phase[i]),
            Cell::Num(report.population[i]),
            Cell::Num(report.k_real_diff_sq[i]),
            Cell::Num(report.k_imag_diff_sq[i]),
        ])?;
    }
    ctx.write_csv("deviation", "deviation-report", table)?;

    let phase_ext = local_extrema(&lens, &report.phase, 0.0, false)?;
    let k_ext = local_extrema(&lens, &report.k_imag_diff_sq, 0.0, false)?;
    let tolerance = 2;
    let matching = match_extrema(&phase_ext, &k_ext, tolerance);
    let extremal = extremal_lengths(&lens, &report.k_imag_diff_sq).ok();
    ctx.write_json(
        "extrema",
        "finite-size-extrema",
        ExtremaReport {
            phase_extrema: &phase_ext,
            k_imag_extrema: &k_ext,
            tolerance,
            matching: &matching,
            all_matched: matching.all_matched(),
            max_offset: matching.max_offset(),
            extremal_length_max: extremal.map(|e| e.0),
            extremal_length_min: extremal.map(|e| e.1),
        },
    )?;

    let compare: Vec<usize> = if !f.compare_lengths.is_empty() {
        f.compare_lengths.clone()
    } else if let Some((hi, lo)) = extremal {
        vec![hi, lo]
    } else {
        Vec::new()
    };
    if !compare.is_empty() {
        let grid = uniform_grid(0.0, f.compare_t_end, f.compare_points);
        let areas = cfg.pulse_areas();
        let study = finite_size_phase_study(&geom, &decay, &compare, &areas, &grid, &settings.integrator, &options)?;
        let ns = cfg.ns_per_inverse_gamma();
        for &n in &compare {
            let runs: Vec<_> = study.iter().filter(|c| c.len == n).collect();
            let mut columns = vec!["t_over_Gamma".to_string(), "t_ns".to_string()];
            for (c, &a) in runs.iter().zip(&cfg.excitation.pulse_areas) {
                debug_assert_eq!(c.pulse_area, a * std::f64::consts::PI);
                columns.push(format!("phase_reduced_{}", area_label(a)));
                columns.push(format!("phase_finite_{}", area_label(a)));
            }
            let mut table = CsvTable::new(columns);
            table.push_meta("chain_length", n);
            table.push_meta("site", central_site(n));
            if let Some(c) = runs.first() {
                table.push_meta("k_finite", format!("{} {}", c.k_finite.re, c.k_finite.im));
                table.push_meta("k_infinite", format!("{} {}", c.k_infinite.re, c.k_infinite.im));
            }
            table.push_meta("phase_reference", "incident-compensated");
            for (k, &t) in grid.iter().enumerate() {
                let mut row = vec![Cell::Num(t), Cell::Num(t * ns)];
                for c in &runs {
                    row.push(Cell::Num(c.reduced.primary().phase[k]));
                    row.push(Cell::Num(c.finite.primary().phase[k]));
                }
                table.push_row(row)?;
            }
            ctx.write_csv(&format!("phase_compare_n{n}"), "phase-comparison", table)?;
        }
    }
    ctx.finish()
}
