use std::f64::consts::LN_2;

use nalgebra::{DMatrix, Matrix6};
use optomech_core::dynamics::{build_drift, build_noise};
use optomech_core::gaussian::{reduced_cm, symplectic_eigenvalues, Mode};
use optomech_core::io_relations::{
    output_cm, reconstruct_from_samples, simulate_homodyne, HomodyneRecord, MeasurementConfig,
};
use optomech_core::sde::{em_stationary_covariance, integrate_ensemble, DeskSystem, IntegratorConfig};
use optomech_core::sweep::{run_stability_grid, Axis, AxisUnit, SweepSpec, SweepVariable};
use optomech_core::{
    derive, evaluate_point, load_config, solve_lyapunov, CavityLabel, Error, PointEvaluation,
    SystemParams,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::{
    Cli, Command, NegativityArgs, OracleArgs, PointArgs, ReconstructArgs, StabilityArgs,
    TripartiteArgs,
};
use crate::error::{CliError, CliResult};
use crate::output::{num, opt_bool, opt_num, OutDir, Table};
use crate::svg::{heatmap, line_plot, Series};

/// What a command printed and whether its own pass/fail check failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub failed: bool,
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Stability(a) => stability(&a),
        Command::Negativity(a) => negativity(&a),
        Command::Tripartite(a) => tripartite(&a),
        Command::Reconstruct(a) => reconstruct(&a),
        Command::Oracle(a) => oracle(&a),
        Command::Point(a) => point(&a),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn check_points(points: usize) -> CliResult<()> {
    if points == 0 {
        return Err(usage("--points must be at least 1"));
    }
    Ok(())
}

fn range(values: &[f64], flag: &str, points: usize) -> CliResult<(f64, f64)> {
    let (lo, hi) = (values[0], values[1]);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(usage(format!("{flag}: range must be finite")));
    }
    if points > 1 && !(lo < hi) {
        return Err(usage(format!("{flag}: empty range [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

pub const STABILITY_HEADER: &[&str] = &[
    "delta_b",
    "abs_delta_b_over_omega_m",
    "p_b",
    "c1",
    "c2",
    "margin",
    "stable",
    "hurwitz_stable",
];

fn stability(a: &StabilityArgs) -> CliResult<Outcome> {
    let base = load_config(&a.common.config)?;
    check_points(a.points)?;
    let pb_points = a.pb_points.unwrap_or(a.points);
    check_points(pb_points)?;
    let (lo, hi) = range(&a.delta_b, "--delta-b", a.points)?;
    if !(a.pb_max > 0.0 && a.pb_max.is_finite()) {
        return Err(usage("--pb-max must be positive"));
    }
    let spec = SweepSpec::new(vec![
        Axis::new(SweepVariable::PB, 0.0, a.pb_max, pb_points, AxisUnit::FractionPA).half_open(),
        Axis::new(SweepVariable::DeltaB, lo, hi, a.points, AxisUnit::KappaA),
    ])?;
    let grid = run_stability_grid(&base, &spec)?;
    let wm = base.mirror.omega_m;
    let mut table = Table::new(STABILITY_HEADER);
    for (p, r) in &grid {
        table.push(vec![
            num(p.cavity_b.detuning),
            num((p.cavity_b.detuning / wm).abs()),
            num(p.cavity_b.power),
            num(r.c1()),
            num(r.c2()),
            num(r.margin),
            r.stable.to_string(),
            r.hurwitz_stable.to_string(),
        ]);
    }
    let out = OutDir::create(&a.common.out)?;
    out.write("stability.csv", &table.to_csv())?;
    let xs = spec.axes[1].values(&base).iter().map(|d| d / base.cavity_a.kappa).collect::<Vec<_>>();
    let ys = spec.axes[0].values(&base).iter().map(|p| p / base.cavity_a.power).collect::<Vec<_>>();
    for (name, pick) in [("c1", 0usize), ("c2", 1)] {
        let values: Vec<Option<f64>> = grid
            .iter()
            .map(|(_, r)| Some(if pick == 0 { r.c1() } else { r.c2() }))
            .collect();
        let svg = heatmap(
            &xs,
            &ys,
            &values,
            &format!("{} (blue > 0, red < 0)", name.to_uppercase()),
            "Δ_b / κ_a",
            "P_b / P_a",
        );
        out.write(&format!("stability_{name}.svg"), &svg)?;
    }
    let unstable = grid.iter().filter(|(_, r)| !r.stable).count();
    Ok(Outcome {
        lines: vec![format!(
            "{} grid points, {} stable, {} unstable",
            grid.len(),
            grid.len() - unstable,
            unstable
        )],
        failed: false,
    })
}

fn evaluate_all(points: &[SystemParams]) -> CliResult<Vec<PointEvaluation>> {
    Ok(points
        .par_iter()
        .map(evaluate_point)
        .collect::<Result<Vec<_>, Error>>()?)
}

fn detuning_axis(base: &SystemParams, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    Axis::new(SweepVariable::DeltaB, lo, hi, points, AxisUnit::OmegaM).values(base)
}

pub const NEGATIVITY_HEADER: &[&str] = &[
    "delta_b",
    "abs_delta_b_over_omega_m",
    "p_b",
    "stable",
    "en_am",
    "en_bm",
    "en_ab",
    "nu_minus_am",
    "nu_minus_bm",
    "nu_minus_ab",
];

fn negativity(a: &NegativityArgs) -> CliResult<Outcome> {
    let base = load_config(&a.common.config)?;
    check_points(a.points)?;
    let (lo, hi) = range(&a.delta_b, "--delta-b", a.points)?;
    if a.pb.is_empty() || a.pb.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
        return Err(usage("--pb needs non-negative fractions of P_a"));
    }
    let unit = if a.log2 { LN_2 } else { 1.0 };
    let deltas = detuning_axis(&base, lo, hi, a.points);
    let params: Vec<SystemParams> = a
        .pb
        .iter()
        .flat_map(|&f| {
            let pb = base.with_power(CavityLabel::B, f * base.cavity_a.power);
            deltas
                .iter()
                .map(move |&d| pb.with_detuning(CavityLabel::B, d))
                .collect::<Vec<_>>()
        })
        .collect();
    let evals = evaluate_all(&params)?;
    let wm = base.mirror.omega_m;
    let mut table = Table::new(NEGATIVITY_HEADER);
    for e in &evals {
        let ent = e.steady.as_ref().map(|s| s.entanglement);
        let p = &e.params;
        table.push(vec![
            num(p.cavity_b.detuning),
            num((p.cavity_b.detuning / wm).abs()),
            num(p.cavity_b.power),
            e.stability.stable.to_string(),
            opt_num(ent.map(|r| r.am.log_neg / unit)),
            opt_num(ent.map(|r| r.bm.log_neg / unit)),
            opt_num(ent.map(|r| r.ab.log_neg / unit)),
            opt_num(ent.map(|r| r.am.nu_minus)),
            opt_num(ent.map(|r| r.bm.nu_minus)),
            opt_num(ent.map(|r| r.ab.nu_minus)),
        ]);
    }
    let out = OutDir::create(&a.common.out)?;
    out.write("negativity.csv", &table.to_csv())?;
    let label = if a.log2 { "E_N (bits)" } else { "E_N" };
    let pairs: [(&str, fn(&optomech_core::EntanglementReport) -> f64); 3] = [
        ("am", |r| r.am.log_neg),
        ("bm", |r| r.bm.log_neg),
        ("ab", |r| r.ab.log_neg),
    ];
    for (pair, get) in pairs {
        let series: Vec<Series> = a
            .pb
            .iter()
            .zip(evals.chunks(deltas.len()))
            .map(|(f, chunk)| Series {
                label: format!("P_b = {f} P_a"),
                points: chunk
                    .iter()
                    .map(|e| {
                        let en = e.steady.as_ref().map(|s| get(&s.entanglement) / unit);
                        (e.params.cavity_b.detuning / wm, en)
                    })
                    .collect(),
            })
            .collect();
        let svg = line_plot(&series, &format!("{label} of pair {pair}"), "Δ_b / ω_m", label);
        out.write(&format!("negativity_{pair}.svg"), &svg)?;
    }
    let mut lines = Vec::new();
    for (f, chunk) in a.pb.iter().zip(evals.chunks(deltas.len())) {
        let best = |g: fn(&PointEvaluation) -> Option<f64>| chunk.iter().filter_map(g).fold(0.0f64, f64::max);
        lines.push(format!(
            "P_b = {f} P_a: max E_N am {:.4}, bm {:.4}, ab {:.4}; {} unstable",
            best(|e| e.steady.as_ref().map(|s| s.entanglement.am.log_neg)) / unit,
            best(|e| e.steady.as_ref().map(|s| s.entanglement.bm.log_neg)) / unit,
            best(|e| e.steady.as_ref().map(|s| s.entanglement.ab.log_neg)) / unit,
            chunk.iter().filter(|e| e.steady.is_none()).count()
        ));
    }
    Ok(Outcome { lines, failed: false })
}

pub const TRIPARTITE_HEADER: &[&str] = &[
    "delta_b",
    "abs_delta_b_over_omega_m",
    "p_b",
    "stable",
    "en_am",
    "en_bm",
    "en_ab",
    "npt_a_bm",
    "npt_b_am",
    "npt_m_ab",
    "fully_inseparable",
];

fn tripartite(a: &TripartiteArgs) -> CliResult<Outcome> {
    let base = load_config(&a.common.config)?;
    check_points(a.points)?;
    if !(a.abs_delta_b_max > 0.0 && a.abs_delta_b_max.is_finite()) {
        return Err(usage("--abs-delta-b-max must be positive"));
    }
    if !(a.pb >= 0.0 && a.pb.is_finite()) {
        return Err(usage("--pb must be a non-negative fraction"));
    }
    let sign = if a.positive { 1.0 } else { -1.0 };
    let pb = base.with_power(CavityLabel::B, a.pb * base.cavity_a.power);
    let params: Vec<SystemParams> = detuning_axis(&base, 0.0, a.abs_delta_b_max, a.points)
        .into_iter()
        .map(|d| pb.with_detuning(CavityLabel::B, sign * d))
        .collect();
    let evals = evaluate_all(&params)?;
    let wm = base.mirror.omega_m;
    let mut table = Table::new(TRIPARTITE_HEADER);
    let mut inseparable = Vec::new();
    for e in &evals {
        let ent = e.steady.as_ref().map(|s| s.entanglement);
        let t = ent.map(|r| r.tripartite);
        let p = &e.params;
        if t.is_some_and(|t| t.fully_inseparable) {
            inseparable.push((p.cavity_b.detuning / wm).abs());
        }
        table.push(vec![
            num(p.cavity_b.detuning),
            num((p.cavity_b.detuning / wm).abs()),
            num(p.cavity_b.power),
            e.stability.stable.to_string(),
            opt_num(ent.map(|r| r.am.log_neg)),
            opt_num(ent.map(|r| r.bm.log_neg)),
            opt_num(ent.map(|r| r.ab.log_neg)),
            opt_bool(t.map(|t| t.a_bm)),
            opt_bool(t.map(|t| t.b_am)),
            opt_bool(t.map(|t| t.m_ab)),
            opt_bool(t.map(|t| t.fully_inseparable)),
        ]);
    }
    let out = OutDir::create(&a.common.out)?;
    out.write("tripartite.csv", &table.to_csv())?;
    let pick = |f: fn(&optomech_core::EntanglementReport) -> f64| -> Vec<(f64, Option<f64>)> {
        evals
            .iter()
            .map(|e| {
                (
                    (e.params.cavity_b.detuning / wm).abs(),
                    e.steady.as_ref().map(|s| f(&s.entanglement)),
                )
            })
            .collect()
    };
    let series = vec![
        Series { label: "a-m".into(), points: pick(|r| r.am.log_neg) },
        Series { label: "b-m".into(), points: pick(|r| r.bm.log_neg) },
        Series { label: "a-b".into(), points: pick(|r| r.ab.log_neg) },
    ];
    let svg = line_plot(
        &series,
        &format!("Pairwise E_N at P_b = {} P_a", a.pb),
        "|Δ_b| / ω_m",
        "E_N",
    );
    out.write("tripartite.svg", &svg)?;
    let line = match (inseparable.first(), inseparable.last()) {
        (Some(lo), Some(hi)) => format!(
            "{} of {} points fully inseparable, |Δ_b|/ω_m in [{lo:.3}, {hi:.3}]",
            inseparable.len(),
            evals.len()
        ),
        _ => format!("no fully inseparable point among {}", evals.len()),
    };
    Ok(Outcome { lines: vec![line], failed: false })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows6(m: &Matrix6<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Largest relative standard error on the diagonal that flags an estimate
/// as low-confidence.
const LOW_CONFIDENCE_REL_STDERR: f64 = 0.1;

fn reconstruct(a: &ReconstructArgs) -> CliResult<Outcome> {
    let params = load_config(&a.common.config)?;
    let kappa = params.cavity_a.kappa;
    if params.cavity_b.kappa != kappa {
        log::warn!("cavities have different linewidths; the output map uses kappa_a");
    }
    let t_m = a.t_m.unwrap_or(1.0 / kappa);
    if !(t_m > 0.0 && t_m.is_finite()) {
        return Err(usage(format!("--t-m must be positive, got {t_m}")));
    }
    if a.samples < 2 {
        return Err(usage("--samples must be at least 2"));
    }
    let d = derive(&params);
    let v = solve_lyapunov(&build_drift(&d, &params), &build_noise(&d, &params))?;
    let v_ab = reduced_cm(&v, &[Mode::A, Mode::B])?;
    let v_out = output_cm(&v_ab, kappa, t_m)?;
    let mut cfg = MeasurementConfig::new(kappa, a.samples, a.seed);
    cfg.t_m = t_m;
    let out = OutDir::create(&a.common.out)?;
    let record = match &a.samples_from {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            HomodyneRecord::from_csv(&text)?
        }
        None => simulate_homodyne(&v_out, &cfg)?,
    };
    if a.export_samples {
        out.write("homodyne_samples.csv", &record.to_csv())?;
    }
    let est = reconstruct_from_samples(&record, kappa, t_m)?;
    let truth = optomech_core::log_negativity(&v_ab)?;
    let abs_error = (est.log_neg - truth).abs();
    let within = est.log_neg.is_finite() && abs_error <= 3.0 * est.log_neg_stderr;
    let mut entries_within = 0;
    for i in 0..4 {
        for j in i..4 {
            let dev = (est.v_ab.cm.entries[(i, j)] - v_ab.entries[(i, j)]).abs();
            if dev <= 3.0 * est.v_ab_stderr[(i, j)] {
                entries_within += 1;
            }
        }
    }
    let rel_diag = (0..4)
        .map(|i| est.v_ab_stderr[(i, i)] / est.v_ab.cm.entries[(i, i)].abs())
        .fold(0.0f64, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x) });
    let low_confidence = !est.v_ab.physical || rel_diag > LOW_CONFIDENCE_REL_STDERR;
    let report = json!({
        "kappa": kappa,
        "t_m": t_m,
        "samples_per_setting": record.settings.first().map_or(0, |s| s.xa.len()),
        "seed": a.seed,
        "phase_grid": record.settings.iter().map(|s| [s.theta_a, s.theta_b]).collect::<Vec<_>>(),
        "v_ab_true": rows(&v_ab.entries),
        "v_out_true": rows(&v_out.entries),
        "v_out_estimate": rows(&est.v_out.mean.entries),
        "v_out_stderr": rows(&est.v_out.stderr),
        "v_ab_estimate": rows(&est.v_ab.cm.entries),
        "v_ab_stderr": rows(&est.v_ab_stderr),
        "normal_condition": est.v_out.normal_condition,
        "reconstruction_physical": est.v_ab.physical,
        "en_ab_true": truth,
        "en_ab_estimate": est.log_neg,
        "en_ab_stderr": est.log_neg_stderr,
        "en_ab_abs_error": abs_error,
        "en_ab_within_3_stderr": within,
        "entries_within_3_stderr": entries_within,
        "max_relative_diagonal_stderr": rel_diag,
        "low_confidence": low_confidence,
    });
    out.write_json("reconstruct.json", &report)?;
    let mut lines = vec![if est.log_neg.is_finite() {
        format!(
            "E_N^ab true {truth:.6}, estimate {:.6} ± {:.6}: {}",
            est.log_neg,
            est.log_neg_stderr,
            if within { "within 3 stderr" } else { "OUTSIDE 3 stderr" }
        )
    } else {
        format!("E_N^ab true {truth:.6}, estimate undefined: reconstructed matrix is unphysical")
    }];
    if low_confidence {
        lines.push("low confidence: too few samples for a reliable reconstruction".into());
    }
    Ok(Outcome { lines, failed: false })
}

#[derive(Serialize)]
struct OracleReport {
    desk: DeskSystem,
    integrator: IntegratorConfig,
    lyapunov: Vec<Vec<f64>>,
    ensemble: Vec<Vec<f64>>,
    ensemble_stderr: Vec<Vec<f64>>,
    steps_per_trajectory: usize,
    relative_frobenius: f64,
    relative_stderr_frobenius: f64,
    tolerance: f64,
    /// Relative Frobenius bias of the discrete scheme's own fixed point.
    scheme_bias: f64,
    pass: bool,
}

/// Relative Frobenius tolerance for the ensemble check, before the stderr term.
const ORACLE_RTOL: f64 = 0.05;

fn oracle(a: &OracleArgs) -> CliResult<Outcome> {
    let desk = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<DeskSystem>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => DeskSystem::default(),
    };
    let cfg = IntegratorConfig {
        dt: a.dt,
        t_total: a.t_total,
        burn_in: a.burn_in,
        n_trajectories: a.trajectories,
        seed: a.seed,
    };
    let v = solve_lyapunov(&desk.drift(), &desk.noise())?.entries;
    let k = desk.drift().to_dmatrix();
    let n = desk.noise().to_dmatrix();
    let est = integrate_ensemble(&k, &n, &cfg)?;
    let scheme = em_stationary_covariance(&k, &n, cfg.dt)?;
    let norm = v.norm();
    let rel = (&est.covariance - &v).norm() / norm;
    let rel_se = est.stderr.norm() / norm;
    let tolerance = ORACLE_RTOL.max(4.0 * rel_se);
    let pass = rel <= tolerance;
    let report = OracleReport {
        desk,
        integrator: cfg,
        lyapunov: rows(&v),
        ensemble: rows(&est.covariance),
        ensemble_stderr: rows(&est.stderr),
        steps_per_trajectory: est.steps_per_trajectory,
        relative_frobenius: rel,
        relative_stderr_frobenius: rel_se,
        tolerance,
        scheme_bias: (&scheme - &v).norm() / norm,
        pass,
    };
    let out = OutDir::create(&a.out)?;
    out.write_json("oracle.json", &report)?;
    Ok(Outcome {
        lines: vec![format!(
            "relative Frobenius distance {rel:.4} (tolerance {tolerance:.4}): {}",
            if pass { "pass" } else { "FAIL" }
        )],
        failed: !pass,
    })
}

/// JSON document written by `point`; see `schemas/point.schema.json`.
pub fn point_report(e: &PointEvaluation) -> CliResult<serde_json::Value> {
    let p = &e.params;
    let k = build_drift(&e.derived, p);
    let n = build_noise(&e.derived, p);
    let s = &e.stability;
    let steady = match &e.steady {
        None => serde_json::Value::Null,
        Some(st) => json!({
            "covariance": rows(&st.covariance.entries),
            "residual": st.residual,
            "symplectic_eigenvalues": symplectic_eigenvalues(&st.covariance)?,
            "entanglement": st.entanglement,
        }),
    };
    Ok(json!({
        "params": p,
        "warnings": p.warnings().iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        "derived": e.derived,
        "drift": rows6(k.matrix()),
        "noise": rows6(n.matrix()),
        "stability": {
            "char_poly": s.char_poly,
            "scale": s.scale,
            "hurwitz_minors": s.hurwitz_minors,
            "c1": s.c1(),
            "c2": s.c2(),
            "hurwitz_stable": s.hurwitz_stable,
            "eigen_margins": s.eigen_margins,
            "margin": s.margin,
            "stable": s.stable,
        },
        "steady": steady,
    }))
}

fn point(a: &PointArgs) -> CliResult<Outcome> {
    let params = load_config(&a.common.config)?;
    let e = evaluate_point(&params)?;
    let report = point_report(&e)?;
    let out = OutDir::create(&a.common.out)?;
    out.write_json("point.json", &report)?;
    let line = match &e.steady {
        Some(s) => {
            let r = s.entanglement;
            format!(
                "stable; E_N am {:.4}, bm {:.4}, ab {:.4}; fully inseparable: {}",
                r.am.log_neg, r.bm.log_neg, r.ab.log_neg, r.tripartite.fully_inseparable
            )
        }
        None => format!("unstable (margin {:.4e} rad/s)", e.stability.margin),
    };
    Ok(Outcome { lines: vec![line], failed: false })
}
