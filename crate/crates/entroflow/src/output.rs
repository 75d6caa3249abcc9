//! CSV and JSON emission. Reals are written with 17 significant digits so
//! files round-trip bit-exactly through standard parsers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::{self, BoundReport};
use crate::mesh::Mesh;
use crate::stepper::{PhysParams, RunOutcome, SweepLevel, SweepParam, Trajectory};
use crate::Error;

/// 17 significant digits: exact round trip for f64.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// `trajectory.csv`: one row per (time level, node).
pub fn write_trajectory_csv(path: &Path, mesh: &Mesh, traj: &Trajectory) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,node_index,theta,phi,mu,u")?;
    for (n, state) in traj.states.iter().enumerate() {
        let t = n as f64 * traj.h;
        for i in 0..mesh.n_nodes() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_real(t),
                i,
                fmt_real(state.theta[i]),
                fmt_real(state.phi[i]),
                fmt_real(state.mu[i]),
                fmt_real(state.u[i]),
            )?;
        }
    }
    Ok(())
}

/// `diagnostics.csv`: one row per time level; the row at `t = 0` carries the
/// initial conserved total and energy with zero solver columns.
pub fn write_diagnostics_csv(
    path: &Path,
    mesh: &Mesh,
    params: &PhysParams,
    traj: &Trajectory,
) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "t,conserved_total,energy,min_theta,fp_iters,max_ratio,slack_a15,slack_a2,slack_a13"
    )?;
    let initial = &traj.states[0];
    let conserved0 = diagnostics::conserved_total(mesh, &initial.phi, &initial.mu, traj.h);
    let energy0 = diagnostics::energy(mesh, params, &initial.phi, &initial.mu, traj.h)?;
    let min_theta0 = initial.theta.iter().cloned().fold(f64::INFINITY, f64::min);
    writeln!(
        w,
        "{},{},{},{},0,{},{},{},{}",
        fmt_real(0.0),
        fmt_real(conserved0),
        fmt_real(energy0),
        fmt_real(min_theta0),
        fmt_real(0.0),
        fmt_real(0.0),
        fmt_real(0.0),
        fmt_real(0.0),
    )?;
    for report in &traj.reports {
        let t = (report.step + 1) as f64 * traj.h;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt_real(t),
            fmt_real(report.conserved),
            fmt_real(report.energy),
            fmt_real(report.min_theta),
            report.fp_iterations,
            fmt_real(report.max_ratio),
            fmt_real(report.slack_energy),
            fmt_real(report.slack_temperature),
            fmt_real(report.slack_subgradient),
        )?;
    }
    Ok(())
}

/// `summary.json`: run metadata, the bound-tracker output and failure info.
pub fn write_summary_json(
    path: &Path,
    mesh: &Mesh,
    params: &PhysParams,
    outcome: &RunOutcome,
    bounds: Option<&BoundReport>,
) -> Result<(), Error> {
    let traj = &outcome.trajectory;
    let mut bounds_json = serde_json::Map::new();
    if let Some(b) = bounds {
        for (name, value) in b.all_rows() {
            bounds_json.insert(name.to_string(), serde_json::json!(value));
        }
    }
    let failure = match &outcome.failure {
        Some(f) => serde_json::json!({ "step": f.step, "message": f.message }),
        None => serde_json::Value::Null,
    };
    let max_scheme_residual = traj
        .reports
        .iter()
        .map(|r| r.scheme_residual)
        .fold(0.0f64, f64::max);
    let min_theta = traj
        .reports
        .iter()
        .map(|r| r.min_theta)
        .fold(f64::INFINITY, f64::min);
    let summary = serde_json::json!({
        "status": if outcome.failure.is_none() { "ok" } else { "step_failure" },
        "graph": params.graph.kind.name(),
        "n_cells": mesh.n_cells(),
        "n_steps": traj.n_steps,
        "steps_completed": traj.reports.len(),
        "h": traj.h,
        "t_final": traj.t_final,
        "eps": params.eps,
        "tau": params.tau,
        "min_theta": if min_theta.is_finite() { serde_json::json!(min_theta) } else { serde_json::Value::Null },
        "max_scheme_residual": max_scheme_residual,
        "bounds": serde_json::Value::Object(bounds_json),
        "failure": failure,
    });
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &summary)
        .map_err(|e| Error::Config(format!("summary serialization failed: {e}")))?;
    writeln!(w)?;
    Ok(())
}

/// `sweep.csv`: one row per level with pairwise trajectory differences and
/// the bound-tracker quantities. Missing values (first level, failed levels)
/// are empty fields.
pub fn write_sweep_csv(path: &Path, param: SweepParam, rows: &[SweepLevel]) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    let bound_names: Vec<&'static str> = match rows.iter().find_map(|r| r.outcome.as_ref().ok()) {
        Some((_, report)) => report.all_rows().iter().map(|(n, _)| *n).collect(),
        None => Vec::new(),
    };
    write!(
        w,
        "level,param,value,h,n_steps,status,diff_l2_theta,diff_l2_phi,diff_l2_mu,diff_l2_state,diff_cvstar_phi"
    )?;
    for name in &bound_names {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for row in rows {
        let status = match &row.outcome {
            Ok(_) => "ok".to_string(),
            Err(msg) => format!("failed: {}", msg.replace([',', '\n'], ";")),
        };
        write!(
            w,
            "{},{},{},{},{},{}",
            row.level,
            param.name(),
            fmt_real(row.value),
            fmt_real(row.h),
            row.n_steps,
            status
        )?;
        match &row.diff_from_prev {
            Some(d) => write!(
                w,
                ",{},{},{},{},{}",
                fmt_real(d.l2_theta),
                fmt_real(d.l2_phi),
                fmt_real(d.l2_mu),
                fmt_real(d.l2_state),
                fmt_real(d.linf_vstar_phi)
            )?,
            None => write!(w, ",,,,,")?,
        }
        match &row.outcome {
            Ok((_, report)) => {
                for (_, value) in report.all_rows() {
                    write!(w, ",{}", fmt_real(value))?;
                }
            }
            Err(_) => {
                for _ in &bound_names {
                    write!(w, ",")?;
                }
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphKind;
    use crate::presets;
    use crate::stepper::{continuation, Scheme, SweepLevel};

    #[test]
    fn sweep_csv_marks_failed_levels() {
        // one real level plus a synthetic failure; the failed row keeps the
        // column count and sanitizes separators out of the message
        let config = presets::stationary(GraphKind::Regular);
        let (mesh, params, data) = config.build().unwrap();
        let mut rows = continuation(
            &params,
            &data,
            &mesh,
            config.t_final,
            config.n_steps,
            SweepParam::H,
            2,
        )
        .unwrap();
        rows.push(SweepLevel {
            level: 2,
            value: rows[1].value / 2.0,
            h: rows[1].h / 2.0,
            n_steps: rows[1].n_steps * 2,
            outcome: Err("solver exploded, badly\nvery badly".to_string()),
            diff_from_prev: None,
        });
        let dir = std::env::temp_dir().join(format!("entroflow-sweepcsv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sweep.csv");
        write_sweep_csv(&path, SweepParam::H, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let columns = lines[0].split(',').count();
        assert_eq!(lines.len(), 4);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), columns, "ragged row: {line}");
        }
        assert!(lines[3].contains("failed: solver exploded; badly;very badly"));
        let ok_rows: Vec<&str> = lines[1..3].iter().map(|l| l.split(',').nth(5).unwrap()).collect();
        assert_eq!(ok_rows, ["ok", "ok"]);
        // a completed run also wrote a scheme run; the second level carries diffs
        assert!(!lines[2].split(',').nth(6).unwrap().is_empty());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn reals_round_trip_exactly() {
        for x in [
            0.0,
            1.0,
            -1.0,
            std::f64::consts::PI,
            1e-300,
            -3.837e17,
            0.1 + 0.2,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_real(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }
}
