//! Experiment dispatch and artifact emission.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use twisted_ep::betadyne::{betadyne_equivalence, map_to_betadyne};
use twisted_ep::dilation::{build_dilation, dilated_dynamics, metric_equation_convergence};
use twisted_ep::dynamics::{
    chirality_probe, evolve, extract_permutation, initial_basis, loop_stiffness, EvolveOptions, ModulationSchedule,
    StiffnessOptions,
};
use twisted_ep::hamiltonian::field_point;
use twisted_ep::permutation::{closure, normal_subgroup_orders, transfer_table, Permutation};
use twisted_ep::spectral::sheet_grid;

use crate::config::{sweep_schedule, Experiment, Resolved, SweepParameter};
use crate::error::CliError;

/// Collects artifacts in the output directory.
struct Artifacts {
    dir: PathBuf,
    pretty: bool,
    written: Vec<String>,
}

impl Artifacts {
    fn create(dir: &Path, pretty: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), pretty, written: Vec::new() })
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let text = if self.pretty { serde_json::to_string_pretty(value) } else { serde_json::to_string(value) }
            .map_err(|e| CliError::Config(format!("cannot serialize {name}: {e}")))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Runs the experiment and writes its artifacts plus manifest.json.
/// Returns the artifact names.
pub fn run(resolved: &Resolved) -> Result<Vec<String>, CliError> {
    let cfg = &resolved.config;
    let mut out = Artifacts::create(&cfg.output.directory, cfg.output.pretty_json)?;
    let opts = EvolveOptions {
        steps: cfg.numerics.steps,
        epsilon: cfg.numerics.epsilon,
        samples: cfg.numerics.samples,
        windings: cfg.numerics.windings,
    };
    let schedule = || resolved.schedule.as_ref().expect("schedule resolved for this experiment");
    let system = || resolved.system.as_ref().expect("system resolved for this experiment");

    match cfg.experiment {
        Experiment::Spectrum => {
            let g = cfg.grid.as_ref().expect("grid resolved");
            let grid = sheet_grid(system(), g.x_range, g.y_range, g.resolution, g.couplings_scale)?;
            out.csv("sheetgrid.csv", |w| grid.write_csv(w))?;
            let mut asymmetry = 0.0f64;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for cell in grid.energies.iter().flatten() {
                let (a, b) = (cell[0], cell[cell.len() - 1]);
                asymmetry = asymmetry.max((a + b).abs());
                lo = lo.min(a);
                hi = hi.max(b);
            }
            out.json(
                "spectrum.json",
                &json!({
                    "sheets": grid.sheets,
                    "cells": grid.energies.len(),
                    "masked_cells": grid.masked_count(),
                    "min_energy": lo,
                    "max_energy": hi,
                    "max_min_plus_max": asymmetry,
                }),
            )?;
        }
        Experiment::Evolve => {
            let s = schedule();
            let k = cfg.numerics.initial_state.unwrap_or(1);
            write_trajectory(&mut out, s, k, &opts)?;
        }
        Experiment::Permute => {
            let s = schedule();
            let value = if cfg.numerics.both_directions {
                let r = chirality_probe(s, opts.epsilon, &opts, cfg.numerics.threshold)?;
                let primary = match s.direction {
                    twisted_ep::dynamics::Direction::CounterClockwise => &r.counter_clockwise,
                    twisted_ep::dynamics::Direction::Clockwise => &r.clockwise,
                };
                let mut v = serde_json::to_value(primary).map_err(json_err)?;
                v["min_fidelity"] = json!(primary.min_confidence());
                v["chirality"] = serde_json::to_value(&r).map_err(json_err)?;
                v
            } else {
                let o = extract_permutation(s, &opts, cfg.numerics.threshold)?;
                let mut v = serde_json::to_value(&o).map_err(json_err)?;
                v["min_fidelity"] = json!(o.min_confidence());
                v
            };
            out.json("permutation.json", &value)?;
            if let Some(k) = cfg.numerics.initial_state {
                write_trajectory(&mut out, s, k, &opts)?;
            }
        }
        Experiment::Group => {
            let g = cfg.group.as_ref().expect("group resolved");
            let gens = g
                .generators
                .iter()
                .map(|c| Permutation::parse(c, g.degree))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let group = closure(&gens)?;
            let table = transfer_table(&gens)?;
            let mut v = json!({
                "generators": gens.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                "degree": g.degree,
                "order": group.order,
                "abelian": group.is_abelian,
                "all_even": group.all_even(),
                "transfer_table": table.cells,
            });
            if g.normal_subgroups {
                v["normal_subgroup_orders"] = json!(normal_subgroup_orders(&group)?);
            }
            out.json("group.json", &v)?;
        }
        Experiment::Sweep => {
            let sw = cfg.sweep.as_ref().expect("sweep resolved");
            let base = schedule();
            let rows: Vec<Result<(f64, Value), CliError>> = sw
                .values
                .par_iter()
                .map(|&v| {
                    let s = sweep_schedule(base, sw.parameter, v).map_err(CliError::Config)?;
                    let o = EvolveOptions { epsilon: if sw.parameter == SweepParameter::Epsilon { v } else { opts.epsilon }, ..opts };
                    let r = extract_permutation(&s, &o, cfg.numerics.threshold)?;
                    Ok((v, json!({"cycles": r.cycles, "min_fidelity": r.min_confidence(), "valid": r.valid})))
                })
                .collect();
            let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
            out.csv("sweep.csv", |w| {
                writeln!(w, "value,cycles,min_fidelity,valid")?;
                for (v, r) in &rows {
                    let cycles = r["cycles"].as_str().unwrap_or("");
                    let fid = r["min_fidelity"].as_f64().unwrap_or(f64::NAN);
                    writeln!(w, "{v:.16e},\"{cycles}\",{fid:.16e},{}", r["valid"])?;
                }
                Ok(())
            })?;
        }
        Experiment::Stiffness => {
            let st = cfg.stiffness.as_ref().expect("stiffness resolved");
            let ellipse = schedule();
            let options = StiffnessOptions {
                period: ellipse.period,
                steps: opts.steps,
                sample_stride: st.sample_stride,
                detrend_window: st.detrend_window,
                threshold: cfg.numerics.threshold,
            };
            let circle = ModulationSchedule { r_x: st.circle_radius, r_y: st.circle_radius, ..ellipse.clone() };
            circle.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let report = twisted_ep::dynamics::StiffnessReport {
                circle: loop_stiffness(&circle, &options)?,
                ellipse: loop_stiffness(ellipse, &options)?,
            };
            let mut v = serde_json::to_value(&report).map_err(json_err)?;
            v["states"] = json!(st.states);
            v["suppression_ratio"] = json!(report.suppression_ratio(&st.states));
            out.json("stiffness.json", &v)?;
        }
        Experiment::Dilate => {
            let d = cfg.dilate.as_ref().expect("dilate resolved");
            let sys = system();
            let mut points = Vec::new();
            for &(x, y) in &d.points {
                let p = field_point(sys, x, y)?;
                let r = build_dilation(sys, &p, d.scaling)?;
                points.push(json!({
                    "x": x, "y": y, "kappa": r.kappa, "trivial": r.trivial,
                    "hermiticity_residual": r.hermiticity_residual,
                }));
            }
            let mut v = json!({ "points": points });
            if let Some(dy) = &d.dynamics {
                let s = schedule();
                let k = cfg.numerics.initial_state.unwrap_or(1);
                let psi = initial_basis(s, 0.0)?.right_vectors[k - 1].clone();
                v["dynamics"] = serde_json::to_value(dilated_dynamics(s, &psi, dy.steps_per_period, dy.fraction)?)
                    .map_err(json_err)?;
            }
            if let Some(c) = &d.convergence {
                let m = metric_equation_convergence(schedule(), c.t, c.dt0, c.levels)?;
                let mut mv = serde_json::to_value(&m).map_err(json_err)?;
                mv["observed_orders"] = json!(m.observed_orders());
                v["metric_convergence"] = mv;
            }
            out.json("dilation.json", &v)?;
        }
        Experiment::Betadyne => {
            let b = cfg.betadyne.as_ref().expect("betadyne resolved");
            let sys = system();
            let mut points = Vec::new();
            for &(x, y) in &b.points {
                let p = field_point(sys, x, y)?;
                let params = map_to_betadyne(sys, &p, b.gamma)?;
                let eq = betadyne_equivalence(sys, &p, b.gamma)?;
                points.push(json!({
                    "x": x, "y": y,
                    "params": params,
                    "shift": [eq.shift.re, eq.shift.im],
                    "residual": eq.residual,
                }));
            }
            out.json("betadyne.json", &json!({ "gamma": b.gamma, "points": points }))?;
        }
    }

    let mut artifacts = out.written.clone();
    artifacts.push("manifest.json".into());
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "warnings": resolved.warnings,
        "artifacts": artifacts,
    });
    out.json("manifest.json", &manifest)?;
    Ok(out.written)
}

fn write_trajectory(out: &mut Artifacts, s: &ModulationSchedule, k: usize, opts: &EvolveOptions) -> Result<(), CliError> {
    let basis = initial_basis(s, opts.epsilon)?;
    let traj = evolve(s, &basis.right_vectors[k - 1], opts)?;
    out.csv("trajectory.csv", |w| traj.write_csv(w))
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Config(format!("cannot serialize result: {e}"))
}

/// Human-readable summary for `validate`.
pub fn describe(resolved: &Resolved) -> Vec<String> {
    let cfg = &resolved.config;
    let mut lines = vec![format!("experiment: {:?}", cfg.experiment).to_lowercase()];
    if let Some(sys) = &resolved.system {
        lines.push(format!("qubits: {} (dimension {})", sys.n_qubits, sys.dim()));
    }
    if let Some(s) = &resolved.schedule {
        let (x0, y0) = s.control(0.0);
        let (xm, ym) = s.control(0.5 * s.period);
        let (clearance, (cx, cy)) = s.ep_clearance();
        lines.push(format!("start: ({x0:.6}, {y0:.6})"));
        lines.push(format!("midpoint: ({xm:.6}, {ym:.6}) at t = {}", 0.5 * s.period));
        lines.push(format!("EP clearance: {clearance:.6} at ({cx:.6}, {cy:.6})"));
        lines.push(format!("direction: {}", i32::from(s.direction)));
        if !s.modulated.is_empty() {
            let pairs: Vec<String> = s.modulated.iter().map(|(k, l)| format!("J{k}{l}")).collect();
            lines.push(format!("modulated: {}", pairs.join(", ")));
        }
        lines.push(format!("steps: {} (dt = {:.6})", cfg.numerics.steps, s.period / cfg.numerics.steps as f64));
    }
    lines
}
