//! Browser bindings. Each export takes plain numbers or strings and returns a
//! JSON string; the `*_json` functions hold the logic and run natively too.

use serde_json::{json, Value};
use twisted_ep::dynamics::{evolve, initial_basis, Direction, EvolveOptions, ModulationSchedule, PermutationOutcome};
use twisted_ep::permutation::{closure, transfer_table, Permutation};
use twisted_ep::spectral::{linspace, sheet_energies};
use twisted_ep::SystemConfig;
use wasm_bindgen::prelude::*;

fn system(field_scales: &[f64], coupling: f64) -> Result<SystemConfig, String> {
    SystemConfig::uniform(field_scales.to_vec(), coupling).map_err(|e| e.to_string())
}

/// Sorted energies along x at fixed y. Masked points become null.
pub fn sheet_slice_json(field_scales: &[f64], coupling: f64, y: f64, x_min: f64, x_max: f64, n: usize) -> Result<String, String> {
    let cfg = system(field_scales, coupling)?;
    if !(2..=10_000).contains(&n) {
        return Err("samples must lie in 2..=10000".into());
    }
    let xs = linspace(x_min, x_max, n);
    let energies: Vec<Option<Vec<f64>>> = xs.iter().map(|&x| sheet_energies(&cfg, x, y, 1.0)).collect();
    Ok(json!({ "x": xs, "sheets": cfg.dim(), "energies": energies }).to_string())
}

/// Parses "13,23" into [(1,3),(2,3)].
fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            let d: Vec<usize> = s.chars().filter_map(|c| c.to_digit(10)).map(|d| d as usize).collect();
            match d.as_slice() {
                [k, l] if k < l => Ok((*k, *l)),
                _ => Err(format!("cannot read qubit pair {s:?}; write pairs like 13,23")),
            }
        })
        .collect()
}

/// Winds every eigenstate once around the loop; returns fidelity traces
/// (traces[k][i][j] = |⟨ψ_j|ψ(t_i)⟩|² from ψ_k) and the permutation.
#[allow(clippy::too_many_arguments)]
pub fn loop_traces_json(
    field_scales: &[f64],
    coupling: f64,
    r_x: f64,
    r_y: f64,
    period: f64,
    modulated: &str,
    steps: usize,
    clockwise: bool,
) -> Result<String, String> {
    let cfg = system(field_scales, coupling)?;
    let direction = if clockwise { Direction::Clockwise } else { Direction::CounterClockwise };
    let s = ModulationSchedule::new(cfg, r_x, r_y, period, std::f64::consts::PI, direction, parse_pairs(modulated)?)
        .map_err(|e| e.to_string())?;
    let opts = EvolveOptions { samples: 201, ..EvolveOptions::with_steps(steps.max(100)) };
    let basis = initial_basis(&s, 0.0).map_err(|e| e.to_string())?;
    let mut times = Vec::new();
    let mut traces = Vec::new();
    let mut finals = Vec::new();
    for v in &basis.right_vectors {
        let traj = evolve(&s, v, &opts).map_err(|e| e.to_string())?;
        finals.push(traj.final_fidelities().to_vec());
        times = traj.times;
        traces.push(traj.fidelities);
    }
    let outcome = PermutationOutcome::from_fidelities(finals, 0.9);
    Ok(json!({
        "times": times,
        "traces": traces,
        "cycles": outcome.cycles,
        "mapping": outcome.mapping,
        "min_fidelity": outcome.min_confidence(),
        "valid": outcome.valid,
    })
    .to_string())
}

/// Closure of the generators given one per line in cycle notation.
pub fn group_json(generators: &str, degree: usize) -> Result<String, String> {
    let gens = generators
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| Permutation::parse(l, degree))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let group = closure(&gens).map_err(|e| e.to_string())?;
    let table = transfer_table(&gens).map_err(|e| e.to_string())?;
    let parity = if group.all_even() { "even" } else { "mixed" };
    let v: Value = json!({
        "order": group.order,
        "abelian": group.is_abelian,
        "parity": parity,
        "transfer_table": table.cells,
    });
    Ok(v.to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sheet_slice(field_scales: Vec<f64>, coupling: f64, y: f64, x_min: f64, x_max: f64, n: usize) -> Result<String, JsValue> {
    to_js(sheet_slice_json(&field_scales, coupling, y, x_min, x_max, n))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn loop_traces(
    field_scales: Vec<f64>,
    coupling: f64,
    r_x: f64,
    r_y: f64,
    period: f64,
    modulated: &str,
    steps: usize,
    clockwise: bool,
) -> Result<String, JsValue> {
    to_js(loop_traces_json(&field_scales, coupling, r_x, r_y, period, modulated, steps, clockwise))
}

#[wasm_bindgen]
pub fn group_summary(generators: &str, degree: usize) -> Result<String, JsValue> {
    to_js(group_json(generators, degree))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_parse() {
        assert_eq!(parse_pairs("13, 23").unwrap(), vec![(1, 3), (2, 3)]);
        assert_eq!(parse_pairs("").unwrap(), vec![]);
        assert!(parse_pairs("31").is_err());
    }
}
