//! Machine-readable outputs: the sweep CSV, the convergence-report JSON,
//! and JSON dumps of joint states and measure ensembles.
//!
//! Numeric formatting uses Rust's shortest round-trip float representation,
//! so a (config, seed) pair reproduces byte-identical files on a platform —
//! except for the wall-clock column, which is honest timing data.

use crate::measure::{Atom, StateValuedMeasure};
use crate::micro::{JointState, SpinBosonModel};
use serde_json::{json, Value};

use super::sweep::{ConvergenceReport, SweepRow};
use super::Result;

/// Fixed column order of the sweep CSV.
pub const CSV_HEADER: &str = "epsilon,t,trace_distance,fourier_gap_max,number_moment_delta1,duhamel_residual,transport_residual,tail_mass,wall_ms";

/// Render sweep rows as CSV with the fixed column order.
pub fn write_csv(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.epsilon,
            r.t,
            r.trace_distance,
            r.fourier_gap_max,
            r.number_moment_delta1,
            r.duhamel_residual,
            r.transport_residual,
            r.tail_mass,
            r.wall_ms
        ));
    }
    out
}

fn complex_pair(x: num_complex::Complex64) -> Value {
    json!([x.re, x.im])
}

fn matrix_rows(m: &crate::linalg::CMatrix) -> Value {
    let rows: Vec<Value> = (0..m.nrows())
        .map(|i| Value::Array((0..m.ncols()).map(|j| complex_pair(m[(i, j)])).collect()))
        .collect();
    Value::Array(rows)
}

/// JSON dump of a joint state: dimensions, ε, time, and the density matrix
/// as row-major `[re, im]` pairs.
pub fn state_json(model: &SpinBosonModel, state: &JointState) -> Value {
    let dim = state.rho.nrows();
    let mut entries = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            entries.push(complex_pair(state.rho[(i, j)]));
        }
    }
    json!({
        "d_spin": model.d_spin(),
        "d_boson": model.d_boson(),
        "cutoffs": model.fock().cutoffs(),
        "epsilon": state.epsilon,
        "time": state.time,
        "rho": entries,
    })
}

/// JSON dump of an atomic ensemble: list of {weight, z, gamma}.
pub fn ensemble_json(measure: &StateValuedMeasure) -> Value {
    let atoms: Vec<Value> = measure
        .atoms()
        .iter()
        .map(|a| {
            json!({
                "weight": a.weight,
                "z": Value::Array(a.z.iter().map(|x| complex_pair(*x)).collect()),
                "gamma": matrix_rows(&a.gamma),
            })
        })
        .collect();
    Value::Array(atoms)
}

/// Parse an ensemble back from [`ensemble_json`] output.
pub fn ensemble_from_json(value: &Value) -> Result<StateValuedMeasure> {
    use super::HarnessError;
    let arr = value
        .as_array()
        .ok_or_else(|| HarnessError::Config("ensemble JSON: expected array".into()))?;
    let mut atoms = Vec::with_capacity(arr.len());
    for (i, item) in arr.iter().enumerate() {
        let weight = item["weight"]
            .as_f64()
            .ok_or_else(|| HarnessError::Config(format!("atom {i}: missing weight")))?;
        let z_arr = item["z"]
            .as_array()
            .ok_or_else(|| HarnessError::Config(format!("atom {i}: missing z")))?;
        let z = crate::fock::ModeVector::from_fn(z_arr.len(), |j, _| {
            let p = z_arr[j].as_array().expect("pair");
            num_complex::Complex64::new(p[0].as_f64().unwrap_or(0.0), p[1].as_f64().unwrap_or(0.0))
        });
        let g_rows = item["gamma"]
            .as_array()
            .ok_or_else(|| HarnessError::Config(format!("atom {i}: missing gamma")))?;
        let d = g_rows.len();
        let gamma = crate::linalg::CMatrix::from_fn(d, d, |r, c| {
            let p = g_rows[r].as_array().expect("row")[c].as_array().expect("pair");
            num_complex::Complex64::new(p[0].as_f64().unwrap_or(0.0), p[1].as_f64().unwrap_or(0.0))
        });
        atoms.push(Atom { weight, z, gamma });
    }
    Ok(StateValuedMeasure::new(atoms, false)?)
}

/// Full convergence report as JSON: rows, per-t convergence fits, moment
/// tracking, and trust flags.
pub fn report_json(report: &ConvergenceReport) -> Value {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "epsilon": r.epsilon,
                "t": r.t,
                "trace_distance": r.trace_distance,
                "fourier_gap_max": r.fourier_gap_max,
                "number_moment_delta1": r.number_moment_delta1,
                "number_moment_half": r.number_moment_half,
                "duhamel_residual": r.duhamel_residual,
                "transport_residual": r.transport_residual,
                "tail_mass": r.tail_mass,
                "tail_untrusted": r.tail_untrusted,
                "wall_ms": r.wall_ms,
            })
        })
        .collect();
    let fits: Vec<Value> = report
        .fits
        .iter()
        .map(|f| {
            json!({
                "t": f.t,
                "order": f.order,
                "fit_residual": f.fit_residual,
                "monotone": f.monotone,
            })
        })
        .collect();
    json!({
        "regime": report.regime,
        "seed": report.seed,
        "rows": rows,
        "fits": fits,
        "moment_half_max_ratio": report.moment_half_max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{Dispersion, FockSpace, ModeVector};
    use crate::linalg::{kron, CMatrix, C64};
    use crate::micro::{NuRegime, SpinBosonModel};

    #[test]
    fn csv_has_fixed_header_and_one_line_per_row() {
        let rows = vec![SweepRow {
            epsilon: 0.25,
            t: 0.5,
            trace_distance: 0.125,
            fourier_gap_max: 0.2,
            number_moment_delta1: 2.0,
            number_moment_half: 1.4,
            duhamel_residual: 1e-8,
            transport_residual: 2e-8,
            tail_mass: 1e-12,
            tail_untrusted: false,
            wall_ms: 17,
        }];
        let csv = write_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("0.25,0.5,0.125,0.2,2,"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn ensemble_round_trips_through_json() {
        let c = C64::new;
        let m = StateValuedMeasure::new(
            vec![Atom {
                weight: 0.5,
                z: ModeVector::from_row_slice(&[c(0.3, -0.4)]),
                gamma: CMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0.5, 0.), c(0., 0.25), c(0., -0.25), c(0.5, 0.)],
                ),
            }],
            false,
        )
        .unwrap();
        let v = ensemble_json(&m);
        let back = ensemble_from_json(&v).unwrap();
        assert_eq!(back.atoms().len(), 1);
        assert_eq!(back.atoms()[0].weight, 0.5);
        assert_eq!(back.atoms()[0].z[0], c(0.3, -0.4));
        assert_eq!(back.atoms()[0].gamma[(0, 1)], c(0.0, 0.25));
    }

    #[test]
    fn state_json_shape() {
        let c = C64::new;
        let fock = FockSpace::new(vec![2], 0.5).unwrap();
        let model = SpinBosonModel::new(
            CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
            CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
            Dispersion::new(vec![1.0]).unwrap(),
            ModeVector::from_element(1, c(1., 0.)),
            NuRegime::Stationary,
            fock,
        )
        .unwrap();
        let psi = model
            .fock()
            .coherent_state(&ModeVector::from_element(1, c(0., 0.)))
            .unwrap();
        let gamma = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
        let state = crate::micro::JointState {
            rho: kron(&gamma, &psi).unwrap(),
            epsilon: 0.5,
            time: 0.0,
        };
        let v = state_json(&model, &state);
        assert_eq!(v["d_spin"], 2);
        assert_eq!(v["d_boson"], 3);
        assert_eq!(v["epsilon"], 0.5);
        let entries = v["rho"].as_array().unwrap();
        assert_eq!(entries.len(), 36);
        // row-major: entry (0,0) is the vacuum population 1.0
        assert_eq!(entries[0][0], 1.0);
    }
}
