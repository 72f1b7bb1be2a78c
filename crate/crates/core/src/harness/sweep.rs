//! The ε-sweep: run microscopic and effective dynamics side by side over a
//! grid of (ε, t) cells and record the distance metrics, residual
//! certificates, and moment diagnostics that quantify convergence.

use crate::effective::EffectiveModel;
use crate::fock::ModeVector;
use crate::linalg::{herm_eig, kron, nuclear_norm, trace_distance, CMatrix, CVector};
use crate::measure::StateValuedMeasure;
use crate::micro::{JointState, PureBranches, SpinBosonModel};
use std::time::Instant;

use super::config::ExperimentConfig;
use super::{HarnessError, Result};

/// One (ε, t) cell of the sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub epsilon: f64,
    pub t: f64,
    /// Trace distance between the reduced microscopic state and the
    /// barycenter of the evolved measure.
    pub trace_distance: f64,
    /// max over the η-grid of ‖Γ̂_ε(t)(η) − 𝔪̂_t(η)‖₁.
    pub fourier_gap_max: f64,
    pub number_moment_delta1: f64,
    pub number_moment_half: f64,
    pub duhamel_residual: f64,
    pub transport_residual: f64,
    /// Coherent occupation tail mass outside the truncation at this ε.
    pub tail_mass: f64,
    /// Set when tail_mass > 0.1 · trace_distance: the metric is then
    /// dominated by truncation error, not by the quantity it measures.
    pub tail_untrusted: bool,
    pub wall_ms: u64,
}

/// Fitted ε-convergence order of the trace distance at one t.
#[derive(Debug, Clone)]
pub struct OrderFit {
    pub t: f64,
    pub order: f64,
    pub fit_residual: f64,
    /// Whether D(ε,t) strictly decreases along the descending ε-grid.
    pub monotone: bool,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub regime: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    pub fits: Vec<OrderFit>,
    /// max over cells of max(r, 1/r) where r = moment_half(t)/moment_half(0).
    pub moment_half_max_ratio: f64,
}

/// Least-squares slope of log(error) against log(ε), with the RMS residual
/// of the fit. Needs at least 3 pairs with positive entries.
pub fn fit_order(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 3 {
        return Err(HarnessError::Config(format!(
            "fit_order needs at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    for (eps, err) in pairs {
        if !(*eps > 0.0 && eps.is_finite() && *err > 0.0 && err.is_finite()) {
            return Err(HarnessError::Config(format!(
                "fit_order needs positive finite pairs, got ({eps}, {err})"
            )));
        }
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|(_, r)| r.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum();
    Ok((slope, (ss / n).sqrt()))
}

/// Pure-branch preparation of the microscopic initial state: each atom's
/// spin block is eigendecomposed, and every eigenvector χ (weight w·λ) is
/// tensored with the coherent vector at the atom's point.
pub fn prepare_branches(
    model: &SpinBosonModel,
    measure: &StateValuedMeasure,
) -> Result<PureBranches> {
    let (ds, db) = (model.d_spin(), model.d_boson());
    let mut branches = Vec::new();
    for atom in measure.atoms() {
        let psi = model.fock().coherent_vector(&atom.z)?;
        let eig = herm_eig(&atom.gamma)?;
        for k in 0..ds {
            let lambda = eig.eigenvalues[k];
            if lambda <= 1e-12 {
                continue;
            }
            let chi = eig.eigenvectors.column(k);
            let mut joint = CVector::zeros(ds * db);
            for i in 0..ds {
                for b in 0..db {
                    joint[i * db + b] = chi[i] * psi[b];
                }
            }
            branches.push((atom.weight * lambda, joint));
        }
    }
    Ok(PureBranches {
        branches,
        time: 0.0,
    })
}

/// Density-matrix preparation Σᵢ wᵢ·γᵢ ⊗ |coherent zᵢ⟩⟨coherent zᵢ|.
pub fn prepare_microscopic(
    model: &SpinBosonModel,
    measure: &StateValuedMeasure,
) -> Result<JointState> {
    let dim = model.joint_dim();
    let mut rho = CMatrix::zeros(dim, dim);
    for atom in measure.atoms() {
        let block = model.fock().coherent_state(&atom.z)?;
        rho += kron(&atom.gamma, &block)?.map(|x| x * atom.weight);
    }
    Ok(JointState {
        rho,
        epsilon: model.epsilon(),
        time: 0.0,
    })
}

/// Residual quadrature intervals for horizon t: at least the configured
/// count, scaled linearly beyond t = 1 so Δτ never grows with t.
fn residual_intervals(base: usize, t: f64) -> usize {
    ((base as f64 * t).ceil() as usize).max(base)
}

struct CellMetrics {
    rows: Vec<SweepRow>,
    moment_half_t0: f64,
}

fn run_epsilon_cell(
    config: &ExperimentConfig,
    effective: &EffectiveModel,
    measure0: &StateValuedMeasure,
    eta_grid: &[ModeVector],
    idx: usize,
) -> Result<CellMetrics> {
    let eps = config.epsilon_grid[idx];
    let model = config.micro_model(measure0, idx)?;
    let branches0 = prepare_branches(&model, measure0)?;
    let mut tail: f64 = 0.0;
    for atom in measure0.atoms() {
        tail = tail.max(model.fock().coherent_tail(&atom.z)?);
    }
    let weyls: Vec<CMatrix> = eta_grid
        .iter()
        .map(|eta| model.fock().weyl_op(eta))
        .collect::<std::result::Result<_, _>>()?;
    let test_op = CMatrix::identity(model.d_spin(), model.d_spin());
    let moment_half_t0 = model.number_moment_branches(&branches0.branches, 0.5)?;

    let mut rows = Vec::with_capacity(config.time_grid.len());
    for &t in &config.time_grid {
        let clock = Instant::now();
        let branches_t: Vec<(f64, CVector)> = branches0
            .branches
            .iter()
            .map(|(w, v)| Ok((*w, model.evolve_vector(v, t)?)))
            .collect::<Result<_>>()?;
        let reduced = model.reduced_from_branches(&branches_t)?;
        let m_t = effective.evolve_measure(measure0, t, config.effective_steps)?;
        let d = trace_distance(&reduced, &m_t.barycenter())?;
        let mut fourier_gap: f64 = 0.0;
        for (eta, w) in eta_grid.iter().zip(&weyls) {
            let micro_side = model.fourier_from_branches(&branches_t, w)?;
            let measure_side = m_t.fourier(eta)?;
            fourier_gap = fourier_gap.max(nuclear_norm(&(micro_side - measure_side)));
        }
        let m1 = model.number_moment_branches(&branches_t, 1.0)?;
        let m_half = model.number_moment_branches(&branches_t, 0.5)?;
        let n_res = residual_intervals(config.residual_steps, t);
        let duhamel = model.duhamel_residual_pure(
            &branches0,
            0.0,
            t,
            n_res,
            &config.duhamel_eta,
            &test_op,
        )?;
        let family = effective.interaction_family(measure0, 0.0, t, n_res, 1)?;
        let transport =
            effective.transport_residual(&family, &config.duhamel_eta, 0.0, t)?;
        let wall_ms = clock.elapsed().as_millis() as u64;
        rows.push(SweepRow {
            epsilon: eps,
            t,
            trace_distance: d,
            fourier_gap_max: fourier_gap,
            number_moment_delta1: m1,
            number_moment_half: m_half,
            duhamel_residual: duhamel,
            transport_residual: transport,
            tail_mass: tail,
            tail_untrusted: tail > 0.1 * d,
            wall_ms,
        });
    }
    Ok(CellMetrics {
        rows,
        moment_half_t0,
    })
}

/// Run the full sweep for a configuration. Cells are evaluated per ε (in
/// parallel when the `parallel` feature is active) and assembled in grid
/// order, so the report layout is deterministic.
pub fn run_sweep(config: &ExperimentConfig, seed: u64) -> Result<ConvergenceReport> {
    let measure0 = config.initial_measure(seed)?;
    let effective = config.effective_model()?;
    let eta_grid = config.eta_grid();

    let indices: Vec<usize> = (0..config.epsilon_grid.len()).collect();
    #[cfg(feature = "parallel")]
    let cells: Vec<Result<CellMetrics>> = {
        use rayon::prelude::*;
        indices
            .par_iter()
            .map(|&idx| run_epsilon_cell(config, &effective, &measure0, &eta_grid, idx))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cells: Vec<Result<CellMetrics>> = indices
        .iter()
        .map(|&idx| run_epsilon_cell(config, &effective, &measure0, &eta_grid, idx))
        .collect();

    let mut rows = Vec::new();
    let mut moment_ratio: f64 = 1.0;
    let mut per_eps: Vec<CellMetrics> = Vec::with_capacity(cells.len());
    for (idx, cell) in cells.into_iter().enumerate() {
        let cell = cell.map_err(|e| {
            HarnessError::Config(format!(
                "sweep cell at epsilon = {} failed: {e}",
                config.epsilon_grid[idx]
            ))
        })?;
        per_eps.push(cell);
    }
    for cell in &per_eps {
        for row in &cell.rows {
            let r = row.number_moment_half / cell.moment_half_t0;
            moment_ratio = moment_ratio.max(r.max(1.0 / r));
            rows.push(row.clone());
        }
    }

    let mut fits = Vec::new();
    if config.epsilon_grid.len() >= 3 {
        for (ti, &t) in config.time_grid.iter().enumerate() {
            let pairs: Vec<(f64, f64)> = per_eps
                .iter()
                .enumerate()
                .map(|(ei, cell)| (config.epsilon_grid[ei], cell.rows[ti].trace_distance))
                .collect();
            let monotone = pairs.windows(2).all(|w| w[1].1 < w[0].1);
            if let Ok((order, fit_residual)) = fit_order(&pairs) {
                fits.push(OrderFit {
                    t,
                    order,
                    fit_residual,
                    monotone,
                });
            }
        }
    }

    Ok(ConvergenceReport {
        regime: config.regime.name().to_string(),
        seed,
        rows,
        fits,
        moment_half_max_ratio: moment_ratio,
    })
}
