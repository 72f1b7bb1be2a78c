//! Structured invariant suites: CCR, Weyl relation, unitarity, mass
//! conservation, Duhamel and transport residuals, plus negative controls.
//! Failures are report entries, never errors — the caller decides what a
//! red entry means.

use crate::fock::ModeVector;
use crate::linalg::{max_abs, unitarity_deviation, CMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::config::ExperimentConfig;
use super::sweep::{fit_order, prepare_branches};
use super::Result;

#[derive(Debug, Clone)]
pub struct InvariantEntry {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct InvariantReport {
    pub entries: Vec<InvariantEntry>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "all_passed": self.all_passed(),
            "entries": self.entries.iter().map(|e| serde_json::json!({
                "name": e.name,
                "passed": e.passed,
                "detail": e.detail,
            })).collect::<Vec<_>>(),
        })
    }
}

fn format_residuals(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn entry(entries: &mut Vec<InvariantEntry>, name: &str, passed: bool, detail: String) {
    entries.push(InvariantEntry {
        name: name.to_string(),
        passed,
        detail,
    });
}

fn random_mode_vector(rng: &mut ChaCha12Rng, modes: usize, scale: f64) -> ModeVector {
    ModeVector::from_fn(modes, |_, _| {
        C64::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    })
}

/// Run every suite against a configuration. Uses the largest ε of the grid
/// (smallest spaces) so the whole ledger completes in seconds.
pub fn check_invariants(config: &ExperimentConfig, seed: u64) -> Result<InvariantReport> {
    let mut entries = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x1357_9bdf);
    let measure0 = config.initial_measure(seed)?;
    let model = config.micro_model(&measure0, 0)?;
    let effective = config.effective_model()?;
    let fock = model.fock();
    let t_max = config.max_time().max(0.5);
    let g_is_zero = config.g.norm() == 0.0;

    // --- CCR on the truncation-safe sub-block ---
    {
        let f = random_mode_vector(&mut rng, config.modes(), 1.0);
        let g = random_mode_vector(&mut rng, config.modes(), 1.0);
        let dev = fock.ccr_deviation(&f, &g)?;
        entry(
            &mut entries,
            "ccr",
            dev <= 1e-10,
            format!("max |[a(f), a*(g)] - eps<f,g>| = {dev:.3e} (bound 1e-10)"),
        );
    }

    // --- Weyl relation on low-occupation columns ---
    {
        let eta1 = random_mode_vector(&mut rng, config.modes(), 0.7);
        let eta2 = random_mode_vector(&mut rng, config.modes(), 0.7);
        let w1 = fock.weyl_op(&eta1)?;
        let w2 = fock.weyl_op(&eta2)?;
        let mut sum = eta1.clone();
        sum += &eta2;
        let w12 = fock.weyl_op(&sum)?;
        let phase = C64::new(0.0, -fock.epsilon() * crate::fock::FockSpace::inner(&eta1, &eta2).im)
            .exp();
        let product = &w1 * &w2;
        let target = w12.map(|x| x * phase);
        let margin = fock.cutoffs().iter().cloned().min().unwrap_or(0) / 2;
        let low = fock.safe_indices(margin);
        let mut dev: f64 = 0.0;
        for &col in &low {
            for row in 0..product.nrows() {
                dev = dev.max((product[(row, col)] - target[(row, col)]).norm());
            }
        }
        entry(
            &mut entries,
            "weyl_relation",
            dev <= 1e-6,
            format!(
                "low-occupation column deviation = {dev:.3e} over {} columns (bound 1e-6)",
                low.len()
            ),
        );
    }

    // --- Unitarity of both propagators ---
    {
        let micro_u = model.evolve(
            &super::sweep::prepare_microscopic(&model, &measure0)?,
            0.0,
        )?;
        // identity evolution must leave the state untouched
        let idem = max_abs(&(micro_u.rho.clone()
            - super::sweep::prepare_microscopic(&model, &measure0)?.rho));
        let z = &measure0.atoms()[0].z;
        let prop = effective.propagate_default(z, 0.0, t_max)?;
        let eff_dev = unitarity_deviation(&prop.u);
        let passed = eff_dev <= 1e-9 && idem <= 1e-12;
        entry(
            &mut entries,
            "unitarity",
            passed,
            format!("effective U deviation = {eff_dev:.3e} (bound 1e-9), t=0 idempotence = {idem:.3e}"),
        );
    }

    // --- Mass conservation under the effective flow ---
    {
        let before = measure0.total_mass();
        let after = effective
            .evolve_measure(&measure0, t_max, config.effective_steps)?
            .total_mass();
        let drift = (after - before).abs();
        entry(
            &mut entries,
            "mass_conservation",
            drift <= 1e-12 * (1.0 + before),
            format!("|mass(t) - mass(0)| = {drift:.3e} (machine precision bound)"),
        );
    }

    // --- Duhamel residual: small, and second order in the grid ---
    {
        let branches = prepare_branches(&model, &measure0)?;
        let t = t_max.min(1.0);
        let test_op = CMatrix::identity(model.d_spin(), model.d_spin());
        let grids = [32usize, 64, 128];
        let mut pairs = Vec::new();
        let mut residuals = Vec::new();
        for &n in &grids {
            let r = model.duhamel_residual_pure(
                &branches,
                0.0,
                t,
                n,
                &config.duhamel_eta,
                &test_op,
            )?;
            residuals.push(r);
            pairs.push((1.0 / n as f64, r));
        }
        let floor = residuals.iter().all(|r| *r < 1e-12);
        let passed = if floor {
            true
        } else {
            match fit_order(&pairs) {
                Ok((order, _)) => order >= 1.8,
                Err(_) => false,
            }
        };
        let shown = format_residuals(&residuals);
        let detail = if floor {
            format!("residuals at numerical floor: {shown}")
        } else {
            let (order, _) = fit_order(&pairs).unwrap_or((f64::NAN, 0.0));
            format!("residuals {shown} over grids {grids:?}, fitted order {order:.3}")
        };
        entry(&mut entries, "duhamel_residual", passed, detail);
    }

    // --- Transport residual: second order in the grid ---
    {
        let t = t_max.min(1.0);
        let grids = [32usize, 64, 128];
        let mut pairs = Vec::new();
        let mut residuals = Vec::new();
        for &n in &grids {
            let family = effective.interaction_family(&measure0, 0.0, t, n, 1)?;
            let r = effective.transport_residual(&family, &config.duhamel_eta, 0.0, t)?;
            residuals.push(r);
            pairs.push((1.0 / n as f64, r));
        }
        let floor = residuals.iter().all(|r| *r < 1e-12);
        let passed = if floor {
            true
        } else {
            match fit_order(&pairs) {
                Ok((order, _)) => order >= 1.8,
                Err(_) => false,
            }
        };
        let shown = format_residuals(&residuals);
        let detail = if floor {
            format!("residuals at numerical floor: {shown}")
        } else {
            let (order, _) = fit_order(&pairs).unwrap_or((f64::NAN, 0.0));
            format!("residuals {shown} over grids {grids:?}, fitted order {order:.3}")
        };
        entry(&mut entries, "transport_residual", passed, detail);

        // negative control: a mis-signed classical field must break the
        // identity by orders of magnitude
        if g_is_zero {
            entry(
                &mut entries,
                "transport_negative_control",
                true,
                "skipped: g = 0 makes the control vacuous".to_string(),
            );
        } else {
            let family = effective.interaction_family(&measure0, 0.0, t, 128, 1)?;
            let honest =
                effective.transport_residual(&family, &config.duhamel_eta, 0.0, t)?;
            let flipped = effective.transport_residual_hooked(
                &family,
                &config.duhamel_eta,
                0.0,
                t,
                true,
            )?;
            entry(
                &mut entries,
                "transport_negative_control",
                flipped > 100.0 * honest.max(1e-14),
                format!("flipped-alpha residual {flipped:.3e} vs honest {honest:.3e}"),
            );
        }
    }

    // --- g = 0 control: both residuals collapse to zero ---
    {
        let mut zero_cfg = config.clone();
        zero_cfg.g = ModeVector::zeros(config.modes());
        let zero_model = zero_cfg.micro_model(&measure0, 0)?;
        let zero_eff = zero_cfg.effective_model()?;
        let branches = prepare_branches(&zero_model, &measure0)?;
        let t = t_max.min(1.0);
        let test_op = CMatrix::identity(zero_model.d_spin(), zero_model.d_spin());
        let duhamel = zero_model.duhamel_residual_pure(
            &branches,
            0.0,
            t,
            32,
            &config.duhamel_eta,
            &test_op,
        )?;
        let family = zero_eff.interaction_family(&measure0, 0.0, t, 32, 1)?;
        let transport =
            zero_eff.transport_residual(&family, &config.duhamel_eta, 0.0, t)?;
        entry(
            &mut entries,
            "g_zero_residuals",
            duhamel <= 1e-10 && transport <= 1e-10,
            format!("duhamel {duhamel:.3e}, transport {transport:.3e} (bounds 1e-10)"),
        );
    }

    Ok(InvariantReport { entries })
}
