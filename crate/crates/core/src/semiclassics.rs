//! Quasiclassical coherent-state propagator
//! `P = [(g(τ)g(0))^{−1/2} ∂²Φ_c/∂z̄_F∂z_I]^{1/2} exp(Φ_c + (i/2)∫B)`,
//! its flat-space α-scheme variant and a probe of the Killing condition that
//! makes it exact.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::action::{
    boundary_mixed_stencil, mixed_second_derivative, refined_action, ActionBreakdown,
    FD_BOUNDARY_STEP, MAX_REFINEMENTS,
};
use crate::dynamics::{
    solve_bvp_shooting, solve_linear_flow, BoundaryData, ClassicalTrajectory, FlowField,
    SolverSettings,
};
use crate::error::{Error, Result};
use crate::geometry::{Kind, PhaseSpace, FD_STEP};
use crate::integrate::{integrate_interval, simpson_checked};
use crate::symbols::CompiledHamiltonian;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Threshold of the Killing-defect verdict.
pub const DH_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    #[serde(flatten)]
    pub solver: SolverSettings,
    /// Initial number of τ stages used to continue the square root from τ → 0.
    pub continuation_stages: usize,
    /// Grid doublings allowed when the quadrature is unresolved.
    pub max_refinements: usize,
    /// `|bracket|²` below which the prefactor is declared caustic.
    pub caustic_floor: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            solver: SolverSettings::default(),
            continuation_stages: 16,
            max_refinements: MAX_REFINEMENTS,
            caustic_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagatorResult {
    pub amplitude: Complex64,
    pub breakdown: ActionBreakdown,
    pub prefactor: Complex64,
    /// `prefactor · exp(i∫B/2)`.
    pub reduced: Complex64,
    pub mixed_derivative: Complex64,
    /// Quarter-turn index of the tracked prefactor relative to the principal
    /// fourth root of `bracket²`.
    pub branch: i64,
    pub diagnostics: BTreeMap<String, f64>,
}

fn solve_stage(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    solver: &SolverSettings,
    guess: Option<Complex64>,
) -> Result<ClassicalTrajectory> {
    if ham.spec().is_linear() {
        solve_linear_flow(ham, bd, solver)
    } else {
        solve_bvp_shooting(ham, bd, guess.unwrap_or(bd.zbar_final), solver)
    }
}

/// `bracket² = (∂²Φ_c)²/(g(τ)g(0))` together with the mixed derivative.
fn bracket_square(
    traj: &ClassicalTrajectory,
    geometry: &PhaseSpace,
) -> Result<(Complex64, Complex64)> {
    let n = traj.steps();
    let mixed = mixed_second_derivative(traj, geometry)?.value;
    let g_end = geometry.metric(traj.zbar_path[n], traj.z_path[n])?;
    let g_start = geometry.metric(traj.zbar_path[0], traj.z_path[0])?;
    Ok((mixed * mixed / (g_end * g_start), mixed))
}

/// The fourth root of `y` closest to `previous`, with its quarter-turn index.
fn nearest_fourth_root(y: Complex64, previous: Complex64) -> (Complex64, i64) {
    let principal = y.powf(0.25);
    (0..4)
        .map(|m| (principal * I.powi(m), m as i64))
        .min_by(|a, b| (a.0 - previous).norm().total_cmp(&(b.0 - previous).norm()))
        .expect("four candidates")
}

struct Continued {
    prefactor: Complex64,
    guess: Option<Complex64>,
    stages: usize,
}

/// One continuation pass; `None` when some step jumps too far.
fn continue_with(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &Settings,
    stages: usize,
) -> Result<Option<Continued>> {
    let mut p = ONE;
    let mut guess = None;
    for k in 1..=stages {
        let tau = bd.tau * k as f64 / stages as f64;
        let traj = solve_stage(ham, &bd.with_tau(tau)?, &settings.solver, guess)?;
        let (y, _) = bracket_square(&traj, ham.geometry())?;
        if y.norm().is_nan() || y.norm() <= settings.caustic_floor {
            return Err(Error::CausticPrefactor { tau });
        }
        let (root, _) = nearest_fourth_root(y, p);
        if (root - p).norm() > 0.5 * root.norm().max(p.norm()) {
            if stages >= 1024 {
                return Err(Error::CausticPrefactor { tau });
            }
            return Ok(None);
        }
        p = root;
        if !ham.spec().is_linear() {
            guess = Some(traj.zbar_start());
        }
    }
    Ok(Some(Continued {
        prefactor: p,
        guess,
        stages,
    }))
}

fn continue_prefactor(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &Settings,
) -> Result<Continued> {
    let mut stages = settings.continuation_stages.max(1);
    loop {
        match continue_with(ham, bd, settings, stages)? {
            Some(c) => return Ok(c),
            None => stages *= 4,
        }
    }
}

/// Solves at the full `τ`, doubling the grid until the quadrature resolves.
fn converged_action(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &Settings,
    guess: Option<Complex64>,
) -> Result<(ClassicalTrajectory, ActionBreakdown)> {
    refined_action(
        |s| solve_stage(ham, bd, s, guess),
        ham,
        bd,
        &settings.solver,
        settings.max_refinements,
    )
}

pub fn propagator_qc(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &Settings,
) -> Result<PropagatorResult> {
    bd.check_domain(ham.geometry())?;
    let continued = continue_prefactor(ham, bd, settings)?;
    let (traj, breakdown) = converged_action(ham, bd, settings, continued.guess)?;
    let (y, mixed) = bracket_square(&traj, ham.geometry())?;
    let (prefactor, branch) = nearest_fourth_root(y, continued.prefactor);
    let half_b = (0.5 * I * breakdown.b_int).exp();
    let amplitude = (breakdown.phi_c + 0.5 * I * breakdown.b_int).exp() * prefactor;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("residual".into(), traj.residual);
    diagnostics.insert("newton_iterations".into(), traj.newton_iterations as f64);
    diagnostics.insert("quadrature_error".into(), breakdown.quadrature_error);
    diagnostics.insert("steps".into(), traj.steps() as f64);
    diagnostics.insert("continuation_stages".into(), continued.stages as f64);
    Ok(PropagatorResult {
        amplitude,
        breakdown,
        prefactor,
        reduced: prefactor * half_b,
        mixed_derivative: mixed,
        branch,
        diagnostics,
    })
}

/// Flat-space α-scheme with the covariant equations of motion kept fixed:
/// `[γ⁻¹∂²Φ^(α)]^{1/2} exp(Φ^(α) + i(½ − α)∫B^(α))`, where
/// `Φ^(α) = Φ_c + iα∫ΔH` and `B^(α) = ΔH − αΔ²H`.
pub fn propagator_flat_alpha(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    alpha: f64,
    settings: &Settings,
) -> Result<PropagatorResult> {
    let geometry = *ham.geometry();
    if geometry.kind() != Kind::Plane {
        return Err(Error::NotFlat);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let gamma = geometry.weight();
    let base = propagator_qc(ham, bd, settings)?;
    let guess = Some(bd.zbar_final);

    let laplacian_integrals = |b: &BoundaryData| -> Result<(Complex64, Complex64)> {
        let (traj, _) = converged_action(ham, b, settings, guess)?;
        let h = b.tau / traj.steps() as f64;
        let mut lap = Vec::with_capacity(traj.grid.len());
        let mut lap2 = Vec::with_capacity(traj.grid.len());
        for k in 0..traj.grid.len() {
            let (zb, z, t) = (traj.zbar_path[k], traj.z_path[k], traj.grid[k]);
            lap.push(ham.laplacian(zb, z, t)?);
            let field = |a: Complex64, c: Complex64| {
                ham.laplacian(a, c, t)
                    .unwrap_or(Complex64::new(f64::NAN, f64::NAN))
            };
            lap2.push(geometry.mixed_derivative_fd(&field, zb, z, FD_STEP)? / gamma);
        }
        Ok((
            simpson_checked(&lap, h)?.value,
            simpson_checked(&lap2, h)?.value,
        ))
    };
    let (lap_int, lap2_int) = laplacian_integrals(bd)?;
    let lap_mixed = if alpha == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        boundary_mixed_stencil(|b| Ok(laplacian_integrals(b)?.0), bd, FD_BOUNDARY_STEP)?
    };

    let phi_alpha = base.breakdown.phi_c + I * alpha * lap_int;
    let b_alpha = lap_int - alpha * lap2_int;
    let bracket = (base.mixed_derivative + I * alpha * lap_mixed) / gamma;
    let root = bracket.sqrt();
    let reference = base.prefactor;
    let prefactor = if (root - reference).norm() <= (root + reference).norm() {
        root
    } else {
        -root
    };
    let exponent = phi_alpha + I * (0.5 - alpha) * b_alpha;
    let amplitude = exponent.exp() * prefactor;

    let mut breakdown = base.breakdown;
    breakdown.phi_c = phi_alpha;
    breakdown.s_dyn += I * alpha * lap_int;
    breakdown.b_int = b_alpha;
    let mut diagnostics = base.diagnostics;
    diagnostics.insert("alpha".into(), alpha);
    Ok(PropagatorResult {
        amplitude,
        breakdown,
        prefactor,
        reduced: prefactor * (I * (0.5 - alpha) * b_alpha).exp(),
        mixed_derivative: base.mixed_derivative + I * alpha * lap_mixed,
        branch: base.branch,
        diagnostics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DhVerdict {
    ExactExpected,
    ExactNotExpected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhReport {
    pub defect: f64,
    pub verdict: DhVerdict,
    pub samples: usize,
}

/// Sample points covering the physically relevant part of the chart.
pub fn default_probe_grid(geometry: &PhaseSpace) -> Vec<Complex64> {
    let radii: &[f64] = match geometry.kind() {
        Kind::Disk => &[0.0, 0.2, 0.4, 0.6, 0.8],
        _ => &[0.0, 0.3, 0.7, 1.0, 1.5],
    };
    let mut points = Vec::new();
    for &r in radii {
        let count = if r == 0.0 { 1 } else { 8 };
        for k in 0..count {
            points.push(Complex64::from_polar(
                r,
                2.0 * PI * k as f64 / count as f64 + 0.1,
            ));
        }
    }
    points
}

/// Checks `L_{X_H} g = 0` by transporting the metric along the real flow for
/// a short time `dt` starting at `t0`; the defect is the largest change of
/// the pulled-back metric divided by `g·dt`.
pub fn dh_exactness_probe(
    ham: &CompiledHamiltonian,
    grid: &[Complex64],
    t0: f64,
    dt: f64,
) -> Result<DhReport> {
    let geometry = ham.geometry();
    let flow = FlowField::new(ham, f64::INFINITY);
    let mut defect: f64 = 0.0;
    for &z0 in grid {
        // state (z, P = ∂φ/∂z, Q = ∂φ/∂z̄) on the diagonal z̄ = conj(z)
        let mut field = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
            let p = flow.evaluate(t, y[0].conj(), y[0])?;
            let (vz, vzb) = (p.jacobian[0][0], p.jacobian[0][1]);
            dy[0] = p.zdot;
            dy[1] = vz * y[1] + vzb * y[2].conj();
            dy[2] = vz * y[2] + vzb * y[1].conj();
            Ok(())
        };
        let y = integrate_interval(
            &mut field,
            t0,
            t0 + dt,
            &[z0, ONE, Complex64::new(0.0, 0.0)],
            1e-14,
        )?;
        let g0 = geometry.metric(z0.conj(), z0)?.re;
        let g1 = geometry.metric(y[0].conj(), y[0])?.re;
        let (p, q) = (y[1], y[2]);
        let d = (g1 * (p.norm_sqr() + q.norm_sqr()) - g0).abs() + 2.0 * (g1 * p * q.conj()).norm();
        defect = defect.max(d / (g0 * dt));
    }
    Ok(DhReport {
        defect,
        verdict: if defect <= DH_THRESHOLD {
            DhVerdict::ExactExpected
        } else {
            DhVerdict::ExactNotExpected
        },
        samples: grid.len(),
    })
}
