//! Scalar functionals of a classical trajectory: the action with its boundary
//! term, the integrated `B` coefficient and the mixed second derivative.

use std::cell::RefCell;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    solve_trajectory, BoundaryData, ClassicalTrajectory, FlowField, SolverSettings,
};
use crate::error::{Error, Result};
use crate::geometry::{derivative_stencil, LogTracker, PhaseSpace};
use crate::integrate::simpson_checked;
use crate::symbols::CompiledHamiltonian;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Step of the finite-difference stencils applied to full boundary-value
/// solves.
pub const FD_BOUNDARY_STEP: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBreakdown {
    pub s_kin: Complex64,
    pub s_dyn: Complex64,
    pub gamma: Complex64,
    pub phi_c: Complex64,
    pub b_int: Complex64,
    /// Net `2π` corrections applied to the tracked logarithms.
    pub winding: i64,
    /// Largest quadrature error estimate among the integrals.
    pub quadrature_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedMethod {
    Sensitivities,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedDerivative {
    pub value: Complex64,
    pub method: MixedMethod,
}

fn grid_step(traj: &ClassicalTrajectory) -> f64 {
    traj.tau() / traj.steps() as f64
}

/// `F(z̄_F, z(τ))` and `F(z̄(0), z_I)` continued along the path from the
/// common value `F(z̄_F, z_I)`, plus the accumulated winding.
fn tracked_boundary_potentials(
    traj: &ClassicalTrajectory,
    geometry: &PhaseSpace,
    bd: &BoundaryData,
) -> Result<(Complex64, Complex64, i64)> {
    let zbar_f = bd.zbar_final;
    let z_i = bd.z_initial;
    let anchor = match geometry.log_argument(zbar_f, z_i) {
        None => {
            let f_end = geometry.kahler_potential(zbar_f, traj.z_end())?;
            let f_start = geometry.kahler_potential(traj.zbar_start(), z_i)?;
            return Ok((f_end, f_start, 0));
        }
        Some(u) => u,
    };
    let branch = |u: Complex64| {
        if u.norm() <= 1e-300 {
            Err(Error::BranchPoint {
                zbar: zbar_f,
                z: z_i,
            })
        } else {
            Ok(u)
        }
    };
    let mut forward = LogTracker::new(branch(anchor)?);
    for z in &traj.z_path {
        let u = geometry.log_argument(zbar_f, *z).expect("curved chart");
        forward.advance(branch(u)?);
    }
    let mut backward = LogTracker::new(anchor);
    for zb in traj.zbar_path.iter().rev() {
        let u = geometry.log_argument(*zb, z_i).expect("curved chart");
        backward.advance(branch(u)?);
    }
    Ok((
        geometry.potential_from_log(forward.value()),
        geometry.potential_from_log(backward.value()),
        forward.winding() + backward.winding(),
    ))
}

/// `½[F(z̄_F,z_F) + F(z̄_I,z_I)]`, real by construction.
fn diagonal_potentials(geometry: &PhaseSpace, bd: &BoundaryData) -> Result<Complex64> {
    let f_ff = geometry.kahler_potential(bd.zbar_final, bd.z_final())?;
    let f_ii = geometry.kahler_potential(bd.zbar_initial(), bd.z_initial)?;
    Ok(0.5 * (f_ff + f_ii))
}

/// `Φ_c = S_kin + S_dyn + Γ` and `∫B`, by Simpson quadrature on the
/// trajectory grid.
pub fn total_action(
    traj: &ClassicalTrajectory,
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
) -> Result<ActionBreakdown> {
    let geometry = ham.geometry();
    let flow = FlowField::new(ham, f64::INFINITY);
    let n = traj.steps();
    let mut kin = Vec::with_capacity(n + 1);
    let mut dynamic = Vec::with_capacity(n + 1);
    let mut b = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (zb, z, t) = (traj.zbar_path[k], traj.z_path[k], traj.grid[k]);
        let (fz, fzb) = geometry.potential_gradient(zb, z)?;
        kin.push(-0.5 * (traj.zdot[k] * fz - traj.zbardot[k] * fzb));
        let p = flow.evaluate(t, zb, z)?;
        dynamic.push(-I * p.hamiltonian);
        b.push(p.b);
    }
    let h = grid_step(traj);
    let s_kin = simpson_checked(&kin, h)?;
    let s_dyn = simpson_checked(&dynamic, h)?;
    let b_int = simpson_checked(&b, h)?;
    let (f_end, f_start, winding) = tracked_boundary_potentials(traj, geometry, bd)?;
    let gamma = 0.5 * (f_end + f_start) - diagonal_potentials(geometry, bd)?;
    Ok(ActionBreakdown {
        s_kin: s_kin.value,
        s_dyn: s_dyn.value,
        gamma,
        phi_c: s_kin.value + s_dyn.value + gamma,
        b_int: b_int.value,
        winding,
        quadrature_error: s_kin.error.max(s_dyn.error).max(b_int.error),
    })
}

/// Default number of grid doublings for [`refined_action`].
pub const MAX_REFINEMENTS: usize = 4;

/// Re-solves on doubled grids until the action quadrature resolves.
pub fn refined_action<S>(
    mut solve: S,
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &SolverSettings,
    max_refinements: usize,
) -> Result<(ClassicalTrajectory, ActionBreakdown)>
where
    S: FnMut(&SolverSettings) -> Result<ClassicalTrajectory>,
{
    let mut solver = *settings;
    solver.steps = solver.steps.max(4).div_ceil(4) * 4;
    let mut refinements = 0;
    loop {
        let traj = solve(&solver)?;
        match total_action(&traj, ham, bd) {
            Ok(a) => return Ok((traj, a)),
            Err(Error::QuadratureUnresolved { .. }) if refinements < max_refinements => {
                solver.steps *= 2;
                refinements += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Trajectory and action with automatic grid refinement.
pub fn solve_action(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &SolverSettings,
) -> Result<(ClassicalTrajectory, ActionBreakdown)> {
    refined_action(
        |s| solve_trajectory(ham, bd, s),
        ham,
        bd,
        settings,
        MAX_REFINEMENTS,
    )
}

/// `∂²Φ_c/∂z̄_F∂z_I = ½[g(τ) ∂z(τ)/∂z_I + g(0) ∂z̄(0)/∂z̄_F]`.
pub fn mixed_second_derivative(
    traj: &ClassicalTrajectory,
    geometry: &PhaseSpace,
) -> Result<MixedDerivative> {
    let n = traj.steps();
    let g_end = geometry.metric(traj.zbar_path[n], traj.z_path[n])?;
    let g_start = geometry.metric(traj.zbar_path[0], traj.z_path[0])?;
    Ok(MixedDerivative {
        value: 0.5 * (g_end * traj.sens_z_initial + g_start * traj.sens_zbar_final),
        method: MixedMethod::Sensitivities,
    })
}

/// Richardson-extrapolated 4-point stencil of a boundary functional in
/// `(z̄_F, z_I)`.
pub fn boundary_mixed_stencil<F>(f: F, bd: &BoundaryData, step: f64) -> Result<Complex64>
where
    F: Fn(&BoundaryData) -> Result<Complex64>,
{
    let eval = |db: f64, dz: f64| {
        let shifted = BoundaryData::new(bd.z_initial + dz, bd.zbar_final + db, bd.tau)?;
        f(&shifted)
    };
    let stencil = |h: f64| -> Result<Complex64> {
        Ok((eval(h, h)? - eval(h, -h)? - eval(-h, h)? + eval(-h, -h)?) / (4.0 * h * h))
    };
    Ok((4.0 * stencil(step)? - stencil(2.0 * step)?) / 3.0)
}

/// The mixed derivative from finite differences of `Φ_c` over perturbed
/// boundary-value solves.
pub fn mixed_second_derivative_fd(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &SolverSettings,
    step: f64,
) -> Result<MixedDerivative> {
    let phi = |b: &BoundaryData| -> Result<Complex64> {
        let traj = solve_trajectory(ham, b, settings)?;
        Ok(total_action(&traj, ham, b)?.phi_c)
    };
    Ok(MixedDerivative {
        value: boundary_mixed_stencil(phi, bd, step)?,
        method: MixedMethod::FiniteDifference,
    })
}

/// Defect of `S + Γ = i∫θ − i∫H + log⟨z_F|z_I⟩`, with `i∫θ` integrated along
/// the path and `Γ` taken from endpoint potentials.
pub fn theta_identity_check(
    traj: &ClassicalTrajectory,
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
) -> Result<f64> {
    let geometry = ham.geometry();
    let breakdown = total_action(traj, ham, bd)?;
    let n = traj.steps();
    let mut theta = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (zb, z) = (traj.zbar_path[k], traj.z_path[k]);
        let (fz, fzb) = geometry.potential_gradient(zb, z)?;
        let (fz_f, _) = geometry.potential_gradient(bd.zbar_final, z)?;
        let (_, fzb_i) = geometry.potential_gradient(zb, bd.z_initial)?;
        theta.push(-0.5 * (traj.zdot[k] * (fz - fz_f) - traj.zbardot[k] * (fzb - fzb_i)));
    }
    let i_theta = simpson_checked(&theta, grid_step(traj))?.value;
    let anchor = match geometry.log_argument(bd.zbar_final, bd.z_initial) {
        Some(u) => geometry.potential_from_log(u.ln()),
        None => geometry.kahler_potential(bd.zbar_final, bd.z_initial)?,
    };
    let log_overlap = anchor - diagonal_potentials(geometry, bd)?;
    let lhs = breakdown.s_kin + breakdown.s_dyn + breakdown.gamma;
    let rhs = i_theta + breakdown.s_dyn + log_overlap;
    Ok((lhs - rhs).norm())
}

/// `∫B dt` with `B = (i/2)(∂ż/∂z − ∂ż̄/∂z̄)` from finite differences of the
/// velocity field.
pub fn b_term_flow_form(
    traj: &ClassicalTrajectory,
    ham: &CompiledHamiltonian,
) -> Result<Complex64> {
    let flow = FlowField::new(ham, f64::INFINITY);
    let step = 1e-3;
    let n = traj.steps();
    let mut values = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (zb, z, t) = (traj.zbar_path[k], traj.z_path[k], traj.grid[k]);
        let failure = RefCell::new(None);
        let vel = |a: Complex64, b: Complex64, pick: usize| match flow.velocity(t, a, b) {
            Ok((vz, vb)) => [vz, vb][pick],
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Complex64::new(f64::NAN, f64::NAN)
            }
        };
        let dz = derivative_stencil(|x| vel(zb, x, 0), z, step);
        let dzb = derivative_stencil(|x| vel(x, z, 1), zb, step);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        values.push(0.5 * I * (dz - dzb));
    }
    Ok(simpson_checked(&values, grid_step(traj))?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::solve_linear_flow;
    use crate::symbols::{Algebra, HamiltonianSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn setup(
        spec: HamiltonianSpec,
        g: PhaseSpace,
        bd: BoundaryData,
    ) -> (CompiledHamiltonian, ClassicalTrajectory) {
        let ham = CompiledHamiltonian::new(&spec, &g).unwrap();
        let traj = solve_trajectory(&ham, &bd, &SolverSettings::default()).unwrap();
        (ham, traj)
    }

    #[test]
    fn free_action_is_log_overlap() {
        let j = 1.5;
        let g = PhaseSpace::sphere(j).unwrap();
        let bd = BoundaryData::new(c(0.4, -0.1), c(0.7, 0.2), 0.6).unwrap();
        let (ham, traj) = setup(HamiltonianSpec::zero(Algebra::Su2), g, bd);
        let a = total_action(&traj, &ham, &bd).unwrap();
        let zf = bd.z_final();
        let zi = bd.z_initial;
        let expected = 2.0 * j * (1.0 + bd.zbar_final * zi).ln()
            - j * (1.0 + zf.norm_sqr()).ln()
            - j * (1.0 + zi.norm_sqr()).ln();
        assert!((a.phi_c - expected).norm() < 1e-10);
        assert!((a.phi_c - g.log_overlap(bd.zbar_final, zi).unwrap()).norm() < 1e-10);
        assert_eq!(a.b_int, c(0.0, 0.0));
    }

    #[test]
    fn oscillator_action() {
        let (gamma, omega, tau) = (1.3, 0.8, 1.1);
        let g = PhaseSpace::plane(gamma).unwrap();
        let bd = BoundaryData::new(c(0.4, 0.3), c(-0.2, 0.5), tau).unwrap();
        let (ham, traj) = setup(HamiltonianSpec::oscillator(omega), g, bd);
        let a = total_action(&traj, &ham, &bd).unwrap();
        let expected = gamma * bd.zbar_final * bd.z_initial * c(0.0, -omega * tau).exp()
            - 0.5 * gamma * (bd.z_final().norm_sqr() + bd.z_initial.norm_sqr());
        assert!(
            (a.phi_c - expected).norm() < 1e-10,
            "{} vs {expected}",
            a.phi_c
        );
        assert!((a.b_int - omega * tau).norm() < 1e-12);
        let m = mixed_second_derivative(&traj, &g).unwrap();
        assert!((m.value - gamma * c(0.0, -omega * tau).exp()).norm() < 1e-12);
        assert!((b_term_flow_form(&traj, &ham).unwrap() - omega * tau).norm() < 1e-9);
        assert!(theta_identity_check(&traj, &ham, &bd).unwrap() < 1e-9);
    }

    #[test]
    fn spin_linear_closed_forms() {
        let (j, a, f, tau) = (2.0, 0.5, c(0.3, -0.4), 0.9);
        let g = PhaseSpace::sphere(j).unwrap();
        let spec = HamiltonianSpec::su2_linear(a, f);
        let bd = BoundaryData::new(c(0.2, 0.3), c(-0.4, 0.1), tau).unwrap();
        let ham = CompiledHamiltonian::new(&spec, &g).unwrap();
        let traj = solve_linear_flow(&ham, &bd, &SolverSettings::default()).unwrap();
        let act = total_action(&traj, &ham, &bd).unwrap();

        // ȧ = −iAa + if b̄, ḃ = −iAb − if ā with a(0) = 1, b(0) = 0
        let omega = (a * a + f.norm_sqr()).sqrt();
        let (cs, sn) = ((omega * tau).cos(), (omega * tau).sin() / omega);
        let aa = c(cs, -a * sn);
        let bb = -I * f * sn;
        let bracket = aa.conj() - bb.conj() * bd.z_initial
            + bb * bd.zbar_final
            + aa * bd.zbar_final * bd.z_initial;
        let expected = 2.0 * j * bracket.ln()
            - j * ((1.0 + bd.z_final().norm_sqr()) * (1.0 + bd.z_initial.norm_sqr())).ln();
        assert!(
            (act.phi_c - expected).norm() < 1e-9,
            "{} vs {expected}",
            act.phi_c
        );
        let mixed = mixed_second_derivative(&traj, &g).unwrap().value;
        assert!((mixed - 2.0 * j / (bracket * bracket)).norm() < 1e-9);

        let b_expected: Complex64 = {
            let vals: Vec<Complex64> = traj
                .z_path
                .iter()
                .zip(&traj.zbar_path)
                .map(|(z, zb)| 2.0 * a - f * zb - f.conj() * z)
                .collect();
            simpson_checked(&vals, tau / traj.steps() as f64)
                .unwrap()
                .value
        };
        assert!((act.b_int - b_expected).norm() < 1e-10);
        assert!((b_term_flow_form(&traj, &ham).unwrap() - b_expected).norm() < 1e-7);
        assert!(theta_identity_check(&traj, &ham, &bd).unwrap() < 1e-8);
    }

    #[test]
    fn weight_scaling() {
        let spec = HamiltonianSpec::su2_linear(0.6, c(0.2, 0.5));
        let bd = BoundaryData::new(c(0.3, -0.2), c(0.1, 0.4), 1.0).unwrap();
        let (h1, t1) = setup(spec.clone(), PhaseSpace::sphere(1.5).unwrap(), bd);
        let (h2, t2) = setup(spec, PhaseSpace::sphere(3.0).unwrap(), bd);
        let a1 = total_action(&t1, &h1, &bd).unwrap();
        let a2 = total_action(&t2, &h2, &bd).unwrap();
        assert!((a2.phi_c - 2.0 * a1.phi_c).norm() < 1e-10);
        assert!((a2.b_int - a1.b_int).norm() < 1e-9);
    }

    #[test]
    fn mixed_derivative_matches_finite_differences() {
        let g = PhaseSpace::plane(1.0).unwrap();
        let bd = BoundaryData::new(c(0.3, 0.1), c(0.2, -0.3), 0.7).unwrap();
        let (ham, traj) = setup(HamiltonianSpec::oscillator(1.2), g, bd);
        let exact = mixed_second_derivative(&traj, &g).unwrap().value;
        let fd =
            mixed_second_derivative_fd(&ham, &bd, &SolverSettings::default(), FD_BOUNDARY_STEP)
                .unwrap();
        assert_eq!(fd.method, MixedMethod::FiniteDifference);
        assert!((exact - fd.value).norm() < 1e-6 * exact.norm());
    }
}
