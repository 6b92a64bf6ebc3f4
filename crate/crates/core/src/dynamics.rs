//! Complexified Hamilton equations with split boundary data and their
//! linearization.
//!
//! The holomorphic coordinate starts at `z(0) = z_I` and the antiholomorphic
//! one ends at `z̄(τ) = z̄_F`; the two are integrated as independent complex
//! variables.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Kind, PhaseSpace, R_MAX};
use crate::integrate::{integrate_grid, integrate_interval};
use crate::symbols::{CompiledHamiltonian, ComplexRecord, Generator, HamiltonianSpec};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative size below which the Jacobi Wronskian counts as degenerate.
pub const WRONSKIAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundaryRecord", into = "BoundaryRecord")]
pub struct BoundaryData {
    pub z_initial: Complex64,
    pub zbar_final: Complex64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryRecord {
    #[serde(rename = "z_I")]
    pub z_initial: ComplexRecord,
    #[serde(rename = "zbar_F")]
    pub zbar_final: ComplexRecord,
    pub tau: f64,
}

impl TryFrom<BoundaryRecord> for BoundaryData {
    type Error = Error;

    fn try_from(r: BoundaryRecord) -> Result<Self> {
        BoundaryData::new(r.z_initial.into(), r.zbar_final.into(), r.tau)
    }
}

impl From<BoundaryData> for BoundaryRecord {
    fn from(b: BoundaryData) -> Self {
        BoundaryRecord {
            z_initial: b.z_initial.into(),
            zbar_final: b.zbar_final.into(),
            tau: b.tau,
        }
    }
}

impl BoundaryData {
    pub fn new(z_initial: Complex64, zbar_final: Complex64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tau must be positive, got {tau}"
            )));
        }
        for v in [z_initial, zbar_final] {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite endpoint {v}")));
            }
        }
        Ok(BoundaryData {
            z_initial,
            zbar_final,
            tau,
        })
    }

    /// `z_F = conj(z̄_F)`.
    pub fn z_final(&self) -> Complex64 {
        self.zbar_final.conj()
    }

    pub fn zbar_initial(&self) -> Complex64 {
        self.z_initial.conj()
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.z_initial, self.zbar_final, tau)
    }

    pub fn check_domain(&self, geometry: &PhaseSpace) -> Result<()> {
        if geometry.kind() == Kind::Disk {
            for z in [self.z_initial, self.zbar_final] {
                if z.norm() >= 1.0 {
                    return Err(Error::ChartDomain { zbar: z.conj(), z });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Intervals of the uniform reporting grid (a multiple of 4).
    pub steps: usize,
    /// Boundary residual accepted by the shooting method.
    pub tol: f64,
    pub newton_max: usize,
    pub rmax: f64,
    /// Local error tolerance of the ODE integrator.
    pub ode_tol: f64,
    /// Re-run Newton from perturbed guesses and report distinct roots.
    pub uniqueness_probe: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            steps: 256,
            tol: 1e-12,
            newton_max: 50,
            rmax: R_MAX,
            ode_tol: 1e-13,
            uniqueness_probe: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverTag {
    LinearFlow,
    Shooting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalTrajectory {
    pub grid: Vec<f64>,
    pub z_path: Vec<Complex64>,
    pub zbar_path: Vec<Complex64>,
    pub zdot: Vec<Complex64>,
    pub zbardot: Vec<Complex64>,
    /// `∂z(τ)/∂z_I`.
    pub sens_z_initial: Complex64,
    /// `∂z̄(0)/∂z̄_F`.
    pub sens_zbar_final: Complex64,
    pub residual: f64,
    pub solver: SolverTag,
    pub newton_iterations: usize,
}

impl ClassicalTrajectory {
    pub fn tau(&self) -> f64 {
        *self.grid.last().expect("non-empty grid")
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn z_end(&self) -> Complex64 {
        *self.z_path.last().expect("non-empty path")
    }

    pub fn zbar_start(&self) -> Complex64 {
        self.zbar_path[0]
    }
}

/// Hamiltonian vector field together with its derivatives and the Jacobi
/// coefficients.
#[derive(Debug, Clone, Copy)]
pub struct FlowPoint {
    pub zdot: Complex64,
    pub zbardot: Complex64,
    /// `[[∂ż/∂z, ∂ż/∂z̄], [∂ż̄/∂z, ∂ż̄/∂z̄]]`.
    pub jacobian: [[Complex64; 2]; 2],
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub metric: Complex64,
    pub hamiltonian: Complex64,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowField<'a> {
    ham: &'a CompiledHamiltonian,
    rmax: f64,
}

impl<'a> FlowField<'a> {
    pub fn new(ham: &'a CompiledHamiltonian, rmax: f64) -> Self {
        FlowField { ham, rmax }
    }

    pub fn hamiltonian(&self) -> &'a CompiledHamiltonian {
        self.ham
    }

    fn check(&self, zbar: Complex64, z: Complex64) -> Result<()> {
        let modulus = z.norm().max(zbar.norm());
        if !modulus.is_finite() || modulus > self.rmax {
            return Err(Error::ChartOverflow {
                modulus,
                limit: self.rmax,
            });
        }
        Ok(())
    }

    /// `(ż, ż̄) = (−i g⁻¹ ∂H/∂z̄, i g⁻¹ ∂H/∂z)`.
    pub fn velocity(
        &self,
        t: f64,
        zbar: Complex64,
        z: Complex64,
    ) -> Result<(Complex64, Complex64)> {
        self.check(zbar, z)?;
        let s = self.ham.symbol(zbar, z, t)?;
        let g = self.ham.geometry().metric(zbar, z)?;
        Ok((-I * s.dzbar / g, I * s.dz / g))
    }

    pub fn evaluate(&self, t: f64, zbar: Complex64, z: Complex64) -> Result<FlowPoint> {
        self.check(zbar, z)?;
        let geometry = self.ham.geometry();
        let s = self.ham.symbol(zbar, z, t)?;
        let g = geometry.metric(zbar, z)?;
        let (lz, lzb) = geometry.metric_log_gradient(zbar, z)?;
        // p = ∂_z(g⁻¹H_z̄), q = ∂_z̄(g⁻¹H_z)
        let p = (s.dzdzbar - s.dzbar * lz) / g;
        let q = (s.dzdzbar - s.dz * lzb) / g;
        let a = (s.dzz - s.dz * lz) / g;
        let c = (s.dzbarzbar - s.dzbar * lzb) / g;
        Ok(FlowPoint {
            zdot: -I * s.dzbar / g,
            zbardot: I * s.dz / g,
            jacobian: [[-I * p, -I * c], [I * a, I * q]],
            a,
            b: 0.5 * (p + q),
            c,
            metric: g,
            hamiltonian: s.value,
        })
    }
}

/// Riccati coefficients `(p, q, r)` of `ż = p + qz + rz²` and of the
/// antiholomorphic flow, for Hamiltonians linear in the generators.
pub fn riccati_coefficients(
    spec: &HamiltonianSpec,
    geometry: &PhaseSpace,
    t: f64,
) -> Result<([Complex64; 3], [Complex64; 3])> {
    let mut raise = ZERO;
    let mut lower = ZERO;
    let mut cartan = ZERO;
    for term in &spec.terms {
        let c = term.coeff.value(t) * crate::symbols::lnorm_factor(term.lnorm, geometry)?;
        match term.generators.as_slice() {
            [] | [Generator::Identity] => {}
            [Generator::Raise] => raise += c,
            [Generator::Lower] => lower += c,
            [Generator::Cartan] => cartan += c,
            _ => return Err(Error::NotLinear),
        }
    }
    Ok(match geometry.kind() {
        Kind::Sphere => (
            [-I * raise, -I * cartan, I * lower],
            [I * lower, I * cartan, -I * raise],
        ),
        Kind::Plane => {
            let s = geometry.weight().sqrt();
            (
                [-I * raise / s, -I * cartan, ZERO],
                [I * lower / s, I * cartan, ZERO],
            )
        }
        Kind::Disk => (
            [-I * raise, -I * cartan, -I * lower],
            [I * lower, I * cartan, I * raise],
        ),
    })
}

fn generator_matrix(coef: &[Complex64; 3]) -> Matrix2<Complex64> {
    let [p, q, r] = *coef;
    Matrix2::new(0.5 * q, p, -r, -0.5 * q)
}

fn mat_from(y: &[Complex64]) -> Matrix2<Complex64> {
    Matrix2::new(y[0], y[1], y[2], y[3])
}

fn moebius(m: &Matrix2<Complex64>, z: Complex64) -> (Complex64, Complex64) {
    (m[(0, 0)] * z + m[(0, 1)], m[(1, 0)] * z + m[(1, 1)])
}

/// Closed-form flow for generator-linear Hamiltonians: the Riccati equations
/// are linearized by a 2×2 matrix ODE and the paths follow from Möbius maps.
pub fn solve_linear_flow(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &SolverSettings,
) -> Result<ClassicalTrajectory> {
    let spec = ham.spec();
    let geometry = *ham.geometry();
    riccati_coefficients(spec, &geometry, 0.0)?;
    bd.check_domain(&geometry)?;
    let steps = settings.steps.max(1);
    let field = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let (hol, anti) = riccati_coefficients(spec, &geometry, t)?;
        let mu = generator_matrix(&hol) * mat_from(&y[0..4]);
        let mw = generator_matrix(&anti) * mat_from(&y[4..8]);
        dy[0..4].copy_from_slice(&[mu[(0, 0)], mu[(0, 1)], mu[(1, 0)], mu[(1, 1)]]);
        dy[4..8].copy_from_slice(&[mw[(0, 0)], mw[(0, 1)], mw[(1, 0)], mw[(1, 1)]]);
        Ok(())
    };
    let y0 = [ONE, ZERO, ZERO, ONE, ONE, ZERO, ZERO, ONE];
    let states = integrate_grid(field, 0.0, bd.tau, &y0, steps, settings.ode_tol)?;
    let w_end = mat_from(&states[steps][4..8]);
    let w_end_inv = w_end
        .try_inverse()
        .ok_or(Error::MoebiusPole { s: bd.tau })?;

    let dt = bd.tau / steps as f64;
    let mut grid = Vec::with_capacity(steps + 1);
    let mut z_path = Vec::with_capacity(steps + 1);
    let mut zbar_path = Vec::with_capacity(steps + 1);
    let mut zdot = Vec::with_capacity(steps + 1);
    let mut zbardot = Vec::with_capacity(steps + 1);
    let mut sens_z = ONE;
    let mut sens_zbar = ONE;
    for (k, y) in states.iter().enumerate() {
        let t = if k == steps { bd.tau } else { k as f64 * dt };
        let u = mat_from(&y[0..4]);
        let v = mat_from(&y[4..8]) * w_end_inv;
        let (nz, dz) = moebius(&u, bd.z_initial);
        let (nb, db) = moebius(&v, bd.zbar_final);
        let scale_z = (u[(1, 0)].norm() * bd.z_initial.norm()).max(u[(1, 1)].norm());
        let scale_b = (v[(1, 0)].norm() * bd.zbar_final.norm()).max(v[(1, 1)].norm());
        if dz.norm() <= 1e-14 * scale_z || db.norm() <= 1e-14 * scale_b {
            return Err(Error::MoebiusPole { s: t });
        }
        let z = nz / dz;
        let zbar = nb / db;
        let (hol, anti) = riccati_coefficients(spec, &geometry, t)?;
        grid.push(t);
        z_path.push(z);
        zbar_path.push(zbar);
        zdot.push(hol[0] + hol[1] * z + hol[2] * z * z);
        zbardot.push(anti[0] + anti[1] * zbar + anti[2] * zbar * zbar);
        if k == steps {
            sens_z = u.determinant() / (dz * dz);
        }
        if k == 0 {
            sens_zbar = v.determinant() / (db * db);
        }
    }
    for (&z, &zb) in z_path.iter().zip(&zbar_path) {
        let modulus = z.norm().max(zb.norm());
        if modulus > settings.rmax {
            return Err(Error::ChartOverflow {
                modulus,
                limit: settings.rmax,
            });
        }
    }
    let residual = (zbar_path[steps] - bd.zbar_final).norm();
    z_path[0] = bd.z_initial;
    Ok(ClassicalTrajectory {
        grid,
        z_path,
        zbar_path,
        zdot,
        zbardot,
        sens_z_initial: sens_z,
        sens_zbar_final: sens_zbar,
        residual,
        solver: SolverTag::LinearFlow,
        newton_iterations: 0,
    })
}

/// State `(z, z̄, ∂_w z, ∂_w z̄, ∂_{z_I} z, ∂_{z_I} z̄)` with `w = z̄(0)`.
fn tangent_field<'a>(
    flow: FlowField<'a>,
) -> impl FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()> + 'a {
    move |t, y, dy| {
        let p = flow.evaluate(t, y[1], y[0])?;
        let j = p.jacobian;
        dy[0] = p.zdot;
        dy[1] = p.zbardot;
        dy[2] = j[0][0] * y[2] + j[0][1] * y[3];
        dy[3] = j[1][0] * y[2] + j[1][1] * y[3];
        dy[4] = j[0][0] * y[4] + j[0][1] * y[5];
        dy[5] = j[1][0] * y[4] + j[1][1] * y[5];
        Ok(())
    }
}

fn propagate(
    flow: FlowField<'_>,
    z_initial: Complex64,
    w: Complex64,
    tau: f64,
    tol: f64,
) -> Result<Vec<Complex64>> {
    let y0 = [z_initial, w, ZERO, ONE, ONE, ZERO];
    integrate_interval(&mut tangent_field(flow), 0.0, tau, &y0, tol)
}

/// Damped Newton iteration on `w ↦ z̄(τ; w) − z̄_F`.
fn newton(
    flow: FlowField<'_>,
    bd: &BoundaryData,
    guess: Complex64,
    settings: &SolverSettings,
) -> Result<(Complex64, usize)> {
    let target = settings.tol * bd.zbar_final.norm().max(1.0);
    let mut w = guess;
    let mut end = propagate(flow, bd.z_initial, w, bd.tau, settings.ode_tol)?;
    let mut residual = end[1] - bd.zbar_final;
    for iteration in 0..settings.newton_max {
        if residual.norm() <= target {
            return Ok((w, iteration));
        }
        let step = residual / end[3];
        if !(step.re.is_finite() && step.im.is_finite()) {
            break;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = w - step * lambda;
            if let Ok(y) = propagate(flow, bd.z_initial, trial, bd.tau, settings.ode_tol) {
                let r = y[1] - bd.zbar_final;
                if r.norm() < residual.norm() || r.norm() <= target {
                    w = trial;
                    end = y;
                    residual = r;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if residual.norm() <= target {
        return Ok((w, settings.newton_max));
    }
    Err(Error::NoConvergence {
        iterations: settings.newton_max,
        defect: residual.norm(),
    })
}

/// Newton from `guess`, falling back to continuation in `τ` from the short-time
/// limit `z̄(0) → z̄_F`.
fn newton_with_continuation(
    flow: FlowField<'_>,
    bd: &BoundaryData,
    guess: Complex64,
    settings: &SolverSettings,
) -> Result<(Complex64, usize)> {
    let direct = newton(flow, bd, guess, settings);
    let mut last_err = match direct {
        Ok(found) => return Ok(found),
        Err(e) => e,
    };
    for stages in [4usize, 16, 64] {
        let mut w = bd.zbar_final;
        let mut total = 0;
        let mut failed = None;
        for k in 1..=stages {
            let stage = bd.with_tau(bd.tau * k as f64 / stages as f64)?;
            match newton(flow, &stage, w, settings) {
                Ok((next, its)) => {
                    w = next;
                    total += its;
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            None => return Ok((w, total)),
            Some(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Shooting on the unknown `w = z̄(0)` for general Hamiltonians.
pub fn solve_bvp_shooting(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    guess: Complex64,
    settings: &SolverSettings,
) -> Result<ClassicalTrajectory> {
    bd.check_domain(ham.geometry())?;
    let flow = FlowField::new(ham, settings.rmax);
    let (w, iterations) = newton_with_continuation(flow, bd, guess, settings)?;

    if settings.uniqueness_probe {
        let radius = 0.25 * (1.0 + w.norm());
        for k in 0..4 {
            let kick = Complex64::from_polar(radius, std::f64::consts::FRAC_PI_2 * k as f64 + 0.3);
            if let Ok((other, _)) = newton(flow, bd, w + kick, settings) {
                if (other - w).norm() > 1e-6 * (1.0 + w.norm()) {
                    return Err(Error::MultipleSolutionsSuspected {
                        first: w,
                        second: other,
                    });
                }
            }
        }
    }

    let steps = settings.steps.max(1);
    let y0 = [bd.z_initial, w, ZERO, ONE, ONE, ZERO];
    let states = integrate_grid(
        tangent_field(flow),
        0.0,
        bd.tau,
        &y0,
        steps,
        settings.ode_tol,
    )?;
    let end = &states[steps];
    let dw_dzbar_final = ONE / end[3];
    let dw_dz_initial = -end[5] / end[3];
    let sens_z = end[4] + end[2] * dw_dz_initial;

    let dt = bd.tau / steps as f64;
    let mut grid = Vec::with_capacity(steps + 1);
    let mut z_path = Vec::with_capacity(steps + 1);
    let mut zbar_path = Vec::with_capacity(steps + 1);
    let mut zdot = Vec::with_capacity(steps + 1);
    let mut zbardot = Vec::with_capacity(steps + 1);
    for (k, y) in states.iter().enumerate() {
        let t = if k == steps { bd.tau } else { k as f64 * dt };
        let (vz, vb) = flow.velocity(t, y[1], y[0])?;
        grid.push(t);
        z_path.push(y[0]);
        zbar_path.push(y[1]);
        zdot.push(vz);
        zbardot.push(vb);
    }
    Ok(ClassicalTrajectory {
        grid,
        z_path,
        zbar_path,
        zdot,
        zbardot,
        sens_z_initial: sens_z,
        sens_zbar_final: dw_dzbar_final,
        residual: (end[1] - bd.zbar_final).norm(),
        solver: SolverTag::Shooting,
        newton_iterations: iterations,
    })
}

/// Linear flow when the Hamiltonian allows it, shooting from `z̄_F` otherwise.
pub fn solve_trajectory(
    ham: &CompiledHamiltonian,
    bd: &BoundaryData,
    settings: &SolverSettings,
) -> Result<ClassicalTrajectory> {
    if ham.spec().is_linear() {
        solve_linear_flow(ham, bd, settings)
    } else {
        solve_bvp_shooting(ham, bd, bd.zbar_final, settings)
    }
}

/// Solutions of the gauge-transformed Jacobi equations
/// `φ̄' = iÃφ`, `φ' = −iC̃φ̄` with `Ã = A e^{−2i∫B}`, `C̃ = C e^{2i∫B}`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiSolution {
    pub grid: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub phibar: Vec<Complex64>,
    pub psi: Vec<Complex64>,
    pub psibar: Vec<Complex64>,
    /// `∫₀ˢ B` along the grid.
    pub b_integral: Vec<Complex64>,
    pub wronskian: Complex64,
    pub wronskian_drift: f64,
}

/// State `(z, z̄, β, φ, φ̄)` with `β = ∫B`.
fn jacobi_field<'a>(
    flow: FlowField<'a>,
) -> impl FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()> + 'a {
    move |t, y, dy| {
        let p = flow.evaluate(t, y[1], y[0])?;
        let phase = (2.0 * I * y[2]).exp();
        dy[0] = p.zdot;
        dy[1] = p.zbardot;
        dy[2] = p.b;
        dy[3] = -I * p.c * phase * y[4];
        dy[4] = I * p.a / phase * y[3];
        Ok(())
    }
}

pub fn solve_jacobi(
    traj: &ClassicalTrajectory,
    ham: &CompiledHamiltonian,
    settings: &SolverSettings,
) -> Result<JacobiSolution> {
    let flow = FlowField::new(ham, settings.rmax);
    let steps = traj.steps();
    let tau = traj.tau();
    let forward = integrate_grid(
        jacobi_field(flow),
        0.0,
        tau,
        &[traj.z_path[0], traj.zbar_path[0], ZERO, ZERO, ONE],
        steps,
        settings.ode_tol,
    )?;
    let beta_end = forward[steps][2];
    let backward = integrate_grid(
        jacobi_field(flow),
        tau,
        0.0,
        &[traj.z_end(), traj.zbar_path[steps], beta_end, ONE, ZERO],
        steps,
        settings.ode_tol,
    )?;
    let phi: Vec<Complex64> = forward.iter().map(|y| y[3]).collect();
    let phibar: Vec<Complex64> = forward.iter().map(|y| y[4]).collect();
    let psi: Vec<Complex64> = backward.iter().rev().map(|y| y[3]).collect();
    let psibar: Vec<Complex64> = backward.iter().rev().map(|y| y[4]).collect();
    let b_integral = forward.iter().map(|y| y[2]).collect();
    let wr: Vec<Complex64> = (0..=steps)
        .map(|k| phi[k] * psibar[k] - phibar[k] * psi[k])
        .collect();
    let w0 = wr[0];
    let scale = phibar
        .iter()
        .chain(psi.iter())
        .map(|v| v.norm())
        .fold(1.0, f64::max);
    if w0.norm() <= WRONSKIAN_FLOOR * scale * scale {
        return Err(Error::DegenerateWronskian {
            wronskian: w0.norm(),
        });
    }
    let drift = wr.iter().map(|w| (w - w0).norm()).fold(0.0, f64::max) / w0.norm();
    Ok(JacobiSolution {
        grid: traj.grid.clone(),
        phi,
        phibar,
        psi,
        psibar,
        b_integral,
        wronskian: w0,
        wronskian_drift: drift,
    })
}

/// `Det K̃/K₀ = φ̄(τ)/φ̄(0) = ψ(0)/ψ(τ)`.
pub fn det_ratio_jacobi(js: &JacobiSolution) -> Result<Complex64> {
    let n = js.phibar.len() - 1;
    let forward = js.phibar[n] / js.phibar[0];
    let backward = js.psi[0] / js.psi[n];
    let scale = forward.norm().max(backward.norm());
    if scale == 0.0 || !scale.is_finite() || js.wronskian.norm() <= WRONSKIAN_FLOOR {
        return Err(Error::DegenerateWronskian {
            wronskian: js.wronskian.norm(),
        });
    }
    if (forward - backward).norm() > 1e-7 * scale {
        return Err(Error::IntegratorFailure {
            s: js.grid[n],
            reason: "forward and backward determinant forms disagree",
        });
    }
    Ok(forward)
}

/// `[g(τ)/g(0)]^{1/2} e^{−i∫B} / (∂z̄(0)/∂z̄_F)` with the square root continued
/// along the path.
pub fn det_ratio_from_sensitivities(
    traj: &ClassicalTrajectory,
    geometry: &PhaseSpace,
    b_integral: Complex64,
) -> Result<Complex64> {
    let root = metric_root_ratio(traj, geometry)?;
    Ok(root * (-I * b_integral).exp() / traj.sens_zbar_final)
}

/// `[g(τ)/g(0)]^{1/2}` continued from 1 along the trajectory samples.
pub fn metric_root_ratio(traj: &ClassicalTrajectory, geometry: &PhaseSpace) -> Result<Complex64> {
    let mut root = ONE;
    let mut previous = geometry.metric(traj.zbar_path[0], traj.z_path[0])?;
    for (zb, z) in traj.zbar_path.iter().zip(&traj.z_path).skip(1) {
        let g = geometry.metric(*zb, *z)?;
        root *= (g / previous).sqrt();
        previous = g;
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn compile(spec: &HamiltonianSpec, g: &PhaseSpace) -> CompiledHamiltonian {
        CompiledHamiltonian::new(spec, g).unwrap()
    }

    #[test]
    fn zero_hamiltonian_gives_constant_paths() {
        let g = PhaseSpace::sphere(1.0).unwrap();
        let ham = compile(&HamiltonianSpec::zero(crate::symbols::Algebra::Su2), &g);
        let bd = BoundaryData::new(c(0.3, 0.1), c(-0.2, 0.4), 0.7).unwrap();
        let settings = SolverSettings::default();
        for traj in [
            solve_linear_flow(&ham, &bd, &settings).unwrap(),
            solve_bvp_shooting(&ham, &bd, c(1.0, 1.0), &settings).unwrap(),
        ] {
            assert!(traj
                .z_path
                .iter()
                .all(|z| (z - bd.z_initial).norm() < 1e-14));
            assert!(traj
                .zbar_path
                .iter()
                .all(|z| (z - bd.zbar_final).norm() < 1e-12));
            assert!((traj.sens_z_initial - 1.0).norm() < 1e-12);
            assert!((traj.sens_zbar_final - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn oscillator_paths() {
        let (gamma, omega, tau) = (1.5, 0.9, 1.2);
        let g = PhaseSpace::plane(gamma).unwrap();
        let ham = compile(&HamiltonianSpec::oscillator(omega), &g);
        let bd = BoundaryData::new(c(0.5, -0.2), c(0.1, 0.3), tau).unwrap();
        let traj = solve_linear_flow(&ham, &bd, &SolverSettings::default()).unwrap();
        for (k, &s) in traj.grid.iter().enumerate() {
            let z = bd.z_initial * c(0.0, -omega * s).exp();
            let zb = bd.zbar_final * c(0.0, -omega * (tau - s)).exp();
            assert!((traj.z_path[k] - z).norm() < 1e-12);
            assert!((traj.zbar_path[k] - zb).norm() < 1e-12);
        }
        let rot = c(0.0, -omega * tau).exp();
        assert!((traj.sens_z_initial - rot).norm() < 1e-12);
        assert!((traj.sens_zbar_final - rot).norm() < 1e-12);
    }

    #[test]
    fn spin_precession_paths() {
        let (a, tau) = (0.6, 0.9);
        let g = PhaseSpace::sphere(1.0).unwrap();
        let ham = compile(&HamiltonianSpec::su2_linear(a, ZERO), &g);
        let bd = BoundaryData::new(c(0.4, 0.2), c(0.3, -0.1), tau).unwrap();
        let traj = solve_linear_flow(&ham, &bd, &SolverSettings::default()).unwrap();
        let last = traj.steps();
        assert!((traj.z_path[last] - bd.z_initial * c(0.0, -2.0 * a * tau).exp()).norm() < 1e-12);
    }

    #[test]
    fn shooting_agrees_with_linear_flow() {
        let g = PhaseSpace::sphere(2.0).unwrap();
        let ham = compile(&HamiltonianSpec::su2_linear(0.7, c(0.4, -0.3)), &g);
        let bd = BoundaryData::new(c(0.3, 0.2), c(-0.1, 0.5), 1.1).unwrap();
        let settings = SolverSettings::default();
        let lin = solve_linear_flow(&ham, &bd, &settings).unwrap();
        let shot = solve_bvp_shooting(&ham, &bd, bd.zbar_final, &settings).unwrap();
        for k in 0..lin.grid.len() {
            assert!((lin.z_path[k] - shot.z_path[k]).norm() < 1e-9);
            assert!((lin.zbar_path[k] - shot.zbar_path[k]).norm() < 1e-9);
            assert!((lin.zdot[k] - shot.zdot[k]).norm() < 1e-9);
        }
        assert!((lin.sens_z_initial - shot.sens_z_initial).norm() < 1e-9);
        assert!((lin.sens_zbar_final - shot.sens_zbar_final).norm() < 1e-9);
        assert!(shot.residual <= 1e-12);
    }

    #[test]
    fn twisting_trajectory_converges() {
        let g = PhaseSpace::sphere(5.0).unwrap();
        let ham = compile(&HamiltonianSpec::two_axis_twisting(1.0), &g);
        let bd = BoundaryData::new(c(0.3, 0.0), c(0.2, 0.0), 0.5).unwrap();
        let traj =
            solve_bvp_shooting(&ham, &bd, bd.zbar_final, &SolverSettings::default()).unwrap();
        assert!(traj.residual <= 1e-10);
        assert!(
            solve_linear_flow(&ham, &bd, &SolverSettings::default()).unwrap_err()
                == Error::NotLinear
        );
    }

    #[test]
    fn jacobi_for_oscillator_is_trivial() {
        let g = PhaseSpace::plane(1.0).unwrap();
        let ham = compile(&HamiltonianSpec::oscillator(1.3), &g);
        let bd = BoundaryData::new(c(0.2, 0.1), c(0.5, 0.0), 0.8).unwrap();
        let settings = SolverSettings::default();
        let traj = solve_linear_flow(&ham, &bd, &settings).unwrap();
        let js = solve_jacobi(&traj, &ham, &settings).unwrap();
        assert!(js.phi.iter().all(|p| p.norm() < 1e-14));
        assert!(js.phibar.iter().all(|p| (p - 1.0).norm() < 1e-14));
        assert!((det_ratio_jacobi(&js).unwrap() - 1.0).norm() < 1e-13);
        assert!((js.b_integral[traj.steps()] - 1.3 * 0.8).norm() < 1e-12);
    }

    #[test]
    fn parametric_amplifier_determinant() {
        let (omega, gain, tau) = (0.7, 1.0, 0.5);
        let g = PhaseSpace::plane(1.0).unwrap();
        let ham = compile(&HamiltonianSpec::parametric_amplifier(omega, gain), &g);
        let bd = BoundaryData::new(c(0.2, 0.1), c(0.3, -0.2), tau).unwrap();
        let settings = SolverSettings::default();
        let traj = solve_bvp_shooting(&ham, &bd, bd.zbar_final, &settings).unwrap();
        let js = solve_jacobi(&traj, &ham, &settings).unwrap();
        let det = det_ratio_jacobi(&js).unwrap();
        assert!((det - (gain * tau).cosh()).norm() < 1e-10, "{det}");
        assert!(js.wronskian_drift < 1e-8);
    }

    #[test]
    fn determinant_forms_agree_for_linear_spin() {
        let g = PhaseSpace::sphere(1.5).unwrap();
        let ham = compile(&HamiltonianSpec::su2_linear(0.4, c(0.6, 0.3)), &g);
        let bd = BoundaryData::new(c(0.5, -0.3), c(0.2, 0.4), 1.4).unwrap();
        let settings = SolverSettings::default();
        let traj = solve_linear_flow(&ham, &bd, &settings).unwrap();
        let js = solve_jacobi(&traj, &ham, &settings).unwrap();
        let jac = det_ratio_jacobi(&js).unwrap();
        let prod = det_ratio_from_sensitivities(&traj, &g, js.b_integral[traj.steps()]).unwrap();
        assert!((jac - prod).norm() < 1e-7 * jac.norm(), "{jac} vs {prod}");
        assert!(js.wronskian_drift < 1e-8);
    }

    #[test]
    fn moebius_pole_is_reported() {
        // 2Jx for a quarter period rotates the south pole onto the north pole
        let g = PhaseSpace::sphere(0.5).unwrap();
        let ham = compile(&HamiltonianSpec::su2_linear(0.0, c(1.0, 0.0)), &g);
        let bd = BoundaryData::new(ZERO, ZERO, std::f64::consts::FRAC_PI_2).unwrap();
        let settings = SolverSettings {
            steps: 8,
            ..Default::default()
        };
        let err = solve_linear_flow(&ham, &bd, &settings).unwrap_err();
        assert!(
            matches!(err, Error::MoebiusPole { .. } | Error::ChartOverflow { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn boundary_record_roundtrip() {
        let bd = BoundaryData::new(c(0.1, 0.2), c(0.3, 0.4), 0.5).unwrap();
        let rec: BoundaryRecord = bd.into();
        assert_eq!(BoundaryData::try_from(rec).unwrap(), bd);
        assert!(BoundaryData::new(ZERO, ZERO, 0.0).is_err());
    }
}
