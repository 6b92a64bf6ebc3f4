//! The validation suite: per-module invariants and the eight acceptance
//! criteria, each reported with its measured defect.

use std::f64::consts::PI;
use std::time::Instant;

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use qcprop::action::{
    mixed_second_derivative, mixed_second_derivative_fd, solve_action, theta_identity_check,
    total_action, FD_BOUNDARY_STEP,
};
use qcprop::dynamics::{
    det_ratio_from_sensitivities, det_ratio_jacobi, solve_jacobi, solve_trajectory, BoundaryData,
    FlowField, SolverSettings,
};
use qcprop::error::{Error, Result};
use qcprop::exact::{
    coherent_vector, exact_amplitude, generator_matrices, ExactSystem, Representation,
};
use qcprop::geometry::{Kind, PhaseSpace, FD_STEP};
use qcprop::semiclassics::{
    default_probe_grid, dh_exactness_probe, propagator_flat_alpha, propagator_qc, DhVerdict,
    Settings,
};
use qcprop::symbols::{
    Algebra, CompiledHamiltonian, Generator, HamiltonianSpec, Term, TimeCoefficient,
};

use crate::config::{default_config, ExperimentConfig};
use crate::runner::{run_convergence, run_propagate, Status};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn relative(a: Complex64, b: Complex64) -> f64 {
    (a / b - 1.0).norm()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion number, or `None` for module invariants.
    pub criterion: Option<u8>,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, criterion: Option<u8>, measured: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            criterion,
            passed: measured <= threshold,
            measured,
            threshold,
            detail: String::new(),
        }
    }

    fn attempt(
        name: &str,
        criterion: Option<u8>,
        threshold: f64,
        f: impl FnOnce() -> Result<f64>,
    ) -> Self {
        match f() {
            Ok(m) => Check::at_most(name, criterion, m, threshold),
            Err(e) => Check {
                detail: format!("{}: {e}", e.code()),
                passed: false,
                ..Check::at_most(name, criterion, f64::NAN, threshold)
            },
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Test hooks that deliberately corrupt parts of the model.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hooks {
    /// Added to the metric in the metric-potential consistency check.
    pub metric_perturbation: f64,
}

/// Example problems shared by the identity checks.
pub struct Example {
    pub name: &'static str,
    pub spec: HamiltonianSpec,
    pub geometry: PhaseSpace,
    pub boundary: BoundaryData,
    pub truncation: usize,
}

pub fn su11_linear(a: f64, f: Complex64) -> HamiltonianSpec {
    let k = TimeCoefficient::constant;
    HamiltonianSpec::zero(Algebra::Su11)
        .with_term(Term::new(vec![Generator::Cartan], k(c(2.0 * a, 0.0))))
        .with_term(Term::new(vec![Generator::Raise], k(f)))
        .with_term(Term::new(vec![Generator::Lower], k(f.conj())))
}

pub fn bundled_examples() -> Vec<Example> {
    let bd = |z: Complex64, zb: Complex64, tau: f64| {
        BoundaryData::new(z, zb, tau).expect("valid boundary")
    };
    let driven = HamiltonianSpec::zero(Algebra::Su2)
        .with_term(Term::new(
            vec![Generator::Cartan],
            TimeCoefficient::constant(c(0.8, 0.0)),
        ))
        .with_term(Term::new(
            vec![Generator::Raise],
            TimeCoefficient::exp(c(0.5, -0.2), -1.3),
        ))
        .with_term(Term::new(
            vec![Generator::Lower],
            TimeCoefficient::exp(c(0.5, 0.2), 1.3),
        ));
    vec![
        Example {
            name: "free sphere",
            spec: HamiltonianSpec::zero(Algebra::Su2),
            geometry: PhaseSpace::sphere(2.5).expect("valid"),
            boundary: bd(c(0.3, 0.5), c(-0.4, 0.2), 0.8),
            truncation: 0,
        },
        Example {
            name: "spin linear",
            spec: HamiltonianSpec::su2_linear(0.7, c(0.3, 0.2)),
            geometry: PhaseSpace::sphere(5.0).expect("valid"),
            boundary: bd(c(0.4, 0.0), c(-0.1, 0.5), 1.0),
            truncation: 0,
        },
        Example {
            name: "spin driven",
            spec: driven,
            geometry: PhaseSpace::sphere(3.0).expect("valid"),
            boundary: bd(c(-0.2, 0.6), c(0.5, 0.1), 1.5),
            truncation: 0,
        },
        Example {
            name: "oscillator",
            spec: HamiltonianSpec::oscillator(0.9),
            geometry: PhaseSpace::plane(1.0).expect("valid"),
            boundary: bd(c(0.3, 0.2), c(0.1, -0.4), 1.2),
            truncation: 64,
        },
        Example {
            name: "parametric amplifier",
            spec: HamiltonianSpec::parametric_amplifier(0.8, 0.5),
            geometry: PhaseSpace::plane(1.0).expect("valid"),
            boundary: bd(c(0.3, -0.2), c(0.2, 0.4), 1.0),
            truncation: 128,
        },
        Example {
            name: "two-axis twisting",
            spec: HamiltonianSpec::two_axis_twisting(1.0),
            geometry: PhaseSpace::sphere(5.0).expect("valid"),
            boundary: bd(c(0.3, 0.0), c(0.2, 0.0), 0.5),
            truncation: 0,
        },
        Example {
            name: "disk linear",
            spec: su11_linear(0.6, c(0.2, 0.1)),
            geometry: PhaseSpace::disk(1.5).expect("valid"),
            boundary: bd(c(0.3, 0.1), c(0.2, -0.3), 1.0),
            truncation: 160,
        },
    ]
}

/// Deterministic low-discrepancy points in the disk `|z| < radius`.
pub fn sample_points(n: usize, radius: f64) -> Vec<Complex64> {
    let (a1, a2) = (0.754_877_666_246_692_8, 0.569_840_290_998_053_3);
    (1..=n)
        .map(|k| {
            let (u, v) = ((k as f64 * a1).fract(), (k as f64 * a2).fract());
            Complex64::from_polar(radius * u.sqrt(), 2.0 * PI * v)
        })
        .collect()
}

fn sample_radius(g: &PhaseSpace) -> f64 {
    if g.kind() == Kind::Disk {
        0.8
    } else {
        2.0
    }
}

fn geometries() -> Vec<PhaseSpace> {
    vec![
        PhaseSpace::sphere(2.5).expect("valid"),
        PhaseSpace::plane(1.5).expect("valid"),
        PhaseSpace::disk(1.5).expect("valid"),
    ]
}

fn worst<T>(items: impl IntoIterator<Item = T>, f: impl Fn(T) -> Result<f64>) -> Result<f64> {
    let mut m: f64 = 0.0;
    for item in items {
        let v = f(item)?;
        if !v.is_finite() {
            return Ok(f64::INFINITY);
        }
        m = m.max(v);
    }
    Ok(m)
}

fn compiled(ex: &Example) -> Result<CompiledHamiltonian> {
    CompiledHamiltonian::new(&ex.spec, &ex.geometry)
}

fn geometry_invariants(hooks: &Hooks) -> Vec<Check> {
    let mut checks = Vec::new();
    checks.push(Check::attempt(
        "geometry: overlap hermiticity",
        None,
        1e-12,
        || {
            worst(geometries(), |g| {
                let pts = sample_points(101, sample_radius(&g));
                worst(pts.windows(2), |w| {
                    Ok((g.overlap(w[0], w[1])? - g.overlap(w[1], w[0])?.conj()).norm())
                })
            })
        },
    ));
    checks.push(Check::attempt(
        "geometry: Cauchy-Schwarz bound",
        None,
        0.0,
        || {
            worst(geometries(), |g| {
                let pts = sample_points(101, sample_radius(&g));
                worst(pts.windows(2), |w| {
                    Ok((g.overlap(w[0], w[1])?.norm() - 1.0).max(0.0))
                })
            })
        },
    ));
    checks.push(Check::attempt(
        "geometry: potential linear in weight",
        None,
        1e-12,
        || {
            worst(geometries(), |g| {
                let unit = g.with_weight(if g.kind() == Kind::Disk { 1.5 } else { 1.0 })?;
                let scaled = unit.with_weight(unit.weight() * 6.0)?;
                worst(sample_points(50, 0.7), |z| {
                    let zb = z.conj() * 0.9;
                    let a = scaled.kahler_potential(zb, z)?;
                    Ok((a - 6.0 * unit.kahler_potential(zb, z)?).norm() / a.norm().max(1.0))
                })
            })
        },
    ));
    let delta = hooks.metric_perturbation;
    checks.push(Check::attempt(
        "geometry: metric equals mixed derivative of potential",
        None,
        1e-6,
        || {
            worst(geometries(), |g| {
                let f = |a: Complex64, b: Complex64| {
                    g.kahler_potential(a, b).unwrap_or(c(f64::NAN, f64::NAN))
                };
                worst(sample_points(50, sample_radius(&g) * 0.9), |z| {
                    let step = if g.kind() == Kind::Disk {
                        FD_STEP.min((1.0 - z.norm()) / 4.0)
                    } else {
                        FD_STEP
                    };
                    let fd = g.mixed_derivative_fd(&f, z.conj(), z, step)?;
                    let m = g.metric(z.conj(), z)? + delta;
                    Ok(relative(fd, m))
                })
            })
        },
    ));
    checks
}

fn symbol_invariants() -> Vec<Check> {
    let mut checks = Vec::new();
    checks.push(Check::attempt(
        "symbols: agreement with oracle matrix elements",
        None,
        1e-10,
        || {
            let mut cases = Vec::new();
            for j in [0.5, 1.0, 5.0] {
                for g in [Generator::Raise, Generator::Lower, Generator::Cartan] {
                    let spec = HamiltonianSpec::zero(Algebra::Su2)
                        .with_term(Term::new(vec![g], TimeCoefficient::constant(c(1.0, 0.0))));
                    cases.push((spec, PhaseSpace::sphere(j)?, 0));
                }
                if j > 0.5 {
                    cases.push((
                        HamiltonianSpec::two_axis_twisting(1.0),
                        PhaseSpace::sphere(j)?,
                        0,
                    ));
                }
            }
            cases.push((
                HamiltonianSpec::parametric_amplifier(0.4, 0.7),
                PhaseSpace::plane(1.0)?,
                64,
            ));
            cases.push((su11_linear(0.3, c(0.2, -0.1)), PhaseSpace::disk(1.5)?, 128));
            worst(cases, |(spec, g, dim)| {
                let system = ExactSystem::new(&spec, &g, dim)?;
                let ham = CompiledHamiltonian::new(&spec, &g)?;
                let rep = *system.representation();
                let pts = sample_points(6, 0.6);
                worst(pts.windows(2), |w| {
                    let v1 = coherent_vector(&rep, &g, w[0])?.coefficients;
                    let v2 = coherent_vector(&rep, &g, w[1])?.coefficients;
                    let expected = v1.dotc(&(system.hamiltonian(0.37) * &v2)) / v1.dotc(&v2);
                    let value = ham.symbol(w[0].conj(), w[1], 0.37)?.value;
                    Ok((value - expected).norm() / expected.norm().max(1.0))
                })
            })
        },
    ));
    checks.push(Check::attempt(
        "symbols: diagonal symbols are real",
        None,
        1e-12,
        || {
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                worst(
                    sample_points(100, sample_radius(&ex.geometry) * 0.75),
                    |z| {
                        let v = ham.symbol(z.conj(), z, 0.7)?.value;
                        Ok(v.im.abs() / v.norm().max(1.0))
                    },
                )
            })
        },
    ));
    checks.push(Check::attempt(
        "symbols: gradients match finite differences",
        None,
        1e-6,
        || {
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                let pts = sample_points(101, sample_radius(&ex.geometry) * 0.5);
                worst(pts.windows(2), |w| {
                    let (zb, z) = (w[0], w[1]);
                    let v = ham.symbol(zb, z, 0.3)?;
                    let value = |a: Complex64, b: Complex64| ham.symbol(a, b, 0.3).map(|s| s.value);
                    let h = 1e-3;
                    let d = |f: &dyn Fn(f64) -> Result<Complex64>| -> Result<Complex64> {
                        let one = (f(h)? - f(-h)?) / (2.0 * h);
                        let two = (f(2.0 * h)? - f(-2.0 * h)?) / (4.0 * h);
                        Ok((4.0 * one - two) / 3.0)
                    };
                    let dz = d(&|s| value(zb, z + s))?;
                    let dzb = d(&|s| value(zb + s, z))?;
                    let scale = (v.dz.norm() + v.dzbar.norm() + v.value.norm()).max(1.0);
                    Ok(((dz - v.dz).norm() + (dzb - v.dzbar).norm()) / scale)
                })
            })
        },
    ));
    checks
}

fn grid_derivative(values: &[Complex64], h: f64, k: usize) -> Complex64 {
    let v = |o: isize| values[(k as isize + o) as usize];
    (45.0 * (v(1) - v(-1)) - 9.0 * (v(2) - v(-2)) + (v(3) - v(-3))) / (60.0 * h)
}

fn dynamics_invariants() -> Vec<Check> {
    let settings = SolverSettings::default();
    let mut checks = Vec::new();
    checks.push(Check::attempt(
        "dynamics: flow residual on the grid",
        None,
        1e-7,
        || {
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                let traj = solve_trajectory(&ham, &ex.boundary, &settings)?;
                let flow = FlowField::new(&ham, f64::INFINITY);
                let h = traj.tau() / traj.steps() as f64;
                worst(3..traj.steps() - 2, |k| {
                    let (zd, zbd) =
                        flow.velocity(traj.grid[k], traj.zbar_path[k], traj.z_path[k])?;
                    Ok((grid_derivative(&traj.z_path, h, k) - zd)
                        .norm()
                        .max((grid_derivative(&traj.zbar_path, h, k) - zbd).norm()))
                })
            })
        },
    ));
    checks.push(Check::attempt(
        "dynamics: sensitivities match finite differences",
        None,
        1e-5,
        || {
            let h = 1e-6;
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                let bd = ex.boundary;
                let traj = solve_trajectory(&ham, &bd, &settings)?;
                let solve = |dz: f64, dzb: f64| {
                    solve_trajectory(
                        &ham,
                        &BoundaryData::new(bd.z_initial + dz, bd.zbar_final + dzb, bd.tau)?,
                        &settings,
                    )
                };
                let sz = (solve(h, 0.0)?.z_end() - solve(-h, 0.0)?.z_end()) / (2.0 * h);
                let szb = (solve(0.0, h)?.zbar_start() - solve(0.0, -h)?.zbar_start()) / (2.0 * h);
                Ok(relative(sz, traj.sens_z_initial).max(relative(szb, traj.sens_zbar_final)))
            })
        },
    ));
    checks.push(Check::attempt(
        "dynamics: short-time limits",
        None,
        10.0,
        || {
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                worst([1e-3, 1e-4], |tau| {
                    let bd = ex.boundary.with_tau(tau)?;
                    let traj = solve_trajectory(&ham, &bd, &settings)?;
                    let d = (traj.zbar_start() - bd.zbar_final)
                        .norm()
                        .max((traj.sens_z_initial - 1.0).norm())
                        .max((traj.sens_zbar_final - 1.0).norm());
                    Ok(d / (tau * ex.geometry.weight().max(1.0)))
                })
            })
        },
    ));
    checks
}

fn action_invariants() -> Vec<Check> {
    let settings = SolverSettings::default();
    let mut checks = Vec::new();
    checks.push(Check::attempt(
        "action: stationarity under path bumps",
        None,
        1e-8,
        || {
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                let traj = solve_trajectory(&ham, &ex.boundary, &settings)?;
                let phi0 = total_action(&traj, &ham, &ex.boundary)?.phi_c;
                let w = PI / traj.tau();
                let mut bumped = traj.clone();
                let eps = 1e-5;
                for k in 0..=bumped.steps() {
                    let s = bumped.grid[k];
                    let (b, db) = (eps * (w * s).sin(), eps * w * (w * s).cos());
                    bumped.z_path[k] += c(0.6, 0.8) * b;
                    bumped.zdot[k] += c(0.6, 0.8) * db;
                    bumped.zbar_path[k] += c(-0.3, 0.4) * b;
                    bumped.zbardot[k] += c(-0.3, 0.4) * db;
                }
                Ok((total_action(&bumped, &ham, &ex.boundary)?.phi_c - phi0).norm())
            })
        },
    ));
    checks.push(Check::attempt(
        "action: weight scaling of linear actions",
        None,
        1e-10,
        || {
            let spec = HamiltonianSpec::su2_linear(0.7, c(0.3, 0.2));
            let bd = BoundaryData::new(c(0.4, 0.0), c(-0.1, 0.5), 1.0)?;
            let run = |j: f64| -> Result<_> {
                let ham = CompiledHamiltonian::new(&spec, &PhaseSpace::sphere(j)?)?;
                Ok(solve_action(&ham, &bd, &settings)?.1)
            };
            let (one, two) = (run(2.5)?, run(5.0)?);
            Ok((two.phi_c - 2.0 * one.phi_c)
                .norm()
                .max((two.b_int - one.b_int).norm() / 10.0))
        },
    ));
    checks
}

fn semiclassics_invariants() -> Vec<Check> {
    let mut checks = Vec::new();
    checks.push(Check::attempt(
        "semiclassics: Killing defect of linear spin flow",
        None,
        1e-8,
        || {
            let g = PhaseSpace::sphere(5.0)?;
            let ham = CompiledHamiltonian::new(&HamiltonianSpec::su2_linear(0.7, c(0.3, 0.2)), &g)?;
            Ok(dh_exactness_probe(&ham, &default_probe_grid(&g), 0.0, 1e-2)?.defect)
        },
    ));
    checks.push(Check::attempt(
        "semiclassics: two-axis twisting flow is not Killing",
        None,
        0.0,
        || {
            let g = PhaseSpace::sphere(5.0)?;
            let ham = CompiledHamiltonian::new(&HamiltonianSpec::two_axis_twisting(1.0), &g)?;
            let r = dh_exactness_probe(&ham, &default_probe_grid(&g), 0.0, 1e-2)?;
            Ok(
                if r.defect > 1e-3 && r.verdict == DhVerdict::ExactNotExpected {
                    0.0
                } else {
                    1.0
                },
            )
        },
    ));
    checks.push(Check::attempt(
        "semiclassics: exact whenever the flow is Killing",
        None,
        1e-7,
        || {
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                let probe = dh_exactness_probe(&ham, &default_probe_grid(&ex.geometry), 0.0, 1e-2)?;
                if probe.verdict != DhVerdict::ExactExpected {
                    return Ok(0.0);
                }
                let bd = ex.boundary;
                let r = propagator_qc(&ham, &bd, &Settings::default())?;
                let exact = exact_amplitude(
                    &ex.spec,
                    &ex.geometry,
                    bd.z_initial,
                    bd.z_final(),
                    bd.tau,
                    ex.truncation,
                )?;
                Ok(relative(r.amplitude, exact))
            })
        },
    ));
    checks.push(Check::attempt(
        "semiclassics: reduced prefactor squared times determinant",
        None,
        1e-6,
        || {
            let settings = Settings::default();
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                let r = propagator_qc(&ham, &ex.boundary, &settings)?;
                let traj = solve_trajectory(&ham, &ex.boundary, &settings.solver)?;
                let det = det_ratio_jacobi(&solve_jacobi(&traj, &ham, &settings.solver)?)?;
                Ok((r.reduced * r.reduced * det - 1.0).norm())
            })
        },
    ));
    checks
}

fn timed(name: &str, criterion: u8, limit: f64, start: Instant) -> Check {
    Check::at_most(name, Some(criterion), start.elapsed().as_secs_f64(), limit)
}

fn criterion_1() -> Vec<Check> {
    let spec = HamiltonianSpec::su2_linear(0.7, c(0.3, 0.2));
    let mut checks = Vec::new();
    let mut slowest: f64 = 0.0;
    let outcome = (|| -> Result<(f64, f64)> {
        let bd = BoundaryData::new(c(0.4, 0.0), c(-0.1, 0.5), 1.0)?;
        let (mut err, mut red): (f64, f64) = (0.0, 0.0);
        for j in [0.5, 1.0, 2.0, 5.0, 10.0] {
            let start = Instant::now();
            let g = PhaseSpace::sphere(j)?;
            let r = propagator_qc(
                &CompiledHamiltonian::new(&spec, &g)?,
                &bd,
                &Settings::default(),
            )?;
            let exact = exact_amplitude(&spec, &g, bd.z_initial, bd.z_final(), bd.tau, 0)?;
            slowest = slowest.max(start.elapsed().as_secs_f64());
            err = err.max(relative(r.amplitude, exact));
            red = red.max((r.reduced - 1.0).norm());
        }
        Ok((err, red))
    })();
    match outcome {
        Ok((err, red)) => {
            checks.push(Check::at_most(
                "spin linear: qc vs exact",
                Some(1),
                err,
                1e-7,
            ));
            checks.push(Check::at_most(
                "spin linear: reduced prefactor equals 1",
                Some(1),
                red,
                1e-7,
            ));
            checks.push(Check::at_most(
                "spin linear: seconds per point",
                Some(1),
                slowest,
                1.0,
            ));
        }
        Err(e) => checks.push(Check::attempt("spin linear", Some(1), 1e-7, || Err(e))),
    }
    checks
}

fn criterion_2() -> Vec<Check> {
    let start = Instant::now();
    let omega = 0.9;
    let spec = HamiltonianSpec::oscillator(omega);
    let points = [
        (c(0.3, 0.2), c(0.1, -0.4), 1.2),
        (c(1.5, 0.5), c(-1.2, 0.8), 2.0),
        (c(-1.9, 0.3), c(0.4, 1.8), 0.7),
    ];
    let run = |oracle: bool| {
        worst(points, |(z, zb, tau)| {
            let g = PhaseSpace::plane(1.0)?;
            let bd = BoundaryData::new(z, zb, tau)?;
            let r = propagator_qc(
                &CompiledHamiltonian::new(&spec, &g)?,
                &bd,
                &Settings::default(),
            )?;
            if oracle {
                Ok(relative(
                    r.amplitude,
                    exact_amplitude(&spec, &g, z, bd.z_final(), tau, 64)?,
                ))
            } else {
                let zf = bd.z_final();
                let closed = (zb * z * (-I * omega * tau).exp()
                    - 0.5 * (zf.norm_sqr() + z.norm_sqr()))
                .exp();
                Ok((r.amplitude - closed).norm())
            }
        })
    };
    vec![
        Check::attempt("oscillator: qc vs closed form", Some(2), 1e-10, || {
            run(false)
        }),
        Check::attempt(
            "oscillator: qc vs Fock oracle (N = 64)",
            Some(2),
            1e-9,
            || run(true),
        ),
        timed("oscillator: seconds", 2, 1.0, start),
    ]
}

/// Closed-form amplifier exponent. Without `rotate` the `z̄_F²` term lacks
/// its `e^{−2iωτ}`, which is only right at `ω = 0`.
fn amplifier_phi(omega: f64, g: f64, bd: &BoundaryData, rotate: bool) -> Complex64 {
    let (z, zb, tau) = (bd.z_initial, bd.zbar_final, bd.tau);
    let rot = (-I * omega * tau).exp();
    let square = if rotate { zb * zb * rot * rot } else { zb * zb };
    zb * z * rot / (g * tau).cosh() + 0.5 * I * (g * tau).tanh() * (square + z * z)
        - 0.5 * (zb.norm_sqr() + z.norm_sqr())
}

fn criterion_3() -> Vec<Check> {
    let start = Instant::now();
    let run = |omega: f64, rotate: bool, oracle: bool| {
        worst([0.25, 0.5, 1.0], |g| {
            let geometry = PhaseSpace::plane(1.0)?;
            let bd = BoundaryData::new(c(0.3, -0.2), c(0.2, 0.4), 1.0)?;
            let spec = HamiltonianSpec::parametric_amplifier(omega, g);
            let r = propagator_qc(
                &CompiledHamiltonian::new(&spec, &geometry)?,
                &bd,
                &Settings::default(),
            )?;
            let reference = if oracle {
                exact_amplitude(&spec, &geometry, bd.z_initial, bd.z_final(), bd.tau, 128)?
            } else {
                (g * bd.tau).cosh().powf(-0.5) * amplifier_phi(omega, g, &bd, rotate).exp()
            };
            Ok(relative(r.amplitude, reference))
        })
    };
    let mut checks = vec![
        Check::attempt(
            "amplifier: qc vs closed form (resonant frame)",
            Some(3),
            1e-8,
            || run(0.0, false, false),
        ),
        Check::attempt(
            "amplifier: qc vs Fock oracle (omega = 0)",
            Some(3),
            1e-7,
            || run(0.0, false, true),
        ),
        timed("amplifier: seconds", 3, 5.0, start),
    ];
    checks.push(Check::attempt(
        "amplifier: qc vs phase-corrected closed form (omega = 0.8)",
        Some(3),
        1e-8,
        || run(0.8, true, false),
    ));
    checks.push(Check::attempt(
        "amplifier: qc vs Fock oracle (omega = 0.8)",
        Some(3),
        1e-7,
        || run(0.8, false, true),
    ));
    checks
}

/// Weight-convergence experiment on the two-axis twisting Hamiltonian.
pub fn twisting_convergence_config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "geometry": {"kind": "sphere", "weight": 10},
            "hamiltonian": [
                {"generators": ["J+", "J+"], "lnorm": "quadratic"},
                {"generators": ["J-", "J-"], "lnorm": "quadratic"}
            ],
            "boundary": {"z_I": {"re": 0.3}, "zbar_F": {"re": 0.2}, "tau": 0.5},
            "mode": "convergence",
            "sweep": [{"path": "geometry.weight", "values": [10, 20, 40, 80]}]
        }"#,
    )
    .expect("built-in config parses")
}

fn criterion_4() -> Vec<Check> {
    let start = Instant::now();
    match run_convergence(&twisting_convergence_config(), 1) {
        Ok(report) => {
            let errors: Vec<String> = report
                .points
                .iter()
                .map(|p| format!("{:.3e}", p.relative_error))
                .collect();
            let slope = report.slope.unwrap_or(f64::NAN);
            vec![
                Check::at_most(
                    "two-axis twisting: errors strictly decrease",
                    Some(4),
                    if report.monotone_decreasing && report.points.len() == 4 {
                        0.0
                    } else {
                        1.0
                    },
                    0.0,
                )
                .with_detail(errors.join(", ")),
                Check {
                    passed: (-2.0..=-0.5).contains(&slope),
                    ..Check::at_most(
                        "two-axis twisting: log-log slope in [-2, -0.5]",
                        Some(4),
                        slope,
                        -0.5,
                    )
                },
                timed("two-axis twisting: seconds", 4, 30.0, start),
            ]
        }
        Err(e) => vec![Check {
            detail: format!("{}: {e}", e.code()),
            passed: false,
            ..Check::at_most("two-axis twisting convergence", Some(4), f64::NAN, 0.0)
        }],
    }
}

fn criterion_5() -> Vec<Check> {
    let settings = SolverSettings::default();
    let forms = Check::attempt(
        "determinant: Jacobi vs sensitivity product",
        Some(5),
        1e-6,
        || {
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                let (traj, action) = solve_action(&ham, &ex.boundary, &settings)?;
                let det = det_ratio_jacobi(&solve_jacobi(&traj, &ham, &settings)?)?;
                Ok(relative(
                    det,
                    det_ratio_from_sensitivities(&traj, &ex.geometry, action.b_int)?,
                ))
            })
        },
    );
    let drift = Check::attempt("determinant: Wronskian drift", Some(5), 1e-8, || {
        worst(bundled_examples(), |ex| {
            let ham = compiled(&ex)?;
            let traj = solve_trajectory(&ham, &ex.boundary, &settings)?;
            Ok(solve_jacobi(&traj, &ham, &settings)?.wronskian_drift)
        })
    });
    vec![forms, drift]
}

fn criterion_6() -> Vec<Check> {
    let settings = SolverSettings::default();
    vec![
        Check::attempt("action: theta identity defect", Some(6), 1e-8, || {
            worst(bundled_examples(), |ex| {
                let ham = compiled(&ex)?;
                let (traj, _) = solve_action(&ham, &ex.boundary, &settings)?;
                theta_identity_check(&traj, &ham, &ex.boundary)
            })
        }),
        Check::attempt(
            "action: mixed derivative vs finite differences",
            Some(6),
            1e-5,
            || {
                worst(bundled_examples(), |ex| {
                    let ham = compiled(&ex)?;
                    let traj = solve_trajectory(&ham, &ex.boundary, &settings)?;
                    let m = mixed_second_derivative(&traj, &ex.geometry)?.value;
                    let fd = mixed_second_derivative_fd(
                        &ham,
                        &ex.boundary,
                        &settings,
                        FD_BOUNDARY_STEP,
                    )?
                    .value;
                    Ok(relative(fd, m))
                })
            },
        ),
        Check::attempt(
            "action: free action equals log overlap",
            Some(6),
            1e-10,
            || {
                worst(geometries(), |g| {
                    let ham = CompiledHamiltonian::new(
                        &HamiltonianSpec::zero(Algebra::for_kind(g.kind())),
                        &g,
                    )?;
                    let bd = BoundaryData::new(c(0.35, -0.2), c(0.1, 0.45), 1.3)?;
                    let (_, a) = solve_action(&ham, &bd, &settings)?;
                    Ok((a.phi_c - g.log_overlap(bd.zbar_final, bd.z_initial)?).norm())
                })
            },
        ),
    ]
}

fn commutator(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a * b - b * a
}

/// Largest entry of `m` outside the last row and column.
fn interior_max(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows() - 1;
    m.view((0, 0), (n, n)).camax()
}

fn resolution_defect(two_j: u32) -> Result<f64> {
    let legendre = GaussLegendre::new(40).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let g = PhaseSpace::new(Kind::Sphere, two_j as f64)?;
    let rep = Representation::for_geometry(&g, 0)?;
    let dim = rep.dimension();
    let angles = 16;
    let mut total = DMatrix::<Complex64>::zeros(dim, dim);
    // s = |z|²/(1 + |z|²) maps the plane onto [0, 1) with dμ = (l + 1) ds dθ/2π
    for (s, w) in legendre.nodes().zip(legendre.weights()) {
        let s = 0.5 * (s + 1.0);
        let r = (s / (1.0 - s)).sqrt();
        for k in 0..angles {
            let z = Complex64::from_polar(r, 2.0 * PI * k as f64 / angles as f64);
            let v = coherent_vector(&rep, &g, z)?.coefficients;
            total += (&v * v.adjoint()) * c(0.5 * w * (g.weight() + 1.0) / angles as f64, 0.0);
        }
    }
    Ok((total - DMatrix::identity(dim, dim)).camax())
}

fn criterion_7() -> Vec<Check> {
    let commutators = Check::attempt("oracle: commutator defects", Some(7), 1e-12, || {
        let mut m: f64 = 0.0;
        for two_j in [1u32, 2, 5, 20] {
            let s = generator_matrices(&Representation::Su2 { two_j });
            m = m.max((commutator(&s.cartan, &s.raise) - &s.raise).camax());
            m = m.max((commutator(&s.cartan, &s.lower) + &s.lower).camax());
            m = m.max((commutator(&s.raise, &s.lower) - &s.cartan * c(2.0, 0.0)).camax());
        }
        let h = generator_matrices(&Representation::Hw { dim: 64 });
        let id = DMatrix::<Complex64>::identity(64, 64);
        m = m.max(interior_max(&(commutator(&h.lower, &h.raise) - &id)));
        let k = generator_matrices(&Representation::Su11 {
            two_k: 3.0,
            dim: 64,
        });
        m = m.max(interior_max(&(commutator(&k.cartan, &k.raise) - &k.raise)));
        m = m.max(interior_max(
            &(commutator(&k.raise, &k.lower) + &k.cartan * c(2.0, 0.0)),
        ));
        Ok(m)
    });
    let unitarity = Check::attempt("oracle: unitarity of evolution", Some(7), 1e-10, || {
        worst(bundled_examples(), |ex| {
            let u = ExactSystem::new(&ex.spec, &ex.geometry, ex.truncation)?
                .evolution(ex.boundary.tau)?;
            let n = u.nrows();
            Ok((u.adjoint() * &u - DMatrix::<Complex64>::identity(n, n)).camax())
        })
    });
    let resolution = Check::attempt(
        "oracle: resolution of unity (j <= 2)",
        Some(7),
        1e-6,
        || worst(1..=4u32, resolution_defect),
    );
    let overlaps = Check::attempt(
        "oracle: coherent overlaps vs geometry",
        Some(7),
        1e-10,
        || {
            worst(
                [
                    (PhaseSpace::sphere(3.0)?, 0),
                    (PhaseSpace::plane(1.0)?, 64),
                    (PhaseSpace::disk(1.5)?, 128),
                ],
                |(g, dim)| {
                    let rep = Representation::for_geometry(&g, dim)?;
                    let radius = if g.kind() == Kind::Disk { 0.6 } else { 2.0 };
                    let pts = sample_points(12, radius);
                    worst(pts.windows(2), |w| {
                        let a = coherent_vector(&rep, &g, w[0])?.coefficients;
                        let b = coherent_vector(&rep, &g, w[1])?.coefficients;
                        Ok((a.dotc(&b) - g.overlap(w[0], w[1])?).norm())
                    })
                },
            )
        },
    );
    vec![commutators, unitarity, resolution, overlaps]
}

fn criterion_8() -> Vec<Check> {
    let start = Instant::now();
    let spread = Check::attempt(
        "alpha scheme: oscillator amplitude spread",
        Some(8),
        1e-9,
        || {
            let g = PhaseSpace::plane(1.0)?;
            let ham = CompiledHamiltonian::new(&HamiltonianSpec::oscillator(1.4), &g)?;
            let bd = BoundaryData::new(c(0.5, -0.3), c(-0.2, 0.6), 0.9)?;
            let settings = Settings::default();
            let reference = propagator_flat_alpha(&ham, &bd, 0.0, &settings)?.amplitude;
            worst([0.5, 1.0], |a| {
                Ok((propagator_flat_alpha(&ham, &bd, a, &settings)?.amplitude - reference).norm())
            })
        },
    );
    vec![spread, timed("alpha scheme: seconds", 8, 1.0, start)]
}

pub const CRITERIA: [&str; 8] = [
    "SU(2) WKB exactness",
    "harmonic oscillator",
    "parametric amplifier",
    "quasiclassical convergence",
    "determinant identity",
    "action identities",
    "oracle self-consistency",
    "alpha scheme",
];

pub fn criterion(n: u8) -> Vec<Check> {
    match n {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        _ => Vec::new(),
    }
}

fn config_check(config: Option<&ExperimentConfig>) -> Check {
    let fallback = default_config();
    let config = config.unwrap_or(&fallback);
    match run_propagate(config, false) {
        Ok(r) if r.status != Status::Error => Check::at_most(
            "config: propagation runs",
            None,
            r.relative_error.unwrap_or(0.0),
            f64::INFINITY,
        ),
        Ok(r) => Check {
            detail: r
                .error
                .map(|e| format!("{}: {}", e.code, e.message))
                .unwrap_or_default(),
            passed: false,
            ..Check::at_most("config: propagation runs", None, f64::NAN, f64::INFINITY)
        },
        Err(e) => Check {
            detail: format!("{}: {e}", e.code()),
            passed: false,
            ..Check::at_most("config: propagation runs", None, f64::NAN, f64::INFINITY)
        },
    }
}

/// Every module invariant and acceptance criterion. A missing config runs
/// the built-in default experiment.
pub fn run_validate(config: Option<&ExperimentConfig>, hooks: &Hooks) -> SuiteReport {
    let mut checks = geometry_invariants(hooks);
    checks.extend(symbol_invariants());
    checks.extend(dynamics_invariants());
    checks.extend(action_invariants());
    checks.extend(semiclassics_invariants());
    checks.push(config_check(config));
    for n in 1..=8 {
        checks.extend(criterion(n));
    }
    SuiteReport { checks }
}
