#![allow(dead_code)]

use num_complex::Complex64;
use qcprop::dynamics::BoundaryData;
use qcprop::geometry::PhaseSpace;
use qcprop::symbols::{Algebra, Generator, HamiltonianSpec, Term, TimeCoefficient};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn relative(a: Complex64, b: Complex64) -> f64 {
    (a / b - 1.0).norm()
}

pub struct Example {
    pub name: &'static str,
    pub spec: HamiltonianSpec,
    pub geometry: PhaseSpace,
    pub boundary: BoundaryData,
    /// Truncation for the infinite-dimensional oracles.
    pub dim: usize,
}

pub fn su11_linear(a: f64, f: Complex64) -> HamiltonianSpec {
    let k = TimeCoefficient::constant;
    HamiltonianSpec::zero(Algebra::Su11)
        .with_term(Term::new(vec![Generator::Cartan], k(c(2.0 * a, 0.0))))
        .with_term(Term::new(vec![Generator::Raise], k(f)))
        .with_term(Term::new(vec![Generator::Lower], k(f.conj())))
}

/// `2A J₀ + f e^{−iνt} J₊ + f̄ e^{iνt} J₋`.
pub fn su2_driven(a: f64, f: Complex64, nu: f64) -> HamiltonianSpec {
    HamiltonianSpec::zero(Algebra::Su2)
        .with_term(Term::new(
            vec![Generator::Cartan],
            TimeCoefficient::constant(c(2.0 * a, 0.0)),
        ))
        .with_term(Term::new(
            vec![Generator::Raise],
            TimeCoefficient::exp(f, -nu),
        ))
        .with_term(Term::new(
            vec![Generator::Lower],
            TimeCoefficient::exp(f.conj(), nu),
        ))
}

pub fn examples() -> Vec<Example> {
    let bd = |z: Complex64, zb: Complex64, tau: f64| BoundaryData::new(z, zb, tau).unwrap();
    vec![
        Example {
            name: "free sphere",
            spec: HamiltonianSpec::zero(Algebra::Su2),
            geometry: PhaseSpace::sphere(2.5).unwrap(),
            boundary: bd(c(0.3, 0.5), c(-0.4, 0.2), 0.8),
            dim: 0,
        },
        Example {
            name: "spin linear",
            spec: HamiltonianSpec::su2_linear(0.7, c(0.3, 0.2)),
            geometry: PhaseSpace::sphere(5.0).unwrap(),
            boundary: bd(c(0.4, 0.0), c(-0.1, 0.5), 1.0),
            dim: 0,
        },
        Example {
            name: "spin driven",
            spec: su2_driven(0.4, c(0.5, -0.2), 1.3),
            geometry: PhaseSpace::sphere(3.0).unwrap(),
            boundary: bd(c(-0.2, 0.6), c(0.5, 0.1), 1.5),
            dim: 0,
        },
        Example {
            name: "oscillator",
            spec: HamiltonianSpec::oscillator(0.9),
            geometry: PhaseSpace::plane(1.0).unwrap(),
            boundary: bd(c(0.3, 0.2), c(0.1, -0.4), 1.2),
            dim: 64,
        },
        Example {
            name: "parametric amplifier",
            spec: HamiltonianSpec::parametric_amplifier(0.8, 0.5),
            geometry: PhaseSpace::plane(1.0).unwrap(),
            boundary: bd(c(0.3, -0.2), c(0.2, 0.4), 1.0),
            dim: 128,
        },
        Example {
            name: "two-axis twisting",
            spec: HamiltonianSpec::two_axis_twisting(1.0),
            geometry: PhaseSpace::sphere(5.0).unwrap(),
            boundary: bd(c(0.3, 0.0), c(0.2, 0.0), 0.5),
            dim: 0,
        },
        Example {
            name: "disk linear",
            spec: su11_linear(0.6, c(0.2, 0.1)),
            geometry: PhaseSpace::disk(1.5).unwrap(),
            boundary: bd(c(0.3, 0.1), c(0.2, -0.3), 1.0),
            dim: 160,
        },
    ]
}
