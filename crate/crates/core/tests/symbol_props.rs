mod common;

use common::{c, examples, su11_linear};
use num_complex::Complex64;
use proptest::prelude::*;
use qcprop::exact::{coherent_vector, ExactSystem};
use qcprop::geometry::{derivative_stencil, Kind, PhaseSpace};
use qcprop::symbols::{
    contravariant_asymptotic, Algebra, CompiledHamiltonian, Generator, HamiltonianSpec,
    SymbolDirection, Term, TimeCoefficient,
};

fn scale_for(g: &PhaseSpace) -> f64 {
    if g.kind() == Kind::Disk {
        0.6
    } else {
        1.5
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradients_match_finite_differences(
        ar in -1.0..1.0f64, ai in -1.0..1.0f64, br in -1.0..1.0f64, bi in -1.0..1.0f64, t in 0.0..2.0f64,
    ) {
        for ex in examples() {
            let ham = CompiledHamiltonian::new(&ex.spec, &ex.geometry).unwrap();
            let s = scale_for(&ex.geometry) / 1.5f64.sqrt();
            let (zb, z) = (c(ar, ai) * s, c(br, bi) * s);
            let pole = match ex.geometry.kind() {
                Kind::Sphere => (1.0 + zb * z).norm(),
                Kind::Disk => (1.0 - zb * z).norm(),
                Kind::Plane => 1.0,
            };
            if pole < 0.3 {
                continue;
            }
            let v = ham.symbol(zb, z, t).unwrap();
            let dz = derivative_stencil(|w| ham.symbol(zb, w, t).unwrap().value, z, 1e-3);
            let dzb = derivative_stencil(|w| ham.symbol(w, z, t).unwrap().value, zb, 1e-3);
            let tol = 1e-6 * (v.dz.norm() + v.dzbar.norm() + v.value.norm()).max(1.0);
            prop_assert!((dz - v.dz).norm() <= tol, "{}", ex.name);
            prop_assert!((dzb - v.dzbar).norm() <= tol, "{}", ex.name);
        }
    }

    #[test]
    fn diagonal_symbols_are_real(r in 0.0..1.0f64, phase in 0.0..6.3f64, t in 0.0..3.0f64) {
        for ex in examples() {
            let ham = CompiledHamiltonian::new(&ex.spec, &ex.geometry).unwrap();
            let z = Complex64::from_polar(r * scale_for(&ex.geometry), phase);
            let v = ham.symbol(z.conj(), z, t).unwrap().value;
            prop_assert!(v.im.abs() <= 1e-12 * v.norm().max(1.0), "{} {v}", ex.name);
        }
    }

    #[test]
    fn generator_symbols_scale_with_weight(ar in -1.0..1.0f64, ai in -1.0..1.0f64, t in 0.0..1.0f64) {
        let z = c(ar, ai) * 0.5;
        for (algebra, kind) in [(Algebra::Su2, Kind::Sphere), (Algebra::Su11, Kind::Disk)] {
            for g in [Generator::Raise, Generator::Lower, Generator::Cartan] {
                let spec = HamiltonianSpec::zero(algebra).with_term(Term::new(vec![g], TimeCoefficient::constant(c(1.0, 0.0))));
                let per_weight: Vec<Complex64> = [2.0, 4.0, 20.0]
                    .iter()
                    .map(|&l| {
                        let geometry = PhaseSpace::new(kind, l).unwrap();
                        CompiledHamiltonian::new(&spec, &geometry).unwrap().symbol(z.conj(), z, t).unwrap().value / l
                    })
                    .collect();
                prop_assert!((per_weight[0] - per_weight[1]).norm() <= 1e-12);
                prop_assert!((per_weight[0] - per_weight[2]).norm() <= 1e-12);
            }
        }
    }
}

#[test]
fn symbols_equal_normalized_matrix_elements() {
    let points = [(c(0.2, -0.3), c(-0.4, 0.1)), (c(0.5, 0.5), c(0.3, -0.6))];
    let mut cases: Vec<(HamiltonianSpec, PhaseSpace, usize)> = Vec::new();
    for j in [0.5, 1.0, 5.0] {
        for g in [Generator::Raise, Generator::Lower, Generator::Cartan] {
            let spec = HamiltonianSpec::zero(Algebra::Su2)
                .with_term(Term::new(vec![g], TimeCoefficient::constant(c(1.0, 0.0))));
            cases.push((spec, PhaseSpace::sphere(j).unwrap(), 0));
        }
        if j > 0.5 {
            cases.push((
                HamiltonianSpec::two_axis_twisting(1.0),
                PhaseSpace::sphere(j).unwrap(),
                0,
            ));
        }
    }
    cases.push((
        HamiltonianSpec::parametric_amplifier(0.4, 0.7),
        PhaseSpace::plane(1.0).unwrap(),
        64,
    ));
    cases.push((
        su11_linear(0.3, c(0.2, -0.1)),
        PhaseSpace::disk(1.5).unwrap(),
        128,
    ));
    for (spec, geometry, dim) in cases {
        let system = ExactSystem::new(&spec, &geometry, dim).unwrap();
        let ham = CompiledHamiltonian::new(&spec, &geometry).unwrap();
        let rep = *system.representation();
        for (z1, z2) in points {
            let t = 0.37;
            let v1 = coherent_vector(&rep, &geometry, z1).unwrap().coefficients;
            let v2 = coherent_vector(&rep, &geometry, z2).unwrap().coefficients;
            let expected = v1.dotc(&(system.hamiltonian(t) * &v2)) / v1.dotc(&v2);
            let value = ham.symbol(z1.conj(), z2, t).unwrap().value;
            assert!(
                (value - expected).norm() <= 1e-10 * expected.norm().max(1.0),
                "{spec:?}"
            );
        }
    }
}

#[test]
fn berezin_round_trip_is_second_order() {
    let z = c(0.4, -0.3);
    let mut deviations = Vec::new();
    for j in [5.0, 10.0, 20.0] {
        let g = PhaseSpace::sphere(j).unwrap();
        let spec = HamiltonianSpec::zero(Algebra::Su2).with_term(Term::new(
            vec![Generator::Cartan],
            TimeCoefficient::constant(c(1.0, 0.0)),
        ));
        let ham = CompiledHamiltonian::new(&spec, &g).unwrap();
        let field = ham.at_time(0.0);
        let contravariant = |zb: Complex64, w: Complex64| {
            contravariant_asymptotic(&field, &g, zb, w, SymbolDirection::ToContravariant).unwrap()
        };
        let back = contravariant_asymptotic(
            &contravariant,
            &g,
            z.conj(),
            z,
            SymbolDirection::ToCovariant,
        )
        .unwrap();
        let original = ham.symbol(z.conj(), z, 0.0).unwrap().value;
        deviations.push(((back - original) / original).norm() * j * j);
    }
    assert!(deviations.iter().all(|d| *d <= 1.5), "{deviations:?}");
}
