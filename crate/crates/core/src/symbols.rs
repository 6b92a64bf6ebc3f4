//! Covariant symbols `H(z̄, z; t) = ⟨z₁|H(t)|z₂⟩/⟨z₁|z₂⟩` of polynomial
//! Hamiltonians in the algebra generators, with analytic chart derivatives
//! up to second order.
//!
//! Single generators use closed forms. Products of generators are evaluated
//! from the finite-dimensional representation matrices: the unnormalized
//! matrix element `(z₁|P|z₂) = Σ c_m c_n P_mn z̄₁^m z₂^n` is a polynomial, and
//! the symbol is that polynomial divided by the coherent-state kernel.

use std::ops::{Add, AddAssign, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Representation};
use crate::geometry::{Kind, PhaseSpace, ScalarField};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algebra {
    #[serde(rename = "su2")]
    Su2,
    #[serde(rename = "hw")]
    Hw,
    #[serde(rename = "su11")]
    Su11,
}

impl Algebra {
    pub fn for_kind(kind: Kind) -> Self {
        match kind {
            Kind::Sphere => Algebra::Su2,
            Kind::Plane => Algebra::Hw,
            Kind::Disk => Algebra::Su11,
        }
    }

    pub fn kind(self) -> Kind {
        match self {
            Algebra::Su2 => Kind::Sphere,
            Algebra::Hw => Kind::Plane,
            Algebra::Su11 => Kind::Disk,
        }
    }
}

/// Algebra generator. On the plane `Raise`/`Lower` are `a†`/`a` and `Cartan`
/// is the number operator `a†a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Generator {
    Raise,
    Lower,
    Cartan,
    Identity,
}

impl Generator {
    pub fn parse(algebra: Algebra, name: &str) -> Result<Self> {
        let g = match (algebra, name.trim()) {
            (_, "1" | "I" | "id") => Generator::Identity,
            (Algebra::Su2, "J+") | (Algebra::Su11, "K+") => Generator::Raise,
            (Algebra::Su2, "J-") | (Algebra::Su11, "K-") => Generator::Lower,
            (Algebra::Su2, "J0" | "Jz") | (Algebra::Su11, "K0") => Generator::Cartan,
            (Algebra::Hw, "a+" | "ad" | "a†" | "adag") => Generator::Raise,
            (Algebra::Hw, "a") => Generator::Lower,
            (Algebra::Hw, "n" | "a+a" | "a†a") => Generator::Cartan,
            (_, other) => return Err(Error::UnknownGenerator(other.to_string())),
        };
        Ok(g)
    }

    pub fn name(self, algebra: Algebra) -> &'static str {
        match (algebra, self) {
            (_, Generator::Identity) => "1",
            (Algebra::Su2, Generator::Raise) => "J+",
            (Algebra::Su2, Generator::Lower) => "J-",
            (Algebra::Su2, Generator::Cartan) => "J0",
            (Algebra::Hw, Generator::Raise) => "a+",
            (Algebra::Hw, Generator::Lower) => "a",
            (Algebra::Hw, Generator::Cartan) => "n",
            (Algebra::Su11, Generator::Raise) => "K+",
            (Algebra::Su11, Generator::Lower) => "K-",
            (Algebra::Su11, Generator::Cartan) => "K0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum TimeForm {
    Const,
    Exp { nu: f64 },
    Cos { nu: f64 },
    Sin { nu: f64 },
}

/// `c`, `c·e^{iνt}`, `c·cos νt` or `c·sin νt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeCoefficient {
    pub coeff: Complex64,
    pub form: TimeForm,
}

impl TimeCoefficient {
    pub fn constant(coeff: Complex64) -> Self {
        TimeCoefficient {
            coeff,
            form: TimeForm::Const,
        }
    }

    pub fn exp(coeff: Complex64, nu: f64) -> Self {
        TimeCoefficient {
            coeff,
            form: TimeForm::Exp { nu },
        }
    }

    pub fn value(&self, t: f64) -> Complex64 {
        let c = self.coeff;
        match self.form {
            TimeForm::Const => c,
            TimeForm::Exp { nu } => c * Complex64::new(0.0, nu * t).exp(),
            TimeForm::Cos { nu } => c * (nu * t).cos(),
            TimeForm::Sin { nu } => c * (nu * t).sin(),
        }
    }

    /// `∫₀ᵗ` of the coefficient.
    pub fn integral(&self, t: f64) -> Complex64 {
        let c = self.coeff;
        match self.form {
            TimeForm::Const => c * t,
            TimeForm::Exp { nu: 0.0 } => c * t,
            TimeForm::Exp { nu } => {
                c * (Complex64::new(0.0, nu * t).exp() - 1.0) / Complex64::new(0.0, nu)
            }
            TimeForm::Cos { nu: 0.0 } => c * t,
            TimeForm::Cos { nu } => c * (nu * t).sin() / nu,
            TimeForm::Sin { nu: 0.0 } => ZERO,
            TimeForm::Sin { nu } => c * (1.0 - (nu * t).cos()) / nu,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self.form {
            TimeForm::Const => true,
            TimeForm::Exp { nu } | TimeForm::Cos { nu } | TimeForm::Sin { nu } => nu == 0.0,
        }
    }
}

/// Weight normalization that keeps a product term's symbol `O(l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LNorm {
    #[default]
    None,
    /// `1/(2j − 1)` for quadratic SU(2) terms.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    /// Operator product, leftmost factor acts last.
    pub generators: Vec<Generator>,
    pub coeff: TimeCoefficient,
    pub lnorm: LNorm,
}

impl Term {
    pub fn new(generators: Vec<Generator>, coeff: TimeCoefficient) -> Self {
        Term {
            generators,
            coeff,
            lnorm: LNorm::None,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.generators.len() <= 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    pub algebra: Algebra,
    pub terms: Vec<Term>,
}

impl HamiltonianSpec {
    pub fn zero(algebra: Algebra) -> Self {
        HamiltonianSpec {
            algebra,
            terms: Vec::new(),
        }
    }

    pub fn with_term(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    /// Linear in the generators (the number operator counts as linear on the
    /// plane, where it generates the oscillator group).
    pub fn is_linear(&self) -> bool {
        self.terms.iter().all(Term::is_linear)
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.is_constant())
    }

    pub fn from_records(algebra: Algebra, records: &[TermRecord]) -> Result<Self> {
        let terms = records
            .iter()
            .map(|r| r.to_term(algebra))
            .collect::<Result<Vec<_>>>()?;
        Ok(HamiltonianSpec { algebra, terms })
    }

    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|t| TermRecord {
                generators: t
                    .generators
                    .iter()
                    .map(|g| g.name(self.algebra).to_string())
                    .collect(),
                coeff: t.coeff.coeff.into(),
                time: t.coeff.form,
                lnorm: t.lnorm,
            })
            .collect()
    }

    /// `2A J₀ + f J₊ + f̄ J₋` with constant coefficients.
    pub fn su2_linear(a: f64, f: Complex64) -> Self {
        let k = TimeCoefficient::constant;
        HamiltonianSpec::zero(Algebra::Su2)
            .with_term(Term::new(
                vec![Generator::Cartan],
                k(Complex64::new(2.0 * a, 0.0)),
            ))
            .with_term(Term::new(vec![Generator::Raise], k(f)))
            .with_term(Term::new(vec![Generator::Lower], k(f.conj())))
    }

    /// `ω a†a`.
    pub fn oscillator(omega: f64) -> Self {
        HamiltonianSpec::zero(Algebra::Hw).with_term(Term::new(
            vec![Generator::Cartan],
            TimeCoefficient::constant(Complex64::new(omega, 0.0)),
        ))
    }

    /// `ω a†a − (g/2)[a†² e^{−2iωt} + a² e^{2iωt}]`.
    pub fn parametric_amplifier(omega: f64, g: f64) -> Self {
        let half = Complex64::new(-0.5 * g, 0.0);
        HamiltonianSpec::oscillator(omega)
            .with_term(Term::new(
                vec![Generator::Raise, Generator::Raise],
                TimeCoefficient::exp(half, -2.0 * omega),
            ))
            .with_term(Term::new(
                vec![Generator::Lower, Generator::Lower],
                TimeCoefficient::exp(half, 2.0 * omega),
            ))
    }

    /// `(J₊² + J₋²)/(2j − 1)` scaled by `strength`.
    pub fn two_axis_twisting(strength: f64) -> Self {
        let k = TimeCoefficient::constant(Complex64::new(strength, 0.0));
        let mut raise = Term::new(vec![Generator::Raise, Generator::Raise], k);
        raise.lnorm = LNorm::Quadratic;
        let mut lower = Term::new(vec![Generator::Lower, Generator::Lower], k);
        lower.lnorm = LNorm::Quadratic;
        HamiltonianSpec::zero(Algebra::Su2)
            .with_term(raise)
            .with_term(lower)
    }
}

/// Config-file term: `{"generators": ["J+","J-"], "coeff": {"re": 1, "im": 0},
/// "time": {"form": "const"}, "lnorm": "none"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub generators: Vec<String>,
    #[serde(default = "ComplexRecord::one")]
    pub coeff: ComplexRecord,
    #[serde(default = "const_form")]
    pub time: TimeForm,
    #[serde(default)]
    pub lnorm: LNorm,
}

fn const_form() -> TimeForm {
    TimeForm::Const
}

impl TermRecord {
    pub fn to_term(&self, algebra: Algebra) -> Result<Term> {
        let generators = self
            .generators
            .iter()
            .map(|n| Generator::parse(algebra, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Term {
            generators,
            coeff: TimeCoefficient {
                coeff: self.coeff.into(),
                form: self.time,
            },
            lnorm: self.lnorm,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexRecord {
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl ComplexRecord {
    pub fn one() -> Self {
        ComplexRecord { re: 1.0, im: 0.0 }
    }
}

impl From<ComplexRecord> for Complex64 {
    fn from(c: ComplexRecord) -> Self {
        Complex64::new(c.re, c.im)
    }
}

impl From<Complex64> for ComplexRecord {
    fn from(c: Complex64) -> Self {
        ComplexRecord { re: c.re, im: c.im }
    }
}

/// A symbol value with its chart derivatives (slots independent).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymbolValue {
    pub value: Complex64,
    pub dz: Complex64,
    pub dzbar: Complex64,
    pub dzz: Complex64,
    pub dzbarzbar: Complex64,
    pub dzdzbar: Complex64,
}

impl Add for SymbolValue {
    type Output = SymbolValue;

    fn add(self, o: SymbolValue) -> SymbolValue {
        SymbolValue {
            value: self.value + o.value,
            dz: self.dz + o.dz,
            dzbar: self.dzbar + o.dzbar,
            dzz: self.dzz + o.dzz,
            dzbarzbar: self.dzbarzbar + o.dzbarzbar,
            dzdzbar: self.dzdzbar + o.dzdzbar,
        }
    }
}

impl AddAssign for SymbolValue {
    fn add_assign(&mut self, o: SymbolValue) {
        *self = *self + o;
    }
}

impl Mul<Complex64> for SymbolValue {
    type Output = SymbolValue;

    fn mul(self, c: Complex64) -> SymbolValue {
        SymbolValue {
            value: self.value * c,
            dz: self.dz * c,
            dzbar: self.dzbar * c,
            dzz: self.dzz * c,
            dzbarzbar: self.dzbarzbar * c,
            dzdzbar: self.dzdzbar * c,
        }
    }
}

impl SymbolValue {
    fn constant(value: Complex64) -> Self {
        SymbolValue {
            value,
            ..Default::default()
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.value,
            self.dz,
            self.dzbar,
            self.dzz,
            self.dzbarzbar,
            self.dzdzbar,
        ]
        .iter()
        .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Sparse polynomial `Σ a_mn z̄^m z^n` of a generator product, to be divided
/// by the coherent-state kernel.
#[derive(Debug, Clone)]
struct ProductPolynomial {
    entries: Vec<(usize, usize, Complex64)>,
    degree: usize,
    /// The kernel is already divided out (plane symbols are polynomials).
    reduced: bool,
}

#[derive(Debug, Clone)]
enum CompiledTerm {
    Closed(Generator),
    Product(ProductPolynomial),
}

/// A Hamiltonian bound to a phase space, ready for repeated symbol
/// evaluation. Immutable after construction and shareable across threads.
#[derive(Debug, Clone)]
pub struct CompiledHamiltonian {
    spec: HamiltonianSpec,
    geometry: PhaseSpace,
    terms: Vec<(CompiledTerm, Complex64)>,
}

/// Truncation used for the polynomial route on the plane.
pub const DEFAULT_HW_TRUNCATION: usize = 64;
/// Truncation used for the polynomial route on the disk.
pub const DEFAULT_SU11_TRUNCATION: usize = 128;

impl CompiledHamiltonian {
    pub fn new(spec: &HamiltonianSpec, geometry: &PhaseSpace) -> Result<Self> {
        let n_max = match geometry.kind() {
            Kind::Plane => DEFAULT_HW_TRUNCATION,
            _ => DEFAULT_SU11_TRUNCATION,
        };
        Self::with_truncation(spec, geometry, n_max)
    }

    pub fn with_truncation(
        spec: &HamiltonianSpec,
        geometry: &PhaseSpace,
        n_max: usize,
    ) -> Result<Self> {
        if spec.algebra.kind() != geometry.kind() {
            return Err(Error::IncompatibleAlgebra {
                what: format!("algebra {:?}", spec.algebra),
            });
        }
        let needs_rep = spec.terms.iter().any(|t| !t.is_linear());
        let rep = if needs_rep {
            Some(Representation::for_geometry(geometry, n_max)?)
        } else {
            None
        };
        let mut terms = Vec::with_capacity(spec.terms.len());
        for term in &spec.terms {
            let norm = lnorm_factor(term.lnorm, geometry)?;
            let compiled = match term.generators.as_slice() {
                [] => CompiledTerm::Closed(Generator::Identity),
                [g] => CompiledTerm::Closed(*g),
                product => {
                    let rep = rep.as_ref().expect("representation built for products");
                    CompiledTerm::Product(product_polynomial(rep, geometry, product))
                }
            };
            terms.push((compiled, norm));
        }
        Ok(CompiledHamiltonian {
            spec: spec.clone(),
            geometry: *geometry,
            terms,
        })
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &PhaseSpace {
        &self.geometry
    }

    pub fn is_zero(&self) -> bool {
        self.spec.terms.iter().all(|t| t.coeff.coeff == ZERO)
    }

    /// Two-slot covariant symbol with derivatives at time `t`.
    pub fn symbol(&self, zbar: Complex64, z: Complex64, t: f64) -> Result<SymbolValue> {
        if !self.geometry.in_domain(zbar, z) {
            return Err(Error::ChartDomain { zbar, z });
        }
        let mut total = SymbolValue::default();
        for ((compiled, norm), term) in self.terms.iter().zip(&self.spec.terms) {
            let c = term.coeff.value(t) * norm;
            if c == ZERO {
                continue;
            }
            let s = match compiled {
                CompiledTerm::Closed(g) => closed_form(&self.geometry, *g, zbar, z),
                CompiledTerm::Product(p) => product_symbol(&self.geometry, p, zbar, z),
            };
            total += s * c;
        }
        if !total.is_finite() {
            return Err(Error::ChartDomain { zbar, z });
        }
        Ok(total)
    }

    /// Laplace–Beltrami of the symbol, `g⁻¹ ∂²H/∂z̄∂z`.
    pub fn laplacian(&self, zbar: Complex64, z: Complex64, t: f64) -> Result<Complex64> {
        Ok(self.symbol(zbar, z, t)?.dzdzbar / self.geometry.metric(zbar, z)?)
    }

    /// View of the symbol at fixed `t` as a scalar field.
    pub fn at_time(&self, t: f64) -> SymbolField<'_> {
        SymbolField { ham: self, t }
    }
}

/// The symbol at a fixed time; exposes the analytic mixed derivative.
pub struct SymbolField<'a> {
    ham: &'a CompiledHamiltonian,
    t: f64,
}

impl ScalarField for SymbolField<'_> {
    fn value(&self, zbar: Complex64, z: Complex64) -> Complex64 {
        self.ham
            .symbol(zbar, z, self.t)
            .map(|s| s.value)
            .unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    }

    fn mixed_derivative(&self, zbar: Complex64, z: Complex64) -> Option<Complex64> {
        self.ham.symbol(zbar, z, self.t).ok().map(|s| s.dzdzbar)
    }
}

/// Convenience wrapper compiling `spec` for a single evaluation.
pub fn covariant_symbol(
    spec: &HamiltonianSpec,
    geometry: &PhaseSpace,
    zbar: Complex64,
    z: Complex64,
    t: f64,
) -> Result<SymbolValue> {
    CompiledHamiltonian::new(spec, geometry)?.symbol(zbar, z, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolDirection {
    ToContravariant,
    ToCovariant,
}

/// First-order Berezin transform: `(1 + Δ)H` towards the covariant symbol,
/// `(1 − Δ)H` towards the contravariant one.
pub fn contravariant_asymptotic<F: ScalarField + ?Sized>(
    field: &F,
    geometry: &PhaseSpace,
    zbar: Complex64,
    z: Complex64,
    direction: SymbolDirection,
) -> Result<Complex64> {
    let h = field.value(zbar, z);
    let lap = geometry.laplace_beltrami(field, zbar, z)?;
    Ok(match direction {
        SymbolDirection::ToCovariant => h + lap,
        SymbolDirection::ToContravariant => h - lap,
    })
}

pub(crate) fn lnorm_factor(lnorm: LNorm, geometry: &PhaseSpace) -> Result<Complex64> {
    match lnorm {
        LNorm::None => Ok(Complex64::new(1.0, 0.0)),
        LNorm::Quadratic => {
            if geometry.kind() != Kind::Sphere || geometry.weight() <= 1.0 {
                return Err(Error::IncompatibleAlgebra {
                    what: "quadratic normalization (needs SU(2) with j > 1/2)".into(),
                });
            }
            Ok(Complex64::new(1.0 / (geometry.weight() - 1.0), 0.0))
        }
    }
}

fn closed_form(geometry: &PhaseSpace, g: Generator, zbar: Complex64, z: Complex64) -> SymbolValue {
    let l = geometry.weight();
    let one = Complex64::new(1.0, 0.0);
    if g == Generator::Identity {
        return SymbolValue::constant(one);
    }
    match geometry.kind() {
        Kind::Plane => {
            let s = l.sqrt();
            match g {
                Generator::Lower => SymbolValue {
                    value: s * z,
                    dz: s * one,
                    ..Default::default()
                },
                Generator::Raise => SymbolValue {
                    value: s * zbar,
                    dzbar: s * one,
                    ..Default::default()
                },
                _ => SymbolValue {
                    value: l * zbar * z,
                    dz: l * zbar,
                    dzbar: l * z,
                    dzdzbar: l * one,
                    ..Default::default()
                },
            }
        }
        Kind::Sphere => {
            let u = one + zbar * z;
            let (u2, u3) = (u * u, u * u * u);
            match g {
                Generator::Raise => SymbolValue {
                    value: l * zbar / u,
                    dz: -l * zbar * zbar / u2,
                    dzbar: l / u2,
                    dzz: 2.0 * l * zbar * zbar * zbar / u3,
                    dzbarzbar: -2.0 * l * z / u3,
                    dzdzbar: -2.0 * l * zbar / u3,
                },
                Generator::Lower => SymbolValue {
                    value: l * z / u,
                    dz: l / u2,
                    dzbar: -l * z * z / u2,
                    dzz: -2.0 * l * zbar / u3,
                    dzbarzbar: 2.0 * l * z * z * z / u3,
                    dzdzbar: -2.0 * l * z / u3,
                },
                _ => SymbolValue {
                    value: 0.5 * l * (zbar * z - 1.0) / u,
                    dz: l * zbar / u2,
                    dzbar: l * z / u2,
                    dzz: -2.0 * l * zbar * zbar / u3,
                    dzbarzbar: -2.0 * l * z * z / u3,
                    dzdzbar: l * (one - zbar * z) / u3,
                },
            }
        }
        Kind::Disk => {
            let u = one - zbar * z;
            let (u2, u3) = (u * u, u * u * u);
            match g {
                Generator::Raise => SymbolValue {
                    value: l * zbar / u,
                    dz: l * zbar * zbar / u2,
                    dzbar: l / u2,
                    dzz: 2.0 * l * zbar * zbar * zbar / u3,
                    dzbarzbar: 2.0 * l * z / u3,
                    dzdzbar: 2.0 * l * zbar / u3,
                },
                Generator::Lower => SymbolValue {
                    value: l * z / u,
                    dz: l / u2,
                    dzbar: l * z * z / u2,
                    dzz: 2.0 * l * zbar / u3,
                    dzbarzbar: 2.0 * l * z * z * z / u3,
                    dzdzbar: 2.0 * l * z / u3,
                },
                _ => SymbolValue {
                    value: 0.5 * l * (one + zbar * z) / u,
                    dz: l * zbar / u2,
                    dzbar: l * z / u2,
                    dzz: 2.0 * l * zbar * zbar / u3,
                    dzbarzbar: 2.0 * l * z * z / u3,
                    dzdzbar: l * (one + zbar * z) / u3,
                },
            }
        }
    }
}

fn product_polynomial(
    rep: &Representation,
    geometry: &PhaseSpace,
    product: &[Generator],
) -> ProductPolynomial {
    let gens = exact::generator_matrices(rep);
    let p = gens.product(product);
    let c = exact::kernel_coefficients(rep, geometry);
    let dim = rep.dimension();
    let mut entries = Vec::new();
    for m in 0..dim {
        for n in 0..dim {
            let v = p[(m, n)];
            if v != ZERO {
                entries.push((m, n, v * c[m] * c[n]));
            }
        }
    }
    if geometry.kind() == Kind::Plane && 2 * product.len() < dim {
        return reduce_plane(&entries, product.len(), geometry.weight());
    }
    ProductPolynomial {
        entries,
        degree: dim,
        reduced: false,
    }
}

/// Multiplies by `e^{−γz̄z}`; a word of length `len` leaves a polynomial of
/// degree at most `len` in each variable.
fn reduce_plane(
    entries: &[(usize, usize, Complex64)],
    len: usize,
    gamma: f64,
) -> ProductPolynomial {
    let mut dense = vec![vec![ZERO; len + 1]; len + 1];
    for &(m, n, a) in entries.iter().filter(|e| e.0 <= len && e.1 <= len) {
        let mut w = 1.0;
        for k in 0..=(len - m.max(n)) {
            dense[m + k][n + k] += a * w;
            w *= -gamma / (k + 1) as f64;
        }
    }
    let mut reduced = Vec::new();
    for (m, row) in dense.iter().enumerate() {
        for (n, &v) in row.iter().enumerate() {
            if v != ZERO {
                reduced.push((m, n, v));
            }
        }
    }
    ProductPolynomial {
        entries: reduced,
        degree: len,
        reduced: true,
    }
}

/// Kernel `K(x)`, `x = z̄z`: returns `(1/K, κ, κ')` with `κ = K'/K`.
fn kernel_parts(geometry: &PhaseSpace, x: Complex64) -> (Complex64, Complex64, Complex64) {
    let l = geometry.weight();
    let one = Complex64::new(1.0, 0.0);
    match geometry.kind() {
        Kind::Sphere => {
            let u = one + x;
            (u.powi(-(l.round() as i32)), l / u, -l / (u * u))
        }
        Kind::Plane => ((-l * x).exp(), Complex64::new(l, 0.0), ZERO),
        Kind::Disk => {
            let u = one - x;
            ((l * u.ln()).exp(), l / u, l / (u * u))
        }
    }
}

fn product_symbol(
    geometry: &PhaseSpace,
    p: &ProductPolynomial,
    zbar: Complex64,
    z: Complex64,
) -> SymbolValue {
    let mut zb_pow = Vec::with_capacity(p.degree + 1);
    let mut z_pow = Vec::with_capacity(p.degree + 1);
    let (mut a, mut b) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
    for _ in 0..=p.degree {
        zb_pow.push(a);
        z_pow.push(b);
        a *= zbar;
        b *= z;
    }
    let pw = |v: &[Complex64], k: isize| if k < 0 { ZERO } else { v[k as usize] };

    let (inv_k, kappa, dkappa) = if p.reduced {
        (Complex64::new(1.0, 0.0), ZERO, ZERO)
    } else {
        kernel_parts(geometry, zbar * z)
    };
    let mut n0 = ZERO;
    let (mut nz, mut nb, mut nzz, mut nbb, mut nzb) = (ZERO, ZERO, ZERO, ZERO, ZERO);
    for &(m, n, coef) in &p.entries {
        let c = coef * inv_k;
        let (mi, ni) = (m as isize, n as isize);
        let (mf, nf) = (m as f64, n as f64);
        n0 += c * zb_pow[m] * z_pow[n];
        if n >= 1 {
            nz += c * nf * zb_pow[m] * z_pow[n - 1];
        }
        if m >= 1 {
            nb += c * mf * zb_pow[m - 1] * z_pow[n];
        }
        if n >= 2 {
            nzz += c * nf * (nf - 1.0) * zb_pow[m] * pw(&z_pow, ni - 2);
        }
        if m >= 2 {
            nbb += c * mf * (mf - 1.0) * pw(&zb_pow, mi - 2) * z_pow[n];
        }
        if m >= 1 && n >= 1 {
            nzb += c * mf * nf * zb_pow[m - 1] * z_pow[n - 1];
        }
    }
    let lz = kappa * zbar;
    let lb = kappa * z;
    let lzz = dkappa * zbar * zbar;
    let lbb = dkappa * z * z;
    let lzb = kappa + dkappa * zbar * z;
    SymbolValue {
        value: n0,
        dz: nz - lz * n0,
        dzbar: nb - lb * n0,
        dzz: nzz - 2.0 * lz * nz + (lz * lz - lzz) * n0,
        dzbarzbar: nbb - 2.0 * lb * nb + (lb * lb - lbb) * n0,
        dzdzbar: nzb - lb * nz - lz * nb + (lz * lb - lzb) * n0,
    }
}
