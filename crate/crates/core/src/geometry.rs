//! Rank-1 Kähler phase spaces: the sphere (SU(2)), the plane (Heisenberg–Weyl)
//! and the disk (SU(1,1)).
//!
//! Every quantity is derived from the Kähler potential `F(z̄₁, z₂)`, evaluated
//! with the antiholomorphic and holomorphic slots carried independently. The
//! diagonal (physical) values are recovered by putting `z̄ = conj(z)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trajectories leaving this radius raise [`Error::ChartOverflow`].
pub const R_MAX: f64 = 1e6;

/// Base step of the Richardson-extrapolated mixed-derivative stencil.
pub const FD_STEP: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Sphere,
    Plane,
    Disk,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Sphere => "sphere",
            Kind::Plane => "plane",
            Kind::Disk => "disk",
        }
    }
}

/// A phase space together with its weight `l` (`2j` on the sphere, `γ` on the
/// plane, `2k` on the disk).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryRecord", into = "GeometryRecord")]
pub struct PhaseSpace {
    kind: Kind,
    weight: f64,
}

/// Config-file form: `{"kind": "sphere", "weight": 10}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub kind: Kind,
    pub weight: f64,
}

impl TryFrom<GeometryRecord> for PhaseSpace {
    type Error = Error;

    fn try_from(r: GeometryRecord) -> Result<Self> {
        PhaseSpace::new(r.kind, r.weight)
    }
}

impl From<PhaseSpace> for GeometryRecord {
    fn from(g: PhaseSpace) -> Self {
        GeometryRecord {
            kind: g.kind,
            weight: g.weight,
        }
    }
}

impl PhaseSpace {
    pub fn new(kind: Kind, weight: f64) -> Result<Self> {
        if !weight.is_finite() || weight <= 0.0 {
            return Err(Error::InvalidWeight {
                kind: kind.name(),
                weight,
                reason: "weight must be positive and finite",
            });
        }
        match kind {
            Kind::Sphere if (weight - weight.round()).abs() > 1e-12 => {
                return Err(Error::InvalidSpin { two_j: weight });
            }
            Kind::Disk if weight <= 1.0 => {
                return Err(Error::InvalidWeight {
                    kind: kind.name(),
                    weight,
                    reason: "disk requires l = 2k with k > 1/2",
                });
            }
            _ => {}
        }
        let weight = if kind == Kind::Sphere {
            weight.round()
        } else {
            weight
        };
        Ok(PhaseSpace { kind, weight })
    }

    /// Sphere with spin `j` (`l = 2j`).
    pub fn sphere(j: f64) -> Result<Self> {
        Self::new(Kind::Sphere, 2.0 * j)
    }

    pub fn plane(gamma: f64) -> Result<Self> {
        Self::new(Kind::Plane, gamma)
    }

    /// Disk with Bargmann index `k` (`l = 2k`).
    pub fn disk(k: f64) -> Result<Self> {
        Self::new(Kind::Disk, 2.0 * k)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Same phase space with a different weight.
    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        Self::new(self.kind, weight)
    }

    /// Argument of the logarithm in `F`, or `None` on the plane.
    pub fn log_argument(&self, zbar: Complex64, z: Complex64) -> Option<Complex64> {
        match self.kind {
            Kind::Sphere => Some(1.0 + zbar * z),
            Kind::Disk => Some(1.0 - zbar * z),
            Kind::Plane => None,
        }
    }

    /// Converts a (possibly branch-continued) logarithm of the log argument
    /// into the potential.
    pub fn potential_from_log(&self, log: Complex64) -> Complex64 {
        match self.kind {
            Kind::Sphere => self.weight * log,
            Kind::Disk => -self.weight * log,
            Kind::Plane => Complex64::new(0.0, 0.0),
        }
    }

    fn checked_argument(&self, zbar: Complex64, z: Complex64) -> Result<Option<Complex64>> {
        match self.log_argument(zbar, z) {
            Some(u) if u == Complex64::new(0.0, 0.0) => Err(Error::BranchPoint { zbar, z }),
            other => Ok(other),
        }
    }

    /// `F(z̄₁, z₂)` on the principal branch.
    pub fn kahler_potential(&self, zbar1: Complex64, z2: Complex64) -> Result<Complex64> {
        match self.checked_argument(zbar1, z2)? {
            Some(u) => Ok(self.potential_from_log(u.ln())),
            None => Ok(self.weight * zbar1 * z2),
        }
    }

    /// `(∂F/∂z, ∂F/∂z̄)` at independent slots.
    pub fn potential_gradient(
        &self,
        zbar: Complex64,
        z: Complex64,
    ) -> Result<(Complex64, Complex64)> {
        let l = self.weight;
        match self.checked_argument(zbar, z)? {
            Some(u) => Ok((l * zbar / u, l * z / u)),
            None => Ok((l * zbar, l * z)),
        }
    }

    /// `g = ∂²F/∂z̄∂z` at independent slots.
    pub fn metric(&self, zbar: Complex64, z: Complex64) -> Result<Complex64> {
        let l = self.weight;
        match self.checked_argument(zbar, z)? {
            Some(u) => Ok(l / (u * u)),
            None => Ok(Complex64::new(l, 0.0)),
        }
    }

    /// `(∂ ln g/∂z, ∂ ln g/∂z̄)`.
    pub fn metric_log_gradient(
        &self,
        zbar: Complex64,
        z: Complex64,
    ) -> Result<(Complex64, Complex64)> {
        match self.checked_argument(zbar, z)? {
            Some(u) => {
                let s = if self.kind == Kind::Sphere { -2.0 } else { 2.0 };
                Ok((s * zbar / u, s * z / u))
            }
            None => Ok((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))),
        }
    }

    /// Normalized coherent-state overlap `⟨z₁|z₂⟩`.
    pub fn overlap(&self, z1: Complex64, z2: Complex64) -> Result<Complex64> {
        Ok(self.log_overlap(z1.conj(), z2)?.exp())
    }

    /// `log⟨z₁|z₂⟩` with the bra given through its conjugate slot `z̄₁`.
    pub fn log_overlap(&self, zbar1: Complex64, z2: Complex64) -> Result<Complex64> {
        let z1 = zbar1.conj();
        let f12 = self.kahler_potential(zbar1, z2)?;
        let f11 = self.kahler_potential(zbar1, z1)?;
        let f22 = self.kahler_potential(z2.conj(), z2)?;
        Ok(f12 - 0.5 * f11 - 0.5 * f22)
    }

    /// Density of the invariant measure with respect to `dz dz̄/(2πi)`,
    /// normalized so that the coherent states resolve the identity.
    pub fn liouville_density(&self, z: Complex64) -> Result<f64> {
        let x = z.norm_sqr();
        let l = self.weight;
        match self.kind {
            Kind::Sphere => Ok((l + 1.0) / (1.0 + x).powi(2)),
            Kind::Plane => Ok(l),
            Kind::Disk => {
                if x >= 1.0 {
                    return Err(Error::ChartDomain { zbar: z.conj(), z });
                }
                Ok((l - 1.0) / (1.0 - x).powi(2))
            }
        }
    }

    /// Conversion factor from `dz dz̄/(2πi)` to the Euclidean area element.
    pub const AREA_FACTOR: f64 = 1.0 / PI;

    /// Laplace–Beltrami operator `g⁻¹ ∂²f/∂z̄∂z`.
    pub fn laplace_beltrami<F: ScalarField + ?Sized>(
        &self,
        f: &F,
        zbar: Complex64,
        z: Complex64,
    ) -> Result<Complex64> {
        let mixed = match f.mixed_derivative(zbar, z) {
            Some(m) => m,
            None => self.mixed_derivative_fd(f, zbar, z, FD_STEP)?,
        };
        Ok(mixed / self.metric(zbar, z)?)
    }

    /// Richardson-extrapolated central stencil for `∂²f/∂z̄∂z`, with `f`
    /// holomorphic in each slot separately.
    pub fn mixed_derivative_fd<F: ScalarField + ?Sized>(
        &self,
        f: &F,
        zbar: Complex64,
        z: Complex64,
        step: f64,
    ) -> Result<Complex64> {
        let far = 2.0 * step;
        for (db, dz) in [(far, far), (far, -far), (-far, far), (-far, -far)] {
            if !self.in_domain(zbar + db, z + dz) {
                return Err(Error::StepTooLarge { step });
            }
        }
        Ok(mixed_stencil(|a, b| f.value(a, b), zbar, z, step))
    }

    /// Whether `(z̄, z)` lies safely inside the chart (away from branch points,
    /// inside the unit disk for diagonal-like disk points).
    pub fn in_domain(&self, zbar: Complex64, z: Complex64) -> bool {
        match self.log_argument(zbar, z) {
            None => true,
            Some(u) => {
                let interior = self.kind != Kind::Disk || (zbar * z).re < 1.0;
                u.norm() > 1e-12 && interior
            }
        }
    }

    pub fn check_chart(&self, z: Complex64) -> Result<()> {
        let modulus = z.norm();
        if !modulus.is_finite() || modulus > R_MAX {
            return Err(Error::ChartOverflow {
                modulus,
                limit: R_MAX,
            });
        }
        Ok(())
    }
}

/// Richardson combination of two central mixed-derivative stencils.
pub(crate) fn mixed_stencil<F: Fn(Complex64, Complex64) -> Complex64>(
    f: F,
    zbar: Complex64,
    z: Complex64,
    h: f64,
) -> Complex64 {
    let stencil = |h: f64| {
        (f(zbar + h, z + h) - f(zbar + h, z - h) - f(zbar - h, z + h) + f(zbar - h, z - h))
            / (4.0 * h * h)
    };
    (4.0 * stencil(h) - stencil(2.0 * h)) / 3.0
}

/// Richardson-extrapolated central first derivative of a holomorphic function.
pub fn derivative_stencil<F: Fn(Complex64) -> Complex64>(f: F, x: Complex64, h: f64) -> Complex64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h) - d(2.0 * h)) / 3.0
}

/// A function of independent slots `(z̄, z)`, optionally with an analytic
/// mixed derivative.
pub trait ScalarField {
    fn value(&self, zbar: Complex64, z: Complex64) -> Complex64;

    fn mixed_derivative(&self, _zbar: Complex64, _z: Complex64) -> Option<Complex64> {
        None
    }
}

impl<F: Fn(Complex64, Complex64) -> Complex64> ScalarField for F {
    fn value(&self, zbar: Complex64, z: Complex64) -> Complex64 {
        self(zbar, z)
    }
}

/// Field with a closed-form mixed derivative.
pub struct AnalyticField<F, M> {
    pub value: F,
    pub mixed: M,
}

impl<F, M> ScalarField for AnalyticField<F, M>
where
    F: Fn(Complex64, Complex64) -> Complex64,
    M: Fn(Complex64, Complex64) -> Complex64,
{
    fn value(&self, zbar: Complex64, z: Complex64) -> Complex64 {
        (self.value)(zbar, z)
    }

    fn mixed_derivative(&self, zbar: Complex64, z: Complex64) -> Option<Complex64> {
        Some((self.mixed)(zbar, z))
    }
}

/// Continuation of `log u` along a sequence of arguments. Jumps of the
/// imaginary part larger than π are undone by ±2π and counted.
#[derive(Debug, Clone)]
pub struct LogTracker {
    current: Complex64,
    winding: i64,
}

impl LogTracker {
    /// Starts on the principal branch at `u`.
    pub fn new(u: Complex64) -> Self {
        LogTracker {
            current: u.ln(),
            winding: 0,
        }
    }

    pub fn advance(&mut self, u: Complex64) -> Complex64 {
        let mut next = u.ln();
        next.im += 2.0 * PI * self.winding as f64;
        let jump = next.im - self.current.im;
        if jump > PI {
            self.winding -= 1;
            next.im -= 2.0 * PI;
        } else if jump < -PI {
            self.winding += 1;
            next.im += 2.0 * PI;
        }
        self.current = next;
        next
    }

    pub fn value(&self) -> Complex64 {
        self.current
    }

    pub fn winding(&self) -> i64 {
        self.winding
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn potential_examples() {
        let plane = PhaseSpace::plane(1.0).unwrap();
        assert_eq!(
            plane.kahler_potential(c(2.0, 0.0), c(3.0, 0.0)).unwrap(),
            c(6.0, 0.0)
        );

        let half = PhaseSpace::sphere(0.5).unwrap();
        assert_eq!(
            half.kahler_potential(c(0.0, 0.0), c(0.7, -3.1)).unwrap(),
            c(0.0, 0.0)
        );

        let one = PhaseSpace::sphere(1.0).unwrap();
        let f = one.kahler_potential(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(f.re, 2.0 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(f.re, 1.386294, epsilon = 1e-6);
        assert_eq!(f.im, 0.0);
    }

    #[test]
    fn branch_point_is_reported() {
        let s = PhaseSpace::sphere(1.0).unwrap();
        let err = s.kahler_potential(c(1.0, 0.0), c(-1.0, 0.0)).unwrap_err();
        assert_eq!(err.code(), "branch_point");
        let d = PhaseSpace::disk(1.0).unwrap();
        assert!(d.metric(c(1.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn invalid_weights() {
        assert_eq!(PhaseSpace::sphere(0.75).unwrap_err().code(), "invalid_spin");
        assert!(PhaseSpace::disk(0.5).is_err());
        assert!(PhaseSpace::plane(0.0).is_err());
        assert!(PhaseSpace::plane(f64::NAN).is_err());
    }

    #[test]
    fn metric_examples() {
        let plane = PhaseSpace::plane(2.0).unwrap();
        assert_eq!(
            plane.metric(c(0.3, 1.0), c(-2.0, 0.1)).unwrap(),
            c(2.0, 0.0)
        );
        let s = PhaseSpace::sphere(1.0).unwrap();
        assert_eq!(s.metric(c(0.0, 0.0), c(0.0, 0.0)).unwrap(), c(2.0, 0.0));
        let g = s.metric(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g.re, 0.5, epsilon = 1e-15);
        let potential = |a: Complex64, b: Complex64| s.kahler_potential(a, b).unwrap();
        let fd = s
            .mixed_derivative_fd(&potential, c(1.0, 0.0), c(1.0, 0.0), FD_STEP)
            .unwrap();
        assert!((fd - g).norm() < 1e-7);
    }

    #[test]
    fn overlap_examples() {
        let w = c(0.4, -1.3);
        for g in [
            PhaseSpace::sphere(1.5).unwrap(),
            PhaseSpace::plane(0.7).unwrap(),
            PhaseSpace::disk(1.2).unwrap(),
        ] {
            let z = if g.kind() == Kind::Disk { w * 0.5 } else { w };
            assert_abs_diff_eq!(
                (g.overlap(z, z).unwrap() - 1.0).norm(),
                0.0,
                epsilon = 1e-14
            );
        }
        let j = 2.5;
        let s = PhaseSpace::sphere(j).unwrap();
        let o = s.overlap(c(0.0, 0.0), w).unwrap();
        assert_abs_diff_eq!(
            (o - (1.0 + w.norm_sqr()).powf(-j)).norm(),
            0.0,
            epsilon = 1e-14
        );

        let p = PhaseSpace::plane(1.0).unwrap();
        let o = p.overlap(c(1.0, 0.0), c(0.0, 1.0)).unwrap();
        // exp(z̄₁z₂ − |z₁|²/2 − |z₂|²/2) = exp(i − 1)
        let expected = (-1f64).exp() * c(1f64.cos(), 1f64.sin());
        assert_abs_diff_eq!((o - expected).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn liouville_examples() {
        assert_eq!(
            PhaseSpace::sphere(0.5)
                .unwrap()
                .liouville_density(c(0.0, 0.0))
                .unwrap(),
            2.0
        );
        assert_eq!(
            PhaseSpace::plane(3.0)
                .unwrap()
                .liouville_density(c(5.0, 2.0))
                .unwrap(),
            3.0
        );
        assert_eq!(
            PhaseSpace::disk(1.0)
                .unwrap()
                .liouville_density(c(0.0, 0.0))
                .unwrap(),
            1.0
        );
        assert!(PhaseSpace::disk(1.0)
            .unwrap()
            .liouville_density(c(1.0, 0.0))
            .is_err());
    }

    #[test]
    fn laplace_beltrami_examples() {
        let gamma = 1.7;
        let p = PhaseSpace::plane(gamma).unwrap();
        let f = |zb: Complex64, z: Complex64| gamma * zb * z;
        let v = p.laplace_beltrami(&f, c(0.3, 0.1), c(0.3, -0.1)).unwrap();
        assert_abs_diff_eq!((v - 1.0).norm(), 0.0, epsilon = 1e-9);

        let constant = |_: Complex64, _: Complex64| c(4.2, -1.0);
        for g in [
            PhaseSpace::sphere(1.0).unwrap(),
            p,
            PhaseSpace::disk(2.0).unwrap(),
        ] {
            let v = g
                .laplace_beltrami(&constant, c(0.2, 0.0), c(0.2, 0.0))
                .unwrap();
            assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-12);
        }

        let s = PhaseSpace::sphere(1.0).unwrap();
        let pot = |a: Complex64, b: Complex64| s.kahler_potential(a, b).unwrap();
        let v = s.laplace_beltrami(&pot, c(0.0, 0.0), c(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!((v - 1.0).norm(), 0.0, epsilon = 1e-9);

        let analytic = AnalyticField {
            value: |zb: Complex64, z: Complex64| zb * zb * z,
            mixed: |zb: Complex64, _z: Complex64| 2.0 * zb,
        };
        let v = p
            .laplace_beltrami(&analytic, c(1.0, 0.0), c(0.0, 0.0))
            .unwrap();
        assert_abs_diff_eq!((v - 2.0 / gamma).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn stencil_outside_disk_is_rejected() {
        let d = PhaseSpace::disk(1.0).unwrap();
        let f = |a: Complex64, b: Complex64| a * b;
        let err = d
            .mixed_derivative_fd(&f, c(0.999, 0.0), c(0.999, 0.0), 1e-2)
            .unwrap_err();
        assert_eq!(err.code(), "step_too_large");
    }

    #[test]
    fn chart_overflow() {
        let s = PhaseSpace::sphere(1.0).unwrap();
        assert!(s.check_chart(c(1e3, 0.0)).is_ok());
        assert_eq!(
            s.check_chart(c(2e6, 0.0)).unwrap_err().code(),
            "chart_overflow"
        );
        assert!(s.check_chart(c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn log_tracker_unwraps() {
        let mut t = LogTracker::new(c(1.0, 0.0));
        let n = 400;
        for k in 1..=n {
            let phi = 4.0 * PI * k as f64 / n as f64;
            t.advance(Complex64::from_polar(2.0, phi));
        }
        assert_abs_diff_eq!(t.value().im, 4.0 * PI, epsilon = 1e-12);
        assert_eq!(t.winding(), 2);
    }

    #[test]
    fn config_record_roundtrip() {
        let g: PhaseSpace = serde_json_like("sphere", 4.0);
        assert_eq!(g.weight(), 4.0);
        assert_eq!(g.kind(), Kind::Sphere);
    }

    fn serde_json_like(kind: &str, weight: f64) -> PhaseSpace {
        let kind = match kind {
            "sphere" => Kind::Sphere,
            "plane" => Kind::Plane,
            _ => Kind::Disk,
        };
        PhaseSpace::try_from(GeometryRecord { kind, weight }).unwrap()
    }
}
