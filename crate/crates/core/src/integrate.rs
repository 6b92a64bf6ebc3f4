//! Complex ODE integration on a uniform output grid and composite quadrature.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest substep, relative to the grid spacing, before giving up.
const MIN_FRACTION: f64 = 1e-9;

/// Relative threshold of the quadrature error estimate.
pub const QUADRATURE_TOLERANCE: f64 = 1e-9;

/// Right-hand side `dy/dt = f(t, y)`, written into the output slice.
pub trait Field: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()> {}

impl<F: FnMut(f64, &[Complex64], &mut [Complex64]) -> Result<()>> Field for F {}

fn rk4_step<F: Field>(f: &mut F, t: f64, y: &[Complex64], h: f64) -> Result<Vec<Complex64>> {
    let n = y.len();
    let mut k1 = vec![Complex64::default(); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    f(t, y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + k1[i] * (0.5 * h);
    }
    f(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + k2[i] * (0.5 * h);
    }
    f(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + k3[i] * h;
    }
    f(t + h, &tmp, &mut k4)?;
    Ok((0..n)
        .map(|i| y[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0))
        .collect())
}

fn max_norm(y: &[Complex64]) -> f64 {
    y.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Adaptive RK4 with step doubling from `a` to `b` (either direction).
pub fn integrate_interval<F: Field>(
    f: &mut F,
    a: f64,
    b: f64,
    y: &[Complex64],
    tol: f64,
) -> Result<Vec<Complex64>> {
    let span = b - a;
    if span == 0.0 {
        return Ok(y.to_vec());
    }
    let mut t = a;
    let mut h = span;
    let mut y = y.to_vec();
    let min_step = span.abs() * MIN_FRACTION;
    while (b - t) * span.signum() > 0.0 {
        if (t + h - b) * span.signum() > 0.0 {
            h = b - t;
        }
        let full = rk4_step(f, t, &y, h)?;
        let mid = rk4_step(f, t, &y, 0.5 * h)?;
        let half = rk4_step(f, t + 0.5 * h, &mid, 0.5 * h)?;
        let err = half
            .iter()
            .zip(&full)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / 15.0;
        let scale = max_norm(&half).max(1.0);
        if !err.is_finite() {
            return Err(Error::IntegratorFailure {
                s: t,
                reason: "non-finite state",
            });
        }
        if err <= tol * scale {
            for (yi, (hi, fi)) in y.iter_mut().zip(half.iter().zip(&full)) {
                *yi = hi + (hi - fi) / 15.0;
            }
            t += h;
            if err < 0.02 * tol * scale {
                h *= 2.0;
            }
        } else {
            h *= 0.5;
            if h.abs() < min_step {
                return Err(Error::IntegratorFailure {
                    s: t,
                    reason: "step size underflow",
                });
            }
        }
    }
    Ok(y)
}

/// States at `t_k = t0 + k (t1 − t0)/steps`, `k = 0..=steps`.
pub fn integrate_grid<F: Field>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[Complex64],
    steps: usize,
    tol: f64,
) -> Result<Vec<Vec<Complex64>>> {
    let dt = (t1 - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0.to_vec());
    for k in 0..steps {
        let a = t0 + k as f64 * dt;
        let b = if k + 1 == steps { t1 } else { a + dt };
        let next = integrate_interval(&mut f, a, b, &out[k], tol)?;
        out.push(next);
    }
    Ok(out)
}

/// Composite Simpson rule over equally spaced samples.
pub fn simpson(values: &[Complex64], h: f64) -> Complex64 {
    let n = values.len() - 1;
    debug_assert!(n.is_multiple_of(2) && n > 0);
    let mut acc = values[0] + values[n];
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        acc += v * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (h / 3.0)
}

/// Quadrature with an error estimate from the half-resolution grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: Complex64,
    pub error: f64,
}

/// Simpson quadrature of grid samples; the interval count must be a
/// multiple of four.
pub fn simpson_checked(values: &[Complex64], h: f64) -> Result<Quadrature> {
    let n = values.len().saturating_sub(1);
    if n == 0 || !n.is_multiple_of(4) {
        return Err(Error::InvalidInput(format!(
            "quadrature needs a multiple of 4 intervals, got {n}"
        )));
    }
    let fine = simpson(values, h);
    let coarse_values: Vec<Complex64> = values.iter().step_by(2).copied().collect();
    let coarse = simpson(&coarse_values, 2.0 * h);
    let error = (fine - coarse).norm() / 15.0;
    if error > QUADRATURE_TOLERANCE * fine.norm().max(1.0) {
        return Err(Error::QuadratureUnresolved { change: error });
    }
    Ok(Quadrature { value: fine, error })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rotation_is_integrated_accurately() {
        let omega = c(0.0, -2.3);
        let f = |_: f64, y: &[Complex64], dy: &mut [Complex64]| {
            dy[0] = omega * y[0];
            Ok(())
        };
        let out = integrate_grid(f, 0.0, 3.0, &[c(1.0, 0.5)], 12, 1e-12).unwrap();
        let exact = c(1.0, 0.5) * (omega * 3.0).exp();
        assert!((out[12][0] - exact).norm() < 1e-10);
        assert_eq!(out.len(), 13);
    }

    #[test]
    fn backward_integration() {
        let f = |t: f64, _: &[Complex64], dy: &mut [Complex64]| {
            dy[0] = c(t.cos(), 0.0);
            Ok(())
        };
        let y = integrate_interval(&mut { f }, 2.0, 0.0, &[c(2f64.sin(), 0.0)], 1e-12).unwrap();
        assert!(y[0].norm() < 1e-11);
    }

    #[test]
    fn blow_up_is_reported() {
        let f = |_: f64, y: &[Complex64], dy: &mut [Complex64]| {
            dy[0] = y[0] * y[0];
            Ok(())
        };
        let err = integrate_grid(f, 0.0, 2.0, &[c(1.0, 0.0)], 4, 1e-10).unwrap_err();
        assert_eq!(err.code(), "integrator_failure");
    }

    #[test]
    fn simpson_of_smooth_function() {
        let n = 256;
        let h = 1.0 / n as f64;
        let v: Vec<Complex64> = (0..=n).map(|k| c(0.0, 3.0 * k as f64 * h).exp()).collect();
        let q = simpson_checked(&v, h).unwrap();
        let exact = (c(0.0, 3.0).exp() - 1.0) / c(0.0, 3.0);
        assert!((q.value - exact).norm() < 1e-8);
        assert!(q.error < 1e-8);
    }

    #[test]
    fn unresolved_quadrature() {
        let n = 8;
        let h = 1.0 / n as f64;
        let v: Vec<Complex64> = (0..=n)
            .map(|k| c((40.0 * k as f64 * h).sin(), 0.0))
            .collect();
        assert_eq!(
            simpson_checked(&v, h).unwrap_err().code(),
            "quadrature_unresolved"
        );
        assert!(simpson_checked(&v[..7], h).is_err());
    }
}
