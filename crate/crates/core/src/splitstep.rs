//! Direct split-step Fourier integrator for the evolution system, used as an
//! independent oracle against the transform pipeline at small amplitude.
//!
//! Strang splitting: half a nonlinear step, one full linear step, half a
//! nonlinear step. The auxiliary field solves `del phi = dbar |q|^2`
//! spectrally; since `conj(phi) - phi = -2i Im(phi)` the nonlinear factor
//! `exp(-4(conj(phi) - phi) dt/2)` is unimodular and the nonlinear flow
//! preserves `|q|` pointwise, hence `phi` itself, making that sub-step exact.
//! The linear multiplier `exp(-2i xi1 xi2 dt)` is unimodular too, so the
//! discrete L2 norm is conserved to rounding per full step.

use crate::error::SimError;
use crate::grid::{ComplexField, ComplexGrid, SpectralOps};
use num_complex::Complex64;

/// `phi` from `q`: multiplier `symbol(dbar)/symbol(del)` on the transform of
/// `|q|^2`, zero mode set to zero (the project-wide gauge).
pub fn phi_from_q(q: &ComplexField) -> ComplexField {
    let ops = SpectralOps::new(q.grid);
    phi_with_ops(&ops, q)
}

fn phi_with_ops(ops: &SpectralOps, q: &ComplexField) -> ComplexField {
    let mut vals: Vec<Complex64> = q.values.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect();
    ops.apply_multiplier(&mut vals, |x1, x2| {
        let num = Complex64::new(-x2, x1); // i x1 - x2
        let den = Complex64::new(x2, x1); // i x1 + x2
        if x1 == 0.0 && x2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            num / den
        }
    });
    ComplexField {
        grid: q.grid,
        values: vals,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Abort threshold on `max |q|`; the oracle is only trusted well below it.
    pub blowup_cap: f64,
    /// Disable the nonlinear sub-steps (linear dispersion only).
    pub linear_only: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            blowup_cap: 1e6,
            linear_only: false,
        }
    }
}

/// Split-step integrator state with cached plans.
pub struct SplitStep {
    ops: SpectralOps,
    grid: ComplexGrid,
    pub opts: SimOptions,
}

impl SplitStep {
    pub fn new(grid: ComplexGrid, opts: SimOptions) -> Self {
        SplitStep {
            ops: SpectralOps::new(grid),
            grid,
            opts,
        }
    }

    fn nonlinear_half(&self, q: &mut ComplexField, dt: f64) {
        if self.opts.linear_only {
            return;
        }
        let phi = phi_with_ops(&self.ops, q);
        for (qv, ph) in q.values.iter_mut().zip(&phi.values) {
            // rate -4(conj(phi) - phi) = 8i Im(phi); half a step of `dt`
            // multiplies by exp(8i Im(phi) dt / 2), unit modulus
            let factor = Complex64::new(0.0, 4.0 * ph.im * dt).exp();
            *qv *= factor;
        }
    }

    fn linear_full(&self, q: &mut ComplexField, dt: f64) {
        self.ops.apply_multiplier(&mut q.values, |x1, x2| {
            Complex64::new(0.0, -2.0 * x1 * x2 * dt).exp()
        });
    }

    /// One Strang step.
    pub fn step(&self, q: &ComplexField, dt: f64) -> Result<ComplexField, SimError> {
        let mut out = q.clone();
        self.nonlinear_half(&mut out, dt);
        self.linear_full(&mut out, dt);
        self.nonlinear_half(&mut out, dt);
        let m = out.max_abs();
        if !m.is_finite() || m > self.opts.blowup_cap {
            return Err(SimError::BlowupDetected {
                t: dt,
                maxq: m,
                cap: self.opts.blowup_cap,
            });
        }
        Ok(out)
    }

    pub fn grid(&self) -> ComplexGrid {
        self.grid
    }
}

/// A time slice of the trajectory.
pub struct Snapshot {
    pub t: f64,
    pub q: ComplexField,
}

/// Integrate to `t_end` with fixed step `dt`, recording every
/// `snapshot_every`-th slice (always including the initial and final ones).
pub fn simulate(
    q0: &ComplexField,
    t_end: f64,
    dt: f64,
    snapshot_every: usize,
    opts: SimOptions,
) -> Result<Vec<Snapshot>, SimError> {
    assert!(dt > 0.0 && t_end >= 0.0);
    let stepper = SplitStep::new(q0.grid, opts);
    let nsteps = (t_end / dt).round() as usize;
    let mut snaps = vec![Snapshot {
        t: 0.0,
        q: q0.clone(),
    }];
    let mut q = q0.clone();
    for s in 1..=nsteps {
        q = stepper.step(&q, dt).map_err(|e| match e {
            SimError::BlowupDetected { maxq, cap, .. } => SimError::BlowupDetected {
                t: s as f64 * dt,
                maxq,
                cap,
            },
        })?;
        if s == nsteps || (snapshot_every > 0 && s % snapshot_every == 0) {
            snaps.push(Snapshot {
                t: s as f64 * dt,
                q: q.clone(),
            });
        }
    }
    Ok(snaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dbar, del, make_grid};
    use crate::potentials::gaussian;
    use std::f64::consts::PI;

    #[test]
    fn phi_gauge_and_residual() {
        let g = make_grid(8.0, 64).unwrap();
        let q = gaussian(g, 0.3);
        let phi = phi_from_q(&q);
        // del phi = dbar |q|^2 spectrally
        let lhs = del(&phi);
        let q2 = ComplexField::from_fn(g, |z| {
            Complex64::new((0.3 * (-z.norm_sqr()).exp()).powi(2), 0.0)
        });
        let rhs = dbar(&q2);
        let mut err: f64 = 0.0;
        for (a, b) in lhs.values.iter().zip(&rhs.values) {
            err = err.max((a - b).norm());
        }
        assert!(err <= 1e-10, "del phi vs dbar |q|^2: {err:.2e}");

        // unimodular multiplier: ||phi||_2 = || |q|^2 - mean ||_2
        let mean: Complex64 = q2.values.iter().sum::<Complex64>() / q2.values.len() as f64;
        let centered = ComplexField::from_values(
            g,
            q2.values.iter().map(|v| v - mean).collect(),
        )
        .unwrap();
        let rel = (phi.l2_norm() - centered.l2_norm()).abs() / centered.l2_norm();
        assert!(rel <= 1e-12, "norm mismatch {rel:.2e}");

        // zero potential
        let z = ComplexField::zeros(g);
        assert_eq!(phi_from_q(&z).max_abs(), 0.0);
    }

    #[test]
    fn plane_wave_linear_exact() {
        let g = make_grid(PI, 32).unwrap();
        let (m1, m2) = (2.0, -3.0);
        let xi1 = m1 * PI / g.extent();
        let xi2 = m2 * PI / g.extent();
        let q0 = ComplexField::from_fn(g, |z| Complex64::new(0.0, xi1 * z.re + xi2 * z.im).exp());
        // |q| is constant so phi = 0 and the nonlinearity is inert; check the
        // propagator against q(t) = q0 e^{-2i xi1 xi2 t} step by step
        let stepper = SplitStep::new(g, SimOptions::default());
        let dt = 0.0125;
        let mut q = q0.clone();
        for s in 1..=40 {
            q = stepper.step(&q, dt).unwrap();
            let t = s as f64 * dt;
            let factor = Complex64::new(0.0, -2.0 * xi1 * xi2 * t).exp();
            let mut err: f64 = 0.0;
            for (got, base) in q.values.iter().zip(&q0.values) {
                err = err.max((got - base * factor).norm());
            }
            assert!(err <= 1e-12, "plane wave err {err:.2e} at t={t}");
        }
    }

    #[test]
    fn l2_conserved_500_steps() {
        let g = make_grid(8.0, 64).unwrap();
        let q0 = gaussian(g, 0.1);
        let n0 = q0.l2_norm();
        let stepper = SplitStep::new(g, SimOptions::default());
        let mut q = q0;
        for _ in 0..500 {
            q = stepper.step(&q, 1e-3).unwrap();
        }
        let drift = (q.l2_norm() - n0).abs() / n0;
        assert!(drift <= 1e-10, "L2 drift {drift:.2e} over 500 steps");
    }

    #[test]
    fn second_order_in_dt() {
        let g = make_grid(8.0, 64).unwrap();
        let q0 = gaussian(g, 0.3);
        let t_end = 0.2;
        // reference at a much smaller step
        let fine = simulate(&q0, t_end, 1e-4, 0, SimOptions::default()).unwrap();
        let reference = &fine.last().unwrap().q;
        let mut errs = Vec::new();
        for dt in [4e-3, 2e-3] {
            let run = simulate(&q0, t_end, dt, 0, SimOptions::default()).unwrap();
            let q = &run.last().unwrap().q;
            let mut num = 0.0;
            for (a, b) in q.values.iter().zip(&reference.values) {
                num += (a - b).norm_sqr();
            }
            errs.push(num.sqrt());
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (ratio - 4.0).abs() <= 1.0,
            "dt convergence ratio {ratio}, errors {errs:?}"
        );
    }

    #[test]
    fn blowup_cap_detected() {
        let g = make_grid(8.0, 32).unwrap();
        let q0 = gaussian(g, 1.0);
        let err = simulate(
            &q0,
            1.0,
            1e-2,
            0,
            SimOptions {
                blowup_cap: 0.5, // artificially low cap
                linear_only: false,
            },
        )
        .err();
        assert!(err.is_some(), "cap must trip");
    }
}
