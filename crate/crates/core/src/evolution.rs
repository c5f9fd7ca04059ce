//! Explicit time extension of the scattering data.
//!
//! The data evolves entrywise: the off-diagonal channel of `h(s', s)` picks
//! up `exp(-t (s^2 - conj(s')^2)/2)`, the diagonal channel
//! `exp(-t (conj(s)^2 - conj(s')^2)/2)`. On diagonal samples (`s' = s`) the
//! diagonal factor is exactly 1 and the off-diagonal one is unimodular, so
//! those samples only rotate in phase. Boundary-block exponents can have real
//! parts up to `2 t A^2`; anything past the f64 exponent range is rejected
//! rather than silently overflowed.

use crate::error::DataError;
use crate::forward::ScatteringData;
use num_complex::Complex64;

const EXP_GUARD: f64 = 700.0;

/// Advance the data by `dt` (composable: advancing by `t1` then `t2` equals
/// advancing by `t1 + t2`).
pub fn evolve_h(data: &ScatteringData, dt: f64) -> Result<ScatteringData, DataError> {
    let mut out = data.clone();
    // diagonal samples: s' = s = k
    for i in 0..data.kgrid.num_nodes() {
        let k = data.kgrid.node_at(i);
        // k^2 - conj(k)^2 = 4i Re(k) Im(k): purely imaginary
        let exp_o = Complex64::new(0.0, -dt * 2.0 * k.re * k.im);
        out.diag_o[i] *= exp_o.exp();
        // conj(k)^2 - conj(k)^2 = 0: diagonal entries are time-invariant
    }
    if let Some(b) = out.boundary.as_mut() {
        let nb = b.disk.n_boundary;
        let nodes = b.disk.boundary_nodes();
        for jp in 0..nb {
            let sp = nodes[jp];
            for j in 0..nb {
                let s = nodes[j];
                let e_o = -0.5 * dt * (s * s - sp.conj() * sp.conj());
                let e_d = -0.5 * dt * (s.conj() * s.conj() - sp.conj() * sp.conj());
                for e in [e_o, e_d] {
                    if e.re.abs() > EXP_GUARD {
                        return Err(DataError::OverflowRisk(e.re));
                    }
                }
                b.h_o[jp * nb + j] *= e_o.exp();
                b.h_d[jp * nb + j] *= e_d.exp();
            }
        }
    }
    out.time += dt;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::BoundaryBlock;
    use crate::grid::{make_grid, DiskSpec, K0Policy};

    fn synthetic_data() -> ScatteringData {
        let kgrid = make_grid(4.0, 16).unwrap();
        let mut d = ScatteringData::zeros(kgrid);
        for i in 0..kgrid.num_nodes() {
            let k = kgrid.node_at(i);
            d.diag_d[i] = Complex64::new(0.1, -0.05) * (-k.norm_sqr() / 4.0).exp();
            d.diag_o[i] = Complex64::new(0.2, 0.3) * (-k.norm_sqr() / 4.0).exp();
        }
        let disk = DiskSpec::new(1.5, 32, K0Policy::RaySelected);
        let nb = disk.n_boundary;
        let mut h_d = Vec::with_capacity(nb * nb);
        let mut h_o = Vec::with_capacity(nb * nb);
        for jp in 0..nb {
            for j in 0..nb {
                let sp = disk.boundary_node(jp);
                let s = disk.boundary_node(j);
                h_d.push((-sp.conj() * s / 4.0).exp() * 0.01);
                h_o.push((-sp.conj() * s / 4.0).exp() * 0.04);
            }
        }
        d.boundary = Some(BoundaryBlock { disk, h_d, h_o });
        d
    }

    #[test]
    fn t_zero_is_identity() {
        let d = synthetic_data();
        let e = evolve_h(&d, 0.0).unwrap();
        for i in 0..d.diag_d.len() {
            assert_eq!(d.diag_d[i], e.diag_d[i]);
            assert_eq!(d.diag_o[i], e.diag_o[i]);
        }
        let (b0, b1) = (d.boundary.as_ref().unwrap(), e.boundary.as_ref().unwrap());
        assert_eq!(b0.h_d, b1.h_d);
        assert_eq!(b0.h_o, b1.h_o);
    }

    #[test]
    fn diagonal_sample_invariants() {
        let d = synthetic_data();
        for t in [0.3, 1.7] {
            let e = evolve_h(&d, t).unwrap();
            for i in 0..d.diag_d.len() {
                // diagonal entries unchanged for all t
                assert_eq!(d.diag_d[i], e.diag_d[i]);
                // off-diagonal modulus preserved
                assert!(
                    (d.diag_o[i].norm() - e.diag_o[i].norm()).abs()
                        <= 1e-14 * d.diag_o[i].norm().max(1e-300)
                );
            }
        }
    }

    #[test]
    fn group_property() {
        let d = synthetic_data();
        let a = evolve_h(&evolve_h(&d, 0.35).unwrap(), 0.4).unwrap();
        let b = evolve_h(&d, 0.75).unwrap();
        let check = |x: &[Complex64], y: &[Complex64]| {
            for (u, v) in x.iter().zip(y) {
                let scale = v.norm().max(1e-300);
                assert!((u - v).norm() <= 1e-13 * scale, "{u} vs {v}");
            }
        };
        check(&a.diag_d, &b.diag_d);
        check(&a.diag_o, &b.diag_o);
        check(
            &a.boundary.as_ref().unwrap().h_d,
            &b.boundary.as_ref().unwrap().h_d,
        );
        check(
            &a.boundary.as_ref().unwrap().h_o,
            &b.boundary.as_ref().unwrap().h_o,
        );
        assert!((a.time - b.time).abs() < 1e-15);
    }

    #[test]
    fn overflow_guard() {
        let mut d = synthetic_data();
        // blow the disk up so exponents overflow
        if let Some(b) = d.boundary.as_mut() {
            b.disk.radius = 40.0;
        }
        let err = evolve_h(&d, 1.0).err().expect("expected overflow guard");
        assert!(matches!(err, DataError::OverflowRisk(_)));
    }
}
