//! Scratch probe: round-trip error against spectral-grid resolution.

use dsii_core::forward::{compute_scattering_data, DataOptions};
use dsii_core::grid::make_grid;
use dsii_core::inverse::{reconstruct_at, ReconstructOptions};
use dsii_core::potentials::gaussian;
use num_complex::Complex64;
use std::time::Instant;

fn main() {
    let a = 0.1;
    // deterministic probe set, biased toward where q is significant
    let pts: Vec<Complex64> = (0..40)
        .map(|i| {
            let th = i as f64 * 0.61;
            let r = 0.15 * i as f64 % 2.4;
            Complex64::new(r * th.cos(), r * th.sin())
        })
        .collect();

    for (zn, kn) in [(128usize, 64usize), (128, 128), (128, 256)] {
        let zgrid = make_grid(8.0, zn).unwrap();
        let kgrid = make_grid(8.0, kn).unwrap();
        let q0 = gaussian(zgrid, a);
        let t0 = Instant::now();
        let (data, _) = compute_scattering_data(
            &q0,
            kgrid,
            None,
            DataOptions {
                max_k_norm: Some(7.0),
                ..Default::default()
            },
        )
        .unwrap();
        let t_fwd = t0.elapsed();
        let t0 = Instant::now();
        let got = reconstruct_at(
            &data,
            &pts,
            ReconstructOptions {
                use_disk: false,
                ..Default::default()
            },
        )
        .unwrap();
        let t_inv = t0.elapsed();
        let mut num = 0.0;
        let mut den = 0.0;
        for (z, (q, _)) in pts.iter().zip(&got) {
            let want = a * (-z.norm_sqr()).exp();
            num += (q - want).norm_sqr();
            den += want * want;
        }
        println!(
            "zgrid {zn} kgrid {kn}: probe rel-l2 {:.4e}  (fwd {:.1?}, inv {:.1?})",
            (num / den).sqrt(),
            t_fwd,
            t_inv
        );
    }
}
