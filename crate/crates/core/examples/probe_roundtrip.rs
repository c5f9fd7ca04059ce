//! Scratch probe: free-space round trip at small amplitude.

use dsii_core::forward::{compute_scattering_data, DataOptions};
use dsii_core::grid::make_grid;
use dsii_core::inverse::{reconstruct_at, ReconstructOptions};
use dsii_core::potentials::gaussian;
use num_complex::Complex64;

fn main() {
    let zgrid = make_grid(8.0, 64).unwrap();
    let kgrid = make_grid(8.0, 64).unwrap();
    let a = 0.1;
    let q0 = gaussian(zgrid, a);
    let t0 = std::time::Instant::now();
    let (data, reports) = compute_scattering_data(&q0, kgrid, None, DataOptions::default()).unwrap();
    let bad = reports.iter().filter(|r| !r.converged).count();
    println!("forward: {:?}, non-converged {bad}", t0.elapsed());

    let pts = [
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(0.5, -0.8),
        Complex64::new(-1.5, 0.4),
        Complex64::new(2.0, 2.0),
    ];
    let t0 = std::time::Instant::now();
    let got = reconstruct_at(
        &data,
        &pts,
        ReconstructOptions {
            use_disk: false,
            ..Default::default()
        },
    )
    .unwrap();
    println!("invert {} pts: {:?}", pts.len(), t0.elapsed());
    for (z, (q, rep)) in pts.iter().zip(&got) {
        let want = a * (-z.norm_sqr()).exp();
        println!(
            "z={z}: q={q}  want={want:.6}  rel={:.3e}  iters={} sig={:.2}",
            (q - want).norm() / want,
            rep.iterations,
            rep.sigma_min_estimate
        );
    }
}
