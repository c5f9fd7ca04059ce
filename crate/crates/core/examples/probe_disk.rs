//! Scratch probe: disk-mode round trip with real forward data, both signs of
//! the diagonal-conjugation sub-term, and two k0 choices.

use dsii_core::forward::{compute_scattering_data, DataOptions};
use dsii_core::grid::{make_grid, DiskSpec, K0Policy};
use dsii_core::inverse::{reconstruct_at, BoundaryForm, ReconstructOptions, TOptions};
use dsii_core::potentials::gaussian;
use num_complex::Complex64;

fn main() {
    let zgrid = make_grid(8.0, 64).unwrap();
    let kgrid = make_grid(8.0, 64).unwrap();
    let a = 0.3; // large enough that second-order data is visible
    let q0 = gaussian(zgrid, a);
    let disk = DiskSpec::new(1.5, 128, K0Policy::RaySelected);
    let t0 = std::time::Instant::now();
    let (data, _) =
        compute_scattering_data(&q0, kgrid, Some(&disk), DataOptions::default()).unwrap();
    println!("forward with boundary block: {:?}", t0.elapsed());

    let pts: Vec<Complex64> = (0..8)
        .map(|i| {
            let th = i as f64 * 0.7;
            Complex64::new(1.2 * th.cos() * (0.3 + 0.2 * i as f64), 1.1 * th.sin())
        })
        .collect();

    let free = reconstruct_at(
        &data,
        &pts,
        ReconstructOptions {
            use_disk: false,
            ..Default::default()
        },
    )
    .unwrap();

    for sign in [1.0, -1.0] {
        let opts = ReconstructOptions {
            t_opts: TOptions {
                form: BoundaryForm::Auto,
                pi_d_sign: sign,
            },
            ..Default::default()
        };
        let got = reconstruct_at(&data, &pts, opts).unwrap();
        let mut worst: f64 = 0.0;
        let scale = free.iter().map(|(q, _)| q.norm()).fold(0.0, f64::max);
        for ((qf, _), (qd, _)) in free.iter().zip(&got) {
            worst = worst.max((qf - qd).norm() / scale);
        }
        println!("pi_d_sign={sign:+}: max rel dev disk-vs-free = {worst:.3e}");
    }

    // k0-independence at the default sign
    let fixed1 = DiskSpec::new(1.5, 128, K0Policy::FixedPoint(Complex64::new(1.5, 0.0)));
    let fixed2 = DiskSpec::new(1.5, 128, K0Policy::FixedPoint(Complex64::new(-0.6, 1.2)));
    let mut d1 = data.clone();
    d1.boundary.as_mut().unwrap().disk = fixed1;
    let mut d2 = data.clone();
    d2.boundary.as_mut().unwrap().disk = fixed2;
    let g1 = reconstruct_at(&d1, &pts, ReconstructOptions::default()).unwrap();
    let g2 = reconstruct_at(&d2, &pts, ReconstructOptions::default()).unwrap();
    let scale = g1.iter().map(|(q, _)| q.norm()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for ((qa, _), (qb, _)) in g1.iter().zip(&g2) {
        worst = worst.max((qa - qb).norm() / scale);
    }
    println!("k0-independence (two fixed nodes): max rel dev = {worst:.3e}");

    // true-potential comparison
    let mut worst: f64 = 0.0;
    let got = reconstruct_at(&data, &pts, ReconstructOptions::default()).unwrap();
    for (z, (qd, _)) in pts.iter().zip(&got) {
        let want = a * (-z.norm_sqr()).exp();
        worst = worst.max((qd - want).norm() / want);
    }
    println!("disk-mode vs true q0: max rel dev = {worst:.3e}");
}
