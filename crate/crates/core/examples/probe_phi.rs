//! Scratch probe: the auxiliary field from reconstruction vs the gauge
//! equation and the split-step convention.

use dsii_core::forward::{compute_scattering_data, DataOptions};
use dsii_core::grid::{dbar, del, make_grid, ComplexField};
use dsii_core::inverse::{reconstruct, ReconstructOptions};
use dsii_core::potentials::gaussian;
use dsii_core::splitstep::phi_from_q;
use num_complex::Complex64;

fn main() {
    let zgrid = make_grid(8.0, 64).unwrap();
    let kgrid = make_grid(8.0, 64).unwrap();
    let a = 0.2;
    let q0 = gaussian(zgrid, a);
    let (data, _) = compute_scattering_data(&q0, kgrid, None, DataOptions::default()).unwrap();
    let rec = reconstruct(
        &data,
        zgrid,
        ReconstructOptions {
            use_disk: false,
            ..Default::default()
        },
    )
    .unwrap();
    println!("q rel err: {:.3e}", dsii_core::grid::rel_l2_error(&rec.q, &q0));

    // oracle phi from the reconstructed q (zero-mode-zero gauge)
    let phi_oracle = phi_from_q(&rec.q);
    println!(
        "phi scales: |phi_rec| = {:.4e}, |phi_oracle| = {:.4e}",
        rec.phi.max_abs(),
        phi_oracle.max_abs()
    );
    // pointwise comparison at a few nodes
    for (ix, iy) in [(32, 32), (36, 32), (28, 40)] {
        let i = iy * 64 + ix;
        println!(
            "node ({ix},{iy}): phi_rec = {}, phi_oracle = {}, ratio = {}",
            rec.phi.values[i],
            phi_oracle.values[i],
            rec.phi.values[i] / phi_oracle.values[i]
        );
    }
    // gauge residual of the reconstructed pair
    let q2 = ComplexField::from_values(
        zgrid,
        rec.q.values.iter().map(|v| Complex64::new(v.norm_sqr(), 0.0)).collect(),
    )
    .unwrap();
    let lhs = del(&rec.phi);
    let rhs = dbar(&q2);
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..zgrid.num_nodes() {
        err = err.max((lhs.values[i] - rhs.values[i]).norm());
        scale = scale.max(rhs.values[i].norm());
    }
    println!("gauge residual: {:.3e} (term scale {:.3e})", err, scale);
}
