//! Complex-plane discretization and the operators that live on it.
//!
//! The computational domain is the square `[-L, L)^2` sampled at `n x n`
//! cell centers, `z = x + iy`. Everything downstream needs three things from
//! this module: spectral derivatives (`dbar`, `del`), the solid Cauchy
//! transform `f -> (1/pi) int f(z')/(z - z') dA`, and quadrature on the
//! boundary circle of the spectral disk.
//!
//! Two Cauchy backends are provided. The default one convolves with the
//! kernel `1/(pi z)` truncated to a disk of radius `R` large enough to cover
//! every source-target pair; the truncated kernel has a closed-form Fourier
//! transform `-2i e^{-i arg xi} (1 - J0(|xi| R)) / |xi|`, so a zero-padded FFT
//! evaluates the convolution to spectral accuracy, singularity included. The
//! alternative backend integrates `1/(pi z)` exactly over each grid cell
//! (closed-form cell moments) and convolves on the lattice; it is first-order
//! and serves as an independent cross-check.

use crate::error::GridError;
use crate::fft::{bin_freq, Fft2};
use crate::quad::{bessel_j0, gauss_legendre};
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

/// Uniform square grid over `[-extent, extent)^2` with nodes at cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexGrid {
    n: usize,
    extent: f64,
}

/// `make_grid` in operation terms: `n` must be an even power of two.
pub fn make_grid(extent: f64, n: usize) -> Result<ComplexGrid, GridError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(GridError::BadSize(n));
    }
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(GridError::BadExtent(extent));
    }
    Ok(ComplexGrid { n, extent })
}

impl ComplexGrid {
    pub fn n_per_side(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Cell spacing `2L/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    /// Node `z = x + iy` at column `ix`, row `iy` (row-major enumeration).
    #[inline]
    pub fn node(&self, ix: usize, iy: usize) -> Complex64 {
        let h = self.spacing();
        Complex64::new(
            -self.extent + (ix as f64 + 0.5) * h,
            -self.extent + (iy as f64 + 0.5) * h,
        )
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> Complex64 {
        self.node(idx % self.n, idx / self.n)
    }

    /// All nodes in row-major order.
    pub fn nodes(&self) -> Vec<Complex64> {
        (0..self.num_nodes()).map(|i| self.node_at(i)).collect()
    }
}

/// Complex scalar field sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub grid: ComplexGrid,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: ComplexGrid) -> Self {
        ComplexField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.num_nodes()],
        }
    }

    pub fn from_fn(grid: ComplexGrid, f: impl Fn(Complex64) -> Complex64) -> Self {
        let values = (0..grid.num_nodes()).map(|i| f(grid.node_at(i))).collect();
        ComplexField { grid, values }
    }

    pub fn from_values(grid: ComplexGrid, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.num_nodes() {
            return Err(GridError::ShapeMismatch {
                expected: grid.num_nodes(),
                got: values.len(),
            });
        }
        Ok(ComplexField { grid, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest magnitude on the outermost ring of cells.
    pub fn edge_max_abs(&self) -> f64 {
        let n = self.grid.n;
        let mut m: f64 = 0.0;
        for i in 0..n {
            m = m.max(self.values[i].norm());
            m = m.max(self.values[(n - 1) * n + i].norm());
            m = m.max(self.values[i * n].norm());
            m = m.max(self.values[i * n + n - 1].norm());
        }
        m
    }

    /// Discrete L2 norm, `sqrt(sum |f|^2 h^2)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn scale(&mut self, c: Complex64) {
        for v in &mut self.values {
            *v *= c;
        }
    }
}

/// Relative L2 distance between two fields on the same grid.
pub fn rel_l2_error(got: &ComplexField, want: &ComplexField) -> f64 {
    assert_eq!(got.grid, want.grid, "fields on different grids");
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in got.values.iter().zip(&want.values) {
        num += (a - b).norm_sqr();
        den += b.norm_sqr();
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

// ---------------------------------------------------------------------------
// Spectral derivatives
// ---------------------------------------------------------------------------

/// Cached FFT plans plus Fourier-multiplier application for one grid.
pub struct SpectralOps {
    grid: ComplexGrid,
    fft: Fft2,
}

impl SpectralOps {
    pub fn new(grid: ComplexGrid) -> Self {
        SpectralOps {
            grid,
            fft: Fft2::new(grid.n_per_side()),
        }
    }

    pub fn grid(&self) -> ComplexGrid {
        self.grid
    }

    /// Apply a Fourier multiplier `m(xi1, xi2)` in place.
    pub fn apply_multiplier(&self, values: &mut [Complex64], m: impl Fn(f64, f64) -> Complex64) {
        let n = self.grid.n_per_side();
        let period = 2.0 * self.grid.extent();
        self.fft.forward(values);
        for my in 0..n {
            let xi2 = bin_freq(my, n, period);
            for mx in 0..n {
                let xi1 = bin_freq(mx, n, period);
                values[my * n + mx] *= m(xi1, xi2);
            }
        }
        self.fft.inverse(values);
    }

    fn derivative(&self, f: &ComplexField, sign: f64) -> ComplexField {
        let n = self.grid.n_per_side();
        let mut out = f.values.clone();
        // kill the unmatched Nyquist line for odd-order derivatives
        let nyq = -((n / 2) as i64);
        let period = 2.0 * self.grid.extent();
        let nyq_freq = nyq as f64 * TAU / period;
        self.apply_multiplier(&mut out, |xi1, xi2| {
            if xi1 == nyq_freq || xi2 == nyq_freq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, 0.5) * Complex64::new(xi1, sign * xi2)
            }
        });
        ComplexField {
            grid: f.grid,
            values: out,
        }
    }

    /// `dbar = (d/dx + i d/dy)/2`, Fourier multiplier `(i xi1 - xi2)/2`.
    pub fn dbar(&self, f: &ComplexField) -> ComplexField {
        self.derivative(f, 1.0)
    }

    /// `del = (d/dx - i d/dy)/2`, Fourier multiplier `(i xi1 + xi2)/2`.
    pub fn del(&self, f: &ComplexField) -> ComplexField {
        self.derivative(f, -1.0)
    }
}

pub fn dbar(f: &ComplexField) -> ComplexField {
    SpectralOps::new(f.grid).dbar(f)
}

pub fn del(f: &ComplexField) -> ComplexField {
    SpectralOps::new(f.grid).del(f)
}

// ---------------------------------------------------------------------------
// Cauchy transform, spectral backend
// ---------------------------------------------------------------------------

/// FFT convolution with the exactly-truncated Cauchy kernel.
///
/// Sources and targets both live in the grid box, so truncating `1/(pi z)` at
/// `R` beyond the largest pairwise distance changes nothing, while giving the
/// kernel a compact support: sampling its Fourier transform on the padded
/// torus then commits no aliasing at all. The only approximation left is
/// trigonometric interpolation of the density.
pub struct CauchyOp {
    n: usize,
    m: usize,
    multiplier: Vec<Complex64>,
    fft: Fft2,
}

impl CauchyOp {
    pub fn new(grid: ComplexGrid) -> Self {
        Self::with_pad(grid, 3)
    }

    pub fn with_pad(grid: ComplexGrid, pad: usize) -> Self {
        assert!(pad >= 2, "padding factor below 2 aliases the convolution");
        let n = grid.n_per_side();
        let m = pad * n;
        let h = grid.spacing();
        let period = m as f64 * h;
        let span = 2.0 * grid.extent() - h;
        let diag = std::f64::consts::SQRT_2 * span;
        // images sit at least (period - diag) away; keep R below that
        let radius = (period - diag - h).min(0.5 * period - h);
        assert!(
            radius >= diag,
            "pad {pad} too small to hold an exact kernel (R = {radius}, need {diag})"
        );
        let mut multiplier = vec![Complex64::new(0.0, 0.0); m * m];
        for my in 0..m {
            let xi2 = bin_freq(my, m, period);
            for mx in 0..m {
                let xi1 = bin_freq(mx, m, period);
                let s2 = xi1 * xi1 + xi2 * xi2;
                if s2 == 0.0 {
                    continue;
                }
                let w = (1.0 - bessel_j0(s2.sqrt() * radius)) / s2;
                multiplier[my * m + mx] = Complex64::new(0.0, -2.0) * Complex64::new(xi1, -xi2) * w;
            }
        }
        CauchyOp {
            n,
            m,
            multiplier,
            fft: Fft2::new(m),
        }
    }

    /// `g(z) = (1/pi) int f(z') / (z - z') dA(z')` at every node.
    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(f.len(), self.n * self.n);
        let (n, m) = (self.n, self.m);
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for iy in 0..n {
            buf[iy * m..iy * m + n].copy_from_slice(&f[iy * n..(iy + 1) * n]);
        }
        self.fft.forward(&mut buf);
        for (b, mul) in buf.iter_mut().zip(&self.multiplier) {
            *b *= mul;
        }
        self.fft.inverse(&mut buf);
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for iy in 0..n {
            out[iy * n..(iy + 1) * n].copy_from_slice(&buf[iy * m..iy * m + n]);
        }
        out
    }
}

/// One-shot convenience wrapper over [`CauchyOp`].
///
/// The caller is responsible for the density decaying inside the box; the
/// transform of anything else is not meaningful on a truncated domain.
pub fn cauchy_apply(f: &ComplexField) -> ComplexField {
    let op = CauchyOp::new(f.grid);
    ComplexField {
        grid: f.grid,
        values: op.apply(&f.values),
    }
}

// ---------------------------------------------------------------------------
// Cauchy transform, cell-moment backend
// ---------------------------------------------------------------------------

/// Exact integral of `1/(pi w)` over the square cell of side `h` centered at
/// `d`. Antiderivative `H(x,y) = -i (w ln w - w)` corner-evaluated, with the
/// principal-branch jump across the negative real axis compensated edge by
/// edge. The singular cell (`d = 0`) vanishes by symmetry.
pub fn cauchy_cell_moment(d: Complex64, h: f64) -> Complex64 {
    if d.re == 0.0 && d.im == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let edge = |x: f64, y1: f64, y2: f64| -> Complex64 {
        let g = |x: f64, y: f64| -> Complex64 {
            let w = Complex64::new(x, y);
            Complex64::new(0.0, -1.0) * (w * w.ln() - w)
        };
        let mut v = g(x, y2) - g(x, y1);
        if x < 0.0 && y1 < 0.0 && y2 > 0.0 {
            v -= Complex64::new(2.0 * PI * x, 0.0);
        }
        v
    };
    let (x1, x2) = (d.re - 0.5 * h, d.re + 0.5 * h);
    let (y1, y2) = (d.im - 0.5 * h, d.im + 0.5 * h);
    (edge(x2, y1, y2) - edge(x1, y1, y2)) / PI
}

/// Lattice convolution with the per-cell moments of `1/(pi z)`.
pub struct CauchyCellsOp {
    n: usize,
    m: usize,
    kernel_hat: Vec<Complex64>,
    fft: Fft2,
}

impl CauchyCellsOp {
    pub fn new(grid: ComplexGrid) -> Self {
        let n = grid.n_per_side();
        let m = 2 * n;
        let h = grid.spacing();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m * m];
        for jy in 0..m {
            let my = if jy < n { jy as i64 } else { jy as i64 - m as i64 };
            for jx in 0..m {
                let mx = if jx < n { jx as i64 } else { jx as i64 - m as i64 };
                let d = Complex64::new(mx as f64 * h, my as f64 * h);
                kernel[jy * m + jx] = cauchy_cell_moment(d, h);
            }
        }
        let fft = Fft2::new(m);
        fft.forward(&mut kernel);
        CauchyCellsOp {
            n,
            m,
            kernel_hat: kernel,
            fft,
        }
    }

    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(f.len(), self.n * self.n);
        let (n, m) = (self.n, self.m);
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for iy in 0..n {
            buf[iy * m..iy * m + n].copy_from_slice(&f[iy * n..(iy + 1) * n]);
        }
        self.fft.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.fft.inverse(&mut buf);
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for iy in 0..n {
            out[iy * n..(iy + 1) * n].copy_from_slice(&buf[iy * m..iy * m + n]);
        }
        out
    }
}

/// Cell-moment variant of [`cauchy_apply`]; first-order near the singularity.
pub fn cauchy_apply_cells(f: &ComplexField) -> ComplexField {
    let op = CauchyCellsOp::new(f.grid);
    ComplexField {
        grid: f.grid,
        values: op.apply(&f.values),
    }
}

// ---------------------------------------------------------------------------
// Disk and boundary circle
// ---------------------------------------------------------------------------

/// Rule for picking the arc base point `k0` on the boundary circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum K0Policy {
    /// A fixed boundary point (snapped to the nearest boundary node).
    FixedPoint(Complex64),
    /// `k0 = -iA e^{i arg z}` per evaluation point, the maximizer of
    /// `Re(i sigma conj(z))/2` on the circle.
    RaySelected,
}

/// The spectral disk `D` of radius `A` with equispaced boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskSpec {
    pub radius: f64,
    pub n_boundary: usize,
    pub k0_policy: K0Policy,
}

impl DiskSpec {
    pub fn new(radius: f64, n_boundary: usize, k0_policy: K0Policy) -> Self {
        assert!(radius > 0.0 && n_boundary >= 8);
        DiskSpec {
            radius,
            n_boundary,
            k0_policy,
        }
    }

    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_boundary as f64
    }

    /// `sigma_j = A e^{i theta_j}`.
    #[inline]
    pub fn boundary_node(&self, j: usize) -> Complex64 {
        let t = self.theta(j);
        Complex64::new(self.radius * t.cos(), self.radius * t.sin())
    }

    pub fn boundary_nodes(&self) -> Vec<Complex64> {
        (0..self.n_boundary).map(|j| self.boundary_node(j)).collect()
    }

    fn nearest_node(&self, angle: f64) -> usize {
        let nb = self.n_boundary as f64;
        let j = (angle.rem_euclid(TAU) / TAU * nb).round() as usize;
        j % self.n_boundary
    }

    /// Boundary-node index of `k0` for evaluation point `z`.
    ///
    /// Under `RaySelected` with `z = 0` there is no ray; fall back to `-iA`.
    pub fn k0_index(&self, z: Complex64) -> usize {
        match self.k0_policy {
            K0Policy::FixedPoint(p) => self.nearest_node(p.im.atan2(p.re)),
            K0Policy::RaySelected => {
                if z.norm() == 0.0 {
                    self.nearest_node(-std::f64::consts::FRAC_PI_2)
                } else {
                    self.nearest_node(z.im.atan2(z.re) - std::f64::consts::FRAC_PI_2)
                }
            }
        }
    }
}

/// Quadrature for `int f(s') d(conj s')` along the counter-clockwise arc of
/// the boundary circle from `k0` to `sigma`.
///
/// Gauss-Legendre in the angle; node count grows with arc length,
/// `max(8, ceil(n_boundary * arc/(2 pi A)))`. Returns `(node, weight)` pairs
/// with the complex measure folded into the weights. A zero-length arc yields
/// an empty rule.
pub fn arc_quadrature(
    disk: &DiskSpec,
    k0: Complex64,
    sigma: Complex64,
) -> Vec<(Complex64, Complex64)> {
    let a = disk.radius;
    let t0 = k0.im.atan2(k0.re);
    let t1 = sigma.im.atan2(sigma.re);
    let dt = (t1 - t0).rem_euclid(TAU);
    if dt == 0.0 {
        return Vec::new();
    }
    let count = ((disk.n_boundary as f64) * dt / TAU).ceil() as usize;
    let count = count.max(8);
    let (x, w) = gauss_legendre(count);
    let (c, hw) = (t0 + 0.5 * dt, 0.5 * dt);
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| {
            let t = c + hw * xi;
            let node = Complex64::new(a * t.cos(), a * t.sin());
            // d(conj s') = -iA e^{-i t} dt
            let meas = Complex64::new(0.0, -a) * Complex64::new(0.0, -t).exp();
            (node, meas * (wi * hw))
        })
        .collect()
}

/// Fraction of each grid cell lying outside the disk `|k| > radius`.
///
/// Cells wholly inside get 0, wholly outside 1, straddling cells the area
/// fraction from 64x64 subsampling. Used as quadrature weights for integrals
/// over the grid minus the disk.
pub fn exterior_weights(grid: ComplexGrid, radius: f64) -> Vec<f64> {
    let h = grid.spacing();
    let half_diag = h * std::f64::consts::FRAC_1_SQRT_2;
    let mut w = vec![0.0; grid.num_nodes()];
    for (i, wi) in w.iter_mut().enumerate() {
        let c = grid.node_at(i);
        let r = c.norm();
        if r - half_diag >= radius {
            *wi = 1.0;
        } else if r + half_diag <= radius {
            *wi = 0.0;
        } else {
            const S: usize = 64;
            let mut outside = 0usize;
            for sy in 0..S {
                let y = c.im + ((sy as f64 + 0.5) / S as f64 - 0.5) * h;
                for sx in 0..S {
                    let x = c.re + ((sx as f64 + 0.5) / S as f64 - 0.5) * h;
                    if x * x + y * y > radius * radius {
                        outside += 1;
                    }
                }
            }
            *wi = outside as f64 / (S * S) as f64;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_gl;

    fn grid64() -> ComplexGrid {
        make_grid(8.0, 64).unwrap()
    }

    #[test]
    fn make_grid_contract() {
        let g = make_grid(8.0, 128).unwrap();
        assert_eq!(g.spacing(), 0.125);
        assert!(make_grid(8.0, 127).is_err());
        assert!(make_grid(-1.0, 64).is_err());
        let g = make_grid(PI, 64).unwrap();
        assert!((g.spacing() - TAU / 64.0).abs() < 1e-16);
        // spacing * n == 2L exactly for power-of-two n
        assert_eq!(g.spacing() * 64.0, 2.0 * PI);
    }

    #[test]
    fn cell_moment_matches_quadrature() {
        let h = 0.25;
        for d in [
            Complex64::new(0.25, 0.0),
            Complex64::new(-0.25, 0.0), // negative real axis, branch-sensitive
            Complex64::new(-0.75, 0.0),
            Complex64::new(0.0, 0.25),
            Complex64::new(0.0, -0.5),
            Complex64::new(-0.5, 0.25),
            Complex64::new(1.25, -0.75),
            Complex64::new(-2.0, -2.0),
        ] {
            let got = cauchy_cell_moment(d, h);
            // nested Gauss-Legendre over the cell; integrand smooth off-center
            let want = integrate_gl(d.re - 0.5 * h, d.re + 0.5 * h, 48, |x| {
                integrate_gl(d.im - 0.5 * h, d.im + 0.5 * h, 48, |y| {
                    Complex64::new(1.0, 0.0) / Complex64::new(x, y)
                })
            }) / PI;
            assert!(
                (got - want).norm() < 1e-10,
                "cell at {d}: got {got}, want {want}"
            );
        }
        // conjugation and parity symmetries
        let d = Complex64::new(-0.5, 0.75);
        assert!((cauchy_cell_moment(d.conj(), h) - cauchy_cell_moment(d, h).conj()).norm() < 1e-14);
        assert!((cauchy_cell_moment(-d, h) + cauchy_cell_moment(d, h)).norm() < 1e-14);
        assert_eq!(cauchy_cell_moment(Complex64::new(0.0, 0.0), h).norm(), 0.0);
    }

    #[test]
    fn cauchy_zero_and_linearity() {
        let g = grid64();
        let z = ComplexField::zeros(g);
        assert_eq!(cauchy_apply(&z).max_abs(), 0.0);

        let f = ComplexField::from_fn(g, |z| Complex64::new(0.3, -0.1) * (-z.norm_sqr()).exp());
        let op = CauchyOp::new(g);
        let a = Complex64::new(1.3, -2.1);
        let g1: Vec<_> = op.apply(&f.values).iter().map(|v| v * a).collect();
        let scaled: Vec<_> = f.values.iter().map(|v| v * a).collect();
        let g2 = op.apply(&scaled);
        for (u, v) in g1.iter().zip(&g2) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn cauchy_far_field_both_backends() {
        // compactly supported bump: g(z) ~ (integral of b) / (pi z) far out
        let g = grid64();
        let supp = 1.0;
        let bump = ComplexField::from_fn(g, |z| {
            let r2 = z.norm_sqr() / (supp * supp);
            if r2 < 1.0 {
                Complex64::new((1.0 - r2).powi(8), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let mass: Complex64 = bump.values.iter().sum::<Complex64>() * g.cell_area();
        let spectral = cauchy_apply(&bump);
        let cells = cauchy_apply_cells(&bump);
        let mut checked = 0;
        for (i, z) in g.nodes().iter().enumerate() {
            if z.norm() >= 4.0 * supp && z.norm() <= 7.0 {
                let want = mass / (PI * z);
                for (name, got) in [("spectral", spectral.values[i]), ("cells", cells.values[i])] {
                    let rel = (got - want).norm() / want.norm();
                    assert!(rel <= 1e-3, "{name} far field at {z}: rel err {rel:.2e}");
                }
                checked += 1;
            }
        }
        assert!(checked >= 10, "need at least 10 far-field samples");
    }

    #[test]
    fn dbar_inverts_cauchy_spectrally() {
        let g = make_grid(8.0, 128).unwrap();
        // zero-mass band-limited density f = dbar(psi): then cauchy(f) = psi
        // exactly (both sides decay and differ by an entire function), so the
        // chain keeps Gaussian decay and stays spectrally clean.
        let psi = ComplexField::from_fn(g, |z| {
            (-0.7 * z.norm_sqr()).exp() * Complex64::new(0.0, 0.8 * z.re - 0.3 * z.im).exp()
        });
        let f = dbar(&psi);
        let gfield = cauchy_apply(&f);
        let mut recon_err: f64 = 0.0;
        for (a, b) in gfield.values.iter().zip(&psi.values) {
            recon_err = recon_err.max((a - b).norm());
        }
        assert!(recon_err <= 1e-8, "cauchy(dbar psi) vs psi: {recon_err:.2e}");
        let back = dbar(&gfield);
        let mut err: f64 = 0.0;
        for (a, b) in back.values.iter().zip(&f.values) {
            err = err.max((a - b).norm());
        }
        assert!(err <= 1e-8, "dbar(cauchy(f)) vs f: max err {err:.2e}");
    }

    #[test]
    fn derivative_identities() {
        let g = grid64();
        // Fourier eigenfunction on commensurate modes
        let (m1, m2) = (3.0, -5.0);
        let xi1 = m1 * PI / g.extent();
        let xi2 = m2 * PI / g.extent();
        let f = ComplexField::from_fn(g, |z| Complex64::new(0.0, xi1 * z.re + xi2 * z.im).exp());
        let df = dbar(&f);
        let want = Complex64::new(-xi2 * 0.5, xi1 * 0.5);
        for (d, v) in df.values.iter().zip(&f.values) {
            assert!((d - want * v).norm() < 1e-10);
        }

        // real Gaussian: dbar(f) = conj(del(f))
        let f = ComplexField::from_fn(g, |z| Complex64::new((-z.norm_sqr()).exp(), 0.0));
        let a = dbar(&f);
        let b = del(&f);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y.conj()).norm() <= 1e-12);
        }

        // dbar(del f) = del(dbar f) = Laplacian/4
        let f = ComplexField::from_fn(g, |z| {
            (-z.norm_sqr()).exp() * Complex64::new(z.re, 0.2 + z.im * 0.3)
        });
        let ops = SpectralOps::new(g);
        let ab = ops.dbar(&ops.del(&f));
        let ba = ops.del(&ops.dbar(&f));
        let mut lap = f.values.clone();
        ops.apply_multiplier(&mut lap, |x1, x2| Complex64::new(-0.25 * (x1 * x1 + x2 * x2), 0.0));
        for i in 0..f.values.len() {
            assert!((ab.values[i] - ba.values[i]).norm() <= 1e-10);
            assert!((ab.values[i] - lap[i]).norm() <= 1e-10);
        }
    }

    #[test]
    fn arc_quadrature_chords() {
        let disk = DiskSpec::new(2.0, 256, K0Policy::RaySelected);
        let k0 = disk.boundary_node(192); // -iA
        let s = disk.boundary_node(64); // +iA

        // zero-length arc
        assert!(arc_quadrature(&disk, k0, k0).is_empty());

        // unit density: conj(s) - conj(k0)
        let rule = arc_quadrature(&disk, k0, s);
        let got: Complex64 = rule.iter().map(|(_, w)| w).sum();
        let want = s.conj() - k0.conj();
        assert!((got - want).norm() <= 1e-10, "chord: {got} vs {want}");

        // conj(s') density over the half circle: exact antiderivative gives 0
        let got: Complex64 = rule.iter().map(|(node, w)| node.conj() * w).sum();
        assert!(got.norm() <= 1e-10, "half-circle moment: {got}");

        // all nodes on the circle
        for (node, _) in &rule {
            assert!((node.norm() - disk.radius).abs() < 1e-12);
        }
    }

    #[test]
    fn k0_policies() {
        let disk = DiskSpec::new(1.5, 128, K0Policy::RaySelected);
        let z = Complex64::new(3.0, 4.0);
        let k0 = disk.boundary_node(disk.k0_index(z));
        // -iA e^{i arg z} up to node snapping
        let exact = Complex64::new(0.0, -disk.radius) * Complex64::new(0.0, z.im.atan2(z.re)).exp();
        assert!((k0 - exact).norm() < disk.radius * TAU / 128.0);
        assert!((k0.norm() - disk.radius).abs() < 1e-12);
        // z = 0 falls back to -iA
        let k0 = disk.boundary_node(disk.k0_index(Complex64::new(0.0, 0.0)));
        assert!((k0 - Complex64::new(0.0, -disk.radius)).norm() < 1e-12);

        let fixed = DiskSpec::new(1.5, 128, K0Policy::FixedPoint(Complex64::new(1.5, 0.0)));
        assert_eq!(fixed.k0_index(z), 0);
    }

    #[test]
    fn exterior_weight_area() {
        let g = grid64();
        let radius = 2.0;
        let w = exterior_weights(g, radius);
        let outside: f64 = w.iter().sum::<f64>() * g.cell_area();
        let want = (2.0 * g.extent()).powi(2) - PI * radius * radius;
        assert!(
            (outside - want).abs() < 1e-3 * want,
            "exterior area {outside} vs {want}"
        );
    }
}
