//! Python bindings for the DSII inverse-scattering solver.
//!
//! Exposes the main types (grids, complex fields, scattering data) and the
//! pipeline operations (forward transform, explicit time evolution, inverse
//! reconstruction, the split-step oracle). Complex fields cross the boundary
//! as flat `[re0, im0, re1, im1, ...]` float lists, which keeps the module
//! dependency-free on the Python side (and trivially numpy-compatible).

use dsii_core::forward::{compute_scattering_data, DataOptions, SolveOptions};
use dsii_core::grid::{make_grid, rel_l2_error, ComplexField, DiskSpec, K0Policy};
use dsii_core::inverse::{reconstruct, reconstruct_at, ReconstructOptions};
use dsii_core::potentials;
use dsii_core::splitstep::{simulate, SimOptions};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn flat_to_complex(values: &[f64]) -> PyResult<Vec<Complex64>> {
    if values.len() % 2 != 0 {
        return Err(PyValueError::new_err(
            "flat complex array must have even length",
        ));
    }
    Ok(values
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect())
}

fn complex_to_flat(values: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * values.len());
    for v in values {
        out.push(v.re);
        out.push(v.im);
    }
    out
}

/// Uniform square grid over `[-extent, extent)^2`, nodes at cell centers.
#[pyclass]
#[derive(Clone)]
struct Grid {
    inner: dsii_core::grid::ComplexGrid,
}

#[pymethods]
impl Grid {
    #[new]
    fn new(extent: f64, n: usize) -> PyResult<Self> {
        make_grid(extent, n)
            .map(|inner| Grid { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n_per_side()
    }

    #[getter]
    fn extent(&self) -> f64 {
        self.inner.extent()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    /// Node coordinates as a flat `[x0, y0, x1, y1, ...]` list.
    fn nodes(&self) -> Vec<f64> {
        complex_to_flat(&self.inner.nodes())
    }

    fn __repr__(&self) -> String {
        format!("Grid(extent={}, n={})", self.inner.extent(), self.inner.n_per_side())
    }
}

/// Complex scalar field on a grid.
#[pyclass]
#[derive(Clone)]
struct Field {
    inner: ComplexField,
}

#[pymethods]
impl Field {
    #[new]
    fn new(grid: Grid, flat_values: Vec<f64>) -> PyResult<Self> {
        let values = flat_to_complex(&flat_values)?;
        ComplexField::from_values(grid.inner, values)
            .map(|inner| Field { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid {
            inner: self.inner.grid,
        }
    }

    /// Values as a flat `[re0, im0, ...]` list, row-major nodes.
    fn values(&self) -> Vec<f64> {
        complex_to_flat(&self.inner.values)
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }

    /// Relative L2 distance to another field on the same grid.
    fn rel_l2(&self, other: &Field) -> PyResult<f64> {
        if self.inner.grid != other.inner.grid {
            return Err(PyValueError::new_err("fields on different grids"));
        }
        Ok(rel_l2_error(&self.inner, &other.inner))
    }

    fn __repr__(&self) -> String {
        format!(
            "Field(n={}, extent={}, max_abs={:.3e})",
            self.inner.grid.n_per_side(),
            self.inner.grid.extent(),
            self.inner.max_abs()
        )
    }
}

/// Generalized scattering data (diagonal samples plus optional boundary block).
#[pyclass]
struct ScatteringData {
    inner: dsii_core::forward::ScatteringData,
}

#[pymethods]
impl ScatteringData {
    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    #[getter]
    fn has_boundary(&self) -> bool {
        self.inner.boundary.is_some()
    }

    /// Off-diagonal channel of the diagonal samples, flat complex list.
    fn diag_offdiag(&self) -> Vec<f64> {
        complex_to_flat(&self.inner.diag_o)
    }

    fn kgrid(&self) -> Grid {
        Grid {
            inner: self.inner.kgrid,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "ScatteringData(kgrid_n={}, t={}, boundary={})",
            self.inner.kgrid.n_per_side(),
            self.inner.time,
            self.inner.boundary.is_some()
        )
    }
}

/// Centered Gaussian potential `amplitude * exp(-|z|^2)`.
#[pyfunction]
fn gaussian(grid: Grid, amplitude: f64) -> Field {
    Field {
        inner: potentials::gaussian(grid.inner, amplitude),
    }
}

/// Forward transform: scattering data of a potential on a spectral grid.
/// `disk = (radius, n_boundary)` adds the boundary block.
#[pyfunction]
#[pyo3(signature = (q, kgrid, disk=None, tol=1e-10))]
fn forward(
    q: &Field,
    kgrid: Grid,
    disk: Option<(f64, usize)>,
    tol: f64,
) -> PyResult<ScatteringData> {
    let spec = disk.map(|(radius, nb)| DiskSpec::new(radius, nb, K0Policy::RaySelected));
    let (data, _) = compute_scattering_data(
        &q.inner,
        kgrid.inner,
        spec.as_ref(),
        DataOptions {
            solve: SolveOptions {
                tol,
                ..Default::default()
            },
            ..Default::default()
        },
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(ScatteringData { inner: data })
}

/// Explicit time extension of the data by `dt`.
#[pyfunction]
fn evolve(data: &ScatteringData, dt: f64) -> PyResult<ScatteringData> {
    dsii_core::evolution::evolve_h(&data.inner, dt)
        .map(|inner| ScatteringData { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Reconstruct `(q, phi)` on a spatial grid at the data's time.
/// Returns `(q, phi, flagged_nodes)`.
#[pyfunction]
#[pyo3(signature = (data, zgrid, use_disk=true, tol=1e-10))]
fn invert(
    data: &ScatteringData,
    zgrid: Grid,
    use_disk: bool,
    tol: f64,
) -> PyResult<(Field, Field, Vec<usize>)> {
    let rec = reconstruct(
        &data.inner,
        zgrid.inner,
        ReconstructOptions {
            tol,
            use_disk: use_disk && data.inner.boundary.is_some(),
            ..Default::default()
        },
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let flagged = rec
        .mask
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| i)
        .collect();
    Ok((Field { inner: rec.q }, Field { inner: rec.phi }, flagged))
}

/// Reconstruct `q` at explicit points `[x0, y0, x1, y1, ...]`.
#[pyfunction]
#[pyo3(signature = (data, points, use_disk=true, tol=1e-10))]
fn invert_at(
    data: &ScatteringData,
    points: Vec<f64>,
    use_disk: bool,
    tol: f64,
) -> PyResult<Vec<f64>> {
    let pts = flat_to_complex(&points)?;
    let got = reconstruct_at(
        &data.inner,
        &pts,
        ReconstructOptions {
            tol,
            use_disk: use_disk && data.inner.boundary.is_some(),
            ..Default::default()
        },
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(complex_to_flat(
        &got.iter().map(|(q, _)| *q).collect::<Vec<_>>(),
    ))
}

/// Split-step integration; returns the final slice.
#[pyfunction]
#[pyo3(signature = (q0, t_end, dt, blowup_cap=1e6))]
fn simulate_final(q0: &Field, t_end: f64, dt: f64, blowup_cap: f64) -> PyResult<Field> {
    let snaps = simulate(
        &q0.inner,
        t_end,
        dt,
        0,
        SimOptions {
            blowup_cap,
            linear_only: false,
        },
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(Field {
        inner: snaps.into_iter().last().unwrap().q,
    })
}

/// Auxiliary field of the evolution system in the zero-mode-zero gauge.
#[pyfunction]
fn phi_from_q(q: &Field) -> Field {
    Field {
        inner: dsii_core::splitstep::phi_from_q(&q.inner),
    }
}

#[pymodule]
fn dsii_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Field>()?;
    m.add_class::<ScatteringData>()?;
    m.add_function(wrap_pyfunction!(gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(invert, m)?)?;
    m.add_function(wrap_pyfunction!(invert_at, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_final, m)?)?;
    m.add_function(wrap_pyfunction!(phi_from_q, m)?)?;
    Ok(())
}
