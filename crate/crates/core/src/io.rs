//! On-disk formats.
//!
//! `CFLD`: 8-byte magic `CFLD0001`, little-endian `u32 n_x`, `u32 n_y`,
//! `f64 extent`, then `n_x * n_y` interleaved `f64 (re, im)` pairs,
//! row-major. `SDAT`: magic `SDAT0001`, `u32 n_boundary`, `f64 radius`,
//! `f64 t`, then four channel blocks of `n^2` pairs in (s'-major, s-minor)
//! order, channels (1,1), (1,2), (2,1), (2,2). The CSV alternative for
//! fields is `x,y,re,im`, one node per line, shortest round-trip-exact
//! decimals. Scattering data lives in a directory: `diag_d`/`diag_o` fields
//! on the spectral grid (invalid samples stored as NaN), the boundary block,
//! and a `meta.txt` with the scalar state.

use crate::config::IoFormat;
use crate::error::GridError;
use crate::forward::{BoundaryBlock, ScatteringData};
use crate::grid::{make_grid, ComplexField, DiskSpec, K0Policy};
use num_complex::Complex64;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug)]
pub enum IoError {
    Io(io::Error),
    Format(String),
    Grid(GridError),
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "i/o error: {e}"),
            IoError::Format(m) => write!(f, "format error: {m}"),
            IoError::Grid(e) => write!(f, "grid error: {e}"),
        }
    }
}

impl std::error::Error for IoError {}
impl From<io::Error> for IoError {
    fn from(e: io::Error) -> Self {
        IoError::Io(e)
    }
}
impl From<GridError> for IoError {
    fn from(e: GridError) -> Self {
        IoError::Grid(e)
    }
}

fn format_err(m: impl Into<String>) -> IoError {
    IoError::Format(m.into())
}

// ---------------------------------------------------------------------------
// CFLD
// ---------------------------------------------------------------------------

pub fn write_cfld(path: &Path, field: &ComplexField) -> Result<(), IoError> {
    let n = field.grid.n_per_side() as u32;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"CFLD0001")?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&field.grid.extent().to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cfld(path: &Path) -> Result<ComplexField, IoError> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != b"CFLD0001" {
        return Err(format_err(format!(
            "{}: bad magic (expected CFLD0001)",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    let nx = u32::from_le_bytes(b4) as usize;
    f.read_exact(&mut b4)?;
    let ny = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b8)?;
    let extent = f64::from_le_bytes(b8);
    if nx != ny {
        return Err(format_err("only square fields are supported"));
    }
    let grid = make_grid(extent, nx)?;
    let mut buf = vec![0u8; nx * ny * 16];
    f.read_exact(&mut buf)?;
    let values: Vec<Complex64> = buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    Ok(ComplexField::from_values(grid, values)?)
}

// ---------------------------------------------------------------------------
// CSV fields
// ---------------------------------------------------------------------------

pub fn write_field_csv(path: &Path, field: &ComplexField) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,y,re,im")?;
    for (i, v) in field.values.iter().enumerate() {
        let z = field.grid.node_at(i);
        writeln!(w, "{},{},{},{}", z.re, z.im, v.re, v.im)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_csv(path: &Path) -> Result<ComplexField, IoError> {
    let f = std::fs::File::open(path)?;
    let mut lines = io::BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err("empty CSV"))??;
    if header.trim() != "x,y,re,im" {
        return Err(format_err(format!(
            "{}: expected header `x,y,re,im`, got `{header}`",
            path.display()
        )));
    }
    let mut rows: Vec<(f64, f64, Complex64)> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(format_err(format!("line {}: expected 4 columns", ln + 2)));
        }
        let p: Vec<f64> = parts
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format_err(format!("line {}: {e}", ln + 2)))?;
        rows.push((p[0], p[1], Complex64::new(p[2], p[3])));
    }
    let n = (rows.len() as f64).sqrt().round() as usize;
    if n * n != rows.len() || !n.is_power_of_two() {
        return Err(format_err(format!(
            "CSV holds {} nodes, not a power-of-two square",
            rows.len()
        )));
    }
    // infer the extent from the node layout: first node is (-L + h/2, -L + h/2)
    let h = rows[1].0 - rows[0].0;
    let extent = -(rows[0].0 - 0.5 * h);
    let grid = make_grid(extent, n)?;
    for (i, (x, y, _)) in rows.iter().enumerate() {
        let z = grid.node_at(i);
        if (z.re - x).abs() > 1e-9 * extent || (z.im - y).abs() > 1e-9 * extent {
            return Err(format_err(format!(
                "node {i} at ({x}, {y}) is off the uniform grid"
            )));
        }
    }
    Ok(ComplexField::from_values(grid, rows.into_iter().map(|r| r.2).collect())?)
}

/// Dispatch on format for potentials and output fields.
pub fn write_field(path: &Path, field: &ComplexField, format: IoFormat) -> Result<(), IoError> {
    match format {
        IoFormat::Cfld => write_cfld(path, field),
        IoFormat::Csv => write_field_csv(path, field),
    }
}

/// Read a field by extension (`.cfld` binary, anything else CSV).
pub fn read_field_auto(path: &Path) -> Result<ComplexField, IoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("cfld") => read_cfld(path),
        _ => read_field_csv(path),
    }
}

// ---------------------------------------------------------------------------
// SDAT boundary block
// ---------------------------------------------------------------------------

pub fn write_sdat(path: &Path, block: &BoundaryBlock, t: f64) -> Result<(), IoError> {
    let nb = block.disk.n_boundary;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"SDAT0001")?;
    w.write_all(&(nb as u32).to_le_bytes())?;
    w.write_all(&block.disk.radius.to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    // channels (1,1), (1,2), (2,1), (2,2) from the reduced representation
    let chans: [Box<dyn Fn(usize) -> Complex64>; 4] = [
        Box::new(|i| block.h_d[i]),
        Box::new(|i| block.h_o[i]),
        Box::new(|i| -block.h_o[i]),
        Box::new(|i| block.h_d[i]),
    ];
    for ch in &chans {
        for i in 0..nb * nb {
            let v = ch(i);
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a boundary block; returns the stored time too. The k0 policy is not
/// part of the format and comes from the caller's configuration.
pub fn read_sdat(
    path: &Path,
    k0_policy: K0Policy,
) -> Result<(BoundaryBlock, f64, f64), IoError> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != b"SDAT0001" {
        return Err(format_err(format!(
            "{}: bad magic (expected SDAT0001)",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    f.read_exact(&mut b4)?;
    let nb = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b8)?;
    let radius = f64::from_le_bytes(b8);
    f.read_exact(&mut b8)?;
    let t = f64::from_le_bytes(b8);
    let mut buf = vec![0u8; 4 * nb * nb * 16];
    f.read_exact(&mut buf)?;
    let vals: Vec<Complex64> = buf
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    let h_d = vals[0..nb * nb].to_vec();
    let h_o = vals[nb * nb..2 * nb * nb].to_vec();
    let block = BoundaryBlock {
        disk: DiskSpec::new(radius, nb, k0_policy),
        h_d,
        h_o,
    };
    Ok((block, radius, t))
}

/// Symmetry defect of the four stored channels of an SDAT file:
/// `max(|h11 - h22|, |h12 + h21|) / max |h|`.
pub fn sdat_symmetry_defect(path: &Path) -> Result<f64, IoError> {
    let mut f = std::fs::File::open(path)?;
    let mut header = [0u8; 8 + 4 + 8 + 8];
    f.read_exact(&mut header)?;
    if &header[0..8] != b"SDAT0001" {
        return Err(format_err("bad magic"));
    }
    let nb = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; 4 * nb * nb * 16];
    f.read_exact(&mut buf)?;
    let read = |ch: usize, i: usize| -> Complex64 {
        let off = (ch * nb * nb + i) * 16;
        Complex64::new(
            f64::from_le_bytes(buf[off..off + 8].try_into().unwrap()),
            f64::from_le_bytes(buf[off + 8..off + 16].try_into().unwrap()),
        )
    };
    let mut dev: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..nb * nb {
        let (h11, h12, h21, h22) = (read(0, i), read(1, i), read(2, i), read(3, i));
        dev = dev.max((h11 - h22).norm()).max((h12 + h21).norm());
        scale = scale.max(h11.norm()).max(h12.norm());
    }
    Ok(dev / scale.max(f64::MIN_POSITIVE))
}

// ---------------------------------------------------------------------------
// Scattering-data directories and meta files
// ---------------------------------------------------------------------------

pub fn write_meta(path: &Path, pairs: &[(&str, String)]) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for (k, v) in pairs {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<Vec<(String, String)>, IoError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad meta line `{line}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn meta_get<'a>(meta: &'a [(String, String)], key: &str) -> Option<&'a str> {
    meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// Save scattering data into a directory: `diag_d.cfld`, `diag_o.cfld`
/// (invalid samples as NaN), optional `boundary.sdat`, and `meta.txt`.
pub fn save_data(dir: &Path, data: &ScatteringData, fingerprint: &str) -> Result<(), IoError> {
    std::fs::create_dir_all(dir)?;
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let mask = |vals: &[Complex64]| -> Vec<Complex64> {
        vals.iter()
            .zip(&data.valid)
            .map(|(v, ok)| if *ok { *v } else { nan })
            .collect()
    };
    let fd = ComplexField::from_values(data.kgrid, mask(&data.diag_d))?;
    let fo = ComplexField::from_values(data.kgrid, mask(&data.diag_o))?;
    write_cfld(&dir.join("diag_d.cfld"), &fd)?;
    write_cfld(&dir.join("diag_o.cfld"), &fo)?;
    let mut pairs = vec![
        ("time", data.time.to_string()),
        ("amplitude", data.amplitude.to_string()),
        (
            "valid",
            data.valid.iter().filter(|v| **v).count().to_string(),
        ),
        ("fingerprint", fingerprint.to_string()),
    ];
    if let Some(b) = &data.boundary {
        write_sdat(&dir.join("boundary.sdat"), b, data.time)?;
        pairs.push(("disk.radius", b.disk.radius.to_string()));
        pairs.push(("disk.n_boundary", b.disk.n_boundary.to_string()));
    }
    write_meta(&dir.join("meta.txt"), &pairs)?;
    Ok(())
}

pub fn load_data(dir: &Path, k0_policy: K0Policy) -> Result<ScatteringData, IoError> {
    let fd = read_cfld(&dir.join("diag_d.cfld"))?;
    let fo = read_cfld(&dir.join("diag_o.cfld"))?;
    if fd.grid != fo.grid {
        return Err(format_err("diag channels on different grids"));
    }
    let meta = read_meta(&dir.join("meta.txt"))?;
    let time: f64 = meta_get(&meta, "time")
        .ok_or_else(|| format_err("meta.txt missing `time`"))?
        .parse()
        .map_err(|_| format_err("bad `time` in meta.txt"))?;
    let amplitude: f64 = meta_get(&meta, "amplitude")
        .unwrap_or("1.0")
        .parse()
        .map_err(|_| format_err("bad `amplitude` in meta.txt"))?;
    let valid: Vec<bool> = fd
        .values
        .iter()
        .zip(&fo.values)
        .map(|(a, b)| a.re.is_finite() && b.re.is_finite())
        .collect();
    let clean = |vals: &[Complex64]| -> Vec<Complex64> {
        vals.iter()
            .zip(&valid)
            .map(|(v, ok)| if *ok { *v } else { Complex64::default() })
            .collect()
    };
    let boundary_path = dir.join("boundary.sdat");
    let boundary = if boundary_path.exists() {
        let (block, _, _) = read_sdat(&boundary_path, k0_policy)?;
        Some(block)
    } else {
        None
    };
    Ok(ScatteringData {
        kgrid: fd.grid,
        diag_d: clean(&fd.values),
        diag_o: clean(&fo.values),
        valid,
        boundary,
        amplitude,
        time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn tmpdir(tag: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("dsii-io-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&d);
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn cfld_bit_exact_roundtrip() {
        let d = tmpdir("cfld");
        let g = make_grid(5.0, 16).unwrap();
        let f = ComplexField::from_fn(g, |z| {
            Complex64::new(z.re * 0.1 + 1.0 / 3.0, (-z.norm_sqr()).exp())
        });
        let p = d.join("f.cfld");
        write_cfld(&p, &f).unwrap();
        let back = read_cfld(&p).unwrap();
        assert_eq!(back.grid, g);
        for (a, b) in back.values.iter().zip(&f.values) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        // byte-identical rewrite
        let p2 = d.join("f2.cfld");
        write_cfld(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn csv_roundtrip() {
        let d = tmpdir("csv");
        let g = make_grid(2.0, 8).unwrap();
        let f = ComplexField::from_fn(g, |z| Complex64::new(z.re, z.im * 0.25 + 0.1));
        let p = d.join("f.csv");
        write_field_csv(&p, &f).unwrap();
        let back = read_field_csv(&p).unwrap();
        assert_eq!(back.grid, g);
        for (a, b) in back.values.iter().zip(&f.values) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn data_dir_roundtrip_and_symmetry_defect() {
        use crate::grid::DiskSpec;
        let d = tmpdir("data");
        let kgrid = make_grid(4.0, 16).unwrap();
        let mut data = ScatteringData::zeros(kgrid);
        for i in 0..kgrid.num_nodes() {
            let k = kgrid.node_at(i);
            data.diag_d[i] = Complex64::new(0.01, -0.02) * (-k.norm_sqr()).exp();
            data.diag_o[i] = Complex64::new(0.05, 0.03) * (-k.norm_sqr()).exp();
        }
        data.valid[5] = false;
        data.time = 0.25;
        data.amplitude = 0.4;
        let disk = DiskSpec::new(1.0, 16, K0Policy::RaySelected);
        let nb = disk.n_boundary;
        let mut h_d = vec![Complex64::default(); nb * nb];
        let mut h_o = vec![Complex64::default(); nb * nb];
        for i in 0..nb * nb {
            h_d[i] = Complex64::new(i as f64 * 1e-4, -1e-5);
            h_o[i] = Complex64::new(2e-4, i as f64 * 1e-5);
        }
        data.boundary = Some(BoundaryBlock { disk, h_d, h_o });
        save_data(&d, &data, "deadbeef").unwrap();
        let back = load_data(&d, K0Policy::RaySelected).unwrap();
        assert_eq!(back.time, 0.25);
        assert_eq!(back.amplitude, 0.4);
        assert!(!back.valid[5]);
        assert_eq!(back.diag_o[7], data.diag_o[7]);
        let bb = back.boundary.unwrap();
        assert_eq!(bb.h_d, data.boundary.as_ref().unwrap().h_d);

        // the stored four channels satisfy the symmetry relations exactly
        let defect = sdat_symmetry_defect(&d.join("boundary.sdat")).unwrap();
        assert_eq!(defect, 0.0);
    }
}
