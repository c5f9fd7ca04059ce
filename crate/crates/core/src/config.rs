//! Flat `key = value` run configuration.
//!
//! Lines are `key = value` with `#` comments; unknown keys are rejected with
//! the offending line number so a typo cannot silently fall back to a
//! default. `DSII_THREADS` overrides the `threads` key.

use crate::grid::K0Policy;
use num_complex::Complex64;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Dense,
    Krylov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IoFormat {
    Csv,
    Cfld,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid_n: usize,
    pub grid_extent: f64,
    pub kgrid_n: usize,
    pub kgrid_extent: f64,
    pub disk_radius: f64,
    pub disk_n_boundary: usize,
    pub disk_k0_policy: K0Policy,
    pub bspace_modes: Option<usize>,
    pub solver_tol: f64,
    pub solver_mode: SolverMode,
    pub evolve_t_max: f64,
    pub sweep_a_list: Vec<f64>,
    pub scan_tau: Option<f64>,
    pub io_format: IoFormat,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid_n: 128,
            grid_extent: 8.0,
            kgrid_n: 128,
            kgrid_extent: 8.0,
            disk_radius: 1.5,
            disk_n_boundary: 256,
            disk_k0_policy: K0Policy::RaySelected,
            bspace_modes: None,
            solver_tol: 1e-10,
            solver_mode: SolverMode::Krylov,
            evolve_t_max: 2.0,
            sweep_a_list: vec![0.05, 0.1, 0.2, 0.4, 0.7, 1.0],
            scan_tau: None,
            io_format: IoFormat::Cfld,
            threads: 0,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}
impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError {
                line: lineno + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            let fnum = || -> Result<f64, ConfigError> {
                value
                    .parse::<f64>()
                    .map_err(|_| err(format!("`{key}` expects a number, got `{value}`")))
            };
            let unum = || -> Result<usize, ConfigError> {
                value
                    .parse::<usize>()
                    .map_err(|_| err(format!("`{key}` expects an integer, got `{value}`")))
            };
            match key {
                "grid.n" => cfg.grid_n = unum()?,
                "grid.extent" => cfg.grid_extent = fnum()?,
                "kgrid.n" => cfg.kgrid_n = unum()?,
                "kgrid.extent" => cfg.kgrid_extent = fnum()?,
                "disk.radius" => cfg.disk_radius = fnum()?,
                "disk.n_boundary" => cfg.disk_n_boundary = unum()?,
                "disk.k0_policy" => {
                    cfg.disk_k0_policy = if value == "ray" {
                        K0Policy::RaySelected
                    } else if let Some(rest) = value.strip_prefix("fixed:") {
                        let (re, im) = rest.split_once(',').ok_or_else(|| {
                            err("fixed policy expects `fixed:<re>,<im>`".into())
                        })?;
                        let re = re.trim().parse::<f64>().map_err(|_| {
                            err(format!("bad k0 real part `{re}`"))
                        })?;
                        let im = im.trim().parse::<f64>().map_err(|_| {
                            err(format!("bad k0 imaginary part `{im}`"))
                        })?;
                        K0Policy::FixedPoint(Complex64::new(re, im))
                    } else {
                        return Err(err(format!(
                            "`disk.k0_policy` expects `ray` or `fixed:<re>,<im>`, got `{value}`"
                        )));
                    }
                }
                "bspace.modes" => cfg.bspace_modes = Some(unum()?),
                "solver.tol" => cfg.solver_tol = fnum()?,
                "solver.mode" => {
                    cfg.solver_mode = match value {
                        "dense" => SolverMode::Dense,
                        "krylov" => SolverMode::Krylov,
                        other => {
                            return Err(err(format!(
                                "`solver.mode` expects `dense` or `krylov`, got `{other}`"
                            )))
                        }
                    }
                }
                "evolve.T_max" => cfg.evolve_t_max = fnum()?,
                "sweep.a_list" => {
                    cfg.sweep_a_list = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(format!("bad amplitude list `{value}`")))?;
                }
                "scan.tau" => {
                    cfg.scan_tau = if value == "auto" {
                        None
                    } else {
                        Some(fnum()?)
                    }
                }
                "io.format" => {
                    cfg.io_format = match value {
                        "csv" => IoFormat::Csv,
                        "cfld" => IoFormat::Cfld,
                        other => {
                            return Err(err(format!(
                                "`io.format` expects `csv` or `cfld`, got `{other}`"
                            )))
                        }
                    }
                }
                "threads" => cfg.threads = unum()?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        if let Ok(v) = std::env::var("DSII_THREADS") {
            cfg.threads = v.parse().map_err(|_| ConfigError {
                line: 0,
                message: format!("DSII_THREADS must be an integer, got `{v}`"),
            })?;
        }
        cfg.validate().map_err(|message| ConfigError { line: 0, message })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("grid.extent", self.grid_extent),
            ("kgrid.extent", self.kgrid_extent),
            ("disk.radius", self.disk_radius),
            ("solver.tol", self.solver_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("`{name}` must be positive, got {v}"));
            }
        }
        if !self.grid_n.is_power_of_two() || !self.kgrid_n.is_power_of_two() {
            return Err("grid sizes must be powers of two".into());
        }
        if self.evolve_t_max < 0.0 {
            return Err("`evolve.T_max` must be nonnegative".into());
        }
        // floating-point guard on the boundary-block growth
        let budget = self.evolve_t_max * self.disk_radius * self.disk_radius;
        if budget > 300.0 {
            return Err(format!(
                "evolve.T_max * disk.radius^2 = {budget:.1} exceeds the representable budget 300"
            ));
        }
        if self.sweep_a_list.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err("`sweep.a_list` entries must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Canonical text form (also what the fingerprint hashes).
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "grid.n = {}", self.grid_n);
        let _ = writeln!(s, "grid.extent = {}", self.grid_extent);
        let _ = writeln!(s, "kgrid.n = {}", self.kgrid_n);
        let _ = writeln!(s, "kgrid.extent = {}", self.kgrid_extent);
        let _ = writeln!(s, "disk.radius = {}", self.disk_radius);
        let _ = writeln!(s, "disk.n_boundary = {}", self.disk_n_boundary);
        let _ = match self.disk_k0_policy {
            K0Policy::RaySelected => writeln!(s, "disk.k0_policy = ray"),
            K0Policy::FixedPoint(p) => writeln!(s, "disk.k0_policy = fixed:{},{}", p.re, p.im),
        };
        if let Some(m) = self.bspace_modes {
            let _ = writeln!(s, "bspace.modes = {m}");
        }
        let _ = writeln!(s, "solver.tol = {}", self.solver_tol);
        let _ = writeln!(
            s,
            "solver.mode = {}",
            match self.solver_mode {
                SolverMode::Dense => "dense",
                SolverMode::Krylov => "krylov",
            }
        );
        let _ = writeln!(s, "evolve.T_max = {}", self.evolve_t_max);
        let list: Vec<String> = self.sweep_a_list.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(s, "sweep.a_list = {}", list.join(","));
        let _ = match self.scan_tau {
            None => writeln!(s, "scan.tau = auto"),
            Some(t) => writeln!(s, "scan.tau = {t}"),
        };
        let _ = writeln!(
            s,
            "io.format = {}",
            match self.io_format {
                IoFormat::Csv => "csv",
                IoFormat::Cfld => "cfld",
            }
        );
        let _ = writeln!(s, "threads = {}", self.threads);
        s
    }

    /// FNV-1a fingerprint of the canonical form.
    pub fn fingerprint(&self) -> String {
        fingerprint_text(&self.canonical())
    }
}

pub fn fingerprint_text(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_fingerprint() {
        let text = "\n# comment\ngrid.n = 64\ngrid.extent = 6.0\nsweep.a_list = 0.1, 0.5\nscan.tau = auto\ndisk.k0_policy = fixed:1.5,0.0\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.grid_n, 64);
        assert_eq!(cfg.sweep_a_list, vec![0.1, 0.5]);
        assert!(matches!(cfg.disk_k0_policy, K0Policy::FixedPoint(_)));
        let fp1 = cfg.fingerprint();
        assert_eq!(fp1, RunConfig::parse(text).unwrap().fingerprint());
        assert_ne!(fp1, RunConfig::default().fingerprint());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("nonsense").is_err());
        assert!(RunConfig::parse("unknown.key = 3").is_err());
        let e = RunConfig::parse("grid.n = 64\nbadline").unwrap_err();
        assert_eq!(e.line, 2);
        // guard: T_max A^2 too large
        assert!(RunConfig::parse("evolve.T_max = 2.0\ndisk.radius = 40.0").is_err());
        assert!(RunConfig::parse("grid.n = 100").is_err());
    }
}
