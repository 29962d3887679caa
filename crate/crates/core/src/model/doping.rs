use std::path::Path;

use crate::error::{Result, SepError};
use crate::model::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub enum DopingSource {
    Constant(f64),
    /// `base + height * exp(-((x - center) / width)^2)`
    Bump { base: f64, center: f64, width: f64, height: f64 },
    Tabulated { x: Vec<f64>, b: Vec<f64> },
}

/// Background charge density `b(x) > 0` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DopingProfile {
    values: Vec<f64>,
    source: DopingSource,
}

impl DopingProfile {
    pub fn constant(grid: &Grid, value: f64) -> Result<Self> {
        Self::build(grid, DopingSource::Constant(value))
    }

    pub fn bump(grid: &Grid, base: f64, center: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(SepError::Domain(format!("bump width must be > 0, got {width}")));
        }
        Self::build(grid, DopingSource::Bump { base, center, width, height })
    }

    /// Resamples tabulated `(x, b)` pairs onto the grid by linear
    /// interpolation (constant extrapolation outside the table).
    pub fn tabulated(grid: &Grid, x: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if x.len() != b.len() || x.is_empty() {
            return Err(SepError::Domain("doping table needs matching, nonempty columns".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SepError::Domain("doping table x must be strictly increasing".into()));
        }
        Self::build(grid, DopingSource::Tabulated { x, b })
    }

    /// Reads a two-column `x,b` CSV. A non-numeric first line is treated as a header.
    pub fn from_csv(grid: &Grid, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut bs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(a), Some(c)) = (cols.next(), cols.next()) else {
                return Err(SepError::Domain(format!("doping csv line {}: need two columns", lineno + 1)));
            };
            match (a.parse::<f64>(), c.parse::<f64>()) {
                (Ok(x), Ok(b)) => {
                    xs.push(x);
                    bs.push(b);
                }
                _ if xs.is_empty() && lineno == 0 => continue,
                _ => {
                    return Err(SepError::Domain(format!(
                        "doping csv line {}: not numeric",
                        lineno + 1
                    )))
                }
            }
        }
        Self::tabulated(grid, xs, bs)
    }

    /// Parses `constant:<v>` or `bump:<center>:<width>:<height>[:<base>]`;
    /// `default_base` fills the bump base when omitted.
    pub fn parse(grid: &Grid, desc: &str, default_base: f64) -> Result<Self> {
        let parts: Vec<&str> = desc.trim().split(':').collect();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| SepError::Domain(format!("bad number `{s}` in doping descriptor `{desc}`")))
        };
        match parts.as_slice() {
            ["constant", v] => Self::constant(grid, num(v)?),
            ["bump", c, w, h] => Self::bump(grid, default_base, num(c)?, num(w)?, num(h)?),
            ["bump", c, w, h, base] => Self::bump(grid, num(base)?, num(c)?, num(w)?, num(h)?),
            _ => Err(SepError::Domain(format!("unrecognized doping descriptor `{desc}`"))),
        }
    }

    fn build(grid: &Grid, source: DopingSource) -> Result<Self> {
        let values = match &source {
            DopingSource::Constant(v) => vec![*v; grid.n_nodes()],
            DopingSource::Bump { base, center, width, height } => grid.sample(|x| {
                let z = (x - center) / width;
                base + height * (-z * z).exp()
            }),
            DopingSource::Tabulated { x, b } => grid.sample(|xi| interp(x, b, xi)),
        };
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(SepError::Domain(format!("doping must be positive, got {v} at node {i}")));
        }
        Ok(Self { values, source })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> &DopingSource {
        &self.source
    }
}

fn interp(x: &[f64], y: &[f64], xi: f64) -> f64 {
    if xi <= x[0] {
        return y[0];
    }
    let last = x.len() - 1;
    if xi >= x[last] {
        return y[last];
    }
    let k = x.partition_point(|v| *v <= xi);
    let (x0, x1) = (x[k - 1], x[k]);
    let t = (xi - x0) / (x1 - x0);
    y[k - 1] * (1.0 - t) + y[k] * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_constant_and_bump() {
        let g = Grid::new(10).unwrap();
        let c = DopingProfile::parse(&g, "constant:2.5", 1.0).unwrap();
        assert!(c.values().iter().all(|v| *v == 2.5));
        let b = DopingProfile::parse(&g, "bump:0.5:0.1:0.3", 1.0).unwrap();
        assert!((b.values()[5] - 1.3).abs() < 1e-15);
        assert!((b.values()[0] - (1.0 + 0.3 * (-25.0f64).exp())).abs() < 1e-15);
        let b2 = DopingProfile::parse(&g, "bump:0.5:0.1:0.3:2.0", 1.0).unwrap();
        assert!((b2.values()[5] - 2.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        let g = Grid::new(10).unwrap();
        assert!(DopingProfile::parse(&g, "constant:-1", 1.0).is_err());
        assert!(DopingProfile::parse(&g, "wave:1", 1.0).is_err());
        assert!(DopingProfile::parse(&g, "bump:0.5:0:1", 1.0).is_err());
    }

    #[test]
    fn csv_resampled_linearly() {
        let g = Grid::new(4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        std::fs::write(&p, "x,b\n0,1\n1,3\n").unwrap();
        let d = DopingProfile::from_csv(&g, &p).unwrap();
        assert_eq!(d.values(), &[1.0, 1.5, 2.0, 2.5, 3.0]);
    }
}
