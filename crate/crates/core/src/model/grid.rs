//! Uniform collocated grid on `[0, 1]` and the discrete calculus shared by
//! every module: second-order central stencils in the interior, second-order
//! one-sided stencils at the two ends, trapezoid quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SepError};

pub const MIN_CELLS: usize = 4;

/// Nodes `x_i = i / N`, `i = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n_cells: usize,
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < MIN_CELLS {
            return Err(SepError::GridTooCoarse { min: MIN_CELLS, got: n_cells });
        }
        Ok(Self { n_cells })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_cells {
            1.0
        } else {
            i as f64 / self.n_cells as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.x(i)).collect()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| f(self.x(i))).collect()
    }

    pub fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_nodes() {
            return Err(SepError::Shape { expected: self.n_nodes(), got: f.len() });
        }
        Ok(())
    }

    /// First derivative.
    pub fn dx(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.dx_into(f, &mut out);
        out
    }

    pub fn dx_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n_cells;
        let inv2h = 0.5 * n as f64;
        out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv2h;
        for i in 1..n {
            out[i] = (f[i + 1] - f[i - 1]) * inv2h;
        }
        out[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) * inv2h;
    }

    /// Second derivative.
    pub fn dxx(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.dxx_into(f, &mut out);
        out
    }

    pub fn dxx_into(&self, f: &[f64], out: &mut [f64]) {
        let n = self.n_cells;
        let inv_h2 = (n * n) as f64;
        out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * inv_h2;
        for i in 1..n {
            out[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) * inv_h2;
        }
        out[n] = (2.0 * f[n] - 5.0 * f[n - 1] + 4.0 * f[n - 2] - f[n - 3]) * inv_h2;
    }

    /// Trapezoid rule on `[0, 1]`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let n = self.n_cells;
        let inner: f64 = f[1..n].iter().sum();
        self.h() * (inner + 0.5 * (f[0] + f[n]))
    }

    /// Running trapezoid integral `F_i = int_0^{x_i} f`.
    pub fn cumulative_integral(&self, f: &[f64]) -> Vec<f64> {
        let h = self.h();
        let mut out = Vec::with_capacity(f.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in f.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    pub fn l2_sq(&self, f: &[f64]) -> f64 {
        let n = self.n_cells;
        let inner: f64 = f[1..n].iter().map(|v| v * v).sum();
        self.h() * (inner + 0.5 * (f[0] * f[0] + f[n] * f[n]))
    }

    pub fn l2(&self, f: &[f64]) -> f64 {
        self.l2_sq(f).sqrt()
    }

    /// Squared H^2 norm `|f|^2 + |f_x|^2 + |f_xx|^2`.
    pub fn h2_sq(&self, f: &[f64]) -> f64 {
        let n = f.len();
        let mut d1 = vec![0.0; n];
        let mut d2 = vec![0.0; n];
        self.dx_into(f, &mut d1);
        self.dxx_into(f, &mut d2);
        self.l2_sq(f) + self.l2_sq(&d1) + self.l2_sq(&d2)
    }

    pub fn sup(f: &[f64]) -> f64 {
        f.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Derivatives, integral and norms of `f` in one pass.
    pub fn calculus(&self, f: &[f64]) -> Result<GridCalculus> {
        self.check(f)?;
        let dx = self.dx(f);
        let dxx = self.dxx(f);
        let l2 = self.l2_sq(f);
        let l2_dx = self.l2_sq(&dx);
        let l2_dxx = self.l2_sq(&dxx);
        Ok(GridCalculus {
            integral: self.integrate(f),
            l2: l2.sqrt(),
            h1: (l2 + l2_dx).sqrt(),
            h2: (l2 + l2_dx + l2_dxx).sqrt(),
            sup: Self::sup(f),
            dx,
            dxx,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCalculus {
    pub dx: Vec<f64>,
    pub dxx: Vec<f64>,
    pub integral: f64,
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
    pub sup: f64,
}
