use crate::error::Result;
use crate::model::doping::DopingProfile;
use crate::model::flow::BoundaryData;
use crate::model::grid::Grid;
use crate::model::tridiag::solve_tridiagonal;

/// Solves `phi_xx = rho - b` with `phi(0) = phi_left`, `phi(1) = phi_right`
/// using the three-point Laplacian.
pub fn solve_poisson(
    grid: &Grid,
    rho: &[f64],
    doping: &DopingProfile,
    bd: &BoundaryData,
) -> Result<Vec<f64>> {
    grid.check(rho)?;
    grid.check(doping.values())?;
    let source: Vec<f64> = rho.iter().zip(doping.values()).map(|(r, b)| r - b).collect();
    Ok(solve_dirichlet(grid, &source, bd.phi_left, bd.phi_right))
}

/// `phi_xx = source` with Dirichlet data, no shape checks.
pub fn solve_dirichlet(grid: &Grid, source: &[f64], left: f64, right: f64) -> Vec<f64> {
    let n = grid.n_cells();
    let h2 = grid.h() * grid.h();
    let m = n - 1;
    let lower = vec![1.0; m];
    let diag = vec![-2.0; m];
    let upper = vec![1.0; m];
    let mut rhs: Vec<f64> = source[1..n].iter().map(|s| s * h2).collect();
    rhs[0] -= left;
    rhs[m - 1] -= right;
    solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
    let mut phi = Vec::with_capacity(n + 1);
    phi.push(left);
    phi.extend_from_slice(&rhs);
    phi.push(right);
    phi
}

/// Electric field `E = phi_x` with the standard grid stencils.
pub fn electric_field(grid: &Grid, phi: &[f64]) -> Vec<f64> {
    grid.dx(phi)
}

/// Sup norm of the three-point `phi_xx - (rho - b)` at interior nodes.
pub fn poisson_residual(grid: &Grid, phi: &[f64], rho: &[f64], b: &[f64]) -> f64 {
    let n = grid.n_cells();
    let inv_h2 = (n * n) as f64;
    (1..n)
        .map(|i| ((phi[i - 1] - 2.0 * phi[i] + phi[i + 1]) * inv_h2 - (rho[i] - b[i])).abs())
        .fold(0.0, f64::max)
}
