use seplab::model::{BoundaryData, DopingProfile, Grid, PressureLaw};
use seplab::steady::{solve_given_current, solve_given_voltage, steady_residual, SteadyOptions};
use seplab::SepError;

fn law() -> PressureLaw {
    PressureLaw::new(2.0, 1.0).unwrap()
}

#[test]
fn symmetric_contacts_give_constant_state() {
    let g = Grid::new(100).unwrap();
    let b = DopingProfile::constant(&g, 1.3).unwrap();
    let bd = BoundaryData::new(1.3, 1.3, 0.2, 0.2).unwrap();
    let (s, _) = solve_given_voltage(&g, &law(), &b, &bd, &SteadyOptions::default()).unwrap();
    assert!(s.j_bar.abs() < 1e-9);
    assert!(s.rho_bar.iter().all(|r| (r - 1.3).abs() < 1e-9));
    assert!(s.phi_bar.iter().all(|p| (p - 0.2).abs() < 1e-9));
}

#[test]
fn bump_doping_converges_at_second_order() {
    let mut sols = Vec::new();
    for n in [100, 200, 400] {
        let g = Grid::new(n).unwrap();
        let b = DopingProfile::bump(&g, 1.0, 0.4, 0.2, 0.3).unwrap();
        let (s, _) = solve_given_current(&g, &law(), &b, (1.0, 1.1), 0.03, 0.0, &SteadyOptions::default()).unwrap();
        sols.push(s.rho_bar);
    }
    let d = |a: &[f64], b: &[f64], k: usize| (0..=100).map(|i| (a[i * k] - b[i * 2 * k]).abs()).fold(0.0, f64::max);
    let ratio = d(&sols[0], &sols[1], 1) / d(&sols[1], &sols[2], 2);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn voltage_then_current_round_trip() {
    let g = Grid::new(160).unwrap();
    let b = DopingProfile::bump(&g, 1.0, 0.3, 0.1, 0.2).unwrap();
    let bd = BoundaryData::new(1.1, 1.0, 0.0, -0.05).unwrap();
    let opts = SteadyOptions::default();
    let (v, rep) = solve_given_voltage(&g, &law(), &b, &bd, &opts).unwrap();
    assert!((v.phi_right() - bd.phi_right).abs() <= opts.voltage_tol);
    assert!(rep.outer_iterations >= 2);
    let (c, _) = solve_given_current(&g, &law(), &b, (1.1, 1.0), v.j_bar, 0.0, &opts).unwrap();
    let d = v.rho_bar.iter().zip(&c.rho_bar).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-8);
}

#[test]
fn steady_residuals_are_small() {
    let g = Grid::new(200).unwrap();
    let b = DopingProfile::bump(&g, 1.0, 0.5, 0.2, 0.3).unwrap();
    let (s, rep) = solve_given_current(&g, &law(), &b, (1.0, 1.0), 0.05, 0.0, &SteadyOptions::default()).unwrap();
    let (momentum, _) = steady_residual(&s, &law(), &b);
    assert!(momentum < 1e-8);
    assert!(s.subsonic_margin > 0.0);
    assert!(rep.mass_defect.is_finite());
}

#[test]
fn doping_from_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    std::fs::write(&path, "x,b\n0,1\n0.5,1.2\n1,1\n").unwrap();
    let g = Grid::new(40).unwrap();
    let b = DopingProfile::from_csv(&g, &path).unwrap();
    assert_eq!(b.values()[20], 1.2);
    assert!((b.values()[10] - 1.1).abs() < 1e-12);
    assert!(solve_given_current(&g, &law(), &b, (1.0, 1.0), 0.0, 0.0, &SteadyOptions::default()).is_ok());
}

#[test]
fn supersonic_current_is_an_error() {
    let g = Grid::new(50).unwrap();
    let b = DopingProfile::constant(&g, 1.0).unwrap();
    let r = solve_given_current(&g, &law(), &b, (1.0, 1.0), 1.5, 0.0, &SteadyOptions::default());
    assert!(matches!(r, Err(SepError::Supersonic { .. })), "{r:?}");
}
