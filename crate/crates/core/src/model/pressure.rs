use serde::{Deserialize, Serialize};

use crate::error::{Result, SepError};

/// Polytropic pressure law `P(rho) = kappa * rho^gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureLaw {
    pub gamma: f64,
    pub kappa: f64,
}

impl PressureLaw {
    pub fn new(gamma: f64, kappa: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 1.0) {
            return Err(SepError::Domain(format!("gamma must be >= 1, got {gamma}")));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(SepError::Domain(format!("kappa must be > 0, got {kappa}")));
        }
        Ok(Self { gamma, kappa })
    }

    /// `(P, P', P'')` at `rho`.
    pub fn eval(&self, rho: f64) -> Result<(f64, f64, f64)> {
        if !(rho > 0.0) {
            return Err(SepError::Domain(format!("pressure needs rho > 0, got {rho}")));
        }
        Ok((self.p(rho), self.dp(rho), self.ddp(rho)))
    }

    #[inline]
    pub fn p(&self, rho: f64) -> f64 {
        self.kappa * rho.powf(self.gamma)
    }

    #[inline]
    pub fn dp(&self, rho: f64) -> f64 {
        self.kappa * self.gamma * rho.powf(self.gamma - 1.0)
    }

    #[inline]
    pub fn ddp(&self, rho: f64) -> f64 {
        self.kappa * self.gamma * (self.gamma - 1.0) * rho.powf(self.gamma - 2.0)
    }

    #[inline]
    pub(crate) fn dddp(&self, rho: f64) -> f64 {
        let g = self.gamma;
        self.kappa * g * (g - 1.0) * (g - 2.0) * rho.powf(g - 3.0)
    }

    /// Sound speed `sqrt(P'(rho))`.
    #[inline]
    pub fn sound_speed(&self, rho: f64) -> f64 {
        self.dp(rho).sqrt()
    }

    /// Enthalpy `(G, G', G'')` with `G'' = P'/rho`, normalized so that
    /// `G(1) = G'(1) = 0`.
    pub fn enthalpy(&self, rho: f64) -> Result<(f64, f64, f64)> {
        if self.gamma == 1.0 {
            return Err(SepError::Unsupported(
                "enthalpy of the isothermal law (gamma = 1)".into(),
            ));
        }
        if !(rho > 0.0) {
            return Err(SepError::Domain(format!("enthalpy needs rho > 0, got {rho}")));
        }
        Ok((self.g(rho), self.dg(rho), self.dp(rho) / rho))
    }

    #[inline]
    pub(crate) fn g(&self, rho: f64) -> f64 {
        let gm1 = self.gamma - 1.0;
        self.kappa * (rho.powf(self.gamma) - 1.0 - self.gamma * (rho - 1.0)) / gm1
    }

    #[inline]
    pub(crate) fn dg(&self, rho: f64) -> f64 {
        let gm1 = self.gamma - 1.0;
        self.kappa * self.gamma * (rho.powf(gm1) - 1.0) / gm1
    }

    /// Subsonic margin `P'(rho) - J^2 / rho^2`.
    #[inline]
    pub fn subsonic_margin(&self, rho: f64, current: f64) -> f64 {
        self.dp(rho) - current * current / (rho * rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_law_values() {
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        assert_eq!(law.eval(1.0).unwrap(), (1.0, 2.0, 2.0));
        assert_eq!(law.eval(0.5).unwrap(), (0.25, 1.0, 2.0));
    }

    #[test]
    fn derivatives_match_central_differences() {
        let law = PressureLaw::new(1.4, 1.0).unwrap();
        let rho = 2.0;
        let h = 1e-4;
        let fd1 = (law.p(rho + h) - law.p(rho - h)) / (2.0 * h);
        let fd2 = (law.p(rho + h) - 2.0 * law.p(rho) + law.p(rho - h)) / (h * h);
        let (_, d1, d2) = law.eval(rho).unwrap();
        assert!(((fd1 - d1) / d1).abs() < 1e-6);
        assert!(((fd2 - d2) / d2).abs() < 1e-6);
    }

    #[test]
    fn nonpositive_density_is_domain_error() {
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        assert!(matches!(law.eval(0.0), Err(SepError::Domain(_))));
        assert!(matches!(law.eval(-1.0), Err(SepError::Domain(_))));
        assert!(matches!(law.enthalpy(0.0), Err(SepError::Domain(_))));
    }

    #[test]
    fn enthalpy_normalization_and_quadratic_case() {
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        let (g, dg, ddg) = law.enthalpy(1.0).unwrap();
        assert_eq!((g, dg), (0.0, 0.0));
        assert_eq!(ddg, 2.0);
        for rho in [0.1, 0.7, 3.0, 11.0] {
            assert!((law.enthalpy(rho).unwrap().2 - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn isothermal_enthalpy_unsupported() {
        let law = PressureLaw::new(1.0, 1.0).unwrap();
        assert!(matches!(law.enthalpy(1.0), Err(SepError::Unsupported(_))));
    }

    #[test]
    fn enthalpy_second_derivative_identity() {
        let law = PressureLaw::new(1.4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let rho = rng.random_range(0.1..10.0);
            let (_, _, ddg) = law.enthalpy(rho).unwrap();
            assert!((ddg - law.dp(rho) / rho).abs() < 1e-12);
            // G'' independently by differencing G'
            let h = 1e-5 * rho;
            let fd = (law.dg(rho + h) - law.dg(rho - h)) / (2.0 * h);
            assert!(((fd - ddg) / ddg).abs() < 1e-7);
        }
    }

    #[test]
    fn enthalpy_convex_on_log_grid() {
        for law in [PressureLaw::new(2.0, 1.0).unwrap(), PressureLaw::new(1.4, 0.3).unwrap()] {
            for k in 0..=60 {
                let rho = 10f64.powf(-3.0 + 6.0 * k as f64 / 60.0);
                assert!(law.enthalpy(rho).unwrap().2 > 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn pressure_increasing(gamma in 1.01f64..3.0, a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
            let law = PressureLaw::new(gamma, 1.0).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi > lo * (1.0 + 1e-9));
            prop_assert!(law.p(hi) > law.p(lo));
            prop_assert!(law.dp(lo) > 0.0);
        }
    }
}
