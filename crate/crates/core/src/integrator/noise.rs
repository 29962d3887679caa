use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SepError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseReduction {
    /// One Brownian motion drives the (rank-one) spatial profile.
    SingleBrownian,
    /// `K` independent Brownian motions with weights `a_k`.
    KModes,
}

impl std::str::FromStr for NoiseReduction {
    type Err = SepError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-brownian" | "single" => Ok(Self::SingleBrownian),
            "k-modes" | "modes" => Ok(Self::KModes),
            _ => Err(SepError::Domain(format!("unknown noise reduction `{s}`"))),
        }
    }
}

/// Momentum forcing `sum_k a_k J Y(J) d beta_k` with `Y(J) = nu J / (1 + J^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub amplitude: f64,
    pub weights: Vec<f64>,
    pub reduction: NoiseReduction,
}

impl NoiseModel {
    /// Default weights `a_k = 2^{-k/2}`, `k = 1..=n_modes`.
    pub fn new(amplitude: f64, n_modes: usize, reduction: NoiseReduction) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(SepError::Domain(format!("noise amplitude must be >= 0, got {amplitude}")));
        }
        if n_modes == 0 {
            return Err(SepError::Domain("noise needs at least one mode".into()));
        }
        let weights = (1..=n_modes).map(|k| 2f64.powf(-(k as f64) / 2.0)).collect();
        Ok(Self { amplitude, weights, reduction })
    }

    pub fn off() -> Self {
        Self { amplitude: 0.0, weights: vec![1.0], reduction: NoiseReduction::SingleBrownian }
    }

    pub fn is_off(&self) -> bool {
        self.amplitude == 0.0
    }

    /// `sum_k a_k^2`.
    pub fn weight_sum_sq(&self) -> f64 {
        self.weights.iter().map(|a| a * a).sum()
    }

    /// Shape function `Y(J)`.
    #[inline]
    pub fn shape(&self, j: f64) -> f64 {
        self.amplitude * j / (1.0 + j * j)
    }

    /// Spatial profile `J Y(J)` shared by every mode.
    #[inline]
    pub fn profile(&self, j: f64) -> f64 {
        j * self.shape(j)
    }

    /// `d/dJ (J Y(J))`.
    #[inline]
    pub fn profile_derivative(&self, j: f64) -> f64 {
        let d = 1.0 + j * j;
        self.amplitude * 2.0 * j / (d * d)
    }

    /// Number of standard normals consumed per time step.
    pub fn normals_per_step(&self) -> usize {
        match self.reduction {
            NoiseReduction::SingleBrownian => 1,
            NoiseReduction::KModes => self.weights.len(),
        }
    }

    pub fn draw_normals<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        for _ in 0..self.normals_per_step() {
            out.push(rng.sample(StandardNormal));
        }
    }

    fn mode_factor(&self, xi: &[f64]) -> f64 {
        match self.reduction {
            NoiseReduction::SingleBrownian => xi[0],
            NoiseReduction::KModes => self.weights.iter().zip(xi).map(|(a, x)| a * x).sum(),
        }
    }

    /// Increment `Delta M_i = J_i Y(J_i) sqrt(dt) (sum_k a_k xi_k)` (or `xi`
    /// alone in single-Brownian mode) for given standard normals.
    pub fn increment_from_normals(&self, current: &[f64], dt: f64, xi: &[f64], out: &mut [f64]) {
        if self.is_off() {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let scale = dt.sqrt() * self.mode_factor(xi);
        for (o, j) in out.iter_mut().zip(current) {
            *o = self.profile(*j) * scale;
        }
    }

    pub fn sample_increment<R: Rng + ?Sized>(&self, current: &[f64], dt: f64, rng: &mut R) -> Vec<f64> {
        let mut xi = Vec::with_capacity(self.normals_per_step());
        self.draw_normals(rng, &mut xi);
        let mut out = vec![0.0; current.len()];
        self.increment_from_normals(current, dt, &xi, &mut out);
        out
    }
}

/// Counter-based stream: the ChaCha key comes from `seed`, the stream id
/// selects an independent sequence (one per path).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normals for a whole path, fixed in advance so that several
/// solvers can be driven by the same Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub normals: Vec<Vec<f64>>,
}

impl NoisePath {
    pub fn sample<R: Rng + ?Sized>(noise: &NoiseModel, dt: f64, steps: usize, rng: &mut R) -> Self {
        let normals = (0..steps)
            .map(|_| {
                let mut v = Vec::new();
                noise.draw_normals(rng, &mut v);
                v
            })
            .collect();
        Self { dt, normals }
    }

    pub fn steps(&self) -> usize {
        self.normals.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_weights_sum_to_one_up_to_truncation() {
        let n = NoiseModel::new(0.05, 16, NoiseReduction::KModes).unwrap();
        assert!((n.weight_sum_sq() - 1.0).abs() <= 2f64.powi(-16));
    }

    #[test]
    fn shape_bounds_hold_on_samples() {
        let nu = 0.7;
        let n = NoiseModel::new(nu, 4, NoiseReduction::SingleBrownian).unwrap();
        let h = 1e-4;
        for k in -2000..=2000 {
            let j = k as f64 * 0.01;
            let y = n.shape(j);
            let dy = (n.shape(j + h) - n.shape(j - h)) / (2.0 * h);
            let ddy = (n.shape(j + h) - 2.0 * y + n.shape(j - h)) / (h * h);
            assert!(y.abs() <= nu * j.abs() + 1e-15);
            assert!(dy.abs() <= 2.0 * nu);
            assert!(ddy.abs() <= 4.0 * nu);
        }
    }

    #[test]
    fn zero_current_or_zero_amplitude_gives_zero_increment() {
        let n = NoiseModel::new(0.3, 16, NoiseReduction::KModes).unwrap();
        let mut rng = stream_rng(1, 0);
        assert!(n.sample_increment(&[0.0; 9], 1e-3, &mut rng).iter().all(|v| *v == 0.0));
        let off = NoiseModel::off();
        assert!(off.sample_increment(&[1.0; 9], 1e-3, &mut rng).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn profile_derivative_matches_difference() {
        let n = NoiseModel::new(0.4, 1, NoiseReduction::SingleBrownian).unwrap();
        for j in [-1.5, -0.2, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let fd = (n.profile(j + h) - n.profile(j - h)) / (2.0 * h);
            assert!((fd - n.profile_derivative(j)).abs() < 1e-8);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(9, 3).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream_rng(9, 3).random()).collect();
        assert_eq!(a, b);
        let c: u64 = stream_rng(9, 4).random();
        assert_ne!(a[0], c);
    }
}
