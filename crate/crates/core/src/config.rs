//! Flat `section.key = value` run configuration with `#` comments.

use std::path::{Path, PathBuf};

use crate::error::{Result, SepError};
use crate::integrator::{initial_perturbation, stream_rng, IntegratorConfig, NoiseModel, NoiseReduction, SchemeOptions};
use crate::model::{BoundaryData, DopingProfile, FlowField, Grid, PressureLaw};
use crate::monte_carlo::EnsembleConfig;
use crate::perturbation::PerturbationState;
use crate::problem::Problem;
use crate::steady::{solve_given_current, solve_given_voltage, SolveMode, SteadyOptions, SteadySolveReport};

/// RNG stream reserved for the initial perturbation; path noise uses streams
/// `0, 1, ...`.
pub const INITIAL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub kappa: f64,
    pub rho_left: f64,
    pub rho_right: f64,
    pub phi_left: f64,
    pub phi_right: f64,
    pub mode: SolveMode,
    pub jbar: f64,
    /// `constant:<v>` or `bump:<center>:<width>:<height>[:<base>]`;
    /// `None` means `b = rho_left`.
    pub doping: Option<String>,
    pub doping_file: Option<PathBuf>,
    pub n_cells: usize,
    pub t_end: f64,
    pub cfl: f64,
    pub snapshot_every: usize,
    pub dt: Option<f64>,
    pub artificial_viscosity: f64,
    pub reconstruction: bool,
    pub seed: u64,
    pub noise_amplitude: f64,
    pub noise_modes: usize,
    pub noise_reduction: NoiseReduction,
    pub perturbation_amplitude: f64,
    pub perturbation_modes: usize,
    pub ensemble: EnsembleConfig,
    pub steady: SteadyOptions,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            kappa: 1.0,
            rho_left: 1.0,
            rho_right: 1.0,
            phi_left: 0.0,
            phi_right: 0.0,
            mode: SolveMode::GivenCurrent,
            jbar: 0.01,
            doping: None,
            doping_file: None,
            n_cells: 200,
            t_end: 10.0,
            cfl: 0.4,
            snapshot_every: 0,
            dt: None,
            artificial_viscosity: 0.0,
            reconstruction: false,
            seed: 0,
            noise_amplitude: 0.05,
            noise_modes: 16,
            noise_reduction: NoiseReduction::SingleBrownian,
            perturbation_amplitude: 1e-2,
            perturbation_modes: 3,
            ensemble: EnsembleConfig::default(),
            steady: SteadyOptions::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> SepError {
    SepError::Config { field: field.to_string(), msg: msg.to_string() }
}

fn num<T: std::str::FromStr>(field: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| config_err(field, format!("cannot parse `{v}`")))
}

fn list<T: std::str::FromStr>(field: &str, v: &str) -> Result<Vec<T>> {
    v.trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(field, s))
        .collect()
}

fn boolean(field: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(field, format!("expected true/false, got `{v}`"))),
    }
}

impl RunConfig {
    /// Parses config text on top of the defaults. `physics.rho_left` and
    /// `physics.rho_right` must be present.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let (mut seen_left, mut seen_right) = (false, false);
        let (mut fit_lo, mut fit_hi) = (None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_err(&format!("line {}", lineno + 1), "expected `section.key = value`"));
            };
            let (k, v) = (key.trim(), value.trim().trim_matches('"'));
            match k {
                "physics.gamma" => c.gamma = num(k, v)?,
                "physics.kappa" => c.kappa = num(k, v)?,
                "physics.rho_left" => {
                    c.rho_left = num(k, v)?;
                    seen_left = true;
                }
                "physics.rho_right" => {
                    c.rho_right = num(k, v)?;
                    seen_right = true;
                }
                "physics.phi_left" => c.phi_left = num(k, v)?,
                "physics.phi_right" => c.phi_right = num(k, v)?,
                "physics.mode" => {
                    c.mode = match v {
                        "current" => SolveMode::GivenCurrent,
                        "voltage" => SolveMode::GivenVoltage,
                        _ => return Err(config_err(k, format!("expected `current` or `voltage`, got `{v}`"))),
                    }
                }
                "physics.jbar" => c.jbar = num(k, v)?,
                "physics.doping" => c.doping = Some(v.to_string()),
                "physics.doping_file" => c.doping_file = Some(PathBuf::from(v)),
                "grid.n_cells" => c.n_cells = num(k, v)?,
                "time.t_end" => c.t_end = num(k, v)?,
                "time.cfl" => c.cfl = num(k, v)?,
                "time.snapshot_every" => c.snapshot_every = num(k, v)?,
                "time.dt" => c.dt = Some(num(k, v)?),
                "time.artificial_viscosity" => c.artificial_viscosity = num(k, v)?,
                "time.reconstruction" => c.reconstruction = boolean(k, v)?,
                "time.seed" => c.seed = num(k, v)?,
                "noise.amplitude" => c.noise_amplitude = num(k, v)?,
                "noise.modes" => c.noise_modes = num(k, v)?,
                "noise.reduction" => {
                    c.noise_reduction = match v {
                        "single" | "single-brownian" => NoiseReduction::SingleBrownian,
                        "k-modes" | "kmodes" => NoiseReduction::KModes,
                        _ => return Err(config_err(k, format!("expected `single` or `k-modes`, got `{v}`"))),
                    }
                }
                "perturbation.amplitude" => c.perturbation_amplitude = num(k, v)?,
                "perturbation.n_modes" => c.perturbation_modes = num(k, v)?,
                "ensemble.n_paths" => c.ensemble.n_paths = num(k, v)?,
                "ensemble.master_seed" => c.ensemble.master_seed = num(k, v)?,
                "ensemble.moment_orders" => c.ensemble.moment_orders = list(k, v)?,
                "ensemble.fit_lo" => fit_lo = Some(num(k, v)?),
                "ensemble.fit_hi" => fit_hi = Some(num(k, v)?),
                "ensemble.burn_in_fraction" => c.ensemble.burn_in_fraction = num(k, v)?,
                "ensemble.delta_ladder" => c.ensemble.delta_ladder = list(k, v)?,
                "ensemble.n_obs" => c.ensemble.n_obs = num(k, v)?,
                "ensemble.threads" => c.ensemble.threads = num(k, v)?,
                "steady.j_max" => c.steady.j_max = num(k, v)?,
                "steady.tol" => c.steady.tol = num(k, v)?,
                "steady.max_iter" => c.steady.max_iter = num(k, v)?,
                "output.dir" => c.output_dir = PathBuf::from(v),
                _ => return Err(config_err(k, "unknown key")),
            }
        }
        if !seen_left {
            return Err(config_err("physics.rho_left", "missing"));
        }
        if !seen_right {
            return Err(config_err("physics.rho_right", "missing"));
        }
        c.ensemble.fit_window = match (fit_lo, fit_hi) {
            (None, None) => None,
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (Some(lo), None) => Some((lo, 0.75 * c.t_end)),
            (None, Some(hi)) => Some((0.25 * c.t_end, hi)),
        };
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; a relative `physics.doping_file` is resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err("--config", format!("{}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        if let (Some(f), Some(dir)) = (&c.doping_file, path.parent()) {
            if f.is_relative() {
                c.doping_file = Some(dir.join(f));
            }
        }
        Ok(c)
    }

    /// Checks every field against its module's preconditions.
    pub fn validate(&self) -> Result<()> {
        let wrap = |field: &'static str| move |e: SepError| config_err(field, e);
        if !(self.kappa > 0.0) {
            return Err(config_err("physics.kappa", "must be > 0"));
        }
        PressureLaw::new(self.gamma, self.kappa).map_err(wrap("physics.gamma"))?;
        if !(self.rho_left > 0.0 && self.rho_left.is_finite()) {
            return Err(config_err("physics.rho_left", "must be > 0"));
        }
        if !(self.rho_right > 0.0 && self.rho_right.is_finite()) {
            return Err(config_err("physics.rho_right", "must be > 0"));
        }
        BoundaryData::new(self.rho_left, self.rho_right, self.phi_left, self.phi_right).map_err(wrap("physics.phi_left"))?;
        if !self.jbar.is_finite() {
            return Err(config_err("physics.jbar", "must be finite"));
        }
        let grid = Grid::new(self.n_cells).map_err(wrap("grid.n_cells"))?;
        if self.doping_file.is_none() {
            self.doping_profile(&grid)?;
        }
        self.integrator_config().validate()?;
        if self.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(config_err("time.dt", "must be > 0"));
        }
        if !(self.artificial_viscosity >= 0.0) {
            return Err(config_err("time.artificial_viscosity", "must be >= 0"));
        }
        NoiseModel::new(self.noise_amplitude, self.noise_modes, self.noise_reduction).map_err(wrap("noise.amplitude"))?;
        if self.noise_modes == 0 {
            return Err(config_err("noise.modes", "must be >= 1"));
        }
        if !(self.perturbation_amplitude >= 0.0 && self.perturbation_amplitude.is_finite()) {
            return Err(config_err("perturbation.amplitude", "must be >= 0"));
        }
        if self.perturbation_modes == 0 {
            return Err(config_err("perturbation.n_modes", "must be >= 1"));
        }
        // a zero horizon is a valid single-frame run but has no fit window
        if self.t_end > 0.0 {
            self.ensemble.validate(self.t_end)?;
        }
        if !(self.steady.j_max > 0.0) {
            return Err(config_err("steady.j_max", "must be > 0"));
        }
        if !(self.steady.tol > 0.0) {
            return Err(config_err("steady.tol", "must be > 0"));
        }
        if self.steady.max_iter == 0 {
            return Err(config_err("steady.max_iter", "must be >= 1"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n_cells).map_err(|e| config_err("grid.n_cells", e))
    }

    pub fn law(&self) -> Result<PressureLaw> {
        PressureLaw::new(self.gamma, self.kappa).map_err(|e| config_err("physics.gamma", e))
    }

    pub fn doping_profile(&self, grid: &Grid) -> Result<DopingProfile> {
        match &self.doping_file {
            Some(f) => DopingProfile::from_csv(grid, f).map_err(|e| config_err("physics.doping_file", e)),
            None => match &self.doping {
                Some(d) => DopingProfile::parse(grid, d, self.rho_left).map_err(|e| config_err("physics.doping", e)),
                None => DopingProfile::constant(grid, self.rho_left).map_err(|e| config_err("physics.doping", e)),
            },
        }
    }

    pub fn scheme(&self) -> SchemeOptions {
        SchemeOptions { cfl: self.cfl, artificial_viscosity: self.artificial_viscosity, reconstruction: self.reconstruction }
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            scheme: self.scheme(),
            t_end: self.t_end,
            snapshot_every: self.snapshot_every,
            seed: self.seed,
            stream: 0,
            dt: self.dt,
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.noise_amplitude, self.noise_modes, self.noise_reduction)
            .map_err(|e| config_err("noise.amplitude", e))
    }

    /// Solves for the steady state. Errors other than [`SepError::Config`]
    /// are solver failures.
    pub fn steady_problem(&self) -> Result<(Problem, SteadySolveReport)> {
        let grid = self.grid()?;
        let law = self.law()?;
        let doping = self.doping_profile(&grid)?;
        let (st, report) = match self.mode {
            SolveMode::GivenCurrent => solve_given_current(
                &grid,
                &law,
                &doping,
                (self.rho_left, self.rho_right),
                self.jbar,
                self.phi_left,
                &self.steady,
            )?,
            SolveMode::GivenVoltage => {
                let bd = BoundaryData::new(self.rho_left, self.rho_right, self.phi_left, self.phi_right)?;
                solve_given_voltage(&grid, &law, &doping, &bd, &self.steady)?
            }
        };
        Ok((Problem::new(law, doping, st)?, report))
    }

    /// Initial state drawn from stream [`INITIAL_STREAM`] of `seed`.
    pub fn initial_state(&self, problem: &Problem, seed: u64) -> Result<(FlowField, PerturbationState)> {
        let mut rng = stream_rng(seed, INITIAL_STREAM);
        initial_perturbation(problem, self.perturbation_amplitude, self.perturbation_modes, &mut rng)
    }
}
