//! Experiment configuration, predictions and the ε-sweep driver.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::annulus::{hole_mode, min_h, optimal_degree, AnnulusContext, ContextSummary, ExampleOracle, VelocityFn};
use crate::curve::{build_curve, mollify, place_vortices, Curve, CurveKind, CurveMeasure};
use crate::elliptic::{solve_poisson, BoundaryValues, SolverParams};
use crate::equilibrium::{equilibrium_measure, green_energy, EquilibriumResult, QpParams};
use crate::error::{Error, Result};
use crate::glfield::{energy, hminus1_distance, minimize_f, vorticity, FlowParams, OmegaChoice, RotationSchedule};
use crate::greens::GreenProvider;
use crate::grid::{
    perp_grad, plaquette_curl, rasterize_domain, ComplexField, DomainSpec, Grid2D, ScalarField, VectorField,
};
use crate::io::fmt17;
use crate::recovery::{assemble_trial_annulus, audit_with_coupling, build_trial, AuditContext, AuditRow, TrialState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocitySpec {
    /// `V = x⊥`
    Rigid,
    /// `V(x) = A x`
    Linear { a: [[f64; 2]; 2] },
}

impl VelocitySpec {
    pub fn field(&self) -> VelocityFn {
        match *self {
            VelocitySpec::Rigid => Arc::new(|x, y| [-y, x]),
            VelocitySpec::Linear { a } => Arc::new(move |x, y| [a[0][0] * x + a[0][1] * y, a[1][0] * x + a[1][1] * y]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZetaSource {
    /// `ζ = 4|x|²(1 − |x|²)` on the unit disc.
    Quartic,
    /// `−Δζ = curl V`, zero boundary values.
    Velocity { velocity: VelocitySpec },
}

fn default_nodes() -> usize {
    256
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub shape: CurveKind,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_true")]
    pub closed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// `λ* μ*` with `λ* = ζ_max / (2 I*)`.
    Equilibrium,
    /// Density `∝ 1 + cosine · cos(2π s / ℓ)` in arclength, total `mass`.
    Explicit {
        mass: f64,
        #[serde(default)]
        cosine: f64,
        #[serde(default)]
        mollify: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub omega: OmegaChoice,
    /// Overrides the computed maximum of `ζ`.
    #[serde(default)]
    pub zeta_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRule {
    pub h_over_eps: f64,
    #[serde(default)]
    pub h_max: Option<f64>,
}

impl Default for GridRule {
    fn default() -> Self {
        Self { h_over_eps: 0.25, h_max: None }
    }
}

impl GridRule {
    pub fn h(&self, eps: f64) -> f64 {
        let h = self.h_over_eps * eps;
        self.h_max.map_or(h, |m| h.min(m))
    }
}

fn default_green_h() -> f64 {
    0.01
}

fn default_delta0() -> f64 {
    0.3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub zeta: ZetaSource,
    pub curve: CurveSpec,
    pub measure: MeasureSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub grid: GridRule,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub qp: QpParams,
    /// Spacing of the grid used for numeric Green columns and for ζ when solved.
    #[serde(default = "default_green_h")]
    pub green_h: f64,
    /// Spacing of the fixed grid on which vorticity distances are measured.
    #[serde(default = "default_green_h")]
    pub distance_h: f64,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    /// Rotation speeds for the annulus hole-mode table; defaults to `Ω(ε)` over the sweep.
    #[serde(default)]
    pub annulus_omegas: Vec<f64>,
    #[serde(default)]
    pub flow: FlowParams,
    /// Amplitude of the seeded random perturbation applied before descent.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        for w in self.eps.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidInput("epsilon list must be strictly decreasing".into()));
            }
        }
        for &e in &self.eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::InvalidInput(format!("epsilon {e} must lie in (0, 1)")));
            }
            let h = self.grid.h(e);
            if !(h > 0.0 && h <= e / 2.0 + 1e-15) {
                return Err(Error::InvalidInput(format!("grid rule gives h = {h} which does not resolve epsilon {e}")));
            }
        }
        if !(self.green_h > 0.0 && self.distance_h > 0.0 && self.delta0 > 0.0 && self.delta0 < 1.0) {
            return Err(Error::InvalidInput("green_h, distance_h must be positive and delta0 in (0, 1)".into()));
        }
        if let ZetaSource::Quartic = self.zeta {
            if !matches!(self.domain, DomainSpec::Disc { radius } if radius == 1.0) {
                return Err(Error::InvalidInput(
                    "the quartic rotation potential vanishes only on the unit disc boundary".into(),
                ));
            }
        }
        if let MeasureSpec::Explicit { mass, cosine, .. } = self.measure {
            if !(mass > 0.0) || !(cosine.abs() < 1.0) {
                return Err(Error::InvalidInput("explicit measure needs mass > 0 and |cosine| < 1".into()));
            }
        }
        if let Some(z) = self.schedule.zeta_max {
            RotationSchedule::new(z, self.schedule.omega)?;
        }
        if self.eps.len() >= 2 {
            RotationSchedule::new(1.0, self.schedule.omega)?.check_regime(&self.eps)?;
        }
        if !(self.perturbation >= 0.0) {
            return Err(Error::InvalidInput("perturbation must be nonnegative".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Rotation potential on a grid.
pub fn zeta_on(grid: &Grid2D, source: &ZetaSource, params: &SolverParams) -> Result<ScalarField> {
    match source {
        ZetaSource::Quartic => Ok(grid.sample_interior(|x, y| {
            let r2 = x * x + y * y;
            4.0 * r2 * (1.0 - r2)
        })),
        ZetaSource::Velocity { velocity } => {
            let v = velocity.field();
            let ve = VectorField::sample(grid.corners(), |x, y| v(x, y));
            let curl = plaquette_curl(grid.corners(), &ve)?.into_node_field();
            let mut rhs = ScalarField::zeros(grid.dims);
            for k in grid.interior_nodes() {
                rhs.values[k] = curl.values[k];
            }
            solve_poisson(grid, &rhs, &BoundaryValues::Zero, params)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PredictionRow {
    pub eps: f64,
    pub h: f64,
    pub omega: f64,
    pub big_omega: f64,
    /// `ζ_max ω / (4π I*)`.
    pub expected_d: f64,
    /// `floor(ω μ(Σ) / 2π)` for the configured measure.
    pub placed_d: usize,
    /// `−ζ²_max ω² / (4 I*)`.
    pub expected_min_energy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoleRow {
    pub big_omega: f64,
    pub d: i64,
    pub tie: bool,
    pub min_h: f64,
    pub leading: f64,
    pub remainder: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnulusPrediction {
    pub context: ContextSummary,
    pub oracle: Option<ExampleOracle>,
    pub holes: Vec<HoleRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Predictions {
    pub config_hash: String,
    pub zeta_max: f64,
    /// `I*` (Green energy of the equilibrium probability measure).
    pub i_star: f64,
    pub capacity: f64,
    pub lambda_star: f64,
    /// `−ζ²_max / (4 I*)`.
    pub f_target: f64,
    /// `μ(D)` and `I(μ)` of the configured measure.
    pub mass: f64,
    pub measure_energy: f64,
    pub kkt_residual: f64,
    pub rows: Vec<PredictionRow>,
    pub annulus: Option<AnnulusPrediction>,
    pub warnings: Vec<String>,
}

/// Everything the sweep needs that does not depend on ε.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub curve: Arc<Curve>,
    pub provider: GreenProvider,
    pub equilibrium: EquilibriumResult,
    pub measure: CurveMeasure,
    pub schedule: RotationSchedule,
    pub predictions: Predictions,
}

pub fn green_provider(config: &ExperimentConfig) -> Result<GreenProvider> {
    match config.domain {
        DomainSpec::Disc { radius } => GreenProvider::disc(radius),
        _ => {
            let g = Arc::new(rasterize_domain(&config.domain, config.green_h)?);
            GreenProvider::numeric(g, config.solver)
        }
    }
}

/// Equilibrium pipeline and closed-form predictions; runs no trial-state solve.
pub fn predict(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let mut warnings = Vec::new();
    let curve =
        Arc::new(build_curve(&config.curve.shape, config.curve.nodes, config.curve.closed, Some(&config.domain))?);
    let provider = green_provider(config)?;
    let equilibrium = equilibrium_measure(curve.clone(), &provider, &config.qp)?;

    let mut annulus = None;
    let zeta_max = match (config.schedule.zeta_max, &config.zeta) {
        (Some(z), _) => z,
        (None, ZetaSource::Quartic) => 1.0,
        (None, ZetaSource::Velocity { .. }) => {
            let g = rasterize_domain(&config.domain, config.green_h)?;
            let z = zeta_on(&g, &config.zeta, &config.solver)?;
            let (mut hi, mut lo) = (0.0f64, 0.0f64);
            for k in g.interior_nodes() {
                hi = hi.max(z.values[k]);
                lo = lo.min(z.values[k]);
            }
            if hi < -lo {
                warnings.push(format!("max zeta {hi:.4e} is below max |zeta| {:.4e}; consider reversing V", -lo));
            }
            if lo < -1e-9 * hi.abs().max(1.0) {
                warnings.push(format!("zeta takes negative values (min {lo:.4e})"));
            }
            hi
        }
    };
    let schedule = RotationSchedule::new(zeta_max, config.schedule.omega)?;
    let i_star = equilibrium.energy;
    let lambda_star = zeta_max / (2.0 * i_star);
    let measure = match config.measure {
        MeasureSpec::Equilibrium => equilibrium.measure.scaled(lambda_star),
        MeasureSpec::Explicit { mass, cosine, .. } => {
            let len = curve.length;
            let m = CurveMeasure::from_density(curve.clone(), |t| 1.0 + cosine * (2.0 * PI * t / len).cos())?;
            let total = m.total_mass();
            m.scaled(mass / total)
        }
    };
    let mass = measure.total_mass();
    let measure_energy = green_energy(&measure, &provider)?;
    let rows = config
        .eps
        .iter()
        .map(|&eps| {
            let omega = schedule.omega(eps);
            PredictionRow {
                eps,
                h: config.grid.h(eps),
                omega,
                big_omega: schedule.big_omega(eps),
                expected_d: zeta_max * omega / (4.0 * PI * i_star),
                placed_d: (omega * mass / (2.0 * PI) * (1.0 + 1e-12)).floor() as usize,
                expected_min_energy: -zeta_max * zeta_max * omega * omega / (4.0 * i_star),
            }
        })
        .collect();
    if config.domain.is_annulus() {
        if let ZetaSource::Velocity { velocity } = &config.zeta {
            let g = Arc::new(rasterize_domain(&config.domain, config.green_h)?);
            let ctx = AnnulusContext::build(g, &velocity.field(), &config.solver)?;
            let omegas: Vec<f64> = if config.annulus_omegas.is_empty() {
                config.eps.iter().map(|&e| schedule.big_omega(e)).collect()
            } else {
                config.annulus_omegas.clone()
            };
            let holes = omegas
                .iter()
                .map(|&om| {
                    let m = min_h(&ctx, om);
                    HoleRow {
                        big_omega: om,
                        d: m.d,
                        tie: m.tie,
                        min_h: m.value,
                        leading: m.leading,
                        remainder: m.remainder,
                    }
                })
                .collect();
            let oracle = match (&config.domain, velocity) {
                (DomainSpec::Annulus { outer, inner }, VelocitySpec::Rigid) => {
                    Some(ExampleOracle::new(*outer, *inner)?)
                }
                _ => None,
            };
            if !ctx.zeta_sign_ok {
                warnings.push("max zeta differs from max |zeta| on the annulus".into());
            }
            annulus = Some(AnnulusPrediction { context: ctx.summary(), oracle, holes });
        }
    }
    let predictions = Predictions {
        config_hash: config.hash(),
        zeta_max,
        i_star,
        capacity: equilibrium.capacity,
        lambda_star,
        f_target: -zeta_max * zeta_max / (4.0 * i_star),
        mass,
        measure_energy,
        kkt_residual: equilibrium.kkt_residual,
        rows,
        annulus,
        warnings,
    };
    Ok(Prepared { config: config.clone(), curve, provider, equilibrium, measure, schedule, predictions })
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_hash: String,
    pub eps: f64,
    pub h: f64,
    pub status: String,
    pub audit: Option<AuditRow>,
    /// Relative gap `|F − target| / |target|`.
    pub f_gap: Option<f64>,
    pub mollify_k: Option<f64>,
    pub hole_winding: Option<i64>,
    pub kappa: Option<f64>,
}

pub const CSV_COLUMNS: &[&str] = &[
    "config_hash",
    "eps",
    "h",
    "status",
    "d",
    "omega",
    "big_omega",
    "kinetic",
    "potential",
    "rotation",
    "e_eps",
    "f_eps",
    "kinetic_split",
    "rotation_split",
    "target_energy",
    "target_rotation",
    "target_f",
    "f_gap",
    "vorticity_distance",
    "total_winding",
    "profile_energy",
    "l4_norm",
    "phase_residual",
    "solver_iterations",
    "mollify_k",
    "hole_winding",
    "kappa",
];

impl SweepRow {
    pub fn to_csv_line(&self) -> String {
        let f = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
        let a = self.audit.as_ref();
        let status = self.status.replace([',', '\n', '\r'], ";");
        let cols = vec![
            self.config_hash.clone(),
            fmt17(self.eps),
            fmt17(self.h),
            status,
            a.map(|a| a.d.to_string()).unwrap_or_default(),
            f(a.map(|a| a.omega)),
            f(a.map(|a| a.big_omega)),
            f(a.map(|a| a.kinetic)),
            f(a.map(|a| a.potential)),
            f(a.map(|a| a.rotation)),
            f(a.map(|a| a.e_eps)),
            f(a.map(|a| a.f_eps)),
            f(a.map(|a| a.kinetic_split)),
            f(a.map(|a| a.rotation_split)),
            f(a.map(|a| a.target_energy)),
            f(a.map(|a| a.target_rotation)),
            f(a.map(|a| a.target_f)),
            f(self.f_gap),
            f(a.map(|a| a.vorticity_distance)),
            a.map(|a| a.total_winding.to_string()).unwrap_or_default(),
            f(a.map(|a| a.profile_energy)),
            f(a.map(|a| a.l4_norm)),
            f(a.map(|a| a.phase_residual)),
            a.map(|a| a.solver_iterations.to_string()).unwrap_or_default(),
            f(self.mollify_k),
            self.hole_winding.map(|w| w.to_string()).unwrap_or_default(),
            f(self.kappa),
        ];
        cols.join(",")
    }
}

/// Appends rows strictly in sweep order, flushing each line as soon as it is next in line.
struct OrderedCsv {
    file: Option<File>,
    next: usize,
    pending: BTreeMap<usize, String>,
}

impl OrderedCsv {
    fn push(&mut self, index: usize, line: String) -> std::io::Result<()> {
        self.pending.insert(index, line);
        while let Some(line) = self.pending.remove(&self.next) {
            if let Some(f) = self.file.as_mut() {
                writeln!(f, "{line}")?;
                f.flush()?;
            }
            self.next += 1;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads: rayon::current_num_threads(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub predictions: Predictions,
    pub rows: Vec<SweepRow>,
    pub environment: Environment,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Smallest smoothing level whose mollified measure is within `slack` of `μ` in `H⁻¹`.
pub fn choose_mollification(
    mu: &CurveMeasure,
    grid: &Grid2D,
    mu_density: &ScalarField,
    slack: f64,
    params: &SolverParams,
) -> Result<(f64, CurveMeasure)> {
    let max_spacing = mu.curve.spacing.iter().cloned().fold(0.0, f64::max);
    let mut k = 1.0 / mu.curve.length;
    let mut last = None;
    while 1.0 / k >= 2.0 * max_spacing {
        let m = mollify(mu, k)?;
        let d = hminus1_distance(grid, &m.rasterize(grid, 8), mu_density, params)?;
        if d <= slack {
            return Ok((k, m));
        }
        last = Some((k, m));
        k *= 2.0;
    }
    last.ok_or_else(|| Error::InvalidInput("curve too coarse to mollify".into()))
}

struct SweepShared<'a> {
    prep: &'a Prepared,
    coarse: Grid2D,
    mu_density: ScalarField,
}

fn sweep_row(shared: &SweepShared<'_>, eps: f64) -> SweepRow {
    let prep = shared.prep;
    let cfg = &prep.config;
    let h = cfg.grid.h(eps);
    let mut row = SweepRow { config_hash: prep.predictions.config_hash.clone(), eps, h, ..Default::default() };
    match sweep_row_inner(shared, eps, h, &mut row) {
        Ok(()) => row.status = "ok".into(),
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

fn sweep_row_inner(shared: &SweepShared<'_>, eps: f64, h: f64, row: &mut SweepRow) -> Result<()> {
    let prep = shared.prep;
    let cfg = &prep.config;
    let s = &prep.schedule;
    let omega = s.omega(eps);
    let mut mu = prep.measure.clone();
    if let MeasureSpec::Explicit { mollify: true, .. } = cfg.measure {
        let slack = 0.1 * (2.0 * prep.predictions.measure_energy).sqrt() / omega;
        let (k, m) = choose_mollification(&prep.measure, &shared.coarse, &shared.mu_density, slack, &cfg.solver)?;
        row.mollify_k = Some(k);
        mu = m;
    }
    let placement = place_vortices(&mu, omega)?;
    let grid = rasterize_domain(&cfg.domain, h)?;
    let actx = AuditContext {
        schedule: *s,
        target_energy: prep.predictions.measure_energy,
        mass: mu.total_mass(),
        distance_grid: &shared.coarse,
        mu_density: &shared.mu_density,
        params: cfg.solver,
        delta0: cfg.delta0,
    };
    let big_omega = s.big_omega(eps);
    let (state, coupling): (TrialState, VectorField) = if grid.has_inner_boundary() {
        let velocity = match &cfg.zeta {
            ZetaSource::Velocity { velocity } => velocity.field(),
            ZetaSource::Quartic => return Err(Error::InvalidInput("annulus sweeps need a velocity field".into())),
        };
        let grid_arc = Arc::new(grid.clone());
        let ctx = AnnulusContext::build(grid_arc, &velocity, &cfg.solver)?;
        let st = assemble_trial_annulus(&grid, &placement.points, omega, eps, &ctx.xi, ctx.cap, &cfg.solver)?;
        let (d, _) = optimal_degree(ctx.gamma_v, big_omega);
        let hm = hole_mode(&ctx, d, big_omega)?;
        (st, perp_grad(&grid, &hm.phi)?)
    } else {
        let zeta = zeta_on(&grid, &cfg.zeta, &cfg.solver)?;
        let st = build_trial(&grid, &placement.points, omega, eps, &cfg.solver)?;
        let a = crate::glfield::perp_grad_interior(&grid, &zeta)?.scaled(big_omega);
        (st, a)
    };
    row.hole_winding = state.hole_winding;
    row.kappa = state.kappa;
    let audit = audit_with_coupling(&grid, &state, eps, &coupling, &actx)?;
    if audit.target_f != 0.0 {
        row.f_gap = Some((audit.f_eps - audit.target_f).abs() / audit.target_f.abs());
    }
    row.audit = Some(audit);
    Ok(())
}

/// Predictions first, then every ε-row in parallel with ordered, incremental CSV output.
pub fn run_sweep(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    let prep = predict(config)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("predictions.json"), &prep.predictions)?;
        fs::write(dir.join("measure.csv"), prep.measure.to_csv())?;
        fs::write(dir.join("equilibrium.csv"), prep.equilibrium.to_csv())?;
    }
    let coarse = rasterize_domain(&config.domain, config.distance_h)?;
    let mu_density = prep.measure.rasterize(&coarse, 8);
    let shared = SweepShared { prep: &prep, coarse, mu_density };

    let file = match out {
        Some(dir) => {
            let mut f = File::create(dir.join("report.csv"))?;
            writeln!(f, "{}", CSV_COLUMNS.join(","))?;
            f.flush()?;
            Some(f)
        }
        None => None,
    };
    let writer = Mutex::new(OrderedCsv { file, next: 0, pending: BTreeMap::new() });
    let rows: Vec<SweepRow> = config
        .eps
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let row = sweep_row(&shared, eps);
            let mut w = writer.lock().unwrap_or_else(|p| p.into_inner());
            if let Err(e) = w.push(i, row.to_csv_line()) {
                eprintln!("failed to append row {i}: {e}");
            }
            row
        })
        .collect();
    let report = ExperimentReport { predictions: prep.predictions.clone(), rows, environment: Environment::current() };
    if let Some(dir) = out {
        write_json(&dir.join("summary.json"), &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub i_star: f64,
    pub capacity: f64,
    pub lambda_star: f64,
    pub value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub density_spread: f64,
}

pub fn run_equilibrium(config: &ExperimentConfig, out: Option<&Path>) -> Result<EquilibriumReport> {
    let prep = predict(config)?;
    let eq = &prep.equilibrium;
    let s = eq.summary(prep.predictions.zeta_max)?;
    let report = EquilibriumReport {
        i_star: s.energy,
        capacity: s.capacity,
        lambda_star: s.lambda,
        value: s.value,
        kkt_residual: eq.kkt_residual,
        iterations: eq.iterations,
        density_spread: eq.density_spread(),
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("equilibrium.csv"), eq.to_csv())?;
        fs::write(dir.join("measure.csv"), eq.measure.to_csv())?;
        write_json(&dir.join("equilibrium.json"), &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoleModeRow {
    pub big_omega: f64,
    pub d: i64,
    pub tie: bool,
    pub alpha: f64,
    pub g_formula: f64,
    pub g_integral: f64,
    /// `H_Ω(u_d)` evaluated on the grid.
    pub h_omega: f64,
    pub leading: f64,
    pub remainder: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnnulusReport {
    pub context: ContextSummary,
    pub gamma_gap: f64,
    pub oracle: Option<ExampleOracle>,
    pub rows: Vec<HoleModeRow>,
}

/// Context, oracle comparison and hole-mode table on a grid of spacing `green_h`.
pub fn run_annulus(config: &ExperimentConfig, out: Option<&Path>) -> Result<AnnulusReport> {
    config.validate()?;
    let velocity = match &config.zeta {
        ZetaSource::Velocity { velocity } => velocity.clone(),
        ZetaSource::Quartic => return Err(Error::InvalidInput("annulus runs need a velocity field".into())),
    };
    if !config.domain.is_annulus() {
        return Err(Error::InvalidInput("annulus runs need an annulus domain".into()));
    }
    let grid = Arc::new(rasterize_domain(&config.domain, config.green_h)?);
    let ctx = AnnulusContext::build(grid, &velocity.field(), &config.solver)?;
    let omegas: Vec<f64> = if config.annulus_omegas.is_empty() {
        let s = RotationSchedule::new(config.schedule.zeta_max.unwrap_or(ctx.zeta_max), config.schedule.omega)?;
        config.eps.iter().map(|&e| s.big_omega(e)).collect()
    } else {
        config.annulus_omegas.clone()
    };
    let mut rows = Vec::new();
    for om in omegas {
        let m = min_h(&ctx, om);
        let hm = hole_mode(&ctx, m.d, om)?;
        rows.push(HoleModeRow {
            big_omega: om,
            d: m.d,
            tie: m.tie,
            alpha: hm.alpha,
            g_formula: hm.g_formula,
            g_integral: hm.g_integral,
            h_omega: ctx.h_omega(&hm.u, om, None)?,
            leading: m.leading,
            remainder: m.remainder,
        });
    }
    let oracle = match (&config.domain, &velocity) {
        (DomainSpec::Annulus { outer, inner }, VelocitySpec::Rigid) => Some(ExampleOracle::new(*outer, *inner)?),
        _ => None,
    };
    let report = AnnulusReport { context: ctx.summary(), gamma_gap: ctx.gamma_gap(), oracle, rows };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("annulus.json"), &report)?;
        let mut csv = String::from("big_omega,d,tie,alpha,g_formula,g_integral,h_omega,leading,remainder\n");
        for r in &report.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fmt17(r.big_omega),
                r.d,
                r.tie,
                fmt17(r.alpha),
                fmt17(r.g_formula),
                fmt17(r.g_integral),
                fmt17(r.h_omega),
                fmt17(r.leading),
                fmt17(r.remainder)
            ));
        }
        fs::write(dir.join("hole_modes.csv"), csv)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VortexReport {
    pub position: [f64; 2],
    pub degree: i64,
    pub distance_to_curve: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizeReport {
    pub eps: f64,
    pub seed_vortices: usize,
    pub predicted_count: f64,
    pub initial_f: f64,
    pub final_f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub vortices: Vec<VortexReport>,
    /// All vortices within 0.1 of the curve with degree +1.
    pub near_curve: bool,
    /// Final count within ±2 of the prediction.
    pub count_ok: bool,
}

/// Distance from `p` to a curve, by dense sampling in arclength.
pub fn distance_to_curve(curve: &Curve, p: [f64; 2]) -> f64 {
    let n = 4096;
    (0..=n)
        .map(|k| {
            let q = curve.point_at(curve.length * k as f64 / n as f64);
            (p[0] - q[0]).hypot(p[1] - q[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Descent on `F_ε` from a recovery seed at the first ε of the config.
pub fn run_minimize(config: &ExperimentConfig, out: Option<&Path>) -> Result<MinimizeReport> {
    let prep = predict(config)?;
    if config.domain.is_annulus() {
        return Err(Error::InvalidInput("descent is implemented for simply connected domains".into()));
    }
    let eps = *config.eps.first().ok_or_else(|| Error::InvalidInput("minimize needs at least one epsilon".into()))?;
    let s = &prep.schedule;
    let omega = s.omega(eps);
    let grid = rasterize_domain(&config.domain, config.grid.h(eps))?;
    let zeta = zeta_on(&grid, &config.zeta, &config.solver)?;
    let placement = place_vortices(&prep.measure, omega)?;
    let seed = build_trial(&grid, &placement.points, omega, eps, &config.solver)?;
    let mut u: ComplexField = seed.u.clone();
    if config.perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mask = grid.corners();
        for (k, z) in u.values.iter_mut().enumerate() {
            if mask.node[k] {
                *z += Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * config.perturbation;
            }
        }
    }
    let initial_f = energy(&grid, &u, eps, s, &zeta)?.f_eps;
    let flow = minimize_f(&grid, &u, eps, s, &zeta, &config.flow)?;
    let final_f = energy(&grid, &flow.u, eps, s, &zeta)?.f_eps;
    let vort = vorticity(&grid, &flow.u, config.delta0)?;
    let vortices: Vec<VortexReport> = vort
        .vortices(&grid)
        .into_iter()
        .map(|v| VortexReport {
            position: v.position,
            degree: v.degree,
            distance_to_curve: distance_to_curve(&prep.curve, v.position),
        })
        .collect();
    let predicted = prep.predictions.zeta_max * omega / (4.0 * PI * prep.predictions.i_star);
    let report = MinimizeReport {
        eps,
        seed_vortices: seed.d,
        predicted_count: predicted,
        initial_f,
        final_f,
        iterations: flow.iterations,
        converged: flow.converged,
        gradient_norm: flow.gradient_norm,
        near_curve: vortices.iter().all(|v| v.degree == 1 && v.distance_to_curve <= 0.1),
        count_ok: (vortices.len() as f64 - predicted).abs() <= 2.0,
        vortices,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("minimize.json"), &report)?;
        crate::io::write_field(&dir.join("minimizer.bin"), grid.h, &crate::io::FieldData::Complex(flow.u))?;
    }
    Ok(report)
}

/// Output directory from the config, else `fallback`.
pub fn output_dir(config: &ExperimentConfig, fallback: Option<PathBuf>) -> Option<PathBuf> {
    fallback.or_else(|| config.output.as_ref().map(PathBuf::from))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn smoke_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "domain": {"kind": "disc", "radius": 1.0},
                "zeta": {"kind": "quartic"},
                "curve": {"shape": {"kind": "circle", "center": [0.0, 0.0], "radius": 0.7071067811865476}, "nodes": 128},
                "measure": {"kind": "equilibrium"},
                "schedule": {"omega": {"kind": "sqrt_log"}},
                "eps": [0.04],
                "grid": {"h_over_eps": 0.25}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let c = smoke_config();
        assert_eq!(c.hash(), smoke_config().hash());
        let mut bad = c.clone();
        bad.eps = vec![0.01, 0.02];
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.grid.h_over_eps = 0.8;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.domain = DomainSpec::disc(2.0);
        assert!(bad.validate().is_err());
        let mut other = c.clone();
        other.seed = 3;
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn predictions_disc() {
        let p = predict(&smoke_config()).unwrap().predictions;
        assert!((p.i_star - 0.027575).abs() / 0.027575 < 0.02, "{}", p.i_star);
        assert!((p.lambda_star - 18.13).abs() < 0.4);
        assert!((p.f_target + 9.065).abs() < 0.2);
        assert_eq!(p.rows.len(), 1);
    }

    #[test]
    fn empty_sweep_has_predictions_only() {
        let mut c = smoke_config();
        c.eps.clear();
        let r = run_sweep(&c, None).unwrap();
        assert!(r.rows.is_empty());
        assert!(r.predictions.i_star > 0.0);
    }

    #[test]
    fn ordered_writer_reorders() {
        let mut w = OrderedCsv { file: None, next: 0, pending: BTreeMap::new() };
        w.push(2, "c".into()).unwrap();
        w.push(0, "a".into()).unwrap();
        assert_eq!(w.next, 1);
        w.push(1, "b".into()).unwrap();
        assert_eq!(w.next, 3);
        assert!(w.pending.is_empty());
    }
}
