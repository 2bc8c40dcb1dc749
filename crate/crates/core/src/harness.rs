//! Experiment configuration, seeded parallel runs and report emission.
//!
//! Every replication draws from its own stream and results are aggregated
//! in index order, so outputs depend only on the configuration and seed.

use std::io::{self, Write};
use std::time::Instant;

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::MixtureDensitySpec;
use crate::error::{Error, Result};
use crate::estimate::{estimator_normality_experiment, NormalityOptions, NormalityReport, ThresholdPolicy};
use crate::lan::{
    exact_llr, fisher_closed_form, fisher_ergodic, main_term_sum, quasi_llr, remainder_series, sum_remainders,
    LanSample, RemainderComponents, ELL_NODES,
};
use crate::linalg::norm;
use crate::model::{make_builtin_model, BuiltinKind, ClosedForm, JumpDiffusionModel, JumpLaw, LevySpec, ParameterContext};
use crate::quadrature::GaussLegendre;
use crate::rng::StreamKey;
use crate::simulate::{simulate_grid, Method, ObservationRecord, Retention, SimulationScheme, DEFAULT_EULER_SUBSTEPS};
use crate::stats::{ks_distance_normal, wilson_interval, wls_slope, Moments};

const TAIL_BLOCK: u64 = 1 << 16;
const GAMMA_AUX_HORIZON: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpConfig {
    None,
    Gaussian { intensity: f64, mean: f64, sd: f64 },
    SupportAwayFromZero { intensity: f64, radius: f64, rate: f64 },
    Power { alpha: f64 },
    GaussianPlusPower { c1: f64, c2: f64, kappa: f64 },
    GammaPlusPower { c1: f64, c2: f64, kappa: f64, alpha: f64, beta: f64 },
}

impl Default for JumpConfig {
    fn default() -> Self {
        JumpConfig::None
    }
}

impl JumpConfig {
    pub fn levy(&self) -> Result<LevySpec<f64>> {
        match *self {
            JumpConfig::None => Ok(LevySpec::none(1)),
            JumpConfig::Gaussian { intensity, mean, sd } => LevySpec::gaussian(intensity, mean, sd),
            JumpConfig::SupportAwayFromZero { intensity, radius, rate } => {
                LevySpec::with_intensity(JumpLaw::SupportAwayFromZero { radius, rate }, intensity)
            }
            JumpConfig::Power { alpha } => LevySpec::from_class(JumpLaw::Power { alpha }),
            JumpConfig::GaussianPlusPower { c1, c2, kappa } => {
                LevySpec::from_class(JumpLaw::GaussianPlusPower { c1, c2, kappa })
            }
            JumpConfig::GammaPlusPower { c1, c2, kappa, alpha, beta } => {
                LevySpec::from_class(JumpLaw::GammaPlusPower { c1, c2, kappa, alpha, beta })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: BuiltinKind,
    pub theta0: f64,
    pub sigma: f64,
    #[serde(default)]
    pub jumps: JumpConfig,
}

impl ModelConfig {
    pub fn build(&self) -> Result<JumpDiffusionModel<f64>> {
        make_builtin_model(self.kind, self.sigma, self.jumps.levy()?)
    }
}

/// `power` means `Delta_n = n^{-beta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaRule {
    Power { beta: f64 },
    Fixed(f64),
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::Power { beta: 0.6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default)]
    pub delta: DeltaRule,
}

impl GridConfig {
    pub fn step(&self) -> f64 {
        match self.delta {
            DeltaRule::Power { beta } => (self.n as f64).powf(-beta),
            DeltaRule::Fixed(d) => d,
        }
    }

    pub fn context(&self, theta0: f64, u: f64) -> Result<ParameterContext<f64>> {
        ParameterContext::new(theta0, u, self.n, self.step())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Exact,
    Quasi,
    Main,
    Remainders,
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Exact => "exact_llr",
            Statistic::Quasi => "quasi_llr",
            Statistic::Main => "main_term",
            Statistic::Remainders => "remainders",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_half_width() -> f64 {
    5.0
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    100
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { half_width: default_half_width(), tol: default_tol(), max_iter: default_max_iter() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default = "default_u")]
    pub u: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<Statistic>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: ThresholdPolicy,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

fn default_u() -> Vec<f64> {
    vec![1.0]
}
fn default_replications() -> usize {
    2000
}
fn default_statistics() -> Vec<Statistic> {
    vec![Statistic::Quasi, Statistic::Main]
}
fn default_threshold() -> ThresholdPolicy {
    ThresholdPolicy::Default
}
fn default_method() -> Method {
    Method::ExactClosedForm
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            u: default_u(),
            replications: default_replications(),
            statistics: default_statistics(),
            seed: 0,
            threshold: default_threshold(),
            x0: 0.0,
            method: default_method(),
            estimator: EstimatorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "default_scaling_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    /// Intervals per step size.
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    /// Intervals per simulated path; each path restarts from `x0`.
    #[serde(default = "default_chunk")]
    pub chunk: usize,
}

fn default_scaling_deltas() -> Vec<f64> {
    vec![0.1, 0.05, 0.025]
}
fn default_p() -> Vec<f64> {
    vec![2.0]
}
fn default_intervals() -> usize {
    100_000
}
fn default_chunk() -> usize {
    1000
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { deltas: default_scaling_deltas(), p: default_p(), intervals: default_intervals(), chunk: default_chunk() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    #[serde(default = "default_tail_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_draws")]
    pub draws: u64,
    #[serde(default = "one")]
    pub rho1: f64,
    #[serde(default = "one")]
    pub rho2: f64,
    #[serde(default = "default_upsilon")]
    pub upsilon: f64,
    #[serde(default = "default_gamma_exponent")]
    pub gamma: f64,
    /// Normal quantile of the Wilson intervals.
    #[serde(default = "default_z")]
    pub z: f64,
}

fn default_tail_deltas() -> Vec<f64> {
    vec![0.01, 0.001]
}
fn default_draws() -> u64 {
    10_000_000
}
fn one() -> f64 {
    1.0
}
fn default_upsilon() -> f64 {
    0.4
}
fn default_gamma_exponent() -> f64 {
    0.1
}
fn default_z() -> f64 {
    1.96
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            deltas: default_tail_deltas(),
            draws: default_draws(),
            rho1: 1.0,
            rho2: 1.0,
            upsilon: default_upsilon(),
            gamma: default_gamma_exponent(),
            z: default_z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: String,
}

fn default_out() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub tails: TailConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("config: {e}")]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collects every offending field.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let m = &self.model;
        if !(m.sigma > 0.0 && m.sigma.is_finite()) {
            bad.push(format!("model.sigma: must be positive and finite, got {}", m.sigma));
        }
        if !m.theta0.is_finite() {
            bad.push("model.theta0: must be finite".into());
        } else if m.kind == BuiltinKind::Ou && m.theta0 <= 0.0 {
            bad.push(format!("model.theta0: the Ornstein-Uhlenbeck model needs theta0 > 0, got {}", m.theta0));
        }
        if let Err(e) = m.jumps.levy() {
            bad.push(format!("model.jumps: {e}"));
        }
        if self.grid.n == 0 {
            bad.push("grid.n: must be positive".into());
        }
        match self.grid.delta {
            DeltaRule::Power { beta } if !(beta > 0.0 && beta < 1.0) => {
                bad.push(format!("grid.delta.power.beta: must lie in (0, 1), got {beta}"))
            }
            DeltaRule::Fixed(d) if !(d > 0.0 && d <= 1.0) => {
                bad.push(format!("grid.delta.fixed: must lie in (0, 1], got {d}"))
            }
            _ => {}
        }
        let e = &self.experiment;
        if e.replications == 0 {
            bad.push("experiment.replications: must be at least 1".into());
        }
        if e.u.is_empty() || e.u.iter().any(|u| !u.is_finite()) {
            bad.push("experiment.u: needs at least one finite value".into());
        }
        if e.statistics.is_empty() {
            bad.push("experiment.statistics: must not be empty".into());
        }
        if let ThresholdPolicy::Fixed(r) = e.threshold {
            if !(r > 0.0) {
                bad.push(format!("experiment.threshold.fixed: must be positive, got {r}"));
            }
        }
        if !e.x0.is_finite() {
            bad.push("experiment.x0: must be finite".into());
        }
        if e.method == Method::ExactClosedForm && m.kind == BuiltinKind::Ou && m.theta0 <= 0.0 {
            bad.push("experiment.method: exact Ornstein-Uhlenbeck simulation needs theta0 > 0".into());
        }
        if !(e.estimator.half_width > 0.0) || !(e.estimator.tol > 0.0) || e.estimator.max_iter == 0 {
            bad.push("experiment.estimator: half_width, tol and max_iter must be positive".into());
        }
        let s = &self.scaling;
        if s.deltas.len() < 3 {
            bad.push(format!("scaling.deltas: need at least 3 step sizes, got {}", s.deltas.len()));
        }
        if s.deltas.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            bad.push("scaling.deltas: every step must lie in (0, 1]".into());
        }
        if s.p.is_empty() || s.p.iter().any(|p| !(*p > 0.0)) {
            bad.push("scaling.p: needs positive exponents".into());
        }
        if s.chunk == 0 || s.intervals < s.chunk {
            bad.push("scaling.chunk: must be positive and at most scaling.intervals".into());
        }
        let t = &self.tails;
        if t.deltas.is_empty() || t.deltas.iter().any(|d| !(*d > 0.0)) {
            bad.push("tails.deltas: needs positive step sizes".into());
        }
        if t.draws == 0 {
            bad.push("tails.draws: must be positive".into());
        }
        if !(t.rho1 > 0.0) || !(t.rho2 > 0.0) || !(t.upsilon > 0.0) || !(t.gamma > 0.0) || !(t.z > 0.0) {
            bad.push("tails: rho1, rho2, upsilon, gamma and z must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    pub fn key(&self) -> StreamKey {
        StreamKey::new(self.experiment.seed, 0)
    }

    fn scheme(&self, key: StreamKey) -> SimulationScheme {
        match self.experiment.method {
            Method::ExactClosedForm => SimulationScheme::exact(key),
            Method::Euler => SimulationScheme { method: Method::Euler, substeps: DEFAULT_EULER_SUBSTEPS, key },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSource {
    ClosedForm,
    ErgodicAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub source: GammaSource,
    pub closed_form: Option<f64>,
    pub ergodic: f64,
    pub ergodic_horizon: f64,
}

/// Closed-form Fisher information when available, with the ergodic average
/// on an auxiliary path of horizon at least 1000 as a cross-check.
pub fn target_gamma(config: &ExperimentConfig, model: &JumpDiffusionModel<f64>) -> Result<GammaEstimate> {
    let delta = config.grid.step();
    let n = config.grid.n.max((GAMMA_AUX_HORIZON / delta).ceil() as usize);
    let ctx = ParameterContext::new(config.model.theta0, 0.0, n, delta)?;
    let key = config.key().derive(0x6a77);
    let record = simulate_grid(model, ctx.theta0, &[config.experiment.x0], &ctx, &config.scheme(key), Retention::None)?;
    let ergodic = fisher_ergodic(&record, model, ctx.theta0)?;
    let closed = fisher_closed_form(model, ctx.theta0).ok().map(|f| f.gamma);
    Ok(GammaEstimate {
        gamma: closed.unwrap_or(ergodic.gamma),
        source: if closed.is_some() { GammaSource::ClosedForm } else { GammaSource::ErgodicAverage },
        closed_form: closed,
        ergodic: ergodic.gamma,
        ergodic_horizon: ergodic.horizon,
    })
}

/// Empirical law of one statistic against `N(-u^2 gamma/2, u^2 gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSummary {
    pub name: String,
    pub u: f64,
    pub count: usize,
    pub mean: Option<f64>,
    pub var: Option<f64>,
    pub mean_std_error: Option<f64>,
    pub var_std_error: Option<f64>,
    pub ks: Option<f64>,
    pub target_mean: f64,
    pub target_var: f64,
    pub gamma: f64,
    pub gamma_source: GammaSource,
    /// Why a value is absent (`point_mass`, `unavailable`, `csv_only`).
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub delta: f64,
    pub intervals: usize,
    /// `E|v|^p`.
    pub moment: f64,
    pub moment_std_error: f64,
    pub mean: f64,
    pub mean_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEntry {
    pub component: String,
    pub p: f64,
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub points: Vec<ScalingPoint>,
    /// `degenerate` when the component vanishes identically.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub check: String,
    pub delta: f64,
    pub draws: u64,
    pub hits: u64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub bound: Option<f64>,
    /// Exact probability when known.
    pub exact: Option<f64>,
    /// Fitted constant of the `C (lambda Delta)^2` bound.
    pub constant: Option<f64>,
    /// The Wilson lower limit does not exceed the bound.
    pub holds: Option<bool>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_echo: ExperimentConfig,
    pub seed: u64,
    pub statistics: Vec<StatisticSummary>,
    pub slopes: Vec<SlopeEntry>,
    pub tails: Vec<TailEntry>,
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    fn empty(config: &ExperimentConfig) -> Self {
        Self {
            config_echo: config.clone(),
            seed: config.experiment.seed,
            statistics: Vec::new(),
            slopes: Vec::new(),
            tails: Vec::new(),
            runtime_seconds: 0.0,
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(io::Error::other)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanRun {
    pub report: ExperimentReport,
    /// Per `u`, in configuration order, samples in replication order.
    pub samples: Vec<Vec<LanSample>>,
}

fn summarize(name: &str, u: f64, values: &[f64], g: &GammaEstimate, flag: Option<&str>) -> StatisticSummary {
    let target_mean = -u * u * g.gamma / 2.0;
    let target_var = u * u * g.gamma;
    let mut s = StatisticSummary {
        name: name.into(),
        u,
        count: values.len(),
        mean: None,
        var: None,
        mean_std_error: None,
        var_std_error: None,
        ks: None,
        target_mean,
        target_var,
        gamma: g.gamma,
        gamma_source: g.source,
        flag: flag.map(str::to_string),
    };
    if values.is_empty() {
        return s;
    }
    let m = Moments::of(values);
    s.mean = Some(m.mean);
    if values.len() > 1 {
        s.var = Some(m.var);
        s.mean_std_error = Some(m.std_error());
        s.var_std_error = Some(m.var_std_error());
    }
    if u == 0.0 {
        s.flag = Some("point_mass".into());
    } else if s.flag.is_none() {
        s.ks = Some(ks_distance_normal(values, target_mean, target_var));
    }
    s
}

/// Simulates `replications` paths under `theta0` and evaluates the requested
/// statistics at every `u` on the same paths.
pub fn run_lan_experiment(config: &ExperimentConfig) -> Result<LanRun> {
    config.validate()?;
    let started = Instant::now();
    let model = config.model.build()?;
    let gamma = target_gamma(config, &model)?;
    let e = &config.experiment;
    let want = |s: Statistic| e.statistics.contains(&s);
    let exact_available = model.closed_form() == ClosedForm::Additive;
    let spec = if want(Statistic::Exact) && exact_available { Some(MixtureDensitySpec::new(&model)?) } else { None };
    let retention = if want(Statistic::Remainders) {
        Retention::FinePath
    } else if want(Statistic::Main) {
        Retention::Increments
    } else {
        Retention::None
    };
    let base = config.grid.context(config.model.theta0, 0.0)?;
    let contexts: Vec<ParameterContext<f64>> = e.u.iter().map(|&u| base.with_u(u)).collect();
    let threshold = e.threshold.resolve(&model, base.delta);
    let rule = GaussLegendre::new(ELL_NODES);
    let key = config.key();

    let per_rep: Vec<Result<Vec<LanSample>>> = (0..e.replications)
        .into_par_iter()
        .map(|rep| {
            let scheme = config.scheme(StreamKey::new(key.seed, key.replication + rep as u64));
            let record = simulate_grid(&model, base.theta0, &[e.x0], &base, &scheme, retention)?;
            let remainders = if want(Statistic::Remainders) {
                Some(sum_remainders(&remainder_series(&record, &model, base.theta0)?))
            } else {
                None
            };
            contexts
                .iter()
                .map(|ctx| {
                    Ok(LanSample {
                        rep,
                        exact_llr: spec.as_ref().map(|s| exact_llr(&record, s, ctx)).transpose()?,
                        quasi_llr: want(Statistic::Quasi).then(|| quasi_llr(&record, &model, ctx, threshold)).transpose()?,
                        main_term: want(Statistic::Main).then(|| main_term_sum(&record, &model, ctx, &rule)).transpose()?,
                        remainders,
                        context: *ctx,
                    })
                })
                .collect()
        })
        .collect();
    let mut samples: Vec<Vec<LanSample>> = vec![Vec::with_capacity(e.replications); contexts.len()];
    for rep in per_rep {
        for (i, s) in rep?.into_iter().enumerate() {
            samples[i].push(s);
        }
    }

    let mut report = ExperimentReport::empty(config);
    for (i, &u) in e.u.iter().enumerate() {
        let col = &samples[i];
        for &stat in &e.statistics {
            let summary = match stat {
                Statistic::Exact if !exact_available => summarize(stat.name(), u, &[], &gamma, Some("unavailable")),
                Statistic::Exact => summarize(stat.name(), u, &col.iter().filter_map(|s| s.exact_llr).collect::<Vec<_>>(), &gamma, None),
                Statistic::Quasi => summarize(stat.name(), u, &col.iter().filter_map(|s| s.quasi_llr).collect::<Vec<_>>(), &gamma, None),
                Statistic::Main => summarize(stat.name(), u, &col.iter().filter_map(|s| s.main_term).collect::<Vec<_>>(), &gamma, None),
                Statistic::Remainders => summarize(stat.name(), u, &[], &gamma, Some("csv_only")),
            };
            report.statistics.push(summary);
        }
    }
    report.runtime_seconds = started.elapsed().as_secs_f64();
    Ok(LanRun { report, samples })
}

/// Remainder components tracked by the scaling study.
pub const SCALING_COMPONENTS: [&str; 7] = ["centred_r1_r2_r3", "r4", "r5", "r6", "z4", "z5", "z6"];

fn component_values(c: &RemainderComponents<f64>) -> [Option<f64>; 7] {
    [c.centred_combination(), Some(c.r4), Some(c.r5), Some(c.r6), Some(c.z4), Some(c.z5), Some(c.z6)]
}

/// Per-interval remainder components at one step size, in interval order.
pub fn remainder_samples(config: &ExperimentConfig, model: &JumpDiffusionModel<f64>, delta: f64, salt: u64) -> Result<Vec<RemainderComponents<f64>>> {
    let s = &config.scaling;
    let chunks = s.intervals.div_ceil(s.chunk);
    let key = config.key().derive(0x5ca1e + salt);
    let theta0 = config.model.theta0;
    let per_chunk: Vec<Result<Vec<RemainderComponents<f64>>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = s.chunk.min(s.intervals - c * s.chunk);
            let ctx = ParameterContext::new(theta0, 0.0, n, delta)?;
            let scheme = SimulationScheme::exact(StreamKey::new(key.seed, c as u64));
            let record = simulate_grid(model, theta0, &[config.experiment.x0], &ctx, &scheme, Retention::FinePath)?;
            remainder_series(&record, model, theta0)
        })
        .collect();
    let mut out = Vec::with_capacity(s.intervals);
    for c in per_chunk {
        out.extend(c?);
    }
    Ok(out)
}

/// Monte Carlo `E|v|^p` of each remainder component against the step size,
/// with a weighted log-log slope.
pub fn run_scaling_study(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let model = config.model.build()?;
    if model.closed_form() == ClosedForm::None {
        return Err(Error::Unsupported("scaling studies need a closed-form model".into()));
    }
    let s = &config.scaling;
    let samples: Vec<Vec<RemainderComponents<f64>>> = s
        .deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| remainder_samples(config, &model, d, i as u64))
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::empty(config);
    for (ci, name) in SCALING_COMPONENTS.iter().enumerate() {
        for &p in &s.p {
            let mut points = Vec::new();
            let mut degenerate = false;
            let mut unavailable = false;
            for (di, &delta) in s.deltas.iter().enumerate() {
                let vals: Vec<f64> = samples[di].iter().filter_map(|c| component_values(c)[ci]).collect();
                if vals.len() < samples[di].len() || vals.is_empty() {
                    unavailable = true;
                    break;
                }
                if vals.iter().all(|v| *v == 0.0) {
                    degenerate = true;
                }
                let powered: Vec<f64> = vals.iter().map(|v| v.abs().powf(p)).collect();
                let mp = Moments::of(&powered);
                let mv = Moments::of(&vals);
                points.push(ScalingPoint {
                    delta,
                    intervals: vals.len(),
                    moment: mp.mean,
                    moment_std_error: mp.std_error(),
                    mean: mv.mean,
                    mean_std_error: mv.std_error(),
                });
            }
            let mut entry = SlopeEntry {
                component: name.to_string(),
                p,
                slope: None,
                slope_std_error: None,
                ci_lower: None,
                ci_upper: None,
                points,
                flag: None,
            };
            if unavailable {
                entry.flag = Some("unavailable".into());
            } else if degenerate {
                entry.flag = Some("degenerate".into());
            } else {
                let x: Vec<f64> = entry.points.iter().map(|q| q.delta.ln()).collect();
                let y: Vec<f64> = entry.points.iter().map(|q| q.moment.ln()).collect();
                let w: Vec<f64> = entry.points.iter().map(|q| (q.moment / q.moment_std_error).powi(2)).collect();
                let fit = wls_slope(&x, &y, &w);
                entry.slope = Some(fit.slope);
                entry.slope_std_error = Some(fit.slope_std_error);
                entry.ci_lower = Some(fit.slope - 1.96 * fit.slope_std_error);
                entry.ci_upper = Some(fit.slope + 1.96 * fit.slope_std_error);
            }
            report.slopes.push(entry);
        }
    }
    report.runtime_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Default, Clone, Copy)]
struct TailCounts {
    two_or_more: u64,
    small_single: u64,
    large_any: u64,
}

fn tail_counts(levy: &LevySpec<f64>, delta: f64, draws: u64, small: f64, large: f64, key: StreamKey) -> TailCounts {
    let mean = levy.intensity() * delta;
    let blocks = draws.div_ceil(TAIL_BLOCK);
    let per_block: Vec<TailCounts> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = key.block(b);
            let count = TAIL_BLOCK.min(draws - b * TAIL_BLOCK);
            let poisson = Poisson::new(mean).expect("positive Poisson mean");
            let mut z = vec![0.0; levy.dim()];
            let mut sum = vec![0.0; levy.dim()];
            let mut c = TailCounts::default();
            for _ in 0..count {
                let jumps = poisson.sample(&mut rng) as u64;
                if jumps == 0 {
                    continue;
                }
                sum.iter_mut().for_each(|s| *s = 0.0);
                for _ in 0..jumps {
                    levy.sample_jump(&mut rng, &mut z);
                    for (s, v) in sum.iter_mut().zip(&z) {
                        *s += v;
                    }
                }
                let size = norm(&sum);
                c.two_or_more += u64::from(jumps >= 2);
                c.small_single += u64::from(jumps == 1 && size < small);
                c.large_any += u64::from(size > large);
            }
            c
        })
        .collect();
    per_block.into_iter().fold(TailCounts::default(), |a, c| TailCounts {
        two_or_more: a.two_or_more + c.two_or_more,
        small_single: a.small_single + c.small_single,
        large_any: a.large_any + c.large_any,
    })
}

/// Monte Carlo checks of the Poisson-tail and small/large-jump ingredients
/// with Wilson intervals.
pub fn run_tail_checks(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let model = config.model.build()?;
    let levy = model.levy();
    let t = &config.tails;
    let mut report = ExperimentReport::empty(config);
    let lambda = levy.intensity();
    if lambda == 0.0 {
        for &delta in &t.deltas {
            for check in ["count_ge_2", "small_single_jump", "large_increment"] {
                report.tails.push(TailEntry {
                    check: check.into(),
                    delta,
                    draws: 0,
                    hits: 0,
                    estimate: 0.0,
                    lower: 0.0,
                    upper: 0.0,
                    bound: None,
                    exact: None,
                    constant: None,
                    holds: None,
                    flag: Some("no_jumps".into()),
                });
            }
        }
        report.runtime_seconds = started.elapsed().as_secs_f64();
        return Ok(report);
    }
    let mut large = Vec::new();
    for (i, &delta) in t.deltas.iter().enumerate() {
        let ld = lambda * delta;
        let small = t.rho1 * delta.powf(t.upsilon);
        let big = t.rho2 * delta.powf(-t.gamma);
        let c = tail_counts(levy, delta, t.draws, small, big, config.key().derive(0x7a11 + i as u64));
        let entry = |check: &str, hits: u64, bound: Option<f64>, exact: Option<f64>| {
            let ci = wilson_interval(hits, t.draws, t.z);
            TailEntry {
                check: check.into(),
                delta,
                draws: t.draws,
                hits,
                estimate: ci.estimate,
                lower: ci.lower,
                upper: ci.upper,
                bound,
                exact,
                constant: None,
                holds: bound.map(|b| ci.lower <= b),
                flag: None,
            }
        };
        report.tails.push(entry("count_ge_2", c.two_or_more, Some(ld * ld), Some(1.0 - (-ld).exp() * (1.0 + ld))));
        let ball = (-ld).exp() * delta * levy.small_ball_mass(small)?;
        report.tails.push(entry("small_single_jump", c.small_single, Some(ball), Some(ball)));
        large.push(entry("large_increment", c.large_any, None, None));
    }
    // C is fitted as the largest upper-limit ratio over the step sizes
    let constant = large
        .iter()
        .map(|e| e.upper / (lambda * e.delta).powi(2))
        .fold(0.0f64, f64::max);
    for mut e in large {
        let bound = constant * (lambda * e.delta).powi(2);
        e.constant = Some(constant);
        e.bound = Some(bound);
        e.holds = Some(e.lower <= bound);
        report.tails.push(e);
    }
    report.runtime_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Estimator law under the configured grid and threshold policy.
pub fn run_estimator_experiment(config: &ExperimentConfig) -> Result<(ExperimentReport, NormalityReport)> {
    config.validate()?;
    let started = Instant::now();
    let model = config.model.build()?;
    let ctx = config.grid.context(config.model.theta0, 0.0)?;
    let e = &config.experiment;
    let options = NormalityOptions {
        replications: e.replications,
        threshold: e.threshold,
        half_width: e.estimator.half_width,
        tol: e.estimator.tol,
        max_iter: e.estimator.max_iter,
        x0: e.x0,
    };
    let normality = estimator_normality_experiment(&model, &ctx, &options, config.key())?;
    let mut report = ExperimentReport::empty(config);
    report.statistics.push(StatisticSummary {
        name: "standardized_estimator".into(),
        u: 0.0,
        count: normality.replications - normality.failures,
        mean: Some(normality.mean),
        var: Some(normality.var),
        mean_std_error: Some((normality.var / (normality.replications - normality.failures) as f64).sqrt()),
        var_std_error: Some(normality.var_std_error),
        ks: Some(normality.ks),
        target_mean: 0.0,
        target_var: normality.target_var,
        gamma: normality.gamma,
        gamma_source: GammaSource::ClosedForm,
        flag: (normality.failures > 0).then(|| format!("{} failed replications", normality.failures)),
    });
    report.runtime_seconds = started.elapsed().as_secs_f64();
    Ok((report, normality))
}

/// CSV with columns `component, p, delta, intervals, moment, moment_se, mean, mean_se`.
pub fn write_scaling_csv<W: Write>(slopes: &[SlopeEntry], mut w: W) -> io::Result<()> {
    writeln!(w, "component,p,delta,intervals,moment,moment_se,mean,mean_se")?;
    for s in slopes {
        for q in &s.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.component, s.p, q.delta, q.intervals, q.moment, q.moment_std_error, q.mean, q.mean_std_error
            )?;
        }
    }
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with columns `check, delta, draws, hits, estimate, lower, upper, bound, exact, holds`.
pub fn write_tails_csv<W: Write>(tails: &[TailEntry], mut w: W) -> io::Result<()> {
    writeln!(w, "check,delta,draws,hits,estimate,lower,upper,bound,exact,holds")?;
    for t in tails {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            t.check,
            t.delta,
            t.draws,
            t.hits,
            t.estimate,
            t.lower,
            t.upper,
            opt(t.bound),
            opt(t.exact),
            opt(t.holds)
        )?;
    }
    Ok(())
}

/// Observation record of replication `rep` under the configured grid.
pub fn simulate_replication(config: &ExperimentConfig, rep: u64, retention: Retention) -> Result<ObservationRecord<f64>> {
    config.validate()?;
    let model = config.model.build()?;
    let ctx = config.grid.context(config.model.theta0, 0.0)?;
    let key = config.key();
    let scheme = config.scheme(StreamKey::new(key.seed, key.replication + rep));
    simulate_grid(&model, ctx.theta0, &[config.experiment.x0], &ctx, &scheme, retention)
}
