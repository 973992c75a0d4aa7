//! TOML experiment configuration.
//!
//! ```toml
//! seed = 42                      # default seed for every experiment
//!
//! [[experiment]]
//! kind = "validate-weight"       # validate-weight | carleman-sweep | stability-run
//!                                # | stokes-check | interp-norms
//! name = "weights"               # file prefix; defaults to "<kind>-<index>"
//! grid = { r0 = 1.0, r1 = 2.0, nr = 65, ntheta = 128 }
//! ```
//!
//! Every table rejects unknown keys. Defaults for each kind are the values
//! returned by the `default_*` functions below and are echoed into
//! `report.json`.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ucbench_core::continuation::{EpsilonRule, SPECTRAL_ERROR_MAX_NODES};
use ucbench_core::expr::Expr;
use ucbench_core::norms::{check_eta, SpectralPair};
use ucbench_core::stokes::manufactured;
use ucbench_core::{BaseWeight, CoefficientSet, MetricField, PolarGrid};

use crate::CliError;

pub const KINDS: [&str; 5] = [
    "validate-weight",
    "carleman-sweep",
    "stability-run",
    "stokes-check",
    "interp-norms",
];

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one")]
    pub r0: f64,
    #[serde(default = "two")]
    pub r1: f64,
    #[serde(default = "nr_default")]
    pub nr: usize,
    #[serde(default = "ntheta_default")]
    pub ntheta: usize,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn nr_default() -> usize {
    65
}
fn ntheta_default() -> usize {
    128
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            r0: 1.0,
            r1: 2.0,
            nr: 65,
            ntheta: 128,
        }
    }
}

impl GridConfig {
    fn small() -> Self {
        Self {
            nr: 33,
            ntheta: 64,
            ..Self::default()
        }
    }

    pub fn build(&self) -> ucbench_core::Result<PolarGrid> {
        PolarGrid::new(self.r0, self.r1, self.nr, self.ntheta)
    }
}

/// Weight `ψ`: a preset name, or `custom` with an expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    #[serde(default = "quadratic")]
    pub preset: String,
    /// Inner radius the preset vanishes on; defaults to the grid's `r0`.
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub expr: Option<String>,
    /// Declared gradient lower bound for `custom`.
    #[serde(default)]
    pub delta: Option<f64>,
}

fn quadratic() -> String {
    "quadratic".into()
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            preset: quadratic(),
            r0: None,
            expr: None,
            delta: None,
        }
    }
}

impl WeightSpec {
    pub fn build(&self, grid: &GridConfig) -> ucbench_core::Result<BaseWeight> {
        BaseWeight::preset(
            &self.preset,
            self.r0.unwrap_or(grid.r0),
            self.expr.as_deref(),
            self.delta,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightCase {
    #[serde(default = "quadratic")]
    pub preset: String,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(default)]
    pub delta: Option<f64>,
    /// `false` for negative controls that must fail validation.
    #[serde(default = "yes")]
    pub expect_valid: bool,
}

impl WeightCase {
    pub fn spec(&self) -> WeightSpec {
        WeightSpec {
            preset: self.preset.clone(),
            r0: self.r0,
            expr: self.expr.clone(),
            delta: self.delta,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default = "family_count")]
    pub count: usize,
    #[serde(default = "six")]
    pub max_degree: usize,
    #[serde(default = "six")]
    pub max_frequency: usize,
    /// Append the four boundary-layer members.
    #[serde(default = "yes")]
    pub adversaries: bool,
}

fn family_count() -> usize {
    20
}
fn six() -> usize {
    6
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            count: 20,
            max_degree: 6,
            max_frequency: 6,
            adversaries: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    ValidateWeight(ValidateWeightConfig),
    CarlemanSweep(CarlemanSweepConfig),
    StabilityRun(StabilityRunConfig),
    StokesCheck(StokesCheckConfig),
    InterpNorms(InterpNormsConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateWeightConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_weights")]
    pub weights: Vec<WeightCase>,
}

fn default_weights() -> Vec<WeightCase> {
    vec![WeightCase {
        preset: quadratic(),
        r0: None,
        expr: None,
        delta: None,
        expect_valid: true,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarlemanSweepConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "identity")]
    pub metric: String,
    #[serde(default = "zero")]
    pub coefficients: String,
    #[serde(default)]
    pub weight: WeightSpec,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_ss")]
    pub ss: Vec<f64>,
    /// `γ` at which non-decay against the smallest swept `s` is required.
    #[serde(default = "two")]
    pub check_gamma: f64,
}

fn identity() -> String {
    "identity".into()
}
fn zero() -> String {
    "zero".into()
}
fn default_gammas() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_ss() -> Vec<f64> {
    vec![8.0, 16.0, 32.0, 64.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityRunConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "identity")]
    pub metric: String,
    #[serde(default = "zero")]
    pub coefficients: String,
    /// Real expression in `x1`, `x2` for the exact field.
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "two")]
    pub eps_exponent: f64,
    #[serde(default = "one")]
    pub eps_scale: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_beta_window")]
    pub beta_window: [f64; 2],
    /// `ε` for the noise-free recovery check; `0` skips it.
    #[serde(default = "default_exact_eps")]
    pub exact_eps: f64,
    #[serde(default = "default_exact_tol")]
    pub exact_tolerance: f64,
    #[serde(default = "yes")]
    pub zero_data_check: bool,
    #[serde(default)]
    pub corollary: Option<CorollaryConfig>,
}

fn default_target() -> String {
    "x1^2 - x2^2".into()
}
fn default_deltas() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
}
fn default_beta_window() -> [f64; 2] {
    [0.5, 1.5]
}
fn default_exact_eps() -> f64 {
    1e-10
}
fn default_exact_tol() -> f64 {
    0.05
}

impl StabilityRunConfig {
    pub fn epsilon_rule(&self) -> EpsilonRule {
        EpsilonRule {
            exponent: self.eps_exponent,
            scale: self.eps_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorollaryConfig {
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub c_prime: f64,
    #[serde(default = "k_min")]
    pub k_min: u32,
    #[serde(default = "k_max")]
    pub k_max: u32,
    #[serde(default = "default_corollary_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "ten")]
    pub max_spread: f64,
    /// Random `(C, M, c, η)` tuples checked against a 10⁴-point grid.
    #[serde(default = "hundred")]
    pub brute_force_tuples: usize,
}

fn k_min() -> u32 {
    2
}
fn k_max() -> u32 {
    30
}
fn default_corollary_etas() -> Vec<f64> {
    vec![0.0, 1.0]
}
fn ten() -> f64 {
    10.0
}
fn hundred() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StokesCheckConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Fine grid; the coarse grid halves both resolutions.
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_presets")]
    pub presets: Vec<String>,
    /// Seeded exact states for the domination sweep.
    #[serde(default = "ten_usize")]
    pub random_states: usize,
    #[serde(default)]
    pub weight: WeightSpec,
    #[serde(default = "default_stokes_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_stokes_ss")]
    pub ss: Vec<f64>,
    #[serde(default = "eight")]
    pub reference_s: f64,
    #[serde(default = "default_ratio_window")]
    pub ratio_window: [f64; 2],
    #[serde(default = "yes")]
    pub zero_data_check: bool,
}

fn default_presets() -> Vec<String> {
    ucbench_core::stokes::MANUFACTURED_PRESETS
        .iter()
        .map(|s| s.to_string())
        .collect()
}
fn ten_usize() -> usize {
    10
}
fn default_stokes_gammas() -> Vec<f64> {
    vec![2.0]
}
fn default_stokes_ss() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
}
fn eight() -> f64 {
    8.0
}
fn default_ratio_window() -> [f64; 2] {
    [3.5, 4.5]
}

impl StokesCheckConfig {
    pub fn coarse_grid(&self) -> GridConfig {
        GridConfig {
            nr: (self.grid.nr - 1) / 2 + 1,
            ntheta: self.grid.ntheta / 2,
            ..self.grid
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpNormsConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "GridConfig::small")]
    pub grid: GridConfig,
    #[serde(default = "interp_family")]
    pub family: FamilyConfig,
    #[serde(default = "default_interp_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "interp_tol")]
    pub tolerance: f64,
    #[serde(default = "default_tangential_metrics")]
    pub tangential_metrics: Vec<String>,
    #[serde(default = "ten_usize")]
    pub tangential_fields: usize,
    #[serde(default = "tangential_tol")]
    pub tangential_tolerance: f64,
}

fn interp_family() -> FamilyConfig {
    FamilyConfig {
        adversaries: false,
        ..FamilyConfig::default()
    }
}
fn default_interp_etas() -> Vec<f64> {
    vec![0.5, 1.0, 1.5]
}
fn interp_tol() -> f64 {
    1e-12
}
fn default_tangential_metrics() -> Vec<String> {
    vec!["anisotropic".into(), "bump".into()]
}
fn tangential_tol() -> f64 {
    1e-10
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ValidateWeight(_) => KINDS[0],
            Self::CarlemanSweep(_) => KINDS[1],
            Self::StabilityRun(_) => KINDS[2],
            Self::StokesCheck(_) => KINDS[3],
            Self::InterpNorms(_) => KINDS[4],
        }
    }

    fn name_field(&self) -> &Option<String> {
        match self {
            Self::ValidateWeight(c) => &c.name,
            Self::CarlemanSweep(c) => &c.name,
            Self::StabilityRun(c) => &c.name,
            Self::StokesCheck(c) => &c.name,
            Self::InterpNorms(c) => &c.name,
        }
    }

    pub fn name(&self, index: usize) -> String {
        self.name_field()
            .clone()
            .unwrap_or_else(|| format!("{}-{index}", self.kind()))
    }

    /// Per-experiment seed, falling back to the suite seed.
    pub fn seed(&self, suite_seed: u64) -> u64 {
        let s = match self {
            Self::ValidateWeight(_) => None,
            Self::CarlemanSweep(c) => c.seed,
            Self::StabilityRun(c) => c.seed,
            Self::StokesCheck(c) => c.seed,
            Self::InterpNorms(c) => c.seed,
        };
        s.unwrap_or(suite_seed)
    }

    /// Replaces every seed, for `--seed-override`.
    pub fn override_seed(&mut self, seed: u64) {
        match self {
            Self::ValidateWeight(_) => {}
            Self::CarlemanSweep(c) => c.seed = Some(seed),
            Self::StabilityRun(c) => c.seed = Some(seed),
            Self::StokesCheck(c) => c.seed = Some(seed),
            Self::InterpNorms(c) => c.seed = Some(seed),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let grid_of = |g: &GridConfig| g.build().map_err(|e| format!("grid: {e}"));
        let list = |key: &str, v: &[f64], min: f64| -> Result<(), String> {
            if v.is_empty() {
                return Err(format!("{key}: list must be nonempty"));
            }
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= min)) {
                return Err(format!("{key}: {x} must be finite and >= {min}"));
            }
            Ok(())
        };
        let metric = |m: &str| MetricField::preset(m).map(|_| ()).map_err(|e| format!("metric: {e}"));
        let coeffs = |c: &str| CoefficientSet::preset(c).map(|_| ()).map_err(|e| format!("coefficients: {e}"));
        let weight = |w: &WeightSpec, g: &GridConfig| w.build(g).map(|_| ()).map_err(|e| format!("weight: {e}"));
        let eta = |key: &str, e: f64| check_eta(e).map_err(|err| format!("{key}: {err} (eta must satisfy 0 <= eta < 2)"));
        match self {
            Self::ValidateWeight(c) => {
                grid_of(&c.grid)?;
                if c.weights.is_empty() {
                    return Err("weights: list must be nonempty".into());
                }
                for (i, w) in c.weights.iter().enumerate() {
                    weight(&w.spec(), &c.grid).map_err(|e| format!("weights[{i}].{e}"))?;
                }
            }
            Self::CarlemanSweep(c) => {
                grid_of(&c.grid)?;
                metric(&c.metric)?;
                coeffs(&c.coefficients)?;
                weight(&c.weight, &c.grid)?;
                list("gammas", &c.gammas, 1.0)?;
                list("ss", &c.ss, 1.0)?;
                if !c.gammas.contains(&c.check_gamma) {
                    return Err(format!("check_gamma: {} is not among the swept gammas", c.check_gamma));
                }
                if c.family.count == 0 {
                    return Err("family.count: must be positive".into());
                }
            }
            Self::StabilityRun(c) => {
                let g = grid_of(&c.grid)?;
                metric(&c.metric)?;
                coeffs(&c.coefficients)?;
                eta("eta", c.eta)?;
                if c.eta != 0.0 && c.eta != 1.0 && g.len() > SPECTRAL_ERROR_MAX_NODES {
                    return Err(format!(
                        "eta: {} needs the spectral norm, limited to {SPECTRAL_ERROR_MAX_NODES} nodes",
                        c.eta
                    ));
                }
                Expr::parse(&c.target).map_err(|e| format!("target: {e}"))?;
                if c.deltas.len() < 4 {
                    return Err("deltas: at least 4 noise levels are required".into());
                }
                if let Some(d) = c.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
                    return Err(format!("deltas: {d} must lie in (0, 1)"));
                }
                let lo = c.deltas.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.deltas.iter().copied().fold(0.0, f64::max);
                if hi / lo < 1e3 * (1.0 - 1e-12) {
                    return Err("deltas: noise levels must span at least 3 decades".into());
                }
                if !(c.eps_exponent > 0.0 && c.eps_scale > 0.0) {
                    return Err("eps_exponent, eps_scale: must be positive".into());
                }
                if c.exact_eps < 0.0 {
                    return Err("exact_eps: must be >= 0".into());
                }
                if !(c.beta_window[0] <= c.beta_window[1]) {
                    return Err("beta_window: lower bound exceeds upper bound".into());
                }
                if let Some(k) = &c.corollary {
                    if !(k.c > 0.0 && k.c_prime > 0.0) {
                        return Err("corollary.c, corollary.c_prime: must be positive".into());
                    }
                    if k.k_min > k.k_max {
                        return Err("corollary.k_min: exceeds k_max".into());
                    }
                    if k.etas.is_empty() {
                        return Err("corollary.etas: list must be nonempty".into());
                    }
                    for e in &k.etas {
                        eta("corollary.etas", *e)?;
                    }
                }
            }
            Self::StokesCheck(c) => {
                grid_of(&c.grid)?;
                grid_of(&c.coarse_grid()).map_err(|e| format!("coarse {e}"))?;
                weight(&c.weight, &c.grid)?;
                if c.presets.is_empty() {
                    return Err("presets: list must be nonempty".into());
                }
                for p in &c.presets {
                    manufactured(p).map_err(|e| format!("presets: {e}"))?;
                }
                list("gammas", &c.gammas, 1.0)?;
                list("ss", &c.ss, 1.0)?;
                if !c.ss.contains(&c.reference_s) {
                    return Err(format!("reference_s: {} is not among the swept s", c.reference_s));
                }
            }
            Self::InterpNorms(c) => {
                let g = grid_of(&c.grid)?;
                if g.len() > SpectralPair::MAX_NODES {
                    return Err(format!(
                        "grid: {} nodes exceeds the dense eigensolve limit {}",
                        g.len(),
                        SpectralPair::MAX_NODES
                    ));
                }
                if c.etas.is_empty() {
                    return Err("etas: list must be nonempty".into());
                }
                for e in &c.etas {
                    eta("etas", *e)?;
                }
                for m in &c.tangential_metrics {
                    metric(m)?;
                }
                if c.family.count == 0 {
                    return Err("family.count: must be positive".into());
                }
            }
        }
        Ok(())
    }
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Schema checks that need more than deserialization. Runs before any
    /// computation.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.experiments.is_empty() {
            return Err(CliError::Config("no [[experiment]] tables".into()));
        }
        let mut names = BTreeSet::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let name = e.name(i);
            let ctx = |m: String| CliError::Config(format!("experiment[{i}] ({name}, kind = {}): {m}", e.kind()));
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(ctx("name: only ASCII letters, digits, '-' and '_' are allowed".into()));
            }
            if !names.insert(name.clone()) {
                return Err(ctx("name: duplicate experiment name".into()));
            }
            e.validate().map_err(ctx)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c = SuiteConfig::parse("[[experiment]]\nkind = \"validate-weight\"\n").unwrap();
        assert_eq!(c.seed, 42);
        let ExperimentConfig::ValidateWeight(v) = &c.experiments[0] else {
            panic!()
        };
        assert_eq!(v.grid, GridConfig::default());
        assert_eq!(v.weights[0].preset, "quadratic");
        assert_eq!(c.experiments[0].name(0), "validate-weight-0");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[[experiment]]\nkind = \"validate-weight\"\nbogus = 1\n",
            "seed = 1\nextra = 2\n[[experiment]]\nkind = \"interp-norms\"\n",
            "[[experiment]]\nkind = \"stability-run\"\ngrid = { nr = 9, nq = 3 }\n",
            "[[experiment]]\nkind = \"no-such-kind\"\n",
        ] {
            assert!(matches!(SuiteConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn eta_contract() {
        let err = SuiteConfig::parse("[[experiment]]\nkind = \"stability-run\"\neta = 2.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0 <= eta < 2"), "{msg}");
        assert!(msg.contains("experiment[0]"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = SuiteConfig::parse("[[experiment]]\nkind = \"stability-run\"\ndeltas = [0.1,\n").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn echo_round_trips() {
        let c = SuiteConfig::parse(
            "[[experiment]]\nkind = \"stability-run\"\n[experiment.corollary]\n[[experiment]]\nkind = \"stokes-check\"\n",
        )
        .unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<SuiteConfig>(&json).unwrap(), c);
    }
}
