//! Experiment description shared by the runner and the command line.
//!
//! Units follow the figure captions: SNR in dB, frequencies in Hz. They are
//! converted once by the accessors below.

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, ArrayKind, ResponseModel};
use crate::error::invalid;
use crate::txrx::{db_to_linear, SymbolDistribution};
use crate::{Result, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub estimators: Vec<Method>,
    #[serde(default)]
    pub solver: SolverTable,
    #[serde(default)]
    pub pilots: PilotConfig,
    pub monte_carlo: MonteCarlo,
    #[serde(default)]
    pub output: OutputConfig,
    /// Bounds to evaluate; defaults to ideal plus one-bit when a one-bit
    /// estimator is selected.
    #[serde(default)]
    pub crb: Option<Vec<CrbKind>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Number of antennas.
    pub n: usize,
    /// Number of users.
    pub k: usize,
    /// Paths per user.
    pub l: usize,
    /// Block length.
    pub t: usize,
    #[serde(default)]
    pub t_d: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub rho_db: RhoDb,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub symbols: SymbolDistribution,
    #[serde(default)]
    pub on_grid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoDb {
    One(f64),
    Many(Vec<f64>),
}

impl RhoDb {
    pub fn values(&self) -> Vec<f64> {
        match self {
            RhoDb::One(v) => vec![*v],
            RhoDb::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_kind")]
    pub kind: ArrayKind,
    /// Planar arrays only; `n1 · n2` must equal `n`.
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default)]
    pub n2: Option<usize>,
    /// Element spacing in wavelengths.
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default)]
    pub response: ResponseModel,
}

fn default_kind() -> ArrayKind {
    ArrayKind::Ula
}

fn default_spacing() -> f64 {
    0.5
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            kind: ArrayKind::Ula,
            n1: None,
            n2: None,
            spacing: 0.5,
            response: ResponseModel::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SparseBlind,
    Subspace,
    OnebitSparseBlind,
    OnebitSubspace,
    PilotLs,
    Semiblind,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::SparseBlind => "sparse_blind",
            Method::Subspace => "subspace",
            Method::OnebitSparseBlind => "onebit_sparse_blind",
            Method::OnebitSubspace => "onebit_subspace",
            Method::PilotLs => "pilot_ls",
            Method::Semiblind => "semiblind",
        }
    }

    pub fn is_onebit(self) -> bool {
        matches!(self, Method::OnebitSparseBlind | Method::OnebitSubspace)
    }

    pub fn uses_pilots(self) -> bool {
        matches!(self, Method::PilotLs | Method::Semiblind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrbKind {
    Ideal,
    Onebit,
}

impl CrbKind {
    pub fn label(self) -> &'static str {
        match self {
            CrbKind::Ideal => "ideal",
            CrbKind::Onebit => "onebit",
        }
    }
}

/// Partial solver settings; unset fields fall back to per-method defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_rel_obj: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerate: Option<bool>,
    /// One ℓ1 weight per entry of `scenario.rho_db`; takes precedence over
    /// `lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_per_rho: Option<Vec<f64>>,
}

impl SolverOverrides {
    pub fn apply(&self, mut base: SolverConfig) -> SolverConfig {
        if let Some(v) = self.lambda {
            base.lambda = v;
        }
        if let Some(v) = self.mu0 {
            base.mu0 = v;
        }
        if let Some(v) = self.beta {
            base.beta = v;
        }
        if let Some(v) = self.max_iters {
            base.max_iters = v;
        }
        if let Some(v) = self.tol_rel_obj {
            base.tol_rel_obj = v;
        }
        if let Some(v) = self.min_step {
            base.min_step = v;
        }
        if let Some(v) = self.accelerate {
            base.accelerate = v;
        }
        base
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverTable {
    #[serde(default)]
    pub sparse_blind: SolverOverrides,
    #[serde(default)]
    pub onebit_sparse_blind: SolverOverrides,
    #[serde(default)]
    pub pilot_ls: SolverOverrides,
    #[serde(default)]
    pub semiblind: SolverOverrides,
}

pub const DEFAULT_LAMBDA_IDEAL: f64 = 4.0;
pub const DEFAULT_LAMBDA_ONEBIT: f64 = 8.0;
pub const DEFAULT_LAMBDA_PILOT: f64 = 2.0;

impl SolverTable {
    fn overrides(&self, method: Method) -> (&SolverOverrides, f64) {
        match method {
            Method::SparseBlind | Method::Subspace => (&self.sparse_blind, DEFAULT_LAMBDA_IDEAL),
            Method::OnebitSparseBlind | Method::OnebitSubspace => (&self.onebit_sparse_blind, DEFAULT_LAMBDA_ONEBIT),
            Method::PilotLs => (&self.pilot_ls, DEFAULT_LAMBDA_PILOT),
            Method::Semiblind => (&self.semiblind, 0.0),
        }
    }

    /// Resolved settings for `method`, ignoring `lambda_per_rho`. Subspace
    /// methods have no iterations and get the defaults.
    pub fn for_method(&self, method: Method) -> SolverConfig {
        let (o, lambda) = self.overrides(method);
        o.apply(SolverConfig::with_lambda(lambda))
    }

    /// Resolved settings for `method` at the `rho_index`-th SNR.
    pub fn for_method_at(&self, method: Method, rho_index: usize) -> SolverConfig {
        let mut c = self.for_method(method);
        if let Some(v) = self.overrides(method).0.lambda_per_rho.as_ref().and_then(|v| v.get(rho_index)) {
            c.lambda = *v;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    /// `x_k[t] = √ρ e^{j2πkt/T_T}`.
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    pub t_t: usize,
    #[serde(default = "default_pilot_kind", rename = "type")]
    pub kind: PilotKind,
}

fn default_pilot_kind() -> PilotKind {
    PilotKind::Orthogonal
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            t_t: 10,
            kind: PilotKind::Orthogonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    pub n_realizations: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub path: String,
    #[serde(default = "default_grid_points")]
    pub eta_grid_points: usize,
}

fn default_out() -> String {
    "results".into()
}

fn default_grid_points() -> usize {
    101
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            path: default_out(),
            eta_grid_points: default_grid_points(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.n == 0 || s.k == 0 || s.l == 0 || s.t == 0 {
            return Err(invalid("scenario.n, k, l and t must be positive"));
        }
        if s.t <= 2 * s.t_d {
            return Err(invalid(format!("scenario.t = {} must exceed 2·t_d = {}", s.t, 2 * s.t_d)));
        }
        if s.rho_db.values().is_empty() || s.rho_db.values().iter().any(|v| !v.is_finite()) {
            return Err(invalid("scenario.rho_db must hold finite values"));
        }
        self.geometry()?.validate()?;
        if self.estimators.is_empty() {
            return Err(invalid("estimators must not be empty"));
        }
        if self.uses_pilots() {
            if self.pilots.t_t >= s.t {
                return Err(invalid("pilots.t_t must be shorter than scenario.t"));
            }
            if self.pilots.t_t < s.k {
                return Err(invalid("pilots.t_t must be at least scenario.k"));
            }
        }
        if self.monte_carlo.n_realizations == 0 {
            return Err(invalid("monte_carlo.n_realizations must be at least 1"));
        }
        if self.output.eta_grid_points < 2 {
            return Err(invalid("output.eta_grid_points must be at least 2"));
        }
        let n_rho = s.rho_db.values().len();
        for m in &self.estimators {
            if let Some(v) = &self.solver.overrides(*m).0.lambda_per_rho {
                if v.len() != n_rho {
                    return Err(invalid(format!(
                        "solver.{}.lambda_per_rho has {} entries for {} rho_db values",
                        m.label(),
                        v.len(),
                        n_rho
                    )));
                }
            }
            for idx in 0..n_rho {
                self.solver.for_method_at(*m, idx).validate()?;
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        let s = &self.scenario;
        let g = &self.scenario.geometry;
        let geometry = match g.kind {
            ArrayKind::Ula => {
                if g.n2.is_some_and(|v| v != 1) {
                    return Err(invalid("geometry.n2 must be 1 for a linear array"));
                }
                ArrayGeometry::ula(s.n, g.spacing, s.carrier_hz, s.bandwidth_hz)
            }
            ArrayKind::Upa => {
                let (Some(n1), Some(n2)) = (g.n1, g.n2) else {
                    return Err(invalid("geometry.n1 and geometry.n2 are required for a planar array"));
                };
                if n1 * n2 != s.n {
                    return Err(invalid(format!("geometry.n1 · n2 = {} differs from scenario.n = {}", n1 * n2, s.n)));
                }
                ArrayGeometry::upa(n1, n2, g.spacing, s.carrier_hz, s.bandwidth_hz)
            }
        };
        Ok(geometry.with_response(g.response))
    }

    pub fn rho_db(&self) -> Vec<f64> {
        self.scenario.rho_db.values()
    }

    pub fn rho_linear(&self) -> Vec<f64> {
        self.rho_db().into_iter().map(db_to_linear).collect()
    }

    pub fn uses_pilots(&self) -> bool {
        self.estimators.iter().any(|m| m.uses_pilots())
    }

    pub fn uses_onebit(&self) -> bool {
        self.estimators.iter().any(|m| m.is_onebit())
    }

    pub fn crb_kinds(&self) -> Vec<CrbKind> {
        match &self.crb {
            Some(k) => k.clone(),
            None if self.uses_onebit() => vec![CrbKind::Ideal, CrbKind::Onebit],
            None => vec![CrbKind::Ideal],
        }
    }
}
