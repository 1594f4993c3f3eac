//! The `experiment`, `estimate` and `crb` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use blindmimo::blind_onebit::estimate_blind_onebit;
use blindmimo::channel::channel_transfer;
use blindmimo::config::CrbKind;
use blindmimo::eval::{run_bounds, CrbCurve};
use blindmimo::{build_dictionary, estimate_blind, run_experiment, ExperimentConfig, Method};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::container::{Container, Kind};

/// Failure classes and their process exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, configuration or input file (exit code 1).
    Input(String),
    /// Anything that goes wrong after the inputs were accepted (exit code 2).
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Options {
    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.path))
    }
}

/// Reads and validates the configuration, applying `--seed`.
pub fn load_config(opts: &Options) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(&opts.config)
        .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", opts.config.display())))?;
    let mut config = parse_config(&text).map_err(|e| Failure::Input(format!("{}: {e}", opts.config.display())))?;
    if let Some(seed) = opts.seed {
        config.monte_carlo.master_seed = seed;
    }
    config
        .validate()
        .map_err(|e| Failure::Input(format!("{}: {e}", opts.config.display())))?;
    Ok(config)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, toml::de::Error> {
    toml::from_str(text)
}

pub fn render_config(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("configuration always serializes")
}

/// SHA-256 of the canonical serialization, after overrides.
pub fn config_hash(config: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(render_config(config).as_bytes()))
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::Input("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(runtime)?;
            Ok(pool.install(f))
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    n_realizations: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    methods: Vec<MethodEntry>,
    bounds: Vec<BoundEntry>,
}

#[derive(Serialize)]
struct MethodEntry {
    method: &'static str,
    rho_db: f64,
    n_samples: usize,
    failures: usize,
}

#[derive(Serialize)]
struct BoundEntry {
    kind: &'static str,
    rho_db: f64,
    n_singular: usize,
    n_unreliable: usize,
}

fn bound_entries(curves: &[CrbCurve]) -> Vec<BoundEntry> {
    curves
        .iter()
        .map(|c| BoundEntry {
            kind: c.kind.label(),
            rho_db: c.rho_db,
            n_singular: c.n_singular,
            n_unreliable: c.n_unreliable,
        })
        .collect()
}

pub fn crb_csv(curves: &[CrbCurve]) -> String {
    let mut s = String::from("rho_db,eta_crb_mean,kind\n");
    for c in curves {
        writeln!(s, "{},{},{}", c.rho_db, c.eta_mean, c.kind.label()).unwrap();
    }
    s
}

fn report_singular(curves: &[CrbCurve]) {
    for c in curves.iter().filter(|c| c.n_singular > 0) {
        eprintln!(
            "{} bound at {} dB: {} realizations with singular Fisher information excluded",
            c.kind.label(),
            c.rho_db,
            c.n_singular
        );
    }
}

pub fn cmd_experiment(opts: &Options) -> Result<(), Failure> {
    let config = load_config(opts)?;
    let outcome = with_pool(opts.threads, || run_experiment(&config))?.map_err(runtime)?;
    let dir = opts.out_dir(&config);
    create_dir(&dir)?;
    for &method in &config.estimators {
        let mut s = String::from("eta_threshold,prob,method,rho_db,n_samples\n");
        for curve in outcome.curves.iter().filter(|c| c.method == method) {
            for (th, p) in curve.table.thresholds.iter().zip(&curve.table.prob) {
                writeln!(s, "{th},{p},{},{},{}", method.label(), curve.rho_db, curve.table.n_samples).unwrap();
            }
        }
        write(&dir.join(format!("{}.csv", method.label())), s)?;
    }
    write(&dir.join("eta_crb.csv"), crb_csv(&outcome.crb))?;
    report_singular(&outcome.crb);
    let manifest = Manifest {
        command: "experiment",
        version: env!("CARGO_PKG_VERSION"),
        seed: config.monte_carlo.master_seed,
        config_sha256: config_hash(&config),
        n_realizations: outcome.n_realizations,
        methods: outcome
            .curves
            .iter()
            .map(|c| MethodEntry {
                method: c.method.label(),
                rho_db: c.rho_db,
                n_samples: c.table.n_samples,
                failures: c.failures,
            })
            .collect(),
        bounds: bound_entries(&outcome.crb),
    };
    write(&dir.join("manifest.toml"), toml::to_string(&manifest).map_err(runtime)?)
}

pub fn cmd_crb(opts: &Options) -> Result<(), Failure> {
    let config = load_config(opts)?;
    let kinds = config.crb.clone().unwrap_or_else(|| vec![CrbKind::Ideal, CrbKind::Onebit]);
    let curves = with_pool(opts.threads, || run_bounds(&config, &kinds))?.map_err(runtime)?;
    let dir = opts.out_dir(&config);
    create_dir(&dir)?;
    write(&dir.join("eta_crb.csv"), crb_csv(&curves))?;
    report_singular(&curves);
    let manifest = Manifest {
        command: "crb",
        version: env!("CARGO_PKG_VERSION"),
        seed: config.monte_carlo.master_seed,
        config_sha256: config_hash(&config),
        n_realizations: config.monte_carlo.n_realizations,
        methods: Vec::new(),
        bounds: bound_entries(&curves),
    };
    write(&dir.join("manifest.toml"), toml::to_string(&manifest).map_err(runtime)?)
}

#[derive(Serialize)]
struct Diagnostics {
    method: &'static str,
    iterations: usize,
    converged: bool,
    final_objective: f64,
    kkt_residual: f64,
    rank_deficient: bool,
}

/// Estimates `Ŝ` from the block in `input` and writes `s_hat.bin`,
/// `h_hat.bin` and `estimate.toml` into the output directory.
pub fn cmd_estimate(opts: &Options, input: &Path) -> Result<(), Failure> {
    let config = load_config(opts)?;
    let bytes =
        fs::read(input).map_err(|e| Failure::Input(format!("cannot read input {}: {e}", input.display())))?;
    let block = Container::from_bytes(&bytes).map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    let rx = block.to_rx().map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    let dims = rx.dims;
    if dims.n != config.scenario.n {
        return Err(Failure::Input(format!(
            "{}: block has N = {}, config has scenario.n = {}",
            input.display(),
            dims.n,
            config.scenario.n
        )));
    }
    let geometry = config.geometry().map_err(|e| Failure::Input(e.to_string()))?;
    let dictionary =
        build_dictionary(&geometry, dims.t, dims.max_delay).map_err(|e| Failure::Input(format!("{}: {e}", input.display())))?;
    let method = if block.kind == Kind::OnebitTime {
        Method::OnebitSparseBlind
    } else {
        Method::SparseBlind
    };
    let solver = config.solver.for_method(method);
    let est = with_pool(opts.threads, || {
        if method == Method::OnebitSparseBlind {
            estimate_blind_onebit(&rx, &dictionary, rx.rho, &solver)
        } else {
            estimate_blind(&rx, &dictionary, rx.rho, &solver)
        }
    })?
    .map_err(runtime)?;
    let h = channel_transfer(&est.coefficients, &dictionary).map_err(runtime)?;
    let dir = opts.out_dir(&config);
    create_dir(&dir)?;
    let s_out = Container {
        kind: Kind::Coefficients,
        dims,
        rho: rx.rho,
        matrices: vec![est.coefficients.clone()],
    };
    let h_out = Container {
        kind: Kind::Channel,
        dims,
        rho: rx.rho,
        matrices: h,
    };
    write(&dir.join("s_hat.bin"), s_out.to_bytes())?;
    write(&dir.join("h_hat.bin"), h_out.to_bytes())?;
    let diag = Diagnostics {
        method: method.label(),
        iterations: est.iterations,
        converged: est.converged,
        final_objective: est.final_objective(),
        kkt_residual: est.kkt_residual,
        rank_deficient: est.rank_deficient,
    };
    write(&dir.join("estimate.toml"), toml::to_string(&diag).map_err(runtime)?)
}
