//! Instance files, commands and report bundles behind the `epivax` binary.
//!
//! Every command is also exposed as a plain function so it can be driven
//! without spawning a process.

mod report;

pub use report::{
    centrality_cumulative_rows, cost_curve_rows, degree_fraction_rows, run_sweep, write_report,
    Report, SweepCase, FIG1_BETA_HI, FIG1_BETA_LO, FIG1_POINTS, FIG1_T, REPORT_METHODS,
    SWEEP_MULTIPLIERS,
};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorial::{self, DiscreteAllocation, Method};
use crate::cost::CostForm;
use crate::dual::{self, DualOptions, Fixing};
use crate::dynamics::{self, Trajectory};
use crate::error::{Error, Result};
use crate::fractional::{self, VerificationReport};
use crate::graph::{parse_edge_list, Graph};
use crate::instance::EpidemicInstance;

pub const DEFAULT_VACCINE_EFFECT: f64 = 0.2;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

/// A number applied to every node, or one value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    pub fn expand(&self, n: usize, what: &'static str) -> Result<Vec<f64>> {
        match self {
            ScalarOrList::Scalar(x) => Ok(vec![*x; n]),
            ScalarOrList::List(xs) if xs.len() == n => Ok(xs.clone()),
            ScalarOrList::List(xs) => Err(Error::Dimension {
                what,
                expected: n,
                got: xs.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default = "default_form")]
    pub form: CostForm,
    /// `T_i` for reciprocal costs, `c_i` for affine ones.
    #[serde(default = "unit_weight")]
    pub weight: ScalarOrList,
}

fn default_form() -> CostForm {
    CostForm::Reciprocal
}

fn unit_weight() -> ScalarOrList {
    ScalarOrList::Scalar(1.0)
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec {
            form: default_form(),
            weight: unit_weight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Initial infection probability of every node. The Markov chain draws
    /// one initial state from it.
    #[serde(default = "default_initial")]
    pub initial_infection: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_t_end() -> f64 {
    200.0
}

fn default_initial() -> f64 {
    0.5
}

fn default_trials() -> usize {
    20_000
}

fn default_samples() -> usize {
    dynamics::DEFAULT_SAMPLE_POINTS
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            t_end: default_t_end(),
            initial_infection: default_initial(),
            trials: default_trials(),
            samples: default_samples(),
        }
    }
}

/// JSON params file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    /// Edge list; relative paths resolve against the params file.
    #[serde(default)]
    pub graph_path: Option<PathBuf>,
    pub delta: ScalarOrList,
    /// Scalar: `β̄_i = multiplier · δ_i / λ₁(A)`. List: explicit `β̄`.
    pub beta_bar_multiplier: ScalarOrList,
    #[serde(default = "default_vaccine_effect")]
    pub vaccine_effect: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub simulation: SimulationSpec,
}

fn default_vaccine_effect() -> f64 {
    DEFAULT_VACCINE_EFFECT
}

fn schema_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> Error {
    let path = err.path().to_string();
    Error::Schema {
        path,
        message: err.into_inner().to_string(),
    }
}

impl InstanceSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(schema_error)
    }

    /// Reads a params file, resolving `graph_path` against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec = Self::from_json(&fs::read_to_string(path)?)?;
        if let Some(g) = &spec.graph_path {
            if g.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                spec.graph_path = Some(base.join(g));
            }
        }
        Ok(spec)
    }

    pub fn build(&self, graph: Graph) -> Result<EpidemicInstance> {
        self.build_with(graph, &self.beta_bar_multiplier)
    }

    /// Same instance at a different scalar multiplier.
    pub fn build_at_multiplier(&self, graph: Graph, multiplier: f64) -> Result<EpidemicInstance> {
        self.build_with(graph, &ScalarOrList::Scalar(multiplier))
    }

    fn build_with(&self, graph: Graph, beta_bar: &ScalarOrList) -> Result<EpidemicInstance> {
        let n = graph.n();
        if !(self.vaccine_effect > 0.0 && self.vaccine_effect < 1.0) {
            return Err(Error::domain(format!(
                "vaccine_effect must lie in (0, 1), got {}",
                self.vaccine_effect
            )));
        }
        let delta = self.delta.expand(n, "delta")?;
        let beta_hi = match beta_bar {
            ScalarOrList::Scalar(mult) => {
                if !(*mult > 0.0 && mult.is_finite()) {
                    return Err(Error::domain(format!("multiplier must be positive, got {mult}")));
                }
                let lambda1 = graph.spectral_radius();
                if !(lambda1 > 0.0) {
                    return Err(Error::domain("a rate multiplier needs a graph with an edge"));
                }
                delta.iter().map(|d| mult * d / lambda1).collect()
            }
            list => list.expand(n, "beta_bar_multiplier")?,
        };
        let beta_lo = beta_hi.iter().map(|b| self.vaccine_effect * b).collect();
        let weights = self.cost.weight.expand(n, "cost.weight")?;
        EpidemicInstance::new(graph, delta, beta_lo, beta_hi, self.eps, weights, self.cost.form)
    }
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    parse_edge_list(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub n: usize,
    pub m: usize,
    pub lambda1: f64,
    /// Present when the curing rate is a single number.
    pub delta: Option<f64>,
    pub beta_c: Option<f64>,
    pub degree: DegreeStats,
}

pub fn analyze(graph: &Graph, delta: Option<f64>) -> Result<AnalyzeReport> {
    let degrees = graph.degrees();
    let lambda1 = graph.spectral_radius();
    let beta_c = match delta {
        Some(d) if graph.m() > 0 => Some(crate::spectral::critical_beta(graph, d)?),
        _ => None,
    };
    Ok(AnalyzeReport {
        n: graph.n(),
        m: graph.m(),
        lambda1,
        delta,
        beta_c,
        degree: DegreeStats {
            min: degrees.iter().copied().min().unwrap_or(0),
            max: degrees.iter().copied().max().unwrap_or(0),
            mean: if degrees.is_empty() {
                0.0
            } else {
                degrees.iter().sum::<usize>() as f64 / degrees.len() as f64
            },
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AllocMode {
    Fractional,
    Greedy,
    ReverseGreedy,
    Degree,
    Centrality,
    Exhaustive,
}

impl AllocMode {
    pub fn method(self) -> Option<Method> {
        match self {
            AllocMode::Fractional => None,
            AllocMode::Greedy => Some(Method::Greedy),
            AllocMode::ReverseGreedy => Some(Method::ReverseGreedy),
            AllocMode::Degree => Some(Method::Degree),
            AllocMode::Centrality => Some(Method::Centrality),
            AllocMode::Exhaustive => Some(Method::Exhaustive),
        }
    }
}

#[derive(Serialize)]
struct WithVerification<'a, T> {
    #[serde(flatten)]
    result: &'a T,
    verification: VerificationReport,
}

/// Result JSON of `allocate`, with margin and cost recomputed from the rates.
pub fn allocate(inst: &EpidemicInstance, mode: AllocMode) -> Result<serde_json::Value> {
    let value = match mode.method() {
        None => {
            let alloc = fractional::solve_fractional(inst, fractional::DEFAULT_TOL)?;
            let verification = fractional::verify_allocation(inst, &alloc.beta)?;
            serde_json::to_value(WithVerification {
                result: &alloc,
                verification,
            })
        }
        Some(method) => {
            let alloc = combinatorial::run_method(inst, method)?;
            let verification = fractional::verify_allocation(inst, &alloc.beta)?;
            serde_json::to_value(WithVerification {
                result: &alloc,
                verification,
            })
        }
    };
    Ok(value.expect("allocation results serialize"))
}

/// Parses a combinatorial result file and checks it against the instance.
pub fn parse_allocation(text: &str, inst: &EpidemicInstance) -> Result<DiscreteAllocation> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let alloc: DiscreteAllocation =
        serde_path_to_error::deserialize(de).map_err(schema_error)?;
    for (k, &i) in alloc.vaccinated.iter().enumerate() {
        if i >= inst.n() {
            return Err(Error::Schema {
                path: format!("vaccinated[{k}]"),
                message: format!("node {i} out of range for n = {}", inst.n()),
            });
        }
    }
    let stored = alloc.objective_cb;
    let fresh = DiscreteAllocation::from_set(inst, alloc.method, &alloc.vaccinated, alloc.order.clone())?;
    if (fresh.objective_cb - stored).abs() > 1e-9 * (1.0 + stored.abs()) {
        return Err(Error::Schema {
            path: "objective_cb".into(),
            message: format!(
                "stored value {stored} disagrees with {} recomputed from `vaccinated`",
                fresh.objective_cb
            ),
        });
    }
    Ok(fresh)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyOutput {
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub eps: f64,
    pub fixings: std::collections::BTreeMap<String, Fixing>,
    pub objective_cb: f64,
    /// Weak duality makes `gap ≥ 0` only for feasible allocations.
    pub allocation_feasible: bool,
}

pub fn certify(inst: &EpidemicInstance, allocation_json: &str, opts: &DualOptions) -> Result<CertifyOutput> {
    let alloc = parse_allocation(allocation_json, inst)?;
    let cert = dual::solve_dual(inst, opts)?.with_gap(&alloc);
    let rec = cert.record();
    Ok(CertifyOutput {
        value: rec.value,
        gap: rec.gap.expect("gap attached"),
        iterations: rec.iterations,
        eps: rec.eps,
        fixings: rec.fixings,
        objective_cb: alloc.objective_cb,
        allocation_feasible: alloc.is_feasible(),
    })
}

/// Rates stored in a result file: `beta` for fractional results, the
/// vaccinated set otherwise.
pub fn rates_from_result(text: &str, inst: &EpidemicInstance) -> Result<Vec<f64>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: String::new(),
        message: e.to_string(),
    })?;
    if let Some(beta) = value.get("beta") {
        let beta: Vec<f64> = serde_json::from_value(beta.clone()).map_err(|e| Error::Schema {
            path: "beta".into(),
            message: e.to_string(),
        })?;
        if beta.len() != inst.n() {
            return Err(Error::Schema {
                path: "beta".into(),
                message: format!("expected {} entries, got {}", inst.n(), beta.len()),
            });
        }
        return Ok(beta);
    }
    Ok(parse_allocation(text, inst)?.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    /// Nonlinear mean-field ODE.
    Meanfield,
    /// Linear upper-bound ODE.
    Linear,
    /// Gillespie estimate of the exact chain's marginals.
    Markov,
}

pub fn simulate(
    inst: &EpidemicInstance,
    beta: &[f64],
    mode: SimMode,
    sim: &SimulationSpec,
    seed: u64,
) -> Result<Trajectory> {
    let g = inst.graph();
    let r = inst.rates(beta)?;
    let p = sim.initial_infection;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("initial infection must lie in [0, 1], got {p}")));
    }
    if sim.samples < 2 {
        return Err(Error::domain("need at least two samples"));
    }
    match mode {
        SimMode::Meanfield | SimMode::Linear => {
            let dt = dynamics::default_dt(g, &r);
            let steps = (sim.t_end / dt).ceil().max(1.0) as usize;
            let every = (steps / (sim.samples - 1)).max(1);
            let p0 = vec![p; inst.n()];
            if mode == SimMode::Meanfield {
                dynamics::simulate_meanfield_sampled(g, &r, &p0, sim.t_end, dt, every)
            } else {
                dynamics::simulate_linear_bound_sampled(g, &r, &p0, sim.t_end, dt, every)
            }
        }
        SimMode::Markov => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0: Vec<bool> = (0..inst.n()).map(|_| rng.random_bool(p)).collect();
            let est = dynamics::simulate_exact_markov_at(
                g,
                &r,
                &x0,
                sim.t_end,
                sim.samples,
                sim.trials,
                seed,
            )?;
            Ok(Trajectory {
                times: est.times,
                states: est.mean,
            })
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "epivax", version, about = "Cost-optimal vaccine allocation for SIS epidemics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Edge-list file; overrides `graph_path` in the params file.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// JSON params file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Output file (directory for `report`); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Size, spectral radius, epidemic threshold and degree statistics.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Compute an allocation.
    Allocate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: AllocMode,
    },
    /// Dual upper bound and gap for a combinatorial result file.
    Certify {
        #[command(flatten)]
        common: Common,
        allocation: PathBuf,
    },
    /// Infection trajectories, at natural rates unless a result file is given.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "meanfield")]
        mode: SimMode,
        allocation: Option<PathBuf>,
    },
    /// Rate-multiplier sweep and figure CSVs.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

struct Loaded {
    spec: Option<InstanceSpec>,
    graph: Graph,
}

fn load(common: &Common) -> Result<Loaded> {
    let mut spec = match &common.params {
        Some(p) => Some(InstanceSpec::load(p)?),
        None => None,
    };
    if let Some(s) = spec.as_mut() {
        if let Some(eps) = common.eps {
            s.eps = eps;
        }
        if let Some(seed) = common.seed {
            s.seed = seed;
        }
    }
    let graph_path = common
        .graph
        .clone()
        .or_else(|| spec.as_ref().and_then(|s| s.graph_path.clone()))
        .ok_or_else(|| Error::domain("no graph: pass --graph or set graph_path in --params"))?;
    let graph = read_graph(&graph_path)?;
    Ok(Loaded { spec, graph })
}

fn require_spec(loaded: Loaded) -> Result<(InstanceSpec, Graph)> {
    match loaded.spec {
        Some(s) => Ok((s, loaded.graph)),
        None => Err(Error::domain("this command needs --params")),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    s
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Analyze { common } => {
            let loaded = load(common)?;
            let delta = match loaded.spec.as_ref().map(|s| &s.delta) {
                Some(ScalarOrList::Scalar(d)) => Some(*d),
                _ => None,
            };
            emit(common.out.as_deref(), &to_json(&analyze(&loaded.graph, delta)?))
        }
        Command::Allocate { common, mode } => {
            let (spec, graph) = require_spec(load(common)?)?;
            let inst = spec.build(graph)?;
            emit(common.out.as_deref(), &to_json(&allocate(&inst, *mode)?))
        }
        Command::Certify { common, allocation } => {
            let (spec, graph) = require_spec(load(common)?)?;
            let inst = spec.build(graph)?;
            let text = fs::read_to_string(allocation)?;
            let out = certify(&inst, &text, &DualOptions::default())?;
            emit(common.out.as_deref(), &to_json(&out))
        }
        Command::Simulate {
            common,
            mode,
            allocation,
        } => {
            let (spec, graph) = require_spec(load(common)?)?;
            let inst = spec.build(graph)?;
            let beta = match allocation {
                Some(p) => rates_from_result(&fs::read_to_string(p)?, &inst)?,
                None => inst.beta_hi().to_vec(),
            };
            let traj = simulate(&inst, &beta, *mode, &spec.simulation, spec.seed)?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            emit(common.out.as_deref(), &String::from_utf8(buf).expect("csv is utf-8"))
        }
        Command::Report { common } => {
            let (spec, graph) = require_spec(load(common)?)?;
            let dir = common
                .out
                .as_deref()
                .ok_or_else(|| Error::domain("report needs --out <directory>"))?;
            let report = run_sweep(&spec, &graph)?;
            for case in &report.cases {
                if let Some(gap) = case.fractional_gap {
                    eprintln!(
                        "warning: fractional solve at multiplier {} stopped at the cut budget \
                         (relative gap {gap:e}); reporting the feasible incumbent",
                        case.multiplier
                    );
                }
            }
            write_report(&report, dir)?;
            Ok(())
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
