//! Command-line front end. Exit codes: 0 success, 1 an identity failed,
//! 2 bad input, 3 numeric or positivity failure, 4 enumeration cap.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spillsense_core::bounds::{
    contour_grid, worst_case_bias, BiasBound, ContourRow, DataSummary, GridAxis, SensitivityParams,
};
use spillsense_core::decompose::{
    bias_phi1, bias_phi2, bias_undefined, check_corollary, t3_theta, BiasBreakdown, CorollaryReport, ThetaBreakdown,
};
use spillsense_core::estimate::{
    naive_functional_psi, naive_ipw_estimate, pseudo_odds_exact, pseudo_odds_summary, PopulationMeasure, Provenance,
};
use spillsense_core::scenario::{
    random_scenario, DegreeModel, ExposureModel, OutcomeModel, ScenarioOptions, ScenarioSpec, DEFAULT_MAX_STATES,
};
use spillsense_core::simulate::{
    configuration_conditional_measure, generate_network, generate_population, NetworkKind, SyntheticPopulation,
};

use crate::error::{Failure, FailureResult, EXIT_IDENTITY};
use crate::io::{csv_bytes, fmt_f64, write_atomic, write_json};
use crate::network_file::{load_network, save_network};
use crate::observed::{load_observed, load_sidecar};
use crate::params_file::load_params;
use crate::population_file::{
    load_meta, load_population, save_population, ExposureFile, PopulationMeta, POPULATION_FORMAT_VERSION,
};
use crate::scenario_file::{load_scenario, save_scenario, sha256_hex};
use crate::verify::{verify_random, verify_spec, VerifyReport, DEFAULT_TOLERANCE};

pub const MAX_STATES_ENV: &str = "SPILLSENSE_MAX_STATES";

#[derive(Debug, Parser)]
#[command(name = "spillsense", version, about = "Bias decompositions and sensitivity bounds under interference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the identity suite on a scenario file or on seeded random scenarios.
    Verify(VerifyArgs),
    /// Realize a population on a network.
    Simulate(SimulateArgs),
    /// Write the bias breakdown of a scenario or a simulated population.
    Decompose(DecomposeArgs),
    /// Worst-case bias bound for a parameter file.
    Bound(BoundArgs),
    /// Bound over a grid of one or two parameters.
    Contour(ContourArgs),
    /// Generate a network edge list.
    Network(NetworkArgs),
    /// Generate a seeded random scenario file.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, conflicts_with = "random")]
    pub scenario: Option<PathBuf>,
    /// Number of seeded random scenarios.
    #[arg(long, requires = "seed")]
    pub random: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub network: PathBuf,
    /// Unit count when trailing units have no edges.
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub directed: bool,
    #[arg(long)]
    pub seed: u64,
    /// count, count-clamped, any or threshold:K.
    #[arg(long, default_value = "count")]
    pub exposure: String,
    /// Population CSV; metadata goes to the same stem with `.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureMode {
    /// Enumeration, or the configuration-conditional law of a population.
    Exact,
    /// Realized units of a population with equal weights.
    Empirical,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Population CSV written by `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Network for `--data`; defaults to the one named in its metadata.
    #[arg(long, requires = "data")]
    pub network: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MeasureMode::Exact)]
    pub mode: MeasureMode,
    #[arg(long)]
    pub transport: bool,
    #[arg(long)]
    pub undefined_po: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummarySource {
    #[arg(long)]
    pub params: PathBuf,
    /// Observed-data CSV.
    #[arg(long, conflicts_with = "scenario")]
    pub data: Option<PathBuf>,
    /// Role mapping for `--data`; defaults to `<data stem>.roles.json`.
    #[arg(long, requires = "data")]
    pub sidecar: Option<PathBuf>,
    /// Summarize a scenario exactly instead of a sample.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub g_max: Option<usize>,
    #[arg(long)]
    pub transport: bool,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub source: SummarySource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ContourArgs {
    #[command(flatten)]
    pub source: SummarySource,
    /// `name:lo:hi:steps`; give one or two.
    #[arg(long, required = true)]
    pub vary: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NetworkShape {
    Er,
    Ring,
    Star,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[arg(long, value_enum)]
    pub kind: NetworkShape,
    #[arg(long)]
    pub units: usize,
    /// Edge probability for `er`.
    #[arg(long)]
    pub p: Option<f64>,
    /// Even degree for `ring`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioFamily {
    General,
    Additive,
    Separable,
    EqualMarginals,
    Randomized,
    Identical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DegreeFamily {
    Ragged,
    Full,
    Isolated,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ScenarioFamily::General)]
    pub family: ScenarioFamily,
    #[arg(long)]
    pub g_max: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub max_support: usize,
    /// Add a neighbour-count law (undefined potential outcomes).
    #[arg(long, value_enum)]
    pub undefined_po: Option<DegreeFamily>,
    #[arg(long)]
    pub no_confounding: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Enumeration cap from the environment, else the default.
pub fn max_states() -> FailureResult<u128> {
    match std::env::var(MAX_STATES_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{MAX_STATES_ENV}=`{v}` is not a non-negative integer"))),
        Err(_) => Ok(DEFAULT_MAX_STATES),
    }
}

fn require_file(path: &Path) -> FailureResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{}: no such file", path.display())))
    }
}

/// Runs a parsed command and returns its exit code; failures carry their
/// own code.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> FailureResult<u8> {
    match cli.command {
        Command::Verify(a) => run_verify(&a, stdout),
        Command::Simulate(a) => run_simulate(&a, stdout).map(|_| 0),
        Command::Decompose(a) => run_decompose(&a, stdout).map(|_| 0),
        Command::Bound(a) => run_bound(&a, stdout).map(|_| 0),
        Command::Contour(a) => run_contour(&a, stdout).map(|_| 0),
        Command::Network(a) => run_network(&a, stdout).map(|_| 0),
        Command::Scenario(a) => run_scenario(&a, stdout).map(|_| 0),
    }
}

fn say(stdout: &mut dyn Write, text: impl std::fmt::Display) {
    // a closed stdout must not turn a finished run into a failure
    let _ = writeln!(stdout, "{text}");
}

pub fn run_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> FailureResult<u8> {
    if args.tolerance.is_nan() || args.tolerance < 0.0 {
        return Err(Failure::Usage(format!("tolerance {} must be non-negative", args.tolerance)));
    }
    let cap = max_states()?;
    let report = match (&args.scenario, args.random) {
        (Some(path), None) => {
            require_file(path)?;
            let loaded = load_scenario(path)?;
            let mut report = VerifyReport::new(args.tolerance);
            verify_spec(&loaded.spec, &path.display().to_string(), cap, &mut report)?;
            report
        }
        (None, Some(n)) => verify_random(n, args.seed.expect("clap requires a seed"), cap, args.tolerance)?,
        _ => return Err(Failure::Usage("give either --scenario or --random N --seed S".into())),
    };
    say(stdout, &report);
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(if report.passed() { 0 } else { EXIT_IDENTITY })
}

pub fn run_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> FailureResult<SyntheticPopulation> {
    require_file(&args.scenario)?;
    require_file(&args.network)?;
    let loaded = load_scenario(&args.scenario)?;
    let network_bytes = crate::io::read_bytes(&args.network)?;
    let network = crate::network_file::parse_network(&args.network, &network_bytes, args.units, args.directed)?;
    let exposure = ExposureFile::parse(&args.exposure, loaded.spec.g_max)?;
    let pop = generate_population(&loaded.spec, &network, &exposure.to_spec()?, args.seed)?;
    let meta = PopulationMeta {
        format_version: POPULATION_FORMAT_VERSION,
        seed: args.seed,
        scenario: args.scenario.display().to_string(),
        scenario_sha256: loaded.sha256,
        network: args.network.display().to_string(),
        network_sha256: sha256_hex(&network_bytes),
        units: network.unit_count(),
        directed: args.directed,
        exposure,
        undefined_po: pop.undefined_po,
    };
    save_population(&args.out, &pop, &meta)?;
    say(stdout, format_args!("wrote {} units to {}", pop.units.len(), args.out.display()));
    Ok(pop)
}

/// Breakdown report; the transport extras appear when requested.
#[derive(Debug, Clone, Serialize)]
pub struct DecomposeReport {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub breakdown: BiasBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corollary: Option<CorollaryReport>,
}

/// The breakdown for a measure under the requested modes.
pub fn decompose_measure(
    measure: &PopulationMeasure,
    spec: &ScenarioSpec,
    transport: bool,
    undefined_po: bool,
) -> FailureResult<DecomposeReport> {
    if undefined_po != spec.is_undefined_po() {
        return Err(Failure::Usage(if undefined_po {
            "--undefined-po needs a scenario with a degree table".into()
        } else {
            "the scenario has a degree table; pass --undefined-po".into()
        }));
    }
    let breakdown = match (undefined_po, transport) {
        (true, _) => bias_undefined(measure, spec)?,
        (false, true) => bias_phi2(measure, spec)?,
        (false, false) => bias_phi1(measure, spec)?,
    };
    let (theta, corollary) = if transport && breakdown.flags.transport {
        (Some(t3_theta(measure, spec)?), Some(check_corollary(measure, spec)?))
    } else {
        (None, None)
    };
    Ok(DecomposeReport { provenance: measure.provenance(), breakdown, theta, corollary })
}

pub fn run_decompose(args: &DecomposeArgs, stdout: &mut dyn Write) -> FailureResult<DecomposeReport> {
    require_file(&args.scenario)?;
    let spec = load_scenario(&args.scenario)?.spec;
    let measure = match &args.data {
        None => {
            if args.mode == MeasureMode::Empirical {
                return Err(Failure::Usage("--mode empirical needs --data".into()));
            }
            PopulationMeasure::enumerate(&spec, max_states()?)?
        }
        Some(data) => {
            require_file(data)?;
            let meta = load_meta(data)?;
            let net_path = args.network.clone().unwrap_or_else(|| PathBuf::from(&meta.network));
            require_file(&net_path)?;
            let network = load_network(&net_path, Some(meta.units), meta.directed)?;
            let pop = load_population(data, network, &meta)?;
            match args.mode {
                MeasureMode::Exact => configuration_conditional_measure(&pop, &spec)?,
                MeasureMode::Empirical => PopulationMeasure::empirical(pop.states())?,
            }
        }
    };
    let report = decompose_measure(&measure, &spec, args.transport, args.undefined_po)?;
    write_json(&args.out, &report)?;
    say(
        stdout,
        format_args!(
            "T1 {:.6e}  T2 {:.6e}{}  residual {:.3e}",
            report.breakdown.totals.t1,
            report.breakdown.totals.t2,
            report.breakdown.totals.t3.map(|t| format!("  T3 {t:.6e}")).unwrap_or_default(),
            report.breakdown.residuals.phi2.unwrap_or(report.breakdown.residuals.phi1)
        ),
    );
    Ok(report)
}

/// Resolves the data summary behind a bound: observed data, an exact
/// scenario, or the `summary` object of the params file, in that order.
pub fn resolve_summary(source: &SummarySource) -> FailureResult<(SensitivityParams, DataSummary)> {
    require_file(&source.params)?;
    let file = load_params(&source.params)?;
    let zeta_levels = file.params.zeta.as_ref().map(|z| z.len().saturating_sub(1));
    let mut summary = if let Some(data) = &source.data {
        require_file(data)?;
        let sidecar = load_sidecar(data, source.sidecar.as_deref())?;
        let records = load_observed(data, &sidecar)?;
        let est = naive_ipw_estimate(&records)?;
        let g_max = source.g_max.or(sidecar.g_max).or(zeta_levels).or(file.summary.as_ref().map(|s| s.g_max));
        if source.transport && g_max.is_none() {
            return Err(Failure::Usage("transport bounds need g_max (--g-max or the sidecar)".into()));
        }
        DataSummary {
            eps_ratio: pseudo_odds_summary(&records)?,
            psi_hat: est.psi_hat,
            g_max: g_max.unwrap_or(0),
            provenance: "empirical_sample".into(),
        }
    } else if let Some(path) = &source.scenario {
        require_file(path)?;
        let spec = load_scenario(path)?.spec;
        let m = PopulationMeasure::enumerate(&spec, max_states()?)?;
        DataSummary {
            eps_ratio: pseudo_odds_exact(&m, &spec)?,
            psi_hat: naive_functional_psi(&m, &spec)?,
            g_max: spec.g_max,
            provenance: "enumeration".into(),
        }
    } else {
        file.summary
            .clone()
            .ok_or_else(|| Failure::Usage("give --data, --scenario or a `summary` in the params file".into()))?
    };
    if let Some(g) = source.g_max {
        summary.g_max = g;
    }
    Ok((file.params, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    #[serde(flatten)]
    pub bound: BiasBound,
    pub summary: DataSummary,
}

pub fn run_bound(args: &BoundArgs, stdout: &mut dyn Write) -> FailureResult<BoundReport> {
    let (params, summary) = resolve_summary(&args.source)?;
    let bound = worst_case_bias(&params, &summary, args.source.transport)?;
    say(
        stdout,
        format_args!(
            "psi_hat {:.6}  bound {:.6}  adjusted [{:.6}, {:.6}]{}",
            bound.psi_hat,
            bound.total,
            bound.adjusted_interval[0],
            bound.adjusted_interval[1],
            if bound.kill { "  (can explain away the estimate)" } else { "" }
        ),
    );
    let report = BoundReport { bound, summary };
    write_json(&args.out, &report)?;
    Ok(report)
}

/// Parses `name:lo:hi:steps`.
pub fn parse_vary(text: &str) -> FailureResult<GridAxis> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Failure::Usage(format!("--vary `{text}`: expected name:lo:hi:steps"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let lo: f64 = parts[1].parse().map_err(|_| bad())?;
    let hi: f64 = parts[2].parse().map_err(|_| bad())?;
    let steps: usize = parts[3].parse().map_err(|_| bad())?;
    Ok(GridAxis::new(parts[0], lo, hi, steps)?)
}

pub fn run_contour(args: &ContourArgs, stdout: &mut dyn Write) -> FailureResult<Vec<ContourRow>> {
    let axes = args.vary.iter().map(|v| parse_vary(v)).collect::<FailureResult<Vec<_>>>()?;
    let (params, summary) = resolve_summary(&args.source)?;
    let transport = args.source.transport;
    let (rows, two_axes) = match axes.as_slice() {
        [a1, a2] => {
            if a1.name == a2.name {
                return Err(Failure::Usage(format!("both axes vary `{}`", a1.name)));
            }
            (contour_grid(&params, &summary, a1, a2, transport)?, true)
        }
        [a1] => {
            let mut rows = Vec::with_capacity(a1.steps);
            for k in 0..a1.steps {
                let mut p = params.clone();
                p.set(&a1.name, a1.value(k))?;
                let b = worst_case_bias(&p, &summary, transport)?;
                rows.push(ContourRow { param1: a1.value(k), param2: f64::NAN, bound: b.total, kill: b.kill });
            }
            (rows, false)
        }
        _ => return Err(Failure::Usage("--vary takes one or two axes".into())),
    };
    let bytes = csv_bytes(
        &["param1", "param2", "bound", "kill"],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.param1),
                if two_axes { fmt_f64(r.param2) } else { String::new() },
                fmt_f64(r.bound),
                r.kill.to_string(),
            ]
        }),
    )?;
    write_atomic(&args.out, &bytes)?;
    say(stdout, format_args!("wrote {} rows to {}", rows.len(), args.out.display()));
    Ok(rows)
}

pub fn run_network(args: &NetworkArgs, stdout: &mut dyn Write) -> FailureResult<()> {
    let kind = match args.kind {
        NetworkShape::Er => {
            NetworkKind::ErdosRenyi { p: args.p.ok_or_else(|| Failure::Usage("--kind er needs --p".into()))? }
        }
        NetworkShape::Ring => {
            NetworkKind::Ring { k: args.k.ok_or_else(|| Failure::Usage("--kind ring needs --k".into()))? }
        }
        NetworkShape::Star => NetworkKind::Star,
    };
    let seed = match (args.kind, args.seed) {
        (NetworkShape::Er, None) => return Err(Failure::Usage("random networks need --seed".into())),
        (_, s) => s.unwrap_or(0),
    };
    let net = generate_network(kind, args.units, seed)?;
    save_network(&args.out, &net)?;
    say(
        stdout,
        format_args!("wrote {} edges over {} units to {}", net.edges().len(), net.unit_count(), args.out.display()),
    );
    Ok(())
}

pub fn run_scenario(args: &ScenarioArgs, stdout: &mut dyn Write) -> FailureResult<ScenarioSpec> {
    let mut opts = ScenarioOptions {
        fixed_g_max: args.g_max,
        max_support: args.max_support,
        confounding: !args.no_confounding,
        degree_model: args.undefined_po.map(|d| match d {
            DegreeFamily::Ragged => DegreeModel::Ragged,
            DegreeFamily::Full => DegreeModel::Full,
            DegreeFamily::Isolated => DegreeModel::Isolated,
        }),
        ..ScenarioOptions::default()
    };
    match args.family {
        ScenarioFamily::General => {}
        ScenarioFamily::Additive => opts.outcome_model = OutcomeModel::Additive,
        ScenarioFamily::Separable => opts.outcome_model = OutcomeModel::SeparableInteraction,
        ScenarioFamily::EqualMarginals => opts.exposure_model = ExposureModel::EqualMarginals,
        ScenarioFamily::Randomized => opts.exposure_model = ExposureModel::Randomized,
        ScenarioFamily::Identical => opts.identical_populations = true,
    }
    let spec = random_scenario(args.seed, &opts)?;
    save_scenario(&args.out, &spec)?;
    say(stdout, format_args!("wrote scenario with g_max {} to {}", spec.g_max, args.out.display()));
    Ok(spec)
}
