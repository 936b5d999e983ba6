//! The identity suite: every decomposition, identification and bound
//! check that applies to a scenario, reduced to a residual per identity.

use std::fmt;

use serde::Serialize;
use spillsense_core::bounds::{oracle_params, worst_case_bias, DataSummary};
use spillsense_core::decompose::{
    bias_phi1, bias_phi2, bias_undefined, check_corollary, confounding_only_t1, t3_theta, BiasBreakdown,
};
use spillsense_core::estimate::{
    ipw_identify, mew_scores, oracle_estimands, pseudo_odds_exact, PopulationMeasure, Provenance,
};
use spillsense_core::scenario::{
    random_scenario, DegreeModel, ExposureModel, OutcomeModel, Population, ScenarioOptions, ScenarioSpec,
};
use spillsense_core::{numeric, Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Tolerance for identities that hold by construction rather than by
/// cancellation.
pub const STRUCTURAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    Phi1,
    Phi2,
    Theta,
    IdentifyPhi1,
    IdentifyPhi2,
    MewMean,
    EqualMarginals,
    Randomized,
    Additive,
    SeparableInteraction,
    NoSpillover,
    UndefinedPhi1,
    UndefinedPhi2,
    FullNeighbourhoods,
    IsolatedUnits,
    SigmaEpsCap,
    BoundSoundness,
}

impl Identity {
    pub const ALL: [Identity; 17] = [
        Identity::Phi1,
        Identity::Phi2,
        Identity::Theta,
        Identity::IdentifyPhi1,
        Identity::IdentifyPhi2,
        Identity::MewMean,
        Identity::EqualMarginals,
        Identity::Randomized,
        Identity::Additive,
        Identity::SeparableInteraction,
        Identity::NoSpillover,
        Identity::UndefinedPhi1,
        Identity::UndefinedPhi2,
        Identity::FullNeighbourhoods,
        Identity::IsolatedUnits,
        Identity::SigmaEpsCap,
        Identity::BoundSoundness,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Identity::Phi1 => "psi - phi1 = T1 + T2",
            Identity::Phi2 => "psi - phi2 = T1 + T2 + T3",
            Identity::Theta => "psi - theta = T1 + T2 + T3theta",
            Identity::IdentifyPhi1 => "IPW identifies phi1",
            Identity::IdentifyPhi2 => "IPW identifies phi2",
            Identity::MewMean => "E[eps_a | S=1] = 1",
            Identity::EqualMarginals => "equal exposure marginals: T3 = sum of covariances",
            Identity::Randomized => "randomized exposure: T3 = sum of mean-gap terms",
            Identity::Additive => "additive outcome: T3 = 0",
            Identity::SeparableInteraction => "separable interaction: T3theta = 0",
            Identity::NoSpillover => "g_max = 0: T2 = 0, T1 confounding-only",
            Identity::UndefinedPhi1 => "undefined outcomes: psi - phi1 = T1 + T2",
            Identity::UndefinedPhi2 => "undefined outcomes: psi - phi2 = T1 + T2 + T3",
            Identity::FullNeighbourhoods => "p(N = g_max) = 1 matches the defined case",
            Identity::IsolatedUnits => "p(N = 0) = 1: T2 = 0",
            Identity::SigmaEpsCap => "sigma(eps_a) within its cap",
            Identity::BoundSoundness => "oracle bound covers the bias",
        }
    }

    pub fn tolerance(self, tolerance: f64) -> f64 {
        match self {
            Identity::EqualMarginals
            | Identity::Randomized
            | Identity::FullNeighbourhoods
            | Identity::IsolatedUnits => STRUCTURAL_TOLERANCE.min(tolerance),
            _ => tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityLine {
    pub identity: String,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    /// Scenario with the largest residual.
    pub worst: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scenarios: usize,
    pub tolerance: f64,
    pub lines: Vec<IdentityLine>,
}

impl VerifyReport {
    pub fn new(tolerance: f64) -> Self {
        let lines = Identity::ALL
            .iter()
            .map(|id| IdentityLine {
                identity: id.label().to_string(),
                cases: 0,
                max_residual: 0.0,
                tolerance: id.tolerance(tolerance),
                worst: None,
                passed: true,
            })
            .collect();
        Self { scenarios: 0, tolerance, lines }
    }

    pub fn line(&self, id: Identity) -> &IdentityLine {
        &self.lines[Identity::ALL.iter().position(|&i| i == id).unwrap()]
    }

    fn record(&mut self, id: Identity, residual: f64, scenario: &str) {
        let line = &mut self.lines[Identity::ALL.iter().position(|&i| i == id).unwrap()];
        line.cases += 1;
        let r = if residual.is_nan() { f64::INFINITY } else { residual.abs() };
        if r > line.max_residual || line.worst.is_none() {
            line.max_residual = line.max_residual.max(r);
            line.worst = Some(scenario.to_string());
        }
        line.passed = line.max_residual <= line.tolerance;
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<52} {:>6} {:>12} {:>8}  status", "identity", "cases", "max resid", "tol")?;
        for l in &self.lines {
            let status = match (l.cases, l.passed) {
                (0, _) => "n/a",
                (_, true) => "pass",
                (_, false) => "FAIL",
            };
            writeln!(
                f,
                "{:<52} {:>6} {:>12.3e} {:>8.0e}  {status}{}",
                l.identity,
                l.cases,
                l.max_residual,
                l.tolerance,
                match (&l.worst, l.passed) {
                    (Some(w), false) => format!(" (worst: {w})"),
                    _ => String::new(),
                }
            )?;
        }
        write!(
            f,
            "{} scenario(s); {}",
            self.scenarios,
            if self.passed() { "all identities hold" } else { "identity failures" }
        )
    }
}

/// `(y_min, y_max)` over baseline outcomes y(a, 0) and `(x_min, x_max)`
/// over every γ(a) and τ(g) in the outcome table.
pub fn outcome_ranges(spec: &ScenarioSpec) -> ((f64, f64), (f64, f64)) {
    let t = &spec.outcome;
    let per_cell: usize = t.shape()[2..].iter().product();
    let levels = spec.levels();
    let at = |a: usize, g: usize, cell: usize| t.values()[(a * levels + g) * per_cell + cell];
    let (mut y, mut x) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    let widen = |r: &mut (f64, f64), v: f64| {
        r.0 = r.0.min(v);
        r.1 = r.1.max(v);
    };
    for cell in 0..per_cell {
        for a in 0..2 {
            widen(&mut y, at(a, 0, cell));
            for g in 0..levels {
                widen(&mut x, at(a, g, cell) - at(a, 0, cell));
            }
        }
        for g in 0..levels {
            widen(&mut x, at(1, g, cell) - at(0, g, cell));
        }
    }
    (y, x)
}

fn exact_summary(measure: &PopulationMeasure, spec: &ScenarioSpec, psi: f64) -> Result<DataSummary> {
    Ok(DataSummary {
        eps_ratio: pseudo_odds_exact(measure, spec)?,
        psi_hat: psi,
        g_max: spec.g_max,
        provenance: "enumeration".into(),
    })
}

fn record_bounds(
    report: &mut VerifyReport,
    label: &str,
    measure: &PopulationMeasure,
    spec: &ScenarioSpec,
    b: &BiasBreakdown,
) -> Result<()> {
    let summary = exact_summary(measure, spec, b.direct.psi)?;
    let cap = (0..2).map(|a| b.t1[a].sigma_eps - numeric::sqrt(summary.eps_ratio[a])).fold(0.0f64, f64::max);
    report.record(Identity::SigmaEpsCap, cap.max(0.0), label);
    let (y, x) = outcome_ranges(spec);
    let params = oracle_params(b, &summary, y, x);
    let plain = worst_case_bias(&params, &summary, false)?;
    let mut miss = (b.direct.bias_phi1.abs() - plain.total).max(0.0);
    if let Some(bias2) = b.direct.bias_phi2 {
        if !b.t3.is_empty() {
            let with_transport = worst_case_bias(&params, &summary, true)?;
            miss = miss.max(bias2.abs() - with_transport.total);
        }
    }
    report.record(Identity::BoundSoundness, miss.max(0.0), label);
    Ok(())
}

/// Runs every applicable identity on one scenario's exact enumeration.
pub fn verify_spec(spec: &ScenarioSpec, label: &str, max_states: u128, report: &mut VerifyReport) -> Result<()> {
    let m = PopulationMeasure::enumerate(spec, max_states)?;
    debug_assert_eq!(m.provenance(), Provenance::Enumeration);
    report.scenarios += 1;
    let est = oracle_estimands(&m, spec)?;

    let scores = mew_scores(&m, spec)?;
    let mut mean_gap = 0.0f64;
    for a in 0..2 {
        let mean = numeric::sum(m.atoms().iter().zip(&scores).filter_map(|(s, e)| e.map(|e| s.weight * e[a])))
            / m.population_mass(Population::Reference);
        mean_gap = mean_gap.max((mean - 1.0).abs());
    }
    report.record(Identity::MewMean, mean_gap, label);

    for (s, id) in [(Population::Reference, Identity::IdentifyPhi1), (Population::Target, Identity::IdentifyPhi2)] {
        if let Some(phi) = est.phi[s.index()] {
            report.record(id, ipw_identify(&m, spec, s)? - phi, label);
        }
    }

    let has_target = m.population_mass(Population::Target) > 0.0;
    if spec.is_undefined_po() {
        let b = bias_undefined(&m, spec)?;
        report.record(Identity::UndefinedPhi1, b.residuals.phi1, label);
        if let Some(r) = b.residuals.phi2 {
            report.record(Identity::UndefinedPhi2, r, label);
        }
        if has_target {
            report.record(Identity::Theta, t3_theta(&m, spec)?.residual, label);
        }
        if let Some(collapsed) = spec.collapse_degree() {
            let degree = spec.degree.as_ref().expect("undefined mode");
            if degree.get(&[0, 0]) == 1.0 {
                report.record(Identity::IsolatedUnits, b.totals.t2, label);
            }
            if degree.get(&[0, spec.g_max]) == 1.0 {
                let cm = PopulationMeasure::enumerate(&collapsed, max_states)?;
                let defined = bias_phi1(&cm, &collapsed)?;
                let gap = (defined.totals.t1 - b.totals.t1).abs() + (defined.totals.t2 - b.totals.t2).abs();
                report.record(Identity::FullNeighbourhoods, gap, label);
            }
        }
        record_bounds(report, label, &m, spec, &b)?;
        return Ok(());
    }

    let b1 = bias_phi1(&m, spec)?;
    report.record(Identity::Phi1, b1.residuals.phi1, label);
    if spec.g_max == 0 {
        let shen = confounding_only_t1(&m, spec)?;
        let r = b1.totals.t2.abs().max((shen[0] + shen[1] - b1.totals.t1).abs());
        report.record(Identity::NoSpillover, r, label);
    }
    if !has_target {
        record_bounds(report, label, &m, spec, &b1)?;
        return Ok(());
    }
    let b2 = bias_phi2(&m, spec)?;
    report.record(Identity::Phi2, b2.residuals.phi2.unwrap_or(f64::NAN), label);
    let theta = t3_theta(&m, spec)?;
    report.record(Identity::Theta, theta.residual, label);
    let cor = check_corollary(&m, spec)?;
    if let Some(r) = cor.residual_equal_marginals {
        report.record(Identity::EqualMarginals, r, label);
    }
    if let Some(r) = cor.residual_randomized {
        report.record(Identity::Randomized, r, label);
    }
    if spec.outcome_is_additive(STRUCTURAL_TOLERANCE) {
        report.record(Identity::Additive, b2.totals.t3.unwrap_or(f64::NAN), label);
    }
    if spec.interaction_is_separable(STRUCTURAL_TOLERANCE) {
        report.record(Identity::SeparableInteraction, theta.total, label);
    }
    record_bounds(report, label, &m, spec, &b2)
}

/// Scenario options for the `i`-th scenario of a random suite; the suite
/// cycles through every structural family.
pub fn suite_options(i: usize) -> ScenarioOptions {
    let base = ScenarioOptions::default();
    match i % 8 {
        0 => base,
        1 => ScenarioOptions { outcome_model: OutcomeModel::Additive, ..base },
        2 => ScenarioOptions { outcome_model: OutcomeModel::SeparableInteraction, ..base },
        3 => ScenarioOptions { exposure_model: ExposureModel::EqualMarginals, ..base },
        4 => ScenarioOptions { exposure_model: ExposureModel::Randomized, ..base },
        5 => ScenarioOptions {
            degree_model: Some(
                [DegreeModel::Ragged, DegreeModel::Ragged, DegreeModel::Full, DegreeModel::Isolated][(i / 8) % 4],
            ),
            ..base
        },
        6 => ScenarioOptions { fixed_g_max: Some(0), ..base },
        _ => ScenarioOptions { identical_populations: true, ..base },
    }
}

/// Scenario seed for the `i`-th member of a suite started at `seed`.
pub fn suite_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

pub fn verify_random(count: usize, seed: u64, max_states: u128, tolerance: f64) -> Result<VerifyReport> {
    let mut report = VerifyReport::new(tolerance);
    for i in 0..count {
        let s = suite_seed(seed, i);
        let spec = random_scenario(s, &suite_options(i))?;
        verify_spec(&spec, &format!("random #{i} (seed {s})"), max_states, &mut report)
            .map_err(|e| annotate(e, i, s))?;
    }
    Ok(report)
}

fn annotate(e: Error, i: usize, seed: u64) -> Error {
    let ctx = |m: String| format!("random #{i} (seed {seed}): {m}");
    match e {
        Error::InputDomain(m) => Error::InputDomain(ctx(m)),
        Error::InvalidScenario(m) => Error::InvalidScenario(ctx(m)),
        Error::UndefinedStratum(m) => Error::UndefinedStratum(ctx(m)),
        Error::ZeroMass(m) => Error::ZeroMass(ctx(m)),
        Error::Positivity(m) => Error::Positivity(ctx(m)),
        Error::Estimation(m) => Error::Estimation(ctx(m)),
        Error::Structural(m) => Error::Structural(ctx(m)),
        Error::Mode(m) => Error::Mode(ctx(m)),
        other => other,
    }
}
