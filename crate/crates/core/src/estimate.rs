//! Estimands, nuisance scores and the naive inverse-probability-weighted
//! functional.
//!
//! Everything here is an expectation under a [`PopulationMeasure`]: either
//! the exact joint enumeration of a scenario, a configuration-conditional
//! measure on a realized graph, or an empirical sample. Potential outcomes
//! are read from the scenario's outcome table and the true propensity from
//! its propensity table; the pseudo-propensity is computed from the measure
//! itself so that its stratum means are exact under that measure.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{sqrt, sum, CompensatedSum};
use crate::scenario::{enumerate_joint, JointState, Population, Role, ScenarioSpec};

/// Tolerance on the total weight of a measure.
pub const MEASURE_MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Provenance {
    Enumeration,
    ConfigurationConditional,
    EmpiricalSample,
}

impl Provenance {
    /// Whether expectations under this measure are exact population values.
    pub fn is_exact(self) -> bool {
        !matches!(self, Provenance::EmpiricalSample)
    }
}

/// Weighted atoms standing in for the expectation operator.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMeasure {
    atoms: Vec<JointState>,
    provenance: Provenance,
}

impl PopulationMeasure {
    pub fn new(atoms: Vec<JointState>, provenance: Provenance) -> Result<Self> {
        if let Some(bad) = atoms.iter().position(|a| !(a.weight >= 0.0) || !a.weight.is_finite()) {
            return Err(Error::InputDomain(format!("atom {bad} has invalid weight {}", atoms[bad].weight)));
        }
        let total = sum(atoms.iter().map(|a| a.weight));
        if (total - 1.0).abs() > MEASURE_MASS_TOLERANCE {
            return Err(Error::InputDomain(format!("measure weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, provenance })
    }

    /// Exact joint enumeration of a scenario.
    pub fn enumerate(spec: &ScenarioSpec, max_states: u128) -> Result<Self> {
        Self::new(enumerate_joint(spec, max_states)?, Provenance::Enumeration)
    }

    /// Equal-weight measure over sampled units; incoming weights are ignored.
    pub fn empirical(mut units: Vec<JointState>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::ZeroMass("empty sample".into()));
        }
        let w = 1.0 / units.len() as f64;
        for u in &mut units {
            u.weight = w;
        }
        Self::new(units, Provenance::EmpiricalSample)
    }

    pub fn atoms(&self) -> &[JointState] {
        &self.atoms
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mass(&self, pred: impl Fn(&JointState) -> bool) -> f64 {
        sum(self.atoms.iter().filter(|a| pred(a)).map(|a| a.weight))
    }

    pub fn population_mass(&self, s: Population) -> f64 {
        self.mass(|a| a.s == s)
    }

    /// E[f | pred]; conditioning on a zero-mass event is an error.
    pub fn conditional_mean(
        &self,
        pred: impl Fn(&JointState) -> bool,
        mut f: impl FnMut(&JointState) -> f64,
        event: &str,
    ) -> Result<f64> {
        let mut mass = CompensatedSum::new();
        let mut acc = CompensatedSum::new();
        for a in self.atoms.iter().filter(|a| pred(a)) {
            mass.add(a.weight);
            acc.add(a.weight * f(a));
        }
        let m = mass.value();
        if !(m > 0.0) {
            return Err(Error::ZeroMass(format!("conditioning event `{event}` has zero mass")));
        }
        Ok(acc.value() / m)
    }
}

#[inline]
fn x_ay(state: &JointState) -> usize {
    state.covariates[Role::XAy.index()] as usize
}

/// p(A = 1 | S = s, x_ay) under a measure, one entry per `x_ay` value;
/// `None` marks strata without mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPropensity {
    pub population: Population,
    pub treated: Vec<Option<f64>>,
}

impl PseudoPropensity {
    /// p(A = a | S = s, x_ay = x).
    pub fn arm(&self, x: usize, a: u8) -> Result<f64> {
        let p = self.treated.get(x).copied().flatten().ok_or_else(|| {
            Error::UndefinedStratum(format!("x_ay = {x} has zero mass given S = {}", self.population.label()))
        })?;
        Ok(if a == 1 { p } else { 1.0 - p })
    }
}

/// Pseudo-propensity computed from the measure; each occupied stratum must
/// contain both arms.
pub fn pseudo_propensity(measure: &PopulationMeasure, spec: &ScenarioSpec, s: Population) -> Result<PseudoPropensity> {
    let k = spec.support(Role::XAy);
    let mut mass = vec![CompensatedSum::new(); k];
    let mut treated = vec![CompensatedSum::new(); k];
    for atom in measure.atoms().iter().filter(|a| a.s == s) {
        let x = x_ay(atom);
        if x >= k {
            return Err(Error::InputDomain(format!("x_ay = {x} outside the scenario's support {k}")));
        }
        mass[x].add(atom.weight);
        if atom.a == 1 {
            treated[x].add(atom.weight);
        }
    }
    let mut out = Vec::with_capacity(k);
    for x in 0..k {
        let m = mass[x].value();
        if m > 0.0 {
            let p = treated[x].value() / m;
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Positivity(format!(
                    "stratum x_ay = {x} in population {} has a single treatment arm",
                    s.label()
                )));
            }
            out.push(Some(p));
        } else {
            out.push(None);
        }
    }
    Ok(PseudoPropensity { population: s, treated: out })
}

/// MEW scores `(eps_0, eps_1)` per atom: true over pseudo-propensity in the
/// reference population. Target-population atoms get `None`.
pub fn mew_scores(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<Vec<Option<[f64; 2]>>> {
    let pseudo = pseudo_propensity(measure, spec, Population::Reference)?;
    measure
        .atoms()
        .iter()
        .map(|atom| {
            if atom.s != Population::Reference {
                return Ok(None);
            }
            let x = x_ay(atom);
            let p1 = spec.treatment_probability(Population::Reference, &atom.covariates);
            Ok(Some([(1.0 - p1) / pseudo.arm(x, 0)?, p1 / pseudo.arm(x, 1)?]))
        })
        .collect()
}

#[inline]
fn observed_outcome(spec: &ScenarioSpec, atom: &JointState) -> f64 {
    spec.outcome_value(atom.a, atom.g as usize, &atom.covariates)
}

/// Exact naive functional: the IPW contrast in the reference population
/// weighted by the pseudo-propensity.
pub fn naive_functional_psi(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<f64> {
    let pseudo = pseudo_propensity(measure, spec, Population::Reference)?;
    let mut acc = CompensatedSum::new();
    let mut mass = CompensatedSum::new();
    for atom in measure.atoms().iter().filter(|a| a.s == Population::Reference) {
        mass.add(atom.weight);
        let y = observed_outcome(spec, atom);
        let p = pseudo.arm(x_ay(atom), atom.a)?;
        let sign = if atom.a == 1 { 1.0 } else { -1.0 };
        acc.add(sign * atom.weight * y / p);
    }
    let m = mass.value();
    if !(m > 0.0) {
        return Err(Error::ZeroMass("S = 1 has zero mass".into()));
    }
    Ok(acc.value() / m)
}

/// IPW contrast in population `s` weighted by the true propensity.
pub fn ipw_identify(measure: &PopulationMeasure, spec: &ScenarioSpec, s: Population) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    let mut mass = CompensatedSum::new();
    for atom in measure.atoms().iter().filter(|a| a.s == s) {
        mass.add(atom.weight);
        let p = spec.arm_probability(s, atom.a, &atom.covariates);
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Positivity(format!("true propensity {p} outside (0, 1) in population {}", s.label())));
        }
        let sign = if atom.a == 1 { 1.0 } else { -1.0 };
        acc.add(sign * atom.weight * observed_outcome(spec, atom) / p);
    }
    let m = mass.value();
    if !(m > 0.0) {
        return Err(Error::ZeroMass(format!("S = {} has zero mass", s.label())));
    }
    Ok(acc.value() / m)
}

/// Whether potential outcome `Y^(a, g)` is defined for the atom.
#[inline]
pub fn level_defined(atom: &JointState, g: usize) -> bool {
    atom.n.is_none_or(|n| g <= n as usize)
}

/// τ(g) = y(1, g) − y(0, g).
#[inline]
pub fn controlled_effect(spec: &ScenarioSpec, atom: &JointState, g: usize) -> f64 {
    spec.outcome_value(1, g, &atom.covariates) - spec.outcome_value(0, g, &atom.covariates)
}

/// γ(a) = y(a, G) − y(a, 0).
#[inline]
pub fn spillover_effect(spec: &ScenarioSpec, atom: &JointState, a: u8) -> f64 {
    spec.outcome_value(a, atom.g as usize, &atom.covariates) - spec.outcome_value(a, 0, &atom.covariates)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimands {
    /// φ_s indexed by population; `None` when the population has no mass.
    pub phi: [Option<f64>; 2],
    pub theta: Option<f64>,
    /// E[τ(g) | S = s, V_g = 1], per population and level.
    pub mean_tau: [Vec<Option<f64>>; 2],
    /// p(G = g | S = s), per population and level.
    pub exposure_marginals: [Vec<f64>; 2],
    pub population_mass: [f64; 2],
}

/// φ₁, φ₂, θ and their ingredients. In undefined-potential-outcome mode φ_s
/// is assembled level by level as Σ_g E[1(G=g)τ(g) | S=s, V_g=1]·p(V_g=1 | S=s),
/// and θ uses E[τ(g) | S=1, V_g=1].
pub fn oracle_estimands(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<Estimands> {
    let levels = spec.levels();
    let mut out = Estimands {
        phi: [None, None],
        theta: None,
        mean_tau: [vec![None; levels], vec![None; levels]],
        exposure_marginals: [vec![0.0; levels], vec![0.0; levels]],
        population_mass: [0.0; 2],
    };
    let undefined = spec.is_undefined_po();
    for s in Population::BOTH {
        let si = s.index();
        let ps = measure.population_mass(s);
        out.population_mass[si] = ps;
        if !(ps > 0.0) {
            continue;
        }
        for g in 0..levels {
            out.exposure_marginals[si][g] = measure.mass(|a| a.s == s && a.g as usize == g) / ps;
            let defined = |a: &JointState| a.s == s && level_defined(a, g);
            if measure.mass(defined) > 0.0 {
                out.mean_tau[si][g] =
                    Some(measure.conditional_mean(defined, |a| controlled_effect(spec, a, g), "S = s, V_g = 1")?);
            }
        }
        let phi = if undefined {
            let mut acc = CompensatedSum::new();
            for g in 0..levels {
                let defined = |a: &JointState| a.s == s && level_defined(a, g);
                let pv = measure.mass(defined) / ps;
                if pv > 0.0 {
                    let m = measure.conditional_mean(
                        defined,
                        |a| if a.g as usize == g { controlled_effect(spec, a, g) } else { 0.0 },
                        "S = s, V_g = 1",
                    )?;
                    acc.add(m * pv);
                }
            }
            acc.value()
        } else {
            measure.conditional_mean(|a| a.s == s, |a| controlled_effect(spec, a, a.g as usize), "S = s")?
        };
        out.phi[si] = Some(phi);
    }
    if out.population_mass[0] > 0.0 {
        let mut acc = CompensatedSum::new();
        for g in 0..levels {
            let p = out.exposure_marginals[0][g];
            if p > 0.0 {
                let m = out.mean_tau[0][g]
                    .ok_or_else(|| Error::ZeroMass(format!("level {g} observed but never defined in S = 1")))?;
                acc.add(p * m);
            }
        }
        out.theta = Some(acc.value());
    } else {
        return Err(Error::ZeroMass("S = 1 has zero mass".into()));
    }
    Ok(out)
}

/// Per-atom individual effects.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectTables {
    pub levels: usize,
    /// τ(g) for atom `i` at `tau[i * levels + g]`; `None` where undefined.
    pub tau: Vec<Option<f64>>,
    pub gamma: Vec<[f64; 2]>,
    pub kappa: Vec<f64>,
    pub total: Vec<f64>,
}

impl EffectTables {
    pub fn tau(&self, atom: usize, g: usize) -> Option<f64> {
        self.tau[atom * self.levels + g]
    }
}

pub fn effect_tables(measure: &PopulationMeasure, spec: &ScenarioSpec) -> EffectTables {
    let levels = spec.levels();
    let n = measure.atoms().len();
    let mut t = EffectTables {
        levels,
        tau: Vec::with_capacity(n * levels),
        gamma: Vec::with_capacity(n),
        kappa: Vec::with_capacity(n),
        total: Vec::with_capacity(n),
    };
    for atom in measure.atoms() {
        for g in 0..levels {
            t.tau.push(level_defined(atom, g).then(|| controlled_effect(spec, atom, g)));
        }
        let g = atom.g as usize;
        t.gamma.push([spillover_effect(spec, atom, 0), spillover_effect(spec, atom, 1)]);
        t.kappa.push(controlled_effect(spec, atom, g));
        t.total.push(spec.outcome_value(1, g, &atom.covariates) - spec.outcome_value(0, 0, &atom.covariates));
    }
    t
}

/// One unit of observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRecord {
    pub s: Population,
    pub a: u8,
    pub y: f64,
    /// Pseudo-propensity stratum (the observed `x_ay` value or an encoding
    /// of several observed columns).
    pub stratum: u64,
    /// User-supplied p(A = 1 | S = 1, x_ay) overriding stratum frequencies.
    pub pscore: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IpwEstimate {
    pub psi_hat: f64,
    /// Standard deviation of the per-unit contributions over √n.
    pub std_error: f64,
    pub n: usize,
    pub n_reference: usize,
}

/// Order-independent sum: sorts before compensated accumulation.
fn stable_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    sum(xs)
}

/// Pseudo-propensity per stratum from reference-population frequencies.
pub fn stratum_frequencies(records: &[ObservedRecord]) -> Result<Vec<(u64, f64)>> {
    let mut keys: Vec<(u64, u8)> =
        records.iter().filter(|r| r.s == Population::Reference).map(|r| (r.stratum, r.a)).collect();
    keys.sort_unstable();
    let mut out: Vec<(u64, f64)> = Vec::new();
    let mut i = 0;
    while i < keys.len() {
        let stratum = keys[i].0;
        let mut n = 0usize;
        let mut treated = 0usize;
        while i < keys.len() && keys[i].0 == stratum {
            n += 1;
            treated += usize::from(keys[i].1 == 1);
            i += 1;
        }
        if treated == 0 || treated == n {
            return Err(Error::Estimation(format!(
                "stratum {stratum} has a single treatment arm ({n} units, {treated} treated)"
            )));
        }
        out.push((stratum, treated as f64 / n as f64));
    }
    Ok(out)
}

/// Plug-in ψ̂ with stratum-frequency pseudo-propensities and p̂(S = 1) the
/// sample fraction. Per-record `pscore` values take precedence.
pub fn naive_ipw_estimate(records: &[ObservedRecord]) -> Result<IpwEstimate> {
    let n = records.len();
    let n_reference = records.iter().filter(|r| r.s == Population::Reference).count();
    if n_reference == 0 {
        return Err(Error::Estimation("no units in the reference population".into()));
    }
    for (i, r) in records.iter().enumerate() {
        if r.a > 1 {
            return Err(Error::InputDomain(format!("record {i}: treatment {} is not binary", r.a)));
        }
        if !r.y.is_finite() {
            return Err(Error::InputDomain(format!("record {i}: non-finite outcome")));
        }
        if let Some(p) = r.pscore {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Positivity(format!("record {i}: pseudo-propensity {p} outside (0, 1)")));
            }
        }
    }
    let needs_frequencies = records.iter().any(|r| r.s == Population::Reference && r.pscore.is_none());
    let freq = if needs_frequencies {
        let unscored: Vec<ObservedRecord> = records.iter().filter(|r| r.pscore.is_none()).cloned().collect();
        stratum_frequencies(&unscored)?
    } else {
        Vec::new()
    };
    let p_s = n_reference as f64 / n as f64;
    let contributions: Vec<f64> = records
        .iter()
        .map(|r| {
            if r.s != Population::Reference {
                return 0.0;
            }
            let p1 = r.pscore.unwrap_or_else(|| {
                let k = freq.binary_search_by_key(&r.stratum, |e| e.0).expect("stratum tabulated");
                freq[k].1
            });
            if r.a == 1 {
                r.y / (p1 * p_s)
            } else {
                -r.y / ((1.0 - p1) * p_s)
            }
        })
        .collect();
    let psi_hat = stable_sum(contributions.clone()) / n as f64;
    let var = if n > 1 {
        stable_sum(contributions.iter().map(|c| (c - psi_hat) * (c - psi_hat)).collect()) / (n - 1) as f64
    } else {
        0.0
    };
    Ok(IpwEstimate { psi_hat, std_error: sqrt(var / n as f64), n, n_reference })
}

/// E[(1 − p̃_a) / p̃_a | S = 1] for both arms, the data summary behind the
/// σ(ε_a) cap.
pub fn pseudo_odds_summary(records: &[ObservedRecord]) -> Result<[f64; 2]> {
    let refs: Vec<&ObservedRecord> = records.iter().filter(|r| r.s == Population::Reference).collect();
    if refs.is_empty() {
        return Err(Error::Estimation("no units in the reference population".into()));
    }
    let unscored: Vec<ObservedRecord> = records.iter().filter(|r| r.pscore.is_none()).cloned().collect();
    let freq = if unscored.iter().any(|r| r.s == Population::Reference) {
        stratum_frequencies(&unscored)?
    } else {
        Vec::new()
    };
    let mut out = [0.0; 2];
    for (a, slot) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = refs
            .iter()
            .map(|r| {
                let p1 = r.pscore.unwrap_or_else(|| {
                    freq[freq.binary_search_by_key(&r.stratum, |e| e.0).expect("stratum tabulated")].1
                });
                let pa = if a == 1 { p1 } else { 1.0 - p1 };
                (1.0 - pa) / pa
            })
            .collect();
        *slot = stable_sum(vals) / refs.len() as f64;
    }
    Ok(out)
}

/// The same summary computed exactly from a measure.
pub fn pseudo_odds_exact(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<[f64; 2]> {
    let pseudo = pseudo_propensity(measure, spec, Population::Reference)?;
    let mut out = [0.0; 2];
    for (a, slot) in out.iter_mut().enumerate() {
        let mut err: Option<Error> = None;
        *slot = measure.conditional_mean(
            |s| s.s == Population::Reference,
            |s| match pseudo.arm(x_ay(s), a as u8) {
                Ok(p) => (1.0 - p) / p,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            "S = 1",
        )?;
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(out)
}

/// Human-readable name of an estimand slot.
pub fn phi_name(s: Population) -> String {
    format!("phi{}", s.label())
}
