//! Bias decompositions of the naive functional.
//!
//! Every breakdown carries the directly computed biases next to the sum of
//! its terms, and the residual between them. Covariances are the stored
//! quantities; standard deviations and correlations are derived from the
//! same weighted moments, with the correlation reported as 0 and flagged
//! when either standard deviation is below [`DEGENERATE_SD`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimate::{
    controlled_effect, level_defined, mew_scores, naive_functional_psi, oracle_estimands, spillover_effect, Estimands,
    PopulationMeasure, Provenance,
};
use crate::numeric::{pair_moments, sqrt, sum, CompensatedSum, PairMoments, DEGENERATE_SD};
use crate::scenario::{degree_tail, exposure_given_outcome_covariates, JointState, Population, Role, ScenarioSpec};

/// Tolerance for treating a marginal gap or covariance as zero when
/// classifying scenarios.
pub const STRUCTURE_TOLERANCE: f64 = 1e-12;

/// One covariance term factored as ρ·σ_left·σ_eps.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovTerm {
    pub cov: f64,
    pub sigma_left: f64,
    /// Standard deviation of the right-hand factor: the MEW score for the
    /// first-order terms, υ(g) or π(g) for the transport terms.
    pub sigma_eps: f64,
    pub rho: f64,
    pub degenerate: bool,
    /// Monte Carlo standard error of `cov` on empirical measures.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub mc_se: Option<f64>,
}

impl CovTerm {
    pub fn zero() -> Self {
        Self { cov: 0.0, sigma_left: 0.0, sigma_eps: 0.0, rho: 0.0, degenerate: true, mc_se: None }
    }

    fn from_moments(m: &PairMoments) -> Self {
        let (sl, se) = (m.sd_left(), m.sd_right());
        let corr = m.correlation();
        Self {
            cov: m.cov,
            sigma_left: sl,
            sigma_eps: se,
            rho: corr.unwrap_or(0.0),
            degenerate: corr.is_none(),
            mc_se: None,
        }
    }
}

fn moments_with_se(samples: &[(f64, f64, f64)], approximate: bool) -> Option<(PairMoments, CovTerm)> {
    let m = pair_moments(samples)?;
    let mut term = CovTerm::from_moments(&m);
    if approximate {
        let n = samples.len() as f64;
        let mut acc = CompensatedSum::new();
        for &(w, l, r) in samples {
            let d = (l - m.mean_left) * (r - m.mean_right) - m.cov;
            acc.add(w * d * d);
        }
        term.mc_se = Some(sqrt(acc.value() / m.mass / n));
    }
    Some((m, term))
}

/// The T₂ contribution of one arm within one neighbour-count stratum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DegreeTerm {
    pub arm: u8,
    pub n: usize,
    /// p(N = n | S = 1).
    pub weight: f64,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub term: CovTerm,
}

/// The transport contribution at one exposure level.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelTerm {
    pub g: usize,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub term: CovTerm,
    pub mean_tau: f64,
    /// p(G = g | S = 1) − p(G = g | S = 2).
    pub marginal_gap: f64,
}

impl LevelTerm {
    pub fn contribution(&self) -> f64 {
        self.term.cov + self.mean_tau * self.marginal_gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Totals {
    pub t1: f64,
    pub t2: f64,
    pub t3: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DirectBias {
    pub psi: f64,
    pub phi1: f64,
    pub phi2: Option<f64>,
    pub theta: f64,
    pub bias_phi1: f64,
    pub bias_phi2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Residuals {
    /// (ψ − φ₁) − (T₁ + T₂).
    pub phi1: f64,
    /// (ψ − φ₂) − (T₁ + T₂ + T₃).
    pub phi2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Flags {
    /// Expectations come from an empirical sample.
    pub approximate: bool,
    pub undefined_po: bool,
    pub transport: bool,
    /// Names of terms whose correlation is undefined.
    pub degenerate: Vec<String>,
    /// Levels with no unit for which the potential outcome is defined.
    pub skipped_levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasBreakdown {
    /// Indexed by arm.
    pub t1: [CovTerm; 2],
    pub t2: [CovTerm; 2],
    /// Neighbour-count strata of T₂ in undefined-potential-outcome mode.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Vec::is_empty"))]
    pub t2_by_degree: Vec<DegreeTerm>,
    pub t3: Vec<LevelTerm>,
    pub totals: Totals,
    pub direct: DirectBias,
    pub residuals: Residuals,
    pub flags: Flags,
    /// p(S = 1), p(S = 2): the mixture weights behind the transport terms.
    pub population_weights: [f64; 2],
}

#[inline]
fn arm_sign(a: usize) -> f64 {
    if a == 1 {
        1.0
    } else {
        -1.0
    }
}

struct Prepared<'a> {
    measure: &'a PopulationMeasure,
    spec: &'a ScenarioSpec,
    eps: Vec<Option<[f64; 2]>>,
    psi: f64,
    estimands: Estimands,
    approximate: bool,
}

impl<'a> Prepared<'a> {
    fn new(measure: &'a PopulationMeasure, spec: &'a ScenarioSpec) -> Result<Self> {
        if !(measure.population_mass(Population::Reference) > 0.0) {
            return Err(Error::ZeroMass("S = 1 has zero mass".into()));
        }
        Ok(Self {
            eps: mew_scores(measure, spec)?,
            psi: naive_functional_psi(measure, spec)?,
            estimands: oracle_estimands(measure, spec)?,
            approximate: measure.provenance() == Provenance::EmpiricalSample,
            measure,
            spec,
        })
    }

    fn reference(&self) -> impl Iterator<Item = (&JointState, [f64; 2])> + '_ {
        self.measure.atoms().iter().zip(&self.eps).filter_map(|(a, e)| e.map(|e| (a, e)))
    }

    fn term(&self, samples: &[(f64, f64, f64)], name: &str, flags: &mut Flags) -> Result<CovTerm> {
        let (_, t) = moments_with_se(samples, self.approximate)
            .ok_or_else(|| Error::ZeroMass(format!("{name}: conditioning event has zero mass")))?;
        if t.degenerate {
            flags.degenerate.push(String::from(name));
        }
        Ok(t)
    }

    /// T₁ per arm, and T₂ per arm either pooled over S = 1 or stratified by
    /// neighbour count.
    fn first_order(&self, stratify: bool, flags: &mut Flags) -> Result<([CovTerm; 2], [CovTerm; 2], Vec<DegreeTerm>)> {
        let spec = self.spec;
        let mut t1 = [CovTerm::zero(); 2];
        let mut t2 = [CovTerm::zero(); 2];
        let mut strata = Vec::new();
        for a in 0..2usize {
            let baseline: Vec<(f64, f64, f64)> = self
                .reference()
                .map(|(s, e)| (s.weight, spec.outcome_value(a as u8, 0, &s.covariates), e[a]))
                .collect();
            t1[a] = self.term(&baseline, &format!("t1[a={a}]"), flags)?;
            if !stratify {
                let spill: Vec<(f64, f64, f64)> =
                    self.reference().map(|(s, e)| (s.weight, spillover_effect(spec, s, a as u8), e[a])).collect();
                t2[a] = self.term(&spill, &format!("t2[a={a}]"), flags)?;
                continue;
            }
            let total_mass = self.estimands.population_mass[0];
            let mut cov = CompensatedSum::new();
            let mut var_l = CompensatedSum::new();
            let mut var_r = CompensatedSum::new();
            let mut se2 = CompensatedSum::new();
            for n in 0..spec.levels() {
                let spill: Vec<(f64, f64, f64)> = self
                    .reference()
                    .filter(|(s, _)| s.n.map(usize::from) == Some(n))
                    .map(|(s, e)| (s.weight, spillover_effect(spec, s, a as u8), e[a]))
                    .collect();
                let Some((m, mut term)) = moments_with_se(&spill, self.approximate) else {
                    continue;
                };
                let w = m.mass / total_mass;
                if term.degenerate {
                    flags.degenerate.push(format!("t2[a={a},n={n}]"));
                }
                cov.add(w * m.cov);
                var_l.add(w * m.var_left);
                var_r.add(w * m.var_right);
                if let Some(se) = term.mc_se {
                    se2.add(w * w * se * se);
                }
                term.mc_se = term.mc_se.map(|se| se * w);
                strata.push(DegreeTerm { arm: a as u8, n, weight: w, term });
            }
            // pooled within-stratum standard deviations keep |rho| <= 1
            let (sl, se) = (sqrt(var_l.value().max(0.0)), sqrt(var_r.value().max(0.0)));
            let degenerate = sl < DEGENERATE_SD || se < DEGENERATE_SD;
            t2[a] = CovTerm {
                cov: cov.value(),
                sigma_left: sl,
                sigma_eps: se,
                rho: if degenerate { 0.0 } else { (cov.value() / (sl * se)).clamp(-1.0, 1.0) },
                degenerate,
                mc_se: self.approximate.then(|| sqrt(se2.value())),
            };
            if degenerate {
                flags.degenerate.push(format!("t2[a={a}]"));
            }
        }
        Ok((t1, t2, strata))
    }
}

fn signed_total(terms: &[CovTerm; 2]) -> f64 {
    arm_sign(1) * terms[1].cov + arm_sign(0) * terms[0].cov
}

fn assemble(
    p: &Prepared<'_>,
    t1: [CovTerm; 2],
    t2: [CovTerm; 2],
    t2_by_degree: Vec<DegreeTerm>,
    t3: Option<Vec<LevelTerm>>,
    flags: Flags,
) -> BiasBreakdown {
    let phi1 = p.estimands.phi[0].expect("reference mass checked");
    let phi2 = p.estimands.phi[1];
    let totals = Totals {
        t1: signed_total(&t1),
        t2: signed_total(&t2),
        t3: t3.as_ref().map(|levels| sum(levels.iter().map(LevelTerm::contribution))),
    };
    let bias_phi1 = p.psi - phi1;
    let bias_phi2 = if totals.t3.is_some() { phi2.map(|v| p.psi - v) } else { None };
    let first = totals.t1 + totals.t2;
    BiasBreakdown {
        t1,
        t2,
        t2_by_degree,
        t3: t3.unwrap_or_default(),
        totals,
        direct: DirectBias {
            psi: p.psi,
            phi1,
            phi2: bias_phi2.and(phi2),
            theta: p.estimands.theta.expect("reference mass checked"),
            bias_phi1,
            bias_phi2,
        },
        residuals: Residuals {
            phi1: bias_phi1 - first,
            phi2: bias_phi2.zip(totals.t3).map(|(b, t3)| b - (first + t3)),
        },
        flags,
        population_weights: p.estimands.population_mass,
    }
}

/// Decomposition of ψ − φ₁ into the baseline-confounding term T₁ and the
/// spillover term T₂.
pub fn bias_phi1(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<BiasBreakdown> {
    let p = Prepared::new(measure, spec)?;
    let mut flags = Flags { approximate: p.approximate, undefined_po: spec.is_undefined_po(), ..Flags::default() };
    let (t1, t2, _) = p.first_order(false, &mut flags)?;
    Ok(assemble(&p, t1, t2, Vec::new(), None, flags))
}

/// T₁ written with the MEW score of the `(x_ay, u_ay)` propensity, the
/// classical form without interference. Returned per arm as signed
/// covariances.
pub fn confounding_only_t1(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<[f64; 2]> {
    let pseudo = crate::estimate::pseudo_propensity(measure, spec, Population::Reference)?;
    let (kx, ku) = (spec.support(Role::XAy), spec.support(Role::UAy));
    let mut mass = vec![CompensatedSum::new(); kx * ku];
    let mut treated = vec![CompensatedSum::new(); kx * ku];
    let key = |s: &JointState| s.covariates[Role::XAy.index()] as usize * ku + s.covariates[Role::UAy.index()] as usize;
    for s in measure.atoms().iter().filter(|s| s.s == Population::Reference) {
        mass[key(s)].add(s.weight);
        if s.a == 1 {
            treated[key(s)].add(s.weight);
        }
    }
    let mut out = [0.0; 2];
    for (a, slot) in out.iter_mut().enumerate() {
        let mut samples = Vec::new();
        for s in measure.atoms().iter().filter(|s| s.s == Population::Reference) {
            let k = key(s);
            let p1 = treated[k].value() / mass[k].value();
            let pa = if a == 1 { p1 } else { 1.0 - p1 };
            let eps = pa / pseudo.arm(s.covariates[Role::XAy.index()] as usize, a as u8)?;
            samples.push((s.weight, spec.outcome_value(a as u8, 0, &s.covariates), eps));
        }
        let m = pair_moments(&samples).ok_or_else(|| Error::ZeroMass("S = 1 has zero mass".into()))?;
        *slot = arm_sign(a) * m.cov;
    }
    Ok(out)
}

/// υ-type nuisance values per level: for each population the factor
/// p(G = g | S = s, V_g = 1, x_gy, u_gy)·p(V_g = 1 | S = s), laid out as
/// `[level][x_gy * k_ugy + u_gy]`.
struct ExposureNuisance {
    k_ugy: usize,
    by_population: [Vec<Vec<f64>>; 2],
}

impl ExposureNuisance {
    fn new(spec: &ScenarioSpec) -> Result<Self> {
        let (kx, ku) = (spec.support(Role::XGy), spec.support(Role::UGy));
        let levels = spec.levels();
        let mut by_population = [vec![vec![0.0; kx * ku]; levels], vec![vec![0.0; kx * ku]; levels]];
        for s in Population::BOTH {
            if !spec.is_undefined_po() {
                let t = exposure_given_outcome_covariates(spec, s, 0)?;
                for g in 0..levels {
                    for x in 0..kx {
                        for u in 0..ku {
                            by_population[s.index()][g][x * ku + u] = t.get(&[x, u, g]);
                        }
                    }
                }
                continue;
            }
            for g in 0..levels {
                let tail = degree_tail(spec, s, g);
                if !(tail > 0.0) {
                    continue;
                }
                let t = exposure_given_outcome_covariates(spec, s, g)?;
                for x in 0..kx {
                    for u in 0..ku {
                        by_population[s.index()][g][x * ku + u] = t.get(&[x, u, g]) * tail;
                    }
                }
            }
        }
        Ok(Self { k_ugy: ku, by_population })
    }

    #[inline]
    fn get(&self, s: Population, g: usize, atom: &JointState) -> f64 {
        let c = &atom.covariates;
        self.by_population[s.index()][g][c[Role::XGy.index()] as usize * self.k_ugy + c[Role::UGy.index()] as usize]
    }

    fn upsilon(&self, g: usize, atom: &JointState) -> f64 {
        self.get(Population::Reference, g, atom) - self.get(Population::Target, g, atom)
    }
}

/// Checks that the measure supports the transport terms: an exact tabular
/// enumeration with both populations and outcome-relevant covariates
/// distributed identically across them.
fn check_transport_structure(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<()> {
    if measure.provenance() != Provenance::Enumeration {
        return Err(Error::Structural("transport terms require an exact enumeration of a tabular scenario".into()));
    }
    let roles = [Role::XAy, Role::UAy, Role::XGy, Role::UGy];
    let sizes: Vec<usize> = roles.iter().map(|&r| spec.support(r)).collect();
    let cells: usize = sizes.iter().product();
    let mut mass = [vec![CompensatedSum::new(); cells], vec![CompensatedSum::new(); cells]];
    let mut totals = [CompensatedSum::new(); 2];
    for atom in measure.atoms() {
        let mut k = 0;
        for (&r, &n) in roles.iter().zip(&sizes) {
            k = k * n + atom.covariates[r.index()] as usize;
        }
        mass[atom.s.index()][k].add(atom.weight);
        totals[atom.s.index()].add(atom.weight);
    }
    let (m1, m2) = (totals[0].value(), totals[1].value());
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(Error::ZeroMass("transport terms need mass in both populations".into()));
    }
    for k in 0..cells {
        let d = mass[0][k].value() / m1 - mass[1][k].value() / m2;
        if d.abs() > 1e-12 {
            return Err(Error::Structural(format!(
                "outcome-relevant covariates differ across populations (cell {k}, difference {d:e})"
            )));
        }
    }
    Ok(())
}

/// Transport terms per level over the mixture measure; `nuisance` selects
/// υ(g) or π(g) as the right-hand factor.
fn level_terms(
    p: &Prepared<'_>,
    nuisance: &ExposureNuisance,
    theta: bool,
    flags: &mut Flags,
) -> Result<Vec<LevelTerm>> {
    let spec = p.spec;
    let mut out = Vec::with_capacity(spec.levels());
    for g in 0..spec.levels() {
        let samples: Vec<(f64, f64, f64)> = p
            .measure
            .atoms()
            .iter()
            .filter(|a| level_defined(a, g))
            .map(|a| {
                let right = if theta { nuisance.get(Population::Reference, g, a) } else { nuisance.upsilon(g, a) };
                (a.weight, controlled_effect(spec, a, g), right)
            })
            .collect();
        let Some((m, term)) = moments_with_se(&samples, p.approximate) else {
            flags.skipped_levels.push(g);
            continue;
        };
        if term.degenerate {
            flags.degenerate.push(format!("{}[g={g}]", if theta { "t3_theta" } else { "t3" }));
        }
        let gap = if theta { 0.0 } else { p.estimands.exposure_marginals[0][g] - p.estimands.exposure_marginals[1][g] };
        out.push(LevelTerm { g, term, mean_tau: m.mean_left, marginal_gap: gap });
    }
    Ok(out)
}

/// Decomposition of ψ − φ₂ into T₁ + T₂ + T₃, with the transport term
/// computed over the mixture of both populations.
pub fn bias_phi2(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<BiasBreakdown> {
    check_transport_structure(measure, spec)?;
    let p = Prepared::new(measure, spec)?;
    let mut flags =
        Flags { approximate: p.approximate, undefined_po: spec.is_undefined_po(), transport: true, ..Flags::default() };
    let (t1, t2, _) = p.first_order(false, &mut flags)?;
    let nuisance = ExposureNuisance::new(spec)?;
    let t3 = level_terms(&p, &nuisance, false, &mut flags)?;
    Ok(assemble(&p, t1, t2, Vec::new(), Some(t3), flags))
}

/// Decomposition for undefined potential outcomes: T₂ stratified by
/// neighbour count and T₃ conditional on V_g = 1. Transport terms are added
/// when the measure is an exact enumeration covering both populations.
pub fn bias_undefined(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<BiasBreakdown> {
    if !spec.is_undefined_po() {
        return Err(Error::Mode("scenario has no degree table".into()));
    }
    if measure.atoms().iter().any(|a| a.n.is_none()) {
        return Err(Error::Mode("measure atoms carry no neighbour count".into()));
    }
    let transport =
        measure.provenance() == Provenance::Enumeration && measure.population_mass(Population::Target) > 0.0;
    if transport {
        check_transport_structure(measure, spec)?;
    }
    let p = Prepared::new(measure, spec)?;
    let mut flags = Flags { approximate: p.approximate, undefined_po: true, transport, ..Flags::default() };
    let (t1, t2, strata) = p.first_order(true, &mut flags)?;
    let t3 = if transport {
        let nuisance = ExposureNuisance::new(spec)?;
        Some(level_terms(&p, &nuisance, false, &mut flags)?)
    } else {
        None
    };
    Ok(assemble(&p, t1, t2, strata, t3, flags))
}

/// Transport term for the randomized-exposure estimand θ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThetaBreakdown {
    /// Per level; `marginal_gap` is 0 and `sigma_eps` holds σ̃(π(g)).
    pub levels: Vec<LevelTerm>,
    pub total: f64,
    pub psi: f64,
    pub theta: f64,
    /// (ψ − θ) − (T₁ + T₂ + T₃^θ).
    pub residual: f64,
}

pub fn t3_theta(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<ThetaBreakdown> {
    if measure.provenance() != Provenance::Enumeration {
        return Err(Error::Structural(
            "the θ transport term requires an exact enumeration of a tabular scenario".into(),
        ));
    }
    let p = Prepared::new(measure, spec)?;
    let mut flags = Flags::default();
    let stratify = spec.is_undefined_po();
    let (t1, t2, _) = p.first_order(stratify, &mut flags)?;
    let nuisance = ExposureNuisance::new(spec)?;
    let levels = level_terms(&p, &nuisance, true, &mut flags)?;
    let total = sum(levels.iter().map(|l| l.term.cov));
    let theta = p.estimands.theta.expect("reference mass checked");
    let first = signed_total(&t1) + signed_total(&t2);
    Ok(ThetaBreakdown { total, psi: p.psi, theta, residual: (p.psi - theta) - (first + total), levels })
}

/// Which simplification of the transport term a scenario satisfies.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorollaryReport {
    pub equal_marginals: bool,
    pub randomized_exposure: bool,
    pub max_abs_gap: f64,
    pub max_abs_cov: f64,
    pub t3: f64,
    /// |T₃ − Σ_g cov| when marginals are equal.
    pub residual_equal_marginals: Option<f64>,
    /// |T₃ − Σ_g E[τ(g)]·gap| when exposure is randomized.
    pub residual_randomized: Option<f64>,
    pub summary: String,
}

impl CorollaryReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_equal_marginals.unwrap_or(0.0).max(self.residual_randomized.unwrap_or(0.0))
    }
}

pub fn check_corollary(measure: &PopulationMeasure, spec: &ScenarioSpec) -> Result<CorollaryReport> {
    let breakdown = if spec.is_undefined_po() { bias_undefined(measure, spec)? } else { bias_phi2(measure, spec)? };
    let t3 = breakdown.totals.t3.ok_or_else(|| Error::Structural("no transport term".into()))?;
    let max_abs_gap = breakdown.t3.iter().map(|l| l.marginal_gap.abs()).fold(0.0, f64::max);
    let max_abs_cov = breakdown.t3.iter().map(|l| l.term.cov.abs()).fold(0.0, f64::max);
    let equal_marginals = max_abs_gap <= STRUCTURE_TOLERANCE;

    // randomized: the υ factors do not vary with the outcome-relevant
    // exposure covariates in either population
    let nuisance = ExposureNuisance::new(spec)?;
    let randomized_exposure = nuisance.by_population.iter().all(|levels| {
        levels.iter().all(|cells| {
            let (lo, hi) = cells.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            hi - lo <= STRUCTURE_TOLERANCE
        })
    });
    let cov_sum = sum(breakdown.t3.iter().map(|l| l.term.cov));
    let gap_sum = sum(breakdown.t3.iter().map(|l| l.mean_tau * l.marginal_gap));
    let summary = match (equal_marginals, randomized_exposure) {
        (true, true) => "equal marginals and randomized exposure: both branches apply",
        (true, false) => "equal marginals: T3 reduces to the covariance terms",
        (false, true) => "randomized exposure: T3 reduces to the marginal-gap terms",
        (false, false) => "no branch applies",
    };
    Ok(CorollaryReport {
        equal_marginals,
        randomized_exposure,
        max_abs_gap,
        max_abs_cov,
        t3,
        residual_equal_marginals: equal_marginals.then(|| (t3 - cov_sum).abs()),
        residual_randomized: randomized_exposure.then(|| (t3 - gap_sum).abs()),
        summary: String::from(summary),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        random_scenario, DegreeModel, ExposureModel, OutcomeModel, ScenarioOptions, DEFAULT_MAX_STATES,
    };

    fn measure(spec: &ScenarioSpec) -> PopulationMeasure {
        PopulationMeasure::enumerate(spec, DEFAULT_MAX_STATES).unwrap()
    }

    #[test]
    fn first_identity_on_random_scenarios() {
        for seed in 0..30 {
            let spec = random_scenario(seed, &ScenarioOptions::default()).unwrap();
            let b = bias_phi1(&measure(&spec), &spec).unwrap();
            assert!(b.residuals.phi1.abs() <= 1e-9, "seed {seed}: {:?}", b.residuals);
            for t in b.t1.iter().chain(&b.t2) {
                if !t.degenerate {
                    assert!((t.cov - t.rho * t.sigma_left * t.sigma_eps).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn transport_identity_on_random_scenarios() {
        for seed in 0..30 {
            let spec = random_scenario(seed, &ScenarioOptions::default()).unwrap();
            let m = measure(&spec);
            let b = bias_phi2(&m, &spec).unwrap();
            assert!(b.residuals.phi2.unwrap().abs() <= 1e-9, "seed {seed}: {:?}", b.residuals);
            let t = t3_theta(&m, &spec).unwrap();
            assert!(t.residual.abs() <= 1e-9);
        }
    }

    #[test]
    fn no_confounding_zeroes_first_order_terms() {
        let opts = ScenarioOptions { confounding: false, ..Default::default() };
        for seed in 0..10 {
            let spec = random_scenario(seed, &opts).unwrap();
            let b = bias_phi1(&measure(&spec), &spec).unwrap();
            assert!(b.totals.t1.abs() < 1e-12 && b.totals.t2.abs() < 1e-12);
            assert!(b.direct.bias_phi1.abs() < 1e-10);
        }
    }

    #[test]
    fn no_interference_matches_confounding_only_form() {
        let opts = ScenarioOptions { fixed_g_max: Some(0), ..Default::default() };
        for seed in 0..20 {
            let spec = random_scenario(seed, &opts).unwrap();
            let m = measure(&spec);
            let b = bias_phi1(&m, &spec).unwrap();
            assert_eq!(b.totals.t2, 0.0);
            let shen = confounding_only_t1(&m, &spec).unwrap();
            assert!((shen[0] + shen[1] - b.totals.t1).abs() <= 1e-12);
            assert!((b.direct.bias_phi1 - (shen[0] + shen[1])).abs() <= 1e-9);
        }
    }

    #[test]
    fn transport_term_vanishes_for_identical_populations() {
        let opts = ScenarioOptions { identical_populations: true, ..Default::default() };
        for seed in 0..20 {
            let spec = random_scenario(seed, &opts).unwrap();
            let b = bias_phi2(&measure(&spec), &spec).unwrap();
            assert!(b.totals.t3.unwrap().abs() <= 1e-12);
            assert!((b.direct.phi1 - b.direct.phi2.unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn additive_and_separable_outcomes() {
        for seed in 0..20 {
            let add = ScenarioOptions { outcome_model: OutcomeModel::Additive, ..Default::default() };
            let spec = random_scenario(seed, &add).unwrap();
            let b = bias_phi2(&measure(&spec), &spec).unwrap();
            assert!(b.totals.t3.unwrap().abs() <= 1e-9);
            let sep = ScenarioOptions { outcome_model: OutcomeModel::SeparableInteraction, ..Default::default() };
            let spec = random_scenario(seed, &sep).unwrap();
            assert!(t3_theta(&measure(&spec), &spec).unwrap().total.abs() <= 1e-9);
        }
    }

    #[test]
    fn corollary_branches() {
        let eq = ScenarioOptions { exposure_model: ExposureModel::EqualMarginals, ..Default::default() };
        let rnd = ScenarioOptions { exposure_model: ExposureModel::Randomized, ..Default::default() };
        for seed in 0..20 {
            let spec = random_scenario(seed, &eq).unwrap();
            let r = check_corollary(&measure(&spec), &spec).unwrap();
            assert!(r.equal_marginals, "seed {seed}: {r:?}");
            assert!(r.residual_equal_marginals.unwrap() <= 1e-12);
            let spec = random_scenario(seed, &rnd).unwrap();
            let r = check_corollary(&measure(&spec), &spec).unwrap();
            assert!(r.randomized_exposure);
            assert!(r.max_abs_cov <= 1e-12);
            assert!(r.residual_randomized.unwrap() <= 1e-12);
        }
        let spec = random_scenario(2, &ScenarioOptions { fixed_g_max: Some(2), ..Default::default() }).unwrap();
        let r = check_corollary(&measure(&spec), &spec).unwrap();
        assert_eq!(r.summary, "no branch applies");
    }

    #[test]
    fn undefined_identities() {
        let opts = ScenarioOptions { degree_model: Some(DegreeModel::Ragged), ..Default::default() };
        for seed in 0..30 {
            let spec = random_scenario(seed, &opts).unwrap();
            let m = measure(&spec);
            let b = bias_undefined(&m, &spec).unwrap();
            assert!(b.residuals.phi1.abs() <= 1e-9, "seed {seed}: {:?}", b.residuals);
            assert!(b.residuals.phi2.unwrap().abs() <= 1e-9, "seed {seed}: {:?}", b.residuals);
            assert!(t3_theta(&m, &spec).unwrap().residual.abs() <= 1e-9);
        }
    }

    #[test]
    fn undefined_degenerate_degrees() {
        let full = ScenarioOptions { degree_model: Some(DegreeModel::Full), ..Default::default() };
        for seed in 0..10 {
            let spec = random_scenario(seed, &full).unwrap();
            let flat = spec.collapse_degree().unwrap();
            let u = bias_undefined(&measure(&spec), &spec).unwrap();
            let f = bias_phi2(&measure(&flat), &flat).unwrap();
            assert!((u.totals.t1 - f.totals.t1).abs() <= 1e-12);
            assert!((u.totals.t2 - f.totals.t2).abs() <= 1e-12);
            assert!((u.totals.t3.unwrap() - f.totals.t3.unwrap()).abs() <= 1e-12);
            assert!((u.direct.bias_phi1 - f.direct.bias_phi1).abs() <= 1e-12);
        }
        let isolated = ScenarioOptions { degree_model: Some(DegreeModel::Isolated), ..Default::default() };
        for seed in 0..10 {
            let spec = random_scenario(seed, &isolated).unwrap();
            let b = bias_undefined(&measure(&spec), &spec).unwrap();
            assert_eq!(b.totals.t2, 0.0);
            assert!((b.direct.bias_phi1 - b.totals.t1).abs() <= 1e-9);
        }
    }

    #[test]
    fn undefined_requires_degree_table() {
        let spec = random_scenario(1, &ScenarioOptions::default()).unwrap();
        assert!(matches!(bias_undefined(&measure(&spec), &spec), Err(Error::Mode(_))));
    }

    #[test]
    fn shift_and_scale_of_outcomes() {
        for seed in 0..10 {
            let spec = random_scenario(seed, &ScenarioOptions::default()).unwrap();
            let base = bias_phi2(&measure(&spec), &spec).unwrap();
            let mut shifted = spec.clone();
            shifted.outcome.values_mut().iter_mut().for_each(|v| *v += 3.5);
            let s = bias_phi2(&measure(&shifted), &shifted).unwrap();
            assert!((s.totals.t1 - base.totals.t1).abs() < 1e-9);
            assert!((s.totals.t2 - base.totals.t2).abs() < 1e-9);
            assert!((s.totals.t3.unwrap() - base.totals.t3.unwrap()).abs() < 1e-9);
            let mut scaled = spec.clone();
            scaled.outcome.values_mut().iter_mut().for_each(|v| *v *= -2.0);
            let s = bias_phi2(&measure(&scaled), &scaled).unwrap();
            assert!((s.totals.t1 + 2.0 * base.totals.t1).abs() < 1e-9);
            assert!((s.totals.t3.unwrap() + 2.0 * base.totals.t3.unwrap()).abs() < 1e-9);
            assert!((s.direct.bias_phi2.unwrap() + 2.0 * base.direct.bias_phi2.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn empirical_measure_is_flagged() {
        use rand::SeedableRng;
        let spec = random_scenario(4, &ScenarioOptions { max_support: 2, ..Default::default() }).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let units: Vec<JointState> = (0..20_000).map(|_| crate::scenario::sample_state(&spec, &mut rng)).collect();
        let m = PopulationMeasure::empirical(units).unwrap();
        let b = bias_phi1(&m, &spec).unwrap();
        assert!(b.flags.approximate);
        assert!(b.t1.iter().all(|t| t.mc_se.is_some()));
        assert!(b.residuals.phi1.is_finite());
        assert!(matches!(bias_phi2(&m, &spec), Err(Error::Structural(_))));
    }
}
