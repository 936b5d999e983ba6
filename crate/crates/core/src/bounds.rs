//! Worst-case bias bounds from sensitivity parameters.
//!
//! Each bias term is a sum of covariances ρ·σ·σ. Users bound the standard
//! deviations as fractions (η) of their Popoviciu maxima, the correlations
//! by a common magnitude ρ, and the MEW-score spread either through the
//! observed pseudo-propensities (η_ε) or through a ratio bound α on the
//! score itself.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::decompose::BiasBreakdown;
use crate::error::{Error, Result};
use crate::numeric::sqrt;

/// Known sign of a correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// Correlation signs fixed from domain knowledge; `None` is adversarial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CorrelationSigns {
    /// Sign of ρ(Y^(a,0), ε_a) per arm.
    pub baseline: [Option<Sign>; 2],
    /// Sign of ρ(γ(a), ε_a) per arm.
    pub spillover: [Option<Sign>; 2],
    /// Sign of ρ̃(τ(g), υ(g)), shared across levels.
    pub transport: Option<Sign>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SensitivityParams {
    pub eta_baseline: f64,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub eta_eps: Option<f64>,
    pub rho_baseline: f64,
    pub eta_gamma: f64,
    pub rho_spillover: f64,
    pub eta_tau: f64,
    pub beta: f64,
    pub rho_transport: f64,
    pub y_min_ref: f64,
    pub y_max_ref: f64,
    /// Shared range of γ(a) and τ(g).
    pub x_min_ref: f64,
    pub x_max_ref: f64,
    /// Separate range for τ(g), overriding the shared one.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub tau_min_ref: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub tau_max_ref: Option<f64>,
    /// MEW-score ratio bounds per arm: ε_a ∈ [1/α_a, α_a].
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub alpha0: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub alpha1: Option<f64>,
    /// Known marginal gaps p(G=g|S=1) − p(G=g|S=2), one per level.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub zeta: Option<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub eta_upsilon: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub signs: CorrelationSigns,
}

/// Names accepted by [`SensitivityParams::set`] and contour axes.
pub const PARAMETER_NAMES: [&str; 15] = [
    "eta_baseline",
    "eta_eps",
    "rho_baseline",
    "eta_gamma",
    "rho_spillover",
    "eta_tau",
    "beta",
    "rho_transport",
    "eta_upsilon",
    "alpha0",
    "alpha1",
    "y_min_ref",
    "y_max_ref",
    "x_min_ref",
    "x_max_ref",
];

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InputDomain(format!("{name} = {v} is outside [0, 1]")))
    }
}

fn ordered(lo_name: &str, lo: f64, hi_name: &str, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(Error::InputDomain(format!("{lo_name} = {lo} must not exceed {hi_name} = {hi}")))
    }
}

impl SensitivityParams {
    /// Every parameter zero and both ranges `[0, 1]`.
    pub fn zero() -> Self {
        Self {
            eta_baseline: 0.0,
            eta_eps: Some(0.0),
            rho_baseline: 0.0,
            eta_gamma: 0.0,
            rho_spillover: 0.0,
            eta_tau: 0.0,
            beta: 0.0,
            rho_transport: 0.0,
            y_min_ref: 0.0,
            y_max_ref: 1.0,
            x_min_ref: 0.0,
            x_max_ref: 1.0,
            tau_min_ref: None,
            tau_max_ref: None,
            alpha0: None,
            alpha1: None,
            zeta: None,
            eta_upsilon: None,
            signs: CorrelationSigns::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_baseline", self.eta_baseline),
            ("rho_baseline", self.rho_baseline),
            ("eta_gamma", self.eta_gamma),
            ("rho_spillover", self.rho_spillover),
            ("eta_tau", self.eta_tau),
            ("beta", self.beta),
            ("rho_transport", self.rho_transport),
        ] {
            unit_interval(name, v)?;
        }
        if let Some(v) = self.eta_eps {
            unit_interval("eta_eps", v)?;
        }
        if let Some(v) = self.eta_upsilon {
            unit_interval("eta_upsilon", v)?;
        }
        ordered("y_min_ref", self.y_min_ref, "y_max_ref", self.y_max_ref)?;
        ordered("x_min_ref", self.x_min_ref, "x_max_ref", self.x_max_ref)?;
        let (tmin, tmax) = self.tau_range();
        ordered("tau_min_ref", tmin, "tau_max_ref", tmax)?;
        match (self.alpha0, self.alpha1) {
            (None, None) => {}
            (Some(a0), Some(a1)) => {
                if self.eta_eps.is_some() {
                    return Err(Error::InputDomain("set either eta_eps or alpha0/alpha1, not both".into()));
                }
                for (name, a) in [("alpha0", a0), ("alpha1", a1)] {
                    if !(a >= 1.0) || !a.is_finite() {
                        return Err(Error::InputDomain(format!("{name} = {a} must be at least 1")));
                    }
                }
            }
            _ => return Err(Error::InputDomain("alpha0 and alpha1 must be given together".into())),
        }
        if let Some(zeta) = &self.zeta {
            if self.eta_upsilon.is_none() {
                return Err(Error::InputDomain("zeta requires eta_upsilon".into()));
            }
            for (g, &z) in zeta.iter().enumerate() {
                if !(-1.0..=1.0).contains(&z) {
                    return Err(Error::InputDomain(format!("zeta[{g}] = {z} is outside [-1, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Range of τ(g): the override when given, else the shared range.
    pub fn tau_range(&self) -> (f64, f64) {
        (self.tau_min_ref.unwrap_or(self.x_min_ref), self.tau_max_ref.unwrap_or(self.x_max_ref))
    }

    /// Sets a scalar parameter by name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "eta_baseline" => self.eta_baseline = value,
            "eta_eps" => self.eta_eps = Some(value),
            "rho_baseline" => self.rho_baseline = value,
            "eta_gamma" => self.eta_gamma = value,
            "rho_spillover" => self.rho_spillover = value,
            "eta_tau" => self.eta_tau = value,
            "beta" => self.beta = value,
            "rho_transport" => self.rho_transport = value,
            "eta_upsilon" => self.eta_upsilon = Some(value),
            "alpha0" => self.alpha0 = Some(value),
            "alpha1" => self.alpha1 = Some(value),
            "y_min_ref" => self.y_min_ref = value,
            "y_max_ref" => self.y_max_ref = value,
            "x_min_ref" => self.x_min_ref = value,
            "x_max_ref" => self.x_max_ref = value,
            other => {
                return Err(Error::InputDomain(format!(
                    "unknown parameter `{other}`; expected one of {}",
                    PARAMETER_NAMES.join(", ")
                )))
            }
        }
        Ok(())
    }
}

/// Observed-data inputs to the bounds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DataSummary {
    /// E[(1 − p̃_a) / p̃_a | S = 1] per arm.
    pub eps_ratio: [f64; 2],
    pub psi_hat: f64,
    pub g_max: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub provenance: String,
}

impl DataSummary {
    pub fn validate(&self) -> Result<()> {
        for (a, &v) in self.eps_ratio.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InputDomain(format!("eps_ratio[{a}] = {v} must be finite and non-negative")));
            }
        }
        if !self.psi_hat.is_finite() {
            return Err(Error::InputDomain("psi_hat must be finite".into()));
        }
        Ok(())
    }
}

/// η_ε·√E[(1 − p̃_a) / p̃_a | S = 1], an upper bound on σ(ε_a | S = 1).
pub fn sigma_eps_upper(summary: &DataSummary, eta_eps: f64, arm: u8) -> Result<f64> {
    unit_interval("eta_eps", eta_eps)?;
    let v =
        *summary.eps_ratio.get(arm as usize).ok_or_else(|| Error::InputDomain(format!("arm {arm} is not 0 or 1")))?;
    if !(v >= 0.0) {
        return Err(Error::InputDomain(format!("eps_ratio[{arm}] = {v} is negative")));
    }
    Ok(eta_eps * sqrt(v))
}

/// √(α − 2 + 1/α): the Bhatia–Davis bound on σ(ε) for ε ∈ [1/α, α] with
/// mean 1.
pub fn sigma_eps_from_alpha(alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::InputDomain(format!("alpha = {alpha} must be at least 1")));
    }
    Ok(sqrt((alpha - 2.0 + 1.0 / alpha).max(0.0)))
}

fn sigma_eps_bar(params: &SensitivityParams, summary: Option<&DataSummary>, arm: u8) -> Result<f64> {
    if let (Some(a0), Some(a1)) = (params.alpha0, params.alpha1) {
        return sigma_eps_from_alpha(if arm == 1 { a1 } else { a0 });
    }
    let eta = params.eta_eps.ok_or_else(|| Error::InputDomain("either eta_eps or alpha0/alpha1 is required".into()))?;
    let summary = summary.ok_or_else(|| Error::InputDomain("eta_eps needs a data summary".into()))?;
    sigma_eps_upper(summary, eta, arm)
}

fn arm_caps(
    params: &SensitivityParams,
    summary: Option<&DataSummary>,
    rho: f64,
    eta: f64,
    range: f64,
) -> Result<[f64; 2]> {
    Ok([
        rho * (eta / 2.0) * range * sigma_eps_bar(params, summary, 0)?,
        rho * (eta / 2.0) * range * sigma_eps_bar(params, summary, 1)?,
    ])
}

fn baseline_caps(params: &SensitivityParams, summary: Option<&DataSummary>) -> Result<[f64; 2]> {
    arm_caps(params, summary, params.rho_baseline, params.eta_baseline, params.y_max_ref - params.y_min_ref)
}

fn spillover_caps(params: &SensitivityParams, summary: Option<&DataSummary>) -> Result<[f64; 2]> {
    arm_caps(params, summary, params.rho_spillover, params.eta_gamma, params.x_max_ref - params.x_min_ref)
}

pub fn t1_bound(params: &SensitivityParams, summary: Option<&DataSummary>) -> Result<f64> {
    params.validate()?;
    let c = baseline_caps(params, summary)?;
    Ok(c[0] + c[1])
}

pub fn t2_bound(params: &SensitivityParams, summary: Option<&DataSummary>) -> Result<f64> {
    params.validate()?;
    let c = spillover_caps(params, summary)?;
    Ok(c[0] + c[1])
}

/// Per-level caps `(covariance cap, marginal-gap cap, gap factor)`; the gap
/// factor is ζ(g) in ζ-mode and `None` in β-mode.
fn level_caps(params: &SensitivityParams, g_max: usize) -> Result<Vec<(f64, f64, Option<f64>)>> {
    let (tmin, tmax) = params.tau_range();
    let spread = params.rho_transport * (params.eta_tau / 2.0) * (tmax - tmin);
    let extreme = tmin.abs().max(tmax.abs());
    match &params.zeta {
        None => Ok((0..=g_max).map(|_| (spread * params.beta, extreme * params.beta, None)).collect()),
        Some(zeta) => {
            if zeta.len() != g_max + 1 {
                return Err(Error::InputDomain(format!(
                    "zeta has {} entries but g_max + 1 = {}",
                    zeta.len(),
                    g_max + 1
                )));
            }
            let eta_u = params.eta_upsilon.unwrap_or(0.0);
            Ok(zeta
                .iter()
                .map(|&z| (spread * eta_u * sqrt((1.0 - z * z).max(0.0)), extreme * z.abs(), Some(z)))
                .collect())
        }
    }
}

pub fn t3_bound(params: &SensitivityParams, g_max: usize) -> Result<f64> {
    params.validate()?;
    Ok(level_caps(params, g_max)?.iter().map(|(c, gap, _)| c + gap).sum())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasBound {
    pub t1_bound: f64,
    pub t2_bound: f64,
    pub t3_bound: f64,
    pub total: f64,
    /// Range of the bias ψ − φ honouring fixed correlation signs.
    pub interval: [f64; 2],
    /// Range of the estimand: ψ̂ minus the bias interval.
    pub adjusted_interval: [f64; 2],
    pub psi_hat: f64,
    /// Whether the bound can explain away the naive estimate.
    pub kill: bool,
    pub transport: bool,
}

/// Interval of a term `direction·ρ·cap` when the correlation sign may be
/// fixed.
fn signed_interval(cap: f64, direction: f64, sign: Option<Sign>) -> (f64, f64) {
    match sign {
        None => (-cap, cap),
        Some(s) => {
            if direction * s.value() > 0.0 {
                (0.0, cap)
            } else {
                (-cap, 0.0)
            }
        }
    }
}

pub fn worst_case_bias(params: &SensitivityParams, summary: &DataSummary, transport: bool) -> Result<BiasBound> {
    params.validate()?;
    summary.validate()?;
    let base = baseline_caps(params, Some(summary))?;
    let spill = spillover_caps(params, Some(summary))?;
    let (mut lower, mut upper) = (0.0, 0.0);
    for a in 0..2 {
        let direction = if a == 1 { 1.0 } else { -1.0 };
        for (cap, sign) in [(base[a], params.signs.baseline[a]), (spill[a], params.signs.spillover[a])] {
            let (lo, hi) = signed_interval(cap, direction, sign);
            lower += lo;
            upper += hi;
        }
    }
    let mut t3 = 0.0;
    if transport {
        let (tmin, tmax) = params.tau_range();
        for (cov_cap, gap_cap, zeta) in level_caps(params, summary.g_max)? {
            t3 += cov_cap + gap_cap;
            let (lo, hi) = signed_interval(cov_cap, 1.0, params.signs.transport);
            lower += lo;
            upper += hi;
            match zeta {
                // E[τ(g)] ∈ [tmin, tmax] times a known gap
                Some(z) => {
                    lower += (z * tmin).min(z * tmax);
                    upper += (z * tmin).max(z * tmax);
                }
                None => {
                    lower -= gap_cap;
                    upper += gap_cap;
                }
            }
        }
    }
    let t1 = base[0] + base[1];
    let t2 = spill[0] + spill[1];
    let total = t1 + t2 + t3;
    Ok(BiasBound {
        t1_bound: t1,
        t2_bound: t2,
        t3_bound: t3,
        total,
        interval: [lower, upper],
        adjusted_interval: [summary.psi_hat - upper, summary.psi_hat - lower],
        psi_hat: summary.psi_hat,
        kill: total >= summary.psi_hat.abs(),
        transport,
    })
}

/// One contour axis: `steps` evenly spaced values of a named parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl GridAxis {
    pub fn new(name: &str, lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if !PARAMETER_NAMES.contains(&name) {
            return Err(Error::InputDomain(format!("unknown contour axis `{name}`")));
        }
        if steps < 2 {
            return Err(Error::InputDomain(format!("axis `{name}` needs at least 2 steps")));
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InputDomain(format!("axis `{name}` bounds must be finite")));
        }
        Ok(Self { name: name.to_string(), lo, hi, steps })
    }

    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.steps {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / (self.steps - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContourRow {
    pub param1: f64,
    pub param2: f64,
    pub bound: f64,
    pub kill: bool,
}

/// Total bound over a two-parameter grid, rows ordered by the first axis
/// then the second.
pub fn contour_grid(
    params: &SensitivityParams,
    summary: &DataSummary,
    axis1: &GridAxis,
    axis2: &GridAxis,
    transport: bool,
) -> Result<Vec<ContourRow>> {
    let mut rows = Vec::with_capacity(axis1.steps * axis2.steps);
    for i in 0..axis1.steps {
        for j in 0..axis2.steps {
            let mut p = params.clone();
            let (v1, v2) = (axis1.value(i), axis2.value(j));
            p.set(&axis1.name, v1)?;
            p.set(&axis2.name, v2)?;
            let b = worst_case_bias(&p, summary, transport)?;
            rows.push(ContourRow { param1: v1, param2: v2, bound: b.total, kill: b.kill });
        }
    }
    Ok(rows)
}

fn round_up_unit(v: f64) -> f64 {
    (libm::ceil(v * 1e6) / 1e6).clamp(0.0, 1.0)
}

fn ratio(sd: f64, range: f64) -> f64 {
    if range > 0.0 {
        2.0 * sd / range
    } else {
        0.0
    }
}

/// Parameters instantiated at a breakdown's true standard deviations and
/// absolute correlations, rounded up at the sixth decimal. Ranges are
/// `(y_min, y_max)` for baseline outcomes and `(x_min, x_max)` for the
/// effects. The imbalance parameter is the larger of the largest marginal
/// gap and the largest σ̃(υ(g)), since the latter is not capped by the gaps.
pub fn oracle_params(
    breakdown: &BiasBreakdown,
    summary: &DataSummary,
    y_range: (f64, f64),
    x_range: (f64, f64),
) -> SensitivityParams {
    let yr = y_range.1 - y_range.0;
    let xr = x_range.1 - x_range.0;
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
    let eta_eps = max(&mut (0..2).map(|a| {
        let r = sqrt(summary.eps_ratio[a]);
        if r > 0.0 {
            breakdown.t1[a].sigma_eps / r
        } else {
            0.0
        }
    }));
    let t3 = &breakdown.t3;
    SensitivityParams {
        eta_baseline: round_up_unit(max(&mut breakdown.t1.iter().map(|t| ratio(t.sigma_left, yr)))),
        eta_eps: Some(round_up_unit(eta_eps)),
        rho_baseline: round_up_unit(max(&mut breakdown.t1.iter().map(|t| t.rho.abs()))),
        eta_gamma: round_up_unit(max(&mut breakdown.t2.iter().map(|t| ratio(t.sigma_left, xr)))),
        rho_spillover: round_up_unit(max(&mut breakdown.t2.iter().map(|t| t.rho.abs()))),
        eta_tau: round_up_unit(max(&mut t3.iter().map(|l| ratio(l.term.sigma_left, xr)))),
        beta: round_up_unit(max(&mut t3.iter().map(|l| l.marginal_gap.abs().max(l.term.sigma_eps)))),
        rho_transport: round_up_unit(max(&mut t3.iter().map(|l| l.term.rho.abs()))),
        y_min_ref: y_range.0,
        y_max_ref: y_range.1,
        x_min_ref: x_range.0,
        x_max_ref: x_range.1,
        ..SensitivityParams::zero()
    }
}
