//! Discrete data-generating scenarios.
//!
//! A [`ScenarioSpec`] encodes the causal graph as conditional probability
//! tables over ten mutually independent categorical covariate blocks, the
//! population indicator `S`, the personal treatment `A`, the neighbourhood
//! exposure `G` and (optionally) the neighbour count `N`. Potential outcomes
//! are deterministic functions of `(a, g)` and the four outcome-relevant
//! blocks.
//!
//! Table layouts (row-major, last axis fastest):
//!
//! | table        | axes                                                    |
//! |--------------|---------------------------------------------------------|
//! | `selection`  | `x_as, u_as, x_gs, u_gs` → p(S = 1)                     |
//! | `propensity` | `s, x_ay, u_ay, x_ag, u_ag, x_as, u_as` → p(A = 1)      |
//! | `exposure`   | `s, [n,] x_ag, u_ag, x_gy, u_gy, x_gs, u_gs, g` → p(G=g) |
//! | `outcome`    | `a, g, x_ay, u_ay, x_gy, u_gy` → y                      |
//! | `degree`     | `s, n` → p(N = n)                                       |

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::sum;

/// Tolerance for probability rows summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Default cap on the number of enumerated joint states.
pub const DEFAULT_MAX_STATES: u128 = 10_000_000;

/// The ten covariate roles. `X*` blocks are observed, `U*` unobserved; the
/// suffix names the pair of variables the block is a common cause of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    XAy,
    UAy,
    XGy,
    UGy,
    XAg,
    UAg,
    XAs,
    UAs,
    XGs,
    UGs,
}

pub const ROLE_COUNT: usize = 10;

impl Role {
    pub const ALL: [Role; ROLE_COUNT] =
        [Role::XAy, Role::UAy, Role::XGy, Role::UGy, Role::XAg, Role::UAg, Role::XAs, Role::UAs, Role::XGs, Role::UGs];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::XAy => "x_ay",
            Role::UAy => "u_ay",
            Role::XGy => "x_gy",
            Role::UGy => "u_gy",
            Role::XAg => "x_ag",
            Role::UAg => "u_ag",
            Role::XAs => "x_as",
            Role::UAs => "u_as",
            Role::XGs => "x_gs",
            Role::UGs => "u_gs",
        }
    }

    pub fn from_name(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.name() == name)
    }

    pub fn is_observed(self) -> bool {
        matches!(self, Role::XAy | Role::XGy | Role::XAg | Role::XAs | Role::XGs)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per covariate block, indexed by [`Role::index`].
pub type Covariates = [u16; ROLE_COUNT];

/// Reference (`S = 1`) or target (`S = 2`) population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Population {
    Reference,
    Target,
}

impl Population {
    pub const BOTH: [Population; 2] = [Population::Reference, Population::Target];

    pub fn index(self) -> usize {
        match self {
            Population::Reference => 0,
            Population::Target => 1,
        }
    }

    /// The conventional label, 1 or 2.
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1 => Some(Population::Reference),
            2 => Some(Population::Target),
            _ => None,
        }
    }
}

/// Axis label of a probability or outcome table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    S,
    N,
    A,
    G,
    Block(Role),
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::S => "s",
            Axis::N => "n",
            Axis::A => "a",
            Axis::G => "g",
            Axis::Block(r) => r.name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Axis> {
        match name {
            "s" => Some(Axis::S),
            "n" => Some(Axis::N),
            "a" => Some(Axis::A),
            "g" => Some(Axis::G),
            other => Role::from_name(other).map(Axis::Block),
        }
    }
}

/// Dense row-major table with labelled axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    axes: Vec<Axis>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

fn strides_for(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    if shape.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; shape.len()];
    loop {
        f(&idx);
        let mut axis = shape.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < shape[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

impl Table {
    pub fn new(axes: Vec<Axis>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if axes.len() != shape.len() {
            return Err(Error::InputDomain(format!("{} axes but {} dimensions", axes.len(), shape.len())));
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return Err(Error::InputDomain(format!("axis `{}` repeated", a.name())));
            }
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::InputDomain(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                values.len()
            )));
        }
        let strides = strides_for(&shape);
        Ok(Self { axes, shape, strides, values })
    }

    pub fn from_fn(axes: Vec<Axis>, shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut values = Vec::with_capacity(shape.iter().product());
        for_each_index(&shape, |idx| values.push(f(idx)));
        let strides = strides_for(&shape);
        Self { axes, shape, strides, values }
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    #[inline]
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.values[o] = value;
    }

    /// The slice along the last axis at `prefix` (all other axes fixed).
    pub fn row(&self, prefix: &[usize]) -> &[f64] {
        let last = *self.shape.last().unwrap_or(&1);
        let start: usize = prefix.iter().zip(&self.strides).map(|(i, s)| i * s).sum();
        &self.values[start..start + last]
    }

    /// Visits every index tuple with its value.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], f64)) {
        let mut k = 0;
        for_each_index(&self.shape, |idx| {
            f(idx, self.values[k]);
            k += 1;
        });
    }

    /// Reorders axes into `target` order and broadcasts axes missing from
    /// this table. Axes not named in `target` are kept after the target axes
    /// so that validation can report them.
    pub fn conform(&self, target: &[(Axis, usize)]) -> Result<Table> {
        let mut axes: Vec<Axis> = target.iter().map(|t| t.0).collect();
        let mut shape: Vec<usize> = target.iter().map(|t| t.1).collect();
        for (i, a) in self.axes.iter().enumerate() {
            match target.iter().position(|t| t.0 == *a) {
                Some(p) => {
                    if target[p].1 != self.shape[i] {
                        return Err(Error::InputDomain(format!(
                            "axis `{}` has length {} but the scenario expects {}",
                            a.name(),
                            self.shape[i],
                            target[p].1
                        )));
                    }
                }
                None => {
                    axes.push(*a);
                    shape.push(self.shape[i]);
                }
            }
        }
        let map: Vec<usize> = self.axes.iter().map(|a| axes.iter().position(|b| b == a).unwrap()).collect();
        let mut src = vec![0usize; self.axes.len()];
        Ok(Table::from_fn(axes, shape, |idx| {
            for (k, &p) in map.iter().enumerate() {
                src[k] = idx[p];
            }
            self.get(&src)
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateBlock {
    pub role: Role,
    pub pmf: Vec<f64>,
}

impl CovariateBlock {
    /// A block with a single value, i.e. absent from the model.
    pub fn absent(role: Role) -> Self {
        Self { role, pmf: vec![1.0] }
    }

    pub fn support(&self) -> usize {
        self.pmf.len()
    }
}

/// Table-driven data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Indexed by [`Role::index`].
    pub blocks: [CovariateBlock; ROLE_COUNT],
    pub g_max: usize,
    pub selection: Table,
    pub propensity: Table,
    pub exposure: Table,
    pub outcome: Table,
    /// Present in undefined-potential-outcome mode.
    pub degree: Option<Table>,
}

fn block_axes(spec_blocks: &[CovariateBlock; ROLE_COUNT], roles: &[Role]) -> Vec<(Axis, usize)> {
    roles.iter().map(|&r| (Axis::Block(r), spec_blocks[r.index()].support())).collect()
}

const SELECTION_ROLES: [Role; 4] = [Role::XAs, Role::UAs, Role::XGs, Role::UGs];
const PROPENSITY_ROLES: [Role; 6] = [Role::XAy, Role::UAy, Role::XAg, Role::UAg, Role::XAs, Role::UAs];
const EXPOSURE_ROLES: [Role; 6] = [Role::XAg, Role::UAg, Role::XGy, Role::UGy, Role::XGs, Role::UGs];
const OUTCOME_ROLES: [Role; 4] = [Role::XAy, Role::UAy, Role::XGy, Role::UGy];

/// Canonical axes of every table for a given set of block supports.
pub fn canonical_axes(blocks: &[CovariateBlock; ROLE_COUNT], g_max: usize, undefined_po: bool) -> CanonicalAxes {
    let levels = g_max + 1;
    let selection = block_axes(blocks, &SELECTION_ROLES);
    let mut propensity = vec![(Axis::S, 2)];
    propensity.extend(block_axes(blocks, &PROPENSITY_ROLES));
    let mut exposure = vec![(Axis::S, 2)];
    if undefined_po {
        exposure.push((Axis::N, levels));
    }
    exposure.extend(block_axes(blocks, &EXPOSURE_ROLES));
    exposure.push((Axis::G, levels));
    let mut outcome = vec![(Axis::A, 2), (Axis::G, levels)];
    outcome.extend(block_axes(blocks, &OUTCOME_ROLES));
    CanonicalAxes { selection, propensity, exposure, outcome, degree: vec![(Axis::S, 2), (Axis::N, levels)] }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalAxes {
    pub selection: Vec<(Axis, usize)>,
    pub propensity: Vec<(Axis, usize)>,
    pub exposure: Vec<(Axis, usize)>,
    pub outcome: Vec<(Axis, usize)>,
    pub degree: Vec<(Axis, usize)>,
}

/// A single assumption or consistency violation found by
/// [`validate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape {
        table: &'static str,
        expected: String,
        found: String,
    },
    /// The propensity table carries an `n` axis.
    PropensityDependsOnDegree,
    NonFinite {
        table: &'static str,
        index: Vec<usize>,
    },
    NegativeProbability {
        table: &'static str,
        index: Vec<usize>,
        value: f64,
    },
    RowSum {
        table: &'static str,
        index: Vec<usize>,
        sum: f64,
    },
    Positivity {
        table: &'static str,
        index: Vec<usize>,
        value: f64,
    },
    /// Exposure mass on a level above the row's neighbour count.
    Support {
        index: Vec<usize>,
        g: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { table, expected, found } => {
                write!(f, "{table}: expected axes {expected}, found {found}")
            }
            Violation::PropensityDependsOnDegree => {
                f.write_str("propensity: treatment probabilities must not depend on the neighbour count n")
            }
            Violation::NonFinite { table, index } => write!(f, "{table}{index:?}: non-finite value"),
            Violation::NegativeProbability { table, index, value } => {
                write!(f, "{table}{index:?}: negative probability {value}")
            }
            Violation::RowSum { table, index, sum } => write!(f, "{table}{index:?}: row sums to {sum}"),
            Violation::Positivity { table, index, value } => {
                write!(f, "{table}{index:?}: probability {value} is not strictly inside (0, 1)")
            }
            Violation::Support { index, g, value } => {
                write!(f, "exposure{index:?}: mass {value} on level {g} above the neighbour count")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("{self}")))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("pass");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn describe_axes(axes: &[Axis], shape: &[usize]) -> String {
    let mut s = String::from("[");
    for (i, (a, n)) in axes.iter().zip(shape).enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(&format!("{}:{}", a.name(), n));
    }
    s.push(']');
    s
}

fn shape_matches(table: &Table, expected: &[(Axis, usize)]) -> bool {
    table.axes().len() == expected.len()
        && table.axes().iter().zip(table.shape()).zip(expected).all(|((a, n), (ea, en))| a == ea && n == en)
}

/// Checks table shapes, row sums, positivity and exposure support.
/// Violations are returned as data.
pub fn validate_scenario(spec: &ScenarioSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;

    for (i, block) in spec.blocks.iter().enumerate() {
        if block.role != Role::ALL[i] {
            v.push(Violation::Shape {
                table: "blocks",
                expected: format!("{} at position {i}", Role::ALL[i]),
                found: format!("{}", block.role),
            });
        }
        if block.pmf.is_empty() {
            v.push(Violation::Shape {
                table: "blocks",
                expected: format!("non-empty pmf for {}", block.role),
                found: "[]".into(),
            });
            continue;
        }
        for (k, &p) in block.pmf.iter().enumerate() {
            if !p.is_finite() {
                v.push(Violation::NonFinite { table: "blocks", index: vec![i, k] });
            } else if p < 0.0 {
                v.push(Violation::NegativeProbability { table: "blocks", index: vec![i, k], value: p });
            }
        }
        let s = sum(block.pmf.iter().copied());
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            v.push(Violation::RowSum { table: "blocks", index: vec![i], sum: s });
        }
    }
    if !v.is_empty() {
        return report;
    }

    let undefined = spec.degree.is_some();
    let canon = canonical_axes(&spec.blocks, spec.g_max, undefined);
    let mut shapes_ok = true;
    for (name, table, expected) in [
        ("selection", &spec.selection, &canon.selection),
        ("propensity", &spec.propensity, &canon.propensity),
        ("exposure", &spec.exposure, &canon.exposure),
        ("outcome", &spec.outcome, &canon.outcome),
    ] {
        if !shape_matches(table, expected) {
            shapes_ok = false;
            if name == "propensity" && table.axes().contains(&Axis::N) {
                v.push(Violation::PropensityDependsOnDegree);
            } else {
                let (ea, es): (Vec<Axis>, Vec<usize>) = expected.iter().copied().unzip();
                v.push(Violation::Shape {
                    table: name,
                    expected: describe_axes(&ea, &es),
                    found: describe_axes(table.axes(), table.shape()),
                });
            }
        }
    }
    if let Some(degree) = &spec.degree {
        if !shape_matches(degree, &canon.degree) {
            shapes_ok = false;
            let (ea, es): (Vec<Axis>, Vec<usize>) = canon.degree.iter().copied().unzip();
            v.push(Violation::Shape {
                table: "degree",
                expected: describe_axes(&ea, &es),
                found: describe_axes(degree.axes(), degree.shape()),
            });
        }
    }
    if !shapes_ok {
        return report;
    }

    // Selection and treatment probabilities must be strictly inside (0, 1).
    for (name, table) in [("selection", &spec.selection), ("propensity", &spec.propensity)] {
        table.for_each(|idx, p| {
            if !p.is_finite() {
                v.push(Violation::NonFinite { table: name, index: idx.to_vec() });
            } else if !(p > 0.0 && p < 1.0) {
                v.push(Violation::Positivity { table: name, index: idx.to_vec(), value: p });
            }
        });
    }

    spec.outcome.for_each(|idx, y| {
        if !y.is_finite() {
            v.push(Violation::NonFinite { table: "outcome", index: idx.to_vec() });
        }
    });

    check_rows(v, "exposure", &spec.exposure);
    if undefined {
        // rows are indexed [s, n, ...]; mass above n is a support violation
        let levels = spec.g_max + 1;
        let prefix_shape = &spec.exposure.shape()[..spec.exposure.shape().len() - 1];
        for_each_index(prefix_shape, |prefix| {
            let n = prefix[1];
            let row = spec.exposure.row(prefix);
            for g in (n + 1)..levels {
                if row[g] != 0.0 {
                    v.push(Violation::Support { index: prefix.to_vec(), g, value: row[g] });
                }
            }
        });
    }
    if let Some(degree) = &spec.degree {
        check_rows(v, "degree", degree);
    }
    report
}

fn check_rows(v: &mut Vec<Violation>, name: &'static str, table: &Table) {
    let prefix_shape = &table.shape()[..table.shape().len() - 1];
    for_each_index(prefix_shape, |prefix| {
        let row = table.row(prefix);
        let mut ok = true;
        for (g, &p) in row.iter().enumerate() {
            let mut idx = prefix.to_vec();
            idx.push(g);
            if !p.is_finite() {
                v.push(Violation::NonFinite { table: name, index: idx });
                ok = false;
            } else if p < 0.0 {
                v.push(Violation::NegativeProbability { table: name, index: idx, value: p });
                ok = false;
            }
        }
        if ok {
            let s = sum(row.iter().copied());
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                v.push(Violation::RowSum { table: name, index: prefix.to_vec(), sum: s });
            }
        }
    });
}

#[inline]
fn cv(c: &Covariates, r: Role) -> usize {
    c[r.index()] as usize
}

impl ScenarioSpec {
    pub fn validate(&self) -> ValidationReport {
        validate_scenario(self)
    }

    pub fn is_undefined_po(&self) -> bool {
        self.degree.is_some()
    }

    pub fn levels(&self) -> usize {
        self.g_max + 1
    }

    pub fn support(&self, role: Role) -> usize {
        self.blocks[role.index()].support()
    }

    pub fn block_probability(&self, c: &Covariates) -> f64 {
        self.blocks.iter().zip(c.iter()).map(|(b, &v)| b.pmf[v as usize]).product()
    }

    /// p(S = s | x_as, u_as, x_gs, u_gs).
    pub fn selection_probability(&self, s: Population, c: &Covariates) -> f64 {
        let p1 = self.selection.get(&[cv(c, Role::XAs), cv(c, Role::UAs), cv(c, Role::XGs), cv(c, Role::UGs)]);
        match s {
            Population::Reference => p1,
            Population::Target => 1.0 - p1,
        }
    }

    /// True propensity p(A = 1 | S = s, treatment parents).
    pub fn treatment_probability(&self, s: Population, c: &Covariates) -> f64 {
        self.propensity.get(&[
            s.index(),
            cv(c, Role::XAy),
            cv(c, Role::UAy),
            cv(c, Role::XAg),
            cv(c, Role::UAg),
            cv(c, Role::XAs),
            cv(c, Role::UAs),
        ])
    }

    /// p(A = a | S = s, treatment parents).
    pub fn arm_probability(&self, s: Population, a: u8, c: &Covariates) -> f64 {
        let p = self.treatment_probability(s, c);
        if a == 1 {
            p
        } else {
            1.0 - p
        }
    }

    /// Exposure pmf row for a unit; `n` is required in undefined mode.
    pub fn exposure_row(&self, s: Population, n: Option<usize>, c: &Covariates) -> &[f64] {
        let mut prefix = [0usize; 8];
        let mut k = 0;
        prefix[k] = s.index();
        k += 1;
        if self.degree.is_some() {
            prefix[k] = n.expect("neighbour count required in undefined mode");
            k += 1;
        }
        for r in EXPOSURE_ROLES {
            prefix[k] = cv(c, r);
            k += 1;
        }
        self.exposure.row(&prefix[..k])
    }

    /// Potential outcome y(a, g) for the given covariates.
    #[inline]
    pub fn outcome_value(&self, a: u8, g: usize, c: &Covariates) -> f64 {
        self.outcome.get(&[a as usize, g, cv(c, Role::XAy), cv(c, Role::UAy), cv(c, Role::XGy), cv(c, Role::UGy)])
    }

    /// p(N = n | S = s); `None` outside undefined mode.
    pub fn degree_probability(&self, s: Population, n: usize) -> Option<f64> {
        self.degree.as_ref().map(|d| d.get(&[s.index(), n]))
    }

    /// Number of joint states before dropping zero-weight combinations.
    pub fn state_cardinality(&self) -> u128 {
        let blocks: u128 = self.blocks.iter().map(|b| b.support() as u128).product();
        let levels = self.levels() as u128;
        let degree = if self.is_undefined_po() { levels } else { 1 };
        blocks * 2 * degree * 2 * levels
    }

    /// When every unit has the same neighbour count `n` in both
    /// populations, the equivalent fully-defined scenario with that exposure
    /// slice.
    pub fn collapse_degree(&self) -> Option<ScenarioSpec> {
        let degree = self.degree.as_ref()?;
        let n = (0..self.levels()).find(|&n| degree.get(&[0, n]) == 1.0)?;
        if degree.get(&[1, n]) != 1.0 {
            return None;
        }
        let canon = canonical_axes(&self.blocks, self.g_max, false);
        let shape: Vec<usize> = canon.exposure.iter().map(|a| a.1).collect();
        let axes: Vec<Axis> = canon.exposure.iter().map(|a| a.0).collect();
        let exposure = Table::from_fn(axes, shape, |idx| {
            let mut src = Vec::with_capacity(idx.len() + 1);
            src.push(idx[0]);
            src.push(n);
            src.extend_from_slice(&idx[1..]);
            self.exposure.get(&src)
        });
        Some(ScenarioSpec { exposure, degree: None, ..self.clone() })
    }

    /// Whether `y(a, g) - y(a, 0) - y(0, g) + y(0, 0)` vanishes everywhere,
    /// i.e. the outcome splits into a treatment part plus an exposure part.
    pub fn outcome_is_additive(&self, tol: f64) -> bool {
        self.interaction_spread(tol, false)
    }

    /// Whether the treatment-by-exposure interaction depends on `g` only,
    /// not on the covariates.
    pub fn interaction_is_separable(&self, tol: f64) -> bool {
        self.interaction_spread(tol, true)
    }

    fn interaction_spread(&self, tol: f64, allow_constant: bool) -> bool {
        let mut first: Vec<Option<f64>> = vec![None; self.levels()];
        let shape: Vec<usize> = OUTCOME_ROLES.iter().map(|&r| self.support(r)).collect();
        let mut ok = true;
        for_each_index(&shape, |idx| {
            let mut c: Covariates = [0; ROLE_COUNT];
            for (k, &r) in OUTCOME_ROLES.iter().enumerate() {
                c[r.index()] = idx[k] as u16;
            }
            for g in 0..self.levels() {
                let inter = self.outcome_value(1, g, &c) - self.outcome_value(1, 0, &c) - self.outcome_value(0, g, &c)
                    + self.outcome_value(0, 0, &c);
                if allow_constant {
                    match first[g] {
                        None => first[g] = Some(inter),
                        Some(v) => ok &= (inter - v).abs() <= tol,
                    }
                } else {
                    ok &= inter.abs() <= tol;
                }
            }
        });
        ok
    }
}

/// One atom of an exact joint enumeration or a population measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub covariates: Covariates,
    pub s: Population,
    /// Neighbour count; set only in undefined-potential-outcome mode.
    pub n: Option<u16>,
    pub a: u8,
    pub g: u16,
    /// Originating unit for measures built on a realized population.
    pub unit: Option<u32>,
    pub weight: f64,
}

fn advance(c: &mut Covariates, supports: &[usize; ROLE_COUNT]) -> bool {
    for i in (0..ROLE_COUNT).rev() {
        c[i] += 1;
        if (c[i] as usize) < supports[i] {
            return true;
        }
        c[i] = 0;
    }
    false
}

fn supports(spec: &ScenarioSpec) -> [usize; ROLE_COUNT] {
    let mut out = [1; ROLE_COUNT];
    for (o, b) in out.iter_mut().zip(&spec.blocks) {
        *o = b.support();
    }
    out
}

/// Exact joint distribution of the scenario, one state per combination of
/// covariates, `S`, `N`, `A`, `G` with nonzero weight.
pub fn enumerate_joint(spec: &ScenarioSpec, max_states: u128) -> Result<Vec<JointState>> {
    spec.validate().into_result()?;
    let cardinality = spec.state_cardinality();
    if cardinality > max_states {
        return Err(Error::EnumerationSize { cardinality, cap: max_states });
    }
    let supports = supports(spec);
    let degrees: Vec<Option<usize>> =
        if spec.is_undefined_po() { (0..spec.levels()).map(Some).collect() } else { vec![None] };
    let mut states = Vec::new();
    let mut c: Covariates = [0; ROLE_COUNT];
    loop {
        let pc = spec.block_probability(&c);
        if pc > 0.0 {
            for s in Population::BOTH {
                let ps = pc * spec.selection_probability(s, &c);
                for &n in &degrees {
                    let pn = ps * n.map_or(1.0, |n| spec.degree_probability(s, n).unwrap());
                    if pn == 0.0 {
                        continue;
                    }
                    let row = spec.exposure_row(s, n, &c);
                    for a in 0..2u8 {
                        let pa = pn * spec.arm_probability(s, a, &c);
                        for (g, &pg) in row.iter().enumerate() {
                            let w = pa * pg;
                            if w > 0.0 {
                                states.push(JointState {
                                    covariates: c,
                                    s,
                                    n: n.map(|n| n as u16),
                                    a,
                                    g: g as u16,
                                    unit: None,
                                    weight: w,
                                });
                            }
                        }
                    }
                }
            }
        }
        if !advance(&mut c, &supports) {
            break;
        }
    }
    Ok(states)
}

/// Posterior of the selection parents given `S = s`, as weights over
/// `(x_as, u_as, x_gs, u_gs)`.
fn selection_posterior(spec: &ScenarioSpec, s: Population) -> Table {
    let axes: Vec<Axis> = SELECTION_ROLES.iter().map(|&r| Axis::Block(r)).collect();
    let shape: Vec<usize> = SELECTION_ROLES.iter().map(|&r| spec.support(r)).collect();
    let mut t = Table::from_fn(axes, shape, |idx| {
        let prior: f64 = SELECTION_ROLES.iter().zip(idx).map(|(&r, &v)| spec.blocks[r.index()].pmf[v]).product();
        let p1 = spec.selection.get(idx);
        prior * if s == Population::Reference { p1 } else { 1.0 - p1 }
    });
    let z = sum(t.values().iter().copied());
    if z > 0.0 {
        for v in t.values_mut() {
            *v /= z;
        }
    }
    t
}

/// Pseudo-propensity p(A = 1 | S = s, x_ay) by exact marginalization of the
/// propensity table, indexed by the value of `x_ay`.
pub fn pseudo_propensity_table(spec: &ScenarioSpec, s: Population) -> Result<Vec<f64>> {
    spec.validate().into_result()?;
    let post = selection_posterior(spec, s);
    let pmf = |r: Role, v: usize| spec.blocks[r.index()].pmf[v];
    let mut out = Vec::with_capacity(spec.support(Role::XAy));
    for x in 0..spec.support(Role::XAy) {
        if pmf(Role::XAy, x) <= 0.0 {
            return Err(Error::UndefinedStratum(format!("x_ay = {x} has zero mass given S = {}", s.label())));
        }
        let mut acc = crate::numeric::CompensatedSum::new();
        for uay in 0..spec.support(Role::UAy) {
            for xag in 0..spec.support(Role::XAg) {
                for uag in 0..spec.support(Role::UAg) {
                    let w0 = pmf(Role::UAy, uay) * pmf(Role::XAg, xag) * pmf(Role::UAg, uag);
                    if w0 == 0.0 {
                        continue;
                    }
                    for xas in 0..spec.support(Role::XAs) {
                        for uas in 0..spec.support(Role::UAs) {
                            let mut wsel = 0.0;
                            for xgs in 0..spec.support(Role::XGs) {
                                for ugs in 0..spec.support(Role::UGs) {
                                    wsel += post.get(&[xas, uas, xgs, ugs]);
                                }
                            }
                            let p = spec.propensity.get(&[s.index(), x, uay, xag, uag, xas, uas]);
                            acc.add(w0 * wsel * p);
                        }
                    }
                }
            }
        }
        out.push(acc.value());
    }
    Ok(out)
}

/// p(N >= m | S = s). Always 1 outside undefined mode.
pub fn degree_tail(spec: &ScenarioSpec, s: Population, m: usize) -> f64 {
    match &spec.degree {
        None => 1.0,
        Some(d) => sum((m..spec.levels()).map(|n| d.get(&[s.index(), n]))),
    }
}

/// Exposure law given the outcome-relevant exposure covariates,
/// p(G = g | S = s, N >= min_degree, x_gy, u_gy), as a table over
/// `[x_gy, u_gy, g]`, obtained by exact marginalization of the exposure
/// table. Outside undefined mode `min_degree` is ignored.
pub fn exposure_given_outcome_covariates(spec: &ScenarioSpec, s: Population, min_degree: usize) -> Result<Table> {
    spec.validate().into_result()?;
    let post = selection_posterior(spec, s);
    let degree_weights: Vec<(Option<usize>, f64)> = match &spec.degree {
        None => vec![(None, 1.0)],
        Some(d) => {
            let tail = degree_tail(spec, s, min_degree);
            if !(tail > 0.0) {
                return Err(Error::ZeroMass(format!("N >= {min_degree} has zero mass given S = {}", s.label())));
            }
            (min_degree..spec.levels())
                .map(|n| (Some(n), d.get(&[s.index(), n]) / tail))
                .filter(|w| w.1 > 0.0)
                .collect()
        }
    };
    let pmf = |r: Role, v: usize| spec.blocks[r.index()].pmf[v];
    let levels = spec.levels();
    let shape = vec![spec.support(Role::XGy), spec.support(Role::UGy), levels];
    let mut out = Table::from_fn(vec![Axis::Block(Role::XGy), Axis::Block(Role::UGy), Axis::G], shape.clone(), |_| 0.0);
    // marginal weight of (x_gs, u_gs) given S = s
    let mut gs_weight = vec![0.0; spec.support(Role::XGs) * spec.support(Role::UGs)];
    post.for_each(|idx, w| gs_weight[idx[2] * spec.support(Role::UGs) + idx[3]] += w);
    let mut c: Covariates = [0; ROLE_COUNT];
    for xgy in 0..shape[0] {
        for ugy in 0..shape[1] {
            c[Role::XGy.index()] = xgy as u16;
            c[Role::UGy.index()] = ugy as u16;
            let mut acc = vec![crate::numeric::CompensatedSum::new(); levels];
            for xag in 0..spec.support(Role::XAg) {
                for uag in 0..spec.support(Role::UAg) {
                    for xgs in 0..spec.support(Role::XGs) {
                        for ugs in 0..spec.support(Role::UGs) {
                            let w = pmf(Role::XAg, xag)
                                * pmf(Role::UAg, uag)
                                * gs_weight[xgs * spec.support(Role::UGs) + ugs];
                            if w == 0.0 {
                                continue;
                            }
                            c[Role::XAg.index()] = xag as u16;
                            c[Role::UAg.index()] = uag as u16;
                            c[Role::XGs.index()] = xgs as u16;
                            c[Role::UGs.index()] = ugs as u16;
                            for &(n, wn) in &degree_weights {
                                let row = spec.exposure_row(s, n, &c);
                                for g in 0..levels {
                                    acc[g].add(w * wn * row[g]);
                                }
                            }
                        }
                    }
                }
            }
            for g in 0..levels {
                out.set(&[xgy, ugy, g], acc[g].value());
            }
        }
    }
    Ok(out)
}

/// Draws one unit from the scenario, exposure taken from the exposure table.
pub fn sample_state<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> JointState {
    let mut c: Covariates = [0; ROLE_COUNT];
    for (i, b) in spec.blocks.iter().enumerate() {
        c[i] = draw_categorical(&b.pmf, rng) as u16;
    }
    let s = if rng.gen::<f64>() < spec.selection_probability(Population::Reference, &c) {
        Population::Reference
    } else {
        Population::Target
    };
    let n = spec.degree.as_ref().map(|d| draw_categorical(d.row(&[s.index()]), rng));
    let a = u8::from(rng.gen::<f64>() < spec.treatment_probability(s, &c));
    let g = draw_categorical(spec.exposure_row(s, n, &c), rng);
    JointState { covariates: c, s, n: n.map(|n| n as u16), a, g: g as u16, unit: None, weight: 1.0 }
}

/// Index drawn from a pmf by inversion.
pub fn draw_categorical<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the cumulative total: take the last positive cell
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Structure of the outcome table produced by [`random_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutcomeModel {
    /// Independent draw per cell.
    #[default]
    General,
    /// `f0(x) + f1(a, x) + f2(g, x)`: no treatment-by-exposure interaction.
    Additive,
    /// `f0(x) + f1(a, x) + f2(g, x) + f3(a, g)`.
    SeparableInteraction,
}

/// Structure of the exposure table produced by [`random_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExposureModel {
    #[default]
    General,
    /// Same marginal exposure law in both populations while the conditional
    /// law given `x_gy` differs.
    EqualMarginals,
    /// Exposure depends on the population (and neighbour count) only.
    Randomized,
}

/// Neighbour-count law in undefined-potential-outcome mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeModel {
    /// Random pmf over `0..=g_max` per population.
    Ragged,
    /// Every unit has `g_max` neighbours.
    Full,
    /// Every unit is isolated.
    Isolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOptions {
    /// Largest block support; each block's support is drawn from `1..=max_support`.
    pub max_support: usize,
    /// Largest exposure level; `g_max` is drawn from `0..=max_g_max` unless fixed.
    pub max_g_max: usize,
    pub fixed_g_max: Option<usize>,
    pub outcome_range: (f64, f64),
    /// When false, treatment depends on `S` and `x_ay` only.
    pub confounding: bool,
    pub outcome_model: OutcomeModel,
    pub exposure_model: ExposureModel,
    /// Both populations share every mechanism.
    pub identical_populations: bool,
    pub degree_model: Option<DegreeModel>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            max_support: 3,
            max_g_max: 3,
            fixed_g_max: None,
            outcome_range: (-5.0, 5.0),
            confounding: true,
            outcome_model: OutcomeModel::General,
            exposure_model: ExposureModel::General,
            identical_populations: false,
            degree_model: None,
        }
    }
}

const PROB_LO: f64 = 0.05;
const PROB_HI: f64 = 0.95;

fn random_pmf<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(PROB_LO..PROB_HI)).collect();
    let z = sum(raw.iter().copied());
    raw.into_iter().map(|x| x / z).collect()
}

/// Seeded random scenario that always passes [`validate_scenario`].
pub fn random_scenario(seed: u64, options: &ScenarioOptions) -> Result<ScenarioSpec> {
    if options.max_support == 0 {
        return Err(Error::InputDomain("max_support must be positive".into()));
    }
    let (lo, hi) = options.outcome_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InputDomain("outcome range must be finite and ordered".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = [1usize; ROLE_COUNT];
    for s in sizes.iter_mut() {
        *s = rng.gen_range(1..=options.max_support);
    }
    if options.exposure_model == ExposureModel::EqualMarginals && options.max_support >= 2 {
        sizes[Role::XGy.index()] = sizes[Role::XGy.index()].max(2);
    }
    let g_max = options.fixed_g_max.unwrap_or_else(|| rng.gen_range(0..=options.max_g_max));
    let levels = g_max + 1;

    let blocks: [CovariateBlock; ROLE_COUNT] = core::array::from_fn(|i| {
        let role = Role::ALL[i];
        let pmf = if role == Role::XGy && options.exposure_model == ExposureModel::EqualMarginals {
            vec![1.0 / sizes[i] as f64; sizes[i]]
        } else {
            random_pmf(&mut rng, sizes[i])
        };
        CovariateBlock { role, pmf }
    });
    let undefined = options.degree_model.is_some();
    let canon = canonical_axes(&blocks, g_max, undefined);
    let split = |axes: &[(Axis, usize)]| -> (Vec<Axis>, Vec<usize>) { axes.iter().copied().unzip() };

    let (sa, ss) = split(&canon.selection);
    let selection = if options.identical_populations {
        let p = rng.gen_range(PROB_LO..PROB_HI);
        Table::from_fn(sa, ss, |_| p)
    } else {
        Table::from_fn(sa, ss, |_| rng.gen_range(PROB_LO..PROB_HI))
    };

    // propensity axes: s, x_ay, u_ay, x_ag, u_ag, x_as, u_as
    let (pa, ps) = split(&canon.propensity);
    let confounding = options.confounding;
    let shared = options.identical_populations;
    let base = Table::from_fn(pa.clone(), ps.clone(), |_| rng.gen_range(PROB_LO..PROB_HI));
    let propensity = Table::from_fn(pa, ps, |idx| {
        let mut src = idx.to_vec();
        if shared {
            src[0] = 0;
            src[5] = 0;
            src[6] = 0;
        }
        if !confounding {
            for k in 2..7 {
                src[k] = 0;
            }
        }
        base.get(&src)
    });

    let (ea, es) = split(&canon.exposure);
    let n_axis = usize::from(undefined);
    let g_axis = es.len() - 1;
    // exposure axes: s, [n], x_ag, u_ag, x_gy, u_gy, x_gs, u_gs, g
    let row_shape = &es[..g_axis];
    let mut rows = Table::from_fn(ea.clone(), es.clone(), |_| 0.0);
    for_each_index(row_shape, |prefix| {
        let support = if undefined { prefix[1] + 1 } else { levels };
        let pmf = random_pmf(&mut rng, support);
        for (g, p) in pmf.into_iter().enumerate() {
            let mut idx = prefix.to_vec();
            idx.push(g);
            rows.set(&idx, p);
        }
    });
    let xgy_axis = 3 + n_axis;
    let k_xgy = sizes[Role::XGy.index()];
    let exposure = Table::from_fn(ea, es, |idx| {
        let mut src = idx.to_vec();
        if shared {
            src[0] = 0;
        }
        match options.exposure_model {
            ExposureModel::General => {}
            ExposureModel::Randomized => {
                for k in (1 + n_axis)..g_axis {
                    src[k] = 0;
                }
            }
            ExposureModel::EqualMarginals => {
                // no dependence on the selection-related blocks, and the
                // target row is the reference row at a cyclically shifted x_gy
                src[xgy_axis + 2] = 0;
                src[xgy_axis + 3] = 0;
                if idx[0] == 1 {
                    src[0] = 0;
                    src[xgy_axis] = (idx[xgy_axis] + 1) % k_xgy;
                }
            }
        }
        if shared {
            src[xgy_axis + 2] = 0;
            src[xgy_axis + 3] = 0;
        }
        rows.get(&src)
    });

    let (oa, os) = split(&canon.outcome);
    let outcome = match options.outcome_model {
        OutcomeModel::General => Table::from_fn(oa, os, |_| rng.gen_range(lo..=hi)),
        OutcomeModel::Additive | OutcomeModel::SeparableInteraction => {
            let parts = if options.outcome_model == OutcomeModel::Additive { 3.0 } else { 4.0 };
            let (plo, phi) = (lo / parts, hi / parts);
            let cov_shape: Vec<usize> = os[2..].to_vec();
            let cov_axes: Vec<Axis> = oa[2..].to_vec();
            let f0 = Table::from_fn(cov_axes.clone(), cov_shape.clone(), |_| rng.gen_range(plo..=phi));
            let mut f1_axes = vec![Axis::A];
            f1_axes.extend_from_slice(&cov_axes);
            let mut f1_shape = vec![2];
            f1_shape.extend_from_slice(&cov_shape);
            let f1 = Table::from_fn(f1_axes, f1_shape, |_| rng.gen_range(plo..=phi));
            let mut f2_axes = vec![Axis::G];
            f2_axes.extend_from_slice(&cov_axes);
            let mut f2_shape = vec![levels];
            f2_shape.extend_from_slice(&cov_shape);
            let f2 = Table::from_fn(f2_axes, f2_shape, |_| rng.gen_range(plo..=phi));
            let f3 = Table::from_fn(vec![Axis::A, Axis::G], vec![2, levels], |_| {
                if parts == 4.0 {
                    rng.gen_range(plo..=phi)
                } else {
                    0.0
                }
            });
            Table::from_fn(oa, os, |idx| {
                let (a, g, rest) = (idx[0], idx[1], &idx[2..]);
                let mut i1 = vec![a];
                i1.extend_from_slice(rest);
                let mut i2 = vec![g];
                i2.extend_from_slice(rest);
                f0.get(rest) + f1.get(&i1) + f2.get(&i2) + f3.get(&[a, g])
            })
        }
    };

    let degree = options.degree_model.map(|model| {
        let (da, ds) = split(&canon.degree);
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|_| match model {
                DegreeModel::Ragged => random_pmf(&mut rng, levels),
                DegreeModel::Full => {
                    let mut r = vec![0.0; levels];
                    r[g_max] = 1.0;
                    r
                }
                DegreeModel::Isolated => {
                    let mut r = vec![0.0; levels];
                    r[0] = 1.0;
                    r
                }
            })
            .collect();
        Table::from_fn(da, ds, |idx| rows[if shared { 0 } else { idx[0] }][idx[1]])
    });

    let spec = ScenarioSpec { blocks, g_max, selection, propensity, exposure, outcome, degree };
    debug_assert!(spec.validate().is_valid(), "{}", spec.validate());
    Ok(spec)
}
