//! Synthetic populations on interference networks.
//!
//! Covariates and population membership are drawn per unit from a
//! scenario's tables; treatments are independent coins given each unit's
//! propensity parents; exposure is realized structurally from the network.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimate::{PopulationMeasure, Provenance};
use crate::graph::{exposure_distribution, neighborhood_exposures, ExposureKind, ExposureSpec, InterferenceNetwork};
use crate::scenario::{draw_categorical, Covariates, JointState, Population, ScenarioSpec, ROLE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetworkKind {
    ErdosRenyi {
        p: f64,
    },
    /// Each unit linked to its `k / 2` nearest units on either side.
    Ring {
        k: usize,
    },
    /// Unit 0 linked to every other unit.
    Star,
}

pub fn generate_network(kind: NetworkKind, unit_count: usize, seed: u64) -> Result<InterferenceNetwork> {
    if unit_count == 0 {
        return Err(Error::InputDomain("unit_count must be positive".into()));
    }
    let mut edges = Vec::new();
    match kind {
        NetworkKind::ErdosRenyi { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InputDomain(format!("edge probability {p} outside [0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..unit_count {
                for j in (i + 1)..unit_count {
                    if rng.gen::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
        }
        NetworkKind::Ring { k } => {
            if k % 2 != 0 || k >= unit_count {
                return Err(Error::InputDomain(format!(
                    "ring degree {k} must be even and below the unit count {unit_count}"
                )));
            }
            for i in 0..unit_count {
                for step in 1..=k / 2 {
                    edges.push((i, (i + step) % unit_count));
                }
            }
        }
        NetworkKind::Star => edges.extend((1..unit_count).map(|j| (0, j))),
    }
    InterferenceNetwork::from_edges(unit_count, &edges, false)
}

/// One realized unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub covariates: Covariates,
    pub s: Population,
    pub degree: usize,
    /// True propensity p(A = 1 | S, treatment parents).
    pub propensity: f64,
    pub a: u8,
    pub g: usize,
    /// y(a, g) at index `a * levels + g`; `None` for levels above the degree
    /// in undefined-potential-outcome mode.
    pub potential_outcomes: Vec<Option<f64>>,
    pub y: f64,
}

impl UnitRecord {
    pub fn potential_outcome(&self, a: u8, g: usize) -> Option<f64> {
        let levels = self.potential_outcomes.len() / 2;
        self.potential_outcomes.get(a as usize * levels + g).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    pub network: InterferenceNetwork,
    pub exposure: ExposureSpec,
    pub units: Vec<UnitRecord>,
    pub undefined_po: bool,
    pub seed: u64,
}

impl SyntheticPopulation {
    pub fn levels(&self) -> usize {
        self.exposure.g_max() + 1
    }

    /// The realized units as equal-weight states.
    pub fn states(&self) -> Vec<JointState> {
        let w = 1.0 / self.units.len() as f64;
        self.units
            .iter()
            .enumerate()
            .map(|(i, u)| JointState {
                covariates: u.covariates,
                s: u.s,
                n: self.undefined_po.then_some(u.degree as u16),
                a: u.a,
                g: u.g as u16,
                unit: Some(i as u32),
                weight: w,
            })
            .collect()
    }

    /// Fresh treatment draws for every unit with covariates and network held
    /// fixed.
    pub fn draw_treatments<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u8> {
        self.units.iter().map(|u| u8::from(rng.gen::<f64>() < u.propensity)).collect()
    }
}

fn check_exposure(spec: &ScenarioSpec, network: &InterferenceNetwork, exposure: &ExposureSpec) -> Result<()> {
    if exposure.g_max() != spec.g_max {
        return Err(Error::InputDomain(format!(
            "exposure mapping has g_max {} but the scenario has {}",
            exposure.g_max(),
            spec.g_max
        )));
    }
    let max_degree = network.max_degree();
    if spec.is_undefined_po() && exposure.kind() != ExposureKind::Count {
        return Err(Error::Mode("undefined potential outcomes need the count exposure".into()));
    }
    if exposure.kind() == ExposureKind::Count && !exposure.clamps() && max_degree > spec.g_max {
        return Err(Error::ExposureOverflow { count: max_degree, g_max: spec.g_max });
    }
    Ok(())
}

/// Realizes a population on `network`. Exposure comes from the neighbours'
/// realized treatments through `exposure`, not from the scenario's exposure
/// table. In undefined-potential-outcome mode the neighbour count is the
/// degree and potential outcomes are stored for `g <= degree` only.
pub fn generate_population(
    spec: &ScenarioSpec,
    network: &InterferenceNetwork,
    exposure: &ExposureSpec,
    seed: u64,
) -> Result<SyntheticPopulation> {
    spec.validate().into_result()?;
    check_exposure(spec, network, exposure)?;
    let n = network.unit_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drawn: Vec<(Covariates, Population)> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c: Covariates = [0; ROLE_COUNT];
        for (slot, block) in c.iter_mut().zip(&spec.blocks) {
            *slot = draw_categorical(&block.pmf, &mut rng) as u16;
        }
        let s = if rng.gen::<f64>() < spec.selection_probability(Population::Reference, &c) {
            Population::Reference
        } else {
            Population::Target
        };
        drawn.push((c, s));
    }
    let propensities: Vec<f64> = drawn.iter().map(|(c, s)| spec.treatment_probability(*s, c)).collect();
    let treatments: Vec<u8> = propensities.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect();
    let exposures = neighborhood_exposures(network, &treatments, exposure)?;
    let levels = spec.levels();
    let undefined = spec.is_undefined_po();
    let units = (0..n)
        .map(|i| {
            let (c, s) = drawn[i];
            let degree = network.degree(i);
            let mut po = vec![None; 2 * levels];
            for a in 0..2u8 {
                for g in 0..levels {
                    if !undefined || g <= degree {
                        po[a as usize * levels + g] = Some(spec.outcome_value(a, g, &c));
                    }
                }
            }
            let (a, g) = (treatments[i], exposures[i]);
            let y = po[a as usize * levels + g].expect("observed level is defined");
            UnitRecord { covariates: c, s, degree, propensity: propensities[i], a, g, potential_outcomes: po, y }
        })
        .collect();
    Ok(SyntheticPopulation { network: network.clone(), exposure: *exposure, units, undefined_po: undefined, seed })
}

/// Exact law of `(A_i, G_i)` given covariates, population membership and the
/// network: each unit's treatment is an independent coin with its true
/// propensity, so its exposure follows the Poisson-binomial law of its
/// neighbours' propensities. Atoms are `(unit, a, g)` with weight
/// `(1 / unit_count)·p(a)·p(g)`.
pub fn configuration_conditional_measure(pop: &SyntheticPopulation, spec: &ScenarioSpec) -> Result<PopulationMeasure> {
    check_exposure(spec, &pop.network, &pop.exposure)?;
    let n = pop.units.len();
    let unit_weight = 1.0 / n as f64;
    let mut atoms = Vec::with_capacity(n * 4);
    let mut nbr_props = Vec::new();
    for (i, u) in pop.units.iter().enumerate() {
        nbr_props.clear();
        nbr_props.extend(pop.network.neighbors(i).iter().map(|&j| pop.units[j].propensity));
        let pmf = exposure_distribution(&pop.exposure, &nbr_props)?;
        let p1 = spec.treatment_probability(u.s, &u.covariates);
        for a in 0..2u8 {
            let pa = if a == 1 { p1 } else { 1.0 - p1 };
            for (g, &pg) in pmf.iter().enumerate() {
                let w = unit_weight * pa * pg;
                if w > 0.0 {
                    atoms.push(JointState {
                        covariates: u.covariates,
                        s: u.s,
                        n: pop.undefined_po.then_some(u.degree as u16),
                        a,
                        g: g as u16,
                        unit: Some(i as u32),
                        weight: w,
                    });
                }
            }
        }
    }
    PopulationMeasure::new(atoms, Provenance::ConfigurationConditional)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{random_scenario, DegreeModel, ScenarioOptions};

    #[test]
    fn ring_is_regular() {
        let net = generate_network(NetworkKind::Ring { k: 2 }, 5, 0).unwrap();
        assert!((0..5).all(|i| net.degree(i) == 2));
        assert_eq!(net.neighbors(0), [1, 4]);
        assert!(generate_network(NetworkKind::Ring { k: 3 }, 5, 0).is_err());
        assert!(generate_network(NetworkKind::Ring { k: 6 }, 5, 0).is_err());
    }

    #[test]
    fn empty_erdos_renyi() {
        let net = generate_network(NetworkKind::ErdosRenyi { p: 0.0 }, 100, 3).unwrap();
        assert_eq!(net.max_degree(), 0);
        assert!(generate_network(NetworkKind::ErdosRenyi { p: 1.5 }, 10, 3).is_err());
    }

    #[test]
    fn erdos_renyi_mean_degree() {
        let n = 1000;
        let p = 0.1;
        let net = generate_network(NetworkKind::ErdosRenyi { p }, n, 11).unwrap();
        let mean = (0..n).map(|i| net.degree(i) as f64).sum::<f64>() / n as f64;
        // mean degree is 2·E/n with E ~ Binomial(n(n−1)/2, p)
        let pairs = (n * (n - 1) / 2) as f64;
        let se = 2.0 * (pairs * p * (1.0 - p)).sqrt() / n as f64;
        assert!((mean - (n - 1) as f64 * p).abs() <= 4.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn star_centre() {
        let net = generate_network(NetworkKind::Star, 5, 0).unwrap();
        assert_eq!(net.degree(0), 4);
        assert!((1..5).all(|i| net.neighbors(i) == [0]));
    }

    #[test]
    fn isolated_units_have_zero_exposure() {
        let spec = random_scenario(3, &ScenarioOptions { fixed_g_max: Some(2), ..Default::default() }).unwrap();
        let net = InterferenceNetwork::empty(50).unwrap();
        let pop = generate_population(&spec, &net, &ExposureSpec::count(2), 8).unwrap();
        for u in &pop.units {
            assert_eq!(u.g, 0);
            assert_eq!(Some(u.y), u.potential_outcome(u.a, 0));
        }
        let m = configuration_conditional_measure(&pop, &spec).unwrap();
        assert!(m.atoms().iter().all(|a| a.g == 0));
    }

    #[test]
    fn population_is_deterministic_and_consistent() {
        let spec = random_scenario(5, &ScenarioOptions { fixed_g_max: Some(4), ..Default::default() }).unwrap();
        let net = generate_network(NetworkKind::Ring { k: 4 }, 60, 1).unwrap();
        let a = generate_population(&spec, &net, &ExposureSpec::count(4), 42).unwrap();
        let b = generate_population(&spec, &net, &ExposureSpec::count(4), 42).unwrap();
        assert_eq!(a, b);
        let treatments: Vec<u8> = a.units.iter().map(|u| u.a).collect();
        let g = neighborhood_exposures(&net, &treatments, &ExposureSpec::count(4)).unwrap();
        for (u, g) in a.units.iter().zip(g) {
            assert_eq!(u.g, g);
            assert_eq!(Some(u.y), u.potential_outcome(u.a, u.g));
            assert!(u.propensity > 0.0 && u.propensity < 1.0);
        }
    }

    #[test]
    fn overflow_outside_undefined_mode() {
        let spec = random_scenario(5, &ScenarioOptions { fixed_g_max: Some(1), ..Default::default() }).unwrap();
        let net = generate_network(NetworkKind::Star, 5, 0).unwrap();
        assert!(matches!(
            generate_population(&spec, &net, &ExposureSpec::count(1), 1),
            Err(Error::ExposureOverflow { count: 4, g_max: 1 })
        ));
        assert!(generate_population(&spec, &net, &ExposureSpec::count_clamped(1), 1).is_ok());
    }

    #[test]
    fn undefined_mode_stores_defined_levels_only() {
        let opts =
            ScenarioOptions { fixed_g_max: Some(4), degree_model: Some(DegreeModel::Ragged), ..Default::default() };
        let spec = random_scenario(2, &opts).unwrap();
        let net = generate_network(NetworkKind::Star, 5, 0).unwrap();
        let pop = generate_population(&spec, &net, &ExposureSpec::count(4), 3).unwrap();
        for u in &pop.units {
            for g in 0..5 {
                assert_eq!(u.potential_outcome(0, g).is_some(), g <= u.degree);
            }
            // monotone definedness: a defined level implies every lower one
            for g in 1..5 {
                if u.potential_outcome(1, g).is_some() {
                    assert!(u.potential_outcome(1, g - 1).is_some());
                }
            }
        }
    }

    #[test]
    fn ring_with_half_propensities() {
        let mut spec = random_scenario(1, &ScenarioOptions { fixed_g_max: Some(2), ..Default::default() }).unwrap();
        spec.propensity.values_mut().iter_mut().for_each(|p| *p = 0.5);
        let net = generate_network(NetworkKind::Ring { k: 2 }, 10, 0).unwrap();
        let pop = generate_population(&spec, &net, &ExposureSpec::count(2), 4).unwrap();
        let m = configuration_conditional_measure(&pop, &spec).unwrap();
        for unit in 0..10u32 {
            for g in 0..3u16 {
                let w: f64 = m.atoms().iter().filter(|a| a.unit == Some(unit) && a.g == g).map(|a| a.weight).sum();
                let expected = [0.25, 0.5, 0.25][g as usize] / 10.0;
                assert!((w - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn measure_weights_sum_to_one() {
        let spec = random_scenario(8, &ScenarioOptions { fixed_g_max: Some(20), ..Default::default() }).unwrap();
        let net = generate_network(NetworkKind::ErdosRenyi { p: 0.02 }, 300, 8).unwrap();
        assert!(net.max_degree() <= 20);
        let pop = generate_population(&spec, &net, &ExposureSpec::count(20), 8).unwrap();
        let m = configuration_conditional_measure(&pop, &spec).unwrap();
        let total = crate::numeric::sum(m.atoms().iter().map(|a| a.weight));
        assert!((total - 1.0).abs() <= 1e-12);
    }
}
