//! Interference networks and exposure mappings.
//!
//! A unit's neighbourhood exposure `G` is a discrete summary of its
//! neighbours' binary treatments. The same mapping applies to every unit; it
//! sees only how many neighbours there are and which of them are treated,
//! never who they are.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::sum;

/// Adjacency-list network in canonical form (sorted, no self-loops).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterferenceNetwork {
    adjacency: Vec<Vec<usize>>,
    directed: bool,
}

impl InterferenceNetwork {
    /// A network with `unit_count` isolated units.
    pub fn empty(unit_count: usize) -> Result<Self> {
        if unit_count == 0 {
            return Err(Error::InputDomain("unit_count must be positive".into()));
        }
        Ok(Self { adjacency: vec![Vec::new(); unit_count], directed: false })
    }

    /// Builds a network from an edge list.
    ///
    /// For undirected networks each edge is listed once and stored in both
    /// directions; duplicate edges collapse. For directed networks an edge
    /// `(src, dst)` makes `src` a neighbour of `dst`, i.e. `src`'s treatment
    /// reaches `dst`'s outcome.
    pub fn from_edges(unit_count: usize, edges: &[(usize, usize)], directed: bool) -> Result<Self> {
        let mut net = Self::empty(unit_count)?;
        net.directed = directed;
        for &(src, dst) in edges {
            if src >= unit_count || dst >= unit_count {
                return Err(Error::InputDomain(format!(
                    "edge ({src}, {dst}) references a unit outside [0, {unit_count})"
                )));
            }
            if src == dst {
                return Err(Error::InputDomain(format!("self-loop at unit {src}")));
            }
            net.adjacency[dst].push(src);
            if !directed {
                net.adjacency[src].push(dst);
            }
        }
        for nbrs in &mut net.adjacency {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        Ok(net)
    }

    /// Wraps an adjacency list, checking every invariant.
    pub fn from_adjacency(adjacency: Vec<Vec<usize>>, directed: bool) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::InputDomain("unit_count must be positive".into()));
        }
        for (i, nbrs) in adjacency.iter().enumerate() {
            for w in nbrs.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InputDomain(format!("neighbours of unit {i} are not strictly increasing")));
                }
            }
            for &j in nbrs {
                if j >= n {
                    return Err(Error::InputDomain(format!("unit {i} has out-of-range neighbour {j}")));
                }
                if j == i {
                    return Err(Error::InputDomain(format!("self-loop at unit {i}")));
                }
                if !directed && adjacency[j].binary_search(&i).is_err() {
                    return Err(Error::InputDomain(format!("undirected network is asymmetric between {i} and {j}")));
                }
            }
        }
        Ok(Self { adjacency, directed })
    }

    pub fn unit_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn neighbors(&self, unit: usize) -> &[usize] {
        &self.adjacency[unit]
    }

    pub fn degree(&self, unit: usize) -> usize {
        self.adjacency[unit].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edge list in canonical order. Undirected edges appear once with
    /// `src < dst`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (dst, nbrs) in self.adjacency.iter().enumerate() {
            for &src in nbrs {
                if self.directed || src < dst {
                    out.push((src, dst));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureKind {
    /// Number of treated neighbours.
    Count,
    /// Whether any neighbour is treated.
    Any,
    /// Whether at least `k` neighbours are treated.
    Threshold(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExposureSpec {
    kind: ExposureKind,
    g_max: usize,
    clamp: bool,
}

impl ExposureSpec {
    /// Count of treated neighbours, levels `0..=g_max`. Counts above `g_max`
    /// are an error.
    pub fn count(g_max: usize) -> Self {
        Self { kind: ExposureKind::Count, g_max, clamp: false }
    }

    /// Count of treated neighbours with counts above `g_max` clamped to it.
    pub fn count_clamped(g_max: usize) -> Self {
        Self { kind: ExposureKind::Count, g_max, clamp: true }
    }

    pub fn any() -> Self {
        Self { kind: ExposureKind::Any, g_max: 1, clamp: false }
    }

    pub fn threshold(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InputDomain("threshold k must be at least 1".into()));
        }
        Ok(Self { kind: ExposureKind::Threshold(k), g_max: 1, clamp: false })
    }

    pub fn kind(&self) -> ExposureKind {
        self.kind
    }

    pub fn g_max(&self) -> usize {
        self.g_max
    }

    pub fn clamps(&self) -> bool {
        self.clamp
    }

    fn level_of_count(&self, count: usize) -> Result<usize> {
        match self.kind {
            ExposureKind::Count => {
                if count <= self.g_max {
                    Ok(count)
                } else if self.clamp {
                    Ok(self.g_max)
                } else {
                    Err(Error::ExposureOverflow { count, g_max: self.g_max })
                }
            }
            ExposureKind::Any => Ok(usize::from(count >= 1)),
            ExposureKind::Threshold(k) => Ok(usize::from(count >= k)),
        }
    }
}

/// Exposure level for one unit given its neighbours' treatments.
pub fn exposure_value(spec: &ExposureSpec, neighbor_treatments: &[u8]) -> Result<usize> {
    let mut count = 0usize;
    for (idx, &t) in neighbor_treatments.iter().enumerate() {
        match t {
            0 => {}
            1 => count += 1,
            other => {
                return Err(Error::InputDomain(format!("treatment at position {idx} is {other}, expected 0 or 1")))
            }
        }
    }
    spec.level_of_count(count)
}

/// Exposure level of every unit. Isolated units get level 0.
pub fn neighborhood_exposures(
    network: &InterferenceNetwork,
    treatments: &[u8],
    spec: &ExposureSpec,
) -> Result<Vec<usize>> {
    if treatments.len() != network.unit_count() {
        return Err(Error::InputDomain(format!("{} treatments for {} units", treatments.len(), network.unit_count())));
    }
    if let Some(pos) = treatments.iter().position(|&t| t > 1) {
        return Err(Error::InputDomain(format!("treatment of unit {pos} is {}, expected 0 or 1", treatments[pos])));
    }
    let mut buf = Vec::new();
    (0..network.unit_count())
        .map(|i| {
            buf.clear();
            buf.extend(network.neighbors(i).iter().map(|&j| treatments[j]));
            exposure_value(spec, &buf)
        })
        .collect()
}

fn check_probabilities(probabilities: &[f64]) -> Result<()> {
    for (idx, &p) in probabilities.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InputDomain(format!("probability at position {idx} is {p}, outside [0, 1]")));
        }
    }
    Ok(())
}

/// Exact pmf of a sum of independent Bernoulli draws, by iterative
/// convolution. Length is `probabilities.len() + 1`.
pub fn poisson_binomial_pmf(probabilities: &[f64]) -> Result<Vec<f64>> {
    check_probabilities(probabilities)?;
    let mut pmf = Vec::with_capacity(probabilities.len() + 1);
    pmf.push(1.0);
    for &p in probabilities {
        let q = 1.0 - p;
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * q + pmf[k - 1] * p;
        }
        pmf[0] *= q;
    }
    Ok(pmf)
}

/// Distribution of the exposure level over `0..=g_max` when each neighbour is
/// treated independently with the given probability.
pub fn exposure_distribution(spec: &ExposureSpec, neighbor_propensities: &[f64]) -> Result<Vec<f64>> {
    let counts = poisson_binomial_pmf(neighbor_propensities)?;
    let mut out = vec![0.0; spec.g_max + 1];
    match spec.kind {
        ExposureKind::Count => {
            let overflow = sum(counts.iter().skip(spec.g_max + 1).copied());
            if overflow > 0.0 && !spec.clamp {
                return Err(Error::ExposureOverflow { count: counts.len() - 1, g_max: spec.g_max });
            }
            for (k, &mass) in counts.iter().enumerate() {
                out[k.min(spec.g_max)] += mass;
            }
        }
        ExposureKind::Any | ExposureKind::Threshold(_) => {
            let k = match spec.kind {
                ExposureKind::Threshold(k) => k,
                _ => 1,
            };
            let hit = sum(counts.iter().skip(k).copied());
            let miss = sum(counts.iter().take(k).copied());
            out[0] = miss;
            out[1] = hit;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    // Brute-force pmf of the count of ones over all 2^n joint outcomes.
    fn brute_force_counts(ps: &[f64]) -> Vec<f64> {
        let n = ps.len();
        let mut out = vec![0.0; n + 1];
        for mask in 0u32..(1 << n) {
            let mut w = 1.0;
            for (i, &p) in ps.iter().enumerate() {
                w *= if mask >> i & 1 == 1 { p } else { 1.0 - p };
            }
            out[mask.count_ones() as usize] += w;
        }
        out
    }

    #[test]
    fn exposure_value_examples() {
        assert_eq!(exposure_value(&ExposureSpec::count(3), &[1, 0, 1]).unwrap(), 2);
        assert_eq!(exposure_value(&ExposureSpec::any(), &[0, 0, 0]).unwrap(), 0);
        let t2 = ExposureSpec::threshold(2).unwrap();
        assert_eq!(exposure_value(&t2, &[1, 1, 0, 1]).unwrap(), 1);
        for spec in [ExposureSpec::count(2), ExposureSpec::any(), t2] {
            assert_eq!(exposure_value(&spec, &[]).unwrap(), 0);
        }
    }

    #[test]
    fn exposure_value_errors() {
        assert!(matches!(exposure_value(&ExposureSpec::count(3), &[1, 2]), Err(Error::InputDomain(_))));
        assert_eq!(
            exposure_value(&ExposureSpec::count(1), &[1, 1, 1]),
            Err(Error::ExposureOverflow { count: 3, g_max: 1 })
        );
        assert_eq!(exposure_value(&ExposureSpec::count_clamped(1), &[1, 1, 1]).unwrap(), 1);
        assert!(ExposureSpec::threshold(0).is_err());
    }

    #[test]
    fn neighborhood_exposure_examples() {
        let cycle = InterferenceNetwork::from_edges(3, &[(0, 1), (1, 2), (2, 0)], false).unwrap();
        let spec = ExposureSpec::count(2);
        assert_eq!(neighborhood_exposures(&cycle, &[1, 1, 0], &spec).unwrap(), [1, 1, 2]);
        assert_eq!(neighborhood_exposures(&cycle, &[0, 0, 0], &spec).unwrap(), [0, 0, 0]);

        let star = InterferenceNetwork::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)], false).unwrap();
        let g = neighborhood_exposures(&star, &[0, 1, 1, 1, 1], &ExposureSpec::count(4)).unwrap();
        assert_eq!(g, [4, 0, 0, 0, 0]);

        assert!(neighborhood_exposures(&cycle, &[1, 0], &spec).is_err());
    }

    #[test]
    fn isolated_units_get_zero() {
        let net = InterferenceNetwork::from_edges(4, &[(0, 1)], false).unwrap();
        let g = neighborhood_exposures(&net, &[1, 1, 1, 1], &ExposureSpec::count(1)).unwrap();
        assert_eq!(g, [1, 1, 0, 0]);
    }

    #[test]
    fn network_invariants() {
        assert!(InterferenceNetwork::from_edges(3, &[(0, 0)], false).is_err());
        assert!(InterferenceNetwork::from_edges(3, &[(0, 3)], false).is_err());
        assert!(InterferenceNetwork::from_adjacency(vec![vec![1], vec![]], false).is_err());
        assert!(InterferenceNetwork::from_adjacency(vec![vec![1], vec![]], true).is_ok());
        assert!(InterferenceNetwork::from_adjacency(vec![vec![2, 1], vec![0], vec![0]], false).is_err());
        let net = InterferenceNetwork::from_edges(3, &[(2, 0), (0, 2), (1, 2)], false).unwrap();
        assert_eq!(net.edges(), [(0, 2), (1, 2)]);
        assert_eq!(net.neighbors(2), [0, 1]);
        let directed = InterferenceNetwork::from_edges(3, &[(0, 1)], true).unwrap();
        assert_eq!(directed.neighbors(1), [0]);
        assert!(directed.neighbors(0).is_empty());
        assert_eq!(directed.edges(), [(0, 1)]);
    }

    #[test]
    fn poisson_binomial_examples() {
        assert!(close(&poisson_binomial_pmf(&[0.5, 0.5]).unwrap(), &[0.25, 0.5, 0.25], 1e-15));
        assert_eq!(poisson_binomial_pmf(&[]).unwrap(), [1.0]);
        let oracle = brute_force_counts(&[0.2, 0.7]);
        assert!(close(&oracle, &[0.24, 0.62, 0.14], 1e-15));
        assert!(close(&poisson_binomial_pmf(&[0.2, 0.7]).unwrap(), &oracle, 1e-15));
        assert!(poisson_binomial_pmf(&[0.2, 1.5]).is_err());
        assert!(poisson_binomial_pmf(&[f64::NAN]).is_err());
    }

    #[test]
    fn exposure_distribution_examples() {
        assert!(close(&exposure_distribution(&ExposureSpec::any(), &[0.5]).unwrap(), &[0.5, 0.5], 1e-15));
        let oracle = brute_force_counts(&[0.2, 0.7]);
        let d = exposure_distribution(&ExposureSpec::count(2), &[0.2, 0.7]).unwrap();
        assert!(close(&d, &oracle, 1e-15));

        let three = brute_force_counts(&[0.5, 0.5, 0.5]);
        let at_least_two = three[2] + three[3];
        let t2 = ExposureSpec::threshold(2).unwrap();
        let d = exposure_distribution(&t2, &[0.5, 0.5, 0.5]).unwrap();
        assert!(close(&d, &[1.0 - at_least_two, at_least_two], 1e-15));
        assert!(close(&d, &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn count_distribution_overflow_and_folding() {
        let ps = [0.3, 0.6, 0.9];
        assert!(matches!(exposure_distribution(&ExposureSpec::count(1), &ps), Err(Error::ExposureOverflow { .. })));
        let oracle = brute_force_counts(&ps);
        let folded = exposure_distribution(&ExposureSpec::count_clamped(1), &ps).unwrap();
        assert!(close(&folded, &[oracle[0], oracle[1] + oracle[2] + oracle[3]], 1e-15));
        // zero probability neighbours never push mass above g_max
        let d = exposure_distribution(&ExposureSpec::count(1), &[0.4, 0.0, 0.0]).unwrap();
        assert!(close(&d, &[0.6, 0.4], 1e-15));
    }

    #[test]
    fn isolated_unit_distribution_is_point_mass() {
        assert_eq!(exposure_distribution(&ExposureSpec::count(3), &[]).unwrap(), [1.0, 0.0, 0.0, 0.0]);
    }

    fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut choose = 1.0f64;
        for k in 0..=n {
            if k > 0 {
                choose = choose * (n - k + 1) as f64 / k as f64;
            }
            out.push(choose * libm::pow(p, k as f64) * libm::pow(1.0 - p, (n - k) as f64));
        }
        out
    }

    proptest! {
        #[test]
        fn equal_probabilities_give_binomial(n in 0usize..60, p in 0.0f64..=1.0) {
            let pb = poisson_binomial_pmf(&vec![p; n]).unwrap();
            prop_assert!(close(&pb, &binomial_pmf(n, p), 1e-12));
        }

        #[test]
        fn pmf_is_normalized_and_nonnegative(ps in proptest::collection::vec(0.0f64..=1.0, 0..200)) {
            let pmf = poisson_binomial_pmf(&ps).unwrap();
            prop_assert_eq!(pmf.len(), ps.len() + 1);
            prop_assert!(pmf.iter().all(|&x| x >= 0.0));
            prop_assert!((sum(pmf.iter().copied()) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn pmf_matches_brute_force(ps in proptest::collection::vec(0.0f64..=1.0, 0..10)) {
            prop_assert!(close(&poisson_binomial_pmf(&ps).unwrap(), &brute_force_counts(&ps), 1e-13));
        }

        #[test]
        fn exposure_value_is_permutation_invariant(
            bits in proptest::collection::vec(0u8..=1, 0..12),
            seed in any::<u64>(),
            k in 1usize..4,
        ) {
            let mut shuffled = bits.clone();
            // deterministic Fisher-Yates from the seed
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            for spec in [ExposureSpec::count(12), ExposureSpec::any(), ExposureSpec::threshold(k).unwrap()] {
                prop_assert_eq!(exposure_value(&spec, &bits).unwrap(), exposure_value(&spec, &shuffled).unwrap());
            }
        }
    }
}
