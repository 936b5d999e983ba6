//! Edge-list CSV with header `src,dst` and zero-based unit indices.
//! Undirected networks list each edge once.

use std::path::Path;

use serde::Deserialize;
use spillsense_core::graph::InterferenceNetwork;

use crate::error::{Failure, FailureResult};
use crate::io::{csv_bytes, read_bytes, write_atomic};

#[derive(Debug, Deserialize)]
struct EdgeRow {
    src: usize,
    dst: usize,
}

/// Parses an edge list. The unit count defaults to one past the largest
/// index; pass it explicitly when trailing units are isolated.
pub fn parse_network(
    path: &Path,
    bytes: &[u8],
    unit_count: Option<usize>,
    directed: bool,
) -> FailureResult<InterferenceNetwork> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = reader.headers().map_err(|e| Failure::parse(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["src", "dst"] {
        return Err(Failure::parse(
            path,
            format!("expected header `src,dst`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut edges = Vec::new();
    for (line, row) in reader.deserialize::<EdgeRow>().enumerate() {
        let row = row.map_err(|e| Failure::parse(path, format!("row {}: {e}", line + 1)))?;
        edges.push((row.src, row.dst));
    }
    let inferred = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let n = match unit_count {
        Some(n) if n < inferred => {
            return Err(Failure::parse(path, format!("edge index {} is out of range for {n} units", inferred - 1)))
        }
        Some(n) => n,
        None => inferred,
    };
    InterferenceNetwork::from_edges(n, &edges, directed).map_err(|e| Failure::parse(path, e))
}

pub fn load_network(path: &Path, unit_count: Option<usize>, directed: bool) -> FailureResult<InterferenceNetwork> {
    parse_network(path, &read_bytes(path)?, unit_count, directed)
}

pub fn network_csv(network: &InterferenceNetwork) -> FailureResult<Vec<u8>> {
    csv_bytes(&["src", "dst"], network.edges().into_iter().map(|(a, b)| vec![a.to_string(), b.to_string()]))
}

pub fn save_network(path: &Path, network: &InterferenceNetwork) -> FailureResult<()> {
    write_atomic(path, &network_csv(network)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use spillsense_core::simulate::{generate_network, NetworkKind};

    #[test]
    fn round_trip_keeps_adjacency() {
        let net = generate_network(NetworkKind::ErdosRenyi { p: 0.05 }, 60, 3).unwrap();
        let bytes = network_csv(&net).unwrap();
        let back = parse_network(Path::new("mem.csv"), &bytes, Some(60), false).unwrap();
        for i in 0..60 {
            assert_eq!(back.neighbors(i), net.neighbors(i));
        }
    }

    #[test]
    fn header_and_range_are_checked() {
        let p = Path::new("x.csv");
        assert!(parse_network(p, b"a,b\n0,1\n", None, false).is_err());
        assert!(parse_network(p, b"src,dst\n0,5\n", Some(3), false).is_err());
        assert!(parse_network(p, b"src,dst\n0,x\n", None, false).is_err());
        assert_eq!(parse_network(p, b"src,dst\n0,1\n", Some(4), false).unwrap().unit_count(), 4);
    }
}
