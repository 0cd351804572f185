//! Connectome edge lists and their conversion into coupling matrices.
//!
//! Edge-list text format (UTF-8):
//!
//! ```text
//! # comment lines are ignored
//! pre_id,post_id,synapse_count
//! 5813021291,1078693835,112
//! ```
//!
//! An edge `pre -> post` becomes the entry `M[post, pre]`, so that row `i` of
//! `M r` collects the input neuron `i` receives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use super::{AdjacencyMatrix, CsrMatrix, Provenance};
use crate::seeding::rng_from_seed;
use crate::{Error, Result};

pub const EDGE_LIST_HEADER: &str = "pre_id,post_id,synapse_count";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub pre: String,
    pub post: String,
    pub synapse_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConnectomeEdgeList {
    pub source_id: String,
    pub edges: Vec<Edge>,
}

impl ConnectomeEdgeList {
    pub fn new(source_id: impl Into<String>, edges: Vec<Edge>) -> Self {
        Self { source_id: source_id.into(), edges }
    }

    /// Convenience constructor from `(pre, post, count)` tuples.
    pub fn from_tuples(source_id: &str, edges: &[(&str, &str, u64)]) -> Self {
        Self::new(
            source_id,
            edges
                .iter()
                .map(|(a, b, c)| Edge { pre: a.to_string(), post: b.to_string(), synapse_count: *c })
                .collect(),
        )
    }

    pub fn parse(source_id: &str, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields != ["pre_id", "post_id", "synapse_count"] {
                    return Err(Error::Format {
                        line: line_no,
                        reason: format!("expected header `{EDGE_LIST_HEADER}`"),
                    });
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Format { line: line_no, reason: format!("expected 3 fields, found {}", fields.len()) });
            }
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(Error::Format { line: line_no, reason: "empty node label".into() });
            }
            let count: i64 = fields[2].parse().map_err(|_| Error::Format {
                line: line_no,
                reason: format!("synapse count `{}` is not an integer", fields[2]),
            })?;
            if count < 1 {
                return Err(Error::Format { line: line_no, reason: format!("synapse count {count} must be positive") });
            }
            edges.push(Edge { pre: fields[0].to_string(), post: fields[1].to_string(), synapse_count: count as u64 });
        }
        if !seen_header {
            return Err(Error::Format { line: 0, reason: format!("missing header `{EDGE_LIST_HEADER}`") });
        }
        Ok(Self::new(source_id, edges))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let source = path.file_stem().and_then(|s| s.to_str()).unwrap_or("connectome");
        Self::parse(source, &text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# source: {}", self.source_id).unwrap();
        writeln!(out, "{EDGE_LIST_HEADER}").unwrap();
        for e in &self.edges {
            writeln!(out, "{},{},{}", e.pre, e.post, e.synapse_count).unwrap();
        }
        out
    }

    /// Duplicate `(pre, post)` pairs summed.
    pub fn merged(&self) -> BTreeMap<(String, String), u64> {
        let mut merged = BTreeMap::new();
        for e in &self.edges {
            *merged.entry((e.pre.clone(), e.post.clone())).or_insert(0) += e.synapse_count;
        }
        merged
    }

    /// Merged edges whose count reaches `threshold`.
    pub fn surviving(&self, threshold: u64) -> BTreeMap<(String, String), u64> {
        self.merged().into_iter().filter(|(_, c)| *c >= threshold).collect()
    }
}

/// Thresholds, relabels and weights a connectome edge list.
///
/// Merged counts below `synapse_threshold` are dropped. Surviving nodes are
/// indexed in sorted label order. Counts map linearly onto `[-1, 1]` (minimum
/// to -1, maximum to +1, everything to 0 when they coincide) and self-loops are
/// removed.
pub fn ingest_connectome(edges: &ConnectomeEdgeList, synapse_threshold: u64) -> Result<AdjacencyMatrix> {
    if synapse_threshold == 0 {
        return Err(Error::invalid("synapse_threshold", "must be a positive integer"));
    }
    if edges.edges.iter().any(|e| e.synapse_count == 0) {
        return Err(Error::Format { line: 0, reason: "synapse counts must be positive".into() });
    }
    if edges.edges.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let surviving = edges.surviving(synapse_threshold);
    if surviving.is_empty() {
        return Err(Error::EmptyNetwork);
    }

    let labels: Vec<String> = surviving
        .keys()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();

    let min = *surviving.values().min().unwrap() as f64;
    let max = *surviving.values().max().unwrap() as f64;
    let weight = |c: u64| if max > min { -1.0 + 2.0 * (c as f64 - min) / (max - min) } else { 0.0 };

    let triplets: Vec<(usize, usize, f64)> = surviving
        .iter()
        .filter(|((pre, post), _)| pre != post)
        .map(|((pre, post), c)| (index[post.as_str()], index[pre.as_str()], weight(*c)))
        .collect();

    let n = labels.len();
    let m = AdjacencyMatrix::new(
        CsrMatrix::from_triplets(n, triplets),
        Provenance::Connectome { source_id: edges.source_id.clone(), synapse_threshold },
    )?;
    Ok(m.with_labels(labels))
}

/// Parameters of the deterministic connectome-like graph generator used to
/// build test fixtures when no real connectome export is available.
///
/// Neurons carry a log-normal "hub" factor; a directed pair connects with
/// probability proportional to the product of the two factors and its synapse
/// count is log-normal, scaled by the same product. A fraction of edges is
/// split across two rows (as when a connection spans several sub-regions) and a
/// few autapses are added.
#[derive(Clone, Debug)]
pub struct SyntheticConnectomeSpec {
    pub neurons: usize,
    pub mean_out_degree: f64,
    pub hub_sigma: f64,
    pub median_synapses: f64,
    pub synapse_sigma: f64,
    pub split_fraction: f64,
    pub autapse_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConnectomeSpec {
    fn default() -> Self {
        Self {
            neurons: 441,
            mean_out_degree: 40.0,
            hub_sigma: 0.5,
            median_synapses: 14.0,
            synapse_sigma: 0.9,
            split_fraction: 0.05,
            autapse_fraction: 0.02,
            seed: 2023,
        }
    }
}

pub fn synthetic_connectome(spec: &SyntheticConnectomeSpec) -> Result<ConnectomeEdgeList> {
    if spec.neurons < 2 {
        return Err(Error::invalid("neurons", "need at least two neurons"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let hub_dist = LogNormal::new(0.0, spec.hub_sigma).map_err(|e| Error::invalid("hub_sigma", e.to_string()))?;
    let syn_dist = LogNormal::new(spec.median_synapses.ln(), spec.synapse_sigma)
        .map_err(|e| Error::invalid("synapse_sigma", e.to_string()))?;

    let mut labels = BTreeSet::new();
    while labels.len() < spec.neurons {
        labels.insert(rng.random_range(1_000_000_000u64..6_000_000_000u64).to_string());
    }
    let labels: Vec<String> = labels.into_iter().collect();
    let hubs: Vec<f64> = (0..spec.neurons).map(|_| hub_dist.sample(&mut rng)).collect();
    let mean_hub_sq = {
        let m = hubs.iter().sum::<f64>() / hubs.len() as f64;
        m * m
    };
    let base_p = spec.mean_out_degree / (spec.neurons - 1) as f64;

    let mut edges = Vec::new();
    for i in 0..spec.neurons {
        for j in 0..spec.neurons {
            let affinity = hubs[i] * hubs[j] / mean_hub_sq;
            if i == j {
                if rng.random::<f64>() < spec.autapse_fraction {
                    let count = 50 + rng.random_range(0..150u64);
                    edges.push(Edge { pre: labels[i].clone(), post: labels[j].clone(), synapse_count: count });
                }
                continue;
            }
            if rng.random::<f64>() >= (base_p * affinity).min(1.0) {
                continue;
            }
            let count = (syn_dist.sample(&mut rng) * affinity.sqrt()).round().max(1.0) as u64;
            if count >= 2 && rng.random::<f64>() < spec.split_fraction {
                let first = rng.random_range(1..count);
                edges.push(Edge { pre: labels[i].clone(), post: labels[j].clone(), synapse_count: first });
                edges.push(Edge { pre: labels[i].clone(), post: labels[j].clone(), synapse_count: count - first });
            } else {
                edges.push(Edge { pre: labels[i].clone(), post: labels[j].clone(), synapse_count: count });
            }
        }
    }
    Ok(ConnectomeEdgeList::new(format!("synthetic-{}", spec.seed), edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_interpolation_maps_to_zero() {
        let edges = ConnectomeEdgeList::from_tuples("t", &[("a", "b", 100), ("b", "a", 49)]);
        let m = ingest_connectome(&edges, 50).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.entries().nnz(), 1);
        // a -> b lands in row b, column a.
        assert_eq!(m.entries().get(1, 0), 0.0);
        assert_eq!(m.labels(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn min_max_interpolation() {
        let edges = ConnectomeEdgeList::from_tuples("t", &[("a", "b", 50), ("b", "c", 150), ("c", "a", 100)]);
        let m = ingest_connectome(&edges, 50).unwrap();
        let e = m.entries();
        assert_eq!(e.get(1, 0), -1.0);
        assert_eq!(e.get(2, 1), 1.0);
        assert_eq!(e.get(0, 2), 0.0);
    }

    #[test]
    fn self_loop_only_gives_zero_matrix() {
        let edges = ConnectomeEdgeList::from_tuples("t", &[("a", "a", 999)]);
        let m = ingest_connectome(&edges, 50).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.entries().nnz(), 0);
        assert_eq!(m.spectral_radius(), 0.0);
    }

    #[test]
    fn nothing_survives() {
        let edges = ConnectomeEdgeList::from_tuples("t", &[("a", "b", 10)]);
        assert!(matches!(ingest_connectome(&edges, 50), Err(Error::EmptyNetwork)));
        assert!(matches!(ingest_connectome(&ConnectomeEdgeList::default(), 50), Err(Error::EmptyNetwork)));
    }

    #[test]
    fn duplicates_merge_before_threshold() {
        let edges = ConnectomeEdgeList::from_tuples("t", &[("a", "b", 30), ("a", "b", 30), ("b", "c", 60)]);
        let m = ingest_connectome(&edges, 50).unwrap();
        assert_eq!(m.entries().nnz(), 2);
        // merged 60 ties with 60: degenerate map
        assert_eq!(m.entries().get(1, 0), 0.0);
    }

    #[test]
    fn parse_rejects_bad_rows() {
        let ok = ConnectomeEdgeList::parse("t", "# connectome export\npre_id,post_id,synapse_count\na,b,3\n\n# x\nb,c,4\n").unwrap();
        assert_eq!(ok.edges.len(), 2);
        match ConnectomeEdgeList::parse("t", "pre_id,post_id,synapse_count\na,b,0\n") {
            Err(Error::Format { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(ConnectomeEdgeList::parse("t", "pre_id,post_id,synapse_count\na,b,-4\n"), Err(Error::Format { line: 2, .. })));
        assert!(matches!(ConnectomeEdgeList::parse("t", "a,b,3\n"), Err(Error::Format { line: 1, .. })));
        assert!(matches!(ConnectomeEdgeList::parse("t", "pre_id,post_id,synapse_count\na,b\n"), Err(Error::Format { line: 2, .. })));
    }

    #[test]
    fn csv_round_trip() {
        let edges = ConnectomeEdgeList::from_tuples("fixture", &[("1", "2", 7), ("2", "1", 70)]);
        let back = ConnectomeEdgeList::parse("fixture", &edges.to_csv()).unwrap();
        assert_eq!(back, edges);
    }

    #[test]
    fn synthetic_generator_is_deterministic() {
        let spec = SyntheticConnectomeSpec { neurons: 40, ..Default::default() };
        let a = synthetic_connectome(&spec).unwrap();
        let b = synthetic_connectome(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.edges.iter().all(|e| e.synapse_count >= 1));
    }
}
