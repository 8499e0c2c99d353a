//! Carrier route networks: betweenness centrality, hubs and hub distances.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::NetworkError;

pub const DEFAULT_HUB_THRESHOLD: f64 = 0.1;
pub const EARTH_RADIUS_MILES: f64 = 3958.7613;

/// Undirected, unweighted airport graph of one carrier in one period.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierNetwork {
    pub carrier: String,
    pub period: String,
    /// Sorted airport codes.
    pub nodes: Vec<String>,
    /// Sorted neighbour indices per node.
    pub adjacency: Vec<Vec<usize>>,
}

impl CarrierNetwork {
    /// Builds the graph from served segments; direction and duplicates are
    /// ignored, self-loops dropped.
    pub fn from_edges<'a, I>(carrier: &str, period: &str, edges: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut set: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (a, b) in edges {
            set.entry(a).or_default();
            set.entry(b).or_default();
            if a != b {
                set.get_mut(a).unwrap().insert(b);
                set.get_mut(b).unwrap().insert(a);
            }
        }
        let nodes: Vec<String> = set.keys().map(|s| s.to_string()).collect();
        let index: BTreeMap<&str, usize> = set.keys().enumerate().map(|(i, k)| (*k, i)).collect();
        let adjacency = set.values().map(|nb| nb.iter().map(|n| index[n]).collect()).collect();
        CarrierNetwork {
            carrier: carrier.to_string(),
            period: period.to_string(),
            nodes,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, airport: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(airport)).ok()
    }

    /// Betweenness of every node, in node order.
    pub fn betweenness(&self) -> Result<Vec<f64>, NetworkError> {
        betweenness(&self.adjacency)
    }

    /// Centrality keyed by airport.
    pub fn centrality(&self) -> Result<BTreeMap<String, f64>, NetworkError> {
        Ok(self.nodes.iter().cloned().zip(self.betweenness()?).collect())
    }
}

/// Normalized betweenness by Brandes' accumulation with exact integer path
/// counts. Each ordered pair (s, t) contributes σ_st(v)/σ_st to every inner
/// node v, scaled by 1/((N−1)(N−2)); unreachable pairs contribute nothing.
pub fn betweenness(adjacency: &[Vec<usize>]) -> Result<Vec<f64>, NetworkError> {
    let n = adjacency.len();
    if n < 3 {
        return Err(NetworkError::TooFewNodes(n));
    }
    let mut cb = vec![0.0; n];
    let mut sigma = vec![0u128; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0; n];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        sigma.fill(0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        pred.iter_mut().for_each(Vec::clear);
        order.clear();
        sigma[s] = 1;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adjacency[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    pred[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &pred[w] {
                delta[v] += (sigma[v] as f64 / sigma[w] as f64) * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
    Ok(cb.into_iter().map(|c| c * scale).collect())
}

/// Airports with centrality at or above `threshold`.
pub fn hubs(centrality: &BTreeMap<String, f64>, threshold: f64) -> BTreeSet<String> {
    centrality
        .iter()
        .filter(|(_, &b)| b >= threshold)
        .map(|(k, _)| k.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

/// Great-circle distance in miles.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
}

/// Distance from `origin` and `dest` to the nearest hub, summed. `None` when
/// the hub set is empty.
pub fn hub_distance(
    origin: &str,
    dest: &str,
    hubs: &BTreeSet<String>,
    coords: &BTreeMap<String, LatLon>,
) -> Result<Option<f64>, NetworkError> {
    if hubs.is_empty() {
        return Ok(None);
    }
    let loc = |a: &str| coords.get(a).copied().ok_or_else(|| NetworkError::UnknownAirport(a.to_string()));
    let nearest = |a: &str| -> Result<f64, NetworkError> {
        let p = loc(a)?;
        hubs.iter()
            .map(|h| loc(h).map(|q| haversine(p, q)))
            .try_fold(f64::INFINITY, |m, d| d.map(|d| m.min(d)))
    };
    Ok(Some(nearest(origin)? + nearest(dest)?))
}

/// Smallest available distance across a carrier group (e.g. all LCCs).
pub fn aggregate_min<I: IntoIterator<Item = Option<f64>>>(distances: I) -> Option<f64> {
    distances.into_iter().flatten().reduce(f64::min)
}

/// Replica of the illustrative five-airport core with pendant airports; hubs
/// at threshold 0.1 are DFW, CLT and LAX. ORD carries no pendant: with one,
/// its centrality would be 0.179.
pub fn illustrative_network() -> CarrierNetwork {
    let edges = [
        ("DFW", "CLT"),
        ("DFW", "JFK"),
        ("DFW", "ORD"),
        ("CLT", "JFK"),
        ("JFK", "ORD"),
        ("DFW", "LAX"),
        ("ORD", "LAX"),
        ("LAX", "SFO"),
        ("LAX", "SAN"),
        ("LAX", "SEA"),
        ("CLT", "CHO"),
        ("CLT", "RDU"),
        ("CLT", "GSO"),
        ("DFW", "PHX"),
        ("DFW", "AUS"),
    ];
    CarrierNetwork::from_edges("AA", "illustrative", edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_center_is_one() {
        let g = CarrierNetwork::from_edges("X", "p", [("C", "A"), ("C", "B"), ("C", "D")]);
        let c = g.centrality().unwrap();
        assert!((c["C"] - 1.0).abs() < 1e-15);
        assert_eq!(c["A"], 0.0);
    }

    #[test]
    fn too_few_nodes() {
        let g = CarrierNetwork::from_edges("X", "p", [("A", "B")]);
        assert_eq!(g.betweenness(), Err(NetworkError::TooFewNodes(2)));
    }

    #[test]
    fn illustrative_hubs() {
        let g = illustrative_network();
        let c = g.centrality().unwrap();
        assert_eq!(c["CHO"], 0.0);
        assert_eq!(c["PHX"], 0.0);
        let h: Vec<String> = hubs(&c, DEFAULT_HUB_THRESHOLD).into_iter().collect();
        assert_eq!(h, vec!["CLT", "DFW", "LAX"]);
        assert!(hubs(&c, 1.01).is_empty());
        assert_eq!(hubs(&c, 0.0).len(), g.len());
    }

    #[test]
    fn haversine_values() {
        let jfk = LatLon { lat: 40.6413, lon: -73.7781 };
        let lax = LatLon { lat: 33.9416, lon: -118.4085 };
        assert_eq!(haversine(jfk, jfk), 0.0);
        assert!((haversine(jfk, lax) - 2470.0).abs() < 5.0);
        let anti = haversine(LatLon { lat: 0.0, lon: 0.0 }, LatLon { lat: 0.0, lon: 180.0 });
        assert!((anti - std::f64::consts::PI * EARTH_RADIUS_MILES).abs() < 1e-6);
    }

    #[test]
    fn hub_distance_cases() {
        let coords: BTreeMap<String, LatLon> = [("A", 0.0, 0.0), ("B", 0.0, 1.0), ("C", 1.0, 0.0)]
            .iter()
            .map(|(k, la, lo)| (k.to_string(), LatLon { lat: *la, lon: *lo }))
            .collect();
        let hubs: BTreeSet<String> = ["A", "B"].iter().map(|s| s.to_string()).collect();
        assert_eq!(hub_distance("A", "B", &hubs, &coords).unwrap(), Some(0.0));
        assert_eq!(hub_distance("A", "B", &BTreeSet::new(), &coords).unwrap(), None);
        let d = hub_distance("C", "A", &hubs, &coords).unwrap().unwrap();
        let expect = haversine(coords["C"], coords["A"]);
        assert!((d - expect).abs() < 1e-12);
        assert_eq!(aggregate_min([Some(3.0), None, Some(1.5)]), Some(1.5));
        assert_eq!(aggregate_min([None, None]), None);
    }
}
