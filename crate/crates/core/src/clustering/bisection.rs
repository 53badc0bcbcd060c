//! Recursive spectral bisection on the Fiedler vector.

use serde::{Deserialize, Serialize};

use super::validity::silhouette;
use super::ClusterAssignment;
use crate::error::{Error, Result};
use crate::spectral::SpectralGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BisectionStrategy {
    /// Split induced subgraphs at the sign of their own Fiedler vector,
    /// choosing at each step the split with the best average silhouette.
    #[default]
    Recursive,
    /// Cut the sorted global Fiedler vector at its `k - 1` widest gaps.
    GlobalGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    /// Working id of the split cluster. The root is 1; a split keeps the
    /// parent id for its nonnegative side and gives the other side the next id.
    pub cluster: usize,
    pub size_a: usize,
    pub size_b: usize,
    /// Fiedler-coordinate cut point (0 for subgraph sign splits).
    pub threshold: f64,
    /// Average silhouette of the partition after this step.
    pub avg_silhouette: f64,
}

/// Split `members` by the sign of the Fiedler vector of their induced subgraph:
/// nonnegative entries form the first part.
pub fn fiedler_bisect(graph: &SpectralGraph, members: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if members.len() < 2 {
        return Err(Error::Parameter(format!(
            "bisection needs at least 2 members, got {}",
            members.len()
        )));
    }
    if let Some(&bad) = members.iter().find(|&&m| m >= graph.len()) {
        return Err(Error::Parameter(format!("member {bad} is outside the graph")));
    }
    let sub = graph.induced(members)?;
    let map = sub.eigenmap()?;
    let fiedler = map.fiedler().expect("at least two vertices");
    let (a, b): (Vec<(usize, f64)>, Vec<(usize, f64)>) = members
        .iter()
        .copied()
        .zip(fiedler.iter().copied())
        .partition(|&(_, v)| v >= 0.0);
    if a.is_empty() || b.is_empty() {
        return Err(Error::Unsplittable {
            reason: format!("Fiedler vector of a {}-member subgraph is one-signed", members.len()),
            partial_trace: Vec::new(),
        });
    }
    Ok((a.into_iter().map(|p| p.0).collect(), b.into_iter().map(|p| p.0).collect()))
}

fn labels_of(clusters: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut labels = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            labels[i] = c + 1;
        }
    }
    labels
}

fn short_trace(trace: &[BisectionStep]) -> Vec<(usize, usize, usize)> {
    trace.iter().map(|s| (s.cluster, s.size_a, s.size_b)).collect()
}

/// Partition the graph into `k` clusters by `k - 1` bisections.
///
/// Final labels run from 1 and are ordered by descending mean of the global
/// Fiedler coordinate.
pub fn recursive_bisection(
    graph: &SpectralGraph,
    k: usize,
    strategy: BisectionStrategy,
) -> Result<ClusterAssignment> {
    let n = graph.len();
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("cluster count must lie in 2..={n}, got {k}")));
    }
    let global = graph.eigenmap()?;
    let fiedler: Vec<f64> = global.fiedler().expect("n >= 2").to_vec();
    let (clusters, trace) = match strategy {
        BisectionStrategy::Recursive => greedy_splits(graph, k)?,
        BisectionStrategy::GlobalGap => gap_splits(graph, &fiedler, k)?,
    };

    let mut order: Vec<(f64, usize)> = clusters
        .iter()
        .enumerate()
        .map(|(c, m)| (m.iter().map(|&i| fiedler[i]).sum::<f64>() / m.len() as f64, c))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let ordered: Vec<Vec<usize>> = order.into_iter().map(|(_, c)| clusters[c].clone()).collect();
    ClusterAssignment::from_labels(labels_of(&ordered, n), &graph.distances, trace)
}

type Splits = (Vec<Vec<usize>>, Vec<BisectionStep>);

fn greedy_splits(graph: &SpectralGraph, k: usize) -> Result<Splits> {
    let n = graph.len();
    let mut clusters = vec![(0..n).collect::<Vec<usize>>()];
    let mut trace: Vec<BisectionStep> = Vec::new();
    while clusters.len() < k {
        // (avg silhouette, size, cluster, parts)
        let mut best: Option<(f64, usize, usize, (Vec<usize>, Vec<usize>))> = None;
        for (c, members) in clusters.iter().enumerate() {
            if members.len() < 2 {
                continue;
            }
            let parts = match fiedler_bisect(graph, members) {
                Ok(p) => p,
                Err(Error::Unsplittable { .. } | Error::DegenerateDegree { .. }) => continue,
                Err(e) => return Err(e),
            };
            let mut candidate = clusters.clone();
            candidate[c] = parts.0.clone();
            candidate.push(parts.1.clone());
            let score = silhouette(&labels_of(&candidate, n), &graph.distances)?.average;
            let better = match &best {
                None => true,
                Some((s, size, _, _)) => score > *s || (score == *s && members.len() > *size),
            };
            if better {
                best = Some((score, members.len(), c, parts));
            }
        }
        let Some((score, _, c, (a, b))) = best else {
            return Err(Error::Unsplittable {
                reason: format!("no splittable cluster after {} clusters", clusters.len()),
                partial_trace: short_trace(&trace),
            });
        };
        trace.push(BisectionStep {
            cluster: c + 1,
            size_a: a.len(),
            size_b: b.len(),
            threshold: 0.0,
            avg_silhouette: score,
        });
        clusters[c] = a;
        clusters.push(b);
    }
    Ok((clusters, trace))
}

fn gap_splits(graph: &SpectralGraph, fiedler: &[f64], k: usize) -> Result<Splits> {
    let n = fiedler.len();
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&a, &b| fiedler[b].total_cmp(&fiedler[a]).then(a.cmp(&b)));
    // Gap g separates sorted[g] from sorted[g + 1].
    let mut gaps: Vec<(f64, usize)> = (0..n - 1)
        .map(|g| (fiedler[sorted[g]] - fiedler[sorted[g + 1]], g))
        .collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if gaps[k - 2].0 <= 0.0 {
        return Err(Error::Unsplittable {
            reason: format!("the global Fiedler vector has fewer than {} distinct gaps", k - 1),
            partial_trace: Vec::new(),
        });
    }

    // Apply the cuts widest first, so the trace reads as successive splits.
    let mut clusters = vec![sorted.clone()];
    let mut trace = Vec::new();
    for &(_, g) in &gaps[..k - 1] {
        let threshold = 0.5 * (fiedler[sorted[g]] + fiedler[sorted[g + 1]]);
        let c = clusters
            .iter()
            .position(|m| m.contains(&sorted[g]) && m.contains(&sorted[g + 1]))
            .expect("each gap lies inside one cluster");
        let (a, b): (Vec<usize>, Vec<usize>) =
            clusters[c].iter().partition(|&&i| fiedler[i] > threshold);
        trace.push(BisectionStep {
            cluster: c + 1,
            size_a: a.len(),
            size_b: b.len(),
            threshold,
            avg_silhouette: 0.0,
        });
        clusters[c] = a;
        clusters.push(b);
        let labels = labels_of(&clusters, n);
        trace.last_mut().expect("just pushed").avg_silhouette =
            silhouette(&labels, &graph.distances)?.average;
    }
    for members in &mut clusters {
        members.sort_unstable();
    }
    Ok((clusters, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::pairwise_distances;
    use ndarray::{array, Array2};

    fn graph(points: Array2<f64>) -> SpectralGraph {
        SpectralGraph::from_distances(pairwise_distances(&points).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn two_members_split_into_singletons() {
        let g = graph(array![[0.0], [0.5], [3.0]]);
        let (a, b) = fiedler_bisect(&g, &[0, 2]).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        assert!(matches!(fiedler_bisect(&g, &[1]), Err(Error::Parameter(_))));
    }

    #[test]
    fn path_graph_splits_in_the_middle() {
        let g = graph(array![[0.0], [1.0], [2.0], [3.0]]);
        let (mut a, mut b) = fiedler_bisect(&g, &[0, 1, 2, 3]).unwrap();
        a.sort_unstable();
        b.sort_unstable();
        let mut halves = [a, b];
        halves.sort();
        assert_eq!(halves, [vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn k_two_matches_a_single_bisection() {
        let g = graph(array![[0.0], [0.3], [0.6], [4.0], [4.4]]);
        let asg = recursive_bisection(&g, 2, BisectionStrategy::Recursive).unwrap();
        let (a, b) = fiedler_bisect(&g, &[0, 1, 2, 3, 4]).unwrap();
        let la = asg.labels[a[0]];
        assert!(a.iter().all(|&i| asg.labels[i] == la));
        assert!(b.iter().all(|&i| asg.labels[i] != la));
        assert_eq!(asg.trace.len(), 1);
    }

    #[test]
    fn three_groups_on_a_line() {
        let pts = array![[0.0], [0.2], [0.4], [3.0], [3.2], [6.0], [6.1], [6.3]];
        for strategy in [BisectionStrategy::Recursive, BisectionStrategy::GlobalGap] {
            let asg = recursive_bisection(&graph(pts.clone()), 3, strategy).unwrap();
            assert_eq!(asg.k, 3);
            let l = &asg.labels;
            assert!(l[0] == l[1] && l[1] == l[2]);
            assert!(l[3] == l[4] && l[3] != l[0]);
            assert!(l[5] == l[6] && l[6] == l[7] && l[5] != l[3] && l[5] != l[0]);
            assert_eq!(asg.trace.len(), 2);
        }
    }

    #[test]
    fn bad_k_rejected() {
        let g = graph(array![[0.0], [1.0], [2.0]]);
        assert!(matches!(recursive_bisection(&g, 1, BisectionStrategy::Recursive), Err(Error::Parameter(_))));
        assert!(matches!(recursive_bisection(&g, 4, BisectionStrategy::Recursive), Err(Error::Parameter(_))));
    }

    #[test]
    fn bisection_is_deterministic() {
        let pts = Array2::from_shape_fn((20, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.3);
        let g = graph(pts);
        let a = recursive_bisection(&g, 4, BisectionStrategy::Recursive).unwrap();
        let b = recursive_bisection(&g, 4, BisectionStrategy::Recursive).unwrap();
        assert_eq!(a, b);
    }
}
