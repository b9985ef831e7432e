//! Pinning-node selection: weighted degree, betweenness, and eigenvector
//! centralities, their weighted combination, and the sparse diagonal
//! physical control matrix over the top-k nodes.

use serde::{Deserialize, Serialize};

use crate::connectivity::BrainGraph;
use crate::error::{Error, Result};

/// Per-node centrality scores and the induced ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralityReport {
    pub degree: Vec<f64>,
    pub betweenness: Vec<f64>,
    /// Dominant adjacency eigenvector, normalized to unit infinity norm.
    pub eigenvector: Vec<f64>,
    /// Weighted combination of the min-max normalized centralities, in [0,1].
    pub combined: Vec<f64>,
    /// Node indices sorted by combined score, descending; ties by lower index.
    pub ranking: Vec<usize>,
}

/// Sparse diagonal 0/1 physical control matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlMatrix {
    pub n: usize,
    pub k: usize,
    /// Selected node indices, sorted ascending.
    pub actuated: Vec<usize>,
}

impl ControlMatrix {
    /// Dense n x n diagonal matrix with ones at the actuated nodes.
    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let mut b = nalgebra::DMatrix::zeros(self.n, self.n);
        for &i in &self.actuated {
            b[(i, i)] = 1.0;
        }
        b
    }
}

/// Serialized control-matrix artifact (bmatrix.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlMatrixJson {
    pub kind: String,
    pub schema_version: u32,
    pub n: usize,
    pub k: usize,
    pub actuated: Vec<usize>,
    pub weights: [f64; 3],
    pub combined: Vec<f64>,
}

impl ControlMatrixJson {
    pub fn new(cm: &ControlMatrix, weights: [f64; 3], report: &CentralityReport) -> Self {
        ControlMatrixJson {
            kind: "bmatrix".to_string(),
            schema_version: 1,
            n: cm.n,
            k: cm.k,
            actuated: cm.actuated.clone(),
            weights,
            combined: report.combined.clone(),
        }
    }

    pub fn to_control_matrix(&self) -> Result<ControlMatrix> {
        if self.actuated.len() != self.k || self.actuated.iter().any(|&i| i >= self.n) {
            return Err(Error::Data("inconsistent bmatrix artifact".to_string()));
        }
        Ok(ControlMatrix {
            n: self.n,
            k: self.k,
            actuated: self.actuated.clone(),
        })
    }
}

/// Min-max normalize to [0,1]; a constant vector maps to all zeros.
fn min_max_normalize(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo < 1e-15 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

fn combine(report_deg: &[f64], btw: &[f64], eig: &[f64], weights: [f64; 3]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || total <= 0.0 {
        return Err(Error::Config(format!(
            "centrality weights must be nonnegative with positive sum, got {weights:?}"
        )));
    }
    let d = min_max_normalize(report_deg);
    let b = min_max_normalize(btw);
    let e = min_max_normalize(eig);
    Ok((0..d.len())
        .map(|i| (weights[0] * d[i] + weights[1] * b[i] + weights[2] * e[i]) / total)
        .collect())
}

fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    idx
}

/// Weighted betweenness centrality with edge length 1/weight, Brandes'
/// accumulation over all sources, halved for undirected pair counting.
/// Unreachable pairs contribute nothing.
fn betweenness(graph: &BrainGraph) -> Vec<f64> {
    let n = graph.n();
    let adj = graph.adjacency();
    // Sparse neighbour lists with distances 1/w.
    let neighbours: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| adj[(i, j)] > 0.0)
                .map(|j| (j, 1.0 / adj[(i, j)]))
                .collect()
        })
        .collect();

    let mut centrality = vec![0.0; n];
    let eps = 1e-12;

    for s in 0..n {
        // Dijkstra with path counting.
        let mut dist = vec![f64::INFINITY; n];
        let mut sigma = vec![0.0; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut done = vec![false; n];
        let mut order: Vec<usize> = Vec::with_capacity(n);
        dist[s] = 0.0;
        sigma[s] = 1.0;

        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            order.push(u);
            for &(v, len) in &neighbours[u] {
                let cand = dist[u] + len;
                if cand < dist[v] - eps {
                    dist[v] = cand;
                    sigma[v] = sigma[u];
                    preds[v].clear();
                    preds[v].push(u);
                } else if (cand - dist[v]).abs() <= eps {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }

        // Dependency accumulation in reverse finish order.
        let mut delta = vec![0.0; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }

    // Each unordered pair was counted from both endpoints.
    centrality.iter().map(|c| c / 2.0).collect()
}

/// Dominant eigenvector of the adjacency by power iteration on `I + A`
/// (the shift breaks the sign-flip cycle on bipartite graphs without
/// changing the eigenvectors). Tolerance 1e-10 on the iterate change, at
/// most 10_000 iterations.
fn eigenvector_centrality(graph: &BrainGraph) -> Result<Vec<f64>> {
    let n = graph.n();
    let adj = graph.adjacency();
    if adj.amax() == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut v = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..10_000 {
        for i in 0..n {
            let mut acc = v[i];
            for j in 0..n {
                acc += adj[(i, j)] * v[j];
            }
            next[i] = acc;
        }
        let norm = next.iter().cloned().fold(0.0, f64::max);
        if norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        residual = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v.copy_from_slice(&next);
        if residual < 1e-10 {
            return Ok(v);
        }
    }
    Err(Error::Numeric(format!(
        "eigenvector centrality power iteration did not converge, residual {residual}"
    )))
}

/// All three centralities plus the equal-weight combination and ranking.
pub fn centralities(graph: &BrainGraph) -> Result<CentralityReport> {
    if graph.n() < 2 {
        return Err(Error::Data("centralities need n >= 2".to_string()));
    }
    let degree = graph.degrees().to_vec();
    let btw = betweenness(graph);
    let eig = eigenvector_centrality(graph)?;
    let combined = combine(&degree, &btw, &eig, [1.0, 1.0, 1.0])?;
    let ranking = rank_descending(&combined);
    Ok(CentralityReport {
        degree,
        betweenness: btw,
        eigenvector: eig,
        combined,
        ranking,
    })
}

/// Select the top-k nodes under the given [degree, betweenness, eigenvector]
/// weights and build the diagonal control matrix. Updates the combination
/// and ranking in the returned report copy.
pub fn select_nodes(
    report: &CentralityReport,
    k: usize,
    weights: [f64; 3],
) -> Result<(ControlMatrix, CentralityReport)> {
    let n = report.degree.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k must satisfy 1 <= k <= {n}, got {k}")));
    }
    let combined = combine(&report.degree, &report.betweenness, &report.eigenvector, weights)?;
    let ranking = rank_descending(&combined);
    let mut actuated: Vec<usize> = ranking[..k].to_vec();
    actuated.sort_unstable();
    let updated = CentralityReport {
        degree: report.degree.clone(),
        betweenness: report.betweenness.clone(),
        eigenvector: report.eigenvector.clone(),
        combined,
        ranking,
    };
    Ok((ControlMatrix { n, k, actuated }, updated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn graph_from_edges(n: usize, edges: &[(usize, usize, f64)]) -> BrainGraph {
        let mut adj = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            adj[(i, j)] = w;
            adj[(j, i)] = w;
        }
        BrainGraph::from_adjacency(adj, 0.0).unwrap()
    }

    #[test]
    fn star_graph_center_ranks_first() {
        let g = graph_from_edges(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]);
        let report = centralities(&g).unwrap();
        assert_eq!(report.ranking[0], 0);
        for leaf in 1..5 {
            assert!(report.degree[0] > report.degree[leaf]);
            assert!(report.betweenness[0] > report.betweenness[leaf]);
            assert!(report.eigenvector[0] >= report.eigenvector[leaf]);
        }
        // K_{1,4}: center lies on all C(4,2) = 6 leaf pairs.
        assert!((report.betweenness[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn path_graph_interior_betweenness() {
        let g = graph_from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let report = centralities(&g).unwrap();
        assert!((report.betweenness[1] - 1.0).abs() < 1e-12);
        assert!(report.betweenness[0].abs() < 1e-12);
        assert!(report.betweenness[2].abs() < 1e-12);
    }

    /// Exhaustive oracle: enumerate every simple path between each pair,
    /// find the shortest length, and count the shortest paths through each
    /// interior node.
    pub(super) fn betweenness_oracle(graph: &BrainGraph) -> Vec<f64> {
        let n = graph.n();
        let adj = graph.adjacency();
        let mut centrality = vec![0.0; n];
        for s in 0..n {
            for t in (s + 1)..n {
                let mut paths: Vec<(f64, Vec<usize>)> = Vec::new();
                let mut stack = vec![(s, vec![s], 0.0)];
                while let Some((node, path, len)) = stack.pop() {
                    if node == t {
                        paths.push((len, path));
                        continue;
                    }
                    for j in 0..n {
                        if adj[(node, j)] > 0.0 && !path.contains(&j) {
                            let mut next = path.clone();
                            next.push(j);
                            stack.push((j, next, len + 1.0 / adj[(node, j)]));
                        }
                    }
                }
                if paths.is_empty() {
                    continue;
                }
                let best = paths.iter().map(|(l, _)| *l).fold(f64::INFINITY, f64::min);
                let shortest: Vec<&Vec<usize>> = paths
                    .iter()
                    .filter(|(l, _)| (*l - best).abs() <= 1e-12 * (1.0 + best))
                    .map(|(_, p)| p)
                    .collect();
                let count = shortest.len() as f64;
                for p in shortest {
                    for &v in &p[1..p.len() - 1] {
                        centrality[v] += 1.0 / count;
                    }
                }
            }
        }
        centrality
    }

    #[test]
    fn betweenness_matches_exhaustive_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let n = 8;
            let mut adj = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < 0.45 {
                        let w: f64 = 0.1 + 0.9 * rng.random::<f64>();
                        adj[(i, j)] = w;
                        adj[(j, i)] = w;
                    }
                }
            }
            let g = BrainGraph::from_adjacency(adj, 0.0).unwrap();
            let got = betweenness(&g);
            let want = betweenness_oracle(&g);
            for i in 0..n {
                assert!(
                    (got[i] - want[i]).abs() < 1e-9,
                    "trial {trial} node {i}: {} vs oracle {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn select_nodes_reductions() {
        let g = graph_from_edges(
            6,
            &[(0, 1, 0.9), (1, 2, 0.8), (2, 3, 0.7), (3, 4, 0.6), (4, 5, 0.5), (0, 5, 0.4)],
        );
        let report = centralities(&g).unwrap();

        // k = n -> identity control matrix
        let (cm, _) = select_nodes(&report, 6, [1.0, 1.0, 1.0]).unwrap();
        assert_eq!(cm.actuated, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(cm.dense(), DMatrix::identity(6, 6));

        // degree-only weights reduce to top-k by degree
        let (cm, _) = select_nodes(&report, 2, [1.0, 0.0, 0.0]).unwrap();
        let mut by_degree: Vec<usize> = (0..6).collect();
        by_degree.sort_by(|&a, &b| {
            report.degree[b]
                .partial_cmp(&report.degree[a])
                .unwrap()
                .then_with(|| a.cmp(&b))
        });
        let mut expect = by_degree[..2].to_vec();
        expect.sort_unstable();
        assert_eq!(cm.actuated, expect);

        assert!(select_nodes(&report, 7, [1.0, 1.0, 1.0]).is_err());
        assert!(select_nodes(&report, 2, [0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn paper_scale_selection_shape() {
        // 23 nodes, k = 5: diagonal matrix with exactly five ones.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let n = 23;
        let mut adj = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.3 {
                    let w: f64 = rng.random();
                    adj[(i, j)] = w;
                    adj[(j, i)] = w;
                }
            }
        }
        let g = BrainGraph::from_adjacency(adj, 0.0).unwrap();
        let report = centralities(&g).unwrap();
        let (cm, _) = select_nodes(&report, 5, [1.0, 1.0, 1.0]).unwrap();
        assert_eq!(cm.k, 5);
        assert_eq!(cm.actuated.len(), 5);
        let dense = cm.dense();
        let trace: f64 = (0..n).map(|i| dense[(i, i)]).sum();
        assert_eq!(trace, 5.0);
        let total: f64 = dense.iter().map(|v| v.abs()).sum();
        assert_eq!(total, 5.0, "off-diagonal entries must all be zero");
    }

    #[test]
    fn ranking_scale_invariance() {
        let edges = [(0usize, 1usize, 0.9), (1, 2, 0.4), (2, 3, 0.7), (0, 3, 0.2), (1, 3, 0.5)];
        let g1 = graph_from_edges(4, &edges);
        let scaled: Vec<(usize, usize, f64)> =
            edges.iter().map(|&(i, j, w)| (i, j, w * 0.37)).collect();
        let g2 = graph_from_edges(4, &scaled);
        let r1 = centralities(&g1).unwrap();
        let r2 = centralities(&g2).unwrap();
        assert_eq!(r1.ranking, r2.ranking);
    }

    #[test]
    fn permutation_equivariance() {
        let edges = [(0usize, 1usize, 0.9), (1, 2, 0.4), (2, 3, 0.7), (0, 3, 0.2)];
        let g = graph_from_edges(4, &edges);
        let r = centralities(&g).unwrap();

        // Relabel via the cycle 0->1->2->3->0.
        let perm = [1usize, 2, 3, 0];
        let edges_p: Vec<(usize, usize, f64)> =
            edges.iter().map(|&(i, j, w)| (perm[i], perm[j], w)).collect();
        let gp = graph_from_edges(4, &edges_p);
        let rp = centralities(&gp).unwrap();
        for i in 0..4 {
            assert!((r.combined[i] - rp.combined[perm[i]]).abs() < 1e-9);
        }
    }
}
