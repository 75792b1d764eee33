//! Brute-force agglomerative clustering. Every step recomputes each
//! cluster-to-cluster linkage directly from the leaf distances, so it shares
//! nothing with the incremental implementation except the tie rule.

use sde_core::theme_extraction::{cosine_distance, Linkage, TIE_EPSILON};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMerge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub merges: Vec<OracleMerge>,
    pub clusters: Vec<Vec<usize>>,
}

fn linkage_between(leaves: &[Vec<f64>], x: &[usize], y: &[usize], linkage: Linkage) -> f64 {
    let pairs = x
        .iter()
        .flat_map(|&i| y.iter().map(move |&j| cosine_distance(&leaves[i], &leaves[j])));
    match linkage {
        Linkage::Single => pairs.fold(f64::INFINITY, f64::min),
        Linkage::Average => pairs.sum::<f64>() / (x.len() * y.len()) as f64,
    }
}

pub fn cluster(leaves: &[Vec<f64>], linkage: Linkage, k: usize) -> OracleResult {
    let n = leaves.len();
    assert!(k >= 1 && k <= n);
    // (cluster id, members); ids follow the same numbering as the library
    let mut active: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    let mut cut = None;
    if k == n {
        cut = Some(active.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>());
    }
    for step in 0..n.saturating_sub(1) {
        let mut candidates = Vec::new();
        for x in 0..active.len() {
            for y in (x + 1)..active.len() {
                let d = linkage_between(leaves, &active[x].1, &active[y].1, linkage);
                candidates.push((active[x].0, active[y].0, d, x, y));
            }
        }
        let min = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        let &(a, b, d, x, y) = candidates
            .iter()
            .filter(|c| c.2 <= min + TIE_EPSILON)
            .min_by_key(|c| (c.0, c.1))
            .unwrap();
        let mut members = active[x].1.clone();
        members.extend(&active[y].1);
        members.sort_unstable();
        merges.push(OracleMerge {
            a,
            b,
            distance: d,
            size: members.len(),
        });
        active.remove(y);
        active.remove(x);
        active.push((n + step, members));
        if active.len() == k {
            cut = Some(active.iter().map(|(_, m)| m.clone()).collect());
        }
    }
    let mut clusters = cut.unwrap_or_else(|| vec![(0..n).collect()]);
    clusters.sort_by_key(|c| c[0]);
    OracleResult { merges, clusters }
}
