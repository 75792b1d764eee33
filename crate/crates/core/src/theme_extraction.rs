//! Keyword extraction, agglomerative clustering and theme derivation.
//!
//! Keywords are described by co-occurrence counts within a sliding window
//! over the stopword-filtered token stream. They are clustered under cosine
//! distance with single or average linkage, and each cluster becomes one
//! weighted [`ThemeConcept`].

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::backends::{TextClient, TextRequest, TextTask};
use crate::error::{Error, Result};
use crate::scene_model::ThemeConcept;

const STOPWORDS: &str = include_str!("../data/stopwords-en-v1.txt");

/// Distances closer than this are treated as tied.
pub const TIE_EPSILON: f64 = 1e-12;

/// Default cap on theme concepts.
pub const DEFAULT_MAX_CONCEPTS: usize = 5;

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.lines().map(str::trim).filter(|w| !w.is_empty()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub min_freq: u32,
    pub max_keywords: usize,
    pub window: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            min_freq: 1,
            max_keywords: 40,
            window: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordVector {
    pub keyword: String,
    /// Co-occurrence counts against the document vocabulary, in sorted
    /// vocabulary order.
    pub vector: Vec<f64>,
    pub frequency: u32,
}

/// Lowercased alphanumeric runs. Apostrophes are dropped inside a word,
/// every other non-alphanumeric character separates words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            cur.push(c);
        } else if c == '\'' || c == '\u{2019}' {
            continue;
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn extract_keywords(text: &str, config: &ExtractionConfig) -> Result<Vec<KeywordVector>> {
    let stop = stopwords();
    let tokens: Vec<String> = tokenize(text)
        .into_iter()
        .filter(|t| !stop.contains(t.as_str()))
        .collect();

    let mut freq: BTreeMap<&str, u32> = BTreeMap::new();
    for t in &tokens {
        *freq.entry(t.as_str()).or_default() += 1;
    }
    let vocab: BTreeMap<&str, usize> = freq.keys().enumerate().map(|(i, t)| (*t, i)).collect();

    let mut ranked: Vec<(&str, u32)> = freq
        .iter()
        .filter(|(_, f)| **f >= config.min_freq)
        .map(|(t, f)| (*t, *f))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(config.max_keywords);
    if ranked.is_empty() {
        return Err(Error::EmptyInput);
    }

    let index: BTreeMap<&str, usize> = ranked.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
    let mut vectors = vec![vec![0.0; vocab.len()]; ranked.len()];
    let window = config.window.max(1);
    for i in 0..tokens.len() {
        for j in (i + 1)..tokens.len().min(i + window) {
            let (a, b) = (tokens[i].as_str(), tokens[j].as_str());
            if let Some(&ka) = index.get(a) {
                vectors[ka][vocab[b]] += 1.0;
            }
            if let Some(&kb) = index.get(b) {
                vectors[kb][vocab[a]] += 1.0;
            }
        }
    }

    Ok(ranked
        .into_iter()
        .zip(vectors)
        .map(|((keyword, frequency), vector)| KeywordVector {
            keyword: keyword.to_string(),
            vector,
            frequency,
        })
        .collect())
}

/// `1 - cos(a, b)`. Two zero vectors are at distance 0, a zero vector and a
/// non-zero one at distance 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (na * nb)).clamp(0.0, 2.0),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    #[default]
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub new_id: usize,
    pub size: usize,
}

/// Leaves are `0..leaf_count`; the i-th merge creates cluster
/// `leaf_count + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub merges: Vec<Merge>,
    pub leaf_count: usize,
}

impl Dendrogram {
    pub fn is_monotone(&self, tolerance: f64) -> bool {
        self.merges
            .windows(2)
            .all(|w| w[1].distance >= w[0].distance - tolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub dendrogram: Dendrogram,
    /// Leaf indices per cluster; members ascending, clusters ordered by
    /// their smallest member.
    pub clusters: Vec<Vec<usize>>,
}

impl Clustering {
    pub fn groups(&self, keywords: &[KeywordVector]) -> Vec<Vec<KeywordVector>> {
        self.clusters
            .iter()
            .map(|c| c.iter().map(|&i| keywords[i].clone()).collect())
            .collect()
    }
}

pub fn cluster(keywords: &[KeywordVector], linkage: Linkage, k: usize) -> Result<Clustering> {
    let vectors: Vec<&[f64]> = keywords.iter().map(|k| k.vector.as_slice()).collect();
    cluster_vectors(&vectors, linkage, k)
}

/// Agglomerative clustering, cutting the tree at `k` clusters.
///
/// At each step the closest pair of active clusters merges; ties (within
/// [`TIE_EPSILON`]) go to the smallest `(a, b)` id pair. Inter-cluster
/// distances are maintained with the Lance-Williams update.
pub fn cluster_vectors(vectors: &[&[f64]], linkage: Linkage, k: usize) -> Result<Clustering> {
    let n = vectors.len();
    if k < 1 || k > n {
        return Err(Error::BadK { k, n });
    }
    let total = 2 * n - 1;
    let mut dist = vec![vec![0.0f64; total]; total];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = cosine_distance(vectors[i], vectors[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    members.resize(total, Vec::new());
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut cut: Option<Vec<Vec<usize>>> = (k == n).then(|| members[..n].to_vec());

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for (ii, &a) in active.iter().enumerate() {
            for &b in &active[ii + 1..] {
                let d = dist[a][b];
                if best.is_none_or(|(_, _, bd)| d < bd - TIE_EPSILON) {
                    best = Some((a, b, d));
                }
            }
        }
        let (a, b, d) = best.expect("at least two active clusters");
        let new_id = n + step;
        let (na, nb) = (members[a].len() as f64, members[b].len() as f64);
        for &c in &active {
            if c == a || c == b {
                continue;
            }
            let updated = match linkage {
                Linkage::Single => dist[c][a].min(dist[c][b]),
                Linkage::Average => (na * dist[c][a] + nb * dist[c][b]) / (na + nb),
            };
            dist[c][new_id] = updated;
            dist[new_id][c] = updated;
        }
        let mut merged = std::mem::take(&mut members[a]);
        merged.append(&mut std::mem::take(&mut members[b]));
        merged.sort_unstable();
        merges.push(Merge {
            a,
            b,
            distance: d,
            new_id,
            size: merged.len(),
        });
        members[new_id] = merged;
        active.retain(|&c| c != a && c != b);
        active.push(new_id);

        if active.len() == k {
            cut = Some(active.iter().map(|&c| members[c].clone()).collect());
        }
    }

    let mut clusters = cut.unwrap_or_else(|| vec![(0..n).collect()]);
    clusters.sort_by_key(|c| c[0]);
    Ok(Clustering {
        dendrogram: Dendrogram { merges, leaf_count: n },
        clusters,
    })
}

pub fn default_k(keyword_count: usize) -> usize {
    DEFAULT_MAX_CONCEPTS.min(keyword_count)
}

/// One concept per cluster, labelled by its most frequent keyword and
/// weighted by total keyword frequency. Concepts come back heaviest first.
pub fn concepts_from_clusters(clusters: &[Vec<KeywordVector>]) -> Vec<ThemeConcept> {
    let grand: u64 = clusters.iter().flat_map(|c| c.iter().map(|k| k.frequency as u64)).sum();
    let mut concepts: Vec<ThemeConcept> = clusters
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let top = c
                .iter()
                .min_by(|x, y| y.frequency.cmp(&x.frequency).then_with(|| x.keyword.cmp(&y.keyword)))
                .expect("non-empty cluster");
            let total: u64 = c.iter().map(|k| k.frequency as u64).sum();
            let mut keywords: Vec<String> = c.iter().map(|k| k.keyword.clone()).collect();
            keywords.sort();
            ThemeConcept {
                label: top.keyword.clone(),
                keywords,
                weight: total as f64 / grand as f64,
            }
        })
        .collect();
    concepts.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.label.cmp(&b.label)));
    concepts
}

/// Top three labels joined by `" and "`.
pub fn fallback_theme(concepts: &[ThemeConcept]) -> String {
    concepts
        .iter()
        .take(3)
        .map(|c| c.label.as_str())
        .collect::<Vec<_>>()
        .join(" and ")
}

pub(crate) const THEME_SYSTEM: &str = "You name the visual theme of an illustration. \
Reply with one short noun phrase and nothing else.";

/// Builds concepts from clusters and phrases a theme, through `backend`
/// when one is configured and with [`fallback_theme`] otherwise.
pub fn derive_theme(
    clusters: &[Vec<KeywordVector>],
    text: &str,
    backend: Option<&dyn TextClient>,
    seed: u64,
) -> Result<(String, Vec<ThemeConcept>)> {
    if clusters.iter().all(|c| c.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let concepts = concepts_from_clusters(clusters);
    let fallback = fallback_theme(&concepts);
    let theme = match backend {
        None => fallback,
        Some(client) => {
            let labels: Vec<String> = concepts.iter().map(|c| c.label.clone()).collect();
            let user = format!(
                "Source text:\n{text}\n\nKey concepts, most important first: {}\n\nName the theme of an illustration for this text.",
                labels.join(", ")
            );
            let req = TextRequest::new(THEME_SYSTEM, user, seed, TextTask::Theme { labels, fallback });
            let reply = client.complete(&req)?;
            let theme = reply.text.trim().trim_matches('"').trim().to_string();
            if theme.is_empty() {
                return Err(Error::MalformedOutput("empty theme".into()));
            }
            theme
        }
    };
    Ok((theme, concepts))
}
