//! Friendship and mention graphs, threshold activation and Jaccard tie strength.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{TweetRecord, UserProfile};
use crate::error::{Error, Result};
use crate::stats::{self, BootstrapCi};

pub const DEFAULT_PERCENTILE: f64 = 90.0;
pub const DEFAULT_JACCARD_BINS: [f64; 7] = [0.0, 0.0125, 0.025, 0.05, 0.1, 0.2, 1.0];
pub const DEFAULT_NULL_SHUFFLES: usize = 200;
/// Bins with fewer links than this report no correlation.
pub const MIN_BIN_LINKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Friendship,
    Mention,
}

impl GraphKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Friendship => "friendship",
            GraphKind::Mention => "mention",
        }
    }
}

impl std::str::FromStr for GraphKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "friendship" | "friend" | "fn" => Ok(GraphKind::Friendship),
            "mention" | "mn" => Ok(GraphKind::Mention),
            other => Err(Error::Config(format!("unknown graph kind {other:?}"))),
        }
    }
}

/// Immutable user graph. Node ids are sorted; edges refer to node indices.
/// Friendship edges are stored once with `a < b`; mention edges are ordered.
/// Friend sets are the full follow lists, interned, for tie-strength scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    kind: GraphKind,
    nodes: Vec<String>,
    edges: Vec<(usize, usize)>,
    friend_sets: Vec<Vec<u32>>,
}

impl SocialGraph {
    /// Validates endpoints, drops self-loops and duplicate edges.
    pub fn new(
        kind: GraphKind,
        nodes: impl IntoIterator<Item = String>,
        edges: impl IntoIterator<Item = (String, String)>,
        friend_sets: &BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self> {
        let nodes: Vec<String> = nodes.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut out = BTreeSet::new();
        for (a, b) in edges {
            let (Some(&ia), Some(&ib)) = (index.get(a.as_str()), index.get(b.as_str())) else {
                return Err(Error::InvalidInput(format!("edge {a}-{b} names a user outside the graph")));
            };
            if ia == ib {
                continue;
            }
            out.insert(match kind {
                GraphKind::Friendship => (ia.min(ib), ia.max(ib)),
                GraphKind::Mention => (ia, ib),
            });
        }
        let mut interner: BTreeMap<&str, u32> = BTreeMap::new();
        for set in friend_sets.values() {
            for f in set {
                let next = interner.len() as u32;
                interner.entry(f.as_str()).or_insert(next);
            }
        }
        let friend_sets = nodes
            .iter()
            .map(|n| {
                let mut v: Vec<u32> = friend_sets
                    .get(n)
                    .map(|s| s.iter().map(|f| interner[f.as_str()]).collect())
                    .unwrap_or_default();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(SocialGraph { kind, nodes, edges: out.into_iter().collect(), friend_sets })
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|&(a, b)| (self.nodes[a].as_str(), self.nodes[b].as_str()))
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(id)).ok()
    }

    /// Unordered node pairs joined by at least one edge.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let set: BTreeSet<(usize, usize)> = self.edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        set.into_iter().collect()
    }

    /// Undirected adjacency lists, optionally skipping some links.
    pub fn neighbors(&self, keep: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (a, b) in self.links() {
            if keep(a, b) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        adj
    }

    pub fn friend_jaccard(&self, a: usize, b: usize) -> f64 {
        jaccard_sorted(&self.friend_sets[a], &self.friend_sets[b])
    }

    /// Edge list as `src,dst`.
    pub fn write_edges(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            src: &'a str,
            dst: &'a str,
        }
        crate::corpus::write_csv(path, self.edges().map(|(src, dst)| Row { src, dst }))
    }

    /// Friend sets as `user_id,friend_id`; a node without friends gets one
    /// row with an empty friend id so the node list survives a round trip.
    pub fn write_friend_sets(&self, path: &Path, friend_sets: &BTreeMap<String, BTreeSet<String>>) -> Result<()> {
        let rows = self.nodes.iter().flat_map(|n| {
            let friends: Vec<&str> = friend_sets.get(n).map(|s| s.iter().map(String::as_str).collect()).unwrap_or_default();
            let friends = if friends.is_empty() { vec![""] } else { friends };
            friends.into_iter().map(move |f| FriendRow { user_id: n.clone(), friend_id: f.to_string() })
        });
        crate::corpus::write_csv(path, rows)
    }

    /// Reads a graph written by [`SocialGraph::write_edges`] and
    /// [`SocialGraph::write_friend_sets`].
    pub fn from_csv(kind: GraphKind, edges: &Path, friends: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct EdgeRow {
            src: String,
            dst: String,
        }
        let edge_rows: Vec<EdgeRow> = crate::corpus::read_csv_strict(edges)?;
        let friend_rows: Vec<FriendRow> = crate::corpus::read_csv_strict(friends)?;
        let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in friend_rows {
            let e = sets.entry(r.user_id).or_default();
            if !r.friend_id.is_empty() {
                e.insert(r.friend_id);
            }
        }
        let nodes: BTreeSet<String> =
            sets.keys().cloned().chain(edge_rows.iter().flat_map(|e| [e.src.clone(), e.dst.clone()])).collect();
        Self::new(kind, nodes, edge_rows.into_iter().map(|e| (e.src, e.dst)), &sets)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FriendRow {
    user_id: String,
    friend_id: String,
}

/// Full follow lists of gender-known users, keyed by user id.
pub fn friend_sets(profiles: &[UserProfile]) -> BTreeMap<String, BTreeSet<String>> {
    profiles
        .iter()
        .filter(|p| p.gender.is_known())
        .map(|p| (p.user_id.clone(), p.friend_ids.clone()))
        .collect()
}

/// Mutual-follow graph over gender-known users.
///
/// `a` follows `b` when `b` is in `a`'s friend list or `a` is in `b`'s
/// follower list.
pub fn build_friendship(profiles: &[UserProfile]) -> SocialGraph {
    let known: BTreeMap<&str, &UserProfile> =
        profiles.iter().filter(|p| p.gender.is_known()).map(|p| (p.user_id.as_str(), p)).collect();
    let follows = |a: &UserProfile, b: &UserProfile| a.friend_ids.contains(&b.user_id) || b.follower_ids.contains(&a.user_id);
    let mut edges = Vec::new();
    for (&id, p) in &known {
        let candidates = p.friend_ids.iter().chain(&p.follower_ids);
        for other in candidates {
            if other.as_str() <= id {
                continue;
            }
            if let Some(q) = known.get(other.as_str()) {
                if follows(p, q) && follows(q, p) {
                    edges.push((id.to_string(), other.clone()));
                }
            }
        }
    }
    SocialGraph::new(
        GraphKind::Friendship,
        known.keys().map(|k| k.to_string()),
        edges,
        &friend_sets(profiles),
    )
    .expect("endpoints are drawn from the node set")
}

/// Directed mention graph over gender-known users. Mentions resolve by
/// screen name (case-insensitive).
pub fn build_mention(tweets: &[TweetRecord], profiles: &[UserProfile]) -> SocialGraph {
    let known: BTreeSet<&str> = profiles.iter().filter(|p| p.gender.is_known()).map(|p| p.user_id.as_str()).collect();
    let by_name: BTreeMap<String, &str> = profiles
        .iter()
        .filter(|p| p.gender.is_known())
        .map(|p| (p.screen_name.to_lowercase(), p.user_id.as_str()))
        .collect();
    let mut edges = BTreeSet::new();
    for t in tweets {
        if !known.contains(t.user_id.as_str()) {
            continue;
        }
        for m in &t.mentions {
            if let Some(&dst) = by_name.get(m) {
                edges.insert((t.user_id.clone(), dst.to_string()));
            }
        }
    }
    SocialGraph::new(GraphKind::Mention, known.iter().map(|k| k.to_string()), edges, &friend_sets(profiles))
        .expect("endpoints are drawn from the node set")
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn jaccard_sorted(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Nearest-rank percentile: the value at rank ceil(P/100 * N) of the sorted data.
pub fn nearest_rank(values: &[f64], percentile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("percentile of empty data".into()));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidInput(format!("percentile {percentile} outside [0,100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ActivationOptions<'a> {
    pub percentile: f64,
    /// When set, links between two users of the same state are removed.
    pub same_state: Option<&'a BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationPoint {
    pub x: usize,
    pub n: usize,
    pub n_active: usize,
    pub p: Option<f64>,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationCurve {
    pub threshold: Option<f64>,
    pub n_nodes: usize,
    pub n_active: usize,
    pub links_used: usize,
    pub points: Vec<ActivationPoint>,
}

/// Active flags (score strictly above the nearest-rank threshold), in node order.
pub fn active_flags(g: &SocialGraph, scores: &BTreeMap<String, f64>, percentile: f64) -> Result<(Vec<bool>, f64)> {
    let vals: Vec<f64> = g
        .nodes()
        .iter()
        .map(|n| {
            scores
                .get(n)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("no score for graph node {n}")))
        })
        .collect::<Result<_>>()?;
    let thr = nearest_rank(&vals, percentile)?;
    Ok((vals.iter().map(|&v| v > thr).collect(), thr))
}

/// Undirected adjacency after the optional same-state filter.
pub fn ablated_neighbors(g: &SocialGraph, same_state: Option<&BTreeMap<String, String>>) -> Vec<Vec<usize>> {
    let state = |i: usize| same_state.and_then(|m| m.get(&g.nodes()[i]));
    g.neighbors(|a, b| match (state(a), state(b)) {
        (Some(sa), Some(sb)) => sa != sb,
        _ => true,
    })
}

pub fn active_neighbor_counts(adj: &[Vec<usize>], active: &[bool]) -> Vec<usize> {
    adj.iter().map(|ns| ns.iter().filter(|&&j| active[j]).count()).collect()
}

fn curve_points(counts: &[usize], active: &[bool]) -> Vec<ActivationPoint> {
    let max_x = counts.iter().copied().max().unwrap_or(0);
    let mut n = vec![0usize; max_x + 1];
    let mut k = vec![0usize; max_x + 1];
    for (&x, &a) in counts.iter().zip(active) {
        n[x] += 1;
        k[x] += usize::from(a);
    }
    (0..=max_x)
        .map(|x| {
            let p = (n[x] > 0).then(|| k[x] as f64 / n[x] as f64);
            ActivationPoint { x, n: n[x], n_active: k[x], p, se: p.map(|p| (p * (1.0 - p) / n[x] as f64).sqrt()) }
        })
        .collect()
}

/// Probability of being active given exactly x active neighbours.
pub fn activation_analysis(
    g: &SocialGraph,
    scores: &BTreeMap<String, f64>,
    opts: &ActivationOptions<'_>,
) -> Result<ActivationCurve> {
    if g.node_count() == 0 {
        return Ok(ActivationCurve { threshold: None, n_nodes: 0, n_active: 0, links_used: 0, points: Vec::new() });
    }
    let (active, thr) = active_flags(g, scores, opts.percentile)?;
    let adj = ablated_neighbors(g, opts.same_state);
    let counts = active_neighbor_counts(&adj, &active);
    Ok(ActivationCurve {
        threshold: Some(thr),
        n_nodes: g.node_count(),
        n_active: active.iter().filter(|a| **a).count(),
        links_used: adj.iter().map(Vec::len).sum::<usize>() / 2,
        points: curve_points(&counts, &active),
    })
}

/// Activation curve expected when labels carry no network signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullActivation {
    pub shuffles: usize,
    pub seed: u64,
    /// Mean over shuffles of p(x), over shuffles where p(x) is defined.
    pub mean_p: Vec<Option<f64>>,
    /// 2.5th and 97.5th percentiles of p(0) across shuffles.
    pub p0_band: Option<(f64, f64)>,
}

/// Monte Carlo null: active labels permuted uniformly over nodes, the graph kept.
pub fn null_activation(
    g: &SocialGraph,
    scores: &BTreeMap<String, f64>,
    opts: &ActivationOptions<'_>,
    shuffles: usize,
    seed: u64,
) -> Result<NullActivation> {
    if shuffles == 0 {
        return Err(Error::InvalidInput("null model needs at least one shuffle".into()));
    }
    let (active, _) = active_flags(g, scores, opts.percentile)?;
    let adj = ablated_neighbors(g, opts.same_state);
    let curves: Vec<Vec<ActivationPoint>> = (0..shuffles as u64)
        .into_par_iter()
        .map(|s| {
            let mut labels = active.clone();
            labels.shuffle(&mut stats::iteration_rng(seed, s));
            curve_points(&active_neighbor_counts(&adj, &labels), &labels)
        })
        .collect();
    let width = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mean_p = (0..width)
        .map(|x| {
            let ps: Vec<f64> = curves.iter().filter_map(|c| c.get(x).and_then(|p| p.p)).collect();
            stats::mean(&ps)
        })
        .collect();
    let mut p0: Vec<f64> = curves.iter().filter_map(|c| c.first().and_then(|p| p.p)).collect();
    p0.sort_by(f64::total_cmp);
    let p0_band = (!p0.is_empty()).then(|| (stats::percentile_sorted(&p0, 2.5), stats::percentile_sorted(&p0, 97.5)));
    Ok(NullActivation { shuffles, seed, mean_p, p0_band })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardBin {
    pub lo: f64,
    pub hi: f64,
    pub links: usize,
    /// Pearson r over both orientations of each link; `None` below three links
    /// or when a side has no variance.
    pub r: Option<f64>,
    pub ci: Option<BootstrapCi>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardBinReport {
    pub edges: Vec<f64>,
    pub bins: Vec<JaccardBin>,
    pub total_links: usize,
    /// Links skipped because an endpoint has no fraction.
    pub skipped_links: usize,
    /// Share of scored links with Jaccard below 0.1.
    pub weak_link_share: Option<f64>,
}

pub fn validate_bins(edges: &[f64]) -> Result<()> {
    let ok = edges.len() >= 2
        && edges[0] == 0.0
        && *edges.last().unwrap() == 1.0
        && edges.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("bin edges {edges:?} must increase strictly from 0 to 1")))
    }
}

/// Bin index for `v`: bins are `[lo, hi)` except the last, which is closed.
pub fn bin_of(edges: &[f64], v: f64) -> usize {
    let last = edges.len() - 2;
    (0..last).find(|&b| v < edges[b + 1]).unwrap_or(last)
}

fn symmetric_pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let x: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let y: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [b, a]).collect();
    stats::pearson(&x, &y).ok()
}

/// Correlation of an endpoint attribute across links, by tie-strength bin.
pub fn cliqueness_analysis(
    g: &SocialGraph,
    fraction: &BTreeMap<String, f64>,
    edges: &[f64],
    iters: usize,
    seed: u64,
) -> Result<JaccardBinReport> {
    validate_bins(edges)?;
    let links = g.links();
    let mut per_bin: Vec<Vec<(f64, f64)>> = vec![Vec::new(); edges.len() - 1];
    let mut skipped = 0;
    let mut weak = 0;
    for &(a, b) in &links {
        let (Some(&fa), Some(&fb)) = (fraction.get(&g.nodes()[a]), fraction.get(&g.nodes()[b])) else {
            skipped += 1;
            continue;
        };
        let j = g.friend_jaccard(a, b);
        weak += usize::from(j < 0.1);
        per_bin[bin_of(edges, j)].push((fa, fb));
    }
    if skipped > 0 {
        warn!("{skipped} links skipped: endpoint without a food-tweet fraction");
    }
    let bins = per_bin
        .par_iter()
        .enumerate()
        .map(|(b, pairs)| {
            let (r, ci) = if pairs.len() < MIN_BIN_LINKS {
                (None, None)
            } else {
                let r = symmetric_pearson(pairs);
                let bin_seed = seed ^ (b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let ci = r.and_then(|_| stats::bootstrap_ci(pairs, symmetric_pearson, iters, bin_seed).ok());
                (r, ci)
            };
            JaccardBin { lo: edges[b], hi: edges[b + 1], links: pairs.len(), r, ci }
        })
        .collect::<Vec<_>>();
    for bin in bins.iter().filter(|b| b.r.is_none()) {
        warn!("jaccard bin [{}, {}] has {} links; correlation undefined", bin.lo, bin.hi, bin.links);
    }
    let scored = links.len() - skipped;
    Ok(JaccardBinReport {
        edges: edges.to_vec(),
        bins,
        total_links: links.len(),
        skipped_links: skipped,
        weak_link_share: (scored > 0).then(|| weak as f64 / scored as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Gender;

    fn profile(id: &str, friends: &[&str], gender: Gender) -> UserProfile {
        UserProfile {
            user_id: id.into(),
            screen_name: format!("{id}_name"),
            first_name: None,
            profile_text: String::new(),
            follower_ids: BTreeSet::new(),
            friend_ids: friends.iter().map(|s| s.to_string()).collect(),
            home_zip: None,
            gender,
        }
    }

    #[test]
    fn mutual_follow_only() {
        let ps = vec![
            profile("a", &["b", "c"], Gender::Female),
            profile("b", &["a"], Gender::Male),
            profile("c", &[], Gender::Male),
            profile("d", &["a"], Gender::Unknown),
        ];
        let g = build_friendship(&ps);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![("a", "b")]);
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn mentions_are_existence_edges() {
        let ps = vec![profile("a", &[], Gender::Female), profile("b", &[], Gender::Male), profile("c", &[], Gender::Male)];
        let tweets = vec![
            TweetRecord::new("1", "a", 0, "hi @b_name", None),
            TweetRecord::new("2", "a", 1, "again @B_name", None),
            TweetRecord::new("3", "b", 2, "@c_name @a_name", None),
            TweetRecord::new("4", "c", 3, "@a_name @nobody", None),
        ];
        let g = build_mention(&tweets, &ps);
        let e: Vec<(&str, &str)> = g.edges().collect();
        assert_eq!(e, vec![("a", "b"), ("b", "a"), ("b", "c"), ("c", "a")]);
        assert_eq!(g.links().len(), 3);
    }

    #[test]
    fn jaccard_examples() {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(jaccard(&s(&["b", "c"]), &s(&["b", "c"])), 1.0);
        assert_eq!(jaccard(&s(&["a", "b", "c"]), &s(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard::<String>(&BTreeSet::new(), &BTreeSet::new()), 0.0);
        assert_eq!(jaccard_sorted(&[1, 2, 3], &[2, 3, 4]), 0.5);
    }

    #[test]
    fn nearest_rank_top_decile() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let t = nearest_rank(&v, 90.0).unwrap();
        assert_eq!(v.iter().filter(|&&x| x > t).count(), 1);
    }

    fn path_graph(n: usize) -> SocialGraph {
        let nodes: Vec<String> = (0..n).map(|i| format!("u{i:02}")).collect();
        let edges: Vec<(String, String)> = (1..n).map(|i| (nodes[i - 1].clone(), nodes[i].clone())).collect();
        SocialGraph::new(GraphKind::Friendship, nodes, edges, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn curve_counts_cover_nodes() {
        let g = path_graph(10);
        let scores: BTreeMap<String, f64> = g.nodes().iter().enumerate().map(|(i, n)| (n.clone(), i as f64)).collect();
        let c = activation_analysis(&g, &scores, &ActivationOptions { percentile: 80.0, same_state: None }).unwrap();
        assert_eq!(c.points.iter().map(|p| p.n).sum::<usize>(), 10);
        assert_eq!(c.n_active, 2);
        // u07, u08 and u09 each see one active neighbour; two of them are active.
        assert_eq!(c.points[1].n, 3);
        assert_eq!(c.points[1].n_active, 2);
        let empty = SocialGraph::new(GraphKind::Friendship, Vec::new(), Vec::new(), &BTreeMap::new()).unwrap();
        assert!(activation_analysis(&empty, &BTreeMap::new(), &ActivationOptions::default()).unwrap().points.is_empty());
    }

    #[test]
    fn same_state_links_removed() {
        let g = path_graph(4);
        let states: BTreeMap<String, String> =
            [("u00", "A"), ("u01", "A"), ("u02", "B"), ("u03", "B")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let adj = ablated_neighbors(&g, Some(&states));
        assert_eq!(adj.iter().map(Vec::len).sum::<usize>(), 2);
    }

    #[test]
    fn bins_half_open() {
        let e = DEFAULT_JACCARD_BINS;
        assert_eq!(bin_of(&e, 0.0), 0);
        assert_eq!(bin_of(&e, 0.0125), 1);
        assert_eq!(bin_of(&e, 0.2), 5);
        assert_eq!(bin_of(&e, 1.0), 5);
        assert!(validate_bins(&[0.0, 0.5, 0.4, 1.0]).is_err());
    }

    #[test]
    fn identical_friend_sets_single_bin() {
        let nodes: Vec<String> = (0..6).map(|i| format!("n{i}")).collect();
        let edges = vec![("n0".into(), "n1".into()), ("n2".into(), "n3".into()), ("n4".into(), "n5".into())];
        let friends: BTreeMap<String, BTreeSet<String>> =
            nodes.iter().map(|n| (n.clone(), ["x".to_string(), "y".to_string()].into())).collect();
        let g = SocialGraph::new(GraphKind::Friendship, nodes.clone(), edges, &friends).unwrap();
        let frac: BTreeMap<String, f64> =
            [("n0", 0.1), ("n1", 0.1), ("n2", 0.3), ("n3", 0.3), ("n4", 0.6), ("n5", 0.6)].iter().map(|(a, b)| (a.to_string(), *b)).collect();
        let rep = cliqueness_analysis(&g, &frac, &DEFAULT_JACCARD_BINS, 100, 3).unwrap();
        let last = rep.bins.last().unwrap();
        assert_eq!(last.links, 3);
        assert!((last.r.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rep.bins.iter().map(|b| b.links).sum::<usize>(), rep.total_links);
        assert!(rep.bins[0].r.is_none());
    }

    #[test]
    fn csv_roundtrip() {
        let ps = vec![profile("a", &["b", "z"], Gender::Female), profile("b", &["a"], Gender::Male), profile("c", &[], Gender::Male)];
        let g = build_friendship(&ps);
        let dir = tempfile::tempdir().unwrap();
        let (e, f) = (dir.path().join("e.csv"), dir.path().join("f.csv"));
        g.write_edges(&e).unwrap();
        g.write_friend_sets(&f, &friend_sets(&ps)).unwrap();
        let back = SocialGraph::from_csv(GraphKind::Friendship, &e, &f).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        assert_eq!(back.friend_jaccard(0, 1), g.friend_jaccard(0, 1));
    }
}
