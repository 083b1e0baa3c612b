//! Feed-forward transformation: remove arcs from the induced graph, split
//! every flow at the removed arcs it traverses, and group the resulting
//! segments.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::curves::TokenBucket;
use crate::error::{Error, Result};
use crate::network::{Arc, Flow, InducedGraph, Network};

/// Piece of a flow between two removed arcs.
///
/// `index` is 0-based: segment 0 starts where the flow enters the network
/// and is the only one whose burst is known in advance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub flow: usize,
    pub index: usize,
    pub path: Vec<usize>,
}

impl Segment {
    pub fn burst_known(&self) -> bool {
        self.index == 0
    }

    pub fn last(&self) -> usize {
        *self.path.last().expect("segments are nonempty")
    }
}

/// Network whose flows have been split along a set of removed arcs.
#[derive(Debug, Clone)]
pub struct FeedForward {
    base: Network,
    segments: Vec<Segment>,
    removed: BTreeSet<Arc>,
    by_flow: Vec<Vec<usize>>,
}

impl FeedForward {
    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn removed(&self) -> &BTreeSet<Arc> {
        &self.removed
    }

    /// Segment ids of flow `flow`, in path order.
    pub fn segments_of(&self, flow: usize) -> &[usize] {
        &self.by_flow[flow]
    }

    pub fn segment_id(&self, flow: usize, index: usize) -> Option<usize> {
        self.by_flow.get(flow)?.get(index).copied()
    }

    /// Segment of `flow` that crosses `server`, if any.
    pub fn segment_at(&self, flow: usize, server: usize) -> Option<usize> {
        self.by_flow[flow]
            .iter()
            .copied()
            .find(|&s| self.segments[s].path.contains(&server))
    }

    pub fn rate(&self, segment: usize) -> f64 {
        self.base.flows()[self.segments[segment].flow].arrival.rate
    }

    /// Burst of a first segment; `None` for continuations.
    pub fn known_burst(&self, segment: usize) -> Option<f64> {
        let s = &self.segments[segment];
        s.burst_known()
            .then(|| self.base.flows()[s.flow].arrival.burst)
    }

    /// Segment that continues `segment` across a removed arc.
    pub fn continuation(&self, segment: usize) -> Option<usize> {
        let s = &self.segments[segment];
        self.segment_id(s.flow, s.index + 1)
    }

    pub fn kept_graph(&self) -> InducedGraph {
        let mut g = self.base.induced_graph();
        g.arcs.retain(|a| !self.removed.contains(a));
        g
    }

    /// The split network itself: one flow per segment, in segment order.
    /// Continuation segments get a zero burst; analyses that need their
    /// bursts read them from the linear forms instead.
    pub fn segment_network(&self) -> Network {
        let flows = self
            .segments
            .iter()
            .enumerate()
            .map(|(s, seg)| {
                let burst = self.known_burst(s).unwrap_or(0.0);
                Flow::new(
                    seg.path.clone(),
                    TokenBucket {
                        burst,
                        rate: self.rate(s),
                    },
                )
            })
            .collect();
        Network::new(self.base.servers().to_vec(), flows)
            .expect("segments of a valid network are valid flows")
    }
}

/// Splits every flow of `net` at each traversal of an arc in `removed`.
pub fn decompose(net: &Network, removed: &BTreeSet<Arc>) -> Result<FeedForward> {
    let graph = net.induced_graph();
    if let Some(a) = removed.iter().find(|a| !graph.arcs.contains(a)) {
        return Err(Error::UnknownArc(*a));
    }
    let mut segments = Vec::new();
    let mut by_flow = Vec::with_capacity(net.flow_count());
    for (i, f) in net.flows().iter().enumerate() {
        let mut ids = Vec::new();
        let mut current = vec![f.path[0]];
        for w in f.path.windows(2) {
            if removed.contains(&(w[0], w[1])) {
                ids.push(segments.len());
                segments.push(Segment {
                    flow: i,
                    index: ids.len() - 1,
                    path: std::mem::take(&mut current),
                });
            }
            current.push(w[1]);
        }
        ids.push(segments.len());
        segments.push(Segment {
            flow: i,
            index: ids.len() - 1,
            path: current,
        });
        by_flow.push(ids);
    }
    let ff = FeedForward {
        base: net.clone(),
        segments,
        removed: removed.clone(),
        by_flow,
    };
    if !ff.kept_graph().is_acyclic() {
        return Err(Error::ResidualCyclic);
    }
    Ok(ff)
}

/// Every arc: each server is analysed in isolation.
pub fn removal_all(net: &Network) -> BTreeSet<Arc> {
    net.induced_graph().arcs
}

/// Removal leaving a forest of in-trees.
///
/// Keeps a breadth-first in-tree grown backwards from `root` (default: the
/// highest-index server) and removes every other arc. Servers that cannot
/// reach the root seed further trees, highest index first. Predecessors are
/// explored in increasing index order, so the result is deterministic.
pub fn removal_tree(net: &Network, root: Option<usize>) -> BTreeSet<Arc> {
    let g = net.induced_graph();
    let n = g.n;
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, k) in &g.arcs {
        pred[k].push(i);
    }
    let mut visited = vec![false; n];
    let mut kept = BTreeSet::new();
    let mut roots: Vec<usize> = (0..n).rev().collect();
    if let Some(r) = root.filter(|&r| r < n) {
        roots.retain(|&x| x != r);
        roots.insert(0, r);
    }
    for r in roots {
        if visited[r] {
            continue;
        }
        visited[r] = true;
        let mut queue = VecDeque::from([r]);
        while let Some(k) = queue.pop_front() {
            for &i in &pred[k] {
                if !visited[i] {
                    visited[i] = true;
                    kept.insert((i, k));
                    queue.push_back(i);
                }
            }
        }
    }
    g.arcs.difference(&kept).copied().collect()
}

/// Partition of the segment ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub blocks: Vec<Vec<usize>>,
}

impl Grouping {
    pub fn is_partition_of(&self, count: usize) -> bool {
        let mut seen = vec![false; count];
        for &s in self.blocks.iter().flatten() {
            if s >= count || seen[s] {
                return false;
            }
            seen[s] = true;
        }
        seen.into_iter().all(|x| x)
    }
}

/// Segments around one removed arc `(tail, head)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcGroup {
    pub arc: Arc,
    /// Segments ending at the tail and continuing across the arc.
    pub feeding: Vec<usize>,
    /// Their continuations, starting at the head.
    pub continuing: Vec<usize>,
}

pub fn group_singletons(ff: &FeedForward) -> Grouping {
    Grouping {
        blocks: (0..ff.segments().len()).map(|s| vec![s]).collect(),
    }
}

/// Groups continuation segments by the removed arc they come through;
/// first segments stay singletons.
pub fn group_by_arc(ff: &FeedForward) -> (Grouping, Vec<ArcGroup>) {
    let mut groups: BTreeMap<Arc, ArcGroup> = ff
        .removed()
        .iter()
        .map(|&a| {
            (
                a,
                ArcGroup {
                    arc: a,
                    feeding: Vec::new(),
                    continuing: Vec::new(),
                },
            )
        })
        .collect();
    let mut blocks = Vec::new();
    for (s, seg) in ff.segments().iter().enumerate() {
        if seg.burst_known() {
            blocks.push(vec![s]);
        }
        if let Some(next) = ff.continuation(s) {
            let arc = (seg.last(), ff.segments()[next].path[0]);
            let g = groups.get_mut(&arc).expect("split points are removed arcs");
            g.feeding.push(s);
            g.continuing.push(next);
        }
    }
    let groups: Vec<ArcGroup> = groups
        .into_values()
        .filter(|g| !g.feeding.is_empty())
        .collect();
    blocks.extend(groups.iter().map(|g| g.continuing.clone()));
    (Grouping { blocks }, groups)
}
