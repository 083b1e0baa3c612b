//! Network model: servers, flows, the induced graph and its topology class.
//!
//! Servers and flows are 0-based internally. The JSON file format (see
//! [`crate::io`]) is 1-based.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::curves::{classify_server, RateLatency, ServerClass, TokenBucket};
use crate::error::{Error, Result};

/// Ordered server pair `(from, to)`.
pub type Arc = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub path: Vec<usize>,
    pub arrival: TokenBucket,
}

impl Flow {
    pub fn new(path: Vec<usize>, arrival: TokenBucket) -> Self {
        Flow { path, arrival }
    }

    pub fn source(&self) -> usize {
        self.path[0]
    }

    pub fn sink(&self) -> usize {
        *self.path.last().expect("validated paths are nonempty")
    }
}

/// Servers with rate-latency service curves crossed by token-bucket flows.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    servers: Vec<RateLatency>,
    flows: Vec<Flow>,
}

impl Network {
    /// Builds a network, rejecting empty paths, unknown servers and paths
    /// that visit a server twice.
    pub fn new(servers: Vec<RateLatency>, flows: Vec<Flow>) -> Result<Self> {
        if servers.is_empty() {
            return Err(Error::InvalidNetwork("network has no server".into()));
        }
        for (j, s) in servers.iter().enumerate() {
            RateLatency::new(s.rate, s.latency)
                .map_err(|e| Error::InvalidNetwork(format!("server {j}: {e}")))?;
        }
        for (i, f) in flows.iter().enumerate() {
            if f.path.is_empty() {
                return Err(Error::InvalidNetwork(format!("flow {i} has an empty path")));
            }
            TokenBucket::new(f.arrival.burst, f.arrival.rate)
                .map_err(|e| Error::InvalidNetwork(format!("flow {i}: {e}")))?;
            let mut seen = BTreeSet::new();
            for &j in &f.path {
                if j >= servers.len() {
                    return Err(Error::InvalidNetwork(format!(
                        "flow {i} crosses unknown server {j}"
                    )));
                }
                if !seen.insert(j) {
                    return Err(Error::InvalidNetwork(format!(
                        "flow {i} visits server {j} twice"
                    )));
                }
            }
        }
        Ok(Network { servers, flows })
    }

    pub fn servers(&self) -> &[RateLatency] {
        &self.servers
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn server_count(&self) -> usize {
        self.servers.len()
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    /// Flows crossing server `j`, in increasing index order.
    pub fn flows_through(&self, j: usize) -> Vec<usize> {
        self.flows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.path.contains(&j))
            .map(|(i, _)| i)
            .collect()
    }

    /// Aggregate arrival curve of the flows crossing `j`.
    pub fn load(&self, j: usize) -> TokenBucket {
        self.flows
            .iter()
            .filter(|f| f.path.contains(&j))
            .map(|f| f.arrival)
            .sum()
    }

    pub fn induced_graph(&self) -> InducedGraph {
        let mut arcs = BTreeSet::new();
        for f in &self.flows {
            for w in f.path.windows(2) {
                arcs.insert((w[0], w[1]));
            }
        }
        InducedGraph {
            n: self.servers.len(),
            arcs,
        }
    }

    pub fn classify(&self) -> Topology {
        self.induced_graph().topology()
    }

    pub fn local_stability(&self) -> LocalStability {
        let classes: Vec<ServerClass> = (0..self.servers.len())
            .map(|j| classify_server(&self.load(j), &self.servers[j]))
            .collect();
        let stable = classes.iter().all(|c| *c == ServerClass::Stable);
        LocalStability { classes, stable }
    }

    /// Relabels servers so that every server except the last one has an
    /// arc to a server with a larger index, the last one being a root
    /// reachable from every server.
    ///
    /// The root is the highest-index server reachable from all others; the
    /// other servers are ordered by decreasing distance to the root, ties
    /// broken by original index. Trees come out with every successor
    /// numbered above its predecessors and the sink last.
    pub fn renumber(&self) -> Result<(Network, Renumbering)> {
        let g = self.induced_graph();
        let root = g.common_root().ok_or(Error::NoRoot)?;
        let dist = g.distances_to(root);
        let mut order: Vec<usize> = (0..g.n).collect();
        order.sort_by_key(|&j| (std::cmp::Reverse(dist[j].unwrap_or(usize::MAX)), j));
        let mut new_of_old = vec![0; g.n];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old] = new;
        }
        let renumbering = Renumbering {
            new_of_old,
            old_of_new: order,
        };
        Ok((renumbering.apply(self), renumbering))
    }

    /// Copy of the network with every flow rate and service rate scaled.
    pub fn with_scaled_rates(&self, factor: f64) -> Result<Network> {
        let servers = self
            .servers
            .iter()
            .map(|s| RateLatency::new(s.rate * factor, s.latency))
            .collect::<Result<Vec<_>>>()?;
        let flows = self
            .flows
            .iter()
            .map(|f| {
                Ok(Flow::new(
                    f.path.clone(),
                    TokenBucket::new(f.arrival.burst, f.arrival.rate * factor)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(servers, flows)
    }
}

/// Server permutation returned by [`Network::renumber`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Renumbering {
    pub new_of_old: Vec<usize>,
    pub old_of_new: Vec<usize>,
}

impl Renumbering {
    pub fn is_identity(&self) -> bool {
        self.new_of_old.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn apply(&self, net: &Network) -> Network {
        let servers = self
            .old_of_new
            .iter()
            .map(|&old| net.servers[old])
            .collect();
        let flows = net
            .flows
            .iter()
            .map(|f| {
                Flow::new(
                    f.path.iter().map(|&j| self.new_of_old[j]).collect(),
                    f.arrival,
                )
            })
            .collect();
        Network { servers, flows }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Tandem,
    Tree,
    FeedForward,
    Cyclic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalStability {
    pub classes: Vec<ServerClass>,
    pub stable: bool,
}

/// Directed graph on the servers whose arcs are the consecutive pairs of
/// the flow paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedGraph {
    pub n: usize,
    pub arcs: BTreeSet<Arc>,
}

impl InducedGraph {
    pub fn from_arcs(n: usize, arcs: impl IntoIterator<Item = Arc>) -> Self {
        InducedGraph {
            n,
            arcs: arcs.into_iter().collect(),
        }
    }

    pub fn successors(&self, j: usize) -> Vec<usize> {
        self.arcs
            .range((j, 0)..(j + 1, 0))
            .map(|&(_, k)| k)
            .collect()
    }

    pub fn predecessors(&self, j: usize) -> Vec<usize> {
        self.arcs
            .iter()
            .filter(|&&(_, k)| k == j)
            .map(|&(i, _)| i)
            .collect()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, _) in &self.arcs {
            deg[i] += 1;
        }
        deg
    }

    /// Kahn's algorithm, smallest ready index first. `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg = vec![0usize; self.n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for &(i, k) in &self.arcs {
            indeg[k] += 1;
            succ[i].push(k);
        }
        let mut ready: BTreeSet<usize> = (0..self.n).filter(|&j| indeg[j] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(j) = ready.pop_first() {
            order.push(j);
            for &k in &succ[j] {
                indeg[k] -= 1;
                if indeg[k] == 0 {
                    ready.insert(k);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Every server has at most one outgoing arc and there is no cycle.
    pub fn is_forest(&self) -> bool {
        self.out_degrees().iter().all(|&d| d <= 1) && self.is_acyclic()
    }

    pub fn topology(&self) -> Topology {
        if !self.is_acyclic() {
            return Topology::Cyclic;
        }
        let out = self.out_degrees();
        let sinks = out.iter().filter(|&&d| d == 0).count();
        if sinks != 1 || out.iter().any(|&d| d > 1) {
            return Topology::FeedForward;
        }
        let mut indeg = vec![0; self.n];
        for &(_, k) in &self.arcs {
            indeg[k] += 1;
        }
        if indeg.iter().all(|&d| d <= 1) {
            Topology::Tandem
        } else {
            Topology::Tree
        }
    }

    /// BFS distance (in arcs) from every server to `root`.
    pub fn distances_to(&self, root: usize) -> Vec<Option<usize>> {
        let mut pred: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(i, k) in &self.arcs {
            pred.entry(k).or_default().push(i);
        }
        let mut dist = vec![None; self.n];
        dist[root] = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(k) = queue.pop_front() {
            let d = dist[k].unwrap();
            for &i in pred.get(&k).map(Vec::as_slice).unwrap_or(&[]) {
                if dist[i].is_none() {
                    dist[i] = Some(d + 1);
                    queue.push_back(i);
                }
            }
        }
        dist
    }

    /// Highest-index server reachable from every server.
    pub fn common_root(&self) -> Option<usize> {
        (0..self.n)
            .rev()
            .find(|&r| self.distances_to(r).iter().all(Option::is_some))
    }
}
