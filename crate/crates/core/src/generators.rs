//! Parameterised network families.
//!
//! Every family has unit bursts and rates (1 kb, 1 kb/s) and 10 ms
//! latencies unless stated otherwise, and is defined by its network at
//! utilisation 1; the network at utilisation `U` divides every service
//! rate by `U`.

use std::collections::BTreeSet;

use crate::curves::{RateLatency, TokenBucket};
use crate::error::{Error, Result};
use crate::network::{Arc, Flow, Network};
use crate::stability::{at_utilization, Target};

pub const BURST: f64 = 1.0;
pub const RATE: f64 = 1.0;
pub const LATENCY: f64 = 0.01;

/// Default length of the flows of the third ring of [`three_ring`].
pub const THREE_RING_SHORT: usize = 5;

fn unit_flow(path: Vec<usize>) -> Flow {
    Flow::new(
        path,
        TokenBucket {
            burst: BURST,
            rate: RATE,
        },
    )
}

/// Network whose server `j` has rate `weight[j] * load_j`, so that it runs
/// at utilisation `1 / weight[j]`.
fn with_loads(n: usize, flows: Vec<Flow>, weight: impl Fn(usize) -> f64) -> Result<Network> {
    let mut load = vec![0.0; n];
    for f in &flows {
        for &j in &f.path {
            load[j] += f.arrival.rate;
        }
    }
    let servers = (0..n)
        .map(|j| {
            if load[j] <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "server {j} carries no flow"
                )));
            }
            RateLatency::new(weight(j) * load[j], LATENCY)
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(servers, flows)
}

/// Ring of `n` servers with arcs `(j, j + 1)` and `(n - 1, 0)`, crossed by
/// `n` flows: flow `i` starts at server `i` and goes once around.
pub fn uni_ring(n: usize) -> Result<Network> {
    uni_ring_with_slow(n, None)
}

/// Ring of [`uni_ring`] where only the `slow` servers run at full
/// utilisation and the others are twice as fast.
pub fn uni_ring_heterogeneous(n: usize, slow: &[usize]) -> Result<Network> {
    uni_ring_with_slow(n, Some(slow))
}

fn uni_ring_with_slow(n: usize, slow: Option<&[usize]>) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "a ring needs at least 2 servers".into(),
        ));
    }
    if let Some(&j) = slow.and_then(|s| s.iter().find(|&&j| j >= n)) {
        return Err(Error::InvalidParameter(format!("unknown server {j}")));
    }
    let flows = (0..n)
        .map(|i| unit_flow((0..n).map(|k| (i + k) % n).collect()))
        .collect();
    with_loads(n, flows, |j| match slow {
        Some(s) if !s.contains(&j) => 2.0,
        _ => 1.0,
    })
}

/// The cut arc of a unidirectional ring: `(n - 1, 0)`.
pub fn uni_ring_removal(n: usize) -> BTreeSet<Arc> {
    BTreeSet::from([(n - 1, 0)])
}

/// Ring of `n` servers used in both directions by `2n` flows of length
/// `n`: flow `i < n` goes clockwise from server `i`, flow `n + i` goes
/// counter-clockwise from server `i` (flow `n` starting at server `n - 1`).
pub fn bi_ring(n: usize) -> Result<Network> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "a ring needs at least 2 servers".into(),
        ));
    }
    let mut flows: Vec<Flow> = (0..n)
        .map(|i| unit_flow((0..n).map(|k| (i + k) % n).collect()))
        .collect();
    flows.push(unit_flow((0..n).rev().collect()));
    for i in 1..n {
        flows.push(unit_flow((0..n).map(|k| (i + n - k) % n).collect()));
    }
    with_loads(n, flows, |_| 1.0)
}

/// Cut of the bidirectional ring keeping only the arcs `(j, j + 1)`.
pub fn bi_ring_removal(n: usize) -> BTreeSet<Arc> {
    let mut r = BTreeSet::from([(n - 1, 0), (0, n - 1)]);
    r.extend((1..n).map(|j| (j, j - 1)));
    r
}

/// Four-server network with cyclic dependencies, paths (0-based)
/// `<2,3,1>`, `<3,1,2>`, `<1,0,2>` and `<1,2,3>`.
pub fn toy() -> Result<Network> {
    let flows = vec![
        unit_flow(vec![2, 3, 1]),
        unit_flow(vec![3, 1, 2]),
        unit_flow(vec![1, 0, 2]),
        unit_flow(vec![1, 2, 3]),
    ];
    with_loads(4, flows, |_| 1.0)
}

/// Cut of the toy network leaving the tree `0 -> 2 -> 3`, `1 -> 2`.
pub fn toy_removal() -> BTreeSet<Arc> {
    BTreeSet::from([(3, 1), (1, 0)])
}

/// Two-server sink tree: flow 0 crosses servers 0 then 1, flow 1 only
/// server 1, which is twice as fast as server 0.
pub fn fig2(burst: f64, rate: f64, service_rate: f64, latency: f64) -> Result<Network> {
    let arrival = TokenBucket::new(burst, rate)?;
    Network::new(
        vec![
            RateLatency::new(service_rate, latency)?,
            RateLatency::new(2.0 * service_rate, latency)?,
        ],
        vec![Flow::new(vec![0, 1], arrival), Flow::new(vec![1], arrival)],
    )
}

/// Three rings of 10 servers, `A`, `B` and `C`, each sharing one server
/// with each of the others: `A[5] = B[0]`, `B[5] = C[0]` and
/// `C[5] = A[0]` (27 servers). Rings `A` and `B` carry 10 flows each that
/// go once around, one from each of their servers; ring `C` carries 10
/// flows of length `short`, one from each of its servers.
///
/// Servers are numbered `A[0..10]` as 0 to 9, then the 9 servers of `B`
/// other than `B[0]`, then the 8 servers of `C` other than `C[0]` and
/// `C[5]`.
pub fn three_ring(short: usize) -> Result<Network> {
    if !(1..=10).contains(&short) {
        return Err(Error::InvalidParameter(format!(
            "short flow length {short} must be within 1..=10"
        )));
    }
    let a: Vec<usize> = (0..10).collect();
    let mut b = vec![a[5]];
    b.extend(10..19);
    let mut c = vec![b[5]];
    c.extend(19..23);
    c.push(a[0]);
    c.extend(23..27);
    let ring_flows = |ring: &[usize], len: usize| -> Vec<Flow> {
        (0..10)
            .map(|i| unit_flow((0..len).map(|k| ring[(i + k) % 10]).collect()))
            .collect()
    };
    let mut flows = ring_flows(&a, 10);
    flows.extend(ring_flows(&b, 10));
    flows.extend(ring_flows(&c, short));
    with_loads(27, flows, |_| 1.0)
}

/// Cut of [`three_ring`] leaving one in-tree rooted at `A[5]`: both arcs
/// leaving `A[5]`, the arc of ring `C` leaving `A[0]` and the arc of ring
/// `C` leaving `B[5]`. Arcs absent from the network (ring `C` with flows of
/// length 1) are skipped.
pub fn three_ring_removal(short: usize) -> Result<BTreeSet<Arc>> {
    let arcs = three_ring(short)?.induced_graph().arcs;
    Ok([(0, 23), (5, 6), (5, 10), (14, 19)]
        .into_iter()
        .filter(|a| arcs.contains(a))
        .collect())
}

/// Named families as exposed on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Family {
    UniRing { n: usize, slow: Option<Vec<usize>> },
    BiRing { n: usize },
    ThreeRing { short: usize },
    Toy,
    Fig2,
}

impl Family {
    /// Network at utilisation 1.
    pub fn base(&self) -> Result<Network> {
        match self {
            Family::UniRing { n, slow: None } => uni_ring(*n),
            Family::UniRing { n, slow: Some(s) } => uni_ring_heterogeneous(*n, s),
            Family::BiRing { n } => bi_ring(*n),
            Family::ThreeRing { short } => three_ring(*short),
            Family::Toy => toy(),
            Family::Fig2 => fig2(BURST, RATE, RATE, LATENCY),
        }
    }

    pub fn network(&self, u: f64) -> Result<Network> {
        at_utilization(&self.base()?, u)
    }

    /// Arcs cut by the tree-based methods; `None` for the default cut.
    pub fn removal(&self) -> Option<BTreeSet<Arc>> {
        match self {
            Family::UniRing { n, .. } => Some(uni_ring_removal(*n)),
            Family::BiRing { n } => Some(bi_ring_removal(*n)),
            Family::ThreeRing { short } => three_ring_removal(*short).ok(),
            Family::Toy => Some(toy_removal()),
            Family::Fig2 => None,
        }
    }

    /// Default bound: backlog of flow 0 at the last server of its path.
    pub fn target(&self) -> Result<Target> {
        let base = self.base()?;
        Ok(Target::Backlog {
            server: base.flows()[0].sink(),
            flows: vec![0],
        })
    }
}
