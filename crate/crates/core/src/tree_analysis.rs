//! Tight worst-case backlog at the root of a tree network.
//!
//! For a tree whose servers offer rate-latency strict service curves and
//! whose flows are token-bucket constrained, the worst-case backlog at the
//! root for a set `I` of flows ending there is a linear form
//!
//! ```text
//! B = sum_j rho_j * T_j + sum_i phi_i * b_i
//! ```
//!
//! whose coefficients depend on rates only. They are obtained from the
//! amplification factors `xi[j][k]`, one per server `j` and per server `k`
//! on the path from `j` to the root, computed from the root towards the
//! leaves. With `r*_j` the rate of the interest flows at `j` and `r_j^k`
//! the rate of the other flows at `j` that end at `k`:
//!
//! * at the root, `xi = r*_root / (R_root - r_root^root)`;
//! * at a server `j` with successor `s`, destinations are scanned from the
//!   root backwards while `xi[s][k] > cand(j, k)`, copying `xi[s][k]`; at
//!   the first `k` where this fails, every destination from `j` to `k`
//!   gets `cand(j, k)`, where
//!   `cand(j, k) = (r*_j + sum_{l beyond k} xi[s][l] r_j^l) / (R_j - sum_{l from j to k} r_j^l)`.
//!
//! Then `rho_j = r*_j + sum_k xi[j][k] r_j^k`, `phi_i = 1` for interest
//! flows and `phi_i = xi[first(i)][last(i)]` otherwise.

use std::collections::{BTreeMap, VecDeque};

use crate::curves::{Bound, TokenBucket};
use crate::error::{Error, Result};
use crate::network::{Flow, Network, Topology};

/// Coefficients produced by the tree algorithm, in the caller's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct XiTable {
    xi: BTreeMap<(usize, usize), f64>,
    /// Latency weight per server (0 for servers outside the analysed tree).
    pub rho: Vec<f64>,
    /// Burst weight per flow (0 for flows outside the analysed tree).
    pub phi: Vec<f64>,
}

impl XiTable {
    /// `xi` of server `j` for flows ending at `k`, if `k` is on the path
    /// from `j` to the root.
    pub fn xi(&self, j: usize, k: usize) -> Option<f64> {
        self.xi.get(&(j, k)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.xi.iter().map(|(&k, &v)| (k, v))
    }

    pub fn linear_form(&self) -> LinearForm {
        LinearForm {
            burst: self.phi.clone(),
            latency: self.rho.clone(),
        }
    }
}

/// `sum_i burst[i] * b_i + sum_j latency[j] * T_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub burst: Vec<f64>,
    pub latency: Vec<f64>,
}

impl LinearForm {
    pub fn evaluate(&self, net: &Network) -> f64 {
        let b: f64 = self
            .burst
            .iter()
            .zip(net.flows())
            .map(|(c, f)| c * f.arrival.burst)
            .sum();
        let t: f64 = self
            .latency
            .iter()
            .zip(net.servers())
            .map(|(c, s)| c * s.latency)
            .sum();
        b + t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacklogResult {
    pub value: Bound,
    pub xi: XiTable,
    pub form: LinearForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayResult {
    pub value: Bound,
    pub form: LinearForm,
}

/// Tree relabelled so that successors have larger indices and the root is
/// last, with each server's path to the root.
struct Shape {
    net: Network,
    old_of_new: Vec<usize>,
    succ: Vec<Option<usize>>,
    /// `paths[j][d]` is the `d`-th server on the path from `j` to the root.
    paths: Vec<Vec<usize>>,
}

impl Shape {
    fn new(tree: &Network) -> Result<Shape> {
        if !matches!(tree.classify(), Topology::Tandem | Topology::Tree) {
            return Err(Error::NotATree);
        }
        let (net, perm) = tree.renumber()?;
        let n = net.server_count();
        let g = net.induced_graph();
        let succ: Vec<Option<usize>> = (0..n).map(|j| g.successors(j).first().copied()).collect();
        let mut paths: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in (0..n).rev() {
            let mut p = vec![j];
            if let Some(s) = succ[j] {
                p.extend_from_slice(&paths[s]);
            }
            paths[j] = p;
        }
        Ok(Shape {
            net,
            old_of_new: perm.old_of_new,
            succ,
            paths,
        })
    }

    fn root(&self) -> usize {
        self.net.server_count() - 1
    }
}

/// Runs the coefficient algorithm on a tandem or tree network for the flows
/// `interest`, which must all end at the root.
pub fn compute_xi(tree: &Network, interest: &[usize]) -> Result<XiTable> {
    let shape = Shape::new(tree)?;
    let n = shape.net.server_count();
    let root = shape.root();
    let is_interest = interest_mask(tree, interest)?;
    for &i in interest {
        if tree.flows()[i].sink() != shape.old_of_new[root] {
            return Err(Error::InterestNotAtRoot {
                flow: i,
                root: shape.old_of_new[root],
            });
        }
    }
    check_local_stability(&shape.net, &shape.old_of_new)?;

    // r*_j and r_j^k (indexed by position of k on the path of j)
    let mut r_star = vec![0.0; n];
    let mut r_dest: Vec<Vec<f64>> = shape.paths.iter().map(|p| vec![0.0; p.len()]).collect();
    for (i, f) in shape.net.flows().iter().enumerate() {
        let len = f.path.len();
        for (pos, &j) in f.path.iter().enumerate() {
            if is_interest[i] {
                r_star[j] += f.arrival.rate;
            } else {
                r_dest[j][len - 1 - pos] += f.arrival.rate;
            }
        }
    }

    let servers = shape.net.servers();
    let mut xi: Vec<Vec<f64>> = vec![Vec::new(); n];
    xi[root] = vec![r_star[root] / (servers[root].rate - r_dest[root][0])];

    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        if let Some(s) = shape.succ[j] {
            pred[s].push(j);
        }
    }
    let mut queue: VecDeque<usize> = pred[root].iter().copied().collect();
    while let Some(j) = queue.pop_front() {
        let s = shape.succ[j].expect("non-root servers have a successor");
        xi[j] = server_row(&xi[s], r_star[j], &r_dest[j], servers[j].rate);
        queue.extend(pred[j].iter().copied());
    }

    let rho_new: Vec<f64> = (0..n)
        .map(|j| {
            r_star[j]
                + xi[j]
                    .iter()
                    .zip(&r_dest[j])
                    .map(|(x, r)| x * r)
                    .sum::<f64>()
        })
        .collect();

    let mut rho = vec![0.0; tree.server_count()];
    for (j, v) in rho_new.into_iter().enumerate() {
        rho[shape.old_of_new[j]] = v;
    }
    let phi = shape
        .net
        .flows()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if is_interest[i] {
                1.0
            } else {
                xi[f.path[0]][f.path.len() - 1]
            }
        })
        .collect();
    let mut table = BTreeMap::new();
    for j in 0..n {
        for (d, &k) in shape.paths[j].iter().enumerate() {
            table.insert((shape.old_of_new[j], shape.old_of_new[k]), xi[j][d]);
        }
    }
    Ok(XiTable {
        xi: table,
        rho,
        phi,
    })
}

/// Row of server `j` from its successor's row `next` (which is one entry
/// shorter: position `d` for `j` is position `d - 1` for the successor).
fn server_row(next: &[f64], r_star: f64, r_dest: &[f64], rate: f64) -> Vec<f64> {
    let len = r_dest.len();
    let mut row = vec![0.0; len];
    // numerator tail: sum over positions beyond d of next * r
    let mut tail = 0.0;
    // denominator: rate minus rates of positions up to d
    let mut served: f64 = r_dest.iter().sum();
    let mut d = len - 1;
    loop {
        let cand = (r_star + tail) / (rate - served);
        if d == 0 || next[d - 1] <= cand {
            row[..=d].fill(cand);
            return row;
        }
        row[d] = next[d - 1];
        tail += next[d - 1] * r_dest[d];
        served -= r_dest[d];
        d -= 1;
    }
}

/// Sink-tree specialisation: when every flow ends at the root only the
/// root column of `xi` matters, and each server takes the larger of its
/// successor's value and its own candidate. Runs in linear time.
pub fn compute_xi_sink_tree(tree: &Network, interest: &[usize]) -> Result<XiTable> {
    let shape = Shape::new(tree)?;
    let n = shape.net.server_count();
    let root = shape.root();
    if shape.net.flows().iter().any(|f| f.sink() != root) {
        return Err(Error::InvalidParameter("not a sink tree".into()));
    }
    let is_interest = interest_mask(tree, interest)?;
    check_local_stability(&shape.net, &shape.old_of_new)?;
    let mut r_star = vec![0.0; n];
    let mut r_cross = vec![0.0; n];
    for (i, f) in shape.net.flows().iter().enumerate() {
        for &j in &f.path {
            if is_interest[i] {
                r_star[j] += f.arrival.rate;
            } else {
                r_cross[j] += f.arrival.rate;
            }
        }
    }
    let servers = shape.net.servers();
    let mut col = vec![0.0; n];
    for j in (0..n).rev() {
        let own = r_star[j] / (servers[j].rate - r_cross[j]);
        col[j] = match shape.succ[j] {
            Some(s) if col[s] > own => col[s],
            _ => own,
        };
    }
    let mut rho = vec![0.0; tree.server_count()];
    let mut table = BTreeMap::new();
    for j in 0..n {
        rho[shape.old_of_new[j]] = r_star[j] + col[j] * r_cross[j];
        table.insert((shape.old_of_new[j], shape.old_of_new[root]), col[j]);
    }
    let phi = shape
        .net
        .flows()
        .iter()
        .enumerate()
        .map(|(i, f)| if is_interest[i] { 1.0 } else { col[f.path[0]] })
        .collect();
    Ok(XiTable {
        xi: table,
        rho,
        phi,
    })
}

fn interest_mask(net: &Network, interest: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; net.flow_count()];
    for &i in interest {
        if i >= net.flow_count() {
            return Err(Error::InvalidParameter(format!("unknown flow {i}")));
        }
        mask[i] = true;
    }
    Ok(mask)
}

fn check_local_stability(net: &Network, old_of_new: &[usize]) -> Result<()> {
    for j in 0..net.server_count() {
        if !(net.load(j).rate < net.servers()[j].rate) {
            return Err(Error::LocallyUnstable {
                server: old_of_new[j],
            });
        }
    }
    Ok(())
}

/// Worst-case backlog at the root of `tree` for the flows in `interest`.
///
/// A locally unstable tree yields an `Unbounded` value instead of an
/// error; structural problems are still errors.
pub fn tree_backlog(tree: &Network, interest: &[usize]) -> Result<BacklogResult> {
    match compute_xi(tree, interest) {
        Ok(xi) => Ok(result_from_table(tree, xi)),
        Err(Error::LocallyUnstable { .. }) => Ok(BacklogResult {
            value: Bound::Unbounded,
            xi: XiTable {
                xi: BTreeMap::new(),
                rho: vec![0.0; tree.server_count()],
                phi: vec![0.0; tree.flow_count()],
            },
            form: LinearForm {
                burst: vec![0.0; tree.flow_count()],
                latency: vec![0.0; tree.server_count()],
            },
        }),
        Err(e) => Err(e),
    }
}

fn result_from_table(net: &Network, xi: XiTable) -> BacklogResult {
    let form = xi.linear_form();
    BacklogResult {
        value: Bound::Finite(form.evaluate(net)),
        xi,
        form,
    }
}

/// Worst-case backlog at server `at` of a forest for the flows `interest`.
///
/// Only the servers whose path leads to `at` matter: that sub-tree is
/// extracted, flows are clipped at `at`, and the tree algorithm runs on
/// the result. Coefficients of servers and flows outside it are zero.
/// Local instability of the sub-tree is reported as an error.
pub fn tree_backlog_at(net: &Network, at: usize, interest: &[usize]) -> Result<BacklogResult> {
    let (sub, servers, flows) = ancestor_tree(net, at)?;
    let mut sub_interest = Vec::with_capacity(interest.len());
    for &i in interest {
        if i >= net.flow_count() {
            return Err(Error::InvalidParameter(format!("unknown flow {i}")));
        }
        match flows.iter().position(|&f| f == i) {
            Some(p)
                if sub.flows()[p].sink() == servers.len() - 1
                    && net.flows()[i].path.contains(&at) =>
            {
                sub_interest.push(p)
            }
            _ => return Err(Error::InterestNotAtRoot { flow: i, root: at }),
        }
    }
    let table = compute_xi(&sub, &sub_interest)?;
    let mut rho = vec![0.0; net.server_count()];
    for (j, v) in table.rho.iter().enumerate() {
        rho[servers[j]] = *v;
    }
    let mut phi = vec![0.0; net.flow_count()];
    for (p, v) in table.phi.iter().enumerate() {
        phi[flows[p]] = *v;
    }
    let xi = table
        .xi
        .iter()
        .map(|(&(j, k), &v)| ((servers[j], servers[k]), v))
        .collect();
    Ok(result_from_table(net, XiTable { xi, rho, phi }))
}

/// Sub-network of the servers leading to `at`, with `at` last. Returns the
/// sub-network, its server labels and the original index of each kept flow.
fn ancestor_tree(net: &Network, at: usize) -> Result<(Network, Vec<usize>, Vec<usize>)> {
    if at >= net.server_count() {
        return Err(Error::InvalidParameter(format!("unknown server {at}")));
    }
    let g = net.induced_graph();
    let dist = g.distances_to(at);
    let inside: Vec<bool> = dist.iter().map(Option::is_some).collect();
    for j in (0..g.n).filter(|&j| inside[j] && j != at) {
        if g.successors(j).len() != 1 {
            return Err(Error::NotATree);
        }
    }
    // farthest servers first so that `at` comes last
    let mut servers: Vec<usize> = (0..g.n).filter(|&j| inside[j]).collect();
    servers.sort_by_key(|&j| (std::cmp::Reverse(dist[j].unwrap()), j));
    let mut new_of_old = vec![usize::MAX; g.n];
    for (new, &old) in servers.iter().enumerate() {
        new_of_old[old] = new;
    }
    let mut kept = Vec::new();
    let mut sub_flows = Vec::new();
    for (i, f) in net.flows().iter().enumerate() {
        if !inside[f.path[0]] {
            continue;
        }
        let mut path = Vec::new();
        for &j in &f.path {
            path.push(new_of_old[j]);
            if j == at {
                break;
            }
        }
        kept.push(i);
        sub_flows.push(Flow::new(path, f.arrival));
    }
    let sub = Network::new(
        servers.iter().map(|&j| net.servers()[j]).collect(),
        sub_flows,
    )?;
    Ok((sub, servers, kept))
}

/// Worst-case end-to-end delay of flow `i`, which must end at the root.
pub fn tree_delay(tree: &Network, i: usize) -> Result<Bound> {
    let root = tree.induced_graph().common_root().ok_or(Error::NotATree)?;
    if i >= tree.flow_count() {
        return Err(Error::InvalidParameter(format!("unknown flow {i}")));
    }
    if tree.flows()[i].sink() != root {
        return Err(Error::InterestNotAtRoot { flow: i, root });
    }
    match tree_delay_at(tree, i) {
        Ok(d) => Ok(d.value),
        Err(Error::LocallyUnstable { .. }) => Ok(Bound::Unbounded),
        Err(e) => Err(e),
    }
}

/// Worst-case delay of flow `i` over its whole path, analysed on the
/// sub-tree leading to its last server, with its linear form.
///
/// The delay is `(B - b_i) / r_i + xi[first][last] * b_i / r_i` where `B`
/// is the worst-case backlog of `{i}` at its last server.
pub fn tree_delay_at(net: &Network, i: usize) -> Result<DelayResult> {
    let flow = net
        .flows()
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown flow {i}")))?;
    let rate = flow.arrival.rate;
    if rate <= 0.0 {
        return Err(Error::ZeroRateFlow { flow: i });
    }
    let backlog = tree_backlog_at(net, flow.sink(), &[i])?;
    let own = backlog
        .xi
        .xi(flow.source(), flow.sink())
        .expect("the flow's own path is in the analysed tree");
    let mut burst: Vec<f64> = backlog.form.burst.iter().map(|c| c / rate).collect();
    burst[i] = own / rate;
    let latency = backlog.form.latency.iter().map(|c| c / rate).collect();
    let form = LinearForm { burst, latency };
    Ok(DelayResult {
        value: Bound::Finite(form.evaluate(net)),
        form,
    })
}

/// Arrival curve of the departures of `interest` from the root.
pub fn tree_output_curve(tree: &Network, interest: &[usize]) -> Result<TokenBucket> {
    let rate: f64 = interest.iter().map(|&i| tree.flows()[i].arrival.rate).sum();
    if interest.is_empty() {
        return Ok(TokenBucket::ZERO);
    }
    let backlog = tree_backlog(tree, interest)?;
    crate::curves::output_curve(backlog.value, rate)
}
