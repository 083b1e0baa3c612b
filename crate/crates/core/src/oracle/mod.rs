//! Independent checks of the tree analysis: an exhaustive evaluation of the
//! backward recursion over every service case, and a discrete-time fluid
//! simulator.

mod simulate;

pub use simulate::{
    check_arrivals, check_strict_service, simulate_fluid, worst_case_scenario, write_csv,
    ArrivalPattern, Scenario, ServerPlan, ServiceMode, SimulationResult, Trace, Trajectory,
};

use crate::error::{Error, Result};
use crate::network::{Network, Topology};

/// Largest tree handled by [`appendix_backlog_bruteforce`].
pub const MAX_SERVERS: usize = 8;

/// Outcome of the exhaustive evaluation, in the caller's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub value: f64,
    /// For each server, the farthest destination whose flows it serves
    /// during its backlogged period in the maximising case.
    pub cases: Vec<usize>,
    /// Length of each server's backlogged period in the maximising case.
    pub periods: Vec<f64>,
}

/// Worst-case backlog at the root for the flows `interest`, obtained by
/// evaluating every combination of service cases.
///
/// Each server `j` picks a destination `k` on its path to the root. During
/// its backlogged period it serves the flows ending between `j` and `k`
/// (interest flows excluded), which lasts
/// `T_j + sum Q / (R_j - sum r)`; everything else is held, then released
/// downstream at once. `Q` is the data of a destination class: the burst of
/// flows starting at `j`, what was released by the predecessors, and the
/// arrivals during the latency.
pub fn appendix_backlog_bruteforce(tree: &Network, interest: &[usize]) -> Result<BruteForce> {
    if tree.server_count() > MAX_SERVERS {
        return Err(Error::TooLarge {
            max: MAX_SERVERS,
            got: tree.server_count(),
        });
    }
    if !matches!(tree.classify(), Topology::Tandem | Topology::Tree) {
        return Err(Error::NotATree);
    }
    let (net, perm) = tree.renumber()?;
    let n = net.server_count();
    let root = n - 1;
    let mut is_interest = vec![false; net.flow_count()];
    for &i in interest {
        if i >= net.flow_count() {
            return Err(Error::InvalidParameter(format!("unknown flow {i}")));
        }
        if net.flows()[i].sink() != root {
            return Err(Error::InterestNotAtRoot {
                flow: i,
                root: perm.old_of_new[root],
            });
        }
        is_interest[i] = true;
    }
    for j in 0..n {
        if !(net.load(j).rate < net.servers()[j].rate) {
            return Err(Error::LocallyUnstable {
                server: perm.old_of_new[j],
            });
        }
    }

    let g = net.induced_graph();
    let succ: Vec<Option<usize>> = (0..n).map(|j| g.successors(j).first().copied()).collect();
    let mut depth = vec![0usize; n];
    for j in (0..n).rev() {
        if let Some(s) = succ[j] {
            depth[j] = depth[s] + 1;
        }
    }
    // per server, per destination position: rates and starting bursts of
    // the other flows; for interest flows: rate and starting burst
    let mut rate = vec![vec![]; n];
    let mut burst = vec![vec![]; n];
    for j in 0..n {
        rate[j] = vec![0.0; depth[j] + 1];
        burst[j] = vec![0.0; depth[j] + 1];
    }
    let mut star_rate = vec![0.0; n];
    let mut star_burst = vec![0.0; n];
    for (i, f) in net.flows().iter().enumerate() {
        let len = f.path.len();
        for (pos, &j) in f.path.iter().enumerate() {
            if is_interest[i] {
                star_rate[j] += f.arrival.rate;
                if pos == 0 {
                    star_burst[j] += f.arrival.burst;
                }
            } else {
                rate[j][len - 1 - pos] += f.arrival.rate;
                if pos == 0 {
                    burst[j][len - 1 - pos] += f.arrival.burst;
                }
            }
        }
    }

    let mut cases = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    loop {
        let mut released: Vec<Vec<f64>> = depth.iter().map(|&d| vec![0.0; d + 1]).collect();
        let mut released_star = vec![0.0; n];
        let mut periods = vec![0.0; n];
        for j in 0..n {
            let beta = net.servers()[j];
            let q: Vec<f64> = (0..=depth[j])
                .map(|d| burst[j][d] + released[j][d] + rate[j][d] * beta.latency)
                .collect();
            let k = cases[j];
            let sq: f64 = q[..=k].iter().sum();
            let sr: f64 = rate[j][..=k].iter().sum();
            let wait = sq / (beta.rate - sr);
            periods[j] = beta.latency + wait;
            let star = star_burst[j] + released_star[j] + star_rate[j] * periods[j];
            match succ[j] {
                Some(s) => {
                    for d in k + 1..=depth[j] {
                        released[s][d - 1] += q[d] + rate[j][d] * wait;
                    }
                    released_star[s] += star;
                }
                None => {
                    if best.as_ref().is_none_or(|b| star > b.0) {
                        best = Some((star, cases.clone(), periods.clone()));
                    }
                }
            }
        }
        // next case vector; position 0 is the smallest destination index
        let mut j = 0;
        loop {
            if j == n {
                let (value, cases_new, periods_new) = best.expect("at least one case");
                let mut cases_out = vec![0; n];
                let mut periods_out = vec![0.0; n];
                for new in 0..n {
                    let mut k = new;
                    for _ in 0..cases_new[new] {
                        k = succ[k].expect("case within path");
                    }
                    cases_out[perm.old_of_new[new]] = perm.old_of_new[k];
                    periods_out[perm.old_of_new[new]] = periods_new[new];
                }
                return Ok(BruteForce {
                    value,
                    cases: cases_out,
                    periods: periods_out,
                });
            }
            if cases[j] < depth[j] {
                cases[j] += 1;
                break;
            }
            cases[j] = 0;
            j += 1;
        }
    }
}
