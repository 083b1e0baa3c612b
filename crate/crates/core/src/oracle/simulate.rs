//! Discrete-time fluid simulation of feed-forward networks.
//!
//! Time is cut into steps of length `dt`. During step `k`, taken in
//! topological order, every server first receives the data of the step
//! (fresh arrivals of the flows starting there and what its predecessors
//! send during the same step), then serves. A server in exact mode serves,
//! over a backlogged period started at step `k0`, exactly
//! `beta((k + 1 - k0) dt)` in total, capped by its backlog; in infinite
//! mode it serves everything it holds.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curves::RateLatency;
use crate::error::{Error, Result};
use crate::network::Network;

use super::appendix_backlog_bruteforce;

/// Amount below which a queue is treated as empty.
const EMPTY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceMode {
    Exact,
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalPattern {
    /// Nothing is ever sent.
    Silent,
    /// Full burst at `start`, then the sustained rate.
    Greedy { start: f64 },
    /// Random amounts within the token bucket, from `start`.
    Random { seed: u64, start: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServerPlan {
    /// Mode changes as `(time, mode)`, sorted by time. Exact before the
    /// first change.
    pub modes: Vec<(f64, ServiceMode)>,
    /// Flows in decreasing priority. Flows not listed come last, by index.
    pub priority: Vec<usize>,
    /// When set, the server switches to infinite mode for good (releasing
    /// everything it holds) as soon as, during a backlogged period, its
    /// latency has elapsed and these flows have nothing left queued.
    pub flush_after: Option<Vec<usize>>,
    /// Serve infinitely fast until a server upstream releases its held data
    /// with `flush_after`.
    pub wait_for_upstream: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dt: f64,
    pub steps: usize,
    pub arrivals: Vec<ArrivalPattern>,
    pub servers: Vec<ServerPlan>,
}

impl Scenario {
    /// Step for `dt` as used by default: a hundredth of the smallest
    /// latency, or 1e-3 when every latency is zero.
    pub fn default_dt(net: &Network) -> f64 {
        let min = net
            .servers()
            .iter()
            .map(|s| s.latency)
            .fold(f64::INFINITY, f64::min);
        if min > 0.0 && min.is_finite() {
            min / 100.0
        } else {
            1e-3
        }
    }

    /// Discretisation slack for comparisons with a bound:
    /// `(sum of flow rates + largest server rate) * dt`.
    pub fn slack(net: &Network, dt: f64) -> f64 {
        let rates: f64 = net.flows().iter().map(|f| f.arrival.rate).sum();
        let max_rate = net.servers().iter().map(|s| s.rate).fold(0.0, f64::max);
        (rates + max_rate) * dt
    }
}

/// Cumulative arrivals to and departures from one server for one flow, at
/// times `0, dt, ..., steps * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub flow: usize,
    pub server: usize,
    pub arrivals: Vec<f64>,
    pub departures: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub steps: usize,
    pub traces: Vec<Trace>,
}

impl Trajectory {
    pub fn trace(&self, flow: usize, server: usize) -> Option<&Trace> {
        self.traces
            .iter()
            .find(|t| t.flow == flow && t.server == server)
    }

    /// Largest backlog of `flows` at `server`, including the instants right
    /// after the arrivals of each step.
    pub fn max_backlog(&self, server: usize, flows: &[usize]) -> f64 {
        let traces: Vec<&Trace> = self
            .traces
            .iter()
            .filter(|t| t.server == server && flows.contains(&t.flow))
            .collect();
        let mut best: f64 = 0.0;
        for k in 0..self.steps {
            let after_arrivals: f64 = traces
                .iter()
                .map(|t| t.arrivals[k + 1] - t.departures[k])
                .sum();
            best = best.max(after_arrivals);
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub trajectory: Trajectory,
    /// Largest aggregate backlog observed at each server.
    pub max_backlog: Vec<f64>,
}

struct Source {
    rate: f64,
    burst: f64,
    start_step: Option<usize>,
    greedy: bool,
    tokens: f64,
    rng: Option<ChaCha8Rng>,
}

impl Source {
    fn emit(&mut self, k: usize, dt: f64) -> f64 {
        match self.start_step {
            Some(s) if k >= s => {}
            _ => return 0.0,
        }
        let available = self.tokens + self.rate * dt;
        let amount = if self.greedy {
            available
        } else {
            let rng = self.rng.as_mut().expect("random sources own a generator");
            let u: f64 = rng.gen();
            if u < 0.3 {
                available
            } else if u < 0.5 {
                0.0
            } else {
                available * rng.gen::<f64>()
            }
        };
        self.tokens = (available - amount).min(self.burst);
        amount
    }
}

/// Runs `scenario` on the feed-forward network `net`.
pub fn simulate_fluid(net: &Network, scenario: &Scenario) -> Result<SimulationResult> {
    let n = net.server_count();
    let m = net.flow_count();
    if !(scenario.dt > 0.0 && scenario.dt.is_finite()) {
        return Err(Error::InvalidScenario("dt must be positive".into()));
    }
    if scenario.arrivals.len() != m || scenario.servers.len() != n {
        return Err(Error::InvalidScenario(
            "one arrival pattern per flow and one plan per server are required".into(),
        ));
    }
    let order = net
        .induced_graph()
        .topological_order()
        .ok_or_else(|| Error::InvalidScenario("network has cyclic dependencies".into()))?;
    let dt = scenario.dt;
    let steps = scenario.steps;

    let mut sources: Vec<Source> = net
        .flows()
        .iter()
        .zip(&scenario.arrivals)
        .map(|(f, a)| {
            let (start, greedy, rng) = match a {
                ArrivalPattern::Silent => (None, true, None),
                ArrivalPattern::Greedy { start } => (Some(*start), true, None),
                ArrivalPattern::Random { seed, start } => {
                    (Some(*start), false, Some(ChaCha8Rng::seed_from_u64(*seed)))
                }
            };
            Source {
                rate: f.arrival.rate,
                burst: f.arrival.burst,
                start_step: start.map(|s| (s / dt).round().max(0.0) as usize),
                greedy,
                tokens: f.arrival.burst,
                rng,
            }
        })
        .collect();

    // position of each (flow, server) in the trace list
    let mut slot = vec![vec![usize::MAX; n]; m];
    let mut traces = Vec::new();
    for (i, f) in net.flows().iter().enumerate() {
        for &j in &f.path {
            slot[i][j] = traces.len();
            traces.push(Trace {
                flow: i,
                server: j,
                arrivals: vec![0.0; steps + 1],
                departures: vec![0.0; steps + 1],
            });
        }
    }
    let next_hop: Vec<Vec<Option<usize>>> = net
        .flows()
        .iter()
        .map(|f| {
            let mut v = vec![None; n];
            for w in f.path.windows(2) {
                v[w[0]] = Some(w[1]);
            }
            v
        })
        .collect();
    let priority: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            let through = net.flows_through(j);
            let plan = &scenario.servers[j].priority;
            let mut p: Vec<usize> = plan
                .iter()
                .copied()
                .filter(|i| through.contains(i))
                .collect();
            p.extend(through.into_iter().filter(|i| !plan.contains(i)));
            p
        })
        .collect();

    let mut queue = vec![vec![0.0; n]; m];
    let mut inbox = vec![vec![0.0; n]; m];
    let mut period_start: Vec<Option<usize>> = vec![None; n];
    let mut served_in_period = vec![0.0; n];
    let mut flushed = vec![false; n];
    let mut woken = vec![false; n];
    let graph = net.induced_graph();
    let mut max_backlog = vec![0.0f64; n];

    for k in 0..steps {
        let t = k as f64 * dt;
        for (i, src) in sources.iter_mut().enumerate() {
            inbox[i][net.flows()[i].source()] += src.emit(k, dt);
        }
        for &j in &order {
            let plan = &scenario.servers[j];
            let beta: RateLatency = net.servers()[j];
            let mut total = 0.0;
            for &i in &priority[j] {
                let a = std::mem::take(&mut inbox[i][j]);
                queue[i][j] += a;
                let tr = &mut traces[slot[i][j]];
                tr.arrivals[k + 1] = tr.arrivals[k] + a;
                total += queue[i][j];
            }
            max_backlog[j] = max_backlog[j].max(total);

            let mut departed = vec![0.0; m];
            if total > EMPTY {
                let start = *period_start[j].get_or_insert_with(|| {
                    served_in_period[j] = 0.0;
                    k
                });
                let elapsed = (k + 1 - start) as f64 * dt;
                let mode = if flushed[j] || (plan.wait_for_upstream && !woken[j]) {
                    ServiceMode::Infinite
                } else {
                    mode_at(plan, t, dt)
                };
                let mut budget = match mode {
                    ServiceMode::Infinite => f64::INFINITY,
                    ServiceMode::Exact => (beta.service(elapsed) - served_in_period[j]).max(0.0),
                };
                for &i in &priority[j] {
                    let s = queue[i][j].min(budget);
                    budget -= s;
                    departed[i] += s;
                    queue[i][j] -= s;
                }
                if let Some(set) = &plan.flush_after {
                    if !flushed[j]
                        && elapsed >= beta.latency - 1e-12 * dt
                        && set.iter().all(|&i| queue[i][j] <= EMPTY)
                    {
                        flushed[j] = true;
                        for s in graph.successors(j) {
                            woken[s] = true;
                        }
                        for &i in &priority[j] {
                            departed[i] += std::mem::take(&mut queue[i][j]);
                        }
                    }
                }
                let served: f64 = departed.iter().sum();
                served_in_period[j] += served;
                let left: f64 = priority[j].iter().map(|&i| queue[i][j]).sum();
                if left <= EMPTY {
                    for &i in &priority[j] {
                        departed[i] += std::mem::take(&mut queue[i][j]);
                    }
                    period_start[j] = None;
                }
            }
            for &i in &priority[j] {
                let tr = &mut traces[slot[i][j]];
                tr.departures[k + 1] = tr.departures[k] + departed[i];
                if let Some(next) = next_hop[i][j] {
                    inbox[i][next] += departed[i];
                }
            }
        }
    }
    Ok(SimulationResult {
        trajectory: Trajectory { dt, steps, traces },
        max_backlog,
    })
}

fn mode_at(plan: &ServerPlan, t: f64, dt: f64) -> ServiceMode {
    plan.modes
        .iter()
        .take_while(|(at, _)| *at <= t + 0.5 * dt)
        .last()
        .map_or(ServiceMode::Exact, |&(_, m)| m)
}

/// Checks that the arrivals of every flow into its first server respect
/// its token bucket on every pair of grid times, up to `tol`.
pub fn check_arrivals(net: &Network, traj: &Trajectory, tol: f64) -> bool {
    net.flows().iter().enumerate().all(|(i, f)| {
        let Some(tr) = traj.trace(i, f.source()) else {
            return false;
        };
        let mut lowest = f64::INFINITY;
        tr.arrivals.iter().enumerate().all(|(k, &a)| {
            let shifted = a - f.arrival.rate * k as f64 * traj.dt;
            lowest = lowest.min(shifted);
            shifted - lowest <= f.arrival.burst + tol
        })
    })
}

/// Checks the strict service guarantee of every server: over any interval
/// inside a backlogged period, departures are at least `beta` of its
/// length, up to `tol`. Also checks that traces are nondecreasing and that
/// departures never exceed arrivals.
pub fn check_strict_service(net: &Network, traj: &Trajectory, tol: f64) -> bool {
    let dt = traj.dt;
    for tr in &traj.traces {
        for k in 0..traj.steps {
            if tr.arrivals[k + 1] < tr.arrivals[k] - tol
                || tr.departures[k + 1] < tr.departures[k] - tol
                || tr.departures[k + 1] > tr.arrivals[k + 1] + tol
            {
                return false;
            }
        }
    }
    for (j, beta) in net.servers().iter().enumerate() {
        let mine: Vec<&Trace> = traj.traces.iter().filter(|t| t.server == j).collect();
        let sum = |k: usize, dep: bool| -> f64 {
            mine.iter()
                .map(|t| if dep { t.departures[k] } else { t.arrivals[k] })
                .sum()
        };
        let arrivals: Vec<f64> = (0..=traj.steps).map(|k| sum(k, false)).collect();
        let departures: Vec<f64> = (0..=traj.steps).map(|k| sum(k, true)).collect();
        let lag = (beta.latency / dt - 1e-9).ceil() as usize;
        // within a run of steps that end backlogged, service over
        // (s, t] must reach R (t - s - T); tracked with a running maximum
        // of D(s) - R s over admissible starts
        let mut run_start: Option<usize> = None;
        let mut best_start = f64::NEG_INFINITY;
        for k in 0..traj.steps {
            let backlogged_during = arrivals[k + 1] - departures[k] > EMPTY;
            if !backlogged_during {
                run_start = None;
                continue;
            }
            let start = *run_start.get_or_insert_with(|| {
                best_start = f64::NEG_INFINITY;
                k
            });
            let end = k + 1;
            if end >= start + lag {
                let s = end - lag;
                best_start = best_start.max(departures[s] - beta.rate * s as f64 * dt);
            }
            let still_backlogged = arrivals[k + 1] - departures[k + 1] > EMPTY;
            if still_backlogged
                && departures[end] - beta.rate * end as f64 * dt
                    < best_start - beta.rate * beta.latency - tol
            {
                return false;
            }
            if !still_backlogged {
                run_start = None;
            }
        }
    }
    true
}

/// Scenario following the worst-case construction for the backlog at the
/// root of a tree: each server serves infinitely fast until its single
/// backlogged period starts, which for a server with predecessors is when
/// they release their data. During the period it serves in exact mode, flows
/// closest to their destination first and flows of interest last; the
/// flows ending within the maximising case are served, and once they are
/// drained the server releases everything and serves infinitely fast.
/// Every flow sends greedily from the start of its first server's period.
pub fn worst_case_scenario(tree: &Network, interest: &[usize], dt: f64) -> Result<Scenario> {
    if !(dt > 0.0) {
        return Err(Error::InvalidScenario("dt must be positive".into()));
    }
    let brute = appendix_backlog_bruteforce(tree, interest)?;
    let g = tree.induced_graph();
    let n = tree.server_count();
    let succ: Vec<Option<usize>> = (0..n).map(|j| g.successors(j).first().copied()).collect();
    let root = g.common_root().ok_or(Error::NotATree)?;

    // dates of the start of each period, from the root backwards
    let order = g.topological_order().ok_or(Error::NotATree)?;
    let mut start = vec![0.0; n];
    for &j in order.iter().rev() {
        start[j] = match succ[j] {
            Some(s) => start[s] - brute.periods[j],
            None => -brute.periods[j],
        };
    }
    let first = start.iter().copied().fold(f64::INFINITY, f64::min);
    for s in &mut start {
        *s -= first;
    }
    let end = start[root] + brute.periods[root];

    // distance along the tree from each server to each server downstream
    let distance = |from: usize, to: usize| -> Option<usize> {
        let mut at = from;
        let mut d = 0;
        loop {
            if at == to {
                return Some(d);
            }
            at = succ[at]?;
            d += 1;
        }
    };
    let arrivals = tree
        .flows()
        .iter()
        .map(|f| ArrivalPattern::Greedy {
            start: start[f.source()],
        })
        .collect();
    let servers = (0..n)
        .map(|j| {
            let reach = distance(j, brute.cases[j]).expect("case lies on the path");
            let mut others: Vec<(usize, usize)> = tree
                .flows_through(j)
                .into_iter()
                .filter(|i| !interest.contains(i))
                .map(|i| {
                    (
                        distance(j, tree.flows()[i].sink()).expect("flows go downstream"),
                        i,
                    )
                })
                .collect();
            others.sort();
            let served = others
                .iter()
                .filter(|(d, _)| *d <= reach)
                .map(|&(_, i)| i)
                .collect();
            let mut priority: Vec<usize> = others.iter().map(|&(_, i)| i).collect();
            priority.extend(
                interest
                    .iter()
                    .copied()
                    .filter(|i| tree.flows()[*i].path.contains(&j)),
            );
            ServerPlan {
                modes: Vec::new(),
                priority,
                flush_after: (j != root).then_some(served),
                wait_for_upstream: !g.predecessors(j).is_empty(),
            }
        })
        .collect();
    Ok(Scenario {
        dt,
        steps: (end / dt).ceil() as usize + 3,
        arrivals,
        servers,
    })
}

/// Writes the trajectory as CSV with columns `t,flow,server,A,B`, one row
/// per grid time and trace. Flow and server ids are 1-based.
pub fn write_csv<W: Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    writeln!(out, "t,flow,server,A,B")?;
    for k in 0..=traj.steps {
        let t = k as f64 * traj.dt;
        for tr in &traj.traces {
            writeln!(
                out,
                "{},{},{},{},{}",
                t,
                tr.flow + 1,
                tr.server + 1,
                tr.arrivals[k],
                tr.departures[k]
            )?;
        }
    }
    Ok(())
}
