//! Stability of networks with cyclic dependencies.
//!
//! After cutting some arcs, the unknown bursts of the flow segments that
//! start after a cut satisfy `b <= M b + N` for a nonnegative matrix `M`.
//! If the spectral radius of `M` is below 1 the network is stable and the
//! least solution of `b = M b + N` bounds the bursts.
//!
//! Three ways of building `(M, N)` are provided:
//! * `Sd` cuts every arc and analyses each server alone;
//! * `Td` cuts a given set of arcs and analyses the remaining forest with
//!   the tight tree bound, one variable per segment;
//! * `Ag` uses the same forest with one variable per cut arc, bounding the
//!   aggregate burst of all segments crossing it.
//!
//! `TwoStage` combines the fixed points of `Td` and `Ag` as constraints on
//! the segment bursts.

pub mod linalg;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::curves::{Bound, RateLatency};
use crate::decomposition::{
    decompose, group_by_arc, removal_all, removal_tree, ArcGroup, FeedForward,
};
use crate::error::{Error, Result};
use crate::network::{Arc, Network};
use crate::tree_analysis::{tree_backlog_at, tree_delay_at};

pub use linalg::{spectral_bracket, spectral_radius, SparseMatrix, Spectrum};

/// A recursion is stable when its spectral radius is below `1 - MARGIN`.
pub const MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Sd,
    Td,
    Ag,
    TwoStage,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sd, Method::Td, Method::Ag, Method::TwoStage];

    /// Column name used in sweep files.
    pub fn column(self) -> &'static str {
        match self {
            Method::Sd => "SD",
            Method::Td => "TD",
            Method::Ag => "AG",
            Method::TwoStage => "TWO_STAGE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sd => "sd",
            Method::Td => "td",
            Method::Ag => "ag",
            Method::TwoStage => "2s",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd" => Ok(Method::Sd),
            "td" => Ok(Method::Td),
            "ag" => Ok(Method::Ag),
            "2s" | "two_stage" | "twostage" => Ok(Method::TwoStage),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// Unknown of a recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// Burst of segment `index` (0-based) of `flow`.
    Segment { flow: usize, index: usize },
    /// Aggregate burst of the segments crossing a cut arc.
    Arc(Arc),
}

/// `b <= M b + N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRecursion {
    pub labels: Vec<Label>,
    pub matrix: SparseMatrix,
    pub constant: Vec<f64>,
}

impl LinearRecursion {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.matrix)
    }

    /// Whether the spectral radius is below `1 - MARGIN`. Stops iterating
    /// as soon as the answer is certain.
    pub fn is_stable(&self) -> Result<bool> {
        let threshold = 1.0 - MARGIN;
        let s = spectral_bracket(&self.matrix, 1e-12, |s| {
            s.upper < threshold || s.lower >= threshold
        })?;
        Ok(s.upper < threshold || (s.lower < threshold && s.estimate < threshold))
    }
}

/// Least solution of `b = M b + N`, or `None` when `M` has spectral radius
/// at least `1 - MARGIN`.
pub fn solve_recursion(lr: &LinearRecursion) -> Result<Option<Vec<f64>>> {
    if !lr.is_stable()? {
        return Ok(None);
    }
    let x = linalg::solve_identity_minus(&lr.matrix, &lr.constant)?;
    Ok(Some(x.into_iter().map(|v| v.max(0.0)).collect()))
}

/// What a bound is requested for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// Backlog at `server` of the listed flows.
    Backlog { server: usize, flows: Vec<usize> },
    /// End-to-end delay of `flow`.
    Delay { flow: usize },
}

/// Bound written as `q . b + constant` over the unknowns of a recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveForm {
    pub q: Vec<f64>,
    pub constant: f64,
}

impl ObjectiveForm {
    pub fn evaluate(&self, b: &[f64]) -> f64 {
        self.constant + self.q.iter().zip(b).map(|(q, b)| q * b).sum::<f64>()
    }
}

/// Bound written over segment bursts: `coeffs[s]` for each continuation
/// segment `s` (zero for first segments, whose bursts are in `constant`).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentForm {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

fn check_local_stability(net: &Network) -> Result<()> {
    let ls = net.local_stability();
    match ls
        .classes
        .iter()
        .position(|c| *c != crate::curves::ServerClass::Stable)
    {
        Some(server) => Err(Error::LocallyUnstable { server }),
        None => Ok(()),
    }
}

fn segment_labels(ff: &FeedForward) -> (Vec<Label>, Vec<Option<usize>>) {
    let mut labels = Vec::new();
    let mut var = vec![None; ff.segments().len()];
    for (s, seg) in ff.segments().iter().enumerate() {
        if !seg.burst_known() {
            var[s] = Some(labels.len());
            labels.push(Label::Segment {
                flow: seg.flow,
                index: seg.index,
            });
        }
    }
    (labels, var)
}

/// Recursion with every arc cut: each server is analysed alone, and a
/// segment's output burst is its input burst plus
/// `r_i / (R_j - r_other) * (b_other + R_j T_j)`.
pub fn build_sd(net: &Network) -> Result<LinearRecursion> {
    check_local_stability(net)?;
    let ff = decompose(net, &removal_all(net))?;
    let (labels, var) = segment_labels(&ff);
    let mut matrix = SparseMatrix::zeros(labels.len());
    let mut constant = vec![0.0; labels.len()];
    for (s, seg) in ff.segments().iter().enumerate() {
        let Some(next) = ff.continuation(s) else {
            continue;
        };
        let row = var[next].expect("continuations are unknowns");
        let j = seg.path[0];
        let beta = net.servers()[j];
        let own = ff.rate(s);
        let cross = net.load(j).rate - own;
        let coeff = own / (beta.rate - cross);
        let add = |t: usize, c: f64, matrix: &mut SparseMatrix, constant: &mut [f64]| match var[t] {
            Some(col) => matrix.add(row, col, c),
            None => constant[row] += c * ff.known_burst(t).expect("first segment"),
        };
        add(s, 1.0, &mut matrix, &mut constant);
        for p in net.flows_through(j) {
            if p != seg.flow {
                let t = ff.segment_at(p, j).expect("flow crosses the server");
                add(t, coeff, &mut matrix, &mut constant);
            }
        }
        constant[row] += coeff * beta.rate * beta.latency;
    }
    Ok(LinearRecursion {
        labels,
        matrix,
        constant,
    })
}

fn forest(net: &Network, removal: &BTreeSet<Arc>) -> Result<FeedForward> {
    let ff = decompose(net, removal)?;
    if !ff.kept_graph().is_forest() {
        return Err(Error::DecompositionNotForest);
    }
    Ok(ff)
}

fn not_forest(e: Error) -> Error {
    match e {
        Error::NotATree => Error::DecompositionNotForest,
        e => e,
    }
}

/// Recursion over segment bursts for the forest left by cutting `removal`:
/// the burst of a segment entering through a cut arc is the tight backlog
/// of its predecessor segment at the tail of the arc.
pub fn build_td(net: &Network, removal: &BTreeSet<Arc>) -> Result<LinearRecursion> {
    check_local_stability(net)?;
    let ff = forest(net, removal)?;
    td_from(&ff)
}

fn td_from(ff: &FeedForward) -> Result<LinearRecursion> {
    let segnet = ff.segment_network();
    let (labels, var) = segment_labels(ff);
    let mut matrix = SparseMatrix::zeros(labels.len());
    let mut constant = vec![0.0; labels.len()];
    for (s, seg) in ff.segments().iter().enumerate() {
        let Some(next) = ff.continuation(s) else {
            continue;
        };
        let row = var[next].expect("continuations are unknowns");
        let res = tree_backlog_at(&segnet, seg.last(), &[s]).map_err(not_forest)?;
        for (t, &phi) in res.form.burst.iter().enumerate() {
            if let Some(col) = var[t] {
                matrix.add(row, col, phi);
            }
        }
        constant[row] = res.form.evaluate(&segnet);
    }
    Ok(LinearRecursion {
        labels,
        matrix,
        constant,
    })
}

/// Recursion over cut arcs for the forest left by cutting `removal`: the
/// unknown of an arc bounds the total burst of the segments crossing it,
/// and a segment's coefficient is replaced by the largest one within its
/// arc group.
pub fn build_ag(net: &Network, removal: &BTreeSet<Arc>) -> Result<LinearRecursion> {
    check_local_stability(net)?;
    let ff = forest(net, removal)?;
    let (_, groups) = group_by_arc(&ff);
    ag_from(&ff, &groups)
}

fn group_of_segment(ff: &FeedForward, groups: &[ArcGroup]) -> Vec<Option<usize>> {
    let mut of = vec![None; ff.segments().len()];
    for (a, g) in groups.iter().enumerate() {
        for &s in &g.continuing {
            of[s] = Some(a);
        }
    }
    of
}

fn ag_from(ff: &FeedForward, groups: &[ArcGroup]) -> Result<LinearRecursion> {
    let segnet = ff.segment_network();
    let of = group_of_segment(ff, groups);
    let mut matrix = SparseMatrix::zeros(groups.len());
    let mut constant = vec![0.0; groups.len()];
    for (a, g) in groups.iter().enumerate() {
        let res = tree_backlog_at(&segnet, g.arc.0, &g.feeding).map_err(not_forest)?;
        let mut row = vec![0.0f64; groups.len()];
        for (t, &phi) in res.form.burst.iter().enumerate() {
            if let Some(b) = of[t] {
                row[b] = row[b].max(phi);
            }
        }
        for (b, v) in row.into_iter().enumerate() {
            matrix.add(a, b, v);
        }
        constant[a] = res.form.evaluate(&segnet);
    }
    Ok(LinearRecursion {
        labels: groups.iter().map(|g| Label::Arc(g.arc)).collect(),
        matrix,
        constant,
    })
}

/// Bound for `target` on the split network, as a linear form over the
/// bursts of the continuation segments.
pub fn segment_objective(ff: &FeedForward, target: &Target) -> Result<SegmentForm> {
    let segnet = ff.segment_network();
    let count = ff.segments().len();
    let mut coeffs = vec![0.0; count];
    let mut constant = 0.0;
    let base = ff.base();
    let mut absorb = |burst: &[f64], value: f64| {
        for (t, &c) in burst.iter().enumerate() {
            if !ff.segments()[t].burst_known() {
                coeffs[t] += c;
            }
        }
        constant += value;
    };
    match target {
        Target::Backlog { server, flows } => {
            if *server >= base.server_count() {
                return Err(Error::InvalidParameter(format!("unknown server {server}")));
            }
            let mut interest = Vec::with_capacity(flows.len());
            for &i in flows {
                if i >= base.flow_count() {
                    return Err(Error::InvalidParameter(format!("unknown flow {i}")));
                }
                interest.push(ff.segment_at(i, *server).ok_or_else(|| {
                    Error::InvalidParameter(format!("flow {i} does not cross server {server}"))
                })?);
            }
            let res = tree_backlog_at(&segnet, *server, &interest).map_err(not_forest)?;
            absorb(&res.form.burst, res.form.evaluate(&segnet));
        }
        Target::Delay { flow } => {
            if *flow >= base.flow_count() {
                return Err(Error::InvalidParameter(format!("unknown flow {flow}")));
            }
            for &s in ff.segments_of(*flow) {
                let d = tree_delay_at(&segnet, s).map_err(|e| match e {
                    Error::ZeroRateFlow { .. } => Error::ZeroRateFlow { flow: *flow },
                    e => not_forest(e),
                })?;
                absorb(&d.form.burst, d.form.evaluate(&segnet));
            }
        }
    }
    Ok(SegmentForm { coeffs, constant })
}

/// Objective over the unknowns of the SD or TD recursion of `ff`.
fn segment_projection(ff: &FeedForward, form: &SegmentForm) -> ObjectiveForm {
    let q = ff
        .segments()
        .iter()
        .zip(&form.coeffs)
        .filter(|(seg, _)| !seg.burst_known())
        .map(|(_, &c)| c)
        .collect();
    ObjectiveForm {
        q,
        constant: form.constant,
    }
}

/// Objective over the arc unknowns of the AG recursion.
fn arc_projection(ff: &FeedForward, groups: &[ArcGroup], form: &SegmentForm) -> ObjectiveForm {
    let of = group_of_segment(ff, groups);
    let mut q = vec![0.0f64; groups.len()];
    for (s, &c) in form.coeffs.iter().enumerate() {
        if let Some(a) = of[s] {
            q[a] = q[a].max(c);
        }
    }
    ObjectiveForm {
        q,
        constant: form.constant,
    }
}

/// Builds the objective for `target` in the context of `method`.
pub fn objective_for(
    net: &Network,
    target: &Target,
    method: Method,
    removal: &BTreeSet<Arc>,
) -> Result<ObjectiveForm> {
    match method {
        Method::Sd => {
            let ff = decompose(net, &removal_all(net))?;
            Ok(segment_projection(&ff, &segment_objective(&ff, target)?))
        }
        Method::Td | Method::TwoStage => {
            let ff = forest(net, removal)?;
            Ok(segment_projection(&ff, &segment_objective(&ff, target)?))
        }
        Method::Ag => {
            let ff = forest(net, removal)?;
            let (_, groups) = group_by_arc(&ff);
            Ok(arc_projection(
                &ff,
                &groups,
                &segment_objective(&ff, target)?,
            ))
        }
    }
}

/// `q . b* + C` at the least fixed point, or `Unbounded`.
pub fn one_stage_bound(lr: &LinearRecursion, obj: &ObjectiveForm) -> Result<Bound> {
    Ok(match solve_recursion(lr)? {
        Some(b) => Bound::Finite(obj.evaluate(&b)),
        None => Bound::Unbounded,
    })
}

/// Largest `sum_s coeffs[s] b_s` over segment bursts with
/// `0 <= b_s <= upper[s]` (when given) and, for each arc group, the sum of
/// its bursts at most `group_cap[a]` (when given). Groups are disjoint, so
/// each is filled greedily by decreasing coefficient.
pub fn two_stage_allocation(
    coeffs: &[f64],
    groups: &[ArcGroup],
    upper: Option<&[f64]>,
    group_cap: Option<&[f64]>,
) -> Vec<f64> {
    let mut b = vec![0.0; coeffs.len()];
    for (a, g) in groups.iter().enumerate() {
        let mut members = g.continuing.clone();
        members.sort_by(|&x, &y| coeffs[y].total_cmp(&coeffs[x]));
        let mut left = group_cap.map_or(f64::INFINITY, |c| c[a]);
        for s in members {
            if coeffs[s] <= 0.0 {
                break;
            }
            let take = upper.map_or(f64::INFINITY, |u| u[s]).min(left);
            b[s] = take;
            left -= take;
        }
    }
    b
}

/// Bound for `target` using the TD fixed point as per-segment caps and the
/// AG fixed point as per-arc caps on the segment bursts.
pub fn two_stage_bound(net: &Network, removal: &BTreeSet<Arc>, target: &Target) -> Result<Bound> {
    Ok(two_stage(net, removal, Some(target))?
        .bound
        .expect("target given"))
}

struct TwoStageOutcome {
    rho_td: f64,
    rho_ag: f64,
    td: Option<Vec<f64>>,
    ag: Option<Vec<f64>>,
    bound: Option<Bound>,
    objective: Option<ObjectiveForm>,
}

fn two_stage(
    net: &Network,
    removal: &BTreeSet<Arc>,
    target: Option<&Target>,
) -> Result<TwoStageOutcome> {
    check_local_stability(net)?;
    let ff = forest(net, removal)?;
    let (_, groups) = group_by_arc(&ff);
    let td = td_from(&ff)?;
    let ag = ag_from(&ff, &groups)?;
    let td_fix = solve_recursion(&td)?;
    let ag_fix = solve_recursion(&ag)?;
    let (bound, objective) = match target {
        None => (None, None),
        Some(t) => {
            let form = segment_objective(&ff, t)?;
            let value = if td_fix.is_none() && ag_fix.is_none() {
                Bound::Unbounded
            } else {
                let upper = td_fix.as_ref().map(|x| {
                    let (_, var) = segment_labels(&ff);
                    var.iter()
                        .map(|v| v.map_or(0.0, |k| x[k]))
                        .collect::<Vec<f64>>()
                });
                let b = two_stage_allocation(
                    &form.coeffs,
                    &groups,
                    upper.as_deref(),
                    ag_fix.as_deref(),
                );
                Bound::Finite(
                    form.constant + form.coeffs.iter().zip(&b).map(|(c, b)| c * b).sum::<f64>(),
                )
            };
            (Some(value), Some(segment_projection(&ff, &form)))
        }
    };
    Ok(TwoStageOutcome {
        rho_td: td.spectral_radius()?,
        rho_ag: ag.spectral_radius()?,
        td: td_fix,
        ag: ag_fix,
        bound,
        objective,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub method: Method,
    /// Spectral radius of the recursion; for `TwoStage` the smaller of the
    /// TD and AG radii. `None` when the network is not locally stable.
    pub rho: Option<f64>,
    pub stable: bool,
    /// Least fixed point of the recursion (for `TwoStage`, the TD one if
    /// finite, the AG one otherwise).
    pub fixed_point: Option<Vec<f64>>,
    pub labels: Vec<Label>,
    /// Requested bound.
    pub bound: Option<Bound>,
    /// The bound as a linear form over the unknowns.
    pub objective: Option<ObjectiveForm>,
}

/// Runs `method` on `net`. TD, AG and two-stage cut `removal`, by default
/// the arcs outside a breadth-first in-tree towards the highest-index
/// server.
pub fn analyze(
    net: &Network,
    method: Method,
    removal: Option<&BTreeSet<Arc>>,
    target: Option<&Target>,
) -> Result<StabilityReport> {
    let default_removal;
    let removal = match removal {
        Some(r) => r,
        None => {
            default_removal = removal_tree(net, None);
            &default_removal
        }
    };
    if !net.local_stability().stable {
        return Ok(StabilityReport {
            method,
            rho: None,
            stable: false,
            fixed_point: None,
            labels: Vec::new(),
            bound: target.map(|_| Bound::Unbounded),
            objective: None,
        });
    }
    if method == Method::TwoStage {
        let out = two_stage(net, removal, target)?;
        let stable = out.td.is_some() || out.ag.is_some();
        let ff = decompose(net, removal)?;
        let labels = match &out.td {
            Some(_) => segment_labels(&ff).0,
            None => group_by_arc(&ff)
                .1
                .iter()
                .map(|g| Label::Arc(g.arc))
                .collect(),
        };
        return Ok(StabilityReport {
            method,
            rho: Some(out.rho_td.min(out.rho_ag)),
            stable,
            fixed_point: out.td.or(out.ag),
            labels,
            bound: out.bound,
            objective: out.objective,
        });
    }
    let lr = match method {
        Method::Sd => build_sd(net)?,
        Method::Td => build_td(net, removal)?,
        Method::Ag => build_ag(net, removal)?,
        Method::TwoStage => unreachable!(),
    };
    let rho = lr.spectral_radius()?;
    let fixed_point = solve_recursion(&lr)?;
    let objective = target
        .map(|t| objective_for(net, t, method, removal))
        .transpose()?;
    let bound = objective.as_ref().map(|o| match &fixed_point {
        Some(b) => Bound::Finite(o.evaluate(b)),
        None => Bound::Unbounded,
    });
    Ok(StabilityReport {
        method,
        rho: Some(rho),
        stable: fixed_point.is_some(),
        fixed_point,
        labels: lr.labels,
        bound,
        objective,
    })
}

/// Whether `method` proves `net` stable, stopping the spectral iteration
/// as soon as the answer is known.
pub fn is_stable(net: &Network, method: Method, removal: Option<&BTreeSet<Arc>>) -> Result<bool> {
    if !net.local_stability().stable {
        return Ok(false);
    }
    let default_removal;
    let removal = match removal {
        Some(r) => r,
        None => {
            default_removal = removal_tree(net, None);
            &default_removal
        }
    };
    match method {
        Method::Sd => build_sd(net)?.is_stable(),
        Method::Td => build_td(net, removal)?.is_stable(),
        Method::Ag => build_ag(net, removal)?.is_stable(),
        Method::TwoStage => {
            Ok(build_td(net, removal)?.is_stable()? || build_ag(net, removal)?.is_stable()?)
        }
    }
}

/// Copy of `base` whose server rates are divided by `u`: when `base` has
/// every server at utilisation 1, the result has every server at `u`.
pub fn at_utilization(base: &Network, u: f64) -> Result<Network> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "utilization {u} must be positive"
        )));
    }
    let servers = base
        .servers()
        .iter()
        .map(|s| RateLatency::new(s.rate / u, s.latency))
        .collect::<Result<Vec<_>>>()?;
    Network::new(servers, base.flows().to_vec())
}

/// Largest utilisation in `(0, 1]` at which `method` proves the family
/// `at_utilization(base, U)` stable, to within 1e-4 (bisection; stability
/// is monotone in `U`).
pub fn critical_utilization(
    base: &Network,
    method: Method,
    removal: Option<&BTreeSet<Arc>>,
) -> Result<f64> {
    let stable_at =
        |u: f64| -> Result<bool> { is_stable(&at_utilization(base, u)?, method, removal) };
    if stable_at(1.0)? {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if stable_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
