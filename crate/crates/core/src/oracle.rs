//! Exact solutions and the preference-interpolation bounds.
//!
//! [`value_iteration`] computes `Q*_beta` by synchronous Bellman backups from
//! an all-zero start. The zero start matters: in the lossless `beta = 0`
//! instance every bounded constant shift of the delivery values is also a
//! fixed point, and only the one reached from below is the optimal value.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::learner::{greedy_slot, row_max, QTable, QTableFamily, TableLayout};
use crate::mdp::continuation_prob;
use crate::preference::{bracket, PreferenceGrid};
use crate::topology::{NodeId, Topology};

/// Solver tolerance for theory checks.
pub const THEORY_TOL: f64 = 1e-10;
/// Solver tolerance everywhere else.
pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 200_000;
/// Factor applied to a horizon that is only a lower estimate.
pub const HORIZON_INFLATION: f64 = 1.1;

const TIE_TOL: f64 = 1e-8;
const MAX_ENUMERATED_POLICIES: usize = 16;
const PATH_SEARCH_BUDGET: usize = 5_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub beta: f64,
    pub q_star: QTable,
    /// `v_star[d * N + i]` is `V*(i, dests[d])`.
    pub v_star: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl ExactSolution {
    pub fn value(&self, current: NodeId, dest: NodeId) -> Result<f64> {
        let layout = self.q_star.layout();
        let d = layout.dests().iter().position(|&x| x == dest).ok_or(Error::UntrackedDestination(dest))?;
        if current.0 >= layout.node_count() {
            return Err(Error::UnknownNode(current));
        }
        Ok(self.v_star[d * layout.node_count() + current.0])
    }
}

/// `Q*_beta` for every destination.
pub fn value_iteration(topology: &Topology, beta: f64, tol: f64) -> Result<ExactSolution> {
    let dests: Vec<_> = topology.nodes().collect();
    value_iteration_for(topology, &dests, beta, tol)
}

pub fn value_iteration_for(topology: &Topology, dests: &[NodeId], beta: f64, tol: f64) -> Result<ExactSolution> {
    crate::mdp::check_beta(beta)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("solver tolerance must be positive, got {tol}")));
    }
    let layout = TableLayout::new(topology, dests)?;
    let n = topology.node_count();
    let mut q = vec![0.0; layout.len()];
    let mut next = vec![0.0; layout.len()];
    let mut v = vec![0.0; layout.dests().len() * n];
    for iteration in 1..=MAX_ITERATIONS {
        state_values(&layout, topology, &q, &mut v);
        let delta = backup(&layout, topology, beta, &v, &q, &mut next);
        std::mem::swap(&mut q, &mut next);
        if delta <= tol {
            state_values(&layout, topology, &q, &mut v);
            let residual = backup(&layout, topology, beta, &v, &q, &mut next);
            let mut q_star = QTable::zeros(layout);
            q_star.values_mut().copy_from_slice(&q);
            return Ok(ExactSolution { beta, q_star, v_star: v, residual, iterations: iteration });
        }
    }
    state_values(&layout, topology, &q, &mut v);
    let residual = backup(&layout, topology, beta, &v, &q, &mut next);
    Err(Error::NotConverged { iterations: MAX_ITERATIONS, residual })
}

fn state_values(layout: &TableLayout, topology: &Topology, q: &[f64], v: &mut [f64]) {
    let n = topology.node_count();
    for (d, &dest) in layout.dests().iter().enumerate() {
        for i in topology.nodes() {
            let row = layout.row(i, dest).expect("tracked destination");
            v[d * n + i.0] = row_max(q[row].iter().copied());
        }
    }
}

/// Writes `T q` into `out` and returns `max |T q - q|`.
fn backup(layout: &TableLayout, topology: &Topology, beta: f64, v: &[f64], q: &[f64], out: &mut [f64]) -> f64 {
    let n = topology.node_count();
    let mut delta: f64 = 0.0;
    for (d, &dest) in layout.dests().iter().enumerate() {
        for i in topology.nodes() {
            let row = layout.row(i, dest).expect("tracked destination");
            for (slot, link) in topology.links(i).iter().enumerate() {
                let k = row.start + slot;
                out[k] = if i == dest {
                    1.0 - beta
                } else {
                    -beta * link.energy + continuation_prob(topology, i, slot) * v[d * n + link.to.0]
                };
                delta = delta.max((out[k] - q[k]).abs());
            }
        }
    }
    delta
}

/// Exact tables for every point of `grid`, in grid order.
pub fn solve_grid(
    topology: &Topology,
    dests: &[NodeId],
    grid: &PreferenceGrid,
    tol: f64,
) -> Result<Vec<ExactSolution>> {
    grid.values().iter().map(|&b| value_iteration_for(topology, dests, b, tol)).collect()
}

pub fn family_from_solutions(grid: &PreferenceGrid, solutions: &[ExactSolution]) -> Result<QTableFamily> {
    QTableFamily::from_tables(grid.clone(), solutions.iter().map(|s| s.q_star.clone()).collect())
}

/// `max |r_energy - r_pdr|` over all state-action pairs: `1` at destination
/// states and the link energy elsewhere.
pub fn gamma_constant(topology: &Topology) -> f64 {
    topology.max_energy().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Horizon {
    pub value: f64,
    /// False when the supremum over optimal policies was only estimated
    /// from below.
    pub exact: bool,
}

/// Worst expected number of actions to termination over the optimal
/// policies of `solution` and all tracked states.
pub fn expected_episode_length(topology: &Topology, solution: &ExactSolution) -> Result<Horizon> {
    let layout = solution.q_star.layout();
    let mut value: f64 = 0.0;
    let mut exact = true;
    for &dest in layout.dests() {
        let ties = optimal_ties(topology, solution, dest)?;
        let h = worst_length_for_dest(topology, dest, &ties)?;
        value = value.max(h.value);
        exact &= h.exact;
    }
    Ok(Horizon { value, exact })
}

/// Optimal slots of every node for one destination.
fn optimal_ties(topology: &Topology, solution: &ExactSolution, dest: NodeId) -> Result<Vec<Vec<usize>>> {
    topology
        .nodes()
        .map(|i| {
            let row = solution.q_star.row(i, dest)?;
            let best = row_max(row.iter().copied());
            let tol = TIE_TOL * best.abs().max(1.0);
            Ok((0..row.len()).filter(|&s| row[s] >= best - tol).collect())
        })
        .collect()
}

fn worst_length_for_dest(topology: &Topology, dest: NodeId, ties: &[Vec<usize>]) -> Result<Horizon> {
    let movers: Vec<NodeId> = topology.nodes().filter(|&i| i != dest).collect();
    let count = movers
        .iter()
        .try_fold(1usize, |acc, &i| acc.checked_mul(ties[i.0].len()).filter(|&c| c <= MAX_ENUMERATED_POLICIES));

    if count.is_some() {
        let mut choice = vec![0usize; topology.node_count()];
        let mut best: Option<f64> = None;
        loop {
            let policy: Vec<usize> = topology.nodes().map(|i| ties[i.0][choice[i.0]]).collect();
            if let Ok(h) = policy_lengths(topology, dest, &policy) {
                let m = h.into_iter().fold(0.0, f64::max);
                best = Some(best.map_or(m, |b: f64| b.max(m)));
            }
            // odometer over the non-destination nodes
            let mut advanced = false;
            for &i in &movers {
                choice[i.0] += 1;
                if choice[i.0] < ties[i.0].len() {
                    advanced = true;
                    break;
                }
                choice[i.0] = 0;
            }
            if !advanced {
                break;
            }
        }
        return best
            .map(|value| Horizon { value, exact: true })
            .ok_or_else(|| Error::ImproperPolicy(format!("no proper optimal policy towards {dest}")));
    }

    let deterministic = movers.iter().all(|&i| ties[i.0].iter().all(|&s| continuation_prob(topology, i, s) == 1.0));
    if deterministic {
        if let Some(longest) = longest_tie_path(topology, dest, ties) {
            return Ok(Horizon { value: longest as f64 + 1.0, exact: true });
        }
    }

    let mut candidates: Vec<Vec<usize>> = vec![
        topology.nodes().map(|i| lowest_id_tie(topology, i, &ties[i.0])).collect(),
        topology.nodes().map(|i| highest_id_tie(topology, i, &ties[i.0])).collect(),
    ];
    if let Some(p) = shortest_optimal_selection(topology, dest, ties) {
        candidates.push(p);
    }
    let value = candidates
        .iter()
        .filter_map(|p| policy_lengths(topology, dest, p).ok())
        .map(|h| h.into_iter().fold(0.0, f64::max))
        .reduce(f64::max)
        .ok_or_else(|| Error::ImproperPolicy(format!("no proper optimal policy found towards {dest}")))?;
    Ok(Horizon { value, exact: false })
}

fn lowest_id_tie(topology: &Topology, i: NodeId, ties: &[usize]) -> usize {
    let links = topology.links(i);
    *ties.iter().min_by_key(|&&s| links[s].to).expect("non-empty tie set")
}

fn highest_id_tie(topology: &Topology, i: NodeId, ties: &[usize]) -> usize {
    let links = topology.links(i);
    *ties.iter().max_by_key(|&&s| links[s].to).expect("non-empty tie set")
}

/// Among optimal actions, the selection minimizing expected length. Always
/// proper when any optimal selection is.
fn shortest_optimal_selection(topology: &Topology, dest: NodeId, ties: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = topology.node_count();
    let mut h = vec![f64::INFINITY; n];
    h[dest.0] = 1.0;
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for i in topology.nodes().filter(|&i| i != dest) {
            let links = topology.links(i);
            let best = ties[i.0]
                .iter()
                .map(|&s| 1.0 + continuation_prob(topology, i, s) * h[links[s].to.0])
                .fold(f64::INFINITY, f64::min);
            if best < h[i.0] - 1e-14 * best.abs().max(1.0) {
                h[i.0] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if h.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(
        topology
            .nodes()
            .map(|i| {
                let links = topology.links(i);
                let value = |s: usize| -(1.0 + continuation_prob(topology, i, s) * h[links[s].to.0]);
                let tie_links: Vec<_> = ties[i.0].iter().map(|&s| links[s]).collect();
                ties[i.0][greedy_slot(&tie_links, |k| value(ties[i.0][k]))]
            })
            .collect(),
    )
}

/// Longest simple path (in hops) to `dest` using only tie edges, maximized
/// over start nodes. `None` if the search budget runs out.
fn longest_tie_path(topology: &Topology, dest: NodeId, ties: &[Vec<usize>]) -> Option<usize> {
    let n = topology.node_count();
    let mut on_path = vec![false; n];
    let mut budget = PATH_SEARCH_BUDGET;
    let mut best = 0usize;
    for start in topology.nodes() {
        let len = dfs_longest(topology, dest, ties, start, &mut on_path, &mut budget)?;
        best = best.max(len?);
    }
    Some(best)
}

/// `Some(None)` when no simple tie path reaches `dest` from `node`.
fn dfs_longest(
    topology: &Topology,
    dest: NodeId,
    ties: &[Vec<usize>],
    node: NodeId,
    on_path: &mut [bool],
    budget: &mut usize,
) -> Option<Option<usize>> {
    if node == dest {
        return Some(Some(0));
    }
    *budget = budget.checked_sub(1)?;
    on_path[node.0] = true;
    let mut best = None;
    let links = topology.links(node);
    for &s in &ties[node.0] {
        let to = links[s].to;
        if on_path[to.0] {
            continue;
        }
        if let Some(len) = dfs_longest(topology, dest, ties, to, on_path, budget)? {
            best = Some(best.map_or(len + 1, |b: usize| b.max(len + 1)));
        }
    }
    on_path[node.0] = false;
    Some(best)
}

/// Expected actions to termination from every node under a deterministic
/// policy (`slot` per node), including the final self-delivery step.
fn policy_lengths(topology: &Topology, dest: NodeId, policy: &[usize]) -> Result<Vec<f64>> {
    let n = topology.node_count();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![1.0; n];
    for i in topology.nodes() {
        a[i.0][i.0] = 1.0;
        if i != dest {
            let s = policy[i.0];
            a[i.0][topology.links(i)[s].to.0] -= continuation_prob(topology, i, s);
        }
    }
    solve_linear(&mut a, &mut b)
        .map_err(|_| Error::ImproperPolicy(format!("policy towards {dest} never terminates")))?;
    Ok(b)
}

/// Expected scalarized return from every node under a deterministic policy.
fn policy_values(topology: &Topology, dest: NodeId, beta: f64, policy: &[usize]) -> Result<Vec<f64>> {
    let n = topology.node_count();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for i in topology.nodes() {
        a[i.0][i.0] = 1.0;
        if i == dest {
            b[i.0] = 1.0 - beta;
        } else {
            let s = policy[i.0];
            let link = topology.links(i)[s];
            b[i.0] = -beta * link.energy;
            a[i.0][link.to.0] -= continuation_prob(topology, i, s);
        }
    }
    solve_linear(&mut a, &mut b)
        .map_err(|_| Error::ImproperPolicy(format!("policy towards {dest} never terminates")))?;
    Ok(b)
}

/// Gaussian elimination with partial pivoting; the solution replaces `b`.
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> std::result::Result<(), ()> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).expect("non-empty range");
        if a[pivot][col].abs() < 1e-12 {
            return Err(());
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (offset, r) in rest.iter_mut().enumerate() {
            let f = r[col] / pivot_row[col];
            if f != 0.0 {
                for (x, p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
                b[col + 1 + offset] -= f * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|k| a[col][k] * b[k]).sum();
        b[col] = (b[col] - s) / a[col][col];
    }
    if b.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryConstants {
    pub gamma_const: f64,
    pub horizon: f64,
    pub horizon_exact: bool,
}

impl TheoryConstants {
    /// Horizon used in the bounds: inflated when only a lower estimate.
    pub fn effective_horizon(&self) -> f64 {
        if self.horizon_exact {
            self.horizon
        } else {
            self.horizon * HORIZON_INFLATION
        }
    }

    /// `Gamma * (H + 1)`.
    pub fn slope(&self) -> f64 {
        self.gamma_const * (self.effective_horizon() + 1.0)
    }
}

/// Constants with `H` maximized over all given solutions.
pub fn theory_constants(topology: &Topology, solutions: &[ExactSolution]) -> Result<TheoryConstants> {
    let mut horizon: f64 = 0.0;
    let mut horizon_exact = true;
    for s in solutions {
        let h = expected_episode_length(topology, s)?;
        horizon = horizon.max(h.value);
        horizon_exact &= h.exact;
    }
    Ok(TheoryConstants { gamma_const: gamma_constant(topology), horizon, horizon_exact })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `||Q*_b1 - Q*_b2|| <= Gamma (H + 1) |b1 - b2|`, up to `slack`.
pub fn check_lipschitz(a: &ExactSolution, b: &ExactSolution, constants: &TheoryConstants, slack: f64) -> TheoryCheck {
    let lhs = a.q_star.sup_distance(&b.q_star);
    let rhs = constants.slope() * (a.beta - b.beta).abs();
    TheoryCheck { lhs, rhs, holds: lhs <= rhs + slack }
}

/// Bound on the interpolated table of `family` at `target.beta`, with the
/// per-grid error `epsilon_hat` measured against `exact_grid`.
pub fn check_gip_bound(
    family: &QTableFamily,
    exact_grid: &[ExactSolution],
    target: &ExactSolution,
    constants: &TheoryConstants,
    slack: f64,
) -> Result<TheoryCheck> {
    let epsilon_hat = grid_error(family, exact_grid)?;
    let q_int = family.gip_table(target.beta)?.materialize();
    check_interpolated(&q_int, family.grid(), epsilon_hat, target, constants, slack)
}

/// `max_b ||table_b - Q*_b||`.
pub fn grid_error(family: &QTableFamily, exact_grid: &[ExactSolution]) -> Result<f64> {
    if exact_grid.len() != family.tables().len() {
        return Err(Error::InvalidGrid("one exact solution per grid point is required".into()));
    }
    Ok(family.tables().iter().zip(exact_grid).map(|(t, s)| t.sup_distance(&s.q_star)).fold(0.0, f64::max))
}

/// Bound check for an arbitrary interpolated table.
pub fn check_interpolated(
    q_int: &QTable,
    grid: &PreferenceGrid,
    epsilon_hat: f64,
    target: &ExactSolution,
    constants: &TheoryConstants,
    slack: f64,
) -> Result<TheoryCheck> {
    let width = bracket(grid, target.beta)?.width();
    let lhs = q_int.sup_distance(&target.q_star);
    let rhs = epsilon_hat + constants.slope() * width;
    Ok(TheoryCheck { lhs, rhs, holds: lhs <= rhs + slack })
}

/// `max_s V*_beta(s) - V^pi(s)` for the greedy policy of the interpolated
/// table (lowest-id ties). Infinite if that policy never terminates.
pub fn policy_gap(topology: &Topology, family: &QTableFamily, target: &ExactSolution) -> Result<f64> {
    let view = family.gip_table(target.beta)?;
    let layout = Arc::clone(view.layout());
    let mut gap: f64 = 0.0;
    for &dest in layout.dests() {
        let policy: Vec<usize> = topology
            .nodes()
            .map(|i| {
                let row = layout.row(i, dest).expect("tracked destination");
                greedy_slot(topology.links(i), |s| view.value_at(row.start + s))
            })
            .collect();
        match policy_values(topology, dest, target.beta, &policy) {
            Ok(v) => {
                for i in topology.nodes() {
                    gap = gap.max(target.value(i, dest)? - v[i.0]);
                }
            }
            Err(_) => return Ok(f64::INFINITY),
        }
    }
    Ok(gap)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryRow {
    pub check: &'static str,
    pub topology: String,
    /// A single preference, or `b1:b2` for a pair.
    pub beta: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` for report-only rows.
    pub holds: Option<bool>,
}

pub fn write_theory_csv<W: Write>(rows: &[TheoryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "topology", "beta", "lhs", "rhs", "holds"])?;
    for r in rows {
        let holds = r.holds.map_or(String::new(), |h| h.to_string());
        w.serialize((r.check, &r.topology, &r.beta, r.lhs, r.rhs, holds))?;
    }
    w.flush()?;
    Ok(())
}

/// What [`theory_suite`] checks.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteSpec {
    pub label: String,
    /// Pairs of these preferences are checked for Lipschitz continuity.
    pub betas: Vec<f64>,
    pub grids: Vec<PreferenceGrid>,
    /// Off-grid preferences for the interpolation bound.
    pub targets: Vec<f64>,
    pub tol: f64,
    pub slack: f64,
    /// Added to every interpolated entry before checking; 0 for honest runs.
    pub inject_offset: f64,
}

/// Lipschitz rows for every preference pair, then a bound row and a
/// policy-gap row per (grid, target), all over every destination.
pub fn theory_suite(topology: &Topology, spec: &SuiteSpec) -> Result<Vec<TheoryRow>> {
    let dests: Vec<_> = topology.nodes().collect();
    let mut all_betas: Vec<f64> = spec.betas.clone();
    all_betas.extend(&spec.targets);
    for g in &spec.grids {
        all_betas.extend(g.values());
    }
    all_betas.sort_by(f64::total_cmp);
    all_betas.dedup_by(|a, b| (*a - *b).abs() <= crate::preference::GRID_TOL);
    let solutions =
        all_betas.iter().map(|&b| value_iteration_for(topology, &dests, b, spec.tol)).collect::<Result<Vec<_>>>()?;
    let find = |beta: f64| {
        solutions.iter().find(|s| (s.beta - beta).abs() <= crate::preference::GRID_TOL).expect("solved above")
    };
    let constants = theory_constants(topology, &solutions)?;

    let mut rows = Vec::new();
    for (k, &b1) in spec.betas.iter().enumerate() {
        for &b2 in &spec.betas[k + 1..] {
            let c = check_lipschitz(find(b1), find(b2), &constants, spec.slack);
            rows.push(TheoryRow {
                check: "lipschitz",
                topology: spec.label.clone(),
                beta: format!("{b1}:{b2}"),
                lhs: c.lhs,
                rhs: c.rhs,
                holds: Some(c.holds),
            });
        }
    }
    for grid in &spec.grids {
        let exact: Vec<ExactSolution> = grid.values().iter().map(|&b| find(b).clone()).collect();
        let family = family_from_solutions(grid, &exact)?;
        let epsilon_hat = grid_error(&family, &exact)?;
        let tag = format!("{}/grid{}", spec.label, grid.len());
        for &beta in &spec.targets {
            let target = find(beta);
            let mut q_int = family.gip_table(beta)?.materialize();
            q_int.values_mut().iter_mut().for_each(|v| *v += spec.inject_offset);
            let c = check_interpolated(&q_int, grid, epsilon_hat, target, &constants, spec.slack)?;
            rows.push(TheoryRow {
                check: "gip_bound",
                topology: tag.clone(),
                beta: beta.to_string(),
                lhs: c.lhs,
                rhs: c.rhs,
                holds: Some(c.holds),
            });
            rows.push(TheoryRow {
                check: "policy_gap",
                topology: tag.clone(),
                beta: beta.to_string(),
                lhs: policy_gap(topology, &family, target)?,
                rhs: f64::NAN,
                holds: None,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::State;
    use crate::topology::line_topology;

    fn n(i: usize) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn line_values() {
        let t = line_topology(3, 0.0, 1.0).unwrap();
        let s = value_iteration(&t, 1.0, THEORY_TOL).unwrap();
        assert!((s.value(n(0), n(2)).unwrap() + 2.0).abs() < 1e-9);
        assert!((s.value(n(1), n(2)).unwrap() + 1.0).abs() < 1e-9);
        assert!(s.value(n(2), n(2)).unwrap().abs() < 1e-9);
        assert!(s.residual <= THEORY_TOL);

        let s = value_iteration(&t, 0.0, THEORY_TOL).unwrap();
        for i in 0..3 {
            assert!((s.value(n(i), n(2)).unwrap() - 1.0).abs() < 1e-9);
        }

        let lossy = line_topology(3, 0.1, 1.0).unwrap();
        let s = value_iteration(&lossy, 0.0, THEORY_TOL).unwrap();
        assert!((s.value(n(0), n(2)).unwrap() - 0.81).abs() < 1e-9);
    }

    #[test]
    fn v_is_row_max() {
        let t = line_topology(4, 0.2, 0.5).unwrap();
        let s = value_iteration(&t, 0.4, THEORY_TOL).unwrap();
        for dest in t.nodes() {
            for i in t.nodes() {
                let v = s.q_star.state_value(State::pair(i, dest)).unwrap();
                assert_eq!(v, s.value(i, dest).unwrap());
            }
        }
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_constant(&line_topology(3, 0.0, 1.0).unwrap()), 1.0);
        assert_eq!(gamma_constant(&line_topology(3, 0.0, 0.0).unwrap()), 1.0);
        assert_eq!(gamma_constant(&line_topology(3, 0.0, 3.0).unwrap()), 3.0);
    }

    #[test]
    fn horizon_examples() {
        let t = line_topology(3, 0.0, 1.0).unwrap();
        let s = value_iteration(&t, 1.0, THEORY_TOL).unwrap();
        let h = expected_episode_length(&t, &s).unwrap();
        assert_eq!(h.value, 3.0);
        assert!(h.exact);

        let lossy = line_topology(3, 0.5, 1.0).unwrap();
        let s0 = value_iteration(&lossy, 0.0, THEORY_TOL).unwrap();
        let lossless = value_iteration(&t, 0.0, THEORY_TOL).unwrap();
        let hl = expected_episode_length(&lossy, &s0).unwrap().value;
        let h0 = expected_episode_length(&t, &lossless).unwrap().value;
        assert!(hl < h0, "{hl} vs {h0}");
    }

    #[test]
    fn lipschitz_line() {
        let t = line_topology(3, 0.0, 1.0).unwrap();
        let s0 = value_iteration(&t, 0.0, THEORY_TOL).unwrap();
        let s1 = value_iteration(&t, 1.0, THEORY_TOL).unwrap();
        let c = theory_constants(&t, &[s0.clone(), s1.clone()]).unwrap();
        assert_eq!((c.gamma_const, c.horizon), (1.0, 3.0));
        let r = check_lipschitz(&s0, &s1, &c, 1e-8);
        // Q_0((1,2), 0) = 1 and Q_1((1,2), 0) = -1 + V_1(0,2) = -3.
        assert!((r.lhs - 4.0).abs() < 1e-9);
        assert_eq!(r.rhs, 4.0);
        assert!(r.holds);
        let same = check_lipschitz(&s0, &s0, &c, 0.0);
        assert_eq!((same.lhs, same.rhs, same.holds), (0.0, 0.0, true));
    }

    #[test]
    fn gip_bound_coarse_line() {
        let t = line_topology(3, 0.0, 1.0).unwrap();
        let grid = PreferenceGrid::coarse();
        let dests: Vec<_> = t.nodes().collect();
        let exact = solve_grid(&t, &dests, &grid, THEORY_TOL).unwrap();
        let family = family_from_solutions(&grid, &exact).unwrap();
        let target = value_iteration(&t, 0.5, THEORY_TOL).unwrap();
        let mut all = exact.clone();
        all.push(target.clone());
        let c = theory_constants(&t, &all).unwrap();
        let r = check_gip_bound(&family, &exact, &target, &c, 1e-8).unwrap();
        assert_eq!(r.rhs, 4.0);
        assert!(r.holds);

        let hit = check_gip_bound(&family, &exact, &exact[1], &c, 0.0).unwrap();
        assert_eq!(hit.lhs, 0.0);
    }

    #[test]
    fn linear_solver() {
        let mut a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let mut b = vec![3.0, 5.0];
        solve_linear(&mut a, &mut b).unwrap();
        assert!((b[0] - 0.8).abs() < 1e-12 && (b[1] - 1.4).abs() < 1e-12);
        let mut a = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        assert!(solve_linear(&mut a, &mut [1.0, 1.0]).is_err());
    }
}
