//! Savings construction followed by best-improvement local search.

use super::binpack;
use super::{RoutingProblem, VrpSolution};
use crate::error::Result;

/// Upper bound on improvement sweeps per start.
pub const MAX_SWEEPS: usize = 1000;

const IMPROVEMENT_EPS: f64 = 1e-9;

/// Node 0 is the depot, node `i + 1` is customer `i`.
pub(crate) struct Distances {
    n: usize,
    d: Vec<f64>,
}

impl Distances {
    pub(crate) fn new(problem: &RoutingProblem) -> Self {
        let points: Vec<_> = std::iter::once(problem.depot)
            .chain(problem.customers.iter().map(|c| c.pos))
            .collect();
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                d[a * n + b] = points[a].dist(&points[b]);
            }
        }
        Self { n, d }
    }

    #[inline]
    pub(crate) fn get(&self, a: usize, b: usize) -> f64 {
        self.d[a * self.n + b]
    }

    /// Cost of depot -> nodes... -> depot.
    pub(crate) fn tour(&self, nodes: &[usize]) -> f64 {
        let mut prev = 0;
        let mut cost = 0.0;
        for &v in nodes {
            cost += self.get(prev, v);
            prev = v;
        }
        cost + self.get(prev, 0)
    }
}

/// Parallel Clarke-Wright savings. May return more routes than vehicles.
fn savings_routes(problem: &RoutingProblem, dist: &Distances) -> Vec<Vec<usize>> {
    let m = problem.customers.len();
    let cap = problem.capacity;
    let mut savings = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 1..=m {
        for b in (a + 1)..=m {
            savings.push((dist.get(0, a) + dist.get(0, b) - dist.get(a, b), a, b));
        }
    }
    savings.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut routes: Vec<Option<Vec<usize>>> = (1..=m).map(|v| Some(vec![v])).collect();
    let mut loads: Vec<u32> = problem.customers.iter().map(|c| c.demand).collect();
    let mut route_of: Vec<usize> = (0..m).collect();

    for (s, a, b) in savings {
        if s <= IMPROVEMENT_EPS {
            break;
        }
        let (ra, rb) = (route_of[a - 1], route_of[b - 1]);
        if ra == rb || loads[ra] + loads[rb] > cap {
            continue;
        }
        let (Some(x), Some(y)) = (routes[ra].as_ref(), routes[rb].as_ref()) else {
            continue;
        };
        let a_first = x[0] == a;
        let a_last = *x.last().unwrap() == a;
        let b_first = y[0] == b;
        let b_last = *y.last().unwrap() == b;
        if !(a_first || a_last) || !(b_first || b_last) {
            continue;
        }
        let mut x = routes[ra].take().unwrap();
        let mut y = routes[rb].take().unwrap();
        // Orient so that `a` ends `x` and `b` starts `y`.
        if !a_last {
            x.reverse();
        }
        if !b_first {
            y.reverse();
        }
        x.extend(y);
        for &v in &x {
            route_of[v - 1] = ra;
        }
        loads[ra] += loads[rb];
        routes[ra] = Some(x);
    }
    routes.into_iter().flatten().collect()
}

/// One route per bin of an optimal packing, each ordered by nearest neighbour.
fn packing_routes(problem: &RoutingProblem, dist: &Distances) -> Vec<Vec<usize>> {
    let sizes: Vec<u32> = problem.customers.iter().map(|c| c.demand).collect();
    binpack::pack(&sizes, problem.capacity)
        .into_iter()
        .map(|bin| {
            let mut left: Vec<usize> = bin.into_iter().map(|i| i + 1).collect();
            left.sort_unstable();
            let mut route = Vec::with_capacity(left.len());
            let mut at = 0;
            while !left.is_empty() {
                let (k, _) = left
                    .iter()
                    .enumerate()
                    .min_by(|(_, &p), (_, &q)| dist.get(at, p).total_cmp(&dist.get(at, q)))
                    .unwrap();
                at = left.remove(k);
                route.push(at);
            }
            route
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
enum Move {
    TwoOpt { r: usize, i: usize, j: usize },
    Relocate { from: usize, i: usize, to: usize, k: usize },
    Swap { r1: usize, i: usize, r2: usize, k: usize },
}

pub(crate) struct LocalSearch<'a> {
    dist: &'a Distances,
    demand: Vec<u32>,
    cap: u32,
    max_routes: usize,
    pub(crate) routes: Vec<Vec<usize>>,
    loads: Vec<u32>,
}

impl<'a> LocalSearch<'a> {
    pub(crate) fn new(problem: &RoutingProblem, dist: &'a Distances, routes: Vec<Vec<usize>>) -> Self {
        let demand: Vec<u32> = std::iter::once(0)
            .chain(problem.customers.iter().map(|c| c.demand))
            .collect();
        let loads = routes.iter().map(|r| r.iter().map(|&v| demand[v]).sum()).collect();
        Self {
            dist,
            demand,
            cap: problem.capacity,
            max_routes: problem.max_vehicles,
            routes,
            loads,
        }
    }

    pub(crate) fn cost(&self) -> f64 {
        self.routes.iter().map(|r| self.dist.tour(r)).sum()
    }

    #[inline]
    fn node(route: &[usize], pos: isize) -> usize {
        if pos < 0 || pos as usize >= route.len() {
            0
        } else {
            route[pos as usize]
        }
    }

    /// Best improving move over all neighbourhoods, lowest index on ties.
    fn best_move(&self) -> Option<(f64, Move)> {
        let d = |a, b| self.dist.get(a, b);
        let mut best: Option<(f64, Move)> = None;
        let mut consider = |delta: f64, mv: Move| {
            if delta < -IMPROVEMENT_EPS && best.is_none_or(|(b, _)| delta < b) {
                best = Some((delta, mv));
            }
        };

        // Intra-route 2-opt: reverse positions i..=j.
        for (r, route) in self.routes.iter().enumerate() {
            let len = route.len() as isize;
            for i in 0..len {
                for j in (i + 1)..len {
                    let a = Self::node(route, i - 1);
                    let b = Self::node(route, i);
                    let c = Self::node(route, j);
                    let e = Self::node(route, j + 1);
                    let delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                    consider(
                        delta,
                        Move::TwoOpt {
                            r,
                            i: i as usize,
                            j: j as usize,
                        },
                    );
                }
            }
        }

        // Relocate: move one customer to any position of any route (or a new one).
        let open_slot = self.routes.len() < self.max_routes;
        for (from, route) in self.routes.iter().enumerate() {
            for i in 0..route.len() {
                let v = route[i];
                let p = Self::node(route, i as isize - 1);
                let n = Self::node(route, i as isize + 1);
                let removal = d(p, v) + d(v, n) - d(p, n);
                for (to, target) in self.routes.iter().enumerate() {
                    if to == from {
                        let reduced: Vec<usize> = route
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != i)
                            .map(|(_, &x)| x)
                            .collect();
                        for k in 0..=reduced.len() {
                            if k == i {
                                continue;
                            }
                            let a = Self::node(&reduced, k as isize - 1);
                            let b = Self::node(&reduced, k as isize);
                            let delta = d(a, v) + d(v, b) - d(a, b) - removal;
                            consider(delta, Move::Relocate { from, i, to, k });
                        }
                    } else {
                        if self.loads[to] + self.demand[v] > self.cap {
                            continue;
                        }
                        for k in 0..=target.len() {
                            let a = Self::node(target, k as isize - 1);
                            let b = Self::node(target, k as isize);
                            let delta = d(a, v) + d(v, b) - d(a, b) - removal;
                            consider(delta, Move::Relocate { from, i, to, k });
                        }
                    }
                }
                if open_slot && route.len() > 1 {
                    let delta = d(0, v) + d(v, 0) - removal;
                    consider(
                        delta,
                        Move::Relocate {
                            from,
                            i,
                            to: self.routes.len(),
                            k: 0,
                        },
                    );
                }
            }
        }

        // Inter-route swap of two customers.
        for r1 in 0..self.routes.len() {
            for r2 in (r1 + 1)..self.routes.len() {
                let (x, y) = (&self.routes[r1], &self.routes[r2]);
                for i in 0..x.len() {
                    let u = x[i];
                    let up = Self::node(x, i as isize - 1);
                    let un = Self::node(x, i as isize + 1);
                    for k in 0..y.len() {
                        let v = y[k];
                        let l1 = self.loads[r1] - self.demand[u] + self.demand[v];
                        let l2 = self.loads[r2] - self.demand[v] + self.demand[u];
                        if l1 > self.cap || l2 > self.cap {
                            continue;
                        }
                        let vp = Self::node(y, k as isize - 1);
                        let vn = Self::node(y, k as isize + 1);
                        let delta =
                            d(up, v) + d(v, un) - d(up, u) - d(u, un) + d(vp, u) + d(u, vn) - d(vp, v) - d(v, vn);
                        consider(delta, Move::Swap { r1, i, r2, k });
                    }
                }
            }
        }
        best
    }

    fn apply(&mut self, mv: Move) {
        match mv {
            Move::TwoOpt { r, i, j } => self.routes[r][i..=j].reverse(),
            Move::Relocate { from, i, to, k } => {
                let v = self.routes[from].remove(i);
                self.loads[from] -= self.demand[v];
                if to == self.routes.len() {
                    self.routes.push(vec![v]);
                    self.loads.push(self.demand[v]);
                } else {
                    self.routes[to].insert(k, v);
                    self.loads[to] += self.demand[v];
                }
            }
            Move::Swap { r1, i, r2, k } => {
                let u = self.routes[r1][i];
                let v = self.routes[r2][k];
                self.routes[r1][i] = v;
                self.routes[r2][k] = u;
                self.loads[r1] = self.loads[r1] - self.demand[u] + self.demand[v];
                self.loads[r2] = self.loads[r2] - self.demand[v] + self.demand[u];
            }
        }
        let mut r = 0;
        while r < self.routes.len() {
            if self.routes[r].is_empty() {
                self.routes.remove(r);
                self.loads.remove(r);
            } else {
                r += 1;
            }
        }
    }

    /// Applies best-improvement moves until none improves or the sweep cap is
    /// hit. Returns the cost after each sweep, starting with the initial cost.
    pub(crate) fn run(&mut self, max_sweeps: usize) -> Vec<f64> {
        let mut trace = vec![self.cost()];
        for _ in 0..max_sweeps {
            match self.best_move() {
                Some((_, mv)) => {
                    self.apply(mv);
                    trace.push(self.cost());
                }
                None => break,
            }
        }
        trace
    }
}

/// Heuristic CVRP solver. Starts from savings (when it fits the fleet) and
/// from an optimal packing, improves both, keeps the cheaper.
pub fn solve_cvrp(problem: &RoutingProblem) -> Result<VrpSolution> {
    problem.check_feasible()?;
    if problem.customers.is_empty() {
        return Ok(VrpSolution::empty());
    }
    let dist = Distances::new(problem);
    let mut starts = Vec::with_capacity(2);
    let savings = savings_routes(problem, &dist);
    if savings.len() <= problem.max_vehicles {
        starts.push(savings);
    }
    starts.push(packing_routes(problem, &dist));

    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for start in starts {
        let mut ls = LocalSearch::new(problem, &dist, start);
        ls.run(MAX_SWEEPS);
        let cost = ls.cost();
        if best.as_ref().is_none_or(|(c, _)| cost < *c - IMPROVEMENT_EPS) {
            best = Some((cost, ls.routes));
        }
    }
    let (_, routes) = best.expect("at least one start");
    Ok(VrpSolution::from_nodes(&dist, routes))
}
