//! End-of-horizon operational cost: fleet sizing by exact bin packing, then
//! capacitated routing with the fleet fixed.
//!
//! Demands larger than the vehicle capacity are pre-split into virtual
//! customers at the same coordinate, so every customer fits in one vehicle
//! and is visited exactly once.

mod binpack;
mod cvrp;
mod exact;

use serde::{Deserialize, Serialize};

pub use binpack::{first_fit_decreasing, lower_bound_l2, min_bins, min_vehicles, pack, split_demands};
pub use cvrp::{solve_cvrp, MAX_SWEEPS};
pub use exact::{exact_cvrp, MAX_EXACT_CUSTOMERS};

use crate::error::{Error, Result};
use crate::instance::{InstanceSpec, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct Customer {
    pub pos: Point,
    pub demand: u32,
    /// Booking location this customer was split from, if any.
    pub location: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingProblem {
    pub depot: Point,
    pub customers: Vec<Customer>,
    pub capacity: u32,
    pub max_vehicles: usize,
}

impl RoutingProblem {
    /// Routing problem for the accepted requests `w` with a fleet of `vehicles`.
    pub fn from_state(w: &[u32], spec: &InstanceSpec, vehicles: usize) -> Self {
        let customers = split_demands(w, spec.capacity)
            .into_iter()
            .map(|(j, demand)| Customer {
                pos: spec.location(j),
                demand,
                location: Some(j),
            })
            .collect();
        Self {
            depot: spec.depot(),
            customers,
            capacity: spec.capacity,
            max_vehicles: vehicles,
        }
    }

    fn demands(&self) -> Vec<u32> {
        self.customers.iter().map(|c| c.demand).collect()
    }

    pub(crate) fn check_feasible(&self) -> Result<()> {
        if let Some(c) = self
            .customers
            .iter()
            .find(|c| c.demand == 0 || c.demand > self.capacity)
        {
            return Err(Error::InvalidArgument(format!(
                "customer demand {} outside 1..={}",
                c.demand, self.capacity
            )));
        }
        let needed = min_bins(&self.demands(), self.capacity);
        if needed > self.max_vehicles {
            return Err(Error::Infeasible {
                needed,
                available: self.max_vehicles,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VrpSolution {
    /// Customer indices (into `RoutingProblem::customers`) per used vehicle.
    pub routes: Vec<Vec<usize>>,
    pub cost: f64,
    pub vehicles_used: usize,
}

impl VrpSolution {
    fn empty() -> Self {
        Self {
            routes: Vec::new(),
            cost: 0.0,
            vehicles_used: 0,
        }
    }

    /// Builds a solution from node sequences (node `i + 1` = customer `i`).
    fn from_nodes(dist: &cvrp::Distances, nodes: Vec<Vec<usize>>) -> Self {
        let cost = nodes.iter().map(|r| dist.tour(r)).sum();
        let routes: Vec<Vec<usize>> = nodes
            .into_iter()
            .filter(|r| !r.is_empty())
            .map(|r| r.into_iter().map(|v| v - 1).collect())
            .collect();
        Self {
            vehicles_used: routes.len(),
            routes,
            cost,
        }
    }

    /// Euclidean length of every route, depot to depot.
    pub fn recompute_cost(&self, problem: &RoutingProblem) -> f64 {
        self.routes
            .iter()
            .map(|route| {
                let mut at = problem.depot;
                let mut c = 0.0;
                for &i in route {
                    c += at.dist(&problem.customers[i].pos);
                    at = problem.customers[i].pos;
                }
                c + at.dist(&problem.depot)
            })
            .sum()
    }

    /// Checks the coverage, capacity, fleet and cost invariants.
    pub fn validate(&self, problem: &RoutingProblem) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let mut seen = vec![false; problem.customers.len()];
        for route in &self.routes {
            if route.is_empty() {
                return bad("empty route".into());
            }
            let load: u32 = route.iter().map(|&i| problem.customers[i].demand).sum();
            if load > problem.capacity {
                return bad(format!("route load {load} exceeds capacity {}", problem.capacity));
            }
            for &i in route {
                if std::mem::replace(&mut seen[i], true) {
                    return bad(format!("customer {i} visited twice"));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return bad(format!("customer {i} not visited"));
        }
        if self.routes.len() > problem.max_vehicles || self.vehicles_used != self.routes.len() {
            return bad(format!(
                "{} routes for {} vehicles",
                self.routes.len(),
                problem.max_vehicles
            ));
        }
        if (self.recompute_cost(problem) - self.cost).abs() > 1e-9 * (1.0 + self.cost) {
            return bad("stored cost does not match the routes".into());
        }
        Ok(())
    }
}

/// Non-positive end-of-horizon cost: routing cost plus outsourcing penalty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalCost {
    pub gamma: f64,
    /// Fleet size `max(K0, minimum vehicles)`; 0 when nothing was accepted.
    pub fleet: usize,
    pub z_star: f64,
    pub outsourced: usize,
    pub solution: VrpSolution,
}

impl OperationalCost {
    pub fn vehicles_used(&self) -> usize {
        self.solution.vehicles_used
    }
}

/// Fleet size used for state `w`: the free fleet, or the bin-packing minimum
/// when that is larger. Zero for the empty state.
pub fn fleet_size(w: &[u32], spec: &InstanceSpec) -> usize {
    let needed = min_vehicles(w, spec.capacity);
    if needed == 0 {
        0
    } else {
        needed.max(spec.free_vehicles())
    }
}

/// Outsourcing penalty `C * (K - K0)` for state `w`.
pub fn outsourcing_cost(w: &[u32], spec: &InstanceSpec) -> f64 {
    let extra = fleet_size(w, spec).saturating_sub(spec.free_vehicles());
    spec.outsourcing_cost() * extra as f64
}

pub fn operational_cost(w: &[u32], spec: &InstanceSpec) -> Result<OperationalCost> {
    if w.len() != spec.n() {
        return Err(Error::InvalidArgument(format!(
            "state has {} entries, instance has {} locations",
            w.len(),
            spec.n()
        )));
    }
    let fleet = fleet_size(w, spec);
    if fleet == 0 {
        return Ok(OperationalCost {
            gamma: 0.0,
            fleet: 0,
            z_star: 0.0,
            outsourced: 0,
            solution: VrpSolution::empty(),
        });
    }
    let problem = RoutingProblem::from_state(w, spec, fleet);
    let solution = solve_cvrp(&problem)?;
    let outsourced = fleet - spec.free_vehicles().min(fleet);
    let z_star = solution.cost;
    Ok(OperationalCost {
        gamma: -(z_star + spec.outsourcing_cost() * outsourced as f64),
        fleet,
        z_star,
        outsourced,
        solution,
    })
}
