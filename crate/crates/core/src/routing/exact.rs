//! Exact CVRP by enumeration, for small instances only.
//!
//! Every capacity-feasible customer subset gets its optimal tour by trying all
//! visiting orders; a subset DP then picks the cheapest partition into at
//! most `K` routes.

use itertools::Itertools;

use super::cvrp::Distances;
use super::{RoutingProblem, VrpSolution};
use crate::error::{Error, Result};

pub const MAX_EXACT_CUSTOMERS: usize = 8;

pub fn exact_cvrp(problem: &RoutingProblem) -> Result<VrpSolution> {
    let m = problem.customers.len();
    if m > MAX_EXACT_CUSTOMERS {
        return Err(Error::TooLarge {
            customers: m,
            max: MAX_EXACT_CUSTOMERS,
        });
    }
    problem.check_feasible()?;
    if m == 0 {
        return Ok(VrpSolution::empty());
    }
    let dist = Distances::new(problem);
    let full = (1usize << m) - 1;

    // Optimal tour per feasible subset.
    let mut tour: Vec<Option<(f64, Vec<usize>)>> = vec![None; full + 1];
    for (mask, slot) in tour.iter_mut().enumerate().skip(1) {
        let members: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| i + 1).collect();
        let load: u32 = members.iter().map(|&v| problem.customers[v - 1].demand).sum();
        if load > problem.capacity {
            continue;
        }
        let k = members.len();
        let best = members
            .iter()
            .copied()
            .permutations(k)
            .map(|order| (dist.tour(&order), order))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        *slot = Some(best);
    }

    // best[k][mask]: cheapest cover of `mask` with at most k routes.
    let k_max = problem.max_vehicles.min(m);
    let mut best = vec![vec![f64::INFINITY; full + 1]; k_max + 1];
    let mut choice = vec![vec![0usize; full + 1]; k_max + 1];
    for row in best.iter_mut() {
        row[0] = 0.0;
    }
    for k in 1..=k_max {
        for mask in 1..=full {
            let low = mask & mask.wrapping_neg();
            let rest = mask ^ low;
            // Enumerate subsets of `mask` that contain its lowest customer.
            let mut sub = rest;
            loop {
                let part = sub | low;
                if let Some((c, _)) = &tour[part] {
                    let v = c + best[k - 1][mask ^ part];
                    if v < best[k][mask] {
                        best[k][mask] = v;
                        choice[k][mask] = part;
                    }
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
    }
    if !best[k_max][full].is_finite() {
        return Err(Error::Infeasible {
            needed: k_max + 1,
            available: problem.max_vehicles,
        });
    }

    let mut routes = Vec::new();
    let (mut k, mut mask) = (k_max, full);
    while mask != 0 {
        let part = choice[k][mask];
        routes.push(tour[part].as_ref().unwrap().1.clone());
        mask ^= part;
        k -= 1;
    }
    Ok(VrpSolution::from_nodes(&dist, routes))
}
