//! Booking instances: demand model, geometry, fleet, and the four benchmark
//! families.
//!
//! Request probabilities follow a linear drift: the probability of a request
//! for location `j` in period `t` is `init[j] + (t - 1) * drift[j]`. The
//! no-request probability is constant over the horizon. Vehicle capacity is
//! never chosen freely; it is derived from total expected demand, the free
//! fleet size and the load factor (see [`derive_capacity`]).

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const INSTANCE_FORMAT: &str = "bookctl-instance/1";

/// Tolerance used when checking that a period's raw probabilities are
/// consistent, and when flooring the capacity formula.
const PROB_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One of the four benchmark instance families, identified by location count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Family {
    Four,
    Ten,
    Fifteen,
    Fifty,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Four, Family::Ten, Family::Fifteen, Family::Fifty];

    pub fn locations(self) -> usize {
        match self {
            Family::Four => 4,
            Family::Ten => 10,
            Family::Fifteen => 15,
            Family::Fifty => 50,
        }
    }

    /// Side length of the square the coordinates are drawn from.
    pub fn square_side(self) -> f64 {
        match self {
            Family::Fifty => 50.0,
            _ => 10.0,
        }
    }
}

impl TryFrom<u32> for Family {
    type Error = Error;

    fn try_from(id: u32) -> Result<Self> {
        match id {
            4 => Ok(Family::Four),
            10 => Ok(Family::Ten),
            15 => Ok(Family::Fifteen),
            50 => Ok(Family::Fifty),
            other => Err(Error::UnknownFamily(other)),
        }
    }
}

impl From<Family> for u32 {
    fn from(f: Family) -> u32 {
        f.locations() as u32
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.locations())
    }
}

/// Everything that defines an instance except the vehicle capacity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub family: Option<Family>,
    pub periods: usize,
    pub revenues: Vec<f64>,
    pub lambda_none: f64,
    pub lambda_init: Vec<f64>,
    pub lambda_drift: Vec<f64>,
    pub locations: Vec<Point>,
    pub depot: Point,
    pub free_vehicles: usize,
    pub outsourcing_cost: f64,
    pub load_factor: f64,
}

impl InstanceParams {
    pub fn n(&self) -> usize {
        self.revenues.len()
    }

    /// Raw request probability of location `j` (0-based) in period `t` (1-based).
    pub fn lambda(&self, j: usize, t: usize) -> f64 {
        self.lambda_init[j] + (t as f64 - 1.0) * self.lambda_drift[j]
    }

    /// Raw (unnormalized) sum of the no-request and request probabilities in period `t`.
    pub fn raw_period_sum(&self, t: usize) -> f64 {
        self.lambda_none + (0..self.n()).map(|j| self.lambda(j, t)).sum::<f64>()
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        let n = self.n();
        if n == 0 {
            return bad("at least one location is required".into());
        }
        if self.periods == 0 {
            return bad("at least one period is required".into());
        }
        if self.free_vehicles == 0 {
            return bad("at least one free vehicle is required".into());
        }
        if self.lambda_init.len() != n || self.lambda_drift.len() != n || self.locations.len() != n {
            return bad(format!(
                "per-location vectors must all have length {n} (init {}, drift {}, locations {})",
                self.lambda_init.len(),
                self.lambda_drift.len(),
                self.locations.len()
            ));
        }
        if self.outsourcing_cost.is_nan() || self.outsourcing_cost <= 0.0 {
            return bad(format!("outsourcing cost must be > 0, got {}", self.outsourcing_cost));
        }
        if self.load_factor.is_nan() || self.load_factor <= 0.0 {
            return bad(format!("load factor must be > 0, got {}", self.load_factor));
        }
        if !(self.lambda_none > 0.0 && self.lambda_none < 1.0) {
            return bad(format!(
                "no-request probability must be in (0,1), got {}",
                self.lambda_none
            ));
        }
        for j in 0..n {
            if !self.revenues[j].is_finite() || self.revenues[j] <= 0.0 {
                return bad(format!("revenue of location {} must be > 0", j + 1));
            }
            if self.lambda_init[j].is_nan() || self.lambda_init[j] <= 0.0 {
                return bad(format!("initial probability of location {} must be > 0", j + 1));
            }
            let last = self.lambda(j, self.periods);
            if last < -PROB_EPS {
                return bad(format!(
                    "probability of location {} becomes negative ({last}) by period {}",
                    j + 1,
                    self.periods
                ));
            }
        }
        let finite = |p: &Point| p.x.is_finite() && p.y.is_finite();
        if !finite(&self.depot) || !self.locations.iter().all(finite) {
            return bad("coordinates must be finite".into());
        }
        Ok(())
    }
}

/// Vehicle capacity from the load-factor rule:
/// `floor(sum over periods and outcomes of raw lambda / (K0 * LF))`.
///
/// Raw probabilities are used as listed, including families whose per-period
/// sum is not exactly one.
pub fn derive_capacity(params: &InstanceParams) -> Result<u32> {
    params.validate()?;
    let total: f64 = (1..=params.periods).map(|t| params.raw_period_sum(t)).sum();
    let q = (total / (params.free_vehicles as f64 * params.load_factor) + PROB_EPS).floor();
    if q < 1.0 {
        return Err(Error::InvalidInstance(format!("derived capacity {q} is below 1")));
    }
    Ok(q as u32)
}

/// A complete, validated booking instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(flatten)]
    pub params: InstanceParams,
    pub capacity: u32,
}

impl InstanceSpec {
    pub fn new(params: InstanceParams) -> Result<Self> {
        let capacity = derive_capacity(&params)?;
        Ok(Self { params, capacity })
    }

    /// Checks every invariant, including that the stored capacity matches the formula.
    pub fn validate(&self) -> Result<()> {
        let expected = derive_capacity(&self.params)?;
        if expected != self.capacity {
            return Err(Error::InvalidInstance(format!(
                "capacity {} does not match the load-factor formula ({expected})",
                self.capacity
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn periods(&self) -> usize {
        self.params.periods
    }

    pub fn revenue(&self, j: usize) -> f64 {
        self.params.revenues[j]
    }

    pub fn free_vehicles(&self) -> usize {
        self.params.free_vehicles
    }

    pub fn outsourcing_cost(&self) -> f64 {
        self.params.outsourcing_cost
    }

    pub fn depot(&self) -> Point {
        self.params.depot
    }

    pub fn location(&self, j: usize) -> Point {
        self.params.locations[j]
    }

    pub fn family(&self) -> Option<Family> {
        self.params.family
    }

    pub fn hash(&self) -> String {
        io::json_hash(self)
    }
}

/// Builds a benchmark family instance. Only coordinates (and the depot) are
/// random; every other parameter is fixed per family.
pub fn build_family(family: Family, seed: u64) -> Result<InstanceSpec> {
    struct Group {
        size: usize,
        revenue: f64,
        init: f64,
        drift: f64,
    }
    let (periods, groups, free_vehicles, outsourcing_cost, load_factor): (usize, Vec<Group>, usize, f64, f64) =
        match family {
            Family::Four => (
                20,
                vec![
                    Group {
                        size: 1,
                        revenue: 4.0,
                        init: 0.45,
                        drift: -0.01,
                    },
                    Group {
                        size: 1,
                        revenue: 8.0,
                        init: 0.40,
                        drift: -0.01,
                    },
                    Group {
                        size: 1,
                        revenue: 12.0,
                        init: 0.10,
                        drift: 0.01,
                    },
                    Group {
                        size: 1,
                        revenue: 16.0,
                        init: 0.05,
                        drift: 0.01,
                    },
                ],
                2,
                100.0,
                1.1,
            ),
            Family::Ten => (
                30,
                vec![
                    Group {
                        size: 4,
                        revenue: 10.0,
                        init: 0.125,
                        drift: -0.001,
                    },
                    Group {
                        size: 4,
                        revenue: 12.0,
                        init: 0.075,
                        drift: 0.0,
                    },
                    Group {
                        size: 2,
                        revenue: 20.0,
                        init: 0.05,
                        drift: 0.002,
                    },
                ],
                4,
                100.0,
                1.2,
            ),
            Family::Fifteen => (
                50,
                vec![
                    Group {
                        size: 5,
                        revenue: 10.0,
                        init: 0.10,
                        drift: -0.001,
                    },
                    Group {
                        size: 5,
                        revenue: 12.0,
                        init: 0.06,
                        drift: 0.0,
                    },
                    Group {
                        size: 5,
                        revenue: 20.0,
                        init: 0.02,
                        drift: 0.001,
                    },
                ],
                4,
                250.0,
                1.2,
            ),
            Family::Fifty => (
                100,
                vec![
                    Group {
                        size: 30,
                        revenue: 15.0,
                        init: 0.0166,
                        drift: -0.0001,
                    },
                    Group {
                        size: 10,
                        revenue: 22.0,
                        init: 0.03,
                        drift: 0.0,
                    },
                    Group {
                        size: 10,
                        revenue: 30.0,
                        init: 0.01,
                        drift: 0.0003,
                    },
                ],
                4,
                600.0,
                1.3,
            ),
        };

    let mut revenues = Vec::new();
    let mut lambda_init = Vec::new();
    let mut lambda_drift = Vec::new();
    for g in &groups {
        for _ in 0..g.size {
            revenues.push(g.revenue);
            lambda_init.push(g.init);
            lambda_drift.push(g.drift);
        }
    }

    let side = family.square_side();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = || Point::new(rng.gen_range(0.0..=side), rng.gen_range(0.0..=side));
    let locations: Vec<Point> = (0..family.locations()).map(|_| sample()).collect();
    let depot = sample();

    InstanceSpec::new(InstanceParams {
        family: Some(family),
        periods,
        revenues,
        lambda_none: 0.10,
        lambda_init,
        lambda_drift,
        locations,
        depot,
        free_vehicles,
        outsourcing_cost,
        load_factor,
    })
}

/// Per-period outcome distribution, normalized so every row sums to one.
/// Column 0 is "no request", column `j + 1` is a request for location `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalTable {
    rows: Vec<Vec<f64>>,
}

impl ArrivalTable {
    pub fn new(spec: &InstanceSpec) -> Result<Self> {
        let p = &spec.params;
        let mut rows = Vec::with_capacity(p.periods);
        for t in 1..=p.periods {
            let mut row = Vec::with_capacity(p.n() + 1);
            row.push(p.lambda_none);
            for j in 0..p.n() {
                let l = p.lambda(j, t);
                if l < -PROB_EPS {
                    return Err(Error::InvalidInstance(format!(
                        "negative probability {l} for location {} in period {t}",
                        j + 1
                    )));
                }
                row.push(l.max(0.0));
            }
            rows.push(row);
        }
        Ok(Self::from_rows(rows))
    }

    /// Builds a table from raw rows, normalizing each one.
    pub fn from_rows(mut rows: Vec<Vec<f64>>) -> Self {
        for row in &mut rows {
            let sum: f64 = row.iter().sum();
            assert!(sum > 0.0, "arrival row must have positive mass");
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Self { rows }
    }

    pub fn periods(&self) -> usize {
        self.rows.len()
    }

    /// Row of period `t` (1-based).
    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t - 1]
    }

    pub fn no_request(&self, t: usize) -> f64 {
        self.rows[t - 1][0]
    }

    pub fn request(&self, t: usize, j: usize) -> f64 {
        self.rows[t - 1][j + 1]
    }
}

pub fn arrival_table(spec: &InstanceSpec) -> Result<ArrivalTable> {
    ArrivalTable::new(spec)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format: String,
    pub seed: Option<u64>,
    pub hash: String,
    pub instance: InstanceSpec,
}

pub fn save_instance(path: &Path, spec: &InstanceSpec, seed: Option<u64>) -> Result<()> {
    let file = InstanceFile {
        format: INSTANCE_FORMAT.to_string(),
        seed,
        hash: spec.hash(),
        instance: spec.clone(),
    };
    io::write_json(path, &file)
}

pub fn load_instance(path: &Path) -> Result<InstanceSpec> {
    let file: InstanceFile = io::read_json(path)?;
    io::check_format(INSTANCE_FORMAT, &file.format)?;
    file.instance.validate()?;
    Ok(file.instance)
}
