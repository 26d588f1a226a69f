//! Labeled terminal states and the routing-cost surrogate.
//!
//! Data comes from random acceptance policies run at several acceptance
//! probabilities, so the pool covers both sparse and saturated terminal
//! states. Labels are the routing cost `z*` only; the outsourcing penalty is
//! exact and cheap, so it is added back analytically at prediction time.

pub mod forest;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use forest::{Forest, ForestConfig, RegressionTree, TreeNode};

use crate::error::{Error, Result};
use crate::features::{extract, feature_len, feature_names};
use crate::instance::{arrival_table, InstanceSpec};
use crate::io;
use crate::policies::RandomPolicy;
use crate::routing::{operational_cost, outsourcing_cost};
use crate::simulator::{simulate, stream_rng};

pub const DATASET_FORMAT: &str = "bookctl-dataset/1";
pub const MODEL_FORMAT: &str = "bookctl-forest/1";

/// Acceptance probabilities used when generating data.
pub const P_SCHEDULE: [f64; 10] = [0.10, 0.25, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.99, 1.0];

/// Share of each probability slice held out for testing.
const TEST_SHARE: f64 = 0.2;
const SPLIT_STREAM: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
    pub p: f64,
    pub test: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub instance_hash: String,
    pub seed: u64,
    pub schedule: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub provenance: DatasetProvenance,
}

impl Dataset {
    pub fn train(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| !s.test)
    }

    pub fn test(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.test)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let p = &self.provenance;
        let _ = writeln!(out, "# format: {DATASET_FORMAT}");
        let _ = writeln!(out, "# instance_hash: {}", p.instance_hash);
        let _ = writeln!(out, "# seed: {}", p.seed);
        let schedule: Vec<String> = p.schedule.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "# schedule: {}", schedule.join(" "));
        let _ = writeln!(out, "# features: {}", self.feature_names.len());
        let _ = writeln!(out, "{},label,p,split", self.feature_names.join(","));
        for s in &self.samples {
            for v in &s.features {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{},{},{}", s.label, s.p, if s.test { "test" } else { "train" });
        }
        io::write_text(path, &out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut meta = std::collections::BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line[1..].split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("{}: missing `{k}` header", path.display())))
        };
        io::check_format(DATASET_FORMAT, &get("format")?)?;
        let bad = |m: String| Error::InvalidArgument(format!("{}: {m}", path.display()));
        let seed = get("seed")?.parse().map_err(|_| bad("bad seed".into()))?;
        let schedule = get("schedule")?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad schedule".into())))
            .collect::<Result<Vec<_>>>()?;

        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let headers = reader.headers().map_err(csv_err)?.clone();
        let nf = headers
            .len()
            .checked_sub(3)
            .ok_or_else(|| bad("too few columns".into()))?;
        let feature_names = headers.iter().take(nf).map(str::to_string).collect();
        let mut samples = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let num = |i: usize| {
                record[i]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad number `{}`", &record[i])))
            };
            samples.push(Sample {
                features: (0..nf).map(num).collect::<Result<_>>()?,
                label: num(nf)?,
                p: num(nf + 1)?,
                test: &record[nf + 2] == "test",
            });
        }
        Ok(Self {
            feature_names,
            samples,
            provenance: DatasetProvenance {
                instance_hash: get("instance_hash")?,
                seed,
                schedule,
            },
        })
    }
}

/// Simulates `total_size` random-policy episodes (equal count per acceptance
/// probability) and labels each terminal state with its routing cost.
pub fn generate_dataset(spec: &InstanceSpec, total_size: usize, seed: u64) -> Result<Dataset> {
    let slices = P_SCHEDULE.len();
    if total_size == 0 || !total_size.is_multiple_of(slices) {
        return Err(Error::InvalidArgument(format!(
            "dataset size {total_size} must be a positive multiple of {slices}"
        )));
    }
    let per_p = total_size / slices;
    let table = arrival_table(spec)?;

    let mut samples: Vec<Sample> = (0..total_size)
        .into_par_iter()
        .map(|e| {
            let p = P_SCHEDULE[e / per_p];
            let mut rng = stream_rng(seed, e as u64);
            let traj = simulate(spec, &table, &RandomPolicy::new(p), &mut rng)?;
            let w = traj.final_state.w;
            let cost = operational_cost(&w, spec)?;
            Ok(Sample {
                features: extract(&w, spec).values,
                label: cost.z_star,
                p,
                test: false,
            })
        })
        .collect::<Result<_>>()?;

    let test_per_p = (per_p as f64 * TEST_SHARE).round() as usize;
    for s in 0..slices {
        let mut idx: Vec<usize> = (s * per_p..(s + 1) * per_p).collect();
        idx.shuffle(&mut stream_rng(seed, SPLIT_STREAM + s as u64));
        for &i in &idx[..test_per_p] {
            samples[i].test = true;
        }
    }

    Ok(Dataset {
        feature_names: feature_names(spec.n()),
        samples,
        provenance: DatasetProvenance {
            instance_hash: spec.hash(),
            seed,
            schedule: P_SCHEDULE.to_vec(),
        },
    })
}

/// Surrogate of the routing cost for one instance family layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    /// Location count the feature layout was built for.
    pub locations: usize,
    pub instance_hash: String,
    pub forest: Forest,
}

impl ForestModel {
    pub fn layout(&self) -> String {
        format!("{} locations / {} features", self.locations, self.forest.n_features)
    }

    pub fn check_layout(&self, spec: &InstanceSpec) -> Result<()> {
        if self.locations != spec.n() || self.forest.n_features != feature_len(spec.n()) {
            return Err(Error::LayoutMismatch {
                expected: self.layout(),
                got: format!("{} locations / {} features", spec.n(), feature_len(spec.n())),
            });
        }
        Ok(())
    }

    /// Predicted routing cost `z*` (non-negative magnitude) for a feature vector.
    pub fn predict_routing(&self, features: &[f64]) -> f64 {
        self.forest.predict(features)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = io::read_json(path)?;
        io::check_format(MODEL_FORMAT, &m.format)?;
        Ok(m)
    }
}

/// Fits the forest on the training split. Validation is folded into training.
pub fn train_forest(data: &Dataset, config: ForestConfig, seed: u64) -> Result<ForestModel> {
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = data.train().map(|s| (s.features.clone(), s.label)).unzip();
    if x.is_empty() {
        return Err(Error::EmptyData("training split is empty".into()));
    }
    let forest = Forest::fit(&x, &y, config, seed)?;
    let locations = forest
        .n_features
        .checked_sub(17)
        .ok_or_else(|| Error::InvalidArgument("feature vectors are too short".into()))?;
    Ok(ForestModel {
        format: MODEL_FORMAT.to_string(),
        locations,
        instance_hash: data.provenance.instance_hash.clone(),
        forest,
    })
}

/// Surrogate operational cost: predicted routing cost plus the exact
/// outsourcing penalty, negated. Exactly zero for the empty state.
pub fn predict_cost(model: &ForestModel, w: &[u32], spec: &InstanceSpec) -> Result<f64> {
    model.check_layout(spec)?;
    if w.len() != spec.n() {
        return Err(Error::InvalidArgument(format!(
            "state has {} entries, instance has {} locations",
            w.len(),
            spec.n()
        )));
    }
    if w.iter().all(|&c| c == 0) {
        return Ok(0.0);
    }
    let routing = model.predict_routing(&extract(w, spec).values);
    Ok(-(routing + outsourcing_cost(w, spec)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
}

pub fn metrics<'a>(model: &ForestModel, samples: impl IntoIterator<Item = &'a Sample>) -> Result<Metrics> {
    let (mut se, mut ae, mut count) = (0.0, 0.0, 0usize);
    for s in samples {
        let err = model.predict_routing(&s.features) - s.label;
        se += err * err;
        ae += err.abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyData("no samples to score".into()));
    }
    Ok(Metrics {
        mse: se / count as f64,
        mae: ae / count as f64,
        count,
    })
}
