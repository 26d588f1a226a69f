use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bookctl::bench::{self, Method};
use bookctl::instance::{arrival_table, build_family, load_instance, save_instance, Family, InstanceSpec};
use bookctl::io;
use bookctl::learning::{self, Dataset, ForestConfig, ForestModel};
use bookctl::policies::{
    dp_solve, sarsa_train, BaseKind, BasePolicy, CachedCost, DpPolicy, ExactCost, MctsConfig, MctsPolicy,
    PolicyArtifact, PolicyParameters, PolicyProvenance, RandomPolicy, SarsaConfig, SarsaPolicy, SurrogateCost,
    Terminal, TerminalCost, DEFAULT_ROLLOUT_P, DEFAULT_STATE_CAP,
};
use bookctl::routing::operational_cost;
use bookctl::simulator::Realizations;

/// Environment variable capping the number of worker threads.
const WORKERS_ENV: &str = "BOOKCTL_WORKERS";

#[derive(Parser)]
#[command(
    name = "bookctl",
    version,
    about = "Booking control with learned routing-cost surrogates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TerminalArg {
    Exact,
    Ml,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    Rand,
    Sarsa,
}

impl From<BaseArg> for BaseKind {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::Rand => BaseKind::Random,
            BaseArg::Sarsa => BaseKind::Sarsa,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build one of the four instance families.
    GenInstance {
        #[arg(long)]
        family: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample shared demand realizations for paired evaluation.
    GenRealizations {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate labeled terminal states for the routing-cost surrogate.
    GenData {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the random-forest surrogate on a dataset's training split.
    TrainRf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report train and test errors of a trained surrogate.
    EvalRf {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the booking problem by backward induction.
    DpSolve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        terminal: TerminalArg,
        /// Surrogate model, required for `--terminal ml`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a SARSA policy against the surrogate cost.
    TrainSarsa {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional learning-curve CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Evaluate methods on shared realizations.
    Evaluate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        realizations: PathBuf,
        /// Comma-separated: dp-exact, dp-ml, sarsa, mcts, mcts-rand-X,
        /// mcts-sarsa-X, rand-P.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Precomputed policy files; computed on the fly when absent.
        #[arg(long)]
        dp_exact: Option<PathBuf>,
        #[arg(long)]
        dp_ml: Option<PathBuf>,
        #[arg(long)]
        sarsa: Option<PathBuf>,
        /// Settings for the plain `mcts` method.
        #[arg(long, default_value_t = 30)]
        simulations: usize,
        #[arg(long, value_enum, default_value_t = BaseArg::Rand)]
        base: BaseArg,
        /// Overrides the tuned exploration constant for every MCTS method.
        #[arg(long)]
        uct_c: Option<f64>,
        /// Acceptance probability of the random MCTS base policy.
        #[arg(long, default_value_t = DEFAULT_ROLLOUT_P)]
        rollout_p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes PREFIX.json and PREFIX.csv.
        #[arg(long)]
        out: PathBuf,
        /// Optional wall-clock timing table.
        #[arg(long)]
        timings: Option<PathBuf>,
    },
    /// Price one terminal state with the routing stack.
    Route {
        #[arg(long)]
        instance: PathBuf,
        /// Accepted requests per location, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        state: Vec<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("file not found: {}", path.display());
    }
    Ok(())
}

fn instance(path: &Path) -> Result<InstanceSpec> {
    require(path)?;
    load_instance(path).with_context(|| format!("loading instance {}", path.display()))
}

fn model(path: Option<&Path>) -> Result<(ForestModel, String)> {
    let path = path.ok_or_else(|| anyhow!("this command needs --model"))?;
    require(path)?;
    let m = ForestModel::load(path).with_context(|| format!("loading model {}", path.display()))?;
    let hash = io::json_hash(&m);
    Ok((m, hash))
}

fn policy_file(path: &Path) -> Result<PolicyArtifact> {
    require(path)?;
    PolicyArtifact::load(path).with_context(|| format!("loading policy {}", path.display()))
}

fn surrogate(m: ForestModel, spec: &InstanceSpec) -> Result<Arc<dyn TerminalCost>> {
    Ok(Arc::new(CachedCost::new(SurrogateCost::new(Arc::new(m), spec)?)))
}

#[derive(Serialize)]
struct RouteReport {
    format: &'static str,
    instance_hash: String,
    seed: u64,
    state: Vec<u32>,
    gamma: f64,
    fleet: usize,
    z_star: f64,
    outsourced: usize,
    routes: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct RfReport {
    format: &'static str,
    instance_hash: String,
    model_hash: String,
    seed: u64,
    train: learning::Metrics,
    test: Option<learning::Metrics>,
}

#[derive(Clone, Copy)]
enum MethodKind {
    DpExact,
    DpMl,
    Sarsa,
    Mcts { base: BaseKind, simulations: usize },
    RandP(f64),
}

fn parse_method(name: &str, simulations: usize, base: BaseArg) -> Result<MethodKind> {
    Ok(match name {
        "dp-exact" => MethodKind::DpExact,
        "dp-ml" => MethodKind::DpMl,
        "sarsa" => MethodKind::Sarsa,
        "mcts" => MethodKind::Mcts {
            base: base.into(),
            simulations,
        },
        _ => {
            if let Some(x) = name.strip_prefix("mcts-rand-") {
                MethodKind::Mcts {
                    base: BaseKind::Random,
                    simulations: x.parse().with_context(|| format!("bad simulation count in `{name}`"))?,
                }
            } else if let Some(x) = name.strip_prefix("mcts-sarsa-") {
                MethodKind::Mcts {
                    base: BaseKind::Sarsa,
                    simulations: x.parse().with_context(|| format!("bad simulation count in `{name}`"))?,
                }
            } else if let Some(p) = name.strip_prefix("rand-") {
                let p: f64 = p.parse().with_context(|| format!("bad probability in `{name}`"))?;
                if !(0.0..=1.0).contains(&p) {
                    bail!("acceptance probability in `{name}` must lie in [0, 1]");
                }
                MethodKind::RandP(p)
            } else {
                bail!("unknown method `{name}`");
            }
        }
    })
}

struct EvalArgs {
    instance: PathBuf,
    realizations: PathBuf,
    methods: Vec<String>,
    model: Option<PathBuf>,
    dp_exact: Option<PathBuf>,
    dp_ml: Option<PathBuf>,
    sarsa: Option<PathBuf>,
    simulations: usize,
    base: BaseArg,
    uct_c: Option<f64>,
    rollout_p: f64,
    seed: u64,
    out: PathBuf,
    timings: Option<PathBuf>,
}

fn evaluate(a: EvalArgs) -> Result<()> {
    let spec = instance(&a.instance)?;
    require(&a.realizations)?;
    let reals = Realizations::load(&a.realizations)
        .with_context(|| format!("loading realizations {}", a.realizations.display()))?;
    reals.check_instance(&spec)?;
    let kinds: Vec<MethodKind> = a
        .methods
        .iter()
        .map(|m| parse_method(m.trim(), a.simulations, a.base))
        .collect::<Result<_>>()?;

    let needs_model = kinds
        .iter()
        .any(|k| !matches!(k, MethodKind::DpExact | MethodKind::RandP(_)));
    let cost = if needs_model {
        let (m, _) = model(a.model.as_deref())?;
        Some(surrogate(m, &spec)?)
    } else {
        None
    };
    let needs_sarsa = kinds.iter().any(|k| {
        matches!(
            k,
            MethodKind::Sarsa
                | MethodKind::Mcts {
                    base: BaseKind::Sarsa,
                    ..
                }
        )
    });
    let mut sarsa: Option<(Arc<SarsaPolicy>, f64)> = None;
    if needs_sarsa {
        let start = Instant::now();
        let policy = match &a.sarsa {
            Some(path) => match policy_file(path)?.parameters {
                PolicyParameters::Sarsa { policy } => policy,
                _ => bail!("{} is not a SARSA policy", path.display()),
            },
            None => {
                let cost = cost.as_ref().expect("model loaded");
                let config = SarsaConfig::for_family(spec.family());
                sarsa_train(&spec, cost.as_ref(), config, a.seed)?.policy
            }
        };
        sarsa = Some((Arc::new(policy), start.elapsed().as_secs_f64()));
    }

    let mut methods = Vec::new();
    for (name, kind) in a.methods.iter().map(|m| m.trim().to_string()).zip(kinds) {
        let start = Instant::now();
        let (policy, config): (Box<dyn bookctl::simulator::Policy>, serde_json::Value) = match kind {
            MethodKind::DpExact | MethodKind::DpMl => {
                let exact = matches!(kind, MethodKind::DpExact);
                let file = if exact { &a.dp_exact } else { &a.dp_ml };
                let table = match file {
                    Some(path) => match policy_file(path)?.parameters {
                        PolicyParameters::DpExact { table } if exact => table,
                        PolicyParameters::DpMl { table } if !exact => table,
                        _ => bail!("{} does not hold a {name} value table", path.display()),
                    },
                    None if exact => dp_solve(&spec, &CachedCost::new(ExactCost::new(&spec)), DEFAULT_STATE_CAP)?,
                    None => dp_solve(&spec, cost.as_ref().expect("model loaded").as_ref(), DEFAULT_STATE_CAP)?,
                };
                let config = serde_json::json!({ "kind": name, "precomputed": file.is_some() });
                (Box::new(DpPolicy::new(Arc::new(table))), config)
            }
            MethodKind::Sarsa => {
                let (p, _) = sarsa.as_ref().expect("sarsa loaded");
                (Box::new(p.as_ref().clone()), serde_json::json!({ "kind": "sarsa" }))
            }
            MethodKind::Mcts { base, simulations } => {
                let mut config = MctsConfig::for_family(spec.family(), simulations, base);
                if let Some(c) = a.uct_c {
                    config.exploration = c;
                }
                config.rollout_p = a.rollout_p;
                let base = match base {
                    BaseKind::Random => BasePolicy::Random(config.rollout_p),
                    BaseKind::Sarsa => BasePolicy::Sarsa(sarsa.as_ref().expect("sarsa loaded").0.clone()),
                };
                let cost = cost.clone().expect("model loaded");
                (
                    Box::new(MctsPolicy::new(&spec, cost, base, config)?),
                    serde_json::to_value(config)?,
                )
            }
            MethodKind::RandP(p) => (
                Box::new(RandomPolicy::new(p)),
                serde_json::json!({ "kind": "rand_p", "p": p }),
            ),
        };
        let mut offline = start.elapsed().as_secs_f64();
        if name == "sarsa" || name.starts_with("mcts-sarsa-") {
            offline += sarsa.as_ref().map_or(0.0, |s| s.1);
        }
        methods.push(Method {
            name,
            policy,
            offline_secs: offline,
            config,
        });
    }

    let report = bench::evaluate(&spec, &methods, &reals, a.seed)?;
    let files = bench::export(&report, &a.out)?;
    if let Some(path) = &a.timings {
        bench::export_timings(&report, path)?;
    }
    print!("{}", bench::summary_table(&report));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenInstance { family, seed, out } => {
            let family = Family::try_from(family)?;
            let spec = build_family(family, seed)?;
            save_instance(&out, &spec, Some(seed))?;
            println!("family {family}: Q = {}, hash {}", spec.capacity, spec.hash());
            println!("wrote {}", out.display());
        }
        Command::GenRealizations {
            instance: path,
            count,
            seed,
            out,
        } => {
            let spec = instance(&path)?;
            let reals = Realizations::generate(&spec, &arrival_table(&spec)?, count, seed);
            reals.save(&out)?;
            println!("wrote {count} realizations to {}", out.display());
        }
        Command::GenData {
            instance: path,
            size,
            seed,
            out,
        } => {
            let spec = instance(&path)?;
            let start = Instant::now();
            let data = learning::generate_dataset(&spec, size, seed)?;
            data.save(&out)?;
            println!(
                "{} train / {} test samples in {:.2}s",
                data.train().count(),
                data.test().count(),
                start.elapsed().as_secs_f64()
            );
            println!("wrote {}", out.display());
        }
        Command::TrainRf { data, trees, seed, out } => {
            require(&data)?;
            let dataset = Dataset::load(&data).with_context(|| format!("loading dataset {}", data.display()))?;
            let start = Instant::now();
            let config = ForestConfig {
                trees,
                ..ForestConfig::default()
            };
            let m = learning::train_forest(&dataset, config, seed)?;
            m.save(&out)?;
            println!("trained {trees} trees in {:.2}s", start.elapsed().as_secs_f64());
            println!("wrote {}", out.display());
        }
        Command::EvalRf {
            model: path,
            data,
            seed,
            out,
        } => {
            let (m, model_hash) = model(Some(&path))?;
            require(&data)?;
            let dataset = Dataset::load(&data).with_context(|| format!("loading dataset {}", data.display()))?;
            let train = learning::metrics(&m, dataset.train())?;
            let test = learning::metrics(&m, dataset.test()).ok();
            println!(
                "train: MSE {:.4} MAE {:.4} ({} samples)",
                train.mse, train.mae, train.count
            );
            if let Some(t) = &test {
                println!("test:  MSE {:.4} MAE {:.4} ({} samples)", t.mse, t.mae, t.count);
            }
            if let Some(out) = out {
                let report = RfReport {
                    format: "bookctl-rf-metrics/1",
                    instance_hash: dataset.provenance.instance_hash.clone(),
                    model_hash,
                    seed,
                    train,
                    test,
                };
                io::write_json(&out, &report)?;
                println!("wrote {}", out.display());
            }
        }
        Command::DpSolve {
            instance: path,
            terminal,
            model: model_path,
            cap,
            seed,
            out,
        } => {
            let spec = instance(&path)?;
            let start = Instant::now();
            let (terminal, table, model_hash) = match terminal {
                TerminalArg::Exact => {
                    let cost = CachedCost::new(ExactCost::new(&spec));
                    (Terminal::Exact, dp_solve(&spec, &cost, cap)?, None)
                }
                TerminalArg::Ml => {
                    let (m, hash) = model(model_path.as_deref())?;
                    let cost = surrogate(m, &spec)?;
                    (Terminal::Ml, dp_solve(&spec, cost.as_ref(), cap)?, Some(hash))
                }
            };
            let v1 = table.value(1, &vec![0; spec.n()]).unwrap_or(f64::NAN);
            println!(
                "{} states, V_1(0) = {v1:.4}, solved in {:.2}s",
                table.len(),
                start.elapsed().as_secs_f64()
            );
            let parameters = match terminal {
                Terminal::Exact => PolicyParameters::DpExact { table },
                Terminal::Ml => PolicyParameters::DpMl { table },
            };
            let provenance = PolicyProvenance {
                instance_hash: spec.hash(),
                seed: Some(seed),
                model_hash,
            };
            PolicyArtifact::new(provenance, parameters).save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::TrainSarsa {
            instance: path,
            model: model_path,
            episodes,
            hidden,
            lr,
            epsilon,
            seed,
            out,
            curve,
        } => {
            let spec = instance(&path)?;
            let (m, model_hash) = model(Some(&model_path))?;
            let cost = surrogate(m, &spec)?;
            let mut config = SarsaConfig::for_family(spec.family());
            config.episodes = episodes.unwrap_or(config.episodes);
            config.hidden = hidden.unwrap_or(config.hidden);
            config.lr = lr.unwrap_or(config.lr);
            config.epsilon = epsilon.unwrap_or(config.epsilon);
            let start = Instant::now();
            let outcome = sarsa_train(&spec, cost.as_ref(), config, seed)?;
            println!(
                "best validation profit {:.3} after {} episodes ({:.2}s)",
                outcome.best_validation,
                outcome.best_episode,
                start.elapsed().as_secs_f64()
            );
            let provenance = PolicyProvenance {
                instance_hash: spec.hash(),
                seed: Some(seed),
                model_hash: Some(model_hash),
            };
            PolicyArtifact::new(provenance, PolicyParameters::Sarsa { policy: outcome.policy }).save(&out)?;
            println!("wrote {}", out.display());
            if let Some(curve_path) = curve {
                let mut text = String::from("episodes,validation_profit\n");
                for (e, p) in &outcome.curve {
                    text.push_str(&format!("{e},{p}\n"));
                }
                io::write_text(&curve_path, &text)?;
                println!("wrote {}", curve_path.display());
            }
        }
        Command::Evaluate {
            instance,
            realizations,
            methods,
            model,
            dp_exact,
            dp_ml,
            sarsa,
            simulations,
            base,
            uct_c,
            rollout_p,
            seed,
            out,
            timings,
        } => evaluate(EvalArgs {
            instance,
            realizations,
            methods,
            model,
            dp_exact,
            dp_ml,
            sarsa,
            simulations,
            base,
            uct_c,
            rollout_p,
            seed,
            out,
            timings,
        })?,
        Command::Route {
            instance: path,
            state,
            seed,
            out,
        } => {
            let spec = instance(&path)?;
            if state.len() != spec.n() {
                bail!("state has {} entries, instance has {} locations", state.len(), spec.n());
            }
            let cost = operational_cost(&state, &spec)?;
            let routes: Vec<Vec<usize>> = cost
                .solution
                .routes
                .iter()
                .map(|r| r.iter().map(|&c| c + 1).collect())
                .collect();
            println!(
                "gamma {:.4} (routing {:.4}, fleet {}, outsourced {})",
                cost.gamma, cost.z_star, cost.fleet, cost.outsourced
            );
            for (k, r) in routes.iter().enumerate() {
                println!("vehicle {}: {:?}", k + 1, r);
            }
            if let Some(out) = out {
                let report = RouteReport {
                    format: "bookctl-route/1",
                    instance_hash: spec.hash(),
                    seed,
                    state,
                    gamma: cost.gamma,
                    fleet: cost.fleet,
                    z_star: cost.z_star,
                    outsourced: cost.outsourced,
                    routes,
                };
                io::write_json(&out, &report)?;
                println!("wrote {}", out.display());
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not cap workers: {e}");
                }
            }
            _ => eprintln!("warning: ignoring {WORKERS_ENV}={v}"),
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
