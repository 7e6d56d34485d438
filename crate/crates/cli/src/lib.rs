//! Experiment runner behind the `sensmarket` binary.
//!
//! Each subcommand loads a market, runs one experiment and writes its tables
//! into the output directory. The one-line `key=value` summary is returned to
//! the caller for printing.

mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sensmarket_core::{
    classify_user, load_config, maximize_prices_bundle, maximize_prices_single, profit_surface,
    simulate_profits, sweep_quality_factor, Axis, ConfigError, Fees, MarketConfig, MarketError, Offer,
    OptimizationResult, ProfitEstimate, Seller, SupplyReading,
};
use serde::Serialize;
use thiserror::Error;

pub use output::{Cell, Table};

#[derive(Debug, Parser)]
#[command(name = "sensmarket", version, about = "Pricing and bundling experiments for a sensing-data market")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Profit over a (buying price, fee) grid.
    Surface,
    /// Optimal prices of one provider selling alone.
    SolveSingle,
    /// Optimal prices of the coalition selling a bundle.
    SolveBundle,
    /// What users buy at the optimal prices, over a grid of reservation draws.
    Regions,
    /// Standalone and bundle profits and their Shapley split as one
    /// provider's quality factor varies.
    SweepQuality,
    /// Monte Carlo profit at the optimal prices.
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Surface => "surface",
            Self::SolveSingle => "solve-single",
            Self::SolveBundle => "solve-bundle",
            Self::Regions => "regions",
            Self::SweepQuality => "sweep-quality",
            Self::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Market description; the default two-provider market when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Optimizer tolerance [default: the config's, else 1e-4].
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Points per axis for `surface` and `regions`.
    #[arg(long, global = true, default_value_t = 101)]
    pub grid: usize,

    /// [default: the config's, else 10000]
    #[arg(long, global = true)]
    pub replications: Option<usize>,

    /// [default: the config's, else 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Provider to price alone. For `sweep-quality`, the provider whose
    /// quality factor varies (default 1).
    #[arg(long, global = true)]
    pub provider: Option<usize>,

    /// Quality factors visited by `sweep-quality`.
    #[arg(long, global = true, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,1.0")]
    pub q_values: Vec<f64>,

    /// Simulate with quality computed from each replication's own sensor
    /// count instead of the expected count.
    #[arg(long, global = true)]
    pub realized_quality: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            config: None,
            out: PathBuf::from("."),
            format: Format::Csv,
            tol: None,
            grid: 101,
            replications: None,
            seed: None,
            provider: None,
            q_values: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            realized_quality: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Market(#[from] MarketError),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for I/O, 2 for configuration and usage, 3 for optimization.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Config(ConfigError::Io { .. }) => 1,
            Self::Config(_) | Self::Usage(_) => 2,
            Self::Market(e) => match e {
                MarketError::NotConverged(_)
                | MarketError::NonFiniteObjective { .. }
                | MarketError::InvalidBracket { .. }
                | MarketError::Infeasible { .. } => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Runs one experiment and returns its summary line.
pub fn run(command: Command, options: &Options) -> CliResult<String> {
    let cfg = match &options.config {
        Some(path) => load_config(path)?,
        None => MarketConfig::default(),
    };
    run_with_config(command, options, &cfg)
}

/// [`run`] on an already loaded market.
pub fn run_with_config(command: Command, options: &Options, cfg: &MarketConfig) -> CliResult<String> {
    let settings = Settings::resolve(options, cfg)?;
    let out = &options.out;
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    let mut summary = vec![("command", command.name().to_string())];
    match command {
        Command::Surface => surface(cfg, options, &settings, &mut summary)?,
        Command::SolveSingle => {
            let k = options.provider.unwrap_or(0);
            cfg.provider(k)?;
            solve(cfg, out, &Target::Single(k), settings.tol, &mut summary)?;
        }
        Command::SolveBundle => {
            let coalition = cfg.coalition_or_all();
            solve(cfg, out, &Target::Bundle(coalition), settings.tol, &mut summary)?;
        }
        Command::Regions => regions(cfg, options, &settings, &mut summary)?,
        Command::SweepQuality => sweep(cfg, options, &settings, &mut summary)?,
        Command::Simulate => simulate(cfg, options, &settings, &mut summary)?,
    }
    Ok(summary
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" "))
}

/// Overrides merged with the config's own settings, and checked.
struct Settings {
    tol: f64,
    replications: usize,
    seed: u64,
}

impl Settings {
    fn resolve(options: &Options, cfg: &MarketConfig) -> CliResult<Self> {
        let tol = options.tol.unwrap_or(cfg.optimizer_tolerance);
        if !(tol.is_finite() && tol > 0.0) {
            return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
        }
        if options.grid < 2 {
            return Err(CliError::Usage(format!("--grid must be at least 2, got {}", options.grid)));
        }
        let replications = options.replications.unwrap_or(cfg.mc_replications);
        if replications < 2 {
            return Err(CliError::Usage(format!(
                "--replications must be at least 2, got {replications}"
            )));
        }
        if options.q_values.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(CliError::Usage("--q-values must be finite and non-negative".into()));
        }
        Ok(Self {
            tol,
            replications,
            seed: options.seed.unwrap_or(cfg.mc_seed),
        })
    }
}

/// Who is being priced.
#[derive(Debug, Clone, PartialEq)]
enum Target {
    Single(usize),
    Bundle(Vec<usize>),
}

impl Target {
    /// `--provider` picks a single provider; otherwise a configured coalition
    /// sells a bundle; otherwise provider 0 sells alone.
    fn pick(cfg: &MarketConfig, options: &Options) -> CliResult<Self> {
        let target = match (options.provider, &cfg.coalition) {
            (Some(k), _) => Self::Single(k),
            (None, Some(c)) if c.len() > 1 => Self::Bundle(c.clone()),
            (None, Some(c)) => Self::Single(c[0]),
            (None, None) => Self::Single(0),
        };
        if let Self::Single(k) = target {
            cfg.provider(k)?;
        }
        Ok(target)
    }

    fn seller(&self) -> Seller {
        match self {
            Self::Single(k) => Seller::Single(*k),
            Self::Bundle(c) => Seller::Coalition(c.clone()),
        }
    }

    fn members(&self) -> Vec<usize> {
        self.seller().members()
    }

    fn describe(&self) -> String {
        match self {
            Self::Single(k) => k.to_string(),
            Self::Bundle(c) => c.iter().map(ToString::to_string).collect::<Vec<_>>().join("+"),
        }
    }
}

#[derive(Debug, Serialize)]
struct Solution {
    target: &'static str,
    providers: Vec<usize>,
    buying_prices: Vec<f64>,
    fee: f64,
    qualities: Vec<f64>,
    expected_supply: Vec<f64>,
    expected_demand: f64,
    revenue: f64,
    cost: f64,
    profit: f64,
    evaluations: usize,
    converged: bool,
    sweeps: usize,
}

fn optimize(cfg: &MarketConfig, target: &Target, tol: f64) -> CliResult<Solution> {
    fn finish<P>(
        target: &'static str,
        providers: Vec<usize>,
        buying_prices: Vec<f64>,
        fee: f64,
        r: OptimizationResult<P>,
    ) -> CliResult<Solution> {
        if !r.converged {
            return Err(MarketError::NotConverged(format!(
                "{target} optimum for providers {providers:?} after {} evaluations",
                r.evaluations
            ))
            .into());
        }
        Ok(Solution {
            target,
            providers,
            buying_prices,
            fee,
            qualities: r.outcome.quality,
            expected_supply: r.outcome.expected_supply,
            expected_demand: r.outcome.expected_demand,
            revenue: r.outcome.revenue,
            cost: r.outcome.cost,
            profit: r.profit,
            evaluations: r.evaluations,
            converged: r.converged,
            sweeps: r.sweeps,
        })
    }
    match target {
        Target::Single(k) => {
            let r = maximize_prices_single(cfg, *k, tol)?;
            let p = r.prices;
            finish("single", vec![*k], vec![p.buying_price], p.subscription_fee, r)
        }
        Target::Bundle(c) => {
            let r = maximize_prices_bundle(cfg, c, tol)?;
            let p = r.prices.clone();
            finish("bundle", c.clone(), p.buying_prices, p.bundle_fee, r)
        }
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn solve(
    cfg: &MarketConfig,
    out: &Path,
    target: &Target,
    tol: f64,
    summary: &mut Vec<(&'static str, String)>,
) -> CliResult<()> {
    let sol = optimize(cfg, target, tol)?;
    output::write_json(&out.join("solution.json"), &sol)?;
    summary.extend([
        ("providers", target.describe()),
        ("buy", join(&sol.buying_prices)),
        ("fee", sol.fee.to_string()),
        ("quality", join(&sol.qualities)),
        ("profit", sol.profit.to_string()),
        ("evaluations", sol.evaluations.to_string()),
        ("converged", sol.converged.to_string()),
    ]);
    Ok(())
}

/// Buying prices span the members' widest wage range; fees span zero to the
/// most any user could value the offer at.
fn surface_axes(cfg: &MarketConfig, members: &[usize], points: usize) -> CliResult<(Axis, Axis)> {
    let mut buy_hi: f64 = 0.0;
    let mut fee_hi = 0.0;
    for &k in members {
        buy_hi = buy_hi.max(cfg.provider(k)?.wage_dist.upper());
        fee_hi += (cfg.max_quality(k)? * cfg.users.reservation_dist[k].upper()).max(0.0);
    }
    Ok((Axis::new(0.0, buy_hi, points)?, Axis::new(0.0, fee_hi, points)?))
}

fn surface(
    cfg: &MarketConfig,
    options: &Options,
    _settings: &Settings,
    summary: &mut Vec<(&'static str, String)>,
) -> CliResult<()> {
    let target = Target::pick(cfg, options)?;
    let (buy_axis, fee_axis) = surface_axes(cfg, &target.members(), options.grid)?;
    let s = profit_surface(cfg, &target.seller(), buy_axis, fee_axis)?;
    let mut table = Table::new(&["p_buy", "p_fee", "profit"]);
    for (p, f, v) in s.rows() {
        table.push(vec![Cell::Num(p), Cell::Num(f), Cell::Num(v)]);
    }
    table.write(&options.out, "surface", options.format)?;
    let ((i, j), best) = s.argmax();
    summary.extend([
        ("providers", target.describe()),
        ("points", s.values.len().to_string()),
        ("best_buy", buy_axis.value(i).to_string()),
        ("best_fee", fee_axis.value(j).to_string()),
        ("best_profit", best.to_string()),
    ]);
    Ok(())
}

/// Midpoints of `n` equal cells covering `[lo, hi]`.
fn cell_centres(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

fn regions(
    cfg: &MarketConfig,
    options: &Options,
    settings: &Settings,
    summary: &mut Vec<(&'static str, String)>,
) -> CliResult<()> {
    if cfg.provider_count() != 2 {
        return Err(CliError::Usage(format!(
            "regions needs exactly 2 providers, the config has {}",
            cfg.provider_count()
        )));
    }
    let separate = [
        optimize(cfg, &Target::Single(0), settings.tol)?,
        optimize(cfg, &Target::Single(1), settings.tol)?,
    ];
    let bundle = optimize(cfg, &Target::Bundle(vec![0, 1]), settings.tol)?;
    let q_sep = [separate[0].qualities[0], separate[1].qualities[0]];
    let fees_sep = Fees::Separate(vec![separate[0].fee, separate[1].fee]);
    let fees_bun = Fees::Bundle(bundle.fee);

    let dists = &cfg.users.reservation_dist;
    let t1 = cell_centres(dists[0].lower(), dists[0].upper(), options.grid);
    let t2 = cell_centres(dists[1].lower(), dists[1].upper(), options.grid);
    let mut table = Table::new(&["theta_1", "theta_2", "region", "bundle_region"]);
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for &a in &t1 {
        for &b in &t2 {
            let sep = classify_user(&[a, b], &q_sep, &fees_sep)?.label();
            let bun = classify_user(&[a, b], &bundle.qualities, &fees_bun)?.label();
            *counts.entry(sep.clone()).or_default() += 1;
            *counts.entry(format!("bundle:{bun}")).or_default() += 1;
            table.push(vec![Cell::Num(a), Cell::Num(b), Cell::Text(sep), Cell::Text(bun)]);
        }
    }
    table.write(&options.out, "regions", options.format)?;
    summary.push(("cells", (t1.len() * t2.len()).to_string()));
    for label in ["none", "service-1-only", "service-2-only", "both"] {
        summary.push((label, counts.get(label).copied().unwrap_or(0).to_string()));
    }
    summary.push(("bundle", counts.get("bundle:bundle").copied().unwrap_or(0).to_string()));
    summary.push(("bundle_none", counts.get("bundle:none").copied().unwrap_or(0).to_string()));
    Ok(())
}

fn sweep(
    cfg: &MarketConfig,
    options: &Options,
    settings: &Settings,
    summary: &mut Vec<(&'static str, String)>,
) -> CliResult<()> {
    if cfg.provider_count() != 2 {
        return Err(CliError::Usage(format!(
            "sweep-quality needs exactly 2 providers, the config has {}",
            cfg.provider_count()
        )));
    }
    let provider = options.provider.unwrap_or(1);
    let rows = sweep_quality_factor(cfg, provider, &options.q_values, settings.tol)?;
    let mut table = Table::new(&["q2", "v1", "v2", "v12", "share_1", "share_2", "gain_1", "gain_2"]);
    for r in &rows {
        let mut row = vec![Cell::Num(r.quality_factor)];
        row.extend(r.standalone.iter().map(|&v| Cell::Num(v)));
        row.push(Cell::Num(r.grand));
        row.extend(r.shares.iter().map(|&v| Cell::Num(v)));
        row.extend(r.gains.iter().map(|&v| Cell::Num(v)));
        table.push(row);
    }
    table.write(&options.out, "sweep", options.format)?;
    summary.extend([
        ("provider", provider.to_string()),
        ("rows", rows.len().to_string()),
        (
            "individually_rational",
            rows.iter().all(|r| r.individually_rational).to_string(),
        ),
        (
            "min_gain",
            rows.iter()
                .flat_map(|r| r.gains.iter().copied())
                .fold(f64::INFINITY, f64::min)
                .to_string(),
        ),
    ]);
    Ok(())
}

fn simulate(
    cfg: &MarketConfig,
    options: &Options,
    settings: &Settings,
    summary: &mut Vec<(&'static str, String)>,
) -> CliResult<()> {
    let target = Target::pick(cfg, options)?;
    let sol = optimize(cfg, &target, settings.tol)?;
    let offer = match &target {
        Target::Single(k) => Offer::Single {
            provider: *k,
            prices: sensmarket_core::PriceSchedule::new(sol.buying_prices[0], sol.fee),
        },
        Target::Bundle(c) => Offer::Bundle {
            coalition: c.clone(),
            prices: sensmarket_core::BundlePriceSchedule::new(sol.buying_prices.clone(), sol.fee),
        },
    };
    let reading = if options.realized_quality {
        SupplyReading::Realized
    } else {
        SupplyReading::Average
    };
    let samples = simulate_profits(cfg, &offer, settings.replications, settings.seed, reading)?;
    let est = ProfitEstimate::from_samples(&samples)?;

    let mut table = Table::new(&["replication", "profit"]);
    for (r, v) in samples.iter().enumerate() {
        table.push(vec![Cell::Int(r as u64), Cell::Num(*v)]);
    }
    table.write(&options.out, "simulate", options.format)?;
    output::write_json(
        &options.out.join("estimate.json"),
        &EstimateReport {
            mean: est.mean,
            std_error: est.std_error,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            replications: est.replications,
            seed: settings.seed,
            analytic_profit: sol.profit,
        },
    )?;
    summary.extend([
        ("providers", target.describe()),
        ("replications", est.replications.to_string()),
        ("seed", settings.seed.to_string()),
        ("mean", est.mean.to_string()),
        ("std_error", est.std_error.to_string()),
        ("analytic", sol.profit.to_string()),
    ]);
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    mean: f64,
    std_error: f64,
    ci_low: f64,
    ci_high: f64,
    replications: usize,
    seed: u64,
    analytic_profit: f64,
}
