//! `hedgelab`: reproducible experiment runner. Each artifact-producing
//! subcommand resolves a layered config (profile < file < flags), writes
//! `manifest.toml` first, then emits deterministic CSV and SVG artifacts;
//! re-running with `--config manifest.toml` replays the run byte-for-byte.

mod config;
mod manifest;
mod plot;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use hedgelab::blackscholes::{bs_delta_at, bs_price_at, d_pm, BsHedgePolicy};
use hedgelab::checkpoint::{load_state, save_state};
use hedgelab::qlbs::RewardEstimatorConfig;
use hedgelab::trainer::{
    condition_a, condition_b, mean_condition, mixed_condition_train, qlbs_grid_position,
    rlop_grid_position, train_with, EnvKind, EvalReport, MeanActionPolicy, TrainEvent,
};
use hedgelab::{MarketParams64, TrainLog64, TrainerState64};

use config::Config;

#[derive(Parser)]
#[command(name = "hedgelab", version, about = "Option-hedging lab: train, sweep, compare, quote")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes log CSV, checkpoints and a learning curve
    Train(TrainArgs),
    /// Price a lambda or epsilon grid (trained or BS policy); writes table and bar plot
    Sweep(SweepArgs),
    /// Tabulate policy hedges against the analytic delta on a (spot, time) grid
    HedgeCompare(HedgeArgs),
    /// Print an analytic quote as a CSV row
    BsQuote(QuoteArgs),
    /// Train under two switching market conditions, then refine on their mean
    MixedTrain(MixedArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file or a previous run's manifest.toml
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $HEDGELAB_OUT, then ./hedgelab-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// qlbs or rlop
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    lr_policy: Option<f64>,
    #[arg(long)]
    lr_baseline: Option<f64>,
    #[arg(long)]
    m_subrollouts: Option<usize>,
    /// squared or absolute (RLOP terminal penalty)
    #[arg(long)]
    penalty: Option<String>,
    /// bs, uniform or constant (RLOP initial funding)
    #[arg(long)]
    pi0: Option<String>,
    #[arg(long)]
    pi0_constant: Option<f64>,
    #[arg(long)]
    std_floor: Option<f64>,
    #[arg(long)]
    ema_halflife: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    adjust_intensity: Option<f64>,
    #[arg(long)]
    adjust_scale: Option<f64>,
    /// Comma-separated subset of s0,sigma,strike
    #[arg(long, value_delimiter = ',')]
    adjust_targets: Option<Vec<String>>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    layers_per_block: Option<usize>,
    /// tanh or linear
    #[arg(long)]
    activation: Option<String>,
}

impl CommonArgs {
    fn load_config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::from_file(path)?,
            None => Config::default(),
        };
        macro_rules! set {
            ($($field:ident => $slot:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field { $slot = v.clone(); })*
            };
        }
        set! {
            env => cfg.env,
            seed => cfg.seed,
            lr_policy => cfg.lr_policy,
            lr_baseline => cfg.lr_baseline,
            m_subrollouts => cfg.m_subrollouts,
            penalty => cfg.penalty,
            pi0 => cfg.pi0,
            pi0_constant => cfg.pi0_constant,
            std_floor => cfg.std_floor,
            ema_halflife => cfg.ema_halflife,
            checkpoint_every => cfg.checkpoint_every,
            r => cfg.market.r,
            mu => cfg.market.mu,
            sigma => cfg.market.sigma,
            steps => cfg.market.steps,
            dt => cfg.market.dt,
            s0 => cfg.market.s0,
            strike => cfg.market.strike,
            lambda => cfg.market.lambda,
            epsilon => cfg.market.epsilon,
            adjust_intensity => cfg.adjustment.intensity,
            adjust_scale => cfg.adjustment.scale,
            adjust_targets => cfg.adjustment.targets,
            latent_dim => cfg.net.latent_dim,
            blocks => cfg.net.blocks,
            layers_per_block => cfg.net.layers_per_block,
            activation => cfg.net.activation,
        }
        if let Some(v) = self.episodes {
            cfg.episodes = Some(v);
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("HEDGELAB_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("hedgelab-out"))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// lambda or epsilon
    #[arg(long)]
    param: Option<String>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// trained or bs
    #[arg(long)]
    policy: Option<String>,
    /// Training episodes per sweep value (trained policy only)
    #[arg(long)]
    sweep_episodes: Option<usize>,
    #[arg(long)]
    eval_paths: Option<usize>,
    #[arg(long)]
    eval_seed: Option<u64>,
}

#[derive(Args)]
struct HedgeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// checkpoint or bs
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, value_delimiter = ',')]
    ts: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    spots: Option<Vec<f64>>,
}

#[derive(Args)]
struct QuoteArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Time to expiry in years
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    spot: Option<f64>,
}

#[derive(Args)]
struct MixedArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    switch_intensity: Option<f64>,
    #[arg(long)]
    mixed_episodes: Option<usize>,
    #[arg(long)]
    refine_episodes: Option<usize>,
    #[arg(long)]
    eval_paths: Option<usize>,
    #[arg(long)]
    eval_seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::HedgeCompare(args) => cmd_hedge_compare(args),
        Command::BsQuote(args) => cmd_bs_quote(args),
        Command::MixedTrain(args) => cmd_mixed_train(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn learning_curve_svg(log: &TrainLog64, title: &str) -> String {
    let returns: Vec<(f64, f64)> =
        log.rows.iter().map(|row| (row.episode as f64, row.ret)).collect();
    let ema: Vec<(f64, f64)> = log.rows.iter().map(|row| (row.episode as f64, row.ema)).collect();
    let markers: Vec<f64> = log
        .rows
        .iter()
        .filter(|row| row.adjusted)
        .map(|row| row.episode as f64)
        .collect();
    plot::line_chart(
        title,
        "episode",
        "return",
        &[
            plot::Series { label: "return".to_string(), points: returns },
            plot::Series { label: "ema".to_string(), points: ema },
        ],
        &markers,
    )
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.common.load_config()?;
    cfg.resolve()?;
    let train_config = cfg.to_train_config()?;

    let dir = args.common.out_dir();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output dir {}", dir.display()))?;
    manifest::write_manifest(&dir, "train", &[cfg.seed], &cfg)?;

    let mut snapshots: Vec<(usize, hedgelab::Result<String>)> = Vec::new();
    let outcome = train_with(&train_config, |event| {
        if let TrainEvent::Checkpoint(state) = event {
            snapshots.push((state.episode, save_state(state)));
        }
    })?;
    for (episode, json) in snapshots {
        write_file(&dir, &format!("checkpoint_ep{episode}.json"), &json?)?;
    }
    write_file(&dir, "train_log.csv", &outcome.log.to_csv())?;
    write_file(&dir, "checkpoint_final.json", &save_state(&outcome.state)?)?;
    let title = format!("{} training, seed {}", cfg.env, cfg.seed);
    write_file(&dir, "learning_curve.svg", &learning_curve_svg(&outcome.log, &title))?;

    let final_ema = outcome.log.rows.last().map(|row| row.ema);
    println!(
        "trained {} episodes (env {}, seed {}); final ema {}; artifacts in {}",
        outcome.log.rows.len(),
        cfg.env,
        cfg.seed,
        final_ema.map_or("n/a".to_string(), |v| v.to_string()),
        dir.display()
    );
    Ok(())
}

fn report_price_row(param: &str, value: f64, market: &MarketParams64, report: &EvalReport<f64>) -> String {
    let price = report.mean_price();
    let half = 1.96 * report.std_error;
    format!(
        "{param},{value},{},{},{price},{},{},{}\n",
        market.lambda,
        market.epsilon,
        price - half,
        price + half,
        report.n_paths
    )
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = args.common.load_config()?;
    if let Some(v) = args.param {
        cfg.sweep.param = v;
    }
    if let Some(v) = args.values {
        cfg.sweep.values = Some(v);
    }
    if let Some(v) = args.policy {
        cfg.sweep.policy = v;
    }
    if let Some(v) = args.sweep_episodes {
        cfg.sweep.episodes = v;
    }
    if let Some(v) = args.eval_paths {
        cfg.sweep.eval_paths = v;
    }
    if let Some(v) = args.eval_seed {
        cfg.sweep.eval_seed = v;
    }
    cfg.resolve()?;

    let values = cfg.sweep.values.clone().expect("resolved");
    if values.is_empty() {
        bail!("sweep requires at least one value");
    }
    let param = cfg.sweep.param.clone();
    let policy = cfg.sweep.policy.to_ascii_lowercase();
    if policy != "trained" && policy != "bs" {
        bail!("unknown sweep policy {policy:?}; use trained or bs");
    }

    let dir = args.common.out_dir();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output dir {}", dir.display()))?;
    manifest::write_manifest(&dir, "sweep", &[cfg.seed, cfg.sweep.eval_seed], &cfg)?;

    let est = RewardEstimatorConfig { m_subrollouts: cfg.m_subrollouts };
    let mut csv = String::from("param,value,lambda,epsilon,price,ci_low,ci_high,n_paths\n");
    let mut bars = Vec::new();
    for (i, &value) in values.iter().enumerate() {
        // the sweep prices the QLBS return definition; the off-axis parameter
        // is pinned to the experiment setting (epsilon 0 on lambda sweeps,
        // lambda 0.5 on epsilon sweeps)
        let mut market = cfg.market_params();
        match param.as_str() {
            "lambda" => {
                market.lambda = value;
                market.epsilon = 0.0;
            }
            "epsilon" => {
                market.epsilon = value;
                market.lambda = 0.5;
            }
            other => bail!("unknown sweep parameter {other:?}; use lambda or epsilon"),
        }
        let report = if policy == "bs" {
            hedgelab::trainer::evaluate_qlbs(
                &BsHedgePolicy,
                &market,
                &est,
                cfg.sweep.eval_paths,
                cfg.sweep.eval_seed,
            )?
        } else {
            let mut run_config = cfg.to_train_config()?;
            run_config.env = EnvKind::Qlbs;
            run_config.market = market.clone();
            run_config.episodes = cfg.sweep.episodes;
            run_config.validate()?;
            let outcome = hedgelab::trainer::train(&run_config)?;
            write_file(&dir, &format!("sweep_run_{i}_log.csv"), &outcome.log.to_csv())?;
            hedgelab::trainer::evaluate_qlbs(
                &MeanActionPolicy(outcome.policy()),
                &market,
                &est,
                cfg.sweep.eval_paths,
                cfg.sweep.eval_seed,
            )?
        };
        csv.push_str(&report_price_row(&param, value, &market, &report));
        let price = report.mean_price();
        let half = 1.96 * report.std_error;
        bars.push(plot::Bar {
            label: format!("{value}"),
            value: price,
            lo: price - half,
            hi: price + half,
        });
    }
    write_file(&dir, "sweep.csv", &csv)?;
    let title = format!("price vs {param} ({policy} policy)");
    write_file(&dir, "sweep.svg", &plot::bar_chart(&title, &param, "price", &bars))?;
    print!("{csv}");
    Ok(())
}

fn cmd_hedge_compare(args: HedgeArgs) -> Result<()> {
    let mut cfg = args.common.load_config()?;
    if let Some(v) = &args.checkpoint {
        cfg.hedge.checkpoint = Some(v.display().to_string());
        cfg.hedge.policy = "checkpoint".to_string();
    }
    if let Some(v) = args.policy {
        cfg.hedge.policy = v;
    }
    if let Some(v) = args.ts {
        cfg.hedge.ts = v;
    }
    if let Some(v) = args.spots {
        cfg.hedge.spots = v;
    }
    cfg.resolve()?;
    if cfg.hedge.ts.is_empty() || cfg.hedge.spots.is_empty() {
        bail!("hedge grid requires at least one time and one spot");
    }

    // load the policy before touching the output directory so a missing
    // checkpoint leaves nothing behind
    let policy_mode = cfg.hedge.policy.to_ascii_lowercase();
    let state: Option<TrainerState64> = match policy_mode.as_str() {
        "bs" => None,
        "checkpoint" => {
            let path = cfg
                .hedge
                .checkpoint
                .clone()
                .ok_or_else(|| anyhow::anyhow!("hedge-compare needs --checkpoint or --policy bs"))?;
            let json = std::fs::read_to_string(&path)
                .with_context(|| format!("cannot read checkpoint {path}"))?;
            Some(load_state::<f64>(&json)?)
        }
        other => bail!("unknown hedge policy {other:?}; use checkpoint or bs"),
    };
    let market = state.as_ref().map_or_else(|| cfg.market_params(), |s| s.market.clone());
    for &t in &cfg.hedge.ts {
        if t >= market.steps {
            bail!("grid time {t} is at or beyond maturity step {}", market.steps);
        }
    }

    let dir = args.common.out_dir();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output dir {}", dir.display()))?;
    manifest::write_manifest(&dir, "hedge-compare", &[], &cfg)?;

    let mut csv = String::from("S,t,position_learned,position_bs\n");
    let mut series = Vec::new();
    for &t in &cfg.hedge.ts {
        let tau = (market.steps - t) as f64 * market.dt;
        let mut learned_points = Vec::new();
        let mut bs_points = Vec::new();
        for &spot in &cfg.hedge.spots {
            let bs = bs_delta_at(tau, spot, market.strike, market.r, market.sigma)?;
            let learned = match &state {
                None => bs,
                Some(s) => match s.config.env {
                    EnvKind::Qlbs => qlbs_grid_position(&s.policy, &market, t, spot)?,
                    EnvKind::Rlop => rlop_grid_position(&s.policy, &market, t, spot)?,
                },
            };
            csv.push_str(&format!("{spot},{t},{learned},{bs}\n"));
            learned_points.push((spot, learned));
            bs_points.push((spot, bs));
        }
        series.push(plot::Series { label: format!("t={t} learned"), points: learned_points });
        series.push(plot::Series { label: format!("t={t} bs"), points: bs_points });
    }
    write_file(&dir, "hedge_compare.csv", &csv)?;
    let title = format!("hedge position vs spot ({policy_mode} policy)");
    write_file(&dir, "hedge_compare.svg", &plot::line_chart(&title, "spot", "position", &series, &[]))?;
    print!("{csv}");
    Ok(())
}

fn cmd_bs_quote(args: QuoteArgs) -> Result<()> {
    let mut cfg = args.common.load_config()?;
    if let Some(v) = args.tau {
        cfg.quote.tau = v;
    }
    if let Some(v) = args.spot {
        cfg.quote.spot = v;
    }
    cfg.resolve()?;

    let (tau, spot) = (cfg.quote.tau, cfg.quote.spot);
    let market = cfg.market_params();
    if !tau.is_finite() || tau < 0.0 {
        bail!("tau must be finite and >= 0, got {tau}");
    }
    if !market.sigma.is_finite() || market.sigma < 0.0 {
        bail!("sigma must be finite and >= 0, got {}", market.sigma);
    }
    if !market.strike.is_finite() || market.strike <= 0.0 {
        bail!("strike must be finite and > 0, got {}", market.strike);
    }
    if !market.r.is_finite() {
        bail!("rate must be finite, got {}", market.r);
    }
    let price = bs_price_at(tau, spot, market.strike, market.r, market.sigma)?;
    let delta = bs_delta_at(tau, spot, market.strike, market.r, market.sigma)?;
    let (d_plus, d_minus) = if tau > 0.0 && market.sigma > 0.0 {
        d_pm(tau, spot, market.strike, market.r, market.sigma)?
    } else if spot > market.strike * (-market.r * tau).exp() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, f64::NEG_INFINITY)
    };
    println!("price,delta,d_plus,d_minus");
    println!("{price},{delta},{d_plus},{d_minus}");
    Ok(())
}

fn cmd_mixed_train(args: MixedArgs) -> Result<()> {
    let mut cfg = args.common.load_config()?;
    if let Some(v) = args.switch_intensity {
        cfg.mixed.switch_intensity = v;
    }
    if let Some(v) = args.mixed_episodes {
        cfg.mixed.mixed_episodes = v;
    }
    if let Some(v) = args.refine_episodes {
        cfg.mixed.refine_episodes = v;
    }
    if let Some(v) = args.eval_paths {
        cfg.mixed.eval_paths = v;
    }
    if let Some(v) = args.eval_seed {
        cfg.mixed.eval_seed = v;
    }
    cfg.resolve()?;

    let base = cfg.to_train_config()?;
    let mut config_a = base.clone();
    config_a.market = condition_a();
    config_a.episodes = cfg.mixed.mixed_episodes;
    let mut config_b = config_a.clone();
    config_b.market = condition_b();
    let mut refine = config_a.clone();
    refine.market = mean_condition(&config_a.market, &config_b.market)?;
    refine.episodes = cfg.mixed.refine_episodes;

    let dir = args.common.out_dir();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output dir {}", dir.display()))?;
    manifest::write_manifest(&dir, "mixed-train", &[cfg.seed, cfg.mixed.eval_seed], &cfg)?;

    let outcome = mixed_condition_train(
        &config_a,
        &config_b,
        cfg.mixed.switch_intensity,
        &refine,
        cfg.mixed.eval_paths,
        cfg.mixed.eval_seed,
    )?;

    write_file(&dir, "mixed_log.csv", &outcome.mixed_log.to_csv())?;
    write_file(&dir, "refine_log.csv", &outcome.refine_log.to_csv())?;
    let mut eval_csv = String::from("phase,n_paths,mean_return,std_error,price\n");
    for (phase, report) in [("before", &outcome.eval_before), ("after", &outcome.eval_after)] {
        eval_csv.push_str(&format!(
            "{phase},{},{},{},{}\n",
            report.n_paths,
            report.mean_return,
            report.std_error,
            report.mean_price()
        ));
    }
    write_file(&dir, "eval.csv", &eval_csv)?;
    write_file(&dir, "checkpoint_final.json", &save_state(&outcome.state)?)?;

    // markers: condition switches (params hash changes) and the refine start
    let mut ema = Vec::new();
    let mut markers = Vec::new();
    let mut last_hash = None;
    for row in &outcome.mixed_log.rows {
        ema.push((row.episode as f64, row.ema));
        if let Some(prev) = last_hash {
            if prev != row.params_hash {
                markers.push(row.episode as f64);
            }
        }
        last_hash = Some(row.params_hash);
    }
    if let Some(first) = outcome.refine_log.rows.first() {
        markers.push(first.episode as f64);
    }
    for row in &outcome.refine_log.rows {
        ema.push((row.episode as f64, row.ema));
    }
    let series = [plot::Series { label: "ema".to_string(), points: ema }];
    let title = format!("mixed-condition training, seed {}", cfg.seed);
    write_file(&dir, "learning_curve.svg", &plot::line_chart(&title, "episode", "return", &series, &markers))?;

    println!(
        "mean-condition return before refine {} vs after {}; artifacts in {}",
        outcome.eval_before.mean_return,
        outcome.eval_after.mean_return,
        dir.display()
    );
    Ok(())
}
