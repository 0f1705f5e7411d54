//! Command-line entry point: config parsing, data ingestion, subcommand
//! dispatch and emission of plot-ready CSV files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use epi_core::config::{config_hash, load_config, load_series, series_to_csv, RunConfig};
use epi_core::error::EpiError;
use epi_core::lna::{lna_forward_filter, run_lna_mh};
use epi_core::model::{
    forward_simulate, sigmoid, CompartmentState, ReportingMode, StaticParams,
};
use epi_core::obs::{sample_obs, Observation};
use epi_core::pmmh::{pilot_proposal, run_pmmh, MhChain, PmmhSettings};
use epi_core::rng::{mix, stream, StreamRole};
use epi_core::smc::{
    forecast_one_step, run_filter, substeps_per_window, ExecMode, FilterSettings,
};

#[derive(Parser)]
#[command(name = "epi", about = "Sequential inference for stochastic epidemic models")]
struct Cli {
    /// Worker-pool size for particle-parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data from the config's `[simulate]` block.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the particle filter over an observation series.
    Filter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the blind proposal instead of the conditioned hazard.
        #[arg(long)]
        no_bridge: bool,
    },
    /// Rolling one-step-ahead forecasts of the last observation windows.
    Forecast {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        #[arg(long, default_value_t = 5)]
        windows: usize,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Particle marginal Metropolis-Hastings benchmark sampler.
    Pmmh {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        /// Run the pilot chain and reuse its covariance for the main run.
        #[arg(long)]
        pilot: bool,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Marginal MH with the LNA likelihood (benchmark).
    LnaFit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serial-vs-parallel timing sweep on the configured filter.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
        particles_list: Vec<usize>,
        /// Worker counts to sweep (parallel feature only).
        #[arg(long, value_delimiter = ',', default_value = "1")]
        workers_list: Vec<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                EpiError::Config { .. } | EpiError::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

struct Ctx {
    config: RunConfig,
    hash: u64,
}

fn load_ctx(path: &Path) -> Result<Ctx, EpiError> {
    let text = std::fs::read_to_string(path)?;
    let config = load_config(path)?;
    Ok(Ctx { config, hash: config_hash(&text) })
}

impl Ctx {
    fn header(&self, seed: u64) -> String {
        format!("# config-hash={:016x} seed={}\n", self.hash, seed)
    }

    fn out_dir(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone()
            .or_else(|| self.config.io.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn data(&self, flag: &Option<PathBuf>) -> Result<Vec<Observation>, EpiError> {
        let path = flag.clone().or_else(|| self.config.io.data.clone()).ok_or_else(|| {
            EpiError::Config {
                key: "io.data".into(),
                message: "no data path given (flag --data or config io.data)".into(),
            }
        })?;
        load_series(&path)
    }
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), EpiError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn install_pool(workers: Option<usize>) -> Result<(), EpiError> {
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| EpiError::Config {
                key: "--workers".into(),
                message: e.to_string(),
            })?;
    }
    #[cfg(not(feature = "parallel"))]
    if workers.is_some_and(|n| n > 1) {
        return Err(EpiError::Config {
            key: "--workers".into(),
            message: "built without the `parallel` feature".into(),
        });
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), EpiError> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let ctx = load_ctx(&config)?;
            cmd_simulate(&ctx, seed, &out)
        }
        Command::Filter { config, particles, data, seed, out, no_bridge } => {
            install_pool(cli.workers)?;
            let ctx = load_ctx(&config)?;
            cmd_filter(&ctx, particles, &data, seed, &out, no_bridge)
        }
        Command::Forecast { config, particles, horizon, windows, data, seed, out } => {
            install_pool(cli.workers)?;
            let ctx = load_ctx(&config)?;
            cmd_forecast(&ctx, particles, horizon, windows, &data, seed, &out)
        }
        Command::Pmmh { config, iters, pilot, data, seed, out } => {
            install_pool(cli.workers)?;
            let ctx = load_ctx(&config)?;
            cmd_pmmh(&ctx, iters, pilot, &data, seed, &out)
        }
        Command::LnaFit { config, iters, data, seed, out } => {
            let ctx = load_ctx(&config)?;
            cmd_lna_fit(&ctx, iters, &data, seed, &out)
        }
        Command::Bench { config, particles_list, workers_list, data, seed, out } => {
            let ctx = load_ctx(&config)?;
            cmd_bench(&ctx, &particles_list, &workers_list, &data, seed, &out)
        }
    }
}

fn cmd_simulate(ctx: &Ctx, seed: Option<u64>, out: &Option<PathBuf>) -> Result<(), EpiError> {
    let cfg = &ctx.config;
    let sim = cfg.simulate.as_ref().ok_or_else(|| EpiError::Config {
        key: "simulate".into(),
        message: "config has no [simulate] block".into(),
    })?;
    let seed = seed.unwrap_or(cfg.algorithm.seed);
    let spec = cfg.model_spec();
    let obs_spec = cfg.obs_spec();
    let (params, init_rates) = sim.true_params(&spec);
    let m = substeps_per_window(cfg.observation.spacing, cfg.algorithm.dtau)?;
    let n_steps = m * sim.n_obs;

    let mut rng = stream(seed, 0, 0, StreamRole::Scratch);
    let init_counts = match cfg.inference_model()?.init {
        epi_core::smc::InitStateDist::Fixed(c) => c,
        epi_core::smc::InitStateDist::Independent(_) => {
            return Err(EpiError::Config {
                key: "model.init".into(),
                message: "simulate requires a fixed initial state".into(),
            })
        }
    };
    let init = CompartmentState::new(init_counts, 0.0);
    let traj = forward_simulate(
        &spec,
        &params,
        init,
        init_rates,
        cfg.algorithm.dtau,
        n_steps,
        &mut rng,
    )?;

    // Trajectory CSV: time, compartments, cumulative reaction counts, rates.
    let dynamic_rho = spec.reporting_mode == ReportingMode::BrownianLogit;
    let mut csv = ctx.header(seed);
    csv.push_str("time");
    for name in spec.compartment_names() {
        csv.push_str(&format!(",{name}"));
    }
    for name in spec.reaction_names() {
        csv.push_str(&format!(",cum_{name}"));
    }
    csv.push_str(",log_beta");
    if dynamic_rho {
        csv.push_str(",logit_rho");
    }
    csv.push('\n');
    let mut cum = [0u64; epi_core::model::MAX_DIM];
    for p in &traj {
        for (c, inc) in cum.iter_mut().zip(p.increment.events) {
            *c += inc;
        }
        csv.push_str(&format!("{:.6}", p.state.time));
        for c in 0..spec.n_compartments() {
            csv.push_str(&format!(",{}", p.state.counts[c]));
        }
        for c in cum.iter().take(spec.n_reactions()) {
            csv.push_str(&format!(",{c}"));
        }
        csv.push_str(&format!(",{:.9}", p.rates.log_beta));
        if dynamic_rho {
            csv.push_str(&format!(",{:.9}", p.rates.logit_rho.unwrap()));
        }
        csv.push('\n');
    }

    // Observations at window ends.
    let obs_reaction = spec.obs_reaction();
    let mut data = Vec::with_capacity(sim.n_obs);
    let mut obs_rng = stream(seed, 0, 1, StreamRole::Scratch);
    for w in 0..sim.n_obs {
        let p_dn: u64 = traj[w * m + 1..=(w + 1) * m]
            .iter()
            .map(|p| p.increment.events[obs_reaction])
            .sum();
        let rho = if dynamic_rho {
            sigmoid(traj[(w + 1) * m].rates.logit_rho.unwrap())
        } else {
            params.rho.expect("validated: rho required")
        };
        let count = sample_obs(p_dn, rho, params.nu, obs_spec.family, &mut obs_rng)?;
        data.push(Observation { time: (w + 1) as f64 * cfg.observation.spacing, count });
    }

    let dir = ctx.out_dir(out);
    write_out(&dir, "trajectory.csv", &csv)?;
    write_out(&dir, "observations.csv", &format!("{}{}", ctx.header(seed), series_to_csv(&data)))
}

fn filter_settings(
    ctx: &Ctx,
    particles: Option<usize>,
    seed: Option<u64>,
    no_bridge: bool,
) -> FilterSettings {
    let mut settings = ctx.config.filter_settings();
    if let Some(n) = particles {
        settings.n_particles = n;
    }
    if let Some(s) = seed {
        settings.seed = s;
    }
    if no_bridge {
        settings.bridge = false;
    }
    settings
}

fn cmd_filter(
    ctx: &Ctx,
    particles: Option<usize>,
    data: &Option<PathBuf>,
    seed: Option<u64>,
    out: &Option<PathBuf>,
    no_bridge: bool,
) -> Result<(), EpiError> {
    let model = ctx.config.inference_model()?;
    let settings = filter_settings(ctx, particles, seed, no_bridge);
    let series = ctx.data(data)?;
    let run = run_filter(&model, &settings, &series)?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }

    let mut csv = ctx.header(settings.seed);
    csv.push_str("observation_time,quantity,mean,q025,q975,ess\n");
    for rec in &run.records {
        for (name, s) in &rec.summaries {
            csv.push_str(&format!(
                "{},{},{:.9},{:.9},{:.9},{:.4}\n",
                rec.time, name, s.mean, s.q025, s.q975, rec.ess
            ));
        }
    }
    csv.push_str(&format!("# log-marginal={:.9}\n", run.log_marginal));
    write_out(&ctx.out_dir(out), "filter.csv", &csv)
}

fn cmd_forecast(
    ctx: &Ctx,
    particles: Option<usize>,
    horizon: usize,
    windows: usize,
    data: &Option<PathBuf>,
    seed: Option<u64>,
    out: &Option<PathBuf>,
) -> Result<(), EpiError> {
    if horizon != 1 {
        return Err(EpiError::Config {
            key: "--horizon".into(),
            message: "only one-step-ahead forecasts are supported".into(),
        });
    }
    let model = ctx.config.inference_model()?;
    let settings = filter_settings(ctx, particles, seed, false);
    let series = ctx.data(data)?;
    if series.len() <= windows {
        return Err(EpiError::Config {
            key: "--windows".into(),
            message: format!("need more than {windows} observations, have {}", series.len()),
        });
    }
    let m = substeps_per_window(ctx.config.observation.spacing, settings.dtau)?;

    let mut csv = ctx.header(settings.seed);
    csv.push_str("target_time,actual,min,q025,q1,median,q3,q975,max\n");
    for target in series.len() - windows..series.len() {
        let fit = run_filter(&model, &settings, &series[..target])?;
        let (_, summary) = forecast_one_step(
            &fit.particles,
            &model,
            &settings,
            m,
            (target + 1) as u64,
        )?;
        let obs = &series[target];
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            obs.time,
            obs.count,
            summary.min,
            summary.q025,
            summary.q1,
            summary.median,
            summary.q3,
            summary.q975,
            summary.max
        ));
    }
    write_out(&ctx.out_dir(out), "forecast.csv", &csv)
}

fn chain_csv(ctx: &Ctx, seed: u64, chain: &MhChain, thin: usize) -> String {
    let mut csv = ctx.header(seed);
    csv.push_str("iter");
    for name in &chain.names {
        csv.push_str(&format!(",{name}"));
    }
    csv.push_str(",log_lik\n");
    for (i, (draw, ll)) in chain.draws.iter().zip(&chain.log_lik).enumerate() {
        csv.push_str(&format!("{}", (i + 1) * thin));
        for v in draw {
            csv.push_str(&format!(",{v:.9}"));
        }
        csv.push_str(&format!(",{ll:.6}\n"));
    }
    csv.push_str(&format!("# accept-rate={:.4}\n", chain.accept_rate));
    csv
}

fn cmd_pmmh(
    ctx: &Ctx,
    iters: Option<usize>,
    pilot: bool,
    data: &Option<PathBuf>,
    seed: Option<u64>,
    out: &Option<PathBuf>,
) -> Result<(), EpiError> {
    let cfg = &ctx.config;
    let block = cfg.pmmh.as_ref().ok_or_else(|| EpiError::Config {
        key: "pmmh".into(),
        message: "config has no [pmmh] block".into(),
    })?;
    let model = cfg.inference_model()?;
    let series = ctx.data(data)?;
    let (params, mut mh) = cfg.mh_setup(block)?;
    if let Some(n) = iters {
        mh.n_iters = n;
    }
    if let Some(s) = seed {
        mh.seed = s;
    }
    let mut filter = cfg.filter_settings();
    if let Some(n) = block.particles {
        filter.n_particles = n;
    }

    if pilot {
        let pilot_iters = if block.pilot_iters > 0 { block.pilot_iters } else { mh.n_iters / 10 };
        let pilot_mh = epi_core::pmmh::MhSettings {
            n_iters: pilot_iters,
            seed: mix(&[mh.seed, 0x70696c6f]),
            ..mh.clone()
        };
        let settings = PmmhSettings { mh: pilot_mh, filter };
        let pilot_chain = run_pmmh(&model, &params, &settings, &series)?;
        eprintln!("pilot accept-rate {:.3}", pilot_chain.accept_rate);
        mh.proposal = pilot_proposal(&pilot_chain, &params)?;
        // Restart from the pilot's final state.
        if let Some(last) = pilot_chain.draws.last() {
            mh.init = last.clone();
        }
    }

    let settings = PmmhSettings { mh: mh.clone(), filter };
    let chain = run_pmmh(&model, &params, &settings, &series)?;
    write_out(
        &ctx.out_dir(out),
        "chain.csv",
        &chain_csv(ctx, mh.seed, &chain, mh.thin),
    )
}

fn cmd_lna_fit(
    ctx: &Ctx,
    iters: Option<usize>,
    data: &Option<PathBuf>,
    seed: Option<u64>,
    out: &Option<PathBuf>,
) -> Result<(), EpiError> {
    let cfg = &ctx.config;
    let block = cfg.lna_mh.as_ref().ok_or_else(|| EpiError::Config {
        key: "lna-mh".into(),
        message: "config has no [lna-mh] block".into(),
    })?;
    if cfg.model_spec().contact_mode != epi_core::model::ContactMode::Constant
        || cfg.obs_spec().dynamic_rho
    {
        return Err(EpiError::Config {
            key: "model".into(),
            message: "the LNA benchmark requires a constant contact rate and static reporting"
                .into(),
        });
    }
    let series = ctx.data(data)?;
    let (params, mut mh) = cfg.mh_setup(block)?;
    if let Some(n) = iters {
        mh.n_iters = n;
    }
    if let Some(s) = seed {
        mh.seed = s;
    }
    let spec = cfg.model_spec();
    let x0 = match cfg.inference_model()?.init {
        epi_core::smc::InitStateDist::Fixed(c) => c,
        _ => {
            return Err(EpiError::Config {
                key: "model.init".into(),
                message: "the LNA benchmark requires a fixed initial state".into(),
            })
        }
    };
    // Base values for parameters not sampled by the chain: prior centers.
    let base = StaticParams {
        beta: cfg.priors.beta.as_ref().map(RunConfig::prior_center),
        kappa: cfg.priors.kappa.as_ref().map(RunConfig::prior_center),
        gamma: RunConfig::prior_center(&cfg.priors.gamma),
        lambda_beta: None,
        lambda_rho: None,
        rho: cfg.priors.rho.as_ref().map(RunConfig::prior_center),
        nu: cfg.priors.nu.as_ref().map(RunConfig::prior_center),
    };
    // Smoke-check the likelihood at the initial point before running a chain.
    let init_theta = epi_core::lna::apply_params(
        &base,
        &params.iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
        &mh.init,
    )?;
    lna_forward_filter(
        &init_theta,
        cfg.observation.family,
        &x0,
        &spec,
        &series,
        cfg.lna.ode_step,
    )?;

    let chain = run_lna_mh(
        &base,
        cfg.observation.family,
        &x0,
        &spec,
        &params,
        &mh,
        &series,
        cfg.lna.ode_step,
    )?;
    write_out(
        &ctx.out_dir(out),
        "lna_chain.csv",
        &chain_csv(ctx, mh.seed, &chain, mh.thin),
    )
}

fn cmd_bench(
    ctx: &Ctx,
    particles_list: &[usize],
    workers_list: &[usize],
    data: &Option<PathBuf>,
    seed: Option<u64>,
    out: &Option<PathBuf>,
) -> Result<(), EpiError> {
    let model = ctx.config.inference_model()?;
    let base = filter_settings(ctx, None, seed, false);
    let series = ctx.data(data)?;

    let mut csv = ctx.header(base.seed);
    csv.push_str("particles,mode,workers,seconds,log_marginal\n");
    for &n in particles_list {
        let seq = FilterSettings { n_particles: n, exec: ExecMode::Sequential, ..base };
        let t0 = Instant::now();
        let seq_run = run_filter(&model, &seq, &series)?;
        let seq_secs = t0.elapsed().as_secs_f64();
        csv.push_str(&format!(
            "{n},sequential,1,{seq_secs:.6},{:.9}\n",
            seq_run.log_marginal
        ));

        #[cfg(feature = "parallel")]
        for &w in workers_list {
            let par = FilterSettings { n_particles: n, exec: ExecMode::Parallel, ..base };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| {
                EpiError::Config { key: "--workers-list".into(), message: e.to_string() }
            })?;
            let t0 = Instant::now();
            let par_run = pool.install(|| run_filter(&model, &par, &series))?;
            let secs = t0.elapsed().as_secs_f64();
            if par_run.log_marginal.to_bits() != seq_run.log_marginal.to_bits() {
                return Err(EpiError::Numerical(format!(
                    "worker-count-dependent output at N = {n}, workers = {w}"
                )));
            }
            csv.push_str(&format!(
                "{n},parallel,{w},{secs:.6},{:.9}\n",
                par_run.log_marginal
            ));
        }
        #[cfg(not(feature = "parallel"))]
        let _ = workers_list;
    }
    write_out(&ctx.out_dir(out), "bench.csv", &csv)
}
