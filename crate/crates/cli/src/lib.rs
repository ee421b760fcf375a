//! Subcommands of the `stmix` tool.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use stmix::baselines::{cv_bandwidth, week_folds, GridSpec, MedicForecaster, MedicKdeForecaster};
use stmix::evaluation::{
    batch_means_ci, event_log_densities, normal_ci, operational_error, pa_mix, CoverageGrid, PeriodDensity,
    PosteriorMeanDensity, ResponseTimeConfig, GRID_DENSITY_FLOOR,
};
use stmix::io::tables::{coverage_csv, draw_params_csv, grid_csv, qq_csv, score_csv, ScoreRow};
use stmix::io::{
    config_hash, read_draws, read_events, read_points, read_region, write_atomic, write_draws, write_events, ArchiveMeta,
    Binning, DrawArchive, RunConfig,
};
use stmix::model::{Event, SpatialPoint, StudyRegion};
use stmix::priors::hyperparams_from_data;
use stmix::sampler::{run_bd_chains, run_chains, PosteriorDraw};
use stmix::synthesis::{simulate, ScenarioSpec};
use stmix::validation::{ks_pvalue, ks_statistic, qq_summary, uniform_residuals};
use stmix::{Error, Result};

/// Environment variable fixing the worker thread count.
pub const THREADS_VAR: &str = "STMIX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "stmix", version, about = "Spatio-temporal Gaussian mixture demand forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Medic,
    MedicKde,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior and write a draw archive.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the draws' scalar parameters as CSV.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Posterior mean density of one period on a grid of cell centres.
    Predict {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        period: usize,
        #[arg(long)]
        grid_out: PathBuf,
        /// Grid spacing, km; defaults to the integration resolution.
        #[arg(long)]
        cell: Option<f64>,
    },
    /// Predictive accuracy of the mixture and, given training data, the baselines.
    Score {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Operational coverage error curves.
    Coverage {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Base locations, `x_km,y_km` CSV.
        #[arg(long)]
        bases: PathBuf,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform residuals of the test events and their Q-Q summary.
    Validate {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        qq_out: PathBuf,
    },
    /// Draw events from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predictive accuracy of one baseline.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Sizes the global thread pool from [`THREADS_VAR`] when it is set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_VAR}={v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { config, events, out, params_out } => fit(&config, &events, &out, params_out.as_deref()),
        Command::Predict { archive, period, grid_out, cell } => predict(&archive, period, &grid_out, cell),
        Command::Score { archive, test, train, out } => score(&archive, &test, train.as_deref(), &out),
        Command::Coverage { archive, test, bases, train, out } => coverage(&archive, &test, &bases, train.as_deref(), &out),
        Command::Validate { archive, test, qq_out } => validate(&archive, &test, &qq_out),
        Command::Simulate { scenario, out } => simulate_cmd(&scenario, &out),
        Command::Baseline { method, config, train, test, out } => baseline(method, &config, &train, &test, &out),
    }
}

fn load_events(path: &Path, binning: &Binning) -> Result<Vec<Event>> {
    let table = read_events(path, binning)?;
    for w in &table.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    if !table.rejected.is_empty() {
        eprintln!("warning: {}: {} rows rejected", path.display(), table.rejected.len());
        for r in &table.rejected {
            eprintln!("  line {}: {}", r.line, r.reason);
        }
    }
    Ok(table.events)
}

fn load_config(path: &Path) -> Result<(RunConfig, StudyRegion<f64>)> {
    let cfg = RunConfig::load(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let region = read_region(&cfg.region_path(dir), cfg.region.grid_resolution)?;
    Ok((cfg, region))
}

fn fit(config: &Path, events: &Path, out: &Path, params_out: Option<&Path>) -> Result<()> {
    let (cfg, region) = load_config(config)?;
    let hash = config_hash(&cfg)?;
    let mut events = load_events(events, &cfg.binning)?;
    let before = events.len();
    events.retain(|e| e.t <= cfg.season.periods);
    if events.len() < before {
        eprintln!("warning: {} events after period {} ignored", before - events.len(), cfg.season.periods);
    }
    let hp = hyperparams_from_data(&events)?;
    let outputs = match cfg.birth_death_config() {
        Some(bd) => run_bd_chains(&events, &region, &hp, &cfg.season, &cfg.mcmc, &bd, cfg.chains)?,
        None => run_chains(&events, &region, &hp, &cfg.season, &cfg.mcmc, cfg.chains)?,
    };
    let meta = ArchiveMeta {
        seed: cfg.mcmc.seed,
        config_hash: hash.clone(),
        config: Some(cfg.clone()),
        season: cfg.season,
        region,
        chain_lengths: outputs.iter().map(|o| o.draws.len()).collect(),
        acceptance: outputs.iter().map(|o| o.acceptance).collect(),
    };
    let archive = DrawArchive { meta, draws: outputs.into_iter().flat_map(|o| o.draws).collect() };
    write_draws(&archive, out)?;
    if let Some(p) = params_out {
        write_atomic(p, &draw_params_csv(&hash, &archive.draws))?;
    }
    let mean_k = archive.draws.iter().map(|d| d.k() as f64).sum::<f64>() / archive.draws.len().max(1) as f64;
    println!(
        "fit: {} events, {} chains, {} draws, mean K {mean_k:.3}, config {hash}",
        events.len(),
        cfg.chains,
        archive.draws.len()
    );
    Ok(())
}

fn archive_config(a: &DrawArchive) -> RunConfig {
    a.meta.config.clone().unwrap_or_else(|| RunConfig {
        season: a.meta.season,
        mcmc: Default::default(),
        chains: 1,
        birth_death: None,
        region: stmix::io::RegionConfig { path: PathBuf::new(), grid_resolution: a.meta.region.grid_resolution() },
        binning: Default::default(),
        baseline: Default::default(),
        evaluation: Default::default(),
    })
}

fn nonempty(draws: &[PosteriorDraw]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::Input("archive holds no draws".into()));
    }
    Ok(())
}

fn predict(archive: &Path, period: usize, grid_out: &Path, cell: Option<f64>) -> Result<()> {
    let a = read_draws(archive)?;
    nonempty(&a.draws)?;
    if period == 0 {
        return Err(Error::Input("periods are 1-based".into()));
    }
    let region = &a.meta.region;
    let cell = cell.unwrap_or(region.grid_resolution());
    let grid = GridSpec::covering(region, cell)?;
    let f = PosteriorMeanDensity::new(&a.draws, region)?;
    let mut cells = Vec::new();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let s = SpatialPoint::new(grid.origin.x + (ix as f64 + 0.5) * cell, grid.origin.y + (iy as f64 + 0.5) * cell);
            if region.contains(&s) {
                cells.push((s.x, s.y, f.density(period, &s)));
            }
        }
    }
    write_atomic(grid_out, &grid_csv(&a.meta.config_hash, period, &cells))?;
    println!("predict: period {period}, {} grid points", cells.len());
    Ok(())
}

fn periods_of(events: &[Event]) -> Vec<usize> {
    events.iter().map(|e| e.t).collect::<BTreeSet<_>>().into_iter().collect()
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "test".into(), |s| s.to_string_lossy().into_owned())
}

struct Baselines {
    medic: MedicForecaster,
    kde: MedicKdeForecaster,
}

/// Baselines forecasting `targets` from the training events plus earlier test events.
fn build_baselines(cfg: &RunConfig, region: &StudyRegion<f64>, train: &[Event], test: &[Event]) -> Result<Baselines> {
    let targets = periods_of(test);
    let rule = cfg.history_rule()?;
    let history: Vec<Event> = train.iter().chain(test).copied().collect();
    let grid = GridSpec::covering(region, cfg.baseline.cell_size)?;
    let medic = MedicForecaster::new(&history, &grid, &rule, region, &targets)?;
    let folds = week_folds(periods_of(train), cfg.season.block);
    let cv = cv_bandwidth(train, &cfg.baseline.bandwidths, &folds, cfg.season.block, region)?;
    let kde = MedicKdeForecaster::new(&history, cv.best, &rule, region, &targets)?;
    Ok(Baselines { medic, kde })
}

fn baseline_row(method: BaselineMethod, b: &Baselines, test: &[Event], dataset: &str, level: f64) -> Result<ScoreRow> {
    let (name, f, floor): (&str, &dyn PeriodDensity, Option<f64>) = match method {
        BaselineMethod::Medic => ("medic", &b.medic, Some(GRID_DENSITY_FLOOR)),
        BaselineMethod::MedicKde => ("medic-kde", &b.kde, None),
    };
    let logs = event_log_densities(test, f, floor);
    let floored = floor.map_or(0, |fl| test.iter().filter(|e| !(f.density(e.t, &e.location) >= fl)).count());
    let (pa, hw) = normal_ci(&logs, level)?;
    Ok(ScoreRow { method: name.into(), dataset: dataset.into(), pa, half_width: hw, events: test.len(), floored })
}

fn mixture_row(a: &DrawArchive, test: &[Event], dataset: &str, level: f64) -> Result<ScoreRow> {
    let mix = pa_mix(test, &a.draws, &a.meta.region)?;
    let hw = match batch_means_ci(&mix.per_draw, level) {
        Ok((_, hw)) => hw,
        Err(e) => {
            eprintln!("warning: no Monte Carlo interval: {e}");
            f64::NAN
        }
    };
    Ok(ScoreRow { method: "mixture".into(), dataset: dataset.into(), pa: mix.pa, half_width: hw, events: test.len(), floored: 0 })
}

fn print_rows(rows: &[ScoreRow]) {
    for r in rows {
        println!("score: {:<10} PA {:.6} ± {:.6} ({} events, floored points: {})", r.method, r.pa, r.half_width, r.events, r.floored);
    }
}

fn score(archive: &Path, test: &Path, train: Option<&Path>, out: &Path) -> Result<()> {
    let a = read_draws(archive)?;
    nonempty(&a.draws)?;
    let cfg = archive_config(&a);
    let test_events = load_events(test, &cfg.binning)?;
    let dataset = dataset_name(test);
    let level = cfg.evaluation.ci_level;
    let mut rows = vec![mixture_row(&a, &test_events, &dataset, level)?];
    if let Some(train) = train {
        let train_events = load_events(train, &cfg.binning)?;
        let b = build_baselines(&cfg, &a.meta.region, &train_events, &test_events)?;
        rows.push(baseline_row(BaselineMethod::MedicKde, &b, &test_events, &dataset, level)?);
        rows.push(baseline_row(BaselineMethod::Medic, &b, &test_events, &dataset, level)?);
    }
    write_atomic(out, &score_csv(&a.meta.config_hash, &rows))?;
    print_rows(&rows);
    Ok(())
}

fn baseline(method: BaselineMethod, config: &Path, train: &Path, test: &Path, out: &Path) -> Result<()> {
    let (cfg, region) = load_config(config)?;
    let train_events = load_events(train, &cfg.binning)?;
    let test_events = load_events(test, &cfg.binning)?;
    let b = build_baselines(&cfg, &region, &train_events, &test_events)?;
    let row = baseline_row(method, &b, &test_events, &dataset_name(test), cfg.evaluation.ci_level)?;
    write_atomic(out, &score_csv(&config_hash(&cfg)?, std::slice::from_ref(&row)))?;
    print_rows(&[row]);
    Ok(())
}

fn coverage(archive: &Path, test: &Path, bases: &Path, train: Option<&Path>, out: &Path) -> Result<()> {
    let a = read_draws(archive)?;
    nonempty(&a.draws)?;
    let cfg = archive_config(&a);
    let test_events = load_events(test, &cfg.binning)?;
    let rt = ResponseTimeConfig {
        bases: read_points(bases)?,
        speed: cfg.evaluation.speed_kmh,
        thresholds: cfg.evaluation.thresholds_s.clone(),
    };
    rt.validate()?;
    let region = &a.meta.region;
    let grid = CoverageGrid::new(region, &rt, cfg.evaluation.coverage_lines)?;
    let periods = periods_of(&test_events);
    let mix = PosteriorMeanDensity::new(&a.draws, region)?;
    let mut curves = vec![("mixture".to_string(), operational_error(&mix, &test_events, &periods, &rt, &grid)?)];
    if let Some(train) = train {
        let b = build_baselines(&cfg, region, &load_events(train, &cfg.binning)?, &test_events)?;
        curves.push(("medic-kde".into(), operational_error(&b.kde, &test_events, &periods, &rt, &grid)?));
        curves.push(("medic".into(), operational_error(&b.medic, &test_events, &periods, &rt, &grid)?));
    }
    write_atomic(out, &coverage_csv(&a.meta.config_hash, &curves))?;
    for (m, e) in &curves {
        let mean = e.mean_abs_error.iter().sum::<f64>() / e.mean_abs_error.len() as f64;
        println!("coverage: {m:<10} mean error {mean:.6} over {} periods ({} excluded)", e.periods_used, e.periods_excluded);
    }
    Ok(())
}

/// Up to `n` draws evenly spaced over the archive.
fn spaced(draws: &[PosteriorDraw], n: usize) -> Vec<PosteriorDraw> {
    if draws.len() <= n {
        return draws.to_vec();
    }
    (0..n).map(|i| draws[i * draws.len() / n].clone()).collect()
}

fn validate(archive: &Path, test: &Path, qq_out: &Path) -> Result<()> {
    let a = read_draws(archive)?;
    nonempty(&a.draws)?;
    let cfg = archive_config(&a);
    let test_events = load_events(test, &cfg.binning)?;
    if test_events.is_empty() {
        return Err(Error::Input("no test events".into()));
    }
    let draws = spaced(&a.draws, cfg.evaluation.validation_draws);
    let res = uniform_residuals(&test_events, &draws, &a.meta.region)?;
    let sets: Vec<Vec<f64>> = res.iter().map(|r| r.pooled()).collect();
    write_atomic(qq_out, &qq_csv(&a.meta.config_hash, &qq_summary(&sets, cfg.evaluation.qq_points)?))?;
    let p: Vec<f64> = sets.iter().map(|u| ks_pvalue(ks_statistic(u), u.len())).collect();
    let pass = p.iter().filter(|&&v| v >= cfg.evaluation.ks_alpha).count();
    let ties: usize = res.iter().map(|r| r.ties).sum();
    println!(
        "validate: {} draws, {} residuals per draw, KS passes at alpha {} for {pass} draws, tied residuals {ties}",
        sets.len(),
        sets[0].len(),
        cfg.evaluation.ks_alpha
    );
    Ok(())
}

fn simulate_cmd(scenario: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(scenario).map_err(|e| Error::Config(format!("{}: {e}", scenario.display())))?;
    let spec: ScenarioSpec = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let s = spec.build()?;
    let events = simulate(&s)?;
    write_events(out, &events)?;
    let mut side = out.as_os_str().to_owned();
    side.push(".scenario.json");
    let json = serde_json::to_vec_pretty(&s).map_err(|e| Error::Input(e.to_string()))?;
    write_atomic(Path::new(&side), &json)?;
    println!("simulate: {} events over {} periods", events.len(), s.truth.season.periods);
    Ok(())
}
