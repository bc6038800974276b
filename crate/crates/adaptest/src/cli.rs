//! Command-line front end.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use adaptest_core::bank::{synth_bank, validate_bank, ItemBank, SynthSpec, TestFamily, Violation};
use adaptest_core::calibration::{feature_correlations, CalibrationPriors};
use adaptest_core::engine::{replay, ReplayMode, Score, SessionConfig, SessionEvent};
use adaptest_core::eval::{
    center_on_original, check_paired, check_retest, icc_model, sample_size_simulation, validity_model,
    IccPosterior, IccPriors, MeasurementError, PlanningModel, ValidityPosterior, ValidityPriors,
};
use adaptest_core::mcmc::McmcConfig;
use adaptest_core::sim::{
    draw_persons, recovery_analysis, simulate_session, sweep_lengths, Baseline, RecoveryRule,
    SimulatedPerson,
};
use adaptest_core::stats::IntervalSummary;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::formats::{self, emit, to_json, BankFragment, KeyPolicy};
use crate::parallel;
use crate::service::{self, Service, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "adaptest", version, about = "Content-balanced adaptive testing: banks, simulation, calibration, evaluation and the session service")]
pub struct Cli {
    /// Seed for every random choice; required by stochastic subcommands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate or generate item banks.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Simulation studies on a bank.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Fit 2PL item parameters to a response matrix.
    Calibrate(CalibrateArgs),
    /// Reliability, validity and sample-size planning models.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Ability correlations between the values of one feature dimension.
    Correlations(CorrelationsArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Rebuild a session from its transcript and report the score.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand)]
pub enum BankCommand {
    /// Check a bank file and list every violation.
    Validate {
        path: PathBuf,
        /// Drop unknown keys instead of rejecting them.
        #[arg(long)]
        lenient: bool,
    },
    /// Generate a synthetic bank.
    Synth {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        bank_id: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Vlat,
    Calvi,
}

#[derive(Debug, Args)]
pub struct BankArg {
    /// Bank file.
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub lenient: bool,
}

impl BankArg {
    fn load(&self) -> Result<ItemBank> {
        formats::load_bank(&self.bank, policy(self.lenient))
    }
}

fn policy(lenient: bool) -> KeyPolicy {
    if lenient {
        KeyPolicy::Lenient
    } else {
        KeyPolicy::Strict
    }
}

#[derive(Debug, Args)]
pub struct PersonArgs {
    /// Number of simulated test-takers.
    #[arg(long, default_value_t = 500)]
    pub persons: usize,
    /// Mean of true abilities; the bank prior mean when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_mean: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub theta_sd: f64,
    /// Fixes the positions of unscored slots.
    #[arg(long, default_value_t = 0)]
    pub deployment_seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Relative SE difference against a baseline form, per test length.
    Sweep {
        #[command(flatten)]
        bank: BankArg,
        /// Scored lengths, e.g. `19:53` or `11,13,15:20`.
        #[arg(long, value_parser = parse_lengths)]
        lengths: Lengths,
        #[command(flatten)]
        persons: PersonArgs,
        #[arg(long, value_enum, default_value_t = BaselineArg::FullBank)]
        baseline: BaselineArg,
        /// Also write the per-length JSON summary here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Steps needed to recover from answers that move the estimate away.
    Recovery {
        #[command(flatten)]
        bank: BankArg,
        #[command(flatten)]
        persons: PersonArgs,
        #[arg(long, value_enum, default_value_t = RuleArg::Printed)]
        rule: RuleArg,
    },
    /// One simulated session; prints its transcript as JSON lines.
    Session {
        #[command(flatten)]
        bank: BankArg,
        /// True ability of the simulated test-taker.
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, default_value_t = 0)]
        deployment_seed: u64,
        /// Scored length; the family default when absent.
        #[arg(long)]
        length: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    FullBank,
    StaticReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Printed,
    PreviousStep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lengths(pub Vec<usize>);

/// Parses `a:b` (inclusive), single values, and comma-separated mixes.
pub fn parse_lengths(s: &str) -> std::result::Result<Lengths, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad length {t:?}"));
        match part.split_once(':') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err("lengths must be positive".into());
    }
    Ok(Lengths(out))
}

#[derive(Debug, Args)]
pub struct McmcArgs {
    #[arg(long, default_value_t = McmcConfig::default().n_chains)]
    pub chains: usize,
    #[arg(long, default_value_t = McmcConfig::default().n_iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = McmcConfig::default().n_warmup)]
    pub warmup: usize,
    #[arg(long, default_value_t = McmcConfig::default().thin)]
    pub thin: usize,
}

impl McmcArgs {
    fn config(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            n_chains: self.chains,
            n_iterations: self.iterations,
            n_warmup: self.warmup,
            thin: self.thin,
            ..McmcConfig::with_seed(seed)
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Response matrix CSV: `person_id`, one column per item, cells 0/1/NA.
    #[arg(long)]
    pub responses: PathBuf,
    /// Bank supplying item kinds; unscored columns are then ignored.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long)]
    pub lenient: bool,
    /// Write the bank with fitted parameters merged in.
    #[arg(long, requires = "bank")]
    pub write_bank: Option<PathBuf>,
    #[command(flatten)]
    pub mcmc: McmcArgs,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Test-retest ICC with measurement error.
    Icc {
        /// CSV `person_id,theta_1,se_1,theta_2,se_2`.
        #[arg(long)]
        data: PathBuf,
        /// Treat the scores as error-free.
        #[arg(long)]
        ignore_measurement_error: bool,
        /// Prior family for the mean ability.
        #[arg(long, value_enum, default_value_t = PriorFamily::Vlat)]
        prior: PriorFamily,
        #[command(flatten)]
        mcmc: McmcArgs,
    },
    /// Correlation between original (columns 1) and adaptive (columns 2) scores.
    Validity {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        mcmc: McmcArgs,
    },
    /// 95% interval half-width by simulated sample size.
    Samplesize {
        #[arg(long, value_enum)]
        model: PlanningArg,
        /// Candidate sample sizes, e.g. `20,40,80` or `20:30`.
        #[arg(long, value_parser = parse_lengths)]
        ns: Lengths,
        #[arg(long, default_value_t = 20)]
        replicates: usize,
        #[arg(long, default_value_t = 0.1)]
        target: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_alpha: f64,
        #[arg(long, default_value_t = 0.33)]
        sigma_epsilon: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_original: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma_adaptive: f64,
        #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
        rho: f64,
        /// Standard error attached to every simulated score.
        #[arg(long, default_value_t = 0.2)]
        se: f64,
        #[command(flatten)]
        mcmc: McmcArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorFamily {
    Vlat,
    Calvi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanningArg {
    Icc,
    Validity,
}

#[derive(Debug, Args)]
pub struct CorrelationsArgs {
    #[command(flatten)]
    pub bank: BankArg,
    #[arg(long)]
    pub responses: PathBuf,
    /// Feature dimension, e.g. `chart_type`.
    #[arg(long)]
    pub dimension: String,
    #[command(flatten)]
    pub mcmc: McmcArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML service configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured port; 0 picks a free one.
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub bank: BankArg,
    /// Transcript as JSON lines.
    #[arg(long)]
    pub transcript: PathBuf,
    /// Require every recorded event to match bit for bit.
    #[arg(long)]
    pub verify: bool,
}

impl Cli {
    fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Usage("this subcommand needs --seed".into()))
    }

    fn emit(&self, bytes: &[u8]) -> Result<()> {
        emit(self.out.as_deref(), bytes)
    }

    fn json_only(&self) -> Result<()> {
        match self.format {
            Format::Json => Ok(()),
            Format::Csv => Err(Error::Usage("this subcommand only writes JSON".into())),
        }
    }
}

/// Runs the parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Bank(BankCommand::Validate { path, lenient }) => {
            cli.json_only()?;
            bank_validate(cli, path, *lenient)
        }
        Command::Bank(BankCommand::Synth { family, bank_id }) => {
            cli.json_only()?;
            let mut spec = match family {
                Family::Vlat => SynthSpec::vlat_like(),
                Family::Calvi => SynthSpec::calvi_like(),
            };
            if let Some(id) = bank_id {
                spec.bank_id = id.clone();
            }
            let bank = synth_bank(cli.seed()?, &spec)?;
            cli.emit(formats::bank_to_json(&bank).as_bytes())
        }
        Command::Simulate(cmd) => simulate(cli, cmd),
        Command::Calibrate(args) => calibrate(cli, args),
        Command::Eval(cmd) => eval(cli, cmd),
        Command::Correlations(args) => correlations(cli, args),
        Command::Serve(args) => serve(args),
        Command::Replay(args) => {
            cli.json_only()?;
            replay_cmd(cli, args)
        }
    }
}

#[derive(Serialize)]
struct ValidationReport<'a> {
    path: String,
    bank_id: &'a str,
    valid: bool,
    n_items: usize,
    n_scored: usize,
    violations: &'a [Violation],
    ignored_keys: &'a [String],
}

fn bank_validate(cli: &Cli, path: &Path, lenient: bool) -> Result<()> {
    let text = formats::read_to_string(path)?;
    let (bank, ignored) = formats::parse_bank_unchecked(&text, path, policy(lenient))?;
    let violations = validate_bank(&bank);
    let report = ValidationReport {
        path: path.display().to_string(),
        bank_id: &bank.bank_id,
        valid: violations.is_empty(),
        n_items: bank.items.len(),
        n_scored: bank.scored_items().count(),
        violations: &violations,
        ignored_keys: &ignored,
    };
    cli.emit(to_json(&report).as_bytes())?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(adaptest_core::Error::InvalidBank(violations).into())
    }
}

fn persons_for(bank: &ItemBank, args: &PersonArgs, seed: u64) -> Result<Vec<SimulatedPerson>> {
    let mean = args.theta_mean.unwrap_or(bank.theta_prior.mean);
    Ok(draw_persons(args.persons, mean, args.theta_sd, seed)?)
}

#[derive(Serialize)]
struct SweepSummaryRow {
    length: usize,
    #[serde(flatten)]
    summary: IntervalSummary,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    bank_id: &'a str,
    baseline: Baseline,
    n_persons: usize,
    lengths: Vec<SweepSummaryRow>,
}

#[derive(Serialize)]
struct RecoverySummary {
    rule: RecoveryRule,
    n_persons: usize,
    n_mistakes: usize,
    n_recovered: usize,
    n_censored: usize,
    median: Option<f64>,
    sd: Option<f64>,
}

fn simulate(cli: &Cli, cmd: &SimulateCommand) -> Result<()> {
    let seed = cli.seed()?;
    match cmd {
        SimulateCommand::Sweep {
            bank,
            lengths,
            persons,
            baseline,
            summary,
        } => {
            let bank = bank.load()?;
            let people = persons_for(&bank, persons, seed)?;
            let base = SessionConfig::for_bank(&bank, persons.deployment_seed, 0);
            let baseline = match baseline {
                BaselineArg::FullBank => Baseline::FullBank,
                BaselineArg::StaticReference => Baseline::StaticReference,
            };
            let sweep = sweep_lengths(&bank, &base, &lengths.0, &people, baseline, persons.deployment_seed)?;
            let json = to_json(&SweepSummary {
                bank_id: &sweep.bank_id,
                baseline: sweep.baseline,
                n_persons: sweep.n_persons,
                lengths: sweep
                    .lengths
                    .iter()
                    .map(|l| SweepSummaryRow {
                        length: l.length,
                        summary: l.summary,
                    })
                    .collect(),
            });
            if let Some(path) = summary {
                formats::write_file(path, json.as_bytes())?;
            }
            match cli.format {
                Format::Csv => cli.emit(formats::sweep_csv(&sweep).as_bytes()),
                Format::Json => cli.emit(json.as_bytes()),
            }
        }
        SimulateCommand::Recovery { bank, persons, rule } => {
            let bank = bank.load()?;
            let people = persons_for(&bank, persons, seed)?;
            let config = SessionConfig::for_bank(&bank, persons.deployment_seed, 0);
            let rule = match rule {
                RuleArg::Printed => RecoveryRule::Printed,
                RuleArg::PreviousStep => RecoveryRule::PreviousStep,
            };
            let report = recovery_analysis(&bank, &config, &people, rule)?;
            match cli.format {
                Format::Csv => cli.emit(formats::recovery_csv(&report).as_bytes()),
                Format::Json => cli.emit(
                    to_json(&RecoverySummary {
                        rule: report.rule,
                        n_persons: report.persons.len(),
                        n_mistakes: report.n_mistakes,
                        n_recovered: report.n_recovered,
                        n_censored: report.n_censored,
                        median: report.median,
                        sd: report.sd,
                    })
                    .as_bytes(),
                ),
            }
        }
        SimulateCommand::Session {
            bank,
            theta,
            deployment_seed,
            length,
        } => {
            if cli.format == Format::Csv {
                return Err(Error::Usage("session transcripts are JSON lines".into()));
            }
            let bank = bank.load()?;
            let mut config = SessionConfig::for_bank(&bank, *deployment_seed, seed);
            if let Some(l) = length {
                config = adaptest_core::sim::with_scored_length(&config, *l, *deployment_seed);
            }
            let person = SimulatedPerson {
                true_theta: *theta,
                rng_seed: seed,
            };
            let state = simulate_session(&bank, config, &person, format!("sim-{seed}"))?;
            cli.emit(formats::transcript_jsonl(state.transcript()).as_bytes())
        }
    }
}

fn calibrate(cli: &Cli, args: &CalibrateArgs) -> Result<()> {
    let config = args.mcmc.config(cli.seed()?);
    let bank = args
        .bank
        .as_deref()
        .map(|p| formats::load_bank(p, policy(args.lenient)))
        .transpose()?;
    let matrix = formats::read_response_matrix(&args.responses, bank.as_ref())?;
    let result = parallel::fit_2pl(&matrix, CalibrationPriors::default(), &config)?;
    for w in &result.warnings {
        tracing::warn!("{w}");
    }
    let fragment = BankFragment::from_result(&result);
    if let (Some(path), Some(bank)) = (&args.write_bank, bank) {
        formats::save_bank(path, &fragment.apply(bank)?)?;
    }
    match cli.format {
        Format::Json => cli.emit(to_json(&fragment).as_bytes()),
        Format::Csv => {
            let mut out = String::from(
                "item_id,a_mean,a_sd,a_lo95,a_hi95,a_rhat,b_mean,b_sd,b_lo95,b_hi95,b_rhat,quasi_separated\n",
            );
            for e in &fragment.estimates {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    e.item_id,
                    e.a.mean,
                    e.a.sd,
                    e.a.lo95,
                    e.a.hi95,
                    e.a.rhat,
                    e.b.mean,
                    e.b.sd,
                    e.b.lo95,
                    e.b.hi95,
                    e.b.rhat,
                    e.quasi_separated
                ));
            }
            cli.emit(out.as_bytes())
        }
    }
}

fn eval(cli: &Cli, cmd: &EvalCommand) -> Result<()> {
    let seed = cli.seed()?;
    match cmd {
        EvalCommand::Icc {
            data,
            ignore_measurement_error,
            prior,
            mcmc,
        } => {
            let obs = formats::read_retest(data)?;
            check_retest(&obs)?;
            let mode = if *ignore_measurement_error {
                MeasurementError::Ignored
            } else {
                MeasurementError::Included
            };
            let priors = IccPriors::for_family(match prior {
                PriorFamily::Vlat => TestFamily::VlatLike,
                PriorFamily::Calvi => TestFamily::CalviLike,
            });
            let run = parallel::run_chains(&icc_model(&obs, priors, mode), &mcmc.config(seed))?;
            match cli.format {
                Format::Csv => cli.emit(formats::draws_csv(&run).as_bytes()),
                Format::Json => cli.emit(to_json(&IccPosterior::from_run(&run)).as_bytes()),
            }
        }
        EvalCommand::Validity { data, mcmc } => {
            let obs = formats::read_paired(data)?;
            check_paired(&obs)?;
            let centered = center_on_original(&obs);
            let run = parallel::run_chains(&validity_model(&centered, ValidityPriors::default()), &mcmc.config(seed))?;
            match cli.format {
                Format::Csv => cli.emit(formats::draws_csv(&run).as_bytes()),
                Format::Json => cli.emit(to_json(&ValidityPosterior::from_run(&run)).as_bytes()),
            }
        }
        EvalCommand::Samplesize {
            model,
            ns,
            replicates,
            target,
            mu,
            sigma_alpha,
            sigma_epsilon,
            d,
            sigma_original,
            sigma_adaptive,
            rho,
            se,
            mcmc,
        } => {
            let planning = match model {
                PlanningArg::Icc => PlanningModel::Icc {
                    mu: *mu,
                    sigma_alpha: *sigma_alpha,
                    sigma_epsilon: *sigma_epsilon,
                    se: *se,
                },
                PlanningArg::Validity => PlanningModel::Validity {
                    d: *d,
                    sigma_original: *sigma_original,
                    sigma_adaptive: *sigma_adaptive,
                    rho: *rho,
                    se: *se,
                },
            };
            let report = sample_size_simulation(planning, &ns.0, *replicates, *target, &mcmc.config(seed), seed)?;
            match cli.format {
                Format::Json => cli.emit(to_json(&report).as_bytes()),
                Format::Csv => {
                    let mut out = String::from("n,replicate,halfwidth\n");
                    for row in &report.rows {
                        for (r, h) in row.halfwidths.iter().enumerate() {
                            out.push_str(&format!("{},{r},{h}\n", row.n));
                        }
                    }
                    cli.emit(out.as_bytes())
                }
            }
        }
    }
}

fn correlations(cli: &Cli, args: &CorrelationsArgs) -> Result<()> {
    let bank = args.bank.load()?;
    let matrix = formats::read_response_matrix(&args.responses, Some(&bank))?;
    let fc = feature_correlations(&matrix, &bank, &args.dimension, &args.mcmc.config(cli.seed()?))?;
    for w in &fc.warnings {
        tracing::warn!("{w}");
    }
    match cli.format {
        Format::Json => cli.emit(to_json(&fc).as_bytes()),
        Format::Csv => {
            let mut out = String::from("value_1,value_2,median,lo95,hi95,rhat\n");
            for (i, vi) in fc.values.iter().enumerate() {
                for (j, vj) in fc.values.iter().enumerate().skip(i + 1) {
                    let e = fc.entries[i][j];
                    out.push_str(&format!("{vi},{vj},{},{},{},{}\n", e.median, e.lo95, e.hi95, e.rhat));
                }
            }
            cli.emit(out.as_bytes())
        }
    }
}

fn serve(args: &ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::load(&args.config)?;
    if let Some(p) = args.port {
        config.port = p;
    }
    let addr: SocketAddr = format!("{}:{}", config.bind, config.port)
        .parse()
        .map_err(|e| Error::Invalid(format!("bad bind address: {e}")))?;
    let svc = Arc::new(Service::open(&config)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Runtime(e.to_string()))?;
    rt.block_on(service::serve(svc, addr, |bound| {
        use std::io::Write;
        tracing::info!(%bound, "listening");
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "listening on http://{bound}");
        let _ = out.flush();
    }))
}

#[derive(Serialize)]
struct ReplayReport {
    session_id: String,
    bank_id: String,
    status: adaptest_core::engine::SessionStatus,
    answered: usize,
    score: Option<Score>,
    logged_score: Option<Score>,
    matches_log: Option<bool>,
}

fn replay_cmd(cli: &Cli, args: &ReplayArgs) -> Result<()> {
    let bank = args.bank.load()?;
    let events = formats::read_transcript(&args.transcript)?;
    let mode = if args.verify {
        ReplayMode::Verify
    } else {
        ReplayMode::Recompute
    };
    let state = replay(&bank, &events, mode)?;
    let score = state.final_score().ok();
    let logged_score = events.iter().rev().find_map(|e| match e {
        SessionEvent::SessionCompleted { score } => Some(*score),
        _ => None,
    });
    let matches_log = logged_score.map(|l| Some(l) == score);
    cli.emit(
        to_json(&ReplayReport {
            session_id: state.session_id().to_string(),
            bank_id: state.bank_id().to_string(),
            status: state.status(),
            answered: state.administered().len(),
            score,
            logged_score,
            matches_log,
        })
        .as_bytes(),
    )?;
    if matches_log == Some(false) {
        return Err(Error::Invalid("recomputed score differs from the logged one".into()));
    }
    Ok(())
}
