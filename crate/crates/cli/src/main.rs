//! `oracle-select`: run scenarios, sweeps, attack demos and the window
//! table from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oracle_select::agents::AgentKind;
use oracle_select::domain::{ScenarioError, WindowMode};
use oracle_select::experiments::{
    default_attacker, evaluate_network, export_run, run_agents, run_attack, sweep_malicious,
    sweep_noise, train_dqn, window_table, window_table_scenario, write_sweep_csv,
    write_window_table, AgentRun, AttackScenario, ExperimentError, SweepRow, NOISE_GRID,
};
use oracle_select::metrics::{export_log, export_report};
use oracle_select::nn::{Mlp, NnError};
use oracle_select::ScenarioConfig;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("experiment: {0}")]
    Experiment(#[from] ExperimentError),
    #[error("checkpoint {path}: {source}")]
    Checkpoint { path: PathBuf, source: NnError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid option: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "oracle-select", version, about = "Trust-aware oracle selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON. Defaults to the built-in 15-oracle scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "ORACLE_SIM_OUT", default_value = "out")]
    out: PathBuf,
    /// Run seed. Defaults to the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AgentArg {
    TcoDrl,
    RoundRobin,
    Blor,
    Psg,
    All,
}

impl AgentArg {
    fn kinds(self) -> Vec<AgentKind> {
        match self {
            AgentArg::TcoDrl => vec![AgentKind::TcoDrl],
            AgentArg::RoundRobin => vec![AgentKind::RoundRobin],
            AgentArg::Blor => vec![AgentKind::Blor],
            AgentArg::Psg => vec![AgentKind::Psg],
            AgentArg::All => AgentKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackArg {
    Me,
    Ooa,
    Osa,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One episode per agent.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        agent: AgentArg,
    },
    /// Repeat `run` across behavior-noise levels (percent).
    SweepNoise {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        agent: AgentArg,
        #[arg(long, value_delimiter = ',', default_values_t = NOISE_GRID)]
        noise: Vec<u32>,
    },
    /// Repeat `run` while converting more oracles to malicious.
    SweepMalicious {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        agent: AgentArg,
        #[arg(long, value_delimiter = ',', default_values_t = [3usize, 4, 5, 6, 7, 8, 9])]
        counts: Vec<usize>,
    },
    /// ME / OOA / OSA attack traces with threshold enforcement on.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "tco-drl")]
        agent: AgentArg,
        #[arg(long, value_enum, default_value = "all")]
        kind: AttackArg,
        /// Attacking oracle. Defaults to the cheapest trusted oracle.
        #[arg(long)]
        attacker: Option<usize>,
        #[arg(long, default_value_t = 3)]
        start_window: u32,
    },
    /// Final reputations of a fixed 5-oracle community for each window length.
    WindowTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = 1usize..=10)]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        windows: usize,
    },
    /// Train the DQN selector and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training episodes. Defaults to the scenario's `dqn.train_episodes`.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Greedy evaluation of a saved checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Load the scenario, create the output root and record the resolved
/// scenario there.
fn prepare(common: &Common) -> Result<(ScenarioConfig, u64)> {
    let cfg = match &common.scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let seed = common.seed.unwrap_or(cfg.seed);
    fs::create_dir_all(&common.out).map_err(io_err(&common.out))?;
    let path = common.out.join("scenario.json");
    fs::write(&path, cfg.to_json_pretty() + "\n").map_err(io_err(&path))?;
    Ok((cfg, seed))
}

fn export_sweep(out: &Path, prefix: &str, runs: &[(f64, AgentRun)]) -> Result<()> {
    let mut rows = Vec::with_capacity(runs.len());
    for (point, run) in runs {
        let dir = out.join(run.kind.as_str()).join(format!("{prefix}-{point}"));
        export_run(run, &dir)?;
        rows.push(SweepRow::new(*point, &run.report));
    }
    write_sweep_csv(&rows, &out.join("sweep.csv"))?;
    Ok(())
}

fn print_summary(run: &AgentRun) {
    let s = &run.report.summary;
    println!(
        "{:<12} malicious {:>6.2}%  trusted {:>6.2}%  match {:>6.2}%  cost {:.3}",
        s.agent,
        100.0 * s.fractions.malicious,
        100.0 * s.fractions.trusted,
        100.0 * s.match_rate,
        s.average_cost
    );
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { common, agent } => {
            let (cfg, seed) = prepare(&common)?;
            for run in run_agents(&agent.kinds(), &cfg, seed)? {
                export_run(&run, &common.out.join(run.kind.as_str()))?;
                print_summary(&run);
            }
        }
        Command::SweepNoise { common, agent, noise } => {
            if let Some(p) = noise.iter().find(|p| **p > 100) {
                return Err(CliError::Invalid(format!("noise {p}% exceeds 100")));
            }
            let (cfg, seed) = prepare(&common)?;
            let runs = sweep_noise(&cfg, &agent.kinds(), &noise, seed)?;
            export_sweep(&common.out, "noise", &runs)?;
        }
        Command::SweepMalicious { common, agent, counts } => {
            let (cfg, seed) = prepare(&common)?;
            let runs = sweep_malicious(&cfg, &agent.kinds(), &counts, seed)?;
            export_sweep(&common.out, "malicious", &runs)?;
        }
        Command::Attack { common, agent, kind, attacker, start_window } => {
            let (cfg, seed) = prepare(&common)?;
            let attacker = match attacker {
                Some(a) if a < cfg.oracle_count() => a,
                Some(a) => return Err(CliError::Invalid(format!("no oracle {a}"))),
                None => default_attacker(&cfg)
                    .ok_or_else(|| CliError::Invalid("scenario has no trusted oracle to attack".into()))?,
            };
            let scenarios: Vec<AttackScenario> = match kind {
                AttackArg::Me => vec![AttackScenario::Me],
                AttackArg::Ooa => vec![AttackScenario::Ooa],
                AttackArg::Osa => vec![AttackScenario::Osa],
                AttackArg::All => AttackScenario::ALL.to_vec(),
            };
            let threshold = cfg.trust.threshold;
            let path = common.out.join("attacks.csv");
            let mut table = String::from(
                "agent,attack,mode,attacker,first_untrusted,recovery_windows,served_while_untrusted\n",
            );
            for k in agent.kinds() {
                for &sc in &scenarios {
                    // OOA recovery is compared against a memoryless window.
                    let modes: &[WindowMode] = if sc == AttackScenario::Ooa {
                        &[WindowMode::Improved, WindowMode::Standard]
                    } else {
                        &[WindowMode::Improved]
                    };
                    for &mode in modes {
                        let run = run_attack(&cfg, sc, attacker, start_window, mode, k, seed)?;
                        let mode_name = match mode {
                            WindowMode::Improved => "improved",
                            WindowMode::Standard => "standard",
                        };
                        let dir = common.out.join(k.as_str()).join(format!("{}-{mode_name}", sc.as_str()));
                        export_report(&run.report, &dir).map_err(ExperimentError::from)?;
                        export_log(&run.log, &dir).map_err(ExperimentError::from)?;
                        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
                        table.push_str(&format!(
                            "{},{},{mode_name},{attacker},{},{},{}\n",
                            k.as_str(),
                            sc.as_str(),
                            opt(run.first_untrusted(threshold)),
                            opt(run.recovery_windows(threshold)),
                            run.served_while_untrusted(threshold),
                        ));
                    }
                }
            }
            fs::write(&path, table).map_err(io_err(&path))?;
        }
        Command::WindowTable { common, lengths, windows } => {
            if lengths.contains(&0) || windows == 0 {
                return Err(CliError::Invalid("window lengths and count must be positive".into()));
            }
            let cfg = match &common.scenario {
                Some(p) => ScenarioConfig::load(p)?,
                None => window_table_scenario(),
            };
            let seed = common.seed.unwrap_or(cfg.seed);
            fs::create_dir_all(&common.out).map_err(io_err(&common.out))?;
            let path = common.out.join("scenario.json");
            fs::write(&path, cfg.to_json_pretty() + "\n").map_err(io_err(&path))?;
            let table = window_table(&cfg, &lengths, windows, seed)?;
            write_window_table(&table, &common.out.join("window_table.csv"))?;
            for (label, row) in table.labels.iter().zip(&table.values) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.2}")).collect();
                println!("{label:<14}{}", cells.join(""));
            }
        }
        Command::Train { common, episodes } => {
            let (cfg, seed) = prepare(&common)?;
            let training = train_dqn(&cfg, seed, episodes.unwrap_or(cfg.dqn.train_episodes))?;
            for (i, report) in training.episodes.iter().enumerate() {
                export_report(report, &common.out.join(format!("episode-{i}")))
                    .map_err(ExperimentError::from)?;
            }
            let rows: Vec<SweepRow> =
                training.episodes.iter().enumerate().map(|(i, r)| SweepRow::new(i as f64, r)).collect();
            write_sweep_csv(&rows, &common.out.join("training.csv"))?;
            let path = common.out.join("checkpoint.mlp");
            training
                .agent
                .network()
                .save(&path)
                .map_err(|source| CliError::Checkpoint { path: path.clone(), source })?;
        }
        Command::Evaluate { common, checkpoint } => {
            let net = Mlp::load(&checkpoint)
                .map_err(|source| CliError::Checkpoint { path: checkpoint.clone(), source })?;
            let (cfg, seed) = prepare(&common)?;
            let (report, log) = evaluate_network(&cfg, seed, &net)?;
            let dir = common.out.join(AgentKind::TcoDrl.as_str());
            export_report(&report, &dir).map_err(ExperimentError::from)?;
            export_log(&log, &dir).map_err(ExperimentError::from)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
