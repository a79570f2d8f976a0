//! Command-line front end: argument definitions and command implementations.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;

use pdfa_distill::eval::{evaluate_against_references, evaluate_against_teacher, read_test_set};
use pdfa_distill::teacher::remote::DEFAULT_TIMEOUT;
use pdfa_distill::{
    ConfigError, EquivalenceConfig, EvalError, EvalReport, ExactTeacher, LearnError, LearnerConfig,
    Pdfa, PdfaError, RemoteTeacher, StopReason, Teacher, TeacherError, TestSet,
};

pub const EXIT_EQUIVALENT: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EARLY_STOP: i32 = 3;
pub const EXIT_TEACHER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "pdfa-distill", version, about = "Learn a PDFA from a string-probability teacher")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a hypothesis automaton from a teacher.
    Learn(LearnArgs),
    /// Score a hypothesis against a teacher or reference probabilities.
    Eval(EvalArgs),
    /// Write a random automaton, e.g. as a test teacher.
    RandomPdfa(RandomArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TeacherSource {
    /// Automaton file answering queries in-process.
    #[arg(long, value_name = "FILE")]
    pub teacher_pdfa: Option<PathBuf>,
    /// Shell command speaking the JSON-lines teacher protocol.
    #[arg(long, value_name = "COMMAND")]
    pub teacher_cmd: Option<String>,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
pub struct OptionalTeacherSource {
    #[arg(long, value_name = "FILE")]
    pub teacher_pdfa: Option<PathBuf>,
    #[arg(long, value_name = "COMMAND")]
    pub teacher_cmd: Option<String>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub teacher: TeacherSource,
    /// Error bound for merges and equivalence checks.
    #[arg(long, default_value_t = 1e-4)]
    pub mu: f64,
    /// Number of fringe extensions before stopping early.
    #[arg(long, default_value_t = 6)]
    pub max_extends: usize,
    /// Random test strings per equivalence query.
    #[arg(long, default_value_t = 10_000)]
    pub eq_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop estimates are capped at 1 - EPS.
    #[arg(long, value_name = "EPS", default_value_t = 1e-6)]
    pub epsilon_clip: f64,
    /// Leave the edge entering a new node out of the weight update.
    #[arg(long)]
    pub exclude_final_edge: bool,
    /// Seconds to wait for each teacher reply.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
    pub teacher_timeout: f64,
    /// Hypothesis JSON output; printed to stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub dot: Option<PathBuf>,
    /// Run log, one JSON object per round.
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
    /// Final observation tree as DOT.
    #[arg(long, value_name = "FILE")]
    pub tree_dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub hypothesis: PathBuf,
    #[command(flatten)]
    pub teacher: OptionalTeacherSource,
    #[arg(long, value_name = "FILE", conflicts_with = "sample")]
    pub test_set: Option<PathBuf>,
    /// Number of strings to draw instead of reading a test set.
    #[arg(long, value_name = "N")]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
    pub teacher_timeout: f64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RandomArgs {
    #[arg(long)]
    pub states: usize,
    #[arg(long)]
    pub alphabet: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Pdfa {
        path: PathBuf,
        #[source]
        source: PdfaError,
    },
    #[error(transparent)]
    Learn(LearnError),
    #[error(transparent)]
    Eval(EvalError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Teacher(_) => EXIT_TEACHER,
            CliError::Learn(LearnError::Config(_)) => EXIT_USAGE,
            CliError::Learn(LearnError::Teacher { .. }) => EXIT_TEACHER,
            CliError::Eval(EvalError::Teacher(_)) => EXIT_TEACHER,
            _ => EXIT_FAILURE,
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        CliError::Learn(e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Eval(e)
    }
}

impl LearnArgs {
    pub fn learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            mu: self.mu,
            max_extends: self.max_extends,
            clip_epsilon: self.epsilon_clip,
            equivalence: EquivalenceConfig {
                n_samples: self.eq_samples,
                ..EquivalenceConfig::default()
            },
            seed: self.seed,
            exclude_final_edge: self.exclude_final_edge,
        }
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Learn(args) => learn(&args),
        Command::Eval(args) => eval(&args).map(|_| EXIT_EQUIVALENT),
        Command::RandomPdfa(args) => random_pdfa(&args).map(|_| EXIT_EQUIVALENT),
    }
}

fn read_pdfa(path: &Path) -> Result<Pdfa, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Pdfa::from_json(&text).map_err(|source| CliError::Pdfa {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn timeout(secs: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(secs)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| CliError::Usage(format!("invalid teacher timeout {secs}")))
}

/// Opens the teacher and returns it with the token names of its automaton,
/// if it has one.
fn open_teacher(
    pdfa: Option<&Path>,
    cmd: Option<&str>,
    secs: f64,
) -> Result<(Box<dyn Teacher>, Option<Vec<String>>), CliError> {
    match (pdfa, cmd) {
        (Some(path), None) => {
            let p = read_pdfa(path)?;
            let names = p.symbols().to_vec();
            Ok((Box::new(ExactTeacher::new(p)), Some(names)))
        }
        (None, Some(cmd)) => {
            let t = RemoteTeacher::spawn_with_timeout(cmd, timeout(secs)?)?;
            Ok((Box::new(t), None))
        }
        _ => Err(CliError::Usage(
            "give exactly one of --teacher-pdfa and --teacher-cmd".into(),
        )),
    }
}

fn learn(args: &LearnArgs) -> Result<i32, CliError> {
    let cfg = args.learner_config();
    cfg.validate()?;
    let (teacher, names) = open_teacher(
        args.teacher.teacher_pdfa.as_deref(),
        args.teacher.teacher_cmd.as_deref(),
        args.teacher_timeout,
    )?;
    let report = pdfa_distill::run(teacher, &cfg)?;
    let hypothesis = match names {
        Some(names) => report.hypothesis.clone().with_symbols(names).map_err(|source| CliError::Pdfa {
            path: PathBuf::from("<teacher>"),
            source,
        })?,
        None => report.hypothesis.clone(),
    };

    match &args.out {
        Some(path) => write_file(path, &hypothesis.to_json())?,
        None => {
            let mut stdout = io::stdout().lock();
            let _ = stdout.write_all(hypothesis.to_json().as_bytes());
        }
    }
    if let Some(path) = &args.dot {
        write_file(path, &hypothesis.to_dot(None))?;
    }
    if let Some(path) = &args.log {
        write_file(path, &report.round_log_jsonl())?;
    }
    if let Some(path) = &args.tree_dot {
        write_file(path, &report.tree.to_dot(Some(hypothesis.symbols())))?;
    }

    let reason = match report.stop_reason {
        StopReason::Equivalent => "equivalent",
        StopReason::EarlyStop => "early stop",
    };
    info!("wall time {:?}", report.wall_time);
    eprintln!(
        "{reason}: {} states after {} rounds, {} distinct queries, {} counterexamples",
        hypothesis.n_states(),
        report.rounds,
        report.distinct_queries,
        report.counterexamples.len()
    );
    Ok(match report.stop_reason {
        StopReason::Equivalent => EXIT_EQUIVALENT,
        StopReason::EarlyStop => EXIT_EARLY_STOP,
    })
}

/// Scores the hypothesis, prints the report as JSON and returns it.
pub fn eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let hypothesis = read_pdfa(&args.hypothesis)?;
    let pdfa = args.teacher.teacher_pdfa.as_deref();
    let cmd = args.teacher.teacher_cmd.as_deref();
    let mut teacher = if pdfa.is_some() || cmd.is_some() {
        Some(open_teacher(pdfa, cmd, args.teacher_timeout)?.0)
    } else {
        None
    };

    let set = match (&args.test_set, args.sample) {
        (Some(path), None) => read_test_set(path)?,
        (None, Some(n)) => {
            let k = teacher.as_ref().map_or(hypothesis.alphabet_size(), |t| t.alphabet_size());
            TestSet::sample(&EquivalenceConfig::default(), k, n, args.seed)
        }
        _ => return Err(CliError::Usage("give exactly one of --test-set and --sample".into())),
    };

    let report = match (&mut teacher, &set.references) {
        (Some(t), _) => evaluate_against_teacher(&hypothesis, &set.strings, t.as_mut())?,
        (None, Some(refs)) => evaluate_against_references(&hypothesis, &set.strings, refs)?,
        (None, None) => {
            return Err(CliError::Usage(
                "a teacher is required when the test set has no reference probabilities".into(),
            ))
        }
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(path) = &args.out {
        write_file(path, &json)?;
    }
    let _ = io::stdout().lock().write_all(json.as_bytes());
    Ok(report)
}

fn random_pdfa(args: &RandomArgs) -> Result<(), CliError> {
    let p = Pdfa::random(args.states, args.alphabet, args.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    match &args.out {
        Some(path) => write_file(path, &p.to_json()),
        None => {
            let _ = io::stdout().lock().write_all(p.to_json().as_bytes());
            Ok(())
        }
    }
}
