//! The extend, minimize and test loop.

use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::merge::{extract_hypothesis, minimize, Basis, MergeError, Minimization};
use crate::pdfa::{Pdfa, Token};
use crate::teacher::{equivalence_query, CachedTeacher, EquivalenceConfig, Teacher, TeacherError, Verdict};
use crate::tree::{DfsReport, ObservationTree};
use crate::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Error bound for merges and equivalence checks.
    pub mu: f64,
    pub max_extends: usize,
    pub clip_epsilon: f64,
    /// Sampling parameters of the equivalence oracle. Its `mu` and `seed`
    /// are replaced by the learner's.
    pub equivalence: EquivalenceConfig,
    pub seed: u64,
    pub exclude_final_edge: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            mu: 1e-4,
            max_extends: 6,
            clip_epsilon: 1e-6,
            equivalence: EquivalenceConfig::default(),
            seed: 0,
            exclude_final_edge: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.mu) {
            return Err(ConfigError::new(format!("mu {} must lie in [0, 1)", self.mu)));
        }
        if self.max_extends == 0 {
            return Err(ConfigError::new("max_extends must be at least 1"));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(ConfigError::new(format!(
                "clipping epsilon {} must lie in (0, 1)",
                self.clip_epsilon
            )));
        }
        self.equivalence_config().validate()
    }

    pub fn equivalence_config(&self) -> EquivalenceConfig {
        EquivalenceConfig {
            mu: self.mu,
            seed: self.seed,
            ..self.equivalence.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Equivalent,
    EarlyStop,
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub extend_count: usize,
    pub tree_size: usize,
    pub reds: usize,
    pub basis_complete: bool,
    pub clipped: usize,
    pub skipped: usize,
    pub counterexample: Option<Vec<Token>>,
    pub stale_counterexample: bool,
    /// Queries issued so far.
    pub queries: u64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub hypothesis: Pdfa,
    pub stop_reason: StopReason,
    pub rounds: usize,
    pub round_log: Vec<RoundRecord>,
    /// Strings sent to the teacher.
    pub distinct_queries: u64,
    /// Queries made by the learner, including those answered from the cache.
    pub issued_queries: u64,
    pub counterexamples: Vec<Vec<Token>>,
    /// Largest `|π_H(x) - P(x)|` over the access strings of the final tree.
    pub max_seen_error: f64,
    pub tree: ObservationTree,
    pub wall_time: Duration,
}

impl RunReport {
    /// The run log as JSON lines.
    pub fn round_log_jsonl(&self) -> String {
        self.round_log
            .iter()
            .map(|r| serde_json::to_string(r).expect("round record serializes") + "\n")
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("teacher failed after {} rounds: {source}", rounds.len())]
    Teacher {
        #[source]
        source: TeacherError,
        rounds: Vec<RoundRecord>,
    },
    #[error(transparent)]
    Merge(#[from] MergeError),
}

/// Hooks into the main loop. All methods do nothing by default.
pub trait RunObserver {
    fn after_dfs_update(&mut self, _tree: &ObservationTree, _report: &DfsReport) {}

    fn before_minimize(&mut self, _tree: &ObservationTree) {}

    /// Called with the tree still in its merged state.
    fn after_minimize(
        &mut self,
        _tree: &ObservationTree,
        _minimization: &Minimization,
        _hypothesis: Option<&Pdfa>,
    ) {
    }

    fn after_restore(&mut self, _tree: &ObservationTree) {}
}

impl RunObserver for () {}

/// Runs the learner with a query cache and no observer.
pub fn run<T: Teacher>(teacher: T, cfg: &LearnerConfig) -> Result<RunReport, LearnError> {
    Learner::new(cfg.clone()).run(teacher)
}

pub struct Learner<'o> {
    cfg: LearnerConfig,
    observer: Option<&'o mut dyn RunObserver>,
    cache: bool,
}

impl<'o> Learner<'o> {
    pub fn new(cfg: LearnerConfig) -> Self {
        Learner {
            cfg,
            observer: None,
            cache: true,
        }
    }

    pub fn observer(mut self, observer: &'o mut dyn RunObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    /// Sends every query to the teacher, repeated ones included.
    pub fn without_cache(mut self) -> Self {
        self.cache = false;
        self
    }

    pub fn run<T: Teacher>(self, teacher: T) -> Result<RunReport, LearnError> {
        self.cfg.validate()?;
        let mut unit = ();
        let observer: &mut dyn RunObserver = match self.observer {
            Some(o) => o,
            None => &mut unit,
        };
        if self.cache {
            let mut t = Counting::new(CachedTeacher::new(teacher));
            let mut report = main_loop(&mut t, &self.cfg, observer)?;
            report.distinct_queries = t.inner.stats().misses;
            Ok(report)
        } else {
            main_loop(&mut Counting::new(teacher), &self.cfg, observer)
        }
    }
}

struct Counting<T> {
    inner: T,
    issued: u64,
}

impl<T> Counting<T> {
    fn new(inner: T) -> Self {
        Counting { inner, issued: 0 }
    }
}

impl<T: Teacher> Teacher for Counting<T> {
    fn alphabet_size(&self) -> usize {
        self.inner.alphabet_size()
    }

    fn string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError> {
        self.issued += 1;
        self.inner.string_prob(x)
    }
}

fn main_loop<T: Teacher>(
    teacher: &mut Counting<T>,
    cfg: &LearnerConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunReport, LearnError> {
    let start = Instant::now();
    let eq_cfg = cfg.equivalence_config();
    let mut rng = ChaCha8Rng::seed_from_u64(eq_cfg.seed);
    let mut log: Vec<RoundRecord> = Vec::new();
    let fail = |source, log: &Vec<RoundRecord>| LearnError::Teacher {
        source,
        rounds: log.clone(),
    };

    let mut tree = ObservationTree::new(teacher, cfg.exclude_final_edge).map_err(|e| fail(e, &log))?;
    let mut best: Option<Pdfa> = None;
    let mut counterexamples = Vec::new();

    let stop_reason = loop {
        if tree.extend_count() >= cfg.max_extends {
            info!("early stop after {} extensions", tree.extend_count());
            break StopReason::EarlyStop;
        }
        tree.extend_fringe(teacher).map_err(|e| fail(e, &log))?;
        let dfs = tree.dfs_update();
        observer.after_dfs_update(&tree, &dfs);
        let clipped = tree.clip_stop_estimates(cfg.clip_epsilon);

        let snapshot = tree.snapshot();
        observer.before_minimize(&tree);
        let m = minimize(&mut tree, cfg.mu);
        let hypothesis = if m.is_complete() {
            Some(extract_hypothesis(&tree, &m.basis, None)?)
        } else {
            None
        };
        observer.after_minimize(&tree, &m, hypothesis.as_ref());
        tree.restore(&snapshot);
        observer.after_restore(&tree);

        let mut record = RoundRecord {
            round: log.len(),
            extend_count: tree.extend_count(),
            tree_size: tree.len(),
            reds: m.basis.states.len(),
            basis_complete: hypothesis.is_some(),
            clipped,
            skipped: dfs.skipped.len(),
            counterexample: None,
            stale_counterexample: false,
            queries: 0,
        };
        debug!(
            "round {}: {} nodes, {} reds, complete {}",
            record.round, record.tree_size, record.reds, record.basis_complete
        );

        let mut equivalent = false;
        if let Some(h) = hypothesis {
            match equivalence_query(&h, teacher, &eq_cfg, &mut rng) {
                Ok(Verdict::Equivalent) => equivalent = true,
                Ok(Verdict::Counterexample(x)) => {
                    let created = tree.insert_path(&x, teacher).map_err(|e| fail(e, &log))?;
                    if created == 0 {
                        warn!("counterexample {x:?} is already in the tree");
                        record.stale_counterexample = true;
                    } else {
                        let dfs = tree.dfs_update();
                        observer.after_dfs_update(&tree, &dfs);
                        tree.clip_stop_estimates(cfg.clip_epsilon);
                    }
                    record.counterexample = Some(x.clone());
                    counterexamples.push(x);
                }
                Err(e) => return Err(fail(e, &log)),
            }
            best = Some(h);
        }
        record.queries = teacher.issued;
        log.push(record);
        if equivalent {
            break StopReason::Equivalent;
        }
    };

    let hypothesis = match best {
        Some(h) => h,
        None => root_machine(&tree)?,
    };
    let max_seen_error = tree
        .node_ids()
        .map(|q| {
            let x = tree.access_sequence(q);
            (hypothesis.eval_string_prob(&x).unwrap_or(0.0) - tree.node(q).access_prob).abs()
        })
        .fold(0.0, f64::max);
    Ok(RunReport {
        hypothesis,
        stop_reason,
        rounds: log.len(),
        round_log: log,
        distinct_queries: teacher.issued,
        issued_queries: teacher.issued,
        counterexamples,
        max_seen_error,
        tree,
        wall_time: start.elapsed(),
    })
}

/// Single state with the root's estimates and a self loop on every token.
fn root_machine(tree: &ObservationTree) -> Result<Pdfa, MergeError> {
    let basis = Basis {
        states: vec![tree.root()],
        transitions: vec![vec![Some(0); tree.alphabet_size()]],
    };
    extract_hypothesis(tree, &basis, None)
}
