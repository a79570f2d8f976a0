//! Probabilistic deterministic finite automata.
//!
//! A [`Pdfa`] assigns every state a stopping probability and every defined
//! `(state, token)` pair a target state together with a transition
//! probability. The probability of a string is the product of the transition
//! probabilities along its (unique) path from the initial state, times the
//! stopping probability of the state where the path ends.
//!
//! Automata are immutable once built. Use [`PdfaBuilder`] to assemble one; the
//! builder enforces normalization, determinism and reachability.

use std::collections::{HashMap, VecDeque};
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of `stop + Σ trans` from 1 for constructed automata.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Allowed deviation of `stop + Σ trans` from 1 when reading documents.
pub const DOCUMENT_TOLERANCE: f64 = 1e-6;

/// Lower bound on the stopping probability of every state of [`Pdfa::random`].
pub const MIN_RANDOM_STOP: f64 = 0.05;

/// Index of a symbol in the alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u32);

impl Token {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for Token {
    fn from(i: usize) -> Self {
        Token(u32::try_from(i).expect("token index fits in u32"))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Converts plain indices to a token string.
pub fn tokens(ids: &[u32]) -> Vec<Token> {
    ids.iter().copied().map(Token).collect()
}

pub type StateId = usize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub target: StateId,
    pub prob: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdfaError {
    #[error("token {token} is outside the alphabet of size {alphabet_size}")]
    InvalidToken { token: u32, alphabet_size: usize },
    #[error("an automaton needs at least one state")]
    NoStates,
    #[error("random automata need a non-empty alphabet")]
    EmptyAlphabet,
    #[error("initial state {0} does not exist")]
    BadInitial(StateId),
    #[error("state {state}: transition on token {token} targets missing state {target}")]
    BadTarget {
        state: StateId,
        token: u32,
        target: StateId,
    },
    #[error("state {state}: probability {value} is outside [0, 1]")]
    ProbabilityRange { state: StateId, value: f64 },
    #[error("state {state}: stop and transition probabilities sum to {total}, expected 1")]
    Normalization { state: StateId, total: f64 },
    #[error("state {state}: more than one transition on token {token}")]
    Nondeterministic { state: StateId, token: String },
    #[error("state {0} is unreachable from the initial state")]
    Unreachable(StateId),
    #[error("state {state}: unknown token {name:?}")]
    UnknownSymbol { state: StateId, name: String },
    #[error("malformed automaton document: {0}")]
    Malformed(String),
}

/// Immutable probabilistic deterministic finite automaton.
#[derive(Clone, Debug, PartialEq)]
pub struct Pdfa {
    symbols: Vec<String>,
    initial: StateId,
    stop: Vec<f64>,
    // row-major: state * alphabet_size + token
    edges: Vec<Option<Edge>>,
}

impl Pdfa {
    pub fn builder(n_states: usize, alphabet_size: usize) -> PdfaBuilder {
        PdfaBuilder::new(n_states, default_symbols(alphabet_size))
    }

    pub fn n_states(&self) -> usize {
        self.stop.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn stop_prob(&self, state: StateId) -> f64 {
        self.stop[state]
    }

    pub fn transition(&self, state: StateId, token: Token) -> Option<Edge> {
        self.edges
            .get(state * self.alphabet_size() + token.index())
            .copied()
            .flatten()
    }

    /// Number of defined transitions.
    pub fn n_transitions(&self) -> usize {
        self.edges.iter().filter(|e| e.is_some()).count()
    }

    /// Returns a copy with a different symbol table. The table must have one
    /// unique name per token.
    pub fn with_symbols(mut self, symbols: Vec<String>) -> Result<Self, PdfaError> {
        if symbols.len() != self.alphabet_size() {
            return Err(PdfaError::Malformed(format!(
                "symbol table has {} names for an alphabet of size {}",
                symbols.len(),
                self.alphabet_size()
            )));
        }
        check_unique_symbols(&symbols)?;
        self.symbols = symbols;
        Ok(self)
    }

    pub fn check_tokens(&self, x: &[Token]) -> Result<(), PdfaError> {
        match x.iter().find(|t| t.index() >= self.alphabet_size()) {
            Some(t) => Err(PdfaError::InvalidToken {
                token: t.0,
                alphabet_size: self.alphabet_size(),
            }),
            None => Ok(()),
        }
    }

    /// Follows `x` from the initial state, accumulating transition
    /// probabilities. Returns `None` when a transition is undefined.
    fn walk(&self, x: &[Token]) -> Option<(StateId, f64)> {
        let mut state = self.initial;
        let mut prob = 1.0;
        for &t in x {
            let edge = self.transition(state, t)?;
            prob *= edge.prob;
            state = edge.target;
        }
        Some((state, prob))
    }

    /// State reached by `x`, if every transition on the way is defined.
    pub fn run(&self, x: &[Token]) -> Option<StateId> {
        self.walk(x).map(|(q, _)| q)
    }

    /// Probability that the automaton generates exactly `x`.
    pub fn eval_string_prob(&self, x: &[Token]) -> Result<f64, PdfaError> {
        self.check_tokens(x)?;
        Ok(self
            .walk(x)
            .map_or(0.0, |(q, p)| p * self.stop[q]))
    }

    /// Probability that a generated string starts with `x`, i.e. `P(x Σ*)`.
    pub fn eval_prefix_prob(&self, x: &[Token]) -> Result<f64, PdfaError> {
        self.check_tokens(x)?;
        Ok(self.walk(x).map_or(0.0, |(_, p)| p))
    }

    /// Generates a connected, total, properly normalized automaton. Each
    /// state's distribution over `{stop} ∪ Σ` is a flat Dirichlet draw,
    /// rescaled so that the stopping probability is at least
    /// [`MIN_RANDOM_STOP`].
    pub fn random(n_states: usize, alphabet_size: usize, seed: u64) -> Result<Self, PdfaError> {
        if n_states == 0 {
            return Err(PdfaError::NoStates);
        }
        if alphabet_size == 0 {
            return Err(PdfaError::EmptyAlphabet);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = alphabet_size;
        let mut targets: Vec<Option<StateId>> = vec![None; n_states * k];

        // spanning tree first so every state is reachable from state 0
        for state in 1..n_states {
            let free: Vec<usize> = (0..state * k).filter(|&s| targets[s].is_none()).collect();
            let slot = free[rng.random_range(0..free.len())];
            targets[slot] = Some(state);
        }
        for slot in targets.iter_mut().filter(|s| s.is_none()) {
            *slot = Some(rng.random_range(0..n_states));
        }

        let mut builder = Pdfa::builder(n_states, alphabet_size);
        let scale = 1.0 - MIN_RANDOM_STOP;
        for state in 0..n_states {
            let draws: Vec<f64> = (0..=k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = draws.iter().sum();
            builder = builder.stop(state, MIN_RANDOM_STOP + scale * draws[k] / total);
            for (a, &w) in draws[..k].iter().enumerate() {
                let target = targets[state * k + a].expect("all slots filled");
                builder = builder.edge(state, Token::from(a), target, scale * w / total);
            }
        }
        builder.build()
    }

    /// Renders the automaton in Graphviz DOT. `labels` overrides the
    /// automaton's own symbol names.
    pub fn to_dot(&self, labels: Option<&[String]>) -> String {
        let names = labels.unwrap_or(&self.symbols);
        let mut out = String::new();
        out.push_str("digraph pdfa {\n");
        out.push_str("  rankdir=LR;\n");
        out.push_str("  node [shape=circle];\n");
        out.push_str("  __start [shape=point, label=\"\"];\n");
        let _ = writeln!(out, "  __start -> q{};", self.initial);
        for q in 0..self.n_states() {
            let _ = writeln!(out, "  q{q} [label=\"q{q}/{}\"];", self.stop[q]);
        }
        for q in 0..self.n_states() {
            for a in 0..self.alphabet_size() {
                if let Some(e) = self.transition(q, Token::from(a)) {
                    let name = names.get(a).map_or_else(|| a.to_string(), Clone::clone);
                    let _ = writeln!(
                        out,
                        "  q{q} -> q{} [label=\"{}/{}\"];",
                        e.target,
                        escape_dot(&name),
                        e.prob
                    );
                }
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        let doc = PdfaDoc {
            alphabet: self.symbols.clone(),
            initial: self.initial,
            states: (0..self.n_states())
                .map(|q| StateDoc {
                    id: q,
                    stop: self.stop[q],
                    edges: (0..self.alphabet_size())
                        .filter_map(|a| {
                            self.transition(q, Token::from(a)).map(|e| EdgeDoc {
                                token: self.symbols[a].clone(),
                                to: e.target,
                                p: e.prob,
                            })
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("automaton document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PdfaError> {
        let doc: PdfaDoc =
            serde_json::from_str(text).map_err(|e| PdfaError::Malformed(e.to_string()))?;
        check_unique_symbols(&doc.alphabet)?;
        let index: HashMap<&str, usize> = doc
            .alphabet
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();

        let n = doc.states.len();
        let mut order = vec![None; n];
        for (pos, s) in doc.states.iter().enumerate() {
            match order.get_mut(s.id) {
                Some(slot @ None) => *slot = Some(pos),
                Some(Some(_)) => {
                    return Err(PdfaError::Malformed(format!("duplicate state id {}", s.id)))
                }
                None => {
                    return Err(PdfaError::Malformed(format!(
                        "state id {} out of range for {n} states",
                        s.id
                    )))
                }
            }
        }

        let mut builder = PdfaBuilder::new(n, doc.alphabet.clone()).initial(doc.initial);
        for s in &doc.states {
            builder = builder.stop(s.id, s.stop);
            for e in &s.edges {
                let a = *index.get(e.token.as_str()).ok_or_else(|| PdfaError::UnknownSymbol {
                    state: s.id,
                    name: e.token.clone(),
                })?;
                builder = builder.edge(s.id, Token::from(a), e.to, e.p);
            }
        }
        builder.build_with_tolerance(DOCUMENT_TOLERANCE)
    }
}

fn default_symbols(alphabet_size: usize) -> Vec<String> {
    (0..alphabet_size).map(|i| i.to_string()).collect()
}

fn check_unique_symbols(symbols: &[String]) -> Result<(), PdfaError> {
    let mut seen = std::collections::HashSet::new();
    for s in symbols {
        if !seen.insert(s.as_str()) {
            return Err(PdfaError::Malformed(format!("duplicate token name {s:?}")));
        }
    }
    Ok(())
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PdfaDoc {
    alphabet: Vec<String>,
    initial: StateId,
    states: Vec<StateDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    id: StateId,
    stop: f64,
    edges: Vec<EdgeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    token: String,
    to: StateId,
    p: f64,
}

/// Incremental constructor for [`Pdfa`]. Errors are reported by `build`.
#[derive(Clone, Debug)]
pub struct PdfaBuilder {
    symbols: Vec<String>,
    initial: StateId,
    stop: Vec<f64>,
    edges: Vec<Option<Edge>>,
    duplicate: Option<(StateId, usize)>,
    out_of_range: Option<PdfaError>,
}

impl PdfaBuilder {
    pub fn new(n_states: usize, symbols: Vec<String>) -> Self {
        let k = symbols.len();
        PdfaBuilder {
            symbols,
            initial: 0,
            stop: vec![0.0; n_states],
            edges: vec![None; n_states * k],
            duplicate: None,
            out_of_range: None,
        }
    }

    pub fn initial(mut self, state: StateId) -> Self {
        self.initial = state;
        self
    }

    pub fn stop(mut self, state: StateId, prob: f64) -> Self {
        match self.stop.get_mut(state) {
            Some(s) => *s = prob,
            None => {
                self.out_of_range
                    .get_or_insert(PdfaError::Malformed(format!("state {state} does not exist")));
            }
        }
        self
    }

    pub fn edge(mut self, state: StateId, token: Token, target: StateId, prob: f64) -> Self {
        let k = self.symbols.len();
        if token.index() >= k {
            self.out_of_range.get_or_insert(PdfaError::InvalidToken {
                token: token.0,
                alphabet_size: k,
            });
            return self;
        }
        if state >= self.stop.len() {
            self.out_of_range
                .get_or_insert(PdfaError::Malformed(format!("state {state} does not exist")));
            return self;
        }
        let slot = &mut self.edges[state * k + token.index()];
        if slot.is_some() {
            self.duplicate.get_or_insert((state, token.index()));
        }
        *slot = Some(Edge { target, prob });
        self
    }

    pub fn build(self) -> Result<Pdfa, PdfaError> {
        self.build_with_tolerance(NORMALIZATION_TOLERANCE)
    }

    pub fn build_with_tolerance(self, tolerance: f64) -> Result<Pdfa, PdfaError> {
        if let Some(e) = self.out_of_range {
            return Err(e);
        }
        let n = self.stop.len();
        let k = self.symbols.len();
        if n == 0 {
            return Err(PdfaError::NoStates);
        }
        if self.initial >= n {
            return Err(PdfaError::BadInitial(self.initial));
        }
        if let Some((state, a)) = self.duplicate {
            return Err(PdfaError::Nondeterministic {
                state,
                token: self.symbols[a].clone(),
            });
        }
        check_unique_symbols(&self.symbols)?;

        for q in 0..n {
            let stop = self.stop[q];
            if !(0.0..=1.0).contains(&stop) {
                return Err(PdfaError::ProbabilityRange { state: q, value: stop });
            }
            let mut total = stop;
            for a in 0..k {
                if let Some(e) = self.edges[q * k + a] {
                    if e.target >= n {
                        return Err(PdfaError::BadTarget {
                            state: q,
                            token: a as u32,
                            target: e.target,
                        });
                    }
                    if !(0.0..=1.0).contains(&e.prob) {
                        return Err(PdfaError::ProbabilityRange { state: q, value: e.prob });
                    }
                    total += e.prob;
                }
            }
            if (total - 1.0).abs() > tolerance {
                return Err(PdfaError::Normalization { state: q, total });
            }
        }

        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.initial]);
        seen[self.initial] = true;
        while let Some(q) = queue.pop_front() {
            for e in self.edges[q * k..(q + 1) * k].iter().flatten() {
                if !seen[e.target] {
                    seen[e.target] = true;
                    queue.push_back(e.target);
                }
            }
        }
        if let Some(q) = seen.iter().position(|&s| !s) {
            return Err(PdfaError::Unreachable(q));
        }

        Ok(Pdfa {
            symbols: self.symbols,
            initial: self.initial,
            stop: self.stop,
            edges: self.edges,
        })
    }
}
