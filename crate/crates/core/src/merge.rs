//! Red-blue minimization of the observation tree under an error bound.
//!
//! A merge redirects the red edges entering a blue node to a red node and
//! folds the blue subtree into the machine formed by the current edges. All
//! edits go through the tree's edge table and are logged so that they can be
//! undone.

use std::collections::{HashMap, HashSet};
use std::fmt;

use log::{debug, warn};
use serde::Serialize;
use thiserror::Error;

use crate::pdfa::{Pdfa, PdfaBuilder, PdfaError, Token};
use crate::tree::{Color, NodeId, ObservationTree};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("merge of {blue} into {red} violates the bound: distance {distance}")]
    Inconsistent { red: NodeId, blue: NodeId, distance: f64 },
    #[error("the red set does not form a complete basis")]
    IncompleteBasis,
    #[error(transparent)]
    Pdfa(#[from] PdfaError),
}

/// One compared pair of a fold and its distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairCheck {
    pub red: NodeId,
    pub blue: NodeId,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeCandidate {
    pub red: NodeId,
    pub blue: NodeId,
    /// Largest pairwise distance met during the fold.
    pub score: f64,
    pub pair_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeEdit {
    pub node: NodeId,
    pub token: Token,
    pub previous: Option<NodeId>,
    pub next: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Operation {
    Merge {
        red: NodeId,
        blue: NodeId,
        score: f64,
        pairs: Vec<PairCheck>,
        edits: Vec<EdgeEdit>,
        previous_color: Color,
    },
    TurnRed {
        node: NodeId,
        previous_color: Color,
    },
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Merge { red, blue, score, .. } => {
                write!(f, "merge red={red} blue={blue} score={score:e}")
            }
            Operation::TurnRed { node, .. } => write!(f, "turn-red node={node}"),
        }
    }
}

/// Applied operations in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OperationLog {
    ops: Vec<Operation>,
}

impl OperationLog {
    pub fn operations(&self) -> &[Operation] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Every pair checked by the recorded merges.
    pub fn merge_pairs(&self) -> impl Iterator<Item = &PairCheck> {
        self.ops.iter().flat_map(|op| match op {
            Operation::Merge { pairs, .. } => pairs.as_slice(),
            Operation::TurnRed { .. } => &[],
        })
    }

    /// One line per operation.
    pub fn trace(&self) -> String {
        self.ops.iter().map(|op| format!("{op}\n")).collect()
    }

    /// Reverts the last operation.
    pub fn undo_last(&mut self, tree: &mut ObservationTree) -> bool {
        let Some(op) = self.ops.pop() else {
            return false;
        };
        match op {
            Operation::Merge { blue, edits, previous_color, .. } => {
                for e in edits.iter().rev() {
                    tree.set_edge(e.node, e.token, e.previous);
                }
                tree.set_color(blue, previous_color);
            }
            Operation::TurnRed { node, previous_color } => tree.set_color(node, previous_color),
        }
        true
    }

    /// Reverts every operation, newest first, and resets the colors to the
    /// starting configuration.
    pub fn undo_all(&mut self, tree: &mut ObservationTree) {
        while self.undo_last(tree) {}
        tree.reset_colors();
    }
}

/// Red states and their transitions under the current edges.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Basis {
    /// The root comes first.
    pub states: Vec<NodeId>,
    /// `transitions[i][a]` is the index into `states` of the target of state
    /// `i` under token `a`, if that target is red.
    pub transitions: Vec<Vec<Option<usize>>>,
}

impl Basis {
    pub fn is_complete(&self) -> bool {
        self.transitions.iter().flatten().all(Option::is_some)
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions.iter().flatten().filter(|t| t.is_some()).count()
    }
}

/// Result of one minimization attempt. The tree keeps the merged edges until
/// it is restored or the log is undone.
#[derive(Clone, Debug)]
pub struct Minimization {
    pub basis: Basis,
    pub log: OperationLog,
    pub layers: usize,
}

impl Minimization {
    pub fn is_complete(&self) -> bool {
        self.basis.is_complete()
    }
}

/// Products of transition estimates along each node's original tree path.
pub fn prefix_table(tree: &ObservationTree) -> Vec<f64> {
    let mut prefix = vec![1.0; tree.len()];
    // parents are always created before their children
    for q in tree.node_ids().skip(1) {
        let (parent, a) = tree.node(q).parent.expect("non-root node has a parent");
        prefix[q.0] = prefix[parent.0] * tree.node(parent).trans_est[a.index()];
    }
    prefix
}

/// `|prefix(blue) * stop_est(red) - access_prob(blue)|`.
pub fn consistency_distance(tree: &ObservationTree, red: NodeId, blue: NodeId) -> f64 {
    distance(tree, tree.prefix_prob(blue), red, blue)
}

fn distance(tree: &ObservationTree, prefix_blue: f64, red: NodeId, blue: NodeId) -> f64 {
    (prefix_blue * tree.node(red).stop_est - tree.node(blue).access_prob).abs()
}

/// Edge edits of a pending fold layered over the tree.
struct Overlay<'a> {
    tree: &'a ObservationTree,
    changed: HashMap<(NodeId, Token), Option<NodeId>>,
    order: Vec<(NodeId, Token, Option<NodeId>)>,
}

impl<'a> Overlay<'a> {
    fn new(tree: &'a ObservationTree) -> Self {
        Overlay {
            tree,
            changed: HashMap::new(),
            order: Vec::new(),
        }
    }

    fn edge(&self, q: NodeId, a: Token) -> Option<NodeId> {
        match self.changed.get(&(q, a)) {
            Some(&t) => t,
            None => self.tree.child(q, a),
        }
    }

    fn set(&mut self, q: NodeId, a: Token, target: Option<NodeId>) {
        self.changed.insert((q, a), target);
        self.order.push((q, a, target));
    }
}

struct Fold {
    ok: bool,
    score: f64,
    pairs: Vec<PairCheck>,
    edits: Vec<(NodeId, Token, Option<NodeId>)>,
}

/// Merges `blue` into `red` on an overlay. Stops at the first pair whose
/// distance exceeds `mu`.
fn fold(
    tree: &ObservationTree,
    prefix: &[f64],
    reds: &[NodeId],
    red: NodeId,
    blue: NodeId,
    mu: f64,
) -> Fold {
    let k = tree.alphabet_size();
    let mut view = Overlay::new(tree);
    for &r in reds {
        for a in (0..k).map(Token::from) {
            if view.edge(r, a) == Some(blue) {
                view.set(r, a, Some(red));
            }
        }
    }
    let mut pairs = Vec::new();
    let mut score = 0.0f64;
    let mut seen = HashSet::new();
    let mut stack = vec![(red, blue)];
    let mut ok = true;
    while let Some((r, b)) = stack.pop() {
        if r == b || !seen.insert((r, b)) {
            continue;
        }
        let d = distance(tree, prefix[b.0], r, b);
        pairs.push(PairCheck { red: r, blue: b, distance: d });
        score = score.max(d);
        if !(d <= mu) {
            ok = false;
            break;
        }
        for a in (0..k).map(Token::from) {
            let Some(bc) = view.edge(b, a) else { continue };
            match view.edge(r, a) {
                Some(rc) => stack.push((rc, bc)),
                None => view.set(r, a, Some(bc)),
            }
        }
    }
    Fold {
        ok,
        score,
        pairs,
        edits: view.order,
    }
}

/// Checks whether `blue` can be merged into `red` with every compared pair
/// within `mu`. Red nodes are those colored red in the tree.
pub fn mergeable(
    tree: &ObservationTree,
    red: NodeId,
    blue: NodeId,
    mu: f64,
) -> Option<MergeCandidate> {
    let reds: Vec<NodeId> = tree.node_ids().filter(|&q| tree.node(q).color == Color::Red).collect();
    mergeable_with(tree, &prefix_table(tree), &reds, red, blue, mu)
}

fn mergeable_with(
    tree: &ObservationTree,
    prefix: &[f64],
    reds: &[NodeId],
    red: NodeId,
    blue: NodeId,
    mu: f64,
) -> Option<MergeCandidate> {
    let f = fold(tree, prefix, reds, red, blue, mu);
    f.ok.then(|| MergeCandidate {
        red,
        blue,
        score: f.score,
        pair_count: f.pairs.len(),
    })
}

/// Performs the merge of `blue` into `red` and appends it to `log`.
pub fn apply_merge(
    tree: &mut ObservationTree,
    red: NodeId,
    blue: NodeId,
    mu: f64,
    log: &mut OperationLog,
) -> Result<MergeCandidate, MergeError> {
    let reds: Vec<NodeId> = tree.node_ids().filter(|&q| tree.node(q).color == Color::Red).collect();
    let prefix = prefix_table(tree);
    apply_merge_with(tree, &prefix, &reds, red, blue, mu, log)
}

fn apply_merge_with(
    tree: &mut ObservationTree,
    prefix: &[f64],
    reds: &[NodeId],
    red: NodeId,
    blue: NodeId,
    mu: f64,
    log: &mut OperationLog,
) -> Result<MergeCandidate, MergeError> {
    let f = fold(tree, prefix, reds, red, blue, mu);
    if !f.ok {
        let distance = f.pairs.last().map_or(f64::NAN, |p| p.distance);
        return Err(MergeError::Inconsistent { red, blue, distance });
    }
    let mut edits = Vec::with_capacity(f.edits.len());
    for (node, token, next) in f.edits {
        edits.push(EdgeEdit {
            node,
            token,
            previous: tree.child(node, token),
            next,
        });
        tree.set_edge(node, token, next);
    }
    let previous_color = tree.node(blue).color;
    tree.set_color(blue, Color::White);
    let candidate = MergeCandidate {
        red,
        blue,
        score: f.score,
        pair_count: f.pairs.len(),
    };
    log.ops.push(Operation::Merge {
        red,
        blue,
        score: f.score,
        pairs: f.pairs,
        edits,
        previous_color,
    });
    Ok(candidate)
}

fn turn_red(tree: &mut ObservationTree, reds: &mut Vec<NodeId>, node: NodeId, log: &mut OperationLog) {
    let previous_color = tree.node(node).color;
    tree.set_color(node, Color::Red);
    reds.push(node);
    log.ops.push(Operation::TurnRed { node, previous_color });
}

/// Non-red targets of red edges, ordered by access sequence.
pub fn blue_layer(tree: &ObservationTree, reds: &[NodeId]) -> Vec<NodeId> {
    let mut blues = Vec::new();
    let mut seen = HashSet::new();
    for &r in reds {
        for a in (0..tree.alphabet_size()).map(Token::from) {
            if let Some(t) = tree.child(r, a) {
                if tree.node(t).color != Color::Red && seen.insert(t) {
                    blues.push(t);
                }
            }
        }
    }
    blues.sort_by_cached_key(|&q| tree.access_sequence(q));
    blues
}

/// Lowest-score candidate over all reds; ties go to the earlier red.
fn best_candidate(
    tree: &ObservationTree,
    prefix: &[f64],
    reds: &[NodeId],
    blue: NodeId,
    mu: f64,
) -> Option<MergeCandidate> {
    let mut best: Option<MergeCandidate> = None;
    let mut best_score = f64::INFINITY;
    for &r in reds {
        if let Some(c) = mergeable_with(tree, prefix, reds, r, blue, mu) {
            if c.score < best_score {
                best_score = c.score;
                best = Some(c);
            }
        }
    }
    best
}

/// Processes one blue layer: every blue is scored against every red on the
/// layer's starting state, then the chosen operations are applied in order.
pub fn merge_layer(
    tree: &mut ObservationTree,
    prefix: &[f64],
    reds: &mut Vec<NodeId>,
    blues: &[NodeId],
    mu: f64,
    log: &mut OperationLog,
) {
    for &b in blues {
        tree.set_color(b, Color::Blue);
    }
    let plan: Vec<(NodeId, Option<MergeCandidate>)> = blues
        .iter()
        .map(|&b| (b, best_candidate(tree, prefix, reds, b, mu)))
        .collect();
    for (b, choice) in plan {
        let applied = match choice {
            Some(c) => apply_merge_with(tree, prefix, reds, c.red, b, mu, log).is_ok()
                || {
                    // an earlier merge of this layer changed the red side
                    debug!("planned merge of {b} into {} no longer holds", c.red);
                    match best_candidate(tree, prefix, reds, b, mu) {
                        Some(c) => apply_merge_with(tree, prefix, reds, c.red, b, mu, log).is_ok(),
                        None => false,
                    }
                },
            None => false,
        };
        if !applied {
            turn_red(tree, reds, b, log);
        }
    }
}

/// Reads the basis formed by `reds` from the current edges.
pub fn basis_of(tree: &ObservationTree, reds: &[NodeId]) -> Basis {
    let index: HashMap<NodeId, usize> = reds.iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let transitions = reds
        .iter()
        .map(|&r| {
            (0..tree.alphabet_size())
                .map(|a| tree.child(r, Token::from(a)).and_then(|t| index.get(&t).copied()))
                .collect()
        })
        .collect();
    Basis {
        states: reds.to_vec(),
        transitions,
    }
}

/// The basis if `reds` is closed under every transition.
pub fn is_complete_basis(tree: &ObservationTree, reds: &[NodeId]) -> Option<Basis> {
    let basis = basis_of(tree, reds);
    basis.is_complete().then_some(basis)
}

/// Merges layer by layer until the reds form a complete basis or no blue
/// nodes remain. The tree is left in its merged state.
pub fn minimize(tree: &mut ObservationTree, mu: f64) -> Minimization {
    tree.reset_colors();
    let prefix = prefix_table(tree);
    let mut reds = vec![tree.root()];
    let mut log = OperationLog::default();
    let mut layers = 0;
    loop {
        if let Some(basis) = is_complete_basis(tree, &reds) {
            return Minimization { basis, log, layers };
        }
        let blues = blue_layer(tree, &reds);
        if blues.is_empty() || layers > tree.len() {
            if !blues.is_empty() {
                warn!("minimization did not settle after {layers} layers");
            }
            return Minimization {
                basis: basis_of(tree, &reds),
                log,
                layers,
            };
        }
        merge_layer(tree, &prefix, &mut reds, &blues, mu, &mut log);
        layers += 1;
    }
}

/// Re-applies a recorded log on a tree in its starting colors and returns
/// the resulting basis.
pub fn replay(
    tree: &mut ObservationTree,
    recorded: &OperationLog,
    mu: f64,
) -> Result<Minimization, MergeError> {
    tree.reset_colors();
    let prefix = prefix_table(tree);
    let mut reds = vec![tree.root()];
    let mut log = OperationLog::default();
    for op in recorded.operations() {
        match *op {
            Operation::Merge { red, blue, .. } => {
                tree.set_color(blue, Color::Blue);
                apply_merge_with(tree, &prefix, &reds, red, blue, mu, &mut log)?;
            }
            Operation::TurnRed { node, .. } => {
                tree.set_color(node, Color::Blue);
                turn_red(tree, &mut reds, node, &mut log);
            }
        }
    }
    Ok(Minimization {
        basis: basis_of(tree, &reds),
        log,
        layers: 0,
    })
}

/// Builds an automaton from a complete basis. Each state's estimates are
/// clamped to `[0, 1]` and rescaled to sum to one.
pub fn extract_hypothesis(
    tree: &ObservationTree,
    basis: &Basis,
    symbols: Option<&[String]>,
) -> Result<Pdfa, MergeError> {
    if !basis.is_complete() {
        return Err(MergeError::IncompleteBasis);
    }
    let k = tree.alphabet_size();
    let symbols = match symbols {
        Some(s) => s.to_vec(),
        None => (0..k).map(|i| i.to_string()).collect(),
    };
    let mut builder = PdfaBuilder::new(basis.states.len(), symbols);
    for (i, &r) in basis.states.iter().enumerate() {
        let node = tree.node(r);
        let stop = node.stop_est.clamp(0.0, 1.0);
        let trans: Vec<f64> = node.trans_est.iter().map(|t| t.clamp(0.0, 1.0)).collect();
        let total = stop + trans.iter().sum::<f64>();
        let (stop, scale) = if total > 0.0 { (stop / total, 1.0 / total) } else { (1.0, 0.0) };
        builder = builder.stop(i, stop);
        for (a, &t) in trans.iter().enumerate() {
            let target = basis.transitions[i][a].expect("complete basis");
            builder = builder.edge(i, Token::from(a), target, t * scale);
        }
    }
    Ok(builder.build()?)
}
