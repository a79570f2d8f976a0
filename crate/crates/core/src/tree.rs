//! Observation tree: the prefix tree of queried strings with per-node
//! probability estimates.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use log::debug;
use serde::Serialize;

use crate::pdfa::Token;
use crate::teacher::{Teacher, TeacherError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
    White,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObsNode {
    pub parent: Option<(NodeId, Token)>,
    /// Outgoing edges indexed by token. During minimization these may point
    /// at nodes other than the tree children.
    pub children: Vec<Option<NodeId>>,
    pub stop_est: f64,
    pub trans_est: Vec<f64>,
    pub access_prob: f64,
    pub weight: Vec<f64>,
    pub color: Color,
    pub depth: usize,
}

/// Outcome of one top-down estimate pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DfsReport {
    pub visited: usize,
    /// Nodes reached with a zero path product; they and their subtrees keep
    /// their previous estimates.
    pub skipped: Vec<NodeId>,
}

/// Full copy of a tree, taken before minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot(ObservationTree);

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTree {
    pub(crate) nodes: Vec<ObsNode>,
    alphabet_size: usize,
    fringe: Vec<NodeId>,
    extend_count: usize,
    exclude_final_edge: bool,
}

impl ObservationTree {
    /// Creates the tree holding only the root, initialized from the teacher.
    pub fn new<T: Teacher + ?Sized>(
        teacher: &mut T,
        exclude_final_edge: bool,
    ) -> Result<Self, TeacherError> {
        let k = teacher.alphabet_size();
        let mut tree = ObservationTree {
            nodes: Vec::new(),
            alphabet_size: k,
            fringe: vec![NodeId::ROOT],
            extend_count: 0,
            exclude_final_edge,
        };
        let (p, next) = query_node(teacher, &[], k)?;
        tree.nodes.push(fresh_node(None, k, p, next, 0, Color::Red));
        Ok(tree)
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, q: NodeId) -> &ObsNode {
        &self.nodes[q.0]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn fringe(&self) -> &[NodeId] {
        &self.fringe
    }

    pub fn extend_count(&self) -> usize {
        self.extend_count
    }

    pub fn exclude_final_edge(&self) -> bool {
        self.exclude_final_edge
    }

    pub fn child(&self, q: NodeId, a: Token) -> Option<NodeId> {
        self.nodes[q.0].children.get(a.index()).copied().flatten()
    }

    /// Number of nodes without children.
    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.children.iter().all(Option::is_none))
            .count()
    }

    /// Creates and initializes the child of `parent` under `a`. Nothing is
    /// modified if the teacher fails.
    pub fn add_child<T: Teacher + ?Sized>(
        &mut self,
        parent: NodeId,
        a: Token,
        teacher: &mut T,
    ) -> Result<NodeId, TeacherError> {
        debug_assert!(self.child(parent, a).is_none());
        let mut x = self.access_sequence(parent);
        x.push(a);
        let (p, next) = query_node(teacher, &x, self.alphabet_size)?;
        let id = NodeId(self.nodes.len());
        let depth = self.nodes[parent.0].depth + 1;
        let color = if parent == NodeId::ROOT { Color::Blue } else { Color::White };
        self.nodes
            .push(fresh_node(Some((parent, a)), self.alphabet_size, p, next, depth, color));
        self.nodes[parent.0].children[a.index()] = Some(id);
        self.update_path(id, p);
        Ok(id)
    }

    /// Adds `p` to the weight of every edge on the root path of `q`. The edge
    /// entering `q` is skipped when the tree excludes final edges.
    pub(crate) fn update_path(&mut self, q: NodeId, p: f64) {
        let mut edges = Vec::new();
        let mut cur = q;
        while let Some((parent, a)) = self.nodes[cur.0].parent {
            edges.push((parent, a));
            cur = parent;
        }
        let skip = usize::from(self.exclude_final_edge && !edges.is_empty());
        for &(node, a) in edges.iter().skip(skip) {
            self.nodes[node.0].weight[a.index()] += p;
        }
    }

    /// Gives every fringe node a child for every token and makes those
    /// children the new fringe. Existing children are reused.
    pub fn extend_fringe<T: Teacher + ?Sized>(
        &mut self,
        teacher: &mut T,
    ) -> Result<Vec<NodeId>, TeacherError> {
        let mut next = Vec::with_capacity(self.fringe.len() * self.alphabet_size);
        for i in 0..self.fringe.len() {
            let q = self.fringe[i];
            for a in 0..self.alphabet_size {
                let a = Token::from(a);
                let c = match self.child(q, a) {
                    Some(c) => c,
                    None => self.add_child(q, a, teacher)?,
                };
                next.push(c);
            }
        }
        self.fringe = next.clone();
        self.extend_count += 1;
        Ok(next)
    }

    /// Materializes the path of `x`, creating nodes from the first missing
    /// transition on. Returns the number of created nodes.
    pub fn insert_path<T: Teacher + ?Sized>(
        &mut self,
        x: &[Token],
        teacher: &mut T,
    ) -> Result<usize, TeacherError> {
        let mut q = NodeId::ROOT;
        let mut created = 0;
        for &a in x {
            q = match self.child(q, a) {
                Some(c) => c,
                None => {
                    created += 1;
                    self.add_child(q, a, teacher)?
                }
            };
        }
        Ok(created)
    }

    /// Recomputes stop and transition estimates top-down so that every
    /// reached node's path probability equals its access probability.
    pub fn dfs_update(&mut self) -> DfsReport {
        let mut report = DfsReport::default();
        let mut stack = vec![(NodeId::ROOT, 1.0f64)];
        while let Some((q, p)) = stack.pop() {
            if p == 0.0 {
                debug!("zero path product at {q}; subtree estimates frozen");
                report.skipped.push(q);
                continue;
            }
            report.visited += 1;
            let node = &mut self.nodes[q.0];
            node.stop_est = node.access_prob / p;
            self.normalize_node(q);
            let node = &self.nodes[q.0];
            for (a, c) in node.children.iter().enumerate() {
                if let Some(c) = c {
                    stack.push((*c, p * node.trans_est[a]));
                }
            }
        }
        report
    }

    /// Distributes `1 - stop_est` over the tokens in proportion to the
    /// weights, or uniformly if all weights are zero.
    pub fn normalize_node(&mut self, q: NodeId) {
        let node = &mut self.nodes[q.0];
        let rest = 1.0 - node.stop_est;
        let total: f64 = node.weight.iter().sum();
        if total > 0.0 {
            let f = rest / total;
            for (t, w) in node.trans_est.iter_mut().zip(&node.weight) {
                *t = f * w;
            }
        } else if !node.trans_est.is_empty() {
            let share = rest / node.trans_est.len() as f64;
            node.trans_est.fill(share);
        }
    }

    /// Caps every stop estimate at `1 - eps` and renormalizes the capped
    /// nodes. Returns how many nodes were capped.
    pub fn clip_stop_estimates(&mut self, eps: f64) -> usize {
        let cap = 1.0 - eps;
        let mut clipped = 0;
        for i in 0..self.nodes.len() {
            if self.nodes[i].stop_est > cap {
                self.nodes[i].stop_est = cap;
                self.normalize_node(NodeId(i));
                clipped += 1;
            }
        }
        clipped
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot(self.clone())
    }

    /// Restores the snapshot and resets colors to the initial red-blue
    /// configuration.
    pub fn restore(&mut self, snapshot: &Snapshot) {
        self.clone_from(&snapshot.0);
        self.reset_colors();
    }

    /// Root red, its children blue, everything else white.
    pub fn reset_colors(&mut self) {
        for node in &mut self.nodes {
            node.color = match node.parent {
                None => Color::Red,
                Some((p, _)) if p == NodeId::ROOT => Color::Blue,
                Some(_) => Color::White,
            };
        }
    }

    pub(crate) fn set_color(&mut self, q: NodeId, color: Color) {
        self.nodes[q.0].color = color;
    }

    pub(crate) fn set_edge(&mut self, q: NodeId, a: Token, target: Option<NodeId>) {
        self.nodes[q.0].children[a.index()] = target;
    }

    pub fn access_sequence(&self, q: NodeId) -> Vec<Token> {
        let mut x = Vec::with_capacity(self.nodes[q.0].depth);
        let mut cur = q;
        while let Some((parent, a)) = self.nodes[cur.0].parent {
            x.push(a);
            cur = parent;
        }
        x.reverse();
        x
    }

    /// Product of transition estimates along the root path of `q`, taken
    /// from the root downwards.
    pub fn prefix_prob(&self, q: NodeId) -> f64 {
        let mut edges = Vec::with_capacity(self.nodes[q.0].depth);
        let mut cur = q;
        while let Some((parent, a)) = self.nodes[cur.0].parent {
            edges.push((parent, a));
            cur = parent;
        }
        edges
            .iter()
            .rev()
            .fold(1.0, |p, &(n, a)| p * self.nodes[n.0].trans_est[a.index()])
    }

    /// Tree estimate of the probability of the access sequence of `q`.
    pub fn path_prob(&self, q: NodeId) -> f64 {
        self.prefix_prob(q) * self.nodes[q.0].stop_est
    }

    /// Largest `|path_prob(q) - access_prob(q)|` over nodes with a nonzero
    /// path product.
    pub fn estimate_deviation(&self) -> f64 {
        self.node_ids()
            .filter_map(|q| {
                let prefix = self.prefix_prob(q);
                (prefix != 0.0)
                    .then(|| (prefix * self.nodes[q.0].stop_est - self.nodes[q.0].access_prob).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Follows the original tree edges of `x` from the root.
    pub fn find(&self, x: &[Token]) -> Option<NodeId> {
        x.iter().try_fold(NodeId::ROOT, |q, &a| self.child(q, a))
    }

    /// Hash over every node field, the fringe and the extend count.
    pub fn structural_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.alphabet_size.hash(&mut h);
        self.extend_count.hash(&mut h);
        self.exclude_final_edge.hash(&mut h);
        self.fringe.hash(&mut h);
        for n in &self.nodes {
            n.parent.map(|(p, a)| (p, a.0)).hash(&mut h);
            n.children.hash(&mut h);
            n.stop_est.to_bits().hash(&mut h);
            n.access_prob.to_bits().hash(&mut h);
            n.depth.hash(&mut h);
            n.color.hash(&mut h);
            for (t, w) in n.trans_est.iter().zip(&n.weight) {
                t.to_bits().hash(&mut h);
                w.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// DOT rendering of the tree edges. Nodes show their access sequence and
    /// access probability.
    pub fn to_dot(&self, labels: Option<&[String]>) -> String {
        let name = |a: Token| match labels.and_then(|l| l.get(a.index())) {
            Some(s) => s.clone(),
            None => a.0.to_string(),
        };
        let mut out = String::from("digraph observation_tree {\n  node [shape=box];\n");
        for q in self.node_ids() {
            let x = self.access_sequence(q);
            let word = if x.is_empty() {
                "λ".to_string()
            } else {
                x.iter().map(|&a| name(a)).collect::<Vec<_>>().join(" ")
            };
            let _ = writeln!(
                out,
                "  {} [label=\"{}\\n{}\"];",
                q.0,
                escape(&word),
                self.nodes[q.0].access_prob
            );
        }
        for q in self.node_ids() {
            if let Some((p, a)) = self.nodes[q.0].parent {
                let _ = writeln!(out, "  {} -> {} [label=\"{}\"];", p.0, q.0, escape(&name(a)));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Queries `P(x)` and `P(xa)` for every token `a`.
fn query_node<T: Teacher + ?Sized>(
    teacher: &mut T,
    x: &[Token],
    k: usize,
) -> Result<(f64, Vec<f64>), TeacherError> {
    let p = teacher.string_prob(x)?;
    let mut buf = x.to_vec();
    let mut next = Vec::with_capacity(k);
    for a in 0..k {
        buf.push(Token::from(a));
        next.push(teacher.string_prob(&buf)?);
        buf.pop();
    }
    Ok((p, next))
}

fn fresh_node(
    parent: Option<(NodeId, Token)>,
    k: usize,
    p: f64,
    next: Vec<f64>,
    depth: usize,
    color: Color,
) -> ObsNode {
    ObsNode {
        parent,
        children: vec![None; k],
        stop_est: p,
        trans_est: next.clone(),
        access_prob: p,
        weight: next,
        color,
        depth,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::pdfa::tests::three_state;
    use crate::pdfa::{tokens, Pdfa};
    use crate::teacher::{CachedTeacher, ExactTeacher};
    use proptest::prelude::*;

    const A: Token = Token(0);
    const B: Token = Token(1);

    pub(crate) fn full_tree(pdfa: &Pdfa, depth: usize, exclude: bool) -> ObservationTree {
        let mut t = ExactTeacher::new(pdfa.clone());
        let mut tree = ObservationTree::new(&mut t, exclude).unwrap();
        for _ in 0..depth {
            tree.extend_fringe(&mut t).unwrap();
        }
        tree.dfs_update();
        tree
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn first_extension_queries_three_state() {
        let mut t = ExactTeacher::new(three_state());
        let mut tree = ObservationTree::new(&mut t, false).unwrap();
        assert!(close(tree.node(tree.root()).access_prob, 0.1));
        let new = tree.extend_fringe(&mut t).unwrap();
        assert_eq!(new.len(), 2);
        assert!(close(tree.node(new[0]).access_prob, 0.03));
        assert!(close(tree.node(new[1]).access_prob, 0.18));
        let b = tree.node(new[1]);
        assert!(close(b.weight[0], 0.012));
        assert!(close(b.weight[1], 0.03));
        assert!(close(b.stop_est, 0.18));
        assert_eq!(tree.extend_count(), 1);
        assert_eq!(tree.fringe(), new.as_slice());
    }

    #[test]
    fn fringe_of_k_nodes_grows_by_k_times_sigma() {
        let mut t = ExactTeacher::new(three_state());
        let mut tree = ObservationTree::new(&mut t, false).unwrap();
        tree.extend_fringe(&mut t).unwrap();
        tree.extend_fringe(&mut t).unwrap();
        let before = tree.len();
        let new = tree.extend_fringe(&mut t).unwrap();
        assert_eq!(new.len(), 8);
        assert_eq!(tree.len() - before, 8);
        assert!(new.iter().all(|&q| tree.node(q).depth == 3));
    }

    #[test]
    fn empty_alphabet_extension() {
        let p = Pdfa::builder(1, 0).stop(0, 1.0).build().unwrap();
        let mut t = ExactTeacher::new(p);
        let mut tree = ObservationTree::new(&mut t, false).unwrap();
        assert!(tree.extend_fringe(&mut t).unwrap().is_empty());
        assert!(tree.fringe().is_empty());
        tree.dfs_update();
        assert!(close(tree.node(tree.root()).stop_est, 1.0));
    }

    #[test]
    fn literal_update_path_trace() {
        // hand trace over the three-state fixture, every edge on the path counted
        let tree = full_tree(&three_state(), 2, false);
        let root = tree.node(tree.root());
        // P(b) from the root, P(b) again from node b, then P(ba) and P(bb)
        assert!(close(root.weight[1], 0.18 + 0.18 + 0.012 + 0.03));
        assert!(close(root.weight[0], 0.03 + 0.03 + 0.009 + 0.054));
        let b = tree.node(tree.find(&[B]).unwrap());
        assert!(close(b.weight[0], 0.012 + 0.012));
        assert!(close(b.weight[1], 0.03 + 0.03));
    }

    #[test]
    fn excluded_final_edge_trace() {
        let tree = full_tree(&three_state(), 2, true);
        let root = tree.node(tree.root());
        assert!(close(root.weight[1], 0.18 + 0.012 + 0.03));
        assert!(close(root.weight[0], 0.03 + 0.009 + 0.054));
        let b = tree.node(tree.find(&[B]).unwrap());
        assert!(close(b.weight[0], 0.012));
    }

    #[test]
    fn update_path_on_root_is_noop() {
        let mut tree = full_tree(&three_state(), 1, false);
        let before = tree.clone();
        tree.update_path(tree.root(), 0.5);
        assert_eq!(tree, before);
    }

    #[test]
    fn dfs_update_on_three_state() {
        let tree = full_tree(&three_state(), 1, false);
        let root = tree.node(tree.root());
        assert!(close(root.stop_est, 0.1));
        let a = tree.find(&[A]).unwrap();
        let expect = 0.03 / root.trans_est[0];
        assert!(close(tree.node(a).stop_est, expect));
        assert!(tree.estimate_deviation() <= 1e-9);
    }

    #[test]
    fn exact_child_estimate_after_normalization() {
        // with the root's transition estimate at the true 0.3, node a stops with 0.1
        let mut tree = full_tree(&three_state(), 1, true);
        tree.nodes[0].weight = vec![0.3, 0.6];
        tree.dfs_update();
        assert!(close(tree.node(tree.root()).trans_est[0], 0.3));
        assert!(close(tree.node(tree.find(&[A]).unwrap()).stop_est, 0.1));
    }

    #[test]
    fn normalize_examples() {
        let mut tree = full_tree(&three_state(), 0, false);
        tree.nodes[0].weight = vec![0.2, 0.2];
        tree.nodes[0].stop_est = 0.2;
        tree.normalize_node(tree.root());
        assert!(close(tree.node(tree.root()).trans_est[0], 0.4));
        assert!(close(tree.node(tree.root()).trans_est[1], 0.4));

        let one = Pdfa::builder(1, 1).stop(0, 1.0).build().unwrap();
        let mut tree = full_tree(&one, 0, false);
        tree.nodes[0].weight = vec![0.0];
        tree.nodes[0].stop_est = 0.25;
        tree.normalize_node(tree.root());
        assert!(close(tree.node(tree.root()).trans_est[0], 0.75));
    }

    #[test]
    fn zero_path_product_freezes_subtree() {
        // q0 never stops and never emits b: P(b..) = 0 everywhere
        let p = Pdfa::builder(1, 2)
            .stop(0, 0.5)
            .edge(0, A, 0, 0.5)
            .build()
            .unwrap();
        let mut tree = full_tree(&p, 2, false);
        let report = tree.dfs_update();
        let b = tree.find(&[B]).unwrap();
        let mut skipped = report.skipped.clone();
        skipped.sort();
        let mut expected = vec![b, tree.find(&[A, B]).unwrap()];
        expected.sort();
        assert_eq!(skipped, expected);
        assert!(tree.node(b).stop_est.is_finite());
        assert!(tree.estimate_deviation() <= 1e-9);
    }

    #[test]
    fn root_ratio_moves_towards_truth() {
        let gap = |d| {
            let t = full_tree(&three_state(), d, true);
            let r = t.node(t.root());
            (r.trans_est[0] / r.trans_est[1] - 0.5).abs()
        };
        assert!(gap(3) < gap(1));
    }

    #[test]
    fn clipping() {
        let mut tree = full_tree(&three_state(), 2, true);
        let before = tree.clone();
        assert_eq!(tree.clip_stop_estimates(1e-6), 0);
        assert_eq!(tree, before);

        let b = tree.find(&[B]).unwrap();
        tree.nodes[b.0].stop_est = 1.3;
        assert_eq!(tree.clip_stop_estimates(1e-6), 1);
        let n = tree.node(b);
        assert_eq!(n.stop_est, 1.0 - 1e-6);
        let out: f64 = n.trans_est.iter().sum();
        assert!((out - 1e-6).abs() < 1e-15);
        let w: f64 = n.weight.iter().sum();
        assert!((n.trans_est[0] - (1.0 - n.stop_est) * n.weight[0] / w).abs() < 1e-18);
    }

    #[test]
    fn snapshot_restore() {
        let mut tree = full_tree(&three_state(), 3, false);
        let snap = tree.snapshot();
        assert_eq!(snap, tree.snapshot());
        let hash = tree.structural_hash();
        for q in tree.node_ids().collect::<Vec<_>>() {
            tree.set_color(q, Color::Red);
        }
        let aa = tree.find(&[A, A]).unwrap();
        tree.set_edge(tree.find(&[A]).unwrap(), A, Some(tree.root()));
        tree.nodes[aa.0].stop_est = 0.7;
        assert_ne!(tree.structural_hash(), hash);
        tree.restore(&snap);
        assert_eq!(tree.structural_hash(), hash);
        assert_eq!(tree.node(tree.root()).color, Color::Red);
        assert_eq!(tree.node(tree.find(&[B]).unwrap()).color, Color::Blue);
        assert_eq!(tree.node(aa).color, Color::White);
    }

    #[test]
    fn counterexample_path_insertion() {
        let mut t = ExactTeacher::new(three_state());
        let mut tree = ObservationTree::new(&mut t, false).unwrap();
        tree.extend_fringe(&mut t).unwrap();
        tree.extend_fringe(&mut t).unwrap();
        let x = tokens(&[1, 0, 1, 1, 0]);
        assert_eq!(tree.insert_path(&x, &mut t).unwrap(), 3);
        assert_eq!(tree.insert_path(&x, &mut t).unwrap(), 0);
        tree.dfs_update();
        let q = tree.find(&x).unwrap();
        let truth = three_state().eval_string_prob(&x).unwrap();
        assert!((tree.path_prob(q) - truth).abs() <= 1e-9);
        // the fringe is unaffected and reuses nothing yet
        assert!(tree.fringe().iter().all(|&f| tree.node(f).depth == 2));
        let new = tree.extend_fringe(&mut t).unwrap();
        assert!(new.contains(&tree.find(&x[..3]).unwrap()));
        assert_eq!(new.len(), 8);
    }

    #[test]
    fn distinct_query_count_on_full_tree() {
        for k in 1..=3 {
            let mut t = CachedTeacher::new(ExactTeacher::new(Pdfa::random(3, 3, 9).unwrap()));
            let mut tree = ObservationTree::new(&mut t, false).unwrap();
            for _ in 0..k {
                tree.extend_fringe(&mut t).unwrap();
            }
            assert_eq!(t.stats().misses as usize, tree.len() + tree.leaf_count() * 3);
        }
    }

    #[test]
    fn failing_teacher_leaves_tree_untouched() {
        struct Limited(ExactTeacher, usize);
        impl Teacher for Limited {
            fn alphabet_size(&self) -> usize {
                self.0.alphabet_size()
            }
            fn string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError> {
                if self.1 == 0 {
                    return Err(TeacherError::Closed);
                }
                self.1 -= 1;
                self.0.string_prob(x)
            }
        }
        let mut t = Limited(ExactTeacher::new(three_state()), 4);
        let mut tree = ObservationTree::new(&mut t, false).unwrap();
        let before = tree.clone();
        assert!(tree.add_child(tree.root(), A, &mut t).is_err());
        assert_eq!(tree, before);
    }

    #[test]
    fn tree_dot_lists_every_node() {
        let tree = full_tree(&three_state(), 2, false);
        let names = vec!["a".to_string(), "b".to_string()];
        let dot = tree.to_dot(Some(&names));
        assert!(dot.contains("label=\"b a\\n"));
        assert_eq!(dot.matches("->").count(), tree.len() - 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn estimates_reproduce_queries_on_random_trees(
            seed in 0u64..1000,
            n in 1usize..5,
            k in 1usize..4,
            depth in 0usize..4,
            exclude: bool,
        ) {
            let tree = full_tree(&Pdfa::random(n, k, seed).unwrap(), depth, exclude);
            prop_assert!(tree.estimate_deviation() <= 1e-9);
        }

        #[test]
        fn weights_never_decrease(seed in 0u64..1000, depth in 1usize..4) {
            let mut t = ExactTeacher::new(Pdfa::random(3, 2, seed).unwrap());
            let mut tree = ObservationTree::new(&mut t, false).unwrap();
            for _ in 0..depth {
                let before = tree.clone();
                tree.extend_fringe(&mut t).unwrap();
                tree.dfs_update();
                for (old, new) in before.nodes.iter().zip(&tree.nodes) {
                    prop_assert!(old.weight.iter().zip(&new.weight).all(|(a, b)| b >= a));
                    prop_assert_eq!(old.access_prob.to_bits(), new.access_prob.to_bits());
                }
            }
        }
    }
}
