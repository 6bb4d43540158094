//! Finite filtered probability spaces as measure trees.
//!
//! Nodes at depth `t` are the atoms of the sigma-algebra at time `t`. A node
//! with no children is a leaf and stays an atom for all later times. Node ids
//! are dense and assigned in breadth-first order; leaves are additionally
//! indexed left to right so that the leaves below any node form a contiguous
//! range.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type NodeId = usize;

/// Relative tolerance for mass conservation in float mode.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Node<S> {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub depth: usize,
    pub mass: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiltrationTree<S> {
    nodes: Vec<Node<S>>,
    max_depth: usize,
    leaves: Vec<NodeId>,
    leaf_pos: Vec<Option<usize>>,
    leaf_range: Vec<(usize, usize)>,
    dfs_in: Vec<usize>,
    dfs_out: Vec<usize>,
}

/// Explicit branching description: each entry is a child's share of its
/// parent's mass together with the child's own branching.
#[derive(Clone, Debug, PartialEq)]
pub struct Branching<S> {
    pub children: Vec<(S, Branching<S>)>,
}

impl<S> Branching<S> {
    pub fn leaf() -> Self {
        Branching { children: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeSpec<S> {
    Dyadic { depth: usize },
    Explicit(Branching<S>),
}

/// Builds a tree from a branching description.
pub fn build_tree<S: Scalar>(spec: &TreeSpec<S>) -> Result<FiltrationTree<S>> {
    match spec {
        TreeSpec::Dyadic { depth } => {
            if *depth == 0 {
                return Err(Error::InvalidTree("depth must be at least 1".into()));
            }
            Ok(FiltrationTree::uniform(2, *depth))
        }
        TreeSpec::Explicit(b) => FiltrationTree::from_branching(b),
    }
}

impl<S: Scalar> FiltrationTree<S> {
    /// Uniform `arity`-ary tree of the given depth with equal splits.
    pub fn uniform(arity: usize, depth: usize) -> Self {
        assert!(arity >= 1);
        let mut nodes = vec![Node {
            parent: None,
            children: Vec::new(),
            depth: 0,
            mass: S::one(),
        }];
        let share = S::from_ratio(1, arity as i64);
        let mut frontier = vec![0];
        for d in 1..=depth {
            let mut next = Vec::with_capacity(frontier.len() * arity);
            for &p in &frontier {
                let mass = nodes[p].mass.clone() * &share;
                for _ in 0..arity {
                    let id = nodes.len();
                    nodes.push(Node {
                        parent: Some(p),
                        children: Vec::new(),
                        depth: d,
                        mass: mass.clone(),
                    });
                    nodes[p].children.push(id);
                    next.push(id);
                }
            }
            frontier = next;
        }
        Self::index(nodes)
    }

    pub fn dyadic(depth: usize) -> Self {
        Self::uniform(2, depth)
    }

    pub fn from_branching(spec: &Branching<S>) -> Result<Self> {
        if spec.children.is_empty() {
            return Err(Error::InvalidTree("empty branching: root has no children".into()));
        }
        let mut nodes = vec![Node {
            parent: None,
            children: Vec::new(),
            depth: 0,
            mass: S::one(),
        }];
        let mut queue: VecDeque<(NodeId, &Branching<S>)> = VecDeque::new();
        queue.push_back((0, spec));
        while let Some((id, b)) = queue.pop_front() {
            if b.children.is_empty() {
                continue;
            }
            let mut total = S::zero();
            for (ratio, _) in &b.children {
                if *ratio <= S::zero() {
                    return Err(Error::InvalidTree(format!(
                        "nonpositive ratio {ratio:?} below node {id}"
                    )));
                }
                total = total + ratio;
            }
            if !close_to(&total, &S::one()) {
                return Err(Error::InvalidTree(format!(
                    "ratios below node {id} sum to {total:?}, not 1"
                )));
            }
            for (ratio, child) in &b.children {
                let cid = nodes.len();
                let mass = nodes[id].mass.clone() * ratio;
                let depth = nodes[id].depth + 1;
                nodes.push(Node {
                    parent: Some(id),
                    children: Vec::new(),
                    depth,
                    mass,
                });
                nodes[id].children.push(cid);
                queue.push_back((cid, child));
            }
        }
        Ok(Self::index(nodes))
    }

    /// Validates raw nodes (ids must be breadth-first) and builds the indices.
    pub fn from_nodes(nodes: Vec<Node<S>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidTree("no nodes".into()));
        }
        if nodes[0].parent.is_some() || nodes[0].depth != 0 {
            return Err(Error::InvalidTree("node 0 must be the root at depth 0".into()));
        }
        if nodes[0].mass != S::one() {
            return Err(Error::InvalidTree("root mass must be 1".into()));
        }
        let mut expected_next = 1;
        for (id, node) in nodes.iter().enumerate() {
            if node.mass <= S::zero() {
                return Err(Error::InvalidTree(format!("node {id} has nonpositive mass")));
            }
            if id > 0 {
                let p = node.parent.ok_or_else(|| {
                    Error::InvalidTree(format!("node {id} has no parent"))
                })?;
                if p >= id || !nodes[p].children.contains(&id) {
                    return Err(Error::InvalidTree(format!(
                        "node {id} is not listed as a child of {p}"
                    )));
                }
                if node.depth != nodes[p].depth + 1 {
                    return Err(Error::InvalidTree(format!("node {id} has wrong depth")));
                }
            }
            // breadth-first: children of node k are the next ids handed out
            for &c in &node.children {
                if c != expected_next {
                    return Err(Error::InvalidTree(format!(
                        "node ids are not breadth-first at child {c} of {id}"
                    )));
                }
                if nodes.get(c).and_then(|n| n.parent) != Some(id) {
                    return Err(Error::InvalidTree(format!("child {c} does not point back to {id}")));
                }
                expected_next += 1;
            }
            if !node.children.is_empty() {
                let sum = node
                    .children
                    .iter()
                    .fold(S::zero(), |acc, &c| acc + &nodes[c].mass);
                if !close_to(&sum, &node.mass) {
                    return Err(Error::InvalidTree(format!(
                        "children of node {id} do not carry its mass"
                    )));
                }
            }
        }
        if expected_next != nodes.len() {
            return Err(Error::InvalidTree("unreachable nodes".into()));
        }
        Ok(Self::index(nodes))
    }

    fn index(nodes: Vec<Node<S>>) -> Self {
        let n = nodes.len();
        let max_depth = nodes.iter().map(|x| x.depth).max().unwrap_or(0);
        let mut leaves = Vec::new();
        let mut leaf_pos = vec![None; n];
        let mut leaf_range = vec![(0, 0); n];
        let mut dfs_in = vec![0; n];
        let mut dfs_out = vec![0; n];
        // iterative pre-order walk; the bool marks the exit visit
        let mut stack = vec![(0usize, false)];
        let mut clock = 0;
        while let Some((id, exit)) = stack.pop() {
            if exit {
                leaf_range[id].1 = leaves.len();
                dfs_out[id] = clock;
                continue;
            }
            dfs_in[id] = clock;
            clock += 1;
            leaf_range[id].0 = leaves.len();
            if nodes[id].children.is_empty() {
                leaf_pos[id] = Some(leaves.len());
                leaves.push(id);
            }
            stack.push((id, true));
            for &c in nodes[id].children.iter().rev() {
                stack.push((c, false));
            }
        }
        FiltrationTree {
            nodes,
            max_depth,
            leaves,
            leaf_pos,
            leaf_range,
            dfs_in,
            dfs_out,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn node(&self, id: NodeId) -> &Node<S> {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn mass(&self, id: NodeId) -> &S {
        &self.nodes[id].mass
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.nodes[id].depth
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Position of `id` in the left-to-right leaf order.
    pub fn leaf_index(&self, id: NodeId) -> Option<usize> {
        self.leaf_pos[id]
    }

    /// Half-open range of leaf positions below `id`.
    pub fn leaf_range(&self, id: NodeId) -> std::ops::Range<usize> {
        let (a, b) = self.leaf_range[id];
        a..b
    }

    /// True if `a` is an ancestor of `b` or equal to it.
    pub fn is_ancestor_or_self(&self, a: NodeId, b: NodeId) -> bool {
        self.dfs_in[a] <= self.dfs_in[b] && self.dfs_in[b] < self.dfs_out[a]
    }

    /// Nodes of the subtree rooted at `id`, in pre-order.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    /// Root-to-`id` path.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Atoms of the sigma-algebra at time `t`, left to right.
    pub fn atoms_at(&self, t: usize) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            if self.nodes[n].depth == t || self.is_leaf(n) {
                out.push(n);
            } else {
                stack.extend(self.nodes[n].children.iter().rev());
            }
        }
        out
    }

    /// `E[f | node]` for vector leaf values, summed directly over the leaves.
    pub fn conditional_expectation(&self, leaf_values: &[Vec<S>], node: NodeId) -> Vec<S> {
        let range = self.leaf_range(node);
        let dim = leaf_values.first().map_or(0, Vec::len);
        let mut acc = vec![S::zero(); dim];
        for pos in range {
            let m = &self.nodes[self.leaves[pos]].mass;
            for (a, v) in acc.iter_mut().zip(&leaf_values[pos]) {
                *a = a.clone() + &(v.clone() * m);
            }
        }
        let mass = &self.nodes[node].mass;
        acc.into_iter().map(|a| a / mass).collect()
    }

    /// Scalar version of [`Self::conditional_expectation`].
    pub fn conditional_expectation_scalar(&self, leaf_values: &[S], node: NodeId) -> S {
        let sum = self
            .leaf_range(node)
            .fold(S::zero(), |acc, pos| {
                acc + &(leaf_values[pos].clone() * &self.nodes[self.leaves[pos]].mass)
            });
        sum / &self.nodes[node].mass
    }

    /// Closure of scalar leaf values: `E[f | node]` at every node, bottom-up.
    pub fn close_scalar(&self, leaf_values: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            out[id] = match self.leaf_pos[id] {
                Some(pos) => leaf_values[pos].clone(),
                None => {
                    let sum = node.children.iter().fold(S::zero(), |acc, &c| {
                        acc + &(out[c].clone() * &self.nodes[c].mass)
                    });
                    sum / &node.mass
                }
            };
        }
        out
    }

    /// `E[f]` for scalar leaf values.
    pub fn expectation(&self, leaf_values: &[S]) -> S {
        self.leaves
            .iter()
            .zip(leaf_values)
            .fold(S::zero(), |acc, (&l, v)| acc + &(v.clone() * &self.nodes[l].mass))
    }

    /// Leaf masses in leaf order.
    pub fn leaf_masses(&self) -> Vec<S> {
        self.leaves.iter().map(|&l| self.nodes[l].mass.clone()).collect()
    }

    /// Interval `[a, b)` of `[0, 1)` covered by each node when children are
    /// laid out left to right.
    pub fn intervals(&self) -> Vec<(S, S)> {
        let mut out = vec![(S::zero(), S::zero()); self.nodes.len()];
        out[0] = (S::zero(), S::one());
        for id in 0..self.nodes.len() {
            let mut left = out[id].0.clone();
            for &c in &self.nodes[id].children {
                let right = left.clone() + &self.nodes[c].mass;
                out[c] = (left, right.clone());
                left = right;
            }
        }
        out
    }

    pub fn to_file(&self) -> TreeFile {
        TreeFile {
            max_depth: self.max_depth,
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| NodeFile {
                    id,
                    parent: n.parent,
                    depth: n.depth,
                    mass: n.mass.to_decimal_string(),
                    children: n.children.clone(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: &TreeFile) -> Result<Self> {
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for (pos, n) in file.nodes.iter().enumerate() {
            if n.id != pos {
                return Err(Error::InvalidTree(format!("node at position {pos} has id {}", n.id)));
            }
            nodes.push(Node {
                parent: n.parent,
                children: n.children.clone(),
                depth: n.depth,
                mass: S::parse_decimal(&n.mass)?,
            });
        }
        let tree = Self::from_nodes(nodes)?;
        if tree.max_depth != file.max_depth {
            return Err(Error::InvalidTree(format!(
                "maxDepth is {} but nodes reach depth {}",
                file.max_depth, tree.max_depth
            )));
        }
        Ok(tree)
    }
}

fn close_to<S: Scalar>(a: &S, b: &S) -> bool {
    a.approx_le(b, MASS_TOL, b) && b.approx_le(a, MASS_TOL, b)
}

/// JSON form of a tree. Masses are decimal (or `num/den`) strings so exact
/// trees round-trip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TreeFile {
    pub max_depth: usize,
    pub nodes: Vec<NodeFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFile {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub mass: String,
    pub children: Vec<NodeId>,
}

/// A stopping time, stored as the antichain of nodes where it stops. Paths
/// through none of them have `T = infinity`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoppingTime {
    stops: Vec<NodeId>,
}

impl StoppingTime {
    /// `T = infinity` everywhere.
    pub fn never() -> Self {
        StoppingTime { stops: Vec::new() }
    }

    /// `T = 0`.
    pub fn zero() -> Self {
        StoppingTime { stops: vec![0] }
    }

    pub fn new<S: Scalar>(tree: &FiltrationTree<S>, mut stops: Vec<NodeId>) -> Result<Self> {
        if let Some(&bad) = stops.iter().find(|&&s| s >= tree.len()) {
            return Err(Error::InvalidStoppingTime(format!("unknown node {bad}")));
        }
        stops.sort_by_key(|&s| tree.dfs_in[s]);
        stops.dedup();
        // in pre-order an ancestor comes right before some descendant block
        for w in stops.windows(2) {
            if tree.is_ancestor_or_self(w[0], w[1]) {
                return Err(Error::InvalidStoppingTime(format!(
                    "node {} lies below stop node {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(StoppingTime { stops })
    }

    /// Stop nodes, left to right.
    pub fn stops(&self) -> &[NodeId] {
        &self.stops
    }

    pub fn is_never(&self) -> bool {
        self.stops.is_empty()
    }

    /// Value of `T` on the path to `leaf` (`None` = infinity).
    pub fn at_leaf<S: Scalar>(&self, tree: &FiltrationTree<S>, leaf: NodeId) -> Option<usize> {
        self.stop_above(tree, leaf).map(|s| tree.depth(s))
    }

    /// The stop node on the path to `node`, if `T` has happened by then.
    pub fn stop_above<S: Scalar>(&self, tree: &FiltrationTree<S>, node: NodeId) -> Option<NodeId> {
        // the last stop whose pre-order index is <= node's is the only candidate
        let key = tree.dfs_in[node];
        let idx = self.stops.partition_point(|&s| tree.dfs_in[s] <= key);
        let cand = *self.stops.get(idx.checked_sub(1)?)?;
        tree.is_ancestor_or_self(cand, node).then_some(cand)
    }

    /// `P(T < infinity)`.
    pub fn mass<S: Scalar>(&self, tree: &FiltrationTree<S>) -> S {
        self.stops.iter().fold(S::zero(), |acc, &s| acc + tree.mass(s))
    }
}

/// First time strictly after `start` at which `predicate` holds. With no
/// `start` the search begins strictly after time 0.
pub fn hitting_time<S: Scalar>(
    tree: &FiltrationTree<S>,
    predicate: impl Fn(NodeId) -> bool,
    start: Option<&StoppingTime>,
) -> StoppingTime {
    let roots: Vec<NodeId> = match start {
        Some(t) => t.stops().to_vec(),
        None => vec![tree.root()],
    };
    let mut stops = Vec::new();
    for r in roots {
        let mut stack: Vec<NodeId> = tree.children(r).iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            if predicate(n) {
                stops.push(n);
            } else {
                stack.extend(tree.children(n).iter().rev());
            }
        }
    }
    StoppingTime { stops }
}

/// Atoms of the stopped sigma-algebra inside `{T < infinity}`.
pub fn stopped_atoms(t: &StoppingTime) -> &[NodeId] {
    t.stops()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    type Q = Rational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn skewed() -> FiltrationTree<Q> {
        // root -> (1/8 leaf, 7/8 -> (1/2, 1/2))
        let b = Branching {
            children: vec![
                (q(1, 8), Branching::leaf()),
                (
                    q(7, 8),
                    Branching {
                        children: vec![(q(1, 2), Branching::leaf()), (q(1, 2), Branching::leaf())],
                    },
                ),
            ],
        };
        FiltrationTree::from_branching(&b).unwrap()
    }

    #[test]
    fn dyadic_depth_one() {
        let t = build_tree::<Q>(&TreeSpec::Dyadic { depth: 1 }).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.leaves(), &[1, 2]);
        assert_eq!(t.mass(1), &q(1, 2));
        assert_eq!(t.mass(2), &q(1, 2));
    }

    #[test]
    fn explicit_eighth_split() {
        let b = Branching {
            children: vec![(q(1, 8), Branching::leaf()), (q(7, 8), Branching::leaf())],
        };
        let t = build_tree(&TreeSpec::Explicit(b)).unwrap();
        assert_eq!(t.mass(1), &q(1, 8));
        assert_eq!(t.mass(2), &q(7, 8));
    }

    #[test]
    fn dyadic_depth_ten_masses_sum_to_one() {
        let t = FiltrationTree::<Q>::dyadic(10);
        assert_eq!(t.num_leaves(), 1024);
        assert!(t.leaves().iter().all(|&l| *t.mass(l) == q(1, 1024)));
        assert_eq!(t.expectation(&vec![q(1, 1); 1024]), q(1, 1));
    }

    #[test]
    fn build_rejects_bad_specs() {
        let bad_sum = Branching {
            children: vec![(q(1, 2), Branching::leaf()), (q(1, 4), Branching::leaf())],
        };
        assert!(FiltrationTree::from_branching(&bad_sum).is_err());
        let neg = Branching {
            children: vec![(q(3, 2), Branching::leaf()), (q(-1, 2), Branching::leaf())],
        };
        assert!(FiltrationTree::from_branching(&neg).is_err());
        assert!(FiltrationTree::<Q>::from_branching(&Branching::leaf()).is_err());
        assert!(build_tree::<Q>(&TreeSpec::Dyadic { depth: 0 }).is_err());
    }

    #[test]
    fn atoms_at_examples() {
        let t = FiltrationTree::<Q>::dyadic(2);
        assert_eq!(t.atoms_at(1).len(), 2);
        assert!(t.atoms_at(1).iter().all(|&a| *t.mass(a) == q(1, 2)));
        assert_eq!(t.atoms_at(5), t.leaves().to_vec());

        let s = skewed();
        let masses: Vec<Q> = s.atoms_at(2).iter().map(|&a| s.mass(a).clone()).collect();
        assert_eq!(masses, vec![q(1, 8), q(7, 16), q(7, 16)]);
    }

    #[test]
    fn conditional_expectation_examples() {
        let t = FiltrationTree::<Q>::dyadic(1);
        assert_eq!(t.conditional_expectation(&[vec![q(1, 1)], vec![q(3, 1)]], 0), vec![q(2, 1)]);
        let b = Branching {
            children: vec![(q(1, 8), Branching::leaf()), (q(7, 8), Branching::leaf())],
        };
        let t = FiltrationTree::from_branching(&b).unwrap();
        assert_eq!(t.conditional_expectation_scalar(&[q(8, 1), q(0, 1)], 0), q(1, 1));
        let s = skewed();
        let c = vec![q(5, 3); s.num_leaves()];
        assert!(s.close_scalar(&c).iter().all(|v| *v == q(5, 3)));
    }

    #[test]
    fn stopping_time_antichain_is_enforced() {
        let t = FiltrationTree::<Q>::dyadic(3);
        assert!(StoppingTime::new(&t, vec![1, 3]).is_err());
        let st = StoppingTime::new(&t, vec![2, 3]).unwrap();
        assert_eq!(st.mass(&t), q(3, 4));
        assert_eq!(st.at_leaf(&t, 7), Some(2));
        assert_eq!(st.at_leaf(&t, 9), None);
        assert_eq!(st.at_leaf(&t, 13), Some(1));
    }

    #[test]
    fn hitting_time_examples() {
        let t = FiltrationTree::<Q>::dyadic(1);
        assert!(hitting_time(&t, |_| false, None).is_never());
        let st = hitting_time(&t, |n| t.depth(n) == 1, None);
        assert_eq!(st.stops(), &[1, 2]);
        assert_eq!(stopped_atoms(&st).len(), 2);
        assert_eq!(st.mass(&t), q(1, 1));
        assert!(stopped_atoms(&StoppingTime::never()).is_empty());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = skewed();
        let file = s.to_file();
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"0.4375\""));
        let back: TreeFile = serde_json::from_str(&text).unwrap();
        assert_eq!(FiltrationTree::<Q>::from_file(&back).unwrap(), s);
        let mut broken = file.clone();
        broken.nodes[1].mass = "0.2".into();
        assert!(FiltrationTree::<Q>::from_file(&broken).is_err());
    }

    #[test]
    fn intervals_follow_masses() {
        let s = skewed();
        let iv = s.intervals();
        assert_eq!(iv[1], (q(0, 1), q(1, 8)));
        assert_eq!(iv[4], (q(9, 16), q(1, 1)));
    }
}
