//! Stopping-time decomposition of a subordinate pair into a sparse operator.
//!
//! Starting from the root, each atom `A` carries a scale `c_A = |X|_A` and an
//! offset `o_A`. Below `A` the restarted processes are
//! `(Y_n - Y_A + o_A) / c_A` and `X_n / c_A`; the next atoms are the first
//! nodes where either exceeds the level (4 by default) in norm. At a stop on
//! the edge `P -> n` the offset becomes `r X_n`, where `r` is the rank-one
//! contraction mapping `dX` to `dY`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::martingale::{is_differentially_subordinate, maximal_function_sq, Martingale};
use crate::scalar::{sqrt_le_sum, Scalar, FLOAT_TOL};
use crate::tree::{FiltrationTree, NodeId, StoppingTime};

/// Hitting level for the restarted processes; the sparsity bound is
/// `2 / level` and the domination constant `2 * level`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecomposeOptions<S> {
    pub level: S,
}

impl<S: Scalar> Default for DecomposeOptions<S> {
    fn default() -> Self {
        DecomposeOptions {
            level: S::from_i64(4),
        }
    }
}

impl<S: Scalar> DecomposeOptions<S> {
    pub fn sparsity_bound(&self) -> S {
        S::from_i64(2) / &self.level
    }

    pub fn domination_constant(&self) -> S {
        S::from_i64(2) * &self.level
    }
}

/// `v -> dy <dx, v> / |dx|^2`, or zero when either increment vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpCorrection<S> {
    pub dy: Vec<S>,
    pub dx: Vec<S>,
}

impl<S: Scalar> JumpCorrection<S> {
    pub fn new(dy: Vec<S>, dx: Vec<S>) -> Self {
        JumpCorrection { dy, dx }
    }

    pub fn is_zero(&self) -> bool {
        self.dy.iter().all(Scalar::is_zero) || self.dx.iter().all(Scalar::is_zero)
    }

    pub fn apply(&self, v: &[S]) -> Vec<S> {
        if self.is_zero() {
            return vec![S::zero(); v.len()];
        }
        let k = linalg::dot(&self.dx, v) / &linalg::norm_sq(&self.dx);
        linalg::scale(&self.dy, &k)
    }

    pub fn to_matrix(&self) -> Matrix<S> {
        let d = self.dx.len();
        if self.is_zero() {
            return Matrix::zeros(d);
        }
        let inv = S::one() / &linalg::norm_sq(&self.dx);
        Matrix::outer(&self.dy, &linalg::scale(&self.dx, &inv))
    }

    /// `||r|| = |dy| / |dx| <= 1`.
    pub fn is_contraction(&self) -> bool {
        if self.is_zero() {
            return true;
        }
        let (a, b) = (linalg::norm_sq(&self.dy), linalg::norm_sq(&self.dx));
        a.approx_le(&b, FLOAT_TOL, &b)
    }
}

/// An atom of `F_{T^j}` inside `E_j` together with its restart data.
#[derive(Clone, Debug, PartialEq)]
pub struct StopAtom<S> {
    pub node: NodeId,
    /// `|X|_A`.
    pub scale: S,
    /// Unnormalized start value of the restarted `Y`.
    pub offset: Vec<S>,
    /// `None` at the root.
    pub jump: Option<JumpCorrection<S>>,
}

/// Per-atom ratios `P(A cap E_{j+1}) / P(A)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport<S> {
    pub ratios: Vec<Vec<S>>,
    pub max_ratio: S,
    /// `(j, node)` of the worst atom when the bound fails.
    pub witness: Option<(i64, NodeId)>,
    pub bound: S,
}

impl<S: Scalar> SparsityReport<S> {
    pub fn holds(&self) -> bool {
        self.witness.is_none()
    }
}

/// Invariants recorded by [`decompose`].
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate<S> {
    pub sparsity: SparsityReport<S>,
    /// Each restarted pair is subordinate on its atom.
    pub restart_subordinate: bool,
    /// `|X_A| <= c_A` and `|o_A| <= c_A` at every restart.
    pub normalized_starts: bool,
    /// `P(E_j) <= bound^{j+1}`.
    pub progress: bool,
    pub depth_ok: bool,
    pub failures: Vec<String>,
}

impl<S: Scalar> Certificate<S> {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator<S> {
    tree: Arc<FiltrationTree<S>>,
    options: DecomposeOptions<S>,
    /// `levels[k]` holds the atoms of `T^{k-1}`; `levels[0]` is the root.
    levels: Vec<StoppingTime>,
    /// `below[k][i]`: atoms of level `k + 1` under atom `i` of level `k`.
    below: Vec<Vec<Vec<NodeId>>>,
    atoms: Option<Vec<Vec<StopAtom<S>>>>,
    certificate: Option<Certificate<S>>,
}

impl<S: Scalar> SparseOperator<S> {
    /// Hand-built operator. The leading `[root]` level may be given or left
    /// implicit; every later level must lie strictly below the previous one.
    pub fn from_stop_sets(tree: Arc<FiltrationTree<S>>, levels: Vec<Vec<NodeId>>) -> Result<Self> {
        Self::from_stop_sets_with(tree, levels, DecomposeOptions::default())
    }

    pub fn from_stop_sets_with(
        tree: Arc<FiltrationTree<S>>,
        mut levels: Vec<Vec<NodeId>>,
        options: DecomposeOptions<S>,
    ) -> Result<Self> {
        if levels.first().map(|l| l.as_slice()) != Some(&[0][..]) {
            levels.insert(0, vec![0]);
        }
        while levels.last().is_some_and(Vec::is_empty) {
            levels.pop();
        }
        let mut stops = Vec::with_capacity(levels.len());
        for l in levels {
            stops.push(StoppingTime::new(&tree, l)?);
        }
        let below = nest(&tree, &stops)?;
        Ok(SparseOperator {
            tree,
            options,
            levels: stops,
            below,
            atoms: None,
            certificate: None,
        })
    }

    pub fn tree(&self) -> &Arc<FiltrationTree<S>> {
        &self.tree
    }

    pub fn options(&self) -> &DecomposeOptions<S> {
        &self.options
    }

    /// Number of levels including `T^{-1} = 0`.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Atoms of level `k` (that is `j = k - 1`), left to right.
    pub fn level(&self, k: usize) -> &[NodeId] {
        self.levels[k].stops()
    }

    pub fn stopping_time(&self, k: usize) -> &StoppingTime {
        &self.levels[k]
    }

    pub fn levels(&self) -> Vec<Vec<NodeId>> {
        self.levels.iter().map(|t| t.stops().to_vec()).collect()
    }

    /// Atoms of level `k + 1` under the `i`-th atom of level `k`.
    pub fn atoms_below(&self, k: usize, i: usize) -> &[NodeId] {
        self.below.get(k).map_or(&[], |b| b[i].as_slice())
    }

    /// Restart data when built by [`decompose`].
    pub fn atoms(&self) -> Option<&[Vec<StopAtom<S>>]> {
        self.atoms.as_deref()
    }

    pub fn certificate(&self) -> Option<&Certificate<S>> {
        self.certificate.as_ref()
    }

    /// `P(E_j)` for `j = k - 1`.
    pub fn region_mass(&self, k: usize) -> S {
        self.levels[k].mass(&self.tree)
    }

    /// `P(S_A) = P(A) - P(A cap E_{j+1})` for every atom.
    pub fn free_masses(&self) -> Vec<Vec<S>> {
        (0..self.levels.len())
            .map(|k| {
                self.level(k)
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| {
                        self.atoms_below(k, i)
                            .iter()
                            .fold(self.tree.mass(a).clone(), |acc, &b| acc - self.tree.mass(b))
                    })
                    .collect()
            })
            .collect()
    }
}

/// For each level, the next-level atoms under each atom; errors if some
/// atom is not strictly below the previous level.
fn nest<S: Scalar>(tree: &FiltrationTree<S>, levels: &[StoppingTime]) -> Result<Vec<Vec<Vec<NodeId>>>> {
    let mut below = Vec::with_capacity(levels.len());
    for k in 0..levels.len() {
        let cur = levels[k].stops();
        let mut slots = vec![Vec::new(); cur.len()];
        if let Some(next) = levels.get(k + 1) {
            let index: HashMap<NodeId, usize> = cur.iter().enumerate().map(|(i, &a)| (a, i)).collect();
            for &b in next.stops() {
                let parent = tree.parent(b);
                let above = parent.and_then(|p| levels[k].stop_above(tree, p));
                match above {
                    Some(a) => slots[index[&a]].push(b),
                    None => {
                        return Err(Error::InvalidStoppingTime(format!(
                            "level {} atom {b} is not strictly below level {}",
                            k as i64,
                            k as i64 - 1
                        )))
                    }
                }
            }
        }
        below.push(slots);
    }
    Ok(below)
}

/// Runs the stopping-time recursion with the default level 4.
pub fn decompose<S: Scalar>(x: &Martingale<S>, y: &Martingale<S>) -> Result<SparseOperator<S>> {
    decompose_with(x, y, &DecomposeOptions::default())
}

pub fn decompose_with<S: Scalar>(
    x: &Martingale<S>,
    y: &Martingale<S>,
    options: &DecomposeOptions<S>,
) -> Result<SparseOperator<S>> {
    if let Some(w) = is_differentially_subordinate(y, x, FLOAT_TOL)? {
        return Err(Error::NotSubordinate(w));
    }
    let tree = x.tree().clone();
    let closure = x.norm_closure()?;
    let c = closure.values();
    if c[0].is_zero() {
        return Err(Error::ZeroProcess);
    }
    let lvl_sq = options.level.clone() * &options.level;
    let mut atoms: Vec<Vec<StopAtom<S>>> = vec![vec![StopAtom {
        node: 0,
        scale: c[0].clone(),
        offset: y.value(0).to_vec(),
        jump: None,
    }]];
    loop {
        let mut next = Vec::new();
        for a in atoms.last().expect("at least the root level") {
            // |X|_A = 0: X vanishes below A and so do the Y increments
            if a.scale.is_zero() {
                continue;
            }
            let thr = lvl_sq.clone() * &a.scale * &a.scale;
            let base = linalg::sub(&a.offset, y.value(a.node));
            let mut stack: Vec<NodeId> = tree.children(a.node).iter().rev().copied().collect();
            while let Some(n) = stack.pop() {
                let shifted = linalg::add(y.value(n), &base);
                if linalg::norm_sq(&shifted) > thr || x.norm_sq(n) > thr {
                    let jump = JumpCorrection::new(y.increment(n), x.increment(n));
                    next.push(StopAtom {
                        node: n,
                        scale: c[n].clone(),
                        offset: jump.apply(x.value(n)),
                        jump: Some(jump),
                    });
                } else {
                    stack.extend(tree.children(n).iter().rev());
                }
            }
        }
        if next.is_empty() {
            break;
        }
        atoms.push(next);
    }
    let levels: Vec<Vec<NodeId>> = atoms.iter().map(|l| l.iter().map(|a| a.node).collect()).collect();
    let mut op = SparseOperator::from_stop_sets_with(tree, levels, options.clone())?;
    op.certificate = Some(certify(&op, x, y, &atoms));
    op.atoms = Some(atoms);
    Ok(op)
}

fn certify<S: Scalar>(
    op: &SparseOperator<S>,
    x: &Martingale<S>,
    y: &Martingale<S>,
    atoms: &[Vec<StopAtom<S>>],
) -> Certificate<S> {
    let tree = op.tree();
    let mut failures = Vec::new();

    let sparsity = verify_sparsity(op);
    if let Some((j, node)) = sparsity.witness {
        failures.push(format!(
            "sparsity: atom {node} at level {j} has ratio {}",
            sparsity.max_ratio.to_decimal_string()
        ));
    }

    // every edge below a restart must be subordinate; track whole subtrees
    let mut edge_ok = vec![true; tree.len()];
    for n in 1..tree.len() {
        let dx = linalg::norm_sq(&x.increment(n));
        let dy = linalg::norm_sq(&y.increment(n));
        let p = tree.parent(n).expect("non-root has a parent");
        let s = x.norm_sq(p) + &x.norm_sq(n) + &y.norm_sq(p) + &y.norm_sq(n);
        edge_ok[n] = dy.approx_le(&dx, FLOAT_TOL, &s);
    }
    let mut subtree_ok = vec![true; tree.len()];
    for n in (0..tree.len()).rev() {
        subtree_ok[n] = tree.children(n).iter().all(|&ch| edge_ok[ch] && subtree_ok[ch]);
    }

    let mut restart_subordinate = true;
    let mut normalized_starts = true;
    for (k, level) in atoms.iter().enumerate() {
        for a in level {
            let xs = x.norm_sq(a.node);
            let os = linalg::norm_sq(&a.offset);
            let cs = a.scale.clone() * &a.scale;
            let scale = xs.clone() + &os;
            if !os.approx_le(&xs, FLOAT_TOL, &scale) || !subtree_ok[a.node] {
                restart_subordinate = false;
                failures.push(format!(
                    "restart subordination: atom {} at level {}",
                    a.node,
                    k as i64 - 1
                ));
            }
            if !xs.approx_le(&cs, FLOAT_TOL, &cs) || !os.approx_le(&cs, FLOAT_TOL, &cs) {
                normalized_starts = false;
                failures.push(format!("normalized start: atom {} at level {}", a.node, k as i64 - 1));
            }
        }
    }

    let mut progress = true;
    let mut bound = S::one();
    for k in 1..op.num_levels() {
        bound = bound * &sparsity.bound;
        let m = op.region_mass(k);
        if !m.approx_le(&bound, FLOAT_TOL, &bound) {
            progress = false;
            failures.push(format!(
                "progress: P(E_{}) = {} exceeds {}",
                k - 1,
                m.to_decimal_string(),
                bound.to_decimal_string()
            ));
        }
    }

    let depth_ok = op.num_levels() <= tree.max_depth() + 1;
    if !depth_ok {
        failures.push(format!("depth: {} levels on a depth-{} tree", op.num_levels(), tree.max_depth()));
    }

    Certificate {
        sparsity,
        restart_subordinate,
        normalized_starts,
        progress,
        depth_ok,
        failures,
    }
}

/// `S(f) = sum_j f_{T^j} 1_{E_j}` per leaf, with `f_{T^j}` the conditional
/// expectation at the level-`j` atom above the leaf.
pub fn evaluate_sparse<S: Scalar>(op: &SparseOperator<S>, f: &[S]) -> Result<Vec<S>> {
    let tree = op.tree();
    if f.len() != tree.num_leaves() {
        return Err(Error::LeafCount {
            expected: tree.num_leaves(),
            found: f.len(),
        });
    }
    if let Some(pos) = f.iter().position(|v| *v < S::zero()) {
        return Err(Error::NegativeValue(pos));
    }
    Ok(evaluate_closed(op, &tree.close_scalar(f)))
}

/// [`evaluate_sparse`] from node values that are already closed.
pub(crate) fn evaluate_closed<S: Scalar>(op: &SparseOperator<S>, closed: &[S]) -> Vec<S> {
    let tree = op.tree();
    let mut out = vec![S::zero(); tree.num_leaves()];
    for k in 0..op.num_levels() {
        for &a in op.level(k) {
            for pos in tree.leaf_range(a) {
                out[pos] = out[pos].clone() + &closed[a];
            }
        }
    }
    out
}

/// Largest `P(A cap E_{j+1}) / P(A)` over all atoms, with a witness when it
/// exceeds the bound.
pub fn verify_sparsity<S: Scalar>(op: &SparseOperator<S>) -> SparsityReport<S> {
    let tree = op.tree();
    let bound = op.options.sparsity_bound();
    let mut ratios = Vec::with_capacity(op.num_levels());
    let mut max_ratio = S::zero();
    let mut worst: Option<(i64, NodeId)> = None;
    for k in 0..op.num_levels() {
        let mut row = Vec::with_capacity(op.level(k).len());
        for (i, &a) in op.level(k).iter().enumerate() {
            let hit = op
                .atoms_below(k, i)
                .iter()
                .fold(S::zero(), |acc, &b| acc + tree.mass(b));
            let r = hit / tree.mass(a);
            if worst.is_none() || r > max_ratio {
                max_ratio = r.clone();
                worst = Some((k as i64 - 1, a));
            }
            row.push(r);
        }
        ratios.push(row);
    }
    let fails = !max_ratio.approx_le(&bound, FLOAT_TOL, &bound);
    SparsityReport {
        ratios,
        max_ratio,
        witness: if fails { worst } else { None },
        bound,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominationReport<S> {
    /// `min over leaves of 2 level S(|X|) - Y*`.
    pub margin: S,
    pub worst_leaf: NodeId,
    /// `Y* <= 2 level S(|X|)` on every leaf.
    pub holds: bool,
    /// `m_j <= 2 level c_j + m_{j+1}` along every path.
    pub ledger_ok: bool,
    /// Three-term split at every stopping edge.
    pub split_ok: bool,
    pub failures: Vec<String>,
}

impl<S: Scalar> DominationReport<S> {
    pub fn passes(&self) -> bool {
        self.holds && self.ledger_ok && self.split_ok
    }
}

/// Checks `Y* <= 8 S(|X|)` leafwise, the per-level ledger, and the split of
/// each stopped value. `op` must come from `decompose(x, y)`.
pub fn verify_pointwise_domination<S: Scalar>(
    y: &Martingale<S>,
    op: &SparseOperator<S>,
    x: &Martingale<S>,
) -> Result<DominationReport<S>> {
    let fresh = decompose_with(x, y, op.options())?;
    if fresh.levels != op.levels {
        return Err(Error::OperatorMismatch);
    }
    let atoms = fresh.atoms.as_ref().expect("decompose records atoms");
    let tree = x.tree();
    let lvl = op.options.level.clone();
    let two_lvl = op.options.domination_constant();
    let closure = x.norm_closure()?;
    let mut failures = Vec::new();

    // Y* <= 2 level S(|X|), compared on squares
    let s = evaluate_closed(op, closure.values());
    let ystar = maximal_function_sq(y).leaf_values();
    let mut holds = true;
    let mut margin: Option<S> = None;
    let mut worst_leaf = tree.leaves()[0];
    for (pos, &leaf) in tree.leaves().iter().enumerate() {
        let rhs = two_lvl.clone() * &s[pos];
        let rhs_sq = rhs.clone() * &rhs;
        if !ystar[pos].approx_le(&rhs_sq, FLOAT_TOL, &rhs_sq) {
            holds = false;
            failures.push(format!("domination fails at leaf {leaf}"));
        }
        let m = rhs - &ystar[pos].sqrt();
        if margin.as_ref().is_none_or(|cur| m < *cur) {
            margin = Some(m);
            worst_leaf = leaf;
        }
    }

    // per-level running maxima of |Y_n - Y_A + o_A|^2 below each atom
    let mut level_max: Vec<HashMap<usize, S>> = Vec::with_capacity(atoms.len());
    let mut level_scale: Vec<HashMap<usize, S>> = Vec::with_capacity(atoms.len());
    for level in atoms {
        let mut mx = HashMap::new();
        let mut sc = HashMap::new();
        for a in level {
            let base = linalg::sub(&a.offset, y.value(a.node));
            let mut run = vec![(a.node, linalg::norm_sq(&a.offset))];
            while let Some((n, m)) = run.pop() {
                match tree.leaf_index(n) {
                    Some(pos) => {
                        mx.insert(pos, m);
                        sc.insert(pos, a.scale.clone());
                    }
                    None => {
                        for &ch in tree.children(n) {
                            let v = linalg::norm_sq(&linalg::add(y.value(ch), &base));
                            run.push((ch, S::max_of(m.clone(), v)));
                        }
                    }
                }
            }
        }
        level_max.push(mx);
        level_scale.push(sc);
    }
    let mut ledger_ok = true;
    for (pos, &leaf) in tree.leaves().iter().enumerate() {
        let depth = (0..atoms.len()).take_while(|&k| level_max[k].contains_key(&pos)).count();
        for k in 0..depth {
            let mk = &level_max[k][&pos];
            let ck = &level_scale[k][&pos];
            let ok = if k + 1 < depth {
                sqrt_le_sum(mk, &(two_lvl.clone() * ck), &level_max[k + 1][&pos], FLOAT_TOL)
            } else {
                let b = lvl.clone() * ck;
                let b_sq = b.clone() * &b;
                mk.approx_le(&b_sq, FLOAT_TOL, &b_sq)
            };
            if !ok {
                ledger_ok = false;
                failures.push(format!("ledger fails at leaf {leaf}, level {}", k as i64 - 1));
                break;
            }
        }
    }

    // Y_n - Y_A + o_A = (Y_P - Y_A + o_A) - r X_P + r X_n at each stop
    let mut split_ok = true;
    for k in 1..atoms.len() {
        let parents: HashMap<NodeId, &StopAtom<S>> = atoms[k - 1].iter().map(|a| (a.node, a)).collect();
        for b in &atoms[k] {
            let p = tree.parent(b.node).expect("stop atoms are not the root");
            let a_node = op.levels[k - 1].stop_above(tree, p).expect("nested levels");
            let a = parents[&a_node];
            let r = b.jump.as_ref().expect("non-root atoms carry a jump");
            let base = linalg::sub(&a.offset, y.value(a.node));
            let term1 = linalg::add(y.value(p), &base);
            let bound = lvl.clone() * &a.scale;
            let bound_sq = bound.clone() * &bound;
            let lhs = linalg::add(y.value(b.node), &base);
            let rhs = linalg::add(&linalg::sub(&term1, &r.apply(x.value(p))), &b.offset);
            let scale = linalg::norm_sq(&lhs) + &linalg::norm_sq(&rhs) + &bound_sq;
            let identity = lhs
                .iter()
                .zip(&rhs)
                .all(|(u, v)| u.approx_le(v, FLOAT_TOL, &scale) && v.approx_le(u, FLOAT_TOL, &scale));
            let ok = identity
                && linalg::norm_sq(&term1).approx_le(&bound_sq, FLOAT_TOL, &bound_sq)
                && x.norm_sq(p).approx_le(&bound_sq, FLOAT_TOL, &bound_sq)
                && r.is_contraction();
            if !ok {
                split_ok = false;
                failures.push(format!("split fails at stop {} on edge {p} -> {}", b.node, b.node));
            }
        }
    }

    Ok(DominationReport {
        margin: margin.expect("trees have leaves"),
        worst_leaf,
        holds,
        ledger_ok,
        split_ok,
        failures,
    })
}

/// JSON summary of a decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DecompositionReport {
    pub levels: Vec<LevelReport>,
    pub domination_margin: String,
    pub max_sparsity_ratio: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LevelReport {
    pub j: i64,
    pub atoms: Vec<AtomReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AtomReport {
    pub node_id: NodeId,
    pub mass: String,
    pub x_closure_value: String,
    pub sparsity_ratio: String,
}

impl DecompositionReport {
    pub fn build<S: Scalar>(
        op: &SparseOperator<S>,
        x: &Martingale<S>,
        domination: &DominationReport<S>,
    ) -> Result<Self> {
        let closure = x.norm_closure()?;
        let sparsity = verify_sparsity(op);
        let tree = op.tree();
        let levels = (0..op.num_levels())
            .map(|k| LevelReport {
                j: k as i64 - 1,
                atoms: op
                    .level(k)
                    .iter()
                    .zip(&sparsity.ratios[k])
                    .map(|(&a, r)| AtomReport {
                        node_id: a,
                        mass: tree.mass(a).to_decimal_string(),
                        x_closure_value: closure.value(a).to_decimal_string(),
                        sparsity_ratio: r.to_decimal_string(),
                    })
                    .collect(),
            })
            .collect();
        Ok(DecompositionReport {
            levels,
            domination_margin: domination.margin.to_decimal_string(),
            max_sparsity_ratio: sparsity.max_ratio.to_decimal_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use crate::error::Witness;
    use crate::tree::Branching;

    type Q = Rational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn doubling(depth: usize) -> Martingale<Q> {
        let t = Arc::new(FiltrationTree::dyadic(depth));
        let mut leaves = vec![q(0, 1); t.num_leaves()];
        *leaves.last_mut().unwrap() = Q::from_i64(1 << depth);
        Martingale::close_scalar(t, &leaves).unwrap()
    }

    fn value_node(x: &Martingale<Q>, v: i64) -> NodeId {
        (0..x.tree().len()).find(|&n| x.value(n)[0] == q(v, 1)).unwrap()
    }

    #[test]
    fn no_stopping_case() {
        let br = Branching {
            children: vec![(q(1, 2), Branching::leaf()), (q(1, 2), Branching::leaf())],
        };
        let t = Arc::new(FiltrationTree::from_branching(&br).unwrap());
        let x = Martingale::close_scalar(t, &[q(0, 1), q(2, 1)]).unwrap();
        let op = decompose(&x, &x).unwrap();
        assert_eq!(op.num_levels(), 1);
        assert_eq!(evaluate_sparse(&op, &x.leaf_norms().unwrap()).unwrap(), vec![q(1, 1); 2]);
        assert_eq!(verify_sparsity(&op).max_ratio, q(0, 1));
        let dom = verify_pointwise_domination(&x, &op, &x).unwrap();
        assert!(dom.passes());
        // Y* = 2 on the right leaf, 8 S = 8
        assert_eq!(dom.margin, q(6, 1));
    }

    #[test]
    fn doubling_depth_four() {
        let x = doubling(4);
        let op = decompose(&x, &x).unwrap();
        let eight = value_node(&x, 8);
        assert_eq!(op.level(1), &[eight]);
        assert_eq!(op.region_mass(1), q(1, 8));
        let sp = verify_sparsity(&op);
        assert_eq!(sp.ratios[0], vec![q(1, 8)]);
        assert!(sp.holds());
        assert!(op.certificate().unwrap().holds());
        // S(|X|) = 1 + 8 on the stop atom
        let s = evaluate_sparse(&op, &x.leaf_norms().unwrap()).unwrap();
        for (pos, &leaf) in x.tree().leaves().iter().enumerate() {
            let inside = x.tree().is_ancestor_or_self(eight, leaf);
            assert_eq!(s[pos], if inside { q(9, 1) } else { q(1, 1) });
        }
        let dom = verify_pointwise_domination(&x, &op, &x).unwrap();
        assert!(dom.passes());
        // worst leaf is on the path 1, 2, 4, 0: 8 * 1 - 4
        assert_eq!(dom.margin, q(4, 1));
        let neg = decompose(&x, &x.negated()).unwrap();
        assert_eq!(neg.levels(), op.levels());
    }

    #[test]
    fn evaluate_sparse_of_one_counts_levels() {
        let x = doubling(6);
        let op = decompose(&x, &x).unwrap();
        let ones = vec![q(1, 1); x.tree().num_leaves()];
        let s = evaluate_sparse(&op, &ones).unwrap();
        for (pos, &leaf) in x.tree().leaves().iter().enumerate() {
            let count = (0..op.num_levels())
                .filter(|&k| op.stopping_time(k).stop_above(x.tree(), leaf).is_some())
                .count();
            assert_eq!(s[pos], Q::from_i64(count as i64));
        }
        assert!(matches!(evaluate_sparse(&op, &vec![q(-1, 1); 64]), Err(Error::NegativeValue(0))));
    }

    #[test]
    fn hand_built_full_region_fails_sparsity() {
        let t = Arc::new(FiltrationTree::<Q>::dyadic(2));
        let op = SparseOperator::from_stop_sets(t.clone(), vec![vec![1, 2]]).unwrap();
        let sp = verify_sparsity(&op);
        assert_eq!(sp.max_ratio, q(1, 1));
        assert_eq!(sp.witness, Some((-1, 0)));
        assert!(SparseOperator::from_stop_sets(t.clone(), vec![vec![0], vec![1], vec![2]]).is_err());
        assert!(SparseOperator::from_stop_sets(t, vec![vec![1, 3]]).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = doubling(3);
        let y = x.scaled(&q(2, 1));
        assert!(matches!(decompose(&x, &y), Err(Error::NotSubordinate(Witness::Root))));
        let z = Martingale::constant(x.tree().clone(), vec![q(0, 1)]);
        assert!(matches!(decompose(&z, &z), Err(Error::ZeroProcess)));
        let other = decompose(&doubling(3), &doubling(3).scaled(&q(1, 2))).unwrap();
        let op = SparseOperator::from_stop_sets(x.tree().clone(), vec![vec![1]]).unwrap();
        assert!(matches!(verify_pointwise_domination(&x, &op, &x), Err(Error::OperatorMismatch)));
        assert!(verify_pointwise_domination(&x.scaled(&q(1, 2)), &other, &x).unwrap().passes());
    }

    #[test]
    fn jump_correction_maps_dx_to_dy() {
        let r = JumpCorrection::new(vec![q(3, 5), q(4, 5)], vec![q(1, 1), q(0, 1)]);
        assert!(r.is_contraction());
        assert_eq!(r.apply(&[q(1, 1), q(0, 1)]), vec![q(3, 5), q(4, 5)]);
        assert_eq!(r.to_matrix().apply(&[q(2, 1), q(7, 1)]), r.apply(&[q(2, 1), q(7, 1)]));
        assert!(r.to_matrix().is_contraction());
        let zero = JumpCorrection::new(vec![q(0, 1)], vec![q(5, 1)]);
        assert_eq!(zero.apply(&[q(3, 1)]), vec![q(0, 1)]);
    }

    #[test]
    fn report_has_all_levels() {
        let x = doubling(4);
        let op = decompose(&x, &x).unwrap();
        let dom = verify_pointwise_domination(&x, &op, &x).unwrap();
        let rep = DecompositionReport::build(&op, &x, &dom).unwrap();
        assert_eq!(rep.levels.len(), 2);
        assert_eq!(rep.levels[0].j, -1);
        assert_eq!(rep.levels[0].atoms[0].sparsity_ratio, "0.125");
        assert_eq!(rep.levels[1].atoms[0].x_closure_value, "8");
        assert_eq!(rep.max_sparsity_ratio, "0.125");
    }
}
