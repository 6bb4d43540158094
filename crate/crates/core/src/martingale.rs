//! `R^d`-valued martingales on a [`FiltrationTree`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Witness};
use crate::linalg::{self, Matrix};
use crate::scalar::{Scalar, FLOAT_TOL};
use crate::tree::{FiltrationTree, NodeId, TreeFile};

/// A closed martingale: one `d`-vector per node, stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Martingale<S> {
    tree: Arc<FiltrationTree<S>>,
    dim: usize,
    values: Vec<S>,
}

/// A scalar process on the nodes with no martingale requirement.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedScalarProcess<S> {
    tree: Arc<FiltrationTree<S>>,
    values: Vec<S>,
}

impl<S: Scalar> AdaptedScalarProcess<S> {
    pub fn new(tree: Arc<FiltrationTree<S>>, values: Vec<S>) -> Self {
        assert_eq!(values.len(), tree.len());
        AdaptedScalarProcess { tree, values }
    }

    pub fn tree(&self) -> &Arc<FiltrationTree<S>> {
        &self.tree
    }

    pub fn value(&self, n: NodeId) -> &S {
        &self.values[n]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// Values at the leaves, in leaf order.
    pub fn leaf_values(&self) -> Vec<S> {
        self.tree.leaves().iter().map(|&l| self.values[l].clone()).collect()
    }
}

impl<S: Scalar> Martingale<S> {
    /// Builds `X_t = E[X_inf | F_t]` from leaf values given in leaf order.
    pub fn close(tree: Arc<FiltrationTree<S>>, leaf_values: &[Vec<S>]) -> Result<Self> {
        if leaf_values.len() != tree.num_leaves() {
            return Err(Error::LeafCount {
                expected: tree.num_leaves(),
                found: leaf_values.len(),
            });
        }
        let dim = leaf_values.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if let Some(bad) = leaf_values.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let n = tree.len();
        let mut values = vec![S::zero(); n * dim];
        for id in (0..n).rev() {
            match tree.leaf_index(id) {
                Some(pos) => values[id * dim..(id + 1) * dim].clone_from_slice(&leaf_values[pos]),
                None => {
                    let mass = tree.mass(id).clone();
                    for k in 0..dim {
                        let sum = tree.children(id).iter().fold(S::zero(), |acc, &c| {
                            acc + &(values[c * dim + k].clone() * tree.mass(c))
                        });
                        values[id * dim + k] = sum / &mass;
                    }
                }
            }
        }
        Ok(Martingale { tree, dim, values })
    }

    /// Scalar martingale from scalar leaf values.
    pub fn close_scalar(tree: Arc<FiltrationTree<S>>, leaf_values: &[S]) -> Result<Self> {
        let v: Vec<Vec<S>> = leaf_values.iter().map(|x| vec![x.clone()]).collect();
        Self::close(tree, &v)
    }

    pub fn constant(tree: Arc<FiltrationTree<S>>, c: Vec<S>) -> Self {
        let dim = c.len();
        let values = c.iter().cloned().cycle().take(dim * tree.len()).collect();
        Martingale { tree, dim, values }
    }

    /// Takes node values as given and checks the martingale property.
    pub fn from_node_values(tree: Arc<FiltrationTree<S>>, dim: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != tree.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: tree.len() * dim,
                found: values.len(),
            });
        }
        let m = Martingale { tree, dim, values };
        m.check_martingale_property()?;
        Ok(m)
    }

    /// Internal node value equals the mass-weighted child average (exact, or
    /// relative `FLOAT_TOL`).
    pub fn check_martingale_property(&self) -> Result<()> {
        let t = &self.tree;
        for id in 0..t.len() {
            if t.is_leaf(id) {
                continue;
            }
            for k in 0..self.dim {
                let mut avg = S::zero();
                let mut scale = self.values[id * self.dim + k].abs();
                for &c in t.children(id) {
                    let v = &self.values[c * self.dim + k];
                    avg = avg + &(v.clone() * t.mass(c));
                    scale = scale + &v.abs();
                }
                let avg = avg / t.mass(id);
                let own = &self.values[id * self.dim + k];
                if !(own.approx_le(&avg, FLOAT_TOL, &scale) && avg.approx_le(own, FLOAT_TOL, &scale)) {
                    return Err(Error::NotMartingale(id));
                }
            }
        }
        Ok(())
    }

    pub fn tree(&self) -> &Arc<FiltrationTree<S>> {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, n: NodeId) -> &[S] {
        &self.values[n * self.dim..(n + 1) * self.dim]
    }

    pub fn norm_sq(&self, n: NodeId) -> S {
        linalg::norm_sq(self.value(n))
    }

    /// `X_child - X_parent`; zero at the root.
    pub fn increment(&self, n: NodeId) -> Vec<S> {
        match self.tree.parent(n) {
            Some(p) => linalg::sub(self.value(n), self.value(p)),
            None => vec![S::zero(); self.dim],
        }
    }

    pub fn leaf_values(&self) -> Vec<Vec<S>> {
        self.tree.leaves().iter().map(|&l| self.value(l).to_vec()).collect()
    }

    /// Scalar leaf values of a one-dimensional martingale.
    pub fn scalar_leaf_values(&self) -> Vec<S> {
        self.tree.leaves().iter().map(|&l| self.value(l)[0].clone()).collect()
    }

    /// Scalar node values of a one-dimensional martingale.
    pub fn scalar_values(&self) -> Vec<S> {
        (0..self.tree.len()).map(|n| self.values[n * self.dim].clone()).collect()
    }

    /// `|X_inf|` per leaf. In exact mode every norm must be rational.
    pub fn leaf_norms(&self) -> Result<Vec<S>> {
        self.tree
            .leaves()
            .iter()
            .enumerate()
            .map(|(pos, &l)| norm_of(&self.norm_sq(l), pos))
            .collect()
    }

    /// `|X|_t = E[|X_inf| | F_t]`.
    pub fn norm_closure(&self) -> Result<AdaptedScalarProcess<S>> {
        let leaf = self.leaf_norms()?;
        Ok(AdaptedScalarProcess::new(self.tree.clone(), self.tree.close_scalar(&leaf)))
    }

    /// `||X||_1 = E|X_inf|`.
    pub fn l1_norm(&self) -> Result<S> {
        Ok(self.tree.expectation(&self.leaf_norms()?))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(Scalar::is_zero)
    }

    pub fn negated(&self) -> Self {
        Martingale {
            tree: self.tree.clone(),
            dim: self.dim,
            values: self.values.iter().map(|v| -v.clone()).collect(),
        }
    }

    /// Multiplies every value by `k`.
    pub fn scaled(&self, k: &S) -> Self {
        Martingale {
            tree: self.tree.clone(),
            dim: self.dim,
            values: linalg::scale(&self.values, k),
        }
    }

    /// Embeds a scalar martingale into the first coordinate of `R^d`.
    pub fn embed(&self, d: usize) -> Self {
        assert!(d >= self.dim);
        let mut values = vec![S::zero(); self.tree.len() * d];
        for n in 0..self.tree.len() {
            values[n * d..n * d + self.dim].clone_from_slice(self.value(n));
        }
        Martingale {
            tree: self.tree.clone(),
            dim: d,
            values,
        }
    }

    pub fn to_file(&self) -> MartingaleFile {
        MartingaleFile {
            tree_ref: TreeRef::Inline(self.tree.to_file()),
            d: self.dim,
            leaf_values: self
                .leaf_values()
                .iter()
                .map(|v| v.iter().map(Scalar::to_decimal_string).collect())
                .collect(),
        }
    }

    /// Rebuilds from file data; node values are recomputed by closure.
    pub fn from_file(file: &MartingaleFile, tree: Arc<FiltrationTree<S>>) -> Result<Self> {
        let leaves = file
            .leaf_values
            .iter()
            .map(|v| v.iter().map(|s| S::parse_decimal(s)).collect::<Result<Vec<S>>>())
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = leaves.iter().find(|v| v.len() != file.d) {
            return Err(Error::DimensionMismatch {
                expected: file.d,
                found: bad.len(),
            });
        }
        Self::close(tree, &leaves)
    }
}

fn norm_of<S: Scalar>(sq: &S, pos: usize) -> Result<S> {
    if S::EXACT {
        sq.try_sqrt().ok_or(Error::InexactNorm(pos))
    } else {
        Ok(sq.sqrt())
    }
}

fn same_tree<S: Scalar>(a: &Arc<FiltrationTree<S>>, b: &Arc<FiltrationTree<S>>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Where a tree reference in a file points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeRef {
    Inline(TreeFile),
    Path(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MartingaleFile {
    pub tree_ref: TreeRef,
    pub d: usize,
    pub leaf_values: Vec<Vec<String>>,
}

/// Predictable multipliers for [`transform`].
#[derive(Clone, Debug, PartialEq)]
pub enum Multipliers<S> {
    /// One contraction per internal node, applied to every increment leaving it.
    ByParent(Vec<Matrix<S>>),
    /// One contraction per node for the increment into it. Accepted only if
    /// siblings agree, since otherwise the result is not predictable.
    ByChild(Vec<Matrix<S>>),
    /// The same contraction everywhere.
    Uniform(Matrix<S>),
}

/// `Y_0 = r0 X_0`, `Y_c = Y_p + M_p (X_c - X_p)`.
pub fn transform<S: Scalar>(
    x: &Martingale<S>,
    initial: &Matrix<S>,
    multipliers: &Multipliers<S>,
) -> Result<Martingale<S>> {
    let t = x.tree();
    let d = x.dim();
    if initial.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: initial.dim(),
        });
    }
    if !initial.is_contraction() {
        return Err(Error::InitialNotContraction);
    }
    let by_parent: Vec<&Matrix<S>> = match multipliers {
        Multipliers::Uniform(m) => vec![m; t.len()],
        Multipliers::ByParent(ms) => {
            if ms.len() != t.len() {
                return Err(Error::DimensionMismatch {
                    expected: t.len(),
                    found: ms.len(),
                });
            }
            ms.iter().collect()
        }
        Multipliers::ByChild(ms) => {
            if ms.len() != t.len() {
                return Err(Error::DimensionMismatch {
                    expected: t.len(),
                    found: ms.len(),
                });
            }
            let mut out = vec![&ms[0]; t.len()];
            for (id, slot) in out.iter_mut().enumerate() {
                if let Some((&first, rest)) = t.children(id).split_first() {
                    if rest.iter().any(|&c| ms[c] != ms[first]) {
                        return Err(Error::NotPredictable);
                    }
                    *slot = &ms[first];
                }
            }
            out
        }
    };
    let internal = (0..t.len()).filter(|&id| !t.is_leaf(id));
    // a uniform multiplier is one matrix; check it once
    let to_check: Vec<NodeId> = match multipliers {
        Multipliers::Uniform(_) => internal.take(1).collect(),
        _ => internal.collect(),
    };
    for id in to_check {
        let m = by_parent[id];
        if m.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.dim(),
            });
        }
        if !m.is_contraction() {
            return Err(Error::NotContraction { node: id });
        }
    }
    let mut values = vec![S::zero(); t.len() * d];
    values[..d].clone_from_slice(&initial.apply(x.value(0)));
    for id in 1..t.len() {
        let p = t.parent(id).expect("non-root has a parent");
        let dy = by_parent[p].apply(&x.increment(id));
        for k in 0..d {
            values[id * d + k] = values[p * d + k].clone() + &dy[k];
        }
    }
    Ok(Martingale {
        tree: t.clone(),
        dim: d,
        values,
    })
}

/// `[X,X]_n = |X_0|^2 + sum of |dX|^2` along the path to `n`.
pub fn square_bracket<S: Scalar>(x: &Martingale<S>) -> AdaptedScalarProcess<S> {
    let t = x.tree();
    let mut out = vec![S::zero(); t.len()];
    out[0] = x.norm_sq(0);
    for id in 1..t.len() {
        let p = t.parent(id).expect("non-root has a parent");
        out[id] = out[p].clone() + &linalg::norm_sq(&x.increment(id));
    }
    AdaptedScalarProcess::new(t.clone(), out)
}

/// `None` if `|Y_0| <= |X_0|` and `|dY| <= |dX|` on every edge; otherwise the
/// first violation in breadth-first order. `tol` is relative and ignored in
/// exact mode.
pub fn is_differentially_subordinate<S: Scalar>(
    y: &Martingale<S>,
    x: &Martingale<S>,
    tol: f64,
) -> Result<Option<Witness>> {
    if !same_tree(y.tree(), x.tree()) {
        return Err(Error::TreeMismatch);
    }
    if y.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let t = x.tree();
    let scale0 = x.norm_sq(0) + &y.norm_sq(0);
    if !y.norm_sq(0).approx_le(&x.norm_sq(0), tol, &scale0) {
        return Ok(Some(Witness::Root));
    }
    for id in 1..t.len() {
        let p = t.parent(id).expect("non-root has a parent");
        let dx = linalg::norm_sq(&x.increment(id));
        let dy = linalg::norm_sq(&y.increment(id));
        let ok = if S::EXACT {
            dy <= dx
        } else {
            let s = x.norm_sq(p).sqrt() + &x.norm_sq(id).sqrt() + &y.norm_sq(p).sqrt() + &y.norm_sq(id).sqrt();
            dy.approx_le(&dx, tol, &(s.clone() * &s))
        };
        if !ok {
            return Ok(Some(Witness::Edge { parent: p, child: id }));
        }
    }
    Ok(None)
}

/// Running maximum of `|X_t|^2` along each path.
pub fn maximal_function_sq<S: Scalar>(x: &Martingale<S>) -> AdaptedScalarProcess<S> {
    let t = x.tree();
    let mut out = vec![S::zero(); t.len()];
    out[0] = x.norm_sq(0);
    for id in 1..t.len() {
        let p = t.parent(id).expect("non-root has a parent");
        out[id] = S::max_of(out[p].clone(), x.norm_sq(id));
    }
    AdaptedScalarProcess::new(t.clone(), out)
}

/// Running maximum of `|X_t|` and its leaf values `X*`.
pub fn maximal_function<S: Scalar>(x: &Martingale<S>) -> (AdaptedScalarProcess<S>, Vec<S>) {
    let sq = maximal_function_sq(x);
    let running: Vec<S> = sq.values().iter().map(Scalar::sqrt).collect();
    let running = AdaptedScalarProcess::new(x.tree().clone(), running);
    let leaf = running.leaf_values();
    (running, leaf)
}

/// `lambda * P(max(X*, Y*) > lambda) / ||X||_1`.
pub fn weak_type_check<S: Scalar>(x: &Martingale<S>, y: &Martingale<S>, lambda: &S) -> Result<S> {
    let l1 = x.l1_norm()?;
    if l1.is_zero() {
        return Err(Error::ZeroProcess);
    }
    let level = joint_maximal_sq(x, y)?;
    Ok(weak_type_ratio(x.tree(), &level, &l1, lambda))
}

/// Leaf values of `max(|X|^2, |Y|^2)` running maxima.
pub fn joint_maximal_sq<S: Scalar>(x: &Martingale<S>, y: &Martingale<S>) -> Result<Vec<S>> {
    if !same_tree(x.tree(), y.tree()) {
        return Err(Error::TreeMismatch);
    }
    let mx = maximal_function_sq(x).leaf_values();
    let my = maximal_function_sq(y).leaf_values();
    Ok(mx.into_iter().zip(my).map(|(a, b)| S::max_of(a, b)).collect())
}

/// Weak-type ratio from precomputed leaf values of the joint maximal square.
pub fn weak_type_ratio<S: Scalar>(tree: &FiltrationTree<S>, joint_sq: &[S], l1: &S, lambda: &S) -> S {
    let lsq = lambda.clone() * lambda;
    let prob = tree
        .leaves()
        .iter()
        .zip(joint_sq)
        .filter(|(_, v)| **v > lsq)
        .fold(S::zero(), |acc, (&l, _)| acc + tree.mass(l));
    prob * lambda / l1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use crate::tree::Branching;

    type Q = Rational;

    fn q(n: i64, d: i64) -> Q {
        Q::from_ratio(n, d)
    }

    fn two_leaf(a: Q, b: Q) -> Arc<FiltrationTree<Q>> {
        let br = Branching {
            children: vec![(a, Branching::leaf()), (b, Branching::leaf())],
        };
        Arc::new(FiltrationTree::from_branching(&br).unwrap())
    }

    fn scalar(tree: &Arc<FiltrationTree<Q>>, leaves: &[i64]) -> Martingale<Q> {
        let v: Vec<Q> = leaves.iter().map(|&x| q(x, 1)).collect();
        Martingale::close_scalar(tree.clone(), &v).unwrap()
    }

    fn doubling(depth: usize) -> Martingale<Q> {
        let t = Arc::new(FiltrationTree::dyadic(depth));
        let mut leaves = vec![q(0, 1); t.num_leaves()];
        *leaves.last_mut().unwrap() = Q::from_i64(1 << depth);
        Martingale::close_scalar(t, &leaves).unwrap()
    }

    #[test]
    fn close_examples() {
        let t = two_leaf(q(1, 2), q(1, 2));
        assert_eq!(scalar(&t, &[0, 2]).value(0), &[q(1, 1)]);
        let t = two_leaf(q(1, 8), q(7, 8));
        let x = scalar(&t, &[8, 0]);
        assert_eq!(x.value(0), &[q(1, 1)]);
        assert_eq!(x.value(0)[0], t.conditional_expectation_scalar(&[q(8, 1), q(0, 1)], 0));
        let c = Martingale::constant(t.clone(), vec![q(3, 1), q(-1, 1)]);
        assert_eq!(Martingale::close(t, &c.leaf_values()).unwrap(), c);
    }

    #[test]
    fn close_rejects_ragged_leaves() {
        let t = two_leaf(q(1, 2), q(1, 2));
        let err = Martingale::close(t.clone(), &[vec![q(1, 1)], vec![q(1, 1), q(0, 1)]]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        assert!(matches!(Martingale::close(t, &[vec![q(1, 1)]]), Err(Error::LeafCount { .. })));
    }

    #[test]
    fn transform_examples() {
        let t = Arc::new(FiltrationTree::<Q>::dyadic(3));
        let leaves: Vec<Q> = (0..8).map(|i| q(i * i - 3, 1)).collect();
        let x = Martingale::close_scalar(t.clone(), &leaves).unwrap();
        let id = Matrix::identity(1);
        assert_eq!(transform(&x, &id, &Multipliers::Uniform(id.clone())).unwrap(), x);
        let neg = Matrix::scalar(1, q(-1, 1));
        let y = transform(&x, &neg, &Multipliers::Uniform(neg.clone())).unwrap();
        assert_eq!(y, x.negated());
        assert_eq!(square_bracket(&y), square_bracket(&x));
        assert_eq!(is_differentially_subordinate(&y, &x, 0.0).unwrap(), None);

        let x2 = x.embed(2);
        let rot = Matrix::from_rows(vec![vec![q(0, 1), q(-1, 1)], vec![q(1, 1), q(0, 1)]]);
        let y2 = transform(&x2, &rot, &Multipliers::Uniform(rot.clone())).unwrap();
        for n in 1..t.len() {
            let dx = x2.increment(n);
            let dy = y2.increment(n);
            assert_eq!(linalg::norm_sq(&dx), linalg::norm_sq(&dy));
            assert!(linalg::dot(&dx, &dy).is_zero());
        }
    }

    #[test]
    fn transform_rejects_bad_multipliers() {
        let t = Arc::new(FiltrationTree::<Q>::dyadic(2));
        let x = Martingale::close_scalar(t.clone(), &[q(1, 1), q(2, 1), q(3, 1), q(4, 1)]).unwrap();
        let id = Matrix::identity(1);
        let big = Matrix::scalar(1, q(2, 1));
        assert!(matches!(
            transform(&x, &big, &Multipliers::Uniform(id.clone())),
            Err(Error::InitialNotContraction)
        ));
        let mut ms = vec![id.clone(); t.len()];
        ms[1] = big;
        assert!(matches!(
            transform(&x, &id, &Multipliers::ByParent(ms)),
            Err(Error::NotContraction { node: 1 })
        ));
        let mut ms = vec![id.clone(); t.len()];
        ms[2] = Matrix::scalar(1, q(-1, 1));
        assert!(matches!(
            transform(&x, &id, &Multipliers::ByChild(ms)),
            Err(Error::NotPredictable)
        ));
        // siblings agree: equivalent to parent indexing
        let mut ms = vec![id.clone(); t.len()];
        ms[3] = Matrix::scalar(1, q(1, 2));
        ms[4] = Matrix::scalar(1, q(1, 2));
        let y = transform(&x, &id, &Multipliers::ByChild(ms)).unwrap();
        y.check_martingale_property().unwrap();
        assert_eq!(y.value(3), &[x.value(1)[0].clone() - &q(1, 4)]);
    }

    #[test]
    fn bracket_examples() {
        let t = two_leaf(q(1, 2), q(1, 2));
        let c = Martingale::constant(t.clone(), vec![q(3, 1)]);
        assert!(square_bracket(&c).values().iter().all(|v| *v == q(9, 1)));
        let b = square_bracket(&scalar(&t, &[0, 2]));
        assert_eq!(b.values(), &[q(1, 1), q(2, 1), q(2, 1)]);
        let x = doubling(3);
        let leaf = *x.tree().leaves().last().unwrap();
        let path: Vec<Q> = x.tree().path(leaf).iter().map(|&n| square_bracket(&x).value(n).clone()).collect();
        assert_eq!(path, vec![q(1, 1), q(2, 1), q(6, 1), q(22, 1)]);
    }

    #[test]
    fn subordination_examples() {
        let t = two_leaf(q(1, 2), q(1, 2));
        let x = scalar(&t, &[0, 2]);
        assert_eq!(is_differentially_subordinate(&x, &x, 0.0).unwrap(), None);
        let y = x.scaled(&q(2, 1));
        assert_eq!(is_differentially_subordinate(&y, &x, 0.0).unwrap(), Some(Witness::Root));
        let z = scalar(&t, &[-1, 3]);
        assert_eq!(
            is_differentially_subordinate(&z, &x, 0.0).unwrap(),
            Some(Witness::Edge { parent: 0, child: 1 })
        );
        let other = Arc::new(FiltrationTree::<Q>::dyadic(2));
        let w = Martingale::constant(other, vec![q(1, 1)]);
        assert!(matches!(is_differentially_subordinate(&w, &x, 0.0), Err(Error::TreeMismatch)));
    }

    #[test]
    fn maximal_examples() {
        let t = two_leaf(q(1, 2), q(1, 2));
        let (_, leaf) = maximal_function(&Martingale::constant(t.clone(), vec![q(-3, 1)]));
        assert_eq!(leaf, vec![q(3, 1), q(3, 1)]);
        let (_, leaf) = maximal_function(&scalar(&t, &[0, 2]));
        assert_eq!(leaf, vec![q(1, 1), q(2, 1)]);
        let x = doubling(3);
        let tr = x.tree();
        // path 1 -> 2 -> 4 -> 0
        let n = tr.children(tr.children(tr.children(0)[1])[1])[0];
        assert_eq!(maximal_function(&x).0.value(n), &q(4, 1));
    }

    #[test]
    fn weak_type_examples() {
        let t = two_leaf(q(1, 2), q(1, 2));
        let x = scalar(&t, &[0, 2]);
        assert_eq!(weak_type_check(&x, &x, &q(3, 2)).unwrap(), q(3, 4));
        assert_eq!(weak_type_check(&x, &x, &q(5, 2)).unwrap(), q(0, 1));
        let d = doubling(3);
        assert_eq!(weak_type_check(&d, &d, &q(4, 1)).unwrap(), q(1, 2));
        let z = Martingale::constant(t, vec![q(0, 1)]);
        assert!(matches!(weak_type_check(&z, &z, &q(1, 1)), Err(Error::ZeroProcess)));
    }

    #[test]
    fn norm_of_conditional_expectation_is_below_closure_of_norm() {
        let t = Arc::new(FiltrationTree::<Q>::dyadic(2));
        let x = Martingale::close(
            t.clone(),
            &[vec![q(3, 5), q(4, 5)], vec![q(-1, 1), q(0, 1)], vec![q(0, 1), q(2, 1)], vec![q(5, 13), q(-12, 13)]],
        )
        .unwrap();
        let c = x.norm_closure().unwrap();
        for n in 0..t.len() {
            assert!(x.norm_sq(n) <= c.value(n).clone() * c.value(n));
        }
        let bad = Martingale::close(t, &vec![vec![q(1, 1), q(1, 1)]; 4]).unwrap();
        assert!(matches!(bad.leaf_norms(), Err(Error::InexactNorm(0))));
    }

    #[test]
    fn json_round_trip() {
        let x = doubling(2);
        let file = x.to_file();
        let text = serde_json::to_string(&file).unwrap();
        let back: MartingaleFile = serde_json::from_str(&text).unwrap();
        let TreeRef::Inline(tf) = &back.tree_ref else { panic!("inline tree expected") };
        let tree = Arc::new(FiltrationTree::from_file(tf).unwrap());
        assert_eq!(Martingale::from_file(&back, tree).unwrap(), x);
    }
}
