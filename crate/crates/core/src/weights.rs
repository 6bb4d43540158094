//! Weights, dual weights and the `A_p` characteristic.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::martingale::Martingale;
use crate::scalar::{Exponent, Scalar};
use crate::tree::{FiltrationTree, NodeId};

/// A strictly positive scalar martingale.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight<S> {
    tree: Arc<FiltrationTree<S>>,
    values: Vec<S>,
}

impl<S: Scalar> Weight<S> {
    pub fn from_leaves(tree: Arc<FiltrationTree<S>>, leaf_values: &[S]) -> Result<Self> {
        if leaf_values.len() != tree.num_leaves() {
            return Err(Error::LeafCount {
                expected: tree.num_leaves(),
                found: leaf_values.len(),
            });
        }
        if let Some(pos) = leaf_values.iter().position(|v| *v <= S::zero()) {
            return Err(Error::NonPositiveWeight(tree.leaves()[pos]));
        }
        let values = tree.close_scalar(leaf_values);
        Ok(Weight { tree, values })
    }

    pub fn from_martingale(m: &Martingale<S>) -> Result<Self> {
        if m.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: m.dim(),
            });
        }
        Self::from_leaves(m.tree().clone(), &m.scalar_leaf_values())
    }

    pub fn constant(tree: Arc<FiltrationTree<S>>) -> Self {
        let values = vec![S::one(); tree.len()];
        Weight { tree, values }
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

    pub fn leaf_values(&self) -> Vec<S> {
        self.tree.leaves().iter().map(|&l| self.values[l].clone()).collect()
    }

    pub fn to_martingale(&self) -> Martingale<S> {
        Martingale::close_scalar(self.tree.clone(), &self.leaf_values()).expect("weight shape")
    }

    /// `E[w]`, the root value.
    pub fn total(&self) -> &S {
        &self.values[0]
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|v| *v == self.values[0])
    }
}

fn check_p(p: Exponent) -> Result<()> {
    if p <= Exponent::integer(1) {
        Err(Error::InvalidExponent(p.to_string()))
    } else {
        Ok(())
    }
}

/// Leaf values `w^{-1/(p-1)}`, closed upward.
pub fn dual_weight<S: Scalar>(w: &Weight<S>, p: Exponent) -> Result<Weight<S>> {
    check_p(p)?;
    let e = -(p - Exponent::integer(1)).recip();
    let leaves: Vec<S> = w.leaf_values().iter().map(|v| v.pow(e)).collect();
    Weight::from_leaves(w.tree.clone(), &leaves)
}

/// Per-node terms `w_n u_n^{p-1}` with `u` the dual weight.
pub fn characteristic_terms<S: Scalar>(w: &Weight<S>, u: &Weight<S>, p: Exponent) -> Vec<S> {
    let e = p - Exponent::integer(1);
    w.values
        .iter()
        .zip(&u.values)
        .map(|(wn, un)| wn.clone() * &un.pow(e))
        .collect()
}

fn argmax<S: Scalar>(terms: &[S]) -> (S, NodeId) {
    let mut best = 0;
    for (i, t) in terms.iter().enumerate() {
        if *t > terms[best] {
            best = i;
        }
    }
    (terms[best].clone(), best)
}

/// `Q_p(w)`: the largest node term and the first node attaining it.
pub fn ap_characteristic<S: Scalar>(w: &Weight<S>, p: Exponent) -> Result<(S, NodeId)> {
    let u = dual_weight(w, p)?;
    Ok(argmax(&characteristic_terms(w, &u, p)))
}

/// `E[z w | n] / w_n`.
pub fn weighted_conditional_expectation<S: Scalar>(z: &[S], w: &Weight<S>, node: NodeId) -> S {
    let zw: Vec<S> = z
        .iter()
        .zip(w.leaf_values())
        .map(|(a, b)| a.clone() * &b)
        .collect();
    w.tree.conditional_expectation_scalar(&zw, node) / w.value(node)
}

/// `E_w[z | n]` at every node.
pub fn weighted_closure<S: Scalar>(z: &[S], w: &Weight<S>) -> Vec<S> {
    let zw: Vec<S> = z
        .iter()
        .zip(w.leaf_values())
        .map(|(a, b)| a.clone() * &b)
        .collect();
    w.tree
        .close_scalar(&zw)
        .into_iter()
        .zip(&w.values)
        .map(|(a, b)| a / b)
        .collect()
}

/// Running maximum of `E_w[|z| | F_t]` at every node.
pub fn weighted_maximal_process<S: Scalar>(z: &[S], w: &Weight<S>) -> Vec<S> {
    let abs: Vec<S> = z.iter().map(Scalar::abs).collect();
    running_max(&w.tree, weighted_closure(&abs, w))
}

/// Leaf values of [`weighted_maximal_process`].
pub fn weighted_maximal<S: Scalar>(z: &[S], w: &Weight<S>) -> Vec<S> {
    let m = weighted_maximal_process(z, w);
    w.tree.leaves().iter().map(|&l| m[l].clone()).collect()
}

pub(crate) fn running_max<S: Scalar>(tree: &FiltrationTree<S>, mut values: Vec<S>) -> Vec<S> {
    for id in 1..tree.len() {
        let p = tree.parent(id).expect("non-root has a parent");
        if values[p] > values[id] {
            values[id] = values[p].clone();
        }
    }
    values
}

/// `E[|z|^p w]`.
pub fn weighted_moment<S: Scalar>(z: &[S], w: &Weight<S>, p: Exponent) -> S {
    let leaves = w.tree.leaves();
    z.iter().zip(leaves).fold(S::zero(), |acc, (v, &l)| {
        acc + &(v.abs().pow(p) * w.value(l) * w.tree.mass(l))
    })
}

/// `(E[|z|^p w])^{1/p}`.
pub fn weighted_norm<S: Scalar>(z: &[S], w: &Weight<S>, p: Exponent) -> Result<S> {
    if p < Exponent::integer(1) {
        return Err(Error::InvalidExponent(p.to_string()));
    }
    Ok(weighted_moment(z, w, p).pow(p.recip()))
}

/// `||z*_w||_{L^p(w)} / ||z||_{L^p(w)}`.
pub fn doob_ratio<S: Scalar>(z: &[S], w: &Weight<S>, p: Exponent) -> Result<S> {
    check_p(p)?;
    if z.iter().all(Scalar::is_zero) {
        return Err(Error::ZeroProcess);
    }
    let star = weighted_maximal(z, w);
    // compare p-th moments so the exact case stays exact as long as possible
    let r = weighted_moment(&star, w, p) / &weighted_moment(z, w, p);
    Ok(r.pow(p.recip()))
}

/// A weight with its dual and characteristic data for one exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct ApWeight<S> {
    pub p: Exponent,
    pub w: Weight<S>,
    pub u: Weight<S>,
    /// `w_n u_n^{p-1}` per node.
    pub terms: Vec<S>,
    pub qp: S,
    pub argmax: NodeId,
}

impl<S: Scalar> ApWeight<S> {
    pub fn new(w: Weight<S>, p: Exponent) -> Result<Self> {
        let u = dual_weight(&w, p)?;
        let terms = characteristic_terms(&w, &u, p);
        let (qp, argmax) = argmax(&terms);
        Ok(ApWeight {
            p,
            w,
            u,
            terms,
            qp,
            argmax,
        })
    }

    pub fn tree(&self) -> &Arc<FiltrationTree<S>> {
        &self.w.tree
    }

    pub fn conjugate(&self) -> Exponent {
        self.p.conjugate()
    }

    /// `Q_p^{max(1, 1/(p-1))}`, taken as a max of node terms so it is exact
    /// whenever the terms are.
    pub fn sparse_characteristic(&self) -> S {
        if self.p >= Exponent::integer(2) {
            return self.qp.clone();
        }
        // u_n w_n^{p'-1} = (w_n u_n^{p-1})^{p'-1}
        let e = self.conjugate() - Exponent::integer(1);
        let terms = self
            .u
            .values
            .iter()
            .zip(&self.w.values)
            .map(|(un, wn)| un.clone() * &wn.pow(e));
        terms.fold(S::zero(), S::max_of)
    }
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

    fn w14(a: Q, b: Q) -> Weight<Q> {
        Weight::from_leaves(two_leaf(a, b), &[q(1, 1), q(4, 1)]).unwrap()
    }

    #[test]
    fn dual_weight_examples() {
        let w = w14(q(1, 2), q(1, 2));
        let u = dual_weight(&w, Exponent::integer(2)).unwrap();
        assert_eq!(u.leaf_values(), vec![q(1, 1), q(1, 4)]);
        assert_eq!(u.total(), &q(5, 8));
        let one = Weight::constant(two_leaf(q(1, 3), q(2, 3)));
        for p in [Exponent::new(4, 3), Exponent::new(3, 2), Exponent::integer(3)] {
            assert!(dual_weight(&one, p).unwrap().values().iter().all(|v| *v == q(1, 1)));
        }
        assert!(matches!(dual_weight(&w, Exponent::integer(1)), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn duality_is_an_involution_for_p3() {
        // u = w^{-1/2}: choose perfect squares so everything stays exact
        let t = Arc::new(FiltrationTree::<Q>::dyadic(2));
        let w = Weight::from_leaves(t, &[q(1, 1), q(4, 1), q(9, 4), q(1, 16)]).unwrap();
        let p = Exponent::integer(3);
        let u = dual_weight(&w, p).unwrap();
        assert_eq!(u.leaf_values(), vec![q(1, 1), q(1, 2), q(2, 3), q(4, 1)]);
        assert_eq!(dual_weight(&u, p.conjugate()).unwrap(), w);
    }

    #[test]
    fn characteristic_examples() {
        let one = Weight::constant(two_leaf(q(1, 2), q(1, 2)));
        assert_eq!(ap_characteristic(&one, Exponent::integer(2)).unwrap().0, q(1, 1));
        let (qp, at) = ap_characteristic(&w14(q(1, 2), q(1, 2)), Exponent::integer(2)).unwrap();
        assert_eq!((qp, at), (q(25, 16), 0));
        // (1/8 + 7/8*4)(1/8 + 7/8*1/4) = (29/8)(11/32)
        let (qp, at) = ap_characteristic(&w14(q(1, 8), q(7, 8)), Exponent::integer(2)).unwrap();
        assert_eq!((qp, at), (q(319, 256), 0));
    }

    #[test]
    fn weighted_expectation_examples() {
        let w = w14(q(1, 2), q(1, 2));
        assert_eq!(weighted_conditional_expectation(&[q(1, 1), q(0, 1)], &w, 0), q(1, 5));
        assert_eq!(weighted_conditional_expectation(&[q(7, 1), q(7, 1)], &w, 0), q(7, 1));
        let one = Weight::constant(w.tree().clone());
        assert_eq!(weighted_conditional_expectation(&[q(1, 1), q(3, 1)], &one, 0), q(2, 1));
        // E[Z w | n] = E_w[Z | n] w_n
        let z = [q(2, 3), q(-5, 1)];
        let zw: Vec<Q> = z.iter().zip(w.leaf_values()).map(|(a, b)| a.clone() * &b).collect();
        assert_eq!(
            w.tree().conditional_expectation_scalar(&zw, 0),
            weighted_conditional_expectation(&z, &w, 0) * w.value(0)
        );
    }

    #[test]
    fn weighted_norm_examples() {
        let p = Exponent::integer(2);
        let w = w14(q(1, 2), q(1, 2));
        let one = Weight::constant(w.tree().clone());
        assert_eq!(weighted_moment(&[q(1, 1), q(1, 1)], &w, p), q(5, 2));
        assert_eq!(weighted_moment(&[q(0, 1), q(2, 1)], &one, p), q(2, 1));
        let n = weighted_norm(&[q(1, 1), q(1, 1)], &w, p).unwrap();
        assert!((Scalar::to_f64(&n) - 2.5f64.sqrt()).abs() < 1e-15);
        let n = weighted_norm(&[q(0, 1), q(3, 1)], &one, p).unwrap();
        assert!((Scalar::to_f64(&n) - 4.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weighted_maximal_examples() {
        let w = w14(q(1, 2), q(1, 2));
        assert_eq!(weighted_maximal(&[q(1, 1), q(0, 1)], &w), vec![q(1, 1), q(1, 5)]);
        assert_eq!(weighted_maximal(&[q(3, 1), q(3, 1)], &w), vec![q(3, 1), q(3, 1)]);
    }

    #[test]
    fn doob_ratio_examples() {
        let t = Arc::new(FiltrationTree::<Q>::dyadic(3));
        let one = Weight::constant(t.clone());
        let p = Exponent::integer(2);
        assert_eq!(doob_ratio(&vec![q(2, 1); 8], &one, p).unwrap(), q(1, 1));
        let mut z = vec![q(0, 1); 8];
        z[7] = q(8, 1);
        let r = doob_ratio(&z, &one, p).unwrap();
        // ratio^2 = 3/2 - 2^{-(depth+1)}
        let expected = (1.5f64 - 1.0 / 16.0).sqrt();
        assert!((Scalar::to_f64(&r) - expected).abs() < 1e-12);
        assert!(matches!(doob_ratio(&vec![q(0, 1); 8], &one, p), Err(Error::ZeroProcess)));
    }

    #[test]
    fn sparse_characteristic_matches_power() {
        let w = w14(q(1, 2), q(1, 2));
        let ap = ApWeight::new(w.clone(), Exponent::integer(2)).unwrap();
        assert_eq!(ap.sparse_characteristic(), q(25, 16));
        // p = 3/2: Q* = Q_p^2 and the max of u w^{p'-1} = (w u^{1/2})^2
        let w = Weight::from_leaves(w.tree().clone(), &[q(1, 1), q(1, 4)]).unwrap();
        let ap = ApWeight::new(w, Exponent::new(3, 2)).unwrap();
        assert_eq!(ap.u.leaf_values(), vec![q(1, 1), q(16, 1)]);
        let direct = ap.qp.clone() * &ap.qp;
        assert!((Scalar::to_f64(&ap.sparse_characteristic()) - Scalar::to_f64(&direct)).abs() < 1e-12);
    }
}
