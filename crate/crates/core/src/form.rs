//! Weighted estimate of the sparse bilinear form, step by step.
//!
//! For `f, g >= 0` the form is `E[S(f u) g w]`. Writing `F_A = <f>^u_A` and
//! `G_A = <g>^w_A`, the chain is
//!
//! ```text
//! sum P(A) u_A w_A F_A G_A
//!   <= Q* sum P(A) rho_A F_A G_A                          (A_p)
//!   <= K Q* sum P(S_A) rho_A F_A G_A                       (sparsity)
//!   <= K Q* sum rho_A F_A G_A u(S_A)^{1/p'} w(S_A)^{1/p}   (Hoelder on S_A)
//!   <= K c Q* sum F_A G_A u(S_A)^{1/p} w(S_A)^{1/p'}       (rebalance)
//!   <= K c Q* (sum F^p u(S))^{1/p} (sum G^{p'} w(S))^{1/p'}
//!   <= K c Q* ||f*_u||_{L^p(u)} ||g*_w||_{L^{p'}(w)}
//!   <= K c Q* p p' ||f||_{L^p(u)} ||g||_{L^{p'}(w)}        (Doob)
//! ```
//!
//! with `Q* = Q_p^{max(1, 1/(p-1))}`, `rho_A = u_A^{2-p}` for `p >= 2` and
//! `w_A^{2-p'}` otherwise, `K = 1 / (1 - sparsity bound)` and
//! `c = K^{p* - 2}`.

use std::sync::Arc;

use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::martingale::{is_differentially_subordinate, maximal_function_sq, Martingale};
use crate::scalar::{eq_with_slack, exponent_scalar, le_with_slack, Exponent, Scalar, FLOAT_TOL};
use crate::sparse::{decompose, evaluate_closed, SparseOperator};
use crate::tree::FiltrationTree;
use crate::weights::{weighted_closure, weighted_maximal, weighted_moment, weighted_norm, ApWeight};

/// Relative agreement required between the two evaluation orders in float mode.
pub const TOWER_TOL: f64 = 1e-12;

/// The form evaluated leafwise and as a sum over stopping atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearForm<S> {
    /// `E[S(f u) g w]`.
    pub direct: S,
    /// `sum_j sum_A P(A) (f u)_A (g w)_A`.
    pub tower: S,
}

impl<S: Scalar> BilinearForm<S> {
    pub fn agrees(&self) -> bool {
        eq_with_slack(&self.direct, &self.tower, true, TOWER_TOL)
    }
}

fn same_tree<S: Scalar>(a: &Arc<FiltrationTree<S>>, b: &Arc<FiltrationTree<S>>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

fn check_leaves<S: Scalar>(tree: &FiltrationTree<S>, v: &[S]) -> Result<()> {
    if v.len() != tree.num_leaves() {
        return Err(Error::LeafCount {
            expected: tree.num_leaves(),
            found: v.len(),
        });
    }
    match v.iter().position(|x| *x < S::zero()) {
        Some(pos) => Err(Error::NegativeValue(pos)),
        None => Ok(()),
    }
}

fn leafwise<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() * y).collect()
}

pub fn bilinear_form<S: Scalar>(
    op: &SparseOperator<S>,
    f: &[S],
    g: &[S],
    w: &ApWeight<S>,
) -> Result<BilinearForm<S>> {
    let tree = op.tree();
    if !same_tree(tree, w.tree()) {
        return Err(Error::TreeMismatch);
    }
    check_leaves(tree, f)?;
    check_leaves(tree, g)?;
    let fu = leafwise(f, &w.u.leaf_values());
    let gw = leafwise(g, &w.w.leaf_values());
    let fu_closed = tree.close_scalar(&fu);
    let gw_closed = tree.close_scalar(&gw);

    let s = evaluate_closed(op, &fu_closed);
    let direct = tree.expectation(&leafwise(&s, &gw));

    let mut tower = S::zero();
    for k in 0..op.num_levels() {
        for &a in op.level(k) {
            tower = tower + &(tree.mass(a).clone() * &fu_closed[a] * &gw_closed[a]);
        }
    }
    Ok(BilinearForm { direct, tower })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainStep<S> {
    pub name: &'static str,
    pub value: S,
    /// Computed without rounded powers.
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormEstimateReport<S> {
    pub p: Exponent,
    pub qp: S,
    /// `Q_p^{max(1, 1/(p-1))}`.
    pub q_star: S,
    pub form: BilinearForm<S>,
    /// `lhs` first, then each bound in order.
    pub steps: Vec<ChainStep<S>>,
    /// The last bound with the constant `2 p p'` in place of `K c p p'`.
    pub nominal: S,
    /// First step that is smaller than its predecessor.
    pub failing_step: Option<&'static str>,
}

impl<S: Scalar> FormEstimateReport<S> {
    pub fn lhs(&self) -> &S {
        &self.steps[0].value
    }

    pub fn rhs(&self) -> &S {
        &self.steps.last().expect("chain has steps").value
    }

    pub fn step(&self, name: &str) -> Option<&S> {
        self.steps.iter().find(|s| s.name == name).map(|s| &s.value)
    }

    /// `step[i + 1] / step[i]`, as floats.
    pub fn ratios(&self) -> Vec<f64> {
        self.steps
            .windows(2)
            .map(|w| w[1].value.to_f64() / w[0].value.to_f64())
            .collect()
    }

    pub fn holds(&self) -> bool {
        self.failing_step.is_none() && self.form.agrees()
    }
}

impl<S: Scalar> Serialize for FormEstimateReport<S> {
    fn serialize<Z: Serializer>(&self, ser: Z) -> std::result::Result<Z::Ok, Z::Error> {
        let steps: Vec<(&str, String)> = self
            .steps
            .iter()
            .map(|s| (s.name, s.value.to_decimal_string()))
            .collect();
        let mut st = ser.serialize_struct("FormEstimateReport", 8)?;
        st.serialize_field("p", &self.p.to_string())?;
        st.serialize_field("qp", &self.qp.to_decimal_string())?;
        st.serialize_field("qStar", &self.q_star.to_decimal_string())?;
        st.serialize_field("direct", &self.form.direct.to_decimal_string())?;
        st.serialize_field("tower", &self.form.tower.to_decimal_string())?;
        st.serialize_field("steps", &steps)?;
        st.serialize_field("nominal", &self.nominal.to_decimal_string())?;
        st.serialize_field("failingStep", &self.failing_step)?;
        st.end()
    }
}

/// Evaluates every bound in the chain for `f, g >= 0`.
pub fn form_bound_chain<S: Scalar>(
    op: &SparseOperator<S>,
    f: &[S],
    g: &[S],
    w: &ApWeight<S>,
) -> Result<FormEstimateReport<S>> {
    let form = bilinear_form(op, f, g, w)?;
    let tree = op.tree();
    let p = w.p;
    let pc = p.conjugate();
    let two = Exponent::integer(2);
    let exact = S::EXACT && S::pow_is_exact(p) && S::pow_is_exact(pc);

    let q_star = w.sparse_characteristic();
    let k_sparse = S::one() / &(S::one() - &op.options().sparsity_bound());
    let c_rebalance = k_sparse.pow(p.star() - two);
    let big = k_sparse.clone() * &c_rebalance * &q_star;

    let uv = w.u.values();
    let wv = w.w.values();
    let f_u = weighted_closure(f, &w.u);
    let g_w = weighted_closure(g, &w.w);
    let free = op.free_masses();

    let mut lhs = S::zero();
    let mut ap = S::zero();
    let mut sparse = S::zero();
    let mut set_holder = S::zero();
    let mut rebalance = S::zero();
    let mut sum_f = S::zero();
    let mut sum_g = S::zero();
    for k in 0..op.num_levels() {
        for (i, &a) in op.level(k).iter().enumerate() {
            let pa = tree.mass(a);
            let fg = f_u[a].clone() * &g_w[a];
            let rho = if p >= two {
                uv[a].pow(two - p)
            } else {
                wv[a].pow(two - pc)
            };
            let (u_s, w_s) = op.atoms_below(k, i).iter().fold(
                (uv[a].clone() * pa, wv[a].clone() * pa),
                |(us, ws), &b| {
                    let pb = tree.mass(b);
                    (us - &(uv[b].clone() * pb), ws - &(wv[b].clone() * pb))
                },
            );
            lhs = lhs + &(pa.clone() * &uv[a] * &wv[a] * &fg);
            ap = ap + &(pa.clone() * &rho * &fg);
            sparse = sparse + &(free[k][i].clone() * &rho * &fg);
            set_holder = set_holder + &(rho * &fg * &u_s.pow(pc.recip()) * &w_s.pow(p.recip()));
            rebalance = rebalance + &(fg * &u_s.pow(p.recip()) * &w_s.pow(pc.recip()));
            sum_f = sum_f + &(f_u[a].pow(p) * &u_s);
            sum_g = sum_g + &(g_w[a].pow(pc) * &w_s);
        }
    }
    let holder = sum_f.pow(p.recip()) * &sum_g.pow(pc.recip());
    let f_star = weighted_maximal(f, &w.u);
    let g_star = weighted_maximal(g, &w.w);
    let maximal = weighted_moment(&f_star, &w.u, p).pow(p.recip()) * &weighted_moment(&g_star, &w.w, pc).pow(pc.recip());
    let norms = weighted_moment(f, &w.u, p).pow(p.recip()) * &weighted_moment(g, &w.w, pc).pow(pc.recip());
    let pp = exponent_scalar::<S>(p) * &exponent_scalar::<S>(pc);
    let final_bound = big.clone() * &pp * &norms;
    let nominal = S::from_i64(2) * &q_star * &pp * &norms;

    let steps = vec![
        ChainStep { name: "lhs", value: lhs, exact: S::EXACT },
        ChainStep { name: "ap", value: q_star.clone() * &ap, exact },
        ChainStep { name: "sparse", value: k_sparse.clone() * &q_star * &sparse, exact },
        ChainStep { name: "set_holder", value: k_sparse * &q_star * &set_holder, exact: false },
        ChainStep { name: "rebalance", value: big.clone() * &rebalance, exact: false },
        ChainStep { name: "holder", value: big.clone() * &holder, exact: false },
        ChainStep { name: "maximal", value: big * &maximal, exact: false },
        ChainStep { name: "final", value: final_bound, exact: false },
    ];
    let failing_step = steps
        .windows(2)
        .find(|w| !le_with_slack(&w[0].value, &w[1].value, w[0].exact && w[1].exact, FLOAT_TOL))
        .map(|w| w[1].name);
    Ok(FormEstimateReport {
        p,
        qp: w.qp.clone(),
        q_star,
        form,
        steps,
        nominal,
        failing_step,
    })
}

/// Norm of the sparse operator in `L^p(w)`, directly and through the dual
/// witness `g = S(|X|)^{p-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualityCheck<S> {
    pub direct: S,
    pub via_dual: S,
}

pub fn duality_check<S: Scalar>(op: &SparseOperator<S>, x_abs: &[S], w: &ApWeight<S>) -> Result<DualityCheck<S>> {
    let p = w.p;
    let f: Vec<S> = x_abs.iter().zip(w.u.leaf_values()).map(|(a, u)| a.clone() / &u).collect();
    let s = evaluate_closed(op, &op.tree().close_scalar(x_abs));
    let g: Vec<S> = s.iter().map(|v| v.pow(p - Exponent::integer(1))).collect();
    let form = bilinear_form(op, &f, &g, w)?;
    let g_norm = weighted_norm(&g, &w.w, p.conjugate())?;
    Ok(DualityCheck {
        direct: weighted_norm(&s, &w.w, p)?,
        via_dual: form.direct / &g_norm,
    })
}

/// `||Y*||_{L^p(w)}` against the Theorem 1 bound and the measured sparse route.
#[derive(Clone, Debug, PartialEq)]
pub struct Theorem1Report<S> {
    pub p: Exponent,
    pub qp: S,
    pub q_star: S,
    /// `||Y*||_{L^p(w)}`.
    pub lhs: S,
    /// `16 p^2/(p-1) Q* ||X||_{L^p(w)}`.
    pub rhs: S,
    pub ratio: S,
    /// `||8 S(|X|)||_{L^p(w)}`.
    pub sparse_norm: S,
    pub sparse_ratio: S,
}

impl<S: Scalar> Theorem1Report<S> {
    pub fn holds(&self) -> bool {
        le_with_slack(&self.lhs, &self.rhs, false, FLOAT_TOL)
            && le_with_slack(&self.lhs, &self.sparse_norm, false, FLOAT_TOL)
    }
}

/// `16 p^2 / (p - 1)`.
pub fn theorem1_constant<S: Scalar>(p: Exponent) -> S {
    let ps = exponent_scalar::<S>(p);
    S::from_i64(16) * &ps * &ps / &(ps - &S::one())
}

pub fn theorem1_check<S: Scalar>(x: &Martingale<S>, y: &Martingale<S>, w: &ApWeight<S>) -> Result<Theorem1Report<S>> {
    let op = decompose(x, y)?;
    theorem1_with(x, y, w, &op)
}

/// [`theorem1_check`] reusing an operator already built from `(x, y)`.
pub fn theorem1_with<S: Scalar>(
    x: &Martingale<S>,
    y: &Martingale<S>,
    w: &ApWeight<S>,
    op: &SparseOperator<S>,
) -> Result<Theorem1Report<S>> {
    if let Some(wit) = is_differentially_subordinate(y, x, FLOAT_TOL)? {
        return Err(Error::NotSubordinate(wit));
    }
    if !same_tree(x.tree(), w.tree()) {
        return Err(Error::TreeMismatch);
    }
    let x_abs = x.leaf_norms()?;
    if x_abs.iter().all(Scalar::is_zero) {
        return Err(Error::ZeroProcess);
    }
    let p = w.p;
    let ystar: Vec<S> = maximal_function_sq(y).leaf_values().iter().map(Scalar::sqrt).collect();
    let lhs = weighted_norm(&ystar, &w.w, p)?;
    let x_norm = weighted_norm(&x_abs, &w.w, p)?;
    let q_star = w.sparse_characteristic();
    let rhs = theorem1_constant::<S>(p) * &q_star * &x_norm;
    let s = evaluate_closed(op, &x.tree().close_scalar(&x_abs));
    let eight_s: Vec<S> = s.iter().map(|v| op.options().domination_constant() * v).collect();
    let sparse_norm = weighted_norm(&eight_s, &w.w, p)?;
    Ok(Theorem1Report {
        p,
        qp: w.qp.clone(),
        q_star,
        ratio: lhs.clone() / &rhs,
        sparse_ratio: lhs.clone() / &sparse_norm,
        lhs,
        rhs,
        sparse_norm,
    })
}
