use std::sync::Arc;

use martsparse::generators::random_leaf_values;
use martsparse::martingale::maximal_function_sq;
use martsparse::weights::characteristic_terms;
use martsparse::*;
use proptest::prelude::*;
use rand::{Rng, RngCore};

type Q = Rational;

fn q(n: i64, d: i64) -> Q {
    Q::from_ratio(n, d)
}

fn random_branching<R: Rng>(rng: &mut R, depth: usize) -> Branching<Q> {
    if depth == 0 || rng.random_bool(0.15) {
        return Branching::leaf();
    }
    let k = rng.random_range(2..=3);
    let raw: Vec<i64> = (0..k).map(|_| rng.random_range(1..=7)).collect();
    let total: i64 = raw.iter().sum();
    Branching {
        children: raw
            .into_iter()
            .map(|m| (q(m, total), random_branching(rng, depth - 1)))
            .collect(),
    }
}

fn random_tree(seed: u64, depth: usize) -> Arc<FiltrationTree<Q>> {
    let mut rng = rng_for(seed, 0);
    loop {
        let b = random_branching(&mut rng, depth);
        if !b.children.is_empty() {
            return Arc::new(FiltrationTree::from_branching(&b).unwrap());
        }
    }
}

fn random_weight(tree: &Arc<FiltrationTree<Q>>, seed: u64) -> Weight<Q> {
    let mut rng = rng_for(seed, 1);
    let leaves: Vec<Q> = (0..tree.num_leaves()).map(|_| Q::from_i64(rng.random_range(1..=8))).collect();
    Weight::from_leaves(tree.clone(), &leaves).unwrap()
}

fn exponents() -> [Exponent; 5] {
    [
        Exponent::new(4, 3),
        Exponent::new(3, 2),
        Exponent::integer(2),
        Exponent::integer(3),
        Exponent::integer(4),
    ]
}

fn profile(i: u64) -> VolatilityProfile {
    [
        VolatilityProfile::Uniform { spread: 4 },
        VolatilityProfile::HeavyTail { max_exp: 6 },
        VolatilityProfile::Cascade,
        VolatilityProfile::Mixed,
    ][(i % 4) as usize]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tower_property(seed in any::<u64>(), d in 1usize..=3) {
        let t = random_tree(seed, 5);
        let leaves = random_leaf_values(&t, d, VolatilityProfile::Uniform { spread: 5 }, &mut rng_for(seed, 2));
        for id in 0..t.len() {
            if t.is_leaf(id) {
                continue;
            }
            let here = t.conditional_expectation(&leaves, id);
            let mut avg = vec![q(0, 1); d];
            for &c in t.children(id) {
                for (a, v) in avg.iter_mut().zip(t.conditional_expectation(&leaves, c)) {
                    *a = a.clone() + &(v * t.mass(c));
                }
            }
            let avg: Vec<Q> = avg.into_iter().map(|a| a / t.mass(id)).collect();
            prop_assert_eq!(here, avg);
        }
    }

    #[test]
    fn mass_conservation(seed in any::<u64>()) {
        let t = random_tree(seed, 5);
        let leaves = random_leaf_values(&t, 1, VolatilityProfile::Cascade, &mut rng_for(seed, 3));
        let x = Martingale::close(t.clone(), &leaves).unwrap();
        let total = |time: usize| {
            t.atoms_at(time)
                .iter()
                .fold(q(0, 1), |acc, &n| acc + &(x.value(n)[0].clone() * t.mass(n)))
        };
        let first = total(0);
        for time in 1..=t.max_depth() + 1 {
            prop_assert_eq!(total(time), first.clone());
        }
    }

    #[test]
    fn hitting_times_are_monotone_antichains(seed in any::<u64>()) {
        let t = random_tree(seed, 6);
        let mut rng = rng_for(seed, 4);
        let small: Vec<bool> = (0..t.len()).map(|_| rng.random_bool(0.2)).collect();
        let large: Vec<bool> = small.iter().map(|&s| s || rng.random_bool(0.3)).collect();
        let ts = hitting_time(&t, |n| small[n], None);
        let tl = hitting_time(&t, |n| large[n], None);
        StoppingTime::new(&t, ts.stops().to_vec()).unwrap();
        StoppingTime::new(&t, tl.stops().to_vec()).unwrap();
        for &leaf in t.leaves() {
            match (ts.at_leaf(&t, leaf), tl.at_leaf(&t, leaf)) {
                (Some(a), Some(b)) => prop_assert!(b <= a),
                (Some(_), None) => prop_assert!(false, "larger predicate never stops"),
                _ => {}
            }
        }
    }

    #[test]
    fn bracket_is_nondecreasing(seed in any::<u64>(), d in 1usize..=2) {
        let t = random_tree(seed, 6);
        let (x, _) = seeded_pair(&t, d, profile(seed), seed, 5).unwrap();
        let b = square_bracket(&x);
        for id in 1..t.len() {
            prop_assert!(b.value(t.parent(id).unwrap()) <= b.value(id));
        }
    }

    #[test]
    fn subordination_matches_bracket_difference(seed in any::<u64>(), independent in any::<bool>()) {
        let t = random_tree(seed, 5);
        let (x, y) = if independent {
            let mut rng = rng_for(seed, 6);
            let xl = random_leaf_values(&t, 2, VolatilityProfile::Uniform { spread: 3 }, &mut rng);
            let yl = random_leaf_values(&t, 2, VolatilityProfile::Uniform { spread: 3 }, &mut rng);
            (Martingale::close(t.clone(), &xl).unwrap(), Martingale::close(t.clone(), &yl).unwrap())
        } else {
            seeded_pair(&t, 2, profile(seed), seed, 6).unwrap()
        };
        let (bx, by) = (square_bracket(&x), square_bracket(&y));
        let diff = |n: NodeId| bx.value(n).clone() - by.value(n);
        let direct = diff(0) >= q(0, 1) && (1..t.len()).all(|n| diff(n) >= diff(t.parent(n).unwrap()));
        let got = is_differentially_subordinate(&y, &x, 0.0).unwrap();
        prop_assert_eq!(got.is_none(), direct);
        if !independent {
            prop_assert!(direct);
        }
    }

    #[test]
    fn norm_of_mean_below_mean_of_norm(seed in any::<u64>(), d in 1usize..=3) {
        let t = random_tree(seed, 5);
        let (x, _) = seeded_pair(&t, d, profile(seed), seed, 7).unwrap();
        let closure = x.norm_closure().unwrap();
        for id in 0..t.len() {
            prop_assert!(x.norm_sq(id) <= closure.value(id).clone() * closure.value(id));
        }
    }

    #[test]
    fn wang_weak_type_bound(seed in any::<u64>(), d in 1usize..=2) {
        let t = random_tree(seed, 6);
        let (x, y) = seeded_pair(&t, d, profile(seed), seed, 8).unwrap();
        prop_assume!(!x.is_zero());
        for k in -4..=8 {
            let lambda = if k < 0 { q(1, 1i64 << -k) } else { Q::from_i64(1i64 << k) };
            prop_assert!(weak_type_check(&x, &y, &lambda).unwrap() <= q(2, 1));
        }
    }

    #[test]
    fn dual_weight_is_an_involution(seed in any::<u64>()) {
        let t = random_tree(seed, 5);
        let w = random_weight(&t, seed);
        let p = Exponent::integer(2);
        let back = dual_weight(&dual_weight(&w, p).unwrap(), p.conjugate()).unwrap();
        prop_assert_eq!(back.leaf_values(), w.leaf_values());
        for p in [Exponent::new(3, 2), Exponent::integer(3)] {
            let back = dual_weight(&dual_weight(&w, p).unwrap(), p.conjugate()).unwrap();
            for (a, b) in back.leaf_values().iter().zip(w.leaf_values()) {
                let (a, b) = (Scalar::to_f64(a), Scalar::to_f64(&b));
                prop_assert!((a - b).abs() <= 1e-12 * b);
            }
        }
    }

    #[test]
    fn characteristic_at_least_one(seed in any::<u64>(), constant in any::<bool>()) {
        let t = random_tree(seed, 5);
        let w = if constant {
            Weight::from_leaves(t.clone(), &vec![q(3, 1); t.num_leaves()]).unwrap()
        } else {
            random_weight(&t, seed)
        };
        let (qp, _) = ap_characteristic(&w, Exponent::integer(2)).unwrap();
        prop_assert!(qp >= q(1, 1));
        // a node where the leaves below disagree forces Q_2 > 1
        let varies = (0..t.len()).any(|n| {
            let r = t.leaf_range(n);
            let lv = w.leaf_values();
            lv[r.clone()].iter().any(|v| *v != lv[r.start])
        });
        prop_assert_eq!(qp == q(1, 1), !varies);
        prop_assert_eq!(w.is_constant(), !varies);
    }

    #[test]
    fn dual_characteristic_identity(seed in any::<u64>()) {
        let t = random_tree(seed, 5);
        let w = random_weight(&t, seed);
        for p in exponents() {
            let a = ApWeight::new(w.clone(), p).unwrap();
            let dual = ApWeight::new(a.u.clone(), p.conjugate()).unwrap();
            let expected = Scalar::pow(&a.qp, (p - Exponent::integer(1)).recip()).to_f64();
            prop_assert!((dual.qp.to_f64() - expected).abs() <= 1e-9 * expected);
            let tw = characteristic_terms(&a.w, &a.u, p);
            let tu = characteristic_terms(&a.u, &a.w, p.conjugate());
            for (x, y) in tw.iter().zip(&tu) {
                let lhs = Scalar::pow(x, p.conjugate() - Exponent::integer(1)).to_f64();
                prop_assert!((lhs - y.to_f64()).abs() <= 1e-9 * lhs);
            }
        }
    }

    #[test]
    fn doob_ratio_bounded(seed in any::<u64>()) {
        let t = random_tree(seed, 6);
        let (x, _) = seeded_pair(&t, 1, profile(seed), seed, 9).unwrap();
        let z = x.leaf_norms().unwrap();
        prop_assume!(z.iter().any(|v| !v.is_zero()));
        let w = random_weight(&t, seed);
        for p in exponents() {
            let r = doob_ratio(&z, &w, p).unwrap().to_f64();
            prop_assert!(r <= p.to_f64() / (p.to_f64() - 1.0) * (1.0 + 1e-12), "p = {}: {}", p, r);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn decomposition_certifies(seed in any::<u64>(), d in 1usize..=2, jump in 0u32..=12) {
        let t = if jump >= 4 {
            Arc::new(jump_tree::<Q>(6, &q(1, 1 << jump)).unwrap())
        } else {
            random_tree(seed, 6)
        };
        let (x, y) = seeded_pair(&t, d, profile(seed), seed, 10).unwrap();
        let op = decompose(&x, &y).unwrap();
        let cert = op.certificate().unwrap();
        prop_assert!(cert.holds(), "{:?}", cert.failures);
        let sp = verify_sparsity(&op);
        prop_assert!(sp.max_ratio <= q(1, 2));
        let dom = verify_pointwise_domination(&y, &op, &x).unwrap();
        prop_assert!(dom.passes(), "{:?}", dom.failures);
        prop_assert!(dom.margin >= q(0, 1));
        // free parts keep at least half of each atom
        for (k, masses) in op.free_masses().iter().enumerate() {
            for (i, m) in masses.iter().enumerate() {
                let atom = op.level(k)[i];
                prop_assert!(m.clone() * &q(2, 1) >= *t.mass(atom));
            }
        }
        // free parts are disjoint: they cover at most the whole space
        let covered = op.free_masses().iter().flatten().fold(q(0, 1), |a, m| a + m);
        prop_assert!(covered <= q(1, 1));
    }

    #[test]
    fn form_chain_and_theorems(seed in any::<u64>(), d in 1usize..=3) {
        let t = random_tree(seed, 5);
        let (x, y) = seeded_pair(&t, d, profile(seed), seed, 11).unwrap();
        prop_assume!(!x.is_zero());
        let op = decompose(&x, &y).unwrap();
        let w = random_weight(&t, seed);
        let x_abs = x.leaf_norms().unwrap();
        for p in exponents() {
            let aw = ApWeight::new(w.clone(), p).unwrap();
            let f: Vec<Q> = x_abs.iter().zip(aw.u.leaf_values()).map(|(a, u)| a.clone() / &u).collect();
            let s = evaluate_sparse(&op, &x_abs).unwrap();
            let g: Vec<Q> = s.iter().map(|v| Scalar::pow(v, p - Exponent::integer(1))).collect();
            let rep = form_bound_chain(&op, &f, &g, &aw).unwrap();
            prop_assert!(rep.holds(), "p = {}: {:?}", p, rep.failing_step);
            prop_assert!(rep.form.agrees());
            let th1 = theorem1_with(&x, &y, &aw, &op).unwrap();
            prop_assert!(th1.holds() && th1.ratio.to_f64() <= 1.0, "p = {}", p);
            let th2 = theorem2_check(&x, &aw).unwrap();
            prop_assert!(th2.holds(), "p = {}: {:?}", p, th2.failing_stage);
            prop_assert!(th2.identities_hold());
            let m = th2.pointwise.min_margin().to_f64();
            prop_assert!(m >= -1e-9);
        }
    }
}

#[test]
fn y_equal_x_passes_both_theorems() {
    let t = random_tree(99, 6);
    let (x, _) = seeded_pair(&t, 2, VolatilityProfile::Cascade, 99, 0).unwrap();
    let w = random_weight(&t, 99);
    for p in exponents() {
        let aw = ApWeight::new(w.clone(), p).unwrap();
        assert!(theorem1_check(&x, &x, &aw).unwrap().holds());
        assert!(theorem2_check(&x, &aw).unwrap().holds());
        if p > Exponent::integer(2) {
            let c1 = martsparse::form::theorem1_constant::<f64>(p) * aw.qp.to_f64().powf(1.0f64.max(1.0 / (p.to_f64() - 1.0)));
            let c2 = martsparse::lerner::theorem2_constant::<f64>(p) * aw.qp.to_f64().powf(1.0 / (p.to_f64() - 1.0));
            assert!(c2 < c1);
        }
    }
}

#[test]
fn maximal_square_runs_up() {
    let x = doubling_martingale::<Q>(5).unwrap();
    let m = maximal_function_sq(&x);
    let t = x.tree();
    for id in 1..t.len() {
        assert!(m.value(t.parent(id).unwrap()) <= m.value(id));
    }
    let mut rng = rng_for(1, 1);
    assert_ne!(rng.next_u64(), rng_for(1, 2).next_u64());
}
