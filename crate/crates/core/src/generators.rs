//! Seeded generators for trees, martingales, subordinate pairs and weights.
//!
//! Every random value has finite support and rational coordinates. Leaf
//! directions are Pythagorean unit vectors, so leaf norms stay rational in
//! any dimension and oracle runs remain exact.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::martingale::{transform, Martingale, Multipliers};
use crate::scalar::{Exponent, Scalar};
use crate::tree::{Branching, FiltrationTree, NodeId};
use crate::weights::Weight;

/// Independent stream for trial `trial` of a run seeded with `seed`.
pub fn rng_for(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// How leaf values of `X` are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolatilityProfile {
    /// `X` is constant.
    Constant,
    /// Magnitudes uniform on `0..=spread`.
    Uniform { spread: u32 },
    /// Magnitude `2^k` with probability about `2^{-k}`, `k <= max_exp`.
    HeavyTail { max_exp: u32 },
    /// Multiplicative cascade: at each split one child absorbs a fraction
    /// of the others' mass.
    Cascade,
    /// One of the above, chosen per draw.
    Mixed,
}

impl fmt::Display for VolatilityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolatilityProfile::Constant => write!(f, "constant"),
            VolatilityProfile::Uniform { spread } => write!(f, "uniform:{spread}"),
            VolatilityProfile::HeavyTail { max_exp } => write!(f, "heavy-tail:{max_exp}"),
            VolatilityProfile::Cascade => write!(f, "cascade"),
            VolatilityProfile::Mixed => write!(f, "mixed"),
        }
    }
}

impl FromStr for VolatilityProfile {
    type Err = Error;

    /// `constant`, `uniform[:spread]`, `heavy-tail[:max_exp]`, `cascade`, `mixed`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: u32| -> Result<u32> {
            arg.map_or(Ok(default), |a| {
                a.parse().map_err(|_| Error::OutOfRange(format!("bad profile parameter {a:?}")))
            })
        };
        match name {
            "constant" => Ok(VolatilityProfile::Constant),
            "uniform" => Ok(VolatilityProfile::Uniform { spread: num(4)? }),
            "heavy-tail" => Ok(VolatilityProfile::HeavyTail { max_exp: num(8)? }),
            "cascade" => Ok(VolatilityProfile::Cascade),
            "mixed" => Ok(VolatilityProfile::Mixed),
            other => Err(Error::OutOfRange(format!("unknown volatility profile {other:?}"))),
        }
    }
}

const TRIPLES_2D: [(i64, i64, i64); 4] = [(1, 0, 1), (3, 4, 5), (5, 12, 13), (8, 15, 17)];
const TRIPLES_3D: [(i64, i64, i64, i64); 3] = [(1, 0, 0, 1), (1, 2, 2, 3), (2, 3, 6, 7)];

fn random_sign<R: Rng>(rng: &mut R) -> i64 {
    if rng.random_bool(0.5) {
        1
    } else {
        -1
    }
}

/// A rational unit vector in `R^d`.
pub fn random_direction<S: Scalar, R: Rng>(d: usize, rng: &mut R) -> Vec<S> {
    let support = match d {
        1 => 1,
        2 | 3 => d,
        _ => rng.random_range(1..=3),
    };
    let mut coords: Vec<(i64, i64)> = match support {
        1 => vec![(1, 1)],
        2 => {
            let (a, b, c) = TRIPLES_2D[rng.random_range(0..TRIPLES_2D.len())];
            vec![(a, c), (b, c)]
        }
        _ => {
            let (a, b, e, c) = TRIPLES_3D[rng.random_range(0..TRIPLES_3D.len())];
            vec![(a, c), (b, c), (e, c)]
        }
    };
    coords.shuffle(rng);
    let mut slots: Vec<usize> = (0..d).collect();
    slots.shuffle(rng);
    let mut v = vec![S::zero(); d];
    for (&slot, (n, den)) in slots.iter().zip(coords) {
        v[slot] = S::from_ratio(random_sign(rng) * n, den);
    }
    v
}

/// `c Q` with `c` in `{0, 1/4, 1/2, 3/4, 1}` and `Q` a signed permutation or,
/// in the plane, a Pythagorean rotation or reflection.
pub fn random_contraction<S: Scalar, R: Rng>(d: usize, rng: &mut R) -> Matrix<S> {
    let c = S::from_ratio(rng.random_range(0..=4), 4);
    let q = if d == 2 && rng.random_bool(0.5) {
        let (a, b, h) = TRIPLES_2D[rng.random_range(0..TRIPLES_2D.len())];
        let (a, b) = (S::from_ratio(a, h), S::from_ratio(b * random_sign(rng), h));
        if rng.random_bool(0.5) {
            Matrix::from_rows(vec![vec![a.clone(), -b.clone()], vec![b, a]])
        } else {
            Matrix::from_rows(vec![vec![a.clone(), b.clone()], vec![b, -a]])
        }
    } else {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        let rows = perm
            .iter()
            .map(|&j| {
                let mut row = vec![S::zero(); d];
                row[j] = S::from_i64(random_sign(rng));
                row
            })
            .collect();
        Matrix::from_rows(rows)
    };
    q.scaled(&c)
}

fn leaf_magnitudes<S: Scalar, R: Rng>(tree: &FiltrationTree<S>, profile: VolatilityProfile, rng: &mut R) -> Vec<S> {
    let n = tree.num_leaves();
    match profile {
        VolatilityProfile::Constant => vec![S::from_i64(rng.random_range(1..=4)); n],
        VolatilityProfile::Uniform { spread } => (0..n)
            .map(|_| S::from_i64(rng.random_range(0..=spread as i64)))
            .collect(),
        VolatilityProfile::HeavyTail { max_exp } => (0..n)
            .map(|_| {
                if rng.random_bool(0.125) {
                    return S::zero();
                }
                let mut k = 0;
                while k < max_exp && rng.random_bool(0.5) {
                    k += 1;
                }
                S::from_i64(1i64 << k)
            })
            .collect(),
        VolatilityProfile::Cascade => {
            let mut node = vec![S::zero(); tree.len()];
            node[0] = S::one();
            let shares = [S::zero(), S::from_ratio(1, 2), S::one()];
            for id in 0..tree.len() {
                let kids = tree.children(id);
                if kids.is_empty() {
                    continue;
                }
                let a = shares[rng.random_range(0..3)].clone();
                let pick = kids[rng.random_range(0..kids.len())];
                for &c in kids {
                    let factor = if c == pick {
                        let q = tree.mass(c).clone() / tree.mass(id);
                        S::one() + &(a.clone() * &(S::one() - &q) / &q)
                    } else {
                        S::one() - &a
                    };
                    node[c] = node[id].clone() * &factor;
                }
            }
            tree.leaves().iter().map(|&l| node[l].clone()).collect()
        }
        VolatilityProfile::Mixed => {
            let pick = match rng.random_range(0..3) {
                0 => VolatilityProfile::Uniform { spread: 4 },
                1 => VolatilityProfile::HeavyTail { max_exp: 8 },
                _ => VolatilityProfile::Cascade,
            };
            leaf_magnitudes(tree, pick, rng)
        }
    }
}

/// Leaf values of `X`: magnitudes from the profile times rational unit
/// directions. Under the cascade the direction is inherited down the tree
/// and redrawn with probability 1/4 per node.
pub fn random_leaf_values<S: Scalar, R: Rng>(
    tree: &FiltrationTree<S>,
    d: usize,
    profile: VolatilityProfile,
    rng: &mut R,
) -> Vec<Vec<S>> {
    let mags = leaf_magnitudes(tree, profile, rng);
    let dirs: Vec<Vec<S>> = match profile {
        VolatilityProfile::Constant => vec![random_direction(d, rng); tree.num_leaves()],
        VolatilityProfile::Cascade => {
            let mut node: Vec<Vec<S>> = vec![Vec::new(); tree.len()];
            node[0] = random_direction(d, rng);
            for id in 1..tree.len() {
                let p = tree.parent(id).expect("non-root has a parent");
                node[id] = if rng.random_bool(0.25) {
                    random_direction(d, rng)
                } else {
                    node[p].clone()
                };
            }
            tree.leaves().iter().map(|&l| node[l].clone()).collect()
        }
        _ => (0..tree.num_leaves()).map(|_| random_direction(d, rng)).collect(),
    };
    mags.iter()
        .zip(dirs)
        .map(|(m, dir)| dir.into_iter().map(|c| c * m).collect())
        .collect()
}

/// `X` from random leaves and `Y = transform(X)` with random
/// parent-indexed contractions.
pub fn random_subordinate_pair<S: Scalar, R: Rng>(
    tree: &Arc<FiltrationTree<S>>,
    d: usize,
    profile: VolatilityProfile,
    rng: &mut R,
) -> Result<(Martingale<S>, Martingale<S>)> {
    if d == 0 {
        return Err(Error::OutOfRange("dimension must be at least 1".into()));
    }
    let leaves = random_leaf_values(tree, d, profile, rng);
    let x = Martingale::close(tree.clone(), &leaves)?;
    let initial = random_contraction(d, rng);
    let ms = (0..tree.len())
        .map(|id| {
            if tree.is_leaf(id) {
                Matrix::zeros(d)
            } else {
                random_contraction(d, rng)
            }
        })
        .collect();
    let y = transform(&x, &initial, &Multipliers::ByParent(ms))?;
    Ok((x, y))
}

/// [`random_subordinate_pair`] on the stream for `(seed, trial)`.
pub fn seeded_pair<S: Scalar>(
    tree: &Arc<FiltrationTree<S>>,
    d: usize,
    profile: VolatilityProfile,
    seed: u64,
    trial: u64,
) -> Result<(Martingale<S>, Martingale<S>)> {
    random_subordinate_pair(tree, d, profile, &mut rng_for(seed, trial))
}

/// Dyadic martingale from 1: at each step the left child is 0 and the right
/// child doubles.
pub fn doubling_martingale<S: Scalar>(depth: usize) -> Result<Martingale<S>> {
    if depth == 0 {
        return Err(Error::OutOfRange("depth must be at least 1".into()));
    }
    if depth > 62 {
        return Err(Error::OutOfRange("depth must be at most 62".into()));
    }
    let tree = Arc::new(FiltrationTree::dyadic(depth));
    let mut leaves = vec![S::zero(); tree.num_leaves()];
    *leaves.last_mut().expect("tree has leaves") = S::from_i64(1i64 << depth);
    Martingale::close_scalar(tree, &leaves)
}

/// Root split `(epsilon, 1 - epsilon)` with dyadic subtrees so that every
/// leaf sits at `depth`.
pub fn jump_tree<S: Scalar>(depth: usize, epsilon: &S) -> Result<FiltrationTree<S>> {
    if !(*epsilon > S::zero() && *epsilon <= S::from_ratio(1, 2)) {
        return Err(Error::OutOfRange(format!("epsilon {epsilon:?} outside (0, 1/2]")));
    }
    if depth == 0 {
        return Err(Error::OutOfRange("depth must be at least 1".into()));
    }
    fn dyadic<S: Scalar>(depth: usize) -> Branching<S> {
        if depth == 0 {
            return Branching::leaf();
        }
        let half = S::from_ratio(1, 2);
        Branching {
            children: vec![(half.clone(), dyadic(depth - 1)), (half, dyadic(depth - 1))],
        }
    }
    let spec = Branching {
        children: vec![
            (epsilon.clone(), dyadic(depth - 1)),
            (S::one() - epsilon, dyadic(depth - 1)),
        ],
    };
    FiltrationTree::from_branching(&spec)
}

/// Leaf means of `x^alpha` over the interval of `[0, 1)` each leaf covers.
/// Requires `0 < alpha < p - 1`.
pub fn power_weight<S: Scalar>(tree: Arc<FiltrationTree<S>>, alpha: Exponent, p: Exponent) -> Result<Weight<S>> {
    if !(alpha > Exponent::integer(0) && alpha < p - Exponent::integer(1)) {
        return Err(Error::OutOfRange(format!("alpha {alpha} outside (0, {})", p - Exponent::integer(1))));
    }
    let a1 = alpha + Exponent::integer(1);
    let a1s = S::from_ratio(a1.numer(), a1.denom());
    let iv = tree.intervals();
    let leaves: Vec<S> = tree
        .leaves()
        .iter()
        .map(|&l| {
            let (a, b) = &iv[l];
            (Scalar::pow(b, a1) - &Scalar::pow(a, a1)) / &(a1s.clone() * &(b.clone() - a))
        })
        .collect();
    Weight::from_leaves(tree, &leaves)
}

/// `high` on the leaves below `region`, `low` elsewhere.
pub fn two_value_weight<S: Scalar>(tree: Arc<FiltrationTree<S>>, region: NodeId, high: S, low: S) -> Result<Weight<S>> {
    let range = tree.leaf_range(region);
    let leaves: Vec<S> = (0..tree.num_leaves())
        .map(|pos| if range.contains(&pos) { high.clone() } else { low.clone() })
        .collect();
    Weight::from_leaves(tree, &leaves)
}
