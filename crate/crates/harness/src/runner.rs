//! Trial corpus for `verify`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use martsparse::martingale::{joint_maximal_sq, weak_type_ratio};
use martsparse::{
    decompose, doob_ratio, evaluate_sparse, exponent_scalar, form_bound_chain, is_differentially_subordinate,
    jump_tree, le_with_slack, power_weight, seeded_pair, theorem1_with, theorem2_check, two_value_weight,
    verify_pointwise_domination, verify_sparsity, ApWeight, Exponent, FiltrationTree, Martingale, Rational,
    Scalar, SparseOperator, VolatilityProfile, Weight, FLOAT_TOL,
};
use serde::Serialize;

use crate::config::{Arithmetic, Config, Suite, TreeKind, WeightFamily};
use crate::error::{HarnessError, Result};
use crate::files::{load_tree, read_json, SparseFixture};

/// Number of levels in the weak-type grid.
pub const WEAK_GRID: usize = 20;

/// Whether trials are spread over a worker pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Execution::Sequential;
    }
}

/// One CSV row: a trial at one exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub trial: u64,
    pub p: Exponent,
    pub d: usize,
    pub depth: usize,
    pub qp: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Failure {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<String>,
    pub suite: String,
    pub detail: String,
}

/// Per-suite counts with the extreme observed value.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Tally {
    pub checks: u64,
    pub failures: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_margin: Option<f64>,
}

impl Tally {
    fn record(&mut self, ok: bool, ratio: Option<f64>, margin: Option<f64>) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
        }
        if let Some(r) = ratio {
            self.max_ratio = Some(self.max_ratio.map_or(r, |m| m.max(r)));
        }
        if let Some(m) = margin {
            self.min_margin = Some(self.min_margin.map_or(m, |x| x.min(m)));
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunResult {
    pub rows: Vec<Row>,
    pub failures: Vec<Failure>,
    pub tallies: BTreeMap<Suite, Tally>,
    pub fixtures_checked: usize,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Default)]
struct TrialOutcome {
    rows: Vec<Row>,
    failures: Vec<Failure>,
    observations: Vec<(Suite, bool, Option<f64>, Option<f64>)>,
}

impl TrialOutcome {
    fn observe(&mut self, suite: Suite, ok: bool, ratio: Option<f64>, margin: Option<f64>) {
        self.observations.push((suite, ok, ratio, margin));
    }

    fn fail(&mut self, trial: u64, p: Option<Exponent>, suite: Suite, detail: String) {
        self.failures.push(Failure {
            trial: Some(trial),
            p: p.map(|p| p.to_string()),
            suite: suite.name().into(),
            detail,
        });
    }
}

struct Context<S: Scalar> {
    seed: u64,
    tree: Arc<FiltrationTree<S>>,
    dims: Vec<usize>,
    profile: VolatilityProfile,
    suites: Vec<Suite>,
    family: WeightFamily,
    ps: Vec<Exponent>,
    /// `weights[i][f]` for exponent `i` and family `f` in constant, two-value, power.
    weights: Vec<[Option<ApWeight<S>>; 3]>,
}

pub fn build_tree<S: Scalar>(cfg: &Config) -> Result<FiltrationTree<S>> {
    let t = &cfg.tree;
    Ok(match t.kind {
        TreeKind::Dyadic => FiltrationTree::dyadic(t.depth),
        TreeKind::Uniform => FiltrationTree::uniform(t.arity.unwrap_or(3), t.depth),
        TreeKind::Jump => {
            let eps = t
                .epsilon
                .as_ref()
                .ok_or_else(|| HarnessError::Config("jump trees need epsilon".into()))?
                .scalar::<S>()?;
            jump_tree(t.depth, &eps)?
        }
    })
}

fn family_weight<S: Scalar>(cfg: &Config, tree: &Arc<FiltrationTree<S>>, family: usize, p: Exponent) -> Result<Weight<S>> {
    let params = &cfg.weight.params;
    Ok(match family {
        0 => Weight::constant(tree.clone()),
        1 => {
            let region = params.region.unwrap_or(1);
            if region >= tree.len() {
                return Err(HarnessError::Config(format!("weight region {region} is not a node")));
            }
            let high = params.high.as_ref().map_or(Ok(S::from_i64(4)), |n| n.scalar::<S>())?;
            let low = params.low.as_ref().map_or(Ok(S::one()), |n| n.scalar::<S>())?;
            two_value_weight(tree.clone(), region, high, low)?
        }
        _ => power_weight(tree.clone(), cfg.alpha(p)?, p)?,
    })
}

impl<S: Scalar> Context<S> {
    fn new(cfg: &Config) -> Result<Self> {
        let tree = Arc::new(build_tree::<S>(cfg)?);
        let ps = cfg.exponents()?;
        let used: Vec<usize> = match cfg.weight.family {
            WeightFamily::Constant => vec![0],
            WeightFamily::TwoValue => vec![1],
            WeightFamily::Power => vec![2],
            WeightFamily::Cycle => vec![0, 1, 2],
        };
        let mut weights = Vec::with_capacity(ps.len());
        for &p in &ps {
            let mut slot: [Option<ApWeight<S>>; 3] = [None, None, None];
            for &f in &used {
                slot[f] = Some(ApWeight::new(family_weight(cfg, &tree, f, p)?, p)?);
            }
            weights.push(slot);
        }
        Ok(Context {
            seed: cfg.seed,
            tree,
            dims: cfg.dimension.list(),
            profile: cfg.volatility()?,
            suites: cfg.suites.clone(),
            family: cfg.weight.family,
            ps,
            weights,
        })
    }

    fn has(&self, s: Suite) -> bool {
        self.suites.contains(&s)
    }

    fn weight(&self, pi: usize, trial: u64) -> &ApWeight<S> {
        let f = match self.family {
            WeightFamily::Constant => 0,
            WeightFamily::TwoValue => 1,
            WeightFamily::Power => 2,
            WeightFamily::Cycle => (trial % 3) as usize,
        };
        self.weights[pi][f].as_ref().expect("weights are built for the configured family")
    }

    fn run_trial(&self, trial: u64) -> TrialOutcome {
        let mut out = TrialOutcome::default();
        let d = self.dims[(trial % self.dims.len() as u64) as usize];
        if let Err(e) = self.trial_checks(trial, d, &mut out) {
            out.failures.push(Failure {
                trial: Some(trial),
                p: None,
                suite: "trial".into(),
                detail: format!("aborted: {e}"),
            });
            out.rows = self
                .ps
                .iter()
                .map(|&p| self.row(trial, p, d, f64::NAN, [f64::NAN; 3], false))
                .collect();
        }
        out
    }

    fn row(&self, trial: u64, p: Exponent, d: usize, qp: f64, [lhs, rhs, ratio]: [f64; 3], pass: bool) -> Row {
        Row {
            trial,
            p,
            d,
            depth: self.tree.max_depth(),
            qp,
            lhs,
            rhs,
            ratio,
            pass,
        }
    }

    fn trial_checks(&self, trial: u64, d: usize, out: &mut TrialOutcome) -> martsparse::Result<()> {
        let (x, y) = seeded_pair(&self.tree, d, self.profile, self.seed, trial)?;
        let mut trial_ok = true;
        let mut headline: Option<[f64; 3]> = None;

        if self.has(Suite::Subordination) {
            let wit = is_differentially_subordinate(&y, &x, FLOAT_TOL)?;
            out.observe(Suite::Subordination, wit.is_none(), None, None);
            if let Some(w) = wit {
                trial_ok = false;
                out.fail(trial, None, Suite::Subordination, format!("first violation at {w}"));
            }
        }

        let nonzero = !x.is_zero();
        if self.has(Suite::WeakType) && nonzero {
            let (worst, ok) = weak_type_sweep(&x, &y)?;
            out.observe(Suite::WeakType, ok, Some(worst), None);
            if !ok {
                trial_ok = false;
                out.fail(trial, None, Suite::WeakType, format!("ratio {worst:.6} exceeds 2"));
            }
            headline = Some([worst, 2.0, worst / 2.0]);
        }

        let needs_op = [Suite::Sparsity, Suite::Domination, Suite::Chain, Suite::Theorem1]
            .iter()
            .any(|&s| self.has(s));
        let op = if needs_op { Some(decompose(&x, &y)?) } else { None };
        if let Some(op) = &op {
            if self.has(Suite::Sparsity) {
                let cert = op.certificate().expect("decompose certifies");
                let sp = verify_sparsity(op);
                let ok = cert.holds() && sp.holds();
                let r = sp.max_ratio.to_f64();
                out.observe(Suite::Sparsity, ok, Some(r), None);
                if !ok {
                    trial_ok = false;
                    let mut detail = cert.failures.join("; ");
                    if let Some((j, node)) = sp.witness {
                        detail = format!("atom {node} at level {j} has ratio {r:.6} > {:.6}; {detail}", sp.bound.to_f64());
                    }
                    out.fail(trial, None, Suite::Sparsity, detail);
                }
                if headline.is_none() {
                    headline = Some([r, sp.bound.to_f64(), r / sp.bound.to_f64()]);
                }
            }
            if self.has(Suite::Domination) {
                let dom = verify_pointwise_domination(&y, op, &x)?;
                let ok = dom.passes();
                out.observe(Suite::Domination, ok, None, Some(dom.margin.to_f64()));
                if !ok {
                    trial_ok = false;
                    out.fail(
                        trial,
                        None,
                        Suite::Domination,
                        format!("margin {:.6e} at leaf {}; {}", dom.margin.to_f64(), dom.worst_leaf, dom.failures.join("; ")),
                    );
                }
            }
        }

        let x_abs = x.leaf_norms()?;
        let sparse = match &op {
            Some(op) if self.has(Suite::Chain) && nonzero => Some(evaluate_sparse(op, &x_abs)?),
            _ => None,
        };
        for (pi, &p) in self.ps.iter().enumerate() {
            let aw = self.weight(pi, trial);
            let mut ok = trial_ok;
            let mut line = headline;
            if nonzero {
                ok &= self.exponent_checks(trial, p, aw, &x, &y, op.as_ref(), &x_abs, sparse.as_deref(), out, &mut line)?;
            }
            let line = line.unwrap_or([0.0, 0.0, 0.0]);
            out.rows.push(self.row(trial, p, d, aw.qp.to_f64(), line, ok));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn exponent_checks(
        &self,
        trial: u64,
        p: Exponent,
        aw: &ApWeight<S>,
        x: &Martingale<S>,
        y: &Martingale<S>,
        op: Option<&SparseOperator<S>>,
        x_abs: &[S],
        sparse: Option<&[S]>,
        out: &mut TrialOutcome,
        line: &mut Option<[f64; 3]>,
    ) -> martsparse::Result<bool> {
        let mut ok = true;
        if let (Some(op), Some(s)) = (op, sparse) {
            let f: Vec<S> = x_abs
                .iter()
                .zip(aw.u.leaf_values())
                .map(|(a, u)| a.clone() / &u)
                .collect();
            let g: Vec<S> = s.iter().map(|v| v.pow(p - Exponent::integer(1))).collect();
            let rep = form_bound_chain(op, &f, &g, aw)?;
            let good = rep.holds();
            out.observe(Suite::Chain, good, Some(rep.lhs().to_f64() / rep.rhs().to_f64()), None);
            if !good {
                ok = false;
                let step = rep.failing_step.unwrap_or("tower");
                out.fail(trial, Some(p), Suite::Chain, format!("step {step} breaks the chain"));
            }
        }
        if self.has(Suite::Theorem2) {
            let rep = theorem2_check(x, aw)?;
            let good = rep.holds() && rep.identities_hold();
            let r = rep.ratio.to_f64();
            out.observe(Suite::Theorem2, good, Some(r), Some(rep.pointwise.min_margin().to_f64()));
            if !good {
                ok = false;
                let stage = rep.failing_stage.unwrap_or("pointwise");
                out.fail(trial, Some(p), Suite::Theorem2, format!("ratio {r:.6}, stage {stage}"));
            }
            *line = Some([rep.lhs.to_f64(), rep.rhs.to_f64(), r]);
        }
        if let (true, Some(op)) = (self.has(Suite::Theorem1), op) {
            let rep = theorem1_with(x, y, aw, op)?;
            let r = rep.ratio.to_f64();
            let good = rep.holds();
            out.observe(Suite::Theorem1, good, Some(r), None);
            if !good {
                ok = false;
                out.fail(
                    trial,
                    Some(p),
                    Suite::Theorem1,
                    format!("ratio {r:.6}, sparse ratio {:.6}", rep.sparse_ratio.to_f64()),
                );
            }
            *line = Some([rep.lhs.to_f64(), rep.rhs.to_f64(), r]);
        }
        if self.has(Suite::Doob) {
            let r = doob_ratio(x_abs, &aw.w, p)?;
            let ps = exponent_scalar::<S>(p);
            let bound = ps.clone() / &(ps - &S::one());
            let good = le_with_slack(&r, &bound, false, FLOAT_TOL);
            out.observe(Suite::Doob, good, Some(r.to_f64() / bound.to_f64()), None);
            if !good {
                ok = false;
                out.fail(trial, Some(p), Suite::Doob, format!("ratio {:.6} exceeds p/(p-1)", r.to_f64()));
            }
        }
        Ok(ok)
    }
}

/// Worst `lambda P(X* v Y* > lambda) / ||X||_1` over a geometric grid
/// `lambda = M (2/3)^i` below the largest running maximum `M`.
pub fn weak_type_sweep<S: Scalar>(x: &Martingale<S>, y: &Martingale<S>) -> martsparse::Result<(f64, bool)> {
    let joint = joint_maximal_sq(x, y)?;
    let l1 = x.l1_norm()?;
    let top = joint.iter().cloned().fold(S::zero(), S::max_of);
    let mut lambda = S::from_f64(top.to_f64().sqrt());
    let shrink = S::from_ratio(2, 3);
    let two = S::from_i64(2);
    let mut worst = S::zero();
    for _ in 0..WEAK_GRID {
        let r = weak_type_ratio(x.tree(), &joint, &l1, &lambda);
        worst = S::max_of(worst, r);
        lambda = lambda * &shrink;
    }
    Ok((worst.to_f64(), le_with_slack(&worst, &two, S::EXACT, FLOAT_TOL)))
}

fn map_trials<T: Send>(
    trials: u64,
    execution: Execution,
    threads: Option<usize>,
    f: impl Fn(u64) -> T + Sync + Send,
) -> Result<Vec<T>> {
    match execution {
        Execution::Sequential => {
            let _ = threads;
            Ok((0..trials).map(f).collect())
        }
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()?;
            // collect keeps trial order, so the worker count never changes output
            Ok(pool.install(|| (0..trials).into_par_iter().map(f).collect()))
        }
    }
}

fn run_corpus<S: Scalar>(cfg: &Config, execution: Execution) -> Result<RunResult> {
    let ctx = Context::<S>::new(cfg)?;
    let outcomes = map_trials(cfg.trials, execution, cfg.parallelism, |t| ctx.run_trial(t))?;
    let mut result = RunResult::default();
    for s in &ctx.suites {
        result.tallies.insert(*s, Tally::default());
    }
    for o in outcomes {
        result.rows.extend(o.rows);
        result.failures.extend(o.failures);
        for (s, ok, r, m) in o.observations {
            result.tallies.entry(s).or_default().record(ok, r, m);
        }
    }
    Ok(result)
}

/// Runs the corpus and any sparse fixtures.
pub fn run(cfg: &Config, execution: Execution) -> Result<RunResult> {
    let mut result = match cfg.arithmetic {
        Arithmetic::Float => run_corpus::<f64>(cfg, execution)?,
        Arithmetic::Exact => run_corpus::<Rational>(cfg, execution)?,
    };
    for path in &cfg.sparse_fixtures {
        result.failures.extend(check_fixture(path)?);
        result.fixtures_checked += 1;
    }
    Ok(result)
}

/// Sparsity of a hand-built operator, in exact arithmetic.
pub fn check_fixture(path: &Path) -> Result<Vec<Failure>> {
    let fx: SparseFixture = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let tree = Arc::new(load_tree::<Rational>(&fx.tree, base)?);
    let op = SparseOperator::from_stop_sets(tree, fx.levels).map_err(|e| HarnessError::Input {
        path: PathBuf::from(path),
        message: e.to_string(),
    })?;
    let sp = verify_sparsity(&op);
    Ok(match sp.witness {
        None => Vec::new(),
        Some((j, node)) => vec![Failure {
            trial: None,
            p: None,
            suite: Suite::Sparsity.name().into(),
            detail: format!(
                "fixture {}: atom {node} at level {j} has ratio {} > {}",
                path.display(),
                sp.max_ratio.to_decimal_string(),
                sp.bound.to_decimal_string()
            ),
        }],
    })
}
