//! Subcommand bodies. Each returns whether every checked property held;
//! errors mean the inputs could not be used.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use martsparse::{
    decompose, doubling_martingale, is_differentially_subordinate, jump_tree, seeded_pair,
    verify_pointwise_domination, DecompositionReport, Exponent, FiltrationTree, Martingale, Rational, Scalar,
    VolatilityProfile, FLOAT_TOL,
};

use crate::config::{Arithmetic, Config, Num};
use crate::error::{HarnessError, Result};
use crate::files::{load_pair, pair_file, write_json, write_text, SparseFixture};
use crate::report::write_reports;
use crate::runner::{run, Execution};
use crate::sharpness::{parse_grid, run_sharpness, Family};

/// Failures echoed to standard error; the summary lists more.
const ECHOED_FAILURES: usize = 20;

pub fn verify(config: &Path, output_dir: Option<PathBuf>) -> Result<bool> {
    let cfg = Config::from_path(config)?;
    let dir = output_dir.unwrap_or_else(|| cfg.resolve_output_dir());
    let result = run(&cfg, Execution::default())?;
    let written = write_reports(&dir, &cfg, &result)?;
    for f in result.failures.iter().take(ECHOED_FAILURES) {
        let trial = f.trial.map_or(String::new(), |t| format!(" trial={t}"));
        let p = f.p.as_ref().map_or(String::new(), |p| format!(" p={p}"));
        eprintln!("FAIL{trial}{p} suite={}: {}", f.suite, f.detail);
    }
    let failed = result.rows.iter().filter(|r| !r.pass).count();
    println!(
        "{} rows, {} failed, {} fixture(s); wrote {} and {}",
        result.rows.len(),
        failed,
        result.fixtures_checked,
        written.csv.display(),
        written.summary.display()
    );
    Ok(result.passed())
}

fn decompose_as<S: Scalar>(input: &Path, output: &Path) -> Result<bool> {
    let (x, y) = load_pair::<S>(input)?;
    if let Some(w) = is_differentially_subordinate(&y, &x, FLOAT_TOL)? {
        eprintln!("FAIL input is not differentially subordinate: first violation at {w}");
        return Ok(false);
    }
    let op = decompose(&x, &y)?;
    let dom = verify_pointwise_domination(&y, &op, &x)?;
    let report = DecompositionReport::build(&op, &x, &dom)?;
    write_json(output, &report)?;
    let cert = op.certificate().expect("decompose certifies");
    for f in cert.failures.iter().chain(&dom.failures) {
        eprintln!("FAIL {f}");
    }
    println!(
        "{} level(s), max sparsity ratio {}, domination margin {}",
        report.levels.len(),
        report.max_sparsity_ratio,
        report.domination_margin
    );
    Ok(cert.holds() && dom.passes())
}

pub fn decompose_pair(input: &Path, output: &Path, arithmetic: Arithmetic) -> Result<bool> {
    match arithmetic {
        Arithmetic::Exact => decompose_as::<Rational>(input, output),
        Arithmetic::Float => decompose_as::<f64>(input, output),
    }
}

pub fn sharpness(p: &str, family: &str, grid: &str, depth: usize, output: &Path) -> Result<bool> {
    let p = Exponent::parse(p).map_err(|_| HarnessError::Usage(format!("bad exponent {p:?}")))?;
    let family: Family = family.parse()?;
    let grid = parse_grid(grid)?;
    let result = run_sharpness(p, family, &grid, depth)?;
    write_text(output, &result.csv())?;
    write_json(&output.with_extension("json"), &result)?;
    println!("{}", serde_json::to_string(&result).expect("results serialize"));
    Ok(true)
}

/// Generator options shared by every `gen` kind; each kind reads what it needs.
#[derive(Clone, Debug)]
pub struct GenOptions {
    pub kind: String,
    pub depth: usize,
    pub epsilon: Option<String>,
    pub dimension: usize,
    pub seed: u64,
    pub trial: u64,
    pub profile: String,
}

fn gen_tree(opts: &GenOptions) -> Result<FiltrationTree<Rational>> {
    match &opts.epsilon {
        Some(e) => {
            let eps = Num::Text(e.clone()).scalar::<Rational>().map_err(|e| HarnessError::Usage(e.to_string()))?;
            Ok(jump_tree(opts.depth, &eps)?)
        }
        None => Ok(FiltrationTree::dyadic(opts.depth)),
    }
}

pub fn generate(opts: &GenOptions, output: &Path) -> Result<bool> {
    if opts.depth == 0 || opts.depth > 24 {
        return Err(HarnessError::Usage("depth must be in 1..=24".into()));
    }
    if opts.dimension == 0 {
        return Err(HarnessError::Usage("dimension must be at least 1".into()));
    }
    match opts.kind.as_str() {
        "config" => write_json(output, &Config::default())?,
        "tree" => write_json(output, &gen_tree(opts)?.to_file())?,
        "doubling-pair" => {
            let x = doubling_martingale::<Rational>(opts.depth)?.embed(opts.dimension);
            write_json(output, &pair_file(&x, &x))?;
        }
        "constant-pair" => {
            let tree = Arc::new(gen_tree(opts)?);
            let mut v = vec![Rational::zero(); opts.dimension];
            v[0] = Rational::from_i64(3);
            let x = Martingale::constant(tree.clone(), v.clone());
            v[0] = Rational::from_i64(-2);
            let y = Martingale::constant(tree, v);
            write_json(output, &pair_file(&x, &y))?;
        }
        "random-pair" => {
            let tree = Arc::new(gen_tree(opts)?);
            let profile: VolatilityProfile = opts.profile.parse().map_err(|e: martsparse::Error| HarnessError::Usage(e.to_string()))?;
            let (x, y) = seeded_pair(&tree, opts.dimension, profile, opts.seed, opts.trial)?;
            write_json(output, &pair_file(&x, &y))?;
        }
        "failing-fixture" => {
            // the first stop set covers the whole space below the root
            let tree = gen_tree(opts)?;
            let fixture = SparseFixture {
                tree: martsparse::martingale::TreeRef::Inline(tree.to_file()),
                levels: vec![tree.children(tree.root()).to_vec()],
            };
            write_json(output, &fixture)?;
        }
        other => {
            return Err(HarnessError::Usage(format!(
                "unknown kind {other:?} (expected config, tree, doubling-pair, constant-pair, random-pair or failing-fixture)"
            )))
        }
    }
    println!("wrote {}", output.display());
    Ok(true)
}
