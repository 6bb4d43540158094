//! Growth of the measured ratios in the weight characteristic.
//!
//! For each grid value the sweep builds a weight `w` on a dyadic tree, sets
//! `X` to the closure of the dual weight `u` and `Y` to the transform of `X`
//! whose sign alternates with the parent's depth. It records
//! `||Y*||_{L^p(w)} / ||X||_{L^p(w)}` and `||X*||_{L^p(w)} / ||X||_{L^p(w)}`.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use martsparse::{
    maximal_function, power_weight, transform, two_value_weight, weighted_norm, ApWeight, Exponent,
    FiltrationTree, Martingale, Matrix, Multipliers, Weight,
};
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::report::format_float;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Grid values are the power exponent `alpha`.
    Power,
    /// Grid values are ignored.
    Constant,
    /// Grid values are the weight on the left half; 1 elsewhere.
    TwoValue,
}

impl FromStr for Family {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(Family::Power),
            "constant" => Ok(Family::Constant),
            "two-value" => Ok(Family::TwoValue),
            other => Err(HarnessError::Usage(format!(
                "unknown family {other:?} (expected power, constant or two-value)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SharpnessRow {
    pub grid_param: String,
    pub qp: f64,
    pub ratio_thm1: f64,
    pub ratio_thm2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SharpnessResult {
    pub p: String,
    pub depth: usize,
    pub rows: Vec<SharpnessRow>,
    /// Slope of `log ratio` against `log Q_p`, over the upper half of the grid.
    pub slope_thm1: Option<f64>,
    pub slope_thm2: Option<f64>,
    /// The same slopes against `log Q_p^{max(1, 1/(p-1))}`.
    pub slope_thm1_scaled: Option<f64>,
    pub slope_thm2_scaled: Option<f64>,
}

impl SharpnessResult {
    pub fn csv(&self) -> String {
        let mut out = String::from("gridParam,Qp,ratioThm1,ratioThm2\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.grid_param,
                format_float(r.qp),
                format_float(r.ratio_thm1),
                format_float(r.ratio_thm2)
            )
            .expect("writing to a string");
        }
        out
    }
}

/// Least-squares slope of `ys` on `xs`. `None` below two points, 0 when the
/// `xs` do not vary.
pub fn slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= f64::EPSILON * n * mx.abs().max(1.0) {
        return Some(0.0);
    }
    Some(sxy / sxx)
}

fn weight_for(family: Family, tree: &Arc<FiltrationTree<f64>>, param: Exponent, p: Exponent) -> Result<Weight<f64>> {
    Ok(match family {
        Family::Power => power_weight(tree.clone(), param, p)?,
        Family::Constant => Weight::constant(tree.clone()),
        Family::TwoValue => {
            if param <= Exponent::integer(0) {
                return Err(HarnessError::Usage(format!("two-value weight {param} must be positive")));
            }
            two_value_weight(tree.clone(), 1, param.to_f64(), 1.0)?
        }
    })
}

fn measure(aw: &ApWeight<f64>) -> Result<(f64, f64)> {
    let tree = aw.tree().clone();
    let x = Martingale::close_scalar(tree.clone(), &aw.u.leaf_values())?;
    let signs = (0..tree.len())
        .map(|n| Matrix::scalar(1, if tree.depth(n).is_multiple_of(2) { 1.0 } else { -1.0 }))
        .collect();
    let y = transform(&x, &Matrix::identity(1), &Multipliers::ByParent(signs))?;
    let (_, xstar) = maximal_function(&x);
    let (_, ystar) = maximal_function(&y);
    let norm = weighted_norm(&x.leaf_norms()?, &aw.w, aw.p)?;
    let r1 = weighted_norm(&ystar, &aw.w, aw.p)? / norm;
    let r2 = weighted_norm(&xstar, &aw.w, aw.p)? / norm;
    Ok((r1, r2))
}

pub fn parse_grid(grid: &str) -> Result<Vec<Exponent>> {
    let values: Vec<Exponent> = grid
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Exponent::parse(s).map_err(|_| HarnessError::Usage(format!("bad grid value {s:?}"))))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(HarnessError::Usage("grid must not be empty".into()));
    }
    Ok(values)
}

pub fn run_sharpness(p: Exponent, family: Family, grid: &[Exponent], depth: usize) -> Result<SharpnessResult> {
    if p <= Exponent::integer(1) {
        return Err(HarnessError::Usage(format!("p = {p} must exceed 1")));
    }
    if depth == 0 || depth > 24 {
        return Err(HarnessError::Usage("depth must be in 1..=24".into()));
    }
    if grid.is_empty() {
        return Err(HarnessError::Usage("grid must not be empty".into()));
    }
    let tree = Arc::new(FiltrationTree::<f64>::dyadic(depth));
    let mut rows = Vec::with_capacity(grid.len());
    for &g in grid {
        let w = weight_for(family, &tree, g, p).map_err(|e| match e {
            HarnessError::Core(e) => HarnessError::Usage(format!("grid value {g}: {e}")),
            e => e,
        })?;
        let aw = ApWeight::new(w, p)?;
        let (r1, r2) = measure(&aw)?;
        rows.push(SharpnessRow {
            grid_param: g.to_string(),
            qp: aw.qp,
            ratio_thm1: r1,
            ratio_thm2: r2,
        });
    }
    let mut top: Vec<&SharpnessRow> = rows.iter().collect();
    top.sort_by(|a, b| a.qp.total_cmp(&b.qp));
    let top = &top[top.len() / 2..];
    let lq: Vec<f64> = top.iter().map(|r| r.qp.ln()).collect();
    let l1: Vec<f64> = top.iter().map(|r| r.ratio_thm1.ln()).collect();
    let l2: Vec<f64> = top.iter().map(|r| r.ratio_thm2.ln()).collect();
    let e = (1.0 / (p.to_f64() - 1.0)).max(1.0);
    let (s1, s2) = (slope(&lq, &l1), slope(&lq, &l2));
    Ok(SharpnessResult {
        p: p.to_string(),
        depth,
        rows,
        slope_thm1: s1,
        slope_thm2: s2,
        slope_thm1_scaled: s1.map(|s| s / e),
        slope_thm2_scaled: s2.map(|s| s / e),
    })
}
