//! On-disk inputs: martingale pairs and sparse-operator fixtures.

use std::path::Path;
use std::sync::Arc;

use martsparse::martingale::{MartingaleFile, TreeRef};
use martsparse::tree::TreeFile;
use martsparse::{FiltrationTree, Martingale, NodeId, Scalar};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// `X` and `Y` on a common tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PairFile {
    pub x: MartingaleFile,
    pub y: MartingaleFile,
}

/// Stop sets of a hand-built sparse operator, innermost level last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SparseFixture {
    pub tree: TreeRef,
    pub levels: Vec<Vec<NodeId>>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Input {
        path: path.into(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Write {
            path: dir.into(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| HarnessError::Write {
        path: path.into(),
        source,
    })
}

/// Resolves a tree reference; relative paths are taken from `base`.
pub fn load_tree<S: Scalar>(tree: &TreeRef, base: &Path) -> Result<FiltrationTree<S>> {
    let (file, origin) = match tree {
        TreeRef::Inline(f) => (f.clone(), base.to_path_buf()),
        TreeRef::Path(p) => {
            let path = base.join(p);
            (read_json::<TreeFile>(&path)?, path)
        }
    };
    FiltrationTree::from_file(&file).map_err(|e| HarnessError::Input {
        path: origin,
        message: e.to_string(),
    })
}

pub fn load_pair<S: Scalar>(path: &Path) -> Result<(Martingale<S>, Martingale<S>)> {
    let pair: PairFile = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let tree = Arc::new(load_tree::<S>(&pair.x.tree_ref, base)?);
    let other = load_tree::<S>(&pair.y.tree_ref, base)?;
    let input = |message: String| HarnessError::Input {
        path: path.into(),
        message,
    };
    if other != *tree {
        return Err(input("x and y live on different trees".into()));
    }
    let x = Martingale::from_file(&pair.x, tree.clone()).map_err(|e| input(format!("x: {e}")))?;
    let y = Martingale::from_file(&pair.y, tree).map_err(|e| input(format!("y: {e}")))?;
    Ok((x, y))
}

pub fn pair_file<S: Scalar>(x: &Martingale<S>, y: &Martingale<S>) -> PairFile {
    PairFile {
        x: x.to_file(),
        y: y.to_file(),
    }
}
