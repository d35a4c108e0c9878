//! On-disk reduced models: `manifest.toml` describing dimensions and affine
//! terms, plus `arrays.bin` holding every matrix as little-endian `f64` in
//! column-major order.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Theta;
use crate::problems::ProblemId;
use crate::rom::{ReducedAffine, ReducedBlocks, ReducedModel, ReducedTerm};
use crate::sampling::Rule;

pub const FORMAT: &str = "supg-wrom-model";
pub const VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.toml";
pub const ARRAYS: &str = "arrays.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset in `f64` values from the start of `arrays.bin`.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub block: String,
    pub theta: Theta,
    /// Human-readable form of `theta`.
    pub expression: String,
    pub stabilized: bool,
    pub array: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalues {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub problem: String,
    pub rule: String,
    pub n_vertices: usize,
    pub n_t: usize,
    pub dt: f64,
    pub alpha: f64,
    /// Actual training set cardinality.
    pub n_train: usize,
    pub n_max: usize,
    pub agg_count: Vec<usize>,
    pub eigenvalues: Eigenvalues,
    pub arrays: Vec<ArrayEntry>,
    pub terms: Vec<TermEntry>,
}

struct ArrayWriter {
    entries: Vec<ArrayEntry>,
    bytes: Vec<u8>,
    len: usize,
}

impl ArrayWriter {
    fn add(&mut self, name: String, m: &DMatrix<f64>) {
        self.entries.push(ArrayEntry {
            name,
            rows: m.nrows(),
            cols: m.ncols(),
            offset: self.len,
        });
        for v in m.iter() {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.len += m.len();
    }
}

/// Writes `path` through a temporary sibling and a rename.
fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, data).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_model(model: &ReducedModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = ArrayWriter {
        entries: Vec::new(),
        bytes: Vec::new(),
        len: 0,
    };
    w.add("basis_y".into(), &model.basis_y);
    w.add("basis_u".into(), &model.basis_u);
    w.add("basis_p".into(), &model.basis_p);
    w.add("aggregated".into(), &model.agg);
    w.add("lifting".into(), &DMatrix::from_column_slice(model.lifting.len(), 1, &model.lifting));
    let mut terms = Vec::new();
    for (block, affine) in model.blocks.named() {
        for (k, t) in affine.terms.iter().enumerate() {
            let name = format!("{block}_{k}");
            w.add(name.clone(), &t.matrix);
            terms.push(TermEntry {
                block: block.to_string(),
                theta: t.theta.clone(),
                expression: t.theta.to_string(),
                stabilized: t.stabilized,
                array: name,
            });
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        problem: model.problem.tag().into(),
        rule: model.rule.tag().into(),
        n_vertices: model.n_vertices,
        n_t: model.n_t,
        dt: model.dt,
        alpha: model.alpha,
        n_train: model.n_train,
        n_max: model.n_max,
        agg_count: model.agg_count.clone(),
        eigenvalues: Eigenvalues {
            y: model.eigenvalues[0].clone(),
            u: model.eigenvalues[1].clone(),
            p: model.eigenvalues[2].clone(),
        },
        arrays: w.entries,
        terms,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(format!("cannot serialize manifest: {e}")))?;
    write_atomic(&dir.join(ARRAYS), &w.bytes)?;
    write_atomic(&dir.join(MANIFEST), text.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::Format(format!(
            "{} has format {} v{}, expected {FORMAT} v{VERSION}",
            path.display(),
            m.format,
            m.version
        )));
    }
    Ok(m)
}

pub fn load_model(dir: &Path) -> Result<ReducedModel> {
    let m = read_manifest(dir)?;
    let path = dir.join(ARRAYS);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("{} is not a whole number of f64 values", path.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let array = |name: &str| -> Result<DMatrix<f64>> {
        let e = m
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("array `{name}` missing from manifest")))?;
        let end = e.offset + e.rows * e.cols;
        if end > values.len() {
            return Err(Error::Format(format!("array `{name}` extends past the end of {ARRAYS}")));
        }
        Ok(DMatrix::from_column_slice(e.rows, e.cols, &values[e.offset..end]))
    };
    let problem: ProblemId = m.problem.parse()?;
    let rule: Rule = m.rule.parse()?;
    let mut blocks = ReducedBlocks::default();
    for t in &m.terms {
        let matrix = array(&t.array)?;
        let slot = blocks
            .named_mut()
            .into_iter()
            .find(|(name, _)| *name == t.block)
            .map(|(_, b)| b)
            .ok_or_else(|| Error::Format(format!("unknown block `{}`", t.block)))?;
        let target: &mut ReducedAffine = slot;
        target.terms.push(ReducedTerm {
            theta: t.theta.clone(),
            stabilized: t.stabilized,
            matrix,
        });
    }
    let model = ReducedModel {
        problem,
        rule,
        n_vertices: m.n_vertices,
        n_t: m.n_t,
        dt: m.dt,
        alpha: m.alpha,
        n_train: m.n_train,
        n_max: m.n_max,
        basis_y: array("basis_y")?,
        basis_u: array("basis_u")?,
        basis_p: array("basis_p")?,
        agg: array("aggregated")?,
        agg_count: m.agg_count,
        eigenvalues: [m.eigenvalues.y, m.eigenvalues.u, m.eigenvalues.p],
        lifting: array("lifting")?.as_slice().to_vec(),
        blocks,
    };
    if model.agg_count.len() != model.n_max || model.basis_y.ncols() != model.n_max {
        return Err(Error::Format("basis sizes disagree with n_max".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{graetz, ProblemSettings};
    use crate::rom::StabilizationMode;
    use crate::sampling::{smolyak_sparse, Family};

    #[test]
    fn round_trip_is_exact() {
        let mut s = ProblemSettings::defaults(ProblemId::GraetzSteady, 0.25);
        s.delta = 1.0;
        let p = graetz(&s).unwrap();
        let sample = smolyak_sparse(&p.param_box, Family::ClenshawCurtis, 30).unwrap();
        let model = crate::wpod::run_offline(&p, &sample, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, dir.path()).unwrap();
        let back = load_model(dir.path()).unwrap();
        assert_eq!(back, model);
        let mu = [500.0, 1.1];
        let a = model.solve_reduced(&mu, 2, StabilizationMode::OfflineOnline).unwrap();
        let b = back.solve_reduced(&mu, 2, StabilizationMode::OfflineOnline).unwrap();
        assert_eq!(a, b);
        let text = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(text.contains("rule = \"smolyak-cc\""));
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Io { .. })));
        std::fs::write(dir.path().join(MANIFEST), "format = \"other\"\n").unwrap();
        assert!(matches!(load_model(dir.path()), Err(Error::Format(_))));
    }
}
