//! Matrix Market export of a system and its preconditioner blocks.

use std::fs;
use std::path::{Path, PathBuf};

use saddle_core::assembly::{assemble_system, ProblemData};
use saddle_core::precond::BlockDiagPreconditioner;
use saddle_core::sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::mm::{read_matrix_market, write_matrix_market, Symmetry};
use crate::run::{MemoryGate, SolveParams};

pub const SYSTEM_FILE: &str = "system.mtx";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub file: String,
    pub dim: usize,
    pub offset: usize,
    pub symmetric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub problem: String,
    pub degree: usize,
    pub level: u32,
    pub alpha: f64,
    pub seed: u64,
    pub final_time: f64,
    pub observation_domain: [(f64, f64); 2],
    pub dofs: usize,
    /// System block names in order, with their sizes and offsets.
    pub system_blocks: Vec<String>,
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub system_file: String,
    pub system_symmetric: bool,
    pub preconditioner: Vec<BlockEntry>,
}

fn write_block(dir: &Path, file: &str, m: &CsrMatrix, what: &str) -> Result<bool> {
    let symmetry = Symmetry::detect(m);
    write_matrix_market(&dir.join(file), m, symmetry, what)?;
    Ok(symmetry == Symmetry::Symmetric)
}

/// Writes the system, every preconditioner block and `manifest.json`.
pub fn export_system(params: &SolveParams, gate: &MemoryGate, dir: &Path) -> Result<Manifest> {
    params.validate()?;
    let spec = params.spec();
    gate.check(&spec)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let sys = assemble_system(&spec, &ProblemData::homogeneous())?;
    let pre = BlockDiagPreconditioner::build(&sys)?;

    let header = format!(
        "{} p={} level={} alpha={:e} seed={}",
        spec.kind, spec.degree, spec.level, spec.alpha, spec.seed
    );
    let system_symmetric = write_block(dir, SYSTEM_FILE, &sys.matrix, &format!("system {header}"))?;
    let mut blocks = Vec::new();
    for (i, b) in pre.blocks.iter().enumerate() {
        let file = format!("{}.mtx", b.name);
        let symmetric = write_block(dir, &file, &b.matrix, &format!("{} {header}", b.name))?;
        blocks.push(BlockEntry {
            name: b.name.clone(),
            file,
            dim: b.matrix.nrows(),
            offset: pre.offsets()[i],
            symmetric,
        });
    }
    let manifest = Manifest {
        problem: spec.kind.name().into(),
        degree: spec.degree,
        level: spec.level,
        alpha: spec.alpha,
        seed: spec.seed,
        final_time: spec.final_time,
        observation_domain: spec.omega,
        dofs: sys.dim(),
        system_blocks: sys.block_names().iter().map(|s| s.to_string()).collect(),
        dims: sys.sizes.clone(),
        offsets: sys.offsets.clone(),
        system_file: SYSTEM_FILE.into(),
        system_symmetric,
        preconditioner: blocks,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(manifest)
}

/// Matrices read back from an export directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Imported {
    pub manifest: Manifest,
    pub system: CsrMatrix,
    pub blocks: Vec<(String, CsrMatrix)>,
}

/// Reads an export back and re-checks dimensions and symmetry.
pub fn import_system(dir: &Path) -> Result<Imported> {
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let read = |file: &str, dim: usize, symmetric: bool| -> Result<CsrMatrix> {
        let path = dir.join(file);
        let mm = read_matrix_market(&path)?;
        let m = mm.matrix;
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::Config(format!(
                "{}: {}x{} but the manifest says {dim}",
                path.display(),
                m.nrows(),
                m.ncols()
            )));
        }
        if symmetric && !m.is_symmetric_exact() {
            return Err(Error::Config(format!("{}: not symmetric", path.display())));
        }
        Ok(m)
    };
    let system = read(
        &manifest.system_file,
        manifest.dofs,
        manifest.system_symmetric,
    )?;
    let blocks = manifest
        .preconditioner
        .iter()
        .map(|b| Ok((b.name.clone(), read(&b.file, b.dim, b.symmetric)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Imported {
        manifest,
        system,
        blocks,
    })
}
