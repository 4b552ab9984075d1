//! Binary checkpoints of flat and hierarchical alignments.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "WBALIGN\0"
//! version  u32
//! kind     u8       0 = flat alignment, 1 = language tree
//! body     kind-specific, see `write_flat` / `write_tree`
//! ```
//!
//! Strings are a `u32` byte length followed by UTF-8. Dense matrices are
//! `u64 rows, u64 cols` then row-major `f64`. Couplings are stored sparsely as
//! `(u32 row, u32 col, f64 value)` triples plus both marginals.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use ndarray::{Array1, Array2};

use crate::align::{AlignmentState, GwReport, LanguageTree, OrthogonalMap, RoundRecord, TreeEdge, TreeNode};
use crate::barycenter::IterationRecord;
use crate::embed_io::{DiscreteDistribution, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::ot::Coupling;

pub const MAGIC: &[u8; 8] = b"WBALIGN\0";
pub const VERSION: u32 = 1;

const KIND_FLAT: u8 = 0;
const KIND_TREE: u8 = 1;
/// Guards allocations driven by corrupt length fields.
const MAX_LEN: u64 = 1 << 34;

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Checkpoint {
    Flat(AlignmentState),
    Tree(LanguageTree),
}

impl Checkpoint {
    /// Language tags in input order.
    pub fn languages(&self) -> Vec<&str> {
        match self {
            Checkpoint::Flat(s) => s.languages(),
            Checkpoint::Tree(t) => t.spaces.iter().map(|s| s.language()).collect(),
        }
    }
}

/// Writes a checkpoint. Coupling entries below `prune` times the largest
/// entry of their matrix are dropped; `prune = 0` keeps every nonzero.
pub fn save(path: impl AsRef<Path>, checkpoint: &Checkpoint, prune: f64) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, checkpoint, prune).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_checkpoint(w: &mut impl Write, checkpoint: &Checkpoint, prune: f64) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    match checkpoint {
        Checkpoint::Flat(state) => {
            w.write_u8(KIND_FLAT)?;
            write_flat(w, state, prune)
        }
        Checkpoint::Tree(tree) => {
            w.write_u8(KIND_TREE)?;
            write_tree(w, tree, prune)
        }
    }
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.read_u32::<LE>().map_err(truncated)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {VERSION}")));
    }
    let checkpoint = match r.read_u8().map_err(truncated)? {
        KIND_FLAT => Checkpoint::Flat(read_flat(r)?),
        KIND_TREE => Checkpoint::Tree(read_tree(r)?),
        other => return Err(Error::Checkpoint(format!("unknown kind {other}"))),
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(truncated)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(checkpoint)
}

fn truncated(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated or unreadable: {e}"))
}

fn corrupt(what: impl Into<String>) -> Error {
    Error::Checkpoint(format!("corrupt: {}", what.into()))
}

// flat: u32 m, per language (string tag, string words..., matrix vectors,
// vector mass, matrix map, coupling), u8 has_barycenter [matrix, vector],
// history, gw reports

fn write_flat(w: &mut impl Write, s: &AlignmentState, prune: f64) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    for i in 0..s.len() {
        write_space(w, &s.spaces[i])?;
        write_vector(w, &s.masses[i])?;
        write_matrix(w, s.maps[i].matrix())?;
        write_coupling(w, &s.couplings[i], prune)?;
    }
    match &s.barycenter {
        Some(b) => {
            w.write_u8(1)?;
            write_distribution(w, b)?;
        }
        None => w.write_u8(0)?,
    }
    write_history(w, &s.history)?;
    w.write_u32::<LE>(s.gw_reports.len() as u32)?;
    for g in &s.gw_reports {
        write_str(w, &g.language)?;
        w.write_u8(g.converged as u8)?;
        w.write_u64::<LE>(g.iterations as u64)?;
        w.write_f64::<LE>(g.objective)?;
    }
    Ok(())
}

fn read_flat(r: &mut impl Read) -> Result<AlignmentState> {
    let m = read_len(r)?;
    let (mut spaces, mut masses, mut maps, mut couplings) = (vec![], vec![], vec![], vec![]);
    for _ in 0..m {
        spaces.push(read_space(r)?);
        masses.push(read_vector(r)?);
        maps.push(read_map(r)?);
        couplings.push(read_coupling(r)?);
    }
    let barycenter = match r.read_u8().map_err(truncated)? {
        0 => None,
        1 => Some(read_distribution(r)?),
        other => return Err(corrupt(format!("barycenter flag {other}"))),
    };
    let mut state = AlignmentState::from_parts(spaces, masses, maps, couplings, barycenter)
        .map_err(|e| corrupt(e.to_string()))?;
    state.history = read_history(r)?;
    let reports = read_len(r)?;
    for _ in 0..reports {
        state.gw_reports.push(GwReport {
            language: read_str(r)?,
            converged: read_bool(r)?,
            iterations: r.read_u64::<LE>().map_err(truncated)? as usize,
            objective: r.read_f64::<LE>().map_err(truncated)?,
        });
    }
    Ok(state)
}

// tree: u32 spaces, u32 nodes, u32 root, per node (i64 parent, u32 children
// + u32 each, i64 language, distribution, u8 has_edge [coupling, matrix],
// history)

fn write_tree(w: &mut impl Write, t: &LanguageTree, prune: f64) -> std::io::Result<()> {
    w.write_u32::<LE>(t.spaces.len() as u32)?;
    for s in &t.spaces {
        write_space(w, s)?;
    }
    w.write_u32::<LE>(t.nodes.len() as u32)?;
    w.write_u32::<LE>(t.root as u32)?;
    for n in &t.nodes {
        w.write_i64::<LE>(n.parent.map_or(-1, |p| p as i64))?;
        w.write_u32::<LE>(n.children.len() as u32)?;
        for &c in &n.children {
            w.write_u32::<LE>(c as u32)?;
        }
        w.write_i64::<LE>(n.language.map_or(-1, |l| l as i64))?;
        write_distribution(w, &n.distribution)?;
        match &n.edge {
            Some(e) => {
                w.write_u8(1)?;
                write_coupling(w, &e.coupling, prune)?;
                write_matrix(w, e.map.matrix())?;
            }
            None => w.write_u8(0)?,
        }
        write_history(w, &n.history)?;
    }
    Ok(())
}

fn read_tree(r: &mut impl Read) -> Result<LanguageTree> {
    let count = read_len(r)?;
    let spaces = (0..count).map(|_| read_space(r)).collect::<Result<Vec<_>>>()?;
    let count = read_len(r)?;
    let root = r.read_u32::<LE>().map_err(truncated)? as usize;
    let index = |v: i64, bound: usize, what: &str| -> Result<Option<usize>> {
        match v {
            -1 => Ok(None),
            v if v >= 0 && (v as usize) < bound => Ok(Some(v as usize)),
            v => Err(corrupt(format!("{what} index {v}"))),
        }
    };
    let mut nodes = Vec::with_capacity(count);
    for _ in 0..count {
        let parent = index(r.read_i64::<LE>().map_err(truncated)?, count, "parent")?;
        let children = (0..read_len(r)?)
            .map(|_| {
                let c = r.read_u32::<LE>().map_err(truncated)? as i64;
                index(c, count, "child").map(|c| c.unwrap())
            })
            .collect::<Result<Vec<_>>>()?;
        let language = index(r.read_i64::<LE>().map_err(truncated)?, spaces.len(), "language")?;
        let distribution = read_distribution(r)?;
        let edge = match r.read_u8().map_err(truncated)? {
            0 => None,
            1 => Some(TreeEdge {
                coupling: read_coupling(r)?,
                map: read_map(r)?,
            }),
            other => return Err(corrupt(format!("edge flag {other}"))),
        };
        let history = read_history(r)?;
        nodes.push(TreeNode {
            parent,
            children,
            language,
            distribution,
            edge,
            history,
        });
    }
    if root >= count {
        return Err(corrupt(format!("root {root} of {count} nodes")));
    }
    let tree = LanguageTree { spaces, nodes, root };
    tree.validate().map_err(|e| corrupt(e.to_string()))?;
    Ok(tree)
}

fn write_history(w: &mut impl Write, history: &[RoundRecord]) -> std::io::Result<()> {
    w.write_u32::<LE>(history.len() as u32)?;
    for h in history {
        w.write_u64::<LE>(h.round as u64)?;
        w.write_f64::<LE>(h.objective)?;
        w.write_f64::<LE>(h.barycenter_objective)?;
        w.write_u64::<LE>(h.unconverged_solves as u64)?;
        w.write_u8(h.increased as u8)?;
        w.write_u32::<LE>(h.barycenter_iterations.len() as u32)?;
        for it in &h.barycenter_iterations {
            w.write_u64::<LE>(it.iteration as u64)?;
            w.write_f64::<LE>(it.objective)?;
            w.write_f64::<LE>(it.displacement)?;
        }
    }
    Ok(())
}

fn read_history(r: &mut impl Read) -> Result<Vec<RoundRecord>> {
    let n = read_len(r)?;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let round = r.read_u64::<LE>().map_err(truncated)? as usize;
        let objective = r.read_f64::<LE>().map_err(truncated)?;
        let barycenter_objective = r.read_f64::<LE>().map_err(truncated)?;
        let unconverged_solves = r.read_u64::<LE>().map_err(truncated)? as usize;
        let increased = read_bool(r)?;
        let iters = read_len(r)?;
        let mut barycenter_iterations = Vec::with_capacity(iters.min(1024));
        for _ in 0..iters {
            barycenter_iterations.push(IterationRecord {
                iteration: r.read_u64::<LE>().map_err(truncated)? as usize,
                objective: r.read_f64::<LE>().map_err(truncated)?,
                displacement: r.read_f64::<LE>().map_err(truncated)?,
            });
        }
        out.push(RoundRecord {
            round,
            objective,
            barycenter_objective,
            barycenter_iterations,
            unconverged_solves,
            increased,
        });
    }
    Ok(out)
}

fn write_space(w: &mut impl Write, s: &EmbeddingSpace) -> std::io::Result<()> {
    write_str(w, s.language())?;
    w.write_u32::<LE>(s.len() as u32)?;
    for word in s.words() {
        write_str(w, word)?;
    }
    write_matrix(w, s.vectors())
}

fn read_space(r: &mut impl Read) -> Result<EmbeddingSpace> {
    let tag = read_str(r)?;
    let n = read_len(r)?;
    let words = (0..n).map(|_| read_str(r)).collect::<Result<Vec<_>>>()?;
    let vectors = read_matrix(r)?;
    EmbeddingSpace::new(tag, words, vectors).map_err(|e| corrupt(e.to_string()))
}

fn write_distribution(w: &mut impl Write, d: &DiscreteDistribution) -> std::io::Result<()> {
    write_matrix(w, &d.support)?;
    write_vector(w, &d.mass)
}

fn read_distribution(r: &mut impl Read) -> Result<DiscreteDistribution> {
    let support = read_matrix(r)?;
    let mass = read_vector(r)?;
    if mass.len() != support.nrows() {
        return Err(corrupt("distribution mass and support differ in length"));
    }
    Ok(DiscreteDistribution { support, mass })
}

fn write_coupling(w: &mut impl Write, c: &Coupling, prune: f64) -> std::io::Result<()> {
    let (rows, cols) = c.shape();
    w.write_u64::<LE>(rows as u64)?;
    w.write_u64::<LE>(cols as u64)?;
    let top = c.matrix.iter().cloned().fold(0.0, f64::max);
    let cut = prune * top;
    let keep = |v: f64| v != 0.0 && v >= cut;
    w.write_u64::<LE>(c.matrix.iter().filter(|&&v| keep(v)).count() as u64)?;
    for ((i, j), &v) in c.matrix.indexed_iter() {
        if keep(v) {
            w.write_u32::<LE>(i as u32)?;
            w.write_u32::<LE>(j as u32)?;
            w.write_f64::<LE>(v)?;
        }
    }
    write_vector(w, &c.row_marginal)?;
    write_vector(w, &c.col_marginal)
}

fn read_coupling(r: &mut impl Read) -> Result<Coupling> {
    let rows = read_dim(r)?;
    let cols = read_dim(r)?;
    if (rows as u64) * (cols as u64) > MAX_LEN {
        return Err(corrupt(format!("coupling of {rows}x{cols}")));
    }
    let nnz = r.read_u64::<LE>().map_err(truncated)?;
    if nnz > (rows * cols) as u64 {
        return Err(corrupt(format!("{nnz} entries in a {rows}x{cols} coupling")));
    }
    let mut matrix = Array2::zeros((rows, cols));
    for _ in 0..nnz {
        let i = r.read_u32::<LE>().map_err(truncated)? as usize;
        let j = r.read_u32::<LE>().map_err(truncated)? as usize;
        let v = r.read_f64::<LE>().map_err(truncated)?;
        if i >= rows || j >= cols {
            return Err(corrupt(format!("coupling entry ({i}, {j}) out of range")));
        }
        matrix[[i, j]] = v;
    }
    let row_marginal = read_vector(r)?;
    let col_marginal = read_vector(r)?;
    if row_marginal.len() != rows || col_marginal.len() != cols {
        return Err(corrupt("coupling marginals do not match its shape"));
    }
    Ok(Coupling {
        matrix,
        row_marginal,
        col_marginal,
    })
}

fn read_map(r: &mut impl Read) -> Result<OrthogonalMap> {
    OrthogonalMap::new(read_matrix(r)?).map_err(|e| corrupt(e.to_string()))
}

fn write_matrix(w: &mut impl Write, m: &Array2<f64>) -> std::io::Result<()> {
    w.write_u64::<LE>(m.nrows() as u64)?;
    w.write_u64::<LE>(m.ncols() as u64)?;
    for &v in m.iter() {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read) -> Result<Array2<f64>> {
    let rows = read_dim(r)?;
    let cols = read_dim(r)?;
    if (rows as u64) * (cols as u64) > MAX_LEN {
        return Err(corrupt(format!("matrix of {rows}x{cols}")));
    }
    let mut data = vec![0.0; rows * cols];
    r.read_f64_into::<LE>(&mut data).map_err(truncated)?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| corrupt(e.to_string()))
}

fn write_vector(w: &mut impl Write, v: &Array1<f64>) -> std::io::Result<()> {
    w.write_u64::<LE>(v.len() as u64)?;
    for &x in v {
        w.write_f64::<LE>(x)?;
    }
    Ok(())
}

fn read_vector(r: &mut impl Read) -> Result<Array1<f64>> {
    let n = read_dim(r)?;
    let mut data = vec![0.0; n];
    r.read_f64_into::<LE>(&mut data).map_err(truncated)?;
    Ok(Array1::from(data))
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let n = read_len(r)?;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| corrupt("string is not UTF-8"))
}

fn read_bool(r: &mut impl Read) -> Result<bool> {
    match r.read_u8().map_err(truncated)? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(corrupt(format!("boolean byte {other}"))),
    }
}

fn read_len(r: &mut impl Read) -> Result<usize> {
    let n = r.read_u32::<LE>().map_err(truncated)? as u64;
    if n > MAX_LEN {
        return Err(corrupt(format!("length {n}")));
    }
    Ok(n as usize)
}

fn read_dim(r: &mut impl Read) -> Result<usize> {
    let n = r.read_u64::<LE>().map_err(truncated)?;
    if n > MAX_LEN {
        return Err(corrupt(format!("dimension {n}")));
    }
    Ok(n as usize)
}
