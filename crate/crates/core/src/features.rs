//! Concept and role features for a REG, with depth-aware positional encoding
//! added to the concept rows.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, seeded_rng, Matrix};
use crate::reg::{Reg, MAX_REFER_DEPTH};

pub const DEFAULT_DIM: usize = 256;
const PE_STREAM: u64 = 0x5045;
const PE_SCALE: f64 = 0.02;

/// Token -> vector lookup. Table misses fall back to a unit vector derived
/// from `(hash_seed, token)` alone, so they are reproducible across runs and platforms.
#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    table: HashMap<String, Vec<f64>>,
    hash_seed: u64,
    dim: usize,
}

impl EmbeddingProvider {
    pub fn hashed(dim: usize, hash_seed: u64) -> Self {
        EmbeddingProvider {
            table: HashMap::new(),
            hash_seed,
            dim,
        }
    }

    pub fn with_table(table: HashMap<String, Vec<f64>>, dim: usize, hash_seed: u64) -> Result<Self> {
        if let Some((tok, v)) = table.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::Dimension(format!(
                "embedding for '{tok}' has {} values, expected {dim}",
                v.len()
            )));
        }
        Ok(EmbeddingProvider {
            table,
            hash_seed,
            dim,
        })
    }

    /// Reads `token<TAB>v1 v2 ... vd` lines. The first line fixes `d`.
    pub fn from_tsv(text: &str, hash_seed: u64) -> Result<Self> {
        let mut table = HashMap::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (tok, values) = line.split_once('\t').ok_or_else(|| {
                Error::Config(format!("embedding line {}: missing tab", lineno + 1))
            })?;
            let v: Vec<f64> = values
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("embedding line {}: {e}", lineno + 1)))?;
            let d = *dim.get_or_insert(v.len());
            if v.len() != d {
                return Err(Error::Dimension(format!(
                    "embedding line {} has {} values, expected {d}",
                    lineno + 1,
                    v.len()
                )));
            }
            table.insert(tok.to_string(), v);
        }
        let dim = dim.ok_or_else(|| Error::Config("embedding file is empty".into()))?;
        EmbeddingProvider::with_table(table, dim, hash_seed)
    }

    pub fn load(path: &Path, hash_seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EmbeddingProvider::from_tsv(&text, hash_seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.table.get(token) {
            return v.clone();
        }
        let mut hasher = Sha256::new();
        hasher.update(self.hash_seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(key);
        loop {
            // Uniform draws and sqrt only: bit-identical on every IEEE platform.
            let v: Vec<f64> = (0..self.dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let norm = l2_norm(&v);
            if norm > 1e-6 || self.dim == 0 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

/// ReferPE table of shape `(MAX_REFER_DEPTH + 1) x dim`, small uniform init.
pub fn init_pe_table(dim: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed, PE_STREAM);
    Matrix::random_uniform(MAX_REFER_DEPTH + 1, dim, PE_SCALE, &mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphFeatures {
    /// One row per concept, positional encoding included.
    pub concepts: Matrix,
    /// One row per REG edge.
    pub roles: Matrix,
    /// `(src, dst)` concept indices per edge, aligned with `roles`.
    pub edges: Vec<[usize; 2]>,
    pub pe_table: Matrix,
}

impl GraphFeatures {
    pub fn dim(&self) -> usize {
        self.pe_table.cols()
    }
}

pub fn embed_graph(reg: &Reg, provider: &EmbeddingProvider, pe_table: &Matrix) -> Result<GraphFeatures> {
    let d = provider.dim();
    if pe_table.cols() != d || pe_table.rows() < MAX_REFER_DEPTH + 1 {
        return Err(Error::Dimension(format!(
            "pe table is {}x{}, provider dimension is {d}",
            pe_table.rows(),
            pe_table.cols()
        )));
    }
    let mut concepts = Matrix::zeros(reg.concepts.len(), d);
    for (i, c) in reg.concepts.iter().enumerate() {
        let pe = pe_table.row(c.depth.min(MAX_REFER_DEPTH));
        for ((out, e), p) in concepts.row_mut(i).iter_mut().zip(provider.lookup(&c.label)).zip(pe) {
            *out = e + p;
        }
    }
    let mut roles = Matrix::zeros(reg.edges.len(), d);
    for (j, e) in reg.edges.iter().enumerate() {
        roles.row_mut(j).copy_from_slice(&provider.lookup(e.role.as_str()));
    }
    Ok(GraphFeatures {
        concepts,
        roles,
        edges: reg.edges.iter().map(|e| [e.src, e.dst]).collect(),
        pe_table: pe_table.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::{parse_penman, Role};
    use crate::reg::{acyclize, reroot, RegConcept, RegEdge};

    fn fig_c_reg() -> Reg {
        let g = parse_penman("(s / stand-01 :ARG1 (c~0 / cat) :ARG2 (n~3 / near-02 :ARG1 c :ARG2 (g~5 / cage)))")
            .unwrap();
        acyclize(&reroot(&g, 1))
    }

    #[test]
    fn lookup_is_unit_norm_and_stable() {
        let p = EmbeddingProvider::hashed(32, 7);
        let a = p.lookup("cat");
        assert_eq!(a.len(), 32);
        assert!((l2_norm(&a) - 1.0).abs() < 1e-9);
        assert_eq!(a, EmbeddingProvider::hashed(32, 7).lookup("cat"));
        assert_ne!(a, EmbeddingProvider::hashed(32, 8).lookup("cat"));
        assert_ne!(a, p.lookup("dog"));
    }

    #[test]
    fn lookup_prefers_table() {
        let text = "cat\t1 0 0\ndog\t0 1 0\n";
        let p = EmbeddingProvider::from_tsv(text, 0).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(p.lookup("cat"), vec![1.0, 0.0, 0.0]);
        assert!((l2_norm(&p.lookup("bird")) - 1.0).abs() < 1e-9);
        assert!(EmbeddingProvider::from_tsv("cat\t1 0\ndog\t1\n", 0).is_err());
        assert!(EmbeddingProvider::from_tsv("cat 1 0\n", 0).is_err());
    }

    #[test]
    fn zero_pe_gives_raw_embeddings() {
        let p = EmbeddingProvider::hashed(8, 1);
        let reg = fig_c_reg();
        let f = embed_graph(&reg, &p, &Matrix::zeros(MAX_REFER_DEPTH + 1, 8)).unwrap();
        for (i, c) in reg.concepts.iter().enumerate() {
            assert_eq!(f.concepts.row(i), p.lookup(&c.label).as_slice());
        }
        for (j, e) in reg.edges.iter().enumerate() {
            assert_eq!(f.roles.row(j), p.lookup(e.role.as_str()).as_slice());
        }
    }

    #[test]
    fn single_node_uses_pe_row_zero() {
        let reg = Reg {
            concepts: vec![RegConcept { label: "cat".into(), align: vec![0], depth: 0 }],
            edges: vec![],
            root: 0,
        };
        let p = EmbeddingProvider::hashed(4, 3);
        let pe = init_pe_table(4, 3);
        let f = embed_graph(&reg, &p, &pe).unwrap();
        let want: Vec<f64> = p.lookup("cat").iter().zip(pe.row(0)).map(|(a, b)| a + b).collect();
        assert_eq!(f.concepts.row(0), want.as_slice());
    }

    #[test]
    fn worked_example_shapes() {
        let reg = fig_c_reg();
        let f = embed_graph(&reg, &EmbeddingProvider::hashed(16, 0), &init_pe_table(16, 0)).unwrap();
        assert_eq!(f.concepts.shape(), (4, 16));
        assert_eq!(f.roles.shape(), (4, 16));
        assert_eq!(f.edges.len(), 4);
        // near(2) -> cat(1) via :ARG1
        let k = reg
            .edges
            .iter()
            .position(|e| e.role == Role::new(":ARG1") && e.src == 2)
            .unwrap();
        assert_eq!(f.edges[k], [2, 1]);
        let again = embed_graph(&reg, &EmbeddingProvider::hashed(16, 0), &init_pe_table(16, 0)).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let reg = fig_c_reg();
        let err = embed_graph(&reg, &EmbeddingProvider::hashed(8, 0), &init_pe_table(16, 0));
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn permuting_concepts_permutes_features() {
        let reg = fig_c_reg();
        let perm = [3usize, 0, 2, 1]; // new index of old concept i
        let mut concepts = reg.concepts.clone();
        for (old, &new) in perm.iter().enumerate() {
            concepts[new] = reg.concepts[old].clone();
        }
        let permuted = Reg {
            concepts,
            edges: reg
                .edges
                .iter()
                .map(|e| RegEdge { src: perm[e.src], role: e.role.clone(), dst: perm[e.dst] })
                .collect(),
            root: perm[reg.root],
        };
        let p = EmbeddingProvider::hashed(8, 5);
        let pe = init_pe_table(8, 5);
        let a = embed_graph(&reg, &p, &pe).unwrap();
        let b = embed_graph(&permuted, &p, &pe).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            assert_eq!(a.concepts.row(old), b.concepts.row(new));
        }
        for (ea, eb) in a.edges.iter().zip(&b.edges) {
            assert_eq!([perm[ea[0]], perm[ea[1]]], *eb);
        }
        assert_eq!(a.roles, b.roles);
    }
}
