#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use reg_core::amr::{AmrEdge, AmrGraph, AmrNode, Role};
use reg_core::features::GraphFeatures;
use reg_core::numerics::Matrix;
use reg_core::reg::Reg;
use reg_core::summarizer::QueryBundle;
use reg_core::tcrr::TcrrParams;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_path() -> PathBuf {
    repo_root().join("corpus/mini.jsonl")
}

const CONCEPTS: [&str; 8] = ["cat", "dog", "run-02", "near-02", "cage", "man", "hold-01", "ball"];
const ROLES: [&str; 7] = [":ARG0", ":ARG1", ":ARG2", ":ARG0-of", ":ARG1-of", ":mod", ":location"];

/// Random AMR: a random tree from the root plus `reentrant` extra edges
/// between existing nodes in arbitrary directions.
pub fn random_amr(rng: &mut ChaCha8Rng, n: usize, reentrant: usize) -> AmrGraph {
    let nodes: Vec<AmrNode> = (0..n)
        .map(|i| AmrNode {
            var: Some(format!("v{i}")),
            concept: CONCEPTS[rng.gen_range(0..CONCEPTS.len())].to_string(),
            align: if rng.gen_bool(0.8) { vec![i] } else { vec![] },
        })
        .collect();
    let mut edges = Vec::new();
    let mut pairs = std::collections::HashSet::new();
    for child in 1..n {
        let parent = rng.gen_range(0..child);
        pairs.insert((parent.min(child), parent.max(child)));
        edges.push(AmrEdge {
            source: parent,
            role: Role::new(ROLES[rng.gen_range(0..ROLES.len())]),
            target: child,
        });
    }
    let mut added = 0;
    let mut attempts = 0;
    while added < reentrant && attempts < 100 {
        attempts += 1;
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a == b || !pairs.insert((a.min(b), a.max(b))) {
            continue;
        }
        edges.push(AmrEdge {
            source: a,
            role: Role::new(ROLES[rng.gen_range(0..ROLES.len())]),
            target: b,
        });
        added += 1;
    }
    edges.shuffle(rng);
    AmrGraph { nodes, edges, root: 0 }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Independent recursive evaluation of every node's per-query score.
pub struct RecursiveOracle<'a> {
    pub reg: &'a Reg,
    pub features: &'a GraphFeatures,
    pub bundles: &'a [QueryBundle],
    pub params: &'a TcrrParams,
    memo: HashMap<usize, Vec<f64>>,
}

impl<'a> RecursiveOracle<'a> {
    pub fn new(reg: &'a Reg, features: &'a GraphFeatures, bundles: &'a [QueryBundle], params: &'a TcrrParams) -> Self {
        RecursiveOracle { reg, features, bundles, params, memo: HashMap::new() }
    }

    fn project(w: &Matrix, x: &[f64]) -> Vec<f64> {
        (0..w.cols()).map(|a| (0..x.len()).map(|b| w[(b, a)] * x[b]).sum()).collect()
    }

    pub fn score(&mut self, p: usize) -> Vec<f64> {
        if let Some(s) = self.memo.get(&p) {
            return s.clone();
        }
        let d = self.params.omega_r.len();
        let c_p = self.features.concepts.row(p).to_vec();
        let mut out = Vec::with_capacity(self.bundles.len());
        for b in self.bundles {
            let r = Self::project(&self.params.w_r, &b.video_feat);
            out.push((0..d).map(|a| self.params.omega_r[a] * r[a] * c_p[a]).sum::<f64>());
        }
        let children: Vec<(usize, usize)> = self
            .reg
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.dst == p)
            .map(|(i, e)| (i, e.src))
            .collect();
        for (ei, k) in children {
            let child = self.score(k);
            let w = softmax(&child);
            let mut summary = vec![0.0; d];
            for (wi, b) in w.iter().zip(self.bundles) {
                for a in 0..d {
                    summary[a] += wi * b.video_feat[a];
                }
            }
            let role = self.features.roles.row(ei).to_vec();
            for (i, b) in self.bundles.iter().enumerate() {
                let mut total = 0.0;
                for (t, frame) in b.frame_feats.iter().enumerate() {
                    let z: Vec<f64> = summary.iter().chain(frame.iter()).copied().collect();
                    let u = Self::project(&self.params.w_e, &z);
                    let s: f64 = (0..d).map(|a| self.params.omega_e[a] * u[a] * role[a]).sum();
                    total += b.taus[t] * s;
                }
                out[i] += total;
            }
        }
        self.memo.insert(p, out.clone());
        out
    }
}

/// All `n!` permutations' minimum cost, summed in row order.
pub fn brute_force_assignment(cost: &Matrix) -> f64 {
    use itertools::Itertools;
    let n = cost.rows();
    (0..cost.cols())
        .permutations(n)
        .map(|p| p.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// From-definition GIoU on `(cx, cy, w, h)` boxes.
pub fn giou_oracle(a: [f64; 4], b: [f64; 4]) -> f64 {
    let corners = |x: [f64; 4]| (x[0] - x[2] / 2.0, x[1] - x[3] / 2.0, x[0] + x[2] / 2.0, x[1] + x[3] / 2.0);
    let (ax0, ay0, ax1, ay1) = corners(a);
    let (bx0, by0, bx1, by1) = corners(b);
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = area_a + area_b - inter;
    let hull = (ax1.max(bx1) - ax0.min(bx0)) * (ay1.max(by1) - ay0.min(by0));
    inter / union - (hull - union) / hull
}
