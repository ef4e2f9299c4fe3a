//! Seeded random instances: REG DAGs, features, query bundles and
//! prediction/ground-truth pairs. Used by the gradient checker and tests.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::amr::Role;
use crate::features::GraphFeatures;
use crate::losses::{GroundTruth, Prediction};
use crate::numerics::Matrix;
use crate::reg::{compute_refer_depths, Reg, RegConcept, RegEdge, MAX_REFER_DEPTH};
use crate::summarizer::QueryBundle;

const LABELS: [&str; 10] = [
    "cat", "dog", "stand-01", "near-02", "jump-03", "cage", "man", "hold-01", "ball", "left",
];
const ROLES: [&str; 6] = [":ARG0", ":ARG1", ":ARG2", ":ARG1-of", ":mod", ":location"];

/// A random single-rooted DAG with `n` nodes. Every non-root node has one
/// parent closer to the root plus, with probability `extra`, more parents.
/// Node storage order is shuffled.
pub fn random_reg(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Reg {
    assert!(n >= 1);
    // rank 0 is the root; parents always have a smaller rank
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for rank in 1..n {
        let parent = rng.gen_range(0..rank);
        let mut parents = vec![parent];
        for other in 0..rank {
            if other != parent && rng.gen_bool(extra) {
                parents.push(other);
            }
        }
        for p in parents {
            edges.push(RegEdge {
                src: order[rank],
                role: Role::new(ROLES[rng.gen_range(0..ROLES.len())]),
                dst: order[p],
            });
        }
    }
    edges.shuffle(rng);
    let mut concepts = vec![
        RegConcept {
            label: String::new(),
            align: vec![],
            depth: 0
        };
        n
    ];
    for (rank, &node) in order.iter().enumerate() {
        concepts[node].label = LABELS[rng.gen_range(0..LABELS.len())].to_string();
        concepts[node].align = vec![rank];
    }
    let reg = Reg { concepts, edges, root: order[0] };
    compute_refer_depths(&reg).expect("every node reaches the root")
}

pub fn random_features(rng: &mut ChaCha8Rng, reg: &Reg, dim: usize) -> GraphFeatures {
    GraphFeatures {
        concepts: Matrix::random_uniform(reg.len(), dim, 1.0, rng),
        roles: Matrix::random_uniform(reg.edges.len(), dim, 1.0, rng),
        edges: reg.edges.iter().map(|e| [e.src, e.dst]).collect(),
        pe_table: Matrix::zeros(MAX_REFER_DEPTH + 1, dim),
    }
}

/// Bundles with `tau` in `(0, 1]`.
pub fn random_bundles(rng: &mut ChaCha8Rng, queries: usize, frames: usize, dim: usize) -> Vec<QueryBundle> {
    (0..queries)
        .map(|index| QueryBundle {
            index,
            video_feat: Matrix::random_uniform(1, dim, 1.0, rng).into_vec(),
            frame_feats: (0..frames)
                .map(|_| Matrix::random_uniform(1, dim, 1.0, rng).into_vec())
                .collect(),
            taus: (0..frames).map(|_| rng.gen_range(0.05..=1.0)).collect(),
            selected: vec![0; frames],
        })
        .collect()
}

fn random_box(rng: &mut ChaCha8Rng) -> [f64; 4] {
    [
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.25..0.75),
        rng.gen_range(0.1..0.5),
        rng.gen_range(0.1..0.5),
    ]
}

pub fn random_targets(
    rng: &mut ChaCha8Rng,
    queries: usize,
    frames: usize,
    height: usize,
    width: usize,
) -> (Vec<Prediction>, GroundTruth) {
    let cells = frames * height * width;
    let gt = GroundTruth {
        frames,
        height,
        width,
        mask: (0..cells).map(|_| f64::from(rng.gen_bool(0.4))).collect(),
        boxes: (0..frames).map(|_| random_box(rng)).collect(),
    };
    let preds = (0..queries)
        .map(|_| Prediction {
            frames,
            height,
            width,
            mask_logits: (0..cells).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            boxes: (0..frames).map(|_| random_box(rng)).collect(),
        })
        .collect();
    (preds, gt)
}
