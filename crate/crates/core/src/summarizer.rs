//! Desk-scale object summarization: bilateral cross-modal fusion, shifted
//! window self-attention over frame queries, the temporal decoder, and the
//! assembly of per-query bundles consumed by the reasoning engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, seeded_rng, Matrix};

pub const DEFAULT_QUERIES: usize = 20;
pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_WINDOW: usize = 6;

/// Frame queries for `frames` frames, `queries` per frame, stored as a
/// `(frames * queries) x dim` matrix with row `t * queries + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameQuerySet {
    frames: usize,
    queries: usize,
    data: Matrix,
}

impl FrameQuerySet {
    pub fn new(frames: usize, queries: usize, data: Matrix) -> Result<Self> {
        if frames == 0 || queries == 0 {
            return Err(Error::Dimension("frame query set needs T >= 1 and N >= 1".into()));
        }
        if data.rows() != frames * queries {
            return Err(Error::Dimension(format!(
                "{} rows for {frames} frames x {queries} queries",
                data.rows()
            )));
        }
        if !data.is_finite() {
            return Err(Error::Dimension("non-finite frame query".into()));
        }
        Ok(FrameQuerySet { frames, queries, data })
    }

    pub fn random(frames: usize, queries: usize, dim: usize, seed: u64, stream: u64) -> Self {
        let mut rng = seeded_rng(seed, stream);
        FrameQuerySet {
            frames,
            queries,
            data: Matrix::random_uniform(frames * queries, dim, 1.0, &mut rng),
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn query(&self, t: usize, j: usize) -> &[f64] {
        self.data.row(t * self.queries + j)
    }

    pub fn query_mut(&mut self, t: usize, j: usize) -> &mut [f64] {
        self.data.row_mut(t * self.queries + j)
    }

    pub fn with_matrix(&self, data: Matrix) -> Result<Self> {
        FrameQuerySet::new(self.frames, self.queries, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalQuerySet {
    /// `num_temporal x dim`.
    pub queries: Matrix,
    frames: usize,
    frame_queries: usize,
    /// Flattened `num_temporal x frames x frame_queries`.
    gamma: Vec<f64>,
}

impl TemporalQuerySet {
    pub fn new(queries: Matrix, frames: usize, frame_queries: usize, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != queries.rows() * frames * frame_queries {
            return Err(Error::Dimension("gamma does not match query and frame counts".into()));
        }
        Ok(TemporalQuerySet {
            queries,
            frames,
            frame_queries,
            gamma,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.rows() == 0
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame_queries(&self) -> usize {
        self.frame_queries
    }

    /// Attention of temporal query `i` over the frame queries of frame `t`.
    pub fn gamma(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.frames + t) * self.frame_queries;
        &self.gamma[start..start + self.frame_queries]
    }
}

/// One temporal query as seen by the reasoning engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub index: usize,
    pub video_feat: Vec<f64>,
    /// Selected frame query per frame.
    pub frame_feats: Vec<Vec<f64>>,
    /// Attention weight of the selected frame query per frame.
    pub taus: Vec<f64>,
    /// Index of the selected frame query per frame.
    pub selected: Vec<usize>,
}

impl QueryBundle {
    pub fn frames(&self) -> usize {
        self.taus.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
}

impl AttentionParams {
    pub fn random(dim: usize, seed: u64, stream: u64) -> Self {
        let mut rng = seeded_rng(seed, stream);
        let scale = 1.0 / (dim as f64).sqrt();
        AttentionParams {
            wq: Matrix::random_uniform(dim, dim, scale, &mut rng),
            wk: Matrix::random_uniform(dim, dim, scale, &mut rng),
            wv: Matrix::random_uniform(dim, dim, scale, &mut rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcmfParams {
    pub wq: Matrix,
    pub wk: Matrix,
    /// Projects graph tokens for the visual update.
    pub wv_graph: Matrix,
    /// Projects visual tokens for the graph update.
    pub wv_visual: Matrix,
}

impl BcmfParams {
    pub fn random(dim: usize, seed: u64, stream: u64) -> Self {
        let mut rng = seeded_rng(seed, stream);
        let scale = 1.0 / (dim as f64).sqrt();
        BcmfParams {
            wq: Matrix::random_uniform(dim, dim, scale, &mut rng),
            wk: Matrix::random_uniform(dim, dim, scale, &mut rng),
            wv_graph: Matrix::random_uniform(dim, dim, scale, &mut rng),
            wv_visual: Matrix::random_uniform(dim, dim, scale, &mut rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub bcmf: BcmfParams,
    pub swq: Vec<AttentionParams>,
    /// Window length in frames.
    pub window: usize,
    /// Learned temporal queries, `num_temporal x dim`.
    pub temporal_queries: Matrix,
    pub decoder: Vec<AttentionParams>,
}

impl BlockParams {
    pub fn random(
        dim: usize,
        num_temporal: usize,
        swq_layers: usize,
        decoder_layers: usize,
        window: usize,
        seed: u64,
    ) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window length must be >= 1".into()));
        }
        if num_temporal == 0 || decoder_layers == 0 {
            return Err(Error::Config("temporal decoder needs queries and layers".into()));
        }
        let mut rng = seeded_rng(seed, 0x7100);
        Ok(BlockParams {
            bcmf: BcmfParams::random(dim, seed, 0x7000),
            swq: (0..swq_layers)
                .map(|l| AttentionParams::random(dim, seed, 0x7200 + l as u64))
                .collect(),
            window,
            temporal_queries: Matrix::random_uniform(num_temporal, dim, 1.0, &mut rng),
            decoder: (0..decoder_layers)
                .map(|l| AttentionParams::random(dim, seed, 0x7300 + l as u64))
                .collect(),
        })
    }
}

/// Residual scaled dot-product attention of `x` over `y`.
/// Returns the updated `x` and the row-stochastic attention weights.
pub fn attention(x: &Matrix, y: &Matrix, p: &AttentionParams) -> Result<(Matrix, Matrix)> {
    let q = x.matmul(&p.wq)?;
    let k = y.matmul(&p.wk)?;
    let v = y.matmul(&p.wv)?;
    let mut logits = q.matmul_t(&k)?;
    logits.scale(1.0 / (x.cols() as f64).sqrt());
    let weights = logits.softmax_rows();
    let mut out = weights.matmul(&v)?;
    out.add_assign(x);
    Ok((out, weights))
}

/// Unwindowed self-attention over every frame query; the reference the
/// windowed encoder must reproduce when one window spans the whole clip.
pub fn full_self_attention(frames: &FrameQuerySet, p: &AttentionParams) -> Result<FrameQuerySet> {
    let (out, _) = attention(frames.matrix(), frames.matrix(), p)?;
    frames.with_matrix(out)
}

/// Frames in each window for a given shift. Windows of `window` positions
/// cover a cyclic roll of the clip by `shift`; the final window is clipped.
pub fn window_partition(frames: usize, window: usize, shift: usize) -> Vec<Vec<usize>> {
    if window >= frames {
        return vec![(0..frames).collect()];
    }
    (0..frames)
        .step_by(window)
        .map(|start| {
            (start..(start + window).min(frames))
                .map(|p| (p + shift) % frames)
                .collect()
        })
        .collect()
}

/// Shifted-window self-attention. Odd layers shift the partition by `window / 2`.
pub fn swq_encode(frames: &FrameQuerySet, params: &BlockParams) -> Result<FrameQuerySet> {
    if params.window < 1 {
        return Err(Error::Config("window length must be >= 1".into()));
    }
    let n = frames.queries();
    let mut current = frames.clone();
    for (layer, p) in params.swq.iter().enumerate() {
        let shift = if layer % 2 == 1 { params.window / 2 } else { 0 };
        let mut next = current.clone();
        for window in window_partition(frames.frames(), params.window, shift) {
            let rows: Vec<usize> = window
                .iter()
                .flat_map(|&t| (0..n).map(move |j| t * n + j))
                .collect();
            let tokens = current.matrix().select_rows(&rows);
            let (out, _) = attention(&tokens, &tokens, p)?;
            for (k, &r) in rows.iter().enumerate() {
                next.data.row_mut(r).copy_from_slice(out.row(k));
            }
        }
        current = next;
    }
    Ok(current)
}

/// Temporal queries cross-attend to all frame queries, layer by layer. The
/// last layer's weights, renormalized within each frame, give gamma.
pub fn temporal_decode(frames: &FrameQuerySet, params: &BlockParams) -> Result<TemporalQuerySet> {
    let mut queries = params.temporal_queries.clone();
    let mut last = None;
    for p in &params.decoder {
        let (q, w) = attention(&queries, frames.matrix(), p)?;
        queries = q;
        last = Some(w);
    }
    let weights = last.ok_or_else(|| Error::Config("temporal decoder has no layers".into()))?;
    let (t_count, n) = (frames.frames(), frames.queries());
    let mut gamma = Vec::with_capacity(queries.rows() * t_count * n);
    for i in 0..queries.rows() {
        let row = weights.row(i);
        for t in 0..t_count {
            let slice = &row[t * n..(t + 1) * n];
            let total: f64 = slice.iter().sum();
            gamma.extend(slice.iter().map(|w| w / total));
        }
    }
    TemporalQuerySet::new(queries, t_count, n, gamma)
}

/// For each temporal query and frame, the frame query with the largest
/// attention weight (ties to the smallest index) and that weight.
pub fn assemble_query_bundles(frames: &FrameQuerySet, temporal: &TemporalQuerySet) -> Vec<QueryBundle> {
    (0..temporal.len())
        .map(|i| {
            let mut bundle = QueryBundle {
                index: i,
                video_feat: temporal.queries.row(i).to_vec(),
                frame_feats: Vec::with_capacity(temporal.frames()),
                taus: Vec::with_capacity(temporal.frames()),
                selected: Vec::with_capacity(temporal.frames()),
            };
            for t in 0..temporal.frames() {
                let g = temporal.gamma(i, t);
                let j = argmax(g);
                bundle.frame_feats.push(frames.query(t, j).to_vec());
                bundle.taus.push(g[j]);
                bundle.selected.push(j);
            }
            bundle
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcmfOutput {
    pub visual: Matrix,
    pub graph: Matrix,
    /// Visual-to-text weights, each row sums to 1 over graph tokens.
    pub visual_weights: Matrix,
    /// Text-to-visual weights, each column sums to 1 over visual tokens.
    pub graph_weights: Matrix,
}

/// Bilateral fusion: one shared logit matrix, normalized along the text axis
/// to update visual tokens and along the visual axis to update graph tokens.
pub fn bcmf(visual: &Matrix, graph: &Matrix, p: &BcmfParams) -> Result<BcmfOutput> {
    if visual.cols() != graph.cols() {
        return Err(Error::Dimension(format!(
            "visual dim {} vs graph dim {}",
            visual.cols(),
            graph.cols()
        )));
    }
    let mut logits = visual.matmul(&p.wq)?.matmul_t(&graph.matmul(&p.wk)?)?;
    logits.scale(1.0 / (visual.cols() as f64).sqrt());

    let visual_weights = logits.softmax_rows();
    let graph_weights = logits.transpose().softmax_rows().transpose();

    let mut new_visual = visual_weights.matmul(&graph.matmul(&p.wv_graph)?)?;
    new_visual.add_assign(visual);
    let mut new_graph = graph_weights
        .transpose()
        .matmul(&visual.matmul(&p.wv_visual)?)?;
    new_graph.add_assign(graph);
    Ok(BcmfOutput {
        visual: new_visual,
        graph: new_graph,
        visual_weights,
        graph_weights,
    })
}
