//! Temporal concept-role reasoning.
//!
//! Scores are accumulated bottom-up along the REG schedule. For parent `p`
//! with children `k` over roles `R_kp`, and temporal query `i`:
//!
//! ```text
//! sigma_r(p, i)    = w_r . ((W_r^T O_i) * C_p)
//! F_k              = softmax_i(sigma(k, .))^T O
//! sigma_e(p, k, i) = sum_t tau_i^t * w_e . ((W_e^T [F_k, Ohat_i^t]) * R_kp)
//! sigma(p, i)      = sigma_r(p, i) + sum_k sigma_e(p, k, i)
//! ```
//!
//! `*` is the elementwise product. The frame weights `tau` are used as given,
//! without renormalizing over frames.

use serde::{Deserialize, Serialize};

use crate::amr::{concept_lemma, Role};
use crate::error::{Error, Result};
use crate::features::GraphFeatures;
use crate::numerics::{argmax, dot, seeded_rng, softmax_stable, Matrix};
use crate::reg::{ReasoningSchedule, Reg};
use crate::summarizer::QueryBundle;

const PARAM_STREAM: u64 = 0x7C00;

#[derive(Debug, Clone, PartialEq)]
pub struct TcrrParams {
    /// `d x d`.
    pub w_r: Matrix,
    pub omega_r: Vec<f64>,
    /// `2d x d`; the first `d` rows act on the child summary, the rest on the frame feature.
    pub w_e: Matrix,
    pub omega_e: Vec<f64>,
}

impl TcrrParams {
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, PARAM_STREAM);
        let scale = 1.0 / (dim as f64).sqrt();
        TcrrParams {
            w_r: Matrix::random_uniform(dim, dim, scale, &mut rng),
            omega_r: Matrix::random_uniform(1, dim, scale, &mut rng).into_vec(),
            w_e: Matrix::random_uniform(2 * dim, dim, scale, &mut rng),
            omega_e: Matrix::random_uniform(1, dim, scale, &mut rng).into_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.omega_r.len()
    }

    fn check(&self) -> Result<()> {
        let d = self.dim();
        if self.w_r.shape() != (d, d) || self.w_e.shape() != (2 * d, d) || self.omega_e.len() != d {
            return Err(Error::Dimension(format!(
                "reasoning parameters inconsistent with d = {d}"
            )));
        }
        Ok(())
    }
}

/// `omega . ((W^T x) * y)`.
pub fn oca_score(parent_feat: &[f64], bundle: &QueryBundle, params: &TcrrParams) -> f64 {
    let response = params.w_r.t_matvec(&bundle.video_feat);
    response
        .iter()
        .zip(parent_feat)
        .zip(&params.omega_r)
        .map(|((r, c), w)| w * r * c)
        .sum()
}

/// Softmax over the child's per-query scores, then the weighted sum of temporal query rows.
pub fn child_summary(child_scores: &[f64], video: &Matrix) -> Vec<f64> {
    let p = softmax_stable(child_scores);
    let mut out = vec![0.0; video.cols()];
    for (w, row) in p.iter().zip(video.iter_rows()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    out
}

pub fn trca_score(summary: &[f64], role_feat: &[f64], bundle: &QueryBundle, params: &TcrrParams) -> f64 {
    let d = params.dim();
    let (top, bottom) = split_we(&params.w_e, d);
    let from_summary = top.t_matvec(summary);
    let weights: Vec<f64> = params.omega_e.iter().zip(role_feat).map(|(w, r)| w * r).collect();
    bundle
        .frame_feats
        .iter()
        .zip(&bundle.taus)
        .map(|(frame, tau)| {
            let from_frame = bottom.t_matvec(frame);
            let s: f64 = weights
                .iter()
                .zip(from_summary.iter().zip(&from_frame))
                .map(|(w, (a, b))| w * (a + b))
                .sum();
            tau * s
        })
        .sum()
}

fn split_we(w_e: &Matrix, d: usize) -> (Matrix, Matrix) {
    (w_e.slice_rows(0, d), w_e.slice_rows(d, 2 * d))
}

/// Unnormalized referring scores, `nodes x queries`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub scores: Matrix,
}

impl ScoreTable {
    pub fn row(&self, node: usize) -> &[f64] {
        self.scores.row(node)
    }

    /// Row-major text: one line per node, space-separated shortest round-trip floats.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.scores.iter_rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QaKind {
    #[serde(rename = "OCA")]
    Oca,
    #[serde(rename = "TRCA")]
    Trca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub kind: QaKind,
    pub parent: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub child: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    pub question: String,
    pub answer: String,
    /// Per temporal query.
    pub contributions: Vec<f64>,
}

fn is_frame(label: &str) -> bool {
    concept_lemma(label).len() < label.trim_matches('"').len()
}

fn oca_record(label: &str, contributions: Vec<f64>) -> QaRecord {
    let question = if is_frame(label) {
        "what are you doing"
    } else {
        "what are you"
    };
    QaRecord {
        kind: QaKind::Oca,
        parent: label.to_string(),
        child: None,
        role: None,
        question: question.to_string(),
        answer: format!("\"{}\"", concept_lemma(label)),
        contributions,
    }
}

fn trca_record(parent: &str, child: &str, role: &Role, contributions: Vec<f64>) -> QaRecord {
    QaRecord {
        kind: QaKind::Trca,
        parent: parent.to_string(),
        child: Some(child.to_string()),
        role: Some(role.to_string()),
        question: format!("what \"{}\" means to you", concept_lemma(child)),
        answer: format!("\"{}\"", role.base_name()),
        contributions,
    }
}

/// Forward results plus the activations the backward pass needs.
#[derive(Debug, Clone)]
pub struct TcrrOutput {
    pub table: ScoreTable,
    pub trace: Vec<QaRecord>,
    /// Softmax of each node's scores, filled for nodes that have a parent.
    child_probs: Vec<Option<Vec<f64>>>,
    child_summaries: Vec<Option<Vec<f64>>>,
}

/// Borrowed view of everything the engine reads.
#[derive(Debug, Clone, Copy)]
pub struct TcrrInputs<'a> {
    pub reg: &'a Reg,
    pub features: &'a GraphFeatures,
    pub schedule: &'a ReasoningSchedule,
    pub bundles: &'a [QueryBundle],
}

impl TcrrInputs<'_> {
    fn video(&self) -> Matrix {
        let d = self.features.concepts.cols();
        let mut m = Matrix::zeros(self.bundles.len(), d);
        for (i, b) in self.bundles.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&b.video_feat);
        }
        m
    }

    fn check(&self, params: &TcrrParams) -> Result<()> {
        params.check()?;
        let n = self.reg.len();
        let d = params.dim();
        let f = self.features;
        if f.concepts.shape() != (n, d) || f.roles.shape() != (self.reg.edges.len(), d) {
            return Err(Error::Dimension("features do not match the REG or parameters".into()));
        }
        if f.edges.len() != self.reg.edges.len()
            || f.edges
                .iter()
                .zip(&self.reg.edges)
                .any(|(fe, e)| *fe != [e.src, e.dst])
        {
            return Err(Error::InvalidReg("feature edges do not match the REG".into()));
        }
        if self.schedule.layers.iter().flatten().any(|&v| v >= n) {
            return Err(Error::InvalidReg("schedule/graph mismatch: node index out of range".into()));
        }
        let layer = self.schedule.layer_of(n);
        if self.schedule.node_count() != n || layer.contains(&usize::MAX) {
            return Err(Error::InvalidReg("schedule/graph mismatch: node sets differ".into()));
        }
        if self.reg.edges.iter().any(|e| layer[e.src] >= layer[e.dst]) {
            return Err(Error::InvalidReg(
                "schedule/graph mismatch: a child is not scheduled before its parent".into(),
            ));
        }
        let Some(first) = self.bundles.first() else {
            return Err(Error::Dimension("at least one temporal query is required".into()));
        };
        let frames = first.frames();
        for b in self.bundles {
            if b.video_feat.len() != d
                || b.frames() != frames
                || b.frame_feats.len() != frames
                || b.frame_feats.iter().any(|f| f.len() != d)
            {
                return Err(Error::Dimension(format!("query bundle {} has inconsistent shape", b.index)));
            }
        }
        Ok(())
    }
}

/// Runs the schedule leaves to root, one OCA record per node and one TRCA record per edge.
pub fn run_tcrr(inputs: TcrrInputs<'_>, params: &TcrrParams) -> Result<TcrrOutput> {
    inputs.check(params)?;
    let TcrrInputs { reg, features, schedule, bundles } = inputs;
    let n = reg.len();
    let nq = bundles.len();
    let d = params.dim();
    let video = inputs.video();
    let (top, bottom) = split_we(&params.w_e, d);

    let responses: Vec<Vec<f64>> = bundles
        .iter()
        .map(|b| params.w_r.t_matvec(&b.video_feat))
        .collect();
    let frame_responses: Vec<Vec<Vec<f64>>> = bundles
        .iter()
        .map(|b| b.frame_feats.iter().map(|f| bottom.t_matvec(f)).collect())
        .collect();
    let in_edges = reg.in_edges();

    let mut scores = Matrix::zeros(n, nq);
    let mut trace = Vec::with_capacity(n + reg.edges.len());
    let mut child_probs = vec![None; n];
    let mut child_summaries: Vec<Option<Vec<f64>>> = vec![None; n];

    for layer in &schedule.layers {
        for &p in layer {
            let c_p = features.concepts.row(p);
            let oca: Vec<f64> = responses
                .iter()
                .map(|resp| {
                    resp.iter()
                        .zip(c_p)
                        .zip(&params.omega_r)
                        .map(|((r, c), w)| w * r * c)
                        .sum()
                })
                .collect();
            let mut total = oca.clone();
            trace.push(oca_record(&reg.concepts[p].label, oca));

            for &ei in &in_edges[p] {
                let k = reg.edges[ei].src;
                if child_summaries[k].is_none() {
                    let probs = softmax_stable(scores.row(k));
                    child_summaries[k] = Some(video.t_matvec(&probs));
                    child_probs[k] = Some(probs);
                }
                let summary = child_summaries[k].as_ref().unwrap();
                let from_summary = top.t_matvec(summary);
                let weights: Vec<f64> = params
                    .omega_e
                    .iter()
                    .zip(features.roles.row(ei))
                    .map(|(w, r)| w * r)
                    .collect();
                let base = dot(&weights, &from_summary);
                let contrib: Vec<f64> = (0..nq)
                    .map(|i| {
                        bundles[i]
                            .taus
                            .iter()
                            .zip(&frame_responses[i])
                            .map(|(tau, fr)| tau * (base + dot(&weights, fr)))
                            .sum()
                    })
                    .collect();
                for (t, c) in total.iter_mut().zip(&contrib) {
                    *t += c;
                }
                trace.push(trca_record(
                    &reg.concepts[p].label,
                    &reg.concepts[k].label,
                    &reg.edges[ei].role,
                    contrib,
                ));
            }
            scores.row_mut(p).copy_from_slice(&total);
        }
    }

    Ok(TcrrOutput {
        table: ScoreTable { scores },
        trace,
        child_probs,
        child_summaries,
    })
}

/// Softmax of the root row and its argmax (ties to the smallest index).
pub fn referring_distribution(table: &ScoreTable, root: usize) -> (Vec<f64>, usize) {
    let row = table.row(root);
    (softmax_stable(row), argmax(row))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcrrGrads {
    pub w_r: Matrix,
    pub omega_r: Vec<f64>,
    pub w_e: Matrix,
    pub omega_e: Vec<f64>,
    pub concepts: Matrix,
    pub roles: Matrix,
    /// Temporal query features, one row per bundle.
    pub video: Matrix,
    /// `[query][frame][dim]`.
    pub frame_feats: Vec<Vec<Vec<f64>>>,
    /// `[query][frame]`.
    pub taus: Vec<Vec<f64>>,
}

/// Exact gradients of a scalar function of the score table, given its
/// gradient `upstream` (`nodes x queries`) with respect to the table.
pub fn tcrr_backward(
    inputs: TcrrInputs<'_>,
    params: &TcrrParams,
    forward: &TcrrOutput,
    upstream: &Matrix,
) -> Result<TcrrGrads> {
    inputs.check(params)?;
    let TcrrInputs { reg, features, schedule, bundles } = inputs;
    let n = reg.len();
    let nq = bundles.len();
    let d = params.dim();
    if upstream.shape() != (n, nq) {
        return Err(Error::Dimension("upstream gradient must match the score table".into()));
    }
    let frames = bundles[0].frames();
    let video = inputs.video();
    let (top, bottom) = split_we(&params.w_e, d);
    let responses: Vec<Vec<f64>> = bundles
        .iter()
        .map(|b| params.w_r.t_matvec(&b.video_feat))
        .collect();
    let frame_responses: Vec<Vec<Vec<f64>>> = bundles
        .iter()
        .map(|b| b.frame_feats.iter().map(|f| bottom.t_matvec(f)).collect())
        .collect();
    let in_edges = reg.in_edges();

    let mut g_scores = upstream.clone();
    let mut g_omega_r = vec![0.0; d];
    let mut g_omega_e = vec![0.0; d];
    let mut g_top = Matrix::zeros(d, d);
    let mut g_concepts = Matrix::zeros(n, d);
    let mut g_roles = Matrix::zeros(reg.edges.len(), d);
    let mut g_video = Matrix::zeros(nq, d);
    let mut g_responses = vec![vec![0.0; d]; nq];
    let mut g_frame_responses = vec![vec![vec![0.0; d]; frames]; nq];
    let mut g_taus = vec![vec![0.0; frames]; nq];

    for layer in schedule.layers.iter().rev() {
        for &p in layer {
            let g = g_scores.row(p).to_vec();
            let c_p = features.concepts.row(p).to_vec();

            for i in 0..nq {
                if g[i] == 0.0 {
                    continue;
                }
                let resp = &responses[i];
                for a in 0..d {
                    g_omega_r[a] += g[i] * resp[a] * c_p[a];
                    g_concepts[(p, a)] += g[i] * params.omega_r[a] * resp[a];
                    g_responses[i][a] += g[i] * params.omega_r[a] * c_p[a];
                }
            }

            for &ei in &in_edges[p] {
                let k = reg.edges[ei].src;
                let summary = forward.child_summaries[k]
                    .as_ref()
                    .expect("forward pass caches every child summary");
                let probs = forward.child_probs[k].as_ref().unwrap();
                let role = features.roles.row(ei).to_vec();
                let weights: Vec<f64> = params.omega_e.iter().zip(&role).map(|(w, r)| w * r).collect();
                let from_summary = top.t_matvec(summary);

                let mut g_from_summary = vec![0.0; d];
                for i in 0..nq {
                    if g[i] == 0.0 {
                        continue;
                    }
                    for t in 0..frames {
                        let u: Vec<f64> = from_summary
                            .iter()
                            .zip(&frame_responses[i][t])
                            .map(|(a, b)| a + b)
                            .collect();
                        let s = dot(&weights, &u);
                        let tau = bundles[i].taus[t];
                        g_taus[i][t] += g[i] * s;
                        let ds = g[i] * tau;
                        for a in 0..d {
                            g_omega_e[a] += ds * u[a] * role[a];
                            g_roles[(ei, a)] += ds * params.omega_e[a] * u[a];
                            let du = ds * weights[a];
                            g_from_summary[a] += du;
                            g_frame_responses[i][t][a] += du;
                        }
                    }
                }

                g_top.add_outer(summary, &g_from_summary);
                let g_summary = top.matvec(&g_from_summary);
                let g_probs: Vec<f64> = (0..nq).map(|i| dot(&g_summary, video.row(i))).collect();
                for (i, &pi) in probs.iter().enumerate() {
                    for (gv, gs) in g_video.row_mut(i).iter_mut().zip(&g_summary) {
                        *gv += pi * gs;
                    }
                }
                let mean = dot(probs, &g_probs);
                for i in 0..nq {
                    g_scores[(k, i)] += probs[i] * (g_probs[i] - mean);
                }
            }
        }
    }

    let mut g_w_r = Matrix::zeros(d, d);
    let mut g_bottom = Matrix::zeros(d, d);
    let mut g_frame_feats = vec![vec![vec![0.0; d]; frames]; nq];
    for i in 0..nq {
        g_w_r.add_outer(&bundles[i].video_feat, &g_responses[i]);
        let back = params.w_r.matvec(&g_responses[i]);
        for (gv, b) in g_video.row_mut(i).iter_mut().zip(back) {
            *gv += b;
        }
        for t in 0..frames {
            g_bottom.add_outer(&bundles[i].frame_feats[t], &g_frame_responses[i][t]);
            g_frame_feats[i][t] = bottom.matvec(&g_frame_responses[i][t]);
        }
    }
    let g_w_e = g_top.vstack(&g_bottom)?;

    Ok(TcrrGrads {
        w_r: g_w_r,
        omega_r: g_omega_r,
        w_e: g_w_e,
        omega_e: g_omega_e,
        concepts: g_concepts,
        roles: g_roles,
        video: g_video,
        frame_feats: g_frame_feats,
        taus: g_taus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;
    use crate::features::{embed_graph, init_pe_table, EmbeddingProvider};
    use crate::reg::{acyclize, reroot, topological_schedule, RegConcept};

    fn bundle(video: Vec<f64>, frames: Vec<Vec<f64>>, taus: Vec<f64>) -> QueryBundle {
        QueryBundle {
            index: 0,
            selected: vec![0; taus.len()],
            video_feat: video,
            frame_feats: frames,
            taus,
        }
    }

    fn random_bundles(nq: usize, frames: usize, d: usize, seed: u64) -> Vec<QueryBundle> {
        let mut rng = seeded_rng(seed, 99);
        (0..nq)
            .map(|i| {
                let video = Matrix::random_uniform(1, d, 1.0, &mut rng).into_vec();
                let f = Matrix::random_uniform(frames, d, 1.0, &mut rng);
                let taus = Matrix::random_uniform(1, frames, 0.2, &mut rng)
                    .into_vec()
                    .into_iter()
                    .map(|x| 0.5 + x)
                    .collect();
                QueryBundle {
                    index: i,
                    video_feat: video,
                    frame_feats: f.iter_rows().map(<[f64]>::to_vec).collect(),
                    taus,
                    selected: vec![0; frames],
                }
            })
            .collect()
    }

    #[test]
    fn oca_identity_case() {
        let d = 3;
        let params = TcrrParams {
            w_r: Matrix::identity(d),
            omega_r: vec![1.0; d],
            w_e: Matrix::zeros(2 * d, d),
            omega_e: vec![1.0; d],
        };
        let e1 = vec![1.0, 0.0, 0.0];
        let b = bundle(e1.clone(), vec![], vec![]);
        assert_eq!(oca_score(&e1, &b, &params), 1.0);
        assert_eq!(oca_score(&[0.0; 3], &b, &params), 0.0);
    }

    #[test]
    fn oca_matches_three_step_evaluation() {
        let d = 5;
        let params = TcrrParams::random(d, 3);
        let b = &random_bundles(1, 2, d, 3)[0];
        let mut rng = seeded_rng(4, 0);
        let parent = Matrix::random_uniform(1, d, 1.0, &mut rng).into_vec();
        let mut matvec = vec![0.0; d];
        for a in 0..d {
            for bb in 0..d {
                matvec[a] += params.w_r[(bb, a)] * b.video_feat[bb];
            }
        }
        let hadamard: Vec<f64> = (0..d).map(|a| matvec[a] * parent[a]).collect();
        let expected: f64 = (0..d).map(|a| params.omega_r[a] * hadamard[a]).sum();
        assert!((oca_score(&parent, b, &params) - expected).abs() < 1e-12);
    }

    #[test]
    fn child_summary_limits() {
        let video = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 9.0]]).unwrap();
        let mean = child_summary(&[0.7, 0.7, 0.7], &video);
        assert!((mean[0] - 3.0).abs() < 1e-12 && (mean[1] - 5.0).abs() < 1e-12);
        let peaked = child_summary(&[0.0, 50.0, 0.0], &video);
        assert!((peaked[0] - 3.0).abs() < 1e-9 && (peaked[1] - 4.0).abs() < 1e-9);

        let scores = [0.3, -1.0, 2.0];
        let w = softmax_stable(&scores);
        let s = child_summary(&scores, &video);
        for a in 0..2 {
            let want: f64 = (0..3).map(|i| w[i] * video[(i, a)]).sum();
            assert!((s[a] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn trca_reductions() {
        let d = 3;
        let mut w_e = Matrix::zeros(2 * d, d);
        for a in 0..d {
            w_e[(a, a)] = 1.0;
        }
        let params = TcrrParams {
            w_r: Matrix::identity(d),
            omega_r: vec![1.0; d],
            w_e,
            omega_e: vec![1.0; d],
        };
        let summary = [0.5, -1.0, 2.0];
        let role = [1.0, 2.0, 3.0];
        let b = bundle(vec![0.0; 3], vec![vec![9.0, 9.0, 9.0]], vec![1.0]);
        let expected: f64 = summary.iter().zip(&role).map(|(a, b)| a * b).sum();
        assert!((trca_score(&summary, &role, &b, &params) - expected).abs() < 1e-12);
        assert_eq!(trca_score(&summary, &[0.0; 3], &b, &params), 0.0);
    }

    #[test]
    fn trca_matches_per_frame_loop() {
        let d = 4;
        let params = TcrrParams::random(d, 8);
        let b = &random_bundles(1, 4, d, 8)[0];
        let mut rng = seeded_rng(8, 5);
        let summary = Matrix::random_uniform(1, d, 1.0, &mut rng).into_vec();
        let role = Matrix::random_uniform(1, d, 1.0, &mut rng).into_vec();
        let mut expected = 0.0;
        for t in 0..4 {
            let z: Vec<f64> = summary.iter().chain(&b.frame_feats[t]).copied().collect();
            let u = params.w_e.t_matvec(&z);
            let s: f64 = (0..d).map(|a| params.omega_e[a] * u[a] * role[a]).sum();
            expected += b.taus[t] * s;
        }
        assert!((trca_score(&summary, &role, b, &params) - expected).abs() < 1e-12);
    }

    fn fig_c() -> (Reg, ReasoningSchedule, GraphFeatures) {
        let g = parse_penman("(s / stand-01 :ARG1 (c~0 / cat) :ARG2 (n~3 / near-02 :ARG1 c :ARG2 (g~5 / cage)))")
            .unwrap();
        let reg = acyclize(&reroot(&g, 1));
        let schedule = topological_schedule(&reg).unwrap();
        let f = embed_graph(&reg, &EmbeddingProvider::hashed(6, 1), &init_pe_table(6, 1)).unwrap();
        (reg, schedule, f)
    }

    #[test]
    fn single_node_scores_are_oca() {
        let reg = Reg {
            concepts: vec![RegConcept { label: "cat".into(), align: vec![0], depth: 0 }],
            edges: vec![],
            root: 0,
        };
        let schedule = topological_schedule(&reg).unwrap();
        let f = embed_graph(&reg, &EmbeddingProvider::hashed(4, 0), &init_pe_table(4, 0)).unwrap();
        let bundles = random_bundles(3, 2, 4, 0);
        let params = TcrrParams::random(4, 0);
        let out = run_tcrr(TcrrInputs { reg: &reg, features: &f, schedule: &schedule, bundles: &bundles }, &params)
            .unwrap();
        for (i, b) in bundles.iter().enumerate() {
            assert_eq!(out.table.scores[(0, i)], oca_score(f.concepts.row(0), b, &params));
        }
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn worked_example_trace() {
        let (reg, schedule, f) = fig_c();
        let bundles = random_bundles(4, 3, 6, 2);
        let params = TcrrParams::random(6, 2);
        let out = run_tcrr(TcrrInputs { reg: &reg, features: &f, schedule: &schedule, bundles: &bundles }, &params)
            .unwrap();
        assert_eq!(out.trace.len(), 8);
        assert_eq!(out.trace.iter().filter(|r| r.kind == QaKind::Oca).count(), 4);
        let first = &out.trace[0];
        assert_eq!((first.parent.as_str(), first.question.as_str()), ("cage", "what are you"));
        let stand = out.trace.iter().find(|r| r.parent == "stand-01").unwrap();
        assert_eq!(stand.question, "what are you doing");
        assert_eq!(stand.answer, "\"stand\"");
        let trca = out
            .trace
            .iter()
            .find(|r| r.kind == QaKind::Trca && r.child.as_deref() == Some("near-02") && r.parent == "stand-01")
            .unwrap();
        assert_eq!(trca.question, "what \"near\" means to you");
        assert_eq!(trca.answer, "\"ARG2\"");
        // The table row of each node is OCA plus its TRCA contributions.
        for p in 0..reg.len() {
            let mut sum = vec![0.0; 4];
            for r in out.trace.iter().filter(|r| r.parent == reg.concepts[p].label) {
                for (s, c) in sum.iter_mut().zip(&r.contributions) {
                    *s += c;
                }
            }
            for i in 0..4 {
                assert!((sum[i] - out.table.scores[(p, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn schedule_mismatch_is_rejected() {
        let (reg, schedule, f) = fig_c();
        let bundles = random_bundles(2, 1, 6, 0);
        let params = TcrrParams::random(6, 0);
        let mut reversed = schedule.clone();
        reversed.layers.reverse();
        let r = run_tcrr(TcrrInputs { reg: &reg, features: &f, schedule: &reversed, bundles: &bundles }, &params);
        assert!(matches!(r, Err(Error::InvalidReg(_))));
        let partial = ReasoningSchedule { layers: schedule.layers[1..].to_vec() };
        let r = run_tcrr(TcrrInputs { reg: &reg, features: &f, schedule: &partial, bundles: &bundles }, &params);
        assert!(r.is_err());
    }

    #[test]
    fn distribution_uniform_and_shift() {
        let table = ScoreTable { scores: Matrix::zeros(1, 20) };
        let (p, r) = referring_distribution(&table, 0);
        assert!(p.iter().all(|&x| (x - 0.05).abs() < 1e-15));
        assert_eq!(r, 0);

        let row = vec![0.1, 2.0, -1.0, 2.0];
        let shifted: Vec<f64> = row.iter().map(|x| x + 123.0).collect();
        let a = referring_distribution(&ScoreTable { scores: Matrix::from_rows(&[row]).unwrap() }, 0);
        let b = referring_distribution(&ScoreTable { scores: Matrix::from_rows(&[shifted]).unwrap() }, 0);
        assert_eq!(a.1, 1);
        assert_eq!(a.1, b.1);
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_leaf_omega_r_and_zero_upstream() {
        let reg = Reg {
            concepts: vec![RegConcept { label: "cat".into(), align: vec![0], depth: 0 }],
            edges: vec![],
            root: 0,
        };
        let schedule = topological_schedule(&reg).unwrap();
        let f = embed_graph(&reg, &EmbeddingProvider::hashed(4, 0), &init_pe_table(4, 0)).unwrap();
        let bundles = random_bundles(3, 2, 4, 1);
        let params = TcrrParams::random(4, 1);
        let inputs = TcrrInputs { reg: &reg, features: &f, schedule: &schedule, bundles: &bundles };
        let out = run_tcrr(inputs, &params).unwrap();
        let upstream = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
        let g = tcrr_backward(inputs, &params, &out, &upstream).unwrap();
        for a in 0..4 {
            let want: f64 = (0..3)
                .map(|i| upstream[(0, i)] * params.w_r.t_matvec(&bundles[i].video_feat)[a] * f.concepts[(0, a)])
                .sum();
            assert!((g.omega_r[a] - want).abs() < 1e-12);
        }

        let zero = tcrr_backward(inputs, &params, &out, &Matrix::zeros(1, 3)).unwrap();
        assert!(zero.w_r.as_slice().iter().all(|&v| v == 0.0));
        assert!(zero.omega_r.iter().chain(&zero.omega_e).all(|&v| v == 0.0));
        assert!(zero.video.as_slice().iter().all(|&v| v == 0.0));
    }
}
