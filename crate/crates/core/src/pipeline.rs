//! End-to-end scoring of a REG with seeded desk-scale blocks, and the
//! gradient checker. Shared by the CLI and the bindings.

use std::path::PathBuf;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{embed_graph, init_pe_table, EmbeddingProvider, DEFAULT_DIM};
use crate::losses::{evaluate_losses, evaluate_matched, LossWeights};
use crate::numerics::{finite_diff_grad, relative_error, seeded_rng, Matrix};
use crate::reg::{topological_schedule, ReasoningSchedule, Reg};
use crate::summarizer::{
    assemble_query_bundles, bcmf, swq_encode, temporal_decode, BlockParams, FrameQuerySet, DEFAULT_LAYERS,
    DEFAULT_QUERIES, DEFAULT_WINDOW,
};
use crate::synth::{random_bundles, random_features, random_reg, random_targets};
use crate::tcrr::{referring_distribution, run_tcrr, tcrr_backward, QaRecord, ScoreTable, TcrrInputs, TcrrParams};

pub const DEFAULT_FRAMES: usize = 12;
const FRAME_STREAM: u64 = 0x4652;
const GRADCHECK_STREAM: u64 = 0x4743;
pub const GRADCHECK_EPS: f64 = 1e-4;
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dim: usize,
    /// Temporal queries.
    pub num_queries: usize,
    /// Frame queries per frame.
    pub frame_queries: usize,
    pub frames: usize,
    pub window: usize,
    pub swq_layers: usize,
    pub decoder_layers: usize,
    pub weights: LossWeights,
    pub embeddings: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dim: DEFAULT_DIM,
            num_queries: DEFAULT_QUERIES,
            frame_queries: DEFAULT_QUERIES,
            frames: DEFAULT_FRAMES,
            window: DEFAULT_WINDOW,
            swq_layers: DEFAULT_LAYERS,
            decoder_layers: DEFAULT_LAYERS,
            weights: LossWeights::default(),
            embeddings: None,
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("num-queries", self.num_queries),
            ("frame queries", self.frame_queries),
            ("frames", self.frames),
            ("window", self.window),
            ("decoder layers", self.decoder_layers),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        self.weights.check()
    }
}

/// Per-record scoring outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutput {
    pub table: ScoreTable,
    pub trace: Vec<QaRecord>,
    pub root: usize,
    pub probs: Vec<f64>,
    pub referent: usize,
}

#[derive(Serialize)]
struct Distribution<'a> {
    root: usize,
    referent: usize,
    probs: &'a [f64],
}

impl ScoreOutput {
    pub fn scores_text(&self) -> String {
        self.table.to_text()
    }

    pub fn trace_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.trace).expect("traces always serialize");
        s.push('\n');
        s
    }

    pub fn distribution_json(&self) -> String {
        let d = Distribution {
            root: self.root,
            referent: self.referent,
            probs: &self.probs,
        };
        let mut s = serde_json::to_string_pretty(&d).expect("distributions always serialize");
        s.push('\n');
        s
    }
}

/// Seeded parameters and synthetic frame queries for one configuration.
#[derive(Debug, Clone)]
pub struct Scorer {
    config: RunConfig,
    provider: EmbeddingProvider,
    pe_table: Matrix,
    frames: FrameQuerySet,
    block: BlockParams,
    params: TcrrParams,
}

impl Scorer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.check()?;
        let provider = match &config.embeddings {
            Some(path) => EmbeddingProvider::load(path, config.seed)?,
            None => EmbeddingProvider::hashed(config.dim, config.seed),
        };
        if provider.dim() != config.dim {
            return Err(Error::Config(format!(
                "embedding file has dimension {}, configured dimension is {}",
                provider.dim(),
                config.dim
            )));
        }
        let d = config.dim;
        Ok(Scorer {
            pe_table: init_pe_table(d, config.seed),
            frames: FrameQuerySet::random(config.frames, config.frame_queries, d, config.seed, FRAME_STREAM),
            block: BlockParams::random(
                d,
                config.num_queries,
                config.swq_layers,
                config.decoder_layers,
                config.window,
                config.seed,
            )?,
            params: TcrrParams::random(d, config.seed),
            provider,
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn score(&self, reg: &Reg, schedule: &ReasoningSchedule) -> Result<ScoreOutput> {
        let mut features = embed_graph(reg, &self.provider, &self.pe_table)?;
        let graph_tokens = features.concepts.vstack(&features.roles)?;
        let fused = bcmf(self.frames.matrix(), &graph_tokens, &self.block.bcmf)?;
        let n = reg.len();
        features.concepts = fused.graph.slice_rows(0, n);
        features.roles = fused.graph.slice_rows(n, fused.graph.rows());

        let frames = swq_encode(&self.frames.with_matrix(fused.visual)?, &self.block)?;
        let temporal = temporal_decode(&frames, &self.block)?;
        let bundles = assemble_query_bundles(&frames, &temporal);
        let inputs = TcrrInputs {
            reg,
            features: &features,
            schedule,
            bundles: &bundles,
        };
        let out = run_tcrr(inputs, &self.params)?;
        let (probs, referent) = referring_distribution(&out.table, reg.root);
        debug!("scored {n} concepts, referent query {referent}");
        Ok(ScoreOutput {
            table: out.table,
            trace: out.trace,
            root: reg.root,
            probs,
            referent,
        })
    }

    pub fn score_reg(&self, reg: &Reg) -> Result<ScoreOutput> {
        self.score(reg, &topological_schedule(reg)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub dim: usize,
    pub instances: usize,
    pub max_nodes: usize,
    pub max_queries: usize,
    pub max_frames: usize,
    pub mask_size: usize,
    pub weights: LossWeights,
    /// Perturbs one analytic entry to exercise the failure path.
    #[serde(skip)]
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seed: 0,
            dim: 8,
            instances: 50,
            max_nodes: 8,
            max_queries: 6,
            max_frames: 4,
            mask_size: 4,
            weights: LossWeights::default(),
            corrupt: false,
        }
    }
}

pub const GRADIENT_GROUPS: [&str; 10] = [
    "W_r", "omega_r", "W_e", "omega_e", "C", "R", "O_video", "O_frame", "tau", "mask_logits",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub instances: usize,
    pub eps: f64,
    pub tolerance: f64,
    pub groups: Vec<GroupError>,
    pub passed: bool,
}

/// Where a flat perturbation lands inside one instance.
#[derive(Clone)]
struct Instance {
    reg: Reg,
    schedule: ReasoningSchedule,
    features: crate::features::GraphFeatures,
    bundles: Vec<crate::summarizer::QueryBundle>,
    params: TcrrParams,
    preds: Vec<crate::losses::Prediction>,
    gt: crate::losses::GroundTruth,
    matched: usize,
}

impl Instance {
    fn loss(&self, weights: &LossWeights) -> f64 {
        let inputs = TcrrInputs {
            reg: &self.reg,
            features: &self.features,
            schedule: &self.schedule,
            bundles: &self.bundles,
        };
        let out = run_tcrr(inputs, &self.params).expect("instance is consistent");
        evaluate_matched(out.table.row(self.reg.root), &self.preds, &self.gt, self.matched, weights)
            .expect("instance is consistent")
            .report
            .total
    }

    fn group_mut(&mut self, group: &str) -> Vec<&mut f64> {
        match group {
            "W_r" => self.params.w_r.as_mut_slice().iter_mut().collect(),
            "omega_r" => self.params.omega_r.iter_mut().collect(),
            "W_e" => self.params.w_e.as_mut_slice().iter_mut().collect(),
            "omega_e" => self.params.omega_e.iter_mut().collect(),
            "C" => self.features.concepts.as_mut_slice().iter_mut().collect(),
            "R" => self.features.roles.as_mut_slice().iter_mut().collect(),
            "O_video" => self.bundles.iter_mut().flat_map(|b| b.video_feat.iter_mut()).collect(),
            "O_frame" => self
                .bundles
                .iter_mut()
                .flat_map(|b| b.frame_feats.iter_mut().flatten())
                .collect(),
            "tau" => self.bundles.iter_mut().flat_map(|b| b.taus.iter_mut()).collect(),
            "mask_logits" => self.preds[self.matched].mask_logits.iter_mut().collect(),
            _ => unreachable!("unknown gradient group {group}"),
        }
    }

    fn values(&mut self, group: &str) -> Vec<f64> {
        self.group_mut(group).into_iter().map(|v| *v).collect()
    }

    fn with_values(&self, group: &str, values: &[f64]) -> Instance {
        let mut copy = self.clone();
        for (slot, v) in copy.group_mut(group).into_iter().zip(values) {
            *slot = *v;
        }
        copy
    }
}

fn random_instance(rng: &mut rand_chacha::ChaCha8Rng, cfg: &GradcheckConfig) -> Result<Instance> {
    use rand::Rng;
    let n = rng.gen_range(2..=cfg.max_nodes.max(2));
    let nq = rng.gen_range(1..=cfg.max_queries.max(1));
    let frames = rng.gen_range(1..=cfg.max_frames.max(1));
    let reg = random_reg(rng, n, 0.3);
    let schedule = topological_schedule(&reg)?;
    let features = random_features(rng, &reg, cfg.dim);
    let bundles = random_bundles(rng, nq, frames, cfg.dim);
    let params = TcrrParams::random(cfg.dim, rng.gen());
    let (preds, gt) = random_targets(rng, nq, frames, cfg.mask_size, cfg.mask_size);
    Ok(Instance {
        reg,
        schedule,
        features,
        bundles,
        params,
        preds,
        gt,
        matched: 0,
    })
}

fn analytic_groups(inst: &Instance, weights: &LossWeights) -> Result<Vec<Vec<f64>>> {
    let inputs = TcrrInputs {
        reg: &inst.reg,
        features: &inst.features,
        schedule: &inst.schedule,
        bundles: &inst.bundles,
    };
    let out = run_tcrr(inputs, &inst.params)?;
    let root = inst.reg.root;
    let loss = evaluate_losses(out.table.row(root), &inst.preds, &inst.gt, weights)?;
    let mut upstream = Matrix::zeros(inst.reg.len(), inst.bundles.len());
    upstream.row_mut(root).copy_from_slice(&loss.grad_root_scores);
    let g = tcrr_backward(inputs, &inst.params, &out, &upstream)?;
    Ok(vec![
        g.w_r.into_vec(),
        g.omega_r,
        g.w_e.into_vec(),
        g.omega_e,
        g.concepts.into_vec(),
        g.roles.into_vec(),
        g.video.into_vec(),
        g.frame_feats.into_iter().flatten().flatten().collect(),
        g.taus.into_iter().flatten().collect(),
        loss.grad_mask_logits,
    ])
}

/// Compares analytic gradients of the total loss against central differences.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.dim == 0 || cfg.mask_size == 0 {
        return Err(Error::Config("gradient check needs positive dimensions".into()));
    }
    cfg.weights.check()?;
    let mut rng = seeded_rng(cfg.seed, GRADCHECK_STREAM);
    let mut worst = [0.0f64; GRADIENT_GROUPS.len()];
    for k in 0..cfg.instances {
        let mut inst = random_instance(&mut rng, cfg)?;
        let (matched, _) = crate::losses::match_referent(&inst.preds, &inst.gt, &cfg.weights)?;
        inst.matched = matched;
        let mut analytic = analytic_groups(&inst, &cfg.weights)?;
        if cfg.corrupt && k == 0 {
            analytic[0][0] += 1.0;
        }
        for (gi, group) in GRADIENT_GROUPS.iter().enumerate() {
            let x = inst.values(group);
            let numeric = finite_diff_grad(|v| inst.with_values(group, v).loss(&cfg.weights), &x, GRADCHECK_EPS);
            let err = relative_error(&numeric, &analytic[gi]);
            debug!("instance {k} group {group}: rel err {err:.3e}");
            worst[gi] = worst[gi].max(err);
        }
    }
    let groups: Vec<GroupError> = GRADIENT_GROUPS
        .iter()
        .zip(worst)
        .map(|(g, e)| GroupError {
            group: g.to_string(),
            max_rel_err: if cfg.instances == 0 { 0.0 } else { e },
        })
        .collect();
    let passed = groups.iter().all(|g| g.max_rel_err <= GRADCHECK_TOL);
    Ok(GradcheckReport {
        instances: cfg.instances,
        eps: GRADCHECK_EPS,
        tolerance: GRADCHECK_TOL,
        groups: if cfg.instances == 0 { Vec::new() } else { groups },
        passed,
    })
}
