//! `reg` command-line front-end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use serde::Serialize;

use crate::corpus::read_corpus;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::pipeline::{gradcheck, GradcheckConfig, RunConfig, Scorer};
use crate::reg::{ReferentRule, RegDocument};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

pub const REG_SUFFIX: &str = ".reg.json";

#[derive(Debug, Parser)]
#[command(name = "reg", version, about = "Referential event graphs and concept-role reasoning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an annotated JSONL corpus into REG files.
    Parse {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score REG files (or a corpus) and write scores, traces and distributions.
    Score {
        /// REG files or directories containing `*.reg.json`.
        inputs: Vec<PathBuf>,
        /// Parse and score a JSONL corpus instead of REG files.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check analytic loss gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[command(flatten)]
        lambdas: LambdaArgs,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct LambdaArgs {
    #[arg(long, default_value_t = 2.0)]
    pub lambda_reason: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda_mask: f64,
    #[arg(long, default_value_t = 5.0)]
    pub lambda_dice: f64,
    #[arg(long, default_value_t = 2.0)]
    pub lambda_giou: f64,
    #[arg(long = "lambda-l1", default_value_t = 2.0)]
    pub lambda_l1: f64,
}

impl LambdaArgs {
    fn weights(&self) -> LossWeights {
        LossWeights {
            reason: self.lambda_reason,
            mask: self.lambda_mask,
            dice: self.lambda_dice,
            giou: self.lambda_giou,
            l1: self.lambda_l1,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::features::DEFAULT_DIM)]
    pub dim: usize,
    #[arg(long, default_value_t = crate::summarizer::DEFAULT_QUERIES)]
    pub num_queries: usize,
    #[arg(long, default_value_t = crate::summarizer::DEFAULT_QUERIES)]
    pub frame_queries: usize,
    #[arg(long, default_value_t = crate::pipeline::DEFAULT_FRAMES)]
    pub frames: usize,
    #[arg(long, default_value_t = crate::summarizer::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = crate::summarizer::DEFAULT_LAYERS)]
    pub swq_layers: usize,
    #[arg(long, default_value_t = crate::summarizer::DEFAULT_LAYERS)]
    pub decoder_layers: usize,
    /// TSV file of `token<TAB>values`; unknown tokens fall back to hashed vectors.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub lambdas: LambdaArgs,
}

impl RunArgs {
    pub fn config(&self) -> RunConfig {
        RunConfig {
            seed: self.seed,
            dim: self.dim,
            num_queries: self.num_queries,
            frame_queries: self.frame_queries,
            frames: self.frames,
            window: self.window,
            swq_layers: self.swq_layers,
            decoder_layers: self.decoder_layers,
            weights: self.lambdas.weights(),
            embeddings: self.embeddings.clone(),
        }
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let code = match cli.command {
        Command::Parse { corpus, out } => cmd_parse(&corpus, &out),
        Command::Score {
            inputs,
            corpus,
            out,
            run,
        } => cmd_score(&inputs, corpus.as_deref(), &out, &run.config()),
        Command::Gradcheck {
            instances,
            seed,
            dim,
            lambdas,
            out,
            corrupt_gradient,
        } => {
            let cfg = GradcheckConfig {
                seed,
                dim,
                instances,
                weights: lambdas.weights(),
                corrupt: corrupt_gradient,
                ..GradcheckConfig::default()
            };
            cmd_gradcheck(&cfg, out.as_deref())
        }
    };
    ExitCode::from(code)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

fn is_verification_error(e: &Error) -> bool {
    matches!(e, Error::InvalidReg(_) | Error::Cycle(_))
}

#[derive(Debug, Serialize)]
struct ParseItem {
    line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    rule: Option<ReferentRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    referent_token: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    referent_concept: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct ParseSummary {
    records: usize,
    ok: usize,
    failed: usize,
    items: Vec<ParseItem>,
}

pub fn cmd_parse(corpus: &Path, out: &Path) -> u8 {
    let lines = match read_corpus(corpus) {
        Ok(l) => l,
        Err(e) => {
            error!("{e}");
            return EXIT_INPUT;
        }
    };
    if let Err(e) = create_dir(out) {
        error!("{e}");
        return EXIT_INPUT;
    }
    let mut code = EXIT_OK;
    let mut items = Vec::with_capacity(lines.len());
    let mut seen = std::collections::HashSet::new();
    for (line, decoded) in lines {
        let mut item = ParseItem {
            line,
            id: None,
            status: "error",
            rule: None,
            referent_token: None,
            referent_concept: None,
            file: None,
            error: None,
        };
        let record = match decoded {
            Ok(r) => r,
            Err(e) => {
                warn!("line {line}: {e}");
                item.error = Some(e);
                code = EXIT_INPUT;
                items.push(item);
                continue;
            }
        };
        item.id = Some(record.id.clone());
        if !seen.insert(record.id.clone()) {
            item.error = Some("duplicate record id".into());
            code = EXIT_INPUT;
            items.push(item);
            continue;
        }
        match record.build() {
            Ok(built) => {
                let name = format!("{}{REG_SUFFIX}", record.id);
                if let Err(e) = write(&out.join(&name), &built.document().to_json()) {
                    error!("{e}");
                    return EXIT_INPUT;
                }
                info!("{}: {} via {}", record.id, built.reg.concepts[built.reg.root].label, built.rule);
                item.status = "ok";
                item.rule = Some(built.rule);
                item.referent_token = built.referent_token;
                item.referent_concept = Some(built.reg.concepts[built.reg.root].label.clone());
                item.file = Some(name);
            }
            Err(e) => {
                warn!("{}: {e}", record.id);
                if is_verification_error(&e) {
                    if code == EXIT_OK {
                        code = EXIT_VERIFY;
                    }
                } else {
                    code = EXIT_INPUT;
                }
                item.error = Some(e.to_string());
            }
        }
        items.push(item);
    }
    let ok = items.iter().filter(|i| i.status == "ok").count();
    let summary = ParseSummary {
        records: items.len(),
        ok,
        failed: items.len() - ok,
        items,
    };
    if let Err(e) = write(&out.join("summary.json"), &pretty(&summary)) {
        error!("{e}");
        return EXIT_INPUT;
    }
    println!("parsed {} records: {} ok, {} failed", summary.records, summary.ok, summary.failed);
    code
}

/// Expands directories into their `*.reg.json` files, sorted by name.
pub fn collect_reg_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(REG_SUFFIX))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    Ok(files)
}

fn stem_of(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(REG_SUFFIX)
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name)
        .to_string()
}

fn write_scores(out: &Path, stem: &str, output: &crate::pipeline::ScoreOutput) -> Result<()> {
    write(&out.join(format!("{stem}.scores.txt")), &output.scores_text())?;
    write(&out.join(format!("{stem}.trace.json")), &output.trace_json())?;
    write(&out.join(format!("{stem}.dist.json")), &output.distribution_json())
}

pub fn cmd_score(inputs: &[PathBuf], corpus: Option<&Path>, out: &Path, config: &RunConfig) -> u8 {
    let scorer = match Scorer::new(config.clone()) {
        Ok(s) => s,
        Err(e) => {
            error!("{e}");
            return EXIT_INPUT;
        }
    };
    if let Err(e) = create_dir(out) {
        error!("{e}");
        return EXIT_INPUT;
    }
    let mut regs = Vec::new();
    if let Some(corpus) = corpus {
        let lines = match read_corpus(corpus) {
            Ok(l) => l,
            Err(e) => {
                error!("{e}");
                return EXIT_INPUT;
            }
        };
        for (line, decoded) in lines {
            match decoded.map_err(|e| e.to_string()).and_then(|r| {
                r.build().map(|b| (r.id.clone(), b)).map_err(|e| format!("{}: {e}", r.id))
            }) {
                Ok((id, b)) => regs.push((id, b.reg, b.schedule)),
                Err(e) => {
                    error!("{}: line {line}: {e}", corpus.display());
                    return EXIT_INPUT;
                }
            }
        }
    }
    let files = match collect_reg_files(inputs) {
        Ok(f) => f,
        Err(e) => {
            error!("{e}");
            return EXIT_INPUT;
        }
    };
    for file in &files {
        let parsed = fs::read_to_string(file)
            .map_err(|e| Error::io(file, e))
            .and_then(|text| RegDocument::from_json(&text));
        match parsed {
            Ok((reg, schedule)) => regs.push((stem_of(file), reg, schedule)),
            Err(e) => {
                error!("{}: {e}", file.display());
                return EXIT_INPUT;
            }
        }
    }
    for (stem, reg, schedule) in &regs {
        match scorer.score(reg, schedule).and_then(|o| write_scores(out, stem, &o)) {
            Ok(()) => info!("scored {stem}"),
            Err(e) => {
                error!("{stem}: {e}");
                return EXIT_INPUT;
            }
        }
    }
    println!("scored {} graphs", regs.len());
    EXIT_OK
}

pub fn cmd_gradcheck(cfg: &GradcheckConfig, out: Option<&Path>) -> u8 {
    let report = match gradcheck(cfg) {
        Ok(r) => r,
        Err(e) => {
            error!("{e}");
            return EXIT_INPUT;
        }
    };
    let text = pretty(&report);
    print!("{text}");
    if let Some(path) = out {
        if let Err(e) = write(path, &text) {
            error!("{e}");
            return EXIT_INPUT;
        }
    }
    if report.passed {
        EXIT_OK
    } else {
        EXIT_VERIFY
    }
}
