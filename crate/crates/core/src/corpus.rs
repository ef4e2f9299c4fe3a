//! Pre-annotated JSONL input: one expression per line with its tokens, POS
//! tags, dependencies and PENMAN parse.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::amr::parse_penman;
use crate::error::{Error, Result};
use crate::reg::{build_reg, Dependency, RegBuild, SyntaxAnnotation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub expression: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<Vec<String>>,
    pub pos: Vec<String>,
    /// `[head, dependent, label]`.
    pub deps: Vec<(usize, usize, String)>,
    pub penman: String,
}

impl CorpusRecord {
    pub fn annotation(&self) -> Result<SyntaxAnnotation> {
        SyntaxAnnotation::new(
            &self.tokens,
            self.lemmas.as_deref(),
            self.pos.clone(),
            self.deps
                .iter()
                .map(|(head, dependent, label)| Dependency {
                    head: *head,
                    dependent: *dependent,
                    label: label.clone(),
                })
                .collect(),
        )
    }

    /// Ids become file names, so they must be non-empty and path-free.
    pub fn check_id(&self) -> Result<()> {
        let bad = self.id.is_empty()
            || self.id.starts_with('.')
            || self.id.chars().any(|c| c == '/' || c == '\\' || c.is_control());
        if bad {
            return Err(Error::Annotation(format!("record id {:?} is not a valid file stem", self.id)));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<RegBuild> {
        self.check_id()?;
        let ann = self.annotation()?;
        let graph = parse_penman(&self.penman)?;
        build_reg(&graph, &ann)
    }
}

/// One JSONL line: its 1-based line number and the decoded record or the decode error.
pub type CorpusLine = (usize, std::result::Result<CorpusRecord, String>);

pub fn parse_corpus(text: &str) -> Vec<CorpusLine> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
        .collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_corpus(&text))
}
