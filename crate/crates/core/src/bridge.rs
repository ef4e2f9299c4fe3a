//! JSON-text entry points for foreign-language bindings. Outputs are the
//! exact bytes the CLI writes for the same inputs.

use serde::{Deserialize, Serialize};

use crate::amr::parse_penman;
use crate::error::Result;
use crate::pipeline::{RunConfig, Scorer};
use crate::reg::{build_reg, Dependency, RegDocument, SyntaxAnnotation};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Annotation half of a corpus record.
#[derive(Debug, Clone, Deserialize)]
pub struct AnnotationInput {
    pub tokens: Vec<String>,
    #[serde(default)]
    pub lemmas: Option<Vec<String>>,
    pub pos: Vec<String>,
    #[serde(default)]
    pub deps: Vec<(usize, usize, String)>,
}

impl AnnotationInput {
    fn annotation(self) -> Result<SyntaxAnnotation> {
        SyntaxAnnotation::new(
            &self.tokens,
            self.lemmas.as_deref(),
            self.pos,
            self.deps
                .into_iter()
                .map(|(head, dependent, label)| Dependency { head, dependent, label })
                .collect(),
        )
    }
}

/// REG document text for a PENMAN string and an annotation JSON object.
pub fn bridge_build_reg(penman: &str, annotation_json: &str) -> Result<String> {
    let ann: AnnotationInput = serde_json::from_str(annotation_json)?;
    let graph = parse_penman(penman)?;
    Ok(build_reg(&graph, &ann.annotation()?)?.document().to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeScore {
    pub referent: usize,
    pub probs: Vec<f64>,
    /// Row-major `nodes x queries`.
    pub scores: Vec<Vec<f64>>,
    pub scores_text: String,
    pub trace_json: String,
    pub distribution_json: String,
}

/// Seeded scorer shared across calls.
#[derive(Debug, Clone)]
pub struct BridgeHandle {
    scorer: Scorer,
}

impl BridgeHandle {
    /// `config_json` may omit any field; missing fields take their defaults.
    pub fn new(config_json: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(config_json)?;
        Ok(BridgeHandle { scorer: Scorer::new(config)? })
    }

    pub fn score(&self, reg_json: &str) -> Result<String> {
        let (reg, schedule) = RegDocument::from_json(reg_json)?;
        let out = self.scorer.score(&reg, &schedule)?;
        let result = BridgeScore {
            referent: out.referent,
            probs: out.probs.clone(),
            scores: out.table.scores.iter_rows().map(<[f64]>::to_vec).collect(),
            scores_text: out.scores_text(),
            trace_json: out.trace_json(),
            distribution_json: out.distribution_json(),
        };
        Ok(serde_json::to_string(&result)?)
    }
}

pub fn bridge_score(reg_json: &str, config_json: &str) -> Result<String> {
    BridgeHandle::new(config_json)?.score(reg_json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    const ANN: &str = r#"{"tokens":["cat","is","standing","near","the","cage"],"pos":["NN","VBZ","VBG","IN","DT","NN"]}"#;
    const PENMAN: &str = "(s / stand-01 :ARG1 (c~0 / cat) :ARG2 (n~3 / near-02 :ARG1 c :ARG2 (g~5 / cage)))";
    const SMALL: &str = r#"{"dim":8,"num_queries":3,"frame_queries":2,"frames":3,"window":2}"#;

    #[test]
    fn build_and_score() {
        let reg = bridge_build_reg(PENMAN, ANN).unwrap();
        let (parsed, _) = RegDocument::from_json(&reg).unwrap();
        assert_eq!(parsed.concepts[parsed.root].label, "cat");
        let a: BridgeScore = serde_json::from_str(&bridge_score(&reg, SMALL).unwrap()).unwrap();
        let b: BridgeScore = serde_json::from_str(&bridge_score(&reg, SMALL).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scores.len(), 4);
        assert_eq!(a.probs.len(), 3);
    }

    #[test]
    fn errors_surface_as_values() {
        assert!(matches!(bridge_build_reg("(a / b", ANN), Err(Error::Parse(_))));
        assert!(bridge_build_reg(PENMAN, "{}").is_err());
        assert!(bridge_score("{}", SMALL).is_err());
        assert!(BridgeHandle::new(r#"{"window":0}"#).is_err());
        assert!(BridgeHandle::new(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn single_node() {
        let ann = r#"{"tokens":["cat"],"pos":["NN"]}"#;
        let reg = bridge_build_reg("(c~0 / cat)", ann).unwrap();
        let out: BridgeScore = serde_json::from_str(&bridge_score(&reg, SMALL).unwrap()).unwrap();
        assert_eq!(out.scores.len(), 1);
    }
}
