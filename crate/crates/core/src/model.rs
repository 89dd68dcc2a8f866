//! JSON persistence for trained pipelines.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::evaluation::{PipelineSpec, TrainedPipeline};
use crate::ranking::LexiconIndex;
use crate::scorer::{CombinedScorer, ScoreConfig, SimBounds};
use crate::shingling::Word;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerState {
    pub score_config: ScoreConfig,
    pub error_model: ErrorModel,
    pub bounds: Option<SimBounds>,
}

impl ScorerState {
    fn of(scorer: &CombinedScorer) -> Self {
        ScorerState {
            score_config: *scorer.config(),
            error_model: scorer.error_model().clone(),
            bounds: scorer.bounds(),
        }
    }

    fn restore(self, index: Arc<LexiconIndex>) -> Result<CombinedScorer> {
        Ok(CombinedScorer::new(self.score_config, self.error_model, index)?.with_bounds(self.bounds))
    }
}

/// Everything needed to rebuild a [`TrainedPipeline`]. The lexicon is
/// stored so that collection statistics can be recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub seed: u64,
    pub language_pair: String,
    pub spec: PipelineSpec,
    pub lexicon: Vec<Word>,
    pub hyperparameters: BTreeMap<String, f64>,
    pub classifier: ScorerState,
    pub retriever: ScorerState,
}

impl ModelFile {
    pub fn new(
        pipeline: &TrainedPipeline,
        lexicon: Vec<Word>,
        seed: u64,
        language_pair: String,
        hyperparameters: BTreeMap<String, f64>,
    ) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            seed,
            language_pair,
            spec: pipeline.spec.clone(),
            lexicon,
            hyperparameters,
            classifier: ScorerState::of(&pipeline.classifier),
            retriever: ScorerState::of(&pipeline.retriever),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let model: ModelFile = serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported model format version {}",
                path.display(),
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ModelFile::from_json(&text, path)
    }

    pub fn into_pipeline(self) -> Result<TrainedPipeline> {
        let index = Arc::new(LexiconIndex::build(&self.lexicon, &self.spec.shingler)?);
        Ok(TrainedPipeline {
            classifier: self.classifier.restore(Arc::clone(&index))?,
            retriever: self.retriever.restore(index)?,
            spec: self.spec,
        })
    }
}
