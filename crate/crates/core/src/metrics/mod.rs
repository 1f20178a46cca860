//! Round-trip syntactic similarity between original and recompiled assembly.

pub mod bleu;
pub mod codebleu;
pub mod tokenize;

use serde::{Deserialize, Serialize};

pub use codebleu::{codebleu, codebleu_components, CodeBleuComponents, CodeBleuWeights};
pub use tokenize::{tokenize_asm, Normalization, TokenSequence};

pub fn bleu(candidate: &TokenSequence, reference: &TokenSequence, max_n: usize) -> f64 {
    let (c, r) = bleu::intern_pair(&candidate.tokens, &reference.tokens);
    bleu::bleu_tokens(&c, &r, max_n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScores {
    pub bleu1: f64,
    pub bleu4: f64,
    pub codebleu: f64,
}

/// Metric names in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "BLEU-1")]
    Bleu1,
    #[serde(rename = "BLEU-4")]
    Bleu4,
    #[serde(rename = "CodeBLEU")]
    CodeBleu,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Bleu1, Metric::Bleu4, Metric::CodeBleu];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu1 => "BLEU-1",
            Metric::Bleu4 => "BLEU-4",
            Metric::CodeBleu => "CodeBLEU",
        }
    }
}

impl SimilarityScores {
    /// Scores `roundtrip` (candidate) against `original` (reference) after
    /// normalized tokenization.
    pub fn compute(original_asm: &str, roundtrip_asm: &str, weights: &CodeBleuWeights) -> Self {
        let reference = tokenize_asm(original_asm, Normalization::Normalized);
        let candidate = tokenize_asm(roundtrip_asm, Normalization::Normalized);
        SimilarityScores {
            bleu1: bleu(&candidate, &reference, 1),
            bleu4: bleu(&candidate, &reference, 4),
            codebleu: codebleu(&candidate, &reference, weights),
        }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Bleu1 => self.bleu1,
            Metric::Bleu4 => self.bleu4,
            Metric::CodeBleu => self.codebleu,
        }
    }
}
