//! ROUGE-1, ROUGE-L and embedding-cosine scoring.

pub mod embedding;
pub mod rouge;

pub use embedding::{
    batch_similarity, embedding_similarity, EmbedError, EmbeddingProvider, HashingProvider,
    HttpEmbeddingProvider, Similarity,
};
pub use rouge::{lcs_len, rouge_1, rouge_1_tokens, rouge_l, rouge_l_tokens, tokenize, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cannot aggregate an empty list")]
pub struct EmptyInput;

/// Mean of per-sample values on the percentage scale, rounded to 2 decimals.
pub fn corpus_aggregate(values: &[f64]) -> Result<f64, EmptyInput> {
    if values.is_empty() {
        return Err(EmptyInput);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(round2(mean * 100.0))
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_examples() {
        assert_eq!(corpus_aggregate(&[1.0, 1.0]), Ok(100.0));
        assert_eq!(corpus_aggregate(&[0.5, 0.0]), Ok(25.0));
        assert_eq!(corpus_aggregate(&[]), Err(EmptyInput));
        assert_eq!(corpus_aggregate(&[1.0 / 3.0]), Ok(33.33));
    }
}
