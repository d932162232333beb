//! Offline stand-ins for the title summariser and the text embedder.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{Embedder, SummarizeError, Summarizer};

const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "in", "on", "at", "of", "to", "and", "or", "with", "is", "are", "was",
    "were", "be", "been", "being", "his", "her", "their", "its", "it", "he", "she", "they",
    "them", "this", "that", "these", "those", "as", "by", "for", "from", "into", "onto", "then",
    "there", "here", "some", "who", "which", "while", "when", "where", "also", "very", "but",
    "so", "than", "has", "have", "had", "do", "does", "did", "not", "no", "can", "will", "just",
    "him", "we", "you", "i", "our", "your", "my", "one", "about", "after", "before", "over",
];

/// Words that open a new clause when they appear mid-sentence.
const CLAUSE_WORDS: &[&str] = &["while", "and", "then", "but", "as", "when", "after", "before", "whereas"];

pub fn is_stop_word(word: &str) -> bool {
    STOP_WORDS.iter().any(|s| s.eq_ignore_ascii_case(word))
}

/// Whitespace token count; the unit of the title budget.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn strip_punct(token: &str) -> &str {
    token.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Lower-cased alphanumeric words with surrounding punctuation removed.
pub fn normalized_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(strip_punct)
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Rule-based title summariser.
///
/// A caption within budget is its own title. Otherwise the title is the
/// first clause's content words (stop words dropped), truncated to the
/// budget, then topped up with unseen content words from the rest of the
/// caption until the budget is reached.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackSummarizer;

impl Summarizer for FallbackSummarizer {
    fn summarize(&self, caption: &str, max_tokens: usize) -> Result<String, SummarizeError> {
        if caption.trim().is_empty() {
            return Err(SummarizeError("empty caption".into()));
        }
        if max_tokens == 0 {
            return Err(SummarizeError("title budget is zero".into()));
        }
        if token_count(caption) <= max_tokens {
            return Ok(caption.split_whitespace().collect::<Vec<_>>().join(" "));
        }
        let tokens: Vec<&str> = caption.split_whitespace().collect();
        let mut clause_end = tokens.len();
        for (i, tok) in tokens.iter().enumerate() {
            if i > 0 && CLAUSE_WORDS.iter().any(|w| w.eq_ignore_ascii_case(strip_punct(tok))) {
                clause_end = i;
                break;
            }
            if tok.ends_with([',', ';', '.', ':', '!', '?']) {
                clause_end = i + 1;
                break;
            }
        }
        let content = |toks: &[&str]| -> Vec<String> {
            toks.iter()
                .map(|t| strip_punct(t))
                .filter(|w| !w.is_empty() && !is_stop_word(w))
                .map(ToString::to_string)
                .collect()
        };
        let mut title: Vec<String> = content(&tokens[..clause_end]);
        title.truncate(max_tokens);
        for word in content(&tokens[clause_end..]) {
            if title.len() >= max_tokens {
                break;
            }
            if !title.iter().any(|w| w.eq_ignore_ascii_case(&word)) {
                title.push(word);
            }
        }
        if title.is_empty() {
            title = tokens
                .iter()
                .take(max_tokens)
                .map(|t| strip_punct(t).to_string())
                .filter(|w| !w.is_empty())
                .collect();
        }
        if title.is_empty() {
            return Err(SummarizeError("caption has no words".into()));
        }
        Ok(title.join(" "))
    }
}

/// FNV-1a, used to bucket words.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Hashed bag of content words, L2-normalised. Text without content words
/// embeds to the zero vector.
#[derive(Debug, Clone, Copy)]
pub struct BagOfWordsEmbedder {
    pub dim: usize,
}

impl Default for BagOfWordsEmbedder {
    fn default() -> Self {
        Self { dim: 4096 }
    }
}

impl BagOfWordsEmbedder {
    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a(word.as_bytes()) % self.dim as u64) as usize
    }
}

impl Embedder for BagOfWordsEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for w in normalized_words(text).filter(|w| !is_stop_word(w)) {
            v[self.bucket(&w)] += 1.0;
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Cosine similarity; 0 when either vector is zero, exactly 1 for equal
/// nonzero vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_title_keeps_key_features() {
        let caption = "A man in a white coat lights a cigarette while playing piano aggressively";
        let title = FallbackSummarizer.summarize(caption, 6).unwrap();
        assert_eq!(title, "man white coat lights cigarette playing");
        assert!(token_count(&title) <= 6);
    }

    #[test]
    fn short_caption_is_its_own_title() {
        let t = FallbackSummarizer.summarize("Dog  runs home", 8).unwrap();
        assert_eq!(t, "Dog runs home");
    }

    #[test]
    fn punctuation_ends_first_clause() {
        let t = FallbackSummarizer
            .summarize("Chef slices onions, then the pan is heated and garlic added slowly", 4)
            .unwrap();
        assert_eq!(t, "Chef slices onions pan");
    }

    #[test]
    fn stop_words_are_dropped_from_titles() {
        let t = FallbackSummarizer.summarize("it is what it was and then it is", 3).unwrap();
        assert_eq!(t, "what");
        assert!(FallbackSummarizer.summarize("  ", 3).is_err());
    }

    #[test]
    fn embedder_is_unit_norm() {
        let e = BagOfWordsEmbedder::default();
        let v = e.embed("Red car drives past the red house");
        let n: f64 = v.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(e.embed("the of and").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cosine_conventions() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.3, 0.4], &[0.3, 0.4]), 1.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.3, 0.4]), 0.0);
    }
}
