use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub type TokenId = usize;

pub const END: TokenId = 0;
pub const UNK: TokenId = 1;
pub const END_TOKEN: &str = "<end>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<bos>";
pub const DEFAULT_MIN_COUNT: u64 = 5;
pub const DEFAULT_T_MAX: usize = 16;

/// Lowercases, drops every character that is neither alphabetic nor
/// whitespace, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphabetic() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Token ids terminated by END.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sentence {
    tokens: Vec<TokenId>,
    truncated: bool,
}

impl Sentence {
    /// Appends END to `body`. `body` must not contain END.
    pub fn from_body(mut body: Vec<TokenId>, truncated: bool) -> Self {
        debug_assert!(!body.contains(&END));
        body.push(END);
        Self { tokens: body, truncated }
    }

    /// Token ids including the trailing END.
    pub fn ids(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Token ids without the trailing END.
    pub fn body(&self) -> &[TokenId] {
        &self.tokens[..self.tokens.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }
}

/// Token table. Ids are dense: END = 0, UNK = 1, corpus words in
/// alphabetical order, BOS last. The generator's output space is every id
/// except BOS.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    counts: Vec<u64>,
    min_count: u64,
    corpus_hash: String,
}

impl Vocabulary {
    /// Builds the table from tokenized training sentences. Words seen fewer
    /// than `min_count` times are left out and encode to UNK.
    pub fn build<'a, I>(sentences: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut n_sentences = 0u64;
        let mut hasher_input = String::new();
        for s in sentences {
            n_sentences += 1;
            let toks = tokenize(s);
            hasher_input.push_str(&toks.join(" "));
            hasher_input.push('\n');
            for t in toks {
                *counts.entry(t).or_default() += 1;
            }
        }
        if n_sentences == 0 {
            return Err(Error::Empty("vocabulary corpus"));
        }
        let rare: u64 = counts.values().filter(|&&c| c < min_count).sum();
        let mut tokens = vec![END_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut token_counts = vec![n_sentences, rare];
        for (word, count) in counts {
            if count >= min_count {
                tokens.push(word);
                token_counts.push(count);
            }
        }
        tokens.push(BOS_TOKEN.to_string());
        token_counts.push(0);
        Ok(Self::from_parts(tokens, token_counts, min_count, sha256_hex(hasher_input.as_bytes())))
    }

    fn from_parts(tokens: Vec<String>, counts: Vec<u64>, min_count: u64, corpus_hash: String) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            counts,
            min_count,
            corpus_hash,
        }
    }

    /// All ids including BOS.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Size of the output space (every token except BOS).
    pub fn ext_size(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn bos(&self) -> TokenId {
        self.tokens.len() - 1
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn corpus_hash(&self) -> &str {
        &self.corpus_hash
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Digest of the token list; checkpoints record it.
    pub fn hash(&self) -> String {
        sha256_hex(self.tokens.join("\n").as_bytes())
    }

    /// Normalizes, maps unknown words to UNK, truncates the body to `t_max`
    /// and appends END.
    pub fn encode(&self, text: &str, t_max: usize) -> Sentence {
        let mut body: Vec<TokenId> = tokenize(text)
            .iter()
            .map(|t| match self.index.get(t.as_str()) {
                Some(&id) if id != END && id != self.bos() => id,
                _ => UNK,
            })
            .collect();
        let truncated = body.len() > t_max;
        body.truncate(t_max);
        Sentence::from_body(body, truncated)
    }

    /// Space-joined body tokens.
    pub fn decode(&self, sentence: &Sentence) -> String {
        sentence
            .body()
            .iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Header line `# vocab min_count=<n> corpus=<hash>`, then one
    /// `token\tcount` line per id.
    pub fn to_text(&self) -> String {
        let mut out = format!("# vocab min_count={} corpus={}\n", self.min_count, self.corpus_hash);
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            let _ = writeln!(out, "{t}\t{c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Empty("vocabulary file"))?;
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut min_count = None;
        let mut corpus_hash = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = field.strip_prefix("min_count=") {
                min_count = Some(v.parse::<u64>().map_err(|e| parse_err(1, e.to_string()))?);
            } else if let Some(v) = field.strip_prefix("corpus=") {
                corpus_hash = Some(v.to_string());
            }
        }
        let min_count = min_count.ok_or_else(|| parse_err(1, "missing min_count".into()))?;
        let corpus_hash = corpus_hash.ok_or_else(|| parse_err(1, "missing corpus hash".into()))?;
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in lines.enumerate() {
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(i + 2, "expected `token<TAB>count`".into()))?;
            tokens.push(tok.to_string());
            counts.push(count.parse::<u64>().map_err(|e| parse_err(i + 2, e.to_string()))?);
        }
        let vocab = Self::from_parts(tokens, counts, min_count, corpus_hash);
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n < 3
            || self.tokens[END] != END_TOKEN
            || self.tokens[UNK] != UNK_TOKEN
            || self.tokens[n - 1] != BOS_TOKEN
        {
            return Err(Error::Invariant("vocabulary special tokens out of place".into()));
        }
        if self.index.len() != n {
            return Err(Error::Invariant("vocabulary tokens are not unique".into()));
        }
        if (2..n - 1).any(|i| self.counts[i] < self.min_count) {
            return Err(Error::Invariant("vocabulary word below min_count".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vocabulary {
        Vocabulary::build(["a red cube", "a red ball", "a cube"], 1).unwrap()
    }

    #[test]
    fn normalization_rules() {
        let v = toy();
        let s = v.encode("A Red cube.", 16);
        let ids: Vec<&str> = s.ids().iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(ids, vec!["a", "red", "cube", END_TOKEN]);
        assert!(!s.is_truncated());
    }

    #[test]
    fn truncation_rule() {
        let v = toy();
        let text = vec!["a"; 20].join(" ");
        let s = v.encode(&text, 16);
        assert_eq!(s.body().len(), 16);
        assert_eq!(s.len(), 17);
        assert!(s.is_truncated());
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = toy();
        let s = v.encode("a purple cube", 16);
        assert_eq!(s.body()[1], UNK);
    }

    #[test]
    fn threshold_rule() {
        let mut sents = vec!["a pyramid"; 4];
        sents.extend(vec!["a cube"; 5]);
        let v = Vocabulary::build(sents, 5).unwrap();
        assert_eq!(v.id("pyramid"), None);
        assert_eq!(v.encode("pyramid", 16).body(), &[UNK]);
        assert_eq!(v.count(UNK), 4);
        v.validate().unwrap();
    }

    #[test]
    fn degenerate_threshold_keeps_everything() {
        let v = toy();
        assert_eq!(v.len(), 4 + 3);
        assert_eq!(v.ext_size(), v.len() - 1);
        assert_eq!(v.bos(), v.len() - 1);
    }

    #[test]
    fn text_round_trip() {
        let v = toy();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::from_text("").is_err());
        assert!(Vocabulary::from_text("# vocab corpus=x\n").is_err());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(Vocabulary::build(std::iter::empty::<&str>(), 5).is_err());
    }
}
