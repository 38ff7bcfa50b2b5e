use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const START: &str = "<start>";
pub const END: &str = "<end>";
pub const UNK: &str = "<unk>";
pub const NIL: &str = "<nil>";
pub const RESERVED: [&str; 4] = [START, END, UNK, NIL];

/// Lowercases, splits on whitespace and splits every punctuation character
/// off into its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_ascii()) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_lowercase().collect());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    start: usize,
    end: usize,
    unk: usize,
    nil: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered token list; ids are positions.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Config(format!("empty token at id {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate token {t:?}")));
            }
        }
        let find = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::Config(format!("vocabulary lacks reserved token {t}")))
        };
        Ok(Self {
            start: find(START)?,
            end: find(END)?,
            unk: find(UNK)?,
            nil: find(NIL)?,
            tokens,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn unk(&self) -> usize {
        self.unk
    }

    pub fn nil(&self) -> usize {
        self.nil
    }

    pub fn is_reserved(&self, id: usize) -> bool {
        id == self.start || id == self.end || id == self.unk || id == self.nil
    }

    /// One token per line, line index = id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }
}

/// Reserved tokens first, then every training token seen at least twice and
/// every external word, alphabetically.
pub fn build_vocabulary<S: AsRef<str>, W: AsRef<str>>(train_refexps: &[S], external_words: &[W]) -> Vocabulary {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for re in train_refexps {
        for t in tokenize(re.as_ref()) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut words: BTreeSet<String> = counts
        .into_iter()
        .filter(|&(_, c)| c >= 2)
        .map(|(t, _)| t)
        .collect();
    for w in external_words {
        words.extend(tokenize(w.as_ref()));
    }
    for r in RESERVED {
        words.remove(r);
    }
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(words)
        .collect();
    Vocabulary::from_tokens(tokens).expect("reserved tokens present, words deduplicated")
}

/// `<start> w_1 … w_n <end>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    ids: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>, vocab: &Vocabulary) -> Result<Self> {
        if ids.len() < 2 {
            return Err(Error::MalformedSequence(format!("too short: {ids:?}")));
        }
        if ids[0] != vocab.start() {
            return Err(Error::MalformedSequence("does not begin with <start>".into()));
        }
        if *ids.last().expect("len >= 2") != vocab.end() {
            return Err(Error::MalformedSequence("does not end with <end>".into()));
        }
        for &id in &ids[1..ids.len() - 1] {
            if id >= vocab.len() {
                return Err(Error::InvalidToken {
                    id,
                    vocab_size: vocab.len(),
                });
            }
            if id == vocab.start() || id == vocab.end() || id == vocab.nil() {
                return Err(Error::MalformedSequence(format!(
                    "reserved token {:?} inside the sequence",
                    vocab.token(id).unwrap_or("?")
                )));
            }
        }
        Ok(Self { ids })
    }

    /// Accepts a padded row: trailing `<nil>` after `<end>` is dropped.
    pub fn from_padded(ids: &[usize], vocab: &Vocabulary) -> Result<Self> {
        let mut n = ids.len();
        while n > 0 && ids[n - 1] == vocab.nil() {
            n -= 1;
        }
        Self::new(ids[..n].to_vec(), vocab)
    }

    /// From word ids only; adds `<start>`/`<end>`.
    pub fn from_words(words: &[usize], vocab: &Vocabulary) -> Result<Self> {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(vocab.start());
        ids.extend_from_slice(words);
        ids.push(vocab.end());
        Self::new(ids, vocab)
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Length excluding `<start>` (words plus `<end>`).
    pub fn len(&self) -> usize {
        self.ids.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn word_count(&self) -> usize {
        self.ids.len() - 2
    }

    pub fn words(&self) -> &[usize] {
        &self.ids[1..self.ids.len() - 1]
    }

    /// Teacher-forcing inputs: `<start> w_1 … w_n`.
    pub fn inputs(&self) -> &[usize] {
        &self.ids[..self.ids.len() - 1]
    }

    /// Prediction targets: `w_1 … w_n <end>`.
    pub fn targets(&self) -> &[usize] {
        &self.ids[1..]
    }
}

pub fn encode_refexp(text: &str, vocab: &Vocabulary) -> Result<TokenSequence> {
    let toks = tokenize(text);
    if toks.is_empty() {
        return Err(Error::Empty("referring expression text".into()));
    }
    let words: Vec<usize> = toks
        .iter()
        .map(|t| match vocab.id(t) {
            Some(id) if !vocab.is_reserved(id) => id,
            _ => vocab.unk(),
        })
        .collect();
    TokenSequence::from_words(&words, vocab)
}

/// Space-joined words, without `<start>`/`<end>`.
pub fn decode(seq: &TokenSequence, vocab: &Vocabulary) -> String {
    decode_words(seq.words(), vocab)
}

pub fn decode_words(words: &[usize], vocab: &Vocabulary) -> String {
    words
        .iter()
        .map(|&id| vocab.token(id).unwrap_or(UNK))
        .collect::<Vec<_>>()
        .join(" ")
}
