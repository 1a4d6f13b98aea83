//! Byte-level BPE tokenizer and the multitask special-token block.

mod pretokenize;
mod specials;
mod transcript;

pub use pretokenize::split as pretokenize;
pub use specials::{language_index, SpecialTokens, LANGUAGES, N_TIMESTAMPS, TIMESTAMP_STEP};
pub use transcript::{ParsedSegment, Task, TaskSpec};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("vocabulary file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
    #[error("special token manifest: {0}")]
    Manifest(String),
    #[error("token id {0} out of range")]
    UnknownId(u32),
    #[error("timestamp {0} s outside 0..=30")]
    TimestampRange(f64),
    #[error("token {0} is not a timestamp")]
    NotATimestamp(u32),
    #[error("unsupported language {0:?}")]
    UnsupportedLanguage(String),
    #[error("protocol violation at position {pos}: {msg}")]
    Protocol { pos: usize, msg: String },
}

/// Byte-level BPE vocabulary: regular tokens `0..n_regular` ranked by merge
/// priority, followed by the special-token block.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    ranks: HashMap<Vec<u8>, u32>,
    specials: SpecialTokens,
}

impl Vocabulary {
    /// Builds a vocabulary from regular token byte strings indexed by rank.
    ///
    /// Ranks 0..256 must be the 256 single bytes; every longer token must
    /// split into two tokens of lower rank.
    pub fn from_tokens(tokens: Vec<Vec<u8>>) -> Result<Self, VocabError> {
        if tokens.len() < 256 {
            return Err(VocabError::Invalid(format!(
                "need at least 256 byte tokens, got {}",
                tokens.len()
            )));
        }
        let mut ranks = HashMap::with_capacity(tokens.len());
        for (rank, t) in tokens.iter().enumerate() {
            if rank < 256 && t.len() != 1 {
                return Err(VocabError::Invalid(format!(
                    "rank {rank} must be a single byte"
                )));
            }
            if rank >= 256 {
                let has_parents = (1..t.len()).any(|cut| {
                    let lower = |part: &[u8]| ranks.get(part).is_some_and(|&r| (r as usize) < rank);
                    lower(&t[..cut]) && lower(&t[cut..])
                });
                if !has_parents {
                    return Err(VocabError::Invalid(format!(
                        "token {rank} is not a merge of two earlier tokens"
                    )));
                }
            }
            if ranks.insert(t.clone(), rank as u32).is_some() {
                return Err(VocabError::Invalid(format!("duplicate token at rank {rank}")));
            }
        }
        let specials = SpecialTokens::standard(tokens.len() as u32);
        Ok(Self {
            tokens,
            ranks,
            specials,
        })
    }

    /// The 256 byte tokens with no merges, plus the special block.
    pub fn byte_level() -> Self {
        Self::from_tokens((0..=255u8).map(|b| vec![b]).collect())
            .expect("byte tokens form a valid vocabulary")
    }

    /// Parses `<base64 bytes> <rank>` lines. Ranks must be dense from 0.
    pub fn parse_ranks(text: &str) -> Result<Vec<Vec<u8>>, VocabError> {
        let mut entries: Vec<(u32, Vec<u8>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| VocabError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let (tok, rank) = line.split_once(' ').ok_or_else(|| err("expected `token rank`"))?;
            let bytes = BASE64.decode(tok).map_err(|_| err("bad base64"))?;
            let rank: u32 = rank.trim().parse().map_err(|_| err("bad rank"))?;
            entries.push((rank, bytes));
        }
        entries.sort_by_key(|e| e.0);
        for (i, (rank, _)) in entries.iter().enumerate() {
            if *rank as usize != i {
                return Err(VocabError::Invalid(format!(
                    "ranks are not dense: expected {i}, found {rank}"
                )));
            }
        }
        Ok(entries.into_iter().map(|e| e.1).collect())
    }

    /// Loads a rank file and, optionally, a special-token manifest that must
    /// agree with the standard layout.
    pub fn load(
        ranks_path: impl AsRef<Path>,
        manifest_path: Option<&Path>,
    ) -> Result<Self, VocabError> {
        let vocab = Self::from_tokens(Self::parse_ranks(&fs::read_to_string(ranks_path)?)?)?;
        if let Some(p) = manifest_path {
            SpecialTokens::from_manifest(&fs::read_to_string(p)?, vocab.n_regular() as u32)?;
        }
        Ok(vocab)
    }

    pub fn ranks_text(&self) -> String {
        let mut out = String::new();
        for (rank, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{} {}", BASE64.encode(t), rank);
        }
        out
    }

    pub fn n_regular(&self) -> usize {
        self.tokens.len()
    }

    /// Total number of ids, regular and special.
    pub fn len(&self) -> usize {
        self.specials.end_id() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn id_of(&self, bytes: &[u8]) -> Option<u32> {
        self.ranks.get(bytes).copied()
    }

    /// Repeatedly merges the adjacent pair whose concatenation has the lowest
    /// rank (leftmost on ties) until no pair is in the vocabulary.
    fn bpe(&self, piece: &[u8], out: &mut Vec<u32>) {
        let mut parts: Vec<&[u8]> = piece.chunks(1).collect();
        let mut joined = Vec::new();
        while parts.len() > 1 {
            let mut best: Option<(u32, usize)> = None;
            for i in 0..parts.len() - 1 {
                joined.clear();
                joined.extend_from_slice(parts[i]);
                joined.extend_from_slice(parts[i + 1]);
                if let Some(&r) = self.ranks.get(joined.as_slice()) {
                    if best.is_none_or(|(br, _)| r < br) {
                        best = Some((r, i));
                    }
                }
            }
            let Some((_, i)) = best else { break };
            let start = parts[i].as_ptr() as usize - piece.as_ptr() as usize;
            let len = parts[i].len() + parts[i + 1].len();
            parts[i] = &piece[start..start + len];
            parts.remove(i + 1);
        }
        out.extend(parts.iter().map(|p| self.ranks[*p]));
    }

    /// Encodes text to regular token ids. Never produces special ids.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for piece in pretokenize::split(text) {
            self.bpe(piece.as_bytes(), &mut out);
        }
        out
    }

    /// Decodes ids to text. Special tokens are rendered as `<|name|>` unless
    /// `skip_specials` is set; invalid UTF-8 becomes U+FFFD.
    pub fn decode(&self, ids: &[u32], skip_specials: bool) -> Result<String, VocabError> {
        let mut out = String::new();
        let mut bytes = Vec::new();
        for &id in ids {
            if let Some(t) = self.tokens.get(id as usize) {
                bytes.extend_from_slice(t);
            } else if let Some(name) = self.specials.name(id) {
                if !skip_specials {
                    out.push_str(&String::from_utf8_lossy(&bytes));
                    bytes.clear();
                    out.push_str(&name);
                }
            } else {
                return Err(VocabError::UnknownId(id));
            }
        }
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }

    /// Decodes only the regular tokens in `ids`, dropping specials.
    pub fn decode_text(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = ids
            .iter()
            .filter_map(|&id| self.tokens.get(id as usize))
            .flatten()
            .copied()
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }

    pub fn timestamp_to_token(&self, seconds: f64) -> Result<u32, VocabError> {
        self.specials.timestamp_to_token(seconds)
    }

    pub fn token_to_timestamp(&self, id: u32) -> Result<f64, VocabError> {
        self.specials.token_to_timestamp(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vocabulary {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.push(b"ab".to_vec());
        Vocabulary::from_tokens(tokens).unwrap()
    }

    #[test]
    fn empty_round_trip() {
        let v = Vocabulary::byte_level();
        assert!(v.encode("").is_empty());
        assert_eq!(v.decode(&[], false).unwrap(), "");
    }

    #[test]
    fn single_merge_toy() {
        let v = toy();
        let ab = v.id_of(b"ab").unwrap();
        assert_eq!(ab, 256);
        assert_eq!(v.encode("abab"), vec![ab, ab]);
        assert_eq!(v.encode("aab"), vec![b'a' as u32, ab]);
        assert_eq!(v.decode(&v.encode("abc"), false).unwrap(), "abc");
    }

    #[test]
    fn lowest_rank_merges_first() {
        // "bc" outranks "ab", so "abc" -> a + bc, not ab + c.
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.push(b"bc".to_vec());
        tokens.push(b"ab".to_vec());
        let v = Vocabulary::from_tokens(tokens).unwrap();
        assert_eq!(v.encode("abc"), vec![b'a' as u32, 256]);
    }

    #[test]
    fn multibyte_round_trip() {
        let v = toy();
        let s = "Héllo, wörld! 你好";
        assert_eq!(v.decode(&v.encode(s), false).unwrap(), s);
    }

    #[test]
    fn specials_render_or_skip() {
        let v = Vocabulary::byte_level();
        let sp = v.specials().clone();
        assert_eq!(v.decode(&[sp.sot, sp.transcribe], true).unwrap(), "");
        assert_eq!(
            v.decode(&[sp.sot, b'h' as u32, sp.eot], false).unwrap(),
            "<|startoftranscript|>h<|endoftranscript|>"
        );
        assert!(matches!(
            v.decode(&[sp.end_id()], false),
            Err(VocabError::UnknownId(_))
        ));
    }

    #[test]
    fn partial_utf8_is_replaced() {
        let v = Vocabulary::byte_level();
        let ids: Vec<u32> = "é".bytes().take(1).map(u32::from).collect();
        assert_eq!(v.decode(&ids, false).unwrap(), "\u{FFFD}");
    }

    #[test]
    fn rejects_orphan_merge() {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.push(b"abc".to_vec());
        assert!(Vocabulary::from_tokens(tokens).is_err());
        assert!(Vocabulary::from_tokens(vec![vec![0]; 10]).is_err());
    }

    #[test]
    fn rank_file_round_trip() {
        let v = toy();
        let parsed = Vocabulary::parse_ranks(&v.ranks_text()).unwrap();
        assert_eq!(parsed.len(), 257);
        assert_eq!(parsed[256], b"ab");
        assert!(Vocabulary::parse_ranks("YQ== 1\n").is_err());
        assert!(Vocabulary::parse_ranks("!!! 0\n").is_err());
    }

    #[test]
    fn ids_are_dense_and_disjoint() {
        let v = toy();
        assert_eq!(v.len(), 257 + SpecialTokens::count());
        assert_eq!(v.specials().first_id() as usize, v.n_regular());
        for id in 0..v.len() as u32 {
            let regular = v.token_bytes(id).is_some();
            assert_ne!(regular, v.specials().is_special(id));
        }
    }
}
