use std::collections::HashMap;
use std::fmt::Write as _;

use super::VocabError;

/// Supported language codes in canonical token order.
pub const LANGUAGES: [&str; 99] = [
    "en", "zh", "de", "es", "ru", "ko", "fr", "ja", "pt", "tr", "pl", "ca", "nl", "ar", "sv", "it",
    "id", "hi", "fi", "vi", "he", "uk", "el", "ms", "cs", "ro", "da", "hu", "ta", "no", "th", "ur",
    "hr", "bg", "lt", "la", "mi", "ml", "cy", "sk", "te", "fa", "lv", "bn", "sr", "az", "sl", "kn",
    "et", "mk", "br", "eu", "is", "hy", "ne", "mn", "bs", "kk", "sq", "sw", "gl", "mr", "pa", "si",
    "km", "sn", "yo", "so", "af", "oc", "ka", "be", "tg", "sd", "gu", "am", "yi", "lo", "uz", "fo",
    "ht", "ps", "tk", "nn", "mt", "sa", "lb", "my", "bo", "tl", "mg", "as", "tt", "haw", "ln", "ha",
    "ba", "jw", "su",
];

/// Number of timestamp tokens: 0.00 s to 30.00 s in 20 ms steps.
pub const N_TIMESTAMPS: usize = 1501;
/// Seconds per timestamp step.
pub const TIMESTAMP_STEP: f64 = 0.02;
const STEPS_PER_SECOND: f64 = 50.0;

/// Ids of the multitask control tokens.
///
/// Layout after the regular tokens: end-of-transcript, start-of-transcript,
/// 99 languages, translate, transcribe, previous-text marker, no-speech,
/// no-timestamps, then the 1501 timestamps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokens {
    pub eot: u32,
    pub sot: u32,
    pub language_base: u32,
    pub translate: u32,
    pub transcribe: u32,
    pub prev: u32,
    pub no_speech: u32,
    pub no_timestamps: u32,
    pub timestamp_base: u32,
}

pub fn language_index(code: &str) -> Option<usize> {
    LANGUAGES.iter().position(|&l| l == code)
}

fn timestamp_name(index: usize) -> String {
    let mut s = String::new();
    let _ = write!(s, "<|{:.2}|>", index as f64 / STEPS_PER_SECOND);
    s
}

impl SpecialTokens {
    /// Standard layout starting right after `n_regular` ordinary tokens.
    pub fn standard(n_regular: u32) -> Self {
        let eot = n_regular;
        let sot = eot + 1;
        let language_base = sot + 1;
        let translate = language_base + LANGUAGES.len() as u32;
        Self {
            eot,
            sot,
            language_base,
            translate,
            transcribe: translate + 1,
            prev: translate + 2,
            no_speech: translate + 3,
            no_timestamps: translate + 4,
            timestamp_base: translate + 5,
        }
    }

    pub fn first_id(&self) -> u32 {
        self.eot
    }

    /// One past the last special id.
    pub fn end_id(&self) -> u32 {
        self.timestamp_base + N_TIMESTAMPS as u32
    }

    pub fn count() -> usize {
        7 + LANGUAGES.len() + N_TIMESTAMPS
    }

    pub fn language(&self, code: &str) -> Option<u32> {
        language_index(code).map(|i| self.language_base + i as u32)
    }

    pub fn is_language(&self, id: u32) -> bool {
        (self.language_base..self.language_base + LANGUAGES.len() as u32).contains(&id)
    }

    pub fn language_code(&self, id: u32) -> Option<&'static str> {
        self.is_language(id)
            .then(|| LANGUAGES[(id - self.language_base) as usize])
    }

    pub fn is_timestamp(&self, id: u32) -> bool {
        id >= self.timestamp_base && id < self.end_id()
    }

    pub fn is_special(&self, id: u32) -> bool {
        id >= self.first_id() && id < self.end_id()
    }

    /// Control tokens that may never appear in decoded content.
    pub fn is_control(&self, id: u32) -> bool {
        self.is_special(id) && id != self.eot && !self.is_timestamp(id)
    }

    pub fn timestamp_to_token(&self, seconds: f64) -> Result<u32, VocabError> {
        if !(0.0..=30.0).contains(&seconds) {
            return Err(VocabError::TimestampRange(seconds));
        }
        Ok(self.timestamp_base + (seconds * STEPS_PER_SECOND).round() as u32)
    }

    pub fn token_to_timestamp(&self, id: u32) -> Result<f64, VocabError> {
        if !self.is_timestamp(id) {
            return Err(VocabError::NotATimestamp(id));
        }
        Ok((id - self.timestamp_base) as f64 / STEPS_PER_SECOND)
    }

    /// Timestamp block index (units of 20 ms) of a timestamp token.
    pub fn timestamp_index(&self, id: u32) -> Option<u32> {
        self.is_timestamp(id).then(|| id - self.timestamp_base)
    }

    pub fn name(&self, id: u32) -> Option<String> {
        if !self.is_special(id) {
            return None;
        }
        let name = if id == self.eot {
            "<|endoftranscript|>".to_string()
        } else if id == self.sot {
            "<|startoftranscript|>".to_string()
        } else if let Some(code) = self.language_code(id) {
            format!("<|{code}|>")
        } else if id == self.translate {
            "<|translate|>".to_string()
        } else if id == self.transcribe {
            "<|transcribe|>".to_string()
        } else if id == self.prev {
            "<|startofprev|>".to_string()
        } else if id == self.no_speech {
            "<|nospeech|>".to_string()
        } else if id == self.no_timestamps {
            "<|notimestamps|>".to_string()
        } else {
            timestamp_name((id - self.timestamp_base) as usize)
        };
        Some(name)
    }

    /// Manifest text: one `name<TAB>id` line per special token.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for id in self.first_id()..self.end_id() {
            let _ = writeln!(out, "{}\t{}", self.name(id).unwrap(), id);
        }
        out
    }

    /// Parses a manifest and checks it describes the standard block layout
    /// starting at `n_regular`.
    pub fn from_manifest(text: &str, n_regular: u32) -> Result<Self, VocabError> {
        let mut by_name = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, id) = line.split_once('\t').ok_or_else(|| {
                VocabError::Manifest(format!("line {}: expected name<TAB>id", lineno + 1))
            })?;
            let id: u32 = id.trim().parse().map_err(|_| {
                VocabError::Manifest(format!("line {}: bad id {id:?}", lineno + 1))
            })?;
            if by_name.insert(name.to_string(), id).is_some() {
                return Err(VocabError::Manifest(format!("duplicate special {name}")));
            }
        }
        let get = |name: &str| {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| VocabError::Manifest(format!("missing special {name}")))
        };
        let layout = Self {
            eot: get("<|endoftranscript|>")?,
            sot: get("<|startoftranscript|>")?,
            language_base: get("<|en|>")?,
            translate: get("<|translate|>")?,
            transcribe: get("<|transcribe|>")?,
            prev: get("<|startofprev|>")?,
            no_speech: get("<|nospeech|>")?,
            no_timestamps: get("<|notimestamps|>")?,
            timestamp_base: get("<|0.00|>")?,
        };
        if by_name.len() != Self::count() {
            return Err(VocabError::Manifest(format!(
                "expected {} specials, found {}",
                Self::count(),
                by_name.len()
            )));
        }
        if layout != Self::standard(n_regular) {
            return Err(VocabError::Manifest(
                "special tokens do not follow the standard contiguous layout".into(),
            ));
        }
        for (name, &id) in &by_name {
            if layout.name(id).as_deref() != Some(name.as_str()) {
                return Err(VocabError::Manifest(format!("{name} has unexpected id {id}")));
            }
        }
        Ok(layout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let s = SpecialTokens::standard(256);
        assert_eq!(s.eot, 256);
        assert_eq!(s.sot, 257);
        assert_eq!(s.language("en"), Some(258));
        assert_eq!(s.language("su"), Some(258 + 98));
        assert_eq!(s.translate, 258 + 99);
        assert_eq!(s.timestamp_base + 1500, s.end_id() - 1);
        assert_eq!((s.end_id() - s.first_id()) as usize, SpecialTokens::count());
        assert_eq!(SpecialTokens::count(), 1607);
    }

    #[test]
    fn language_codes_unique() {
        let mut v = LANGUAGES.to_vec();
        v.sort();
        v.dedup();
        assert_eq!(v.len(), 99);
    }

    #[test]
    fn timestamp_examples() {
        let s = SpecialTokens::standard(256);
        let b = s.timestamp_base;
        assert_eq!(s.timestamp_to_token(0.0).unwrap(), b);
        assert_eq!(s.timestamp_to_token(1.0).unwrap(), b + 50);
        assert_eq!(s.timestamp_to_token(30.0).unwrap(), b + 1500);
        assert_eq!(s.token_to_timestamp(b + 50).unwrap(), 1.0);
        assert_eq!(s.token_to_timestamp(b + 1500).unwrap(), 30.0);
        assert!(matches!(s.token_to_timestamp(b - 1), Err(VocabError::NotATimestamp(_))));
        assert!(s.timestamp_to_token(30.01).is_err());
        assert!(s.timestamp_to_token(-0.01).is_err());
        assert_eq!(s.name(b + 50).unwrap(), "<|1.00|>");
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let s = SpecialTokens::standard(300);
        let text = s.to_manifest();
        assert_eq!(SpecialTokens::from_manifest(&text, 300).unwrap(), s);
        assert!(SpecialTokens::from_manifest(&text, 301).is_err());
        let missing: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(SpecialTokens::from_manifest(&missing, 300).is_err());
        let swapped = text
            .replace("<|transcribe|>\t", "<|tmp|>\t")
            .replace("<|translate|>\t", "<|transcribe|>\t")
            .replace("<|tmp|>\t", "<|translate|>\t");
        assert!(SpecialTokens::from_manifest(&swapped, 300).is_err());
    }
}
