//! Text standardisation applied to references and hypotheses before WER.

mod english;
mod numbers;
mod rules;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory as Gc};
use unicode_normalization::UnicodeNormalization;

pub use english::normalize_english_with;
pub use numbers::number_rewrite;
pub use rules::{RuleError, RuleTable, FILLERS};

/// Languages scored per character: every letter is separated by a space.
pub const LETTER_SPACED: [&str; 5] = ["zh", "ja", "th", "lo", "my"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    English,
    Basic,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizerConfig {
    pub mode: Mode,
    /// Only consulted in basic mode.
    pub language: Option<String>,
}

impl NormalizerConfig {
    pub fn english() -> Self {
        Self::default()
    }

    pub fn basic(language: Option<&str>) -> Self {
        Self {
            mode: Mode::Basic,
            language: language.map(str::to_string),
        }
    }

    /// English for `en` (or no language), basic otherwise.
    pub fn for_language(language: Option<&str>) -> Self {
        match language {
            None | Some("en") => Self::english(),
            Some(l) => Self::basic(Some(l)),
        }
    }
}

/// A configured normaliser that owns its rule tables.
#[derive(Debug, Clone)]
pub struct Normalizer {
    config: NormalizerConfig,
    rules: RuleTable,
}

impl Normalizer {
    pub fn new(config: NormalizerConfig) -> Self {
        Self::with_rules(config, RuleTable::default())
    }

    pub fn with_rules(config: NormalizerConfig, rules: RuleTable) -> Self {
        Self { config, rules }
    }

    pub fn config(&self) -> &NormalizerConfig {
        &self.config
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    pub fn normalize(&self, text: &str) -> String {
        match self.config.mode {
            Mode::English => normalize_english_with(text, &self.rules),
            Mode::Basic => normalize_basic(text, self.config.language.as_deref()),
        }
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::new(NormalizerConfig::english())
    }
}

/// English normalisation with the built-in rule tables.
pub fn normalize_english(text: &str) -> String {
    normalize_english_with(text, RuleTable::builtin())
}

/// Language-agnostic normalisation; letters are space separated for the
/// languages in [`LETTER_SPACED`].
pub fn normalize_basic(text: &str, language: Option<&str>) -> String {
    let s = remove_bracketed(&text.to_lowercase());
    let s: String = s.nfkc().collect();
    let s = symbols_to_space(&s);
    let s: String = s.to_lowercase().nfkc().collect();
    let s = symbols_to_space(&s);
    let spaced = language.is_some_and(|l| LETTER_SPACED.contains(&l));
    if spaced {
        let mut out = String::with_capacity(s.len() * 2);
        for c in s.chars().filter(|c| !c.is_whitespace()) {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push(c);
        }
        out
    } else {
        squeeze(&s)
    }
}

/// True when `text` has the shape English normalisation produces: single
/// spaces, and no marks, symbols or punctuation except `.`, `%` and currency
/// signs attached to digits.
pub fn is_canonical_english(text: &str) -> bool {
    if text != squeeze(text) {
        return false;
    }
    let chars: Vec<char> = text.chars().collect();
    let digit = |i: Option<usize>| i.and_then(|i| chars.get(i)).is_some_and(char::is_ascii_digit);
    chars.iter().enumerate().all(|(i, &c)| match c {
        '.' | '$' | '¢' | '€' | '£' => digit(Some(i + 1)),
        '%' => digit(i.checked_sub(1)),
        c => !is_msp(c),
    })
}

pub(crate) fn is_msp(c: char) -> bool {
    matches!(
        get_general_category(c),
        Gc::NonspacingMark
            | Gc::SpacingMark
            | Gc::EnclosingMark
            | Gc::MathSymbol
            | Gc::CurrencySymbol
            | Gc::ModifierSymbol
            | Gc::OtherSymbol
            | Gc::ConnectorPunctuation
            | Gc::DashPunctuation
            | Gc::OpenPunctuation
            | Gc::ClosePunctuation
            | Gc::InitialPunctuation
            | Gc::FinalPunctuation
            | Gc::OtherPunctuation
    )
}

fn symbols_to_space(s: &str) -> String {
    s.chars().map(|c| if is_msp(c) { ' ' } else { c }).collect()
}

/// Collapses whitespace runs to one space and trims the ends.
pub(crate) fn squeeze(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes `[...]` and `(...)` phrases, innermost first, until none remain.
/// Each removed phrase leaves a space so that neighbours do not fuse.
pub(crate) fn remove_bracketed(s: &str) -> String {
    let mut cur = s.to_string();
    loop {
        let next = remove_innermost(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

fn remove_innermost(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut open: Option<(char, usize)> = None; // opener and its position in `out`
    for c in s.chars() {
        match c {
            '[' | '(' => {
                open = Some((c, out.len()));
                out.push(c);
            }
            ']' | ')' => match open {
                Some((o, at)) if (o == '[') == (c == ']') => {
                    out.truncate(at);
                    out.push(' ');
                    open = None;
                }
                _ => {
                    out.push(c);
                    open = None;
                }
            },
            _ => out.push(c),
        }
    }
    out
}
