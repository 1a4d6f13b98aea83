use unicode_general_category::{get_general_category, GeneralCategory as Gc};
use unicode_normalization::UnicodeNormalization;

use super::numbers::number_rewrite;
use super::rules::{RuleTable, FILLERS};
use super::{is_msp, remove_bracketed, squeeze};

const KEPT_SYMBOLS: [char; 6] = ['.', '%', '$', '¢', '€', '£'];
const CURRENCY: [char; 4] = ['$', '¢', '€', '£'];

/// English normalisation with explicit rule tables.
pub fn normalize_english_with(text: &str, rules: &RuleTable) -> String {
    let s = canonical(text);
    let s = remove_bracketed(&s);
    let s = remove_fillers(&s);
    let s = join_apostrophes(&s);
    let s = expand_contractions(&s, rules);
    let s = drop_digit_commas(&s);
    let s = replace_periods(&s);
    let s = remove_symbols(&s);
    // Deleting apostrophes and punctuation can expose new filler words.
    let s = remove_fillers(&s);
    let s = remove_stray_symbols(&s);
    let s = number_rewrite(&s);
    let s = map_words(&s, |w| rules.american_spelling(w).map(str::to_string));
    let s = remove_stray_symbols(&s);
    let s: String = squeeze(&s).nfc().collect();
    s.to_lowercase()
}

/// Letters and numbers by general category. Marks and underscore become
/// spaces later, so they must already separate words here.
fn is_word(c: char) -> bool {
    matches!(
        get_general_category(c),
        Gc::UppercaseLetter
            | Gc::LowercaseLetter
            | Gc::TitlecaseLetter
            | Gc::ModifierLetter
            | Gc::OtherLetter
            | Gc::DecimalNumber
            | Gc::LetterNumber
            | Gc::OtherNumber
    )
}

/// Lowercases, folds quote variants to `'` and strips diacritics so that
/// every word-level rule sees canonical letters.
fn canonical(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    // Folding after decomposition also catches quotes produced by it.
    for c in lower.nfkd() {
        if get_general_category(c) == Gc::NonspacingMark {
            continue;
        }
        match c {
            '\u{2019}' | '\u{2018}' | '\u{02BC}' => out.push('\''),
            c => match letter_fold(c) {
                Some(r) => out.push_str(r),
                None => out.push(c),
            },
        }
    }
    out.to_lowercase()
}

/// Letters that carry a diacritic without decomposing.
fn letter_fold(c: char) -> Option<&'static str> {
    Some(match c {
        'œ' | 'Œ' => "oe",
        'æ' | 'Æ' => "ae",
        'ø' | 'Ø' => "o",
        'ß' | 'ẞ' => "ss",
        'đ' | 'Đ' | 'ð' | 'Ð' => "d",
        'þ' | 'Þ' => "th",
        'ł' | 'Ł' => "l",
        _ => return None,
    })
}

/// Rewrites each maximal run of word characters through `f`.
fn map_words(s: &str, f: impl Fn(&str) -> Option<String>) -> String {
    map_runs(s, is_word, f)
}

fn map_runs(s: &str, member: impl Fn(char) -> bool, f: impl Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(s.len());
    let mut start: Option<usize> = None;
    let flush = |out: &mut String, run: &str| match f(run) {
        Some(r) => out.push_str(&r),
        None => out.push_str(run),
    };
    for (i, c) in s.char_indices() {
        if member(c) {
            start.get_or_insert(i);
        } else {
            if let Some(st) = start.take() {
                flush(&mut out, &s[st..i]);
            }
            out.push(c);
        }
    }
    if let Some(st) = start {
        flush(&mut out, &s[st..]);
    }
    out
}

fn remove_fillers(s: &str) -> String {
    map_words(s, |w| FILLERS.contains(&w).then(String::new))
}

fn join_apostrophes(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '\'' {
            while out.ends_with(char::is_whitespace) {
                out.pop();
            }
        }
        out.push(c);
    }
    out
}

fn expand_contractions(s: &str, rules: &RuleTable) -> String {
    map_runs(
        s,
        |c| is_word(c) || c == '\'',
        |w| {
            rules.expand_contraction(w).or_else(|| {
                // Stray apostrophes are deleted later; match the bare word now.
                let bare = w.replace('\'', "");
                (bare != w).then(|| rules.expand_contraction(&bare)).flatten()
            })
        },
    )
}

fn drop_digit_commas(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    for (i, &c) in chars.iter().enumerate() {
        let between_digits = c == ','
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(char::is_ascii_digit);
        if !between_digits {
            out.push(c);
        }
    }
    out
}

/// A period survives only in front of a digit.
fn replace_periods(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    chars
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if c == '.' && !chars.get(i + 1).is_some_and(char::is_ascii_digit) {
                ' '
            } else {
                c
            }
        })
        .collect()
}

fn remove_symbols(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '\'' {
            continue;
        }
        if KEPT_SYMBOLS.contains(&c) || !is_msp(c) {
            out.push(c);
        } else {
            out.push(' ');
        }
    }
    out
}

/// Drops `.` and currency signs not followed by a digit and `%` not preceded
/// by one.
fn remove_stray_symbols(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let digit_at = |i: Option<usize>| i.and_then(|i| chars.get(i)).is_some_and(char::is_ascii_digit);
    chars
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let stray = if c == '.' || CURRENCY.contains(&c) {
                !digit_at(Some(i + 1))
            } else if c == '%' {
                !digit_at(i.checked_sub(1))
            } else {
                false
            };
            if stray {
                ' '
            } else {
                c
            }
        })
        .collect()
}
