//! GPT-2 style pre-tokenisation.
//!
//! Equivalent to the pattern
//! `'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+`
//! written as a hand scanner because the lookahead is not expressible in
//! the `regex` crate.

use unicode_general_category::{get_general_category, GeneralCategory as Gc};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Letter,
    Number,
    Space,
    Other,
}

fn class(c: char) -> Class {
    if c.is_whitespace() {
        return Class::Space;
    }
    match get_general_category(c) {
        Gc::UppercaseLetter
        | Gc::LowercaseLetter
        | Gc::TitlecaseLetter
        | Gc::ModifierLetter
        | Gc::OtherLetter => Class::Letter,
        Gc::DecimalNumber | Gc::LetterNumber | Gc::OtherNumber => Class::Number,
        _ => Class::Other,
    }
}

const CONTRACTIONS: [&str; 7] = ["'s", "'t", "'re", "'ve", "'m", "'ll", "'d"];

/// Splits `text` into pieces; concatenating the pieces gives back `text`.
pub fn split(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        let rest = &text[byte_at(i)..];

        if let Some(c) = CONTRACTIONS.iter().find(|c| rest.starts_with(*c)) {
            i += c.chars().count();
            pieces.push(&text[byte_at(start)..byte_at(i)]);
            continue;
        }

        // ` ?` prefix followed by a run of one class.
        let mut j = i;
        if chars[j].1 == ' ' && j + 1 < chars.len() {
            j += 1;
        }
        let run_class = class(chars[j].1);
        if run_class != Class::Space && (j == i || chars[i].1 == ' ') {
            let mut k = j;
            let same = |c: char| match run_class {
                Class::Letter => class(c) == Class::Letter,
                Class::Number => class(c) == Class::Number,
                _ => class(c) == Class::Other,
            };
            while k < chars.len() && same(chars[k].1) {
                k += 1;
            }
            i = k;
            pieces.push(&text[byte_at(start)..byte_at(i)]);
            continue;
        }

        // Whitespace run; leave the last space for the next word when one follows.
        let mut k = i;
        while k < chars.len() && class(chars[k].1) == Class::Space {
            k += 1;
        }
        if k < chars.len() && k - i > 1 {
            k -= 1;
        }
        i = k;
        pieces.push(&text[byte_at(start)..byte_at(i)]);
    }
    pieces
}

#[cfg(test)]
mod tests {
    use super::split;

    #[test]
    fn gpt2_style_pieces() {
        assert_eq!(split("Hello world"), vec!["Hello", " world"]);
        assert_eq!(split("I'm here"), vec!["I", "'m", " here"]);
        assert_eq!(split("a  b"), vec!["a", " ", " b"]);
        assert_eq!(split("x 123!?"), vec!["x", " 123", "!?"]);
        assert_eq!(split("end  "), vec!["end", "  "]);
        assert_eq!(split("\nword"), vec!["\n", "word"]);
        assert_eq!(split("你好 世界"), vec!["你好", " 世界"]);
        assert!(split("").is_empty());
    }

    #[test]
    fn pieces_concatenate_back() {
        for s in ["  leading", "mixed 12ab,, ' 's", "tab\tsep  \n\n x", "é'llo"] {
            assert_eq!(split(s).concat(), s);
        }
    }
}
