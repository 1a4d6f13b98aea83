//! Spoken numbers, currency amounts and percentages to digit form.
//!
//! Works on whitespace-separated lowercase tokens. A span is rewritten only
//! when it parses completely; anything else is left as it was.

/// Exact decimal: `mant / 10^scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Num {
    mant: u128,
    scale: u32,
}

impl Num {
    fn int(v: u128) -> Self {
        Self { mant: v, scale: 0 }
    }

    fn is_int(self) -> bool {
        self.scale == 0
    }

    fn int_part(self) -> u128 {
        self.mant / 10u128.pow(self.scale)
    }

    fn mul_pow10(self, k: u32) -> Option<Self> {
        if self.scale >= k {
            Some(Self {
                mant: self.mant,
                scale: self.scale - k,
            })
        } else {
            let m = self.mant.checked_mul(10u128.checked_pow(k - self.scale)?)?;
            Some(Self::int(m))
        }
    }

    fn add(self, o: Self) -> Option<Self> {
        let scale = self.scale.max(o.scale);
        let a = self.mant.checked_mul(10u128.checked_pow(scale - self.scale)?)?;
        let b = o.mant.checked_mul(10u128.checked_pow(scale - o.scale)?)?;
        Some(Self {
            mant: a.checked_add(b)?,
            scale,
        })
    }

    fn render(self) -> String {
        let digits = self.mant.to_string();
        if self.scale == 0 {
            return digits;
        }
        let s = self.scale as usize;
        let padded = format!("{digits:0>width$}", width = s + 1);
        let (i, f) = padded.split_at(padded.len() - s);
        format!("{i}.{f}")
    }

    /// Plain decimal literal: digits with an optional fractional part.
    fn parse(tok: &str) -> Option<Self> {
        let (i, f) = match tok.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (tok, None),
        };
        let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(i) || f.is_some_and(|f| !all_digits(f)) {
            return None;
        }
        let f = f.unwrap_or("");
        let mant: u128 = format!("{i}{f}").parse().ok()?;
        Some(Self {
            mant,
            scale: f.len() as u32,
        })
    }
}

const ONES: [&str; 10] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];
const ORD_ONES: [&str; 10] = [
    "zeroth", "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
];
const TEENS: [&str; 10] = [
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
    "eighteen", "nineteen",
];
const ORD_TEENS: [&str; 10] = [
    "tenth", "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth", "sixteenth",
    "seventeenth", "eighteenth", "nineteenth",
];
const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const ORD_TENS: [&str; 8] = [
    "twentieth", "thirtieth", "fortieth", "fiftieth", "sixtieth", "seventieth", "eightieth",
    "ninetieth",
];
/// (word, ordinal form, power of ten)
const MAGNITUDES: [(&str, &str, u32); 4] = [
    ("thousand", "thousandth", 3),
    ("million", "millionth", 6),
    ("billion", "billionth", 9),
    ("trillion", "trillionth", 12),
];

fn index_of(table: &[&str], w: &str) -> Option<u128> {
    table.iter().position(|t| *t == w).map(|i| i as u128)
}

fn magnitude(w: &str) -> Option<(u32, bool)> {
    MAGNITUDES.iter().find_map(|&(c, o, k)| {
        if w == c {
            Some((k, false))
        } else if w == o {
            Some((k, true))
        } else {
            None
        }
    })
}

fn is_scale_word(w: &str) -> bool {
    w == "hundred" || w == "hundredth" || magnitude(w).is_some()
}

#[derive(Debug, Clone, Copy)]
struct Span {
    value: Num,
    end: usize,
    ordinal: bool,
    /// Only a single literal token was read; no arithmetic happened.
    bare_literal: bool,
}

struct Parser<'a> {
    toks: &'a [&'a str],
    /// When false, ordinal words read as non-number tokens.
    ordinals: bool,
}

fn is_ordinal_word(w: &str) -> bool {
    ORD_ONES.contains(&w)
        || ORD_TEENS.contains(&w)
        || ORD_TENS.contains(&w)
        || w == "hundredth"
        || magnitude(w).is_some_and(|(_, o)| o)
}

impl<'a> Parser<'a> {
    fn at(&self, i: usize) -> Option<&'a str> {
        let w = self.toks.get(i).copied()?;
        Some(if !self.ordinals && is_ordinal_word(w) { "" } else { w })
    }

    /// 0..=99 from words: returns (value, end, ordinal).
    fn small(&self, i: usize) -> Option<(u128, usize, bool)> {
        let w = self.at(i)?;
        if let Some(v) = index_of(&ONES, w) {
            return Some((v, i + 1, false));
        }
        if let Some(v) = index_of(&ORD_ONES[1..], w) {
            return Some((v + 1, i + 1, true));
        }
        if let Some(v) = index_of(&TEENS, w) {
            return Some((v + 10, i + 1, false));
        }
        if let Some(v) = index_of(&ORD_TEENS, w) {
            return Some((v + 10, i + 1, true));
        }
        if let Some(v) = index_of(&ORD_TENS, w) {
            return Some((v * 10 + 20, i + 1, true));
        }
        let tens = index_of(&TENS, w)? * 10 + 20;
        let next = self.at(i + 1).unwrap_or("");
        match (index_of(&ONES[1..], next), index_of(&ORD_ONES[1..], next)) {
            (Some(o), _) => Some((tens + o + 1, i + 2, false)),
            (_, Some(o)) => Some((tens + o + 1, i + 2, true)),
            _ => Some((tens, i + 1, false)),
        }
    }

    /// Value below ten thousand, words only: `small [hundred [and small]]`.
    fn group(&self, i: usize) -> Option<(u128, usize, bool)> {
        let (v, j, ord) = self.small(i)?;
        if ord || v == 0 {
            return Some((v, j, ord));
        }
        self.hundreds(v, j)
    }

    fn hundreds(&self, v: u128, j: usize) -> Option<(u128, usize, bool)> {
        match self.at(j) {
            Some("hundredth") => Some((v * 100, j + 1, true)),
            Some("hundred") => {
                let v = v * 100;
                let k = if self.at(j + 1) == Some("and") { j + 2 } else { j + 1 };
                match self.small(k) {
                    Some((r, end, ord)) if r > 0 => Some((v + r, end, ord)),
                    _ => Some((v, j + 1, false)),
                }
            }
            _ => Some((v, j, false)),
        }
    }

    /// Decimal digits spoken one word at a time after "point".
    fn point_digits(&self, j: usize) -> Option<(Num, usize)> {
        if self.at(j) != Some("point") {
            return None;
        }
        let mut k = j + 1;
        let mut frac = String::new();
        while let Some(d) = self.at(k).and_then(|w| index_of(&ONES, w)) {
            frac.push(char::from(b'0' + d as u8));
            k += 1;
        }
        if frac.is_empty() {
            return None;
        }
        Some((Num::parse(&format!("0.{frac}"))?, k))
    }

    /// A full number starting at `i`. `literal` overrides the token at `i`
    /// (used when a currency sign was stripped from it).
    fn number(&self, i: usize, literal: Option<Num>) -> Option<Span> {
        let lit = literal.or_else(|| self.at(i).and_then(Num::parse));
        let (mut cur, mut j, mut ord) = match lit {
            Some(n) => {
                let mergeable = n.mant > 0 && n.int_part() < 1000;
                let next = self.at(i + 1).unwrap_or("");
                if !mergeable || !is_scale_word(next) {
                    return Some(Span {
                        value: n,
                        end: i + 1,
                        ordinal: false,
                        bare_literal: true,
                    });
                }
                if next.starts_with("hundred") {
                    if !n.is_int() || n.mant >= 100 {
                        return Some(Span {
                            value: n,
                            end: i + 1,
                            ordinal: false,
                            bare_literal: true,
                        });
                    }
                    let (v, j, ord) = self.hundreds(n.mant, i + 1)?;
                    (Num::int(v), j, ord)
                } else {
                    (n, i + 1, false)
                }
            }
            None => {
                let (v, j, ord) = self.group(i)?;
                (Num::int(v), j, ord)
            }
        };

        let mut total = Num::int(0);
        let mut prev_mag = u32::MAX;
        let mut decimal = !cur.is_int();
        loop {
            if ord {
                break;
            }
            if cur.mant == 0 && cur.is_int() {
                break;
            }
            if let Some((k, mag_ord)) = self.at(j).and_then(magnitude) {
                if k < prev_mag {
                    total = total.add(cur.mul_pow10(k)?)?;
                    cur = Num::int(0);
                    prev_mag = k;
                    j += 1;
                    if mag_ord {
                        ord = true;
                        break;
                    }
                    if decimal {
                        break;
                    }
                    let k2 = if self.at(j) == Some("and") { j + 1 } else { j };
                    match self.group(k2) {
                        Some((v, end, o)) if v > 0 => {
                            cur = Num::int(v);
                            j = end;
                            ord = o;
                            continue;
                        }
                        _ => break,
                    }
                }
                break;
            }
            if !decimal && prev_mag == u32::MAX {
                if let Some((frac, end)) = self.point_digits(j) {
                    cur = cur.add(frac)?;
                    j = end;
                    decimal = true;
                    continue;
                }
            }
            break;
        }
        Some(Span {
            value: total.add(cur)?,
            end: j,
            ordinal: ord,
            bare_literal: false,
        })
    }
}

fn ordinal_suffix(n: u128) -> &'static str {
    match (n % 100, n % 10) {
        (11..=13, _) => "th",
        (_, 1) => "st",
        (_, 2) => "nd",
        (_, 3) => "rd",
        _ => "th",
    }
}

fn currency_word(w: &str) -> Option<char> {
    Some(match w {
        "dollar" | "dollars" => '$',
        "pound" | "pounds" => '£',
        "euro" | "euros" => '€',
        "cent" | "cents" => '¢',
        _ => return None,
    })
}

fn is_minor_unit(w: &str, major: char) -> bool {
    matches!(w, "cent" | "cents") || (major == '£' && matches!(w, "penny" | "pence"))
}

/// Replacement text for the span starting at `i`, if one parses there.
fn rewrite_at(p: &Parser, i: usize) -> Option<(String, usize)> {
    // Spans that would end in an unusable ordinal are re-read without
    // ordinals so the ordinal word is left for its own span.
    let plain = Parser {
        toks: p.toks,
        ordinals: false,
    };
    let tok = p.at(i)?;
    let mut chars = tok.chars();
    let first = chars.next()?;
    if matches!(first, '$' | '¢' | '€' | '£') {
        let lit = Num::parse(chars.as_str())?;
        let mut span = p.number(i, Some(lit))?;
        if span.ordinal {
            span = plain.number(i, Some(lit))?;
        }
        if span.bare_literal {
            return None;
        }
        return Some((format!("{first}{}", span.value.render()), span.end));
    }

    let mut span = p.number(i, None)?;
    if span.ordinal && !span.value.is_int() {
        span = plain.number(i, None)?;
    }
    if span.end == i + 1 && tok == "second" {
        return None;
    }
    let text = if span.bare_literal {
        tok.to_string()
    } else {
        span.value.render()
    };
    if span.ordinal {
        if !span.value.is_int() {
            return None;
        }
        return Some((format!("{text}{}", ordinal_suffix(span.value.mant)), span.end));
    }

    let next = p.at(span.end).unwrap_or("");
    if next == "percent" {
        return Some((format!("{text}%"), span.end + 1));
    }
    if next == "per" && p.at(span.end + 1) == Some("cent") {
        return Some((format!("{text}%"), span.end + 2));
    }
    if let Some(sym) = currency_word(next) {
        // "<n> dollars and <m> cents"
        if sym != '¢' && span.value.is_int() && p.at(span.end + 1) == Some("and") {
            if let Some(c) = p.number(span.end + 2, None) {
                let unit = p.at(c.end).unwrap_or("");
                if !c.ordinal && c.value.is_int() && c.value.mant < 100 && is_minor_unit(unit, sym) {
                    if p.at(c.end + 1).is_some_and(is_scale_word) {
                        return (!span.bare_literal).then_some((text, span.end));
                    }
                    return Some((format!("{sym}{text}.{:02}", c.value.mant), c.end + 1));
                }
            }
        }
        // A scale word right after the unit would merge on a second pass.
        if p.at(span.end + 1).is_some_and(is_scale_word) {
            return (!span.bare_literal).then_some((text, span.end));
        }
        return Some((format!("{sym}{text}"), span.end + 1));
    }
    (!span.bare_literal).then_some((text, span.end))
}

/// Rewrites spelled-out numbers, ordinals, currency amounts and percentages
/// into digit form. Expects lowercase text.
pub fn number_rewrite(text: &str) -> String {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let p = Parser {
        toks: &toks,
        ordinals: true,
    };
    let mut out: Vec<String> = Vec::with_capacity(toks.len());
    let mut i = 0;
    while i < toks.len() {
        match rewrite_at(&p, i) {
            Some((s, end)) => {
                out.push(s);
                i = end;
            }
            None => {
                out.push(toks[i].to_string());
                i += 1;
            }
        }
    }
    out.join(" ")
}
