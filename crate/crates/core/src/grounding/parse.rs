//! Extraction of a `(start, end)` timespan from free-form model responses.
//!
//! Recognised forms, case-insensitive, tried in this order (the leftmost
//! occurrence of the first form that matches wins):
//!
//! 1. `from X to Y seconds`
//! 2. `X - Y seconds`
//! 3. `X to Y`
//! 4. `start: X, end: Y`
//! 5. `X, Y`
//!
//! `X` and `Y` are unsigned decimals. A reversed pair is swapped and flagged.

use alloc::vec::Vec;

use super::{EvalError, TimeSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimespanForm {
    FromTo,
    Dash,
    To,
    StartEnd,
    Bare,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedSpan {
    pub span: TimeSpan,
    pub form: TimespanForm,
    pub swapped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token<'a> {
    Num(f64),
    Word(&'a str),
    Punct(char),
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().unwrap_or(' ');
        let starts_number = c.is_ascii_digit()
            || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        if starts_number {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if let Ok(v) = text[start..i].parse::<f64>() {
                out.push(Token::Num(v));
            }
        } else if c.is_alphabetic() {
            let start = i;
            while let Some(ch) = text[i..].chars().next().filter(|ch| ch.is_alphabetic()) {
                i += ch.len_utf8();
            }
            out.push(Token::Word(&text[start..i]));
        } else {
            if !c.is_whitespace() {
                let c = match c {
                    '\u{2010}'..='\u{2015}' | '\u{2212}' => '-',
                    other => other,
                };
                out.push(Token::Punct(c));
            }
            i += c.len_utf8();
        }
    }
    out
}

fn is_word(t: Option<&Token<'_>>, w: &str) -> bool {
    matches!(t, Some(Token::Word(x)) if x.eq_ignore_ascii_case(w))
}

fn is_unit(t: Option<&Token<'_>>) -> bool {
    ["s", "sec", "secs", "second", "seconds"]
        .iter()
        .any(|u| is_word(t, u))
}

fn is_punct(t: Option<&Token<'_>>, p: char) -> bool {
    matches!(t, Some(Token::Punct(x)) if *x == p)
}

fn num(t: Option<&Token<'_>>) -> Option<f64> {
    match t {
        Some(Token::Num(v)) => Some(*v),
        _ => None,
    }
}

fn match_at(toks: &[Token<'_>], i: usize, form: TimespanForm) -> Option<(f64, f64)> {
    let at = |k: usize| toks.get(i + k);
    match form {
        TimespanForm::FromTo => {
            if is_word(at(0), "from") && is_word(at(2), "to") && is_unit(at(4)) {
                return Some((num(at(1))?, num(at(3))?));
            }
            None
        }
        TimespanForm::Dash => {
            if is_punct(at(1), '-') && is_unit(at(3)) {
                return Some((num(at(0))?, num(at(2))?));
            }
            None
        }
        TimespanForm::To => {
            if is_word(at(1), "to") {
                return Some((num(at(0))?, num(at(2))?));
            }
            None
        }
        TimespanForm::StartEnd => {
            if !is_word(at(0), "start") {
                return None;
            }
            let mut k = 1;
            if is_punct(at(k), ':') {
                k += 1;
            }
            let x = num(at(k))?;
            k += 1;
            if is_unit(at(k)) {
                k += 1;
            }
            if is_punct(at(k), ',') {
                k += 1;
            }
            if !is_word(at(k), "end") {
                return None;
            }
            k += 1;
            if is_punct(at(k), ':') {
                k += 1;
            }
            Some((x, num(at(k))?))
        }
        TimespanForm::Bare => {
            if is_punct(at(1), ',') {
                return Some((num(at(0))?, num(at(2))?));
            }
            None
        }
    }
}

/// Parses the first recognised timespan in `text`.
pub fn parse_timespan(text: &str) -> Result<ParsedSpan, EvalError> {
    let toks = tokenize(text);
    let forms = [
        TimespanForm::FromTo,
        TimespanForm::Dash,
        TimespanForm::To,
        TimespanForm::StartEnd,
        TimespanForm::Bare,
    ];
    for form in forms {
        for i in 0..toks.len() {
            if let Some((x, y)) = match_at(&toks, i, form) {
                let swapped = x > y;
                let (a, b) = if swapped { (y, x) } else { (x, y) };
                let span = TimeSpan::new(a, b)?;
                return Ok(ParsedSpan {
                    span,
                    form,
                    swapped,
                });
            }
        }
    }
    Err(EvalError::NoTimespanFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> (f64, f64, TimespanForm, bool) {
        let p = parse_timespan(s).unwrap();
        (p.span.start(), p.span.end(), p.form, p.swapped)
    }

    #[test]
    fn each_form() {
        assert_eq!(parse("from 12.5 to 34.0 seconds"), (12.5, 34.0, TimespanForm::FromTo, false));
        assert_eq!(parse("The event happens 40.0 - 20.0 seconds."), (20.0, 40.0, TimespanForm::Dash, true));
        assert_eq!(parse("It is 3 to 7."), (3.0, 7.0, TimespanForm::To, false));
        assert_eq!(parse("start: 3, end: 3"), (3.0, 3.0, TimespanForm::StartEnd, false));
        assert_eq!(parse("1.5, 9"), (1.5, 9.0, TimespanForm::Bare, false));
    }

    #[test]
    fn case_and_unicode_dash() {
        assert_eq!(parse("FROM 1 TO 2 SECONDS").0, 1.0);
        assert_eq!(parse("1.0\u{2013}2.5 sec").1, 2.5);
    }

    #[test]
    fn specific_forms_win() {
        // A bare pair earlier in the text does not beat a from/to phrase.
        assert_eq!(parse("2, 3 people; from 10 to 20 seconds").0, 10.0);
    }

    #[test]
    fn rejects_text_without_spans() {
        for s in ["", "no timestamps", "at 5 seconds", "00:30", "- 4 seconds", "from ten to twenty"] {
            assert_eq!(parse_timespan(s), Err(EvalError::NoTimespanFound), "{s}");
        }
    }
}
