//! A small ECMA-262 regular expression subset: parser, string generator and
//! backtracking matcher.
//!
//! Supported: literals and escapes, character classes, `.`, `^`, `$`,
//! alternation, capturing, non-capturing and named groups, and greedy or
//! lazy quantifiers. Backreferences, lookaround, word boundaries and inline
//! flags are rejected as unsupported.

use crate::choice::{ChoiceError, ChoiceSequence};

/// Matcher step limit per call.
pub const STEP_BUDGET: usize = 1_000_000;

/// Extra repetitions drawn beyond the minimum for unbounded quantifiers.
const UNBOUNDED_EXTRA: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("unsupported pattern {pattern:?}: {reason}")]
    UnsupportedPattern { pattern: String, reason: String },
    #[error("invalid pattern {pattern:?} at offset {offset}: {reason}")]
    Syntax {
        pattern: String,
        offset: usize,
        reason: String,
    },
    #[error("pattern matching exceeded its step budget")]
    StepBudget,
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Empty,
    Literal(char),
    Class { ranges: Vec<(char, char)>, negated: bool },
    Any,
    Start,
    End,
    Concat(Vec<Ast>),
    Alt(Vec<Ast>),
    Group(Box<Ast>),
    Repeat { node: Box<Ast>, min: u32, max: Option<u32>, lazy: bool },
}

/// A parsed pattern.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    ast: Ast,
}

const DIGIT: &[(char, char)] = &[('0', '9')];
const WORD: &[(char, char)] = &[('0', '9'), ('A', 'Z'), ('_', '_'), ('a', 'z')];
const SPACE: &[(char, char)] = &[
    ('\t', '\r'),
    (' ', ' '),
    ('\u{a0}', '\u{a0}'),
    ('\u{2028}', '\u{2029}'),
    ('\u{feff}', '\u{feff}'),
];

struct Parser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn unsupported(&self, reason: &str) -> PatternError {
        PatternError::UnsupportedPattern {
            pattern: self.src.to_string(),
            reason: reason.to_string(),
        }
    }

    fn syntax(&self, reason: &str) -> PatternError {
        PatternError::Syntax {
            pattern: self.src.to_string(),
            offset: self.pos,
            reason: reason.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn alternation(&mut self) -> Result<Ast, PatternError> {
        let mut branches = vec![self.concat()?];
        while self.eat('|') {
            branches.push(self.concat()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap_or(Ast::Empty)
        } else {
            Ast::Alt(branches)
        })
    }

    fn concat(&mut self) -> Result<Ast, PatternError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            let atom = self.atom()?;
            let atom = self.quantified(atom)?;
            items.push(atom);
        }
        Ok(match items.len() {
            0 => Ast::Empty,
            1 => items.pop().unwrap_or(Ast::Empty),
            _ => Ast::Concat(items),
        })
    }

    fn quantified(&mut self, atom: Ast) -> Result<Ast, PatternError> {
        let (min, max) = match self.peek() {
            Some('*') => {
                self.pos += 1;
                (0, None)
            }
            Some('+') => {
                self.pos += 1;
                (1, None)
            }
            Some('?') => {
                self.pos += 1;
                (0, Some(1))
            }
            Some('{') => match self.braces() {
                Some((min, max, len)) => {
                    self.pos += len;
                    (min, max)
                }
                None => return Ok(atom),
            },
            _ => return Ok(atom),
        };
        if matches!(atom, Ast::Start | Ast::End) {
            return Err(self.syntax("nothing to repeat"));
        }
        if let Some(m) = max {
            if m < min {
                return Err(self.syntax("numbers out of order in quantifier"));
            }
        }
        let lazy = self.eat('?');
        if matches!(self.peek(), Some('*' | '+' | '?')) || (self.peek() == Some('{') && self.braces().is_some()) {
            return Err(self.syntax("nothing to repeat"));
        }
        Ok(Ast::Repeat {
            node: Box::new(atom),
            min,
            max,
            lazy,
        })
    }

    /// Parses `{n}`, `{n,}` or `{n,m}` at the cursor without consuming it.
    fn braces(&self) -> Option<(u32, Option<u32>, usize)> {
        let rest: String = self.chars[self.pos..].iter().collect();
        let end = rest.find('}')?;
        let body = &rest[1..end];
        let parse = |s: &str| -> Option<u32> {
            if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit()) {
                None
            } else {
                Some(s.parse::<u64>().ok()?.min(u32::MAX as u64) as u32)
            }
        };
        let (min, max) = match body.split_once(',') {
            None => {
                let n = parse(body)?;
                (n, Some(n))
            }
            Some((a, "")) => (parse(a)?, None),
            Some((a, b)) => (parse(a)?, Some(parse(b)?)),
        };
        Some((min, max, body.chars().count() + 2))
    }

    fn atom(&mut self) -> Result<Ast, PatternError> {
        let c = self.peek().ok_or_else(|| self.syntax("unexpected end"))?;
        self.pos += 1;
        match c {
            '^' => Ok(Ast::Start),
            '$' => Ok(Ast::End),
            '.' => Ok(Ast::Any),
            '(' => self.group(),
            '[' => self.class(),
            '\\' => self.escape(false).map(|e| match e {
                Escape::Char(c) => Ast::Literal(c),
                Escape::Set(ranges, negated) => Ast::Class { ranges, negated },
            }),
            '*' | '+' | '?' => Err(self.syntax("nothing to repeat")),
            '{' => {
                self.pos -= 1;
                if self.braces().is_some() {
                    return Err(self.syntax("nothing to repeat"));
                }
                self.pos += 1;
                Ok(Ast::Literal('{'))
            }
            other => Ok(Ast::Literal(other)),
        }
    }

    fn group(&mut self) -> Result<Ast, PatternError> {
        if self.eat('?') {
            match self.peek() {
                Some(':') => self.pos += 1,
                Some('=') | Some('!') => return Err(self.unsupported("lookahead")),
                Some('<') if matches!(self.chars.get(self.pos + 1), Some('=') | Some('!')) => {
                    return Err(self.unsupported("lookbehind"))
                }
                Some('<') | Some('P') => {
                    if self.peek() == Some('P') {
                        self.pos += 1;
                    }
                    if !self.eat('<') {
                        return Err(self.syntax("bad group name"));
                    }
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == '>' {
                            break;
                        }
                        if !(c.is_alphanumeric() || c == '_') {
                            return Err(self.syntax("bad group name"));
                        }
                    }
                }
                _ => return Err(self.unsupported("inline flags")),
            }
        }
        let inner = self.alternation()?;
        if !self.eat(')') {
            return Err(self.syntax("unterminated group"));
        }
        Ok(Ast::Group(Box::new(inner)))
    }

    fn escape(&mut self, in_class: bool) -> Result<Escape, PatternError> {
        let c = self.peek().ok_or_else(|| self.syntax("trailing backslash"))?;
        self.pos += 1;
        Ok(match c {
            'd' => Escape::Set(DIGIT.to_vec(), false),
            'D' => Escape::Set(DIGIT.to_vec(), true),
            'w' => Escape::Set(WORD.to_vec(), false),
            'W' => Escape::Set(WORD.to_vec(), true),
            's' => Escape::Set(SPACE.to_vec(), false),
            'S' => Escape::Set(SPACE.to_vec(), true),
            'n' => Escape::Char('\n'),
            't' => Escape::Char('\t'),
            'r' => Escape::Char('\r'),
            'f' => Escape::Char('\x0c'),
            'v' => Escape::Char('\x0b'),
            '0' => Escape::Char('\0'),
            'b' if in_class => Escape::Char('\x08'),
            'b' | 'B' => return Err(self.unsupported("word boundary")),
            '1'..='9' => return Err(self.unsupported("backreference")),
            'k' => return Err(self.unsupported("backreference")),
            'x' => Escape::Char(self.hex(2)?),
            'u' => {
                if self.eat('{') {
                    let start = self.pos;
                    while self.peek().is_some_and(|c| c != '}') {
                        self.pos += 1;
                    }
                    let digits: String = self.chars[start..self.pos].iter().collect();
                    self.pos += 1;
                    let v = u32::from_str_radix(&digits, 16).map_err(|_| self.syntax("bad unicode escape"))?;
                    Escape::Char(char::from_u32(v).ok_or_else(|| self.syntax("bad unicode escape"))?)
                } else {
                    Escape::Char(self.hex(4)?)
                }
            }
            'p' | 'P' => return Err(self.unsupported("unicode property")),
            'c' => {
                let l = self.peek().ok_or_else(|| self.syntax("bad control escape"))?;
                self.pos += 1;
                Escape::Char(char::from_u32(l as u32 % 32).unwrap_or('\0'))
            }
            other => Escape::Char(other),
        })
    }

    fn hex(&mut self, n: usize) -> Result<char, PatternError> {
        if self.pos + n > self.chars.len() {
            return Err(self.syntax("short hex escape"));
        }
        let digits: String = self.chars[self.pos..self.pos + n].iter().collect();
        let v = u32::from_str_radix(&digits, 16).map_err(|_| self.syntax("bad hex escape"))?;
        self.pos += n;
        char::from_u32(v).ok_or_else(|| self.syntax("bad code point"))
    }

    fn class(&mut self) -> Result<Ast, PatternError> {
        let negated = self.eat('^');
        let mut ranges: Vec<(char, char)> = Vec::new();
        let mut first = true;
        loop {
            let c = self.peek().ok_or_else(|| self.syntax("unterminated class"))?;
            if c == ']' {
                self.pos += 1;
                break;
            }
            let _ = first;
            first = false;
            let lo = self.class_atom()?;
            if self.peek() == Some('-') && self.chars.get(self.pos + 1).is_some_and(|&n| n != ']') {
                if let Escape::Char(lo_c) = lo {
                    self.pos += 1;
                    match self.class_atom()? {
                        Escape::Char(hi_c) => {
                            if hi_c < lo_c {
                                return Err(self.syntax("range out of order"));
                            }
                            ranges.push((lo_c, hi_c));
                        }
                        Escape::Set(set, neg) => {
                            ranges.push((lo_c, lo_c));
                            ranges.push(('-', '-'));
                            push_set(&mut ranges, &set, neg);
                        }
                    }
                    continue;
                }
            }
            match lo {
                Escape::Char(ch) => ranges.push((ch, ch)),
                Escape::Set(set, neg) => push_set(&mut ranges, &set, neg),
            }
        }
        Ok(Ast::Class {
            ranges: normalise_ranges(ranges),
            negated,
        })
    }

    fn class_atom(&mut self) -> Result<Escape, PatternError> {
        let c = self.peek().ok_or_else(|| self.syntax("unterminated class"))?;
        self.pos += 1;
        if c == '\\' {
            return self.escape(true);
        }
        Ok(Escape::Char(c))
    }
}

enum Escape {
    Char(char),
    Set(Vec<(char, char)>, bool),
}

fn push_set(out: &mut Vec<(char, char)>, set: &[(char, char)], negated: bool) {
    if negated {
        out.extend(complement(set));
    } else {
        out.extend_from_slice(set);
    }
}

fn normalise_ranges(mut r: Vec<(char, char)>) -> Vec<(char, char)> {
    r.sort();
    let mut out: Vec<(char, char)> = Vec::new();
    for (lo, hi) in r {
        if let Some(last) = out.last_mut() {
            if lo as u32 <= last.1 as u32 + 1 {
                if hi > last.1 {
                    last.1 = hi;
                }
                continue;
            }
        }
        out.push((lo, hi));
    }
    out
}

fn complement(set: &[(char, char)]) -> Vec<(char, char)> {
    let set = normalise_ranges(set.to_vec());
    let mut out = Vec::new();
    let mut next = 0u32;
    for (lo, hi) in set {
        if (lo as u32) > next {
            push_range(&mut out, next, lo as u32 - 1);
        }
        next = hi as u32 + 1;
    }
    if next <= char::MAX as u32 {
        push_range(&mut out, next, char::MAX as u32);
    }
    out
}

/// Pushes a code point range, skipping the surrogate block.
fn push_range(out: &mut Vec<(char, char)>, lo: u32, hi: u32) {
    let pieces = [(lo, hi.min(0xD7FF)), (lo.max(0xE000), hi)];
    for (a, b) in pieces {
        if a <= b {
            if let (Some(x), Some(y)) = (char::from_u32(a), char::from_u32(b)) {
                out.push((x, y));
            }
        }
    }
}

fn in_ranges(ranges: &[(char, char)], c: char) -> bool {
    ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi)
}

fn is_line_terminator(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\u{2028}' | '\u{2029}')
}

impl Pattern {
    pub fn parse(source: &str) -> Result<Pattern, PatternError> {
        let mut p = Parser {
            src: source,
            chars: source.chars().collect(),
            pos: 0,
        };
        let ast = p.alternation()?;
        if p.pos < p.chars.len() {
            return Err(p.syntax("unmatched `)`"));
        }
        Ok(Pattern {
            source: source.to_string(),
            ast,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Unanchored search, as JSON Schema `pattern` uses.
    pub fn is_match(&self, s: &str) -> Result<bool, PatternError> {
        let chars: Vec<char> = s.chars().collect();
        let mut m = Matcher { chars: &chars, steps: 0 };
        for start in 0..=chars.len() {
            if m.run(&self.ast, start, &mut |_, _| Ok(true))? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Generates a string the pattern matches (as a search), aiming for a
    /// length in `min_len..=max_len`. The caller is expected to check the
    /// result, since the length target is best-effort.
    pub fn generate(&self, seq: &mut ChoiceSequence, min_len: usize, max_len: usize) -> Result<String, PatternError> {
        let mut g = Generator {
            out: String::new(),
            len: 0,
            min_len,
            max_len,
        };
        let (anchored_start, anchored_end) = anchors(&self.ast);
        if !anchored_start && seq.draw_bool(0.2)? {
            g.filler(seq)?;
        }
        g.node(&self.ast, seq)?;
        if !anchored_end && (g.len < min_len || seq.draw_bool(0.2)?) {
            g.filler(seq)?;
        }
        Ok(g.out)
    }
}

/// Convenience: parse `pattern` and generate one matching string.
pub fn generate_from_pattern(pattern: &str, seq: &mut ChoiceSequence) -> Result<String, PatternError> {
    Pattern::parse(pattern)?.generate(seq, 0, usize::MAX)
}

/// Whether the pattern begins with `^` / ends with `$` on every branch.
fn anchors(ast: &Ast) -> (bool, bool) {
    match ast {
        Ast::Start => (true, false),
        Ast::End => (false, true),
        Ast::Concat(items) => {
            let s = items.first().is_some_and(|f| anchors(f).0);
            let e = items.last().is_some_and(|l| anchors(l).1);
            (s, e)
        }
        Ast::Group(inner) => anchors(inner),
        Ast::Alt(bs) => bs
            .iter()
            .map(anchors)
            .fold((true, true), |(a, b), (x, y)| (a && x, b && y)),
        _ => (false, false),
    }
}

struct Generator {
    out: String,
    len: usize,
    min_len: usize,
    max_len: usize,
}

/// Characters preferred when a class allows almost anything.
const PRINTABLE: (char, char) = (' ', '~');

impl Generator {
    fn push(&mut self, c: char) {
        self.out.push(c);
        self.len += 1;
    }

    fn filler(&mut self, seq: &mut ChoiceSequence) -> Result<(), PatternError> {
        while self.len < self.max_len && (self.len < self.min_len || seq.more(0.3)?) {
            let c = self.pick(&[('a', 'z'), ('0', '9'), PRINTABLE], seq)?;
            self.push(c);
        }
        Ok(())
    }

    fn pick(&mut self, ranges: &[(char, char)], seq: &mut ChoiceSequence) -> Result<char, PatternError> {
        if ranges.is_empty() {
            return Ok('a');
        }
        let i = seq.draw_index(ranges.len())?;
        let (lo, hi) = ranges[i];
        let span = hi as u32 - lo as u32;
        let off = seq.draw_integer(Some(0), Some(span as i128))? as u32;
        let c = lo as u32 + off;
        Ok(char::from_u32(c).unwrap_or(lo))
    }

    fn class_char(&mut self, ranges: &[(char, char)], negated: bool, seq: &mut ChoiceSequence) -> Result<char, PatternError> {
        if !negated {
            return self.pick(ranges, seq);
        }
        // Prefer printable ASCII outside the excluded set.
        let allowed = complement(ranges);
        let ascii: Vec<(char, char)> = allowed
            .iter()
            .filter_map(|&(lo, hi)| {
                let lo = lo.max(PRINTABLE.0);
                let hi = hi.min(PRINTABLE.1);
                (lo <= hi).then_some((lo, hi))
            })
            .collect();
        if !ascii.is_empty() && !seq.draw_bool(0.1)? {
            return self.pick(&ascii, seq);
        }
        self.pick(&allowed, seq)
    }

    fn node(&mut self, ast: &Ast, seq: &mut ChoiceSequence) -> Result<(), PatternError> {
        match ast {
            Ast::Empty | Ast::Start | Ast::End => Ok(()),
            Ast::Literal(c) => {
                self.push(*c);
                Ok(())
            }
            Ast::Any => {
                let c = if seq.draw_bool(0.1)? {
                    let c = self.pick(&[('\u{a1}', '\u{2027}'), ('\u{202a}', '\u{d7ff}')], seq)?;
                    if is_line_terminator(c) {
                        'x'
                    } else {
                        c
                    }
                } else {
                    self.pick(&[PRINTABLE], seq)?
                };
                self.push(c);
                Ok(())
            }
            Ast::Class { ranges, negated } => {
                let c = self.class_char(ranges, *negated, seq)?;
                self.push(c);
                Ok(())
            }
            Ast::Concat(items) => {
                for i in items {
                    self.node(i, seq)?;
                }
                Ok(())
            }
            Ast::Alt(bs) => {
                let i = seq.draw_index(bs.len())?;
                self.node(&bs[i], seq)
            }
            Ast::Group(inner) => self.node(inner, seq),
            Ast::Repeat { node, min, max, .. } => {
                let min = *min;
                let cap = max.unwrap_or(min.saturating_add(UNBOUNDED_EXTRA));
                let mut n = 0u32;
                while n < min {
                    self.node(node, seq)?;
                    n += 1;
                }
                while n < cap {
                    let go = if self.len >= self.max_len {
                        false
                    } else if self.len < self.min_len {
                        true
                    } else {
                        seq.more(0.5)?
                    };
                    if !go {
                        break;
                    }
                    let before = self.len;
                    self.node(node, seq)?;
                    n += 1;
                    if self.len == before {
                        break;
                    }
                }
                Ok(())
            }
        }
    }
}

type Cont<'k, 'a> = &'k mut dyn FnMut(&mut Matcher<'a>, usize) -> Result<bool, PatternError>;

struct Matcher<'a> {
    chars: &'a [char],
    steps: usize,
}

impl<'a> Matcher<'a> {
    fn tick(&mut self) -> Result<(), PatternError> {
        self.steps += 1;
        if self.steps > STEP_BUDGET {
            return Err(PatternError::StepBudget);
        }
        Ok(())
    }

    /// Matches `ast` at `pos` and calls `k` with each end position until it
    /// accepts.
    fn run(&mut self, ast: &Ast, pos: usize, k: Cont<'_, 'a>) -> Result<bool, PatternError> {
        self.tick()?;
        match ast {
            Ast::Empty => k(self, pos),
            Ast::Start => Ok(pos == 0 && k(self, pos)?),
            Ast::End => Ok(pos == self.chars.len() && k(self, pos)?),
            Ast::Literal(c) => Ok(self.chars.get(pos) == Some(c) && k(self, pos + 1)?),
            Ast::Any => Ok(self.chars.get(pos).is_some_and(|c| !is_line_terminator(*c)) && k(self, pos + 1)?),
            Ast::Class { ranges, negated } => {
                Ok(self.chars.get(pos).is_some_and(|&c| in_ranges(ranges, c) != *negated) && k(self, pos + 1)?)
            }
            Ast::Group(inner) => self.run(inner, pos, k),
            Ast::Alt(bs) => {
                for b in bs {
                    if self.run(b, pos, k)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Ast::Concat(items) => self.concat(items, pos, k),
            Ast::Repeat { node, min, max, lazy } => {
                let rep = Rep {
                    node,
                    min: *min,
                    max: *max,
                    lazy: *lazy,
                };
                self.repeat(&rep, 0, pos, usize::MAX, k)
            }
        }
    }

    fn concat(&mut self, items: &[Ast], pos: usize, k: Cont<'_, 'a>) -> Result<bool, PatternError> {
        let Some((first, rest)) = items.split_first() else {
            return k(self, pos);
        };
        self.run(first, pos, &mut |m: &mut Matcher<'a>, p| m.concat(rest, p, k))
    }

    fn repeat(&mut self, rep: &Rep, count: u32, pos: usize, last: usize, k: Cont<'_, 'a>) -> Result<bool, PatternError> {
        self.tick()?;
        let can_stop = count >= rep.min;
        // An iteration that consumed nothing cannot make progress.
        let can_go = rep.max.is_none_or(|m| count < m) && !(count >= rep.min && last == pos);
        if rep.lazy && can_stop && k(self, pos)? {
            return Ok(true);
        }
        if can_go && self.run(rep.node, pos, &mut |m: &mut Matcher<'a>, p| m.repeat(rep, count + 1, p, pos, k))? {
            return Ok(true);
        }
        Ok(!rep.lazy && can_stop && k(self, pos)?)
    }
}

struct Rep<'n> {
    node: &'n Ast,
    min: u32,
    max: Option<u32>,
    lazy: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(p: &str, s: &str) -> bool {
        Pattern::parse(p).unwrap().is_match(s).unwrap()
    }

    #[test]
    fn matcher_basics() {
        assert!(m("^[a-z]{1,12}$", "basket"));
        assert!(!m("^[a-z]{1,12}$", "Basket"));
        assert!(!m("^[a-z]{1,12}$", "abcdefghijklm"));
        assert!(m("b", "abc"));
        assert!(m("^(?:ab|cd)+$", "abcdab"));
        assert!(!m("^(?:ab|cd)+$", "abc"));
        assert!(m("^\\d{3}-\\d{4}$", "555-1234"));
        assert!(m("^[^0-9]*$", "abc"));
        assert!(!m("^[^0-9]*$", "a1"));
        assert!(m("^a.c$", "abc"));
        assert!(!m("^a.c$", "a\nc"));
        assert!(m("^x{2,}?y$", "xxxy"));
        assert!(m("^(?<year>\\d{4})$", "2024"));
    }

    #[test]
    fn literal_brace_is_accepted() {
        assert!(m("^{[0-9]+}$", "{12}"));
        assert!(m("^a{,3}$", "a{,3}"));
    }

    #[test]
    fn unsupported_constructs() {
        for p in ["(a)\\1", "(?=a)", "(?!a)", "(?<=a)b", "\\bword", "(?i)abc"] {
            assert!(
                matches!(Pattern::parse(p), Err(PatternError::UnsupportedPattern { .. })),
                "{p}"
            );
        }
        assert!(matches!(Pattern::parse("a)"), Err(PatternError::Syntax { .. })));
        assert!(matches!(Pattern::parse("*a"), Err(PatternError::Syntax { .. })));
    }

    #[test]
    fn generated_strings_match() {
        let patterns = [
            "^[a-z]{1,12}$",
            "^\\d{3}-\\d{4}$",
            "^(?:ab|cd)+$",
            "^[^0-9]*$",
            "foo",
            "^a.c$",
            "^[A-Fa-f0-9]{8}(-[A-Fa-f0-9]{4}){3}$",
            "^{[0-9a-fA-F]{4}}$",
        ];
        for p in patterns {
            let pat = Pattern::parse(p).unwrap();
            for seed in 0..50 {
                let mut seq = ChoiceSequence::record(seed);
                let s = pat.generate(&mut seq, 0, 64).unwrap();
                assert!(pat.is_match(&s).unwrap(), "{p} -> {s:?}");
                let re = regex::Regex::new(&crate::validate::translate_ecma(p).unwrap()).unwrap();
                assert!(re.is_match(&s), "{p} -> {s:?}");
            }
        }
    }

    #[test]
    fn step_budget_stops_catastrophic_backtracking() {
        let p = Pattern::parse("^(a*)*b$").unwrap();
        let s = "a".repeat(40);
        assert_eq!(p.is_match(&s), Err(PatternError::StepBudget));
    }

    #[test]
    fn length_targets() {
        let pat = Pattern::parse("^\\d+$").unwrap();
        let mut seq = ChoiceSequence::record(3);
        let s = pat.generate(&mut seq, 5, 6).unwrap();
        assert!((5..=6).contains(&s.len()), "{s}");
    }
}
