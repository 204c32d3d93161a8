//! Parser for the supported regular-expression subset.
//!
//! Supported: literals, backslash-escaped metacharacters, `\n \t \r \xHH`,
//! the shorthands `\d \s \w`, character classes with ranges and negation,
//! `.`, grouping with `(...)` or `(?:...)`, alternation, and the quantifiers
//! `* + ?`, `{m}`, `{m,}`, `{m,n}`. Patterns are implicitly anchored at both
//! ends; `^` and `$` are rejected. Only ASCII characters may appear.

use super::FsmError;

/// Upper bound on any repetition count.
pub const MAX_REPEAT: u32 = 1000;

const METACHARS: &[char] = &[
    '\\', '.', '[', ']', '(', ')', '{', '}', '*', '+', '?', '|', '^', '$',
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ast {
    /// Matches the empty string.
    Empty,
    /// One character from `set` (or, when `negated`, from the alphabet minus `set`).
    Class {
        set: u128,
        negated: bool,
    },
    Concat(Vec<Ast>),
    Alternation(Vec<Ast>),
    Repeat {
        inner: Box<Ast>,
        min: u32,
        max: Option<u32>,
    },
}

impl Ast {
    pub fn literal(c: char) -> Self {
        Ast::Class {
            set: 1 << (c as u32),
            negated: false,
        }
    }
}

/// Escapes every metacharacter in `text` so it matches literally.
pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if METACHARS.contains(&c) || c == '-' => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}

pub fn parse(pattern: &str) -> Result<Ast, FsmError> {
    let chars: Vec<char> = pattern.chars().collect();
    if let Some(pos) = chars.iter().position(|c| (*c as u32) >= 128) {
        return Err(err(pos, "non-ASCII character in pattern"));
    }
    let mut parser = Parser { chars, pos: 0 };
    let ast = parser.alternation()?;
    if parser.pos != parser.chars.len() {
        return Err(err(parser.pos, "unexpected character"));
    }
    Ok(ast)
}

fn err(offset: usize, message: &str) -> FsmError {
    FsmError::RegexParse {
        offset,
        message: message.to_string(),
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        self.pos += 1;
        c
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn alternation(&mut self) -> Result<Ast, FsmError> {
        let mut branches = vec![self.concat()?];
        while self.eat('|') {
            branches.push(self.concat()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Ast::Alternation(branches)
        })
    }

    fn concat(&mut self) -> Result<Ast, FsmError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            items.push(self.repeat()?);
        }
        Ok(match items.len() {
            0 => Ast::Empty,
            1 => items.pop().unwrap(),
            _ => Ast::Concat(items),
        })
    }

    fn repeat(&mut self) -> Result<Ast, FsmError> {
        let mut ast = self.atom()?;
        loop {
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
                Some('{') => self.bounds()?,
                _ => break,
            };
            ast = Ast::Repeat {
                inner: Box::new(ast),
                min,
                max,
            };
        }
        Ok(ast)
    }

    fn bounds(&mut self) -> Result<(u32, Option<u32>), FsmError> {
        let start = self.pos;
        self.pos += 1;
        let min = self
            .number()
            .ok_or_else(|| err(start, "expected repetition count"))?;
        let max = if self.eat(',') {
            if self.peek() == Some('}') {
                None
            } else {
                Some(
                    self.number()
                        .ok_or_else(|| err(self.pos, "expected upper bound"))?,
                )
            }
        } else {
            Some(min)
        };
        if !self.eat('}') {
            return Err(err(self.pos, "unterminated repetition"));
        }
        if let Some(max) = max {
            if max < min {
                return Err(err(start, "repetition upper bound below lower bound"));
            }
            if max > MAX_REPEAT {
                return Err(err(start, "repetition count too large"));
            }
        }
        if min > MAX_REPEAT {
            return Err(err(start, "repetition count too large"));
        }
        Ok((min, max))
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        self.chars[start..self.pos]
            .iter()
            .collect::<String>()
            .parse()
            .ok()
    }

    fn atom(&mut self) -> Result<Ast, FsmError> {
        let at = self.pos;
        match self.bump() {
            None => Err(err(at, "unexpected end of pattern")),
            Some('(') => {
                if self.eat('?') && !self.eat(':') {
                    return Err(err(at, "unsupported group modifier"));
                }
                let inner = self.alternation()?;
                if !self.eat(')') {
                    return Err(err(self.pos, "missing closing parenthesis"));
                }
                Ok(inner)
            }
            Some('[') => self.class(at),
            Some('.') => Ok(Ast::Class {
                set: 0,
                negated: true,
            }),
            Some('\\') => {
                let set = self.escape_set(at)?;
                Ok(Ast::Class {
                    set,
                    negated: false,
                })
            }
            Some(c @ ('*' | '+' | '?' | '{')) => {
                Err(err(at, &format!("quantifier {c:?} without operand")))
            }
            Some(c @ (']' | '}' | '^' | '$' | ')')) => {
                Err(err(at, &format!("unescaped metacharacter {c:?}")))
            }
            Some(c) => Ok(Ast::literal(c)),
        }
    }

    /// Parses the character(s) after a backslash into a set.
    fn escape_set(&mut self, at: usize) -> Result<u128, FsmError> {
        let c = self.bump().ok_or_else(|| err(at, "dangling escape"))?;
        Ok(match c {
            'n' => bit('\n'),
            't' => bit('\t'),
            'r' => bit('\r'),
            'd' => range_mask('0', '9'),
            's' => bit(' ') | bit('\t') | bit('\n') | bit('\r'),
            'w' => range_mask('a', 'z') | range_mask('A', 'Z') | range_mask('0', '9') | bit('_'),
            'x' => {
                let hex: String = (0..2).filter_map(|_| self.bump()).collect();
                let code = u8::from_str_radix(&hex, 16).map_err(|_| err(at, "bad hex escape"))?;
                if code >= 128 {
                    return Err(err(at, "non-ASCII hex escape"));
                }
                1 << code
            }
            c if c.is_ascii_alphanumeric() => {
                return Err(err(at, &format!("unsupported escape \\{c}")))
            }
            c => bit(c),
        })
    }

    fn class(&mut self, at: usize) -> Result<Ast, FsmError> {
        let negated = self.eat('^');
        let mut set = 0u128;
        let mut first = true;
        loop {
            let item_at = self.pos;
            let c = self
                .bump()
                .ok_or_else(|| err(at, "unterminated character class"))?;
            if c == ']' && !first {
                break;
            }
            if c == ']' {
                return Err(err(item_at, "empty character class"));
            }
            first = false;
            let lo = if c == '\\' {
                let s = self.escape_set(item_at)?;
                if s.count_ones() != 1 {
                    set |= s;
                    continue;
                }
                char::from(s.trailing_zeros() as u8)
            } else if c == '[' {
                return Err(err(item_at, "nested class"));
            } else {
                c
            };
            if self.peek() == Some('-') && self.chars.get(self.pos + 1).is_some_and(|&n| n != ']') {
                self.pos += 1;
                let hi_at = self.pos;
                let hc = self
                    .bump()
                    .ok_or_else(|| err(at, "unterminated character class"))?;
                let hi = if hc == '\\' {
                    let s = self.escape_set(hi_at)?;
                    if s.count_ones() != 1 {
                        return Err(err(hi_at, "class shorthand as range bound"));
                    }
                    char::from(s.trailing_zeros() as u8)
                } else {
                    hc
                };
                if hi < lo {
                    return Err(err(item_at, "reversed range"));
                }
                set |= range_mask(lo, hi);
            } else {
                set |= bit(lo);
            }
        }
        Ok(Ast::Class { set, negated })
    }
}

fn bit(c: char) -> u128 {
    1 << (c as u32)
}

fn range_mask(lo: char, hi: char) -> u128 {
    (lo as u32..=hi as u32).fold(0, |m, c| m | (1 << c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_alternation_of_literals() {
        let ast = parse("ab|c").unwrap();
        assert_eq!(
            ast,
            Ast::Alternation(vec![
                Ast::Concat(vec![Ast::literal('a'), Ast::literal('b')]),
                Ast::literal('c')
            ])
        );
    }

    #[test]
    fn parses_bounded_repetition() {
        let ast = parse("a{2,5}").unwrap();
        assert_eq!(
            ast,
            Ast::Repeat {
                inner: Box::new(Ast::literal('a')),
                min: 2,
                max: Some(5)
            }
        );
        assert!(matches!(
            parse("a{3,}").unwrap(),
            Ast::Repeat {
                min: 3,
                max: None,
                ..
            }
        ));
        assert!(matches!(
            parse("a{0,0}").unwrap(),
            Ast::Repeat {
                min: 0,
                max: Some(0),
                ..
            }
        ));
    }

    #[test]
    fn class_with_escapes_and_ranges() {
        let Ast::Class { set, negated } = parse(r#"[^"\\a-c]"#).unwrap() else {
            panic!()
        };
        assert!(negated);
        assert_eq!(set, bit('"') | bit('\\') | bit('a') | bit('b') | bit('c'));
    }

    #[test]
    fn rejects_bad_patterns() {
        for bad in [
            "(a", "a)", "*a", "a{2,1}", "[]", "[a", "\\q", "^a", "a{5000}", "é",
        ] {
            assert!(
                matches!(parse(bad), Err(FsmError::RegexParse { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn escape_round_trips_through_parser() {
        let text = r#"{"a": [1]}.*+?|\"#;
        let ast = parse(&escape(text)).unwrap();
        let Ast::Concat(items) = ast else { panic!() };
        assert_eq!(items.len(), text.chars().count());
    }
}
