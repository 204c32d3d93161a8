//! Hand-written recursive validator for schema serializations.
//!
//! Written directly from the serialization rules, without going through the
//! regex or automaton code, so it can serve as an independent oracle.
//! It also classifies prefixes: `Viable` means the text can still be
//! completed into a valid serialization.

use ambres_core::schema::{SchemaNode, MAX_STRING_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Complete,
    Viable,
    Invalid,
}

#[derive(Debug)]
enum Fail {
    Eof,
    Bad,
}

struct Cursor<'a> {
    chars: &'a [char],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Result<char, Fail> {
        self.chars.get(self.pos).copied().ok_or(Fail::Eof)
    }

    fn expect(&mut self, c: char) -> Result<(), Fail> {
        if self.peek()? == c {
            self.pos += 1;
            Ok(())
        } else {
            Err(Fail::Bad)
        }
    }

    fn optional_space(&mut self) -> Result<(), Fail> {
        if self.peek()? == ' ' {
            self.pos += 1;
        }
        Ok(())
    }

    fn value(&mut self, schema: &SchemaNode) -> Result<(), Fail> {
        match schema {
            SchemaNode::Boolean => {
                let word = match self.peek()? {
                    't' => "true",
                    'f' => "false",
                    _ => return Err(Fail::Bad),
                };
                for c in word.chars() {
                    self.expect(c)?;
                }
                Ok(())
            }
            SchemaNode::String => {
                self.expect('"')?;
                let mut len = 0;
                loop {
                    let c = self.peek()?;
                    if c == '"' {
                        self.pos += 1;
                        return Ok(());
                    }
                    if len == MAX_STRING_LEN {
                        return Err(Fail::Bad);
                    }
                    if c == '\\' {
                        self.pos += 1;
                        match self.peek()? {
                            '"' | '\\' | 'n' | 't' => self.pos += 1,
                            _ => return Err(Fail::Bad),
                        }
                    } else if (' '..='~').contains(&c) {
                        self.pos += 1;
                    } else {
                        return Err(Fail::Bad);
                    }
                    len += 1;
                }
            }
            SchemaNode::Array(items) => {
                self.expect('[')?;
                self.optional_space()?;
                if self.peek()? == ']' {
                    self.pos += 1;
                    return Ok(());
                }
                self.value(items)?;
                loop {
                    match self.peek()? {
                        ',' => {
                            self.pos += 1;
                            self.optional_space()?;
                            self.value(items)?;
                        }
                        ' ' => {
                            self.pos += 1;
                            return self.expect(']');
                        }
                        ']' => {
                            self.pos += 1;
                            return Ok(());
                        }
                        _ => return Err(Fail::Bad),
                    }
                }
            }
            SchemaNode::Object(fields) => {
                self.expect('{')?;
                for (i, (name, value)) in fields.iter().enumerate() {
                    if i > 0 {
                        self.optional_space()?;
                        self.expect(',')?;
                        self.optional_space()?;
                    }
                    self.expect('"')?;
                    for c in name.chars() {
                        self.expect(c)?;
                    }
                    self.expect('"')?;
                    self.optional_space()?;
                    self.expect(':')?;
                    self.optional_space()?;
                    self.value(value)?;
                }
                self.expect('}')
            }
        }
    }
}

pub fn classify(schema: &SchemaNode, text: &str) -> Verdict {
    let chars: Vec<char> = text.chars().collect();
    let mut cursor = Cursor {
        chars: &chars,
        pos: 0,
    };
    match cursor.value(schema) {
        Ok(()) if cursor.pos == chars.len() => Verdict::Complete,
        Ok(()) => Verdict::Invalid,
        Err(Fail::Eof) => Verdict::Viable,
        Err(Fail::Bad) => Verdict::Invalid,
    }
}

pub fn is_valid(schema: &SchemaNode, text: &str) -> bool {
    classify(schema, text) == Verdict::Complete
}
