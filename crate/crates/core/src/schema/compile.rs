use std::fmt;

use super::{SchemaError, SchemaNode};
use crate::fsm::{self, Dfa, FsmError};

/// Maximum number of content characters in a string value. An escape
/// sequence counts as one character.
pub const MAX_STRING_LEN: usize = 256;

/// A regular expression in the FSM engine's dialect, anchored at both ends.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RegexPattern(String);

impl RegexPattern {
    pub fn new(pattern: impl Into<String>) -> Self {
        RegexPattern(pattern.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_dfa(&self) -> Result<Dfa, FsmError> {
        fsm::compile_regex(&self.0)
    }
}

impl fmt::Display for RegexPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Compiles a schema into a pattern whose language is exactly its valid
/// serializations.
///
/// Whitespace policy: at most one space after `[`, after `,` and before `]`
/// in arrays; at most one space on either side of `:` and `,` in objects.
/// Strings hold printable ASCII other than `"` and `\`, plus the escapes
/// `\"`, `\\`, `\n`, `\t`.
pub fn compile_schema(schema: &SchemaNode) -> Result<RegexPattern, SchemaError> {
    schema.check_depth()?;
    let mut out = String::new();
    emit(schema, &mut out);
    Ok(RegexPattern(out))
}

fn emit(node: &SchemaNode, out: &mut String) {
    match node {
        SchemaNode::Boolean => out.push_str("(?:true|false)"),
        SchemaNode::String => {
            out.push_str(r#""(?:[^"\\]|\\["\\nt]){0,"#);
            out.push_str(&MAX_STRING_LEN.to_string());
            out.push_str(r#"}""#);
        }
        SchemaNode::Array(items) => {
            let mut item = String::new();
            emit(items, &mut item);
            out.push_str(r"\[(?: ?| ?");
            out.push_str(&item);
            out.push_str("(?:, ?");
            out.push_str(&item);
            out.push_str(r")* ?)\]");
        }
        SchemaNode::Object(fields) => {
            out.push_str(r"\{");
            for (i, (name, value)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(" ?, ?");
                }
                out.push('"');
                out.push_str(&fsm::regex::escape(name));
                out.push_str("\" ?: ?");
                emit(value, out);
            }
            out.push_str(r"\}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::builtin_schemas;

    #[test]
    fn boolean_language() {
        let dfa = compile_schema(&SchemaNode::Boolean)
            .unwrap()
            .to_dfa()
            .unwrap();
        assert!(dfa.accepts("true"));
        assert!(dfa.accepts("false"));
        assert!(!dfa.accepts("tru"));
        assert!(!dfa.accepts("\"true\""));
    }

    #[test]
    fn builtin_examples() {
        let (g, a) = builtin_schemas();
        let g = compile_schema(&g).unwrap().to_dfa().unwrap();
        let a = compile_schema(&a).unwrap().to_dfa().unwrap();
        assert!(g.accepts(r#"["blue block", "red bowl"]"#));
        assert!(g.accepts("[]"));
        assert!(!g.accepts(r#"["a",]"#));
        assert!(!g.accepts("[true]"));
        assert!(a.accepts(
            r#"{"ambiguity": false, "explanation": "only one cup", "clarifying_question": ""}"#
        ));
        assert!(a.accepts(r#"{"ambiguity":true,"explanation":"x","clarifying_question":""}"#));
        assert!(
            !a.accepts(r#"{"explanation": "x", "ambiguity": true, "clarifying_question": "?"}"#)
        );
    }

    #[test]
    fn string_bounds_and_escapes() {
        let dfa = compile_schema(&SchemaNode::String)
            .unwrap()
            .to_dfa()
            .unwrap();
        assert!(dfa.accepts(&format!("\"{}\"", "a".repeat(MAX_STRING_LEN))));
        assert!(!dfa.accepts(&format!("\"{}\"", "a".repeat(MAX_STRING_LEN + 1))));
        assert!(dfa.accepts(r#""say \"hi\"\n\t\\""#));
        assert!(!dfa.accepts(r#""bad \x""#));
        assert!(!dfa.accepts("\"tab\there\""));
    }

    #[test]
    fn deterministic() {
        let (_, a) = builtin_schemas();
        assert_eq!(compile_schema(&a).unwrap(), compile_schema(&a).unwrap());
    }
}
