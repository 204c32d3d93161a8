//! Restricted JSON-schema dialect and its compilation to regular expressions.
//!
//! The dialect has four node kinds:
//!
//! ```json
//! {"type": "string"}
//! {"type": "boolean"}
//! {"type": "array", "items": <schema>}
//! {"type": "object", "properties": {"k": <schema>, ...}, "order": ["k", ...]}
//! ```
//!
//! Every object field is required, no additional fields are permitted, and
//! fields are serialized in `order`. `title` and `description` annotations
//! are accepted and ignored; anything else is rejected.

mod compile;

use serde_json::{Map, Value};

pub use compile::{compile_schema, RegexPattern, MAX_STRING_LEN};

/// Maximum nesting depth of a schema; a scalar has depth 1.
pub const MAX_DEPTH: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SchemaNode {
    String,
    Boolean,
    Array(Box<SchemaNode>),
    Object(Vec<(String, SchemaNode)>),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("malformed schema: {0}")]
    MalformedSchema(String),
    #[error("unsupported schema feature: {0}")]
    UnsupportedFeature(String),
    #[error("schema nesting exceeds depth {MAX_DEPTH}")]
    DepthExceeded,
}

impl SchemaNode {
    pub fn array(items: SchemaNode) -> Self {
        SchemaNode::Array(Box::new(items))
    }

    /// Object node with the given fields in serialization order.
    pub fn object<K: Into<String>>(
        fields: impl IntoIterator<Item = (K, SchemaNode)>,
    ) -> Result<Self, SchemaError> {
        let fields: Vec<(String, SchemaNode)> =
            fields.into_iter().map(|(k, v)| (k.into(), v)).collect();
        for (i, (name, _)) in fields.iter().enumerate() {
            check_key(name)?;
            if fields[..i].iter().any(|(other, _)| other == name) {
                return Err(SchemaError::MalformedSchema(format!(
                    "duplicate field {name:?}"
                )));
            }
        }
        let node = SchemaNode::Object(fields);
        node.check_depth()?;
        Ok(node)
    }

    pub fn depth(&self) -> usize {
        match self {
            SchemaNode::String | SchemaNode::Boolean => 1,
            SchemaNode::Array(items) => 1 + items.depth(),
            SchemaNode::Object(fields) => {
                1 + fields.iter().map(|(_, v)| v.depth()).max().unwrap_or(0)
            }
        }
    }

    pub(crate) fn check_depth(&self) -> Result<(), SchemaError> {
        if self.depth() > MAX_DEPTH {
            Err(SchemaError::DepthExceeded)
        } else {
            Ok(())
        }
    }

    /// Serializes back into the dialect.
    pub fn to_json(&self) -> Value {
        match self {
            SchemaNode::String => serde_json::json!({"type": "string"}),
            SchemaNode::Boolean => serde_json::json!({"type": "boolean"}),
            SchemaNode::Array(items) => {
                serde_json::json!({"type": "array", "items": items.to_json()})
            }
            SchemaNode::Object(fields) => {
                let properties: Map<String, Value> = fields
                    .iter()
                    .map(|(k, v)| (k.clone(), v.to_json()))
                    .collect();
                let order: Vec<Value> = fields
                    .iter()
                    .map(|(k, _)| Value::String(k.clone()))
                    .collect();
                serde_json::json!({"type": "object", "properties": properties, "order": order})
            }
        }
    }
}

/// Object keys are emitted verbatim inside quotes, so they may not need escaping.
fn check_key(name: &str) -> Result<(), SchemaError> {
    if name
        .chars()
        .all(|c| (' '..='~').contains(&c) && c != '"' && c != '\\')
    {
        Ok(())
    } else {
        Err(SchemaError::UnsupportedFeature(format!(
            "field name {name:?} requires escaping"
        )))
    }
}

pub fn parse_schema(text: &str) -> Result<SchemaNode, SchemaError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| SchemaError::MalformedSchema(e.to_string()))?;
    from_value(&value, 1)
}

fn from_value(value: &Value, depth: usize) -> Result<SchemaNode, SchemaError> {
    if depth > MAX_DEPTH {
        return Err(SchemaError::DepthExceeded);
    }
    let obj = value
        .as_object()
        .ok_or_else(|| SchemaError::MalformedSchema("schema must be a JSON object".into()))?;
    let ty = match obj.get("type") {
        Some(Value::String(t)) => t.as_str(),
        Some(Value::Array(_)) => return Err(SchemaError::UnsupportedFeature("type unions".into())),
        Some(_) => {
            return Err(SchemaError::MalformedSchema(
                "\"type\" must be a string".into(),
            ))
        }
        None => return Err(SchemaError::MalformedSchema("missing \"type\"".into())),
    };
    let allowed: &[&str] = match ty {
        "string" | "boolean" => &["type"],
        "array" => &["type", "items"],
        "object" => &["type", "properties", "order"],
        "number" | "integer" | "null" => {
            return Err(SchemaError::UnsupportedFeature(format!("type {ty:?}")))
        }
        other => {
            return Err(SchemaError::MalformedSchema(format!(
                "unknown type {other:?}"
            )))
        }
    };
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) && key != "title" && key != "description" {
            return Err(SchemaError::UnsupportedFeature(format!(
                "keyword {key:?} on {ty}"
            )));
        }
    }
    match ty {
        "string" => Ok(SchemaNode::String),
        "boolean" => Ok(SchemaNode::Boolean),
        "array" => {
            let items = obj
                .get("items")
                .ok_or_else(|| SchemaError::MalformedSchema("array without items".into()))?;
            if items.is_array() {
                return Err(SchemaError::UnsupportedFeature("tuple items".into()));
            }
            Ok(SchemaNode::array(from_value(items, depth + 1)?))
        }
        _ => {
            let props = match obj.get("properties") {
                Some(Value::Object(p)) => p,
                Some(_) => {
                    return Err(SchemaError::MalformedSchema(
                        "\"properties\" must be an object".into(),
                    ))
                }
                None => {
                    return Err(SchemaError::MalformedSchema(
                        "object without properties".into(),
                    ))
                }
            };
            let order: Vec<&str> = match obj.get("order") {
                Some(Value::Array(o)) => o
                    .iter()
                    .map(|v| {
                        v.as_str().ok_or_else(|| {
                            SchemaError::MalformedSchema("order entries must be strings".into())
                        })
                    })
                    .collect::<Result<_, _>>()?,
                Some(_) => {
                    return Err(SchemaError::MalformedSchema(
                        "\"order\" must be an array".into(),
                    ))
                }
                None => return Err(SchemaError::MalformedSchema("object without order".into())),
            };
            if order.len() != props.len() || props.keys().any(|k| !order.contains(&k.as_str())) {
                return Err(SchemaError::MalformedSchema(
                    "order must list every property exactly once".into(),
                ));
            }
            let mut fields = Vec::with_capacity(order.len());
            for name in order {
                if fields.iter().any(|(k, _): &(String, SchemaNode)| k == name) {
                    return Err(SchemaError::MalformedSchema(format!(
                        "duplicate field {name:?} in order"
                    )));
                }
                check_key(name)?;
                fields.push((name.to_string(), from_value(&props[name], depth + 1)?));
            }
            Ok(SchemaNode::Object(fields))
        }
    }
}

/// The grounding schema (a list of object descriptions) and the ambiguity
/// record schema.
pub fn builtin_schemas() -> (SchemaNode, SchemaNode) {
    (grounding_schema(), ambiguity_schema())
}

pub fn grounding_schema() -> SchemaNode {
    SchemaNode::array(SchemaNode::String)
}

pub fn ambiguity_schema() -> SchemaNode {
    SchemaNode::Object(vec![
        ("ambiguity".into(), SchemaNode::Boolean),
        ("explanation".into(), SchemaNode::String),
        ("clarifying_question".into(), SchemaNode::String),
    ])
}
