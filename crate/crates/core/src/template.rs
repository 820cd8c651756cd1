//! Placeholder substitution for topic templates and task parameters.
//!
//! Two syntaxes are supported:
//! - `{key}` / `{key.N}` inside topic and node templates. A key bound to an
//!   array expands the template once per element (cartesian over keys).
//! - `"${key}"` inside JSON parameter values. A string that is exactly one
//!   placeholder is replaced by the bound value verbatim; otherwise the
//!   value is interpolated as text. `$$` produces a literal `$`, which
//!   lets a template carry placeholders meant for a later stage.

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

pub type Bindings = BTreeMap<String, Value>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unbound placeholder {{{0}}}")]
    Unbound(String),
    #[error("unterminated placeholder in {0:?}")]
    Unterminated(String),
    #[error("placeholder {0} does not resolve to a scalar")]
    NotScalar(String),
    #[error("index out of range in placeholder {0}")]
    BadIndex(String),
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn lookup<'a>(path: &str, bindings: &'a Bindings) -> Result<&'a Value, TemplateError> {
    let mut parts = path.split('.');
    let head = parts.next().unwrap_or_default();
    let mut value = bindings
        .get(head)
        .ok_or_else(|| TemplateError::Unbound(path.to_owned()))?;
    for part in parts {
        let idx: usize = part
            .parse()
            .map_err(|_| TemplateError::BadIndex(path.to_owned()))?;
        value = value
            .as_array()
            .and_then(|a| a.get(idx))
            .ok_or_else(|| TemplateError::BadIndex(path.to_owned()))?;
    }
    Ok(value)
}

enum Piece<'a> {
    Text(&'a str),
    Hole(&'a str),
}

fn split_braces(template: &str) -> Result<Vec<Piece<'_>>, TemplateError> {
    let mut pieces = vec![];
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Text(&rest[..open]));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| TemplateError::Unterminated(template.to_owned()))?;
        pieces.push(Piece::Hole(&rest[open + 1..open + close]));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    Ok(pieces)
}

/// Expands `{key}` placeholders; array-valued keys fan out.
pub fn expand(template: &str, bindings: &Bindings) -> Result<Vec<String>, TemplateError> {
    let mut outputs = vec![String::new()];
    for piece in split_braces(template)? {
        match piece {
            Piece::Text(t) => outputs.iter_mut().for_each(|o| o.push_str(t)),
            Piece::Hole(key) => {
                let value = lookup(key, bindings)?;
                let choices: Vec<String> = match value {
                    Value::Array(items) => items
                        .iter()
                        .map(|v| scalar_text(v).ok_or_else(|| TemplateError::NotScalar(key.to_owned())))
                        .collect::<Result<_, _>>()?,
                    v => vec![scalar_text(v).ok_or_else(|| TemplateError::NotScalar(key.to_owned()))?],
                };
                outputs = outputs
                    .iter()
                    .flat_map(|o| choices.iter().map(move |c| format!("{o}{c}")))
                    .collect();
            }
        }
    }
    Ok(outputs)
}

/// Like [`expand`] but requires exactly one result.
pub fn expand_one(template: &str, bindings: &Bindings) -> Result<String, TemplateError> {
    let mut out = expand(template, bindings)?;
    if out.len() != 1 {
        return Err(TemplateError::NotScalar(template.to_owned()));
    }
    Ok(out.remove(0))
}

/// Replaces `${key}` placeholders anywhere inside a JSON value.
pub fn substitute(value: &Value, bindings: &Bindings) -> Result<Value, TemplateError> {
    Ok(match value {
        Value::String(s) => substitute_str(s, bindings)?,
        Value::Array(items) => Value::Array(
            items
                .iter()
                .map(|v| substitute(v, bindings))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| Ok((k.clone(), substitute(v, bindings)?)))
                .collect::<Result<_, TemplateError>>()?,
        ),
        other => other.clone(),
    })
}

fn substitute_str(s: &str, bindings: &Bindings) -> Result<Value, TemplateError> {
    if let Some(key) = s.strip_prefix("${").and_then(|r| r.strip_suffix('}')) {
        if !key.contains(['{', '}', '$']) {
            return lookup(key, bindings).cloned();
        }
    }
    if !s.contains('$') {
        return Ok(Value::String(s.to_owned()));
    }
    let mut out = String::new();
    let mut rest = s;
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with("$$") {
            // `$$` is a literal `$`, so `$${key}` survives one substitution.
            out.push('$');
            rest = &tail[2..];
        } else if tail.starts_with("${") {
            let end = tail
                .find('}')
                .ok_or_else(|| TemplateError::Unterminated(s.to_owned()))?;
            let key = &tail[2..end];
            let v = lookup(key, bindings)?;
            out.push_str(&scalar_text(v).ok_or_else(|| TemplateError::NotScalar(key.to_owned()))?);
            rest = &tail[end + 1..];
        } else {
            out.push('$');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(Value::String(out))
}
