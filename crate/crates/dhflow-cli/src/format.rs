//! The JSON network file format.
//!
//! ```json
//! {
//!   "description": "optional free text",
//!   "units": "optional free text, uninterpreted",
//!   "curve_form": "quadratic",
//!   "vertices": [
//!     {"id": 0, "kind": "pump", "pressure": 1.0},
//!     {"id": 3, "kind": "junction"},
//!     {"id": 1, "kind": "valve", "k_valve": 1.0}
//!   ],
//!   "edges": [
//!     {"tail": 0, "head": 3, "k_supply": 0.5, "k_return": 0.5}
//!   ]
//! }
//! ```
//!
//! `curve_form` selects the pipe loss law: the default `"quadratic"` or
//! `{"exponent": a}` for the generalized power law with exponent `a >= 1`
//! (valves always follow their quadratic characteristic). In strict mode
//! (the default), unknown keys are rejected so typos in coefficient names
//! cannot slip through; lax mode downgrades them to warnings.

use std::fmt;
use std::path::Path;

use dhflow_core::{
    EdgeSpec, LossForm, NetworkSpec, PipeCurveParams, RawNetwork, ValidationError,
    ValveCurveParams, VertexId, VertexKind,
};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug)]
pub enum ParseError {
    Io {
        path: String,
        source: std::io::Error,
    },
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    Schema {
        context: String,
    },
    Validation(ValidationError),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::Io { path, source } => write!(f, "cannot read {path}: {source}"),
            ParseError::Syntax {
                line,
                column,
                message,
            } => write!(f, "JSON syntax error at line {line}, column {column}: {message}"),
            ParseError::Schema { context } => write!(f, "schema error: {context}"),
            ParseError::Validation(e) => write!(f, "invalid network: {e}"),
        }
    }
}

impl std::error::Error for ParseError {}

impl From<ValidationError> for ParseError {
    fn from(e: ValidationError) -> Self {
        ParseError::Validation(e)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Accept unknown keys with a warning instead of failing.
    pub lax: bool,
}

#[derive(Debug)]
pub struct ParsedNetwork {
    pub network: NetworkSpec,
    /// Free-text metadata carried by the file, uninterpreted.
    pub description: Option<String>,
    pub units: Option<String>,
    /// Lax-mode notes about ignored keys.
    pub warnings: Vec<String>,
}

fn schema<T>(context: String) -> Result<T, ParseError> {
    Err(ParseError::Schema { context })
}

fn as_object<'v>(
    value: &'v Value,
    what: &str,
) -> Result<&'v serde_json::Map<String, Value>, ParseError> {
    value
        .as_object()
        .ok_or(ParseError::Schema {
            context: format!("{what} must be a JSON object"),
        })
}

fn get_f64(map: &serde_json::Map<String, Value>, key: &str, what: &str) -> Result<f64, ParseError> {
    let value = map.get(key).ok_or(ParseError::Schema {
        context: format!("{what} is missing \"{key}\""),
    })?;
    value.as_f64().ok_or(ParseError::Schema {
        context: format!("\"{key}\" of {what} must be a number"),
    })
}

fn get_id(map: &serde_json::Map<String, Value>, key: &str, what: &str) -> Result<VertexId, ParseError> {
    let value = map.get(key).ok_or(ParseError::Schema {
        context: format!("{what} is missing \"{key}\""),
    })?;
    let raw = value.as_u64().ok_or(ParseError::Schema {
        context: format!("\"{key}\" of {what} must be a non-negative integer"),
    })?;
    if raw > u32::MAX as u64 {
        return schema(format!("\"{key}\" of {what} is out of range"));
    }
    Ok(VertexId(raw as u32))
}

fn check_keys(
    map: &serde_json::Map<String, Value>,
    allowed: &[&str],
    what: &str,
    opts: ParseOptions,
    warnings: &mut Vec<String>,
) -> Result<(), ParseError> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            if opts.lax {
                warnings.push(format!("ignoring unknown key \"{key}\" in {what}"));
            } else {
                return schema(format!(
                    "unknown key \"{key}\" in {what} (expected one of: {})",
                    allowed.join(", ")
                ));
            }
        }
    }
    Ok(())
}

/// Parses and validates a network document.
pub fn parse_network_str(text: &str, opts: ParseOptions) -> Result<ParsedNetwork, ParseError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut warnings = Vec::new();
    let doc = as_object(&root, "the document")?;
    check_keys(
        doc,
        &["description", "units", "curve_form", "vertices", "edges"],
        "the document",
        opts,
        &mut warnings,
    )?;

    let description = match doc.get("description") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return schema("\"description\" must be a string".into()),
    };
    let units = match doc.get("units") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return schema("\"units\" must be a string".into()),
    };

    let loss_form = match doc.get("curve_form") {
        None => LossForm::Quadratic,
        Some(Value::String(s)) if s == "quadratic" => LossForm::Quadratic,
        Some(Value::String(s)) => {
            return schema(format!(
                "unknown curve_form \"{s}\" (expected \"quadratic\" or {{\"exponent\": a}})"
            ))
        }
        Some(Value::Object(map)) => {
            check_keys(map, &["exponent"], "curve_form", opts, &mut warnings)?;
            let alpha = get_f64(map, "exponent", "curve_form")?;
            LossForm::Exponent(alpha)
        }
        Some(_) => return schema("curve_form must be a string or an object".into()),
    };

    let vertex_values = doc
        .get("vertices")
        .ok_or(ParseError::Schema {
            context: "the document is missing \"vertices\"".into(),
        })?
        .as_array()
        .ok_or(ParseError::Schema {
            context: "\"vertices\" must be an array".into(),
        })?;
    let edge_values = doc
        .get("edges")
        .ok_or(ParseError::Schema {
            context: "the document is missing \"edges\"".into(),
        })?
        .as_array()
        .ok_or(ParseError::Schema {
            context: "\"edges\" must be an array".into(),
        })?;

    let mut vertices = Vec::with_capacity(vertex_values.len());
    for (i, v) in vertex_values.iter().enumerate() {
        let what = format!("vertex entry {i}");
        let map = as_object(v, &what)?;
        let id = get_id(map, "id", &what)?;
        let kind = map
            .get("kind")
            .and_then(Value::as_str)
            .ok_or(ParseError::Schema {
                context: format!("{what} needs a string \"kind\""),
            })?;
        let kind = match kind {
            "pump" => {
                check_keys(map, &["id", "kind", "pressure"], &what, opts, &mut warnings)?;
                VertexKind::Pump {
                    pressure: get_f64(map, "pressure", &what)?,
                }
            }
            "junction" => {
                check_keys(map, &["id", "kind"], &what, opts, &mut warnings)?;
                VertexKind::Junction
            }
            "valve" => {
                check_keys(map, &["id", "kind", "k_valve"], &what, opts, &mut warnings)?;
                VertexKind::Valve {
                    curve: ValveCurveParams::new(get_f64(map, "k_valve", &what)?),
                }
            }
            other => {
                return schema(format!(
                    "{what} has unknown kind \"{other}\" (expected pump, junction or valve)"
                ))
            }
        };
        vertices.push((id, kind));
    }

    let mut edges = Vec::with_capacity(edge_values.len());
    for (i, e) in edge_values.iter().enumerate() {
        let what = format!("edge entry {i}");
        let map = as_object(e, &what)?;
        check_keys(
            map,
            &["tail", "head", "k_supply", "k_return"],
            &what,
            opts,
            &mut warnings,
        )?;
        edges.push(EdgeSpec {
            tail: get_id(map, "tail", &what)?,
            head: get_id(map, "head", &what)?,
            pipe: PipeCurveParams::new(
                get_f64(map, "k_supply", &what)?,
                get_f64(map, "k_return", &what)?,
            ),
        });
    }

    let network = RawNetwork::new(vertices, edges)
        .with_loss_form(loss_form)
        .validate()?;
    Ok(ParsedNetwork {
        network,
        description,
        units,
        warnings,
    })
}

/// Reads and parses a network file.
pub fn parse_network_path(path: &Path, opts: ParseOptions) -> Result<ParsedNetwork, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network_str(&text, opts)
}

#[derive(Serialize)]
struct VertexOut {
    id: u32,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pressure: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_valve: Option<f64>,
}

#[derive(Serialize)]
struct EdgeOut {
    tail: u32,
    head: u32,
    k_supply: f64,
    k_return: f64,
}

#[derive(Serialize)]
struct NetworkOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    description: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    units: Option<&'a str>,
    curve_form: Value,
    vertices: Vec<VertexOut>,
    edges: Vec<EdgeOut>,
}

/// Serializes a validated network back to the document format;
/// `parse(network_to_json(net))` reproduces `net`.
pub fn network_to_json(
    net: &NetworkSpec,
    description: Option<&str>,
    units: Option<&str>,
) -> String {
    let raw = net.to_raw();
    let curve_form = match raw.loss_form {
        LossForm::Quadratic => Value::String("quadratic".into()),
        LossForm::Exponent(a) => serde_json::json!({ "exponent": a }),
    };
    let vertices = raw
        .vertices
        .iter()
        .map(|(id, kind)| match kind {
            VertexKind::Pump { pressure } => VertexOut {
                id: id.0,
                kind: "pump",
                pressure: Some(*pressure),
                k_valve: None,
            },
            VertexKind::Junction => VertexOut {
                id: id.0,
                kind: "junction",
                pressure: None,
                k_valve: None,
            },
            VertexKind::Valve { curve } => VertexOut {
                id: id.0,
                kind: "valve",
                pressure: None,
                k_valve: Some(curve.k_valve),
            },
        })
        .collect();
    let edges = raw
        .edges
        .iter()
        .map(|e| EdgeOut {
            tail: e.tail.0,
            head: e.head.0,
            k_supply: e.pipe.k_supply,
            k_return: e.pipe.k_return,
        })
        .collect();
    let out = NetworkOut {
        description,
        units,
        curve_form,
        vertices,
        edges,
    };
    let mut text = serde_json::to_string_pretty(&out).expect("network documents serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use dhflow_core::presets;

    #[test]
    fn round_trip_preserves_the_network() {
        for net in [presets::two_consumer(), presets::network22()] {
            let text = network_to_json(&net, Some("round trip"), None);
            let parsed = parse_network_str(&text, ParseOptions::default()).unwrap();
            assert_eq!(parsed.network, net);
            assert_eq!(parsed.description.as_deref(), Some("round trip"));
        }
    }

    #[test]
    fn missing_vertices_is_a_schema_error() {
        let err = parse_network_str(r#"{"edges": []}"#, ParseOptions::default()).unwrap_err();
        assert!(matches!(err, ParseError::Schema { .. }));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_network_str("{\n  \"vertices\": [,]\n}", ParseOptions::default())
            .unwrap_err();
        match err {
            ParseError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_fail_strict_and_warn_lax() {
        let text = r#"{
            "vertices": [
                {"id": 0, "kind": "pump", "pressure": 1.0},
                {"id": 1, "kind": "valve", "k_valve": 1.0, "k_vlave": 2.0}
            ],
            "edges": [{"tail": 0, "head": 1, "k_supply": 0.5, "k_return": 0.5}]
        }"#;
        let err = parse_network_str(text, ParseOptions::default()).unwrap_err();
        assert!(matches!(err, ParseError::Schema { .. }));

        let parsed = parse_network_str(text, ParseOptions { lax: true }).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains("k_vlave"));
    }

    #[test]
    fn validation_errors_pass_through() {
        let text = r#"{
            "vertices": [
                {"id": 0, "kind": "pump", "pressure": 1.0},
                {"id": 1, "kind": "junction"}
            ],
            "edges": [{"tail": 0, "head": 1, "k_supply": 0.5, "k_return": 0.5}]
        }"#;
        let err = parse_network_str(text, ParseOptions::default()).unwrap_err();
        assert!(matches!(err, ParseError::Validation(_)));
    }

    #[test]
    fn exponent_curve_form_parses() {
        let text = r#"{
            "curve_form": {"exponent": 3.0},
            "vertices": [
                {"id": 0, "kind": "pump", "pressure": 1.0},
                {"id": 1, "kind": "valve", "k_valve": 1.0}
            ],
            "edges": [{"tail": 0, "head": 1, "k_supply": 0.5, "k_return": 0.5}]
        }"#;
        let parsed = parse_network_str(text, ParseOptions::default()).unwrap();
        assert_eq!(parsed.network.loss_form(), LossForm::Exponent(3.0));
    }
}
