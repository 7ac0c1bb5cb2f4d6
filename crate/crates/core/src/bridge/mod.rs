//! SOAP 1.1 document/literal envelopes to and from compact JSON, through a
//! canonical [`TaskEnvelope`].

mod json;
mod soap;
pub mod xml;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use json::{canonical_to_json, json_to_canonical};
pub use soap::{ack_envelope, fault_envelope, parse_envelope, Fault, SoapEnvelope};
pub use xml::XmlElement;

use crate::value::{parse_datetime, Map, Value};
use crate::wsdl::{ElementDecl, Primitive, WsdlDescription, XsdType};

pub const SOAP11_NS: &str = "http://schemas.xmlsoap.org/soap/envelope/";
pub const SOAP12_NS: &str = "http://www.w3.org/2003/05/soap-envelope";
pub const MUIT_NS: &str = "urn:muit:bridge";
pub const WSA_NS: &str = "http://www.w3.org/2005/08/addressing";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Request,
    Response,
}

/// Pivot form shared by both wire formats.
///
/// A SOAP request without a `CorrelationId` header yields an empty
/// `correlation_id`; the engine stamps one before the envelope goes anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEnvelope {
    pub operation: String,
    pub correlation_id: String,
    pub payload: Value,
    pub direction: Direction,
    /// Callback address of an asynchronous caller. Not part of the JSON form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<String>,
}

impl TaskEnvelope {
    pub fn request(operation: &str, correlation_id: &str, payload: Map) -> Self {
        TaskEnvelope {
            operation: operation.into(),
            correlation_id: correlation_id.into(),
            payload: Value::Map(payload),
            direction: Direction::Request,
            reply_to: None,
        }
    }

    pub fn response(operation: &str, correlation_id: &str, payload: Map) -> Self {
        TaskEnvelope { direction: Direction::Response, ..TaskEnvelope::request(operation, correlation_id, payload) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BridgeError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("not a SOAP 1.1 envelope")]
    NotSoap11,
    #[error("SOAP body is missing")]
    MissingBody,
    #[error("SOAP body must contain exactly one element, found {0}")]
    BodyChildren(usize),
    #[error("rpc/encoded messages are not supported")]
    RpcEncoded,
    #[error("{path}: mixed content is not supported")]
    MixedContent { path: String },
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

fn schema_err<T>(path: &str, message: impl Into<String>) -> Result<T, BridgeError> {
    Err(BridgeError::Schema { path: if path.is_empty() { "/".into() } else { path.to_string() }, message: message.into() })
}

/// Transcoder for one deployed service. Without a WSDL it maps structure
/// only: leaves become strings and repeated siblings become arrays.
#[derive(Debug, Clone, Default)]
pub struct Codec {
    namespace: Option<String>,
    wsdl: Option<Arc<WsdlDescription>>,
}

impl Codec {
    pub fn schemaless(namespace: Option<&str>) -> Self {
        Codec { namespace: namespace.map(str::to_string), wsdl: None }
    }

    pub fn from_wsdl(desc: WsdlDescription) -> Self {
        let ns = desc.schema.target_namespace.clone();
        Codec { namespace: Some(ns), wsdl: Some(Arc::new(desc)) }
    }

    pub fn wsdl(&self) -> Option<&WsdlDescription> {
        self.wsdl.as_deref()
    }

    pub fn namespace(&self) -> Option<&str> {
        self.namespace.as_deref()
    }

    /// Body element name for an operation in a direction.
    pub fn element_name(&self, operation: &str, dir: Direction) -> String {
        let from_wsdl = self.wsdl().and_then(|w| {
            let op = w.operation(operation)?;
            let msg = match dir {
                Direction::Request => Some(&op.input),
                Direction::Response => op.output.as_ref(),
            }?;
            w.message(msg).map(|m| m.element.clone())
        });
        from_wsdl.unwrap_or_else(|| match dir {
            Direction::Request => operation.to_string(),
            Direction::Response => format!("{operation}Response"),
        })
    }

    fn classify(&self, element: &str) -> (String, Direction) {
        if let Some(w) = self.wsdl() {
            for op in &w.operations {
                if w.message(&op.input).is_some_and(|m| m.element == element) {
                    return (op.name.clone(), Direction::Request);
                }
                if op.output.as_deref().and_then(|o| w.message(o)).is_some_and(|m| m.element == element) {
                    return (op.name.clone(), Direction::Response);
                }
            }
        }
        match element.strip_suffix("Response") {
            Some(op) if !op.is_empty() => (op.to_string(), Direction::Response),
            _ => (element.to_string(), Direction::Request),
        }
    }

    fn decl(&self, element: &str) -> Option<(&WsdlDescription, &ElementDecl)> {
        let w = self.wsdl()?;
        w.schema.element(element).map(|d| (w, d))
    }

    pub fn soap_to_canonical(&self, env: &SoapEnvelope) -> Result<TaskEnvelope, BridgeError> {
        let body = &env.body;
        let (operation, direction) = self.classify(&body.name);
        let payload = match self.decl(&body.name) {
            Some((w, d)) => typed_value(w, d, body, "")?,
            None => untyped_value(body, "")?,
        };
        let payload = match payload {
            Value::Str(s) if s.is_empty() => Value::Map(Map::new()),
            Value::Null => Value::Map(Map::new()),
            v @ Value::Map(_) => v,
            other => Value::from([("value", other)]),
        };
        let correlation_id = env.correlation_id().unwrap_or_default().to_string();
        Ok(TaskEnvelope { operation, correlation_id, payload, direction, reply_to: env.callback_address() })
    }

    pub fn canonical_to_soap(&self, t: &TaskEnvelope) -> Result<SoapEnvelope, BridgeError> {
        let name = self.element_name(&t.operation, t.direction);
        let ns = self.namespace.as_deref();
        let body = match self.decl(&name) {
            Some((w, d)) => typed_element(w, d, &t.payload, ns, "")?,
            None => untyped_element(&name, &t.payload, ns, "")?,
        };
        let mut headers = Vec::new();
        if !t.correlation_id.is_empty() {
            headers.push(XmlElement::leaf(Some(MUIT_NS), "CorrelationId", t.correlation_id.clone()));
        }
        if let Some(addr) = &t.reply_to {
            headers.push(XmlElement::new(Some(WSA_NS), "ReplyTo").with_child(XmlElement::leaf(Some(WSA_NS), "Address", addr.clone())));
        }
        Ok(SoapEnvelope { headers, body })
    }
}

fn join(path: &str, key: &str) -> String {
    format!("{path}/{key}")
}

/// Structural mapping of an element to a value.
fn untyped_value(el: &XmlElement, path: &str) -> Result<Value, BridgeError> {
    if el.nil {
        return Ok(Value::Null);
    }
    if el.children.is_empty() && el.attrs.is_empty() {
        return Ok(Value::Str(el.text.clone()));
    }
    if !el.children.is_empty() && !el.text.trim().is_empty() {
        return Err(BridgeError::MixedContent { path: path.to_string() });
    }
    let mut map = Map::new();
    for (k, v) in &el.attrs {
        map.insert(format!("@{k}"), Value::Str(v.clone()));
    }
    if el.children.is_empty() && !el.text.is_empty() {
        map.insert("#text".into(), Value::Str(el.text.clone()));
    }
    for c in &el.children {
        let v = untyped_value(c, &join(path, &c.name))?;
        match map.get_mut(&c.name) {
            Some(Value::List(items)) => items.push(v),
            Some(prev) => {
                let first = std::mem::take(prev);
                *prev = Value::List(vec![first, v]);
            }
            None => {
                map.insert(c.name.clone(), v);
            }
        }
    }
    Ok(Value::Map(map))
}

fn scalar_text(v: &Value, path: &str) -> Result<String, BridgeError> {
    match v {
        Value::Str(s) => Ok(s.clone()),
        Value::Int(i) => Ok(i.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => schema_err(path, format!("expected a scalar, found {}", other.type_name())),
    }
}

fn untyped_element(name: &str, v: &Value, ns: Option<&str>, path: &str) -> Result<XmlElement, BridgeError> {
    let mut el = XmlElement::new(ns, name);
    match v {
        Value::Null => el.nil = true,
        Value::Map(m) => {
            for (k, child) in m {
                let p = join(path, k);
                if let Some(attr) = k.strip_prefix('@') {
                    el.attrs.push((attr.to_string(), scalar_text(child, &p)?));
                } else if k == "#text" {
                    el.text = scalar_text(child, &p)?;
                } else if let Value::List(items) = child {
                    for (i, item) in items.iter().enumerate() {
                        if matches!(item, Value::List(_)) {
                            return schema_err(&format!("{p}/{i}"), "nested arrays have no XML form");
                        }
                        el.children.push(untyped_element(k, item, ns, &format!("{p}/{i}"))?);
                    }
                } else {
                    el.children.push(untyped_element(k, child, ns, &p)?);
                }
            }
        }
        Value::List(_) => return schema_err(path, "an array must be the value of a named field"),
        scalar => el.text = scalar_text(scalar, path)?,
    }
    Ok(el)
}

fn typed_value(w: &WsdlDescription, d: &ElementDecl, el: &XmlElement, path: &str) -> Result<Value, BridgeError> {
    if el.nil {
        return Ok(Value::Null);
    }
    match &d.ty {
        XsdType::Simple(p) => {
            if !el.children.is_empty() {
                return schema_err(path, format!("{} has child elements", p.xsd_name()));
            }
            simple_value(p, &el.text, path)
        }
        XsdType::Complex(idx) => {
            if !el.text.trim().is_empty() {
                return Err(BridgeError::MixedContent { path: path.to_string() });
            }
            let ct = w.schema.complex(*idx);
            let mut map = Map::new();
            for (k, v) in &el.attrs {
                map.insert(format!("@{k}"), Value::Str(v.clone()));
            }
            for c in &el.children {
                if !ct.fields.iter().any(|f| f.name == c.name) {
                    return schema_err(&join(path, &c.name), "unknown element");
                }
            }
            for f in &ct.fields {
                let p = join(path, &f.name);
                let found: Vec<&XmlElement> = el.children.iter().filter(|c| c.name == f.name).collect();
                if f.repeated {
                    let items = found.iter().enumerate().map(|(i, c)| typed_value(w, f, c, &format!("{p}/{i}"))).collect::<Result<_, _>>()?;
                    if !found.is_empty() {
                        map.insert(f.name.clone(), Value::List(items));
                    }
                } else {
                    match found.as_slice() {
                        [] => {}
                        [one] => {
                            map.insert(f.name.clone(), typed_value(w, f, one, &p)?);
                        }
                        _ => return schema_err(&p, "element repeated but not declared repeatable"),
                    }
                }
            }
            Ok(Value::Map(map))
        }
    }
}

fn simple_value(p: &Primitive, text: &str, path: &str) -> Result<Value, BridgeError> {
    Ok(match p {
        Primitive::Int | Primitive::Long => match text.trim().parse::<i64>() {
            Ok(i) => Value::Int(i),
            Err(_) => return schema_err(path, format!("`{text}` is not an {}", p.xsd_name())),
        },
        Primitive::Boolean => match text.trim() {
            "true" | "1" => Value::Bool(true),
            "false" | "0" => Value::Bool(false),
            _ => return schema_err(path, format!("`{text}` is not an xs:boolean")),
        },
        _ => Value::Str(text.to_string()),
    })
}

fn typed_element(w: &WsdlDescription, d: &ElementDecl, v: &Value, ns: Option<&str>, path: &str) -> Result<XmlElement, BridgeError> {
    let mut el = XmlElement::new(ns, &d.name);
    if v.is_null() {
        el.nil = true;
        return Ok(el);
    }
    match &d.ty {
        XsdType::Simple(p) => {
            el.text = match (p, v) {
                (Primitive::Int | Primitive::Long, Value::Int(i)) => i.to_string(),
                (Primitive::Boolean, Value::Bool(b)) => b.to_string(),
                (Primitive::DateTime | Primitive::Date, Value::Str(s)) if parse_datetime(s).is_some() => s.clone(),
                (Primitive::String | Primitive::Other(_), Value::Str(s)) => s.clone(),
                _ => return schema_err(path, format!("expected {}, found {}", p.xsd_name(), v.type_name())),
            };
        }
        XsdType::Complex(idx) => {
            let Value::Map(m) = v else {
                return schema_err(path, format!("expected an object, found {}", v.type_name()));
            };
            let ct = w.schema.complex(*idx);
            for (k, child) in m {
                if let Some(attr) = k.strip_prefix('@') {
                    el.attrs.push((attr.to_string(), scalar_text(child, &join(path, k))?));
                } else if !ct.fields.iter().any(|f| &f.name == k) {
                    return schema_err(&join(path, k), "unknown field");
                }
            }
            for f in &ct.fields {
                let p = join(path, &f.name);
                match (m.get(&f.name), f.repeated) {
                    (None, _) => {}
                    (Some(Value::List(items)), true) => {
                        for (i, item) in items.iter().enumerate() {
                            el.children.push(typed_element(w, f, item, ns, &format!("{p}/{i}"))?);
                        }
                    }
                    (Some(Value::List(_)), false) => return schema_err(&p, "field is not repeatable"),
                    (Some(one), _) => el.children.push(typed_element(w, f, one, ns, &p)?),
                }
            }
        }
    }
    Ok(el)
}
