//! Turns a device's result body into the response envelope for the caller.
//!
//! Accepted bodies:
//! - `{"op": "delayTask", "args": [..]}`: positional arguments, as the page
//!   runtime posts them when a bound operation fires;
//! - `{"op": .., "cid": .., "data": {..}}`: the bridge's compact JSON form;
//! - any other object: named fields.
//!
//! Named fields and arguments override the request's parameters. A field
//! that is not a parameter may name a property of an entity parameter
//! (`{"status": "approved"}` sets `t.status`). An entity argument given as a
//! string is a reference to the instance's own entity and leaves it as is.

use muit_core::bridge::{BridgeError, Codec, Direction, TaskEnvelope};
use muit_core::dsl::eval::Interpreter;
use muit_core::value::{Map, Value};
use muit_core::wsdl::XsdType;

use crate::deploy::Deployment;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ResultError {
    pub path: String,
    pub message: String,
}

fn invalid<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T, ResultError> {
    Err(ResultError { path: path.into(), message: message.into() })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResultBody {
    Positional { op: Option<String>, args: Vec<Value> },
    Named { op: Option<String>, fields: Map },
}

pub fn parse_result(body: &[u8]) -> Result<ResultBody, ResultError> {
    let v: serde_json::Value = match serde_json::from_slice(body) {
        Ok(v) => v,
        Err(e) => return invalid("/", format!("malformed JSON: {e}")),
    };
    parse_result_value(&v)
}

pub fn parse_result_value(v: &serde_json::Value) -> Result<ResultBody, ResultError> {
    let Some(obj) = v.as_object() else {
        return invalid("/", "expected an object");
    };
    let op = match obj.get("op") {
        None => None,
        Some(serde_json::Value::String(s)) => Some(s.clone()),
        Some(_) => return invalid("/op", "expected a string"),
    };
    let conv = |v: &serde_json::Value, path: &str| Value::from_json_at(v, path).map_err(|e| ResultError { path: e.path, message: e.message });
    if let Some(args) = obj.get("args") {
        let Some(items) = args.as_array() else {
            return invalid("/args", "expected an array");
        };
        let args = items.iter().enumerate().map(|(i, a)| conv(a, &format!("/args/{i}"))).collect::<Result<_, _>>()?;
        return Ok(ResultBody::Positional { op, args });
    }
    if op.is_some() {
        if let Some(data) = obj.get("data") {
            let Value::Map(fields) = conv(data, "/data")? else {
                return invalid("/data", "expected an object");
            };
            return Ok(ResultBody::Named { op, fields });
        }
    }
    let mut fields = Map::new();
    for (k, x) in obj {
        if k != "op" {
            fields.insert(k.clone(), conv(x, &format!("/{k}"))?);
        }
    }
    Ok(ResultBody::Named { op, fields })
}

fn bridge_err(e: BridgeError) -> ResultError {
    match e {
        BridgeError::Schema { path, message } => ResultError { path, message },
        other => ResultError { path: "/".into(), message: other.to_string() },
    }
}

struct Params {
    names: Vec<String>,
    /// Entity type of each parameter, if it has one.
    entities: Vec<Option<String>>,
}

fn params_of(dep: &Deployment, request: &TaskEnvelope) -> Params {
    match dep.module.operation(&request.operation) {
        Some(op) => Params {
            names: op.params.iter().map(|p| p.name.clone()).collect(),
            entities: op.params.iter().map(|p| dep.module.entity(&p.ty.name).map(|e| e.name.clone())).collect(),
        },
        None => {
            let names: Vec<String> = request.payload.as_map().map(|m| m.keys().cloned().collect()).unwrap_or_default();
            let entities = names.iter().map(|_| None).collect();
            Params { names, entities }
        }
    }
}

fn set_arg(merged: &mut Map, name: &str, entity: Option<&str>, v: Value, path: &str) -> Result<(), ResultError> {
    match (entity, v) {
        (Some(_), Value::Str(_)) => Ok(()),
        (Some(_), Value::Map(fields)) => {
            let slot = merged.entry(name.to_string()).or_insert_with(|| Value::Map(Map::new()));
            match slot.as_map_mut() {
                Some(m) => {
                    for (k, x) in fields {
                        m.insert(k, x);
                    }
                    Ok(())
                }
                None => {
                    *slot = Value::Map(fields);
                    Ok(())
                }
            }
        }
        (Some(e), Value::Null) => invalid(path, format!("expected a {e}, found null")),
        (Some(e), other) => invalid(path, format!("expected a {e}, found {}", other.type_name())),
        (None, v) => {
            merged.insert(name.to_string(), v);
            Ok(())
        }
    }
}

/// Request parameters with the device's result applied.
pub fn merge(dep: &Deployment, request: &TaskEnvelope, body: ResultBody) -> Result<Map, ResultError> {
    let params = params_of(dep, request);
    let mut merged = request.payload.as_map().cloned().unwrap_or_default();
    let op = match &body {
        ResultBody::Positional { op, .. } | ResultBody::Named { op, .. } => op.clone(),
    };
    if let Some(op) = op {
        if op != request.operation {
            return invalid("/op", format!("result is for `{op}` but the task runs `{}`", request.operation));
        }
    }
    match body {
        ResultBody::Positional { args, .. } => {
            if args.len() > params.names.len() {
                return invalid("/args", format!("`{}` takes {} argument(s), got {}", request.operation, params.names.len(), args.len()));
            }
            for (i, a) in args.into_iter().enumerate() {
                set_arg(&mut merged, &params.names[i], params.entities[i].as_deref(), a, &format!("/args/{i}"))?;
            }
        }
        ResultBody::Named { fields, .. } => {
            for (k, v) in fields {
                let path = format!("/{k}");
                if let Some(i) = params.names.iter().position(|n| *n == k) {
                    set_arg(&mut merged, &k, params.entities[i].as_deref(), v, &path)?;
                    continue;
                }
                let owner = params.names.iter().zip(&params.entities).find(|(n, e)| {
                    let declared = e.as_deref().and_then(|e| dep.module.entity(e)).is_some_and(|e| e.property(&k).is_some());
                    declared || merged.get(*n).and_then(Value::as_map).is_some_and(|m| m.contains_key(&k))
                });
                match owner {
                    Some((n, _)) => {
                        let slot = merged.entry(n.clone()).or_insert_with(|| Value::Map(Map::new()));
                        match slot.as_map_mut() {
                            Some(m) => {
                                m.insert(k, v);
                            }
                            None => return invalid(path, format!("`{n}` is not an object")),
                        }
                    }
                    None => return invalid(path, "unknown field"),
                }
            }
        }
    }
    Ok(merged)
}

/// `/days/x` becomes `/args/1/x` when `days` is the second parameter.
fn arg_path(path: &str, names: &[String]) -> String {
    let rest = path.strip_prefix('/').unwrap_or(path);
    let (head, tail) = rest.split_once('/').map_or((rest, ""), |(h, t)| (h, t));
    match names.iter().position(|n| n == head) {
        Some(i) if tail.is_empty() => format!("/args/{i}"),
        Some(i) => format!("/args/{i}/{tail}"),
        None => path.to_string(),
    }
}

fn response_fields(codec: &Codec, operation: &str) -> Option<Vec<String>> {
    let w = codec.wsdl()?;
    let decl = w.schema.element(&codec.element_name(operation, Direction::Response))?;
    match decl.ty {
        XsdType::Complex(i) => Some(w.schema.complex(i).fields.iter().map(|f| f.name.clone()).collect()),
        XsdType::Simple(_) => None,
    }
}

/// Runs the task's operation over the merged parameters and shapes the
/// response envelope. `now` is the interpreter's `DateTime.now()`.
pub fn respond(dep: &Deployment, request: &TaskEnvelope, body: ResultBody, now: &str) -> Result<TaskEnvelope, ResultError> {
    let positional = matches!(body, ResultBody::Positional { .. });
    let merged = merge(dep, request, body)?;
    let op = &request.operation;
    dep.codec.canonical_to_soap(&TaskEnvelope::request(op, &request.correlation_id, merged.clone())).map_err(|e| {
        let e = bridge_err(e);
        if positional {
            ResultError { path: arg_path(&e.path, &params_of(dep, request).names), ..e }
        } else {
            e
        }
    })?;
    let (params, ret) = match dep.module.operation(op) {
        Some(decl) => {
            let args = decl.params.iter().map(|p| merged.get(&p.name).cloned().unwrap_or_default()).collect();
            let mut it = Interpreter::new(&dep.module).with_now(now);
            let out = it.call(op, args).map_err(|e| ResultError { path: "/".into(), message: e.to_string() })?;
            (out.params, out.ret)
        }
        None => (merged, Value::Null),
    };
    let payload = match response_fields(&dep.codec, op) {
        Some(fields) => {
            let mut out = Map::new();
            let mut ret = Some(ret).filter(|r| !r.is_null());
            for f in fields {
                if let Some(v) = params.get(&f) {
                    out.insert(f, v.clone());
                } else if let Some(r) = ret.take() {
                    out.insert(f, r);
                }
            }
            out
        }
        None => {
            let mut out = params;
            if !ret.is_null() {
                out.insert("return".into(), ret);
            }
            out
        }
    };
    let response = TaskEnvelope::response(op, &request.correlation_id, payload);
    dep.codec.canonical_to_soap(&response).map_err(bridge_err)?;
    Ok(response)
}
