use super::*;

fn write_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings serialize"));
}

/// Compact form with lexicographically ordered keys.
fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => out.push_str(&i.to_string()),
        Value::Str(s) => write_str(out, s),
        Value::List(items) => {
            out.push('[');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, x);
            }
            out.push(']');
        }
        Value::Map(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_str(out, k);
                out.push(':');
                write_value(out, &m[k]);
            }
            out.push('}');
        }
    }
}

/// `{"op":…,"cid":…,"data":…}`; responses carry `"dir":"response"` before
/// `data`.
pub fn canonical_to_json(t: &TaskEnvelope) -> Vec<u8> {
    let mut out = String::from("{\"op\":");
    write_str(&mut out, &t.operation);
    out.push_str(",\"cid\":");
    write_str(&mut out, &t.correlation_id);
    if t.direction == Direction::Response {
        out.push_str(",\"dir\":\"response\"");
    }
    out.push_str(",\"data\":");
    write_value(&mut out, &t.payload);
    out.push('}');
    out.into_bytes()
}

pub fn json_to_canonical(bytes: &[u8]) -> Result<TaskEnvelope, BridgeError> {
    let v: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| BridgeError::Json(e.to_string()))?;
    let serde_json::Value::Object(o) = v else {
        return schema_err("", "expected an object");
    };
    for k in o.keys() {
        if !matches!(k.as_str(), "op" | "cid" | "dir" | "data") {
            return schema_err(&format!("/{k}"), "unknown key");
        }
    }
    let text = |k: &str| match o.get(k) {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        _ => schema_err(&format!("/{k}"), "expected a string"),
    };
    let operation = text("op")?;
    if operation.is_empty() {
        return schema_err("/op", "empty operation");
    }
    let correlation_id = text("cid")?;
    let direction = match o.get("dir") {
        None => Direction::Request,
        Some(serde_json::Value::String(s)) if s == "response" => Direction::Response,
        Some(serde_json::Value::String(s)) if s == "request" => Direction::Request,
        Some(_) => return schema_err("/dir", "expected \"request\" or \"response\""),
    };
    if direction == Direction::Request && correlation_id.is_empty() {
        return schema_err("/cid", "requests need a correlation id");
    }
    let data = o.get("data").ok_or_else(|| BridgeError::Schema { path: "/data".into(), message: "missing".into() })?;
    if !data.is_object() {
        return schema_err("/data", "expected an object");
    }
    let payload = Value::from_json_at(data, "/data").map_err(|e| BridgeError::Schema { path: e.path, message: e.message })?;
    Ok(TaskEnvelope { operation, correlation_id, payload, direction, reply_to: None })
}
