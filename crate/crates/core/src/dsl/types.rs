//! Semantic types and the operator typing table.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{BinOp, TypeRef, UnOp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Type {
    String,
    Bool,
    Int,
    DateTime,
    Entity(String),
    List(Box<Type>),
    Callback,
    Screen,
    /// Result of untyped builtins (`httpRequest`, `select`, ...). Compatible
    /// with everything.
    Any,
    Void,
    Null,
    /// An entity name in value position, e.g. the `Task` in `Task.from(x)`.
    EntityStatic(String),
    Widget(String),
    Touch(String),
    /// A builtin namespace such as `history` or `screen.window`.
    Builtin(String),
    Function(Box<FnSig>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnSig {
    pub name: String,
    pub params: Vec<Type>,
    /// Extra trailing arguments of any type are accepted.
    pub variadic: bool,
    pub ret: Type,
}

impl FnSig {
    pub fn new(name: impl Into<String>, params: Vec<Type>, ret: Type) -> Self {
        FnSig { name: name.into(), params, variadic: false, ret }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::String => f.write_str("String"),
            Type::Bool => f.write_str("boolean"),
            Type::Int => f.write_str("int"),
            Type::DateTime => f.write_str("DateTime"),
            Type::Entity(n) => f.write_str(n),
            Type::List(t) => write!(f, "list<{t}>"),
            Type::Callback => f.write_str("Callback"),
            Type::Screen => f.write_str("Screen"),
            Type::Any => f.write_str("any"),
            Type::Void => f.write_str("void"),
            Type::Null => f.write_str("null"),
            Type::EntityStatic(n) => write!(f, "entity {n}"),
            Type::Widget(n) => write!(f, "widget {n}"),
            Type::Touch(n) => write!(f, "touch {n}"),
            Type::Builtin(n) => f.write_str(n),
            Type::Function(sig) => write!(f, "function {}", sig.name),
        }
    }
}

impl Type {
    /// Resolves a written type. `is_entity` decides whether an unknown
    /// capitalised name names a declared entity.
    pub fn from_ref(r: &TypeRef, is_entity: &dyn Fn(&str) -> bool) -> Result<Type, String> {
        let base = match r.name.as_str() {
            "String" => Type::String,
            "boolean" => Type::Bool,
            "int" => Type::Int,
            "DateTime" => Type::DateTime,
            "Callback" => Type::Callback,
            "Screen" => Type::Screen,
            "list" => {
                let inner = r.arg.as_ref().ok_or_else(|| "`list` needs an element type, e.g. list<String>".to_string())?;
                return Ok(Type::List(Box::new(Type::from_ref(inner, is_entity)?)));
            }
            name if is_entity(name) => Type::Entity(name.to_string()),
            name => return Err(format!("unknown type `{name}`")),
        };
        if r.arg.is_some() {
            return Err(format!("type `{}` takes no type argument", r.name));
        }
        Ok(base)
    }

    pub fn is_any(&self) -> bool {
        matches!(self, Type::Any)
    }

    /// Types a value can be stored as.
    pub fn is_value(&self) -> bool {
        matches!(
            self,
            Type::String
                | Type::Bool
                | Type::Int
                | Type::DateTime
                | Type::Entity(_)
                | Type::List(_)
                | Type::Callback
                | Type::Screen
                | Type::Any
                | Type::Null
        )
    }
}

/// Whether a value of type `actual` may flow where `expected` is required.
pub fn compatible(expected: &Type, actual: &Type) -> bool {
    match (expected, actual) {
        (Type::Any, _) | (_, Type::Any) => true,
        (Type::String | Type::DateTime | Type::Entity(_) | Type::List(_) | Type::Callback | Type::Screen, Type::Null) => true,
        (Type::List(a), Type::List(b)) => compatible(a, b),
        (Type::Callback, Type::Function(_)) => true,
        (a, b) => a == b,
    }
}

/// Argument passing additionally accepts a String key for an entity.
pub fn arg_compatible(expected: &Type, actual: &Type) -> bool {
    compatible(expected, actual) || matches!((expected, actual), (Type::Entity(_), Type::String))
}

/// Result type of `l op r`, or `None` when the operator is undefined for
/// the operand types.
pub fn binary_type(op: BinOp, l: &Type, r: &Type) -> Option<Type> {
    use BinOp::*;
    use Type::*;
    let any = l.is_any() || r.is_any();
    match op {
        Add => match (l, r) {
            (Int, Int) => Some(Int),
            (String, String) | (String, Int) | (Int, String) => Some(String),
            (String, Any) | (Any, String) => Some(String),
            _ if any && [l, r].iter().all(|t| matches!(t, Int | String | Any)) => Some(Any),
            _ => None,
        },
        Sub | Mul | Rem => match (l, r) {
            (Int | Any, Int | Any) => Some(Int),
            _ => None,
        },
        Eq | Ne => {
            if any || l == r || compatible(l, r) && compatible(r, l) {
                Some(Bool)
            } else {
                None
            }
        }
        Lt | Gt | Le | Ge => match (l, r) {
            (Int, Int) | (DateTime, DateTime) | (String, String) => Some(Bool),
            (Int | DateTime | String | Any, Any) | (Any, Int | DateTime | String) => Some(Bool),
            _ => None,
        },
        And | Or => match (l, r) {
            (Bool | Any, Bool | Any) => Some(Bool),
            _ => None,
        },
        In => match r {
            List(elem) if compatible(elem, l) || *l == String => Some(Bool),
            Any if l.is_value() => Some(Bool),
            _ => None,
        },
    }
}

pub fn unary_type(op: UnOp, t: &Type) -> Option<Type> {
    match (op, t) {
        (UnOp::Not, Type::Bool | Type::Any) => Some(Type::Bool),
        (UnOp::Neg, Type::Int | Type::Any) => Some(Type::Int),
        _ => None,
    }
}

pub const WIDGET_KINDS: &[&str] = &["calendar", "textInput", "button", "list", "map", "weather"];
pub const TOUCH_KINDS: &[&str] = &["swipe", "tap", "pinch", "press"];

/// Roots that may appear in a rule condition.
pub const CONTEXT_ROOTS: &[&str] = &["screen", "network", "location"];

/// Builtin namespaces visible in every scope.
pub const NAMESPACES: &[&str] = &["history", "option", "screen", "network", "location", "DateTime"];

/// Free builtin functions. `navigate` is typed specially by the checker.
pub fn builtin_function(name: &str) -> Option<FnSig> {
    Some(match name {
        "httpRequest" => FnSig::new(name, vec![Type::String], Type::Any),
        "add" => FnSig::new(name, vec![Type::Any], Type::Void),
        "exist" => FnSig::new(name, vec![Type::Any], Type::Bool),
        "select" => FnSig::new(name, vec![Type::Any], Type::Any),
        "invoke" => FnSig { variadic: true, ..FnSig::new(name, vec![Type::String], Type::Any) },
        "navigate" => FnSig { variadic: true, ..FnSig::new(name, vec![Type::Screen], Type::Void) },
        _ => return None,
    })
}

/// Members of builtin namespaces.
pub fn namespace_member(ns: &str, field: &str) -> Option<Type> {
    let f = |name: &str, params: Vec<Type>, ret: Type| Some(Type::Function(Box::new(FnSig::new(name, params, ret))));
    match (ns, field) {
        ("screen", "deviceos" | "devicetype") => Some(Type::String),
        ("screen", "window") => Some(Type::Builtin("screen.window".into())),
        ("screen", "device") => Some(Type::Builtin("screen.device".into())),
        ("screen.window", "innerWidth" | "innerHeight") => Some(Type::Int),
        ("screen.device", "orientation") => Some(Type::String),
        ("network", "online") => Some(Type::Bool),
        ("location", "city" | "country") => Some(Type::String),
        ("option", "value") => Some(Type::String),
        ("history", "go") => f("history.go", vec![Type::Int], Type::Void),
        ("history", "back") => f("history.back", vec![Type::Int], Type::Void),
        ("DateTime", "create") => f("DateTime.create", vec![Type::Int, Type::Int, Type::Int], Type::DateTime),
        ("DateTime", "now") => f("DateTime.now", vec![], Type::DateTime),
        _ => None,
    }
}

/// Methods on DateTime values.
pub fn datetime_method(field: &str) -> Option<Type> {
    match field {
        "getYear" | "getMonth" | "getDate" => {
            Some(Type::Function(Box::new(FnSig::new(format!("DateTime.{field}"), vec![], Type::Int))))
        }
        _ => None,
    }
}

/// Static constructors available on every entity.
pub fn entity_static(entity: &str, field: &str) -> Option<Type> {
    match field {
        "fromTaskList" | "from" => Some(Type::Function(Box::new(FnSig::new(
            format!("{entity}.{field}"),
            vec![Type::Any],
            Type::Entity(entity.to_string()),
        )))),
        _ => None,
    }
}
