//! Tree-walking interpreter for operation bodies and rule conditions.
//!
//! The engine runs the module's operation on submitted results to compute
//! the response payload. Side effects that need the outside world (service
//! invocations, navigation) are recorded as [`Effect`]s instead of
//! performed.

use std::cmp::Ordering;

use chrono::Datelike;

use super::ast::*;
use super::check::widget_member_names;
use super::types::NAMESPACES;
use crate::value::{normalize_date, parse_datetime, Map, Value};

const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    HttpRequest { url: String },
    Invoke { operation: String, args: Vec<Value> },
    Navigate { screen: String, args: Vec<Value> },
    History { delta: i64 },
    Add(Value),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("`{name}` expects {expected} argument(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("operation call depth exceeds {MAX_CALL_DEPTH}")]
    Recursion,
    #[error("{0}")]
    Runtime(String),
}

fn rt<T>(msg: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError::Runtime(msg.into()))
}

/// Outcome of running an operation.
#[derive(Debug, Clone, PartialEq)]
pub struct CallResult {
    pub ret: Value,
    /// Parameter values after the body ran, so callers observe mutations.
    pub params: Map,
}

enum Flow {
    Normal,
    Return(Value),
}

pub struct Interpreter<'m> {
    module: &'m DslModule,
    globals: Map,
    /// Known entity instances; a String passed for an entity parameter is
    /// resolved against these by key.
    pub instances: Vec<Value>,
    pub effects: Vec<Effect>,
    /// Values for context roots such as `screen` or `network`.
    pub context: Map,
    now: String,
    scopes: Vec<Map>,
    depth: usize,
}

/// The key property of an entity: its first String property.
pub fn entity_key(module: &DslModule, entity: &str) -> Option<String> {
    module.entity(entity)?.properties.iter().find(|p| p.ty.name == "String" && p.ty.arg.is_none()).map(|p| p.name.clone())
}

impl<'m> Interpreter<'m> {
    /// Creates an interpreter and evaluates module variable initialisers.
    /// Initialisers that fail leave the variable null.
    pub fn new(module: &'m DslModule) -> Self {
        let mut it = Interpreter {
            module,
            globals: Map::new(),
            instances: Vec::new(),
            effects: Vec::new(),
            context: Map::new(),
            now: "1970-01-01T00:00:00".into(),
            scopes: Vec::new(),
            depth: 0,
        };
        for v in &module.vars {
            let val = match &v.init {
                Some(e) => it.eval(e).unwrap_or(Value::Null),
                None => Value::Null,
            };
            it.globals.insert(v.name.clone(), val);
        }
        it
    }

    pub fn with_now(mut self, now: impl Into<String>) -> Self {
        self.now = now.into();
        self
    }

    pub fn global(&self, name: &str) -> Option<&Value> {
        self.globals.get(name)
    }

    pub fn set_global(&mut self, name: &str, v: Value) {
        self.globals.insert(name.to_string(), v);
    }

    /// Default value of every property of `entity`.
    pub fn entity_defaults(&mut self, entity: &str) -> Map {
        let mut out = Map::new();
        if let Some(e) = self.module.entity(entity) {
            for p in &e.properties {
                let v = match &p.default {
                    Some(d) => self.eval(d).unwrap_or(Value::Null),
                    None => Value::Null,
                };
                out.insert(p.name.clone(), v);
            }
        }
        out
    }

    pub fn call(&mut self, name: &str, args: Vec<Value>) -> Result<CallResult, EvalError> {
        let module = self.module;
        let op = module.operation(name).ok_or_else(|| EvalError::UnknownOperation(name.to_string()))?;
        if args.len() != op.params.len() {
            return Err(EvalError::Arity { name: name.to_string(), expected: op.params.len(), got: args.len() });
        }
        if self.depth >= MAX_CALL_DEPTH {
            return Err(EvalError::Recursion);
        }
        let mut frame = Map::new();
        for (p, a) in op.params.iter().zip(args) {
            let v = match a {
                Value::Str(key) if module.entity(&p.ty.name).is_some() => self.resolve_entity(&p.ty.name, key),
                other => other,
            };
            frame.insert(p.name.clone(), v);
        }
        let saved = std::mem::take(&mut self.scopes);
        self.scopes.push(frame);
        self.depth += 1;
        let flow = self.block_in_place(&op.body);
        self.depth -= 1;
        let frame = self.scopes.drain(..).next().unwrap_or_default();
        self.scopes = saved;
        let ret = match flow? {
            Flow::Return(v) => v,
            Flow::Normal => Value::Null,
        };
        let params = op.params.iter().map(|p| (p.name.clone(), frame.get(&p.name).cloned().unwrap_or_default())).collect();
        Ok(CallResult { ret, params })
    }

    fn resolve_entity(&self, entity: &str, key: String) -> Value {
        let key_field = entity_key(self.module, entity).unwrap_or_else(|| "id".into());
        self.instances
            .iter()
            .find(|v| v.as_map().and_then(|m| m.get(&key_field)).and_then(Value::as_str) == Some(key.as_str()))
            .cloned()
            .unwrap_or_else(|| Value::from([(key_field, Value::Str(key))]))
    }

    /// Evaluates a rule condition against a context snapshot whose keys are
    /// the context roots (`screen`, `network`, `location`).
    pub fn eval_condition(&mut self, cond: &Expr, snapshot: &Map) -> Result<bool, EvalError> {
        let saved = std::mem::replace(&mut self.context, snapshot.clone());
        let r = self.eval(cond);
        self.context = saved;
        match r? {
            Value::Bool(b) => Ok(b),
            other => rt(format!("condition evaluated to {}", other.type_name())),
        }
    }

    fn block_in_place(&mut self, stmts: &[Stmt]) -> Result<Flow, EvalError> {
        for s in stmts {
            if let Flow::Return(v) = self.stmt(s)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, EvalError> {
        self.scopes.push(Map::new());
        let r = self.block_in_place(stmts);
        self.scopes.pop();
        r
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, EvalError> {
        match &s.kind {
            StmtKind::Var { name, init } => {
                let v = match init {
                    Some(e) => self.eval(e)?,
                    None => Value::Null,
                };
                match self.scopes.last_mut() {
                    Some(scope) => {
                        scope.insert(name.clone(), v);
                    }
                    None => {
                        self.globals.insert(name.clone(), v);
                    }
                }
            }
            StmtKind::Assign { target, value } => {
                let v = self.eval(value)?;
                *self.place(target)? = v;
            }
            StmtKind::Foreach { var, iter, body } => {
                let items = match self.eval(iter)? {
                    Value::List(xs) => xs,
                    Value::Null => Vec::new(),
                    other => return rt(format!("foreach over {}", other.type_name())),
                };
                for x in items {
                    self.scopes.push(Map::from_iter([(var.clone(), x)]));
                    let flow = self.block_in_place(body);
                    self.scopes.pop();
                    if let Flow::Return(v) = flow? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
            StmtKind::If { branches, otherwise } => {
                for (cond, body) in branches {
                    match self.eval(cond)? {
                        Value::Bool(true) => return self.block(body),
                        Value::Bool(false) => {}
                        other => return rt(format!("if condition is {}", other.type_name())),
                    }
                }
                if let Some(body) = otherwise {
                    return self.block(body);
                }
            }
            StmtKind::Return(v) => {
                let v = match v {
                    Some(e) => self.eval(e)?,
                    None => Value::Null,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
        }
        Ok(Flow::Normal)
    }

    fn lookup_local(&self, name: &str) -> Option<&Value> {
        self.scopes.iter().rev().find_map(|s| s.get(name)).or_else(|| self.globals.get(name))
    }

    fn place(&mut self, target: &Expr) -> Result<&mut Value, EvalError> {
        match &target.kind {
            ExprKind::Var(name) => {
                if let Some(i) = self.scopes.iter().rposition(|s| s.contains_key(name)) {
                    return Ok(self.scopes[i].get_mut(name).expect("present"));
                }
                if self.globals.contains_key(name) {
                    return Ok(self.globals.get_mut(name).expect("present"));
                }
                rt(format!("cannot assign to `{name}`"))
            }
            ExprKind::Member { object, field } => {
                let obj = self.place(object)?;
                if obj.is_null() {
                    *obj = Value::Map(Map::new());
                }
                match obj {
                    Value::Map(m) => Ok(m.entry(field.clone()).or_insert(Value::Null)),
                    other => rt(format!("cannot set `{field}` on {}", other.type_name())),
                }
            }
            _ => rt("left side of `=` is not assignable"),
        }
    }

    fn is_static_root(&self, name: &str) -> bool {
        self.lookup_local(name).is_none() && (self.module.entity(name).is_some() || NAMESPACES.contains(&name))
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Value, EvalError> {
        Ok(match &e.kind {
            ExprKind::Str(s) => Value::Str(s.clone()),
            ExprKind::Int(v) => Value::Int(*v),
            ExprKind::DateTime(d) => Value::Str(d.clone()),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Null => Value::Null,
            ExprKind::Var(name) => self.var(name)?,
            ExprKind::Binary { op, lhs, rhs } => self.binary(*op, lhs, rhs)?,
            ExprKind::Unary { op, operand } => match (op, self.eval(operand)?) {
                (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                (UnOp::Neg, Value::Int(v)) => Value::Int(v.checked_neg().ok_or_else(|| EvalError::Runtime("integer overflow".into()))?),
                (op, v) => return rt(format!("operator {} undefined for {}", op.symbol(), v.type_name())),
            },
            ExprKind::Member { object, field } => {
                let obj = self.eval(object)?;
                match obj {
                    Value::Map(m) => m.get(field).cloned().unwrap_or(Value::Null),
                    Value::Null => Value::Null,
                    other => return rt(format!("{} has no member `{field}`", other.type_name())),
                }
            }
            ExprKind::Call { callee, args } => self.call_expr(callee, args)?,
            ExprKind::List(items) => Value::List(items.iter().map(|i| self.eval(i)).collect::<Result<_, _>>()?),
            // A block in value position is a deferred callback.
            ExprKind::Block(_) => Value::Str("<callback>".into()),
        })
    }

    fn var(&mut self, name: &str) -> Result<Value, EvalError> {
        if let Some(v) = self.lookup_local(name) {
            return Ok(v.clone());
        }
        if let Some(v) = self.context.get(name) {
            return Ok(v.clone());
        }
        let m = self.module;
        if let Some(w) = m.widget(name) {
            let members = widget_member_names(w)
                .into_iter()
                .map(|n| {
                    let v = self.globals.get(&n).cloned().unwrap_or_default();
                    (n, v)
                })
                .collect();
            return Ok(Value::Map(members));
        }
        if m.screen(name).is_some() || m.operation(name).is_some() || m.touch(name).is_some() {
            return Ok(Value::Str(name.to_string()));
        }
        if NAMESPACES.contains(&name) {
            return Ok(Value::Null);
        }
        rt(format!("unresolved name `{name}`"))
    }

    fn args(&mut self, args: &[Expr]) -> Result<Vec<Value>, EvalError> {
        args.iter().map(|a| self.eval(a)).collect()
    }

    fn call_expr(&mut self, callee: &Expr, args: &[Expr]) -> Result<Value, EvalError> {
        match &callee.kind {
            ExprKind::Var(name) if self.module.operation(name).is_some() => {
                let vals = self.args(args)?;
                let r = self.call(name, vals)?;
                // entity arguments passed by variable observe the callee's mutations
                let op = self.module.operation(name).expect("checked");
                for (a, p) in args.iter().zip(&op.params) {
                    if let (ExprKind::Var(_), Some(v @ Value::Map(_))) = (&a.kind, r.params.get(&p.name)) {
                        if let Ok(slot) = self.place(a) {
                            *slot = v.clone();
                        }
                    }
                }
                Ok(r.ret)
            }
            ExprKind::Var(name) if self.lookup_local(name).is_none() => {
                let vals = self.args(args)?;
                self.builtin(name, vals)
            }
            ExprKind::Member { object, field } => {
                if let ExprKind::Var(root) = &object.kind {
                    if self.is_static_root(root) {
                        let vals = self.args(args)?;
                        return self.static_call(root, field, vals);
                    }
                }
                let recv = self.eval(object)?;
                let vals = self.args(args)?;
                self.method(recv, field, vals)
            }
            _ => rt("expression is not callable"),
        }
    }

    fn builtin(&mut self, name: &str, args: Vec<Value>) -> Result<Value, EvalError> {
        let arity = |n: usize| -> Result<(), EvalError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(EvalError::Arity { name: name.to_string(), expected: n, got: args.len() })
            }
        };
        match name {
            "httpRequest" => {
                arity(1)?;
                self.effects.push(Effect::HttpRequest { url: args[0].to_string() });
                Ok(Value::Null)
            }
            "add" => {
                arity(1)?;
                self.instances.push(args[0].clone());
                self.effects.push(Effect::Add(args[0].clone()));
                Ok(Value::Null)
            }
            "exist" => {
                arity(1)?;
                Ok(Value::Bool(!args[0].is_null()))
            }
            "select" => {
                arity(1)?;
                Ok(args[0].clone())
            }
            "invoke" => {
                let mut it = args.into_iter();
                let operation = it.next().map(|v| v.to_string()).unwrap_or_default();
                self.effects.push(Effect::Invoke { operation, args: it.collect() });
                Ok(Value::Null)
            }
            "navigate" => {
                let mut it = args.into_iter();
                let screen = it.next().map(|v| v.to_string()).unwrap_or_default();
                self.effects.push(Effect::Navigate { screen, args: it.collect() });
                Ok(Value::Null)
            }
            other => rt(format!("`{other}` is not callable")),
        }
    }

    fn static_call(&mut self, root: &str, field: &str, args: Vec<Value>) -> Result<Value, EvalError> {
        let int = |v: &Value, what: &str| v.as_int().ok_or_else(|| EvalError::Runtime(format!("{what} expects int")));
        match (root, field) {
            ("history", "go" | "back") => {
                let delta = int(args.first().unwrap_or(&Value::Null), "history")?;
                self.effects.push(Effect::History { delta });
                Ok(Value::Null)
            }
            ("DateTime", "create") => {
                if args.len() != 3 {
                    return Err(EvalError::Arity { name: "DateTime.create".into(), expected: 3, got: args.len() });
                }
                let (y, m, d) = (int(&args[0], "DateTime.create")?, int(&args[1], "DateTime.create")?, int(&args[2], "DateTime.create")?);
                let date = normalize_date(y, m, d).ok_or_else(|| EvalError::Runtime("date out of range".into()))?;
                Ok(Value::Str(date.format("%Y-%m-%d").to_string()))
            }
            ("DateTime", "now") => Ok(Value::Str(self.now.clone())),
            (entity, "from" | "fromTaskList") if self.module.entity(entity).is_some() => {
                let v = args.into_iter().next().unwrap_or_default();
                Ok(match v {
                    Value::Map(m) => {
                        let mut base = self.entity_defaults(entity);
                        base.extend(m);
                        Value::Map(base)
                    }
                    Value::Str(key) => self.resolve_entity(entity, key),
                    other => other,
                })
            }
            _ => rt(format!("`{root}.{field}` is not callable")),
        }
    }

    fn method(&mut self, recv: Value, field: &str, args: Vec<Value>) -> Result<Value, EvalError> {
        if !args.is_empty() {
            return Err(EvalError::Arity { name: field.to_string(), expected: 0, got: args.len() });
        }
        let Some(dt) = recv.as_str().and_then(parse_datetime) else {
            return rt(format!("{} has no method `{field}`", recv.type_name()));
        };
        match field {
            "getYear" => Ok(Value::Int(dt.year() as i64)),
            "getMonth" => Ok(Value::Int(dt.month() as i64)),
            "getDate" => Ok(Value::Int(dt.day() as i64)),
            _ => rt(format!("DateTime has no method `{field}`")),
        }
    }

    fn binary(&mut self, op: BinOp, lhs: &Expr, rhs: &Expr) -> Result<Value, EvalError> {
        if matches!(op, BinOp::And | BinOp::Or) {
            let l = self.eval(lhs)?.as_bool().ok_or_else(|| EvalError::Runtime(format!("operator {} needs booleans", op.symbol())))?;
            if (op == BinOp::And && !l) || (op == BinOp::Or && l) {
                return Ok(Value::Bool(l));
            }
            let r = self.eval(rhs)?.as_bool().ok_or_else(|| EvalError::Runtime(format!("operator {} needs booleans", op.symbol())))?;
            return Ok(Value::Bool(r));
        }
        let l = self.eval(lhs)?;
        let r = self.eval(rhs)?;
        binary_values(op, &l, &r)
    }
}

/// Applies a non-short-circuit operator to two values.
pub fn binary_values(op: BinOp, l: &Value, r: &Value) -> Result<Value, EvalError> {
    use Value::*;
    let overflow = || EvalError::Runtime("integer overflow".into());
    let undefined = || EvalError::Runtime(format!("operator {} undefined for {},{}", op.symbol(), l.type_name(), r.type_name()));
    Ok(match op {
        BinOp::Add => match (l, r) {
            (Int(a), Int(b)) => Int(a.checked_add(*b).ok_or_else(overflow)?),
            (Str(_), _) | (_, Str(_)) => Str(format!("{l}{r}")),
            _ => return Err(undefined()),
        },
        BinOp::Sub | BinOp::Mul | BinOp::Rem => {
            let (Int(a), Int(b)) = (l, r) else { return Err(undefined()) };
            Int(match op {
                BinOp::Sub => a.checked_sub(*b),
                BinOp::Mul => a.checked_mul(*b),
                _ if *b == 0 => return Err(EvalError::Runtime("remainder by zero".into())),
                _ => a.checked_rem(*b),
            }
            .ok_or_else(overflow)?)
        }
        BinOp::Eq => Bool(l == r),
        BinOp::Ne => Bool(l != r),
        BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => {
            let ord = match (l, r) {
                (Int(a), Int(b)) => a.cmp(b),
                (Str(a), Str(b)) => match (parse_datetime(a), parse_datetime(b)) {
                    (Some(x), Some(y)) => x.cmp(&y),
                    _ => a.cmp(b),
                },
                _ => return Err(undefined()),
            };
            Bool(match op {
                BinOp::Lt => ord == Ordering::Less,
                BinOp::Gt => ord == Ordering::Greater,
                BinOp::Le => ord != Ordering::Greater,
                _ => ord != Ordering::Less,
            })
        }
        BinOp::In => {
            let items: &[Value] = match r {
                List(xs) => xs,
                Null => &[],
                _ => return Err(undefined()),
            };
            Bool(items.iter().any(|x| x == l) || matches!(l, Str(s) if contains_text(items, s)))
        }
        BinOp::And | BinOp::Or => match (l, r) {
            (Bool(a), Bool(b)) => Bool(if op == BinOp::And { *a && *b } else { *a || *b }),
            _ => return Err(undefined()),
        },
    })
}

/// Case-insensitive substring match over the displayable fields of `items`.
pub fn contains_text(items: &[Value], needle: &str) -> bool {
    let needle = needle.to_lowercase();
    items.iter().any(|x| x.displayable_fields().iter().any(|f| f.to_lowercase().contains(&needle)))
}
