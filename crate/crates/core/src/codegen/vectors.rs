//! Test vectors for rule evaluation: context snapshots paired with the
//! branch the reference evaluator selects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::ast::{DslModule, Expr, ExprKind};
use crate::dsl::eval::Interpreter;
use crate::value::{Map, Value};

use super::effective_screens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCase {
    pub context: serde_json::Value,
    /// Branch index; the else branch is `branches.len()`; null when nothing applies.
    pub expected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenRuleVectors {
    pub screen: String,
    pub rule: String,
    pub conditions: Vec<String>,
    pub has_else: bool,
    pub cases: Vec<RuleCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleVectors {
    pub module: String,
    pub seed: u64,
    pub rules: Vec<ScreenRuleVectors>,
}

fn literals(e: &Expr, ints: &mut Vec<i64>, strs: &mut Vec<String>) {
    match &e.kind {
        ExprKind::Int(v) => ints.push(*v),
        ExprKind::Str(s) => strs.push(s.clone()),
        ExprKind::Binary { lhs, rhs, .. } => {
            literals(lhs, ints, strs);
            literals(rhs, ints, strs);
        }
        ExprKind::Unary { operand, .. } => literals(operand, ints, strs),
        _ => {}
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [String]) -> &'a str {
    &xs[rng.gen_range(0..xs.len())]
}

fn snapshot(rng: &mut ChaCha8Rng, ints: &[i64], strs: &[String]) -> Map {
    let pool = |base: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = base.iter().map(|s| s.to_string()).collect();
        v.extend(strs.iter().cloned());
        v
    };
    let num = |rng: &mut ChaCha8Rng| -> i64 {
        if !ints.is_empty() && rng.gen_bool(0.6) {
            ints[rng.gen_range(0..ints.len())] + rng.gen_range(-1..=1)
        } else {
            rng.gen_range(0..2000)
        }
    };
    let os = pool(&["iOS", "Android", "Windows"]);
    let ty = pool(&["phone", "tablet"]);
    let orient = pool(&["horizontal", "vertical"]);
    let city = pool(&["Beijing", "Boston"]);
    let country = pool(&["CN", "US"]);
    let w = num(rng);
    let h = num(rng);
    let mut window = Map::new();
    window.insert("innerWidth".into(), Value::Int(w));
    window.insert("innerHeight".into(), Value::Int(h));
    let mut device = Map::new();
    device.insert("orientation".into(), Value::str(pick(rng, &orient)));
    let mut screen = Map::new();
    screen.insert("deviceos".into(), Value::str(pick(rng, &os)));
    screen.insert("devicetype".into(), Value::str(pick(rng, &ty)));
    screen.insert("window".into(), Value::Map(window));
    screen.insert("device".into(), Value::Map(device));
    let mut network = Map::new();
    network.insert("online".into(), Value::Bool(rng.gen_bool(0.5)));
    let mut location = Map::new();
    location.insert("city".into(), Value::str(pick(rng, &city)));
    location.insert("country".into(), Value::str(pick(rng, &country)));
    let mut snap = Map::new();
    snap.insert("screen".into(), Value::Map(screen));
    snap.insert("network".into(), Value::Map(network));
    snap.insert("location".into(), Value::Map(location));
    snap
}

/// `cases` random snapshots per rule, biased toward the literals its
/// conditions compare against.
pub fn rule_vectors(m: &DslModule, seed: u64, cases: usize) -> RuleVectors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut it = Interpreter::new(m);
    let mut out = Vec::new();
    for screen in effective_screens(m) {
        let mut rules = Vec::new();
        collect_rules(&screen.items, &mut rules);
        let walked = super::html::ScreenWalker::new(m, &screen).run();
        let ids: Vec<String> = walked.map(|o| o.rules.into_iter().map(|r| r.id).collect()).unwrap_or_default();
        for (rule, id) in rules.into_iter().zip(ids) {
            let (mut ints, mut strs) = (Vec::new(), Vec::new());
            for b in &rule.branches {
                literals(&b.context.condition, &mut ints, &mut strs);
            }
            let mut rv = ScreenRuleVectors {
                screen: screen.name.clone(),
                rule: id,
                conditions: rule.branches.iter().map(|b| crate::dsl::pretty::pretty_expr(&b.context.condition)).collect(),
                has_else: rule.otherwise.is_some(),
                cases: Vec::new(),
            };
            for _ in 0..cases {
                let snap = snapshot(&mut rng, &ints, &strs);
                let mut expected = None;
                for (k, b) in rule.branches.iter().enumerate() {
                    if it.eval_condition(&b.context.condition, &snap).unwrap_or(false) {
                        expected = Some(k);
                        break;
                    }
                }
                if expected.is_none() && rule.otherwise.is_some() {
                    expected = Some(rule.branches.len());
                }
                rv.cases.push(RuleCase { context: Value::Map(snap).to_json(), expected });
            }
            out.push(rv);
        }
    }
    RuleVectors { module: m.name.clone(), seed, rules: out }
}

/// Rules in document order, matching the walker's traversal.
fn collect_rules<'a>(items: &'a [crate::dsl::ast::ScreenItem], out: &mut Vec<&'a crate::dsl::ast::Rule>) {
    use crate::dsl::ast::{MarkupChild, ScreenItem};
    for item in items {
        match item {
            ScreenItem::Header { items, .. } | ScreenItem::Repeat { items, .. } => collect_rules(items, out),
            ScreenItem::Rule(r) => {
                for b in &r.branches {
                    collect_rules(&b.items, out);
                }
                if let Some(o) = &r.otherwise {
                    collect_rules(o, out);
                }
                out.push(r);
            }
            ScreenItem::Markup(mk) => {
                for c in &mk.children {
                    if let MarkupChild::Item(i) = c {
                        collect_rules(std::slice::from_ref(i), out);
                    }
                }
            }
            ScreenItem::Handler { controls, .. } => {
                for c in controls {
                    collect_rules(&c.children, out);
                }
            }
            ScreenItem::Control(c) => collect_rules(&c.children, out),
            _ => {}
        }
    }
}
