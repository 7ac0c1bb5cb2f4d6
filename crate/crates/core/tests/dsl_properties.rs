//! Round trip, totality, coverage, recovery and the operator typing oracle.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use muit_core::dsl::ast::*;
use muit_core::dsl::lexer::tokenize;
use muit_core::dsl::{analyze, parse, parse_source, pretty, Code};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect()
}

fn assert_round_trip(name: &str, src: &str) {
    let (m1, d1) = parse_source(name, src);
    assert!(d1.is_empty(), "{name}: {d1:?}");
    let printed = pretty(&m1);
    let (m2, d2) = parse_source(name, &printed);
    assert!(d2.is_empty(), "{name} reprinted: {d2:?}\n{printed}");
    assert_eq!(m1.structure(), m2.structure(), "{name}:\n{printed}");
    // printing is a fixed point after one step
    assert_eq!(printed, pretty(&m2));
}

#[test]
fn corpus_round_trips() {
    for (name, src) in corpus() {
        assert_round_trip(&name, &src);
    }
}

// ---- generated sources ----

const IDENTS: &[&str] = &["a", "b", "taskList", "t", "x1", "_y"];

fn expr_src() -> BoxedStrategy<String> {
    let leaf = prop_oneof![
        (0i64..1_000_000).prop_map(|v| v.to_string()),
        "[a-zA-Z0-9 \"\\\\\n\t.,!?-]{0,8}".prop_map(|s| muit_core::dsl::pretty::quote(&s)),
        prop::sample::select(IDENTS).prop_map(str::to_string),
        prop::sample::select(&["true", "false", "null", "2014-07-21", "2014-07-22T09:30", "screen"][..])
            .prop_map(str::to_string),
    ];
    leaf.prop_recursive(5, 48, 4, |inner| {
        let ops = prop::sample::select(&["||", "&&", "==", "!=", "<", ">", "<=", ">=", "in", "+", "-", "*", "%"][..]);
        prop_oneof![
            (inner.clone(), ops, inner.clone()).prop_map(|(l, op, r)| format!("{l} {op} {r}")),
            inner.clone().prop_map(|e| format!("({e})")),
            (prop::sample::select(&["!", "-"][..]), inner.clone()).prop_map(|(op, e)| format!("{op}{e}")),
            (inner.clone(), prop::sample::select(IDENTS)).prop_map(|(e, f)| format!("({e}).{f}")),
            (prop::sample::select(IDENTS), prop::collection::vec(inner.clone(), 0..3))
                .prop_map(|(f, args)| format!("{f}({})", args.join(", "))),
            prop::collection::vec(inner.clone(), 0..3).prop_map(|xs| format!("[{}]", xs.join(", "))),
            inner.prop_map(|e| format!("{{ var q = {e}; return q; }}")),
        ]
    })
    .boxed()
}

fn stmt_src() -> impl Strategy<Value = String> {
    let e = expr_src();
    let simple = prop_oneof![
        e.clone().prop_map(|e| format!("var v = {e};")),
        (prop::sample::select(IDENTS), e.clone()).prop_map(|(t, e)| format!("{t}.f = {e};")),
        e.clone().prop_map(|e| format!("return {e};")),
        Just("return;".to_string()),
        e.clone().prop_map(|e| format!("f({e});")),
    ];
    simple.prop_recursive(3, 16, 3, move |inner| {
        let e = expr_src();
        prop_oneof![
            (e.clone(), prop::collection::vec(inner.clone(), 0..3))
                .prop_map(|(e, b)| format!("foreach (i in {e}) {{ {} }}", b.join(" "))),
            (e.clone(), inner.clone(), prop::option::of(inner.clone()))
                .prop_map(|(c, a, b)| match b {
                    Some(b) => format!("if ({c}) {a} elseif (true) {{ {b} }} else {a}"),
                    None => format!("if ({c}) {{ {a} }}"),
                }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn generated_expressions_round_trip(e in expr_src()) {
        assert_round_trip("gen", &format!("var x = {e};"));
    }

    #[test]
    fn generated_statements_round_trip(body in prop::collection::vec(stmt_src(), 0..4)) {
        assert_round_trip("gen", &format!("operation op(int n) {{ {} }}", body.join("\n")));
    }

    #[test]
    fn generated_screens_round_trip(title in expr_src(), label in expr_src(), cond in expr_src()) {
        let src = format!(
            "@cached screen s(Task t) {{ header ({title}) {{ button {{ {label}, onClick = {{ go(1); }}, }} }} \
             when ({cond}) <div class = ({label})>\"hi\" text {{ {label} }}</div> \
             foreach (i in [1, 2]) {{ item {{ i, navigate(s, i); }} }} }}"
        );
        assert_round_trip("gen", &src);
    }
}

// ---- totality ----

const VOCAB: &[&str] = &[
    "entity", "operation", "screen", "widget", "touch", "handler", "var", "foreach", "in", "if", "elseif",
    "else", "return", "when", "where", "header", "import", "async", "module", "true", "null", "{", "}", "(",
    ")", "[", "]", "<", ">", "/", "/>", "=", "==", "!=", "&&", "||", "+", "-", "*", "%", "!", ",", ";", ":",
    ".", "@", "\"s\"", "\"open", "42", "99999999999999999999", "2014-07-21", "x", "Task", "list", "#", "é",
    "\n", " ", "//c\n", "/*", "*/",
];

fn random_input(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.3) {
        let n = rng.gen_range(0..64);
        let bytes: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    } else {
        let n = rng.gen_range(0..48);
        (0..n).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
    }
}

#[test]
fn fuzz_hundred_thousand_inputs_terminate() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut slowest = Duration::ZERO;
    for _ in 0..100_000 {
        let src = random_input(&mut rng);
        let start = Instant::now();
        let lexed = tokenize(&src);
        let (m, d) = parse(&lexed.tokens);
        let _ = analyze(&m);
        slowest = slowest.max(start.elapsed());
        // every error carries a location inside the input
        for diag in lexed.diagnostics.iter().chain(&d) {
            assert!(diag.span.line >= 1 && diag.span.col >= 1, "{diag:?} for {src:?}");
        }
    }
    assert!(slowest < Duration::from_millis(100), "slowest input took {slowest:?}");
}

#[test]
fn pathological_nesting_is_diagnosed() {
    for src in [
        "var x = ".to_string() + &"[".repeat(10_000),
        "screen s { ".to_string() + &"foreach (i in x) { ".repeat(5_000),
        "operation f() { ".to_string() + &"if (a) ".repeat(5_000),
        "var x = ".to_string() + &"-".repeat(10_000) + "1;",
    ] {
        let (_, d) = parse_source("deep", &src);
        assert!(!d.is_empty());
    }
}

// ---- coverage ----

#[derive(Default)]
struct Kinds(BTreeSet<String>);

impl Kinds {
    fn add(&mut self, k: impl Into<String>) {
        self.0.insert(k.into());
    }

    fn expr(&mut self, e: &Expr) {
        let mut nodes = Vec::new();
        walk_expr(e, &mut |x| nodes.push(x));
        for x in nodes {
            let k = match &x.kind {
                ExprKind::Str(_) => "exp:string".to_string(),
                ExprKind::Int(_) => "exp:int".into(),
                ExprKind::DateTime(_) => "exp:DateTime".into(),
                ExprKind::Bool(_) => "exp:bool".into(),
                ExprKind::Null => "exp:null".into(),
                ExprKind::Var(_) => "exp:var".into(),
                ExprKind::Binary { op, .. } => format!("op:{}", op.symbol()),
                ExprKind::Unary { op, .. } => format!("op:unary{}", op.symbol()),
                ExprKind::Call { callee, .. } => {
                    if let Some(p) = callee.path() {
                        self.add(format!("api:{p}"));
                    }
                    "exp:call".into()
                }
                ExprKind::Member { .. } => "exp:member".into(),
                ExprKind::List(_) => "exp:list".into(),
                ExprKind::Block(stmts) => {
                    self.stmt_kinds(stmts);
                    "exp:block".into()
                }
            };
            self.add(k);
        }
    }

    fn stmt_kinds(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            let k = match &s.kind {
                StmtKind::Var { .. } => "statement:var",
                StmtKind::Assign { .. } => "statement:assign",
                StmtKind::Foreach { body, .. } => {
                    self.stmt_kinds(body);
                    "statement:foreach"
                }
                StmtKind::If { branches, otherwise } => {
                    if branches.len() > 1 {
                        self.add("statement:elseif");
                    }
                    for (_, b) in branches {
                        self.stmt_kinds(b);
                    }
                    if let Some(b) = otherwise {
                        self.add("statement:else");
                        self.stmt_kinds(b);
                    }
                    "statement:if"
                }
                StmtKind::Return(_) => "statement:return",
                StmtKind::Expr(_) => "statement:exp",
            };
            self.add(k);
        }
    }

    fn stmts(&mut self, stmts: &[Stmt]) {
        self.stmt_kinds(stmts);
        let mut exprs = Vec::new();
        walk_stmts(stmts, &mut |e| exprs.push(e));
        for e in exprs {
            self.expr(e);
        }
    }

    fn items(&mut self, items: &[ScreenItem]) {
        for i in items {
            match i {
                ScreenItem::Header { title, items, .. } => {
                    self.add("item:header");
                    self.expr(title);
                    self.items(items);
                }
                ScreenItem::Import { args, .. } => {
                    self.add("item:import");
                    args.iter().for_each(|a| self.expr(a));
                }
                ScreenItem::Handler { controls, .. } => {
                    self.add("definition:handler");
                    for c in controls {
                        self.control(c);
                    }
                }
                ScreenItem::Rule(r) => {
                    self.add("rule");
                    if r.branches.len() > 1 {
                        self.add("rule:elseif");
                    }
                    if r.otherwise.is_some() {
                        self.add("rule:else");
                    }
                    for b in &r.branches {
                        self.add(match b.context.trigger {
                            Trigger::When => "context:when",
                            Trigger::Where => "context:where",
                        });
                        self.expr(&b.context.condition);
                        if !b.items.is_empty() {
                            self.add("adaptation");
                        }
                        self.items(&b.items);
                    }
                    if let Some(o) = &r.otherwise {
                        self.items(o);
                    }
                }
                ScreenItem::Var(v) => {
                    self.add("item:var");
                    v.init.iter().for_each(|e| self.expr(e));
                }
                ScreenItem::Repeat { iter, items, .. } => {
                    self.add("item:foreach");
                    self.expr(iter);
                    self.items(items);
                }
                ScreenItem::Markup(m) => self.markup(m),
                ScreenItem::Control(c) => self.control(c),
            }
        }
    }

    fn markup(&mut self, m: &Markup) {
        self.add("item:markup");
        for a in &m.attrs {
            self.expr(&a.value);
        }
        for ch in &m.children {
            match ch {
                MarkupChild::Text(_) => self.add("item:text"),
                MarkupChild::Item(i) => self.items(std::slice::from_ref(i)),
            }
        }
    }

    fn control(&mut self, c: &Control) {
        self.add("item:control");
        c.label.iter().for_each(|e| self.expr(e));
        for a in &c.attrs {
            self.expr(&a.value);
        }
        self.stmts(&c.actions);
        self.items(&c.children);
    }

    fn module(&mut self, m: &DslModule) {
        for v in &m.vars {
            self.add("definition:var");
            v.init.iter().for_each(|e| self.expr(e));
        }
        for e in &m.entities {
            self.add("definition:entity");
            for p in &e.properties {
                p.default.iter().for_each(|d| self.expr(d));
            }
        }
        for o in &m.operations {
            self.add("definition:operation");
            if o.is_async {
                self.add("definition:async");
            }
            if o.name == "import" {
                self.add("api:import");
            }
            self.stmts(&o.body);
        }
        for w in &m.widgets {
            self.add("definition:widget");
            for it in &w.body {
                match it {
                    WidgetItem::Stmt(s) => self.stmts(std::slice::from_ref(s)),
                    WidgetItem::Markup(mk) => self.markup(mk),
                }
            }
        }
        for t in &m.touches {
            self.add("definition:touch");
            self.stmts(&t.body);
        }
        for s in &m.screens {
            self.add("definition:screen");
            self.items(&s.items);
        }
    }
}

#[test]
fn corpus_reaches_every_production() {
    let mut kinds = Kinds::default();
    for (name, src) in corpus() {
        let (m, d) = parse_source(&name, &src);
        assert!(d.is_empty());
        kinds.module(&m);
    }
    let mut required: Vec<String> = [
        "definition:entity", "definition:operation", "definition:handler", "definition:screen",
        "definition:widget", "definition:touch", "definition:var", "definition:async",
        "statement:var", "statement:assign", "statement:foreach", "statement:if", "statement:elseif",
        "statement:else", "statement:return", "statement:exp",
        "exp:string", "exp:int", "exp:DateTime", "exp:bool", "exp:var", "exp:call", "exp:member", "exp:list",
        "exp:block", "op:unary!", "op:unary-",
        "context:when", "context:where", "rule", "rule:elseif", "rule:else", "adaptation",
        "item:header", "item:import", "item:var", "item:foreach", "item:markup", "item:text", "item:control",
        "api:import", "api:exist", "api:navigate", "api:httpRequest", "api:history.go", "api:history.back",
        "api:DateTime.create", "api:select", "api:invoke", "api:add",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    required.extend(BinOp::ALL.iter().map(|op| format!("op:{}", op.symbol())));
    let missing: Vec<_> = required.iter().filter(|k| !kinds.0.contains(*k)).collect();
    assert!(missing.is_empty(), "corpus never reaches {missing:?}");
}

// ---- recovery ----

#[test]
fn malformed_screen_does_not_hide_entity() {
    let src = "screen broken {\n  header (\"x\"\n  button { \"a\", ) }\n}\nentity Task { String name; int n: 1; }\n";
    let (m, d) = parse_source("r", src);
    assert!(!d.is_empty());
    assert!(d.iter().all(|d| d.span.line <= 3), "{d:?}");
    assert_eq!(m.entities.len(), 1);
    assert_eq!(m.entities[0].properties.len(), 2);
}

#[test]
fn errors_in_several_declarations_are_all_reported() {
    let src = "entity A { String ; } operation f( { } screen s { ) } entity B { int n; }";
    let (m, d) = parse_source("r", src);
    assert!(d.len() >= 3, "{d:?}");
    assert_eq!(m.entities.iter().map(|e| e.name.as_str()).collect::<Vec<_>>(), ["B"]);
}

#[test]
fn screen_member_access_is_not_a_sync_point() {
    let (m, d) = parse_source("r", "operation f( { var w = screen.deviceos; } entity E {}");
    assert!(!d.is_empty());
    assert_eq!(m.entities.len(), 1);
}

// ---- operator typing oracle ----

/// The operator table written out independently of the checker.
fn expected_type(op: &str, l: &str, r: &str) -> Option<&'static str> {
    let same = l == r;
    match op {
        "+" => match (l, r) {
            ("int", "int") => Some("int"),
            ("String", "String") | ("String", "int") | ("int", "String") => Some("String"),
            _ => None,
        },
        "-" | "*" | "%" => (l == "int" && r == "int").then_some("int"),
        "==" | "!=" => same.then_some("boolean"),
        "<" | ">" | "<=" | ">=" => (same && matches!(l, "int" | "String" | "DateTime")).then_some("boolean"),
        "&&" | "||" => (l == "boolean" && r == "boolean").then_some("boolean"),
        "in" => {
            let elem = r.strip_prefix("list<")?.strip_suffix('>')?;
            (l == elem || l == "String").then_some("boolean")
        }
        _ => unreachable!(),
    }
}

#[test]
fn operator_typing_matches_the_table() {
    let samples = [
        ("int", "7"),
        ("String", "\"s\""),
        ("boolean", "true"),
        ("DateTime", "2014-07-21"),
        ("list<int>", "[1, 2]"),
        ("list<String>", "[\"a\"]"),
    ];
    let ops = ["+", "-", "*", "%", "==", "!=", "<", ">", "<=", ">=", "&&", "||", "in"];
    let mut checked = 0;
    for op in ops {
        for (lt, lv) in samples {
            for (rt, rv) in samples {
                let src = format!("var x = {lv} {op} {rv};");
                let (m, d) = parse_source("o", &src);
                assert!(d.is_empty());
                let a = analyze(&m);
                let init = m.vars[0].init.as_ref().unwrap();
                match expected_type(op, lt, rt) {
                    Some(t) => {
                        assert!(a.diagnostics.is_empty(), "{src}: {:?}", a.diagnostics);
                        assert_eq!(a.type_of(init.id).unwrap().to_string(), t, "{src}");
                    }
                    None => {
                        assert_eq!(a.diagnostics.len(), 1, "{src}");
                        assert_eq!(a.diagnostics[0].code, Code::TypeMismatch);
                        assert_eq!(a.diagnostics[0].message, format!("operator {op} undefined for {lt},{rt}"));
                    }
                }
                checked += 1;
            }
        }
    }
    assert_eq!(checked, ops.len() * samples.len() * samples.len());
}

#[test]
fn unary_typing() {
    for (src, ok) in [("!true", true), ("!1", false), ("-1", true), ("-\"a\"", false), ("!2014-07-21", false)] {
        let (m, _) = parse_source("u", &format!("var x = {src};"));
        assert_eq!(analyze(&m).diagnostics.is_empty(), ok, "{src}");
    }
}
