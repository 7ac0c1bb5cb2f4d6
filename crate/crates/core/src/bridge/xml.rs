//! A small owned XML element tree: enough for document/literal payloads.

use roxmltree::Node;

pub const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct XmlElement {
    pub ns: Option<String>,
    pub name: String,
    /// Unqualified attributes in document order.
    pub attrs: Vec<(String, String)>,
    /// `xsi:nil="true"`.
    pub nil: bool,
    pub children: Vec<XmlElement>,
    /// Concatenated character data; only meaningful for leaves.
    pub text: String,
}

impl XmlElement {
    pub fn new(ns: Option<&str>, name: &str) -> Self {
        XmlElement { ns: ns.map(str::to_string), name: name.to_string(), ..Default::default() }
    }

    pub fn leaf(ns: Option<&str>, name: &str, text: impl Into<String>) -> Self {
        XmlElement { text: text.into(), ..XmlElement::new(ns, name) }
    }

    pub fn with_child(mut self, child: XmlElement) -> Self {
        self.children.push(child);
        self
    }

    pub fn from_node(node: Node) -> XmlElement {
        let mut el = XmlElement::new(node.tag_name().namespace(), node.tag_name().name());
        for a in node.attributes() {
            if a.namespace() == Some(XSI_NS) && a.name() == "nil" {
                el.nil = a.value() == "true" || a.value() == "1";
            } else {
                el.attrs.push((a.name().to_string(), a.value().to_string()));
            }
        }
        for c in node.children() {
            if c.is_element() {
                el.children.push(XmlElement::from_node(c));
            } else if c.is_text() {
                el.text.push_str(c.text().unwrap_or_default());
            }
        }
        if !el.children.is_empty() && el.text.trim().is_empty() {
            el.text.clear();
        }
        el
    }

    pub fn child(&self, name: &str) -> Option<&XmlElement> {
        self.children.iter().find(|c| c.name == name)
    }

    /// Equality of qualified names, attributes, nil flags, text and child
    /// order; namespace prefixes play no part.
    pub fn qualified_eq(&self, other: &XmlElement) -> bool {
        let mut a = self.attrs.clone();
        let mut b = other.attrs.clone();
        a.sort();
        b.sort();
        self.ns == other.ns
            && self.name == other.name
            && a == b
            && self.nil == other.nil
            && self.text == other.text
            && self.children.len() == other.children.len()
            && self.children.iter().zip(&other.children).all(|(x, y)| x.qualified_eq(y))
    }

    fn collect_ns<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Some(ns) = self.ns.as_deref() {
            if !out.contains(&ns) {
                out.push(ns);
            }
        }
        for c in &self.children {
            c.collect_ns(out);
        }
    }

    pub(crate) fn write(&self, out: &mut String, prefixes: &[(String, String)]) {
        let qname = self.qname(prefixes);
        out.push('<');
        out.push_str(&qname);
        for (k, v) in &self.attrs {
            out.push(' ');
            out.push_str(k);
            out.push_str("=\"");
            escape_into(out, v, true);
            out.push('"');
        }
        if self.nil {
            out.push_str(" xsi:nil=\"true\"");
        }
        if self.children.is_empty() && self.text.is_empty() {
            out.push_str("/>");
            return;
        }
        out.push('>');
        escape_into(out, &self.text, false);
        for c in &self.children {
            c.write(out, prefixes);
        }
        out.push_str("</");
        out.push_str(&qname);
        out.push('>');
    }

    fn qname(&self, prefixes: &[(String, String)]) -> String {
        match self.ns.as_deref().and_then(|ns| prefixes.iter().find(|(u, _)| u == ns)) {
            Some((_, p)) => format!("{p}:{}", self.name),
            None => self.name.clone(),
        }
    }

    pub fn uses_nil(&self) -> bool {
        self.nil || self.children.iter().any(XmlElement::uses_nil)
    }
}

/// Prefix table for a set of trees, with fixed prefixes first.
pub(crate) fn prefix_table(fixed: &[(&str, &str)], trees: &[&XmlElement]) -> Vec<(String, String)> {
    let mut table: Vec<(String, String)> = fixed.iter().map(|(u, p)| (u.to_string(), p.to_string())).collect();
    let mut seen = Vec::new();
    for t in trees {
        t.collect_ns(&mut seen);
    }
    let mut n = 0;
    for ns in seen {
        if !table.iter().any(|(u, _)| u == ns) {
            table.push((ns.to_string(), if n == 0 { "m".into() } else { format!("m{n}") }));
            n += 1;
        }
    }
    table
}

pub fn escape_into(out: &mut String, s: &str, attr: bool) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attr => out.push_str("&quot;"),
            '\n' if attr => out.push_str("&#10;"),
            '\t' if attr => out.push_str("&#9;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}
