use std::collections::HashMap;

use roxmltree::{Document, Node};

use super::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WsdlError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("document is not a WSDL 1.1 definitions element")]
    NotWsdl,
    #[error("missing portType")]
    MissingPortType,
    #[error("missing soap:address")]
    MissingAddress,
    #[error("port address `{0}` is not a valid URL")]
    InvalidAddress(String),
    #[error("operation `{operation}` references undefined message `{message}`")]
    UndefinedMessage { operation: String, message: String },
    #[error("reference to undefined schema type or element `{0}`")]
    UnknownType(String),
    #[error("unsupported style: {0}")]
    UnsupportedStyle(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

fn is(node: &Node, ns: &str, local: &str) -> bool {
    node.is_element() && node.tag_name().namespace() == Some(ns) && node.tag_name().name() == local
}

fn children<'a, 'i>(node: Node<'a, 'i>, ns: &'a str, local: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children().filter(move |c| is(c, ns, local))
}

fn local(qname: &str) -> &str {
    qname.rsplit(':').next().unwrap_or(qname)
}

fn resolve_ns<'a>(node: Node<'a, '_>, qname: &str) -> Option<&'a str> {
    let prefix = qname.split_once(':').map(|(p, _)| p);
    node.lookup_namespace_uri(prefix)
}

pub fn parse_wsdl(document: &str) -> Result<WsdlDescription, WsdlError> {
    let doc = Document::parse(document).map_err(|e| WsdlError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if !is(&root, WSDL_NS, "definitions") {
        return Err(WsdlError::NotWsdl);
    }
    let mut warnings = Vec::new();
    for n in root.descendants().filter(|n| n.is_element()) {
        let name = n.tag_name().name();
        if is(&n, WSDL_NS, "import") || is(&n, XSD_NS, "import") || is(&n, XSD_NS, "include") {
            warnings.push(format!("{name} of `{}` ignored", n.attribute("location").or(n.attribute("schemaLocation")).unwrap_or("?")));
        } else if name == "Policy" || name == "PolicyReference" {
            warnings.push(format!("policy element `{name}` ignored"));
        }
    }

    let target_namespace = root.attribute("targetNamespace").unwrap_or_default().to_string();
    let mut sb = SchemaBuilder::default();
    for types in children(root, WSDL_NS, "types") {
        for schema in children(types, XSD_NS, "schema") {
            sb.load(schema)?;
        }
    }
    sb.schema.target_namespace =
        root.children().filter(|c| is(c, WSDL_NS, "types")).flat_map(|t| children(t, XSD_NS, "schema")).find_map(|s| s.attribute("targetNamespace")).unwrap_or(&target_namespace).to_string();
    warnings.append(&mut sb.warnings);
    let schema = sb.schema;

    let mut messages = Vec::new();
    for m in children(root, WSDL_NS, "message") {
        let name = m.attribute("name").unwrap_or_default().to_string();
        let parts: Vec<_> = children(m, WSDL_NS, "part").collect();
        let [part] = parts.as_slice() else {
            return Err(WsdlError::Unsupported(format!("message `{name}` has {} parts; document/literal needs exactly one", parts.len())));
        };
        let part_name = part.attribute("name").unwrap_or("parameters").to_string();
        let Some(element) = part.attribute("element") else {
            return Err(WsdlError::UnsupportedStyle(format!("rpc (part `{part_name}` of message `{name}` is typed, not an element)")));
        };
        let element = local(element).to_string();
        if schema.element(&element).is_none() {
            return Err(WsdlError::UnknownType(element));
        }
        messages.push(Message { name, part: part_name, element });
    }

    let port_type_node = children(root, WSDL_NS, "portType").next().ok_or(WsdlError::MissingPortType)?;
    let port_type = port_type_node.attribute("name").unwrap_or_default().to_string();
    let mut operations = Vec::new();
    for op in children(port_type_node, WSDL_NS, "operation") {
        let name = op.attribute("name").unwrap_or_default().to_string();
        let msg = |tag: &str| children(op, WSDL_NS, tag).next().and_then(|n| n.attribute("message")).map(|m| local(m).to_string());
        let input = msg("input").ok_or_else(|| WsdlError::Unsupported(format!("operation `{name}` has no input")))?;
        let output = msg("output");
        for m in std::iter::once(&input).chain(output.as_ref()) {
            if !messages.iter().any(|x: &Message| &x.name == m) {
                return Err(WsdlError::UndefinedMessage { operation: name.clone(), message: m.clone() });
            }
        }
        operations.push(WsdlOperation { name, input, output, soap_action: None });
    }
    if operations.is_empty() {
        warnings.push(format!("portType `{port_type}` declares no operations"));
    }

    let mut binding = String::new();
    match children(root, WSDL_NS, "binding").next() {
        None => warnings.push("no binding; assuming SOAP document/literal".into()),
        Some(b) => {
            binding = b.attribute("name").unwrap_or_default().to_string();
            let default_style = children(b, SOAP_BINDING_NS, "binding").next().and_then(|s| s.attribute("style")).unwrap_or("document");
            if default_style != "document" {
                return Err(WsdlError::UnsupportedStyle(default_style.to_string()));
            }
            for bop in children(b, WSDL_NS, "operation") {
                let name = bop.attribute("name").unwrap_or_default();
                let soap_op = children(bop, SOAP_BINDING_NS, "operation").next();
                if let Some(style) = soap_op.and_then(|s| s.attribute("style")) {
                    if style != "document" {
                        return Err(WsdlError::UnsupportedStyle(format!("{style} (operation `{name}`)")));
                    }
                }
                for dir in ["input", "output"] {
                    for body in children(bop, WSDL_NS, dir).flat_map(|d| children(d, SOAP_BINDING_NS, "body")) {
                        if body.attribute("use") == Some("encoded") {
                            return Err(WsdlError::UnsupportedStyle(format!("encoded (operation `{name}`)")));
                        }
                    }
                }
                if let Some(op) = operations.iter_mut().find(|o| o.name == name) {
                    op.soap_action = soap_op.and_then(|s| s.attribute("soapAction")).map(str::to_string);
                }
            }
        }
    }

    let service = children(root, WSDL_NS, "service").next();
    let address = service
        .into_iter()
        .flat_map(|s| children(s, WSDL_NS, "port"))
        .flat_map(|p| children(p, SOAP_BINDING_NS, "address"))
        .find_map(|a| a.attribute("location"))
        .ok_or(WsdlError::MissingAddress)?
        .to_string();
    url::Url::parse(&address).map_err(|_| WsdlError::InvalidAddress(address.clone()))?;
    let service_name = root
        .attribute("name")
        .or_else(|| service.and_then(|s| s.attribute("name")))
        .unwrap_or("Service")
        .to_string();

    Ok(WsdlDescription { service_name, target_namespace, schema, messages, port_type, operations, binding, address, warnings })
}

#[derive(Default)]
struct SchemaBuilder {
    schema: Schema,
    named: HashMap<String, usize>,
    simple: HashMap<String, Primitive>,
    warnings: Vec<String>,
}

impl SchemaBuilder {
    fn load(&mut self, schema: Node) -> Result<(), WsdlError> {
        for st in children(schema, XSD_NS, "simpleType") {
            let name = st.attribute("name").unwrap_or_default().to_string();
            let base = children(st, XSD_NS, "restriction")
                .next()
                .and_then(|r| r.attribute("base"))
                .ok_or_else(|| WsdlError::Unsupported(format!("simpleType `{name}` without a restriction base")))?;
            self.simple.insert(name, Primitive::from_local(local(base)));
        }
        let named: Vec<_> = children(schema, XSD_NS, "complexType").collect();
        let first = self.schema.types.len();
        for (i, ct) in named.iter().enumerate() {
            let name = ct.attribute("name").unwrap_or_default().to_string();
            self.named.insert(name.clone(), first + i);
            self.schema.types.push(ComplexType { name: Some(name), owner: None, fields: Vec::new() });
        }
        for (i, ct) in named.iter().enumerate() {
            let fields = self.fields(*ct, schema)?;
            self.schema.types[first + i].fields = fields;
        }
        for el in children(schema, XSD_NS, "element") {
            let decl = self.element(el, schema)?;
            self.schema.elements.push(decl);
        }
        Ok(())
    }

    fn fields(&mut self, ct: Node, schema: Node) -> Result<Vec<ElementDecl>, WsdlError> {
        let mut out = Vec::new();
        for c in ct.children().filter(|c| c.is_element()) {
            match c.tag_name().name() {
                "sequence" | "all" => out.extend(self.particles(c, schema)?),
                "choice" => {
                    self.warnings.push("xs:choice treated as a sequence".into());
                    out.extend(self.particles(c, schema)?);
                }
                "attribute" => self.warnings.push(format!("attribute `{}` ignored", c.attribute("name").unwrap_or("?"))),
                "annotation" => {}
                other => return Err(WsdlError::Unsupported(format!("xs:{other} in complexType"))),
            }
        }
        Ok(out)
    }

    fn particles(&mut self, group: Node, schema: Node) -> Result<Vec<ElementDecl>, WsdlError> {
        let mut out = Vec::new();
        for el in group.children().filter(|c| c.is_element()) {
            match el.tag_name().name() {
                "element" => out.push(self.element(el, schema)?),
                "annotation" => {}
                "any" => self.warnings.push("xs:any wildcard ignored".into()),
                other => return Err(WsdlError::Unsupported(format!("xs:{other} inside a model group"))),
            }
        }
        Ok(out)
    }

    fn element(&mut self, el: Node, schema: Node) -> Result<ElementDecl, WsdlError> {
        let repeated = matches!(el.attribute("maxOccurs"), Some(m) if m == "unbounded" || m.parse::<u32>().is_ok_and(|n| n > 1));
        if let Some(r) = el.attribute("ref") {
            let target = children(schema, XSD_NS, "element")
                .find(|e| e.attribute("name") == Some(local(r)))
                .ok_or_else(|| WsdlError::UnknownType(r.to_string()))?;
            let mut decl = self.element(target, schema)?;
            decl.repeated = repeated;
            return Ok(decl);
        }
        let name = el.attribute("name").ok_or_else(|| WsdlError::Unsupported("element without a name".into()))?.to_string();
        let ty = if let Some(t) = el.attribute("type") {
            self.resolve(el, t)?
        } else if let Some(ct) = children(el, XSD_NS, "complexType").next() {
            let idx = self.schema.types.len();
            self.schema.types.push(ComplexType { name: None, owner: Some(name.clone()), fields: Vec::new() });
            let fields = self.fields(ct, schema)?;
            self.schema.types[idx].fields = fields;
            XsdType::Complex(idx)
        } else if let Some(st) = children(el, XSD_NS, "simpleType").next() {
            let base = children(st, XSD_NS, "restriction").next().and_then(|r| r.attribute("base")).unwrap_or("xs:string");
            XsdType::Simple(Primitive::from_local(local(base)))
        } else {
            XsdType::Simple(Primitive::Other("anyType".into()))
        };
        Ok(ElementDecl { name, ty, repeated })
    }

    fn resolve(&self, node: Node, qname: &str) -> Result<XsdType, WsdlError> {
        let name = local(qname);
        if resolve_ns(node, qname) == Some(XSD_NS) {
            return Ok(XsdType::Simple(Primitive::from_local(name)));
        }
        if let Some(&idx) = self.named.get(name) {
            return Ok(XsdType::Complex(idx));
        }
        if let Some(p) = self.simple.get(name) {
            return Ok(XsdType::Simple(p.clone()));
        }
        Err(WsdlError::UnknownType(qname.to_string()))
    }
}
