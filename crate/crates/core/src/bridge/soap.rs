use roxmltree::Document;

use super::xml::{prefix_table, XmlElement, XSI_NS};
use super::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoapEnvelope {
    pub headers: Vec<XmlElement>,
    /// The single body child.
    pub body: XmlElement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault {
    pub code: String,
    pub reason: String,
}

pub fn parse_envelope(xml: &str) -> Result<SoapEnvelope, BridgeError> {
    let doc = Document::parse(xml).map_err(|e| BridgeError::Xml(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "Envelope" || root.tag_name().namespace() != Some(SOAP11_NS) {
        return Err(BridgeError::NotSoap11);
    }
    let encoded = |n: roxmltree::Node| n.attributes().any(|a| a.name() == "encodingStyle");
    if encoded(root) {
        return Err(BridgeError::RpcEncoded);
    }
    let mut headers = Vec::new();
    let mut body = None;
    for c in root.children().filter(|c| c.is_element()) {
        match (c.tag_name().namespace(), c.tag_name().name()) {
            (Some(SOAP11_NS), "Header") => headers.extend(c.children().filter(|h| h.is_element()).map(XmlElement::from_node)),
            (Some(SOAP11_NS), "Body") => body = Some(c),
            _ => {}
        }
    }
    let body = body.ok_or(BridgeError::MissingBody)?;
    if encoded(body) {
        return Err(BridgeError::RpcEncoded);
    }
    let kids: Vec<_> = body.children().filter(|c| c.is_element()).collect();
    let [child] = kids.as_slice() else {
        return Err(BridgeError::BodyChildren(kids.len()));
    };
    if child.descendants().any(encoded) {
        return Err(BridgeError::RpcEncoded);
    }
    Ok(SoapEnvelope { headers, body: XmlElement::from_node(*child) })
}

impl SoapEnvelope {
    pub fn new(body: XmlElement) -> Self {
        SoapEnvelope { headers: Vec::new(), body }
    }

    fn header(&self, ns: &str, name: &str) -> Option<&XmlElement> {
        self.headers.iter().find(|h| h.ns.as_deref() == Some(ns) && h.name == name)
    }

    pub fn correlation_id(&self) -> Option<&str> {
        self.header(MUIT_NS, "CorrelationId").map(|h| h.text.trim()).filter(|s| !s.is_empty())
    }

    /// Callback address for asynchronous requests: `muit:ReplyTo` or a
    /// WS-Addressing `ReplyTo/Address`.
    pub fn callback_address(&self) -> Option<String> {
        if let Some(h) = self.header(MUIT_NS, "ReplyTo") {
            return Some(h.text.trim().to_string()).filter(|s| !s.is_empty());
        }
        self.header(WSA_NS, "ReplyTo").and_then(|h| h.child("Address")).map(|a| a.text.trim().to_string()).filter(|s| !s.is_empty())
    }

    pub fn fault(&self) -> Option<Fault> {
        if self.body.ns.as_deref() != Some(SOAP11_NS) || self.body.name != "Fault" {
            return None;
        }
        let text = |n: &str| self.body.child(n).map(|c| c.text.clone()).unwrap_or_default();
        Some(Fault { code: text("faultcode"), reason: text("faultstring") })
    }

    pub fn qualified_eq(&self, other: &SoapEnvelope) -> bool {
        self.headers.len() == other.headers.len()
            && self.headers.iter().zip(&other.headers).all(|(a, b)| a.qualified_eq(b))
            && self.body.qualified_eq(&other.body)
    }

    pub fn to_xml(&self) -> String {
        let mut trees: Vec<&XmlElement> = self.headers.iter().collect();
        trees.push(&self.body);
        let mut fixed = vec![(SOAP11_NS, "soapenv")];
        if trees.iter().any(|t| t.uses_nil()) {
            fixed.push((XSI_NS, "xsi"));
        }
        let prefixes = prefix_table(&fixed, &trees);
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
        out.push_str("<soapenv:Envelope");
        for (uri, p) in &prefixes {
            out.push_str(&format!(" xmlns:{p}=\""));
            xml::escape_into(&mut out, uri, true);
            out.push('"');
        }
        out.push('>');
        if !self.headers.is_empty() {
            out.push_str("<soapenv:Header>");
            for h in &self.headers {
                h.write(&mut out, &prefixes);
            }
            out.push_str("</soapenv:Header>");
        }
        out.push_str("<soapenv:Body>");
        self.body.write(&mut out, &prefixes);
        out.push_str("</soapenv:Body></soapenv:Envelope>");
        out
    }
}

/// A SOAP 1.1 fault; `code` is `Client` or `Server`.
pub fn fault_envelope(code: &str, reason: &str) -> String {
    let body = XmlElement::new(Some(SOAP11_NS), "Fault")
        .with_child(XmlElement::leaf(None, "faultcode", format!("soapenv:{code}")))
        .with_child(XmlElement::leaf(None, "faultstring", reason));
    SoapEnvelope::new(body).to_xml()
}

/// Acknowledgement returned to asynchronous callers on acceptance.
pub fn ack_envelope(instance_id: &str, correlation_id: &str) -> String {
    let body = XmlElement::new(Some(MUIT_NS), "Accepted")
        .with_child(XmlElement::leaf(Some(MUIT_NS), "instance", instance_id))
        .with_child(XmlElement::leaf(Some(MUIT_NS), "correlation", correlation_id));
    SoapEnvelope::new(body).to_xml()
}
