//! WSDL 1.1 ingestion: parse a document/literal service description, derive
//! an intermediate MVC model from it and emit editable DSL source.

mod emit;
mod parse;
mod transform;

pub use emit::emit_intermediate_dsl;
pub use parse::{parse_wsdl, WsdlError};
pub use transform::{generate_default_views, transform, ControllerEvent, DataEntity, DataProperty, FormSpec, InputField, IntermediateUiModel, ModelOperation, TransformError, ViewSpec};

use serde::{Deserialize, Serialize};

pub const WSDL_NS: &str = "http://schemas.xmlsoap.org/wsdl/";
pub const SOAP_BINDING_NS: &str = "http://schemas.xmlsoap.org/wsdl/soap/";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema";

/// Built-in XML Schema type of a simple element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    String,
    Int,
    Long,
    Boolean,
    DateTime,
    Date,
    /// Any other `xs:` type, kept by local name.
    Other(String),
}

impl Primitive {
    pub fn from_local(name: &str) -> Primitive {
        match name {
            "string" => Primitive::String,
            "int" => Primitive::Int,
            "long" => Primitive::Long,
            "boolean" => Primitive::Boolean,
            "dateTime" => Primitive::DateTime,
            "date" => Primitive::Date,
            other => Primitive::Other(other.to_string()),
        }
    }

    pub fn xsd_name(&self) -> String {
        let local = match self {
            Primitive::String => "string",
            Primitive::Int => "int",
            Primitive::Long => "long",
            Primitive::Boolean => "boolean",
            Primitive::DateTime => "dateTime",
            Primitive::Date => "date",
            Primitive::Other(s) => s,
        };
        format!("xs:{local}")
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Primitive::Int | Primitive::Long)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum XsdType {
    Simple(Primitive),
    /// Index into [`Schema::types`].
    Complex(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDecl {
    pub name: String,
    pub ty: XsdType,
    pub repeated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexType {
    /// Declared name, or `None` for an anonymous type.
    pub name: Option<String>,
    /// The element an anonymous type is declared inside.
    pub owner: Option<String>,
    pub fields: Vec<ElementDecl>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub target_namespace: String,
    pub elements: Vec<ElementDecl>,
    pub types: Vec<ComplexType>,
}

impl Schema {
    pub fn element(&self, name: &str) -> Option<&ElementDecl> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn complex(&self, idx: usize) -> &ComplexType {
        &self.types[idx]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub name: String,
    pub part: String,
    /// Local name of the top-level schema element carried by the part.
    pub element: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WsdlOperation {
    pub name: String,
    pub input: String,
    pub output: Option<String>,
    pub soap_action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WsdlDescription {
    pub service_name: String,
    pub target_namespace: String,
    pub schema: Schema,
    pub messages: Vec<Message>,
    pub port_type: String,
    pub operations: Vec<WsdlOperation>,
    pub binding: String,
    pub address: String,
    pub warnings: Vec<String>,
}

impl WsdlDescription {
    pub fn message(&self, name: &str) -> Option<&Message> {
        self.messages.iter().find(|m| m.name == name)
    }

    pub fn operation(&self, name: &str) -> Option<&WsdlOperation> {
        self.operations.iter().find(|o| o.name == name)
    }

    /// Top-level element carried by `message`.
    pub fn message_element(&self, message: &str) -> Option<&ElementDecl> {
        self.message(message).and_then(|m| self.schema.element(&m.element))
    }
}
