use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::*;
use crate::dsl::ast::TypeRef;
use crate::dsl::lexer::Keyword;
use crate::dsl::types::{builtin_function, NAMESPACES};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("unmappable XML schema type `{0}`")]
    UnmappableType(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataProperty {
    pub name: String,
    pub xml_name: String,
    pub ty: TypeRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataEntity {
    pub name: String,
    /// Schema type or element the entity was derived from.
    pub source: String,
    pub properties: Vec<DataProperty>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOperation {
    pub name: String,
    pub wsdl_operation: String,
    pub params: Vec<DataProperty>,
    pub input_entity: String,
    pub output_entity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerEvent {
    pub event: String,
    pub operation: String,
    pub params: Vec<DataProperty>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputField {
    pub name: String,
    pub ty: TypeRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormSpec {
    /// Path of the edited value, e.g. `task` or `task.role`.
    pub path: String,
    pub entity: String,
    pub fields: Vec<String>,
    pub nested: Vec<FormSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultList {
    pub property: String,
    /// Field shown per row when rows are entities.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub screen: String,
    pub operation: String,
    pub is_event: bool,
    pub entity_params: Vec<InputField>,
    pub inputs: Vec<InputField>,
    pub lists: Vec<InputField>,
    pub forms: Vec<FormSpec>,
    pub args: Vec<String>,
    pub result_list: Option<ResultList>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntermediateUiModel {
    pub module_name: String,
    pub service_name: String,
    pub target_namespace: String,
    pub service_url: String,
    pub data_entities: Vec<DataEntity>,
    pub model_operations: Vec<ModelOperation>,
    pub controller_events: Vec<ControllerEvent>,
    pub default_views: Vec<ViewSpec>,
}

impl IntermediateUiModel {
    pub fn entity(&self, name: &str) -> Option<&DataEntity> {
        self.data_entities.iter().find(|e| e.name == name)
    }
}

const RESERVED_TYPES: &[&str] = &["String", "boolean", "int", "DateTime", "list", "Callback", "Screen"];

/// A DSL identifier for an XML name.
pub(crate) fn ident(raw: &str) -> String {
    let mut s: String = raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    if Keyword::lookup(&s).is_some() || NAMESPACES.contains(&s.as_str()) || builtin_function(&s).is_some() || RESERVED_TYPES.contains(&s.as_str()) {
        s.push('_');
    }
    s
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

fn fresh(taken: &mut BTreeSet<String>, base: String) -> String {
    let mut name = base.clone();
    let mut n = 2;
    while !taken.insert(name.clone()) {
        name = format!("{base}{n}");
        n += 1;
    }
    name
}

fn primitive_type(p: &Primitive) -> Result<TypeRef, TransformError> {
    Ok(TypeRef::named(match p {
        Primitive::String => "String",
        Primitive::Int | Primitive::Long => "int",
        Primitive::Boolean => "boolean",
        Primitive::DateTime | Primitive::Date => "DateTime",
        Primitive::Other(_) => return Err(TransformError::UnmappableType(p.xsd_name())),
    }))
}

pub fn transform(desc: &WsdlDescription) -> Result<IntermediateUiModel, TransformError> {
    let schema = &desc.schema;
    let mut taken = BTreeSet::new();
    // one entity per complex type, then one per simple top-level element
    let type_names: Vec<String> = schema
        .types
        .iter()
        .map(|t| fresh(&mut taken, capitalize(&ident(t.name.as_deref().or(t.owner.as_deref()).unwrap_or("Anonymous")))))
        .collect();
    let decl_type = |d: &ElementDecl| -> Result<TypeRef, TransformError> {
        let base = match &d.ty {
            XsdType::Simple(p) => primitive_type(p)?,
            XsdType::Complex(i) => TypeRef::named(type_names[*i].clone()),
        };
        Ok(if d.repeated { TypeRef::list_of(base) } else { base })
    };
    let property = |d: &ElementDecl| -> Result<DataProperty, TransformError> {
        Ok(DataProperty { name: ident(&d.name), xml_name: d.name.clone(), ty: decl_type(d)? })
    };

    let mut data_entities = Vec::new();
    for (t, name) in schema.types.iter().zip(&type_names) {
        let properties = t.fields.iter().map(property).collect::<Result<_, _>>()?;
        let source = t.name.clone().unwrap_or_else(|| t.owner.clone().unwrap_or_default());
        data_entities.push(DataEntity { name: name.clone(), source, properties });
    }
    let mut element_entity = std::collections::HashMap::new();
    for el in &schema.elements {
        match &el.ty {
            XsdType::Complex(i) => {
                element_entity.insert(el.name.clone(), type_names[*i].clone());
            }
            XsdType::Simple(_) => {
                let name = fresh(&mut taken, capitalize(&ident(&el.name)));
                data_entities.push(DataEntity { name: name.clone(), source: el.name.clone(), properties: vec![property(el)?] });
                element_entity.insert(el.name.clone(), name);
            }
        }
    }
    let entity_of_message = |m: &str| -> String {
        desc.message(m).and_then(|m| element_entity.get(&m.element)).cloned().unwrap_or_default()
    };

    let mut model_operations = Vec::new();
    let mut controller_events = Vec::new();
    let mut op_names = BTreeSet::from(["import".to_string()]);
    for op in &desc.operations {
        let input_entity = entity_of_message(&op.input);
        let params = data_entities.iter().find(|e| e.name == input_entity).map(|e| e.properties.clone()).unwrap_or_default();
        let name = fresh(&mut op_names, ident(&op.name));
        match &op.output {
            Some(out) => model_operations.push(ModelOperation {
                name,
                wsdl_operation: op.name.clone(),
                params,
                input_entity,
                output_entity: entity_of_message(out),
            }),
            None => controller_events.push(ControllerEvent { event: name, operation: op.name.clone(), params }),
        }
    }

    Ok(IntermediateUiModel {
        module_name: ident(&desc.service_name),
        service_name: desc.service_name.clone(),
        target_namespace: desc.target_namespace.clone(),
        service_url: desc.address.clone(),
        data_entities,
        model_operations,
        controller_events,
        default_views: Vec::new(),
    })
}

fn is_entity(model: &IntermediateUiModel, ty: &TypeRef) -> bool {
    ty.arg.is_none() && model.entity(&ty.name).is_some()
}

fn form(model: &IntermediateUiModel, path: String, entity: &str, depth: usize) -> FormSpec {
    let e = model.entity(entity).expect("entity exists");
    let fields = e.properties.iter().filter(|p| p.ty.arg.is_none() && !is_entity(model, &p.ty)).map(|p| p.name.clone()).collect();
    let nested = if depth == 0 {
        e.properties
            .iter()
            .filter(|p| is_entity(model, &p.ty))
            .map(|p| form(model, format!("{path}.{}", p.name), &p.ty.name, depth + 1))
            .collect()
    } else {
        Vec::new()
    };
    FormSpec { path, entity: entity.to_string(), fields, nested }
}

fn view(model: &IntermediateUiModel, name: &str, params: &[DataProperty], output: Option<&str>, is_event: bool) -> ViewSpec {
    let mut v = ViewSpec {
        screen: name.to_string(),
        operation: name.to_string(),
        is_event,
        entity_params: Vec::new(),
        inputs: Vec::new(),
        lists: Vec::new(),
        forms: Vec::new(),
        args: params.iter().map(|p| p.name.clone()).collect(),
        result_list: None,
    };
    for p in params {
        let field = InputField { name: p.name.clone(), ty: p.ty.clone() };
        if p.ty.arg.is_some() {
            v.lists.push(field);
        } else if is_entity(model, &p.ty) {
            v.forms.push(form(model, p.name.clone(), &p.ty.name, 0));
            v.entity_params.push(field);
        } else {
            v.inputs.push(field);
        }
    }
    v.result_list = output.and_then(|o| model.entity(o)).and_then(|e| {
        let p = e.properties.iter().find(|p| p.ty.arg.is_some())?;
        let label = p
            .ty
            .arg
            .as_deref()
            .and_then(|t| model.entity(&t.name))
            .and_then(|row| row.properties.iter().find(|f| f.ty.name == "String" && f.ty.arg.is_none()))
            .map(|f| f.name.clone());
        Some(ResultList { property: p.name.clone(), label })
    });
    v
}

pub fn generate_default_views(mut model: IntermediateUiModel) -> IntermediateUiModel {
    let mut views = Vec::new();
    for op in &model.model_operations {
        views.push(view(&model, &op.name, &op.params, Some(&op.output_entity), false));
    }
    for ev in &model.controller_events {
        views.push(view(&model, &ev.event, &ev.params, None, true));
    }
    for v in &mut views {
        if let Some(ev) = model.controller_events.iter().find(|e| e.event == v.screen) {
            v.operation = ev.operation.clone();
        }
    }
    model.default_views = views;
    model
}
