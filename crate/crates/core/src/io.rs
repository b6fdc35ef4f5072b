//! JSON documents for structures and class specs, and DOT export.
//!
//! A structure is `{"signature": [...], "universe": [...], "relations":
//! {name: [[tuple], ...]}}`. Inside a class spec the forbidden structures may
//! omit `signature`; they inherit the spec's.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::class::ClassSpec;
use crate::error::{Error, Result};
use crate::structure::{Elem, FinStructure, RelSymbol, Signature};

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct RelDoc {
    pub name: String,
    pub arity: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub symmetric: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub irreflexive: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Vec<RelDoc>>,
    pub universe: Vec<Elem>,
    #[serde(default)]
    pub relations: BTreeMap<String, Vec<Vec<Elem>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpecDoc {
    pub label: String,
    pub signature: Vec<RelDoc>,
    #[serde(default)]
    pub forbidden: Vec<StructureDoc>,
}

pub fn signature_from_docs(docs: &[RelDoc]) -> Result<Signature> {
    Signature::new(
        docs.iter()
            .map(|d| RelSymbol {
                name: d.name.clone(),
                arity: d.arity,
                symmetric: d.symmetric,
                irreflexive: d.irreflexive,
            })
            .collect(),
    )
}

pub fn signature_docs(sig: &Signature) -> Vec<RelDoc> {
    sig.relations()
        .iter()
        .map(|r| RelDoc {
            name: r.name.clone(),
            arity: r.arity,
            symmetric: r.symmetric,
            irreflexive: r.irreflexive,
        })
        .collect()
}

impl StructureDoc {
    pub fn from_structure(s: &FinStructure, with_signature: bool) -> Self {
        let mut relations = BTreeMap::new();
        for (r, sym) in s.sig().relations().iter().enumerate() {
            let tuples = s
                .tuples(r)
                .iter()
                .filter(|t| !(sym.symmetric && t[0] > t[1]))
                .cloned()
                .collect();
            relations.insert(sym.name.clone(), tuples);
        }
        StructureDoc {
            signature: with_signature.then(|| signature_docs(s.sig())),
            universe: s.universe().to_vec(),
            relations,
        }
    }

    /// Builds the structure, using `context` when the document carries no
    /// signature of its own.
    pub fn into_structure(self, context: Option<&Arc<Signature>>) -> Result<FinStructure> {
        let sig = match (&self.signature, context) {
            (Some(docs), ctx) => {
                let own = signature_from_docs(docs)?;
                match ctx {
                    Some(c) if c.as_ref() != &own => {
                        return Err(Error::SignatureMismatch(
                            "structure signature differs from the spec".into(),
                        ))
                    }
                    Some(c) => c.clone(),
                    None => Arc::new(own),
                }
            }
            (None, Some(c)) => c.clone(),
            (None, None) => return Err(Error::Parse("structure has no `signature` field".into())),
        };
        let mut tuples = Vec::new();
        for (name, ts) in self.relations {
            let r = sig
                .index_of(&name)
                .ok_or_else(|| Error::Invalid(format!("unknown relation `{name}`")))?;
            tuples.extend(ts.into_iter().map(|t| (r, t)));
        }
        let n = self.universe.len();
        let s = FinStructure::new(sig, self.universe, tuples)?;
        if s.len() != n {
            return Err(Error::Invalid("universe lists an element twice".into()));
        }
        Ok(s)
    }
}

impl Serialize for FinStructure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StructureDoc::from_structure(self, true).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FinStructure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = StructureDoc::deserialize(deserializer)?;
        doc.into_structure(None).map_err(serde::de::Error::custom)
    }
}

fn parse_err(e: serde_json::Error) -> Error {
    Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
}

pub fn structure_from_json(text: &str, context: Option<&Arc<Signature>>) -> Result<FinStructure> {
    let doc: StructureDoc = serde_json::from_str(text).map_err(parse_err)?;
    doc.into_structure(context)
}

pub fn structure_to_json(s: &FinStructure) -> String {
    serde_json::to_string_pretty(&StructureDoc::from_structure(s, true)).expect("serializable")
}

pub fn class_spec_from_json(text: &str) -> Result<ClassSpec> {
    let doc: ClassSpecDoc = serde_json::from_str(text).map_err(parse_err)?;
    let sig = Arc::new(signature_from_docs(&doc.signature)?);
    let forbidden = doc
        .forbidden
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            f.into_structure(Some(&sig))
                .map_err(|e| Error::Invalid(format!("forbidden[{i}]: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    ClassSpec::new(sig, forbidden, &doc.label)
}

pub fn class_spec_to_json(spec: &ClassSpec) -> String {
    let doc = ClassSpecDoc {
        label: spec.label().to_string(),
        signature: signature_docs(spec.sig()),
        forbidden: spec
            .forbidden()
            .iter()
            .map(|f| StructureDoc::from_structure(f, false))
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("serializable")
}

/// DOT rendering; only for signatures with a single binary relation.
pub fn to_dot(s: &FinStructure, name: &str) -> Result<String> {
    if !s.sig().is_single_binary() {
        return Err(Error::Domain(
            "DOT export needs a single binary relation".into(),
        ));
    }
    let sym = &s.sig().relations()[0];
    let (kw, arrow) = if sym.symmetric {
        ("graph", "--")
    } else {
        ("digraph", "->")
    };
    let mut out = String::new();
    let _ = writeln!(out, "{kw} \"{name}\" {{");
    for x in s.universe() {
        let _ = writeln!(out, "  {x};");
    }
    for t in s.tuples(0) {
        if sym.symmetric && t[0] > t[1] {
            continue;
        }
        let _ = writeln!(out, "  {} {arrow} {};", t[0], t[1]);
    }
    out.push_str("}\n");
    Ok(out)
}
