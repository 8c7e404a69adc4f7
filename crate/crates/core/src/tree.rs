//! Ordered semantic tree.
//!
//! The reconstruction stage turns a grid into a nested map whose key order is
//! meaningful (it mirrors reading order), so internal nodes are backed by
//! [`IndexMap`] and serialization keeps insertion order byte-for-byte. Leaves
//! hold scalars only: text, number, or null. Arrays and booleans are not part
//! of the model — the strict parser rejects them, and the lenient parser used
//! on raw model output folds them into the supported shapes.

use indexmap::IndexMap;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{Serialize, SerializeMap, Serializer};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("path not found: resolved `{resolved}` but `{missing}` has no such child")]
    PathNotFound { resolved: String, missing: String },
    #[error("malformed tree document: {0}")]
    MalformedCache(String),
}

/// Scalar payload of a leaf. Numbers keep their JSON representation (`1` and
/// `1.0` stay distinct) so cache round-trips are lossless.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafValue {
    Text(String),
    Number(serde_json::Number),
    Null,
}

impl LeafValue {
    /// Text rendering for prompts and matching; `None` for null.
    pub fn render(&self) -> Option<String> {
        match self {
            LeafValue::Text(s) => Some(s.clone()),
            LeafValue::Number(n) => Some(n.to_string()),
            LeafValue::Null => None,
        }
    }
}

impl fmt::Display for LeafValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeafValue::Text(s) => f.write_str(s),
            LeafValue::Number(n) => write!(f, "{n}"),
            LeafValue::Null => f.write_str("null"),
        }
    }
}

/// A node label path from the root, e.g. `["Fixed Expenses", "Quarter 1"]`.
/// Paths produced by traversal are never empty; the empty path addresses the
/// root itself and only appears transiently.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TreePath(Vec<String>);

impl TreePath {
    pub fn new(labels: Vec<String>) -> Self {
        TreePath(labels)
    }

    pub fn root() -> Self {
        TreePath(Vec::new())
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, label: &str) -> TreePath {
        let mut v = self.0.clone();
        v.push(label.to_string());
        TreePath(v)
    }

    /// True when `self` is a (non-strict) prefix of `other`.
    pub fn is_prefix_of(&self, other: &TreePath) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    /// Drops the last `n` labels, but never below one label; the root label
    /// of a non-empty path always survives.
    pub fn pruned(&self, n: usize) -> TreePath {
        if self.0.is_empty() {
            return self.clone();
        }
        let keep = self.0.len().saturating_sub(n).max(1);
        TreePath(self.0[..keep].to_vec())
    }
}

impl fmt::Display for TreePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" / "))
    }
}

impl From<Vec<&str>> for TreePath {
    fn from(v: Vec<&str>) -> Self {
        TreePath(v.into_iter().map(String::from).collect())
    }
}

/// One leaf with its full path.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafEntry {
    pub path: TreePath,
    pub value: LeafValue,
}

/// Ordered nested tree; see the module docs for the shape rules.
#[derive(Debug, Clone, PartialEq)]
pub enum SemanticTree {
    Leaf(LeafValue),
    Node(IndexMap<String, SemanticTree>),
}

impl SemanticTree {
    pub fn empty() -> Self {
        SemanticTree::Node(IndexMap::new())
    }

    pub fn text(s: impl Into<String>) -> Self {
        SemanticTree::Leaf(LeafValue::Text(s.into()))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, SemanticTree::Leaf(_))
    }

    pub fn as_node(&self) -> Option<&IndexMap<String, SemanticTree>> {
        match self {
            SemanticTree::Node(m) => Some(m),
            SemanticTree::Leaf(_) => None,
        }
    }

    pub fn as_leaf(&self) -> Option<&LeafValue> {
        match self {
            SemanticTree::Leaf(v) => Some(v),
            SemanticTree::Node(_) => None,
        }
    }

    /// Number of edges on the longest root-to-leaf chain. A bare leaf is 0;
    /// an empty node is 1.
    pub fn height(&self) -> usize {
        match self {
            SemanticTree::Leaf(_) => 0,
            SemanticTree::Node(m) => {
                1 + m.values().map(|c| c.height()).max().unwrap_or(0)
            }
        }
    }

    /// All leaves in depth-first key order with their full paths.
    pub fn leaves(&self) -> Vec<LeafEntry> {
        let mut out = Vec::new();
        self.collect_leaves(&TreePath::root(), &mut out);
        out
    }

    fn collect_leaves(&self, prefix: &TreePath, out: &mut Vec<LeafEntry>) {
        match self {
            SemanticTree::Leaf(v) => out.push(LeafEntry { path: prefix.clone(), value: v.clone() }),
            SemanticTree::Node(m) => {
                for (label, child) in m {
                    child.collect_leaves(&prefix.child(label), out);
                }
            }
        }
    }

    /// Resolves a path to its subtree. On a miss the error carries the
    /// deepest prefix that did resolve, which navigation feeds back to the
    /// model.
    pub fn get(&self, path: &TreePath) -> Result<&SemanticTree, TreeError> {
        let mut here = self;
        for (i, label) in path.labels().iter().enumerate() {
            let next = here.as_node().and_then(|m| m.get(label));
            match next {
                Some(child) => here = child,
                None => {
                    return Err(TreeError::PathNotFound {
                        resolved: path.labels()[..i].join(" / "),
                        missing: label.clone(),
                    })
                }
            }
        }
        Ok(here)
    }

    /// Same shape with every leaf replaced by its type tag (`"text"`,
    /// `"num"`, `"null"`). Used wherever prompts need the structure of a tree
    /// without its payload; applying it twice is a fixpoint apart from all
    /// tags becoming `"text"`.
    pub fn skeleton(&self) -> SemanticTree {
        match self {
            SemanticTree::Leaf(v) => {
                let tag = match v {
                    LeafValue::Text(_) => "text",
                    LeafValue::Number(_) => "num",
                    LeafValue::Null => "null",
                };
                SemanticTree::text(tag)
            }
            SemanticTree::Node(m) => SemanticTree::Node(
                m.iter().map(|(k, c)| (k.clone(), c.skeleton())).collect(),
            ),
        }
    }

    /// Calls `f` with every node label and every non-null leaf rendering.
    pub fn visit_texts(&self, f: &mut impl FnMut(&str)) {
        match self {
            SemanticTree::Leaf(v) => {
                if let Some(s) = v.render() {
                    f(&s);
                }
            }
            SemanticTree::Node(m) => {
                for (label, child) in m {
                    f(label);
                    child.visit_texts(f);
                }
            }
        }
    }

    /// Strict parse of a cache document: objects and scalars only. Arrays,
    /// booleans, and non-JSON input are rejected so that everything this
    /// parser accepts re-serializes byte-for-byte.
    pub fn from_json_str(text: &str) -> Result<Self, TreeError> {
        serde_json::from_str(text).map_err(|e| TreeError::MalformedCache(e.to_string()))
    }

    /// Tolerant conversion for raw model output: arrays become nodes with
    /// 1-based index keys, booleans become text. Objects keep document order.
    pub fn from_json_value_lenient(value: &serde_json::Value) -> SemanticTree {
        match value {
            serde_json::Value::Null => SemanticTree::Leaf(LeafValue::Null),
            serde_json::Value::Bool(b) => SemanticTree::text(if *b { "true" } else { "false" }),
            serde_json::Value::Number(n) => SemanticTree::Leaf(LeafValue::Number(n.clone())),
            serde_json::Value::String(s) => SemanticTree::text(s.clone()),
            serde_json::Value::Array(items) => SemanticTree::Node(
                items
                    .iter()
                    .enumerate()
                    .map(|(i, v)| ((i + 1).to_string(), Self::from_json_value_lenient(v)))
                    .collect(),
            ),
            serde_json::Value::Object(map) => SemanticTree::Node(
                map.iter()
                    .map(|(k, v)| (k.clone(), Self::from_json_value_lenient(v)))
                    .collect(),
            ),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("tree serialization cannot fail")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialization cannot fail")
    }
}

impl Serialize for SemanticTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SemanticTree::Leaf(LeafValue::Text(s)) => serializer.serialize_str(s),
            SemanticTree::Leaf(LeafValue::Number(n)) => n.serialize(serializer),
            SemanticTree::Leaf(LeafValue::Null) => serializer.serialize_none(),
            SemanticTree::Node(m) => {
                let mut map = serializer.serialize_map(Some(m.len()))?;
                for (k, v) in m {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
    }
}

impl<'de> de::Deserialize<'de> for SemanticTree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct TreeVisitor;

        impl<'de> Visitor<'de> for TreeVisitor {
            type Value = SemanticTree;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object, string, number, or null")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<SemanticTree, E> {
                Ok(SemanticTree::text(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<SemanticTree, E> {
                Ok(SemanticTree::Leaf(LeafValue::Number(v.into())))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<SemanticTree, E> {
                Ok(SemanticTree::Leaf(LeafValue::Number(v.into())))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<SemanticTree, E> {
                serde_json::Number::from_f64(v)
                    .map(|n| SemanticTree::Leaf(LeafValue::Number(n)))
                    .ok_or_else(|| E::custom("non-finite number"))
            }

            fn visit_unit<E: de::Error>(self) -> Result<SemanticTree, E> {
                Ok(SemanticTree::Leaf(LeafValue::Null))
            }

            fn visit_none<E: de::Error>(self) -> Result<SemanticTree, E> {
                Ok(SemanticTree::Leaf(LeafValue::Null))
            }

            fn visit_bool<E: de::Error>(self, _: bool) -> Result<SemanticTree, E> {
                Err(E::custom("booleans are not valid tree leaves"))
            }

            fn visit_seq<A: de::SeqAccess<'de>>(self, _: A) -> Result<SemanticTree, A::Error> {
                Err(de::Error::custom("arrays are not valid tree nodes"))
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<SemanticTree, A::Error> {
                let mut m = IndexMap::with_capacity(access.size_hint().unwrap_or(0));
                while let Some((key, value)) = access.next_entry::<String, SemanticTree>()? {
                    m.insert(key, value);
                }
                Ok(SemanticTree::Node(m))
            }
        }

        deserializer.deserialize_any(TreeVisitor)
    }
}

/// Renders a combined header label, parent level first: `Percent - change`.
pub fn qualified_key(upper: &str, lower: &str) -> String {
    format!("{upper} - {lower}")
}

/// Splits a combined label on the first ` - `. Values that themselves contain
/// the separator stay intact on the right-hand side.
pub fn split_qualified(key: &str) -> Option<(&str, &str)> {
    key.split_once(" - ")
}

/// Incremental tree assembly with duplicate-label disambiguation: a label
/// that collides with an existing sibling gets ` #2`, ` #3`, ... appended and
/// the rename is recorded as a warning.
#[derive(Default)]
pub struct TreeBuilder {
    root: IndexMap<String, SemanticTree>,
    warnings: Vec<String>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder::default()
    }

    /// Inserts a leaf, creating intermediate nodes as needed. Intermediate
    /// labels that exist as nodes are descended into; any collision that
    /// cannot be descended into (an existing leaf, or the final slot being
    /// taken) triggers the rename rule.
    pub fn insert(&mut self, path: &[String], value: LeafValue) {
        assert!(!path.is_empty(), "leaf insertion requires at least one label");
        let warnings = &mut self.warnings;
        let mut here = &mut self.root;
        for label in &path[..path.len() - 1] {
            let key = match here.get(label.as_str()) {
                Some(SemanticTree::Node(_)) => label.clone(),
                Some(SemanticTree::Leaf(_)) => {
                    let renamed = Self::free_slot(here, label);
                    warnings.push(format!(
                        "label `{label}` already used by a leaf; branch renamed `{renamed}`"
                    ));
                    renamed
                }
                None => label.clone(),
            };
            let entry = here
                .entry(key)
                .or_insert_with(|| SemanticTree::Node(IndexMap::new()));
            here = match entry {
                SemanticTree::Node(m) => m,
                SemanticTree::Leaf(_) => unreachable!("slot was just ensured to be a node"),
            };
        }
        let last = &path[path.len() - 1];
        let key = if here.contains_key(last.as_str()) {
            let renamed = Self::free_slot(here, last);
            warnings.push(format!("duplicate sibling label `{last}` renamed `{renamed}`"));
            renamed
        } else {
            last.clone()
        };
        here.insert(key, SemanticTree::Leaf(value));
    }

    fn free_slot(map: &IndexMap<String, SemanticTree>, label: &str) -> String {
        // Probe the first few suffixes linearly so small collision runs get
        // dense, readable numbers, then jump past the sibling count so a
        // degenerate program hammering one label stays O(1) per insert
        // instead of rescanning an ever-longer rename chain.
        let mut n = 2;
        loop {
            let candidate = format!("{label} #{n}");
            if !map.contains_key(&candidate) {
                return candidate;
            }
            n = if n < 10 { n + 1 } else { n.max(map.len() + 2) + 1 };
        }
    }

    pub fn finish(self) -> (SemanticTree, Vec<String>) {
        (SemanticTree::Node(self.root), self.warnings)
    }
}

/// Deduplicates evidence paths by prefix absorption: when one path is a
/// strict prefix of another, the shallower entry subsumes the deeper one.
/// Output keeps first-appearance order, so merging is deterministic and
/// idempotent.
pub fn merge_path_entries(
    entries: Vec<(TreePath, SemanticTree)>,
) -> Vec<(TreePath, SemanticTree)> {
    let mut unique: Vec<(TreePath, SemanticTree)> = Vec::new();
    for (path, sub) in entries {
        if !unique.iter().any(|(p, _)| *p == path) {
            unique.push((path, sub));
        }
    }
    let paths: Vec<TreePath> = unique.iter().map(|(p, _)| p.clone()).collect();
    unique
        .into_iter()
        .filter(|(p, _)| {
            !paths
                .iter()
                .any(|q| q != p && q.is_prefix_of(p))
        })
        .collect()
}
