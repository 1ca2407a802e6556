//! Identifiers, the schema that splits them, and partial requests.
//!
//! Canonical text form of a key is `k=v,k=v` in schema order. Partial
//! identifiers extend it with value lists and wildcards: `k=a/b,k=*`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

const RESERVED: &[char] = &['=', ',', '/', '\n', '\0'];

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidIdentifier(format!("empty {what}")));
    }
    if let Some(c) = s.chars().find(|c| RESERVED.contains(c)) {
        return Err(Error::InvalidIdentifier(format!("{what} `{}` contains reserved character {c:?}", s.escape_debug())));
    }
    Ok(())
}

/// Ordered keyword/value pairs naming one field (or a sub-key of one).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Identifier {
    entries: Vec<(String, String)>,
}

impl Identifier {
    pub fn new() -> Identifier {
        Identifier::default()
    }

    pub fn from_pairs<K, V, I>(pairs: I) -> Result<Identifier>
    where
        K: Into<String>,
        V: Into<String>,
        I: IntoIterator<Item = (K, V)>,
    {
        let mut id = Identifier::new();
        for (k, v) in pairs {
            id.insert(k, v)?;
        }
        Ok(id)
    }

    /// Appends a pair. Keywords must be unique.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) -> Result<()> {
        let (key, value) = (key.into(), value.into());
        check_token("keyword", &key)?;
        check_token("value", &value)?;
        if self.get(&key).is_some() {
            return Err(Error::InvalidIdentifier(format!("duplicate keyword `{key}`")));
        }
        self.entries.push((key, value));
        Ok(())
    }

    /// Returns a copy with `key` set to `value`, replacing any previous value in place.
    pub fn with(&self, key: &str, value: impl Into<String>) -> Result<Identifier> {
        let value = value.into();
        check_token("value", &value)?;
        let mut id = self.clone();
        match id.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => id.insert(key, value)?,
        }
        Ok(id)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `k=v,k=v` in entry order.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (i, (k, v)) in self.entries.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(k);
            s.push('=');
            s.push_str(v);
        }
        s
    }

    /// Inverse of [`canonical`](Identifier::canonical).
    pub fn parse(text: &str) -> Result<Identifier> {
        let mut id = Identifier::new();
        if text.is_empty() {
            return Ok(id);
        }
        for part in text.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidIdentifier(format!("`{part}` is not of the form keyword=value")))?;
            id.insert(k, v)?;
        }
        Ok(id)
    }

    /// Concatenates identifiers with disjoint keywords.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Identifier>) -> Result<Identifier> {
        let mut id = Identifier::new();
        for p in parts {
            for (k, v) in p.iter() {
                id.insert(k, v)?;
            }
        }
        Ok(id)
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for Identifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Identifier> {
        Identifier::parse(s)
    }
}

/// An identifier partitioned into its dataset, collocation and element keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SplitKey {
    pub dataset: Identifier,
    pub collocation: Identifier,
    pub element: Identifier,
}

impl SplitKey {
    /// Reassembles the full identifier in schema order.
    pub fn join(&self) -> Identifier {
        Identifier::concat([&self.dataset, &self.collocation, &self.element]).expect("split parts are disjoint")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Dataset,
    Collocation,
    Element,
}

impl Level {
    fn section(self) -> &'static str {
        match self {
            Level::Dataset => "dataset",
            Level::Collocation => "collocation",
            Level::Element => "element",
        }
    }
}

/// The rule splitting identifiers into dataset, collocation and element keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    dataset: Vec<String>,
    collocation: Vec<String>,
    element: Vec<String>,
}

impl Schema {
    pub fn new(dataset: &[&str], collocation: &[&str], element: &[&str]) -> Result<Schema> {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let s = Schema { dataset: own(dataset), collocation: own(collocation), element: own(element) };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for level in [Level::Dataset, Level::Collocation, Level::Element] {
            let dims = self.dims(level);
            if dims.is_empty() {
                return Err(Error::EmptySection(level.section()));
            }
            for d in dims {
                check_token("keyword", d)?;
                if !seen.insert(d.as_str()) {
                    return Err(Error::DuplicateKeyword(d.clone()));
                }
            }
        }
        Ok(())
    }

    /// Parses the three-section schema text.
    ///
    /// ```text
    /// # comment
    /// dataset: class,stream,expver,date,time
    /// collocation: type,levtype
    /// element: step,levelist,number,param
    /// ```
    pub fn parse(text: &str) -> Result<Schema> {
        let mut sections: [Option<Vec<String>>; 3] = [None, None, None];
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: String| Error::SchemaSyntax { line: line_no, msg };
            let (name, list) =
                line.split_once(':').ok_or_else(|| syntax(format!("expected `section: keywords`, got `{line}`")))?;
            let slot = match name.trim() {
                "dataset" => 0,
                "collocation" => 1,
                "element" => 2,
                other => return Err(syntax(format!("unknown section `{other}`"))),
            };
            if sections[slot].is_some() {
                return Err(syntax(format!("section `{}` given twice", name.trim())));
            }
            let mut dims = Vec::new();
            for kw in list.split(',').map(str::trim) {
                if kw.is_empty() {
                    if list.trim().is_empty() {
                        break;
                    }
                    return Err(syntax("empty keyword".into()));
                }
                if kw.contains(char::is_whitespace) || kw.contains(RESERVED) {
                    return Err(syntax(format!("invalid keyword `{kw}`")));
                }
                dims.push(kw.to_owned());
            }
            sections[slot] = Some(dims);
        }
        let [dataset, collocation, element] = sections.map(Option::unwrap_or_default);
        let s = Schema { dataset, collocation, element };
        s.validate()?;
        Ok(s)
    }

    /// Text form accepted by [`Schema::parse`].
    pub fn to_text(&self) -> String {
        format!(
            "dataset: {}\ncollocation: {}\nelement: {}\n",
            self.dataset.join(","),
            self.collocation.join(","),
            self.element.join(",")
        )
    }

    pub fn dims(&self, level: Level) -> &[String] {
        match level {
            Level::Dataset => &self.dataset,
            Level::Collocation => &self.collocation,
            Level::Element => &self.element,
        }
    }

    pub fn dataset_dims(&self) -> &[String] {
        &self.dataset
    }

    pub fn collocation_dims(&self) -> &[String] {
        &self.collocation
    }

    pub fn element_dims(&self) -> &[String] {
        &self.element
    }

    pub fn all_dims(&self) -> impl Iterator<Item = &str> {
        self.dataset.iter().chain(&self.collocation).chain(&self.element).map(String::as_str)
    }

    pub fn level_of(&self, keyword: &str) -> Option<Level> {
        [Level::Dataset, Level::Collocation, Level::Element]
            .into_iter()
            .find(|l| self.dims(*l).iter().any(|d| d == keyword))
    }

    fn part(&self, level: Level, id: &Identifier) -> Result<Identifier> {
        let mut out = Identifier::new();
        for d in self.dims(level) {
            let v = id.get(d).ok_or_else(|| Error::MissingDimension(d.clone()))?;
            out.entries.push((d.clone(), v.to_owned()));
        }
        Ok(out)
    }

    pub fn split(&self, id: &Identifier) -> Result<SplitKey> {
        if let Some(k) = id.keys().find(|k| self.level_of(k).is_none()) {
            return Err(Error::UnknownKeyword(k.to_owned()));
        }
        Ok(SplitKey {
            dataset: self.part(Level::Dataset, id)?,
            collocation: self.part(Level::Collocation, id)?,
            element: self.part(Level::Element, id)?,
        })
    }

    /// Reorders a complete identifier into schema order.
    pub fn normalize(&self, id: &Identifier) -> Result<Identifier> {
        Ok(self.split(id)?.join())
    }

    /// Rebuilds a schema-ordered key of `level` from its canonical string.
    pub fn parse_key(&self, level: Level, canonical: &str) -> Result<Identifier> {
        let id = Identifier::parse(canonical)?;
        let keys: Vec<&str> = id.keys().collect();
        if keys.len() != self.dims(level).len() || keys.iter().zip(self.dims(level)).any(|(a, b)| a != b) {
            return Err(Error::InvalidIdentifier(format!("`{canonical}` is not a {} key", level.section())));
        }
        Ok(id)
    }
}

/// Splits `id` according to `schema`.
pub fn split_identifier(schema: &Schema, id: &Identifier) -> Result<SplitKey> {
    schema.split(id)
}

/// Which values of one dimension a partial identifier accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Any,
    Values(Vec<String>),
}

impl Selector {
    pub fn matches(&self, value: &str) -> bool {
        match self {
            Selector::Any => true,
            Selector::Values(vs) => vs.iter().any(|v| v == value),
        }
    }

    /// The single value, if exactly one is selected.
    pub fn single(&self) -> Option<&str> {
        match self {
            Selector::Values(vs) if vs.len() == 1 => Some(&vs[0]),
            _ => None,
        }
    }
}

/// A request pattern: each entry selects a set of values for one keyword.
/// Keywords that do not appear are unconstrained.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartialIdentifier {
    entries: Vec<(String, Selector)>,
}

impl PartialIdentifier {
    pub fn new() -> PartialIdentifier {
        PartialIdentifier::default()
    }

    pub fn with_values<S: Into<String>>(mut self, key: &str, values: impl IntoIterator<Item = S>) -> Result<Self> {
        let values: Vec<String> = values.into_iter().map(Into::into).collect();
        if values.is_empty() {
            return Err(Error::InvalidRequest(format!("empty value list for `{key}`")));
        }
        for v in &values {
            check_token("value", v)?;
        }
        self.set(key, Selector::Values(values))?;
        Ok(self)
    }

    pub fn with_value(self, key: &str, value: &str) -> Result<Self> {
        self.with_values(key, [value])
    }

    pub fn with_any(mut self, key: &str) -> Result<Self> {
        self.set(key, Selector::Any)?;
        Ok(self)
    }

    fn set(&mut self, key: &str, sel: Selector) -> Result<()> {
        check_token("keyword", key)?;
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = sel,
            None => self.entries.push((key.to_owned(), sel)),
        }
        Ok(())
    }

    /// A partial identifier selecting exactly `id`.
    pub fn from_identifier(id: &Identifier) -> PartialIdentifier {
        PartialIdentifier {
            entries: id.iter().map(|(k, v)| (k.to_owned(), Selector::Values(vec![v.to_owned()]))).collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&Selector> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, s)| s)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Selector)> {
        self.entries.iter().map(|(k, s)| (k.as_str(), s))
    }

    /// True if every constrained keyword present in `id` matches. Keywords
    /// constrained here but absent from `id` are ignored.
    pub fn matches(&self, id: &Identifier) -> bool {
        self.entries.iter().all(|(k, sel)| id.get(k).is_none_or(|v| sel.matches(v)))
    }

    /// Checks that all keywords are known to `schema`.
    pub fn check(&self, schema: &Schema) -> Result<()> {
        match self.entries.iter().find(|(k, _)| schema.level_of(k).is_none()) {
            Some((k, _)) => Err(Error::UnknownKeyword(k.clone())),
            None => Ok(()),
        }
    }

    /// Resolves the key of `level` when every one of its dimensions is fixed
    /// to a single value.
    pub fn fixed_key(&self, schema: &Schema, level: Level) -> Result<Identifier> {
        let mut id = Identifier::new();
        for d in schema.dims(level) {
            let v = self.get(d).and_then(Selector::single).ok_or_else(|| {
                Error::InvalidRequest(format!("`{d}` must be given exactly one value"))
            })?;
            id.insert(d.as_str(), v)?;
        }
        Ok(id)
    }
}

impl fmt::Display for PartialIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, sel)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match sel {
                Selector::Any => write!(f, "{k}=*")?,
                Selector::Values(vs) => write!(f, "{k}={}", vs.join("/"))?,
            }
        }
        Ok(())
    }
}

impl FromStr for PartialIdentifier {
    type Err = Error;

    fn from_str(text: &str) -> Result<PartialIdentifier> {
        let mut p = PartialIdentifier::new();
        if text.is_empty() {
            return Ok(p);
        }
        for part in text.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidRequest(format!("`{part}` is not of the form keyword=values")))?;
            p = if v == "*" { p.with_any(k)? } else { p.with_values(k, v.split('/'))? };
        }
        Ok(p)
    }
}

/// Per dimension, the sorted set of values indexed under one (dataset, collocation).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AxisSet {
    axes: BTreeMap<String, BTreeSet<String>>,
}

impl AxisSet {
    pub fn new() -> AxisSet {
        AxisSet::default()
    }

    pub fn insert_element(&mut self, element: &Identifier) {
        for (k, v) in element.iter() {
            self.insert(k, v);
        }
    }

    /// Returns true if the value was not present.
    pub fn insert(&mut self, dim: &str, value: &str) -> bool {
        let set = match self.axes.get_mut(dim) {
            Some(s) => s,
            None => self.axes.entry(dim.to_owned()).or_default(),
        };
        if set.contains(value) {
            return false;
        }
        set.insert(value.to_owned())
    }

    pub fn contains(&self, dim: &str, value: &str) -> bool {
        self.axes.get(dim).is_some_and(|s| s.contains(value))
    }

    /// True if every pair of `element` is indexed.
    pub fn may_contain(&self, element: &Identifier) -> bool {
        element.iter().all(|(k, v)| self.contains(k, v))
    }

    pub fn values(&self, dim: &str) -> impl Iterator<Item = &str> {
        self.axes.get(dim).into_iter().flatten().map(String::as_str)
    }

    pub fn dims(&self) -> impl Iterator<Item = &str> {
        self.axes.keys().map(String::as_str)
    }

    pub fn merge(&mut self, other: &AxisSet) {
        for (dim, vals) in &other.axes {
            self.axes.entry(dim.clone()).or_default().extend(vals.iter().cloned());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn clear(&mut self) {
        self.axes.clear();
    }
}

/// Expands `partial` into fully specified identifiers.
///
/// Dataset and collocation dimensions must be fixed. Element dimensions that
/// are wildcarded or absent are replaced by the values `axis` reports for the
/// (dataset, collocation) pair. The output is the Cartesian product in schema
/// dimension order, the first dimension varying slowest.
pub fn expand_request<F>(schema: &Schema, partial: &PartialIdentifier, mut axis: F) -> Result<Vec<Identifier>>
where
    F: FnMut(&Identifier, &Identifier, &str) -> Result<Vec<String>>,
{
    partial.check(schema)?;
    let dataset = partial.fixed_key(schema, Level::Dataset)?;
    let collocation = partial.fixed_key(schema, Level::Collocation)?;
    let mut choices: Vec<(&str, Vec<String>)> = Vec::new();
    for d in schema.element_dims() {
        let values = match partial.get(d) {
            Some(Selector::Values(vs)) => vs.clone(),
            Some(Selector::Any) | None => {
                let mut vs = axis(&dataset, &collocation, d)?;
                vs.sort();
                vs.dedup();
                vs
            }
        };
        if values.is_empty() {
            return Ok(Vec::new());
        }
        choices.push((d, values));
    }

    let prefix = Identifier::concat([&dataset, &collocation])?;
    let mut out = vec![prefix];
    for (dim, values) in &choices {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for id in &out {
            for v in values {
                let mut id = id.clone();
                id.insert(*dim, v.as_str())?;
                next.push(id);
            }
        }
        out = next;
    }
    Ok(out)
}
