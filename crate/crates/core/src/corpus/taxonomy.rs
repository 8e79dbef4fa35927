use super::NarrationRecord;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

/// Canonical noun and verb sets of one narration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionTags {
    pub nouns: BTreeSet<String>,
    pub verbs: BTreeSet<String>,
}

impl ActionTags {
    pub fn new<N, V>(nouns: N, verbs: V) -> Self
    where
        N: IntoIterator,
        N::Item: Into<String>,
        V: IntoIterator,
        V::Item: Into<String>,
    {
        Self {
            nouns: nouns.into_iter().map(Into::into).collect(),
            verbs: verbs.into_iter().map(Into::into).collect(),
        }
    }

    /// True when the two rows share at least one noun and at least one verb.
    pub fn shares_action(&self, other: &ActionTags) -> bool {
        !self.nouns.is_disjoint(&other.nouns) && !self.verbs.is_disjoint(&other.verbs)
    }

    pub fn is_incomplete(&self) -> bool {
        self.nouns.is_empty() || self.verbs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedNarration {
    pub record: NarrationRecord,
    pub tags: ActionTags,
}

#[derive(Serialize)]
struct TaggedLine<'a> {
    video_id: &'a str,
    timestamp_sec: f64,
    text: &'a str,
    nouns: &'a BTreeSet<String>,
    verbs: &'a BTreeSet<String>,
}

impl TaggedNarration {
    /// Serialises as a single JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&TaggedLine {
            video_id: &self.record.video_id,
            timestamp_sec: self.record.timestamp_sec,
            text: &self.record.text,
            nouns: &self.tags.nouns,
            verbs: &self.tags.verbs,
        })
        .expect("tagged narration serialises")
    }
}

/// Lowercases, deletes ASCII punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyDoc {
    nouns: BTreeMap<String, BTreeSet<String>>,
    verbs: BTreeMap<String, BTreeSet<String>>,
}

/// Surface-form dictionaries for nouns and verbs.
#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    doc: TaxonomyDoc,
    noun_lookup: HashMap<String, String>,
    verb_lookup: HashMap<String, String>,
}

impl Taxonomy {
    pub fn new(
        nouns: BTreeMap<String, BTreeSet<String>>,
        verbs: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self> {
        let noun_lookup = build_lookup("nouns", &nouns)?;
        let verb_lookup = build_lookup("verbs", &verbs)?;
        Ok(Self {
            doc: TaxonomyDoc { nouns, verbs },
            noun_lookup,
            verb_lookup,
        })
    }

    /// Convenience constructor from `(canonical, [surface...])` lists.
    pub fn from_entries(nouns: &[(&str, &[&str])], verbs: &[(&str, &[&str])]) -> Result<Self> {
        fn collect(entries: &[(&str, &[&str])]) -> BTreeMap<String, BTreeSet<String>> {
            entries
                .iter()
                .map(|(canon, forms)| {
                    (
                        canon.to_string(),
                        forms.iter().map(|s| s.to_string()).collect(),
                    )
                })
                .collect()
        }
        Self::new(collect(nouns), collect(verbs))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TaxonomyDoc = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("taxonomy: {e}")))?;
        Self::new(doc.nouns, doc.verbs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn nouns(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.doc.nouns
    }

    pub fn verbs(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.doc.verbs
    }

    pub fn noun_for(&self, token: &str) -> Option<&str> {
        self.noun_lookup.get(token).map(String::as_str)
    }

    pub fn verb_for(&self, token: &str) -> Option<&str> {
        self.verb_lookup.get(token).map(String::as_str)
    }
}

fn build_lookup(
    pos: &str,
    entries: &BTreeMap<String, BTreeSet<String>>,
) -> Result<HashMap<String, String>> {
    let mut lookup: HashMap<String, String> = HashMap::new();
    for (canonical, forms) in entries {
        for form in forms {
            if form.to_lowercase() != *form {
                return Err(Error::Validation(format!(
                    "{pos}: surface form {form:?} of {canonical:?} is not lowercase"
                )));
            }
            // A surface form must survive tokenisation as exactly itself, or it
            // could never match a narration token.
            if tokenize(form) != [form.as_str()] {
                return Err(Error::Validation(format!(
                    "{pos}: surface form {form:?} of {canonical:?} is not a single punctuation-free token"
                )));
            }
            if let Some(prev) = lookup.insert(form.clone(), canonical.clone()) {
                if prev != *canonical {
                    return Err(Error::Validation(format!(
                        "{pos}: surface form {form:?} maps to both {prev:?} and {canonical:?}"
                    )));
                }
            }
        }
    }
    Ok(lookup)
}

pub fn tag_narration(record: &NarrationRecord, tax: &Taxonomy) -> TaggedNarration {
    let mut tags = ActionTags::default();
    for token in tokenize(&record.text) {
        if let Some(n) = tax.noun_for(&token) {
            tags.nouns.insert(n.to_owned());
        }
        if let Some(v) = tax.verb_for(&token) {
            tags.verbs.insert(v.to_owned());
        }
    }
    TaggedNarration {
        record: record.clone(),
        tags,
    }
}
