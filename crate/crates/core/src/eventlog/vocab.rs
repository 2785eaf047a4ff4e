use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const START: &str = "[START]";
pub const END: &str = "[END]";
pub const UNK: &str = "[UNK]";

pub const START_INDEX: usize = 0;
pub const END_INDEX: usize = 1;
pub const UNK_INDEX: usize = 0;

/// Which reserved tokens a vocabulary carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabKind {
    /// `START` at 0, `END` at 1, then sorted activity names.
    Activity,
    /// `UNK` at 0, then sorted resource names.
    Resource,
}

/// Bijection between category strings and contiguous indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    kind: VocabKind,
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn reserved(kind: VocabKind) -> &'static [&'static str] {
        match kind {
            VocabKind::Activity => &[START, END],
            VocabKind::Resource => &[UNK],
        }
    }

    /// Builds a vocabulary from observed values. Values are deduplicated and
    /// sorted so that the result does not depend on input order.
    pub fn build<'a, I>(kind: VocabKind, values: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut observed: Vec<&str> = values.into_iter().collect();
        observed.sort_unstable();
        observed.dedup();
        let reserved = Self::reserved(kind);
        let entries = reserved
            .iter()
            .copied()
            .chain(observed.into_iter().filter(|v| !reserved.contains(v)))
            .map(str::to_owned)
            .collect();
        Self::from_entries(kind, entries).expect("reserved tokens are present")
    }

    /// Rebuilds a vocabulary from a stored entry list. Returns `None` when the
    /// reserved tokens are missing or misplaced, or entries repeat.
    pub fn from_entries(kind: VocabKind, entries: Vec<String>) -> Option<Self> {
        let reserved = Self::reserved(kind);
        if entries.len() < reserved.len()
            || reserved.iter().zip(&entries).any(|(r, e)| r != e)
        {
            return None;
        }
        let index: HashMap<String, usize> = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        if index.len() != entries.len() {
            return None;
        }
        Some(Self {
            kind,
            entries,
            index,
        })
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn get(&self, value: &str) -> Option<usize> {
        self.index.get(value).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.entries.get(index).map(String::as_str)
    }

    /// Resource lookup: unknown or missing values map to `UNK`.
    pub fn get_or_unk(&self, value: Option<&str>) -> usize {
        value.and_then(|v| self.get(v)).unwrap_or(UNK_INDEX)
    }

    /// Number of real (non-reserved) entries.
    pub fn num_observed(&self) -> usize {
        self.entries.len() - Self::reserved(self.kind).len()
    }
}

/// Mapping between activity-vocab indices and prediction classes.
///
/// Classes are the real activities in vocab order followed by `END`;
/// `START` is never a target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassSpace {
    num_activities: usize,
}

impl ClassSpace {
    pub fn new(activity_vocab: &Vocab) -> Self {
        debug_assert_eq!(activity_vocab.kind(), VocabKind::Activity);
        Self {
            num_activities: activity_vocab.num_observed(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_activities + 1
    }

    pub fn end_class(&self) -> usize {
        self.num_activities
    }

    /// Class of an activity-vocab index (`END` included, `START` excluded).
    pub fn class_of(&self, vocab_index: usize) -> Option<usize> {
        match vocab_index {
            START_INDEX => None,
            END_INDEX => Some(self.end_class()),
            i if i < self.num_activities + 2 => Some(i - 2),
            _ => None,
        }
    }

    pub fn vocab_index_of(&self, class: usize) -> Option<usize> {
        match class {
            c if c == self.end_class() => Some(END_INDEX),
            c if c < self.num_activities => Some(c + 2),
            _ => None,
        }
    }
}
