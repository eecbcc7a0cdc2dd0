//! Entity knowledge base: entities, aliases, semantic metadata, relations and
//! deprecation records.
//!
//! Entities are read from line-delimited JSON, one record per line:
//!
//! ```text
//! {"cui":"C01","name":"Laboratory mice","aliases":["lab mice"],"type_ids":["T015"],
//!  "type_names":["Mammal"],"group_id":"LIVB","group_name":"Living Beings","status":"active"}
//! ```
//!
//! `status` is one of `active`, `deleted`, `suppressed` or `merged`; merged
//! records carry `"merged_into": "<cui>"`. Relations live in a second file with
//! one `{"cui1": .., "cui2": ..}` object per line and are stored unordered.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lifecycle state of an ontology record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Active,
    Deleted,
    Suppressed,
    MergedInto(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub cui: String,
    pub canonical_name: String,
    /// Canonical name first, then the remaining aliases in input order.
    pub aliases: Vec<String>,
    pub type_ids: Vec<String>,
    pub type_names: Vec<String>,
    pub group_id: String,
    pub group_name: String,
    pub status: Status,
}

/// Raw interchange record, one per line of the entity file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityRecord {
    pub cui: String,
    pub name: String,
    pub aliases: Vec<String>,
    pub type_ids: Vec<String>,
    pub type_names: Vec<String>,
    pub group_id: String,
    pub group_name: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_into: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationRecord {
    pub cui1: String,
    pub cui2: String,
}

/// Symmetric set of related entity pairs.
#[derive(Debug, Clone, Default)]
pub struct RelationTable {
    pairs: BTreeSet<(String, String)>,
}

impl RelationTable {
    fn key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_owned(), b.to_owned())
        } else {
            (b.to_owned(), a.to_owned())
        }
    }

    /// Returns false for self-pairs, which are never stored.
    pub fn insert(&mut self, a: &str, b: &str) -> bool {
        if a == b {
            return false;
        }
        self.pairs.insert(Self::key(a, b))
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        a != b && self.pairs.contains(&Self::key(a, b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Validated, immutable view of the ontology.
#[derive(Debug, Clone, Default)]
pub struct OntologySnapshot {
    /// Active entities only, keyed by cui.
    entities: BTreeMap<String, Entity>,
    /// Active entity cuis in input order; drives prototype-space row order.
    order: Vec<String>,
    relations: RelationTable,
    /// Deprecated cui to its final active target.
    merge_map: BTreeMap<String, String>,
    /// Deleted and suppressed cuis.
    excluded: BTreeSet<String>,
}

fn parse_status(rec: &EntityRecord, file: &str, line: usize) -> Result<Status> {
    let malformed = |reason: String| Error::MalformedRecord {
        file: file.to_owned(),
        line,
        reason,
    };
    match rec.status.as_str() {
        "active" => Ok(Status::Active),
        "deleted" => Ok(Status::Deleted),
        "suppressed" => Ok(Status::Suppressed),
        "merged" => match &rec.merged_into {
            Some(target) if !target.is_empty() => Ok(Status::MergedInto(target.clone())),
            _ => Err(malformed("merged record without merged_into".into())),
        },
        other => Err(malformed(format!("unknown status {other:?}"))),
    }
}

impl Entity {
    fn from_record(rec: EntityRecord, file: &str, line: usize) -> Result<Self> {
        let malformed = |reason: &str| Error::MalformedRecord {
            file: file.to_owned(),
            line,
            reason: reason.to_owned(),
        };
        let status = parse_status(&rec, file, line)?;
        if rec.cui.trim().is_empty() {
            return Err(malformed("empty cui"));
        }
        if rec.name.trim().is_empty() {
            return Err(malformed("empty canonical name"));
        }
        if rec.aliases.iter().any(|a| a.trim().is_empty()) {
            return Err(malformed("empty alias"));
        }
        if rec.type_ids.is_empty() || rec.type_ids.len() != rec.type_names.len() {
            return Err(malformed("type_ids and type_names must be non-empty and parallel"));
        }
        let mut aliases = Vec::with_capacity(rec.aliases.len() + 1);
        aliases.push(rec.name.clone());
        for alias in rec.aliases {
            if !aliases.contains(&alias) {
                aliases.push(alias);
            }
        }
        Ok(Entity {
            cui: rec.cui,
            canonical_name: rec.name,
            aliases,
            type_ids: rec.type_ids,
            type_names: rec.type_names,
            group_id: rec.group_id,
            group_name: rec.group_name,
            status,
        })
    }
}

fn read_jsonl<T, R>(reader: R, file: &str) -> Result<Vec<(usize, T)>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(file, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            file: file.to_owned(),
            line: line_no,
            reason: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

impl OntologySnapshot {
    /// Loads an entity file and, optionally, a relation file.
    pub fn load(entities: &Path, relations: Option<&Path>) -> Result<Self> {
        let f = File::open(entities).map_err(|e| Error::io(entities, e))?;
        let name = entities.display().to_string();
        let records = read_jsonl::<EntityRecord, _>(BufReader::new(f), &name)?;
        let rels = match relations {
            Some(p) => {
                let f = File::open(p).map_err(|e| Error::io(p, e))?;
                read_jsonl::<RelationRecord, _>(BufReader::new(f), &p.display().to_string())?
            }
            None => Vec::new(),
        };
        Self::from_records(records, rels, &name)
    }

    /// Builds a snapshot from already parsed records. Line numbers are only
    /// used for error messages.
    pub fn from_records(
        records: Vec<(usize, EntityRecord)>,
        relations: Vec<(usize, RelationRecord)>,
        file: &str,
    ) -> Result<Self> {
        let mut all: HashMap<String, Entity> = HashMap::with_capacity(records.len());
        let mut input_order = Vec::with_capacity(records.len());
        for (line, rec) in records {
            let entity = Entity::from_record(rec, file, line)?;
            if all.contains_key(&entity.cui) {
                return Err(Error::DuplicateCui(entity.cui));
            }
            input_order.push(entity.cui.clone());
            all.insert(entity.cui.clone(), entity);
        }

        let mut merge_map = BTreeMap::new();
        let mut excluded = BTreeSet::new();
        for cui in &input_order {
            match &all[cui].status {
                Status::Active => {}
                Status::Deleted | Status::Suppressed => {
                    excluded.insert(cui.clone());
                }
                Status::MergedInto(_) => {
                    let target = chase_merge(&all, cui)?;
                    merge_map.insert(cui.clone(), target);
                }
            }
        }

        let mut snapshot = OntologySnapshot {
            entities: BTreeMap::new(),
            order: Vec::new(),
            relations: RelationTable::default(),
            merge_map,
            excluded,
        };
        for cui in input_order {
            let entity = all.remove(&cui).expect("cui recorded at insert");
            if entity.status == Status::Active {
                snapshot.order.push(cui.clone());
                snapshot.entities.insert(cui, entity);
            }
        }

        for (line, rel) in relations {
            let resolve = |cui: &str| -> Result<Option<String>> {
                if snapshot.excluded.contains(cui) {
                    return Ok(None);
                }
                snapshot.resolve_cui(cui).map(Some).map_err(|_| Error::MalformedRecord {
                    file: "relations".into(),
                    line,
                    reason: format!("unknown cui {cui}"),
                })
            };
            if let (Some(a), Some(b)) = (resolve(&rel.cui1)?, resolve(&rel.cui2)?) {
                snapshot.relations.insert(&a, &b);
            }
        }
        Ok(snapshot)
    }

    pub fn entity(&self, cui: &str) -> Option<&Entity> {
        self.entities.get(cui)
    }

    /// Active entities in input order.
    pub fn active(&self) -> impl Iterator<Item = &Entity> + '_ {
        self.order.iter().map(move |c| &self.entities[c])
    }

    pub fn active_count(&self) -> usize {
        self.order.len()
    }

    pub fn alias_count(&self) -> usize {
        self.active().map(|e| e.aliases.len()).sum()
    }

    pub fn merge_map(&self) -> &BTreeMap<String, String> {
        &self.merge_map
    }

    pub fn excluded(&self) -> &BTreeSet<String> {
        &self.excluded
    }

    pub fn relations(&self) -> &RelationTable {
        &self.relations
    }

    /// Maps a cui to its active counterpart. Idempotent.
    pub fn resolve_cui(&self, cui: &str) -> Result<String> {
        if self.entities.contains_key(cui) {
            return Ok(cui.to_owned());
        }
        if let Some(target) = self.merge_map.get(cui) {
            return if self.entities.contains_key(target) {
                Ok(target.clone())
            } else {
                Err(Error::InconsistentSnapshot(cui.to_owned()))
            };
        }
        if self.excluded.contains(cui) {
            return Err(Error::InconsistentSnapshot(cui.to_owned()));
        }
        Err(Error::UnknownCui(cui.to_owned()))
    }

    /// Direct relation between the resolved entities. An entity is not related
    /// to itself.
    pub fn is_related(&self, a: &str, b: &str) -> Result<bool> {
        let a = self.resolve_cui(a)?;
        let b = self.resolve_cui(b)?;
        Ok(self.relations.contains(&a, &b))
    }
}

fn chase_merge(all: &HashMap<String, Entity>, start: &str) -> Result<String> {
    let mut seen = BTreeSet::new();
    let mut current = start.to_owned();
    loop {
        if !seen.insert(current.clone()) {
            return Err(Error::MergeCycle(start.to_owned()));
        }
        let entity = all.get(&current).ok_or_else(|| Error::MergeTargetMissing {
            source_cui: start.to_owned(),
            target: current.clone(),
        })?;
        match &entity.status {
            Status::Active => return Ok(current),
            Status::MergedInto(next) => current = next.clone(),
            Status::Deleted | Status::Suppressed => {
                return Err(Error::MergeTargetMissing {
                    source_cui: start.to_owned(),
                    target: current,
                })
            }
        }
    }
}
