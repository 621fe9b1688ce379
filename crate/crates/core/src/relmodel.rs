//! Domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Axis-aligned box in `[x, y, w, h]` form with a top-left origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let valid = [x, y, w, h].iter().all(|v| v.is_finite()) && x >= 0.0 && y >= 0.0 && w > 0.0 && h > 0.0;
        if valid {
            Ok(BoundingBox { x, y, w, h })
        } else {
            Err(Error::InvalidBox { x, y, w, h })
        }
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Minimal box enclosing both `self` and `other` (the predicate region).
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let (x, w) = span_union((self.x, self.w), (other.x, other.w));
        let (y, h) = span_union((self.y, self.h), (other.y, other.h));
        BoundingBox { x, y, w, h }
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x <= other.x && self.y <= other.y && self.right() >= other.right() && self.bottom() >= other.bottom()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

/// Enclosing 1-D span of `(start, len)` pairs. When one span encloses the
/// other its length is reused as-is so that `union(a, a) == a` holds exactly.
fn span_union(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let start = a.0.min(b.0);
    let end = (a.0 + a.1).max(b.0 + b.1);
    let enclosing = |s: (f64, f64)| s.0 == start && s.0 + s.1 == end;
    match (enclosing(a), enclosing(b)) {
        (true, true) => (start, a.1.min(b.1)),
        (true, false) => a,
        (false, true) => b,
        (false, false) => {
            // Round the length up so that `start + len` still reaches `end`.
            let mut len = end - start;
            while start + len < end {
                len = len.next_up();
            }
            (start, len)
        }
    }
}

/// Overlap length of two 1-D spans, exact when one contains the other.
pub(crate) fn span_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    if a.0 >= b.0 && a.0 + a.1 <= b.0 + b.1 {
        return a.1;
    }
    if b.0 >= a.0 && b.0 + b.1 <= a.0 + a.1 {
        return b.1;
    }
    ((a.0 + a.1).min(b.0 + b.1) - a.0.max(b.0)).max(0.0)
}

impl Serialize for BoundingBox {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[f64; 4]>::deserialize(d)?;
        BoundingBox::from_array(a).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HumanSubtype {
    Man,
    Woman,
    Boy,
    Girl,
}

impl HumanSubtype {
    pub const ALL: [HumanSubtype; 4] = [HumanSubtype::Man, HumanSubtype::Woman, HumanSubtype::Boy, HumanSubtype::Girl];

    pub fn as_str(self) -> &'static str {
        match self {
            HumanSubtype::Man => "man",
            HumanSubtype::Woman => "woman",
            HumanSubtype::Boy => "boy",
            HumanSubtype::Girl => "girl",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for HumanSubtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HumanSubtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "man" => Ok(HumanSubtype::Man),
            "woman" => Ok(HumanSubtype::Woman),
            "boy" => Ok(HumanSubtype::Boy),
            "girl" => Ok(HumanSubtype::Girl),
            _ => Err(Error::UnknownName {
                kind: "human subtype",
                name: s.to_string(),
            }),
        }
    }
}

impl Serialize for HumanSubtype {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for HumanSubtype {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredicateId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

/// Relationship type identity: the exact `(subject, predicate, object)` triple.
///
/// Serialised as a three-element string array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelType {
    pub subject: HumanSubtype,
    pub predicate: String,
    pub object: String,
}

impl RelType {
    pub fn new(subject: HumanSubtype, predicate: impl Into<String>, object: impl Into<String>) -> Self {
        RelType {
            subject,
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

impl fmt::Display for RelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.subject, self.predicate, self.object)
    }
}

impl Serialize for RelType {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.subject.as_str(), self.predicate.as_str(), self.object.as_str()].serialize(s)
    }
}

impl<'de> Deserialize<'de> for RelType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [s, p, o] = <[String; 3]>::deserialize(d)?;
        let subject = s.parse().map_err(serde::de::Error::custom)?;
        Ok(RelType {
            subject,
            predicate: p,
            object: o,
        })
    }
}

/// A grounded relationship `⟨human, predicate, object⟩` with its three boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipTriplet {
    pub subject: HumanSubtype,
    pub predicate: PredicateId,
    pub object: ObjectId,
    pub subject_box: BoundingBox,
    pub object_box: BoundingBox,
    pub union_box: BoundingBox,
}

pub fn make_triplet(
    subject: HumanSubtype,
    predicate: PredicateId,
    object: ObjectId,
    subject_box: BoundingBox,
    object_box: BoundingBox,
) -> Result<RelationshipTriplet> {
    // Boxes built without `new` could still be degenerate.
    let subject_box = BoundingBox::from_array(subject_box.to_array())?;
    let object_box = BoundingBox::from_array(object_box.to_array())?;
    Ok(RelationshipTriplet {
        subject,
        predicate,
        object,
        subject_box,
        object_box,
        union_box: subject_box.union(&object_box),
    })
}

fn normalize_name(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Sorted, deduplicated name list with a reverse index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NameTable {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl NameTable {
    /// Lowercases, trims and deduplicates `names`; ids follow sorted order.
    pub fn resolve<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut cleaned: Vec<String> = names
            .iter()
            .map(|n| normalize_name(n.as_ref()))
            .filter(|n| !n.is_empty())
            .collect();
        if cleaned.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        cleaned.sort();
        cleaned.dedup();
        let index = cleaned.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        Ok(NameTable { names: cleaned, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        Self::resolve(&lines)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for n in &self.names {
            out.push_str(n);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn resolve_vocabulary<S: AsRef<str>>(names: &[S]) -> Result<NameTable> {
    NameTable::resolve(names)
}

/// Predicate and object vocabularies plus per-type frequency counts.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    pub predicates: NameTable,
    pub objects: NameTable,
    pub relationship_types: BTreeMap<RelType, u64>,
}

impl Vocabulary {
    pub fn predicate_id(&self, name: &str) -> Result<PredicateId> {
        self.predicates.id(name).map(PredicateId).ok_or_else(|| Error::UnknownName {
            kind: "predicate",
            name: name.to_string(),
        })
    }

    pub fn object_id(&self, name: &str) -> Result<ObjectId> {
        self.objects.id(name).map(ObjectId).ok_or_else(|| Error::UnknownName {
            kind: "object",
            name: name.to_string(),
        })
    }

    pub fn predicate_name(&self, id: PredicateId) -> &str {
        self.predicates.name(id.0).unwrap_or("<unknown>")
    }

    pub fn object_name(&self, id: ObjectId) -> &str {
        self.objects.name(id.0).unwrap_or("<unknown>")
    }

    pub fn rel_type(&self, t: &RelationshipTriplet) -> RelType {
        RelType::new(t.subject, self.predicate_name(t.predicate), self.object_name(t.object))
    }

    /// Builds vocabularies from every predicate and object mentioned in `records`.
    /// Human regions used as objects contribute their subtype name.
    pub fn from_records(records: &[ImageRecord]) -> Result<Self> {
        let mut predicates = Vec::new();
        let mut objects = Vec::new();
        let mut types: BTreeMap<RelType, u64> = BTreeMap::new();
        for rec in records {
            for r in rec.typed_relationships()? {
                predicates.push(r.rel.predicate.clone());
                objects.push(r.rel.object.clone());
                *types.entry(r.rel).or_insert(0) += 1;
            }
        }
        Ok(Vocabulary {
            predicates: NameTable::resolve(&predicates)?,
            objects: NameTable::resolve(&objects)?,
            relationship_types: types,
        })
    }

    pub fn triplet(&self, rel: &RelType, subject_box: BoundingBox, object_box: BoundingBox) -> Result<RelationshipTriplet> {
        make_triplet(rel.subject, self.predicate_id(&rel.predicate)?, self.object_id(&rel.object)?, subject_box, object_box)
    }
}

/// Reads a tab-separated `subject predicate object count` list.
pub fn read_triple_list(path: &Path) -> Result<BTreeMap<RelType, u64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: n + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let subject: HumanSubtype = fields[0].parse().map_err(|e: Error| parse_err(e.to_string()))?;
        let count: u64 = fields[3].trim().parse().map_err(|_| parse_err(format!("bad count '{}'", fields[3])))?;
        *out.entry(RelType::new(subject, normalize_name(fields[1]), normalize_name(fields[2]))).or_insert(0) += count;
    }
    Ok(out)
}

pub fn write_triple_list(path: &Path, types: &BTreeMap<RelType, u64>) -> Result<()> {
    let mut buf = Vec::new();
    for (t, c) in types {
        writeln!(buf, "{}\t{}\t{}\t{}", t.subject, t.predicate, t.object, c).expect("write to Vec");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn default_score() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub category: String,
    pub bbox: BoundingBox,
    #[serde(default = "default_score")]
    pub score: f64,
}

impl Region {
    pub fn human_subtype(&self) -> Option<HumanSubtype> {
        self.category.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

/// One line of the annotation (or detection) JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub regions: Vec<Region>,
    #[serde(default)]
    pub relationships: Vec<Relation>,
}

/// A relationship resolved against its image's regions.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedRelation<'a> {
    pub rel: RelType,
    pub subject: &'a Region,
    pub object: &'a Region,
}

impl ImageRecord {
    pub fn region(&self, id: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    /// Checks region references and score ranges. Subject-is-human is checked
    /// separately by [`ImageRecord::typed_relationships`] since raw labels are
    /// only subtyped during ingestion.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for r in &self.regions {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(format!("region '{}' has score {} outside [0,1]", r.id, r.score));
            }
        }
        for rel in &self.relationships {
            for id in [&rel.subject, &rel.object] {
                if self.region(id).is_none() {
                    return Err(format!("relationship references missing region_id '{}'", id));
                }
            }
        }
        Ok(())
    }

    pub fn typed_relationships(&self) -> Result<Vec<TypedRelation<'_>>> {
        self.relationships
            .iter()
            .map(|rel| {
                let missing = |id: &str| Error::UnknownName {
                    kind: "region",
                    name: format!("{}/{}", self.image_id, id),
                };
                let subject = self.region(&rel.subject).ok_or_else(|| missing(&rel.subject))?;
                let object = self.region(&rel.object).ok_or_else(|| missing(&rel.object))?;
                let subtype = subject.human_subtype().ok_or_else(|| Error::UnknownName {
                    kind: "human subject",
                    name: subject.category.clone(),
                })?;
                Ok(TypedRelation {
                    rel: RelType::new(subtype, rel.predicate.clone(), object.category.clone()),
                    subject,
                    object,
                })
            })
            .collect()
    }
}

/// Sample id of the union-region feature for a subject/object region pair.
pub fn pair_sample_id(image_id: &str, subject_region: &str, object_region: &str) -> String {
    format!("{image_id}/{subject_region}/{object_region}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn resolve_normalizes_and_dedups() {
        let t = resolve_vocabulary(&["Riding ", "riding"]).unwrap();
        assert_eq!(t.names(), &["riding".to_string()]);
        let t = resolve_vocabulary(&["ride", "hold"]).unwrap();
        assert_eq!(t.id("hold"), Some(0));
        assert_eq!(t.id("ride"), Some(1));
        assert!(matches!(resolve_vocabulary::<&str>(&[]), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn triplet_union_boxes() {
        let p = PredicateId(0);
        let o = ObjectId(0);
        let t = make_triplet(HumanSubtype::Man, p, o, bx(0., 0., 10., 10.), bx(0., 0., 10., 10.)).unwrap();
        assert_eq!(t.union_box, bx(0., 0., 10., 10.));
        let t = make_triplet(HumanSubtype::Man, p, o, bx(0., 0., 10., 10.), bx(20., 0., 10., 10.)).unwrap();
        assert_eq!(t.union_box, bx(0., 0., 30., 10.));
        let t = make_triplet(HumanSubtype::Man, p, o, bx(5., 5., 2., 2.), bx(0., 0., 20., 20.)).unwrap();
        assert_eq!(t.union_box, bx(0., 0., 20., 20.));
        let degenerate = BoundingBox { x: 0., y: 0., w: 0., h: 3. };
        assert!(make_triplet(HumanSubtype::Man, p, o, degenerate, bx(0., 0., 1., 1.)).is_err());
    }

    #[test]
    fn box_rejects_bad_values() {
        assert!(BoundingBox::new(0., 0., -1., 1.).is_err());
        assert!(BoundingBox::new(f64::NAN, 0., 1., 1.).is_err());
        assert!(BoundingBox::new(-1., 0., 1., 1.).is_err());
    }

    #[test]
    fn rel_type_serializes_as_array() {
        let t = RelType::new(HumanSubtype::Girl, "ride", "horse");
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"["girl","ride","horse"]"#);
        assert_eq!(serde_json::from_str::<RelType>(&s).unwrap(), t);
    }

    #[test]
    fn triple_list_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("types.tsv");
        let mut m = BTreeMap::new();
        m.insert(RelType::new(HumanSubtype::Man, "ride", "bicycle"), 3);
        m.insert(RelType::new(HumanSubtype::Boy, "hold", "ice cream"), 0);
        write_triple_list(&path, &m).unwrap();
        assert_eq!(read_triple_list(&path).unwrap(), m);
    }

    #[test]
    fn validate_flags_dangling_region() {
        let rec: ImageRecord = serde_json::from_str(
            r#"{"image_id":"a","width":10,"height":10,
                "regions":[{"id":"h","category":"man","bbox":[0,0,1,1]}],
                "relationships":[{"subject":"h","predicate":"hold","object":"zz"}]}"#,
        )
        .unwrap();
        let err = rec.validate().unwrap_err();
        assert!(err.contains("zz"));
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64).prop_map(|(x, y, w, h)| bx(x, y, w, h))
    }

    proptest! {
        #[test]
        fn union_is_symmetric_minimal_enclosure(a in arb_box(), b in arb_box()) {
            let u = a.union(&b);
            prop_assert_eq!(u, b.union(&a));
            prop_assert!(u.contains(&a) && u.contains(&b));
            prop_assert_eq!(a.union(&a), a);
            // every edge of the union touches one of the inputs
            prop_assert!(u.x == a.x.min(b.x) && u.y == a.y.min(b.y));
            prop_assert!(u.right() - a.right().max(b.right()) < 1e-12);
            prop_assert!(u.bottom() - a.bottom().max(b.bottom()) < 1e-12);
            let shrunk = BoundingBox { x: u.x + 1.0, ..u };
            prop_assert!(!(shrunk.x <= a.x && shrunk.x <= b.x));
        }

        #[test]
        fn name_table_is_bijective(names in proptest::collection::vec("[a-z]{1,6}", 1..20)) {
            let t = NameTable::resolve(&names).unwrap();
            for (i, n) in t.names().iter().enumerate() {
                prop_assert_eq!(t.id(n), Some(i as u32));
                prop_assert_eq!(t.name(i as u32), Some(n.as_str()));
            }
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("v.txt");
            t.write(&p).unwrap();
            prop_assert_eq!(NameTable::read(&p).unwrap(), t);
        }
    }
}
