//! Label space, speaker metadata, dataset manifests and deterministic splits.
//!
//! A class is a diacritized letter: one of 28 consonants followed by one of
//! four diacritics, giving 112 classes. Class ids are
//! `consonant_index * 4 + diacritic_index`, with consonants in standard
//! alphabetical (hijāʾī) order and diacritics ordered Fatha, Kasra, Damma,
//! Sukoon. Both orders are conventions of this crate and are frozen.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AugmentSpec;
use crate::seed;

pub const CONSONANT_COUNT: usize = 28;
pub const DIACRITIC_COUNT: usize = 4;
pub const CLASS_COUNT: usize = CONSONANT_COUNT * DIACRITIC_COUNT;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("class id {0} outside [0, {CLASS_COUNT})")]
    OutOfRange(i64),
    #[error("class {0} has no original entries to stratify")]
    EmptyClass(usize),
    #[error("invalid split fractions train={train} val={val}")]
    InvalidFractions { train: f64, val: f64 },
    #[error("duplicate entry id {0:?}")]
    DuplicateId(String),
    #[error("entry {0:?} has no audio or embedding path")]
    MissingPath(String),
    #[error("augmented entry {id:?} references unknown source {source_id:?}")]
    OrphanAugmentation { id: String, source_id: String },
    #[error("manifest line {line}: unknown field `{field}`")]
    UnknownField { line: usize, field: String },
    #[error("manifest line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! consonants {
    ($($variant:ident => $cp:literal),* $(,)?) => {
        /// The 28 Arabic consonants, in alphabetical order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Consonant {
            $($variant),*
        }

        impl Consonant {
            pub const ALL: [Consonant; CONSONANT_COUNT] = [$(Consonant::$variant),*];

            /// Isolated letter form.
            pub fn codepoint(self) -> char {
                match self {
                    $(Consonant::$variant => $cp),*
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $(Consonant::$variant => stringify!($variant)),*
                }
            }
        }
    };
}

consonants! {
    Alif => '\u{0627}',
    Ba => '\u{0628}',
    Ta => '\u{062A}',
    Tha => '\u{062B}',
    Jim => '\u{062C}',
    Hha => '\u{062D}',
    Kha => '\u{062E}',
    Dal => '\u{062F}',
    Dhal => '\u{0630}',
    Ra => '\u{0631}',
    Zay => '\u{0632}',
    Sin => '\u{0633}',
    Shin => '\u{0634}',
    Sad => '\u{0635}',
    Dad => '\u{0636}',
    Tta => '\u{0637}',
    Zza => '\u{0638}',
    Ayn => '\u{0639}',
    Ghayn => '\u{063A}',
    Fa => '\u{0641}',
    Qaf => '\u{0642}',
    Kaf => '\u{0643}',
    Lam => '\u{0644}',
    Mim => '\u{0645}',
    Nun => '\u{0646}',
    Ha => '\u{0647}',
    Waw => '\u{0648}',
    Ya => '\u{064A}',
}

impl Consonant {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diacritic {
    Fatha,
    Kasra,
    Damma,
    Sukoon,
}

impl Diacritic {
    pub const ALL: [Diacritic; DIACRITIC_COUNT] = [
        Diacritic::Fatha,
        Diacritic::Kasra,
        Diacritic::Damma,
        Diacritic::Sukoon,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Combining mark written above or below the consonant.
    pub fn mark(self) -> char {
        match self {
            Diacritic::Fatha => '\u{064E}',
            Diacritic::Kasra => '\u{0650}',
            Diacritic::Damma => '\u{064F}',
            Diacritic::Sukoon => '\u{0652}',
        }
    }
}

/// A diacritized letter, the unit of classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LetterLabel {
    pub consonant: Consonant,
    pub diacritic: Diacritic,
}

impl LetterLabel {
    pub fn new(consonant: Consonant, diacritic: Diacritic) -> Self {
        Self {
            consonant,
            diacritic,
        }
    }

    /// Consonant followed by its diacritic mark.
    pub fn glyph(&self) -> String {
        [self.consonant.codepoint(), self.diacritic.mark()]
            .iter()
            .collect()
    }
}

impl std::fmt::Display for LetterLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{:?}", self.consonant.name(), self.diacritic)
    }
}

pub fn encode_label(label: LetterLabel) -> usize {
    label.consonant.index() * DIACRITIC_COUNT + label.diacritic.index()
}

pub fn decode_label(class_id: i64) -> Result<LetterLabel, CorpusError> {
    if !(0..CLASS_COUNT as i64).contains(&class_id) {
        return Err(CorpusError::OutOfRange(class_id));
    }
    let id = class_id as usize;
    Ok(LetterLabel::new(
        Consonant::ALL[id / DIACRITIC_COUNT],
        Diacritic::ALL[id % DIACRITIC_COUNT],
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unspecified,
}

/// Speaker age in decades.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgeBand {
    #[serde(rename = "0-9")]
    Under10,
    #[serde(rename = "10-19")]
    Teens,
    #[serde(rename = "20-29")]
    Twenties,
    #[serde(rename = "30-39")]
    Thirties,
    #[serde(rename = "40-49")]
    Forties,
    #[serde(rename = "50-59")]
    Fifties,
    #[serde(rename = "60-69")]
    Sixties,
    #[serde(rename = "70+")]
    SeventyPlus,
    #[default]
    Unspecified,
}

impl AgeBand {
    pub fn from_age(years: u32) -> Self {
        match years {
            0..=9 => AgeBand::Under10,
            10..=19 => AgeBand::Teens,
            20..=29 => AgeBand::Twenties,
            30..=39 => AgeBand::Thirties,
            40..=49 => AgeBand::Forties,
            50..=59 => AgeBand::Fifties,
            60..=69 => AgeBand::Sixties,
            _ => AgeBand::SeventyPlus,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Continent {
    Africa,
    Asia,
    Europe,
    NorthAmerica,
    SouthAmerica,
    Oceania,
    #[default]
    Unspecified,
}

/// Optional speaker metadata. Every field may be left unspecified.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpeakerMeta {
    #[serde(default)]
    pub gender: Gender,
    #[serde(default)]
    pub age_band: AgeBand,
    /// `None` when nativeness was not reported.
    #[serde(default)]
    pub native: Option<bool>,
    #[serde(default)]
    pub continent: Continent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    Augmented { source: String, spec: AugmentSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_path: Option<String>,
    pub label: LetterLabel,
    #[serde(default)]
    pub speaker: SpeakerMeta,
    /// Unassigned until the manifest is split.
    #[serde(default)]
    pub split: Option<Split>,
    pub provenance: Provenance,
}

impl ManifestEntry {
    pub fn class_id(&self) -> usize {
        encode_label(self.label)
    }

    fn source_id(&self) -> Option<&str> {
        match &self.provenance {
            Provenance::Original => None,
            Provenance::Augmented { source, .. } => Some(source),
        }
    }
}

/// How unknown JSON fields are treated when loading a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strictness {
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Builds a manifest after checking id uniqueness and non-empty paths.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, CorpusError> {
        let m = Self { entries };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(CorpusError::DuplicateId(e.id.clone()));
            }
            let has_path = [&e.audio_path, &e.embedding_path]
                .iter()
                .any(|p| p.as_deref().is_some_and(|s| !s.is_empty()));
            let has_empty = [&e.audio_path, &e.embedding_path]
                .iter()
                .any(|p| p.as_deref() == Some(""));
            if !has_path || has_empty {
                return Err(CorpusError::MissingPath(e.id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries
            .iter()
            .filter(move |e| e.split == Some(split))
    }

    pub fn parse_jsonl(text: &str, mode: Strictness) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(parse_entry(line, i + 1, mode)?);
        }
        Self::new(entries)
    }

    pub fn read_jsonl(path: impl AsRef<Path>, mode: Strictness) -> Result<Self, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(parse_entry(&line, i + 1, mode)?);
        }
        Self::new(entries)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_jsonl().as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

fn parse_entry(line: &str, line_no: usize, mode: Strictness) -> Result<ManifestEntry, CorpusError> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(line);
    let entry: ManifestEntry = serde_ignored::deserialize(&mut de, |path| {
        unknown.push(path.to_string());
    })
    .map_err(|source| CorpusError::Parse {
        line: line_no,
        source,
    })?;
    if let Some(field) = unknown.into_iter().next() {
        match mode {
            Strictness::Strict => {
                return Err(CorpusError::UnknownField {
                    line: line_no,
                    field,
                })
            }
            Strictness::Lenient => {
                log::warn!("manifest line {line_no}: ignoring unknown field `{field}`")
            }
        }
    }
    Ok(entry)
}

/// Stratified assignment of keyed items to splits.
///
/// Items are grouped by class; within a class they are ordered by a digest of
/// `(seed, key)` and the first `round(train_frac * n)` go to Train, the next
/// `round(val_frac * n)` to Val, the rest to Test. The result depends only on
/// the keys, classes and seed.
pub fn stratified_splits(
    items: &[(usize, &str)],
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<Vec<Split>, CorpusError> {
    if !(train_frac >= 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0) {
        return Err(CorpusError::InvalidFractions {
            train: train_frac,
            val: val_frac,
        });
    }
    let mut by_class: BTreeMap<usize, Vec<(u64, &str, usize)>> = BTreeMap::new();
    for (idx, &(class, key)) in items.iter().enumerate() {
        by_class
            .entry(class)
            .or_default()
            .push((seed::hash_str(seed, key), key, idx));
    }
    let mut out = vec![Split::Test; items.len()];
    for members in by_class.values_mut() {
        members.sort_unstable();
        let n = members.len();
        let n_train = ((train_frac * n as f64).round() as usize).min(n);
        let n_val = ((val_frac * n as f64).round() as usize).min(n - n_train);
        for (rank, &(_, _, idx)) in members.iter().enumerate() {
            out[idx] = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

/// Assigns every original entry a split, stratified per class, and gives each
/// augmented entry the split of its source.
pub fn split_manifest(
    manifest: &Manifest,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<Manifest, CorpusError> {
    let originals: Vec<(usize, &str)> = manifest
        .entries
        .iter()
        .filter(|e| e.source_id().is_none())
        .map(|e| (e.class_id(), e.id.as_str()))
        .collect();

    let referenced: HashSet<usize> = manifest.entries.iter().map(|e| e.class_id()).collect();
    let with_originals: HashSet<usize> = originals.iter().map(|&(c, _)| c).collect();
    if let Some(&class) = referenced
        .iter()
        .filter(|c| !with_originals.contains(c))
        .min()
    {
        return Err(CorpusError::EmptyClass(class));
    }

    let splits = stratified_splits(&originals, train_frac, val_frac, seed)?;
    let assigned: HashMap<&str, Split> = originals
        .iter()
        .zip(&splits)
        .map(|(&(_, id), &s)| (id, s))
        .collect();

    let mut entries = manifest.entries.clone();
    for e in &mut entries {
        let key = e.source_id().unwrap_or(&e.id);
        let split = assigned
            .get(key)
            .copied()
            .ok_or_else(|| CorpusError::OrphanAugmentation {
                id: e.id.clone(),
                source_id: key.to_string(),
            })?;
        e.split = Some(split);
    }
    Ok(Manifest { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AugmentKind;

    fn entry(id: &str, class_id: i64) -> ManifestEntry {
        ManifestEntry {
            id: id.to_string(),
            audio_path: Some(format!("{id}.wav")),
            embedding_path: None,
            label: decode_label(class_id).unwrap(),
            speaker: SpeakerMeta::default(),
            split: None,
            provenance: Provenance::Original,
        }
    }

    fn child(id: &str, source: &ManifestEntry) -> ManifestEntry {
        ManifestEntry {
            id: id.to_string(),
            provenance: Provenance::Augmented {
                source: source.id.clone(),
                spec: AugmentSpec {
                    kind: AugmentKind::CircularShift { offset: 1 },
                    seed: 0,
                },
            },
            ..source.clone()
        }
    }

    #[test]
    fn codec_examples() {
        let first = LetterLabel::new(Consonant::ALL[0], Diacritic::Fatha);
        assert_eq!(encode_label(first), 0);
        let last = LetterLabel::new(Consonant::ALL[27], Diacritic::Sukoon);
        assert_eq!(encode_label(last), 111);
        assert_eq!(decode_label(0).unwrap(), first);
        assert_eq!(
            decode_label(5).unwrap(),
            LetterLabel::new(Consonant::ALL[1], Diacritic::Kasra)
        );
        assert!(matches!(decode_label(112), Err(CorpusError::OutOfRange(112))));
        assert!(matches!(decode_label(-1), Err(CorpusError::OutOfRange(-1))));
    }

    #[test]
    fn codec_is_a_bijection() {
        let mut seen = HashSet::new();
        for c in Consonant::ALL {
            for d in Diacritic::ALL {
                let l = LetterLabel::new(c, d);
                let id = encode_label(l);
                assert!(id < CLASS_COUNT);
                assert!(seen.insert(id));
                assert_eq!(decode_label(id as i64).unwrap(), l);
            }
        }
        for id in 0..CLASS_COUNT as i64 {
            assert_eq!(encode_label(decode_label(id).unwrap()) as i64, id);
        }
        assert_eq!(seen.len(), CLASS_COUNT);
    }

    #[test]
    fn glyph_pairs_letter_and_mark() {
        let l = LetterLabel::new(Consonant::Ba, Diacritic::Kasra);
        assert_eq!(l.glyph(), "\u{0628}\u{0650}");
    }

    #[test]
    fn eighty_twenty_split() {
        let entries: Vec<_> = (0..100).map(|i| entry(&format!("e{i}"), 3)).collect();
        let m = Manifest::new(entries).unwrap();
        let s = split_manifest(&m, 0.8, 0.0, 11).unwrap();
        assert_eq!(s.in_split(Split::Train).count(), 80);
        assert_eq!(s.in_split(Split::Test).count(), 20);
        assert_eq!(s.in_split(Split::Val).count(), 0);
    }

    #[test]
    fn single_entry_goes_to_train() {
        let m = Manifest::new(vec![entry("only", 0)]).unwrap();
        let s = split_manifest(&m, 1.0 - 1e-9, 0.0, 3).unwrap();
        assert_eq!(s.entries[0].split, Some(Split::Train));
    }

    #[test]
    fn augmented_child_follows_source() {
        let originals: Vec<_> = (0..10).map(|i| entry(&format!("o{i}"), 7)).collect();
        let mut all = originals.clone();
        for o in &originals {
            all.push(child(&format!("{}#aug0", o.id), o));
        }
        let s = split_manifest(&Manifest::new(all).unwrap(), 0.6, 0.2, 5).unwrap();
        for e in &s.entries {
            if let Provenance::Augmented { source, .. } = &e.provenance {
                assert_eq!(e.split, s.get(source).unwrap().split);
            }
        }
        assert!(s.in_split(Split::Test).any(|e| e.id.ends_with("#aug0")));
    }

    #[test]
    fn class_without_originals_is_rejected() {
        let o = entry("o", 1);
        let mut orphan_class = child("c", &o);
        orphan_class.label = decode_label(9).unwrap();
        let m = Manifest::new(vec![o, orphan_class]).unwrap();
        assert!(matches!(
            split_manifest(&m, 0.8, 0.0, 0),
            Err(CorpusError::EmptyClass(9))
        ));
    }

    #[test]
    fn split_is_deterministic_and_seed_dependent() {
        let entries: Vec<_> = (0..200)
            .map(|i| entry(&format!("e{i}"), (i % 5) as i64))
            .collect();
        let m = Manifest::new(entries).unwrap();
        let a = split_manifest(&m, 0.7, 0.1, 42).unwrap();
        let b = split_manifest(&m, 0.7, 0.1, 42).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = split_manifest(&m, 0.7, 0.1, 43).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
        for class in 0..5 {
            let train = a
                .in_split(Split::Train)
                .filter(|e| e.class_id() == class)
                .count();
            assert_eq!(train, 28);
        }
    }

    #[test]
    fn bad_fractions() {
        let m = Manifest::new(vec![entry("a", 0)]).unwrap();
        assert!(matches!(
            split_manifest(&m, 0.8, 0.2, 0),
            Err(CorpusError::InvalidFractions { .. })
        ));
    }

    #[test]
    fn manifest_validation() {
        assert!(matches!(
            Manifest::new(vec![entry("a", 0), entry("a", 1)]),
            Err(CorpusError::DuplicateId(_))
        ));
        let mut e = entry("a", 0);
        e.audio_path = Some(String::new());
        assert!(matches!(
            Manifest::new(vec![e]),
            Err(CorpusError::MissingPath(_))
        ));
    }

    #[test]
    fn jsonl_round_trip_and_strictness() {
        let m = Manifest::new(vec![entry("a", 0), entry("b", 111)]).unwrap();
        let text = m.to_jsonl();
        assert_eq!(Manifest::parse_jsonl(&text, Strictness::Strict).unwrap(), m);

        let line = r#"{"id":"x","audio_path":"x.wav","label":{"consonant":"Qaf","diacritic":"Damma"},"provenance":"Original","mood":"happy"}"#;
        assert!(matches!(
            Manifest::parse_jsonl(line, Strictness::Strict),
            Err(CorpusError::UnknownField { line: 1, .. })
        ));
        let lenient = Manifest::parse_jsonl(line, Strictness::Lenient).unwrap();
        assert_eq!(lenient.entries[0].class_id(), Consonant::Qaf.index() * 4 + 2);
        assert_eq!(lenient.entries[0].speaker, SpeakerMeta::default());
    }

    #[test]
    fn nested_unknown_fields_are_caught() {
        let line = r#"{"id":"x","audio_path":"x.wav","label":{"consonant":"Ba","diacritic":"Fatha","extra":1},"provenance":"Original"}"#;
        assert!(Manifest::parse_jsonl(line, Strictness::Strict).is_err());
    }

    #[test]
    fn speaker_metadata_parses_bands() {
        let json = r#"{"gender":"Female","age_band":"20-29","native":false,"continent":"Asia"}"#;
        let s: SpeakerMeta = serde_json::from_str(json).unwrap();
        assert_eq!(s.age_band, AgeBand::from_age(24));
        assert_eq!(s.native, Some(false));
    }
}
