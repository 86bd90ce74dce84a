//! ICD-9-CM style code parsing and the parent/child forest over a vocabulary.
//!
//! Codes normalize to a dot-free character sequence. The parent of a code is
//! the code with the last character dropped; anything at or below the
//! category level (three characters for plain diagnoses, four for 'E' codes,
//! two for procedures) parents to a per-kind virtual root. Chapter/block
//! ranges such as "240-279" are deliberately not part of the hierarchy.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum CodeKind {
    Diagnosis,
    Procedure,
}

impl CodeKind {
    /// Symbols a code of this kind may contain.
    pub fn alphabet_size(self) -> usize {
        match self {
            CodeKind::Diagnosis => 12, // 0-9, E, V
            CodeKind::Procedure => 10,
        }
    }

    pub fn max_len(self) -> usize {
        match self {
            CodeKind::Diagnosis => 5,
            CodeKind::Procedure => 4,
        }
    }

    /// Index of a symbol in this kind's alphabet: digits map to 0-9,
    /// 'E' to 10 and 'V' to 11 (diagnoses only).
    pub fn symbol_index(self, ch: u8) -> Option<usize> {
        match ch {
            b'0'..=b'9' => Some((ch - b'0') as usize),
            b'E' if self == CodeKind::Diagnosis => Some(10),
            b'V' if self == CodeKind::Diagnosis => Some(11),
            _ => None,
        }
    }
}

impl fmt::Display for CodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeKind::Diagnosis => write!(f, "diagnosis"),
            CodeKind::Procedure => write!(f, "procedure"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty code")]
    Empty,
    #[error("illegal character '{ch}' at position {position} in {kind} code \"{raw}\"")]
    IllegalChar {
        raw: String,
        ch: char,
        position: usize,
        kind: CodeKind,
    },
    #[error("misplaced dot in \"{raw}\": after {found} characters, expected after {expected}")]
    MisplacedDot {
        raw: String,
        found: usize,
        expected: usize,
    },
    #[error("more than one dot in \"{raw}\" (second after {position} characters)")]
    DuplicateDot { raw: String, position: usize },
    #[error("{kind} code \"{raw}\" too long: {len} symbols, maximum {max}")]
    TooLong {
        raw: String,
        len: usize,
        max: usize,
        kind: CodeKind,
    },
}

/// A normalized medical code: kind, original text, and the dot-free
/// uppercase character sequence.
///
/// Equality and hashing ignore `raw`: "25001" and "250.01" are the same code.
#[derive(Clone, Debug)]
pub struct MedicalCode {
    kind: CodeKind,
    raw: String,
    chars: Vec<u8>,
}

impl PartialEq for MedicalCode {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.chars == other.chars
    }
}

impl Eq for MedicalCode {}

impl Ord for MedicalCode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.kind as u8, &self.chars).cmp(&(other.kind as u8, &other.chars))
    }
}

impl PartialOrd for MedicalCode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl std::hash::Hash for MedicalCode {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.kind.hash(state);
        self.chars.hash(state);
    }
}

impl MedicalCode {
    /// Parses and normalizes raw text. Accepts input with or without the
    /// dot; when present the dot must sit at the canonical position.
    /// Positions in errors are 1-based over the dot-free sequence.
    pub fn parse(raw: &str, kind: CodeKind) -> Result<Self, ParseError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(ParseError::Empty);
        }
        let mut chars: Vec<u8> = Vec::new();
        let mut seen_dot = false;
        for ch in trimmed.chars() {
            let up = ch.to_ascii_uppercase();
            if up == '.' {
                if seen_dot {
                    return Err(ParseError::DuplicateDot {
                        raw: trimmed.to_string(),
                        position: chars.len(),
                    });
                }
                seen_dot = true;
                let expected = dot_offset_for(kind, chars.first().copied());
                if chars.len() != expected {
                    return Err(ParseError::MisplacedDot {
                        raw: trimmed.to_string(),
                        found: chars.len(),
                        expected,
                    });
                }
                continue;
            }
            let byte = up as u8;
            let legal = kind.symbol_index(byte).is_some()
                && (byte.is_ascii_digit() || chars.is_empty());
            if !legal || !up.is_ascii() {
                return Err(ParseError::IllegalChar {
                    raw: trimmed.to_string(),
                    ch: up,
                    position: chars.len() + 1,
                    kind,
                });
            }
            chars.push(byte);
        }
        if chars.is_empty() {
            return Err(ParseError::Empty);
        }
        if seen_dot && chars.len() == dot_offset_for(kind, chars.first().copied()) {
            // Trailing dot: nothing followed it.
            return Err(ParseError::MisplacedDot {
                raw: trimmed.to_string(),
                found: chars.len(),
                expected: chars.len(),
            });
        }
        if chars.len() > kind.max_len() {
            return Err(ParseError::TooLong {
                raw: trimmed.to_string(),
                len: chars.len(),
                max: kind.max_len(),
                kind,
            });
        }
        Ok(MedicalCode {
            kind,
            raw: trimmed.to_string(),
            chars,
        })
    }

    /// The per-kind virtual root marker (empty character sequence).
    pub fn virtual_root(kind: CodeKind) -> Self {
        MedicalCode {
            kind,
            raw: String::new(),
            chars: Vec::new(),
        }
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn chars(&self) -> &[u8] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn is_virtual_root(&self) -> bool {
        self.chars.is_empty()
    }

    /// Canonical display form with the dot re-inserted: after three
    /// characters for plain diagnoses, four for 'E' codes, two for
    /// procedures. Round-trips through [`MedicalCode::parse`].
    pub fn canonical(&self) -> String {
        let offset = dot_offset_for(self.kind, self.chars.first().copied());
        let mut out = String::with_capacity(self.chars.len() + 1);
        for (i, &b) in self.chars.iter().enumerate() {
            if i == offset {
                out.push('.');
            }
            out.push(b as char);
        }
        out
    }

    /// Parent by truncating the last character; codes at or below the
    /// category level return `None`, standing for the virtual root.
    pub fn parent(&self) -> Option<MedicalCode> {
        let category = dot_offset_for(self.kind, self.chars.first().copied());
        if self.chars.len() <= category {
            return None;
        }
        let chars = self.chars[..self.chars.len() - 1].to_vec();
        let mut code = MedicalCode {
            kind: self.kind,
            raw: String::new(),
            chars,
        };
        code.raw = code.canonical();
        Some(code)
    }

    /// Alphabet indices of each character: digits 0-9, 'E' 10, 'V' 11.
    pub fn digit_sequence(&self) -> Vec<usize> {
        self.chars
            .iter()
            .map(|&b| self.kind.symbol_index(b).expect("validated at parse"))
            .collect()
    }
}

impl fmt::Display for MedicalCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical())
    }
}

/// Character count before the dot (equivalently, the category level).
fn dot_offset_for(kind: CodeKind, first: Option<u8>) -> usize {
    match kind {
        CodeKind::Procedure => 2,
        CodeKind::Diagnosis => {
            if first == Some(b'E') {
                4
            } else {
                3
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("mixed code kinds: expected {expected}, found {found} in \"{code}\"")]
    MixedKinds {
        expected: CodeKind,
        found: CodeKind,
        code: String,
    },
    #[error("node id {0} out of range")]
    UnknownNode(usize),
}

/// The parent/child forest over one kind's codes, rooted at a virtual node.
///
/// Node 0 is the virtual root; real nodes follow in lexicographic order of
/// their character sequences, which makes ids deterministic and ascending
/// ids topological (a prefix always sorts before its extensions).
#[derive(Debug)]
pub struct HierarchyTree {
    kind: CodeKind,
    nodes: Vec<MedicalCode>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
}

pub const ROOT_ID: usize = 0;

impl HierarchyTree {
    /// Builds the tree over the given codes plus every implied ancestor.
    /// Duplicates are merged; all codes must share `kind`.
    pub fn build(codes: &[MedicalCode], kind: CodeKind) -> Result<Self, HierarchyError> {
        let mut closed: BTreeSet<Vec<u8>> = BTreeSet::new();
        for code in codes {
            if code.kind() != kind {
                return Err(HierarchyError::MixedKinds {
                    expected: kind,
                    found: code.kind(),
                    code: code.canonical(),
                });
            }
            let mut cursor = Some(code.clone());
            while let Some(c) = cursor {
                if !closed.insert(c.chars().to_vec()) {
                    break; // ancestors already present
                }
                cursor = c.parent();
            }
        }

        let mut nodes = vec![MedicalCode::virtual_root(kind)];
        for chars in &closed {
            let mut code = MedicalCode {
                kind,
                raw: String::new(),
                chars: chars.clone(),
            };
            code.raw = code.canonical();
            nodes.push(code);
        }

        let mut index = HashMap::with_capacity(nodes.len());
        for (id, node) in nodes.iter().enumerate() {
            index.insert(node.chars().to_vec(), id);
        }

        let mut parent = vec![None; nodes.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        let mut depth = vec![0usize; nodes.len()];
        for id in 1..nodes.len() {
            let pid = match nodes[id].parent() {
                Some(p) => *index.get(p.chars()).expect("closure inserted all ancestors"),
                None => ROOT_ID,
            };
            parent[id] = Some(pid);
            children[pid].push(id); // ascending id order
            depth[id] = depth[pid] + 1;
        }

        Ok(HierarchyTree {
            kind,
            nodes,
            parent,
            children,
            depth,
            index,
        })
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    /// Total node count including the virtual root.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the virtual root is always present
    }

    pub fn real_len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn real_ids(&self) -> impl Iterator<Item = usize> {
        1..self.nodes.len()
    }

    pub fn node(&self, id: usize) -> Result<&MedicalCode, HierarchyError> {
        self.nodes.get(id).ok_or(HierarchyError::UnknownNode(id))
    }

    pub fn parent_of(&self, id: usize) -> Option<usize> {
        self.parent.get(id).copied().flatten()
    }

    pub fn children_of(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn depth_of(&self, id: usize) -> usize {
        self.depth[id]
    }

    pub fn id_of(&self, code: &MedicalCode) -> Option<usize> {
        self.index.get(code.chars()).copied()
    }

    pub fn id_of_str(&self, code: &str) -> Option<usize> {
        MedicalCode::parse(code, self.kind)
            .ok()
            .and_then(|c| self.id_of(&c))
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.children[id].is_empty()
    }

    /// Deterministic JSON export: canonical code strings (the root as "")
    /// and the parent id of each node (`null` for the root).
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Export<'a> {
            nodes: Vec<String>,
            parent: &'a [Option<usize>],
        }
        let export = Export {
            nodes: self.nodes.iter().map(|n| n.canonical()).collect(),
            parent: &self.parent,
        };
        serde_json::to_string_pretty(&export).expect("plain data serializes")
    }
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot read vocabulary {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
}

/// Reads a plain-text vocabulary: one code per line, `#` starts a comment,
/// blank lines are ignored.
pub fn load_vocabulary(path: &Path, kind: CodeKind) -> Result<Vec<MedicalCode>, VocabError> {
    let text = fs::read_to_string(path).map_err(|source| VocabError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut codes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let code = MedicalCode::parse(body, kind)
            .map_err(|source| VocabError::Parse { line: i + 1, source })?;
        codes.push(code);
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(s: &str) -> MedicalCode {
        MedicalCode::parse(s, CodeKind::Diagnosis).unwrap()
    }

    fn proc_code(s: &str) -> MedicalCode {
        MedicalCode::parse(s, CodeKind::Procedure).unwrap()
    }

    #[test]
    fn parses_diabetes_leaf() {
        let c = diag("250.01");
        assert_eq!(c.chars(), b"25001");
        assert_eq!(c.len(), 5);
        assert_eq!(c.digit_sequence(), vec![2, 5, 0, 0, 1]);
        assert_eq!(c.canonical(), "250.01");
    }

    #[test]
    fn parses_category() {
        let c = diag("250");
        assert_eq!(c.chars(), b"250");
        assert_eq!(c.len(), 3);
        assert_eq!(c.canonical(), "250");
    }

    #[test]
    fn rejects_letter_in_procedure() {
        let err = MedicalCode::parse("36.0Z", CodeKind::Procedure).unwrap_err();
        assert_eq!(
            err,
            ParseError::IllegalChar {
                raw: "36.0Z".into(),
                ch: 'Z',
                position: 4,
                kind: CodeKind::Procedure,
            }
        );
    }

    #[test]
    fn e_and_v_only_lead() {
        assert_eq!(diag("E950.1").chars(), b"E9501");
        assert_eq!(diag("V10").digit_sequence(), vec![11, 1, 0]);
        let err = MedicalCode::parse("2E0", CodeKind::Diagnosis).unwrap_err();
        assert!(matches!(err, ParseError::IllegalChar { ch: 'E', position: 2, .. }));
        let err = MedicalCode::parse("E10", CodeKind::Procedure).unwrap_err();
        assert!(matches!(err, ParseError::IllegalChar { ch: 'E', position: 1, .. }));
    }

    #[test]
    fn dot_placement_is_checked() {
        assert!(matches!(
            MedicalCode::parse("2.50", CodeKind::Diagnosis).unwrap_err(),
            ParseError::MisplacedDot { found: 1, expected: 3, .. }
        ));
        assert!(matches!(
            MedicalCode::parse("E95.01", CodeKind::Diagnosis).unwrap_err(),
            ParseError::MisplacedDot { found: 3, expected: 4, .. }
        ));
        assert!(matches!(
            MedicalCode::parse("250.", CodeKind::Diagnosis).unwrap_err(),
            ParseError::MisplacedDot { .. }
        ));
        assert!(matches!(
            MedicalCode::parse("25.0.1", CodeKind::Diagnosis).unwrap_err(),
            ParseError::MisplacedDot { .. } | ParseError::DuplicateDot { .. }
        ));
        // Dotless input is accepted and normalizes identically.
        assert_eq!(MedicalCode::parse("25001", CodeKind::Diagnosis).unwrap(), diag("250.01"));
    }

    #[test]
    fn too_long_is_rejected() {
        assert!(matches!(
            MedicalCode::parse("250.011", CodeKind::Diagnosis).unwrap_err(),
            ParseError::TooLong { len: 6, max: 5, .. }
        ));
        assert!(matches!(
            MedicalCode::parse("36.011", CodeKind::Procedure).unwrap_err(),
            ParseError::TooLong { len: 5, max: 4, .. }
        ));
    }

    #[test]
    fn parent_chain_reaches_root() {
        let leaf = diag("250.01");
        let p1 = leaf.parent().unwrap();
        assert_eq!(p1.canonical(), "250.0");
        let p2 = p1.parent().unwrap();
        assert_eq!(p2.canonical(), "250");
        assert!(p2.parent().is_none());

        assert_eq!(proc_code("36.01").parent().unwrap().canonical(), "36.0");
        let e = diag("E950.1");
        assert_eq!(e.parent().unwrap().canonical(), "E950");
        assert!(diag("E950").parent().is_none());
    }

    #[test]
    fn round_trip_on_mixed_vocabulary() {
        for s in ["250", "250.0", "250.01", "V10", "V10.1", "E950", "E950.1", "001.9"] {
            let c = diag(s);
            assert_eq!(c.canonical(), s);
            assert_eq!(MedicalCode::parse(&c.canonical(), CodeKind::Diagnosis).unwrap(), c);
        }
        for s in ["36", "36.0", "36.01", "0"] {
            let c = proc_code(s);
            assert_eq!(c.canonical(), s);
            assert_eq!(MedicalCode::parse(&c.canonical(), CodeKind::Procedure).unwrap(), c);
        }
    }

    #[test]
    fn builds_nested_chain() {
        let codes = vec![diag("250"), diag("250.0"), diag("250.01")];
        let tree = HierarchyTree::build(&codes, CodeKind::Diagnosis).unwrap();
        assert_eq!(tree.len(), 4);
        assert_eq!(tree.real_len(), 3);
        let c250 = tree.id_of_str("250").unwrap();
        let c2500 = tree.id_of_str("250.0").unwrap();
        let c25001 = tree.id_of_str("250.01").unwrap();
        assert_eq!(tree.depth_of(c250), 1);
        assert_eq!(tree.depth_of(c2500), 2);
        assert_eq!(tree.depth_of(c25001), 3);
        assert_eq!(tree.parent_of(c25001), Some(c2500));
        assert_eq!(tree.parent_of(c2500), Some(c250));
        assert_eq!(tree.parent_of(c250), Some(ROOT_ID));
        assert_eq!(tree.parent_of(ROOT_ID), None);
    }

    #[test]
    fn implied_ancestors_are_inserted() {
        let tree = HierarchyTree::build(&[diag("250.01")], CodeKind::Diagnosis).unwrap();
        assert_eq!(tree.real_len(), 3);
        assert!(tree.id_of_str("250.0").is_some());
        assert!(tree.id_of_str("250").is_some());
    }

    #[test]
    fn empty_input_gives_root_only() {
        let tree = HierarchyTree::build(&[], CodeKind::Diagnosis).unwrap();
        assert_eq!(tree.len(), 1);
        assert_eq!(tree.real_len(), 0);
    }

    #[test]
    fn mixed_kinds_rejected() {
        let err = HierarchyTree::build(&[diag("250"), proc_code("36")], CodeKind::Diagnosis)
            .unwrap_err();
        assert!(matches!(err, HierarchyError::MixedKinds { .. }));
    }

    #[test]
    fn prefix_property_and_closure_hold_treewide() {
        let codes: Vec<MedicalCode> = ["250.01", "250.02", "V10.1", "E950.1", "401.9", "38"]
            .iter()
            .map(|s| diag(s))
            .collect();
        let tree = HierarchyTree::build(&codes, CodeKind::Diagnosis).unwrap();
        for id in tree.real_ids() {
            let node = tree.node(id).unwrap();
            let pid = tree.parent_of(id).unwrap();
            if pid != ROOT_ID {
                let parent = tree.node(pid).unwrap();
                assert!(node.chars().starts_with(parent.chars()));
                assert!(parent.len() < node.len());
            }
            assert_eq!(tree.depth_of(id), tree.depth_of(pid) + 1);
            // Climbing by parent() reaches the root marker in <= 5 steps.
            let mut cursor = Some(node.clone());
            let mut steps = 0;
            while let Some(c) = cursor {
                cursor = c.parent();
                steps += 1;
                assert!(steps <= 5);
            }
        }
    }

    #[test]
    fn node_ids_are_deterministic() {
        let a = vec![diag("401.9"), diag("250.01"), diag("250.01"), diag("V10")];
        let b = vec![diag("250.01"), diag("V10"), diag("401.9")];
        let ta = HierarchyTree::build(&a, CodeKind::Diagnosis).unwrap();
        let tb = HierarchyTree::build(&b, CodeKind::Diagnosis).unwrap();
        assert_eq!(ta.len(), tb.len());
        for id in 0..ta.len() {
            assert_eq!(ta.node(id).unwrap(), tb.node(id).unwrap());
        }
        assert_eq!(ta.to_json(), tb.to_json());
    }

    #[test]
    fn vocabulary_file_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        std::fs::write(&path, "# header\n250.01\n  401.9  # inline\n\nV10\n").unwrap();
        let codes = load_vocabulary(&path, CodeKind::Diagnosis).unwrap();
        assert_eq!(
            codes.iter().map(|c| c.canonical()).collect::<Vec<_>>(),
            vec!["250.01", "401.9", "V10"]
        );

        std::fs::write(&path, "250.01\nbogus!\n").unwrap();
        let err = load_vocabulary(&path, CodeKind::Diagnosis).unwrap_err();
        assert!(matches!(err, VocabError::Parse { line: 2, .. }));
    }
}
