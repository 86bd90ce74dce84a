//! EHR dataset ingestion, patient-level splitting and the DDI adjacency.
//!
//! The on-disk format is JSON lines, one patient per line:
//! `{"patient_id": "...", "visits": [{"diag": [...], "proc": [...], "med": [...]}]}`.
//! Codes are normalized through the ICD parser; visits are deduplicated and
//! index-encoded against shared vocabularies; patients with fewer than two
//! visits are dropped. Visit order in the file is taken as chronological.

mod synthetic;

pub use synthetic::{generate_synthetic, GroundTruth, SyntheticSpec};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::icd::{CodeKind, HierarchyError, HierarchyTree, MedicalCode, ParseError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: bad {kind} code: {source}")]
    Code {
        line: usize,
        kind: CodeKind,
        source: ParseError,
    },
    #[error("line {line}: patient {patient} visit {visit} has an empty {field} set")]
    EmptyVisitField {
        line: usize,
        patient: String,
        visit: usize,
        field: &'static str,
    },
    #[error("codes outside the fixed vocabulary: {}", offenders.join(", "))]
    UnknownCodes { offenders: Vec<String> },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("need at least {needed} patients to split, have {have}")]
    TooFewPatients { have: usize, needed: usize },
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
    #[error("line {line}: malformed DDI row (expected two comma-separated codes)")]
    MalformedDdiLine { line: usize },
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// Shared vocabularies, index maps and hierarchy trees for one dataset.
#[derive(Debug)]
pub struct CodeSpace {
    pub diag_vocab: Vec<MedicalCode>,
    pub proc_vocab: Vec<MedicalCode>,
    pub med_vocab: Vec<String>,
    pub diag_tree: Arc<HierarchyTree>,
    pub proc_tree: Arc<HierarchyTree>,
    diag_index: BTreeMap<Vec<u8>, usize>,
    proc_index: BTreeMap<Vec<u8>, usize>,
    med_index: BTreeMap<String, usize>,
    /// Vocabulary index -> tree node id.
    diag_nodes: Vec<usize>,
    proc_nodes: Vec<usize>,
}

impl CodeSpace {
    fn build(
        diag_vocab: Vec<MedicalCode>,
        proc_vocab: Vec<MedicalCode>,
        med_vocab: Vec<String>,
    ) -> Result<Self, DataError> {
        let diag_tree = Arc::new(HierarchyTree::build(&diag_vocab, CodeKind::Diagnosis)?);
        let proc_tree = Arc::new(HierarchyTree::build(&proc_vocab, CodeKind::Procedure)?);
        let diag_index = diag_vocab
            .iter()
            .enumerate()
            .map(|(i, c)| (c.chars().to_vec(), i))
            .collect();
        let proc_index = proc_vocab
            .iter()
            .enumerate()
            .map(|(i, c)| (c.chars().to_vec(), i))
            .collect();
        let med_index = med_vocab
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let diag_nodes = diag_vocab
            .iter()
            .map(|c| diag_tree.id_of(c).expect("vocab codes are in the tree"))
            .collect();
        let proc_nodes = proc_vocab
            .iter()
            .map(|c| proc_tree.id_of(c).expect("vocab codes are in the tree"))
            .collect();
        Ok(CodeSpace {
            diag_vocab,
            proc_vocab,
            med_vocab,
            diag_tree,
            proc_tree,
            diag_index,
            proc_index,
            med_index,
            diag_nodes,
            proc_nodes,
        })
    }

    pub fn n_diag(&self) -> usize {
        self.diag_vocab.len()
    }

    pub fn n_proc(&self) -> usize {
        self.proc_vocab.len()
    }

    pub fn n_med(&self) -> usize {
        self.med_vocab.len()
    }

    pub fn diag_id(&self, code: &MedicalCode) -> Option<usize> {
        self.diag_index.get(code.chars()).copied()
    }

    pub fn proc_id(&self, code: &MedicalCode) -> Option<usize> {
        self.proc_index.get(code.chars()).copied()
    }

    pub fn med_id(&self, med: &str) -> Option<usize> {
        self.med_index.get(med).copied()
    }

    /// Tree node id for a diagnosis vocabulary index.
    pub fn diag_node(&self, vocab_idx: usize) -> usize {
        self.diag_nodes[vocab_idx]
    }

    pub fn proc_node(&self, vocab_idx: usize) -> usize {
        self.proc_nodes[vocab_idx]
    }

    /// SHA-256 over the three vocabularies; checkpoints carry this so that
    /// evaluation refuses a model trained against different spaces.
    pub fn vocab_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(b"diag\n");
        for c in &self.diag_vocab {
            hasher.update(c.canonical().as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(b"proc\n");
        for c in &self.proc_vocab {
            hasher.update(c.canonical().as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(b"med\n");
        for m in &self.med_vocab {
            hasher.update(m.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

/// One visit as sorted, deduplicated index sets over the space vocabularies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Visit {
    pub diagnoses: Vec<usize>,
    pub procedures: Vec<usize>,
    pub medications: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Patient {
    pub id: String,
    pub visits: Vec<Visit>,
}

/// Patients over a shared [`CodeSpace`]. Splits clone the `Arc`, not the
/// space.
#[derive(Clone, Debug)]
pub struct EhrDataset {
    pub space: Arc<CodeSpace>,
    pub patients: Vec<Patient>,
}

impl EhrDataset {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }

    pub fn n_visits(&self) -> usize {
        self.patients.iter().map(|p| p.visits.len()).sum()
    }
}

/// Whether vocabularies come from the data or are imposed.
pub enum VocabPolicy {
    Discover,
    Fixed {
        diag: Vec<MedicalCode>,
        proc: Vec<MedicalCode>,
        med: Vec<String>,
    },
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub(crate) struct VisitRecord {
    pub diag: Vec<String>,
    pub proc: Vec<String>,
    pub med: Vec<String>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub(crate) struct PatientRecord {
    pub patient_id: String,
    pub visits: Vec<VisitRecord>,
}

/// Loads a JSONL file of patient records. Single-visit patients are
/// filtered out; within-visit duplicates collapse; under a fixed vocabulary
/// every out-of-vocabulary code is collected and reported at once.
pub fn load_jsonl(path: &Path, policy: VocabPolicy) -> Result<EhrDataset, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PatientRecord =
            serde_json::from_str(line).map_err(|source| DataError::Json {
                line: i + 1,
                source,
            })?;
        records.push((i + 1, record));
    }
    dataset_from_records(&records, policy)
}

/// Shared ingestion path for file loads and the synthetic generator.
pub(crate) fn dataset_from_records(
    records: &[(usize, PatientRecord)],
    policy: VocabPolicy,
) -> Result<EhrDataset, DataError> {
    struct Parsed {
        id: String,
        visits: Vec<(BTreeSet<MedicalCode>, BTreeSet<MedicalCode>, BTreeSet<String>)>,
    }

    let mut parsed = Vec::new();
    for (line, record) in records {
        let mut visits = Vec::with_capacity(record.visits.len());
        for (v, visit) in record.visits.iter().enumerate() {
            let mut diag = BTreeSet::new();
            for code in &visit.diag {
                diag.insert(parse_at(code, CodeKind::Diagnosis, *line)?);
            }
            let mut proc = BTreeSet::new();
            for code in &visit.proc {
                proc.insert(parse_at(code, CodeKind::Procedure, *line)?);
            }
            let med: BTreeSet<String> = visit.med.iter().cloned().collect();
            if diag.is_empty() {
                return Err(DataError::EmptyVisitField {
                    line: *line,
                    patient: record.patient_id.clone(),
                    visit: v + 1,
                    field: "diagnosis",
                });
            }
            if med.is_empty() {
                return Err(DataError::EmptyVisitField {
                    line: *line,
                    patient: record.patient_id.clone(),
                    visit: v + 1,
                    field: "medication",
                });
            }
            visits.push((diag, proc, med));
        }
        parsed.push(Parsed {
            id: record.patient_id.clone(),
            visits,
        });
    }
    // Patients with a single visit carry no longitudinal signal.
    parsed.retain(|p| p.visits.len() >= 2);

    let space = match policy {
        VocabPolicy::Discover => {
            let mut diag = BTreeSet::new();
            let mut proc = BTreeSet::new();
            let mut med = BTreeSet::new();
            for p in &parsed {
                for (d, pr, m) in &p.visits {
                    diag.extend(d.iter().map(|c| c.chars().to_vec()));
                    proc.extend(pr.iter().map(|c| c.chars().to_vec()));
                    med.extend(m.iter().cloned());
                }
            }
            let rebuild = |set: BTreeSet<Vec<u8>>, kind: CodeKind| -> Vec<MedicalCode> {
                set.into_iter()
                    .map(|chars| {
                        let s: String = chars.iter().map(|&b| b as char).collect();
                        MedicalCode::parse(&s, kind).expect("re-parse of normalized chars")
                    })
                    .collect()
            };
            CodeSpace::build(
                rebuild(diag, CodeKind::Diagnosis),
                rebuild(proc, CodeKind::Procedure),
                med.into_iter().collect(),
            )?
        }
        VocabPolicy::Fixed { diag, proc, med } => CodeSpace::build(diag, proc, med)?,
    };

    let mut offenders = BTreeSet::new();
    let mut patients = Vec::with_capacity(parsed.len());
    for p in &parsed {
        let mut visits = Vec::with_capacity(p.visits.len());
        for (diag, proc, med) in &p.visits {
            let mut v = Visit {
                diagnoses: Vec::with_capacity(diag.len()),
                procedures: Vec::with_capacity(proc.len()),
                medications: Vec::with_capacity(med.len()),
            };
            for c in diag {
                match space.diag_id(c) {
                    Some(i) => v.diagnoses.push(i),
                    None => {
                        offenders.insert(c.canonical());
                    }
                }
            }
            for c in proc {
                match space.proc_id(c) {
                    Some(i) => v.procedures.push(i),
                    None => {
                        offenders.insert(c.canonical());
                    }
                }
            }
            for m in med {
                match space.med_id(m) {
                    Some(i) => v.medications.push(i),
                    None => {
                        offenders.insert(m.clone());
                    }
                }
            }
            v.diagnoses.sort_unstable();
            v.procedures.sort_unstable();
            v.medications.sort_unstable();
            visits.push(v);
        }
        patients.push(Patient {
            id: p.id.clone(),
            visits,
        });
    }
    if !offenders.is_empty() {
        return Err(DataError::UnknownCodes {
            offenders: offenders.into_iter().collect(),
        });
    }

    Ok(EhrDataset {
        space: Arc::new(space),
        patients,
    })
}

fn parse_at(code: &str, kind: CodeKind, line: usize) -> Result<MedicalCode, DataError> {
    MedicalCode::parse(code, kind).map_err(|source| DataError::Code { line, kind, source })
}

/// Serializes a dataset back to the JSONL schema, one patient per line,
/// deterministically.
pub fn write_jsonl(ds: &EhrDataset, path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    for p in &ds.patients {
        let record = PatientRecord {
            patient_id: p.id.clone(),
            visits: p
                .visits
                .iter()
                .map(|v| VisitRecord {
                    diag: v
                        .diagnoses
                        .iter()
                        .map(|&i| ds.space.diag_vocab[i].canonical())
                        .collect(),
                    proc: v
                        .procedures
                        .iter()
                        .map(|&i| ds.space.proc_vocab[i].canonical())
                        .collect(),
                    med: v
                        .medications
                        .iter()
                        .map(|&i| ds.space.med_vocab[i].clone())
                        .collect(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("plain data serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn check_ratios(ratios: (f64, f64, f64)) -> Result<(), DataError> {
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(ratios));
    }
    Ok(())
}

/// Patient-level split with a seeded shuffle. Valid and test sizes round
/// down; the remainder goes to train.
pub fn split_patients(
    ds: &EhrDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(EhrDataset, EhrDataset, EhrDataset), DataError> {
    split_with_forced_test(ds, ratios, seed, &BTreeSet::new())
}

/// Like [`split_patients`], but the named patients always land in the test
/// split (topped up from the shuffle if they fall short of the test quota).
pub fn split_with_forced_test(
    ds: &EhrDataset,
    ratios: (f64, f64, f64),
    seed: u64,
    forced_test: &BTreeSet<String>,
) -> Result<(EhrDataset, EhrDataset, EhrDataset), DataError> {
    check_ratios(ratios)?;
    let n = ds.patients.len();
    if n < 10 {
        return Err(DataError::TooFewPatients { have: n, needed: 10 });
    }
    let n_valid = (ratios.1 * n as f64).floor() as usize;
    let n_test = (ratios.2 * n as f64).floor() as usize;

    let mut test_idx: Vec<usize> = Vec::new();
    let mut rest: Vec<usize> = Vec::new();
    for (i, p) in ds.patients.iter().enumerate() {
        if forced_test.contains(&p.id) {
            test_idx.push(i);
        } else {
            rest.push(i);
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    while test_idx.len() < n_test {
        test_idx.push(rest.pop().expect("quota below patient count"));
    }
    let n_train = n.saturating_sub(n_valid + test_idx.len().max(n_test));
    let train_idx: Vec<usize> = rest.drain(..n_train.min(rest.len())).collect();
    let valid_idx: Vec<usize> = rest;

    let take = |idx: &[usize]| EhrDataset {
        space: ds.space.clone(),
        patients: idx.iter().map(|&i| ds.patients[i].clone()).collect(),
    };
    Ok((take(&train_idx), take(&valid_idx), take(&test_idx)))
}

/// Symmetric drug-drug interaction adjacency with a zero diagonal.
#[derive(Clone, Debug)]
pub struct DdiMatrix {
    n: usize,
    adj: Vec<bool>,
}

impl DdiMatrix {
    pub fn zeros(n: usize) -> Self {
        DdiMatrix {
            n,
            adj: vec![false; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Sets the symmetric pair; ignores the diagonal.
    pub fn set_edge(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        self.adj[a * self.n + b] = true;
        self.adj[b * self.n + a] = true;
    }

    pub fn is_edge(&self, a: usize, b: usize) -> bool {
        a != b && self.adj[a * self.n + b]
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|a| ((a + 1)..self.n).filter(|&b| self.is_edge(a, b)).count())
            .sum()
    }
}

/// Outcome of loading a DDI pair file.
pub struct DdiLoad {
    pub matrix: DdiMatrix,
    pub skipped_unknown: usize,
    pub skipped_self: usize,
}

/// Loads a two-column CSV of interacting medication pairs. `#` comments and
/// blank lines are skipped; the first data row is treated as a header when
/// neither field is in the vocabulary. Unknown medications and self-pairs
/// are skipped and counted.
pub fn load_ddi(path: &Path, med_vocab: &[String]) -> Result<DdiLoad, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let index: BTreeMap<&str, usize> = med_vocab
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_str(), i))
        .collect();
    let mut matrix = DdiMatrix::zeros(med_vocab.len());
    let mut skipped_unknown = 0usize;
    let mut skipped_self = 0usize;
    let mut first_data_row = true;
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut fields = body.split(',').map(str::trim);
        let (a, b) = match (fields.next(), fields.next()) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => (a, b),
            _ => return Err(DataError::MalformedDdiLine { line: i + 1 }),
        };
        let (ia, ib) = (index.get(a), index.get(b));
        if first_data_row {
            first_data_row = false;
            if ia.is_none() && ib.is_none() {
                continue; // header row
            }
        }
        match (ia, ib) {
            (Some(&ia), Some(&ib)) if ia == ib => skipped_self += 1,
            (Some(&ia), Some(&ib)) => matrix.set_edge(ia, ib),
            _ => skipped_unknown += 1,
        }
    }
    Ok(DdiLoad {
        matrix,
        skipped_unknown,
        skipped_self,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    const TWO_VISITS: &str = r#"{"patient_id":"p1","visits":[{"diag":["250.01"],"proc":["36.01"],"med":["M1"]},{"diag":["250.02","401.9"],"proc":[],"med":["M1","M2"]}]}"#;

    #[test]
    fn loads_minimal_well_formed_input() {
        let (_d, path) = write_lines(&[TWO_VISITS]);
        let ds = load_jsonl(&path, VocabPolicy::Discover).unwrap();
        assert_eq!(ds.n_patients(), 1);
        assert_eq!(ds.n_visits(), 2);
        assert_eq!(ds.space.n_diag(), 3);
        assert_eq!(ds.space.n_proc(), 1);
        assert_eq!(ds.space.n_med(), 2);
        // The tree closes over ancestors even though only leaves are in-vocab.
        assert!(ds.space.diag_tree.id_of_str("250.0").is_some());
        assert!(ds.space.diag_tree.id_of_str("250").is_some());
    }

    #[test]
    fn single_visit_patients_are_filtered() {
        let single = r#"{"patient_id":"p2","visits":[{"diag":["250"],"proc":[],"med":["M1"]}]}"#;
        let (_d, path) = write_lines(&[TWO_VISITS, single]);
        let ds = load_jsonl(&path, VocabPolicy::Discover).unwrap();
        assert_eq!(ds.n_patients(), 1);
        assert_eq!(ds.patients[0].id, "p1");
    }

    #[test]
    fn malformed_json_reports_line_number() {
        let (_d, path) = write_lines(&[TWO_VISITS, "{not json"]);
        let err = load_jsonl(&path, VocabPolicy::Discover).unwrap_err();
        assert!(matches!(err, DataError::Json { line: 2, .. }));
    }

    #[test]
    fn fixed_vocabulary_lists_all_offenders() {
        let (_d, path) = write_lines(&[TWO_VISITS]);
        let policy = VocabPolicy::Fixed {
            diag: vec![MedicalCode::parse("250.01", CodeKind::Diagnosis).unwrap()],
            proc: vec![MedicalCode::parse("36.01", CodeKind::Procedure).unwrap()],
            med: vec!["M1".into()],
        };
        let err = load_jsonl(&path, policy).unwrap_err();
        match err {
            DataError::UnknownCodes { offenders } => {
                assert_eq!(offenders, vec!["250.02", "401.9", "M2"]);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn within_visit_duplicates_collapse() {
        let dup = r#"{"patient_id":"p1","visits":[{"diag":["250.01","25001"],"proc":[],"med":["M1","M1"]},{"diag":["250.01"],"proc":[],"med":["M1"]}]}"#;
        let (_d, path) = write_lines(&[dup]);
        let ds = load_jsonl(&path, VocabPolicy::Discover).unwrap();
        assert_eq!(ds.patients[0].visits[0].diagnoses.len(), 1);
        assert_eq!(ds.patients[0].visits[0].medications.len(), 1);
    }

    #[test]
    fn empty_required_fields_are_errors() {
        let bad = r#"{"patient_id":"p1","visits":[{"diag":[],"proc":[],"med":["M1"]},{"diag":["250"],"proc":[],"med":["M1"]}]}"#;
        let (_d, path) = write_lines(&[bad]);
        let err = load_jsonl(&path, VocabPolicy::Discover).unwrap_err();
        assert!(matches!(
            err,
            DataError::EmptyVisitField { field: "diagnosis", visit: 1, .. }
        ));
    }

    fn many_patients(n: usize) -> EhrDataset {
        let lines: Vec<String> = (0..n)
            .map(|i| {
                format!(
                    r#"{{"patient_id":"p{i}","visits":[{{"diag":["250.01"],"proc":[],"med":["M1"]}},{{"diag":["401.9"],"proc":[],"med":["M2"]}}]}}"#
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("many.jsonl");
        fs::write(&path, lines.join("\n")).unwrap();
        load_jsonl(&path, VocabPolicy::Discover).unwrap()
    }

    #[test]
    fn split_is_patient_level_and_sized() {
        let ds = many_patients(100);
        let (train, valid, test) = split_patients(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(train.n_patients(), 80);
        assert_eq!(valid.n_patients(), 10);
        assert_eq!(test.n_patients(), 10);
        let mut all: Vec<&str> = train
            .patients
            .iter()
            .chain(&valid.patients)
            .chain(&test.patients)
            .map(|p| p.id.as_str())
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100, "splits overlap or drop patients");
    }

    #[test]
    fn degenerate_ratios() {
        let ds = many_patients(12);
        let (train, valid, test) = split_patients(&ds, (1.0, 0.0, 0.0), 7).unwrap();
        assert_eq!(train.n_patients(), 12);
        assert_eq!(valid.n_patients() + test.n_patients(), 0);
        assert!(split_patients(&ds, (0.5, 0.2, 0.2), 7).is_err());
        assert!(split_patients(&ds, (1.2, -0.1, -0.1), 7).is_err());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let ds = many_patients(50);
        let ids = |d: &EhrDataset| d.patients.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
        let (a1, b1, c1) = split_patients(&ds, (0.8, 0.1, 0.1), 99).unwrap();
        let (a2, b2, c2) = split_patients(&ds, (0.8, 0.1, 0.1), 99).unwrap();
        assert_eq!(ids(&a1), ids(&a2));
        assert_eq!(ids(&b1), ids(&b2));
        assert_eq!(ids(&c1), ids(&c2));
        let (a3, _, _) = split_patients(&ds, (0.8, 0.1, 0.1), 100).unwrap();
        assert_ne!(ids(&a1), ids(&a3));
    }

    #[test]
    fn forced_patients_land_in_test() {
        let ds = many_patients(20);
        let forced: BTreeSet<String> = ["p3".to_string(), "p11".to_string()].into();
        let (_train, _valid, test) = split_with_forced_test(&ds, (0.8, 0.1, 0.1), 5, &forced).unwrap();
        let test_ids: BTreeSet<String> = test.patients.iter().map(|p| p.id.clone()).collect();
        assert!(test_ids.contains("p3") && test_ids.contains("p11"));
        assert_eq!(test.n_patients(), 2);
    }

    #[test]
    fn ddi_pairs_are_symmetric() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ddi.csv");
        fs::write(&path, "med_a,med_b\nA,B\n").unwrap();
        let vocab = vec!["A".to_string(), "B".to_string(), "C".to_string()];
        let load = load_ddi(&path, &vocab).unwrap();
        assert!(load.matrix.is_edge(0, 1));
        assert!(load.matrix.is_edge(1, 0));
        assert_eq!(load.matrix.edge_count(), 1);
        assert!(!load.matrix.is_edge(0, 2));
    }

    #[test]
    fn ddi_empty_file_gives_zero_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ddi.csv");
        fs::write(&path, "").unwrap();
        let load = load_ddi(&path, &["A".to_string()]).unwrap();
        assert_eq!(load.matrix.edge_count(), 0);
    }

    #[test]
    fn ddi_self_pairs_and_unknowns_are_counted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ddi.csv");
        fs::write(&path, "A,A\nA,Z\nB,A\n").unwrap();
        let vocab = vec!["A".to_string(), "B".to_string()];
        let load = load_ddi(&path, &vocab).unwrap();
        assert_eq!(load.skipped_self, 1);
        assert_eq!(load.skipped_unknown, 1);
        assert!(load.matrix.is_edge(0, 1));
        assert!(!load.matrix.is_edge(0, 0));
    }

    #[test]
    fn jsonl_round_trip_is_stable() {
        let (_d, path) = write_lines(&[TWO_VISITS]);
        let ds = load_jsonl(&path, VocabPolicy::Discover).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("a.jsonl");
        let out2 = dir.path().join("b.jsonl");
        write_jsonl(&ds, &out1).unwrap();
        let ds2 = load_jsonl(&out1, VocabPolicy::Discover).unwrap();
        write_jsonl(&ds2, &out2).unwrap();
        assert_eq!(fs::read(&out1).unwrap(), fs::read(&out2).unwrap());
    }
}
