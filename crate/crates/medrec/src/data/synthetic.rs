//! Hierarchy-correlated synthetic EHR generator.
//!
//! The generator plants recoverable signal in subtree membership: disjoint
//! diagnosis subtrees act as condition clusters, each tied to a fixed
//! medication subset. Every visit samples a few clusters, draws leaf codes
//! from their subtrees and labels the visit with the union of the clusters'
//! medications under symmetric label noise. A configurable share of patients
//! draws from leaves that all other patients never see (same parent,
//! different final digit), so a held-out split over those patients probes
//! generalization across siblings in the hierarchy.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{dataset_from_records, DataError, EhrDataset, PatientRecord, VisitRecord, VocabPolicy};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub patients: usize,
    /// Disjoint diagnosis subtrees acting as condition clusters.
    pub clusters: usize,
    /// Leaf codes per cluster.
    pub codes_per_cluster: usize,
    /// Medications tied to each cluster (disjoint across clusters).
    pub meds_per_cluster: usize,
    pub visits_min: usize,
    pub visits_max: usize,
    /// Probability that each medication label bit flips.
    pub noise_rate: f64,
    /// Leaves per cluster reserved for sibling-holdout patients; 0 disables.
    pub holdout_leaves_per_cluster: usize,
    /// Share of patients that draw holdout leaves and belong in the test
    /// split.
    pub forced_test_fraction: f64,
}

impl Default for SyntheticSpec {
    /// The reference benchmark: 1,000 patients over a 300-leaf diagnosis
    /// tree (20 clusters of 15), noise 0.1, sibling holdout on.
    fn default() -> Self {
        SyntheticSpec {
            patients: 1000,
            clusters: 20,
            codes_per_cluster: 15,
            meds_per_cluster: 4,
            visits_min: 2,
            visits_max: 4,
            noise_rate: 0.1,
            holdout_leaves_per_cluster: 3,
            forced_test_fraction: 0.1,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: String| Err(DataError::InfeasibleSpec(msg));
        if self.patients == 0 || self.clusters == 0 || self.codes_per_cluster == 0 {
            return fail("patients, clusters and codes_per_cluster must be positive".into());
        }
        if self.clusters > 900 {
            return fail(format!("at most 900 clusters (three-digit categories), got {}", self.clusters));
        }
        if self.codes_per_cluster > 100 {
            return fail(format!(
                "at most 100 leaves per cluster (ten per four-digit parent), got {}",
                self.codes_per_cluster
            ));
        }
        if self.meds_per_cluster == 0 {
            return fail("meds_per_cluster must be positive".into());
        }
        if self.visits_min < 2 || self.visits_max < self.visits_min {
            return fail(format!(
                "visit range [{}, {}] must satisfy 2 <= min <= max",
                self.visits_min, self.visits_max
            ));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return fail(format!("noise_rate {} outside [0, 1)", self.noise_rate));
        }
        if !(0.0..1.0).contains(&self.forced_test_fraction) {
            return fail(format!(
                "forced_test_fraction {} outside [0, 1)",
                self.forced_test_fraction
            ));
        }
        // Holdout leaves come from the tail of the first ten-leaf block, so
        // at least one trainable sibling must remain beside them.
        let first_block = self.codes_per_cluster.min(10);
        if self.holdout_leaves_per_cluster + 1 > first_block {
            return fail(format!(
                "holdout_leaves_per_cluster {} leaves no trainable sibling in a block of {}",
                self.holdout_leaves_per_cluster, first_block
            ));
        }
        Ok(())
    }
}

/// The planted structure behind a generated dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Three-digit category code per cluster.
    pub cluster_categories: Vec<String>,
    /// All leaf codes per cluster, holdout leaves included.
    pub cluster_leaves: Vec<Vec<String>>,
    /// Medication names per cluster.
    pub cluster_meds: Vec<Vec<String>>,
    /// Leaves reserved for forced-test patients.
    pub holdout_codes: Vec<String>,
    /// Patients that sample holdout leaves; force these into the test split.
    pub forced_test_patients: Vec<String>,
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let json = serde_json::to_string_pretty(self).expect("plain data serializes");
        std::fs::write(path, json).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn leaf_code(category: usize, leaf: usize) -> String {
    // Four-digit parent = category plus the decade digit; leaves add one.
    format!("{:03}{}{}", category, leaf / 10, leaf % 10)
}

/// Generates a dataset and its ground truth. Deterministic under `seed`.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(EhrDataset, GroundTruth), DataError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let n_meds = spec.clusters * spec.meds_per_cluster;
    let med_name = |m: usize| format!("M{m:03}");

    let mut cluster_categories = Vec::with_capacity(spec.clusters);
    let mut cluster_leaves: Vec<Vec<String>> = Vec::with_capacity(spec.clusters);
    let mut train_leaves: Vec<Vec<String>> = Vec::with_capacity(spec.clusters);
    let mut holdout_leaves: Vec<Vec<String>> = Vec::with_capacity(spec.clusters);
    let mut cluster_meds: Vec<Vec<String>> = Vec::with_capacity(spec.clusters);
    let mut proc_codes: Vec<Vec<String>> = Vec::with_capacity(spec.clusters);
    for c in 0..spec.clusters {
        let category = 100 + c;
        cluster_categories.push(format!("{category:03}"));
        let leaves: Vec<String> = (0..spec.codes_per_cluster)
            .map(|l| leaf_code(category, l))
            .collect();
        // Holdout leaves take the tail of the first decade block so they
        // always share a four-digit parent with trainable siblings.
        let first_block = spec.codes_per_cluster.min(10);
        let held: BTreeSet<usize> = (first_block - spec.holdout_leaves_per_cluster..first_block).collect();
        holdout_leaves.push(held.iter().map(|&l| leaves[l].clone()).collect());
        train_leaves.push(
            leaves
                .iter()
                .enumerate()
                .filter(|(l, _)| !held.contains(l))
                .map(|(_, s)| s.clone())
                .collect(),
        );
        cluster_leaves.push(leaves);
        cluster_meds.push(
            (c * spec.meds_per_cluster..(c + 1) * spec.meds_per_cluster)
                .map(med_name)
                .collect(),
        );
        // Two procedure leaves under a per-cluster two-digit category.
        let proc_cat = 10 + (c % 89);
        proc_codes.push(vec![format!("{proc_cat}0"), format!("{proc_cat}1")]);
    }

    let n_forced = (spec.patients as f64 * spec.forced_test_fraction).round() as usize;
    let mut records = Vec::with_capacity(spec.patients);
    let mut forced_ids = Vec::with_capacity(n_forced);
    for p in 0..spec.patients {
        let forced = p < n_forced && spec.holdout_leaves_per_cluster > 0;
        let id = format!("p{p:05}");
        if forced {
            forced_ids.push(id.clone());
        }
        let n_visits = rng.gen_range(spec.visits_min..=spec.visits_max);
        let mut visits = Vec::with_capacity(n_visits);
        for _ in 0..n_visits {
            let k = rng.gen_range(1..=3usize.min(spec.clusters));
            let mut chosen = sample(&mut rng, spec.clusters, k).into_vec();
            chosen.sort_unstable();

            let mut diag = BTreeSet::new();
            let mut proc = BTreeSet::new();
            let mut union: BTreeSet<String> = BTreeSet::new();
            for &c in &chosen {
                let n_leaves = rng.gen_range(1..=3usize);
                if forced {
                    // Guarantee at least one unseen sibling per cluster draw.
                    let held = &holdout_leaves[c];
                    diag.insert(held[rng.gen_range(0..held.len())].clone());
                    for _ in 1..n_leaves {
                        let all = &cluster_leaves[c];
                        diag.insert(all[rng.gen_range(0..all.len())].clone());
                    }
                } else {
                    let pool = &train_leaves[c];
                    for _ in 0..n_leaves {
                        diag.insert(pool[rng.gen_range(0..pool.len())].clone());
                    }
                }
                union.extend(cluster_meds[c].iter().cloned());
                if rng.gen_bool(0.7) {
                    let procs = &proc_codes[c];
                    proc.insert(procs[rng.gen_range(0..procs.len())].clone());
                }
            }

            let mut meds = BTreeSet::new();
            for m in 0..n_meds {
                let name = med_name(m);
                let mut present = union.contains(&name);
                if spec.noise_rate > 0.0 && rng.gen_bool(spec.noise_rate) {
                    present = !present;
                }
                if present {
                    meds.insert(name);
                }
            }
            if meds.is_empty() {
                // Noise wiped the whole label set; keep the invariant.
                meds.insert(union.iter().next().expect("clusters have meds").clone());
            }

            visits.push(VisitRecord {
                diag: diag.into_iter().collect(),
                proc: proc.into_iter().collect(),
                med: meds.into_iter().collect(),
            });
        }
        records.push((p + 1, PatientRecord {
            patient_id: id,
            visits,
        }));
    }

    // Fixed vocabulary over the full planted structure, so unseen holdout
    // leaves are representable even if sampling never drew some of them.
    let diag_vocab = cluster_leaves
        .iter()
        .flatten()
        .map(|s| crate::icd::MedicalCode::parse(s, crate::icd::CodeKind::Diagnosis).unwrap())
        .collect();
    let proc_vocab = proc_codes
        .iter()
        .flatten()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|s| crate::icd::MedicalCode::parse(s, crate::icd::CodeKind::Procedure).unwrap())
        .collect();
    let med_vocab = (0..n_meds).map(med_name).collect();
    let ds = dataset_from_records(
        &records,
        VocabPolicy::Fixed {
            diag: diag_vocab,
            proc: proc_vocab,
            med: med_vocab,
        },
    )?;

    let truth = GroundTruth {
        cluster_categories,
        cluster_leaves,
        cluster_meds,
        holdout_codes: holdout_leaves.into_iter().flatten().collect(),
        forced_test_patients: forced_ids,
    };
    Ok((ds, truth))
}
