//! Multi-hot position encoding of a code's digit sequence and its trainable
//! projection.
//!
//! A code of kind with max length `L` and alphabet size `A` becomes a binary
//! vector of length `L*A`: block `l` holds the one-hot of digit `l`, and
//! blocks past the code's length stay all-zero. The projection is a linear
//! layer followed by ReLU, keeping outputs non-negative so pooled visit
//! vectors cannot cancel.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::graph::{GraphError, NodeId, ParamId, ParamStore, Tape};
use crate::icd::{CodeKind, MedicalCode};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Error)]
pub enum PositionError {
    #[error("code kind {found} does not match encoder kind {expected}")]
    KindMismatch { expected: CodeKind, found: CodeKind },
    #[error("code \"{code}\" has {len} digits, more than the {max} positions encoded")]
    TooLong { code: String, len: usize, max: usize },
    #[error("input length {found} does not match encoding length {expected}")]
    BadLength { expected: usize, found: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Multi-hot digit encoding for `code`: exactly `code.len()` ones at flat
/// indices `block * A + digit_index`.
pub fn multi_hot(code: &MedicalCode) -> Result<Tensor, PositionError> {
    let kind = code.kind();
    let (max_len, alpha) = (kind.max_len(), kind.alphabet_size());
    if code.len() > max_len {
        return Err(PositionError::TooLong {
            code: code.canonical(),
            len: code.len(),
            max: max_len,
        });
    }
    let mut out = Tensor::zeros(Shape::Vector(max_len * alpha));
    for (block, digit) in code.digit_sequence().into_iter().enumerate() {
        out.set(block * alpha + digit, 1.0);
    }
    Ok(out)
}

/// Count of differing entries between two equal-length 0/1 vectors.
pub fn hamming(a: &Tensor, b: &Tensor) -> usize {
    assert_eq!(a.shape(), b.shape(), "hamming shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .filter(|(x, y)| x != y)
        .count()
}

/// Trainable projection of multi-hot encodings into the embedding space.
pub struct PositionEncoder {
    kind: CodeKind,
    dim: usize,
    weight: ParamId,
    bias: ParamId,
}

impl PositionEncoder {
    /// Registers the projection parameters under `prefix.weight` /
    /// `prefix.bias`. Weights start uniform in ±1/sqrt(L*A); bias at zero.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        kind: CodeKind,
        dim: usize,
        seed: u64,
    ) -> Self {
        let input = kind.max_len() * kind.alphabet_size();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bound = 1.0 / (input as f64).sqrt();
        let weight = store.register(
            &format!("{prefix}.weight"),
            Tensor::uniform(Shape::Matrix(dim, input), bound, &mut rng),
        );
        let bias = store.register(&format!("{prefix}.bias"), Tensor::zeros(Shape::Vector(dim)));
        PositionEncoder {
            kind,
            dim,
            weight,
            bias,
        }
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_len(&self) -> usize {
        self.kind.max_len() * self.kind.alphabet_size()
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }

    /// Multi-hot encoding with the encoder's kind enforced.
    pub fn encode_multi_hot(&self, code: &MedicalCode) -> Result<Tensor, PositionError> {
        if code.kind() != self.kind {
            return Err(PositionError::KindMismatch {
                expected: self.kind,
                found: code.kind(),
            });
        }
        multi_hot(code)
    }

    /// ReLU(W * pe + b) as tape nodes.
    pub fn project_graph(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        pe: NodeId,
    ) -> Result<NodeId, PositionError> {
        match tape.shape(pe) {
            Shape::Vector(n) if n == self.input_len() => {}
            shape => {
                return Err(PositionError::BadLength {
                    expected: self.input_len(),
                    found: shape.len(),
                })
            }
        }
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let wx = tape.matvec(w, pe)?;
        let lin = tape.add(wx, b)?;
        Ok(tape.relu(lin))
    }

    /// Eager projection of a multi-hot vector.
    pub fn project(&self, store: &ParamStore, pe: &Tensor) -> Result<Tensor, PositionError> {
        let mut tape = Tape::new();
        let pe_node = tape.constant(pe.clone());
        let out = self.project_graph(&mut tape, store, pe_node)?;
        Ok(tape.value(out).clone())
    }

    /// Eager s_v for a code.
    pub fn encode(&self, store: &ParamStore, code: &MedicalCode) -> Result<Tensor, PositionError> {
        let pe = self.encode_multi_hot(code)?;
        self.project(store, &pe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn diag(s: &str) -> MedicalCode {
        MedicalCode::parse(s, CodeKind::Diagnosis).unwrap()
    }

    #[test]
    fn multi_hot_flat_indices() {
        let pe = multi_hot(&diag("250.01")).unwrap();
        assert_eq!(pe.len(), 60);
        let ones: Vec<usize> = pe
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones, vec![2, 17, 24, 36, 49]);
    }

    #[test]
    fn short_code_pads_with_zero_blocks() {
        let pe = multi_hot(&diag("250")).unwrap();
        let ones: Vec<usize> = pe
            .data()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ones, vec![2, 17, 24]);
        assert!(pe.data()[36..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sibling_codes_differ_by_exactly_two_bits() {
        let a = multi_hot(&diag("250.01")).unwrap();
        let b = multi_hot(&diag("250.02")).unwrap();
        assert_eq!(hamming(&a, &b), 2);
    }

    #[test]
    fn letters_use_alphabet_slots_ten_and_eleven() {
        let v = multi_hot(&diag("V10")).unwrap();
        assert_eq!(v.get(11), 1.0); // block 0, symbol 'V'
        let e = multi_hot(&diag("E950")).unwrap();
        assert_eq!(e.get(10), 1.0); // block 0, symbol 'E'
    }

    /// Exact per-position Hamming identity: 2 bits per position where both
    /// codes carry digits that differ, 1 bit per position covered by exactly
    /// one code.
    #[test]
    fn hamming_identity_on_random_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for _ in 0..500 {
            let la = rng.gen_range(3..=5);
            let lb = rng.gen_range(3..=5);
            let mk = |len: usize, rng: &mut ChaCha20Rng| {
                let s: String = (0..len)
                    .map(|_| char::from(b'0' + rng.gen_range(0..10) as u8))
                    .collect();
                MedicalCode::parse(&s, CodeKind::Diagnosis).unwrap()
            };
            let a = mk(la, &mut rng);
            let b = mk(lb, &mut rng);
            let (da, db) = (a.digit_sequence(), b.digit_sequence());
            let mut expected = 0;
            for l in 0..la.max(lb) {
                match (da.get(l), db.get(l)) {
                    (Some(x), Some(y)) if x != y => expected += 2,
                    (Some(_), None) | (None, Some(_)) => expected += 1,
                    _ => {}
                }
            }
            let ha = multi_hot(&a).unwrap();
            let hb = multi_hot(&b).unwrap();
            assert_eq!(hamming(&ha, &hb), expected, "{a} vs {b}");
        }
    }

    /// Pairs that differ at every position past their shared prefix: longer
    /// shared prefixes can only shrink the distance.
    #[test]
    fn prefix_locality_for_fully_diverging_suffixes() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let len = 5;
        for _ in 0..200 {
            let base: Vec<u8> = (0..len).map(|_| b'0' + rng.gen_range(0..10) as u8).collect();
            let diverge = |prefix: usize, rng: &mut ChaCha20Rng| {
                let mut other = base.clone();
                for item in other.iter_mut().skip(prefix) {
                    let cur = *item;
                    loop {
                        let cand = b'0' + rng.gen_range(0..10) as u8;
                        if cand != cur {
                            *item = cand;
                            break;
                        }
                    }
                }
                MedicalCode::parse(std::str::from_utf8(&other).unwrap(), CodeKind::Diagnosis)
                    .unwrap()
            };
            let x = MedicalCode::parse(std::str::from_utf8(&base).unwrap(), CodeKind::Diagnosis)
                .unwrap();
            let p = rng.gen_range(1..len);
            let p_shorter = rng.gen_range(0..p);
            let y = diverge(p, &mut rng);
            let y_far = diverge(p_shorter, &mut rng);
            let hx = multi_hot(&x).unwrap();
            let near = hamming(&hx, &multi_hot(&y).unwrap());
            let far = hamming(&hx, &multi_hot(&y_far).unwrap());
            assert!(near <= far, "prefix {p} vs {p_shorter}: {near} > {far}");
        }
    }

    #[test]
    fn zero_projection_gives_zero_vector() {
        let mut store = ParamStore::new();
        let enc = PositionEncoder::register(&mut store, "pos", CodeKind::Diagnosis, 4, 9);
        store.value_mut(enc.weight_id()).fill(0.0);
        let s = enc.encode(&store, &diag("250.01")).unwrap();
        assert_eq!(s.data(), &[0.0; 4]);
    }

    #[test]
    fn indicator_row_selects_multi_hot_entry() {
        let mut store = ParamStore::new();
        let enc = PositionEncoder::register(&mut store, "pos", CodeKind::Diagnosis, 3, 9);
        store.value_mut(enc.weight_id()).fill(0.0);
        // Row 1 reads flat index 2 (block 0 digit '2' of "250.01").
        let cols = enc.input_len();
        store.value_mut(enc.weight_id()).data_mut()[cols + 2] = 1.0;
        let s = enc.encode(&store, &diag("250.01")).unwrap();
        assert_eq!(s.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn projection_is_non_negative() {
        let mut store = ParamStore::new();
        let enc = PositionEncoder::register(&mut store, "pos", CodeKind::Procedure, 16, 123);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..50 {
            let len = rng.gen_range(2..=4);
            let s: String = (0..len)
                .map(|_| char::from(b'0' + rng.gen_range(0..10) as u8))
                .collect();
            let code = MedicalCode::parse(&s, CodeKind::Procedure).unwrap();
            let out = enc.encode(&store, &code).unwrap();
            assert!(out.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn kind_mismatch_and_length_errors() {
        let mut store = ParamStore::new();
        let enc = PositionEncoder::register(&mut store, "pos", CodeKind::Diagnosis, 4, 9);
        let p = MedicalCode::parse("36.01", CodeKind::Procedure).unwrap();
        assert!(matches!(
            enc.encode_multi_hot(&p).unwrap_err(),
            PositionError::KindMismatch { .. }
        ));
        let short = Tensor::zeros(Shape::Vector(10));
        assert!(matches!(
            enc.project(&store, &short).unwrap_err(),
            PositionError::BadLength { expected: 60, found: 10 }
        ));
    }
}
