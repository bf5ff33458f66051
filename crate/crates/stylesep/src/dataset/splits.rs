//! Mixture-level train/dev/test partition at 8:1:1.

use rand::seq::SliceRandom;

use crate::seeding::stream_rng;

use super::types::{MixtureSpec, Split};
use super::DatasetError;

/// Tag each mixture with a split. Counts land within one of the exact
/// 8:1:1 ratio; assignment is deterministic for a fixed seed.
pub fn make_splits(mixtures: &mut [MixtureSpec], seed: u64) -> Result<(), DatasetError> {
    let n = mixtures.len();
    if n < 10 {
        return Err(DatasetError::Validation(format!("need at least 10 mixtures to split, got {}", n)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, &["splits"]);
    order.shuffle(&mut rng);

    let n_dev = ((n as f64) * 0.1).round() as usize;
    let n_test = n_dev;
    let n_train = n - n_dev - n_test;
    for (rank, &idx) in order.iter().enumerate() {
        mixtures[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::types::{ClueKind, ClueSpec, LengthClass};

    fn specs(n: usize) -> Vec<MixtureSpec> {
        (0..n)
            .map(|i| MixtureSpec {
                mixture_id: format!("mix_{:06}", i),
                target_id: "t".to_string(),
                interference_id: "i".to_string(),
                target_lufs: -29.0,
                interference_lufs: -29.0,
                onset: 0,
                clue: ClueSpec {
                    kind: ClueKind::TypeIText,
                    text: "The happy voice.".to_string(),
                    length_class: LengthClass::Short,
                    reference_id: None,
                    highlighted_attribute: None,
                },
                split: Split::Train,
                clipping_gain: 1.0,
            })
            .collect()
    }

    fn counts(m: &[MixtureSpec]) -> (usize, usize, usize) {
        let tr = m.iter().filter(|s| s.split == Split::Train).count();
        let de = m.iter().filter(|s| s.split == Split::Dev).count();
        let te = m.iter().filter(|s| s.split == Split::Test).count();
        (tr, de, te)
    }

    #[test]
    fn hundred_splits_80_10_10() {
        let mut m = specs(100);
        make_splits(&mut m, 3).unwrap();
        assert_eq!(counts(&m), (80, 10, 10));
    }

    #[test]
    fn ten_splits_8_1_1() {
        let mut m = specs(10);
        make_splits(&mut m, 3).unwrap();
        assert_eq!(counts(&m), (8, 1, 1));
    }

    #[test]
    fn same_seed_same_assignment() {
        let mut a = specs(57);
        let mut b = specs(57);
        make_splits(&mut a, 11).unwrap();
        make_splits(&mut b, 11).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.split, y.split);
        }
    }

    #[test]
    fn too_few_mixtures_rejected() {
        let mut m = specs(9);
        assert!(make_splits(&mut m, 3).is_err());
    }
}
