use super::Conversation;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Default train / validation / test proportions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.87, 0.10, 0.03];

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Conversation>,
    pub validation: Vec<Conversation>,
    pub test: Vec<Conversation>,
}

/// Shuffles whole conversations and cuts them at the cumulative ratios.
pub fn split_dataset(mut convs: Vec<Conversation>, ratios: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::Config(format!("invalid split ratios {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must sum to 1, got {total}")));
    }
    let n = convs.len();
    let train_end = (ratios[0] * n as f64).round() as usize;
    let val_end = (((ratios[0] + ratios[1]) * n as f64).round() as usize).max(train_end);
    let sizes = [train_end, val_end - train_end, n - val_end];
    if sizes.contains(&0) {
        return Err(Error::Size(format!(
            "{n} conversations with ratios {ratios:?} leave an empty split ({sizes:?})"
        )));
    }
    SeededRng::new(seed).shuffle(&mut convs);
    let test = convs.split_off(val_end);
    let validation = convs.split_off(train_end);
    Ok(DatasetSplit {
        train: convs,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn convs(n: usize) -> Vec<Conversation> {
        (0..n)
            .map(|i| Conversation {
                id: format!("c{i}"),
                utterances: Vec::new(),
                extra: Default::default(),
            })
            .collect()
    }

    fn ids(c: &[Conversation]) -> Vec<String> {
        c.iter().map(|c| c.id.clone()).collect()
    }

    #[test]
    fn default_ratios_on_100() {
        let s = split_dataset(convs(100), DEFAULT_RATIOS, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (87, 10, 3));
        let all: BTreeSet<String> = ids(&s.train)
            .into_iter()
            .chain(ids(&s.validation))
            .chain(ids(&s.test))
            .collect();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn degenerate_ratios_are_size_errors() {
        assert!(matches!(
            split_dataset(convs(100), [1.0, 0.0, 0.0], 1),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            split_dataset(convs(2), DEFAULT_RATIOS, 1),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            split_dataset(convs(10), [0.5, 0.5, 0.5], 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn seed_determinism() {
        let a = split_dataset(convs(100), DEFAULT_RATIOS, 5).unwrap();
        let b = split_dataset(convs(100), DEFAULT_RATIOS, 5).unwrap();
        let c = split_dataset(convs(100), DEFAULT_RATIOS, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(ids(&a.train), ids(&c.train));
    }
}
