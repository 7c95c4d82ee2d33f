use crate::corpus::LabelId;
use crate::error::{Error, Result};

pub fn accuracy(predictions: &[LabelId], gold: &[LabelId]) -> Result<f64> {
    check(predictions, gold)?;
    let hits = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// `table[gold][predicted]` counts.
pub fn confusion_matrix(predictions: &[LabelId], gold: &[LabelId], num_labels: usize) -> Result<Vec<Vec<u64>>> {
    check(predictions, gold)?;
    let mut table = vec![vec![0u64; num_labels]; num_labels];
    for (&p, &g) in predictions.iter().zip(gold) {
        let size = num_labels;
        for id in [p, g] {
            if id >= size {
                return Err(Error::Index {
                    what: "confusion matrix label",
                    index: id,
                    size,
                });
            }
        }
        table[g][p] += 1;
    }
    Ok(table)
}

fn check(predictions: &[LabelId], gold: &[LabelId]) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::EmptyEval);
    }
    if predictions.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extremes_and_empty() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0, 0], &[1, 2, 3]).unwrap(), 0.0);
        assert!(matches!(accuracy(&[], &[]), Err(Error::EmptyEval)));
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_matches_counting_and_trace(
            pairs in proptest::collection::vec((0usize..6, 0usize..6), 1..200)
        ) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let mut hits = 0;
            for i in 0..g.len() {
                if p[i] == g[i] {
                    hits += 1;
                }
            }
            let acc = accuracy(&p, &g).unwrap();
            prop_assert_eq!(acc, hits as f64 / g.len() as f64);
            let cm = confusion_matrix(&p, &g, 6).unwrap();
            let trace: u64 = (0..6).map(|i| cm[i][i]).sum();
            let total: u64 = cm.iter().flatten().sum();
            prop_assert_eq!(acc, trace as f64 / total as f64);
            prop_assert_eq!(accuracy(&p, &p).unwrap(), 1.0);
        }
    }
}
