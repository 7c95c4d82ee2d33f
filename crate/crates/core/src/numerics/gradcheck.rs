use serde::Serialize;

use super::ParamStore;
use crate::error::{Error, Result};

/// Five-point stencil step. Large enough that roundoff stays small on
/// gradients near 1e-8, small enough that the O(h^4) truncation is negligible.
pub const FD_STEP: f64 = 1e-3;

#[derive(Clone, Debug, Serialize)]
pub struct ParamGradError {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradReport {
    pub params: Vec<ParamGradError>,
}

impl GradReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12)
}

/// Compares analytic gradients against fourth-order central differences on
/// every entry.
///
/// `objective` must return the scalar loss and accumulate its analytic gradient
/// into the store it is given. The caller's store is not modified.
pub fn grad_check<F>(params: &ParamStore, mut objective: F) -> Result<GradReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    let mut work = params.clone();
    work.zero_grads();
    let base = objective(&mut work)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {base}")));
    }
    let analytic = work.clone();

    let mut report = GradReport::default();
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in names {
        let count = params.value(&name)?.len();
        let mut worst = 0.0f64;
        for i in 0..count {
            let original = params.value(&name)?.data()[i];
            let mut eval = |delta: f64, work: &mut ParamStore| -> Result<f64> {
                work.get_mut(&name)?.value.data_mut()[i] = original + delta;
                let loss = objective(work)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss while perturbing {name}[{i}]")));
                }
                Ok(loss)
            };
            let near = eval(FD_STEP, &mut work)? - eval(-FD_STEP, &mut work)?;
            let far = eval(2.0 * FD_STEP, &mut work)? - eval(-2.0 * FD_STEP, &mut work)?;
            work.get_mut(&name)?.value.data_mut()[i] = original;
            let numeric = (8.0 * near - far) / (12.0 * FD_STEP);
            let a = analytic.get(&name)?.grad.data()[i];
            worst = worst.max(relative_error(a, numeric));
        }
        report.params.push(ParamGradError {
            name,
            entries: count,
            max_rel_error: worst,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Tape};

    #[test]
    fn quadratic_norm_is_exact() {
        let mut p = ParamStore::new();
        p.insert("w", Matrix::from_rows(&[vec![0.5, -1.25], vec![2.0, 0.75]]).unwrap());
        let report = grad_check(&p, |store| {
            let mut t = Tape::new();
            let w = t.param(store, "w")?;
            let sq = t.mul(w, w)?;
            let s = t.sum(sq);
            let loss = t.scale(s, 0.5);
            t.backward(loss)?;
            t.accumulate_into(store)?;
            Ok(t.scalar(loss))
        })
        .unwrap();
        assert!(report.max_rel_error() < 1e-9, "{report:?}");
    }

    #[test]
    fn tiny_gradient_under_large_loss_is_resolved() {
        let mut p = ParamStore::new();
        p.insert("w", Matrix::scalar(0.3));
        let report = grad_check(&p, |store| {
            let w = store.value("w")?.data()[0];
            store.accumulate("w", &Matrix::scalar(4e-8 * w.cos()))?;
            Ok(4.0 + 4e-8 * w.sin())
        })
        .unwrap();
        assert!(report.max_rel_error() < 1e-5, "{report:?}");
    }

    #[test]
    fn empty_store_gives_empty_report() {
        let report = grad_check(&ParamStore::new(), |_| Ok(1.0)).unwrap();
        assert!(report.is_empty());
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let err = grad_check(&ParamStore::new(), |_| Ok(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut p = ParamStore::new();
        p.insert("w", Matrix::scalar(1.5));
        let report = grad_check(&p, |store| {
            let w = store.value("w")?.data()[0];
            store.accumulate("w", &Matrix::scalar(3.0 * w))?;
            Ok(w * w)
        })
        .unwrap();
        assert!(report.max_rel_error() > 0.1);
    }
}
