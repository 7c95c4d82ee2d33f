use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore, SeededRng, Tape, Var};

/// Weighted layer combination `E = γ Σ_j softmax(raw)_j · h_j`.
///
/// Layers of different widths are first mapped to `d_mix` by a per-layer
/// linear projection. `raw` starts at zero (equal weights) and `γ` at one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMixer {
    pub prefix: String,
    pub widths: Vec<usize>,
    pub d_mix: usize,
}

impl LayerMixer {
    pub fn new(prefix: impl Into<String>, widths: Vec<usize>, d_mix: usize) -> Self {
        Self {
            prefix: prefix.into(),
            widths,
            d_mix,
        }
    }

    pub fn raw_name(&self) -> String {
        format!("{}.raw", self.prefix)
    }

    pub fn gamma_name(&self) -> String {
        format!("{}.gamma", self.prefix)
    }

    pub fn proj_name(&self, layer: usize) -> String {
        format!("{}.proj.{layer}", self.prefix)
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        for (j, &w) in self.widths.iter().enumerate() {
            store.init_uniform(self.proj_name(j), w, self.d_mix, w, rng);
        }
        store.insert(self.raw_name(), Matrix::zeros(1, self.widths.len()));
        store.insert(self.gamma_name(), Matrix::scalar(1.0));
    }

    fn check_layers(&self, count: usize) -> Result<()> {
        if count != self.widths.len() {
            return Err(Error::Shape(format!(
                "mixer expects {} layers, got {count}",
                self.widths.len()
            )));
        }
        Ok(())
    }

    /// Softmax-normalised layer weights.
    pub fn weights(&self, store: &ParamStore) -> Result<Vec<f64>> {
        Ok(store.value(&self.raw_name())?.softmax_rows().into_vec())
    }

    pub fn mix(&self, tape: &mut Tape, store: &ParamStore, layers: &[Var]) -> Result<Var> {
        self.check_layers(layers.len())?;
        let raw = tape.param(store, &self.raw_name())?;
        let gamma = tape.param(store, &self.gamma_name())?;
        let s = tape.softmax_rows(raw);
        let mut total = None;
        for (j, &h) in layers.iter().enumerate() {
            let p = tape.param(store, &self.proj_name(j))?;
            let projected = tape.matmul(h, p)?;
            let w = tape.slice_cols(s, j, 1)?;
            let term = tape.scale_by(projected, w)?;
            total = Some(match total {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        let total = total.ok_or(Error::EmptyInput("layer stack"))?;
        tape.scale_by(total, gamma)
    }

    /// Value-level projection followed by [`mix_layers`].
    pub fn mix_values(&self, store: &ParamStore, layers: &[Matrix]) -> Result<Matrix> {
        self.check_layers(layers.len())?;
        let projected = layers
            .iter()
            .enumerate()
            .map(|(j, h)| h.matmul(store.value(&self.proj_name(j))?))
            .collect::<Result<Vec<_>>>()?;
        let raw = store.value(&self.raw_name())?;
        let gamma = store.value(&self.gamma_name())?.data()[0];
        mix_layers(&projected, raw.data(), gamma)
    }
}

/// `γ Σ_j softmax(raw)_j · layers_j` over equally shaped layers.
pub fn mix_layers(layers: &[Matrix], raw: &[f64], gamma: f64) -> Result<Matrix> {
    let first = layers.first().ok_or(Error::EmptyInput("layer stack"))?;
    if raw.len() != layers.len() {
        return Err(Error::Shape(format!(
            "{} mixing logits for {} layers",
            raw.len(),
            layers.len()
        )));
    }
    let weights = Matrix::row_vector(raw).softmax_rows();
    let mut out = Matrix::zeros(first.rows(), first.cols());
    for (h, &w) in layers.iter().zip(weights.data()) {
        if h.shape() != first.shape() {
            return Err(Error::Dimension {
                op: "mix_layers",
                left: first.shape(),
                right: h.shape(),
            });
        }
        for (o, x) in out.data_mut().iter_mut().zip(h.data()) {
            *o += w * x;
        }
    }
    Ok(out.scale(gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layers(seed: u64, count: usize) -> Vec<Matrix> {
        let mut rng = SeededRng::new(seed);
        (0..count).map(|_| rng.uniform_matrix(4, 3, 2.0)).collect()
    }

    #[test]
    fn dominant_top_layer_is_returned() {
        let hs = layers(1, 3);
        let out = mix_layers(&hs, &[0.0, 0.0, 1e6], 1.0).unwrap();
        for (a, b) in out.data().iter().zip(hs[2].data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gamma_gives_exact_zeros() {
        let hs = layers(2, 3);
        let out = mix_layers(&hs, &[0.3, -1.0, 2.0], 0.0).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn equal_logits_average_two_layers() {
        let a = Matrix::row_vector(&[1.0, 3.0]);
        let b = Matrix::row_vector(&[3.0, 5.0]);
        let out = mix_layers(&[a, b], &[1.0, 1.0], 2.0).unwrap();
        assert_eq!(out.data(), &[4.0, 8.0]);
    }

    #[test]
    fn tape_mix_matches_value_mix() {
        let mixer = LayerMixer::new("mix", vec![3, 5], 4);
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(3);
        mixer.init_params(&mut store, &mut rng);
        store.insert(mixer.raw_name(), Matrix::row_vector(&[0.4, -0.7]));
        store.insert(mixer.gamma_name(), Matrix::scalar(1.3));
        let hs = vec![rng.uniform_matrix(6, 3, 1.0), rng.uniform_matrix(6, 5, 1.0)];
        let expect = mixer.mix_values(&store, &hs).unwrap();
        let mut tape = Tape::new();
        let vars: Vec<Var> = hs.iter().map(|h| tape.constant(h.clone())).collect();
        let out = mixer.mix(&mut tape, &store, &vars).unwrap();
        for (a, b) in tape.value(out).data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(mixer.mix_values(&store, &hs[..1]).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(raw in proptest::collection::vec(-30.0f64..30.0, 1..6)) {
            let w = Matrix::row_vector(&raw).softmax_rows();
            prop_assert!((w.sum() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn homogeneous_in_gamma(
            raw in proptest::collection::vec(-5.0f64..5.0, 3),
            gamma in -4.0f64..4.0,
            c in -3.0f64..3.0,
        ) {
            let hs = layers(7, 3);
            let base = mix_layers(&hs, &raw, gamma).unwrap();
            let scaled = mix_layers(&hs, &raw, c * gamma).unwrap();
            for (a, b) in base.data().iter().zip(scaled.data()) {
                prop_assert!((c * a - b).abs() < 1e-9);
            }
        }
    }
}
