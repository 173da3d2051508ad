//! Synthetic row generation: latent draws from the fitted mixture pushed
//! through the decoder.

use ndarray::{s, Array2};
use rand::Rng;

use crate::error::Result;
use crate::nn::forward;
use crate::rng;
use crate::tabular::EncodedMatrix;
use crate::vae::gmm::GmmModel;
use crate::vae::TrainedVae;

/// Encoder posterior means mu(x) for every row.
pub fn posterior_means(model: &TrainedVae, data: &EncodedMatrix) -> Result<Array2<f64>> {
    let arch = model.arch();
    let out = forward(
        &arch.encoder,
        model.params.view(),
        "enc",
        data.values.view(),
    )?;
    Ok(out.slice(s![.., 0..arch.latent_dim]).to_owned())
}

/// Generate `n` encoded rows from the model.
///
/// Numeric dimensions emit the decoder mean; one-hot groups are sampled from
/// the decoder's softmax probabilities, yielding exact one-hot rows.
/// Deterministic for a fixed seed.
pub fn generate(model: &TrainedVae, gmm: &GmmModel, n: usize, seed: u64) -> Result<EncodedMatrix> {
    let arch = model.arch();
    let mut latent_rng = rng::stream(seed, "gen-latent", &[]);
    let z = gmm.sample(n, &mut latent_rng);
    let out = forward(&arch.decoder, model.params.view(), "dec", z.view())?;

    let mut values = Array2::zeros((n, arch.data_width));
    for &d in arch.gaussian_dims() {
        for i in 0..n {
            values[[i, d]] = out[[i, d]];
        }
    }
    let mut cat_rng = rng::stream(seed, "gen-categorical", &[]);
    for &(start, width) in arch.categorical_ranges() {
        for i in 0..n {
            // stable softmax over the group's logits
            let row = out.row(i);
            let mut mx = f64::NEG_INFINITY;
            for j in 0..width {
                mx = mx.max(row[start + j]);
            }
            let mut probs = vec![0.0; width];
            let mut total = 0.0;
            for j in 0..width {
                let e = (row[start + j] - mx).exp();
                probs[j] = e;
                total += e;
            }
            let u: f64 = cat_rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = width - 1;
            for (j, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            values[[i, start + pick]] = 1.0;
        }
    }

    Ok(EncodedMatrix {
        values,
        group_map: model.group_map.clone(),
    })
}
