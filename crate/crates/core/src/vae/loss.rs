//! Negative-ELBO loss with exact reverse-mode gradients.
//!
//! Reconstruction is Gaussian NLL with a learned per-dimension log-variance
//! for numeric dimensions plus softmax cross-entropy for one-hot groups; the
//! KL term against the standard-normal prior is closed form. Reparameterization
//! noise is supplied by the caller, so the loss is a deterministic function of
//! (params, batch, noise).
//!
//! The computation is generic over [`Real`]: at `f64` it yields value and
//! gradient; at [`Dual`](crate::nn::Dual) the same code yields an exact
//! Hessian-vector product (forward-over-reverse).

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{
    forward_logits_cached, Activation, Dual, GradBuf, MlpSpec, OutputActivation, ParamSet,
    ParamsView, Real, ShapeTable,
};
use crate::tabular::GroupMap;
use crate::vae::VaeConfig;

/// Raw log-variances (latent and reconstruction) are clamped to this range
/// before exponentiation.
pub const LOGVAR_CLAMP: f64 = 15.0;

const LN_2PI: f64 = 1.8378770664093453;

/// Rows per parallel gradient chunk; fixed so the reduction order (and thus
/// every bit of the result) is independent of thread count.
const GRAD_CHUNK: usize = 32;

/// Network shapes and output-group layout for one VAE.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeArch {
    pub latent_dim: usize,
    pub data_width: usize,
    pub encoder: MlpSpec,
    pub decoder: MlpSpec,
    /// Dimensions reconstructed with Gaussian NLL, in encoded order.
    gaussian_dims: Vec<usize>,
    /// One-hot groups as (start, width).
    categorical_ranges: Vec<(usize, usize)>,
}

impl VaeArch {
    pub fn new(config: &VaeConfig, group_map: &GroupMap) -> Result<Self> {
        config.validate()?;
        let d = group_map.width();
        let k = config.latent_dim;
        let mut enc_sizes = vec![d];
        let mut dec_sizes = vec![k];
        for _ in 0..config.depth {
            enc_sizes.push(config.hidden_size);
            dec_sizes.push(config.hidden_size);
        }
        enc_sizes.push(2 * k);
        dec_sizes.push(d);
        Ok(VaeArch {
            latent_dim: k,
            data_width: d,
            encoder: MlpSpec::new(enc_sizes, Activation::Relu, OutputActivation::Identity)?,
            decoder: MlpSpec::new(dec_sizes, Activation::Relu, OutputActivation::Identity)?,
            gaussian_dims: group_map.gaussian_dims(),
            categorical_ranges: group_map.categorical_ranges(),
        })
    }

    pub fn gaussian_dims(&self) -> &[usize] {
        &self.gaussian_dims
    }

    pub fn categorical_ranges(&self) -> &[(usize, usize)] {
        &self.categorical_ranges
    }

    pub fn shape_table(&self) -> ShapeTable {
        let mut entries = self.encoder.shape_entries("enc");
        entries.extend(self.decoder.shape_entries("dec"));
        entries.push(crate::nn::TensorShape {
            name: "recon_logvar".into(),
            dims: vec![self.gaussian_dims.len()],
        });
        ShapeTable::new(entries)
    }

    /// Random initialization: scaled-uniform weights, zero biases.
    ///
    /// The reconstruction log-variance starts at -2 so reconstruction
    /// pressure outweighs the KL term early in training; starting it at 0
    /// reliably kills latent dimensions before the variance has shrunk.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        crate::nn::init_params(&[("enc", &self.encoder), ("dec", &self.decoder)], seed)
            .append_vector("recon_logvar", self.gaussian_dims.len(), -2.0)
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        if *params.table() != self.shape_table() {
            return Err(Error::ShapeIncompatible(
                "parameters do not match the VAE architecture".into(),
            ));
        }
        Ok(())
    }

    fn check_batch(&self, batch: ArrayView2<'_, f64>, noise: ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.data_width {
            return Err(Error::DimensionMismatch(format!(
                "batch width {} != encoded width {}",
                batch.ncols(),
                self.data_width
            )));
        }
        if noise.nrows() != batch.nrows() || noise.ncols() != self.latent_dim {
            return Err(Error::DimensionMismatch(format!(
                "noise shape ({}, {}) != ({}, {})",
                noise.nrows(),
                noise.ncols(),
                batch.nrows(),
                self.latent_dim
            )));
        }
        Ok(())
    }
}

/// Sum (not mean) of per-row negative ELBO over the batch, with optional
/// gradient accumulation. Generic over the scalar type.
///
/// `kl_scale` weights the KL term; 1.0 is the true ELBO. Training uses a
/// short warm-up ramp to keep latent dimensions alive (see [`super::train`]).
fn elbo_sum_generic<T: Real>(
    arch: &VaeArch,
    params: ParamsView<'_, T>,
    batch: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    kl_scale: f64,
    want_grad: bool,
) -> (T, Option<GradBuf<T>>) {
    let b = batch.nrows();
    let k = arch.latent_dim;
    let x = batch.mapv(T::from_f64);
    let eps = noise.mapv(T::from_f64);
    let half = T::from_f64(0.5);

    // encoder -> posterior mean / raw log-variance
    let (enc_out, enc_cache) = forward_logits_cached(&arch.encoder, params, "enc", x.view());
    let mu = enc_out.slice(s![.., 0..k]);
    let lv_raw = enc_out.slice(s![.., k..2 * k]);
    let lv = lv_raw.mapv(|v| v.clamp_val(-LOGVAR_CLAMP, LOGVAR_CLAMP));

    // reparameterize
    let sigma = lv.mapv(|v| (half * v).exp());
    let z = {
        let mut z = sigma.clone() * &eps;
        z.zip_mut_with(&mu, |zv, &m| *zv = *zv + m);
        z
    };

    // decoder -> per-dimension outputs (means for numeric dims, logits for
    // one-hot groups)
    let (dec_out, dec_cache) = forward_logits_cached(&arch.decoder, params, "dec", z.view());

    let rlv_raw = params.vector("recon_logvar");
    let rlv = rlv_raw.mapv(|v| v.clamp_val(-LOGVAR_CLAMP, LOGVAR_CLAMP));
    let inv_var = rlv.mapv(|v| (-v).exp());

    let mut loss = T::zero();

    // Gaussian reconstruction NLL
    for (gi, &d) in arch.gaussian_dims.iter().enumerate() {
        let mut dim_sum = T::zero();
        for i in 0..b {
            let diff = dec_out[[i, d]] - x[[i, d]];
            dim_sum = dim_sum + diff * diff;
        }
        loss = loss
            + T::from_f64(b as f64) * half * (T::from_f64(LN_2PI) + rlv[gi])
            + half * inv_var[gi] * dim_sum;
    }

    // categorical cross-entropy via stable log-softmax
    let mut softmaxes: Vec<Array2<T>> = Vec::new();
    for &(start, width) in &arch.categorical_ranges {
        let logits = dec_out.slice(s![.., start..start + width]);
        let mut sm = Array2::<T>::from_elem((b, width), T::zero());
        for i in 0..b {
            let row = logits.row(i);
            let mut mx = row[0];
            for &v in row.iter() {
                if v > mx {
                    mx = v;
                }
            }
            let mut total = T::zero();
            for j in 0..width {
                let e = (row[j] - mx).exp();
                sm[[i, j]] = e;
                total = total + e;
            }
            let log_total = total.ln();
            for j in 0..width {
                let log_sm = row[j] - mx - log_total;
                loss = loss - x[[i, start + j]] * log_sm;
                sm[[i, j]] = sm[[i, j]] / total;
            }
        }
        softmaxes.push(sm);
    }

    // closed-form KL against the standard-normal prior
    let beta = T::from_f64(kl_scale);
    let ex_lv = lv.mapv(|v| v.exp());
    for i in 0..b {
        for j in 0..k {
            let m = mu[[i, j]];
            loss = loss + beta * half * (m * m + ex_lv[[i, j]] - lv[[i, j]] - T::one());
        }
    }

    if !want_grad {
        return (loss, None);
    }

    let mut grads = GradBuf::zeros(params.table());

    // d loss / d decoder output
    let mut d_dec = Array2::<T>::from_elem((b, arch.data_width), T::zero());
    for (gi, &d) in arch.gaussian_dims.iter().enumerate() {
        let mut g_rlv = T::zero();
        let active = if rlv_raw[gi].val().abs() < LOGVAR_CLAMP {
            T::one()
        } else {
            T::zero()
        };
        for i in 0..b {
            let diff = dec_out[[i, d]] - x[[i, d]];
            d_dec[[i, d]] = diff * inv_var[gi];
            g_rlv = g_rlv + half * (T::one() - diff * diff * inv_var[gi]);
        }
        let mut rv = grads.vector_mut("recon_logvar");
        rv[gi] = rv[gi] + g_rlv * active;
    }
    for (ci, &(start, width)) in arch.categorical_ranges.iter().enumerate() {
        let sm = &softmaxes[ci];
        for i in 0..b {
            for j in 0..width {
                d_dec[[i, start + j]] = sm[[i, j]] - x[[i, start + j]];
            }
        }
    }

    // through the decoder
    let d_z = crate::nn::backward_from_logits(
        &arch.decoder,
        params,
        "dec",
        &dec_cache,
        d_dec,
        &mut grads,
    );

    // combine reparameterization and KL paths into d(mu), d(logvar)
    let mut d_enc = Array2::<T>::from_elem((b, 2 * k), T::zero());
    for i in 0..b {
        for j in 0..k {
            let dz = d_z[[i, j]];
            let d_mu = dz + beta * mu[[i, j]];
            let lv_active = if lv_raw[[i, j]].val().abs() < LOGVAR_CLAMP {
                T::one()
            } else {
                T::zero()
            };
            let d_lv = dz * eps[[i, j]] * half * sigma[[i, j]]
                + beta * half * (ex_lv[[i, j]] - T::one());
            d_enc[[i, j]] = d_mu;
            d_enc[[i, k + j]] = d_lv * lv_active;
        }
    }

    crate::nn::backward_from_logits(&arch.encoder, params, "enc", &enc_cache, d_enc, &mut grads);

    (loss, Some(grads))
}

fn ensure_finite(loss: f64, context: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::NonFiniteLoss {
            loss,
            context: context.to_string(),
        })
    }
}

/// Mean negative ELBO per row.
pub fn elbo_loss(
    arch: &VaeArch,
    params: &ParamSet,
    batch: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
) -> Result<f64> {
    arch.check_params(params)?;
    arch.check_batch(batch, noise)?;
    if batch.nrows() == 0 {
        return Err(Error::DimensionMismatch("empty batch".into()));
    }
    let view = ParamsView::new(params.table(), params.data());
    let b = batch.nrows();
    let sum: f64 = row_chunks(b)
        .into_par_iter()
        .map(|(lo, hi)| {
            elbo_sum_generic::<f64>(
                arch,
                view,
                batch.slice(s![lo..hi, ..]),
                noise.slice(s![lo..hi, ..]),
                1.0,
                false,
            )
            .0
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    ensure_finite(sum / b as f64, "elbo")
}

/// Mean negative ELBO and its exact gradient.
pub fn elbo_loss_grad(
    arch: &VaeArch,
    params: &ParamSet,
    batch: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
) -> Result<(f64, ParamSet)> {
    elbo_loss_grad_scaled(arch, params, batch, noise, 1.0)
}

/// Gradient of the warm-up objective (KL term weighted by `kl_scale`).
pub(crate) fn elbo_loss_grad_scaled(
    arch: &VaeArch,
    params: &ParamSet,
    batch: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    kl_scale: f64,
) -> Result<(f64, ParamSet)> {
    arch.check_params(params)?;
    arch.check_batch(batch, noise)?;
    if batch.nrows() == 0 {
        return Err(Error::DimensionMismatch("empty batch".into()));
    }
    let view = ParamsView::new(params.table(), params.data());
    let b = batch.nrows();
    let parts: Vec<(f64, GradBuf<f64>)> = row_chunks(b)
        .into_par_iter()
        .map(|(lo, hi)| {
            let (l, g) = elbo_sum_generic::<f64>(
                arch,
                view,
                batch.slice(s![lo..hi, ..]),
                noise.slice(s![lo..hi, ..]),
                kl_scale,
                true,
            );
            (l, g.expect("gradient requested"))
        })
        .collect();
    let mut loss = 0.0;
    let mut total: Option<GradBuf<f64>> = None;
    for (l, g) in parts {
        loss += l;
        match &mut total {
            Some(t) => t.accumulate(&g),
            None => total = Some(g),
        }
    }
    let mut grad = total.expect("nonempty batch").into_param_set();
    grad.scale(1.0 / b as f64);
    let loss = ensure_finite(loss / b as f64, "elbo")?;
    Ok((loss, grad))
}

/// Exact Hessian-vector product of the mean negative ELBO, by running the
/// gradient computation on dual numbers seeded with `dir`.
pub fn elbo_hvp(
    arch: &VaeArch,
    params: &ParamSet,
    dir: &ParamSet,
    batch: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
) -> Result<ParamSet> {
    arch.check_params(params)?;
    arch.check_batch(batch, noise)?;
    let lifted = params.lift_dual(dir)?;
    let view = ParamsView::<Dual>::new(params.table(), &lifted);
    let b = batch.nrows();
    let parts: Vec<GradBuf<Dual>> = row_chunks(b)
        .into_par_iter()
        .map(|(lo, hi)| {
            elbo_sum_generic::<Dual>(
                arch,
                view,
                batch.slice(s![lo..hi, ..]),
                noise.slice(s![lo..hi, ..]),
                1.0,
                true,
            )
            .1
            .expect("gradient requested")
        })
        .collect();
    let mut acc = vec![0.0; params.len()];
    for g in parts {
        for (a, d) in acc.iter_mut().zip(g.data()) {
            *a += d.d;
        }
    }
    for a in acc.iter_mut() {
        *a /= b as f64;
    }
    ParamSet::new(params.table().clone(), acc)
}

fn row_chunks(rows: usize) -> Vec<(usize, usize)> {
    let mut chunks = Vec::with_capacity(rows.div_ceil(GRAD_CHUNK));
    let mut at = 0;
    while at < rows {
        let hi = (at + GRAD_CHUNK).min(rows);
        chunks.push((at, hi));
        at = hi;
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::rng;
    use crate::tabular::{fit_encoder, Cell, ColumnKind, ColumnSpec, RawTable, TableSchema};
    use ndarray::Axis;

    /// Tiny mixed-type arch: one continuous dim + one 3-way one-hot group.
    pub(crate) fn tiny_setup() -> (VaeArch, crate::tabular::GroupMap) {
        let schema = TableSchema {
            columns: vec![
                ColumnSpec {
                    name: "v".into(),
                    kind: ColumnKind::Continuous,
                    categories: vec![],
                    missing_allowed: false,
                },
                ColumnSpec {
                    name: "c".into(),
                    kind: ColumnKind::Categorical,
                    categories: vec!["a".into(), "b".into(), "c".into()],
                    missing_allowed: false,
                },
            ],
        };
        let rows: Vec<Vec<Cell>> = (0..8)
            .map(|i| {
                vec![
                    Cell::Float(i as f64 * 0.7 - 2.0),
                    Cell::Text(["a", "b", "c"][i % 3].into()),
                ]
            })
            .collect();
        let t = RawTable { schema, rows };
        let enc = fit_encoder(&t).unwrap();
        let gmap = enc.group_map().clone();
        let config = VaeConfig {
            latent_dim: 2,
            hidden_size: 4,
            depth: 2,
            max_epochs: 10,
            batch_size: 4,
            patience: 2,
            learning_rate: 1e-3,
            ..Default::default()
        };
        let arch = VaeArch::new(&config, &gmap).unwrap();
        (arch, gmap)
    }

    pub(crate) fn random_batch(arch: &VaeArch, rows: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng::stream(seed, "batch", &[]);
        let mut x = rng::standard_normal(&mut rng, rows, arch.data_width);
        // overwrite categorical ranges with exact one-hots
        for &(start, width) in arch.categorical_ranges() {
            for i in 0..rows {
                for j in 0..width {
                    x[[i, start + j]] = 0.0;
                }
                let hot = (i * 7 + start) % width;
                x[[i, start + hot]] = 1.0;
            }
        }
        x
    }

    #[test]
    fn zero_params_zero_batch_gives_half_ln_2pi_per_gaussian_dim() {
        let (arch, _) = tiny_setup();
        let params = ParamSet::zeros(arch.shape_table());
        // x = 0 rows with a valid one-hot in the categorical group
        let mut x = Array2::zeros((4, arch.data_width));
        for i in 0..4 {
            x[[i, 1]] = 1.0; // category "a"
        }
        let noise = Array2::zeros((4, arch.latent_dim));
        let loss = elbo_loss(&arch, &params, x.view(), noise.view()).unwrap();
        // one gaussian dim at its mean with logvar 0 plus uniform softmax CE;
        // KL is zero because the encoder outputs mu = logvar = 0
        let expected = 0.5 * LN_2PI + (3.0f64).ln();
        assert!(
            (loss - expected).abs() < 1e-12,
            "loss {loss} expected {expected}"
        );
    }

    #[test]
    fn kl_term_is_nonnegative_for_random_params() {
        // ELBO = recon + KL; with a deterministic decoder check KL >= 0 by
        // comparing against the recon-only loss at matched outputs is fiddly,
        // so check the closed form directly over random (mu, lv) grids.
        for &(m, lv) in &[(0.0, 0.0), (1.5, -2.0), (-0.7, 3.0), (0.01, 0.0001)] {
            let kl = 0.5 * (m as f64 * m as f64 + (lv as f64).exp() - lv as f64 - 1.0);
            assert!(kl >= -1e-15, "KL({m},{lv}) = {kl}");
        }
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let (arch, _) = tiny_setup();
        let params = arch.init_params(3);
        assert!(params.len() <= 200, "test instance should stay small");
        let x = random_batch(&arch, 6, 4);
        let noise = rng::seeded_normal(5, "noise", &[], 6, arch.latent_dim);
        let (_, grad) = elbo_loss_grad(&arch, &params, x.view(), noise.view()).unwrap();
        let report = grad_check(
            |p| elbo_loss(&arch, p, x.view(), noise.view()).unwrap(),
            &params,
            &grad,
            25,
            7,
            1e-3,
        );
        assert!(
            report.all_within_tolerance(),
            "max rel err {}",
            report.max_rel_err()
        );
    }

    #[test]
    fn batch_loss_equals_mean_of_per_row_losses() {
        let (arch, _) = tiny_setup();
        let params = arch.init_params(11);
        let x = random_batch(&arch, 5, 12);
        let noise = rng::seeded_normal(13, "noise", &[], 5, arch.latent_dim);
        let full = elbo_loss(&arch, &params, x.view(), noise.view()).unwrap();
        let mut acc = 0.0;
        for i in 0..5 {
            let xi = x.index_axis(Axis(0), i).insert_axis(Axis(0));
            let ni = noise.index_axis(Axis(0), i).insert_axis(Axis(0));
            acc += elbo_loss(&arch, &params, xi, ni).unwrap();
        }
        assert!((full - acc / 5.0).abs() < 1e-10);
    }

    #[test]
    fn gradient_is_linear_in_loss_combination() {
        // grad(a*L1 + b*L2) == a*grad(L1) + b*grad(L2) where L1, L2 are the
        // same loss on different batches; verified through the mean over a
        // combined weighting.
        let (arch, _) = tiny_setup();
        let params = arch.init_params(21);
        let x1 = random_batch(&arch, 3, 22);
        let x2 = random_batch(&arch, 3, 23);
        let n1 = rng::seeded_normal(24, "noise", &[], 3, arch.latent_dim);
        let n2 = rng::seeded_normal(25, "noise", &[], 3, arch.latent_dim);
        let (_, g1) = elbo_loss_grad(&arch, &params, x1.view(), n1.view()).unwrap();
        let (_, g2) = elbo_loss_grad(&arch, &params, x2.view(), n2.view()).unwrap();
        let (a, b) = (0.3, 1.7);
        let mut combo = g1.zeros_like();
        combo.add_scaled(&g1, a).unwrap();
        combo.add_scaled(&g2, b).unwrap();

        // central difference of a*L1 + b*L2 along a random direction
        let dir = arch.init_params(26);
        let h = 1e-5;
        let eval = |p: &ParamSet| {
            a * elbo_loss(&arch, p, x1.view(), n1.view()).unwrap()
                + b * elbo_loss(&arch, p, x2.view(), n2.view()).unwrap()
        };
        let mut plus = params.clone();
        plus.add_scaled(&dir, h).unwrap();
        let mut minus = params.clone();
        minus.add_scaled(&dir, -h).unwrap();
        let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
        let analytic: f64 = combo
            .data()
            .iter()
            .zip(dir.data())
            .map(|(g, d)| g * d)
            .sum();
        assert!((fd - analytic).abs() / analytic.abs().max(1.0) < 1e-5);
    }

    #[test]
    fn hvp_matches_finite_difference_of_gradient() {
        let (arch, _) = tiny_setup();
        let params = arch.init_params(31);
        let x = random_batch(&arch, 4, 32);
        let noise = rng::seeded_normal(33, "noise", &[], 4, arch.latent_dim);
        let dir = arch.init_params(34);

        let hvp = elbo_hvp(&arch, &params, &dir, x.view(), noise.view()).unwrap();

        let h = 1e-5;
        let mut plus = params.clone();
        plus.add_scaled(&dir, h).unwrap();
        let mut minus = params.clone();
        minus.add_scaled(&dir, -h).unwrap();
        let (_, gp) = elbo_loss_grad(&arch, &plus, x.view(), noise.view()).unwrap();
        let (_, gm) = elbo_loss_grad(&arch, &minus, x.view(), noise.view()).unwrap();

        let mut max_err: f64 = 0.0;
        for i in 0..params.len() {
            let fd = (gp.data()[i] - gm.data()[i]) / (2.0 * h);
            let denom = hvp.data()[i].abs().max(fd.abs()).max(1e-6);
            max_err = max_err.max((hvp.data()[i] - fd).abs() / denom);
        }
        assert!(max_err < 1e-4, "max rel err {max_err}");
    }
}
