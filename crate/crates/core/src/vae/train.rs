//! VAE training loop: seeded 90/10 split, Adam, early stopping on validation
//! loss, best-epoch parameter selection.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, ParamSet};
use crate::rng;
use crate::tabular::{EncodedMatrix, GroupMap};
use crate::vae::loss::{elbo_loss, elbo_loss_grad, VaeArch};
use crate::vae::VaeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// None for the epoch-0 entry (initial parameters, no training yet).
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

/// A fitted generator: parameters from the best validation epoch plus the
/// metadata needed to rebuild its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedVae {
    pub config: VaeConfig,
    pub group_map: GroupMap,
    pub params: ParamSet,
    /// Negative ELBO per row on the validation split, at the best epoch.
    pub best_val_loss: f64,
    pub train_curve: Vec<EpochStats>,
    pub seed: u64,
}

impl TrainedVae {
    pub fn arch(&self) -> VaeArch {
        VaeArch::new(&self.config, &self.group_map).expect("config validated at training time")
    }
}

fn gather_rows(values: &Array2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), values.ncols()));
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).assign(&values.row(i));
    }
    out
}

/// Train a VAE on encoded rows.
///
/// `init` supplies the starting weights (the inductive bias); when absent a
/// fresh random initialization keyed by `seed` is used. With `max_epochs == 0`
/// the initial parameters are returned unchanged, with their validation loss.
pub fn train_vae(
    data: &EncodedMatrix,
    config: &VaeConfig,
    seed: u64,
    init: Option<&ParamSet>,
) -> Result<TrainedVae> {
    config.validate()?;
    let rows = data.n_rows();
    if rows < 2 {
        return Err(Error::InsufficientRows {
            needed: 2,
            available: rows,
            detail: "VAE training requires a train/validation split".into(),
        });
    }
    let arch = VaeArch::new(config, &data.group_map)?;
    let mut params = match init {
        Some(p) => {
            arch.check_params(p)?;
            p.clone()
        }
        None => arch.init_params(rng::derive_seed(seed, "vae-init", &[])),
    };

    // deterministic 90/10 split
    let n_val = (rows / 10).max(1);
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut rng::stream(seed, "vae-split", &[]));
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_rows = train_idx.len();
    let batch_size = config.batch_size.min(rows.div_ceil(2)).max(1);

    let val_x = gather_rows(&data.values, val_idx);
    let val_noise = rng::seeded_normal(seed, "vae-val-noise", &[], val_idx.len(), arch.latent_dim);

    let eval_val =
        |p: &ParamSet| -> Result<f64> { elbo_loss(&arch, p, val_x.view(), val_noise.view()) };

    let mut best_val = eval_val(&params)?;
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut curve = vec![EpochStats {
        train_loss: None,
        val_loss: best_val,
    }];

    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), &params);
    let mut shuffled: Vec<usize> = train_idx.to_vec();

    for epoch in 1..=config.max_epochs {
        shuffled.shuffle(&mut rng::stream(seed, "vae-shuffle", &[epoch as u64]));
        let kl_scale = if config.kl_warmup_epochs == 0 {
            1.0
        } else {
            (epoch as f64 / config.kl_warmup_epochs as f64).min(1.0)
        };
        let mut epoch_loss = 0.0;
        for (bi, chunk) in shuffled.chunks(batch_size).enumerate() {
            let x = gather_rows(&data.values, chunk);
            let noise = rng::seeded_normal(
                seed,
                "vae-batch-noise",
                &[epoch as u64, bi as u64],
                chunk.len(),
                arch.latent_dim,
            );
            let (loss, grad) =
                elbo_loss_grad_scaled(&arch, &params, x.view(), noise.view(), kl_scale)
                    .map_err(|e| match e {
                    Error::NonFiniteLoss { loss, .. } => Error::NonFiniteLoss {
                        loss,
                        context: format!("epoch {epoch}, batch {bi}"),
                    },
                    other => other,
                })?;
            epoch_loss += loss * chunk.len() as f64;
            adam_step(&mut adam, &mut params, &grad)?;
        }
        let train_loss = epoch_loss / train_rows as f64;
        let val_loss = eval_val(&params)?;
        curve.push(EpochStats {
            train_loss: Some(train_loss),
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            best_epoch = epoch;
        }
        if epoch - best_epoch >= config.patience {
            break;
        }
    }

    Ok(TrainedVae {
        config: config.clone(),
        group_map: data.group_map.clone(),
        params: best_params,
        best_val_loss: best_val,
        train_curve: curve,
        seed,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::tabular::GroupMap;

    fn continuous_pair_data(rows: usize, rho: f64, seed: u64) -> EncodedMatrix {
        // standardized 2-D gaussian with correlation rho
        let mut rng = rng::stream(seed, "toy-gauss", &[]);
        let mut values = Array2::zeros((rows, 2));
        let a = rho;
        let b = (1.0 - rho * rho).sqrt();
        let noise = rng::standard_normal(&mut rng, rows, 2);
        for i in 0..rows {
            values[[i, 0]] = noise[[i, 0]];
            values[[i, 1]] = a * noise[[i, 0]] + b * noise[[i, 1]];
        }
        EncodedMatrix {
            values,
            group_map: two_numeric_group_map(),
        }
    }

    pub(crate) fn two_numeric_group_map() -> GroupMap {
        use crate::tabular::{Cell, ColumnKind, ColumnSpec, RawTable, TableSchema};
        let schema = TableSchema {
            columns: vec![
                ColumnSpec {
                    name: "x".into(),
                    kind: ColumnKind::Continuous,
                    categories: vec![],
                    missing_allowed: false,
                },
                ColumnSpec {
                    name: "y".into(),
                    kind: ColumnKind::Continuous,
                    categories: vec![],
                    missing_allowed: false,
                },
            ],
        };
        let t = RawTable {
            schema,
            rows: vec![
                vec![Cell::Float(0.0), Cell::Float(1.0)],
                vec![Cell::Float(1.0), Cell::Float(0.0)],
            ],
        };
        crate::tabular::fit_encoder(&t).unwrap().group_map().clone()
    }

    fn small_config() -> VaeConfig {
        VaeConfig {
            latent_dim: 2,
            hidden_size: 16,
            depth: 1,
            max_epochs: 40,
            batch_size: 64,
            patience: 10,
            learning_rate: 1e-2,
        }
    }

    #[test]
    fn zero_epochs_returns_init_unchanged() {
        let data = continuous_pair_data(50, 0.5, 1);
        let mut config = small_config();
        config.max_epochs = 0;
        let arch = VaeArch::new(&config, &data.group_map).unwrap();
        let init = arch.init_params(99);
        let model = train_vae(&data, &config, 7, Some(&init)).unwrap();
        assert_eq!(model.params, init);
        assert_eq!(model.train_curve.len(), 1);
        assert_eq!(model.best_val_loss, model.train_curve[0].val_loss);
    }

    #[test]
    fn best_val_loss_is_curve_minimum_and_not_worse_than_epoch0() {
        let data = continuous_pair_data(200, 0.7, 2);
        let model = train_vae(&data, &small_config(), 3, None).unwrap();
        let min = model
            .train_curve
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(model.best_val_loss, min);
        assert!(model.best_val_loss <= model.train_curve[0].val_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let data = continuous_pair_data(120, 0.3, 4);
        let a = train_vae(&data, &small_config(), 11, None).unwrap();
        let b = train_vae(&data, &small_config(), 11, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.train_curve, b.train_curve);
    }

    #[test]
    fn too_few_rows_rejected() {
        let data = continuous_pair_data(1, 0.0, 5);
        assert!(train_vae(&data, &small_config(), 1, None).is_err());
    }
}
