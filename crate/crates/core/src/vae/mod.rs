//! Mixed-type tabular VAE: ELBO training, latent-space Gaussian mixture
//! fitting, and synthetic row generation.

mod generate;
mod gmm;
mod loss;
mod train;

pub use generate::{generate, posterior_means};
pub use gmm::{fit_latent_gmm, GmmModel};
pub use loss::{elbo_hvp, elbo_loss, elbo_loss_grad, VaeArch, LOGVAR_CLAMP};
pub use train::{train_vae, EpochStats, TrainedVae};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters for one VAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub latent_dim: usize,
    /// Hidden layer width for encoder and decoder.
    pub hidden_size: usize,
    /// Hidden layers per network.
    pub depth: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    /// Epochs over which the KL weight ramps 0 -> 1. Validation always scores
    /// the full ELBO; the ramp only shapes early gradients so latent
    /// dimensions survive the start of training.
    #[serde(default = "default_kl_warmup")]
    pub kl_warmup_epochs: usize,
}

fn default_kl_warmup() -> usize {
    30
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: 10,
            hidden_size: 256,
            depth: 2,
            max_epochs: 500,
            batch_size: 128,
            patience: 30,
            learning_rate: 1e-3,
            kl_warmup_epochs: default_kl_warmup(),
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0
            || self.hidden_size == 0
            || self.depth == 0
            || self.batch_size == 0
            || self.learning_rate <= 0.0
        {
            return Err(Error::InvalidConfig(
                "latent_dim, hidden_size, depth, batch_size, learning_rate must be positive".into(),
            ));
        }
        // max_epochs == 0 is the documented no-op control; otherwise the
        // patience window must fit inside the epoch budget.
        if self.max_epochs > 0 && (self.patience == 0 || self.patience >= self.max_epochs) {
            return Err(Error::InvalidConfig(format!(
                "patience {} must be in 1..max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}
