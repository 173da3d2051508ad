//! Full-covariance Gaussian mixture fitted by EM over encoded latents.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tabular::EncodedMatrix;
use crate::vae::generate::posterior_means;
use crate::vae::TrainedVae;

const MAX_ITERS: usize = 200;
const LL_TOL: f64 = 1e-7;
const JITTER: f64 = 1e-6;
const WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// K x d component means.
    pub means: Array2<f64>,
    pub covariances: Vec<Array2<f64>>,
    /// Mean per-point log-likelihood after each EM iteration.
    pub log_likelihood_trace: Vec<f64>,
    /// Components removed for starving below the weight floor.
    pub dropped_components: usize,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Draw `n` latent samples.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Array2<f64> {
        let d = self.dim();
        let chols: Vec<Array2<f64>> = self
            .covariances
            .iter()
            .map(|c| cholesky_jittered(c).expect("fitted covariance is positive definite"))
            .collect();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let u: f64 = rng.random();
            let mut k = 0;
            let mut acc = 0.0;
            for (j, w) in self.weights.iter().enumerate() {
                acc += w;
                k = j;
                if u < acc {
                    break;
                }
            }
            let eps = rng::standard_normal(rng, 1, d);
            for a in 0..d {
                let mut v = self.means[[k, a]];
                for b in 0..=a {
                    v += chols[k][[a, b]] * eps[[0, b]];
                }
                out[[i, a]] = v;
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor; None if the matrix is not positive
/// definite.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Cholesky with escalating diagonal jitter; the stored covariance is left
/// untouched, jitter only stabilizes factorization.
fn cholesky_jittered(a: &Array2<f64>) -> Option<Array2<f64>> {
    if let Some(l) = cholesky(a) {
        return Some(l);
    }
    let mut jitter = JITTER;
    for _ in 0..8 {
        let mut aj = a.clone();
        for i in 0..a.nrows() {
            aj[[i, i]] += jitter;
        }
        if let Some(l) = cholesky(&aj) {
            return Some(l);
        }
        jitter *= 10.0;
    }
    None
}

struct MvnComponent {
    chol: Array2<f64>,
    log_det: f64,
}

impl MvnComponent {
    fn new(cov: &Array2<f64>) -> Result<Self> {
        let chol = cholesky_jittered(cov).ok_or_else(|| {
            Error::InvalidConfig("covariance not positive definite even after jitter".into())
        })?;
        let log_det = 2.0 * (0..cov.nrows()).map(|i| chol[[i, i]].ln()).sum::<f64>();
        Ok(MvnComponent { chol, log_det })
    }

    fn log_density(&self, x: &[f64], mean: &[f64]) -> f64 {
        let d = mean.len();
        // forward-substitution solve of L y = (x - mean)
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = x[i] - mean[i];
            for k in 0..i {
                s -= self.chol[[i, k]] * y[k];
            }
            y[i] = s / self.chol[[i, i]];
        }
        let quad: f64 = y.iter().map(|v| v * v).sum();
        -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + self.log_det + quad)
    }
}

fn kmeans_pp_seeds(data: &Array2<f64>, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = data.nrows();
    let mut centers = Vec::with_capacity(k);
    centers.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data, i, centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u: f64 = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(data, i, next));
        }
    }
    centers
}

fn sq_dist(data: &Array2<f64>, i: usize, j: usize) -> f64 {
    let (ri, rj) = (data.row(i), data.row(j));
    ri.iter()
        .zip(rj.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn empirical_cov(data: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = data.nrows() as f64;
    let d = data.ncols();
    let mean = data.sum_axis(ndarray::Axis(0)) / n;
    let mut cov = Array2::zeros((d, d));
    for row in data.rows() {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in 0..d {
                cov[[a, b]] += da * (row[b] - mean[b]);
            }
        }
    }
    cov /= n;
    (mean, cov)
}

/// Fit a K-component full-covariance GMM on the data's posterior means.
///
/// k-means++-style seeding, at most 200 EM iterations, stopping when the mean
/// log-likelihood improves by less than 1e-7. Components starving below a
/// 1e-8 weight are dropped (weights renormalized, drop recorded).
pub fn fit_latent_gmm(model: &TrainedVae, data: &EncodedMatrix, k: usize) -> Result<GmmModel> {
    if data.n_rows() == 0 {
        return Err(Error::InsufficientRows {
            needed: 1,
            available: 0,
            detail: "GMM fit".into(),
        });
    }
    if k == 0 || k > data.n_rows() {
        return Err(Error::InvalidConfig(format!(
            "component count {k} must be in 1..={}",
            data.n_rows()
        )));
    }
    let latents = posterior_means(model, data)?;
    fit_gmm_on(&latents, k, rng::derive_seed(model.seed, "gmm", &[]))
}

/// Drop components whose weight starved below the floor; renormalizes the
/// survivors and reports how many were removed.
fn drop_starved(
    weights: Vec<f64>,
    means: Array2<f64>,
    covs: Vec<Array2<f64>>,
) -> (Vec<f64>, Array2<f64>, Vec<Array2<f64>>, usize) {
    let kk = weights.len();
    let keep: Vec<usize> = (0..kk).filter(|&ki| weights[ki] >= WEIGHT_FLOOR).collect();
    if keep.len() == kk {
        return (weights, means, covs, 0);
    }
    let dropped = kk - keep.len();
    let mut new_weights: Vec<f64> = keep.iter().map(|&ki| weights[ki]).collect();
    let wsum: f64 = new_weights.iter().sum();
    for w in &mut new_weights {
        *w /= wsum;
    }
    let d = means.ncols();
    let mut new_means = Array2::zeros((keep.len(), d));
    for (row, &ki) in keep.iter().enumerate() {
        new_means.row_mut(row).assign(&means.row(ki));
    }
    let new_covs = keep.iter().map(|&ki| covs[ki].clone()).collect();
    (new_weights, new_means, new_covs, dropped)
}

/// EM on raw latent rows; exposed for tests that construct latents directly.
pub(crate) fn fit_gmm_on(latents: &Array2<f64>, k: usize, seed: u64) -> Result<GmmModel> {
    let n = latents.nrows();
    let d = latents.ncols();
    let mut rng = rng::stream(seed, "gmm-seeding", &[]);

    let seeds = kmeans_pp_seeds(latents, k, &mut rng);
    let (_, global_cov) = empirical_cov(latents);

    let mut weights = vec![1.0 / k as f64; k];
    let mut means = Array2::zeros((k, d));
    for (ki, &si) in seeds.iter().enumerate() {
        means.row_mut(ki).assign(&latents.row(si));
    }
    let mut covs: Vec<Array2<f64>> = vec![global_cov; k];
    let mut dropped = 0usize;
    let mut trace = Vec::new();

    // single-component shortcut keeps the fixed point exact: the empirical
    // moments are the MLE and EM would only re-derive them
    if k == 1 {
        let (mean, cov) = empirical_cov(latents);
        means.row_mut(0).assign(&mean);
        covs[0] = cov;
        let comp = MvnComponent::new(&covs[0])?;
        let mean_row: Vec<f64> = means.row(0).to_vec();
        let ll = latents
            .rows()
            .into_iter()
            .map(|r| comp.log_density(r.as_slice().unwrap(), &mean_row))
            .sum::<f64>()
            / n as f64;
        trace.push(ll);
        return Ok(GmmModel {
            weights,
            means,
            covariances: covs,
            log_likelihood_trace: trace,
            dropped_components: dropped,
        });
    }

    let mut resp = Array2::zeros((n, k));
    for _iter in 0..MAX_ITERS {
        let kk = weights.len();
        // E-step
        let comps: Vec<MvnComponent> = covs
            .iter()
            .map(MvnComponent::new)
            .collect::<Result<_>>()?;
        let mut ll_sum = 0.0;
        for i in 0..n {
            let x = latents.row(i);
            let xs = x.as_slice().unwrap();
            let mut logs = vec![0.0; kk];
            for ki in 0..kk {
                let mean_row: Vec<f64> = means.row(ki).to_vec();
                logs[ki] = weights[ki].ln() + comps[ki].log_density(xs, &mean_row);
            }
            let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for l in &logs {
                total += (l - mx).exp();
            }
            let lse = mx + total.ln();
            ll_sum += lse;
            for ki in 0..kk {
                resp[[i, ki]] = (logs[ki] - lse).exp();
            }
        }
        let mean_ll = ll_sum / n as f64;
        let converged = trace
            .last()
            .is_some_and(|prev| (mean_ll - prev).abs() < LL_TOL);
        trace.push(mean_ll);
        if converged {
            break;
        }

        // M-step
        let mut nk = vec![0.0; kk];
        for i in 0..n {
            for ki in 0..kk {
                nk[ki] += resp[[i, ki]];
            }
        }
        let mut new_means = Array2::zeros((kk, d));
        for i in 0..n {
            for ki in 0..kk {
                let r = resp[[i, ki]];
                for a in 0..d {
                    new_means[[ki, a]] += r * latents[[i, a]];
                }
            }
        }
        for ki in 0..kk {
            for a in 0..d {
                new_means[[ki, a]] /= nk[ki].max(f64::MIN_POSITIVE);
            }
        }
        let mut new_covs: Vec<Array2<f64>> = Vec::with_capacity(kk);
        for ki in 0..kk {
            let mut cov = Array2::zeros((d, d));
            for i in 0..n {
                let r = resp[[i, ki]];
                if r == 0.0 {
                    continue;
                }
                for a in 0..d {
                    let da = latents[[i, a]] - new_means[[ki, a]];
                    for bcol in 0..d {
                        cov[[a, bcol]] += r * da * (latents[[i, bcol]] - new_means[[ki, bcol]]);
                    }
                }
            }
            cov /= nk[ki].max(f64::MIN_POSITIVE);
            new_covs.push(cov);
        }
        let new_weights: Vec<f64> = nk.iter().map(|v| v / n as f64).collect();

        let (w2, m2, c2, newly_dropped) = drop_starved(new_weights, new_means, new_covs);
        if newly_dropped > 0 {
            dropped += newly_dropped;
            resp = Array2::zeros((n, w2.len()));
        }
        weights = w2;
        means = m2;
        covs = c2;
    }

    Ok(GmmModel {
        weights,
        means,
        covariances: covs,
        log_likelihood_trace: trace,
        dropped_components: dropped,
    })
}
