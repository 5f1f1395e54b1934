//! Grid sweeps over the sub-space count and feature width.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::mean_metrics;
use super::{evaluate_views, train, Dataset, TrainConfig, TrainError};
use crate::autodiff::Scalar;
use crate::fields::{HeadConfig, MsHeadConfig};
use crate::scene::Split;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: usize,
    pub d: usize,
    pub h: usize,
    pub params: usize,
    pub test_psnr: f64,
    pub test_ssim: Option<f64>,
}

/// Trains one multi-space model per `(K, d)` cell, all with the seed of
/// `base`, and scores each on the test split. The decoder and gate width
/// follows `d`. Cells run one after another; each writes to
/// `out_dir/k{K}_d{d}` when `out_dir` is given, so an interrupted sweep
/// resumes cell by cell.
pub fn ablation_sweep<T: Scalar>(
    base: &TrainConfig,
    ks: &[usize],
    ds: &[usize],
    dataset: &Dataset,
    out_dir: Option<&Path>,
) -> Result<Vec<AblationRow>, TrainError> {
    if ks.is_empty() || ds.is_empty() {
        return Err(TrainError::Config("ablation grid is empty".into()));
    }
    let test = dataset.split(Split::Test);
    if test.is_empty() {
        return Err(TrainError::Data("dataset has no test views".into()));
    }
    let mut rows = Vec::with_capacity(ks.len() * ds.len());
    for &k in ks {
        for &d in ds {
            let mut cfg = base.clone();
            let view_dependent = match base.model.head {
                HeadConfig::MultiSpace(c) => c.view_dependent,
                _ => true,
            };
            cfg.model.head = HeadConfig::MultiSpace(MsHeadConfig {
                view_dependent,
                ..MsHeadConfig::new(k, d, d)
            });
            let cell_dir = out_dir.map(|o| o.join(format!("k{k}_d{d}")));
            let outcome = train::<T>(&cfg, dataset, cell_dir.as_deref())?;
            let metrics = evaluate_views(
                &outcome.model,
                &test,
                dataset.near,
                dataset.far,
                &cfg.eval_settings(dataset.background),
                cfg.chunk,
            )?;
            let (test_psnr, test_ssim) = mean_metrics(&metrics);
            log::info!("ablation K={k} d={d}: test PSNR {test_psnr:.3}");
            rows.push(AblationRow {
                k,
                d,
                h: d,
                params: outcome.model.param_count(),
                test_psnr,
                test_ssim,
            });
        }
    }
    Ok(rows)
}
