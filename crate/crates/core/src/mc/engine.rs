use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dgp::{assemble_panel, CrossDependence, DgpDescriptor, PanelInstance};
use crate::error::{Error, Result};
use crate::estimator::{align_to, pc_fit, Alignment, PcFit, TruthOracle};
use crate::identities::{core_gaps, IDENTITY_TOL};
use crate::inference::{
    avar_factor, avar_loading, confidence_interval, default_bandwidth, oracle_objects, plugin_avar_loading,
    plugin_cov_factor, plugin_var_common, var_common, AsymptoticObjects,
};
use crate::leaveout::{
    decomposition_residuals, delta_matrices, leave_neighbor_out_with, leave_one_out_with, loo_proximity,
};
use crate::rng::replication_seed;

use super::config::{ExperimentConfig, GridPoint, TargetKind, TargetSpec, VarianceMode};

/// One row of `records.csv`: a replication × target × coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub grid_id: usize,
    pub rep_id: usize,
    pub seed: u64,
    pub n: usize,
    pub t: usize,
    pub alpha: f64,
    pub target: TargetKind,
    pub unit: Option<usize>,
    pub period: Option<usize>,
    pub component: usize,
    pub estimate: f64,
    pub truth: f64,
    pub std_err: f64,
    /// (estimate − truth) / std_err
    pub z: f64,
    /// Coordinate of cov^{−1/2}(estimate − truth).
    pub studentized: f64,
    pub ci_hit: bool,
    /// Euclidean norm of the whole target error vector.
    pub error_norm: f64,
    pub flag: Option<String>,
    pub max_identity_gap: Option<f64>,
    pub first_order_norm: Option<f64>,
    pub r1_norm: Option<f64>,
    pub r2_norm: Option<f64>,
    pub delta1_norm: Option<f64>,
    pub delta2_norm: Option<f64>,
    pub loo_proximity: Option<f64>,
    pub lno_stat: Option<f64>,
}

impl ReplicationRecord {
    pub fn is_valid(&self) -> bool {
        self.flag.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridProgress {
    pub grid_id: usize,
    pub n_grid: usize,
    pub n: usize,
    pub t: usize,
    pub replications: usize,
    pub flagged: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<ReplicationRecord>,
    pub elapsed_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Diag {
    max_identity_gap: Option<f64>,
    first_order_norm: Option<f64>,
    r1_norm: Option<f64>,
    r2_norm: Option<f64>,
    delta1_norm: Option<f64>,
    delta2_norm: Option<f64>,
    loo_proximity: Option<f64>,
    lno_stat: Option<f64>,
}

struct TargetResult {
    estimate: DVector<f64>,
    truth: DVector<f64>,
    covariance: DMatrix<f64>,
}

/// Run every replication of every grid point. Replications run on the
/// current rayon pool; results come back in (grid, replication) order so the
/// output does not depend on the number of threads.
pub fn run_experiment(cfg: &ExperimentConfig, progress: &(dyn Fn(&GridProgress) + Sync)) -> Result<RunOutput> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut elapsed_seconds = Vec::new();
    for (g, gp) in cfg.grid.iter().enumerate() {
        let start = Instant::now();
        let batch: Vec<Vec<ReplicationRecord>> =
            (0..cfg.replications).into_par_iter().map(|k| run_replication(cfg, g, gp, k)).collect();
        let batch: Vec<ReplicationRecord> = batch.into_iter().flatten().collect();
        let secs = start.elapsed().as_secs_f64();
        let flagged = batch.iter().filter(|r| !r.is_valid()).count();
        progress(&GridProgress {
            grid_id: g,
            n_grid: cfg.grid.len(),
            n: gp.n,
            t: gp.t,
            replications: cfg.replications,
            flagged,
            elapsed_seconds: secs,
        });
        elapsed_seconds.push(secs);
        records.extend(batch);
    }
    Ok(RunOutput { records, elapsed_seconds })
}

fn target_dims(kind: TargetKind, r: usize) -> usize {
    match kind {
        TargetKind::Common => 1,
        _ => r,
    }
}

/// Records for one replication; failures become flagged rows.
pub fn run_replication(cfg: &ExperimentConfig, grid_id: usize, gp: &GridPoint, rep_id: usize) -> Vec<ReplicationRecord> {
    let seed = replication_seed(cfg.base_seed, grid_id as u64, rep_id as u64);
    let blank = |tgt: &TargetSpec, component: usize, flag: String, diag: &Diag| {
        let (i, t) = tgt.resolve(gp.n, gp.t);
        ReplicationRecord {
            grid_id,
            rep_id,
            seed,
            n: gp.n,
            t: gp.t,
            alpha: gp.alpha(),
            target: tgt.kind,
            unit: (tgt.kind != TargetKind::Factor).then_some(i),
            period: (tgt.kind != TargetKind::Loading).then_some(t),
            component,
            estimate: f64::NAN,
            truth: f64::NAN,
            std_err: f64::NAN,
            z: f64::NAN,
            studentized: f64::NAN,
            ci_hit: false,
            error_norm: f64::NAN,
            flag: Some(flag),
            max_identity_gap: diag.max_identity_gap,
            first_order_norm: diag.first_order_norm,
            r1_norm: diag.r1_norm,
            r2_norm: diag.r2_norm,
            delta1_norm: diag.delta1_norm,
            delta2_norm: diag.delta2_norm,
            loo_proximity: diag.loo_proximity,
            lno_stat: diag.lno_stat,
        }
    };
    let fail_all = |e: Error| -> Vec<ReplicationRecord> {
        let msg = e.to_string();
        cfg.targets
            .iter()
            .flat_map(|tgt| (0..target_dims(tgt.kind, gp.r)).map(move |c| (tgt, c)))
            .map(|(tgt, c)| blank(tgt, c, msg.clone(), &Diag::default()))
            .collect()
    };

    let setup = (|| -> Result<_> {
        let desc = gp.descriptor(seed)?;
        let inst = assemble_panel(&desc)?;
        let oracle = TruthOracle::new(&inst.truth)?;
        let fit = pc_fit(&inst.panel, desc.r)?;
        let al = align_to(&fit, &inst.truth, &oracle)?;
        Ok((desc, inst, oracle, fit, al))
    })();
    let (desc, inst, oracle, fit, al) = match setup {
        Ok(s) => s,
        Err(e) => return fail_all(e),
    };

    let first_unit = cfg.targets.first().map(|t| t.resolve(gp.n, gp.t)).unwrap_or((gp.n / 2, gp.t / 2));
    let (diag, diag_flag) = match diagnostics(cfg, gp, &inst, &oracle, &fit, &al, first_unit) {
        Ok(d) => {
            let gap = d.max_identity_gap.unwrap_or(0.0);
            let flag = (!(gap < IDENTITY_TOL)).then(|| format!("identity gap {gap:e}"));
            (d, flag)
        }
        Err(e) => (Diag::default(), Some(format!("diagnostics: {e}"))),
    };

    let mut out = Vec::new();
    let mut objects: Option<Result<AsymptoticObjects>> = None;
    for tgt in &cfg.targets {
        let (i, t) = tgt.resolve(gp.n, gp.t);
        if cfg.variance_mode == VarianceMode::Oracle && objects.is_none() {
            objects = Some(oracle_objects(&desc, &inst.truth, i.min(gp.n - 1), t.min(gp.t - 1)));
        }
        let res = evaluate_target(cfg, &desc, &inst, &fit, &al, objects.as_ref(), tgt.kind, i, t);
        let dims = target_dims(tgt.kind, gp.r);
        let tr = match res {
            Ok(tr) => tr,
            Err(e) => {
                out.extend((0..dims).map(|c| blank(tgt, c, e.to_string(), &diag)));
                continue;
            }
        };
        // A failed interval still leaves the estimate and its error worth recording.
        let ci = confidence_interval(&tr.estimate, &tr.covariance, &tr.truth, cfg.ci_level);
        let err_norm = (&tr.estimate - &tr.truth).norm();
        for c in 0..dims {
            let mut rec = blank(tgt, c, String::new(), &diag);
            rec.estimate = tr.estimate[c];
            rec.truth = tr.truth[c];
            rec.error_norm = err_norm;
            match &ci {
                Ok(ci) => {
                    let se = tr.covariance[(c, c)].sqrt();
                    rec.std_err = se;
                    rec.z = (tr.estimate[c] - tr.truth[c]) / se;
                    rec.studentized = ci.studentized[c];
                    rec.ci_hit = ci.interval_hits[c];
                    rec.flag = diag_flag.clone();
                }
                Err(e) => rec.flag = Some(e.to_string()),
            }
            out.push(rec);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn evaluate_target(
    cfg: &ExperimentConfig,
    desc: &DgpDescriptor,
    inst: &PanelInstance,
    fit: &PcFit,
    al: &Alignment,
    objects: Option<&Result<AsymptoticObjects>>,
    kind: TargetKind,
    i: usize,
    t: usize,
) -> Result<TargetResult> {
    let truth = &inst.truth;
    let x = inst.panel.values();
    let s = &al.sign_estimate;
    let obj = || -> Result<&AsymptoticObjects> {
        match objects {
            Some(Ok(o)) => Ok(o),
            Some(Err(e)) => Err(e.clone()),
            None => Err(Error::ConfigInvalid("oracle objects unavailable".into())),
        }
    };
    let bandwidth = cfg.bandwidth.unwrap_or_else(|| default_bandwidth(&desc.noise.temporal, desc.t));
    let block = match desc.noise.cross {
        CrossDependence::Independent => 1,
        CrossDependence::BlockNeighbors { block_size, .. } => block_size,
    };
    match kind {
        TargetKind::Loading => {
            let estimate = fit.loadings_hat.row(i).transpose();
            let target = al.h_inv.clone() * truth.loadings.row(i).transpose();
            let covariance = match cfg.variance_mode {
                VarianceMode::Oracle => s * avar_loading(obj()?)? * s / desc.t as f64,
                VarianceMode::PlugIn => plugin_avar_loading(fit, x, i, bandwidth)? / desc.t as f64,
            };
            Ok(TargetResult { estimate, truth: target, covariance })
        }
        TargetKind::Factor => {
            let estimate = fit.factors_hat.row(t).transpose();
            let target = al.h.transpose() * truth.factors.row(t).transpose();
            let covariance = match cfg.variance_mode {
                VarianceMode::Oracle => {
                    let o = obj()?;
                    s * avar_factor(o)? * s / o.n_alpha
                }
                VarianceMode::PlugIn => plugin_cov_factor(fit, x, t, block)?,
            };
            Ok(TargetResult { estimate, truth: target, covariance })
        }
        TargetKind::Common => {
            let estimate = fit.loadings_hat.row(i).dot(&fit.factors_hat.row(t));
            let target = truth.common[(i, t)];
            let var = match cfg.variance_mode {
                VarianceMode::Oracle => var_common(truth, obj()?, i, t)?,
                VarianceMode::PlugIn => plugin_var_common(fit, x, i, t, bandwidth, block)?,
            };
            Ok(TargetResult {
                estimate: DVector::from_element(1, estimate),
                truth: DVector::from_element(1, target),
                covariance: DMatrix::from_element(1, 1, var),
            })
        }
    }
}

fn diagnostics(
    cfg: &ExperimentConfig,
    gp: &GridPoint,
    inst: &PanelInstance,
    oracle: &TruthOracle,
    fit: &PcFit,
    al: &Alignment,
    (i, t): (usize, usize),
) -> Result<Diag> {
    let d = &cfg.diagnostics;
    let mut out = Diag::default();
    if d.decomposition {
        let gaps = core_gaps(inst, fit, oracle, al)?;
        out.max_identity_gap = Some(gaps.max());
        let dec = decomposition_residuals(fit, oracle, al, &inst.noise)?;
        out.first_order_norm = Some(dec.first_order.row(i).norm());
        out.r1_norm = Some(dec.r1.row(i).norm());
        out.r2_norm = Some(dec.r2.row(i).norm());
    }
    if d.leave_one_out {
        let loo = leave_one_out_with(&inst.panel, &inst.truth, oracle, i, gp.r)?;
        let dm = delta_matrices(fit, al, &loo, oracle, &inst.noise)?;
        out.delta1_norm = Some(dm.delta1.norm());
        out.delta2_norm = Some(dm.delta2.norm());
        out.loo_proximity = Some(loo_proximity(fit, al, &loo));
    }
    if d.leave_neighbor_out {
        let delta = gp.delta(d);
        let lno = leave_neighbor_out_with(&inst.panel, &inst.truth, oracle, t, delta, gp.r)?;
        let dm = delta_matrices(fit, al, &lno, oracle, &inst.noise)?;
        out.lno_stat = Some(lno_statistic(&dm.delta1, &inst.noise, t, gp.noise_spec().marginal_variance()));
    }
    Ok(out)
}

/// `Σ_i ε_it Δ₁,i1 / (‖Δ₁,·1‖ σ)`: standard normal when ε_·t is independent of
/// the leave-neighbour-out fit and cross-sectionally independent.
pub fn lno_statistic(delta1: &DMatrix<f64>, noise: &DMatrix<f64>, t: usize, variance: f64) -> f64 {
    let col = delta1.column(0);
    let num: f64 = noise.column(t).dot(&col);
    num / (col.norm() * variance.sqrt())
}
