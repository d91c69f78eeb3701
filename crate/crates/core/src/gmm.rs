//! Joint-density GMM conversion.
//!
//! A full-covariance mixture over stacked source/target static+delta
//! features (c0 excluded), trained with EM. Conversion selects the
//! max-posterior mixture per frame from the source half, conditions the
//! target half on the source features, solves the banded MLPG normal
//! equations for the static trajectory and applies global-variance
//! compensation.

use crate::align::AlignedPairSet;
use crate::error::{Error, Result};
use crate::spectral::{AnalysisConfig, Cepstrogram};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative eigenvalue floor for covariance matrices, as a fraction of the
/// mean data variance.
const COV_FLOOR_REL: f64 = 1e-6;

/// Stacked source/target static+delta rows with per-utterance spans.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFeatureSet {
    /// N x 4*(order-1): source statics, source deltas, target statics,
    /// target deltas.
    pub rows: DMatrix<f64>,
    /// Row ranges per utterance (deltas never cross a span boundary).
    pub spans: Vec<(usize, usize)>,
    /// Static feature dimension per side (order - 1).
    pub static_dim: usize,
}

/// Central-difference deltas within one utterance; one-sided at endpoints.
pub fn delta_features(statics: &DMatrix<f64>) -> DMatrix<f64> {
    let t = statics.nrows();
    let d = statics.ncols();
    let mut out = DMatrix::zeros(t, d);
    if t == 1 {
        return out;
    }
    for j in 0..d {
        out[(0, j)] = statics[(1, j)] - statics[(0, j)];
        out[(t - 1, j)] = statics[(t - 1, j)] - statics[(t - 2, j)];
        for i in 1..t - 1 {
            out[(i, j)] = 0.5 * (statics[(i + 1, j)] - statics[(i - 1, j)]);
        }
    }
    out
}

/// Build joint static+delta vectors from aligned pairs. Deltas are computed
/// within each utterance; c0 columns are dropped. Single-frame utterances
/// are skipped.
pub fn build_joint_vectors(pairs: &AlignedPairSet) -> Result<JointFeatureSet> {
    let order = pairs.order;
    let sd = order - 1;
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut spans = Vec::new();
    let mut at = 0usize;

    for (span, prov) in pairs.utterance_spans().iter().zip(&pairs.provenance) {
        let n = span.1 - span.0;
        if n < 2 {
            eprintln!(
                "warning: skipping single-frame utterance '{}' (deltas undefined)",
                prov.id
            );
            continue;
        }
        let src_static = pairs.rows.view((span.0, 1), (n, sd)).into_owned();
        let tgt_static = pairs.rows.view((span.0, order + 1), (n, sd)).into_owned();
        let src_delta = delta_features(&src_static);
        let tgt_delta = delta_features(&tgt_static);
        let mut block = DMatrix::zeros(n, 4 * sd);
        block.view_mut((0, 0), (n, sd)).copy_from(&src_static);
        block.view_mut((0, sd), (n, sd)).copy_from(&src_delta);
        block.view_mut((0, 2 * sd), (n, sd)).copy_from(&tgt_static);
        block.view_mut((0, 3 * sd), (n, sd)).copy_from(&tgt_delta);
        spans.push((at, at + n));
        at += n;
        blocks.push(block);
    }

    if blocks.is_empty() {
        return Err(Error::Empty(
            "no usable utterances for joint vectors".into(),
        ));
    }
    let total = at;
    let mut rows = DMatrix::zeros(total, 4 * sd);
    let mut cursor = 0;
    for b in &blocks {
        rows.rows_mut(cursor, b.nrows()).copy_from(b);
        cursor += b.nrows();
    }
    Ok(JointFeatureSet {
        rows,
        spans,
        static_dim: sd,
    })
}

/// Full-covariance joint GMM with target GV statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: DVector<f64>,
    /// K x D component means.
    pub means: DMatrix<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Mean per-utterance variance of target statics.
    pub gv_mean: DVector<f64>,
    pub static_dim: usize,
    pub trained_on: String,
    pub config: AnalysisConfig,
}

fn mean_data_variance(data: &DMatrix<f64>) -> f64 {
    let n = data.nrows() as f64;
    let mut total = 0.0;
    for j in 0..data.ncols() {
        let col = data.column(j);
        let mu = col.sum() / n;
        total += col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    }
    total / data.ncols() as f64
}

/// Clamp eigenvalues below `floor`. Cheap path: if Cholesky of (S - floor*I)
/// succeeds all eigenvalues already clear the floor and S is untouched.
fn floor_covariance(s: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let d = s.nrows();
    let shifted = s - DMatrix::identity(d, d) * floor;
    if Cholesky::new(shifted).is_some() {
        return s.clone();
    }
    let eig = nalgebra::SymmetricEigen::new(s.clone());
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let v = eig.eigenvectors.column(i);
        out += vals[i] * v * v.transpose();
    }
    // keep it exactly symmetric
    (&out + out.transpose()) * 0.5
}

/// Per-row log density of N(mean, cov) via a prefactored Cholesky.
fn log_gauss_rows(
    data: &DMatrix<f64>,
    mean: &DVector<f64>,
    chol: &Cholesky<f64, nalgebra::Dyn>,
) -> DVector<f64> {
    let d = mean.len();
    let log_det: f64 = (0..d).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
    let norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
    // z = L^-1 (x - mu) for all rows at once
    let mut centered_t = data.transpose();
    for mut col in centered_t.column_iter_mut() {
        col -= mean;
    }
    let l = chol.l_dirty();
    let z = l
        .solve_lower_triangular(&centered_t)
        .expect("cholesky factor is nonsingular");
    DVector::from_fn(data.nrows(), |i, _| norm - 0.5 * z.column(i).norm_squared())
}

// index-based: rows are addressed jointly across data/assign/dist2 buffers
#[allow(clippy::needless_range_loop)]
fn kmeans_plus_plus(
    data: &DMatrix<f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, f64, DMatrix<f64>) {
    let n = data.nrows();
    let d = data.ncols();
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.gen_range(0..n);
    centers.row_mut(0).copy_from(&data.row(first));
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| (data.row(i) - centers.row(0)).norm_squared())
        .collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let pick = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        };
        centers.row_mut(c).copy_from(&data.row(pick));
        for i in 0..n {
            let nd = (data.row(i) - centers.row(c)).norm_squared();
            if nd < dist2[i] {
                dist2[i] = nd;
            }
        }
    }

    // Lloyd iterations
    let mut assign = vec![0usize; n];
    for _ in 0..30 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dd = (data.row(i) - centers.row(c)).norm_squared();
                if dd < best_d {
                    best_d = dd;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = DMatrix::zeros(k, d);
        for i in 0..n {
            counts[assign[i]] += 1;
            let row = sums.row(assign[i]) + data.row(i);
            sums.row_mut(assign[i]).copy_from(&row);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let row = sums.row(c) / counts[c] as f64;
                centers.row_mut(c).copy_from(&row);
            }
        }
        if !changed {
            break;
        }
    }
    let inertia: f64 = (0..n)
        .map(|i| (data.row(i) - centers.row(assign[i])).norm_squared())
        .sum();
    (assign, inertia, centers)
}

/// EM training. `tol` is the relative log-likelihood improvement threshold
/// (0.001 by default in the CLI); init is the best of 10 k-means++ restarts.
pub fn train_gmm(
    data: &JointFeatureSet,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
    trained_on: &str,
    config: &AnalysisConfig,
) -> Result<GmmModel> {
    train_gmm_traced(data, k, tol, max_iter, seed, trained_on, config).map(|(m, _)| m)
}

/// Like [`train_gmm`], additionally returning the log-likelihood recorded at
/// the start of every EM iteration (an EM-monotone sequence).
pub fn train_gmm_traced(
    data: &JointFeatureSet,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
    trained_on: &str,
    config: &AnalysisConfig,
) -> Result<(GmmModel, Vec<f64>)> {
    let x = &data.rows;
    let n = x.nrows();
    let d = x.ncols();
    if k == 0 {
        return Err(Error::Config("mixture count must be >= 1".into()));
    }
    if tol <= 0.0 {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    if n < 10 * k {
        return Err(Error::Training(format!(
            "need at least {} frames for K={}, got {}",
            10 * k,
            k,
            n
        )));
    }

    let floor = COV_FLOOR_REL * mean_data_variance(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // init: best-of-10 k-means++ restarts by inertia
    let mut best: Option<(f64, Vec<usize>, DMatrix<f64>)> = None;
    for _ in 0..10 {
        let (assign, inertia, centers) = kmeans_plus_plus(x, k, &mut rng);
        if best.as_ref().is_none_or(|(b, _, _)| inertia < *b) {
            best = Some((inertia, assign, centers));
        }
    }
    let (_, assign, centers) = best.unwrap();

    let mut weights = DVector::zeros(k);
    let mut means = centers;
    let mut covariances: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    {
        // global covariance as the fallback for starved clusters
        let gmean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= gmean.transpose();
        }
        let global_cov = floor_covariance(&((centered.transpose() * &centered) / n as f64), floor);
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            weights[c] = members.len() as f64 / n as f64;
            if members.len() < 2 {
                covariances.push(global_cov.clone());
                continue;
            }
            let mut cc = DMatrix::zeros(members.len(), d);
            for (r, &i) in members.iter().enumerate() {
                cc.row_mut(r).copy_from(&(x.row(i) - means.row(c)));
            }
            covariances.push(floor_covariance(
                &((cc.transpose() * &cc) / members.len() as f64),
                floor,
            ));
        }
        let wsum = weights.sum();
        weights /= wsum;
    }

    let mut trace = Vec::with_capacity(max_iter);
    let mut prev_ll = f64::NEG_INFINITY;
    for _iter in 0..max_iter {
        // E-step
        let mut log_resp = DMatrix::zeros(n, k);
        for c in 0..k {
            let chol = Cholesky::new(covariances[c].clone())
                .ok_or_else(|| Error::Training("covariance lost positive definiteness".into()))?;
            let lp = log_gauss_rows(x, &means.row(c).transpose(), &chol);
            let lw = weights[c].max(1e-300).ln();
            for i in 0..n {
                log_resp[(i, c)] = lw + lp[i];
            }
        }
        let mut ll = 0.0;
        for i in 0..n {
            let row_max = log_resp.row(i).max();
            let lse = row_max
                + log_resp
                    .row(i)
                    .iter()
                    .map(|v| (v - row_max).exp())
                    .sum::<f64>()
                    .ln();
            ll += lse;
            for c in 0..k {
                log_resp[(i, c)] = (log_resp[(i, c)] - lse).exp();
            }
        }

        // M-step
        for c in 0..k {
            let resp = log_resp.column(c);
            let nk: f64 = resp.sum();
            if nk < 1e-10 {
                continue; // starved component keeps its parameters
            }
            weights[c] = nk / n as f64;
            let mu = DVector::from_fn(d, |j, _| x.column(j).dot(&resp) / nk);
            means.row_mut(c).copy_from(&mu.transpose());
            let mut centered = x.clone();
            for mut row in centered.row_iter_mut() {
                row -= mu.transpose();
            }
            let mut weighted = centered.clone();
            for (i, mut row) in weighted.row_iter_mut().enumerate() {
                row *= resp[i];
            }
            let cov = (weighted.transpose() * &centered) / nk;
            covariances[c] = floor_covariance(&((&cov + cov.transpose()) * 0.5), floor);
        }
        let wsum = weights.sum();
        weights /= wsum;

        trace.push(ll);
        let rel = if prev_ll.is_finite() {
            (ll - prev_ll) / prev_ll.abs().max(1e-10)
        } else {
            f64::INFINITY
        };
        prev_ll = ll;
        if rel.abs() < tol {
            break;
        }
    }

    // GV statistics: per-utterance variance of target statics, averaged
    let sd = data.static_dim;
    let mut gv = DVector::zeros(sd);
    for &(a, b) in &data.spans {
        let t = (b - a) as f64;
        for j in 0..sd {
            let col = x.view((a, 2 * sd + j), (b - a, 1));
            let mu = col.sum() / t;
            gv[j] += col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / t;
        }
    }
    gv /= data.spans.len() as f64;

    Ok((
        GmmModel {
            weights,
            means,
            covariances,
            gv_mean: gv,
            static_dim: sd,
            trained_on: trained_on.to_string(),
            config: config.clone(),
        },
        trace,
    ))
}

/// Per-iteration log-likelihood trace (for monotonicity checks).
#[allow(clippy::needless_range_loop)]
pub fn em_log_likelihood(data: &DMatrix<f64>, model: &GmmModel) -> f64 {
    let n = data.nrows();
    let k = model.weights.len();
    let mut ll = 0.0;
    let mut lps = Vec::with_capacity(k);
    for c in 0..k {
        let chol = Cholesky::new(model.covariances[c].clone()).expect("SPD");
        lps.push(log_gauss_rows(data, &model.means.row(c).transpose(), &chol));
    }
    for i in 0..n {
        let vals: Vec<f64> = (0..k)
            .map(|c| model.weights[c].max(1e-300).ln() + lps[c][i])
            .collect();
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ll += m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    }
    ll
}

/// Symmetric positive-definite banded system solver (bandwidth 2), used for
/// the MLPG normal equations. `diag`, `sub1`, `sub2` hold A[t][t], A[t+1][t],
/// A[t+2][t].
pub fn solve_banded(diag: &[f64], sub1: &[f64], sub2: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let t = diag.len();
    // banded Cholesky A = L D L^T with unit lower band L
    let mut d = vec![0.0f64; t];
    let mut l1 = vec![0.0f64; t]; // L[t+1][t]
    let mut l2 = vec![0.0f64; t]; // L[t+2][t]
    for i in 0..t {
        let mut di = diag[i];
        if i >= 1 {
            di -= l1[i - 1] * l1[i - 1] * d[i - 1];
        }
        if i >= 2 {
            di -= l2[i - 2] * l2[i - 2] * d[i - 2];
        }
        if di <= 0.0 {
            return Err(Error::Internal(
                "banded system not positive definite".into(),
            ));
        }
        d[i] = di;
        if i + 1 < t {
            let mut v = sub1[i];
            if i >= 1 {
                v -= l2[i - 1] * l1[i - 1] * d[i - 1];
            }
            l1[i] = v / di;
        }
        if i + 2 < t {
            l2[i] = sub2[i] / di;
        }
    }
    // forward solve L y = rhs
    let mut y = rhs.to_vec();
    for i in 0..t {
        if i >= 1 {
            y[i] -= l1[i - 1] * y[i - 1];
        }
        if i >= 2 {
            y[i] -= l2[i - 2] * y[i - 2];
        }
    }
    // diagonal
    for i in 0..t {
        y[i] /= d[i];
    }
    // back solve L^T x = y
    for i in (0..t).rev() {
        if i + 1 < t {
            y[i] -= l1[i] * y[i + 1];
        }
        if i + 2 < t {
            y[i] -= l2[i] * y[i + 2];
        }
    }
    Ok(y)
}

/// Maximum-likelihood static trajectory for one dimension.
///
/// Observations: static y_t ~ N(static_mean[t], static_var[t]) and delta
/// (Wy)_t ~ N(delta_mean[t], delta_var[t]) with the central-difference W
/// (one-sided at the endpoints).
pub fn mlpg_dimension(
    static_mean: &[f64],
    static_var: &[f64],
    delta_mean: &[f64],
    delta_var: &[f64],
) -> Result<Vec<f64>> {
    let t = static_mean.len();
    if t == 0 {
        return Err(Error::Empty("no frames for MLPG".into()));
    }
    if t == 1 {
        return Ok(vec![static_mean[0]]);
    }
    let mut diag = vec![0.0f64; t];
    let mut sub1 = vec![0.0f64; t];
    let mut sub2 = vec![0.0f64; t];
    let mut rhs = vec![0.0f64; t];

    // static rows
    for i in 0..t {
        let p = 1.0 / static_var[i];
        diag[i] += p;
        rhs[i] += p * static_mean[i];
    }
    // delta rows: coefficient list (index, weight)
    for i in 0..t {
        let p = 1.0 / delta_var[i];
        let coeffs: [(usize, f64); 2] = if i == 0 {
            [(0, -1.0), (1, 1.0)]
        } else if i == t - 1 {
            [(t - 2, -1.0), (t - 1, 1.0)]
        } else {
            [(i - 1, -0.5), (i + 1, 0.5)]
        };
        for &(a, wa) in &coeffs {
            rhs[a] += p * wa * delta_mean[i];
            for &(b, wb) in &coeffs {
                if a == b {
                    diag[a] += p * wa * wb;
                } else if b == a + 1 {
                    sub1[a] += p * wa * wb;
                } else if b == a + 2 {
                    sub2[a] += p * wa * wb;
                }
            }
        }
    }
    solve_banded(&diag, &sub1, &sub2, &rhs)
}

/// Per-mixture conditioning cache for conversion.
struct Conditioner {
    /// Marginal source mean and Cholesky of the source block.
    mu_x: DVector<f64>,
    chol_xx: Cholesky<f64, nalgebra::Dyn>,
    /// y | x regression: mean = a * (x - mu_x) + mu_y.
    a: DMatrix<f64>,
    mu_y: DVector<f64>,
    /// Diagonal of the conditional covariance.
    cond_var: DVector<f64>,
}

fn build_conditioners(m: &GmmModel) -> Result<Vec<Conditioner>> {
    let sd = m.static_dim;
    let half = 2 * sd;
    let k = m.weights.len();
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let cov = &m.covariances[c];
        let sxx = cov.view((0, 0), (half, half)).into_owned();
        let sxy = cov.view((0, half), (half, half)).into_owned();
        let syy = cov.view((half, half), (half, half)).into_owned();
        let chol_xx = Cholesky::new(sxx.clone())
            .ok_or_else(|| Error::Training("source covariance block not SPD".into()))?;
        // A = Syx Sxx^-1  (solve Sxx Z = Sxy, A = Z^T)
        let a = chol_xx.solve(&sxy).transpose();
        let cond_cov = &syy - &a * &sxy;
        let cond_var = DVector::from_fn(half, |i, _| cond_cov[(i, i)].max(1e-12));
        out.push(Conditioner {
            mu_x: m.means.row(c).columns(0, half).transpose(),
            chol_xx,
            a,
            mu_y: m.means.row(c).columns(half, half).transpose(),
            cond_var,
        });
    }
    Ok(out)
}

/// Scale each dimension's utterance variance toward the training GV mean
/// (exponent 0.4 = 0.5 * blend 0.8).
pub fn apply_gv(statics: &mut DMatrix<f64>, gv_mean: &DVector<f64>) {
    let t = statics.nrows() as f64;
    for j in 0..statics.ncols() {
        let mu = statics.column(j).sum() / t;
        let var = statics
            .column(j)
            .iter()
            .map(|v| (v - mu) * (v - mu))
            .sum::<f64>()
            / t;
        if var <= 1e-12 || gv_mean[j] <= 0.0 {
            continue;
        }
        let scale = (gv_mean[j] / var).powf(0.4);
        for i in 0..statics.nrows() {
            statics[(i, j)] = mu + (statics[(i, j)] - mu) * scale;
        }
    }
}

/// Convert a source Cepstrogram. `use_gv` disables GV compensation for
/// diagnostic comparisons.
pub fn convert_gmm_opts(m: &GmmModel, src: &Cepstrogram, use_gv: bool) -> Result<Cepstrogram> {
    let sd = m.static_dim;
    if src.config.order != sd + 1 {
        return Err(Error::Dimension(format!(
            "model expects order {}, got {}",
            sd + 1,
            src.config.order
        )));
    }
    let t = src.num_frames();
    if t == 0 {
        return Err(Error::Empty("no frames to convert".into()));
    }
    let statics = src.frames.columns(1, sd).into_owned();
    let deltas = delta_features(&statics);
    let mut x = DMatrix::zeros(t, 2 * sd);
    x.view_mut((0, 0), (t, sd)).copy_from(&statics);
    x.view_mut((0, sd), (t, sd)).copy_from(&deltas);

    let conds = build_conditioners(m)?;
    let k = m.weights.len();

    // max-posterior mixture per frame from the source marginal
    let mut log_post = DMatrix::zeros(t, k);
    for (c, cond) in conds.iter().enumerate() {
        let lp = log_gauss_rows(&x, &cond.mu_x, &cond.chol_xx);
        let lw = m.weights[c].max(1e-300).ln();
        for i in 0..t {
            log_post[(i, c)] = lw + lp[i];
        }
    }
    let selected: Vec<usize> = (0..t)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if log_post[(i, c)] > log_post[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect();

    // conditional means per frame
    let mut mean_static = DMatrix::zeros(t, sd);
    let mut mean_delta = DMatrix::zeros(t, sd);
    let mut var_static = DMatrix::zeros(t, sd);
    let mut var_delta = DMatrix::zeros(t, sd);
    for i in 0..t {
        let cond = &conds[selected[i]];
        let xi = x.row(i).transpose();
        let m_y = &cond.mu_y + &cond.a * (&xi - &cond.mu_x);
        for j in 0..sd {
            mean_static[(i, j)] = m_y[j];
            mean_delta[(i, j)] = m_y[sd + j];
            var_static[(i, j)] = cond.cond_var[j];
            var_delta[(i, j)] = cond.cond_var[sd + j];
        }
    }

    // MLPG per dimension
    let mut out_static = DMatrix::zeros(t, sd);
    for j in 0..sd {
        let sm: Vec<f64> = (0..t).map(|i| mean_static[(i, j)]).collect();
        let sv: Vec<f64> = (0..t).map(|i| var_static[(i, j)]).collect();
        let dm: Vec<f64> = (0..t).map(|i| mean_delta[(i, j)]).collect();
        let dv: Vec<f64> = (0..t).map(|i| var_delta[(i, j)]).collect();
        let y = mlpg_dimension(&sm, &sv, &dm, &dv)?;
        for i in 0..t {
            out_static[(i, j)] = y[i];
        }
    }

    if use_gv {
        apply_gv(&mut out_static, &m.gv_mean);
    }

    let mut frames = DMatrix::zeros(t, sd + 1);
    for i in 0..t {
        frames[(i, 0)] = src.frames[(i, 0)]; // energy passthrough
        for j in 0..sd {
            frames[(i, j + 1)] = out_static[(i, j)];
        }
    }
    Ok(Cepstrogram {
        frames,
        config: src.config.clone(),
    })
}

/// Convert with GV compensation (the production path).
pub fn convert_gmm(m: &GmmModel, src: &Cepstrogram) -> Result<Cepstrogram> {
    convert_gmm_opts(m, src, true)
}
