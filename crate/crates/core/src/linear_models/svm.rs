//! Linear soft-margin SVM trained in the dual by sequential minimal
//! optimization (second-order working-set selection), keeping the primal
//! weight vector explicit. The equality constraint `Σ y_i α_i = 0` leaves the
//! bias unregularized.

use super::{signed_targets, LinearModel, LossKind, Regularization};
use crate::text_features::{CscMatrix, SparseVector};
use crate::{Error, Result};

const STOP_EPS: f64 = 1e-3;
const TAU: f64 = 1e-12;

/// `½‖w‖² + C Σ max(0, 1 − y_i(w·x_i + b))`.
pub fn svm_objective(x: &[SparseVector], y: &[u8], c: f64, w: &[f64], b: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &l)| {
            let t = if l == 1 { 1.0 } else { -1.0 };
            (1.0 - t * (row.dot_dense(w) + b)).max(0.0)
        })
        .sum();
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * hinge
}

/// For every row r, add `scale * (x_r · v)` into `out[r]`, where `v` is sparse.
fn accumulate_products(csc: &CscMatrix, v: &[(usize, f64)], scale: &[f64], out: &mut [f64]) {
    for &(f, vf) in v {
        for &(r, xv) in &csc.columns[f] {
            out[r] += scale[r] * xv * vf;
        }
    }
}

pub fn fit_svm(x: &[SparseVector], y: &[u8], c: f64) -> Result<LinearModel> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    let ys = signed_targets(x, y)?;
    let n = x.len();
    let dim = x[0].dim();
    let csc = CscMatrix::from_rows(x, dim);
    let qd: Vec<f64> = x.iter().map(SparseVector::squared_norm).collect();
    let ones = vec![1.0; n];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut w = vec![0.0; dim];
    let mut k_row = vec![0.0; n];
    let max_iter = (100 * n).max(10_000_000);

    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    for _ in 0..max_iter {
        // i maximizes −y_t G_t over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -ys[t] * grad[t];
            let in_up = if ys[t] > 0.0 { !is_upper(alpha[t]) } else { !is_lower(alpha[t]) };
            if in_up && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        k_row.iter_mut().for_each(|k| *k = 0.0);
        let xi: Vec<(usize, f64)> = x[i].iter().collect();
        accumulate_products(&csc, &xi, &ones, &mut k_row);

        let mut gmax2 = f64::NEG_INFINITY;
        let mut obj_min = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            let in_low = if ys[t] > 0.0 { !is_lower(alpha[t]) } else { !is_upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let v = -ys[t] * grad[t];
            gmax2 = gmax2.max(-v);
            let diff = gmax - v;
            if diff > 0.0 {
                let quad = qd[i] + qd[t] - 2.0 * k_row[t];
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(diff * diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel else { break };
        if gmax + gmax2 < STOP_EPS {
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = ys[i] * ys[j] * k_row[j];
        if ys[i] != ys[j] {
            let quad = (qd[i] + qd[j] + 2.0 * q_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * q_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        // w += Σ y Δα x over the two updated rows; G_t += y_t x_t·Δw
        let di = ys[i] * (alpha[i] - old_i);
        let dj = ys[j] * (alpha[j] - old_j);
        let mut delta_w: Vec<(usize, f64)> = x[i].iter().map(|(f, v)| (f, di * v)).collect();
        delta_w.extend(x[j].iter().map(|(f, v)| (f, dj * v)));
        for &(f, v) in &delta_w {
            w[f] += v;
        }
        accumulate_products(&csc, &delta_w, &ys, &mut grad);
    }

    Ok(LinearModel {
        weights: w,
        bias: -rho(&alpha, &grad, &ys, c),
        loss: LossKind::Hinge,
        regularization: Regularization::Inverse { c },
    })
}

/// Offset from the free support vectors, or the midpoint of the feasible
/// interval when none are free.
fn rho(alpha: &[f64], grad: &[f64], ys: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..alpha.len() {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
