//! L2-regularized logistic regression solved by truncated Newton (Newton-CG)
//! with a backtracking line search. The bias is not penalized.

use super::{sigmoid, signed_targets, LinearModel, LossKind, Regularization};
use crate::text_features::SparseVector;
use crate::{Error, Result};

pub const LOGREG_TOLERANCE: f64 = 1e-6;
pub const LOGREG_MAX_ITER: usize = 1000;

/// `ln(1 + e^{-m})` without overflow.
fn log_loss(margin: f64) -> f64 {
    if margin > 0.0 {
        (-margin).exp().ln_1p()
    } else {
        -margin + margin.exp().ln_1p()
    }
}

fn scores(x: &[SparseVector], w: &[f64], b: f64) -> Vec<f64> {
    x.iter().map(|r| r.dot_dense(w) + b).collect()
}

/// `½‖w‖² + C Σ ln(1 + exp(−y_i (w·x_i + b)))` with labels in {0, 1}.
pub fn logistic_objective(x: &[SparseVector], y: &[u8], c: f64, w: &[f64], b: f64) -> f64 {
    let reg: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = scores(x, w, b)
        .iter()
        .zip(y)
        .map(|(s, &l)| log_loss(if l == 1 { *s } else { -s }))
        .sum();
    reg + c * loss
}

/// Gradient of [`logistic_objective`]: `(∂/∂w, ∂/∂b)`.
pub fn logistic_gradient(x: &[SparseVector], y: &[u8], c: f64, w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let mut gw = w.to_vec();
    let mut gb = 0.0;
    for (row, (s, &l)) in x.iter().zip(scores(x, w, b).iter().zip(y)) {
        let t = if l == 1 { 1.0 } else { -1.0 };
        // d/ds ln(1 + e^{-t s}) = -t σ(-t s)
        let coef = -c * t * sigmoid(-t * s);
        for (i, v) in row.iter() {
            gw[i] += coef * v;
        }
        gb += coef;
    }
    (gw, gb)
}

fn inf_norm(gw: &[f64], gb: f64) -> f64 {
    gw.iter().fold(gb.abs(), |m, v| m.max(v.abs()))
}

/// Minimize the logistic objective until `‖∇F‖∞ ≤ 1e-6` or 1000 Newton steps.
pub fn fit_logreg(x: &[SparseVector], y: &[u8], c: f64) -> Result<LinearModel> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    signed_targets(x, y)?;
    let dim = x[0].dim();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut f = logistic_objective(x, y, c, &w, b);
    for _ in 0..LOGREG_MAX_ITER {
        let (gw, gb) = logistic_gradient(x, y, c, &w, b);
        let gnorm_inf = inf_norm(&gw, gb);
        if gnorm_inf <= LOGREG_TOLERANCE {
            break;
        }
        let curvature: Vec<f64> = scores(x, &w, b)
            .iter()
            .map(|&s| {
                let p = sigmoid(s);
                c * p * (1.0 - p)
            })
            .collect();
        let (pw, pb) = newton_direction(x, &curvature, &gw, gb);
        let slope: f64 = gw.iter().zip(&pw).map(|(g, p)| g * p).sum::<f64>() + gb * pb;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let tw: Vec<f64> = w.iter().zip(&pw).map(|(a, p)| a + step * p).collect();
            let tb = b + step * pb;
            let tf = logistic_objective(x, y, c, &tw, tb);
            if tf <= f + 1e-4 * step * slope {
                w = tw;
                b = tb;
                f = tf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no representable decrease left along the Newton direction
            break;
        }
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        loss: LossKind::Logistic,
        regularization: Regularization::Inverse { c },
    })
}

/// Approximately solve `H p = −g` by conjugate gradients, where
/// `H = diag(1, …, 1, 0) + Xᵀ D X` over the bias-augmented features.
fn newton_direction(x: &[SparseVector], curvature: &[f64], gw: &[f64], gb: f64) -> (Vec<f64>, f64) {
    let hess = |vw: &[f64], vb: f64| -> (Vec<f64>, f64) {
        let mut hw = vw.to_vec();
        let mut hb = 0.0;
        for (row, &d) in x.iter().zip(curvature) {
            let t = d * (row.dot_dense(vw) + vb);
            for (i, v) in row.iter() {
                hw[i] += t * v;
            }
            hb += t;
        }
        (hw, hb)
    };
    let dot = |aw: &[f64], ab: f64, bw: &[f64], bb: f64| -> f64 {
        aw.iter().zip(bw).map(|(a, b)| a * b).sum::<f64>() + ab * bb
    };
    let mut pw = vec![0.0; gw.len()];
    let mut pb = 0.0;
    let mut rw: Vec<f64> = gw.iter().map(|g| -g).collect();
    let mut rb = -gb;
    let mut dw = rw.clone();
    let mut db = rb;
    let g_norm = dot(gw, gb, gw, gb).sqrt();
    let tol = (0.5f64).min(g_norm.sqrt()) * g_norm;
    let mut rr = dot(&rw, rb, &rw, rb);
    for _ in 0..(gw.len() + 1).min(500) {
        if rr.sqrt() <= tol {
            break;
        }
        let (hw, hb) = hess(&dw, db);
        let dhd = dot(&dw, db, &hw, hb);
        if dhd <= 0.0 {
            break;
        }
        let a = rr / dhd;
        for i in 0..pw.len() {
            pw[i] += a * dw[i];
            rw[i] -= a * hw[i];
        }
        pb += a * db;
        rb -= a * hb;
        let rr_new = dot(&rw, rb, &rw, rb);
        let beta = rr_new / rr;
        for i in 0..dw.len() {
            dw[i] = rw[i] + beta * dw[i];
        }
        db = rb + beta * db;
        rr = rr_new;
    }
    if pw.iter().all(|v| *v == 0.0) && pb == 0.0 {
        // fall back to steepest descent
        return (gw.iter().map(|g| -g).collect(), -gb);
    }
    (pw, pb)
}
