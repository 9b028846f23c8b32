use rand::seq::index;

use super::network::{Network, NetworkInput};
use crate::rng::{self, purpose};
use crate::Result;

/// Denominator floor of the relative error, so that coordinates whose true
/// derivative is ~0 are judged by absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Largest relative error between the analytic gradient and a central
/// difference with step `h`, over at least `min_coords` coordinates drawn from
/// every parameter block. Dropout is not applied.
pub fn gradient_check(
    net: &Network,
    input: &NetworkInput,
    label: u8,
    h: f64,
    min_coords: usize,
    seed: u64,
) -> Result<f64> {
    let mut grads = net.zeros_like();
    net.run(input, Some(label), super::Mode::Eval, None, Some(&mut grads))?;
    let analytic = grads.flat_parameters();
    let coords = pick_coordinates(net, min_coords, seed);

    let mut probe = net.clone();
    let base = net.flat_parameters();
    let mut params = base.clone();
    let mut worst: f64 = 0.0;
    for i in coords {
        params[i] = base[i] + h;
        probe.set_flat_parameters(&params)?;
        let up = probe.loss(input, label)?;
        params[i] = base[i] - h;
        probe.set_flat_parameters(&params)?;
        let down = probe.loss(input, label)?;
        params[i] = base[i];
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

fn pick_coordinates(net: &Network, min_coords: usize, seed: u64) -> Vec<usize> {
    let mut blocks = Vec::new();
    let mut offset = 0;
    net.visit(&mut |_, data| {
        blocks.push((offset, data.len()));
        offset += data.len();
    });
    let total = offset;
    let mut rng = rng::stream(seed, purpose::VALIDATION);
    let per_block = min_coords.div_ceil(blocks.len().max(1));
    let mut chosen = vec![false; total];
    for &(start, len) in &blocks {
        for j in index::sample(&mut rng, len, per_block.min(len)) {
            chosen[start + j] = true;
        }
    }
    let mut count = chosen.iter().filter(|&&c| c).count();
    let want = min_coords.min(total);
    if count < want {
        for j in index::sample(&mut rng, total, total) {
            if count >= want {
                break;
            }
            if !chosen[j] {
                chosen[j] = true;
                count += 1;
            }
        }
    }
    (0..total).filter(|&i| chosen[i]).collect()
}
