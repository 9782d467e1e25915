use super::{bottom_state, lower_certificate, upper_certificate, SaddleOptions, Tracker};
use crate::error::Result;
use crate::qfi::KrausProducts;
use crate::state::DensityMatrix;

const GOLDEN_EVALS: usize = 30;
/// Stop when the best gap has not moved for this many iterations.
const STALL_WINDOW: usize = 200;

fn golden_section<F: FnMut(f64) -> Result<f64>>(mut f: F) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 2..GOLDEN_EVALS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

pub(super) fn solve(table: &KrausProducts, opts: &SaddleOptions) -> Result<Tracker> {
    let mut tracker = Tracker::new();
    let mut rho = DensityMatrix::maximally_mixed(table.dim());
    let mut last_gap = f64::INFINITY;
    let mut stalled = 0usize;
    for k in 0..opts.max_iter {
        let (upper, w) = upper_certificate(table, &rho)?;
        let (lower, w) = lower_certificate(table, &w)?;
        tracker.record(&rho, upper, &w, lower);
        let gap = tracker.gap();
        if gap <= opts.tol {
            break;
        }
        if gap < last_gap {
            last_gap = gap;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= STALL_WINDOW {
                break;
            }
        }

        let k_w = table.k_w(&w)?;
        let vertex = bottom_state(&(&k_w + k_w.adjoint()))?;
        let objective = |gamma: f64| table.fidelity(rho.mix(&vertex, gamma).matrix());
        let default_step = 2.0 / (k as f64 + 2.0);
        let f_default = objective(default_step)?;
        let (searched, f_searched) = golden_section(objective)?;
        let gamma = if f_searched < f_default { searched } else { default_step };
        rho = rho.mix(&vertex, gamma);
    }
    Ok(tracker)
}
