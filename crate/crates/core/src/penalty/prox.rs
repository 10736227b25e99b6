use nalgebra::DVector;

/// Proximal operator of `eta · ‖x‖₁²`:
/// `argmin_x ½‖x − v‖₂² + eta ‖x‖₁²`.
///
/// The minimiser is a soft threshold of `v` at `θ = 2·eta·‖x‖₁`. Sorting
/// `|v|` in decreasing order, a support of size `k` forces
/// `‖x‖₁ = S_k / (1 + 2·eta·k)` with `S_k` the sum of the `k` largest
/// magnitudes; the support is the largest `k` whose threshold still lies
/// below the `k`-th magnitude.
pub fn prox_sq_l1(v: &DVector<f64>, eta: f64) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    prox_sq_l1_into(v.as_slice(), eta, out.as_mut_slice(), &mut Vec::new());
    out
}

/// Allocation-free variant; `order` is scratch space.
pub(crate) fn prox_sq_l1_into(v: &[f64], eta: f64, out: &mut [f64], order: &mut Vec<usize>) {
    debug_assert_eq!(v.len(), out.len());
    if eta <= 0.0 {
        out.copy_from_slice(v);
        return;
    }
    order.clear();
    order.extend((0..v.len()).filter(|&i| v[i] != 0.0));
    if order.is_empty() {
        out.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    // Stable: equal magnitudes keep index order.
    order.sort_by(|&a, &b| {
        v[b].abs()
            .partial_cmp(&v[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let two_eta = 2.0 * eta;
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        let mag = v[idx].abs();
        cumulative += mag;
        let k = (rank + 1) as f64;
        let candidate = two_eta * cumulative / (1.0 + two_eta * k);
        if mag > candidate {
            threshold = candidate;
        } else {
            break;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        let mag = x.abs() - threshold;
        *o = if mag > 0.0 { mag.copysign(x) } else { 0.0 };
    }
}
