//! Exact proximal operator of the weighted 1-D total-variation penalty
//! `Σ_k r_k |z_{k+1} - z_k|`, computed with the taut-string construction.
//!
//! With cumulative sums `S_k = x_0 + ... + x_{k-1}`, the solution is the
//! discrete derivative of the shortest path `F` from `(0, 0)` to `(d, S_d)`
//! staying inside the tube `|F_k - S_k| <= r_{k-1}` at the interior knots.
//! The path is built one straight segment at a time: from the current anchor
//! we track the feasible slope window; when it closes, the segment ends at the
//! knot that last tightened the violated side and a new segment starts there.

/// `argmin_z ½‖x - z‖² + Σ_k radius[k] |z_{k+1} - z_k|`.
///
/// `radius` has length `x.len() - 1` and must be nonnegative.
pub fn tv_prox(x: &[f64], radius: &[f64]) -> Vec<f64> {
    let d = x.len();
    if d <= 1 || radius.iter().all(|r| *r == 0.0) {
        return x.to_vec();
    }
    assert_eq!(radius.len(), d - 1, "one radius per consecutive pair");

    let mut cum = Vec::with_capacity(d + 1);
    cum.push(0.0);
    for v in x {
        cum.push(cum.last().unwrap() + v);
    }
    let bounds = |k: usize| -> (f64, f64) {
        if k == d {
            (cum[d], cum[d])
        } else {
            (cum[k] - radius[k - 1], cum[k] + radius[k - 1])
        }
    };

    let mut z = vec![0.0; d];
    let mut anchor = 0usize;
    let mut anchor_val = 0.0;
    while anchor < d {
        let mut max_lo = f64::NEG_INFINITY;
        let mut arg_lo = anchor;
        let mut min_up = f64::INFINITY;
        let mut arg_up = anchor;
        let mut j = anchor + 1;
        loop {
            let (lo_b, up_b) = bounds(j);
            let len = (j - anchor) as f64;
            let lo_s = (lo_b - anchor_val) / len;
            let up_s = (up_b - anchor_val) / len;
            if up_s < max_lo {
                // the path bends down at the last binding lower knot
                z[anchor..arg_lo].fill(max_lo);
                anchor_val = bounds(arg_lo).0;
                anchor = arg_lo;
                break;
            }
            if lo_s > min_up {
                z[anchor..arg_up].fill(min_up);
                anchor_val = bounds(arg_up).1;
                anchor = arg_up;
                break;
            }
            if j == d {
                z[anchor..d].fill((cum[d] - anchor_val) / len);
                anchor = d;
                break;
            }
            if lo_s >= max_lo {
                max_lo = lo_s;
                arg_lo = j;
            }
            if up_s <= min_up {
                min_up = up_s;
                arg_up = j;
            }
            j += 1;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(x: &[f64], r: &[f64], z: &[f64]) -> f64 {
        let fit: f64 = x.iter().zip(z).map(|(a, b)| 0.5 * (a - b).powi(2)).sum();
        let tv: f64 = z.windows(2).zip(r).map(|(w, r)| r * (w[1] - w[0]).abs()).sum();
        fit + tv
    }

    #[test]
    fn two_points_meet_in_the_middle() {
        let z = tv_prox(&[1.0, 0.0], &[0.5]);
        assert!((z[0] - 0.5).abs() < 1e-15 && (z[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_points_partially_shrink() {
        let z = tv_prox(&[1.0, 0.0], &[0.2]);
        assert!((z[0] - 0.8).abs() < 1e-15 && (z[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn large_radius_gives_the_mean() {
        let x = [3.0, -1.0, 4.0, 1.0, 5.0];
        let z = tv_prox(&x, &[100.0; 4]);
        for v in z {
            assert!((v - 2.4).abs() < 1e-12);
        }
    }

    #[test]
    fn beats_coordinate_perturbations() {
        let x = [0.3, 2.0, -1.0, 1.5, 1.4, -0.2, 0.7];
        let r = [0.3, 0.1, 0.5, 0.2, 0.05, 0.4];
        let z = tv_prox(&x, &r);
        let base = objective(&x, &r, &z);
        for i in 0..x.len() {
            for h in [1e-4, -1e-4, 1e-2, -1e-2] {
                let mut p = z.clone();
                p[i] += h;
                assert!(objective(&x, &r, &p) >= base - 1e-12);
            }
        }
        // moving a whole fused run must not help either
        for i in 0..x.len() {
            for j in i + 1..=x.len() {
                for h in [1e-3, -1e-3] {
                    let mut p = z.clone();
                    for v in &mut p[i..j] {
                        *v += h;
                    }
                    assert!(objective(&x, &r, &p) >= base - 1e-12);
                }
            }
        }
    }
}
