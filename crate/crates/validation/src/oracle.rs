//! Independent solvers for `min wᵀAw + cᵀw` over the capped simplex.

/// Euclidean projection onto `{Σw = 1, 0 ≤ w ≤ cap}` by bisection on the
/// shift `τ` in `wᵢ = clamp(vᵢ − τ, 0, cap)`.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let sum_at = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, cap)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - cap;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).clamp(0.0, cap)).collect()
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn objective(a: &[Vec<f64>], c: &[f64], w: &[f64]) -> f64 {
    let aw = matvec(a, w);
    w.iter().zip(&aw).map(|(x, y)| x * y).sum::<f64>() + c.iter().zip(w).map(|(x, y)| x * y).sum::<f64>()
}

/// Accelerated projected gradient for convex `A`, followed by an exact
/// solve of the KKT system on the identified free set.
pub fn projected_gradient(a: &[Vec<f64>], c: &[f64], k: usize, max_iter: usize) -> (Vec<f64>, f64) {
    let n = c.len();
    let cap = 1.0 / k as f64;
    let lip = 2.0
        * a.iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
    let step = 1.0 / lip.max(1e-12);
    let mut x = vec![1.0 / n as f64; n];
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..max_iter {
        let ay = matvec(a, &y);
        let v: Vec<f64> = (0..n).map(|i| y[i] - step * (2.0 * ay[i] + c[i])).collect();
        let xn = project_capped_simplex(&v, cap);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = xn.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        // restart momentum whenever it stops helping
        let restart = objective(a, c, &xn) > objective(a, c, &x);
        y = if restart {
            t = 1.0;
            xn.clone()
        } else {
            let beta = (t - 1.0) / tn;
            t = tn;
            xn.iter().zip(&x).map(|(p, q)| p + beta * (p - q)).collect()
        };
        x = xn;
        if moved < 1e-16 {
            break;
        }
    }
    let mut best = x.clone();
    let mut best_j = objective(a, c, &x);
    if let Some(p) = polish(a, c, &x, cap) {
        let j = objective(a, c, &p);
        if j < best_j {
            best = p;
            best_j = j;
        }
    }
    (best, best_j)
}

/// Solves `2A_FF w_F + 2A_FB w_B + c_F = λ1`, `Σw_F = 1 − Σw_B` where `B` holds
/// coordinates pinned at 0 or `cap`. Returns `None` if the system is singular
/// or the solution leaves the box.
fn polish(a: &[Vec<f64>], c: &[f64], w: &[f64], cap: f64) -> Option<Vec<f64>> {
    let tol = 1e-9 * cap;
    let free: Vec<usize> = (0..w.len()).filter(|&i| w[i] > tol && w[i] < cap - tol).collect();
    let pinned: Vec<f64> = w.iter().map(|&x| if x >= cap - tol { cap } else { 0.0 }).collect();
    let m = free.len();
    if m == 0 {
        return None;
    }
    let mut sys = vec![vec![0.0; m + 2]; m + 1];
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            sys[r][s] = 2.0 * a[i][j];
        }
        sys[r][m] = -1.0;
        let fixed: f64 = (0..w.len()).map(|j| a[i][j] * pinned[j]).sum();
        sys[r][m + 1] = -c[i] - 2.0 * fixed;
    }
    sys[m][..m].fill(1.0);
    sys[m][m + 1] = 1.0 - pinned.iter().sum::<f64>();
    let sol = gauss(sys)?;
    let mut out = pinned;
    for (r, &i) in free.iter().enumerate() {
        if sol[r] < -1e-12 || sol[r] > cap + 1e-12 {
            return None;
        }
        out[i] = sol[r].clamp(0.0, cap);
    }
    Some(out)
}

fn gauss(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = m.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                let pivot_row = m[col].clone();
                for (x, p) in m[r][col..=n].iter_mut().zip(&pivot_row[col..=n]) {
                    *x -= f * p;
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Best vertex (`k` coordinates at `1/k`) by enumerating all `C(n, k)` subsets.
pub fn best_vertex(a: &[Vec<f64>], c: &[f64], k: usize) -> (Vec<usize>, f64) {
    let n = c.len();
    let cap = 1.0 / k as f64;
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = (idx.clone(), f64::INFINITY);
    loop {
        let mut j = 0.0;
        for &p in &idx {
            j += c[p] * cap;
            for &q in &idx {
                j += a[p][q] * cap * cap;
            }
        }
        if j < best.1 {
            best = (idx.clone(), j);
        }
        // next combination in lexicographic order
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for t in i..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_in_domain() {
        let p = project_capped_simplex(&[3.0, -1.0, 0.2, 0.1], 0.5);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| (0.0..=0.5).contains(&x)));
        assert!((p[0] - 0.5).abs() < 1e-12);
        let u = project_capped_simplex(&[0.25; 4], 0.5);
        assert!(u.iter().all(|&x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn interior_optimum() {
        // ‖w‖² on the simplex: uniform
        let a = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let (w, j) = projected_gradient(&a, &[0.0; 3], 1, 1000);
        assert!((j - 1.0 / 3.0).abs() < 1e-14);
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn vertex_enumeration() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let (s, j) = best_vertex(&a, &[-2.0, 0.0], 1);
        assert_eq!(s, vec![0]);
        assert_eq!(j, -1.0);
        let (s, _) = best_vertex(&vec![vec![0.0; 4]; 4], &[0.0, -1.0, 0.0, -1.0], 2);
        assert_eq!(s, vec![1, 3]);
    }
}
