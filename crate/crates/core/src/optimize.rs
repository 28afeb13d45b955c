//! Deterministic Nelder-Mead simplex minimizer.
//!
//! Used by the likelihood fitters over unconstrained reparameterizations, so
//! no bound handling is needed here. Standard coefficients (reflect 1,
//! expand 2, contract 0.5, shrink 0.5).

/// Termination settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_iters: usize,
    /// Stop when the simplex spread of function values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex collapses below this edge length.
    pub x_tol: f64,
    /// Initial simplex step per coordinate.
    pub step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self { max_iters: 2000, f_tol: 1e-10, x_tol: 1e-10, step: 0.25 }
    }
}

/// Minimize `f` starting from `x0`. Returns (argmin, min value, iterations).
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: NmOptions) -> (Vec<f64>, f64, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iters = 0;
    while iters < opts.max_iters {
        iters += 1;
        // Order by function value; ties broken by index for determinism.
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let fordered: Vec<f64> = idx.iter().map(|&i| fvals[i]).collect();
        simplex = ordered;
        fvals = fordered;

        let spread = fvals[n] - fvals[0];
        let mut edge: f64 = 0.0;
        for v in simplex.iter().skip(1) {
            let d: f64 = v
                .iter()
                .zip(&simplex[0])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            edge = edge.max(d);
        }
        if spread.abs() < opts.f_tol && edge < opts.x_tol {
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }

        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst)
            .map(|(c, w)| c + (c - w))
            .collect();
        let f_r = f(&reflect);

        if f_r < fvals[0] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + 2.0 * (c - w))
                .collect();
            let f_e = f(&expand);
            if f_e < f_r {
                simplex[n] = expand;
                fvals[n] = f_e;
            } else {
                simplex[n] = reflect;
                fvals[n] = f_r;
            }
        } else if f_r < fvals[n - 1] {
            simplex[n] = reflect;
            fvals[n] = f_r;
        } else {
            let (base, f_base) = if f_r < fvals[n] { (reflect.clone(), f_r) } else { (worst.clone(), fvals[n]) };
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&base)
                .map(|(c, w)| c + 0.5 * (w - c))
                .collect();
            let f_c = f(&contract);
            if f_c < f_base {
                simplex[n] = contract;
                fvals[n] = f_c;
            } else {
                // Shrink toward the best vertex.
                for i in 1..=n {
                    let best = simplex[0].clone();
                    for (x, b) in simplex[i].iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    fvals[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    (simplex[best].clone(), fvals[best], iters)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 5.0;
        let (x, fx, _) = nelder_mead(f, &[0.0, 0.0], NmOptions::default());
        assert!((x[0] - 3.0).abs() < 1e-5);
        assert!((x[1] + 1.0).abs() < 1e-5);
        assert!((fx - 5.0).abs() < 1e-8);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, _, _) = nelder_mead(
            f,
            &[-1.2, 1.0],
            NmOptions { max_iters: 5000, ..Default::default() },
        );
        assert!((x[0] - 1.0).abs() < 1e-4);
        assert!((x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn deterministic_across_runs() {
        let f = |x: &[f64]| x.iter().map(|v| v.sin() + v * v * 0.1).sum::<f64>();
        let a = nelder_mead(f, &[0.3, -0.7, 1.1], NmOptions::default());
        let b = nelder_mead(f, &[0.3, -0.7, 1.1], NmOptions::default());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
