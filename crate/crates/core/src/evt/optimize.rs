//! Derivative-free Nelder–Mead simplex minimization.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Stop once every vertex lies within this distance (max-norm) of the best.
    pub tolerance: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iter: 2000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0` with initial edge lengths `steps`.
///
/// `f` may return `+inf` for infeasible points. The start point is a vertex
/// of the initial simplex and the best vertex is never discarded, so the
/// returned value never exceeds `f(x0)`.
pub fn nelder_mead<F>(f: F, x0: &[f64], steps: &[f64], opts: SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let d = x0.len();
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    verts.push(x0.to_vec());
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        verts.push(v);
    }
    let mut vals: Vec<f64> = verts.iter().map(|v| eval(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    let mut order: Vec<usize> = (0..=d).collect();

    while iterations < opts.max_iter {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let best = order[0];
        let worst = order[d];
        let second = order[d - 1];

        let diameter = verts
            .iter()
            .flat_map(|v| v.iter().zip(&verts[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for &i in &order[..d] {
            for (c, x) in centroid.iter_mut().zip(&verts[i]) {
                *c += x / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&verts[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < vals[best] {
            let xe = along(gamma);
            let fe = eval(&xe);
            if fe < fr {
                verts[worst] = xe;
                vals[worst] = fe;
            } else {
                verts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            verts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[worst] {
            let xc = along(rho);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < vals[worst].min(fr) {
            verts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        // shrink towards the best vertex
        let b = verts[best].clone();
        for &i in &order[1..] {
            for (x, bx) in verts[i].iter_mut().zip(&b) {
                *x = bx + sigma * (*x - bx);
            }
            vals[i] = eval(&verts[i]);
        }
    }

    let best = (0..=d)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .expect("non-empty simplex");
    SimplexResult {
        x: verts[best].clone(),
        value: vals[best],
        iterations,
        converged,
    }
}

/// Runs [`nelder_mead`] and then restarts once from the optimum with fresh
/// steps, which guards against a prematurely collapsed simplex.
pub fn minimize<F>(f: F, x0: &[f64], steps: &[f64], opts: SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let first = nelder_mead(&f, x0, steps, opts);
    if !first.value.is_finite() {
        return first;
    }
    let restart_steps: Vec<f64> = steps.iter().map(|s| s * 0.1).collect();
    let second = nelder_mead(&f, &first.x, &restart_steps, opts);
    if second.value <= first.value {
        SimplexResult {
            iterations: first.iterations + second.iterations,
            ..second
        }
    } else {
        first
    }
}
