//! Derivative-free Nelder-Mead maximizer with a hard objective-evaluation budget.

pub struct Outcome {
    pub best: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximizes `f` starting from `x0`. The starting point is always evaluated
/// first, so the returned value is never below `f(x0)`. Non-finite objective
/// values are treated as `-inf`.
pub fn nelder_mead_max<F>(mut f: F, x0: &[f64], step: f64, max_evals: usize) -> Outcome
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };

    let v0 = eval(x0, &mut evals);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), v0)];
    for i in 0..dim {
        if evals >= max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let best_of = |s: &[(Vec<f64>, f64)]| {
        s.iter().fold((s[0].0.clone(), s[0].1), |acc, (x, v)| if *v > acc.1 { (x.clone(), *v) } else { acc })
    };
    if simplex.len() < dim + 1 || dim == 0 {
        let (best, value) = best_of(&simplex);
        return Outcome { best, value, evaluations: evals };
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < max_evals {
        // Descending order: best first.
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let worst = simplex[dim].clone();
        let centroid: Vec<f64> =
            (0..dim).map(|k| simplex[..dim].iter().map(|(x, _)| x[k]).sum::<f64>() / dim as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..dim).map(|k| centroid[k] + t * (worst.0[k] - centroid[k])).collect() };

        let xr = along(-alpha);
        let vr = eval(&xr, &mut evals);
        if vr > simplex[0].1 {
            if evals >= max_evals {
                simplex[dim] = (xr, vr);
                break;
            }
            let xe = along(-gamma);
            let ve = eval(&xe, &mut evals);
            simplex[dim] = if ve > vr { (xe, ve) } else { (xr, vr) };
            continue;
        }
        if vr > simplex[dim - 1].1 {
            simplex[dim] = (xr, vr);
            continue;
        }
        if evals >= max_evals {
            break;
        }
        let (xc, vc) = if vr > worst.1 {
            let xc = along(-rho);
            let vc = eval(&xc, &mut evals);
            (xc, vc)
        } else {
            let xc = along(rho);
            let vc = eval(&xc, &mut evals);
            (xc, vc)
        };
        if vc > worst.1.max(vr) {
            simplex[dim] = (xc, vc);
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].0.clone();
        for item in simplex.iter_mut().skip(1) {
            if evals >= max_evals {
                break;
            }
            let x: Vec<f64> = (0..dim).map(|k| best[k] + sigma * (item.0[k] - best[k])).collect();
            let v = eval(&x, &mut evals);
            *item = (x, v);
        }
    }
    let (best, value) = best_of(&simplex);
    Outcome { best, value, evaluations: evals }
}
