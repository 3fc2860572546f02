//! Small dense unconstrained minimisers.
//!
//! Both routines work on `Vec<f64>` parameter vectors and an objective
//! closure. The problems in this crate have at most 17 parameters, so no
//! attempt is made at sparse or matrix-free linear algebra.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative objective change fell below tolerance.
    ObjectiveTolerance,
    /// Gradient (or simplex spread) fell below tolerance.
    GradientTolerance,
    /// No further decrease could be found along the search direction.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop when the spread of objective values across the simplex is below
    /// `ftol * (|f_best| + ftol)`.
    pub ftol: f64,
    /// Stop when every vertex is within `xtol` of the best one.
    pub xtol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            ftol: 1e-12,
            xtol: 1e-10,
            initial_step: 0.1,
        }
    }
}

/// Downhill simplex with the standard coefficients (1, 2, ½, ½).
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if v[i] == 0.0 {
            opts.initial_step
        } else {
            opts.initial_step * v[i].abs().max(1.0)
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let termination = loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        if (worst - best).abs() <= opts.ftol * (best.abs() + opts.ftol) {
            break Termination::ObjectiveTolerance;
        }
        let spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.xtol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(1.0);
        let fr = eval(&reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = eval(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let p = along(0.5);
            let v = eval(&p);
            (p, v)
        } else {
            let p = along(-0.5);
            let v = eval(&p);
            (p, v)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(x, b)| b + 0.5 * (x - b))
                .collect();
            values[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    };

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        evaluations,
        termination,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Relative objective change below which the run is considered converged.
    pub ftol: f64,
    /// Absolute floor added to `|f|` in the relative-change test.
    pub fscale: f64,
    pub gtol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            ftol: 1e-10,
            fscale: 1e-300,
            gtol: 1e-12,
            fd_step: 1e-6,
        }
    }
}

/// Central-difference gradient with step `h·max(|x_i|, 1)`.
pub fn fd_gradient<F>(f: &F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton minimisation (BFGS inverse-Hessian update) with
/// finite-difference gradients and a backtracking Armijo line search.
pub fn bfgs<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let counted = |x: &[f64]| f(x);

    let mut x = x0.to_vec();
    let mut fx = counted(&x);
    evaluations += 1;
    let mut g = fd_gradient(&counted, &x, opts.fd_step);
    evaluations += 2 * n;

    // inverse Hessian approximation, row-major
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut scaled = false;
    let mut quiet_steps = 0;

    let mut iterations = 0;
    let termination = loop {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= opts.gtol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let mut dir: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // lost descent: restart from steepest descent
            h.iter_mut()
                .enumerate()
                .for_each(|(k, v)| *v = if k % (n + 1) == 0 { 1.0 } else { 0.0 });
            scaled = false;
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        if !scaled {
            // keep the first trial step modest
            let dn = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dn > 1.0 {
                dir.iter_mut().for_each(|v| *v /= dn);
                slope /= dn;
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ft = counted(&trial);
            evaluations += 1;
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break Termination::Stalled;
        };

        let g_new = fd_gradient(&counted, &x_new, opts.fd_step);
        evaluations += 2 * n;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                h.iter_mut()
                    .enumerate()
                    .for_each(|(k, v)| *v = if k % (n + 1) == 0 { gamma } else { 0.0 });
                scaled = true;
            }
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            let coef = (1.0 + yhy * rho) * rho;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }

        let change = (fx - f_new).abs();
        x = x_new;
        g = g_new;
        let previous = fx;
        fx = f_new;
        if change <= opts.ftol * (previous.abs() + opts.fscale) {
            quiet_steps += 1;
            if quiet_steps >= 3 {
                break Termination::ObjectiveTolerance;
            }
        } else {
            quiet_steps = 0;
        }
    };

    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
        termination,
    }
}
