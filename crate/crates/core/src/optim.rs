//! Derivative-free smooth minimization: BFGS on central finite differences
//! with an Armijo backtracking line search. Non-finite objective values are
//! treated as "reject this point".

pub(crate) struct BfgsOptions {
    pub max_evals: usize,
    pub fd_step: f64,
    /// Upper bound on the infinity norm of a single step.
    pub max_step: f64,
}

pub(crate) struct BfgsResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Central-difference gradient. Falls back to a one-sided difference when
/// one neighbour is rejected, and to zero when both are.
fn gradient<F: FnMut(&[f64]) -> f64>(f: &mut Counted<F>, x: &[f64], fx: f64, h0: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = h0 * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let fp = f.call(&probe);
        probe[j] = x[j] - h;
        let fm = f.call(&probe);
        probe[j] = x[j];
        g[j] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn bfgs<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut f = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    let mut fx = f.call(&x);
    if !fx.is_finite() || n == 0 {
        return BfgsResult {
            x,
            fx,
            evals: f.evals,
        };
    }
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut g = gradient(&mut f, &x, fx, opts.fd_step);

    while f.evals + 2 * n + 2 <= opts.max_evals {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm == 0.0 || !gnorm.is_finite() {
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&g, &p);
        if slope >= 0.0 {
            // lost positive definiteness: restart on steepest descent
            h = identity(n);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pmax > opts.max_step {
            let s = opts.max_step / pmax;
            p.iter_mut().for_each(|v| *v *= s);
            slope *= s;
        }

        let mut t = 1.0;
        let mut accepted = None;
        while f.evals < opts.max_evals {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
            let ft = f.call(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                break;
            }
        }
        let Some((xn, fxn)) = accepted else { break };
        if f.evals + 2 * n > opts.max_evals {
            x = xn;
            fx = fxn;
            break;
        }
        let gn = gradient(&mut f, &xn, fxn, opts.fd_step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let progress = fx - fxn;
        x = xn;
        fx = fxn;
        g = gn;
        if progress <= 1e-14 * fx.abs().max(1e-300) {
            break;
        }
    }
    BfgsResult {
        x,
        fx,
        evals: f.evals,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] +=
                -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
