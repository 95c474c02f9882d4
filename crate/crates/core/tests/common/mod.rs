//! Independent reference solutions shared by the integration tests. None of
//! these call into the library.

#![allow(dead_code)]

/// Root of `f` on `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "root not bracketed on [{lo}, {hi}]");
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bound-state energies (ascending) of `-c ψ'' + V ψ = E ψ` for a well of
/// depth `v0` and half-width `a` in free space.
///
/// With `z = k a`, `z0 = a sqrt(v0 / c)`: even states solve
/// `z tan z = sqrt(z0² - z²)`, odd states `-z cot z = sqrt(z0² - z²)`.
pub fn square_well_levels(c: f64, v0: f64, a: f64, count: usize) -> Vec<f64> {
    use std::f64::consts::FRAC_PI_2;
    let z0 = a * (v0 / c).sqrt();
    let mut zs = Vec::new();
    let mut n = 0usize;
    while zs.len() < count {
        let lo = n as f64 * FRAC_PI_2;
        if lo >= z0 {
            break;
        }
        let hi = ((n + 1) as f64 * FRAC_PI_2).min(z0);
        let eps = 1e-15 * hi.max(1.0);
        let f = |z: f64| {
            let rhs = (z0 * z0 - z * z).max(0.0).sqrt();
            if n % 2 == 0 {
                z * z.sin() - rhs * z.cos()
            } else {
                -z * z.cos() - rhs * z.sin()
            }
        };
        let (l, h) = (lo + eps, hi - eps);
        if f(l) * f(h) <= 0.0 {
            zs.push(bisect(f, l, h));
        }
        n += 1;
    }
    zs.iter().map(|z| c * (z / a).powi(2) - v0).collect()
}

/// Single-mode, single-bin fixed point `(n, m)` with unit overlap.
pub struct SingleMode {
    pub kappa: f64,
    pub emission: f64,
    pub absorption: f64,
    pub molecules: f64,
    pub gamma_down: f64,
    pub pump: f64,
}

impl SingleMode {
    /// `m` with `dm/dt = 0` at photon number `n`.
    pub fn m_of_n(&self, n: f64) -> f64 {
        let up = self.pump + self.absorption * n;
        up * self.molecules / (self.gamma_down + self.emission * (n + 1.0) + up)
    }

    /// `dn/dt` along the `dm/dt = 0` curve.
    pub fn photon_rate(&self, n: f64) -> f64 {
        let m = self.m_of_n(n);
        -self.kappa * n + self.emission * m * (n + 1.0) - self.absorption * (self.molecules - m) * n
    }

    /// Steady photon number by bisection. `κ n ≤ p M` bounds the bracket.
    pub fn steady_n_bisect(&self) -> f64 {
        let hi = self.pump * self.molecules / self.kappa + 1.0;
        bisect(|n| self.photon_rate(n), 0.0, hi)
    }

    /// Positive root of `κ(E + A) n² + [κ(Γ↓ + E + p) + A M Γ↓ - E M p] n - E M p = 0`.
    pub fn steady_n_quadratic(&self) -> f64 {
        let (k, e, a, m, gd, p) = (self.kappa, self.emission, self.absorption, self.molecules, self.gamma_down, self.pump);
        let qa = k * (e + a);
        let qb = k * (gd + e + p) + a * m * gd - e * m * p;
        let qc = -e * m * p;
        let disc = (qb * qb - 4.0 * qa * qc).sqrt();
        // cancellation-free form of the positive root
        if qb >= 0.0 {
            2.0 * (-qc) / (qb + disc)
        } else {
            (-qb + disc) / (2.0 * qa)
        }
    }
}

/// Classic fixed-step RK4 for the scalar ODE `y' = f(y)` from `y0`, returning
/// the time at which `y` first reaches `target` (approached from below).
/// The crossing step is refined by bisection on a partial RK4 step.
pub fn rk4_first_passage<F: Fn(f64) -> f64>(f: F, y0: f64, target: f64, h: f64, max_steps: usize) -> Option<f64> {
    let step = |y: f64, h: f64| {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut t = 0.0;
    let mut y = y0;
    for _ in 0..max_steps {
        let next = step(y, h);
        if next >= target {
            let tau = bisect(|s| step(y, s) - target, 0.0, h);
            return Some(t + tau);
        }
        y = next;
        t += h;
    }
    None
}
