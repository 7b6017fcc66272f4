//! Scalar search and interpolation kernels shared by the solver modules.

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Maximize `f` on `[lo, hi]` by a coarse grid scan followed by golden-section
/// refinement of the bracketing interval. Returns `(argmax, max)`.
///
/// The grid-first pass guards against non-concave objectives; golden section
/// then shrinks the winning bracket to `tol` width.
pub fn grid_golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, grid: usize, tol: f64) -> (f64, f64) {
    assert!(hi >= lo, "empty search interval");
    assert!(grid >= 2);
    if hi == lo {
        return (lo, f(lo));
    }
    let step = (hi - lo) / grid as f64;
    let mut best_i = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..=grid {
        let x = if i == grid { hi } else { lo + i as f64 * step };
        let v = f(x);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a = if best_i == 0 { lo } else { lo + (best_i - 1) as f64 * step };
    let b = if best_i >= grid { hi } else { lo + (best_i + 1) as f64 * step };
    let (mut x, mut v) = golden_max(&f, a, b, tol);
    if v < best_v {
        x = lo + best_i as f64 * step;
        v = best_v;
    }
    // Near a flat interior maximum, golden comparisons drown in rounding noise
    // at |x - x*| ~ sqrt(eps); one parabolic fit through well-separated points
    // recovers the vertex to ~1e-11.
    let h = 1e-6 * (hi - lo);
    if x - h > lo && x + h < hi {
        let (fm, fp) = (f(x - h), f(x + h));
        let xp = parabola_peak(x - h, x, x + h, fm, v, fp);
        let vp = f(xp);
        if vp >= v || (v - vp) < 1e-12 * v.abs().max(1.0) {
            return (xp, vp.max(v));
        }
    }
    (x, v)
}

/// Golden-section maximization of `f` on `[a, b]` down to interval width `tol`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - INV_GOLDEN * (b - a);
    let mut x2 = a + INV_GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_GOLDEN * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_GOLDEN * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Root of `f(x) = target` for a weakly decreasing `f` on `[lo, hi]`.
///
/// Requires `f(lo) >= target >= f(hi)` up to `value_slack`; the bracket is
/// halved until its width falls below `xtol`. Plateaus are fine: the search
/// settles on a point of the level set.
pub fn bisect_decreasing(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    xtol: f64,
    value_slack: f64,
) -> Option<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if target > flo + value_slack || target < fhi - value_slack {
        return None;
    }
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Vertex of the parabola through three points; falls back to `x1` when the
/// points are not strictly concave. Used to refine grid argmaxima.
pub fn parabola_peak(x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let d1 = (f1 - f0) / (x1 - x0);
    let d2 = (f2 - f1) / (x2 - x1);
    let curv = (d2 - d1) / (x2 - x0);
    if curv >= 0.0 || !curv.is_finite() {
        return x1;
    }
    let peak = 0.5 * (x0 + x1) - d1 / (2.0 * curv);
    peak.clamp(x0.min(x2), x0.max(x2))
}

/// Monotone piecewise-cubic interpolant (Fritsch-Carlson derivative limiting).
///
/// Preserves monotonicity of the data, which the projection tables rely on.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// Build from strictly increasing `x` and matching `y` values.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(x.len() >= 2, "need at least two points");
        debug_assert!(x.windows(2).all(|w| w[1] > w[0]), "x must be strictly increasing");
        let n = x.len();
        let h: Vec<f64> = (0..n - 1).map(|k| x[k + 1] - x[k]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] <= 0.0 {
                d[k] = 0.0;
            } else {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        d[0] = Self::edge_derivative(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        let m = n - 1;
        d[m] = Self::edge_derivative(
            h[m - 1],
            if m >= 2 { h[m - 2] } else { h[m - 1] },
            delta[m - 1],
            if m >= 2 { delta[m - 2] } else { delta[m - 1] },
        );
        Pchip { x, y, d }
    }

    fn edge_derivative(h0: f64, h1: f64, delta0: f64, delta1: f64) -> f64 {
        let mut d = ((2.0 * h0 + h1) * delta0 - h0 * delta1) / (h0 + h1);
        if d * delta0 <= 0.0 {
            d = 0.0;
        } else if delta0 * delta1 <= 0.0 && d.abs() > 3.0 * delta0.abs() {
            d = 3.0 * delta0;
        }
        d
    }

    fn segment(&self, x: f64) -> usize {
        match self.x.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.x.len() - 2),
        }
    }

    /// Interpolated value; linear extrapolation outside the data range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x < self.x[0] {
            return self.y[0] + self.d[0] * (x - self.x[0]);
        }
        if x > self.x[n - 1] {
            return self.y[n - 1] + self.d[n - 1] * (x - self.x[n - 1]);
        }
        let k = self.segment(x);
        let h = self.x[k + 1] - self.x[k];
        let t = (x - self.x[k]) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    /// Derivative of the interpolant.
    pub fn deriv(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x < self.x[0] {
            return self.d[0];
        }
        if x > self.x[n - 1] {
            return self.d[n - 1];
        }
        let k = self.segment(x);
        let h = self.x[k + 1] - self.x[k];
        let t = (x - self.x[k]) / h;
        let dh00 = 6.0 * t * t - 6.0 * t;
        let dh10 = 3.0 * t * t - 4.0 * t + 1.0;
        let dh01 = -6.0 * t * t + 6.0 * t;
        let dh11 = 3.0 * t * t - 2.0 * t;
        (dh00 * self.y[k] + dh01 * self.y[k + 1]) / h + dh10 * self.d[k] + dh11 * self.d[k + 1]
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }
}
