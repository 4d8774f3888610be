//! Composite Gauss–Legendre quadrature and panelwise polynomial tables.

/// n-point Gauss–Legendre rule on [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Barycentric interpolation weights for the nodes.
    bary: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Chebyshev-type initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        let bary = (0..n)
            .map(|j| {
                let prod: f64 = (0..n).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product();
                1.0 / prod
            })
            .collect::<Vec<_>>();
        // Rescale to avoid overflow for large n; barycentric formula is invariant.
        let m = bary.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let bary = bary.into_iter().map(|b| b / m).collect();
        Self { nodes, weights, bary }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// ∫ₐᵇ f.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(m + h * x);
        }
        s * h
    }

    /// Nodes mapped to [a, b] with their weights.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (m + h * x, h * w))
    }

    /// Interpolates values given at the nodes of [a, b] at the point x.
    pub fn interpolate(&self, a: f64, b: f64, values: &[f64], x: f64) -> f64 {
        let u = (2.0 * x - a - b) / (b - a);
        let (mut num, mut den) = (0.0, 0.0);
        for ((&xj, &wj), &fj) in self.nodes.iter().zip(&self.bary).zip(values) {
            let d = u - xj;
            if d == 0.0 {
                return fj;
            }
            let c = wj / d;
            num += c * fj;
            den += c;
        }
        num / den
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Splits [a, b] at the given interior cut points (sorted, deduplicated, clipped).
pub fn split(a: f64, b: f64, cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
    let mut out = Vec::with_capacity(pts.len() + 1);
    let mut lo = a;
    for p in pts {
        out.push((lo, p));
        lo = p;
    }
    if b > lo {
        out.push((lo, b));
    }
    out
}

/// Panels on [a, b] that start at width h0 next to `a` (or `b` when `toward_right`) and double
/// until they reach `max_width`, which caps them from then on.
pub fn graded(a: f64, b: f64, h0: f64, max_width: f64, toward_right: bool) -> Vec<(f64, f64)> {
    let len = b - a;
    if len <= 0.0 {
        return Vec::new();
    }
    let mut widths = Vec::new();
    let mut covered = 0.0;
    let mut h = h0.min(max_width).max(len * 1e-14);
    while covered < len {
        let w = h.min(len - covered);
        widths.push(w);
        covered += w;
        h = (2.0 * h).min(max_width);
        if len - covered < 1e-3 * w {
            if let Some(last) = widths.last_mut() {
                *last += len - covered;
            }
            break;
        }
    }
    let mut out = Vec::with_capacity(widths.len());
    if toward_right {
        let mut hi = b;
        for w in widths {
            out.push((hi - w, hi));
            hi -= w;
        }
        out.reverse();
        if let Some(first) = out.first_mut() {
            first.0 = a;
        }
    } else {
        let mut lo = a;
        for w in widths {
            out.push((lo, lo + w));
            lo += w;
        }
        if let Some(last) = out.last_mut() {
            last.1 = b;
        }
    }
    out
}

/// Values of a function at the Gauss nodes of consecutive panels, with panelwise
/// barycentric interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTable {
    pub panels: Vec<(f64, f64)>,
    pub values: Vec<Vec<f64>>,
}

impl PanelTable {
    pub fn build<F: FnMut(f64) -> f64>(rule: &GaussLegendre, panels: Vec<(f64, f64)>, mut f: F) -> Self {
        let values = panels
            .iter()
            .map(|&(a, b)| rule.mapped(a, b).map(|(x, _)| f(x)).collect())
            .collect();
        Self { panels, values }
    }

    pub fn start(&self) -> f64 {
        self.panels.first().map_or(0.0, |p| p.0)
    }

    pub fn end(&self) -> f64 {
        self.panels.last().map_or(0.0, |p| p.1)
    }

    /// Interpolated value; None outside the covered range.
    pub fn eval(&self, rule: &GaussLegendre, x: f64) -> Option<f64> {
        if self.panels.is_empty() || x < self.start() || x > self.end() {
            return None;
        }
        let i = self.panels.partition_point(|p| p.1 < x).min(self.panels.len() - 1);
        let (a, b) = self.panels[i];
        Some(rule.interpolate(a, b, &self.values[i], x))
    }

    /// Panel edges, including both ends.
    pub fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.panels.iter().map(|p| p.0).collect();
        e.push(self.end());
        e
    }
}
