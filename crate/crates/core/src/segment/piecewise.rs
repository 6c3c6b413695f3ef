//! Continuous piecewise-linear least squares and breakpoint search.
//!
//! The model is `y = a + b·x + Σ_j c_j·(x − t_j)₊` for breakpoints `t_j`.
//! Candidate breakpoints are seeded at isolated peaks of |σ''|, then refined
//! by coordinate descent over the profile grid (each coordinate is scanned
//! exhaustively with the others held fixed) and polished by golden-section
//! search between neighbouring grid nodes.

use nalgebra::{DMatrix, DVector};

use super::smooth::DerivativeProfile;
use super::SegmentError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakpointConfig {
    /// Minimum samples on each side of every breakpoint.
    pub min_region_points: usize,
    /// Minimum distance between accepted curvature peaks, as a fraction of the grid.
    pub peak_separation_frac: f64,
    /// Peaks must exceed this multiple of `max|σ'| / span` to count.
    pub peak_floor_rel: f64,
    /// Grid nodes ignored at either end when looking for peaks, as a fraction of the grid.
    pub edge_trim_frac: f64,
    /// Minimum F statistic of the piecewise model against a single line.
    pub min_f_stat: f64,
    pub max_sweeps: usize,
    pub golden_iterations: usize,
}

impl Default for BreakpointConfig {
    fn default() -> Self {
        Self {
            min_region_points: 4,
            peak_separation_frac: 0.05,
            peak_floor_rel: 1e-6,
            edge_trim_frac: 0.025,
            min_f_stat: 10.0,
            max_sweeps: 20,
            golden_iterations: 60,
        }
    }
}

/// Strain-sorted samples, centered, with prefix sums for O(1) normal equations.
pub(crate) struct Moments {
    xs: Vec<f64>,
    ys: Vec<f64>,
    x_shift: f64,
    s1: Vec<f64>,
    sx: Vec<f64>,
    sxx: Vec<f64>,
    sy: Vec<f64>,
    sxy: Vec<f64>,
    syy: f64,
}

impl Moments {
    pub(crate) fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let x_shift = xs.iter().sum::<f64>() / n as f64;
        let y_shift = ys.iter().sum::<f64>() / n as f64;
        let cx: Vec<f64> = xs.iter().map(|x| x - x_shift).collect();
        let cy: Vec<f64> = ys.iter().map(|y| y - y_shift).collect();
        let mut s1 = vec![0.0; n + 1];
        let mut sx = vec![0.0; n + 1];
        let mut sxx = vec![0.0; n + 1];
        let mut sy = vec![0.0; n + 1];
        let mut sxy = vec![0.0; n + 1];
        let mut syy = 0.0;
        for i in 0..n {
            let (x, y) = (cx[i], cy[i]);
            s1[i + 1] = s1[i] + 1.0;
            sx[i + 1] = sx[i] + x;
            sxx[i + 1] = sxx[i] + x * x;
            sy[i + 1] = sy[i] + y;
            sxy[i + 1] = sxy[i] + x * y;
            syy += y * y;
        }
        Self {
            xs: cx,
            ys: cy,
            x_shift,
            s1,
            sx,
            sxx,
            sy,
            sxy,
            syy,
        }
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    /// Index of the first sample strictly right of `t` (centered coordinates).
    fn split(&self, t: f64) -> usize {
        self.xs.partition_point(|&x| x <= t)
    }

    fn tail(&self, prefix: &[f64], k: usize) -> f64 {
        prefix[self.len()] - prefix[k]
    }

    /// Checks that every segment holds at least `min_pts` samples.
    fn counts_ok(&self, ts: &[f64], min_pts: usize) -> bool {
        let mut prev = 0usize;
        for &t in ts {
            let k = self.split(t);
            if k < prev + min_pts {
                return false;
            }
            prev = k;
        }
        self.len() >= prev + min_pts
    }

    fn normal_equations(&self, ts: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let p = ts.len() + 2;
        let n = self.len();
        let mut g = DMatrix::<f64>::zeros(p, p);
        let mut r = DVector::<f64>::zeros(p);
        g[(0, 0)] = self.s1[n];
        g[(0, 1)] = self.sx[n];
        g[(1, 1)] = self.sxx[n];
        r[0] = self.sy[n];
        r[1] = self.sxy[n];
        let ks: Vec<usize> = ts.iter().map(|&t| self.split(t)).collect();
        for (j, (&t, &k)) in ts.iter().zip(&ks).enumerate() {
            let t0 = self.tail(&self.s1, k);
            let t1 = self.tail(&self.sx, k);
            let t2 = self.tail(&self.sxx, k);
            g[(0, 2 + j)] = t1 - t * t0;
            g[(1, 2 + j)] = t2 - t * t1;
            r[2 + j] = self.tail(&self.sxy, k) - t * self.tail(&self.sy, k);
            for i in 0..=j {
                // ts ascending: the product is nonzero only right of t_j.
                let ti = ts[i];
                g[(2 + i, 2 + j)] = t2 - (ti + t) * t1 + ti * t * t0;
            }
        }
        for c in 0..p {
            for rr in (c + 1)..p {
                g[(rr, c)] = g[(c, rr)];
            }
        }
        (g, r)
    }

    fn solve(&self, ts: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        let (g, r) = self.normal_equations(ts);
        let beta = g.clone().cholesky()?.solve(&r);
        if beta.iter().all(|b| b.is_finite()) {
            Some((beta, r))
        } else {
            None
        }
    }

    /// Residual sum of squares from the normal equations; fast, used for scans.
    fn sse_fast(&self, ts: &[f64]) -> Option<f64> {
        let (beta, r) = self.solve(ts)?;
        Some((self.syy - beta.dot(&r)).max(0.0))
    }

    /// Residual sum of squares summed over samples; accurate near zero.
    fn sse_direct(&self, ts: &[f64]) -> Option<f64> {
        let (beta, _) = self.solve(ts)?;
        let sse = self
            .xs
            .iter()
            .zip(&self.ys)
            .map(|(&x, &y)| {
                let mut f = beta[0] + beta[1] * x;
                for (j, &t) in ts.iter().enumerate() {
                    if x > t {
                        f += beta[2 + j] * (x - t);
                    }
                }
                (y - f) * (y - f)
            })
            .sum();
        Some(sse)
    }

    fn sse_line(&self) -> f64 {
        self.sse_direct(&[]).unwrap_or(f64::INFINITY)
    }
}

/// Least-squares cost of a continuous piecewise-linear fit with the given
/// breakpoints (original strain coordinates), or `None` if a segment is
/// too sparse.
pub fn piecewise_sse(xs: &[f64], ys: &[f64], breakpoints: &[f64], min_region_points: usize) -> Option<f64> {
    let m = Moments::new(xs, ys);
    let ts: Vec<f64> = breakpoints.iter().map(|b| b - m.x_shift).collect();
    if !m.counts_ok(&ts, min_region_points) {
        return None;
    }
    m.sse_direct(&ts)
}

/// Indices of isolated |σ''| peaks, tallest first.
pub fn curvature_peaks(profile: &DerivativeProfile, cfg: &BreakpointConfig) -> Vec<usize> {
    let n = profile.grid.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = profile.span();
    let span = hi - lo;
    let slope_scale = profile.d1.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let floor = cfg.peak_floor_rel * slope_scale / span;
    let trim = ((n as f64 * cfg.edge_trim_frac).ceil() as usize).max(1);
    let mag: Vec<f64> = profile.d2.iter().map(|d| d.abs()).collect();
    let mut candidates: Vec<usize> = (trim.max(1)..n.saturating_sub(trim).min(n - 1))
        .filter(|&i| mag[i] > floor && mag[i] > mag[i - 1] && mag[i] >= mag[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));
    let min_sep = ((n as f64 * cfg.peak_separation_frac).round() as usize).max(1);
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= min_sep) {
            accepted.push(c);
        }
    }
    accepted
}

/// Finds `n_break` breakpoints using the default search configuration.
pub fn find_breakpoints(profile: &DerivativeProfile, n_break: usize) -> Result<Vec<f64>, SegmentError> {
    find_breakpoints_with(profile, n_break, &BreakpointConfig::default())
}

pub fn find_breakpoints_with(
    profile: &DerivativeProfile,
    n_break: usize,
    cfg: &BreakpointConfig,
) -> Result<Vec<f64>, SegmentError> {
    if !(2..=3).contains(&n_break) {
        return Err(SegmentError::BadBreakCount(n_break));
    }
    let m = Moments::new(&profile.xs, &profile.ys);
    let grid: Vec<f64> = profile.grid.iter().map(|g| g - m.x_shift).collect();
    let gn = grid.len();
    let min_pts = cfg.min_region_points.max(2);
    if m.len() < (n_break + 1) * min_pts {
        return Err(SegmentError::Failure(
            "too few samples for the requested regions".into(),
        ));
    }

    let peaks = curvature_peaks(profile, cfg);
    let enough_peaks = peaks.len() >= n_break;
    let mut seed: Vec<usize> = if enough_peaks {
        let mut s: Vec<usize> = peaks[..n_break].to_vec();
        s.sort_unstable();
        s
    } else {
        (1..=n_break).map(|j| j * (gn - 1) / (n_break + 1)).collect()
    };
    seed.dedup();
    if seed.len() < n_break || !m.counts_ok(&idx_to_t(&grid, &seed), min_pts) {
        seed = (1..=n_break).map(|j| j * (gn - 1) / (n_break + 1)).collect();
    }
    if !m.counts_ok(&idx_to_t(&grid, &seed), min_pts) {
        seed = feasible_seed(&m, &grid, n_break, min_pts)
            .ok_or_else(|| SegmentError::Failure("no feasible breakpoint placement".into()))?;
    }

    let mut idx = seed;
    let mut best = m
        .sse_fast(&idx_to_t(&grid, &idx))
        .ok_or_else(|| SegmentError::Failure("singular piecewise fit".into()))?;
    for _ in 0..cfg.max_sweeps {
        let mut changed = false;
        for j in 0..n_break {
            let lo = if j == 0 { 1 } else { idx[j - 1] + 1 };
            let hi = if j + 1 == n_break { gn - 1 } else { idx[j + 1] };
            let mut trial = idx.clone();
            let mut best_j = idx[j];
            for c in lo..hi {
                trial[j] = c;
                let ts = idx_to_t(&grid, &trial);
                if !m.counts_ok(&ts, min_pts) {
                    continue;
                }
                if let Some(s) = m.sse_fast(&ts) {
                    // Strict improvement only; scanning upward keeps ties at the smaller strain.
                    if s < best || (s == best && c < best_j) {
                        best = s;
                        best_j = c;
                    }
                }
            }
            if best_j != idx[j] {
                idx[j] = best_j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut ts = idx_to_t(&grid, &idx);
    for _ in 0..2 {
        for j in 0..n_break {
            let lo = if idx[j] > 0 { grid[idx[j] - 1] } else { grid[0] };
            let hi = grid[(idx[j] + 1).min(gn - 1)];
            let lo = if j > 0 { lo.max(ts[j - 1]) } else { lo };
            let hi = if j + 1 < n_break { hi.min(ts[j + 1]) } else { hi };
            ts[j] = golden_polish(&m, &ts, j, lo, hi, min_pts, cfg.golden_iterations);
        }
    }

    let sse = m.sse_direct(&ts).unwrap_or(f64::INFINITY);
    let sse_line = m.sse_line();
    let sst = m.syy;
    let n = m.len() as f64;
    let gain = sse_line - sse;
    let dof = n - n_break as f64 - 2.0;
    let f_stat = if sse > 0.0 {
        (gain / n_break as f64) / (sse / dof)
    } else if gain > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let improved = gain > 1e-12 * sst && f_stat >= cfg.min_f_stat;
    if !enough_peaks && !improved {
        return Err(SegmentError::Failure(format!(
            "found {} isolated curvature peak(s) for {} breakpoints and the piecewise fit does not improve on a single line",
            peaks.len(),
            n_break
        )));
    }
    let mut out: Vec<f64> = ts.iter().map(|t| t + m.x_shift).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

fn idx_to_t(grid: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| grid[i]).collect()
}

fn feasible_seed(m: &Moments, grid: &[f64], n_break: usize, min_pts: usize) -> Option<Vec<usize>> {
    // Place breakpoints at equal sample-count quantiles, snapped to the grid.
    let n = m.len();
    let mut idx = Vec::with_capacity(n_break);
    for j in 1..=n_break {
        let target = m.xs[(j * n / (n_break + 1)).min(n - 1)];
        let g = grid.partition_point(|&g| g < target).min(grid.len() - 1);
        idx.push(g);
    }
    idx.dedup();
    (idx.len() == n_break && m.counts_ok(&idx_to_t(grid, &idx), min_pts)).then_some(idx)
}

fn golden_polish(m: &Moments, ts: &[f64], j: usize, mut a: f64, mut b: f64, min_pts: usize, iterations: usize) -> f64 {
    let cost = |t: f64| {
        let mut trial = ts.to_vec();
        trial[j] = t;
        if !m.counts_ok(&trial, min_pts) {
            return f64::INFINITY;
        }
        m.sse_direct(&trial).unwrap_or(f64::INFINITY)
    };
    let current = ts[j];
    let current_cost = cost(current);
    if !(b > a) {
        return current;
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = cost(c);
    let mut fd = cost(d);
    for _ in 0..iterations {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d);
        }
    }
    let (t, f) = if fc <= fd { (c, fc) } else { (d, fd) };
    if f < current_cost {
        t
    } else {
        current
    }
}

#[cfg(test)]
mod tests {
    use super::super::smooth::{smooth_and_differentiate_points, SmoothConfig};
    use super::*;

    fn trilinear(x: f64) -> f64 {
        // Kinks at 0.15 and 0.60.
        let (e, p, d) = (200.0, 20.0, 400.0);
        if x < 0.15 {
            e * x
        } else if x < 0.6 {
            e * 0.15 + p * (x - 0.15)
        } else {
            e * 0.15 + p * 0.45 + d * (x - 0.6)
        }
    }

    fn sample(f: impl Fn(f64) -> f64, n: usize, end: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let x = end * i as f64 / (n - 1) as f64;
                (x, f(x))
            })
            .collect()
    }

    #[test]
    fn moments_match_direct_sse() {
        let pts = sample(trilinear, 300, 0.8);
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().cloned().unzip();
        let m = Moments::new(&xs, &ys);
        for ts in [[0.1, 0.5], [0.2, 0.7], [0.15, 0.6]] {
            let c: Vec<f64> = ts.iter().map(|t| t - m.x_shift).collect();
            let fast = m.sse_fast(&c).unwrap();
            let direct = m.sse_direct(&c).unwrap();
            assert!((fast - direct).abs() <= 1e-7 * (1.0 + direct), "{fast} vs {direct}");
        }
        assert!(piecewise_sse(&xs, &ys, &[0.15, 0.6], 4).unwrap() < 1e-18);
    }

    #[test]
    fn noiseless_trilinear_recovered() {
        let pts = sample(trilinear, 1500, 0.8);
        let profile = smooth_and_differentiate_points(&pts, &SmoothConfig::default()).unwrap();
        let bps = find_breakpoints(&profile, 2).unwrap();
        assert!((bps[0] - 0.15).abs() < 1e-3, "{bps:?}");
        assert!((bps[1] - 0.60).abs() < 1e-3, "{bps:?}");
    }

    #[test]
    fn curvature_peaks_at_kinks() {
        let pts = sample(trilinear, 1500, 0.8);
        let profile = smooth_and_differentiate_points(&pts, &SmoothConfig::default()).unwrap();
        let mut peaks: Vec<f64> = curvature_peaks(&profile, &BreakpointConfig::default())[..2]
            .iter()
            .map(|&i| profile.grid[i])
            .collect();
        peaks.sort_by(f64::total_cmp);
        let step = profile.step();
        assert!((peaks[0] - 0.15).abs() <= 2.0 * step);
        assert!((peaks[1] - 0.60).abs() <= 2.0 * step);
    }

    #[test]
    fn straight_line_fails() {
        let pts = sample(|x| 120.0 * x + 3.0, 800, 0.8);
        let profile = smooth_and_differentiate_points(&pts, &SmoothConfig::default()).unwrap();
        assert!(matches!(find_breakpoints(&profile, 2), Err(SegmentError::Failure(_))));
    }

    #[test]
    fn break_count_must_be_two_or_three() {
        let pts = sample(trilinear, 300, 0.8);
        let profile = smooth_and_differentiate_points(&pts, &SmoothConfig::default()).unwrap();
        assert!(matches!(
            find_breakpoints(&profile, 1),
            Err(SegmentError::BadBreakCount(1))
        ));
        assert!(matches!(
            find_breakpoints(&profile, 4),
            Err(SegmentError::BadBreakCount(4))
        ));
    }

    #[test]
    fn three_breakpoints() {
        let f = |x: f64| {
            if x < 0.9 {
                trilinear(x)
            } else {
                trilinear(0.9) + 5.0 * (x - 0.9)
            }
        };
        let pts = sample(f, 2000, 1.1);
        let profile = smooth_and_differentiate_points(&pts, &SmoothConfig::default()).unwrap();
        let bps = find_breakpoints(&profile, 3).unwrap();
        for (got, want) in bps.iter().zip([0.15, 0.6, 0.9]) {
            assert!((got - want).abs() < 1e-3, "{bps:?}");
        }
    }
}
