//! Local volume distortion statistics and folding counts.

use std::fmt::Write as _;

use crate::energy::image_volume;
use crate::mesh::{SimplicialMap, TetMesh};
use crate::{Error, Result};

/// Number of bins in [`histogram`].
pub const HISTOGRAM_BINS: usize = 50;

/// Per-tet relative volume distortion
/// `|(|f(τ)|/V(f) - |τ|/V(e)) / (|τ|/V(e))|`.
pub fn local_distortion(mesh: &TetMesh, f: &SimplicialMap) -> Result<Vec<f64>> {
    f.check_matches(mesh)?;
    let vf = image_volume(mesh, f);
    if vf == 0.0 {
        return Err(Error::ZeroImageVolume);
    }
    let ve = mesh.volume();
    Ok((0..mesh.n_tets())
        .map(|t| {
            let src = mesh.tet_volume(t) / ve;
            ((f.image_tet_volume(mesh, t) / vf - src) / src).abs()
        })
        .collect())
}

/// Tetrahedra whose image has nonpositive signed volume.
pub fn folding_count(mesh: &TetMesh, f: &SimplicialMap) -> usize {
    (0..mesh.n_tets())
        .filter(|&t| f.image_tet_volume(mesh, t) <= 0.0)
        .count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistortionSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
    pub folding_count: usize,
}

/// Percentile `q` in `[0, 100]` of sorted data, interpolating linearly
/// between the closest ranks (`h = (n - 1) q / 100`).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q / 100.0;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn summarize(dist: &[f64], foldings: usize) -> DistortionSummary {
    let mut sorted = dist.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = dist.len().max(1) as f64;
    let mean = dist.iter().sum::<f64>() / n;
    let var = dist.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    DistortionSummary {
        mean,
        sd: var.sqrt(),
        p25: percentile_sorted(&sorted, 25.0),
        p50: percentile_sorted(&sorted, 50.0),
        p75: percentile_sorted(&sorted, 75.0),
        p95: percentile_sorted(&sorted, 95.0),
        folding_count: foldings,
    }
}

/// `(bin_left, bin_right, count)` for uniform bins over `[0, max]`; the last
/// bin is closed on the right.
pub fn histogram(dist: &[f64]) -> Vec<(f64, f64, usize)> {
    let max = dist.iter().copied().fold(0.0f64, f64::max);
    let width = if max > 0.0 { max / HISTOGRAM_BINS as f64 } else { 1.0 / HISTOGRAM_BINS as f64 };
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &d in dist {
        let b = ((d / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b as f64 * width, (b + 1) as f64 * width, c))
        .collect()
}

pub fn distortion_csv(dist: &[f64]) -> String {
    let mut out = String::from("tet,distortion\n");
    for (t, d) in dist.iter().enumerate() {
        let _ = writeln!(out, "{t},{d:e}");
    }
    out
}

pub fn summary_csv(s: &DistortionSummary) -> String {
    format!(
        "mean,sd,p25,p50,p75,p95,foldings\n{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
        s.mean, s.sd, s.p25, s.p50, s.p75, s.p95, s.folding_count
    )
}

pub fn histogram_csv(hist: &[(f64, f64, usize)]) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for (l, r, c) in hist {
        let _ = writeln!(out, "{l:e},{r:e},{c}");
    }
    out
}
