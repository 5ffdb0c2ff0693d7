//! Independent reference implementations the library is checked against,
//! plus small fixtures shared by the integration tests. The oracles use
//! nothing from the code under test beyond its data types.
#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use robosumm::model::{EmbeddingMatrix, ImportanceCurve};
use robosumm::providers::{CaptionRequest, FrameInput, Provider, ProviderDescriptor, ProviderError, SegmentInput};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- linear algebra --------------------------------------------------------

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and eigenvectors (as columns of `v`, i.e. `v[row][k]`),
/// unsorted.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

pub struct OraclePca {
    pub variances: Vec<f64>,
    /// Component directions, by descending variance.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

/// PCA by explicit covariance (n - 1 denominator) and Jacobi rotation.
/// Components are signed so their largest-magnitude entry is positive.
pub fn oracle_pca(x: &[Vec<f64>], dims: usize) -> OraclePca {
    let (n, d) = (x.len(), x[0].len());
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in x {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|c| *c /= (n - 1) as f64);
    let (vals, vecs) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let mut components = Vec::new();
    let mut variances = Vec::new();
    for &k in order.iter().take(dims) {
        let mut c: Vec<f64> = (0..d).map(|i| vecs[i][k]).collect();
        let mut lead = 0;
        for i in 0..d {
            if c[i].abs() > c[lead].abs() {
                lead = i;
            }
        }
        if c[lead] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        variances.push(vals[k]);
    }
    OraclePca { variances, components, mean }
}

impl OraclePca {
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row.iter().zip(&self.mean)).map(|(a, (v, m))| a * (v - m)).sum())
            .collect()
    }
}

/// Rows with a decaying spectrum, so principal directions are well separated.
pub fn spectral_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let g = Normal::new(0.0, 1.0).unwrap();
    let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| g.sample(rng)).collect()).collect();
    let offset: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|k| g.sample(rng) * 0.8f64.powi(k as i32) * 4.0).collect();
            (0..d).map(|j| offset[j] + (0..d).map(|k| z[k] * mix[k][j]).sum::<f64>()).collect()
        })
        .collect()
}

// ---- cosine with the library's zero-vector convention ----------------------

/// Two zero vectors are identical (1); a zero and a nonzero vector are
/// unrelated (0).
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (nu <= 1e-12, nv <= 1e-12) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv),
    }
}

// ---- segmentation ----------------------------------------------------------

/// Within-segment kernel scatter of rows `[s, t)` under the cosine kernel,
/// summed directly.
pub fn direct_scatter(x: &[Vec<f64>], s: usize, t: usize) -> f64 {
    let len = (t - s) as f64;
    let mut diag = 0.0;
    let mut block = 0.0;
    for i in s..t {
        diag += cosine(&x[i], &x[i]);
        for j in s..t {
            block += cosine(&x[i], &x[j]);
        }
    }
    diag - block / len
}

/// Penalized objective `scatter + w * m (ln(n/m) + 1)` minimized over every
/// segmentation whose segments have at least `min_len` rows, by
/// enumeration. Returns (objective, boundaries).
pub fn exhaustive_kts(x: &[Vec<f64>], min_len: usize, weight: f64) -> (f64, Vec<usize>) {
    let n = x.len();
    let mut memo = vec![f64::NAN; (n + 1) * (n + 1)];
    let mut scatter = |s: usize, t: usize| {
        let k = s * (n + 1) + t;
        if memo[k].is_nan() {
            memo[k] = direct_scatter(x, s, t);
        }
        memo[k]
    };
    let mut best = (f64::INFINITY, Vec::new());
    let mut stack: Vec<(usize, Vec<usize>, f64)> = vec![(0, Vec::new(), 0.0)];
    while let Some((start, cuts, acc)) = stack.pop() {
        // Close the last segment here.
        if n - start >= min_len {
            let m = cuts.len() as f64;
            let pen = if cuts.is_empty() { 0.0 } else { m * ((n as f64 / m).ln() + 1.0) };
            let obj = acc + scatter(start, n) + weight * pen;
            if obj < best.0 {
                best = (obj, cuts.clone());
            }
        }
        for next in start + min_len..=n.saturating_sub(min_len) {
            let mut c = cuts.clone();
            c.push(next);
            let a = acc + scatter(start, next);
            stack.push((next, c, a));
        }
    }
    best
}

/// Piecewise-constant stream: each block is a fixed random direction plus
/// Gaussian noise. Returns rows and the true boundaries.
pub fn block_stream(rng: &mut ChaCha8Rng, lens: &[usize], dim: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let g = Normal::new(0.0, 1.0).unwrap();
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for (b, &len) in lens.iter().enumerate() {
        if b > 0 {
            bounds.push(rows.len());
        }
        let dir: Vec<f64> = (0..dim).map(|_| g.sample(rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..len {
            rows.push(dir.iter().map(|v| v / norm + noise.sample(rng)).collect());
        }
    }
    (rows, bounds)
}

// ---- selection -------------------------------------------------------------

/// Best total score over all subsets of `(duration, score)` items whose
/// durations sum to at most `budget`.
pub fn brute_knapsack(items: &[(f64, f64)], budget: f64) -> f64 {
    let n = items.len();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        let (mut d, mut s) = (0.0, 0.0);
        for (i, it) in items.iter().enumerate() {
            if mask & (1 << i) != 0 {
                d += it.0;
                s += it.1;
            }
        }
        if d <= budget + 1e-9 {
            best = best.max(s);
        }
    }
    best
}

/// Replays the greedy diverse rule from scratch: visit by score (earlier
/// index on ties), accept when below `delta` against everything accepted.
pub fn replay_greedy(scores: &[f64], emb: &[Vec<f64>], delta: f64, max_items: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut acc: Vec<usize> = Vec::new();
    for i in order {
        if acc.len() == max_items {
            break;
        }
        if acc.iter().all(|&j| cosine(&emb[i], &emb[j]) < delta) {
            acc.push(i);
        }
    }
    acc.sort();
    acc
}

// ---- providers -------------------------------------------------------------

/// Forwards to another provider and records every caption request.
pub struct RecordingProvider {
    pub inner: Arc<dyn Provider>,
    pub captions: Mutex<Vec<CaptionRequest>>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn Provider>) -> Arc<Self> {
        Arc::new(Self { inner, captions: Mutex::new(Vec::new()) })
    }
}

impl Provider for RecordingProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        self.inner.descriptor()
    }
    fn embed_frames(&self, frames: &[FrameInput]) -> Result<EmbeddingMatrix, ProviderError> {
        self.inner.embed_frames(frames)
    }
    fn embed_segments(&self, segments: &[SegmentInput]) -> Result<EmbeddingMatrix, ProviderError> {
        self.inner.embed_segments(segments)
    }
    fn embed_text(&self, query: &str) -> Result<Vec<f32>, ProviderError> {
        self.inner.embed_text(query)
    }
    fn score_importance(&self, features: &EmbeddingMatrix) -> Result<ImportanceCurve, ProviderError> {
        self.inner.score_importance(features)
    }
    fn caption(&self, req: &CaptionRequest) -> Result<String, ProviderError> {
        self.captions.lock().unwrap().push(req.clone());
        self.inner.caption(req)
    }
}

/// Every file under `dir`, relative path and bytes, sorted by path.
pub fn tree_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(rd) = std::fs::read_dir(&d) else { continue };
        for e in rd.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// A directory of `secs * fps` rendered PNG frames with an `index.json`,
/// usable as an ingest source without an extractor.
pub fn image_dir(dir: &std::path::Path, secs: u64, fps: u32) -> String {
    use robosumm::ingest::FrameIndex;
    use robosumm::model::FrameRate;
    use robosumm::synthetic::{Scenario, ScenarioWorld};
    std::fs::create_dir_all(dir).unwrap();
    let world = ScenarioWorld::new(Scenario::mission("camera", secs as f64, 1)).unwrap();
    let rate = FrameRate::whole(fps);
    let files: Vec<String> = (0..secs * fps as u64)
        .map(|i| {
            let name = format!("img_{i:05}.png");
            std::fs::write(dir.join(&name), world.render_png(i, rate)).unwrap();
            name
        })
        .collect();
    let source = dir.to_string_lossy().into_owned();
    let idx = FrameIndex { source: "camera".into(), rate, count: files.len() as u64, files };
    std::fs::write(dir.join("index.json"), serde_json::to_vec_pretty(&idx).unwrap()).unwrap();
    source
}
