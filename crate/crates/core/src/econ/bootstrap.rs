//! Cluster (block) bootstrap with per-replicate ChaCha8 streams.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::EconError;

pub const DEFAULT_REPLICATES: usize = 200;

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    /// Worker count; 0 uses the global rayon pool.
    pub threads: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Standard deviation of successful replicate estimates, per statistic.
    pub se: Vec<f64>,
    /// Successful replicate estimates in replicate order.
    pub estimates: Vec<Vec<f64>>,
    pub failed: usize,
}

/// RNG for replicate `rep`: one ChaCha8 stream per replicate under `seed`.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Cluster indices drawn with replacement for one replicate.
pub fn draw_clusters(n_clusters: usize, seed: u64, rep: u64) -> Vec<usize> {
    let mut rng = replicate_rng(seed, rep);
    (0..n_clusters).map(|_| rng.random_range(0..n_clusters)).collect()
}

pub(crate) fn run_in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, EconError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EconError::Dimension(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn sample_sd(estimates: &[Vec<f64>]) -> Vec<f64> {
    let k = estimates[0].len();
    let b = estimates.len() as f64;
    (0..k)
        .map(|j| {
            let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / b;
            let ss: f64 = estimates.iter().map(|e| (e[j] - mean).powi(2)).sum();
            (ss / (b - 1.0)).sqrt()
        })
        .collect()
}

/// Runs `stat` on `replicates` cluster draws. The closure receives the drawn
/// cluster indices (positions in 0..n_clusters, repeats allowed).
pub fn bootstrap_draws<F>(n_clusters: usize, opts: BootstrapOptions, stat: F) -> Result<BootstrapResult, EconError>
where
    F: Fn(&[usize]) -> Result<Vec<f64>, EconError> + Sync,
{
    if opts.replicates < 2 {
        return Err(EconError::TooFewReplicates(opts.replicates));
    }
    let results: Vec<Option<Vec<f64>>> = run_in_pool(opts.threads, || {
        (0..opts.replicates)
            .into_par_iter()
            .map(|rep| {
                let draws = draw_clusters(n_clusters, opts.seed, rep as u64);
                stat(&draws).ok()
            })
            .collect()
    })?;
    let failed = results.iter().filter(|r| r.is_none()).count();
    let estimates: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    if estimates.len() < 2 {
        return Err(EconError::AllReplicatesFailed(opts.replicates));
    }
    Ok(BootstrapResult {
        se: sample_sd(&estimates),
        estimates,
        failed,
    })
}

/// Row index lists per cluster, clusters ordered by first appearance.
pub fn cluster_rows(clusters: &[u32]) -> Vec<Vec<usize>> {
    let (codes, n) = super::absorb::encode(clusters.iter().copied());
    let mut rows = vec![Vec::new(); n];
    for (i, &c) in codes.iter().enumerate() {
        rows[c as usize].push(i);
    }
    rows
}

/// Expands drawn clusters to rows; each draw gets its own new cluster id so
/// duplicated clusters are treated as distinct.
pub fn resample_rows(members: &[Vec<usize>], draws: &[usize]) -> (Vec<usize>, Vec<u32>) {
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (new_id, &c) in draws.iter().enumerate() {
        rows.extend_from_slice(&members[c]);
        ids.extend(std::iter::repeat_n(new_id as u32, members[c].len()));
    }
    (rows, ids)
}

/// Cluster bootstrap of an estimator. `stat` receives the resampled row
/// indices and the re-keyed cluster id of each row.
pub fn cluster_bootstrap<F>(clusters: &[u32], opts: BootstrapOptions, stat: F) -> Result<BootstrapResult, EconError>
where
    F: Fn(&[usize], &[u32]) -> Result<Vec<f64>, EconError> + Sync,
{
    let members = cluster_rows(clusters);
    bootstrap_draws(members.len(), opts, |draws| {
        let (rows, ids) = resample_rows(&members, draws);
        stat(&rows, &ids)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_stat(y: &[f64]) -> impl Fn(&[usize], &[u32]) -> Result<Vec<f64>, EconError> + Sync + '_ {
        move |rows, _| Ok(vec![rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64])
    }

    #[test]
    fn deterministic_given_seed() {
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let cl: Vec<u32> = (0..50).map(|i| i / 5).collect();
        let opts = BootstrapOptions {
            replicates: 40,
            seed: 11,
            threads: 2,
        };
        let a = cluster_bootstrap(&cl, opts, mean_stat(&y)).unwrap();
        let b = cluster_bootstrap(&cl, opts, mean_stat(&y)).unwrap();
        assert_eq!(a.se[0].to_bits(), b.se[0].to_bits());
    }

    #[test]
    fn single_cluster_gives_zero_se() {
        let y = [1.0, 2.0, 3.0];
        let opts = BootstrapOptions {
            replicates: 2,
            ..Default::default()
        };
        let r = cluster_bootstrap(&[4, 4, 4], opts, mean_stat(&y)).unwrap();
        assert_eq!(r.se, vec![0.0]);
    }

    #[test]
    fn relabeling_clusters_does_not_change_result() {
        let y: Vec<f64> = (0..30).map(|i| (i * i % 7) as f64).collect();
        let a: Vec<u32> = (0..30).map(|i| i / 3).collect();
        let b: Vec<u32> = a.iter().map(|c| 1000 - 7 * c).collect();
        let opts = BootstrapOptions {
            replicates: 25,
            seed: 3,
            threads: 1,
        };
        let ra = cluster_bootstrap(&a, opts, mean_stat(&y)).unwrap();
        let rb = cluster_bootstrap(&b, opts, mean_stat(&y)).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn failures_are_counted() {
        let opts = BootstrapOptions {
            replicates: 10,
            seed: 0,
            threads: 1,
        };
        let r = bootstrap_draws(5, opts, |d| {
            if d[0] == 0 {
                Err(EconError::NoVariation("x".into()))
            } else {
                Ok(vec![d.iter().sum::<usize>() as f64])
            }
        })
        .unwrap();
        assert_eq!(r.failed + r.estimates.len(), 10);
        assert!(bootstrap_draws(5, BootstrapOptions { replicates: 1, ..opts }, |_| Ok(vec![0.0])).is_err());
    }
}
