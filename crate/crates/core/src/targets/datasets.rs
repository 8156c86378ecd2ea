use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::MixtureSpec;
use crate::error::{Error, Result};

pub const DATASET_COUNT: usize = 6;

/// (weight, mean, standard deviation) per component.
const DATASETS: [&[(f64, f64, f64)]; DATASET_COUNT] = [
    &[(0.5, -0.25, 0.5), (0.5, 0.25, 0.5)],
    &[(0.5, 0.0, 1.0), (0.5, 0.0, 0.1)],
    &[(0.3, -1.0, 0.5), (0.7, 1.0, 0.5)],
    &[(0.5, -0.75, 0.1), (0.5, 0.75, 0.1)],
    &[(0.35, -0.1, 0.1), (0.3, 0.0, 0.5), (0.35, 0.1, 1.0)],
    &[(0.25, -0.5, 0.1), (0.5, 0.0, 0.2), (0.25, 0.5, 0.1)],
];

fn table(k: usize) -> Result<&'static [(f64, f64, f64)]> {
    k.checked_sub(1)
        .and_then(|i| DATASETS.get(i))
        .copied()
        .ok_or(Error::UnknownDataset(k))
}

/// Generating mixture of benchmark dataset `k` (1-based).
pub fn dataset_spec(k: usize) -> Result<MixtureSpec> {
    let t = table(k)?;
    Ok(MixtureSpec {
        weights: t.iter().map(|c| c.0).collect(),
        means: t.iter().map(|c| c.1).collect(),
        variances: t.iter().map(|c| c.2 * c.2).collect(),
    })
}

pub fn dataset_components(k: usize) -> Result<usize> {
    table(k).map(|t| t.len())
}

/// `n` iid draws from dataset `k`.
pub fn simulate_dataset(k: usize, n: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    let t = table(k)?;
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let &(_, m, sd) = t
                .iter()
                .find(|c| {
                    acc += c.0;
                    u < acc
                })
                .unwrap_or(t.last().expect("non-empty"));
            let z: f64 = StandardNormal.sample(&mut *rng);
            m + sd * z
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn specs_are_valid() {
        for k in 1..=DATASET_COUNT {
            let s = dataset_spec(k).unwrap();
            MixtureSpec::new(s.weights.clone(), s.means.clone(), s.variances.clone()).unwrap();
        }
        assert_eq!(dataset_components(2).unwrap(), 2);
        assert_eq!(dataset_components(5).unwrap(), 3);
    }

    #[test]
    fn unknown_dataset() {
        let mut rng = substream(0, &[0]);
        assert_eq!(simulate_dataset(0, 1, &mut rng), Err(Error::UnknownDataset(0)));
        assert_eq!(simulate_dataset(7, 1, &mut rng), Err(Error::UnknownDataset(7)));
    }

    #[test]
    fn dataset_four_is_centred() {
        let x = simulate_dataset(4, 100_000, &mut substream(1, &[0])).unwrap();
        assert!(moments(&x).0.abs() < 0.01);
    }

    #[test]
    fn dataset_two_variance() {
        let x = simulate_dataset(2, 100_000, &mut substream(2, &[0])).unwrap();
        assert!((moments(&x).1 - 0.505).abs() < 0.01);
    }

    #[test]
    fn dataset_six_is_trimodal() {
        let x = simulate_dataset(6, 100_000, &mut substream(3, &[0])).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        // bins of width 0.1 centred on multiples of 0.1 over [-1.05, 1.05)
        let mut bins = [0usize; 21];
        for v in &x {
            if (-1.05..1.05).contains(v) {
                bins[((v + 1.05) / 0.1) as usize] += 1;
            }
        }
        let local_max: Vec<usize> = (1..20)
            .filter(|&i| bins[i] > bins[i - 1] && bins[i] >= bins[i + 1])
            .collect();
        assert_eq!(local_max, vec![5, 10, 15], "{bins:?}");
    }
}
