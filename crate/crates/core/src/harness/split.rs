use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_sim::{ManifestRow, Split};
use crate::seed::{rng_for, stream};

/// Train/val/test ratios and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.2,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Config("split ratios must be positive".into()));
        }
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split ratios must sum to 1".into()));
        }
        Ok(())
    }

    /// `(train, val, test)` sizes for `u` samples. Validation and test get
    /// their rounded share (at least one each); train takes the remainder.
    pub fn counts(&self, u: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        if u < 3 {
            return Err(Error::Split(format!("need at least 3 samples, got {u}")));
        }
        let share = |r: f64| ((u as f64 * r).round() as usize).max(1);
        let val = share(self.val);
        let test = share(self.test);
        if val + test >= u {
            return Err(Error::Split(format!(
                "{u} samples leave no training data at ratios {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok((u - val - test, val, test))
    }
}

/// Tags each row with a split by a seeded uniform shuffle.
pub fn assign_splits(rows: &mut [ManifestRow], spec: &SplitSpec) -> Result<()> {
    let (_, val, test) = spec.counts(rows.len())?;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng_for(spec.seed, &[stream::SPLIT]));
    for (rank, &i) in order.iter().enumerate() {
        let tag = if rank < val {
            Split::Val
        } else if rank < val + test {
            Split::Test
        } else {
            Split::Train
        };
        rows[i].split = tag.to_string();
    }
    Ok(())
}

pub fn split_dataset(mut rows: Vec<ManifestRow>, spec: &SplitSpec) -> Result<Vec<ManifestRow>> {
    if rows.is_empty() {
        return Err(Error::Split("manifest is empty".into()));
    }
    assign_splits(&mut rows, spec)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: usize) -> Vec<ManifestRow> {
        (0..n as u64)
            .map(|id| ManifestRow {
                sample_id: id,
                scenario: "t".into(),
                split: String::new(),
                pos_x: 0.0,
                pos_y: 0.0,
                bbox_xc: 0.0,
                bbox_yc: 0.0,
                bbox_w: 1.0,
                bbox_h: 1.0,
                mask_path: String::new(),
                raster_path: String::new(),
                beam_index: 0,
                missed: 0,
            })
            .collect()
    }

    fn tally(rows: &[ManifestRow]) -> (usize, usize, usize) {
        let c = |t: &str| rows.iter().filter(|r| r.split == t).count();
        (c("train"), c("val"), c("test"))
    }

    #[test]
    fn preset_sizes() {
        let s = SplitSpec::default();
        assert_eq!(s.counts(2300).unwrap(), (1610, 460, 230));
        assert_eq!(s.counts(854).unwrap(), (598, 171, 85));
        let tagged = split_dataset(rows(854), &s).unwrap();
        assert_eq!(tally(&tagged), (598, 171, 85));
    }

    #[test]
    fn same_seed_same_assignment() {
        let a = split_dataset(rows(100), &SplitSpec::with_seed(3)).unwrap();
        let b = split_dataset(rows(100), &SplitSpec::with_seed(3)).unwrap();
        let c = split_dataset(rows(100), &SplitSpec::with_seed(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn within_one_of_exact_share() {
        for u in 3..300 {
            let (tr, va, te) = SplitSpec::default().counts(u).unwrap();
            assert_eq!(tr + va + te, u);
            assert!((va as f64 - 0.2 * u as f64).abs() <= 1.0);
            assert!((te as f64 - 0.1 * u as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            split_dataset(rows(2), &SplitSpec::default()),
            Err(Error::Split(_))
        ));
        assert!(split_dataset(Vec::new(), &SplitSpec::default()).is_err());
    }

    #[test]
    fn bad_ratios() {
        let s = SplitSpec { train: 0.5, val: 0.2, test: 0.2, seed: 0 };
        assert!(s.validate().is_err());
    }
}
