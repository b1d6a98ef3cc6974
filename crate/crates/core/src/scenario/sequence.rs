use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BaleSequence;
use crate::error::{Error, Result};
use crate::plant::{MoistureLevel, PerLevel};

/// Periods in one repetition of the short pattern.
pub const SHORT_BLOCK: usize = 10;
/// Periods spent on one bale when bales are shuffled.
pub const BALE_PERIODS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Uniform(MoistureLevel),
    /// High, then Medium, then Low, each in one contiguous run.
    Long,
    /// The mix repeated in blocks of `SHORT_BLOCK` periods (Low, Medium, High within a block).
    Short,
    /// Bales of `BALE_PERIODS` periods in uniformly random order.
    Random,
}

/// Integer counts proportional to `mix` summing to `n` (largest remainder).
fn apportion(mix: &PerLevel<f64>, n: usize) -> PerLevel<usize> {
    let levels = MoistureLevel::ALL;
    let raw: Vec<f64> = levels.iter().map(|&l| mix[l] * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| (r + 1e-9).floor() as usize).collect();
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - counts[a] as f64;
        let fb = raw[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    PerLevel {
        low: counts[0],
        medium: counts[1],
        high: counts[2],
    }
}

fn check_mix(mix: &PerLevel<f64>) -> Result<()> {
    let parts = [mix.low, mix.medium, mix.high];
    if parts.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(Error::InvalidMix(format!("negative or non-finite share in {parts:?}")));
    }
    let total: f64 = parts.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidMix(format!("shares sum to {total}, not 1")));
    }
    Ok(())
}

fn runs(order: [MoistureLevel; 3], counts: &PerLevel<usize>) -> Vec<MoistureLevel> {
    order.iter().flat_map(|&l| std::iter::repeat(l).take(counts[l])).collect()
}

pub fn make_bale_sequence(pattern: Pattern, mix: PerLevel<f64>, horizon: usize, rng: &mut impl Rng) -> Result<BaleSequence> {
    use MoistureLevel::*;
    let (levels, mix) = match pattern {
        Pattern::Uniform(level) => {
            let mut m = PerLevel::uniform(0.0);
            m[level] = 1.0;
            (vec![level; horizon], m)
        }
        Pattern::Long => {
            check_mix(&mix)?;
            (runs([High, Medium, Low], &apportion(&mix, horizon)), mix)
        }
        Pattern::Short => {
            check_mix(&mix)?;
            let block = runs([Low, Medium, High], &apportion(&mix, SHORT_BLOCK));
            (block.iter().copied().cycle().take(horizon).collect(), mix)
        }
        Pattern::Random => {
            check_mix(&mix)?;
            let bales = horizon.div_ceil(BALE_PERIODS);
            let mut order = runs([Low, Medium, High], &apportion(&mix, bales));
            order.shuffle(rng);
            let levels = order
                .iter()
                .flat_map(|&l| std::iter::repeat(l).take(BALE_PERIODS))
                .take(horizon)
                .collect();
            (levels, mix)
        }
    };
    Ok(BaleSequence { levels, pattern, mix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mix() -> PerLevel<f64> {
        PerLevel { low: 0.6, medium: 0.1, high: 0.3 }
    }

    #[test]
    fn long_runs_high_to_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = make_bale_sequence(Pattern::Long, mix(), 10, &mut rng).unwrap();
        assert_eq!(s.symbols(), "HHHMLLLLLL");
    }

    #[test]
    fn uniform_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = make_bale_sequence(Pattern::Uniform(MoistureLevel::Low), mix(), 5, &mut rng).unwrap();
        assert_eq!(s.symbols(), "LLLLL");
    }

    #[test]
    fn short_repeats_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = make_bale_sequence(Pattern::Short, mix(), 20, &mut rng).unwrap();
        assert_eq!(s.symbols(), "LLLLLLMHHHLLLLLLMHHH");
    }

    #[test]
    fn random_keeps_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = make_bale_sequence(Pattern::Random, mix(), 100, &mut rng).unwrap();
        let count = |l| s.levels.iter().filter(|&&x| x == l).count();
        assert_eq!(count(MoistureLevel::Low), 60);
        assert_eq!(count(MoistureLevel::Medium), 10);
        assert_eq!(count(MoistureLevel::High), 30);
        assert_ne!(s.symbols(), make_bale_sequence(Pattern::Long, mix(), 100, &mut rng).unwrap().symbols());
    }

    #[test]
    fn bad_mix_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = PerLevel { low: 0.6, medium: 0.1, high: 0.2 };
        assert!(matches!(make_bale_sequence(Pattern::Long, bad, 10, &mut rng), Err(Error::InvalidMix(_))));
    }
}
