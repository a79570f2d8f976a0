//! Random-testing equivalence oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Teacher, TeacherError};
use crate::pdfa::{Pdfa, Token};
use crate::ConfigError;

/// Test-string distribution and acceptance threshold of the equivalence
/// oracle. Tokens are uniform; after each token the string continues with
/// probability `p_cont`, up to `max_len` tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    pub n_samples: usize,
    pub p_cont: f64,
    pub max_len: usize,
    pub seed: u64,
    pub mu: f64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        EquivalenceConfig {
            n_samples: 10_000,
            p_cont: 0.9,
            max_len: 50,
            seed: 0,
            mu: 1e-4,
        }
    }
}

impl EquivalenceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_samples == 0 {
            return Err(ConfigError::new("equivalence sample count must be at least 1"));
        }
        if !(self.p_cont > 0.0 && self.p_cont < 1.0) {
            return Err(ConfigError::new(format!(
                "continuation probability {} must lie in (0, 1)",
                self.p_cont
            )));
        }
        if self.max_len == 0 {
            return Err(ConfigError::new("maximum test string length must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(ConfigError::new(format!("mu {} must lie in [0, 1)", self.mu)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Equivalent,
    Counterexample(Vec<Token>),
}

/// Draws one test string over an alphabet of `alphabet_size` tokens. The
/// empty string is a possible outcome.
pub fn sample_test_string<R: Rng + ?Sized>(
    cfg: &EquivalenceConfig,
    alphabet_size: usize,
    rng: &mut R,
) -> Vec<Token> {
    let mut x = Vec::new();
    if alphabet_size == 0 {
        return x;
    }
    while x.len() < cfg.max_len && rng.random_bool(cfg.p_cont) {
        x.push(Token::from(rng.random_range(0..alphabet_size)));
    }
    x
}

/// Compares `hypothesis` with the teacher on up to `cfg.n_samples` random
/// strings and returns the first string whose probabilities differ by more
/// than `cfg.mu`.
pub fn equivalence_query<T, R>(
    hypothesis: &Pdfa,
    teacher: &mut T,
    cfg: &EquivalenceConfig,
    rng: &mut R,
) -> Result<Verdict, TeacherError>
where
    T: Teacher + ?Sized,
    R: Rng + ?Sized,
{
    let k = teacher.alphabet_size();
    for _ in 0..cfg.n_samples {
        let x = sample_test_string(cfg, k, rng);
        let truth = teacher.string_prob(&x)?;
        // tokens beyond the hypothesis alphabet are never generated by it
        let predicted = hypothesis.eval_string_prob(&x).unwrap_or(0.0);
        if (truth - predicted).abs() > cfg.mu {
            return Ok(Verdict::Counterexample(x));
        }
    }
    Ok(Verdict::Equivalent)
}

/// [`equivalence_query`] with a fresh generator seeded from `cfg.seed`.
pub fn equivalence_query_seeded<T: Teacher + ?Sized>(
    hypothesis: &Pdfa,
    teacher: &mut T,
    cfg: &EquivalenceConfig,
) -> Result<Verdict, TeacherError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    equivalence_query(hypothesis, teacher, cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdfa::tests::three_state;
    use crate::pdfa::PdfaBuilder;
    use crate::teacher::ExactTeacher;

    #[test]
    fn defaults() {
        let cfg = EquivalenceConfig::default();
        assert_eq!(cfg.n_samples, 10_000);
        assert_eq!(cfg.p_cont, 0.9);
        assert_eq!(cfg.max_len, 50);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = EquivalenceConfig::default();
        for bad in [
            EquivalenceConfig { n_samples: 0, ..base.clone() },
            EquivalenceConfig { p_cont: 0.0, ..base.clone() },
            EquivalenceConfig { p_cont: 1.0, ..base.clone() },
            EquivalenceConfig { max_len: 0, ..base.clone() },
            EquivalenceConfig { mu: 1.0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn tiny_continuation_gives_empty_strings() {
        let cfg = EquivalenceConfig { p_cont: 1e-12, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(sample_test_string(&cfg, 4, &mut rng).is_empty());
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = EquivalenceConfig::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_test_string(&cfg, 3, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn mean_length_follows_geometric_law() {
        let cfg = EquivalenceConfig { p_cont: 0.9, max_len: 1000, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let total: usize = (0..n).map(|_| sample_test_string(&cfg, 2, &mut rng).len()).sum();
        let mean = total as f64 / n as f64;
        let expected = 0.9 / 0.1;
        assert!((mean - expected).abs() / expected < 0.05, "mean {mean}");
    }

    #[test]
    fn length_cap_is_respected() {
        let cfg = EquivalenceConfig { p_cont: 0.99, max_len: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| sample_test_string(&cfg, 2, &mut rng).len() <= 5));
    }

    #[test]
    fn identical_hypothesis_is_equivalent() {
        let mut t = ExactTeacher::new(three_state());
        let verdict = equivalence_query_seeded(&three_state(), &mut t, &EquivalenceConfig::default());
        assert_eq!(verdict.unwrap(), Verdict::Equivalent);
    }

    #[test]
    fn perturbed_stop_probability_is_caught() {
        // q0 stops with 0.11 instead of 0.1, transitions rescaled to keep mass 1
        let scale = 0.89 / 0.9;
        let h = PdfaBuilder::new(3, vec!["a".into(), "b".into()])
            .stop(0, 0.11)
            .edge(0, Token(0), 0, 0.3 * scale)
            .edge(0, Token(1), 1, 0.6 * scale)
            .stop(1, 0.3)
            .edge(1, Token(0), 0, 0.2)
            .edge(1, Token(1), 2, 0.5)
            .stop(2, 0.1)
            .edge(2, Token(0), 2, 0.2)
            .edge(2, Token(1), 2, 0.7)
            .build()
            .unwrap();
        let mut t = ExactTeacher::new(three_state());
        let cfg = EquivalenceConfig { seed: 1, ..Default::default() };
        match equivalence_query_seeded(&h, &mut t, &cfg).unwrap() {
            Verdict::Counterexample(x) => {
                let diff = (three_state().eval_string_prob(&x).unwrap() - h.eval_string_prob(&x).unwrap()).abs();
                assert!(diff > cfg.mu);
            }
            Verdict::Equivalent => panic!("perturbation not detected"),
        }
    }
}
