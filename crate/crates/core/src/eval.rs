//! Test sets and error metrics of a hypothesis against a reference.

use std::path::Path;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pdfa::{Pdfa, Token};
use crate::teacher::{sample_test_string, EquivalenceConfig, Teacher, TeacherError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read test set: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}

/// Strings to evaluate, optionally with reference probabilities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TestSet {
    pub alphabet_size: usize,
    pub strings: Vec<Vec<Token>>,
    /// One entry per string when present.
    pub references: Option<Vec<f64>>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    /// `n` strings drawn from the equivalence oracle's length law.
    pub fn sample(cfg: &EquivalenceConfig, alphabet_size: usize, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TestSet {
            alphabet_size,
            strings: (0..n).map(|_| sample_test_string(cfg, alphabet_size, &mut rng)).collect(),
            references: None,
        }
    }
}

/// Parses the whitespace format: a header `N K`, then `N` lines
/// `len t0 ... t{len-1}` with an optional trailing probability.
pub fn parse_test_set(text: &str) -> Result<TestSet, EvalError> {
    let err = |line: usize, message: String| EvalError::Parse { line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let [n, k] = head[..] else {
        return Err(err(hline, format!("expected header `N K`, got {header:?}")));
    };
    let n: usize = n.parse().map_err(|_| err(hline, format!("bad string count {n:?}")))?;
    let k: usize = k.parse().map_err(|_| err(hline, format!("bad alphabet size {k:?}")))?;

    let mut strings = Vec::with_capacity(n);
    let mut refs = Vec::with_capacity(n);
    let mut last_line = hline;
    for (line, body) in lines {
        last_line = line;
        if strings.len() == n {
            return Err(err(line, format!("more than the {n} strings announced in the header")));
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        let len: usize = fields[0]
            .parse()
            .map_err(|_| err(line, format!("bad length {:?}", fields[0])))?;
        let rest = &fields[1..];
        let (toks, prob) = if rest.len() == len {
            (rest, None)
        } else if rest.len() == len + 1 {
            (&rest[..len], Some(rest[len]))
        } else {
            return Err(err(line, format!("length {len} does not match {} tokens", rest.len())));
        };
        let mut x = Vec::with_capacity(len);
        for t in toks {
            let id: u32 = t.parse().map_err(|_| err(line, format!("bad token {t:?}")))?;
            if id as usize >= k {
                return Err(err(line, format!("token {id} outside alphabet of size {k}")));
            }
            x.push(Token(id));
        }
        if let Some(p) = prob {
            let p: f64 = p.parse().map_err(|_| err(line, format!("bad probability {p:?}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(err(line, format!("probability {p} outside [0, 1]")));
            }
            refs.push(Some(p));
        } else {
            refs.push(None);
        }
        strings.push(x);
    }
    if strings.len() != n {
        return Err(err(
            last_line,
            format!("header announces {n} strings, found {}", strings.len()),
        ));
    }
    let references = match refs.iter().filter(|r| r.is_some()).count() {
        0 => None,
        c if c == n => Some(refs.into_iter().map(Option::unwrap).collect()),
        _ => return Err(err(hline, "reference probabilities given for only some strings".into())),
    };
    Ok(TestSet {
        alphabet_size: k,
        strings,
        references,
    })
}

pub fn read_test_set(path: &Path) -> Result<TestSet, EvalError> {
    parse_test_set(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse: f64,
    pub max_abs_err: f64,
    pub n_strings: usize,
    pub hypothesis_states: usize,
    /// Strings with a token outside the hypothesis alphabet, scored as 0.
    pub out_of_alphabet: usize,
}

/// Compares the hypothesis with `truth` on every string.
pub fn evaluate<F>(hypothesis: &Pdfa, strings: &[Vec<Token>], mut truth: F) -> Result<EvalReport, EvalError>
where
    F: FnMut(usize, &[Token]) -> Result<f64, EvalError>,
{
    let mut sq = 0.0;
    let mut max_abs_err = 0.0f64;
    let mut out_of_alphabet = 0;
    for (i, x) in strings.iter().enumerate() {
        let p = truth(i, x)?;
        let h = match hypothesis.eval_string_prob(x) {
            Ok(h) => h,
            Err(_) => {
                out_of_alphabet += 1;
                0.0
            }
        };
        let e = (p - h).abs();
        sq += e * e;
        max_abs_err = max_abs_err.max(e);
    }
    if out_of_alphabet > 0 {
        warn!("{out_of_alphabet} strings use tokens outside the hypothesis alphabet");
    }
    Ok(EvalReport {
        mse: if strings.is_empty() { 0.0 } else { sq / strings.len() as f64 },
        max_abs_err,
        n_strings: strings.len(),
        hypothesis_states: hypothesis.n_states(),
        out_of_alphabet,
    })
}

pub fn evaluate_against_teacher<T: Teacher + ?Sized>(
    hypothesis: &Pdfa,
    strings: &[Vec<Token>],
    teacher: &mut T,
) -> Result<EvalReport, EvalError> {
    evaluate(hypothesis, strings, |_, x| Ok(teacher.string_prob(x)?))
}

pub fn evaluate_against_references(hypothesis: &Pdfa, strings: &[Vec<Token>], references: &[f64]) -> Result<EvalReport, EvalError> {
    evaluate(hypothesis, strings, |i, _| Ok(references[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdfa::tests::three_state;
    use crate::pdfa::tokens;
    use crate::teacher::ExactTeacher;

    fn parse_error_line(text: &str) -> usize {
        match parse_test_set(text) {
            Err(EvalError::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parses_plain_set() {
        let t = parse_test_set("2 2\n0\n2 0 1\n").unwrap();
        assert_eq!(t.strings, vec![vec![], tokens(&[0, 1])]);
        assert_eq!(t.alphabet_size, 2);
        assert!(t.references.is_none());
    }

    #[test]
    fn parses_references() {
        let t = parse_test_set("2 3\n0 0.1\n1 2 0.25\n").unwrap();
        assert_eq!(t.strings, vec![vec![], tokens(&[2])]);
        assert_eq!(t.references, Some(vec![0.1, 0.25]));
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert_eq!(parse_error_line("1 2\n3 0 1\n"), 2);
        assert_eq!(parse_error_line("2 2\n1 0\n1 2\n"), 3);
        assert_eq!(parse_error_line("3 2\n1 0\n1 1\n"), 3);
        assert_eq!(parse_error_line("1 2\n1 0\n1 1\n"), 3);
        assert_eq!(parse_error_line("1 2\n1 0 1.5\n"), 2);
        assert_eq!(parse_error_line("1\n"), 1);
        assert_eq!(parse_error_line("1 2\nx\n"), 2);
    }

    #[test]
    fn identical_hypothesis_scores_zero() {
        let set = TestSet::sample(&EquivalenceConfig::default(), 2, 200, 1);
        let r = evaluate_against_teacher(&three_state(), &set.strings, &mut ExactTeacher::new(three_state())).unwrap();
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.max_abs_err, 0.0);
        assert_eq!(r.n_strings, 200);
        assert_eq!(r.hypothesis_states, 3);
    }

    #[test]
    fn single_term_square() {
        let h = Pdfa::builder(1, 2)
            .stop(0, 0.11)
            .edge(0, Token(0), 0, 0.445)
            .edge(0, Token(1), 0, 0.445)
            .build()
            .unwrap();
        let r = evaluate_against_references(&h, &[vec![]], &[0.1]).unwrap();
        assert!((r.mse - 1e-4).abs() < 1e-15);
        assert!(r.mse <= r.max_abs_err * r.max_abs_err + 1e-18);
    }

    #[test]
    fn foreign_tokens_score_zero() {
        let one = Pdfa::builder(1, 1).stop(0, 1.0).build().unwrap();
        let r = evaluate_against_references(&one, &[tokens(&[1]), vec![]], &[0.2, 1.0]).unwrap();
        assert_eq!(r.out_of_alphabet, 1);
        assert!((r.mse - 0.02).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = EquivalenceConfig::default();
        assert_eq!(TestSet::sample(&cfg, 3, 50, 9), TestSet::sample(&cfg, 3, 50, 9));
    }
}
