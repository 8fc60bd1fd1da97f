use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided 99% quantile of the standard normal.
pub const Z_99: f64 = 2.5758293035489004;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    #[default]
    Normal,
    StudentT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: f64,
    pub ci99_low: f64,
    pub ci99_high: f64,
    pub min: f64,
    pub max: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Mean, deviation and 99% interval of `xs`. Panics on an empty slice.
pub fn summarize(xs: &[f64], method: CiMethod) -> Summary {
    assert!(!xs.is_empty(), "no samples");
    let n = xs.len();
    let m = mean(xs);
    let sd = std_dev(xs);
    let q = match method {
        CiMethod::Normal => Z_99,
        CiMethod::StudentT if n >= 2 => {
            StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom").inverse_cdf(0.995)
        }
        CiMethod::StudentT => f64::NAN,
    };
    let half = q * sd / (n as f64).sqrt();
    Summary {
        n,
        mean: m,
        std_dev: sd,
        ci99_low: m - half,
        ci99_high: m + half,
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_have_zero_width() {
        let s = summarize(&[4.0, 4.0], CiMethod::Normal);
        assert_eq!((s.std_dev, s.ci99_low, s.ci99_high), (0.0, 4.0, 4.0));
    }

    #[test]
    fn student_t_is_wider_than_normal() {
        let xs = [1.0, 2.0, 4.0];
        let n = summarize(&xs, CiMethod::Normal);
        let t = summarize(&xs, CiMethod::StudentT);
        assert!(t.ci99_high - t.ci99_low > n.ci99_high - n.ci99_low);
        // t quantile for 2 degrees of freedom at 0.995
        let half = (t.ci99_high - t.ci99_low) / 2.0;
        assert!((half / (n.std_dev / 3f64.sqrt()) - 9.924843200918).abs() < 1e-6);
    }

    #[test]
    fn single_sample_has_undefined_deviation() {
        assert!(summarize(&[1.0], CiMethod::Normal).std_dev.is_nan());
    }
}
