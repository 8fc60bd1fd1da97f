use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::NodeId;

/// Non-negative exact fraction. Size laws multiply by it and floor, so it is
/// kept rational to avoid `0.2 * n` landing one byte short.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: u64,
    den: u64,
}

impl Rational {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den).max(1);
        Self { num: num / g, den: den / g }
    }

    pub fn integer(n: u64) -> Self {
        Self { num: n, den: 1 }
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    /// floor(self * n)
    pub fn floor_mul(&self, n: u64) -> u64 {
        let v = n as u128 * self.num as u128 / self.den as u128;
        u64::try_from(v).unwrap_or(u64::MAX)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn mul(&self, other: &Rational) -> Rational {
        let a = Rational::new(self.num, other.den);
        let b = Rational::new(other.num, self.den);
        Rational::new(a.num * b.num, a.den * b.den)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid ratio `{0}`")]
pub struct ParseRationalError(String);

impl FromStr for Rational {
    type Err = ParseRationalError;

    /// Accepts `a/b` or a plain decimal like `1.2` or `0.175`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseRationalError(s.to_owned());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| err())?;
            let d: u64 = d.trim().parse().map_err(|_| err())?;
            if d == 0 {
                return Err(err());
            }
            return Ok(Rational::new(n, d));
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() || frac.len() > 18 {
            return Err(err());
        }
        let digits = format!("{int}{frac}");
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let num: u64 = digits.parse().map_err(|_| err())?;
        Ok(Rational::new(num, 10u64.pow(frac.len() as u32)))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(n) => return Ok(Rational::integer(n)),
            // shortest round-trip formatting recovers the literal the user wrote
            Raw::Float(f) if f >= 0.0 && f.is_finite() => format!("{f}"),
            Raw::Float(f) => return Err(serde::de::Error::custom(format!("invalid ratio {f}"))),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Output-size law of a service operation. Sizes only; content is never inspected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    Ratio { ratio: Rational },
    Identity,
    Constant { constant_bytes: u64 },
    RatioOfConcat { ratio: Rational },
}

impl TransformSpec {
    pub fn ratio(num: u64, den: u64) -> Self {
        Self::Ratio { ratio: Rational::new(num, den) }
    }

    pub fn ratio_of_concat(num: u64, den: u64) -> Self {
        Self::RatioOfConcat { ratio: Rational::new(num, den) }
    }

    pub fn output_size(&self, total_input: u64) -> u64 {
        match self {
            Self::Ratio { ratio } | Self::RatioOfConcat { ratio } => ratio.floor_mul(total_input),
            Self::Identity => total_input,
            Self::Constant { constant_bytes } => *constant_bytes,
        }
    }
}

pub const BYTES_TYPE: &str = "byte[]";

/// One operation of a service: its name, how many data parameters it takes,
/// and its size law.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationSpec {
    pub name: String,
    pub arity: usize,
    /// When set, `arity` is a minimum and any larger count is accepted.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub variadic: bool,
    pub transform: TransformSpec,
}

impl OperationSpec {
    pub fn new(name: impl Into<String>, arity: usize, transform: TransformSpec) -> Self {
        Self { name: name.into(), arity, variadic: false, transform }
    }

    pub fn variadic(name: impl Into<String>, min_arity: usize, transform: TransformSpec) -> Self {
        Self { name: name.into(), arity: min_arity, variadic: true, transform }
    }

    pub fn accepts(&self, n: usize) -> bool {
        if self.variadic {
            n >= self.arity
        } else {
            n == self.arity
        }
    }

    pub fn parameter_types(&self) -> Vec<String> {
        let mut types = vec![BYTES_TYPE.to_owned(); self.arity];
        if self.variadic {
            types.push(format!("{BYTES_TYPE}..."));
        }
        types
    }

    pub fn return_type(&self) -> &'static str {
        BYTES_TYPE
    }

    fn arity_text(&self) -> String {
        if self.variadic {
            format!("at least {}", self.arity)
        } else {
            self.arity.to_string()
        }
    }

    pub fn check_arity(&self, n: usize) -> Result<(), String> {
        if self.accepts(n) {
            Ok(())
        } else {
            Err(format!("operation `{}` takes {} parameters, got {n}", self.name, self.arity_text()))
        }
    }
}

/// Registry entry for a service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub service_id: String,
    pub host_node: NodeId,
    pub operations: Vec<OperationSpec>,
}

impl ServiceSpec {
    pub fn new(service_id: impl Into<String>, host_node: impl Into<NodeId>, operations: Vec<OperationSpec>) -> Self {
        Self { service_id: service_id.into(), host_node: host_node.into(), operations }
    }

    pub fn operation(&self, name: &str) -> Option<&OperationSpec> {
        self.operations.iter().find(|o| o.name == name)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.service_id.is_empty() {
            return Err("empty service id".into());
        }
        let mut seen = BTreeSet::new();
        for op in &self.operations {
            if !seen.insert(op.name.as_str()) {
                return Err(format!("service `{}` declares operation `{}` twice", self.service_id, op.name));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_ratios_are_exact() {
        let r: Rational = "1.2".parse().unwrap();
        assert_eq!((r.numer(), r.denom()), (6, 5));
        assert_eq!(r.floor_mul(1_000_000), 1_200_000);
        let r: Rational = "0.175".parse().unwrap();
        assert_eq!((r.numer(), r.denom()), (7, 40));
        assert_eq!("1/3".parse::<Rational>().unwrap(), Rational::new(1, 3));
        assert!("1/0".parse::<Rational>().is_err());
        assert!("-1".parse::<Rational>().is_err());
        assert!("abc".parse::<Rational>().is_err());
    }

    #[test]
    fn five_megabytes_grow_to_six() {
        let grow = TransformSpec::ratio(6, 5);
        assert_eq!(grow.output_size(5_000_000), 6_000_000);
    }

    #[test]
    fn transform_laws() {
        assert_eq!(TransformSpec::Identity.output_size(1234), 1234);
        assert_eq!(TransformSpec::Constant { constant_bytes: 9 }.output_size(1234), 9);
        // 0.2 x 12 MB
        assert_eq!(TransformSpec::ratio_of_concat(1, 5).output_size(12_000_000), 2_400_000);
        assert_eq!(TransformSpec::ratio_of_concat(1, 3).output_size(10), 3);
    }

    #[test]
    fn transform_deserializes_from_float_literal() {
        let t: TransformSpec = toml::from_str("kind = \"ratio\"\nratio = 1.2").unwrap();
        assert_eq!(t, TransformSpec::ratio(6, 5));
        let t: TransformSpec = toml::from_str("kind = \"ratio_of_concat\"\nratio = \"1/3\"").unwrap();
        assert_eq!(t, TransformSpec::ratio_of_concat(1, 3));
    }

    #[test]
    fn duplicate_operation_names_rejected() {
        let spec = ServiceSpec::new(
            "s",
            "h",
            vec![
                OperationSpec::new("a", 1, TransformSpec::Identity),
                OperationSpec::new("a", 2, TransformSpec::Identity),
            ],
        );
        assert!(spec.check().is_err());
    }

    #[test]
    fn variadic_arity() {
        let op = OperationSpec::variadic("c", 2, TransformSpec::Identity);
        assert!(!op.accepts(1));
        assert!(op.accepts(2) && op.accepts(17));
        assert_eq!(op.parameter_types(), vec!["byte[]", "byte[]", "byte[]..."]);
    }
}
