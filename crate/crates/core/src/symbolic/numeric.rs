//! Scalar-to-number normalization for the aggregate primitives.
//!
//! Financial tables render numbers with thousands separators, unit marks, and
//! accounting negatives: `16,635`, `12.38¢`, `(4.5)`. Aggregates need the
//! underlying number, so normalization peels those decorations off.
//! Everything that still isn't a number maps to `None` — never an error — so a
//! stray text cell inside a numeric column degrades to one skipped entry
//! instead of poisoning the whole aggregate.

/// Deterministic, total scalar → number rules. The unit token set always
/// contains the defaults (`¢`, `%`, `$`) and can be extended per deployment.
#[derive(Debug, Clone)]
pub struct NumericNormalizer {
    units: Vec<String>,
}

impl Default for NumericNormalizer {
    fn default() -> Self {
        NumericNormalizer { units: vec!["¢".into(), "%".into(), "$".into()] }
    }
}

impl NumericNormalizer {
    /// Default rules plus extra unit tokens to strip (e.g. `"kg"`, `"€"`).
    pub fn with_extra_units(units: impl IntoIterator<Item = String>) -> Self {
        let mut n = NumericNormalizer::default();
        n.units.extend(units);
        n
    }

    /// `"(4.5)"` → `-4.5`; `"12.38¢"` → `12.38`; `"16,635"` → `16635`;
    /// anything that still isn't a number → `None`.
    ///
    /// Unit marks and accounting parentheses can wrap the digits in either
    /// order (`$(1,234)`, `(12.38¢)`), so both are peeled to a fixpoint
    /// before the comma strip and the final parse.
    pub fn parse(&self, text: &str) -> Option<f64> {
        let mut s = text.trim();
        let mut negated = false;
        loop {
            let before = s;
            s = self.strip_units(s);
            if s.len() >= 2 && s.starts_with('(') && s.ends_with(')') {
                s = s[1..s.len() - 1].trim();
                negated = !negated;
            }
            if s == before {
                break;
            }
        }
        let cleaned = s.replace(',', "");
        if cleaned.trim().is_empty() {
            return None;
        }
        let n: f64 = cleaned.trim().parse().ok()?;
        Some(if negated { -n } else { n })
    }

    fn strip_units<'a>(&self, mut s: &'a str) -> &'a str {
        loop {
            let before = s;
            for unit in &self.units {
                s = s.strip_prefix(unit.as_str()).unwrap_or(s).trim();
                s = s.strip_suffix(unit.as_str()).unwrap_or(s).trim();
            }
            if s == before {
                return s;
            }
        }
    }
}
