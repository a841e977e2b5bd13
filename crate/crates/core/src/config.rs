//! TOML game descriptions.
//!
//! ```toml
//! types = ["L", "H"]
//! prior = ["1/2", "1/2"]          # array aligned with `types`, or a table keyed by label
//! alloc = { L = 50, H = 105 }
//! audit_cost = 25
//! fine = 100
//! budget = 10                     # optional
//! num_users = 1                   # optional, default 1
//! coalition_size = 1              # optional, default 1
//! mode = "rational"               # optional: rational | float
//! ```
//!
//! Numbers may be integers, decimals or `"p/q"` strings; decimals are read exactly.

use std::fmt;
use std::str::FromStr;

use toml::Value;

use crate::error::{GameError, Result};
use crate::game::GameConfig;
use crate::scalar::{parse_rational, Rational, Scalar};

/// Which arithmetic backend evaluates a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumericMode {
    #[default]
    Rational,
    Float,
}

impl FromStr for NumericMode {
    type Err = GameError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rational" | "exact" => Ok(NumericMode::Rational),
            "float" | "f64" => Ok(NumericMode::Float),
            other => Err(GameError::Input(format!(
                "unknown numeric mode `{other}` (expected rational or float)"
            ))),
        }
    }
}

impl fmt::Display for NumericMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NumericMode::Rational => "rational",
            NumericMode::Float => "float",
        })
    }
}

/// A parsed config document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub game: GameConfig<Rational>,
    pub mode: Option<NumericMode>,
}

const KNOWN_KEYS: &[&str] = &[
    "types",
    "prior",
    "alloc",
    "audit_cost",
    "fine",
    "budget",
    "num_users",
    "coalition_size",
    "mode",
];

/// Reads a TOML number, decimal string or `p/q` string exactly.
pub fn number_from_value(key: &str, v: &Value) -> Result<Rational> {
    match v {
        Value::Integer(i) => Ok(Rational::from_integer((*i).into())),
        Value::Float(f) => {
            if !f.is_finite() {
                return Err(GameError::Input(format!("`{key}` must be finite")));
            }
            parse_rational(&format!("{f:e}"))
        }
        Value::String(s) => parse_rational(s)
            .map_err(|e| GameError::Input(format!("`{key}`: {e}"))),
        other => Err(GameError::Input(format!(
            "`{key}` must be a number or a \"p/q\" string, found {}",
            other.type_str()
        ))),
    }
}

fn per_type(key: &str, v: &Value, types: &[String]) -> Result<Vec<Rational>> {
    match v {
        Value::Array(items) => {
            if items.len() != types.len() {
                return Err(GameError::Input(format!(
                    "`{key}` has {} entries but there are {} types",
                    items.len(),
                    types.len()
                )));
            }
            items
                .iter()
                .enumerate()
                .map(|(i, x)| number_from_value(&format!("{key}[{i}]"), x))
                .collect()
        }
        Value::Table(t) => {
            if let Some(extra) = t.keys().find(|k| !types.contains(k)) {
                return Err(GameError::UnknownType(extra.clone()));
            }
            types
                .iter()
                .map(|label| {
                    let x = t.get(label).ok_or_else(|| {
                        GameError::Input(format!("`{key}` is missing type `{label}`"))
                    })?;
                    number_from_value(&format!("{key}.{label}"), x)
                })
                .collect()
        }
        other => Err(GameError::Input(format!(
            "`{key}` must be an array or a table, found {}",
            other.type_str()
        ))),
    }
}

fn positive_int(key: &str, v: Option<&Value>) -> Result<usize> {
    match v {
        None => Ok(1),
        Some(Value::Integer(i)) if *i >= 1 => Ok(*i as usize),
        Some(_) => Err(GameError::Input(format!("`{key}` must be a positive integer"))),
    }
}

/// Parses a config document.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let doc: toml::Table = text
        .parse()
        .map_err(|e| GameError::Input(format!("config is not valid TOML: {e}")))?;
    if let Some(k) = doc.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(GameError::Input(format!("unknown config key `{k}`")));
    }
    let get = |k: &str| {
        doc.get(k)
            .ok_or_else(|| GameError::Input(format!("config is missing `{k}`")))
    };
    let types: Vec<String> = match get("types")? {
        Value::Array(items) => items
            .iter()
            .map(|x| match x {
                Value::String(s) => Ok(s.clone()),
                _ => Err(GameError::Input("`types` must be an array of strings".into())),
            })
            .collect::<Result<_>>()?,
        _ => return Err(GameError::Input("`types` must be an array of strings".into())),
    };
    let prior = per_type("prior", get("prior")?, &types)?;
    let alloc = per_type("alloc", get("alloc")?, &types)?;
    let audit_cost = number_from_value("audit_cost", get("audit_cost")?)?;
    let fine = number_from_value("fine", get("fine")?)?;
    let budget = doc
        .get("budget")
        .map(|v| number_from_value("budget", v))
        .transpose()?;
    let num_users = positive_int("num_users", doc.get("num_users"))?;
    let coalition_size = positive_int("coalition_size", doc.get("coalition_size"))?;
    let mode = match doc.get("mode") {
        None => None,
        Some(Value::String(s)) => Some(s.parse()?),
        Some(_) => return Err(GameError::Input("`mode` must be a string".into())),
    };
    let game = GameConfig::new(types, prior, alloc, audit_cost, fine)?
        .with_budget(budget)?
        .with_population(num_users, coalition_size)?;
    Ok(ConfigFile { game, mode })
}

/// Renders a config back to the document format, numbers as exact strings.
pub fn write_config(cfg: &GameConfig<Rational>, mode: Option<NumericMode>) -> String {
    let quote = |x: &Rational| format!("\"{}\"", x.render());
    let list = |xs: &[Rational]| xs.iter().map(quote).collect::<Vec<_>>().join(", ");
    let mut out = String::new();
    let labels: Vec<String> = cfg.types().iter().map(|t| format!("{t:?}")).collect();
    out.push_str(&format!("types = [{}]\n", labels.join(", ")));
    out.push_str(&format!("prior = [{}]\n", list(cfg.prior())));
    out.push_str(&format!("alloc = [{}]\n", list(cfg.alloc())));
    out.push_str(&format!("audit_cost = {}\n", quote(cfg.audit_cost())));
    out.push_str(&format!("fine = {}\n", quote(cfg.fine())));
    if let Some(b) = cfg.budget() {
        out.push_str(&format!("budget = {}\n", quote(b)));
    }
    out.push_str(&format!("num_users = {}\n", cfg.num_users()));
    out.push_str(&format!("coalition_size = {}\n", cfg.coalition_size()));
    if let Some(m) = mode {
        out.push_str(&format!("mode = \"{m}\"\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG_A: &str = r#"
types = ["L", "H"]
prior = [0.5, "1/2"]
alloc = { L = 50, H = 105 }
audit_cost = 25
fine = 100.0
"#;

    #[test]
    fn parses_mixed_number_forms() {
        let c = parse_config(CFG_A).unwrap();
        assert_eq!(c.game.prior(), &[Rational::ratio(1, 2), Rational::ratio(1, 2)]);
        assert_eq!(c.game.alloc(), &[Rational::from_i64(50), Rational::from_i64(105)]);
        assert_eq!(c.game.fine(), &Rational::from_i64(100));
        assert_eq!(c.game.budget(), None);
        assert_eq!(c.game.num_users(), 1);
        assert_eq!(c.mode, None);
    }

    #[test]
    fn decimals_are_exact() {
        let text = CFG_A.replace("prior = [0.5, \"1/2\"]", "prior = [0.1, 0.9]") + "budget = 7.165\n";
        let c = parse_config(&text).unwrap();
        assert_eq!(c.game.prior()[0], Rational::ratio(1, 10));
        assert_eq!(c.game.budget(), Some(&Rational::ratio(7165, 1000)));
    }

    #[test]
    fn round_trips_through_writer() {
        let text = CFG_A.to_string() + "budget = \"20\"\nnum_users = 2\ncoalition_size = 2\nmode = \"float\"\n";
        let c = parse_config(&text).unwrap();
        let again = parse_config(&write_config(&c.game, c.mode)).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(parse_config("types = [\"L\"]").is_err());
        assert!(parse_config(&CFG_A.replace("fine = 100.0", "fine = 10")).is_err());
        assert!(parse_config(&(CFG_A.to_string() + "bogus = 1\n")).is_err());
        assert!(matches!(
            parse_config(&CFG_A.replace("H = 105", "X = 105")),
            Err(GameError::UnknownType(_))
        ));
        assert!(parse_config(&CFG_A.replace("\"1/2\"", "\"half\"")).is_err());
        assert!(parse_config(&(CFG_A.to_string() + "mode = \"decimal\"\n")).is_err());
        assert!(parse_config(&(CFG_A.to_string() + "num_users = 0\n")).is_err());
    }
}
