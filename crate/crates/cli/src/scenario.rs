//! Scenario files: TOML on disk, validated into library types.
//!
//! Numeric fields accept TOML numbers or strings (`"3/10"`, `"0.25"`), so an
//! exact run can be described without going through binary floats. Semantic
//! errors carry `file:line:col` of the offending value.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use binfilt::export::{read_random_variable_csv, read_word_table};
use binfilt::{
    BinWord, ClaimKind, FiltMap, FiltrationSchedule, FreeValuePolicy, MarketParams, ProbSequence, RandomVariable, Scalar, Tolerances,
    DEFAULT_T_LIMIT, MAX_T,
};
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Number {
    fn to_scalar<S: Scalar>(&self) -> binfilt::Result<S> {
        match self {
            Number::Int(i) => Ok(S::from_ratio(*i, 1)),
            Number::Float(x) => S::parse_literal(&x.to_string()),
            Number::Text(s) => S::parse_literal(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Float,
    Exact,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    horizon: Spanned<usize>,
    arithmetic: Option<Arithmetic>,
    max_horizon: Option<Spanned<usize>>,
    market: RawMarket,
    probability: RawProbability,
    schedule: RawSchedule,
    claim: Option<RawClaim>,
    #[serde(default)]
    tolerances: RawTolerances,
    free_value: Option<RawFreeValue>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    mu: Spanned<Number>,
    sigma: Spanned<Number>,
    r: Spanned<Number>,
    s0: Spanned<Number>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PValue {
    Constant(Number),
    List(Vec<Number>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbability {
    p: Spanned<PValue>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawStep {
    Kind(String),
    Table(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    kind: Spanned<String>,
    k: Option<Spanned<usize>>,
    k0: Option<Spanned<usize>>,
    k1: Option<Spanned<usize>>,
    steps: Option<Spanned<Vec<RawStep>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClaim {
    kind: Spanned<String>,
    strike: Option<Spanned<Number>>,
    payoff: Option<Spanned<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    null: Option<Spanned<f64>>,
    normalization: Option<Spanned<f64>>,
    equality: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFreeValue {
    policy: Spanned<String>,
    table: Option<Spanned<String>>,
    fallback: Option<Spanned<Number>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: String,
}

/// Free-value choice as given on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FreeValueArg {
    Half,
    Zero,
    One,
    Table(PathBuf),
}

impl std::str::FromStr for FreeValueArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "half" => Ok(FreeValueArg::Half),
            "zero" => Ok(FreeValueArg::Zero),
            "one" => Ok(FreeValueArg::One),
            _ => match s.strip_prefix("table:") {
                Some(path) if !path.is_empty() => Ok(FreeValueArg::Table(PathBuf::from(path))),
                _ => Err(format!("expected half, zero, one or table:PATH, got {s:?}")),
            },
        }
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub exact: bool,
    pub tol: Option<f64>,
    pub free_value: Option<FreeValueArg>,
    pub max_horizon: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum ClaimSpec<S> {
    OnStock(ClaimKind<S>),
    Payoff(RandomVariable<S>),
}

/// A validated scenario in one arithmetic.
#[derive(Debug, Clone)]
pub struct Scenario<S> {
    pub horizon: usize,
    pub params: MarketParams<S>,
    pub p: ProbSequence<S>,
    pub schedule: FiltrationSchedule,
    pub claim: Option<ClaimSpec<S>>,
    pub tol: Tolerances,
    pub policy: FreeValuePolicy<S>,
}

/// A parsed file, not yet bound to an arithmetic.
pub struct ScenarioFile {
    path: PathBuf,
    text: String,
    raw: RawScenario,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read scenario {}", path.display()))?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self> {
        let raw: RawScenario = toml::from_str(&text).map_err(|e| {
            let at = e.span().map(|s| location(path, &text, s.start)).unwrap_or_else(|| path.display().to_string());
            anyhow!("{at}: {}", e.message())
        })?;
        Ok(ScenarioFile { path: path.to_path_buf(), text, raw })
    }

    pub fn arithmetic(&self, overrides: &Overrides) -> Arithmetic {
        if overrides.exact {
            Arithmetic::Exact
        } else {
            self.raw.arithmetic.unwrap_or(Arithmetic::Float)
        }
    }

    /// Output directory from the file, resolved against the scenario's folder.
    pub fn output_dir(&self) -> Option<PathBuf> {
        self.raw.output.as_ref().map(|o| self.resolve(&o.dir))
    }

    fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    fn at(&self, span: Range<usize>) -> String {
        location(&self.path, &self.text, span.start)
    }

    fn number<S: Scalar>(&self, field: &str, n: &Spanned<Number>) -> Result<S> {
        n.get_ref().to_scalar().map_err(|e| anyhow!("{}: {field}: {e}", self.at(n.span())))
    }

    pub fn build<S: Scalar>(&self, overrides: &Overrides) -> Result<Scenario<S>> {
        let raw = &self.raw;
        let limit = match (overrides.max_horizon, &raw.max_horizon) {
            (Some(l), _) => l,
            (None, Some(l)) => *l.get_ref(),
            (None, None) => DEFAULT_T_LIMIT,
        };
        if limit > MAX_T {
            bail!("horizon limit {limit} exceeds the hard ceiling {MAX_T}");
        }
        let horizon = *raw.horizon.get_ref();
        if horizon == 0 || horizon > limit {
            bail!("{}: horizon: must be between 1 and {limit}, got {horizon}", self.at(raw.horizon.span()));
        }

        let params = self.market(&raw.market)?;
        let p = self.probability(horizon)?;
        let schedule = self.schedule(horizon)?;
        let claim = raw.claim.as_ref().map(|c| self.claim(c, horizon)).transpose()?;
        let tol = self.tolerances(overrides.tol)?;
        let policy = self.policy(overrides.free_value.as_ref())?;
        Ok(Scenario { horizon, params, p, schedule, claim, tol, policy })
    }

    fn market<S: Scalar>(&self, m: &RawMarket) -> Result<MarketParams<S>> {
        let mu: S = self.number("market.mu", &m.mu)?;
        let sigma: S = self.number("market.sigma", &m.sigma)?;
        let r: S = self.number("market.r", &m.r)?;
        let s0: S = self.number("market.s0", &m.s0)?;
        if sigma <= S::zero() {
            bail!("{}: market.sigma: must be positive, got {sigma}", self.at(m.sigma.span()));
        }
        if mu <= sigma.clone() - S::one() {
            bail!("{}: market.mu: the down factor 1 + mu - sigma must be positive (mu = {mu}, sigma = {sigma})", self.at(m.mu.span()));
        }
        if r <= -S::one() {
            bail!("{}: market.r: must exceed -1, got {r}", self.at(m.r.span()));
        }
        if s0 <= S::zero() {
            bail!("{}: market.s0: must be positive, got {s0}", self.at(m.s0.span()));
        }
        Ok(MarketParams::new(mu, sigma, r, s0)?)
    }

    fn probability<S: Scalar>(&self, horizon: usize) -> Result<ProbSequence<S>> {
        let spanned = &self.raw.probability.p;
        let at = self.at(spanned.span());
        let parse = |n: &Number| n.to_scalar::<S>().map_err(|e| anyhow!("{at}: probability.p: {e}"));
        let values: Vec<S> = match spanned.get_ref() {
            PValue::Constant(n) => vec![parse(n)?; horizon],
            PValue::List(list) => list.iter().map(parse).collect::<Result<_>>()?,
        };
        if values.len() < horizon {
            bail!("{at}: probability.p: {} entries for horizon {horizon}", values.len());
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < S::zero() || **v > S::one()) {
            bail!("{at}: probability.p: entry {} is {v}, outside [0, 1]", i + 1);
        }
        Ok(ProbSequence::new(values)?)
    }

    fn schedule(&self, horizon: usize) -> Result<FiltrationSchedule> {
        let s = &self.raw.schedule;
        let need = |field: &Option<Spanned<usize>>, name: &str| -> Result<usize> {
            field
                .as_ref()
                .map(|v| *v.get_ref())
                .ok_or_else(|| anyhow!("{}: schedule.{name} is required for this kind", self.at(s.kind.span())))
        };
        let span_of = |field: &Option<Spanned<usize>>| field.as_ref().map(|v| v.span()).unwrap_or(s.kind.span());
        let kind_at = self.at(s.kind.span());
        match s.kind.get_ref().as_str() {
            "classical" => FiltrationSchedule::classical(horizon).map_err(|e| anyhow!("{kind_at}: schedule: {e}")),
            "drop-k" => {
                let k = need(&s.k, "k")?;
                FiltrationSchedule::drop_k(horizon, k).map_err(|e| anyhow!("{}: schedule.k: {e}", self.at(span_of(&s.k))))
            }
            "elderly" => {
                let (k0, k1) = (need(&s.k0, "k0")?, need(&s.k1, "k1")?);
                FiltrationSchedule::elderly(horizon, k0, k1).map_err(|e| anyhow!("{}: schedule.k0/k1: {e}", self.at(span_of(&s.k0))))
            }
            "custom" => {
                let steps = s.steps.as_ref().ok_or_else(|| anyhow!("{kind_at}: schedule.steps is required for kind custom"))?;
                let at = self.at(steps.span());
                if steps.get_ref().len() != horizon {
                    bail!("{at}: schedule.steps: {} steps for horizon {horizon}", steps.get_ref().len());
                }
                let maps = steps
                    .get_ref()
                    .iter()
                    .enumerate()
                    .map(|(n, step)| {
                        match step {
                            RawStep::Kind(k) if k == "full" => FiltMap::full(n),
                            RawStep::Kind(k) if k == "drop" => FiltMap::drop(n),
                            RawStep::Kind(k) => Err(binfilt::Error::InvalidMap(format!("unknown step kind {k:?} (full, drop or a table)"))),
                            RawStep::Table(t) => FiltMap::custom(n, t.clone()),
                        }
                        .map_err(|e| anyhow!("{at}: schedule.steps[{n}]: {e}"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                FiltrationSchedule::custom(maps).map_err(|e| anyhow!("{at}: schedule.steps: {e}"))
            }
            other => bail!("{kind_at}: schedule.kind: unknown kind {other:?} (classical, drop-k, elderly, custom)"),
        }
    }

    fn claim<S: Scalar>(&self, c: &RawClaim, horizon: usize) -> Result<ClaimSpec<S>> {
        let strike = || -> Result<S> {
            let s = c.strike.as_ref().ok_or_else(|| anyhow!("{}: claim.strike is required for this kind", self.at(c.kind.span())))?;
            self.number("claim.strike", s)
        };
        Ok(match c.kind.get_ref().as_str() {
            "call" => ClaimSpec::OnStock(ClaimKind::Call { strike: strike()? }),
            "put" => ClaimSpec::OnStock(ClaimKind::Put { strike: strike()? }),
            "digital" => ClaimSpec::OnStock(ClaimKind::Digital { strike: strike()? }),
            "custom" => {
                let file =
                    c.payoff.as_ref().ok_or_else(|| anyhow!("{}: claim.payoff is required for kind custom", self.at(c.kind.span())))?;
                let path = self.resolve(file.get_ref());
                let input = fs::File::open(&path)
                    .map_err(|e| anyhow!("{}: claim.payoff: cannot open {}: {e}", self.at(file.span()), path.display()))?;
                let payoff = read_random_variable_csv(input, horizon).map_err(|e| anyhow!("{}: {e}", path.display()))?;
                ClaimSpec::Payoff(payoff)
            }
            other => bail!("{}: claim.kind: unknown kind {other:?} (call, put, digital, custom)", self.at(c.kind.span())),
        })
    }

    fn tolerances(&self, equality: Option<f64>) -> Result<Tolerances> {
        let mut tol = Tolerances::default();
        let t = &self.raw.tolerances;
        for (name, field, slot) in [
            ("null", &t.null, &mut tol.null),
            ("normalization", &t.normalization, &mut tol.normalization),
            ("equality", &t.equality, &mut tol.equality),
        ] {
            if let Some(v) = field {
                if !(v.get_ref().is_finite() && *v.get_ref() >= 0.0) {
                    bail!("{}: tolerances.{name}: must be a finite non-negative number", self.at(v.span()));
                }
                *slot = *v.get_ref();
            }
        }
        if let Some(e) = equality {
            if !(e.is_finite() && e >= 0.0) {
                bail!("--tol must be a finite non-negative number, got {e}");
            }
            tol.equality = e;
        }
        Ok(tol)
    }

    fn policy<S: Scalar>(&self, cli: Option<&FreeValueArg>) -> Result<FreeValuePolicy<S>> {
        let fallback = |f: Option<&Spanned<Number>>| -> Result<S> {
            f.map(|n| self.number("free_value.fallback", n)).unwrap_or_else(|| Ok(S::half()))
        };
        let table = |path: &Path, fallback: S| -> Result<FreeValuePolicy<S>> {
            let input = fs::File::open(path).with_context(|| format!("cannot open free-value table {}", path.display()))?;
            let entries: BTreeMap<BinWord, S> = read_word_table(input).map_err(|e| anyhow!("{}: {e}", path.display()))?;
            Ok(FreeValuePolicy::Table { entries, fallback })
        };
        let file = self.raw.free_value.as_ref();
        if let Some(arg) = cli {
            return match arg {
                FreeValueArg::Half => Ok(FreeValuePolicy::Half),
                FreeValueArg::Zero => Ok(FreeValuePolicy::Zero),
                FreeValueArg::One => Ok(FreeValuePolicy::One),
                FreeValueArg::Table(path) => table(path, fallback(file.and_then(|f| f.fallback.as_ref()))?),
            };
        }
        let Some(f) = file else { return Ok(FreeValuePolicy::Half) };
        match f.policy.get_ref().as_str() {
            "half" => Ok(FreeValuePolicy::Half),
            "zero" => Ok(FreeValuePolicy::Zero),
            "one" => Ok(FreeValuePolicy::One),
            "table" => {
                let t = f
                    .table
                    .as_ref()
                    .ok_or_else(|| anyhow!("{}: free_value.table is required for policy table", self.at(f.policy.span())))?;
                table(&self.resolve(t.get_ref()), fallback(f.fallback.as_ref())?)
            }
            other => bail!("{}: free_value.policy: unknown policy {other:?} (half, zero, one, table)", self.at(f.policy.span())),
        }
    }
}

/// `path:line:col` for a byte offset, 1-based.
fn location(path: &Path, text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    format!("{}:{line}:{col}", path.display())
}

#[cfg(test)]
mod tests {
    use super::*;
    use binfilt::Exact;

    const BASE: &str = r#"
horizon = 3
arithmetic = "exact"

[market]
mu = "1/10"
sigma = 0.5
r = 0
s0 = 1

[probability]
p = 0.5

[schedule]
kind = "drop-k"
k = 1
"#;

    fn parse(text: &str) -> Result<ScenarioFile> {
        ScenarioFile::parse(Path::new("s.toml"), text.to_string())
    }

    #[test]
    fn parses_exact_scenario() {
        let file = parse(BASE).unwrap();
        assert_eq!(file.arithmetic(&Overrides::default()), Arithmetic::Exact);
        let s: Scenario<Exact> = file.build(&Overrides::default()).unwrap();
        assert_eq!(s.params.mu, Exact::from_ratio(1, 10));
        assert_eq!(s.params.sigma, Exact::from_ratio(1, 2));
        assert_eq!(s.schedule, FiltrationSchedule::drop_k(3, 1).unwrap());
        assert_eq!(s.p.values().len(), 3);
        assert!(s.claim.is_none());
    }

    #[test]
    fn errors_point_at_the_field() {
        let bad = BASE.replace("sigma = 0.5", "sigma = \"-1/2\"");
        let err = parse(&bad).unwrap().build::<f64>(&Overrides::default()).unwrap_err().to_string();
        assert!(err.starts_with("s.toml:7:9: market.sigma"), "{err}");

        let bad = BASE.replace("k = 1", "k = 3");
        let err = parse(&bad).unwrap().build::<f64>(&Overrides::default()).unwrap_err().to_string();
        assert!(err.starts_with("s.toml:16:5: schedule.k"), "{err}");

        let err = parse(&BASE.replace("horizon = 3", "horizon = \"x\"")).err().unwrap().to_string();
        assert!(err.starts_with("s.toml:2:"), "{err}");

        let err = parse(&format!("{BASE}\nunknown = 1\n")).err().unwrap().to_string();
        assert!(err.contains("unknown"), "{err}");

        let err = parse(&BASE.replace("p = 0.5", "p = [0.5, 2]")).unwrap().build::<f64>(&Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("probability.p"), "{err}");
    }

    #[test]
    fn overrides_take_precedence() {
        let text = BASE.replace("arithmetic = \"exact\"\n", "");
        let file = parse(&text).unwrap();
        assert_eq!(file.arithmetic(&Overrides::default()), Arithmetic::Float);
        let o = Overrides { exact: true, tol: Some(1e-6), free_value: Some(FreeValueArg::Zero), max_horizon: Some(2) };
        assert_eq!(file.arithmetic(&o), Arithmetic::Exact);
        assert!(file.build::<f64>(&o).is_err(), "horizon 3 exceeds the limit 2");
        let o = Overrides { max_horizon: None, ..o };
        let s: Scenario<f64> = file.build(&o).unwrap();
        assert_eq!(s.tol.equality, 1e-6);
        assert_eq!(s.policy, FreeValuePolicy::Zero);
    }

    #[test]
    fn free_value_arguments() {
        assert_eq!("half".parse::<FreeValueArg>().unwrap(), FreeValueArg::Half);
        assert_eq!("table:q.csv".parse::<FreeValueArg>().unwrap(), FreeValueArg::Table("q.csv".into()));
        assert!("table:".parse::<FreeValueArg>().is_err());
        assert!("third".parse::<FreeValueArg>().is_err());
    }

    #[test]
    fn custom_steps() {
        let text = BASE.replace("kind = \"drop-k\"\nk = 1", "kind = \"custom\"\nsteps = [\"full\", \"drop\", [0, 1, 1, 3, 2, 2, 3, 3]]");
        let s: Scenario<f64> = parse(&text).unwrap().build(&Overrides::default()).unwrap();
        assert_eq!(s.schedule.map(2).apply_index(2), 1);
        let text = BASE.replace("kind = \"drop-k\"\nk = 1", "kind = \"custom\"\nsteps = [\"full\", \"skip\", \"full\"]");
        let err = parse(&text).unwrap().build::<f64>(&Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("steps[1]"), "{err}");
    }
}
