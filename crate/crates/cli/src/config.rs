//! Experiment configuration: a TOML file with one section per subcommand.
//! Every field is optional; missing values fall back to the defaults below.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use stablear::ar::{expand_polynomial, ArModel, RootSpec};
use stablear::bootstrap::MRule;
use stablear::estimation::{huber_loss, smooth_huber_loss, Loss};
use stablear::montecarlo::Estimator;
use stablear::stable::{Family, InnovationSpec, PhaseLaw};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub innovations: InnovationSection,
    pub paths: PathsSection,
    pub mc_table: McSection,
    pub limit_sample: LimitSection,
    pub boot_coverage: CoverageSection,
    pub estimate: EstimateSection,
    pub simulate: SimulateSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Either explicit coefficients or unit-root multiplicities. With nothing
/// set, the model is `1 - √2 B + B²` (a conjugate pair at ±π/4).
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub phi: Option<Vec<f64>>,
    pub r: Option<usize>,
    pub s: Option<usize>,
    pub pairs: Option<Vec<PairEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    /// Angle in radians.
    pub theta: Option<f64>,
    /// Angle as a multiple of π.
    pub theta_pi: Option<f64>,
    #[serde(default = "one")]
    pub mult: usize,
}

fn one() -> usize {
    1
}

impl ModelSection {
    pub fn roots(&self) -> Result<Option<RootSpec>> {
        if self.phi.is_some() {
            if self.r.is_some() || self.s.is_some() || self.pairs.is_some() {
                bail!("[model] takes either phi or r/s/pairs, not both");
            }
            return Ok(None);
        }
        if self.r.is_none() && self.s.is_none() && self.pairs.is_none() {
            return Ok(Some(RootSpec::new(0, 0, vec![(PI / 4.0, 1)])?));
        }
        let mut pairs = Vec::new();
        for p in self.pairs.iter().flatten() {
            let theta = match (p.theta, p.theta_pi) {
                (Some(t), None) => t,
                (None, Some(t)) => t * PI,
                _ => bail!("each pair needs exactly one of theta or theta_pi"),
            };
            pairs.push((theta, p.mult));
        }
        Ok(Some(RootSpec::new(self.r.unwrap_or(0), self.s.unwrap_or(0), pairs)?))
    }

    pub fn model(&self) -> Result<ArModel> {
        match (&self.phi, self.roots()?) {
            (Some(phi), _) => Ok(ArModel::new(phi.clone())?),
            (None, Some(spec)) => Ok(expand_polynomial(&spec)?),
            (None, None) => unreachable!("roots() returns a spec whenever phi is absent"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnovationSection {
    /// `sas` (exact symmetric stable) or `pareto`.
    pub family: String,
    pub scale: f64,
}

impl Default for InnovationSection {
    fn default() -> Self {
        Self { family: "sas".into(), scale: 1.0 }
    }
}

impl InnovationSection {
    pub fn family(&self) -> Result<Family> {
        match self.family.as_str() {
            "sas" | "stable" => Ok(Family::ExactSas),
            "pareto" => Ok(Family::SymmetricPareto),
            other => bail!("unknown innovation family {other:?} (expected sas or pareto)"),
        }
    }

    pub fn spec(&self, alpha: f64) -> Result<InnovationSpec> {
        let family = self.family()?;
        if family == Family::SymmetricPareto && self.scale != 1.0 {
            bail!("the Pareto family has unit scale");
        }
        Ok(InnovationSpec::new(alpha, family, self.scale)?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub n: usize,
    pub alpha: f64,
    pub count: usize,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { n: 500, alpha: 1.3, count: 4 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n: Vec<usize>,
    pub alpha: Vec<f64>,
    pub estimators: Vec<String>,
    pub replicates: Option<usize>,
    /// 1-based coefficient index.
    pub coefficient: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n: vec![10, 20, 30, 40, 50],
            alpha: vec![0.5, 1.0, 1.3, 1.7, 2.0],
            estimators: vec!["huber:5".into(), "ls".into()],
            replicates: None,
            coefficient: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSection {
    pub alpha: f64,
    pub draws: Option<usize>,
    pub mesh: usize,
    pub truncation: usize,
    pub loss: String,
    /// `orbit` or `drift`.
    pub phase: String,
}

impl Default for LimitSection {
    fn default() -> Self {
        Self { alpha: 1.3, draws: None, mesh: 2048, truncation: 10_000, loss: "huber:5".into(), phase: "orbit".into() }
    }
}

impl LimitSection {
    pub fn phase(&self) -> Result<PhaseLaw> {
        match self.phase.as_str() {
            "orbit" => Ok(PhaseLaw::Orbit),
            "drift" => Ok(PhaseLaw::Drift),
            other => bail!("unknown phase law {other:?} (expected orbit or drift)"),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    pub n: Vec<usize>,
    pub alpha: Vec<f64>,
    pub m_rules: Vec<String>,
    pub bootstrap_replicates: Option<usize>,
    pub outer_replicates: Option<usize>,
    pub level: f64,
    pub loss: String,
    pub coefficient: usize,
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self {
            n: vec![50, 100, 200],
            alpha: vec![1.3, 1.7],
            m_rules: vec!["n/lnln".into(), "n^0.9".into(), "n^0.95".into()],
            bootstrap_replicates: None,
            outer_replicates: None,
            level: 0.95,
            loss: "huber:5".into(),
            coefficient: 1,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub input: Option<PathBuf>,
    pub order: Option<usize>,
    pub loss: String,
    pub bootstrap_replicates: Option<usize>,
    pub m_rule: String,
    pub level: f64,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            input: None,
            order: None,
            loss: "huber:5".into(),
            bootstrap_replicates: None,
            m_rule: "n^0.95".into(),
            level: 0.95,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    pub alpha: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { n: 500, alpha: 1.3 }
    }
}

/// `quadratic`, `huber[:c]` (c defaults to 5) or `smooth-huber[:c]`.
pub fn parse_loss(text: &str) -> Result<Loss> {
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    let c = match arg {
        Some(a) => a.parse::<f64>().with_context(|| format!("bad loss parameter in {text:?}"))?,
        None => 5.0,
    };
    match name {
        "quadratic" if arg.is_none() => Ok(Loss::Quadratic),
        "huber" => Ok(huber_loss(c)?),
        "smooth-huber" => Ok(smooth_huber_loss(c)?),
        _ => bail!("unknown loss {text:?} (expected quadratic, huber[:c] or smooth-huber[:c])"),
    }
}

/// `ls` or any loss accepted by [`parse_loss`].
pub fn parse_estimator(text: &str) -> Result<Estimator> {
    match text.trim() {
        "ls" | "LS" => Ok(Estimator::LeastSquares),
        other => Ok(Estimator::M(parse_loss(other)?)),
    }
}

/// `n/lnln` or `n^γ`.
pub fn parse_m_rule(text: &str) -> Result<MRule> {
    let t = text.trim();
    let rule = if t == "n/lnln" || t == "n/lnln(n)" {
        MRule::NOverLogLog
    } else if let Some(g) = t.strip_prefix("n^") {
        MRule::Pow(g.trim_matches(|c| c == '(' || c == ')').parse().with_context(|| format!("bad m rule {text:?}"))?)
    } else {
        bail!("unknown m rule {text:?} (expected n/lnln or n^g)");
    };
    rule.validate()?;
    Ok(rule)
}
