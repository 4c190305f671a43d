//! Models: a shared feature extractor plus heads that turn a batch into a
//! task loss `ℓ` and a list of weighted regularizers `(R_i, μ_i)`.
//!
//! A model is a list of members sharing one extractor. The first member
//! supplies `ℓ` and its regularizers; every later member contributes its
//! own task loss as a regularizer with `μ = 1`, followed by its own
//! regularizers. Nested compositions flatten to the same member list.

use serde::{Deserialize, Serialize};

use crate::netcore::{mse_loss, softmax_cross_entropy, Activation, ActivationTrace, Mlp, MlpSpec, ParamSet, Tensor};
use crate::rng::seeded;
use crate::tasks::Batch;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTerm {
    pub name: String,
    pub value: f64,
    pub multiplier: f64,
}

/// `ℓ + Σ μ_i R_i`, with the total always recomputed from the parts in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub task_loss: f64,
    pub reg_terms: Vec<RegTerm>,
    pub total: f64,
}

impl LossReport {
    pub fn new(task_loss: f64, reg_terms: Vec<RegTerm>) -> Self {
        let mut r = Self {
            task_loss,
            reg_terms,
            total: 0.0,
        };
        r.total = r.srm_total();
        r
    }

    /// `ℓ + Σ μ_i R_i`, summed left to right.
    pub fn srm_total(&self) -> f64 {
        let mut total = self.task_loss;
        for t in &self.reg_terms {
            total += t.multiplier * t.value;
        }
        total
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64, multiplier: f64) {
        self.reg_terms.push(RegTerm {
            name: name.into(),
            value,
            multiplier,
        });
        self.total = self.srm_total();
    }

    pub fn reg_names(&self) -> Vec<&str> {
        self.reg_terms.iter().map(|t| t.name.as_str()).collect()
    }

    /// Element-wise mean of reports with identical term lists.
    pub fn mean(reports: &[LossReport]) -> Result<LossReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Shape("no loss reports to average".into()))?;
        let k = reports.len() as f64;
        let mut task = 0.0;
        let mut values = vec![0.0; first.reg_terms.len()];
        for r in reports {
            if r.reg_terms.len() != values.len() {
                return Err(Error::Shape("loss reports differ in their terms".into()));
            }
            task += r.task_loss;
            for (v, t) in values.iter_mut().zip(&r.reg_terms) {
                *v += t.value;
            }
        }
        let terms = first
            .reg_terms
            .iter()
            .zip(values)
            .map(|(t, v)| RegTerm {
                name: t.name.clone(),
                value: v / k,
                multiplier: t.multiplier,
            })
            .collect();
        Ok(LossReport::new(task / k, terms))
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.task_loss.is_finite() && self.reg_terms.iter().all(|t| t.value.is_finite())
    }
}

/// One building block of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemberConfig {
    Erm,
    /// Domain-adversarial: a domain classifier on the features, trained
    /// normally, whose gradient reaches the extractor reversed and scaled.
    Dann {
        gamma_reg: f64,
    },
    /// Deterministic three-latent model: features split into `(z_x, z_y, z_d)`;
    /// classes from `z_y`, domains from `z_d`, reconstruction from all.
    DivaLite {
        gamma_y: f64,
        gamma_d: f64,
        zx_dim: usize,
        zy_dim: usize,
        zd_dim: usize,
    },
}

impl MemberConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MemberConfig::Erm => "erm",
            MemberConfig::Dann { .. } => "dann",
            MemberConfig::DivaLite { .. } => "diva",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            MemberConfig::Erm => Ok(()),
            MemberConfig::Dann { gamma_reg } => {
                if !(gamma_reg.is_finite() && gamma_reg >= 0.0) {
                    return Err(Error::key("gamma_reg", "must be finite and >= 0"));
                }
                Ok(())
            }
            MemberConfig::DivaLite {
                gamma_y,
                gamma_d,
                zy_dim,
                zd_dim,
                ..
            } => {
                if !(gamma_y.is_finite() && gamma_y > 0.0) {
                    return Err(Error::key("gamma_y", "must be finite and > 0"));
                }
                if !(gamma_d.is_finite() && gamma_d >= 0.0) {
                    return Err(Error::key("gamma_d", "must be finite and >= 0"));
                }
                if zy_dim == 0 {
                    return Err(Error::key("zy_dim", "must be >= 1"));
                }
                if zd_dim == 0 {
                    return Err(Error::key("zd_dim", "must be >= 1"));
                }
                Ok(())
            }
        }
    }

    fn latent_dim(&self) -> Option<usize> {
        match *self {
            MemberConfig::DivaLite {
                zx_dim, zy_dim, zd_dim, ..
            } => Some(zx_dim + zy_dim + zd_dim),
            _ => None,
        }
    }
}

/// Network layout shared by all members of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Hidden widths of the feature extractor.
    pub feature_widths: Vec<usize>,
    /// Output width of the extractor when no member fixes it.
    pub feature_dim: usize,
    /// Hidden widths of domain classifier heads.
    pub domain_widths: Vec<usize>,
    pub activation: Activation,
    pub init_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            feature_widths: vec![16],
            feature_dim: 8,
            domain_widths: vec![8],
            activation: Activation::Relu,
            init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub members: Vec<MemberConfig>,
    pub net: NetConfig,
}

impl ModelConfig {
    pub fn single(member: MemberConfig, net: NetConfig) -> Self {
        Self {
            members: vec![member],
            net,
        }
    }

    pub fn name(&self) -> String {
        self.members
            .iter()
            .map(MemberConfig::kind_name)
            .collect::<Vec<_>>()
            .join("_")
    }

    /// Extractor output width: the latent size of any DIVA-lite member,
    /// otherwise `net.feature_dim`.
    pub fn feature_dim(&self) -> Result<usize> {
        let mut latent = None;
        for m in &self.members {
            if let Some(d) = m.latent_dim() {
                match latent {
                    Some(prev) if prev != d => {
                        return Err(Error::InvalidConfig(format!(
                            "composed members disagree on feature dimension ({prev} vs {d})"
                        )))
                    }
                    _ => latent = Some(d),
                }
            }
        }
        Ok(latent.unwrap_or(self.net.feature_dim))
    }
}

/// Flattens several model configs into one composed config. All parts
/// must share the same network layout.
pub fn compose_configs(parts: Vec<ModelConfig>) -> Result<ModelConfig> {
    if parts.len() < 2 {
        return Err(Error::InvalidConfig("composition needs at least 2 models".into()));
    }
    let net = parts[0].net.clone();
    let mut members = Vec::new();
    for p in parts {
        if p.net != net {
            return Err(Error::InvalidConfig(format!(
                "model `{}` has an incompatible network layout",
                p.name()
            )));
        }
        members.extend(p.members);
    }
    let cfg = ModelConfig { members, net };
    cfg.feature_dim()?;
    Ok(cfg)
}

/// Sizes a model needs from its task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskDims {
    pub input_dim: usize,
    pub num_classes: usize,
    pub num_domains: usize,
}

#[derive(Debug, Clone)]
struct Member {
    config: MemberConfig,
    class_head: Mlp,
    /// Feature columns seen by the class head.
    class_cols: (usize, usize),
    domain_head: Option<Mlp>,
    domain_cols: (usize, usize),
    decoder: Option<Mlp>,
}

struct HeadPass {
    cols: (usize, usize),
    trace: ActivationTrace,
    loss: f64,
    grad: Tensor,
}

struct MemberPass {
    class: HeadPass,
    domain: Option<HeadPass>,
    recon: Option<HeadPass>,
}

struct ForwardPass {
    features: ActivationTrace,
    members: Vec<MemberPass>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    dims: TaskDims,
    params: ParamSet,
    extractor: Mlp,
    members: Vec<Member>,
}

fn head_spec(input: usize, hidden: &[usize], output: usize, net: &NetConfig) -> MlpSpec {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    MlpSpec::new(sizes, net.activation).with_init_scale(net.init_scale)
}

impl Model {
    pub fn build(config: &ModelConfig, dims: TaskDims, seed: u64) -> Result<Model> {
        if config.members.is_empty() {
            return Err(Error::InvalidConfig("model has no members".into()));
        }
        for m in &config.members {
            m.validate()?;
            if matches!(m, MemberConfig::Dann { .. } | MemberConfig::DivaLite { .. }) && dims.num_domains < 2 {
                return Err(Error::InvalidConfig(format!(
                    "{} requires >= 2 training domains, task has {}",
                    m.kind_name(),
                    dims.num_domains
                )));
            }
        }
        if dims.input_dim == 0 || dims.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "model needs input_dim >= 1 and >= 2 classes, got {dims:?}"
            )));
        }
        let net = &config.net;
        let feature_dim = config.feature_dim()?;
        let mut sizes = vec![dims.input_dim];
        sizes.extend_from_slice(&net.feature_widths);
        sizes.push(feature_dim);
        let extractor = Mlp::new(
            MlpSpec::new(sizes, net.activation)
                .with_init_scale(net.init_scale)
                .with_output_activation(true),
            "feat.",
        )?;

        let mut members = Vec::new();
        for (i, m) in config.members.iter().enumerate() {
            let prefix = format!("m{i}.{}.", m.kind_name());
            let member = match *m {
                MemberConfig::Erm => Member {
                    config: m.clone(),
                    class_head: Mlp::new(
                        head_spec(feature_dim, &[], dims.num_classes, net),
                        format!("{prefix}cls."),
                    )?,
                    class_cols: (0, feature_dim),
                    domain_head: None,
                    domain_cols: (0, 0),
                    decoder: None,
                },
                MemberConfig::Dann { .. } => Member {
                    config: m.clone(),
                    class_head: Mlp::new(
                        head_spec(feature_dim, &[], dims.num_classes, net),
                        format!("{prefix}cls."),
                    )?,
                    class_cols: (0, feature_dim),
                    domain_head: Some(Mlp::new(
                        head_spec(feature_dim, &net.domain_widths, dims.num_domains, net),
                        format!("{prefix}dom."),
                    )?),
                    domain_cols: (0, feature_dim),
                    decoder: None,
                },
                MemberConfig::DivaLite {
                    zx_dim, zy_dim, zd_dim, ..
                } => Member {
                    config: m.clone(),
                    class_head: Mlp::new(head_spec(zy_dim, &[], dims.num_classes, net), format!("{prefix}cls."))?,
                    class_cols: (zx_dim, zx_dim + zy_dim),
                    domain_head: Some(Mlp::new(
                        head_spec(zd_dim, &[], dims.num_domains, net),
                        format!("{prefix}dom."),
                    )?),
                    domain_cols: (zx_dim + zy_dim, zx_dim + zy_dim + zd_dim),
                    decoder: Some(Mlp::new(
                        head_spec(feature_dim, &[], dims.input_dim, net),
                        format!("{prefix}dec."),
                    )?),
                },
            };
            members.push(member);
        }

        let mut params = ParamSet::new(seed);
        let mut rng = seeded(seed);
        extractor.init_into(&mut params, &mut rng)?;
        for m in &members {
            m.class_head.init_into(&mut params, &mut rng)?;
            if let Some(h) = &m.domain_head {
                h.init_into(&mut params, &mut rng)?;
            }
            if let Some(h) = &m.decoder {
                h.init_into(&mut params, &mut rng)?;
            }
        }
        Ok(Model {
            config: config.clone(),
            dims,
            params,
            extractor,
            members,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> TaskDims {
        self.dims
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn extractor(&self) -> &Mlp {
        &self.extractor
    }

    /// The classifier head that defines `ℓ` and predictions.
    pub fn class_head(&self) -> &Mlp {
        &self.members[0].class_head
    }

    /// Names of the parameters of the primary classifier head.
    pub fn class_head_params(&self) -> Vec<String> {
        let head = self.class_head();
        (0..head.spec.num_layers())
            .flat_map(|l| [head.weight_name(l), head.bias_name(l)])
            .collect()
    }

    /// The extractor output columns read by the primary classifier head.
    pub fn class_head_input(&self, x: &Tensor) -> Result<Tensor> {
        let feats = self.extractor.forward(&self.params, x)?;
        let (a, b) = self.members[0].class_cols;
        Ok(feats.output.slice_cols(a, b))
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.features.cols() != self.dims.input_dim {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                batch.features.cols(),
                self.dims.input_dim
            )));
        }
        Ok(())
    }

    fn head(head: &Mlp, params: &ParamSet, feats: &Tensor, cols: (usize, usize)) -> Result<ActivationTrace> {
        head.forward(params, &feats.slice_cols(cols.0, cols.1))
    }

    fn forward_pass(&self, batch: &Batch) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let features = self.extractor.forward(&self.params, &batch.features)?;
        let phi = &features.output;
        let domain_labels = batch.domain_labels();
        let mut members = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let trace = Self::head(&m.class_head, &self.params, phi, m.class_cols)?;
            let (loss, grad) = softmax_cross_entropy(trace.logits(), &batch.labels)?;
            let class = HeadPass {
                cols: m.class_cols,
                trace,
                loss,
                grad,
            };
            let domain = match &m.domain_head {
                Some(h) => {
                    if batch.domain >= self.dims.num_domains {
                        return Err(Error::Shape(format!(
                            "batch domain id {} >= {} training domains",
                            batch.domain, self.dims.num_domains
                        )));
                    }
                    let trace = Self::head(h, &self.params, phi, m.domain_cols)?;
                    let (loss, grad) = softmax_cross_entropy(trace.logits(), &domain_labels)?;
                    Some(HeadPass {
                        cols: m.domain_cols,
                        trace,
                        loss,
                        grad,
                    })
                }
                None => None,
            };
            let recon = match &m.decoder {
                Some(h) => {
                    let trace = h.forward(&self.params, phi)?;
                    let (loss, grad) = mse_loss(trace.logits(), &batch.features)?;
                    Some(HeadPass {
                        cols: (0, phi.cols()),
                        trace,
                        loss,
                        grad,
                    })
                }
                None => None,
            };
            members.push(MemberPass { class, domain, recon });
        }
        Ok(ForwardPass { features, members })
    }

    fn report(&self, pass: &ForwardPass) -> LossReport {
        let mut task_loss = 0.0;
        let mut terms = Vec::new();
        let mut push = |name: String, value: f64, multiplier: f64| {
            terms.push(RegTerm {
                name,
                value,
                multiplier,
            })
        };
        for (i, (m, p)) in self.members.iter().zip(&pass.members).enumerate() {
            let kind = m.config.kind_name();
            if i == 0 {
                task_loss = p.class.loss;
            } else {
                push(format!("{kind}.class"), p.class.loss, 1.0);
            }
            match m.config {
                MemberConfig::Erm => {}
                MemberConfig::Dann { gamma_reg } => {
                    push(format!("{kind}.domain"), p.domain.as_ref().unwrap().loss, gamma_reg);
                }
                MemberConfig::DivaLite { gamma_y, gamma_d, .. } => {
                    push(
                        format!("{kind}.domain"),
                        p.domain.as_ref().unwrap().loss,
                        gamma_d / gamma_y,
                    );
                    push(format!("{kind}.recon"), p.recon.as_ref().unwrap().loss, 1.0 / gamma_y);
                }
            }
        }
        LossReport::new(task_loss, terms)
    }

    /// Backpropagates `weight·(head gradients)` into `self.params` and returns
    /// the gradient with respect to the extractor output.
    fn backward_heads(&mut self, pass: &ForwardPass, weight: f64) -> Result<Tensor> {
        let mut d_phi = Tensor::zeros_like(&pass.features.output);
        let members = self.members.clone();
        for (m, p) in members.iter().zip(&pass.members) {
            let d = self.head_backward(&m.class_head, &p.class, weight)?;
            d_phi.add_into_cols(p.class.cols.0, &d)?;
            match m.config {
                MemberConfig::Erm => {}
                MemberConfig::Dann { gamma_reg } => {
                    let dom = p.domain.as_ref().unwrap();
                    let d = self.head_backward(m.domain_head.as_ref().unwrap(), dom, weight)?;
                    // gradient reversal at the feature boundary
                    d_phi.add_into_cols(dom.cols.0, &d.scaled(-gamma_reg))?;
                }
                MemberConfig::DivaLite { gamma_y, gamma_d, .. } => {
                    let dom = p.domain.as_ref().unwrap();
                    let d = self.head_backward(m.domain_head.as_ref().unwrap(), dom, weight * (gamma_d / gamma_y))?;
                    d_phi.add_into_cols(dom.cols.0, &d)?;
                    let rec = p.recon.as_ref().unwrap();
                    let d = self.head_backward(m.decoder.as_ref().unwrap(), rec, weight * (1.0 / gamma_y))?;
                    d_phi.add_into_cols(rec.cols.0, &d)?;
                }
            }
        }
        Ok(d_phi)
    }

    fn head_backward(&mut self, head: &Mlp, pass: &HeadPass, scale: f64) -> Result<Tensor> {
        head.backward(&mut self.params, &pass.trace, &pass.grad.scaled(scale))
    }

    /// Evaluates the SRM decomposition on a batch without touching gradients.
    pub fn evaluate(&self, batch: &Batch) -> Result<LossReport> {
        let pass = self.forward_pass(batch)?;
        Ok(self.report(&pass))
    }

    /// Evaluates the batch and adds `weight ×` its gradient into the
    /// parameter gradient buffers. The extractor receives the DANN domain
    /// gradient with its sign flipped; everything else is the plain gradient
    /// of `ℓ + Σ μ_i R_i`, except that DANN domain heads are trained on
    /// `R` itself (unscaled by `μ`).
    pub fn compute(&mut self, batch: &Batch, weight: f64) -> Result<LossReport> {
        let pass = self.forward_pass(batch)?;
        let report = self.report(&pass);
        let d_phi = self.backward_heads(&pass, weight)?;
        let extractor = self.extractor.clone();
        extractor.backward(&mut self.params, &pass.features, &d_phi)?;
        Ok(report)
    }

    /// Class loss `ℓ` of the primary head on `(x, labels)`.
    pub fn class_loss(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let logits = self.logits(x)?;
        Ok(softmax_cross_entropy(&logits, labels)?.0)
    }

    /// `ℓ` and `∂ℓ/∂x` for the primary head; parameter gradients untouched.
    pub fn class_loss_input_grad(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
        let mut scratch = self.params.clone();
        let (loss, dx) = Self::class_backward(&self.extractor, &self.members[0], &mut scratch, x, labels, 1.0)?;
        Ok((loss, dx))
    }

    /// Adds `weight · ∂ℓ/∂θ` of the primary class loss on `(x, labels)` into
    /// the gradient buffers and returns `ℓ`.
    pub fn accumulate_class_loss(&mut self, x: &Tensor, labels: &[usize], weight: f64) -> Result<f64> {
        let (loss, _) = Self::class_backward(&self.extractor, &self.members[0], &mut self.params, x, labels, weight)?;
        Ok(loss)
    }

    fn class_backward(
        extractor: &Mlp,
        member: &Member,
        params: &mut ParamSet,
        x: &Tensor,
        labels: &[usize],
        weight: f64,
    ) -> Result<(f64, Tensor)> {
        let feats = extractor.forward(params, x)?;
        let (a, b) = member.class_cols;
        let trace = member.class_head.forward(params, &feats.output.slice_cols(a, b))?;
        let (loss, grad) = softmax_cross_entropy(trace.logits(), labels)?;
        let d_head = member.class_head.backward(params, &trace, &grad.scaled(weight))?;
        let mut d_phi = Tensor::zeros_like(&feats.output);
        d_phi.add_into_cols(a, &d_head)?;
        let dx = extractor.backward(params, &feats, &d_phi)?;
        Ok((loss, dx))
    }

    /// Primary-head logits.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let head_in = self.class_head_input(x)?;
        Ok(self.class_head().forward(&self.params, &head_in)?.output)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(x)?))
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }
}

/// Row-wise argmax; ties go to the lower index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn compose_models(configs: Vec<ModelConfig>, dims: TaskDims, seed: u64) -> Result<Model> {
    Model::build(&compose_configs(configs)?, dims, seed)
}
