//! Synthetic annotation corpora with known ground truth.
//!
//! Annotators are split into teams of `team_size`; DU pairs are dealt to
//! teams round robin and every member of a team annotates each of its
//! pairs. A pair's context kind is drawn once. Each record draws a primary
//! label from the context's marginal, optionally a second label from the
//! primary's affinity row, and a confidence from a proportional-odds model
//! with annotator and DU-pair random intercepts.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{AnnotationRecord, DataError, Dataset};
use crate::labels::{ContextKind, RelationLabel};

const NL: usize = RelationLabel::COUNT;
const NC: usize = ContextKind::COUNT;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("affinity row for {label} in {context} has no mass off the diagonal")]
    DegenerateAffinity { context: ContextKind, label: RelationLabel },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_annotators: usize,
    pub n_du_pairs: usize,
    pub team_size: usize,
    pub pairs_per_conversation: usize,
    /// Probability of each context kind, canonical order.
    pub context_probs: [f64; NC],
    /// Primary-label weights per context kind.
    pub label_marginals: [[f64; NL]; NC],
    /// Co-label weights per context kind, row = primary label.
    pub affinity: [[[f64; NL]; NL]; NC],
    pub colabel_rate: f64,
    /// Increasing cut points of the latent confidence scale (K - 1 values).
    pub thresholds: Vec<f64>,
    /// Shift of the latent confidence per context kind.
    pub context_effects: [f64; NC],
    pub annotator_sd: f64,
    pub du_pair_sd: f64,
    pub seed: u64,
}

/// Labels that co-occur within a speaker's own contribution in
/// [`SimConfig::two_regime`].
pub const WITHIN_GROUP: [RelationLabel; 4] = [
    RelationLabel::Elaboration,
    RelationLabel::Explanation,
    RelationLabel::Background,
    RelationLabel::Continuation,
];

/// Labels that co-occur across speakers in [`SimConfig::two_regime`].
pub const CROSS_GROUP: [RelationLabel; 4] = [
    RelationLabel::Acknowledgement,
    RelationLabel::Comment,
    RelationLabel::ClarificationQuestion,
    RelationLabel::QuestionAnswerPair,
];

/// Two label regimes tied to context kinds. Regime labels are drawn mostly
/// in their home contexts (single-turn and within-speaker for `within`,
/// cross-speaker for `cross`) and co-labelled mostly within their regime.
/// Every other label is shared: drawn in all contexts with weight
/// `shared_weight` relative to a regime label, and co-labelled with the
/// other shared labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeDesign {
    pub within: Vec<RelationLabel>,
    pub cross: Vec<RelationLabel>,
    /// Share of primary-label mass on the home regime.
    pub home_share: f64,
    /// Share of co-label mass on the primary's own regime.
    pub colabel_share: f64,
    pub shared_weight: f64,
}

impl Default for RegimeDesign {
    fn default() -> Self {
        Self {
            within: WITHIN_GROUP.to_vec(),
            cross: CROSS_GROUP.to_vec(),
            home_share: 0.95,
            colabel_share: 1.0,
            shared_weight: 3.0,
        }
    }
}

impl RegimeDesign {
    fn regime(&self, i: usize) -> Option<usize> {
        let l = RelationLabel::ALL[i];
        if self.within.contains(&l) {
            Some(0)
        } else if self.cross.contains(&l) {
            Some(1)
        } else {
            None
        }
    }

    /// Label marginals (per context) and co-label affinity.
    pub fn weights(&self) -> ([[f64; NL]; NC], [[f64; NL]; NL]) {
        let size = [self.within.len() as f64, self.cross.len() as f64];
        let n_shared = (0..NL).filter(|&i| self.regime(i).is_none()).count();
        let mut marginals = [[0.0; NL]; NC];
        for (c, row) in marginals.iter_mut().enumerate() {
            let home = usize::from(c == ContextKind::CrossSpeaker.index());
            for (i, w) in row.iter_mut().enumerate() {
                *w = match self.regime(i) {
                    Some(g) if g == home => self.home_share / size[g],
                    Some(g) => (1.0 - self.home_share) / size[g],
                    None => self.shared_weight * self.home_share / size[home].max(1.0),
                };
            }
        }
        let mut affinity = [[0.0; NL]; NL];
        for (i, row) in affinity.iter_mut().enumerate() {
            for (j, w) in row.iter_mut().enumerate() {
                if i == j {
                    continue;
                }
                *w = match (self.regime(i), self.regime(j)) {
                    (Some(a), Some(b)) if a == b => self.colabel_share / (size[a] - 1.0).max(1.0),
                    (Some(_), _) => (1.0 - self.colabel_share) / (NL as f64 - size[0].max(size[1])),
                    (None, None) => 1.0,
                    (None, Some(_)) => f64::from(u8::from(n_shared < 2)),
                };
            }
        }
        (marginals, affinity)
    }
}

impl SimConfig {
    /// Corpus following `design`: balanced within-regime and cross-regime
    /// contexts, 12 annotators in teams of 4, 2000 DU pairs, every record
    /// co-labelled.
    pub fn from_design(design: &RegimeDesign, seed: u64) -> Self {
        let (label_marginals, affinity) = design.weights();
        Self {
            n_annotators: 12,
            n_du_pairs: 2000,
            team_size: 4,
            pairs_per_conversation: 10,
            context_probs: [0.25, 0.25, 0.5],
            label_marginals,
            affinity: [affinity; NC],
            colabel_rate: 1.0,
            thresholds: vec![-2.5, -1.2, 0.2, 1.8],
            context_effects: [0.0, -0.13, 0.63],
            annotator_sd: 0.8,
            du_pair_sd: 0.5,
            seed,
        }
    }

    /// [`SimConfig::from_design`] with the default [`RegimeDesign`].
    pub fn two_regime(seed: u64) -> Self {
        Self::from_design(&RegimeDesign::default(), seed)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        if self.n_annotators == 0 || self.n_du_pairs == 0 || self.team_size == 0 || self.pairs_per_conversation == 0 {
            return bad("counts must be positive");
        }
        let prob_ok = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !prob_ok(self.colabel_rate) {
            return bad("colabel_rate must lie in [0, 1]");
        }
        if !self.context_probs.iter().all(|&p| prob_ok(p)) || (self.context_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad("context_probs must be probabilities summing to 1");
        }
        let weight_ok = |w: f64| w.is_finite() && w >= 0.0;
        for c in 0..NC {
            if !self.label_marginals[c].iter().all(|&w| weight_ok(w)) || self.label_marginals[c].iter().sum::<f64>() <= 0.0
            {
                return bad("label marginals must be non-negative with positive total");
            }
            if !self.affinity[c].iter().flatten().all(|&w| weight_ok(w)) {
                return bad("affinity weights must be non-negative");
            }
            if self.colabel_rate > 0.0 {
                for i in 0..NL {
                    let off: f64 = (0..NL).filter(|&j| j != i).map(|j| self.affinity[c][i][j]).sum();
                    if self.label_marginals[c][i] > 0.0 && off <= 0.0 {
                        return Err(SimError::DegenerateAffinity {
                            context: ContextKind::ALL[c],
                            label: RelationLabel::ALL[i],
                        });
                    }
                }
            }
        }
        if self.thresholds.is_empty() || self.thresholds.len() > 4 {
            return bad("need between 1 and 4 thresholds for a confidence scale within 1..=5");
        }
        if self.thresholds.windows(2).any(|w| w[1] <= w[0]) || !self.thresholds.iter().all(|t| t.is_finite()) {
            return bad("thresholds must be finite and strictly increasing");
        }
        if !(self.annotator_sd >= 0.0 && self.du_pair_sd >= 0.0)
            || !self.annotator_sd.is_finite()
            || !self.du_pair_sd.is_finite()
            || !self.context_effects.iter().all(|v| v.is_finite())
        {
            return bad("effects must be finite and standard deviations non-negative");
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::two_regime(0)
    }
}

/// Latent quantities behind a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SimConfig,
    pub annotator_effects: BTreeMap<String, f64>,
    pub du_pair_effects: BTreeMap<String, f64>,
    pub du_pair_context: BTreeMap<String, ContextKind>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

fn weighted(weights: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(weights).expect("weights validated")
}

pub fn generate(cfg: &SimConfig) -> Result<Simulation, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width_a = cfg.n_annotators.to_string().len();
    let width_p = cfg.n_du_pairs.to_string().len();
    let annotators: Vec<String> = (0..cfg.n_annotators).map(|a| format!("a{a:0width_a$}")).collect();
    let pairs: Vec<String> = (0..cfg.n_du_pairs).map(|p| format!("p{p:0width_p$}")).collect();

    let normal = |sd: f64| Normal::new(0.0, sd).expect("validated sd");
    let ann_dist = normal(cfg.annotator_sd);
    let pair_dist = normal(cfg.du_pair_sd);
    let ann_u: Vec<f64> = annotators.iter().map(|_| ann_dist.sample(&mut rng)).collect();
    let pair_u: Vec<f64> = pairs.iter().map(|_| pair_dist.sample(&mut rng)).collect();
    let ctx_dist = weighted(&cfg.context_probs);
    let contexts: Vec<ContextKind> = pairs.iter().map(|_| ContextKind::ALL[ctx_dist.sample(&mut rng)]).collect();

    let primary: Vec<WeightedIndex<f64>> = cfg.label_marginals.iter().map(|m| weighted(m)).collect();
    let colabel: Vec<Vec<Option<WeightedIndex<f64>>>> = (0..NC)
        .map(|c| {
            (0..NL)
                .map(|i| {
                    let mut row = cfg.affinity[c][i];
                    row[i] = 0.0;
                    WeightedIndex::new(row).ok()
                })
                .collect()
        })
        .collect();

    let n_teams = cfg.n_annotators.div_ceil(cfg.team_size);
    let mut records = Vec::new();
    for (p, pair) in pairs.iter().enumerate() {
        let team = p % n_teams;
        let conversation = format!("t{team}-c{}", (p / n_teams) / cfg.pairs_per_conversation);
        let ctx = contexts[p];
        let c = ctx.index();
        let members = team * cfg.team_size..((team + 1) * cfg.team_size).min(cfg.n_annotators);
        for a in members {
            let first = primary[c].sample(&mut rng);
            let mut labels = vec![RelationLabel::ALL[first]];
            if rng.random::<f64>() < cfg.colabel_rate {
                let dist = colabel[c][first].as_ref().ok_or(SimError::DegenerateAffinity {
                    context: ctx,
                    label: RelationLabel::ALL[first],
                })?;
                labels.push(RelationLabel::ALL[dist.sample(&mut rng)]);
            }
            let eta = cfg.context_effects[c] + ann_u[a] + pair_u[p];
            let u: f64 = rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            let latent = eta + (u / (1.0 - u)).ln();
            let confidence = 1 + cfg.thresholds.iter().filter(|&&t| t < latent).count();
            records.push(AnnotationRecord {
                record_id: format!("{}-{}", pair, annotators[a]),
                annotator_id: annotators[a].clone(),
                team_id: format!("t{team}"),
                conversation_id: conversation.clone(),
                du_pair_id: pair.clone(),
                context: ctx,
                labels,
                confidence: confidence as u8,
            });
        }
    }
    let dataset = Dataset::new(records)?;
    let truth = GroundTruth {
        config: cfg.clone(),
        annotator_effects: annotators.iter().cloned().zip(ann_u).collect(),
        du_pair_effects: pairs.iter().cloned().zip(pair_u).collect(),
        du_pair_context: pairs.iter().cloned().zip(contexts).collect(),
    };
    Ok(Simulation { dataset, truth })
}
