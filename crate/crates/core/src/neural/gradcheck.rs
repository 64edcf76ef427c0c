//! Central-difference verification of the analytic gradients.

use serde::{Deserialize, Serialize};

use super::NeuralModel;
use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub samples_per_group: usize,
    pub seed: u64,
    /// Denominator floor in `|a − n| / max(|a|, |n|, floor)`, so that
    /// coordinates whose true gradient is essentially zero are judged on
    /// absolute error.
    pub floor: f64,
    /// Adds 1 to the analytic gradient of every coordinate in this group.
    pub corrupt_group: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-4,
            samples_per_group: 30,
            seed: 0,
            floor: 1e-6,
            corrupt_group: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub index: usize,
    pub group: String,
    pub tensor: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: String,
    pub sampled: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub max_rel_err: f64,
    pub worst_coordinate: Coordinate,
    pub per_group_errors: Vec<GroupError>,
}

pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares analytic and central-difference gradients of the summed loss
/// over `examples` on coordinates sampled from every parameter group.
/// Within a group, coordinates with a nonzero analytic gradient are sampled
/// first.
pub fn grad_check(model: &NeuralModel, examples: &[LabeledSentence], opts: &GradCheckOptions) -> Result<GradCheckReport> {
    if examples.is_empty() {
        return Err(Error::Config("grad check needs at least one example".into()));
    }
    let groups = model.params.groups();
    if let Some(g) = &opts.corrupt_group {
        if !groups.contains(g) {
            return Err(Error::Config(format!("unknown parameter group `{g}`")));
        }
    }
    let (_, mut analytic) = model.loss_and_gradients(examples)?;
    if let Some(g) = &opts.corrupt_group {
        for j in model.params.group_coords(g) {
            analytic[j] += 1.0;
        }
    }

    let mut probe = model.clone();
    let mut rng = SplitMix64::new(opts.seed);
    let mut per_group = Vec::with_capacity(groups.len());
    let mut worst: Option<Coordinate> = None;

    for group in &groups {
        let coords = model.params.group_coords(group);
        let (mut nonzero, mut zero): (Vec<usize>, Vec<usize>) = coords.iter().partition(|&&j| analytic[j] != 0.0);
        rng.shuffle(&mut nonzero);
        rng.shuffle(&mut zero);
        let sample: Vec<usize> = nonzero
            .into_iter()
            .chain(zero)
            .take(opts.samples_per_group)
            .collect();

        let mut group_max = 0.0f64;
        for &j in &sample {
            let orig = probe.params.values[j];
            probe.params.values[j] = orig + opts.epsilon;
            let up = probe.loss(examples)?;
            probe.params.values[j] = orig - opts.epsilon;
            let down = probe.loss(examples)?;
            probe.params.values[j] = orig;
            let numeric = (up - down) / (2.0 * opts.epsilon);
            let rel = relative_error(analytic[j], numeric, opts.floor);
            group_max = group_max.max(rel);
            if worst.as_ref().map_or(true, |w| rel > w.rel_err) {
                let tensor = model
                    .params
                    .infos
                    .iter()
                    .find(|i| i.tensor.range().contains(&j))
                    .map(|i| i.name.clone())
                    .unwrap_or_default();
                worst = Some(Coordinate {
                    index: j,
                    group: group.clone(),
                    tensor,
                    analytic: analytic[j],
                    numeric,
                    rel_err: rel,
                });
            }
        }
        per_group.push(GroupError {
            group: group.clone(),
            sampled: sample.len(),
            max_rel_err: group_max,
        });
    }

    let worst_coordinate = worst.ok_or_else(|| Error::Config("model has no parameters".into()))?;
    Ok(GradCheckReport {
        epsilon: opts.epsilon,
        max_rel_err: worst_coordinate.rel_err,
        worst_coordinate,
        per_group_errors: per_group,
    })
}

/// Runs [`grad_check`] once per step size. Returns `(epsilon, max_rel_err)`.
pub fn epsilon_sweep(
    model: &NeuralModel,
    examples: &[LabeledSentence],
    epsilons: &[f64],
    opts: &GradCheckOptions,
) -> Result<Vec<(f64, f64)>> {
    epsilons
        .iter()
        .map(|&epsilon| {
            let o = GradCheckOptions {
                epsilon,
                ..opts.clone()
            };
            grad_check(model, examples, &o).map(|r| (epsilon, r.max_rel_err))
        })
        .collect()
}

impl GradCheckReport {
    pub fn render(&self) -> String {
        let mut out = format!("epsilon {:e}\n", self.epsilon);
        for g in &self.per_group_errors {
            out.push_str(&format!("{:<14} {:>4} {:.3e}\n", g.group, g.sampled, g.max_rel_err));
        }
        let w = &self.worst_coordinate;
        out.push_str(&format!(
            "max relative error {:.3e} at {} ({} / {}): analytic {:.6e}, numeric {:.6e}\n",
            self.max_rel_err, w.index, w.group, w.tensor, w.analytic, w.numeric
        ));
        out
    }
}
