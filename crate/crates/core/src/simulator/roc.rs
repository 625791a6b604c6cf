use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{node_densities, MixturePair, MomentAccumulator, Prepared, SimError, SimulationConfig};
use crate::secrecy_model::{deflection_ev, deflection_fc, Hypothesis, MixtureView};

pub const ROC_CSV_HEADER: &str =
    "threshold,p_fa_fc,p_d_fc,se_fa_fc,se_d_fc,p_fa_ev,p_d_ev,se_fa_ev,se_d_ev";

const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    FusionCenter,
    Eavesdropper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub p_fa_fc: f64,
    pub p_d_fc: f64,
    pub se_fa_fc: f64,
    pub se_d_fc: f64,
    pub p_fa_ev: f64,
    pub p_d_ev: f64,
    pub se_fa_ev: f64,
    pub se_d_ev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocResult {
    /// Sorted by threshold, ascending.
    pub points: Vec<RocPoint>,
    pub trials: usize,
    pub nodes: usize,
    pub injecting_nodes: usize,
    pub empirical_d_fc: f64,
    pub empirical_d_ev: f64,
    /// Closed forms evaluated at the realised injecting fraction `B/L`.
    pub predicted_d_fc: f64,
    pub predicted_d_ev: f64,
    pub auc_fc: f64,
    pub auc_ev: f64,
    #[serde(skip)]
    scores: Scores,
}

/// Network statistics per trial, indexed `[detector][hypothesis]`.
#[derive(Debug, Clone, PartialEq, Default)]
struct Scores {
    fc: [Vec<f64>; 2],
    ev: [Vec<f64>; 2],
}

impl RocResult {
    fn scores(&self, detector: Detector) -> &[Vec<f64>; 2] {
        match detector {
            Detector::FusionCenter => &self.scores.fc,
            Detector::Eavesdropper => &self.scores.ev,
        }
    }

    /// Per-trial network statistics under `hypothesis`.
    pub fn statistics(&self, detector: Detector, hypothesis: Hypothesis) -> &[f64] {
        &self.scores(detector)[hyp_index(hypothesis)]
    }

    /// Detection probability of the threshold test whose false-alarm rate is
    /// the largest achievable value not above `target`.
    pub fn pd_at_pfa(&self, detector: Detector, target: f64) -> f64 {
        let [h0, h1] = self.scores(detector);
        let mut sorted = h0.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let allowed = ((target.clamp(0.0, 1.0) * sorted.len() as f64).floor() as usize)
            .min(sorted.len().saturating_sub(1));
        let threshold = sorted[allowed];
        h1.iter().filter(|&&v| v > threshold).count() as f64 / h1.len() as f64
    }

    /// Area under the empirical ROC curve (Mann-Whitney, ties count half).
    pub fn auc(&self, detector: Detector) -> f64 {
        let [h0, h1] = self.scores(detector);
        mann_whitney(h0, h1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(ROC_CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                p.threshold,
                p.p_fa_fc,
                p.p_d_fc,
                p.se_fa_fc,
                p.se_d_fc,
                p.p_fa_ev,
                p.p_d_ev,
                p.se_fa_ev,
                p.se_d_ev
            );
        }
        out
    }
}

fn hyp_index(h: Hypothesis) -> usize {
    match h {
        Hypothesis::H0 => 0,
        Hypothesis::H1 => 1,
    }
}

fn mann_whitney(h0: &[f64], h1: &[f64]) -> f64 {
    let mut a = h0.to_vec();
    a.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &v in h1 {
        let below = a.partition_point(|&x| x < v);
        let not_above = a.partition_point(|&x| x <= v);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (h0.len() as f64 * h1.len() as f64)
}

struct Chunk {
    scores: Scores,
    clean: [MomentAccumulator; 2],
    injecting: [MomentAccumulator; 2],
    all: [MomentAccumulator; 2],
}

impl Chunk {
    fn new(dim: usize) -> Self {
        let acc = || [MomentAccumulator::new(dim), MomentAccumulator::new(dim)];
        Self {
            scores: Scores::default(),
            clean: acc(),
            injecting: acc(),
            all: acc(),
        }
    }

    fn absorb(&mut self, other: Chunk) {
        for h in 0..2 {
            self.scores.fc[h].extend_from_slice(&other.scores.fc[h]);
            self.scores.ev[h].extend_from_slice(&other.scores.ev[h]);
            self.clean[h].merge(&other.clean[h]);
            self.injecting[h].merge(&other.injecting[h]);
            self.all[h].merge(&other.all[h]);
        }
    }
}

fn rate(count: usize, total: usize) -> (f64, f64) {
    let p = count as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

/// Runs every trial under both hypotheses and sweeps the thresholds. Both
/// detectors score the same draws. Results do not depend on the thread count.
pub fn roc_curve(config: &SimulationConfig) -> Result<RocResult, SimError> {
    let prepared = Prepared::new(config)?;
    let dim = config.matrix.m();
    let make = |view| {
        node_densities(
            &config.matrix,
            &config.signal,
            config.sigma2,
            view,
            &config.profile,
        )
    };
    let clean_pair = make(MixtureView::CleanNode)?;
    let injecting_pair = make(MixtureView::InjectingNode)?;
    let eve_pair = make(MixtureView::Eavesdropper)?;
    let fc_pairs: Vec<&MixturePair> = prepared
        .injecting
        .iter()
        .map(|&f| if f { &injecting_pair } else { &clean_pair })
        .collect();

    let chunks: Vec<usize> = (0..config.trials.div_ceil(CHUNK)).collect();
    let partials: Vec<Chunk> = chunks
        .into_par_iter()
        .map(|c| {
            let mut chunk = Chunk::new(dim);
            let end = ((c + 1) * CHUNK).min(config.trials);
            for trial in c * CHUNK..end {
                for h in Hypothesis::BOTH {
                    let hi = hyp_index(h);
                    let (mut fc, mut ev) = (0.0, 0.0);
                    prepared.sample_with(&config.signal, h, trial as u64, |node, y| {
                        fc += fc_pairs[node].llr(y);
                        ev += eve_pair.llr(y);
                        if prepared.injecting[node] {
                            chunk.injecting[hi].push(y);
                        } else {
                            chunk.clean[hi].push(y);
                        }
                        chunk.all[hi].push(y);
                    });
                    chunk.scores.fc[hi].push(fc);
                    chunk.scores.ev[hi].push(ev);
                }
            }
            chunk
        })
        .collect();
    let mut total = Chunk::new(dim);
    for part in partials {
        total.absorb(part);
    }

    let fraction = config.injecting_fraction();
    let group =
        |acc: &[MomentAccumulator; 2]| super::empirical_deflection_from_moments(&acc[0], &acc[1]);
    let mut empirical_d_fc = 0.0;
    if fraction > 0.0 {
        empirical_d_fc += fraction * group(&total.injecting)?;
    }
    if fraction < 1.0 {
        empirical_d_fc += (1.0 - fraction) * group(&total.clean)?;
    }
    let empirical_d_ev = group(&total.all)?;

    let realised = config.profile.with_alpha(fraction)?;
    let capture = config.matrix.projector().capture(&config.signal);

    let mut thresholds = config.thresholds.clone();
    thresholds.sort_by(f64::total_cmp);
    let trials = config.trials;
    let count = |v: &[f64], t: f64| v.iter().filter(|&&s| s > t).count();
    let points = thresholds
        .iter()
        .map(|&t| {
            let (p_fa_fc, se_fa_fc) = rate(count(&total.scores.fc[0], t), trials);
            let (p_d_fc, se_d_fc) = rate(count(&total.scores.fc[1], t), trials);
            let (p_fa_ev, se_fa_ev) = rate(count(&total.scores.ev[0], t), trials);
            let (p_d_ev, se_d_ev) = rate(count(&total.scores.ev[1], t), trials);
            RocPoint {
                threshold: t,
                p_fa_fc,
                p_d_fc,
                se_fa_fc,
                se_d_fc,
                p_fa_ev,
                p_d_ev,
                se_fa_ev,
                se_d_ev,
            }
        })
        .collect();

    let auc_fc = mann_whitney(&total.scores.fc[0], &total.scores.fc[1]);
    let auc_ev = mann_whitney(&total.scores.ev[0], &total.scores.ev[1]);
    Ok(RocResult {
        points,
        trials,
        nodes: config.nodes,
        injecting_nodes: config.injecting_count(),
        empirical_d_fc,
        empirical_d_ev,
        predicted_d_fc: deflection_fc(capture, config.sigma2, &realised),
        predicted_d_ev: deflection_ev(capture, config.sigma2, &realised),
        auc_fc,
        auc_ev,
        scores: total.scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg_frames::MeasurementMatrix;
    use crate::secrecy_model::NoiseInjectionProfile;
    use nalgebra::DVector;

    fn config(trials: usize) -> SimulationConfig {
        SimulationConfig {
            nodes: 4,
            matrix: MeasurementMatrix::canonical(2, 4).unwrap(),
            signal: DVector::from_vec(vec![0.6, 0.8, 0.0, 0.0]),
            sigma2: 1.0,
            profile: NoiseInjectionProfile::new(0.5, 1.0, 0.3, 0.2, 0.1, 0.4).unwrap(),
            trials,
            seed: 11,
            thresholds: vec![f64::INFINITY, 0.0, f64::NEG_INFINITY, -1.0, 1.0],
        }
    }

    #[test]
    fn extreme_thresholds() {
        let r = roc_curve(&config(600)).unwrap();
        let first = r.points.first().unwrap();
        let last = r.points.last().unwrap();
        assert_eq!(first.threshold, f64::NEG_INFINITY);
        assert_eq!(
            (first.p_fa_fc, first.p_d_fc, first.p_fa_ev, first.p_d_ev),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(
            (last.p_fa_fc, last.p_d_fc, last.p_fa_ev, last.p_d_ev),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn sorted_and_monotone() {
        let r = roc_curve(&config(600)).unwrap();
        for w in r.points.windows(2) {
            assert!(w[0].threshold <= w[1].threshold);
            assert!(w[0].p_fa_fc >= w[1].p_fa_fc && w[0].p_d_fc >= w[1].p_d_fc);
            assert!(w[0].p_fa_ev >= w[1].p_fa_ev && w[0].p_d_ev >= w[1].p_d_ev);
        }
    }

    #[test]
    fn rerun_is_bit_identical() {
        let a = roc_curve(&config(1100)).unwrap();
        let b = roc_curve(&config(1100)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.to_csv().starts_with(ROC_CSV_HEADER));
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = config(1100);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| roc_curve(&cfg)).unwrap();
        let b = four.install(|| roc_curve(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mann_whitney_basics() {
        assert_eq!(mann_whitney(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert_eq!(mann_whitney(&[2.0, 3.0], &[0.0, 1.0]), 0.0);
        assert_eq!(mann_whitney(&[1.0], &[1.0]), 0.5);
    }

    #[test]
    fn pd_at_pfa_extremes() {
        let r = roc_curve(&config(600)).unwrap();
        assert_eq!(
            r.pd_at_pfa(Detector::FusionCenter, 1.0),
            r.pd_at_pfa(Detector::FusionCenter, 0.9999)
        );
        let pd = r.pd_at_pfa(Detector::FusionCenter, 0.1);
        assert!(pd > 0.1 && pd <= 1.0);
    }
}
