use crate::error::{Error, Result};
use crate::policy_net::{forward, PolicyParams};
use crate::rl_env::Observation;

/// Default trailing window for the what-if mean replacement, matching the
/// volatility window.
pub const SENSITIVITY_LOOKBACK: usize = 20;

/// One scalar input's influence on the policy output.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScore {
    /// Coordinate label, e.g. `returns[1:7]` for strategy 1, window slot 7.
    pub name: String,
    /// Average L1 change of the policy output under mean replacement.
    pub raw: f64,
    /// Affine rescaling of `raw` to [0, 100] across features.
    pub scaled: f64,
}

/// Feature influence table, sorted by descending raw sensitivity.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    scores: Vec<FeatureScore>,
    observations_used: usize,
}

impl SensitivityReport {
    /// Scores in rank order (most influential first).
    pub fn scores(&self) -> &[FeatureScore] {
        &self.scores
    }

    /// Feature names in rank order.
    pub fn ranking(&self) -> Vec<&str> {
        self.scores.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn observations_used(&self) -> usize {
        self.observations_used
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn raw_of(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.name == name).map(|s| s.raw)
    }

    pub fn scaled_of(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.name == name).map(|s| s.scaled)
    }
}

/// Number of scalar features in an observation of this shape.
fn feature_count(obs: &Observation) -> usize {
    let (n, w) = obs.returns.dim();
    let (p, _) = obs.context.dim();
    2 * n * w + p * w
}

/// Map a flat feature index to a label and a value accessor.
fn feature_name(obs: &Observation, j: usize) -> String {
    let (n, w) = obs.returns.dim();
    let block = n * w;
    if j < block {
        format!("returns[{}:{}]", j / w, j % w)
    } else if j < 2 * block {
        let k = j - block;
        format!("vols[{}:{}]", k / w, k % w)
    } else {
        let k = j - 2 * block;
        format!("context[{}:{}]", k / w, k % w)
    }
}

fn feature_value(obs: &Observation, j: usize) -> f64 {
    let (n, w) = obs.returns.dim();
    let block = n * w;
    if j < block {
        obs.returns[[j / w, j % w]]
    } else if j < 2 * block {
        let k = j - block;
        obs.vols[[k / w, k % w]]
    } else {
        let k = j - 2 * block;
        obs.context[[k / w, k % w]]
    }
}

fn set_feature(obs: &mut Observation, j: usize, value: f64) {
    let (n, w) = obs.returns.dim();
    let block = n * w;
    if j < block {
        obs.returns[[j / w, j % w]] = value;
    } else if j < 2 * block {
        let k = j - block;
        obs.vols[[k / w, k % w]] = value;
    } else {
        let k = j - 2 * block;
        obs.context[[k / w, k % w]] = value;
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Measure how much each scalar input moves the policy: replace the feature
/// with its trailing `d`-observation mean, rerun the network, and average the
/// L1 change of the output over the stream. Raw values are rescaled to
/// [0, 100] by the min/max across features (all 100 when every feature moves
/// the output equally) and sorted descending.
pub fn feature_sensitivity(
    params: &PolicyParams,
    observations: &[Observation],
    d: usize,
) -> Result<SensitivityReport> {
    if d == 0 {
        return Err(Error::Config("sensitivity lookback must be positive".into()));
    }
    if observations.len() < d {
        return Err(Error::TooShort { need: d, have: observations.len() });
    }
    let first = &observations[0];
    let n_features = feature_count(first);
    for obs in &observations[1..] {
        if obs.returns.dim() != first.returns.dim() || obs.context.dim() != first.context.dim() {
            return Err(Error::Shape("observation stream changes shape".into()));
        }
    }

    let eval_points: Vec<usize> = (d - 1..observations.len()).collect();
    let mut baselines = Vec::with_capacity(eval_points.len());
    for &s in &eval_points {
        baselines.push(forward(params, &observations[s])?.weights().to_vec());
    }

    let mut raw = vec![0.0; n_features];
    let mut scratch = first.clone();
    for (j, slot) in raw.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (&s, baseline) in eval_points.iter().zip(&baselines) {
            let trailing: f64 = (s + 1 - d..=s)
                .map(|u| feature_value(&observations[u], j))
                .sum::<f64>()
                / d as f64;
            scratch.clone_from(&observations[s]);
            set_feature(&mut scratch, j, trailing);
            let replaced = forward(params, &scratch)?;
            acc += l1(baseline, replaced.weights());
        }
        *slot = acc / eval_points.len() as f64;
    }

    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = max - min;
    let mut scores: Vec<FeatureScore> = raw
        .iter()
        .enumerate()
        .map(|(j, r)| FeatureScore {
            name: feature_name(first, j),
            raw: *r,
            scaled: if span == 0.0 { 100.0 } else { 100.0 * (r - min) / span },
        })
        .collect();
    scores.sort_by(|a, b| b.raw.partial_cmp(&a.raw).unwrap_or(std::cmp::Ordering::Equal));
    Ok(SensitivityReport { scores, observations_used: eval_points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_net::{init_params, Activation, ConvSpec, NetworkArch};
    use ndarray::Array2;

    fn small_arch() -> NetworkArch {
        NetworkArch {
            n_assets: 2,
            context_rows: 3,
            window: 6,
            asset_conv: vec![ConvSpec { kernel: 3, channels: 2 }],
            context_conv: vec![ConvSpec { kernel: 3, channels: 2 }],
            merge: vec![],
            activation: Activation::Tanh,
        }
    }

    /// Stream where every entry varies with the observation index, so trailing
    /// means genuinely differ from current values.
    fn varied_stream(arch: &NetworkArch, len: usize) -> Vec<Observation> {
        (0..len)
            .map(|s| {
                let f = s as f64;
                let returns = Array2::from_shape_fn((arch.n_assets, arch.window), |(i, k)| {
                    0.01 * ((f + 1.0) * (i as f64 + 1.0) * 0.3 + k as f64 * 0.07).sin()
                });
                let vols = Array2::from_shape_fn((arch.n_assets, arch.window), |(i, k)| {
                    0.012 + 0.002 * ((f + 2.0) * (i as f64 + 2.0) + k as f64).cos().abs()
                });
                let context = Array2::from_shape_fn((arch.context_rows, arch.window), |(i, k)| {
                    ((f + 1.0) * 0.11 + i as f64 * 0.5 - k as f64 * 0.13).sin()
                });
                Observation::new(returns, vols, context).unwrap()
            })
            .collect()
    }

    #[test]
    fn lookback_default_matches_the_volatility_window() {
        assert_eq!(SENSITIVITY_LOOKBACK, 20);
    }

    #[test]
    fn ignored_block_scores_zero_everywhere() {
        let arch = small_arch();
        let mut params = init_params(&arch, 11).unwrap();
        // Silence the context branch: zero convolution weights and biases make
        // its output identically zero regardless of the context input.
        params.layer_mut("context_conv0.w").unwrap().fill(0.0);
        params.layer_mut("context_conv0.b").unwrap().fill(0.0);
        let stream = varied_stream(&arch, 7);
        let report = feature_sensitivity(&params, &stream, 3).unwrap();
        for i in 0..arch.context_rows {
            for k in 0..arch.window {
                let name = format!("context[{i}:{k}]");
                assert_eq!(report.raw_of(&name).unwrap(), 0.0, "{name}");
                assert_eq!(report.scaled_of(&name).unwrap(), 0.0, "{name}");
            }
        }
        // Return features still move the output, so the scale is not collapsed.
        assert!(report.scores()[0].raw > 0.0);
        assert_eq!(report.scores()[0].scaled, 100.0);
    }

    #[test]
    fn feature_equal_to_its_trailing_mean_scores_zero() {
        let arch = small_arch();
        let params = init_params(&arch, 5).unwrap();
        let mut stream = varied_stream(&arch, 6);
        // Pin one return coordinate to a constant across the stream: its
        // trailing mean equals its value, so replacement is a no-op.
        for obs in &mut stream {
            obs.returns[[0, 2]] = 0.004;
        }
        let report = feature_sensitivity(&params, &stream, 4).unwrap();
        assert_eq!(report.raw_of("returns[0:2]").unwrap(), 0.0);
    }

    #[test]
    fn duplicated_rows_with_tied_weights_score_identically() {
        let arch = small_arch();
        let mut params = init_params(&arch, 21).unwrap();
        let dims = arch.dims().unwrap();
        let per_asset = dims.asset_flat / 2;
        // Tie the head across the two asset blocks: each logit reads its own
        // block with shared weights v, the other block with shared weights u,
        // and the context identically.
        {
            let head_w = params.layer_mut("head.w").unwrap();
            let in_dim = 2 * per_asset + dims.ctx_flat;
            head_w.fill(0.0);
            for i in 0..per_asset {
                let v = 0.2 + 0.04 * i as f64;
                let u = -0.05 + 0.02 * i as f64;
                head_w[i] = v;
                head_w[in_dim + per_asset + i] = v;
                head_w[per_asset + i] = u;
                head_w[in_dim + i] = u;
            }
            for i in 0..dims.ctx_flat {
                head_w[2 * per_asset + i] = 0.03 * i as f64;
                head_w[in_dim + 2 * per_asset + i] = 0.03 * i as f64;
            }
        }
        params.layer_mut("head.b").unwrap().fill(0.0);

        // Make strategy 1 a byte-for-byte duplicate of strategy 0.
        let mut stream = varied_stream(&arch, 7);
        for obs in &mut stream {
            for k in 0..arch.window {
                obs.returns[[1, k]] = obs.returns[[0, k]];
                obs.vols[[1, k]] = obs.vols[[0, k]];
            }
        }
        let report = feature_sensitivity(&params, &stream, 3).unwrap();
        for k in 0..arch.window {
            let a = report.raw_of(&format!("returns[0:{k}]")).unwrap();
            let b = report.raw_of(&format!("returns[1:{k}]")).unwrap();
            assert!((a - b).abs() < 1e-9, "returns slot {k}: {a} vs {b}");
            let va = report.raw_of(&format!("vols[0:{k}]")).unwrap();
            let vb = report.raw_of(&format!("vols[1:{k}]")).unwrap();
            assert!((va - vb).abs() < 1e-9, "vol slot {k}: {va} vs {vb}");
        }
    }

    #[test]
    fn affine_rescaling_preserves_the_ranking() {
        let arch = small_arch();
        let params = init_params(&arch, 33).unwrap();
        let report = feature_sensitivity(&params, &varied_stream(&arch, 8), 3).unwrap();
        let scores = report.scores();
        assert!((scores[0].scaled - 100.0).abs() < 1e-12);
        assert_eq!(scores.last().unwrap().scaled, 0.0);
        for pair in scores.windows(2) {
            assert!(pair[0].raw >= pair[1].raw);
            assert!(pair[0].scaled >= pair[1].scaled);
        }
        let expected = 2 * 2 * 6 + 3 * 6;
        assert_eq!(report.len(), expected);
        assert_eq!(report.observations_used(), 6);
    }

    #[test]
    fn stream_shorter_than_the_lookback_is_rejected() {
        let arch = small_arch();
        let params = init_params(&arch, 1).unwrap();
        let stream = varied_stream(&arch, 4);
        assert!(matches!(
            feature_sensitivity(&params, &stream, 5),
            Err(Error::TooShort { need: 5, have: 4 })
        ));
        assert!(feature_sensitivity(&params, &stream, 4).is_ok());
        assert!(feature_sensitivity(&params, &stream, 0).is_err());
    }

    #[test]
    fn shape_changes_mid_stream_are_rejected() {
        let arch = small_arch();
        let params = init_params(&arch, 1).unwrap();
        let mut stream = varied_stream(&arch, 5);
        stream.push(
            Observation::new(
                Array2::zeros((3, 6)),
                Array2::zeros((3, 6)),
                Array2::zeros((3, 6)),
            )
            .unwrap(),
        );
        assert!(matches!(
            feature_sensitivity(&params, &stream, 3),
            Err(Error::Shape(_))
        ));
    }
}
