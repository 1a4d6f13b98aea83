use crate::vocab::SpecialTokens;

/// Masks illegal continuations so that every decoded sequence follows the
/// transcript grammar.
#[derive(Debug, Clone)]
pub struct LogitRules {
    specials: SpecialTokens,
    timestamps: bool,
    /// Largest timestamp index allowed at the first content position.
    initial_max_index: Option<u32>,
    force_timestamp: bool,
}

impl LogitRules {
    pub fn new(
        specials: SpecialTokens,
        timestamps: bool,
        initial_timestamp_max: Option<f64>,
        force_timestamp: bool,
    ) -> Self {
        Self {
            specials,
            timestamps,
            initial_max_index: initial_timestamp_max.map(|s| (s * 50.0).round() as u32),
            force_timestamp,
        }
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    /// Applies the rules in place. `content` is everything decoded after the
    /// prompt.
    pub fn apply(&self, logits: &mut [f32], content: &[u32]) {
        let sp = &self.specials;
        let ts_base = sp.timestamp_base as usize;
        let end = (sp.end_id() as usize).min(logits.len());
        // Control tokens never appear in content.
        for l in &mut logits[sp.sot as usize..ts_base] {
            *l = f32::NEG_INFINITY;
        }
        if !self.timestamps {
            logits[ts_base..end].fill(f32::NEG_INFINITY);
            return;
        }

        let is_ts = |id: &u32| sp.is_timestamp(*id);
        let last_ts = content.last().is_some_and(is_ts);
        let penult_ts = content.len() < 2 || is_ts(&content[content.len() - 2]);
        if last_ts {
            if penult_ts {
                // An opening timestamp: text (or the end) must follow.
                logits[ts_base..end].fill(f32::NEG_INFINITY);
            } else {
                // A closing timestamp: only a new segment start or the end.
                logits[..sp.eot as usize].fill(f32::NEG_INFINITY);
            }
        }

        if let Some(&prev) = content.iter().rev().find(|id| is_ts(id)) {
            // Segment boundaries may repeat a closing time; otherwise times
            // strictly increase.
            let floor = if last_ts && !penult_ts { prev } else { prev + 1 };
            let stop = (floor as usize).min(end);
            logits[ts_base..stop].fill(f32::NEG_INFINITY);
        }

        if content.is_empty() {
            logits[..ts_base].fill(f32::NEG_INFINITY);
            if let Some(max) = self.initial_max_index {
                let first_banned = (ts_base + max as usize + 1).min(end);
                logits[first_banned..end].fill(f32::NEG_INFINITY);
            }
        }

        if self.force_timestamp {
            let lp = log_softmax(logits);
            let ts_mass = log_sum_exp(&lp[ts_base..end]);
            let best_text = lp[..ts_base].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if ts_mass > best_text {
                logits[..ts_base].fill(f32::NEG_INFINITY);
            }
        }
    }
}

/// Log-softmax in f64; `-inf` inputs stay `-inf`.
pub fn log_softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
    if max == f64::NEG_INFINITY {
        return vec![f64::NEG_INFINITY; logits.len()];
    }
    let z = logits.iter().map(|&l| (l as f64 - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l as f64 - z).collect()
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    x.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(x: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;

    fn setup() -> (SpecialTokens, Vec<f32>) {
        let v = Vocabulary::byte_level();
        (v.specials().clone(), vec![0.0; v.len()])
    }

    fn ts(sp: &SpecialTokens, s: f64) -> u32 {
        sp.timestamp_to_token(s).unwrap()
    }

    #[test]
    fn first_position_bounds_initial_timestamp() {
        let (sp, mut l) = setup();
        LogitRules::new(sp.clone(), true, Some(1.0), false).apply(&mut l, &[]);
        assert_eq!(l[ts(&sp, 2.0) as usize], f32::NEG_INFINITY);
        assert_eq!(l[ts(&sp, 1.0) as usize], 0.0);
        assert_eq!(l[ts(&sp, 1.02) as usize], f32::NEG_INFINITY);
        assert_eq!(l[ts(&sp, 0.0) as usize], 0.0);
        assert_eq!(l[b'a' as usize], f32::NEG_INFINITY);
        assert_eq!(l[sp.eot as usize], f32::NEG_INFINITY);
    }

    #[test]
    fn timestamps_never_decrease() {
        let (sp, mut l) = setup();
        let content = [ts(&sp, 0.0), b'a' as u32, ts(&sp, 3.0)];
        LogitRules::new(sp.clone(), true, Some(1.0), false).apply(&mut l, &content);
        assert_eq!(l[ts(&sp, 2.0) as usize], f32::NEG_INFINITY);
        assert_eq!(l[ts(&sp, 3.0) as usize], 0.0);
        // after a closing timestamp: no text
        assert_eq!(l[b'a' as usize], f32::NEG_INFINITY);
        assert_eq!(l[sp.eot as usize], 0.0);
    }

    #[test]
    fn opening_timestamp_needs_text() {
        let (sp, mut l) = setup();
        let content = [ts(&sp, 0.0), b'a' as u32, ts(&sp, 3.0), ts(&sp, 3.0)];
        LogitRules::new(sp.clone(), true, None, false).apply(&mut l, &content);
        assert!(l[sp.timestamp_base as usize..].iter().all(|v| *v == f32::NEG_INFINITY));
        assert_eq!(l[b'b' as usize], 0.0);
        // inside a segment the end must be later than the start
        let (_, mut l) = setup();
        let content = [ts(&sp, 0.5), b'a' as u32];
        LogitRules::new(sp.clone(), true, None, false).apply(&mut l, &content);
        assert_eq!(l[ts(&sp, 0.5) as usize], f32::NEG_INFINITY);
        assert_eq!(l[ts(&sp, 0.52) as usize], 0.0);
    }

    #[test]
    fn control_tokens_masked() {
        let (sp, mut l) = setup();
        LogitRules::new(sp.clone(), false, None, false).apply(&mut l, &[b'x' as u32]);
        for id in [sp.sot, sp.transcribe, sp.translate, sp.prev, sp.no_speech, sp.no_timestamps] {
            assert_eq!(l[id as usize], f32::NEG_INFINITY);
        }
        assert_eq!(l[sp.language("en").unwrap() as usize], f32::NEG_INFINITY);
        assert_eq!(l[ts(&sp, 0.0) as usize], f32::NEG_INFINITY);
        assert_eq!(l[sp.eot as usize], 0.0);
    }

    #[test]
    fn timestamp_mass_forces_timestamp() {
        let (sp, mut l) = setup();
        // Many mildly likely timestamps outweigh one strong text token.
        l[b'a' as usize] = 3.0;
        let content = [ts(&sp, 0.0), b'a' as u32];
        let mut forced = l.clone();
        LogitRules::new(sp.clone(), true, None, true).apply(&mut forced, &content);
        assert_eq!(forced[b'a' as usize], f32::NEG_INFINITY);
        LogitRules::new(sp.clone(), true, None, false).apply(&mut l, &content);
        assert_eq!(l[b'a' as usize], 3.0);
    }

    #[test]
    fn masking_keeps_legal_argmax() {
        let (sp, mut l) = setup();
        for (i, v) in l.iter_mut().enumerate() {
            *v = ((i * 37 % 101) as f32) / 10.0;
        }
        let content = [ts(&sp, 0.0), b'a' as u32];
        l[b'q' as usize] = 50.0;
        let before = argmax(&l);
        LogitRules::new(sp, true, Some(1.0), true).apply(&mut l, &content);
        assert_eq!(argmax(&l), before);
    }

    #[test]
    fn helpers() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        let lp = log_softmax(&[0.0, f32::NEG_INFINITY, 0.0]);
        assert!((lp[0] - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(lp[1], f64::NEG_INFINITY);
        assert!((log_sum_exp(&lp) - 0.0).abs() < 1e-12);
    }
}
