/// Running per-dimension mean and variance of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub const NORM_CLIP: f64 = 10.0;
pub const NORM_EPS: f64 = 1e-8;

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm {
            count: 0.0,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merge a batch of rows (population statistics, Chan et al. combination).
    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        let d = self.dim();
        let mut n = 0.0;
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for row in rows {
            n += 1.0;
            for i in 0..d {
                let delta = row[i] - mean[i];
                mean[i] += delta / n;
                m2[i] += delta * (row[i] - mean[i]);
            }
        }
        if n == 0.0 {
            return;
        }
        if self.count == 0.0 {
            self.count = n;
            self.mean = mean;
            self.var = m2.iter().map(|m| m / n).collect();
            return;
        }
        let total = self.count + n;
        for i in 0..d {
            let delta = mean[i] - self.mean[i];
            let m_a = self.var[i] * self.count;
            let m_b = m2[i];
            let m = m_a + m_b + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(v, (m, s))| ((v - m) / (s + NORM_EPS).sqrt()).clamp(-NORM_CLIP, NORM_CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incremental_matches_batch() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64, (i as f64 * 0.3).sin() * 4.0])
            .collect();
        let mut a = RunningNorm::new(2);
        a.update(rows.iter().map(|r| r.as_slice()));
        let mut b = RunningNorm::new(2);
        for chunk in rows.chunks(7) {
            b.update(chunk.iter().map(|r| r.as_slice()));
        }
        for i in 0..2 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-10);
            assert!((a.var[i] - b.var[i]).abs() < 1e-9);
        }
        assert!((a.mean[0] - 24.5).abs() < 1e-12);
        let want_var = (0..50).map(|i| (i as f64 - 24.5).powi(2)).sum::<f64>() / 50.0;
        assert!((a.var[0] - want_var).abs() < 1e-9);
    }

    #[test]
    fn normalize_clamps() {
        let mut n = RunningNorm::new(1);
        n.update([[0.0].as_slice(), [2.0].as_slice()]);
        assert!((n.normalize(&[2.0])[0] - 1.0).abs() < 1e-6);
        assert_eq!(n.normalize(&[1e6])[0], NORM_CLIP);
    }
}
