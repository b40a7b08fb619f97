//! Per-epoch metrics CSV and the JSONL event stream.

use std::io::Write;

use super::train::{EpochMetrics, TrainEvent};

pub const METRICS_COLUMNS: [&str; 10] = [
    "epoch",
    "stage",
    "mean_return",
    "success_rate",
    "r1_mean",
    "r2_mean",
    "r3_mean",
    "policy_loss",
    "value_loss",
    "entropy",
];

pub struct MetricsWriter<W: Write> {
    csv: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(w: W) -> csv::Result<Self> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(METRICS_COLUMNS)?;
        Ok(MetricsWriter { csv })
    }

    pub fn write(&mut self, m: &EpochMetrics) -> csv::Result<()> {
        self.csv.write_record([
            m.epoch.to_string(),
            m.stage.to_string(),
            m.mean_return.to_string(),
            m.success_rate.to_string(),
            m.r1_mean.to_string(),
            m.r2_mean.to_string(),
            m.r3_mean.to_string(),
            m.policy_loss.to_string(),
            m.value_loss.to_string(),
            m.entropy.to_string(),
        ])?;
        self.csv.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.csv.into_inner().ok().expect("flushed writer")
    }
}

/// Write one event as a JSON line.
pub fn write_event(w: &mut impl Write, ev: &TrainEvent) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, ev)?;
    w.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(epoch: u32) -> EpochMetrics {
        EpochMetrics {
            epoch,
            stage: 0,
            mean_return: 1.5,
            success_rate: 0.25,
            r1_mean: 0.1,
            r2_mean: 0.2,
            r3_mean: 0.3,
            policy_loss: -0.01,
            value_loss: 2.0,
            entropy: 3.0,
            approx_kl: 0.0,
            clip_fraction: 0.0,
            episodes: 4,
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let mut w = MetricsWriter::new(Vec::new()).unwrap();
        w.write(&m(1)).unwrap();
        w.write(&m(2)).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), METRICS_COLUMNS);
        let rows: Vec<_> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[1][0], "2");
        assert_eq!(rows[0][2].parse::<f64>().unwrap(), 1.5);
    }

    #[test]
    fn events_are_tagged_json_lines() {
        let mut out = Vec::new();
        write_event(&mut out, &TrainEvent::Epoch(m(1))).unwrap();
        write_event(
            &mut out,
            &TrainEvent::StageTransition {
                epoch: 3,
                from_stage: 0,
                to_stage: 1,
                best_return: 2.0,
            },
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["event"], "epoch");
        assert_eq!(lines[1]["event"], "stage_transition");
        assert_eq!(lines[1]["to_stage"], 1);
    }
}
