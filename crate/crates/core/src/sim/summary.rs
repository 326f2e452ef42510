//! Batch statistics: medians, spread, and the rank correlation between a
//! controller's conservativeness and the energy efficiency it achieves.

use std::io::Write;

use crate::algorithms::AlgorithmId;
use crate::{Error, Result};

use super::{RunRecord, RunTrace};

/// Linear-interpolation quantile (the common spreadsheet/NumPy default).
/// `p` in [0, 1]; the input need not be sorted.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidSetup("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidSetup(format!("quantile level {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// Interquartile range: q75 − q25.
pub fn iqr(values: &[f64]) -> Result<f64> {
    Ok(quantile(values, 0.75)? - quantile(values, 0.25)?)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN in sample"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidSetup(
            "rank correlation needs two equally long samples of at least 2".into(),
        ));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let (mx, my) = (mean(&rx), mean(&ry));
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..rx.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::DegenerateFit("constant sample in rank correlation".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Median efficiency one device sees under one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceEfficiency {
    pub device: String,
    pub median_bpj: f64,
}

/// Distribution of one algorithm's outcomes over the batch seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: AlgorithmId,
    pub runs: usize,
    pub goodput_median_mbps: f64,
    pub goodput_iqr_mbps: f64,
    pub ci_mean: f64,
    pub ci_median: f64,
    pub efficiency: Vec<DeviceEfficiency>,
}

impl AlgorithmSummary {
    pub fn efficiency_for(&self, device: &str) -> Option<f64> {
        self.efficiency.iter().find(|e| e.device == device).map(|e| e.median_bpj)
    }
}

/// One (algorithm, device) point of the conservativeness/efficiency cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct CiEfficiencyPair {
    pub algorithm: AlgorithmId,
    pub mean_ci: f64,
    pub median_efficiency_bpj: f64,
}

/// How strongly, for one device, sitting on conservative working points
/// tracks the energy efficiency actually achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceCorrelation {
    pub device: String,
    pub pairs: Vec<CiEfficiencyPair>,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub algorithms: Vec<AlgorithmSummary>,
    pub correlations: Vec<DeviceCorrelation>,
}

impl BatchSummary {
    pub fn algorithm(&self, id: AlgorithmId) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm == id)
    }

    pub fn correlation_for(&self, device: &str) -> Option<&DeviceCorrelation> {
        self.correlations.iter().find(|c| c.device == device)
    }
}

/// Collapse a batch into per-algorithm distributions and per-device rank
/// correlations. Algorithms keep first-appearance order; the device list
/// is taken from the first record and must match everywhere.
pub fn summarize_runs(records: &[RunRecord]) -> Result<BatchSummary> {
    if records.is_empty() {
        return Err(Error::InvalidSetup("cannot summarize an empty batch".into()));
    }
    let devices: Vec<String> =
        records[0].stats.devices.iter().map(|d| d.device.clone()).collect();
    for r in records {
        let names: Vec<&str> = r.stats.devices.iter().map(|d| d.device.as_str()).collect();
        if names.len() != devices.len() || names.iter().zip(&devices).any(|(a, b)| a != b) {
            return Err(Error::InvalidSetup(
                "records carry different device sets".into(),
            ));
        }
    }

    let mut algorithms: Vec<AlgorithmId> = Vec::new();
    for r in records {
        if !algorithms.contains(&r.algorithm) {
            algorithms.push(r.algorithm);
        }
    }

    let mut summaries = Vec::with_capacity(algorithms.len());
    for &alg in &algorithms {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.algorithm == alg).collect();
        let goodput: Vec<f64> = runs.iter().map(|r| r.stats.goodput_mbps).collect();
        let ci: Vec<f64> = runs.iter().map(|r| r.stats.ci).collect();
        let efficiency = devices
            .iter()
            .enumerate()
            .map(|(k, device)| {
                let mu: Vec<f64> =
                    runs.iter().map(|r| r.stats.devices[k].efficiency_bpj).collect();
                Ok(DeviceEfficiency { device: device.clone(), median_bpj: median(&mu)? })
            })
            .collect::<Result<Vec<_>>>()?;
        summaries.push(AlgorithmSummary {
            algorithm: alg,
            runs: runs.len(),
            goodput_median_mbps: median(&goodput)?,
            goodput_iqr_mbps: iqr(&goodput)?,
            ci_mean: mean(&ci),
            ci_median: median(&ci)?,
            efficiency,
        });
    }

    let mut correlations = Vec::with_capacity(devices.len());
    for device in &devices {
        let pairs: Vec<CiEfficiencyPair> = summaries
            .iter()
            .map(|s| CiEfficiencyPair {
                algorithm: s.algorithm,
                mean_ci: s.ci_mean,
                median_efficiency_bpj: s.efficiency_for(device).expect("device list verified"),
            })
            .collect();
        let x: Vec<f64> = pairs.iter().map(|p| p.mean_ci).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.median_efficiency_bpj).collect();
        correlations.push(DeviceCorrelation {
            device: device.clone(),
            spearman: spearman(&x, &y)?,
            pairs,
        });
    }

    Ok(BatchSummary { algorithms: summaries, correlations })
}

/// Per-run, per-device flat table.
pub fn write_stats_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algorithm",
        "seed",
        "device",
        "goodput_mbps",
        "energy_j",
        "efficiency_bpj",
        "mcs_hat",
        "txp_hat",
        "ci",
    ])
    .map_err(csv_err)?;
    for r in records {
        for d in &r.stats.devices {
            w.write_record([
                r.algorithm.name().to_string(),
                r.seed.to_string(),
                d.device.clone(),
                format!("{:.6}", r.stats.goodput_mbps),
                format!("{:.6}", d.energy_j),
                format!("{:.3}", d.efficiency_bpj),
                format!("{:.6}", r.stats.mcs_hat),
                format!("{:.6}", r.stats.txp_hat),
                format!("{:.6}", r.stats.ci),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The decision step function over time. A closing row at the end of the
/// run repeats the last decision so the final segment has a width.
pub fn write_trace_csv<W: Write>(out: W, trace: &RunTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "mode_mbps", "txp_dbm"]).map_err(csv_err)?;
    let mut row = |t_us: u64, mode_mbps: u32, txp: u8| {
        w.write_record([
            format!("{:.6}", t_us as f64 * 1e-6),
            mode_mbps.to_string(),
            txp.to_string(),
        ])
        .map_err(csv_err)
    };
    for step in &trace.steps {
        row(step.t_us, step.rate_mbps(), step.txp_dbm)?;
    }
    if let Some(last) = trace.steps.last() {
        if last.t_us < trace.duration_us {
            row(trace.duration_us, last.rate_mbps(), last.txp_dbm)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean conservativeness next to the median efficiency it bought, one row
/// per (device, algorithm).
pub fn write_ci_report_csv<W: Write>(out: W, summary: &BatchSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device", "algorithm", "mean_ci", "median_efficiency_bpj"])
        .map_err(csv_err)?;
    for corr in &summary.correlations {
        for pair in &corr.pairs {
            w.write_record([
                corr.device.clone(),
                pair.algorithm.name().to_string(),
                format!("{:.6}", pair.mean_ci),
                format!("{:.3}", pair.median_efficiency_bpj),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_correlation_csv<W: Write>(out: W, summary: &BatchSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device", "spearman"]).map_err(csv_err)?;
    for corr in &summary.correlations {
        w.write_record([corr.device.clone(), format!("{:.6}", corr.spearman)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::DataFormat(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DeviceStat, RunStats};

    #[test]
    fn quantiles_interpolate_linearly() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert!((quantile(&v, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((quantile(&v, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!((median(&v).unwrap() - 2.5).abs() < 1e-12);
        assert!((quantile(&v, 0.25).unwrap() - 1.75).abs() < 1e-12);
        assert!((quantile(&v, 0.75).unwrap() - 3.25).abs() < 1e-12);
        assert!((iqr(&v).unwrap() - 1.5).abs() < 1e-12);
        assert!((median(&[5.0]).unwrap() - 5.0).abs() < 1e-12);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&v, 1.5).is_err());
    }

    #[test]
    fn rank_correlation_handles_monotonicity_and_ties() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let up = [10.0, 20.0, 30.0, 40.0];
        let down = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&x, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &down).unwrap() + 1.0).abs() < 1e-12);

        // Monotone but nonlinear is still a perfect rank match.
        let curved = [1.0, 8.0, 27.0, 64.0];
        assert!((spearman(&x, &curved).unwrap() - 1.0).abs() < 1e-12);

        // Tied pair takes the average rank: x ranks (1, 2.5, 2.5, 4).
        let tied = [1.0, 2.0, 2.0, 3.0];
        let r = spearman(&tied, &x).unwrap();
        // Pearson of (1, 2.5, 2.5, 4) vs (1, 2, 3, 4) = 4.5 / sqrt(4.5 * 5).
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);

        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err(), "constant side");
        assert!(spearman(&[1.0], &[1.0]).is_err(), "too short");
        assert!(spearman(&x, &up[..3]).is_err(), "length mismatch");
    }

    fn record(algorithm: AlgorithmId, seed: u64, goodput: f64, ci: f64, mu: f64) -> RunRecord {
        RunRecord {
            algorithm,
            seed,
            stats: RunStats {
                goodput_mbps: goodput,
                mcs_hat: 0.5,
                txp_hat: 0.5,
                ci,
                devices: vec![
                    DeviceStat {
                        device: "alpha".into(),
                        energy_j: 1.0,
                        efficiency_bpj: mu,
                    },
                    DeviceStat {
                        device: "beta".into(),
                        energy_j: 2.0,
                        efficiency_bpj: 2.0 * mu,
                    },
                ],
            },
        }
    }

    #[test]
    fn summary_reduces_to_known_medians_and_correlations() {
        // Two algorithms, three seeds each. PARF is less conservative
        // (lower CI) and more efficient, so Spearman over two points is -1
        // for every device.
        let records = vec![
            record(AlgorithmId::Parf, 1, 10.0, 1.2, 100.0),
            record(AlgorithmId::Parf, 2, 12.0, 1.4, 140.0),
            record(AlgorithmId::Parf, 3, 11.0, 1.3, 120.0),
            record(AlgorithmId::Rrpaa, 1, 8.0, 2.2, 90.0),
            record(AlgorithmId::Rrpaa, 2, 9.0, 2.4, 80.0),
            record(AlgorithmId::Rrpaa, 3, 7.0, 2.0, 70.0),
        ];
        let summary = summarize_runs(&records).unwrap();
        assert_eq!(summary.algorithms.len(), 2);
        let parf = summary.algorithm(AlgorithmId::Parf).unwrap();
        assert_eq!(parf.runs, 3);
        assert!((parf.goodput_median_mbps - 11.0).abs() < 1e-12);
        assert!((parf.goodput_iqr_mbps - 1.0).abs() < 1e-12);
        assert!((parf.ci_mean - 1.3).abs() < 1e-12);
        assert!((parf.efficiency_for("alpha").unwrap() - 120.0).abs() < 1e-12);
        assert!((parf.efficiency_for("beta").unwrap() - 240.0).abs() < 1e-12);

        assert_eq!(summary.correlations.len(), 2);
        for corr in &summary.correlations {
            assert_eq!(corr.pairs.len(), 2);
            assert!((corr.spearman + 1.0).abs() < 1e-12);
        }

        assert!(summarize_runs(&[]).is_err());
    }

    #[test]
    fn mismatched_device_sets_are_rejected() {
        let mut other = record(AlgorithmId::Parf, 2, 1.0, 1.0, 1.0);
        other.stats.devices.pop();
        let records = vec![record(AlgorithmId::Parf, 1, 1.0, 1.0, 1.0), other];
        assert!(summarize_runs(&records).is_err());
    }

    #[test]
    fn csv_writers_emit_expected_shapes() {
        let records = vec![
            record(AlgorithmId::Parf, 1, 10.0, 1.2, 100.0),
            record(AlgorithmId::Rrpaa, 1, 8.0, 2.2, 90.0),
        ];
        let mut buf = Vec::new();
        write_stats_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "algorithm,seed,device,goodput_mbps,energy_j,efficiency_bpj,mcs_hat,txp_hat,ci"
        );
        assert_eq!(text.lines().count(), 1 + 2 * 2, "one row per run and device");
        assert!(text.contains("parf,1,alpha,10.000000"));

        let summary = summarize_runs(&records).unwrap();
        let mut buf = Vec::new();
        write_ci_report_csv(&mut buf, &summary).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "device,algorithm,mean_ci,median_efficiency_bpj");
        assert_eq!(text.lines().count(), 1 + 2 * 2);

        let mut buf = Vec::new();
        write_correlation_csv(&mut buf, &summary).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2);
        assert!(text.starts_with("device,spearman\n"));
    }

    #[test]
    fn trace_csv_covers_the_whole_duration() {
        use crate::phy::NUM_MODES;
        use crate::sim::TraceStep;
        use std::collections::BTreeMap;

        let trace = RunTrace {
            steps: vec![
                TraceStep { t_us: 0, mode_index: 1, txp_dbm: 17 },
                TraceStep { t_us: 1_500_000, mode_index: 4, txp_dbm: 12 },
            ],
            duration_us: 2_000_000,
            frames_generated: 10,
            frames_delivered: 10,
            attempts: 10,
            tx_us: 0,
            rx_us: 0,
            idle_us: 2_000_000,
            payload_octets: 1500,
            start_distance_m: 10.0,
            end_distance_m: 1.0,
            tx_cell_us: BTreeMap::new(),
            rx_mode_us: [0; NUM_MODES],
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t_s,mode_mbps,txp_dbm");
        assert_eq!(lines[1], "0.000000,6,17");
        assert_eq!(lines[2], "1.500000,18,12");
        assert_eq!(lines[3], "2.000000,18,12", "closing row completes the last segment");
        assert_eq!(lines.len(), 4);
    }
}
