//! Echo suppression, near-end fidelity and DOA classification metrics,
//! plus per-group aggregation into text tables and CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::TalkPattern;

/// Every dB metric is clamped to `±METRIC_CAP_DB`.
pub const METRIC_CAP_DB: f64 = 100.0;

/// Default length of the allowed-distortion filter in [`sdr`].
pub const SDR_FILTER_LEN: usize = 32;

fn db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return if num > 0.0 { METRIC_CAP_DB } else { 0.0 };
    }
    if num <= 0.0 {
        return -METRIC_CAP_DB;
    }
    (10.0 * (num / den).log10()).clamp(-METRIC_CAP_DB, METRIC_CAP_DB)
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn energy(x: &[f64]) -> f64 {
    let mut s = CompensatedSum::default();
    x.iter().for_each(|v| s.add(v * v));
    s.value()
}

/// Echo return loss enhancement `10 log10(Σy² / Σŝ²)`. A silent estimate
/// gives the cap.
pub fn erle(mixture: &[f64], estimate: &[f64]) -> Result<f64> {
    if mixture.len() != estimate.len() {
        return Err(Error::domain(format!(
            "ERLE: mixture has {} samples, estimate {}",
            mixture.len(),
            estimate.len()
        )));
    }
    Ok(db(energy(mixture), energy(estimate)))
}

/// Projection SDR: the estimate is least-squares projected onto
/// `{reference delayed by 0..filter_len}`; the projection is the target
/// and the rest is distortion.
pub fn sdr(reference: &[f64], estimate: &[f64], filter_len: usize) -> Result<f64> {
    let n = reference.len();
    if estimate.len() != n {
        return Err(Error::domain(format!("SDR: reference has {n} samples, estimate {}", estimate.len())));
    }
    if filter_len == 0 || filter_len > n {
        return Err(Error::domain(format!("SDR filter length {filter_len} invalid for {n} samples")));
    }
    if energy(reference) == 0.0 {
        return Err(Error::domain("SDR reference is silent"));
    }
    let l = filter_len;
    // Gram matrix of the delayed copies: G[i][j] = Σ_n s[n-i] s[n-j].
    let full: Vec<f64> = (0..l)
        .map(|k| (0..n - k).map(|m| reference[m] * reference[m + k]).sum())
        .collect();
    let mut g = DMatrix::<f64>::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            let k = j - i;
            // Drop the products whose later sample falls past the end.
            let tail: f64 = (n - j..n - k).map(|m| reference[m] * reference[m + k]).sum();
            g[(i, j)] = full[k] - tail;
            g[(j, i)] = g[(i, j)];
        }
    }
    let b = DVector::from_iterator(
        l,
        (0..l).map(|i| (i..n).map(|t| reference[t - i] * estimate[t]).sum::<f64>()),
    );
    let coef = match Cholesky::new(g.clone()) {
        Some(c) => c.solve(&b),
        None => g
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::Numeric(format!("SDR projection: {e}")))?,
    };
    let mut target = CompensatedSum::default();
    let mut distortion = CompensatedSum::default();
    for t in 0..n {
        let p: f64 = (0..l.min(t + 1)).map(|k| coef[k] * reference[t - k]).sum();
        target.add(p * p);
        distortion.add((estimate[t] - p).powi(2));
    }
    Ok(db(target.value(), distortion.value()))
}

/// Counts over (frame, direction) pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Prf {
    pub fn precision(&self) -> f64 {
        let d = self.tp + self.fp;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.tp + self.fn_;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn merge(&self, other: &Prf) -> Prf {
        Prf {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

/// Precision/recall counts of predicted per-frame direction sets against
/// the labelled ones.
pub fn doa_prf(predicted: &[Vec<usize>], labels: &[Vec<usize>]) -> Result<Prf> {
    if predicted.len() != labels.len() {
        return Err(Error::domain(format!(
            "DOA tracks differ in length: {} predicted, {} labelled frames",
            predicted.len(),
            labels.len()
        )));
    }
    let mut out = Prf::default();
    for (p, l) in predicted.iter().zip(labels) {
        let p: BTreeSet<usize> = p.iter().copied().collect();
        let l: BTreeSet<usize> = l.iter().copied().collect();
        let tp = p.intersection(&l).count() as u64;
        out.tp += tp;
        out.fp += p.len() as u64 - tp;
        out.fn_ += l.len() as u64 - tp;
    }
    Ok(out)
}

/// Metrics for one processed utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario_id: String,
    pub test_set: String,
    pub pattern: TalkPattern,
    pub mode: String,
    pub erle_db: Option<f64>,
    pub sdr_db: Option<f64>,
    /// Counts pooled over the loudspeaker and talker branches.
    pub doa: Option<Prf>,
    pub sdr_filter_len: usize,
}

impl MetricReport {
    /// Computes the metrics the pattern allows: ERLE only under far-end
    /// single talk, SDR only when near-end speech is present.
    pub fn compute(
        scenario_id: &str,
        test_set: &str,
        mode: &str,
        pattern: TalkPattern,
        mixture_ref: &[f64],
        near_direct_ref: &[f64],
        estimate: &[f64],
    ) -> Result<Self> {
        Self::compute_with(scenario_id, test_set, mode, pattern, mixture_ref, near_direct_ref, estimate, SDR_FILTER_LEN)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn compute_with(
        scenario_id: &str,
        test_set: &str,
        mode: &str,
        pattern: TalkPattern,
        mixture_ref: &[f64],
        near_direct_ref: &[f64],
        estimate: &[f64],
        filter_len: usize,
    ) -> Result<Self> {
        let erle_db = match pattern {
            TalkPattern::FarEndSingleTalk => Some(erle(mixture_ref, estimate)?),
            _ => None,
        };
        let sdr_db = if pattern.has_near_end() {
            Some(sdr(near_direct_ref, estimate, filter_len)?)
        } else {
            None
        };
        Ok(Self {
            scenario_id: scenario_id.to_string(),
            test_set: test_set.to_string(),
            pattern,
            mode: mode.to_string(),
            erle_db,
            sdr_db,
            doa: None,
            sdr_filter_len: filter_len,
        })
    }
}

pub const CSV_HEADER: &str = "scenario_id,test_set,pattern,mode,erle_db,sdr_db,doa_p,doa_r,doa_f1";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

pub fn reports_csv(reports: &[MetricReport]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.scenario_id,
            r.test_set,
            r.pattern,
            r.mode,
            opt(r.erle_db),
            opt(r.sdr_db),
            opt(r.doa.map(|d| d.precision())),
            opt(r.doa.map(|d| d.recall())),
            opt(r.doa.map(|d| d.f1())),
        );
    }
    s
}

#[derive(Clone, Copy, Debug, Default)]
struct Mean {
    sum: CompensatedSum,
    count: usize,
}

impl Mean {
    fn add(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.sum.add(v);
            self.count += 1;
        }
    }

    fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum.value() / self.count as f64)
    }
}

/// Means of one `(mode, test_set, pattern)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub mode: String,
    pub test_set: String,
    pub pattern: TalkPattern,
    pub count: usize,
    pub erle_db: Option<f64>,
    pub sdr_db: Option<f64>,
    /// Counts pooled over the group.
    pub doa: Option<Prf>,
}

/// Groups reports by `(mode, test_set, pattern)`. The result is
/// independent of report order.
pub fn aggregate(reports: &[MetricReport]) -> Vec<GroupSummary> {
    type Key = (String, String, &'static str);
    let mut groups: BTreeMap<Key, (TalkPattern, usize, Mean, Mean, Option<Prf>)> = BTreeMap::new();
    let mut sorted: Vec<&MetricReport> = reports.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.scenario_id, a.erle_db.map(f64::to_bits), a.sdr_db.map(f64::to_bits))
            .cmp(&(&b.scenario_id, b.erle_db.map(f64::to_bits), b.sdr_db.map(f64::to_bits)))
    });
    for r in sorted {
        let e = groups
            .entry((r.mode.clone(), r.test_set.clone(), r.pattern.as_str()))
            .or_insert((r.pattern, 0, Mean::default(), Mean::default(), None));
        e.1 += 1;
        e.2.add(r.erle_db);
        e.3.add(r.sdr_db);
        if let Some(d) = r.doa {
            e.4 = Some(e.4.map_or(d, |x| x.merge(&d)));
        }
    }
    groups
        .into_iter()
        .map(|((mode, test_set, _), (pattern, count, erle, sdr, doa))| GroupSummary {
            mode,
            test_set,
            pattern,
            count,
            erle_db: erle.get(),
            sdr_db: sdr.get(),
            doa,
        })
        .collect()
}

pub const SUMMARY_CSV_HEADER: &str = "mode,test_set,pattern,count,erle_db,sdr_db,doa_p,doa_r,doa_f1";

pub fn summary_csv(groups: &[GroupSummary]) -> String {
    let mut s = format!("{SUMMARY_CSV_HEADER}\n");
    for g in groups {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            g.mode,
            g.test_set,
            g.pattern,
            g.count,
            opt(g.erle_db),
            opt(g.sdr_db),
            opt(g.doa.map(|d| d.precision())),
            opt(g.doa.map(|d| d.recall())),
            opt(g.doa.map(|d| d.f1())),
        );
    }
    s
}

/// One row per mode, one column group per test set: PESQ (n/a), SDR for
/// DT and ST_NE, ERLE for ST_FE.
pub fn render_table(groups: &[GroupSummary]) -> String {
    let sets: BTreeSet<&str> = groups.iter().map(|g| g.test_set.as_str()).collect();
    let mut modes: Vec<&str> = Vec::new();
    for g in groups {
        if !modes.contains(&g.mode.as_str()) {
            modes.push(&g.mode);
        }
    }
    let cell = |mode: &str, set: &str, pattern: TalkPattern| -> Option<&GroupSummary> {
        groups
            .iter()
            .find(|g| g.mode == mode && g.test_set == set && g.pattern == pattern)
    };
    let cols = [
        ("PESQ", None),
        ("SDR DT", Some(TalkPattern::DoubleTalk)),
        ("SDR ST_NE", Some(TalkPattern::NearEndSingleTalk)),
        ("ERLE ST_FE", Some(TalkPattern::FarEndSingleTalk)),
    ];
    let mut s = String::new();
    let _ = write!(s, "{:<10}", "mode");
    for set in &sets {
        for (name, _) in &cols {
            let _ = write!(s, " {:>22}", format!("{set}/{name}"));
        }
    }
    s.push('\n');
    for mode in modes {
        let _ = write!(s, "{mode:<10}");
        for set in &sets {
            for (_, pattern) in &cols {
                let v = pattern.and_then(|p| {
                    cell(mode, set, p).and_then(|g| match p {
                        TalkPattern::FarEndSingleTalk => g.erle_db,
                        _ => g.sdr_db,
                    })
                });
                let text = v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"));
                let _ = write!(s, " {text:>22}");
            }
        }
        s.push('\n');
    }
    s
}
