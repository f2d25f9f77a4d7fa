//! PPA report parsing, device-relative utilization, suite tables and
//! before/after modularization rows.
//!
//! Arithmetic is unrounded; two-decimal rounding happens only when rendering.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("invalid device capacity: {0}")]
    Device(String),
}

fn format_err(path: impl Into<String>, message: impl Into<String>) -> ReportError {
    ReportError::Format {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStage {
    Synth,
    Impl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// Vitis HLS `csynth.xml`.
    CsynthXml,
    /// Vitis `export_impl.rpt` text report.
    ImplUtil,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csynth_xml" => Ok(ReportFormat::CsynthXml),
            "impl_util" => Ok(ReportFormat::ImplUtil),
            _ => Err(format!("unknown report format \"{s}\"")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PPAReport {
    pub design: String,
    pub stage: ReportStage,
    pub lut: u64,
    pub ff: u64,
    pub dsp: u64,
    pub bram: u64,
    pub latency_cycles: Option<u64>,
    pub clock_achieved_ns: Option<f64>,
    /// Only taken from reports that carry it; never modeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceCapacity {
    pub part: String,
    pub lut: u64,
    pub ff: u64,
    pub dsp: u64,
    pub bram: u64,
}

impl DeviceCapacity {
    /// ZCU102 (XCZU9EG): 274,080 LUTs, 548,160 FFs, 2,520 DSPs, 1,824 BRAM_18K.
    pub fn zcu102() -> Self {
        DeviceCapacity {
            part: "xczu9eg-ffvb1156-2-e".into(),
            lut: 274_080,
            ff: 548_160,
            dsp: 2_520,
            bram: 1_824,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let cap: DeviceCapacity = serde_json::from_str(text).map_err(|e| ReportError::Device(e.to_string()))?;
        if cap.lut == 0 || cap.ff == 0 || cap.dsp == 0 || cap.bram == 0 {
            return Err(ReportError::Device("all capacities must be positive".into()));
        }
        Ok(cap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct UtilPercent {
    pub lut_pct: f64,
    pub dsp_pct: f64,
}

impl UtilPercent {
    pub fn new(lut_pct: f64, dsp_pct: f64) -> Self {
        UtilPercent { lut_pct, dsp_pct }
    }
}

impl std::fmt::Display for UtilPercent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:.2}, {:.2})", self.lut_pct, self.dsp_pct)
    }
}

/// Percent change per component; `None` where the before value is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub lut: Option<f64>,
    pub dsp: Option<f64>,
}

impl std::fmt::Display for Change {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |v: Option<f64>| v.map_or("undef".to_string(), |x| format!("{x:.2}"));
        write!(f, "({}, {})", show(self.lut), show(self.dsp))
    }
}

pub fn to_percent(r: &PPAReport, cap: &DeviceCapacity) -> UtilPercent {
    UtilPercent {
        lut_pct: 100.0 * r.lut as f64 / cap.lut as f64,
        dsp_pct: 100.0 * r.dsp as f64 / cap.dsp as f64,
    }
}

pub fn change_percent(before: UtilPercent, after: UtilPercent) -> Change {
    let pct = |b: f64, a: f64| (b != 0.0).then(|| 100.0 * (a - b) / b);
    Change {
        lut: pct(before.lut_pct, after.lut_pct),
        dsp: pct(before.dsp_pct, after.dsp_pct),
    }
}

pub fn sum_totals(parts: &[UtilPercent]) -> UtilPercent {
    parts.iter().fold(UtilPercent::default(), |acc, p| UtilPercent {
        lut_pct: acc.lut_pct + p.lut_pct,
        dsp_pct: acc.dsp_pct + p.dsp_pct,
    })
}

pub fn parse_report(text: &str, format: ReportFormat) -> Result<PPAReport, ReportError> {
    match format {
        ReportFormat::CsynthXml => parse_csynth(text),
        ReportFormat::ImplUtil => parse_impl(text),
    }
}

/// Path of elements still open at byte `pos`, for errors in malformed XML.
fn open_path(text: &str, pos: usize) -> String {
    let mut stack: Vec<&str> = Vec::new();
    let mut rest = &text[..pos.min(text.len())];
    while let Some(i) = rest.find('<') {
        rest = &rest[i + 1..];
        let end = rest.find('>').unwrap_or(rest.len());
        let tag = &rest[..end];
        rest = &rest[end..];
        if tag.starts_with('?') || tag.starts_with('!') || tag.ends_with('/') {
            continue;
        }
        match tag.strip_prefix('/') {
            Some(name) if stack.last() == Some(&name.trim()) => {
                stack.pop();
            }
            Some(_) => {}
            None => stack.push(tag.split_whitespace().next().unwrap_or("")),
        }
    }
    if stack.is_empty() {
        "/".into()
    } else {
        stack.join("/")
    }
}

fn byte_offset(text: &str, line: u32, col: u32) -> usize {
    let mut off = 0;
    for (n, l) in text.split_inclusive('\n').enumerate() {
        if n + 1 == line as usize {
            return off + l.char_indices().nth(col.saturating_sub(1) as usize).map_or(l.len(), |(i, _)| i);
        }
        off += l.len();
    }
    text.len()
}

fn parse_csynth(text: &str) -> Result<PPAReport, ReportError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        // unclosed elements are reported at 1:1, so scan the whole text then
        let p = e.pos();
        let at = match (p.row, p.col) {
            (1, 1) => text.len(),
            (row, col) => byte_offset(text, row, col),
        };
        format_err(open_path(text, at), e.to_string())
    })?;
    let root = doc.root_element();
    let child = |path: &[&str]| -> Option<roxmltree::Node> {
        let mut node = root;
        for name in path {
            node = node.children().find(|c| c.has_tag_name(*name))?;
        }
        Some(node)
    };
    let text_at = |path: &[&str]| child(path).map(|n| n.text().unwrap_or("").trim().to_string());
    let full = |path: &[&str]| format!("{}/{}", root.tag_name().name(), path.join("/"));
    let count = |names: &[&str]| -> Result<u64, ReportError> {
        for name in names {
            let path = ["AreaEstimates", "Resources", name];
            if let Some(t) = text_at(&path) {
                return t.parse().map_err(|_| format_err(full(&path), format!("expected a count, got \"{t}\"")));
            }
        }
        Err(format_err(full(&["AreaEstimates", "Resources", names[0]]), "missing"))
    };
    let lut = count(&["LUT"])?;
    let ff = count(&["FF"])?;
    let dsp = count(&["DSP", "DSP48E"])?;
    let bram = count(&["BRAM_18K"])?;
    let latency_path = ["PerformanceEstimates", "SummaryOfOverallLatency", "Worst-caseLatency"];
    let latency_cycles = match text_at(&latency_path) {
        Some(t) if t != "undef" && !t.is_empty() => Some(
            t.parse()
                .map_err(|_| format_err(full(&latency_path), format!("expected cycles, got \"{t}\"")))?,
        ),
        _ => None,
    };
    let clock_path = ["PerformanceEstimates", "SummaryOfTimingAnalysis", "EstimatedClockPeriod"];
    let clock_achieved_ns = match text_at(&clock_path) {
        Some(t) if !t.is_empty() => Some(
            t.parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0)
                .ok_or_else(|| format_err(full(&clock_path), format!("expected a period, got \"{t}\"")))?,
        ),
        _ => None,
    };
    Ok(PPAReport {
        design: text_at(&["UserAssignments", "TopModelName"]).unwrap_or_default(),
        stage: ReportStage::Synth,
        lut,
        ff,
        dsp,
        bram,
        latency_cycles,
        clock_achieved_ns,
        power_w: None,
    })
}

fn parse_impl(text: &str) -> Result<PPAReport, ReportError> {
    let mut design = String::new();
    let mut fields: Vec<(String, String)> = Vec::new();
    let mut clock = None;
    let mut power = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("| Post-Route") {
            clock = rest.trim().trim_matches('|').trim().parse::<f64>().ok();
            continue;
        }
        let line = line.trim_start_matches("* ");
        if let Some((k, v)) = line.split_once(':') {
            let (k, v) = (k.trim(), v.trim());
            match k {
                "Top" => design = v.to_string(),
                "CP achieved post-implementation" => clock = v.parse().ok(),
                "Total On-Chip Power (W)" => power = v.parse().ok(),
                _ => fields.push((k.to_string(), v.to_string())),
            }
        }
    }
    let count = |name: &str| -> Result<u64, ReportError> {
        let path = format!("Resource Summary/{name}");
        let (_, v) = fields
            .iter()
            .find(|(k, _)| k == name)
            .ok_or_else(|| format_err(&path, "missing"))?;
        v.parse().map_err(|_| format_err(&path, format!("expected a count, got \"{v}\"")))
    };
    Ok(PPAReport {
        design,
        stage: ReportStage::Impl,
        lut: count("LUT")?,
        ff: count("FF")?,
        dsp: count("DSP")?,
        bram: count("BRAM")?,
        latency_cycles: None,
        clock_achieved_ns: clock,
        power_w: power,
    })
}

/// Render a synthesis report in the csynth XML layout `parse_report` reads.
pub fn render_csynth_xml(r: &PPAReport, part: &str, target_clock_ns: f64, cap: &DeviceCapacity) -> String {
    let latency = r.latency_cycles.map_or("undef".to_string(), |l| l.to_string());
    let clock = r.clock_achieved_ns.map_or(String::new(), |c| format!("{c}"));
    format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<profile>
  <ReportVersion>
    <Version>2024.1</Version>
  </ReportVersion>
  <UserAssignments>
    <unit>ns</unit>
    <ProductFamily>zynquplus</ProductFamily>
    <Part>{part}</Part>
    <TopModelName>{design}</TopModelName>
    <TargetClockPeriod>{target_clock_ns}</TargetClockPeriod>
  </UserAssignments>
  <PerformanceEstimates>
    <SummaryOfTimingAnalysis>
      <unit>ns</unit>
      <EstimatedClockPeriod>{clock}</EstimatedClockPeriod>
    </SummaryOfTimingAnalysis>
    <SummaryOfOverallLatency>
      <unit>clock cycles</unit>
      <Best-caseLatency>{latency}</Best-caseLatency>
      <Average-caseLatency>{latency}</Average-caseLatency>
      <Worst-caseLatency>{latency}</Worst-caseLatency>
    </SummaryOfOverallLatency>
  </PerformanceEstimates>
  <AreaEstimates>
    <Resources>
      <BRAM_18K>{bram}</BRAM_18K>
      <DSP>{dsp}</DSP>
      <FF>{ff}</FF>
      <LUT>{lut}</LUT>
      <URAM>0</URAM>
    </Resources>
    <AvailableResources>
      <BRAM_18K>{cb}</BRAM_18K>
      <DSP>{cd}</DSP>
      <FF>{cf}</FF>
      <LUT>{cl}</LUT>
      <URAM>0</URAM>
    </AvailableResources>
  </AreaEstimates>
</profile>
"#,
        design = r.design,
        bram = r.bram,
        dsp = r.dsp,
        ff = r.ff,
        lut = r.lut,
        cb = cap.bram,
        cd = cap.dsp,
        cf = cap.ff,
        cl = cap.lut,
    )
}

/// Render an implementation report in the `export_impl.rpt` layout.
pub fn render_impl_util(r: &PPAReport, part: &str, target_clock_ns: f64) -> String {
    let rule = "================================================================";
    let mut s = String::new();
    let _ = writeln!(s, "{rule}\n== Vivado Place & Route Results\n{rule}");
    let _ = writeln!(s, "+ General Information:");
    let _ = writeln!(s, "    * Version:        2024.1");
    let _ = writeln!(s, "    * Top:            {}", r.design);
    let _ = writeln!(s, "    * Target device:  {part}\n");
    let _ = writeln!(s, "{rule}\n== Place & Route Resource Summary\n{rule}");
    let _ = writeln!(s, "LUT:              {}", r.lut);
    let _ = writeln!(s, "FF:               {}", r.ff);
    let _ = writeln!(s, "DSP:              {}", r.dsp);
    let _ = writeln!(s, "BRAM:             {}", r.bram);
    let _ = writeln!(s, "URAM:             0\n");
    let _ = writeln!(s, "{rule}\n== Final Timing Summary\n{rule}");
    let _ = writeln!(s, "+----------------+-------------+");
    let _ = writeln!(s, "| Timing         | Period (ns) |");
    let _ = writeln!(s, "+----------------+-------------+");
    let _ = writeln!(s, "| Target         | {target_clock_ns} |");
    if let Some(c) = r.clock_achieved_ns {
        let _ = writeln!(s, "| Post-Route     | {c} |");
    }
    let _ = writeln!(s, "+----------------+-------------+");
    s
}

/// Suite-level input: the design's best report (implementation over synthesis) and its run status.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub design: String,
    pub report: Option<PPAReport>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteRow {
    pub design: String,
    pub stage: Option<ReportStage>,
    pub lut: Option<u64>,
    pub ff: Option<u64>,
    pub dsp: Option<u64>,
    pub bram: Option<u64>,
    pub lut_pct: Option<f64>,
    pub dsp_pct: Option<f64>,
    pub latency_cycles: Option<u64>,
    pub clock_achieved_ns: Option<f64>,
    pub status: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteTable {
    pub device: String,
    pub rows: Vec<SuiteRow>,
}

pub fn aggregate_suite(entries: &[SuiteEntry], cap: &DeviceCapacity) -> SuiteTable {
    let mut rows: Vec<SuiteRow> = entries
        .iter()
        .map(|e| {
            let pct = e.report.as_ref().map(|r| to_percent(r, cap));
            let r = e.report.as_ref();
            SuiteRow {
                design: e.design.clone(),
                stage: r.map(|r| r.stage),
                lut: r.map(|r| r.lut),
                ff: r.map(|r| r.ff),
                dsp: r.map(|r| r.dsp),
                bram: r.map(|r| r.bram),
                lut_pct: pct.map(|p| p.lut_pct),
                dsp_pct: pct.map(|p| p.dsp_pct),
                latency_cycles: r.and_then(|r| r.latency_cycles),
                clock_achieved_ns: r.and_then(|r| r.clock_achieved_ns),
                status: if e.passed { "pass" } else { "fail" },
            }
        })
        .collect();
    rows.sort_by(|a, b| a.design.cmp(&b.design));
    SuiteTable {
        device: cap.part.clone(),
        rows,
    }
}

impl SuiteTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "design",
            "stage",
            "lut",
            "ff",
            "dsp",
            "bram",
            "lut_pct",
            "dsp_pct",
            "latency_cycles",
            "clock_achieved_ns",
            "status",
        ])
        .expect("in-memory write");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.design.clone(),
                opt(r.stage.map(|s| match s {
                    ReportStage::Synth => "synth".into(),
                    ReportStage::Impl => "impl".into(),
                })),
                opt(r.lut.map(|v| v.to_string())),
                opt(r.ff.map(|v| v.to_string())),
                opt(r.dsp.map(|v| v.to_string())),
                opt(r.bram.map(|v| v.to_string())),
                opt(r.lut_pct.map(|v| format!("{v:.2}"))),
                opt(r.dsp_pct.map(|v| format!("{v:.2}"))),
                opt(r.latency_cycles.map(|v| v.to_string())),
                opt(r.clock_achieved_ns.map(|v| format!("{v:.3}"))),
                r.status.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }
}

/// One before/after modularization row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModularRow {
    pub name: String,
    pub programs: Vec<UtilPercent>,
    pub total_before: UtilPercent,
    pub shared: UtilPercent,
    pub total_after: UtilPercent,
    pub change: Change,
}

impl ModularRow {
    pub fn from_percents(name: &str, programs: Vec<UtilPercent>, shared: UtilPercent, total_after: UtilPercent) -> Self {
        let total_before = sum_totals(&programs);
        ModularRow {
            name: name.to_string(),
            change: change_percent(total_before, total_after),
            programs,
            total_before,
            shared,
            total_after,
        }
    }
}

pub fn modularization_summary(
    name: &str,
    before: &[PPAReport],
    after_shared: &PPAReport,
    after_total: &PPAReport,
    cap: &DeviceCapacity,
) -> ModularRow {
    ModularRow::from_percents(
        name,
        before.iter().map(|r| to_percent(r, cap)).collect(),
        to_percent(after_shared, cap),
        to_percent(after_total, cap),
    )
}

/// Where a modularization row's numbers come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowSource {
    /// Job ids from a run: per-program designs, the shared module alone, the modular design.
    Jobs {
        before: Vec<String>,
        shared: String,
        after: String,
    },
    /// Utilization percents `[lut, dsp]` taken as given.
    Percents {
        programs: Vec<[f64; 2]>,
        shared: [f64; 2],
        after: [f64; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: RowSource,
    /// Published before-total, for comparison only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_total: Option<[f64; 2]>,
    /// Published change, for comparison only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_change: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModularSpec {
    pub rows: Vec<RowSpec>,
}

impl ModularSpec {
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|e| format_err(format!("line {}", e.line()), e.to_string()))
    }
}

impl RowSpec {
    /// Build the row, looking job reports up through `report_of`.
    pub fn resolve(
        &self,
        cap: &DeviceCapacity,
        report_of: impl Fn(&str) -> Option<PPAReport>,
    ) -> Result<ModularRow, String> {
        let pct = |p: &[f64; 2]| UtilPercent::new(p[0], p[1]);
        match &self.source {
            RowSource::Percents { programs, shared, after } => Ok(ModularRow::from_percents(
                &self.name,
                programs.iter().map(pct).collect(),
                pct(shared),
                pct(after),
            )),
            RowSource::Jobs { before, shared, after } => {
                let get = |id: &str| report_of(id).ok_or_else(|| format!("{}: no report for job {id}", self.name));
                let before = before.iter().map(|id| get(id)).collect::<Result<Vec<_>, _>>()?;
                Ok(modularization_summary(&self.name, &before, &get(shared)?, &get(after)?, cap))
            }
        }
    }
}

/// Markdown table with the before/after/change layout, three program columns.
pub fn render_modular_table(rows: &[ModularRow]) -> String {
    let mut s = String::from(
        "| Test Case | P1 | P2 | P3 | Total (before) | Shared | Total (after) | Change (%, %) |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let p = |i: usize| r.programs.get(i).map_or("--".to_string(), |u| u.to_string());
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            r.name,
            p(0),
            p(1),
            if r.programs.len() > 3 {
                format!("{} (+{} more)", p(2), r.programs.len() - 3)
            } else {
                p(2)
            },
            r.total_before,
            r.shared,
            r.total_after,
            r.change
        );
    }
    s
}
