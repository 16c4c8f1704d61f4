//! Always-on wake-up controller: power modes, per-domain isolation and
//! power-gate sequencing, RTC-timed wake-ups and sleep power.
//!
//! A top-level FSM picks the domains to switch; a bottom-level FSM walks
//! each one through isolate -> gate off, or gate on -> release isolation,
//! one AON cycle per step.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};

/// AON cycles from a wake request to a running core.
pub const WAKE_CYCLES: u64 = 26;

pub fn wake_latency(aon_freq: f64) -> f64 {
    WAKE_CYCLES as f64 / aon_freq
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PowerMode {
    FullActive,
    DataAcq,
    LpDataAcq,
    DeepSleep,
    /// Unidentified fifth mode; behaves as FULL_ACTIVE.
    Reserved,
}

impl PowerMode {
    pub const ALL: [PowerMode; 5] = [
        PowerMode::FullActive,
        PowerMode::DataAcq,
        PowerMode::LpDataAcq,
        PowerMode::DeepSleep,
        PowerMode::Reserved,
    ];

    fn canonical(self) -> Self {
        if self == PowerMode::Reserved {
            PowerMode::FullActive
        } else {
            self
        }
    }

    fn can_reach(self, to: PowerMode) -> bool {
        use PowerMode::*;
        matches!(
            (self.canonical(), to.canonical()),
            (FullActive, _) | (DataAcq, FullActive) | (LpDataAcq, FullActive) | (DeepSleep, FullActive)
        )
    }
}

impl fmt::Display for PowerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        write!(f, "{}", s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

/// Switchable power domains. The always-on domain is not listed: it never
/// changes state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// RISC-V core and accelerator control.
    Logic,
    FlexmlL1,
    /// 448 kB of L2.
    L2Main,
    /// 64 kB of L2 kept alive in low-power acquisition.
    L2Retentive,
    Udma,
    Mram,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::Logic,
        Domain::FlexmlL1,
        Domain::L2Main,
        Domain::L2Retentive,
        Domain::Udma,
        Domain::Mram,
    ];
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        write!(f, "{}", s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainState {
    pub powered: bool,
    pub isolated: bool,
    pub clock_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ModeRequest,
    DomainIso,
    DomainGate,
    WakeComplete,
    RtcExpire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WucEvent {
    /// AON cycles since reset.
    pub t: u64,
    pub kind: EventKind,
    pub domain: Option<Domain>,
    pub detail: String,
}

/// Which domains stay powered in each mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMap {
    pub modes: BTreeMap<PowerMode, Vec<Domain>>,
}

impl Default for DomainMap {
    fn default() -> Self {
        use Domain::*;
        let active = vec![Logic, FlexmlL1, L2Main, L2Retentive, Udma];
        let modes = BTreeMap::from([
            (PowerMode::FullActive, active.clone()),
            (PowerMode::Reserved, active),
            (PowerMode::DataAcq, vec![L2Main, L2Retentive, Udma]),
            (PowerMode::LpDataAcq, vec![L2Retentive, Udma]),
            (PowerMode::DeepSleep, vec![]),
        ]);
        Self { modes }
    }
}

impl DomainMap {
    pub fn powered(&self, mode: PowerMode, d: Domain) -> bool {
        self.modes.get(&mode).is_some_and(|v| v.contains(&d))
    }
}

/// Sleep-power parameters, in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WucParams {
    pub aon_leak: f64,
    /// AON dynamic power per hertz of AON clock.
    pub aon_w_per_hz: f64,
    pub l2_leak_per_kb: f64,
    /// uDMA plus sensor interface while acquiring.
    pub udma_active: f64,
    pub logic_leak: f64,
    pub l1_leak: f64,
    pub mram_leak: f64,
}

impl Default for WucParams {
    /// Fit to deep sleep at 1.7 uW (33 kHz) and 22.8 uW (40 MHz), and the
    /// acquisition modes at 23.6 and 67 uW; L2 leakage is uniform per kB.
    fn default() -> Self {
        let uw = 1e-6;
        let k = (22.8 - 1.7) * uw / (40e6 - 33e3);
        Self {
            aon_leak: 1.7 * uw - k * 33e3,
            aon_w_per_hz: k,
            l2_leak_per_kb: 43.4 * uw / 448.0,
            udma_active: (23.6 - 1.7 - 6.2) * uw,
            logic_leak: 2.0 * uw,
            l1_leak: 16.2 * uw,
            mram_leak: 0.4 * uw,
        }
    }
}

impl WucParams {
    pub fn validate(&self) -> Result<()> {
        let v = [
            self.aon_leak,
            self.aon_w_per_hz,
            self.l2_leak_per_kb,
            self.udma_active,
            self.logic_leak,
            self.l1_leak,
            self.mram_leak,
        ];
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(FlexError::MissingParam("WuC power parameters must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn aon_power(&self, aon_freq: f64) -> f64 {
        self.aon_leak + self.aon_w_per_hz * aon_freq
    }

    fn domain_power(&self, d: Domain) -> f64 {
        match d {
            Domain::Logic => self.logic_leak,
            Domain::FlexmlL1 => self.l1_leak,
            Domain::L2Main => self.l2_leak_per_kb * 448.0,
            Domain::L2Retentive => self.l2_leak_per_kb * 64.0,
            Domain::Udma => self.udma_active,
            Domain::Mram => self.mram_leak,
        }
    }
}

/// Power in a mode with no workload running: leakage of the powered domains
/// plus the AON domain.
pub fn sleep_power(mode: PowerMode, aon_freq: f64, params: &WucParams, map: &DomainMap) -> Result<f64> {
    params.validate()?;
    if !map.modes.contains_key(&mode) {
        return Err(FlexError::MissingParam(format!("no domain list for {mode}")));
    }
    let domains: f64 = Domain::ALL
        .iter()
        .filter(|&&d| map.powered(mode, d))
        .map(|&d| params.domain_power(d))
        .sum();
    Ok(params.aon_power(aon_freq) + domains)
}

/// Deep-sleep power and wake latency at an AON clock.
pub fn aon_power_tradeoff(aon_freq: f64, params: &WucParams) -> Result<(f64, f64)> {
    if !(33e3..=40e6).contains(&aon_freq) {
        return Err(FlexError::Range(format!("AON clock {aon_freq} Hz outside [33 kHz, 40 MHz]")));
    }
    Ok((params.aon_power(aon_freq), wake_latency(aon_freq)))
}

#[derive(Debug, Clone)]
pub struct Wuc {
    pub mode: PowerMode,
    pub domains: BTreeMap<Domain, DomainState>,
    pub map: DomainMap,
    pub aon_freq: f64,
    pub core_freq: f64,
    /// AON cycles since reset.
    pub now: u64,
    pub log: Vec<WucEvent>,
}

impl Wuc {
    /// Starts in FULL_ACTIVE with the mode's domains up.
    pub fn new(map: DomainMap, aon_freq: f64, core_freq: f64) -> Self {
        let domains = Domain::ALL
            .iter()
            .map(|&d| {
                let on = map.powered(PowerMode::FullActive, d);
                (
                    d,
                    DomainState {
                        powered: on,
                        isolated: !on,
                        clock_hz: if on { core_freq } else { 0.0 },
                    },
                )
            })
            .collect();
        Self {
            mode: PowerMode::FullActive,
            domains,
            map,
            aon_freq,
            core_freq,
            now: 0,
            log: Vec::new(),
        }
    }

    fn emit(&mut self, kind: EventKind, domain: Option<Domain>, detail: String) {
        self.log.push(WucEvent {
            t: self.now,
            kind,
            domain,
            detail,
        });
    }

    fn power_down(&mut self, d: Domain) {
        self.now += 1;
        self.emit(EventKind::DomainIso, Some(d), "enable".into());
        let s = self.domains.get_mut(&d).expect("all domains tracked");
        s.isolated = true;
        s.clock_hz = 0.0;
        self.now += 1;
        self.emit(EventKind::DomainGate, Some(d), "off".into());
        self.domains.get_mut(&d).expect("tracked").powered = false;
    }

    fn power_up(&mut self, d: Domain) {
        self.now += 1;
        self.emit(EventKind::DomainGate, Some(d), "on".into());
        self.domains.get_mut(&d).expect("tracked").powered = true;
        self.now += 1;
        self.emit(EventKind::DomainIso, Some(d), "disable".into());
        let s = self.domains.get_mut(&d).expect("tracked");
        s.isolated = false;
        s.clock_hz = self.core_freq;
    }

    /// Moves to `target`, optionally arming the RTC to wake back to
    /// FULL_ACTIVE after `rtc_deadline_ms`. Returns the events emitted.
    pub fn request_mode(&mut self, target: PowerMode, rtc_deadline_ms: Option<f64>) -> Result<Vec<WucEvent>> {
        let start = self.log.len();
        if target == self.mode {
            return Ok(Vec::new());
        }
        if !self.mode.can_reach(target) {
            return Err(FlexError::IllegalTransition {
                from: self.mode.to_string(),
                to: target.to_string(),
            });
        }
        let t0 = self.now;
        self.emit(EventKind::ModeRequest, None, format!("{} -> {target}", self.mode));
        let from = self.mode;
        // shut down first, then bring up, each in domain order
        for d in Domain::ALL {
            if self.domains[&d].powered && !self.map.powered(target, d) {
                self.power_down(d);
            }
        }
        let mut woke = false;
        for d in Domain::ALL {
            if !self.domains[&d].powered && self.map.powered(target, d) {
                self.power_up(d);
                woke = true;
            }
        }
        if from == PowerMode::DeepSleep {
            // boot code is fetched from MRAM, which is released afterwards
            self.power_up(Domain::Mram);
            self.power_down(Domain::Mram);
        }
        if woke {
            debug_assert!(self.now - t0 <= WAKE_CYCLES);
            self.now = t0 + WAKE_CYCLES;
            self.emit(EventKind::WakeComplete, None, format!("{target}"));
        }
        self.mode = target;
        if let Some(ms) = rtc_deadline_ms {
            if !(ms >= 0.0) {
                return Err(FlexError::Range(format!("RTC deadline {ms} ms")));
            }
            let at = t0 + (ms * 1e-3 * self.aon_freq).ceil() as u64;
            self.now = self.now.max(at);
            self.emit(EventKind::RtcExpire, None, format!("{ms} ms"));
            if target != PowerMode::FullActive {
                self.request_mode(PowerMode::FullActive, None)?;
            }
        }
        Ok(self.log[start..].to_vec())
    }

    pub fn write_log_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "timestamp_cycles,kind,domain,detail")?;
        for e in &self.log {
            let kind = serde_json::to_value(e.kind)?;
            writeln!(
                w,
                "{},{},{},{}",
                e.t,
                kind.as_str().unwrap_or(""),
                e.domain.map(|d| d.to_string()).unwrap_or_default(),
                e.detail
            )?;
        }
        Ok(())
    }
}

/// Checks a log: timestamps never decrease, isolation is enabled before a
/// gate turns off and released only after it turns back on.
pub fn check_sequencing(log: &[WucEvent]) -> std::result::Result<(), String> {
    let mut iso: BTreeMap<Domain, bool> = BTreeMap::new();
    let mut on: BTreeMap<Domain, bool> = BTreeMap::new();
    let mut last = 0;
    for (i, e) in log.iter().enumerate() {
        if e.t < last {
            return Err(format!("event {i} goes back in time"));
        }
        last = e.t;
        let Some(d) = e.domain else { continue };
        match (e.kind, e.detail.as_str()) {
            (EventKind::DomainIso, "enable") => {
                iso.insert(d, true);
            }
            (EventKind::DomainIso, "disable") => {
                if !on.get(&d).copied().unwrap_or(true) {
                    return Err(format!("event {i}: {d} isolation released while gated"));
                }
                iso.insert(d, false);
            }
            (EventKind::DomainGate, "off") => {
                if !iso.get(&d).copied().unwrap_or(false) {
                    return Err(format!("event {i}: {d} gated without isolation"));
                }
                on.insert(d, false);
            }
            (EventKind::DomainGate, "on") => {
                on.insert(d, true);
            }
            _ => return Err(format!("event {i}: unexpected {:?} {}", e.kind, e.detail)),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wuc() -> Wuc {
        Wuc::new(DomainMap::default(), 33e3, 5e6)
    }

    #[test]
    fn wake_latency_points() {
        assert!((wake_latency(33e3) * 1e6 - 787.9).abs() < 0.1);
        assert!((wake_latency(40e6) * 1e9 - 650.0).abs() < 1e-6);
        assert!((wake_latency(1e6) * 1e6 - 26.0).abs() < 1e-9);
    }

    #[test]
    fn deep_sleep_gates_everything_then_wakes_in_26_cycles() {
        let mut w = wuc();
        w.request_mode(PowerMode::DeepSleep, None).unwrap();
        assert!(w.domains.values().all(|s| !s.powered && s.isolated));
        let t0 = w.now;
        let ev = w.request_mode(PowerMode::FullActive, None).unwrap();
        let wake = ev.iter().find(|e| e.kind == EventKind::WakeComplete).unwrap();
        assert_eq!(wake.t - t0, WAKE_CYCLES);
        assert!(!w.domains[&Domain::Mram].powered);
        check_sequencing(&w.log).unwrap();
    }

    #[test]
    fn lp_acquisition_keeps_retentive_l2() {
        let mut w = wuc();
        w.request_mode(PowerMode::LpDataAcq, None).unwrap();
        assert!(!w.domains[&Domain::L2Main].powered);
        assert!(w.domains[&Domain::L2Retentive].powered);
        assert!(w.domains[&Domain::Udma].powered);
    }

    #[test]
    fn illegal_and_idempotent_requests() {
        let mut w = wuc();
        assert!(w.request_mode(PowerMode::FullActive, None).unwrap().is_empty());
        w.request_mode(PowerMode::DeepSleep, None).unwrap();
        let n = w.log.len();
        assert!(matches!(
            w.request_mode(PowerMode::DataAcq, None),
            Err(FlexError::IllegalTransition { .. })
        ));
        assert_eq!(w.log.len(), n);
        assert_eq!(w.mode, PowerMode::DeepSleep);
    }

    #[test]
    fn rtc_wakes_back_up() {
        let mut w = wuc();
        let ev = w.request_mode(PowerMode::DeepSleep, Some(1000.0)).unwrap();
        let rtc = ev.iter().find(|e| e.kind == EventKind::RtcExpire).unwrap();
        assert_eq!(rtc.t, 33_000);
        assert_eq!(w.mode, PowerMode::FullActive);
    }

    #[test]
    fn sleep_powers_at_calibration_points() {
        let (p, m) = (WucParams::default(), DomainMap::default());
        let uw = |mode| sleep_power(mode, 33e3, &p, &m).unwrap() * 1e6;
        assert!((uw(PowerMode::DeepSleep) - 1.7).abs() < 1e-9);
        assert!((uw(PowerMode::LpDataAcq) - 23.6).abs() < 1e-9);
        assert!((uw(PowerMode::DataAcq) - 67.0).abs() < 1e-9);
        assert!(uw(PowerMode::FullActive) > uw(PowerMode::DataAcq));
        let (hi, lat) = aon_power_tradeoff(40e6, &p).unwrap();
        assert!((hi * 1e6 - 22.8).abs() < 1e-9);
        assert!((lat * 1e9 - 650.0).abs() < 1e-6);
        assert!(aon_power_tradeoff(10.0, &p).is_err());
    }

    #[test]
    fn csv_log() {
        let mut w = wuc();
        w.request_mode(PowerMode::DeepSleep, None).unwrap();
        let mut buf = Vec::new();
        w.write_log_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("timestamp_cycles,kind,domain,detail\n0,mode_request,,"));
        assert!(s.contains("domain_iso,logic,enable"));
    }
}
