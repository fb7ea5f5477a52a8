//! Behavior-policy overrides for the simulated trust attacks:
//! malicious-with-everyone (ME), on-off (OOA) and opportunistic service (OSA).

use serde::{Deserialize, Serialize};

use crate::domain::{BehaviorConfig, BehaviorDistribution, BehaviorLevel, OracleProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    /// Harmful towards every requester.
    Me,
    /// Honest for `on_windows`, malicious for `off_windows`, repeating.
    Ooa {
        on_windows: u32,
        off_windows: u32,
        /// Number of on/off cycles; `None` repeats forever. After the last
        /// cycle the oracle stays honest.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cycles: Option<u32>,
    },
    /// One harmful window at the policy's start, then honest service only
    /// while its reputation sits within `trigger_margin` of the trust
    /// threshold.
    Osa {
        trigger_margin: f64,
        #[serde(default = "default_stealth_severe")]
        stealth_severe: f64,
    },
}

fn default_stealth_severe() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPolicy {
    #[serde(flatten)]
    pub kind: AttackKind,
    /// First window (1-based) in which the policy is active. Before it the
    /// oracle behaves according to its behavior class.
    #[serde(default = "default_start_window")]
    pub start_window: u32,
}

fn default_start_window() -> u32 {
    1
}

impl AttackPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.start_window < 1 {
            return Err("start_window must be at least 1".into());
        }
        match &self.kind {
            AttackKind::Me => Ok(()),
            AttackKind::Ooa { on_windows, off_windows, .. } => {
                if *on_windows < 1 || *off_windows < 1 {
                    Err("OOA on/off window counts must be at least 1".into())
                } else {
                    Ok(())
                }
            }
            AttackKind::Osa { trigger_margin, stealth_severe } => {
                if !(*trigger_margin >= 0.0) {
                    Err("OSA trigger_margin must be non-negative".into())
                } else if !(0.0..=1.0).contains(stealth_severe) {
                    Err("OSA stealth_severe must lie in [0, 1]".into())
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    On,
    Off,
}

/// Behavior under an ME attack. Independent of the requester.
pub fn me_distribution(cfg: &BehaviorConfig) -> BehaviorDistribution {
    cfg.malicious_with_everyone
}

/// Phase of an on-off attacker in window `window_index` (1-based), counted
/// from the policy's first window.
pub fn ooa_phase(window_index: u32, on: u32, off: u32, cycles: Option<u32>) -> Phase {
    debug_assert!(window_index >= 1 && on >= 1 && off >= 1);
    let offset = window_index - 1;
    let period = on + off;
    if let Some(c) = cycles {
        if offset >= c.saturating_mul(period) {
            return Phase::On;
        }
    }
    if offset % period < on {
        Phase::On
    } else {
        Phase::Off
    }
}

pub fn ooa_distribution(
    window_index: u32,
    on: u32,
    off: u32,
    cycles: Option<u32>,
    cfg: &BehaviorConfig,
) -> BehaviorDistribution {
    match ooa_phase(window_index, on, off, cycles) {
        Phase::On => cfg.trusted,
        Phase::Off => me_distribution(cfg),
    }
}

/// Opportunistic attacker: honest while `current_reputation <= threshold +
/// trigger_margin`, otherwise the malicious distribution with severe mass
/// reduced to `stealth_severe` (the removed mass goes to Safe).
pub fn osa_distribution(
    current_reputation: f64,
    threshold: f64,
    trigger_margin: f64,
    stealth_severe: f64,
    cfg: &BehaviorConfig,
) -> BehaviorDistribution {
    if current_reputation <= threshold + trigger_margin {
        return cfg.trusted;
    }
    stealth(cfg.malicious, stealth_severe)
}

fn stealth(base: BehaviorDistribution, severe: f64) -> BehaviorDistribution {
    let mut d = base.0;
    let sev = BehaviorLevel::SevereHarm.index();
    let moved = d[sev] - severe;
    d[sev] = severe;
    d[BehaviorLevel::Safe.index()] += moved;
    if d[BehaviorLevel::Safe.index()] < 0.0 {
        // Requested severe mass exceeds what Safe can give up; renormalize.
        d[BehaviorLevel::Safe.index()] = 0.0;
        let total: f64 = d.iter().sum();
        d.iter_mut().for_each(|p| *p /= total);
    }
    BehaviorDistribution(d)
}

/// Distribution that governs `profile`'s next response.
///
/// `window_index` is the 1-based window in progress and `reputation` the
/// oracle's latest final reputation.
pub fn effective_distribution(
    profile: &OracleProfile,
    window_index: u32,
    reputation: f64,
    threshold: f64,
    cfg: &BehaviorConfig,
) -> BehaviorDistribution {
    let base = cfg.for_class(profile.behavior_class);
    let Some(policy) = &profile.attack_policy else {
        return base;
    };
    if window_index < policy.start_window {
        return base;
    }
    let local = window_index - policy.start_window + 1;
    match &policy.kind {
        AttackKind::Me => me_distribution(cfg),
        AttackKind::Ooa { on_windows, off_windows, cycles } => {
            // The attack begins with its first "off" burst at start_window.
            let shifted = local + on_windows;
            ooa_distribution(shifted, *on_windows, *off_windows, *cycles, cfg)
        }
        AttackKind::Osa { .. } if local == 1 => me_distribution(cfg),
        AttackKind::Osa { trigger_margin, stealth_severe } => {
            osa_distribution(reputation, threshold, *trigger_margin, *stealth_severe, cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BehaviorClass;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn profile(policy: Option<AttackPolicy>) -> OracleProfile {
        OracleProfile {
            oid: 0,
            cost: 0.5,
            performance: 1000.0,
            service_class: 0,
            stake: 100.0,
            behavior_class: BehaviorClass::Trusted,
            attack_policy: policy,
        }
    }

    #[test]
    fn me_is_requester_independent() {
        let cfg = BehaviorConfig::default();
        assert_eq!(me_distribution(&cfg), me_distribution(&cfg));
        assert_eq!(me_distribution(&cfg).0, [0.10, 0.20, 0.30, 0.40]);
    }

    #[test]
    fn me_severe_draws() {
        let cfg = BehaviorConfig::default();
        let d = me_distribution(&cfg);
        let mut rng = StdRng::seed_from_u64(3);
        let severe =
            (0..10_000).filter(|_| d.sample(&mut rng) == BehaviorLevel::SevereHarm).count();
        assert!((severe as i64 - 4000).abs() <= 150, "severe = {severe}");
    }

    #[test]
    fn ooa_cycle() {
        let phases: Vec<_> = (1..=6).map(|w| ooa_phase(w, 2, 1, None)).collect();
        use Phase::*;
        assert_eq!(phases, vec![On, On, Off, On, On, Off]);
        let single: Vec<_> = (1..=6).map(|w| ooa_phase(w, 2, 1, Some(1))).collect();
        assert_eq!(single, vec![On, On, Off, On, On, On]);
    }

    #[test]
    fn ooa_single_burst_lands_on_start_window() {
        let cfg = BehaviorConfig::default();
        let p = profile(Some(AttackPolicy {
            kind: AttackKind::Ooa { on_windows: 2, off_windows: 1, cycles: Some(1) },
            start_window: 3,
        }));
        let at = |w| effective_distribution(&p, w, 0.5, -1.5, &cfg);
        assert_eq!(at(1), cfg.trusted);
        assert_eq!(at(2), cfg.trusted);
        assert_eq!(at(3), cfg.malicious_with_everyone);
        for w in 4..50 {
            assert_eq!(at(w), cfg.trusted, "window {w}");
        }
    }

    #[test]
    fn osa_trigger() {
        let cfg = BehaviorConfig::default();
        assert_eq!(osa_distribution(-1.4, -1.5, 0.5, 0.02, &cfg), cfg.trusted);
        let far = osa_distribution(3.0, -1.5, 0.5, 0.02, &cfg);
        assert_eq!(far.mass(BehaviorLevel::SevereHarm), 0.02);
        assert!((far.mass(BehaviorLevel::Safe) - 0.63).abs() < 1e-12);
        assert!(far.is_valid());
    }

    #[test]
    fn osa_opens_with_a_burst() {
        let cfg = BehaviorConfig::default();
        let p = profile(Some(AttackPolicy {
            kind: AttackKind::Osa { trigger_margin: 0.5, stealth_severe: 0.02 },
            start_window: 3,
        }));
        assert_eq!(effective_distribution(&p, 2, 0.5, -1.5, &cfg), cfg.trusted);
        assert_eq!(effective_distribution(&p, 3, 0.5, -1.5, &cfg), cfg.malicious_with_everyone);
        assert_eq!(effective_distribution(&p, 4, -1.2, -1.5, &cfg), cfg.trusted);
        let d = effective_distribution(&p, 4, 0.5, -1.5, &cfg);
        assert_eq!(d.mass(BehaviorLevel::SevereHarm), 0.02);
    }

    #[test]
    fn policy_validation() {
        let bad = AttackPolicy {
            kind: AttackKind::Ooa { on_windows: 0, off_windows: 1, cycles: None },
            start_window: 1,
        };
        assert!(bad.validate().is_err());
        let bad = AttackPolicy {
            kind: AttackKind::Osa { trigger_margin: -0.1, stealth_severe: 0.02 },
            start_window: 1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn policy_json_shape() {
        let p: AttackPolicy =
            serde_json::from_str(r#"{"kind":"ooa","on_windows":2,"off_windows":1,"start_window":3}"#)
                .unwrap();
        assert_eq!(p.start_window, 3);
        assert!(serde_json::from_str::<AttackPolicy>(r#"{"kind":"collusion"}"#).is_err());
    }

    proptest! {
        #[test]
        fn distributions_are_normalized(rep in -100.0f64..100.0, w in 1u32..200,
                                        on in 1u32..6, off in 1u32..6,
                                        margin in 0.0f64..5.0, sev in 0.0f64..0.5) {
            let cfg = BehaviorConfig::default();
            prop_assert!(me_distribution(&cfg).is_valid());
            prop_assert!(ooa_distribution(w, on, off, None, &cfg).is_valid());
            prop_assert!(osa_distribution(rep, -1.5, margin, sev, &cfg).is_valid());
        }

        #[test]
        fn ooa_is_periodic(w in 1u32..500, on in 1u32..8, off in 1u32..8) {
            prop_assert_eq!(ooa_phase(w, on, off, None), ooa_phase(w + on + off, on, off, None));
        }
    }
}
