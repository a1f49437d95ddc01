//! Ground-truth traffic with known per-state distributions.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{LogRecord, ProductionState, TrafficSample};
use crate::error::{Error, Result};
use crate::ingest::StateMap;
use crate::smp::{CountMatrix, TransitionMatrix, REFERENCE_COUNTS};
use crate::traffic::{run_process, GenerateOptions, PacketSource, SyntheticTrace};

/// `data_id` of the state-change rows in exported synthetic logs.
pub const SYNTH_CONTROL_ID: &str = "machine_state";

/// `data_id` of packet rows in exported synthetic logs.
pub const SYNTH_PACKET_ID: &str = "process_data";

/// Jumps simulated by default; with [`SyntheticSpec::factory_shaped`] this
/// gives about 15000 Running and 500 Reentry and Aborted samples.
pub const DEFAULT_JUMPS: usize = 3000;

/// Log-normal component: ln(x) ~ N(mu, sigma²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl MixtureComponent {
    /// Component with median `median_ms`.
    pub fn median(weight: f64, median_ms: f64, sigma: f64) -> Self {
        Self {
            weight,
            mu: median_ms.ln(),
            sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    /// Interarrival-time mixture in ms.
    pub interarrival: Vec<MixtureComponent>,
    /// Packet size categorical: (bytes, probability).
    pub sizes: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Indexed by state.
    pub states: Vec<StateSpec>,
    /// Transition counts defining the embedded chain.
    pub transition_counts: CountMatrix,
    /// Jump-time log-normal per (from, to); weights unused.
    pub jump_times: [[MixtureComponent; ProductionState::COUNT]; ProductionState::COUNT],
}

impl SyntheticSpec {
    /// Multi-modal per-state mixtures on the reference transition counts,
    /// with jump times tuned for [`DEFAULT_JUMPS`].
    pub fn factory_shaped() -> Self {
        let m = MixtureComponent::median;
        let states = vec![
            StateSpec {
                interarrival: vec![m(0.5, 5.0, 0.3), m(0.3, 50.0, 0.3), m(0.2, 500.0, 0.3)],
                sizes: vec![(64, 0.5), (128, 0.3), (256, 0.2)],
            },
            StateSpec {
                interarrival: vec![m(0.6, 15.0, 0.4), m(0.4, 150.0, 0.5)],
                sizes: vec![(32, 0.4), (96, 0.6)],
            },
            StateSpec {
                interarrival: vec![m(0.7, 30.0, 0.5), m(0.3, 500.0, 0.4)],
                sizes: vec![(32, 0.7), (64, 0.3)],
            },
            StateSpec {
                interarrival: vec![m(0.5, 12.0, 0.3), m(0.5, 80.0, 0.5)],
                sizes: vec![(160, 0.5), (320, 0.5)],
            },
            StateSpec {
                interarrival: vec![m(0.4, 100.0, 0.4), m(0.6, 1000.0, 0.3)],
                sizes: vec![(64, 0.2), (512, 0.8)],
            },
        ];
        let medians = [1390.0, 135.0, 357.0, 260.0, 2300.0];
        let jump_times = medians.map(|med| [m(1.0, med, 0.4); ProductionState::COUNT]);
        Self {
            states,
            transition_counts: REFERENCE_COUNTS,
            jump_times,
        }
    }

    /// The same interarrival mixture and sizes for every state.
    pub fn uniform(interarrival: Vec<MixtureComponent>, sizes: Vec<(u64, f64)>) -> Self {
        let mut spec = Self::factory_shaped();
        spec.states = vec![StateSpec { interarrival, sizes }; ProductionState::COUNT];
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != ProductionState::COUNT {
            return Err(Error::InvalidArgument(format!(
                "spec needs {} states, got {}",
                ProductionState::COUNT,
                self.states.len()
            )));
        }
        for (i, st) in self.states.iter().enumerate() {
            let w: f64 = st.interarrival.iter().map(|c| c.weight).sum();
            let p: f64 = st.sizes.iter().map(|s| s.1).sum();
            let bad = st.interarrival.iter().any(|c| !(c.sigma > 0.0) || !(c.weight >= 0.0) || !c.mu.is_finite())
                || st.sizes.iter().any(|s| !(s.1 >= 0.0) || s.0 % 32 != 0);
            if bad || (w - 1.0).abs() > 1e-9 || (p - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("invalid mixture for state {}", i + 1)));
            }
        }
        TransitionMatrix::from_counts(&self.transition_counts)?;
        for row in &self.jump_times {
            if row.iter().any(|c| !(c.sigma > 0.0) || !c.mu.is_finite()) {
                return Err(Error::InvalidArgument("invalid jump-time distribution".into()));
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> Result<TransitionMatrix> {
        TransitionMatrix::from_counts(&self.transition_counts)
    }

    /// One interarrival draw for `state`.
    pub fn sample_interarrival<R: Rng + ?Sized>(&self, state: ProductionState, rng: &mut R) -> f64 {
        draw_mixture(&self.states[state.index()].interarrival, rng)
    }

    pub fn sample_size<R: Rng + ?Sized>(&self, state: ProductionState, rng: &mut R) -> u64 {
        let sizes = &self.states[state.index()].sizes;
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for &(size, p) in sizes {
            cum += p;
            if u < cum {
                return size;
            }
        }
        sizes[sizes.len() - 1].0
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("spec serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(crate::smp::json_error)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn draw_mixture<R: Rng + ?Sized>(components: &[MixtureComponent], rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut pick = components[components.len() - 1];
    for c in components {
        cum += c.weight;
        if u < cum {
            pick = *c;
            break;
        }
    }
    LogNormal::new(pick.mu, pick.sigma).expect("validated sigma").sample(rng)
}

impl PacketSource for SyntheticSpec {
    fn sample_packets(&self, state: ProductionState, n: usize, rng: &mut dyn RngCore) -> Result<Vec<(f64, u64)>> {
        Ok((0..n)
            .map(|_| {
                let t = self.sample_interarrival(state, rng);
                (t, self.sample_size(state, rng))
            })
            .collect())
    }
}

/// A simulated production run with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub seed: u64,
    pub trace: SyntheticTrace,
    /// Every packet as an interarrival/size sample.
    pub samples: Vec<TrafficSample>,
}

/// Simulates `n_jumps` jumps of the spec's process starting in Running and
/// draws packets from the per-state mixtures.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, n_jumps: usize, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let matrix = spec.matrix()?;
    let opts = GenerateOptions::new(n_jumps, seed);
    let trace = run_process(spec, &opts, |state, rng| {
        if matrix.is_dead(state) {
            return Ok(None);
        }
        let next = matrix.sample_next(state, rng)?;
        let jt = spec.jump_times[state.index()][next.index()];
        let dt = LogNormal::new(jt.mu, jt.sigma).expect("validated sigma").sample(rng);
        Ok(Some((next, dt)))
    })?;
    let samples = trace.episode_samples();
    Ok(SyntheticDataset {
        spec: spec.clone(),
        seed,
        trace,
        samples,
    })
}

impl SyntheticDataset {
    pub fn count(&self, state: ProductionState) -> usize {
        self.samples.iter().filter(|s| s.state == state).count()
    }

    /// Machine-log rows: a state-change row at every episode start and after
    /// the last jump, then one row per packet. Timestamps are rounded to
    /// whole milliseconds after `base_ms`; payloads are raw sizes that
    /// quantize back to the packet size.
    pub fn to_log_records(&self, base_ms: i64) -> Vec<LogRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let at = |t: f64| (base_ms as f64 + t.round()).max(base_ms as f64);
        let control = |t: f64, state: ProductionState| LogRecord {
            processed_ms: at(t),
            data_id: SYNTH_CONTROL_ID.to_string(),
            data_value: state.name().to_string(),
            data_payload: 0,
        };
        let trace = &self.trace;
        let mut out = Vec::with_capacity(trace.packets.len() + trace.jumps.len() + 1);
        let mut packets = trace.packets.iter().peekable();
        let mut start = 0.0;
        let mut state = ProductionState::Running;
        for (episode, jump) in trace.jumps.iter().enumerate() {
            out.push(control(start, state));
            while let Some(p) = packets.next_if(|p| p.episode == episode) {
                let slack = rng.random_range(0..32u64).min(p.size_bytes.saturating_sub(1));
                out.push(LogRecord {
                    processed_ms: at(p.timestamp_ms),
                    data_id: SYNTH_PACKET_ID.to_string(),
                    data_value: format!("{:04x}", rng.random::<u16>()),
                    data_payload: p.size_bytes - slack,
                });
            }
            start = jump.time_ms;
            state = jump.to;
        }
        out.push(control(start, state));
        out
    }

    /// State map matching [`to_log_records`](Self::to_log_records).
    pub fn state_map() -> StateMap {
        let mut map = StateMap::new();
        for s in ProductionState::ALL {
            map.push_rule(SYNTH_CONTROL_ID, &format!("^{}$", s.name()), s)
                .expect("state names are valid patterns");
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::quantize_payload;
    use crate::eval::{build_histogram, kl_masses};
    use crate::ingest::{annotate_states, extract_samples};
    use crate::smp::{count_transitions, embedded_stationary};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn single_component_matches_analytic_density() {
        let spec = SyntheticSpec::uniform(vec![MixtureComponent::median(1.0, 20.0, 0.6)], vec![(64, 1.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| spec.sample_interarrival(ProductionState::Aborted, &mut rng))
            .collect();
        let h = build_histogram(&xs, 50, None).unwrap();
        let n = Normal::new(20f64.ln(), 0.6).unwrap();
        let e = h.edges();
        let mut q: Vec<f64> = e.windows(2).map(|w| n.cdf(w[1]) - n.cdf(w[0])).collect();
        // end bins absorb the tails, as clipping does
        q[0] += n.cdf(e[0]);
        *q.last_mut().unwrap() += 1.0 - n.cdf(e[e.len() - 1]);
        let kl = kl_masses(h.masses(), &q);
        assert!(kl < 0.05, "{kl}");
    }

    #[test]
    fn default_counts_match_reference() {
        let ds = generate_synthetic_dataset(&SyntheticSpec::factory_shaped(), DEFAULT_JUMPS, 0).unwrap();
        for (state, target) in [
            (ProductionState::Running, 15_000.0),
            (ProductionState::Reentry, 500.0),
            (ProductionState::Aborted, 500.0),
        ] {
            let got = ds.count(state) as f64;
            assert!((got / target - 1.0).abs() < 0.2, "{state}: {got}");
        }
        let pi = embedded_stationary(&ds.spec.matrix().unwrap()).unwrap();
        let visits = ds.trace.visit_counts();
        for s in 0..5 {
            assert!((visits[s] as f64 / DEFAULT_JUMPS as f64 - pi[s]).abs() < 0.03);
        }
    }

    #[test]
    fn seeded() {
        let spec = SyntheticSpec::factory_shaped();
        let a = generate_synthetic_dataset(&spec, 200, 5).unwrap();
        let b = generate_synthetic_dataset(&spec, 200, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples, generate_synthetic_dataset(&spec, 200, 6).unwrap().samples);
    }

    #[test]
    fn log_records_ingest_back() {
        let ds = generate_synthetic_dataset(&SyntheticSpec::factory_shaped(), 300, 1).unwrap();
        let records = ds.to_log_records(1_600_000_000_000);
        assert!(records.windows(2).all(|w| w[0].processed_ms <= w[1].processed_ms));
        let annotated = annotate_states(&records, &SyntheticDataset::state_map()).unwrap();
        let (counts, _) = count_transitions(&annotated).unwrap();
        let mut planted = [[0u64; 5]; 5];
        for j in &ds.trace.jumps {
            planted[j.from.index()][j.to.index()] += 1;
        }
        assert_eq!(counts, planted);
        let ingested = extract_samples(&annotated);
        for s in ProductionState::ALL {
            let a = ingested.iter().filter(|x| x.state == s).count() as f64;
            let b = ds.count(s) as f64;
            assert!((a - b).abs() <= 0.05 * b + 5.0, "{s}: {a} vs {b}");
        }
        for (r, p) in records.iter().filter(|r| r.data_id == SYNTH_PACKET_ID).zip(&ds.trace.packets) {
            assert_eq!(quantize_payload(r.data_payload), p.size_bytes);
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SyntheticSpec::factory_shaped();
        assert_eq!(SyntheticSpec::from_json(&spec.to_json()).unwrap(), spec);
        let mut bad = spec.clone();
        bad.states[0].interarrival[0].weight = 0.9;
        assert!(bad.validate().is_err());
    }
}
