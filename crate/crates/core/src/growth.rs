//! Intrinsic-time clocks and distinct-tag vocabulary trackers.
//!
//! The global clock ticks once per tag assignment. A local clock for a
//! resource or user ticks once per assignment that involves that entity. For
//! each clock we track `N(τ)`, the number of distinct tags seen up to τ, and
//! record it at the checkpoints of a [`SamplingPolicy`].

use std::borrow::Borrow;
use std::fmt;
use std::hash::Hash;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hll::HyperLogLog;
use crate::ingest::{TasRecord, TasRef, TasRow};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrowthError {
    #[error("empty stream: no growth curve is defined")]
    EmptyStream,
    #[error("entity tracking needs resource or user selectors, got the global context")]
    GlobalSelector,
    #[error("invalid sampling policy: {0}")]
    Sampling(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Resource,
    User,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Resource => "resource",
            EntityKind::User => "user",
        }
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which sub-stream a curve is measured on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextSelector<Id = String> {
    Global,
    Entity(EntityKind, Id),
}

impl<Id> ContextSelector<Id> {
    pub fn resource(id: Id) -> Self {
        ContextSelector::Entity(EntityKind::Resource, id)
    }

    pub fn user(id: Id) -> Self {
        ContextSelector::Entity(EntityKind::User, id)
    }

    pub fn kind(&self) -> Option<EntityKind> {
        match self {
            ContextSelector::Global => None,
            ContextSelector::Entity(k, _) => Some(*k),
        }
    }

    pub fn id(&self) -> Option<&Id> {
        match self {
            ContextSelector::Global => None,
            ContextSelector::Entity(_, id) => Some(id),
        }
    }

    pub fn map_id<J>(self, f: impl FnOnce(Id) -> J) -> ContextSelector<J> {
        match self {
            ContextSelector::Global => ContextSelector::Global,
            ContextSelector::Entity(k, id) => ContextSelector::Entity(k, f(id)),
        }
    }
}

/// Which values of τ get recorded. The final τ is always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingPolicy {
    Every,
    /// `round(10^(k/per_decade))` for k = 0, 1, ..., deduplicated; includes τ = 1.
    Log {
        per_decade: u32,
    },
    /// τ = 1 and every multiple of `step`.
    Linear {
        step: u64,
    },
    EndpointOnly,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        SamplingPolicy::Log { per_decade: 50 }
    }
}

impl SamplingPolicy {
    pub fn validate(&self) -> Result<(), GrowthError> {
        match *self {
            SamplingPolicy::Log { per_decade: 0 } => Err(GrowthError::Sampling("per_decade must be positive".into())),
            SamplingPolicy::Linear { step: 0 } => Err(GrowthError::Sampling("step must be positive".into())),
            _ => Ok(()),
        }
    }

    /// First checkpoint (always 1, except endpoint-only sampling).
    pub fn first(&self) -> u64 {
        match self {
            SamplingPolicy::EndpointOnly => u64::MAX,
            _ => 1,
        }
    }

    /// Smallest checkpoint strictly greater than `tau`.
    pub fn next_after(&self, tau: u64) -> u64 {
        match *self {
            SamplingPolicy::Every => tau + 1,
            SamplingPolicy::EndpointOnly => u64::MAX,
            SamplingPolicy::Linear { step } => (tau / step + 1) * step,
            SamplingPolicy::Log { per_decade } => {
                let p = per_decade as f64;
                let mut k = ((tau.max(1) as f64).log10() * p).floor() as i64 - 1;
                loop {
                    let v = 10f64.powf(k as f64 / p).round();
                    if v >= 1.8e19 {
                        return u64::MAX;
                    }
                    if v as u64 > tau {
                        return v as u64;
                    }
                    k += 1;
                }
            }
        }
    }

    /// All checkpoints up to and including `tau_max`.
    pub fn checkpoints(&self, tau_max: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut t = self.first();
        while t < tau_max {
            out.push(t);
            t = self.next_after(t);
        }
        if tau_max > 0 {
            out.push(tau_max);
        }
        out
    }
}

/// Set by the approximate counting mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximationInfo {
    pub precision: u8,
    pub relative_standard_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CountingMode {
    #[default]
    Exact,
    /// HyperLogLog with `2^precision` registers.
    Approximate { precision: u8 },
}

/// Sampled `N(τ)` for one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve<Id = String> {
    pub context: ContextSelector<Id>,
    pub samples: Vec<(u64, u64)>,
    pub tau_max: u64,
    pub n_final: u64,
    pub approximation: Option<ApproximationInfo>,
}

impl<Id> GrowthCurve<Id> {
    /// Builds a curve from samples; the last sample defines the endpoint.
    pub fn from_samples(context: ContextSelector<Id>, samples: Vec<(u64, u64)>) -> Result<Self, GrowthError> {
        let &(tau_max, n_final) = samples.last().ok_or(GrowthError::EmptyStream)?;
        Ok(Self { context, samples, tau_max, n_final, approximation: None })
    }

    /// Curves with fewer than ten assignments give unreliable exponents.
    pub fn is_low_sample(&self) -> bool {
        self.tau_max < 10
    }

    /// Checks the structural invariants of an exactly counted curve.
    pub fn check_invariants(&self) -> Result<(), String> {
        let Some(&(last_tau, last_n)) = self.samples.last() else {
            return Err("no samples".into());
        };
        if (last_tau, last_n) != (self.tau_max, self.n_final) {
            return Err("last sample differs from endpoint".into());
        }
        for w in self.samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(format!("tau not strictly increasing at {}", w[1].0));
            }
            if w[1].1 < w[0].1 {
                return Err(format!("n decreasing at tau {}", w[1].0));
            }
        }
        for &(tau, n) in &self.samples {
            if n > tau || n == 0 {
                return Err(format!("n={n} out of range at tau={tau}"));
            }
        }
        if self.samples[0].0 == 1 && self.samples[0].1 != 1 {
            return Err("N(1) != 1".into());
        }
        Ok(())
    }
}

enum DistinctSet<K> {
    Exact(FxHashSet<K>),
    Approx(HyperLogLog),
}

/// One intrinsic-time clock with its distinct-tag tracker.
pub struct VocabularyClock<K> {
    set: DistinctSet<K>,
    tau: u64,
    distinct: u64,
    next: u64,
    policy: SamplingPolicy,
    samples: Vec<(u64, u64)>,
}

impl<K: Hash + Eq> VocabularyClock<K> {
    pub fn new(policy: SamplingPolicy) -> Self {
        Self::with_mode(policy, CountingMode::Exact)
    }

    pub fn with_mode(policy: SamplingPolicy, mode: CountingMode) -> Self {
        let set = match mode {
            CountingMode::Exact => DistinctSet::Exact(FxHashSet::default()),
            CountingMode::Approximate { precision } => DistinctSet::Approx(HyperLogLog::new(precision)),
        };
        Self { set, tau: 0, distinct: 0, next: policy.first(), policy, samples: Vec::new() }
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    /// Current distinct count (exact mode; the approximate mode refreshes it
    /// at checkpoints only).
    pub fn distinct(&self) -> u64 {
        self.distinct
    }

    /// Advances the clock by one assignment of `tag`. Returns whether the tag
    /// was new (always `false` in approximate mode).
    pub fn observe<Q>(&mut self, tag: &Q) -> bool
    where
        K: Borrow<Q>,
        Q: Hash + Eq + ToOwned<Owned = K> + ?Sized,
    {
        self.tau += 1;
        let new = match &mut self.set {
            DistinctSet::Exact(set) => {
                if set.contains(tag) {
                    false
                } else {
                    set.insert(tag.to_owned());
                    self.distinct += 1;
                    true
                }
            }
            DistinctSet::Approx(hll) => {
                hll.insert(tag);
                false
            }
        };
        if self.tau == self.next {
            self.record();
            self.next = self.policy.next_after(self.tau);
        }
        new
    }

    fn refresh_approx(&mut self) {
        if let DistinctSet::Approx(hll) = &self.set {
            let est = hll.estimate().round() as u64;
            self.distinct = est.max(self.distinct).clamp(1, self.tau);
        }
    }

    fn record(&mut self) {
        self.refresh_approx();
        self.samples.push((self.tau, self.distinct));
    }

    pub fn finish<Id>(mut self, context: ContextSelector<Id>) -> Result<GrowthCurve<Id>, GrowthError> {
        if self.tau == 0 {
            return Err(GrowthError::EmptyStream);
        }
        if self.samples.last().map(|s| s.0) != Some(self.tau) {
            self.record();
        }
        let approximation = match &self.set {
            DistinctSet::Exact(_) => None,
            DistinctSet::Approx(h) => Some(ApproximationInfo {
                precision: h.precision(),
                relative_standard_error: HyperLogLog::relative_standard_error(h.precision()),
            }),
        };
        Ok(GrowthCurve { context, samples: self.samples, tau_max: self.tau, n_final: self.distinct, approximation })
    }
}

/// A tag assignment as seen by the trackers.
pub trait Assignment {
    type Key: Hash + Eq + ToOwned + ?Sized;
    fn tag(&self) -> &Self::Key;
    fn user(&self) -> &Self::Key;
    fn resource(&self) -> &Self::Key;
    /// Ordinal of the post the assignment belongs to.
    fn post(&self) -> u64;

    fn entity(&self, kind: EntityKind) -> &Self::Key {
        match kind {
            EntityKind::Resource => self.resource(),
            EntityKind::User => self.user(),
        }
    }
}

macro_rules! impl_str_assignment {
    ($t:ty) => {
        impl Assignment for $t {
            type Key = str;
            fn tag(&self) -> &str {
                &self.tag
            }
            fn user(&self) -> &str {
                &self.user
            }
            fn resource(&self) -> &str {
                &self.resource
            }
            fn post(&self) -> u64 {
                self.post
            }
        }
    };
}

impl_str_assignment!(TasRecord);
impl_str_assignment!(&TasRecord);

impl Assignment for TasRef<'_> {
    type Key = str;
    fn tag(&self) -> &str {
        self.tag
    }
    fn user(&self) -> &str {
        self.user
    }
    fn resource(&self) -> &str {
        self.resource
    }
    fn post(&self) -> u64 {
        self.post
    }
}

macro_rules! impl_row_assignment {
    ($t:ty) => {
        impl Assignment for $t {
            type Key = u32;
            fn tag(&self) -> &u32 {
                &self.tag
            }
            fn user(&self) -> &u32 {
                &self.user
            }
            fn resource(&self) -> &u32 {
                &self.resource
            }
            fn post(&self) -> u64 {
                self.post as u64
            }
        }
    };
}

impl_row_assignment!(TasRow);
impl_row_assignment!(&TasRow);

type Owned<R> = <<R as Assignment>::Key as ToOwned>::Owned;

/// Global `N(τ)` over the whole assignment stream.
pub fn track_global_vocabulary<R, I>(records: I, sampling: SamplingPolicy) -> Result<GrowthCurve<Owned<R>>, GrowthError>
where
    R: Assignment,
    I: IntoIterator<Item = R>,
    Owned<R>: Hash + Eq + Borrow<R::Key>,
{
    track_global_vocabulary_with(records, sampling, CountingMode::Exact)
}

pub fn track_global_vocabulary_with<R, I>(
    records: I,
    sampling: SamplingPolicy,
    mode: CountingMode,
) -> Result<GrowthCurve<Owned<R>>, GrowthError>
where
    R: Assignment,
    I: IntoIterator<Item = R>,
    Owned<R>: Hash + Eq + Borrow<R::Key>,
{
    sampling.validate()?;
    let mut clock = VocabularyClock::<Owned<R>>::with_mode(sampling, mode);
    for r in records {
        clock.observe(r.tag());
    }
    clock.finish(ContextSelector::Global)
}

/// Local curves keyed in selector order; selectors never seen are listed in
/// `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityCurves<Id> {
    pub curves: Vec<GrowthCurve<Id>>,
    pub missing: Vec<ContextSelector<Id>>,
}

/// Local `N(τ)` for each selected resource or user in a single pass.
pub fn track_entity_vocabularies<R, I>(
    records: I,
    entities: &[ContextSelector<Owned<R>>],
    sampling: SamplingPolicy,
) -> Result<EntityCurves<Owned<R>>, GrowthError>
where
    R: Assignment,
    I: IntoIterator<Item = R>,
    Owned<R>: Hash + Eq + Clone + Borrow<R::Key>,
{
    sampling.validate()?;
    let mut resources: FxHashMap<Owned<R>, usize> = FxHashMap::default();
    let mut users: FxHashMap<Owned<R>, usize> = FxHashMap::default();
    let mut clocks: Vec<VocabularyClock<Owned<R>>> = Vec::new();
    let mut slots = Vec::with_capacity(entities.len());
    for sel in entities {
        let (map, id) = match sel {
            ContextSelector::Global => return Err(GrowthError::GlobalSelector),
            ContextSelector::Entity(EntityKind::Resource, id) => (&mut resources, id),
            ContextSelector::Entity(EntityKind::User, id) => (&mut users, id),
        };
        // duplicate selectors share one clock
        let slot = match map.get::<Owned<R>>(id) {
            Some(&s) => s,
            None => {
                clocks.push(VocabularyClock::new(sampling));
                map.insert(id.clone(), clocks.len() - 1);
                clocks.len() - 1
            }
        };
        slots.push(slot);
    }
    for r in records {
        if !resources.is_empty() {
            if let Some(&s) = resources.get(r.resource()) {
                clocks[s].observe(r.tag());
            }
        }
        if !users.is_empty() {
            if let Some(&s) = users.get(r.user()) {
                clocks[s].observe(r.tag());
            }
        }
    }
    let mut finished: Vec<Option<GrowthCurve<Owned<R>>>> =
        clocks.into_iter().map(|c| c.finish(ContextSelector::Global).ok()).collect();
    let mut curves = Vec::new();
    let mut missing = Vec::new();
    for (sel, slot) in entities.iter().zip(slots) {
        match &mut finished[slot] {
            Some(curve) => curves.push(GrowthCurve { context: sel.clone(), ..curve.clone() }),
            None => missing.push(sel.clone()),
        }
    }
    Ok(EntityCurves { curves, missing })
}

/// Cumulative number of bookmarking posts `U` against local τ for one resource.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccumulationCurve<Id = String> {
    pub resource: Id,
    pub samples: Vec<(u64, u64)>,
}

#[derive(Debug, Default)]
struct AccumulationState {
    tau: u64,
    users: u64,
    last_post: Option<u64>,
    samples: Vec<(u64, u64)>,
}

/// `U(τ)` for each resource, sampled after every post on it. Every post
/// counts as one bookmarking user.
pub fn track_user_accumulation<R, I>(
    records: I,
    resources: &[Owned<R>],
) -> (Vec<UserAccumulationCurve<Owned<R>>>, Vec<Owned<R>>)
where
    R: Assignment,
    I: IntoIterator<Item = R>,
    Owned<R>: Hash + Eq + Clone + Borrow<R::Key>,
{
    let mut index: FxHashMap<Owned<R>, usize> = FxHashMap::default();
    for id in resources {
        let n = index.len();
        index.entry(id.clone()).or_insert(n);
    }
    let mut states: Vec<AccumulationState> = (0..index.len()).map(|_| AccumulationState::default()).collect();
    for r in records {
        if let Some(&i) = index.get(r.resource()) {
            let st = &mut states[i];
            if st.last_post != Some(r.post()) {
                if st.last_post.is_some() {
                    st.samples.push((st.tau, st.users));
                }
                st.users += 1;
                st.last_post = Some(r.post());
            }
            st.tau += 1;
        }
    }
    for st in &mut states {
        if st.last_post.is_some() {
            st.samples.push((st.tau, st.users));
        }
    }
    let mut curves = Vec::new();
    let mut missing = Vec::new();
    for id in resources {
        let st = &states[*index.get::<Owned<R>>(id).unwrap()];
        if st.samples.is_empty() {
            missing.push(id.clone());
        } else {
            curves.push(UserAccumulationCurve { resource: id.clone(), samples: st.samples.clone() });
        }
    }
    (curves, missing)
}
