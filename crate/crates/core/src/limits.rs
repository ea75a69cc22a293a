/// Resource caps for the exact (enumerative) engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Maximum number of instantiations an enumeration may visit.
    pub max_instantiations: u128,
    /// Maximum number of matchings enumerated for a single DP state.
    pub max_matchings_per_state: u64,
    /// Maximum number of memoized DP states.
    pub max_states: usize,
}

pub const ENUM_CAP_ENV: &str = "STOCHMATCH_MAX_ENUM";

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_instantiations: 10_000_000,
            max_matchings_per_state: 1_000_000,
            max_states: 2_000_000,
        }
    }
}

impl Limits {
    /// Defaults, with `STOCHMATCH_MAX_ENUM` overriding the instantiation cap.
    pub fn from_env() -> Self {
        let mut limits = Limits::default();
        if let Some(cap) = std::env::var(ENUM_CAP_ENV).ok().and_then(|v| v.trim().parse().ok()) {
            limits.max_instantiations = cap;
        }
        limits
    }

    pub fn with_max_instantiations(mut self, cap: u128) -> Self {
        self.max_instantiations = cap;
        self
    }
}
