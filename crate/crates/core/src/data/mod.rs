//! Files, trade data and the analytics built on decoded regimes.

pub mod analytics;
pub mod formats;
pub mod trades;

pub use analytics::{
    imbalance_at_transitions, mid_series, price_response, read_lob, seasonality_profile, Estimate, ImbalanceSamples,
    LobSnapshot, ResponseCell, SeasonalityProfile,
};
pub use formats::{
    load_model, read_events, read_states, save_model, write_events, write_states, FitReport, ModelFile, ModelMeta,
};
pub use trades::{build_detection_series, ingest_trades, write_trades, DetectionSeries, Side, TradeRecord, Window};
