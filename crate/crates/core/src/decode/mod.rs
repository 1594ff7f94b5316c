//! Streaming decode, sampling and the first-audio latency simulator.

mod latency;
mod sampling;
mod stream;

pub use latency::{first_audio_latency, median, steps_for_units, LatencyModel, LatencyReport, StepCost};
pub use sampling::{argmax, sample_token, truncated_distribution, SamplingParams};
pub use stream::{
    append_response, decode_turn, decode_turn_reduce, input_rows, DecodeOptions, DecodeOutput, DecodeTrace, Emitted,
    StopReason, TraceStep, DEFAULT_MAX_STEPS,
};
