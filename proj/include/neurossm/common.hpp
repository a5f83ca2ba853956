#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace neurossm {

// Error taxonomy. Shape/contract violations are programming errors surfaced
// eagerly; data errors carry enough context to locate the offending input.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checked mode: NaN/Inf guards at op boundaries. On by default; benchmarks
// switch it off because the scans are O(n) per op.
inline bool& checked_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct CheckedModeGuard {
  explicit CheckedModeGuard(bool enabled) : prev_(checked_mode()) {
    checked_mode() = enabled;
  }
  ~CheckedModeGuard() { checked_mode() = prev_; }
  CheckedModeGuard(const CheckedModeGuard&) = delete;
  CheckedModeGuard& operator=(const CheckedModeGuard&) = delete;

 private:
  bool prev_;
};

// Gradient recording mode. When off, ops produce plain values and the fused
// scan keeps only its carry state.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Operation/allocation instrumentation for the complexity benchmarks.
// Counters are exact multiply-add counts, not estimates:
//   scan_madds  — recurrence state updates, 2 per (step, channel, state).
//   proj_madds  — dense matmul and depthwise-conv multiply-adds.
// scan_state_* track the recurrence carry buffer h only; activations and
// parameters are covered by alloc_bytes_*.
struct Instrumentation {
  bool enabled = false;

  std::uint64_t scan_madds = 0;
  std::uint64_t proj_madds = 0;
  std::uint64_t scan_ns = 0;
  std::uint64_t proj_ns = 0;

  std::int64_t alloc_bytes_current = 0;
  std::int64_t alloc_bytes_peak = 0;

  std::int64_t scan_state_bytes_total = 0;  // summed over scan invocations
  std::int64_t scan_state_bytes_max = 0;    // largest single carry buffer

  void reset_counters() {
    scan_madds = 0;
    proj_madds = 0;
    scan_ns = 0;
    proj_ns = 0;
    alloc_bytes_peak = alloc_bytes_current;
    scan_state_bytes_total = 0;
    scan_state_bytes_max = 0;
  }
};

inline Instrumentation& instrumentation() {
  thread_local Instrumentation inst;
  return inst;
}

inline std::string version_string() { return "neurossm 0.1.0"; }

}  // namespace neurossm
