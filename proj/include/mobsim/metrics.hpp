#pragma once

// Aggregation over simulation results: per-page latency profiles, the
// threshold classifier an attacker would run on them, analytic aliasing
// probabilities, the independent violation-count oracle, and storage
// overhead arithmetic.

#include <cstdint>
#include <optional>
#include <vector>

#include "mobsim/mob.hpp"
#include "mobsim/trace.hpp"

namespace mobsim {

struct PageLatency {
  uint32_t page = 0;       // probe page index within the trace
  double mean = 0.0;       // mean probe latency in cycles
  double stddev = 0.0;
  uint32_t samples = 0;
  bool aliased = false;    // ground truth from the trace metadata
};

struct LatencyProfile {
  std::vector<PageLatency> per_page;
};

struct DetectionReport {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double accuracy = 0.0;
  std::optional<double> separation;  // (mean_aliased - mean_clean) / pooled std
};

// Groups probe-load latencies by page and attaches ground truth. Rejects
// traces without probe marks.
LatencyProfile per_page_latency(const SimStats& stats, const Trace& trace);

// Threshold classifier over per-page mean latencies: sweeps midpoints of the
// sorted means (plus the all-aliased / all-clean extremes) and keeps the
// threshold with the best accuracy against ground truth. With identical
// class distributions this degenerates to the majority classifier.
DetectionReport classify_aliased(const LatencyProfile& profile);

// Probability that two independent uniform physical addresses agree on a
// width-bit comparison: 2^-width.
double analytic_alias_prob(unsigned width);

// Independent brute-force replay of an M2 run counting every speculative
// forward that the full physical addresses later contradict. Implemented
// against the documented buffer and timing rules with its own flat-array
// queue model; shares nothing with MobSim.
uint64_t expected_violations_oracle(const Trace& trace, AddressSpace& space,
                                    const SimConfig& config);

// misspeculations / total_loads, as a fraction. Zero loads yield zero.
double misspec_rate(const SimStats& stats);

// Added state per enhanced buffer entry: 48-bit PC tag + 1-bit flag +
// widening the partial address field from 8 to 12 bits.
uint64_t sab_overhead_bits(uint64_t entries);

}  // namespace mobsim
