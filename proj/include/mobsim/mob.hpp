#pragma once

// Memory Order Buffer model: store address buffer, the loosenet -> finenet ->
// partial-physical-address dependence pipeline, speculative forwarding with
// squash-and-reissue, remasking, and cycle accounting for the three
// configurations
//
//   M1  virtual-address forwarding only (never consults physical bits),
//   M2  fixed partial comparison on PA bits [19:12],
//   M3  randomized 12-bit masked comparison with remasking on
//       misspeculation plus per-entry PC tagging / vulnerability flags.
//
// Timing model. Ops are processed in program order against a single clock.
// A store occupies one issue slot (stalling first if the buffer is full);
// a load advances the clock by its accounted latency
//
//   base_load + alias4k_stall (once, if it hit any 4 KB-alias delay)
//             + squash_penalty * reissues
//             + forward (when the final source is a store).
//
// The alias delay is a fixed disambiguation cost shared by all models: M1
// pays it resolving aliases by virtual address, M2/M3 pay it waiting for an
// unresolved store or passing over resolved aliases whose partial bits
// missed. A conservative wait re-evaluates once the blocking store's
// address resolves. Resolved entries at the buffer head drain one per
// cycle; drains advance only between ops, so the buffer a load sees stays
// stable across its own squash-and-reissue attempts.

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "mobsim/address.hpp"
#include "mobsim/trace.hpp"

namespace mobsim {

enum class Model : uint8_t { M1, M2, M3 };

const char* model_name(Model m);
Model model_from_name(const std::string& name);

struct Latencies {
  uint32_t base_load = 4;
  uint32_t forward = 5;
  uint32_t alias4k_stall = 3;
  uint32_t squash_penalty = 12;
};

struct SimConfig {
  Model model = Model::M3;
  uint32_t sab_capacity = 56;
  uint32_t mask_width = 12;  // 8 under M2's fixed mask; unused by M1
  BitRange pool{kMaskPoolLo, kMaskPoolHi};
  Latencies latencies{};
  uint32_t store_resolve_delay = 8;
  uint32_t max_reissues = 64;
  uint64_t seed = 0;

  static SimConfig for_model(Model m, uint64_t seed);
  void validate() const;
};

// One store-address-buffer slot. The full PA is computed up front but is
// observable to the predictor only once resolve_cycle has passed; partial_pa
// is materialized at that point under the then-active mask and recomputed in
// place when a remask fires.
struct SabEntry {
  uint64_t seq = 0;
  uint64_t store_pc = 0;
  VirtAddr va;
  PhysAddr pa;
  uint64_t resolve_cycle = 0;
  uint32_t partial_pa = 0;
  bool partial_valid = false;
  std::optional<uint64_t> pc_tag;
  bool vuln_flag = false;

  bool resolved_at(uint64_t cycle) const { return cycle >= resolve_cycle; }
};

struct LoadOp {
  uint64_t seq = 0;
  uint64_t load_pc = 0;
  VirtAddr va;
  bool is_probe = false;
};

enum class ForwardKind : uint8_t {
  NoDependence,
  TrueForward,
  SpeculativeForward,
  Alias4kStall,
};

struct ForwardDecision {
  ForwardKind kind = ForwardKind::NoDependence;
  const SabEntry* target = nullptr;  // forward source, or the blocking store
  // Alias4kStall only: true means conservative wait on an unresolved store
  // (re-evaluate at its resolution); false is the terminal aliasing delay.
  bool wait_for_resolution = false;
};

enum class CheckOutcome : uint8_t { Correct, Misspeculation };

// First-stage dependence check: page-offset equality (4 KB aliasing nets
// everything with the same offset, including same-address pairs).
bool loosenet_check(const LoadOp& load, const SabEntry& entry);

// Second-stage check on a loosenet hit: full virtual-address equality.
bool finenet_check(const LoadOp& load, const SabEntry& entry);

// Scans older entries youngest first. Full VA equality wins immediately; an
// unresolved 4 KB alias stalls the load conservatively (M2/M3); a resolved
// alias is either speculatively forwarded on a masked partial hit or passed
// over as independent. M1 never consults physical bits: aliasing entries are
// passed over (one terminal stall if nothing matches) so an older true match
// is still found. In M3 a flagged entry whose PC tag matches the load is
// suppressed instead of re-forwarded.
ForwardDecision predict_dependence(const LoadOp& load, PhysAddr load_pa,
                                   const std::deque<SabEntry>& sab,
                                   const SimConfig& config, const BitMask& mask,
                                   uint64_t now);

// Post-resolution check of a forwarding decision: speculative forwards
// misspeculate exactly when the full physical addresses differ; a true
// forward is always correct.
CheckOutcome resolve_and_check(PhysAddr load_pa, const ForwardDecision& decision);

struct LoadRecord {
  uint64_t seq = 0;
  uint64_t vpn = 0;
  uint64_t pc = 0;
  uint32_t reissues = 0;
  uint64_t latency = 0;
  bool is_probe = false;
  std::optional<uint64_t> source_store_seq;  // nullopt = memory

  friend bool operator==(const LoadRecord&, const LoadRecord&) = default;
};

struct SimStats {
  uint64_t total_cycles = 0;
  uint64_t total_loads = 0;
  uint64_t total_stores = 0;
  uint64_t spoiler_violations = 0;
  uint64_t attacker_stalls = 0;
  uint64_t misspeculations = 0;
  uint64_t remask_events = 0;
  uint64_t reissue_cap_hits = 0;
  uint64_t store_stall_cycles = 0;
  std::vector<LoadRecord> per_load;

  friend bool operator==(const SimStats&, const SimStats&) = default;
};

struct MisspecEvent {
  uint64_t load_seq = 0;
  uint64_t load_pc = 0;
  uint64_t store_seq = 0;
};

class MobSim {
 public:
  MobSim(const SimConfig& config, AddressSpace& space);

  void feed(const TraceOp& op);
  void insert_store(const TraceOp& op);
  void process_load(const TraceOp& op);

  const SimStats& stats() const { return stats_; }
  SimStats take_stats();
  const BitMask& active_mask() const { return mask_; }
  const std::deque<SabEntry>& sab() const { return sab_; }
  const std::vector<MisspecEvent>& misspec_log() const { return misspec_log_; }
  size_t live_entries() const { return sab_.size(); }
  uint64_t clock() const { return clock_; }

  // Test support: capture the live store seqs visible to each load at issue.
  void record_live_sets(bool on) { record_live_sets_ = on; }
  const std::vector<std::vector<uint64_t>>& live_sets() const { return live_sets_; }

 private:
  void advance_drains(uint64_t now);
  void refresh_partials(uint64_t now);
  void remask(uint64_t now);
  SabEntry* mutable_entry(uint64_t seq);
  std::optional<uint64_t> youngest_va_match(const LoadOp& load) const;

  SimConfig config_;
  AddressSpace& space_;
  std::mt19937_64 rng_;
  BitMask mask_;
  std::deque<SabEntry> sab_;
  uint64_t clock_ = 0;
  uint64_t next_drain_cycle_ = 0;
  std::optional<uint64_t> last_seq_;
  SimStats stats_;
  std::vector<MisspecEvent> misspec_log_;
  bool record_live_sets_ = false;
  std::vector<std::vector<uint64_t>> live_sets_;
};

// Runs a full trace. The address space is rebuilt from the trace metadata;
// the overload with an explicit space is for tests that manage mappings
// directly. Rejects traces whose sequence numbers are not strictly
// increasing.
SimStats run_trace(const Trace& trace, const SimConfig& config);
SimStats run_trace(const Trace& trace, const SimConfig& config, AddressSpace& space);

}  // namespace mobsim
