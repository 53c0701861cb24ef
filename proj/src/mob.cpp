#include "mobsim/mob.hpp"

#include <algorithm>

namespace mobsim {

const char* model_name(Model m) {
  switch (m) {
    case Model::M1: return "m1";
    case Model::M2: return "m2";
    case Model::M3: return "m3";
  }
  return "m3";
}

Model model_from_name(const std::string& name) {
  if (name == "m1" || name == "M1") return Model::M1;
  if (name == "m2" || name == "M2") return Model::M2;
  if (name == "m3" || name == "M3") return Model::M3;
  throw ConfigError("unknown model: " + name);
}

SimConfig SimConfig::for_model(Model m, uint64_t seed) {
  SimConfig cfg;
  cfg.model = m;
  cfg.seed = seed;
  switch (m) {
    case Model::M1: cfg.mask_width = 0; break;
    case Model::M2: cfg.mask_width = 8; break;
    case Model::M3: cfg.mask_width = 12; break;
  }
  return cfg;
}

void SimConfig::validate() const {
  if (latencies.base_load == 0 || latencies.forward == 0 ||
      latencies.alias4k_stall == 0 || latencies.squash_penalty == 0)
    throw ConfigError("all latencies must be > 0");
  if (sab_capacity == 0) throw ConfigError("sab_capacity must be > 0");
  if (max_reissues == 0) throw ConfigError("max_reissues must be > 0");
  if (pool.lo < kMaskPoolLo || pool.hi > kMaskPoolHi || pool.lo > pool.hi)
    throw ConfigError("mask pool must lie within [12,31]");
  if (mask_width > pool.size())
    throw ConfigError("mask_width exceeds pool size");
  if (model == Model::M2 && mask_width != 8)
    throw ConfigError("M2 uses the fixed 8-bit comparison field");
  if (model == Model::M3 && mask_width == 0)
    throw ConfigError("M3 needs a non-empty mask");
}

namespace {

uint32_t partial_of(const SabEntry& e, const BitMask& mask) {
  return e.partial_valid ? e.partial_pa : extract_bits(e.pa, mask);
}

}  // namespace

bool loosenet_check(const LoadOp& load, const SabEntry& entry) {
  return entry.va.offset() == load.va.offset();
}

bool finenet_check(const LoadOp& load, const SabEntry& entry) {
  return entry.va == load.va;
}

ForwardDecision predict_dependence(const LoadOp& load, PhysAddr load_pa,
                                   const std::deque<SabEntry>& sab,
                                   const SimConfig& config, const BitMask& mask,
                                   uint64_t now) {
  bool alias_seen = false;
  uint32_t load_partial = 0;
  if (config.model != Model::M1) load_partial = extract_bits(load_pa, mask);

  for (auto it = sab.rbegin(); it != sab.rend(); ++it) {
    const SabEntry& e = *it;
    if (e.seq >= load.seq) continue;
    if (!loosenet_check(load, e)) continue;
    if (finenet_check(load, e)) return {ForwardKind::TrueForward, &e, false};

    // Loosenet hit, finenet miss: a 4 KB alias.
    if (config.model == Model::M1) {
      alias_seen = true;  // VA disambiguation says independent; small delay
      continue;
    }
    if (!e.resolved_at(now))
      return {ForwardKind::Alias4kStall, &e, true};  // conservative wait
    if (partial_of(e, mask) == load_partial) {
      if (config.model == Model::M3 && e.vuln_flag && e.pc_tag &&
          *e.pc_tag == load.load_pc) {
        alias_seen = true;  // suppressed: no replay for this (PC, entry) pair
        continue;
      }
      return {ForwardKind::SpeculativeForward, &e, false};
    }
    // Partial miss: predicted independent; the disambiguation still costs
    // the 4 KB-alias delay, like M1's VA-based check.
    alias_seen = true;
  }
  if (alias_seen) return {ForwardKind::Alias4kStall, nullptr, false};
  return {ForwardKind::NoDependence, nullptr, false};
}

CheckOutcome resolve_and_check(PhysAddr load_pa, const ForwardDecision& decision) {
  if (decision.kind == ForwardKind::TrueForward) return CheckOutcome::Correct;
  if (decision.kind != ForwardKind::SpeculativeForward || decision.target == nullptr)
    throw ConfigError("resolve_and_check requires a forwarding decision");
  return decision.target->pa == load_pa ? CheckOutcome::Correct
                                        : CheckOutcome::Misspeculation;
}

MobSim::MobSim(const SimConfig& config, AddressSpace& space)
    : config_(config), space_(space), rng_(config.seed) {
  config_.validate();
  switch (config_.model) {
    case Model::M1: mask_ = BitMask(); break;
    case Model::M2: mask_ = BitMask::fixed_low8(); break;
    case Model::M3: mask_ = make_mask(rng_, config_.mask_width, config_.pool); break;
  }
}

void MobSim::advance_drains(uint64_t now) {
  while (!sab_.empty()) {
    uint64_t drain_cycle = std::max(next_drain_cycle_, sab_.front().resolve_cycle);
    if (drain_cycle >= now) break;  // still live for evaluations at `now`
    sab_.pop_front();
    next_drain_cycle_ = drain_cycle + 1;
  }
}

void MobSim::refresh_partials(uint64_t now) {
  if (config_.model == Model::M1) return;
  for (auto& e : sab_) {
    if (!e.partial_valid && e.resolved_at(now)) {
      e.partial_pa = extract_bits(e.pa, mask_);
      e.partial_valid = true;
    }
  }
}

void MobSim::remask(uint64_t now) {
  mask_ = make_mask(rng_, config_.mask_width, config_.pool);
  ++stats_.remask_events;
  for (auto& e : sab_) {
    if (e.resolved_at(now)) {
      e.partial_pa = extract_bits(e.pa, mask_);
      e.partial_valid = true;
    }
  }
}

SabEntry* MobSim::mutable_entry(uint64_t seq) {
  for (auto& e : sab_)
    if (e.seq == seq) return &e;
  return nullptr;
}

std::optional<uint64_t> MobSim::youngest_va_match(const LoadOp& load) const {
  for (auto it = sab_.rbegin(); it != sab_.rend(); ++it)
    if (it->seq < load.seq && it->va == load.va) return it->seq;
  return std::nullopt;
}

void MobSim::feed(const TraceOp& op) {
  if (last_seq_ && op.seq <= *last_seq_)
    throw ConfigError("trace sequence numbers must increase strictly");
  last_seq_ = op.seq;
  if (op.kind == OpKind::Store) insert_store(op);
  else process_load(op);
}

void MobSim::insert_store(const TraceOp& op) {
  advance_drains(clock_);
  if (sab_.size() >= config_.sab_capacity) {
    // Full buffer: the store waits for the oldest entry to drain. The slot
    // becomes usable the cycle after the drain completes.
    uint64_t drain_cycle = std::max(next_drain_cycle_, sab_.front().resolve_cycle);
    uint64_t resume = drain_cycle + 1;
    stats_.store_stall_cycles += resume - clock_;
    clock_ = resume;
    advance_drains(clock_);
  }
  SabEntry entry;
  entry.seq = op.seq;
  entry.store_pc = op.pc;
  entry.va = op.va;
  entry.pa = space_.translate(op.va);
  entry.resolve_cycle = clock_ + config_.store_resolve_delay;
  sab_.push_back(entry);
  ++stats_.total_stores;
  clock_ += 1;
}

void MobSim::process_load(const TraceOp& op) {
  advance_drains(clock_);
  LoadOp load{op.seq, op.pc, op.va, op.is_probe};
  PhysAddr load_pa = space_.translate(op.va);

  if (record_live_sets_) {
    std::vector<uint64_t> live;
    live.reserve(sab_.size());
    for (const auto& e : sab_) live.push_back(e.seq);
    live_sets_.push_back(std::move(live));
  }

  const uint64_t issue = clock_;
  uint64_t now = issue;
  bool stalled = false;  // the 4 KB-alias delay is charged at most once
  uint32_t reissues = 0;
  std::optional<uint64_t> source;
  bool forwarded = false;

  for (;;) {
    refresh_partials(now);
    ForwardDecision d = predict_dependence(load, load_pa, sab_, config_, mask_, now);

    if (d.kind == ForwardKind::NoDependence) {
      break;
    }
    if (d.kind == ForwardKind::TrueForward) {
      source = d.target->seq;
      forwarded = true;
      break;
    }
    if (d.kind == ForwardKind::Alias4kStall) {
      stalled = true;
      if (d.wait_for_resolution) {
        now = std::max(d.target->resolve_cycle, now + 1);
        continue;
      }
      break;  // terminal aliasing delay; no matching store, memory supplies
    }

    // SpeculativeForward
    if (resolve_and_check(load_pa, d) == CheckOutcome::Correct) {
      source = d.target->seq;
      forwarded = true;
      break;
    }
    ++stats_.misspeculations;
    ++stats_.spoiler_violations;
    if (load.is_probe) ++stats_.attacker_stalls;
    misspec_log_.push_back({load.seq, load.load_pc, d.target->seq});

    SabEntry* entry = mutable_entry(d.target->seq);
    if (config_.model == Model::M3) {
      entry->vuln_flag = true;
      entry->pc_tag = load.load_pc;
      remask(now);
    }
    ++reissues;
    if (reissues >= config_.max_reissues) {
      ++stats_.reissue_cap_hits;
      source = youngest_va_match(load);
      forwarded = source.has_value();
      break;
    }
    now += config_.latencies.squash_penalty;
  }

  uint64_t latency = config_.latencies.base_load +
                     (stalled ? config_.latencies.alias4k_stall : 0) +
                     static_cast<uint64_t>(reissues) * config_.latencies.squash_penalty +
                     (forwarded ? config_.latencies.forward : 0);

  ++stats_.total_loads;
  stats_.per_load.push_back({load.seq, load.va.page(), load.load_pc, reissues,
                             latency, load.is_probe, source});
  clock_ = issue + latency;
}

SimStats MobSim::take_stats() {
  stats_.total_cycles = clock_;
  return std::move(stats_);
}

SimStats run_trace(const Trace& trace, const SimConfig& config) {
  AddressSpace space = space_from_metadata(trace.meta);
  return run_trace(trace, config, space);
}

SimStats run_trace(const Trace& trace, const SimConfig& config, AddressSpace& space) {
  config.validate();
  for (size_t i = 1; i < trace.ops.size(); ++i)
    if (trace.ops[i].seq <= trace.ops[i - 1].seq)
      throw ConfigError("malformed trace: sequence numbers must increase strictly");
  MobSim sim(config, space);
  for (const auto& op : trace.ops) sim.feed(op);
  return sim.take_stats();
}

}  // namespace mobsim
