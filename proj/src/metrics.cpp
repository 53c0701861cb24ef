#include "mobsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mobsim {

LatencyProfile per_page_latency(const SimStats& stats, const Trace& trace) {
  if (!trace.meta.contains("probe_base_vpn"))
    throw ConfigError("trace metadata lacks probe page information");
  uint64_t base_vpn =
      std::stoull(trace.meta.at("probe_base_vpn").get<std::string>(), nullptr, 16);

  std::vector<bool> truth;
  if (trace.meta.contains("aliased_pages"))
    for (const auto& p : trace.meta.at("aliased_pages")) {
      uint32_t idx = p.get<uint32_t>();
      if (idx >= truth.size()) truth.resize(idx + 1, false);
      truth[idx] = true;
    }

  std::map<uint32_t, std::vector<uint64_t>> by_page;
  for (const auto& rec : stats.per_load) {
    if (!rec.is_probe) continue;
    if (rec.vpn < base_vpn) throw ConfigError("probe load outside probe region");
    by_page[static_cast<uint32_t>(rec.vpn - base_vpn)].push_back(rec.latency);
  }
  if (by_page.empty()) throw ConfigError("trace has no probe loads to profile");

  LatencyProfile profile;
  profile.per_page.reserve(by_page.size());
  for (const auto& [page, samples] : by_page) {
    double mean = 0.0;
    for (uint64_t v : samples) mean += static_cast<double>(v);
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (uint64_t v : samples) {
      double d = static_cast<double>(v) - mean;
      var += d * d;
    }
    var = samples.size() > 1 ? var / static_cast<double>(samples.size() - 1) : 0.0;
    bool aliased = page < truth.size() && truth[page];
    profile.per_page.push_back({page, mean, std::sqrt(var),
                                static_cast<uint32_t>(samples.size()), aliased});
  }
  return profile;
}

DetectionReport classify_aliased(const LatencyProfile& profile) {
  if (profile.per_page.empty()) throw ConfigError("empty latency profile");

  std::vector<double> means;
  means.reserve(profile.per_page.size());
  for (const auto& p : profile.per_page) means.push_back(p.mean);
  std::sort(means.begin(), means.end());
  means.erase(std::unique(means.begin(), means.end()), means.end());

  // Candidate thresholds: below everything, midpoints, above everything.
  std::vector<double> candidates;
  candidates.push_back(means.front() - 1.0);
  for (size_t i = 0; i + 1 < means.size(); ++i)
    candidates.push_back((means[i] + means[i + 1]) / 2.0);
  candidates.push_back(means.back() + 1.0);

  const double total = static_cast<double>(profile.per_page.size());
  DetectionReport best;
  best.accuracy = -1.0;
  for (double thr : candidates) {
    uint32_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& p : profile.per_page) {
      bool predicted = p.mean > thr;
      if (predicted && p.aliased) ++tp;
      else if (predicted && !p.aliased) ++fp;
      else if (!predicted && !p.aliased) ++tn;
      else ++fn;
    }
    double acc = (tp + tn) / total;
    if (acc > best.accuracy) {
      best.threshold = thr;
      best.accuracy = acc;
      best.tpr = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
      best.fpr = (fp + tn) ? static_cast<double>(fp) / (fp + tn) : 0.0;
    }
  }

  // Class separation in pooled standard deviations, when defined.
  double sum_a = 0, sum_c = 0, n_a = 0, n_c = 0;
  for (const auto& p : profile.per_page) {
    if (p.aliased) { sum_a += p.mean; n_a += 1; }
    else { sum_c += p.mean; n_c += 1; }
  }
  if (n_a >= 2 && n_c >= 2) {
    double mean_a = sum_a / n_a, mean_c = sum_c / n_c;
    double ss_a = 0, ss_c = 0;
    for (const auto& p : profile.per_page) {
      double d = p.mean - (p.aliased ? mean_a : mean_c);
      if (p.aliased) ss_a += d * d;
      else ss_c += d * d;
    }
    double pooled = std::sqrt((ss_a + ss_c) / (n_a + n_c - 2));
    if (pooled > 0.0) best.separation = (mean_a - mean_c) / pooled;
  }
  return best;
}

double analytic_alias_prob(unsigned width) { return std::exp2(-static_cast<double>(width)); }

double misspec_rate(const SimStats& stats) {
  if (stats.total_loads == 0) return 0.0;
  return static_cast<double>(stats.misspeculations) /
         static_cast<double>(stats.total_loads);
}

uint64_t sab_overhead_bits(uint64_t entries) {
  constexpr uint64_t kPcTagBits = 48;
  constexpr uint64_t kVulnFlagBits = 1;
  constexpr uint64_t kPartialWidening = 12 - 8;
  return entries * (kPcTagBits + kVulnFlagBits + kPartialWidening);
}

// ---------------------------------------------------------------------------
// Independent M2 replay. Flat parallel-array queue with explicit head index
// and its own drain arithmetic; the dependence rules are re-derived from the
// documented pipeline, not from MobSim.

uint64_t expected_violations_oracle(const Trace& trace, AddressSpace& space,
                                    const SimConfig& config) {
  if (config.model != Model::M2)
    throw ConfigError("violation oracle is defined for the M2 configuration");
  config.validate();

  struct Slot {
    uint64_t seq, va, pa, ready;
  };
  std::vector<Slot> buf;
  size_t head = 0;
  uint64_t clock = 0;
  uint64_t drain_gate = 0;
  uint64_t violations = 0;

  auto low8 = [](uint64_t pa) { return (pa >> 12) & 0xFFull; };
  auto drain_to = [&](uint64_t now) {
    while (head < buf.size()) {
      uint64_t td = std::max(drain_gate, buf[head].ready);
      if (td >= now) break;
      drain_gate = td + 1;
      ++head;
    }
  };

  const auto& lat = config.latencies;
  for (const auto& op : trace.ops) {
    drain_to(clock);
    if (op.kind == OpKind::Store) {
      if (buf.size() - head >= config.sab_capacity) {
        uint64_t td = std::max(drain_gate, buf[head].ready);
        clock = td + 1;
        drain_to(clock);
      }
      buf.push_back({op.seq, op.va.value, space.translate(op.va).value,
                     clock + config.store_resolve_delay});
      clock += 1;
      continue;
    }

    const uint64_t lpa = space.translate(op.va).value;
    const uint64_t issue = clock;
    uint64_t t = issue;
    bool delayed = false;  // any 4 KB-alias disambiguation along the way
    uint64_t redo = 0;
    bool store_source = false;
    bool running = true;
    while (running) {
      // youngest-first pass over the live slots
      int verdict = 0;  // 0 none, 1 true fwd, 2 wait, 3 partial hit
      size_t pick = 0;
      bool alias_in_scan = false;
      for (size_t i = buf.size(); i-- > head;) {
        if (buf[i].seq >= op.seq) continue;
        if (((buf[i].va ^ op.va.value) & kOffsetMask) != 0) continue;
        if (buf[i].va == op.va.value) { verdict = 1; pick = i; break; }
        if (t < buf[i].ready) { verdict = 2; pick = i; break; }
        if (low8(buf[i].pa) == low8(lpa)) { verdict = 3; pick = i; break; }
        alias_in_scan = true;  // resolved alias passed over on a partial miss
      }
      switch (verdict) {
        case 0:
          if (alias_in_scan) delayed = true;  // terminal 4 KB-alias delay
          running = false;
          break;
        case 1:
          store_source = true;
          running = false;
          break;
        case 2:
          delayed = true;
          t = std::max(buf[pick].ready, t + 1);
          break;
        case 3:
          if (buf[pick].pa == lpa) {  // same page, impossible with distinct VAs
            store_source = true;
            running = false;
            break;
          }
          ++violations;
          ++redo;
          if (redo >= config.max_reissues) {
            for (size_t i = buf.size(); i-- > head;) {
              if (buf[i].seq < op.seq && buf[i].va == op.va.value) {
                store_source = true;
                break;
              }
            }
            running = false;
            break;
          }
          t += lat.squash_penalty;
          break;
      }
    }
    uint64_t latency = lat.base_load + (delayed ? lat.alias4k_stall : 0) +
                       redo * lat.squash_penalty +
                       (store_source ? lat.forward : 0);
    clock = issue + latency;
  }
  return violations;
}

}  // namespace mobsim
