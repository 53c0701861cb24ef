#include "mobsim/trace.hpp"

#include <algorithm>

namespace mobsim {

namespace {

// Fixed VA regions keep generator streams from colliding on page numbers.
constexpr uint64_t kWindowBase = 0x5A0000000000ull;
constexpr uint64_t kProbeBase = 0x600000000000ull;
constexpr uint64_t kBenignBase = 0x300000000000ull;
constexpr uint64_t kStorePc = 0x401000;
constexpr uint64_t kProbePc = 0x402000;

std::string hex64(uint64_t v) {
  char buf[20];
  snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::ordered_json plants_json(const AddressSpace& space) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : space.plants())
    arr.push_back({hex64(p.vpn), hex64(p.ppn)});
  return arr;
}

}  // namespace

Trace gen_spoiler_trace(const SpoilerParams& params, AddressSpace& space) {
  if (params.window < 1) throw ConfigError("spoiler window must be >= 1");
  if (params.pages < 1) throw ConfigError("spoiler pages must be >= 1");
  for (uint32_t p : params.aliased_pages)
    if (p >= params.pages)
      throw ConfigError("aliased page index " + std::to_string(p) + " out of range");
  if (params.probe_offset >= kPageSize)
    throw ConfigError("probe offset must fit in one page");

  std::mt19937_64 rng(params.seed);
  PhysAddr donor(rng() & (kPaLimit - 1));

  // The window's donor pattern pins every pool bit [31:12]; distinct window
  // pages then differ only above the pool, so any probe landing on the donor
  // low bits aliases with all of them at once.
  const BitMask pool_mask = BitMask::range(kMaskPoolLo, kMaskPoolHi);
  for (uint32_t i = 0; i < params.window; ++i) {
    VirtAddr va(kWindowBase + static_cast<uint64_t>(i) * kPageSize + params.probe_offset);
    space.plant_alias(va, donor, pool_mask);
  }

  // Planted probe pages: donor bits on [19:12], complemented donor bits on
  // [31:20]. The 1 MB aliasing is exact and nothing above it ever agrees.
  uint64_t probe_pattern = (donor.value & 0x00000FF000ull) |
                           (~donor.value & 0x00FFF00000ull);
  for (uint32_t p : params.aliased_pages) {
    VirtAddr va(kProbeBase + static_cast<uint64_t>(p) * kPageSize + params.probe_offset);
    space.plant_alias(va, PhysAddr(probe_pattern), pool_mask);
  }

  Trace trace;
  trace.ops.reserve(static_cast<size_t>(params.pages) * params.rounds * (params.window + 1));
  uint64_t seq = 0;
  for (uint32_t p = 0; p < params.pages; ++p) {
    VirtAddr probe_va(kProbeBase + static_cast<uint64_t>(p) * kPageSize + params.probe_offset);
    for (uint32_t r = 0; r < params.rounds; ++r) {
      for (uint32_t i = 0; i < params.window; ++i) {
        VirtAddr store_va(kWindowBase + static_cast<uint64_t>(i) * kPageSize + params.probe_offset);
        trace.ops.push_back({seq++, OpKind::Store, store_va, kStorePc, false});
      }
      trace.ops.push_back({seq++, OpKind::Load, probe_va, kProbePc, true});
    }
  }

  auto aliased = nlohmann::ordered_json::array();
  std::vector<uint32_t> sorted_aliased = params.aliased_pages;
  std::sort(sorted_aliased.begin(), sorted_aliased.end());
  for (uint32_t p : sorted_aliased) aliased.push_back(p);

  trace.meta = nlohmann::ordered_json{
      {"generator", "spoiler"},
      {"seed", params.seed},
      {"space_seed", space.seed()},
      {"params",
       {{"pages", params.pages},
        {"rounds", params.rounds},
        {"window", params.window},
        {"probe_offset", hex64(params.probe_offset)}}},
      {"donor_pa", hex64(donor.value)},
      {"aliased_pages", aliased},
      {"probe_base_vpn", hex64(kProbeBase >> kPageBits)},
      {"window_base_vpn", hex64(kWindowBase >> kPageBits)},
      {"pcs", {{"store", hex64(kStorePc)}, {"load", hex64(kProbePc)}}},
      {"plants", plants_json(space)},
  };
  return trace;
}

Trace gen_benign_trace(BenignKind kind, uint64_t ops, uint64_t seed) {
  if (ops == 0) throw ConfigError("benign trace needs ops > 0");
  std::mt19937_64 rng(seed);
  Trace trace;
  trace.ops.reserve(ops);

  constexpr uint64_t kPages = 64;
  constexpr uint64_t kOffsets = 64;  // 8-byte aligned slots

  switch (kind) {
    case BenignKind::Random: {
      for (uint64_t i = 0; i < ops; ++i) {
        uint64_t page = bounded_rand(rng, kPages);
        uint64_t off = bounded_rand(rng, kOffsets) * 8;
        VirtAddr va(kBenignBase + page * kPageSize + off);
        OpKind k = (rng() & 1) ? OpKind::Load : OpKind::Store;
        uint64_t pc = 0x400000 + bounded_rand(rng, 256) * 4;
        trace.ops.push_back({i, k, va, pc, false});
      }
      break;
    }
    case BenignKind::Sequential: {
      for (uint64_t i = 0; i < ops; ++i) {
        VirtAddr va(kBenignBase + i * 8);
        OpKind k = (i & 1) ? OpKind::Load : OpKind::Store;
        trace.ops.push_back({i, k, va, 0x400000 + (i & 1) * 4, false});
      }
      break;
    }
    case BenignKind::ForwardHeavy: {
      VirtAddr pending;
      for (uint64_t i = 0; i < ops; ++i) {
        if ((i & 1) == 0) {
          uint64_t page = bounded_rand(rng, kPages);
          uint64_t off = bounded_rand(rng, kOffsets) * 8;
          pending = VirtAddr(kBenignBase + page * kPageSize + off);
          trace.ops.push_back({i, OpKind::Store, pending, 0x400100, false});
        } else {
          trace.ops.push_back({i, OpKind::Load, pending, 0x400104, false});
        }
      }
      break;
    }
  }

  trace.meta = nlohmann::ordered_json{
      {"generator", "benign"},
      {"seed", seed},
      {"space_seed", seed ^ 0x9E3779B97F4A7C15ull},
      {"params", {{"kind", benign_kind_name(kind)}, {"ops", ops}}},
      {"plants", nlohmann::ordered_json::array()},
  };
  return trace;
}

Trace gen_mixed_stress_trace(const StressParams& params) {
  if (params.benign_ops == 0) throw ConfigError("stress trace needs benign ops > 0");
  if (params.windows == 0) throw ConfigError("stress trace needs windows > 0");

  uint64_t space_seed = params.seed ^ 0xC2B2AE3D27D4EB4Full;
  AddressSpace space(space_seed);
  std::mt19937_64 rng(params.seed);
  PhysAddr donor(rng() & (kPaLimit - 1));
  const BitMask pool_mask = BitMask::range(kMaskPoolLo, kMaskPoolHi);
  constexpr uint64_t kBurstOffset = 0x780;

  for (uint32_t i = 0; i < params.window; ++i) {
    VirtAddr va(kWindowBase + static_cast<uint64_t>(i) * kPageSize + kBurstOffset);
    space.plant_alias(va, donor, pool_mask);
  }
  uint64_t probe_pattern = (donor.value & 0x00000FF000ull) |
                           (~donor.value & 0x00FFF00000ull);
  for (uint32_t b = 0; b < params.windows; ++b) {
    VirtAddr va(kProbeBase + static_cast<uint64_t>(b) * kPageSize + kBurstOffset);
    space.plant_alias(va, PhysAddr(probe_pattern), pool_mask);
  }

  Trace trace;
  uint64_t seq = 0;
  uint64_t gap = params.benign_ops / params.windows;
  if (gap == 0) gap = 1;

  constexpr uint64_t kPages = 64;
  constexpr uint64_t kOffsets = 64;
  uint64_t emitted_benign = 0;
  uint32_t emitted_windows = 0;
  while (emitted_benign < params.benign_ops || emitted_windows < params.windows) {
    uint64_t chunk = std::min<uint64_t>(gap, params.benign_ops - emitted_benign);
    for (uint64_t i = 0; i < chunk; ++i) {
      uint64_t page = bounded_rand(rng, kPages);
      uint64_t off = bounded_rand(rng, kOffsets) * 8;
      VirtAddr va(kBenignBase + page * kPageSize + off);
      OpKind k = (rng() & 1) ? OpKind::Load : OpKind::Store;
      uint64_t pc = 0x400000 + bounded_rand(rng, 256) * 4;
      trace.ops.push_back({seq++, k, va, pc, false});
    }
    emitted_benign += chunk;
    if (emitted_windows < params.windows) {
      for (uint32_t i = 0; i < params.window; ++i) {
        VirtAddr va(kWindowBase + static_cast<uint64_t>(i) * kPageSize + kBurstOffset);
        trace.ops.push_back({seq++, OpKind::Store, va, kStorePc, false});
      }
      VirtAddr probe_va(kProbeBase + static_cast<uint64_t>(emitted_windows) * kPageSize + kBurstOffset);
      trace.ops.push_back({seq++, OpKind::Load, probe_va, kProbePc, true});
      ++emitted_windows;
    }
  }

  auto aliased = nlohmann::ordered_json::array();
  for (uint32_t b = 0; b < params.windows; ++b) aliased.push_back(b);
  trace.meta = nlohmann::ordered_json{
      {"generator", "stress"},
      {"seed", params.seed},
      {"space_seed", space_seed},
      {"params",
       {{"benign_ops", params.benign_ops},
        {"windows", params.windows},
        {"window", params.window},
        {"probe_offset", hex64(kBurstOffset)}}},
      {"donor_pa", hex64(donor.value)},
      {"aliased_pages", aliased},
      {"probe_base_vpn", hex64(kProbeBase >> kPageBits)},
      {"window_base_vpn", hex64(kWindowBase >> kPageBits)},
      {"pcs", {{"store", hex64(kStorePc)}, {"load", hex64(kProbePc)}}},
      {"plants", plants_json(space)},
  };
  return trace;
}

AddressSpace space_from_metadata(const nlohmann::ordered_json& meta) {
  if (!meta.contains("space_seed"))
    throw ConfigError("trace metadata lacks space_seed");
  AddressSpace space(meta.at("space_seed").get<uint64_t>());
  if (meta.contains("plants")) {
    for (const auto& entry : meta.at("plants")) {
      uint64_t vpn = std::stoull(entry.at(0).get<std::string>(), nullptr, 16);
      uint64_t ppn = std::stoull(entry.at(1).get<std::string>(), nullptr, 16);
      space.restore_plant(vpn, ppn);
    }
  }
  return space;
}

const char* benign_kind_name(BenignKind kind) {
  switch (kind) {
    case BenignKind::Random: return "random";
    case BenignKind::Sequential: return "sequential";
    case BenignKind::ForwardHeavy: return "forward-heavy";
  }
  return "random";
}

BenignKind benign_kind_from_name(const std::string& name) {
  if (name == "random") return BenignKind::Random;
  if (name == "sequential") return BenignKind::Sequential;
  if (name == "forward-heavy") return BenignKind::ForwardHeavy;
  throw ConfigError("unknown benign trace kind: " + name);
}

}  // namespace mobsim
