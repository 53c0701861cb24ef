#include "mobsim/address.hpp"

#include <algorithm>

namespace mobsim {

BitMask::BitMask(std::vector<uint8_t> positions) : positions_(std::move(positions)) {
  std::sort(positions_.begin(), positions_.end());
  for (size_t i = 0; i < positions_.size(); ++i) {
    uint8_t p = positions_[i];
    if (p < kMaskPoolLo || p > kMaskPoolHi)
      throw ConfigError("mask position " + std::to_string(p) + " outside pool [12,31]");
    if (i > 0 && positions_[i - 1] == p)
      throw ConfigError("duplicate mask position " + std::to_string(p));
  }
}

BitMask BitMask::range(uint8_t lo, uint8_t hi) {
  if (lo > hi) throw ConfigError("empty mask range");
  std::vector<uint8_t> pos;
  pos.reserve(hi - lo + 1);
  for (uint8_t p = lo; p <= hi; ++p) pos.push_back(p);
  return BitMask(std::move(pos));
}

BitMask BitMask::fixed_low8() { return range(12, 19); }

uint32_t extract_bits(PhysAddr pa, const BitMask& mask) {
  uint32_t out = 0;
  const auto& pos = mask.positions();
  for (size_t i = 0; i < pos.size(); ++i)
    out |= static_cast<uint32_t>((pa.value >> pos[i]) & 1ull) << i;
  return out;
}

bool masked_compare(PhysAddr pa1, PhysAddr pa2, const BitMask& mask) {
  uint64_t diff = pa1.value ^ pa2.value;
  for (uint8_t p : mask.positions())
    if ((diff >> p) & 1ull) return false;
  return true;
}

uint64_t bounded_rand(std::mt19937_64& rng, uint64_t n) {
  if (n == 0) throw ConfigError("bounded_rand over empty range");
  // Rejection sampling over the largest multiple of n.
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

BitMask make_mask(std::mt19937_64& rng, unsigned width, BitRange pool) {
  if (width > pool.size())
    throw ConfigError("mask width exceeds pool size");
  std::vector<uint8_t> candidates;
  candidates.reserve(pool.size());
  for (uint8_t p = pool.lo; p <= pool.hi; ++p) candidates.push_back(p);
  // Partial Fisher-Yates: uniform over width-subsets once sorted.
  for (unsigned i = 0; i < width; ++i) {
    uint64_t j = i + bounded_rand(rng, candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(width);
  return BitMask(std::move(candidates));
}

AddressSpace::AddressSpace(uint64_t seed) : seed_(seed), rng_(seed) {}

uint64_t AddressSpace::fresh_ppn() {
  if (used_ppn_.size() >= kPpnCount)
    throw ConfigError("physical page pool exhausted");
  for (;;) {
    uint64_t ppn = rng_() & (kPpnCount - 1);
    if (!used_ppn_.count(ppn)) return ppn;
  }
}

void AddressSpace::assign(uint64_t vpn, uint64_t ppn) {
  auto it = map_.find(vpn);
  if (it != map_.end()) used_ppn_.erase(it->second);
  map_[vpn] = ppn;
  used_ppn_.insert(ppn);
}

PhysAddr AddressSpace::translate(VirtAddr va) {
  uint64_t vpn = va.page();
  auto it = map_.find(vpn);
  uint64_t ppn;
  if (it != map_.end()) {
    ppn = it->second;
  } else {
    ppn = fresh_ppn();
    assign(vpn, ppn);
  }
  return PhysAddr((ppn << kPageBits) | va.offset());
}

void AddressSpace::plant_alias(VirtAddr va, PhysAddr donor, const BitMask& positions) {
  uint64_t vpn = va.page();
  uint64_t old_ppn = 0;
  bool had_old = false;
  if (auto it = map_.find(vpn); it != map_.end()) {
    had_old = true;
    old_ppn = it->second;
    used_ppn_.erase(old_ppn);  // remapping frees the old page
  }

  // Constraints expressed over PPN bits: PA bit p is PPN bit p-12.
  uint64_t constrained = 0;
  uint64_t pattern = 0;
  for (uint8_t p : positions.positions()) {
    unsigned bit = p - kPageBits;
    constrained |= 1ull << bit;
    pattern |= ((donor.value >> p) & 1ull) << bit;
  }
  std::vector<unsigned> free_bits;
  for (unsigned b = 0; b < kPpnBits; ++b)
    if (!((constrained >> b) & 1ull)) free_bits.push_back(b);

  auto compose = [&](uint64_t free_value) {
    uint64_t ppn = pattern;
    for (size_t i = 0; i < free_bits.size(); ++i)
      ppn |= ((free_value >> i) & 1ull) << free_bits[i];
    return ppn;
  };

  uint64_t found = 0;
  bool ok = false;
  if (free_bits.size() <= 20) {
    // Small free subspace: scan every candidate from a random start so the
    // impossible-plant case is detected exactly.
    uint64_t count = 1ull << free_bits.size();
    uint64_t start = bounded_rand(rng_, count);
    for (uint64_t k = 0; k < count; ++k) {
      uint64_t ppn = compose((start + k) & (count - 1));
      if (!used_ppn_.count(ppn)) {
        found = ppn;
        ok = true;
        break;
      }
    }
  } else {
    // Huge free subspace: rejection sampling terminates immediately in
    // practice; the retry cap guards against a pathologically full map.
    uint64_t count_mask = (free_bits.size() >= 64) ? UINT64_MAX
                                                   : ((1ull << free_bits.size()) - 1);
    for (int tries = 0; tries < 65536; ++tries) {
      uint64_t ppn = compose(rng_() & count_mask);
      if (!used_ppn_.count(ppn)) {
        found = ppn;
        ok = true;
        break;
      }
    }
  }
  if (!ok) {
    if (had_old) used_ppn_.insert(old_ppn);  // leave the map untouched
    throw ConfigError("plant_alias: no unused physical page satisfies constraints");
  }

  map_[vpn] = found;
  used_ppn_.insert(found);
  plants_.push_back({vpn, found});
}

void AddressSpace::restore_plant(uint64_t vpn, uint64_t ppn) {
  if (ppn >= kPpnCount) throw ConfigError("restore_plant: ppn out of range");
  if (used_ppn_.count(ppn)) {
    auto it = map_.find(vpn);
    if (it == map_.end() || it->second != ppn)
      throw ConfigError("restore_plant: physical page already in use");
  }
  assign(vpn, ppn);
  plants_.push_back({vpn, ppn});
}

}  // namespace mobsim
