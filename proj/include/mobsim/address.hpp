#pragma once

// Address model: 48-bit virtual / 40-bit physical addresses over 4 KB pages,
// a seeded injective page translation with support for planting partial
// physical-address aliasing, and the bit-mask arithmetic the dependence
// predictor runs on.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace mobsim {

inline constexpr unsigned kPageBits = 12;
inline constexpr uint64_t kPageSize = 1ull << kPageBits;
inline constexpr uint64_t kOffsetMask = kPageSize - 1;
inline constexpr unsigned kVaBits = 48;
inline constexpr unsigned kPaBits = 40;
inline constexpr uint64_t kVaLimit = 1ull << kVaBits;
inline constexpr uint64_t kPaLimit = 1ull << kPaBits;
inline constexpr unsigned kPpnBits = kPaBits - kPageBits;   // 28
inline constexpr uint64_t kPpnCount = 1ull << kPpnBits;

// Pool of PA bit positions eligible for the partial comparison: above the
// page offset, below row-buffer territory.
inline constexpr uint8_t kMaskPoolLo = 12;
inline constexpr uint8_t kMaskPoolHi = 31;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VirtAddr {
  uint64_t value = 0;

  VirtAddr() = default;
  explicit VirtAddr(uint64_t v) : value(v) {
    if (v >= kVaLimit) throw ConfigError("virtual address exceeds 48 bits");
  }

  uint64_t page() const { return value >> kPageBits; }
  uint64_t offset() const { return value & kOffsetMask; }

  friend bool operator==(VirtAddr a, VirtAddr b) { return a.value == b.value; }
  friend bool operator!=(VirtAddr a, VirtAddr b) { return a.value != b.value; }
};

struct PhysAddr {
  uint64_t value = 0;

  PhysAddr() = default;
  explicit PhysAddr(uint64_t v) : value(v) {
    if (v >= kPaLimit) throw ConfigError("physical address exceeds 40 bits");
  }

  uint64_t page() const { return value >> kPageBits; }
  uint64_t offset() const { return value & kOffsetMask; }

  friend bool operator==(PhysAddr a, PhysAddr b) { return a.value == b.value; }
  friend bool operator!=(PhysAddr a, PhysAddr b) { return a.value != b.value; }
};

// Inclusive range of candidate bit positions for mask selection.
struct BitRange {
  uint8_t lo = kMaskPoolLo;
  uint8_t hi = kMaskPoolHi;

  unsigned size() const { return static_cast<unsigned>(hi - lo + 1); }
  bool contains(uint8_t pos) const { return pos >= lo && pos <= hi; }

  friend bool operator==(BitRange a, BitRange b) {
    return a.lo == b.lo && a.hi == b.hi;
  }
};

// Ordered set of distinct PA bit positions used for the partial dependence
// comparison. Positions are kept sorted ascending; bit i of an extracted
// value corresponds to positions()[i].
class BitMask {
 public:
  BitMask() = default;
  explicit BitMask(std::vector<uint8_t> positions);

  // Contiguous mask {lo..hi}, both inclusive.
  static BitMask range(uint8_t lo, uint8_t hi);
  // The fixed legacy comparison field: PA bits {12..19}.
  static BitMask fixed_low8();

  const std::vector<uint8_t>& positions() const { return positions_; }
  unsigned width() const { return static_cast<unsigned>(positions_.size()); }
  bool empty() const { return positions_.empty(); }

  friend bool operator==(const BitMask& a, const BitMask& b) {
    return a.positions_ == b.positions_;
  }

 private:
  std::vector<uint8_t> positions_;
};

// Gathers the masked bits of pa into a dense value: bit i of the result is
// bit positions()[i] of pa.
uint32_t extract_bits(PhysAddr pa, const BitMask& mask);

// True iff pa1 and pa2 agree on every masked position.
bool masked_compare(PhysAddr pa1, PhysAddr pa2, const BitMask& mask);

// Draws `width` distinct positions uniformly without replacement from the
// pool. Deterministic function of the generator state.
BitMask make_mask(std::mt19937_64& rng, unsigned width, BitRange pool);

// Uniform integer in [0, n) from raw 64-bit draws; avoids the
// implementation-defined std::uniform_int_distribution so seeded runs are
// reproducible across standard libraries.
uint64_t bounded_rand(std::mt19937_64& rng, uint64_t n);

struct PlantRecord {
  uint64_t vpn = 0;
  uint64_t ppn = 0;
};

// Seeded lazy VA->PA page mapping. Unmapped pages receive a fresh
// uniform-random unused physical page on first translation; planted pages
// are remapped so selected PA bits match a donor pattern. The map stays
// injective over all mapped pages and always preserves the 12-bit offset.
class AddressSpace {
 public:
  explicit AddressSpace(uint64_t seed);

  // Lazily maps the page if needed. Throws ConfigError once the physical
  // page pool is exhausted.
  PhysAddr translate(VirtAddr va);

  // Remaps va's page so that the translated PA agrees with donor on every
  // position in `positions`. Throws ConfigError when no unused physical
  // page satisfies the constraint.
  void plant_alias(VirtAddr va, PhysAddr donor, const BitMask& positions);

  // Re-applies a previously recorded plant verbatim (used when rebuilding
  // a space from trace metadata). Enforces injectivity.
  void restore_plant(uint64_t vpn, uint64_t ppn);

  uint64_t seed() const { return seed_; }
  const std::vector<PlantRecord>& plants() const { return plants_; }
  bool is_mapped(uint64_t vpn) const { return map_.count(vpn) != 0; }
  size_t mapped_pages() const { return map_.size(); }

 private:
  uint64_t fresh_ppn();
  void assign(uint64_t vpn, uint64_t ppn);

  uint64_t seed_;
  std::mt19937_64 rng_;
  std::unordered_map<uint64_t, uint64_t> map_;   // vpn -> ppn
  std::unordered_set<uint64_t> used_ppn_;
  std::vector<PlantRecord> plants_;
};

}  // namespace mobsim
