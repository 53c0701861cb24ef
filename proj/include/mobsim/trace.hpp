#pragma once

// Micro-op traces, the attack/benign trace generators, and the line-oriented
// trace file format.
//
// File format (bit-exact):
//   #mobtrace v1 <json-metadata>
//   seq,kind,va_hex,pc_hex,probe_flag
// with kind one of S|L, addresses 0x-prefixed lowercase hex and probe_flag
// 0 or 1. Sequence numbers start at 0 and increase strictly.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mobsim/address.hpp"

#include "json.hpp"

namespace mobsim {

enum class OpKind : uint8_t { Store, Load };

struct TraceOp {
  uint64_t seq = 0;
  OpKind kind = OpKind::Store;
  VirtAddr va;
  uint64_t pc = 0;
  bool is_probe = false;

  friend bool operator==(const TraceOp& a, const TraceOp& b) {
    return a.seq == b.seq && a.kind == b.kind && a.va == b.va && a.pc == b.pc &&
           a.is_probe == b.is_probe;
  }
};

struct Trace {
  std::vector<TraceOp> ops;
  nlohmann::ordered_json meta;

  friend bool operator==(const Trace& a, const Trace& b) {
    return a.ops == b.ops && a.meta == b.meta;
  }
};

class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(size_t line, const std::string& what)
      : std::runtime_error("trace line " + std::to_string(line) + ": " + what),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

// ---------------------------------------------------------------------------
// Generators

struct SpoilerParams {
  uint32_t pages = 128;       // measured pages
  uint32_t rounds = 20;       // repetitions per page
  uint32_t window = 56;       // stores per round (store-buffer fill)
  std::vector<uint32_t> aliased_pages;  // page indices planted to alias
  uint64_t seed = 0;
  uint64_t probe_offset = 0x400;  // shared page offset, guarantees loosenet hits
};

// Store-window fill plus one timed probe load per (page, round). Window
// stores are planted to a common donor pattern on PA bits [31:12]; pages in
// aliased_pages are planted so their probe agrees with the donor on exactly
// the 1 MB-alias bits [19:12] and disagrees on every pool bit above them.
// Other pages keep a random mapping. Ground truth goes into the metadata.
Trace gen_spoiler_trace(const SpoilerParams& params, AddressSpace& space);

enum class BenignKind { Random, Sequential, ForwardHeavy };

Trace gen_benign_trace(BenignKind kind, uint64_t ops, uint64_t seed);

struct StressParams {
  uint64_t benign_ops = 50000;  // background random stream
  uint32_t windows = 50;        // aliased store-window bursts
  uint32_t window = 56;         // stores per burst
  uint64_t seed = 0;
};

// Benign random stream with periodic planted-alias window bursts; stresses
// all three configurations on the same mixed workload.
Trace gen_mixed_stress_trace(const StressParams& params);

// Rebuilds the address space a trace was generated against: seeds the
// generator recorded in the metadata and re-applies every plant.
AddressSpace space_from_metadata(const nlohmann::ordered_json& meta);

const char* benign_kind_name(BenignKind kind);
BenignKind benign_kind_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Trace file I/O

void write_trace(const Trace& trace, std::ostream& out);
void write_trace_file(const Trace& trace, const std::string& path);

Trace read_trace(std::istream& in);
Trace read_trace_file(const std::string& path);

// FNV-1a over the serialized form; identifies the trace in run summaries so
// comparisons across models can insist on identical inputs.
uint64_t trace_fingerprint(const Trace& trace);

}  // namespace mobsim
