#include <map>
#include <set>

#include "doctest.h"
#include "mobsim/mob.hpp"

using namespace mobsim;

namespace {

TraceOp store_op(uint64_t seq, uint64_t va, uint64_t pc = 0x401000) {
  return {seq, OpKind::Store, VirtAddr(va), pc, false};
}

TraceOp load_op(uint64_t seq, uint64_t va, uint64_t pc = 0x402000, bool probe = false) {
  return {seq, OpKind::Load, VirtAddr(va), pc, probe};
}

Trace make_trace(std::vector<TraceOp> ops) {
  Trace t;
  t.ops = std::move(ops);
  t.meta = nlohmann::ordered_json{{"generator", "test"}, {"space_seed", 1}};
  return t;
}

SabEntry make_entry(uint64_t seq, uint64_t va, uint64_t pa, uint64_t resolve_cycle) {
  SabEntry e;
  e.seq = seq;
  e.va = VirtAddr(va);
  e.pa = PhysAddr(pa);
  e.resolve_cycle = resolve_cycle;
  return e;
}

// Two virtual pages planted so their physical pages agree on every pool bit;
// a masked comparison then hits under any mask while the full PAs differ.
void plant_pool_twins(AddressSpace& space, uint64_t va_a, uint64_t va_b) {
  PhysAddr donor(0x001234A000ull);
  BitMask pool = BitMask::range(12, 31);
  space.plant_alias(VirtAddr(va_a), donor, pool);
  space.plant_alias(VirtAddr(va_b), donor, pool);
}

}  // namespace

TEST_CASE("loosenet and finenet checks") {
  LoadOp load{10, 0x402000, VirtAddr(0x123456100ull), false};
  CHECK(loosenet_check(load, make_entry(1, 0x999999100ull, 0, 0)));   // 4 KB alias
  CHECK(loosenet_check(load, make_entry(1, 0x123456100ull, 0, 0)));   // same address
  CHECK_FALSE(loosenet_check(load, make_entry(1, 0x123456104ull, 0, 0)));

  CHECK(finenet_check(load, make_entry(1, 0x123456100ull, 0, 0)));
  CHECK_FALSE(finenet_check(load, make_entry(1, 0x999999100ull, 0, 0)));
}

TEST_CASE("predict_dependence decision table") {
  SimConfig m2 = SimConfig::for_model(Model::M2, 1);
  SimConfig m3 = SimConfig::for_model(Model::M3, 1);
  SimConfig m1 = SimConfig::for_model(Model::M1, 1);
  BitMask low8 = BitMask::fixed_low8();
  BitMask mask12 = BitMask::range(12, 23);

  LoadOp load{100, 0xBEEF, VirtAddr(0x1000100ull), false};
  PhysAddr load_pa(0x55000100ull);

  SUBCASE("youngest full VA match wins") {
    std::deque<SabEntry> sab;
    sab.push_back(make_entry(1, 0x1000100ull, 0x11000100ull, 0));
    sab.push_back(make_entry(2, 0x1000100ull, 0x11000100ull, 0));
    auto d = predict_dependence(load, load_pa, sab, m2, low8, 50);
    CHECK(d.kind == ForwardKind::TrueForward);
    CHECK(d.target->seq == 2);
  }

  SUBCASE("M2 resolved 1MB alias forwards speculatively") {
    std::deque<SabEntry> sab;
    // Different page, same offset, equal PA bits [19:12].
    sab.push_back(make_entry(1, 0x2000100ull, 0x99000100ull, 10));
    auto d = predict_dependence(load, PhysAddr(0x55000100ull), sab, m2, low8, 50);
    CHECK(d.kind == ForwardKind::SpeculativeForward);
    CHECK(d.target->seq == 1);
  }

  SUBCASE("unresolved alias stalls conservatively") {
    std::deque<SabEntry> sab;
    sab.push_back(make_entry(1, 0x2000100ull, 0x99000100ull, 100));
    auto d = predict_dependence(load, load_pa, sab, m2, low8, 50);
    CHECK(d.kind == ForwardKind::Alias4kStall);
    CHECK(d.wait_for_resolution);
    CHECK(d.target->seq == 1);
  }

  SUBCASE("M3 suppression on a flagged entry with matching PC tag") {
    std::deque<SabEntry> sab;
    SabEntry e = make_entry(1, 0x2000100ull, load_pa.value, 10);
    e.vuln_flag = true;
    e.pc_tag = load.load_pc;
    sab.push_back(e);
    auto d = predict_dependence(load, load_pa, sab, m3, mask12, 50);
    CHECK(d.kind == ForwardKind::Alias4kStall);
    CHECK_FALSE(d.wait_for_resolution);

    // A different load PC is not suppressed.
    LoadOp other{101, 0xF00D, load.va, false};
    auto d2 = predict_dependence(other, load_pa, sab, m3, mask12, 50);
    CHECK(d2.kind == ForwardKind::SpeculativeForward);
  }

  SUBCASE("M1 never speculates on physical bits") {
    std::deque<SabEntry> sab;
    sab.push_back(make_entry(1, 0x2000100ull, load_pa.value, 0));  // fully aliased PA
    auto d = predict_dependence(load, load_pa, sab, m1, BitMask(), 50);
    CHECK(d.kind == ForwardKind::Alias4kStall);
    CHECK_FALSE(d.wait_for_resolution);

    // An older true match is still found behind the alias.
    sab.push_front(make_entry(0, 0x1000100ull, 0x77000100ull, 0));
    auto d2 = predict_dependence(load, load_pa, sab, m1, BitMask(), 50);
    CHECK(d2.kind == ForwardKind::TrueForward);
    CHECK(d2.target->seq == 0);
  }

  SUBCASE("masked miss is passed over in favor of older entries") {
    std::deque<SabEntry> sab;
    sab.push_back(make_entry(1, 0x1000100ull, 0x11000100ull, 0));   // true match
    sab.push_back(make_entry(2, 0x3000100ull, 0xAA111100ull, 0));   // alias, partial miss
    auto d = predict_dependence(load, PhysAddr(0x55000100ull), sab, m2, low8, 50);
    CHECK(d.kind == ForwardKind::TrueForward);
    CHECK(d.target->seq == 1);
  }

  SUBCASE("different offsets are no dependence") {
    std::deque<SabEntry> sab;
    sab.push_back(make_entry(1, 0x2000104ull, 0x99000104ull, 0));
    auto d = predict_dependence(load, load_pa, sab, m2, low8, 50);
    CHECK(d.kind == ForwardKind::NoDependence);
  }
}

TEST_CASE("resolve_and_check") {
  SabEntry e = make_entry(1, 0x2000100ull, 0x99000100ull, 0);
  ForwardDecision tf{ForwardKind::TrueForward, &e, false};
  CHECK(resolve_and_check(PhysAddr(0x99000100ull), tf) == CheckOutcome::Correct);

  ForwardDecision sf{ForwardKind::SpeculativeForward, &e, false};
  CHECK(resolve_and_check(PhysAddr(0x55000100ull), sf) == CheckOutcome::Misspeculation);
  CHECK(resolve_and_check(PhysAddr(0x99000100ull), sf) == CheckOutcome::Correct);

  ForwardDecision nd{ForwardKind::NoDependence, nullptr, false};
  CHECK_THROWS_AS(resolve_and_check(PhysAddr(0), nd), ConfigError);
}

TEST_CASE("empty trace and trivial loads") {
  SimConfig cfg = SimConfig::for_model(Model::M3, 3);
  {
    AddressSpace space(1);
    SimStats stats = run_trace(make_trace({}), cfg, space);
    CHECK(stats.total_cycles == 0);
    CHECK(stats.total_loads == 0);
    CHECK(stats.misspeculations == 0);
    CHECK(stats.per_load.empty());
  }
  {
    AddressSpace space(1);
    SimStats stats = run_trace(make_trace({load_op(0, 0x5000)}), cfg, space);
    CHECK(stats.total_loads == 1);
    CHECK(stats.per_load[0].latency == cfg.latencies.base_load);
    CHECK_FALSE(stats.per_load[0].source_store_seq.has_value());
  }
}

TEST_CASE("store to load forwarding on the same address") {
  SimConfig cfg = SimConfig::for_model(Model::M1, 0);
  AddressSpace space(2);
  SimStats stats = run_trace(
      make_trace({store_op(0, 0x7000100ull), load_op(1, 0x7000100ull)}), cfg, space);
  CHECK(stats.per_load[0].latency ==
        cfg.latencies.base_load + cfg.latencies.forward);
  CHECK(stats.per_load[0].source_store_seq == 0);
}

TEST_CASE("SAB occupancy and capacity stalls") {
  SimConfig cfg = SimConfig::for_model(Model::M2, 0);
  cfg.sab_capacity = 4;
  cfg.store_resolve_delay = 10;
  AddressSpace space(3);
  MobSim sim(cfg, space);
  for (uint64_t i = 0; i < 4; ++i)
    sim.feed(store_op(i, 0x1000000ull + i * kPageSize));
  CHECK(sim.live_entries() == 4);
  CHECK(sim.stats().store_stall_cycles == 0);

  // Fifth store must wait for the head entry to resolve and drain.
  sim.feed(store_op(4, 0x1000000ull + 4 * kPageSize));
  CHECK(sim.live_entries() == 4);
  CHECK(sim.stats().store_stall_cycles > 0);
  CHECK(sim.stats().total_stores == 5);
}

TEST_CASE("partial_pa materializes from the active mask at resolution") {
  SimConfig cfg = SimConfig::for_model(Model::M3, 9);
  AddressSpace space(4);
  MobSim sim(cfg, space);
  sim.feed(store_op(0, 0x9000200ull));
  // A 4 KB-aliased load waits for the store to resolve, which is when the
  // partial field fills in.
  sim.feed(load_op(1, 0xA000200ull));
  REQUIRE(sim.live_entries() == 1);
  const SabEntry& e = sim.sab().front();
  CHECK(e.partial_valid);
  CHECK(e.partial_pa == extract_bits(e.pa, sim.active_mask()));
}

TEST_CASE("M2 replays against a pinned aliased store up to the reissue cap") {
  SimConfig cfg = SimConfig::for_model(Model::M2, 0);
  cfg.max_reissues = 5;
  AddressSpace space(6);
  plant_pool_twins(space, 0x4000100ull, 0x8000100ull);
  Trace t = make_trace({store_op(0, 0x4000100ull),
                        load_op(1, 0x8000100ull, 0x402000, true)});
  SimStats stats = run_trace(t, cfg, space);
  CHECK(stats.misspeculations == 5);       // >= 2 repeated misspeculations
  CHECK(stats.spoiler_violations == 5);
  CHECK(stats.attacker_stalls == 5);
  CHECK(stats.reissue_cap_hits == 1);
  CHECK(stats.remask_events == 0);         // M2 never remasks
  CHECK(stats.per_load[0].reissues == 5);
  // base + one conservative wait + five squashes
  CHECK(stats.per_load[0].latency ==
        4 + 3 + 5ull * cfg.latencies.squash_penalty);
}

TEST_CASE("M3 misspeculates once, tags the entry, and remasks") {
  SimConfig cfg = SimConfig::for_model(Model::M3, 11);
  AddressSpace space(6);
  plant_pool_twins(space, 0x4000100ull, 0x8000100ull);
  MobSim sim(cfg, space);
  sim.feed(store_op(0, 0x4000100ull));
  sim.feed(load_op(1, 0x8000100ull, 0x402000, true));

  const SimStats& stats = sim.stats();
  CHECK(stats.misspeculations == 1);
  CHECK(stats.attacker_stalls == 1);
  CHECK(stats.remask_events == 1);
  CHECK(stats.reissue_cap_hits == 0);
  REQUIRE(sim.live_entries() == 1);
  const SabEntry& e = sim.sab().front();
  CHECK(e.vuln_flag);
  CHECK(e.pc_tag == 0x402000);
  // Remask refreshed the stored partial bits in place.
  CHECK(e.partial_valid);
  CHECK(e.partial_pa == extract_bits(e.pa, sim.active_mask()));
  // base + one deduplicated alias stall + one squash
  CHECK(stats.per_load[0].latency == 4 + 3 + 12);
  CHECK(stats.per_load[0].reissues == 1);
}

TEST_CASE("M3 vulnerability tag holds one PC at a time") {
  SimConfig cfg = SimConfig::for_model(Model::M3, 13);
  cfg.store_resolve_delay = 100;  // keep the store live across both probes
  AddressSpace space(8);
  PhysAddr donor(0x00ABCD7000ull);
  BitMask pool = BitMask::range(12, 31);
  space.plant_alias(VirtAddr(0x4000100ull), donor, pool);
  space.plant_alias(VirtAddr(0x8000100ull), donor, pool);
  space.plant_alias(VirtAddr(0xC000100ull), donor, pool);

  Trace t = make_trace({store_op(0, 0x4000100ull),
                        load_op(1, 0x8000100ull, 0xAAAA),
                        load_op(2, 0xC000100ull, 0xBBBB)});
  AddressSpace run_space = space;  // copy keeps plants
  SimStats stats = run_trace(t, cfg, run_space);
  // Each (PC, entry) pair misspeculates at most once; the second PC is not
  // suppressed by the first PC's tag.
  CHECK(stats.misspeculations == 2);
  std::map<std::pair<uint64_t, uint64_t>, int> per_pair;
  AddressSpace again = space;
  MobSim sim(cfg, again);
  for (const auto& op : t.ops) sim.feed(op);
  for (const auto& ev : sim.misspec_log())
    per_pair[{ev.load_pc, ev.store_seq}]++;
  for (const auto& [pair, count] : per_pair) CHECK(count == 1);
}

TEST_CASE("M3 single-replay bound over randomized planted traces") {
  for (uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed * 7919 + 1);
    AddressSpace space(seed);
    PhysAddr donor(0x0077AA3000ull);
    BitMask pool = BitMask::range(12, 31);

    std::vector<TraceOp> ops;
    uint64_t seq = 0;
    uint64_t next_page = 0x100;
    for (int burst = 0; burst < 20; ++burst) {
      uint64_t offset = bounded_rand(rng, 64) * 8;
      // Some stores are planted to collide under any mask, some are not.
      int stores = 1 + static_cast<int>(bounded_rand(rng, 3));
      for (int s = 0; s < stores; ++s) {
        uint64_t va = (next_page++ << kPageBits) | offset;
        if (bounded_rand(rng, 2) == 0)
          space.plant_alias(VirtAddr(va), donor, pool);
        ops.push_back(store_op(seq++, va));
      }
      uint64_t probe_va = (next_page++ << kPageBits) | offset;
      if (bounded_rand(rng, 2) == 0)
        space.plant_alias(VirtAddr(probe_va), donor, pool);
      // One distinct probe PC per burst keeps (PC, entry) pairs unambiguous.
      ops.push_back(load_op(seq++, probe_va, 0x40000 + burst * 4));
    }

    SimConfig cfg = SimConfig::for_model(Model::M3, seed + 1);
    MobSim sim(cfg, space);
    for (const auto& op : ops) sim.feed(op);

    std::map<std::pair<uint64_t, uint64_t>, int> per_pair;
    for (const auto& ev : sim.misspec_log())
      per_pair[{ev.load_pc, ev.store_seq}]++;
    for (const auto& [pair, count] : per_pair) CHECK(count <= 1);
  }
}

TEST_CASE("M1 statistics are blind to the physical mapping") {
  SpoilerParams p;
  p.pages = 8;
  p.rounds = 3;
  p.window = 6;
  p.aliased_pages = {2, 5};
  p.seed = 19;
  AddressSpace gen_space(p.seed);
  Trace t = gen_spoiler_trace(p, gen_space);

  SimConfig cfg = SimConfig::for_model(Model::M1, 0);
  AddressSpace s1(111), s2(222);  // wildly different physical layouts
  SimStats a = run_trace(t, cfg, s1);
  SimStats b = run_trace(t, cfg, s2);
  CHECK(a == b);
  CHECK(a.spoiler_violations == 0);
  CHECK(a.misspeculations == 0);
}

TEST_CASE("simulation is deterministic") {
  SpoilerParams p;
  p.pages = 8;
  p.rounds = 2;
  p.window = 8;
  p.aliased_pages = {1, 4};
  p.seed = 23;
  AddressSpace gen_space(p.seed);
  Trace t = gen_spoiler_trace(p, gen_space);
  for (Model m : {Model::M1, Model::M2, Model::M3}) {
    SimConfig cfg = SimConfig::for_model(m, 5);
    SimStats a = run_trace(t, cfg);
    SimStats b = run_trace(t, cfg);
    CHECK(a == b);
  }
}

TEST_CASE("final load sources honor program order") {
  // The forwarded (or memory) source of every load must be the youngest
  // older same-VA store still buffered at issue, whatever the model and
  // whatever speculation happened in between.
  auto check_sources = [](const Trace& t, Model m, uint64_t sim_seed) {
    std::map<uint64_t, uint64_t> store_va;
    for (const auto& op : t.ops)
      if (op.kind == OpKind::Store) store_va[op.seq] = op.va.value;

    SimConfig cfg = SimConfig::for_model(m, sim_seed);
    AddressSpace space = space_from_metadata(t.meta);
    MobSim sim(cfg, space);
    sim.record_live_sets(true);
    for (const auto& op : t.ops) sim.feed(op);

    size_t load_idx = 0;
    for (const auto& op : t.ops) {
      if (op.kind != OpKind::Load) continue;
      const auto& live = sim.live_sets()[load_idx];
      std::optional<uint64_t> expect;
      for (uint64_t seq : live)
        if (seq < op.seq && store_va.at(seq) == op.va.value) expect = seq;
      CHECK(sim.stats().per_load[load_idx].source_store_seq == expect);
      ++load_idx;
    }
  };

  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Trace benign = gen_benign_trace(BenignKind::Random, 2000, seed);
    Trace fwd = gen_benign_trace(BenignKind::ForwardHeavy, 1000, seed);
    StressParams sp;
    sp.benign_ops = 1500;
    sp.windows = 5;
    sp.window = 10;
    sp.seed = seed;
    Trace stress = gen_mixed_stress_trace(sp);
    for (Model m : {Model::M1, Model::M2, Model::M3}) {
      check_sources(benign, m, seed);
      check_sources(fwd, m, seed);
      check_sources(stress, m, seed);
    }
  }
}

TEST_CASE("malformed traces are rejected") {
  SimConfig cfg = SimConfig::for_model(Model::M1, 0);
  AddressSpace space(1);
  Trace bad = make_trace({store_op(5, 0x1000), store_op(3, 0x2000)});
  CHECK_THROWS_AS(run_trace(bad, cfg, space), ConfigError);
}

TEST_CASE("config validation") {
  SimConfig cfg = SimConfig::for_model(Model::M3, 0);
  cfg.latencies.base_load = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = SimConfig::for_model(Model::M2, 0);
  cfg.mask_width = 12;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = SimConfig::for_model(Model::M3, 0);
  cfg.mask_width = 21;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  CHECK_THROWS_AS(model_from_name("m4"), ConfigError);
  CHECK(model_from_name("m1") == Model::M1);
}
