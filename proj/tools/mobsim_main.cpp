// mobsim command-line front end: generate traces, run the M1/M2/M3
// configurations, and compare run summaries.
//
// Exit codes: 0 success, 2 usage error, 3 I/O error, 4 simulation error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mobsim/address.hpp"
#include "mobsim/metrics.hpp"
#include "mobsim/mob.hpp"
#include "mobsim/trace.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitSim = 4;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string hex64(uint64_t v) {
  char buf[20];
  snprintf(buf, sizeof(buf), "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << body;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// gen

struct GenSpoilerArgs {
  uint32_t pages = 128;
  uint32_t rounds = 20;
  uint32_t window = 56;
  uint32_t aliased = 8;
  std::string aliased_list;
  uint64_t seed = 0;
  std::string out;
};

std::vector<uint32_t> pick_aliased_pages(const GenSpoilerArgs& args) {
  std::vector<uint32_t> pages;
  if (!args.aliased_list.empty()) {
    size_t start = 0;
    const std::string& s = args.aliased_list;
    for (size_t i = 0; i <= s.size(); ++i) {
      if (i == s.size() || s[i] == ',') {
        if (i > start) pages.push_back(static_cast<uint32_t>(std::stoul(s.substr(start, i - start))));
        start = i + 1;
      }
    }
    return pages;
  }
  if (args.aliased > args.pages)
    throw mobsim::ConfigError("--aliased exceeds --pages");
  // Deterministic sample without replacement from the generation seed.
  std::mt19937_64 rng(args.seed ^ 0xA11A5EDull);
  std::set<uint32_t> chosen;
  while (chosen.size() < args.aliased)
    chosen.insert(static_cast<uint32_t>(mobsim::bounded_rand(rng, args.pages)));
  pages.assign(chosen.begin(), chosen.end());
  return pages;
}

int run_gen_spoiler(const GenSpoilerArgs& args) {
  mobsim::SpoilerParams params;
  params.pages = args.pages;
  params.rounds = args.rounds;
  params.window = args.window;
  params.seed = args.seed;
  params.aliased_pages = pick_aliased_pages(args);
  mobsim::AddressSpace space(args.seed);
  mobsim::Trace trace = mobsim::gen_spoiler_trace(params, space);
  mobsim::write_trace_file(trace, args.out);
  std::cout << "wrote " << trace.ops.size() << " ops to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string trace_path;
  std::string model = "m3";
  uint64_t seed = 0;
  std::string out_prefix;
  uint32_t sab_capacity = 56;
  uint32_t resolve_delay = 8;
  uint32_t max_reissues = 64;
  uint32_t base_load = 4;
  uint32_t forward = 5;
  uint32_t alias_stall = 3;
  uint32_t squash = 12;
};

ordered_json detection_json(const mobsim::DetectionReport& report) {
  ordered_json j{{"threshold", report.threshold},
                 {"tpr", report.tpr},
                 {"fpr", report.fpr},
                 {"accuracy", report.accuracy}};
  if (report.separation) j["separation"] = *report.separation;
  else j["separation"] = nullptr;
  return j;
}

int run_run(const RunArgs& args) {
  mobsim::Trace trace = mobsim::read_trace_file(args.trace_path);
  mobsim::SimConfig config =
      mobsim::SimConfig::for_model(mobsim::model_from_name(args.model), args.seed);
  config.sab_capacity = args.sab_capacity;
  config.store_resolve_delay = args.resolve_delay;
  config.max_reissues = args.max_reissues;
  config.latencies = {args.base_load, args.forward, args.alias_stall, args.squash};

  mobsim::SimStats stats = mobsim::run_trace(trace, config);

  std::string loads_csv = "seq,page,pc,reissues,latency_cycles\n";
  for (const auto& rec : stats.per_load) {
    char buf[96];
    snprintf(buf, sizeof(buf), "%llu,0x%llx,0x%llx,%u,%llu\n",
             static_cast<unsigned long long>(rec.seq),
             static_cast<unsigned long long>(rec.vpn),
             static_cast<unsigned long long>(rec.pc), rec.reissues,
             static_cast<unsigned long long>(rec.latency));
    loads_csv += buf;
  }
  write_text_file(args.out_prefix + "_loads.csv", loads_csv);

  bool has_probes = false;
  for (const auto& op : trace.ops)
    if (op.is_probe) { has_probes = true; break; }

  ordered_json detection = nullptr;
  if (has_probes) {
    mobsim::LatencyProfile profile = mobsim::per_page_latency(stats, trace);
    std::string pages_csv = "page,aliased,mean,std,n\n";
    for (const auto& p : profile.per_page) {
      char buf[96];
      snprintf(buf, sizeof(buf), "%u,%d,%.6f,%.6f,%u\n", p.page, p.aliased ? 1 : 0,
               p.mean, p.stddev, p.samples);
      pages_csv += buf;
    }
    write_text_file(args.out_prefix + "_pages.csv", pages_csv);
    detection = detection_json(mobsim::classify_aliased(profile));
  }

  ordered_json summary{
      {"mobsim", "v1"},
      {"trace", {{"fingerprint", hex64(mobsim::trace_fingerprint(trace))},
                 {"generator", trace.meta.value("generator", std::string("unknown"))},
                 {"ops", trace.ops.size()}}},
      {"model", args.model},
      {"config",
       {{"sab_capacity", config.sab_capacity},
        {"mask_width", config.mask_width},
        {"store_resolve_delay", config.store_resolve_delay},
        {"max_reissues", config.max_reissues},
        {"seed", config.seed},
        {"latencies",
         {{"base_load", config.latencies.base_load},
          {"forward", config.latencies.forward},
          {"alias4k_stall", config.latencies.alias4k_stall},
          {"squash_penalty", config.latencies.squash_penalty}}}}},
      {"stats",
       {{"total_cycles", stats.total_cycles},
        {"total_loads", stats.total_loads},
        {"total_stores", stats.total_stores},
        {"spoiler_violations", stats.spoiler_violations},
        {"attacker_stalls", stats.attacker_stalls},
        {"misspeculations", stats.misspeculations},
        {"remask_events", stats.remask_events},
        {"reissue_cap_hits", stats.reissue_cap_hits},
        {"store_stall_cycles", stats.store_stall_cycles}}},
      {"misspec_rate", mobsim::misspec_rate(stats)},
      {"detection", detection},
  };
  write_text_file(args.out_prefix + "_summary.json", summary.dump(2) + "\n");
  std::cout << args.model << ": cycles=" << stats.total_cycles
            << " violations=" << stats.spoiler_violations
            << " misspec_rate=" << mobsim::misspec_rate(stats) * 100.0 << "%\n";
  return 0;
}

// ---------------------------------------------------------------------------
// compare

int run_compare(const std::vector<std::string>& paths, const std::string& json_out) {
  std::vector<ordered_json> summaries;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open summary: " + p);
    ordered_json j;
    in >> j;
    summaries.push_back(std::move(j));
  }
  const std::string fingerprint =
      summaries.front().at("trace").at("fingerprint").get<std::string>();
  for (const auto& s : summaries)
    if (s.at("trace").at("fingerprint").get<std::string>() != fingerprint)
      throw mobsim::ConfigError("summaries come from different traces");

  ordered_json table = ordered_json::array();
  printf("%-6s %14s %12s %12s %12s %14s %10s\n", "model", "total_cycles",
         "violations", "stalls", "misspecs", "misspec_rate", "accuracy");
  const ordered_json* m1 = nullptr;
  const ordered_json* m3 = nullptr;
  for (const auto& s : summaries) {
    const auto& st = s.at("stats");
    std::string model = s.at("model").get<std::string>();
    double rate = s.at("misspec_rate").get<double>();
    double acc = s.at("detection").is_null()
                     ? -1.0
                     : s.at("detection").at("accuracy").get<double>();
    printf("%-6s %14llu %12llu %12llu %12llu %13.6f%% %10s\n", model.c_str(),
           static_cast<unsigned long long>(st.at("total_cycles").get<uint64_t>()),
           static_cast<unsigned long long>(st.at("spoiler_violations").get<uint64_t>()),
           static_cast<unsigned long long>(st.at("attacker_stalls").get<uint64_t>()),
           static_cast<unsigned long long>(st.at("misspeculations").get<uint64_t>()),
           rate * 100.0, acc < 0 ? "n/a" : std::to_string(acc).c_str());
    table.push_back({{"model", model},
                     {"total_cycles", st.at("total_cycles")},
                     {"spoiler_violations", st.at("spoiler_violations")},
                     {"attacker_stalls", st.at("attacker_stalls")},
                     {"misspeculations", st.at("misspeculations")},
                     {"misspec_rate", rate},
                     {"detection_accuracy", acc < 0 ? ordered_json(nullptr) : ordered_json(acc)}});
    if (model == "m1") m1 = &s;
    if (model == "m3") m3 = &s;
  }

  ordered_json verdict = nullptr;
  if (m1 && m3) {
    uint64_t c1 = m1->at("stats").at("total_cycles").get<uint64_t>();
    uint64_t c3 = m3->at("stats").at("total_cycles").get<uint64_t>();
    double cycle_gap = c1 ? std::abs(static_cast<double>(c3) - static_cast<double>(c1)) /
                                static_cast<double>(c1)
                          : 0.0;
    double acc3 = m3->at("detection").is_null()
                      ? 0.0
                      : m3->at("detection").at("accuracy").get<double>();
    bool indistinguishable = acc3 <= 0.55 && cycle_gap <= 0.01;
    verdict = ordered_json{{"m3_vs_m1_indistinguishable", indistinguishable},
                           {"m3_detection_accuracy", acc3},
                           {"cycle_gap_fraction", cycle_gap}};
    printf("verdict: m3-vs-m1 indistinguishable = %s (accuracy %.4f, cycle gap %.4f%%)\n",
           indistinguishable ? "yes" : "no", acc3, cycle_gap * 100.0);
  }

  if (!json_out.empty()) {
    ordered_json out{{"trace_fingerprint", fingerprint},
                     {"rows", table},
                     {"verdict", verdict}};
    write_text_file(json_out, out.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mobsim: memory-order-buffer dependence-prediction simulator"};
  app.require_subcommand(1);

  // --- gen ---
  auto* gen = app.add_subcommand("gen", "generate a trace file");
  gen->require_subcommand(1);

  GenSpoilerArgs sp;
  auto* gen_spoiler = gen->add_subcommand("spoiler", "store-window fill + probe loads");
  gen_spoiler->add_option("--pages", sp.pages, "measured pages")->capture_default_str();
  gen_spoiler->add_option("--rounds", sp.rounds, "rounds per page")->capture_default_str();
  gen_spoiler->add_option("--window", sp.window, "stores per round")->capture_default_str();
  gen_spoiler->add_option("--aliased", sp.aliased, "number of planted aliased pages")
      ->capture_default_str();
  gen_spoiler->add_option("--aliased-pages", sp.aliased_list,
                          "explicit comma-separated page indices (overrides --aliased)");
  gen_spoiler->add_option("--seed", sp.seed, "generation seed")->required();
  gen_spoiler->add_option("--out", sp.out, "output trace path")->required();

  struct {
    std::string kind = "random";
    uint64_t ops = 1000;
    uint64_t seed = 0;
    std::string out;
  } bn;
  auto* gen_benign = gen->add_subcommand("benign", "synthetic background workload");
  gen_benign->add_option("--kind", bn.kind, "random|sequential|forward-heavy")
      ->capture_default_str();
  gen_benign->add_option("--ops", bn.ops, "op count")->capture_default_str();
  gen_benign->add_option("--seed", bn.seed, "generation seed")->required();
  gen_benign->add_option("--out", bn.out, "output trace path")->required();

  struct {
    uint64_t ops = 50000;
    uint32_t windows = 50;
    uint32_t window = 56;
    uint64_t seed = 0;
    std::string out;
  } st;
  auto* gen_stress = gen->add_subcommand("stress", "benign stream with aliased bursts");
  gen_stress->add_option("--ops", st.ops, "benign op count")->capture_default_str();
  gen_stress->add_option("--windows", st.windows, "aliased window bursts")->capture_default_str();
  gen_stress->add_option("--window", st.window, "stores per burst")->capture_default_str();
  gen_stress->add_option("--seed", st.seed, "generation seed")->required();
  gen_stress->add_option("--out", st.out, "output trace path")->required();

  // --- run ---
  RunArgs run_args;
  auto* run = app.add_subcommand("run", "simulate a trace under one model");
  run->add_option("--trace", run_args.trace_path, "input trace file")->required();
  run->add_option("--model", run_args.model, "m1|m2|m3")->required();
  run->add_option("--seed", run_args.seed, "simulator seed (mask draws)")->required();
  run->add_option("--out", run_args.out_prefix, "output path prefix")->required();
  run->add_option("--sab-capacity", run_args.sab_capacity)->capture_default_str();
  run->add_option("--resolve-delay", run_args.resolve_delay)->capture_default_str();
  run->add_option("--max-reissues", run_args.max_reissues)->capture_default_str();
  run->add_option("--base-load", run_args.base_load)->capture_default_str();
  run->add_option("--forward", run_args.forward)->capture_default_str();
  run->add_option("--alias-stall", run_args.alias_stall)->capture_default_str();
  run->add_option("--squash", run_args.squash)->capture_default_str();

  // --- compare ---
  std::vector<std::string> compare_paths;
  std::string compare_json;
  auto* compare = app.add_subcommand("compare", "compare run summaries over one trace");
  compare->add_option("summaries", compare_paths, "summary JSON files (>= 2)")
      ->expected(-2);
  compare->add_option("--json", compare_json, "also write a JSON comparison");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen_spoiler->parsed()) return run_gen_spoiler(sp);
    if (gen_benign->parsed()) {
      mobsim::Trace trace =
          mobsim::gen_benign_trace(mobsim::benign_kind_from_name(bn.kind), bn.ops, bn.seed);
      mobsim::write_trace_file(trace, bn.out);
      std::cout << "wrote " << trace.ops.size() << " ops to " << bn.out << "\n";
      return 0;
    }
    if (gen_stress->parsed()) {
      mobsim::StressParams params{st.ops, st.windows, st.window, st.seed};
      mobsim::Trace trace = mobsim::gen_mixed_stress_trace(params);
      mobsim::write_trace_file(trace, st.out);
      std::cout << "wrote " << trace.ops.size() << " ops to " << st.out << "\n";
      return 0;
    }
    if (run->parsed()) return run_run(run_args);
    if (compare->parsed()) {
      if (compare_paths.size() < 2)
        throw mobsim::ConfigError("compare needs at least two summaries");
      return run_compare(compare_paths, compare_json);
    }
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const mobsim::TraceParseError& e) {
    std::cerr << "trace error: " << e.what() << "\n";
    return kExitIo;
  } catch (const mobsim::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSim;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
