#include "mobsim/trace.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mobsim {

namespace {

constexpr const char* kHeaderTag = "#mobtrace";
constexpr const char* kVersion = "v1";

uint64_t parse_u64(std::string_view field, size_t line, const char* what, int base) {
  if (base == 16) {
    if (field.size() < 3 || field[0] != '0' || field[1] != 'x')
      throw TraceParseError(line, std::string(what) + " must be 0x-prefixed hex");
    field.remove_prefix(2);
  }
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value, base);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw TraceParseError(line, std::string("bad ") + what + " field");
  return value;
}

}  // namespace

void write_trace(const Trace& trace, std::ostream& out) {
  out << kHeaderTag << ' ' << kVersion << ' ' << trace.meta.dump() << '\n';
  for (const auto& op : trace.ops) {
    char buf[80];
    snprintf(buf, sizeof(buf), "%llu,%c,0x%llx,0x%llx,%d\n",
             static_cast<unsigned long long>(op.seq),
             op.kind == OpKind::Store ? 'S' : 'L',
             static_cast<unsigned long long>(op.va.value),
             static_cast<unsigned long long>(op.pc), op.is_probe ? 1 : 0);
    out << buf;
  }
}

void write_trace_file(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_trace(trace, out);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  size_t line_no = 0;

  if (!std::getline(in, line)) throw TraceParseError(1, "empty input");
  ++line_no;
  {
    std::istringstream header(line);
    std::string tag, version;
    header >> tag >> version;
    if (tag != kHeaderTag) throw TraceParseError(1, "missing #mobtrace header");
    if (version != kVersion)
      throw TraceParseError(1, "unsupported trace version: " + version);
    std::string rest;
    std::getline(header, rest);
    try {
      trace.meta = nlohmann::ordered_json::parse(rest);
    } catch (const nlohmann::json::parse_error& e) {
      throw TraceParseError(1, std::string("bad metadata json: ") + e.what());
    }
  }

  bool have_prev = false;
  uint64_t prev_seq = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string_view view(line);
    std::vector<std::string_view> fields;
    size_t start = 0;
    for (size_t i = 0; i <= view.size(); ++i) {
      if (i == view.size() || view[i] == ',') {
        fields.push_back(view.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 5)
      throw TraceParseError(line_no, "expected 5 comma-separated fields, got " +
                                         std::to_string(fields.size()));
    TraceOp op;
    op.seq = parse_u64(fields[0], line_no, "seq", 10);
    if (fields[1] == "S") op.kind = OpKind::Store;
    else if (fields[1] == "L") op.kind = OpKind::Load;
    else throw TraceParseError(line_no, "kind must be S or L");
    try {
      op.va = VirtAddr(parse_u64(fields[2], line_no, "va", 16));
    } catch (const ConfigError& e) {
      throw TraceParseError(line_no, e.what());
    }
    op.pc = parse_u64(fields[3], line_no, "pc", 16);
    if (fields[4] == "0") op.is_probe = false;
    else if (fields[4] == "1") op.is_probe = true;
    else throw TraceParseError(line_no, "probe flag must be 0 or 1");
    if (have_prev && op.seq <= prev_seq)
      throw TraceParseError(line_no, "sequence numbers must increase strictly");
    prev_seq = op.seq;
    have_prev = true;
    trace.ops.push_back(op);
  }
  return trace;
}

Trace read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace: " + path);
  return read_trace(in);
}

uint64_t trace_fingerprint(const Trace& trace) {
  std::ostringstream buf;
  write_trace(trace, buf);
  std::string bytes = buf.str();
  uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

}  // namespace mobsim
