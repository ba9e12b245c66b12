#include "mtvrp/core/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mtvrp {

namespace {

using nlohmann::json;

std::string real(double v) {
  if (std::isinf(v) && v > 0) return "\"inf\"";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T, class F>
std::string list(const std::vector<T>& xs, F fmt) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ", ";
    s += fmt(xs[i]);
  }
  return s + "]";
}

double get_real(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kInf;
    throw FormatError("expected a number or \"inf\", got " + j.dump());
  }
  if (!j.is_number()) throw FormatError("expected a number, got " + j.dump());
  return j.get<double>();
}

std::vector<double> get_reals(const json& j) {
  if (!j.is_array()) throw FormatError("expected an array");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(get_real(e));
  return out;
}

std::vector<int> get_ints(const json& j) {
  if (!j.is_array()) throw FormatError("expected an array");
  std::vector<int> out;
  for (const auto& e : j) {
    if (!e.is_number_integer()) throw FormatError("expected an integer, got " + e.dump());
    out.push_back(e.get<int>());
  }
  return out;
}

const json& field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw FormatError(std::string("missing field '") + key + "'");
  return *it;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed document: ") + e.what());
  }
}

}  // namespace

std::string serialize_instance(const ProblemInstance& inst) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"version\": " << kInstanceFormatVersion << ",\n";
  os << "  \"variant\": \"" << inst.variant.name() << "\",\n";
  os << "  \"n\": " << inst.num_customers() << ",\n";
  os << "  \"seed\": " << inst.seed << ",\n";
  os << "  \"coords\": " << list(inst.coords, [](const Point& p) { return "[" + real(p.x) + ", " + real(p.y) + "]"; })
     << ",\n";
  auto ints = [](int v) { return std::to_string(v); };
  os << "  \"linehaul\": " << list(inst.linehaul, ints) << ",\n";
  os << "  \"backhaul\": " << list(inst.backhaul, ints) << ",\n";
  os << "  \"capacity\": " << inst.capacity << ",\n";
  os << "  \"open\": " << (inst.open ? 1 : 0) << ",\n";
  os << "  \"dur_limit\": " << real(inst.dur_limit) << ",\n";
  os << "  \"tw_beg\": " << list(inst.tw_beg, real) << ",\n";
  os << "  \"tw_end\": " << list(inst.tw_end, real) << ",\n";
  os << "  \"tw_dur\": " << list(inst.tw_dur, real) << "\n";
  os << "}\n";
  return os.str();
}

ProblemInstance parse_instance(const std::string& text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) throw FormatError("instance document must be an object");
  const int version = field(doc, "version").get<int>();
  if (version != kInstanceFormatVersion) throw FormatError("unsupported instance version " + std::to_string(version));
  ProblemInstance inst;
  try {
    inst.variant = Variant::parse(field(doc, "variant").get<std::string>());
    inst.seed = field(doc, "seed").get<std::uint64_t>();
    const json& coords = field(doc, "coords");
    if (!coords.is_array()) throw FormatError("coords must be an array");
    for (const auto& c : coords) {
      if (!c.is_array() || c.size() != 2) throw FormatError("coordinate must be [x, y]");
      inst.coords.push_back({get_real(c[0]), get_real(c[1])});
    }
    inst.linehaul = get_ints(field(doc, "linehaul"));
    inst.backhaul = get_ints(field(doc, "backhaul"));
    inst.capacity = field(doc, "capacity").get<int>();
    inst.open = field(doc, "open").get<int>() != 0;
    inst.dur_limit = get_real(field(doc, "dur_limit"));
    inst.tw_beg = get_reals(field(doc, "tw_beg"));
    inst.tw_end = get_reals(field(doc, "tw_end"));
    inst.tw_dur = get_reals(field(doc, "tw_dur"));
    const int n = field(doc, "n").get<int>();
    if (n != inst.num_customers()) throw FormatError("field n disagrees with the coordinate count");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad field type: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  try {
    check_instance(inst);
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return inst;
}

std::string instance_hash(const ProblemInstance& inst) {
  const std::string text = serialize_instance(inst);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string serialize_tour(const ProblemInstance& inst, const Tour& tour) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"version\": " << kTourFormatVersion << ",\n";
  os << "  \"instance_hash\": \"" << instance_hash(inst) << "\",\n";
  os << "  \"nodes\": " << list(tour.nodes, [](int v) { return std::to_string(v); }) << ",\n";
  os << "  \"cost\": " << real(tour.cost) << "\n";
  os << "}\n";
  return os.str();
}

TourFile parse_tour(const std::string& text) {
  const json doc = parse_json(text);
  TourFile out;
  try {
    const int version = field(doc, "version").get<int>();
    if (version != kTourFormatVersion) throw FormatError("unsupported tour version " + std::to_string(version));
    out.instance_hash = field(doc, "instance_hash").get<std::string>();
    out.tour.nodes = get_ints(field(doc, "nodes"));
    out.tour.cost = get_real(field(doc, "cost"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad field type: ") + e.what());
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<DatasetEntry> parse_manifest(const std::string& text) {
  std::vector<DatasetEntry> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string variant, path;
    if (!(ls >> variant >> path)) throw FormatError("manifest line " + std::to_string(lineno) + " is malformed");
    try {
      out.push_back({Variant::parse(variant), path});
    } catch (const std::invalid_argument& e) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string serialize_manifest(const std::vector<DatasetEntry>& entries) {
  std::string s;
  for (const auto& e : entries) s += e.variant.name() + " " + e.path + "\n";
  return s;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  for (const auto& e : parse_manifest(read_text_file(dir / "manifest.txt"))) {
    ProblemInstance inst = parse_instance(read_text_file(dir / e.path));
    if (!(inst.variant == e.variant)) {
      throw FormatError(e.path + ": variant " + inst.variant.name() + " disagrees with manifest tag " +
                        e.variant.name());
    }
    ds.instances.push_back(std::move(inst));
    ds.names.push_back(e.path);
  }
  return ds;
}

}  // namespace mtvrp
