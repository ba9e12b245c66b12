#include "mtvrp/eval/cvrplib.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

namespace mtvrp::eval {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (trim(s.substr(used)).size() != 0) throw std::invalid_argument("trailing");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw CvrplibError("bad integer for " + what + ": '" + s + "'");
  }
}

}  // namespace

CvrplibInstance parse_cvrplib(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> header;
  std::optional<int> dimension;
  std::map<int, Point> coords;
  std::map<int, int> demand;
  std::vector<int> depots;
  bool have_coords = false, have_demand = false, have_depot = false;

  enum class Section { none, coords, demand, depot } section = Section::none;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string key = upper(t);
    if (key == "EOF") break;
    if (key.rfind("NODE_COORD_SECTION", 0) == 0) {
      section = Section::coords;
      have_coords = true;
      continue;
    }
    if (key.rfind("DEMAND_SECTION", 0) == 0) {
      section = Section::demand;
      have_demand = true;
      continue;
    }
    if (key.rfind("DEPOT_SECTION", 0) == 0) {
      section = Section::depot;
      have_depot = true;
      continue;
    }
    const auto colon = t.find(':');
    if (colon != std::string::npos && std::isalpha(static_cast<unsigned char>(t[0]))) {
      const std::string k = upper(trim(t.substr(0, colon)));
      header[k] = trim(t.substr(colon + 1));
      if (k == "DIMENSION") dimension = parse_int(header[k], "DIMENSION");
      section = Section::none;
      continue;
    }
    std::istringstream row(t);
    const std::string where = "line " + std::to_string(line_no);
    switch (section) {
      case Section::coords: {
        int id;
        double x, y;
        if (!(row >> id >> x >> y)) throw CvrplibError("malformed NODE_COORD_SECTION at " + where);
        if (coords.count(id)) throw CvrplibError("duplicate node " + std::to_string(id) + " at " + where);
        coords[id] = Point{x, y};
        break;
      }
      case Section::demand: {
        int id, d;
        if (!(row >> id >> d)) throw CvrplibError("malformed DEMAND_SECTION at " + where);
        if (d < 0) throw CvrplibError("negative demand at " + where);
        demand[id] = d;
        break;
      }
      case Section::depot: {
        int id;
        if (!(row >> id)) throw CvrplibError("malformed DEPOT_SECTION at " + where);
        if (id == -1) {
          section = Section::none;
        } else {
          depots.push_back(id);
        }
        break;
      }
      case Section::none:
        throw CvrplibError("unexpected content at " + where + ": '" + t + "'");
    }
  }

  if (!dimension || *dimension < 1) throw CvrplibError("missing or invalid DIMENSION");
  if (!header.count("CAPACITY")) throw CvrplibError("missing CAPACITY");
  const int capacity = parse_int(header["CAPACITY"], "CAPACITY");
  if (capacity <= 0) throw CvrplibError("CAPACITY must be positive");
  const std::string ewt = header.count("EDGE_WEIGHT_TYPE") ? upper(header["EDGE_WEIGHT_TYPE"]) : "";
  if (ewt != "EUC_2D") throw CvrplibError("unsupported EDGE_WEIGHT_TYPE '" + ewt + "' (only EUC_2D)");
  if (header.count("TYPE") && upper(header["TYPE"]) != "CVRP") {
    throw CvrplibError("unsupported TYPE '" + header["TYPE"] + "'");
  }
  if (!have_coords) throw CvrplibError("missing NODE_COORD_SECTION");
  if (!have_demand) throw CvrplibError("missing DEMAND_SECTION");
  const int dim = *dimension;
  if (static_cast<int>(coords.size()) != dim) throw CvrplibError("NODE_COORD_SECTION does not list DIMENSION nodes");
  if (static_cast<int>(demand.size()) != dim) throw CvrplibError("DEMAND_SECTION does not list DIMENSION nodes");
  for (int id = 1; id <= dim; ++id) {
    if (!coords.count(id) || !demand.count(id)) throw CvrplibError("node ids must run from 1 to DIMENSION");
  }
  int depot = 1;
  if (have_depot) {
    if (depots.size() != 1) throw CvrplibError("exactly one depot is supported");
    depot = depots[0];
    if (depot < 1 || depot > dim) throw CvrplibError("depot id out of range");
  }

  std::vector<int> order{depot};
  for (int id = 1; id <= dim; ++id) {
    if (id != depot) order.push_back(id);
  }
  double minx = coords.begin()->second.x, maxx = minx;
  double miny = coords.begin()->second.y, maxy = miny;
  for (const auto& [id, p] : coords) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  double scale = std::max(maxx - minx, maxy - miny);
  if (scale <= 0.0) scale = 1.0;

  CvrplibInstance out;
  out.name = header.count("NAME") ? header["NAME"] : "";
  out.scale = scale;
  out.offset_x = minx;
  out.offset_y = miny;
  ProblemInstance& inst = out.instance;
  inst.capacity = capacity;
  const int n1 = dim;
  inst.coords.resize(n1);
  inst.linehaul.assign(n1, 0);
  inst.backhaul.assign(n1, 0);
  inst.tw_beg.assign(n1, 0.0);
  inst.tw_end.assign(n1, kInf);
  inst.tw_dur.assign(n1, 0.0);
  for (int k = 0; k < n1; ++k) {
    const Point& p = coords[order[k]];
    inst.coords[k] = Point{(p.x - minx) / scale, (p.y - miny) / scale};
    if (k > 0) {
      inst.linehaul[k] = demand[order[k]];
      if (inst.linehaul[k] > capacity) throw CvrplibError("a demand exceeds CAPACITY");
    }
  }
  try {
    check_instance(inst);
  } catch (const std::invalid_argument& e) {
    throw CvrplibError(std::string("instance rejected: ") + e.what());
  }
  return out;
}

}  // namespace mtvrp::eval
