#include "equiflex/grid/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "equiflex/error.hpp"
#include "../common/json_util.hpp"

namespace equiflex::grid {

using nlohmann::json;

void check_base(const PerUnitBase& base) {
  if (!(base.power_mva > 0.0) || !std::isfinite(base.power_mva)) {
    throw ValidationError("base power must be positive, got " + std::to_string(base.power_mva));
  }
  if (!(base.voltage_kv > 0.0) || !std::isfinite(base.voltage_kv)) {
    throw ValidationError("base voltage must be positive, got " + std::to_string(base.voltage_kv));
  }
}

double to_per_unit_power(double kw, const PerUnitBase& base) {
  check_base(base);
  return kw / base.power_kw();
}
double from_per_unit_power(double pu, const PerUnitBase& base) {
  check_base(base);
  return pu * base.power_kw();
}
double to_per_unit_impedance(double ohm, const PerUnitBase& base) {
  check_base(base);
  return ohm / base.z_base_ohm();
}
double from_per_unit_impedance(double pu, const PerUnitBase& base) {
  check_base(base);
  return pu * base.z_base_ohm();
}

double reactive_from_pf(double p, double power_factor) {
  if (power_factor >= 1.0) return 0.0;
  return p * std::sqrt(1.0 - power_factor * power_factor) / power_factor;
}

std::size_t NetworkCase::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw ValidationError("unknown bus " + std::to_string(id));
}

std::vector<std::size_t> NetworkCase::pcc_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].kind == BusKind::pcc) out.push_back(i);
  }
  return out;
}

double NetworkCase::load_pu(std::size_t bus, std::size_t t) const {
  return buses[bus].fixed_load_kw[t] / base.power_kw();
}
double NetworkCase::reactive_load_pu(std::size_t bus, std::size_t t) const {
  return reactive_from_pf(load_pu(bus, t), buses[bus].power_factor);
}
double NetworkCase::r_pu(std::size_t line) const { return lines[line].r_ohm / base.z_base_ohm(); }
double NetworkCase::x_pu(std::size_t line) const { return lines[line].x_ohm / base.z_base_ohm(); }
double NetworkCase::s_max_pu(std::size_t line) const { return lines[line].s_max_kva / base.power_kw(); }

double NetworkCase::total_load_kw(std::size_t t) const {
  double s = 0.0;
  for (const auto& b : buses) s += b.fixed_load_kw[t];
  return s;
}

double NetworkCase::peak_load_kw() const {
  double peak = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) peak = std::max(peak, total_load_kw(t));
  return peak;
}

TopologyReport validate_topology(const NetworkCase& net) {
  TopologyReport rep;
  const std::size_t n = net.buses.size();
  rep.parent.assign(n, -1);
  rep.parent_line.assign(n, -1);
  rep.children.assign(n, {});
  rep.depth.assign(n, 0);
  if (n == 0) {
    rep.violations.push_back("case has no buses");
    return rep;
  }
  std::map<int, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(net.buses[i].id, i).second) {
      rep.violations.push_back("duplicate bus id " + std::to_string(net.buses[i].id));
    }
  }
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbour, line)
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const auto& ln = net.lines[l];
    auto f = index.find(ln.from);
    auto t = index.find(ln.to);
    if (f == index.end() || t == index.end()) {
      rep.violations.push_back("line " + std::to_string(l) + " (" + std::to_string(ln.from) + "-" +
                               std::to_string(ln.to) + ") references an unknown bus");
      continue;
    }
    if (f->second == t->second) {
      rep.violations.push_back("line " + std::to_string(l) + " is a self-loop at bus " +
                               std::to_string(ln.from));
      continue;
    }
    adj[f->second].emplace_back(t->second, l);
    adj[t->second].emplace_back(f->second, l);
  }
  const auto pccs = net.pcc_indices();
  rep.root = pccs.empty() ? 0 : pccs.front();
  if (pccs.empty()) rep.violations.push_back("no PCC bus");

  // Breadth-first search from the root; a non-tree edge closes a cycle.
  std::vector<bool> seen(n, false);
  std::vector<bool> line_used(net.lines.size(), false);
  std::deque<std::size_t> queue{rep.root};
  seen[rep.root] = true;
  bool cycle_reported = false;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    rep.order.push_back(u);
    for (auto [v, l] : adj[u]) {
      if (line_used[l]) continue;
      line_used[l] = true;
      if (seen[v]) {
        if (!cycle_reported) {
          // Walk both endpoints up to their common ancestor.
          std::vector<std::size_t> a{u}, b{v};
          while (rep.parent[a.back()] >= 0) a.push_back(std::size_t(rep.parent[a.back()]));
          while (rep.parent[b.back()] >= 0) b.push_back(std::size_t(rep.parent[b.back()]));
          while (a.size() > 1 && b.size() > 1 && a[a.size() - 2] == b[b.size() - 2]) {
            a.pop_back();
            b.pop_back();
          }
          std::string path;
          for (std::size_t k : a) path += std::to_string(net.buses[k].id) + "-";
          for (std::size_t k = b.size() - 1; k-- > 0;) path += std::to_string(net.buses[b[k]].id) + "-";
          path += std::to_string(net.buses[u].id);
          rep.violations.push_back("cycle through buses " + path);
          cycle_reported = true;
        }
        continue;
      }
      seen[v] = true;
      rep.parent[v] = long(u);
      rep.parent_line[v] = long(l);
      rep.depth[v] = rep.depth[u] + 1;
      rep.children[u].push_back(v);
      queue.push_back(v);
    }
  }
  rep.connected = std::all_of(seen.begin(), seen.end(), [](bool s) { return s; });
  if (!rep.connected) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!seen[i]) {
        rep.violations.push_back("bus " + std::to_string(net.buses[i].id) + " is not connected to the PCC");
        break;
      }
    }
  }
  rep.radial = rep.connected && !cycle_reported && net.lines.size() + 1 == n;
  if (rep.connected && !cycle_reported && !rep.radial) {
    rep.violations.push_back("line count " + std::to_string(net.lines.size()) + " is not bus count - 1");
  }
  return rep;
}

TopologyReport validate_case(const NetworkCase& net) {
  check_base(net.base);
  if (net.horizon < 1) throw ValidationError("horizon must be at least 1");
  if (!(net.dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(net.pcc_import_max_kw > 0.0)) throw ValidationError("pcc_import_max_kw must be positive");
  for (const auto& b : net.buses) {
    const std::string name = "bus " + std::to_string(b.id);
    if (!(b.v_min > 0.0)) throw ValidationError(name + ": v_min must be positive");
    // The PCC may be pinned (v_min == v_max); load buses need a proper band.
    if (b.kind == BusKind::pcc ? !(b.v_min <= b.v_max) : !(b.v_min < b.v_max)) {
      throw ValidationError(name + ": v_max " + std::to_string(b.v_max) + " is below v_min " +
                            std::to_string(b.v_min));
    }
    if (b.fixed_load_kw.size() != net.horizon) {
      throw ValidationError(name + ": fixed_load_kw has " + std::to_string(b.fixed_load_kw.size()) +
                            " values, horizon is " + std::to_string(net.horizon));
    }
    for (double p : b.fixed_load_kw) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError(name + ": fixed load must be >= 0");
    }
    if (!(b.power_factor > 0.0 && b.power_factor <= 1.0)) {
      throw ValidationError(name + ": power_factor must lie in (0, 1]");
    }
    if (!(b.min_energy_kwh >= 0.0)) throw ValidationError(name + ": min_energy_kwh must be >= 0");
  }
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const auto& ln = net.lines[l];
    const std::string name = "line " + std::to_string(ln.from) + "-" + std::to_string(ln.to);
    if (ln.from == ln.to) throw ValidationError(name + ": from equals to");
    if (!(ln.r_ohm >= 0.0) || !(ln.x_ohm >= 0.0)) throw ValidationError(name + ": negative impedance");
    if (!(ln.s_max_kva > 0.0)) throw ValidationError(name + ": s_max_kva must be positive");
  }
  TopologyReport rep = validate_topology(net);
  if (!rep.violations.empty()) throw ValidationError(rep.violations.front());
  return rep;
}

using detail::optional;
using detail::required;

NetworkCase parse_case(const std::string& text) {
  const json doc = detail::parse_json(text, "case file");
  if (!doc.is_object()) throw ParseError("case file: top level must be an object");
  NetworkCase net;
  net.name = optional<std::string>(doc, "name", "", "case");
  if (!doc.contains("base")) throw ParseError("case: missing key 'base'");
  const json& base = doc["base"];
  net.base.power_mva = required<double>(base, "power_mva", "base");
  net.base.voltage_kv = required<double>(base, "voltage_kv", "base");
  net.horizon = required<std::size_t>(doc, "horizon", "case");
  net.dt = required<double>(doc, "dt", "case");
  net.pcc_import_max_kw =
      optional<double>(doc, "pcc_import_max_kw", std::numeric_limits<double>::infinity(), "case");
  if (!doc.contains("buses") || !doc["buses"].is_array()) throw ParseError("case: 'buses' must be an array");
  if (!doc.contains("lines") || !doc["lines"].is_array()) throw ParseError("case: 'lines' must be an array");
  for (std::size_t i = 0; i < doc["buses"].size(); ++i) {
    const json& jb = doc["buses"][i];
    const std::string where = "buses[" + std::to_string(i) + "]";
    BusSpec b;
    b.id = required<int>(jb, "id", where);
    const auto kind = required<std::string>(jb, "kind", where);
    if (kind == "pcc") {
      b.kind = BusKind::pcc;
    } else if (kind == "load") {
      b.kind = BusKind::load;
    } else {
      throw ParseError(where + ": kind must be 'pcc' or 'load', got '" + kind + "'");
    }
    b.v_min = required<double>(jb, "v_min", where);
    b.v_max = required<double>(jb, "v_max", where);
    b.fixed_load_kw = required<std::vector<double>>(jb, "fixed_load_kw", where);
    b.power_factor = optional<double>(jb, "power_factor", 0.95, where);
    const double energy = std::accumulate(b.fixed_load_kw.begin(), b.fixed_load_kw.end(), 0.0) * net.dt;
    b.min_energy_kwh = optional<double>(jb, "min_energy_kwh", energy, where);
    net.buses.push_back(std::move(b));
  }
  for (std::size_t i = 0; i < doc["lines"].size(); ++i) {
    const json& jl = doc["lines"][i];
    const std::string where = "lines[" + std::to_string(i) + "]";
    LineSpec l;
    l.from = required<int>(jl, "from", where);
    l.to = required<int>(jl, "to", where);
    l.r_ohm = required<double>(jl, "r_ohm", where);
    l.x_ohm = required<double>(jl, "x_ohm", where);
    l.s_max_kva = required<double>(jl, "s_max_kva", where);
    net.lines.push_back(l);
  }
  validate_case(net);
  return net;
}

NetworkCase load_case(const std::filesystem::path& path) {
  return parse_case(detail::read_file(path.string(), "case file"));
}

std::string dump_case(const NetworkCase& net) {
  using ojson = nlohmann::ordered_json;
  ojson doc;
  doc["name"] = net.name;
  doc["base"] = {{"power_mva", net.base.power_mva}, {"voltage_kv", net.base.voltage_kv}};
  doc["horizon"] = net.horizon;
  doc["dt"] = net.dt;
  if (std::isfinite(net.pcc_import_max_kw)) doc["pcc_import_max_kw"] = net.pcc_import_max_kw;
  doc["buses"] = ojson::array();
  for (const auto& b : net.buses) {
    doc["buses"].push_back(ojson{{"id", b.id},
                            {"kind", b.kind == BusKind::pcc ? "pcc" : "load"},
                            {"v_min", b.v_min},
                            {"v_max", b.v_max},
                            {"power_factor", b.power_factor},
                            {"min_energy_kwh", b.min_energy_kwh},
                            {"fixed_load_kw", b.fixed_load_kw}});
  }
  doc["lines"] = ojson::array();
  for (const auto& l : net.lines) {
    doc["lines"].push_back(
        ojson{{"from", l.from}, {"to", l.to}, {"r_ohm", l.r_ohm}, {"x_ohm", l.x_ohm}, {"s_max_kva", l.s_max_kva}});
  }
  // One bus or line per row keeps the file diffable.
  std::string out = "{\n";
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    out += "  " + ojson(it.key()).dump() + ": ";
    if (it->is_array()) {
      out += "[\n";
      for (std::size_t i = 0; i < it->size(); ++i) {
        out += "    " + (*it)[i].dump() + (i + 1 < it->size() ? ",\n" : "\n");
      }
      out += "  ]";
    } else {
      out += it->dump();
    }
    out += std::next(it) != doc.end() ? ",\n" : "\n";
  }
  return out + "}\n";
}

void save_case(const NetworkCase& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write case file " + path.string());
  out << dump_case(net);
}

const std::vector<double>& default_load_shape() {
  static const std::vector<double> shape = {0.62, 0.58, 0.56, 0.55, 0.56, 0.60, 0.68, 0.76,
                                            0.80, 0.82, 0.83, 0.84, 0.83, 0.82, 0.82, 0.84,
                                            0.89, 0.95, 1.00, 0.98, 0.93, 0.85, 0.76, 0.68};
  return shape;
}

namespace {

struct Ieee33Row {
  int from, to;
  double r, x;  // ohm
  double p, q;  // kW, kvar at the receiving bus
};

// Baran and Wu feeder table.
constexpr Ieee33Row kIeee33[] = {
    {1, 2, 0.0922, 0.0470, 100, 60},   {2, 3, 0.4930, 0.2511, 90, 40},
    {3, 4, 0.3660, 0.1864, 120, 80},   {4, 5, 0.3811, 0.1941, 60, 30},
    {5, 6, 0.8190, 0.7070, 60, 20},    {6, 7, 0.1872, 0.6188, 200, 100},
    {7, 8, 0.7114, 0.2351, 200, 100},  {8, 9, 1.0300, 0.7400, 60, 20},
    {9, 10, 1.0440, 0.7400, 60, 20},   {10, 11, 0.1966, 0.0650, 45, 30},
    {11, 12, 0.3744, 0.1238, 60, 35},  {12, 13, 1.4680, 1.1550, 60, 35},
    {13, 14, 0.5416, 0.7129, 120, 80}, {14, 15, 0.5910, 0.5260, 60, 10},
    {15, 16, 0.7463, 0.5450, 60, 20},  {16, 17, 1.2890, 1.7210, 60, 20},
    {17, 18, 0.7320, 0.5740, 90, 40},  {2, 19, 0.1640, 0.1565, 90, 40},
    {19, 20, 1.5042, 1.3554, 90, 40},  {20, 21, 0.4095, 0.4784, 90, 40},
    {21, 22, 0.7089, 0.9373, 90, 40},  {3, 23, 0.4512, 0.3083, 90, 50},
    {23, 24, 0.8980, 0.7091, 420, 200}, {24, 25, 0.8960, 0.7011, 420, 200},
    {6, 26, 0.2030, 0.1034, 60, 25},   {26, 27, 0.2842, 0.1447, 60, 25},
    {27, 28, 1.0590, 0.9337, 60, 20},  {28, 29, 0.8042, 0.7006, 120, 70},
    {29, 30, 0.5075, 0.2585, 200, 600}, {30, 31, 0.9744, 0.9630, 150, 70},
    {31, 32, 0.3105, 0.3619, 210, 100}, {32, 33, 0.3410, 0.5302, 60, 40},
};

// Line rating: this multiple of the peak apparent load downstream of the
// line, rounded up to 10 kVA. The margin covers load growth of about 50% on
// a single lateral.
constexpr double kRatingMargin = 1.5;

}  // namespace

NetworkCase extract_subcase(const NetworkCase& net, const std::vector<int>& bus_ids) {
  NetworkCase out = net;
  out.buses.clear();
  out.lines.clear();
  auto keep = [&](int id) { return std::find(bus_ids.begin(), bus_ids.end(), id) != bus_ids.end(); };
  for (int id : bus_ids) out.buses.push_back(net.buses[net.bus_index(id)]);
  for (const auto& l : net.lines) {
    if (keep(l.from) && keep(l.to)) out.lines.push_back(l);
  }
  validate_case(out);
  return out;
}

NetworkCase builtin_ieee33() {
  NetworkCase net;
  net.name = "ieee33";
  net.base = {1.0, 12.66};
  net.horizon = 24;
  net.dt = 1.0;
  const auto& shape = default_load_shape();
  BusSpec pcc;
  pcc.id = 1;
  pcc.kind = BusKind::pcc;
  pcc.v_min = 1.0;
  pcc.v_max = 1.0;
  pcc.power_factor = 1.0;
  pcc.fixed_load_kw.assign(net.horizon, 0.0);
  net.buses.push_back(pcc);
  for (const auto& row : kIeee33) {
    BusSpec b;
    b.id = row.to;
    b.v_min = 0.90;
    b.v_max = 1.05;
    b.power_factor = row.p / std::hypot(row.p, row.q);
    for (double s : shape) b.fixed_load_kw.push_back(std::round(row.p * s * 1e6) / 1e6);
    b.min_energy_kwh = std::accumulate(b.fixed_load_kw.begin(), b.fixed_load_kw.end(), 0.0) * net.dt;
    net.buses.push_back(std::move(b));
  }
  // Downstream apparent load per bus (table rows are in parent-before-child
  // order only per branch, so accumulate over the tree explicitly).
  std::map<int, double> downstream;
  std::map<int, int> parent;
  for (const auto& row : kIeee33) {
    parent[row.to] = row.from;
    downstream[row.to] = std::hypot(row.p, row.q);
  }
  std::map<int, double> total = downstream;
  for (const auto& row : kIeee33) {
    for (int up = row.from; up != 1; up = parent[up]) total[up] += downstream[row.to];
  }
  for (const auto& row : kIeee33) {
    LineSpec l;
    l.from = row.from;
    l.to = row.to;
    l.r_ohm = row.r;
    l.x_ohm = row.x;
    l.s_max_kva = std::ceil(kRatingMargin * total[row.to] / 10.0) * 10.0;
    net.lines.push_back(l);
  }
  return net;
}

}  // namespace equiflex::grid
