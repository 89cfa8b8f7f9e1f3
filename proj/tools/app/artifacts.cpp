#include "artifacts.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace equiflex::app {

namespace {

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header) : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw Error("cannot write " + path.string());
    f_ << header << '\n';
  }
  ~CsvWriter() noexcept(false) {
    f_.flush();
    if (!f_ && std::uncaught_exceptions() == 0) throw Error("failed writing " + path_.string());
  }
  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((f_ << (first ? "" : ",") << cell(cells), first = false), ...);
    f_ << '\n';
  }

 private:
  static std::string cell(double v) { return format_number(v); }
  static std::string cell(const std::string& s) {
    if (s.find_first_of(",\n\"") != std::string::npos) throw ValidationError("identifier '" + s + "' contains a comma");
    return s;
  }
  static std::string cell(const char* s) { return s; }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }

  std::filesystem::path path_;
  std::ofstream f_;
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nan("");
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ParseError(where + ": bad number '" + s + "'");
  return v;
}

void put(std::vector<double>& v, std::size_t t, double x) {
  if (v.size() <= t) v.resize(t + 1, std::nan(""));
  v[t] = x;
}

const char* kind_name(bool ev) { return ev ? "ev" : "bess"; }

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return {};
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void write_dispatch_csv(const std::filesystem::path& path, const stage1::MarketInputs& in,
                        const stage1::DispatchResult& d) {
  const auto& net = in.network;
  const auto& pf = in.portfolio;
  const auto& s = d.schedule;
  CsvWriter w(path, "component,id,bus,t,quantity,value");
  auto series = [&](const char* comp, const std::string& id, int bus, const char* q, const std::vector<double>& v) {
    for (std::size_t t = 0; t < v.size(); ++t) {
      if (!std::isnan(v[t])) w.row(comp, id, bus, t, q, v[t]);
    }
  };
  for (const auto& u : pf.pv) series("pv", u.id, u.bus, "p_kw", s.pv_kw.at(u.id));
  for (const auto& u : pf.dg) series("dg", u.id, u.bus, "p_kw", s.dg_kw.at(u.id));
  auto storage = [&](const ders::StorageUnit& u, bool ev) {
    const auto& st = s.storage.at(u.id);
    series(kind_name(ev), u.id, u.bus, "p_ch_kw", st.p_ch_kw);
    series(kind_name(ev), u.id, u.bus, "p_dch_kw", st.p_dch_kw);
    series(kind_name(ev), u.id, u.bus, "x_ch", st.x_ch);
    series(kind_name(ev), u.id, u.bus, "x_dch", st.x_dch);
    series(kind_name(ev), u.id, u.bus, "soc_kwh", st.soc_kwh);
  };
  for (const auto& u : pf.bess) storage(u, false);
  for (const auto& u : pf.ev) storage(u, true);
  for (const auto& u : pf.flexload) series("flexload", u.id, u.bus, "p_kw", s.flex_kw.at(u.id));
  for (std::size_t k = 0; k < d.pcc_bus_ids.size(); ++k) {
    series("ug", std::to_string(d.pcc_bus_ids[k]), d.pcc_bus_ids[k], "p_kw", d.p_ug_kw[k]);
  }
  for (std::size_t b = 0; b < net.buses.size(); ++b) {
    series("bus", std::to_string(net.buses[b].id), net.buses[b].id, "v_sq_pu", d.state.v_sq[b]);
  }
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    const auto& ln = net.lines[l];
    const std::string id = std::to_string(ln.from) + "-" + std::to_string(ln.to);
    series("line", id, ln.from, "p_flow_pu", d.state.p_flow[l]);
    series("line", id, ln.from, "q_flow_pu", d.state.q_flow[l]);
    series("line", id, ln.from, "i_sq_pu", d.state.i_sq[l]);
  }
  w.row("market", "total", "", "", "cost_usd", d.total_cost);
  w.row("market", "total", "", "", "max_relaxation_slack", d.max_relaxation_slack);
  w.row("market", "total", "", "", "max_balance_residual", d.max_balance_residual);
}

stage1::DispatchResult read_dispatch_csv(const std::filesystem::path& path, const stage1::MarketInputs& in) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("missing stage-1 artifact " + path.string());
  const auto table = read_csv(path);
  const std::string where = path.string();
  const std::size_t c_comp = table.column("component"), c_id = table.column("id"), c_t = table.column("t"),
                    c_q = table.column("quantity"), c_v = table.column("value");
  const auto& net = in.network;
  stage1::DispatchResult d;
  std::map<std::string, std::size_t> line_index;
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    line_index[std::to_string(net.lines[l].from) + "-" + std::to_string(net.lines[l].to)] = l;
  }
  const std::size_t T = net.horizon, nb = net.buses.size(), nl = net.lines.size();
  auto grid_of = [&](std::size_t rows) { return stage1::Matrix(rows, std::vector<double>(T, std::nan(""))); };
  d.state.v_sq = grid_of(nb);
  d.state.p_flow = grid_of(nl);
  d.state.q_flow = grid_of(nl);
  d.state.i_sq = grid_of(nl);
  for (std::size_t b : net.pcc_indices()) {
    d.pcc_bus_ids.push_back(net.buses[b].id);
    d.p_ug_kw.emplace_back(T, std::nan(""));
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string at = where + " row " + std::to_string(r + 2);
    const std::string& comp = row[c_comp];
    const std::string& id = row[c_id];
    const std::string& q = row[c_q];
    const double v = to_double(row[c_v], at);
    if (comp == "market") {
      if (q == "cost_usd") d.total_cost = v;
      if (q == "max_relaxation_slack") d.max_relaxation_slack = v;
      if (q == "max_balance_residual") d.max_balance_residual = v;
      continue;
    }
    const double tv = to_double(row[c_t], at);
    if (!(tv >= 0.0) || tv != std::floor(tv)) throw ParseError(at + ": bad interval");
    const auto t = static_cast<std::size_t>(tv);
    if (comp == "pv") {
      put(d.schedule.pv_kw[id], t, v);
    } else if (comp == "dg") {
      put(d.schedule.dg_kw[id], t, v);
    } else if (comp == "flexload") {
      put(d.schedule.flex_kw[id], t, v);
    } else if (comp == "bess" || comp == "ev") {
      auto& st = d.schedule.storage[id];
      if (q == "p_ch_kw") put(st.p_ch_kw, t, v);
      else if (q == "p_dch_kw") put(st.p_dch_kw, t, v);
      else if (q == "x_ch") put(st.x_ch, t, v);
      else if (q == "x_dch") put(st.x_dch, t, v);
      else if (q == "soc_kwh") put(st.soc_kwh, t, v);
      else throw ParseError(at + ": unknown quantity '" + q + "'");
    } else if (comp == "ug") {
      const int bus = std::stoi(id);
      std::size_t k = 0;
      while (k < d.pcc_bus_ids.size() && d.pcc_bus_ids[k] != bus) ++k;
      if (k == d.pcc_bus_ids.size() || t >= T) throw ParseError(at + ": import at non-PCC bus " + id);
      d.p_ug_kw[k][t] = v;
    } else if (comp == "bus") {
      if (t >= T) throw ParseError(at + ": interval outside the horizon");
      d.state.v_sq[net.bus_index(std::stoi(id))][t] = v;
    } else if (comp == "line") {
      const auto it = line_index.find(id);
      if (it == line_index.end() || t >= T) throw ParseError(at + ": unknown line '" + id + "'");
      if (q == "p_flow_pu") d.state.p_flow[it->second][t] = v;
      else if (q == "q_flow_pu") d.state.q_flow[it->second][t] = v;
      else if (q == "i_sq_pu") d.state.i_sq[it->second][t] = v;
      else throw ParseError(at + ": unknown quantity '" + q + "'");
    } else {
      throw ParseError(at + ": unknown component '" + comp + "'");
    }
  }

  // Completeness: every unit the portfolio lists must have a full schedule.
  auto need = [&](const std::map<std::string, std::vector<double>>& m, const std::string& id) {
    const auto it = m.find(id);
    if (it == m.end() || it->second.size() != T) throw ParseError(where + ": incomplete schedule for '" + id + "'");
    for (double x : it->second) {
      if (std::isnan(x)) throw ParseError(where + ": incomplete schedule for '" + id + "'");
    }
  };
  for (const auto& u : in.portfolio.pv) need(d.schedule.pv_kw, u.id);
  for (const auto& u : in.portfolio.dg) need(d.schedule.dg_kw, u.id);
  for (const auto& u : in.portfolio.flexload) need(d.schedule.flex_kw, u.id);
  auto need_storage = [&](const std::string& id) {
    const auto it = d.schedule.storage.find(id);
    if (it == d.schedule.storage.end()) throw ParseError(where + ": no schedule for '" + id + "'");
    auto& st = it->second;
    for (auto* v : {&st.p_ch_kw, &st.p_dch_kw, &st.x_ch, &st.x_dch}) {
      if (v->size() != T) throw ParseError(where + ": incomplete schedule for '" + id + "'");
    }
    st.soc_kwh.resize(T, std::nan(""));
  };
  for (const auto& u : in.portfolio.bess) need_storage(u.id);
  for (const auto& u : in.portfolio.ev) need_storage(u.id);
  for (const auto* m : {&d.p_ug_kw, &d.state.v_sq, &d.state.p_flow, &d.state.q_flow, &d.state.i_sq}) {
    for (const auto& row : *m) {
      for (double x : row) {
        if (std::isnan(x)) throw ParseError(where + ": network state is incomplete");
      }
    }
  }
  return d;
}

void write_dlmp_csv(const std::filesystem::path& path, const grid::NetworkCase& net, const Stage1Outputs& s) {
  CsvWriter w(path, "bus,t,dlmp_usd_per_kwh,adjusted_usd_per_kwh,energy_burden,reactive_dual");
  for (std::size_t b = 0; b < net.buses.size(); ++b) {
    for (std::size_t t = 0; t < net.horizon; ++t) {
      w.row(net.buses[b].id, t, s.dlmp.price[b][t], s.adjusted.bus[b][t], s.burden.bus[b][t],
            s.dlmp.reactive_price[b][t]);
    }
  }
}

void write_actor_prices_csv(const std::filesystem::path& path, const stage1::MarketInputs& in, const Stage1Outputs& s) {
  const auto& net = in.network;
  CsvWriter w(path, "actor,bus,tier,t,baseline_kw,dlmp_usd_per_kwh,adjusted_usd_per_kwh,energy_burden");
  const auto& actors = in.actors.actors;
  for (std::size_t a = 0; a < actors.size(); ++a) {
    const std::size_t b = net.bus_index(actors[a].bus);
    for (std::size_t t = 0; t < net.horizon; ++t) {
      w.row(actors[a].id, actors[a].bus, stage1::to_string(actors[a].tier), t, in.actors.baseline_kw(net, a, t),
            s.dlmp.price[b][t], s.adjusted.actor[a][t], s.burden.actor[a][t]);
    }
  }
}

void write_flex_csv(const std::filesystem::path& path, const std::vector<Stage2Run>& runs) {
  CsvWriter w(path, "w,der,kind,bus,t,uf_kw,df_kw,uf_max_kw,df_max_kw");
  for (const auto& r : runs) {
    for (const auto& f : r.result.flex) {
      w.row(r.w, f.der, ders::to_string(f.kind), f.bus, f.t, f.uf_kw, f.df_kw, f.uf_max_kw, f.df_max_kw);
    }
  }
}

void write_curtailment_csv(const std::filesystem::path& path, const stage1::MarketInputs& in,
                           const std::vector<Stage2Run>& runs) {
  const auto& net = in.network;
  const auto& actors = in.actors.actors;
  CsvWriter w(path, "w,actor,bus,tier,t,baseline_kw,curtailed_kw,prorated");
  for (const auto& r : runs) {
    const auto& periods = r.result.periods;
    for (std::size_t a = 0; a < actors.size(); ++a) {
      for (std::size_t k = 0; k < periods.size(); ++k) {
        w.row(r.w, actors[a].id, actors[a].bus, stage1::to_string(actors[a].tier), periods[k],
              in.actors.baseline_kw(net, a, periods[k]), r.result.plan.actor_kw[a][k], r.fairness.prorated[a][k]);
      }
    }
  }
}

void write_fairness_csv(const std::filesystem::path& path, const grid::NetworkCase& net,
                        const std::vector<Stage2Run>& runs) {
  CsvWriter w(path,
              "w,t,max_prorated,min_prorated,spread,mean_abs_pairwise,total_curtailed_kw,total_fixed_kw,"
              "curtailment_pct,objective");
  for (const auto& r : runs) {
    const auto& res = r.result;
    for (std::size_t k = 0; k < r.fairness.rows.size(); ++k) {
      const auto& f = r.fairness.rows[k];
      double curtailed = 0.0;
      for (const auto& row : res.plan.actor_kw) curtailed += row[k];
      const double fixed = net.total_load_kw(f.t);
      w.row(r.w, f.t, f.max, f.min, f.spread, f.mean_abs_pairwise, curtailed, fixed,
            fixed > 0.0 ? 100.0 * curtailed / fixed : 0.0, "");
    }
    // Summary row over every affected interval.
    w.row(r.w, "all", "", "", r.fairness.max_spread, "", res.total_curtailed_kw, res.total_fixed_kw,
          100.0 * res.curtailment_fraction(), res.objective);
  }
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ParseError("CSV is missing column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifactError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path.string() + " is empty");
  t.header = split_line(line);
  std::size_t n = 1;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw ParseError(path.string() + " line " + std::to_string(n) + ": expected " +
                       std::to_string(t.header.size()) + " fields");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace equiflex::app
