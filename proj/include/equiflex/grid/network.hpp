#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace equiflex::grid {

struct PerUnitBase {
  double power_mva = 1.0;
  double voltage_kv = 12.66;

  [[nodiscard]] double z_base_ohm() const { return voltage_kv * voltage_kv / power_mva; }
  [[nodiscard]] double power_kw() const { return 1000.0 * power_mva; }
};

// Throw ValidationError unless both base quantities are positive and finite.
void check_base(const PerUnitBase& base);

double to_per_unit_power(double kw, const PerUnitBase& base);
double from_per_unit_power(double pu, const PerUnitBase& base);
double to_per_unit_impedance(double ohm, const PerUnitBase& base);
double from_per_unit_impedance(double pu, const PerUnitBase& base);

enum class BusKind { pcc, load };

/// Electrical quantities are kept in the SI units of the case file so that a
/// save/load cycle is lossless; per-unit values are derived on demand.
struct BusSpec {
  int id = 0;
  BusKind kind = BusKind::load;
  double v_min = 0.9;  // p.u.
  double v_max = 1.05;
  std::vector<double> fixed_load_kw;  // one value per interval
  double power_factor = 0.95;         // lagging, used to derive reactive load
  double min_energy_kwh = 0.0;        // daily floor over fixed plus flexible load
};

struct LineSpec {
  int from = 0;
  int to = 0;
  double r_ohm = 0.0;
  double x_ohm = 0.0;
  double s_max_kva = 0.0;
};

struct NetworkCase {
  std::string name;
  PerUnitBase base;
  std::size_t horizon = 24;
  double dt = 1.0;  // hours
  std::vector<BusSpec> buses;
  std::vector<LineSpec> lines;
  // Substation import limit per PCC bus, kW; infinite when absent.
  double pcc_import_max_kw = std::numeric_limits<double>::infinity();

  /// Position of a bus id in `buses`; throws ValidationError when absent.
  [[nodiscard]] std::size_t bus_index(int id) const;
  [[nodiscard]] std::vector<std::size_t> pcc_indices() const;

  // Per-unit views.
  [[nodiscard]] double load_pu(std::size_t bus, std::size_t t) const;
  [[nodiscard]] double reactive_load_pu(std::size_t bus, std::size_t t) const;
  [[nodiscard]] double r_pu(std::size_t line) const;
  [[nodiscard]] double x_pu(std::size_t line) const;
  [[nodiscard]] double s_max_pu(std::size_t line) const;

  [[nodiscard]] double total_load_kw(std::size_t t) const;
  [[nodiscard]] double peak_load_kw() const;
};

/// Reactive power (same unit as p) drawn by a load at the given lagging power factor.
double reactive_from_pf(double p, double power_factor);

struct TopologyReport {
  bool connected = false;
  bool radial = false;
  std::vector<std::string> violations;
  std::size_t root = 0;                 // bus index of the traversal root (first PCC)
  std::vector<long> parent;             // bus index, -1 at the root or when unreached
  std::vector<long> parent_line;        // line index towards the parent, -1 at the root
  std::vector<std::vector<std::size_t>> children;  // bus indices
  std::vector<std::size_t> order;       // breadth-first, parents before children
  std::vector<std::size_t> depth;       // hops from the root
};

/// Inspect connectivity and radiality and orient lines away from the root.
/// Never throws; problems are listed in `violations`.
TopologyReport validate_topology(const NetworkCase& net);

/// Check every invariant of a case and throw ValidationError naming the first
/// offending element. Returns the topology for convenience.
TopologyReport validate_case(const NetworkCase& net);

NetworkCase load_case(const std::filesystem::path& path);
NetworkCase parse_case(const std::string& json_text);
void save_case(const NetworkCase& net, const std::filesystem::path& path);
std::string dump_case(const NetworkCase& net);

/// Normalized 24-point daily load shape used by the built-in feeder (peak 1.0
/// at hour 19).
const std::vector<double>& default_load_shape();

/// The buses listed (PCC included) and the lines between them. Throws
/// ValidationError when the result is not a valid case.
NetworkCase extract_subcase(const NetworkCase& net, const std::vector<int>& bus_ids);

/// 33-bus radial feeder (Baran and Wu, 12.66 kV) with bus 1 as PCC. Bus loads
/// follow the published table scaled by default_load_shape.
NetworkCase builtin_ieee33();

}  // namespace equiflex::grid
