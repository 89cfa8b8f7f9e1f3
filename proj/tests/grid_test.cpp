#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "equiflex/error.hpp"
#include "equiflex/grid/network.hpp"

namespace equiflex::grid {
namespace {

NetworkCase two_bus() {
  NetworkCase n;
  n.horizon = 1;
  n.base = {1.0, 12.66};
  BusSpec a;
  a.id = 1;
  a.kind = BusKind::pcc;
  a.v_min = a.v_max = 1.0;
  a.fixed_load_kw = {0.0};
  BusSpec b;
  b.id = 2;
  b.fixed_load_kw = {100.0};
  b.min_energy_kwh = 100.0;
  n.buses = {a, b};
  // r = 0.01 p.u.
  n.lines = {{1, 2, 0.01 * n.base.z_base_ohm(), 0.02 * n.base.z_base_ohm(), 500.0}};
  return n;
}

TEST(PerUnit, Conversions) {
  const PerUnitBase unit{1.0, 1.0};
  EXPECT_DOUBLE_EQ(to_per_unit_power(1000.0, unit), 1.0);  // 1 MW on 1 MVA
  const PerUnitBase feeder{1.0, 12.66};
  EXPECT_DOUBLE_EQ(to_per_unit_impedance(0.0922, feeder), 0.0922 / (12.66 * 12.66));
  for (double v : {0.0922, 3.7, 1e-4, 1234.5}) {
    EXPECT_NEAR(from_per_unit_impedance(to_per_unit_impedance(v, feeder), feeder), v, 1e-12 * v);
    EXPECT_NEAR(from_per_unit_power(to_per_unit_power(v, feeder), feeder), v, 1e-12 * v);
  }
  EXPECT_THROW(to_per_unit_power(1.0, PerUnitBase{0.0, 12.66}), ValidationError);
  EXPECT_THROW(to_per_unit_impedance(1.0, PerUnitBase{1.0, -1.0}), ValidationError);
}

TEST(Ieee33, PublishedShape) {
  const auto net = builtin_ieee33();
  EXPECT_EQ(net.buses.size(), 33u);
  EXPECT_EQ(net.lines.size(), 32u);
  EXPECT_EQ(net.pcc_indices().size(), 1u);
  // Peak hour carries the nominal table: 3715 kW.
  EXPECT_NEAR(net.peak_load_kw(), 3715.0, 1e-9);
  double q = 0.0;
  for (std::size_t b = 0; b < net.buses.size(); ++b) q += net.reactive_load_pu(b, 18) * 1000.0;
  EXPECT_NEAR(q, 2300.0, 1e-9);
  const auto topo = validate_topology(net);
  EXPECT_TRUE(topo.violations.empty());
  EXPECT_TRUE(topo.radial);
  EXPECT_TRUE(topo.connected);
  EXPECT_EQ(topo.depth[net.bus_index(18)], 17u);
  EXPECT_EQ(topo.order.size(), 33u);
  std::vector<bool> visited(33, false);
  for (std::size_t b : topo.order) {
    if (topo.parent[b] >= 0) EXPECT_TRUE(visited[std::size_t(topo.parent[b])]);
    visited[b] = true;
  }
}

TEST(Topology, TwoBusParent) {
  const auto n = two_bus();
  const auto topo = validate_topology(n);
  EXPECT_TRUE(topo.radial);
  EXPECT_EQ(topo.parent[n.bus_index(2)], long(n.bus_index(1)));
}

TEST(Topology, IsolatedBusIsDisconnected) {
  auto n = two_bus();
  BusSpec c;
  c.id = 3;
  c.fixed_load_kw = {0.0};
  n.buses.push_back(c);
  const auto topo = validate_topology(n);
  EXPECT_FALSE(topo.connected);
  EXPECT_FALSE(topo.radial);
}

TEST(Topology, CycleIsNamed) {
  auto n = builtin_ieee33();
  n.lines.push_back({8, 21, 2.0, 2.0, 100.0});  // classic tie switch
  const auto topo = validate_topology(n);
  EXPECT_FALSE(topo.radial);
  ASSERT_FALSE(topo.violations.empty());
  EXPECT_NE(topo.violations.front().find("cycle"), std::string::npos);
  EXPECT_NE(topo.violations.front().find("21"), std::string::npos);
  try {
    parse_case(dump_case(n));
    FAIL() << "cycle accepted";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("cycle through buses"), std::string::npos);
  }
}

TEST(CaseFile, RoundTripIsBitIdentical) {
  const auto n = two_bus();
  const auto path = std::filesystem::temp_directory_path() / "equiflex_two_bus.json";
  save_case(n, path);
  const auto m = load_case(path);
  EXPECT_EQ(dump_case(m), dump_case(n));
  EXPECT_EQ(m.lines[0].r_ohm, n.lines[0].r_ohm);
  EXPECT_EQ(m.r_pu(0), n.r_pu(0));
  EXPECT_NEAR(m.r_pu(0), 0.01, 1e-15);
  std::filesystem::remove(path);

  const auto big = builtin_ieee33();
  EXPECT_EQ(dump_case(parse_case(dump_case(big))), dump_case(big));
}

TEST(CaseFile, ShippedExampleMatchesBuiltin) {
  const auto path = std::filesystem::path(EQUIFLEX_SOURCE_DIR) / "data" / "ieee33.json";
  EXPECT_EQ(dump_case(load_case(path)), dump_case(builtin_ieee33()));
}

TEST(CaseFile, Errors) {
  EXPECT_THROW(parse_case("{ not json"), ParseError);
  EXPECT_THROW(parse_case(R"({"base": {"power_mva": 1}})"), ParseError);
  auto n = two_bus();
  n.buses[1].v_max = 0.8;
  try {
    parse_case(dump_case(n));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("bus 2"), std::string::npos);
  }
  n = two_bus();
  n.buses[0].kind = BusKind::load;
  n.buses[0].v_max = 1.05;
  EXPECT_THROW(validate_case(n), ValidationError);
}

}  // namespace
}  // namespace equiflex::grid
