#pragma once

// Parameter set used when synthesizing DER portfolios, incomes and prices.
// Bump kDefaultsVersion whenever a value changes; it is written into every
// scenario.json so old runs stay attributable.

#include <array>

namespace equiflex::scenario::defaults {

inline constexpr int kDefaultsVersion = 1;

// Penetration.
inline constexpr double kDgBessFraction = 0.30;  // of peak load, power
inline constexpr double kFlexibleLoadFraction = 0.15;
inline constexpr double kEvActorFraction = 0.10;
inline constexpr double kDgShare = 0.60;  // DG part of the DG+BESS power
inline constexpr int kDgUnits = 3;
inline constexpr int kBessUnits = 3;
inline constexpr int kPvUnits = 4;
inline constexpr double kPvFraction = 0.15;  // of peak load, kVA

// Substation import limit as a fraction of the peak load. The feeder cannot
// serve its peak from upstream alone; local DER covers the gap.
inline constexpr double kSubstationFraction = 0.78;

// Units are placed on the lateral ends of the feeder, where voltage and
// thermal limits bind first.
inline constexpr std::array<int, 20> kDerCandidateBuses = {8,  9,  10, 11, 12, 13, 14, 15, 16, 17,
                                                           18, 25, 28, 29, 30, 31, 32, 33, 21, 22};

// Conventional DG: a dispatchable peaker priced above the upstream peak so
// its headroom is held for real-time use.
inline constexpr double kDgCost = 0.22;         // $/kWh
inline constexpr double kDgRampPerHour = 1.0;   // fraction of p_max
inline constexpr double kDgMinFraction = 0.0;

// BESS.
inline constexpr double kBessHours = 4.0;
inline constexpr double kBessEfficiency = 0.95;
inline constexpr double kBessSocMin = 0.10;  // of capacity
inline constexpr double kBessSocMax = 0.90;
inline constexpr double kBessSocInit = 0.50;
inline constexpr double kBessCost = 0.01;  // $/kWh throughput

// EV: mid-size battery on a 7.2 kW level-2 charger, plugged in at home in the
// evening and leaving at 23:00 with enough charge for the next trip.
inline constexpr double kEvCapacityKwh = 60.0;
inline constexpr double kEvChargerKw = 7.2;
inline constexpr double kEvEfficiency = 0.92;
inline constexpr std::array<int, 3> kEvArrivals = {16, 17, 18};
inline constexpr int kEvDeparture = 23;
inline constexpr double kEvSocInitKwh = 20.0;
inline constexpr double kEvTripKwh = 40.0;
inline constexpr double kEvSocMinKwh = 6.0;
inline constexpr double kEvSocMaxKwh = 57.0;
inline constexpr double kEvCost = 0.01;

// Flexible load: symmetric deviation band, daily energy kept.
inline constexpr double kFlexCost = 0.02;

// PV.
inline constexpr double kPvPowerFactorLimit = 1.0;
// Clear-sky shape per hour (fraction of capacity).
inline constexpr std::array<double, 24> kPvShape = {0.00, 0.00, 0.00, 0.00, 0.00, 0.02, 0.10, 0.25,
                                                    0.45, 0.62, 0.75, 0.82, 0.85, 0.80, 0.70, 0.55,
                                                    0.35, 0.15, 0.03, 0.00, 0.00, 0.00, 0.00, 0.00};

// Upstream time-of-use price, $/kWh.
inline constexpr std::array<double, 24> kUpstreamPrice = {0.06, 0.06, 0.06, 0.06, 0.06, 0.06, 0.08, 0.10,
                                                          0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10, 0.12,
                                                          0.16, 0.18, 0.18, 0.18, 0.16, 0.12, 0.08, 0.06};

// Daily income per kW of average household consumption, by tier.
inline constexpr double kIncomeLow = 29.0;
inline constexpr double kIncomeMedium = 70.0;
inline constexpr double kIncomeHigh = 200.0;

// Disturbance.
inline constexpr double kDisturbanceMagnitude = 0.25;
inline constexpr int kDisturbanceInterval = 18;  // the system peak

}  // namespace equiflex::scenario::defaults
