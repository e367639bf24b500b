#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <string>

#include "magnav/results.hpp"

namespace magnav::testing {

inline std::string scenario_path(const std::string& name) {
  return std::string(MAGNAV_SCENARIO_DIR) + "/" + name + ".cfg";
}

inline const Scenario& shipped(const std::string& name) {
  static std::map<std::string, Scenario> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, io::load_scenario(scenario_path(name))).first;
  return it->second;
}

/// Plans a shipped scenario once per process.
inline const PlanResult& shipped_plan(const std::string& name) {
  static std::map<std::string, PlanResult> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, plan(shipped(name))).first;
  return it->second;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

template <class A, class B>
double rel_err(const A& a, const B& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-300});
}

/// Random IPM/EPM offset with |p| in [lo, hi] m.
inline Vec3 random_offset(std::mt19937_64& rng, double lo, double hi) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> r(lo, hi);
  Vec3 d(n(rng), n(rng), n(rng));
  return d.normalized() * r(rng);
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(rng), n(rng), n(rng)).normalized();
}

}  // namespace magnav::testing
