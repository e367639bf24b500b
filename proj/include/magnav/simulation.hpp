#pragma once

// Closed- and open-loop execution of a plan against the simulated plant,
// and Monte Carlo studies over noise seeds.

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "magnav/ekf.hpp"
#include "magnav/ilqr.hpp"
#include "magnav/rng.hpp"
#include "magnav/scenario.hpp"

namespace magnav::sim {

enum class LoopMode { kOpen, kClosed };

inline std::string to_string(LoopMode m) {
  return m == LoopMode::kOpen ? "open" : "closed";
}

inline LoopMode parse_mode(const std::string& s) {
  if (s == "open") return LoopMode::kOpen;
  if (s == "closed") return LoopMode::kClosed;
  throw ContractError("loop mode must be 'open' or 'closed', got '" + s + "'");
}

struct RunLog {
  LoopMode mode = LoopMode::kClosed;
  std::uint64_t seed = 0;
  double dt = 0.0;
  std::vector<StateVec> true_states;      // up to N+1
  std::vector<ekf::Vec6> estimates;       // filtered estimate used at step k
  std::vector<Vec3> measurements;         // NaN where no sample was taken
  std::vector<Vec3> measurement_noise;    // draws, NaN where no sample
  std::vector<ControlVec> applied_inputs; // N
  std::optional<int> failure_step;
  std::string failure;
  int rejected_measurements = 0;
  int ekf_fallbacks = 0;

  bool ok() const { return !failure_step.has_value(); }
};

struct RunOptions {
  // Added to the true initial IPM position (not seen by the filter prior).
  Vec3 initial_offset = Vec3::Zero();
  // Floor on the filter's measurement variance so noiseless runs keep a
  // well-posed update.
  double min_filter_variance = 1e-12;
  double ekf_accel_variance_floor = 1e-6;
};

namespace detail {

inline RunLog run(const ilqr::Trajectory& plan, const ilqr::GainSchedule* gains,
                  const NoiseModel& noise, const Scenario& sc, LoopMode mode,
                  std::uint64_t run_seed, const RunOptions& opt) {
  const int n = plan.horizon();
  if (mode == LoopMode::kClosed && (!gains || gains->horizon() != n)) {
    throw ContractError("closed_loop_run: plan and gains must share a horizon");
  }
  if (static_cast<int>(plan.states.size()) != n + 1) {
    throw ContractError("run: plan needs N+1 states");
  }
  if (noise.measurement_decimation < 1) {
    throw ContractError("noise.measurement_decimation must be >= 1");
  }
  const double dt = plan.dt > 0.0 ? plan.dt : sc.dt;
  const double meas_var = noise.position_variance_si();
  const double meas_sigma = std::sqrt(std::max(meas_var, 0.0));
  const double proc_sigma = std::sqrt(std::max(noise.process_accel_variance, 0.0));

  auto meas_rng = rng::make_engine(run_seed, rng::Stream::kMeasurement);
  auto proc_rng = rng::make_engine(run_seed, rng::Stream::kProcess);
  std::normal_distribution<double> normal(0.0, 1.0);

  RunLog log;
  log.mode = mode;
  log.seed = run_seed;
  log.dt = dt;
  log.true_states.reserve(n + 1);

  StateVec x = plan.states[0];
  x.head<3>() += opt.initial_offset;
  log.true_states.push_back(x);

  ekf::EkfState est;
  est.mean = plan.states[0].head<6>();
  est.covariance.setZero();
  est.covariance.diagonal().head<3>().setConstant(
      std::max(meas_var, opt.min_filter_variance));
  est.covariance.diagonal().tail<3>().setConstant(opt.min_filter_variance);
  const ekf::EkfConfig cfg{
      std::max(noise.process_accel_variance, opt.ekf_accel_variance_floor),
      noise.ekf_model};
  const double filter_var = std::max(meas_var, opt.min_filter_variance);
  const auto& cs = sc.constraints;
  const Vec3 nan3 = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());

  for (int k = 0; k < n; ++k) {
    // Measurement noise is drawn every step in both modes so runs sharing a
    // seed see the same noise sequence.
    Vec3 nz;
    for (int i = 0; i < 3; ++i) nz[i] = meas_sigma * normal(meas_rng);
    if (k % noise.measurement_decimation == 0) {
      const Vec3 z = x.head<3>() + nz;
      const auto upd = ekf::ekf_update(est, z, filter_var);
      est = upd.state;
      log.rejected_measurements += upd.rejected ? 1 : 0;
      log.measurements.push_back(z);
      log.measurement_noise.push_back(nz);
    } else {
      log.measurements.push_back(nan3);
      log.measurement_noise.push_back(nan3);
    }
    log.estimates.push_back(est.mean);

    const JointVec q = x.segment<kNumJoints>(plant::kJoints);
    ControlVec u = plan.inputs[k];
    if (mode == LoopMode::kClosed) {
      StateVec xhat;
      xhat << est.mean, q;
      u += gains->K[k] * (xhat - plan.states[k]);
    }
    u = u.cwiseMax(cs.u_min).cwiseMin(cs.u_max);
    log.applied_inputs.push_back(u);

    Vec3 accel;
    for (int i = 0; i < 3; ++i) accel[i] = proc_sigma * normal(proc_rng);
    try {
      x = plant::step(x, u, dt, sc.model);
    } catch (const DomainError& e) {
      log.failure_step = k;
      log.failure = e.what();
      return log;
    }
    if (proc_sigma > 0.0) {
      x.segment<3>(plant::kPos) += 0.5 * dt * dt * accel;
      x.segment<3>(plant::kVel) += dt * accel;
    }
    log.true_states.push_back(x);

    const auto pred = ekf::ekf_predict(est, q, u, dt, sc.model, cfg);
    est = pred.state;
    log.ekf_fallbacks += pred.fallback ? 1 : 0;
  }
  return log;
}

}  // namespace detail

/// ū_k = u*_k + K_k(x̂_k − x*_k), x̂ from the EKF estimate and encoder q.
inline RunLog closed_loop_run(const ilqr::Trajectory& plan,
                              const ilqr::GainSchedule& gains,
                              const NoiseModel& noise, const Scenario& sc,
                              const RunOptions& opt = {}) {
  return detail::run(plan, &gains, noise, sc, LoopMode::kClosed, noise.seed, opt);
}

/// Replays u* with no feedback; the filter still runs for logging.
inline RunLog open_loop_run(const ilqr::Trajectory& plan,
                            const NoiseModel& noise, const Scenario& sc,
                            const RunOptions& opt = {}) {
  return detail::run(plan, nullptr, noise, sc, LoopMode::kOpen, noise.seed, opt);
}

// --- Monte Carlo --------------------------------------------------------------

struct AxisStats {
  Vec3 mean = Vec3::Zero();
  Vec3 std = Vec3::Zero();
};

/// Sample mean and (n−1) standard deviation; std is 0 for a single sample.
inline AxisStats axis_stats(const std::vector<Vec3>& xs) {
  AxisStats s;
  if (xs.empty()) return s;
  for (const auto& x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    Vec3 acc = Vec3::Zero();
    for (const auto& x : xs) acc += (x - s.mean).cwiseAbs2();
    s.std = (acc / static_cast<double>(xs.size() - 1)).cwiseSqrt();
  }
  return s;
}

struct StudySummary {
  LoopMode mode = LoopMode::kClosed;
  double position_variance = 0.0;  // in the noise model's variance_unit
  int runs = 0;
  std::vector<int> failed_runs;
  std::vector<std::string> failures;
  AxisStats terminal_position;  // m
  AxisStats terminal_velocity;  // m/s
  // |p_N − p*_N| per successful run, and its mean.
  std::vector<double> terminal_errors;
  double mean_terminal_error = 0.0;
  double mean_goal_error = 0.0;
  // Per-timestep position band over successful runs.
  std::vector<Vec3> band_mean, band_std;
  std::vector<RunLog> logs;  // filled when Study::keep_logs
};

struct Study {
  int runs = 100;
  std::vector<double> position_variances{1e-2};
  std::vector<LoopMode> modes{LoopMode::kOpen, LoopMode::kClosed};
  std::uint64_t master_seed = 1;
  RunOptions run_options;
  bool keep_logs = false;
};

/// Every (variance, mode) cell uses the same per-run seeds, so open- and
/// closed-loop runs with equal index share their noise.
inline std::vector<StudySummary> monte_carlo(const Study& study,
                                             const ilqr::Trajectory& plan,
                                             const ilqr::GainSchedule& gains,
                                             const Scenario& sc) {
  if (study.runs < 1) throw ContractError("monte_carlo: runs must be >= 1");
  std::vector<StudySummary> out;
  const int n = plan.horizon();
  for (const double var : study.position_variances) {
    for (const LoopMode mode : study.modes) {
      StudySummary s;
      s.mode = mode;
      s.position_variance = var;
      s.runs = study.runs;
      NoiseModel noise = sc.noise;
      noise.position_variance = var;
      std::vector<Vec3> pos, vel;
      std::vector<std::vector<Vec3>> per_step(n + 1);
      for (int r = 0; r < study.runs; ++r) {
        const std::uint64_t seed =
            rng::stream_seed(study.master_seed, static_cast<std::uint64_t>(r));
        const RunLog log = detail::run(
            plan, mode == LoopMode::kClosed ? &gains : nullptr, noise, sc,
            mode, seed, study.run_options);
        if (study.keep_logs) s.logs.push_back(log);
        if (!log.ok()) {
          s.failed_runs.push_back(r);
          s.failures.push_back(log.failure);
          continue;
        }
        const StateVec& xn = log.true_states.back();
        pos.push_back(xn.segment<3>(plant::kPos));
        vel.push_back(xn.segment<3>(plant::kVel));
        s.terminal_errors.push_back(
            (xn.segment<3>(plant::kPos) - plan.states.back().head<3>()).norm());
        s.mean_goal_error += (xn.segment<3>(plant::kPos) - sc.goal_position).norm();
        for (int k = 0; k <= n; ++k) {
          per_step[k].push_back(log.true_states[k].segment<3>(plant::kPos));
        }
      }
      s.terminal_position = axis_stats(pos);
      s.terminal_velocity = axis_stats(vel);
      if (!s.terminal_errors.empty()) {
        for (double e : s.terminal_errors) s.mean_terminal_error += e;
        s.mean_terminal_error /= static_cast<double>(s.terminal_errors.size());
        s.mean_goal_error /= static_cast<double>(s.terminal_errors.size());
      }
      s.band_mean.resize(n + 1);
      s.band_std.resize(n + 1);
      for (int k = 0; k <= n; ++k) {
        const auto st = axis_stats(per_step[k]);
        s.band_mean[k] = st.mean;
        s.band_std[k] = st.std;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace magnav::sim
