#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "teleop/delay_channel.hpp"

using namespace teleop::delay;

namespace {

const std::vector<double> kTruthDelays{2.5, 2.0, 2.0, 1.5, 1.0, 1.5, 1.0, 1.0};
const std::vector<double> kTruthArrivals{2.5, 3.0, 4.0, 4.5, 5.0, 6.5, 7.0, 8.0};

std::vector<double> truth_departures() {
  std::vector<double> dts;
  for (int i = 0; i < 8; ++i) dts.push_back(i);
  return dts;
}

// Independent GEV CDF, written from the distribution definition.
double gev_cdf(double x, double xi, double mu, double sigma) {
  const double z = 1.0 + xi * (x - mu) / sigma;
  if (z <= 0.0) return xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::pow(z, -1.0 / xi));
}

}  // namespace

TEST_CASE("gev lower bound and quantile anchors") {
  const GevParams p{};
  CHECK(p.lower_bound_ms() == doctest::Approx(200.0 - 9.0 / 0.29).epsilon(1e-12));
  CHECK(p.lower_bound_ms() == doctest::Approx(168.97).epsilon(1e-4));
  // -ln U = 1 makes the shape term vanish
  CHECK(gev_quantile(p, std::exp(-1.0)) == doctest::Approx(200.0).epsilon(1e-12));
  const GevParams other{0.1, 50.0, 3.0};
  CHECK(gev_quantile(other, std::exp(-1.0)) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(gev_quantile(p, 1e-15) > p.lower_bound_ms());
  CHECK_THROWS(gev_quantile(p, 0.0));
  CHECK_THROWS(gev_quantile(p, 1.0));
  CHECK_THROWS(GevParams{0.29, 200.0, 0.0}.validate());
}

TEST_CASE("gev quantile inverts the analytic cdf") {
  const GevParams p{};
  for (double u = 0.01; u < 1.0; u += 0.049) {
    CHECK(gev_cdf(gev_quantile(p, u), p.shape, p.location_ms, p.scale_ms) ==
          doctest::Approx(u).epsilon(1e-10));
  }
}

TEST_CASE("gev empirical median matches the analytic median") {
  const GevParams p{};
  Rng rng(42);
  std::vector<double> xs(1'000'000);
  for (auto& x : xs) x = sample_gev(rng, p);
  std::nth_element(xs.begin(), xs.begin() + xs.size() / 2, xs.end());
  const double median = xs[xs.size() / 2];
  const double analytic = p.location_ms + p.scale_ms * (std::pow(std::log(2.0), -p.shape) - 1.0) / p.shape;
  CHECK(std::abs(median - analytic) < 0.5);
  CHECK(*std::min_element(xs.begin(), xs.end()) >= p.lower_bound_ms());
}

TEST_CASE("uniform draws stay in the open unit interval") {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform_open01(rng);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("fifo clamp examples") {
  CHECK(enforce_fifo(kTruthDelays, 1.0) == kTruthDelays);
  const std::vector<double> constant(6, 0.3);
  CHECK(enforce_fifo(constant, 0.1) == constant);
  const std::vector<double> overtaking{2.0, 0.5};
  const auto clamped = enforce_fifo(overtaking, 1.0);
  CHECK(clamped[0] == 2.0);
  CHECK(clamped[1] == doctest::Approx(1.0));
}

TEST_CASE("fifo clamp keeps arrivals monotone on random sequences") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double dt = 0.01 + 0.5 * uniform_open01(rng);
    std::vector<double> taus(1 + trial % 50);
    for (auto& t : taus) t = 3.0 * uniform_open01(rng);
    const auto out = enforce_fifo(taus, dt);
    FifoClamp stream(dt);
    for (std::size_t i = 0; i < taus.size(); ++i) {
      CHECK(out[i] >= taus[i]);
      CHECK(stream(taus[i]) == out[i]);
      if (i > 0) CHECK(i * dt + out[i] >= (i - 1) * dt + out[i - 1] - 1e-12);
    }
  }
}

TEST_CASE("td profile on the ground-truth packets") {
  const auto dts = truth_departures();
  const TdProfile profile = build_td_profile(dts, kTruthDelays);
  // ramp on [2.5, 3) from 2.5 towards 1 + 2
  CHECK(profile.evaluate(2.5) == doctest::Approx(2.5));
  CHECK(profile.evaluate(2.75) == doctest::Approx(2.75));
  CHECK(profile.evaluate(3.0 - 1e-9) == doctest::Approx(3.0).epsilon(1e-6));

  SignalHistory<int> history;
  for (int n = 0; n < 8; ++n) history.record(n, n + 1);
  for (int n = 0; n < 8; ++n) {
    CHECK(delayed_signal_eval(history, profile, kTruthArrivals[n], 0) == n + 1);
  }
  CHECK(delayed_signal_eval(history, profile, 4.5, 0) == 4);
}

TEST_CASE("single packet profile is constant") {
  const std::vector<double> dt{0.0}, tau{1.0};
  const TdProfile profile = build_td_profile(dt, tau);
  for (double t : {0.0, 0.5, 1.0}) CHECK(profile.evaluate(t) == doctest::Approx(1.0));
}

TEST_CASE("zero delay profile is the identity readout") {
  SignalHistory<double> h;
  for (int i = 0; i < 10; ++i) h.record(0.1 * i, i * 2.0);
  TdProfile zero;
  for (int i = 0; i < 10; ++i) CHECK(delayed_signal_eval(h, zero, 0.1 * i, -1.0) == i * 2.0);
  CHECK(delayed_signal_eval(h, zero, -1.0, -1.0) == -1.0);
}

TEST_CASE("operator and event queue agree on the ground truth within one sweep step") {
  const auto dts = truth_departures();
  const TdProfile profile = build_td_profile(dts, kTruthDelays);
  SignalHistory<int> history;
  EventChannel<int> channel;
  for (int n = 0; n < 8; ++n) {
    history.record(n, n + 1);
    channel.push(make_packet<int>(n, n + 1, n, kTruthDelays[n]));
  }
  std::vector<double> op_steps, queue_steps;
  int last_op = 0;
  FreshnessGate gate;
  int pulses = 0;
  std::optional<std::uint64_t> latest;
  for (int k = 0; k <= 9000; ++k) {
    const double t = k * 1e-3;
    const int v = delayed_signal_eval(history, profile, t, 0);
    if (v != last_op) {
      op_steps.push_back(t);
      last_op = v;
    }
    for (const auto& p : channel.poll(t + 1e-9)) {
      queue_steps.push_back(t);
      latest = p.seq;
    }
    if (gate.update(latest)) ++pulses;
  }
  CHECK(pulses == 8);
  REQUIRE(op_steps.size() == 8);
  REQUIRE(queue_steps.size() == 8);
  for (int n = 0; n < 8; ++n) {
    CHECK(std::abs(op_steps[n] - kTruthArrivals[n]) <= 1e-3 + 1e-9);
    CHECK(queue_steps[n] == doctest::Approx(kTruthArrivals[n]).epsilon(1e-12));
  }
}

TEST_CASE("event channel delivery") {
  EventChannel<int> ch;
  CHECK(ch.poll(1.0).empty());
  for (int n = 0; n < 8; ++n) ch.push(make_packet<int>(n, n, n, kTruthDelays[n]));
  const auto got = ch.poll(5.0);
  REQUIRE(got.size() == 5);
  for (int n = 0; n < 5; ++n) CHECK(got[n].seq == static_cast<std::uint64_t>(n));
  CHECK(ch.in_flight() == 3);
  CHECK_THROWS(ch.poll(4.0));
  CHECK_THROWS(make_packet<int>(0, 0, 0.0, -0.1));
}

TEST_CASE("random fifo packets arrive in sequence order") {
  Rng rng(11);
  const GevParams p{};
  const double dt = 1.0 / 30.0;
  std::vector<double> taus(10000);
  for (auto& t : taus) t = sample_gev(rng, p) * 1e-3;
  taus = enforce_fifo(taus, dt);
  EventChannel<int> ch;
  std::vector<std::pair<double, std::uint64_t>> oracle;
  for (std::size_t n = 0; n < taus.size(); ++n) {
    auto pk = make_packet<int>(n, 0, n * dt, taus[n]);
    oracle.emplace_back(pk.arrival, n);
    ch.push(pk);
  }
  // clamped packets tie on arrival up to round-off; ties go to the lower sequence
  std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
    if (std::abs(a.first - b.first) > 1e-9) return a.first < b.first;
    return a.second < b.second;
  });
  std::vector<std::uint64_t> delivered;
  for (double t = 0.0; t < taus.size() * dt + 10.0; t += 0.01) {
    for (const auto& pk : ch.poll(t)) delivered.push_back(pk.seq);
  }
  REQUIRE(delivered.size() == oracle.size());
  for (std::size_t i = 0; i < delivered.size(); ++i) {
    CHECK(delivered[i] == i);
    CHECK(oracle[i].second == i);
  }
}

TEST_CASE("freshness gate") {
  CHECK(freshness_gate(3, 4));
  CHECK_FALSE(freshness_gate(4, 4));
  CHECK_FALSE(freshness_gate(4, std::nullopt));
  CHECK(freshness_gate(std::nullopt, 0));
  FreshnessGate g;
  CHECK(g.update(1));
  CHECK_FALSE(g.update(1));
  CHECK(g.update(5));
}

TEST_CASE("sampler is deterministic per seed and respects the bound") {
  ChannelConfig cfg;
  cfg.rng_seed = 99;
  DownlinkDelaySampler a(cfg), b(cfg);
  cfg.rng_seed = 100;
  DownlinkDelaySampler c(cfg);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.next_delay_s();
    CHECK(x == b.next_delay_s());
    CHECK(x >= cfg.downlink.lower_bound_ms() * 1e-3);
    differs = differs || x != c.next_delay_s();
  }
  CHECK(differs);
}

TEST_CASE("signal history rejects time travel") {
  SignalHistory<int> h;
  h.record(1.0, 1);
  CHECK_THROWS(h.record(0.5, 2));
}
