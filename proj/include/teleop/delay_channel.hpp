#pragma once

// Uplink/downlink channel models: GEV downlink delay sampling, FIFO clamping,
// the saw-tooth t_d(t) variable-delay operator and an event-queue channel.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace teleop::delay {

using Rng = std::mt19937_64;

/// Generalized extreme value distribution. Location and scale in milliseconds.
struct GevParams {
  double shape = 0.29;
  double location_ms = 200.0;
  double scale_ms = 9.0;

  void validate() const;
  /// Infimum of the support for shape > 0, -inf otherwise.
  double lower_bound_ms() const;
};

/// Uniform draw on the open interval (0, 1) from the top 53 bits of the engine.
double uniform_open01(Rng& rng);

/// Inverse CDF. `u` must lie in (0, 1).
double gev_quantile(const GevParams& params, double u);

/// Draws one downlink delay [ms] by inverse-transform sampling.
double sample_gev(Rng& rng, const GevParams& params);

template <typename T>
struct Packet {
  std::uint64_t seq = 0;
  T payload{};
  double departure = 0.0;  // DT_n [s]
  double delay = 0.0;      // tau_2,n [s]
  double arrival = 0.0;    // AT_n = DT_n + tau_2,n [s]
};

template <typename T>
Packet<T> make_packet(std::uint64_t seq, T payload, double departure, double delay) {
  if (!(delay >= 0.0)) throw std::invalid_argument("packet delay must be non-negative");
  return Packet<T>{seq, std::move(payload), departure, delay, departure + delay};
}

/// Forward clamp tau_n <- max(tau_n, tau_{n-1} - dt) so that arrivals of
/// packets sent every `dt` seconds never overtake each other.
std::vector<double> enforce_fifo(std::span<const double> delays, double dt);

/// Streaming form of enforce_fifo for packets generated one at a time.
class FifoClamp {
 public:
  explicit FifoClamp(double dt);
  double operator()(double delay);

 private:
  double dt_;
  std::optional<double> previous_;
};

struct ChannelConfig {
  double uplink_delay_s = 0.060;
  GevParams downlink{};
  double sample_interval_s = 1.0 / 30.0;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

/// GEV delay source with FIFO clamping, reporting seconds.
class DownlinkDelaySampler {
 public:
  explicit DownlinkDelaySampler(const ChannelConfig& config);
  double next_delay_s();

 private:
  GevParams params_;
  Rng rng_;
  FifoClamp clamp_;
};

/// One linear piece of the t_d(t) profile on [t0, t1).
struct TdSegment {
  double t0 = 0.0;
  double t1 = 0.0;
  double d0 = 0.0;
  double d1 = 0.0;
};

/// Piecewise-linear saw-tooth delay input. Left-closed segments; after the
/// last segment the profile holds `tail_delay`.
struct TdProfile {
  std::vector<TdSegment> segments;
  double tail_delay = 0.0;

  double evaluate(double t) const;
};

/// Builds the saw-tooth profile from FIFO-ordered departures/delays with a
/// uniform inter-departure interval. Throws on non-FIFO input.
TdProfile build_td_profile(std::span<const double> departures, std::span<const double> delays);

template <typename T>
TdProfile build_td_profile(std::span<const Packet<T>> packets) {
  std::vector<double> dts, taus;
  dts.reserve(packets.size());
  taus.reserve(packets.size());
  for (const auto& p : packets) {
    dts.push_back(p.departure);
    taus.push_back(p.delay);
  }
  return build_td_profile(dts, taus);
}

/// Time-indexed record of a signal, read back with zero-order hold.
template <typename T>
class SignalHistory {
 public:
  void record(double t, T value) {
    if (!times_.empty() && t < times_.back()) {
      throw std::invalid_argument("signal history must be recorded in time order");
    }
    times_.push_back(t);
    values_.push_back(std::move(value));
  }

  /// Latest sample at or before `t`; `initial` when `t` precedes the record.
  /// A 1 ns tolerance absorbs round-off in t - t_d(t).
  const T& value_at(double t, const T& initial) const {
    constexpr double eps = 1e-9;
    auto it = std::upper_bound(times_.begin(), times_.end(), t + eps);
    if (it == times_.begin()) return initial;
    return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  bool empty() const { return times_.empty(); }

 private:
  std::vector<double> times_;
  std::vector<T> values_;
};

/// Variable time delay operator: u(t - t_d(t)).
template <typename T>
const T& delayed_signal_eval(const SignalHistory<T>& history, const TdProfile& profile,
                             double t, const T& initial) {
  return history.value_at(t - profile.evaluate(t), initial);
}

/// Discrete-event channel delivering packets once their arrival time passes.
template <typename T>
class EventChannel {
 public:
  void push(Packet<T> packet) { queue_.push(std::move(packet)); }

  /// Packets with arrival <= t not yet delivered, in sequence order.
  std::vector<Packet<T>> poll(double t) {
    if (last_poll_ && t < *last_poll_) {
      throw std::invalid_argument("channel poll time regressed");
    }
    last_poll_ = t;
    std::vector<Packet<T>> out;
    while (!queue_.empty() && queue_.top().arrival <= t) {
      out.push_back(queue_.top());
      queue_.pop();
    }
    std::sort(out.begin(), out.end(),
              [](const Packet<T>& a, const Packet<T>& b) { return a.seq < b.seq; });
    return out;
  }

  std::size_t in_flight() const { return queue_.size(); }

 private:
  struct Later {
    bool operator()(const Packet<T>& a, const Packet<T>& b) const {
      if (a.arrival != b.arrival) return a.arrival > b.arrival;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<Packet<T>, std::vector<Packet<T>>, Later> queue_;
  std::optional<double> last_poll_;
};

/// True iff the sequence number advanced since the previous delivery.
inline bool freshness_gate(std::optional<std::uint64_t> previous,
                           std::optional<std::uint64_t> current) {
  if (!current) return false;
  return !previous || *current > *previous;
}

/// Stateful wrapper of freshness_gate that remembers the last seen sequence.
class FreshnessGate {
 public:
  bool update(std::optional<std::uint64_t> current) {
    const bool is_new = freshness_gate(last_, current);
    if (is_new) last_ = current;
    return is_new;
  }

 private:
  std::optional<std::uint64_t> last_;
};

}  // namespace teleop::delay
