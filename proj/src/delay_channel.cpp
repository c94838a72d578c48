#include "teleop/delay_channel.hpp"

#include <cmath>
#include <limits>

namespace teleop::delay {

namespace {
constexpr double kShapeZero = 1e-12;
}

void GevParams::validate() const {
  if (!(scale_ms > 0.0)) throw std::invalid_argument("GEV scale must be positive");
  if (!std::isfinite(shape) || !std::isfinite(location_ms)) {
    throw std::invalid_argument("GEV parameters must be finite");
  }
}

double GevParams::lower_bound_ms() const {
  if (shape > kShapeZero) return location_ms - scale_ms / shape;
  return -std::numeric_limits<double>::infinity();
}

double uniform_open01(Rng& rng) {
  const std::uint64_t bits = rng() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double gev_quantile(const GevParams& params, double u) {
  params.validate();
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("GEV quantile needs u in (0, 1)");
  const double neg_log_u = -std::log(u);
  if (std::abs(params.shape) < kShapeZero) {
    return params.location_ms - params.scale_ms * std::log(neg_log_u);
  }
  return params.location_ms +
         params.scale_ms * (std::pow(neg_log_u, -params.shape) - 1.0) / params.shape;
}

double sample_gev(Rng& rng, const GevParams& params) {
  return gev_quantile(params, uniform_open01(rng));
}

std::vector<double> enforce_fifo(std::span<const double> delays, double dt) {
  FifoClamp clamp(dt);
  std::vector<double> out;
  out.reserve(delays.size());
  for (double d : delays) out.push_back(clamp(d));
  return out;
}

FifoClamp::FifoClamp(double dt) : dt_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("sample interval must be positive");
}

double FifoClamp::operator()(double delay) {
  if (!(delay > 0.0)) throw std::invalid_argument("delays must be positive");
  double d = delay;
  if (previous_) d = std::max(d, *previous_ - dt_);
  previous_ = d;
  return d;
}

void ChannelConfig::validate() const {
  if (!(uplink_delay_s >= 0.0)) throw std::invalid_argument("uplink delay must be >= 0");
  if (!(sample_interval_s > 0.0)) throw std::invalid_argument("sample interval must be > 0");
  downlink.validate();
}

DownlinkDelaySampler::DownlinkDelaySampler(const ChannelConfig& config)
    : params_(config.downlink), rng_(config.rng_seed), clamp_(config.sample_interval_s) {
  config.validate();
}

double DownlinkDelaySampler::next_delay_s() {
  return clamp_(sample_gev(rng_, params_) * 1e-3);
}

double TdProfile::evaluate(double t) const {
  if (segments.empty()) return tail_delay;
  if (t < segments.front().t0) return segments.front().d0;
  auto it = std::upper_bound(segments.begin(), segments.end(), t,
                             [](double v, const TdSegment& s) { return v < s.t0; });
  const TdSegment& seg = *(it - 1);
  if (t >= seg.t1) return tail_delay;
  const double w = (t - seg.t0) / (seg.t1 - seg.t0);
  return seg.d0 + w * (seg.d1 - seg.d0);
}

TdProfile build_td_profile(std::span<const double> departures, std::span<const double> delays) {
  if (departures.size() != delays.size()) {
    throw std::invalid_argument("departures and delays differ in length");
  }
  if (departures.empty()) throw std::invalid_argument("no packets");
  const std::size_t n = departures.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(delays[i] > 0.0)) throw std::invalid_argument("delays must be positive");
  }
  if (n > 2) {
    const double interval = departures[1] - departures[0];
    for (std::size_t i = 2; i < n; ++i) {
      const double gap = departures[i] - departures[i - 1];
      if (std::abs(gap - interval) > 1e-9 * std::max(1.0, std::abs(interval))) {
        throw std::invalid_argument("departures are not uniformly spaced");
      }
    }
  }
  std::vector<double> arrivals(n);
  for (std::size_t i = 0; i < n; ++i) {
    arrivals[i] = departures[i] + delays[i];
    if (i > 0 && arrivals[i] < arrivals[i - 1]) {
      throw std::invalid_argument("packets are not FIFO ordered; apply enforce_fifo first");
    }
  }

  TdProfile profile;
  if (arrivals[0] > 0.0) profile.segments.push_back({0.0, arrivals[0], delays[0], delays[0]});
  for (std::size_t i = 1; i < n; ++i) {
    if (arrivals[i] == arrivals[i - 1]) continue;
    const double interval = departures[i] - departures[i - 1];
    profile.segments.push_back({arrivals[i - 1], arrivals[i], delays[i - 1], interval + delays[i]});
  }
  profile.tail_delay = delays[n - 1];
  return profile;
}

}  // namespace teleop::delay
