#include "ceuler/time_field.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ceuler {

TimeSampledField TimeSampledField::sampled(std::vector<double> times, std::vector<Field> fields,
                                           Interpolation rule) {
  if (rule == Interpolation::analytic) throw InvalidArgument("sampled field cannot use analytic interpolation");
  if (times.size() != fields.size() || times.empty())
    throw InvalidArgument("sampled field needs one field per time");
  if (times.front() != 0.0) throw InvalidArgument("sample times must start at 0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw InvalidArgument("sample times must be strictly increasing");
    fields[i].require_compatible(fields[0]);
  }
  TimeSampledField out;
  out.horizon_ = times.back();
  out.rule_ = rule;
  out.times_ = std::move(times);
  out.fields_ = std::move(fields);
  return out;
}

TimeSampledField TimeSampledField::analytic(double horizon, Callback callback) {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  TimeSampledField out;
  out.horizon_ = horizon;
  out.rule_ = Interpolation::analytic;
  out.callback_ = std::move(callback);
  return out;
}

TimeSampledField TimeSampledField::piecewise_constant(double horizon, std::vector<Field> values) {
  if (values.empty()) throw InvalidArgument("piecewise-constant field needs at least one value");
  const std::size_t s = values.size();
  std::vector<double> times(s + 1);
  for (std::size_t r = 0; r <= s; ++r) times[r] = horizon * static_cast<double>(r) / static_cast<double>(s);
  times.back() = horizon;
  values.push_back(values.back());
  return sampled(std::move(times), std::move(values), Interpolation::constant);
}

Field TimeSampledField::at(double t) const {
  if (callback_) return callback_(t);
  if (fields_.empty()) throw InvalidArgument("empty time-sampled field");
  if (fields_.size() == 1 || t <= times_.front()) return fields_.front();
  if (t >= times_.back()) return fields_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
  const std::size_t lo = hi - 1;
  if (rule_ == Interpolation::constant) return fields_[lo];
  const double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
  if (w == 0.0) return fields_[lo];
  return fields_[lo] * (1.0 - w) + fields_[hi] * w;
}

TimeSampledField TimeSampledField::map(std::function<Field(const Field&)> fn) const {
  if (callback_) {
    auto cb = callback_;
    return analytic(horizon_, [cb, fn](double t) { return fn(cb(t)); });
  }
  std::vector<Field> mapped;
  mapped.reserve(fields_.size());
  for (const auto& f : fields_) mapped.push_back(fn(f));
  TimeSampledField out = *this;
  out.fields_ = std::move(mapped);
  return out;
}

TimeSampledField sample_uniform(const TimeSampledField::Callback& path, double horizon, int intervals) {
  if (intervals < 1) throw InvalidArgument("need at least one interval");
  std::vector<double> times(static_cast<std::size_t>(intervals) + 1);
  std::vector<Field> fields;
  fields.reserve(times.size());
  for (int r = 0; r <= intervals; ++r) {
    times[static_cast<std::size_t>(r)] = r == intervals ? horizon : horizon * r / intervals;
    fields.push_back(path(times[static_cast<std::size_t>(r)]));
  }
  return TimeSampledField::sampled(std::move(times), std::move(fields));
}

double l2_time_norm(const TimeSampledField& f, int k, int panels) {
  // 4-point Gauss-Legendre on [-1, 1].
  static constexpr std::array<double, 4> nodes = {-0.8611363115940526, -0.3399810435848563,
                                                  0.3399810435848563, 0.8611363115940526};
  static constexpr std::array<double, 4> weights = {0.3478548451374538, 0.6521451548625461,
                                                    0.6521451548625461, 0.3478548451374538};
  const double h = f.horizon() / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * h;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double n = sobolev_norm(f.at(mid + 0.5 * h * nodes[q]), k);
      sum += 0.5 * h * weights[q] * n * n;
    }
  }
  return std::sqrt(sum);
}

}  // namespace ceuler
