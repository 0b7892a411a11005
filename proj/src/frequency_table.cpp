#include <map>
#include <mutex>

#include "ceuler/spectral_field.hpp"

namespace ceuler {

FrequencyTable::FrequencyTable(int resolution) : resolution_(resolution) {
  if (resolution < 0) throw InvalidArgument("resolution must be nonnegative");
  const int side = 2 * resolution + 1;
  lookup_.assign(static_cast<std::size_t>(side) * side * side, -1);
  for (int a = 0; a <= resolution; ++a) {
    for (int b = -resolution; b <= resolution; ++b) {
      for (int c = -resolution; c <= resolution; ++c) {
        Frequency m(a, b, c);
        if (!m.is_canonical()) continue;
        const std::size_t key = (static_cast<std::size_t>(a + resolution) * side + (b + resolution)) * side +
                                (c + resolution);
        lookup_[key] = static_cast<std::ptrdiff_t>(frequencies_.size());
        frequencies_.push_back(m);
      }
    }
  }
}

FrequencyTable::Slot FrequencyTable::locate(const Frequency& m) const {
  if (!contains(m)) return {-1, 1};
  const int parity = m.is_canonical() ? 1 : -1;
  const Frequency c = m.canonical();
  const int side = 2 * resolution_ + 1;
  const std::size_t key = (static_cast<std::size_t>(c[0] + resolution_) * side + (c[1] + resolution_)) * side +
                          (c[2] + resolution_);
  return {lookup_[key], parity};
}

std::shared_ptr<const FrequencyTable> FrequencyTable::get(int resolution) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const FrequencyTable>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[resolution];
  if (!slot) slot = std::make_shared<const FrequencyTable>(resolution);
  return slot;
}

}  // namespace ceuler
