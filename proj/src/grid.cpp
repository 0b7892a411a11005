#include "ceuler/grid.hpp"

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include <fftw3.h>

namespace ceuler {
namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

RealBuffer alloc_real(std::size_t n) { return RealBuffer(fftw_alloc_real(n)); }
ComplexBuffer alloc_complex(std::size_t n) { return ComplexBuffer(fftw_alloc_complex(n)); }

// Plans use FFTW_ESTIMATE: measured plans may pick different algorithms from
// run to run, which would break bitwise reproducibility.
class Transform {
 public:
  explicit Transform(int n) : n_(n) {
    auto real = alloc_real(real_size());
    auto spec = alloc_complex(spectral_size());
    forward_ = fftw_plan_dft_r2c_3d(n, n, n, real.get(), spec.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_3d(n, n, n, spec.get(), real.get(), FFTW_ESTIMATE);
  }
  ~Transform() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  Transform(const Transform&) = delete;
  Transform& operator=(const Transform&) = delete;

  int n() const { return n_; }
  std::size_t real_size() const { return static_cast<std::size_t>(n_) * n_ * n_; }
  std::size_t half() const { return static_cast<std::size_t>(n_ / 2 + 1); }
  std::size_t spectral_size() const { return static_cast<std::size_t>(n_) * n_ * half(); }

  void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_, in, out); }
  // Destroys the input.
  void backward(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(backward_, in, out); }

 private:
  int n_;
  fftw_plan forward_;
  fftw_plan backward_;
};

// Where each canonical coefficient lives in the r2c half spectrum.
struct SpectrumLayout {
  struct Entry {
    std::size_t slot;
    bool conjugate;  // slot holds c_{-m}
  };
  std::vector<std::vector<Entry>> entries;  // per canonical row
};

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

const Transform& transform_for(int n) {
  static std::map<int, std::unique_ptr<Transform>> cache;
  std::lock_guard lock(cache_mutex());
  auto& t = cache[n];
  if (!t) t = std::make_unique<Transform>(n);
  return *t;
}

const SpectrumLayout& layout_for(int resolution, int n) {
  static std::map<std::pair<int, int>, std::unique_ptr<SpectrumLayout>> cache;
  {
    std::lock_guard lock(cache_mutex());
    auto it = cache.find({resolution, n});
    if (it != cache.end()) return *it->second;
  }
  auto layout = std::make_unique<SpectrumLayout>();
  const auto table = FrequencyTable::get(resolution);
  const std::size_t half = static_cast<std::size_t>(n / 2 + 1);
  auto wrap = [n](int k) { return static_cast<std::size_t>(((k % n) + n) % n); };
  auto slot_of = [&](const Frequency& m) {
    return (wrap(m[0]) * static_cast<std::size_t>(n) + wrap(m[1])) * half + static_cast<std::size_t>(m[2]);
  };
  layout->entries.resize(table->size());
  for (std::size_t i = 0; i < table->size(); ++i) {
    const Frequency& m = (*table)[i];
    auto& e = layout->entries[i];
    if (m[2] > 0) {
      e.push_back({slot_of(m), false});
    } else if (m[2] < 0) {
      e.push_back({slot_of(-m), true});
    } else {
      e.push_back({slot_of(m), false});
      if (!m.is_zero()) e.push_back({slot_of(-m), true});
    }
  }
  std::lock_guard lock(cache_mutex());
  auto& slot = cache[{resolution, n}];
  if (!slot) slot = std::move(layout);
  return *slot;
}

void require_sampling(int resolution, int n) {
  if (n < 2 * resolution + 1) {
    throw ResolutionError("grid of size " + std::to_string(n) + " aliases resolution " +
                          std::to_string(resolution) + " (need >= " +
                          std::to_string(2 * resolution + 1) + ")");
  }
}

}  // namespace

int padded_grid_size(int resolution) {
  const int target = std::max(3 * resolution + 1, 2);
  int best = 0;
  for (int q : {1, 3, 5}) {
    int n = 2 * q;
    while (n < target) n *= 2;
    if (best == 0 || n < best) best = n;
  }
  return best;
}

GridValues grid_eval(const Field& f, int n) {
  require_sampling(f.resolution(), n);
  const Transform& t = transform_for(n);
  const SpectrumLayout& layout = layout_for(f.resolution(), n);
  GridValues out(static_cast<Eigen::Index>(t.real_size()), f.components());
  auto spec = alloc_complex(t.spectral_size());
  auto real = alloc_real(t.real_size());
  for (int c = 0; c < f.components(); ++c) {
    std::fill_n(&spec[0][0], 2 * t.spectral_size(), 0.0);
    for (std::size_t i = 0; i < layout.entries.size(); ++i) {
      const double a = f.cos_coefficients()(i, c);
      const double b = f.sin_coefficients()(i, c);
      if (a == 0.0 && b == 0.0) continue;
      // c_m = (a - i b) / 2 for m != 0, c_0 = a.
      const double re = i == 0 ? a : 0.5 * a;
      const double im = i == 0 ? 0.0 : -0.5 * b;
      for (const auto& e : layout.entries[i]) {
        spec[e.slot][0] += re;
        spec[e.slot][1] += e.conjugate ? -im : im;
      }
    }
    t.backward(spec.get(), real.get());
    out.col(c) = Eigen::Map<const Eigen::ArrayXd>(real.get(), static_cast<Eigen::Index>(t.real_size()));
  }
  return out;
}

Field grid_fit(const GridValues& values, Rank rank, int resolution, int n) {
  require_sampling(resolution, n);
  const Transform& t = transform_for(n);
  if (values.rows() != static_cast<Eigen::Index>(t.real_size()) ||
      values.cols() != static_cast<int>(rank)) {
    throw InvalidArgument("grid values do not match the requested grid and rank");
  }
  const SpectrumLayout& layout = layout_for(resolution, n);
  Field out(rank, resolution);
  auto spec = alloc_complex(t.spectral_size());
  auto real = alloc_real(t.real_size());
  const double scale = 1.0 / static_cast<double>(t.real_size());
  for (int c = 0; c < out.components(); ++c) {
    std::copy_n(values.col(c).data(), t.real_size(), real.get());
    t.forward(real.get(), spec.get());
    for (std::size_t i = 0; i < layout.entries.size(); ++i) {
      const auto& e = layout.entries[i].front();
      const double re = spec[e.slot][0] * scale;
      const double im = (e.conjugate ? -spec[e.slot][1] : spec[e.slot][1]) * scale;
      if (i == 0) {
        out.cos_coefficients()(0, c) = re;
      } else {
        out.cos_coefficients()(i, c) = 2.0 * re;
        out.sin_coefficients()(i, c) = -2.0 * im;
      }
    }
  }
  return out;
}

Field multiply(const Field& f, const Field& g) {
  f.require_same_resolution(g);
  if (f.rank() != Rank::scalar) throw InvalidArgument("multiply: first factor must be scalar");
  const GridValues fv = padded_values(f);
  GridValues gv = padded_values(g);
  for (int c = 0; c < g.components(); ++c) gv.col(c) *= fv.col(0);
  return fit_padded(gv, g.rank(), g.resolution());
}

Field advect(const Field& a, const Field& b) {
  a.require_same_resolution(b);
  if (a.rank() != Rank::vector) throw InvalidArgument("advect: transporting field must be a vector");
  const GridValues av = padded_values(a);
  GridValues out = GridValues::Zero(av.rows(), b.components());
  for (int c = 0; c < b.components(); ++c) {
    const Field bc = b.component(c);
    for (int j = 0; j < 3; ++j) {
      const GridValues d = padded_values(derivative(bc, j));
      out.col(c) += av.col(j) * d.col(0);
    }
  }
  return fit_padded(out, b.rank(), b.resolution());
}

Field apply_pointwise(const Field& f, const std::function<double(double)>& fn) {
  if (f.rank() != Rank::scalar) throw InvalidArgument("apply_pointwise expects a scalar field");
  GridValues v = padded_values(f);
  v.col(0) = v.col(0).unaryExpr(fn);
  return fit_padded(v, Rank::scalar, f.resolution());
}

}  // namespace ceuler
