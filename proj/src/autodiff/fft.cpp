#include "vwam/autodiff/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "vwam/error.hpp"

namespace vwam::ad {
namespace {

class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t h, std::size_t w, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto key = std::make_tuple(h, w, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    // FFTW_ESTIMATE never touches the planning buffer.
    fftw_complex* scratch = fftw_alloc_complex(h * w);
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), scratch, scratch, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
    if (plan == nullptr) throw Error("FFTW failed to create a plan");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& Cache() {
  static PlanCache cache;
  return cache;
}

}  // namespace

void dft2d(std::complex<double>* data, std::size_t h, std::size_t w, FftDirection direction) {
  if (h == 0 || w == 0) throw ShapeError("dft2d on an empty array");
  const int sign = direction == FftDirection::kForward ? FFTW_FORWARD : FFTW_BACKWARD;
  fftw_plan plan = Cache().get(h, w, sign);
  auto* buf = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plan, buf, buf);
}

}  // namespace vwam::ad
