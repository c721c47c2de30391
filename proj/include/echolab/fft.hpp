#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <new>
#include <span>

namespace echolab {

// FFTW planning is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// In-place 1-D complex transform of fixed size. sign = FFTW_FORWARD computes
// X_m = sum_j x_j exp(-2 pi i j m / n); FFTW_BACKWARD is unnormalized.
class FftPlan {
 public:
  FftPlan(std::size_t n, int sign) : n_(n) {
    buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (!buf_) throw std::bad_alloc();
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, sign, FFTW_ESTIMATE);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }

  std::size_t size() const { return n_; }
  std::span<std::complex<double>> data() { return {reinterpret_cast<std::complex<double>*>(buf_), n_}; }
  void execute() { fftw_execute(plan_); }

 private:
  std::size_t n_;
  fftw_complex* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace echolab
