#ifndef PBNLC_FFT_HPP
#define PBNLC_FFT_HPP

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace pbnlc {

namespace detail {
// FFTW planning is not thread-safe; execution on distinct buffers is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// In-place complex FFT of a fixed length. Forward is unnormalized, inverse
/// divides by n so that inverse(forward(v)) == v.
///
/// Plans use FFTW_ESTIMATE so the algorithm choice, and therefore the
/// floating-point result, does not depend on timing measurements.
class Fft {
public:
  explicit Fft(std::size_t n) : n_(n) {
    if (n == 0) throw std::invalid_argument("Fft: zero length");
    buf_ = fftw_alloc_complex(n);
    if (!buf_) throw std::bad_alloc();
    std::lock_guard lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;
  ~Fft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }

  std::size_t size() const { return n_; }

  void forward(std::vector<std::complex<double>>& v) const { run(fwd_, v, 1.0); }
  void inverse(std::vector<std::complex<double>>& v) const { run(bwd_, v, 1.0 / static_cast<double>(n_)); }

  /// v <- IFFT(FFT(v) .* h). The 1/n factor is applied here.
  void filter(std::vector<std::complex<double>>& v, const std::vector<std::complex<double>>& h) const {
    check(v);
    if (h.size() != n_) throw std::invalid_argument("Fft::filter: transfer length mismatch");
    auto* b = reinterpret_cast<std::complex<double>*>(buf_);
    std::copy(v.begin(), v.end(), b);
    fftw_execute(fwd_);
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (std::size_t k = 0; k < n_; ++k) b[k] *= h[k] * inv_n;
    fftw_execute(bwd_);
    std::copy(b, b + n_, v.begin());
  }

private:
  void check(const std::vector<std::complex<double>>& v) const {
    if (v.size() != n_) throw std::invalid_argument("Fft: length mismatch");
  }
  void run(fftw_plan plan, std::vector<std::complex<double>>& v, double scale) const {
    check(v);
    // Plans are bound to the aligned buf_; std::vector storage may be less aligned.
    auto* b = reinterpret_cast<std::complex<double>*>(buf_);
    std::copy(v.begin(), v.end(), b);
    fftw_execute(plan);
    for (std::size_t k = 0; k < n_; ++k) v[k] = b[k] * scale;
  }

  std::size_t n_;
  fftw_complex* buf_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

}  // namespace pbnlc

#endif  // PBNLC_FFT_HPP
