#pragma once

#include <complex>
#include <cstddef>
#include <mutex>

#include <fftw3.h>

#include "qqc/errors.hpp"

namespace qqc::fft {

// FFTW's planner is not thread-safe (only fftw_execute is); every plan
// creation/destruction goes through this mutex.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// fftw_malloc-backed complex array (aligned for SIMD plans).
class Buffer {
  public:
    explicit Buffer(std::size_t n) : n_(n) {
        p_ = static_cast<std::complex<double>*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!p_) throw SetupError("fftw: allocation failed");
        for (std::size_t i = 0; i < n; ++i) p_[i] = {0.0, 0.0};
    }
    ~Buffer() {
        if (p_) fftw_free(p_);
    }
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;
    Buffer(Buffer&& o) noexcept : p_(o.p_), n_(o.n_) { o.p_ = nullptr; o.n_ = 0; }

    std::complex<double>* data() { return p_; }
    const std::complex<double>* data() const { return p_; }
    std::size_t size() const { return n_; }
    std::complex<double>& operator[](std::size_t i) { return p_[i]; }
    const std::complex<double>& operator[](std::size_t i) const { return p_[i]; }

  private:
    std::complex<double>* p_ = nullptr;
    std::size_t n_ = 0;
};

// In-place c2c transforms over the fastest axis of a [howmany x n] block,
// or over the whole block when rank 2/3 shapes are given. FFTW_ESTIMATE
// keeps planning deterministic (no runtime measurement).
struct Batched1D {};  // disambiguates from the dense-2D shape

class Plan {
  public:
    // batched 1D along the contiguous axis
    Plan(Batched1D, std::complex<double>* data, int n, int howmany) {
        auto* d = reinterpret_cast<fftw_complex*>(data);
        std::lock_guard<std::mutex> lock(planner_mutex());
        int dims[1] = {n};
        fwd_ = fftw_plan_many_dft(1, dims, howmany, d, nullptr, 1, n, d, nullptr, 1, n,
                                  FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_many_dft(1, dims, howmany, d, nullptr, 1, n, d, nullptr, 1, n,
                                  FFTW_BACKWARD, FFTW_ESTIMATE);
        check();
    }
    // full 2D (n0 slow, n1 fast)
    Plan(std::complex<double>* data, int n0, int n1) {
        auto* d = reinterpret_cast<fftw_complex*>(data);
        std::lock_guard<std::mutex> lock(planner_mutex());
        fwd_ = fftw_plan_dft_2d(n0, n1, d, d, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_2d(n0, n1, d, d, FFTW_BACKWARD, FFTW_ESTIMATE);
        check();
    }
    // full 3D (n0 slowest, n2 fastest)
    Plan(std::complex<double>* data, int n0, int n1, int n2) {
        auto* d = reinterpret_cast<fftw_complex*>(data);
        std::lock_guard<std::mutex> lock(planner_mutex());
        fwd_ = fftw_plan_dft_3d(n0, n1, n2, d, d, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_3d(n0, n1, n2, d, d, FFTW_BACKWARD, FFTW_ESTIMATE);
        check();
    }
    ~Plan() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        if (fwd_) fftw_destroy_plan(fwd_);
        if (bwd_) fftw_destroy_plan(bwd_);
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;

    void forward() { fftw_execute(fwd_); }
    void backward() { fftw_execute(bwd_); }  // unnormalized: caller scales by 1/N

  private:
    void check() const {
        if (!fwd_ || !bwd_) throw SetupError("fftw: plan creation failed");
    }
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
};

}  // namespace qqc::fft
