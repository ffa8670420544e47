#pragma once

#include "coop/common.hpp"

namespace coop {

// Streaming quantile estimation without storing observations (P-square).
// Five markers track min, the p/2-, p-, (1+p)/2-quantiles and max; marker
// heights are adjusted by piecewise-parabolic interpolation with a linear
// fallback when the parabola would break monotonicity.
class QuantileEstimator {
  public:
    explicit QuantileEstimator(double target_prob = 0.5);

    void update(double sample);  // throws NonFiniteSample

    double target_prob() const { return p_; }
    long long count() const { return count_; }
    bool has_estimate() const { return count_ >= 5; }
    // Current estimate; requires at least five observations.
    double value() const;

  private:
    double p_;
    std::array<double, 5> height_{};    // q_i
    std::array<double, 5> pos_{};       // n_i, actual marker positions
    std::array<double, 5> desired_{};   // n'_i
    std::array<double, 5> increment_{}; // dn'_i
    long long count_ = 0;

    double parabolic(int i, double d) const;
    double linear(int i, int d) const;
};

}  // namespace coop
