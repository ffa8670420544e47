#include "coop/quantile.hpp"

#include <algorithm>

namespace coop {

QuantileEstimator::QuantileEstimator(double target_prob) : p_(target_prob) {
    if (!(p_ > 0.0) || !(p_ < 1.0)) {
        throw std::invalid_argument("quantile target probability must lie in (0, 1)");
    }
    for (int i = 0; i < 5; ++i) pos_[i] = i + 1;
    desired_ = {1.0, 1.0 + 2.0 * p_, 1.0 + 4.0 * p_, 3.0 + 2.0 * p_, 5.0};
    increment_ = {0.0, p_ / 2.0, p_, (1.0 + p_) / 2.0, 1.0};
}

double QuantileEstimator::parabolic(int i, double d) const {
    const double np = pos_[i + 1], nm = pos_[i - 1], n = pos_[i];
    return height_[i] + d / (np - nm) *
                            ((n - nm + d) * (height_[i + 1] - height_[i]) / (np - n) +
                             (np - n - d) * (height_[i] - height_[i - 1]) / (n - nm));
}

double QuantileEstimator::linear(int i, int d) const {
    return height_[i] + d * (height_[i + d] - height_[i]) / (pos_[i + d] - pos_[i]);
}

void QuantileEstimator::update(double sample) {
    if (!std::isfinite(sample)) throw NonFiniteSample("quantile update with nonfinite sample");
    if (count_ < 5) {
        height_[count_++] = sample;
        if (count_ == 5) std::sort(height_.begin(), height_.end());
        return;
    }
    ++count_;

    int k;
    if (sample < height_[0]) {
        height_[0] = sample;
        k = 0;
    } else if (sample < height_[1]) {
        k = 0;
    } else if (sample < height_[2]) {
        k = 1;
    } else if (sample < height_[3]) {
        k = 2;
    } else if (sample < height_[4]) {
        k = 3;
    } else {
        height_[4] = sample;
        k = 3;
    }

    for (int i = k + 1; i < 5; ++i) pos_[i] += 1;
    for (int i = 0; i < 5; ++i) desired_[i] += increment_[i];

    for (int i = 1; i <= 3; ++i) {
        const double d = desired_[i] - pos_[i];
        if ((d >= 1.0 && pos_[i + 1] - pos_[i] > 1.0) ||
            (d <= -1.0 && pos_[i - 1] - pos_[i] < -1.0)) {
            const int s = d > 0 ? 1 : -1;
            const double candidate = parabolic(i, s);
            if (height_[i - 1] < candidate && candidate < height_[i + 1]) {
                height_[i] = candidate;
            } else {
                height_[i] = linear(i, s);
            }
            pos_[i] += s;
        }
    }
}

double QuantileEstimator::value() const {
    if (count_ < 5) {
        throw InsufficientObservations("quantile estimate requires at least 5 observations");
    }
    return height_[2];
}

}  // namespace coop
