#pragma once

#include <cmath>
#include <cstdint>

namespace dynlab {

/// Kahan-Babuska compensated accumulator. Summation error stays O(eps)
/// independent of the number of terms, so chunked reductions merged in a
/// fixed order report means that are stable to rounding.
class KahanSum {
public:
    void add(double value) {
        double t = sum_ + value;
        if (std::abs(sum_) >= std::abs(value)) {
            comp_ += (sum_ - t) + value;
        } else {
            comp_ += (value - t) + sum_;
        }
        sum_ = t;
    }

    void merge(const KahanSum& other) {
        add(other.comp_);
        add(other.sum_);
    }

    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Streaming mean / standard-error accumulator over sample values.
class MeanAccumulator {
public:
    void add(double v) {
        sum_.add(v);
        sum_sq_.add(v * v);
        ++count_;
    }

    void merge(const MeanAccumulator& other) {
        sum_.merge(other.sum_);
        sum_sq_.merge(other.sum_sq_);
        count_ += other.count_;
    }

    std::int64_t count() const { return count_; }

    double mean() const { return count_ > 0 ? sum_.value() / count_ : 0.0; }

    /// Standard error of the mean; 0 for fewer than two samples.
    double std_error() const {
        if (count_ < 2) return 0.0;
        double m = mean();
        double var = (sum_sq_.value() - count_ * m * m) / (count_ - 1);
        if (var < 0.0) var = 0.0;  // rounding guard
        return std::sqrt(var / count_);
    }

private:
    KahanSum sum_;
    KahanSum sum_sq_;
    std::int64_t count_ = 0;
};

}  // namespace dynlab
