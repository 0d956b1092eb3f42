#pragma once

#include <compare>
#include <limits>
#include <ostream>

#include "starld/error.hpp"

namespace starld {

/// A nonnegative cost that may be +infinity.
///
/// Infinity is carried as a flag rather than as a floating-point inf so that it
/// never leaks into arithmetic: reading value() from an infinite cost throws.
class Cost {
public:
    constexpr Cost() = default;
    constexpr explicit Cost(double v) : value_(v) {}

    [[nodiscard]] static constexpr Cost infinite() {
        Cost c;
        c.infinite_ = true;
        return c;
    }
    [[nodiscard]] static constexpr Cost zero() { return Cost(0.0); }

    [[nodiscard]] constexpr bool is_infinite() const { return infinite_; }
    [[nodiscard]] constexpr bool is_finite() const { return !infinite_; }

    [[nodiscard]] double value() const {
        if (infinite_) {
            throw InvalidArgument("value() requested from an infinite cost");
        }
        return value_;
    }
    /// value() for finite costs, +inf otherwise. Only for reporting and ordering.
    [[nodiscard]] constexpr double value_or_inf() const {
        return infinite_ ? std::numeric_limits<double>::infinity() : value_;
    }

    constexpr Cost& operator+=(const Cost& o) {
        if (infinite_ || o.infinite_) {
            infinite_ = true;
            value_ = 0.0;
        } else {
            value_ += o.value_;
        }
        return *this;
    }
    friend constexpr Cost operator+(Cost a, const Cost& b) { return a += b; }

    /// Scaling by a nonnegative factor; 0 * infinity stays infinite.
    friend constexpr Cost operator*(double s, const Cost& c) {
        return c.infinite_ ? c : Cost(s * c.value_);
    }

    friend constexpr bool operator==(const Cost& a, const Cost& b) {
        return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
    }
    friend constexpr std::partial_ordering operator<=>(const Cost& a, const Cost& b) {
        return a.value_or_inf() <=> b.value_or_inf();
    }

    friend std::ostream& operator<<(std::ostream& os, const Cost& c) {
        if (c.infinite_) {
            return os << "inf";
        }
        return os << c.value_;
    }

private:
    double value_ = 0.0;
    bool infinite_ = false;
};

}  // namespace starld
