#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace liqlsmc {

/// Utility of (normalized) terminal wealth.
///
/// CRRA: U(w) = w^(1-g)/(1-g), or log(w) when g == 1. Defined for w > 0.
/// CARA: U(w) = -exp(-g w). Defined everywhere.
class Utility {
public:
    enum class Kind { Crra, Cara };

    Utility() = default;
    Utility(Kind kind, double gamma) : kind_(kind), gamma_(gamma) {
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw std::invalid_argument("utility: risk aversion must be positive and finite");
        const double e = 1.0 - gamma;
        int_exponent_ = kind == Kind::Crra && e == std::floor(e) && std::abs(e) <= 64.0 ? static_cast<int>(e) : 0;
    }

    static Utility crra(double gamma) { return {Kind::Crra, gamma}; }
    static Utility cara(double gamma) { return {Kind::Cara, gamma}; }

    Kind kind() const noexcept { return kind_; }
    double gamma() const noexcept { return gamma_; }

    double operator()(double w) const noexcept {
        if (kind_ == Kind::Cara) return -std::exp(-gamma_ * w);
        if (gamma_ == 1.0) return std::log(w);
        if (int_exponent_ != 0) return int_power(w, int_exponent_) / (1.0 - gamma_);
        return std::pow(w, 1.0 - gamma_) / (1.0 - gamma_);
    }

    /// Inverse map. Throws std::domain_error when u lies outside the range of U.
    double inverse(double u) const {
        if (kind_ == Kind::Cara) {
            if (!(u < 0.0)) throw std::domain_error("utility: CARA inverse needs u < 0");
            return -std::log(-u) / gamma_;
        }
        if (gamma_ == 1.0) return std::exp(u);
        const double base = u * (1.0 - gamma_);
        if (!(base > 0.0)) throw std::domain_error("utility: CRRA inverse argument outside range");
        return std::pow(base, 1.0 / (1.0 - gamma_));
    }

    /// True when U is only defined for w > 0.
    bool needs_positive_wealth() const noexcept { return kind_ == Kind::Crra; }

    std::string tag() const { return kind_ == Kind::Crra ? "crra" : "cara"; }

    friend bool operator==(const Utility&, const Utility&) = default;

private:
    static double int_power(double w, int e) noexcept {
        unsigned n = static_cast<unsigned>(e < 0 ? -e : e);
        double r = 1.0;
        for (double b = w; n; n >>= 1, b *= b)
            if (n & 1u) r *= b;
        return e < 0 ? 1.0 / r : r;
    }

    Kind kind_ = Kind::Crra;
    double gamma_ = 5.0;
    int int_exponent_ = -4;  // 1 - gamma when it is a small integer, else 0
};

}  // namespace liqlsmc
