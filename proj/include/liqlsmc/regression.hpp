#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "liqlsmc/utility.hpp"

namespace liqlsmc {

class RegressionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// All monomials of total degree <= degree over n inputs, graded by degree and
/// lexicographic within a degree: for inputs (a, b) and degree 2 the order is
/// 1, a, b, a^2, ab, b^2. Without cross terms only pure powers are kept.
class PolynomialBasis {
public:
    PolynomialBasis(std::size_t n_inputs, std::size_t degree, bool cross_terms = true);

    std::size_t n_inputs() const noexcept { return n_inputs_; }
    std::size_t degree() const noexcept { return degree_; }
    std::size_t size() const noexcept { return recipe_.size() + 1; }

    /// out.size() must equal size().
    void evaluate(std::span<const double> x, std::span<double> out) const noexcept {
        out[0] = 1.0;
        for (std::size_t k = 0; k < recipe_.size(); ++k) out[k + 1] = out[recipe_[k].parent] * x[recipe_[k].input];
    }

private:
    struct Step {
        std::uint32_t parent;
        std::uint32_t input;
    };
    std::size_t n_inputs_;
    std::size_t degree_;
    std::vector<Step> recipe_;
};

/// Closed-form basis size: C(n_inputs + degree, degree) with cross terms.
std::size_t basis_size(std::size_t n_inputs, std::size_t degree, bool cross_terms = true);

/// Regression inputs are (z / predictor_scales, U(max(w, floor) / w0)) and,
/// for the control-regression baseline, the allocation itself.
struct BasisSpec {
    std::size_t degree = 2;
    std::vector<double> predictor_scales;
    Utility wealth_transform;
    double w0 = 1.0;
    bool include_cross_terms = true;
    bool control_input = false;

    void validate() const;
    std::size_t n_predictors() const noexcept { return predictor_scales.size(); }
    std::size_t n_inputs() const noexcept { return predictor_scales.size() + 1 + (control_input ? 1 : 0); }
    std::size_t size() const { return basis_size(n_inputs(), degree, include_cross_terms); }

    friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

/// Wealth is floored at this fraction of w0 before the utility transform.
inline constexpr double kWealthFloor = 1e-6;

/// Compiled BasisSpec for repeated evaluation without allocation.
class FeatureMap {
public:
    static constexpr std::size_t kMaxInputs = 32;

    explicit FeatureMap(BasisSpec spec);

    const BasisSpec& spec() const noexcept { return spec_; }
    std::size_t size() const noexcept { return basis_.size(); }

    double transform_wealth(double w) const noexcept {
        return spec_.wealth_transform(std::max(w, kWealthFloor * spec_.w0) / spec_.w0);
    }

    /// Writes z / predictor_scales into x[0, p).
    void scale_predictors(std::span<const double> z, std::span<double> x) const noexcept {
        for (std::size_t i = 0; i < inv_scales_.size(); ++i) x[i] = z[i] * inv_scales_[i];
    }

    /// Features at (z, w); `out` has size(). Requires spec().control_input == false.
    void operator()(std::span<const double> z, double w, std::span<double> out) const noexcept;
    /// Features at (z, w, alpha); requires spec().control_input == true.
    void operator()(std::span<const double> z, double w, double alpha, std::span<double> out) const noexcept;

    /// Features from already-scaled predictors and transformed wealth.
    void from_inputs(std::span<const double> x, std::span<double> out) const noexcept { basis_.evaluate(x, out); }

private:
    BasisSpec spec_;
    std::vector<double> inv_scales_;
    PolynomialBasis basis_;
};

std::vector<double> build_features(const BasisSpec& spec, std::span<const double> z, double w);

struct CoefficientVector {
    std::vector<double> beta;
    friend bool operator==(const CoefficientVector&, const CoefficientVector&) = default;
};

struct FitInfo {
    Eigen::Index rank = 0;
    double condition_estimate = 0.0;
    bool ridge = false;
};

/// Least squares beta minimizing |X beta - y|^2 via a column-equilibrated
/// complete orthogonal decomposition (minimum-norm under rank deficiency);
/// refits with a small ridge term when the condition estimate exceeds 1e12.
CoefficientVector fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, FitInfo* info = nullptr);

double evaluate(const CoefficientVector& coef, std::span<const double> features);
double evaluate(const BasisSpec& spec, const CoefficientVector& coef, std::span<const double> z, double w);

}  // namespace liqlsmc
