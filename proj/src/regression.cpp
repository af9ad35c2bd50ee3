#include "liqlsmc/regression.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace liqlsmc {

PolynomialBasis::PolynomialBasis(std::size_t n_inputs, std::size_t degree, bool cross_terms)
    : n_inputs_(n_inputs), degree_(degree) {
    if (n_inputs < 1) throw std::invalid_argument("PolynomialBasis: need at least one input");
    if (degree < 1) throw std::invalid_argument("PolynomialBasis: degree must be >= 1");

    // Monomials of the previous degree as (index in output, last input used).
    struct Mono {
        std::uint32_t index;
        std::uint32_t last;
    };
    std::vector<Mono> previous{{0, 0}};
    std::uint32_t next_index = 1;
    for (std::size_t d = 1; d <= degree; ++d) {
        std::vector<Mono> current;
        for (const Mono& m : previous) {
            if (!cross_terms) {
                // pure powers: extend x_i^{d-1} by x_i only (degree 0 extends to every input)
                const std::uint32_t first = d == 1 ? 0 : m.last;
                const std::uint32_t last = d == 1 ? static_cast<std::uint32_t>(n_inputs) : m.last + 1;
                for (std::uint32_t i = first; i < last; ++i) {
                    recipe_.push_back({m.index, i});
                    current.push_back({next_index++, i});
                }
                continue;
            }
            for (std::uint32_t i = m.last; i < n_inputs; ++i) {
                recipe_.push_back({m.index, i});
                current.push_back({next_index++, i});
            }
        }
        previous = std::move(current);
    }
}

std::size_t basis_size(std::size_t n_inputs, std::size_t degree, bool cross_terms) {
    if (!cross_terms) return 1 + n_inputs * degree;
    // C(n + d, d) computed incrementally; exact for the small sizes used here.
    std::size_t c = 1;
    for (std::size_t i = 1; i <= degree; ++i) c = c * (n_inputs + i) / i;
    return c;
}

void BasisSpec::validate() const {
    if (degree < 1) throw std::invalid_argument("BasisSpec: degree must be >= 1");
    if (predictor_scales.empty()) throw std::invalid_argument("BasisSpec: need at least one predictor scale");
    for (double s : predictor_scales)
        if (s == 0.0 || !std::isfinite(s)) throw std::invalid_argument("BasisSpec: predictor scales must be nonzero and finite");
    if (!(w0 > 0.0)) throw std::invalid_argument("BasisSpec: w0 must be positive");
}

FeatureMap::FeatureMap(BasisSpec spec)
    : spec_(std::move(spec)), basis_(spec_.n_inputs(), spec_.degree, spec_.include_cross_terms) {
    spec_.validate();
    if (spec_.n_inputs() > kMaxInputs) throw std::invalid_argument("FeatureMap: too many regression inputs");
    inv_scales_.reserve(spec_.predictor_scales.size());
    for (double s : spec_.predictor_scales) inv_scales_.push_back(1.0 / s);
}

void FeatureMap::operator()(std::span<const double> z, double w, std::span<double> out) const noexcept {
    std::array<double, kMaxInputs> x;
    scale_predictors(z, x);
    x[inv_scales_.size()] = transform_wealth(w);
    basis_.evaluate({x.data(), spec_.n_inputs()}, out);
}

void FeatureMap::operator()(std::span<const double> z, double w, double alpha, std::span<double> out) const noexcept {
    std::array<double, kMaxInputs> x;
    scale_predictors(z, x);
    x[inv_scales_.size()] = transform_wealth(w);
    x[inv_scales_.size() + 1] = alpha;
    basis_.evaluate({x.data(), spec_.n_inputs()}, out);
}

std::vector<double> build_features(const BasisSpec& spec, std::span<const double> z, double w) {
    if (z.size() != spec.n_predictors()) throw std::invalid_argument("build_features: predictor dimension mismatch");
    if (spec.control_input) throw std::invalid_argument("build_features: spec expects a control input");
    FeatureMap map(spec);
    std::vector<double> out(map.size());
    map(z, w, out);
    return out;
}

CoefficientVector fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, FitInfo* info) {
    const Eigen::Index rows = features.rows();
    const Eigen::Index k = features.cols();
    if (rows != targets.size()) throw RegressionError("fit: feature rows and targets differ in length");
    if (rows < 1 || k < 1) throw RegressionError("fit: empty regression problem");
    if (!features.allFinite() || !targets.allFinite()) throw RegressionError("fit: non-finite regression input");

    Eigen::VectorXd scale = features.colwise().norm().transpose();
    if (scale.maxCoeff() == 0.0) throw RegressionError("fit: feature matrix is identically zero");
    for (Eigen::Index j = 0; j < k; ++j)
        if (scale[j] == 0.0) scale[j] = 1.0;
    const Eigen::MatrixXd x = features * scale.cwiseInverse().asDiagonal();

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
    const Eigen::Index rank = cod.rank();
    if (rank == 0) throw RegressionError("fit: feature matrix has numerical rank zero");
    const auto& t = cod.matrixQTZ();
    const double cond = std::abs(t(0, 0)) / std::abs(t(rank - 1, rank - 1));

    Eigen::VectorXd beta;
    bool ridge = false;
    if (!(cond <= 1e12)) {
        Eigen::MatrixXd gram = x.transpose() * x;
        const double lambda = 1e-8 * gram.trace() / static_cast<double>(k);
        gram.diagonal().array() += lambda;
        beta = gram.ldlt().solve(x.transpose() * targets);
        ridge = true;
    } else {
        beta = cod.solve(targets);
    }
    beta = beta.cwiseQuotient(scale);
    if (!beta.allFinite()) throw RegressionError("fit: solution is not finite");

    if (info) *info = FitInfo{rank, cond, ridge};
    return CoefficientVector{{beta.data(), beta.data() + beta.size()}};
}

double evaluate(const CoefficientVector& coef, std::span<const double> features) {
    if (features.size() != coef.beta.size()) throw std::invalid_argument("evaluate: feature/coefficient size mismatch");
    return std::inner_product(features.begin(), features.end(), coef.beta.begin(), 0.0);
}

double evaluate(const BasisSpec& spec, const CoefficientVector& coef, std::span<const double> z, double w) {
    const auto phi = build_features(spec, z, w);
    return evaluate(coef, phi);
}

}  // namespace liqlsmc
