#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace liqlsmc {

/// Raised when a VAR(1) fit cannot be computed from the supplied history.
class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Simulated exogenous factors indexed (path, time).
///
/// predictors holds Z_{t_n} (p components) and log_returns holds r_{t_n}
/// (d components) for n = 0..N; the return entry at n = 0 is never used as
/// a return. Immutable after construction.
class PathSet {
public:
    PathSet(std::size_t n_paths, std::size_t n_steps, std::size_t n_predictors, std::size_t n_assets,
            double period_length, std::vector<double> predictors, std::vector<double> log_returns);

    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t n_predictors() const noexcept { return n_predictors_; }
    std::size_t n_assets() const noexcept { return n_assets_; }
    double period_length() const noexcept { return period_length_; }

    std::span<const double> predictors(std::size_t path, std::size_t step) const noexcept {
        return {predictors_.data() + (path * (n_steps_ + 1) + step) * n_predictors_, n_predictors_};
    }
    std::span<const double> log_returns(std::size_t path, std::size_t step) const noexcept {
        return {log_returns_.data() + (path * (n_steps_ + 1) + step) * n_assets_, n_assets_};
    }
    /// Log-return of the single traded asset.
    double log_return(std::size_t path, std::size_t step) const noexcept {
        return log_returns_[(path * (n_steps_ + 1) + step) * n_assets_];
    }

    const std::vector<double>& raw_predictors() const noexcept { return predictors_; }
    const std::vector<double>& raw_log_returns() const noexcept { return log_returns_; }

    /// Per-component sample mean of the predictors over all paths and steps.
    std::vector<double> predictor_means() const;

    friend bool operator==(const PathSet&, const PathSet&) = default;

private:
    std::size_t n_paths_;
    std::size_t n_steps_;
    std::size_t n_predictors_;
    std::size_t n_assets_;
    double period_length_;
    std::vector<double> predictors_;
    std::vector<double> log_returns_;
};

/// Z_t = c + A Z_{t-1} + eps, eps ~ N(0, Sigma). The traded asset's
/// log-return is component `asset_index` of Z.
struct Var1Model {
    Eigen::VectorXd intercept;
    Eigen::MatrixXd coefficient_matrix;
    Eigen::MatrixXd noise_covariance;
    std::size_t asset_index = 0;
    double period_length = 1.0 / 12.0;
    std::vector<std::string> names;

    std::size_t dimension() const noexcept { return static_cast<std::size_t>(intercept.size()); }

    /// Throws std::invalid_argument on shape mismatch, asymmetric or non-PSD covariance.
    void validate() const;

    /// (I - A)^{-1} c; throws std::invalid_argument when I - A is singular.
    Eigen::VectorXd unconditional_mean() const;

    double spectral_radius() const;
};

/// IID Gaussian per-period log-returns with annual moments scaled by period length.
struct IidLognormalModel {
    double annual_mean = 0.03;
    double annual_vol = 0.15;
    double period_length = 1.0;

    void validate() const;
};

/// Equation-by-equation OLS fit with intercept; residual sample covariance.
/// `history` is T_obs x p; requires T_obs >= p + 2.
Var1Model calibrate_var1(const Eigen::MatrixXd& history);

/// Simulates M paths of N steps from z0. Path m depends only on (seed, m).
PathSet simulate_var1(const Var1Model& model, std::size_t n_paths, std::size_t n_steps,
                      const Eigen::VectorXd& z0, std::uint64_t seed);

/// Same as above, starting from the unconditional mean.
PathSet simulate_var1(const Var1Model& model, std::size_t n_paths, std::size_t n_steps, std::uint64_t seed);

PathSet simulate_iid_lognormal(const IidLognormalModel& model, std::size_t n_paths, std::size_t n_steps,
                               std::uint64_t seed);

/// Either exogenous model; dispatches to the matching simulator.
using ExogenousModel = std::variant<IidLognormalModel, Var1Model>;

PathSet simulate(const ExogenousModel& model, std::size_t n_paths, std::size_t n_steps, std::uint64_t seed);

/// Price table loaded from CSV: instrument names and one row of prices per period.
struct PriceTable {
    std::vector<std::string> names;
    Eigen::MatrixXd prices;
};

/// Header row of names, decimal prices; an optional leading date column is dropped.
PriceTable load_price_csv(const std::string& path);
PriceTable parse_price_csv(const std::string& text);

/// Row-wise log S_t - log S_{t-1}; requires strictly positive prices.
Eigen::MatrixXd to_log_returns(const Eigen::MatrixXd& prices);

/// Two-factor monthly stand-in for a calibrated VAR(1): the traded asset's
/// log-return plus one persistent predictor that forecasts it.
Var1Model synthetic_standin_var1();

}  // namespace liqlsmc
