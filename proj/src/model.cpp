#include "liqlsmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "liqlsmc/rng.hpp"

namespace liqlsmc {

namespace {

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

// Lower-triangular factor L with L L^T = Sigma, tolerating singular PSD matrices.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Eigen::VectorXd values = eig.eigenvalues();
    for (Eigen::Index i = 0; i < values.size(); ++i) values[i] = std::sqrt(std::max(values[i], 0.0));
    return eig.eigenvectors() * values.asDiagonal();
}

}  // namespace

PathSet::PathSet(std::size_t n_paths, std::size_t n_steps, std::size_t n_predictors, std::size_t n_assets,
                 double period_length, std::vector<double> predictors, std::vector<double> log_returns)
    : n_paths_(n_paths),
      n_steps_(n_steps),
      n_predictors_(n_predictors),
      n_assets_(n_assets),
      period_length_(period_length),
      predictors_(std::move(predictors)),
      log_returns_(std::move(log_returns)) {
    if (n_paths_ < 1 || n_steps_ < 1 || n_predictors_ < 1 || n_assets_ < 1)
        throw std::invalid_argument("PathSet: counts must be positive");
    if (predictors_.size() != n_paths_ * (n_steps_ + 1) * n_predictors_ ||
        log_returns_.size() != n_paths_ * (n_steps_ + 1) * n_assets_)
        throw std::invalid_argument("PathSet: tensor sizes inconsistent with dimensions");
    if (!all_finite(predictors_) || !all_finite(log_returns_))
        throw std::invalid_argument("PathSet: non-finite entry");
    if (!(period_length_ > 0.0)) throw std::invalid_argument("PathSet: period length must be positive");
}

std::vector<double> PathSet::predictor_means() const {
    std::vector<double> mean(n_predictors_, 0.0);
    const std::size_t rows = n_paths_ * (n_steps_ + 1);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < n_predictors_; ++k) mean[k] += predictors_[r * n_predictors_ + k];
    for (auto& m : mean) m /= static_cast<double>(rows);
    return mean;
}

void Var1Model::validate() const {
    const auto p = intercept.size();
    if (p < 1) throw std::invalid_argument("Var1Model: empty intercept");
    if (coefficient_matrix.rows() != p || coefficient_matrix.cols() != p)
        throw std::invalid_argument("Var1Model: coefficient matrix must be p x p");
    if (noise_covariance.rows() != p || noise_covariance.cols() != p)
        throw std::invalid_argument("Var1Model: noise covariance must be p x p");
    if (asset_index >= static_cast<std::size_t>(p)) throw std::invalid_argument("Var1Model: asset_index out of range");
    if (!(period_length > 0.0)) throw std::invalid_argument("Var1Model: period length must be positive");
    if (!intercept.allFinite() || !coefficient_matrix.allFinite() || !noise_covariance.allFinite())
        throw std::invalid_argument("Var1Model: non-finite parameter");
    const double scale = std::max(1.0, noise_covariance.cwiseAbs().maxCoeff());
    if ((noise_covariance - noise_covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw std::invalid_argument("Var1Model: noise covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(noise_covariance, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
        throw std::invalid_argument("Var1Model: noise covariance is not positive semidefinite");
}

Eigen::VectorXd Var1Model::unconditional_mean() const {
    const auto p = intercept.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(p, p) - coefficient_matrix;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible()) throw std::invalid_argument("Var1Model: I - A is singular, no unconditional mean");
    return lu.solve(intercept);
}

double Var1Model::spectral_radius() const {
    Eigen::EigenSolver<Eigen::MatrixXd> eig(coefficient_matrix, false);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

void IidLognormalModel::validate() const {
    if (!std::isfinite(annual_mean)) throw std::invalid_argument("IidLognormalModel: annual_mean must be finite");
    if (!(annual_vol >= 0.0) || !std::isfinite(annual_vol))
        throw std::invalid_argument("IidLognormalModel: annual_vol must be nonnegative");
    if (!(period_length > 0.0)) throw std::invalid_argument("IidLognormalModel: period length must be positive");
}

Var1Model calibrate_var1(const Eigen::MatrixXd& history) {
    const Eigen::Index t_obs = history.rows();
    const Eigen::Index p = history.cols();
    if (p < 1) throw CalibrationError("calibrate_var1: history has no columns");
    if (t_obs < p + 2)
        throw CalibrationError("calibrate_var1: need at least p + 2 = " + std::to_string(p + 2) + " observations, got " +
                               std::to_string(t_obs));
    if (!history.allFinite()) throw CalibrationError("calibrate_var1: history contains non-finite values");

    const Eigen::Index rows = t_obs - 1;
    Eigen::MatrixXd x(rows, p + 1);
    x.col(0).setOnes();
    x.rightCols(p) = history.topRows(rows);
    const Eigen::MatrixXd y = history.bottomRows(rows);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < p + 1) {
        throw CalibrationError("calibrate_var1: lagged regressor matrix [1, Z_{t-1}] has rank " +
                               std::to_string(qr.rank()) + " < " + std::to_string(p + 1) +
                               " (constant or collinear column in history)");
    }
    const Eigen::MatrixXd beta = qr.solve(y);  // (p+1) x p
    const Eigen::MatrixXd resid = y - x * beta;

    Var1Model model;
    model.intercept = beta.row(0).transpose();
    model.coefficient_matrix = beta.bottomRows(p).transpose();
    const Eigen::RowVectorXd mean = resid.colwise().mean();
    const Eigen::MatrixXd centered = resid.rowwise() - mean;
    model.noise_covariance = (centered.transpose() * centered) / static_cast<double>(rows - 1);
    model.noise_covariance = 0.5 * (model.noise_covariance + model.noise_covariance.transpose()).eval();
    return model;
}

PathSet simulate_var1(const Var1Model& model, std::size_t n_paths, std::size_t n_steps, const Eigen::VectorXd& z0,
                      std::uint64_t seed) {
    model.validate();
    if (n_paths < 1 || n_steps < 1) throw std::invalid_argument("simulate_var1: M and N must be >= 1");
    const std::size_t p = model.dimension();
    if (static_cast<std::size_t>(z0.size()) != p) throw std::invalid_argument("simulate_var1: z0 has wrong dimension");

    const Eigen::MatrixXd chol = psd_factor(model.noise_covariance);
    std::vector<double> predictors(n_paths * (n_steps + 1) * p);
    std::vector<double> returns(n_paths * (n_steps + 1));

    Eigen::VectorXd z(p), next(p), eps(p);
    for (std::size_t m = 0; m < n_paths; ++m) {
        PathRng rng(seed, StreamTag::Exogenous, m);
        z = z0;
        for (std::size_t n = 0; n <= n_steps; ++n) {
            if (n > 0) {
                for (std::size_t k = 0; k < p; ++k) eps[k] = rng.normal();
                next.noalias() = model.intercept + model.coefficient_matrix * z + chol * eps;
                z = next;
            }
            const std::size_t row = m * (n_steps + 1) + n;
            for (std::size_t k = 0; k < p; ++k) predictors[row * p + k] = z[k];
            returns[row] = n == 0 ? 0.0 : z[model.asset_index];
        }
    }
    return {n_paths, n_steps, p, 1, model.period_length, std::move(predictors), std::move(returns)};
}

PathSet simulate_var1(const Var1Model& model, std::size_t n_paths, std::size_t n_steps, std::uint64_t seed) {
    model.validate();
    return simulate_var1(model, n_paths, n_steps, model.unconditional_mean(), seed);
}

PathSet simulate_iid_lognormal(const IidLognormalModel& model, std::size_t n_paths, std::size_t n_steps,
                               std::uint64_t seed) {
    model.validate();
    if (n_paths < 1 || n_steps < 1) throw std::invalid_argument("simulate_iid_lognormal: M and N must be >= 1");
    const double mean = model.annual_mean * model.period_length;
    const double sd = model.annual_vol * std::sqrt(model.period_length);
    std::vector<double> values(n_paths * (n_steps + 1));
    for (std::size_t m = 0; m < n_paths; ++m) {
        PathRng rng(seed, StreamTag::Exogenous, m);
        for (std::size_t n = 0; n <= n_steps; ++n) {
            const double draw = rng.normal();
            values[m * (n_steps + 1) + n] = sd == 0.0 ? mean : mean + sd * draw;
        }
    }
    std::vector<double> predictors = values;
    return {n_paths, n_steps, 1, 1, model.period_length, std::move(predictors), std::move(values)};
}

PathSet simulate(const ExogenousModel& model, std::size_t n_paths, std::size_t n_steps, std::uint64_t seed) {
    return std::visit(
        [&](const auto& m) -> PathSet {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, IidLognormalModel>)
                return simulate_iid_lognormal(m, n_paths, n_steps, seed);
            else
                return simulate_var1(m, n_paths, n_steps, seed);
        },
        model);
}

PriceTable parse_price_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    if (rows.size() < 2) throw std::invalid_argument("price csv: need a header row and at least one data row");

    const auto& header = rows.front();
    // A leading column whose first data cell is not a number is a date column.
    double probe = 0.0;
    const bool has_date = !parse_double(rows[1].front(), probe);
    const std::size_t first = has_date ? 1 : 0;
    if (header.size() <= first) throw std::invalid_argument("price csv: no instrument columns");

    PriceTable table;
    table.names.assign(header.begin() + static_cast<std::ptrdiff_t>(first), header.end());
    const std::size_t cols = table.names.size();
    table.prices.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size())
            throw std::invalid_argument("price csv: row " + std::to_string(r + 1) + " has " +
                                        std::to_string(rows[r].size()) + " cells, header has " +
                                        std::to_string(header.size()));
        for (std::size_t c = 0; c < cols; ++c) {
            double v = 0.0;
            if (!parse_double(rows[r][first + c], v))
                throw std::invalid_argument("price csv: row " + std::to_string(r + 1) + ", column '" +
                                            table.names[c] + "' is not a decimal price");
            table.prices(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return table;
}

PriceTable load_price_csv(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw std::runtime_error("price csv: cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << file.rdbuf();
    return parse_price_csv(buffer.str());
}

Eigen::MatrixXd to_log_returns(const Eigen::MatrixXd& prices) {
    if (prices.rows() < 2) throw std::invalid_argument("to_log_returns: need at least two price rows");
    if ((prices.array() <= 0.0).any()) throw std::invalid_argument("to_log_returns: prices must be positive");
    const Eigen::MatrixXd logs = prices.array().log().matrix();
    return logs.bottomRows(prices.rows() - 1) - logs.topRows(prices.rows() - 1);
}

Var1Model synthetic_standin_var1() {
    Var1Model m;
    m.names = {"stock", "predictor"};
    m.asset_index = 0;
    m.period_length = 1.0 / 12.0;
    m.coefficient_matrix.resize(2, 2);
    m.coefficient_matrix << 0.05, 0.5,
                            0.0, 0.95;
    const double predictor_mean = 0.02;
    const double stock_mean = 0.006;
    m.intercept.resize(2);
    m.intercept << stock_mean * (1.0 - 0.05) - 0.5 * predictor_mean, predictor_mean * (1.0 - 0.95);
    const double sd_stock = 0.044;
    const double sd_pred = 0.002;
    const double rho = -0.5;
    m.noise_covariance.resize(2, 2);
    m.noise_covariance << sd_stock * sd_stock, rho * sd_stock * sd_pred,
                          rho * sd_stock * sd_pred, sd_pred * sd_pred;
    return m;
}

}  // namespace liqlsmc
