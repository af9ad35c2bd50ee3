#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "liqlsmc/liquidity.hpp"

namespace liqlsmc {

inline constexpr int kMaxAssets = 8;

/// Per-asset vector with inline storage (no heap allocation).
using AssetVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxAssets, 1>;

inline AssetVector asset_vector(double x) {
    AssetVector v(1);
    v[0] = x;
    return v;
}

/// Endogenous portfolio snapshot: allocation alpha, holdings q (shares), cash
/// q_f (dollars), prices s (dollars per share) and total wealth w.
struct PortfolioState {
    AssetVector alpha;
    AssetVector q;
    double q_f = 0.0;
    AssetVector s;
    double w = 0.0;

    /// All wealth in cash, one asset priced at s0.
    static PortfolioState all_cash(double wealth, double s0);
    /// Builds a consistent state from holdings, cash and prices (w and alpha derived).
    static PortfolioState from_holdings(const AssetVector& q, double q_f, const AssetVector& s);

    std::size_t n_assets() const noexcept { return static_cast<std::size_t>(q.size()); }

    /// |w - (q.s + q_f)| <= rel_tol * max(|w|, 1).
    bool self_consistent(double rel_tol = 1e-8) const noexcept;
};

struct RebalanceResult {
    PortfolioState state;  // post-transaction
    AssetVector dq;
    std::size_t iterations = 0;
    double residual = 0.0;
};

class RebalanceError : public std::runtime_error {
public:
    enum class Kind { NotConverged, NonPositivePrice, WealthExhausted, InvalidInput };

    RebalanceError(Kind kind, double residual, const std::string& what)
        : std::runtime_error(what), kind_(kind), residual_(residual) {}

    Kind kind() const noexcept { return kind_; }
    /// Last fixed-point distance (NaN when not applicable).
    double residual() const noexcept { return residual_; }

private:
    Kind kind_;
    double residual_;
};

/// Admissible allocation set; the default is long-only with a cash remainder.
using AdmissibleSet = std::function<bool(const AssetVector&)>;

/// Each component in [0, 1] and components summing to at most 1.
bool long_only_with_cash(const AssetVector& alpha);

struct RebalanceOptions {
    double tol = 1e-4;
    std::size_t max_iter = 50;
};

/// Fixed-point solve of alpha x W_t = q_t x S_t under the switch dynamics
/// S_t = S_{t-} + MI(dq), W_t = W_{t-} - TC - LC + MI(dq).q_t, starting from
/// q = alpha x W_{t-} / S_{t-}. The same cost model applies to each asset.
RebalanceResult solve_rebalance(const PortfolioState& pre, const AssetVector& alpha_target, const CostModel& m,
                                double tol = 1e-4, std::size_t max_iter = 50);

RebalanceResult solve_rebalance(const PortfolioState& pre, const AssetVector& alpha_target, const CostModel& m,
                                const RebalanceOptions& options, const AdmissibleSet& admissible);

/// Transaction volume map: the dq of solve_rebalance.
AssetVector transaction_volume(const PortfolioState& pre, const AssetVector& alpha_target, const CostModel& m,
                               double tol = 1e-4, std::size_t max_iter = 50);

namespace detail {

/// Scalar outcome of one single-asset rebalance, used on the solver hot path.
struct ScalarRebalance {
    double q = 0.0;
    double q_f = 0.0;
    double s = 0.0;
    double w = 0.0;
    double dq = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0;
    RebalanceError::Kind failure = RebalanceError::Kind::InvalidInput;
    bool ok = false;
};

/// Relative difference below which a target holding is taken to equal the current one.
inline constexpr double kSnap = 1e-12;

inline double snap(double target, double current) noexcept {
    return std::abs(target - current) <= kSnap * std::max(std::abs(current), std::abs(target)) ? current : target;
}

/// Closed form of the iteration when the cost model is zero: the initial
/// guess is already the fixed point, so S and W are unchanged.
inline ScalarRebalance rebalance_costless(double q_pre, double s_pre, double w_pre, double alpha) noexcept {
    ScalarRebalance r;
    r.iterations = 1;
    if (!(w_pre > 0.0)) {
        r.failure = RebalanceError::Kind::WealthExhausted;
        r.residual = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    r.q = snap(alpha * w_pre / s_pre, q_pre);
    r.s = s_pre;
    r.w = w_pre;
    r.q_f = w_pre - r.q * s_pre;
    r.dq = r.q - q_pre;
    r.ok = true;
    return r;
}

/// Single-asset fixed-point iteration without admissibility checks or exceptions.
ScalarRebalance rebalance_scalar(double q_pre, double s_pre, double w_pre, double alpha, const CostModel& m,
                                 double tol, std::size_t max_iter) noexcept;

}  // namespace detail

}  // namespace liqlsmc
