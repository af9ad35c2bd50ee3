#include "liqlsmc/rebalance.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace liqlsmc {

PortfolioState PortfolioState::all_cash(double wealth, double s0) {
    PortfolioState st;
    st.alpha = asset_vector(0.0);
    st.q = asset_vector(0.0);
    st.q_f = wealth;
    st.s = asset_vector(s0);
    st.w = wealth;
    return st;
}

PortfolioState PortfolioState::from_holdings(const AssetVector& q, double q_f, const AssetVector& s) {
    if (q.size() != s.size()) throw std::invalid_argument("PortfolioState: q and s sizes differ");
    PortfolioState st;
    st.q = q;
    st.q_f = q_f;
    st.s = s;
    st.w = q.dot(s) + q_f;
    st.alpha = q.cwiseProduct(s) / st.w;
    return st;
}

bool PortfolioState::self_consistent(double rel_tol) const noexcept {
    if (q.size() != s.size() || alpha.size() != q.size()) return false;
    return std::abs(w - (q.dot(s) + q_f)) <= rel_tol * std::max(std::abs(w), 1.0);
}

bool long_only_with_cash(const AssetVector& alpha) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < alpha.size(); ++i) {
        if (!(alpha[i] >= 0.0 && alpha[i] <= 1.0)) return false;
        sum += alpha[i];
    }
    return sum <= 1.0 + 1e-12;
}

namespace {

using detail::snap;

// Target holdings below this size are compared absolutely in the distance.
constexpr double kTinyHolding = 1e-12;

template <class Vec>
struct FixedPointOutcome {
    Vec q;
    Vec s;
    double w = 0.0;
    std::size_t iterations = 0;
    double residual = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    RebalanceError::Kind failure = RebalanceError::Kind::InvalidInput;
};

// Algorithm body shared by the vector and scalar entry points.
template <class Vec>
FixedPointOutcome<Vec> fixed_point(const Vec& q_pre, const Vec& s_pre, double w_pre, const Vec& alpha,
                                   const CostModel& m, double tol, std::size_t max_iter) noexcept {
    const std::size_t d = static_cast<std::size_t>(q_pre.size());
    FixedPointOutcome<Vec> out;
    out.q = q_pre;
    out.s = s_pre;

    for (std::size_t i = 0; i < d; ++i) out.q[i] = snap(alpha[i] * w_pre / s_pre[i], q_pre[i]);

    while (true) {
        ++out.iterations;
        double w = w_pre;
        for (std::size_t i = 0; i < d; ++i) {
            const double dq = out.q[i] - q_pre[i];
            const double mi = m.market_impact(dq);
            out.s[i] = s_pre[i] + mi;
            w += -m.transaction_cost(dq, s_pre[i]) - m.liquidity_cost_per_share(dq) * std::abs(dq) + mi * out.q[i];
        }
        for (std::size_t i = 0; i < d; ++i) {
            if (!(out.s[i] > 0.0)) {
                out.failure = RebalanceError::Kind::NonPositivePrice;
                return out;
            }
        }
        if (!(w > 0.0)) {
            out.failure = RebalanceError::Kind::WealthExhausted;
            return out;
        }
        out.w = w;

        double dist = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double aux = snap(alpha[i] * w / out.s[i], q_pre[i]);
            const double gap = std::abs(aux - out.q[i]);
            dist += std::abs(aux) < kTinyHolding ? gap : gap / std::abs(aux);
            out.q[i] = aux;
        }
        out.residual = dist;
        if (dist <= tol) {
            out.ok = true;
            return out;
        }
        if (out.iterations >= max_iter) {
            out.failure = RebalanceError::Kind::NotConverged;
            return out;
        }
    }
}

[[noreturn]] void raise(RebalanceError::Kind kind, double residual, std::size_t iterations) {
    switch (kind) {
        case RebalanceError::Kind::NotConverged:
            throw RebalanceError(kind, residual,
                                 "rebalance: no convergence after " + std::to_string(iterations) +
                                     " iterations (last distance " + std::to_string(residual) + ")");
        case RebalanceError::Kind::NonPositivePrice:
            throw RebalanceError(kind, residual, "rebalance: market impact drove the price nonpositive");
        case RebalanceError::Kind::WealthExhausted:
            throw RebalanceError(kind, residual, "rebalance: switching costs exhausted the wealth");
        case RebalanceError::Kind::InvalidInput:
            break;
    }
    throw RebalanceError(kind, residual, "rebalance: invalid input");
}

}  // namespace

RebalanceResult solve_rebalance(const PortfolioState& pre, const AssetVector& alpha_target, const CostModel& m,
                                const RebalanceOptions& options, const AdmissibleSet& admissible) {
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    if (alpha_target.size() != pre.q.size() || pre.s.size() != pre.q.size() || pre.q.size() < 1)
        throw RebalanceError(RebalanceError::Kind::InvalidInput, nan, "rebalance: dimension mismatch");
    if (!(options.tol > 0.0) || options.max_iter < 1)
        throw RebalanceError(RebalanceError::Kind::InvalidInput, nan, "rebalance: tol must be > 0 and max_iter >= 1");
    if (admissible && !admissible(alpha_target))
        throw RebalanceError(RebalanceError::Kind::InvalidInput, nan, "rebalance: target allocation not admissible");
    if (!pre.self_consistent())
        throw RebalanceError(RebalanceError::Kind::InvalidInput, nan,
                             "rebalance: pre-transaction state violates w = q.s + q_f");
    if (!(pre.w > 0.0) || !(pre.s.array() > 0.0).all())
        throw RebalanceError(RebalanceError::Kind::InvalidInput, nan, "rebalance: pre-transaction w and s must be positive");

    auto fp = fixed_point(pre.q, pre.s, pre.w, alpha_target, m, options.tol, options.max_iter);
    if (!fp.ok) raise(fp.failure, fp.residual, fp.iterations);

    RebalanceResult r;
    r.state.alpha = alpha_target;
    r.state.q = fp.q;
    r.state.s = fp.s;
    r.state.w = fp.w;
    r.state.q_f = fp.w - fp.q.dot(fp.s);
    r.dq = fp.q - pre.q;
    r.iterations = fp.iterations;
    r.residual = fp.residual;
    return r;
}

RebalanceResult solve_rebalance(const PortfolioState& pre, const AssetVector& alpha_target, const CostModel& m,
                                double tol, std::size_t max_iter) {
    return solve_rebalance(pre, alpha_target, m, RebalanceOptions{tol, max_iter}, long_only_with_cash);
}

AssetVector transaction_volume(const PortfolioState& pre, const AssetVector& alpha_target, const CostModel& m,
                               double tol, std::size_t max_iter) {
    return solve_rebalance(pre, alpha_target, m, tol, max_iter).dq;
}

namespace detail {

ScalarRebalance rebalance_scalar(double q_pre, double s_pre, double w_pre, double alpha, const CostModel& m,
                                 double tol, std::size_t max_iter) noexcept {
    if (m.is_zero() && s_pre > 0.0) return rebalance_costless(q_pre, s_pre, w_pre, alpha);
    using V = std::array<double, 1>;
    const auto fp = fixed_point(V{q_pre}, V{s_pre}, w_pre, V{alpha}, m, tol, max_iter);
    ScalarRebalance r;
    r.iterations = fp.iterations;
    r.residual = fp.residual;
    r.ok = fp.ok;
    r.failure = fp.failure;
    if (fp.ok) {
        r.q = fp.q[0];
        r.s = fp.s[0];
        r.w = fp.w;
        r.q_f = fp.w - fp.q[0] * fp.s[0];
        r.dq = fp.q[0] - q_pre;
    }
    return r;
}

}  // namespace detail

}  // namespace liqlsmc
