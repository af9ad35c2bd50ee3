#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>

namespace liqlsmc {

/// Power-law liquidity parameters. sigma_day is the daily price volatility in
/// dollars per share; vol_day and theta are in shares; delta is the execution
/// window as a fraction of one trading day.
struct LiquidityParams {
    double sigma_day = 2.5;
    double vol_day = 120e6;
    double theta = 988e6;
    double delta = 5.0 / 390.0;
    double mi_coeff = 0.314;
    double lc_coeff = 0.142;
    double mi_exponent = 0.25;
    double lc_exponent = 0.6;

    void validate() const;
    friend bool operator==(const LiquidityParams&, const LiquidityParams&) = default;
};

struct ZeroCost {
    friend bool operator==(const ZeroCost&, const ZeroCost&) = default;
};

struct ProportionalCost {
    double rate = 0.0;
    friend bool operator==(const ProportionalCost&, const ProportionalCost&) = default;
};

struct PowerLawCost {
    LiquidityParams params;
    double tc_rate = 0.0;
    friend bool operator==(const PowerLawCost&, const PowerLawCost&) = default;
};

/// Switching-cost model: transaction cost TC, per-share liquidity cost LC and
/// permanent market impact MI, all deterministic in the traded volume.
class CostModel {
public:
    using Variant = std::variant<ZeroCost, ProportionalCost, PowerLawCost>;

    CostModel() : CostModel(ZeroCost{}) {}
    CostModel(Variant v);  // NOLINT(google-explicit-constructor)

    static CostModel zero() { return {ZeroCost{}}; }
    static CostModel proportional(double rate) { return {ProportionalCost{rate}}; }
    static CostModel power_law(const LiquidityParams& p, double tc_rate = 0.0) { return {PowerLawCost{p, tc_rate}}; }

    const Variant& variant() const noexcept { return v_; }
    bool is_zero() const noexcept { return std::holds_alternative<ZeroCost>(v_); }
    /// Proportional TC rate (0 when the model has none).
    double tc_rate() const noexcept { return tc_rate_; }
    /// Power-law parameters, when present.
    const LiquidityParams* liquidity() const noexcept;

    /// Same TC, with LC and MI switched off.
    CostModel without_liquidity_effects() const;

    std::string describe() const;

    /// Signed dollars per share.
    double market_impact(double dq) const noexcept {
        if (!has_power_) return 0.0;
        return mi_scale_ * dq;
    }

    /// Nonnegative dollars per share.
    double liquidity_cost_per_share(double dq) const noexcept {
        if (!has_power_ || dq == 0.0) return 0.0;
        const double a = std::abs(dq);
        return std::abs(0.5 * mi_scale_ * a + lc_scale_ * std::pow(a * inv_window_volume_, lc_exponent_));
    }

    /// Dollars.
    double transaction_cost(double dq, double s_pre) const noexcept { return tc_rate_ * std::abs(dq) * s_pre; }

    friend bool operator==(const CostModel& a, const CostModel& b) { return a.v_ == b.v_; }

private:
    Variant v_;
    bool has_power_ = false;
    double tc_rate_ = 0.0;
    double mi_scale_ = 0.0;          // mi_coeff * sigma / vol * (theta / vol)^mi_exponent
    double lc_scale_ = 0.0;          // lc_coeff * sigma
    double inv_window_volume_ = 0.0; // 1 / (delta * vol)
    double lc_exponent_ = 0.0;
};

double market_impact(const CostModel& m, double dq);
double liquidity_cost_per_share(const CostModel& m, double dq);

struct SwitchCosts {
    double tc_total = 0.0;     // dollars
    double lc_total = 0.0;     // dollars
    double mi_per_share = 0.0; // dollars per share, also the price change
    double wealth_delta = 0.0; // -tc_total - lc_total + mi_per_share * q_post
};

/// Components of one switch of dq shares ending at q_post shares.
SwitchCosts switch_cost_components(const CostModel& m, double dq, double q_post, double s_pre);

}  // namespace liqlsmc
