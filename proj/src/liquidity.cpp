#include "liqlsmc/liquidity.hpp"

#include <sstream>
#include <stdexcept>

namespace liqlsmc {

void LiquidityParams::validate() const {
    if (!(sigma_day >= 0.0) || !std::isfinite(sigma_day)) throw std::invalid_argument("liquidity: sigma_day must be >= 0");
    if (!(vol_day > 0.0) || !std::isfinite(vol_day)) throw std::invalid_argument("liquidity: vol_day must be > 0");
    if (!(theta > 0.0) || !std::isfinite(theta)) throw std::invalid_argument("liquidity: theta must be > 0");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("liquidity: delta must be > 0");
    if (!std::isfinite(mi_coeff) || !std::isfinite(lc_coeff) || !std::isfinite(mi_exponent) ||
        !(lc_exponent > 0.0) || !std::isfinite(lc_exponent))
        throw std::invalid_argument("liquidity: power-law constants must be finite (lc_exponent > 0)");
}

namespace {
void check_rate(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("cost model: proportional rate must lie in [0, 1)");
}
}  // namespace

CostModel::CostModel(Variant v) : v_(std::move(v)) {
    if (const auto* p = std::get_if<ProportionalCost>(&v_)) {
        check_rate(p->rate);
        tc_rate_ = p->rate;
    } else if (const auto* pl = std::get_if<PowerLawCost>(&v_)) {
        check_rate(pl->tc_rate);
        const LiquidityParams& lp = pl->params;
        lp.validate();
        has_power_ = true;
        tc_rate_ = pl->tc_rate;
        mi_scale_ = lp.mi_coeff * lp.sigma_day / lp.vol_day * std::pow(lp.theta / lp.vol_day, lp.mi_exponent);
        lc_scale_ = lp.lc_coeff * lp.sigma_day;
        inv_window_volume_ = 1.0 / (lp.delta * lp.vol_day);
        lc_exponent_ = lp.lc_exponent;
    }
}

const LiquidityParams* CostModel::liquidity() const noexcept {
    if (const auto* pl = std::get_if<PowerLawCost>(&v_)) return &pl->params;
    return nullptr;
}

CostModel CostModel::without_liquidity_effects() const {
    if (tc_rate_ > 0.0) return proportional(tc_rate_);
    return zero();
}

std::string CostModel::describe() const {
    std::ostringstream out;
    if (std::holds_alternative<ZeroCost>(v_)) {
        out << "zero";
    } else if (const auto* p = std::get_if<ProportionalCost>(&v_)) {
        out << "proportional(rate=" << p->rate << ")";
    } else {
        const auto& pl = std::get<PowerLawCost>(v_);
        out << "power-law(sigma_day=" << pl.params.sigma_day << ", vol_day=" << pl.params.vol_day
            << ", theta=" << pl.params.theta << ", delta=" << pl.params.delta << ", tc_rate=" << pl.tc_rate << ")";
    }
    return out.str();
}

double market_impact(const CostModel& m, double dq) { return m.market_impact(dq); }

double liquidity_cost_per_share(const CostModel& m, double dq) { return m.liquidity_cost_per_share(dq); }

SwitchCosts switch_cost_components(const CostModel& m, double dq, double q_post, double s_pre) {
    if (!(s_pre > 0.0)) throw std::invalid_argument("switch_cost_components: pre-trade price must be positive");
    SwitchCosts c;
    c.tc_total = m.transaction_cost(dq, s_pre);
    c.lc_total = m.liquidity_cost_per_share(dq) * std::abs(dq);
    c.mi_per_share = m.market_impact(dq);
    c.wealth_delta = -c.tc_total - c.lc_total + c.mi_per_share * q_post;
    return c;
}

}  // namespace liqlsmc
