#include "liqlsmc/lsmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "liqlsmc/evaluate.hpp"
#include "liqlsmc/parallel.hpp"
#include "liqlsmc/rng.hpp"

namespace liqlsmc {

ControlGrid ControlGrid::uniform(double step) {
    if (!(step > 0.0) || step > 1.0) throw std::invalid_argument("ControlGrid: step must lie in (0, 1]");
    const double count = std::round(1.0 / step);
    if (std::abs(count * step - 1.0) > 1e-9) throw std::invalid_argument("ControlGrid: 1/step must be an integer");
    const auto n = static_cast<std::size_t>(count);
    ControlGrid g;
    g.step = 1.0 / count;
    g.levels.reserve(n + 1);
    for (std::size_t i = 0; i <= n; ++i) g.levels.push_back(static_cast<double>(i) / count);
    return g;
}

void ControlGrid::validate() const {
    if (levels.size() < 2) throw std::invalid_argument("ControlGrid: need at least two levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(levels[i] >= 0.0 && levels[i] <= 1.0)) throw std::invalid_argument("ControlGrid: levels must lie in [0, 1]");
        if (i > 0 && !(levels[i] > levels[i - 1]))
            throw std::invalid_argument("ControlGrid: levels must be strictly increasing");
    }
}

std::size_t ControlGrid::index_of(double a) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (std::abs(levels[i] - a) <= 1e-12) return i;
    throw std::out_of_range("ControlGrid: " + std::to_string(a) + " is not a grid level");
}

std::string to_string(Algorithm a) { return a == Algorithm::Klp ? "klp" : "per-level"; }

Algorithm algorithm_from_string(const std::string& s) {
    if (s == "per-level") return Algorithm::PerLevel;
    if (s == "klp") return Algorithm::Klp;
    throw std::invalid_argument("unknown algorithm '" + s + "' (expected per-level or klp)");
}

void SolveConfig::validate() const {
    grid.validate();
    if (!(w0 > 0.0) || !std::isfinite(w0)) throw std::invalid_argument("SolveConfig: w0 must be positive");
    if (!(s0 > 0.0) || !std::isfinite(s0)) throw std::invalid_argument("SolveConfig: s0 must be positive");
    if (!(rf > -1.0) || !std::isfinite(rf)) throw std::invalid_argument("SolveConfig: rf must exceed -1");
    if (n_paths < 1 || n_steps < 1) throw std::invalid_argument("SolveConfig: M and N must be >= 1");
    if (basis_degree < 1) throw std::invalid_argument("SolveConfig: basis degree must be >= 1");
    if (!(rebalance.tol > 0.0) || rebalance.max_iter < 1)
        throw std::invalid_argument("SolveConfig: rebalance tol must be > 0 and max_iter >= 1");
    if (threads < 1) throw std::invalid_argument("SolveConfig: threads must be >= 1");
    if (!(max_excluded_fraction >= 0.0 && max_excluded_fraction <= 1.0))
        throw std::invalid_argument("SolveConfig: max_excluded_fraction must lie in [0, 1]");
}

ForwardSample::ForwardSample(std::size_t paths, std::size_t steps) : n_paths(paths), n_steps(steps) {
    const std::size_t n = paths * (steps + 1);
    for (auto* v : {&alpha, &q_pre, &qf_pre, &s_pre, &w_pre, &q_post, &qf_post, &s_post, &w_post}) v->assign(n, 0.0);
    excluded.assign(paths, 0);
}

PortfolioState ForwardSample::pre_state(std::size_t path, std::size_t step) const {
    const auto i = index(path, step);
    return PortfolioState::from_holdings(asset_vector(q_pre[i]), qf_pre[i], asset_vector(s_pre[i]));
}

PortfolioState ForwardSample::post_state(std::size_t path, std::size_t step) const {
    const auto i = index(path, step);
    return PortfolioState::from_holdings(asset_vector(q_post[i]), qf_post[i], asset_vector(s_post[i]));
}

void Policy::validate() const {
    grid.validate();
    basis.validate();
    if (n_steps < 1) throw std::invalid_argument("Policy: n_steps must be >= 1");
    if (coefficients.size() != n_steps) throw std::invalid_argument("Policy: need one coefficient block per step");
    const auto k = static_cast<Eigen::Index>(basis.size());
    const auto j = static_cast<Eigen::Index>(grid.size());
    for (std::size_t n = 0; n < n_steps; ++n) {
        const auto& c = coefficients[n];
        if (algorithm == Algorithm::PerLevel) {
            if (n == 0) continue;
            if (c.rows() != j || c.cols() != k) throw std::invalid_argument("Policy: coefficient block has wrong shape");
        } else if (c.rows() != 1 || c.cols() != k) {
            throw std::invalid_argument("Policy: coefficient block has wrong shape");
        }
        if (!c.allFinite()) throw std::invalid_argument("Policy: non-finite coefficient");
    }
    if (algorithm == Algorithm::Klp && !basis.control_input)
        throw std::invalid_argument("Policy: control-regression policy needs a control input in its basis");
    grid.index_of(initial_action);
    if (initial_cv.size() != grid.size()) throw std::invalid_argument("Policy: need one initial value per level");
}

CoefficientVector Policy::coefficient(std::size_t step, std::size_t level) const {
    if (step >= coefficients.size()) throw std::out_of_range("Policy: step out of range");
    const auto& c = coefficients[step];
    const auto row = algorithm == Algorithm::Klp ? 0 : static_cast<Eigen::Index>(level);
    if (row >= c.rows()) throw std::out_of_range("Policy: level out of range");
    CoefficientVector v;
    v.beta.assign(c.row(row).data(), c.row(row).data() + c.cols());
    return v;
}

bool operator==(const Policy& a, const Policy& b) {
    if (a.algorithm != b.algorithm || !(a.grid == b.grid) || !(a.basis == b.basis) || a.n_steps != b.n_steps ||
        a.initial_action != b.initial_action || a.initial_cv != b.initial_cv ||
        a.terminal_liquidation != b.terminal_liquidation || a.coefficients.size() != b.coefficients.size())
        return false;
    for (std::size_t n = 0; n < a.coefficients.size(); ++n) {
        const auto& x = a.coefficients[n];
        const auto& y = b.coefficients[n];
        if (x.rows() != y.rows() || x.cols() != y.cols() || !(x.array() == y.array()).all()) return false;
    }
    return true;
}

BasisSpec make_basis_spec(const PathSet& paths, const SolveConfig& cfg) {
    BasisSpec spec;
    spec.degree = cfg.basis_degree;
    spec.predictor_scales = paths.predictor_means();
    for (double& s : spec.predictor_scales)
        if (s == 0.0) s = 1.0;
    spec.wealth_transform = cfg.utility;
    spec.w0 = cfg.w0;
    spec.include_cross_terms = cfg.cross_terms;
    spec.control_input = cfg.algorithm == Algorithm::Klp;
    return spec;
}

namespace {

// Single-asset cash/holdings snapshot used on the hot path.
struct Slot {
    double q = 0.0;
    double qf = 0.0;
    double s = 0.0;
    double w = 0.0;
};

struct Scratch {
    std::vector<double> phi;
    std::vector<double> cv;
};

#if defined(__AVX512F__)
constexpr std::size_t kLanes = 8;
#elif defined(__AVX__)
constexpr std::size_t kLanes = 4;
#else
constexpr std::size_t kLanes = 2;
#endif
using Lanes = double __attribute__((vector_size(kLanes * sizeof(double))));
using Mask = long long __attribute__((vector_size(kLanes * sizeof(double))));

inline Lanes lane_offsets() noexcept {
    Lanes v{};
    for (std::size_t i = 0; i < kLanes; ++i) v[i] = static_cast<double>(i);
    return v;
}

inline Lanes splat(double x) noexcept { return Lanes{} + x; }

inline Lanes load_lanes(const double* p) noexcept {
    Lanes v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline Lanes select(Mask m, Lanes a, Lanes b) noexcept {
    Mask ai, bi;
    std::memcpy(&ai, &a, sizeof a);
    std::memcpy(&bi, &b, sizeof b);
    const Mask r = (ai & m) | (bi & ~m);
    Lanes out;
    std::memcpy(&out, &r, sizeof out);
    return out;
}

// Greedy decision rule of a (possibly partially fitted) policy.
class Decider {
public:
    Decider(const Policy& p, const CostModel& costs, RebalanceOptions opt)
        : levels_(p.grid.levels),
          algorithm_(p.algorithm),
          fmap_(p.basis),
          costs_(costs),
          opt_(opt),
          fast_(costs.is_zero()),
          padded_((p.grid.size() + kLanes - 1) / kLanes * kLanes),
          rows_(p.n_steps),
          panels_(p.n_steps) {
        for (std::size_t n = 0; n < p.n_steps && n < p.coefficients.size(); ++n)
            if (p.coefficients[n].size() > 0) load(n, p.coefficients[n]);
    }

    void load(std::size_t step, const Policy::CoefMatrix& c) {
        rows_[step] = c;
        if (algorithm_ != Algorithm::PerLevel) return;
        // K x padded, level-contiguous. Padding levels get a -inf constant so they never win.
        auto& panel = panels_[step];
        panel.assign(static_cast<std::size_t>(c.cols()) * padded_, 0.0);
        for (std::size_t l = levels_.size(); l < padded_; ++l) panel[l] = -std::numeric_limits<double>::infinity();
        for (Eigen::Index l = 0; l < c.rows(); ++l)
            for (Eigen::Index k = 0; k < c.cols(); ++k)
                panel[static_cast<std::size_t>(k) * padded_ + static_cast<std::size_t>(l)] = c(l, k);
    }

    Scratch scratch() const {
        Scratch s;
        s.phi.assign(fmap_.size(), 0.0);
        s.cv.assign(padded_, 0.0);
        return s;
    }

    const FeatureMap& features() const noexcept { return fmap_; }

    /// Chosen level index at an interior step, or -1 when no candidate is usable.
    int choose(std::size_t k, std::span<const double> z, const Slot& pre, Scratch& sc) const noexcept {
        const std::size_t J = levels_.size();
        const std::size_t K = fmap_.size();
        int best = -1;
        double best_cv = -std::numeric_limits<double>::infinity();

        if (algorithm_ == Algorithm::PerLevel && fast_) {
            fmap_(z, pre.w, sc.phi);
            return argmax_panel(panels_[k].data(), sc);
        }

        const double* coef = rows_[k].data();
        double last_w = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t l = 0; l < J; ++l) {
            double w = pre.w;
            if (!fast_) {
                const auto r = detail::rebalance_scalar(pre.q, pre.s, pre.w, levels_[l], costs_, opt_.tol, opt_.max_iter);
                if (!r.ok) continue;
                w = r.w;
            }
            double v = 0.0;
            if (algorithm_ == Algorithm::PerLevel) {
                if (!(w == last_w)) {
                    fmap_(z, w, sc.phi);
                    last_w = w;
                }
                const double* b = coef + l * K;
                for (std::size_t i = 0; i < K; ++i) v += b[i] * sc.phi[i];
            } else {
                fmap_(z, w, levels_[l], sc.phi);
                for (std::size_t i = 0; i < K; ++i) v += coef[i] * sc.phi[i];
            }
            if (v > best_cv) {
                best_cv = v;
                best = static_cast<int>(l);
            }
        }
        return best;
    }

private:
    int argmax_panel(const double* b, Scratch& sc) const noexcept {
        switch (fmap_.size()) {
            case 3: return argmax_blocks<3>(b, sc.phi.data(), 3);
            case 4: return argmax_blocks<4>(b, sc.phi.data(), 4);
            case 6: return argmax_blocks<6>(b, sc.phi.data(), 6);
            case 10: return argmax_blocks<10>(b, sc.phi.data(), 10);
            case 15: return argmax_blocks<15>(b, sc.phi.data(), 15);
            default: return argmax_blocks<0>(b, sc.phi.data(), fmap_.size());
        }
    }

    // Blocked argmax over levels of panel . phi; strict > keeps the lowest level on ties.
    // Kc > 0 fixes the basis size at compile time so the inner loop unrolls.
    template <std::size_t Kc>
    int argmax_blocks(const double* b, const double* phi, std::size_t K) const noexcept {
        const std::size_t P = padded_;
        Lanes best = splat(-std::numeric_limits<double>::infinity());
        Lanes where = splat(0.0);
        Lanes idx = lane_offsets();
        const Lanes step = splat(static_cast<double>(kLanes));
        for (std::size_t blk = 0; blk < P; blk += kLanes) {
            Lanes acc = phi[0] * load_lanes(b + blk);
            if constexpr (Kc > 0) {
                for (std::size_t k = 1; k < Kc; ++k) acc += phi[k] * load_lanes(b + k * P + blk);
            } else {
                for (std::size_t k = 1; k < K; ++k) acc += phi[k] * load_lanes(b + k * P + blk);
            }
            const Mask up = acc > best;
            best = select(up, acc, best);
            where = select(up, idx, where);
            idx += step;
        }
        double top = -std::numeric_limits<double>::infinity();
        int pick = -1;
        for (std::size_t i = 0; i < kLanes; ++i) {
            const int at = static_cast<int>(where[i]);
            if (best[i] > top || (best[i] == top && pick >= 0 && at < pick)) {
                top = best[i];
                pick = at;
            }
        }
        return pick;
    }

    std::vector<double> levels_;
    Algorithm algorithm_;
    FeatureMap fmap_;
    CostModel costs_;
    RebalanceOptions opt_;
    bool fast_;
    std::size_t padded_;
    std::vector<Policy::CoefMatrix> rows_;
    std::vector<std::vector<double>> panels_;
};

// Path-level simulation under the model dynamics.
class Simulator {
public:
    Simulator(const PathSet& paths, const SolveConfig& cfg) : paths_(paths), cfg_(cfg) {
        const std::size_t n = paths.n_paths() * (paths.n_steps() + 1);
        growth_.resize(n);
        for (std::size_t i = 0; i < n; ++i) growth_[i] = std::exp(paths.raw_log_returns()[i]);
        gross_rf_ = 1.0 + cfg.rf;
        costless_ = cfg.costs.is_zero();
    }

    /// Post-state at t_{k-1} to pre-state at t_k^-.
    void evolve(std::size_t m, std::size_t k, Slot& st) const noexcept {
        st.s *= growth_[m * (paths_.n_steps() + 1) + k];
        st.qf *= gross_rf_;
        st.w = st.q * st.s + st.qf;
    }

    bool execute(Slot& st, double alpha) const noexcept {
        const auto r = costless_ ? detail::rebalance_costless(st.q, st.s, st.w, alpha)
                                 : detail::rebalance_scalar(st.q, st.s, st.w, alpha, cfg_.costs, cfg_.rebalance.tol,
                                                cfg_.rebalance.max_iter);
        if (!r.ok) return false;
        st = {r.q, r.q_f, r.s, r.w};
        return true;
    }

    /// Follows `d` from the post-state at step n through forced liquidation at t_N.
    bool rollout(const Decider& d, std::size_t m, std::size_t n, Slot st, double& terminal, Scratch& sc) const noexcept {
        const std::size_t N = paths_.n_steps();
        for (std::size_t k = n + 1; k <= N; ++k) {
            evolve(m, k, st);
            double a = 0.0;
            if (k < N) {
                const int l = d.choose(k, paths_.predictors(m, k), st, sc);
                if (l < 0) return false;
                a = cfg_.grid.levels[static_cast<std::size_t>(l)];
            }
            if (!execute(st, a)) return false;
        }
        terminal = st.w;
        return true;
    }

    const PathSet& paths() const noexcept { return paths_; }

private:
    const PathSet& paths_;
    const SolveConfig& cfg_;
    std::vector<double> growth_;
    double gross_rf_ = 1.0;
    bool costless_ = false;
};

void check_inputs(const PathSet& paths, const SolveConfig& cfg) {
    cfg.validate();
    if (paths.n_assets() != 1) throw std::invalid_argument("lsmc: the solver trades exactly one risky asset");
    if (paths.n_steps() != cfg.n_steps)
        throw std::invalid_argument("lsmc: path set has " + std::to_string(paths.n_steps()) + " steps, config expects " +
                                    std::to_string(cfg.n_steps));
}

void check_sample(const PathSet& paths, const ForwardSample& fwd) {
    if (fwd.n_paths != paths.n_paths() || fwd.n_steps != paths.n_steps())
        throw std::invalid_argument("lsmc: forward sample does not match the path set");
}

std::string where(const char* stage, std::size_t a, std::size_t b, const char* an, const char* bn) {
    std::ostringstream os;
    os << stage << " (" << an << ' ' << a << ", " << bn << ' ' << b << ")";
    return os.str();
}

struct PassOptions {
    const CostModel* decide_costs = nullptr;
    bool exclude_failures = false;
};

ForwardSample forward_pass(const PathSet& paths, const ControlSource& controls, const SolveConfig& cfg,
                           const PassOptions& opt) {
    check_inputs(paths, cfg);
    const std::size_t M = paths.n_paths();
    const std::size_t N = paths.n_steps();
    const std::size_t J = cfg.grid.size();
    const Policy* policy = std::holds_alternative<const Policy*>(controls) ? std::get<const Policy*>(controls) : nullptr;
    if (std::holds_alternative<const Policy*>(controls) && !policy)
        throw std::invalid_argument("forward_simulate: null policy");
    std::optional<Decider> decider;
    if (policy) {
        policy->validate();
        if (policy->n_steps != N) throw std::invalid_argument("forward_simulate: policy horizon differs from the path set");
        if (!(policy->grid == cfg.grid)) throw std::invalid_argument("forward_simulate: policy grid differs from config");
        decider.emplace(*policy, opt.decide_costs ? *opt.decide_costs : cfg.costs, cfg.rebalance);
    }

    Simulator sim(paths, cfg);
    ForwardSample fwd(M, N);
    parallel_for(M, cfg.threads, [&](std::size_t begin, std::size_t end) {
        Scratch sc = decider ? decider->scratch() : Scratch{};
        for (std::size_t m = begin; m < end; ++m) {
            PathRng rng(cfg.seed, StreamTag::Controls, m);
            Slot st{0.0, cfg.w0, cfg.s0, cfg.w0};
            for (std::size_t n = 0; n <= N; ++n) {
                if (n > 0) sim.evolve(m, n, st);
                const auto i = fwd.index(m, n);
                fwd.q_pre[i] = st.q;
                fwd.qf_pre[i] = st.qf;
                fwd.s_pre[i] = st.s;
                fwd.w_pre[i] = st.w;

                double a = 0.0;
                if (n < N) {
                    if (!policy) {
                        const auto l = std::min(J - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(J)));
                        a = cfg.grid.levels[l];
                    } else if (n == 0) {
                        a = policy->initial_action;
                    } else {
                        const int l = decider->choose(n, paths.predictors(m, n), st, sc);
                        if (l < 0) {
                            if (!opt.exclude_failures)
                                throw SolverError(where("forward_simulate: every candidate rebalance failed", m, n,
                                                        "path", "step"));
                            fwd.excluded[m] = 1;
                            break;
                        }
                        a = cfg.grid.levels[static_cast<std::size_t>(l)];
                    }
                }
                if (!sim.execute(st, a)) {
                    if (!opt.exclude_failures)
                        throw SolverError(where("forward_simulate: rebalance failed", m, n, "path", "step"));
                    fwd.excluded[m] = 1;
                    break;
                }
                fwd.alpha[i] = a;
                fwd.q_post[i] = st.q;
                fwd.qf_post[i] = st.qf;
                fwd.s_post[i] = st.s;
                fwd.w_post[i] = st.w;
            }
        }
    });
    fwd.n_excluded = static_cast<std::size_t>(std::count(fwd.excluded.begin(), fwd.excluded.end(), 1));
    return fwd;
}

// Targets and features of one regression: rows of excluded paths are skipped.
struct RegressionBatch {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    std::vector<std::uint8_t> bad;

    RegressionBatch(std::size_t m, std::size_t k)
        : x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)), y(static_cast<Eigen::Index>(m)), bad(m, 0) {}

    std::size_t n_bad() const { return static_cast<std::size_t>(std::count(bad.begin(), bad.end(), 1)); }

    CoefficientVector solve() const {
        const std::size_t excluded = n_bad();
        if (excluded == 0) return fit(x, y);
        const auto rows = x.rows() - static_cast<Eigen::Index>(excluded);
        Eigen::MatrixXd xs(rows, x.cols());
        Eigen::VectorXd ys(rows);
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (bad[static_cast<std::size_t>(i)]) continue;
            xs.row(r) = x.row(i);
            ys[r++] = y[i];
        }
        return fit(xs, ys);
    }
};

void check_exclusions(std::size_t excluded, std::size_t total, double limit, std::size_t n, std::size_t j) {
    if (static_cast<double>(excluded) > limit * static_cast<double>(total))
        throw SolverError(where("backward pass: too many paths failed to rebalance", n, j, "step", "level") + ": " +
                          std::to_string(excluded) + " of " + std::to_string(total));
    if (excluded == total) throw SolverError(where("backward pass: no usable paths", n, j, "step", "level"));
}

std::size_t argmax_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

Policy empty_policy(const PathSet& paths, const SolveConfig& cfg) {
    Policy p;
    p.algorithm = cfg.algorithm;
    p.grid = cfg.grid;
    p.basis = make_basis_spec(paths, cfg);
    p.basis.validate();
    p.n_steps = cfg.n_steps;
    p.coefficients.resize(cfg.n_steps);
    p.initial_cv.assign(cfg.grid.size(), 0.0);
    if (cfg.n_paths < p.basis.size())
        throw std::invalid_argument("lsmc: M = " + std::to_string(cfg.n_paths) +
                                    " is smaller than the basis size K = " + std::to_string(p.basis.size()));
    return p;
}

}  // namespace

ForwardSample forward_simulate(const PathSet& paths, const ControlSource& controls, const SolveConfig& cfg) {
    return forward_pass(paths, controls, cfg, {});
}

Policy backward_induction(const PathSet& paths, const ForwardSample& fwd, const SolveConfig& cfg) {
    check_inputs(paths, cfg);
    check_sample(paths, fwd);
    if (cfg.algorithm != Algorithm::PerLevel) throw std::invalid_argument("backward_induction: config selects klp");
    const std::size_t M = paths.n_paths();
    const std::size_t N = paths.n_steps();
    const std::size_t J = cfg.grid.size();

    Policy pol = empty_policy(paths, cfg);
    const std::size_t K = pol.basis.size();
    Decider decider(pol, cfg.costs, cfg.rebalance);
    const FeatureMap& fmap = decider.features();
    Simulator sim(paths, cfg);

    for (std::size_t n = N; n-- > 0;) {
        Policy::CoefMatrix coef(n > 0 ? J : 0, K);
        for (std::size_t j = 0; j < J; ++j) {
            RegressionBatch batch(M, n > 0 ? K : 0);
            const double a = cfg.grid.levels[j];
            parallel_for(M, cfg.threads, [&](std::size_t begin, std::size_t end) {
                Scratch sc = decider.scratch();
                std::vector<double> phi(K);
                for (std::size_t m = begin; m < end; ++m) {
                    const auto i = fwd.index(m, n);
                    Slot st{fwd.q_pre[i], fwd.qf_pre[i], fwd.s_pre[i], fwd.w_pre[i]};
                    double terminal = 0.0;
                    if (!sim.execute(st, a) || !sim.rollout(decider, m, n, st, terminal, sc)) {
                        batch.bad[m] = 1;
                        batch.y[static_cast<Eigen::Index>(m)] = 0.0;
                        if (n > 0) batch.x.row(static_cast<Eigen::Index>(m)).setZero();
                        continue;
                    }
                    batch.y[static_cast<Eigen::Index>(m)] = fmap.transform_wealth(terminal);
                    if (n > 0) {
                        fmap(paths.predictors(m, n), st.w, phi);
                        for (std::size_t k = 0; k < K; ++k)
                            batch.x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = phi[k];
                    }
                }
            });
            const std::size_t excluded = batch.n_bad();
            check_exclusions(excluded, M, cfg.max_excluded_fraction, n, j);
            if (n > 0) {
                try {
                    const auto beta = batch.solve();
                    for (std::size_t k = 0; k < K; ++k) coef(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = beta.beta[k];
                } catch (const RegressionError& e) {
                    throw SolverError(where("backward_induction: regression failed", n, j, "step", "level") + ": " +
                                      e.what());
                }
            } else {
                double sum = 0.0;
                for (std::size_t m = 0; m < M; ++m)
                    if (!batch.bad[m]) sum += batch.y[static_cast<Eigen::Index>(m)];
                pol.initial_cv[j] = sum / static_cast<double>(M - excluded);
            }
        }
        if (n > 0) {
            pol.coefficients[n] = std::move(coef);
            decider.load(n, pol.coefficients[n]);
        }
    }
    pol.initial_action = cfg.grid.levels[argmax_lowest(pol.initial_cv)];
    return pol;
}

Policy klp_backward(const PathSet& paths, const ForwardSample& fwd, const SolveConfig& cfg) {
    check_inputs(paths, cfg);
    check_sample(paths, fwd);
    if (cfg.algorithm != Algorithm::Klp) throw std::invalid_argument("klp_backward: config selects per-level");
    const std::size_t M = paths.n_paths();
    const std::size_t N = paths.n_steps();
    const std::size_t J = cfg.grid.size();

    Policy pol = empty_policy(paths, cfg);
    const std::size_t K = pol.basis.size();
    Decider decider(pol, cfg.costs, cfg.rebalance);
    const FeatureMap& fmap = decider.features();
    Simulator sim(paths, cfg);

    for (std::size_t n = N; n-- > 0;) {
        RegressionBatch batch(M, K);
        parallel_for(M, cfg.threads, [&](std::size_t begin, std::size_t end) {
            Scratch sc = decider.scratch();
            std::vector<double> phi(K);
            for (std::size_t m = begin; m < end; ++m) {
                const auto i = fwd.index(m, n);
                const Slot st{fwd.q_post[i], fwd.qf_post[i], fwd.s_post[i], fwd.w_post[i]};
                double terminal = 0.0;
                if (!sim.rollout(decider, m, n, st, terminal, sc)) {
                    batch.bad[m] = 1;
                    batch.y[static_cast<Eigen::Index>(m)] = 0.0;
                    batch.x.row(static_cast<Eigen::Index>(m)).setZero();
                    continue;
                }
                batch.y[static_cast<Eigen::Index>(m)] = fmap.transform_wealth(terminal);
                fmap(paths.predictors(m, n), st.w, fwd.alpha[i], phi);
                for (std::size_t k = 0; k < K; ++k)
                    batch.x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = phi[k];
            }
        });
        check_exclusions(batch.n_bad(), M, cfg.max_excluded_fraction, n, 0);
        CoefficientVector beta;
        try {
            beta = batch.solve();
        } catch (const RegressionError& e) {
            throw SolverError(where("klp_backward: regression failed", n, 0, "step", "level") + ": " + e.what());
        }
        Policy::CoefMatrix coef(1, K);
        for (std::size_t k = 0; k < K; ++k) coef(0, static_cast<Eigen::Index>(k)) = beta.beta[k];
        pol.coefficients[n] = std::move(coef);
        decider.load(n, pol.coefficients[n]);
    }

    // Initial decision: the fitted surface averaged over paths at each level's post-trade state.
    const auto& b0 = pol.coefficients[0];
    std::vector<double> phi(K);
    for (std::size_t j = 0; j < J; ++j) {
        double sum = 0.0;
        std::size_t used = 0;
        for (std::size_t m = 0; m < M; ++m) {
            const auto i = fwd.index(m, 0);
            Slot st{fwd.q_pre[i], fwd.qf_pre[i], fwd.s_pre[i], fwd.w_pre[i]};
            if (!sim.execute(st, cfg.grid.levels[j])) continue;
            fmap(paths.predictors(m, 0), st.w, cfg.grid.levels[j], phi);
            double v = 0.0;
            for (std::size_t k = 0; k < K; ++k) v += b0(0, static_cast<Eigen::Index>(k)) * phi[k];
            sum += v;
            ++used;
        }
        pol.initial_cv[j] = used ? sum / static_cast<double>(used) : -std::numeric_limits<double>::infinity();
    }
    pol.initial_action = cfg.grid.levels[argmax_lowest(pol.initial_cv)];
    return pol;
}

namespace {

Policy solve_once(const PathSet& paths, const ForwardSample& fwd, const SolveConfig& cfg) {
    return cfg.algorithm == Algorithm::Klp ? klp_backward(paths, fwd, cfg) : backward_induction(paths, fwd, cfg);
}

}  // namespace

SolveResult solve_with_iteration(const PathSet& paths, const SolveConfig& cfg, const PathSet* evaluation) {
    check_inputs(paths, cfg);
    SolveResult out;
    for (std::size_t it = 0; it <= cfg.iterations; ++it) {
        const ForwardSample fwd = it == 0 ? forward_simulate(paths, UniformRandomControls{}, cfg)
                                          : forward_simulate(paths, &out.history.back(), cfg);
        out.history.push_back(solve_once(paths, fwd, cfg));
        IterationDiagnostics d;
        d.iteration = it;
        d.initial_action = out.history.back().initial_action;
        d.best_initial_cv = *std::max_element(out.history.back().initial_cv.begin(), out.history.back().initial_cv.end());
        if (evaluation) {
            const auto run = run_policy(*evaluation, out.history.back(), cfg);
            d.excluded_paths = run.sample.n_excluded;
            d.oos_cer = cer(cfg.utility, run.terminal_wealth, cfg.w0, cfg.n_steps);
        }
        out.diagnostics.push_back(d);
    }
    out.policy = out.history.back();
    return out;
}

double policy_action(const Policy& p, std::size_t step, const PortfolioState& state, std::span<const double> z,
                     const CostModel& m, const RebalanceOptions& options) {
    p.validate();
    if (step > p.n_steps) throw std::out_of_range("policy_action: step beyond the horizon");
    if (step == p.n_steps) return 0.0;
    if (step == 0) return p.initial_action;
    if (state.n_assets() != 1) throw std::invalid_argument("policy_action: the policy trades exactly one risky asset");
    if (z.size() != p.basis.n_predictors()) throw std::invalid_argument("policy_action: predictor dimension mismatch");
    if (!state.self_consistent()) throw std::invalid_argument("policy_action: state violates w = q.s + q_f");
    Decider d(p, m, options);
    Scratch sc = d.scratch();
    const int l = d.choose(step, z, Slot{state.q[0], state.q_f, state.s[0], state.w}, sc);
    if (l < 0) throw SolverError("policy_action: every candidate rebalance failed at step " + std::to_string(step));
    return p.grid.levels[static_cast<std::size_t>(l)];
}

PolicyRun run_policy(const PathSet& paths, const Policy& p, const SolveConfig& cfg, const CostModel* decision_costs) {
    PolicyRun run;
    run.sample = forward_pass(paths, &p, cfg, PassOptions{decision_costs, true});
    run.terminal_wealth.reserve(paths.n_paths() - run.sample.n_excluded);
    for (std::size_t m = 0; m < paths.n_paths(); ++m)
        if (!run.sample.excluded[m]) run.terminal_wealth.push_back(run.sample.terminal_wealth(m));
    return run;
}

}  // namespace liqlsmc
