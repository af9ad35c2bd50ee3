#include "liqlsmc/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace liqlsmc {

using nlohmann::json;

namespace {

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number(const json& j) {
    if (j.is_null()) return -std::numeric_limits<double>::infinity();
    return j.get<double>();
}

json matrix(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw std::invalid_argument("json: ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

json utility_json(const Utility& u) { return {{"kind", u.tag()}, {"gamma", u.gamma()}}; }

Utility utility_from(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const double g = j.at("gamma").get<double>();
    if (kind == "crra") return Utility::crra(g);
    if (kind == "cara") return Utility::cara(g);
    throw std::invalid_argument("json: unknown utility kind '" + kind + "'");
}

}  // namespace

std::string policy_to_json(const Policy& p) {
    json j;
    j["format"] = "liqlsmc-policy";
    j["version"] = 1;
    j["algorithm"] = to_string(p.algorithm);
    j["grid"] = {{"step", p.grid.step}, {"levels", p.grid.levels}};
    j["basis"] = {{"degree", p.basis.degree},
                  {"predictor_scales", p.basis.predictor_scales},
                  {"cross_terms", p.basis.include_cross_terms},
                  {"control_input", p.basis.control_input}};
    j["w0"] = p.basis.w0;
    j["utility"] = utility_json(p.basis.wealth_transform);
    j["n_steps"] = p.n_steps;
    j["initial_action"] = p.initial_action;
    json cv = json::array();
    for (double v : p.initial_cv) cv.push_back(number(v));
    j["initial_cv"] = std::move(cv);
    j["terminal_liquidation"] = p.terminal_liquidation;
    json blocks = json::array();
    for (std::size_t n = 0; n < p.coefficients.size(); ++n) {
        const auto& c = p.coefficients[n];
        j["shapes"].push_back({c.rows(), c.cols()});
        for (Eigen::Index r = 0; r < c.rows(); ++r)
            for (Eigen::Index k = 0; k < c.cols(); ++k) blocks.push_back({{"n", n}, {"j", r}, {"k", k}, {"value", c(r, k)}});
    }
    j["coefficients"] = std::move(blocks);
    return j.dump(1);
}

Policy policy_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format") != "liqlsmc-policy") throw std::invalid_argument("not a policy file");
        Policy p;
        p.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
        p.grid.step = j.at("grid").at("step").get<double>();
        p.grid.levels = j.at("grid").at("levels").get<std::vector<double>>();
        const auto& b = j.at("basis");
        p.basis.degree = b.at("degree").get<std::size_t>();
        p.basis.predictor_scales = b.at("predictor_scales").get<std::vector<double>>();
        p.basis.include_cross_terms = b.at("cross_terms").get<bool>();
        p.basis.control_input = b.at("control_input").get<bool>();
        p.basis.w0 = j.at("w0").get<double>();
        p.basis.wealth_transform = utility_from(j.at("utility"));
        p.n_steps = j.at("n_steps").get<std::size_t>();
        p.initial_action = j.at("initial_action").get<double>();
        for (const auto& v : j.at("initial_cv")) p.initial_cv.push_back(number(v));
        p.terminal_liquidation = j.at("terminal_liquidation").get<bool>();
        const auto& shapes = j.at("shapes");
        if (shapes.size() != p.n_steps) throw std::invalid_argument("coefficient shapes do not match n_steps");
        for (const auto& s : shapes) {
            Policy::CoefMatrix c(s.at(0).get<Eigen::Index>(), s.at(1).get<Eigen::Index>());
            c.setConstant(std::numeric_limits<double>::quiet_NaN());
            p.coefficients.push_back(std::move(c));
        }
        for (const auto& e : j.at("coefficients")) {
            const auto n = e.at("n").get<std::size_t>();
            const auto r = e.at("j").get<Eigen::Index>();
            const auto k = e.at("k").get<Eigen::Index>();
            if (n >= p.coefficients.size() || r >= p.coefficients[n].rows() || k >= p.coefficients[n].cols())
                throw std::invalid_argument("coefficient index out of range");
            p.coefficients[n](r, k) = e.at("value").get<double>();
        }
        p.validate();
        return p;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("policy json: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("policy json: ") + e.what());
    }
}

std::string var1_to_json(const Var1Model& m) {
    json j;
    j["format"] = "liqlsmc-var1";
    j["version"] = 1;
    j["names"] = m.names;
    j["asset_index"] = m.asset_index;
    j["period_length"] = m.period_length;
    j["intercept"] = std::vector<double>(m.intercept.data(), m.intercept.data() + m.intercept.size());
    j["coefficient_matrix"] = matrix(m.coefficient_matrix);
    j["noise_covariance"] = matrix(m.noise_covariance);
    return j.dump(1);
}

Var1Model var1_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.at("format") != "liqlsmc-var1") throw std::invalid_argument("not a VAR(1) model file");
        Var1Model m;
        m.names = j.value("names", std::vector<std::string>{});
        m.asset_index = j.at("asset_index").get<std::size_t>();
        m.period_length = j.at("period_length").get<double>();
        const auto c = j.at("intercept").get<std::vector<double>>();
        m.intercept = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
        m.coefficient_matrix = matrix(j.at("coefficient_matrix"));
        m.noise_covariance = matrix(j.at("noise_covariance"));
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("var1 json: ") + e.what());
    }
}

void save_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string load_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace liqlsmc
