#include "ecgiot/regression.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ecgiot::regression {

using nlohmann::json;

namespace {

constexpr double kPivotTolerance = 1e-10;
constexpr std::size_t kMinRows = 4;

// Gaussian elimination with partial pivoting on a Jacobi-scaled system so the
// pivot tolerance is relative to the column magnitudes.
std::vector<double> solve_normal_equations(std::vector<std::vector<double>> a, std::vector<double> b)
{
    const std::size_t n = b.size();
    std::vector<double> scale(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(a[i][i] > 0.0))
            throw SingularDesignError("design column " + std::to_string(i) + " is identically zero");
        scale[i] = 1.0 / std::sqrt(a[i][i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            a[i][j] *= scale[i] * scale[j];
        b[i] *= scale[i];
    }

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > std::abs(a[p][k]))
                p = i;
        if (std::abs(a[p][k]) < kPivotTolerance)
            throw SingularDesignError("design matrix is rank deficient");
        std::swap(a[k], a[p]);
        std::swap(b[k], b[p]);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a[i][k] / a[k][k];
            for (std::size_t j = k; j < n; ++j)
                a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j)
            s -= a[i][j] * x[j];
        x[i] = s / a[i][i];
    }
    for (std::size_t i = 0; i < n; ++i)
        x[i] *= scale[i];
    return x;
}

double record_value(const PqrstRecord& r, const std::string& name)
{
    const auto idx = analytics::column_index(name);
    if (!idx)
        throw RegressionError("unknown column '" + name + "'");
    return analytics::Dataset({r}).value(0, *idx);
}

std::vector<double> design_row(std::span<const double> x)
{
    std::vector<double> row{1.0};
    row.insert(row.end(), x.begin(), x.end());
    return row;
}

}  // namespace

double LinearModel::predict(std::span<const double> x) const
{
    if (x.size() != coefficients.size())
        throw RegressionError("expected " + std::to_string(coefficients.size()) + " predictor values, got " +
                              std::to_string(x.size()));
    double y = intercept;
    for (std::size_t i = 0; i < x.size(); ++i)
        y += coefficients[i].second * x[i];
    return y;
}

std::vector<std::string> LinearModel::predictors() const
{
    std::vector<std::string> out;
    for (const auto& [name, _] : coefficients)
        out.push_back(name);
    return out;
}

LinearModel fit_ols(const std::vector<std::vector<double>>& rows, std::span<const double> targets,
                    std::vector<std::string> predictor_names)
{
    if (rows.size() != targets.size())
        throw RegressionError("rows and targets differ in length");
    if (rows.size() < kMinRows)
        throw RegressionError("fit needs at least " + std::to_string(kMinRows) + " rows, got " +
                              std::to_string(rows.size()));
    const std::size_t p = predictor_names.size();
    const std::size_t n = p + 1;
    std::vector<std::vector<double>> xtx(n, std::vector<double>(n, 0.0));
    std::vector<double> xty(n, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != p)
            throw RegressionError("row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                                  " values, expected " + std::to_string(p));
        const auto x = design_row(rows[r]);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                xtx[i][j] += x[i] * x[j];
            xty[i] += x[i] * targets[r];
        }
    }
    const auto beta = solve_normal_equations(std::move(xtx), std::move(xty));
    LinearModel m;
    m.intercept = beta[0];
    for (std::size_t i = 0; i < p; ++i)
        m.coefficients.emplace_back(predictor_names[i], beta[i + 1]);
    m.train_rows = rows.size();
    return m;
}

LinearModel fit_ols(const analytics::Dataset& train, const std::vector<std::string>& predictors,
                    const std::string& target)
{
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (const auto& rec : train.records()) {
        std::vector<double> x;
        for (const auto& name : predictors)
            x.push_back(record_value(rec, name));
        rows.push_back(std::move(x));
        y.push_back(record_value(rec, target));
    }
    auto m = fit_ols(rows, y, predictors);
    m.target = target;
    return m;
}

double predict(const LinearModel& model, std::span<const double> x)
{
    return model.predict(x);
}

double predict(const LinearModel& model, const PqrstRecord& record)
{
    std::vector<double> x;
    for (const auto& [name, _] : model.coefficients)
        x.push_back(record_value(record, name));
    return model.predict(x);
}

double residual_orthogonality(const LinearModel& model, const std::vector<std::vector<double>>& rows,
                              std::span<const double> targets)
{
    std::vector<double> g(model.coefficients.size() + 1, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double resid = targets[r] - model.predict(rows[r]);
        const auto x = design_row(rows[r]);
        for (std::size_t i = 0; i < x.size(); ++i)
            g[i] += x[i] * resid;
    }
    double worst = 0;
    for (double v : g)
        worst = std::max(worst, std::abs(v));
    return worst;
}

EvalReport evaluate(std::span<const double> actuals, std::span<const double> predictions)
{
    if (actuals.size() != predictions.size())
        throw RegressionError("actuals and predictions differ in length");
    if (actuals.empty())
        throw RegressionError("nothing to evaluate");
    EvalReport rep;
    const double n = static_cast<double>(actuals.size());
    double sae = 0, sse = 0, mean = 0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        const double e = actuals[i] - predictions[i];
        sae += std::abs(e);
        sse += e * e;
        mean += actuals[i];
        rep.pairs.emplace_back(actuals[i], predictions[i]);
    }
    mean /= n;
    double sst = 0;
    for (double a : actuals)
        sst += (a - mean) * (a - mean);
    rep.mae = sae / n;
    rep.mse = sse / n;
    const bool constant = std::all_of(actuals.begin(), actuals.end(), [&](double a) { return a == actuals[0]; });
    if (!constant)
        rep.accuracy_pct = 100.0 * (1.0 - sse / sst);
    return rep;
}

void SplitSpec::validate(std::size_t rows) const
{
    std::set<std::size_t> seen;
    for (std::size_t i : test_indices) {
        if (i >= rows)
            throw RegressionError("test index " + std::to_string(i) + " is out of range for " +
                                  std::to_string(rows) + " rows");
        if (!seen.insert(i).second)
            throw RegressionError("test index " + std::to_string(i) + " is repeated");
    }
}

Split split(const analytics::Dataset& data, const SplitSpec& spec)
{
    spec.validate(data.size());
    std::vector<bool> is_test(data.size(), false);
    for (std::size_t i : spec.test_indices)
        is_test[i] = true;
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!is_test[i])
            train.push_back(i);
    return {data.subset(train), data.subset(spec.test_indices)};
}

json to_json(const LinearModel& model)
{
    json coefs = json::array();
    for (const auto& [name, value] : model.coefficients)
        coefs.push_back({{"predictor", name}, {"value", value}});
    return {{"model", "ols"},
            {"target", model.target},
            {"intercept", model.intercept},
            {"coefficients", std::move(coefs)},
            {"train_rows", model.train_rows}};
}

LinearModel model_from_json(const json& j)
{
    try {
        LinearModel m;
        m.intercept = j.at("intercept").get<double>();
        m.target = j.value("target", std::string("R"));
        m.train_rows = j.value("train_rows", std::size_t{0});
        for (const auto& c : j.at("coefficients")) {
            const auto name = c.at("predictor").get<std::string>();
            if (!analytics::column_index(name))
                throw RegressionError("model names unknown predictor '" + name + "'");
            m.coefficients.emplace_back(name, c.at("value").get<double>());
        }
        return m;
    } catch (const json::exception& e) {
        throw RegressionError(std::string("malformed model document: ") + e.what());
    }
}

void save_model(const LinearModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path);
    out << to_json(model).dump(2) << '\n';
    if (!out)
        throw RegressionError("cannot write model file " + path.string());
}

LinearModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw RegressionError("cannot open model file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded())
        throw RegressionError("model file " + path.string() + " is not valid JSON");
    return model_from_json(j);
}

}  // namespace ecgiot::regression
